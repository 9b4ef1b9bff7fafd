use std::collections::BTreeMap;

use super::lexer::{tokenize, Tok, Token};
use super::*;

const KEYWORDS: &[&str] = &[
    "if", "else", "while", "abort", "skip", "free", "malloc", "newSymbolic", "NULL", "sizeof",
    "struct", "record", "int", "long", "short", "char", "i8", "i16", "i32", "i64", "void",
];

/// Parse and type-check a program.
pub fn parse_program(src: &str) -> Result<Program, LangError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        records: Vec::new(),
        globals: Vec::new(),
        labels: BTreeMap::new(),
        nodes: Vec::new(),
    };
    p.program()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    records: Vec<RecordDecl>,
    globals: Vec<GlobalDecl>,
    labels: BTreeMap<String, StmtId>,
    nodes: Vec<Option<Node>>,
}

type PResult<T> = Result<T, LangError>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = self.peek();
        Err(LangError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn type_err<T>(&self, at: &Token, msg: impl Into<String>) -> PResult<T> {
        Err(LangError::Type { line: at.line, col: at.col, msg: msg.into() })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Token> {
        if self.is_punct(p) {
            Ok(self.next())
        } else {
            self.err(format!("expected `{p}`, found {}", describe(&self.peek().tok)))
        }
    }

    fn ident(&mut self) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let t = self.next();
                Ok((s, t))
            }
            other => self.err(format!("expected identifier, found {}", describe(other))),
        }
    }

    fn int_lit(&mut self) -> PResult<u64> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.next();
                Ok(v)
            }
            ref other => self.err(format!("expected integer, found {}", describe(other))),
        }
    }

    fn at_type_start(&self) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if matches!(s.as_str(),
            "struct" | "record" | "int" | "long" | "short" | "char" | "i8" | "i16" | "i32" | "i64" | "void"))
    }

    fn program(&mut self) -> PResult<Program> {
        while self.at_type_start() {
            self.declaration()?;
        }
        let mut body = Vec::new();
        while self.peek().tok != Tok::Eof {
            body.push(self.stmt()?);
        }
        let nodes = self.nodes.drain(..).map(|n| n.expect("node filled")).collect();
        Ok(Program {
            records: std::mem::take(&mut self.records),
            globals: std::mem::take(&mut self.globals),
            body,
            labels: std::mem::take(&mut self.labels),
            nodes,
        })
    }

    /// Base type of a declaration. May define a record inline.
    fn base_type(&mut self) -> PResult<Type> {
        let t = self.next();
        let Tok::Ident(kw) = &t.tok else { unreachable!("checked by at_type_start") };
        Ok(match kw.as_str() {
            "int" | "long" | "i64" => Type::Int(8),
            "i32" => Type::Int(4),
            "short" | "i16" => Type::Int(2),
            "char" | "i8" => Type::Int(1),
            "void" => Type::Void,
            "struct" | "record" => {
                let (name, nt) = self.ident()?;
                if self.is_punct("{") {
                    return self.record_body(name, &nt);
                }
                match self.records.iter().position(|r| r.name == name) {
                    Some(i) => Type::Record(RecordId(i as u32)),
                    None => {
                        return Err(LangError::UnknownRecord { line: nt.line, col: nt.col, name })
                    }
                }
            }
            _ => return self.type_err(&t, format!("`{kw}` is not a type")),
        })
    }

    fn record_body(&mut self, name: String, at: &Token) -> PResult<Type> {
        if self.records.iter().any(|r| r.name == name) {
            return Err(LangError::DuplicateDeclaration { line: at.line, col: at.col, name });
        }
        let rid = RecordId(self.records.len() as u32);
        // registered up front so fields may point to the record itself
        self.records.push(RecordDecl { name, fields: Vec::new(), size: 0 });
        self.expect_punct("{")?;
        let mut fields: Vec<FieldDecl> = Vec::new();
        let mut offset = 0;
        while !self.eat_punct("}") {
            if !self.at_type_start() {
                return self.err("expected field declaration");
            }
            let base = self.base_type()?;
            loop {
                let (fname, ft, fty) = self.declarator(&base)?;
                if fields.iter().any(|f| f.name == fname) {
                    return Err(LangError::DuplicateDeclaration {
                        line: ft.line,
                        col: ft.col,
                        name: fname,
                    });
                }
                match &fty {
                    Type::Int(_) | Type::Ptr(_) => {}
                    _ => return self.type_err(&ft, "record fields must be integers or pointers"),
                }
                let size = self.size_of(&fty);
                fields.push(FieldDecl { name: fname, ty: fty, offset });
                offset += size;
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(";")?;
        }
        let rec = &mut self.records[rid.0 as usize];
        rec.fields = fields;
        rec.size = offset;
        Ok(Type::Record(rid))
    }

    fn declarator(&mut self, base: &Type) -> PResult<(String, Token, Type)> {
        let mut ty = base.clone();
        while self.eat_punct("*") {
            ty = Type::ptr_to(ty);
        }
        let (name, t) = self.ident()?;
        if self.eat_punct("[") {
            let n = self.int_lit()?;
            self.expect_punct("]")?;
            if n == 0 || n > u64::from(u32::MAX) {
                return self.type_err(&t, "array length must be positive");
            }
            ty = Type::Array(Box::new(ty), n as u32);
        }
        if ty == Type::Void {
            return self.type_err(&t, "variables cannot have type void");
        }
        if let Type::Record(r) = ty {
            if self.records[r.0 as usize].size == 0 && self.records[r.0 as usize].fields.is_empty() {
                return self.type_err(&t, "record used before its definition is complete");
            }
        }
        Ok((name, t, ty))
    }

    fn declaration(&mut self) -> PResult<()> {
        let base = self.base_type()?;
        if self.eat_punct(";") {
            // bare record definition
            return Ok(());
        }
        loop {
            let (name, t, ty) = self.declarator(&base)?;
            if self.globals.iter().any(|g| g.name == name) {
                return Err(LangError::DuplicateDeclaration { line: t.line, col: t.col, name });
            }
            let mut init = None;
            if self.eat_punct("=") {
                let neg = self.eat_punct("-");
                if self.is_kw("NULL") {
                    self.next();
                    if !ty.is_ptr() {
                        return self.type_err(&t, "NULL initializer on non-pointer");
                    }
                } else {
                    let v = self.int_lit()?;
                    let v = lit_value(v, neg).ok_or(LangError::Type {
                        line: t.line,
                        col: t.col,
                        msg: "initializer out of range".into(),
                    })?;
                    match &ty {
                        Type::Int(_) => init = Some(v),
                        Type::Ptr(_) if v == 0 => {}
                        _ => return self.type_err(&t, "only integers take initializers"),
                    }
                }
            }
            self.globals.push(GlobalDecl { name, ty, init });
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(";")?;
        Ok(())
    }

    fn size_of(&self, ty: &Type) -> u64 {
        match ty {
            Type::Int(w) => u64::from(*w),
            Type::Ptr(_) => 8,
            Type::Record(r) => self.records[r.0 as usize].size,
            Type::Array(t, n) => self.size_of(t) * u64::from(*n),
            Type::Void => 1,
        }
    }

    fn alloc_id(&mut self) -> StmtId {
        self.nodes.push(None);
        StmtId(self.nodes.len() as u32 - 1)
    }

    fn set_node(&mut self, id: StmtId, line: u32, label: Option<String>, kind: NodeKind) {
        self.nodes[id.index()] = Some(Node { id, line, label, kind });
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if self.peek().tok == Tok::Eof {
                return self.err("unexpected end of input, expected `}`");
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let first = self.peek().clone();
        let line = first.line;
        let mut label = None;
        if matches!(self.peek_at(0), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
            && *self.peek_at(1) == Tok::Punct(":")
        {
            let (name, t) = self.ident()?;
            self.next();
            if self.labels.contains_key(&name) {
                return Err(LangError::DuplicateLabel { line: t.line, col: t.col, name });
            }
            label = Some(name);
        }
        let id = self.alloc_id();
        if let Some(l) = &label {
            self.labels.insert(l.clone(), id);
        }

        let kind = if self.is_kw("if") {
            self.next();
            self.expect_punct("(")?;
            let cond = self.condition()?;
            self.expect_punct(")")?;
            let then_body = self.block()?;
            let else_line = self.peek().line;
            let else_id = self.alloc_id();
            let (explicit_else, else_body) = if self.is_kw("else") {
                self.next();
                if self.is_kw("if") {
                    (true, vec![self.stmt()?])
                } else {
                    (true, self.block()?)
                }
            } else {
                (false, Vec::new())
            };
            self.set_node(
                id,
                line,
                label.clone(),
                NodeKind::If { cond: cond.clone(), else_node: else_id },
            );
            self.set_node(else_id, else_line, None, NodeKind::Else { if_node: id, cond: cond.clone() });
            StmtKind::If { cond, then_body, else_id, else_line, explicit_else, else_body }
        } else if self.is_kw("while") {
            self.next();
            self.expect_punct("(")?;
            let cond = self.condition()?;
            self.expect_punct(")")?;
            self.set_node(id, line, label.clone(), NodeKind::While { cond: cond.clone() });
            let body = self.block()?;
            StmtKind::While { cond, body }
        } else if self.is_kw("abort") {
            self.next();
            self.expect_punct(";")?;
            self.set_node(id, line, label.clone(), NodeKind::Abort);
            StmtKind::Abort
        } else if self.is_kw("skip") {
            self.next();
            self.expect_punct(";")?;
            self.set_node(id, line, label.clone(), NodeKind::Skip);
            StmtKind::Skip
        } else if self.is_kw("free") {
            let ft = self.next();
            self.expect_punct("(")?;
            let arg = self.rvalue()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            if !arg.ty.is_ptr() {
                return self.type_err(&ft, "free expects a pointer");
            }
            self.set_node(id, line, label.clone(), NodeKind::Free { arg: arg.clone() });
            StmtKind::Free(arg)
        } else {
            self.assignment(id, line, label.clone())?
        };
        Ok(Stmt { id, line, label, kind })
    }

    fn assignment(&mut self, id: StmtId, line: u32, label: Option<String>) -> PResult<StmtKind> {
        let lt = self.peek().clone();
        let lhs = self.unary()?;
        if !lhs.is_lvalue() {
            return self.type_err(&lt, "left-hand side is not assignable");
        }
        if !lhs.ty.is_scalar() {
            return self.type_err(&lt, "only integers and pointers can be assigned");
        }
        self.expect_punct("=")?;
        let kind = if self.is_kw("newSymbolic") {
            self.next();
            if !lhs.ty.is_int() {
                return self.type_err(&lt, "newSymbolic needs an integer lvalue");
            }
            self.set_node(id, line, label, NodeKind::AssignSymbolic { lhs: lhs.clone() });
            StmtKind::AssignSymbolic(lhs)
        } else if self.is_kw("malloc") {
            let mt = self.next();
            self.expect_punct("(")?;
            let size = if self.is_kw("sizeof") {
                self.next();
                self.expect_punct("(")?;
                let base = self.base_type()?;
                let mut ty = base;
                while self.eat_punct("*") {
                    ty = Type::ptr_to(ty);
                }
                self.expect_punct(")")?;
                self.size_of(&ty)
            } else {
                self.int_lit()?
            };
            self.expect_punct(")")?;
            if size == 0 {
                return self.type_err(&mt, "malloc size must be positive");
            }
            if !lhs.ty.is_ptr() {
                return self.type_err(&lt, "malloc result must be stored in a pointer");
            }
            self.set_node(id, line, label, NodeKind::Malloc { lhs: lhs.clone(), size });
            StmtKind::Malloc(lhs, size)
        } else {
            let rt = self.peek().clone();
            let mut rhs = self.rvalue()?;
            match (&lhs.ty, &rhs.ty) {
                (Type::Int(_), Type::Int(_)) | (Type::Ptr(_), Type::Ptr(_)) => {}
                (Type::Ptr(_), Type::Int(_)) if rhs.kind == ExpKind::Const(0) => {
                    rhs = null_exp();
                }
                _ => return self.type_err(&rt, "incompatible types in assignment"),
            }
            self.set_node(id, line, label, NodeKind::Assign { lhs: lhs.clone(), rhs: rhs.clone() });
            StmtKind::Assign(lhs, rhs)
        };
        self.expect_punct(";")?;
        Ok(kind)
    }

    fn condition(&mut self) -> PResult<Exp> {
        let t = self.peek().clone();
        let e = self.rvalue()?;
        if !e.ty.is_scalar() {
            return self.type_err(&t, "condition must be an integer or pointer");
        }
        Ok(e)
    }

    /// Expression in value position: arrays decay, records are rejected.
    fn rvalue(&mut self) -> PResult<Exp> {
        let t = self.peek().clone();
        let e = self.or_exp()?;
        self.as_value(e, &t)
    }

    fn as_value(&self, e: Exp, at: &Token) -> PResult<Exp> {
        match &e.ty {
            Type::Int(_) | Type::Ptr(_) => Ok(e),
            Type::Array(elem, _) => {
                let elem = (**elem).clone();
                let idx = Exp { kind: ExpKind::Index(Box::new(e), Box::new(int_const(0))), ty: elem.clone() };
                Ok(Exp { kind: ExpKind::AddrOf(Box::new(idx)), ty: Type::ptr_to(elem) })
            }
            _ => self.type_err(at, "record values cannot be used directly"),
        }
    }

    fn or_exp(&mut self) -> PResult<Exp> {
        let mut l = self.and_exp()?;
        while self.is_punct("||") {
            let t = self.next();
            let r = self.and_exp()?;
            l = self.binary(BinOp::Or, l, r, &t)?;
        }
        Ok(l)
    }

    fn and_exp(&mut self) -> PResult<Exp> {
        let mut l = self.eq_exp()?;
        while self.is_punct("&&") {
            let t = self.next();
            let r = self.eq_exp()?;
            l = self.binary(BinOp::And, l, r, &t)?;
        }
        Ok(l)
    }

    fn eq_exp(&mut self) -> PResult<Exp> {
        let mut l = self.rel_exp()?;
        loop {
            let op = if self.is_punct("==") {
                BinOp::Eq
            } else if self.is_punct("!=") {
                BinOp::Ne
            } else {
                return Ok(l);
            };
            let t = self.next();
            let r = self.rel_exp()?;
            l = self.binary(op, l, r, &t)?;
        }
    }

    fn rel_exp(&mut self) -> PResult<Exp> {
        let mut l = self.add_exp()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Punct("<") => BinOp::Lt,
                Tok::Punct("<=") => BinOp::Le,
                Tok::Punct(">") => BinOp::Gt,
                Tok::Punct(">=") => BinOp::Ge,
                _ => return Ok(l),
            };
            let t = self.next();
            let r = self.add_exp()?;
            l = self.binary(op, l, r, &t)?;
        }
    }

    fn add_exp(&mut self) -> PResult<Exp> {
        let mut l = self.mul_exp()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => return Ok(l),
            };
            let t = self.next();
            let r = self.mul_exp()?;
            l = self.binary(op, l, r, &t)?;
        }
    }

    fn mul_exp(&mut self) -> PResult<Exp> {
        let mut l = self.unary()?;
        loop {
            let op = match &self.peek().tok {
                Tok::Punct("*") => BinOp::Mul,
                Tok::Punct("/") => BinOp::Div,
                Tok::Punct("%") => BinOp::Rem,
                _ => return Ok(l),
            };
            let t = self.next();
            let r = self.unary()?;
            l = self.binary(op, l, r, &t)?;
        }
    }

    fn binary(&self, op: BinOp, l: Exp, r: Exp, at: &Token) -> PResult<Exp> {
        let mut l = self.as_value(l, at)?;
        let mut r = self.as_value(r, at)?;
        let ty = match op {
            BinOp::Add | BinOp::Sub => match (&l.ty, &r.ty) {
                (Type::Int(_), Type::Int(_)) => Type::int(),
                (Type::Ptr(t), Type::Int(_)) if **t != Type::Void => l.ty.clone(),
                (Type::Int(_), Type::Ptr(t)) if op == BinOp::Add && **t != Type::Void => {
                    std::mem::swap(&mut l, &mut r);
                    l.ty.clone()
                }
                _ => return self.type_err(at, format!("invalid operands to `{}`", op.symbol())),
            },
            BinOp::Mul | BinOp::Div | BinOp::Rem => {
                if !(l.ty.is_int() && r.ty.is_int()) {
                    return self.type_err(at, format!("`{}` needs integer operands", op.symbol()));
                }
                Type::int()
            }
            _ if op.is_relational() => {
                if l.ty.is_ptr() && r.kind == ExpKind::Const(0) {
                    r = null_exp();
                }
                if r.ty.is_ptr() && l.kind == ExpKind::Const(0) {
                    l = null_exp();
                }
                let ok = (l.ty.is_int() && r.ty.is_int()) || (l.ty.is_ptr() && r.ty.is_ptr());
                if !ok {
                    return self.type_err(at, "comparison between integer and pointer");
                }
                Type::int()
            }
            _ => Type::int(),
        };
        Ok(Exp { kind: ExpKind::Binary(op, Box::new(l), Box::new(r)), ty })
    }

    fn unary(&mut self) -> PResult<Exp> {
        let t = self.peek().clone();
        if self.eat_punct("-") {
            if let Tok::Int(v) = self.peek().tok {
                // fold negative literals so printing round-trips
                if !matches!(self.peek_at(1), Tok::Punct("->") | Tok::Punct("[")) {
                    self.next();
                    return match lit_value(v, true) {
                        Some(v) => Ok(int_const(v)),
                        None => self.type_err(&t, "integer literal out of range"),
                    };
                }
            }
            let e = self.unary()?;
            let e = self.as_value(e, &t)?;
            if !e.ty.is_int() {
                return self.type_err(&t, "negation needs an integer");
            }
            return Ok(Exp { kind: ExpKind::Unary(UnOp::Neg, Box::new(e)), ty: Type::int() });
        }
        if self.eat_punct("!") {
            let e = self.unary()?;
            let e = self.as_value(e, &t)?;
            return Ok(Exp { kind: ExpKind::Unary(UnOp::Not, Box::new(e)), ty: Type::int() });
        }
        if self.eat_punct("*") {
            let e = self.unary()?;
            let e = self.as_value(e, &t)?;
            return match e.ty.clone() {
                Type::Ptr(inner) if *inner != Type::Void => {
                    Ok(Exp { kind: ExpKind::Deref(Box::new(e)), ty: *inner })
                }
                _ => self.type_err(&t, "dereference of a non-pointer"),
            };
        }
        if self.eat_punct("&") {
            let e = self.unary()?;
            if !e.is_lvalue() {
                return self.type_err(&t, "cannot take the address of a non-lvalue");
            }
            return Ok(match e.ty.clone() {
                Type::Array(elem, _) => {
                    let idx = Exp { kind: ExpKind::Index(Box::new(e), Box::new(int_const(0))), ty: (*elem).clone() };
                    Exp { kind: ExpKind::AddrOf(Box::new(idx)), ty: Type::Ptr(elem) }
                }
                ty => Exp { kind: ExpKind::AddrOf(Box::new(e)), ty: Type::ptr_to(ty) },
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Exp> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct("->") {
                let t = self.next();
                let (fname, ft) = self.ident()?;
                let e_val = self.as_value(e, &t)?;
                let rid = match e_val.ty.pointee() {
                    Some(Type::Record(r)) => *r,
                    _ => return self.type_err(&t, "`->` on a non-record pointer"),
                };
                let rec = &self.records[rid.0 as usize];
                let Some(idx) = rec.fields.iter().position(|f| f.name == fname) else {
                    return Err(LangError::UnknownField { line: ft.line, col: ft.col, field: fname });
                };
                let field = &rec.fields[idx];
                let fr = FieldRef { record: rid, index: idx as u32, offset: field.offset };
                e = Exp { kind: ExpKind::Arrow(Box::new(e_val), fr), ty: field.ty.clone() };
            } else if self.is_punct("[") {
                let t = self.next();
                let idx_t = self.peek().clone();
                let idx = self.rvalue()?;
                self.expect_punct("]")?;
                if !idx.ty.is_int() {
                    return self.type_err(&idx_t, "index must be an integer");
                }
                let elem = match &e.ty {
                    Type::Array(t, _) => (**t).clone(),
                    Type::Ptr(t) if **t != Type::Void => (**t).clone(),
                    _ => return self.type_err(&t, "indexing a non-array"),
                };
                e = Exp { kind: ExpKind::Index(Box::new(e), Box::new(idx)), ty: elem };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Exp> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Int(v) => {
                self.next();
                match lit_value(*v, false) {
                    Some(v) => Ok(int_const(v)),
                    None => self.type_err(&t, "integer literal out of range"),
                }
            }
            Tok::Punct("(") => {
                self.next();
                let e = self.or_exp()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "NULL" => {
                self.next();
                Ok(null_exp())
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let name = s.clone();
                self.next();
                match self.globals.iter().position(|g| g.name == name) {
                    Some(i) => Ok(Exp {
                        kind: ExpKind::Var(GlobalId(i as u32)),
                        ty: self.globals[i].ty.clone(),
                    }),
                    None => Err(LangError::UndeclaredVariable { line: t.line, col: t.col, name }),
                }
            }
            other => self.err(format!("expected expression, found {}", describe(other))),
        }
    }
}

fn lit_value(v: u64, neg: bool) -> Option<i64> {
    if neg {
        if v == 1u64 << 63 {
            Some(i64::MIN)
        } else {
            i64::try_from(v).ok().map(|x| -x)
        }
    } else {
        i64::try_from(v).ok()
    }
}

fn int_const(v: i64) -> Exp {
    Exp { kind: ExpKind::Const(v), ty: Type::int() }
}

fn null_exp() -> Exp {
    Exp { kind: ExpKind::Null, ty: Type::ptr_to(Type::Void) }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}
