//! The analyzed while-language: typed AST and parser.
//!
//! Programs consist of record declarations, global declarations and a
//! statement body. Every statement gets a [`StmtId`] in source order; an
//! `if` additionally owns an `else` pseudo-statement, the false branch's
//! node in the control-flow graph.

mod lexer;
mod parser;
mod print;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::parse_program;

/// Identifier of a statement node. Ids are dense and ordered by source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StmtId(pub u32);

impl StmtId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    /// Signed integer of the given byte width (1, 2, 4 or 8).
    Int(u8),
    Ptr(Box<Type>),
    Record(RecordId),
    Array(Box<Type>, u32),
    /// Only valid behind a pointer (`void *`, the type of `NULL`).
    Void,
}

impl Type {
    pub fn int() -> Type {
        Type::Int(8)
    }

    pub fn ptr_to(t: Type) -> Type {
        Type::Ptr(Box::new(t))
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, Type::Ptr(_))
    }

    pub fn is_int(&self) -> bool {
        matches!(self, Type::Int(_))
    }

    pub fn is_scalar(&self) -> bool {
        self.is_int() || self.is_ptr()
    }

    pub fn pointee(&self) -> Option<&Type> {
        match self {
            Type::Ptr(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: Type,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordDecl {
    pub name: String,
    pub fields: Vec<FieldDecl>,
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub ty: Type,
    /// Declared initial value; integers only (pointers may only be
    /// initialized to `NULL`, which is the default anyway).
    pub init: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldRef {
    pub record: RecordId,
    pub index: u32,
    pub offset: u64,
}

/// A typed source expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Exp {
    pub kind: ExpKind,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExpKind {
    Const(i64),
    Null,
    Var(GlobalId),
    Deref(Box<Exp>),
    /// `pexp->f`
    Arrow(Box<Exp>, FieldRef),
    /// `a[e]` on arrays or `p[e]` on pointers.
    Index(Box<Exp>, Box<Exp>),
    AddrOf(Box<Exp>),
    Unary(UnOp, Box<Exp>),
    Binary(BinOp, Box<Exp>, Box<Exp>),
}

impl Exp {
    pub fn is_lvalue(&self) -> bool {
        matches!(
            self.kind,
            ExpKind::Var(_) | ExpKind::Deref(_) | ExpKind::Arrow(..) | ExpKind::Index(..)
        )
    }

    /// Size in bytes of one element reached by indexing or offsetting this
    /// pointer/array expression.
    pub fn element_type(&self) -> Option<&Type> {
        match &self.ty {
            Type::Ptr(t) | Type::Array(t, _) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub id: StmtId,
    pub line: u32,
    pub label: Option<String>,
    pub kind: StmtKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    AssignSymbolic(Exp),
    Assign(Exp, Exp),
    Malloc(Exp, u64),
    Free(Exp),
    If {
        cond: Exp,
        then_body: Vec<Stmt>,
        else_id: StmtId,
        else_line: u32,
        /// `true` when the source spelled out an `else` block.
        explicit_else: bool,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Exp,
        body: Vec<Stmt>,
    },
    Abort,
    Skip,
}

/// Flat view of one CFG citizen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: StmtId,
    pub line: u32,
    pub label: Option<String>,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    AssignSymbolic { lhs: Exp },
    Assign { lhs: Exp, rhs: Exp },
    Malloc { lhs: Exp, size: u64 },
    Free { arg: Exp },
    If { cond: Exp, else_node: StmtId },
    Else { if_node: StmtId, cond: Exp },
    While { cond: Exp },
    Abort,
    Skip,
}

impl NodeKind {
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            NodeKind::If { .. } | NodeKind::Else { .. } | NodeKind::While { .. } | NodeKind::Abort
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub records: Vec<RecordDecl>,
    pub globals: Vec<GlobalDecl>,
    pub body: Vec<Stmt>,
    pub labels: BTreeMap<String, StmtId>,
    /// Indexed by `StmtId`.
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LangError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: undeclared variable `{name}`")]
    UndeclaredVariable { line: u32, col: u32, name: String },
    #[error("{line}:{col}: record has no field `{field}`")]
    UnknownField { line: u32, col: u32, field: String },
    #[error("{line}:{col}: unknown record `{name}`")]
    UnknownRecord { line: u32, col: u32, name: String },
    #[error("{line}:{col}: duplicate label `{name}`")]
    DuplicateLabel { line: u32, col: u32, name: String },
    #[error("{line}:{col}: duplicate declaration of `{name}`")]
    DuplicateDeclaration { line: u32, col: u32, name: String },
    #[error("{line}:{col}: type error: {msg}")]
    Type { line: u32, col: u32, msg: String },
    #[error("unknown program location `{0}`")]
    UnknownLocation(String),
}

impl Program {
    pub fn node(&self, id: StmtId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn global(&self, id: GlobalId) -> &GlobalDecl {
        &self.globals[id.0 as usize]
    }

    pub fn record(&self, id: RecordId) -> &RecordDecl {
        &self.records[id.0 as usize]
    }

    pub fn global_by_name(&self, name: &str) -> Option<GlobalId> {
        self.globals
            .iter()
            .position(|g| g.name == name)
            .map(|i| GlobalId(i as u32))
    }

    pub fn size_of(&self, ty: &Type) -> u64 {
        match ty {
            Type::Int(w) => u64::from(*w),
            Type::Ptr(_) => 8,
            Type::Record(r) => self.record(*r).size,
            Type::Array(t, n) => self.size_of(t) * u64::from(*n),
            Type::Void => 1,
        }
    }

    /// First statement of the body in execution order, if any.
    pub fn first_stmt(&self) -> Option<StmtId> {
        self.body.first().map(|s| s.id)
    }

    /// Resolve a location given as a label, `file:line`, or a bare line number.
    pub fn resolve_location(&self, loc: &str) -> Result<StmtId, LangError> {
        if let Some(id) = self.labels.get(loc) {
            return Ok(*id);
        }
        let line_part = loc.rsplit(':').next().unwrap_or(loc);
        if let Ok(line) = line_part.trim().parse::<u32>() {
            // prefer real statements over the else pseudo-node on the same line
            let hit = self
                .nodes
                .iter()
                .filter(|n| n.line == line)
                .min_by_key(|n| (matches!(n.kind, NodeKind::Else { .. }), n.id));
            if let Some(n) = hit {
                return Ok(n.id);
            }
        }
        Err(LangError::UnknownLocation(loc.to_string()))
    }

    /// Human-readable location of a statement: its label if it has one,
    /// otherwise `line:N`.
    pub fn location(&self, id: StmtId) -> String {
        let n = self.node(id);
        match &n.label {
            Some(l) => l.clone(),
            None => format!("line:{}", n.line),
        }
    }

    /// Byte offsets of pointer-typed slots inside a value of type `ty`.
    pub fn pointer_slots(&self, ty: &Type) -> Vec<u64> {
        let mut out = Vec::new();
        self.collect_pointer_slots(ty, 0, &mut out);
        out
    }

    fn collect_pointer_slots(&self, ty: &Type, base: u64, out: &mut Vec<u64>) {
        match ty {
            Type::Ptr(_) => out.push(base),
            Type::Record(r) => {
                for f in &self.record(*r).fields {
                    self.collect_pointer_slots(&f.ty, base + f.offset, out);
                }
            }
            Type::Array(t, n) => {
                let es = self.size_of(t);
                for i in 0..u64::from(*n) {
                    self.collect_pointer_slots(t, base + i * es, out);
                }
            }
            Type::Int(_) | Type::Void => {}
        }
    }

    /// Render a source expression back to concrete syntax.
    pub fn exp_to_string(&self, e: &Exp) -> String {
        print::exp_to_string(self, e)
    }

    /// One-line rendering of a node (no nested bodies).
    pub fn node_to_string(&self, id: StmtId) -> String {
        print::node_to_string(self, id)
    }

    pub fn type_to_string(&self, ty: &Type) -> String {
        print::type_prefix(self, ty)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::program_to_string(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALIAS_ASSERT: &str = include_str!("../../programs/alias_assert.wl");

    #[test]
    fn alias_assert_has_seven_nodes() {
        let p = parse_program(ALIAS_ASSERT).unwrap();
        assert_eq!(p.nodes.len(), 7);
        assert_eq!(p.body.len(), 5);
        let fail = p.labels["fail"];
        assert_eq!(p.node(fail).kind, NodeKind::Abort);
        assert_eq!(p.node(fail).line, 7);
        assert_eq!(p.resolve_location("alias_assert.wl:2").unwrap(), StmtId(0));
        assert_eq!(p.record(RecordId(0)).size, 16);
        assert_eq!(p.record(RecordId(0)).fields[1].offset, 8);
    }

    #[test]
    fn empty_body() {
        let p = parse_program("int x;").unwrap();
        assert!(p.body.is_empty());
        assert_eq!(p.globals.len(), 1);
        assert_eq!(p.first_stmt(), None);
    }

    #[test]
    fn missing_separator() {
        let e = parse_program("int *p, *q;\np = q q = p").unwrap_err();
        assert!(matches!(e, LangError::Syntax { line: 2, col: 7, .. }), "{e}");
    }

    #[test]
    fn semantic_errors() {
        assert!(matches!(parse_program("x = 1;"), Err(LangError::UndeclaredVariable { .. })));
        assert!(matches!(
            parse_program("struct A { int f; } *p; p->g = 1;"),
            Err(LangError::UnknownField { .. })
        ));
        assert!(matches!(
            parse_program("int x; l: x = 1; l: x = 2;"),
            Err(LangError::DuplicateLabel { .. })
        ));
        assert!(matches!(parse_program("int x, x;"), Err(LangError::DuplicateDeclaration { .. })));
        assert!(matches!(parse_program("struct B *p;"), Err(LangError::UnknownRecord { .. })));
        assert!(matches!(parse_program("int x, *p; x = p;"), Err(LangError::Type { .. })));
        assert!(matches!(parse_program("int *p; p = newSymbolic;"), Err(LangError::Type { .. })));
        assert!(matches!(parse_program("int *p; p = malloc(0);"), Err(LangError::Type { .. })));
        assert!(matches!(parse_program("int x; free(x);"), Err(LangError::Type { .. })));
    }

    #[test]
    fn pointer_rules() {
        let p = parse_program("int a[4], *p, x; p = a; p = &a; p = 0; x = *(p + 2); x = p[1]; x = p == NULL;")
            .unwrap();
        assert_eq!(p.nodes.len(), 6);
        match &p.node(StmtId(2)).kind {
            NodeKind::Assign { rhs, .. } => assert_eq!(rhs.kind, ExpKind::Null),
            k => panic!("{k:?}"),
        }
        assert_eq!(p.node_to_string(StmtId(0)), "p = &a[0]");
    }

    #[test]
    fn widths_and_sizeof() {
        let p = parse_program(
            "struct S { i8 a; i16 b; i32 c; int d; struct S *n; } *s; s = malloc(sizeof(struct S));",
        )
        .unwrap();
        assert_eq!(p.record(RecordId(0)).size, 1 + 2 + 4 + 8 + 8);
        match &p.node(StmtId(0)).kind {
            NodeKind::Malloc { size, .. } => assert_eq!(*size, 23),
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn else_id_follows_then_body() {
        let p = parse_program("int x; if (x) { x = 1; x = 2; } else { x = 3; }").unwrap();
        match &p.node(StmtId(0)).kind {
            NodeKind::If { else_node, .. } => assert_eq!(*else_node, StmtId(3)),
            k => panic!("{k:?}"),
        }
        assert_eq!(p.node(StmtId(4)).kind, NodeKind::Assign {
            lhs: Exp { kind: ExpKind::Var(GlobalId(0)), ty: Type::int() },
            rhs: Exp { kind: ExpKind::Const(3), ty: Type::int() },
        });
    }

    #[test]
    fn print_alias_assert_roundtrips() {
        let p = parse_program(ALIAS_ASSERT).unwrap();
        let s1 = p.to_string();
        let p2 = parse_program(&s1).unwrap();
        assert_eq!(p2.to_string(), s1);
        assert_eq!(p2.nodes.len(), 7);
    }

    fn int_exp() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (-20i64..20).prop_map(|v| v.to_string()),
            Just("x".to_string()),
            Just("y".to_string()),
            Just("*p".to_string()),
            Just("a[1]".to_string()),
            Just("s->f".to_string()),
            Just("s->n->g".to_string()),
            Just("p[x]".to_string()),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "%", "<", "==", "&&", "||", ">="]), inner.clone())
                    .prop_map(|(l, op, r)| format!("({l} {op} {r})")),
                inner.clone().prop_map(|e| format!("-{e}")),
                inner.clone().prop_map(|e| format!("!({e})")),
                inner.prop_map(|e| format!("*(p + {e})")),
            ]
        })
    }

    fn stmt() -> impl Strategy<Value = String> {
        prop_oneof![
            int_exp().prop_map(|e| format!("x = {e};")),
            int_exp().prop_map(|e| format!("a[2] = {e};")),
            int_exp().prop_map(|e| format!("if ({e}) {{ y = 1; }} else {{ p = &a[3]; }}")),
            int_exp().prop_map(|e| format!("while ({e}) {{ s->f = x; }}")),
            Just("s = malloc(sizeof(struct S));".to_string()),
            Just("free(s->n);".to_string()),
            Just("p = p + 1;".to_string()),
            Just("y = newSymbolic;".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn parse_print_parse_fixpoint(body in prop::collection::vec(stmt(), 0..6)) {
            let src = format!(
                "struct S {{ int f; int g; struct S *n; }} *s;\nint x, y, *p, a[4];\n{}",
                body.join("\n")
            );
            let p1 = parse_program(&src).unwrap();
            let s1 = p1.to_string();
            let p2 = parse_program(&s1).unwrap();
            let s2 = p2.to_string();
            prop_assert_eq!(&s1, &s2);
            prop_assert_eq!(p1.nodes.len(), p2.nodes.len());
            prop_assert_eq!(p1.body.len(), p2.body.len());
        }
    }
}
