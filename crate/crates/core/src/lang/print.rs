use std::fmt::Write;

use super::*;

pub(crate) fn exp_to_string(p: &Program, e: &Exp) -> String {
    let mut s = String::new();
    write_exp(p, e, false, &mut s);
    s
}

fn write_exp(p: &Program, e: &Exp, nested: bool, out: &mut String) {
    match &e.kind {
        ExpKind::Const(v) => write!(out, "{v}").unwrap(),
        ExpKind::Null => out.push_str("NULL"),
        ExpKind::Var(g) => out.push_str(&p.global(*g).name),
        ExpKind::Deref(inner) => {
            out.push('*');
            write_operand(p, inner, out);
        }
        ExpKind::Arrow(base, f) => {
            write_operand(p, base, out);
            write!(out, "->{}", p.record(f.record).fields[f.index as usize].name).unwrap();
        }
        ExpKind::Index(base, idx) => {
            write_operand(p, base, out);
            out.push('[');
            write_exp(p, idx, false, out);
            out.push(']');
        }
        ExpKind::AddrOf(inner) => {
            out.push('&');
            write_operand(p, inner, out);
        }
        ExpKind::Unary(op, inner) => {
            out.push_str(match op {
                UnOp::Neg => "-(",
                UnOp::Not => "!(",
            });
            write_exp(p, inner, false, out);
            out.push(')');
        }
        ExpKind::Binary(op, l, r) => {
            if nested {
                out.push('(');
            }
            write_exp(p, l, true, out);
            write!(out, " {} ", op.symbol()).unwrap();
            write_exp(p, r, true, out);
            if nested {
                out.push(')');
            }
        }
    }
}

/// Operand of a prefix or postfix operator: bare when it is a variable,
/// constant or postfix chain, parenthesized otherwise.
fn write_operand(p: &Program, e: &Exp, out: &mut String) {
    match &e.kind {
        ExpKind::Var(_) | ExpKind::Null | ExpKind::Arrow(..) | ExpKind::Index(..) => {
            write_exp(p, e, false, out)
        }
        ExpKind::Const(v) if *v >= 0 => write_exp(p, e, false, out),
        _ => {
            out.push('(');
            write_exp(p, e, false, out);
            out.push(')');
        }
    }
}

fn base_name(p: &Program, ty: &Type) -> String {
    match ty {
        Type::Int(8) => "int".into(),
        Type::Int(w) => format!("i{}", u32::from(*w) * 8),
        Type::Record(r) => format!("struct {}", p.record(*r).name),
        Type::Void => "void".into(),
        Type::Ptr(t) | Type::Array(t, _) => base_name(p, t),
    }
}

/// Type as it appears before a declarator name, e.g. `struct A *`.
pub(crate) fn type_prefix(p: &Program, ty: &Type) -> String {
    let mut stars = 0;
    let mut t = ty;
    while let Type::Ptr(inner) = t {
        stars += 1;
        t = inner;
    }
    let mut s = base_name(p, t);
    if stars > 0 {
        s.push(' ');
        s.push_str(&"*".repeat(stars));
    }
    if let Type::Array(_, n) = t {
        write!(s, "[{n}]").unwrap();
    }
    s
}

fn declaration(p: &Program, ty: &Type, name: &str) -> String {
    let (elem, len) = match ty {
        Type::Array(t, n) => (&**t, Some(*n)),
        t => (t, None),
    };
    let mut stars = 0;
    let mut t = elem;
    while let Type::Ptr(inner) = t {
        stars += 1;
        t = inner;
    }
    let mut s = format!("{} {}{}", base_name(p, t), "*".repeat(stars), name);
    if let Some(n) = len {
        write!(s, "[{n}]").unwrap();
    }
    s
}

pub(crate) fn node_to_string(p: &Program, id: StmtId) -> String {
    match &p.node(id).kind {
        NodeKind::AssignSymbolic { lhs } => format!("{} = newSymbolic", exp_to_string(p, lhs)),
        NodeKind::Assign { lhs, rhs } => {
            format!("{} = {}", exp_to_string(p, lhs), exp_to_string(p, rhs))
        }
        NodeKind::Malloc { lhs, size } => format!("{} = malloc({size})", exp_to_string(p, lhs)),
        NodeKind::Free { arg } => format!("free({})", exp_to_string(p, arg)),
        NodeKind::If { cond, .. } => format!("if ({})", exp_to_string(p, cond)),
        NodeKind::Else { cond, .. } => format!("else of if ({})", exp_to_string(p, cond)),
        NodeKind::While { cond } => format!("while ({})", exp_to_string(p, cond)),
        NodeKind::Abort => "abort".into(),
        NodeKind::Skip => "skip".into(),
    }
}

pub(crate) fn program_to_string(p: &Program) -> String {
    let mut out = String::new();
    for r in &p.records {
        writeln!(out, "struct {} {{", r.name).unwrap();
        for f in &r.fields {
            writeln!(out, "    {};", declaration(p, &f.ty, &f.name)).unwrap();
        }
        out.push_str("};\n");
    }
    for g in &p.globals {
        match g.init {
            Some(v) => writeln!(out, "{} = {v};", declaration(p, &g.ty, &g.name)).unwrap(),
            None => writeln!(out, "{};", declaration(p, &g.ty, &g.name)).unwrap(),
        }
    }
    if !p.body.is_empty() && !(p.records.is_empty() && p.globals.is_empty()) {
        out.push('\n');
    }
    write_block(p, &p.body, 0, &mut out);
    out
}

fn write_block(p: &Program, body: &[Stmt], depth: usize, out: &mut String) {
    for s in body {
        write_stmt(p, s, depth, out);
    }
}

fn write_stmt(p: &Program, s: &Stmt, depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    out.push_str(&pad);
    if let Some(l) = &s.label {
        write!(out, "{l}: ").unwrap();
    }
    match &s.kind {
        StmtKind::If { cond, then_body, explicit_else, else_body, .. } => {
            writeln!(out, "if ({}) {{", exp_to_string(p, cond)).unwrap();
            write_block(p, then_body, depth + 1, out);
            if *explicit_else {
                writeln!(out, "{pad}}} else {{").unwrap();
                write_block(p, else_body, depth + 1, out);
            }
            writeln!(out, "{pad}}}").unwrap();
        }
        StmtKind::While { cond, body } => {
            writeln!(out, "while ({}) {{", exp_to_string(p, cond)).unwrap();
            write_block(p, body, depth + 1, out);
            writeln!(out, "{pad}}}").unwrap();
        }
        _ => writeln!(out, "{};", node_to_string(p, s.id)).unwrap(),
    }
}
