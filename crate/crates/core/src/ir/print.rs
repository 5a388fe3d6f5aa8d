use std::fmt::Write;

use super::{Contract, Expr, Function, Stmt, UnOp};

/// Renders a contract in the text format accepted by
/// [`parse_contract`](super::parse_contract).
pub fn print_contract(c: &Contract) -> String {
    let mut out = String::new();
    writeln!(out, "contract {} {{", c.name).unwrap();
    for s in &c.storage {
        match &s.init {
            Some(init) => writeln!(out, "    storage {}: {} = {}", s.name, s.sort, init).unwrap(),
            None => writeln!(out, "    storage {}: {}", s.name, s.sort).unwrap(),
        }
    }
    for f in &c.functions {
        if !out.ends_with("{\n") {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out.push_str("}\n");
    out
}

fn print_function(out: &mut String, f: &Function) {
    let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.sort)).collect();
    let vis = if f.public { "public " } else { "" };
    writeln!(out, "    {vis}fn {}({}) {{", f.name, params.join(", ")).unwrap();
    for pc in 0..=f.body.len() {
        for (label, _) in f.labels.iter().filter(|(_, i)| *i == pc) {
            writeln!(out, "    {label}:").unwrap();
        }
        if let Some(s) = f.body.get(pc) {
            writeln!(out, "        {}", stmt_text(s)).unwrap();
        }
    }
    out.push_str("    }\n");
}

pub(crate) fn stmt_text(s: &Stmt) -> String {
    match s {
        Stmt::Assign { dst, expr } => format!("{dst} := {}", expr_text(expr)),
        Stmt::MLoad { dst, addr } => format!("{dst} := mload {}", expr_text(addr)),
        Stmt::MStore { addr, value } => format!("mstore {} {}", operand(addr), operand(value)),
        Stmt::SLoad { dst, key } => format!("{dst} := sload {}", expr_text(key)),
        Stmt::SStore { key, value } => format!("sstore {} {}", operand(key), operand(value)),
        Stmt::Sha3 { dst, lhs, rhs } => format!("{dst} := sha3 {} {}", operand(lhs), operand(rhs)),
        Stmt::Jump { target } => format!("jump {}", target.name()),
        Stmt::JumpI { target, cond } => format!("jumpi {} {}", target.name(), expr_text(cond)),
        Stmt::Call { dst, gas, addr, value } => {
            let ops = format!("call {} {} {}", operand(gas), operand(addr), operand(value));
            match dst {
                Some(d) => format!("{d} := {ops}"),
                None => ops,
            }
        }
        Stmt::SelfDestruct { addr } => format!("selfdestruct {}", expr_text(addr)),
        Stmt::Env { dst, read } => format!("{dst} := {}", read.keyword()),
        Stmt::NoOp => "nop".into(),
        Stmt::Stop => "stop".into(),
    }
}

pub(crate) fn expr_text(e: &Expr) -> String {
    match e {
        Expr::Binary(op, a, b) => format!("{} {} {}", operand(a), op.symbol(), operand(b)),
        Expr::Unary(UnOp::Not, a) => format!("!{}", operand(a)),
        _ => operand(e),
    }
}

/// Compound sub-expressions are always parenthesized, which keeps printing
/// independent of operator precedence.
fn operand(e: &Expr) -> String {
    match e {
        Expr::Const(l) => l.to_string(),
        Expr::Reg(r) => r.clone(),
        Expr::Slot { name, .. } => name.clone(),
        Expr::Binary(..) | Expr::Unary(..) => format!("({})", expr_text(e)),
    }
}
