//! SMT-LIB v2 text for symbolic expressions.
//!
//! Every interior DAG node becomes one `define-fun`, so shared subterms are
//! written once. Variables are renamed `v0, v1, ...` in first-occurrence
//! order, which makes the text independent of run-specific variable ids.

use std::collections::HashMap;
use std::fmt::Write;

use crate::ir::BinOp;
use crate::state::{Kind, Sort, SymExpr, SymVar, Uf};

pub struct Encoding {
    /// Declarations, definitions and the assertion of the root.
    pub script: String,
    pub vars: Vec<(SymVar, String)>,
    /// Uninterpreted applications and the names bound to them.
    pub apps: Vec<(SymExpr, String)>,
}

pub fn sort_text(s: Sort) -> String {
    match s {
        Sort::Bool => "Bool".into(),
        Sort::Word(w) => format!("(_ BitVec {})", w.bits()),
    }
}

pub fn uf_name(uf: &Uf) -> String {
    match uf {
        Uf::Sha3 => "sha3".into(),
        Uf::StorageBase => "storage0".into(),
        Uf::Call(site) => format!("|call@{site}|"),
    }
}

fn op_text(op: BinOp, a: &str, b: &str, zero: &str) -> String {
    use BinOp::*;
    let f = match op {
        Add => "bvadd",
        Sub => "bvsub",
        Mul => "bvmul",
        // Division and remainder by zero yield zero, unlike SMT-LIB.
        Div => return format!("(ite (= {b} {zero}) {zero} (bvudiv {a} {b}))"),
        Mod => return format!("(ite (= {b} {zero}) {zero} (bvurem {a} {b}))"),
        BitAnd => "bvand",
        BitOr => "bvor",
        BitXor => "bvxor",
        Shl => "bvshl",
        Shr => "bvlshr",
        Lt => "bvult",
        Gt => "bvugt",
        Le => "bvule",
        Ge => "bvuge",
        Eq => "=",
        Ne => return format!("(not (= {a} {b}))"),
        And => "and",
        Or => "or",
    };
    format!("({f} {a} {b})")
}

pub fn encode(root: &SymExpr) -> Encoding {
    let nodes = root.post_order();
    let mut names: HashMap<usize, String> = HashMap::new();
    let mut vars = Vec::new();
    let mut apps = Vec::new();
    let mut ufs: Vec<(Uf, usize, Sort)> = Vec::new();
    let mut decls = String::new();
    let mut defs = String::new();

    for (k, n) in nodes.iter().enumerate() {
        let name = |e: &SymExpr| names[&e.ptr_id()].clone();
        let text = match n.kind() {
            Kind::Word(w) => format!("(_ bv{} {})", w.value(), w.width().bits()),
            Kind::Bool(b) => b.to_string(),
            Kind::Var(v) => {
                let vn = format!("v{}", vars.len());
                let _ = writeln!(decls, "(declare-const {vn} {})", sort_text(v.sort()));
                vars.push((v.clone(), vn.clone()));
                vn
            }
            kind => {
                let body = match kind {
                    Kind::Bin(op, a, b) => {
                        let zero = match a.sort() {
                            Sort::Word(w) => format!("(_ bv0 {})", w.bits()),
                            Sort::Bool => "false".into(),
                        };
                        op_text(*op, &name(a), &name(b), &zero)
                    }
                    Kind::Not(a) => format!("(not {})", name(a)),
                    Kind::Ite(c, a, b) => format!("(ite {} {} {})", name(c), name(a), name(b)),
                    Kind::App(uf, args) => {
                        if !ufs.iter().any(|(u, _, _)| u == uf) {
                            ufs.push((uf.clone(), args.len(), n.sort()));
                        }
                        let args: Vec<String> = args.iter().map(name).collect();
                        format!("({} {})", uf_name(uf), args.join(" "))
                    }
                    _ => unreachable!(),
                };
                let dn = format!("n{k}");
                let _ = writeln!(defs, "(define-fun {dn} () {} {body})", sort_text(n.sort()));
                if matches!(n.kind(), Kind::App(..)) {
                    apps.push((n.clone(), dn.clone()));
                }
                dn
            }
        };
        names.insert(n.ptr_id(), text);
    }

    let mut script = decls;
    for (uf, arity, sort) in &ufs {
        let s = sort_text(*sort);
        let args = vec![s.clone(); *arity].join(" ");
        let _ = writeln!(script, "(declare-fun {} ({args}) {s})", uf_name(uf));
    }
    script.push_str(&defs);
    let _ = writeln!(script, "(assert {})", names[&root.ptr_id()]);
    Encoding { script, vars, apps }
}
