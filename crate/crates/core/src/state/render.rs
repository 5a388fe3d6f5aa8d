//! Printing with shared subterms named once.
//!
//! `Display` on [`SymExpr`] expands the DAG into a tree, which can blow up
//! after merges. Here every interior node reached from more than one place
//! is printed once as `%k` and referenced by name.

use std::collections::HashMap;
use std::fmt::Write;

use super::expr::{Kind, SymExpr, Uf};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Rendered {
    pub exprs: Vec<String>,
    /// `(name, definition)` in dependency order.
    pub shared: Vec<(String, String)>,
}

fn is_leaf(e: &SymExpr) -> bool {
    matches!(e.kind(), Kind::Word(_) | Kind::Bool(_) | Kind::Var(_))
}

pub fn render_all(roots: &[SymExpr]) -> Rendered {
    let mut uses: HashMap<usize, usize> = HashMap::new();
    let mut order: Vec<SymExpr> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in roots {
        *uses.entry(r.ptr_id()).or_default() += 1;
        for n in r.post_order() {
            if seen.insert(n.ptr_id()) {
                for c in n.children() {
                    *uses.entry(c.ptr_id()).or_default() += 1;
                }
                order.push(n);
            }
        }
    }
    let mut text: HashMap<usize, String> = HashMap::new();
    let mut out = Rendered::default();
    for n in &order {
        let t = |e: &SymExpr| text[&e.ptr_id()].clone();
        let body = match n.kind() {
            Kind::Word(_) | Kind::Bool(_) | Kind::Var(_) => n.to_string(),
            Kind::Bin(op, a, b) => format!("({} {} {})", t(a), op.symbol(), t(b)),
            Kind::Not(a) => format!("!{}", t(a)),
            Kind::Ite(c, a, b) => format!("ite({}, {}, {})", t(c), t(a), t(b)),
            Kind::App(uf, args) => {
                let mut s = match uf {
                    Uf::Sha3 => "sha3(".to_string(),
                    Uf::Call(site) => format!("call@{site}("),
                    Uf::StorageBase => "storage0(".to_string(),
                };
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    let _ = write!(s, "{}", t(a));
                }
                s.push(')');
                s
            }
        };
        let shared = !is_leaf(n) && uses.get(&n.ptr_id()).copied().unwrap_or(0) > 1;
        if shared {
            let name = format!("%{}", out.shared.len());
            out.shared.push((name.clone(), body));
            text.insert(n.ptr_id(), name);
        } else {
            text.insert(n.ptr_id(), body);
        }
    }
    out.exprs = roots.iter().map(|r| text[&r.ptr_id()].clone()).collect();
    out
}

pub fn render(e: &SymExpr) -> String {
    let r = render_all(std::slice::from_ref(e));
    if r.shared.is_empty() {
        return r.exprs[0].clone();
    }
    let mut s = String::from("let ");
    for (i, (n, d)) in r.shared.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{n} = {d}");
    }
    let _ = write!(s, " in {}", r.exprs[0]);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Width;
    use crate::state::{Sort, VarFactory, VarOrigin};

    #[test]
    fn tree_prints_like_display() {
        let vf = VarFactory::new();
        let x = SymExpr::var(&vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "x"));
        let e = SymExpr::lt(SymExpr::add(x.clone(), SymExpr::word_u64(1, Width::W256)), x);
        assert_eq!(render(&e), e.to_string());
    }

    #[test]
    fn doubling_chain_stays_linear() {
        let vf = VarFactory::new();
        let mut e = SymExpr::var(&vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "x"));
        for _ in 0..40 {
            e = SymExpr::add(e.clone(), SymExpr::mul(e, SymExpr::word_u64(3, Width::W256)));
        }
        let s = render(&e);
        assert!(s.len() < 4000, "{}", s.len());
        assert!(s.starts_with("let %0 = (x + (x * 3)), %1 = (%0 + (%0 * 3))"), "{s}");
    }
}
