//! Dependency check: does changing `v` change `e`?

use std::collections::HashMap;

use super::{SatResult, Solver};
use crate::state::{Substitution, SymExpr, SymVar, VarFactory, VarOrigin};

/// Memoized interference checks for one worker. Solver unknowns count as
/// interference and are tallied in `unknowns`.
pub struct Interference {
    cache: HashMap<(SymExpr, SymExpr), bool>,
    scratch: VarFactory,
    pub unknowns: usize,
    pub queries: usize,
}

impl Default for Interference {
    fn default() -> Self {
        Interference::new()
    }
}

/// The formula `e[v0/v] != e[v1/v] && v0 != v1` with fresh `v0`, `v1`.
pub fn interference_formula(v: &SymVar, e: &SymExpr, scratch: &VarFactory) -> SymExpr {
    let copy = |k: u8| {
        let c = scratch.fresh(v.sort(), VarOrigin::Abstraction, format!("{}'{k}", v.name()));
        let mut s = Substitution::new();
        s.insert(v.clone(), SymExpr::var(&c));
        (SymExpr::var(&c), e.substitute(&s))
    };
    let (v0, e0) = copy(0);
    let (v1, e1) = copy(1);
    SymExpr::and(SymExpr::ne(e0, e1), SymExpr::ne(v0, v1))
}

impl Interference {
    pub fn new() -> Interference {
        Interference { cache: HashMap::new(), scratch: VarFactory::starting_at(1 << 62), unknowns: 0, queries: 0 }
    }

    pub fn check(&mut self, solver: &mut Solver, v: &SymVar, e: &SymExpr) -> bool {
        self.check_term(solver, &SymExpr::var(v), e)
    }

    /// Interference of an arbitrary subterm, such as a call's return value,
    /// with `e`: the term is abstracted by a fresh variable first.
    pub fn check_term(&mut self, solver: &mut Solver, term: &SymExpr, e: &SymExpr) -> bool {
        if !e.contains(term) {
            return false;
        }
        let key = (term.clone(), e.clone());
        if let Some(&b) = self.cache.get(&key) {
            return b;
        }
        self.queries += 1;
        let f = match term.as_var() {
            Some(v) => interference_formula(v, e, &self.scratch),
            None => {
                let sort = term.sort();
                let v = self.scratch.fresh(sort, VarOrigin::Abstraction, "t");
                interference_formula(&v, &e.replace(term, &SymExpr::var(&v)), &self.scratch)
            }
        };
        let b = match solver.check(&f) {
            SatResult::Sat(_) => true,
            SatResult::Unsat => false,
            SatResult::Unknown(_) => {
                self.unknowns += 1;
                true
            }
        };
        self.cache.insert(key, b);
        b
    }

    /// Some variable in `vars` interferes with `e`.
    pub fn any(&mut self, solver: &mut Solver, vars: &[SymVar], e: &SymExpr) -> bool {
        vars.iter().any(|v| self.check(solver, v, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Width;
    use crate::smt::SolverConfig;
    use crate::state::Sort;

    #[test]
    fn textbook_cases() {
        let vf = VarFactory::new();
        let x = vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "x");
        let xe = SymExpr::var(&x);
        let mut s = Solver::new(SolverConfig::default());
        let mut i = Interference::new();
        assert!(i.check(&mut s, &x, &SymExpr::add(xe.clone(), SymExpr::word_u64(1, Width::W256))));
        assert!(!i.check(&mut s, &x, &SymExpr::word_u64(7, Width::W256)));
        assert!(!i.check(&mut s, &x, &SymExpr::mul(xe.clone(), SymExpr::word_u64(0, Width::W256))));
        // Cancels only semantically; the solver has to see it.
        let y = SymExpr::var(&vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "y"));
        let masked = SymExpr::bin(crate::ir::BinOp::BitAnd, SymExpr::sub(xe.clone(), xe.clone()), y);
        assert!(!i.check(&mut s, &x, &masked));
        assert_eq!(i.unknowns, 0);
    }

    #[test]
    fn other_variables_are_shared_existentials() {
        let vf = VarFactory::new();
        let x = vf.fresh(Sort::Word(Width::W8), VarOrigin::AttackArg, "x");
        let y = vf.fresh(Sort::Word(Width::W8), VarOrigin::AttackArg, "y");
        // x only matters when y = 3.
        let e = SymExpr::ite(
            SymExpr::eq(SymExpr::var(&y), SymExpr::word_u64(3, Width::W8)),
            SymExpr::var(&x),
            SymExpr::word_u64(0, Width::W8),
        );
        let mut s = Solver::new(SolverConfig::default());
        assert!(Interference::new().check(&mut s, &x, &e));
    }

    #[test]
    fn solver_failure_counts_as_interference() {
        let vf = VarFactory::new();
        let x = vf.fresh(Sort::Word(Width::W8), VarOrigin::AttackArg, "x");
        let e = SymExpr::add(SymExpr::var(&x), SymExpr::word_u64(1, Width::W8));
        let mut s = Solver::new(SolverConfig { command: "/nonexistent".into(), ..SolverConfig::default() });
        let mut i = Interference::new();
        assert!(i.check(&mut s, &x, &e));
        assert_eq!(i.unknowns, 1);
    }

    #[test]
    fn call_results_are_abstracted() {
        use crate::state::{CallSite, Uf};
        let vf = VarFactory::new();
        let g = SymExpr::var(&vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "g"));
        let site = CallSite { function: "f".into(), stmt: 4, depth: 0 };
        let ret = SymExpr::app(Uf::Call(site), vec![g.clone(), g.clone(), g.clone()], Width::W256);
        let zero = SymExpr::word_u64(0, Width::W256);
        let mut s = Solver::new(SolverConfig::default());
        let mut i = Interference::new();
        assert!(i.check_term(&mut s, &ret, &SymExpr::eq(ret.clone(), zero.clone())));
        assert!(!i.check_term(&mut s, &ret, &SymExpr::eq(g, zero)));
    }
}
