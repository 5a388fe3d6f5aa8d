//! Keyed stores for storage and memory, kept as ordered write logs.

use std::sync::Arc;

use super::expr::{Kind, Sort, SymExpr, Uf};
use crate::ir::{Width, Word};

/// What an unwritten location holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Base {
    Zero,
    /// Unknown initial contents, `storage0(loc)`.
    Snapshot,
}

/// Ordered log of writes. A read folds an alias check over the log, newest
/// write first; writing a syntactically equal location replaces the old
/// entry.
#[derive(Clone, Debug)]
pub struct Store {
    entries: Arc<Vec<(SymExpr, SymExpr)>>,
    base: Base,
    width: Width,
}

fn is_sha3(e: &SymExpr) -> bool {
    matches!(e.kind(), Kind::App(Uf::Sha3, _))
}

/// Alias condition between two locations. Hash locations are treated as
/// injective and disjoint from literal locations. Conditional locations
/// are split so that assumption applies to each alternative; otherwise it
/// would depend on how far the location happened to fold.
pub fn loc_eq(a: &SymExpr, b: &SymExpr) -> SymExpr {
    if a == b {
        return SymExpr::tt();
    }
    if a.is_literal() && b.is_literal() {
        return SymExpr::ff();
    }
    match (a.kind(), b.kind()) {
        (Kind::Ite(c, x, y), _) => SymExpr::ite(c.clone(), loc_eq(x, b), loc_eq(y, b)),
        (_, Kind::Ite(c, x, y)) => SymExpr::ite(c.clone(), loc_eq(a, x), loc_eq(a, y)),
        (Kind::App(Uf::Sha3, xs), Kind::App(Uf::Sha3, ys)) => {
            SymExpr::and(loc_eq(&xs[0], &ys[0]), loc_eq(&xs[1], &ys[1]))
        }
        _ if (is_sha3(a) && b.is_literal()) || (is_sha3(b) && a.is_literal()) => SymExpr::ff(),
        _ => SymExpr::eq(a.clone(), b.clone()),
    }
}

impl Store {
    pub fn new(base: Base, width: Width) -> Store {
        Store { entries: Arc::new(Vec::new()), base, width }
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn entries(&self) -> &[(SymExpr, SymExpr)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn same_log(&self, other: &Store) -> bool {
        Arc::ptr_eq(&self.entries, &other.entries)
    }

    fn base_value(&self, loc: &SymExpr, sort: Sort) -> SymExpr {
        match self.base {
            Base::Zero => SymExpr::word(Word::zero(self.width)).coerce(sort),
            Base::Snapshot => SymExpr::app(Uf::StorageBase, vec![loc.clone()], self.width).coerce(sort),
        }
    }

    pub fn read(&self, loc: &SymExpr, sort: Sort) -> SymExpr {
        let mut hits: Vec<(SymExpr, &SymExpr)> = Vec::new();
        let mut definite = None;
        for (l, v) in self.entries.iter().rev() {
            let c = loc_eq(loc, l);
            if c.is_false() {
                continue;
            }
            if c.is_true() {
                definite = Some(v.coerce(sort));
                break;
            }
            hits.push((c, v));
        }
        let mut acc = definite.unwrap_or_else(|| self.base_value(loc, sort));
        for (c, v) in hits.into_iter().rev() {
            acc = SymExpr::ite(c, v.coerce(sort), acc);
        }
        acc
    }

    pub fn write(&mut self, loc: SymExpr, value: SymExpr) {
        let entries = Arc::make_mut(&mut self.entries);
        entries.retain(|(l, _)| *l != loc);
        entries.push((loc, value));
    }

    /// Write that only takes effect when `guard` holds.
    pub fn write_guarded(&mut self, guard: &SymExpr, loc: SymExpr, value: SymExpr) {
        if guard.is_false() {
            return;
        }
        if guard.is_true() {
            return self.write(loc, value);
        }
        let old = self.read(&loc, value.sort());
        self.write(loc, SymExpr::ite(guard.clone(), value, old));
    }

    /// `ite(guard, a, b)` pointwise. Both stores must share a base.
    pub fn merge(guard: &SymExpr, a: &Store, b: &Store) -> Store {
        debug_assert_eq!(a.base, b.base);
        if guard.is_true() || a.same_log(b) {
            return a.clone();
        }
        if guard.is_false() {
            return b.clone();
        }
        let prefix = a
            .entries
            .iter()
            .zip(b.entries.iter())
            .take_while(|(x, y)| x.0 == y.0 && x.1 == y.1)
            .count();
        if prefix == a.entries.len() && prefix == b.entries.len() {
            return a.clone();
        }
        let mut locs: Vec<(SymExpr, Sort)> = Vec::new();
        for (l, v) in a.entries[prefix..].iter().chain(b.entries[prefix..].iter()) {
            if !locs.iter().any(|(x, _)| x == l) {
                locs.push((l.clone(), v.sort()));
            }
        }
        let mut out = Store { entries: Arc::new(a.entries[..prefix].to_vec()), base: a.base, width: a.width };
        for (l, sort) in locs {
            let v = SymExpr::ite(guard.clone(), a.read(&l, sort), b.read(&l, sort));
            out.write(l, v);
        }
        out
    }

    /// Every location written in either store.
    pub fn written_locations(stores: &[&Store]) -> Vec<(SymExpr, Sort)> {
        let mut locs: Vec<(SymExpr, Sort)> = Vec::new();
        for s in stores {
            for (l, v) in s.entries.iter() {
                if !locs.iter().any(|(x, _)| x == l) {
                    locs.push((l.clone(), v.sort()));
                }
            }
        }
        locs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::expr::{Assignment, CVal, Sort, VarFactory, VarOrigin};

    const W: Width = Width::W256;

    fn lit(v: u64) -> SymExpr {
        SymExpr::word_u64(v, W)
    }

    #[test]
    fn literal_locations_fold() {
        let mut s = Store::new(Base::Zero, W);
        s.write(lit(0), lit(10));
        s.write(lit(1), lit(11));
        assert_eq!(s.read(&lit(0), Sort::Word(W)), lit(10));
        assert_eq!(s.read(&lit(2), Sort::Word(W)), lit(0));
        s.write(lit(0), lit(12));
        assert_eq!(s.entries().len(), 2);
        assert_eq!(s.read(&lit(0), Sort::Word(W)), lit(12));
    }

    #[test]
    fn map_entries_never_alias_named_slots() {
        let vf = VarFactory::new();
        let k = SymExpr::var(&vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "k"));
        let loc = SymExpr::app(Uf::Sha3, vec![lit(1), k.clone()], W);
        let mut s = Store::new(Base::Zero, W);
        s.write(loc.clone(), lit(5));
        s.write(lit(0), lit(9));
        assert_eq!(s.read(&loc, Sort::Word(W)), lit(5));
        let other = SymExpr::app(Uf::Sha3, vec![lit(2), k], W);
        assert_eq!(s.read(&other, Sort::Word(W)), lit(0));
    }

    #[test]
    fn merge_is_pointwise_ite() {
        let vf = VarFactory::new();
        let g = vf.fresh(Sort::Bool, VarOrigin::ChooseGuard, "g");
        let x = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "x");
        let mut a = Store::new(Base::Zero, W);
        a.write(lit(0), lit(1));
        let mut b = a.clone();
        a.write(SymExpr::var(&x), lit(7));
        b.write(lit(3), lit(8));
        let m = Store::merge(&SymExpr::var(&g), &a, &b);
        for gv in [true, false] {
            for xv in [0u64, 3, 4] {
                let mut asg = Assignment::new();
                asg.set(&g, CVal::Bool(gv));
                asg.set(&x, CVal::Word(Word::from_u64(xv, W)));
                for probe in [0u64, 3, 4, 5] {
                    let want = if gv { &a } else { &b }.read(&lit(probe), Sort::Word(W)).eval(&asg);
                    assert_eq!(m.read(&lit(probe), Sort::Word(W)).eval(&asg), want, "g={gv} x={xv} at {probe}");
                }
            }
        }
    }
}
