//! Whether an attacker-chosen variable can influence an expression,
//! decided by the solver.

use attack_synth::ir::{BinOp, Width};
use attack_synth::smt::{Interference, Solver, SolverConfig};
use attack_synth::state::{render, Sort, SymExpr, VarFactory, VarOrigin};

fn main() {
    let vf = VarFactory::new();
    let w = Width::W8;
    let x = vf.fresh(Sort::Word(w), VarOrigin::AttackArg, "x");
    let y = vf.fresh(Sort::Word(w), VarOrigin::AttackArg, "y");
    let (xe, ye) = (SymExpr::var(&x), SymExpr::var(&y));
    let lit = |v| SymExpr::word_u64(v, w);
    let exprs = [
        SymExpr::add(xe.clone(), lit(1)),
        lit(42),
        SymExpr::mul(xe.clone(), lit(0)),
        SymExpr::bin(BinOp::BitAnd, SymExpr::sub(xe.clone(), xe.clone()), ye.clone()),
        SymExpr::bin(BinOp::Shl, xe.clone(), lit(8)),
        SymExpr::bin(BinOp::BitAnd, SymExpr::mul(xe.clone(), lit(16)), lit(0x0f)),
        SymExpr::ite(SymExpr::eq(ye.clone(), lit(3)), xe.clone(), lit(0)),
    ];
    let mut solver = Solver::new(SolverConfig::default());
    let mut inter = Interference::new();
    for e in &exprs {
        println!("{:<40} {}", render(e), inter.check(&mut solver, &x, e));
    }
}
