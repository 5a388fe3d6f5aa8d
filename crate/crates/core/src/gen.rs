//! Random victim contracts for property tests and experiments.
//!
//! Contracts are produced as IR text and parsed, so every generated victim
//! goes through the same front end as hand-written ones.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ir::{parse_contract, Contract};

#[derive(Clone, Debug)]
pub struct VictimShape {
    pub methods: usize,
    /// Parameters per method are drawn from `0..=max_params`.
    pub max_params: usize,
    pub min_params: usize,
    /// Statement budget per method, including register set-up.
    pub max_stmts: usize,
    pub max_branches: usize,
    pub max_loops: usize,
    pub maps: bool,
    pub arrays: bool,
    pub bool_params: bool,
    /// Allow conditions to read the result of an external call.
    pub branch_on_calls: bool,
    pub selfdestruct: bool,
    /// Probability that a simple statement is a call.
    pub call_rate: f64,
    pub store_rate: f64,
    /// Literals are drawn below this bound.
    pub literal_bound: u64,
}

impl Default for VictimShape {
    fn default() -> Self {
        VictimShape {
            methods: 1,
            max_params: 2,
            min_params: 0,
            max_stmts: 30,
            max_branches: 2,
            max_loops: 1,
            maps: true,
            arrays: true,
            bool_params: true,
            branch_on_calls: true,
            selfdestruct: true,
            call_rate: 0.12,
            store_rate: 0.15,
            literal_bound: 16,
        }
    }
}

impl VictimShape {
    /// Small map-free victims whose calls never steer control flow; at
    /// 8 bits their concrete and symbolic semantics coincide exactly.
    pub fn brute_forceable(methods: usize) -> VictimShape {
        VictimShape {
            methods,
            max_params: 1,
            min_params: 1,
            max_stmts: 22,
            max_branches: 2,
            max_loops: 0,
            maps: false,
            arrays: false,
            bool_params: false,
            branch_on_calls: false,
            selfdestruct: false,
            call_rate: 0.2,
            store_rate: 0.25,
            literal_bound: 256,
        }
    }
}

const REGS: [&str; 6] = ["r0", "r1", "r2", "r3", "r4", "r5"];
const CALL_REGS: [&str; 3] = ["c0", "c1", "c2"];
const WORD_SLOTS: [&str; 2] = ["s0", "s1"];
const ARITH: [&str; 9] = ["+", "-", "*", "/", "%", "&", "|", "^", "+"];
const CMP: [&str; 6] = ["<", ">", "<=", ">=", "==", "!="];

struct MethodGen<'a, R: Rng> {
    rng: &'a mut R,
    shape: &'a VictimShape,
    out: Vec<String>,
    labels: usize,
    stmts: usize,
    /// Open forward branches: (label, statements left before it lands).
    pending: Vec<(String, usize)>,
    call_regs: Vec<String>,
}

impl<R: Rng> MethodGen<'_, R> {
    fn lit(&mut self) -> u64 {
        let b = self.shape.literal_bound.max(2);
        // Bias toward the edges where wrapping happens.
        match self.rng.gen_range(0..6) {
            0 => b - 1,
            1 => 0,
            _ => self.rng.gen_range(0..b),
        }
    }

    fn reg(&mut self) -> &'static str {
        REGS.choose(self.rng).copied().unwrap_or("r0")
    }

    fn operand(&mut self) -> String {
        if self.rng.gen_bool(0.3) {
            self.lit().to_string()
        } else {
            self.reg().to_string()
        }
    }

    fn cond_operand(&mut self) -> String {
        if self.shape.branch_on_calls && !self.call_regs.is_empty() && self.rng.gen_bool(0.3) {
            return self.call_regs.choose(self.rng).cloned().unwrap_or_default();
        }
        self.reg().to_string()
    }

    fn cond(&mut self) -> String {
        let a = self.cond_operand();
        let op = CMP.choose(self.rng).copied().unwrap_or("<");
        let b = self.operand();
        if self.rng.gen_bool(0.2) {
            format!("!({a} {op} {b})")
        } else {
            format!("{a} {op} {b}")
        }
    }

    fn label(&mut self) -> String {
        self.labels += 1;
        format!("L{}", self.labels)
    }

    fn push(&mut self, s: String) {
        self.out.push(format!("        {s}"));
        self.stmts += 1;
        let mut landed = Vec::new();
        for (l, left) in self.pending.iter_mut() {
            *left = left.saturating_sub(1);
            if *left == 0 {
                landed.push(l.clone());
            }
        }
        self.pending.retain(|(_, left)| *left > 0);
        for l in landed {
            self.out.push(format!("    {l}:"));
        }
    }

    fn simple(&mut self, in_loop: bool) {
        let roll: f64 = self.rng.gen();
        let d = self.reg();
        if roll < self.shape.call_rate {
            let gas = match self.rng.gen_range(0..3) {
                0 => "2300".to_string(),
                1 => "5000".to_string(),
                _ => {
                    self.push("g := gas".into());
                    "g".to_string()
                }
            };
            let (a, v) = (self.operand(), self.operand());
            if self.shape.branch_on_calls {
                let r = CALL_REGS.choose(self.rng).copied().unwrap_or("c0");
                self.push(format!("{r} := call {gas} {a} {v}"));
                if !self.call_regs.iter().any(|c| c == r) {
                    self.call_regs.push(r.to_string());
                }
            } else {
                self.push(format!("call {gas} {a} {v}"));
            }
            return;
        }
        if roll < self.shape.call_rate + self.shape.store_rate {
            let v = self.operand();
            if self.shape.maps && self.rng.gen_bool(0.35) {
                let k = self.reg();
                self.push(format!("k := sha3 m {k}"));
                self.push(format!("sstore k {v}"));
            } else if self.rng.gen_bool(0.2) {
                let c = self.cond();
                self.push(format!("fl := {c}"));
                self.push("sstore flag fl".into());
            } else {
                let s = WORD_SLOTS.choose(self.rng).copied().unwrap_or("s0");
                self.push(format!("sstore {s} {v}"));
            }
            return;
        }
        match self.rng.gen_range(0..10) {
            0..=4 => {
                let a = self.reg();
                let op = ARITH.choose(self.rng).copied().unwrap_or("+");
                let b = self.operand();
                self.push(format!("{d} := {a} {op} {b}"));
            }
            5 | 6 => {
                if self.shape.maps && self.rng.gen_bool(0.3) {
                    let k = self.reg();
                    self.push(format!("k := sha3 m {k}"));
                    self.push(format!("{d} := sload k"));
                } else if self.rng.gen_bool(0.25) {
                    self.push("fl := sload flag".into());
                    self.push(format!("{d} := fl"));
                } else {
                    let s = WORD_SLOTS.choose(self.rng).copied().unwrap_or("s0");
                    self.push(format!("{d} := sload {s}"));
                }
            }
            7 => {
                let env = ["timestamp", "caller", "balance", "address"].choose(self.rng).copied().unwrap_or("caller");
                self.push(format!("{d} := {env}"));
            }
            8 if !in_loop => {
                let (a, v) = (self.reg(), self.operand());
                self.push(format!("mstore {a} {v}"));
                let b = self.reg();
                self.push(format!("{d} := mload {b}"));
            }
            _ => {
                let a = self.reg();
                let b = self.operand();
                let op = CMP.choose(self.rng).copied().unwrap_or("<");
                self.push(format!("{d} := {a} {op} {b}"));
            }
        }
    }

    fn body(&mut self, params: &[(String, &'static str)]) {
        // Every register is defined up front so any path can read it.
        for (i, r) in REGS.iter().enumerate() {
            let init = match params.get(i) {
                Some((p, "bool")) => format!("{p} == true"),
                Some((p, "word[]")) => format!("{p}.length"),
                Some((p, _)) => p.clone(),
                None if i % 2 == 0 => self.lit().to_string(),
                None => {
                    let s = WORD_SLOTS[i % 2];
                    self.push(format!("{r} := sload {s}"));
                    continue;
                }
            };
            self.push(format!("{r} := {init}"));
        }
        // Scratch registers, so a jump over their defining statement is harmless.
        self.push("k := 0".into());
        self.push("g := 0".into());
        self.push("fl := false".into());
        if self.shape.branch_on_calls {
            for c in CALL_REGS {
                self.push(format!("{c} := 0"));
            }
        }
        if let Some((p, _)) = params.iter().find(|(_, s)| *s == "word[]") {
            self.push(format!("r5 := mload {p}"));
        }
        // Room for the largest compound item and a trailing selfdestruct.
        let budget = self.shape.max_stmts.saturating_sub(8);
        let mut branches = self.rng.gen_range(0..=self.shape.max_branches);
        let mut loops = self.rng.gen_range(0..=self.shape.max_loops);
        while self.stmts < budget {
            let r: f64 = self.rng.gen();
            if branches > 0 && r < 0.15 {
                branches -= 1;
                let c = self.cond();
                if self.rng.gen_bool(0.3) {
                    self.push(format!("jumpi REVERT {c}"));
                } else {
                    let l = self.label();
                    let skip = self.rng.gen_range(1..=4);
                    self.push(format!("jumpi {l} {c}"));
                    self.pending.push((l, skip));
                }
            } else if loops > 0 && r < 0.25 && self.pending.is_empty() {
                loops -= 1;
                let (head, done) = (self.label(), self.label());
                let bound = if self.rng.gen_bool(0.2) { self.reg().to_string() } else { self.rng.gen_range(1..=3).to_string() };
                self.push("lc := 0".into());
                self.out.push(format!("    {head}:"));
                self.push(format!("jumpi {done} lc >= {bound}"));
                for _ in 0..self.rng.gen_range(1..=3) {
                    self.simple(true);
                }
                self.push("lc := lc + 1".into());
                self.push(format!("jump {head}"));
                self.out.push(format!("    {done}:"));
            } else {
                self.simple(false);
            }
        }
        if self.shape.selfdestruct && self.rng.gen_bool(0.1) {
            let a = self.reg();
            self.push(format!("selfdestruct {a}"));
        }
        // Labels still open land at the end of the body.
        for (l, _) in std::mem::take(&mut self.pending) {
            self.out.push(format!("    {l}:"));
        }
    }
}

/// IR text of a random victim.
pub fn random_victim_text<R: Rng>(rng: &mut R, shape: &VictimShape, name: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "contract {name} {{");
    let _ = writeln!(s, "    storage s0: word = {}", rng.gen_range(0..shape.literal_bound.max(2)));
    let _ = writeln!(s, "    storage s1: word");
    let _ = writeln!(s, "    storage flag: bool = false");
    if shape.maps {
        let _ = writeln!(s, "    storage m: map");
    }
    for mi in 0..shape.methods {
        let n = rng.gen_range(shape.min_params..=shape.max_params.max(shape.min_params));
        let mut params: Vec<(String, &'static str)> = Vec::new();
        for pi in 0..n {
            let sort = if shape.arrays && rng.gen_bool(0.1) && !params.iter().any(|(_, s)| *s == "word[]") {
                "word[]"
            } else if shape.bool_params && rng.gen_bool(0.2) {
                "bool"
            } else if rng.gen_bool(0.3) {
                "address"
            } else {
                "word"
            };
            params.push((format!("p{mi}_{pi}"), sort));
        }
        let sig: Vec<String> = params.iter().map(|(p, s)| format!("{p}: {s}")).collect();
        let _ = writeln!(s, "\n    public fn m{mi}({}) {{", sig.join(", "));
        let mut g = MethodGen {
            rng: &mut *rng,
            shape,
            out: Vec::new(),
            labels: 0,
            stmts: 0,
            pending: Vec::new(),
            call_regs: Vec::new(),
        };
        g.body(&params);
        for line in g.out {
            let _ = writeln!(s, "{line}");
        }
        let _ = writeln!(s, "    }}");
    }
    let _ = writeln!(s, "}}");
    s
}

pub fn random_victim<R: Rng>(rng: &mut R, shape: &VictimShape, name: &str) -> Contract {
    let text = random_victim_text(rng, shape, name);
    parse_contract(&text).unwrap_or_else(|e| panic!("generated victim does not parse: {e}\n{text}"))
}
