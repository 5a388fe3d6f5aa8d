//! External solver process speaking SMT-LIB v2 over pipes.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use ruint::aliases::U256;

use super::encode::encode;
use crate::ir::{Width, Word};
use crate::state::{Assignment, CVal, Interpretation, Sort, SymExpr, SymVar, Uf};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    /// Command line; the first word is the program.
    pub command: String,
    pub timeout: Duration,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { command: "z3 -in -smt2".into(), timeout: Duration::from_secs(600), seed: 0 }
    }
}

/// Satisfying assignment: variable values plus the value of every
/// uninterpreted application occurring in the formula.
#[derive(Clone, Debug, Default)]
pub struct Model {
    pub vars: BTreeMap<SymVar, CVal>,
    pub apps: HashMap<SymExpr, Word>,
}

impl Model {
    pub fn value(&self, v: &SymVar) -> Option<CVal> {
        self.vars.get(v).copied()
    }

    /// Variable values only; applications take their concrete semantics
    /// and unassigned variables default to zero.
    pub fn to_assignment(&self) -> Assignment {
        Assignment { vars: self.vars.iter().map(|(k, v)| (k.clone(), *v)).collect(), default_zero: true }
    }
}

impl Interpretation for Model {
    fn var(&self, v: &SymVar) -> Option<CVal> {
        Some(self.vars.get(v).copied().unwrap_or(match v.sort() {
            Sort::Bool => CVal::Bool(false),
            Sort::Word(w) => CVal::Word(Word::zero(w)),
        }))
    }

    fn app(&self, _uf: &Uf, _args: &[Word], term: &SymExpr) -> Option<Word> {
        self.apps.get(term).copied()
    }
}

#[derive(Clone, Debug)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
    pub fn is_unknown(&self) -> bool {
        matches!(self, SatResult::Unknown(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub calls: usize,
    pub unknowns: usize,
    pub restarts: usize,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<String>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Failure {
    Timeout,
    Died,
    Protocol(String),
}

impl Process {
    fn spawn(cfg: &SolverConfig) -> Result<Process, String> {
        let mut parts = cfg.command.split_whitespace();
        let prog = parts.next().ok_or("empty solver command")?;
        let mut child = Command::new(prog)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("cannot start `{}`: {e}", cfg.command))?;
        let stdin = child.stdin.take().ok_or("no solver stdin")?;
        let stdout = child.stdout.take().ok_or("no solver stdout")?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut p = Process { child, stdin, rx };
        let init = format!(
            "(set-option :print-success false)\n(set-option :produce-models true)\n\
             (set-option :smt.random_seed {})\n(set-option :timeout {})\n(set-logic QF_UFBV)\n",
            cfg.seed % (1 << 31),
            cfg.timeout.as_millis().min(u32::MAX as u128)
        );
        p.send(&init).map_err(|_| "solver closed its input".to_string())?;
        Ok(p)
    }

    fn send(&mut self, text: &str) -> Result<(), Failure> {
        self.stdin.write_all(text.as_bytes()).and_then(|_| self.stdin.flush()).map_err(|_| Failure::Died)
    }

    /// One balanced s-expression or bare atom.
    fn read(&mut self, deadline: Instant) -> Result<String, Failure> {
        let mut buf = String::new();
        let mut depth: i64 = 0;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.rx.recv_timeout(left) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err(Failure::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(Failure::Died),
            };
            depth += line.matches('(').count() as i64 - line.matches(')').count() as i64;
            buf.push_str(&line);
            buf.push('\n');
            if depth <= 0 && !buf.trim().is_empty() {
                let out = buf.trim().to_string();
                if out.starts_with("(error") {
                    return Err(Failure::Protocol(out));
                }
                return Ok(out);
            }
        }
    }
}

/// Handle to one solver process. Not shared between threads; each worker
/// owns its own.
pub struct Solver {
    cfg: SolverConfig,
    proc: Option<Process>,
    pub stats: SolverStats,
}

enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexp(text: &str) -> Option<Sexp> {
    let mut toks: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in text.chars() {
        if quoted {
            cur.push(ch);
            if ch == '|' {
                quoted = false;
            }
            continue;
        }
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push(ch.to_string());
            }
            '|' => {
                cur.push(ch);
                quoted = true;
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    fn go(toks: &[String], i: &mut usize) -> Option<Sexp> {
        let t = toks.get(*i)?;
        *i += 1;
        if t == "(" {
            let mut items = Vec::new();
            while toks.get(*i)? != ")" {
                items.push(go(toks, i)?);
            }
            *i += 1;
            Some(Sexp::List(items))
        } else {
            Some(Sexp::Atom(t.clone()))
        }
    }
    go(&toks, &mut 0)
}

fn parse_value(s: &Sexp, sort: Sort) -> Option<CVal> {
    match (s, sort) {
        (Sexp::Atom(a), Sort::Bool) => match a.as_str() {
            "true" => Some(CVal::Bool(true)),
            "false" => Some(CVal::Bool(false)),
            _ => None,
        },
        (Sexp::Atom(a), Sort::Word(w)) => {
            let v = if let Some(h) = a.strip_prefix("#x") {
                U256::from_str_radix(h, 16).ok()?
            } else if let Some(b) = a.strip_prefix("#b") {
                U256::from_str_radix(b, 2).ok()?
            } else {
                return None;
            };
            Some(CVal::Word(Word::new(v, w)))
        }
        (Sexp::List(items), Sort::Word(w)) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(bv), Sexp::Atom(_)] if u == "_" => {
                let v = U256::from_str_radix(bv.strip_prefix("bv")?, 10).ok()?;
                Some(CVal::Word(Word::new(v, w)))
            }
            _ => None,
        },
        _ => None,
    }
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Solver {
        Solver { cfg, proc: None, stats: SolverStats::default() }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Starts the process eagerly so a missing solver is reported early.
    pub fn probe(&mut self) -> Result<(), String> {
        if self.proc.is_none() {
            self.proc = Some(Process::spawn(&self.cfg)?);
        }
        Ok(())
    }

    fn unknown(&mut self, why: String) -> SatResult {
        self.stats.unknowns += 1;
        SatResult::Unknown(why)
    }

    fn restart(&mut self) {
        self.proc = None;
        self.stats.restarts += 1;
    }

    /// Satisfiability of a boolean expression. Models are re-checked by
    /// evaluating `f` before being returned.
    pub fn check(&mut self, f: &SymExpr) -> SatResult {
        debug_assert_eq!(f.sort(), Sort::Bool);
        if f.is_true() {
            return SatResult::Sat(Model::default());
        }
        if f.is_false() {
            return SatResult::Unsat;
        }
        if let Err(e) = self.probe() {
            return self.unknown(e);
        }
        self.stats.calls += 1;
        let enc = encode(f);
        let deadline = Instant::now() + self.cfg.timeout + Duration::from_millis(500);
        let p = self.proc.as_mut().expect("probed");
        let query = format!("(push 1)\n{}(check-sat)\n", enc.script);
        let answer = p.send(&query).and_then(|_| p.read(deadline));
        let result = match answer.as_deref() {
            Ok("sat") => {
                let names: Vec<&str> =
                    enc.vars.iter().map(|(_, n)| n.as_str()).chain(enc.apps.iter().map(|(_, n)| n.as_str())).collect();
                let got = p.send(&format!("(get-value ({}))\n", names.join(" "))).and_then(|_| p.read(deadline));
                match got {
                    Ok(text) => match self.model_from(&text, &enc) {
                        Some(m) if f.eval(&m) == Some(CVal::Bool(true)) => SatResult::Sat(m),
                        Some(_) => SatResult::Unknown("model failed re-check".into()),
                        None => SatResult::Unknown(format!("unparsable model: {text}")),
                    },
                    Err(e) => return self.fail(e),
                }
            }
            Ok("unsat") => SatResult::Unsat,
            Ok(other) => SatResult::Unknown(format!("solver answered `{other}`")),
            Err(_) => return self.fail(answer.unwrap_err()),
        };
        let p = self.proc.as_mut().expect("probed");
        if p.send("(pop 1)\n").is_err() {
            self.restart();
        }
        if let SatResult::Unknown(why) = result {
            return self.unknown(why);
        }
        result
    }

    fn fail(&mut self, f: Failure) -> SatResult {
        self.restart();
        let why = match f {
            Failure::Timeout => "timeout".to_string(),
            Failure::Died => "solver process exited".to_string(),
            Failure::Protocol(e) => format!("solver error: {e}"),
        };
        self.unknown(why)
    }

    fn model_from(&self, text: &str, enc: &super::encode::Encoding) -> Option<Model> {
        let Sexp::List(pairs) = parse_sexp(text)? else { return None };
        let mut values: HashMap<String, &Sexp> = HashMap::new();
        for p in &pairs {
            if let Sexp::List(kv) = p {
                if let [Sexp::Atom(k), v] = kv.as_slice() {
                    values.insert(k.clone(), v);
                }
            }
        }
        let mut m = Model::default();
        for (v, n) in &enc.vars {
            m.vars.insert(v.clone(), parse_value(values.get(n)?, v.sort())?);
        }
        for (e, n) in &enc.apps {
            let w = e.width().unwrap_or(Width::W256);
            let CVal::Word(x) = parse_value(values.get(n)?, Sort::Word(w))? else { return None };
            m.apps.insert(e.clone(), x);
        }
        Some(m)
    }
}
