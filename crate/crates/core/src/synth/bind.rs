//! From solver models to concrete attacks, and the replay check that has
//! to pass before an attack is reported.

use ruint::aliases::U256;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::HoistedProgram;
use crate::interp::concrete::{replay, ConcreteArg, ConcreteAttack, ConcreteCall, ConcreteKind, Replay};
use crate::interp::{ArgValue, EvalConfig, EvalResult, EventKind};
use crate::ir::word::parse_u256;
use crate::ir::{Contract, Width, Word};
use crate::queries::Disjunct;
use crate::smt::Model;
use crate::state::{Assignment, CVal, Environment, Sort, StateConfig, SymExpr, SymVar};

#[derive(Clone, Debug)]
pub struct Binding {
    pub attack: ConcreteAttack,
    /// Argument variables the model left open; bound to zero.
    pub defaulted: Vec<String>,
    /// Model values under the replay's semantics for hashes and calls.
    pub assignment: Assignment,
}

fn value_of(model: &Model, v: &SymVar, defaulted: &mut Vec<String>) -> CVal {
    model.value(v).unwrap_or_else(|| {
        defaulted.push(v.name().to_string());
        match v.sort() {
            Sort::Bool => CVal::Bool(false),
            Sort::Word(w) => CVal::Word(Word::zero(w)),
        }
    })
}

fn word_of(c: CVal, w: Width) -> Word {
    match c {
        CVal::Word(x) => x,
        CVal::Bool(b) => Word::from_u64(b as u64, w),
    }
}

/// Literal arguments for every slot of `h`; the sender and timestamp come
/// from the model when they are symbolic.
pub fn bind(model: &Model, h: &HoistedProgram, env: &Environment, width: Width) -> Binding {
    let mut defaulted = Vec::new();
    let mut assignment = model.to_assignment();
    let mut calls = Vec::new();
    for slot in &h.slots {
        let mut args = Vec::new();
        for a in &slot.args {
            let var = |e: &SymExpr| e.as_var().cloned().expect("argument template is a variable");
            match a {
                ArgValue::Scalar(e) => {
                    let v = var(e);
                    let c = value_of(model, &v, &mut defaulted);
                    assignment.set(&v, c);
                    args.push(ConcreteArg::Scalar(c));
                }
                ArgValue::Array { len, elems } => {
                    let lv = var(len);
                    let l = value_of(model, &lv, &mut defaulted);
                    assignment.set(&lv, l);
                    let mut ws = Vec::new();
                    for e in elems {
                        let ev = var(e);
                        let c = value_of(model, &ev, &mut defaulted);
                        assignment.set(&ev, c);
                        ws.push(word_of(c, width));
                    }
                    args.push(ConcreteArg::Array { length: word_of(l, width), elems: ws });
                }
            }
        }
        calls.push(ConcreteCall { function: slot.function.clone(), args });
    }
    let mut env_value = |v: &Option<SymVar>| {
        v.as_ref().map(|v| {
            let c = value_of(model, v, &mut Vec::new());
            assignment.set(v, c);
            word_of(c, width).value()
        })
    };
    let caller = env_value(&env.caller);
    let timestamp = env_value(&env.timestamp);
    Binding { attack: ConcreteAttack { calls, caller, timestamp }, defaulted, assignment }
}

#[derive(Clone, Debug)]
pub struct Validation {
    pub ok: bool,
    pub reason: Option<String>,
    pub transcript: Vec<String>,
    pub digest: String,
}

fn digest(lines: &[String]) -> String {
    let mut h = Sha256::new();
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    let d = h.finalize();
    d[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn same(a: Option<CVal>, b: CVal, w: Width) -> bool {
    match a {
        Some(x) => word_of(x, w) == word_of(b, w),
        None => false,
    }
}

/// Replays the attack and checks that the disjunct holds under the replay's
/// semantics and that every event it names actually happened with the
/// values the symbolic trace predicts.
pub fn validate_replay(
    c: &Contract,
    b: &Binding,
    res: &EvalResult,
    d: &Disjunct,
    state_cfg: &StateConfig,
    eval_cfg: &EvalConfig,
) -> Validation {
    let w = state_cfg.width;
    let rep: Replay = match replay(c, &b.attack, state_cfg, eval_cfg) {
        Ok(r) => r,
        Err(e) => {
            return Validation { ok: false, reason: Some(e.to_string()), transcript: Vec::new(), digest: String::new() }
        }
    };
    let mut transcript: Vec<String> = Vec::new();
    for (i, (call, st)) in b.attack.calls.iter().zip(&rep.statuses).enumerate() {
        transcript.push(format!("#{i} {} -> {:?}", call.function, st));
    }
    transcript.extend(rep.trace.iter().map(|e| e.to_string()));
    let dg = digest(&transcript);
    let fail = |why: String, transcript: Vec<String>| Validation { ok: false, reason: Some(why), transcript, digest: dg.clone() };

    if d.formula.eval(&b.assignment) != Some(CVal::Bool(true)) {
        return fail(format!("`{}` does not hold under concrete semantics", d.label), transcript);
    }
    for &i in &d.events {
        let ev = &res.trace[i];
        if ev.guard.eval(&b.assignment) != Some(CVal::Bool(true)) {
            return fail(format!("event {i} ({}) is not enabled", ev.kind.name()), transcript);
        }
        let found = rep.trace.iter().any(|ce| {
            if ce.tag != ev.tag || ce.site != ev.site {
                return false;
            }
            match (&ev.kind, &ce.kind) {
                (EventKind::Call { addr, value, selfdestruct, .. }, ConcreteKind::Call { addr: ca, value: cv, selfdestruct: cs, .. }) => {
                    selfdestruct == cs
                        && same(addr.eval(&b.assignment), CVal::Word(*ca), w)
                        && same(value.eval(&b.assignment), CVal::Word(*cv), w)
                }
                (EventKind::Store { loc, value }, ConcreteKind::Store { loc: cl, value: cv }) => {
                    same(loc.eval(&b.assignment), CVal::Word(*cl), w) && same(value.eval(&b.assignment), *cv, w)
                }
                _ => false,
            }
        });
        if !found {
            return fail(format!("replay has no {} at {} {} with the predicted values", ev.kind.name(), ev.tag, ev.site), transcript);
        }
    }
    Validation { ok: true, reason: None, transcript, digest: dg }
}

fn cval_json(c: &CVal) -> Value {
    match c {
        CVal::Bool(b) => json!(b),
        CVal::Word(w) => json!(w.to_hex()),
    }
}

pub fn attack_to_json(a: &ConcreteAttack) -> Value {
    let calls: Vec<Value> = a
        .calls
        .iter()
        .map(|c| {
            let args: Vec<Value> = c
                .args
                .iter()
                .map(|x| match x {
                    ConcreteArg::Scalar(v) => cval_json(v),
                    ConcreteArg::Array { length, elems } => json!({
                        "length": length.to_hex(),
                        "elems": elems.iter().map(|e| e.to_hex()).collect::<Vec<_>>(),
                    }),
                })
                .collect();
            json!({ "function": c.function, "args": args })
        })
        .collect();
    let hex = |v: &Option<U256>| v.map(|x| format!("{x:#x}"));
    json!({ "calls": calls, "caller": hex(&a.caller), "timestamp": hex(&a.timestamp) })
}

fn word_json(v: &Value, w: Width) -> Result<Word, String> {
    match v {
        Value::String(s) => parse_u256(s).map(|x| Word::new(x, w)).ok_or_else(|| format!("bad number `{s}`")),
        Value::Number(n) => n.as_u64().map(|x| Word::from_u64(x, w)).ok_or_else(|| format!("bad number `{n}`")),
        other => Err(format!("expected a number, got {other}")),
    }
}

/// Reads the format written by [`attack_to_json`]. Numbers may be hex or
/// decimal strings, or JSON integers.
pub fn attack_from_json(v: &Value, width: Width) -> Result<ConcreteAttack, String> {
    let calls = v.get("calls").and_then(Value::as_array).ok_or("missing `calls` array")?;
    let mut out = ConcreteAttack::default();
    for c in calls {
        let function = c.get("function").and_then(Value::as_str).ok_or("call without `function`")?.to_string();
        let mut args = Vec::new();
        for a in c.get("args").and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]) {
            args.push(match a {
                Value::Bool(b) => ConcreteArg::Scalar(CVal::Bool(*b)),
                Value::Object(o) => {
                    let length = word_json(o.get("length").ok_or("array without `length`")?, width)?;
                    let elems = o
                        .get("elems")
                        .and_then(Value::as_array)
                        .ok_or("array without `elems`")?
                        .iter()
                        .map(|e| word_json(e, width))
                        .collect::<Result<_, _>>()?;
                    ConcreteArg::Array { length, elems }
                }
                other => ConcreteArg::Scalar(CVal::Word(word_json(other, width)?)),
            });
        }
        out.calls.push(ConcreteCall { function, args });
    }
    let opt = |k: &str| -> Result<Option<U256>, String> {
        match v.get(k) {
            None | Some(Value::Null) => Ok(None),
            Some(x) => word_json(x, Width::W256).map(|w| Some(w.value())),
        }
    };
    out.caller = opt("caller")?;
    out.timestamp = opt("timestamp")?;
    Ok(out)
}
