use std::collections::BTreeSet;
use std::fmt;

use super::{AbiSpec, Contract, Function, JumpTarget, Stmt};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub function: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.function {
            Some(func) => write!(f, "{func}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Structural checks: interface agreement, label resolution, and
/// definite assignment of every register before use.
pub fn validate(c: &Contract, abi: &AbiSpec) -> Result<(), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let top = |message: String| Diagnostic { function: None, message };

    for comp in &abi.components {
        match c.function(&comp.name) {
            None => diags.push(top(format!("component `{}` has no matching function", comp.name))),
            Some(f) if !f.public => diags.push(top(format!("component `{}` not public", comp.name))),
            Some(f) if f.param_sorts() != comp.params => {
                let want: Vec<String> = f.params.iter().map(|p| p.sort.to_string()).collect();
                let got: Vec<String> = comp.params.iter().map(|s| s.to_string()).collect();
                diags.push(top(format!(
                    "component `{}` signature ({}) does not match function ({})",
                    comp.name,
                    got.join(", "),
                    want.join(", ")
                )));
            }
            Some(_) => {}
        }
    }

    for f in &c.functions {
        check_function(c, f, &mut diags);
    }

    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}

fn check_function(c: &Contract, f: &Function, diags: &mut Vec<Diagnostic>) {
    let mut report = |message: String| diags.push(Diagnostic { function: Some(f.name.clone()), message });

    if f.body.is_empty() {
        report("empty body".into());
    }
    for p in &f.params {
        if c.slot_index(&p.name).is_some() {
            report(format!("parameter `{}` shadows a storage slot", p.name));
        }
    }
    let mut labels_ok = true;
    for (pc, s) in f.body.iter().enumerate() {
        if let Stmt::Jump { target } | Stmt::JumpI { target, .. } = s {
            if let JumpTarget::Label { name, index } = target {
                let declared = f.labels.iter().any(|(l, i)| l == name && i == index);
                if !declared || *index > f.body.len() {
                    report(format!("statement {pc}: unresolved label `{name}`"));
                    labels_ok = false;
                }
            }
        }
    }
    if !labels_ok {
        return;
    }

    // Forward must-defined analysis; `None` is the lattice top (unreached).
    let n = f.body.len();
    let entry: BTreeSet<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
    let lengths: Vec<String> = f.entry_registers();
    let entry: BTreeSet<&str> = entry.into_iter().chain(lengths.iter().map(String::as_str)).collect();
    let mut ins: Vec<Option<BTreeSet<&str>>> = vec![None; n + 1];
    ins[0] = Some(entry);
    let mut changed = true;
    while changed {
        changed = false;
        for pc in 0..n {
            let Some(mut out) = ins[pc].clone() else { continue };
            if let Some(d) = f.body[pc].defines() {
                out.insert(d);
            }
            for succ in f.body[pc].successors(pc).into_iter().flatten() {
                let merged = match &ins[succ] {
                    None => out.clone(),
                    Some(cur) => cur.intersection(&out).copied().collect(),
                };
                if ins[succ].as_ref() != Some(&merged) {
                    ins[succ] = Some(merged);
                    changed = true;
                }
            }
        }
    }
    for (pc, s) in f.body.iter().enumerate() {
        let Some(defined) = &ins[pc] else { continue };
        for r in s.uses() {
            if !defined.contains(r) {
                report(format!("statement {pc}: register `{r}` may be read before assignment"));
            }
        }
    }
}
