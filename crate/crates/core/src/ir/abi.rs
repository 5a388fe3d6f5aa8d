use serde_json::{json, Value};
use thiserror::Error;

use super::{Contract, ParamSort};

#[derive(Debug, Error)]
pub enum AbiError {
    #[error("malformed ABI JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ABI must be a JSON array")]
    NotArray,
    #[error("ABI entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("unknown ABI type `{ty}` for parameter `{param}` of `{function}`")]
    UnknownType { function: String, param: String, ty: String },
}

/// One public method: its name and parameter sorts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbiComponent {
    pub name: String,
    pub params: Vec<ParamSort>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbiSpec {
    pub components: Vec<AbiComponent>,
}

impl AbiSpec {
    /// Interface exposing every public function of `c`, in declaration order.
    pub fn from_contract(c: &Contract) -> AbiSpec {
        AbiSpec {
            components: c
                .public_functions()
                .map(|f| AbiComponent { name: f.name.clone(), params: f.param_sorts() })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn to_json(&self, c: &Contract) -> Value {
        let entries: Vec<Value> = self
            .components
            .iter()
            .map(|comp| {
                let names: Vec<String> = match c.function(&comp.name) {
                    Some(f) => f.params.iter().map(|p| p.name.clone()).collect(),
                    None => (0..comp.params.len()).map(|i| format!("arg{i}")).collect(),
                };
                let inputs: Vec<Value> = comp
                    .params
                    .iter()
                    .zip(names)
                    .map(|(s, n)| json!({ "name": n, "type": solidity_type(*s) }))
                    .collect();
                json!({ "inputs": inputs, "name": comp.name, "type": "function" })
            })
            .collect();
        Value::Array(entries)
    }
}

fn solidity_type(s: ParamSort) -> &'static str {
    match s {
        ParamSort::Bool => "bool",
        ParamSort::Word => "uint256",
        ParamSort::Address => "address",
        ParamSort::WordArray => "uint256[]",
    }
}

fn scalar_sort(ty: &str) -> Option<ParamSort> {
    let sized = |rest: &str, lo: u32, hi: u32, step: u32| {
        rest.is_empty()
            || rest.parse::<u32>().map_or(false, |n| n >= lo && n <= hi && n % step == 0)
    };
    match ty {
        "bool" => Some(ParamSort::Bool),
        "address" => Some(ParamSort::Address),
        _ => {
            if let Some(rest) = ty.strip_prefix("uint").or_else(|| ty.strip_prefix("int")) {
                sized(rest, 8, 256, 8).then_some(ParamSort::Word)
            } else if let Some(rest) = ty.strip_prefix("bytes") {
                (!rest.is_empty() && sized(rest, 1, 32, 1)).then_some(ParamSort::Word)
            } else {
                None
            }
        }
    }
}

fn param_sort(ty: &str) -> Option<ParamSort> {
    match ty.strip_suffix("[]") {
        Some(elem) => scalar_sort(elem).filter(|s| *s != ParamSort::Bool).map(|_| ParamSort::WordArray),
        None => scalar_sort(ty),
    }
}

/// Parses a Solidity-style JSON interface. Non-function entries are skipped.
pub fn parse_abi(text: &str) -> Result<AbiSpec, AbiError> {
    let v: Value = serde_json::from_str(text)?;
    let Value::Array(entries) = v else { return Err(AbiError::NotArray) };
    let mut components = Vec::new();
    for (index, entry) in entries.iter().enumerate() {
        let bad = |message: &str| AbiError::Entry { index, message: message.to_string() };
        let obj = entry.as_object().ok_or_else(|| bad("entry is not an object"))?;
        // Solidity omits "type" for functions in some older ABIs.
        let kind = obj.get("type").and_then(Value::as_str).unwrap_or("function");
        if kind != "function" {
            continue;
        }
        let name = obj.get("name").and_then(Value::as_str).ok_or_else(|| bad("missing name"))?;
        let inputs = match obj.get("inputs") {
            None => Vec::new(),
            Some(Value::Array(xs)) => xs.clone(),
            Some(_) => return Err(bad("inputs is not an array")),
        };
        let mut params = Vec::new();
        for (i, input) in inputs.iter().enumerate() {
            let ty = input.get("type").and_then(Value::as_str).ok_or_else(|| bad("input missing type"))?;
            let pname = input
                .get("name")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("arg{i}"));
            let sort = param_sort(ty).ok_or_else(|| AbiError::UnknownType {
                function: name.to_string(),
                param: pname,
                ty: ty.to_string(),
            })?;
            params.push(sort);
        }
        components.push(AbiComponent { name: name.to_string(), params });
    }
    Ok(AbiSpec { components })
}
