//! The contract intermediate language: a three-address, register-based
//! language with explicit storage, memory, hashing and value transfer.
//!
//! Contracts are read from a line-oriented text format ([`parse_contract`])
//! and paired with a JSON interface description ([`parse_abi`]).

mod abi;
mod parse;
mod print;
mod validate;
pub mod word;

use std::fmt;

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

pub use abi::{parse_abi, AbiComponent, AbiError, AbiSpec};
pub use parse::{parse_contract, ParseError};
pub use print::print_contract;
pub use validate::{validate, Diagnostic};
pub use word::{Width, Word};

/// Name of the implicit label that aborts the current invocation.
pub const REVERT_LABEL: &str = "REVERT";

/// Parameter sorts exposed through the interface description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSort {
    Bool,
    Word,
    Address,
    WordArray,
}

impl ParamSort {
    pub fn is_array(self) -> bool {
        matches!(self, ParamSort::WordArray)
    }
}

impl fmt::Display for ParamSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamSort::Bool => "bool",
            ParamSort::Word => "word",
            ParamSort::Address => "address",
            ParamSort::WordArray => "word[]",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotSort {
    Word,
    Bool,
    /// `word -> word` mapping; entries live at `sha3(slot, key)`.
    Map,
}

impl fmt::Display for SlotSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotSort::Word => "word",
            SlotSort::Bool => "bool",
            SlotSort::Map => "map",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Word(U256),
    Bool(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Word(v) if *v < U256::from(1u64 << 16) => write!(f, "{}", v),
            Literal::Word(v) => write!(f, "{:#x}", v),
            Literal::Bool(b) => write!(f, "{}", b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn is_arithmetic(self) -> bool {
        !self.is_comparison() && !self.is_logical() && !matches!(self, BinOp::Eq | BinOp::Ne)
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => 4,
            BinOp::BitOr => 5,
            BinOp::BitXor => 6,
            BinOp::BitAnd => 7,
            BinOp::Shl | BinOp::Shr => 8,
            BinOp::Add | BinOp::Sub => 9,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnOp {
    Not,
}

/// Right-hand-side expressions. A bare storage slot name denotes the slot's
/// location (its declaration index).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Literal),
    Reg(String),
    Slot { name: String, index: usize },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn reg(name: impl Into<String>) -> Expr {
        Expr::Reg(name.into())
    }

    pub fn word(value: u64) -> Expr {
        Expr::Const(Literal::Word(U256::from(value)))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Registers read by this expression, in left-to-right order.
    pub fn registers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_registers(&mut out);
        out
    }

    fn collect_registers<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Reg(r) => out.push(r),
            Expr::Const(_) | Expr::Slot { .. } => {}
            Expr::Unary(_, e) => e.collect_registers(out),
            Expr::Binary(_, a, b) => {
                a.collect_registers(out);
                b.collect_registers(out);
            }
        }
    }
}

/// Environment reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvRead {
    Balance,
    Gas,
    Address,
    Timestamp,
    Caller,
}

impl EnvRead {
    pub fn keyword(self) -> &'static str {
        match self {
            EnvRead::Balance => "balance",
            EnvRead::Gas => "gas",
            EnvRead::Address => "address",
            EnvRead::Timestamp => "timestamp",
            EnvRead::Caller => "caller",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum JumpTarget {
    Label { name: String, index: usize },
    Revert,
}

impl JumpTarget {
    pub fn name(&self) -> &str {
        match self {
            JumpTarget::Label { name, .. } => name,
            JumpTarget::Revert => REVERT_LABEL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign { dst: String, expr: Expr },
    MLoad { dst: String, addr: Expr },
    MStore { addr: Expr, value: Expr },
    SLoad { dst: String, key: Expr },
    SStore { key: Expr, value: Expr },
    Sha3 { dst: String, lhs: Expr, rhs: Expr },
    Jump { target: JumpTarget },
    JumpI { target: JumpTarget, cond: Expr },
    Call { dst: Option<String>, gas: Expr, addr: Expr, value: Expr },
    SelfDestruct { addr: Expr },
    Env { dst: String, read: EnvRead },
    NoOp,
    Stop,
}

impl Stmt {
    /// Register written by this statement, if any.
    pub fn defines(&self) -> Option<&str> {
        match self {
            Stmt::Assign { dst, .. }
            | Stmt::MLoad { dst, .. }
            | Stmt::SLoad { dst, .. }
            | Stmt::Sha3 { dst, .. }
            | Stmt::Env { dst, .. } => Some(dst),
            Stmt::Call { dst, .. } => dst.as_deref(),
            _ => None,
        }
    }

    /// Registers read by this statement.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            Stmt::Assign { expr, .. } => expr.registers(),
            Stmt::MLoad { addr, .. } => addr.registers(),
            Stmt::MStore { addr, value } => [addr.registers(), value.registers()].concat(),
            Stmt::SLoad { key, .. } => key.registers(),
            Stmt::SStore { key, value } => [key.registers(), value.registers()].concat(),
            Stmt::Sha3 { lhs, rhs, .. } => [lhs.registers(), rhs.registers()].concat(),
            Stmt::JumpI { cond, .. } => cond.registers(),
            Stmt::Call { gas, addr, value, .. } => {
                [gas.registers(), addr.registers(), value.registers()].concat()
            }
            Stmt::SelfDestruct { addr } => addr.registers(),
            Stmt::Jump { .. } | Stmt::Env { .. } | Stmt::NoOp | Stmt::Stop => Vec::new(),
        }
    }

    /// Successor statement indices; `None` entries mean "leaves the function"
    /// (normal exit or revert).
    pub fn successors(&self, pc: usize) -> Vec<Option<usize>> {
        let target = |t: &JumpTarget| match t {
            JumpTarget::Label { index, .. } => Some(*index),
            JumpTarget::Revert => None,
        };
        match self {
            Stmt::Jump { target: t } => vec![target(t)],
            Stmt::JumpI { target: t, .. } => vec![Some(pc + 1), target(t)],
            Stmt::Stop | Stmt::SelfDestruct { .. } => vec![None],
            _ => vec![Some(pc + 1)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub sort: ParamSort,
}

/// Register holding the length of an array parameter.
pub fn array_length_register(param: &str) -> String {
    format!("{param}.length")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub public: bool,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Label name to statement index; an index equal to `body.len()` marks
    /// the function end.
    pub labels: Vec<(String, usize)>,
}

impl Function {
    pub fn param_sorts(&self) -> Vec<ParamSort> {
        self.params.iter().map(|p| p.sort).collect()
    }

    /// Registers bound on entry: parameters plus array length registers.
    pub fn entry_registers(&self) -> Vec<String> {
        let mut regs = Vec::new();
        for p in &self.params {
            regs.push(p.name.clone());
            if p.sort.is_array() {
                regs.push(array_length_register(&p.name));
            }
        }
        regs
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageDecl {
    pub name: String,
    pub sort: SlotSort,
    pub init: Option<Literal>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contract {
    pub name: String,
    pub storage: Vec<StorageDecl>,
    pub functions: Vec<Function>,
}

impl Contract {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.storage.iter().position(|s| s.name == name)
    }

    pub fn public_functions(&self) -> impl Iterator<Item = &Function> {
        self.functions.iter().filter(|f| f.public)
    }
}

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_contract(self))
    }
}
