use std::collections::HashMap;

use ruint::aliases::U256;
use thiserror::Error;

use super::word::parse_u256;
use super::{
    BinOp, Contract, EnvRead, Expr, Function, JumpTarget, Literal, Param, ParamSort, SlotSort,
    Stmt, StorageDecl, UnOp, REVERT_LABEL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(U256),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

// Longest symbols first so `<<` wins over `<`.
const SYMBOLS: &[&str] = &[
    ":=", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "[]", "+", "-", "*", "/", "%", "&",
    "|", "^", "<", ">", "!", "(", ")", "{", "}", ",", ";", ":", "=",
];

const KEYWORDS: &[&str] = &[
    "contract", "storage", "init", "fn", "public", "mload", "mstore", "sload", "sstore", "sha3",
    "jump", "jumpi", "call", "selfdestruct", "balance", "gas", "address", "timestamp", "caller",
    "nop", "no-op", "stop", "revert", "true", "false",
];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = body.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                let mut word: String = chars[start..i].iter().collect();
                // `no-op` is the one hyphenated keyword.
                if word == "no" && chars[i..].starts_with(&['-', 'o', 'p']) {
                    let end = i + 3;
                    if end >= chars.len() || !(chars[end].is_ascii_alphanumeric() || chars[end] == '_') {
                        word = "no-op".into();
                        i = end;
                    }
                }
                out.push(Token { tok: Tok::Ident(word), line, col });
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                let value = parse_u256(&lit).ok_or_else(|| ParseError {
                    line,
                    col,
                    message: format!("bad numeric literal `{lit}`"),
                })?;
                out.push(Token { tok: Tok::Number(value), line, col });
                continue;
            }
            let rest: String = chars[i..].iter().take(2).collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(sym) => {
                    out.push(Token { tok: Tok::Sym(sym), line, col });
                    i += sym.len();
                }
                None => {
                    return Err(ParseError { line, col, message: format!("unexpected character `{c}`") })
                }
            }
        }
        out.push(Token { tok: Tok::Newline, line, col: chars.len() + 1 });
    }
    let line = text.lines().count().max(1);
    out.push(Token { tok: Tok::Eof, line, col: 1 });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    slots: HashMap<String, usize>,
}

/// Pending jump whose label is resolved once the whole body is read.
struct Fixup {
    stmt: usize,
    label: String,
    line: usize,
    col: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline) || self.is_sym(";") {
            self.bump();
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                Ok(name)
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn contract(&mut self) -> Result<Contract, ParseError> {
        self.skip_newlines();
        self.expect_kw("contract")?;
        let name = self.ident()?;
        self.skip_newlines();
        self.expect_sym("{")?;
        let mut contract = Contract { name, storage: Vec::new(), functions: Vec::new() };
        loop {
            self.skip_newlines();
            if self.is_sym("}") {
                self.bump();
                break;
            }
            if self.is_kw("storage") {
                self.storage_decl(&mut contract)?;
            } else if self.is_kw("init") {
                self.init_decl(&mut contract)?;
            } else if self.is_kw("public") || self.is_kw("fn") {
                let f = self.function()?;
                if contract.function(&f.name).is_some() {
                    return self.err(format!("duplicate function `{}`", f.name));
                }
                contract.functions.push(f);
            } else {
                return self.err(format!("expected declaration, found {}", describe(self.peek())));
            }
        }
        self.skip_newlines();
        if !matches!(self.peek(), Tok::Eof) {
            return self.err("trailing input after contract");
        }
        Ok(contract)
    }

    fn storage_decl(&mut self, c: &mut Contract) -> Result<(), ParseError> {
        self.expect_kw("storage")?;
        let name = self.ident()?;
        if self.slots.contains_key(&name) {
            return self.err(format!("duplicate storage slot `{name}`"));
        }
        self.expect_sym(":")?;
        let sort = match self.bump() {
            Tok::Ident(s) if s == "word" => SlotSort::Word,
            Tok::Ident(s) if s == "bool" => SlotSort::Bool,
            Tok::Ident(s) if s == "map" => SlotSort::Map,
            other => {
                self.pos -= 1;
                return self.err(format!("unknown storage sort {}", describe(&other)));
            }
        };
        let init = if self.is_sym("=") {
            self.bump();
            Some(self.literal(sort)?)
        } else {
            None
        };
        self.slots.insert(name.clone(), c.storage.len());
        c.storage.push(StorageDecl { name, sort, init });
        Ok(())
    }

    fn init_decl(&mut self, c: &mut Contract) -> Result<(), ParseError> {
        self.expect_kw("init")?;
        let (line, col) = self.here();
        let name = self.ident()?;
        let Some(&index) = self.slots.get(&name) else {
            return Err(ParseError { line, col, message: format!("undeclared storage slot `{name}`") });
        };
        self.expect_sym("=")?;
        let sort = c.storage[index].sort;
        c.storage[index].init = Some(self.literal(sort)?);
        Ok(())
    }

    fn literal(&mut self, sort: SlotSort) -> Result<Literal, ParseError> {
        let lit = match self.bump() {
            Tok::Number(v) => Literal::Word(v),
            Tok::Ident(s) if s == "true" => Literal::Bool(true),
            Tok::Ident(s) if s == "false" => Literal::Bool(false),
            other => {
                self.pos -= 1;
                return self.err(format!("expected literal, found {}", describe(&other)));
            }
        };
        match (sort, lit) {
            (SlotSort::Bool, Literal::Bool(_)) | (SlotSort::Word, Literal::Word(_)) => Ok(lit),
            (SlotSort::Map, _) => self.err("map slots cannot have an initializer"),
            _ => self.err(format!("initializer does not match slot sort {sort}")),
        }
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        let public = if self.is_kw("public") {
            self.bump();
            true
        } else {
            false
        };
        self.expect_kw("fn")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params: Vec<Param> = Vec::new();
        while !self.is_sym(")") {
            if !params.is_empty() {
                self.expect_sym(",")?;
            }
            let pname = self.ident()?;
            if params.iter().any(|p| p.name == pname) {
                return self.err(format!("duplicate parameter `{pname}`"));
            }
            self.expect_sym(":")?;
            let base = self.ident_or_kw()?;
            let array = if self.is_sym("[]") {
                self.bump();
                true
            } else {
                false
            };
            let sort = match (base.as_str(), array) {
                ("bool", false) => ParamSort::Bool,
                ("word", false) => ParamSort::Word,
                ("address", false) => ParamSort::Address,
                ("word" | "address", true) => ParamSort::WordArray,
                _ => return self.err(format!("unknown parameter sort `{base}`")),
            };
            params.push(Param { name: pname, sort });
        }
        self.expect_sym(")")?;
        self.skip_newlines();
        self.expect_sym("{")?;

        let mut body = Vec::new();
        let mut labels: Vec<(String, usize)> = Vec::new();
        let mut fixups = Vec::new();
        loop {
            self.skip_newlines();
            if self.is_sym("}") {
                self.bump();
                break;
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.err("unterminated function body");
            }
            // Label: `Name:` (distinct from `:=` which lexes as one symbol).
            if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym(":")) {
                let (line, col) = self.here();
                let label = self.ident()?;
                self.bump();
                if label == REVERT_LABEL || labels.iter().any(|(l, _)| *l == label) {
                    return Err(ParseError { line, col, message: format!("duplicate label `{label}`") });
                }
                labels.push((label, body.len()));
                continue;
            }
            let stmt = self.stmt(body.len(), &mut fixups)?;
            body.push(stmt);
            if !(matches!(self.peek(), Tok::Newline) || self.is_sym(";") || self.is_sym("}")) {
                return self.err(format!("expected end of statement, found {}", describe(self.peek())));
            }
        }

        for fx in fixups {
            let index = labels.iter().find(|(l, _)| *l == fx.label).map(|(_, i)| *i);
            let Some(index) = index else {
                return Err(ParseError {
                    line: fx.line,
                    col: fx.col,
                    message: format!("unresolved label `{}`", fx.label),
                });
            };
            let target = JumpTarget::Label { name: fx.label, index };
            match &mut body[fx.stmt] {
                Stmt::Jump { target: t } | Stmt::JumpI { target: t, .. } => *t = target,
                _ => unreachable!("fixup on non-jump"),
            }
        }
        Ok(Function { name, public, params, body, labels })
    }

    fn ident_or_kw(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            other => {
                self.pos -= 1;
                self.err(format!("expected identifier, found {}", describe(&other)))
            }
        }
    }

    fn jump_target(&mut self, stmt: usize, fixups: &mut Vec<Fixup>) -> Result<JumpTarget, ParseError> {
        let (line, col) = self.here();
        let label = self.ident()?;
        if label == REVERT_LABEL {
            return Ok(JumpTarget::Revert);
        }
        fixups.push(Fixup { stmt, label: label.clone(), line, col });
        Ok(JumpTarget::Label { name: label, index: usize::MAX })
    }

    fn stmt(&mut self, index: usize, fixups: &mut Vec<Fixup>) -> Result<Stmt, ParseError> {
        let Tok::Ident(head) = self.peek().clone() else {
            return self.err(format!("expected statement, found {}", describe(self.peek())));
        };
        match head.as_str() {
            "mstore" => {
                self.bump();
                let addr = self.atom()?;
                let value = self.atom()?;
                Ok(Stmt::MStore { addr, value })
            }
            "sstore" => {
                self.bump();
                let key = self.atom()?;
                let value = self.atom()?;
                Ok(Stmt::SStore { key, value })
            }
            "jump" => {
                self.bump();
                Ok(Stmt::Jump { target: self.jump_target(index, fixups)? })
            }
            "jumpi" => {
                self.bump();
                let target = self.jump_target(index, fixups)?;
                let cond = self.expr(0)?;
                Ok(Stmt::JumpI { target, cond })
            }
            "revert" => {
                self.bump();
                Ok(Stmt::Jump { target: JumpTarget::Revert })
            }
            "call" => {
                self.bump();
                self.call_operands(None)
            }
            "selfdestruct" => {
                self.bump();
                Ok(Stmt::SelfDestruct { addr: self.expr(0)? })
            }
            "nop" | "no-op" => {
                self.bump();
                Ok(Stmt::NoOp)
            }
            "stop" => {
                self.bump();
                Ok(Stmt::Stop)
            }
            _ => {
                let dst = self.ident()?;
                self.expect_sym(":=")?;
                self.rhs(dst)
            }
        }
    }

    fn call_operands(&mut self, dst: Option<String>) -> Result<Stmt, ParseError> {
        let gas = self.atom()?;
        let addr = self.atom()?;
        let value = self.atom()?;
        Ok(Stmt::Call { dst, gas, addr, value })
    }

    fn at_stmt_end(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::Eof) || self.is_sym(";") || self.is_sym("}")
    }

    fn rhs(&mut self, dst: String) -> Result<Stmt, ParseError> {
        let Tok::Ident(head) = self.peek().clone() else {
            return Ok(Stmt::Assign { dst, expr: self.expr(0)? });
        };
        let env = match head.as_str() {
            "balance" => Some(EnvRead::Balance),
            "gas" => Some(EnvRead::Gas),
            "address" => Some(EnvRead::Address),
            "timestamp" => Some(EnvRead::Timestamp),
            "caller" => Some(EnvRead::Caller),
            _ => None,
        };
        if let Some(read) = env {
            self.bump();
            if !self.at_stmt_end() {
                return self.err(format!("`{}` takes no operands", read.keyword()));
            }
            return Ok(Stmt::Env { dst, read });
        }
        match head.as_str() {
            "mload" => {
                self.bump();
                Ok(Stmt::MLoad { dst, addr: self.expr(0)? })
            }
            "sload" => {
                self.bump();
                Ok(Stmt::SLoad { dst, key: self.expr(0)? })
            }
            "sha3" => {
                self.bump();
                let lhs = self.atom()?;
                let rhs = self.atom()?;
                Ok(Stmt::Sha3 { dst, lhs, rhs })
            }
            "call" => {
                self.bump();
                self.call_operands(Some(dst))
            }
            _ => Ok(Stmt::Assign { dst, expr: self.expr(0)? }),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::Const(Literal::Word(v)))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Const(Literal::Bool(s == "true")))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                Ok(match self.slots.get(&name) {
                    Some(&index) => Expr::Slot { name, index },
                    None => Expr::Reg(name),
                })
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr(0)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            other => self.err(format!("expected operand, found {}", describe(&other))),
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_sym("!") {
            self.bump();
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(e)));
        }
        self.atom()
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let Some(op) = self.binop() else { break };
            let prec = op.precedence();
            if prec <= min_prec {
                break;
            }
            self.bump();
            let rhs = self.expr(prec)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else { return None };
        Some(match *s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Mod,
            "&" => BinOp::BitAnd,
            "|" => BinOp::BitOr,
            "^" => BinOp::BitXor,
            "<<" => BinOp::Shl,
            ">>" => BinOp::Shr,
            "<" => BinOp::Lt,
            ">" => BinOp::Gt,
            "<=" => BinOp::Le,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(v) => format!("number {v}"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses the textual contract format.
pub fn parse_contract(text: &str) -> Result<Contract, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, slots: HashMap::new() };
    p.contract()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_contract() {
        let c = parse_contract("contract C {}").unwrap();
        assert_eq!(c.name, "C");
        assert!(c.functions.is_empty());
        assert!(c.storage.is_empty());
    }

    #[test]
    fn labels_and_jumps_resolve() {
        let src = "contract C {\n  public fn f(x: word) {\n    jumpi L1 x > 3\n    y := x + 1\n  L1:\n    stop\n  }\n}";
        let c = parse_contract(src).unwrap();
        let f = c.function("f").unwrap();
        assert_eq!(f.labels, vec![("L1".to_string(), 2)]);
        match &f.body[0] {
            Stmt::JumpI { target: JumpTarget::Label { index, .. }, .. } => assert_eq!(*index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unresolved_label_is_an_error() {
        let err = parse_contract("contract C {\n fn f() {\n  jump L9\n }\n}").unwrap_err();
        assert!(err.message.contains("L9"), "{err}");
        assert_eq!(err.line, 3);
    }

    #[test]
    fn duplicate_label_is_an_error() {
        let err = parse_contract("contract C {\n fn f() {\n L: nop\n L: nop\n }\n}").unwrap_err();
        assert!(err.message.contains("duplicate label"));
    }

    #[test]
    fn init_of_undeclared_slot_is_an_error() {
        let err = parse_contract("contract C {\n init nope = 1\n}").unwrap_err();
        assert!(err.message.contains("undeclared storage slot"));
    }

    #[test]
    fn precedence_and_slots() {
        let src = "contract C {\n storage s: word = 7\n fn f(a: word) {\n r := a + 2 * 3 == 7 && !false\n sstore s r\n }\n}";
        let c = parse_contract(src).unwrap();
        assert_eq!(c.storage[0].init, Some(Literal::Word(U256::from(7u8))));
        let f = c.function("f").unwrap();
        let Stmt::Assign { expr, .. } = &f.body[0] else { panic!() };
        let Expr::Binary(BinOp::And, lhs, _) = expr else { panic!("{expr:?}") };
        let Expr::Binary(BinOp::Eq, sum, _) = lhs.as_ref() else { panic!() };
        assert!(matches!(sum.as_ref(), Expr::Binary(BinOp::Add, _, _)));
        assert!(matches!(&f.body[1], Stmt::SStore { key: Expr::Slot { index: 0, .. }, .. }));
    }

    #[test]
    fn no_op_and_env_reads() {
        let src = "contract C { fn f() { no-op; t := timestamp; g := gas; stop } }";
        let c = parse_contract(src).unwrap();
        let f = c.function("f").unwrap();
        assert_eq!(f.body[0], Stmt::NoOp);
        assert!(matches!(f.body[1], Stmt::Env { read: EnvRead::Timestamp, .. }));
        assert!(matches!(f.body[2], Stmt::Env { read: EnvRead::Gas, .. }));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_contract("contract C {\n fn f() {\n  r := + 1\n }\n}").unwrap_err();
        assert_eq!((err.line, err.col), (3, 8));
    }
}
