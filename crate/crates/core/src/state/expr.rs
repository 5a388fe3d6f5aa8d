//! Hash-consed symbolic expressions.
//!
//! Every node is interned, so structural equality is pointer equality and
//! shared subterms are stored once. Constructors fold literals and apply a
//! handful of exact algebraic identities (`x + 0`, `ite(true, a, b)`, ...).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use rustc_hash::{FxHashMap, FxHashSet, FxHasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, Weak};

use ruint::aliases::U256;

use crate::ir::{BinOp, Width, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Bool,
    Word(Width),
}

impl Sort {
    pub fn width(self) -> Option<Width> {
        match self {
            Sort::Word(w) => Some(w),
            Sort::Bool => None,
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Bool => f.write_str("bool"),
            Sort::Word(w) => write!(f, "word{}", w.bits()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarOrigin {
    AttackArg,
    StorageSnapshot,
    GlobalSnapshot,
    ChooseGuard,
    /// Symbolic environment of the initial state (caller, timestamp).
    Environment,
    /// Stand-in for a non-variable term during interference checks.
    Abstraction,
}

struct VarInfo {
    id: u64,
    sort: Sort,
    origin: VarOrigin,
    name: String,
}

/// A symbolic variable. Identity is the id alone.
#[derive(Clone)]
pub struct SymVar(Arc<VarInfo>);

impl SymVar {
    pub fn id(&self) -> u64 {
        self.0.id
    }
    pub fn sort(&self) -> Sort {
        self.0.sort
    }
    pub fn origin(&self) -> VarOrigin {
        self.0.origin
    }
    pub fn name(&self) -> &str {
        &self.0.name
    }
}

impl PartialEq for SymVar {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}
impl Eq for SymVar {}
impl Hash for SymVar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state)
    }
}
impl PartialOrd for SymVar {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SymVar {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.id.cmp(&other.0.id)
    }
}

impl fmt::Debug for SymVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.0.name, self.0.id)
    }
}

impl fmt::Display for SymVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.name)
    }
}

/// Allocates variables with run-unique ids; shared across worker threads.
#[derive(Debug, Default)]
pub struct VarFactory {
    next: AtomicU64,
}

impl VarFactory {
    pub fn new() -> VarFactory {
        VarFactory::default()
    }

    pub fn fresh(&self, sort: Sort, origin: VarOrigin, name: impl Into<String>) -> SymVar {
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        SymVar(Arc::new(VarInfo { id, sort, origin, name: name.into() }))
    }

    /// Factory whose ids start at `first`; used for scratch variables that
    /// must not collide with a run's ids.
    pub fn starting_at(first: u64) -> VarFactory {
        VarFactory { next: AtomicU64::new(first) }
    }

    pub fn allocated(&self) -> u64 {
        self.next.load(Ordering::Relaxed)
    }
}

/// Where an external call happened: function, statement index, and
/// re-entrancy depth.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CallSite {
    pub function: Arc<str>,
    pub stmt: u32,
    pub depth: u32,
}

impl fmt::Display for CallSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.function, self.stmt)?;
        if self.depth > 0 {
            write!(f, "^{}", self.depth)?;
        }
        Ok(())
    }
}

/// Uninterpreted function symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Uf {
    /// `sha3(a, b)`, word-valued.
    Sha3,
    /// Return value of the call at a site: `call(gas, addr, value)`.
    Call(CallSite),
    /// Initial contents of a storage location in a snapshot state.
    StorageBase,
}

impl Uf {
    pub fn arity(&self) -> usize {
        match self {
            Uf::Sha3 => 2,
            Uf::Call(_) => 3,
            Uf::StorageBase => 1,
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum Kind {
    Word(Word),
    Bool(bool),
    Var(SymVar),
    Bin(BinOp, SymExpr, SymExpr),
    Not(SymExpr),
    Ite(SymExpr, SymExpr, SymExpr),
    App(Uf, Box<[SymExpr]>),
}

impl Hash for Kind {
    fn hash<H: Hasher>(&self, h: &mut H) {
        std::mem::discriminant(self).hash(h);
        match self {
            Kind::Word(w) => w.hash(h),
            Kind::Bool(b) => b.hash(h),
            Kind::Var(v) => v.hash(h),
            Kind::Bin(op, a, b) => {
                op.hash(h);
                a.hash(h);
                b.hash(h);
            }
            Kind::Not(a) => a.hash(h),
            Kind::Ite(c, a, b) => {
                c.hash(h);
                a.hash(h);
                b.hash(h);
            }
            Kind::App(uf, args) => {
                uf.hash(h);
                args.hash(h);
            }
        }
    }
}

struct Node {
    kind: Kind,
    sort: Sort,
    hash: u64,
}

/// Interned symbolic expression. Cloning is a reference-count bump.
#[derive(Clone)]
pub struct SymExpr(Arc<Node>);

impl PartialEq for SymExpr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}
impl Eq for SymExpr {}
impl Hash for SymExpr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash)
    }
}

const SHARDS: usize = 64;

#[derive(Default)]
struct Shard {
    map: FxHashMap<u64, Vec<Weak<Node>>>,
    inserts_since_sweep: usize,
}

fn shards() -> &'static [Mutex<Shard>] {
    static TABLE: OnceLock<Vec<Mutex<Shard>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..SHARDS).map(|_| Mutex::new(Shard::default())).collect())
}

// Separate factories may reuse an id; keep their variables apart.
fn same_var_info(a: &Kind, b: &Kind) -> bool {
    match (a, b) {
        (Kind::Var(x), Kind::Var(y)) => x.0.name == y.0.name && x.0.origin == y.0.origin,
        _ => true,
    }
}

fn intern(kind: Kind, sort: Sort) -> SymExpr {
    let mut h = FxHasher::default();
    kind.hash(&mut h);
    sort.hash(&mut h);
    let hash = h.finish();
    let mut shard = shards()[(hash >> 32) as usize % SHARDS].lock().unwrap_or_else(|e| e.into_inner());
    if let Some(bucket) = shard.map.get(&hash) {
        for weak in bucket {
            if let Some(node) = weak.upgrade() {
                if node.sort == sort && node.kind == kind && same_var_info(&node.kind, &kind) {
                    return SymExpr(node);
                }
            }
        }
    }
    let node = Arc::new(Node { kind, sort, hash });
    shard.map.entry(hash).or_default().push(Arc::downgrade(&node));
    shard.inserts_since_sweep += 1;
    if shard.inserts_since_sweep > 4096 + shard.map.len() {
        shard.map.retain(|_, bucket| {
            bucket.retain(|w| w.strong_count() > 0);
            !bucket.is_empty()
        });
        shard.inserts_since_sweep = 0;
    }
    SymExpr(node)
}

/// A concrete value of either sort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CVal {
    Word(Word),
    Bool(bool),
}

impl CVal {
    pub fn as_word(self) -> Option<Word> {
        match self {
            CVal::Word(w) => Some(w),
            CVal::Bool(_) => None,
        }
    }
    pub fn as_bool(self) -> Option<bool> {
        match self {
            CVal::Bool(b) => Some(b),
            CVal::Word(_) => None,
        }
    }
    pub fn to_expr(self) -> SymExpr {
        match self {
            CVal::Word(w) => SymExpr::word(w),
            CVal::Bool(b) => SymExpr::bool(b),
        }
    }
}

impl fmt::Display for CVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CVal::Word(w) => write!(f, "{w}"),
            CVal::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Concrete semantics of a binary operator; `None` on sort mismatch.
pub fn apply_binop(op: BinOp, a: CVal, b: CVal) -> Option<CVal> {
    use BinOp::*;
    Some(match (op, a, b) {
        (And, CVal::Bool(x), CVal::Bool(y)) => CVal::Bool(x && y),
        (Or, CVal::Bool(x), CVal::Bool(y)) => CVal::Bool(x || y),
        (Eq, x, y) => CVal::Bool(x == y),
        (Ne, x, y) => CVal::Bool(x != y),
        (_, CVal::Word(x), CVal::Word(y)) => match op {
            Add => CVal::Word(x.add(y)),
            Sub => CVal::Word(x.sub(y)),
            Mul => CVal::Word(x.mul(y)),
            Div => CVal::Word(x.div(y)),
            Mod => CVal::Word(x.rem(y)),
            BitAnd => CVal::Word(x.bitand(y)),
            BitOr => CVal::Word(x.bitor(y)),
            BitXor => CVal::Word(x.bitxor(y)),
            Shl => CVal::Word(x.shl(y)),
            Shr => CVal::Word(x.shr(y)),
            Lt => CVal::Bool(x.value() < y.value()),
            Gt => CVal::Bool(x.value() > y.value()),
            Le => CVal::Bool(x.value() <= y.value()),
            Ge => CVal::Bool(x.value() >= y.value()),
            And | Or | Eq | Ne => return None,
        },
        _ => return None,
    })
}

fn binop_sort(op: BinOp, a: Sort) -> Sort {
    if op.is_arithmetic() {
        a
    } else {
        Sort::Bool
    }
}

impl SymExpr {
    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn sort(&self) -> Sort {
        self.0.sort
    }

    pub fn width(&self) -> Option<Width> {
        self.0.sort.width()
    }

    pub fn hash_value(&self) -> u64 {
        self.0.hash
    }

    /// Stable identity for memo tables within one process.
    pub fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn word(w: Word) -> SymExpr {
        intern(Kind::Word(w), Sort::Word(w.width()))
    }

    pub fn word_u64(value: u64, width: Width) -> SymExpr {
        SymExpr::word(Word::from_u64(value, width))
    }

    pub fn word_u256(value: U256, width: Width) -> SymExpr {
        SymExpr::word(Word::new(value, width))
    }

    pub fn bool(b: bool) -> SymExpr {
        intern(Kind::Bool(b), Sort::Bool)
    }

    pub fn tt() -> SymExpr {
        SymExpr::bool(true)
    }

    pub fn ff() -> SymExpr {
        SymExpr::bool(false)
    }

    pub fn var(v: &SymVar) -> SymExpr {
        intern(Kind::Var(v.clone()), v.sort())
    }

    pub fn as_word(&self) -> Option<Word> {
        match self.kind() {
            Kind::Word(w) => Some(*w),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self.kind() {
            Kind::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&SymVar> {
        match self.kind() {
            Kind::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_literal(&self) -> Option<CVal> {
        match self.kind() {
            Kind::Word(w) => Some(CVal::Word(*w)),
            Kind::Bool(b) => Some(CVal::Bool(*b)),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        self.as_literal().is_some()
    }

    pub fn is_true(&self) -> bool {
        self.as_bool() == Some(true)
    }

    pub fn is_false(&self) -> bool {
        self.as_bool() == Some(false)
    }

    fn is_zero(&self) -> bool {
        self.as_word().map_or(false, Word::is_zero)
    }

    fn is_one(&self) -> bool {
        self.as_word().map_or(false, |w| w.value() == U256::from(1u8))
    }

    fn zero_like(&self) -> SymExpr {
        SymExpr::word(Word::zero(self.width().expect("word-sorted")))
    }

    pub fn bin(op: BinOp, a: SymExpr, b: SymExpr) -> SymExpr {
        use BinOp::*;
        if let (Some(x), Some(y)) = (a.as_literal(), b.as_literal()) {
            if let Some(v) = apply_binop(op, x, y) {
                return v.to_expr();
            }
        }
        match op {
            Add | BitOr | BitXor if b.is_zero() => return a,
            Add | BitOr | BitXor if a.is_zero() => return b,
            Sub | Shl | Shr if b.is_zero() => return a,
            Sub | BitXor if a == b => return a.zero_like(),
            Mul | BitAnd if a.is_zero() => return a,
            Mul | BitAnd if b.is_zero() => return b,
            Mul | Div if b.is_one() => return a,
            Mul if a.is_one() => return b,
            Div | Mod | Shl | Shr if a.is_zero() => return a,
            Div | Mod if b.is_zero() => return b,
            Mod if b.is_one() => return a.zero_like(),
            And => {
                if a.is_false() || b.is_true() || a == b {
                    return a;
                }
                if b.is_false() || a.is_true() {
                    return b;
                }
            }
            Or => {
                if a.is_true() || b.is_false() || a == b {
                    return a;
                }
                if b.is_true() || a.is_false() {
                    return b;
                }
            }
            Eq | Le | Ge if a == b => return SymExpr::tt(),
            Ne | Lt | Gt if a == b => return SymExpr::ff(),
            Lt if b.is_zero() => return SymExpr::ff(),
            Gt if a.is_zero() => return SymExpr::ff(),
            Ge if b.is_zero() => return SymExpr::tt(),
            Le if a.is_zero() => return SymExpr::tt(),
            Eq | Ne if a.sort() == Sort::Bool => {
                let positive = op == Eq;
                if let Some(x) = b.as_bool() {
                    return if x == positive { a } else { SymExpr::not(a) };
                }
                if let Some(x) = a.as_bool() {
                    return if x == positive { b } else { SymExpr::not(b) };
                }
            }
            _ => {}
        }
        debug_assert!(
            if op.is_logical() { a.sort() == Sort::Bool } else { a.sort() == b.sort() },
            "sort mismatch in {op:?}: {} vs {}",
            a.sort(),
            b.sort()
        );
        let sort = binop_sort(op, a.sort());
        intern(Kind::Bin(op, a, b), sort)
    }

    pub fn add(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Add, a, b)
    }
    pub fn sub(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Sub, a, b)
    }
    pub fn mul(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Mul, a, b)
    }
    pub fn eq(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Eq, a, b)
    }
    pub fn ne(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Ne, a, b)
    }
    pub fn lt(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Lt, a, b)
    }
    pub fn gt(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Gt, a, b)
    }
    pub fn le(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Le, a, b)
    }
    pub fn and(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::And, a, b)
    }
    pub fn or(a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::bin(BinOp::Or, a, b)
    }

    pub fn and_all(items: impl IntoIterator<Item = SymExpr>) -> SymExpr {
        items.into_iter().fold(SymExpr::tt(), SymExpr::and)
    }

    pub fn or_all(items: impl IntoIterator<Item = SymExpr>) -> SymExpr {
        items.into_iter().fold(SymExpr::ff(), SymExpr::or)
    }

    pub fn not(a: SymExpr) -> SymExpr {
        match a.kind() {
            Kind::Bool(b) => SymExpr::bool(!b),
            Kind::Not(inner) => inner.clone(),
            _ => intern(Kind::Not(a), Sort::Bool),
        }
    }

    pub fn ite(c: SymExpr, a: SymExpr, b: SymExpr) -> SymExpr {
        if let Some(x) = c.as_bool() {
            return if x { a } else { b };
        }
        if a == b {
            return a;
        }
        if let Kind::Not(inner) = c.kind() {
            return SymExpr::ite(inner.clone(), b, a);
        }
        if a.sort() == Sort::Bool {
            match (a.as_bool(), b.as_bool()) {
                (Some(true), Some(false)) => return c,
                (Some(false), Some(true)) => return SymExpr::not(c),
                (Some(true), None) => return SymExpr::or(c, b),
                (Some(false), None) => return SymExpr::and(SymExpr::not(c), b),
                (None, Some(false)) => return SymExpr::and(c, a),
                (None, Some(true)) => return SymExpr::or(SymExpr::not(c), a),
                _ => {}
            }
        }
        if let Kind::Ite(c2, x, _) = a.kind() {
            if *c2 == c {
                return SymExpr::ite(c, x.clone(), b);
            }
        }
        if let Kind::Ite(c2, _, y) = b.kind() {
            if *c2 == c {
                return SymExpr::ite(c, a, y.clone());
            }
        }
        debug_assert_eq!(a.sort(), b.sort(), "ite branch sorts differ");
        let sort = a.sort();
        intern(Kind::Ite(c, a, b), sort)
    }

    pub fn app(uf: Uf, args: Vec<SymExpr>, width: Width) -> SymExpr {
        debug_assert_eq!(uf.arity(), args.len());
        intern(Kind::App(uf, args.into_boxed_slice()), Sort::Word(width))
    }

    /// Boolean view of a value: words are true when non-zero.
    pub fn to_bool(&self) -> SymExpr {
        match self.sort() {
            Sort::Bool => self.clone(),
            Sort::Word(_) => {
                if let Kind::Ite(c, a, b) = self.kind() {
                    if a.is_one() && b.is_zero() {
                        return c.clone();
                    }
                    if a.is_zero() && b.is_one() {
                        return SymExpr::not(c.clone());
                    }
                }
                SymExpr::ne(self.clone(), self.zero_like())
            }
        }
    }

    /// Word view of a value: booleans become 0 or 1.
    pub fn to_word(&self, width: Width) -> SymExpr {
        match self.sort() {
            Sort::Word(_) => self.clone(),
            Sort::Bool => SymExpr::ite(
                self.clone(),
                SymExpr::word(Word::one(width)),
                SymExpr::word(Word::zero(width)),
            ),
        }
    }

    pub fn coerce(&self, sort: Sort) -> SymExpr {
        match sort {
            Sort::Bool => self.to_bool(),
            Sort::Word(w) => self.to_word(w),
        }
    }

    pub fn children(&self) -> Vec<&SymExpr> {
        match self.kind() {
            Kind::Word(_) | Kind::Bool(_) | Kind::Var(_) => Vec::new(),
            Kind::Bin(_, a, b) => vec![a, b],
            Kind::Not(a) => vec![a],
            Kind::Ite(c, a, b) => vec![c, a, b],
            Kind::App(_, args) => args.iter().collect(),
        }
    }

    /// Visits every distinct node once, children before parents.
    pub fn post_order(&self) -> Vec<SymExpr> {
        let mut seen = FxHashSet::default();
        let mut out = Vec::new();
        let mut stack: Vec<(SymExpr, bool)> = vec![(self.clone(), false)];
        while let Some((e, expanded)) = stack.pop() {
            if expanded {
                out.push(e);
                continue;
            }
            if !seen.insert(e.ptr_id()) {
                continue;
            }
            stack.push((e.clone(), true));
            for c in e.children().into_iter().rev() {
                if !seen.contains(&c.ptr_id()) {
                    stack.push((c.clone(), false));
                }
            }
        }
        out
    }

    /// Free variables, ordered by id.
    pub fn support(&self) -> BTreeSet<SymVar> {
        self.post_order().iter().filter_map(|e| e.as_var().cloned()).collect()
    }

    pub fn mentions(&self, v: &SymVar) -> bool {
        self.post_order().iter().any(|e| e.as_var() == Some(v))
    }

    pub fn contains(&self, sub: &SymExpr) -> bool {
        self.post_order().iter().any(|e| e == sub)
    }

    /// Uninterpreted applications occurring in the expression.
    pub fn apps(&self) -> Vec<SymExpr> {
        self.post_order().into_iter().filter(|e| matches!(e.kind(), Kind::App(..))).collect()
    }

    /// Number of distinct nodes.
    pub fn dag_size(&self) -> usize {
        self.post_order().len()
    }

    /// Rebuilds the node with new children, re-running the folding
    /// constructors.
    pub fn rebuild(&self, kids: &[SymExpr]) -> SymExpr {
        match self.kind() {
            Kind::Word(_) | Kind::Bool(_) | Kind::Var(_) => self.clone(),
            Kind::Bin(op, _, _) => SymExpr::bin(*op, kids[0].clone(), kids[1].clone()),
            Kind::Not(_) => SymExpr::not(kids[0].clone()),
            Kind::Ite(..) => SymExpr::ite(kids[0].clone(), kids[1].clone(), kids[2].clone()),
            Kind::App(uf, _) => SymExpr::app(uf.clone(), kids.to_vec(), self.width().expect("word app")),
        }
    }

    /// Bottom-up rewrite. `hook` sees each node after its children were
    /// rewritten (as `rebuilt`) and may replace it.
    pub fn transform<F>(&self, mut hook: F) -> SymExpr
    where
        F: FnMut(&SymExpr, &SymExpr) -> Option<SymExpr>,
    {
        let mut memo: FxHashMap<usize, SymExpr> = FxHashMap::default();
        for node in self.post_order() {
            let kids: Vec<SymExpr> = node.children().iter().map(|c| memo[&c.ptr_id()].clone()).collect();
            let unchanged = kids.iter().zip(node.children()).all(|(k, c)| k == c);
            let rebuilt = if unchanged { node.clone() } else { node.rebuild(&kids) };
            let out = hook(&node, &rebuilt).unwrap_or(rebuilt);
            memo.insert(node.ptr_id(), out);
        }
        memo[&self.ptr_id()].clone()
    }

    /// `transform` with a memo that outlives the call, so several roots
    /// sharing subterms are rewritten once. The hook must not depend on
    /// which root is being rewritten.
    pub fn transform_shared<F>(&self, memo: &mut FxHashMap<usize, SymExpr>, mut hook: F) -> SymExpr
    where
        F: FnMut(&SymExpr, &SymExpr) -> Option<SymExpr>,
    {
        if let Some(e) = memo.get(&self.ptr_id()) {
            return e.clone();
        }
        let mut stack: Vec<(SymExpr, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if memo.contains_key(&node.ptr_id()) {
                continue;
            }
            if !expanded {
                stack.push((node.clone(), true));
                for c in node.children().into_iter().rev() {
                    if !memo.contains_key(&c.ptr_id()) {
                        stack.push((c.clone(), false));
                    }
                }
                continue;
            }
            let kids: Vec<SymExpr> = node.children().iter().map(|c| memo[&c.ptr_id()].clone()).collect();
            let unchanged = kids.iter().zip(node.children()).all(|(k, c)| k == c);
            let rebuilt = if unchanged { node.clone() } else { node.rebuild(&kids) };
            let out = hook(&node, &rebuilt).unwrap_or(rebuilt);
            memo.insert(node.ptr_id(), out);
        }
        memo[&self.ptr_id()].clone()
    }

    /// Simultaneous substitution of variables.
    pub fn substitute(&self, sigma: &Substitution) -> SymExpr {
        if sigma.is_empty() {
            return self.clone();
        }
        self.transform(|orig, _| orig.as_var().and_then(|v| sigma.get(v).cloned()))
    }

    /// Replaces every occurrence of the node `target` by `with`.
    pub fn replace(&self, target: &SymExpr, with: &SymExpr) -> SymExpr {
        self.transform(|orig, _| (orig == target).then(|| with.clone()))
    }

    /// Concrete evaluation; `None` if some variable or application has no
    /// value under `interp`.
    pub fn eval(&self, interp: &dyn Interpretation) -> Option<CVal> {
        let mut memo: FxHashMap<usize, CVal> = FxHashMap::default();
        for node in self.post_order() {
            let get = |e: &SymExpr| memo.get(&e.ptr_id()).copied();
            let v = match node.kind() {
                Kind::Word(w) => CVal::Word(*w),
                Kind::Bool(b) => CVal::Bool(*b),
                Kind::Var(v) => interp.var(v)?,
                Kind::Bin(op, a, b) => apply_binop(*op, get(a)?, get(b)?)?,
                Kind::Not(a) => CVal::Bool(!get(a)?.as_bool()?),
                Kind::Ite(c, a, b) => {
                    if get(c)?.as_bool()? {
                        get(a)?
                    } else {
                        get(b)?
                    }
                }
                Kind::App(uf, args) => {
                    let vals: Option<Vec<Word>> = args.iter().map(|a| get(a).and_then(CVal::as_word)).collect();
                    CVal::Word(interp.app(uf, &vals?, &node)?)
                }
            };
            memo.insert(node.ptr_id(), v);
        }
        memo.get(&self.ptr_id()).copied()
    }
}

/// Values for variables and uninterpreted applications.
pub trait Interpretation {
    fn var(&self, v: &SymVar) -> Option<CVal>;
    fn app(&self, uf: &Uf, args: &[Word], term: &SymExpr) -> Option<Word>;
}

/// Concrete semantics of the uninterpreted symbols used by replay: hashing
/// via SHA-256, every call succeeds (returns 1), snapshot storage is zero.
pub fn concrete_app(uf: &Uf, args: &[Word], width: Width) -> Word {
    match uf {
        Uf::Sha3 => Word::hash_pair(args[0], args[1]),
        Uf::Call(_) => Word::one(width),
        Uf::StorageBase => Word::zero(width),
    }
}

/// Variable assignment with concrete application semantics.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    pub vars: HashMap<SymVar, CVal>,
    /// Default value for unassigned word/bool variables.
    pub default_zero: bool,
}

impl Assignment {
    pub fn new() -> Assignment {
        Assignment::default()
    }

    pub fn set(&mut self, v: &SymVar, val: CVal) {
        self.vars.insert(v.clone(), val);
    }
}

impl Interpretation for Assignment {
    fn var(&self, v: &SymVar) -> Option<CVal> {
        match self.vars.get(v) {
            Some(x) => Some(*x),
            None if self.default_zero => Some(match v.sort() {
                Sort::Bool => CVal::Bool(false),
                Sort::Word(w) => CVal::Word(Word::zero(w)),
            }),
            None => None,
        }
    }

    fn app(&self, uf: &Uf, args: &[Word], term: &SymExpr) -> Option<Word> {
        Some(concrete_app(uf, args, term.width()?))
    }
}

/// Sort-preserving map from variables to expressions.
#[derive(Clone, Debug, Default)]
pub struct Substitution {
    map: HashMap<SymVar, SymExpr>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn insert(&mut self, v: SymVar, e: SymExpr) {
        debug_assert_eq!(v.sort(), e.sort(), "substitution must preserve sorts");
        self.map.insert(v, e);
    }

    pub fn get(&self, v: &SymVar) -> Option<&SymExpr> {
        self.map.get(v)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SymVar, &SymExpr)> {
        self.map.iter()
    }

    /// `self` applied after `first`: `e.substitute(first).substitute(self)`.
    pub fn compose_after(&self, first: &Substitution) -> Substitution {
        let mut out = Substitution::new();
        for (v, e) in &first.map {
            out.map.insert(v.clone(), e.substitute(self));
        }
        for (v, e) in &self.map {
            out.map.entry(v.clone()).or_insert_with(|| e.clone());
        }
        out
    }
}

impl FromIterator<(SymVar, SymExpr)> for Substitution {
    fn from_iter<T: IntoIterator<Item = (SymVar, SymExpr)>>(iter: T) -> Self {
        let mut s = Substitution::new();
        for (v, e) in iter {
            s.insert(v, e);
        }
        s
    }
}

impl fmt::Debug for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Infix rendering. Shared subterms are printed in full, so output size
/// can grow with the number of paths through the DAG.
impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Word(w) => write!(f, "{w}"),
            Kind::Bool(b) => write!(f, "{b}"),
            Kind::Var(v) => write!(f, "{v}"),
            Kind::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Kind::Not(a) => write!(f, "!{a}"),
            Kind::Ite(c, a, b) => write!(f, "ite({c}, {a}, {b})"),
            Kind::App(uf, args) => {
                match uf {
                    Uf::Sha3 => f.write_str("sha3(")?,
                    Uf::Call(site) => write!(f, "call@{site}(")?,
                    Uf::StorageBase => f.write_str("storage0(")?,
                }
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: Width = Width::W256;

    fn w(v: u64) -> SymExpr {
        SymExpr::word_u64(v, W)
    }

    #[test]
    fn interning_makes_equal_terms_identical() {
        let vf = VarFactory::new();
        let x = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "x");
        let a = SymExpr::add(SymExpr::var(&x), w(3));
        let b = SymExpr::add(SymExpr::var(&x), w(3));
        assert!(Arc::ptr_eq(&a.0, &b.0));
    }

    #[test]
    fn substitution_folds_constants() {
        let vf = VarFactory::new();
        let v0 = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "v0");
        let v1 = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "v1");
        let e = SymExpr::add(SymExpr::var(&v0), w(1));
        let sigma: Substitution = [(v0.clone(), w(5))].into_iter().collect();
        assert_eq!(e.substitute(&sigma), w(6));

        let w3 = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "w3");
        let e = SymExpr::add(SymExpr::var(&v0), SymExpr::var(&v1));
        let sigma: Substitution = [(v0.clone(), SymExpr::var(&w3))].into_iter().collect();
        assert_eq!(e.substitute(&sigma), SymExpr::add(SymExpr::var(&w3), SymExpr::var(&v1)));
    }

    #[test]
    fn ite_folds_on_literal_guard() {
        let vf = VarFactory::new();
        let b = vf.fresh(Sort::Bool, VarOrigin::ChooseGuard, "b");
        let v0 = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "v0");
        let e = SymExpr::ite(SymExpr::var(&b), SymExpr::var(&v0), w(2));
        let sigma: Substitution = [(b, SymExpr::tt())].into_iter().collect();
        assert_eq!(e.substitute(&sigma), SymExpr::var(&v0));
    }

    #[test]
    fn fresh_ids_are_unique() {
        let vf = VarFactory::new();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1_000_000 {
            assert!(seen.insert(vf.fresh(Sort::Bool, VarOrigin::ChooseGuard, "b").id()));
        }
    }

    #[test]
    fn bool_word_coercions_round_trip() {
        let vf = VarFactory::new();
        let b = SymExpr::var(&vf.fresh(Sort::Bool, VarOrigin::AttackArg, "b"));
        assert_eq!(b.to_word(W).to_bool(), b);
        assert_eq!(w(7).to_bool(), SymExpr::tt());
        assert_eq!(SymExpr::tt().to_word(W), w(1));
    }

    #[test]
    fn multiplication_by_zero_drops_the_variable() {
        let vf = VarFactory::new();
        let x = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "x");
        assert_eq!(SymExpr::mul(SymExpr::var(&x), w(0)), w(0));
    }

    #[test]
    fn eval_uses_assignment() {
        let vf = VarFactory::new();
        let x = vf.fresh(Sort::Word(W), VarOrigin::AttackArg, "x");
        let e = SymExpr::gt(SymExpr::mul(SymExpr::var(&x), w(2)), w(5));
        let mut a = Assignment::new();
        a.set(&x, CVal::Word(Word::from_u64(3, W)));
        assert_eq!(e.eval(&a), Some(CVal::Bool(true)));
        assert_eq!(e.eval(&Assignment::new()), None);
    }
}
