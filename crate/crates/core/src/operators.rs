//! Transition operators σ: Y^M → S and the registry of candidates.
//!
//! The default registry holds the four numeric built-ins (sum, product,
//! bitwise xor and the boolean form `C(x, y, z) = (x ∧ y) ∨ (x ∧ z)`). Scene
//! relations and table-defined operators can be registered next to them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{AlphabetKind, LabelAlphabet, LabelSymbol, Symbol};

/// Maximum number of tuples a single enumeration may visit unless the caller
/// configures otherwise.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Arity {
    /// Any tuple length ≥ 1.
    Variadic,
    Fixed(usize),
}

impl Arity {
    pub fn accepts(&self, m: usize) -> bool {
        match self {
            Arity::Variadic => m >= 1,
            Arity::Fixed(n) => *n == m,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Variadic => f.write_str("at least 1"),
            Arity::Fixed(n) => write!(f, "exactly {n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Builtin {
    Sum,
    Product,
    Xor,
    /// `(x ∧ y) ∨ (x ∧ z)` over label parity.
    BoolC,
    Max,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [
        Builtin::Sum,
        Builtin::Product,
        Builtin::Xor,
        Builtin::BoolC,
        Builtin::Max,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Sum => "sum",
            Builtin::Product => "product",
            Builtin::Xor => "xor",
            Builtin::BoolC => "boolC",
            Builtin::Max => "max",
        }
    }

    pub fn natural_arity(&self) -> Arity {
        match self {
            Builtin::BoolC => Arity::Fixed(3),
            _ => Arity::Variadic,
        }
    }

    /// Accepts the canonical name plus the usual spellings (`+`, `times`, `⊕`, `C`, ...).
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "sum" | "+" | "plus" | "add" => Some(Builtin::Sum),
            "product" | "*" | "×" | "times" | "mul" => Some(Builtin::Product),
            "xor" | "⊕" | "^" => Some(Builtin::Xor),
            "boolC" | "C" | "boolc" | "bool-c" => Some(Builtin::BoolC),
            "max" => Some(Builtin::Max),
            _ => None,
        }
    }

    /// Evaluates over raw values; `None` on arithmetic overflow. Arity is
    /// the caller's responsibility.
    pub fn eval_values(&self, values: &[u64]) -> Option<u64> {
        match self {
            Builtin::Sum => values.iter().try_fold(0u64, |acc, v| acc.checked_add(*v)),
            Builtin::Product => values.iter().try_fold(1u64, |acc, v| acc.checked_mul(*v)),
            Builtin::Xor => Some(values.iter().fold(0, |acc, v| acc ^ v)),
            Builtin::BoolC => {
                let (x, y, z) = (values[0] & 1, values[1] & 1, values[2] & 1);
                Some((x & y) | (x & z))
            }
            Builtin::Max => values.iter().copied().max(),
        }
    }
}

type CustomFn = dyn Fn(&[LabelSymbol]) -> Result<LabelSymbol> + Send + Sync;

#[derive(Clone)]
enum OpKind {
    Builtin(Builtin),
    Table(Arc<BTreeMap<Vec<LabelSymbol>, LabelSymbol>>),
    /// A binary scene relation: σ(a, b) is the relation's own name, so a
    /// relation entails the atom `r(a, b)` exactly when the hinted relation is `r`.
    Relation,
    Custom(Arc<CustomFn>),
}

/// A named candidate transition function.
#[derive(Clone)]
pub struct TransitionOp {
    name: Symbol,
    arity: Arity,
    kind: OpKind,
}

impl TransitionOp {
    pub fn builtin(b: Builtin) -> Self {
        TransitionOp {
            name: Symbol::new(b.name()),
            arity: b.natural_arity(),
            kind: OpKind::Builtin(b),
        }
    }

    pub fn sum() -> Self {
        Self::builtin(Builtin::Sum)
    }

    pub fn product() -> Self {
        Self::builtin(Builtin::Product)
    }

    pub fn xor() -> Self {
        Self::builtin(Builtin::Xor)
    }

    pub fn bool_c() -> Self {
        Self::builtin(Builtin::BoolC)
    }

    pub fn max() -> Self {
        Self::builtin(Builtin::Max)
    }

    pub fn relation(name: &str) -> Self {
        TransitionOp {
            name: Symbol::new(name),
            arity: Arity::Fixed(2),
            kind: OpKind::Relation,
        }
    }

    /// An operator given by an explicit tuple → output table.
    pub fn table(
        name: &str,
        arity: usize,
        entries: impl IntoIterator<Item = (Vec<LabelSymbol>, LabelSymbol)>,
    ) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (inputs, output) in entries {
            if inputs.len() != arity {
                return Err(Error::InvalidOperatorSpec {
                    name: name.into(),
                    reason: format!("entry {inputs:?} has length {}, arity is {arity}", inputs.len()),
                });
            }
            if let Some(prev) = table.insert(inputs.clone(), output) {
                if prev != output {
                    return Err(Error::InvalidOperatorSpec {
                        name: name.into(),
                        reason: format!("conflicting outputs for {inputs:?}"),
                    });
                }
            }
        }
        if table.is_empty() {
            return Err(Error::InvalidOperatorSpec {
                name: name.into(),
                reason: "empty table".into(),
            });
        }
        Ok(TransitionOp {
            name: Symbol::new(name),
            arity: Arity::Fixed(arity),
            kind: OpKind::Table(Arc::new(table)),
        })
    }

    pub fn from_fn<F>(name: &str, arity: Arity, f: F) -> Self
    where
        F: Fn(&[LabelSymbol]) -> Result<LabelSymbol> + Send + Sync + 'static,
    {
        TransitionOp {
            name: Symbol::new(name),
            arity,
            kind: OpKind::Custom(Arc::new(f)),
        }
    }

    /// Restricts a variadic operator to a fixed tuple length.
    pub fn with_fixed_arity(mut self, n: usize) -> Result<Self> {
        if !self.arity.accepts(n) {
            return Err(Error::InvalidOperatorSpec {
                name: self.name.to_string(),
                reason: format!("arity {n} incompatible with {}", self.arity),
            });
        }
        self.arity = Arity::Fixed(n);
        Ok(self)
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = Symbol::new(name);
        self
    }

    pub fn name(&self) -> Symbol {
        self.name
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn as_builtin(&self) -> Option<Builtin> {
        match self.kind {
            OpKind::Builtin(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_relation(&self) -> bool {
        matches!(self.kind, OpKind::Relation)
    }

    pub fn check_arity(&self, m: usize) -> Result<()> {
        if self.arity.accepts(m) {
            Ok(())
        } else {
            Err(Error::ArityMismatch {
                op: self.name.to_string(),
                expected: self.arity.to_string(),
                found: m,
            })
        }
    }

    pub fn eval(&self, labels: &[LabelSymbol]) -> Result<LabelSymbol> {
        self.check_arity(labels.len())?;
        match &self.kind {
            OpKind::Builtin(b) => {
                let mut values = Vec::with_capacity(labels.len());
                for label in labels {
                    values.push(label.numeric_value().ok_or_else(|| Error::NonNumericLabel {
                        op: self.name.to_string(),
                        label: label.to_string(),
                    })?);
                }
                b.eval_values(&values)
                    .map(LabelSymbol::number)
                    .ok_or_else(|| Error::NumericOverflow {
                        op: self.name.to_string(),
                        args: format!("{labels:?}"),
                    })
            }
            OpKind::Table(table) => table.get(labels).copied().ok_or_else(|| Error::UndefinedTuple {
                op: self.name.to_string(),
                args: labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(", "),
            }),
            OpKind::Relation => Ok(LabelSymbol::parse(self.name.as_str())),
            OpKind::Custom(f) => f(labels),
        }
    }

    /// The image σ(Y^m), i.e. the weak-label alphabet S this operator
    /// induces over `input`.
    pub fn output_alphabet(&self, input: &LabelAlphabet, m: usize, budget: u64) -> Result<LabelAlphabet> {
        self.check_arity(m)?;
        check_budget(input.len(), m, budget)?;
        let mut image = std::collections::BTreeSet::new();
        let mut err = None;
        for_each_tuple(input.len(), m, |idx| {
            let tuple: Vec<LabelSymbol> = idx.iter().map(|&i| input.symbols()[i]).collect();
            match self.eval(&tuple) {
                Ok(s) => {
                    image.insert(s);
                    true
                }
                Err(e) => {
                    err = Some(e);
                    false
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        let kind = if image.iter().all(|s| s.numeric_value().is_some()) {
            AlphabetKind::Numeric
        } else {
            AlphabetKind::Symbolic
        };
        LabelAlphabet::new(kind, image)
    }
}

impl fmt::Debug for TransitionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            OpKind::Builtin(b) => format!("builtin:{}", b.name()),
            OpKind::Table(t) => format!("table[{}]", t.len()),
            OpKind::Relation => "relation".to_owned(),
            OpKind::Custom(_) => "custom".to_owned(),
        };
        f.debug_struct("TransitionOp")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("kind", &kind)
            .finish()
    }
}

pub fn eval_operator(op: &TransitionOp, labels: &[LabelSymbol]) -> Result<LabelSymbol> {
    op.eval(labels)
}

pub(crate) fn check_budget(alphabet_len: usize, m: usize, budget: u64) -> Result<()> {
    let requested = u32::try_from(m)
        .ok()
        .and_then(|m| (alphabet_len as u128).checked_pow(m))
        .unwrap_or(u128::MAX);
    if requested > budget as u128 {
        Err(Error::BudgetExceeded { requested, budget })
    } else {
        Ok(())
    }
}

/// Visits every index tuple of `{0..n}^m` in lexicographic order. The visitor
/// returns `false` to stop early.
pub(crate) fn for_each_tuple(n: usize, m: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if n == 0 && m > 0 {
        return;
    }
    let mut idx = vec![0usize; m];
    loop {
        if !visit(&idx) {
            return;
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// All tuples `y ∈ alphabet^m` with `σ(y) = s`, in lexicographic alphabet order.
pub fn preimage(
    op: &TransitionOp,
    s: LabelSymbol,
    alphabet: &LabelAlphabet,
    m: usize,
    budget: u64,
) -> Result<Vec<Vec<LabelSymbol>>> {
    op.check_arity(m)?;
    check_budget(alphabet.len(), m, budget)?;
    let symbols = alphabet.symbols();
    let mut out = Vec::new();

    if let (Some(b), Some(values)) = (op.as_builtin(), numeric_values(alphabet)) {
        // fast path: compare raw values, no interning in the loop
        let Some(target) = s.numeric_value() else {
            return Ok(out);
        };
        let mut buf = vec![0u64; m];
        for_each_tuple(symbols.len(), m, |idx| {
            for (slot, &i) in buf.iter_mut().zip(idx) {
                *slot = values[i];
            }
            if b.eval_values(&buf) == Some(target) {
                out.push(idx.iter().map(|&i| symbols[i]).collect());
            }
            true
        });
        return Ok(out);
    }

    let mut err = None;
    let mut tuple = vec![symbols[0]; m];
    for_each_tuple(symbols.len(), m, |idx| {
        for (slot, &i) in tuple.iter_mut().zip(idx) {
            *slot = symbols[i];
        }
        match op.eval(&tuple) {
            Ok(out_label) => {
                if out_label == s {
                    out.push(tuple.clone());
                }
                true
            }
            Err(e) => {
                err = Some(e);
                false
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Whether `prefix` extends to some tuple of length `m` over `alphabet`
/// with `σ(tuple) = s`.
pub fn has_completion(
    op: &TransitionOp,
    s: LabelSymbol,
    prefix: &[LabelSymbol],
    alphabet: &LabelAlphabet,
    m: usize,
    budget: u64,
) -> Result<bool> {
    op.check_arity(m)?;
    if prefix.len() > m {
        return Ok(false);
    }
    let free = m - prefix.len();
    check_budget(alphabet.len(), free, budget)?;
    let symbols = alphabet.symbols();
    let mut tuple: Vec<LabelSymbol> = prefix.to_vec();
    tuple.resize(m, symbols[0]);
    let mut found = false;
    let mut err = None;
    for_each_tuple(symbols.len(), free, |idx| {
        for (slot, &i) in tuple[prefix.len()..].iter_mut().zip(idx) {
            *slot = symbols[i];
        }
        match op.eval(&tuple) {
            Ok(out) if out == s => {
                found = true;
                false
            }
            Ok(_) => true,
            Err(e) => {
                err = Some(e);
                false
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(found),
    }
}

fn numeric_values(alphabet: &LabelAlphabet) -> Option<Vec<u64>> {
    alphabet.symbols().iter().map(|s| s.numeric_value()).collect()
}

/// The ordered candidate set of transition functions: the background
/// knowledge available to hypothesis search.
#[derive(Clone, Debug, Default)]
pub struct OperatorRegistry {
    ops: Vec<TransitionOp>,
}

impl OperatorRegistry {
    pub fn empty() -> Self {
        OperatorRegistry { ops: Vec::new() }
    }

    /// sum, product, xor, boolC, in that order.
    pub fn builtins() -> Self {
        OperatorRegistry {
            ops: vec![
                TransitionOp::sum(),
                TransitionOp::product(),
                TransitionOp::xor(),
                TransitionOp::bool_c(),
            ],
        }
    }

    /// OnTop, NextTo, Beside.
    pub fn scene_relations() -> Self {
        OperatorRegistry {
            ops: ["OnTop", "NextTo", "Beside"]
                .into_iter()
                .map(TransitionOp::relation)
                .collect(),
        }
    }

    pub fn register(&self, op: TransitionOp) -> Result<Self> {
        if self.get(op.name().as_str()).is_some() {
            return Err(Error::DuplicateName(op.name().to_string()));
        }
        let mut ops = self.ops.clone();
        ops.push(op);
        Ok(OperatorRegistry { ops })
    }

    pub fn ops(&self) -> &[TransitionOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&TransitionOp> {
        self.ops.iter().find(|op| op.name().as_str() == name)
    }

    /// Exact name first, then built-in aliases (`plus`, `times`, `C`, ...).
    pub fn resolve(&self, name: &str) -> Result<&TransitionOp> {
        if let Some(op) = self.get(name) {
            return Ok(op);
        }
        Builtin::from_name(name)
            .and_then(|b| self.ops.iter().find(|op| op.as_builtin() == Some(b)))
            .ok_or_else(|| Error::UnknownOperator(name.to_owned()))
    }

    pub fn position(&self, name: Symbol) -> Option<usize> {
        self.ops.iter().position(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Builtin,
    Table,
    Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArityValue {
    Fixed(usize),
    /// Only `"variadic"` is accepted.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub inputs: Vec<String>,
    pub output: String,
}

/// A config-file operator declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub name: String,
    #[serde(default)]
    pub arity: Option<ArityValue>,
    pub kind: OperatorKind,
    /// For `builtin`: which built-in function to use; defaults to `name`.
    #[serde(default)]
    pub function: Option<String>,
    #[serde(default)]
    pub table: Option<Vec<TableEntry>>,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<TransitionOp> {
        let invalid = |reason: String| Error::InvalidOperatorSpec {
            name: self.name.clone(),
            reason,
        };
        let arity = match &self.arity {
            None => None,
            Some(ArityValue::Fixed(0)) => return Err(invalid("arity must be ≥ 1".into())),
            Some(ArityValue::Fixed(n)) => Some(Arity::Fixed(*n)),
            Some(ArityValue::Named(s)) if s == "variadic" => Some(Arity::Variadic),
            Some(ArityValue::Named(s)) => return Err(invalid(format!("unknown arity `{s}`"))),
        };
        match self.kind {
            OperatorKind::Builtin => {
                let fname = self.function.as_deref().unwrap_or(&self.name);
                let b = Builtin::from_name(fname)
                    .ok_or_else(|| invalid(format!("no built-in function `{fname}`")))?;
                let op = TransitionOp::builtin(b).renamed(&self.name);
                match arity {
                    None => Ok(op),
                    Some(Arity::Fixed(n)) => op.with_fixed_arity(n),
                    Some(Arity::Variadic) if b.natural_arity() == Arity::Variadic => Ok(op),
                    Some(Arity::Variadic) => Err(invalid(format!("`{fname}` is not variadic"))),
                }
            }
            OperatorKind::Table => {
                let Some(Arity::Fixed(n)) = arity else {
                    return Err(invalid("table operators need a fixed arity".into()));
                };
                let entries = self
                    .table
                    .as_ref()
                    .ok_or_else(|| invalid("missing `table`".into()))?;
                TransitionOp::table(
                    &self.name,
                    n,
                    entries.iter().map(|e| {
                        (
                            e.inputs.iter().map(|t| LabelSymbol::parse(t)).collect(),
                            LabelSymbol::parse(&e.output),
                        )
                    }),
                )
            }
            OperatorKind::Relation => match arity {
                None | Some(Arity::Fixed(2)) => Ok(TransitionOp::relation(&self.name)),
                Some(a) => Err(invalid(format!("relations are binary, got {a}"))),
            },
        }
    }
}

pub fn register_operator(reg: &OperatorRegistry, spec: &OperatorSpec) -> Result<OperatorRegistry> {
    if reg.get(&spec.name).is_some() {
        return Err(Error::DuplicateName(spec.name.clone()));
    }
    reg.register(spec.build()?)
}
