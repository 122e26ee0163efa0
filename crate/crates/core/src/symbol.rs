//! Interned symbols and label alphabets.
//!
//! Every name the engine handles (labels, instance ids, bag ids, relation
//! names) is a [`Symbol`]: a pointer to a process-wide interned string. Equal
//! text always yields the same pointer, so comparison and hashing are O(1).
//! Ordering is by text so that anything sorted by symbol is stable across runs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

fn interner() -> &'static Mutex<HashSet<&'static str>> {
    static INTERNER: OnceLock<Mutex<HashSet<&'static str>>> = OnceLock::new();
    INTERNER.get_or_init(|| Mutex::new(HashSet::new()))
}

#[derive(Clone, Copy)]
pub struct Symbol(&'static str);

impl Symbol {
    pub fn new(text: &str) -> Self {
        let mut table = interner().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = table.get(text) {
            return Symbol(existing);
        }
        let leaked: &'static str = Box::leak(text.to_owned().into_boxed_str());
        table.insert(leaked);
        Symbol(leaked)
    }

    pub fn as_str(&self) -> &'static str {
        self.0
    }
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.0, other.0)
    }
}

impl Eq for Symbol {}

impl Hash for Symbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        (self.0.as_ptr() as usize).hash(state);
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if self == other {
            std::cmp::Ordering::Equal
        } else {
            self.0.cmp(other.0)
        }
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

impl From<&str> for Symbol {
    fn from(text: &str) -> Self {
        Symbol::new(text)
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.0)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ok(Symbol::new(&text))
    }
}

/// Parses the canonical decimal form of a non-negative integer ("0", "17";
/// not "07" or "+3").
fn canonical_number(text: &str) -> Option<u64> {
    let bytes = text.as_bytes();
    if bytes.is_empty() || !bytes.iter().all(u8::is_ascii_digit) {
        return None;
    }
    if bytes.len() > 1 && bytes[0] == b'0' {
        return None;
    }
    text.parse().ok()
}

/// An element of a label alphabet: a digit-style number or a symbolic name.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelSymbol {
    name: Symbol,
    value: Option<u64>,
}

impl LabelSymbol {
    /// Interns `text`; canonical decimal text becomes a numeric label.
    pub fn parse(text: &str) -> Self {
        LabelSymbol {
            name: Symbol::new(text),
            value: canonical_number(text),
        }
    }

    pub fn number(value: u64) -> Self {
        const CACHED: u64 = 1024;
        static SMALL: OnceLock<Vec<LabelSymbol>> = OnceLock::new();
        if value < CACHED {
            let small = SMALL.get_or_init(|| (0..CACHED).map(Self::number_uncached).collect());
            return small[value as usize];
        }
        Self::number_uncached(value)
    }

    fn number_uncached(value: u64) -> Self {
        LabelSymbol {
            name: Symbol::new(&value.to_string()),
            value: Some(value),
        }
    }

    pub fn name(&self) -> Symbol {
        self.name
    }

    pub fn as_str(&self) -> &'static str {
        self.name.as_str()
    }

    pub fn numeric_value(&self) -> Option<u64> {
        self.value
    }
}

impl PartialOrd for LabelSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LabelSymbol {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self.value, other.value) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.name.cmp(&other.name)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.name.cmp(&other.name),
        }
    }
}

impl fmt::Debug for LabelSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Some(v) => write!(f, "{v}"),
            None => write!(f, "{}", self.name),
        }
    }
}

impl fmt::Display for LabelSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name.as_str())
    }
}

impl Serialize for LabelSymbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LabelSymbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ok(LabelSymbol::parse(&text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphabetKind {
    Numeric,
    Symbolic,
}

/// A finite, ordered label alphabet. Numeric alphabets are kept sorted by
/// value; symbolic alphabets keep their declaration order.
#[derive(Clone)]
pub struct LabelAlphabet {
    kind: AlphabetKind,
    symbols: Vec<LabelSymbol>,
    index: HashMap<LabelSymbol, usize>,
}

impl LabelAlphabet {
    pub fn new(kind: AlphabetKind, symbols: impl IntoIterator<Item = LabelSymbol>) -> Result<Self> {
        let mut symbols: Vec<LabelSymbol> = symbols.into_iter().collect();
        if symbols.is_empty() {
            return Err(Error::InvalidAlphabet("alphabet is empty".into()));
        }
        if kind == AlphabetKind::Numeric {
            if let Some(bad) = symbols.iter().find(|s| s.numeric_value().is_none()) {
                return Err(Error::InvalidAlphabet(format!(
                    "numeric alphabet contains non-numeric label `{bad}`"
                )));
            }
            symbols.sort();
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, sym) in symbols.iter().enumerate() {
            if index.insert(*sym, i).is_some() {
                return Err(Error::InvalidAlphabet(format!("duplicate label `{sym}`")));
            }
        }
        Ok(LabelAlphabet {
            kind,
            symbols,
            index,
        })
    }

    /// Numeric alphabet `lo..=hi`.
    pub fn digits(lo: u64, hi: u64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidAlphabet(format!("empty range {lo}..{hi}")));
        }
        Self::new(AlphabetKind::Numeric, (lo..=hi).map(LabelSymbol::number))
    }

    pub fn numeric(values: impl IntoIterator<Item = u64>) -> Result<Self> {
        Self::new(AlphabetKind::Numeric, values.into_iter().map(LabelSymbol::number))
    }

    pub fn symbolic<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        Self::new(
            AlphabetKind::Symbolic,
            names.into_iter().map(LabelSymbol::parse),
        )
    }

    /// Builds an alphabet from free text tokens: numeric if every token is a
    /// canonical number, symbolic otherwise.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let labels: Vec<LabelSymbol> = tokens.into_iter().map(LabelSymbol::parse).collect();
        let kind = if !labels.is_empty() && labels.iter().all(|l| l.numeric_value().is_some()) {
            AlphabetKind::Numeric
        } else {
            AlphabetKind::Symbolic
        };
        Self::new(kind, labels)
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    pub fn symbols(&self) -> &[LabelSymbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn contains(&self, label: &LabelSymbol) -> bool {
        self.index.contains_key(label)
    }

    pub fn position(&self, label: &LabelSymbol) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Maps alphabet text to its label. Idempotent: the same text always
    /// yields the identical symbol.
    pub fn intern(&self, text: &str) -> Result<LabelSymbol> {
        let candidate = LabelSymbol::parse(text);
        if self.contains(&candidate) {
            Ok(candidate)
        } else {
            Err(Error::UnknownSymbol {
                text: text.to_owned(),
            })
        }
    }

    /// Compact textual form used by the fact-file writer: `lo..hi` for a
    /// contiguous numeric range, the space-separated symbols otherwise.
    pub fn to_fact_text(&self) -> String {
        if self.kind == AlphabetKind::Numeric && self.symbols.len() > 2 {
            let values: Vec<u64> = self.symbols.iter().filter_map(|s| s.numeric_value()).collect();
            let lo = values[0];
            let hi = values[values.len() - 1];
            if hi - lo + 1 == values.len() as u64 {
                return format!("{lo}..{hi}");
            }
        }
        self.symbols
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl PartialEq for LabelAlphabet {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.symbols == other.symbols
    }
}

impl Eq for LabelAlphabet {}

impl fmt::Debug for LabelAlphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabelAlphabet")
            .field("kind", &self.kind)
            .field("symbols", &self.symbols)
            .finish()
    }
}

impl Serialize for LabelAlphabet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("LabelAlphabet", 2)?;
        st.serialize_field("kind", &self.kind)?;
        st.serialize_field("symbols", &self.symbols)?;
        st.end()
    }
}
