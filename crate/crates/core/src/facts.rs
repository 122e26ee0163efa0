//! Line-oriented fact files.
//!
//! ```text
//! % digit bags
//! alphabet instance 0 1 2 3 4 5 6 7 8 9
//! alphabet weak 0..81
//! bagsize 2
//! bag(b1, [i10, i11], 21).
//! cp(f, i10, 10).
//! truth(i10, 10).
//!
//! % scenes
//! alphabet objects Table Vase Books Lamp
//! relations OnTop NextTo Beside
//! fragment(ig1).
//! detect(ig1, Vase).
//! hint(ig1, OnTop, Vase, Table).
//! accept(OnTop, Vase, Table).
//! ```
//!
//! Facts end with a period; directives (`alphabet`, `bagsize`, `relations`)
//! may omit it. `%` starts a comment. `cp(f, ...)` is a shared classifier;
//! `cp(f1, ...)`, `cp(f2, ...)` are per-position classifiers (1-based). An
//! optional fourth `cp` argument is a confidence in [0, 1].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::dataset::{Bag, Dataset, InstanceRef, PredictionMode, PredictionSet};
use crate::error::{Error, Result};
use crate::operators::OperatorRegistry;
use crate::scene::{RelationAtom, SceneFragment};
use crate::symbol::{AlphabetKind, LabelAlphabet, LabelSymbol, Symbol};

#[derive(Debug, Clone, Default)]
pub struct FactFile {
    pub instance_alphabet: Option<LabelAlphabet>,
    pub weak_alphabet: Option<LabelAlphabet>,
    pub object_alphabet: Option<LabelAlphabet>,
    pub bag_size: Option<usize>,
    pub relations: Vec<Symbol>,
    pub bags: Vec<Bag>,
    pub predictions: Option<PredictionSet>,
    pub truth: BTreeMap<InstanceRef, LabelSymbol>,
    pub fragments: Vec<SceneFragment>,
    pub accepted: Vec<RelationAtom>,
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Atom(String),
    List(Vec<String>),
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn unquote(token: &str) -> &str {
    let t = token.trim();
    for q in ['\'', '"'] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return &t[1..t.len() - 1];
        }
    }
    t
}

/// Splits `name(arg, [a, b], arg)` into its functor and arguments.
fn parse_term(text: &str, line: usize) -> Result<(String, Vec<Arg>)> {
    let open = text
        .find('(')
        .ok_or_else(|| parse_error(line, format!("expected `name(...)`, got `{text}`")))?;
    if !text.ends_with(')') {
        return Err(parse_error(line, "unbalanced parentheses"));
    }
    let name = text[..open].trim().to_owned();
    if name.is_empty() {
        return Err(parse_error(line, "missing fact name"));
    }
    let body = &text[open + 1..text.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut pieces = Vec::new();
    for (i, c) in body.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| parse_error(line, "unbalanced brackets"))?
            }
            ',' if depth == 0 => {
                pieces.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(parse_error(line, "unbalanced brackets"));
    }
    pieces.push(&body[start..]);
    for piece in pieces {
        let piece = piece.trim();
        if let Some(inner) = piece.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| parse_error(line, "malformed list"))?;
            let items: Vec<String> = inner
                .split(',')
                .map(|s| unquote(s).to_owned())
                .filter(|s| !s.is_empty())
                .collect();
            args.push(Arg::List(items));
        } else if piece.is_empty() {
            return Err(parse_error(line, "empty argument"));
        } else {
            args.push(Arg::Atom(unquote(piece).to_owned()));
        }
    }
    Ok((name, args))
}

fn expand_tokens<'a>(tokens: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for token in tokens {
        match token.split_once("..") {
            Some((lo, hi)) => {
                let lo: u64 = lo
                    .parse()
                    .map_err(|_| parse_error(line, format!("bad range `{token}`")))?;
                let hi: u64 = hi
                    .parse()
                    .map_err(|_| parse_error(line, format!("bad range `{token}`")))?;
                if lo > hi {
                    return Err(parse_error(line, format!("empty range `{token}`")));
                }
                out.extend((lo..=hi).map(|v| v.to_string()));
            }
            None => out.push(token.to_owned()),
        }
    }
    Ok(out)
}

/// Parses alphabet text as written after `alphabet <name>`, e.g. `0..9` or
/// `Table Vase Books`. Commas count as spaces.
pub fn parse_alphabet(text: &str) -> Result<LabelAlphabet> {
    let tokens = expand_tokens(text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()), 0)?;
    LabelAlphabet::from_tokens(tokens.iter().map(String::as_str))
}

fn atoms<const N: usize>(name: &str, args: &[Arg], line: usize) -> Result<[String; N]> {
    if args.len() != N {
        return Err(parse_error(
            line,
            format!("`{name}` takes {N} arguments, got {}", args.len()),
        ));
    }
    let mut out: [String; N] = std::array::from_fn(|_| String::new());
    for (slot, arg) in out.iter_mut().zip(args) {
        match arg {
            Arg::Atom(a) => *slot = a.clone(),
            Arg::List(_) => return Err(parse_error(line, format!("`{name}` does not take a list"))),
        }
    }
    Ok(out)
}

/// `f` → shared; `f<k>` → position k-1.
fn classifier_position(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('f')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().filter(|k| *k >= 1).map(|k| k - 1)
}

impl FactFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = FactFile::default();
        let mut cp_lines: Vec<(usize, String, String, String, Option<String>)> = Vec::new();
        let mut fragment_index: BTreeMap<Symbol, usize> = BTreeMap::new();

        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('%').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            let head = words.next().unwrap_or("");
            if matches!(head, "alphabet" | "bagsize" | "relations") {
                let content = content.strip_suffix('.').unwrap_or(content);
                let mut words = content.split_whitespace().skip(1);
                match head {
                    "alphabet" => {
                        let which = words
                            .next()
                            .ok_or_else(|| parse_error(line, "alphabet needs a name"))?;
                        let tokens = expand_tokens(words, line)?;
                        let alphabet = LabelAlphabet::from_tokens(tokens.iter().map(String::as_str))
                            .map_err(|e| parse_error(line, e.to_string()))?;
                        match which {
                            "instance" => file.instance_alphabet = Some(alphabet),
                            "weak" => file.weak_alphabet = Some(alphabet),
                            "objects" => file.object_alphabet = Some(alphabet),
                            other => return Err(parse_error(line, format!("unknown alphabet `{other}`"))),
                        }
                    }
                    "bagsize" => {
                        let size = words
                            .next()
                            .and_then(|w| w.parse().ok())
                            .ok_or_else(|| parse_error(line, "bagsize needs an integer"))?;
                        file.bag_size = Some(size);
                    }
                    _ => file.relations.extend(words.map(Symbol::new)),
                }
                continue;
            }

            let fact = content
                .strip_suffix('.')
                .ok_or_else(|| parse_error(line, "missing terminating period"))?
                .trim();
            let (name, args) = parse_term(fact, line)?;
            match name.as_str() {
                "bag" => {
                    let (id, list, s) = match args.as_slice() {
                        [Arg::Atom(id), Arg::List(list), Arg::Atom(s)] => (id, list, s),
                        _ => return Err(parse_error(line, "expected bag(id, [instances], label)")),
                    };
                    if list.is_empty() {
                        return Err(parse_error(line, "bag with no instances"));
                    }
                    file.bags.push(Bag {
                        id: Symbol::new(id),
                        instances: list.iter().map(|i| InstanceRef::new(i)).collect(),
                        weak_label: LabelSymbol::parse(s),
                    });
                }
                "cp" => match args.len() {
                    3 => {
                        let [f, inst, label] = atoms::<3>("cp", &args, line)?;
                        cp_lines.push((line, f, inst, label, None));
                    }
                    _ => {
                        let [f, inst, label, conf] = atoms::<4>("cp", &args, line)?;
                        cp_lines.push((line, f, inst, label, Some(conf)));
                    }
                },
                "truth" => {
                    let [inst, label] = atoms::<2>("truth", &args, line)?;
                    file.truth.insert(InstanceRef::new(&inst), LabelSymbol::parse(&label));
                }
                "fragment" => {
                    let [id] = atoms::<1>("fragment", &args, line)?;
                    file.fragment_mut(&mut fragment_index, Symbol::new(&id));
                }
                "detect" => {
                    let [id, object] = atoms::<2>("detect", &args, line)?;
                    file.fragment_mut(&mut fragment_index, Symbol::new(&id))
                        .detected
                        .insert(LabelSymbol::parse(&object));
                }
                "hint" => {
                    let [id, rel, a, b] = atoms::<4>("hint", &args, line)?;
                    file.fragment_mut(&mut fragment_index, Symbol::new(&id))
                        .hints
                        .push(RelationAtom::new(&rel, &a, &b));
                }
                "accept" => {
                    let [rel, a, b] = atoms::<3>("accept", &args, line)?;
                    file.accepted.push(RelationAtom::new(&rel, &a, &b));
                }
                other => return Err(parse_error(line, format!("unknown fact `{other}`"))),
            }
        }

        if !cp_lines.is_empty() {
            let positional: Vec<bool> = cp_lines
                .iter()
                .map(|(_, f, ..)| classifier_position(f).is_some())
                .collect();
            let mode = if positional.iter().all(|p| *p) {
                PredictionMode::Positional
            } else if positional.iter().all(|p| !*p) {
                PredictionMode::Shared
            } else {
                return Err(parse_error(
                    cp_lines[0].0,
                    "cp facts mix shared (`f`) and per-position (`f1`, `f2`, ...) classifiers",
                ));
            };
            let mut preds = PredictionSet::new(mode);
            for (line, f, inst, label, conf) in cp_lines {
                let inst = InstanceRef::new(&inst);
                let position = classifier_position(&f);
                preds.insert(inst, position, LabelSymbol::parse(&label));
                if let Some(conf) = conf {
                    let p: f64 = conf
                        .parse()
                        .map_err(|_| parse_error(line, format!("bad confidence `{conf}`")))?;
                    preds
                        .set_confidence(inst, position, p)
                        .map_err(|e| parse_error(line, e.to_string()))?;
                }
            }
            file.predictions = Some(preds);
        }
        Ok(file)
    }

    fn fragment_mut(&mut self, index: &mut BTreeMap<Symbol, usize>, id: Symbol) -> &mut SceneFragment {
        let fragments = &mut self.fragments;
        let i = *index.entry(id).or_insert_with(|| {
            fragments.push(SceneFragment {
                id,
                detected: BTreeSet::new(),
                hints: Vec::new(),
            });
            fragments.len() - 1
        });
        &mut self.fragments[i]
    }

    /// Assembles the dataset. Missing alphabets fall back to the labels
    /// seen in the file: Y from truth and cp facts, S from the bags' weak
    /// labels. A missing `bagsize` is taken from the first bag.
    pub fn dataset(&self) -> Result<Dataset> {
        let instance_alphabet = match &self.instance_alphabet {
            Some(a) => a.clone(),
            None => {
                let mut seen: BTreeSet<LabelSymbol> = self.truth.values().copied().collect();
                if let Some(p) = &self.predictions {
                    seen.extend(p.iter().map(|(_, l)| *l));
                }
                alphabet_from_labels(seen).map_err(|_| {
                    Error::Parse {
                        line: 0,
                        message: "no `alphabet instance` and no labels to infer it from".into(),
                    }
                })?
            }
        };
        let weak_alphabet = match &self.weak_alphabet {
            Some(a) => a.clone(),
            None => alphabet_from_labels(self.bags.iter().map(|b| b.weak_label).collect()).map_err(|_| {
                Error::Parse {
                    line: 0,
                    message: "no `alphabet weak` and no bags to infer it from".into(),
                }
            })?,
        };
        let bag_size = self
            .bag_size
            .or_else(|| self.bags.first().map(Bag::len))
            .unwrap_or(0);
        let mut d = Dataset::new(self.bags.clone(), instance_alphabet, weak_alphabet, bag_size);
        if !self.truth.is_empty() {
            d.ground_truth = Some(self.truth.clone());
        }
        Ok(d)
    }

    /// Relation vocabulary: declared relations, or the default OnTop /
    /// NextTo / Beside set, plus any relation named by a hint or accept fact.
    pub fn relation_vocabulary(&self) -> OperatorRegistry {
        let mut reg = if self.relations.is_empty() {
            OperatorRegistry::scene_relations()
        } else {
            OperatorRegistry::empty()
        };
        let mentioned = self
            .relations
            .iter()
            .copied()
            .chain(self.fragments.iter().flat_map(|f| f.hints.iter().map(|h| h.relation)))
            .chain(self.accepted.iter().map(|a| a.relation));
        for rel in mentioned {
            if reg.get(rel.as_str()).is_none() {
                reg = reg
                    .register(crate::operators::TransitionOp::relation(rel.as_str()))
                    .expect("checked absent");
            }
        }
        reg
    }
}

fn alphabet_from_labels(labels: BTreeSet<LabelSymbol>) -> Result<LabelAlphabet> {
    let kind = if labels.iter().all(|l| l.numeric_value().is_some()) {
        AlphabetKind::Numeric
    } else {
        AlphabetKind::Symbolic
    };
    LabelAlphabet::new(kind, labels)
}

/// Serializes a dataset (and optionally predictions) to the fact grammar.
pub fn write_dataset(d: &Dataset, preds: Option<&PredictionSet>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "alphabet instance {}", d.instance_alphabet.to_fact_text());
    let _ = writeln!(out, "alphabet weak {}", d.weak_alphabet.to_fact_text());
    let _ = writeln!(out, "bagsize {}", d.bag_size);
    for bag in &d.bags {
        let instances: Vec<&str> = bag.instances.iter().map(InstanceRef::as_str).collect();
        let _ = writeln!(out, "bag({}, [{}], {}).", bag.id, instances.join(", "), bag.weak_label);
    }
    if let Some(truth) = &d.ground_truth {
        for (inst, label) in truth {
            let _ = writeln!(out, "truth({inst}, {label}).");
        }
    }
    if let Some(preds) = preds {
        for (key, label) in preds.iter() {
            let f = match key.position {
                Some(p) => format!("f{}", p + 1),
                None => "f".to_owned(),
            };
            let conf = preds
                .confidence(key.instance, key.position.unwrap_or(0))
                .map(|c| format!(", {c}"))
                .unwrap_or_default();
            let _ = writeln!(out, "cp({f}, {}, {label}{conf}).", key.instance);
        }
    }
    out
}

pub fn write_scene(
    fragments: &[SceneFragment],
    objects: Option<&LabelAlphabet>,
    vocab: Option<&OperatorRegistry>,
    accepted: &[RelationAtom],
) -> String {
    let mut out = String::new();
    if let Some(objects) = objects {
        let _ = writeln!(out, "alphabet objects {}", objects.to_fact_text());
    }
    if let Some(vocab) = vocab {
        let names: Vec<&str> = vocab.ops().iter().map(|op| op.name().as_str()).collect();
        let _ = writeln!(out, "relations {}", names.join(" "));
    }
    for f in fragments {
        let _ = writeln!(out, "fragment({}).", f.id);
        for object in &f.detected {
            let _ = writeln!(out, "detect({}, {object}).", f.id);
        }
        for h in &f.hints {
            let _ = writeln!(out, "hint({}, {}, {}, {}).", f.id, h.relation, h.args[0], h.args[1]);
        }
    }
    for a in accepted {
        let _ = writeln!(out, "accept({}, {}, {}).", a.relation, a.args[0], a.args[1]);
    }
    out
}
