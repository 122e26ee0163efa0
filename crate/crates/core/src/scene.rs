//! Relational scene understanding over fragmentary views.
//!
//! Each [`SceneFragment`] is one partial view: the objects a detector found
//! (CP facts) and the relation hints attached to the view (OP facts). A
//! hint whose two arguments are both detected is positive evidence for the
//! hinted relation; a hint with an undetected argument is negative evidence.
//! Relations are judged per ordered object pair, independently of each other.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::abduce::{ValidationReport, Violation, WitnessReason};
use crate::dataset::InstanceRef;
use crate::error::{Error, Result};
use crate::ledger::{ExampleLedger, LedgerEntry, Provenance, Target};
use crate::operators::OperatorRegistry;
use crate::symbol::{LabelSymbol, Symbol};
use crate::tp::{rank_hypotheses, TpVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RelationAtom {
    pub relation: Symbol,
    pub args: [LabelSymbol; 2],
}

impl RelationAtom {
    pub fn new(relation: &str, subject: &str, object: &str) -> Self {
        RelationAtom {
            relation: Symbol::new(relation),
            args: [LabelSymbol::parse(subject), LabelSymbol::parse(object)],
        }
    }
}

impl fmt::Display for RelationAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.relation, self.args[0], self.args[1])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SceneFragment {
    pub id: Symbol,
    pub detected: BTreeSet<LabelSymbol>,
    pub hints: Vec<RelationAtom>,
}

impl SceneFragment {
    pub fn new(id: &str, detected: &[&str], hints: Vec<RelationAtom>) -> Self {
        SceneFragment {
            id: Symbol::new(id),
            detected: detected.iter().map(|o| LabelSymbol::parse(o)).collect(),
            hints,
        }
    }

    /// The first hint argument that was not detected.
    pub fn missing_argument(&self, hint: &RelationAtom) -> Option<LabelSymbol> {
        hint.args.iter().find(|a| !self.detected.contains(a)).copied()
    }
}

fn check_relation(vocab: &OperatorRegistry, relation: Symbol) -> Result<()> {
    match vocab.get(relation.as_str()) {
        Some(op) if op.is_relation() => Ok(()),
        _ => Err(Error::UnknownRelation(relation.to_string())),
    }
}

/// One ledger entry per (fragment, hint): positive iff both hint arguments
/// were detected in that fragment. Negatives name the missing object.
pub fn build_scene_tp_examples(fragments: &[SceneFragment], vocab: &OperatorRegistry) -> Result<ExampleLedger> {
    let mut ledger = ExampleLedger::empty(Target::Tp);
    for fragment in sorted(fragments) {
        for hint in &fragment.hints {
            check_relation(vocab, hint.relation)?;
            let missing = fragment.missing_argument(hint);
            let entry = LedgerEntry {
                bag: fragment.id,
                s: LabelSymbol::parse(hint.relation.as_str()),
                tuple: hint.args.to_vec(),
                provenance: if missing.is_some() {
                    Provenance::MissingDetection
                } else {
                    Provenance::CoDetected
                },
                witness: missing.map(|m| InstanceRef(m.name())),
            };
            if missing.is_some() {
                ledger.negatives.push(entry);
            } else {
                ledger.positives.push(entry);
            }
        }
    }
    Ok(ledger)
}

fn sorted(fragments: &[SceneFragment]) -> Vec<&SceneFragment> {
    let mut out: Vec<&SceneFragment> = fragments.iter().collect();
    out.sort_by_key(|f| f.id);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairVerdict {
    pub pair: [LabelSymbol; 2],
    pub verdict: TpVerdict,
    /// Relations with positive and no negative evidence for this pair.
    pub accepted: Vec<Symbol>,
    /// Hinted relations that did not reach acceptance.
    pub unsupported: Vec<Symbol>,
}

impl PairVerdict {
    pub fn accepted_atoms(&self) -> impl Iterator<Item = RelationAtom> + '_ {
        self.accepted.iter().map(|r| RelationAtom {
            relation: *r,
            args: self.pair,
        })
    }
}

/// Ranks the relation vocabulary for every hinted object pair.
pub fn infer_scene_relations(fragments: &[SceneFragment], vocab: &OperatorRegistry) -> Result<Vec<PairVerdict>> {
    let ledger = build_scene_tp_examples(fragments, vocab)?;
    let mut by_pair: BTreeMap<[LabelSymbol; 2], ExampleLedger> = BTreeMap::new();
    for (entry, positive) in ledger
        .positives
        .iter()
        .map(|e| (e, true))
        .chain(ledger.negatives.iter().map(|e| (e, false)))
    {
        let pair = [entry.tuple[0], entry.tuple[1]];
        let sub = by_pair
            .entry(pair)
            .or_insert_with(|| ExampleLedger::empty(Target::Tp));
        if positive {
            sub.positives.push(entry.clone());
        } else {
            sub.negatives.push(entry.clone());
        }
    }
    let relations = relation_registry(vocab);
    Ok(by_pair
        .into_iter()
        .map(|(pair, sub)| {
            // exact entailment within the pair: tolerance 0 keeps every relation ranked
            let verdict = rank_hypotheses(&relations, &sub, 0.0);
            let accepted: Vec<Symbol> = verdict
                .ranked
                .iter()
                .filter(|s| s.covered_pos > 0 && s.covered_neg == 0)
                .map(|s| s.op_name)
                .collect();
            let hinted: BTreeSet<Symbol> = sub
                .positives
                .iter()
                .chain(&sub.negatives)
                .map(|e| e.s.name())
                .collect();
            let unsupported = relations
                .ops()
                .iter()
                .map(|op| op.name())
                .filter(|r| hinted.contains(r) && !accepted.contains(r))
                .collect();
            PairVerdict {
                pair,
                verdict,
                accepted,
                unsupported,
            }
        })
        .collect())
}

fn relation_registry(vocab: &OperatorRegistry) -> OperatorRegistry {
    vocab
        .ops()
        .iter()
        .filter(|op| op.is_relation())
        .fold(OperatorRegistry::empty(), |reg, op| {
            reg.register(op.clone()).expect("names already unique")
        })
}

pub fn accepted_relations(verdicts: &[PairVerdict]) -> Vec<RelationAtom> {
    verdicts.iter().flat_map(|v| v.accepted_atoms()).collect()
}

/// Checks detections against accepted relations: every hint matching an
/// accepted relation needs both arguments detected. Fragments without such
/// hints are left out of the report.
pub fn validate_scene_detections(fragments: &[SceneFragment], accepted: &[RelationAtom]) -> ValidationReport {
    let accepted: BTreeSet<&RelationAtom> = accepted.iter().collect();
    let mut report = ValidationReport::default();
    for fragment in sorted(fragments) {
        let relevant: Vec<&RelationAtom> = fragment.hints.iter().filter(|h| accepted.contains(h)).collect();
        if relevant.is_empty() {
            continue;
        }
        let mut violated = false;
        for hint in relevant {
            if let Some(missing) = fragment.missing_argument(hint) {
                violated = true;
                report.violating_bags.push(Violation {
                    bag: fragment.id,
                    witness: missing.name(),
                    position: None,
                    predicted: None,
                    reason: WitnessReason::MissingDetection,
                    constraint: hint.to_string(),
                });
            }
        }
        if !violated {
            report.consistent_bags.push(fragment.id);
        }
    }
    report
}

/// The three fragments of the table scene: vase and books on the table are
/// seen together with the table, the lamp is seen without it.
pub fn table_scene_fixture() -> Vec<SceneFragment> {
    vec![
        SceneFragment::new("IG1", &["Vase", "Table"], vec![RelationAtom::new("OnTop", "Vase", "Table")]),
        SceneFragment::new(
            "IG2",
            &["Books", "Vase", "Table"],
            vec![
                RelationAtom::new("OnTop", "Books", "Table"),
                RelationAtom::new("OnTop", "Vase", "Table"),
            ],
        ),
        SceneFragment::new("IG3", &["Lamp"], vec![RelationAtom::new("OnTop", "Lamp", "Table")]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_relation() {
        let fragments = vec![SceneFragment::new("f", &["A", "B"], vec![RelationAtom::new("Under", "A", "B")])];
        assert_eq!(
            build_scene_tp_examples(&fragments, &OperatorRegistry::scene_relations()),
            Err(Error::UnknownRelation("Under".into()))
        );
    }

    #[test]
    fn fixture_ledger() {
        let ledger = build_scene_tp_examples(&table_scene_fixture(), &OperatorRegistry::scene_relations()).unwrap();
        let pos: Vec<String> = ledger.positives.iter().map(|e| format!("{} {:?}", e.bag, e.tuple)).collect();
        assert_eq!(pos, vec!["IG1 [Vase, Table]", "IG2 [Books, Table]", "IG2 [Vase, Table]"]);
        assert_eq!(ledger.negatives.len(), 1);
        assert_eq!(ledger.negatives[0].bag, Symbol::new("IG3"));
        assert_eq!(ledger.negatives[0].witness, Some(InstanceRef::new("Table")));
        assert!(ledger.positives.iter().all(|e| e.witness.is_none()));
    }

    #[test]
    fn relations_per_pair() {
        let verdicts = infer_scene_relations(&table_scene_fixture(), &OperatorRegistry::scene_relations()).unwrap();
        let find = |a: &str, b: &str| {
            verdicts
                .iter()
                .find(|v| v.pair == [LabelSymbol::parse(a), LabelSymbol::parse(b)])
                .unwrap()
        };
        assert_eq!(find("Vase", "Table").accepted, vec![Symbol::new("OnTop")]);
        assert_eq!(find("Books", "Table").accepted, vec![Symbol::new("OnTop")]);
        let lamp = find("Lamp", "Table");
        assert!(lamp.accepted.is_empty());
        assert_eq!(lamp.unsupported, vec![Symbol::new("OnTop")]);
        let vase = find("Vase", "Table");
        assert_eq!(vase.verdict.score_of(Symbol::new("OnTop")).unwrap().covered_pos, 2);
        assert_eq!(vase.verdict.score_of(Symbol::new("NextTo")).unwrap().covered_pos, 0);
    }

    #[test]
    fn empty_fragments() {
        assert!(infer_scene_relations(&[], &OperatorRegistry::scene_relations()).unwrap().is_empty());
    }

    #[test]
    fn validation_flags_missing_object() {
        let accepted = vec![
            RelationAtom::new("OnTop", "Vase", "Table"),
            RelationAtom::new("OnTop", "Books", "Table"),
            RelationAtom::new("OnTop", "Lamp", "Table"),
        ];
        let report = validate_scene_detections(&table_scene_fixture(), &accepted);
        assert_eq!(report.consistent_bags, vec![Symbol::new("IG1"), Symbol::new("IG2")]);
        assert_eq!(report.violating_ids(), vec![Symbol::new("IG3")]);
        assert_eq!(report.violating_bags[0].witness, Symbol::new("Table"));
    }

    #[test]
    fn hintless_fragment_contributes_nothing() {
        let fragments = vec![SceneFragment::new("f0", &["Lamp"], vec![])];
        let report = validate_scene_detections(&fragments, &[RelationAtom::new("OnTop", "Lamp", "Table")]);
        assert!(report.consistent_bags.is_empty());
        assert!(report.violating_bags.is_empty());
    }
}
