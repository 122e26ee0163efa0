//! Transition-function identification.
//!
//! Each candidate operator is scored by how many positive examples it
//! entails minus how many negative examples it entails. Candidates whose
//! positive coverage falls below the tolerance are dropped; the remaining
//! maximum-score candidates are the winners.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, PredictionSet};
use crate::error::Result;
use crate::ledger::{build_tp_examples, ExampleLedger, LedgerEntry, NegativePolicy};
use crate::operators::{OperatorRegistry, TransitionOp};
use crate::symbol::Symbol;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisScore {
    pub op_name: Symbol,
    pub covered_pos: usize,
    pub covered_neg: usize,
    pub total_pos: usize,
    pub total_neg: usize,
    pub score: i64,
    /// covered_pos / total_pos; 1.0 on an empty positive set.
    pub consistency: f64,
}

impl HypothesisScore {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.consistency >= tolerance
    }
}

fn covered(op: &TransitionOp, entries: &[LedgerEntry]) -> Result<usize> {
    let mut count = 0;
    for entry in entries {
        if op.eval(&entry.tuple)? == entry.s {
            count += 1;
        }
    }
    Ok(count)
}

pub fn score_hypothesis(op: &TransitionOp, ledger: &ExampleLedger) -> Result<HypothesisScore> {
    let covered_pos = covered(op, &ledger.positives)?;
    let covered_neg = covered(op, &ledger.negatives)?;
    let total_pos = ledger.positives.len();
    Ok(HypothesisScore {
        op_name: op.name(),
        covered_pos,
        covered_neg,
        total_pos,
        total_neg: ledger.negatives.len(),
        score: covered_pos as i64 - covered_neg as i64,
        consistency: if total_pos == 0 {
            1.0
        } else {
            covered_pos as f64 / total_pos as f64
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedOp {
    pub op_name: Symbol,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TpVerdict {
    /// Every scored candidate, by descending score; ties keep registry order.
    pub ranked: Vec<HypothesisScore>,
    /// Candidates with the maximum score among those meeting the tolerance.
    pub winners: Vec<Symbol>,
    pub unique: bool,
    pub tolerance: f64,
    /// Candidates that could not be evaluated on this data (arity, label kind).
    pub skipped: Vec<SkippedOp>,
    pub diagnostic: Option<String>,
}

impl TpVerdict {
    pub fn best_consistency(&self) -> Option<f64> {
        self.ranked.iter().map(|s| s.consistency).reduce(f64::max)
    }

    pub fn rank_of(&self, name: Symbol) -> Option<usize> {
        self.ranked.iter().position(|s| s.op_name == name).map(|p| p + 1)
    }

    pub fn score_of(&self, name: Symbol) -> Option<&HypothesisScore> {
        self.ranked.iter().find(|s| s.op_name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

/// Scores every candidate of `registry` against `ledger` and assembles the
/// verdict. Operators that fail to evaluate are reported as skipped.
pub fn rank_hypotheses(registry: &OperatorRegistry, ledger: &ExampleLedger, tolerance: f64) -> TpVerdict {
    let results: Vec<(usize, Result<HypothesisScore>)> = registry
        .ops()
        .par_iter()
        .enumerate()
        .map(|(i, op)| (i, score_hypothesis(op, ledger)))
        .collect();

    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for (i, res) in results {
        match res {
            Ok(score) => scored.push((i, score)),
            Err(e) => skipped.push(SkippedOp {
                op_name: registry.ops()[i].name(),
                reason: e.to_string(),
            }),
        }
    }
    // stable sort keeps registry order among equal scores
    scored.sort_by(|a, b| b.1.score.cmp(&a.1.score).then(a.0.cmp(&b.0)));
    let ranked: Vec<HypothesisScore> = scored.into_iter().map(|(_, s)| s).collect();

    let best = ranked
        .iter()
        .filter(|s| s.passes(tolerance))
        .map(|s| s.score)
        .max();
    let winners: Vec<Symbol> = match best {
        Some(best) => ranked
            .iter()
            .filter(|s| s.passes(tolerance) && s.score == best)
            .map(|s| s.op_name)
            .collect(),
        None => Vec::new(),
    };
    let diagnostic = if ranked.is_empty() {
        Some("no candidate operator could be evaluated on this data".to_owned())
    } else if winners.is_empty() {
        let best = ranked.iter().map(|s| s.consistency).fold(0.0, f64::max);
        Some(format!(
            "no operator reaches consistency {tolerance}; best consistency is {best}"
        ))
    } else if winners.len() > 1 {
        Some(format!("{} operators explain the data equally well", winners.len()))
    } else {
        None
    };
    TpVerdict {
        unique: winners.len() == 1,
        ranked,
        winners,
        tolerance,
        skipped,
        diagnostic,
    }
}

pub fn infer_tp(
    d: &Dataset,
    preds: &PredictionSet,
    registry: &OperatorRegistry,
    tolerance: f64,
    policy: NegativePolicy<'_>,
    seed: u64,
) -> Result<TpVerdict> {
    let ledger = build_tp_examples(d, preds, policy, seed)?;
    Ok(rank_hypotheses(registry, &ledger, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Bag, InstanceRef};
    use crate::ledger::{Provenance, Target};
    use crate::symbol::{LabelAlphabet, LabelSymbol};

    fn n(v: u64) -> LabelSymbol {
        LabelSymbol::number(v)
    }

    fn single(bags: &[(&str, &[&str], u64)], preds: &[(&str, u64)]) -> (Dataset, PredictionSet) {
        let d = Dataset::new(
            bags.iter().map(|(id, inst, s)| Bag::new(id, inst, n(*s))).collect(),
            LabelAlphabet::digits(0, 20).unwrap(),
            LabelAlphabet::digits(0, 400).unwrap(),
            bags[0].1.len(),
        );
        let p = PredictionSet::shared(preds.iter().map(|(i, v)| (InstanceRef::new(i), n(*v))));
        (d, p)
    }

    #[test]
    fn addition_ledger_scores() {
        let (d, p) = single(
            &[("b1", &["i10", "i11"], 21), ("b2", &["i13", "i14"], 27)],
            &[("i10", 10), ("i11", 11), ("i13", 13), ("i14", 14)],
        );
        let reg = OperatorRegistry::builtins();
        let ledger = build_tp_examples(
            &d,
            &p,
            NegativePolicy::CorruptS {
                registry: &reg,
                per_positive: 1,
            },
            1,
        )
        .unwrap();
        let sum = score_hypothesis(&TransitionOp::sum(), &ledger).unwrap();
        assert_eq!((sum.covered_pos, sum.covered_neg, sum.score), (2, 0, 2));
        let product = score_hypothesis(&TransitionOp::product(), &ledger).unwrap();
        assert_eq!(product.covered_pos, 0);
        assert!(product.score <= 0);
    }

    #[test]
    fn empty_ledger_scores_zero() {
        let ledger = ExampleLedger::empty(Target::Tp);
        for op in OperatorRegistry::builtins().ops() {
            let s = score_hypothesis(op, &ledger).unwrap();
            assert_eq!(s.score, 0);
        }
    }

    #[test]
    fn negatives_subtract() {
        let mut ledger = ExampleLedger::empty(Target::Tp);
        let entry = |s: u64, provenance| LedgerEntry {
            bag: Symbol::new("b"),
            s: n(s),
            tuple: vec![n(2), n(3)],
            provenance,
            witness: None,
        };
        ledger.positives.push(entry(5, Provenance::Observed));
        ledger.negatives.push(entry(5, Provenance::CorruptS));
        ledger.negatives.push(entry(6, Provenance::CorruptS));
        let s = score_hypothesis(&TransitionOp::sum(), &ledger).unwrap();
        assert_eq!((s.covered_pos, s.covered_neg, s.score), (1, 1, 0));
        let p = score_hypothesis(&TransitionOp::product(), &ledger).unwrap();
        assert_eq!((p.covered_pos, p.covered_neg, p.score), (0, 1, -1));
    }

    #[test]
    fn xor_identified() {
        let (d, p) = single(
            &[("b1", &["i11", "i13"], 6), ("b2", &["i17", "i19"], 2)],
            &[("i11", 11), ("i13", 13), ("i17", 17), ("i19", 19)],
        );
        let reg = OperatorRegistry::builtins();
        let v = infer_tp(
            &d,
            &p,
            &reg,
            1.0,
            NegativePolicy::CorruptS {
                registry: &reg,
                per_positive: 1,
            },
            0,
        )
        .unwrap();
        assert!(v.unique);
        assert_eq!(v.winners, vec![Symbol::new("xor")]);
        assert_eq!(v.skipped.len(), 1, "boolC is 3-ary");
    }

    #[test]
    fn bit_disjoint_tie() {
        let (d, p) = single(&[("b1", &["i1", "i2"], 3)], &[("i1", 1), ("i2", 2)]);
        let reg = OperatorRegistry::builtins();
        let v = infer_tp(&d, &p, &reg, 1.0, NegativePolicy::None, 0).unwrap();
        assert!(!v.unique);
        assert_eq!(v.winners, vec![Symbol::new("sum"), Symbol::new("xor")]);
    }

    #[test]
    fn all_zero_tie() {
        let (d, p) = single(&[("b1", &["i0a", "i0b"], 0)], &[("i0a", 0), ("i0b", 0)]);
        let reg = OperatorRegistry::builtins();
        let v = infer_tp(&d, &p, &reg, 1.0, NegativePolicy::None, 0).unwrap();
        assert!(!v.unique);
        for name in ["sum", "product", "xor"] {
            assert!(v.winners.contains(&Symbol::new(name)));
        }
    }

    #[test]
    fn nothing_passes_tolerance() {
        let (d, p) = single(
            &[("b1", &["i1", "i2"], 3), ("b2", &["i3", "i4"], 12)],
            &[("i1", 1), ("i2", 2), ("i3", 3), ("i4", 5)],
        );
        let reg = OperatorRegistry::builtins();
        let v = infer_tp(&d, &p, &reg, 1.0, NegativePolicy::None, 0).unwrap();
        assert!(v.winners.is_empty());
        assert!(!v.unique);
        assert_eq!(v.best_consistency(), Some(0.5));
        assert!(v.diagnostic.unwrap().contains("best consistency"));
        // relaxed tolerance admits the half-consistent candidates
        let v = infer_tp(&d, &p, &reg, 0.5, NegativePolicy::None, 0).unwrap();
        assert_eq!(v.winners, vec![Symbol::new("sum"), Symbol::new("xor")]);
    }
}
