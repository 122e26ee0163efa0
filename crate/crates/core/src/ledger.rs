//! Positive and negative example ledgers for TP and CP hypotheses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, InstanceRef, PredictionSet};
use crate::error::Result;
use crate::operators::{has_completion, OperatorRegistry, TransitionOp, DEFAULT_BUDGET};
use crate::symbol::{LabelAlphabet, LabelSymbol, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Target {
    Tp,
    Cp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// An observed (bag, weak label) pair.
    Observed,
    /// Weak label replaced by one no registered operator produces.
    CorruptS,
    /// Weak label replaced by one the reference operator does not produce.
    CorruptVsOp,
    /// Predictions satisfy the operator (and the truth, when known).
    CpConsistent,
    /// Some prediction differs from the ground truth.
    CpTruthMismatch,
    /// The predicted tuple does not evaluate to the weak label.
    CpEvalFailure,
    /// Scene hint whose arguments were both detected.
    CoDetected,
    /// Scene hint with at least one undetected argument.
    MissingDetection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub bag: Symbol,
    pub s: LabelSymbol,
    pub tuple: Vec<LabelSymbol>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<InstanceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExampleLedger {
    pub target: Target,
    pub positives: Vec<LedgerEntry>,
    pub negatives: Vec<LedgerEntry>,
}

impl ExampleLedger {
    pub fn empty(target: Target) -> Self {
        ExampleLedger {
            target,
            positives: Vec::new(),
            negatives: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }
}

/// How E⁻ is sampled for a TP ledger.
#[derive(Debug, Clone, Copy)]
pub enum NegativePolicy<'a> {
    /// No negatives.
    None,
    /// For each positive, `per_positive` weak labels drawn uniformly from S
    /// minus every label any registered operator assigns to the tuple.
    CorruptS {
        registry: &'a OperatorRegistry,
        per_positive: usize,
    },
    /// Like `CorruptS` but only the reference operator's output is excluded.
    CorruptVsOp {
        op: &'a TransitionOp,
        per_positive: usize,
    },
}

/// Serializable selector for [`NegativePolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePolicyKind {
    None,
    #[default]
    CorruptS,
    CorruptVsOp,
}

pub fn build_tp_examples(
    d: &Dataset,
    preds: &PredictionSet,
    policy: NegativePolicy<'_>,
    seed: u64,
) -> Result<ExampleLedger> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = ExampleLedger::empty(Target::Tp);
    for bag in &d.bags {
        let tuple = preds.predicted_tuple(bag)?;
        let mut forbidden = vec![bag.weak_label];
        let per_positive = match policy {
            NegativePolicy::None => 0,
            NegativePolicy::CorruptS {
                registry,
                per_positive,
            } => {
                // ops that cannot evaluate this tuple constrain nothing
                forbidden.extend(registry.ops().iter().filter_map(|op| op.eval(&tuple).ok()));
                per_positive
            }
            NegativePolicy::CorruptVsOp { op, per_positive } => {
                forbidden.extend(op.eval(&tuple).ok());
                per_positive
            }
        };
        if per_positive > 0 {
            let provenance = match policy {
                NegativePolicy::CorruptVsOp { .. } => Provenance::CorruptVsOp,
                _ => Provenance::CorruptS,
            };
            let pool: Vec<LabelSymbol> = d
                .weak_alphabet
                .symbols()
                .iter()
                .filter(|s| !forbidden.contains(s))
                .copied()
                .collect();
            for s in pool.choose_multiple(&mut rng, per_positive.min(pool.len())) {
                ledger.negatives.push(LedgerEntry {
                    bag: bag.id,
                    s: *s,
                    tuple: tuple.clone(),
                    provenance,
                    witness: None,
                });
            }
        }
        ledger.positives.push(LedgerEntry {
            bag: bag.id,
            s: bag.weak_label,
            tuple,
            provenance: Provenance::Observed,
            witness: None,
        });
    }
    Ok(ledger)
}

/// The leftmost position at which the predicted prefix stops extending to
/// any tuple the operator maps to `s`. `None` when the whole tuple satisfies
/// the operator.
pub(crate) fn prefix_witness(
    op: &TransitionOp,
    s: LabelSymbol,
    tuple: &[LabelSymbol],
    alphabet: &LabelAlphabet,
    budget: u64,
) -> Result<Option<usize>> {
    for p in 0..tuple.len() {
        if !has_completion(op, s, &tuple[..=p], alphabet, tuple.len(), budget)? {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Per-bag CP examples under a known operator. A bag is positive when the
/// predicted tuple evaluates to its weak label and agrees with the truth
/// everywhere the truth is known; otherwise it is negative and names one
/// offending instance.
pub fn build_cp_examples(d: &Dataset, op: &TransitionOp, preds: &PredictionSet) -> Result<ExampleLedger> {
    op.check_arity(d.bag_size)?;
    let mut ledger = ExampleLedger::empty(Target::Cp);
    for bag in &d.bags {
        op.check_arity(bag.len())?;
        let tuple = preds.predicted_tuple(bag)?;
        let truth_miss = bag
            .instances
            .iter()
            .zip(&tuple)
            .find(|(inst, pred)| d.truth_of(inst).is_some_and(|t| t != **pred))
            .map(|(inst, _)| *inst);
        let satisfied = op.eval(&tuple)? == bag.weak_label;
        let (provenance, witness) = match (truth_miss, satisfied) {
            (Some(inst), _) => (Provenance::CpTruthMismatch, Some(inst)),
            (None, false) => {
                let pos = prefix_witness(op, bag.weak_label, &tuple, &d.instance_alphabet, DEFAULT_BUDGET)
                    .unwrap_or(None)
                    .unwrap_or(tuple.len() - 1);
                (Provenance::CpEvalFailure, Some(bag.instances[pos]))
            }
            (None, true) => (Provenance::CpConsistent, None),
        };
        let entry = LedgerEntry {
            bag: bag.id,
            s: bag.weak_label,
            tuple,
            provenance,
            witness,
        };
        if witness.is_some() {
            ledger.negatives.push(entry);
        } else {
            ledger.positives.push(entry);
        }
    }
    Ok(ledger)
}
