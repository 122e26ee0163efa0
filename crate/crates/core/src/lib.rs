//! Learning transition operators from weakly labelled bags.
//!
//! A bag is a tuple of instances with one weak label `s`. A transition
//! operator maps the instances' hidden labels to `s`. Given a classifier's
//! predictions, [`tp::infer_tp`] ranks candidate operators. Given an operator,
//! [`abduce::abduce_labels`] narrows each instance to the labels compatible
//! with every bag it occurs in, and [`abduce::validate_classifier`] names the
//! bags whose predictions cannot be right.

pub mod abduce;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod facts;
pub mod ledger;
pub mod operators;
pub mod scene;
pub mod symbol;
pub mod tp;

pub use abduce::{
    abduce_labels, brute_force_abduction_oracle, validate_classifier, CandidateMap, ValidationReport, Violation,
    WitnessReason,
};
pub use dataset::{validate_dataset, Bag, Dataset, DatasetReport, InstanceRef, PredictionMode, PredictionSet};
pub use error::{Error, Result};
pub use facts::FactFile;
pub use ledger::{build_cp_examples, build_tp_examples, ExampleLedger, LedgerEntry, NegativePolicy, Provenance};
pub use operators::{
    eval_operator, preimage, register_operator, Arity, Builtin, OperatorRegistry, OperatorSpec, TransitionOp,
    DEFAULT_BUDGET,
};
pub use scene::{RelationAtom, SceneFragment};
pub use symbol::{AlphabetKind, LabelAlphabet, LabelSymbol, Symbol};
pub use tp::{infer_tp, rank_hypotheses, score_hypothesis, HypothesisScore, TpVerdict};
