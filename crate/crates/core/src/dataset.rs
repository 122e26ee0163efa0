//! Bags, datasets and classifier predictions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{LabelAlphabet, LabelSymbol, Symbol};

/// A named instance (an image, a scene fragment). The same instance may be
/// referenced from several bags.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceRef(pub Symbol);

impl InstanceRef {
    pub fn new(id: &str) -> Self {
        InstanceRef(Symbol::new(id))
    }

    pub fn as_str(&self) -> &'static str {
        self.0.as_str()
    }
}

impl fmt::Debug for InstanceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for InstanceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.as_str())
    }
}

/// An ordered tuple of instances observed together with one weak label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bag {
    pub id: Symbol,
    pub instances: Vec<InstanceRef>,
    pub weak_label: LabelSymbol,
}

impl Bag {
    pub fn new(id: &str, instances: &[&str], weak_label: LabelSymbol) -> Self {
        Bag {
            id: Symbol::new(id),
            instances: instances.iter().map(|i| InstanceRef::new(i)).collect(),
            weak_label,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// A collection of bags together with the instance alphabet Y, the weak-label
/// alphabet S and, for generated data, the hidden per-instance labels.
///
/// Construction does not check invariants; run [`validate_dataset`] on
/// anything loaded from outside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub bags: Vec<Bag>,
    pub instance_alphabet: LabelAlphabet,
    pub weak_alphabet: LabelAlphabet,
    pub bag_size: usize,
    pub ground_truth: Option<BTreeMap<InstanceRef, LabelSymbol>>,
}

impl Dataset {
    pub fn new(
        bags: Vec<Bag>,
        instance_alphabet: LabelAlphabet,
        weak_alphabet: LabelAlphabet,
        bag_size: usize,
    ) -> Self {
        Dataset {
            bags,
            instance_alphabet,
            weak_alphabet,
            bag_size,
            ground_truth: None,
        }
    }

    pub fn with_ground_truth(mut self, truth: BTreeMap<InstanceRef, LabelSymbol>) -> Self {
        self.ground_truth = Some(truth);
        self
    }

    /// Every instance referenced by some bag, in id order.
    pub fn instances(&self) -> BTreeSet<InstanceRef> {
        self.bags
            .iter()
            .flat_map(|b| b.instances.iter().copied())
            .collect()
    }

    pub fn truth_of(&self, instance: &InstanceRef) -> Option<LabelSymbol> {
        self.ground_truth.as_ref()?.get(instance).copied()
    }

    pub fn truth_tuple(&self, bag: &Bag) -> Option<Vec<LabelSymbol>> {
        bag.instances.iter().map(|i| self.truth_of(i)).collect()
    }

    /// Keeps the first `n` bags; alphabets and truth are left untouched.
    pub fn truncated(&self, n: usize) -> Dataset {
        let mut out = self.clone();
        out.bags.truncate(n);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetViolation {
    BagSizeMismatch {
        bag: Symbol,
        expected: usize,
        found: usize,
    },
    AlphabetViolation {
        bag: Option<Symbol>,
        instance: Option<InstanceRef>,
        label: LabelSymbol,
    },
    DuplicateBagId {
        bag: Symbol,
    },
    MissingGroundTruth {
        instance: InstanceRef,
    },
    DanglingGroundTruth {
        instance: InstanceRef,
    },
}

impl DatasetViolation {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetViolation::BagSizeMismatch { .. } => "bag-size mismatch",
            DatasetViolation::AlphabetViolation { .. } => "alphabet violation",
            DatasetViolation::DuplicateBagId { .. } => "duplicate bag id",
            DatasetViolation::MissingGroundTruth { .. } => "missing ground truth",
            DatasetViolation::DanglingGroundTruth { .. } => "dangling ground truth",
        }
    }
}

impl fmt::Display for DatasetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetViolation::BagSizeMismatch {
                bag,
                expected,
                found,
            } => write!(f, "bag-size mismatch: bag {bag} has {found} instances, expected {expected}"),
            DatasetViolation::AlphabetViolation {
                bag,
                instance,
                label,
            } => match (bag, instance) {
                (Some(b), _) => write!(f, "alphabet violation: bag {b} weak label {label}"),
                (None, Some(i)) => write!(f, "alphabet violation: truth {label} for {i}"),
                (None, None) => write!(f, "alphabet violation: {label}"),
            },
            DatasetViolation::DuplicateBagId { bag } => write!(f, "duplicate bag id {bag}"),
            DatasetViolation::MissingGroundTruth { instance } => {
                write!(f, "missing ground truth: {instance}")
            }
            DatasetViolation::DanglingGroundTruth { instance } => {
                write!(f, "dangling ground truth: {instance} appears in no bag")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetReport {
    pub violations: Vec<DatasetViolation>,
}

impl DatasetReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_dataset(d: &Dataset) -> DatasetReport {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for bag in &d.bags {
        if !seen.insert(bag.id) {
            violations.push(DatasetViolation::DuplicateBagId { bag: bag.id });
        }
        if bag.len() != d.bag_size {
            violations.push(DatasetViolation::BagSizeMismatch {
                bag: bag.id,
                expected: d.bag_size,
                found: bag.len(),
            });
        }
        if !d.weak_alphabet.contains(&bag.weak_label) {
            violations.push(DatasetViolation::AlphabetViolation {
                bag: Some(bag.id),
                instance: None,
                label: bag.weak_label,
            });
        }
    }
    if let Some(truth) = &d.ground_truth {
        let referenced = d.instances();
        for instance in &referenced {
            match truth.get(instance) {
                None => violations.push(DatasetViolation::MissingGroundTruth {
                    instance: *instance,
                }),
                Some(label) if !d.instance_alphabet.contains(label) => {
                    violations.push(DatasetViolation::AlphabetViolation {
                        bag: None,
                        instance: Some(*instance),
                        label: *label,
                    })
                }
                Some(_) => {}
            }
        }
        for instance in truth.keys() {
            if !referenced.contains(instance) {
                violations.push(DatasetViolation::DanglingGroundTruth {
                    instance: *instance,
                });
            }
        }
    }
    DatasetReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    /// One classifier f for every bag position.
    #[default]
    Shared,
    /// One classifier f_i per bag position i.
    Positional,
}

/// Key of a single prediction; `position` is `None` in shared mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PredictionKey {
    pub instance: InstanceRef,
    pub position: Option<usize>,
}

/// Classifier outputs, the CP facts of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    mode: PredictionMode,
    predictions: BTreeMap<PredictionKey, LabelSymbol>,
    confidence: BTreeMap<PredictionKey, f64>,
}

impl PredictionSet {
    pub fn new(mode: PredictionMode) -> Self {
        PredictionSet {
            mode,
            ..Default::default()
        }
    }

    pub fn shared(entries: impl IntoIterator<Item = (InstanceRef, LabelSymbol)>) -> Self {
        let mut set = PredictionSet::new(PredictionMode::Shared);
        for (instance, label) in entries {
            set.insert(instance, None, label);
        }
        set
    }

    /// Predictions equal to the dataset's ground truth.
    pub fn from_truth(d: &Dataset) -> Result<Self> {
        let truth = d.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
        Ok(PredictionSet::shared(truth.iter().map(|(i, l)| (*i, *l))))
    }

    pub fn mode(&self) -> PredictionMode {
        self.mode
    }

    /// Inserts a prediction. In shared mode `position` is ignored.
    pub fn insert(&mut self, instance: InstanceRef, position: Option<usize>, label: LabelSymbol) {
        let position = match self.mode {
            PredictionMode::Shared => None,
            PredictionMode::Positional => position,
        };
        self.predictions
            .insert(PredictionKey { instance, position }, label);
    }

    pub fn set_confidence(&mut self, instance: InstanceRef, position: Option<usize>, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("confidence {p} outside [0,1]")));
        }
        let position = match self.mode {
            PredictionMode::Shared => None,
            PredictionMode::Positional => position,
        };
        self.confidence.insert(PredictionKey { instance, position }, p);
        Ok(())
    }

    pub fn confidence(&self, instance: InstanceRef, position: usize) -> Option<f64> {
        self.confidence.get(&self.key(instance, position)).copied()
    }

    fn key(&self, instance: InstanceRef, position: usize) -> PredictionKey {
        match self.mode {
            PredictionMode::Shared => PredictionKey {
                instance,
                position: None,
            },
            PredictionMode::Positional => PredictionKey {
                instance,
                position: Some(position),
            },
        }
    }

    pub fn label_for(&self, instance: InstanceRef, position: usize) -> Option<LabelSymbol> {
        self.predictions.get(&self.key(instance, position)).copied()
    }

    /// The predicted label tuple of a bag, or a coverage gap naming the
    /// first uncovered position.
    pub fn predicted_tuple(&self, bag: &Bag) -> Result<Vec<LabelSymbol>> {
        bag.instances
            .iter()
            .enumerate()
            .map(|(pos, inst)| {
                self.label_for(*inst, pos).ok_or_else(|| Error::CoverageGap {
                    bag: bag.id.to_string(),
                    instance: inst.to_string(),
                    position: pos,
                })
            })
            .collect()
    }

    /// Fails with the first coverage gap over the dataset, if any.
    pub fn check_covers(&self, d: &Dataset) -> Result<()> {
        for bag in &d.bags {
            self.predicted_tuple(bag)?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PredictionKey, &LabelSymbol)> {
        self.predictions.iter()
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}
