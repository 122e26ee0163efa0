//! Seeded synthetic data: digit bags, noisy predictions, scene fragments.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Bag, Dataset, InstanceRef, PredictionSet};
use crate::error::{Error, Result};
use crate::operators::{OperatorRegistry, TransitionOp, DEFAULT_BUDGET};
use crate::scene::{RelationAtom, SceneFragment};
use crate::symbol::{LabelAlphabet, LabelSymbol, Symbol};

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitGenConfig {
    pub n_bags: usize,
    pub m: usize,
    /// Probability that a bag slot reuses an instance from an earlier bag.
    #[serde(default)]
    pub reuse_probability: f64,
    pub seed: u64,
}

pub fn gen_digit_dataset(
    op: &TransitionOp,
    n_bags: usize,
    m: usize,
    alphabet: &LabelAlphabet,
    seed: u64,
) -> Result<Dataset> {
    gen_digit_dataset_with(
        op,
        alphabet,
        &DigitGenConfig {
            n_bags,
            m,
            reuse_probability: 0.0,
            seed,
        },
    )
}

/// Bags of `m` instances with uniform hidden labels; each weak label is the
/// operator applied to the bag's true labels. S is the full image of the
/// operator over `alphabet^m`.
pub fn gen_digit_dataset_with(op: &TransitionOp, alphabet: &LabelAlphabet, cfg: &DigitGenConfig) -> Result<Dataset> {
    op.check_arity(cfg.m)?;
    check_probability("reuse_probability", cfg.reuse_probability)?;
    let weak_alphabet = op.output_alphabet(alphabet, cfg.m, DEFAULT_BUDGET)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth: BTreeMap<InstanceRef, LabelSymbol> = BTreeMap::new();
    let mut pool: Vec<InstanceRef> = Vec::new();
    let mut bags = Vec::with_capacity(cfg.n_bags);
    for b in 0..cfg.n_bags {
        let mut instances: Vec<InstanceRef> = Vec::with_capacity(cfg.m);
        for _ in 0..cfg.m {
            let reuse = cfg.reuse_probability > 0.0 && !pool.is_empty() && rng.gen_bool(cfg.reuse_probability);
            let reused = if reuse {
                let choices: Vec<InstanceRef> =
                    pool.iter().filter(|i| !instances.contains(i)).copied().collect();
                choices.choose(&mut rng).copied()
            } else {
                None
            };
            let inst = match reused {
                Some(inst) => inst,
                None => {
                    let inst = InstanceRef::new(&format!("i{}", truth.len() + 1));
                    let label = *alphabet.symbols().choose(&mut rng).expect("alphabet non-empty");
                    truth.insert(inst, label);
                    inst
                }
            };
            instances.push(inst);
        }
        pool.extend(instances.iter().filter(|i| !pool.contains(i)).copied().collect::<Vec<_>>());
        let labels: Vec<LabelSymbol> = instances.iter().map(|i| truth[i]).collect();
        bags.push(Bag {
            id: Symbol::new(&format!("b{}", b + 1)),
            instances,
            weak_label: op.eval(&labels)?,
        });
    }
    Ok(Dataset::new(bags, alphabet.clone(), weak_alphabet, cfg.m).with_ground_truth(truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePolicy {
    /// Replace with a uniform draw from Y \ {truth}.
    #[default]
    UniformSubstitution,
    /// Replace with an alphabet neighbour of the truth.
    AdjacentSubstitution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub rate: f64,
    #[serde(default)]
    pub policy: NoisePolicy,
    pub seed: u64,
}

impl NoiseModel {
    pub fn uniform(rate: f64, seed: u64) -> Self {
        NoiseModel {
            rate,
            policy: NoisePolicy::UniformSubstitution,
            seed,
        }
    }
}

/// Shared-mode predictions: each referenced instance keeps its true label
/// with probability 1 − ρ and is substituted otherwise. A one-letter
/// alphabet has nothing to substitute with.
pub fn gen_noisy_predictions(d: &Dataset, noise: &NoiseModel) -> Result<PredictionSet> {
    check_probability("noise rate", noise.rate)?;
    let truth = d.ground_truth.as_ref().ok_or(Error::MissingGroundTruth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let symbols = d.instance_alphabet.symbols();
    let mut preds = PredictionSet::default();
    for inst in d.instances() {
        let label = *truth.get(&inst).ok_or(Error::MissingGroundTruth)?;
        let flip = noise.rate > 0.0 && rng.gen_bool(noise.rate);
        let predicted = if flip && symbols.len() > 1 {
            let pos = d.instance_alphabet.position(&label);
            match (noise.policy, pos) {
                (NoisePolicy::UniformSubstitution, _) | (_, None) => {
                    let others: Vec<LabelSymbol> = symbols.iter().filter(|s| **s != label).copied().collect();
                    *others.choose(&mut rng).expect("at least one other label")
                }
                (NoisePolicy::AdjacentSubstitution, Some(p)) => {
                    let last = symbols.len() - 1;
                    let next = if p == 0 {
                        1
                    } else if p == last || rng.gen_bool(0.5) {
                        p - 1
                    } else {
                        p + 1
                    };
                    symbols[next]
                }
            }
        } else {
            label
        };
        preds.insert(inst, None, predicted);
    }
    Ok(preds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub n_fragments: usize,
    /// Probability that an object is visible in a fragment.
    pub visibility: f64,
    /// Probability that a fragment also carries one hint absent from the graph.
    #[serde(default)]
    pub distractor_rate: f64,
    pub seed: u64,
}

/// Fragments of a scene described by `graph`. Each object is visible
/// independently with probability `visibility`; every graph relation with at
/// least one visible argument is emitted as a hint, so a hidden argument shows
/// up as a hint without co-detection.
pub fn gen_scene_dataset(
    graph: &[RelationAtom],
    objects: &LabelAlphabet,
    vocab: &OperatorRegistry,
    cfg: &SceneGenConfig,
) -> Result<Vec<SceneFragment>> {
    if !(cfg.visibility > 0.0 && cfg.visibility <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "visibility = {} is not in (0, 1]",
            cfg.visibility
        )));
    }
    check_probability("distractor_rate", cfg.distractor_rate)?;
    let relations: Vec<Symbol> = vocab.ops().iter().filter(|op| op.is_relation()).map(|op| op.name()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut fragments = Vec::with_capacity(cfg.n_fragments);
    let width = cfg.n_fragments.to_string().len();
    for k in 0..cfg.n_fragments {
        let detected: std::collections::BTreeSet<LabelSymbol> = objects
            .symbols()
            .iter()
            .filter(|_| cfg.visibility >= 1.0 || rng.gen_bool(cfg.visibility))
            .copied()
            .collect();
        let mut hints: Vec<RelationAtom> = graph
            .iter()
            .filter(|a| a.args.iter().any(|o| detected.contains(o)))
            .copied()
            .collect();
        if cfg.distractor_rate > 0.0
            && objects.len() >= 2
            && !relations.is_empty()
            && rng.gen_bool(cfg.distractor_rate)
        {
            let pair: Vec<LabelSymbol> = objects.symbols().choose_multiple(&mut rng, 2).copied().collect();
            let atom = RelationAtom {
                relation: *relations.choose(&mut rng).expect("non-empty"),
                args: [pair[0], pair[1]],
            };
            if !graph.contains(&atom) {
                hints.push(atom);
            }
        }
        fragments.push(SceneFragment {
            id: Symbol::new(&format!("f{:0width$}", k + 1)),
            detected,
            hints,
        });
    }
    Ok(fragments)
}

/// The table scene: vase, books and lamp on a table, lamp next to books.
pub fn table_demo_graph() -> (Vec<RelationAtom>, LabelAlphabet) {
    let graph = vec![
        RelationAtom::new("OnTop", "Vase", "Table"),
        RelationAtom::new("OnTop", "Books", "Table"),
        RelationAtom::new("OnTop", "Lamp", "Table"),
        RelationAtom::new("NextTo", "Lamp", "Books"),
    ];
    let objects = LabelAlphabet::symbolic(["Table", "Vase", "Books", "Lamp"]).expect("valid alphabet");
    (graph, objects)
}
