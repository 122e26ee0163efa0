//! Parameter sweeps over generated data.
//!
//! Every cell × seed is an independent job. Jobs run on the rayon pool but
//! rows come back in the fixed order (op, n, ρ, τ or reuse, seed), and every
//! random stream is derived from the row's seed, so the tables do not depend
//! on the number of threads.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abduce::{abduce_labels, validate_classifier};
use crate::datagen::{
    gen_digit_dataset_with, gen_noisy_predictions, gen_scene_dataset, table_demo_graph, DigitGenConfig,
    NoiseModel, SceneGenConfig,
};
use crate::error::{Error, Result};
use crate::ledger::NegativePolicy;
use crate::operators::{Arity, OperatorRegistry, TransitionOp, DEFAULT_BUDGET};
use crate::scene::{accepted_relations, infer_scene_relations, validate_scene_detections};
use crate::symbol::LabelAlphabet;
use crate::tp::infer_tp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Tp,
    Cp,
    Scene,
}

fn default_ops() -> Vec<String> {
    ["sum", "product", "xor", "boolC"].map(String::from).to_vec()
}
fn default_n_bags() -> Vec<usize> {
    vec![50]
}
fn default_zero() -> Vec<f64> {
    vec![0.0]
}
fn default_tolerance() -> Vec<f64> {
    vec![1.0]
}
fn default_alphabet() -> [u64; 2] {
    [0, 9]
}
fn default_one() -> usize {
    1
}
fn default_visibility() -> Vec<f64> {
    vec![0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    #[serde(default = "default_ops")]
    pub ops: Vec<String>,
    /// Bags per dataset (fragments per scene for the scene scenario).
    #[serde(default = "default_n_bags")]
    pub n_bags: Vec<usize>,
    /// Bag size; defaults to the operator's fixed arity, or 2.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_zero")]
    pub noise: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: Vec<f64>,
    #[serde(default = "default_zero")]
    pub reuse: Vec<f64>,
    #[serde(default = "default_visibility")]
    pub visibility: Vec<f64>,
    #[serde(default)]
    pub distractor_rate: f64,
    pub seeds: Vec<u64>,
    /// Inclusive digit range of the instance alphabet.
    #[serde(default = "default_alphabet")]
    pub alphabet: [u64; 2],
    #[serde(default = "default_one")]
    pub negatives_per_positive: usize,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, seeds: Vec<u64>) -> Self {
        ExperimentSpec {
            scenario,
            ops: default_ops(),
            n_bags: default_n_bags(),
            m: None,
            noise: default_zero(),
            tolerance: default_tolerance(),
            reuse: default_zero(),
            visibility: default_visibility(),
            distractor_rate: 0.0,
            seeds,
            alphabet: default_alphabet(),
            negatives_per_positive: 1,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidExperiment(msg.to_owned()));
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds are not distinct");
        }
        if self.n_bags.is_empty() {
            return bad("n_bags grid is empty");
        }
        match self.scenario {
            Scenario::Tp | Scenario::Cp => {
                if self.ops.is_empty() {
                    return bad("ops grid is empty");
                }
                if self.noise.is_empty() {
                    return bad("noise grid is empty");
                }
                if self.scenario == Scenario::Tp && self.tolerance.is_empty() {
                    return bad("tolerance grid is empty");
                }
                if self.scenario == Scenario::Cp && self.reuse.is_empty() {
                    return bad("reuse grid is empty");
                }
                let registry = OperatorRegistry::builtins();
                for op in &self.ops {
                    registry.resolve(op)?;
                }
            }
            Scenario::Scene => {
                if self.visibility.is_empty() {
                    return bad("visibility grid is empty");
                }
            }
        }
        for &p in self.noise.iter().chain(&self.tolerance).chain(&self.reuse) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidExperiment(format!("grid value {p} outside [0, 1]")));
            }
        }
        if self.alphabet[0] > self.alphabet[1] {
            return bad("alphabet range is empty");
        }
        Ok(())
    }

    fn instance_alphabet(&self) -> Result<LabelAlphabet> {
        LabelAlphabet::digits(self.alphabet[0], self.alphabet[1])
    }

    fn bag_size(&self, op: &TransitionOp) -> usize {
        match (self.m, op.arity()) {
            (Some(m), _) => m,
            (None, Arity::Fixed(n)) => n,
            (None, Arity::Variadic) => 2,
        }
    }
}

/// Independent per-purpose streams from one row seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TpRow {
    pub op: String,
    pub n_bags: usize,
    pub m: usize,
    pub noise: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Winners joined with `|`.
    pub winner_set: String,
    pub unique: bool,
    pub identified: bool,
    pub true_op_rank: Option<usize>,
    /// Consistency of the generating operator.
    pub consistency: f64,
}

impl TpRow {
    fn cell(&self) -> String {
        format!("op={},n={},rho={},tau={}", self.op, self.n_bags, self.noise, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TpCellSummary {
    pub runs: usize,
    pub identification_rate: f64,
    pub tie_rate: f64,
    /// Runs whose winners exclude the generating operator.
    pub misidentification_rate: f64,
    pub mean_consistency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TpTable {
    pub rows: Vec<TpRow>,
    pub summary: BTreeMap<String, TpCellSummary>,
}

impl TpTable {
    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

pub fn summarize_tp(rows: &[TpRow]) -> BTreeMap<String, TpCellSummary> {
    let mut cells: BTreeMap<String, Vec<&TpRow>> = BTreeMap::new();
    for row in rows {
        cells.entry(row.cell()).or_default().push(row);
    }
    cells
        .into_iter()
        .map(|(key, rows)| {
            let runs = rows.len() as f64;
            let rate = |pred: &dyn Fn(&TpRow) -> bool| rows.iter().filter(|r| pred(r)).count() as f64 / runs;
            let true_in = |r: &TpRow| r.winner_set.split('|').any(|w| w == r.op);
            (
                key,
                TpCellSummary {
                    runs: rows.len(),
                    identification_rate: rate(&|r| r.identified),
                    tie_rate: rate(&|r| !r.unique && true_in(r)),
                    misidentification_rate: rate(&|r| !true_in(r)),
                    mean_consistency: mean(rows.iter().map(|r| r.consistency)).unwrap_or(0.0),
                },
            )
        })
        .collect()
}

pub fn run_tp_experiment(spec: &ExperimentSpec) -> Result<TpTable> {
    spec.validate()?;
    let registry = OperatorRegistry::builtins();
    let alphabet = spec.instance_alphabet()?;
    let mut jobs = Vec::new();
    for op in &spec.ops {
        for &n in &spec.n_bags {
            for &rho in &spec.noise {
                for &tau in &spec.tolerance {
                    for &seed in &spec.seeds {
                        jobs.push((op.as_str(), n, rho, tau, seed));
                    }
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(op_name, n, rho, tau, seed)| {
            let op = registry.resolve(op_name)?;
            let m = spec.bag_size(op);
            let cfg = DigitGenConfig {
                n_bags: n,
                m,
                reuse_probability: 0.0,
                seed: derive_seed(seed, 0),
            };
            let d = gen_digit_dataset_with(op, &alphabet, &cfg)?;
            let preds = gen_noisy_predictions(&d, &NoiseModel::uniform(rho, derive_seed(seed, 1)))?;
            let policy = NegativePolicy::CorruptS {
                registry: &registry,
                per_positive: spec.negatives_per_positive,
            };
            let verdict = infer_tp(&d, &preds, &registry, tau, policy, derive_seed(seed, 2))?;
            let winners: Vec<&str> = verdict.winners.iter().map(|w| w.as_str()).collect();
            Ok(TpRow {
                op: op.name().to_string(),
                n_bags: n,
                m,
                noise: rho,
                tolerance: tau,
                seed,
                winner_set: winners.join("|"),
                unique: verdict.unique,
                identified: verdict.unique && verdict.winners[0] == op.name(),
                true_op_rank: verdict.rank_of(op.name()),
                consistency: verdict.score_of(op.name()).map_or(0.0, |s| s.consistency),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_tp(&rows);
    Ok(TpTable { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpRow {
    pub op: String,
    pub n_bags: usize,
    pub m: usize,
    pub noise: f64,
    pub reuse: f64,
    pub seed: u64,
    pub mean_candidate_size: f64,
    pub truth_containment: f64,
    pub corrupted_bags: usize,
    pub flagged_bags: usize,
    pub detected_bags: usize,
    pub violation_precision: Option<f64>,
    pub violation_recall: Option<f64>,
    pub item_accuracy: Option<f64>,
}

impl CpRow {
    fn cell(&self) -> String {
        format!("op={},n={},rho={},reuse={}", self.op, self.n_bags, self.noise, self.reuse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpCellSummary {
    pub runs: usize,
    pub mean_candidate_size: f64,
    pub truth_containment: f64,
    pub violation_precision: Option<f64>,
    pub violation_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpTable {
    pub rows: Vec<CpRow>,
    pub summary: BTreeMap<String, CpCellSummary>,
}

impl CpTable {
    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

pub fn summarize_cp(rows: &[CpRow]) -> BTreeMap<String, CpCellSummary> {
    let mut cells: BTreeMap<String, Vec<&CpRow>> = BTreeMap::new();
    for row in rows {
        cells.entry(row.cell()).or_default().push(row);
    }
    cells
        .into_iter()
        .map(|(key, rows)| {
            (
                key,
                CpCellSummary {
                    runs: rows.len(),
                    mean_candidate_size: mean(rows.iter().map(|r| r.mean_candidate_size)).unwrap_or(0.0),
                    truth_containment: mean(rows.iter().map(|r| r.truth_containment)).unwrap_or(0.0),
                    violation_precision: mean(rows.iter().filter_map(|r| r.violation_precision)),
                    violation_recall: mean(rows.iter().filter_map(|r| r.violation_recall)),
                },
            )
        })
        .collect()
}

pub fn run_cp_experiment(spec: &ExperimentSpec) -> Result<CpTable> {
    spec.validate()?;
    let registry = OperatorRegistry::builtins();
    let alphabet = spec.instance_alphabet()?;
    let mut jobs = Vec::new();
    for op in &spec.ops {
        for &n in &spec.n_bags {
            for &rho in &spec.noise {
                for &reuse in &spec.reuse {
                    for &seed in &spec.seeds {
                        jobs.push((op.as_str(), n, rho, reuse, seed));
                    }
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(op_name, n, rho, reuse, seed)| {
            let op = registry.resolve(op_name)?;
            let m = spec.bag_size(op);
            let cfg = DigitGenConfig {
                n_bags: n,
                m,
                reuse_probability: reuse,
                seed: derive_seed(seed, 0),
            };
            let d = gen_digit_dataset_with(op, &alphabet, &cfg)?;
            let preds = gen_noisy_predictions(&d, &NoiseModel::uniform(rho, derive_seed(seed, 1)))?;
            let candidates = abduce_labels(&d, op, DEFAULT_BUDGET)?;
            let truth = d.ground_truth.as_ref().expect("generated data has truth");
            let contained = candidates
                .per_instance
                .iter()
                .filter(|(inst, set)| set.contains(&truth[inst]))
                .count();
            let report = validate_classifier(&d, op, &preds, DEFAULT_BUDGET)?;
            let flagged: BTreeSet<_> = report.violating_ids().into_iter().collect();
            let corrupted: BTreeSet<_> = d
                .bags
                .iter()
                .filter(|b| preds.predicted_tuple(b).map(|t| Some(t) != d.truth_tuple(b)).unwrap_or(true))
                .map(|b| b.id)
                .collect();
            let detected = flagged.intersection(&corrupted).count();
            let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
            Ok(CpRow {
                op: op.name().to_string(),
                n_bags: n,
                m,
                noise: rho,
                reuse,
                seed,
                mean_candidate_size: candidates.mean_size(),
                truth_containment: ratio(contained, candidates.per_instance.len()).unwrap_or(1.0),
                corrupted_bags: corrupted.len(),
                flagged_bags: flagged.len(),
                detected_bags: detected,
                violation_precision: ratio(detected, flagged.len()),
                violation_recall: ratio(detected, corrupted.len()),
                item_accuracy: report.item_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_cp(&rows);
    Ok(CpTable { rows, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneRow {
    pub n_fragments: usize,
    pub visibility: f64,
    pub seed: u64,
    pub true_relations: usize,
    pub recovered: usize,
    pub false_accepts: usize,
    pub violating_fragments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneTable {
    pub rows: Vec<SceneRow>,
}

impl SceneTable {
    pub fn to_csv(&self) -> Result<String> {
        to_csv(&self.rows)
    }

    pub fn summary_json(&self) -> String {
        let mut cells: BTreeMap<String, Vec<&SceneRow>> = BTreeMap::new();
        for row in &self.rows {
            cells
                .entry(format!("n={},visibility={}", row.n_fragments, row.visibility))
                .or_default()
                .push(row);
        }
        let summary: BTreeMap<String, serde_json::Value> = cells
            .into_iter()
            .map(|(k, rows)| {
                let recall = mean(rows.iter().map(|r| r.recovered as f64 / r.true_relations.max(1) as f64));
                let false_accepts = mean(rows.iter().map(|r| r.false_accepts as f64));
                (
                    k,
                    serde_json::json!({"runs": rows.len(), "relation_recall": recall, "mean_false_accepts": false_accepts}),
                )
            })
            .collect();
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }
}

/// Recovers the table scene's relations from generated fragments.
pub fn run_scene_experiment(spec: &ExperimentSpec) -> Result<SceneTable> {
    spec.validate()?;
    let (graph, objects) = table_demo_graph();
    let vocab = OperatorRegistry::scene_relations();
    let mut jobs = Vec::new();
    for &n in &spec.n_bags {
        for &visibility in &spec.visibility {
            for &seed in &spec.seeds {
                jobs.push((n, visibility, seed));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(n, visibility, seed)| {
            let cfg = SceneGenConfig {
                n_fragments: n,
                visibility,
                distractor_rate: spec.distractor_rate,
                seed: derive_seed(seed, 0),
            };
            let fragments = gen_scene_dataset(&graph, &objects, &vocab, &cfg)?;
            let verdicts = infer_scene_relations(&fragments, &vocab)?;
            let accepted = accepted_relations(&verdicts);
            let report = validate_scene_detections(&fragments, &accepted);
            Ok(SceneRow {
                n_fragments: n,
                visibility,
                seed,
                true_relations: graph.len(),
                recovered: accepted.iter().filter(|a| graph.contains(a)).count(),
                false_accepts: accepted.iter().filter(|a| !graph.contains(a)).count(),
                violating_fragments: report.violating_ids().len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneTable { rows })
}
