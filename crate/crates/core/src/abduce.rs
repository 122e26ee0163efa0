//! Label abduction under a known transition operator, and validation of a
//! classifier's predictions against it.
//!
//! [`abduce_labels`] intersects, per instance, the projections of each
//! containing bag's preimage. That is bag-local (arc-level) consistency: it
//! never removes a label that some single bag still supports, even when no
//! joint assignment over all bags uses it. [`brute_force_abduction_oracle`]
//! computes the global answer by exhaustive enumeration and is always a
//! subset.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Bag, Dataset, InstanceRef, PredictionSet};
use crate::error::Result;
use crate::ledger::prefix_witness;
use crate::operators::{check_budget, for_each_tuple, preimage, TransitionOp};
use crate::symbol::{LabelSymbol, Symbol};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CandidateMap {
    pub per_instance: BTreeMap<InstanceRef, BTreeSet<LabelSymbol>>,
    /// Instances left with no candidate label.
    pub contradictions: Vec<InstanceRef>,
}

impl CandidateMap {
    fn from_sets(per_instance: BTreeMap<InstanceRef, BTreeSet<LabelSymbol>>) -> Self {
        let contradictions = per_instance
            .iter()
            .filter(|(_, set)| set.is_empty())
            .map(|(inst, _)| *inst)
            .collect();
        CandidateMap {
            per_instance,
            contradictions,
        }
    }

    pub fn get(&self, instance: &InstanceRef) -> Option<&BTreeSet<LabelSymbol>> {
        self.per_instance.get(instance)
    }

    pub fn mean_size(&self) -> f64 {
        if self.per_instance.is_empty() {
            return 0.0;
        }
        let total: usize = self.per_instance.values().map(BTreeSet::len).sum();
        total as f64 / self.per_instance.len() as f64
    }

    /// True when every instance's set is contained in `other`'s.
    pub fn is_subset_of(&self, other: &CandidateMap) -> bool {
        self.per_instance.iter().all(|(inst, set)| {
            other
                .per_instance
                .get(inst)
                .is_some_and(|theirs| set.is_subset(theirs))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("candidate map serializes")
    }

    /// `instance,n_candidates,truth_in_set` rows; the last column is empty
    /// when no truth is given.
    pub fn to_csv(&self, truth: Option<&BTreeMap<InstanceRef, LabelSymbol>>) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["instance", "n_candidates", "truth_in_set"])?;
        for (inst, set) in &self.per_instance {
            let flag = match truth.and_then(|t| t.get(inst)) {
                Some(label) => set.contains(label).to_string(),
                None => String::new(),
            };
            w.write_record([inst.as_str(), &set.len().to_string(), &flag])?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Positions of each distinct instance inside a bag, in first-occurrence order.
fn positions_by_instance(bag: &Bag) -> Vec<(InstanceRef, Vec<usize>)> {
    let mut out: Vec<(InstanceRef, Vec<usize>)> = Vec::new();
    for (pos, inst) in bag.instances.iter().enumerate() {
        match out.iter_mut().find(|(i, _)| i == inst) {
            Some((_, positions)) => positions.push(pos),
            None => out.push((*inst, vec![pos])),
        }
    }
    out
}

pub fn abduce_labels(d: &Dataset, op: &TransitionOp, budget: u64) -> Result<CandidateMap> {
    op.check_arity(d.bag_size)?;
    for bag in &d.bags {
        op.check_arity(bag.len())?;
    }
    let mut targets: Vec<(LabelSymbol, usize)> = d.bags.iter().map(|b| (b.weak_label, b.len())).collect();
    targets.sort();
    targets.dedup();
    let preimages: HashMap<(LabelSymbol, usize), Vec<Vec<LabelSymbol>>> = targets
        .par_iter()
        .map(|&(s, m)| preimage(op, s, &d.instance_alphabet, m, budget).map(|p| ((s, m), p)))
        .collect::<Result<_>>()?;

    let mut sets: BTreeMap<InstanceRef, BTreeSet<LabelSymbol>> = BTreeMap::new();
    for bag in &d.bags {
        let groups = positions_by_instance(bag);
        // a repeated instance takes one label across all its positions
        let tuples: Vec<&Vec<LabelSymbol>> = preimages[&(bag.weak_label, bag.len())]
            .iter()
            .filter(|t| groups.iter().all(|(_, ps)| ps.iter().all(|&p| t[p] == t[ps[0]])))
            .collect();
        for (inst, positions) in groups {
            let projection: BTreeSet<LabelSymbol> = tuples.iter().map(|t| t[positions[0]]).collect();
            match sets.get_mut(&inst) {
                Some(current) => current.retain(|l| projection.contains(l)),
                None => {
                    sets.insert(inst, projection);
                }
            }
        }
    }
    Ok(CandidateMap::from_sets(sets))
}

/// Instances grouped into connected components (two instances are connected
/// when they share a bag), each with the bags that touch it.
fn components(d: &Dataset) -> Vec<(Vec<InstanceRef>, Vec<&Bag>)> {
    let instances: Vec<InstanceRef> = d.instances().into_iter().collect();
    let index: HashMap<InstanceRef, usize> = instances.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let mut parent: Vec<usize> = (0..instances.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for bag in &d.bags {
        let first = index[&bag.instances[0]];
        for inst in &bag.instances[1..] {
            let (a, b) = (find(&mut parent, first), find(&mut parent, index[inst]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<InstanceRef>, Vec<&Bag>)> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().0.push(*inst);
    }
    for bag in d.bags.iter().filter(|b| !b.is_empty()) {
        let root = find(&mut parent, index[&bag.instances[0]]);
        groups.get_mut(&root).expect("component exists").1.push(bag);
    }
    groups.into_values().collect()
}

/// Exhaustive global abduction: a label survives for an instance when some
/// joint assignment of its whole connected component satisfies every bag.
/// Evaluates the operator directly and never uses preimages.
pub fn brute_force_abduction_oracle(d: &Dataset, op: &TransitionOp, budget: u64) -> Result<CandidateMap> {
    op.check_arity(d.bag_size)?;
    let symbols = d.instance_alphabet.symbols();
    let mut sets = BTreeMap::new();
    for (vars, bags) in components(d) {
        check_budget(symbols.len(), vars.len(), budget)?;
        let slot: HashMap<InstanceRef, usize> = vars.iter().enumerate().map(|(i, x)| (*x, i)).collect();
        let bag_slots: Vec<(Vec<usize>, LabelSymbol)> = bags
            .iter()
            .map(|b| (b.instances.iter().map(|i| slot[i]).collect(), b.weak_label))
            .collect();
        let mut support: Vec<BTreeSet<LabelSymbol>> = vec![BTreeSet::new(); vars.len()];
        let mut err = None;
        let mut tuple = Vec::new();
        for_each_tuple(symbols.len(), vars.len(), |assignment| {
            let mut ok = true;
            for (slots, s) in &bag_slots {
                tuple.clear();
                tuple.extend(slots.iter().map(|&k| symbols[assignment[k]]));
                match op.eval(&tuple) {
                    Ok(out) if out == *s => {}
                    Ok(_) => {
                        ok = false;
                        break;
                    }
                    Err(e) => {
                        err = Some(e);
                        return false;
                    }
                }
            }
            if ok {
                for (k, &a) in assignment.iter().enumerate() {
                    support[k].insert(symbols[a]);
                }
            }
            true
        });
        if let Some(e) = err {
            return Err(e);
        }
        for (inst, set) in vars.into_iter().zip(support) {
            sets.insert(inst, set);
        }
    }
    Ok(CandidateMap::from_sets(sets))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessReason {
    /// The predicted label is outside the instance's abduced candidates.
    OutsideCandidates,
    /// The predictions up to this position admit no satisfying completion.
    NoCompletion,
    /// A required object was not detected.
    MissingDetection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub bag: Symbol,
    pub witness: Symbol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<LabelSymbol>,
    pub reason: WitnessReason,
    pub constraint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub consistent_bags: Vec<Symbol>,
    pub violating_bags: Vec<Violation>,
    /// Fraction of bag slots whose prediction equals the truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_accuracy: Option<f64>,
}

impl ValidationReport {
    /// Violating bag ids, deduplicated, in report order.
    pub fn violating_ids(&self) -> Vec<Symbol> {
        let mut seen = BTreeSet::new();
        self.violating_bags
            .iter()
            .filter(|v| seen.insert(v.bag))
            .map(|v| v.bag)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn render_constraint(op: &TransitionOp, tuple: &[LabelSymbol], got: LabelSymbol, want: LabelSymbol) -> String {
    let args: Vec<&str> = tuple.iter().map(|l| l.as_str()).collect();
    format!("{}({}) = {} ≠ {}", op.name(), args.join(", "), got, want)
}

pub fn validate_classifier(
    d: &Dataset,
    op: &TransitionOp,
    preds: &PredictionSet,
    budget: u64,
) -> Result<ValidationReport> {
    preds.check_covers(d)?;
    let candidates = abduce_labels(d, op, budget)?;
    let mut report = ValidationReport::default();
    let (mut slots, mut correct) = (0usize, 0usize);
    for bag in &d.bags {
        let tuple = preds.predicted_tuple(bag)?;
        if d.ground_truth.is_some() {
            for (inst, pred) in bag.instances.iter().zip(&tuple) {
                slots += 1;
                if d.truth_of(inst) == Some(*pred) {
                    correct += 1;
                }
            }
        }
        let out = op.eval(&tuple)?;
        if out == bag.weak_label {
            report.consistent_bags.push(bag.id);
            continue;
        }
        let outside = bag.instances.iter().zip(&tuple).position(|(inst, pred)| {
            candidates.get(inst).is_some_and(|set| !set.contains(pred))
        });
        let (position, reason) = match outside {
            Some(p) => (p, WitnessReason::OutsideCandidates),
            None => {
                let p = prefix_witness(op, bag.weak_label, &tuple, &d.instance_alphabet, budget)?
                    .unwrap_or(tuple.len() - 1);
                (p, WitnessReason::NoCompletion)
            }
        };
        report.violating_bags.push(Violation {
            bag: bag.id,
            witness: bag.instances[position].0,
            position: Some(position),
            predicted: Some(tuple[position]),
            reason,
            constraint: render_constraint(op, &tuple, out, bag.weak_label),
        });
    }
    if d.ground_truth.is_some() && slots > 0 {
        report.item_accuracy = Some(correct as f64 / slots as f64);
    }
    Ok(report)
}
