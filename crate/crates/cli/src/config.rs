use std::path::Path;

use mipll_core::experiment::ExperimentSpec;
use mipll_core::ledger::NegativePolicyKind;
use mipll_core::{register_operator, Error, OperatorRegistry, OperatorSpec, Result, DEFAULT_BUDGET};
use serde::{Deserialize, Serialize};

/// Settings shared by every subcommand. Flags override file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Preimage enumeration budget in tuples.
    pub budget: Option<u64>,
    pub tolerance: Option<f64>,
    pub negatives: Option<NegativePolicyKind>,
    pub negatives_per_positive: Option<usize>,
    /// Reference operator for the corrupt-vs-op policy.
    pub reference_op: Option<String>,
    /// Candidate subset for infer-tp; all registered operators when absent.
    pub candidates: Option<Vec<String>>,
    #[serde(default)]
    pub operators: Vec<OperatorSpec>,
    pub experiment: Option<ExperimentSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {}", path.display(), e.message())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(1.0)
    }

    pub fn per_positive(&self) -> usize {
        self.negatives_per_positive.unwrap_or(1)
    }

    /// Built-ins plus the operators declared in the config.
    pub fn registry(&self) -> Result<OperatorRegistry> {
        self.operators
            .iter()
            .try_fold(OperatorRegistry::builtins(), |reg, spec| register_operator(&reg, spec))
    }

    /// The registry restricted to `candidates`, kept in registry order.
    pub fn candidate_registry(&self) -> Result<OperatorRegistry> {
        let full = self.registry()?;
        let Some(names) = &self.candidates else {
            return Ok(full);
        };
        let mut wanted = Vec::new();
        for name in names {
            wanted.push(full.resolve(name)?.name());
        }
        full.ops()
            .iter()
            .filter(|op| wanted.contains(&op.name()))
            .try_fold(OperatorRegistry::empty(), |reg, op| reg.register(op.clone()))
    }

    /// Fills every unset scalar with its default so the logged config is
    /// exactly what the run uses.
    pub fn resolve_defaults(&mut self) {
        self.seed = Some(self.seed());
        self.budget = Some(self.budget());
        self.tolerance = Some(self.tolerance());
        self.negatives = Some(self.negatives.unwrap_or_default());
        self.negatives_per_positive = Some(self.per_positive());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\ncolour = 3\n").is_err());
    }

    #[test]
    fn operators_and_experiment_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
seed = 3
negatives = "corrupt-vs-op"
reference_op = "sum"

[[operators]]
name = "pairmax"
kind = "builtin"
function = "max"
arity = 2

[experiment]
scenario = "tp"
seeds = [1, 2]
n_bags = [10]
"#,
        )
        .unwrap();
        assert_eq!(cfg.negatives, Some(NegativePolicyKind::CorruptVsOp));
        let reg = cfg.registry().unwrap();
        assert!(reg.get("pairmax").is_some());
        assert_eq!(cfg.experiment.unwrap().n_bags, vec![10]);
    }

    #[test]
    fn candidate_subset_keeps_registry_order() {
        let cfg = RunConfig {
            candidates: Some(vec!["xor".into(), "plus".into()]),
            ..Default::default()
        };
        let reg = cfg.candidate_registry().unwrap();
        let names: Vec<&str> = reg.ops().iter().map(|op| op.name().as_str()).collect();
        assert_eq!(names, vec!["sum", "xor"]);
    }
}
