//! `mipll`: command-line front end.
//!
//! Exit codes: 0 ok, 2 config or data error, 3 I/O error, 4 tie between
//! operators, 5 no operator meets the tolerance.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mipll_core::datagen::{
    gen_digit_dataset_with, gen_noisy_predictions, gen_scene_dataset, table_demo_graph, DigitGenConfig, NoiseModel,
    SceneGenConfig,
};
use mipll_core::experiment::{run_cp_experiment, run_scene_experiment, run_tp_experiment, ExperimentSpec, Scenario};
use mipll_core::facts::{parse_alphabet, write_dataset, write_scene};
use mipll_core::ledger::NegativePolicyKind;
use mipll_core::scene::{
    accepted_relations, build_scene_tp_examples, infer_scene_relations, table_scene_fixture,
    validate_scene_detections,
};
use mipll_core::{
    abduce_labels, brute_force_abduction_oracle, validate_classifier, validate_dataset, Dataset, Error, FactFile, NegativePolicy,
    RelationAtom, Result,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_TIE: u8 = 4;
const EXIT_NO_PASS: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "mipll", version, about = "Transition-operator inference and label abduction for weakly labelled bags")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset or scene as facts.
    Gen(GenArgs),
    /// Rank candidate transition operators.
    InferTp(InferArgs),
    /// Abduce per-instance candidate labels under a known operator.
    Abduce(AbduceArgs),
    /// Check classifier predictions (or scene detections) against the constraints.
    Validate(ValidateArgs),
    /// Run a parameter sweep.
    Eval(EvalArgs),
    /// Infer scene relations from fragments.
    Scene(SceneArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Generating operator.
    #[arg(long, conflicts_with = "scene")]
    op: Option<String>,
    #[arg(long, default_value_t = 50)]
    bags: usize,
    /// Bag size; defaults to the operator's arity, or 2.
    #[arg(long)]
    m: Option<usize>,
    /// Instance alphabet, e.g. `0..9`.
    #[arg(long, default_value = "0..9")]
    alphabet: String,
    /// Probability of reusing an existing instance in a new bag slot.
    #[arg(long, default_value_t = 0.0)]
    reuse: f64,
    /// Prediction noise rate.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Emit a scene instead; only `table-demo` is known.
    #[arg(long)]
    scene: Option<String>,
    /// Generated fragments; without it the three-view fixture is written.
    #[arg(long)]
    fragments: Option<usize>,
    #[arg(long, default_value_t = 0.75)]
    visibility: f64,
    #[arg(long, default_value_t = 0.0)]
    distractors: f64,
    /// Fact file to write; a `.manifest.json` sidecar goes next to it.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum NegativesArg {
    None,
    CorruptS,
    CorruptVsOp,
}

impl From<NegativesArg> for NegativePolicyKind {
    fn from(n: NegativesArg) -> Self {
        match n {
            NegativesArg::None => NegativePolicyKind::None,
            NegativesArg::CorruptS => NegativePolicyKind::CorruptS,
            NegativesArg::CorruptVsOp => NegativePolicyKind::CorruptVsOp,
        }
    }
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Fact files, read in order as one document.
    #[arg(required = true)]
    facts: Vec<PathBuf>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, value_enum)]
    negatives: Option<NegativesArg>,
    #[arg(long)]
    per_positive: Option<usize>,
    /// Reference operator for `corrupt-vs-op`.
    #[arg(long)]
    reference_op: Option<String>,
    /// Comma-separated candidate subset.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<String>>,
    /// Print the example ledger next to the verdict.
    #[arg(long)]
    ledger: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct AbduceArgs {
    #[arg(required = true)]
    facts: Vec<PathBuf>,
    #[arg(long)]
    op: String,
    /// Exhaustive global consistency instead of per-bag intersection.
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(required = true)]
    facts: Vec<PathBuf>,
    #[arg(long, required_unless_present = "scene")]
    op: Option<String>,
    /// Validate scene detections against accepted relations.
    #[arg(long, conflicts_with = "op")]
    scene: bool,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Experiment spec (TOML); falls back to `[experiment]` in --config.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory for `rows.csv` and `summary.json`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct SceneArgs {
    #[arg(required = true)]
    facts: Vec<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("mipll: error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    match &cli.command {
        Command::InferTp(a) => {
            cfg.tolerance = a.tolerance.or(cfg.tolerance);
            cfg.negatives = a.negatives.map(Into::into).or(cfg.negatives);
            cfg.negatives_per_positive = a.per_positive.or(cfg.negatives_per_positive);
            cfg.reference_op = a.reference_op.clone().or(cfg.reference_op.take());
            cfg.candidates = a.candidates.clone().or(cfg.candidates.take());
        }
        Command::Abduce(a) => cfg.budget = a.budget.or(cfg.budget),
        Command::Validate(a) => cfg.budget = a.budget.or(cfg.budget),
        _ => {}
    }
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(Error::InvalidParameter("--jobs must be ≥ 1".into()));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let seed_given = cfg.seed.is_some();
    cfg.resolve_defaults();
    eprintln!("mipll: config {}", cfg.to_json());
    match cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a),
        Command::InferTp(a) => cmd_infer_tp(&cfg, a),
        Command::Abduce(a) => cmd_abduce(&cfg, a),
        Command::Validate(a) => cmd_validate(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, seed_given, a),
        Command::Scene(a) => cmd_scene(a),
    }
}

fn read_facts(paths: &[PathBuf]) -> Result<FactFile> {
    let mut text = String::new();
    for path in paths {
        let chunk = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        text.push_str(&chunk);
        if !chunk.ends_with('\n') {
            text.push('\n');
        }
    }
    FactFile::parse(&text)
}

/// The file's dataset, rejected with every violation listed if malformed.
fn load_dataset(facts: &FactFile) -> Result<Dataset> {
    let d = facts.dataset()?;
    let report = validate_dataset(&d);
    if !report.is_ok() {
        let lines: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidParameter(format!("invalid dataset: {}", lines.join("; "))));
    }
    Ok(d)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let mut text = text.to_owned();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

#[derive(Serialize)]
struct Manifest<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    parameters: serde_json::Value,
    file: &'a str,
    bytes: usize,
    sha256: String,
}

fn cmd_gen(cfg: &RunConfig, a: GenArgs) -> Result<u8> {
    let seed = cfg.seed();
    let (text, parameters) = match (&a.op, &a.scene) {
        (Some(op_name), None) => {
            let registry = cfg.registry()?;
            let op = registry.resolve(op_name)?;
            let m = a.m.unwrap_or(match op.arity() {
                mipll_core::Arity::Fixed(n) => n,
                mipll_core::Arity::Variadic => 2,
            });
            let alphabet = parse_alphabet(&a.alphabet)?;
            let gen_cfg = DigitGenConfig {
                n_bags: a.bags,
                m,
                reuse_probability: a.reuse,
                seed,
            };
            let d = gen_digit_dataset_with(op, &alphabet, &gen_cfg)?;
            let preds = gen_noisy_predictions(&d, &NoiseModel::uniform(a.noise, seed.wrapping_add(1)))?;
            let header = format!(
                "% generated: op={} bags={} m={} reuse={} noise={} seed={}\n",
                op.name(),
                a.bags,
                m,
                a.reuse,
                a.noise,
                seed
            );
            let params = serde_json::json!({
                "op": op.name().as_str(), "bags": a.bags, "m": m, "alphabet": alphabet.to_fact_text(),
                "reuse": a.reuse, "noise": a.noise,
            });
            (header + &write_dataset(&d, Some(&preds)), params)
        }
        (None, Some(scene)) => {
            if scene != "table-demo" {
                return Err(Error::InvalidParameter(format!("unknown scene `{scene}`; known: table-demo")));
            }
            let (graph, objects) = table_demo_graph();
            let vocab = mipll_core::OperatorRegistry::scene_relations();
            let (fragments, params) = match a.fragments {
                None => (table_scene_fixture(), serde_json::json!({"scene": scene, "fixture": true})),
                Some(n) => {
                    let scene_cfg = SceneGenConfig {
                        n_fragments: n,
                        visibility: a.visibility,
                        distractor_rate: a.distractors,
                        seed,
                    };
                    let params = serde_json::json!({
                        "scene": scene, "fragments": n, "visibility": a.visibility, "distractors": a.distractors,
                    });
                    (gen_scene_dataset(&graph, &objects, &vocab, &scene_cfg)?, params)
                }
            };
            (write_scene(&fragments, Some(&objects), Some(&vocab), &[]), params)
        }
        _ => return Err(Error::InvalidParameter("gen needs exactly one of --op or --scene".into())),
    };
    match &a.out {
        None => emit(None, &text)?,
        Some(path) => {
            write_text(path, &text)?;
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let manifest = Manifest {
                generator: "mipll gen",
                version: env!("CARGO_PKG_VERSION"),
                seed,
                parameters,
                file: &name,
                bytes: text.len(),
                sha256: hex::encode(Sha256::digest(text.as_bytes())),
            };
            let mut manifest_path = path.clone().into_os_string();
            manifest_path.push(".manifest.json");
            write_text(Path::new(&manifest_path), &(pretty(&manifest) + "\n"))?;
        }
    }
    Ok(0)
}

fn cmd_infer_tp(cfg: &RunConfig, a: InferArgs) -> Result<u8> {
    let facts = read_facts(&a.facts)?;
    let d = load_dataset(&facts)?;
    let preds = facts
        .predictions
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("infer-tp needs cp facts".into()))?;
    let full = cfg.registry()?;
    let candidates = cfg.candidate_registry()?;
    let reference;
    let policy = match cfg.negatives.unwrap_or_default() {
        NegativePolicyKind::None => NegativePolicy::None,
        NegativePolicyKind::CorruptS => NegativePolicy::CorruptS {
            registry: &full,
            per_positive: cfg.per_positive(),
        },
        NegativePolicyKind::CorruptVsOp => {
            let name = cfg
                .reference_op
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("corrupt-vs-op needs --reference-op".into()))?;
            reference = full.resolve(name)?.clone();
            NegativePolicy::CorruptVsOp {
                op: &reference,
                per_positive: cfg.per_positive(),
            }
        }
    };
    let ledger = mipll_core::build_tp_examples(&d, preds, policy, cfg.seed())?;
    let verdict = mipll_core::rank_hypotheses(&candidates, &ledger, cfg.tolerance());
    let mut value = serde_json::to_value(&verdict).expect("verdict serializes");
    value["best_consistency"] = serde_json::json!(verdict.best_consistency());
    if a.ledger {
        value["ledger"] = serde_json::to_value(&ledger).expect("ledger serializes");
    }
    emit(a.out.as_deref(), &pretty(&value))?;
    Ok(match verdict.winners.len() {
        0 => {
            eprintln!(
                "mipll: no operator reaches tolerance {} (best consistency {:?})",
                verdict.tolerance,
                verdict.best_consistency()
            );
            EXIT_NO_PASS
        }
        1 => 0,
        _ => EXIT_TIE,
    })
}

fn cmd_abduce(cfg: &RunConfig, a: AbduceArgs) -> Result<u8> {
    let facts = read_facts(&a.facts)?;
    let d = load_dataset(&facts)?;
    let registry = cfg.registry()?;
    let op = registry.resolve(&a.op)?;
    let map = if a.oracle {
        brute_force_abduction_oracle(&d, op, cfg.budget())?
    } else {
        abduce_labels(&d, op, cfg.budget())?
    };
    let text = match a.format {
        Format::Json => map.to_json(),
        Format::Csv => map.to_csv(d.ground_truth.as_ref())?,
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

/// Inferred relations together with the file's `accept` facts.
fn scene_acceptance(facts: &FactFile) -> Result<(Vec<mipll_core::scene::PairVerdict>, Vec<RelationAtom>)> {
    let vocab = facts.relation_vocabulary();
    let verdicts = infer_scene_relations(&facts.fragments, &vocab)?;
    let accepted: BTreeSet<RelationAtom> = accepted_relations(&verdicts)
        .into_iter()
        .chain(facts.accepted.iter().copied())
        .collect();
    Ok((verdicts, accepted.into_iter().collect()))
}

fn atom_strings(atoms: &[RelationAtom]) -> Vec<String> {
    atoms.iter().map(ToString::to_string).collect()
}

fn cmd_validate(cfg: &RunConfig, a: ValidateArgs) -> Result<u8> {
    let facts = read_facts(&a.facts)?;
    if a.scene {
        let (_, accepted) = scene_acceptance(&facts)?;
        let report = validate_scene_detections(&facts.fragments, &accepted);
        let value = serde_json::json!({
            "accepted": atom_strings(&accepted),
            "report": report,
        });
        emit(a.out.as_deref(), &pretty(&value))?;
        return Ok(0);
    }
    let d = load_dataset(&facts)?;
    let preds = facts
        .predictions
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("validate needs cp facts".into()))?;
    let registry = cfg.registry()?;
    let op = registry.resolve(a.op.as_deref().expect("clap requires --op"))?;
    let report = validate_classifier(&d, op, preds, cfg.budget())?;
    emit(a.out.as_deref(), &report.to_json())?;
    Ok(0)
}

fn cmd_eval(cfg: &RunConfig, seed_given: bool, a: EvalArgs) -> Result<u8> {
    let mut spec: ExperimentSpec = match (&a.spec, &cfg.experiment) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Error::InvalidExperiment(format!("{}: {}", path.display(), e.message())))?
        }
        (None, Some(spec)) => spec.clone(),
        (None, None) => return Err(Error::InvalidExperiment("eval needs --spec or [experiment] in --config".into())),
    };
    if seed_given {
        // --seed shifts the whole seed list, keeping its length
        let base = cfg.seed();
        let n = spec.seeds.len() as u64;
        spec.seeds = (0..n).map(|k| base.wrapping_add(k)).collect();
    }
    eprintln!("mipll: experiment {}", serde_json::to_string(&spec).expect("spec serializes"));
    let (csv, summary) = match spec.scenario {
        Scenario::Tp => {
            let t = run_tp_experiment(&spec)?;
            (t.to_csv()?, t.summary_json())
        }
        Scenario::Cp => {
            let t = run_cp_experiment(&spec)?;
            (t.to_csv()?, t.summary_json())
        }
        Scenario::Scene => {
            let t = run_scene_experiment(&spec)?;
            (t.to_csv()?, t.summary_json())
        }
    };
    let out_dir = a.out_dir.clone().or_else(|| spec.output.as_ref().map(PathBuf::from));
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        write_text(&dir.join("rows.csv"), &csv)?;
        write_text(&dir.join("summary.json"), &(summary.clone() + "\n"))?;
    }
    match a.format {
        Format::Json => emit(None, &summary)?,
        Format::Csv => emit(None, &csv)?,
    }
    Ok(0)
}

fn cmd_scene(a: SceneArgs) -> Result<u8> {
    let facts = read_facts(&a.facts)?;
    let vocab = facts.relation_vocabulary();
    let ledger = build_scene_tp_examples(&facts.fragments, &vocab)?;
    let (verdicts, accepted) = scene_acceptance(&facts)?;
    let report = validate_scene_detections(&facts.fragments, &accepted);
    let pairs: Vec<serde_json::Value> = verdicts
        .iter()
        .map(|v| {
            serde_json::json!({
                "pair": v.pair,
                "accepted": v.accepted,
                "unsupported": v.unsupported,
                "scores": v.verdict.ranked,
            })
        })
        .collect();
    let value = serde_json::json!({
        "ledger": ledger,
        "pairs": pairs,
        "accepted": atom_strings(&accepted),
        "validation": report,
    });
    emit(a.out.as_deref(), &pretty(&value))?;
    Ok(0)
}
