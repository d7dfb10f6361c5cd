//! JSON run configurations, one document per invocation.

use std::path::{Path, PathBuf};

use dqaem::harness::{paper_truth, InitMode, SuccessCriterion, TrialConfig};
use dqaem::io::ParamsJson;
use dqaem::quantum::Rule;
use dqaem::{AnnealSchedule, FitOptions, MStepOptions, MfaParams};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

/// Read a config file, apply `--set` overrides, and deserialize.
pub fn load<C: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<C, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// `a.b.c=value`. The value is parsed as JSON when possible and taken as a
/// bare string otherwise.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override `{spec}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(CliError::Config(format!("override `{key}` descends into a non-object")));
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::Config(format!("override `{key}` descends into a non-object"))),
    }
}

/// A generating model: the paper's three-cluster layout, explicit
/// parameters, or a params/truth JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Paper { variance: f64 },
    Params(ParamsJson),
    File(PathBuf),
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<MfaParams<f64>, CliError> {
        match self {
            ModelSpec::Paper { variance } => {
                if !(variance.is_finite() && *variance > 0.0) {
                    return Err(CliError::Config(format!("paper variance must be positive, got {variance}")));
                }
                Ok(paper_truth(*variance))
            }
            ModelSpec::Params(p) => Ok(p.to_params()?),
            ModelSpec::File(path) => {
                require_file(path)?;
                Ok(read_model_file(path)?)
            }
        }
    }
}

/// Accepts either a bare params document or a truth sidecar.
fn read_model_file(path: &Path) -> dqaem::Result<MfaParams<f64>> {
    match dqaem::io::read_json::<dqaem::io::TruthJson>(path) {
        Ok(t) => t.params.to_params(),
        Err(_) => dqaem::io::read_params(path),
    }
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("input file {} does not exist", path.display())))
    }
}

/// Create the parent directory of an output file up front.
pub fn prepare_output(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => prepare_dir(dir),
        _ => Ok(()),
    }
}

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub n: usize,
    pub model: ModelSpec,
    pub data_out: PathBuf,
    pub truth_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Em,
    Daem,
    Dqaem,
}

fn default_gamma_init() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_total_steps() -> usize {
    200
}
fn default_linear() -> Rule {
    Rule::Linear
}
fn default_constant() -> Rule {
    Rule::Constant
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_gamma_init")]
    pub gamma_init: f64,
    #[serde(default = "default_one")]
    pub beta_init: f64,
    #[serde(default = "default_total_steps")]
    pub total_steps: usize,
    #[serde(default = "default_linear")]
    pub gamma_rule: Rule,
    #[serde(default = "default_constant")]
    pub beta_rule: Rule,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            gamma_init: default_gamma_init(),
            beta_init: default_one(),
            total_steps: default_total_steps(),
            gamma_rule: default_linear(),
            beta_rule: default_constant(),
        }
    }
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> Result<AnnealSchedule<f64>, CliError> {
        let s = AnnealSchedule {
            gamma_init: self.gamma_init,
            beta_init: self.beta_init,
            total_steps: self.total_steps,
            gamma_rule: self.gamma_rule,
            beta_rule: self.beta_rule,
        };
        s.validate()?;
        Ok(s)
    }
}

fn default_max_iter() -> usize {
    dqaem::fit::DEFAULT_MAX_ITER
}
fn default_tol() -> f64 {
    dqaem::fit::DEFAULT_TOL
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_true")]
    pub diagonal_noise: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            tol: default_tol(),
            diagonal_noise: true,
        }
    }
}

impl Limits {
    pub fn to_options(&self) -> Result<FitOptions<f64>, CliError> {
        let opts = FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            mstep: MStepOptions {
                diagonal_noise: self.diagonal_noise,
                ..MStepOptions::default()
            },
            audit: false,
        };
        opts.validate()?;
        Ok(opts)
    }
}

fn default_beads() -> usize {
    128
}
fn default_fit_threads() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub solver: Solver,
    pub data: PathBuf,
    /// Number of mixture components.
    pub m: usize,
    /// Latent dimension.
    pub k: usize,
    /// Seed for the random initialization; ignored when `init` is given.
    pub seed: u64,
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default = "default_beads")]
    pub beads: usize,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub trace_out: PathBuf,
    pub params_out: PathBuf,
    #[serde(default = "default_fit_threads")]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Comparison,
    Monotonicity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    /// Worker threads; 0 means one per available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default)]
    pub monotonicity: Option<MonotonicityConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub truth: ModelSpec,
    pub n: usize,
    pub data_seed: u64,
    #[serde(default)]
    pub fresh_dataset_per_trial: bool,
    pub init_seed: u64,
    #[serde(default)]
    pub init: InitMode,
    pub trials: usize,
    pub fit_k: usize,
    #[serde(default = "default_beads")]
    pub beads: usize,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub em: Limits,
    #[serde(default)]
    pub dqaem: Limits,
    #[serde(default = "default_threshold")]
    pub threshold_factor: f64,
    #[serde(default = "default_true")]
    pub write_traces: bool,
}

fn default_threshold() -> f64 {
    SuccessCriterion::default().threshold_factor
}

impl ComparisonConfig {
    pub fn to_trial_config(&self) -> Result<TrialConfig, CliError> {
        if !(self.threshold_factor.is_finite() && self.threshold_factor > 0.0) {
            return Err(CliError::Config("threshold_factor must be positive".into()));
        }
        let cfg = TrialConfig {
            truth: self.truth.resolve()?,
            n: self.n,
            data_seed: self.data_seed,
            fresh_dataset_per_trial: self.fresh_dataset_per_trial,
            init_seed: self.init_seed,
            init: self.init,
            trials: self.trials,
            fit_k: self.fit_k,
            beads: self.beads,
            schedule: self.schedule.to_schedule()?,
            em: self.em.to_options()?,
            dqaem: self.dqaem.to_options()?,
            criterion: SuccessCriterion {
                threshold_factor: self.threshold_factor,
            },
            keep_traces: self.write_traces,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Dataset for a monotonicity run: an existing CSV or a freshly sampled one.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    File(PathBuf),
    Generate { model: ModelSpec, n: usize, seed: u64 },
}

fn default_models() -> Vec<usize> {
    vec![1, 3, 7, 10]
}
fn default_mono_beads() -> usize {
    8
}
fn default_mono_iters() -> usize {
    200
}
fn default_restarts() -> usize {
    20
}
fn default_mono_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityConfig {
    pub data: DataSource,
    #[serde(default = "default_models")]
    pub models: Vec<usize>,
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub gamma: f64,
    #[serde(default = "default_mono_beads")]
    pub beads: usize,
    #[serde(default = "default_mono_iters")]
    pub iters: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    pub fit_k: usize,
    pub init_seed: u64,
    #[serde(default = "default_mono_tol")]
    pub tol: f64,
}

fn default_gates() -> Vec<String> {
    dqaem::oracle::gates::ALL_GATES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_gates")]
    pub gates: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub perturb_log_partition: f64,
    pub report_out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_sets_nested_keys() {
        let mut doc = json!({"a": {"b": 1}});
        apply_override(&mut doc, "a.b=2.5").unwrap();
        apply_override(&mut doc, "a.c.d=[1,2]").unwrap();
        apply_override(&mut doc, "name=hello").unwrap();
        assert_eq!(doc, json!({"a": {"b": 2.5, "c": {"d": [1, 2]}}, "name": "hello"}));
    }

    #[test]
    fn override_rejects_malformed() {
        let mut doc = json!({"a": 1});
        assert!(apply_override(&mut doc, "novalue").is_err());
        assert!(apply_override(&mut doc, "a..b=1").is_err());
        assert!(apply_override(&mut doc, "a.b=1").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let v = json!({"seed": 1, "n": 3, "model": {"paper": {"variance": 0.1}},
                       "data_out": "a.csv", "truth_out": "t.json", "bogus": 1});
        assert!(serde_json::from_value::<GenerateConfig>(v).is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let v = json!({"n": 3, "model": {"paper": {"variance": 0.1}}, "data_out": "a.csv", "truth_out": "t.json"});
        assert!(serde_json::from_value::<GenerateConfig>(v).is_err());
    }
}
