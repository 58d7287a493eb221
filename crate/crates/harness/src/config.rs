//! Experiment configuration: a single strict JSON document.
//!
//! Unknown keys are errors (with a suggestion when a known key is close),
//! defaults live in the `Default` impls below, and per-kind semantic
//! constraints (for example `beta > 1/2` for scaling experiments) are
//! checked at parse time.

use std::path::{Path, PathBuf};

use hermite_flow_core::dynamics::RunConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Experiment kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Oracle suite: finite-difference gradient checks, Monte Carlo loss
    /// checks, zero-mean gradient noise, greedy selection brute-force check.
    Validate,
    /// Single neuron / single direction run compared against the idealized
    /// overlap ODE and the predicted transition time.
    SingleIndex,
    /// Multi-direction run: detection of every tracked transition, time
    /// ratios, sharpness, unused-neuron norms, norm convergence.
    Emergence,
    /// Loss-vs-time slope against the theoretical exponent, plus width
    /// plateau checks for swept widths.
    Scaling,
    /// Compute-optimal frontier slope over a width sweep.
    ComputeOptimal,
    /// Initialization gap statistics: near-collision frequencies against the
    /// Cauchy bound, and gap positivity across seeds.
    InitGaps,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::SingleIndex => "single_index",
            Kind::Emergence => "emergence",
            Kind::Scaling => "scaling",
            Kind::ComputeOptimal => "compute_optimal",
            Kind::InitGaps => "init_gaps",
        }
    }
}

/// Numeric tolerances; every pass/fail in a report cites one of these.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance for loss-like comparisons (ODE tracking, SGD/GD
    /// consistency).
    pub loss_rel_tol: f64,
    /// Relative tolerance for gradient finite-difference checks.
    pub grad_rel_tol: f64,
    /// Relative tolerance for transition-time comparisons.
    pub time_rel_tol: f64,
    /// Absolute tolerance for fitted log-log slopes.
    pub slope_tol: f64,
    /// Relative tolerance for norm convergence `||v_p||^2 -> a_{pi(p)}`.
    pub norm_rel_tol: f64,
    /// Width plateaus must match the predicted tail within this factor.
    pub plateau_factor: f64,
    /// Number of standard errors for Monte Carlo agreement checks.
    pub mc_sigma: f64,
    /// Minimum fraction of instances that must pass a statistical check.
    pub pass_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            loss_rel_tol: 0.10,
            grad_rel_tol: 1e-5,
            time_rel_tol: 0.30,
            slope_tol: 0.15,
            norm_rel_tol: 0.05,
            plateau_factor: 3.0,
            mc_sigma: 3.0,
            pass_fraction: 0.94,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("loss_rel_tol", self.loss_rel_tol),
            ("grad_rel_tol", self.grad_rel_tol),
            ("time_rel_tol", self.time_rel_tol),
            ("slope_tol", self.slope_tol),
            ("norm_rel_tol", self.norm_rel_tol),
            ("plateau_factor", self.plateau_factor),
            ("mc_sigma", self.mc_sigma),
            ("pass_fraction", self.pass_fraction),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "tolerances.{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Loss window `(hi, lo)` for slope fits: only points with
/// `lo < L < hi` enter the regression.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWindow {
    pub hi: f64,
    pub lo: f64,
}

impl Default for LossWindow {
    fn default() -> Self {
        Self { hi: 0.5, lo: 0.02 }
    }
}

/// Optional per-parameter sweeps; swept runs are independently seeded from
/// the point parameters, so results do not depend on list order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub m: Option<Vec<usize>>,
    pub eta: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
}

impl Sweep {
    fn validate(&self) -> Result<()> {
        if self.m.as_deref() == Some(&[])
            || self.eta.as_deref() == Some(&[])
            || self.beta.as_deref() == Some(&[])
            || self.seed.as_deref() == Some(&[])
        {
            return Err(Error::Config("sweep lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// Options for the `validate` kind.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateOptions {
    pub instances: usize,
    pub mc_samples: u64,
    pub noise_instances: usize,
    pub noise_samples: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            instances: 50,
            mc_samples: 1_000_000,
            noise_instances: 10,
            noise_samples: 100_000,
        }
    }
}

/// Gap-positivity sampling options for the `init_gaps` kind.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositivityOptions {
    pub d: usize,
    pub m: usize,
    pub p: usize,
    pub seeds: u64,
    pub min_fraction: f64,
}

impl Default for PositivityOptions {
    fn default() -> Self {
        Self {
            d: 400,
            m: 40,
            p: 20,
            seeds: 1000,
            min_fraction: 0.99,
        }
    }
}

/// Options for the `init_gaps` kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitGapsOptions {
    pub trials: u64,
    pub deltas: Vec<f64>,
    /// The empirical frequency must stay below `(2/pi) delta (1 + margin)`.
    pub bound_margin: f64,
    pub positivity: Option<PositivityOptions>,
}

impl Default for InitGapsOptions {
    fn default() -> Self {
        Self {
            trials: 100_000,
            deltas: vec![0.01, 0.02],
            bound_margin: 0.2,
            positivity: Some(PositivityOptions::default()),
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub loss_window: LossWindow,
    /// Acceptable `[lo, hi]` range for the compute-optimal frontier slope;
    /// defaults to the theoretical exponent +- slope_tol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<(f64, f64)>,
    #[serde(default = "default_emergence_threshold")]
    pub emergence_threshold: f64,
    #[serde(default)]
    pub validate: ValidateOptions,
    #[serde(default)]
    pub init_gaps: InitGapsOptions,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_emergence_threshold() -> f64 {
    0.5
}

impl ExperimentSpec {
    /// Semantic validation beyond shape: run-config invariants and per-kind
    /// requirements.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.sweep.validate()?;
        self.tolerances.validate()?;
        if !(self.loss_window.hi > self.loss_window.lo && self.loss_window.lo > 0.0) {
            return Err(Error::Config(format!(
                "loss_window must satisfy hi > lo > 0, got ({}, {})",
                self.loss_window.hi, self.loss_window.lo
            )));
        }
        if !(self.emergence_threshold > 0.0 && self.emergence_threshold < 1.0) {
            return Err(Error::Config(format!(
                "emergence_threshold must lie in (0, 1), got {}",
                self.emergence_threshold
            )));
        }
        match self.kind {
            Kind::Scaling | Kind::ComputeOptimal => {
                let betas: Vec<f64> = self
                    .sweep
                    .beta
                    .clone()
                    .unwrap_or_default()
                    .into_iter()
                    .chain(self.base.beta)
                    .collect();
                if betas.is_empty() {
                    return Err(Error::Config(format!(
                        "kind {} needs a power-law teacher: set base.beta",
                        self.kind.name()
                    )));
                }
                for b in betas {
                    if !(b > 0.5) {
                        return Err(Error::Config(format!(
                            "kind {} requires beta > 1/2 (power-law scaling regime), got beta = {b}",
                            self.kind.name()
                        )));
                    }
                }
            }
            Kind::SingleIndex if self.base.p != 1 || self.base.m != 1 => {
                return Err(Error::Config(format!(
                    "kind single_index requires P = m = 1, got P = {}, m = {}",
                    self.base.p, self.base.m
                )));
            }
            _ => {}
        }
        if self.kind == Kind::ComputeOptimal {
            let n = self.sweep.m.as_ref().map_or(0, |v| v.len());
            if n < 2 {
                return Err(Error::Config(
                    "kind compute_optimal needs sweep.m with at least two widths".into(),
                ));
            }
        }
        if let Some((lo, hi)) = self.slope_range {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "slope_range must be [lo, hi] with lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if let Some(deltas) = Some(&self.init_gaps.deltas) {
            if self.kind == Kind::InitGaps && deltas.is_empty() {
                return Err(Error::Config("init_gaps.deltas must be non-empty".into()));
            }
        }
        Ok(())
    }
}

/// Parse and validate an experiment config file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parse and validate an experiment config from a JSON string.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
    check_unknown_keys(&value, Schema::Root, "")?;
    let mut spec: ExperimentSpec = serde_json::from_value(value)
        .map_err(|e| Error::Config(e.to_string()))?;
    // documented default teacher: power law with beta = 0.8
    if spec.base.beta.is_none() && spec.base.a.is_none() {
        spec.base.beta = Some(0.8);
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy)]
enum Schema {
    Root,
    Base,
    LogSchedule,
    Activation,
    Sweep,
    Tolerances,
    LossWindow,
    Validate,
    InitGaps,
    Positivity,
    /// Arbitrary keys allowed (activation coefficient maps).
    Open,
}

impl Schema {
    fn keys(self) -> &'static [(&'static str, Schema)] {
        match self {
            Schema::Root => &[
                ("kind", Schema::Open),
                ("base", Schema::Base),
                ("sweep", Schema::Sweep),
                ("output_dir", Schema::Open),
                ("tolerances", Schema::Tolerances),
                ("loss_window", Schema::LossWindow),
                ("slope_range", Schema::Open),
                ("emergence_threshold", Schema::Open),
                ("validate", Schema::Validate),
                ("init_gaps", Schema::InitGaps),
            ],
            Schema::Base => &[
                ("d", Schema::Open),
                ("p", Schema::Open),
                ("m", Schema::Open),
                ("beta", Schema::Open),
                ("a", Schema::Open),
                ("eta", Schema::Open),
                ("sigma0", Schema::Open),
                ("steps", Schema::Open),
                ("seed", Schema::Open),
                ("init_seed", Schema::Open),
                ("mode", Schema::Open),
                ("log_schedule", Schema::LogSchedule),
                ("activation", Schema::Activation),
                ("p_star", Schema::Open),
                ("stop_at_loss", Schema::Open),
            ],
            Schema::LogSchedule => &[
                ("dense_prefix", Schema::Open),
                ("stride", Schema::Open),
            ],
            Schema::Activation => &[
                ("coeffs", Schema::Open),
                ("info_exponent", Schema::Open),
                ("hermite", Schema::Open),
            ],
            Schema::Sweep => &[
                ("m", Schema::Open),
                ("eta", Schema::Open),
                ("beta", Schema::Open),
                ("seed", Schema::Open),
            ],
            Schema::Tolerances => &[
                ("loss_rel_tol", Schema::Open),
                ("grad_rel_tol", Schema::Open),
                ("time_rel_tol", Schema::Open),
                ("slope_tol", Schema::Open),
                ("norm_rel_tol", Schema::Open),
                ("plateau_factor", Schema::Open),
                ("mc_sigma", Schema::Open),
                ("pass_fraction", Schema::Open),
            ],
            Schema::LossWindow => &[("hi", Schema::Open), ("lo", Schema::Open)],
            Schema::Validate => &[
                ("instances", Schema::Open),
                ("mc_samples", Schema::Open),
                ("noise_instances", Schema::Open),
                ("noise_samples", Schema::Open),
            ],
            Schema::InitGaps => &[
                ("trials", Schema::Open),
                ("deltas", Schema::Open),
                ("bound_margin", Schema::Open),
                ("positivity", Schema::Positivity),
            ],
            Schema::Positivity => &[
                ("d", Schema::Open),
                ("m", Schema::Open),
                ("p", Schema::Open),
                ("seeds", Schema::Open),
                ("min_fraction", Schema::Open),
            ],
            Schema::Open => &[],
        }
    }
}

/// Hand-written aliases for common misnamings; checked before the generic
/// edit-distance suggestion.
const ALIASES: &[(&str, &str)] = &[
    ("lr", "eta"),
    ("learning_rate", "eta"),
    ("step_size", "eta"),
    ("width", "m"),
    ("dim", "d"),
    ("dimension", "d"),
    ("teacher_width", "p"),
    ("init_scale", "sigma0"),
    ("iterations", "steps"),
    ("n_steps", "steps"),
    ("out", "output_dir"),
];

fn check_unknown_keys(value: &serde_json::Value, schema: Schema, path: &str) -> Result<()> {
    if matches!(schema, Schema::Open) {
        return Ok(());
    }
    let Some(map) = value.as_object() else {
        return Ok(());
    };
    let allowed = schema.keys();
    for (key, sub) in map {
        match allowed.iter().find(|(k, _)| k == key) {
            Some((_, next)) => {
                let sub_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                check_unknown_keys(sub, *next, &sub_path)?;
            }
            None => {
                let here = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                let suggestion = suggest(key, allowed);
                let msg = match suggestion {
                    Some(s) => format!("unknown key \"{here}\"; did you mean \"{s}\"?"),
                    None => format!(
                        "unknown key \"{here}\"; allowed keys here: {}",
                        allowed
                            .iter()
                            .map(|(k, _)| *k)
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                };
                return Err(Error::Config(msg));
            }
        }
    }
    Ok(())
}

fn suggest(key: &str, allowed: &[(&str, Schema)]) -> Option<String> {
    if let Some((_, target)) = ALIASES.iter().find(|(alias, _)| *alias == key) {
        if allowed.iter().any(|(k, _)| k == target) {
            return Some((*target).into());
        }
    }
    allowed
        .iter()
        .map(|(k, _)| (*k, edit_distance(key, k)))
        .filter(|&(_, dist)| dist <= 2)
        .min_by_key(|&(_, dist)| dist)
        .map(|(k, _)| k.into())
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The documented defaults for every field, rendered as JSON. This is the
/// single place (besides the `Default` impls it reflects) defaults live.
pub fn default_spec_json(kind: Kind) -> serde_json::Value {
    let spec = ExperimentSpec {
        kind,
        base: RunConfig::default(),
        sweep: Sweep::default(),
        output_dir: default_output_dir(),
        tolerances: Tolerances::default(),
        loss_window: LossWindow::default(),
        slope_range: None,
        emergence_threshold: default_emergence_threshold(),
        validate: ValidateOptions::default(),
        init_gaps: InitGapsOptions::default(),
    };
    serde_json::to_value(&spec).expect("defaults serialize")
}
