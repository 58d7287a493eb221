//! Training loops (online SGD with fresh samples, gradient descent on the
//! population loss), trajectory logging, emergence-time detection, and
//! runtime diagnostics.
//!
//! A run is strictly sequential; determinism comes from deriving every
//! random draw from `(seed, stream, step)`, so the logging schedule never
//! perturbs the trajectory and identical configs reproduce identical logs.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::Activation;
use crate::model::{
    population_grad, population_grad_from_view, population_loss_from_view, sample_grad,
    OverlapView, StudentState, TeacherModel,
};
use crate::rng::{self, STREAM_INIT, STREAM_SAMPLE};
use crate::selection::{self, GapStats, SelectionMap};

/// Training mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One fresh Gaussian sample per step, vanilla SGD on the per-sample loss.
    OnlineSgd,
    /// Fixed-step gradient descent on the closed-form population loss.
    PopulationGd,
}

/// Geometric logging schedule: every step for the first `dense_prefix`
/// steps, then log points spaced by the factor `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSchedule {
    #[serde(default = "default_dense_prefix")]
    pub dense_prefix: u64,
    #[serde(default = "default_stride")]
    pub stride: f64,
}

fn default_dense_prefix() -> u64 {
    1000
}

fn default_stride() -> f64 {
    1.1
}

impl Default for LogSchedule {
    fn default() -> Self {
        Self {
            dense_prefix: default_dense_prefix(),
            stride: default_stride(),
        }
    }
}

impl LogSchedule {
    /// First log point strictly after `t`.
    pub(crate) fn next_after(&self, t: u64) -> u64 {
        if t < self.dense_prefix {
            t + 1
        } else {
            ((t as f64) * self.stride).floor().max((t + 1) as f64) as u64
        }
    }
}

fn default_d() -> usize {
    256
}
fn default_p() -> usize {
    8
}
fn default_m() -> usize {
    24
}
fn default_eta() -> f64 {
    0.05
}
fn default_sigma0() -> f64 {
    1e-3
}
fn default_steps() -> u64 {
    10_000
}
fn default_mode() -> Mode {
    Mode::PopulationGd
}
fn default_activation() -> Activation {
    Activation::pure_hermite(4).expect("h4 is valid")
}

/// Full description of a single training run.
///
/// Teacher coefficients come either from `beta` (power law `a_p ~ p^-beta`)
/// or from an explicit `a` vector; exactly one must be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    /// Teacher width P.
    #[serde(default = "default_p")]
    pub p: usize,
    /// Student width m.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Power-law exponent for the teacher coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Explicit teacher coefficients (descending, unit square sum).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Initialization radius: rows start uniform on the sphere of this radius.
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Separate seed for the initialization stream; defaults to `seed`.
    /// Lets an ensemble share one initialization while varying the
    /// fresh-sample stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_seed: Option<u64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub log_schedule: LogSchedule,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// How many matched directions to track; defaults to `min(m, P)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<usize>,
    /// Stop early once the logged loss reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_loss: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: default_d(),
            p: default_p(),
            m: default_m(),
            beta: Some(0.8),
            a: None,
            eta: default_eta(),
            sigma0: default_sigma0(),
            steps: default_steps(),
            seed: 0,
            init_seed: None,
            mode: default_mode(),
            log_schedule: LogSchedule::default(),
            activation: default_activation(),
            p_star: None,
            stop_at_loss: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.p == 0 || self.m == 0 {
            return Err(Error::InvalidParameter(
                "d, p, and m must all be positive".into(),
            ));
        }
        if self.p > self.d {
            return Err(Error::InvalidParameter(format!(
                "teacher width p = {} exceeds dimension d = {}",
                self.p, self.d
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if !(self.log_schedule.stride > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "log stride must exceed 1, got {}",
                self.log_schedule.stride
            )));
        }
        match (&self.beta, &self.a) {
            (Some(b), None) => {
                if !(*b >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "beta must be nonnegative, got {b}"
                    )));
                }
            }
            (None, Some(_)) => {}
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter(
                    "give either beta or an explicit a vector, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "teacher coefficients missing: set beta or a".into(),
                ))
            }
        }
        if let Some(ps) = self.p_star {
            if ps == 0 || ps > self.m.min(self.p) {
                return Err(Error::InvalidParameter(format!(
                    "p_star = {ps} must lie in [1, min(m, P)]"
                )));
            }
        }
        if let Some(s) = self.stop_at_loss {
            if !(s >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "stop_at_loss must be nonnegative, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn teacher(&self) -> Result<TeacherModel> {
        match (&self.beta, &self.a) {
            (Some(beta), None) => TeacherModel::power_law(self.p, self.d, *beta),
            (None, Some(a)) => TeacherModel::new(a.clone(), self.d),
            _ => Err(Error::InvalidParameter(
                "teacher coefficients missing or ambiguous".into(),
            )),
        }
    }

    /// Number of tracked directions.
    pub fn tracked(&self) -> usize {
        self.p_star.unwrap_or(self.m.min(self.p))
    }
}

/// One logged time point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: u64,
    pub loss: f64,
    /// `vbar_{p, pi(p)}^2` for each tracked direction, selection order.
    pub diag_overlap_sq: Vec<f64>,
    /// `||v_p||^2` for each tracked (matched) neuron, selection order.
    pub norm_sq: Vec<f64>,
    /// Largest squared overlap outside the matched pairs.
    pub max_irrelevant_sq: f64,
    /// Largest `||v_k||^2` over neurons not matched to any direction.
    pub max_unused_norm_sq: f64,
}

/// Time-indexed log of a training run, with the greedy selection captured at
/// initialization.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub records: Vec<Record>,
    pub selection: SelectionMap,
    pub gaps: GapStats,
    pub p_star: usize,
    pub teacher: TeacherModel,
    pub final_student: StudentState,
}

impl TrajectoryLog {
    /// Signal strengths `a_{pi(p)}` of the tracked directions.
    pub fn matched_coeffs(&self) -> Vec<f64> {
        self.selection.pi[..self.p_star]
            .iter()
            .map(|&q| self.teacher.coeffs()[q])
            .collect()
    }

    /// Realized initial squared overlaps of the tracked pairs.
    pub fn init_diag_overlap_sq(&self) -> &[f64] {
        &self.records[0].diag_overlap_sq
    }
}

/// Draw `m` rows i.i.d. uniform on the sphere of radius `sigma0`.
pub fn init_student(d: usize, m: usize, sigma0: f64, seed: u64) -> Result<StudentState> {
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma0 must be positive, got {sigma0}"
        )));
    }
    let mut rng = rng::stream(seed, &[STREAM_INIT]);
    let mut v = Array2::zeros((m, d));
    for mut row in v.rows_mut() {
        loop {
            rng::fill_standard_normal(&mut rng, row.as_slice_mut().expect("contiguous"));
            let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                let scale = sigma0 / norm;
                row.mapv_inplace(|x| x * scale);
                break;
            }
        }
    }
    StudentState::new(v, 0)
}

/// One online-SGD step on the per-sample loss at `x`: all rows updated
/// simultaneously from the pre-update state.
pub fn sgd_step(
    student: &StudentState,
    x: ArrayView1<f64>,
    eta: f64,
    teacher: &TeacherModel,
    act: &Activation,
) -> Result<StudentState> {
    let grad = sample_grad(x, teacher, student, act)?;
    let mut v = student.rows().clone();
    v.scaled_add(-eta, &grad);
    StudentState::new(v, student.step() + 1)
}

/// One gradient-descent step on the population loss.
pub fn gd_step(
    student: &StudentState,
    eta: f64,
    teacher: &TeacherModel,
    act: &Activation,
) -> Result<StudentState> {
    let grad = population_grad(teacher, student, act)?;
    let mut v = student.rows().clone();
    v.scaled_add(-eta, &grad);
    StudentState::new(v, student.step() + 1)
}

/// Execute a full training run.
pub fn run(config: &RunConfig) -> Result<TrajectoryLog> {
    run_with_observer(config, |_| {})
}

/// Execute a run, invoking `obs` on every logged record as it is produced.
pub fn run_with_observer<F: FnMut(&Record)>(
    config: &RunConfig,
    mut obs: F,
) -> Result<TrajectoryLog> {
    config.validate()?;
    let teacher = config.teacher()?;
    let act = &config.activation;
    let init_seed = config.init_seed.unwrap_or(config.seed);
    let mut student = init_student(config.d, config.m, config.sigma0, init_seed)?;
    let tracked = config.tracked();

    let view0 = OverlapView::new(&teacher, &student)?;
    let score = selection::score_matrix(&view0, &teacher, act);
    let sel = selection::greedy_select(score.view(), tracked)?;
    let gaps = selection::gap_stats(&sel, teacher.coeffs(), view0.unit_rows.view());
    drop(view0);

    let guard = 10.0 * teacher.coeffs()[0];
    let matched: Vec<(usize, usize)> = sel.matches().collect();
    let mut matched_col_of_row: Vec<Option<usize>> = vec![None; config.m];
    for &(row, col) in &matched {
        matched_col_of_row[row] = Some(col);
    }

    let a = teacher.coeffs().to_owned();
    let mut records = Vec::new();
    let mut t: u64 = 0;
    let mut next_log: u64 = 0;
    loop {
        let at_end = t >= config.steps;
        let want_log = t == next_log || at_end;
        let need_view = want_log || (config.mode == Mode::PopulationGd && !at_end);
        let view = if need_view {
            Some(OverlapView::new(&teacher, &student)?)
        } else {
            None
        };
        if want_log {
            let rec = make_record(
                t,
                view.as_ref().expect("view computed for log"),
                &teacher,
                act,
                &matched,
                &matched_col_of_row,
            );
            obs(&rec);
            let stop = config.stop_at_loss.is_some_and(|s| rec.loss <= s);
            records.push(rec);
            if stop {
                break;
            }
            next_log = config.log_schedule.next_after(t);
        }
        if at_end {
            break;
        }
        match config.mode {
            Mode::PopulationGd => {
                let grad = population_grad_from_view(
                    view.as_ref().expect("view computed for GD step"),
                    &teacher,
                    act,
                );
                student.rows_mut().scaled_add(-config.eta, &grad);
            }
            Mode::OnlineSgd => {
                let mut rng = rng::stream(config.seed, &[STREAM_SAMPLE, t]);
                let x = rng::standard_normal_vec(&mut rng, config.d);
                sgd_update_inplace(
                    student.rows_mut(),
                    x.as_slice().expect("contiguous"),
                    config.eta,
                    a.view(),
                    act,
                )?;
            }
        }
        t += 1;
        student.set_step(t);
        check_guard(&student, t, guard)?;
    }

    Ok(TrajectoryLog {
        records,
        selection: sel,
        gaps,
        p_star: tracked,
        teacher,
        final_student: student,
    })
}

fn make_record(
    t: u64,
    view: &OverlapView,
    teacher: &TeacherModel,
    act: &Activation,
    matched: &[(usize, usize)],
    matched_col_of_row: &[Option<usize>],
) -> Record {
    let loss = population_loss_from_view(view, teacher, act);
    let diag_overlap_sq: Vec<f64> = matched
        .iter()
        .map(|&(row, col)| view.vbar[(row, col)].powi(2))
        .collect();
    let norm_sq: Vec<f64> = matched.iter().map(|&(row, _)| view.norms_sq[row]).collect();
    let mut max_irrelevant_sq = 0.0_f64;
    for (k, vrow) in view.vbar.rows().into_iter().enumerate() {
        for (q, &v) in vrow.iter().enumerate() {
            if matched_col_of_row[k] == Some(q) {
                continue;
            }
            max_irrelevant_sq = max_irrelevant_sq.max(v * v);
        }
    }
    let mut max_unused_norm_sq = 0.0_f64;
    for (k, &n) in view.norms_sq.iter().enumerate() {
        if matched_col_of_row[k].is_none() {
            max_unused_norm_sq = max_unused_norm_sq.max(n);
        }
    }
    Record {
        t,
        loss,
        diag_overlap_sq,
        norm_sq,
        max_irrelevant_sq,
        max_unused_norm_sq,
    }
}

/// Fused in-place SGD update; equivalent to [`sgd_step`] but without
/// allocating the gradient matrix.
fn sgd_update_inplace(
    v: &mut Array2<f64>,
    x: &[f64],
    eta: f64,
    a: ArrayView1<f64>,
    act: &Activation,
) -> Result<()> {
    let m = v.nrows();
    let mut norms = vec![0.0; m];
    let mut zs = vec![0.0; m];
    let mut f = 0.0;
    for (k, row) in v.rows().into_iter().enumerate() {
        let row = row.to_slice().expect("contiguous");
        let mut n_sq = 0.0;
        let mut dot = 0.0;
        for (vj, xj) in row.iter().zip(x) {
            n_sq += vj * vj;
            dot += vj * xj;
        }
        if n_sq == 0.0 {
            return Err(Error::DegenerateNeuron { index: k });
        }
        let n = n_sq.sqrt();
        norms[k] = n;
        zs[k] = dot / n;
        f += n_sq * act.eval(zs[k]);
    }
    let fstar: f64 = a
        .iter()
        .enumerate()
        .map(|(p, &ap)| ap * act.eval(x[p]))
        .sum();
    let residual = fstar - f;
    for (k, mut row) in v.rows_mut().into_iter().enumerate() {
        let row = row.as_slice_mut().expect("contiguous");
        let sig = act.eval(zs[k]);
        let sig_d = act.deriv(zs[k]);
        // grad = -r [ (2 sigma(z) - z sigma'(z)) v + n sigma'(z) x ]
        let c_v = 1.0 + eta * residual * (2.0 * sig - zs[k] * sig_d);
        let c_x = eta * residual * norms[k] * sig_d;
        for (vj, xj) in row.iter_mut().zip(x) {
            *vj = c_v * *vj + c_x * xj;
        }
    }
    Ok(())
}

fn check_guard(student: &StudentState, step: u64, guard: f64) -> Result<()> {
    for (k, row) in student.rows().rows().into_iter().enumerate() {
        let n_sq: f64 = row.iter().map(|x| x * x).sum();
        if n_sq == 0.0 {
            return Err(Error::DegenerateNeuron { index: k });
        }
        if !(n_sq <= guard) {
            return Err(Error::Diverged {
                step,
                norm_sq: n_sq,
                guard,
            });
        }
    }
    Ok(())
}

/// First crossing time of each tracked overlap above `threshold`,
/// interpolated in log-time between adjacent records. Directions that never
/// cross are absent from the result.
pub fn detect_emergence(log: &TrajectoryLog, threshold: f64) -> Vec<(usize, f64)> {
    assert!(
        threshold > 0.0 && threshold < 1.0,
        "threshold must lie in (0, 1)"
    );
    let mut out = Vec::new();
    for p in 0..log.p_star {
        let mut crossing = None;
        for (i, rec) in log.records.iter().enumerate() {
            if rec.diag_overlap_sq[p] >= threshold {
                crossing = Some(i);
                break;
            }
        }
        let Some(i) = crossing else { continue };
        if i == 0 {
            out.push((p, log.records[0].t as f64));
            continue;
        }
        let (t0, y0) = (log.records[i - 1].t, log.records[i - 1].diag_overlap_sq[p]);
        let (t1, y1) = (log.records[i].t, log.records[i].diag_overlap_sq[p]);
        let frac = if y1 > y0 { (threshold - y0) / (y1 - y0) } else { 1.0 };
        let t_hat = if t0 == 0 {
            t0 as f64 + frac * (t1 - t0) as f64
        } else {
            ((t0 as f64).ln() + frac * ((t1 as f64).ln() - (t0 as f64).ln())).exp()
        };
        out.push((p, t_hat));
    }
    out
}

/// What a diagnostics violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// An overlap outside the matched pairs exceeded `eps0`.
    IrrelevantOverlap,
    /// An unmatched neuron's squared norm exceeded `sigma1_sq`.
    UnusedNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub t: u64,
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
}

/// Outcome of [`diagnostics_check`]; an empty violation list means the
/// bounds held at every logged time.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticsReport {
    pub violations: Vec<Violation>,
}

impl DiagnosticsReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flag every logged time where an irrelevant overlap exceeds `eps0` or an
/// unused neuron's squared norm exceeds `sigma1_sq`.
pub fn diagnostics_check(log: &TrajectoryLog, eps0: f64, sigma1_sq: f64) -> DiagnosticsReport {
    assert!(eps0 > 0.0 && sigma1_sq > 0.0, "bounds must be positive");
    let mut violations = Vec::new();
    for rec in &log.records {
        if rec.max_irrelevant_sq > eps0 {
            violations.push(Violation {
                t: rec.t,
                kind: ViolationKind::IrrelevantOverlap,
                value: rec.max_irrelevant_sq,
                limit: eps0,
            });
        }
        if rec.max_unused_norm_sq > sigma1_sq {
            violations.push(Violation {
                t: rec.t,
                kind: ViolationKind::UnusedNorm,
                value: rec.max_unused_norm_sq,
                limit: sigma1_sq,
            });
        }
    }
    DiagnosticsReport { violations }
}
