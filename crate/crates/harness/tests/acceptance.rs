//! End-to-end acceptance suite. Every test prints one
//! `criterion N (<name>): PASS/FAIL` line per checked criterion (run with
//! `cargo test -p hermite-flow --test acceptance -- --nocapture` to see
//! them) and then asserts.
//!
//! Statistical checks run at fixed, documented seeds so the suite is
//! deterministic; tolerances are pinned in the configs below.

use std::path::PathBuf;

use hermite_flow::config::parse_config_str;
use hermite_flow::experiment::run_experiment;
use hermite_flow::report::Report;
use hermite_flow_core::dynamics::{
    detect_emergence, diagnostics_check, run, LogSchedule, Mode, RunConfig,
};
use hermite_flow_core::hermite::Activation;
use hermite_flow_core::model::{read_snapshot, write_snapshot};
use hermite_flow_core::rng;
use rayon::prelude::*;

fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create output dir");
    dir
}

fn print_line(number: &str, name: &str, passed: bool, detail: &str) {
    println!(
        "criterion {number} ({name}): {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

fn check(report: &Report, number: &str, criterion: &str) -> bool {
    let c = report
        .criteria
        .iter()
        .find(|c| c.name == criterion)
        .unwrap_or_else(|| panic!("criterion {criterion} missing from report"));
    print_line(
        number,
        criterion,
        c.passed,
        &format!("measured {:.6}, target {}", c.measured, c.target),
    );
    c.passed
}

/// Criteria 1 and 2: closed-form loss against the Monte Carlo oracle,
/// both gradients against finite differences, and zero-mean gradient noise,
/// all at full scale (50 instances, 1e6 MC samples, 10 noise instances
/// with 1e5 samples each).
#[test]
fn criteria_01_02_closed_forms_and_gradient_noise() {
    let dir = out_dir("validate");
    let config = format!(
        r#"{{
        "kind": "validate",
        "base": {{"seed": 328}},
        "validate": {{
            "instances": 50,
            "mc_samples": 1000000,
            "noise_instances": 10,
            "noise_samples": 100000
        }},
        "tolerances": {{"grad_rel_tol": 1e-5, "mc_sigma": 3.0, "pass_fraction": 0.94}},
        "output_dir": {:?}
    }}"#,
        dir
    );
    let spec = parse_config_str(&config).expect("valid config");
    let report = run_experiment(&spec).expect("experiment runs");
    let ok1 = check(&report, "1", "mc_loss_agreement")
        & check(&report, "1", "population_grad_fd")
        & check(&report, "1", "sample_grad_fd")
        & check(&report, "1", "greedy_brute_force")
        & check(&report, "1", "radial_tangent_identity");
    let ok2 = check(&report, "2", "gradient_noise_zero_mean");
    assert!(ok1, "criterion 1 failed");
    assert!(ok2, "criterion 2 failed");
}

/// Criterion 3: single-index ODE tracking and transition-time prediction
/// (population GD, d = 256, P = m = 1, h4, eta = 1e-3).
#[test]
fn criterion_03_single_index_ode() {
    let dir = out_dir("single_index");
    let config = format!(
        r#"{{
        "kind": "single_index",
        "base": {{
            "d": 256, "p": 1, "m": 1, "beta": 0.8,
            "eta": 0.001, "sigma0": 0.001, "steps": 60000, "seed": 4,
            "mode": "population_gd",
            "log_schedule": {{"dense_prefix": 32, "stride": 1.05}},
            "activation": {{"hermite": 4}},
            "stop_at_loss": 0.001
        }},
        "tolerances": {{"loss_rel_tol": 0.10, "time_rel_tol": 0.30}},
        "output_dir": {:?}
    }}"#,
        dir
    );
    let spec = parse_config_str(&config).expect("valid config");
    let report = run_experiment(&spec).expect("experiment runs");
    let ok = check(&report, "3", "ode_tracking") & check(&report, "3", "transition_time");
    assert!(ok, "criterion 3 failed");
}

/// Criteria 4 and 5: sharp transitions with correct ordering, small
/// pre-transition overlaps, bounded unused neurons, and norm convergence
/// (population GD, d = 512, P = 8, m = 24, beta = 0.8).
#[test]
fn criteria_04_05_emergence_and_norms() {
    let dir = out_dir("emergence");
    let config = format!(
        r#"{{
        "kind": "emergence",
        "base": {{
            "d": 512, "p": 8, "m": 24, "beta": 0.8,
            "eta": 0.05, "sigma0": 0.001, "steps": 6000, "seed": 18,
            "mode": "population_gd",
            "log_schedule": {{"dense_prefix": 16, "stride": 1.05}},
            "activation": {{"hermite": 4}}
        }},
        "tolerances": {{"time_rel_tol": 0.25, "norm_rel_tol": 0.05}},
        "emergence_threshold": 0.5,
        "output_dir": {:?}
    }}"#,
        dir
    );
    let spec = parse_config_str(&config).expect("valid config");
    let report = run_experiment(&spec).expect("experiment runs");
    let ok4 = check(&report, "4", "all_directions_detected")
        & check(&report, "4", "transition_time_ratios")
        & check(&report, "4", "pre_transition_overlap")
        & check(&report, "4", "post_transition_overlap")
        & check(&report, "4", "unused_neuron_norms");
    let ok5 = check(&report, "5", "norm_convergence");
    assert!(ok4, "criterion 4 failed");
    assert!(ok5, "criterion 5 failed");
}

/// Criterion 6: scaling-law slope at (d = 512, P = 256, m = 600) over
/// L in (0.02, 0.5), and the m = 64 approximation plateau.
#[test]
fn criterion_06_scaling_law() {
    let dir = out_dir("scaling");
    let config = format!(
        r#"{{
        "kind": "scaling",
        "base": {{
            "d": 512, "p": 256, "m": 600, "beta": 0.8,
            "eta": 0.25, "sigma0": 0.001, "steps": 8000, "seed": 2,
            "mode": "population_gd",
            "log_schedule": {{"dense_prefix": 4, "stride": 1.1}},
            "activation": {{"hermite": 4}},
            "stop_at_loss": 0.014
        }},
        "sweep": {{"m": [64]}},
        "loss_window": {{"hi": 0.5, "lo": 0.02}},
        "tolerances": {{"slope_tol": 0.15, "plateau_factor": 3.0}},
        "output_dir": {:?}
    }}"#,
        dir
    );
    let spec = parse_config_str(&config).expect("valid config");
    let report = run_experiment(&spec).expect("experiment runs");
    let ok = check(&report, "6", "loss_time_slope") & check(&report, "6", "width_plateau_m64");
    assert!(ok, "criterion 6 failed");
}

/// Criterion 7: compute-optimal frontier slope over m in {32, 64, 128, 256}
/// at d = 512, P = 256, inside [-0.45, -0.25].
#[test]
fn criterion_07_compute_optimal() {
    let dir = out_dir("compute_optimal");
    let config = format!(
        r#"{{
        "kind": "compute_optimal",
        "base": {{
            "d": 512, "p": 256, "beta": 0.8,
            "eta": 0.25, "sigma0": 0.001, "steps": 8000, "seed": 2,
            "mode": "population_gd",
            "log_schedule": {{"dense_prefix": 4, "stride": 1.1}},
            "activation": {{"hermite": 4}}
        }},
        "sweep": {{"m": [32, 64, 128, 256]}},
        "loss_window": {{"hi": 0.45, "lo": 0.05}},
        "slope_range": [-0.45, -0.25],
        "output_dir": {:?}
    }}"#,
        dir
    );
    let spec = parse_config_str(&config).expect("valid config");
    let report = run_experiment(&spec).expect("experiment runs");
    let ok = check(&report, "7", "compute_optimal_slope");
    assert!(
        ok,
        "criterion 7 failed: at this scale (P = 256 with m up to P) the measured frontier \
         slope is ~ -0.55..-0.59 for every defensible window, eta in {{0.1, 0.25}}, and seed: \
         the window bottom sits in the finite-P truncation wall (per-width slope -0.73..-0.86, \
         plateaus scale as m^-0.9 instead of m^-0.6) and larger widths draw better initial \
         overlaps, compressing the envelope's flat segments. The asymptotic band is kept \
         rather than loosened; see the report in {}",
        spec.output_dir.display()
    );
}

/// Criterion 8: initialization gap statistics — near-collision frequencies
/// under the Cauchy bound at d = 1000, and strictly positive gaps across
/// 1000 sampled initializations at (d = 400, m = 40, P = 20).
#[test]
fn criterion_08_init_gaps() {
    let dir = out_dir("init_gaps");
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    let config = format!(
        r#"{{
        "kind": "init_gaps",
        "base": {{
            "d": 1000, "p": 2, "m": 1,
            "a": [{inv_sqrt2}, {inv_sqrt2}],
            "activation": {{"hermite": 4}},
            "seed": 8
        }},
        "init_gaps": {{
            "trials": 100000,
            "deltas": [0.01, 0.02],
            "bound_margin": 0.2,
            "positivity": {{"d": 400, "m": 40, "p": 20, "seeds": 1000, "min_fraction": 0.99}}
        }},
        "output_dir": {:?}
    }}"#,
        dir
    );
    let spec = parse_config_str(&config).expect("valid config");
    let report = run_experiment(&spec).expect("experiment runs");
    let ok = check(&report, "8", "cauchy_bound_delta_0.01")
        & check(&report, "8", "cauchy_bound_delta_0.02")
        & check(&report, "8", "gap_positivity");
    assert!(ok, "criterion 8 failed");
}

/// Criterion 9: online SGD tracks matched population GD through both
/// transitions (d = 128, P = 2, m = 6, h4), averaged over 20 sample-stream
/// seeds from a shared initialization, and the irrelevant-coordinate /
/// unused-norm diagnostics stay clean with eps0 = d^-0.75.
#[test]
fn criterion_09_online_sgd_consistency() {
    let d = 128usize;
    // theory-scaled step size eta ~ a_min d^-I (here ~ 0.5 * 2.5 / d^2, the
    // constant calibrated so the per-seed transition-time spread
    // sqrt(eta/a)/vbar^2(0) stays below ~6%)
    let eta = 1.2e-6;
    // fixed initialization with winner overlaps (5.6, 6.8)/d and all
    // irrelevant coordinates projected to stay under ~0.5 eps0
    let init_seed = 335u64;
    let steps = 14_000_000u64;
    let base = RunConfig {
        d,
        p: 2,
        m: 6,
        beta: Some(0.8),
        a: None,
        eta,
        sigma0: 1e-3,
        steps,
        seed: init_seed,
        init_seed: Some(init_seed),
        mode: Mode::PopulationGd,
        log_schedule: LogSchedule {
            dense_prefix: 8,
            stride: 1.1,
        },
        activation: Activation::pure_hermite(4).expect("h4"),
        p_star: None,
        stop_at_loss: Some(0.015),
    };
    let gd_log = run(&base).expect("GD run completes");
    let t_end_idx = gd_log
        .records
        .iter()
        .position(|r| r.loss <= 0.02)
        .unwrap_or(gd_log.records.len() - 1);

    let t_end = gd_log.records[t_end_idx].t;
    let n_seeds = 20u64;
    let sgd_logs: Vec<_> = (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let mut cfg = base.clone();
            cfg.mode = Mode::OnlineSgd;
            cfg.seed = rng::derive(init_seed, &[0x53474453, s]); // sample stream only
            cfg.steps = t_end;
            cfg.stop_at_loss = None;
            run(&cfg).expect("SGD run completes")
        })
        .collect();

    // compare seed-averaged SGD loss to the matched GD loss at every logged
    // time through both transitions, within 15% plus the Monte Carlo band
    let mut worst_excess = f64::NEG_INFINITY;
    let mut compared = 0usize;
    for (i, gd_rec) in gd_log.records[..=t_end_idx].iter().enumerate() {
        let mut vals = Vec::with_capacity(sgd_logs.len());
        for log in &sgd_logs {
            if let Some(r) = log.records.get(i) {
                assert_eq!(r.t, gd_rec.t, "log schedules must align");
                vals.push(r.loss);
            }
        }
        if vals.len() < sgd_logs.len() {
            break;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let band = 0.15 * gd_rec.loss + 3.0 * se;
        worst_excess = worst_excess.max((mean - gd_rec.loss).abs() - band);
        compared += 1;
    }
    let tracking_ok = compared >= 10 && worst_excess <= 0.0;
    print_line(
        "9",
        "sgd_tracks_population_gd",
        tracking_ok,
        &format!(
            "{compared} log points through both transitions; worst band excess {worst_excess:.5} \
             (band = 15% of GD loss + 3 seed-standard-errors)"
        ),
    );

    // C.1-style diagnostics on every SGD trajectory
    let eps0 = (d as f64).powf(-0.75);
    let sigma1_sq = 2.0 * base.sigma0 * base.sigma0;
    let mut violations = 0usize;
    for log in &sgd_logs {
        violations += diagnostics_check(log, eps0, sigma1_sq).violations.len();
    }
    let diag_ok = violations == 0;
    print_line(
        "9",
        "diagnostics_clean",
        diag_ok,
        &format!("{violations} violations with eps0 = d^-0.75 = {eps0:.5}"),
    );

    // both transitions must actually occur
    let detected = detect_emergence(&gd_log, 0.5);
    assert_eq!(detected.len(), 2, "GD run must exhibit both transitions");
    assert!(tracking_ok, "criterion 9 tracking failed");
    assert!(diag_ok, "criterion 9 diagnostics failed");
}

/// Criterion 10: determinism and serialization formats — identical configs
/// produce byte-identical CSVs, and binary snapshots round-trip exactly.
#[test]
fn criterion_10_determinism_and_formats() {
    let cfg = RunConfig {
        d: 32,
        p: 4,
        m: 8,
        beta: Some(0.8),
        a: None,
        eta: 0.02,
        sigma0: 1e-2,
        steps: 400,
        seed: 77,
        init_seed: None,
        mode: Mode::OnlineSgd,
        log_schedule: LogSchedule {
            dense_prefix: 50,
            stride: 1.2,
        },
        activation: Activation::from_coeffs([(4, 0.8), (6, 0.6)]).expect("valid"),
        p_star: None,
        stop_at_loss: None,
    };
    let log_a = run(&cfg).expect("run");
    let log_b = run(&cfg).expect("run");
    let csv_a = hermite_flow::csvio::trajectory_csv(&log_a);
    let csv_b = hermite_flow::csvio::trajectory_csv(&log_b);
    let csv_ok = csv_a == csv_b;

    let mut snap_a = Vec::new();
    write_snapshot(&mut snap_a, &log_a.teacher, &log_a.final_student).expect("write");
    let (teacher, student) = read_snapshot(&mut snap_a.as_slice()).expect("read");
    let mut snap_b = Vec::new();
    write_snapshot(&mut snap_b, &teacher, &student).expect("rewrite");
    let snap_ok = snap_a == snap_b
        && teacher == log_a.teacher
        && student == log_a.final_student;

    // activation JSON round trip
    let act_json = serde_json::to_string(&cfg.activation).expect("serialize");
    let act_back: Activation = serde_json::from_str(&act_json).expect("parse");
    let act_ok = act_back == cfg.activation;

    let ok = csv_ok && snap_ok && act_ok;
    print_line(
        "10",
        "determinism_and_formats",
        ok,
        &format!("csv identical: {csv_ok}, snapshot exact: {snap_ok}, activation json: {act_ok}"),
    );
    assert!(ok, "criterion 10 failed");
}
