//! CSV emission. Floats are written with Rust's shortest round-trip
//! formatting, so identical runs produce byte-identical files.

use std::fmt::Write as _;

use hermite_flow_core::dynamics::TrajectoryLog;
use hermite_flow_core::selection::GapDistribution;

/// Trajectory CSV with columns
/// `t,loss,vbar2_p1..vbar2_pK,norm2_p1..norm2_pK,max_irrelevant,max_unused_norm`.
pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let k = log.p_star;
    let mut out = String::new();
    out.push('t');
    out.push_str(",loss");
    for p in 1..=k {
        let _ = write!(out, ",vbar2_p{p}");
    }
    for p in 1..=k {
        let _ = write!(out, ",norm2_p{p}");
    }
    out.push_str(",max_irrelevant,max_unused_norm\n");
    for rec in &log.records {
        let _ = write!(out, "{},{}", rec.t, rec.loss);
        for v in &rec.diag_overlap_sq {
            let _ = write!(out, ",{v}");
        }
        for v in &rec.norm_sq {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{}", rec.max_irrelevant_sq, rec.max_unused_norm_sq);
    }
    out
}

/// Header-only trajectory CSV for the empty case (no tracked directions).
pub fn trajectory_csv_header_only() -> String {
    "t,loss,max_irrelevant,max_unused_norm\n".to_string()
}

/// Gap-distribution CSV with columns `delta,empirical_freq,cauchy_bound`.
pub fn gap_distribution_csv(dist: &GapDistribution) -> String {
    let mut out = String::from("delta,empirical_freq,cauchy_bound\n");
    for i in 0..dist.deltas.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            dist.deltas[i], dist.frequency[i], dist.cauchy_bound[i]
        );
    }
    out
}

/// Compute-optimal frontier CSV with columns `budget,loss,best_m`.
pub fn frontier_csv(points: &[(f64, f64, usize)]) -> String {
    let mut out = String::from("budget,loss,best_m\n");
    for &(budget, loss, m) in points {
        let _ = writeln!(out, "{budget},{loss},{m}");
    }
    out
}
