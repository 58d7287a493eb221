//! Greedy maximum selection of (student, teacher) pairs at initialization,
//! and the associated gap / regularity statistics.
//!
//! The score of student `k` against teacher `q` is `a_q * vbar_{k,q}^{2I-2}`;
//! selection repeatedly removes the argmax row and column. After `P_*`
//! rounds the matched pairs determine which neuron is expected to converge
//! to which direction, and the margins between the matched scores and the
//! rest (row gap, column gap, threshold gap) control how cleanly the
//! transitions separate.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hermite::Activation;
use crate::model::{OverlapView, TeacherModel};
use crate::rng::{self, STREAM_GAP};

/// Result of greedy maximum selection.
///
/// `student_order[p]` is the student row matched at round `p` and `pi[p]`
/// the teacher column, for `p < p_star`; the remaining rows and columns are
/// appended in index order so both are full permutations.
#[derive(Debug, Clone)]
pub struct SelectionMap {
    pub pi: Vec<usize>,
    pub student_order: Vec<usize>,
    pub p_star: usize,
    /// The full `m x P` score matrix `a_q * vbar_{k,q}^{2I-2}`.
    pub score: Array2<f64>,
}

impl SelectionMap {
    /// Matched (row, column) pairs in selection order.
    pub fn matches(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.student_order
            .iter()
            .copied()
            .zip(self.pi.iter().copied())
            .take(self.p_star)
    }
}

impl Serialize for SelectionMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self
            .score
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        let mut s = serializer.serialize_struct("SelectionMap", 4)?;
        s.serialize_field("pi", &self.pi)?;
        s.serialize_field("student_order", &self.student_order)?;
        s.serialize_field("p_star", &self.p_star)?;
        s.serialize_field("score_matrix", &rows)?;
        s.end()
    }
}

/// The greedy selection score matrix `a_q * (vbar_{k,q}^2)^{I-1}`.
///
/// Scores use the squared overlap, so they are nonnegative regardless of the
/// sign of `vbar` (the activation is even, so the sign is irrelevant).
pub fn score_matrix(view: &OverlapView, teacher: &TeacherModel, act: &Activation) -> Array2<f64> {
    let a = teacher.coeffs();
    let exp = (act.info_half() - 1) as i32;
    let mut score = view.vbar.mapv(|v| (v * v).powi(exp));
    for mut row in score.rows_mut() {
        for (q, s) in row.iter_mut().enumerate() {
            *s *= a[q];
        }
    }
    score
}

/// Greedy maximum selection: `p_star` rounds of argmax over the residual
/// submatrix, ties broken by lowest (row, column).
pub fn greedy_select(score: ArrayView2<f64>, p_star: usize) -> Result<SelectionMap> {
    let (m, p) = score.dim();
    if p_star > m.min(p) {
        return Err(Error::InvalidParameter(format!(
            "p_star = {p_star} exceeds min(m = {m}, P = {p})"
        )));
    }
    if score.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidParameter(
            "selection scores must be finite and nonnegative".into(),
        ));
    }
    let mut row_used = vec![false; m];
    let mut col_used = vec![false; p];
    let mut student_order = Vec::with_capacity(m);
    let mut pi = Vec::with_capacity(p);
    for _ in 0..p_star {
        let mut best = f64::NEG_INFINITY;
        let mut best_at = (0, 0);
        for k in 0..m {
            if row_used[k] {
                continue;
            }
            for q in 0..p {
                if col_used[q] {
                    continue;
                }
                if score[(k, q)] > best {
                    best = score[(k, q)];
                    best_at = (k, q);
                }
            }
        }
        row_used[best_at.0] = true;
        col_used[best_at.1] = true;
        student_order.push(best_at.0);
        pi.push(best_at.1);
    }
    student_order.extend((0..m).filter(|&k| !row_used[k]));
    pi.extend((0..p).filter(|&q| !col_used[q]));
    Ok(SelectionMap {
        pi,
        student_order,
        p_star,
        score: score.to_owned(),
    })
}

/// Regularity scalars of the initialization.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Regularity {
    /// `max_k ||ubar_k||_inf^2` over all d coordinates.
    pub max_inf_norm_sq: f64,
    /// `min_p vbar_{p, pi(p)}^2` over matched pairs.
    pub min_diag_overlap_sq: f64,
    /// `min_q max_{k > P_*} vbar_{k, q}^2` over unmatched rows.
    pub min_max_unmatched_sq: f64,
}

/// Largest satisfied multiplicative slack for each gap condition, plus the
/// regularity scalars. A delta of zero signals a violated gap; a gap whose
/// comparison set is empty (or all-zero) is unbounded and reported as
/// infinity, serialized as the string `"unbounded"`.
#[derive(Debug, Clone, Copy)]
pub struct GapStats {
    pub delta_r: f64,
    pub delta_c: f64,
    pub delta_t: f64,
    pub regularity: Regularity,
}

impl Serialize for GapStats {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(untagged)]
        enum Delta {
            Finite(f64),
            Unbounded(&'static str),
        }
        fn delta(v: f64) -> Delta {
            if v.is_finite() {
                Delta::Finite(v)
            } else {
                Delta::Unbounded("unbounded")
            }
        }
        let mut s = serializer.serialize_struct("GapStats", 4)?;
        s.serialize_field("delta_r", &delta(self.delta_r))?;
        s.serialize_field("delta_c", &delta(self.delta_c))?;
        s.serialize_field("delta_t", &delta(self.delta_t))?;
        s.serialize_field("regularity", &self.regularity)?;
        s.end()
    }
}

fn slack(num: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        f64::INFINITY
    } else {
        (num / denom - 1.0).max(0.0)
    }
}

/// Gap statistics of a selection.
///
/// `unit_rows` are the full normalized student rows (`m x d`); they are
/// needed for the infinity-norm regularity condition, which looks at all
/// coordinates rather than just the teacher block.
pub fn gap_stats(
    sel: &SelectionMap,
    a: ArrayView1<f64>,
    unit_rows: ArrayView2<f64>,
) -> GapStats {
    let m = sel.student_order.len();
    let p = sel.pi.len();
    let p_star = sel.p_star;
    let score = &sel.score;
    debug_assert_eq!(a.len(), p);

    // row gap: matched score beats every later column in the same row
    let mut delta_r = f64::INFINITY;
    // column gap: matched score beats every later row in the same column
    let mut delta_c = f64::INFINITY;
    for (rank, (row, col)) in sel.matches().enumerate() {
        let diag = score[(row, col)];
        for q in rank + 1..p {
            delta_r = delta_r.min(slack(diag, score[(row, sel.pi[q])]));
        }
        for k in rank + 1..m {
            delta_c = delta_c.min(slack(diag, score[(sel.student_order[k], col)]));
        }
    }
    // threshold gap: last matched score beats the whole lower-right block
    let mut delta_t = f64::INFINITY;
    if p_star > 0 {
        let last = score[(sel.student_order[p_star - 1], sel.pi[p_star - 1])];
        for k in p_star..m {
            for q in p_star..p {
                delta_t = delta_t.min(slack(last, score[(sel.student_order[k], sel.pi[q])]));
            }
        }
    }

    let max_inf_norm_sq = unit_rows
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v * v));
    let min_diag_overlap_sq = sel
        .matches()
        .map(|(row, col)| unit_rows[(row, col)].powi(2))
        .fold(f64::INFINITY, f64::min);
    let mut min_max_unmatched_sq = f64::INFINITY;
    if p_star < m {
        for q in 0..p {
            let col_max = (p_star..m)
                .map(|k| unit_rows[(sel.student_order[k], q)].powi(2))
                .fold(0.0_f64, f64::max);
            min_max_unmatched_sq = min_max_unmatched_sq.min(col_max);
        }
    }
    GapStats {
        delta_r,
        delta_c,
        delta_t,
        regularity: Regularity {
            max_inf_norm_sq,
            min_diag_overlap_sq,
            min_max_unmatched_sq,
        },
    }
}

/// Empirical near-collision frequencies of weighted initialization scores,
/// next to the analytic Cauchy-ratio bound `2 delta / pi`.
#[derive(Debug, Clone, Serialize)]
pub struct GapDistribution {
    pub deltas: Vec<f64>,
    /// Fraction of (trial, neuron, ordered pair) events with
    /// `a_i vbar_i^{2I-2}` inside `(1 +- delta) a_j vbar_j^{2I-2}`.
    pub frequency: Vec<f64>,
    /// `2 delta / pi` for each delta.
    pub cauchy_bound: Vec<f64>,
    pub trials: u64,
    pub events_per_trial: u64,
}

/// Sample `trials` fresh initializations of `m` neurons in dimension `d` and
/// measure how often two weighted scores `a_i vbar_i^{2I-2}`,
/// `a_j vbar_j^{2I-2}` (ordered pairs `i != j` over the first `p` teacher
/// coordinates) land within a factor `1 +- delta` of each other.
#[allow(clippy::too_many_arguments)]
pub fn init_gap_distribution(
    d: usize,
    m: usize,
    p: usize,
    a: &[f64],
    info_half: usize,
    deltas: &[f64],
    trials: u64,
    seed: u64,
) -> Result<GapDistribution> {
    if trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 trials, got {trials}"
        )));
    }
    if p < 2 || p > d || a.len() != p {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= P <= d teacher coefficients, got P = {p}, d = {d}, len(a) = {}",
            a.len()
        )));
    }
    if info_half < 2 {
        return Err(Error::InvalidParameter(
            "information exponent must be at least 4 (I >= 2)".into(),
        ));
    }
    if deltas.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::InvalidParameter(
            "deltas must lie in (0, 1)".into(),
        ));
    }
    let exp = (info_half - 1) as i32;
    let counts: Vec<u64> = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; deltas.len()],
            |mut acc, trial| {
                let mut rng = rng::stream(seed, &[STREAM_GAP, trial]);
                let mut x = vec![0.0; d];
                for _ in 0..m {
                    rng::fill_standard_normal(&mut rng, &mut x);
                    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
                    for i in 0..p {
                        let si = a[i] * (x[i] * x[i] / norm_sq).powi(exp);
                        for j in 0..p {
                            if i == j {
                                continue;
                            }
                            let sj = a[j] * (x[j] * x[j] / norm_sq).powi(exp);
                            for (di, &delta) in deltas.iter().enumerate() {
                                if si >= (1.0 - delta) * sj && si <= (1.0 + delta) * sj {
                                    acc[di] += 1;
                                }
                            }
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; deltas.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let events_per_trial = (m * p * (p - 1)) as u64;
    let total = (trials * events_per_trial) as f64;
    Ok(GapDistribution {
        deltas: deltas.to_vec(),
        frequency: counts.iter().map(|&c| c as f64 / total).collect(),
        cauchy_bound: deltas
            .iter()
            .map(|&delta| 2.0 * delta / std::f64::consts::PI)
            .collect(),
        trials,
        events_per_trial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn greedy_hand_walks() {
        // matched diagonally
        let m = array![[0.5, 0.4], [0.45, 0.2]];
        let sel = greedy_select(m.view(), 2).unwrap();
        assert_eq!(sel.student_order, vec![0, 1]);
        assert_eq!(sel.pi, vec![0, 1]);

        // first pick is (student 0, teacher 1), then (student 1, teacher 0)
        let m = array![[0.3, 0.6], [0.2, 0.1]];
        let sel = greedy_select(m.view(), 2).unwrap();
        assert_eq!(sel.student_order, vec![0, 1]);
        assert_eq!(sel.pi, vec![1, 0]);
    }

    #[test]
    fn greedy_appends_remainder_in_index_order() {
        let m = array![
            [0.1, 0.9, 0.2],
            [0.8, 0.3, 0.1],
            [0.2, 0.1, 0.05],
            [0.3, 0.2, 0.6]
        ];
        let sel = greedy_select(m.view(), 2).unwrap();
        assert_eq!(sel.student_order[..2], [0, 1]);
        assert_eq!(sel.pi[..2], [1, 0]);
        assert_eq!(sel.student_order[2..], [2, 3]);
        assert_eq!(sel.pi[2..], [2]);
    }

    #[test]
    fn greedy_tie_breaks_by_lowest_index() {
        let m = array![[0.5, 0.5], [0.5, 0.5]];
        let sel = greedy_select(m.view(), 2).unwrap();
        assert_eq!(sel.student_order, vec![0, 1]);
        assert_eq!(sel.pi, vec![0, 1]);
    }

    #[test]
    fn greedy_rejects_bad_input() {
        let m = array![[0.5, f64::NAN]];
        assert!(greedy_select(m.view(), 1).is_err());
        let m = array![[0.5, 0.2]];
        assert!(greedy_select(m.view(), 2).is_err());
    }

    fn stats_for(score: Array2<f64>, a: Vec<f64>, p_star: usize) -> GapStats {
        let sel = greedy_select(score.view(), p_star).unwrap();
        // unit rows irrelevant for the deltas; reuse sqrt of normalized scores
        let m = sel.student_order.len();
        let unit = Array2::from_shape_fn((m, a.len()), |(k, q)| {
            (sel.score[(k, q)] / a[q].max(1e-300)).sqrt()
        });
        gap_stats(&sel, ndarray::ArrayView1::from(&a), unit.view())
    }

    #[test]
    fn gap_stats_diagonal_matrix_is_unbounded() {
        let s = stats_for(array![[0.5, 0.0], [0.0, 0.3]], vec![1.0, 1.0], 2);
        assert!(s.delta_r.is_infinite());
        assert!(s.delta_c.is_infinite());
        assert!(s.delta_t.is_infinite());
    }

    #[test]
    fn gap_stats_row_gap_arithmetic() {
        let s = stats_for(array![[0.5, 0.4], [0.45, 0.2]], vec![1.0, 1.0], 2);
        assert!((s.delta_r - 0.25).abs() < 1e-12, "delta_r = {}", s.delta_r);
        // column gap: 0.5 / 0.45 - 1
        assert!((s.delta_c - (0.5 / 0.45 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn gap_deltas_match_direct_double_loop() {
        // independent recomputation of the three minima over their index sets
        let mut rng = rng::stream(5, &[0x474c]);
        let (m, p, p_star) = (7usize, 5usize, 4usize);
        let mut flat = vec![0.0; m * p];
        rng::fill_standard_normal(&mut rng, &mut flat);
        let score = Array2::from_shape_vec((m, p), flat)
            .unwrap()
            .mapv(|x: f64| x.abs());
        let sel = greedy_select(score.view(), p_star).unwrap();
        let unit = Array2::zeros((m, p + 1));
        let a = vec![1.0; p];
        let stats = gap_stats(&sel, ndarray::ArrayView1::from(&a), unit.view());

        let s = |k: usize, q: usize| sel.score[(sel.student_order[k], sel.pi[q])];
        let mut dr = f64::INFINITY;
        let mut dc = f64::INFINITY;
        let mut dt = f64::INFINITY;
        for rank in 0..p_star {
            for q in rank + 1..p {
                dr = dr.min(s(rank, rank) / s(rank, q) - 1.0);
            }
            for k in rank + 1..m {
                dc = dc.min(s(rank, rank) / s(k, rank) - 1.0);
            }
        }
        for k in p_star..m {
            for q in p_star..p {
                dt = dt.min(s(p_star - 1, p_star - 1) / s(k, q) - 1.0);
            }
        }
        assert!((stats.delta_r - dr).abs() < 1e-14, "{} vs {dr}", stats.delta_r);
        assert!((stats.delta_c - dc).abs() < 1e-14, "{} vs {dc}", stats.delta_c);
        assert!((stats.delta_t - dt).abs() < 1e-14, "{} vs {dt}", stats.delta_t);
    }

    #[test]
    fn gap_stats_serializes_unbounded_sentinel() {
        let s = stats_for(array![[0.5, 0.0], [0.0, 0.3]], vec![1.0, 1.0], 2);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"delta_r\":\"unbounded\""), "{json}");
    }

    #[test]
    fn gap_distribution_validates_inputs() {
        assert!(init_gap_distribution(8, 1, 2, &[0.8, 0.6], 2, &[0.01], 50, 0).is_err());
        assert!(init_gap_distribution(8, 1, 1, &[1.0], 2, &[0.01], 200, 0).is_err());
        assert!(init_gap_distribution(8, 1, 2, &[0.8, 0.6], 2, &[1.5], 200, 0).is_err());
    }

    #[test]
    fn kth_largest_gaussian_spot_check() {
        // the K-th largest |standard normal| squared among m draws exceeds
        // log(m / K) in at least 95% of seeds
        let (m, k) = (4000usize, 8usize);
        let bound = (m as f64 / k as f64).ln();
        let mut hits = 0;
        for seed in 0..1000u64 {
            let mut rng = rng::stream(seed, &[0x4b544847]);
            let mut vals = vec![0.0; m];
            rng::fill_standard_normal(&mut rng, &mut vals);
            for v in vals.iter_mut() {
                *v = v.abs();
            }
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if vals[k - 1] * vals[k - 1] >= bound {
                hits += 1;
            }
        }
        assert!(hits >= 950, "only {hits} of 1000 seeds exceeded the bound");
    }

    #[test]
    fn gap_distribution_is_roughly_linear_in_delta() {
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        let g = init_gap_distribution(
            64,
            1,
            2,
            &[inv_sqrt2, inv_sqrt2],
            2,
            &[0.02, 0.04],
            20_000,
            11,
        )
        .unwrap();
        assert!(g.frequency[0] <= g.cauchy_bound[0] * 1.3);
        let ratio = g.frequency[1] / g.frequency[0];
        assert!((ratio - 2.0).abs() < 0.35, "ratio {ratio}");
    }
}
