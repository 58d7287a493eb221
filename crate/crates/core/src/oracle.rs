//! Independent reference implementations used to validate the closed forms:
//! central finite differences of the loss functions and a naive
//! re-implementation of greedy maximum selection.
//!
//! These deliberately share no code with the paths they check: the finite
//! differences only call the loss evaluations, and the brute-force selection
//! rebuilds residual submatrices instead of masking.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::Result;
use crate::hermite::Activation;
use crate::model::{population_loss, sample_loss, StudentState, TeacherModel};

/// Central finite differences of the population loss with respect to every
/// student entry.
pub fn finite_diff_population_grad(
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
    step: f64,
) -> Result<Array2<f64>> {
    finite_diff(student, step, |s| population_loss(teacher, s, act))
}

/// Central finite differences of the per-sample loss at `x`.
pub fn finite_diff_sample_grad(
    x: ArrayView1<f64>,
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
    step: f64,
) -> Result<Array2<f64>> {
    finite_diff(student, step, |s| sample_loss(x, teacher, s, act))
}

fn finite_diff<F: Fn(&StudentState) -> Result<f64>>(
    student: &StudentState,
    step: f64,
    loss: F,
) -> Result<Array2<f64>> {
    let (m, d) = (student.width(), student.dim());
    let mut grad = Array2::zeros((m, d));
    for k in 0..m {
        for j in 0..d {
            let mut plus = student.rows().clone();
            plus[(k, j)] += step;
            let mut minus = student.rows().clone();
            minus[(k, j)] -= step;
            let lp = loss(&StudentState::new(plus, student.step())?)?;
            let lm = loss(&StudentState::new(minus, student.step())?)?;
            grad[(k, j)] = (lp - lm) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// Brute-force greedy maximum selection: at each round, materialize the
/// residual submatrix and take its row-major argmax.
///
/// Returns `(student_order, pi)` restricted to the `p_star` selected pairs.
pub fn brute_force_greedy(score: ArrayView2<f64>, p_star: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..score.nrows()).collect();
    let mut cols: Vec<usize> = (0..score.ncols()).collect();
    let mut order = Vec::with_capacity(p_star);
    let mut pi = Vec::with_capacity(p_star);
    for _ in 0..p_star {
        let sub: Vec<Vec<f64>> = rows
            .iter()
            .map(|&k| cols.iter().map(|&q| score[(k, q)]).collect())
            .collect();
        let mut best = (0usize, 0usize);
        for (i, row) in sub.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > sub[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        order.push(rows.remove(best.0));
        pi.push(cols.remove(best.1));
    }
    (order, pi)
}
