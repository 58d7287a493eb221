//! Teacher/student data model, closed-form population loss and gradient,
//! per-sample loss and stochastic gradient, and the Monte Carlo oracle.
//!
//! Teacher directions are fixed to the standard basis (the data distribution
//! and the algorithm are rotationally invariant), so the overlap of student
//! neuron `k` with teacher direction `p` is just the normalized `p`-th
//! coordinate of row `k`. With `K` the activation's correlation kernel, the
//! population loss of a student with unit rows `ubar_k` and squared norms
//! `n_k` is
//!
//! ```text
//! L = |a|^2/2 - sum_{k,p} a_p n_k K(vbar_{k,p}) + 1/2 sum_{k,l} n_k n_l K(<ubar_k, ubar_l>)
//! ```
//!
//! and the gradient follows by differentiating each kernel term. The radial
//! and tangent components of the gradient are also implemented separately in
//! their own closed forms and cross-checked in tests.

use std::io::{Read, Write};

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::Activation;
use crate::rng::{self, STREAM_MC};

/// Sum-squared tolerance for teacher coefficient normalization.
const COEFF_NORM_TOL: f64 = 1e-10;

/// The target: `f*(x) = sum_p a_p sigma(x_p)` with descending nonnegative
/// coefficients normalized to `sum a_p^2 = 1`, and `P <= d` so the
/// orthonormal directions fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    a: Array1<f64>,
    d: usize,
}

impl TeacherModel {
    pub fn new(a: Vec<f64>, d: usize) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidParameter("teacher width P = 0".into()));
        }
        if a.len() > d {
            return Err(Error::InvalidParameter(format!(
                "teacher width P = {} exceeds dimension d = {}",
                a.len(),
                d
            )));
        }
        let mut norm_sq = 0.0;
        for (p, &c) in a.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "teacher coefficient a_{} = {c} must be finite and nonnegative",
                    p + 1
                )));
            }
            if p > 0 && c > a[p - 1] {
                return Err(Error::InvalidParameter(
                    "teacher coefficients must be sorted descending".into(),
                ));
            }
            norm_sq += c * c;
        }
        if (norm_sq - 1.0).abs() > COEFF_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "teacher coefficients must satisfy sum a_p^2 = 1, got {norm_sq}"
            )));
        }
        Ok(Self {
            a: Array1::from(a),
            d,
        })
    }

    /// Power-law coefficients `a_p = p^-beta / Z` normalized to unit square sum.
    pub fn power_law(p: usize, d: usize, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "power-law exponent beta = {beta} must be nonnegative"
            )));
        }
        let mut a: Vec<f64> = (1..=p).map(|q| (q as f64).powf(-beta)).collect();
        let z = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut a {
            *x /= z;
        }
        // the explicit constructor re-checks the invariants
        Self::new(a, d)
    }

    /// Teacher width `P`.
    pub fn width(&self) -> usize {
        self.a.len()
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Signal strengths, descending.
    pub fn coeffs(&self) -> ArrayView1<'_, f64> {
        self.a.view()
    }
}

/// Student first-layer weights; the second layer of neuron `k` is tied to
/// `||v_k||^2` by the 2-homogeneous parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    v: Array2<f64>,
    step: u64,
}

impl StudentState {
    pub fn new(v: Array2<f64>, step: u64) -> Result<Self> {
        for (k, row) in v.rows().into_iter().enumerate() {
            let n: f64 = row.iter().map(|x| x * x).sum();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::DegenerateNeuron { index: k });
            }
        }
        Ok(Self { v, step })
    }

    pub fn width(&self) -> usize {
        self.v.nrows()
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.v
    }

    /// `||v_k||^2` per row.
    pub fn norms_sq(&self) -> Array1<f64> {
        self.v.map_axis(Axis(1), |r| r.iter().map(|x| x * x).sum())
    }

    pub(crate) fn rows_mut(&mut self) -> &mut Array2<f64> {
        &mut self.v
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }
}

/// Normalized summary statistics of a (teacher, student) pair: overlaps with
/// the teacher directions, squared norms, and the student Gram matrix.
#[derive(Debug, Clone)]
pub struct OverlapView {
    /// `vbar[k, p] = <v_k, e_p> / ||v_k||`, an `m x P` matrix.
    pub vbar: Array2<f64>,
    /// `||v_k||^2` per student neuron.
    pub norms_sq: Array1<f64>,
    /// `gram[k, l] = <ubar_k, ubar_l>`, symmetric with unit diagonal.
    pub gram: Array2<f64>,
    /// Full normalized rows `ubar_k`, `m x d`.
    pub unit_rows: Array2<f64>,
}

impl OverlapView {
    pub fn new(teacher: &TeacherModel, student: &StudentState) -> Result<Self> {
        if teacher.dim() != student.dim() {
            return Err(Error::ShapeMismatch(format!(
                "teacher dimension {} != student dimension {}",
                teacher.dim(),
                student.dim()
            )));
        }
        let m = student.width();
        let p = teacher.width();
        let mut unit_rows = student.rows().clone();
        let mut norms_sq = Array1::zeros(m);
        for (k, mut row) in unit_rows.rows_mut().into_iter().enumerate() {
            let n_sq: f64 = row.iter().map(|x| x * x).sum();
            if n_sq == 0.0 || !n_sq.is_finite() {
                return Err(Error::DegenerateNeuron { index: k });
            }
            norms_sq[k] = n_sq;
            let inv = 1.0 / n_sq.sqrt();
            row.mapv_inplace(|x| x * inv);
        }
        let vbar = unit_rows.slice(ndarray::s![.., 0..p]).to_owned();
        let mut gram = unit_rows.dot(&unit_rows.t());
        // exact symmetry and unit diagonal
        for k in 0..m {
            gram[(k, k)] = 1.0;
            for l in 0..k {
                let v = 0.5 * (gram[(k, l)] + gram[(l, k)]);
                gram[(k, l)] = v;
                gram[(l, k)] = v;
            }
        }
        Ok(Self {
            vbar,
            norms_sq,
            gram,
            unit_rows,
        })
    }
}

/// Convenience wrapper constructing the [`OverlapView`].
pub fn overlap_view(teacher: &TeacherModel, student: &StudentState) -> Result<OverlapView> {
    OverlapView::new(teacher, student)
}

/// Closed-form population MSE loss.
pub fn population_loss(
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
) -> Result<f64> {
    Ok(population_loss_from_view(
        &OverlapView::new(teacher, student)?,
        teacher,
        act,
    ))
}

/// Population loss from a precomputed view.
pub fn population_loss_from_view(
    view: &OverlapView,
    teacher: &TeacherModel,
    act: &Activation,
) -> f64 {
    let a = teacher.coeffs();
    let a_norm_sq: f64 = a.iter().map(|x| x * x).sum();
    let mut cross = 0.0;
    for (k, row) in view.vbar.rows().into_iter().enumerate() {
        let nk = view.norms_sq[k];
        for (p, &vb) in row.iter().enumerate() {
            cross += a[p] * nk * act.kernel(vb);
        }
    }
    let mut student_term = 0.0;
    for (k, row) in view.gram.rows().into_iter().enumerate() {
        let nk = view.norms_sq[k];
        for (l, &g) in row.iter().enumerate() {
            student_term += nk * view.norms_sq[l] * act.kernel(g);
        }
    }
    act.squared_norm() * a_norm_sq / 2.0 - cross + 0.5 * student_term
}

/// Full Euclidean population gradient, one row per student neuron.
///
/// Differentiates each kernel term of the loss directly; the radial/tangent
/// decomposition ([`radial_population_grad`], [`tangent_population_grad`])
/// is implemented independently and the two paths are cross-checked in tests.
pub fn population_grad(
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
) -> Result<Array2<f64>> {
    Ok(population_grad_from_view(
        &OverlapView::new(teacher, student)?,
        teacher,
        act,
    ))
}

/// Population gradient from a precomputed view.
pub fn population_grad_from_view(
    view: &OverlapView,
    teacher: &TeacherModel,
    act: &Activation,
) -> Array2<f64> {
    let a = teacher.coeffs();
    let m = view.unit_rows.nrows();
    let p = a.len();

    // teacher interaction: s1[k, p] = a_p K'(vbar_kp), plus its radial echo
    // c_t[k] = sum_p a_p (vbar K'(vbar) - 2 K(vbar))
    let mut s1 = Array2::<f64>::zeros((m, p));
    let mut c_t = Array1::<f64>::zeros(m);
    for k in 0..m {
        for q in 0..p {
            let vb = view.vbar[(k, q)];
            let kp = act.kernel_deriv(vb);
            s1[(k, q)] = a[q] * kp;
            c_t[k] += a[q] * (vb * kp - 2.0 * act.kernel(vb));
        }
    }

    // student interaction: w1[k, l] = n_l^2 K'(g_kl) (the l = k diagonal term
    // reproduces the 2 n_k^2 v_k self-interaction), and
    // c_s[k] = sum_l n_l^2 (g K'(g) - 2 K(g))
    let mut w1 = Array2::<f64>::zeros((m, m));
    let mut c_s = Array1::<f64>::zeros(m);
    for k in 0..m {
        for l in 0..m {
            let g = view.gram[(k, l)];
            let kp = act.kernel_deriv(g);
            w1[(k, l)] = view.norms_sq[l] * kp;
            c_s[k] += view.norms_sq[l] * (g * kp - 2.0 * act.kernel(g));
        }
    }

    let mut grad = w1.dot(&view.unit_rows);
    for k in 0..m {
        let radial_scale = c_t[k] - c_s[k];
        let norm = view.norms_sq[k].sqrt();
        let mut row = grad.row_mut(k);
        for (j, gj) in row.iter_mut().enumerate() {
            let mut val = *gj + radial_scale * view.unit_rows[(k, j)];
            if j < p {
                val -= s1[(k, j)];
            }
            *gj = norm * val;
        }
    }
    grad
}

/// Radial component `<grad_k L, v_k>` per neuron, in its own closed form:
/// `-2 n_k^2 (sum_p a_p K(vbar_kp) - sum_l n_l^2 K(g_kl))`.
pub fn radial_population_grad(
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
) -> Result<Array1<f64>> {
    let view = OverlapView::new(teacher, student)?;
    Ok(radial_population_grad_from_view(&view, teacher, act))
}

pub fn radial_population_grad_from_view(
    view: &OverlapView,
    teacher: &TeacherModel,
    act: &Activation,
) -> Array1<f64> {
    let a = teacher.coeffs();
    let m = view.unit_rows.nrows();
    let mut out = Array1::zeros(m);
    for k in 0..m {
        let teacher_sum: f64 = (0..a.len())
            .map(|q| a[q] * act.kernel(view.vbar[(k, q)]))
            .sum();
        let student_sum: f64 = (0..m)
            .map(|l| view.norms_sq[l] * act.kernel(view.gram[(k, l)]))
            .sum();
        out[k] = -2.0 * view.norms_sq[k] * (teacher_sum - student_sum);
    }
    out
}

/// Tangent component `(I - ubar ubar^T) grad_k L` per neuron, in its own
/// closed form.
pub fn tangent_population_grad(
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
) -> Result<Array2<f64>> {
    let view = OverlapView::new(teacher, student)?;
    let a = teacher.coeffs();
    let m = view.unit_rows.nrows();
    let p = a.len();
    let d = view.unit_rows.ncols();
    let mut out = Array2::zeros((m, d));
    for k in 0..m {
        let norm = view.norms_sq[k].sqrt();
        let mut row = Array1::<f64>::zeros(d);
        // - n_k sum_p a_p K'(vbar) (e_p - vbar ubar_k)
        let mut along_u = 0.0;
        for q in 0..p {
            let vb = view.vbar[(k, q)];
            let s = a[q] * act.kernel_deriv(vb);
            row[q] -= s;
            along_u += s * vb;
        }
        // + n_k sum_{l != k} n_l^2 K'(g) (ubar_l - g ubar_k)
        for l in 0..m {
            if l == k {
                continue;
            }
            let g = view.gram[(k, l)];
            let s = view.norms_sq[l] * act.kernel_deriv(g);
            row.scaled_add(s, &view.unit_rows.row(l));
            along_u -= s * g;
        }
        row.scaled_add(along_u, &view.unit_rows.row(k));
        out.row_mut(k).assign(&(&row * norm));
    }
    Ok(out)
}

/// Student output `f(x) = sum_k ||v_k||^2 sigma(ubar_k . x)`.
pub fn model_output(x: ArrayView1<f64>, student: &StudentState, act: &Activation) -> Result<f64> {
    let mut out = 0.0;
    for (k, row) in student.rows().rows().into_iter().enumerate() {
        let n_sq: f64 = row.iter().map(|v| v * v).sum();
        if n_sq == 0.0 {
            return Err(Error::DegenerateNeuron { index: k });
        }
        let z = row.dot(&x) / n_sq.sqrt();
        out += n_sq * act.eval(z);
    }
    Ok(out)
}

/// Teacher output `f*(x) = sum_p a_p sigma(x_p)`.
pub fn teacher_output(x: ArrayView1<f64>, teacher: &TeacherModel, act: &Activation) -> f64 {
    teacher
        .coeffs()
        .iter()
        .enumerate()
        .map(|(p, &a)| a * act.eval(x[p]))
        .sum()
}

/// Per-sample MSE loss `l(x) = (f*(x) - f(x))^2 / 2`.
pub fn sample_loss(
    x: ArrayView1<f64>,
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
) -> Result<f64> {
    let r = teacher_output(x, teacher, act) - model_output(x, student, act)?;
    Ok(0.5 * r * r)
}

/// Exact gradient of the per-sample loss in each row:
/// `grad_k l(x) = -(f*(x) - f(x)) [2 sigma(z_k) v_k + ||v_k|| sigma'(z_k)(x - z_k ubar_k)]`
/// with `z_k = ubar_k . x`.
pub fn sample_grad(
    x: ArrayView1<f64>,
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
) -> Result<Array2<f64>> {
    let m = student.width();
    let d = student.dim();
    let mut norms = Array1::zeros(m);
    let mut z = Array1::zeros(m);
    let mut f = 0.0;
    for (k, row) in student.rows().rows().into_iter().enumerate() {
        let n_sq: f64 = row.iter().map(|v| v * v).sum();
        if n_sq == 0.0 {
            return Err(Error::DegenerateNeuron { index: k });
        }
        let n = n_sq.sqrt();
        norms[k] = n;
        z[k] = row.dot(&x) / n;
        f += n_sq * act.eval(z[k]);
    }
    let residual = teacher_output(x, teacher, act) - f;
    let mut grad = Array2::zeros((m, d));
    for k in 0..m {
        let n = norms[k];
        let sig = act.eval(z[k]);
        let sig_d = act.deriv(z[k]);
        let row = student.rows().row(k);
        let mut out = grad.row_mut(k);
        // -r [ 2 sigma(z) v + n sigma'(z) (x - z v/n) ]
        let c_v = -residual * (2.0 * sig - sig_d * z[k]);
        let c_x = -residual * n * sig_d;
        for j in 0..d {
            out[j] = c_v * row[j] + c_x * x[j];
        }
    }
    Ok(grad)
}

/// Unbiased Monte Carlo estimate of the population loss with its standard
/// error, from `n` i.i.d. standard Gaussian samples.
///
/// Samples are drawn in fixed-size shards whose generators are derived from
/// `(seed, shard index)`, so the estimate is independent of thread count.
pub fn mc_population_loss(
    teacher: &TeacherModel,
    student: &StudentState,
    act: &Activation,
    n: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo needs n >= 2 samples, got {n}"
        )));
    }
    let view = OverlapView::new(teacher, student)?;
    let a = teacher.coeffs().to_owned();
    let d = student.dim();
    const SHARD: u64 = 16_384;
    let shards = n.div_ceil(SHARD);
    let partials: Vec<(f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let count = SHARD.min(n - s * SHARD);
            let mut rng = rng::stream(seed, &[STREAM_MC, s]);
            let mut x = Array1::zeros(d);
            let mut z = Array1::zeros(view.unit_rows.nrows());
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                rng::fill_standard_normal(&mut rng, x.as_slice_mut().expect("contiguous"));
                general_mat_vec_mul(1.0, &view.unit_rows, &x, 0.0, &mut z);
                let fstar: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(p, &ap)| ap * act.eval(x[p]))
                    .sum();
                let f: f64 = z
                    .iter()
                    .zip(view.norms_sq.iter())
                    .map(|(&zk, &nk)| nk * act.eval(zk))
                    .sum();
                let l = 0.5 * (fstar - f) * (fstar - f);
                sum += l;
                sum_sq += l * l;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(s, q), &(ps, pq)| (s + ps, q + pq));
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"HFSNAP\x00\x01";

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    d: usize,
    #[serde(rename = "P")]
    p: usize,
    m: usize,
    step: u64,
}

/// Write a binary snapshot of a (teacher, student) pair.
///
/// Layout: 8-byte magic `HFSNAP\x00\x01`, u32 little-endian header length,
/// JSON header `{"d", "P", "m", "step"}`, then `P` f64 little-endian teacher
/// coefficients followed by the `m x d` student rows (row-major, f64
/// little-endian).
pub fn write_snapshot<W: Write>(
    w: &mut W,
    teacher: &TeacherModel,
    student: &StudentState,
) -> Result<()> {
    if teacher.dim() != student.dim() {
        return Err(Error::ShapeMismatch(
            "teacher and student dimensions differ".into(),
        ));
    }
    let header = serde_json::to_vec(&SnapshotHeader {
        d: student.dim(),
        p: teacher.width(),
        m: student.width(),
        step: student.step(),
    })?;
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for &c in teacher.coeffs() {
        w.write_all(&c.to_le_bytes())?;
    }
    for &v in student.rows().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a snapshot produced by [`write_snapshot`], re-validating all model
/// invariants.
pub fn read_snapshot<R: Read>(r: &mut R) -> Result<(TeacherModel, StudentState)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Snapshot("file too short for magic".into()))?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)
        .map_err(|_| Error::Snapshot("missing header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_buf = vec![0u8; header_len];
    r.read_exact(&mut header_buf)
        .map_err(|_| Error::Snapshot("truncated header".into()))?;
    let header: SnapshotHeader = serde_json::from_slice(&header_buf)?;
    let mut read_f64 = |count: usize, what: &str| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Snapshot(format!("truncated {what}")))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let a = read_f64(header.p, "teacher coefficients")?;
    let flat = read_f64(header.m * header.d, "student rows")?;
    let teacher = TeacherModel::new(a, header.d)?;
    let v = Array2::from_shape_vec((header.m, header.d), flat)
        .map_err(|e| Error::Snapshot(e.to_string()))?;
    let student = StudentState::new(v, header.step)?;
    Ok((teacher, student))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn h4() -> Activation {
        Activation::pure_hermite(4).unwrap()
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn teacher_validation() {
        assert!(TeacherModel::new(vec![1.0], 4).is_ok());
        assert!(TeacherModel::new(vec![0.6, 0.8], 4).is_err()); // not descending
        assert!(TeacherModel::new(vec![0.9, 0.1], 4).is_err()); // not normalized
        assert!(TeacherModel::new(vec![0.8, 0.6], 1).is_err()); // P > d
        let t = TeacherModel::power_law(8, 32, 0.8).unwrap();
        let s: f64 = t.coeffs().iter().map(|x| x * x).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_basic_values() {
        let teacher = TeacherModel::new(vec![1.0], 4).unwrap();
        let student =
            StudentState::new(array![[0.1, 0.0, 0.0, 0.0]], 0).unwrap();
        let view = OverlapView::new(&teacher, &student).unwrap();
        assert!((view.vbar[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((view.norms_sq[0] - 0.01).abs() < 1e-14);

        let teacher2 = TeacherModel::new(vec![0.8, 0.6], 4).unwrap();
        let student2 =
            StudentState::new(array![[3.0, 4.0, 0.0, 0.0]], 0).unwrap();
        let view2 = OverlapView::new(&teacher2, &student2).unwrap();
        assert!((view2.vbar[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((view2.vbar[(0, 1)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn overlap_orthogonal_rows_give_identity_gram() {
        let teacher = TeacherModel::new(vec![1.0], 4).unwrap();
        let student =
            StudentState::new(array![[2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 3.0, 0.0]], 0).unwrap();
        let view = OverlapView::new(&teacher, &student).unwrap();
        assert_eq!(view.gram, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn degenerate_neuron_is_an_error() {
        let teacher = TeacherModel::new(vec![1.0], 3).unwrap();
        let v = array![[0.0, 0.0, 0.0]];
        assert!(matches!(
            StudentState::new(v, 0),
            Err(Error::DegenerateNeuron { index: 0 })
        ));
        let _ = teacher;
    }

    /// Student rows `sqrt(a_p) e_p` reproduce the teacher exactly.
    fn perfect_fit(teacher: &TeacherModel) -> StudentState {
        let d = teacher.dim();
        let mut v = Array2::zeros((teacher.width(), d));
        for (p, &a) in teacher.coeffs().iter().enumerate() {
            v[(p, p)] = a.sqrt();
        }
        StudentState::new(v, 0).unwrap()
    }

    #[test]
    fn loss_zero_at_perfect_fit() {
        let teacher = TeacherModel::new(vec![0.8, 0.6], 5).unwrap();
        let student = perfect_fit(&teacher);
        let l = population_loss(&teacher, &student, &h4()).unwrap();
        assert!(l.abs() < 1e-12, "loss {l}");
    }

    #[test]
    fn loss_of_orthogonal_single_neuron() {
        let teacher = TeacherModel::new(vec![1.0], 6).unwrap();
        for s in [0.3f64, 1.0, 2.5] {
            let mut v = Array2::zeros((1, 6));
            v[(0, 3)] = s.sqrt(); // orthogonal to e_1
            let student = StudentState::new(v, 0).unwrap();
            let l = population_loss(&teacher, &student, &h4()).unwrap();
            assert!(rel_close(l, 0.5 + s * s / 2.0, 1e-12), "s={s} l={l}");
        }
    }

    #[test]
    fn gradient_vanishes_at_perfect_fit() {
        let teacher = TeacherModel::new(vec![0.8, 0.6], 5).unwrap();
        let student = perfect_fit(&teacher);
        let g = population_grad(&teacher, &student, &h4()).unwrap();
        for row in g.rows() {
            let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(n < 1e-9, "gradient row norm {n}");
        }
    }

    #[test]
    fn radial_formula_spot_value() {
        // single neuron aligned with a single teacher, ||v||^2 = a/2 = 1/2
        let teacher = TeacherModel::new(vec![1.0], 4).unwrap();
        let mut v = Array2::zeros((1, 4));
        v[(0, 0)] = (0.5f64).sqrt();
        let student = StudentState::new(v, 0).unwrap();
        let r = radial_population_grad(&teacher, &student, &h4()).unwrap();
        assert!(rel_close(r[0], -0.5, 1e-12), "radial {}", r[0]);
        // and the assembled gradient agrees
        let g = population_grad(&teacher, &student, &h4()).unwrap();
        let dot = g.row(0).dot(&student.rows().row(0));
        assert!(rel_close(dot, -0.5, 1e-12), "dot {dot}");
    }

    #[test]
    fn outputs_and_sample_loss_definition() {
        let act = h4();
        let teacher = TeacherModel::new(vec![0.8, 0.6], 4).unwrap();
        let x0 = Array1::zeros(4);
        let sigma0 = 3.0 / 24f64.sqrt();
        let fstar = teacher_output(x0.view(), &teacher, &act);
        assert!(rel_close(fstar, sigma0 * 1.4, 1e-12));

        // single neuron c * e_1 gives f(x) = c^2 sigma(x_1)
        let c: f64 = 0.7;
        let mut v = Array2::zeros((1, 4));
        v[(0, 0)] = c;
        let student = StudentState::new(v, 0).unwrap();
        let x = array![1.3, -0.2, 0.4, 2.0];
        let f = model_output(x.view(), &student, &act).unwrap();
        assert!(rel_close(f, c * c * act.eval(1.3), 1e-12));

        let r = teacher_output(x.view(), &teacher, &act) - f;
        let l = sample_loss(x.view(), &teacher, &student, &act).unwrap();
        assert!(rel_close(l, 0.5 * r * r, 1e-15));
    }

    #[test]
    fn sample_grad_zero_when_residual_zero() {
        let act = h4();
        let teacher = TeacherModel::new(vec![0.8, 0.6], 5).unwrap();
        let student = perfect_fit(&teacher);
        let x = array![0.4, -1.1, 0.3, 0.9, -0.5];
        let g = sample_grad(x.view(), &teacher, &student, &act).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn mc_estimate_is_deterministic_and_zero_at_fit() {
        let act = h4();
        // a = 1 makes the fitted row exactly representable, so every sample
        // residual is exactly zero
        let teacher = TeacherModel::new(vec![1.0], 5).unwrap();
        let student = perfect_fit(&teacher);
        let (e1, s1) = mc_population_loss(&teacher, &student, &act, 5000, 9).unwrap();
        let (e2, _) = mc_population_loss(&teacher, &student, &act, 5000, 9).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1, 0.0);
        assert_eq!(s1, 0.0);

        // non-representable coefficients still fit to rounding error
        let teacher = TeacherModel::new(vec![0.8, 0.6], 5).unwrap();
        let student = perfect_fit(&teacher);
        let (e, s) = mc_population_loss(&teacher, &student, &act, 5000, 9).unwrap();
        assert!(e.abs() < 1e-28 && s < 1e-28, "e = {e}, s = {s}");
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let teacher = TeacherModel::power_law(3, 7, 0.8).unwrap();
        let mut v = Array2::zeros((4, 7));
        for k in 0..4 {
            for j in 0..7 {
                v[(k, j)] = ((k * 7 + j) as f64).sin() * 0.01 + 1e-3;
            }
        }
        let student = StudentState::new(v, 42).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &teacher, &student).unwrap();
        let (t2, s2) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(teacher, t2);
        assert_eq!(student, s2);
        let mut buf2 = Vec::new();
        write_snapshot(&mut buf2, &t2, &s2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let mut bad = b"NOTASNAP".to_vec();
        bad.extend_from_slice(&[0u8; 16]);
        assert!(read_snapshot(&mut bad.as_slice()).is_err());
    }
}
