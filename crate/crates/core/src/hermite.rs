//! Normalized probabilists' Hermite polynomials, Hermite expansions of
//! activation functions, and the Gaussian correlation kernel.
//!
//! Conventions: `h_k = He_k / sqrt(k!)` is orthonormal under the standard
//! Gaussian measure. Activations are stored as finite even expansions
//! `sigma = sum_i c_{2i} h_{2i}` with all degrees `>= 4` and unit L2 norm;
//! the information exponent is the lowest stored degree `2I`.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Coefficients smaller than this (after normalization) are dropped from an
/// expansion.
pub const COEFF_ZERO_TOL: f64 = 1e-8;
/// Odd or low-degree mass above this (after normalization) rejects the input
/// function.
pub const COEFF_REJECT_TOL: f64 = 1e-6;

/// Evaluate the normalized Hermite polynomial `h_k(x) = He_k(x)/sqrt(k!)`.
///
/// Uses the normalized three-term recursion
/// `h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1)`, which stays in range
/// for `k <= 64`, `|x| <= 20`.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0; // h_0
            let mut cur = x; // h_1
            for j in 1..k {
                let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Derivative of the normalized Hermite polynomial: `h_k'(x) = sqrt(k) h_{k-1}(x)`.
///
/// Returns 0 for `k = 0`.
pub fn hermite_deriv_eval(k: usize, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        (k as f64).sqrt() * hermite_eval(k - 1, x)
    }
}

/// Gauss-Hermite quadrature for the standard Gaussian weight:
/// `integrate(f) ~ E[f(Z)]`, exact for polynomials of degree `<= 2n - 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Build the `n`-point rule. Nodes are the roots of `h_n`, found by
    /// bracketing sign changes and bisecting; the weight at node `x` is the
    /// Christoffel number `1 / sum_{j<n} h_j(x)^2`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "quadrature rule needs at least one node".into(),
            ));
        }
        let mut nodes = Vec::with_capacity(n);
        if n % 2 == 1 {
            nodes.push(0.0);
        }
        // All roots lie inside |x| < sqrt(4n + 2).
        let xmax = ((4 * n + 2) as f64).sqrt();
        let lo = if n % 2 == 1 { 1e-12 } else { 0.0 };
        let grid = 40 * n;
        let mut prev_x = lo;
        let mut prev_f = hermite_eval(n, prev_x);
        for g in 1..=grid {
            let x = lo + (xmax - lo) * g as f64 / grid as f64;
            let f = hermite_eval(n, x);
            if prev_f == 0.0 {
                nodes.push(prev_x);
            } else if prev_f * f < 0.0 {
                nodes.push(bisect_root(n, prev_x, x));
            }
            prev_x = x;
            prev_f = f;
        }
        let positive: Vec<f64> = nodes.iter().copied().filter(|&x| x > 0.0).collect();
        let mut all = Vec::with_capacity(n);
        for &x in positive.iter().rev() {
            all.push(-x);
        }
        if n % 2 == 1 {
            all.push(0.0);
        }
        all.extend(positive.iter().copied());
        if all.len() != n {
            return Err(Error::InvalidParameter(format!(
                "root search found {} of {} quadrature nodes",
                all.len(),
                n
            )));
        }
        let weights = all
            .iter()
            .map(|&x| {
                let s: f64 = (0..n).map(|j| hermite_eval(j, x).powi(2)).sum();
                1.0 / s
            })
            .collect();
        Ok(Self {
            nodes: all,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximate `E[f(Z)]` for standard Gaussian `Z`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn bisect_root(n: usize, mut a: f64, mut b: f64) -> f64 {
    let mut fa = hermite_eval(n, a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let fm = hermite_eval(n, mid);
        if fm == 0.0 {
            return mid;
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// An even activation stored by its Hermite coefficients.
///
/// Invariants: all stored degrees are even and at least 4, the coefficient at
/// the lowest degree `2I` is nonzero, and `sum c^2 = 1` up to 1e-10
/// (normalization is enforced by the constructors, not assumed).
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    /// `(degree, coefficient)` sorted by degree; degrees even, `>= 4`.
    coeffs: Vec<(usize, f64)>,
    /// Half the information exponent: lowest degree is `2 * info_half`.
    info_half: usize,
}

impl Activation {
    /// The pure basis activation `sigma = h_degree` (degree even, `>= 4`).
    pub fn pure_hermite(degree: usize) -> Result<Self> {
        Self::from_coeffs([(degree, 1.0)])
    }

    /// Build from `(degree, coefficient)` pairs, rescaling to unit L2 norm.
    ///
    /// Rejects odd degrees, degrees below 4, and all-zero input.
    pub fn from_coeffs<T: IntoIterator<Item = (usize, f64)>>(pairs: T) -> Result<Self> {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (deg, c) in pairs {
            if !c.is_finite() {
                return Err(Error::InvalidActivation(format!(
                    "coefficient at degree {deg} is not finite"
                )));
            }
            if c == 0.0 {
                continue;
            }
            if deg % 2 != 0 {
                return Err(Error::InvalidActivation(format!(
                    "odd degree {deg} violates the even-activation requirement"
                )));
            }
            if deg < 4 {
                return Err(Error::InvalidActivation(format!(
                    "degree {deg} gives information exponent {deg} < 4"
                )));
            }
            *map.entry(deg).or_insert(0.0) += c;
        }
        let norm_sq: f64 = map.values().map(|c| c * c).sum();
        if norm_sq <= 0.0 {
            return Err(Error::InvalidActivation("all coefficients are zero".into()));
        }
        let norm = norm_sq.sqrt();
        let coeffs: Vec<(usize, f64)> = map.into_iter().map(|(d, c)| (d, c / norm)).collect();
        let info_half = coeffs[0].0 / 2;
        Ok(Self { coeffs, info_half })
    }

    /// Expand a pointwise function in the Hermite basis by Gauss-Hermite
    /// quadrature with `quad_points` nodes, keep degrees up to `max_degree`,
    /// and normalize.
    ///
    /// Coefficients below [`COEFF_ZERO_TOL`] are zeroed. Functions whose odd
    /// or degree-<4 mass exceeds [`COEFF_REJECT_TOL`] after normalization are
    /// rejected, as are all-zero expansions.
    pub fn expand<F: Fn(f64) -> f64>(f: F, max_degree: usize, quad_points: usize) -> Result<Self> {
        if quad_points < max_degree + 1 {
            return Err(Error::InvalidParameter(format!(
                "need at least {} quadrature nodes for degree {}, got {}",
                max_degree + 1,
                max_degree,
                quad_points
            )));
        }
        let quad = GaussHermite::new(quad_points)?;
        let raw: Vec<f64> = (0..=max_degree)
            .map(|k| quad.integrate(|x| f(x) * hermite_eval(k, x)))
            .collect();
        let total: f64 = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if total < 1e-12 {
            return Err(Error::InvalidActivation(
                "expansion is identically zero up to truncation".into(),
            ));
        }
        let normalized: Vec<f64> = raw.iter().map(|c| c / total).collect();
        for (k, &c) in normalized.iter().enumerate() {
            if (k % 2 != 0 || k < 4) && c.abs() > COEFF_REJECT_TOL {
                if k % 2 != 0 {
                    return Err(Error::InvalidActivation(format!(
                        "odd coefficient at degree {k} has magnitude {:.3e}",
                        c.abs()
                    )));
                }
                return Err(Error::InvalidActivation(format!(
                    "information exponent {k} < 4: coefficient magnitude {:.3e}",
                    c.abs()
                )));
            }
        }
        let kept = normalized
            .iter()
            .enumerate()
            .filter(|&(k, c)| k % 2 == 0 && k >= 4 && c.abs() >= COEFF_ZERO_TOL)
            .map(|(k, &c)| (k, c));
        Self::from_coeffs(kept)
    }

    /// Same as [`Activation::expand`] with the default `2 * max_degree + 1`
    /// quadrature nodes, exact for every inner product involved.
    pub fn expand_with_default_nodes<F: Fn(f64) -> f64>(f: F, max_degree: usize) -> Result<Self> {
        Self::expand(f, max_degree, 2 * max_degree + 1)
    }

    /// Expand with the default truncation `2I + 8`, where `I` is detected
    /// from a first coarse pass. Tail coefficients beyond that degree decay
    /// for unit-norm activations, and the pure basis activations used in
    /// practice have none at all.
    pub fn expand_default<F: Fn(f64) -> f64>(f: F) -> Result<Self> {
        let probe = Self::expand_with_default_nodes(&f, 16)?;
        let d = probe.info_exponent() + 8;
        if d == 16 {
            return Ok(probe);
        }
        Self::expand_with_default_nodes(&f, d)
    }

    /// `(degree, coefficient)` pairs in increasing degree order.
    pub fn coeffs(&self) -> &[(usize, f64)] {
        &self.coeffs
    }

    /// Half the information exponent (`I`, so the information exponent is `2I`).
    pub fn info_half(&self) -> usize {
        self.info_half
    }

    /// Information exponent `2I`: the lowest degree present.
    pub fn info_exponent(&self) -> usize {
        2 * self.info_half
    }

    /// Coefficient at the lowest degree.
    pub fn leading_coeff(&self) -> f64 {
        self.coeffs[0].1
    }

    /// Highest stored degree.
    pub fn max_degree(&self) -> usize {
        self.coeffs.last().expect("nonempty").0
    }

    /// `sum c^2`; equals 1 up to rounding.
    pub fn squared_norm(&self) -> f64 {
        self.coeffs.iter().map(|(_, c)| c * c).sum()
    }

    /// `sigma(z) = sum c_k h_k(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        self.fold_hermite(z, |k, _| hermite_eval(k, z))
    }

    /// `sigma'(z) = sum c_k sqrt(k) h_{k-1}(z)`.
    pub fn deriv(&self, z: f64) -> f64 {
        self.fold_hermite(z, |k, _| hermite_deriv_eval(k, z))
    }

    fn fold_hermite<F: Fn(usize, f64) -> f64>(&self, z: f64, basis: F) -> f64 {
        self.coeffs.iter().map(|&(k, c)| c * basis(k, z)).sum()
    }

    /// Correlation kernel `K(c) = sum_k c_k^2 c^k = E[sigma(u.x) sigma(w.x)]`
    /// for unit vectors with `<u, w> = c`.
    pub fn kernel(&self, c: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(k, ck)| ck * ck * c.powi(k as i32))
            .sum()
    }

    /// `K'(c) = sum_k k c_k^2 c^{k-1}`.
    pub fn kernel_deriv(&self, c: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(k, ck)| (k as f64) * ck * ck * c.powi(k as i32 - 1))
            .sum()
    }
}

impl Serialize for Activation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        let coeffs: BTreeMap<String, f64> = self
            .coeffs
            .iter()
            .map(|&(k, c)| (k.to_string(), c))
            .collect();
        map.serialize_entry("coeffs", &coeffs)?;
        map.serialize_entry("info_exponent", &self.info_exponent())?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for Activation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ActVisitor;

        impl<'de> Visitor<'de> for ActVisitor {
            type Value = Activation;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str(
                    "an activation object {\"coeffs\": {..}, \"info_exponent\": n} \
                     or the shorthand {\"hermite\": degree}",
                )
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Activation, A::Error> {
                let mut coeffs: Option<BTreeMap<String, f64>> = None;
                let mut info: Option<usize> = None;
                let mut hermite: Option<usize> = None;
                while let Some(key) = access.next_key::<String>()? {
                    match key.as_str() {
                        "coeffs" => coeffs = Some(access.next_value()?),
                        "info_exponent" => info = Some(access.next_value()?),
                        "hermite" => hermite = Some(access.next_value()?),
                        other => {
                            return Err(de::Error::unknown_field(
                                other,
                                &["coeffs", "info_exponent", "hermite"],
                            ))
                        }
                    }
                }
                let act = match (coeffs, hermite) {
                    (Some(_), Some(_)) => {
                        return Err(de::Error::custom(
                            "give either coeffs or the hermite shorthand, not both",
                        ))
                    }
                    (None, Some(degree)) => Activation::pure_hermite(degree)
                        .map_err(|e| de::Error::custom(e.to_string()))?,
                    (Some(coeffs), None) => {
                        let pairs: std::result::Result<Vec<(usize, f64)>, A::Error> = coeffs
                            .into_iter()
                            .map(|(k, c)| {
                                k.parse::<usize>().map(|deg| (deg, c)).map_err(|_| {
                                    de::Error::custom(format!("bad degree key {k:?}"))
                                })
                            })
                            .collect();
                        Activation::from_coeffs(pairs?)
                            .map_err(|e| de::Error::custom(e.to_string()))?
                    }
                    (None, None) => return Err(de::Error::missing_field("coeffs")),
                };
                if let Some(ie) = info {
                    if ie != act.info_exponent() {
                        return Err(de::Error::custom(format!(
                            "info_exponent {ie} does not match coefficients (lowest degree {})",
                            act.info_exponent()
                        )));
                    }
                }
                Ok(act)
            }
        }

        deserializer.deserialize_map(ActVisitor)
    }
}
