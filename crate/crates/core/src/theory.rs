//! Closed-form predictions: emergence times, the idealized overlap ODE and
//! staircase loss, scaling-law exponents, and empirical slope fitting.
//!
//! Loss convention: the idealized staircase uses `sum a_p^2` without the 1/2
//! prefactor of the simulated MSE loss; callers overlaying predictions on
//! simulated curves divide the staircase by two.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermite::Activation;

/// Power-law exponents implied by `a_p ~ p^-beta` with `beta > 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingExponents {
    /// Loss vs time: `(1 - 2 beta) / beta`.
    pub time_exp: f64,
    /// Loss vs student width: `1 - 2 beta`.
    pub width_exp: f64,
    /// Compute-optimal loss vs budget `T ~ m t`: `(1 - 2 beta) / (1 + beta)`.
    pub compute_opt_loss_exp: f64,
    /// Compute-optimal width vs budget: `1 / (1 + beta)`.
    pub compute_opt_width_exp: f64,
    /// Loss vs samples under the time-aware (unstable) learning-rate choice:
    /// `(1 - 2 beta) / (2 beta)`.
    pub unstable_exp: f64,
}

/// Exponent record for a power-law teacher.
///
/// Errors for `beta <= 1/2` (the heavy-tailed regime, out of scope).
pub fn scaling_exponents(beta: f64) -> Result<ScalingExponents> {
    if !(beta > 0.5) {
        return Err(Error::InvalidParameter(format!(
            "heavy-tailed regime: scaling exponents require beta > 1/2, got {beta}"
        )));
    }
    Ok(ScalingExponents {
        time_exp: (1.0 - 2.0 * beta) / beta,
        width_exp: 1.0 - 2.0 * beta,
        compute_opt_loss_exp: (1.0 - 2.0 * beta) / (1.0 + beta),
        compute_opt_width_exp: 1.0 / (1.0 + beta),
        unstable_exp: (1.0 - 2.0 * beta) / (2.0 * beta),
    })
}

/// Predicted emergence time (in steps) for a direction with signal strength
/// `a_p` and initial squared overlap `vbar2_init`:
/// `T = 1 / (4 I (I-1) c_{2I}^2 a_p eta vbar2_init^{I-1})`.
pub fn predicted_time(a_p: f64, vbar2_init: f64, eta: f64, act: &Activation) -> Result<f64> {
    for (name, v) in [("a_p", a_p), ("vbar2_init", vbar2_init), ("eta", eta)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let i = act.info_half() as f64;
    let c = act.leading_coeff();
    Ok(1.0
        / (4.0 * i * (i - 1.0) * c * c * a_p * eta * vbar2_init.powi(act.info_half() as i32 - 1)))
}

/// Idealized pre-transition overlap
/// `vbar^2(t) = (vbar2_init^{-(I-1)} - 4 I (I-1) c^2 a eta t)^{-1/(I-1)}`,
/// the closed-form solution of `d vbar^2 / dt = 4 I c^2 a eta vbar^{2I}`.
///
/// Errors at or beyond the blow-up time, which equals
/// [`predicted_time`] exactly.
pub fn ode_overlap(t: f64, vbar2_init: f64, a: f64, eta: f64, act: &Activation) -> Result<f64> {
    let blow_up = predicted_time(a, vbar2_init, eta, act)?;
    if t >= blow_up {
        return Err(Error::PostTransition { t, blow_up });
    }
    let i = act.info_half();
    let rate = 1.0 / blow_up; // 4 I (I-1) c^2 a eta vbar2_init^{I-1}
    let base = 1.0 - rate * t; // vbar2^{-(I-1)}(t) / vbar2_init^{-(I-1)}
    Ok(vbar2_init * base.powf(-1.0 / (i as f64 - 1.0)))
}

/// Inverse of [`ode_overlap`]: the time at which the idealized overlap
/// reaches `vbar2`, namely `T_blow (1 - (vbar2_init / vbar2)^{I-1})`.
pub fn ode_time_to_overlap(
    vbar2: f64,
    vbar2_init: f64,
    a: f64,
    eta: f64,
    act: &Activation,
) -> Result<f64> {
    if !(vbar2 >= vbar2_init) {
        return Err(Error::InvalidParameter(format!(
            "target overlap {vbar2} below the initial value {vbar2_init}"
        )));
    }
    let blow_up = predicted_time(a, vbar2_init, eta, act)?;
    let ratio = (vbar2_init / vbar2).powi(act.info_half() as i32 - 1);
    Ok(blow_up * (1.0 - ratio))
}

/// Idealized staircase loss `sum_p a_p^2 1{t < T_p}` (no 1/2 prefactor).
///
/// `thresholds` and `a` must have equal length.
pub fn idealized_loss(t: f64, thresholds: &[f64], a: &[f64]) -> f64 {
    assert_eq!(
        thresholds.len(),
        a.len(),
        "thresholds and coefficients must pair up"
    );
    thresholds
        .iter()
        .zip(a)
        .filter(|(&tp, _)| t < tp)
        .map(|(_, &ap)| ap * ap)
        .sum()
}

/// Typical initialization overlap scale `log(m) / d` used for the "typical"
/// variant of emergence-time predictions (the realized variant plugs in the
/// actual initialization overlaps instead).
pub fn typical_init_overlap(d: usize, m: usize) -> f64 {
    (m.max(2) as f64).ln() / d as f64
}

/// Ordinary least squares of `log L` on `log t` over the points with
/// `L_lo < L < L_hi`. Returns `(slope, stderr)`.
///
/// `window` is `(L_hi, L_lo)`. Requires at least 5 usable points, all with
/// positive `t` and `L`. The window is an open interval; values within one
/// part in 10^6 of an edge count as on the edge and are excluded, so a loss
/// plateau sitting at the window top up to rounding does not leak into the
/// fit.
pub fn fit_slope(series: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64)> {
    let (hi, lo) = window;
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "loss window must satisfy L_hi > L_lo, got ({hi}, {lo})"
        )));
    }
    let hi_eff = hi * (1.0 - 1e-6);
    let lo_eff = lo * (1.0 + 1e-6);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(t, l)| t > 0.0 && l > lo_eff && l < hi_eff)
        .map(|&(t, l)| (t.ln(), l.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::TooFewPoints {
            need: 5,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "all points share the same time; slope undefined".into(),
        ));
    }
    let sxy: f64 = pts
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let stderr = if pts.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

/// Closed-form predictions attached to a run: per-direction emergence times
/// (from realized and typical initialization overlaps), the staircase
/// parameters, and scaling exponents when the teacher is a power law.
#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    /// `T_p` from the realized initialization overlaps, selection order.
    pub t_emerge: Vec<f64>,
    /// `T_p` with every initial overlap replaced by `log(m)/d`.
    pub t_emerge_typical: Vec<f64>,
    /// `(T_p, a_p^2)` staircase drop points, selection order.
    pub staircase: Vec<(f64, f64)>,
    pub exponents: Option<ScalingExponents>,
}

impl Prediction {
    /// Assemble predictions for matched directions with signal strengths
    /// `a_matched` and realized initial squared overlaps `vbar2_init`.
    pub fn new(
        a_matched: &[f64],
        vbar2_init: &[f64],
        eta: f64,
        act: &Activation,
        d: usize,
        m: usize,
        beta: Option<f64>,
    ) -> Result<Self> {
        if a_matched.len() != vbar2_init.len() {
            return Err(Error::ShapeMismatch(
                "matched coefficients and overlaps must pair up".into(),
            ));
        }
        let typical = typical_init_overlap(d, m);
        let mut t_emerge = Vec::with_capacity(a_matched.len());
        let mut t_emerge_typical = Vec::with_capacity(a_matched.len());
        let mut staircase = Vec::with_capacity(a_matched.len());
        for (&a, &v0) in a_matched.iter().zip(vbar2_init) {
            let t = predicted_time(a, v0, eta, act)?;
            t_emerge.push(t);
            t_emerge_typical.push(predicted_time(a, typical, eta, act)?);
            staircase.push((t, a * a));
        }
        let exponents = match beta {
            Some(b) => Some(scaling_exponents(b)?),
            None => None,
        };
        Ok(Self {
            t_emerge,
            t_emerge_typical,
            staircase,
            exponents,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h4() -> Activation {
        Activation::pure_hermite(4).unwrap()
    }

    #[test]
    fn predicted_time_arithmetic() {
        let t = predicted_time(0.5, 0.01, 1e-3, &h4()).unwrap();
        assert!((t - 25_000.0).abs() < 1e-9, "t = {t}");
        // doubling a halves T
        let t2 = predicted_time(1.0, 0.01, 1e-3, &h4()).unwrap();
        assert!((t2 - t / 2.0).abs() < 1e-9);
        assert!(predicted_time(-0.5, 0.01, 1e-3, &h4()).is_err());
        assert!(predicted_time(0.5, 0.0, 1e-3, &h4()).is_err());
    }

    #[test]
    fn ode_overlap_values_and_blow_up() {
        let act = h4();
        assert_eq!(ode_overlap(0.0, 0.01, 1.0, 1.0, &act).unwrap(), 0.01);
        let v = ode_overlap(10.0, 0.01, 1.0, 1.0, &act).unwrap();
        assert!((v - 0.05).abs() < 1e-12, "v = {v}");
        // blow-up time coincides with the predicted emergence time
        let t_star = predicted_time(1.0, 0.01, 1.0, &act).unwrap();
        assert!(ode_overlap(t_star, 0.01, 1.0, 1.0, &act).is_err());
        assert!(ode_overlap(t_star * (1.0 - 1e-9), 0.01, 1.0, 1.0, &act).is_ok());
    }

    #[test]
    fn ode_time_inverts_ode_overlap() {
        let act = h4();
        let (v0, a, eta) = (0.004, 0.7, 0.01);
        for frac in [0.1, 0.5, 0.9] {
            let t = frac * predicted_time(a, v0, eta, &act).unwrap();
            let u = ode_overlap(t, v0, a, eta, &act).unwrap();
            let back = ode_time_to_overlap(u, v0, a, eta, &act).unwrap();
            assert!((back - t).abs() < 1e-6 * t.max(1.0), "{back} vs {t}");
        }
        assert!(ode_time_to_overlap(0.001, 0.004, 0.7, 0.01, &act).is_err());
    }

    #[test]
    fn ode_overlap_satisfies_its_ode() {
        let act = Activation::from_coeffs([(4, 0.8), (6, 0.6)]).unwrap();
        let (v0, a, eta) = (0.02, 0.7, 0.5);
        let t_star = predicted_time(a, v0, eta, &act).unwrap();
        for frac in [0.2, 0.5, 0.8] {
            let t = frac * t_star;
            let h = t_star * 1e-6;
            let fd = (ode_overlap(t + h, v0, a, eta, &act).unwrap()
                - ode_overlap(t - h, v0, a, eta, &act).unwrap())
                / (2.0 * h);
            let v = ode_overlap(t, v0, a, eta, &act).unwrap();
            let i = act.info_half() as f64;
            let c = act.leading_coeff();
            let rhs = 4.0 * i * c * c * a * eta * v.powi(act.info_half() as i32);
            assert!(
                (fd - rhs).abs() <= 0.01 * rhs.abs(),
                "frac {frac}: fd {fd} vs rhs {rhs}"
            );
        }
    }

    #[test]
    fn idealized_loss_indicator_arithmetic() {
        let a = [0.5f64.sqrt(), 0.3f64.sqrt(), 0.2f64.sqrt()];
        let t_p = [10.0, 20.0, 30.0];
        assert!((idealized_loss(15.0, &t_p, &a) - 0.5).abs() < 1e-12);
        assert!((idealized_loss(5.0, &t_p, &a) - 1.0).abs() < 1e-12);
        assert_eq!(idealized_loss(30.0, &t_p, &a), 0.0);
    }

    #[test]
    fn idealized_loss_matches_direct_staircase_pointwise() {
        // thresholds from predicted_time reproduce the explicit
        // 1/(8 a eta v0) staircase exactly, point for point
        let act = h4();
        let (eta, v0) = (0.01, 0.004);
        let a = [0.8, 0.5, 0.33166247903554];
        let thresholds: Vec<f64> = a
            .iter()
            .map(|&ap| predicted_time(ap, v0, eta, &act).unwrap())
            .collect();
        for i in 0..400 {
            let t = 10f64.powf(1.0 + 4.0 * i as f64 / 399.0);
            let direct: f64 = a
                .iter()
                .filter(|&&ap| t < 1.0 / (((8.0 * ap) * eta) * v0))
                .map(|&ap| ap * ap)
                .sum();
            assert_eq!(direct, idealized_loss(t, &thresholds, &a), "t = {t}");
        }
    }

    #[test]
    fn exponents_match_formulas() {
        let e = scaling_exponents(0.8).unwrap();
        assert!((e.time_exp + 0.75).abs() < 1e-12);
        assert!((e.width_exp + 0.6).abs() < 1e-12);
        assert!((e.compute_opt_loss_exp + 1.0 / 3.0).abs() < 1e-12);
        assert!((e.compute_opt_width_exp - 1.0 / 1.8).abs() < 1e-12);
        assert!((e.unstable_exp + 0.375).abs() < 1e-12);

        let e1 = scaling_exponents(1.0).unwrap();
        assert!((e1.time_exp + 1.0).abs() < 1e-12);
        assert!((e1.width_exp + 1.0).abs() < 1e-12);
        assert!((e1.compute_opt_loss_exp + 0.5).abs() < 1e-12);

        // loss exponents vanish as beta -> 1/2+
        let e2 = scaling_exponents(0.5 + 1e-9).unwrap();
        assert!(e2.time_exp.abs() < 1e-8);
        assert!(e2.width_exp.abs() < 1e-8);
        assert!(scaling_exponents(0.5).is_err());
        assert!(scaling_exponents(0.4).is_err());
    }

    #[test]
    fn fit_slope_exact_power_law() {
        let series: Vec<(f64, f64)> = (1..60)
            .map(|i| {
                let t = 10.0 * 1.3f64.powi(i);
                (t, 3.0 * t.powf(-0.75))
            })
            .collect();
        let hi = series[1].1 * 1.0001;
        let lo = series[series.len() - 2].1 * 0.9999;
        let (slope, err) = fit_slope(&series, (hi, lo)).unwrap();
        assert!((slope + 0.75).abs() < 1e-10, "slope {slope}");
        assert!(err < 1e-10);
    }

    #[test]
    fn fit_slope_constant_series_and_errors() {
        let series: Vec<(f64, f64)> = (1..40).map(|i| (i as f64, 0.25)).collect();
        let (slope, _) = fit_slope(&series, (1.0, 0.01)).unwrap();
        assert!(slope.abs() < 1e-12);

        assert!(matches!(
            fit_slope(&series[..4], (1.0, 0.01)),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(fit_slope(&series, (0.01, 1.0)).is_err());
    }

    #[test]
    fn staircase_slope_matches_time_exponent_at_large_width() {
        // large-P staircase with T_p ~ p^beta and a power-law teacher
        let beta = 0.8;
        let p_total = 4096;
        let mut a: Vec<f64> = (1..=p_total)
            .map(|q| (q as f64).powf(-beta))
            .collect();
        let z = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut a {
            *x /= z;
        }
        let thresholds: Vec<f64> = (1..=p_total)
            .map(|q| (q as f64).powf(beta) * 125.0)
            .collect();
        // keep the window clear of the small-p discreteness and of the
        // finite-P truncation barrier, both of which bend the staircase
        let t_min = thresholds[5];
        let t_max = thresholds[23];
        let series: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let t = t_min * (t_max / t_min).powf(i as f64 / 399.0);
                (t, idealized_loss(t, &thresholds, &a))
            })
            .collect();
        let window = (
            idealized_loss(t_min, &thresholds, &a),
            idealized_loss(t_max, &thresholds, &a),
        );
        let (slope, _) = fit_slope(&series, window).unwrap();
        let want = scaling_exponents(beta).unwrap().time_exp;
        assert!(
            (slope - want).abs() < 0.05,
            "slope {slope} vs theory {want}"
        );
    }
}
