//! Normal and chi-square(1) quantiles, squared t statistics for the two
//! cross-group spillover coefficients, and the two-hypothesis step-down test.

use std::fmt;

use libm::{erf, erfc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimationResult;
use crate::panel::Group;
use crate::transforms::regressor_layout;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation followed by a
/// Newton step on the CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };

    // Newton on Phi(x) - p, using the tail that keeps precision.
    let resid = if x < 0.0 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_cdf(-x)
    };
    let pdf = normal_pdf(x);
    Ok(if pdf > 0.0 { x - resid / pdf } else { x })
}

/// `P(chi2(1) <= c)`.
pub fn chi2_1_cdf(c: f64) -> f64 {
    if c <= 0.0 {
        0.0
    } else {
        erf((0.5 * c).sqrt())
    }
}

/// `tau` quantile of chi-square with one degree of freedom.
pub fn chi2_1_quantile(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidProbability(tau));
    }
    Ok(normal_quantile(0.5 * (1.0 + tau))?.powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    /// No spillover from group `F` onto group `B`.
    FB,
    /// No spillover from group `B` onto group `F`.
    BF,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 2] = [Hypothesis::FB, Hypothesis::BF];

    /// Group whose equation carries the coefficient.
    pub fn target(self) -> Group {
        match self {
            Hypothesis::FB => Group::B,
            Hypothesis::BF => Group::F,
        }
    }

    /// Group whose outcomes feed the neighbor average.
    pub fn source(self) -> Group {
        self.target().other()
    }

    /// Position of the coefficient in its group's `delta` for `layer` (0-based).
    pub fn coefficient_index(self, n_layers: usize, layer: usize) -> usize {
        regressor_layout::neighbor_index(n_layers, self.source(), layer)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::FB => "FB",
            Hypothesis::BF => "BF",
        })
    }
}

/// `Q = n_K (beta - null)^2 / V_jj` for one group's coefficient `idx`.
pub fn squared_t_stat(res: &EstimationResult, group: Group, idx: usize, null: f64) -> Result<f64> {
    let g = res.group(group);
    if idx >= g.delta_hat.len() {
        return Err(Error::InvalidInput(format!(
            "coefficient index {idx} out of range for group {group}"
        )));
    }
    if !g.estimated[idx] {
        return Err(Error::InvalidInput(format!(
            "{} is not estimated in group {group}",
            res.coefficient_names[idx]
        )));
    }
    let v = g.v_hat[idx][idx];
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::ZeroVariance(format!(
            "{} in group {group}",
            res.coefficient_names[idx]
        )));
    }
    let diff = g.delta_hat[idx] - null;
    Ok(g.n_units as f64 * diff * diff / v)
}

/// `(Q_FB, Q_BF)` for `H0: beta = 0`, with `idx_fb` indexing group `B`'s
/// coefficients and `idx_bf` group `F`'s.
pub fn squared_t_stats(res: &EstimationResult, idx_fb: usize, idx_bf: usize) -> Result<(f64, f64)> {
    Ok((
        squared_t_stat(res, Group::B, idx_fb, 0.0)?,
        squared_t_stat(res, Group::F, idx_bf, 0.0)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepdownDecision {
    pub q_fb: f64,
    pub q_bf: f64,
    pub alpha: f64,
    /// Retained hypotheses, in `[FB, BF]` order.
    pub s_hat: Vec<Hypothesis>,
    pub reject_fb: bool,
    pub reject_bf: bool,
    /// Critical value at `sqrt(1 - alpha)`.
    pub c_low: f64,
    /// Critical value at `1 - alpha`.
    pub c_high: f64,
}

impl StepdownDecision {
    pub fn rejects(&self, h: Hypothesis) -> bool {
        match h {
            Hypothesis::FB => self.reject_fb,
            Hypothesis::BF => self.reject_bf,
        }
    }

    pub fn retains(&self, h: Hypothesis) -> bool {
        self.s_hat.contains(&h)
    }

    /// Spillover-direction summary such as `F -> B` or `F <-> B`, or
    /// `none` when nothing is rejected.
    pub fn direction(&self) -> &'static str {
        match (self.reject_fb, self.reject_bf) {
            (true, true) => "F \u{2194} B",
            (true, false) => "F \u{2192} B",
            (false, true) => "B \u{2192} F",
            (false, false) => "none",
        }
    }
}

/// Step-down test of `{H_FB, H_BF}` at level `alpha`. A statistic equal to
/// a critical value is retained.
pub fn stepdown(q_fb: f64, q_bf: f64, alpha: f64) -> Result<StepdownDecision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability(alpha));
    }
    if !(q_fb >= 0.0 && q_bf >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "squared t statistics must be nonnegative, got {q_fb} and {q_bf}"
        )));
    }
    let c_low = chi2_1_quantile((1.0 - alpha).sqrt())?;
    let c_high = chi2_1_quantile(1.0 - alpha)?;
    let s_hat = match (q_fb <= c_low, q_bf <= c_low) {
        (true, true) => vec![Hypothesis::FB, Hypothesis::BF],
        (true, false) if q_fb <= c_high => vec![Hypothesis::FB],
        (false, true) if q_bf <= c_high => vec![Hypothesis::BF],
        _ => vec![],
    };
    Ok(StepdownDecision {
        q_fb,
        q_bf,
        alpha,
        reject_fb: !s_hat.contains(&Hypothesis::FB),
        reject_bf: !s_hat.contains(&Hypothesis::BF),
        s_hat,
        c_low,
        c_high,
    })
}

/// Whether a decision commits a familywise error given the true nulls `s_p`.
pub fn familywise_error(decision: &StepdownDecision, s_p: &[Hypothesis]) -> bool {
    s_p.iter().any(|&h| decision.rejects(h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_reference_values() {
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-13);
        assert!((normal_quantile(0.5).unwrap()).abs() < 1e-15);
        assert!((normal_quantile(1e-10).unwrap() + 6.361340902404056).abs() < 1e-9);
        assert!((chi2_1_quantile(0.95).unwrap() - 3.841458820694124).abs() < 1e-10);
        assert!(normal_quantile(0.0).is_err());
        assert!(chi2_1_quantile(1.0).is_err());
    }

    #[test]
    fn stepdown_walks() {
        let d = stepdown(1.0, 10.0, 0.05).unwrap();
        assert_eq!(d.s_hat, vec![Hypothesis::FB]);
        assert!(!d.reject_fb && d.reject_bf);

        let d = stepdown(0.5, 2.0, 0.05).unwrap();
        assert_eq!(d.s_hat.len(), 2);

        let d = stepdown(4.5, 7.0, 0.05).unwrap();
        assert!(d.s_hat.is_empty());

        let d = stepdown(9.0, 12.0, 0.05).unwrap();
        assert!(d.reject_fb && d.reject_bf);
    }

    #[test]
    fn ties_are_retained() {
        let c_low = chi2_1_quantile(0.95_f64.sqrt()).unwrap();
        let d = stepdown(c_low, c_low, 0.05).unwrap();
        assert_eq!(d.s_hat.len(), 2);
        let c_high = chi2_1_quantile(0.95).unwrap();
        let d = stepdown(c_high, 100.0, 0.05).unwrap();
        assert_eq!(d.s_hat, vec![Hypothesis::FB]);
    }

    #[test]
    fn coefficient_positions() {
        assert_eq!(Hypothesis::FB.coefficient_index(1, 0), 2);
        assert_eq!(Hypothesis::BF.coefficient_index(1, 0), 1);
        assert_eq!(Hypothesis::FB.coefficient_index(3, 1), 5);
    }
}
