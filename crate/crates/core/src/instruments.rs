//! Instrument construction: the simple choice `Z = W`, and the linear
//! projection instruments built from a per-period basis of cluster-demeaned
//! regressors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{ClusterMap, PeriodTensor};
use crate::transforms::{cluster_demean_tensor, RegressorPanel};

/// Largest condition number (after unit-diagonal scaling) accepted for the
/// basis Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IvOption {
    /// `Z_{i,t} = W_{i,t}`.
    #[serde(rename = "simple")]
    Simple,
    /// Projection on the demeaned regressors.
    #[serde(rename = "A")]
    ProjA,
    /// Projection on the demeaned regressors and their squares.
    #[serde(rename = "B")]
    ProjB,
    /// As `B`, plus squares of the previous period's demeaned regressors.
    #[serde(rename = "C")]
    ProjC,
}

impl IvOption {
    pub const ALL: [IvOption; 4] = [IvOption::Simple, IvOption::ProjA, IvOption::ProjB, IvOption::ProjC];

    pub fn label(self) -> &'static str {
        match self {
            IvOption::Simple => "simple",
            IvOption::ProjA => "A",
            IvOption::ProjB => "B",
            IvOption::ProjC => "C",
        }
    }

    pub fn is_projection(self) -> bool {
        !matches!(self, IvOption::Simple)
    }
}

impl fmt::Display for IvOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IvOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "simple" | "Simple" | "SIMPLE" => Ok(IvOption::Simple),
            "A" | "a" => Ok(IvOption::ProjA),
            "B" | "b" => Ok(IvOption::ProjB),
            "C" | "c" => Ok(IvOption::ProjC),
            other => Err(Error::InvalidInput(format!(
                "unknown IV option {other:?}; expected simple, A, B or C"
            ))),
        }
    }
}

/// Instruments `Z_{i,t}` for `t = 1..=T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentPanel {
    pub z: PeriodTensor,
}

impl InstrumentPanel {
    /// Wraps user-supplied instruments. The tensor must start at period 1.
    pub fn from_tensor(z: PeriodTensor) -> Result<Self> {
        if z.first_period() != 1 {
            return Err(Error::InvalidInput(format!(
                "instruments must start at period 1, got {}",
                z.first_period()
            )));
        }
        Ok(Self { z })
    }

    pub fn d_z(&self) -> usize {
        self.z.dim()
    }

    /// Returns a copy with every instrument multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            z: self.z.map(|v| v * factor),
        }
    }
}

/// The basis `phi_t(w)` for one unit. `w` is the unit's cluster-demeaned
/// regressor vector at `t`, `w_prev` the one at `t - 1` (needed by `ProjC`
/// when `t > 1`).
pub fn phi_basis(option: IvOption, w: &[f64], w_prev: Option<&[f64]>, t: usize) -> Result<Vec<f64>> {
    let squares = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    match option {
        IvOption::Simple => Err(Error::InvalidInput(
            "the simple IV option has no projection basis".into(),
        )),
        IvOption::ProjA => Ok(w.to_vec()),
        IvOption::ProjB => Ok([w.to_vec(), squares(w)].concat()),
        IvOption::ProjC if t <= 1 => Ok([w.to_vec(), squares(w)].concat()),
        IvOption::ProjC => {
            let prev = w_prev.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "option C at period {t} needs the previous period's regressors"
                ))
            })?;
            if prev.len() != w.len() {
                return Err(Error::InvalidInput(
                    "previous-period regressors have the wrong dimension".into(),
                ));
            }
            Ok([w.to_vec(), squares(w), squares(prev)].concat())
        }
    }
}

/// Builds `Z` for `t = 1..=T-1`.
///
/// For the projection options, `Z_{i,t}` is the fitted value of `W^H_{i,t}`
/// from the cross-sectional least-squares regression of `W^H_{.,t}` on
/// `phi_{.,t}` pooled over all units, so `d_Z = d_W`.
pub fn build_instruments(
    option: IvOption,
    regs: &RegressorPanel,
    regs_h: &PeriodTensor,
    clusters: &ClusterMap,
) -> Result<InstrumentPanel> {
    let w = &regs.w;
    let n = w.n_units();
    let d_w = regs.d_w();
    if regs_h.dim() != d_w || regs_h.n_units() != n || regs_h.first_period() != 1 {
        return Err(Error::InvalidInput(
            "transformed regressors do not match the regressor panel".into(),
        ));
    }
    let last = regs_h.last_period();
    let mut z = PeriodTensor::zeros(n, 1, regs_h.n_periods(), d_w);
    if option == IvOption::Simple {
        for i in 0..n {
            for t in 1..=last {
                z.get_mut(i, t).copy_from_slice(w.get(i, t));
            }
        }
        return Ok(InstrumentPanel { z });
    }

    let demeaned = cluster_demean_tensor(w, clusters);
    for t in 1..=last {
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let prev = (t > 1).then(|| demeaned.get(i, t - 1));
                phi_basis(option, demeaned.get(i, t), prev, t)
            })
            .collect::<Result<_>>()?;
        let fitted = project_onto_basis(&basis, regs_h, t)?;
        for (i, row) in fitted.into_iter().enumerate() {
            z.get_mut(i, t).copy_from_slice(&row);
        }
    }
    Ok(InstrumentPanel { z })
}

/// Fitted values of `target_{.,t}` regressed on `basis` (no intercept), one
/// row per unit.
pub fn project_onto_basis(basis: &[Vec<f64>], target: &PeriodTensor, t: usize) -> Result<Vec<Vec<f64>>> {
    let n = basis.len();
    let d_r = basis.first().map_or(0, Vec::len);
    let d_w = target.dim();

    let mut gram = DMatrix::<f64>::zeros(d_r, d_r);
    let mut cross = DMatrix::<f64>::zeros(d_r, d_w);
    for (i, phi) in basis.iter().enumerate() {
        let wh = target.get(i, t);
        for a in 0..d_r {
            for b in 0..d_r {
                gram[(a, b)] += phi[a] * phi[b];
            }
            for k in 0..d_w {
                cross[(a, k)] += phi[a] * wh[k];
            }
        }
    }

    // Unit-diagonal scaling leaves the projection unchanged and makes the
    // condition check insensitive to the scale of individual basis columns.
    let scale: Vec<f64> = (0..d_r)
        .map(|a| {
            let g = gram[(a, a)];
            if g > 0.0 {
                1.0 / g.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if let Some(a) = scale.iter().position(|&s| s == 0.0) {
        log::debug!("basis column {a} is identically zero at period {t}");
        return Err(Error::SingularGram {
            period: t,
            condition: f64::INFINITY,
        });
    }
    let scaled = DMatrix::from_fn(d_r, d_r, |a, b| gram[(a, b)] * scale[a] * scale[b]);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { period: t, condition });
    }

    // coef = G^{-1} C in scaled coordinates, via the eigendecomposition.
    let scaled_cross = DMatrix::from_fn(d_r, d_w, |a, k| cross[(a, k)] * scale[a]);
    let vt_c = eig.eigenvectors.transpose() * scaled_cross;
    let inv_vt_c = DMatrix::from_fn(d_r, d_w, |a, k| vt_c[(a, k)] / eig.eigenvalues[a]);
    let coef_scaled = &eig.eigenvectors * inv_vt_c;

    Ok((0..n)
        .map(|i| {
            let phi = DVector::from_fn(d_r, |a, _| basis[i][a] * scale[a]);
            (coef_scaled.transpose() * phi).iter().copied().collect()
        })
        .collect())
}
