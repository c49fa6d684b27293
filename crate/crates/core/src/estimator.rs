//! Two-step GMM on Helmert/between-cluster transformed moments, estimated
//! separately for each group.
//!
//! For group `K` with `n_K` units the moment sums are
//!
//! ```text
//! A = (1/n_K) sum_i sum_{t=1}^{T-1} (Z_{i,t} - Z^C_{i,t}) y^H_{i,t}
//! B = (1/n_K) sum_i sum_{t=1}^{T-1} (Z_{i,t} - Z^C_{i,t}) W^H_{i,t}'
//! ```
//!
//! The initial estimate solves `B d = A` in least squares, the weight matrix
//! is the per-unit outer product of the residual moments, and the final
//! estimate is the weighted solution with variance `(B' Omega^{-1} B)^{-1}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result, Stage, StageExt};
use crate::inference::{normal_cdf, normal_quantile};
use crate::instruments::{build_instruments, InstrumentPanel, IvOption};
use crate::linalg::{equilibrated_condition, symmetrize, PivotedQr};
use crate::panel::{ClusterMap, Group, GroupPartition, NetworkStack, PanelDataset, PeriodTensor};
use crate::transforms::{
    build_regressors, cluster_demean_tensor, helmert_cluster_transform, HelmertWeights,
    RegressorPanel,
};

/// Largest (unit-diagonal) condition number accepted for `Omega` when it has
/// to be inverted.
pub const MAX_WEIGHT_CONDITION: f64 = 1e12;

/// Moment sums for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub a: DVector<f64>,
    pub b: DMatrix<f64>,
    pub group: Group,
    pub n_units: usize,
}

impl MomentSet {
    pub fn d_z(&self) -> usize {
        self.b.nrows()
    }
    pub fn d_w(&self) -> usize {
        self.b.ncols()
    }
}

/// Cluster-demeaned instruments together with the transformed outcome and
/// regressors, all over Helmert indices `1..=T-1`.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    pub z_dm: PeriodTensor,
    pub y_h: PeriodTensor,
    pub w_h: PeriodTensor,
}

impl TransformedSystem {
    pub fn new(
        z: &InstrumentPanel,
        y_h: PeriodTensor,
        w_h: PeriodTensor,
        clusters: &ClusterMap,
    ) -> Result<Self> {
        if z.z.first_period() != 1 || !z.z.covers(1, y_h.last_period()) || y_h.dim() != 1 {
            return Err(Error::InvalidInput(
                "instruments and transformed outcomes cover different periods".into(),
            ));
        }
        if !y_h.same_shape(&PeriodTensor::zeros(w_h.n_units(), 1, w_h.n_periods(), 1)) {
            return Err(Error::InvalidInput(
                "transformed outcome and regressors are misaligned".into(),
            ));
        }
        Ok(Self {
            z_dm: cluster_demean_tensor(&z.z, clusters),
            y_h,
            w_h,
        })
    }

    fn last_index(&self) -> usize {
        self.y_h.last_period()
    }

    /// Transformed residuals `y^H - W^H' delta` for every unit.
    pub fn residuals(&self, delta: &DVector<f64>) -> PeriodTensor {
        let mut out = self.y_h.clone();
        for i in 0..self.y_h.n_units() {
            for t in 1..=self.last_index() {
                let fit: f64 = self.w_h.get(i, t).iter().zip(delta.iter()).map(|(w, d)| w * d).sum();
                out.get_mut(i, t)[0] -= fit;
            }
        }
        out
    }
}

/// Builds `A` and `B` for `group`.
pub fn moment_matrices(
    sys: &TransformedSystem,
    partition: &GroupPartition,
    group: Group,
) -> Result<MomentSet> {
    let members = partition.members(group);
    if members.is_empty() {
        return Err(Error::InvalidInput(format!("group {group} has no units")));
    }
    let d_z = sys.z_dm.dim();
    let d_w = sys.w_h.dim();
    let mut a = DVector::zeros(d_z);
    let mut b = DMatrix::zeros(d_z, d_w);
    for &u in members {
        for t in 1..=sys.last_index() {
            let z = sys.z_dm.get(u.0, t);
            let y = sys.y_h.at(u.0, t, 0);
            let w = sys.w_h.get(u.0, t);
            for r in 0..d_z {
                a[r] += z[r] * y;
                for c in 0..d_w {
                    b[(r, c)] += z[r] * w[c];
                }
            }
        }
    }
    let n = members.len() as f64;
    Ok(MomentSet {
        a: a / n,
        b: b / n,
        group,
        n_units: members.len(),
    })
}

/// `(B'B)^{-1} B'A`, solved by pivoted QR on `B`.
pub fn initial_estimator(m: &MomentSet) -> Result<DVector<f64>> {
    let qr = PivotedQr::new(&m.b);
    if !qr.is_full_rank() {
        return Err(Error::RankDeficient {
            columns: qr.deficient_columns(),
        });
    }
    Ok(qr.solve(&m.a))
}

/// `Omega = (1/n_K) sum_i g_i g_i'` with
/// `g_i = sum_t (Z_{i,t} - Z^C_{i,t}) u^H_{i,t}`.
pub fn weight_matrix(
    z_dm: &PeriodTensor,
    residuals_h: &PeriodTensor,
    partition: &GroupPartition,
    group: Group,
) -> DMatrix<f64> {
    let members = partition.members(group);
    let d_z = z_dm.dim();
    let mut omega = DMatrix::zeros(d_z, d_z);
    let mut g = vec![0.0; d_z];
    for &u in members {
        g.iter_mut().for_each(|v| *v = 0.0);
        for t in residuals_h.periods() {
            let r = residuals_h.at(u.0, t, 0);
            for (gk, zk) in g.iter_mut().zip(z_dm.get(u.0, t)) {
                *gk += zk * r;
            }
        }
        for r in 0..d_z {
            for c in r..d_z {
                omega[(r, c)] += g[r] * g[c];
            }
        }
    }
    for r in 0..d_z {
        for c in 0..r {
            omega[(r, c)] = omega[(c, r)];
        }
    }
    omega / members.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepFit {
    pub delta: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Unit-diagonal condition number of `Omega`.
    pub omega_condition: f64,
}

/// `delta = (B' Omega^{-1} B)^{-1} B' Omega^{-1} A`, `V = (B' Omega^{-1} B)^{-1}`.
///
/// When `d_Z = d_W` the weight drops out of `delta` (it equals `B^{-1} A`) and
/// `V = B^{-1} Omega B^{-T}`, so `Omega` is never inverted. Otherwise `Omega`
/// is whitened by its Cholesky factor and must have a condition number at
/// most [`MAX_WEIGHT_CONDITION`].
pub fn two_step_estimate(m: &MomentSet, omega: &DMatrix<f64>) -> Result<TwoStepFit> {
    let (d_z, d_w) = m.b.shape();
    if omega.shape() != (d_z, d_z) {
        return Err(Error::InvalidInput(format!(
            "weight matrix is {}x{}, expected {d_z}x{d_z}",
            omega.nrows(),
            omega.ncols()
        )));
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularWeight {
            condition: f64::INFINITY,
        });
    }
    let omega_condition = equilibrated_condition(omega);

    if d_z == d_w {
        let qr = PivotedQr::new(&m.b);
        if !qr.is_full_rank() {
            return Err(Error::RankDeficient {
                columns: qr.deficient_columns(),
            });
        }
        let delta = qr.solve(&m.a);
        let b_inv = qr.solve_matrix(&DMatrix::identity(d_z, d_z));
        let mut v = &b_inv * omega * b_inv.transpose();
        symmetrize(&mut v);
        return Ok(TwoStepFit {
            delta,
            v,
            omega_condition,
        });
    }

    if !(omega_condition <= MAX_WEIGHT_CONDITION) {
        return Err(Error::SingularWeight {
            condition: omega_condition,
        });
    }
    let d: Vec<f64> = (0..d_z).map(|k| omega[(k, k)].sqrt()).collect();
    let scaled = DMatrix::from_fn(d_z, d_z, |r, c| omega[(r, c)] / (d[r] * d[c]));
    let chol = scaled.cholesky().ok_or(Error::SingularWeight {
        condition: omega_condition,
    })?;
    let b_s = DMatrix::from_fn(d_z, d_w, |r, c| m.b[(r, c)] / d[r]);
    let a_s = DVector::from_fn(d_z, |r, _| m.a[r] / d[r]);
    let l = chol.l();
    let b_w = l
        .solve_lower_triangular(&b_s)
        .expect("Cholesky factor has a positive diagonal");
    let a_w = l
        .solve_lower_triangular(&a_s)
        .expect("Cholesky factor has a positive diagonal");
    let qr = PivotedQr::new(&b_w);
    if !qr.is_full_rank() {
        return Err(Error::RankDeficient {
            columns: qr.deficient_columns(),
        });
    }
    let delta = qr.solve(&a_w);
    let info = b_w.transpose() * &b_w;
    let mut v = info
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::RankDeficient { columns: vec![] })?;
    symmetrize(&mut v);
    Ok(TwoStepFit {
        delta,
        v,
        omega_condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDiagnostics {
    /// Unit-diagonal condition number of `B'B`.
    pub b_condition: f64,
    pub omega_condition: f64,
    pub just_identified: bool,
    /// Relative gap between the residual moment and its martingale-sum form,
    /// available when the true shocks are known.
    pub residual_identity_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEstimate {
    pub group: Group,
    pub n_units: usize,
    /// `false` for neighbor averages the network never feeds into this group;
    /// their entries in every vector below are `NaN`.
    pub estimated: Vec<bool>,
    pub delta_hat: Vec<f64>,
    pub delta_tilde: Vec<f64>,
    pub v_hat: Vec<Vec<f64>>,
    pub omega_hat: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub p_value: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub diagnostics: GroupDiagnostics,
}

impl GroupEstimate {
    fn from_fit(
        m: &MomentSet,
        delta_tilde: &DVector<f64>,
        omega: &DMatrix<f64>,
        fit: TwoStepFit,
        alpha: f64,
    ) -> Result<Self> {
        let n = m.n_units as f64;
        let z = normal_quantile(1.0 - alpha / 2.0)?;
        let d_w = fit.delta.len();
        let se: Vec<f64> = (0..d_w).map(|j| (fit.v[(j, j)].max(0.0) / n).sqrt()).collect();
        let delta_hat: Vec<f64> = fit.delta.iter().copied().collect();
        let t_stat: Vec<f64> = delta_hat.iter().zip(&se).map(|(d, s)| d / s).collect();
        let p_value = t_stat
            .iter()
            .map(|t| {
                if t.is_finite() {
                    2.0 * normal_cdf(-t.abs())
                } else {
                    f64::NAN
                }
            })
            .collect();
        let to_rows = |mat: &DMatrix<f64>| {
            (0..mat.nrows())
                .map(|r| mat.row(r).iter().copied().collect())
                .collect()
        };
        Ok(Self {
            group: m.group,
            n_units: m.n_units,
            estimated: vec![true; d_w],
            ci_lower: delta_hat.iter().zip(&se).map(|(d, s)| d - z * s).collect(),
            ci_upper: delta_hat.iter().zip(&se).map(|(d, s)| d + z * s).collect(),
            delta_tilde: delta_tilde.iter().copied().collect(),
            v_hat: to_rows(&fit.v),
            omega_hat: to_rows(omega),
            se,
            t_stat,
            p_value,
            diagnostics: GroupDiagnostics {
                b_condition: equilibrated_condition(&(m.b.transpose() * &m.b)),
                omega_condition: fit.omega_condition,
                just_identified: m.d_z() == m.d_w(),
                residual_identity_gap: None,
            },
            delta_hat,
        })
    }

    /// Re-expands an estimate on the columns `cols` to `d_w` slots.
    fn expand(mut self, cols: &[usize], d_w: usize) -> Self {
        let spread = |v: &[f64]| {
            let mut out = vec![f64::NAN; d_w];
            for (&c, &x) in cols.iter().zip(v) {
                out[c] = x;
            }
            out
        };
        self.delta_hat = spread(&self.delta_hat);
        self.delta_tilde = spread(&self.delta_tilde);
        self.se = spread(&self.se);
        self.t_stat = spread(&self.t_stat);
        self.p_value = spread(&self.p_value);
        self.ci_lower = spread(&self.ci_lower);
        self.ci_upper = spread(&self.ci_upper);
        let spread_matrix = |m: &[Vec<f64>]| {
            let mut out = vec![vec![f64::NAN; d_w]; d_w];
            for (r, &cr) in cols.iter().enumerate() {
                for (c, &cc) in cols.iter().enumerate() {
                    out[cr][cc] = m[r][c];
                }
            }
            out
        };
        self.v_hat = spread_matrix(&self.v_hat);
        if self.omega_hat.len() == cols.len() {
            self.omega_hat = spread_matrix(&self.omega_hat);
        }
        self.estimated = (0..d_w).map(|j| cols.contains(&j)).collect();
        self
    }

    pub fn v_hat_matrix(&self) -> DMatrix<f64> {
        let d = self.v_hat.len();
        DMatrix::from_fn(d, d, |r, c| self.v_hat[r][c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    /// `simple`, `A`, `B`, `C`, or `custom` for user-supplied instruments.
    pub iv: String,
    pub alpha: f64,
    pub horizon: usize,
    pub n_layers: usize,
    pub n_covariates: usize,
    pub coefficient_names: Vec<String>,
    /// Group `B` first, then `F`.
    pub groups: Vec<GroupEstimate>,
}

impl EstimationResult {
    pub fn group(&self, g: Group) -> &GroupEstimate {
        &self.groups[g.index()]
    }

    pub fn n_units(&self, g: Group) -> usize {
        self.group(g).n_units
    }
}

/// Regressors, Helmert weights and transformed outcome/regressors.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub regs: RegressorPanel,
    pub weights: HelmertWeights,
    pub y_h: PeriodTensor,
    pub w_h: PeriodTensor,
    /// Per group, the regressor columns that enter its equation.
    pub columns: [Vec<usize>; 2],
}

/// All columns except neighbor averages from a source group that has no
/// edge into any member of `group` in that layer.
pub fn estimable_columns(
    data: &PanelDataset,
    nets: &NetworkStack,
    regs: &RegressorPanel,
    group: Group,
) -> Vec<usize> {
    let members = data.partition().members(group);
    let fed = |source: Group, layer: usize| {
        (0..nets.n_stored_periods()).any(|t| {
            members
                .iter()
                .any(|&i| !nets.in_neighbors(t, layer, i, source).is_empty())
        })
    };
    let mut dropped = Vec::new();
    for layer in 0..regs.n_layers() {
        for source in Group::ALL {
            if !fed(source, layer) {
                dropped.push(regs.neighbor_index(source, layer));
            }
        }
    }
    (0..regs.d_w()).filter(|j| !dropped.contains(j)).collect()
}

pub fn prepare(data: &PanelDataset, nets: &NetworkStack) -> Result<Prepared> {
    let regs = build_regressors(data, nets).at(Stage::Validation, None)?;
    let weights = HelmertWeights::new(data.horizon()).at(Stage::Transform, None)?;
    let y_h = helmert_cluster_transform(data.outcomes(), data.clusters(), &weights)
        .at(Stage::Transform, None)?;
    let w_h = helmert_cluster_transform(&regs.w, data.clusters(), &weights)
        .at(Stage::Transform, None)?;
    let columns = Group::ALL.map(|g| estimable_columns(data, nets, &regs, g));
    Ok(Prepared {
        regs,
        weights,
        y_h,
        w_h,
        columns,
    })
}

/// Known generative components, available in simulation.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    /// Idiosyncratic shocks; must cover periods `1..=T`.
    pub epsilon: &'a PeriodTensor,
    pub delta_b: &'a [f64],
    pub delta_f: &'a [f64],
}

impl Truth<'_> {
    pub fn delta(&self, g: Group) -> &[f64] {
        match g {
            Group::B => self.delta_b,
            Group::F => self.delta_f,
        }
    }
}

/// Full pipeline: transforms, instruments, moments, initial estimate, weight
/// matrix and two-step estimate, for both groups independently.
pub fn estimate(
    data: &PanelDataset,
    nets: &NetworkStack,
    option: IvOption,
    alpha: f64,
) -> Result<EstimationResult> {
    estimate_inner(data, nets, option, alpha, None)
}

/// As [`estimate`], also recording the residual-moment identity check
/// against the known shocks.
pub fn estimate_with_truth(
    data: &PanelDataset,
    nets: &NetworkStack,
    option: IvOption,
    alpha: f64,
    truth: Truth<'_>,
) -> Result<EstimationResult> {
    estimate_inner(data, nets, option, alpha, Some(truth))
}

fn estimate_inner(
    data: &PanelDataset,
    nets: &NetworkStack,
    option: IvOption,
    alpha: f64,
    truth: Option<Truth<'_>>,
) -> Result<EstimationResult> {
    let prepared = prepare(data, nets)?;
    let z = build_instruments(option, &prepared.regs, &prepared.w_h, data.clusters())
        .at(Stage::Instruments, None)?;
    let mut res = estimate_with_instruments(data, &prepared, &z, alpha)?;
    res.iv = option.label().to_string();
    if let Some(truth) = truth {
        for g in Group::ALL {
            let check = residual_identity_check(data, &prepared, &z, g, truth.delta(g), truth.epsilon)
                .at(Stage::Moments, Some(g))?;
            res.groups[g.index()].diagnostics.residual_identity_gap = Some(check.rel_error);
        }
    }
    Ok(res)
}

/// Runs the GMM steps with caller-supplied instruments.
pub fn estimate_with_instruments(
    data: &PanelDataset,
    prepared: &Prepared,
    z: &InstrumentPanel,
    alpha: f64,
) -> Result<EstimationResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability(alpha)).at(Stage::Inference, None);
    }
    let d_w = prepared.regs.d_w();
    if z.d_z() < d_w {
        return Err(Error::InvalidInput(format!(
            "{} instruments for {d_w} regressors",
            z.d_z()
        )))
        .at(Stage::Instruments, None);
    }
    let sys = TransformedSystem::new(z, prepared.y_h.clone(), prepared.w_h.clone(), data.clusters())
        .at(Stage::Moments, None)?;
    let partition = data.partition();
    let mut groups = Vec::with_capacity(2);
    for g in Group::ALL {
        let n_k = partition.count(g);
        if n_k < d_w {
            return Err(Error::DegenerateGroup {
                group: g,
                n_units: n_k,
                d_w,
            })
            .at(Stage::Moments, Some(g));
        }
        let full = moment_matrices(&sys, partition, g).at(Stage::Moments, Some(g))?;
        let cols = &prepared.columns[g.index()];
        let rows: Vec<usize> = if z.d_z() == d_w {
            cols.clone()
        } else {
            (0..z.d_z()).collect()
        };
        let m = MomentSet {
            a: full.a.select_rows(&rows),
            b: full.b.select_rows(&rows).select_columns(cols),
            ..full
        };
        let delta_tilde = initial_estimator(&m).at(Stage::InitialEstimator, Some(g))?;
        let mut tilde_full = DVector::zeros(d_w);
        for (&c, &v) in cols.iter().zip(delta_tilde.iter()) {
            tilde_full[c] = v;
        }
        let resid = sys.residuals(&tilde_full);
        let omega = weight_matrix(&sys.z_dm, &resid, partition, g).select_rows(&rows).select_columns(&rows);
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularWeight {
                condition: f64::INFINITY,
            })
            .at(Stage::WeightMatrix, Some(g));
        }
        let fit = two_step_estimate(&m, &omega).map_err(|e| match e {
            e @ Error::SingularWeight { .. } => e.at(Stage::WeightMatrix, Some(g)),
            e => e.at(Stage::TwoStep, Some(g)),
        })?;
        let est = GroupEstimate::from_fit(&m, &delta_tilde, &omega, fit, alpha)
            .at(Stage::Inference, Some(g))?;
        groups.push(if cols.len() == d_w { est } else { est.expand(cols, d_w) });
    }
    Ok(EstimationResult {
        iv: "custom".into(),
        alpha,
        horizon: data.horizon(),
        n_layers: prepared.regs.n_layers(),
        n_covariates: prepared.regs.n_covariates(),
        coefficient_names: prepared.regs.component_names(),
        groups,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualIdentityCheck {
    /// `sqrt(n_K) U_K` from the transformed structural errors.
    pub lhs: Vec<f64>,
    /// `sum_s xi_{s,K}` from the raw shocks.
    pub rhs: Vec<f64>,
    pub rel_error: f64,
}

/// Compares `sqrt(n_K) U_K`, computed from `u = y - W' delta` through the
/// transform, with `sum_{s=1}^T n_K^{-1/2} sum_i Ztilde_{i,s} eps_{i,s}` where
/// `Ztilde_{i,s} = sum_{t=1}^{min(s,T-1)} h(s,t) (Z_{i,t} - Z^C_{i,t})`.
pub fn residual_identity_check(
    data: &PanelDataset,
    prepared: &Prepared,
    z: &InstrumentPanel,
    group: Group,
    delta: &[f64],
    epsilon: &PeriodTensor,
) -> Result<ResidualIdentityCheck> {
    let horizon = data.horizon();
    let regs = &prepared.regs;
    if delta.len() != regs.d_w() {
        return Err(Error::InvalidInput(format!(
            "true coefficient vector has {} entries, expected {}",
            delta.len(),
            regs.d_w()
        )));
    }
    if !epsilon.covers(1, horizon) || epsilon.n_units() != data.n_units() {
        return Err(Error::InvalidInput("shocks must cover periods 1..=T".into()));
    }
    let n = data.n_units();
    let mut u = PeriodTensor::zeros(n, 1, horizon, 1);
    for i in 0..n {
        for t in 1..=horizon {
            let fit: f64 = regs.w.get(i, t).iter().zip(delta).map(|(w, d)| w * d).sum();
            u.get_mut(i, t)[0] = data.y(i, t) - fit;
        }
    }
    let u_h = helmert_cluster_transform(&u, data.clusters(), &prepared.weights)?;
    let z_dm = cluster_demean_tensor(&z.z, data.clusters());
    let members = data.partition().members(group);
    let n_k = members.len() as f64;
    let d_z = z.d_z();
    let w = &prepared.weights;

    let mut lhs = vec![0.0; d_z];
    let mut rhs = vec![0.0; d_z];
    for &m in members {
        for t in w.indices() {
            let uh = u_h.at(m.0, t, 0);
            for (l, zk) in lhs.iter_mut().zip(z_dm.get(m.0, t)) {
                *l += zk * uh;
            }
        }
        for s in 1..=horizon {
            let eps = epsilon.at(m.0, s, 0);
            for t in 1..=s.min(horizon - 1) {
                let h = w.get(s, t);
                for (r, zk) in rhs.iter_mut().zip(z_dm.get(m.0, t)) {
                    *r += h * zk * eps;
                }
            }
        }
    }
    let scale = n_k.sqrt().recip();
    lhs.iter_mut().for_each(|v| *v *= scale);
    rhs.iter_mut().for_each(|v| *v *= scale);
    let diff = lhs
        .iter()
        .zip(&rhs)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let size = lhs
        .iter()
        .chain(&rhs)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let rel_error = if size > 0.0 { diff / size } else { 0.0 };
    Ok(ResidualIdentityCheck { lhs, rhs, rel_error })
}
