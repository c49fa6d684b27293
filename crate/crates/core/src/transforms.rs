//! Cluster averaging, neighbor-average regressors, Helmert weights and the
//! combined forward-orthogonal-deviation / between-cluster transform.

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::panel::{validate_dataset, ClusterMap, Group, NetworkStack, PanelDataset, PeriodTensor, UnitId};

/// Mean of `values` over each unit's cluster, the unit itself included.
pub fn cluster_average(values: &[f64], clusters: &ClusterMap) -> Vec<f64> {
    assert_eq!(values.len(), clusters.n_units(), "one value per unit");
    let means: Vec<f64> = clusters
        .clusters()
        .map(|m| compensated_sum(m.iter().map(|u| values[u.0])) / m.len() as f64)
        .collect();
    (0..values.len())
        .map(|i| means[clusters.cluster_of(UnitId(i))])
        .collect()
}

/// `values - cluster_average(values)`.
pub fn cluster_demean(values: &[f64], clusters: &ClusterMap) -> Vec<f64> {
    let avg = cluster_average(values, clusters);
    values.iter().zip(avg).map(|(v, a)| v - a).collect()
}

/// Cluster-demeans every (period, component) slice of a tensor.
pub fn cluster_demean_tensor(series: &PeriodTensor, clusters: &ClusterMap) -> PeriodTensor {
    let mut out = series.clone();
    for t in series.periods() {
        for k in 0..series.dim() {
            let dm = cluster_demean(&series.column(t, k), clusters);
            out.set_column(t, k, &dm);
        }
    }
    out
}

/// Average over `N_{t-1,layer,source}(i)` of the neighbors' cluster-demeaned
/// outcomes at `t - 1`; zero for an empty neighborhood. The cluster mean
/// subtracted is the one of the neighbor's own cluster.
pub fn neighbor_average_regressor(
    data: &PanelDataset,
    nets: &NetworkStack,
    t: usize,
    layer: usize,
    source: Group,
) -> Result<Vec<f64>> {
    if t == 0 || t > data.horizon() {
        return Err(Error::InvalidInput(format!(
            "period {t} outside 1..={}",
            data.horizon()
        )));
    }
    if layer >= nets.n_layers() {
        return Err(Error::InvalidInput(format!(
            "layer {layer} outside 0..{}",
            nets.n_layers()
        )));
    }
    let demeaned = cluster_demean(&data.outcomes_at(t - 1), data.clusters());
    Ok(neighbor_means(&demeaned, nets, t - 1, layer, source))
}

pub(crate) fn neighbor_means(
    demeaned: &[f64],
    nets: &NetworkStack,
    net_index: usize,
    layer: usize,
    source: Group,
) -> Vec<f64> {
    (0..demeaned.len())
        .map(|i| {
            let nbrs = nets.in_neighbors(net_index, layer, UnitId(i), source);
            if nbrs.is_empty() {
                0.0
            } else {
                nbrs.iter().map(|j| demeaned[j.0]).sum::<f64>() / nbrs.len() as f64
            }
        })
        .collect()
}

/// Stacked regressors `W_{i,t}` for `t = 1..=T`.
///
/// Component order: lagged own outcome, then the bank-source neighbor
/// averages for layers `1..=L`, then the firm-source neighbor averages for
/// layers `1..=L`, then the `p` covariates. `d_W = 1 + 2L + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorPanel {
    pub w: PeriodTensor,
    n_layers: usize,
    n_covariates: usize,
}

impl RegressorPanel {
    pub fn d_w(&self) -> usize {
        self.w.dim()
    }
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }
    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub const LAGGED_OUTCOME: usize = 0;

    /// Position of the neighbor average from `source` units through `layer`.
    pub fn neighbor_index(&self, source: Group, layer: usize) -> usize {
        regressor_layout::neighbor_index(self.n_layers, source, layer)
    }

    pub fn covariate_index(&self, k: usize) -> usize {
        1 + 2 * self.n_layers + k
    }

    pub fn component_names(&self) -> Vec<String> {
        regressor_layout::names(self.n_layers, self.n_covariates)
    }
}

/// Component layout of `W`, shared with the reporting code.
pub mod regressor_layout {
    use crate::panel::Group;

    pub fn d_w(n_layers: usize, p: usize) -> usize {
        1 + 2 * n_layers + p
    }

    pub fn neighbor_index(n_layers: usize, source: Group, layer: usize) -> usize {
        match source {
            Group::B => 1 + layer,
            Group::F => 1 + n_layers + layer,
        }
    }

    pub fn names(n_layers: usize, p: usize) -> Vec<String> {
        let mut names = vec!["y_lag".to_string()];
        names.extend((1..=n_layers).map(|l| format!("nbr_B_l{l}")));
        names.extend((1..=n_layers).map(|l| format!("nbr_F_l{l}")));
        names.extend((1..=p).map(|k| format!("x{k}")));
        names
    }
}

/// Assembles `W_{i,t}` for every unit and `t = 1..=T`. Fails if the dataset
/// has error-level validation violations.
pub fn build_regressors(data: &PanelDataset, nets: &NetworkStack) -> Result<RegressorPanel> {
    validate_dataset(data, nets).into_result()?;
    let n = data.n_units();
    let horizon = data.horizon();
    let n_layers = nets.n_layers();
    let p = data.n_covariates();
    let d_w = regressor_layout::d_w(n_layers, p);
    let mut w = PeriodTensor::zeros(n, 1, horizon, d_w);
    for t in 1..=horizon {
        let lagged = data.outcomes_at(t - 1);
        let demeaned = cluster_demean(&lagged, data.clusters());
        w.set_column(t, 0, &lagged);
        for layer in 0..n_layers {
            for source in Group::ALL {
                let col = neighbor_means(&demeaned, nets, t - 1, layer, source);
                w.set_column(t, regressor_layout::neighbor_index(n_layers, source, layer), &col);
            }
        }
        for i in 0..n {
            w.get_mut(i, t)[1 + 2 * n_layers..].copy_from_slice(data.x(i, t));
        }
    }
    Ok(RegressorPanel {
        w,
        n_layers,
        n_covariates: p,
    })
}

/// Forward orthogonal deviation weights `h(s, t)` for `1 <= t <= T-1`,
/// `t <= s <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct HelmertWeights {
    horizon: usize,
}

impl HelmertWeights {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::HorizonTooShort(horizon));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `h(s, t)`; zero outside `t <= s <= T`, `1 <= t <= T - 1`.
    pub fn get(&self, s: usize, t: usize) -> f64 {
        if t == 0 || t >= self.horizon || s < t || s > self.horizon {
            return 0.0;
        }
        let remaining = (self.horizon - t) as f64;
        if s == t {
            (remaining / (remaining + 1.0)).sqrt()
        } else {
            -1.0 / (remaining * (remaining + 1.0)).sqrt()
        }
    }

    /// Helmert indices `1..=T-1`.
    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.horizon - 1
    }
}

/// `x^H_{i,t} = sum_{s=t}^T h(s,t) (x_{i,s} - x^C_{i,s})` for `t = 1..=T-1`.
///
/// `series` must cover periods `1..=T`; extra periods (such as the outcome's
/// period 0) are ignored.
pub fn helmert_cluster_transform(
    series: &PeriodTensor,
    clusters: &ClusterMap,
    weights: &HelmertWeights,
) -> Result<PeriodTensor> {
    let horizon = weights.horizon();
    if series.n_units() != clusters.n_units() {
        return Err(Error::InvalidInput(format!(
            "series has {} units, cluster map {}",
            series.n_units(),
            clusters.n_units()
        )));
    }
    if !series.covers(1, horizon) {
        return Err(Error::InvalidInput(format!(
            "series covers periods {}..={}, transform needs 1..={horizon}",
            series.first_period(),
            series.last_period()
        )));
    }
    let n = series.n_units();
    let dim = series.dim();
    let mut demeaned = PeriodTensor::zeros(n, 1, horizon, dim);
    for s in 1..=horizon {
        for k in 0..dim {
            demeaned.set_column(s, k, &cluster_demean(&series.column(s, k), clusters));
        }
    }
    let mut out = PeriodTensor::zeros(n, 1, horizon - 1, dim);
    for i in 0..n {
        for t in weights.indices() {
            let row = out.get_mut(i, t);
            for s in t..=horizon {
                let h = weights.get(s, t);
                for (o, v) in row.iter_mut().zip(demeaned.get(i, s)) {
                    *o += h * v;
                }
            }
        }
    }
    Ok(out)
}
