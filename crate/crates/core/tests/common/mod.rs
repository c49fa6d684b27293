//! Naive reference implementations used as independent oracles. Everything
//! here works from raw nested vectors and loops directly over the defining
//! sums; nothing calls into the library's transform or estimator code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netspill::{ClusterMap, Edge, Group, GroupPartition, NetworkStack, PanelDataset, UnitId};

/// A small panel in plain nested vectors.
#[derive(Debug, Clone)]
pub struct RawPanel {
    pub horizon: usize,
    pub p: usize,
    /// `y[i][t]`, `t = 0..=T`.
    pub y: Vec<Vec<f64>>,
    /// `x[i][t - 1][k]`, `t = 1..=T`.
    pub x: Vec<Vec<Vec<f64>>>,
    /// 0 for group B, 1 for group F.
    pub group: Vec<usize>,
    pub cluster: Vec<usize>,
    /// Static single-layer edges `(src, dst)`.
    pub edges: Vec<(usize, usize)>,
}

impl RawPanel {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d_w(&self) -> usize {
        3 + self.p
    }

    /// Random instance: groups `[B; n_b] ++ [F; n - n_b]`, cluster labels
    /// as given, each ordered pair linked with probability `link_prob`.
    pub fn random(
        seed: u64,
        horizon: usize,
        p: usize,
        n_b: usize,
        cluster: Vec<usize>,
        link_prob: f64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cluster.len();
        let mut draw = || rng.random_range(-2.0..2.0);
        let y = (0..n).map(|_| (0..=horizon).map(|_| draw()).collect()).collect();
        let x = (0..n)
            .map(|_| (0..horizon).map(|_| (0..p).map(|_| draw()).collect()).collect())
            .collect();
        let mut edges = Vec::new();
        for src in 0..n {
            for dst in 0..n {
                if src != dst && rng.random_bool(link_prob) {
                    edges.push((src, dst));
                }
            }
        }
        Self {
            horizon,
            p,
            y,
            x,
            group: (0..n).map(|i| usize::from(i >= n_b)).collect(),
            cluster,
            edges,
        }
    }

    pub fn to_dataset(&self) -> (PanelDataset, NetworkStack) {
        let groups: Vec<Group> = self
            .group
            .iter()
            .map(|&g| if g == 0 { Group::B } else { Group::F })
            .collect();
        let partition = GroupPartition::new(groups).unwrap();
        let clusters = ClusterMap::new(self.cluster.clone()).unwrap();
        let y: Vec<f64> = self.y.iter().flatten().copied().collect();
        let x: Vec<f64> = self.x.iter().flatten().flatten().copied().collect();
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|&(s, d)| Edge {
                layer: 0,
                period: None,
                src: UnitId(s),
                dst: UnitId(d),
            })
            .collect();
        let nets = NetworkStack::from_edges(&partition, 1, self.horizon, &edges).unwrap();
        let data = PanelDataset::new(self.horizon, self.p, y, x, partition, clusters).unwrap();
        (data, nets)
    }

    /// Mean of `f(j)` over units sharing `i`'s cluster.
    pub fn cluster_mean(&self, i: usize, f: impl Fn(usize) -> f64) -> f64 {
        let mut sum = 0.0;
        let mut count = 0.0;
        for j in 0..self.n() {
            if self.cluster[j] == self.cluster[i] {
                sum += f(j);
                count += 1.0;
            }
        }
        sum / count
    }

    /// `W[i][t - 1]` for `t = 1..=T`.
    pub fn regressors(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.n();
        (0..n)
            .map(|i| {
                (1..=self.horizon)
                    .map(|t| {
                        let mut w = vec![self.y[i][t - 1]];
                        for source in 0..2 {
                            let mut sum = 0.0;
                            let mut count = 0usize;
                            for &(s, d) in &self.edges {
                                if d == i && self.group[s] == source {
                                    let mean = self.cluster_mean(s, |j| self.y[j][t - 1]);
                                    sum += self.y[s][t - 1] - mean;
                                    count += 1;
                                }
                            }
                            w.push(if count == 0 { 0.0 } else { sum / count as f64 });
                        }
                        w.extend_from_slice(&self.x[i][t - 1]);
                        w
                    })
                    .collect()
            })
            .collect()
    }
}

/// Forward orthogonal deviation weight written out from its definition.
pub fn helmert(s: usize, t: usize, horizon: usize) -> f64 {
    let rem = (horizon - t) as f64;
    if s == t {
        (rem / (rem + 1.0)).sqrt()
    } else if s > t {
        -1.0 / (rem * (rem + 1.0)).sqrt()
    } else {
        0.0
    }
}

/// `x^H[i][t - 1][k]` for `t = 1..=T-1`, from `series[i][s - 1][k]`, `s = 1..=T`.
pub fn helmert_cluster(raw: &RawPanel, series: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let horizon = raw.horizon;
    let dim = series[0][0].len();
    (0..raw.n())
        .map(|i| {
            (1..horizon)
                .map(|t| {
                    (0..dim)
                        .map(|k| {
                            let mut acc = 0.0;
                            for s in t..=horizon {
                                let mean = raw.cluster_mean(i, |j| series[j][s - 1][k]);
                                acc += helmert(s, t, horizon) * (series[i][s - 1][k] - mean);
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Outcomes for periods `1..=T` as a one-component series.
pub fn outcome_series(raw: &RawPanel) -> Vec<Vec<Vec<f64>>> {
    raw.y
        .iter()
        .map(|row| row[1..].iter().map(|&v| vec![v]).collect())
        .collect()
}

/// `z[i][t - 1]`, `t = 1..=T-1`, minus its cluster mean.
pub fn demean_instruments(raw: &RawPanel, z: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    (0..raw.n())
        .map(|i| {
            (0..z[i].len())
                .map(|t| {
                    (0..z[i][t].len())
                        .map(|k| z[i][t][k] - raw.cluster_mean(i, |j| z[j][t][k]))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `A` and `B` written as the double sum over Helmert index and future
/// period, with cluster means recomputed inside the loop.
pub fn moments(
    raw: &RawPanel,
    z: &[Vec<Vec<f64>>],
    group: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w = raw.regressors();
    let horizon = raw.horizon;
    let d_z = z[0][0].len();
    let d_w = raw.d_w();
    let members: Vec<usize> = (0..raw.n()).filter(|&i| raw.group[i] == group).collect();
    let n_k = members.len() as f64;
    let mut a = vec![0.0; d_z];
    let mut b = vec![vec![0.0; d_w]; d_z];
    for t in 1..horizon {
        for &i in &members {
            for s in t..=horizon {
                let h = helmert(s, t, horizon);
                let y_dm = raw.y[i][s] - raw.cluster_mean(i, |j| raw.y[j][s]);
                for r in 0..d_z {
                    let z_dm = z[i][t - 1][r] - raw.cluster_mean(i, |j| z[j][t - 1][r]);
                    a[r] += h * z_dm * y_dm / n_k;
                    for c in 0..d_w {
                        let w_dm = w[i][s - 1][c] - raw.cluster_mean(i, |j| w[j][s - 1][c]);
                        b[r][c] += h * z_dm * w_dm / n_k;
                    }
                }
            }
        }
    }
    (a, b)
}

/// `Omega` from residuals at `delta`.
pub fn omega(raw: &RawPanel, z: &[Vec<Vec<f64>>], delta: &[f64], group: usize) -> Vec<Vec<f64>> {
    let w = raw.regressors();
    let horizon = raw.horizon;
    let d_z = z[0][0].len();
    let members: Vec<usize> = (0..raw.n()).filter(|&i| raw.group[i] == group).collect();
    let mut out = vec![vec![0.0; d_z]; d_z];
    for &i in &members {
        let mut g = vec![0.0; d_z];
        for t in 1..horizon {
            let mut u_h = 0.0;
            for s in t..=horizon {
                let y_dm = raw.y[i][s] - raw.cluster_mean(i, |j| raw.y[j][s]);
                let mut fit = 0.0;
                for (c, d) in delta.iter().enumerate() {
                    let w_dm = w[i][s - 1][c] - raw.cluster_mean(i, |j| w[j][s - 1][c]);
                    fit += w_dm * d;
                }
                u_h += helmert(s, t, horizon) * (y_dm - fit);
            }
            for r in 0..d_z {
                let z_dm = z[i][t - 1][r] - raw.cluster_mean(i, |j| z[j][t - 1][r]);
                g[r] += z_dm * u_h;
            }
        }
        for r in 0..d_z {
            for c in 0..d_z {
                out[r][c] += g[r] * g[c] / members.len() as f64;
            }
        }
    }
    out
}

/// Gaussian elimination with partial pivoting on a copy of `a`.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = m[r][n];
        for c in (r + 1)..n {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Some(x)
}

/// Basis vector written out per projection option (1 = A, 2 = B, 3 = C).
pub fn basis(option: u8, w: &[f64], w_prev: Option<&[f64]>) -> Vec<f64> {
    let mut phi = w.to_vec();
    if option >= 2 {
        phi.extend(w.iter().map(|v| v * v));
    }
    if option == 3 {
        if let Some(prev) = w_prev {
            phi.extend(prev.iter().map(|v| v * v));
        }
    }
    phi
}

/// Projection instruments from normal equations. `None` if a Gram matrix
/// is numerically singular.
pub fn projection_instruments(raw: &RawPanel, option: u8) -> Option<Vec<Vec<Vec<f64>>>> {
    let w = raw.regressors();
    let w_h = helmert_cluster(raw, &w);
    let n = raw.n();
    let d_w = raw.d_w();
    let w_dm: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            (0..raw.horizon)
                .map(|t| {
                    (0..d_w)
                        .map(|k| w[i][t][k] - raw.cluster_mean(i, |j| w[j][t][k]))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut z = vec![vec![Vec::new(); raw.horizon - 1]; n];
    for t in 1..raw.horizon {
        let phis: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let prev = (t > 1).then(|| w_dm[i][t - 2].as_slice());
                basis(option, &w_dm[i][t - 1], prev)
            })
            .collect();
        let d_r = phis[0].len();
        let mut gram = vec![vec![0.0; d_r]; d_r];
        for phi in &phis {
            for a in 0..d_r {
                for b in 0..d_r {
                    gram[a][b] += phi[a] * phi[b];
                }
            }
        }
        // Rank check through the pivots of an elimination.
        let mut diag_ok = true;
        {
            let mut m = gram.clone();
            let scale = m.iter().enumerate().map(|(k, r)| r[k]).fold(0.0_f64, f64::max);
            for col in 0..d_r {
                let piv = (col..d_r)
                    .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
                    .unwrap();
                if m[piv][col].abs() <= 1e-10 * scale {
                    diag_ok = false;
                    break;
                }
                m.swap(col, piv);
                for r in (col + 1)..d_r {
                    let f = m[r][col] / m[col][col];
                    for c in col..d_r {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        if !diag_ok {
            return None;
        }
        for i in 0..n {
            let sol = gauss_solve(&gram, &phis[i])?;
            let zi: Vec<f64> = (0..d_w)
                .map(|k| {
                    let mut v = 0.0;
                    for j in 0..n {
                        let proj: f64 = phis[j].iter().zip(&sol).map(|(a, b)| a * b).sum();
                        v += w_h[j][t - 1][k] * proj;
                    }
                    v
                })
                .collect();
            z[i][t - 1] = zi;
        }
    }
    Some(z)
}

/// Simple instruments: `W` for `t = 1..=T-1`.
pub fn simple_instruments(raw: &RawPanel) -> Vec<Vec<Vec<f64>>> {
    raw.regressors()
        .into_iter()
        .map(|mut rows| {
            rows.truncate(raw.horizon - 1);
            rows
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Upper-tail standard normal probability by composite Gauss–Legendre
/// quadrature of the density over `[0, x]`.
pub fn normal_interval_prob(x: f64) -> f64 {
    // 10-point Gauss–Legendre nodes and weights on [-1, 1].
    const NODES: [f64; 5] = [
        0.148_874_338_981_631_2,
        0.433_395_394_129_247_2,
        0.679_409_568_299_024_4,
        0.865_063_366_688_984_5,
        0.973_906_528_517_171_7,
    ];
    const WEIGHTS: [f64; 5] = [
        0.295_524_224_714_752_9,
        0.269_266_719_309_996_4,
        0.219_086_362_515_982_0,
        0.149_451_349_150_580_6,
        0.066_671_344_308_688_1,
    ];
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let panels = 400;
    let h = x / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (node, weight) in NODES.iter().zip(WEIGHTS) {
            total += weight * half * (density(mid - half * node) + density(mid + half * node));
        }
    }
    total
}

/// `P(chi2(1) <= c) = 2 * P(0 <= Z <= sqrt(c))`.
pub fn chi2_1_cdf_oracle(c: f64) -> f64 {
    2.0 * normal_interval_prob(c.sqrt())
}
