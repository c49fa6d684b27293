//! Barabási–Albert network stacks, the two-group data-generating process and
//! the Monte Carlo driver for size, power and familywise-error experiments.
//!
//! Randomness comes from a single root seed. Replication `r` uses
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `r`, so any
//! replication can be reproduced on its own and results do not depend on how
//! replications are scheduled across threads.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::estimate;
use crate::inference::{normal_quantile, squared_t_stat, stepdown, familywise_error, Hypothesis, StepdownDecision};
use crate::instruments::IvOption;
use crate::panel::{
    ClusterMap, Edge, Group, GroupPartition, NetworkStack, PanelDataset, PeriodTensor, UnitId,
};
use crate::transforms::{cluster_demean, neighbor_means, regressor_layout};

/// Rejection levels always reported alongside the configured one.
pub const REPORT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Structural coefficients of the two-group model. `beta_xy` is the effect of
/// source group `x` on target group `y`; `gamma_*` multiplies every covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub alpha_b: f64,
    pub alpha_f: f64,
    pub beta_bb: f64,
    pub beta_bf: f64,
    pub beta_fb: f64,
    pub beta_ff: f64,
    pub gamma_b: f64,
    pub gamma_f: f64,
}

impl TrueParams {
    /// Every autoregressive and spillover coefficient set to `value`, covariate
    /// coefficients 1.
    pub fn common(value: f64) -> Self {
        Self {
            alpha_b: value,
            alpha_f: value,
            beta_bb: value,
            beta_bf: value,
            beta_fb: value,
            beta_ff: value,
            gamma_b: 1.0,
            gamma_f: 1.0,
        }
    }

    /// Order: `alpha_b, alpha_f, beta_bb, beta_bf, beta_fb, beta_ff, gamma_b, gamma_f`.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [alpha_b, alpha_f, beta_bb, beta_bf, beta_fb, beta_ff, gamma_b, gamma_f] => Ok(Self {
                alpha_b,
                alpha_f,
                beta_bb,
                beta_bf,
                beta_fb,
                beta_ff,
                gamma_b,
                gamma_f,
            }),
            _ => Err(Error::InvalidInput(format!(
                "expected 8 parameters, got {}",
                v.len()
            ))),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.alpha_b,
            self.alpha_f,
            self.beta_bb,
            self.beta_bf,
            self.beta_fb,
            self.beta_ff,
            self.gamma_b,
            self.gamma_f,
        ]
    }

    /// `(alpha, beta_from_B, beta_from_F, gamma)` for the target group.
    fn equation(&self, g: Group) -> (f64, f64, f64, f64) {
        match g {
            Group::B => (self.alpha_b, self.beta_bb, self.beta_fb, self.gamma_b),
            Group::F => (self.alpha_f, self.beta_bf, self.beta_ff, self.gamma_f),
        }
    }

    /// Coefficient vector of group `g` in regressor order with one layer and
    /// `p` covariates.
    pub fn delta(&self, g: Group, p: usize) -> Vec<f64> {
        let (a, from_b, from_f, gamma) = self.equation(g);
        let mut d = vec![a, from_b, from_f];
        d.extend(std::iter::repeat(gamma).take(p));
        d
    }

    /// Coefficient tested by `h`.
    pub fn beta(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::FB => self.beta_fb,
            Hypothesis::BF => self.beta_bf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_per_group: usize,
    pub horizon: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_clusters")]
    pub clusters_total: usize,
    pub ba_m: usize,
    pub params: TrueParams,
    #[serde(default = "default_iv")]
    pub iv_option: IvOption,
    #[serde(default)]
    pub seed: u64,
    /// Forces every idiosyncratic shock to zero.
    #[serde(default)]
    pub noiseless: bool,
}

fn default_p() -> usize {
    3
}
fn default_clusters() -> usize {
    10
}
fn default_iv() -> IvOption {
    IvOption::ProjA
}

impl SimulationConfig {
    pub fn new(n_per_group: usize, horizon: usize, ba_m: usize, params: TrueParams) -> Self {
        Self {
            n_per_group,
            horizon,
            p: default_p(),
            clusters_total: default_clusters(),
            ba_m,
            params,
            iv_option: default_iv(),
            seed: 0,
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.horizon < 2 {
            return Err(Error::HorizonTooShort(self.horizon));
        }
        if self.ba_m == 0 || self.n_per_group <= self.ba_m {
            return bad(format!(
                "need n_per_group > ba_m >= 1, got n_per_group {} and ba_m {}",
                self.n_per_group, self.ba_m
            ));
        }
        if self.clusters_total == 0 || self.clusters_total % 2 != 0 {
            return bad(format!(
                "clusters_total must be positive and even, got {}",
                self.clusters_total
            ));
        }
        let per_group = self.clusters_total / 2;
        if self.n_per_group % per_group != 0 {
            return bad(format!(
                "n_per_group {} is not divisible by {per_group} clusters per group",
                self.n_per_group
            ));
        }
        if self.p == 0 {
            return bad("at least one covariate is required".into());
        }
        if self.params.to_vec().iter().any(|v| !v.is_finite()) {
            return bad("true parameters must be finite".into());
        }
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        2 * self.n_per_group
    }

    pub fn clusters_per_group(&self) -> usize {
        self.clusters_total / 2
    }
}

/// One draw of the data-generating process with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpDraw {
    pub data: PanelDataset,
    pub nets: NetworkStack,
    pub params: TrueParams,
    /// Idiosyncratic shocks for periods `0..=T`.
    pub epsilon: PeriodTensor,
    /// Unit fixed effects.
    pub v: Vec<f64>,
    /// Cluster time effects; `pi[t - 1][c]` for period `t` in `1..=T`.
    pub pi: Vec<Vec<f64>>,
}

/// Undirected preferential-attachment graph on `n_nodes` nodes: a clique on
/// the first `m + 1` nodes, then each new node links to `m` distinct existing
/// nodes drawn with probability proportional to their degree.
pub fn generate_ba_graph<R: Rng + ?Sized>(
    n_nodes: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if m == 0 || n_nodes <= m {
        return Err(Error::InvalidInput(format!(
            "preferential attachment needs n_nodes > m >= 1, got n_nodes {n_nodes}, m {m}"
        )));
    }
    let mut edges = Vec::with_capacity(m * (m + 1) / 2 + m * (n_nodes - m - 1));
    // Each node appears once per incident edge end.
    let mut ends: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for a in 0..=m {
        for b in (a + 1)..=m {
            edges.push((a, b));
            ends.push(a);
            ends.push(b);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for node in (m + 1)..n_nodes {
        targets.clear();
        while targets.len() < m {
            let cand = ends[rng.random_range(0..ends.len())];
            if !targets.contains(&cand) {
                targets.push(cand);
            }
        }
        for &t in &targets {
            edges.push((t, node));
            ends.push(t);
            ends.push(node);
        }
    }
    Ok(edges)
}

/// Four independent preferential-attachment graphs, one per (source, target)
/// group block, read as bidirectional influence within the block. Group `B`
/// units are `0..n`, group `F` units `n..2n`. The stack is static.
pub fn assemble_network_stack<R: Rng + ?Sized>(
    n_per_group: usize,
    ba_m: usize,
    rng: &mut R,
) -> Result<NetworkStack> {
    let n = n_per_group;
    let partition = two_group_partition(n)?;
    let offset = |g: Group| match g {
        Group::B => 0,
        Group::F => n,
    };
    let mut edges = Vec::new();
    for (source, target) in [
        (Group::B, Group::B),
        (Group::B, Group::F),
        (Group::F, Group::B),
        (Group::F, Group::F),
    ] {
        for (a, b) in generate_ba_graph(n, ba_m, rng)? {
            for (s, d) in [(a, b), (b, a)] {
                edges.push(Edge {
                    layer: 0,
                    period: None,
                    src: UnitId(offset(source) + s),
                    dst: UnitId(offset(target) + d),
                });
            }
        }
    }
    NetworkStack::from_edges(&partition, 1, 0, &edges)
}

fn two_group_partition(n_per_group: usize) -> Result<GroupPartition> {
    GroupPartition::new(
        std::iter::repeat(Group::B)
            .take(n_per_group)
            .chain(std::iter::repeat(Group::F).take(n_per_group))
            .collect(),
    )
}

/// Equal-size contiguous clusters within each group.
fn cluster_labels(config: &SimulationConfig) -> Vec<usize> {
    let per_group = config.clusters_per_group();
    let size = config.n_per_group / per_group;
    (0..config.n_units())
        .map(|i| {
            let (g, j) = if i < config.n_per_group {
                (0, i)
            } else {
                (1, i - config.n_per_group)
            };
            g * per_group + j / size
        })
        .collect()
}

fn root_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + z
}

/// Replication 0 of `config`.
pub fn simulate_panel(config: &SimulationConfig) -> Result<DgpDraw> {
    simulate_replication(config, 0)
}

/// Draws replication `rep`: networks, then covariates, fixed effects,
/// cluster effects and shocks, then iterates the outcome equations forward
/// from `y_0 = v + eps_0`.
pub fn simulate_replication(config: &SimulationConfig, rep: u64) -> Result<DgpDraw> {
    config.validate()?;
    let mut rng = root_rng(config.seed, rep);
    let n = config.n_units();
    let horizon = config.horizon;
    let p = config.p;

    let nets = assemble_network_stack(config.n_per_group, config.ba_m, &mut rng)?;
    let partition = two_group_partition(config.n_per_group)?;
    let clusters = ClusterMap::new(cluster_labels(config))?;

    let x: Vec<f64> = (0..n * horizon * p).map(|_| normal(&mut rng, 1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| normal(&mut rng, 1.0)).collect();
    let pi: Vec<Vec<f64>> = (0..horizon)
        .map(|_| {
            (0..config.clusters_total)
                .map(|_| normal(&mut rng, 1.0))
                .collect()
        })
        .collect();
    let mut eps: Vec<f64> = (0..n * (horizon + 1)).map(|_| normal(&mut rng, 0.0)).collect();
    if config.noiseless {
        eps.iter_mut().for_each(|e| *e = 0.0);
    }
    let epsilon = PeriodTensor::from_vec(n, 0, horizon + 1, 1, eps)?;

    let mut y = PeriodTensor::zeros(n, 0, horizon + 1, 1);
    for i in 0..n {
        y.get_mut(i, 0)[0] = v[i] + epsilon.at(i, 0, 0);
    }
    let eqs = [config.params.equation(Group::B), config.params.equation(Group::F)];
    for t in 1..=horizon {
        let lagged = y.column(t - 1, 0);
        let demeaned = cluster_demean(&lagged, &clusters);
        let from_b = neighbor_means(&demeaned, &nets, t - 1, 0, Group::B);
        let from_f = neighbor_means(&demeaned, &nets, t - 1, 0, Group::F);
        for i in 0..n {
            let (a, bb, bf, gamma) = eqs[partition.group_of(UnitId(i)).index()];
            let xs: f64 = x[(i * horizon + t - 1) * p..(i * horizon + t) * p].iter().sum();
            let c = clusters.cluster_of(UnitId(i));
            y.get_mut(i, t)[0] = a * lagged[i]
                + bb * from_b[i]
                + bf * from_f[i]
                + gamma * xs
                + v[i]
                + pi[t - 1][c]
                + epsilon.at(i, t, 0);
        }
    }

    let data = PanelDataset::new(horizon, p, y.as_slice().to_vec(), x, partition, clusters)?;
    Ok(DgpDraw {
        data,
        nets,
        params: config.params,
        epsilon,
        v,
        pi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub reps: usize,
    pub alpha: f64,
    /// `H0: beta_FB = null_value`.
    pub null_value: f64,
    /// Added to the configured `beta_FB` when generating data.
    pub delta_shift: f64,
    /// Worker threads; 0 uses the rayon default. Not serialized, since it
    /// does not affect results.
    #[serde(skip_serializing, default)]
    pub jobs: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            reps: 500,
            alpha: 0.05,
            null_value: 0.0,
            delta_shift: 0.0,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRate {
    pub level: f64,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub config: SimulationConfig,
    pub settings: McSettings,
    /// `beta_FB` used to generate the data.
    pub true_beta_fb: f64,
    pub n_success: usize,
    pub n_failed: usize,
    /// Failure counts keyed by pipeline stage.
    pub failures: BTreeMap<String, usize>,
    /// Share of successful replications rejecting `beta_FB = null_value` at `alpha`.
    pub rejection_rate: f64,
    pub rejection_by_level: Vec<LevelRate>,
    /// Hypotheses of no cross-group spillover that are true in the design.
    pub true_nulls: Vec<Hypothesis>,
    /// Share of successful replications whose step-down decision rejects a true null.
    pub fwer: f64,
    pub mean_beta_fb: f64,
    pub sd_beta_fb: f64,
    pub mean_beta_bf: f64,
    pub sd_beta_bf: f64,
}

#[derive(Debug, Clone)]
struct RepOutcome {
    beta_fb: f64,
    beta_bf: f64,
    /// `|beta_FB - null| / se`.
    abs_t: f64,
    decision: StepdownDecision,
}

fn run_replication(
    config: &SimulationConfig,
    settings: &McSettings,
    rep: u64,
) -> std::result::Result<RepOutcome, String> {
    let stage = |e: &Error| e.stage().map_or("simulation", |s| s.as_str()).to_string();
    let draw = simulate_replication(config, rep).map_err(|e| stage(&e))?;
    let res = estimate(&draw.data, &draw.nets, config.iv_option, settings.alpha)
        .map_err(|e| stage(&e))?;
    let idx_fb = regressor_layout::neighbor_index(1, Group::F, 0);
    let idx_bf = regressor_layout::neighbor_index(1, Group::B, 0);
    let inference = |e: Error| stage(&e.at(crate::error::Stage::Inference, None));
    let q_null = squared_t_stat(&res, Group::B, idx_fb, settings.null_value).map_err(inference)?;
    let q_fb = squared_t_stat(&res, Group::B, idx_fb, 0.0).map_err(inference)?;
    let q_bf = squared_t_stat(&res, Group::F, idx_bf, 0.0).map_err(inference)?;
    let decision = stepdown(q_fb, q_bf, settings.alpha).map_err(inference)?;
    Ok(RepOutcome {
        beta_fb: res.group(Group::B).delta_hat[idx_fb],
        beta_bf: res.group(Group::F).delta_hat[idx_bf],
        abs_t: q_null.sqrt(),
        decision,
    })
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs `settings.reps` replications of `config` with `beta_FB` shifted by
/// `delta_shift`, testing `beta_FB = null_value` and running the step-down
/// test of no cross-group spillover in either direction.
pub fn mc_study(config: &SimulationConfig, settings: &McSettings) -> Result<McReport> {
    config.validate()?;
    if settings.reps == 0 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(Error::InvalidProbability(settings.alpha));
    }
    let mut shifted = config.clone();
    shifted.params.beta_fb += settings.delta_shift;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<std::result::Result<RepOutcome, String>> = pool.install(|| {
        (0..settings.reps as u64)
            .into_par_iter()
            .map(|rep| run_replication(&shifted, settings, rep))
            .collect()
    });

    let mut failures = BTreeMap::new();
    let mut ok = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(stage) => *failures.entry(stage).or_insert(0) += 1,
        }
    }
    let n_success = ok.len();
    if n_success == 0 {
        log::warn!("all {} replications failed", settings.reps);
    }
    let rate = |level: f64| -> Result<f64> {
        let crit = normal_quantile(1.0 - level / 2.0)?;
        Ok(ok.iter().filter(|r| r.abs_t > crit).count() as f64 / n_success as f64)
    };
    let true_nulls: Vec<Hypothesis> = Hypothesis::ALL
        .into_iter()
        .filter(|&h| shifted.params.beta(h) == 0.0)
        .collect();
    let fwer = ok
        .iter()
        .filter(|r| familywise_error(&r.decision, &true_nulls))
        .count() as f64
        / n_success as f64;
    let fb: Vec<f64> = ok.iter().map(|r| r.beta_fb).collect();
    let bf: Vec<f64> = ok.iter().map(|r| r.beta_bf).collect();
    let (mean_beta_fb, sd_beta_fb) = mean_sd(&fb);
    let (mean_beta_bf, sd_beta_bf) = mean_sd(&bf);

    Ok(McReport {
        config: config.clone(),
        settings: *settings,
        true_beta_fb: shifted.params.beta_fb,
        n_success,
        n_failed: settings.reps - n_success,
        failures,
        rejection_rate: rate(settings.alpha)?,
        rejection_by_level: REPORT_LEVELS
            .iter()
            .map(|&level| {
                Ok(LevelRate {
                    level,
                    rejection_rate: rate(level)?,
                })
            })
            .collect::<Result<_>>()?,
        true_nulls,
        fwer,
        mean_beta_fb,
        sd_beta_fb,
        mean_beta_bf,
        sd_beta_bf,
    })
}

/// Empirical familywise error rate of the step-down test over `reps`
/// replications of `config`.
pub fn fwer_experiment(config: &SimulationConfig, reps: usize, alpha: f64, jobs: usize) -> Result<f64> {
    let settings = McSettings {
        reps,
        alpha,
        jobs,
        ..McSettings::default()
    };
    Ok(mc_study(config, &settings)?.fwer)
}
