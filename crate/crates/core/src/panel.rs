//! Panel data model: units, the two-group partition, the cluster map, the
//! outcome/covariate panel and the stack of directed networks.
//!
//! Time indexing is shared by every module. Outcomes exist for periods
//! `0..=T`, covariates and estimating equations for `1..=T`. A network is
//! indexed by the period of the lagged outcome it carries, so the network at
//! index `t - 1` drives outcomes at `t`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense unit index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub usize);

impl UnitId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The two unit groups. `B` ("banks") and `F` ("firms") in the two-group model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    B,
    F,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::B, Group::F];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Group::B => 0,
            Group::F => 1,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::B => Group::F,
            Group::F => Group::B,
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s.trim() {
            "B" | "b" => Some(Group::B),
            "F" | "f" => Some(Group::F),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::B => "B",
            Group::F => "F",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    group_of: Vec<Group>,
    members: [Vec<UnitId>; 2],
}

impl GroupPartition {
    pub fn new(group_of: Vec<Group>) -> Result<Self> {
        let mut members = [Vec::new(), Vec::new()];
        for (i, g) in group_of.iter().enumerate() {
            members[g.index()].push(UnitId(i));
        }
        if members[0].is_empty() || members[1].is_empty() {
            return Err(Error::InvalidInput(format!(
                "both groups must be nonempty (n_B = {}, n_F = {})",
                members[0].len(),
                members[1].len()
            )));
        }
        Ok(Self { group_of, members })
    }

    #[inline]
    pub fn group_of(&self, i: UnitId) -> Group {
        self.group_of[i.0]
    }

    pub fn groups(&self) -> &[Group] {
        &self.group_of
    }

    pub fn members(&self, g: Group) -> &[UnitId] {
        &self.members[g.index()]
    }

    pub fn count(&self, g: Group) -> usize {
        self.members[g.index()].len()
    }

    pub fn n_units(&self) -> usize {
        self.group_of.len()
    }
}

/// Static assignment of units to clusters. Cluster indices are dense in
/// `0..n_clusters`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    cluster_of: Vec<usize>,
    members: Vec<Vec<UnitId>>,
}

impl ClusterMap {
    /// Builds the map from dense labels. Every label in `0..=max` must be used.
    pub fn new(cluster_of: Vec<usize>) -> Result<Self> {
        let n_clusters = cluster_of.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); n_clusters];
        for (i, &c) in cluster_of.iter().enumerate() {
            members[c].push(UnitId(i));
        }
        if let Some(c) = members.iter().position(|m| m.is_empty()) {
            return Err(Error::InvalidInput(format!("cluster {c} has no members")));
        }
        Ok(Self {
            cluster_of,
            members,
        })
    }

    /// Densifies arbitrary labels in order of first appearance.
    pub fn from_labels<L: Ord + Clone>(labels: &[L]) -> Self {
        let mut index: BTreeMap<L, usize> = BTreeMap::new();
        let dense = labels
            .iter()
            .map(|l| {
                let next = index.len();
                *index.entry(l.clone()).or_insert(next)
            })
            .collect();
        Self::new(dense).expect("dense labels from first appearance are never empty")
    }

    #[inline]
    pub fn cluster_of(&self, i: UnitId) -> usize {
        self.cluster_of[i.0]
    }

    pub fn labels(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn n_units(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn members_of_cluster(&self, c: usize) -> &[UnitId] {
        &self.members[c]
    }

    pub fn clusters(&self) -> impl Iterator<Item = &[UnitId]> {
        self.members.iter().map(Vec::as_slice)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// `N_C(i)`: every unit sharing `i`'s cluster, `i` included.
    pub fn cluster_members(&self, i: UnitId) -> Result<&[UnitId]> {
        let c = self
            .cluster_of
            .get(i.0)
            .ok_or(Error::UnknownUnit(i.0))?;
        Ok(&self.members[*c])
    }
}

/// Dense `unit x period x dim` array over a contiguous period range.
///
/// Indexing uses the actual period number, so a regressor panel starting at
/// period 1 is read with `get(i, 1)` for its first slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTensor {
    n_units: usize,
    first_period: usize,
    n_periods: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PeriodTensor {
    pub fn zeros(n_units: usize, first_period: usize, n_periods: usize, dim: usize) -> Self {
        Self {
            n_units,
            first_period,
            n_periods,
            dim,
            data: vec![0.0; n_units * n_periods * dim],
        }
    }

    pub fn from_vec(
        n_units: usize,
        first_period: usize,
        n_periods: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != n_units * n_periods * dim {
            return Err(Error::InvalidInput(format!(
                "tensor data has {} entries, expected {} x {} x {}",
                data.len(),
                n_units,
                n_periods,
                dim
            )));
        }
        Ok(Self {
            n_units,
            first_period,
            n_periods,
            dim,
            data,
        })
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.n_units
    }
    #[inline]
    pub fn first_period(&self) -> usize {
        self.first_period
    }
    #[inline]
    pub fn last_period(&self) -> usize {
        self.first_period + self.n_periods - 1
    }
    #[inline]
    pub fn n_periods(&self) -> usize {
        self.n_periods
    }
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periods(&self) -> std::ops::RangeInclusive<usize> {
        self.first_period..=self.last_period()
    }

    pub fn covers(&self, first: usize, last: usize) -> bool {
        self.n_periods > 0 && self.first_period <= first && self.last_period() >= last
    }

    #[inline]
    fn offset(&self, i: usize, t: usize) -> usize {
        debug_assert!(i < self.n_units, "unit {i} out of range");
        debug_assert!(
            t >= self.first_period && t < self.first_period + self.n_periods,
            "period {t} outside {}..={}",
            self.first_period,
            self.last_period()
        );
        (i * self.n_periods + (t - self.first_period)) * self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> &[f64] {
        let o = self.offset(i, t);
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, t: usize) -> &mut [f64] {
        let o = self.offset(i, t);
        &mut self.data[o..o + self.dim]
    }

    #[inline]
    pub fn at(&self, i: usize, t: usize, k: usize) -> f64 {
        self.data[self.offset(i, t) + k]
    }

    /// Component `k` at period `t` for every unit.
    pub fn column(&self, t: usize, k: usize) -> Vec<f64> {
        (0..self.n_units).map(|i| self.at(i, t, k)).collect()
    }

    pub fn set_column(&mut self, t: usize, k: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            let o = self.offset(i, t) + k;
            self.data[o] = *v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_units == other.n_units
            && self.first_period == other.first_period
            && self.n_periods == other.n_periods
            && self.dim == other.dim
    }
}

/// Strongly balanced outcome and covariate panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    horizon: usize,
    p: usize,
    /// Periods `0..=T`, dim 1.
    y: PeriodTensor,
    /// Periods `1..=T`, dim `p`.
    x: PeriodTensor,
    partition: GroupPartition,
    clusters: ClusterMap,
}

impl PanelDataset {
    /// `y` is unit-major with `T + 1` entries per unit; `x` is unit-major with
    /// `T * p` entries per unit.
    pub fn new(
        horizon: usize,
        p: usize,
        y: Vec<f64>,
        x: Vec<f64>,
        partition: GroupPartition,
        clusters: ClusterMap,
    ) -> Result<Self> {
        let n = partition.n_units();
        if clusters.n_units() != n {
            return Err(Error::InvalidInput(format!(
                "cluster map covers {} units, partition covers {n}",
                clusters.n_units()
            )));
        }
        if horizon == 0 {
            return Err(Error::HorizonTooShort(horizon));
        }
        let y = PeriodTensor::from_vec(n, 0, horizon + 1, 1, y)?;
        let x = PeriodTensor::from_vec(n, 1, horizon, p, x)?;
        Ok(Self {
            horizon,
            p,
            y,
            x,
            partition,
            clusters,
        })
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.partition.n_units()
    }
    /// `T`.
    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    #[inline]
    pub fn n_covariates(&self) -> usize {
        self.p
    }
    #[inline]
    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.y.at(i, t, 0)
    }
    #[inline]
    pub fn x(&self, i: usize, t: usize) -> &[f64] {
        self.x.get(i, t)
    }
    pub fn outcomes(&self) -> &PeriodTensor {
        &self.y
    }
    pub fn covariates(&self) -> &PeriodTensor {
        &self.x
    }
    /// Cross-section of outcomes at period `t`.
    pub fn outcomes_at(&self, t: usize) -> Vec<f64> {
        self.y.column(t, 0)
    }
    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }
    pub fn clusters(&self) -> &ClusterMap {
        &self.clusters
    }

    /// Returns a copy with outcomes replaced. Used by the invariance checks.
    pub fn with_outcomes(&self, y: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.y = PeriodTensor::from_vec(self.n_units(), 0, self.horizon + 1, 1, y)?;
        Ok(out)
    }
}

/// A directed edge `src -> dst`: `src`'s lagged outcome enters `dst`'s
/// equation through `layer` (0-based). `period == None` means the edge is
/// present at every network index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub layer: usize,
    pub period: Option<usize>,
    pub src: UnitId,
    pub dst: UnitId,
}

/// In-neighbor lists for one (period, layer), split by source group.
#[derive(Debug, Clone, PartialEq)]
struct LayerAdjacency {
    /// Indexed by source group, each a CSR over target units.
    offsets: [Vec<usize>; 2],
    neighbors: [Vec<UnitId>; 2],
}

impl LayerAdjacency {
    fn build(n_units: usize, mut in_lists: Vec<[Vec<UnitId>; 2]>) -> Self {
        let mut offsets = [Vec::with_capacity(n_units + 1), Vec::with_capacity(n_units + 1)];
        let mut neighbors = [Vec::new(), Vec::new()];
        for g in 0..2 {
            offsets[g].push(0);
            for lists in in_lists.iter_mut() {
                let l = &mut lists[g];
                l.sort_unstable();
                l.dedup();
                neighbors[g].extend_from_slice(l);
                offsets[g].push(neighbors[g].len());
            }
        }
        Self { offsets, neighbors }
    }

    #[inline]
    fn slice(&self, i: usize, source: Group) -> &[UnitId] {
        let g = source.index();
        &self.neighbors[g][self.offsets[g][i]..self.offsets[g][i + 1]]
    }
}

/// Per-period, per-layer directed in-neighborhoods, partitioned by the source
/// unit's group.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStack {
    n_units: usize,
    n_layers: usize,
    /// Length 1 when static, otherwise one entry per network index.
    periods: Vec<Vec<LayerAdjacency>>,
    is_static: bool,
    source_groups: Vec<Group>,
}

impl NetworkStack {
    /// Builds the stack from an edge list. When every edge is static the
    /// result is static; otherwise `n_periods` network indices are allocated
    /// and static edges are replicated into each. Self-loops are kept so that
    /// [`validate_dataset`] can report them; duplicate edges collapse.
    pub fn from_edges(
        partition: &GroupPartition,
        n_layers: usize,
        n_periods: usize,
        edges: &[Edge],
    ) -> Result<Self> {
        let n = partition.n_units();
        if n_layers == 0 {
            return Err(Error::InvalidInput("a network stack needs at least one layer".into()));
        }
        let is_static = edges.iter().all(|e| e.period.is_none());
        let n_slots = if is_static { 1 } else { n_periods };
        if n_slots == 0 {
            return Err(Error::InvalidInput(
                "time-varying edges given but the stack has no periods".into(),
            ));
        }
        let mut lists: Vec<Vec<Vec<[Vec<UnitId>; 2]>>> =
            vec![vec![vec![[Vec::new(), Vec::new()]; n]; n_layers]; n_slots];
        for e in edges {
            if e.src.0 >= n || e.dst.0 >= n {
                return Err(Error::UnknownUnit(e.src.0.max(e.dst.0)));
            }
            if e.layer >= n_layers {
                return Err(Error::InvalidInput(format!(
                    "edge layer {} outside 0..{n_layers}",
                    e.layer
                )));
            }
            let g = partition.group_of(e.src).index();
            match e.period {
                None => {
                    for slot in lists.iter_mut() {
                        slot[e.layer][e.dst.0][g].push(e.src);
                    }
                }
                Some(t) => {
                    let slot = lists.get_mut(t).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "edge period {t} outside 0..{n_slots}"
                        ))
                    })?;
                    slot[e.layer][e.dst.0][g].push(e.src);
                }
            }
        }
        let periods = lists
            .into_iter()
            .map(|layers| {
                layers
                    .into_iter()
                    .map(|l| LayerAdjacency::build(n, l))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_units: n,
            n_layers,
            periods,
            is_static,
            source_groups: partition.groups().to_vec(),
        })
    }

    /// A stack with `n_layers` layers and no links at all.
    pub fn empty(partition: &GroupPartition, n_layers: usize) -> Result<Self> {
        Self::from_edges(partition, n_layers, 0, &[])
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.n_units
    }
    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }
    #[inline]
    pub fn is_static(&self) -> bool {
        self.is_static
    }
    /// Number of distinct network indices stored (1 when static).
    pub fn n_stored_periods(&self) -> usize {
        self.periods.len()
    }
    /// Group assignment the source slices were built with.
    pub fn source_groups(&self) -> &[Group] {
        &self.source_groups
    }

    /// `N_{t,layer,source}(i)` for network index `t`, sorted ascending.
    ///
    /// Panics if `t` is outside a time-varying stack's periods.
    #[inline]
    pub fn in_neighbors(&self, t: usize, layer: usize, i: UnitId, source: Group) -> &[UnitId] {
        let slot = if self.is_static { 0 } else { t };
        self.periods[slot][layer].slice(i.0, source)
    }

    /// Full in-neighborhood of `i` in one layer (both source groups).
    pub fn full_in_neighbors(&self, t: usize, layer: usize, i: UnitId) -> Vec<UnitId> {
        let mut all = self.in_neighbors(t, layer, i, Group::B).to_vec();
        all.extend_from_slice(self.in_neighbors(t, layer, i, Group::F));
        all
    }

    /// Size of the union of `i`'s in-neighborhoods over all layers and sources.
    pub fn union_in_degree(&self, t: usize, i: UnitId) -> usize {
        let mut all: Vec<UnitId> = (0..self.n_layers)
            .flat_map(|l| self.full_in_neighbors(t, l, i))
            .collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }

    /// Max and mean union in-degree over the units of `group` at index `t`.
    pub fn degree_stats(&self, t: usize, group: Group) -> DegreeStats {
        let degs: Vec<usize> = (0..self.n_units)
            .filter(|&i| self.source_groups[i] == group)
            .map(|i| self.union_in_degree(t, UnitId(i)))
            .collect();
        let max = degs.iter().copied().max().unwrap_or(0);
        let mean = if degs.is_empty() {
            0.0
        } else {
            degs.iter().sum::<usize>() as f64 / degs.len() as f64
        };
        DegreeStats { max, mean }
    }

    /// Every stored edge as `(period, layer, src, dst)`; `period` is `None`
    /// for static stacks.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (slot, layers) in self.periods.iter().enumerate() {
            let period = if self.is_static { None } else { Some(slot) };
            for (layer, adj) in layers.iter().enumerate() {
                for dst in 0..self.n_units {
                    for g in Group::ALL {
                        for &src in adj.slice(dst, g) {
                            out.push(Edge {
                                layer,
                                period,
                                src,
                                dst: UnitId(dst),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeStats {
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    HorizonTooShort { horizon: usize },
    SizeMismatch { what: String, expected: usize, found: usize },
    NonFinite { unit: usize, period: usize, variable: String },
    MixedCluster { cluster: usize },
    SingletonCluster { cluster: usize, unit: usize },
    SelfLoop { period: Option<usize>, layer: usize, unit: usize },
    NeighborOutOfRange { period: Option<usize>, layer: usize, unit: usize, neighbor: usize },
    SourceGroupMismatch { unit: usize },
    NetworkPeriodsMissing { needed: usize, found: usize },
}

impl Violation {
    pub fn severity(&self) -> Severity {
        match self {
            Violation::SingletonCluster { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HorizonTooShort { horizon } => write!(f, "horizon T = {horizon} < 2"),
            Violation::SizeMismatch { what, expected, found } => {
                write!(f, "{what}: expected {expected}, found {found}")
            }
            Violation::NonFinite { unit, period, variable } => {
                write!(f, "missing or non-finite {variable} for unit {unit} at period {period}")
            }
            Violation::MixedCluster { cluster } => {
                write!(f, "cluster {cluster} mixes units of both groups")
            }
            Violation::SingletonCluster { cluster, unit } => {
                write!(f, "cluster {cluster} contains only unit {unit}")
            }
            Violation::SelfLoop { period, layer, unit } => {
                write!(f, "unit {unit} is its own neighbor in layer {layer} (period {period:?})")
            }
            Violation::NeighborOutOfRange { period, layer, unit, neighbor } => write!(
                f,
                "neighbor {neighbor} of unit {unit} in layer {layer} (period {period:?}) is out of range"
            ),
            Violation::SourceGroupMismatch { unit } => {
                write!(f, "network group assignment of unit {unit} differs from the dataset")
            }
            Violation::NetworkPeriodsMissing { needed, found } => {
                write!(f, "network stack has {found} periods, {needed} needed")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity() == Severity::Warning)
    }

    /// `Err` carrying a summary of the error-level violations, if any.
    pub fn into_result(self) -> Result<Vec<Violation>> {
        if self.has_errors() {
            let msgs: Vec<String> = self.errors().take(5).map(|v| v.to_string()).collect();
            let extra = self.errors().count().saturating_sub(5);
            let mut msg = msgs.join("; ");
            if extra > 0 {
                msg.push_str(&format!("; and {extra} more"));
            }
            Err(Error::Validation(msg))
        } else {
            Ok(self.violations)
        }
    }
}

/// Checks every structural invariant the estimator relies on.
pub fn validate_dataset(data: &PanelDataset, nets: &NetworkStack) -> ValidationReport {
    let mut v = Vec::new();
    let n = data.n_units();
    let horizon = data.horizon();
    if horizon < 2 {
        v.push(Violation::HorizonTooShort { horizon });
    }
    for i in 0..n {
        for t in 0..=horizon {
            if !data.y(i, t).is_finite() {
                v.push(Violation::NonFinite { unit: i, period: t, variable: "y".into() });
            }
        }
        for t in 1..=horizon {
            for (k, x) in data.x(i, t).iter().enumerate() {
                if !x.is_finite() {
                    v.push(Violation::NonFinite {
                        unit: i,
                        period: t,
                        variable: format!("x{}", k + 1),
                    });
                }
            }
        }
    }

    let partition = data.partition();
    let clusters = data.clusters();
    for (c, members) in clusters.clusters().enumerate() {
        let g0 = partition.group_of(members[0]);
        if members.iter().any(|&u| partition.group_of(u) != g0) {
            v.push(Violation::MixedCluster { cluster: c });
        }
        if members.len() == 1 {
            v.push(Violation::SingletonCluster { cluster: c, unit: members[0].0 });
        }
    }

    if nets.n_units() != n {
        v.push(Violation::SizeMismatch {
            what: "network units".into(),
            expected: n,
            found: nets.n_units(),
        });
    }
    for (i, (&ng, &dg)) in nets.source_groups().iter().zip(partition.groups()).enumerate() {
        if ng != dg {
            v.push(Violation::SourceGroupMismatch { unit: i });
        }
    }
    if !nets.is_static() && nets.n_stored_periods() < horizon {
        v.push(Violation::NetworkPeriodsMissing {
            needed: horizon,
            found: nets.n_stored_periods(),
        });
    }
    for e in nets.edges() {
        if e.src == e.dst {
            v.push(Violation::SelfLoop { period: e.period, layer: e.layer, unit: e.dst.0 });
        }
        if e.src.0 >= n || e.dst.0 >= n {
            v.push(Violation::NeighborOutOfRange {
                period: e.period,
                layer: e.layer,
                unit: e.dst.0,
                neighbor: e.src.0,
            });
        }
    }
    ValidationReport { violations: v }
}
