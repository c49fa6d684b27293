//! File formats: panel and edge CSVs, weighted bipartite files with
//! percentile thresholding, simulation export and the result/error JSON.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimator::EstimationResult;
use crate::inference::StepdownDecision;
use crate::panel::{
    ClusterMap, Edge, Group, GroupPartition, NetworkStack, PanelDataset, UnitId, Violation,
};
use crate::simulate::{DgpDraw, McReport, SimulationConfig};

pub const SCHEMA_VERSION: &str = "1.0";

/// Panel read from disk, with the external labels needed to resolve edge
/// files and write results back.
#[derive(Debug, Clone)]
pub struct IngestedPanel {
    pub data: PanelDataset,
    /// External id of each retained unit, in internal order.
    pub unit_labels: Vec<String>,
    /// External id of each dense cluster index.
    pub cluster_labels: Vec<String>,
    /// External period number of internal period 0.
    pub period_base: i64,
    /// Units removed because gaps remained after interpolation.
    pub dropped_units: Vec<String>,
}

impl IngestedPanel {
    pub fn unit_index(&self) -> HashMap<&str, UnitId> {
        self.unit_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), UnitId(i)))
            .collect()
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_value(field: &str, line: u64, name: &str) -> Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = f
        .parse()
        .map_err(|_| parse_err(line, format!("column {name}: cannot parse {f:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("column {name}: non-finite value {f:?}")));
    }
    Ok(Some(v))
}

struct UnitRows {
    label: String,
    group: Group,
    cluster: String,
    /// period -> values `[y, x1..xp]`
    rows: BTreeMap<i64, Vec<Option<f64>>>,
}

/// Fills interior runs of missing values no longer than `max_gap` by linear
/// interpolation. Returns `false` if any value is still missing.
pub fn interpolate_series(values: &mut [Option<f64>], max_gap: usize) -> bool {
    let known: Vec<usize> = (0..values.len()).filter(|&k| values[k].is_some()).collect();
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let gap = b - a - 1;
        if gap == 0 || gap > max_gap {
            continue;
        }
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        for k in (a + 1)..b {
            let w = (k - a) as f64 / (b - a) as f64;
            values[k] = Some(va + w * (vb - va));
        }
    }
    values.iter().all(Option::is_some)
}

/// Reads a panel CSV with header `unit,period,y,x1..xp,group,cluster`.
pub fn ingest_panel(path: &Path, max_gap: usize) -> Result<IngestedPanel> {
    ingest_panel_reader(std::fs::File::open(path)?, max_gap)
}

pub fn ingest_panel_reader<R: Read>(reader: R, max_gap: usize) -> Result<IngestedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let p = cols.len().saturating_sub(5);
    let expected: Vec<String> = ["unit", "period", "y"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=p).map(|k| format!("x{k}")))
        .chain(["group".to_string(), "cluster".to_string()])
        .collect();
    if cols.len() < 6 || cols != expected {
        return Err(parse_err(
            1,
            format!("expected header {}, got {}", expected.join(","), cols.join(",")),
        ));
    }

    let mut units: Vec<UnitRows> = Vec::new();
    let mut by_label: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != cols.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", cols.len(), record.len()),
            ));
        }
        let label = record[0].to_string();
        if label.is_empty() {
            return Err(parse_err(line, "empty unit id"));
        }
        let period: i64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("period {:?} is not an integer", &record[1])))?;
        let values = (0..=p)
            .map(|k| parse_value(&record[2 + k], line, cols[2 + k]))
            .collect::<Result<Vec<_>>>()?;
        let group = Group::parse(&record[3 + p])
            .ok_or_else(|| parse_err(line, format!("unknown group {:?}", &record[3 + p])))?;
        let cluster = record[4 + p].to_string();
        if cluster.is_empty() {
            return Err(parse_err(line, "empty cluster id"));
        }

        let idx = *by_label.entry(label.clone()).or_insert_with(|| {
            units.push(UnitRows {
                label: label.clone(),
                group,
                cluster: cluster.clone(),
                rows: BTreeMap::new(),
            });
            units.len() - 1
        });
        let u = &mut units[idx];
        if u.group != group {
            return Err(parse_err(line, format!("unit {label} changes group")));
        }
        if u.cluster != cluster {
            return Err(parse_err(line, format!("unit {label} changes cluster")));
        }
        if u.rows.insert(period, values).is_some() {
            return Err(parse_err(line, format!("duplicate row for unit {label}, period {period}")));
        }
    }
    if units.is_empty() {
        return Err(Error::InvalidInput("panel file has no data rows".into()));
    }

    let first = units.iter().filter_map(|u| u.rows.keys().next()).min().copied().unwrap();
    let last = units.iter().filter_map(|u| u.rows.keys().next_back()).max().copied().unwrap();
    let n_periods = (last - first + 1) as usize;

    let mut kept: Vec<(UnitRows, Vec<Vec<f64>>)> = Vec::new();
    let mut dropped = Vec::new();
    for u in units {
        // series[var][period offset]
        let mut series: Vec<Vec<Option<f64>>> = vec![vec![None; n_periods]; p + 1];
        for (&t, vals) in &u.rows {
            for (k, v) in vals.iter().enumerate() {
                series[k][(t - first) as usize] = *v;
            }
        }
        let mut complete = interpolate_series(&mut series[0], max_gap);
        // Covariates are not used at the first period.
        for s in series.iter_mut().skip(1) {
            complete &= interpolate_series(&mut s[1..], max_gap);
            s[0] = Some(s[0].unwrap_or(0.0));
        }
        if complete {
            let filled = series
                .into_iter()
                .map(|s| s.into_iter().map(Option::unwrap).collect())
                .collect();
            kept.push((u, filled));
        } else {
            dropped.push(u.label);
        }
    }
    if !dropped.is_empty() {
        log::info!(
            "dropped {} unit(s) with gaps left after interpolation",
            dropped.len()
        );
    }
    if kept.is_empty() {
        return Err(Error::InvalidInput(
            "no unit has a complete series after interpolation".into(),
        ));
    }
    if n_periods < 2 {
        return Err(Error::HorizonTooShort(n_periods.saturating_sub(1)));
    }
    let horizon = n_periods - 1;

    let mut y = Vec::with_capacity(kept.len() * n_periods);
    let mut x = Vec::with_capacity(kept.len() * horizon * p);
    for (_, s) in &kept {
        y.extend_from_slice(&s[0]);
        for t in 1..n_periods {
            for k in 1..=p {
                x.push(s[k][t]);
            }
        }
    }
    let partition = GroupPartition::new(kept.iter().map(|(u, _)| u.group).collect())?;
    let raw_clusters: Vec<&str> = kept.iter().map(|(u, _)| u.cluster.as_str()).collect();
    let mut cluster_index: HashMap<&str, usize> = HashMap::new();
    let mut cluster_labels = Vec::new();
    let dense: Vec<usize> = raw_clusters
        .iter()
        .map(|&c| {
            *cluster_index.entry(c).or_insert_with(|| {
                cluster_labels.push(c.to_string());
                cluster_labels.len() - 1
            })
        })
        .collect();
    let clusters = ClusterMap::new(dense)?;
    let data = PanelDataset::new(horizon, p, y, x, partition, clusters)?;
    Ok(IngestedPanel {
        data,
        unit_labels: kept.into_iter().map(|(u, _)| u.label).collect(),
        cluster_labels,
        period_base: first,
        dropped_units: dropped,
    })
}

/// Edges resolved against an ingested panel.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub edges: Vec<Edge>,
    /// Highest layer seen (layers are 1-based in files).
    pub n_layers: usize,
    /// Rows skipped because an endpoint was dropped during ingestion.
    pub skipped: usize,
}

fn resolve<'a>(
    label: &str,
    index: &HashMap<&'a str, UnitId>,
    dropped: &HashSet<&str>,
    line: u64,
) -> Result<Option<UnitId>> {
    if let Some(&u) = index.get(label) {
        Ok(Some(u))
    } else if dropped.contains(label) {
        Ok(None)
    } else {
        Err(parse_err(line, format!("unknown unit id {label:?}")))
    }
}

/// Reads an edge CSV with header `layer,period,src,dst`; `period` is an
/// external period number or `*` for every period.
pub fn read_edges(path: &Path, panel: &IngestedPanel) -> Result<EdgeList> {
    read_edges_reader(std::fs::File::open(path)?, panel)
}

pub fn read_edges_reader<R: Read>(reader: R, panel: &IngestedPanel) -> Result<EdgeList> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["layer", "period", "src", "dst"] {
        return Err(parse_err(
            1,
            format!("expected header layer,period,src,dst, got {}", header.join(",")),
        ));
    }
    let index = panel.unit_index();
    let dropped: HashSet<&str> = panel.dropped_units.iter().map(String::as_str).collect();
    let horizon = panel.data.horizon() as i64;
    let mut out = EdgeList {
        edges: Vec::new(),
        n_layers: 1,
        skipped: 0,
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, got {}", record.len())));
        }
        let layer: usize = record[0]
            .parse()
            .ok()
            .filter(|&l| l >= 1)
            .ok_or_else(|| parse_err(line, format!("layer {:?} is not a positive integer", &record[0])))?;
        let period = match &record[1] {
            "*" => None,
            s => {
                let t: i64 = s
                    .parse()
                    .map_err(|_| parse_err(line, format!("period {s:?} is not an integer or *")))?;
                let offset = t - panel.period_base;
                if !(0..horizon).contains(&offset) {
                    return Err(parse_err(
                        line,
                        format!(
                            "network period {t} outside {}..={}",
                            panel.period_base,
                            panel.period_base + horizon - 1
                        ),
                    ));
                }
                Some(offset as usize)
            }
        };
        let src = resolve(&record[2], &index, &dropped, line)?;
        let dst = resolve(&record[3], &index, &dropped, line)?;
        out.n_layers = out.n_layers.max(layer);
        match (src, dst) {
            (Some(src), Some(dst)) => out.edges.push(Edge {
                layer: layer - 1,
                period,
                src,
                dst,
            }),
            _ => out.skipped += 1,
        }
    }
    if out.skipped > 0 {
        log::info!("skipped {} edge(s) touching dropped units", out.skipped);
    }
    Ok(out)
}

/// One row of a weighted bipartite file.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPair {
    pub src: String,
    pub dst: String,
    pub weight: f64,
}

/// Reads a weights CSV with header `src,dst,weight`.
pub fn read_weights(path: &Path) -> Result<Vec<WeightedPair>> {
    read_weights_reader(std::fs::File::open(path)?)
}

pub fn read_weights_reader<R: Read>(reader: R) -> Result<Vec<WeightedPair>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["src", "dst", "weight"] {
        return Err(parse_err(
            1,
            format!("expected header src,dst,weight, got {}", header.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", record.len())));
        }
        let weight = parse_value(&record[2], line, "weight")?
            .ok_or_else(|| parse_err(line, "missing weight"))?;
        if weight < 0.0 {
            return Err(parse_err(line, format!("negative weight {weight}")));
        }
        out.push(WeightedPair {
            src: record[0].to_string(),
            dst: record[1].to_string(),
            weight,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("weights file has no rows".into()));
    }
    Ok(out)
}

/// Nearest-rank `q`-th percentile of `values`: the smallest listed value
/// with at least `q`% of the values at or below it. `None` for `q = 0`.
pub fn nearest_rank_percentile(values: &[f64], q: f64) -> Result<Option<f64>> {
    if !(0.0..100.0).contains(&q) {
        return Err(Error::InvalidInput(format!("percentile {q} outside [0, 100)")));
    }
    if values.is_empty() {
        return Err(Error::InvalidInput("no weights to take a percentile of".into()));
    }
    let rank = (q / 100.0 * values.len() as f64).ceil() as usize;
    if rank == 0 {
        return Ok(None);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Some(sorted[rank - 1]))
}

/// Pairs whose weight strictly exceeds the nearest-rank `q`-th percentile of
/// all listed weights.
pub fn build_threshold_network(pairs: &[WeightedPair], q: f64) -> Result<Vec<(String, String)>> {
    let weights: Vec<f64> = pairs.iter().map(|p| p.weight).collect();
    let threshold = nearest_rank_percentile(&weights, q)?;
    Ok(pairs
        .iter()
        .filter(|p| threshold.is_none_or(|c| p.weight > c))
        .map(|p| (p.src.clone(), p.dst.clone()))
        .collect())
}

/// Turns thresholded pairs into static layer-0 edges, checking that every
/// source is in `source` and every target in `source.other()`.
pub fn threshold_edges(
    pairs: &[(String, String)],
    panel: &IngestedPanel,
    source: Group,
) -> Result<Vec<Edge>> {
    let index = panel.unit_index();
    let dropped: HashSet<&str> = panel.dropped_units.iter().map(String::as_str).collect();
    let partition = panel.data.partition();
    let mut out = Vec::new();
    for (k, (s, d)) in pairs.iter().enumerate() {
        let line = k as u64 + 2;
        let (Some(src), Some(dst)) = (
            resolve(s, &index, &dropped, line)?,
            resolve(d, &index, &dropped, line)?,
        ) else {
            continue;
        };
        if partition.group_of(src) != source || partition.group_of(dst) != source.other() {
            return Err(parse_err(
                line,
                format!("pair {s} -> {d} is not from group {source} to group {}", source.other()),
            ));
        }
        out.push(Edge {
            layer: 0,
            period: None,
            src,
            dst,
        });
    }
    Ok(out)
}

/// External labels for a simulated draw: `b{i}`/`f{i}` units and
/// `cb{c}`/`cf{c}` clusters, numbered within each group.
pub fn simulated_labels(data: &PanelDataset) -> (Vec<String>, Vec<String>) {
    let partition = data.partition();
    let mut counts = [0usize; 2];
    let units = partition
        .groups()
        .iter()
        .map(|&g| {
            let k = counts[g.index()];
            counts[g.index()] += 1;
            format!("{}{k}", g.to_string().to_lowercase())
        })
        .collect();
    let clusters = data.clusters();
    let mut ccounts = [0usize; 2];
    let clabels = (0..clusters.n_clusters())
        .map(|c| {
            let g = partition.group_of(clusters.members_of_cluster(c)[0]);
            let k = ccounts[g.index()];
            ccounts[g.index()] += 1;
            format!("c{}{k}", g.to_string().to_lowercase())
        })
        .collect();
    (units, clabels)
}

/// Writes the panel in the ingestion format. Floats use the shortest
/// representation that round-trips.
pub fn write_panel_csv<W: Write>(
    out: W,
    data: &PanelDataset,
    unit_labels: &[String],
    cluster_labels: &[String],
    period_base: i64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = data.n_covariates();
    let mut header = vec!["unit".to_string(), "period".into(), "y".into()];
    header.extend((1..=p).map(|k| format!("x{k}")));
    header.extend(["group".to_string(), "cluster".into()]);
    w.write_record(&header)?;
    let partition = data.partition();
    for i in 0..data.n_units() {
        let group = partition.group_of(UnitId(i)).to_string();
        let cluster = &cluster_labels[data.clusters().cluster_of(UnitId(i))];
        for t in 0..=data.horizon() {
            let mut row = vec![
                unit_labels[i].clone(),
                (period_base + t as i64).to_string(),
                data.y(i, t).to_string(),
            ];
            if t == 0 {
                row.extend(std::iter::repeat_n(String::new(), p));
            } else {
                row.extend(data.x(i, t).iter().map(|v| v.to_string()));
            }
            row.push(group.clone());
            row.push(cluster.clone());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes every edge of the stack as `layer,period,src,dst`.
pub fn write_edges_csv<W: Write>(
    out: W,
    nets: &NetworkStack,
    unit_labels: &[String],
    period_base: i64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer", "period", "src", "dst"])?;
    for e in nets.edges() {
        let period = e
            .period
            .map_or_else(|| "*".to_string(), |t| (period_base + t as i64).to_string());
        w.write_record([
            (e.layer + 1).to_string(),
            period,
            unit_labels[e.src.0].clone(),
            unit_labels[e.dst.0].clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth for a simulated draw.
pub fn truth_document(config: &SimulationConfig, draw: &DgpDraw, include_shocks: bool) -> Value {
    let p = config.p;
    let names = crate::transforms::regressor_layout::names(1, p);
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "coefficient_names": names,
        "delta": {
            "B": draw.params.delta(Group::B, p),
            "F": draw.params.delta(Group::F, p),
        },
        "degree": {
            "B": draw.nets.degree_stats(0, Group::B),
            "F": draw.nets.degree_stats(0, Group::F),
        },
    });
    if include_shocks {
        let n = draw.data.n_units();
        let eps: Vec<Vec<f64>> = (0..n)
            .map(|i| draw.epsilon.periods().map(|t| draw.epsilon.at(i, t, 0)).collect())
            .collect();
        doc["v"] = json!(draw.v);
        doc["pi"] = json!(draw.pi);
        doc["epsilon"] = json!(eps);
    }
    doc
}

/// Extra metadata recorded in the result document.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMeta {
    pub panel: Option<String>,
    pub edges: Option<String>,
    pub period_base: i64,
    pub dropped_units: usize,
    pub test_layer: usize,
    pub warnings: Vec<Violation>,
}

fn group_block(res: &EstimationResult, g: Group) -> Value {
    let est = res.group(g);
    let coefficients: Vec<Value> = res
        .coefficient_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            json!({
                "name": name,
                "estimated": est.estimated[j],
                "estimate": est.delta_hat[j],
                "initial_estimate": est.delta_tilde[j],
                "se": est.se[j],
                "t": est.t_stat[j],
                "p_value": est.p_value[j],
                "ci_lower": est.ci_lower[j],
                "ci_upper": est.ci_upper[j],
            })
        })
        .collect();
    json!({
        "n_units": est.n_units,
        "coefficients": coefficients,
        "v_hat": est.v_hat,
        "omega_hat": est.omega_hat,
    })
}

fn stepdown_block(decision: &StepdownDecision) -> Value {
    json!({
        "q_fb": decision.q_fb,
        "q_bf": decision.q_bf,
        "alpha": decision.alpha,
        "c_low": decision.c_low,
        "c_high": decision.c_high,
        "s_hat": decision.s_hat,
        "reject_fb": decision.reject_fb,
        "reject_bf": decision.reject_bf,
        "direction": decision.direction(),
    })
}

/// The result JSON written by `estimate`. `decision` is `Err` with a message
/// when the step-down test could not be computed.
pub fn result_document(
    res: &EstimationResult,
    decision: std::result::Result<&StepdownDecision, String>,
    meta: &RunMeta,
) -> Value {
    let (stepdown, stepdown_error) = match decision {
        Ok(d) => (stepdown_block(d), Value::Null),
        Err(msg) => (Value::Null, Value::String(msg)),
    };
    json!({
        "meta": {
            "schema_version": SCHEMA_VERSION,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "iv": res.iv,
            "alpha": res.alpha,
            "horizon": res.horizon,
            "n_layers": res.n_layers,
            "n_covariates": res.n_covariates,
            "coefficient_names": res.coefficient_names,
            "test_layer": meta.test_layer,
            "period_base": meta.period_base,
            "dropped_units": meta.dropped_units,
            "panel": meta.panel,
            "edges": meta.edges,
        },
        "groups": {
            "B": group_block(res, Group::B),
            "F": group_block(res, Group::F),
        },
        "stepdown": stepdown,
        "diagnostics": {
            "B": res.group(Group::B).diagnostics,
            "F": res.group(Group::F).diagnostics,
            "warnings": meta.warnings,
            "stepdown_error": stepdown_error,
        },
    })
}

/// Machine-readable description of a pipeline failure.
pub fn error_document(err: &Error) -> Value {
    let root = err.root();
    let kind = match root {
        Error::InvalidInput(_) => "invalid_input",
        Error::UnknownUnit(_) => "unknown_unit",
        Error::HorizonTooShort(_) => "horizon_too_short",
        Error::Validation(_) => "validation",
        Error::SingularGram { .. } => "singular_gram",
        Error::RankDeficient { .. } => "rank_deficient",
        Error::SingularWeight { .. } => "singular_weight",
        Error::DegenerateGroup { .. } => "degenerate_group",
        Error::ZeroVariance(_) => "zero_variance",
        Error::InvalidProbability(_) => "invalid_probability",
        Error::Parse { .. } => "parse",
        Error::Stage { .. } => "stage",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    };
    json!({
        "error": {
            "schema_version": SCHEMA_VERSION,
            "stage": err.stage().map_or("input", |s| s.as_str()),
            "group": err.group(),
            "kind": kind,
            "message": root.to_string(),
        }
    })
}

/// One grid cell of a Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct McCell {
    pub index: usize,
    pub report: Option<McReport>,
    pub error: Option<String>,
}

fn fmt_rate(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".into()
    }
}

/// Writes `size.csv` (no shift), `power.csv` (shifted) and `fwer.csv`.
pub fn write_mc_tables(dir: &Path, cells: &[McCell]) -> Result<()> {
    let header = [
        "cell", "n", "T", "ba_m", "iv", "params", "null_value", "true_beta_fb", "reps",
        "n_success", "rate_alpha", "rate_0.01", "rate_0.05", "rate_0.10",
    ];
    let mut size = csv::Writer::from_path(dir.join("size.csv"))?;
    let mut power = csv::Writer::from_path(dir.join("power.csv"))?;
    let mut fwer = csv::Writer::from_path(dir.join("fwer.csv"))?;
    size.write_record(header)?;
    power.write_record(header)?;
    fwer.write_record([
        "cell", "n", "T", "ba_m", "iv", "params", "true_nulls", "reps", "n_success", "fwer",
    ])?;
    for cell in cells {
        let Some(r) = &cell.report else { continue };
        let c = &r.config;
        let params = c
            .params
            .to_vec()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let mut row = vec![
            cell.index.to_string(),
            c.n_per_group.to_string(),
            c.horizon.to_string(),
            c.ba_m.to_string(),
            c.iv_option.label().to_string(),
            params.clone(),
            r.settings.null_value.to_string(),
            r.true_beta_fb.to_string(),
            r.settings.reps.to_string(),
            r.n_success.to_string(),
            fmt_rate(r.rejection_rate),
        ];
        row.extend(r.rejection_by_level.iter().map(|l| fmt_rate(l.rejection_rate)));
        if r.settings.delta_shift == 0.0 {
            size.write_record(&row)?;
        } else {
            power.write_record(&row)?;
        }
        let nulls = r
            .true_nulls
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(";");
        fwer.write_record([
            cell.index.to_string(),
            c.n_per_group.to_string(),
            c.horizon.to_string(),
            c.ba_m.to_string(),
            c.iv_option.label().to_string(),
            params,
            nulls,
            r.settings.reps.to_string(),
            r.n_success.to_string(),
            fmt_rate(r.fwer),
        ])?;
    }
    size.flush()?;
    power.flush()?;
    fwer.flush()?;
    Ok(())
}
