use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use netspill::estimator::estimate;
use netspill::inference::{squared_t_stat, stepdown, Hypothesis, StepdownDecision};
use netspill::io::{
    self, build_threshold_network, error_document, ingest_panel, read_edges, read_weights,
    result_document, simulated_labels, threshold_edges, truth_document, write_edges_csv,
    write_mc_tables, write_panel_csv, McCell, RunMeta,
};
use netspill::simulate::{mc_study, simulate_panel, McSettings, SimulationConfig, TrueParams};
use netspill::{validate_dataset, Error, EstimationResult, Group, IvOption, NetworkStack, Stage};

#[derive(Parser)]
#[command(name = "netspill", version, about = "Dynamic network spillover estimation in short panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate both groups' equations and test for cross-group spillovers.
    Estimate(EstimateArgs),
    /// Draw one panel from the simulation design and export it.
    Simulate(SimulateArgs),
    /// Run Monte Carlo replications over a grid of designs.
    Mc(McArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Panel CSV: unit,period,y,x1..xp,group,cluster
    #[arg(long)]
    panel: PathBuf,
    /// Edge CSV: layer,period,src,dst
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Weighted pairs from group F sources to group B targets: src,dst,weight
    #[arg(long)]
    weights_sb: Option<PathBuf>,
    /// Weighted pairs from group B sources to group F targets: src,dst,weight
    #[arg(long)]
    weights_bs: Option<PathBuf>,
    /// Keep weighted pairs strictly above this nearest-rank percentile.
    #[arg(long, default_value_t = 25.0)]
    percentile: f64,
    #[arg(long, default_value = "A", value_parser = parse_iv)]
    iv: IvOption,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Where to write the result JSON.
    #[arg(long)]
    out: PathBuf,
    /// Longest interior gap filled by linear interpolation.
    #[arg(long, default_value_t = 3)]
    max_gap: usize,
    /// Network layer (1-based) whose cross-group coefficients are tested.
    #[arg(long, default_value_t = 1)]
    test_layer: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Units per group.
    #[arg(long)]
    n: usize,
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    ba_m: usize,
    /// Total number of clusters, split evenly between the groups.
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    /// alpha_B,alpha_F,beta_BB,beta_BF,beta_FB,beta_FF,gamma_B,gamma_F
    #[arg(long, allow_hyphen_values = true, value_parser = parse_params)]
    params: TrueParams,
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Set every idiosyncratic shock to zero.
    #[arg(long)]
    noiseless: bool,
    /// Also write fixed effects, cluster effects and shocks to truth.json.
    #[arg(long)]
    include_shocks: bool,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 500)]
    reps: usize,
    /// JSON array of design cells.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Seed for cells that do not set one; cell k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_params(s: &str) -> Result<TrueParams, String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    TrueParams::from_slice(&values).map_err(|e| e.to_string())
}

fn parse_iv(s: &str) -> Result<IvOption, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parameters as a list of eight numbers or an object with named fields.
#[derive(Deserialize)]
#[serde(untagged)]
enum ParamsSpec {
    List(Vec<f64>),
    Named(TrueParams),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridCell {
    n: usize,
    #[serde(rename = "T")]
    horizon: usize,
    ba_m: usize,
    params: ParamsSpec,
    #[serde(default)]
    iv: Option<IvOption>,
    #[serde(default)]
    clusters: Option<usize>,
    #[serde(default)]
    p: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    null_value: f64,
    #[serde(default)]
    delta_shift: f64,
    #[serde(default)]
    reps: Option<usize>,
}

#[derive(Serialize)]
struct McOutput<'a> {
    schema_version: &'a str,
    alpha: f64,
    cells: &'a [McCell],
}

enum Failure {
    Usage(String),
    Pipeline(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Pipeline(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(args) => run_estimate(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Mc(args) => run_mc(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            println!("{}", error_document(&e));
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn percent(alpha: f64) -> String {
    let p = alpha * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}%", p.round())
    } else {
        format!("{p}%")
    }
}

fn print_summary(res: &EstimationResult, decision: Option<&StepdownDecision>) {
    for g in Group::ALL {
        let est = res.group(g);
        println!("group {g} ({} units)", est.n_units);
        println!(
            "  {:<10} {:>12} {:>11} {:>12} {:>12} {:>9}",
            "coef", "estimate", "se", "ci_lower", "ci_upper", "p"
        );
        for (j, name) in res.coefficient_names.iter().enumerate() {
            if !est.estimated[j] {
                println!("  {name:<10} {:>12}", "not estimated");
                continue;
            }
            println!(
                "  {:<10} {:>12.6} {:>11.6} {:>12.6} {:>12.6} {:>9.4}",
                name, est.delta_hat[j], est.se[j], est.ci_lower[j], est.ci_upper[j], est.p_value[j]
            );
        }
    }
    let Some(decision) = decision else {
        println!("step-down: unavailable");
        return;
    };
    let retained: Vec<String> = decision.s_hat.iter().map(Hypothesis::to_string).collect();
    println!(
        "step-down: Q_FB = {:.4}, Q_BF = {:.4}, retained {{{}}}",
        decision.q_fb,
        decision.q_bf,
        retained.join(", ")
    );
    let level = percent(decision.alpha);
    match decision.direction() {
        "none" => println!("spillover direction: none detected at {level}"),
        dir => println!("spillover direction: {dir} at {level}"),
    }
}

fn run_estimate(args: &EstimateArgs) -> Result<ExitCode, Failure> {
    if args.edges.is_none() && args.weights_sb.is_none() && args.weights_bs.is_none() {
        return Err(Failure::Usage(
            "give --edges or at least one of --weights-sb/--weights-bs".into(),
        ));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha {} is outside (0, 1)", args.alpha)));
    }
    if args.test_layer == 0 {
        return Err(Failure::Usage("--test-layer is 1-based".into()));
    }
    let panel = ingest_panel(&args.panel, args.max_gap)?;
    let mut edges = Vec::new();
    let mut n_layers = 1;
    if let Some(path) = &args.edges {
        let list = read_edges(path, &panel)?;
        n_layers = list.n_layers;
        edges = list.edges;
    }
    for (path, source) in [(&args.weights_sb, Group::F), (&args.weights_bs, Group::B)] {
        if let Some(path) = path {
            let pairs = build_threshold_network(&read_weights(path)?, args.percentile)?;
            edges.extend(threshold_edges(&pairs, &panel, source)?);
        }
    }
    if args.test_layer > n_layers {
        return Err(Failure::Usage(format!(
            "--test-layer {} but the network has {n_layers} layer(s)",
            args.test_layer
        )));
    }
    let data = &panel.data;
    let nets = NetworkStack::from_edges(data.partition(), n_layers, data.horizon(), &edges)?;
    let report = validate_dataset(data, &nets);
    let warnings: Vec<_> = report.warnings().cloned().collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    report
        .into_result()
        .map_err(|e| e.at(Stage::Validation, None))?;

    let res = estimate(data, &nets, args.iv, args.alpha)?;
    let layer = args.test_layer - 1;
    let idx_fb = Hypothesis::FB.coefficient_index(n_layers, layer);
    let idx_bf = Hypothesis::BF.coefficient_index(n_layers, layer);
    // A zero variance (exact fit) leaves the estimates valid but the test undefined.
    let decision = squared_t_stat(&res, Group::B, idx_fb, 0.0)
        .and_then(|q_fb| Ok((q_fb, squared_t_stat(&res, Group::F, idx_bf, 0.0)?)))
        .and_then(|(q_fb, q_bf)| stepdown(q_fb, q_bf, args.alpha))
        .map_err(|e| e.to_string());
    if let Err(msg) = &decision {
        log::warn!("step-down test unavailable: {msg}");
    }

    let meta = RunMeta {
        panel: Some(args.panel.display().to_string()),
        edges: args.edges.as_ref().map(|p| p.display().to_string()),
        period_base: panel.period_base,
        dropped_units: panel.dropped_units.len(),
        test_layer: args.test_layer,
        warnings,
    };
    let doc = result_document(&res, decision.as_ref().map_err(Clone::clone), &meta);
    write_json(&args.out, &doc)?;
    print_summary(&res, decision.as_ref().ok());
    Ok(ExitCode::SUCCESS)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<ExitCode, Failure> {
    let mut config = SimulationConfig::new(args.n, args.horizon, args.ba_m, args.params);
    config.clusters_total = args.clusters;
    config.p = args.p;
    config.seed = args.seed;
    config.noiseless = args.noiseless;
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let draw = simulate_panel(&config)?;
    fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    let (units, clusters) = simulated_labels(&draw.data);
    let panel_file = fs::File::create(args.out_dir.join("panel.csv")).map_err(Error::from)?;
    write_panel_csv(BufWriter::new(panel_file), &draw.data, &units, &clusters, 0)?;
    let edge_file = fs::File::create(args.out_dir.join("edges.csv")).map_err(Error::from)?;
    write_edges_csv(BufWriter::new(edge_file), &draw.nets, &units, 0)?;
    let truth = truth_document(&config, &draw, args.include_shocks);
    write_json(&args.out_dir.join("truth.json"), &truth)?;
    let deg = draw.nets.degree_stats(0, Group::B);
    println!(
        "wrote {} units x {} periods to {}; group B union in-degree mean {:.2}, max {}",
        draw.data.n_units(),
        args.horizon + 1,
        args.out_dir.display(),
        deg.mean,
        deg.max
    );
    Ok(ExitCode::SUCCESS)
}

fn cell_config(cell: &GridCell, index: usize, base_seed: u64) -> Result<SimulationConfig, Error> {
    let params = match &cell.params {
        ParamsSpec::List(v) => TrueParams::from_slice(v)?,
        ParamsSpec::Named(p) => *p,
    };
    let mut config = SimulationConfig::new(cell.n, cell.horizon, cell.ba_m, params);
    if let Some(iv) = cell.iv {
        config.iv_option = iv;
    }
    if let Some(c) = cell.clusters {
        config.clusters_total = c;
    }
    if let Some(p) = cell.p {
        config.p = p;
    }
    config.seed = cell.seed.unwrap_or(base_seed.wrapping_add(index as u64));
    config.validate()?;
    Ok(config)
}

fn run_mc(args: &McArgs) -> Result<ExitCode, Failure> {
    let text = fs::read_to_string(&args.grid)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.grid.display())))?;
    let grid: Vec<GridCell> = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("invalid grid file: {e}")))?;
    if grid.is_empty() {
        return Err(Failure::Usage("the grid has no cells".into()));
    }
    if args.reps == 0 {
        return Err(Failure::Usage("--reps must be positive".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha {} is outside (0, 1)", args.alpha)));
    }

    let mut cells = Vec::with_capacity(grid.len());
    for (index, cell) in grid.iter().enumerate() {
        let settings = McSettings {
            reps: cell.reps.unwrap_or(args.reps),
            alpha: args.alpha,
            null_value: cell.null_value,
            delta_shift: cell.delta_shift,
            jobs: args.jobs,
        };
        let outcome = cell_config(cell, index, args.seed).and_then(|c| mc_study(&c, &settings));
        let (report, error) = match outcome {
            Ok(r) if r.n_success > 0 => (Some(r), None),
            Ok(r) => {
                let msg = format!("all {} replications failed: {:?}", r.settings.reps, r.failures);
                (Some(r), Some(msg))
            }
            Err(e) => (None, Some(e.to_string())),
        };
        match (&report, &error) {
            (Some(r), None) => eprintln!(
                "cell {index}: rejection {:.4}, fwer {:.4} ({} of {} replications)",
                r.rejection_rate, r.fwer, r.n_success, r.settings.reps
            ),
            (_, Some(msg)) => eprintln!("cell {index}: {msg}"),
            _ => {}
        }
        cells.push(McCell {
            index,
            report,
            error,
        });
    }

    fs::create_dir_all(&args.out).map_err(Error::from)?;
    write_json(
        &args.out.join("mc.json"),
        &McOutput {
            schema_version: io::SCHEMA_VERSION,
            alpha: args.alpha,
            cells: &cells,
        },
    )?;
    write_mc_tables(&args.out, &cells)?;
    if cells.iter().all(|c| c.error.is_some()) {
        println!(
            "{}",
            json!({ "error": { "stage": "mc", "kind": "all_cells_failed", "message": "every grid cell failed" } })
        );
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
