//! Command-line front end: every subcommand is thin plumbing over the
//! library — file loading, one library call, file writing, and a summary on
//! stdout. Exit code 0 only when all requested work succeeded.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::array;
use serde::{Deserialize, Serialize};

use floodcast::bench::{export_table, run_benchmark, BenchSettings, CaseConfig, GraphMode};
use floodcast::eikonal::{build_well_graph, speed_field, GraphBuildConfig};
use floodcast::error::{Error, Result};
use floodcast::pignn::{
    average_connectivity, ensemble_predict, load_run, loss_at, loss_gradient, save_run,
    time_derivative_at, time_derivative_gradient, train_ensemble, AdjacencySource, LossConfig,
    ModelConfig, PiGnnModel, TrainConfig,
};
use floodcast::synth::{generate_crm_world, make_cases, simulate_diffusivity, CaseSetConfig,
    RateStep, Schedule};
use floodcast::{io, metrics, plot, ConnectivityMatrix};

#[derive(Parser)]
#[command(
    name = "floodcast",
    version,
    about = "Grid-free waterflood production forecasting: synthetic reservoirs, well graphs, CRM, and physics-informed graph networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic benchmark cases (grid, wells, simulated panel).
    Synth(SynthArgs),
    /// Build the expert injector→producer graph from a grid and wells.
    Graph(GraphArgs),
    /// Fit a capacitance-resistance model to a panel's training window.
    CrmFit(CrmFitArgs),
    /// Train a graph-network ensemble on a panel.
    Train(TrainArgs),
    /// Score a trained run's test-window forecasts.
    Evaluate(EvaluateArgs),
    /// Run the full four-method comparison over a set of cases.
    Bench(BenchArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render rate charts and connectivity heatmaps for a trained run.
    Plots(PlotsArgs),
}

fn main() {
    env_logger::init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Graph(args) => cmd_graph(args),
        Command::CrmFit(args) => cmd_crm_fit(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Plots(args) => cmd_plots(args),
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    io::read_json(path)
}

/// Make a config-relative path usable from the current directory.
fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn guard_out_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let occupied = out
            .read_dir()
            .map_err(|e| Error::io(out.display().to_string(), e))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Error::invalid(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))
}

// ---------------------------------------------------------------- synth

#[derive(Args)]
struct SynthArgs {
    /// Case-set settings (JSON); defaults match the standard benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory to write one subdirectory per case into.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config: CaseSetConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => CaseSetConfig::default(),
    };
    guard_out_dir(&args.out, args.force)?;
    let cases = make_cases(&config)?;
    for case in &cases {
        let dir = args.out.join(&case.name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let panel = simulate_diffusivity(&case.grid, &case.wells, &case.schedule)?;
        io::write_grid_dir(&dir.join("grid"), &case.grid)?;
        io::write_wells_csv(&dir.join("wells.csv"), &case.wells)?;
        io::write_panel_csv(
            &dir.join("panel.csv"),
            &panel,
            &case.wells.injector_ids(),
            &case.wells.producer_ids(),
        )?;
        let case_config = CaseConfig {
            name: case.name.clone(),
            panel_csv: "panel.csv".into(),
            wells_csv: Some("wells.csv".into()),
            grid_dir: Some("grid".into()),
            adjacency_csv: None,
            fractions: (0.70, 0.05, 0.25),
            ct_per_psi: None,
            graph_mode: GraphMode::Expert,
            physics: true,
            seeds: (0..10).collect(),
            out_dir: None,
        };
        io::write_json(&dir.join("case.json"), &case_config)?;
        println!(
            "{}: {} steps, {} injectors, {} producers -> {}",
            case.name,
            panel.n_steps(),
            panel.n_injectors(),
            panel.n_producers(),
            dir.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- graph

#[derive(Args)]
struct GraphArgs {
    /// Reservoir grid directory.
    #[arg(long)]
    grid: PathBuf,
    /// Well coordinates CSV.
    #[arg(long)]
    wells: PathBuf,
    /// Sector-search settings (JSON); defaults to one producer per quadrant.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output adjacency CSV (0/1 connectivity format).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_graph(args: GraphArgs) -> Result<()> {
    let config: GraphBuildConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => GraphBuildConfig::default(),
    };
    let grid = io::read_grid_dir(&args.grid)?;
    let wells = io::read_wells_csv(&args.wells)?;
    let speed = speed_field(&grid)?;
    let adjacency = build_well_graph(&grid, &speed, &wells, &config)?;
    io::write_connectivity_csv(&args.out, &adjacency.to_connectivity())?;
    println!(
        "{} edges across {} injectors x {} producers -> {}",
        adjacency.n_edges(),
        adjacency.injector_ids().len(),
        adjacency.producer_ids().len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- crm-fit

#[derive(Debug, Serialize, Deserialize)]
struct CrmFitCliConfig {
    #[serde(default = "default_fractions")]
    fractions: (f64, f64, f64),
    #[serde(default = "default_multistarts")]
    multistarts: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_ct")]
    ct_per_psi: f64,
}

fn default_fractions() -> (f64, f64, f64) {
    (0.70, 0.05, 0.25)
}
fn default_multistarts() -> usize {
    6
}
fn default_ct() -> f64 {
    1e-5
}

impl Default for CrmFitCliConfig {
    fn default() -> Self {
        CrmFitCliConfig {
            fractions: default_fractions(),
            multistarts: default_multistarts(),
            seed: 0,
            ct_per_psi: default_ct(),
        }
    }
}

#[derive(Args)]
struct CrmFitArgs {
    /// Rate/pressure history (panel CSV).
    #[arg(long)]
    panel: PathBuf,
    /// Fit settings (JSON): fractions, multistarts, seed, ct_per_psi.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for crm_fit.json and connectivity_crm.csv.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn cmd_crm_fit(args: CrmFitArgs) -> Result<()> {
    let config: CrmFitCliConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => CrmFitCliConfig::default(),
    };
    let file = io::read_panel_csv(&args.panel)?;
    let split = floodcast::split_rows(file.panel.n_steps(), config.fractions)?;
    let fit = floodcast::crm::crm_fit(
        &file.panel,
        &split,
        config.ct_per_psi,
        config.multistarts,
        config.seed,
    )?;
    guard_out_dir(&args.out, args.force)?;
    io::write_json(&args.out.join("crm_fit.json"), &fit)?;
    io::write_connectivity_csv(&args.out.join("connectivity_crm.csv"), fit.params.gains())?;
    println!("training SSE {:.6e} over {} restarts", fit.sse, fit.restart_sse.len());
    for (j, id) in file.producer_ids.iter().enumerate() {
        println!(
            "{id}: tau {:.3} days, productivity {:.4} bbl/day/psi",
            fit.params.tau_days()[j],
            fit.params.productivity()[j]
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct TrainArgs {
    /// Rate/pressure history (panel CSV).
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Expert graph CSV; mutually exclusive with --self-learned.
    #[arg(long, conflicts_with = "self_learned")]
    adj: Option<PathBuf>,
    /// Learn the interwell graph from data instead of fixing it.
    #[arg(long)]
    self_learned: bool,
    /// Include the material-balance term in the loss.
    #[arg(long, value_enum)]
    physics: Option<OnOff>,
    /// Ensemble size: trains seeds 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    /// Total compressibility (1/psi).
    #[arg(long)]
    ct: Option<f64>,
    /// Full case settings (JSON CaseConfig); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite a non-empty run directory.
    #[arg(long)]
    force: bool,
}

fn train_case_config(args: &TrainArgs) -> Result<CaseConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let mut c: CaseConfig = read_config(path)?;
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            c.panel_csv = resolve(&base, &c.panel_csv);
            c.wells_csv = c.wells_csv.map(|p| resolve(&base, &p));
            c.grid_dir = c.grid_dir.map(|p| resolve(&base, &p));
            c.adjacency_csv = c.adjacency_csv.map(|p| resolve(&base, &p));
            c
        }
        None => {
            let panel = args.panel.clone().ok_or_else(|| {
                Error::invalid("pass --panel (or --config with a panel_csv)")
            })?;
            CaseConfig {
                name: "run".into(),
                panel_csv: panel,
                wells_csv: None,
                grid_dir: None,
                adjacency_csv: None,
                fractions: default_fractions(),
                ct_per_psi: None,
                graph_mode: GraphMode::Expert,
                physics: true,
                seeds: (0..10).collect(),
                out_dir: None,
            }
        }
    };
    if let Some(panel) = &args.panel {
        config.panel_csv = panel.clone();
    }
    if let Some(adj) = &args.adj {
        config.adjacency_csv = Some(adj.clone());
        config.graph_mode = GraphMode::Expert;
    }
    if args.self_learned {
        config.graph_mode = GraphMode::SelfLearned;
        config.adjacency_csv = None;
    }
    if let Some(p) = args.physics {
        config.physics = p == OnOff::On;
    }
    if let Some(n) = args.seeds {
        config.seeds = (0..n).collect();
    }
    if let Some(ct) = args.ct {
        config.ct_per_psi = Some(ct);
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    if config.ct_per_psi.is_none() && config.grid_dir.is_none() {
        config.ct_per_psi = Some(default_ct());
    }
    if config.graph_mode == GraphMode::Expert
        && config.adjacency_csv.is_none()
        && !(config.grid_dir.is_some() && config.wells_csv.is_some())
    {
        return Err(Error::invalid(
            "expert mode needs --adj (or a config with grid+wells); or pass --self-learned",
        ));
    }
    Ok(config)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = train_case_config(&args)?;
    let out = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::invalid("pass --out <run_dir>"))?;
    let case = config.load()?;
    guard_out_dir(&out, args.force)?;

    let adjacency = match config.graph_mode {
        GraphMode::SelfLearned => AdjacencySource::SelfLearned,
        GraphMode::Expert => AdjacencySource::Expert(case.adjacency.clone().ok_or_else(
            || Error::invalid("expert mode but no adjacency could be loaded or built"),
        )?),
    };
    let loss = if config.physics {
        LossConfig::default()
    } else {
        LossConfig::default().without_physics()
    };
    let train_config = TrainConfig {
        seeds: case.seeds.clone(),
        ..TrainConfig::default()
    };
    let ensemble = train_ensemble(
        &case.panel,
        &case.split,
        &case.injector_ids,
        &case.producer_ids,
        &adjacency,
        ModelConfig::default(),
        case.ct_per_psi,
        &loss,
        &train_config,
    )?;
    save_run(&out, &ensemble)?;
    io::write_json(&out.join("run_config.json"), &config)?;
    for (member, report) in ensemble.members.iter().zip(&ensemble.reports) {
        println!(
            "seed {}: stopped at epoch {}, best epoch {}, validation loss {:.6e}",
            member.seed, report.stopped_epoch, report.best_epoch, report.best_val_loss
        );
    }
    println!("run saved to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Panel to score on; defaults to the one the run was trained on.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Metrics JSON to write (defaults to <run>/metrics.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvaluationMetrics {
    producer_ids: Vec<String>,
    /// Test-window RMSE per producer, bbl/day.
    per_producer: Vec<f64>,
    /// Sum of the per-producer values.
    total: f64,
    test_rows: (usize, usize),
    n_members: usize,
}

fn evaluate_run(run: &Path, panel_override: Option<&Path>) -> Result<EvaluationMetrics> {
    let config: CaseConfig = io::read_json(&run.join("run_config.json"))?;
    let panel_path = panel_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.panel_csv.clone());
    let file = io::read_panel_csv(&panel_path)?;
    let split = floodcast::split_rows(file.panel.n_steps(), config.fractions)?;
    let ensemble = load_run(run)?;
    let prediction = ensemble_predict(
        &ensemble,
        file.panel.times().view(),
        file.panel.injection().view(),
        file.panel.injector_bhp().view(),
    )?;
    let mut per_producer = Vec::with_capacity(file.producer_ids.len());
    for j in 0..file.producer_ids.len() {
        let obs: Vec<f64> = file
            .panel
            .production()
            .slice(ndarray::s![split.test.clone(), j])
            .to_vec();
        let pred: Vec<f64> = prediction
            .production
            .slice(ndarray::s![split.test.clone(), j])
            .to_vec();
        per_producer.push(metrics::rmse(&obs, &pred)?);
    }
    let total = metrics::total_rmse(&per_producer);
    Ok(EvaluationMetrics {
        producer_ids: file.producer_ids,
        per_producer,
        total,
        test_rows: (split.test.start, split.test.end),
        n_members: ensemble.members.len(),
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let metrics = evaluate_run(&args.run, args.panel.as_deref())?;
    let out = args.out.unwrap_or_else(|| args.run.join("metrics.json"));
    io::write_json(&out, &metrics)?;
    println!(
        "test rows {}..{} over a {}-member ensemble",
        metrics.test_rows.0, metrics.test_rows.1, metrics.n_members
    );
    for (id, v) in metrics.producer_ids.iter().zip(&metrics.per_producer) {
        println!("{id}: RMSE {v:.3} bbl/day");
    }
    println!("total: {:.3} bbl/day -> {}", metrics.total, out.display());
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Serialize, Deserialize)]
struct BenchCliConfig {
    cases: Vec<CaseConfig>,
    #[serde(default)]
    settings: BenchSettings,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark description (JSON): cases plus shared settings.
    #[arg(long)]
    config: PathBuf,
    /// Report directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty report directory.
    #[arg(long)]
    force: bool,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut config: BenchCliConfig = read_config(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    for case in &mut config.cases {
        case.panel_csv = resolve(&base, &case.panel_csv);
        case.wells_csv = case.wells_csv.take().map(|p| resolve(&base, &p));
        case.grid_dir = case.grid_dir.take().map(|p| resolve(&base, &p));
        case.adjacency_csv = case.adjacency_csv.take().map(|p| resolve(&base, &p));
    }
    let report = run_benchmark(&config.cases, &config.settings)?;
    floodcast::bench::write_report(&report, &args.out, args.force)?;
    let (txt, _) = export_table(&report);
    print!("{txt}");
    println!("report written to {}", args.out.display());
    // A failed method is a failed benchmark run, even though the report
    // records it gracefully.
    let failures: Vec<String> = report
        .cases
        .iter()
        .flat_map(|c| {
            c.methods.iter().filter_map(|(kind, outcome)| {
                outcome
                    .score()
                    .is_none()
                    .then(|| format!("{} / {}", c.name, kind.tag()))
            })
        })
        .collect();
    if !failures.is_empty() {
        return Err(Error::invalid(format!(
            "methods failed: {}",
            failures.join(", ")
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- gradcheck

#[derive(Args)]
struct GradcheckArgs {
    /// Panel to check on; defaults to a built-in 2-injector, 4-producer,
    /// 50-step fixture.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Total compressibility (1/psi).
    #[arg(long, default_value_t = 1e-5)]
    ct: f64,
    /// Parameter-initialization seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Central-difference step. Smaller steps amplify round-off on the
    /// near-zero gradient entries; larger ones eventually truncate.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Check every k-th parameter in the mixed-derivative comparison.
    #[arg(long, default_value_t = 13)]
    stride: usize,
}

/// Deterministic closed-form panel: 2 injectors, 4 producers, 50 steps.
fn gradcheck_fixture() -> Result<(floodcast::TimeSeriesPanel, Vec<String>, Vec<String>)> {
    let injector_ids: Vec<String> = vec!["I1".into(), "I2".into()];
    let producer_ids: Vec<String> = (1..=4).map(|j| format!("P{j}")).collect();
    let gains = ConnectivityMatrix::new(
        injector_ids.clone(),
        producer_ids.clone(),
        array![[0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]],
    )?;
    let params = floodcast::crm::CrmParams::new(
        array![15.0, 28.0, 40.0, 22.0],
        array![1.2, 0.9, 1.5, 1.1],
        gains,
    )?;
    let schedule = Schedule::new(
        vec![
            vec![
                RateStep { start_day: 0.0, rate_bbl_day: 420.0 },
                RateStep { start_day: 200.0, rate_bbl_day: 610.0 },
            ],
            vec![
                RateStep { start_day: 0.0, rate_bbl_day: 540.0 },
                RateStep { start_day: 320.0, rate_bbl_day: 380.0 },
            ],
        ],
        vec![1500.0, 1480.0, 1520.0, 1500.0],
        490.0,
        10.0,
        3000.0,
    )?;
    let panel = generate_crm_world(
        &params,
        &schedule,
        &array![260.0, 240.0, 310.0, 275.0],
        0.0,
        0,
    )?;
    Ok((panel, injector_ids, producer_ids))
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let (panel, injector_ids, producer_ids) = match &args.panel {
        Some(path) => {
            let file = io::read_panel_csv(path)?;
            (file.panel, file.injector_ids, file.producer_ids)
        }
        None => gradcheck_fixture()?,
    };
    let split = floodcast::split_rows(panel.n_steps(), default_fractions())?;
    let model = PiGnnModel::init(
        &panel,
        &split,
        &injector_ids,
        &producer_ids,
        AdjacencySource::SelfLearned,
        ModelConfig::default(),
        args.ct,
        args.seed,
    )?;
    let rows = split.train.clone();
    let loss_config = LossConfig::default();

    // Reverse mode against central differences of the full loss.
    let (_, analytic) = loss_gradient(&model, &panel, rows.clone(), &loss_config)?;
    let probe = |params: &[f64]| loss_at(&model, params, &panel, rows.clone(), &loss_config);
    let report =
        floodcast::autodiff::gradcheck(&probe, model.params(), &analytic, args.h)?;
    let reverse_ok = report.max_rel_error < 1e-4;
    println!(
        "reverse gradient vs finite differences: max rel error {:.3e} over {} parameters (worst index {}) -> {}",
        report.max_rel_error,
        report.n_params,
        report.worst_index,
        if reverse_ok { "PASS" } else { "FAIL" }
    );

    // Forward-over-reverse: ∂/∂θ of the predicted-rate time derivative at a
    // few entries, against central differences of the (exact) derivative.
    let stride = args.stride.max(1);
    let mut mixed_worst = 0.0_f64;
    for (row, producer) in [(3usize, 0usize), (rows.len() / 2, 1), (rows.len() - 2, 2)] {
        let producer = producer.min(producer_ids.len() - 1);
        let (_, grad) =
            time_derivative_gradient(&model, &panel, rows.clone(), row, producer)?;
        let mut params = model.params().to_vec();
        let h = 1e-5;
        for i in (0..params.len()).step_by(stride) {
            let keep = params[i];
            params[i] = keep + h;
            let up = time_derivative_at(&model, &params, &panel, rows.clone(), row, producer)?;
            params[i] = keep - h;
            let down = time_derivative_at(&model, &params, &panel, rows.clone(), row, producer)?;
            params[i] = keep;
            let numeric = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
            mixed_worst = mixed_worst.max((grad[i] - numeric).abs() / denom);
        }
    }
    let mixed_ok = mixed_worst < 1e-3;
    println!(
        "rate time-derivative parameter gradient vs finite differences: max rel error {mixed_worst:.3e} (stride {stride}) -> {}",
        if mixed_ok { "PASS" } else { "FAIL" }
    );

    if reverse_ok && mixed_ok {
        Ok(())
    } else {
        Err(Error::Solver {
            context: "gradient check".into(),
            message: "analytic and numeric derivatives disagree".into(),
        })
    }
}

// ---------------------------------------------------------------- plots

#[derive(Args)]
struct PlotsArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Panel to plot against; defaults to the one the run was trained on.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Directory for the SVG files.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn cmd_plots(args: PlotsArgs) -> Result<()> {
    let config: CaseConfig = io::read_json(&args.run.join("run_config.json"))?;
    let panel_path = args
        .panel
        .clone()
        .unwrap_or_else(|| config.panel_csv.clone());
    let file = io::read_panel_csv(&panel_path)?;
    let split = floodcast::split_rows(file.panel.n_steps(), config.fractions)?;
    let ensemble = load_run(&args.run)?;
    let prediction = ensemble_predict(
        &ensemble,
        file.panel.times().view(),
        file.panel.injection().view(),
        file.panel.injector_bhp().view(),
    )?;
    guard_out_dir(&args.out, args.force)?;

    let times = file.panel.times().to_vec();
    let divider = times[split.test.start];
    for (j, id) in file.producer_ids.iter().enumerate() {
        let observed: Vec<f64> = file.panel.production().column(j).to_vec();
        let series = vec![plot::ChartSeries {
            label: "ensemble mean".into(),
            values: prediction.production.column(j).to_vec(),
        }];
        let svg = plot::rate_chart(
            &format!("{id} liquid rate"),
            &times,
            &observed,
            &series,
            Some(divider),
        )?;
        plot::write_svg(&args.out.join(format!("producer_{id}.svg")), &svg)?;
    }
    let connectivity = average_connectivity(&ensemble)?;
    let svg = plot::connectivity_heatmap("ensemble-mean connectivity", &connectivity)?;
    plot::write_svg(&args.out.join("connectivity.svg"), &svg)?;
    println!(
        "{} rate charts and 1 heatmap -> {}",
        file.producer_ids.len(),
        args.out.display()
    );
    Ok(())
}
