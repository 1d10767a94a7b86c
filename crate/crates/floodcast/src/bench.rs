//! Multi-case, multi-method benchmark harness.
//!
//! Each case runs four forecasters over the same panel and split — the
//! physics-informed network with an expert well graph, the same network
//! learning its own graph, a physics-free network baseline on the expert
//! graph, and the capacitance-resistance model — then scores the held-out
//! test window per producer (RMSE, totals summed across producers) and
//! collects every method's interwell connectivity. Method failures are
//! recorded in place so one diverging run cannot void the comparison.
//!
//! All randomness flows from each case's explicit seed list; rerunning with
//! the same configs reproduces the same report body.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conn::ConnectivityMatrix;
use crate::crm;
use crate::eikonal::{build_well_graph, speed_field, AdjacencyMatrix, GraphBuildConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{rmse, total_rmse};
use crate::panel::TimeSeriesPanel;
use crate::pignn::{
    average_connectivity, ensemble_predict, train_ensemble, AdjacencySource, LossConfig,
    ModelConfig, TrainConfig,
};
use crate::plot::{connectivity_heatmap, rate_chart, write_svg, ChartSeries};
use crate::split::{split_rows, DataSplit};

/// Well-graph source for a single configured run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    #[default]
    Expert,
    SelfLearned,
}

fn default_fractions() -> (f64, f64, f64) {
    (0.70, 0.05, 0.25)
}

fn default_physics() -> bool {
    true
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// One benchmark case: where its data lives and how runs on it are set up.
///
/// `graph_mode`, `physics`, and `out_dir` configure single-model runs (the
/// `train` command); the benchmark itself always runs all four methods and
/// writes under its own output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub name: String,
    /// Rate/pressure history (panel CSV).
    pub panel_csv: PathBuf,
    /// Well coordinates; with `grid_dir`, lets the expert graph be built.
    #[serde(default)]
    pub wells_csv: Option<PathBuf>,
    /// Reservoir property grid directory.
    #[serde(default)]
    pub grid_dir: Option<PathBuf>,
    /// Precomputed expert graph (0/1 connectivity CSV); overrides building
    /// one from the grid.
    #[serde(default)]
    pub adjacency_csv: Option<PathBuf>,
    /// Chronological train/validation/test fractions.
    #[serde(default = "default_fractions")]
    pub fractions: (f64, f64, f64),
    /// Total compressibility; defaults to the grid's fluid value.
    #[serde(default)]
    pub ct_per_psi: Option<f64>,
    #[serde(default)]
    pub graph_mode: GraphMode,
    #[serde(default = "default_physics")]
    pub physics: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// A case with all referenced files read and resolved.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub name: String,
    pub panel: TimeSeriesPanel,
    pub injector_ids: Vec<String>,
    pub producer_ids: Vec<String>,
    pub split: DataSplit,
    /// Expert graph, when one was given or could be built.
    pub adjacency: Option<AdjacencyMatrix>,
    pub ct_per_psi: f64,
    pub seeds: Vec<u64>,
}

impl CaseConfig {
    /// Read the referenced files, build the expert graph if the inputs for
    /// one are present, and validate the split.
    pub fn load(&self) -> Result<LoadedCase> {
        let file = io::read_panel_csv(&self.panel_csv)?;
        let split = split_rows(file.panel.n_steps(), self.fractions)?;

        let mut grid = None;
        if let Some(dir) = &self.grid_dir {
            grid = Some(io::read_grid_dir(dir)?);
        }
        let adjacency = if let Some(path) = &self.adjacency_csv {
            let conn = io::read_connectivity_csv(path)?;
            Some(AdjacencyMatrix::from_binary_connectivity(&conn)?)
        } else if let (Some(grid), Some(wells_path)) = (&grid, &self.wells_csv) {
            let wells = io::read_wells_csv(wells_path)?;
            let speed = speed_field(grid)?;
            Some(build_well_graph(
                grid,
                &speed,
                &wells,
                &GraphBuildConfig::default(),
            )?)
        } else {
            None
        };

        let ct_per_psi = match (self.ct_per_psi, &grid) {
            (Some(ct), _) => ct,
            (None, Some(grid)) => grid.fluid.ct_per_psi,
            (None, None) => {
                return Err(Error::invalid(format!(
                    "case `{}` needs ct_per_psi (no grid to take it from)",
                    self.name
                )))
            }
        };
        if self.seeds.is_empty() {
            return Err(Error::invalid(format!("case `{}` has no seeds", self.name)));
        }

        Ok(LoadedCase {
            name: self.name.clone(),
            panel: file.panel,
            injector_ids: file.injector_ids,
            producer_ids: file.producer_ids,
            split,
            adjacency,
            ct_per_psi,
            seeds: self.seeds.clone(),
        })
    }
}

/// The four compared forecasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    PiGnnExpert,
    PiGnnSelfLearned,
    GnnBaseline,
    Crm,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::PiGnnExpert,
        MethodKind::PiGnnSelfLearned,
        MethodKind::GnnBaseline,
        MethodKind::Crm,
    ];

    /// Stable identifier used in report rows and file names.
    pub fn tag(self) -> &'static str {
        match self {
            MethodKind::PiGnnExpert => "pignn_expert",
            MethodKind::PiGnnSelfLearned => "pignn_self_learned",
            MethodKind::GnnBaseline => "gnn_baseline",
            MethodKind::Crm => "crm",
        }
    }
}

/// Test-window scores and the forecast behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    /// RMSE per producer over the test rows.
    pub per_producer: Vec<f64>,
    /// Sum of the per-producer RMSEs.
    pub total: f64,
    /// Full-panel production forecast, `[n_steps × N_P]`.
    pub predictions: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MethodOutcome {
    Ok(MethodScore),
    Failed { message: String },
}

impl MethodOutcome {
    pub fn score(&self) -> Option<&MethodScore> {
        match self {
            MethodOutcome::Ok(s) => Some(s),
            MethodOutcome::Failed { .. } => None,
        }
    }
}

/// Everything one case produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub producer_ids: Vec<String>,
    pub times: Vec<f64>,
    /// Observed production, `[n_steps × N_P]`.
    pub observed: Array2<f64>,
    /// First held-out timestamp (the chart divider).
    pub test_start_day: f64,
    pub seeds: Vec<u64>,
    /// One entry per method, in [`MethodKind::ALL`] order.
    pub methods: Vec<(MethodKind, MethodOutcome)>,
    /// Interwell connectivity per exporter: the expert prior, the learned
    /// allocation under that prior, the self-learned allocation, and the
    /// fitted CRM gains.
    pub connectivities: Vec<(String, ConnectivityMatrix)>,
    /// Wall-clock seconds per method (metadata; not part of the report body).
    pub durations_s: Vec<(MethodKind, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cases: Vec<CaseResult>,
    /// Digest of the generating configuration.
    pub config_hash: String,
}

/// Shared method settings, applied to every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    /// Optimizer settings; the per-case seed list overrides `train.seeds`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_multistarts")]
    pub crm_multistarts: usize,
}

fn default_multistarts() -> usize {
    6
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            crm_multistarts: default_multistarts(),
        }
    }
}

fn sha256_of<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)
        .map_err(|e| Error::invalid(format!("config not serializable: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Load every case and run the full comparison.
pub fn run_benchmark(configs: &[CaseConfig], settings: &BenchSettings) -> Result<BenchmarkReport> {
    let hash = sha256_of(&(configs, settings))?;
    let cases: Vec<LoadedCase> = configs.iter().map(CaseConfig::load).collect::<Result<_>>()?;
    run_benchmark_cases(&cases, settings, hash)
}

/// Run the comparison on cases already in memory. `config_hash` labels the
/// report; [`run_benchmark`] derives it from the file-based configs.
pub fn run_benchmark_cases(
    cases: &[LoadedCase],
    settings: &BenchSettings,
    config_hash: String,
) -> Result<BenchmarkReport> {
    if cases.is_empty() {
        return Err(Error::invalid("benchmark needs at least one case"));
    }
    settings.loss.validate()?;
    settings.train.validate()?;
    let results: Vec<CaseResult> = cases
        .par_iter()
        .map(|case| run_case(case, settings))
        .collect();
    Ok(BenchmarkReport {
        cases: results,
        config_hash,
    })
}

fn score_predictions(case: &LoadedCase, predictions: &Array2<f64>) -> Result<MethodScore> {
    let test = case.split.test.clone();
    let observed = case.panel.production();
    let mut per_producer = Vec::with_capacity(case.producer_ids.len());
    for j in 0..case.producer_ids.len() {
        let obs: Vec<f64> = observed.slice(s![test.clone(), j]).to_vec();
        let pred: Vec<f64> = predictions.slice(s![test.clone(), j]).to_vec();
        per_producer.push(rmse(&obs, &pred)?);
    }
    let total = total_rmse(&per_producer);
    Ok(MethodScore {
        per_producer,
        total,
        predictions: predictions.clone(),
    })
}

type MethodRun = (MethodScore, Option<(String, ConnectivityMatrix)>);

fn run_network(
    case: &LoadedCase,
    settings: &BenchSettings,
    adjacency: AdjacencySource,
    loss: &LossConfig,
    connectivity_tag: Option<&str>,
) -> Result<MethodRun> {
    let train_config = TrainConfig {
        seeds: case.seeds.clone(),
        ..settings.train.clone()
    };
    let ensemble = train_ensemble(
        &case.panel,
        &case.split,
        &case.injector_ids,
        &case.producer_ids,
        &adjacency,
        settings.model,
        case.ct_per_psi,
        loss,
        &train_config,
    )?;
    let prediction = ensemble_predict(
        &ensemble,
        case.panel.times().view(),
        case.panel.injection().view(),
        case.panel.injector_bhp().view(),
    )?;
    let score = score_predictions(case, &prediction.production)?;
    let conn = match connectivity_tag {
        Some(tag) => Some((tag.to_string(), average_connectivity(&ensemble)?)),
        None => None,
    };
    Ok((score, conn))
}

fn expert_adjacency(case: &LoadedCase) -> Result<AdjacencySource> {
    case.adjacency
        .clone()
        .map(AdjacencySource::Expert)
        .ok_or_else(|| {
            Error::invalid(format!(
                "case `{}` has no expert graph (no adjacency CSV and no grid+wells)",
                case.name
            ))
        })
}

fn run_method(case: &LoadedCase, settings: &BenchSettings, kind: MethodKind) -> Result<MethodRun> {
    match kind {
        MethodKind::PiGnnExpert => run_network(
            case,
            settings,
            expert_adjacency(case)?,
            &settings.loss,
            Some("pignn_expert"),
        ),
        MethodKind::PiGnnSelfLearned => run_network(
            case,
            settings,
            AdjacencySource::SelfLearned,
            &settings.loss,
            Some("pignn_self_learned"),
        ),
        MethodKind::GnnBaseline => run_network(
            case,
            settings,
            expert_adjacency(case)?,
            &settings.loss.without_physics(),
            None,
        ),
        MethodKind::Crm => {
            let seed = case.seeds.first().copied().unwrap_or(0);
            let fit = crm::crm_fit(
                &case.panel,
                &case.split,
                case.ct_per_psi,
                settings.crm_multistarts,
                seed,
            )?;
            let q0 = case.panel.production().row(0).to_owned();
            let predictions = crm::crm_forecast(
                &fit.params,
                case.panel.times().view(),
                case.panel.injection().view(),
                case.panel.producer_bhp().view(),
                q0.view(),
            )?;
            let score = score_predictions(case, &predictions)?;
            let conn = fit.params.gains().clone();
            Ok((score, Some(("crm".to_string(), conn))))
        }
    }
}

fn run_case(case: &LoadedCase, settings: &BenchSettings) -> CaseResult {
    let mut methods = Vec::with_capacity(MethodKind::ALL.len());
    let mut durations = Vec::with_capacity(MethodKind::ALL.len());
    let mut connectivities = Vec::new();
    if let Some(adj) = &case.adjacency {
        connectivities.push(("expert_prior".to_string(), adj.to_connectivity()));
    }
    for kind in MethodKind::ALL {
        let start = Instant::now();
        let outcome = match run_method(case, settings, kind) {
            Ok((score, conn)) => {
                if let Some(entry) = conn {
                    connectivities.push(entry);
                }
                MethodOutcome::Ok(score)
            }
            Err(e) => MethodOutcome::Failed {
                message: e.to_string(),
            },
        };
        durations.push((kind, start.elapsed().as_secs_f64()));
        methods.push((kind, outcome));
    }
    CaseResult {
        name: case.name.clone(),
        producer_ids: case.producer_ids.clone(),
        times: case.panel.times().to_vec(),
        observed: case.panel.production().clone(),
        test_start_day: case.panel.times()[case.split.test.start],
        seeds: case.seeds.clone(),
        methods,
        connectivities,
        durations_s: durations,
    }
}

/// Render the report body: a text table with `**` on each column's minimum,
/// and a CSV in long form (`case,method,producer,rmse,status`).
pub fn export_table(report: &BenchmarkReport) -> (String, String) {
    let mut txt = String::new();
    let mut csv = String::from("case,method,producer,rmse,status\n");

    for case in &report.cases {
        let n_p = case.producer_ids.len();
        // Column minima among successful methods, for the bold markers.
        let mut min_per: Vec<f64> = vec![f64::INFINITY; n_p];
        let mut min_total = f64::INFINITY;
        for (_, outcome) in &case.methods {
            if let Some(score) = outcome.score() {
                for (m, v) in min_per.iter_mut().zip(&score.per_producer) {
                    *m = m.min(*v);
                }
                min_total = min_total.min(score.total);
            }
        }

        txt.push_str(&format!("Case {}\n", case.name));
        let mut header = format!("  {:<20}", "method");
        for id in &case.producer_ids {
            header.push_str(&format!("{id:>12}"));
        }
        header.push_str(&format!("{:>14}\n", "Total"));
        txt.push_str(&header);

        for (kind, outcome) in &case.methods {
            match outcome {
                MethodOutcome::Ok(score) => {
                    let mut line = format!("  {:<20}", kind.tag());
                    for (v, m) in score.per_producer.iter().zip(&min_per) {
                        let mark = if v == m { "**" } else { "" };
                        line.push_str(&format!("{:>12}", format!("{v:.3}{mark}")));
                    }
                    let mark = if score.total == min_total { "**" } else { "" };
                    line.push_str(&format!("{:>14}\n", format!("{:.3}{mark}", score.total)));
                    txt.push_str(&line);

                    for (id, v) in case.producer_ids.iter().zip(&score.per_producer) {
                        csv.push_str(&format!(
                            "{},{},{},{},ok\n",
                            case.name,
                            kind.tag(),
                            id,
                            v
                        ));
                    }
                    csv.push_str(&format!(
                        "{},{},TOTAL,{},ok\n",
                        case.name,
                        kind.tag(),
                        score.total
                    ));
                }
                MethodOutcome::Failed { message } => {
                    txt.push_str(&format!("  {:<20}failed: {}\n", kind.tag(), message));
                    csv.push_str(&format!(
                        "{},{},,,failed: {}\n",
                        case.name,
                        kind.tag(),
                        message.replace([',', '\n'], ";")
                    ));
                }
            }
        }
        txt.push('\n');
    }
    (txt, csv)
}

/// Render one case's figures: a rate chart per producer (observed,
/// successful methods, test divider) and a heatmap per connectivity matrix.
/// Returns `(file name, svg)` pairs.
pub fn export_plots(case: &CaseResult) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    for (j, id) in case.producer_ids.iter().enumerate() {
        let observed: Vec<f64> = case.observed.column(j).to_vec();
        let forecasts: Vec<ChartSeries> = case
            .methods
            .iter()
            .filter_map(|(kind, outcome)| {
                outcome.score().map(|score| ChartSeries {
                    label: kind.tag().to_string(),
                    values: score.predictions.column(j).to_vec(),
                })
            })
            .collect();
        let svg = rate_chart(
            &format!("{} — {} liquid rate", case.name, id),
            &case.times,
            &observed,
            &forecasts,
            Some(case.test_start_day),
        )?;
        files.push((format!("producer_{}.svg", sanitize(id)), svg));
    }
    for (tag, conn) in &case.connectivities {
        let svg = connectivity_heatmap(&format!("{} — {} connectivity", case.name, tag), conn)?;
        files.push((format!("connectivity_{tag}.svg"), svg));
    }
    Ok(files)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct RunMeta {
    config_hash: String,
    cases: Vec<CaseMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseMeta {
    name: String,
    seeds: Vec<u64>,
    durations_s: Vec<(String, f64)>,
}

/// Write the full report tree under `out`:
///
/// ```text
/// out/report.txt, out/report.csv, out/run_meta.json
/// out/<case>/connectivity_<tag>.csv and .svg, producer_<id>.svg
/// ```
///
/// Refuses a non-empty `out` unless `force` is set; with it, artifacts are
/// rewritten in place.
pub fn write_report(report: &BenchmarkReport, out: &Path, force: bool) -> Result<()> {
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
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;

    let (txt, csv) = export_table(report);
    std::fs::write(out.join("report.txt"), txt)
        .map_err(|e| Error::io(out.join("report.txt").display().to_string(), e))?;
    std::fs::write(out.join("report.csv"), csv)
        .map_err(|e| Error::io(out.join("report.csv").display().to_string(), e))?;

    for case in &report.cases {
        let dir = out.join(sanitize(&case.name));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for (tag, conn) in &case.connectivities {
            io::write_connectivity_csv(&dir.join(format!("connectivity_{tag}.csv")), conn)?;
        }
        for (name, svg) in export_plots(case)? {
            write_svg(&dir.join(name), &svg)?;
        }
    }

    let meta = RunMeta {
        config_hash: report.config_hash.clone(),
        cases: report
            .cases
            .iter()
            .map(|c| CaseMeta {
                name: c.name.clone(),
                seeds: c.seeds.clone(),
                durations_s: c
                    .durations_s
                    .iter()
                    .map(|(k, d)| (k.tag().to_string(), *d))
                    .collect(),
            })
            .collect(),
    };
    io::write_json(&out.join("run_meta.json"), &meta)
}
