//! Full-batch Adam training with gradient clipping, validation-based early
//! stopping, and seed ensembles.
//!
//! One epoch is one gradient step over the whole training window. After each
//! step the supervised validation loss is evaluated; training stops when it
//! has not strictly improved for `patience` consecutive epochs, and the
//! parameters from the best validation epoch are restored before returning.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff;
use crate::conn::ConnectivityMatrix;
use crate::error::{Error, Result};
use crate::io;
use crate::panel::TimeSeriesPanel;
use crate::split::DataSplit;

use super::loss::{build_loss, supervised_loss, LossBatch, LossConfig};
use super::model::{predict, AdjacencySource, ModelConfig, PiGnnModel, Prediction};

/// Optimizer and stopping settings for [`train`] and [`train_ensemble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Adam step size.
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Adam denominator offset.
    pub epsilon: f64,
    /// Global gradient-norm ceiling; longer gradients are rescaled onto it.
    pub clip_norm: f64,
    /// Hard epoch budget.
    pub max_epochs: usize,
    /// Consecutive epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Initialization seeds, one ensemble member per entry.
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            max_epochs: 5000,
            patience: 200,
            seeds: (0..10).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta.is_finite() && (0.0..1.0).contains(&beta)) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::invalid(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Training loss at the parameters this epoch started from.
    pub train_loss: f64,
    /// Supervised validation loss after this epoch's update.
    pub val_loss: f64,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Per-epoch losses, in order.
    pub loss_history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = the initialization).
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    /// Validation loss of the kept parameters.
    pub best_val_loss: f64,
}

/// Tag a numerical failure with the epoch it happened in; other errors pass
/// through unchanged.
fn annotate_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::Solver {
            context: "training".into(),
            message: format!("non-finite value at epoch {epoch} ({context})"),
        },
        other => other,
    }
}

/// Rescale `gradient` in place onto the ball of radius `clip_norm` if it is
/// longer; return its norm before clipping.
pub(crate) fn clip_gradient(gradient: &mut [f64], clip_norm: f64) -> f64 {
    let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in gradient.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Fit `model` in place on the panel's training window, early-stopping on the
/// validation window, and leave it holding the parameters of the best
/// validation epoch.
pub fn train(
    model: &mut PiGnnModel,
    panel: &TimeSeriesPanel,
    split: &DataSplit,
    loss_config: &LossConfig,
    config: &TrainConfig,
) -> Result<TrainReport> {
    loss_config.validate()?;
    config.validate()?;
    if split.n_rows() != panel.n_steps() {
        return Err(Error::invalid(format!(
            "split covers {} rows but panel has {}",
            split.n_rows(),
            panel.n_steps()
        )));
    }
    let train_batch = LossBatch::new(model, panel, split.train.clone())?;
    let val_batch = LossBatch::new(model, panel, split.validation.clone())?;

    let mut params = model.params().to_vec();
    let n = params.len();
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];

    let mut best_params = params.clone();
    let mut best_val = supervised_loss(model, &val_batch, loss_config)?;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut history = Vec::new();
    let mut stopped_epoch = 0usize;

    for epoch in 1..=config.max_epochs {
        let (train_loss, mut gradient) = autodiff::grad(
            &|tape, theta| Ok(build_loss(model, tape, theta, &train_batch, loss_config).total),
            &params,
        )
        .map_err(|e| annotate_epoch(e, epoch))?;
        clip_gradient(&mut gradient, config.clip_norm);

        let t = epoch as f64;
        let bias1 = 1.0 - config.beta1.powf(t);
        let bias2 = 1.0 - config.beta2.powf(t);
        for i in 0..n {
            m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * gradient[i];
            m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * gradient[i] * gradient[i];
            let step = config.learning_rate * (m1[i] / bias1) / ((m2[i] / bias2).sqrt() + config.epsilon);
            params[i] -= step;
        }

        model.set_params(params.clone());
        let val_loss =
            supervised_loss(model, &val_batch, loss_config).map_err(|e| annotate_epoch(e, epoch))?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        stopped_epoch = epoch;

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    model.set_params(best_params);
    Ok(TrainReport {
        loss_history: history,
        best_epoch,
        stopped_epoch,
        best_val_loss: best_val,
    })
}

/// A set of independently initialized and trained models over one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<PiGnnModel>,
    pub reports: Vec<TrainReport>,
}

/// Train one model per seed in `config.seeds`, in parallel.
#[allow(clippy::too_many_arguments)]
pub fn train_ensemble(
    panel: &TimeSeriesPanel,
    split: &DataSplit,
    injector_ids: &[String],
    producer_ids: &[String],
    adjacency: &AdjacencySource,
    model_config: ModelConfig,
    ct_per_psi: f64,
    loss_config: &LossConfig,
    config: &TrainConfig,
) -> Result<Ensemble> {
    if config.seeds.is_empty() {
        return Err(Error::invalid("ensemble needs at least one seed"));
    }
    let runs: Vec<(PiGnnModel, TrainReport)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut member = PiGnnModel::init(
                panel,
                split,
                injector_ids,
                producer_ids,
                adjacency.clone(),
                model_config,
                ct_per_psi,
                seed,
            )?;
            let report = train(&mut member, panel, split, loss_config, config)?;
            Ok((member, report))
        })
        .collect::<Result<_>>()?;
    let (members, reports) = runs.into_iter().unzip();
    Ok(Ensemble { members, reports })
}

impl Ensemble {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }
}

/// Member-mean prediction in physical units.
pub fn ensemble_predict(
    ensemble: &Ensemble,
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    injector_bhp: ArrayView2<f64>,
) -> Result<Prediction> {
    if ensemble.members.is_empty() {
        return Err(Error::invalid("cannot predict from an empty ensemble"));
    }
    let mut acc: Option<Prediction> = None;
    for member in &ensemble.members {
        let p = predict(member, times, injection, injector_bhp)?;
        acc = Some(match acc {
            None => p,
            Some(mut sum) => {
                sum.production += &p.production;
                sum.producer_bhp += &p.producer_bhp;
                sum.productivity += &p.productivity;
                sum.pore_volume += &p.pore_volume;
                sum
            }
        });
    }
    let mut mean = acc.expect("at least one member");
    let w = 1.0 / ensemble.members.len() as f64;
    mean.production *= w;
    mean.producer_bhp *= w;
    mean.productivity *= w;
    mean.pore_volume *= w;
    Ok(mean)
}

/// Persist a trained ensemble into `dir`: per member, the model checkpoint
/// (`checkpoint_<seed>.json` — architecture, flat parameters, scaler states,
/// and seed), the training outcome (`report_<seed>.json`), and a readable
/// loss history (`history_<seed>.csv`); plus the member-mean connectivity
/// (`connectivity.csv`).
pub fn save_run(dir: &Path, ensemble: &Ensemble) -> Result<()> {
    if ensemble.members.is_empty() {
        return Err(Error::invalid("cannot save an empty ensemble"));
    }
    if ensemble.members.len() != ensemble.reports.len() {
        return Err(Error::invalid(format!(
            "{} members but {} reports",
            ensemble.members.len(),
            ensemble.reports.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for member in &ensemble.members {
        if !seen.insert(member.seed) {
            return Err(Error::invalid(format!(
                "duplicate seed {} would collide on disk",
                member.seed
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (member, report) in ensemble.members.iter().zip(&ensemble.reports) {
        let seed = member.seed;
        io::write_json(&dir.join(format!("checkpoint_{seed}.json")), member)?;
        io::write_json(&dir.join(format!("report_{seed}.json")), report)?;
        let mut history = String::from("epoch,train_loss,val_loss\n");
        for r in &report.loss_history {
            history.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
        }
        let path = dir.join(format!("history_{seed}.csv"));
        std::fs::write(&path, history).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    io::write_connectivity_csv(&dir.join("connectivity.csv"), &average_connectivity(ensemble)?)
}

/// Load an ensemble saved by [`save_run`], members ordered by seed.
pub fn load_run(dir: &Path) -> Result<Ensemble> {
    let entries = dir
        .read_dir()
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut seeds = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name
            .strip_prefix("checkpoint_")
            .and_then(|s| s.strip_suffix(".json"))
        {
            let seed: u64 = seed.parse().map_err(|_| {
                Error::parse(name.clone(), "checkpoint file name is not checkpoint_<seed>.json")
            })?;
            seeds.push(seed);
        }
    }
    if seeds.is_empty() {
        return Err(Error::invalid(format!(
            "no checkpoint_<seed>.json files in {}",
            dir.display()
        )));
    }
    seeds.sort_unstable();
    let mut members = Vec::with_capacity(seeds.len());
    let mut reports = Vec::with_capacity(seeds.len());
    for seed in seeds {
        members.push(io::read_json::<PiGnnModel>(
            &dir.join(format!("checkpoint_{seed}.json")),
        )?);
        reports.push(io::read_json::<TrainReport>(
            &dir.join(format!("report_{seed}.json")),
        )?);
    }
    Ok(Ensemble { members, reports })
}

/// Member-mean interwell connectivity.
pub fn average_connectivity(ensemble: &Ensemble) -> Result<ConnectivityMatrix> {
    let first = ensemble
        .members
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty ensemble"))?
        .extract_connectivity()?;
    let mut sum: Array2<f64> = first.values().clone();
    for member in &ensemble.members[1..] {
        sum += member.extract_connectivity()?.values();
    }
    sum *= 1.0 / ensemble.members.len() as f64;
    ConnectivityMatrix::new(
        first.injector_ids().to_vec(),
        first.producer_ids().to_vec(),
        sum,
    )
}
