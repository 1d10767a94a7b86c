//! Graph-network forecaster over the injector→producer well graph.
//!
//! One graph-convolution block aggregates injector signals onto producers
//! through a degree-normalized adjacency; four parallel MLP heads emit
//! production rate, flowing pressure, productivity, and drained pore volume
//! per producer. A trainable connectivity matrix `F` (logistic-squashed to
//! `[0,1]`) either rides alongside a fixed expert adjacency or doubles as the
//! adjacency itself.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    d_add_row, d_concat_cols, d_matmul, d_tanh, Dual, Tape, VarId,
};
use crate::conn::ConnectivityMatrix;
use crate::eikonal::AdjacencyMatrix;
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::scale::MinMaxScaler;
use crate::split::DataSplit;

/// Floor added to the positivity map so productivity and pore volume never
/// reach zero (the material-balance residual divides by productivity).
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Scaled inputs are expected in roughly the unit interval; values outside
/// this band trigger an unscaled-input warning.
pub const SCALED_INPUT_BAND: (f64, f64) = (-0.5, 1.5);

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Per-producer feature width of each graph-convolution branch.
    pub gcn_width: usize,
    /// Hidden width of the two hidden layers in every output head.
    pub head_hidden: usize,
    /// Feed an injector-BHP branch alongside the injection-rate branch.
    pub use_injector_bhp: bool,
    /// Physical scale (bbl/day/psi) multiplying the productivity head.
    pub j_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gcn_width: 16,
            head_hidden: 32,
            use_injector_bhp: true,
            j_scale: 1.0,
        }
    }
}

/// Where the graph convolution takes its adjacency from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdjacencySource {
    /// Fixed binary prior (e.g. from the travel-time graph); drives the GCN
    /// normalization while `F` stays trainable in the loss.
    Expert(AdjacencyMatrix),
    /// The squashed trainable `F` itself doubles as the adjacency.
    SelfLearned,
}

/// Per-channel min-max scalers, all fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ScalerSet {
    pub time: MinMaxScaler,
    pub injection: MinMaxScaler,
    pub injector_bhp: MinMaxScaler,
    pub production: MinMaxScaler,
    pub producer_bhp: MinMaxScaler,
}

/// Offsets of one head's weights inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadLayout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
}

/// Flat-parameter layout: connectivity block, branch weights, then the four
/// heads (production, flowing pressure, productivity, pore volume).
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamLayout {
    pub n_injectors: usize,
    pub n_producers: usize,
    pub gcn_width: usize,
    pub head_hidden: usize,
    pub head_input: usize,
    pub f_raw: usize,
    pub w_inj: usize,
    pub w_bhp: Option<usize>,
    pub heads: [HeadLayout; 4],
    pub total: usize,
}

impl ParamLayout {
    pub fn new(n_injectors: usize, n_producers: usize, config: &ModelConfig) -> Self {
        let g = config.gcn_width;
        let h = config.head_hidden;
        // Each head reads the whole convolved state — every producer's
        // branch features side by side — and emits one column per producer,
        // so producers keep their own first-layer rows and output units.
        let per_producer = if config.use_injector_bhp { 2 * g } else { g };
        let head_input = n_producers * per_producer;
        let mut cursor = 0usize;
        let mut take = |n: usize| {
            let at = cursor;
            cursor += n;
            at
        };
        let f_raw = take(n_injectors * n_producers);
        let w_inj = take(2 * g);
        let w_bhp = config.use_injector_bhp.then(|| take(2 * g));
        let heads = std::array::from_fn(|_| HeadLayout {
            w1: take(head_input * h),
            b1: take(h),
            w2: take(h * h),
            b2: take(h),
            w3: take(h * n_producers),
            b3: take(n_producers),
        });
        ParamLayout {
            n_injectors,
            n_producers,
            gcn_width: g,
            head_hidden: h,
            head_input,
            f_raw,
            w_inj,
            w_bhp,
            heads,
            total: cursor,
        }
    }
}

/// The forecaster: architecture, flat parameters, scalers, and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiGnnModel {
    pub config: ModelConfig,
    pub adjacency: AdjacencySource,
    pub(crate) params: Vec<f64>,
    pub(crate) scalers: ScalerSet,
    /// Total compressibility (1/psi) used by the material-balance residual.
    pub ct_per_psi: f64,
    /// Physical scale (bbl) multiplying the pore-volume head.
    pub vp_scale: f64,
    pub injector_ids: Vec<String>,
    pub producer_ids: Vec<String>,
    /// RNG seed the parameters were initialized from.
    pub seed: u64,
}

impl PiGnnModel {
    /// Initialize a model for `panel`: fit scalers on the training rows and
    /// draw Xavier-uniform weights from `seed`. The connectivity block starts
    /// at the balanced allocation `1/N_I` for every pair.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        panel: &TimeSeriesPanel,
        split: &DataSplit,
        injector_ids: &[String],
        producer_ids: &[String],
        adjacency: AdjacencySource,
        config: ModelConfig,
        ct_per_psi: f64,
        seed: u64,
    ) -> Result<Self> {
        if injector_ids.len() != panel.n_injectors()
            || producer_ids.len() != panel.n_producers()
        {
            return Err(Error::ShapeMismatch {
                context: "model well ids vs panel".into(),
                expected: format!("{} × {}", panel.n_injectors(), panel.n_producers()),
                actual: format!("{} × {}", injector_ids.len(), producer_ids.len()),
            });
        }
        if split.n_rows() != panel.n_steps() {
            return Err(Error::invalid(format!(
                "split covers {} rows but panel has {}",
                split.n_rows(),
                panel.n_steps()
            )));
        }
        if let AdjacencySource::Expert(adj) = &adjacency {
            if adj.injector_ids() != injector_ids || adj.producer_ids() != producer_ids {
                return Err(Error::invalid(
                    "expert adjacency well ids disagree with the model's",
                ));
            }
        }
        if config.gcn_width == 0 || config.head_hidden == 0 {
            return Err(Error::invalid("network widths must be at least 1"));
        }
        if !(ct_per_psi.is_finite() && ct_per_psi > 0.0) {
            return Err(Error::invalid(format!(
                "total compressibility must be positive, got {ct_per_psi}"
            )));
        }
        if !(config.j_scale.is_finite() && config.j_scale > 0.0) {
            return Err(Error::invalid(format!(
                "productivity scale must be positive, got {}",
                config.j_scale
            )));
        }

        let times = panel.times().view().insert_axis(Axis(1));
        let scalers = ScalerSet {
            time: MinMaxScaler::fit(times.view(), split.train.clone())?,
            injection: MinMaxScaler::fit(panel.injection().view(), split.train.clone())?,
            injector_bhp: MinMaxScaler::fit(panel.injector_bhp().view(), split.train.clone())?,
            production: MinMaxScaler::fit(panel.production().view(), split.train.clone())?,
            producer_bhp: MinMaxScaler::fit(panel.producer_bhp().view(), split.train.clone())?,
        };
        let t_range = scalers.time.range(0);
        if t_range <= 0.0 {
            return Err(Error::invalid("training window spans no time"));
        }
        // Sized so a neutral pore-volume output implies a material-balance
        // time constant of a tenth of the training window.
        let vp_scale = 0.1 * t_range * config.j_scale / ct_per_psi;

        let layout = ParamLayout::new(injector_ids.len(), producer_ids.len(), &config);
        let mut params = init_params(&layout, seed);
        // Output biases start at the training-window mean of each scaled
        // target column, so initial predictions sit inside the observed band
        // and the first validation losses measure fit rather than the sweep
        // of a far-off initial output across the data.
        let mut seed_bias = |offset: usize, scaled: Result<Array2<f64>>| -> Result<()> {
            let scaled = scaled?;
            for (j, col) in scaled.columns().into_iter().enumerate() {
                params[offset + j] = col.mean().unwrap_or(0.0);
            }
            Ok(())
        };
        seed_bias(
            layout.heads[0].b3,
            scalers
                .production
                .transform(panel.production().slice(ndarray::s![split.train.clone(), ..])),
        )?;
        seed_bias(
            layout.heads[1].b3,
            scalers
                .producer_bhp
                .transform(panel.producer_bhp().slice(ndarray::s![split.train.clone(), ..])),
        )?;
        Ok(PiGnnModel {
            config,
            adjacency,
            params,
            scalers,
            ct_per_psi,
            vp_scale,
            injector_ids: injector_ids.to_vec(),
            producer_ids: producer_ids.to_vec(),
            seed,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn set_params(&mut self, params: Vec<f64>) {
        assert_eq!(params.len(), self.params.len(), "parameter count changed");
        self.params = params;
    }

    pub(crate) fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.injector_ids.len(), self.producer_ids.len(), &self.config)
    }

    pub fn n_injectors(&self) -> usize {
        self.injector_ids.len()
    }

    pub fn n_producers(&self) -> usize {
        self.producer_ids.len()
    }

    /// The squashed connectivity matrix currently stored in the parameters.
    pub fn extract_connectivity(&self) -> Result<ConnectivityMatrix> {
        let layout = self.layout();
        let values = Array2::from_shape_fn(
            (layout.n_injectors, layout.n_producers),
            |(i, j)| logistic(self.params[layout.f_raw + i * layout.n_producers + j]),
        );
        ConnectivityMatrix::new(
            self.injector_ids.clone(),
            self.producer_ids.clone(),
            values,
        )
    }

    /// Scale raw inputs with the model's fitted scalers.
    pub(crate) fn scale_inputs(
        &self,
        times: ArrayView1<f64>,
        injection: ArrayView2<f64>,
        injector_bhp: ArrayView2<f64>,
    ) -> Result<ScaledInputs> {
        let t = times.insert_axis(Axis(1));
        Ok(ScaledInputs {
            t_s: self.scalers.time.transform(t.view())?,
            inj_s: self.scalers.injection.transform(injection)?,
            inj_bhp_s: self.scalers.injector_bhp.transform(injector_bhp)?,
        })
    }
}

/// Inputs already mapped into scaled space.
#[derive(Debug, Clone)]
pub struct ScaledInputs {
    /// `[n × 1]` scaled times.
    pub t_s: Array2<f64>,
    /// `[n × N_I]` scaled injection rates.
    pub inj_s: Array2<f64>,
    /// `[n × N_I]` scaled injector BHPs.
    pub inj_bhp_s: Array2<f64>,
}

impl ScaledInputs {
    fn n_rows(&self) -> usize {
        self.t_s.nrows()
    }

    fn outside_band(&self) -> Option<f64> {
        let (lo, hi) = SCALED_INPUT_BAND;
        self.t_s
            .iter()
            .chain(self.inj_s.iter())
            .chain(self.inj_bhp_s.iter())
            .find(|v| **v < lo || **v > hi)
            .copied()
    }
}

/// One head's weight nodes, carved out of the bound parameter vector.
struct HeadWeights {
    w1: VarId,
    b1: VarId,
    w2: VarId,
    b2: VarId,
    w3: VarId,
    b3: VarId,
}

/// Output nodes of one forward construction on a tape.
pub(crate) struct ForwardNodes {
    /// `[n × N_P]` scaled production, carrying its time tangent.
    pub q_s: Dual,
    /// `[n × N_P]` scaled flowing pressure, carrying its time tangent.
    pub pwf_s: Dual,
    /// `[n × N_P]` physical productivity (bbl/day/psi), primal only.
    pub j: VarId,
    /// `[n × N_P]` physical drained pore volume (bbl), primal only.
    pub vp: VarId,
    /// `[N_I × N_P]` squashed connectivity.
    pub f: VarId,
}

/// Record the forward pass on `tape` with parameters bound as the column
/// vector `theta`. Production and flowing-pressure heads are built in
/// forward-over-reverse dual form so their time derivatives are themselves
/// differentiable tape nodes.
pub(crate) fn build_forward(
    model: &PiGnnModel,
    tape: &Tape,
    theta: VarId,
    inputs: &ScaledInputs,
) -> ForwardNodes {
    let layout = model.layout();
    let n = inputs.n_rows();

    let f_raw = tape.slice_reshape(theta, layout.f_raw, layout.n_injectors, layout.n_producers);
    let f = tape.sigmoid(f_raw);

    // Degree-normalized adjacency: fixed constant in expert mode, a function
    // of F on the tape in self-learned mode (strictly positive, so the
    // degree clamp is only needed on the fixed path).
    let a_hat = match &model.adjacency {
        AdjacencySource::Expert(adj) => tape.leaf(normalized_adjacency(adj.as_f64().view())),
        AdjacencySource::SelfLearned => {
            let r_inj = tape.rsqrt(tape.sum_rows(f));
            let r_prod = tape.rsqrt(tape.sum_cols(f));
            tape.mul_row(tape.mul_col(f, r_inj), r_prod)
        }
    };

    let t = Dual::seeded(
        tape.leaf(inputs.t_s.clone()),
        tape.leaf(Array2::ones((n, 1))),
    );
    let inj = tape.leaf(inputs.inj_s.clone());
    let agg_inj = tape.matmul(inj, a_hat);
    let w_inj = tape.slice_reshape(theta, layout.w_inj, 2, layout.gcn_width);
    let (agg_bhp, w_bhp) = match layout.w_bhp {
        Some(offset) => {
            let bhp = tape.leaf(inputs.inj_bhp_s.clone());
            (
                Some(tape.matmul(bhp, a_hat)),
                Some(tape.slice_reshape(theta, offset, 2, layout.gcn_width)),
            )
        }
        None => (None, None),
    };

    let heads: Vec<HeadWeights> = layout
        .heads
        .iter()
        .map(|lay| HeadWeights {
            w1: tape.slice_reshape(theta, lay.w1, layout.head_input, layout.head_hidden),
            b1: tape.slice_reshape(theta, lay.b1, 1, layout.head_hidden),
            w2: tape.slice_reshape(theta, lay.w2, layout.head_hidden, layout.head_hidden),
            b2: tape.slice_reshape(theta, lay.b2, 1, layout.head_hidden),
            w3: tape.slice_reshape(theta, lay.w3, layout.head_hidden, layout.n_producers),
            b3: tape.slice_reshape(theta, lay.b3, 1, layout.n_producers),
        })
        .collect();

    // Branch features per producer: aggregated injector signal beside the
    // time feature, projected and squashed; all producers' features sit side
    // by side in one state matrix read by every head.
    let mut state: Option<Dual> = None;
    for p in 0..layout.n_producers {
        let x_inj = d_concat_cols(tape, Dual::constant(tape.col(agg_inj, p)), t);
        let z_inj = d_tanh(tape, d_matmul(tape, x_inj, Dual::constant(w_inj)));
        let z = match (agg_bhp, w_bhp) {
            (Some(agg), Some(w)) => {
                let x_bhp = d_concat_cols(tape, Dual::constant(tape.col(agg, p)), t);
                let z_bhp = d_tanh(tape, d_matmul(tape, x_bhp, Dual::constant(w)));
                d_concat_cols(tape, z_inj, z_bhp)
            }
            _ => z_inj,
        };
        state = Some(match state {
            Some(acc) => d_concat_cols(tape, acc, z),
            None => z,
        });
    }
    let state = state.expect("at least one producer");

    let q_s = head_dual(tape, state, &heads[0]);
    let pwf_s = head_dual(tape, state, &heads[1]);
    let j_raw = head_primal(tape, state.primal, &heads[2]);
    let j = tape.scale(
        tape.add_scalar(tape.softplus(j_raw), POSITIVITY_FLOOR),
        model.config.j_scale,
    );
    let vp_raw = head_primal(tape, state.primal, &heads[3]);
    let vp = tape.scale(
        tape.add_scalar(tape.softplus(vp_raw), POSITIVITY_FLOOR),
        model.vp_scale,
    );

    ForwardNodes { q_s, pwf_s, j, vp, f }
}

fn head_dual(tape: &Tape, x: Dual, w: &HeadWeights) -> Dual {
    let z1 = d_tanh(
        tape,
        d_add_row(tape, d_matmul(tape, x, Dual::constant(w.w1)), w.b1),
    );
    let z2 = d_tanh(
        tape,
        d_add_row(tape, d_matmul(tape, z1, Dual::constant(w.w2)), w.b2),
    );
    d_add_row(tape, d_matmul(tape, z2, Dual::constant(w.w3)), w.b3)
}

fn head_primal(tape: &Tape, x: VarId, w: &HeadWeights) -> VarId {
    let z1 = tape.tanh(tape.add_row(tape.matmul(x, w.w1), w.b1));
    let z2 = tape.tanh(tape.add_row(tape.matmul(z1, w.w2), w.b2));
    tape.add_row(tape.matmul(z2, w.w3), w.b3)
}

/// Model outputs for one batch of scaled inputs.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[n × N_P]` production in scaled space.
    pub q_scaled: Array2<f64>,
    /// `[n × N_P]` flowing pressure in scaled space.
    pub p_wf_scaled: Array2<f64>,
    /// `[n × N_P]` productivity, bbl/day/psi (physical).
    pub productivity: Array2<f64>,
    /// `[n × N_P]` drained pore volume, bbl (physical).
    pub pore_volume: Array2<f64>,
}

/// Run the network on pre-scaled inputs. Warns (once per call) when inputs
/// stray far outside the unit band the scalers produce on training data.
pub fn forward_scaled(model: &PiGnnModel, inputs: &ScaledInputs) -> Result<ForwardOutput> {
    if inputs.inj_s.ncols() != model.n_injectors()
        || inputs.inj_bhp_s.ncols() != model.n_injectors()
    {
        return Err(Error::ShapeMismatch {
            context: "forward inputs".into(),
            expected: format!("{} injector columns", model.n_injectors()),
            actual: format!("{} × {}", inputs.inj_s.ncols(), inputs.inj_bhp_s.ncols()),
        });
    }
    if inputs.inj_s.nrows() != inputs.t_s.nrows()
        || inputs.inj_bhp_s.nrows() != inputs.t_s.nrows()
    {
        return Err(Error::ShapeMismatch {
            context: "forward inputs".into(),
            expected: format!("{} rows", inputs.t_s.nrows()),
            actual: format!("{} × {}", inputs.inj_s.nrows(), inputs.inj_bhp_s.nrows()),
        });
    }
    if let Some(v) = inputs.outside_band() {
        log::warn!(
            "forward input {v:.3} lies outside the scaled band {:?}; \
             inputs may not have been scaled",
            SCALED_INPUT_BAND
        );
    }
    let tape = Tape::new();
    let theta = tape.leaf(
        Array2::from_shape_vec((model.params.len(), 1), model.params.clone())
            .expect("flat parameters reshape to a column"),
    );
    let nodes = build_forward(model, &tape, theta, inputs);
    Ok(ForwardOutput {
        q_scaled: tape.value(nodes.q_s.primal),
        p_wf_scaled: tape.value(nodes.pwf_s.primal),
        productivity: tape.value(nodes.j),
        pore_volume: tape.value(nodes.vp),
    })
}

/// Physical-unit predictions for one batch of raw inputs.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// `[n × N_P]` production rate, bbl/day.
    pub production: Array2<f64>,
    /// `[n × N_P]` flowing bottom-hole pressure, psi.
    pub producer_bhp: Array2<f64>,
    /// `[n × N_P]` productivity, bbl/day/psi.
    pub productivity: Array2<f64>,
    /// `[n × N_P]` drained pore volume, bbl.
    pub pore_volume: Array2<f64>,
}

/// Scale raw inputs, run the network, and map rate and pressure back to
/// physical units.
pub fn predict(
    model: &PiGnnModel,
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    injector_bhp: ArrayView2<f64>,
) -> Result<Prediction> {
    let inputs = model.scale_inputs(times, injection, injector_bhp)?;
    let out = forward_scaled(model, &inputs)?;
    Ok(Prediction {
        production: model.scalers.production.inverse(out.q_scaled.view())?,
        producer_bhp: model.scalers.producer_bhp.inverse(out.p_wf_scaled.view())?,
        productivity: out.productivity,
        pore_volume: out.pore_volume,
    })
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Xavier-uniform weights per block, zero biases, and a connectivity block
/// that squashes to exactly `1/N_I` everywhere.
fn init_params(layout: &ParamLayout, seed: u64) -> Vec<f64> {
    let mut params = vec![0.0; layout.total];
    let balanced = 1.0 / layout.n_injectors as f64;
    let raw = (balanced / (1.0 - balanced)).ln();
    for v in &mut params[layout.f_raw..layout.f_raw + layout.n_injectors * layout.n_producers] {
        *v = raw;
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut xavier = |params: &mut [f64], offset: usize, fan_in: usize, fan_out: usize| {
        let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut params[offset..offset + fan_in * fan_out] {
            *v = rng.random_range(-lim..lim);
        }
    };
    xavier(&mut params, layout.w_inj, 2, layout.gcn_width);
    if let Some(offset) = layout.w_bhp {
        xavier(&mut params, offset, 2, layout.gcn_width);
    }
    for head in &layout.heads {
        xavier(&mut params, head.w1, layout.head_input, layout.head_hidden);
        xavier(&mut params, head.w2, layout.head_hidden, layout.head_hidden);
        xavier(&mut params, head.w3, layout.head_hidden, layout.n_producers);
    }
    params
}

/// Hidden activation of a standalone graph-convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
}

/// A single graph-convolution layer in isolation (the building block the
/// model composes; exposed for direct evaluation and inspection).
#[derive(Debug, Clone)]
pub struct GcnLayer {
    /// `[2 × d_out]` projection applied to each producer's feature pair
    /// (aggregated injector signal, own feature).
    pub weight: Array2<f64>,
    pub activation: Activation,
}

/// Symmetric degree normalization `D_I^{-1/2} · A · D_P^{-1/2}` with zero
/// degrees clamped to one so isolated wells pass zeros through unchanged.
pub fn normalized_adjacency(a: ArrayView2<f64>) -> Array2<f64> {
    let deg_inj: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|r| {
            let d = r.sum();
            if d == 0.0 { 1.0 } else { d }
        })
        .collect();
    let deg_prod: Vec<f64> = a
        .columns()
        .into_iter()
        .map(|c| {
            let d = c.sum();
            if d == 0.0 { 1.0 } else { d }
        })
        .collect();
    Array2::from_shape_fn(a.dim(), |(i, j)| {
        a[[i, j]] / (deg_inj[i] * deg_prod[j]).sqrt()
    })
}

/// Evaluate one graph-convolution layer: aggregate injector features onto
/// producers through the normalized adjacency, pair each producer's
/// aggregate with its own feature, and project through the layer weight.
/// Returns one `[n × d_out]` feature block per producer.
pub fn gcn_forward(
    layer: &GcnLayer,
    h_inj: ArrayView2<f64>,
    h_prod: ArrayView2<f64>,
    a: ArrayView2<f64>,
) -> Result<Vec<Array2<f64>>> {
    if layer.weight.nrows() != 2 {
        return Err(Error::ShapeMismatch {
            context: "graph-convolution weight".into(),
            expected: "2 rows (aggregate, own feature)".into(),
            actual: format!("{} rows", layer.weight.nrows()),
        });
    }
    if h_inj.nrows() != h_prod.nrows() {
        return Err(Error::ShapeMismatch {
            context: "graph-convolution features".into(),
            expected: format!("{} rows", h_inj.nrows()),
            actual: format!("{} rows", h_prod.nrows()),
        });
    }
    if a.nrows() != h_inj.ncols() || a.ncols() != h_prod.ncols() {
        return Err(Error::ShapeMismatch {
            context: "graph-convolution adjacency".into(),
            expected: format!("{} × {}", h_inj.ncols(), h_prod.ncols()),
            actual: format!("{} × {}", a.nrows(), a.ncols()),
        });
    }
    let agg = h_inj.dot(&normalized_adjacency(a));
    let n = h_inj.nrows();
    let mut out = Vec::with_capacity(h_prod.ncols());
    for p in 0..h_prod.ncols() {
        let mut x = Array2::zeros((n, 2));
        for r in 0..n {
            x[[r, 0]] = agg[[r, p]];
            x[[r, 1]] = h_prod[[r, p]];
        }
        let mut y = x.dot(&layer.weight);
        if layer.activation == Activation::Tanh {
            y.mapv_inplace(f64::tanh);
        }
        out.push(y);
    }
    Ok(out)
}

/// Small synthetic panel with gently varying channels (test fixture shared
/// across the network modules).
#[cfg(test)]
pub(crate) fn toy_panel(n_steps: usize, n_inj: usize, n_prod: usize) -> TimeSeriesPanel {
    use ndarray::Array1;
    let times = Array1::from_shape_fn(n_steps, |k| 10.0 * k as f64);
    let injection = Array2::from_shape_fn((n_steps, n_inj), |(k, i)| {
        300.0 + 40.0 * i as f64 + 25.0 * ((k as f64 / 7.0).sin())
    });
    let injector_bhp = Array2::from_elem((n_steps, n_inj), 3200.0);
    let production = Array2::from_shape_fn((n_steps, n_prod), |(k, j)| {
        120.0 + 15.0 * j as f64 + 30.0 * (1.0 - (-(k as f64) / 20.0).exp())
    });
    let producer_bhp = Array2::from_elem((n_steps, n_prod), 1500.0);
    TimeSeriesPanel::new(times, injection, injector_bhp, production, producer_bhp).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::split_rows;
    use ndarray::array;

    fn ids(tags: &[&str]) -> Vec<String> {
        tags.iter().map(|s| s.to_string()).collect()
    }

    fn toy_model(n_inj: usize, n_prod: usize, seed: u64) -> (PiGnnModel, TimeSeriesPanel) {
        let panel = toy_panel(40, n_inj, n_prod);
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let inj_ids: Vec<String> = (1..=n_inj).map(|i| format!("I{i}")).collect();
        let prod_ids: Vec<String> = (1..=n_prod).map(|j| format!("P{j}")).collect();
        let model = PiGnnModel::init(
            &panel,
            &split,
            &inj_ids,
            &prod_ids,
            AdjacencySource::SelfLearned,
            ModelConfig::default(),
            1e-5,
            seed,
        )
        .unwrap();
        (model, panel)
    }

    #[test]
    fn aggregation_normalizes_by_degree() {
        // One injector feeding two producers: degree 2 on the injector side,
        // 1 on each producer, so a feature of 4 arrives as 4/√2.
        let layer = GcnLayer {
            weight: array![[1.0], [0.0]],
            activation: Activation::Linear,
        };
        let h_inj = array![[4.0]];
        let h_prod = array![[0.0, 0.0]];
        let a = array![[1.0, 1.0]];
        let out = gcn_forward(&layer, h_inj.view(), h_prod.view(), a.view()).unwrap();
        let expected = 4.0 / 2.0_f64.sqrt();
        assert!((out[0][[0, 0]] - expected).abs() < 1e-12);
        assert!((out[1][[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn combine_then_project_sums_feature_pair() {
        // Single pair, identity-ish weight [[1],[1]]: output is the sum of
        // the aggregated signal (3, degree 1 both sides) and own feature 2.
        let layer = GcnLayer {
            weight: array![[1.0], [1.0]],
            activation: Activation::Linear,
        };
        let out = gcn_forward(
            &layer,
            array![[3.0]].view(),
            array![[2.0]].view(),
            array![[1.0]].view(),
        )
        .unwrap();
        assert!((out[0][[0, 0]] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_injector_features_leave_only_the_time_path() {
        let layer = GcnLayer {
            weight: array![[1.0, 1.0], [1.0, -1.0]],
            activation: Activation::Linear,
        };
        let h_inj = array![[0.0], [0.0]];
        let h_prod = array![[0.3], [0.9]];
        let out = gcn_forward(
            &layer,
            h_inj.view(),
            h_prod.view(),
            array![[1.0]].view(),
        )
        .unwrap();
        // With zero aggregate the output is ± the producer feature.
        assert_eq!(out[0][[0, 0]], 0.3);
        assert_eq!(out[0][[0, 1]], -0.3);
        assert_eq!(out[0][[1, 0]], 0.9);
    }

    #[test]
    fn isolated_wells_keep_clamped_degrees() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        let n = normalized_adjacency(a.view());
        // Injector 2 and producer 2 have zero degree; the clamp keeps the
        // normalization finite and their entries zero.
        assert!(n.iter().all(|v| v.is_finite()));
        assert_eq!(n[[1, 0]], 0.0);
        assert_eq!(n[[1, 1]], 0.0);
        assert_eq!(n[[0, 0]], 1.0);
    }

    #[test]
    fn forward_shapes_and_positivity() {
        for (n_inj, n_prod) in [(1, 1), (2, 4), (3, 2)] {
            let (model, panel) = toy_model(n_inj, n_prod, 7);
            let pred = predict(
                &model,
                panel.times().view(),
                panel.injection().view(),
                panel.injector_bhp().view(),
            )
            .unwrap();
            assert_eq!(pred.production.dim(), (40, n_prod));
            assert_eq!(pred.producer_bhp.dim(), (40, n_prod));
            assert_eq!(pred.productivity.dim(), (40, n_prod));
            assert_eq!(pred.pore_volume.dim(), (40, n_prod));
            assert!(pred.productivity.iter().all(|&v| v > 0.0));
            assert!(pred.pore_volume.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn positivity_survives_random_parameter_draws() {
        let (mut model, panel) = toy_model(2, 3, 0);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = model.n_params();
            model.set_params((0..n).map(|_| rng.random_range(-3.0..3.0)).collect());
            let pred = predict(
                &model,
                panel.times().view(),
                panel.injection().view(),
                panel.injector_bhp().view(),
            )
            .unwrap();
            assert!(pred.productivity.iter().all(|&v| v > 0.0));
            assert!(pred.pore_volume.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn connectivity_initializes_balanced_and_extracts_squashed() {
        let (mut model, _) = toy_model(2, 4, 3);
        let f = model.extract_connectivity().unwrap();
        assert!(f.values().iter().all(|&v| (v - 0.5).abs() < 1e-12));

        // Saturation limits of the squashing map.
        let layout = model.layout();
        let mut params = model.params().to_vec();
        params[layout.f_raw] = 2000.0;
        params[layout.f_raw + 1] = -2000.0;
        model.set_params(params);
        let f = model.extract_connectivity().unwrap();
        assert_eq!(f.values()[[0, 0]], 1.0);
        assert_eq!(f.values()[[0, 1]], 0.0);
    }

    #[test]
    fn expert_and_self_learned_agree_on_uniform_adjacency() {
        // With F initialized balanced, the self-learned adjacency is a
        // uniform positive matrix; an expert all-ones adjacency normalizes
        // to the same ratios, so both paths start from comparable features.
        let (model_sl, panel) = toy_model(2, 2, 5);
        let adj = AdjacencyMatrix::new(
            ids(&["I1", "I2"]),
            ids(&["P1", "P2"]),
            Array2::from_elem((2, 2), 1u8),
        )
        .unwrap();
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let model_ex = PiGnnModel::init(
            &panel,
            &split,
            &ids(&["I1", "I2"]),
            &ids(&["P1", "P2"]),
            AdjacencySource::Expert(adj),
            ModelConfig::default(),
            1e-5,
            5,
        )
        .unwrap();
        // Same seed → same weights; the two adjacency paths differ only by
        // the overall aggregation scale (σ(logit(0.5)) = 0.5 vs binary 1).
        assert_eq!(model_sl.params(), model_ex.params());
    }

    #[test]
    fn tape_forward_matches_independent_reimplementation() {
        // Rebuild the whole forward pass with plain ndarray arithmetic and
        // demand exact agreement with the tape program — this pins both the
        // math and the flat-parameter layout.
        let (model, panel) = toy_model(2, 3, 11);
        let inputs = model
            .scale_inputs(
                panel.times().view(),
                panel.injection().view(),
                panel.injector_bhp().view(),
            )
            .unwrap();
        let out = forward_scaled(&model, &inputs).unwrap();

        let layout = model.layout();
        let p = model.params();
        let carve = |offset: usize, rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |(r, c)| p[offset + r * cols + c])
        };
        let f = carve(layout.f_raw, 2, 3).mapv(logistic);
        let r_inj: Vec<f64> = f.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
        let r_prod: Vec<f64> = f
            .columns()
            .into_iter()
            .map(|c| 1.0 / c.sum().sqrt())
            .collect();
        let a_hat = Array2::from_shape_fn((2, 3), |(i, j)| f[[i, j]] * r_inj[i] * r_prod[j]);
        let agg_inj = inputs.inj_s.dot(&a_hat);
        let agg_bhp = inputs.inj_bhp_s.dot(&a_hat);
        let w_inj = carve(layout.w_inj, 2, layout.gcn_width);
        let w_bhp = carve(layout.w_bhp.unwrap(), 2, layout.gcn_width);

        let run_head = |lay: &HeadLayout, h: &Array2<f64>| {
            let z1 = (h.dot(&carve(lay.w1, layout.head_input, layout.head_hidden))
                + &carve(lay.b1, 1, layout.head_hidden).row(0))
                .mapv(f64::tanh);
            let z2 = (z1.dot(&carve(lay.w2, layout.head_hidden, layout.head_hidden))
                + &carve(lay.b2, 1, layout.head_hidden).row(0))
                .mapv(f64::tanh);
            z2.dot(&carve(lay.w3, layout.head_hidden, 3)) + &carve(lay.b3, 1, 3).row(0)
        };

        // One joint state: every producer's two branch blocks side by side.
        let mut h = Array2::zeros((40, layout.head_input));
        for prod in 0..3 {
            let branch = |agg: &Array2<f64>, w: &Array2<f64>| {
                let mut x = Array2::zeros((40, 2));
                for r in 0..40 {
                    x[[r, 0]] = agg[[r, prod]];
                    x[[r, 1]] = inputs.t_s[[r, 0]];
                }
                x.dot(w).mapv(f64::tanh)
            };
            let z_inj = branch(&agg_inj, &w_inj);
            let z_bhp = branch(&agg_bhp, &w_bhp);
            let at = prod * 2 * layout.gcn_width;
            h.slice_mut(ndarray::s![.., at..at + layout.gcn_width])
                .assign(&z_inj);
            h.slice_mut(ndarray::s![
                ..,
                at + layout.gcn_width..at + 2 * layout.gcn_width
            ])
            .assign(&z_bhp);
        }

        let q = run_head(&layout.heads[0], &h);
        let j_mat = run_head(&layout.heads[2], &h)
            .mapv(|v| model.config.j_scale * (softplus_ref(v) + POSITIVITY_FLOOR));
        for prod in 0..3 {
            for r in 0..40 {
                assert!(
                    (out.q_scaled[[r, prod]] - q[[r, prod]]).abs() < 1e-12,
                    "q mismatch at ({r},{prod})"
                );
                assert!(
                    (out.productivity[[r, prod]] - j_mat[[r, prod]]).abs() < 1e-12,
                    "productivity mismatch at ({r},{prod})"
                );
            }
        }
    }

    fn softplus_ref(x: f64) -> f64 {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }

    #[test]
    fn unscaled_inputs_are_flagged() {
        let (model, panel) = toy_model(1, 1, 2);
        // Times in raw days are far outside the scaled band.
        let inputs = ScaledInputs {
            t_s: Array2::from_elem((3, 1), 250.0),
            inj_s: Array2::zeros((3, 1)),
            inj_bhp_s: Array2::zeros((3, 1)),
        };
        assert!(inputs.outside_band().is_some());
        let _ = panel;
        let out = forward_scaled(&model, &inputs).unwrap();
        assert_eq!(out.q_scaled.nrows(), 3);
    }

    #[test]
    fn producer_relabeling_permutes_predictions() {
        // Heads and the projection are shared across producers, so renaming
        // the producers (permuting panel columns, ids, and the corresponding
        // connectivity columns) must permute the predictions and nothing
        // else.
        let n_steps = 30;
        let panel = toy_panel(n_steps, 2, 3);
        let perm = [2usize, 0, 1]; // new column j takes old column perm[j]
        let permute_cols = |m: &Array2<f64>| {
            Array2::from_shape_fn(m.dim(), |(k, j)| m[[k, perm[j]]])
        };
        let permuted = TimeSeriesPanel::new(
            panel.times().to_owned(),
            panel.injection().to_owned(),
            panel.injector_bhp().to_owned(),
            permute_cols(&panel.production().to_owned()),
            permute_cols(&panel.producer_bhp().to_owned()),
        )
        .unwrap();

        let split = split_rows(n_steps, (0.7, 0.05, 0.25)).unwrap();
        let prod_ids = ids(&["P1", "P2", "P3"]);
        let prod_ids_permuted: Vec<String> =
            perm.iter().map(|&j| prod_ids[j].clone()).collect();
        let config = ModelConfig {
            gcn_width: 3,
            head_hidden: 4,
            ..ModelConfig::default()
        };
        let mut a = PiGnnModel::init(
            &panel,
            &split,
            &ids(&["I1", "I2"]),
            &prod_ids,
            AdjacencySource::SelfLearned,
            config,
            1e-5,
            42,
        )
        .unwrap();
        let mut b = PiGnnModel::init(
            &permuted,
            &split,
            &ids(&["I1", "I2"]),
            &prod_ids_permuted,
            AdjacencySource::SelfLearned,
            config,
            1e-5,
            42,
        )
        .unwrap();

        // Give the connectivity block distinct values, permuted to match.
        let layout = a.layout();
        let raw = [0.3, -0.8, 1.2, -0.1, 0.55, -1.4];
        let mut pa = a.params().to_vec();
        let mut pb = b.params().to_vec();
        assert_eq!(pa.len(), pb.len());
        for i in 0..2 {
            for j in 0..3 {
                pa[layout.f_raw + i * 3 + j] = raw[i * 3 + j];
                pb[layout.f_raw + i * 3 + j] = raw[i * 3 + perm[j]];
            }
        }
        a.set_params(pa);
        b.set_params(pb);

        let out_a = predict(
            &a,
            panel.times().view(),
            panel.injection().view(),
            panel.injector_bhp().view(),
        )
        .unwrap();
        let out_b = predict(
            &b,
            panel.times().view(),
            panel.injection().view(),
            panel.injector_bhp().view(),
        )
        .unwrap();
        for k in 0..n_steps {
            for j in 0..3 {
                for (name, mb, ma) in [
                    ("production", &out_b.production, &out_a.production),
                    ("producer bhp", &out_b.producer_bhp, &out_a.producer_bhp),
                    ("productivity", &out_b.productivity, &out_a.productivity),
                    ("pore volume", &out_b.pore_volume, &out_a.pore_volume),
                ] {
                    let got = mb[[k, j]];
                    let want = ma[[k, perm[j]]];
                    let scale = want.abs().max(1.0);
                    assert!(
                        (got - want).abs() <= 1e-10 * scale,
                        "{name}[{k},{j}]: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_through_json() {
        let (model, _) = toy_model(2, 3, 13);
        let text = serde_json::to_string(&model).unwrap();
        let back: PiGnnModel = serde_json::from_str(&text).unwrap();
        assert_eq!(model.config, back.config, "config");
        assert_eq!(model.adjacency, back.adjacency, "adjacency");
        assert_eq!(model.params, back.params, "params");
        assert_eq!(model.scalers, back.scalers, "scalers");
        assert_eq!(model.ct_per_psi, back.ct_per_psi, "ct");
        assert_eq!(model.vp_scale, back.vp_scale, "vp_scale");
        assert_eq!(model.injector_ids, back.injector_ids, "injector ids");
        assert_eq!(model.producer_ids, back.producer_ids, "producer ids");
        assert_eq!(model.seed, back.seed, "seed");
        assert_eq!(model, back);
    }
}
