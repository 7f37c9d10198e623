//! CNN-LSTM classifier for epoched EEG trials.
//!
//! A trial `X ∈ R^{n_c × n_T}` is cut into `n_T / n_t` non-overlapping
//! segments. Each segment passes through a temporal convolution (one
//! `(1, n_t)` kernel per filter, collapsing time), batch normalization, a
//! depthwise spatial convolution (D filters of size `(n_c, 1)` per
//! temporal map, no cross-map mixing), ELU, batch normalization, and
//! dropout. The resulting per-segment feature vectors `[F1·D]` feed a
//! bidirectional LSTM; the concatenated final hidden states of the two
//! directions pass through dropout and a dense softmax head.

mod checkpoint;
pub(crate) mod graph;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    /// Input channels (n_c).
    pub n_channels: usize,
    /// Input samples per trial (n_T).
    pub n_time: usize,
    /// Samples per segment (n_t); must divide `n_time`.
    pub segment_len: usize,
    /// Temporal filters (F1).
    pub n_temporal_filters: usize,
    /// Spatial filters per temporal map (D).
    pub depth_multiplier: usize,
    /// LSTM hidden width per direction (H).
    pub lstm_hidden: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    /// Weight of the current batch in the running-statistics EMA:
    /// `running ← (1−m)·running + m·batch`.
    pub bn_momentum: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            n_channels: 9,
            n_time: 256,
            segment_len: 16,
            n_temporal_filters: 8,
            depth_multiplier: 2,
            lstm_hidden: 32,
            n_classes: 3,
            dropout_rate: 0.25,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ArchConfig {
    /// Segments per trial.
    pub fn n_segments(&self) -> usize {
        self.n_time / self.segment_len
    }

    /// Per-segment feature width after the convolutions (F1·D).
    pub fn feature_width(&self) -> usize {
        self.n_temporal_filters * self.depth_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.n_channels,
            self.n_time,
            self.segment_len,
            self.n_temporal_filters,
            self.depth_multiplier,
            self.lstm_hidden,
            self.n_classes,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(Error::InvalidArgument(
                "all architecture extents must be positive".into(),
            ));
        }
        if self.n_time % self.segment_len != 0 {
            return Err(Error::InvalidArgument(format!(
                "segment length {} does not divide trial length {}",
                self.segment_len, self.n_time
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.bn_epsilon <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidArgument(
                "bn_epsilon must be positive and bn_momentum in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One batch-normalization site.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BnParams {
    fn fresh(features: usize) -> Self {
        BnParams {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
        }
    }
}

/// Gate parameters for one LSTM direction. Each weight is `[H, H + I]`
/// and acts on the concatenation `[h_{t−1}, x_t]` (hidden part first).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_c: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_c: Array1<f64>,
}

/// All model parameters. Trainable arrays are visited in a fixed order by
/// [`ModelParams::trainable`]; running statistics are not trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[F1, n_t]` temporal kernels.
    pub w_temp: Array2<f64>,
    /// `[F1]` temporal bias.
    pub b_temp: Array1<f64>,
    /// `[F1, D, n_c]` depthwise spatial kernels (no bias).
    pub w_spat: Array3<f64>,
    /// After the temporal convolution (F1 features).
    pub bn1: BnParams,
    /// After the spatial convolution and ELU (F1·D features).
    pub bn2: BnParams,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    /// `[n_classes, 2H]` output weights.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Hidden and cell state of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zero(hidden: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

/// Forward-pass mode. Training mode uses batch statistics in BN and
/// applies inverted dropout driven by the seed; inference uses running
/// statistics and no dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Infer,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

/// Fresh parameters: Glorot-uniform weights, zero biases except the LSTM
/// forget-gate bias (1), identity batch-norm.
pub fn init_params(cfg: &ArchConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f1 = cfg.n_temporal_filters;
    let d = cfg.depth_multiplier;
    let (n_c, n_t, h, k) = (cfg.n_channels, cfg.segment_len, cfg.lstm_hidden, cfg.n_classes);
    let i = cfg.feature_width();

    let w_temp =
        Array2::from_shape_vec((f1, n_t), glorot(&mut rng, n_t, f1, f1 * n_t)).unwrap();
    let w_spat =
        Array3::from_shape_vec((f1, d, n_c), glorot(&mut rng, n_c, d, f1 * d * n_c)).unwrap();
    let lstm = |rng: &mut ChaCha8Rng| LstmParams {
        w_f: Array2::from_shape_vec((h, h + i), glorot(rng, h + i, h, h * (h + i))).unwrap(),
        w_i: Array2::from_shape_vec((h, h + i), glorot(rng, h + i, h, h * (h + i))).unwrap(),
        w_o: Array2::from_shape_vec((h, h + i), glorot(rng, h + i, h, h * (h + i))).unwrap(),
        w_c: Array2::from_shape_vec((h, h + i), glorot(rng, h + i, h, h * (h + i))).unwrap(),
        b_f: Array1::ones(h),
        b_i: Array1::zeros(h),
        b_o: Array1::zeros(h),
        b_c: Array1::zeros(h),
    };
    let lstm_fwd = lstm(&mut rng);
    let lstm_bwd = lstm(&mut rng);
    let w_out =
        Array2::from_shape_vec((k, 2 * h), glorot(&mut rng, 2 * h, k, k * 2 * h)).unwrap();
    Ok(ModelParams {
        w_temp,
        b_temp: Array1::zeros(f1),
        w_spat,
        bn1: BnParams::fresh(f1),
        bn2: BnParams::fresh(f1 * d),
        lstm_fwd,
        lstm_bwd,
        w_out,
        b_out: Array1::zeros(k),
    })
}

impl ModelParams {
    /// Trainable arrays in canonical order (running statistics excluded).
    pub fn trainable(&self) -> Vec<ArrayViewD<'_, f64>> {
        fn l(p: &LstmParams) -> Vec<ArrayViewD<'_, f64>> {
            vec![
                p.w_f.view().into_dyn(),
                p.w_i.view().into_dyn(),
                p.w_o.view().into_dyn(),
                p.w_c.view().into_dyn(),
                p.b_f.view().into_dyn(),
                p.b_i.view().into_dyn(),
                p.b_o.view().into_dyn(),
                p.b_c.view().into_dyn(),
            ]
        }
        let mut out = vec![
            self.w_temp.view().into_dyn(),
            self.b_temp.view().into_dyn(),
            self.w_spat.view().into_dyn(),
            self.bn1.gamma.view().into_dyn(),
            self.bn1.beta.view().into_dyn(),
            self.bn2.gamma.view().into_dyn(),
            self.bn2.beta.view().into_dyn(),
        ];
        out.extend(l(&self.lstm_fwd));
        out.extend(l(&self.lstm_bwd));
        out.push(self.w_out.view().into_dyn());
        out.push(self.b_out.view().into_dyn());
        out
    }

    /// Mutable counterpart of [`ModelParams::trainable`], same order.
    pub fn trainable_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out: Vec<ArrayViewMutD<'_, f64>> = vec![
            self.w_temp.view_mut().into_dyn(),
            self.b_temp.view_mut().into_dyn(),
            self.w_spat.view_mut().into_dyn(),
            self.bn1.gamma.view_mut().into_dyn(),
            self.bn1.beta.view_mut().into_dyn(),
            self.bn2.gamma.view_mut().into_dyn(),
            self.bn2.beta.view_mut().into_dyn(),
        ];
        let [f, b] = [&mut self.lstm_fwd, &mut self.lstm_bwd];
        for p in [f, b] {
            out.push(p.w_f.view_mut().into_dyn());
            out.push(p.w_i.view_mut().into_dyn());
            out.push(p.w_o.view_mut().into_dyn());
            out.push(p.w_c.view_mut().into_dyn());
            out.push(p.b_f.view_mut().into_dyn());
            out.push(p.b_i.view_mut().into_dyn());
            out.push(p.b_o.view_mut().into_dyn());
            out.push(p.b_c.view_mut().into_dyn());
        }
        out.push(self.w_out.view_mut().into_dyn());
        out.push(self.b_out.view_mut().into_dyn());
        out
    }
}

/// Trainable parameter count (weights, biases, γ, β; running statistics
/// are state, not parameters).
pub fn param_count(cfg: &ArchConfig) -> usize {
    let f1 = cfg.n_temporal_filters;
    let d = cfg.depth_multiplier;
    let (n_c, n_t, h, k) = (cfg.n_channels, cfg.segment_len, cfg.lstm_hidden, cfg.n_classes);
    let i = f1 * d;
    let conv = f1 * n_t + f1 + f1 * d * n_c;
    let bn = 2 * f1 + 2 * i;
    let lstm = 2 * 4 * (h * (h + i) + h);
    let head = k * 2 * h + k;
    conv + bn + lstm + head
}

/// Parameter count of a recurrence-free variant: the LSTM is replaced by
/// one dense temporal convolution spanning all segments at matched output
/// width (2H features over the full `n_segments × F1·D` block). Everything
/// else is unchanged. Used to check that the recurrent design is the
/// smaller model.
pub fn param_count_full_span_conv_variant(cfg: &ArchConfig) -> usize {
    let f1 = cfg.n_temporal_filters;
    let d = cfg.depth_multiplier;
    let (n_c, n_t, h, k) = (cfg.n_channels, cfg.segment_len, cfg.lstm_hidden, cfg.n_classes);
    let i = f1 * d;
    let conv = f1 * n_t + f1 + f1 * d * n_c;
    let bn = 2 * f1 + 2 * i;
    let full_span = 2 * h * (cfg.n_segments() * i) + 2 * h;
    let head = k * 2 * h + k;
    conv + bn + full_span + head
}

/// Cut `X [n_c × n_T]` into `n_T / segment_len` non-overlapping segments.
pub fn segment(x: &ArrayView2<'_, f64>, segment_len: usize) -> Result<Vec<Array2<f64>>> {
    let n_time = x.ncols();
    if segment_len == 0 || n_time % segment_len != 0 {
        return Err(Error::Shape {
            context: "segment",
            msg: format!("segment length {segment_len} does not divide {n_time}"),
        });
    }
    Ok((0..n_time / segment_len)
        .map(|s| {
            x.slice(ndarray::s![.., s * segment_len..(s + 1) * segment_len])
                .to_owned()
        })
        .collect())
}

/// Temporal convolution of one segment: `out[f][c] = Σ_k W[f][k]·x[c][k] + b[f]`.
pub fn temporal_conv(
    x: &ArrayView2<'_, f64>,
    w_temp: &Array2<f64>,
    b_temp: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (f1, n_t) = w_temp.dim();
    if x.ncols() != n_t {
        return Err(Error::Shape {
            context: "temporal_conv",
            msg: format!("segment has {} samples, kernels expect {n_t}", x.ncols()),
        });
    }
    let mut out = w_temp.dot(&x.t()); // [F1, n_c]
    for f in 0..f1 {
        for v in out.row_mut(f) {
            *v += b_temp[f];
        }
    }
    Ok(out)
}

/// Depthwise spatial convolution: `out[f·D+d] = Σ_c W[f][d][c]·y[f][c]`.
/// No mixing across temporal maps and no bias.
pub fn spatial_depthwise_conv(
    y: &ArrayView2<'_, f64>,
    w_spat: &Array3<f64>,
) -> Result<Array1<f64>> {
    let (f1, d, n_c) = w_spat.dim();
    if y.dim() != (f1, n_c) {
        return Err(Error::Shape {
            context: "spatial_depthwise_conv",
            msg: format!("input {:?}, kernels expect ({f1}, {n_c})", y.dim()),
        });
    }
    let mut out = Array1::zeros(f1 * d);
    for f in 0..f1 {
        for dd in 0..d {
            let mut acc = 0.0;
            for c in 0..n_c {
                acc += w_spat[[f, dd, c]] * y[[f, c]];
            }
            out[f * d + dd] = acc;
        }
    }
    Ok(out)
}

/// Batch normalization over rows of `x [batch × features]`.
///
/// Training mode normalizes with the biased batch statistics
/// (`σ²_B = (1/m)Σ(x−μ_B)²`) and returns them so the caller can update
/// running statistics; inference normalizes with the provided running
/// statistics. Output: `γ·(x−μ)/√(σ²+ε) + β`.
pub fn batch_norm(
    x: &ArrayView2<'_, f64>,
    bn: &BnParams,
    eps: f64,
    training: bool,
) -> Result<(Array2<f64>, Option<(Array1<f64>, Array1<f64>)>)> {
    let features = x.ncols();
    if bn.gamma.len() != features {
        return Err(Error::Shape {
            context: "batch_norm",
            msg: format!("{} features, γ has {}", features, bn.gamma.len()),
        });
    }
    let (mean, var) = if training {
        if x.nrows() < 2 {
            return Err(Error::InvalidArgument(
                "batch normalization in training mode needs a batch of at least 2".into(),
            ));
        }
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(ndarray::Axis(0)).unwrap();
        (mean, var)
    } else {
        (bn.running_mean.clone(), bn.running_var.clone())
    };
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let out = ndarray::Array2::from_shape_fn(x.dim(), |(r, f)| {
        bn.gamma[f] * (x[[r, f]] - mean[f]) * inv_std[f] + bn.beta[f]
    });
    Ok((out, training.then_some((mean, var))))
}

/// Fold a batch's statistics into the running EMA:
/// `running ← (1−m)·running + m·batch`.
pub fn update_running_stats(bn: &mut BnParams, mean: &Array1<f64>, var: &Array1<f64>, momentum: f64) {
    bn.running_mean = &bn.running_mean * (1.0 - momentum) + &(mean * momentum);
    bn.running_var = &bn.running_var * (1.0 - momentum) + &(var * momentum);
}

/// One LSTM step:
/// f,i,o = σ(W_·[h,x]+b_·), c̃ = tanh(W_c[h,x]+b_c),
/// c_t = f∗c_{t−1} + i∗c̃, h_t = o∗tanh(c_t).
pub fn lstm_cell(
    x: &ArrayView1<'_, f64>,
    state: &LstmState,
    p: &LstmParams,
) -> Result<LstmState> {
    let (h_dim, z_dim) = p.w_f.dim();
    if state.h.len() + x.len() != z_dim || state.h.len() != h_dim {
        return Err(Error::Shape {
            context: "lstm_cell",
            msg: format!(
                "state {} + input {} does not match weights {:?}",
                state.h.len(),
                x.len(),
                p.w_f.dim()
            ),
        });
    }
    let mut z = Array1::zeros(z_dim);
    z.slice_mut(ndarray::s![..h_dim]).assign(&state.h);
    z.slice_mut(ndarray::s![h_dim..]).assign(x);
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let f = (p.w_f.dot(&z) + &p.b_f).mapv(sigmoid);
    let i = (p.w_i.dot(&z) + &p.b_i).mapv(sigmoid);
    let o = (p.w_o.dot(&z) + &p.b_o).mapv(sigmoid);
    let c_tilde = (p.w_c.dot(&z) + &p.b_c).mapv(f64::tanh);
    let c = &f * &state.c + &i * &c_tilde;
    let h = &o * &c.mapv(f64::tanh);
    Ok(LstmState { h, c })
}

/// Run both LSTM directions over a segment-feature sequence from zero
/// states and concatenate the final hidden states: `[h_fwd_T, h_bwd_1]`.
pub fn bilstm(
    seq: &[Array1<f64>],
    fwd: &LstmParams,
    bwd: &LstmParams,
) -> Result<Array1<f64>> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("bilstm: empty sequence".into()));
    }
    let h_dim = fwd.w_f.nrows();
    let mut state_f = LstmState::zero(h_dim);
    for x in seq {
        state_f = lstm_cell(&x.view(), &state_f, fwd)?;
    }
    let mut state_b = LstmState::zero(h_dim);
    for x in seq.iter().rev() {
        state_b = lstm_cell(&x.view(), &state_b, bwd)?;
    }
    let mut out = Array1::zeros(2 * h_dim);
    out.slice_mut(ndarray::s![..h_dim]).assign(&state_f.h);
    out.slice_mut(ndarray::s![h_dim..]).assign(&state_b.h);
    Ok(out)
}

/// Full forward pass: class probabilities per trial, rows summing to 1.
///
/// Pure function: training mode uses batch statistics and seeded dropout
/// but does not touch running statistics (the training loop owns those
/// updates).
pub fn forward(
    cfg: &ArchConfig,
    params: &ModelParams,
    x: &Array3<f64>,
    mode: Mode,
) -> Result<Array2<f64>> {
    let g = crate::autodiff::Graph::new();
    let out = graph::build_graph(&g, cfg, params, x, mode, false)?;
    let probs = out.logits.softmax(1);
    Ok(probs
        .value()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("probabilities are 2-d"))
}
