//! Differentiable forward pass, batched over trials.
//!
//! The convolutional stage is phrased as a few large matrix products
//! instead of per-segment loops. The input batch `[B, n_c, n_T]` is laid
//! out segment-major as a matrix `[S·B·n_c, n_t]` (row order: segment,
//! then trial, then channel), so that
//!
//! * the temporal convolution is one matmul against `W_tempᵀ [n_t, F1]`,
//! * the first BN site sees its statistics pooled over trials, segments
//!   and channels per temporal map (the conventional pooling for a
//!   convolutional feature map),
//! * each depthwise spatial filter `f` is a matmul `[S·B, n_c]·[n_c, D]`,
//!   and the second BN site pools over trials and segments per feature,
//! * LSTM step `s` is the contiguous row block `[s·B, (s+1)·B)` of the
//!   feature matrix, so the recurrence works on `[B, F1·D]` slices.
//!
//! Each LSTM direction fuses its four gates into one matmul per step by
//! concatenating the gate weights row-wise (order f, i, o, c̃) and slicing
//! the pre-activation columns.

use ndarray::{Array1, Array2, Array3, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

use super::{ArchConfig, BnParams, Mode, ModelParams};

pub(crate) struct BnBatchStats {
    pub bn1: (Array1<f64>, Array1<f64>),
    pub bn2: (Array1<f64>, Array1<f64>),
}

pub(crate) struct GraphOutputs<'g> {
    /// Trainable-parameter leaves in [`ModelParams::trainable`] order
    /// (empty when built without gradients).
    pub leaves: Vec<Tensor<'g>>,
    /// `[B, n_classes]` pre-softmax scores.
    pub logits: Tensor<'g>,
    /// Batch statistics of the two BN sites (training mode only), for the
    /// caller's running-statistics update.
    pub bn_stats: Option<BnBatchStats>,
}

/// Rearrange `[B, n_c, n_T]` into the segment-major design matrix
/// `[S·B·n_c, n_t]`.
fn arrange_input(x: &Array3<f64>, cfg: &ArchConfig) -> Array2<f64> {
    let (b, n_c, _) = x.dim();
    let (s, n_t) = (cfg.n_segments(), cfg.segment_len);
    let mut out = Array2::zeros((s * b * n_c, n_t));
    for si in 0..s {
        for bi in 0..b {
            for ci in 0..n_c {
                let row = (si * b + bi) * n_c + ci;
                out.row_mut(row)
                    .assign(&x.slice(ndarray::s![bi, ci, si * n_t..(si + 1) * n_t]));
            }
        }
    }
    out
}

struct BnSite<'g> {
    gamma: Tensor<'g>,
    beta: Tensor<'g>,
}

/// In-graph batch normalization over rows. Training mode computes biased
/// batch statistics in-graph (so gradients flow through them) and reports
/// their values; inference mode uses the stored running statistics.
fn bn_graph<'g>(
    g: &'g Graph,
    x: Tensor<'g>,
    site: &BnSite<'g>,
    stored: &BnParams,
    eps: f64,
    training: bool,
) -> (Tensor<'g>, Option<(Array1<f64>, Array1<f64>)>) {
    if training {
        let mean = x.mean(0);
        let centered = x - mean;
        let var = (centered * centered).mean(0);
        let mean_val = to_1d(mean.value());
        let var_val = to_1d(var.value());
        let inv_std = ((var + g.scalar(eps)).log().scale(-0.5)).exp();
        let y = centered * inv_std * site.gamma + site.beta;
        (y, Some((mean_val, var_val)))
    } else {
        let inv = stored.running_var.mapv(|v| 1.0 / (v + eps).sqrt());
        let centered = x - g.constant(stored.running_mean.clone().into_dyn());
        let y = centered * g.constant(inv.into_dyn()) * site.gamma + site.beta;
        (y, None)
    }
}

fn to_1d(v: ArrayD<f64>) -> Array1<f64> {
    v.into_dimensionality::<ndarray::Ix1>()
        .expect("BN statistics are 1-d")
}

/// Inverted-dropout mask: entries are `1/keep` with probability `keep`,
/// else 0, so activations keep their expectation.
fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> ArrayD<f64> {
    let keep = 1.0 - rate;
    ArrayD::from_shape_fn(IxDyn(&[rows, cols]), |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

struct LstmDirection<'g> {
    /// `[H+I, 4H]`: gate weights concatenated row-wise (f, i, o, c̃) and
    /// transposed once so a step is a single right-multiplication.
    w_all_t: Tensor<'g>,
    /// `[4H]` in the same gate order.
    b_all: Tensor<'g>,
    hidden: usize,
}

impl<'g> LstmDirection<'g> {
    fn new(g: &'g Graph, leaves: &[Tensor<'g>; 8], hidden: usize) -> Self {
        let w_all = g.concat(&leaves[0..4], 0);
        let b_all = g.concat(&leaves[4..8], 0);
        LstmDirection {
            w_all_t: w_all.t(),
            b_all,
            hidden,
        }
    }

    fn step(
        &self,
        g: &'g Graph,
        x: Tensor<'g>,
        h: Tensor<'g>,
        c: Tensor<'g>,
    ) -> (Tensor<'g>, Tensor<'g>) {
        let hd = self.hidden;
        let z = g.concat(&[h, x], 1);
        let pre = z.matmul(self.w_all_t) + self.b_all;
        let f = pre.slice(1, 0, hd).sigmoid();
        let i = pre.slice(1, hd, hd).sigmoid();
        let o = pre.slice(1, 2 * hd, hd).sigmoid();
        let c_tilde = pre.slice(1, 3 * hd, hd).tanh();
        let c_next = f * c + i * c_tilde;
        let h_next = o * c_next.tanh();
        (h_next, c_next)
    }
}

/// Build the forward graph for a batch. With `want_grads`, all trainable
/// arrays become gradient-carrying leaves (in canonical order); otherwise
/// they are constants.
pub(crate) fn build_graph<'g>(
    g: &'g Graph,
    cfg: &ArchConfig,
    params: &ModelParams,
    x: &Array3<f64>,
    mode: Mode,
    want_grads: bool,
) -> Result<GraphOutputs<'g>> {
    cfg.validate()?;
    let (batch, n_c, n_time) = x.dim();
    if n_c != cfg.n_channels || n_time != cfg.n_time {
        return Err(Error::Shape {
            context: "forward",
            msg: format!(
                "input [{batch}, {n_c}, {n_time}] does not match architecture [{}, {}]",
                cfg.n_channels, cfg.n_time
            ),
        });
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("forward: empty batch".into()));
    }
    let training = matches!(mode, Mode::Train { .. });
    if training && batch < 2 {
        return Err(Error::InvalidArgument(
            "training-mode forward needs at least 2 trials for batch statistics".into(),
        ));
    }

    let leaf = |v: ArrayD<f64>| {
        if want_grads {
            g.leaf(v, true)
        } else {
            g.constant(v)
        }
    };
    let mut leaves = Vec::with_capacity(25);
    for arr in params.trainable() {
        leaves.push(leaf(arr.to_owned()));
    }
    let w_temp = leaves[0];
    let b_temp = leaves[1];
    let w_spat = leaves[2];
    let bn1 = BnSite {
        gamma: leaves[3],
        beta: leaves[4],
    };
    let bn2 = BnSite {
        gamma: leaves[5],
        beta: leaves[6],
    };
    let lstm_f: [Tensor<'g>; 8] = leaves[7..15].try_into().unwrap();
    let lstm_b: [Tensor<'g>; 8] = leaves[15..23].try_into().unwrap();
    let w_out = leaves[23];
    let b_out = leaves[24];

    let (f1, d) = (cfg.n_temporal_filters, cfg.depth_multiplier);
    let (s, h) = (cfg.n_segments(), cfg.lstm_hidden);
    let width = cfg.feature_width();

    // [S·B·n_c, n_t] -> temporal conv -> [S·B·n_c, F1]
    let design = g.constant(arrange_input(x, cfg).into_dyn());
    let conv1 = design.matmul(w_temp.t()) + b_temp;

    let eps = cfg.bn_epsilon;
    let (bn1_out, bn1_stats) = bn_graph(g, conv1, &bn1, &params.bn1, eps, training);

    // Depthwise: per temporal map f, [S·B, n_c]·[n_c, D]; concat f-major
    // so feature f·D+d matches the per-sample operator.
    let rows = s * batch;
    let mut per_map = Vec::with_capacity(f1);
    for f in 0..f1 {
        let col = bn1_out.slice(1, f, 1).reshape(&[rows, n_c]);
        let w_f = w_spat.slice(0, f, 1).reshape(&[d, n_c]).t();
        per_map.push(col.matmul(w_f));
    }
    let spat = g.concat(&per_map, 1); // [S·B, F1·D]

    let act = spat.elu(1.0);
    let (bn2_out, bn2_stats) = bn_graph(g, act, &bn2, &params.bn2, eps, training);

    let mut rng = match mode {
        Mode::Train { dropout_seed } => Some(ChaCha8Rng::seed_from_u64(dropout_seed)),
        Mode::Infer => None,
    };
    let features = match (&mut rng, cfg.dropout_rate > 0.0) {
        (Some(r), true) => {
            bn2_out * g.constant(dropout_mask(r, rows, width, cfg.dropout_rate))
        }
        _ => bn2_out,
    };

    let dir_f = LstmDirection::new(g, &lstm_f, h);
    let dir_b = LstmDirection::new(g, &lstm_b, h);
    let zeros = || g.constant(ArrayD::zeros(IxDyn(&[batch, h])));
    let seg = |si: usize| features.slice(0, si * batch, batch);

    let (mut h_f, mut c_f) = (zeros(), zeros());
    for si in 0..s {
        (h_f, c_f) = dir_f.step(g, seg(si), h_f, c_f);
    }
    let (mut h_b, mut c_b) = (zeros(), zeros());
    for si in (0..s).rev() {
        (h_b, c_b) = dir_b.step(g, seg(si), h_b, c_b);
    }
    let mut summary = g.concat(&[h_f, h_b], 1); // [B, 2H]

    if let (Some(r), true) = (&mut rng, cfg.dropout_rate > 0.0) {
        summary = summary * g.constant(dropout_mask(r, batch, 2 * h, cfg.dropout_rate));
    }

    let logits = summary.matmul(w_out.t()) + b_out;

    Ok(GraphOutputs {
        leaves: if want_grads { leaves } else { Vec::new() },
        logits,
        bn_stats: match (bn1_stats, bn2_stats) {
            (Some(a), Some(b)) => Some(BnBatchStats { bn1: a, bn2: b }),
            _ => None,
        },
    })
}
