//! Layer-wise training followed by global fine-tuning.
//!
//! Phase one grows the network greedily: each hidden layer is trained in
//! isolation (through a temporary output head) while the layers beneath it
//! stay frozen. Phase two fine-tunes every parameter against the summed
//! per-head cross-entropy, the standard backward pass running right to
//! left. Deterministic for a given seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::policy::mlp::{softmax, Activation, Dense, Mlp, HEAD_SIZES};
use crate::policy::tuple_classes;
use crate::workload::{FeatureVector, TrainingSample};
use crate::{Error, Result};

/// Hyperparameters; every one is a disclosed default, not a paper value.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub layerwise_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub holdout_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.3,
            layerwise_epochs: 20,
            finetune_epochs: 40,
            batch_size: 64,
            seed: 0,
            init_scale: 1.0,
            holdout_frac: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validated(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.layerwise_epochs == 0
            || self.finetune_epochs == 0
            || self.batch_size == 0
            || self.init_scale <= 0.0
        {
            return Err(Error::Config("training hyperparameters must be positive".into()));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return Err(Error::Config("holdout fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One line of the training report.
#[derive(Debug, Clone)]
pub struct EpochStat {
    pub phase: &'static str,
    pub layer: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStat>,
    /// Every head saw a single class; the model degenerates to a constant.
    pub degenerate_labels: bool,
    pub finetune_start_loss: f64,
    pub finetune_end_loss: f64,
    /// Sample indices (into the input slice) held out of training.
    pub holdout: Vec<usize>,
}

impl TrainReport {
    /// Per-epoch CSV with a schema comment, mirroring the other outputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema-version: 1\nphase,layer,epoch,train_loss,holdout_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                e.phase, e.layer, e.epoch, e.train_loss, e.holdout_accuracy
            ));
        }
        out
    }
}

/// Parameter gradients for a model (same shapes as the parameters).
#[derive(Debug, Clone)]
pub struct Grads {
    pub hidden: Vec<Dense>,
    pub heads: Vec<Dense>,
}

/// Mean cross-entropy of the batch under `model`, summed over heads.
pub fn batch_loss(model: &Mlp, xs: &[FeatureVector], ys: &[[usize; 5]]) -> f64 {
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let f = model.forward(x);
        for (h, p) in f.head_probs.iter().enumerate() {
            loss -= p[y[h]].max(1e-300).ln();
        }
    }
    loss / xs.len() as f64
}

/// Mean loss and analytic parameter gradients over a batch.
pub fn loss_and_grads(model: &Mlp, xs: &[FeatureVector], ys: &[[usize; 5]]) -> (f64, Grads) {
    let mut grads = Grads {
        hidden: model.hidden.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        heads: model.heads.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
    };
    let loss = accumulate_grads(
        &model.hidden,
        &model.heads,
        model.activation,
        &xs.iter().map(|x| model.normalize(x)).collect::<Vec<_>>(),
        ys,
        &mut grads.hidden,
        &mut grads.heads,
        0,
    );
    (loss, grads)
}

/// Backprop over a batch; gradients for hidden layers below `stop_layer`
/// are skipped (frozen). Returns the mean loss.
#[allow(clippy::too_many_arguments)]
fn accumulate_grads(
    hidden: &[Dense],
    heads: &[Dense],
    activation: Activation,
    xs: &[Vec<f64>],
    ys: &[[usize; 5]],
    g_hidden: &mut [Dense],
    g_heads: &mut [Dense],
    stop_layer: usize,
) -> f64 {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        // Forward.
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(hidden.len());
        let mut cur: &[f64] = x;
        for l in hidden {
            let mut z = vec![0.0; l.out_dim];
            l.matvec(cur, &mut z);
            for v in z.iter_mut() {
                *v = activation.apply(*v);
            }
            outs.push(z);
            cur = outs.last().unwrap();
        }
        let last = cur.to_vec();
        let mut d_last = vec![0.0; last.len()];
        for (h, head) in heads.iter().enumerate() {
            let mut p = vec![0.0; head.out_dim];
            head.matvec(&last, &mut p);
            softmax(&mut p);
            loss -= p[y[h]].max(1e-300).ln();
            // dlogits = p - onehot
            p[y[h]] -= 1.0;
            let gh = &mut g_heads[h];
            for (o, d) in p.iter().enumerate() {
                gh.b[o] += d / n;
                let row = &mut gh.w[o * head.in_dim..(o + 1) * head.in_dim];
                for (wi, xi) in row.iter_mut().zip(&last) {
                    *wi += d * xi / n;
                }
                let wrow = &head.w[o * head.in_dim..(o + 1) * head.in_dim];
                for (dl, wv) in d_last.iter_mut().zip(wrow) {
                    *dl += d * wv;
                }
            }
        }
        // Through the hidden stack, right to left.
        let mut d_out = d_last;
        for i in (stop_layer..hidden.len()).rev() {
            let l = &hidden[i];
            let input: &[f64] = if i == 0 { x } else { &outs[i - 1] };
            let out = &outs[i];
            let mut d_in = vec![0.0; l.in_dim];
            let gl = &mut g_hidden[i];
            for o in 0..l.out_dim {
                let dz = d_out[o] * activation.grad_from_output(out[o]);
                gl.b[o] += dz / n;
                let row = &mut gl.w[o * l.in_dim..(o + 1) * l.in_dim];
                for (wi, xi) in row.iter_mut().zip(input) {
                    *wi += dz * xi / n;
                }
                let wrow = &l.w[o * l.in_dim..(o + 1) * l.in_dim];
                for (di, wv) in d_in.iter_mut().zip(wrow) {
                    *di += dz * wv;
                }
            }
            d_out = d_in;
        }
    }
    loss / n
}

fn apply(l: &mut Dense, g: &Dense, lr: f64) {
    for (w, gw) in l.w.iter_mut().zip(&g.w) {
        *w -= lr * gw;
    }
    for (b, gb) in l.b.iter_mut().zip(&g.b) {
        *b -= lr * gb;
    }
}

/// One epoch of mini-batch SGD over `order`; returns the mean loss across
/// batches. Only hidden layers at or above `stop_layer` move.
#[allow(clippy::too_many_arguments)]
fn sgd_epoch(
    hidden: &mut [Dense],
    heads: &mut [Dense],
    activation: Activation,
    xs: &[Vec<f64>],
    ys: &[[usize; 5]],
    order: &mut Vec<usize>,
    rng: &mut ChaCha8Rng,
    lr: f64,
    batch_size: usize,
    stop_layer: usize,
) -> f64 {
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0.0;
    for chunk in order.chunks(batch_size) {
        let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
        let by: Vec<[usize; 5]> = chunk.iter().map(|&i| ys[i]).collect();
        let mut gh: Vec<Dense> =
            hidden.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect();
        let mut gheads: Vec<Dense> =
            heads.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect();
        total += accumulate_grads(
            hidden, heads, activation, &bx, &by, &mut gh, &mut gheads, stop_layer,
        );
        batches += 1.0;
        for (l, g) in hidden.iter_mut().zip(&gh).skip(stop_layer) {
            apply(l, g, lr);
        }
        for (l, g) in heads.iter_mut().zip(&gheads) {
            apply(l, g, lr);
        }
    }
    total / batches
}

fn head_accuracy(model: &Mlp, xs: &[FeatureVector], ys: &[[usize; 5]]) -> f64 {
    if xs.is_empty() {
        return 1.0;
    }
    let mut correct = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        let f = model.forward(x);
        for (h, p) in f.head_probs.iter().enumerate() {
            let mut best = 0;
            for (i, v) in p.iter().enumerate() {
                if *v > p[best] {
                    best = i;
                }
            }
            correct += usize::from(best == y[h]);
        }
    }
    correct as f64 / (xs.len() * HEAD_SIZES.len()) as f64
}

/// Trains `model` in place on the labeled samples. The model's hidden
/// architecture comes from its construction; this fits the input
/// normalization, runs both phases, and reports per-epoch progress.
pub fn train(model: &mut Mlp, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validated()?;
    model.check_shape().map_err(|e| Error::Model(format!("untrainable model: {e}")))?;
    let labeled: Vec<(&FeatureVector, [usize; 5])> = samples
        .iter()
        .map(|s| {
            let t = s.label.ok_or_else(|| {
                Error::Config(format!("sample {} is unlabeled", s.id))
            })?;
            Ok((&s.features, tuple_classes(&t)))
        })
        .collect::<Result<_>>()?;
    if labeled.len() < 5 {
        return Err(Error::Config("too few labeled samples to train".into()));
    }

    // Deterministic split.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD15E_A5E0);
    let mut idx: Vec<usize> = (0..labeled.len()).collect();
    idx.shuffle(&mut rng);
    let holdout_n = ((labeled.len() as f64) * cfg.holdout_frac).round() as usize;
    let holdout_n = holdout_n.clamp(1, labeled.len() - 1);
    let (holdout_idx, train_idx) = idx.split_at(holdout_n);

    // Input normalization from the training split.
    let mut mean = vec![0.0; model.input_dim()];
    let mut var = vec![0.0; model.input_dim()];
    for &i in train_idx {
        for (m, v) in mean.iter_mut().zip(&labeled[i].0 .0) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= train_idx.len() as f64;
    }
    for &i in train_idx {
        for ((va, m), v) in var.iter_mut().zip(&mean).zip(&labeled[i].0 .0) {
            *va += (v - m) * (v - m);
        }
    }
    model.norm_mean = mean;
    model.norm_std = var
        .iter()
        .map(|v| (v / train_idx.len() as f64).sqrt().max(1e-9))
        .collect();

    let xs_train: Vec<Vec<f64>> =
        train_idx.iter().map(|&i| model.normalize(labeled[i].0)).collect();
    let ys_train: Vec<[usize; 5]> = train_idx.iter().map(|&i| labeled[i].1).collect();
    let xf_train: Vec<FeatureVector> = train_idx.iter().map(|&i| *labeled[i].0).collect();
    let xf_hold: Vec<FeatureVector> = holdout_idx.iter().map(|&i| *labeled[i].0).collect();
    let ys_hold: Vec<[usize; 5]> = holdout_idx.iter().map(|&i| labeled[i].1).collect();

    // Degenerate-label check: at least one head should have two classes.
    let mut degenerate = true;
    for h in 0..HEAD_SIZES.len() {
        let first = ys_train[0][h];
        if ys_train.iter().any(|y| y[h] != first) {
            degenerate = false;
            break;
        }
    }

    let mut report = TrainReport {
        epochs: Vec::new(),
        degenerate_labels: degenerate,
        finetune_start_loss: 0.0,
        finetune_end_loss: 0.0,
        holdout: holdout_idx.to_vec(),
    };

    let mut order: Vec<usize> = (0..xs_train.len()).collect();
    let mut sgd_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED);

    // Phase 1: greedy layer-wise growth. Stage l trains hidden layer l
    // through a temporary head stack; everything below stays frozen.
    let n_hidden = model.hidden.len();
    for stage in 1..=n_hidden {
        let mut stage_hidden: Vec<Dense> = model.hidden[..stage].to_vec();
        let mut stage_heads: Vec<Dense> = if stage == n_hidden {
            std::mem::take(&mut model.heads)
        } else {
            use rand::SeedableRng as _;
            let mut hrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0xABCD_0000 + stage as u64));
            HEAD_SIZES
                .iter()
                .map(|&h| {
                    Dense::init(model.layer_dims[stage], h, cfg.init_scale, &mut hrng)
                })
                .collect()
        };
        for epoch in 0..cfg.layerwise_epochs {
            let loss = sgd_epoch(
                &mut stage_hidden,
                &mut stage_heads,
                model.activation,
                &xs_train,
                &ys_train,
                &mut order,
                &mut sgd_rng,
                cfg.learning_rate,
                cfg.batch_size,
                stage - 1,
            );
            report.epochs.push(EpochStat {
                phase: "layerwise",
                layer: stage,
                epoch,
                train_loss: loss,
                holdout_accuracy: f64::NAN,
            });
        }
        model.hidden[stage - 1] = stage_hidden.pop().unwrap();
        if stage == n_hidden {
            model.heads = stage_heads;
        }
    }

    // Phase 2: global fine-tune of all parameters.
    report.finetune_start_loss = batch_loss(model, &xf_train, &ys_train);
    for epoch in 0..cfg.finetune_epochs {
        let loss = sgd_epoch(
            &mut model.hidden,
            &mut model.heads,
            model.activation,
            &xs_train,
            &ys_train,
            &mut order,
            &mut sgd_rng,
            cfg.learning_rate,
            cfg.batch_size,
            0,
        );
        let acc = head_accuracy(model, &xf_hold, &ys_hold);
        report.epochs.push(EpochStat {
            phase: "finetune",
            layer: 0,
            epoch,
            train_loss: loss,
            holdout_accuracy: acc,
        });
    }
    report.finetune_end_loss = batch_loss(model, &xf_train, &ys_train);
    Ok(report)
}
