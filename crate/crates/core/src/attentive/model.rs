use super::kernel::{dot, encoder_backward, encoder_forward};
use super::params::{EncoderConfig, EncoderParams, Head, HeadKind};
use super::tokens::{assessment, tokenize, TokenizedSequence, Vocab};
use super::AttentiveError;
use crate::corpus::{ScoreLabel, StudentSequence};
use crate::rng;
use crate::score::{clamp_round, ScorePrediction, MAX_TOTAL_SCORE};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const STREAM_ENCODER_INIT: u64 = 1;
const STREAM_PRETRAIN_HEAD: u64 = 2;
const STREAM_SCORE_HEAD: u64 = 3;
const STREAM_EVAL_MASKS: u64 = 4;
const STREAM_SHUFFLE: u64 = 5;
const STREAM_TRAIN_MASKS: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub pretrain_epochs: u32,
    pub finetune_epochs: u32,
}

/// Encoder, active output head and question vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentiveModel {
    pub encoder: EncoderParams,
    pub head: Head,
    pub vocab: Vocab,
    pub meta: TrainMeta,
}

impl AttentiveModel {
    /// Freshly initialized encoder with a pre-training head.
    pub fn new(cfg: EncoderConfig, vocab: Vocab, seed: u64) -> Result<Self, AttentiveError> {
        cfg.validate().map_err(AttentiveError::InvalidConfig)?;
        let encoder = EncoderParams::init(cfg, vocab.size(), rng::derive(seed, STREAM_ENCODER_INIT));
        let head = Head::init(HeadKind::Pretrain, cfg.d_model, rng::derive(seed, STREAM_PRETRAIN_HEAD));
        Ok(AttentiveModel { encoder, head, vocab, meta: TrainMeta { seed, ..TrainMeta::default() } })
    }

    pub fn max_len(&self) -> usize {
        self.encoder.cfg.max_len
    }

    fn expect_head(&self, expected: HeadKind) -> Result<(), AttentiveError> {
        if self.head.kind != expected {
            return Err(AttentiveError::HeadMismatch { expected, found: self.head.kind });
        }
        Ok(())
    }
}

/// A masked position and its original assessments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTarget {
    pub position: usize,
    pub correct: bool,
    pub timely: bool,
}

/// Mask both assessment channels at each real, not-yet-masked position
/// independently with probability `rate`. If that masks nothing, one eligible
/// position chosen uniformly is masked instead. Question and section tokens
/// are left untouched.
///
/// # Panics
/// If `rate` is not in `(0, 1)`.
pub fn mask_assessments(
    seq: &TokenizedSequence,
    rate: f64,
    seed: u64,
) -> (TokenizedSequence, Vec<MaskTarget>) {
    assert!(rate > 0.0 && rate < 1.0, "mask rate must lie in (0, 1)");
    let mut r = rng::rng(seed);
    let eligible: Vec<usize> =
        (0..seq.len()).filter(|&p| seq.attention_mask[p] && !seq.tokens[p].is_masked()).collect();
    let mut chosen: Vec<usize> = eligible.iter().copied().filter(|_| r.random_bool(rate)).collect();
    if chosen.is_empty() && !eligible.is_empty() {
        chosen.push(eligible[r.random_range(0..eligible.len())]);
    }
    let mut out = seq.clone();
    let targets = chosen
        .into_iter()
        .map(|p| {
            let t = &mut out.tokens[p];
            let target = MaskTarget {
                position: p,
                correct: t.correctness == assessment::POSITIVE,
                timely: t.timeliness == assessment::POSITIVE,
            };
            t.correctness = assessment::MASK;
            t.timeliness = assessment::MASK;
            target
        })
        .collect();
    (out, targets)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Loss of one sequence with optional gradients.
struct SeqResult {
    loss: f64,
    /// Number of labels the loss sums over.
    count: usize,
    /// Correctly predicted correctness labels (pre-training only).
    hits: usize,
    encoder_grad: Option<Vec<f64>>,
    head_grad: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GradMode {
    None,
    HeadOnly,
    Full,
}

fn pretrain_seq(
    enc: &EncoderParams,
    head: &Head,
    seq: &TokenizedSequence,
    targets: &[MaskTarget],
    mode: GradMode,
) -> Result<SeqResult, AttentiveError> {
    let d = enc.cfg.d_model;
    let cache = encoder_forward(enc, seq)?;
    let (w, b) = (head.weights(), head.bias());
    let mut loss = 0.0;
    let mut hits = 0;
    let mut dh = vec![0.0; cache.output.len()];
    let mut gh = vec![0.0; head.data.len()];
    for t in targets {
        let h = &cache.output[t.position * d..(t.position + 1) * d];
        for (o, y) in [t.correct, t.timely].into_iter().enumerate() {
            let z = b[o] + (0..d).map(|e| h[e] * w[e * 2 + o]).sum::<f64>();
            let yv = if y { 1.0 } else { 0.0 };
            loss += softplus(z) - yv * z;
            if o == 0 && (z > 0.0) == y {
                hits += 1;
            }
            if mode != GradMode::None {
                let dz = sigmoid(z) - yv;
                for e in 0..d {
                    gh[e * 2 + o] += h[e] * dz;
                    dh[t.position * d + e] += w[e * 2 + o] * dz;
                }
                gh[2 * d + o] += dz;
            }
        }
    }
    finish(enc, &cache, mode, loss, 2 * targets.len(), hits, dh, gh)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    enc: &EncoderParams,
    cache: &super::kernel::EncoderCache,
    mode: GradMode,
    loss: f64,
    count: usize,
    hits: usize,
    dh: Vec<f64>,
    gh: Vec<f64>,
) -> Result<SeqResult, AttentiveError> {
    let encoder_grad = (mode == GradMode::Full).then(|| {
        let mut g = vec![0.0; enc.data.len()];
        encoder_backward(enc, cache, &dh, &mut g);
        g
    });
    Ok(SeqResult { loss, count, hits, encoder_grad, head_grad: (mode != GradMode::None).then_some(gh) })
}

/// Mean of the final hidden states over real positions.
fn pooled(cache: &super::kernel::EncoderCache, d: usize) -> (Vec<f64>, f64) {
    let n = cache.mask.iter().filter(|m| **m).count() as f64;
    let mut p = vec![0.0; d];
    for (row, _) in cache.output.chunks(d).zip(&cache.mask).filter(|(_, m)| **m) {
        p.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    p.iter_mut().for_each(|v| *v /= n);
    (p, n)
}

fn score_seq(
    enc: &EncoderParams,
    head: &Head,
    seq: &TokenizedSequence,
    target: f64,
    mode: GradMode,
) -> Result<(SeqResult, f64), AttentiveError> {
    let d = enc.cfg.d_model;
    let cache = encoder_forward(enc, seq)?;
    let (p, n) = pooled(&cache, d);
    let y = dot(&p, head.weights()) + head.bias()[0];
    let loss = (y - target) * (y - target);
    let mut dh = vec![0.0; cache.output.len()];
    let mut gh = vec![0.0; head.data.len()];
    if mode != GradMode::None {
        let dy = 2.0 * (y - target);
        for e in 0..d {
            gh[e] = p[e] * dy;
        }
        gh[d] = dy;
        for (row, _) in dh.chunks_mut(d).zip(&cache.mask).filter(|(_, m)| **m) {
            row.iter_mut().zip(head.weights()).for_each(|(g, w)| *g = w * dy / n);
        }
    }
    Ok((finish(enc, &cache, mode, loss, 1, 0, dh, gh)?, y))
}

/// Summed masked-assessment cross-entropy of one sequence (both channels) and
/// its gradients w.r.t. the encoder and head parameters.
pub fn pretrain_objective(
    model: &AttentiveModel,
    masked: &TokenizedSequence,
    targets: &[MaskTarget],
) -> Result<(f64, Vec<f64>, Vec<f64>), AttentiveError> {
    model.expect_head(HeadKind::Pretrain)?;
    let r = pretrain_seq(&model.encoder, &model.head, masked, targets, GradMode::Full)?;
    Ok((r.loss, r.encoder_grad.unwrap_or_default(), r.head_grad.unwrap_or_default()))
}

/// Squared error of the pooled regression output against `target` (on the
/// `[0, 1]` scale) and its gradients.
pub fn score_objective(
    model: &AttentiveModel,
    seq: &TokenizedSequence,
    target: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), AttentiveError> {
    model.expect_head(HeadKind::Score)?;
    let (r, _) = score_seq(&model.encoder, &model.head, seq, target, GradMode::Full)?;
    Ok((r.loss, r.encoder_grad.unwrap_or_default(), r.head_grad.unwrap_or_default()))
}

/// SGD with momentum and global-norm gradient clipping.
struct Optimizer {
    lr: f64,
    momentum: f64,
    clip: f64,
    v_enc: Vec<f64>,
    v_head: Vec<f64>,
}

impl Optimizer {
    fn new(lr: f64, momentum: f64, clip: f64, n_enc: usize, n_head: usize) -> Self {
        Optimizer { lr, momentum, clip, v_enc: vec![0.0; n_enc], v_head: vec![0.0; n_head] }
    }

    fn step(&mut self, enc: &mut [f64], head: &mut [f64], g_enc: Option<&mut [f64]>, g_head: &mut [f64]) {
        let mut sq: f64 = g_head.iter().map(|g| g * g).sum();
        if let Some(g) = &g_enc {
            sq += g.iter().map(|g| g * g).sum::<f64>();
        }
        let norm = sq.sqrt();
        let scale = if norm > self.clip { self.clip / norm } else { 1.0 };
        let update = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = self.momentum * *v + scale * g;
                *p -= self.lr * *v;
            }
        };
        if let Some(g) = g_enc {
            update(enc, &mut self.v_enc, g);
        }
        update(head, &mut self.v_head, g_head);
    }
}

/// Sum per-item results in item order, independent of thread scheduling.
fn reduce(results: Vec<SeqResult>, n_enc: usize, n_head: usize) -> SeqResult {
    let mut acc = SeqResult { loss: 0.0, count: 0, hits: 0, encoder_grad: None, head_grad: None };
    for r in results {
        acc.loss += r.loss;
        acc.count += r.count;
        acc.hits += r.hits;
        if let Some(g) = r.encoder_grad {
            let a = acc.encoder_grad.get_or_insert_with(|| vec![0.0; n_enc]);
            a.iter_mut().zip(&g).for_each(|(a, g)| *a += g);
        }
        if let Some(g) = r.head_grad {
            let a = acc.head_grad.get_or_insert_with(|| vec![0.0; n_head]);
            a.iter_mut().zip(&g).for_each(|(a, g)| *a += g);
        }
    }
    acc
}

/// One pass over `order` in mini-batches. The batch loss is the label-mean
/// of the per-item losses.
fn train_epoch<F>(
    model: &mut AttentiveModel,
    opt: &mut Optimizer,
    order: &[usize],
    batch: usize,
    mode: GradMode,
    item: F,
) -> Result<SeqResult, AttentiveError>
where
    F: Fn(&EncoderParams, &Head, usize, GradMode) -> Result<SeqResult, AttentiveError> + Sync,
{
    let (n_enc, n_head) = (model.encoder.data.len(), model.head.data.len());
    let mut totals = Vec::new();
    for chunk in order.chunks(batch) {
        let (enc, head) = (&model.encoder, &model.head);
        let results = chunk.par_iter().map(|&i| item(enc, head, i, mode)).collect::<Result<Vec<_>, _>>()?;
        let mut r = reduce(results, n_enc, n_head);
        if r.count > 0 {
            let s = 1.0 / r.count as f64;
            let mut gh = r.head_grad.take().unwrap_or_else(|| vec![0.0; n_head]);
            gh.iter_mut().for_each(|g| *g *= s);
            let mut ge = r.encoder_grad.take();
            if let Some(g) = ge.as_mut() {
                g.iter_mut().for_each(|v| *v *= s);
            }
            opt.step(&mut model.encoder.data, &mut model.head.data, ge.as_deref_mut(), &mut gh);
        }
        totals.push(SeqResult { encoder_grad: None, head_grad: None, ..r });
    }
    Ok(reduce(totals, n_enc, n_head))
}

fn evaluate<F>(model: &AttentiveModel, n: usize, item: F) -> Result<SeqResult, AttentiveError>
where
    F: Fn(&EncoderParams, &Head, usize, GradMode) -> Result<SeqResult, AttentiveError> + Sync,
{
    let results = (0..n)
        .into_par_iter()
        .map(|i| item(&model.encoder, &model.head, i, GradMode::None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reduce(results, 0, 0))
}

/// One line of the training metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Pre-training: mean cross-entropy per masked label. Fine-tuning: mean
    /// squared error on the `[0, 1]` scale.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub masked_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainHyper {
    pub rate: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub momentum: f64,
    pub clip: f64,
}

impl Default for PretrainHyper {
    fn default() -> Self {
        PretrainHyper { rate: 0.15, lr: 0.05, epochs: 5, batch: 32, seed: 0, momentum: 0.9, clip: 1.0 }
    }
}

fn check_common(lr: f64, batch: usize, momentum: f64, clip: f64) -> Result<(), AttentiveError> {
    let bad = |m: &str| Err(AttentiveError::InvalidConfig(m.to_string()));
    if !(lr > 0.0 && lr.is_finite()) {
        return bad("lr must be positive");
    }
    if batch == 0 {
        return bad("batch must be positive");
    }
    if !(0.0..1.0).contains(&momentum) {
        return bad("momentum must lie in [0, 1)");
    }
    if !(clip > 0.0) {
        return bad("clip must be positive");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub model: AttentiveModel,
    /// Entry 0 is the model before training. Every entry is measured on the
    /// same fixed evaluation masks.
    pub history: Vec<EpochMetrics>,
}

/// Masked-assessment pre-training. Training masks are redrawn every epoch;
/// the reported loss and accuracy use one fixed set of evaluation masks.
pub fn pretrain(
    model: AttentiveModel,
    sequences: &[TokenizedSequence],
    hyper: &PretrainHyper,
) -> Result<PretrainOutput, AttentiveError> {
    model.expect_head(HeadKind::Pretrain)?;
    check_common(hyper.lr, hyper.batch, hyper.momentum, hyper.clip)?;
    if !(hyper.rate > 0.0 && hyper.rate < 1.0) {
        return Err(AttentiveError::InvalidConfig("mask rate must lie in (0, 1)".into()));
    }
    if sequences.is_empty() {
        return Err(AttentiveError::EmptyCorpus);
    }
    let mut model = model;
    let eval_seed = rng::derive(hyper.seed, STREAM_EVAL_MASKS);
    let eval_set: Vec<_> = sequences
        .iter()
        .enumerate()
        .map(|(i, s)| mask_assessments(s, hyper.rate, rng::derive(eval_seed, i as u64)))
        .collect();
    let eval_item = |enc: &EncoderParams, head: &Head, i: usize, mode| {
        pretrain_seq(enc, head, &eval_set[i].0, &eval_set[i].1, mode)
    };
    let metrics = |r: SeqResult, epoch| EpochMetrics {
        epoch,
        loss: r.loss / r.count.max(1) as f64,
        masked_accuracy: Some(r.hits as f64 / (r.count / 2).max(1) as f64),
        train_mae: None,
        val_mae: None,
    };
    let mut history = vec![metrics(evaluate(&model, sequences.len(), eval_item)?, 0)];

    let mut opt =
        Optimizer::new(hyper.lr, hyper.momentum, hyper.clip, model.encoder.data.len(), model.head.data.len());
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng::rng_for(rng::derive(hyper.seed, STREAM_SHUFFLE), epoch as u64));
        let mask_seed = rng::derive(rng::derive(hyper.seed, STREAM_TRAIN_MASKS), epoch as u64);
        let train_item = |enc: &EncoderParams, head: &Head, i: usize, mode| {
            let (s, t) = mask_assessments(&sequences[i], hyper.rate, rng::derive(mask_seed, i as u64));
            pretrain_seq(enc, head, &s, &t, mode)
        };
        train_epoch(&mut model, &mut opt, &order, hyper.batch, GradMode::Full, train_item)?;
        let m = metrics(evaluate(&model, sequences.len(), eval_item)?, epoch);
        if !m.loss.is_finite() || model.encoder.data.iter().any(|v| !v.is_finite()) {
            return Err(AttentiveError::NonFiniteLoss { epoch });
        }
        history.push(m);
    }
    model.meta.seed = hyper.seed;
    model.meta.pretrain_epochs += hyper.epochs as u32;
    Ok(PretrainOutput { model, history })
}

/// A tokenized history paired with its reported total score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreExample {
    pub user_id: String,
    pub seq: TokenizedSequence,
    pub score: u32,
    pub no_history: bool,
}

impl ScoreExample {
    pub fn target(&self) -> f64 {
        self.score as f64 / MAX_TOTAL_SCORE
    }
}

/// Pair each label with the user's most recent `max_len` interactions at or
/// before its report time. Users absent from `sequences` get the empty-history
/// placeholder.
pub fn score_examples(
    vocab: &Vocab,
    max_len: usize,
    sequences: &[StudentSequence],
    labels: &[ScoreLabel],
) -> Vec<ScoreExample> {
    let by_user: HashMap<&str, &StudentSequence> =
        sequences.iter().map(|s| (s.user_id.as_str(), s)).collect();
    labels
        .iter()
        .map(|l| {
            let hist = by_user
                .get(l.user_id.as_str())
                .map(|s| s.history_at(l.report_time, max_len))
                .unwrap_or_else(|| StudentSequence::new(l.user_id.clone(), vec![]));
            let t = tokenize(&hist, vocab, max_len);
            ScoreExample {
                user_id: l.user_id.clone(),
                seq: t.seq,
                score: l.score_total,
                no_history: t.no_history,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub momentum: f64,
    pub clip: f64,
    /// Update only the score head.
    pub freeze_encoder: bool,
}

impl Default for FinetuneHyper {
    fn default() -> Self {
        FinetuneHyper {
            lr: 0.05,
            epochs: 20,
            batch: 16,
            seed: 0,
            momentum: 0.9,
            clip: 1.0,
            freeze_encoder: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutput {
    pub model: AttentiveModel,
    /// Entry 0 is the model right after the head swap.
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters were returned: lowest validation MAE, or the
    /// last epoch without validation data.
    pub best_epoch: usize,
}

fn mae_of(model: &AttentiveModel, data: &[ScoreExample]) -> Result<(f64, f64), AttentiveError> {
    let raw = predict_batch(model, data.iter().map(|e| &e.seq))?;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (r, e) in raw.iter().zip(data) {
        abs += (raw_to_score(*r) as f64 - e.score as f64).abs();
        sq += (r - e.target()) * (r - e.target());
    }
    let n = data.len().max(1) as f64;
    Ok((abs / n, sq / n))
}

/// Replace the pre-training head with a freshly initialized score head and
/// train on squared error of `score / 990`.
pub fn finetune(
    pretrained: &AttentiveModel,
    train: &[ScoreExample],
    validation: &[ScoreExample],
    hyper: &FinetuneHyper,
) -> Result<FinetuneOutput, AttentiveError> {
    pretrained.expect_head(HeadKind::Pretrain)?;
    check_common(hyper.lr, hyper.batch, hyper.momentum, hyper.clip)?;
    if train.is_empty() {
        return Err(AttentiveError::EmptyCorpus);
    }
    let d = pretrained.encoder.cfg.d_model;
    let mut head = Head::init(HeadKind::Score, d, rng::derive(hyper.seed, STREAM_SCORE_HEAD));
    head.data[d] = train.iter().map(ScoreExample::target).sum::<f64>() / train.len() as f64;
    let mut model = AttentiveModel {
        encoder: pretrained.encoder.clone(),
        head,
        vocab: pretrained.vocab.clone(),
        meta: pretrained.meta,
    };

    let record = |model: &AttentiveModel, epoch| -> Result<EpochMetrics, AttentiveError> {
        let (train_mae, loss) = mae_of(model, train)?;
        let val_mae = if validation.is_empty() { None } else { Some(mae_of(model, validation)?.0) };
        Ok(EpochMetrics { epoch, loss, masked_accuracy: None, train_mae: Some(train_mae), val_mae })
    };
    let mut history = vec![record(&model, 0)?];
    let mut best = (history[0].val_mae, 0usize, model.clone());

    let mode = if hyper.freeze_encoder { GradMode::HeadOnly } else { GradMode::Full };
    let mut opt =
        Optimizer::new(hyper.lr, hyper.momentum, hyper.clip, model.encoder.data.len(), model.head.data.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let item = |enc: &EncoderParams, head: &Head, i: usize, mode| {
        score_seq(enc, head, &train[i].seq, train[i].target(), mode).map(|(r, _)| r)
    };
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng::rng_for(rng::derive(hyper.seed, STREAM_SHUFFLE), epoch as u64));
        train_epoch(&mut model, &mut opt, &order, hyper.batch, mode, item)?;
        let m = record(&model, epoch)?;
        if !m.loss.is_finite() {
            return Err(AttentiveError::NonFiniteLoss { epoch });
        }
        let improved = match (m.val_mae, best.0) {
            (Some(v), Some(b)) => v < b,
            _ => true,
        };
        if improved {
            best = (m.val_mae, epoch, model.clone());
        }
        history.push(m);
    }
    let (_, best_epoch, mut model) = best;
    model.meta.seed = hyper.seed;
    model.meta.finetune_epochs = best_epoch as u32;
    Ok(FinetuneOutput { model, history, best_epoch })
}

/// Scale a `[0, 1]` regression output to the reported total: multiply by 990,
/// clamp to `[0, 990]`, round to a multiple of 5.
pub fn raw_to_score(raw: f64) -> u32 {
    clamp_round(raw * MAX_TOTAL_SCORE, MAX_TOTAL_SCORE)
}

/// Raw regression outputs for many sequences, in input order.
pub fn predict_batch<'a, I>(model: &AttentiveModel, seqs: I) -> Result<Vec<f64>, AttentiveError>
where
    I: IntoIterator<Item = &'a TokenizedSequence>,
{
    model.expect_head(HeadKind::Score)?;
    let seqs: Vec<&TokenizedSequence> = seqs.into_iter().collect();
    seqs.par_iter()
        .map(|s| score_seq(&model.encoder, &model.head, s, 0.0, GradMode::None).map(|(_, y)| y))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmPrediction {
    pub prediction: ScorePrediction,
    pub raw: f64,
    /// Interactions whose question fell back to the unknown token.
    pub unknown: usize,
    /// The history was empty; the prediction comes from the placeholder input.
    pub no_history: bool,
}

/// Predict a total score from a history (its most recent `max_len` events).
pub fn predict_score_am(
    model: &AttentiveModel,
    seq: &StudentSequence,
) -> Result<AmPrediction, AttentiveError> {
    model.expect_head(HeadKind::Score)?;
    let t = tokenize(seq, &model.vocab, model.max_len());
    let (_, raw) = score_seq(&model.encoder, &model.head, &t.seq, 0.0, GradMode::None)?;
    Ok(AmPrediction {
        prediction: ScorePrediction { score_lc: None, score_rc: None, total: raw_to_score(raw) },
        raw,
        unknown: t.unknown,
        no_history: t.no_history,
    })
}
