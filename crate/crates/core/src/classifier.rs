//! Attention-pooling text classifier: word embeddings, additive attention,
//! leaky-ReLU context head, trained with AdamW on cross-entropy.
//!
//! The model exposes exactly what the self-training loop consumes: class
//! probabilities and per-token attention weights.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

/// All trainable parameters plus the activation slope they were built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// V x d word embeddings; row 0 is the unknown token.
    pub embedding: Array2<f64>,
    /// d_a x d attention projection.
    pub attn_proj: Array2<f64>,
    /// d_a attention bias.
    pub attn_bias: Array1<f64>,
    /// d_a attention query vector.
    pub attn_query: Array1<f64>,
    /// C x d classifier head.
    pub head_weight: Array2<f64>,
    /// C head bias.
    pub head_bias: Array1<f64>,
    /// Negative slope of the leaky rectifier applied to the context vector.
    pub leaky_slope: f64,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn emb_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn attn_dim(&self) -> usize {
        self.attn_query.len()
    }

    pub fn num_classes(&self) -> usize {
        self.head_bias.len()
    }

    /// Same shapes, all entries zero. Used for gradients and optimizer state.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            attn_proj: Array2::zeros(self.attn_proj.raw_dim()),
            attn_bias: Array1::zeros(self.attn_bias.raw_dim()),
            attn_query: Array1::zeros(self.attn_query.raw_dim()),
            head_weight: Array2::zeros(self.head_weight.raw_dim()),
            head_bias: Array1::zeros(self.head_bias.raw_dim()),
            leaky_slope: self.leaky_slope,
        }
    }

    /// Serialize to JSON. f64 values round-trip bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Per-document forward result.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Softmax class distribution, sums to 1.
    pub probs: Vec<f64>,
    /// Softmax attention over tokens, sums to 1.
    pub attention: Vec<f64>,
    /// Attention-pooled context vector (pre-activation).
    pub context: Array1<f64>,
}

/// Dropout behaviour for a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    /// Deterministic, no dropout.
    Eval,
    /// Dropout on the context activation, mask drawn from `seed`.
    Train { dropout_rate: f64, seed: u64 },
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-3,
            weight_decay: 0.01,
            dropout_rate: 0.3,
            leaky_slope: 0.1,
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout_rate must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// One training epoch's diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
}

/// Fresh parameters: weights i.i.d. uniform on [-0.1, 0.1] from a seeded
/// generator, biases zero, leaky slope at its default of 0.1.
pub fn init_params(
    vocab_size: usize,
    emb_dim: usize,
    attn_dim: usize,
    num_classes: usize,
    seed: u64,
) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embedding = Array2::from_shape_simple_fn((vocab_size, emb_dim), || {
        rng.random_range(-0.1..=0.1)
    });
    let attn_proj = Array2::from_shape_simple_fn((attn_dim, emb_dim), || {
        rng.random_range(-0.1..=0.1)
    });
    let attn_query = Array1::from_shape_simple_fn(attn_dim, || rng.random_range(-0.1..=0.1));
    let head_weight = Array2::from_shape_simple_fn((num_classes, emb_dim), || {
        rng.random_range(-0.1..=0.1)
    });
    ModelParams {
        embedding,
        attn_proj,
        attn_bias: Array1::zeros(attn_dim),
        attn_query,
        head_weight,
        head_bias: Array1::zeros(num_classes),
        leaky_slope: 0.1,
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Everything the backward pass needs from one document's forward pass.
struct ForwardCache {
    tanh_acts: Vec<Array1<f64>>,
    attention: Vec<f64>,
    context: Array1<f64>,
    dropout_scale: Array1<f64>,
    hidden: Array1<f64>,
    probs: Vec<f64>,
}

fn forward_cache(
    params: &ModelParams,
    doc: &Document,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<ForwardCache> {
    if doc.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let d = params.emb_dim();
    let mut scores = Vec::with_capacity(doc.len());
    let mut tanh_acts = Vec::with_capacity(doc.len());
    for &id in &doc.tokens {
        let e = params.embedding.row(id as usize);
        let mut g = params.attn_proj.dot(&e);
        g += &params.attn_bias;
        let t = g.mapv(f64::tanh);
        scores.push(params.attn_query.dot(&t));
        tanh_acts.push(t);
    }
    let attention = softmax(&scores);

    let mut context = Array1::zeros(d);
    for (i, &id) in doc.tokens.iter().enumerate() {
        context.scaled_add(attention[i], &params.embedding.row(id as usize));
    }

    let slope = params.leaky_slope;
    let activated = context.mapv(|v| if v > 0.0 { v } else { slope * v });

    // Inverted dropout: kept units are scaled by 1/(1-p) so eval needs no
    // rescaling. The scale vector doubles as the backward mask.
    let dropout_scale = match dropout {
        Some((rate, rng)) if rate > 0.0 => {
            let keep = 1.0 - rate;
            Array1::from_shape_simple_fn(d, || {
                if rng.random_range(0.0..1.0) < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        }
        _ => Array1::ones(d),
    };
    let hidden = &activated * &dropout_scale;

    let mut logits = params.head_weight.dot(&hidden);
    logits += &params.head_bias;
    let probs = softmax(logits.as_slice().expect("contiguous logits"));

    Ok(ForwardCache {
        tanh_acts,
        attention,
        context,
        dropout_scale,
        hidden,
        probs,
    })
}

/// Run the classifier on one document.
pub fn forward(params: &ModelParams, doc: &Document, mode: ForwardMode) -> Result<ForwardOutput> {
    let cache = match mode {
        ForwardMode::Eval => forward_cache(params, doc, None)?,
        ForwardMode::Train { dropout_rate, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            forward_cache(params, doc, Some((dropout_rate, &mut rng)))?
        }
    };
    Ok(ForwardOutput {
        probs: cache.probs,
        attention: cache.attention,
        context: cache.context,
    })
}

fn nll(prob: f64) -> f64 {
    -prob.max(1e-300).ln()
}

/// Mean negative log-likelihood over the batch plus analytic gradients.
/// The dropout mask is fixed per call by `config.seed`.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[(&Document, usize)],
    config: &TrainConfig,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let num_classes = params.num_classes();
    for (_, label) in batch {
        if *label >= num_classes {
            return Err(Error::InvalidConfig(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    let slope = params.leaky_slope;

    for &(doc, label) in batch {
        let dropout = if config.dropout_rate > 0.0 {
            Some((config.dropout_rate, &mut rng))
        } else {
            None
        };
        let cache = forward_cache(params, doc, dropout)?;
        total_loss += nll(cache.probs[label]) * scale;

        // d loss / d logits = probs - onehot(label)
        let mut dlogits = Array1::from_vec(cache.probs.clone());
        dlogits[label] -= 1.0;
        dlogits *= scale;

        grads.head_bias += &dlogits;
        for (c, &dl) in dlogits.iter().enumerate() {
            grads.head_weight.row_mut(c).scaled_add(dl, &cache.hidden);
        }

        let dhidden = params.head_weight.t().dot(&dlogits);
        let dactivated = &dhidden * &cache.dropout_scale;
        let dcontext = ndarray::Zip::from(&dactivated)
            .and(&cache.context)
            .map_collect(|&da, &v| if v > 0.0 { da } else { slope * da });

        // Attention weights: da_i = dcontext . e_i, then softmax backward.
        let n = doc.len();
        let mut dattn = vec![0.0; n];
        for (i, &id) in doc.tokens.iter().enumerate() {
            dattn[i] = dcontext.dot(&params.embedding.row(id as usize));
        }
        let inner: f64 = cache
            .attention
            .iter()
            .zip(&dattn)
            .map(|(a, da)| a * da)
            .sum();
        for (i, &id) in doc.tokens.iter().enumerate() {
            let ds = cache.attention[i] * (dattn[i] - inner);
            let t = &cache.tanh_acts[i];
            grads.attn_query.scaled_add(ds, t);
            // d score / d pre-tanh activation
            let dg = ndarray::Zip::from(t)
                .and(&params.attn_query)
                .map_collect(|&ti, &ui| ds * ui * (1.0 - ti * ti));
            grads.attn_bias += &dg;
            let e = params.embedding.row(id as usize);
            for (r, &dgr) in dg.iter().enumerate() {
                grads.attn_proj.row_mut(r).scaled_add(dgr, &e);
            }
            // Token embedding receives both the context path and the
            // attention-score path.
            let mut de = params.attn_proj.t().dot(&dg);
            de.scaled_add(cache.attention[i], &dcontext);
            grads.embedding.row_mut(id as usize).scaled_add(1.0, &de);
        }
    }

    Ok((total_loss, grads))
}

/// AdamW state: first/second moments plus the step counter. Biases are
/// exempt from weight decay.
struct AdamW {
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(params: &ModelParams) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64, weight_decay: f64) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);

        let apply = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], decay: bool| {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let mut step = m_hat / (v_hat.sqrt() + ADAM_EPS);
                if decay {
                    step += weight_decay * p[i];
                }
                p[i] -= lr * step;
            }
        };

        apply(
            params.embedding.as_slice_mut().expect("contiguous"),
            grads.embedding.as_slice().expect("contiguous"),
            self.m.embedding.as_slice_mut().expect("contiguous"),
            self.v.embedding.as_slice_mut().expect("contiguous"),
            true,
        );
        apply(
            params.attn_proj.as_slice_mut().expect("contiguous"),
            grads.attn_proj.as_slice().expect("contiguous"),
            self.m.attn_proj.as_slice_mut().expect("contiguous"),
            self.v.attn_proj.as_slice_mut().expect("contiguous"),
            true,
        );
        apply(
            params.attn_query.as_slice_mut().expect("contiguous"),
            grads.attn_query.as_slice().expect("contiguous"),
            self.m.attn_query.as_slice_mut().expect("contiguous"),
            self.v.attn_query.as_slice_mut().expect("contiguous"),
            true,
        );
        apply(
            params.head_weight.as_slice_mut().expect("contiguous"),
            grads.head_weight.as_slice().expect("contiguous"),
            self.m.head_weight.as_slice_mut().expect("contiguous"),
            self.v.head_weight.as_slice_mut().expect("contiguous"),
            true,
        );
        apply(
            params.attn_bias.as_slice_mut().expect("contiguous"),
            grads.attn_bias.as_slice().expect("contiguous"),
            self.m.attn_bias.as_slice_mut().expect("contiguous"),
            self.v.attn_bias.as_slice_mut().expect("contiguous"),
            false,
        );
        apply(
            params.head_bias.as_slice_mut().expect("contiguous"),
            grads.head_bias.as_slice().expect("contiguous"),
            self.m.head_bias.as_slice_mut().expect("contiguous"),
            self.v.head_bias.as_slice_mut().expect("contiguous"),
            false,
        );
    }
}

/// Dev-loss patience tracker. `observe` returns true once the loss has
/// failed to improve for `patience` consecutive epochs.
pub(crate) struct EarlyStopping {
    best: f64,
    streak: usize,
    patience: usize,
}

impl EarlyStopping {
    pub(crate) fn new(patience: usize) -> Self {
        EarlyStopping {
            best: f64::INFINITY,
            streak: 0,
            patience,
        }
    }

    pub(crate) fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.streak = 0;
        } else {
            self.streak += 1;
        }
        self.streak >= self.patience
    }
}

fn labeled_pairs(corpus: &Corpus) -> Result<Vec<(&Document, usize)>> {
    corpus
        .examples
        .iter()
        .map(|ex| {
            ex.label
                .map(|l| (&ex.doc, l))
                .ok_or_else(|| Error::InvalidConfig("unlabeled example in training data".into()))
        })
        .collect()
}

/// Mean eval-mode loss and accuracy over a labeled corpus.
fn eval_metrics(params: &ModelParams, pairs: &[(&Document, usize)]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &(doc, label) in pairs {
        let out = forward(params, doc, ForwardMode::Eval)?;
        loss += nll(out.probs[label]);
        if argmax(&out.probs) == label {
            correct += 1;
        }
    }
    let n = pairs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch AdamW training with per-epoch shuffling, dev-loss early
/// stopping, and a best-dev-accuracy snapshot as the returned model.
pub fn train(
    params: ModelParams,
    train: &Corpus,
    dev: &Corpus,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("empty training corpus".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidConfig("empty dev corpus".into()));
    }
    let train_pairs = labeled_pairs(train)?;
    let dev_pairs = labeled_pairs(dev)?;

    let mut params = params;
    params.leaky_slope = config.leaky_slope;
    let mut optimizer = AdamW::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params = params.clone();

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&Document, usize)> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let batch_config = TrainConfig {
                seed: rng.random(),
                ..*config
            };
            let (loss, grads) = loss_and_grad(&params, &batch, &batch_config)?;
            if !loss.is_finite() {
                return Err(Error::Diverged);
            }
            epoch_loss += loss * batch.len() as f64;
            optimizer.update(&mut params, &grads, config.learning_rate, config.weight_decay);
        }
        let train_loss = epoch_loss / train_pairs.len() as f64;
        let (dev_loss, dev_accuracy) = eval_metrics(&params, &dev_pairs)?;
        if !dev_loss.is_finite() {
            return Err(Error::Diverged);
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            dev_accuracy,
        });
        // On accuracy ties the later epoch wins: the longer-trained snapshot
        // has sharper probabilities, which downstream confidence gating needs.
        if dev_accuracy >= best_acc {
            best_acc = dev_accuracy;
            best_params = params.clone();
        }
        if stopper.observe(dev_loss) {
            break;
        }
    }

    Ok((best_params, history))
}

/// Rank a document's distinct words by attention, highest first. Duplicate
/// occurrences collapse to the best-scoring one; ties between words break
/// toward the earlier position.
pub(crate) fn rank_by_attention(
    token_strings: &[String],
    attention: &[f64],
) -> Vec<(String, f64, usize)> {
    let mut best: Vec<(String, f64, usize)> = Vec::new();
    for (pos, word) in token_strings.iter().enumerate() {
        match best.iter_mut().find(|(w, _, _)| w == word) {
            Some(entry) => {
                if attention[pos] > entry.1 {
                    entry.1 = attention[pos];
                    entry.2 = pos;
                }
            }
            None => best.push((word.clone(), attention[pos], pos)),
        }
    }
    best.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite attention")
            .then(a.2.cmp(&b.2))
    });
    best
}

/// The `n` distinct words of `doc` with the highest eval-mode attention.
pub fn top_attention_words(params: &ModelParams, doc: &Document, n: usize) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    let out = forward(params, doc, ForwardMode::Eval)?;
    Ok(rank_by_attention(&doc.token_strings, &out.attention)
        .into_iter()
        .take(n)
        .map(|(w, _, _)| w)
        .collect())
}
