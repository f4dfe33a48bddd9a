//! Margin training of the twin encoder on coupled vs. uncoupled pairs.
//!
//! Every epoch pairs each document `d_i` with a freshly drawn partner `d_j`
//! and builds one negative, either `(f_i, b_j)` or `(f_j, b_i)`. The loss of
//! a positive/negative couple is `max(0, M − (cos_pos − cos_neg))`; batches
//! are averaged and fed to Adam.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::embedding::{embed_sequence, EmbeddingTable, SequenceMatrix};
use crate::encoder::{
    backward_into, cosine, cosine_grad, forward, init_encoder, EncoderConfig, TwinEncoder,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::optim::{AdamConfig, AdamState};
use crate::tfidf::TfIdfIndex;

/// At most this many partial gradient buffers are reduced per batch.
const REDUCTION_SLOTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Uniform,
    Tfidf,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Sampling::Uniform),
            "tfidf" => Ok(Sampling::Tfidf),
            _ => Err(Error::Config(format!("unknown sampling mode `{s}`"))),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Uniform => "uniform",
            Sampling::Tfidf => "tfidf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l: usize,
    pub l_max: usize,
    pub widths: Vec<usize>,
    pub n_filters: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub sampling: Sampling,
    /// Neighborhood size for TF-IDF sampling.
    pub tfidf_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l: 200,
            l_max: 200,
            widths: vec![1, 2, 3, 5],
            n_filters: 1024,
            margin: 0.1,
            learning_rate: 0.001,
            batch_size: 200,
            epochs: 100,
            patience: 5,
            sampling: Sampling::Uniform,
            tfidf_k: 100,
            seed: 1,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch size and patience must be at least 1".into()));
        }
        if self.l_max < self.l {
            return Err(Error::Config(format!(
                "l_max ({}) must be at least l ({})",
                self.l_max, self.l
            )));
        }
        self.encoder_config(1).validate()
    }

    pub fn encoder_config(&self, dim: usize) -> EncoderConfig {
        EncoderConfig {
            dim,
            l: self.l,
            widths: self.widths.clone(),
            n_filters: self.n_filters,
        }
    }

    /// Sets one `key = value` entry. Returns `false` for keys that do not
    /// belong to the training configuration.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "l" => self.l = parse_value(key, value)?,
            "l_max" => self.l_max = parse_value(key, value)?,
            "n_s" | "widths" => {
                let inner = value.trim().trim_start_matches('{').trim_end_matches('}');
                self.widths = inner
                    .split(',')
                    .map(|w| parse_value(key, w))
                    .collect::<Result<_>>()?;
            }
            "n_f" | "n_filters" => self.n_filters = parse_value(key, value)?,
            "margin" | "M" => self.margin = parse_value(key, value)?,
            "ln" | "lr" | "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "b" | "batch" | "batch_size" => self.batch_size = parse_value(key, value)?,
            "e" | "epochs" => self.epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "sampling" => self.sampling = value.trim().parse()?,
            "tfidf_k" => self.tfidf_k = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Renders the configuration in the `key = value` format.
    pub fn to_kv(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        format!(
            "l = {}\nl_max = {}\nn_s = {}\nn_f = {}\nmargin = {}\nlr = {}\nbatch = {}\nepochs = {}\npatience = {}\nsampling = {}\ntfidf_k = {}\nseed = {}\n",
            self.l,
            self.l_max,
            widths.join(","),
            self.n_filters,
            self.margin,
            self.learning_rate,
            self.batch_size,
            self.epochs,
            self.patience,
            self.sampling,
            self.tfidf_k,
            self.seed
        )
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Which side of the anchor document is replaced by the partner's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NegativeShape {
    /// `(f_i, b_j)`
    ReplaceLatter,
    /// `(f_j, b_i)`
    ReplaceFormer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Negative {
    pub anchor: usize,
    pub partner: usize,
    pub shape: NegativeShape,
    /// Partner was drawn from the anchor's TF-IDF neighborhood.
    pub from_neighbors: bool,
}

impl Negative {
    /// Document indices `(x, y)` of the negative's former and latter sides.
    pub fn sides(&self) -> (usize, usize) {
        match self.shape {
            NegativeShape::ReplaceLatter => (self.anchor, self.partner),
            NegativeShape::ReplaceFormer => (self.partner, self.anchor),
        }
    }
}

/// Draws one negative per document, indexed `0..n`.
///
/// `neighbors[i]` lists candidate partners of document `i` for TF-IDF
/// sampling; it is ignored in uniform mode.
pub fn sample_negatives(
    n: usize,
    sampling: Sampling,
    neighbors: Option<&[Vec<usize>]>,
    rng: &mut impl Rng,
) -> Result<Vec<Negative>> {
    if n < 2 {
        return Err(Error::CorpusTooSmall(n));
    }
    let neighbors = match sampling {
        Sampling::Uniform => None,
        Sampling::Tfidf => Some(neighbors.ok_or_else(|| {
            Error::Config("tfidf sampling requires a neighbor index".into())
        })?),
    };
    Ok((0..n)
        .map(|i| {
            let pool = neighbors.map(|nb| &nb[i]).filter(|p| !p.is_empty());
            let (partner, from_neighbors) = match pool {
                Some(pool) if rng.gen_bool(0.5) => (pool[rng.gen_range(0..pool.len())], true),
                _ => {
                    let j = rng.gen_range(0..n - 1);
                    (if j >= i { j + 1 } else { j }, false)
                }
            };
            let shape = if rng.gen_bool(0.5) {
                NegativeShape::ReplaceLatter
            } else {
                NegativeShape::ReplaceFormer
            };
            Negative {
                anchor: i,
                partner,
                shape,
                from_neighbors,
            }
        })
        .collect())
}

/// Hinge on the similarity gap.
pub fn loss(cos_pos: f64, cos_neg: f64, margin: f64) -> f64 {
    (margin - (cos_pos - cos_neg)).max(0.0)
}

/// One positive and one negative, already embedded.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub pos_f: &'a SequenceMatrix,
    pub pos_b: &'a SequenceMatrix,
    pub neg_f: &'a SequenceMatrix,
    pub neg_b: &'a SequenceMatrix,
}

struct SampleOutcome {
    loss: f64,
    counted: bool,
}

/// Loss of one sample; `None` when an encoded side is the zero vector.
fn sample_loss(twin: &TwinEncoder, s: &Sample, margin: f64) -> Result<Option<f64>> {
    let (vf, _) = forward(&twin.former, s.pos_f)?;
    let (vb, _) = forward(&twin.latter, s.pos_b)?;
    let (vx, _) = forward(&twin.former, s.neg_f)?;
    let (vy, _) = forward(&twin.latter, s.neg_b)?;
    match (cosine(&vf, &vb), cosine(&vx, &vy)) {
        (Ok(p), Ok(n)) => Ok(Some(loss(p, n, margin))),
        (Err(Error::ZeroVector), _) | (_, Err(Error::ZeroVector)) => Ok(None),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

/// Mean loss over the samples whose sides encode to nonzero vectors.
pub fn batch_loss(twin: &TwinEncoder, samples: &[Sample], margin: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        if let Some(l) = sample_loss(twin, s, margin)? {
            total += l;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn accumulate_sample(
    twin: &TwinEncoder,
    s: &Sample,
    margin: f64,
    grads: &mut TwinEncoder,
) -> Result<SampleOutcome> {
    let (vf, tf) = forward(&twin.former, s.pos_f)?;
    let (vb, tb) = forward(&twin.latter, s.pos_b)?;
    let (vx, tx) = forward(&twin.former, s.neg_f)?;
    let (vy, ty) = forward(&twin.latter, s.neg_b)?;
    let (cos_pos, cos_neg) = match (cosine(&vf, &vb), cosine(&vx, &vy)) {
        (Ok(p), Ok(n)) => (p, n),
        (Err(Error::ZeroVector), _) | (_, Err(Error::ZeroVector)) => {
            return Ok(SampleOutcome {
                loss: 0.0,
                counted: false,
            })
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let value = loss(cos_pos, cos_neg, margin);
    if value > 0.0 {
        // ∂L/∂cos_pos = −1, ∂L/∂cos_neg = +1
        let (dpf, dpb) = cosine_grad(&vf, &vb)?;
        let (dnf, dnb) = cosine_grad(&vx, &vy)?;
        let neg = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| -x).collect() };
        backward_into(&twin.former, &tf, &neg(dpf), &mut grads.former, None)?;
        backward_into(&twin.latter, &tb, &neg(dpb), &mut grads.latter, None)?;
        backward_into(&twin.former, &tx, &dnf, &mut grads.former, None)?;
        backward_into(&twin.latter, &ty, &dnb, &mut grads.latter, None)?;
    }
    Ok(SampleOutcome {
        loss: value,
        counted: true,
    })
}

/// Mean gradient and mean loss of a batch.
///
/// Partial sums are formed over fixed chunks and reduced in chunk order, so
/// the result does not depend on the number of worker threads.
pub fn batch_gradients(
    twin: &TwinEncoder,
    samples: &[Sample],
    margin: f64,
    exec: Execution,
) -> Result<(TwinEncoder, f64)> {
    let chunk = samples.len().div_ceil(REDUCTION_SLOTS).max(1);
    let partials = exec.map_chunks(samples, chunk, |part| -> Result<(TwinEncoder, f64, usize)> {
        let mut grads = twin.zeros_like();
        let mut total = 0.0;
        let mut count = 0;
        for s in part {
            let outcome = accumulate_sample(twin, s, margin, &mut grads)?;
            if outcome.counted {
                total += outcome.loss;
                count += 1;
            }
        }
        Ok((grads, total, count))
    });
    let mut grads = twin.zeros_like();
    let mut total = 0.0;
    let mut count = 0;
    for partial in partials {
        let (g, t, c) = partial?;
        grads.add_assign(&g);
        total += t;
        count += c;
    }
    if count == 0 {
        return Ok((grads, 0.0));
    }
    grads.scale(1.0 / count as f64);
    Ok((grads, total / count as f64))
}

/// Applies one Adam update to both towers.
pub fn adam_step(
    state: &mut AdamState,
    twin: &mut TwinEncoder,
    grads: &TwinEncoder,
    lr: f64,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = twin.tensors_mut();
    state.step(&mut p, &g, lr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No epoch was requested; the initialized encoder is returned.
    NoEpochs,
    MaxEpochs,
    Patience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
    pub trained_documents: usize,
    pub skipped_documents: Vec<String>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// Embedded former/latter sides of the trainable documents.
pub struct TrainingSet {
    pub ids: Vec<String>,
    pub former: Vec<SequenceMatrix>,
    pub latter: Vec<SequenceMatrix>,
    pub skipped: Vec<String>,
}

impl TrainingSet {
    /// Embeds every pair; pairs with a side that is entirely OOV or shorter
    /// than the widest kernel are skipped with a warning.
    pub fn build(store: &CorpusStore, table: &EmbeddingTable, config: &EncoderConfig) -> Self {
        let mut set = TrainingSet {
            ids: Vec::new(),
            former: Vec::new(),
            latter: Vec::new(),
            skipped: Vec::new(),
        };
        let need = config.max_width();
        for pair in store.pairs.values() {
            let f = embed_sequence(&pair.f, table, config.l);
            let b = embed_sequence(&pair.b, table, config.l);
            match (f, b) {
                (Ok(f), Ok(b)) if f.valid_len() >= need && b.valid_len() >= need => {
                    set.ids.push(pair.doc_id.clone());
                    set.former.push(f);
                    set.latter.push(b);
                }
                _ => {
                    warn!("skipping `{}`: a side cannot be encoded", pair.doc_id);
                    set.skipped.push(pair.doc_id.clone());
                }
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sample(&self, negative: &Negative) -> Sample<'_> {
        let (x, y) = negative.sides();
        Sample {
            pos_f: &self.former[negative.anchor],
            pos_b: &self.latter[negative.anchor],
            neg_f: &self.former[x],
            neg_b: &self.latter[y],
        }
    }

    /// TF-IDF neighborhoods as indices into this set.
    pub fn tfidf_neighbors(&self, store: &CorpusStore, k: usize, exec: Execution) -> Vec<Vec<usize>> {
        let index = TfIdfIndex::fit(store);
        let position: BTreeMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        exec.map(&self.ids, |id| {
            index
                .topk(id, k)
                .expect("training ids are indexed")
                .iter()
                .filter_map(|n| position.get(n.as_str()).copied())
                .collect()
        })
    }
}

/// Epochs-without-improvement stopping rule.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records an epoch loss; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }
}

/// Seed offsets of the independent random streams.
const SAMPLING_STREAM: u64 = 0x5eed_0001;

/// Trains a fresh twin encoder; see [`train_with`] for progress callbacks.
pub fn train(
    store: &CorpusStore,
    table: &EmbeddingTable,
    config: &TrainConfig,
    exec: Execution,
) -> Result<(TwinEncoder, TrainReport)> {
    train_with(store, table, config, exec, |_| {})
}

/// Runs at most `epochs` epochs and returns the parameters of the epoch with
/// the lowest mean loss. Training stops once `patience` consecutive epochs
/// fail to improve on the best loss.
pub fn train_with(
    store: &CorpusStore,
    table: &EmbeddingTable,
    config: &TrainConfig,
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(TwinEncoder, TrainReport)> {
    config.validate()?;
    let encoder_config = config.encoder_config(table.dim());
    let mut twin = init_encoder(&encoder_config, config.seed)?;
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
        stop_reason: StopReason::NoEpochs,
        trained_documents: 0,
        skipped_documents: Vec::new(),
    };
    if config.epochs == 0 {
        return Ok((twin, report));
    }

    let set = TrainingSet::build(store, table, &encoder_config);
    report.trained_documents = set.len();
    report.skipped_documents = set.skipped.clone();
    if set.len() < 2 {
        return Err(Error::CorpusTooSmall(set.len()));
    }
    let neighbors = match config.sampling {
        Sampling::Tfidf => Some(set.tfidf_neighbors(store, config.tfidf_k, exec)),
        Sampling::Uniform => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SAMPLING_STREAM);
    let mut adam = AdamState::new(twin.tensors().iter().map(|t| t.len()), AdamConfig::default());
    let mut best = twin.clone();
    let mut stopping = EarlyStopping::new(config.patience);
    report.stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let negatives = sample_negatives(set.len(), config.sampling, neighbors.as_deref(), &mut rng)?;
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<Sample> = batch.iter().map(|&i| set.sample(&negatives[i])).collect();
            let (grads, mean) = batch_gradients(&twin, &samples, config.margin, exec)?;
            adam_step(&mut adam, &mut twin, &grads, config.learning_rate)?;
            epoch_total += mean * batch.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: epoch_total / set.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!("epoch {epoch}: mean loss {:.6}", record.mean_loss);
        on_epoch(&record);
        report.stopped_epoch = epoch;

        if stopping.observe(epoch, record.mean_loss) {
            best = twin.clone();
        }
        report.best_epoch = stopping.best_epoch;
        report.epochs.push(record);
        if stopping.should_stop() {
            report.stop_reason = StopReason::Patience;
            break;
        }
    }
    info!(
        "training stopped after epoch {} ({:?}); best epoch {}",
        report.stopped_epoch, report.stop_reason, report.best_epoch
    );
    Ok((best, report))
}
