//! Training loop: fold hold-out, language switching, constrained batching,
//! symmetric InfoNCE and plain gradient descent under a warmup plus
//! polynomial-decay learning-rate schedule.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};

use crate::batching::{constrained_shuffle, extra_negatives, mine_hard_negatives, verify_batches, HardNegativePool, Pair};
use crate::contrastive::{infonce_gradients_with_extra_negatives, DEFAULT_TEMPERATURE};
use crate::corpus::Corpus;
use crate::encoder::{embed_texts, featurize, init_params, project, EncoderConfig, EncoderParams, SparseFeatures};
use crate::error::{Error, Result};
use crate::folds::{greedy_assign, FoldAssignment, DEFAULT_FOLDS};
use crate::langswitch::{filter_translated_pairs, is_switch_epoch, switch_pairs, PseudoTranslator, SwitchConfig, TranslationProvider};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub decay_power: f64,
    pub end_lr: f64,
    pub temperature: f64,
    /// Held-out fold.
    pub fold: usize,
    pub n_folds: usize,
    pub seed: u64,
    /// Extra hard-negative columns per batch, as a fraction of the batch size.
    pub hard_negative_fraction: f64,
    pub hard_negative_k: usize,
    pub switch: SwitchConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    /// Full-scale settings (batch of 768 pairs).
    fn default() -> Self {
        Self {
            epochs: 40,
            warmup_epochs: 2,
            peak_lr: 3e-4,
            batch_size: 768,
            decay_power: 1.0,
            end_lr: 0.0,
            temperature: DEFAULT_TEMPERATURE,
            fold: 0,
            n_folds: DEFAULT_FOLDS,
            seed: 0,
            hard_negative_fraction: 0.0,
            hard_negative_k: 5,
            switch: SwitchConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "epochs",
    "warmup_epochs",
    "peak_lr",
    "batch_size",
    "decay_power",
    "end_lr",
    "temperature",
    "fold",
    "n_folds",
    "seed",
    "hard_negative_fraction",
    "hard_negative_k",
    "switch_languages",
    "switch_period",
    "dedup_threshold",
    "max_seq_len",
    "ngram_size",
    "hash_dim",
    "embed_dim",
    "encoder_seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Desk-scale settings: identical to the default except batches of 64.
    pub fn desk() -> Self {
        Self { batch_size: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.warmup_epochs >= self.epochs {
            return fail(format!("warmup_epochs ({}) must be below epochs ({})", self.warmup_epochs, self.epochs));
        }
        if !(self.end_lr >= 0.0 && self.peak_lr > self.end_lr && self.peak_lr.is_finite()) {
            return fail(format!("need peak_lr > end_lr >= 0, got {} and {}", self.peak_lr, self.end_lr));
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2".into());
        }
        if !(self.decay_power > 0.0 && self.decay_power.is_finite()) {
            return fail("decay_power must be positive".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be positive".into());
        }
        if self.n_folds < 2 || self.fold >= self.n_folds {
            return fail(format!("fold {} not in 0..{} (n_folds >= 2)", self.fold, self.n_folds));
        }
        if !(0.0..=1.0).contains(&self.hard_negative_fraction) {
            return fail("hard_negative_fraction must lie in [0, 1]".into());
        }
        if self.hard_negative_k == 0 {
            return fail("hard_negative_k must be at least 1".into());
        }
        self.switch.validate()?;
        self.encoder.validate()
    }

    /// Sets one field by its key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse(key, value)?,
            "peak_lr" => self.peak_lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "decay_power" => self.decay_power = parse(key, value)?,
            "end_lr" => self.end_lr = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "fold" => self.fold = parse(key, value)?,
            "n_folds" => self.n_folds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "hard_negative_fraction" => self.hard_negative_fraction = parse(key, value)?,
            "hard_negative_k" => self.hard_negative_k = parse(key, value)?,
            "switch_languages" => {
                self.switch.languages = value.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect()
            }
            "switch_period" => self.switch.period = parse(key, value)?,
            "dedup_threshold" => self.switch.dedup_threshold = parse(key, value)?,
            "max_seq_len" => self.encoder.max_seq_len = parse(key, value)?,
            "ngram_size" => self.encoder.ngram_size = parse(key, value)?,
            "hash_dim" => self.encoder.hash_dim = parse(key, value)?,
            "embed_dim" => self.encoder.embed_dim = parse(key, value)?,
            "encoder_seed" => self.encoder.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Renders every key in a form [`TrainConfig::apply_config_text`] reads back.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 20] = [
            ("epochs", self.epochs.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("peak_lr", self.peak_lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("decay_power", self.decay_power.to_string()),
            ("end_lr", self.end_lr.to_string()),
            ("temperature", self.temperature.to_string()),
            ("fold", self.fold.to_string()),
            ("n_folds", self.n_folds.to_string()),
            ("seed", self.seed.to_string()),
            ("hard_negative_fraction", self.hard_negative_fraction.to_string()),
            ("hard_negative_k", self.hard_negative_k.to_string()),
            ("switch_languages", self.switch.languages.join(",")),
            ("switch_period", self.switch.period.to_string()),
            ("dedup_threshold", self.switch.dedup_threshold.to_string()),
            ("max_seq_len", self.encoder.max_seq_len.to_string()),
            ("ngram_size", self.encoder.ngram_size.to_string()),
            ("hash_dim", self.encoder.hash_dim.to_string()),
            ("embed_dim", self.encoder.embed_dim.to_string()),
            ("encoder_seed", self.encoder.seed.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Linear warmup to `peak_lr` over `warmup_epochs`, then polynomial decay
/// to `end_lr` at the final step. Steps past the end stay at `end_lr`.
pub fn lr_schedule(step: usize, steps_per_epoch: usize, config: &TrainConfig) -> f64 {
    let warmup = (config.warmup_epochs * steps_per_epoch) as f64;
    let total = (config.epochs * steps_per_epoch) as f64;
    let step = step as f64;
    if step < warmup {
        return config.peak_lr * step / warmup;
    }
    if step >= total {
        return config.end_lr;
    }
    let remaining = 1.0 - (step - warmup) / (total - warmup);
    config.end_lr + (config.peak_lr - config.end_lr) * remaining.powf(config.decay_power)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub batches: usize,
    pub skipped: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,loss,lr,batches,skipped,seconds` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,lr,batches,skipped,seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{},{:.6}", r.epoch, r.loss, r.lr, r.batches, r.skipped, r.seconds);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: EncoderParams,
    pub global_step: usize,
    pub steps_per_epoch: usize,
}

/// One pair per (topic, content) correlation of every topic outside the
/// held-out fold, in ascending (topic, content) order.
pub fn build_pairs(corpus: &Corpus, assignment: &FoldAssignment, held_out: usize) -> Result<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (topic_id, contents) in corpus.correlations().iter() {
        match assignment.fold_of(topic_id) {
            Some(f) if f != held_out => {}
            _ => continue,
        }
        let topic = corpus.topic(topic_id).ok_or_else(|| Error::UnknownTopic(topic_id.to_owned()))?;
        let topic_text = corpus.topic_breadcrumb_text(topic_id)?;
        for content_id in contents {
            let content = corpus
                .content(content_id)
                .ok_or_else(|| Error::Contract(format!("content `{content_id}` missing from corpus")))?;
            pairs.push(Pair {
                topic_id: topic_id.to_owned(),
                content_id: content_id.clone(),
                epoch_text_topic: topic_text.clone(),
                epoch_text_content: content.encoder_text(),
                language: topic.language.clone(),
            });
        }
    }
    Ok(pairs)
}

/// Applies switching and the duplicate filter. Translated pairs that the
/// filter rejects fall back to their original texts.
fn epoch_pairs(
    base: &[Pair],
    provider: &dyn TranslationProvider,
    switch: &SwitchConfig,
    epoch: usize,
) -> (Vec<Pair>, usize) {
    let outcome = switch_pairs(base, provider, switch, epoch);
    if !outcome.translated.iter().any(|&t| t) {
        return (outcome.pairs, outcome.skipped);
    }
    let translated: Vec<Pair> = outcome
        .pairs
        .iter()
        .zip(&outcome.translated)
        .filter(|(_, &t)| t)
        .map(|(p, _)| p.clone())
        .collect();
    let survivors = filter_translated_pairs(&translated, base, switch.dedup_threshold);
    let mut survivors = survivors.into_iter().peekable();
    let mut pairs = Vec::with_capacity(base.len());
    for ((p, &was_translated), original) in outcome.pairs.into_iter().zip(&outcome.translated).zip(base) {
        if !was_translated {
            pairs.push(p);
            continue;
        }
        let kept = survivors
            .peek()
            .is_some_and(|s| s.topic_id == p.topic_id && s.content_id == p.content_id);
        if kept {
            pairs.push(survivors.next().unwrap());
        } else {
            pairs.push(original.clone());
        }
    }
    (pairs, outcome.skipped)
}

struct Forward {
    z_norms: Vec<f64>,
    unit: Array2<f64>,
}

fn forward(params: &EncoderParams, features: &[SparseFeatures]) -> Result<Forward> {
    let d = params.embed_dim();
    let mut unit = Array2::zeros((features.len(), d));
    let mut z_norms = Vec::with_capacity(features.len());
    for (mut row, f) in unit.axis_iter_mut(Axis(0)).zip(features) {
        let z: Array1<f64> = project(params, f)?;
        let norm = z.dot(&z).sqrt();
        if norm > 0.0 {
            row.assign(&(z / norm));
        }
        z_norms.push(norm);
    }
    Ok(Forward { z_norms, unit })
}

/// Pulls `dL/dy` back through `y = z / |z|` and applies
/// `W[b] -= lr * count_b * dL/dz` for every feature of every row.
fn apply_update(
    projection: &mut Array2<f64>,
    features: &[SparseFeatures],
    fwd: &Forward,
    grad_unit: &Array2<f64>,
    lr: f64,
) {
    for (r, f) in features.iter().enumerate() {
        let norm = fwd.z_norms[r];
        if norm == 0.0 {
            continue;
        }
        let y = fwd.unit.row(r);
        let g = grad_unit.row(r);
        let radial = g.dot(&y);
        let grad_z: Array1<f64> = (&g - &(&y * radial)) / norm;
        for &(b, count) in f.entries() {
            projection.row_mut(b as usize).scaled_add(-lr * count, &grad_z);
        }
    }
}

fn mine_pool(
    params: &EncoderParams,
    corpus: &Corpus,
    pairs: &[Pair],
    config: &TrainConfig,
) -> Result<HardNegativePool> {
    let mut topic_ids: Vec<String> = pairs.iter().map(|p| p.topic_id.clone()).collect();
    topic_ids.dedup();
    let mut content_ids: Vec<String> = pairs.iter().map(|p| p.content_id.clone()).collect();
    content_ids.sort();
    content_ids.dedup();
    let topic_texts = topic_ids.iter().map(|t| corpus.topic_breadcrumb_text(t)).collect::<Result<Vec<_>>>()?;
    let content_texts: Vec<String> = content_ids
        .iter()
        .map(|c| corpus.content(c).map(|c| c.encoder_text()).unwrap_or_default())
        .collect();
    let topics = embed_texts(params, &config.encoder, topic_ids, &topic_texts)?;
    let contents = embed_texts(params, &config.encoder, content_ids, &content_texts)?;
    mine_hard_negatives(&topics, &contents, corpus.correlations(), config.hard_negative_k)
}

/// Runs one epoch (1-based `epoch`) over the non-held-out folds.
pub fn train_epoch(
    state: &mut TrainState,
    corpus: &Corpus,
    assignment: &FoldAssignment,
    epoch: usize,
    config: &TrainConfig,
    provider: &dyn TranslationProvider,
) -> Result<EpochRecord> {
    let started = Instant::now();
    let base = build_pairs(corpus, assignment, config.fold)?;
    if base.is_empty() {
        return Err(Error::Config("training set is empty after holding out the evaluation fold".into()));
    }
    let (pairs, skipped) = if is_switch_epoch(epoch, &config.switch) {
        epoch_pairs(&base, provider, &config.switch, epoch)
    } else {
        (base, 0)
    };

    let batches = constrained_shuffle(&pairs, corpus.correlations(), config.batch_size, config.seed ^ epoch as u64)?;
    debug_assert_eq!(verify_batches(&batches, corpus.correlations()), 0);

    let pool = if config.hard_negative_fraction > 0.0 {
        Some(mine_pool(&state.params, corpus, &pairs, config)?)
    } else {
        None
    };

    let lr_at_start = lr_schedule(state.global_step, state.steps_per_epoch, config);
    let mut loss_sum = 0.0;
    for batch in &batches {
        let topic_features: Vec<SparseFeatures> =
            batch.pairs.iter().map(|p| featurize(&p.epoch_text_topic, &config.encoder)).collect();
        let mut content_features: Vec<SparseFeatures> =
            batch.pairs.iter().map(|p| featurize(&p.epoch_text_content, &config.encoder)).collect();
        if let Some(pool) = &pool {
            let want = (config.hard_negative_fraction * batch.len() as f64).ceil() as usize;
            for id in extra_negatives(batch, pool, corpus.correlations(), want) {
                let text = corpus.content(&id).map(|c| c.encoder_text()).unwrap_or_default();
                content_features.push(featurize(&text, &config.encoder));
            }
        }

        let lr = lr_schedule(state.global_step, state.steps_per_epoch, config);
        let topics = forward(&state.params, &topic_features)?;
        let contents = forward(&state.params, &content_features)?;
        let report =
            infonce_gradients_with_extra_negatives(topics.unit.view(), contents.unit.view(), config.temperature)?;
        loss_sum += report.loss;

        if lr != 0.0 {
            let projection = state.params.projection_mut();
            apply_update(projection, &topic_features, &topics, &report.grad_topics, lr);
            apply_update(projection, &content_features, &contents, &report.grad_contents, lr);
        }
        state.global_step += 1;
    }

    Ok(EpochRecord {
        epoch,
        loss: loss_sum / batches.len() as f64,
        lr: lr_at_start,
        batches: batches.len(),
        skipped,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Trains from freshly initialized parameters against a given fold split.
pub fn train_with_folds(
    corpus: &Corpus,
    assignment: &FoldAssignment,
    config: &TrainConfig,
    provider: &dyn TranslationProvider,
) -> Result<(EncoderParams, TrainHistory)> {
    config.validate()?;
    if config.fold >= assignment.n_folds {
        return Err(Error::Config(format!("fold {} not in 0..{}", config.fold, assignment.n_folds)));
    }
    let n_pairs = build_pairs(corpus, assignment, config.fold)?.len();
    if n_pairs == 0 {
        return Err(Error::Config("training set is empty after holding out the evaluation fold".into()));
    }
    let mut state = TrainState {
        params: init_params(&config.encoder),
        global_step: 0,
        steps_per_epoch: n_pairs.div_ceil(config.batch_size),
    };
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        history.records.push(train_epoch(&mut state, corpus, assignment, epoch, config, provider)?);
    }
    Ok((state.params, history))
}

/// Splits with [`greedy_assign`], holds out `config.fold` and trains with
/// the pseudo-translation provider.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<(EncoderParams, TrainHistory)> {
    config.validate()?;
    let assignment = greedy_assign(corpus.correlations(), config.n_folds, None)?;
    train_with_folds(corpus, &assignment, config, &PseudoTranslator)
}
