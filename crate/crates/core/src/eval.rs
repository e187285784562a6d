//! F-beta metrics, retrieval and held-out fold scoring.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use crate::corpus::{Corpus, CorrelationSet};
use crate::encoder::{embed_texts, Embedding, EmbeddingMatrix, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::folds::FoldAssignment;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.3;

/// Weighted harmonic mean of precision and recall,
/// `(1 + b^2) P R / (b^2 P + R)`. Zero whenever there is no true positive.
pub fn fbeta(tp: usize, fp: usize, fn_: usize, beta: f64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    let b2 = beta * beta;
    (1.0 + b2) * precision * recall / (b2 * precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowScore {
    pub f2: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn row_score<S: AsRef<str> + Ord>(predicted: &BTreeSet<S>, truth: &BTreeSet<S>) -> RowScore {
    let tp = predicted.intersection(truth).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    let f2 = if truth.is_empty() {
        if predicted.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        fbeta(tp, fp, fn_, 2.0)
    };
    RowScore { f2, tp, fp, fn_ }
}

/// F2 of one prediction row. An empty truth set scores 1 for an empty
/// prediction and 0 otherwise.
pub fn row_f2<S: AsRef<str> + Ord>(predicted: &BTreeSet<S>, truth: &BTreeSet<S>) -> f64 {
    row_score(predicted, truth).f2
}

/// Topic id to predicted content ids in rank order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, Vec<String>>,
}

impl PredictionSet {
    pub fn insert(&mut self, topic_id: String, contents: Vec<String>) -> Result<()> {
        let mut seen = HashSet::new();
        if let Some(dup) = contents.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Contract(format!("duplicate prediction `{dup}` for topic `{topic_id}`")));
        }
        self.predictions.insert(topic_id, contents);
        Ok(())
    }

    pub fn get(&self, topic_id: &str) -> &[String] {
        self.predictions.get(topic_id).map_or(&[], Vec::as_slice)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let err = |e: csv::Error| Error::ingest(path, e.to_string());
        w.write_record(["topic_id", "content_ids"]).map_err(err)?;
        for (t, cs) in &self.predictions {
            w.write_record([t.as_str(), &cs.join(" ")]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::ingest(path, e.to_string()))?;
        let header = reader.headers().map_err(|e| Error::ingest(path, e.to_string()))?;
        if header.iter().ne(["topic_id", "content_ids"]) {
            return Err(Error::ingest(path, "expected header `topic_id,content_ids`"));
        }
        let mut set = Self::default();
        for record in reader.records() {
            let record = record.map_err(|e| Error::ingest(path, e.to_string()))?;
            set.insert(record[0].to_owned(), record[1].split_whitespace().map(str::to_owned).collect())?;
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mean_f2: f64,
    pub per_topic: BTreeMap<String, RowScore>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MetricsReport {
    pub fn per_topic_f2(&self) -> impl Iterator<Item = (&str, f64)> {
        self.per_topic.iter().map(|(t, s)| (t.as_str(), s.f2))
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mean_f2={}", self.mean_f2);
        let _ = writeln!(out, "topics={}", self.per_topic.len());
        let _ = writeln!(out, "tp={}", self.tp);
        let _ = writeln!(out, "fp={}", self.fp);
        let _ = writeln!(out, "fn={}", self.fn_);
        out
    }

    /// `topic_id,f2,tp,fp,fn` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("topic_id,f2,tp,fp,fn\n");
        for (t, s) in &self.per_topic {
            let _ = writeln!(out, "{t},{},{},{},{}", s.f2, s.tp, s.fp, s.fn_);
        }
        out
    }
}

/// Scores `predictions` against `truth` for each topic in `topics`, in order.
/// Topics absent from `predictions` count as empty predictions.
pub fn evaluate_predictions(predictions: &PredictionSet, truth: &CorrelationSet, topics: &[&str]) -> Result<MetricsReport> {
    if topics.is_empty() {
        return Err(Error::InvalidArgument("no topics to evaluate".into()));
    }
    let empty = BTreeSet::new();
    let mut per_topic = BTreeMap::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut sum = 0.0;
    for &t in topics {
        let predicted: BTreeSet<&str> = predictions.get(t).iter().map(String::as_str).collect();
        let truth: BTreeSet<&str> = truth.get(t).unwrap_or(&empty).iter().map(String::as_str).collect();
        let s = row_score(&predicted, &truth);
        sum += s.f2;
        tp += s.tp;
        fp += s.fp;
        fn_ += s.fn_;
        per_topic.insert(t.to_owned(), s);
    }
    Ok(MetricsReport { mean_f2: sum / topics.len() as f64, per_topic, tp, fp, fn_ })
}

/// Ranks non-degenerate content rows by cosine similarity (descending, ties
/// by row order) and keeps the top `k` at or above `threshold`. The best
/// match is always kept. A degenerate topic yields nothing.
pub fn recommend(topic: &Embedding, contents: &EmbeddingMatrix, k: usize, threshold: f64) -> Vec<String> {
    if topic.degenerate || k == 0 {
        return Vec::new();
    }
    let sims = contents.values.dot(&topic.vector);
    let mut ranked: Vec<(usize, f64)> = (0..contents.len())
        .filter(|&i| !contents.degenerate[i])
        .map(|i| (i, sims[i]))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(k)
        .enumerate()
        .filter(|&(rank, (_, s))| rank == 0 || s >= threshold)
        .map(|(_, (i, _))| contents.ids[i].clone())
        .collect()
}

/// Recommendations for `topic_ids` against every content item of the corpus.
pub fn predict_topics(
    params: &EncoderParams,
    config: &EncoderConfig,
    corpus: &Corpus,
    topic_ids: &[&str],
    k: usize,
    threshold: f64,
) -> Result<PredictionSet> {
    let texts = topic_ids
        .iter()
        .map(|t| corpus.topic_breadcrumb_text(t))
        .collect::<Result<Vec<_>>>()?;
    let topics = embed_texts(params, config, topic_ids.iter().map(|s| s.to_string()).collect(), &texts)?;
    let content_ids: Vec<String> = corpus.contents().iter().map(|c| c.id.clone()).collect();
    let content_texts: Vec<String> = corpus.contents().iter().map(|c| c.encoder_text()).collect();
    let contents = embed_texts(params, config, content_ids, &content_texts)?;

    let mut set = PredictionSet::default();
    for (row, id) in topics.ids.iter().enumerate() {
        set.insert(id.clone(), recommend(&topics.embedding(row), &contents, k, threshold))?;
    }
    Ok(set)
}

/// Mean F2 over the topics of `fold`.
pub fn evaluate_fold(
    params: &EncoderParams,
    config: &EncoderConfig,
    corpus: &Corpus,
    assignment: &FoldAssignment,
    fold: usize,
    k: usize,
    threshold: f64,
) -> Result<MetricsReport> {
    if fold >= assignment.n_folds {
        return Err(Error::InvalidArgument(format!("fold {fold} out of range 0..{}", assignment.n_folds)));
    }
    let topics = assignment.topics_in(fold);
    if topics.is_empty() {
        return Err(Error::InvalidArgument(format!("fold {fold} is empty")));
    }
    let predictions = predict_topics(params, config, corpus, &topics, k, threshold)?;
    evaluate_predictions(&predictions, corpus.correlations(), &topics)
}
