//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use curricula::batching::Pair;
use curricula::corpus::CorrelationSet;
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric InfoNCE written out with plain exponentials.
#[allow(clippy::needless_range_loop)]
pub fn naive_symmetric_loss(t: &Array2<f64>, c: &Array2<f64>, tau: f64) -> f64 {
    let n = t.nrows();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..t.ncols() {
                dot += t[[i, k]] * c[[j, k]];
            }
            s[i][j] = dot / tau;
        }
    }
    let mut rows = 0.0;
    let mut cols = 0.0;
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| s[i][j].exp()).sum();
        rows += -(s[i][i].exp() / row_sum).ln();
        let col_sum: f64 = (0..n).map(|j| s[j][i].exp()).sum();
        cols += -(s[i][i].exp() / col_sum).ln();
    }
    (rows / n as f64 + cols / n as f64) / 2.0
}

/// Central differences of [`naive_symmetric_loss`] in every entry of both inputs.
pub fn finite_difference(t: &Array2<f64>, c: &Array2<f64>, tau: f64, h: f64) -> (Array2<f64>, Array2<f64>) {
    let mut gt = Array2::zeros(t.dim());
    let mut gc = Array2::zeros(c.dim());
    for idx in ndarray::indices(t.dim()) {
        let mut plus = t.clone();
        plus[idx] += h;
        let mut minus = t.clone();
        minus[idx] -= h;
        gt[idx] = (naive_symmetric_loss(&plus, c, tau) - naive_symmetric_loss(&minus, c, tau)) / (2.0 * h);
    }
    for idx in ndarray::indices(c.dim()) {
        let mut plus = c.clone();
        plus[idx] += h;
        let mut minus = c.clone();
        minus[idx] -= h;
        gc[idx] = (naive_symmetric_loss(t, &plus, tau) - naive_symmetric_loss(t, &minus, tau)) / (2.0 * h);
    }
    (gt, gc)
}

/// Largest entry-wise `|a - b| / max(|a|, |b|)`, entries where both sides
/// are below `floor` compared absolutely against `floor`.
pub fn max_relative_error(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let scale = x.abs().max(y.abs());
            if scale < floor {
                (x - y).abs() / floor
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// `max |a - b| / max |b|`: the error relative to the gradient's own scale.
pub fn normwise_relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_unit_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m: Array2<f64> = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    m
}

/// F-beta from precision and recall, 0 when nothing is right.
pub fn naive_fbeta(tp: usize, fp: usize, fn_: usize, beta: f64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    (1.0 + beta * beta) * p * r / (beta * beta * p + r)
}

/// Mean F2 by explicit nested loops over predicted and true ids.
pub fn naive_mean_f2(rows: &[(Vec<String>, Vec<String>)]) -> f64 {
    let mut total = 0.0;
    for (predicted, truth) in rows {
        let score = if truth.is_empty() {
            if predicted.is_empty() {
                1.0
            } else {
                0.0
            }
        } else {
            let mut tp = 0;
            for p in predicted {
                for t in truth {
                    if p == t {
                        tp += 1;
                    }
                }
            }
            naive_fbeta(tp, predicted.len() - tp, truth.len() - tp, 2.0)
        };
        total += score;
    }
    total / rows.len() as f64
}

/// Overlap objective of a topic → fold map, counted from scratch.
pub fn naive_objective(correlations: &CorrelationSet, fold_of: &BTreeMap<String, usize>) -> usize {
    let mut spread: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (t, cs) in correlations.iter() {
        for c in cs {
            spread.entry(c.as_str()).or_default().insert(fold_of[t]);
        }
    }
    spread.values().map(|f| f.len() - 1).sum()
}

/// Minimum objective over every assignment of the correlated topics.
pub fn exhaustive_min_objective(correlations: &CorrelationSet, n_folds: usize) -> usize {
    let topics: Vec<&str> = correlations.topics().collect();
    let total = n_folds.pow(topics.len() as u32);
    let mut best = usize::MAX;
    for code in 0..total {
        let mut rest = code;
        let fold_of: BTreeMap<String, usize> = topics
            .iter()
            .map(|t| {
                let f = rest % n_folds;
                rest /= n_folds;
                (t.to_string(), f)
            })
            .collect();
        best = best.min(naive_objective(correlations, &fold_of));
    }
    best
}

/// Random topic → content relation where each content slot reuses an
/// already used content with probability `share`.
pub fn random_correlations(n_topics: usize, max_per_topic: usize, share: f64, rng: &mut ChaCha8Rng) -> CorrelationSet {
    let mut set = CorrelationSet::new();
    let mut used: Vec<String> = Vec::new();
    for t in 0..n_topics {
        let topic = format!("t{t:03}");
        for _ in 0..rng.random_range(1..=max_per_topic) {
            let content = if !used.is_empty() && rng.random_bool(share) {
                used.choose(rng).unwrap().clone()
            } else {
                let fresh = format!("c{:04}", used.len());
                used.push(fresh.clone());
                fresh
            };
            set.insert(topic.clone(), content);
        }
    }
    set
}

/// One pair per correlation, texts derived from the ids.
pub fn pairs_of(correlations: &CorrelationSet, language: &str) -> Vec<Pair> {
    correlations
        .iter()
        .flat_map(|(t, cs)| {
            cs.iter().map(move |c| Pair {
                topic_id: t.to_owned(),
                content_id: c.clone(),
                epoch_text_topic: format!("topic {t}"),
                epoch_text_content: format!("content {c}"),
                language: language.to_owned(),
            })
        })
        .collect()
}

pub fn sorted_keys(pairs: impl IntoIterator<Item = Pair>) -> Vec<(String, String)> {
    let mut keys: Vec<(String, String)> = pairs.into_iter().map(|p| (p.topic_id, p.content_id)).collect();
    keys.sort();
    keys
}
