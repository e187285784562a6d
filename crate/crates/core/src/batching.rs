//! Batch construction under the diagonal-only-truth constraint, plus
//! hard-negative mining.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorrelationSet;
use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};

/// One (topic, content) training pair with the texts used this epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub topic_id: String,
    pub content_id: String,
    pub epoch_text_topic: String,
    pub epoch_text_content: String,
    pub language: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Batch {
    pub pairs: Vec<Pair>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

struct OpenBatch<'a> {
    members: Vec<usize>,
    topics: HashSet<&'a str>,
    contents: HashSet<&'a str>,
    // contents correlated with some member topic
    blocked_contents: HashSet<&'a str>,
    // topics correlated with some member content
    blocked_topics: HashSet<&'a str>,
}

impl<'a> OpenBatch<'a> {
    fn new() -> Self {
        Self {
            members: Vec::new(),
            topics: HashSet::new(),
            contents: HashSet::new(),
            blocked_contents: HashSet::new(),
            blocked_topics: HashSet::new(),
        }
    }

    fn accepts(&self, pair: &Pair) -> bool {
        let (t, c) = (pair.topic_id.as_str(), pair.content_id.as_str());
        !self.topics.contains(t)
            && !self.contents.contains(c)
            && !self.blocked_contents.contains(c)
            && !self.blocked_topics.contains(t)
    }

    fn push(&mut self, idx: usize, pair: &'a Pair, correlations: &'a CorrelationSet, reverse: &HashMap<&'a str, Vec<&'a str>>) {
        self.members.push(idx);
        self.topics.insert(&pair.topic_id);
        self.contents.insert(&pair.content_id);
        if let Some(cs) = correlations.get(&pair.topic_id) {
            self.blocked_contents.extend(cs.iter().map(String::as_str));
        }
        if let Some(ts) = reverse.get(pair.content_id.as_str()) {
            self.blocked_topics.extend(ts.iter().copied());
        }
    }
}

/// Seeded first-fit packing of `pairs` into batches of at most `batch_size`.
///
/// Pairs are shuffled, then each goes into the earliest non-full batch where
/// it shares no topic or content id with a member and creates no true
/// correlation off the diagonal; otherwise it opens a new batch. Batches are
/// returned in creation order and together hold every input pair once.
pub fn constrained_shuffle(
    pairs: &[Pair],
    correlations: &CorrelationSet,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::Contract(format!("batch_size must be at least 2, got {batch_size}")));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let reverse = correlations.reverse();
    let mut batches: Vec<OpenBatch> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for idx in order {
        let pair = &pairs[idx];
        let slot = open.iter().position(|&b| batches[b].accepts(pair));
        let b = match slot {
            Some(s) => open[s],
            None => {
                batches.push(OpenBatch::new());
                open.push(batches.len() - 1);
                batches.len() - 1
            }
        };
        batches[b].push(idx, pair, correlations, &reverse);
        if batches[b].members.len() == batch_size {
            open.retain(|&o| o != b);
        }
    }

    Ok(batches
        .into_iter()
        .map(|b| Batch { pairs: b.members.into_iter().map(|i| pairs[i].clone()).collect() })
        .collect())
}

/// Off-diagonal true correlations plus repeated topic or content ids,
/// summed over all batches. Zero means every batch is valid.
pub fn verify_batches(batches: &[Batch], correlations: &CorrelationSet) -> usize {
    let mut violations = 0;
    for batch in batches {
        for (i, a) in batch.pairs.iter().enumerate() {
            for (j, b) in batch.pairs.iter().enumerate() {
                if i != j && correlations.contains(&a.topic_id, &b.content_id) {
                    violations += 1;
                }
            }
        }
        let mut topics = HashSet::new();
        let mut contents = HashSet::new();
        for p in &batch.pairs {
            if !topics.insert(p.topic_id.as_str()) {
                violations += 1;
            }
            if !contents.insert(p.content_id.as_str()) {
                violations += 1;
            }
        }
    }
    violations
}

/// Per topic, the most similar non-correlated contents, most similar first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HardNegativePool {
    pub negatives: BTreeMap<String, Vec<(String, f64)>>,
}

impl HardNegativePool {
    pub fn get(&self, topic_id: &str) -> &[(String, f64)] {
        self.negatives.get(topic_id).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.negatives.is_empty()
    }
}

/// Top-`k` non-correlated contents per topic by cosine similarity (rows are
/// unit embeddings). Degenerate rows are skipped; ties keep content row order.
pub fn mine_hard_negatives(
    topic_embs: &EmbeddingMatrix,
    content_embs: &EmbeddingMatrix,
    correlations: &CorrelationSet,
    k: usize,
) -> Result<HardNegativePool> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let sims = topic_embs.values.dot(&content_embs.values.t());
    let mut pool = HardNegativePool::default();
    for (ti, topic_id) in topic_embs.ids.iter().enumerate() {
        if topic_embs.degenerate[ti] {
            continue;
        }
        let mut candidates: Vec<(usize, f64)> = content_embs
            .ids
            .iter()
            .enumerate()
            .filter(|&(ci, cid)| !content_embs.degenerate[ci] && !correlations.contains(topic_id, cid))
            .map(|(ci, _)| (ci, sims[[ti, ci]]))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.truncate(k);
        pool.negatives.insert(
            topic_id.clone(),
            candidates.into_iter().map(|(ci, s)| (content_embs.ids[ci].clone(), s)).collect(),
        );
    }
    Ok(pool)
}

/// Picks up to `count` hard-negative content ids for `batch`, round-robin
/// over its topics' pools. A pick is never a batch member and never
/// correlated with any topic in the batch, so it can only act as a negative.
pub fn extra_negatives(batch: &Batch, pool: &HardNegativePool, correlations: &CorrelationSet, count: usize) -> Vec<String> {
    let members: HashSet<&str> = batch.pairs.iter().map(|p| p.content_id.as_str()).collect();
    let mut chosen: Vec<String> = Vec::new();
    let mut taken: HashSet<&str> = HashSet::new();
    let mut cursors = vec![0usize; batch.len()];
    let mut progressed = true;
    while chosen.len() < count && progressed {
        progressed = false;
        for (pi, pair) in batch.pairs.iter().enumerate() {
            if chosen.len() == count {
                break;
            }
            let list = pool.get(&pair.topic_id);
            while cursors[pi] < list.len() {
                let cand = list[cursors[pi]].0.as_str();
                cursors[pi] += 1;
                let usable = !members.contains(cand)
                    && !taken.contains(cand)
                    && batch.pairs.iter().all(|p| !correlations.contains(&p.topic_id, cand));
                if usable {
                    taken.insert(cand);
                    chosen.push(cand.to_owned());
                    progressed = true;
                    break;
                }
            }
        }
    }
    chosen
}
