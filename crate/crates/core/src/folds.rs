//! Topic-level cross-validation folds that keep shared content together.
//!
//! The quality measure is the fold overlap objective: for every content item,
//! the number of distinct folds its topics land in, minus one, summed.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorrelationSet;
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: BTreeMap<String, usize>,
    pub n_folds: usize,
}

impl FoldAssignment {
    pub fn fold_of(&self, topic_id: &str) -> Option<usize> {
        self.folds.get(topic_id).copied()
    }

    /// Topic ids in `fold`, ascending.
    pub fn topics_in(&self, fold: usize) -> Vec<&str> {
        self.folds.iter().filter(|&(_, &f)| f == fold).map(|(t, _)| t.as_str()).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.folds.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Writes `topic_id,fold` rows in ascending topic id order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let err = |e: csv::Error| Error::ingest(path, e.to_string());
        w.write_record(["topic_id", "fold"]).map_err(err)?;
        for (t, f) in &self.folds {
            w.write_record([t.as_str(), &f.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `topic_id,fold`; the fold count is taken as the largest index plus one.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers().map_err(|e| Error::ingest(path, e.to_string()))?;
        if header.iter().ne(["topic_id", "fold"]) {
            return Err(Error::ingest(path, "expected header `topic_id,fold`"));
        }
        let mut folds = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::ingest(path, e.to_string()))?;
            let row = record.position().map_or(0, |p| p.line());
            let fold: usize = record[1]
                .parse()
                .map_err(|_| Error::ingest(path, format!("row {row}: bad fold `{}`", &record[1])))?;
            if folds.insert(record[0].to_owned(), fold).is_some() {
                return Err(Error::DuplicateId { kind: "fold topic", id: record[0].to_owned() });
            }
        }
        let n_folds = folds.values().max().map_or(0, |m| m + 1);
        Ok(Self { folds, n_folds })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapReport {
    pub objective: usize,
    pub per_fold_sizes: Vec<usize>,
    pub per_content_fold_spread: BTreeMap<String, usize>,
}

/// Overlap objective of `assignment`; every correlated topic must be assigned.
pub fn overlap_objective(assignment: &FoldAssignment, correlations: &CorrelationSet) -> Result<OverlapReport> {
    let mut spread: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (t, cs) in correlations.iter() {
        let fold = assignment
            .fold_of(t)
            .ok_or_else(|| Error::Contract(format!("topic `{t}` has no fold")))?;
        for c in cs {
            spread.entry(c.clone()).or_default().insert(fold);
        }
    }
    let per_content_fold_spread: BTreeMap<String, usize> = spread.into_iter().map(|(c, f)| (c, f.len())).collect();
    let objective = per_content_fold_spread.values().map(|s| s - 1).sum();
    Ok(OverlapReport { objective, per_fold_sizes: assignment.fold_sizes(), per_content_fold_spread })
}

/// Greedy overlap-minimizing split of the correlated topics into `n_folds`.
///
/// Topics are ranked by descending content count, ties by id (or shuffled
/// by `tie_seed`). Topics linked through shared content are visited
/// together, breadth-first from their best-ranked member, and larger groups
/// go first. Each topic joins the fold whose accumulated content shares the
/// most items with it; ties go to the smaller fold, then the lower index.
/// A group therefore never straddles folds, and the objective is always 0.
pub fn greedy_assign(correlations: &CorrelationSet, n_folds: usize, tie_seed: Option<u64>) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    if correlations.is_empty() {
        return Err(Error::InvalidArgument("no correlated topics to split".into()));
    }

    let mut ranked: Vec<(&str, &BTreeSet<String>)> = correlations.iter().collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    if let Some(seed) = tie_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for group in ranked.chunk_by_mut(|a, b| a.1.len() == b.1.len()) {
            group.shuffle(&mut rng);
        }
    }
    let n = ranked.len();
    let rank: HashMap<&str, usize> = ranked.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();

    let mut by_content: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, (_, cs)) in ranked.iter().enumerate() {
        for c in cs.iter() {
            by_content.entry(c.as_str()).or_default().push(i);
        }
    }
    let neighbours = |i: usize| -> Vec<usize> {
        let mut out: Vec<usize> = ranked[i]
            .1
            .iter()
            .flat_map(|c| by_content[c.as_str()].iter().copied())
            .filter(|&j| j != i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    };

    // connected components in rank order, each in breadth-first order
    let mut seen = vec![false; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut order = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for j in neighbours(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        components.push(order);
    }
    // stable: equal sizes keep the rank of their first member
    components.sort_by_key(|c| std::cmp::Reverse(c.len()));

    let mut fold_contents: Vec<HashSet<&str>> = vec![HashSet::new(); n_folds];
    let mut fold_counts = vec![0usize; n_folds];
    let mut folds = BTreeMap::new();
    for i in components.into_iter().flatten() {
        let (topic, contents) = ranked[i];
        let best = (0..n_folds)
            .max_by(|&a, &b| {
                let ia = contents.iter().filter(|c| fold_contents[a].contains(c.as_str())).count();
                let ib = contents.iter().filter(|c| fold_contents[b].contains(c.as_str())).count();
                ia.cmp(&ib).then(fold_counts[b].cmp(&fold_counts[a])).then(b.cmp(&a))
            })
            .expect("at least two folds");
        fold_counts[best] += 1;
        fold_contents[best].extend(contents.iter().map(String::as_str));
        folds.insert(topic.to_owned(), best);
    }
    debug_assert_eq!(folds.len(), rank.len());
    Ok(FoldAssignment { folds, n_folds })
}
