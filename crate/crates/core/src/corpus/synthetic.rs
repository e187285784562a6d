//! Seeded synthetic corpora with learnable alignments.
//!
//! Every topic is a bundle of a few latent concepts drawn from a shared
//! inventory. A concept has two unrelated surface words, one used on the
//! topic side and one on the content side, so raw lexical overlap between a
//! topic and its contents is nil and the pairing has to be learned. A topic's
//! token cluster consists of concatenations of its concepts' words in
//! different orders. No two topics share the same concept set, so clusters
//! are disjoint, while the character n-grams of every compound recur across
//! topics.
//!
//! Topic titles carry only filler vocabulary and a number, so the breadcrumb
//! of a topic adds tree context without leaking another topic's concepts.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{is_language_code, ContentItem, ContentKind, Corpus, CorrelationSet, Topic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_topics: usize,
    pub contents_per_topic: usize,
    pub languages: Vec<String>,
    /// Tokens per topic cluster, split evenly between the topic side and
    /// the content side.
    pub vocab_per_cluster: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_topics: 200,
            contents_per_topic: 3,
            languages: ["en", "es", "pt", "fr"].map(String::from).to_vec(),
            vocab_per_cluster: 20,
            seed: 7,
        }
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
const VOWELS: &[u8] = b"aeiouy";

pub const CONCEPTS_PER_TOPIC: usize = 4;
/// Size of the shared concept inventory. Small enough that every concept
/// recurs across many training topics.
pub const CONCEPT_INVENTORY: usize = 30;

const TOPIC_DESCRIPTION_TOKENS: usize = 6;
/// Content-side cluster tokens per item. One filler word joins the
/// description and one the snippet, so clusters supply 12 of 14 tokens.
const CONTENT_TITLE_TOKENS: usize = 2;
const CONTENT_DESCRIPTION_TOKENS: usize = 4;
const CONTENT_SNIPPET_TOKENS: usize = 6;

const BRANCHING: usize = 8;

pub(crate) fn filler_words(language: &str) -> &'static [&'static str] {
    match language {
        "en" => &["unit", "lesson", "the", "and", "practice", "introduction"],
        "es" => &["unidad", "lección", "el", "y", "práctica", "introducción"],
        "pt" => &["unidade", "lição", "o", "e", "prática", "introdução"],
        "fr" => &["unité", "leçon", "le", "et", "pratique", "introduction"],
        _ => &["module", "part", "core", "basic", "review", "topic"],
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::with_capacity(syllables * 2 + 1);
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
        w.push(*VOWELS.choose(rng).unwrap() as char);
    }
    if rng.random_bool(0.5) {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
    }
    w
}

fn unique_words(n: usize, used: &mut HashSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if used.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Distinct `k`-subsets of `0..n_concepts`, one per topic.
fn concept_bundles(n_topics: usize, n_concepts: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..n_concepts).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n_topics);
    while out.len() < n_topics {
        let mut pick: Vec<usize> = all.choose_multiple(rng, k).copied().collect();
        pick.sort_unstable();
        if seen.insert(pick.clone()) {
            pick.shuffle(rng);
            out.push(pick);
        }
    }
    out
}

fn subsets(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1, |acc, i| acc * (n as u128 - i) / (i + 1))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

/// `n` distinct concatenations of all `words`, orders chosen at random.
/// Past the number of orderings, numbered variants fill the remainder.
fn compounds(words: &[&str], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut orders = permutations(words.len());
    orders.shuffle(rng);
    (0..n)
        .map(|i| {
            let word: String = orders[i % orders.len()].iter().map(|&j| words[j]).collect();
            match i / orders.len() {
                0 => word,
                round => format!("{word}{round}"),
            }
        })
        .collect()
}

fn draw(cluster: &[String], n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    if n <= cluster.len() {
        cluster.choose_multiple(rng, n).cloned().collect()
    } else {
        (0..n).map(|_| cluster.choose(rng).unwrap().clone()).collect()
    }
}

/// Generates a deterministic corpus of `n_topics` topics, each correlated
/// with exactly `contents_per_topic` fresh content items.
///
/// Languages are assigned round-robin over topics; each language has its own
/// channel whose topics form a shallow tree.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<Corpus> {
    if config.n_topics == 0 || config.contents_per_topic == 0 || config.vocab_per_cluster < 2 {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs positive counts and at least 2 tokens per cluster".into(),
        ));
    }
    if config.languages.is_empty() {
        return Err(Error::InvalidArgument("at least one language is required".into()));
    }
    if let Some(bad) = config.languages.iter().find(|l| !is_language_code(l)) {
        return Err(Error::Language(bad.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut n_concepts = CONCEPT_INVENTORY;
    while subsets(n_concepts, CONCEPTS_PER_TOPIC) < config.n_topics as u128 {
        n_concepts += 1;
    }
    let mut used = HashSet::new();
    let topic_words = unique_words(n_concepts, &mut used, &mut rng);
    let content_words = unique_words(n_concepts, &mut used, &mut rng);
    let bundles = concept_bundles(config.n_topics, n_concepts, CONCEPTS_PER_TOPIC, &mut rng);

    let topic_side = config.vocab_per_cluster / 2;
    let content_side = config.vocab_per_cluster - topic_side;

    let width = config.n_topics.to_string().len().max(4);
    let content_width = (config.n_topics * config.contents_per_topic).to_string().len().max(5);
    let n_lang = config.languages.len();

    let mut topics = Vec::with_capacity(config.n_topics);
    let mut contents = Vec::with_capacity(config.n_topics * config.contents_per_topic);
    let mut correlations = CorrelationSet::new();
    let mut channel_members: Vec<Vec<String>> = vec![Vec::new(); n_lang];

    for (i, bundle) in bundles.iter().enumerate() {
        let lang_slot = i % n_lang;
        let language = &config.languages[lang_slot];
        let filler = filler_words(language);
        let id = format!("t{i:0width$}");

        let words: Vec<&str> = bundle.iter().map(|&c| topic_words[c].as_str()).collect();
        let topic_cluster = compounds(&words, topic_side, &mut rng);
        let words: Vec<&str> = bundle.iter().map(|&c| content_words[c].as_str()).collect();
        let content_cluster = compounds(&words, content_side, &mut rng);

        let members = &mut channel_members[lang_slot];
        let parent_id = match members.len() {
            0 => None,
            j => Some(members[(j - 1) / BRANCHING].clone()),
        };
        let title = format!("{} {}", filler[members.len() % 2], members.len() + 1);
        members.push(id.clone());

        topics.push(Topic {
            id: id.clone(),
            title,
            description: draw(&topic_cluster, TOPIC_DESCRIPTION_TOKENS, &mut rng).join(" "),
            language: language.clone(),
            parent_id,
            channel_id: format!("ch_{language}"),
            has_content: true,
        });

        for j in 0..config.contents_per_topic {
            let n = i * config.contents_per_topic + j;
            let content_id = format!("c{n:0content_width$}");
            let mut description = draw(&content_cluster, CONTENT_DESCRIPTION_TOKENS, &mut rng);
            description.push(filler.choose(&mut rng).unwrap().to_string());
            description.shuffle(&mut rng);
            let mut snippet = draw(&content_cluster, CONTENT_SNIPPET_TOKENS, &mut rng);
            snippet.push(filler.choose(&mut rng).unwrap().to_string());
            snippet.shuffle(&mut rng);
            contents.push(ContentItem {
                id: content_id.clone(),
                title: draw(&content_cluster, CONTENT_TITLE_TOKENS, &mut rng).join(" "),
                description: description.join(" "),
                kind: ContentKind::ALL[n % ContentKind::ALL.len()],
                language: language.clone(),
                text_snippet: snippet.join(" "),
            });
            correlations.insert(id.clone(), content_id);
        }
    }

    Corpus::new(topics, contents, correlations)
}
