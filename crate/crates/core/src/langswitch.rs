//! Periodic language switching of training pairs.
//!
//! On switch epochs every pair whose language is in the configured cycle is
//! translated into the next language of the cycle. Translated pairs that
//! closely duplicate an existing pair in the target language are filtered out.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::batching::Pair;
use crate::corpus::is_language_code;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no translation for `{text}` ({source_lang} -> {target_lang})")]
pub struct TranslateError {
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

/// Deterministic text translation. Implementations must return the input
/// unchanged when source and target languages agree.
pub trait TranslationProvider: Send + Sync {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, TranslateError>;
}

/// Appends `_<target>` to each whitespace token.
pub fn pseudo_translate(text: &str, source: &str, target: &str) -> String {
    if source == target {
        return text.to_owned();
    }
    text.split_whitespace().map(|t| format!("{t}_{target}")).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PseudoTranslator;

impl TranslationProvider for PseudoTranslator {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, TranslateError> {
        Ok(pseudo_translate(text, source, target))
    }
}

/// Precomputed translations keyed by (text, source, target).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslationMemory {
    entries: HashMap<(String, String, String), String>,
}

impl TranslationMemory {
    pub fn insert(&mut self, text: &str, source: &str, target: &str, translation: &str) {
        self.entries
            .insert((text.to_owned(), source.to_owned(), target.to_owned()), translation.to_owned());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads `source_text,source_lang,target_lang,target_text` rows.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::ingest(path, e.to_string()))?;
        let header = reader.headers().map_err(|e| Error::ingest(path, e.to_string()))?;
        let expected = ["source_text", "source_lang", "target_lang", "target_text"];
        if header.iter().ne(expected) {
            return Err(Error::ingest(path, format!("expected header `{}`", expected.join(","))));
        }
        let mut memory = Self::default();
        for record in reader.records() {
            let record = record.map_err(|e| Error::ingest(path, e.to_string()))?;
            for lang in [&record[1], &record[2]] {
                if !is_language_code(lang) {
                    return Err(Error::Language(lang.to_owned()));
                }
            }
            memory.insert(&record[0], &record[1], &record[2], &record[3]);
        }
        Ok(memory)
    }
}

impl TranslationProvider for TranslationMemory {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, TranslateError> {
        if source == target {
            return Ok(text.to_owned());
        }
        self.entries
            .get(&(text.to_owned(), source.to_owned(), target.to_owned()))
            .cloned()
            .ok_or_else(|| TranslateError {
                text: text.to_owned(),
                source_lang: source.to_owned(),
                target_lang: target.to_owned(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchConfig {
    /// Cyclic order; a pair in `languages[i]` moves to `languages[i + 1]`.
    pub languages: Vec<String>,
    pub period: usize,
    pub dedup_threshold: f64,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self { languages: ["en", "es", "pt", "fr"].map(String::from).to_vec(), period: 2, dedup_threshold: 0.8 }
    }
}

impl SwitchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::Config("switch period must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dedup_threshold) {
            return Err(Error::Config(format!("dedup_threshold {} outside [0, 1]", self.dedup_threshold)));
        }
        let mut seen = HashSet::new();
        for l in &self.languages {
            if !is_language_code(l) {
                return Err(Error::Language(l.clone()));
            }
            if !seen.insert(l) {
                return Err(Error::Config(format!("language `{l}` repeated in switch cycle")));
            }
        }
        Ok(())
    }

    pub fn next_language(&self, language: &str) -> Option<&str> {
        let i = self.languages.iter().position(|l| l == language)?;
        Some(&self.languages[(i + 1) % self.languages.len()])
    }
}

/// Epochs are 1-based; switching happens when the epoch is a multiple of the period.
pub fn is_switch_epoch(epoch: usize, config: &SwitchConfig) -> bool {
    epoch >= 1 && config.period > 0 && epoch.is_multiple_of(config.period)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOutcome {
    pub pairs: Vec<Pair>,
    /// Whether `pairs[i]` was translated.
    pub translated: Vec<bool>,
    /// Pairs left untranslated because the provider failed.
    pub skipped: usize,
}

/// Translates in-cycle pairs on switch epochs; identity otherwise.
pub fn switch_pairs(
    pairs: &[Pair],
    provider: &dyn TranslationProvider,
    config: &SwitchConfig,
    epoch: usize,
) -> SwitchOutcome {
    let mut out = SwitchOutcome { pairs: pairs.to_vec(), translated: vec![false; pairs.len()], skipped: 0 };
    if !is_switch_epoch(epoch, config) {
        return out;
    }
    for (i, pair) in pairs.iter().enumerate() {
        let Some(target) = config.next_language(&pair.language) else {
            continue;
        };
        if target == pair.language {
            continue;
        }
        let topic = provider.translate(&pair.epoch_text_topic, &pair.language, target);
        let content = provider.translate(&pair.epoch_text_content, &pair.language, target);
        match (topic, content) {
            (Ok(topic), Ok(content)) => {
                let p = &mut out.pairs[i];
                p.epoch_text_topic = topic;
                p.epoch_text_content = content;
                p.language = target.to_owned();
                out.translated[i] = true;
            }
            _ => out.skipped += 1,
        }
    }
    out
}

fn token_set(text: &str) -> HashSet<&str> {
    text.split_whitespace().collect()
}

/// Jaccard similarity of whitespace token sets; two empty texts score 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    jaccard_sets(&token_set(a), &token_set(b))
}

fn jaccard_sets(a: &HashSet<&str>, b: &HashSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Drops translated pairs that have an existing pair in the same language
/// with topic-text and content-text Jaccard both at least `threshold`.
/// Survivors keep their order.
pub fn filter_translated_pairs(translated: &[Pair], existing: &[Pair], threshold: f64) -> Vec<Pair> {
    type TokenSets<'a> = (HashSet<&'a str>, HashSet<&'a str>);
    let mut by_language: HashMap<&str, Vec<TokenSets>> = HashMap::new();
    for p in existing {
        by_language
            .entry(p.language.as_str())
            .or_default()
            .push((token_set(&p.epoch_text_topic), token_set(&p.epoch_text_content)));
    }
    translated
        .iter()
        .filter(|p| {
            let Some(candidates) = by_language.get(p.language.as_str()) else {
                return true;
            };
            let topic = token_set(&p.epoch_text_topic);
            let content = token_set(&p.epoch_text_content);
            !candidates
                .iter()
                .any(|(t, c)| jaccard_sets(&topic, t) >= threshold && jaccard_sets(&content, c) >= threshold)
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(t: &str, lang: &str, topic: &str, content: &str) -> Pair {
        Pair {
            topic_id: t.into(),
            content_id: format!("c_{t}"),
            epoch_text_topic: topic.into(),
            epoch_text_content: content.into(),
            language: lang.into(),
        }
    }

    #[test]
    fn switch_epochs() {
        let cfg = SwitchConfig::default();
        assert!(!is_switch_epoch(1, &cfg));
        assert!(is_switch_epoch(2, &cfg));
        assert!(!is_switch_epoch(3, &cfg));
        assert!(is_switch_epoch(40, &cfg));
    }

    #[test]
    fn pseudo_translation_rule() {
        assert_eq!(pseudo_translate("linear algebra", "en", "fr"), "linear_fr algebra_fr");
        assert_eq!(pseudo_translate("x", "fr", "fr"), "x");
    }

    #[test]
    fn cycle_order() {
        let cfg = SwitchConfig::default();
        let next: Vec<&str> = ["en", "es", "pt", "fr"].iter().map(|l| cfg.next_language(l).unwrap()).collect();
        assert_eq!(next, ["es", "pt", "fr", "en"]);
        assert_eq!(cfg.next_language("sw"), None);
    }

    #[test]
    fn switch_pairs_behaviour() {
        let cfg = SwitchConfig::default();
        let pairs = vec![pair("a", "en", "linear algebra", "matrix intro"), pair("b", "sw", "hesabu", "somo")];
        let e1 = switch_pairs(&pairs, &PseudoTranslator, &cfg, 1);
        assert_eq!(e1.pairs, pairs);
        assert_eq!(e1.translated, [false, false]);

        let e2 = switch_pairs(&pairs, &PseudoTranslator, &cfg, 2);
        assert_eq!(e2.pairs[0].language, "es");
        assert_eq!(e2.pairs[0].epoch_text_topic, "linear_es algebra_es");
        assert_eq!(e2.pairs[0].epoch_text_content, "matrix_es intro_es");
        assert_eq!(e2.pairs[0].topic_id, "a");
        assert_eq!(e2.pairs[1], pairs[1]);
        assert_eq!(e2.translated, [true, false]);
        assert_eq!(e2.skipped, 0);
    }

    #[test]
    fn provider_failure_is_skipped() {
        let cfg = SwitchConfig::default();
        let mut memory = TranslationMemory::default();
        memory.insert("hello", "en", "es", "hola");
        memory.insert("world", "en", "es", "mundo");
        let pairs = vec![pair("a", "en", "hello", "world"), pair("b", "en", "hello", "missing")];
        let out = switch_pairs(&pairs, &memory, &cfg, 2);
        assert_eq!(out.pairs[0].epoch_text_topic, "hola");
        assert_eq!(out.pairs[0].epoch_text_content, "mundo");
        assert_eq!(out.pairs[1], pairs[1]);
        assert_eq!(out.skipped, 1);
    }

    #[test]
    fn jaccard_half() {
        // union {a,b,c,d,e,f}, intersection {a,b,c}
        assert_eq!(jaccard("a b c d", "a b c e f"), 0.5);
        assert_eq!(jaccard("", ""), 1.0);
    }

    #[test]
    fn filter_examples() {
        let existing = vec![pair("x", "fr", "algèbre linéaire", "matrice intro")];
        let dup = pair("y", "fr", "algèbre linéaire", "matrice intro");
        assert!(filter_translated_pairs(std::slice::from_ref(&dup), &existing, 0.8).is_empty());

        let other_lang = pair("y", "es", "algèbre linéaire", "matrice intro");
        assert_eq!(filter_translated_pairs(std::slice::from_ref(&other_lang), &existing, 0.8), [other_lang]);

        let half = vec![pair("x", "fr", "a b c d", "same text")];
        let cand = pair("y", "fr", "a b c e f", "same text");
        assert_eq!(filter_translated_pairs(std::slice::from_ref(&cand), &half, 0.8), [cand]);
    }

    #[test]
    fn config_validation() {
        assert!(SwitchConfig::default().validate().is_ok());
        assert!(SwitchConfig { period: 0, ..Default::default() }.validate().is_err());
        assert!(SwitchConfig { dedup_threshold: 1.5, ..Default::default() }.validate().is_err());
        let dup = SwitchConfig { languages: vec!["en".into(), "en".into()], ..Default::default() };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn memory_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tm.csv");
        std::fs::write(&path, "source_text,source_lang,target_lang,target_text\n\"hello, world\",en,fr,\"bonjour, monde\"\n").unwrap();
        let m = TranslationMemory::from_csv(&path).unwrap();
        assert_eq!(m.translate("hello, world", "en", "fr").unwrap(), "bonjour, monde");
        assert!(m.translate("hello", "en", "fr").is_err());
        assert_eq!(m.translate("hello", "en", "en").unwrap(), "hello");
    }
}
