//! Curriculum taxonomy data model.
//!
//! A [`Corpus`] holds topics (nodes of per-channel trees), content items and
//! the ground-truth topic to content correlations. Collections are kept in
//! ascending id order; every downstream matrix uses that ordering.

mod io;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use io::{load_corpus, load_corpus_dir, write_corpus, CONTENT_FILE, CORRELATIONS_FILE, TOPICS_FILE};
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub id: String,
    pub title: String,
    pub description: String,
    pub language: String,
    pub parent_id: Option<String>,
    pub channel_id: String,
    pub has_content: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContentKind {
    Document,
    Video,
    Exercise,
    Audio,
    Html,
}

impl ContentKind {
    pub const ALL: [ContentKind; 5] = [
        ContentKind::Document,
        ContentKind::Video,
        ContentKind::Exercise,
        ContentKind::Audio,
        ContentKind::Html,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContentKind::Document => "document",
            ContentKind::Video => "video",
            ContentKind::Exercise => "exercise",
            ContentKind::Audio => "audio",
            ContentKind::Html => "html",
        }
    }
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ContentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown content kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentItem {
    pub id: String,
    pub title: String,
    pub description: String,
    pub kind: ContentKind,
    pub language: String,
    pub text_snippet: String,
}

impl ContentItem {
    /// Text fed to the encoder: title, description and snippet, space-joined.
    pub fn encoder_text(&self) -> String {
        [&self.title, &self.description, &self.text_snippet]
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Ground-truth topic id to content id relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrelationSet {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl CorrelationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, topic_id: impl Into<String>, content_id: impl Into<String>) {
        self.map.entry(topic_id.into()).or_default().insert(content_id.into());
    }

    pub fn contains(&self, topic_id: &str, content_id: &str) -> bool {
        self.map.get(topic_id).is_some_and(|s| s.contains(content_id))
    }

    pub fn get(&self, topic_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(topic_id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of (topic, content) pairs.
    pub fn pair_count(&self) -> usize {
        self.map.values().map(BTreeSet::len).sum()
    }

    /// Content id to the topics it is attached to.
    pub fn reverse(&self) -> HashMap<&str, Vec<&str>> {
        let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
        for (t, cs) in &self.map {
            for c in cs {
                out.entry(c.as_str()).or_default().push(t.as_str());
            }
        }
        out
    }
}

impl<T: Into<String>, C: Into<String>> FromIterator<(T, C)> for CorrelationSet {
    fn from_iter<I: IntoIterator<Item = (T, C)>>(iter: I) -> Self {
        let mut set = CorrelationSet::new();
        for (t, c) in iter {
            set.insert(t, c);
        }
        set
    }
}

/// Two lowercase ASCII letters.
pub fn is_language_code(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase())
}

/// Validated, immutable collection of topics, contents and correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    topics: Vec<Topic>,
    contents: Vec<ContentItem>,
    correlations: CorrelationSet,
    topic_index: HashMap<String, usize>,
    content_index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness, language codes, parent
    /// references, acyclicity and correlation integrity.
    pub fn new(
        mut topics: Vec<Topic>,
        mut contents: Vec<ContentItem>,
        correlations: CorrelationSet,
    ) -> Result<Self> {
        topics.sort_by(|a, b| a.id.cmp(&b.id));
        contents.sort_by(|a, b| a.id.cmp(&b.id));

        let mut topic_index = HashMap::with_capacity(topics.len());
        for (i, t) in topics.iter().enumerate() {
            if topic_index.insert(t.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { kind: "topic", id: t.id.clone() });
            }
            if !is_language_code(&t.language) {
                return Err(Error::Language(t.language.clone()));
            }
        }
        let mut content_index = HashMap::with_capacity(contents.len());
        for (i, c) in contents.iter().enumerate() {
            if content_index.insert(c.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { kind: "content", id: c.id.clone() });
            }
            if !is_language_code(&c.language) {
                return Err(Error::Language(c.language.clone()));
            }
        }

        for t in &topics {
            if let Some(p) = &t.parent_id {
                let parent = topic_index.get(p).map(|&i| &topics[i]).ok_or_else(|| {
                    Error::DanglingReference {
                        file: "topics".into(),
                        row: 0,
                        message: format!("topic `{}` has unknown parent `{p}`", t.id),
                    }
                })?;
                if parent.channel_id != t.channel_id {
                    return Err(Error::DanglingReference {
                        file: "topics".into(),
                        row: 0,
                        message: format!("topic `{}` has parent `{p}` in another channel", t.id),
                    });
                }
            }
        }
        check_acyclic(&topics, &topic_index)?;

        for (t, cs) in correlations.iter() {
            if !topic_index.contains_key(t) {
                return Err(Error::DanglingReference {
                    file: "correlations".into(),
                    row: 0,
                    message: format!("unknown topic `{t}`"),
                });
            }
            if cs.is_empty() {
                return Err(Error::InvalidArgument(format!("topic `{t}` has an empty correlation set")));
            }
            if let Some(c) = cs.iter().find(|c| !content_index.contains_key(c.as_str())) {
                return Err(Error::DanglingReference {
                    file: "correlations".into(),
                    row: 0,
                    message: format!("unknown content `{c}`"),
                });
            }
        }

        Ok(Self { topics, contents, correlations, topic_index, content_index })
    }

    /// Topics in ascending id order.
    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    /// Content items in ascending id order.
    pub fn contents(&self) -> &[ContentItem] {
        &self.contents
    }

    pub fn correlations(&self) -> &CorrelationSet {
        &self.correlations
    }

    pub fn topic(&self, id: &str) -> Option<&Topic> {
        self.topic_index.get(id).map(|&i| &self.topics[i])
    }

    pub fn content(&self, id: &str) -> Option<&ContentItem> {
        self.content_index.get(id).map(|&i| &self.contents[i])
    }

    /// Position of a content item in [`Corpus::contents`].
    pub fn content_position(&self, id: &str) -> Option<usize> {
        self.content_index.get(id).copied()
    }

    /// Ancestor titles from the root down to the topic joined by `" > "`,
    /// followed by the topic's description when it is non-empty.
    pub fn topic_breadcrumb_text(&self, topic_id: &str) -> Result<String> {
        let mut node = self.topic(topic_id).ok_or_else(|| Error::UnknownTopic(topic_id.to_owned()))?;
        let description = &node.description;
        let mut titles = vec![node.title.as_str()];
        while let Some(parent) = node.parent_id.as_deref() {
            // acyclic and resolvable by construction
            node = &self.topics[self.topic_index[parent]];
            titles.push(node.title.as_str());
        }
        titles.reverse();
        let mut text = titles.join(" > ");
        if !description.is_empty() {
            text.push(' ');
            text.push_str(description);
        }
        Ok(text)
    }
}

fn check_acyclic(topics: &[Topic], index: &HashMap<String, usize>) -> Result<()> {
    // 0 = unvisited, 1 = on current path, 2 = known to reach a root
    let mut state = vec![0u8; topics.len()];
    let mut path = Vec::new();
    for start in 0..topics.len() {
        let mut cur = start;
        path.clear();
        loop {
            match state[cur] {
                2 => break,
                1 => return Err(Error::Cycle(topics[cur].id.clone())),
                _ => {}
            }
            state[cur] = 1;
            path.push(cur);
            match topics[cur].parent_id.as_deref().and_then(|p| index.get(p)) {
                Some(&p) => cur = p,
                None => break,
            }
        }
        for &i in &path {
            state[i] = 2;
        }
    }
    Ok(())
}
