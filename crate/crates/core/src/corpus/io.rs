//! CSV ingestion and export of the three corpus files.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use super::{is_language_code, ContentItem, Corpus, CorrelationSet, Topic};
use crate::error::{Error, Result};

pub const TOPICS_FILE: &str = "topics.csv";
pub const CONTENT_FILE: &str = "content.csv";
pub const CORRELATIONS_FILE: &str = "correlations.csv";

const TOPIC_HEADER: [&str; 7] = ["id", "title", "description", "language", "parent_id", "channel_id", "has_content"];
const CONTENT_HEADER: [&str; 6] = ["id", "title", "description", "kind", "language", "text_snippet"];
const CORRELATION_HEADER: [&str; 2] = ["topic_id", "content_ids"];

fn open_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = reader.headers().map_err(|e| Error::ingest(path, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::ingest(
            path,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(reader)
}

fn file_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Loads a corpus from the three CSV files, validating every invariant.
///
/// Errors name the offending file and, for row-level problems, the line
/// number within it.
pub fn load_corpus(topics_path: &Path, content_path: &Path, correlations_path: &Path) -> Result<Corpus> {
    let topics = read_topics(topics_path)?;
    let contents = read_contents(content_path)?;

    let mut reader = open_reader(correlations_path, &CORRELATION_HEADER)?;
    let topic_ids: HashSet<&str> = topics.iter().map(|t| t.id.as_str()).collect();
    let content_ids: HashSet<&str> = contents.iter().map(|c| c.id.as_str()).collect();
    let label = file_label(correlations_path);
    let mut correlations = CorrelationSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ingest(correlations_path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        let topic_id = &record[0];
        if !topic_ids.contains(topic_id) {
            return Err(Error::DanglingReference { file: label, row, message: format!("unknown topic `{topic_id}`") });
        }
        if correlations.get(topic_id).is_some() {
            return Err(Error::DuplicateId { kind: "correlation topic", id: topic_id.to_owned() });
        }
        let mut any = false;
        for content_id in record[1].split_whitespace() {
            if !content_ids.contains(content_id) {
                return Err(Error::DanglingReference {
                    file: label,
                    row,
                    message: format!("unknown content `{content_id}`"),
                });
            }
            correlations.insert(topic_id, content_id);
            any = true;
        }
        if !any {
            return Err(Error::DanglingReference { file: label, row, message: "empty content_ids".into() });
        }
    }

    Corpus::new(topics, contents, correlations)
}

/// [`load_corpus`] over `topics.csv`, `content.csv` and `correlations.csv` in `dir`.
pub fn load_corpus_dir(dir: &Path) -> Result<Corpus> {
    load_corpus(&dir.join(TOPICS_FILE), &dir.join(CONTENT_FILE), &dir.join(CORRELATIONS_FILE))
}

fn read_topics(path: &Path) -> Result<Vec<Topic>> {
    let mut reader = open_reader(path, &TOPIC_HEADER)?;
    let label = file_label(path);
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ingest(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        let language = record[3].to_owned();
        if !is_language_code(&language) {
            return Err(Error::Language(language));
        }
        let has_content = parse_bool(&record[6])
            .ok_or_else(|| Error::ingest(path, format!("row {row}: bad has_content `{}`", &record[6])))?;
        let topic = Topic {
            id: record[0].to_owned(),
            title: record[1].to_owned(),
            description: record[2].to_owned(),
            language,
            parent_id: Some(record[4].to_owned()).filter(|p| !p.is_empty()),
            channel_id: record[5].to_owned(),
            has_content,
        };
        if seen.insert(topic.id.clone(), row).is_some() {
            return Err(Error::DuplicateId { kind: "topic", id: topic.id });
        }
        rows.push((row, topic));
    }
    let channel: HashMap<&str, &str> = rows.iter().map(|(_, t)| (t.id.as_str(), t.channel_id.as_str())).collect();
    for (row, t) in &rows {
        if let Some(p) = &t.parent_id {
            match channel.get(p.as_str()) {
                None => {
                    return Err(Error::DanglingReference {
                        file: label,
                        row: *row,
                        message: format!("unknown parent `{p}`"),
                    })
                }
                Some(ch) if *ch != t.channel_id => {
                    return Err(Error::DanglingReference {
                        file: label,
                        row: *row,
                        message: format!("parent `{p}` is in channel `{ch}`"),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(rows.into_iter().map(|(_, t)| t).collect())
}

fn read_contents(path: &Path) -> Result<Vec<ContentItem>> {
    let mut reader = open_reader(path, &CONTENT_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ingest(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        let language = record[4].to_owned();
        if !is_language_code(&language) {
            return Err(Error::Language(language));
        }
        let kind = record[3].parse().map_err(|e: String| Error::ingest(path, format!("row {row}: {e}")))?;
        let item = ContentItem {
            id: record[0].to_owned(),
            title: record[1].to_owned(),
            description: record[2].to_owned(),
            kind,
            language,
            text_snippet: record[5].to_owned(),
        };
        if !seen.insert(item.id.clone()) {
            return Err(Error::DuplicateId { kind: "content", id: item.id });
        }
        out.push(item);
    }
    Ok(out)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::ingest(path, e.to_string())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `topics.csv`, `content.csv` and `correlations.csv` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(TOPICS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(TOPIC_HEADER).map_err(csv_err(&path))?;
    for t in corpus.topics() {
        w.write_record([
            t.id.as_str(),
            &t.title,
            &t.description,
            &t.language,
            t.parent_id.as_deref().unwrap_or(""),
            &t.channel_id,
            if t.has_content { "true" } else { "false" },
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(CONTENT_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(CONTENT_HEADER).map_err(csv_err(&path))?;
    for c in corpus.contents() {
        w.write_record([c.id.as_str(), &c.title, &c.description, c.kind.as_str(), &c.language, &c.text_snippet])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(CORRELATIONS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(CORRELATION_HEADER).map_err(csv_err(&path))?;
    for (t, cs) in corpus.correlations().iter() {
        let joined = cs.iter().map(String::as_str).collect::<Vec<_>>().join(" ");
        w.write_record([t, joined.as_str()]).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
