mod common;

use std::fs;
use std::path::Path;

use curricula::corpus::{generate_synthetic_corpus, SyntheticConfig, CONTENT_FILE, CORRELATIONS_FILE, TOPICS_FILE};
use curricula::encoder::{embed_corpus, init_params, EncoderConfig};
use curricula::{load_corpus, load_corpus_dir, write_corpus, Corpus, CorrelationSet, Error, Topic};
use proptest::prelude::*;
use rand::seq::SliceRandom;

const TOPICS: &str = "id,title,description,language,parent_id,channel_id,has_content
t1,Math,,en,,ch1,false
t2,Algebra,linear things,en,t1,ch1,true
";
const CONTENT: &str = "id,title,description,kind,language,text_snippet
c1,Intro video,basics,video,en,
c2,Worksheet,\"practice, drills\",exercise,en,solve for x
c3,Notes,,document,en,
";
const CORRELATIONS: &str = "topic_id,content_ids
t1,c1
t2,c2 c3
";

fn write_files(dir: &Path, topics: &str, content: &str, correlations: &str) {
    fs::write(dir.join(TOPICS_FILE), topics).unwrap();
    fs::write(dir.join(CONTENT_FILE), content).unwrap();
    fs::write(dir.join(CORRELATIONS_FILE), correlations).unwrap();
}

fn load_strs(topics: &str, content: &str, correlations: &str) -> curricula::Result<Corpus> {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path(), topics, content, correlations);
    load_corpus_dir(dir.path())
}

#[test]
fn loads_well_formed_files() {
    let c = load_strs(TOPICS, CONTENT, CORRELATIONS).unwrap();
    assert_eq!(c.topics().len(), 2);
    assert_eq!(c.contents().len(), 3);
    assert_eq!(c.correlations().len(), 2);
    assert_eq!(c.content("c2").unwrap().description, "practice, drills");
    assert_eq!(c.topic_breadcrumb_text("t2").unwrap(), "Math > Algebra linear things");
}

#[test]
fn dangling_content_cites_row() {
    let bad = "topic_id,content_ids\nt1,c1\nt2,c2 cX\n";
    match load_strs(TOPICS, CONTENT, bad) {
        Err(Error::DanglingReference { file, row, message }) => {
            assert_eq!(file, CORRELATIONS_FILE);
            assert_eq!(row, 3);
            assert!(message.contains("cX"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn two_cycle_rejected() {
    let cyclic = "id,title,description,language,parent_id,channel_id,has_content
t1,A,,en,t2,ch1,true
t2,B,,en,t1,ch1,true
";
    let corr = "topic_id,content_ids\nt1,c1\n";
    assert!(matches!(load_strs(cyclic, CONTENT, corr), Err(Error::Cycle(_))));
}

#[test]
fn missing_file_names_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(TOPICS_FILE), TOPICS).unwrap();
    fs::write(dir.path().join(CORRELATIONS_FILE), CORRELATIONS).unwrap();
    let err = load_corpus_dir(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains(CONTENT_FILE), "{err}");
}

#[test]
fn duplicate_and_language_errors() {
    let dup = format!("{CONTENT}c1,Again,,video,en,\n");
    match load_strs(TOPICS, &dup, CORRELATIONS) {
        Err(Error::DuplicateId { id, .. }) => assert_eq!(id, "c1"),
        other => panic!("unexpected {other:?}"),
    }
    let bad_lang = TOPICS.replace("t2,Algebra,linear things,en", "t2,Algebra,linear things,ENG");
    assert!(matches!(load_strs(&bad_lang, CONTENT, CORRELATIONS), Err(Error::Language(l)) if l == "ENG"));
    let bad_header = CORRELATIONS.replace("content_ids", "contents");
    assert!(matches!(load_strs(TOPICS, CONTENT, &bad_header), Err(Error::Ingest { .. })));
}

#[test]
fn unknown_topic_breadcrumb() {
    let c = load_strs(TOPICS, CONTENT, CORRELATIONS).unwrap();
    assert!(matches!(c.topic_breadcrumb_text("nope"), Err(Error::UnknownTopic(_))));
}

#[test]
fn synthetic_example_counts() {
    let c = generate_synthetic_corpus(&SyntheticConfig::default()).unwrap();
    assert_eq!((c.topics().len(), c.contents().len(), c.correlations().len()), (200, 600, 200));
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&c, &dir.path().join("a")).unwrap();
    write_corpus(&generate_synthetic_corpus(&SyntheticConfig::default()).unwrap(), &dir.path().join("b")).unwrap();
    for f in [TOPICS_FILE, CONTENT_FILE, CORRELATIONS_FILE] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
}

/// Rewrites a CSV file with its data rows in a random order.
fn shuffle_rows(path: &Path, seed: u64) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().clone();
    let mut rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    rows.shuffle(&mut common::rng(seed));
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(&header).unwrap();
    for r in rows {
        w.write_record(&r).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn permuted_files_embed_identically() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig { n_topics: 30, ..SyntheticConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&corpus, dir.path()).unwrap();
    let cfg = EncoderConfig { hash_dim: 4096, embed_dim: 16, seed: 3, ..EncoderConfig::default() };
    let params = init_params(&cfg);
    let before = embed_corpus(&params, &load_corpus_dir(dir.path()).unwrap(), &cfg).unwrap();
    for (i, f) in [TOPICS_FILE, CONTENT_FILE, CORRELATIONS_FILE].iter().enumerate() {
        shuffle_rows(&dir.path().join(f), i as u64 + 1);
    }
    let after = embed_corpus(&params, &load_corpus_dir(dir.path()).unwrap(), &cfg).unwrap();
    assert_eq!(before, after);
    assert_eq!(before.0.values.dim(), (30, 16));
    assert_eq!(before.1.values.dim(), (90, 16));
}

fn chain(depth: usize, title: &str) -> Corpus {
    let topics: Vec<Topic> = (0..depth)
        .map(|i| Topic {
            id: format!("t{i}"),
            title: title.to_owned(),
            description: "desc".into(),
            language: "en".into(),
            parent_id: i.checked_sub(1).map(|p| format!("t{p}")),
            channel_id: "ch".into(),
            has_content: true,
        })
        .collect();
    Corpus::new(topics, Vec::new(), CorrelationSet::new()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn write_then_load_is_identity(
        n_topics in 1usize..40,
        per in 1usize..4,
        vocab in 2usize..30,
        seed in any::<u64>(),
        n_langs in 1usize..5,
    ) {
        let languages = ["en", "es", "pt", "fr"][..n_langs].iter().map(|s| s.to_string()).collect();
        let cfg = SyntheticConfig { n_topics, contents_per_topic: per, languages, vocab_per_cluster: vocab, seed };
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let back = load_corpus(
            &dir.path().join(TOPICS_FILE),
            &dir.path().join(CONTENT_FILE),
            &dir.path().join(CORRELATIONS_FILE),
        ).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn generator_output_satisfies_invariants(n_topics in 1usize..80, per in 1usize..5, seed in any::<u64>()) {
        let cfg = SyntheticConfig { n_topics, contents_per_topic: per, seed, ..SyntheticConfig::default() };
        let c = generate_synthetic_corpus(&cfg).unwrap();
        // rebuilding through the validating constructor must succeed
        let rebuilt = Corpus::new(c.topics().to_vec(), c.contents().to_vec(), c.correlations().clone()).unwrap();
        prop_assert_eq!(&rebuilt, &c);
        prop_assert_eq!(c.correlations().pair_count(), n_topics * per);
        for t in c.topics() {
            prop_assert!(c.topic_breadcrumb_text(&t.id).is_ok());
        }
    }

    #[test]
    fn breadcrumb_grows_with_depth(depth in 1usize..12, title in "[a-z]{0,6}") {
        let c = chain(depth, &title);
        let lens: Vec<usize> = (0..depth).map(|i| c.topic_breadcrumb_text(&format!("t{i}")).unwrap().len()).collect();
        prop_assert!(lens.windows(2).all(|w| w[0] <= w[1]), "{:?}", lens);
    }
}
