use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use curricula::batching::Pair;
use curricula::corpus::{generate_synthetic_corpus, SyntheticConfig};
use curricula::encoder::{featurize, hash_features, tokenize_truncate};
use curricula::folds::greedy_assign;
use curricula::{constrained_shuffle, infonce_gradients, EncoderConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m: Array2<f64> = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    m
}

fn gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [64, 256] {
        let t = unit_rows(n, 64, &mut rng);
        let k = unit_rows(n, 64, &mut rng);
        c.bench_function(&format!("infonce_gradients/{n}x64"), |b| {
            b.iter(|| infonce_gradients(black_box(t.view()), black_box(k.view()), 0.05).unwrap())
        });
    }
}

fn shuffle(c: &mut Criterion) {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default()).unwrap();
    let pairs: Vec<Pair> = corpus
        .correlations()
        .iter()
        .flat_map(|(t, cs)| {
            cs.iter().map(move |id| Pair {
                topic_id: t.to_owned(),
                content_id: id.clone(),
                epoch_text_topic: String::new(),
                epoch_text_content: String::new(),
                language: "en".into(),
            })
        })
        .collect();
    c.bench_function("constrained_shuffle/600_pairs_b64", |b| {
        b.iter(|| constrained_shuffle(black_box(&pairs), corpus.correlations(), 64, 3).unwrap())
    });
}

fn hashing(c: &mut Criterion) {
    let cfg = EncoderConfig::default();
    let corpus = generate_synthetic_corpus(&SyntheticConfig::default()).unwrap();
    let texts: Vec<String> = corpus.contents().iter().map(|c| c.encoder_text()).collect();
    let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize_truncate(t, cfg.max_seq_len)).collect();
    c.bench_function("hash_features/600_contents", |b| {
        b.iter(|| tokens.iter().map(|t| hash_features(black_box(t), &cfg).nnz()).sum::<usize>())
    });
    c.bench_function("featurize/600_contents", |b| {
        b.iter(|| texts.iter().map(|t| featurize(black_box(t), &cfg).nnz()).sum::<usize>())
    });
}

fn splitting(c: &mut Criterion) {
    let corpus = generate_synthetic_corpus(&SyntheticConfig { n_topics: 2000, ..SyntheticConfig::default() }).unwrap();
    c.bench_function("greedy_assign/2000_topics", |b| {
        b.iter_batched(|| corpus.correlations().clone(), |set| greedy_assign(&set, 10, None).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group!(benches, gradients, shuffle, hashing, splitting);
criterion_main!(benches);
