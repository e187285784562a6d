//! Align curriculum content items to topics of a hierarchical taxonomy.
//!
//! The pipeline is: load (or synthesize) a [`Corpus`], split its topics into
//! overlap-minimizing folds, train a tied-weight hashed-feature bi-encoder
//! with a symmetric InfoNCE objective over constrained batches (with
//! periodic language switching), then score held-out topics with mean F2.

pub mod batching;
pub mod contrastive;
pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod folds;
pub mod langswitch;
pub mod trainer;

pub use batching::{constrained_shuffle, verify_batches, Batch, HardNegativePool, Pair};
pub use contrastive::{infonce_gradients, infonce_rowwise, infonce_symmetric, LossReport, SimilarityMatrix};
pub use corpus::{load_corpus, load_corpus_dir, write_corpus, ContentItem, ContentKind, Corpus, CorrelationSet, Topic};
pub use encoder::{EncoderConfig, EncoderParams, Embedding, EmbeddingMatrix, SparseFeatures};
pub use error::{Error, Result};
pub use eval::{MetricsReport, PredictionSet};
pub use folds::{FoldAssignment, OverlapReport};
pub use langswitch::{PseudoTranslator, SwitchConfig, TranslationMemory, TranslationProvider};
pub use trainer::{TrainConfig, TrainHistory};
