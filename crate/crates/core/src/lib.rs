//! Answer consolidation toolkit.
//!
//! Groups the answer-mentioning sentences retrieved for a question into
//! aspect-level groups. The crate covers the whole batch pipeline:
//!
//! * [`model`] and [`io`]: corpus records and their JSONL formats,
//! * [`aggregation`] and [`agreement`]: building gold partitions from crowd
//!   annotations and measuring annotator agreement,
//! * [`split`] and [`stats`]: the train/validation/test split and corpus
//!   statistics,
//! * [`scoring`]: pairwise same-group scores and the pair threshold,
//! * [`clustering`]: average-linkage agglomerative grouping,
//! * [`metrics`]: pair F1/MCC and ARI/AMI evaluation.

pub mod aggregation;
pub mod agreement;
pub mod clustering;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scoring;
pub mod split;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    canonical_pair, Assignment, GoldSet, PairLabel, Partition, QuestionAnnotations,
    QuestionRecord, SentenceRecord, WorkerAnnotation,
};

/// Rounds to six decimal digits, the precision used in written reports.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
