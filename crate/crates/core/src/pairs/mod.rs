//! Genuine/impostor pair statistics stratified by facial-hair group.

mod audit;
mod counts;
mod similarity;
mod stats;

pub use audit::{
    audit, AuditOptions, AuditReport, CohortReport, GroupReport, ImpostorSampling, TrainingTag,
    DEFAULT_TILE,
};
pub use counts::{count_pairs, PairClass, PairGroup, PairKind, SubjectTally};
pub use similarity::cosine_similarity;
pub use stats::{bin_edge, dprime, histogram_bin, merge_tree, StreamStats, HISTOGRAM_BINS};
