//! Project-level workflow: export conversion, training commands, chained
//! prediction, self-training and the command-line front end.

pub mod cli;
pub mod commands;
pub mod convert;
pub mod predict;
pub mod project;
pub mod selftrain;

pub use predict::{
    display_text, evaluate_models, evaluate_records, extraction_records, format_score, predict_document,
    render_table, DocumentPrediction, Evaluation, ExtractionRecord, Models, PredictionRecord, SpanText,
    TABLE_HEADER,
};
pub use project::{Project, ReviewCandidate, ReviewDecision, Verdict};
pub use selftrain::{self_train, AuditEntry, SelfTrainConfig, SelfTrainOutcome};
