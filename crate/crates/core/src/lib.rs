//! SS3: an incremental text classifier for early risk detection over
//! document streams.
//!
//! A model is a set of per-category term-frequency dictionaries; training a
//! document only increments counts. Classification values each word with a
//! smoothed, significance-weighted, sanction-penalized confidence per
//! category, reduces word vectors up a block hierarchy (sentence, paragraph,
//! document) with summary operators, and accumulates document vectors per
//! subject. Early policies watch the accumulator (threshold crossing) and
//! its deltas (slope ratio) to flag positive subjects as soon as the
//! evidence suffices; the evaluation module scores decisions with the
//! latency-weighted early risk detection error alongside F1, precision and
//! recall. Because each item is processed exactly once, streaming a subject
//! costs O(n) in the number of writings.

// `!(x > 0.0)` and friends are deliberate: unlike the non-negated form they
// also reject NaN flag values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod model;
pub mod stream;
pub mod text;
pub mod tune;
pub mod valuation;
pub mod vector;

pub use classify::{
    classify, classify_at_level, classify_document, incremental_append, parse_blocks, BlockNode,
    Classification, IncrementalReducer, LevelConfig, Operator, SelectionPolicy, SplitRule, Tier,
};
pub use dataset::{load_jsonl, load_streams, load_subject_dir, LabeledStream};
pub use error::{ErrorKind, Result, Ss3Error};
pub use eval::{
    chunk_split, erde, evaluate, latency_cost, ErdeConfig, EvalMode, EvalOptions, MetricsReport,
    Outcome, SubjectDecision,
};
pub use explain::{build_explanation, render_html, render_html_string, ExplanationTree};
pub use model::{CategoryProfile, Hyperparams, Model, Valuation, MODEL_FORMAT_VERSION};
pub use stream::{
    run_subject, Decision, EarlyPolicy, FiredRule, PolicyKind, PolicyTemplate, SubjectRun,
    SubjectState,
};
pub use text::TokenizerConfig;
pub use tune::{
    grid_search, kfold_split, search_sigma, search_sigma_objective, BestConfig, CvContext,
    Objective, SearchSpec, SigmaRefinement,
};
pub use valuation::{compose_global_value, TermBreakdown, MAD_EPSILON};
pub use vector::ConfidenceVector;
