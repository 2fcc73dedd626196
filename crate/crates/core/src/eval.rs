//! Time-aware and standard evaluation: the early risk detection error with
//! its logistic latency cost, plus F1/precision/recall on the positive
//! class, over the per-post and chunked protocols.

use crate::classify::{classify_document, LevelConfig};
use crate::dataset::LabeledStream;
use crate::error::{Result, Ss3Error};
use crate::model::Model;
use crate::stream::{Decision, EarlyPolicy, SubjectRun, SubjectState, TrajectoryRow};
use crate::vector::ConfidenceVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::ops::Range;
use std::time::Instant;

/// Binary outcome, for both decisions and ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Positive,
    Negative,
}

/// Deadline and cost constants of the error measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErdeConfig {
    /// Deadline: a correct positive at `k = o` already costs half.
    pub o: u32,
    pub c_fp: f64,
    pub c_fn: f64,
    pub c_tp: f64,
}

impl ErdeConfig {
    pub fn new(o: u32, c_fp: f64, c_fn: f64, c_tp: f64) -> Result<Self> {
        let cfg = Self { o, c_fp, c_fn, c_tp };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The shared-task constants: c_fp = 52/401, c_fn = c_tp = 1.
    pub fn erisk(o: u32) -> Self {
        Self {
            o,
            c_fp: 0.129,
            c_fn: 1.0,
            c_tp: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.o < 1 {
            return Err(Ss3Error::InvalidEvalConfig("o must be >= 1".to_string()));
        }
        for (name, v) in [("c_fp", self.c_fp), ("c_fn", self.c_fn), ("c_tp", self.c_tp)] {
            if !(v >= 0.0) {
                return Err(Ss3Error::InvalidEvalConfig(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Logistic latency cost `1 - 1 / (1 + e^(k - o))`: about 0 well before the
/// deadline, exactly 0.5 at it, and approaching 1 after it.
pub fn latency_cost(k: u64, o: u32) -> f64 {
    1.0 - 1.0 / (1.0 + (k as f64 - o as f64).exp())
}

/// Early risk detection error of a single decision.
pub fn erde(decision: Outcome, truth: Outcome, k: u64, cfg: &ErdeConfig) -> f64 {
    match (decision, truth) {
        (Outcome::Positive, Outcome::Negative) => cfg.c_fp,
        (Outcome::Negative, Outcome::Positive) => cfg.c_fn,
        (Outcome::Positive, Outcome::Positive) => latency_cost(k, cfg.o) * cfg.c_tp,
        (Outcome::Negative, Outcome::Negative) => 0.0,
    }
}

/// Contiguous, order-preserving partition into `m` chunks whose sizes differ
/// by at most one, larger chunks first. With fewer items than chunks the
/// trailing chunks are empty.
pub fn chunk_split(n_items: usize, m: usize) -> Vec<Range<usize>> {
    assert!(m >= 1, "chunk count must be >= 1");
    let base = n_items / m;
    let remainder = n_items % m;
    let mut chunks = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let size = base + usize::from(i < remainder);
        chunks.push(start..start + size);
        start += size;
    }
    chunks
}

/// Streaming protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// One writing at a time.
    PerPost,
    /// The history split into `chunks` equal parts, one chunk at a time.
    /// `k` still counts writings, not chunks.
    Chunked { chunks: usize },
}

/// Everything `evaluate` needs besides model, policy and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub deadlines: Vec<u32>,
    pub c_fp: f64,
    pub c_fn: f64,
    pub c_tp: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::PerPost,
            deadlines: vec![5, 10, 30, 50, 75, 100],
            c_fp: 0.129,
            c_fn: 1.0,
            c_tp: 1.0,
        }
    }
}

impl EvalOptions {
    fn erde_config(&self, o: u32) -> Result<ErdeConfig> {
        ErdeConfig::new(o, self.c_fp, self.c_fn, self.c_tp)
    }
}

/// Per-subject line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDecision {
    pub subject_id: String,
    pub truth: Outcome,
    pub decision: Outcome,
    pub k: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

/// Mean error per deadline, expressed as a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErdeMean {
    pub o: u32,
    pub mean_pct: f64,
}

/// The computed metrics. Precision and recall with a zero denominator are
/// reported as 0 with the corresponding `*_defined` flag cleared, keeping
/// CSV output stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub erde: Vec<ErdeMean>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub confusion: Confusion,
    pub decisions: Vec<SubjectDecision>,
    pub wall_secs: f64,
}

/// Runs one subject under the given protocol and returns its run plus the
/// decision as an outcome.
pub fn run_stream(
    model: &Model,
    subject: &LabeledStream,
    policy: &EarlyPolicy,
    cfg: &LevelConfig,
    mode: EvalMode,
) -> Result<SubjectRun> {
    match mode {
        EvalMode::PerPost => {
            crate::stream::run_subject(model, &subject.subject_id, &subject.items, policy, cfg)
        }
        EvalMode::Chunked { chunks } => {
            if chunks < 1 {
                return Err(Ss3Error::InvalidEvalConfig(
                    "chunk count must be >= 1".to_string(),
                ));
            }
            model.ensure_classifiable()?;
            let dim = model.num_categories();
            if policy.positive >= dim || policy.negative >= dim {
                return Err(Ss3Error::InvalidPolicy(format!(
                    "policy indexes ({}, {}) out of range for {dim} categories",
                    policy.positive, policy.negative
                )));
            }
            let mut state = SubjectState::new(subject.subject_id.clone(), dim);
            let mut trajectory = Vec::new();
            for range in chunk_split(subject.items.len(), chunks) {
                let writings = range.len() as u64;
                let mut delta = ConfidenceVector::zeros(dim);
                for item in &subject.items[range] {
                    let (cv, _) = classify_document(model, item, cfg);
                    delta.add_assign(&cv);
                }
                let result = state.feed_delta(delta, writings, policy);
                trajectory.push(TrajectoryRow {
                    item_index: state.items_seen(),
                    acc_neg: state.acc()[policy.negative],
                    acc_pos: state.acc()[policy.positive],
                    delta_neg: state.last_delta()[policy.negative],
                    delta_pos: state.last_delta()[policy.positive],
                    fired_policy: result.fired,
                });
            }
            let decision = state.finalize();
            Ok(SubjectRun {
                subject_id: subject.subject_id.clone(),
                decision,
                acc: state.acc().clone(),
                trajectory,
            })
        }
    }
}

fn truth_of(subject: &LabeledStream, positive_name: &str, negative_name: &str) -> Result<Outcome> {
    match subject.label.as_deref() {
        Some(label) if label == positive_name => Ok(Outcome::Positive),
        Some(label) if label == negative_name => Ok(Outcome::Negative),
        Some(label) => Err(Ss3Error::Dataset(format!(
            "subject `{}` has label `{label}`, expected `{positive_name}` or `{negative_name}`",
            subject.subject_id
        ))),
        None => Err(Ss3Error::Dataset(format!(
            "subject `{}` has no label; evaluation needs labeled streams",
            subject.subject_id
        ))),
    }
}

/// Streams every subject, scores every decision, and aggregates. Subjects
/// are processed independently (in parallel when a rayon pool is active);
/// the aggregation folds results in dataset order, so the report does not
/// depend on the thread count.
pub fn evaluate(
    model: &Model,
    policy: &EarlyPolicy,
    dataset: &[LabeledStream],
    opts: &EvalOptions,
    cfg: &LevelConfig,
) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Ss3Error::Dataset("empty dataset".to_string()));
    }
    if opts.deadlines.is_empty() {
        return Err(Ss3Error::InvalidEvalConfig(
            "at least one deadline o is required".to_string(),
        ));
    }
    model.ensure_classifiable()?;
    let positive_name = model.category(policy.positive).name.clone();
    let negative_name = model.category(policy.negative).name.clone();
    let erde_configs: Vec<ErdeConfig> = opts
        .deadlines
        .iter()
        .map(|&o| opts.erde_config(o))
        .collect::<Result<_>>()?;

    let start = Instant::now();
    let runs: Vec<Result<(Outcome, SubjectRun)>> = dataset
        .par_iter()
        .map(|subject| {
            let truth = truth_of(subject, &positive_name, &negative_name)?;
            let run = run_stream(model, subject, policy, cfg, opts.mode)?;
            Ok((truth, run))
        })
        .collect();

    let mut decisions = Vec::with_capacity(dataset.len());
    let mut erde_totals = vec![0.0f64; erde_configs.len()];
    let mut confusion = Confusion {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for run in runs {
        let (truth, run) = run?;
        let (decision, k) = match run.decision {
            Decision::Positive { k } => (Outcome::Positive, k),
            Decision::Negative { k } => (Outcome::Negative, k),
            Decision::Pending => unreachable!("streams are finalized"),
        };
        match (decision, truth) {
            (Outcome::Positive, Outcome::Positive) => confusion.true_pos += 1,
            (Outcome::Positive, Outcome::Negative) => confusion.false_pos += 1,
            (Outcome::Negative, Outcome::Negative) => confusion.true_neg += 1,
            (Outcome::Negative, Outcome::Positive) => confusion.false_neg += 1,
        }
        for (total, cfg) in erde_totals.iter_mut().zip(&erde_configs) {
            *total += erde(decision, truth, k, cfg);
        }
        decisions.push(SubjectDecision {
            subject_id: run.subject_id,
            truth,
            decision,
            k,
        });
    }

    let n = dataset.len() as f64;
    let erde_means = erde_configs
        .iter()
        .zip(&erde_totals)
        .map(|(cfg, total)| ErdeMean {
            o: cfg.o,
            mean_pct: total / n * 100.0,
        })
        .collect();

    let predicted_pos = confusion.true_pos + confusion.false_pos;
    let actual_pos = confusion.true_pos + confusion.false_neg;
    let precision_defined = predicted_pos > 0;
    let recall_defined = actual_pos > 0;
    let precision = if precision_defined {
        confusion.true_pos as f64 / predicted_pos as f64
    } else {
        0.0
    };
    let recall = if recall_defined {
        confusion.true_pos as f64 / actual_pos as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    Ok(MetricsReport {
        erde: erde_means,
        f1,
        precision,
        recall,
        precision_defined,
        recall_defined,
        confusion,
        decisions,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// One row per (metric, o): the ERDE means followed by the timeless metrics.
pub fn write_report_csv<W: Write>(writer: W, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "o", "value"])?;
    for mean in &report.erde {
        w.write_record(["erde", &mean.o.to_string(), &mean.mean_pct.to_string()])?;
    }
    w.write_record(["f1", "", &report.f1.to_string()])?;
    w.write_record(["precision", "", &report.precision.to_string()])?;
    w.write_record(["recall", "", &report.recall.to_string()])?;
    w.flush()?;
    Ok(())
}
