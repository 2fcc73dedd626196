//! Per-subject streaming: each incoming item is classified once, its vector
//! added to the subject's accumulator, and an early policy decides whether
//! the accumulated (or just-arrived) evidence is enough to call the subject
//! positive. Negative decisions are only ever made at stream end.

use crate::classify::{classify_document, LevelConfig};
use crate::error::{Result, Ss3Error};
use crate::model::Model;
use crate::vector::ConfidenceVector;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Decision status of a subject. `k` counts the writings seen when the
/// decision was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum Decision {
    Pending,
    Positive { k: u64 },
    Negative { k: u64 },
}

impl Decision {
    pub fn is_decided(&self) -> bool {
        !matches!(self, Decision::Pending)
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Decision::Positive { .. })
    }

    pub fn k(&self) -> Option<u64> {
        match self {
            Decision::Pending => None,
            Decision::Positive { k } | Decision::Negative { k } => Some(*k),
        }
    }
}

/// Which rule fired a positive decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiredRule {
    Threshold,
    SlopeRatio,
}

impl std::fmt::Display for FiredRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FiredRule::Threshold => f.write_str("threshold"),
            FiredRule::SlopeRatio => f.write_str("slope_ratio"),
        }
    }
}

/// The positive-decision rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Fire when the accumulated positive value strictly exceeds the
    /// accumulated negative one.
    Threshold,
    /// Fire when the positive component of the latest item grew at least
    /// `ratio_min` times faster than the negative one, provided it grew by
    /// more than `min_change`. A non-positive negative change counts as an
    /// infinite ratio.
    SlopeRatio { ratio_min: f64, min_change: f64 },
    /// Fires when any member fires.
    Composite(Vec<PolicyKind>),
}

impl PolicyKind {
    fn validate(&self) -> Result<()> {
        match self {
            PolicyKind::Threshold => Ok(()),
            PolicyKind::SlopeRatio {
                ratio_min,
                min_change,
            } => {
                if !(*ratio_min > 0.0) {
                    return Err(Ss3Error::InvalidPolicy(format!(
                        "ratio_min must be > 0, got {ratio_min}"
                    )));
                }
                if !(*min_change >= 0.0) {
                    return Err(Ss3Error::InvalidPolicy(format!(
                        "min_change must be >= 0, got {min_change}"
                    )));
                }
                Ok(())
            }
            PolicyKind::Composite(members) => {
                if members.is_empty() {
                    return Err(Ss3Error::InvalidPolicy(
                        "composite policy needs at least one member".to_string(),
                    ));
                }
                members.iter().try_for_each(PolicyKind::validate)
            }
        }
    }

    fn fires(&self, acc: &ConfidenceVector, delta: &ConfidenceVector, pos: usize, neg: usize) -> Option<FiredRule> {
        match self {
            PolicyKind::Threshold => (acc[pos] > acc[neg]).then_some(FiredRule::Threshold),
            PolicyKind::SlopeRatio {
                ratio_min,
                min_change,
            } => {
                let dp = delta[pos];
                let dn = delta[neg];
                if dp <= *min_change {
                    return None;
                }
                let fired = dn <= 0.0 || dp / dn > *ratio_min;
                fired.then_some(FiredRule::SlopeRatio)
            }
            PolicyKind::Composite(members) => {
                members.iter().find_map(|m| m.fires(acc, delta, pos, neg))
            }
        }
    }
}

/// An early policy bound to the model's positive and negative vector
/// positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyPolicy {
    pub kind: PolicyKind,
    pub positive: usize,
    pub negative: usize,
}

impl EarlyPolicy {
    pub fn new(kind: PolicyKind, positive: usize, negative: usize) -> Result<Self> {
        if positive == negative {
            return Err(Ss3Error::InvalidPolicy(
                "positive and negative categories must differ".to_string(),
            ));
        }
        kind.validate()?;
        Ok(Self {
            kind,
            positive,
            negative,
        })
    }

    pub fn threshold(positive: usize, negative: usize) -> Result<Self> {
        Self::new(PolicyKind::Threshold, positive, negative)
    }

    /// Threshold plus slope ratio, firing on either.
    pub fn delta(positive: usize, negative: usize, ratio_min: f64, min_change: f64) -> Result<Self> {
        Self::new(
            PolicyKind::Composite(vec![
                PolicyKind::Threshold,
                PolicyKind::SlopeRatio {
                    ratio_min,
                    min_change,
                },
            ]),
            positive,
            negative,
        )
    }

    pub fn fires(&self, acc: &ConfidenceVector, delta: &ConfidenceVector) -> Option<FiredRule> {
        self.kind.fires(acc, delta, self.positive, self.negative)
    }
}

/// Policy expressed with category names, resolved against a trained model's
/// category order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTemplate {
    pub kind: PolicyKind,
    pub positive_name: String,
    pub negative_name: String,
}

impl PolicyTemplate {
    pub fn resolve(&self, model: &Model) -> Result<EarlyPolicy> {
        let positive = model
            .category_index(&self.positive_name)
            .ok_or_else(|| Ss3Error::UnknownCategory(self.positive_name.clone()))?;
        let negative = model
            .category_index(&self.negative_name)
            .ok_or_else(|| Ss3Error::UnknownCategory(self.negative_name.clone()))?;
        EarlyPolicy::new(self.kind.clone(), positive, negative)
    }
}

/// Outcome of feeding one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedResult {
    pub decision: Decision,
    pub fired: Option<FiredRule>,
}

/// Accumulated state of one subject's stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectState {
    pub subject_id: String,
    acc: ConfidenceVector,
    last_delta: ConfidenceVector,
    items_seen: u64,
    history: Option<Vec<ConfidenceVector>>,
    status: Decision,
}

impl SubjectState {
    pub fn new(subject_id: impl Into<String>, dim: usize) -> Self {
        Self {
            subject_id: subject_id.into(),
            acc: ConfidenceVector::zeros(dim),
            last_delta: ConfidenceVector::zeros(dim),
            items_seen: 0,
            history: None,
            status: Decision::Pending,
        }
    }

    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn acc(&self) -> &ConfidenceVector {
        &self.acc
    }

    pub fn last_delta(&self) -> &ConfidenceVector {
        &self.last_delta
    }

    pub fn items_seen(&self) -> u64 {
        self.items_seen
    }

    pub fn status(&self) -> Decision {
        self.status
    }

    pub fn history(&self) -> Option<&[ConfidenceVector]> {
        self.history.as_deref()
    }

    /// Classifies one item and folds it in. `k` advances by one writing.
    pub fn feed(
        &mut self,
        model: &Model,
        item_text: &str,
        policy: &EarlyPolicy,
        cfg: &LevelConfig,
    ) -> FeedResult {
        let (delta, _) = classify_document(model, item_text, cfg);
        self.feed_delta(delta, 1, policy)
    }

    /// Folds an already-classified delta in. `writings` is how many writings
    /// the delta stands for (1 per post, or a chunk's size); `k` advances by
    /// that amount. Once a subject is decided the accumulator keeps updating
    /// for bookkeeping but the decision never changes.
    pub fn feed_delta(&mut self, delta: ConfidenceVector, writings: u64, policy: &EarlyPolicy) -> FeedResult {
        self.items_seen += writings;
        self.acc.add_assign(&delta);
        if let Some(history) = &mut self.history {
            history.push(delta.clone());
        }
        let mut fired = None;
        if !self.status.is_decided() {
            fired = policy.fires(&self.acc, &delta);
            if fired.is_some() {
                self.status = Decision::Positive { k: self.items_seen };
            }
        }
        self.last_delta = delta;
        FeedResult {
            decision: self.status,
            fired,
        }
    }

    /// Stream exhausted: a still-pending subject becomes negative at the
    /// current item count.
    pub fn finalize(&mut self) -> Decision {
        if !self.status.is_decided() {
            self.status = Decision::Negative { k: self.items_seen };
        }
        self.status
    }
}

/// One row of a subject's trajectory, in policy (negative, positive)
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub item_index: u64,
    pub acc_neg: f64,
    pub acc_pos: f64,
    pub delta_neg: f64,
    pub delta_pos: f64,
    pub fired_policy: Option<FiredRule>,
}

/// Result of running a whole stream for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRun {
    pub subject_id: String,
    pub decision: Decision,
    pub acc: ConfidenceVector,
    pub trajectory: Vec<TrajectoryRow>,
}

/// Feeds every item in order, then finalizes. An empty stream is negative
/// at k = 0.
pub fn run_subject(
    model: &Model,
    subject_id: &str,
    items: &[String],
    policy: &EarlyPolicy,
    cfg: &LevelConfig,
) -> Result<SubjectRun> {
    model.ensure_classifiable()?;
    let dim = model.num_categories();
    if policy.positive >= dim || policy.negative >= dim {
        return Err(Ss3Error::InvalidPolicy(format!(
            "policy indexes ({}, {}) out of range for {dim} categories",
            policy.positive, policy.negative
        )));
    }
    let mut state = SubjectState::new(subject_id, dim);
    let mut trajectory = Vec::with_capacity(items.len());
    for item in items {
        let (delta, _) = classify_document(model, item, cfg);
        let result = state.feed_delta(delta, 1, policy);
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
        subject_id: subject_id.to_string(),
        decision,
        acc: state.acc().clone(),
        trajectory,
    })
}

/// Writes a subject's trajectory as CSV.
pub fn write_trajectory_csv<W: Write>(writer: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["item_index", "acc_neg", "acc_pos", "delta_neg", "delta_pos", "fired_policy"])?;
    for row in rows {
        w.write_record([
            row.item_index.to_string(),
            row.acc_neg.to_string(),
            row.acc_pos.to_string(),
            row.delta_neg.to_string(),
            row.delta_pos.to_string(),
            row.fired_policy.map(|f| f.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;

    /// Two symmetric categories; "n" carries negative evidence, "p" positive.
    fn binary_model() -> Model {
        let mut m = Model::new(Hyperparams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        m.learn("n n n n", "negative").unwrap();
        m.learn("p p p p", "positive").unwrap();
        m
    }

    fn policy_threshold(m: &Model) -> EarlyPolicy {
        EarlyPolicy::threshold(
            m.category_index("positive").unwrap(),
            m.category_index("negative").unwrap(),
        )
        .unwrap()
    }

    fn items(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn threshold_fires_at_first_crossing_only() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let policy = policy_threshold(&m);
        let run = run_subject(&m, "s", &items(&["n", "n", "p p p"]), &policy, &cfg).unwrap();
        assert_eq!(run.decision, Decision::Positive { k: 3 });

        // scan oracle: first index where acc_pos > acc_neg
        let first = run
            .trajectory
            .iter()
            .position(|r| r.acc_pos > r.acc_neg)
            .map(|i| i as u64 + 1);
        assert_eq!(first, run.decision.k());
    }

    #[test]
    fn threshold_tie_stays_pending() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let policy = policy_threshold(&m);
        let mut state = SubjectState::new("s", 2);
        let (delta, _) = classify_document(&m, "n p", &cfg);
        let result = state.feed_delta(delta, 1, &policy);
        assert_eq!(result.decision, Decision::Pending);
        assert_eq!(state.finalize(), Decision::Negative { k: 1 });
    }

    #[test]
    fn slope_ratio_fires_on_fast_positive_growth() {
        let policy = EarlyPolicy::new(
            PolicyKind::SlopeRatio {
                ratio_min: 4.0,
                min_change: 0.0,
            },
            1,
            0,
        )
        .unwrap();
        let acc = ConfidenceVector::from_vec(vec![10.0, 1.0]); // pos well below neg
        let fast = ConfidenceVector::from_vec(vec![0.5, 2.5]); // ratio 5
        assert_eq!(policy.fires(&acc, &fast), Some(FiredRule::SlopeRatio));
        let slow = ConfidenceVector::from_vec(vec![0.5, 1.5]); // ratio 3
        assert_eq!(policy.fires(&acc, &slow), None);
        // zero negative change counts as infinite ratio
        let inf = ConfidenceVector::from_vec(vec![0.0, 0.3]);
        assert_eq!(policy.fires(&acc, &inf), Some(FiredRule::SlopeRatio));
        // no positive change at all stays pending
        let none = ConfidenceVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(policy.fires(&acc, &none), None);
    }

    #[test]
    fn slope_ratio_min_change_guards_small_deltas() {
        let policy = EarlyPolicy::new(
            PolicyKind::SlopeRatio {
                ratio_min: 4.0,
                min_change: 1.0,
            },
            1,
            0,
        )
        .unwrap();
        let acc = ConfidenceVector::zeros(2);
        // ratio 5 but the positive change is far below the floor
        let tiny = ConfidenceVector::from_vec(vec![0.01, 0.05]);
        assert_eq!(policy.fires(&acc, &tiny), None);
        let big = ConfidenceVector::from_vec(vec![0.3, 1.5]);
        assert_eq!(policy.fires(&acc, &big), Some(FiredRule::SlopeRatio));
    }

    #[test]
    fn composite_fires_when_any_member_fires() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let pos = m.category_index("positive").unwrap();
        let neg = m.category_index("negative").unwrap();
        let composite = EarlyPolicy::delta(pos, neg, 4.0, 0.0).unwrap();
        let threshold = policy_threshold(&m);

        // positive never exceeds negative, but one delta has infinite ratio
        let stream = items(&["n n n n", "p p p"]);
        let run_t = run_subject(&m, "s", &stream, &threshold, &cfg).unwrap();
        assert_eq!(run_t.decision, Decision::Negative { k: 2 });
        let run_c = run_subject(&m, "s", &stream, &composite, &cfg).unwrap();
        assert_eq!(run_c.decision, Decision::Positive { k: 2 });
        assert_eq!(run_c.trajectory[1].fired_policy, Some(FiredRule::SlopeRatio));
    }

    #[test]
    fn composite_decides_no_later_than_threshold_alone() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let pos = m.category_index("positive").unwrap();
        let neg = m.category_index("negative").unwrap();
        let composite = EarlyPolicy::delta(pos, neg, 4.0, 1.0).unwrap();
        let threshold = policy_threshold(&m);
        let streams = [
            items(&["n", "n", "p p p"]),
            items(&["p p", "n"]),
            items(&["n n", "n p", "p p p p"]),
            items(&["n", "n"]),
        ];
        for stream in &streams {
            let t = run_subject(&m, "s", stream, &threshold, &cfg).unwrap();
            let c = run_subject(&m, "s", stream, &composite, &cfg).unwrap();
            match (t.decision, c.decision) {
                (Decision::Positive { k: kt }, Decision::Positive { k: kc }) => assert!(kc <= kt),
                (Decision::Positive { .. }, other) => panic!("composite lost a decision: {other:?}"),
                _ => {}
            }
        }
    }

    #[test]
    fn decided_subject_keeps_accumulating_but_never_flips() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let policy = policy_threshold(&m);
        let mut state = SubjectState::new("s", 2).with_history();
        let (d1, _) = classify_document(&m, "p p", &cfg);
        state.feed_delta(d1, 1, &policy);
        assert_eq!(state.status(), Decision::Positive { k: 1 });
        let (d2, _) = classify_document(&m, "n n n n n n", &cfg);
        let result = state.feed_delta(d2, 1, &policy);
        // decision unchanged, bookkeeping advanced
        assert_eq!(result.decision, Decision::Positive { k: 1 });
        assert_eq!(state.items_seen(), 2);
        assert_eq!(state.history().unwrap().len(), 2);
        assert_eq!(state.finalize(), Decision::Positive { k: 1 });
    }

    #[test]
    fn empty_stream_is_negative_at_zero() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let policy = policy_threshold(&m);
        let run = run_subject(&m, "s", &[], &policy, &cfg).unwrap();
        assert_eq!(run.decision, Decision::Negative { k: 0 });
    }

    #[test]
    fn acc_equals_sum_of_history() {
        let m = binary_model();
        let cfg = LevelConfig::default_hierarchy();
        let policy = policy_threshold(&m);
        let mut state = SubjectState::new("s", 2).with_history();
        for text in ["p n", "n n", "p p p"] {
            let (delta, _) = classify_document(&m, text, &cfg);
            state.feed_delta(delta, 1, &policy);
        }
        let mut sum = ConfidenceVector::zeros(2);
        for cv in state.history().unwrap() {
            sum.add_assign(cv);
        }
        assert_eq!(&sum, state.acc());
    }

    #[test]
    fn policy_validation() {
        assert!(EarlyPolicy::threshold(0, 0).is_err());
        assert!(EarlyPolicy::new(
            PolicyKind::SlopeRatio {
                ratio_min: 0.0,
                min_change: 0.0
            },
            1,
            0
        )
        .is_err());
        assert!(EarlyPolicy::new(PolicyKind::Composite(vec![]), 1, 0).is_err());
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let rows = vec![TrajectoryRow {
            item_index: 1,
            acc_neg: 0.5,
            acc_pos: 1.5,
            delta_neg: 0.5,
            delta_pos: 1.5,
            fired_policy: Some(FiredRule::Threshold),
        }];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "item_index,acc_neg,acc_pos,delta_neg,delta_pos,fired_policy"
        );
        assert_eq!(lines.next().unwrap(), "1,0.5,1.5,0.5,1.5,threshold");
    }
}
