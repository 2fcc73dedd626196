//! Hyper-parameter search: stratified k-fold cross-validation with a grid
//! over (lambda, rho) and, nested inside each grid point, a three-level
//! local refinement of sigma (steps 0.1, 0.01, 0.001, each re-centered on
//! the previous best).

use crate::dataset::{require_labels, LabeledStream};
use crate::error::{Result, Ss3Error};
use crate::eval::{evaluate, EvalMode, EvalOptions, MetricsReport};
use crate::classify::LevelConfig;
use crate::model::{Hyperparams, Model};
use crate::stream::PolicyTemplate;
use crate::text::TokenizerConfig;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// What the search optimizes. Internally every objective is a loss to
/// minimize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Minimize the mean early risk detection error at deadline `o`.
    MinErde { o: u32 },
    /// Maximize F1 on the positive class.
    MaxF1,
}

impl Objective {
    /// The raw metric value for reporting.
    pub fn score(&self, report: &MetricsReport) -> f64 {
        match self {
            Objective::MinErde { o } => report
                .erde
                .iter()
                .find(|m| m.o == *o)
                .map(|m| m.mean_pct)
                .expect("deadline evaluated"),
            Objective::MaxF1 => report.f1,
        }
    }

    /// The value to minimize.
    pub fn loss_of_score(&self, score: f64) -> f64 {
        match self {
            Objective::MinErde { .. } => score,
            Objective::MaxF1 => -score,
        }
    }

    pub fn deadline(&self) -> Option<u32> {
        match self {
            Objective::MinErde { o } => Some(*o),
            Objective::MaxF1 => None,
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::MinErde { o } => write!(f, "min_erde_{o}"),
            Objective::MaxF1 => f.write_str("max_f1"),
        }
    }
}

/// The successive local grids for sigma: level `i` uses step `10^-(i+1)`
/// with offsets `-k_max..=k_max`, centered on the previous level's best.
/// Candidates outside (0, 1] are discarded; ties go to the smaller sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRefinement {
    pub center: f64,
    pub levels: u32,
    pub k_max: i32,
}

impl Default for SigmaRefinement {
    fn default() -> Self {
        Self {
            center: 0.5,
            levels: 3,
            k_max: 5,
        }
    }
}

impl SigmaRefinement {
    pub fn validate(&self) -> Result<()> {
        if !(self.center > 0.0 && self.center <= 1.0) {
            return Err(Ss3Error::InvalidSearchSpec(format!(
                "sigma center must be in (0, 1], got {}",
                self.center
            )));
        }
        if self.levels == 0 || self.k_max < 0 {
            return Err(Ss3Error::InvalidSearchSpec(
                "sigma refinement needs levels >= 1 and k_max >= 0".to_string(),
            ));
        }
        Ok(())
    }

    fn candidates(&self, center: f64, level: u32) -> Vec<f64> {
        let step = 10f64.powi(-(level as i32 + 1));
        let mut out: Vec<f64> = (-self.k_max..=self.k_max)
            .map(|k| center + k as f64 * step)
            .filter(|&s| s > 1e-12 && s <= 1.0 + 1e-12)
            .map(|s| s.min(1.0))
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }
}

/// Result of a sigma search: the chosen value, its loss, and every
/// (sigma, loss) pair evaluated along the way, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSearchResult {
    pub sigma: f64,
    pub loss: f64,
    pub evaluated: Vec<(f64, f64)>,
}

/// Runs the three-level refinement against an arbitrary loss function.
/// Candidates are evaluated in ascending order and a strictly smaller loss
/// is required to displace the incumbent, so ties resolve to the smallest
/// sigma.
pub fn search_sigma_objective<F>(refine: &SigmaRefinement, mut loss: F) -> Result<SigmaSearchResult>
where
    F: FnMut(f64) -> f64,
{
    refine.validate()?;
    let mut center = refine.center;
    let mut evaluated = Vec::new();
    let mut best = (center, f64::INFINITY);
    for level in 0..refine.levels {
        let mut level_best: Option<(f64, f64)> = None;
        for sigma in refine.candidates(center, level) {
            let l = loss(sigma);
            evaluated.push((sigma, l));
            match level_best {
                Some((_, incumbent)) if l >= incumbent => {}
                _ => level_best = Some((sigma, l)),
            }
        }
        let (sigma, l) = level_best.ok_or_else(|| {
            Ss3Error::InvalidSearchSpec("sigma grid has no candidates in (0, 1]".to_string())
        })?;
        center = sigma;
        best = (sigma, l);
    }
    Ok(SigmaSearchResult {
        sigma: best.0,
        loss: best.1,
        evaluated,
    })
}

/// Everything the grid search needs: folds, objective, and the grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub folds: usize,
    pub seed: u64,
    pub objective: Objective,
    pub sigma: SigmaRefinement,
    pub lambda_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            folds: 4,
            seed: 42,
            objective: Objective::MinErde { o: 50 },
            sigma: SigmaRefinement::default(),
            lambda_grid: vec![1.0],
            rho_grid: vec![1.0],
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Ss3Error::InvalidSearchSpec(
                "fold count must be >= 2".to_string(),
            ));
        }
        if self.lambda_grid.is_empty() || self.rho_grid.is_empty() {
            return Err(Ss3Error::InvalidSearchSpec(
                "lambda and rho grids must be non-empty".to_string(),
            ));
        }
        self.sigma.validate()
    }
}

/// Stratified fold assignment: subjects of each label are shuffled with the
/// seeded RNG and dealt round-robin, so every fold holds the same per-class
/// count up to one. Returns, per fold, the sorted subject indexes.
pub fn kfold_split(streams: &[LabeledStream], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Ss3Error::InvalidSearchSpec(
            "fold count must be >= 2".to_string(),
        ));
    }
    require_labels(streams)?;
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in streams.iter().enumerate() {
        by_label
            .entry(s.label.as_deref().expect("labels checked"))
            .or_default()
            .push(i);
    }
    for (label, members) in &by_label {
        if members.len() < folds {
            return Err(Ss3Error::InvalidSearchSpec(format!(
                "label `{label}` has {} subjects, fewer than {folds} folds",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Vec::new(); folds];
    for members in by_label.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (j, idx) in shuffled.into_iter().enumerate() {
            assignment[j % folds].push(idx);
        }
    }
    for fold in &mut assignment {
        fold.sort_unstable();
    }
    Ok(assignment)
}

/// Cross-validation context: how fold models are trained and scored.
#[derive(Debug, Clone)]
pub struct CvContext {
    pub tokenizer: TokenizerConfig,
    pub level_config: LevelConfig,
    pub policy: PolicyTemplate,
    pub c_fp: f64,
    pub c_fn: f64,
    pub c_tp: f64,
}

impl CvContext {
    fn train_fold(&self, streams: &[LabeledStream], train_idx: &[usize], hp: Hyperparams) -> Result<Model> {
        let mut model = Model::new(hp)?.with_tokenizer(self.tokenizer.clone());
        for &i in train_idx {
            let s = &streams[i];
            let label = s.label.as_deref().expect("labels checked");
            for item in &s.items {
                model.learn(item, label)?;
            }
        }
        Ok(model)
    }

    /// Per-fold raw objective scores for one hyper-parameter triple.
    /// Validation subjects are streamed per-post; fold models are retrained
    /// from scratch (training is just counting).
    fn fold_scores(
        &self,
        streams: &[LabeledStream],
        fold_assignment: &[Vec<usize>],
        hp: Hyperparams,
        objective: Objective,
    ) -> Result<Vec<f64>> {
        let deadlines = match objective.deadline() {
            Some(o) => vec![o],
            None => vec![50],
        };
        let opts = EvalOptions {
            mode: EvalMode::PerPost,
            deadlines,
            c_fp: self.c_fp,
            c_fn: self.c_fn,
            c_tp: self.c_tp,
        };
        let mut scores = Vec::with_capacity(fold_assignment.len());
        for fold in fold_assignment {
            let train_idx: Vec<usize> = (0..streams.len()).filter(|i| !fold.contains(i)).collect();
            let model = self.train_fold(streams, &train_idx, hp)?;
            let policy = self.policy.resolve(&model)?;
            let validation: Vec<LabeledStream> = fold.iter().map(|&i| streams[i].clone()).collect();
            let report = evaluate(&model, &policy, &validation, &opts, &self.level_config)?;
            scores.push(objective.score(&report));
        }
        Ok(scores)
    }
}

/// One row of the score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub rho: f64,
    pub sigma: f64,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

/// The winning configuration, consumable by training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub sigma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub objective: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Rows ranked best-first.
    pub rows: Vec<ScoreRow>,
    pub best: BestConfig,
}

/// Nested sigma search for fixed (lambda, rho): the CV mean loss drives the
/// refinement.
pub fn search_sigma(
    streams: &[LabeledStream],
    spec: &SearchSpec,
    ctx: &CvContext,
    lambda: f64,
    rho: f64,
) -> Result<SigmaSearchResult> {
    spec.validate()?;
    let folds = kfold_split(streams, spec.folds, spec.seed)?;
    let mut failure: Option<Ss3Error> = None;
    let result = search_sigma_objective(&spec.sigma, |sigma| {
        if failure.is_some() {
            return f64::INFINITY;
        }
        let hp = match Hyperparams::new(sigma, lambda, rho) {
            Ok(hp) => hp,
            Err(e) => {
                failure = Some(e);
                return f64::INFINITY;
            }
        };
        match ctx.fold_scores(streams, &folds, hp, spec.objective) {
            Ok(scores) => {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                spec.objective.loss_of_score(mean)
            }
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(result)
}

/// Cartesian product over the lambda and rho grids, each cell refined over
/// sigma; rows are ranked by the objective with deterministic tie-breaks.
pub fn grid_search(streams: &[LabeledStream], spec: &SearchSpec, ctx: &CvContext) -> Result<SearchResult> {
    spec.validate()?;
    let folds = kfold_split(streams, spec.folds, spec.seed)?;
    let mut rows = Vec::new();
    for &lambda in &spec.lambda_grid {
        for &rho in &spec.rho_grid {
            let refined = search_sigma(streams, spec, ctx, lambda, rho)?;
            let hp = Hyperparams::new(refined.sigma, lambda, rho)?;
            let fold_scores = ctx.fold_scores(streams, &folds, hp, spec.objective)?;
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            rows.push(ScoreRow {
                lambda,
                rho,
                sigma: refined.sigma,
                fold_scores,
                mean,
            });
        }
    }
    rows.sort_by(|a, b| {
        let la = spec.objective.loss_of_score(a.mean);
        let lb = spec.objective.loss_of_score(b.mean);
        la.partial_cmp(&lb)
            .unwrap()
            .then_with(|| a.lambda.partial_cmp(&b.lambda).unwrap())
            .then_with(|| a.rho.partial_cmp(&b.rho).unwrap())
            .then_with(|| a.sigma.partial_cmp(&b.sigma).unwrap())
    });
    let best_row = rows.first().expect("grids are non-empty");
    let best = BestConfig {
        sigma: best_row.sigma,
        lambda: best_row.lambda,
        rho: best_row.rho,
        objective: spec.objective.to_string(),
        score: best_row.mean,
    };
    Ok(SearchResult { rows, best })
}

/// CSV score table: `lambda,rho,sigma,fold_0..fold_{F-1},mean`.
pub fn write_score_table<W: Write>(writer: W, result: &SearchResult, folds: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["lambda".to_string(), "rho".to_string(), "sigma".to_string()];
    header.extend((0..folds).map(|i| format!("fold_{i}")));
    header.push("mean".to_string());
    w.write_record(&header)?;
    for row in &result.rows {
        let mut record = vec![
            row.lambda.to_string(),
            row.rho.to_string(),
            row.sigma.to_string(),
        ];
        record.extend(row.fold_scores.iter().map(|s| s.to_string()));
        record.push(row.mean.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
