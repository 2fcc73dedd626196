//! The trained model: per-category term-frequency profiles plus the
//! hyper-parameters that shape word valuation. Training is incremental —
//! a profile is just a dictionary of counts, so learning a document only
//! bumps integers and never requires revisiting earlier documents.

use crate::error::{Result, Ss3Error};
use crate::text::TokenizerConfig;
use crate::vector::ConfidenceVector;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// The three valuation hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Smoothness, in (0, 1]. Exponent applied to the normalized frequency.
    pub sigma: f64,
    /// Significance, > 0. Scales how far a local value must deviate from the
    /// cross-category median to count as significant.
    pub lambda: f64,
    /// Sanction, >= 0. Severity of the penalty for terms significant to many
    /// categories.
    pub rho: f64,
}

impl Hyperparams {
    pub fn new(sigma: f64, lambda: f64, rho: f64) -> Result<Self> {
        let hp = Self { sigma, lambda, rho };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Ss3Error::InvalidHyperparam(format!(
                "sigma must be in (0, 1], got {}",
                self.sigma
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Ss3Error::InvalidHyperparam(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.rho >= 0.0) {
            return Err(Ss3Error::InvalidHyperparam(format!(
                "rho must be >= 0, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            sigma: 0.455,
            lambda: 1.0,
            rho: 1.0,
        }
    }
}

/// Per-category training state: a dictionary of term counts. Terms never
/// seen are absent, never stored as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryProfile {
    pub name: String,
    #[serde(rename = "terms")]
    term_freqs: BTreeMap<String, u64>,
    #[serde(skip)]
    max_freq: u64,
    #[serde(default)]
    pub doc_count: u64,
}

impl CategoryProfile {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            term_freqs: BTreeMap::new(),
            max_freq: 0,
            doc_count: 0,
        }
    }

    pub fn freq(&self, term: &str) -> u64 {
        self.term_freqs.get(term).copied().unwrap_or(0)
    }

    /// Largest term count in the profile; 0 when the profile is empty.
    pub fn max_freq(&self) -> u64 {
        self.max_freq
    }

    pub fn vocab_size(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, u64)> {
        self.term_freqs.iter().map(|(t, &c)| (t.as_str(), c))
    }

    /// Total number of training tokens counted into the profile.
    pub fn total_count(&self) -> u64 {
        self.term_freqs.values().sum()
    }

    fn learn_tokens<I: IntoIterator<Item = String>>(&mut self, tokens: I) {
        for token in tokens {
            let count = self.term_freqs.entry(token).or_insert(0);
            *count += 1;
            if *count > self.max_freq {
                self.max_freq = *count;
            }
        }
    }

    fn recompute_max(&mut self) {
        self.max_freq = self.term_freqs.values().copied().max().unwrap_or(0);
    }

    /// Term-wise sum of two profiles for the same category.
    pub fn merge(a: &CategoryProfile, b: &CategoryProfile) -> Result<CategoryProfile> {
        if a.name != b.name {
            return Err(Ss3Error::ProfileNameMismatch(a.name.clone(), b.name.clone()));
        }
        let mut merged = a.clone();
        for (term, &count) in &b.term_freqs {
            *merged.term_freqs.entry(term.clone()).or_insert(0) += count;
        }
        merged.doc_count = a.doc_count + b.doc_count;
        merged.recompute_max();
        Ok(merged)
    }
}

/// Signature of a custom per-term scorer: maps a term to one value per
/// category, in category order.
pub type ValuationFn = dyn Fn(&Model, &str) -> Vec<f64> + Send + Sync;

/// Per-term scorer. The default is the smoothness/significance/sanction
/// composition; a custom function lets other additive models (e.g. a
/// log-likelihood Naive Bayes) run on the same classification machinery.
#[derive(Clone, Default)]
pub enum Valuation {
    #[default]
    GlobalValue,
    Custom(Arc<ValuationFn>),
}

impl fmt::Debug for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::GlobalValue => f.write_str("GlobalValue"),
            Valuation::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Ordered category profiles plus hyper-parameters. Category order is part
/// of the model: component `i` of every confidence vector always refers to
/// `categories[i]`, and the order survives save/load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    format_version: u32,
    pub hyperparams: Hyperparams,
    #[serde(rename = "tokenizer_config")]
    pub tokenizer: TokenizerConfig,
    categories: Vec<CategoryProfile>,
    #[serde(skip)]
    gv_cache: Option<HashMap<String, Vec<f64>>>,
    #[serde(skip)]
    valuation: Valuation,
}

impl Model {
    pub fn new(hyperparams: Hyperparams) -> Result<Self> {
        hyperparams.validate()?;
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            hyperparams,
            tokenizer: TokenizerConfig::default(),
            categories: Vec::new(),
            gv_cache: None,
            valuation: Valuation::GlobalValue,
        })
    }

    pub fn with_tokenizer(mut self, tokenizer: TokenizerConfig) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn categories(&self) -> &[CategoryProfile] {
        &self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn category(&self, index: usize) -> &CategoryProfile {
        &self.categories[index]
    }

    /// Appends an empty profile. New categories may be added at any time;
    /// they take the next free vector position.
    pub fn add_category(&mut self, name: &str) -> Result<usize> {
        if self.category_index(name).is_some() {
            return Err(Ss3Error::DuplicateCategory(name.to_string()));
        }
        self.categories.push(CategoryProfile::new(name));
        self.invalidate_cache();
        Ok(self.categories.len() - 1)
    }

    /// Valuation needs at least two categories (the sanction denominator is
    /// |C| - 1). Classification entry points call this once up front.
    pub fn ensure_classifiable(&self) -> Result<()> {
        if self.categories.len() < 2 {
            return Err(Ss3Error::TooFewCategories(self.categories.len()));
        }
        Ok(())
    }

    /// Learns one document into `category`, creating the category on first
    /// use. Text that tokenizes to nothing is a no-op.
    pub fn learn(&mut self, text: &str, category: &str) -> Result<()> {
        let tokens = self.tokenizer.tokens(text);
        if tokens.is_empty() {
            return Ok(());
        }
        let idx = match self.category_index(category) {
            Some(idx) => idx,
            None => self.add_category(category)?,
        };
        self.categories[idx].learn_tokens(tokens);
        self.categories[idx].doc_count += 1;
        self.invalidate_cache();
        Ok(())
    }

    /// Merges another model trained with identical settings. Category order:
    /// this model's categories first, then the other's unseen ones in their
    /// original order.
    pub fn merge(&mut self, other: &Model) -> Result<()> {
        if self.hyperparams != other.hyperparams {
            return Err(Ss3Error::IncompatibleModels(
                "hyper-parameters differ".to_string(),
            ));
        }
        if self.tokenizer != other.tokenizer {
            return Err(Ss3Error::IncompatibleModels(
                "tokenizer configs differ".to_string(),
            ));
        }
        for profile in &other.categories {
            match self.category_index(&profile.name) {
                Some(idx) => {
                    self.categories[idx] = CategoryProfile::merge(&self.categories[idx], profile)?;
                }
                None => self.categories.push(profile.clone()),
            }
        }
        self.invalidate_cache();
        Ok(())
    }

    /// Union vocabulary across all categories.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        let mut vocab = BTreeSet::new();
        for profile in &self.categories {
            vocab.extend(profile.terms().map(|(t, _)| t));
        }
        vocab
    }

    pub(crate) fn invalidate_cache(&mut self) {
        self.gv_cache = None;
    }

    pub(crate) fn cache(&self) -> Option<&HashMap<String, Vec<f64>>> {
        self.gv_cache.as_ref()
    }

    pub(crate) fn set_cache(&mut self, cache: HashMap<String, Vec<f64>>) {
        self.gv_cache = Some(cache);
    }

    /// Number of cached term vectors, when the cache is populated.
    pub fn cached_terms(&self) -> Option<usize> {
        self.gv_cache.as_ref().map(|c| c.len())
    }

    pub(crate) fn valuation(&self) -> &Valuation {
        &self.valuation
    }

    /// Replaces the per-term scorer. Intended for frozen models; the
    /// replacement applies to all subsequent classification.
    pub fn set_valuation(&mut self, valuation: Valuation) {
        self.valuation = valuation;
        self.invalidate_cache();
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let mut model: Model = serde_json::from_str(json)?;
        model.validate_loaded()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = self.to_json_string()?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json_str(&json)
    }

    fn validate_loaded(&mut self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Ss3Error::UnsupportedVersion(self.format_version));
        }
        self.hyperparams.validate()?;
        let mut seen = BTreeSet::new();
        for profile in &mut self.categories {
            if !seen.insert(profile.name.clone()) {
                return Err(Ss3Error::ModelFormat(format!(
                    "duplicate category `{}`",
                    profile.name
                )));
            }
            if profile.term_freqs.values().any(|&c| c == 0) {
                return Err(Ss3Error::ModelFormat(format!(
                    "category `{}` stores a zero count",
                    profile.name
                )));
            }
            profile.recompute_max();
        }
        self.gv_cache = None;
        self.valuation = Valuation::GlobalValue;
        Ok(())
    }
}

// Confidence-vector construction for terms lives in `valuation`; re-exported
// here so `Model` presents one coherent surface.
impl Model {
    /// Confidence vector of a term: component `i` is the term's value for
    /// category `i` under the active valuation.
    pub fn term_vector(&self, term: &str) -> ConfidenceVector {
        if let Some(cache) = self.cache() {
            return ConfidenceVector::from_vec(
                cache
                    .get(term)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; self.num_categories()]),
            );
        }
        ConfidenceVector::from_vec(self.compute_term_values(term))
    }
}
