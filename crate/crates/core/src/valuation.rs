//! Word valuation: local value, significance, sanction, and their
//! composition into the global value.
//!
//! For a term `w` and category `c` with counts `tf` and per-category maximum
//! `max_tf`:
//!
//! - `lv(w, c) = (tf / max_tf)^sigma` — frequency normalized against the most
//!   frequent word in the category, smoothed by `sigma`.
//! - `sg(w, c) = tanh-sigmoid of how far lv(w, c) sits above the median of
//!   the term's local values across all categories, in units of
//!   `lambda * MAD`.
//! - `sn(w, c) = (1 - C_hat / (|C| - 1))^rho`, where `C_hat` sums the term's
//!   significance to every *other* category.
//! - `gv(w, c) = lv * sg * sn`.

use crate::model::{Model, Valuation};
use rayon::prelude::*;
use std::collections::HashMap;

/// Floor for the significance denominator. When the local values of a term
/// are identical across all categories, `MAD` is 0 and the deviation is also
/// 0, so significance lands on the sigmoid floor regardless; the guard only
/// matters in the positive-deviation/zero-MAD corner, where it drives the
/// sigmoid to 1 (maximally significant).
pub const MAD_EPSILON: f64 = 1e-9;

/// Median of a slice; the mean of the two middle values for even lengths.
/// Panics on an empty slice.
fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in local values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Significance of position `index` within a full set of per-category local
/// values (the set includes the category under evaluation).
pub fn significance_of_locals(locals: &[f64], index: usize, lambda: f64) -> f64 {
    assert!(locals.len() >= 2, "significance needs at least 2 categories");
    let mut sorted = locals.to_vec();
    let med = median(&mut sorted);
    let mut deviations: Vec<f64> = locals.iter().map(|lv| (lv - med).abs()).collect();
    let mad = median(&mut deviations);
    let denom = (lambda * mad).max(MAD_EPSILON);
    0.5 * (4.0 * (locals[index] - med) / denom - 2.0).tanh() + 0.5
}

/// Sanction of position `index` given the full set of per-category
/// significances. The base is clamped to [0, 1] before exponentiation as a
/// numerical guard; mathematically `C_hat <= |C| - 1` already holds.
pub fn sanction_of_significances(significances: &[f64], index: usize, rho: f64) -> f64 {
    let n = significances.len();
    assert!(n >= 2, "sanction needs at least 2 categories");
    let total: f64 = significances.iter().sum();
    let others = total - significances[index];
    let base = (1.0 - others / (n - 1) as f64).clamp(0.0, 1.0);
    base.powf(rho)
}

/// The global value is the local value scaled by significance and sanction.
pub fn compose_global_value(lv: f64, sg: f64, sn: f64) -> f64 {
    lv * sg * sn
}

/// All four factors of a term, one entry per category.
#[derive(Debug, Clone, PartialEq)]
pub struct TermBreakdown {
    pub local: Vec<f64>,
    pub significance: Vec<f64>,
    pub sanction: Vec<f64>,
    pub global: Vec<f64>,
}

impl Model {
    /// `(tf / max_tf)^sigma`; 0 for unseen terms and for categories with an
    /// empty profile.
    pub fn local_value(&self, term: &str, category: usize) -> f64 {
        let profile = self.category(category);
        let max = profile.max_freq();
        if max == 0 {
            return 0.0;
        }
        let tf = profile.freq(term);
        if tf == 0 {
            return 0.0;
        }
        (tf as f64 / max as f64).powf(self.hyperparams.sigma)
    }

    fn local_values(&self, term: &str) -> Vec<f64> {
        (0..self.num_categories())
            .map(|c| self.local_value(term, c))
            .collect()
    }

    /// Significance of `term` for `category`, against the term's local
    /// values across all categories.
    pub fn significance(&self, term: &str, category: usize) -> f64 {
        let locals = self.local_values(term);
        significance_of_locals(&locals, category, self.hyperparams.lambda)
    }

    /// Sanction of `term` for `category`.
    pub fn sanction(&self, term: &str, category: usize) -> f64 {
        self.breakdown(term).sanction[category]
    }

    /// `lv * sg * sn` for one category.
    pub fn global_value(&self, term: &str, category: usize) -> f64 {
        self.breakdown(term).global[category]
    }

    /// Computes all four factors for a term in one pass.
    pub fn breakdown(&self, term: &str) -> TermBreakdown {
        assert!(
            self.num_categories() >= 2,
            "valuation needs at least 2 categories (ensure_classifiable)"
        );
        let locals = self.local_values(term);
        let lambda = self.hyperparams.lambda;
        let significances: Vec<f64> = (0..locals.len())
            .map(|i| significance_of_locals(&locals, i, lambda))
            .collect();
        let rho = self.hyperparams.rho;
        let sanctions: Vec<f64> = (0..significances.len())
            .map(|i| sanction_of_significances(&significances, i, rho))
            .collect();
        let global: Vec<f64> = locals
            .iter()
            .zip(&significances)
            .zip(&sanctions)
            .map(|((&lv, &sg), &sn)| compose_global_value(lv, sg, sn))
            .collect();
        TermBreakdown {
            local: locals,
            significance: significances,
            sanction: sanctions,
            global,
        }
    }

    /// Raw per-category values of a term under the active valuation,
    /// bypassing the cache.
    pub(crate) fn compute_term_values(&self, term: &str) -> Vec<f64> {
        match self.valuation() {
            Valuation::GlobalValue => self.breakdown(term).global,
            Valuation::Custom(f) => {
                let values = f(self, term);
                assert_eq!(
                    values.len(),
                    self.num_categories(),
                    "custom valuation returned a vector of the wrong length"
                );
                values
            }
        }
    }

    /// Precomputes the term vector for every word in the union vocabulary.
    /// Classification results with and without the cache are identical; the
    /// cache only trades memory for speed and is dropped on any mutation.
    pub fn update_global_values(&mut self) {
        let vocab: Vec<String> = self.vocabulary().into_iter().map(String::from).collect();
        let cache: HashMap<String, Vec<f64>> = vocab
            .into_par_iter()
            .map(|term| {
                let values = self.compute_term_values(&term);
                (term, values)
            })
            .collect();
        self.set_cache(cache);
    }

    /// The `k` highest-global-value terms for a category, ties broken
    /// lexicographically. Returns the whole vocabulary when `k` exceeds it.
    pub fn top_terms(&self, category: usize, k: usize) -> Vec<(String, f64)> {
        let mut scored: Vec<(String, f64)> = self
            .vocabulary()
            .into_iter()
            .map(|term| {
                let gv = self.term_vector(term)[category];
                (term.to_string(), gv)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("NaN global value")
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;
    use approx::assert_abs_diff_eq;

    fn sg_floor() -> f64 {
        0.5 * (-2.0f64).tanh() + 0.5
    }

    fn toy_model(sigma: f64) -> Model {
        let mut m = Model::new(Hyperparams::new(sigma, 1.0, 1.0).unwrap()).unwrap();
        m.learn("bread bread bread bread flour oven", "food").unwrap();
        m.learn("browser browser browser browser cookie server", "tech").unwrap();
        m
    }

    #[test]
    fn local_value_of_most_frequent_term_is_one() {
        for sigma in [0.1, 0.455, 1.0] {
            let m = toy_model(sigma);
            assert_eq!(m.local_value("bread", 0), 1.0);
        }
    }

    #[test]
    fn local_value_of_unseen_term_is_zero() {
        let m = toy_model(0.5);
        assert_eq!(m.local_value("zeppelin", 0), 0.0);
        assert_eq!(m.local_value("browser", 0), 0.0);
    }

    #[test]
    fn local_value_quarter_ratio_sqrt() {
        // tf=25, max=100, sigma=0.5 -> (0.25)^0.5 = 0.5
        let mut m = Model::new(Hyperparams::new(0.5, 1.0, 1.0).unwrap()).unwrap();
        let hundred = "top ".repeat(100);
        let quarter = "mid ".repeat(25);
        m.learn(&format!("{hundred}{quarter}"), "a").unwrap();
        m.learn("other", "b").unwrap();
        assert_abs_diff_eq!(m.local_value("mid", 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn significance_floor_at_zero_deviation_is_exact() {
        // identical local values across categories: deviation 0, MAD 0
        let sg = significance_of_locals(&[0.7, 0.7, 0.7], 1, 1.0);
        assert_eq!(sg, sg_floor());
        assert_abs_diff_eq!(sg, 0.01798620996209155, epsilon = 1e-15);
    }

    #[test]
    fn significance_at_full_deviation() {
        // locals chosen to be exact in binary so lv - med == lambda * MAD
        let sg = significance_of_locals(&[0.25, 0.5, 0.75], 2, 1.0);
        assert_eq!(sg, 0.5 * 2.0f64.tanh() + 0.5);
        assert_abs_diff_eq!(sg, 0.9820137900379085, epsilon = 1e-15);
    }

    #[test]
    fn stop_word_significance_is_small() {
        // a term with uniformly high local value across categories
        let mut m = Model::new(Hyperparams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        for cat in ["a", "b", "c"] {
            m.learn("the the the the word", cat).unwrap();
        }
        let idx = m.category_index("a").unwrap();
        assert!(m.significance("the", idx) < 0.1);
    }

    #[test]
    fn sanction_extremes() {
        for rho in [0.5, 1.0, 2.0] {
            // significant only to category 0
            assert_eq!(sanction_of_significances(&[0.98, 0.0, 0.0], 0, rho), 1.0);
            // significant to every other category
            assert_eq!(sanction_of_significances(&[0.5, 1.0, 1.0], 0, rho), 0.0);
        }
    }

    #[test]
    fn sanction_midpoint_three_categories() {
        // |C|=3, rho=1, C_hat=1 -> (1 - 1/2)^1 = 0.5
        let sn = sanction_of_significances(&[0.9, 1.0, 0.0], 0, 1.0);
        assert_abs_diff_eq!(sn, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn global_value_compositions() {
        assert_abs_diff_eq!(compose_global_value(0.92, 0.05, 1.0), 0.046, epsilon = 1e-12);
        assert_abs_diff_eq!(compose_global_value(0.65, 0.99, 0.95), 0.611325, epsilon = 1e-12);
        assert_abs_diff_eq!(compose_global_value(0.70, 0.85, 0.60), 0.357, epsilon = 1e-12);
    }

    #[test]
    fn unseen_term_has_zero_vector() {
        let m = toy_model(0.5);
        let v = m.term_vector("zeppelin");
        assert!(v.is_zero());
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn uniform_stop_word_vector_is_near_zero() {
        let mut m = Model::new(Hyperparams::default()).unwrap();
        for cat in ["travel", "tech", "business", "food"] {
            m.learn("the the the the the word word", cat).unwrap();
        }
        let v = m.term_vector("the");
        assert_eq!(v.len(), 4);
        for i in 0..4 {
            assert!(v[i] < 0.05, "gv(the, {i}) = {} should be ~0", v[i]);
        }
    }

    #[test]
    fn exclusive_frequent_term_dominates_its_category() {
        // four categories shaped so "apple" is strong for tech, moderate for
        // food and business, absent from travel
        let mut m = Model::new(Hyperparams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        m.learn("beach hotel flight beach hotel", "travel").unwrap();
        m.learn("apple apple apple apple browser server code", "tech").unwrap();
        m.learn("market market market stocks apple", "business").unwrap();
        m.learn("pie pie pie recipe apple apple", "food").unwrap();
        let v = m.term_vector("apple");
        let tech = m.category_index("tech").unwrap();
        assert_eq!(v.argmax(), Some(tech));
        let travel = m.category_index("travel").unwrap();
        assert_eq!(v[travel], 0.0);
    }

    #[test]
    fn cache_matches_direct_computation() {
        let mut m = toy_model(0.455);
        let direct: Vec<_> = ["bread", "cookie", "zeppelin"]
            .iter()
            .map(|t| m.term_vector(t))
            .collect();
        m.update_global_values();
        assert_eq!(m.cached_terms(), Some(m.vocabulary().len()));
        let cached: Vec<_> = ["bread", "cookie", "zeppelin"]
            .iter()
            .map(|t| m.term_vector(t))
            .collect();
        assert_eq!(direct, cached);
    }

    #[test]
    fn top_terms_k_zero_and_oversized() {
        let m = toy_model(0.5);
        assert!(m.top_terms(0, 0).is_empty());
        let all = m.top_terms(0, 10_000);
        assert_eq!(all.len(), m.vocabulary().len());
    }

    /// Plain re-derivation of gv for the brute-force ranking oracle, kept
    /// independent of the valuation kernels above.
    fn oracle_gv(m: &Model, term: &str, category: usize) -> f64 {
        let n = m.num_categories();
        let locals: Vec<f64> = (0..n)
            .map(|c| {
                let p = m.category(c);
                if p.max_freq() == 0 || p.freq(term) == 0 {
                    0.0
                } else {
                    (p.freq(term) as f64 / p.max_freq() as f64).powf(m.hyperparams.sigma)
                }
            })
            .collect();
        let med = |vals: &[f64]| {
            let mut s = vals.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if s.len() % 2 == 1 {
                s[s.len() / 2]
            } else {
                (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0
            }
        };
        let m_lv = med(&locals);
        let devs: Vec<f64> = locals.iter().map(|lv| (lv - m_lv).abs()).collect();
        let mad = med(&devs);
        let sg = |i: usize| {
            let denom = (m.hyperparams.lambda * mad).max(1e-9);
            0.5 * (4.0 * (locals[i] - m_lv) / denom - 2.0).tanh() + 0.5
        };
        let sgs: Vec<f64> = (0..n).map(sg).collect();
        let c_hat: f64 = sgs.iter().sum::<f64>() - sgs[category];
        let sn = (1.0 - c_hat / (n - 1) as f64).clamp(0.0, 1.0).powf(m.hyperparams.rho);
        locals[category] * sgs[category] * sn
    }

    #[test]
    fn top_terms_ranks_exclusive_term_first_and_orders_by_brute_force() {
        let mut m = Model::new(Hyperparams::new(0.7, 1.0, 1.0).unwrap()).unwrap();
        m.learn(
            "insulin insulin insulin dose clinic nurse surgeon ward symptom \
             diagnosis therapy tablet vaccine scan the the the",
            "medical",
        )
        .unwrap();
        m.learn("goal goal the the the match stadium referee coach league", "sports")
            .unwrap();
        m.learn(
            "ballot ballot vote the the the senate minister policy campaign",
            "politics",
        )
        .unwrap();

        let medical = m.category_index("medical").unwrap();
        let top = m.top_terms(medical, 3);
        assert_eq!(top[0].0, "insulin");

        let mut oracle: Vec<(String, f64)> = m
            .vocabulary()
            .into_iter()
            .map(|w| (w.to_string(), oracle_gv(&m, w, medical)))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));

        let got = m.top_terms(medical, oracle.len());
        let got_terms: Vec<&str> = got.iter().map(|(t, _)| t.as_str()).collect();
        let oracle_terms: Vec<&str> = oracle.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(got_terms, oracle_terms);
        for ((t, v), (ot, ov)) in got.iter().zip(&oracle) {
            assert_eq!(t, ot);
            assert_abs_diff_eq!(*v, *ov, epsilon = 1e-12);
        }

        // "the" is frequent in every category at similar rates; it must not
        // reach the top 10 even though its raw frequency ties the maximum
        let top10 = m.top_terms(medical, 10);
        assert!(top10.iter().all(|(t, _)| t != "the"));
        let the_rank = got_terms.iter().position(|t| *t == "the").unwrap();
        assert!(the_rank >= 10, "stop word ranked {the_rank}");
    }
}
