//! Synthetic corpus generators shared by the benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ss3_core::{Hyperparams, Model};

/// Vocabulary of plausible-looking words: a shared pool plus per-category
/// exclusive words, so the trained model has both stop-word-like and
/// discriminative terms.
pub struct SyntheticCorpus {
    pub categories: Vec<String>,
    rng: ChaCha8Rng,
    shared: Vec<String>,
    exclusive: Vec<Vec<String>>,
}

impl SyntheticCorpus {
    pub fn new(categories: &[&str], vocab_per_category: usize, seed: u64) -> Self {
        let shared = (0..50).map(|i| format!("common{i}")).collect();
        let exclusive = categories
            .iter()
            .map(|c| (0..vocab_per_category).map(|i| format!("{c}word{i}")).collect())
            .collect();
        Self {
            categories: categories.iter().map(|c| c.to_string()).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            shared,
            exclusive,
        }
    }

    /// A document leaning toward `category`: mostly shared words with a
    /// sprinkling of that category's exclusive vocabulary.
    pub fn document(&mut self, category: usize, words: usize) -> String {
        let mut out = Vec::with_capacity(words);
        for i in 0..words {
            let exclusive = self.rng.gen_bool(0.3);
            let word = if exclusive {
                self.exclusive[category].choose(&mut self.rng).unwrap()
            } else {
                self.shared.choose(&mut self.rng).unwrap()
            };
            out.push(word.clone());
            if i % 12 == 11 {
                let last = out.last_mut().unwrap();
                last.push('.');
            }
        }
        out.join(" ")
    }

    /// Trains a model with `docs_per_category` documents per category.
    pub fn train(&mut self, docs_per_category: usize, words_per_doc: usize) -> Model {
        let mut model = Model::new(Hyperparams::default()).unwrap();
        for c in 0..self.categories.len() {
            for _ in 0..docs_per_category {
                let doc = self.document(c, words_per_doc);
                let label = self.categories[c].clone();
                model.learn(&doc, &label).unwrap();
            }
        }
        model
    }
}
