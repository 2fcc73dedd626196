//! Hierarchical block classification: split the input into a tree of blocks
//! (document > paragraph > sentence > word), value each word, and reduce the
//! word vectors upward with a per-level summary operator. As long as the top
//! operator can be updated in place, appending a block to an already
//! classified input costs only the new block.

use crate::error::{Result, Ss3Error};
use crate::model::Model;
use crate::text::TokenizerConfig;
use crate::vector::ConfidenceVector;
use serde::{Deserialize, Serialize};

/// Summary operator combining child confidence vectors into their parent's.
/// All three are incremental-capable: addition and maximum fold in place,
/// mean keeps a running (sum, count).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Addition,
    Maximum,
    Mean,
}

impl Operator {
    /// Folds vectors in their given order. Mean sums first and divides once,
    /// so an incremental fold over the same sequence is bit-identical.
    pub fn reduce<'a, I>(&self, cvs: I, dim: usize) -> ConfidenceVector
    where
        I: IntoIterator<Item = &'a ConfidenceVector>,
    {
        let mut acc = ConfidenceVector::zeros(dim);
        let mut count = 0u64;
        for cv in cvs {
            match self {
                Operator::Addition | Operator::Mean => acc.add_assign(cv),
                Operator::Maximum => acc.max_assign(cv),
            }
            count += 1;
        }
        if *self == Operator::Mean && count > 0 {
            let mut values = acc.into_vec();
            for v in &mut values {
                *v /= count as f64;
            }
            return ConfidenceVector::from_vec(values);
        }
        acc
    }
}

/// How a block's text is split into the next level's blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Split on blank lines (a whitespace run containing >= 2 newlines).
    BlankLine,
    /// Split on any of the given characters.
    Chars(Vec<char>),
    /// Split into word tokens (the model's tokenizer).
    Words,
}

/// One non-leaf tier of the hierarchy: how its text splits into children and
/// how the children's vectors fold back into its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub name: String,
    pub split: SplitRule,
    pub operator: Operator,
}

impl Tier {
    pub fn new(name: &str, split: SplitRule, operator: Operator) -> Self {
        Self {
            name: name.to_string(),
            split,
            operator,
        }
    }
}

/// The block hierarchy, highest tier first. The last tier always splits into
/// words; words sit at level 0 and the top tier at level `tiers.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    tiers: Vec<Tier>,
}

impl LevelConfig {
    pub fn new(tiers: Vec<Tier>) -> Result<Self> {
        if tiers.is_empty() {
            return Err(Ss3Error::InvalidLevelConfig(
                "at least one tier is required".to_string(),
            ));
        }
        for (i, tier) in tiers.iter().enumerate() {
            let is_last = i == tiers.len() - 1;
            if is_last && tier.split != SplitRule::Words {
                return Err(Ss3Error::InvalidLevelConfig(
                    "the last tier must split into words".to_string(),
                ));
            }
            if !is_last && tier.split == SplitRule::Words {
                return Err(Ss3Error::InvalidLevelConfig(format!(
                    "tier `{}` splits into words but is not the last tier",
                    tier.name
                )));
            }
        }
        Ok(Self { tiers })
    }

    /// document -> paragraph (blank line) -> sentence (./!/?) -> word, with
    /// addition everywhere.
    pub fn default_hierarchy() -> Self {
        Self::new(vec![
            Tier::new("document", SplitRule::BlankLine, Operator::Addition),
            Tier::new(
                "paragraph",
                SplitRule::Chars(vec!['.', '!', '?']),
                Operator::Addition,
            ),
            Tier::new("sentence", SplitRule::Words, Operator::Addition),
        ])
        .expect("default hierarchy is valid")
    }

    /// document -> sentence -> word with a configurable top operator; handy
    /// for sentence-stream processing.
    pub fn sentence_document(top: Operator) -> Self {
        Self::new(vec![
            Tier::new("document", SplitRule::Chars(vec!['.', '!', '?']), top),
            Tier::new("sentence", SplitRule::Words, Operator::Addition),
        ])
        .expect("sentence/document hierarchy is valid")
    }

    pub fn tiers(&self) -> &[Tier] {
        &self.tiers
    }

    /// Level index of the whole input; words are level 0.
    pub fn top_level(&self) -> usize {
        self.tiers.len()
    }

    pub fn top_operator(&self) -> Operator {
        self.tiers[0].operator
    }

    /// The hierarchy rooted at `level` (1 = the lowest non-leaf tier).
    /// Panics if `level` is 0 or above the top level.
    pub fn at_level(&self, level: usize) -> LevelConfig {
        assert!(level >= 1 && level <= self.top_level(), "bad level {level}");
        LevelConfig {
            tiers: self.tiers[self.tiers.len() - level..].to_vec(),
        }
    }

    fn tier_for_level(&self, level: usize) -> &Tier {
        &self.tiers[self.tiers.len() - level]
    }
}

impl Default for LevelConfig {
    fn default() -> Self {
        Self::default_hierarchy()
    }
}

/// A node of the parsed block tree. `span` is a byte range into the source
/// text; leaves are single word tokens at level 0. `cv` is filled in by
/// classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockNode {
    pub level: usize,
    pub span: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<ConfidenceVector>,
    pub children: Vec<BlockNode>,
}

impl BlockNode {
    pub fn is_leaf(&self) -> bool {
        self.level == 0
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.span.0..self.span.1]
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(BlockNode::leaf_count).sum()
        }
    }

    pub fn cv(&self) -> &ConfidenceVector {
        self.cv.as_ref().expect("block tree not classified yet")
    }
}

fn trimmed_span(source: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let slice = &source[start..end];
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return None;
    }
    let offset = slice.find(trimmed).unwrap_or(0);
    Some((start + offset, start + offset + trimmed.len()))
}

fn split_spans(source: &str, span: (usize, usize), rule: &SplitRule) -> Vec<(usize, usize)> {
    let (start, end) = span;
    let text = &source[start..end];
    let mut cuts: Vec<(usize, usize)> = Vec::new(); // (cut_start, cut_end) relative
    match rule {
        SplitRule::Chars(delims) => {
            for (idx, ch) in text.char_indices() {
                if delims.contains(&ch) {
                    cuts.push((idx, idx + ch.len_utf8()));
                }
            }
        }
        SplitRule::BlankLine => {
            let bytes = text.as_bytes();
            let mut i = 0;
            while i < bytes.len() {
                if bytes[i].is_ascii_whitespace() {
                    let run_start = i;
                    let mut newlines = 0;
                    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                        if bytes[i] == b'\n' {
                            newlines += 1;
                        }
                        i += 1;
                    }
                    if newlines >= 2 {
                        cuts.push((run_start, i));
                    }
                } else {
                    i += 1;
                }
            }
        }
        SplitRule::Words => unreachable!("word splitting is handled by the tokenizer"),
    }
    let mut spans = Vec::new();
    let mut cursor = 0;
    for (cut_start, cut_end) in cuts {
        if let Some(s) = trimmed_span(source, start + cursor, start + cut_start) {
            spans.push(s);
        }
        cursor = cut_end;
    }
    if let Some(s) = trimmed_span(source, start + cursor, end) {
        spans.push(s);
    }
    spans
}

fn parse_span(
    source: &str,
    span: (usize, usize),
    level: usize,
    cfg: &LevelConfig,
    tok: &TokenizerConfig,
) -> BlockNode {
    if level == 0 {
        return BlockNode {
            level: 0,
            span,
            cv: None,
            children: Vec::new(),
        };
    }
    let tier = cfg.tier_for_level(level);
    let children = match &tier.split {
        SplitRule::Words => tok
            .token_spans(&source[span.0..span.1])
            .into_iter()
            .map(|r| BlockNode {
                level: 0,
                span: (span.0 + r.start, span.0 + r.end),
                cv: None,
                children: Vec::new(),
            })
            .collect(),
        rule => split_spans(source, span, rule)
            .into_iter()
            .map(|s| parse_span(source, s, level - 1, cfg, tok))
            .collect(),
    };
    BlockNode {
        level,
        span,
        cv: None,
        children,
    }
}

/// Parses `text` into its block hierarchy; no confidence vectors yet.
/// Text with no tokens yields a tree with zero leaves.
pub fn parse_blocks(text: &str, cfg: &LevelConfig, tok: &TokenizerConfig) -> BlockNode {
    parse_span(text, (0, text.len()), cfg.top_level(), cfg, tok)
}

/// Fills in `cv` on every node, bottom-up, and returns the root's vector.
pub fn annotate_tree(model: &Model, node: &mut BlockNode, source: &str, cfg: &LevelConfig) -> ConfidenceVector {
    let dim = model.num_categories();
    let cv = if node.is_leaf() {
        let term = model.tokenizer.normalize(node.text(source));
        model.term_vector(&term)
    } else {
        let child_cvs: Vec<ConfidenceVector> = node
            .children
            .iter_mut()
            .map(|child| annotate_tree(model, child, source, cfg))
            .collect();
        let op = cfg.tier_for_level(node.level).operator;
        op.reduce(child_cvs.iter(), dim)
    };
    node.cv = Some(cv.clone());
    cv
}

/// Classifies `text` as a block at `level` (0 = a single word token) and
/// returns the vector together with the annotated tree.
pub fn classify_at_level(
    model: &Model,
    text: &str,
    cfg: &LevelConfig,
    level: usize,
) -> (ConfidenceVector, BlockNode) {
    if level == 0 {
        let term = model.tokenizer.normalize(text.trim());
        let cv = model.term_vector(&term);
        let node = BlockNode {
            level: 0,
            span: (0, text.len()),
            cv: Some(cv.clone()),
            children: Vec::new(),
        };
        return (cv, node);
    }
    let sub = cfg.at_level(level);
    let mut tree = parse_blocks(text, &sub, &model.tokenizer);
    let cv = annotate_tree(model, &mut tree, text, &sub);
    (cv, tree)
}

/// Classifies `text` as a whole document.
pub fn classify_document(model: &Model, text: &str, cfg: &LevelConfig) -> (ConfidenceVector, BlockNode) {
    classify_at_level(model, text, cfg, cfg.top_level())
}

/// Category selection applied to the document vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// The single highest-valued category (first on ties).
    Argmax,
    /// Every category whose value reaches `(1 - gamma) * max`.
    Band { gamma: f64 },
}

impl SelectionPolicy {
    pub fn band(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Ss3Error::InvalidSelection(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        Ok(SelectionPolicy::Band { gamma })
    }

    /// Selected category indexes. A vector with no positive evidence selects
    /// nothing.
    pub fn select(&self, cv: &ConfidenceVector) -> Vec<usize> {
        let max = cv.max_value();
        if !(max > 0.0) {
            return Vec::new();
        }
        match self {
            SelectionPolicy::Argmax => vec![cv.argmax().expect("non-empty vector")],
            SelectionPolicy::Band { gamma } => {
                let floor = (1.0 - gamma) * max;
                (0..cv.len()).filter(|&i| cv[i] >= floor).collect()
            }
        }
    }
}

/// Full classification result for one input.
#[derive(Debug, Clone)]
pub struct Classification {
    pub selected: Vec<usize>,
    pub cv: ConfidenceVector,
    pub tree: BlockNode,
}

impl Classification {
    /// True when the input carried no evidence at all (zero vector).
    pub fn no_evidence(&self) -> bool {
        self.cv.is_zero()
    }
}

/// Splits, values, reduces and selects. Empty documents produce a zero
/// vector and an empty selection.
pub fn classify(
    model: &Model,
    text: &str,
    cfg: &LevelConfig,
    policy: SelectionPolicy,
) -> Result<Classification> {
    model.ensure_classifiable()?;
    let (cv, tree) = classify_document(model, text, cfg);
    let selected = policy.select(&cv);
    Ok(Classification { selected, cv, tree })
}

/// Running reduction state for the top-level operator: appending a block
/// updates the state in place and yields exactly the vector a full
/// re-classification would produce.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalReducer {
    op: Operator,
    acc: ConfidenceVector,
    count: u64,
}

impl IncrementalReducer {
    pub fn new(op: Operator, dim: usize) -> Self {
        Self {
            op,
            acc: ConfidenceVector::zeros(dim),
            count: 0,
        }
    }

    pub fn push(&mut self, cv: &ConfidenceVector) {
        match self.op {
            Operator::Addition | Operator::Mean => self.acc.add_assign(cv),
            Operator::Maximum => self.acc.max_assign(cv),
        }
        self.count += 1;
    }

    /// The reduced vector over everything pushed so far.
    pub fn current(&self) -> ConfidenceVector {
        if self.op == Operator::Mean && self.count > 0 {
            let mut values = self.acc.clone().into_vec();
            for v in &mut values {
                *v /= self.count as f64;
            }
            return ConfidenceVector::from_vec(values);
        }
        self.acc.clone()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn operator(&self) -> Operator {
        self.op
    }
}

/// Classifies `block_text` as one block directly below the top level and
/// folds it into the running state.
pub fn incremental_append(
    model: &Model,
    reducer: &mut IncrementalReducer,
    block_text: &str,
    cfg: &LevelConfig,
) -> ConfidenceVector {
    let (cv, _) = classify_at_level(model, block_text, cfg, cfg.top_level() - 1);
    reducer.push(&cv);
    reducer.current()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hyperparams, Model};

    fn toy_model() -> Model {
        let mut m = Model::new(Hyperparams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        m.learn("apple apple apple code code browser", "tech").unwrap();
        m.learn("pie pie pie recipe apple", "food").unwrap();
        m
    }

    fn cv(values: &[f64]) -> ConfidenceVector {
        ConfidenceVector::from_vec(values.to_vec())
    }

    #[test]
    fn two_sentences_split_on_dot() {
        let cfg = LevelConfig::default_hierarchy();
        let tok = TokenizerConfig::default();
        let tree = parse_blocks("A. B.", &cfg, &tok);
        assert_eq!(tree.level, 3);
        assert_eq!(tree.children.len(), 1, "one paragraph");
        let para = &tree.children[0];
        assert_eq!(para.children.len(), 2, "two sentences");
        assert_eq!(para.children[0].text("A. B."), "A");
        assert_eq!(para.children[1].text("A. B."), "B");
    }

    #[test]
    fn empty_text_has_zero_leaves() {
        let cfg = LevelConfig::default_hierarchy();
        let tok = TokenizerConfig::default();
        assert_eq!(parse_blocks("", &cfg, &tok).leaf_count(), 0);
        assert_eq!(parse_blocks("?! ...", &cfg, &tok).leaf_count(), 0);
    }

    #[test]
    fn paragraphs_split_on_blank_lines() {
        let cfg = LevelConfig::default_hierarchy();
        let tok = TokenizerConfig::default();
        let text = "one two.\n\nthree four.\n   \nfive";
        let tree = parse_blocks(text, &cfg, &tok);
        assert_eq!(tree.children.len(), 3);
        assert_eq!(tree.leaf_count(), 5);
        // a single newline does not open a new paragraph
        let tree2 = parse_blocks("one\ntwo", &cfg, &tok);
        assert_eq!(tree2.children.len(), 1);
    }

    #[test]
    fn parse_covers_source_and_is_idempotent() {
        let cfg = LevelConfig::default_hierarchy();
        let tok = TokenizerConfig::default();
        let text = "Apples grow. Pears too!\n\nPlums? Yes.";
        let tree = parse_blocks(text, &cfg, &tok);
        // spans nest inside their parents and reconstruct the source
        fn check(node: &BlockNode) {
            for child in &node.children {
                assert!(child.span.0 >= node.span.0 && child.span.1 <= node.span.1);
                check(child);
            }
        }
        check(&tree);
        let again = parse_blocks(text, &cfg, &tok);
        assert_eq!(tree, again);
    }

    #[test]
    fn reduction_matches_worked_example() {
        // two sentence vectors reduced by addition into the document vector
        let s1 = cv(&[0.1, 3.45, 0.1, 0.05]);
        let s2 = cv(&[0.05, 0.2, 1.9, 0.1]);
        let doc = Operator::Addition.reduce([&s1, &s2], 4);
        let expected = [0.15, 3.65, 2.0, 0.15];
        for i in 0..4 {
            assert!((doc[i] - expected[i]).abs() < 1e-12);
        }
        assert_eq!(SelectionPolicy::Argmax.select(&doc), vec![1]);
        // business (2.0) joins once the band is wide enough
        assert_eq!(SelectionPolicy::band(0.46).unwrap().select(&doc), vec![1, 2]);
        assert_eq!(SelectionPolicy::band(0.44).unwrap().select(&doc), vec![1]);
    }

    #[test]
    fn single_word_document_equals_term_vector() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let (doc_cv, _) = classify_document(&m, "apple", &cfg);
        assert_eq!(doc_cv, m.term_vector("apple"));
    }

    #[test]
    fn unseen_words_give_zero_vector_and_empty_selection() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let result = classify(&m, "zeppelin voyage", &cfg, SelectionPolicy::Argmax).unwrap();
        assert!(result.cv.is_zero());
        assert!(result.selected.is_empty());
        assert!(result.no_evidence());
        let empty = classify(&m, "", &cfg, SelectionPolicy::Argmax).unwrap();
        assert!(empty.selected.is_empty());
        assert!(empty.no_evidence());
    }

    #[test]
    fn every_node_is_annotated() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let result = classify(&m, "apple pie. code browser!", &cfg, SelectionPolicy::Argmax).unwrap();
        fn assert_annotated(node: &BlockNode) {
            assert!(node.cv.is_some());
            for c in &node.children {
                assert_annotated(c);
            }
        }
        assert_annotated(&result.tree);
    }

    #[test]
    fn non_leaf_cv_is_operator_of_children() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let result = classify(&m, "apple pie. code browser!", &cfg, SelectionPolicy::Argmax).unwrap();
        fn check(node: &BlockNode, dim: usize, cfg: &LevelConfig) {
            if node.is_leaf() {
                return;
            }
            let op = cfg.tiers()[cfg.tiers().len() - node.level].operator;
            let expected = op.reduce(node.children.iter().map(|c| c.cv()), dim);
            assert_eq!(node.cv(), &expected);
            for c in &node.children {
                check(c, dim, cfg);
            }
        }
        check(&result.tree, 2, &cfg);
    }

    #[test]
    fn incremental_append_matches_batch_for_all_operators() {
        let m = toy_model();
        let doc = "apple pie code. browser recipe apple. pie pie code";
        let sentences = ["apple pie code", "browser recipe apple", "pie pie code"];
        for op in [Operator::Addition, Operator::Maximum, Operator::Mean] {
            let cfg = LevelConfig::sentence_document(op);
            let (batch, _) = classify_document(&m, doc, &cfg);
            let mut reducer = IncrementalReducer::new(op, 2);
            let mut last = ConfidenceVector::zeros(2);
            for s in sentences {
                last = incremental_append(&m, &mut reducer, s, &cfg);
            }
            assert_eq!(batch, last, "operator {op:?}");
        }
    }

    #[test]
    fn append_to_zero_state_equals_block_classification() {
        let m = toy_model();
        let cfg = LevelConfig::sentence_document(Operator::Addition);
        let mut reducer = IncrementalReducer::new(Operator::Addition, 2);
        let got = incremental_append(&m, &mut reducer, "apple pie", &cfg);
        let (alone, _) = classify_at_level(&m, "apple pie", &cfg, 1);
        assert_eq!(got, alone);
    }

    #[test]
    fn level_config_validation() {
        assert!(LevelConfig::new(vec![]).is_err());
        assert!(LevelConfig::new(vec![Tier::new(
            "document",
            SplitRule::Chars(vec!['.']),
            Operator::Addition
        )])
        .is_err());
        assert!(LevelConfig::new(vec![
            Tier::new("document", SplitRule::Words, Operator::Addition),
            Tier::new("sentence", SplitRule::Words, Operator::Addition),
        ])
        .is_err());
    }

    #[test]
    fn band_gamma_validation() {
        assert!(SelectionPolicy::band(0.0).is_ok());
        assert!(SelectionPolicy::band(1.0).is_ok());
        assert!(SelectionPolicy::band(-0.1).is_err());
        assert!(SelectionPolicy::band(1.1).is_err());
    }
}
