//! Explanation reports: the classified block tree rendered as nested,
//! highlighted sections (writing > sentence > word), each block's background
//! intensity proportional to its confidence for a focus category relative to
//! its siblings.

use crate::classify::{annotate_tree, parse_blocks, BlockNode, LevelConfig};
use crate::error::{Result, Ss3Error};
use crate::model::Model;
use crate::vector::ConfidenceVector;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// The classified trees of an ordered list of items, with every
/// intermediate confidence vector retained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationTree {
    pub category_names: Vec<String>,
    pub sources: Vec<String>,
    pub items: Vec<BlockNode>,
    /// Sum of the item vectors — identical to the streaming accumulator for
    /// the same items.
    pub acc: ConfidenceVector,
}

/// Classifies every item as a document and keeps the full annotated trees.
pub fn build_explanation(model: &Model, texts: &[String], cfg: &LevelConfig) -> Result<ExplanationTree> {
    model.ensure_classifiable()?;
    let dim = model.num_categories();
    let mut items = Vec::with_capacity(texts.len());
    let mut acc = ConfidenceVector::zeros(dim);
    for text in texts {
        let mut tree = parse_blocks(text, cfg, &model.tokenizer);
        let cv = annotate_tree(model, &mut tree, text, cfg);
        acc.add_assign(&cv);
        items.push(tree);
    }
    Ok(ExplanationTree {
        category_names: model.category_names().iter().map(|s| s.to_string()).collect(),
        sources: texts.to_vec(),
        items,
        acc,
    })
}

/// Flat rendering stream for one item: plain text between blocks plus
/// open/close markers carrying each block's normalized intensity.
#[derive(Debug, Clone, PartialEq)]
pub enum RenderEvent<'a> {
    Open { level: usize, intensity: f64 },
    Text(&'a str),
    Close,
}

fn intensity_of(cv: Option<&ConfidenceVector>, focus: usize, sibling_max: f64) -> f64 {
    if sibling_max <= 0.0 {
        return 0.0;
    }
    cv.map(|cv| cv[focus] / sibling_max).unwrap_or(0.0)
}

fn sibling_max(children: &[BlockNode], focus: usize) -> f64 {
    children
        .iter()
        .filter_map(|c| c.cv.as_ref().map(|cv| cv[focus]))
        .fold(0.0, f64::max)
}

fn push_events<'a>(
    node: &BlockNode,
    source: &'a str,
    focus: usize,
    intensity: f64,
    out: &mut Vec<RenderEvent<'a>>,
) {
    out.push(RenderEvent::Open {
        level: node.level,
        intensity,
    });
    if node.children.is_empty() {
        out.push(RenderEvent::Text(node.text(source)));
    } else {
        let max = sibling_max(&node.children, focus);
        let mut cursor = node.span.0;
        for child in &node.children {
            if child.span.0 > cursor {
                out.push(RenderEvent::Text(&source[cursor..child.span.0]));
            }
            let child_intensity = intensity_of(child.cv.as_ref(), focus, max);
            push_events(child, source, focus, child_intensity, out);
            cursor = child.span.1;
        }
        if node.span.1 > cursor {
            out.push(RenderEvent::Text(&source[cursor..node.span.1]));
        }
    }
    out.push(RenderEvent::Close);
}

impl ExplanationTree {
    /// Normalized intensity of each top-level item (siblings are the items
    /// themselves).
    pub fn item_intensities(&self, focus: usize) -> Vec<f64> {
        let max = sibling_max(&self.items, focus);
        self.items
            .iter()
            .map(|item| intensity_of(item.cv.as_ref(), focus, max))
            .collect()
    }

    /// Rendering stream of item `index`. Concatenating the `Text` events
    /// reproduces the item's source text exactly.
    pub fn render_events(&self, index: usize, focus: usize) -> Vec<RenderEvent<'_>> {
        let mut out = Vec::new();
        let intensity = self.item_intensities(focus)[index];
        push_events(&self.items[index], &self.sources[index], focus, intensity, &mut out);
        out
    }

    /// The text content the report will display for item `index`.
    pub fn rendered_text(&self, index: usize, focus: usize) -> String {
        self.render_events(index, focus)
            .iter()
            .filter_map(|e| match e {
                RenderEvent::Text(t) => Some(*t),
                _ => None,
            })
            .collect()
    }

    /// Multiplies every stored confidence vector by `factor` (intensities
    /// are ratios, so rendering is unchanged).
    pub fn scaled(&self, factor: f64) -> Self {
        fn scale_node(node: &mut BlockNode, factor: f64) {
            if let Some(cv) = &mut node.cv {
                cv.scale(factor);
            }
            for child in &mut node.children {
                scale_node(child, factor);
            }
        }
        let mut out = self.clone();
        for item in &mut out.items {
            scale_node(item, factor);
        }
        out.acc.scale(factor);
        out
    }
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Renders the report as a self-contained HTML string.
pub fn render_html_string(tree: &ExplanationTree, focus: usize) -> Result<String> {
    if focus >= tree.category_names.len() {
        return Err(Ss3Error::UnknownCategory(format!("category index {focus}")));
    }
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(
        html,
        "<title>Confidence report: {}</title>",
        escape_html(&tree.category_names[focus])
    );
    html.push_str(
        "<style>\n\
         body { font-family: sans-serif; max-width: 56em; margin: 2em auto; }\n\
         .item { border: 1px solid #ccc; border-radius: 4px; padding: 0.8em; margin: 0.8em 0; }\n\
         .item h3 { margin: 0 0 0.5em 0; font-size: 0.9em; color: #555; }\n\
         span.block { border-radius: 2px; }\n\
         </style>\n</head>\n<body>\n",
    );
    let _ = write!(
        html,
        "<h1>Confidence for <em>{}</em></h1>\n<p>{} item(s); accumulated value {:.4}.</p>\n",
        escape_html(&tree.category_names[focus]),
        tree.items.len(),
        tree.acc[focus]
    );
    for (i, _) in tree.items.iter().enumerate() {
        let _ = write!(html, "<div class=\"item\">\n<h3>Item {}</h3>\n<p>", i + 1);
        for event in tree.render_events(i, focus) {
            match event {
                RenderEvent::Open { level, intensity } => {
                    let _ = write!(
                        html,
                        "<span class=\"block level{}\" style=\"background: rgba(46, 160, 67, {:.4})\">",
                        level,
                        // full intensity stays readable
                        intensity * 0.8
                    );
                }
                RenderEvent::Text(text) => html.push_str(&escape_html(text)),
                RenderEvent::Close => html.push_str("</span>"),
            }
        }
        html.push_str("</p>\n</div>\n");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html)
}

/// Writes the HTML report to `out_path`.
pub fn render_html(tree: &ExplanationTree, focus: usize, out_path: &Path) -> Result<()> {
    let html = render_html_string(tree, focus)?;
    std::fs::write(out_path, html)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::LevelConfig;
    use crate::model::{Hyperparams, Model};

    fn toy_model() -> Model {
        let mut m = Model::new(Hyperparams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        m.learn("p p p p", "positive").unwrap();
        m.learn("n n n n", "negative").unwrap();
        m
    }

    fn texts(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_word_tree_has_full_depth_and_constant_cv() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let tree = build_explanation(&m, &texts(&["p"]), &cfg).unwrap();
        // document > paragraph > sentence > word, all carrying gv("p")
        let expected = m.term_vector("p");
        let mut node = &tree.items[0];
        let mut depth = 1;
        loop {
            assert_eq!(node.cv.as_ref().unwrap(), &expected);
            if node.children.is_empty() {
                break;
            }
            assert_eq!(node.children.len(), 1);
            node = &node.children[0];
            depth += 1;
        }
        assert_eq!(depth, 4);
        assert_eq!(tree.acc, expected);
    }

    #[test]
    fn zero_evidence_means_zero_intensity() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let tree = build_explanation(&m, &texts(&["unknown words here", "more unknown"]), &cfg).unwrap();
        let pos = 0;
        assert!(tree.item_intensities(pos).iter().all(|&i| i == 0.0));
        for i in 0..2 {
            for event in tree.render_events(i, pos) {
                if let RenderEvent::Open { intensity, .. } = event {
                    assert_eq!(intensity, 0.0);
                }
            }
        }
    }

    #[test]
    fn maximal_sibling_gets_intensity_one() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let tree = build_explanation(&m, &texts(&["n", "p p", "p"]), &cfg).unwrap();
        let pos = m.category_index("positive").unwrap();
        let intensities = tree.item_intensities(pos);
        assert_eq!(intensities[1], 1.0);
        assert!(intensities[0] < 1.0);
        assert!(intensities.iter().all(|&i| (0.0..=1.0).contains(&i)));
    }

    #[test]
    fn rendered_text_round_trips_source() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let sources = texts(&[
            "p n p. Unknown words, too!\n\nSecond paragraph with p?",
            "  leading space, trailing dots...  ",
            "",
        ]);
        let tree = build_explanation(&m, &sources, &cfg).unwrap();
        for (i, source) in sources.iter().enumerate() {
            assert_eq!(&tree.rendered_text(i, 0), source);
        }
    }

    #[test]
    fn intensities_are_scale_free() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let tree = build_explanation(&m, &texts(&["p n p. n n p", "p p"]), &cfg).unwrap();
        let pos = m.category_index("positive").unwrap();
        // a power of two scales every float exactly, so intensities must be
        // bit-identical; an arbitrary factor stays within rounding
        let scaled = tree.scaled(4.0);
        for i in 0..2 {
            assert_eq!(tree.render_events(i, pos), scaled.render_events(i, pos));
        }
        let scaled3 = tree.scaled(3.0);
        for i in 0..2 {
            for (a, b) in tree.render_events(i, pos).iter().zip(scaled3.render_events(i, pos)) {
                if let (
                    RenderEvent::Open { intensity: ia, .. },
                    RenderEvent::Open { intensity: ib, .. },
                ) = (a, &b)
                {
                    assert!((ia - ib).abs() <= 1e-12 * ia.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn html_escapes_and_contains_source() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let tree = build_explanation(&m, &texts(&["p < n & \"q\""]), &cfg).unwrap();
        let html = render_html_string(&tree, 0).unwrap();
        // the inter-word gaps are single text nodes and must arrive escaped
        assert!(html.contains(" &lt; "));
        assert!(html.contains(" &amp; &quot;"));
        assert!(html.ends_with("</html>\n"));
        assert!(html.starts_with("<!DOCTYPE html>"));
        assert!(render_html_string(&tree, 99).is_err());
    }

    #[test]
    fn render_html_writes_file_and_rejects_bad_path() {
        let m = toy_model();
        let cfg = LevelConfig::default_hierarchy();
        let tree = build_explanation(&m, &texts(&["p n"]), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.html");
        render_html(&tree, 0, &path).unwrap();
        assert!(path.exists());
        let missing = dir.path().join("no-such-dir").join("report.html");
        assert!(render_html(&tree, 0, &missing).is_err());
    }
}
