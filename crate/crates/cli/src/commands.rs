use crate::args::*;
use serde::Serialize;
use ss3_core::{
    build_explanation, classify, dataset, evaluate, eval::write_report_csv, grid_search,
    render_html, stream::write_trajectory_csv, tune::write_score_table, BlockNode, CvContext,
    Decision, ErrorKind, EvalMode, EvalOptions, Hyperparams, LevelConfig, MetricsReport, Model,
    PolicyKind, PolicyTemplate, SearchSpec, SelectionPolicy, SigmaRefinement, Ss3Error,
    TokenizerConfig,
};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

/// Exit codes: 1 usage, 2 data, 3 internal.
#[derive(Debug)]
pub struct CmdError {
    message: String,
    code: u8,
}

impl CmdError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Ss3Error> for CmdError {
    fn from(err: Ss3Error) -> Self {
        let code = match err.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Internal => 3,
        };
        Self {
            message: err.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(err: std::io::Error) -> Self {
        Self::data(err.to_string())
    }
}

impl From<serde_json::Error> for CmdError {
    fn from(err: serde_json::Error) -> Self {
        Self::data(err.to_string())
    }
}

type CmdResult = Result<(), CmdError>;

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Stream(args) => cmd_stream(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn install_pool<T: Send>(
    jobs: usize,
    f: impl FnOnce() -> Result<T, CmdError> + Send,
) -> Result<T, CmdError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CmdError::usage(format!("cannot build worker pool: {e}")))?;
    pool.install(f)
}

impl PolicyArgs {
    /// Range checks happen when the policy is resolved against the model.
    fn template(&self) -> Result<PolicyTemplate, CmdError> {
        let kind = match self.policy {
            PolicyChoice::Threshold => PolicyKind::Threshold,
            PolicyChoice::Delta => PolicyKind::Composite(vec![
                PolicyKind::Threshold,
                PolicyKind::SlopeRatio {
                    ratio_min: self.ratio_min,
                    min_change: self.min_change,
                },
            ]),
        };
        Ok(PolicyTemplate {
            kind,
            positive_name: self.positive.clone(),
            negative_name: self.negative.clone(),
        })
    }
}

fn load_params(path: &Path) -> Result<Hyperparams, CmdError> {
    #[derive(serde::Deserialize)]
    struct Partial {
        sigma: f64,
        lambda: f64,
        rho: f64,
    }
    let json = fs::read_to_string(path)?;
    let partial: Partial = serde_json::from_str(&json)
        .map_err(|e| CmdError::data(format!("{}: {e}", path.display())))?;
    Ok(Hyperparams::new(partial.sigma, partial.lambda, partial.rho)?)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    if args.corpus.is_empty() && args.merge.is_empty() && args.update.is_none() {
        return Err(CmdError::usage(
            "nothing to do: give --corpus, --merge and/or --update",
        ));
    }

    let hyperparams = match &args.params {
        Some(path) => load_params(path)?,
        None => Hyperparams::new(args.sigma, args.lambda, args.rho)?,
    };

    // starting point: an updated model, the first merged model, or a fresh one
    let mut merge_files = args.merge.iter();
    let mut model = if let Some(path) = &args.update {
        Model::load(path)?
    } else if let Some(path) = merge_files.next() {
        Model::load(path)?
    } else {
        let tokenizer = TokenizerConfig {
            lowercase: !args.no_lowercase,
            min_token_len: args.min_token_len,
        };
        Model::new(hyperparams)?.with_tokenizer(tokenizer)
    };
    for path in merge_files {
        let other = Model::load(path)?;
        model.merge(&other)?;
    }

    let mut learned_docs = 0usize;
    for corpus in &args.corpus {
        let streams = dataset::load_streams(corpus)?;
        let docs = dataset::training_documents(&streams)?;
        if args.update.is_some() && !args.allow_new_categories {
            for (_, label) in &docs {
                if model.category_index(label).is_none() {
                    return Err(CmdError::usage(format!(
                        "corpus introduces unknown category `{label}`; pass --allow-new-categories to accept it"
                    )));
                }
            }
        }
        for (text, label) in docs {
            model.learn(text, label)?;
            learned_docs += 1;
        }
    }
    if !args.corpus.is_empty() && learned_docs == 0 {
        return Err(CmdError::data("corpus contains no documents"));
    }
    model.ensure_classifiable()?;

    model.save(&args.output)?;
    println!("model written to {}", args.output.display());
    for profile in model.categories() {
        println!(
            "  {}: {} terms, {} documents, max frequency {}",
            profile.name,
            profile.vocab_size(),
            profile.doc_count,
            profile.max_freq()
        );
    }
    println!("  vocabulary union: {} terms", model.vocabulary().len());
    Ok(())
}

fn read_input(input: Option<&Path>, text: Option<&str>) -> Result<String, CmdError> {
    if let Some(text) = text {
        return Ok(text.to_string());
    }
    if let Some(path) = input {
        return Ok(fs::read_to_string(path)?);
    }
    let mut buf = String::new();
    std::io::stdin().read_to_string(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct LevelCvs {
    level: usize,
    cvs: Vec<Vec<f64>>,
}

fn collect_level_cvs(tree: &BlockNode) -> Vec<LevelCvs> {
    fn walk(node: &BlockNode, by_level: &mut BTreeMap<usize, Vec<Vec<f64>>>) {
        if let Some(cv) = &node.cv {
            by_level
                .entry(node.level)
                .or_default()
                .push(cv.values().to_vec());
        }
        for child in &node.children {
            walk(child, by_level);
        }
    }
    let mut by_level = BTreeMap::new();
    walk(tree, &mut by_level);
    by_level
        .into_iter()
        .rev()
        .map(|(level, cvs)| LevelCvs { level, cvs })
        .collect()
}

fn cmd_classify(args: ClassifyArgs) -> CmdResult {
    let model = Model::load(&args.model)?;
    let text = read_input(args.input.as_deref(), args.text.as_deref())?;
    let policy = match args.gamma {
        Some(gamma) => SelectionPolicy::band(gamma)?,
        None => SelectionPolicy::Argmax,
    };
    let cfg = LevelConfig::default_hierarchy();
    let result = classify(&model, &text, &cfg, policy)?;

    #[derive(Serialize)]
    struct Output {
        selected: Vec<String>,
        cv: Vec<f64>,
        no_evidence: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        per_level_cvs: Option<Vec<LevelCvs>>,
    }
    let output = Output {
        selected: result
            .selected
            .iter()
            .map(|&i| model.category(i).name.clone())
            .collect(),
        cv: result.cv.values().to_vec(),
        no_evidence: result.no_evidence(),
        per_level_cvs: args.per_level_cvs.then(|| collect_level_cvs(&result.tree)),
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

#[derive(Serialize)]
struct DecisionLine {
    subject_id: String,
    decision: &'static str,
    k: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn cmd_stream(args: StreamArgs) -> CmdResult {
    use rayon::prelude::*;

    let model = Model::load(&args.model)?;
    let streams = dataset::load_streams(&args.data)?;
    let template = args.policy.template()?;
    let policy = template.resolve(&model)?;
    let cfg = LevelConfig::default_hierarchy();

    let runs = install_pool(args.jobs, || {
        streams
            .par_iter()
            .map(|s| ss3_core::run_subject(&model, &s.subject_id, &s.items, &policy, &cfg))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CmdError::from)
    })?;

    if let Some(dir) = &args.trajectory_dir {
        fs::create_dir_all(dir)?;
        for run in &runs {
            // subject ids come from user data; keep them path-safe
            let safe: String = run
                .subject_id
                .chars()
                .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect();
            let file = fs::File::create(dir.join(format!("{safe}.csv")))?;
            write_trajectory_csv(file, &run.trajectory)?;
        }
    }

    let mut lines = String::new();
    for (run, stream) in runs.iter().zip(&streams) {
        let (decision, k) = match run.decision {
            Decision::Positive { k } => ("positive", k),
            Decision::Negative { k } => ("negative", k),
            Decision::Pending => unreachable!("runs are finalized"),
        };
        let line = DecisionLine {
            subject_id: run.subject_id.clone(),
            decision,
            k,
            label: stream.label.clone(),
        };
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
    }
    match &args.decisions {
        Some(path) => fs::write(path, lines)?,
        None => print!("{lines}"),
    }
    Ok(())
}

fn print_report(report: &MetricsReport) {
    println!(
        "subjects: {} (tp {}, fp {}, tn {}, fn {})",
        report.decisions.len(),
        report.confusion.true_pos,
        report.confusion.false_pos,
        report.confusion.true_neg,
        report.confusion.false_neg
    );
    for mean in &report.erde {
        println!("ERDE_{:<3} {:.4}%", mean.o, mean.mean_pct);
    }
    let note = |defined: bool| if defined { "" } else { " (undefined, reported as 0)" };
    println!(
        "F1 {:.4}   precision {:.4}{}   recall {:.4}{}",
        report.f1,
        report.precision,
        note(report.precision_defined),
        report.recall,
        note(report.recall_defined)
    );
    println!("wall time: {:.3}s", report.wall_secs);
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let model = Model::load(&args.model)?;
    let streams = dataset::load_streams(&args.data)?;
    let template = args.policy.template()?;
    let policy = template.resolve(&model)?;
    let cfg = LevelConfig::default_hierarchy();
    let mode = match args.mode {
        ModeChoice::PerPost => EvalMode::PerPost,
        ModeChoice::Chunked => EvalMode::Chunked {
            chunks: args.chunks,
        },
    };
    let opts = EvalOptions {
        mode,
        deadlines: args.o.clone(),
        c_fp: args.costs.cfp,
        c_fn: args.costs.cfn,
        c_tp: args.costs.ctp,
    };
    let report = install_pool(args.jobs, || {
        evaluate(&model, &policy, &streams, &opts, &cfg).map_err(CmdError::from)
    })?;

    print_report(&report);
    if let Some(path) = &args.report_json {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(path) = &args.report_csv {
        let file = fs::File::create(path)?;
        write_report_csv(file, &report)?;
    }
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> CmdResult {
    let streams = dataset::load_streams(&args.data)?;
    let spec = SearchSpec {
        folds: args.folds,
        seed: args.seed,
        objective: args.objective.0,
        sigma: SigmaRefinement {
            center: args.sigma_center,
            levels: args.sigma_levels,
            k_max: 5,
        },
        lambda_grid: args.lambda_grid.clone(),
        rho_grid: args.rho_grid.clone(),
    };
    let ctx = CvContext {
        tokenizer: TokenizerConfig::default(),
        level_config: LevelConfig::default_hierarchy(),
        policy: args.policy.template()?,
        c_fp: args.costs.cfp,
        c_fn: args.costs.cfn,
        c_tp: args.costs.ctp,
    };
    let result = install_pool(args.jobs, || {
        grid_search(&streams, &spec, &ctx).map_err(CmdError::from)
    })?;

    println!(
        "best: sigma {} lambda {} rho {} ({} = {:.6})",
        result.best.sigma,
        result.best.lambda,
        result.best.rho,
        result.best.objective,
        result.best.score
    );
    if let Some(path) = &args.table {
        let file = fs::File::create(path)?;
        write_score_table(file, &result, spec.folds)?;
    }
    if let Some(path) = &args.best {
        fs::write(path, serde_json::to_string_pretty(&result.best)?)?;
    }
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> CmdResult {
    let model = Model::load(&args.model)?;
    let texts: Vec<String> = if let Some(data) = &args.data {
        let subject_id = args.subject.as_deref().expect("clap enforces --subject");
        let streams = dataset::load_streams(data)?;
        let stream = streams
            .into_iter()
            .find(|s| s.subject_id == subject_id)
            .ok_or_else(|| CmdError::data(format!("subject `{subject_id}` not in dataset")))?;
        stream.items
    } else if let Some(input) = &args.input {
        vec![fs::read_to_string(input)?]
    } else {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        vec![buf]
    };

    let focus = model
        .category_index(&args.focus)
        .ok_or_else(|| CmdError::usage(format!("unknown category `{}`", args.focus)))?;
    let cfg = LevelConfig::default_hierarchy();
    let tree = build_explanation(&model, &texts, &cfg)?;
    render_html(&tree, focus, &args.output)?;
    println!("report written to {}", args.output.display());
    if let Some(path) = &args.tree_json {
        fs::write(path, serde_json::to_string_pretty(&tree)?)?;
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CmdResult {
    let model = Model::load(&args.model)?;
    model.ensure_classifiable()?;
    let category = model
        .category_index(&args.category)
        .ok_or_else(|| CmdError::usage(format!("unknown category `{}`", args.category)))?;
    let top = model.top_terms(category, args.top);

    #[derive(Serialize)]
    struct Row {
        term: String,
        gv: f64,
        lv: f64,
        sg: f64,
        sn: f64,
    }
    let rows: Vec<Row> = top
        .into_iter()
        .map(|(term, gv)| {
            let breakdown = model.breakdown(&term);
            Row {
                term,
                gv,
                lv: breakdown.local[category],
                sg: breakdown.significance[category],
                sn: breakdown.sanction[category],
            }
        })
        .collect();

    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<24} {:>10} {:>10} {:>10} {:>10}", "term", "gv", "lv", "sg", "sn")?;
    for row in rows {
        writeln!(
            out,
            "{:<24} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            row.term, row.gv, row.lv, row.sg, row.sn
        )?;
    }
    Ok(())
}
