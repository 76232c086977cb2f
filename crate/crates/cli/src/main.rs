//! `agnosto` — synth → train → score → eval pipelines with manifests.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 I/O or
//! runtime error. Diagnostics go to stderr; data goes to files only.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agnosto_core::data::{
    apply_protocol, generate_synthetic, load_idx, Dataset, Phase, SplitKind, SplitProtocol, SynthConfig,
};
use agnosto_core::evaluation::{
    accuracy_vs_confidence, ccr_at_fpr, magnitude_histogram, oscr, pr_auc, read_scores_csv, split_statistics,
    write_scores_csv, ScoreMode, ScoreRecord,
};
use agnosto_core::losses::{LossSpec, ObjectosphereParams};
use agnosto_core::network::{Activation, Network};
use agnosto_core::plot::{Plot, Series};
use agnosto_core::training::{cross_class_validate, parse_loss, score_dataset, train, TrainConfig};
use agnosto_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agnosto", version, about = "Open-set recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-blob dataset.
    Synth(SynthArgs),
    /// Convert IDX image/label files into a dataset under a split protocol.
    ImportIdx(ImportArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Score a dataset split with a trained model.
    Score(ScoreArgs),
    /// Compute metrics and plots from one or more score files.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 3)]
    bg_classes: usize,
    #[arg(long, default_value_t = 3)]
    uu_classes: usize,
    #[arg(long, default_value_t = 1000)]
    per_class: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, env = "AGNOSTO_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long)]
    train_images: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    #[arg(long)]
    test_images: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    /// Known classes (default 0-4).
    #[arg(long, value_delimiter = ',')]
    known: Option<Vec<usize>>,
    /// Background classes used in training (default 5-7).
    #[arg(long, value_delimiter = ',')]
    known_unknown: Option<Vec<usize>>,
    /// Classes seen only at test time (default 8-9).
    #[arg(long, value_delimiter = ',')]
    unknown_unknown: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Softmax,
    Background,
    Entropic,
    Objectosphere,
}

impl LossArg {
    fn name(self) -> &'static str {
        match self {
            LossArg::Softmax => "softmax",
            LossArg::Background => "background",
            LossArg::Entropic => "entropic",
            LossArg::Objectosphere => "objectosphere",
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `key = value` training configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    bg_fraction: Option<f64>,
    /// Comma-separated hidden layer widths (empty for none).
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    feature_activation: Option<String>,
    /// Give hidden and feature layers bias terms (off by default).
    #[arg(long)]
    hidden_bias: bool,
    #[arg(long)]
    logit_bias: bool,
    #[arg(long, env = "AGNOSTO_SEED")]
    seed: Option<u64>,
    /// Select λ and ξ by cross-class validation before the final fit.
    #[arg(long)]
    cross_validate: bool,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    xi_grid: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Train,
    Test,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    phase: PhaseArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Metric {
    Oscr,
    CcrTable,
    AccConf,
    PrAuc,
    Stats,
    Hist,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Oscr => "oscr",
            Metric::CcrTable => "ccr-table",
            Metric::AccConf => "acc-conf",
            Metric::PrAuc => "pr-auc",
            Metric::Stats => "stats",
            Metric::Hist => "hist",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Softmax,
    Scaled,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnknownsArg {
    All,
    KnownUnknown,
    UnknownUnknown,
}

impl UnknownsArg {
    fn kinds(self) -> BTreeSet<SplitKind> {
        match self {
            UnknownsArg::All => [SplitKind::KnownUnknown, SplitKind::UnknownUnknown].into(),
            UnknownsArg::KnownUnknown => [SplitKind::KnownUnknown].into(),
            UnknownsArg::UnknownUnknown => [SplitKind::UnknownUnknown].into(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            UnknownsArg::All => "all",
            UnknownsArg::KnownUnknown => "known_unknown",
            UnknownsArg::UnknownUnknown => "unknown_unknown",
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Score files; several files are overlaid with their file names as legend.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    scores: Vec<PathBuf>,
    #[arg(long, value_enum)]
    metric: Metric,
    #[arg(long, value_enum, default_value = "softmax")]
    score_mode: ModeArg,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1")]
    fpr_targets: Vec<f64>,
    /// Logarithmic FPR axis for OSCR plots.
    #[arg(long)]
    log_x: bool,
    /// Which test splits count as unknown for OSCR / CCR.
    #[arg(long, value_enum, default_value = "unknown-unknown")]
    unknowns: UnknownsArg,
    /// Confidence thresholds for acc-conf (default 0, 0.05, ..., 1).
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Positive split for pr-auc.
    #[arg(long, default_value = "known")]
    positive: String,
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn io_context(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(io_context(path))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(io_context(path))
}

fn prepare_out(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(io_context(dir))
}

/// Data errors carry the file they came from.
fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let msg = format!("{}: {e}", path.display());
        if e.is_usage() {
            Failure::Usage(msg)
        } else {
            Failure::Runtime(msg)
        }
    }
}

struct Manifest(BTreeMap<String, String>);

impl Manifest {
    fn new(command: &str) -> Self {
        let mut m = BTreeMap::new();
        m.insert("command".into(), command.into());
        m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        Manifest(m)
    }

    fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.insert(key.into(), value.to_string());
        self
    }

    fn write(&self, dir: &Path) -> CmdResult {
        let mut s = String::new();
        for (k, v) in &self.0 {
            s.push_str(&format!("{k} = {v}\n"));
        }
        write_text(&dir.join("manifest.txt"), &s)
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

// ---------------------------------------------------------------------------

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let cfg = SynthConfig {
        num_known: a.classes,
        num_known_unknown: a.bg_classes,
        num_unknown_unknown: a.uu_classes,
        samples_per_class: a.per_class,
        dim: a.dim,
        seed: a.seed,
    };
    let dataset = generate_synthetic(&cfg)?;
    prepare_out(&a.out)?;
    write_text(&a.out.join("dataset.csv"), &dataset.to_csv())?;
    Manifest::new("synth")
        .set("classes", a.classes)
        .set("bg_classes", a.bg_classes)
        .set("uu_classes", a.uu_classes)
        .set("per_class", a.per_class)
        .set("dim", a.dim)
        .set("seed", a.seed)
        .set("output.dataset", "dataset.csv")
        .set("samples", dataset.len())
        .write(&a.out)
}

fn cmd_import_idx(a: ImportArgs) -> CmdResult {
    let default = SplitProtocol::mnist_default();
    let protocol = SplitProtocol {
        known: a.known.map_or(default.known, |v| v.into_iter().collect()),
        known_unknown: a.known_unknown.map_or(default.known_unknown, |v| v.into_iter().collect()),
        unknown_unknown: a.unknown_unknown.map_or(default.unknown_unknown, |v| v.into_iter().collect()),
    };
    let load = |imgs: &Path, labels: &Path| load_idx(imgs, labels).map_err(in_file(imgs));
    let mut raw = load(&a.train_images, &a.train_labels)?.into_raw(Phase::Train);
    raw.extend(load(&a.test_images, &a.test_labels)?.into_raw(Phase::Test));
    let dataset = apply_protocol(&raw, &protocol)?;
    prepare_out(&a.out)?;
    write_text(&a.out.join("dataset.csv"), &dataset.to_csv())?;
    let set = |s: &BTreeSet<usize>| join(&s.iter().copied().collect::<Vec<_>>());
    Manifest::new("import-idx")
        .set("input.train_images", path_str(&a.train_images))
        .set("input.train_labels", path_str(&a.train_labels))
        .set("input.test_images", path_str(&a.test_images))
        .set("input.test_labels", path_str(&a.test_labels))
        .set("protocol.known", set(&protocol.known))
        .set("protocol.known_unknown", set(&protocol.known_unknown))
        .set("protocol.unknown_unknown", set(&protocol.unknown_unknown))
        .set("output.dataset", "dataset.csv")
        .set("samples", dataset.len())
        .write(&a.out)
}

fn resolve_train_config(a: &TrainArgs, dataset: &Dataset) -> Result<TrainConfig, Failure> {
    let text = match &a.config {
        Some(p) => Some(read_text(p)?),
        None => None,
    };
    // the loss decides defaults for the output count and background mix,
    // so settle it first: flag > config file > objectosphere
    let loss_name = match (a.loss, &text) {
        (Some(l), _) => l.name().to_string(),
        (None, Some(t)) => {
            let mut probe = TrainConfig::new(LossSpec::Softmax, dataset);
            probe.apply_text(t).map_err(in_file(a.config.as_deref().unwrap()))?;
            probe.loss.name().to_string()
        }
        (None, None) => "objectosphere".to_string(),
    };
    let loss = parse_loss(&loss_name, ObjectosphereParams::default())?;
    let mut cfg = TrainConfig::new(loss, dataset);
    if let Some(t) = &text {
        cfg.apply_text(t).map_err(in_file(a.config.as_deref().unwrap()))?;
        cfg.loss = match cfg.loss {
            LossSpec::Objectosphere(p) => parse_loss(&loss_name, p)?,
            _ => loss,
        };
    }
    if a.lambda.is_some() || a.xi.is_some() {
        match &mut cfg.loss {
            LossSpec::Objectosphere(p) => {
                p.lambda = a.lambda.unwrap_or(p.lambda);
                p.xi = a.xi.unwrap_or(p.xi);
            }
            other => {
                return Err(usage(format!("--lambda/--xi apply to the objectosphere loss, not {}", other.name())))
            }
        }
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = a.bg_fraction {
        cfg.background_fraction = v;
    }
    if let Some(s) = &a.hidden {
        cfg.network.hidden_dims = if s.trim().is_empty() {
            Vec::new()
        } else {
            s.split(',')
                .map(|d| d.trim().parse().map_err(|_| usage(format!("bad --hidden width `{d}`"))))
                .collect::<Result<_, _>>()?
        };
    }
    if let Some(v) = a.feature_dim {
        cfg.network.feature_dim = v;
    }
    if let Some(s) = &a.activation {
        cfg.network.activation = Activation::parse(s)?;
    }
    if let Some(s) = &a.feature_activation {
        cfg.network.feature_activation = Activation::parse(s)?;
    }
    if a.hidden_bias {
        cfg.network.hidden_bias = true;
    }
    if a.logit_bias {
        cfg.network.logit_bias = true;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    // shape follows the data and the loss
    cfg.network.input_dim = dataset.dim();
    cfg.network.num_logits = cfg.loss.num_logits(dataset.num_known());
    cfg.validate(dataset.num_known())?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let dataset = Dataset::load_csv(&a.data).map_err(in_file(&a.data))?;
    let mut cfg = resolve_train_config(&a, &dataset)?;
    let mut manifest = Manifest::new("train");
    manifest.set("input.data", path_str(&a.data));
    if let Some(p) = &a.config {
        manifest.set("input.config", path_str(p));
    }
    prepare_out(&a.out)?;

    let cross_validate = a.cross_validate || a.lambda_grid.is_some() || a.xi_grid.is_some();
    if cross_validate {
        let lambdas = a.lambda_grid.clone().unwrap_or_else(|| vec![0.01, 0.05]);
        let xis = a.xi_grid.clone().unwrap_or_else(|| vec![5.0, 10.0]);
        let cv = cross_class_validate(&cfg, &dataset, &lambdas, &xis)?;
        write_text(&a.out.join("cv.csv"), &cv.to_csv())?;
        eprintln!("cross-class validation selected lambda = {}, xi = {}", cv.best.lambda, cv.best.xi);
        cfg.loss = LossSpec::Objectosphere(cv.best);
        manifest
            .set("cv.lambda_grid", join(&lambdas))
            .set("cv.xi_grid", join(&xis))
            .set("cv.train_background_labels", join(&cv.train_labels))
            .set("cv.holdout_background_labels", join(&cv.holdout_labels))
            .set("output.cv", "cv.csv");
    }

    let (net, report) = train(&cfg, &dataset)?;
    eprintln!(
        "trained {} for {} epochs in {:.2?}; final train accuracy {:.4}",
        cfg.loss.name(),
        cfg.epochs,
        report.wall_clock,
        report.final_train_accuracy
    );
    write_text(&a.out.join("model.txt"), &net.to_text())?;
    write_text(&a.out.join("report.csv"), &report.to_csv())?;
    write_text(&a.out.join("config.txt"), &cfg.to_text())?;
    for (k, v) in cfg.entries() {
        manifest.set(&format!("config.{k}"), v);
    }
    manifest
        .set("final_train_accuracy", report.final_train_accuracy)
        .set("output.model", "model.txt")
        .set("output.report", "report.csv")
        .set("output.config", "config.txt")
        .write(&a.out)
}

fn cmd_score(a: ScoreArgs) -> CmdResult {
    let net = Network::load(&a.model).map_err(in_file(&a.model))?;
    let dataset = Dataset::load_csv(&a.data).map_err(in_file(&a.data))?;
    let phase = match a.phase {
        PhaseArg::Train => Phase::Train,
        PhaseArg::Test => Phase::Test,
    };
    let records = score_dataset(&net, &dataset, phase)?;
    prepare_out(&a.out)?;
    write_text(&a.out.join("scores.csv"), &write_scores_csv(&records))?;
    Manifest::new("score")
        .set("input.model", path_str(&a.model))
        .set("input.data", path_str(&a.data))
        .set("phase", phase.name())
        .set("records", records.len())
        .set("output.scores", "scores.csv")
        .write(&a.out)
}

/// Legend labels: file stems, or the full paths when stems collide.
fn labels_for(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| p.file_stem().map_or_else(|| path_str(p), |s| s.to_string_lossy().into_owned()))
        .collect();
    let unique: BTreeSet<&String> = stems.iter().collect();
    if unique.len() == stems.len() {
        stems
    } else {
        paths.iter().map(|p| path_str(p)).collect()
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "N/A".into())
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let mode = match a.score_mode {
        ModeArg::Softmax => ScoreMode::Softmax,
        ModeArg::Scaled => ScoreMode::Scaled,
    };
    let labels = labels_for(&a.scores);
    let mut inputs: Vec<(String, Vec<ScoreRecord>)> = Vec::new();
    for (path, label) in a.scores.iter().zip(&labels) {
        let records = read_scores_csv(&read_text(path)?).map_err(in_file(path))?;
        if records.is_empty() {
            return Err(usage(format!("{}: score file has no records", path.display())));
        }
        inputs.push((label.clone(), records));
    }
    prepare_out(&a.out)?;
    let mut manifest = Manifest::new("eval");
    manifest
        .set("metric", a.metric.name())
        .set("score_mode", if mode == ScoreMode::Scaled { "scaled" } else { "softmax" })
        .set("unknowns", a.unknowns.name())
        .set("inputs", join(&a.scores.iter().map(|p| path_str(p)).collect::<Vec<_>>()))
        .set("labels", join(&labels));
    let unknown = a.unknowns.kinds();
    let mut outputs = Vec::new();

    match a.metric {
        Metric::Oscr => {
            let mut series = Vec::new();
            for (label, records) in &inputs {
                let curve = oscr(records, &unknown, mode)?;
                let name = format!("oscr_{}.csv", file_safe(label));
                write_text(&a.out.join(&name), &curve.to_csv())?;
                outputs.push(name);
                // θ runs downward, so FPR/CCR are non-decreasing along the list
                series.push(Series {
                    label: label.clone(),
                    points: curve.points.iter().map(|p| (p.fpr, p.ccr)).collect(),
                });
            }
            let plot = Plot {
                title: "Open-Set Classification Rate".into(),
                x_label: "False Positive Rate".into(),
                y_label: "Correct Classification Rate".into(),
                log_x: a.log_x,
                series,
            };
            write_text(&a.out.join("oscr.svg"), &plot.to_svg()?)?;
            outputs.push("oscr.svg".into());
            manifest.set("log_x", a.log_x);
        }
        Metric::CcrTable => {
            for t in &a.fpr_targets {
                if !(t.is_finite() && *t > 0.0 && *t <= 1.0) {
                    return Err(usage(format!("FPR target {t} outside (0, 1]")));
                }
            }
            let mut s = String::from("algorithm,unknowns");
            for t in &a.fpr_targets {
                s.push_str(&format!(",{t:e}"));
            }
            s.push('\n');
            for (label, records) in &inputs {
                let curve = oscr(records, &unknown, mode)?;
                let vals = ccr_at_fpr(&curve, &a.fpr_targets, curve.num_unknown)?;
                s.push_str(&format!("{label},{}", curve.num_unknown));
                for v in vals {
                    s.push_str(&format!(",{}", fmt_opt(v)));
                }
                s.push('\n');
            }
            write_text(&a.out.join("ccr-table.csv"), &s)?;
            outputs.push("ccr-table.csv".into());
            manifest.set("fpr_targets", join(&a.fpr_targets));
        }
        Metric::AccConf => {
            let thresholds = a
                .thresholds
                .clone()
                .unwrap_or_else(|| (0..=20).map(|i| i as f64 / 20.0).collect());
            let mut series = Vec::new();
            for (label, records) in &inputs {
                let pts = accuracy_vs_confidence(records, &thresholds, mode)?;
                let mut s = String::from("threshold,accuracy,admitted\n");
                for p in &pts {
                    s.push_str(&format!("{},{},{}\n", p.threshold, fmt_opt(p.accuracy), p.admitted));
                }
                let name = format!("acc-conf_{}.csv", file_safe(label));
                write_text(&a.out.join(&name), &s)?;
                outputs.push(name);
                series.push(Series {
                    label: label.clone(),
                    points: pts.iter().filter_map(|p| p.accuracy.map(|acc| (p.threshold, acc))).collect(),
                });
            }
            let plot = Plot {
                title: "Accuracy vs confidence".into(),
                x_label: "Confidence threshold".into(),
                y_label: "Accuracy".into(),
                log_x: false,
                series,
            };
            write_text(&a.out.join("acc-conf.svg"), &plot.to_svg()?)?;
            outputs.push("acc-conf.svg".into());
            manifest.set("thresholds", join(&thresholds));
        }
        Metric::PrAuc => {
            let positive =
                SplitKind::parse(&a.positive).ok_or_else(|| usage(format!("unknown split `{}`", a.positive)))?;
            let mut s = String::from("algorithm,positive,pr_auc,pr_auc_monotonized\n");
            for (label, records) in &inputs {
                let raw = pr_auc(records, positive, false, mode)?;
                let mono = pr_auc(records, positive, true, mode)?;
                s.push_str(&format!("{label},{},{raw},{mono}\n", positive.name()));
            }
            write_text(&a.out.join("pr-auc.csv"), &s)?;
            outputs.push("pr-auc.csv".into());
            manifest.set("positive", positive.name());
        }
        Metric::Stats => {
            let mut s = String::from("algorithm,split,count,entropy_mean,entropy_std,magnitude_mean,magnitude_std\n");
            for (label, records) in &inputs {
                for r in split_statistics(records)? {
                    s.push_str(&format!(
                        "{label},{},{},{},{},{},{}\n",
                        r.kind.name(),
                        r.count,
                        r.entropy_mean,
                        r.entropy_std,
                        r.magnitude_mean,
                        r.magnitude_std
                    ));
                }
            }
            write_text(&a.out.join("stats.csv"), &s)?;
            outputs.push("stats.csv".into());
        }
        Metric::Hist => {
            for (label, records) in &inputs {
                let h = magnitude_histogram(records, a.bins)?;
                let mut s = String::from("bin_lo,bin_hi");
                for (kind, _) in &h.splits {
                    s.push_str(&format!(",{}", kind.name()));
                }
                s.push('\n');
                for b in 0..a.bins {
                    s.push_str(&format!("{},{}", h.edges[b], h.edges[b + 1]));
                    for (_, mass) in &h.splits {
                        s.push_str(&format!(",{}", mass[b]));
                    }
                    s.push('\n');
                }
                let stem = format!("hist_{}", file_safe(label));
                write_text(&a.out.join(format!("{stem}.csv")), &s)?;
                let series = h
                    .splits
                    .iter()
                    .map(|(kind, mass)| Series {
                        label: kind.name().to_string(),
                        // step outline over the shared edges
                        points: mass
                            .iter()
                            .enumerate()
                            .flat_map(|(b, &m)| [(h.edges[b], m), (h.edges[b + 1], m)])
                            .collect(),
                    })
                    .collect();
                let plot = Plot {
                    title: format!("Feature magnitudes: {label}"),
                    x_label: "||F(x)||".into(),
                    y_label: "Fraction of samples".into(),
                    log_x: false,
                    series,
                };
                write_text(&a.out.join(format!("{stem}.svg")), &plot.to_svg()?)?;
                outputs.push(format!("{stem}.csv"));
                outputs.push(format!("{stem}.svg"));
            }
            manifest.set("bins", a.bins);
        }
    }
    manifest.set("outputs", join(&outputs)).write(&a.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::ImportIdx(a) => cmd_import_idx(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
