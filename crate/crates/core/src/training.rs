//! Momentum-SGD training loop, test-set scoring and cross-class validation
//! of the objectosphere hyperparameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{batches, Dataset, Phase, Role, Sample, SplitKind, SplitTag};
use crate::error::{Error, Result};
use crate::evaluation::{ccr_at_fpr, oscr, ScoreMode, ScoreRecord};
use crate::losses::{LossSpec, ObjectosphereParams, Target};
use crate::network::{Activation, GradientSet, MomentumState, Network, NetworkConfig};
use crate::numeric::{argmax, l2_norm, softmax};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub background_fraction: f64,
    pub seed: u64,
    pub network: NetworkConfig,
}

pub const DEFAULT_BACKGROUND_FRACTION: f64 = 0.5;

impl TrainConfig {
    /// Defaults for `loss` with the network sized to `dataset`.
    pub fn new(loss: LossSpec, dataset: &Dataset) -> Self {
        TrainConfig {
            loss,
            epochs: 30,
            batch_size: 64,
            lr: 0.01,
            momentum: 0.9,
            background_fraction: if loss.uses_background() {
                DEFAULT_BACKGROUND_FRACTION
            } else {
                0.0
            },
            seed: 0,
            network: NetworkConfig {
                input_dim: dataset.dim(),
                num_logits: loss.num_logits(dataset.num_known()),
                ..NetworkConfig::default()
            },
        }
    }

    /// Checks the config against `num_known` known classes.
    pub fn validate(&self, num_known: usize) -> Result<()> {
        self.network.validate()?;
        let expected = self.loss.num_logits(num_known);
        if self.network.num_logits != expected {
            return Err(Error::config(format!(
                "{} loss with {num_known} known classes needs {expected} logits, network has {}",
                self.loss.name(),
                self.network.num_logits
            )));
        }
        match self.loss {
            LossSpec::EntropicOpenSet | LossSpec::Objectosphere(_) if self.network.logit_bias => {
                return Err(Error::config(format!(
                    "{} loss requires a logit layer without bias",
                    self.loss.name()
                )));
            }
            LossSpec::EntropicOpenSet | LossSpec::Objectosphere(_) if num_known < 2 => {
                return Err(Error::config("entropic losses need at least two known classes"));
            }
            LossSpec::Softmax if self.background_fraction != 0.0 => {
                return Err(Error::config(
                    "softmax baseline takes no background samples (background fraction must be 0)",
                ));
            }
            LossSpec::Objectosphere(p) => p.validate()?,
            _ => {}
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(Error::config("background fraction must be in [0, 1)"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("learning rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        Ok(())
    }

    /// Flat key/value view; `to_text` writes it sorted by key.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("loss", self.loss.name().to_string());
        if let LossSpec::Objectosphere(p) = self.loss {
            put("lambda", p.lambda.to_string());
            put("xi", p.xi.to_string());
        }
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("lr", self.lr.to_string());
        put("momentum", self.momentum.to_string());
        put("background_fraction", self.background_fraction.to_string());
        put("seed", self.seed.to_string());
        let n = &self.network;
        put("input_dim", n.input_dim.to_string());
        put(
            "hidden_dims",
            n.hidden_dims.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        put("feature_dim", n.feature_dim.to_string());
        put("num_logits", n.num_logits.to_string());
        put("hidden_bias", n.hidden_bias.to_string());
        put("logit_bias", n.logit_bias.to_string());
        put("activation", n.activation.name().to_string());
        put("feature_activation", n.feature_activation.name().to_string());
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored. Recognised keys are those produced by
    /// [`TrainConfig::entries`]; `input_dim` and `num_logits` may be omitted.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut loss_name: Option<String> = None;
        let mut params = match self.loss {
            LossSpec::Objectosphere(p) => p,
            _ => ObjectosphereParams::default(),
        };
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(n, "expected `key = value`"))?;
            fn num<T: std::str::FromStr>(n: usize, k: &str, v: &str) -> Result<T> {
                v.parse().map_err(|_| Error::parse(n, format!("bad value `{v}` for `{k}`")))
            }
            match k {
                "loss" => loss_name = Some(v.to_string()),
                "lambda" => params.lambda = num(n, k, v)?,
                "xi" => params.xi = num(n, k, v)?,
                "epochs" => self.epochs = num(n, k, v)?,
                "batch_size" => self.batch_size = num(n, k, v)?,
                "lr" => self.lr = num(n, k, v)?,
                "momentum" => self.momentum = num(n, k, v)?,
                "background_fraction" => self.background_fraction = num(n, k, v)?,
                "seed" => self.seed = num(n, k, v)?,
                "input_dim" => self.network.input_dim = num(n, k, v)?,
                "hidden_dims" => {
                    self.network.hidden_dims = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',').map(|d| num(n, k, d.trim())).collect::<Result<_>>()?
                    }
                }
                "feature_dim" => self.network.feature_dim = num(n, k, v)?,
                "num_logits" => self.network.num_logits = num(n, k, v)?,
                "hidden_bias" => self.network.hidden_bias = num(n, k, v)?,
                "logit_bias" => self.network.logit_bias = num(n, k, v)?,
                "activation" => {
                    self.network.activation = Activation::parse(v).map_err(|e| Error::parse(n, e.to_string()))?
                }
                "feature_activation" => {
                    self.network.feature_activation =
                        Activation::parse(v).map_err(|e| Error::parse(n, e.to_string()))?
                }
                _ => return Err(Error::parse(n, format!("unknown key `{k}`"))),
            }
        }
        let name = loss_name.unwrap_or_else(|| self.loss.name().to_string());
        self.loss = parse_loss(&name, params)?;
        Ok(())
    }
}

pub fn parse_loss(name: &str, params: ObjectosphereParams) -> Result<LossSpec> {
    match name {
        "softmax" => Ok(LossSpec::Softmax),
        "background" => Ok(LossSpec::BackgroundClass),
        "entropic" => Ok(LossSpec::EntropicOpenSet),
        "objectosphere" => Ok(LossSpec::Objectosphere(params)),
        _ => Err(Error::config(format!("unknown loss `{name}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    /// Mean loss over the background samples only, when any were drawn.
    pub mean_background_loss: Option<f64>,
    /// Closed-set accuracy on the known training samples after the epoch.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub final_train_accuracy: f64,
    pub wall_clock: Duration,
}

impl TrainReport {
    /// Deterministic CSV; wall-clock time is intentionally not included.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,mean_background_loss,train_accuracy\n");
        for (i, e) in self.epochs.iter().enumerate() {
            let bg = e.mean_background_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", i + 1, e.mean_loss, bg, e.train_accuracy);
        }
        s
    }
}

fn target_of(sample: &Sample) -> Result<Target> {
    match sample.tag.role {
        Role::Known(c) => Ok(Target::KnownClass(c)),
        Role::KnownUnknown => Ok(Target::KnownUnknown),
        Role::UnknownUnknown => Err(Error::invalid("unknown-unknown sample reached training")),
    }
}

fn known_train_accuracy(net: &Network, dataset: &Dataset) -> Result<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for s in dataset.iter_phase(Phase::Train) {
        if let Role::Known(c) = s.tag.role {
            let t = net.forward(&s.features)?;
            total += 1;
            // background output excluded from the argmax
            if argmax(&t.logits()[..dataset.num_known()]) == Some(c) {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Trains a fresh network initialised from `config.seed`.
///
/// Each batch gradient is the equal-weight mean of per-sample gradients; the
/// objectosphere magnitude term enters backpropagation through the direct
/// feature-gradient path.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(Network, TrainReport)> {
    config.validate(dataset.num_known())?;
    if config.network.input_dim != dataset.dim() {
        return Err(Error::config(format!(
            "network input_dim {} does not match dataset dim {}",
            config.network.input_dim,
            dataset.dim()
        )));
    }
    let start = Instant::now();
    let mut net = Network::init(&config.network, config.seed)?;
    let mut state = MomentumState::new(&net);
    let mut epochs = Vec::with_capacity(config.epochs);
    let samples = dataset.samples();

    for epoch in 0..config.epochs {
        let plan = batches(dataset, config.batch_size, config.background_fraction, config.seed, epoch as u64)?;
        let mut loss_sum = 0.0;
        let mut bg_sum = 0.0;
        let mut bg_count = 0usize;
        for batch in &plan {
            let mut grads = GradientSet::zeros_like(&net);
            let mut batch_loss = 0.0;
            for &i in batch {
                let sample = &samples[i];
                let target = target_of(sample)?;
                let trace = net.forward(&sample.features)?;
                let out = config.loss.evaluate(trace.logits(), trace.feature(), target)?;
                let g = net.backward(&trace, &out.grad_logits, &out.grad_feature)?;
                grads.add_scaled(&g, 1.0)?;
                batch_loss += out.loss;
                if target == Target::KnownUnknown {
                    bg_sum += out.loss;
                    bg_count += 1;
                }
            }
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            net.apply_gradients(&grads, config.lr, &mut state, config.momentum)?;
            loss_sum += batch_loss / n;
        }
        let mean_loss = loss_sum / plan.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::invalid(format!("training diverged at epoch {}", epoch + 1)));
        }
        epochs.push(EpochStats {
            mean_loss,
            mean_background_loss: (bg_count > 0).then(|| bg_sum / bg_count as f64),
            train_accuracy: known_train_accuracy(&net, dataset)?,
        });
    }
    let final_train_accuracy = match epochs.last() {
        Some(e) => e.train_accuracy,
        None => known_train_accuracy(&net, dataset)?,
    };
    Ok((
        net,
        TrainReport {
            epochs,
            final_train_accuracy,
            wall_clock: start.elapsed(),
        },
    ))
}

/// One record per sample of `phase`.
///
/// Scores cover the known classes only. A network with one extra output (the
/// background baseline) is softmaxed over all outputs and the background
/// probability is then dropped.
pub fn score_dataset(net: &Network, dataset: &Dataset, phase: Phase) -> Result<Vec<ScoreRecord>> {
    if net.config().input_dim != dataset.dim() {
        return Err(Error::invalid(format!(
            "model expects {} inputs, dataset has dim {}",
            net.config().input_dim,
            dataset.dim()
        )));
    }
    let c = dataset.num_known();
    let outputs = net.config().num_logits;
    if outputs != c && outputs != c + 1 {
        return Err(Error::invalid(format!(
            "model has {outputs} outputs, dataset has {c} known classes"
        )));
    }
    dataset
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.tag.phase == phase)
        .map(|(id, s)| {
            let t = net.forward(&s.features)?;
            let mut scores = softmax(t.logits())?;
            scores.truncate(c);
            ScoreRecord::new(id, scores, l2_norm(t.feature()), s.tag.role.kind(), s.tag.role.known_class())
        })
        .collect()
}

/// Selection metric used by cross-class validation.
pub const VALIDATION_FPR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub params: ObjectosphereParams,
    /// CCR at FPR = 0.1 on the held-out background half; `None` if not reachable.
    pub ccr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub best: ObjectosphereParams,
    pub rows: Vec<ValidationRow>,
    /// Background labels used for training / held out for validation.
    pub train_labels: Vec<usize>,
    pub holdout_labels: Vec<usize>,
}

impl CrossValidation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,xi,ccr_at_fpr_0.1\n");
        for r in &self.rows {
            let ccr = r.ccr.map(|v| v.to_string()).unwrap_or_else(|| "N/A".into());
            let _ = writeln!(s, "{},{},{}", r.params.lambda, r.params.xi, ccr);
        }
        s
    }
}

/// Chooses objectosphere `(λ, ξ)` by training on the knowns plus half of
/// the background classes and measuring CCR at FPR 0.1 with the other half
/// treated as unknown.
///
/// The background classes are shuffled with `config.seed`; the first
/// `⌈n/2⌉` are trained on. Validation uses the test-phase knowns and every
/// sample of the held-out classes. Ties prefer smaller λ, then smaller ξ,
/// then the earlier grid entry.
pub fn cross_class_validate(
    config: &TrainConfig,
    dataset: &Dataset,
    lambda_grid: &[f64],
    xi_grid: &[f64],
) -> Result<CrossValidation> {
    if !matches!(config.loss, LossSpec::Objectosphere(_)) {
        return Err(Error::config("cross-class validation tunes the objectosphere loss"));
    }
    if lambda_grid.is_empty() || xi_grid.is_empty() {
        return Err(Error::config("empty hyperparameter grid"));
    }
    let mut labels = dataset.known_unknown_labels();
    if labels.len() < 2 {
        return Err(Error::config(format!(
            "cross-class validation needs at least 2 background classes, found {}",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    labels.shuffle(&mut rng);
    let split = labels.len().div_ceil(2);
    let train_labels: BTreeSet<usize> = labels[..split].iter().copied().collect();
    let holdout: BTreeSet<usize> = labels[split..].iter().copied().collect();

    let train_set = dataset.map_samples(|s| {
        (s.tag.role != Role::KnownUnknown || train_labels.contains(&s.label)).then(|| s.clone())
    })?;
    // held-out background moves to the test phase so it is scored as unknown
    let validation_set = dataset.map_samples(|s| match s.tag.role {
        Role::Known(_) if s.tag.phase == Phase::Test => Some(s.clone()),
        Role::KnownUnknown if holdout.contains(&s.label) => Some(Sample {
            tag: SplitTag {
                role: Role::KnownUnknown,
                phase: Phase::Test,
            },
            ..s.clone()
        }),
        _ => None,
    })?;

    let grid: Vec<ObjectosphereParams> = lambda_grid
        .iter()
        .flat_map(|&lambda| xi_grid.iter().map(move |&xi| ObjectosphereParams { lambda, xi }))
        .collect();
    for p in &grid {
        p.validate()?;
    }
    let unknown: BTreeSet<SplitKind> = [SplitKind::KnownUnknown].into();
    let rows = grid
        .par_iter()
        .map(|&params| -> Result<ValidationRow> {
            let cfg = TrainConfig {
                loss: LossSpec::Objectosphere(params),
                ..config.clone()
            };
            let (net, _) = train(&cfg, &train_set)?;
            let records = score_dataset(&net, &validation_set, Phase::Test)?;
            let curve = oscr(&records, &unknown, ScoreMode::Softmax)?;
            let ccr = ccr_at_fpr(&curve, &[VALIDATION_FPR], curve.num_unknown)?[0];
            Ok(ValidationRow { params, ccr })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = rows
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            let va = a.ccr.unwrap_or(f64::NEG_INFINITY);
            let vb = b.ccr.unwrap_or(f64::NEG_INFINITY);
            vb.total_cmp(&va)
                .then(a.params.lambda.total_cmp(&b.params.lambda))
                .then(a.params.xi.total_cmp(&b.params.xi))
                .then(i.cmp(j))
        })
        .map(|(_, r)| r.params)
        .expect("non-empty grid");
    Ok(CrossValidation {
        best,
        rows,
        train_labels: train_labels.into_iter().collect(),
        holdout_labels: holdout.into_iter().collect(),
    })
}
