//! Python bindings: datasets, training, scoring and the open-set metrics.

use std::collections::BTreeSet;

use agnosto_core::data::{generate_synthetic, Dataset as CoreDataset, Phase, SplitKind, SynthConfig};
use agnosto_core::evaluation::{
    ccr_at_fpr, oscr, pr_auc, read_scores_csv, split_statistics, write_scores_csv, ScoreMode, ScoreRecord,
};
use agnosto_core::losses::ObjectosphereParams;
use agnosto_core::network::Network;
use agnosto_core::training::{parse_loss, score_dataset, train as core_train, TrainConfig};
use agnosto_core::Error;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyOSError::new_err(e.to_string())
    }
}

fn parse_mode(mode: &str) -> PyResult<ScoreMode> {
    ScoreMode::parse(mode).ok_or_else(|| PyValueError::new_err(format!("unknown score mode `{mode}`")))
}

fn parse_unknowns(unknowns: &str) -> PyResult<BTreeSet<SplitKind>> {
    match unknowns {
        "all" => Ok([SplitKind::KnownUnknown, SplitKind::UnknownUnknown].into()),
        "known_unknown" => Ok([SplitKind::KnownUnknown].into()),
        "unknown_unknown" => Ok([SplitKind::UnknownUnknown].into()),
        _ => Err(PyValueError::new_err(format!(
            "unknowns must be `all`, `known_unknown` or `unknown_unknown`, got `{unknowns}`"
        ))),
    }
}

/// Tagged samples with a train/test phase.
#[pyclass(module = "agnosto", skip_from_py_object)]
#[derive(Clone)]
struct Dataset(CoreDataset);

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (classes=4, bg_classes=3, uu_classes=3, per_class=1000, dim=2, seed=0))]
    fn synthetic(
        classes: usize,
        bg_classes: usize,
        uu_classes: usize,
        per_class: usize,
        dim: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = SynthConfig {
            num_known: classes,
            num_known_unknown: bg_classes,
            num_unknown_unknown: uu_classes,
            samples_per_class: per_class,
            dim,
            seed,
        };
        generate_synthetic(&cfg).map(Dataset).map_err(py_err)
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        CoreDataset::from_csv(text).map(Dataset).map_err(py_err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn num_known(&self) -> usize {
        self.0.num_known()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// A trained (or freshly initialised) network.
#[pyclass(module = "agnosto", skip_from_py_object)]
#[derive(Clone)]
struct Model(Network);

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Network::from_text(text).map(Model).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    /// Deep features and logits for one input vector.
    fn forward(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let t = self.0.forward(&x).map_err(py_err)?;
        Ok((t.feature().to_vec(), t.logits().to_vec()))
    }
}

/// `(split, count, entropy_mean, entropy_std, magnitude_mean, magnitude_std)`.
type StatsRow = (String, usize, f64, f64, f64, f64);

/// Per-sample scores for one model on one dataset phase.
#[pyclass(module = "agnosto", skip_from_py_object)]
#[derive(Clone)]
struct Scores(Vec<ScoreRecord>);

#[pymethods]
impl Scores {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        read_scores_csv(text).map(Scores).map_err(py_err)
    }

    fn to_csv(&self) -> String {
        write_scores_csv(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// OSCR operating points as `(theta, fpr, ccr)`, θ descending.
    #[pyo3(signature = (unknowns="unknown_unknown", mode="softmax"))]
    fn oscr(&self, unknowns: &str, mode: &str) -> PyResult<Vec<(f64, f64, f64)>> {
        let curve = oscr(&self.0, &parse_unknowns(unknowns)?, parse_mode(mode)?).map_err(py_err)?;
        Ok(curve.points.iter().map(|p| (p.theta, p.fpr, p.ccr)).collect())
    }

    /// CCR at each FPR target; `None` where the target cannot be realised.
    #[pyo3(signature = (targets, unknowns="unknown_unknown", mode="softmax"))]
    fn ccr_at_fpr(&self, targets: Vec<f64>, unknowns: &str, mode: &str) -> PyResult<Vec<Option<f64>>> {
        let curve = oscr(&self.0, &parse_unknowns(unknowns)?, parse_mode(mode)?).map_err(py_err)?;
        ccr_at_fpr(&curve, &targets, curve.num_unknown).map_err(py_err)
    }

    #[pyo3(signature = (positive="known", monotonize=false, mode="softmax"))]
    fn pr_auc(&self, positive: &str, monotonize: bool, mode: &str) -> PyResult<f64> {
        let positive =
            SplitKind::parse(positive).ok_or_else(|| PyValueError::new_err(format!("unknown split `{positive}`")))?;
        pr_auc(&self.0, positive, monotonize, parse_mode(mode)?).map_err(py_err)
    }

    /// `(split, count, entropy_mean, entropy_std, magnitude_mean, magnitude_std)` per split.
    fn statistics(&self) -> PyResult<Vec<StatsRow>> {
        let stats = split_statistics(&self.0).map_err(py_err)?;
        Ok(stats
            .into_iter()
            .map(|s| {
                (s.kind.name().to_string(), s.count, s.entropy_mean, s.entropy_std, s.magnitude_mean, s.magnitude_std)
            })
            .collect())
    }
}

/// Train a network; returns the model and per-epoch `(mean_loss, train_accuracy)`.
#[pyfunction]
#[pyo3(signature = (dataset, loss="objectosphere", epochs=None, lr=None, batch_size=None, seed=0, lambda_=None, xi=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &Dataset,
    loss: &str,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    seed: u64,
    lambda_: Option<f64>,
    xi: Option<f64>,
) -> PyResult<(Model, Vec<(f64, f64)>)> {
    let defaults = ObjectosphereParams::default();
    let params = ObjectosphereParams {
        lambda: lambda_.unwrap_or(defaults.lambda),
        xi: xi.unwrap_or(defaults.xi),
    };
    let spec = parse_loss(loss, params).map_err(py_err)?;
    let mut cfg = TrainConfig::new(spec, &dataset.0);
    cfg.seed = seed;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(l) = lr {
        cfg.lr = l;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
    }
    let data = dataset.0.clone();
    let (net, report) = py.detach(move || core_train(&cfg, &data)).map_err(py_err)?;
    let history = report.epochs.iter().map(|e| (e.mean_loss, e.train_accuracy)).collect();
    Ok((Model(net), history))
}

/// Score one phase (`train` or `test`) of a dataset.
#[pyfunction]
#[pyo3(signature = (model, dataset, phase="test"))]
fn score(model: &Model, dataset: &Dataset, phase: &str) -> PyResult<Scores> {
    let phase = Phase::parse(phase).ok_or_else(|| PyValueError::new_err(format!("unknown phase `{phase}`")))?;
    score_dataset(&model.0, &dataset.0, phase).map(Scores).map_err(py_err)
}

#[pymodule]
fn agnosto(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<Scores>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    Ok(())
}
