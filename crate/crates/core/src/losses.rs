//! Training objectives with exact gradients w.r.t. the logits and the deep
//! feature.
//!
//! * [`softmax_ce`]: plain cross-entropy, knowns only.
//! * [`background_ce`]: cross-entropy over `C + 1` outputs, background samples
//!   target the extra output.
//! * [`entropic_open_set`]: cross-entropy for knowns, uniform-target
//!   log-score average for background samples.
//! * [`objectosphere`]: entropic open-set plus a feature-magnitude penalty that
//!   pushes knowns outside radius ξ and background samples toward `F = 0`.

use crate::error::{Error, Result};
use crate::numeric::{l2_norm, log_softmax, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    KnownClass(usize),
    KnownUnknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectosphereParams {
    /// Penalty weight.
    pub lambda: f64,
    /// Minimum feature magnitude demanded of known samples.
    pub xi: f64,
}

impl Default for ObjectosphereParams {
    fn default() -> Self {
        ObjectosphereParams {
            lambda: 0.01,
            xi: 10.0,
        }
    }
}

impl ObjectosphereParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::config(format!("xi must be finite and >= 0, got {}", self.xi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_logits: Vec<f64>,
    /// Direct `∂J/∂F`; all zeros for losses that only see the logits.
    pub grad_feature: Vec<f64>,
}

/// Which objective to train with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Softmax,
    BackgroundClass,
    EntropicOpenSet,
    Objectosphere(ObjectosphereParams),
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Softmax => "softmax",
            LossSpec::BackgroundClass => "background",
            LossSpec::EntropicOpenSet => "entropic",
            LossSpec::Objectosphere(_) => "objectosphere",
        }
    }

    /// Output width needed for `num_known` known classes.
    pub fn num_logits(&self, num_known: usize) -> usize {
        match self {
            LossSpec::BackgroundClass => num_known + 1,
            _ => num_known,
        }
    }

    /// Whether the objective consumes known-unknown samples.
    pub fn uses_background(&self) -> bool {
        !matches!(self, LossSpec::Softmax)
    }

    pub fn evaluate(&self, logits: &[f64], feature: &[f64], target: Target) -> Result<LossOutput> {
        let mut out = match self {
            LossSpec::Softmax => softmax_ce(logits, target)?,
            LossSpec::BackgroundClass => background_ce(logits, target)?,
            LossSpec::EntropicOpenSet => entropic_open_set(logits, target)?,
            LossSpec::Objectosphere(p) => return objectosphere(logits, feature, target, p),
        };
        out.grad_feature = vec![0.0; feature.len()];
        Ok(out)
    }
}

fn cross_entropy(logits: &[f64], class: usize) -> Result<LossOutput> {
    if class >= logits.len() {
        return Err(Error::invalid(format!(
            "class {class} out of range for {} logits",
            logits.len()
        )));
    }
    let log_p = log_softmax(logits)?;
    let mut grad = softmax(logits)?;
    grad[class] -= 1.0;
    Ok(LossOutput {
        loss: -log_p[class],
        grad_logits: grad,
        grad_feature: Vec::new(),
    })
}

/// `-log S_c`. Rejects background samples.
pub fn softmax_ce(logits: &[f64], target: Target) -> Result<LossOutput> {
    match target {
        Target::KnownClass(c) => cross_entropy(logits, c),
        Target::KnownUnknown => Err(Error::invalid(
            "the softmax baseline cannot train on known-unknown samples",
        )),
    }
}

/// Cross-entropy over `C + 1` outputs; the last index is the background class.
pub fn background_ce(logits: &[f64], target: Target) -> Result<LossOutput> {
    if logits.len() < 2 {
        return Err(Error::invalid("background baseline needs at least C + 1 = 2 logits"));
    }
    let background = logits.len() - 1;
    match target {
        Target::KnownClass(c) if c >= background => Err(Error::invalid(format!(
            "class {c} collides with the background output {background}"
        ))),
        Target::KnownClass(c) => cross_entropy(logits, c),
        Target::KnownUnknown => cross_entropy(logits, background),
    }
}

/// Entropic open-set loss over `C ≥ 2` logits.
pub fn entropic_open_set(logits: &[f64], target: Target) -> Result<LossOutput> {
    let c = logits.len();
    if c < 2 {
        return Err(Error::invalid("entropic open-set loss needs at least two classes"));
    }
    match target {
        Target::KnownClass(k) => cross_entropy(logits, k),
        Target::KnownUnknown => {
            let log_p = log_softmax(logits)?;
            let inv = 1.0 / c as f64;
            let loss = -log_p.iter().sum::<f64>() * inv;
            let grad = softmax(logits)?.into_iter().map(|p| p - inv).collect();
            Ok(LossOutput {
                loss,
                grad_logits: grad,
                grad_feature: Vec::new(),
            })
        }
    }
}

/// Entropic open-set loss plus `λ·max(ξ − ‖F‖, 0)²` for knowns or `λ·‖F‖²`
/// for background samples.
///
/// The known-class penalty gradient is taken as 0 at `‖F‖ = ξ` and at `F = 0`.
pub fn objectosphere(
    logits: &[f64],
    feature: &[f64],
    target: Target,
    params: &ObjectosphereParams,
) -> Result<LossOutput> {
    params.validate()?;
    if feature.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite deep feature"));
    }
    let mut out = entropic_open_set(logits, target)?;
    let norm = l2_norm(feature);
    let lambda = params.lambda;
    let (penalty, grad_feature) = match target {
        Target::KnownUnknown => (
            norm * norm,
            feature.iter().map(|&f| 2.0 * lambda * f).collect(),
        ),
        Target::KnownClass(_) => {
            let gap = (params.xi - norm).max(0.0);
            let grad = if gap > 0.0 && norm > 0.0 {
                let s = -2.0 * lambda * gap / norm;
                feature.iter().map(|&f| s * f).collect()
            } else {
                vec![0.0; feature.len()]
            };
            (gap * gap, grad)
        }
    };
    out.loss += lambda * penalty;
    out.grad_feature = grad_feature;
    Ok(out)
}

/// `S_c(x)·‖F(x)‖` for every class.
pub fn scaled_score(scores: &[f64], feature_magnitude: f64) -> Result<Vec<f64>> {
    // negated so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(feature_magnitude >= 0.0) {
        return Err(Error::invalid(format!(
            "feature magnitude must be non-negative, got {feature_magnitude}"
        )));
    }
    Ok(scores.iter().map(|s| s * feature_magnitude).collect())
}
