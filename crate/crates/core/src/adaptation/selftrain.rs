//! Unsupervised writer adaptation by confidence-weighted self-training.
//!
//! The network stays frozen. Each round predicts labels and confidences for
//! the writer's unlabeled samples through the current transform, then
//! re-solves the transform so that bottleneck features land on the means of
//! their predicted classes.

use super::transform::{beta_from_tilde, solve_stm, StyleTransform};
use crate::convnet::{source_features, NetworkParams, Scalar};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Array3};
use std::collections::BTreeMap;

/// Per-class bottleneck feature means from labeled data. Classes that never
/// occur have no mean and samples predicted as them are excluded from the
/// transform solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeans {
    dim: usize,
    means: Vec<Option<Array1<f64>>>,
}

impl ClassMeans {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn get(&self, class: u32) -> Option<&Array1<f64>> {
        self.means.get(class as usize).and_then(|m| m.as_ref())
    }

    /// Number of classes with a defined mean.
    pub fn defined(&self) -> usize {
        self.means.iter().filter(|m| m.is_some()).count()
    }
}

/// Average the features of each class. `classes` fixes the label space; every
/// label must be below it.
pub fn class_means(
    features: &[Array1<f64>],
    labels: &[u32],
    classes: usize,
) -> Result<ClassMeans> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} features vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if classes == 0 {
        return Err(Error::Invalid("zero classes".into()));
    }
    let dim = features[0].len();
    let mut sums: BTreeMap<u32, (Array1<f64>, usize)> = BTreeMap::new();
    for (phi, &label) in features.iter().zip(labels) {
        if phi.len() != dim {
            return Err(Error::Dimension(format!(
                "feature length {} vs {}",
                phi.len(),
                dim
            )));
        }
        if label as usize >= classes {
            return Err(Error::Invalid(format!(
                "label {label} outside {classes} classes"
            )));
        }
        let entry = sums
            .entry(label)
            .or_insert_with(|| (Array1::zeros(dim), 0));
        entry.0 += phi;
        entry.1 += 1;
    }
    let mut means = vec![None; classes];
    for (label, (sum, count)) in sums {
        means[label as usize] = Some(sum / count as f64);
    }
    Ok(ClassMeans { dim, means })
}

/// Self-training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptConfig {
    /// Unitless regularizer mix in [0, 1); 0 trusts data fully, values near 1
    /// pin the identity.
    pub beta_tilde: f64,
    /// Absolute penalty on the offset b.
    pub gamma: f64,
    /// Predict/solve rounds.
    pub iter_num: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            beta_tilde: 0.2,
            gamma: 0.0,
            iter_num: 3,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_tilde.is_finite() && (0.0..1.0).contains(&self.beta_tilde)) {
            return Err(Error::Invalid(format!(
                "beta_tilde {} outside [0, 1)",
                self.beta_tilde
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Invalid(format!("negative gamma {}", self.gamma)));
        }
        if self.iter_num == 0 {
            return Err(Error::Invalid("iter_num must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one adaptation run: the labels and confidences from the final
/// prediction pass, the transform solved from them, and how many samples were
/// excluded because their predicted class has no mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub predictions: Vec<u32>,
    pub confidences: Vec<f64>,
    pub transform: StyleTransform,
    pub dropped: usize,
}

fn softmax_argmax(logits: &Array1<f64>) -> (u32, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    (best as u32, exps[best] / total)
}

/// Run the self-training rounds on precomputed bottleneck features.
///
/// `out_weight` and `out_bias` are the frozen output layer. Each round
/// classifies every feature through the current transform, weights it by the
/// softmax probability of its predicted class, and re-solves the transform
/// against the predicted class means.
pub fn adapt_unsupervised_features(
    out_weight: &Array2<f64>,
    out_bias: &Array1<f64>,
    means: &ClassMeans,
    phis: &[Array1<f64>],
    config: &AdaptConfig,
) -> Result<AdaptOutcome> {
    config.validate()?;
    let d = means.dim();
    let classes = out_bias.len();
    if out_weight.nrows() != classes || out_weight.ncols() != d {
        return Err(Error::Dimension(format!(
            "output layer {}x{} vs {classes} classes over {d} features",
            out_weight.nrows(),
            out_weight.ncols()
        )));
    }
    if means.classes() != classes {
        return Err(Error::Dimension(format!(
            "{} class means vs {classes} output units",
            means.classes()
        )));
    }
    if phis.is_empty() {
        return Err(Error::Invalid("no adaptation samples".into()));
    }
    for phi in phis {
        if phi.len() != d {
            return Err(Error::Dimension(format!(
                "feature length {} vs bottleneck width {d}",
                phi.len()
            )));
        }
    }

    let n = phis.len();
    let mut transform = StyleTransform::identity(d);
    let mut predictions = vec![0u32; n];
    let mut confidences = vec![0.0f64; n];
    let mut dropped = 0usize;

    for _ in 0..config.iter_num {
        for (i, phi) in phis.iter().enumerate() {
            let logits = out_weight.dot(&transform.apply(&phi.view())?) + out_bias;
            let (pred, conf) = softmax_argmax(&logits);
            predictions[i] = pred;
            confidences[i] = conf;
        }

        let kept: Vec<usize> = (0..n)
            .filter(|&i| means.get(predictions[i]).is_some())
            .collect();
        dropped = n - kept.len();
        if kept.is_empty() {
            transform = StyleTransform::identity(d);
            continue;
        }
        let k_phis: Vec<Array1<f64>> = kept.iter().map(|&i| phis[i].clone()).collect();
        let k_targets: Vec<Array1<f64>> = kept
            .iter()
            .map(|&i| means.get(predictions[i]).expect("kept").clone())
            .collect();
        let k_confs: Vec<f64> = kept.iter().map(|&i| confidences[i]).collect();
        let beta = beta_from_tilde(config.beta_tilde, &k_phis, &k_confs);
        transform = solve_stm(&k_phis, &k_targets, &k_confs, beta, config.gamma)?;
    }

    Ok(AdaptOutcome {
        predictions,
        confidences,
        transform,
        dropped,
    })
}

/// Convenience wrapper over a full network: extracts bottleneck features for
/// every map once, lifts the output layer to f64, and runs the self-training
/// rounds. The network itself is never modified.
pub fn adapt_unsupervised<T: Scalar>(
    params: &NetworkParams<T>,
    means: &ClassMeans,
    maps: &[Array3<T>],
    config: &AdaptConfig,
) -> Result<AdaptOutcome> {
    let out = params
        .layers
        .last()
        .ok_or_else(|| Error::Invalid("network has no layers".into()))?;
    let out_weight = out.weight.mapv(Scalar::to_f64);
    let out_bias = out.bias.mapv(Scalar::to_f64);
    let mut phis = Vec::with_capacity(maps.len());
    for map in maps {
        phis.push(source_features(params, map)?.mapv(Scalar::to_f64));
    }
    adapt_unsupervised_features(&out_weight, &out_bias, means, &phis, config)
}

/// Relative error reduction (initial - adapted) / initial, or None when the
/// initial error rate is not positive.
pub fn error_reduction_rate(initial: f64, adapted: f64) -> Option<f64> {
    if initial > 0.0 {
        Some((initial - adapted) / initial)
    } else {
        None
    }
}
