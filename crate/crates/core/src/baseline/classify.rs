//! Nearest-prototype and modified quadratic discriminant classifiers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};
use std::collections::BTreeMap;

/// Eigenvalues are floored at this fraction of the class's largest one.
pub const EIGEN_FLOOR_RATIO: f64 = 1e-10;
/// Principal-axis count used at desk scale.
pub const DEFAULT_MQDF_K: usize = 10;

fn group_by_class(labels: &[u32]) -> BTreeMap<u32, Vec<usize>> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Nearest prototype classifier: one mean per class, Euclidean metric.
#[derive(Debug, Clone)]
pub struct NpcModel {
    /// Ascending class ids, aligned with the rows of `means`.
    pub classes: Vec<u32>,
    pub means: Array2<f64>,
}

impl NpcModel {
    pub fn fit(features: &Array2<f64>, labels: &[u32]) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || labels.len() != n {
            return Err(Error::Dimension(format!(
                "{n} feature rows with {} labels",
                labels.len()
            )));
        }
        let groups = group_by_class(labels);
        let mut classes = Vec::with_capacity(groups.len());
        let mut means = Array2::zeros((groups.len(), d));
        for (row, (&class, idxs)) in groups.iter().enumerate() {
            classes.push(class);
            let mut mu = Array1::<f64>::zeros(d);
            for &i in idxs {
                mu += &features.row(i);
            }
            mu /= idxs.len() as f64;
            means.row_mut(row).assign(&mu);
        }
        Ok(Self { classes, means })
    }

    /// Squared Euclidean distance to every prototype, in `classes` order.
    pub fn distances(&self, x: &ArrayView1<f64>) -> Vec<f64> {
        self.means
            .outer_iter()
            .map(|mu| (&mu - x).mapv(|v| v * v).sum())
            .collect()
    }

    /// Nearest prototype; ties resolve to the lower class id.
    pub fn classify(&self, x: &ArrayView1<f64>) -> u32 {
        let dists = self.distances(x);
        let mut best = 0;
        for i in 1..dists.len() {
            if dists[i] < dists[best] {
                best = i;
            }
        }
        self.classes[best]
    }
}

/// One class's quadratic model: mean plus the top-k eigenpairs of its
/// covariance.
#[derive(Debug, Clone)]
pub struct MqdfClass {
    pub mean: Array1<f64>,
    /// k principal eigenvalues, descending, floored positive.
    pub eigvals: Array1<f64>,
    /// d x k matrix of the matching eigenvectors.
    pub basis: Array2<f64>,
}

/// Modified quadratic discriminant classifier with a minor-eigenvalue
/// constant shared across classes.
#[derive(Debug, Clone)]
pub struct MqdfModel {
    pub classes: Vec<u32>,
    pub k: usize,
    /// Mean discarded eigenvalue averaged over classes; 1.0 (unused) when
    /// k = d.
    pub delta_minor: f64,
    pub per_class: Vec<MqdfClass>,
}

impl MqdfModel {
    pub fn fit(features: &Array2<f64>, labels: &[u32], k: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || labels.len() != n {
            return Err(Error::Dimension(format!(
                "{n} feature rows with {} labels",
                labels.len()
            )));
        }
        if k == 0 || k > d {
            return Err(Error::Invalid(format!(
                "principal-axis count {k} outside 1..={d}"
            )));
        }
        let groups = group_by_class(labels);
        let mut classes = Vec::with_capacity(groups.len());
        let mut per_class = Vec::with_capacity(groups.len());
        let mut minor_mean_sum = 0.0;
        for (&class, idxs) in &groups {
            if idxs.len() < 2 {
                return Err(Error::Invalid(format!(
                    "class {class} has {} sample(s); covariance needs >= 2",
                    idxs.len()
                )));
            }
            let mut mu = Array1::<f64>::zeros(d);
            for &i in idxs {
                mu += &features.row(i);
            }
            mu /= idxs.len() as f64;
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for &i in idxs {
                let diff = &features.row(i) - &mu;
                for a in 0..d {
                    for b in 0..d {
                        cov[(a, b)] += diff[a] * diff[b];
                    }
                }
            }
            cov /= idxs.len() as f64;
            let eig = SymmetricEigen::new(cov);
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
            let lambda_max = eig.eigenvalues[order[0]];
            let floor = EIGEN_FLOOR_RATIO * lambda_max;
            if !(lambda_max > 0.0) {
                return Err(Error::Degenerate(format!(
                    "class {class} covariance is not positive definite after flooring"
                )));
            }
            let floored: Vec<f64> = order
                .iter()
                .map(|&i| eig.eigenvalues[i].max(floor))
                .collect();
            if k < d {
                minor_mean_sum +=
                    floored[k..].iter().sum::<f64>() / (d - k) as f64;
            }
            let mut basis = Array2::zeros((d, k));
            for (j, &col) in order.iter().take(k).enumerate() {
                for i in 0..d {
                    basis[[i, j]] = eig.eigenvectors[(i, col)];
                }
            }
            classes.push(class);
            per_class.push(MqdfClass {
                mean: mu,
                eigvals: Array1::from(floored[..k].to_vec()),
                basis,
            });
        }
        let delta_minor = if k < d {
            minor_mean_sum / groups.len() as f64
        } else {
            1.0
        };
        Ok(Self {
            classes,
            k,
            delta_minor,
            per_class,
        })
    }

    /// Per-class discriminant values (smaller is better), in `classes` order.
    pub fn discriminants(&self, x: &ArrayView1<f64>) -> Vec<f64> {
        let d = self.per_class[0].mean.len();
        self.per_class
            .iter()
            .map(|c| {
                let diff = x - &c.mean;
                let proj = c.basis.t().dot(&diff);
                let mut g = 0.0;
                let mut proj_sq = 0.0;
                for (p, &l) in proj.iter().zip(c.eigvals.iter()) {
                    g += p * p / l;
                    proj_sq += p * p;
                    g += l.ln();
                }
                let residual = (diff.dot(&diff) - proj_sq).max(0.0);
                g += residual / self.delta_minor;
                g += (d - self.k) as f64 * self.delta_minor.ln();
                g
            })
            .collect()
    }

    /// Minimum-discriminant class; ties resolve to the lower class id.
    pub fn classify(&self, x: &ArrayView1<f64>) -> u32 {
        let g = self.discriminants(x);
        let mut best = 0;
        for i in 1..g.len() {
            if g[i] < g[best] {
                best = i;
            }
        }
        self.classes[best]
    }
}
