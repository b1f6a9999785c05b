//! Linear dimensionality reduction: PCA on the total covariance and FDA on
//! the (between, within) scatter pair with trace-scaled regularization.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use std::collections::BTreeMap;

/// Within-class scatter regularization: eps * trace / d added to the diagonal.
pub const FDA_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Pca,
    Fda,
}

/// Learned linear projection y = basis^T (x - mean).
#[derive(Debug, Clone)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub mean: Array1<f64>,
    /// d x m; columns are projection directions. PCA columns are unit
    /// length, FDA columns satisfy v^T S_w v = 1.
    pub basis: Array2<f64>,
    /// Eigenvalue attached to each column, descending.
    pub spectrum: Array1<f64>,
}

impl Projection {
    pub fn input_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        self.basis.t().dot(&(x - &self.mean))
    }

    /// Project every row of an (n, d) matrix.
    pub fn project_batch(&self, xs: &Array2<f64>) -> Array2<f64> {
        (xs - &self.mean.view().insert_axis(Axis(0))).dot(&self.basis)
    }
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

/// Indices of the eigenvalues in descending order.
fn descending(values: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    idx
}

pub fn fit_projection(
    features: &Array2<f64>,
    labels: &[u32],
    kind: ProjectionKind,
    out_dim: usize,
) -> Result<Projection> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::Invalid("projection needs at least 2 samples".into()));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{n} feature rows with {} labels",
            labels.len()
        )));
    }
    if out_dim == 0 || out_dim > d {
        return Err(Error::Invalid(format!(
            "output dimension {out_dim} outside 1..={d}"
        )));
    }
    let mean = features.mean_axis(Axis(0)).unwrap();

    match kind {
        ProjectionKind::Pca => {
            let centered = features - &mean.view().insert_axis(Axis(0));
            let cov = centered.t().dot(&centered) / n as f64;
            let eig = SymmetricEigen::new(to_dmatrix(&cov));
            let order = descending(&eig.eigenvalues);
            let mut basis = Array2::zeros((d, out_dim));
            let mut spectrum = Array1::zeros(out_dim);
            for (j, &col) in order.iter().take(out_dim).enumerate() {
                spectrum[j] = eig.eigenvalues[col];
                for i in 0..d {
                    basis[[i, j]] = eig.eigenvectors[(i, col)];
                }
            }
            Ok(Projection {
                kind,
                mean,
                basis,
                spectrum,
            })
        }
        ProjectionKind::Fda => {
            let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                groups.entry(l).or_default().push(i);
            }
            let c = groups.len();
            if c < 2 {
                return Err(Error::Invalid("discriminant needs >= 2 classes".into()));
            }
            if let Some((&label, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
                return Err(Error::Invalid(format!(
                    "class {label} has {} sample(s); discriminant scatter needs >= 2",
                    g.len()
                )));
            }
            if out_dim > (c - 1).min(d) {
                return Err(Error::Invalid(format!(
                    "output dimension {out_dim} exceeds min(classes - 1, d) = {}",
                    (c - 1).min(d)
                )));
            }

            let mut sw = Array2::<f64>::zeros((d, d));
            let mut sb = Array2::<f64>::zeros((d, d));
            for g in groups.values() {
                let mut mu_c = Array1::<f64>::zeros(d);
                for &i in g {
                    mu_c += &features.row(i);
                }
                mu_c /= g.len() as f64;
                for &i in g {
                    let diff = &features.row(i) - &mu_c;
                    let outer = diff
                        .view()
                        .insert_axis(Axis(1))
                        .dot(&diff.view().insert_axis(Axis(0)));
                    sw += &outer;
                }
                let gap = &mu_c - &mean;
                let outer = gap
                    .view()
                    .insert_axis(Axis(1))
                    .dot(&gap.view().insert_axis(Axis(0)));
                sb += &(outer * g.len() as f64);
            }
            sw /= n as f64;
            sb /= n as f64;

            let ridge = FDA_EPSILON * sw.diag().sum() / d as f64;
            for i in 0..d {
                sw[[i, i]] += ridge;
            }

            let chol = Cholesky::new(to_dmatrix(&sw)).ok_or_else(|| {
                Error::Degenerate("within-class scatter is singular beyond regularization".into())
            })?;
            let l = chol.l();
            let solve_err =
                || Error::Degenerate("triangular solve failed on within-class scatter".into());
            // M = L^-1 Sb L^-T, kept symmetric against rounding
            let t = l
                .solve_lower_triangular(&to_dmatrix(&sb))
                .ok_or_else(solve_err)?;
            let m = l
                .solve_lower_triangular(&t.transpose())
                .ok_or_else(solve_err)?
                .transpose();
            let m = (&m + &m.transpose()) * 0.5;
            let eig = SymmetricEigen::new(m);
            let order = descending(&eig.eigenvalues);

            let lt = l.transpose();
            let mut basis = Array2::zeros((d, out_dim));
            let mut spectrum = Array1::zeros(out_dim);
            for (j, &col) in order.iter().take(out_dim).enumerate() {
                spectrum[j] = eig.eigenvalues[col];
                let u = eig.eigenvectors.column(col).into_owned();
                let v = lt.solve_upper_triangular(&u).ok_or_else(solve_err)?;
                for i in 0..d {
                    basis[[i, j]] = v[i];
                }
            }
            Ok(Projection {
                kind,
                mean,
                basis,
                spectrum,
            })
        }
    }
}
