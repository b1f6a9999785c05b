//! Style transfer mapping: the affine adaptation layer and its closed-form
//! regularized least-squares solution.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix};
use ndarray::{Array1, Array2, ArrayView1};

/// Affine adaptation layer y = A x + b inserted after the bottleneck layer
/// (no activation).
#[derive(Debug, Clone, PartialEq)]
pub struct StyleTransform {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
}

impl StyleTransform {
    /// The no-adaptation transform A = I, b = 0.
    pub fn identity(dim: usize) -> Self {
        Self {
            a: Array2::eye(dim),
            b: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// A phi + b.
    pub fn apply(&self, phi: &ArrayView1<f64>) -> Result<Array1<f64>> {
        if phi.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "feature length {} does not match transform dimension {}",
                phi.len(),
                self.dim()
            )));
        }
        Ok(self.a.dot(phi) + &self.b)
    }
}

/// Regularizer weight from the unitless mixing ratio: beta_tilde in [0, 1)
/// scaled by the mean confidence-weighted feature energy per dimension.
pub fn beta_from_tilde(beta_tilde: f64, features: &[Array1<f64>], confidences: &[f64]) -> f64 {
    let d = features.first().map_or(1, |f| f.len()) as f64;
    let energy: f64 = features
        .iter()
        .zip(confidences)
        .map(|(phi, &f)| f * phi.dot(phi))
        .sum();
    beta_tilde / (1.0 - beta_tilde) * energy / d
}

/// Minimize sum_i f_i ||A phi_i + b - t_i||^2 + beta ||A - I||_F^2
/// + gamma ||b||^2 at its stationary point. With all weights and gamma zero
/// the data term vanishes and the identity transform is returned.
pub fn solve_stm(
    features: &[Array1<f64>],
    targets: &[Array1<f64>],
    confidences: &[f64],
    beta: f64,
    gamma: f64,
) -> Result<StyleTransform> {
    let n = features.len();
    if n == 0 || targets.len() != n || confidences.len() != n {
        return Err(Error::Dimension(format!(
            "{n} features, {} targets, {} confidences",
            targets.len(),
            confidences.len()
        )));
    }
    let d = features[0].len();
    for (phi, t) in features.iter().zip(targets) {
        if phi.len() != d || t.len() != d {
            return Err(Error::Dimension("inconsistent feature dimensions".into()));
        }
        if !(phi.iter().all(|v| v.is_finite()) && t.iter().all(|v| v.is_finite())) {
            return Err(Error::Invalid("non-finite adaptation inputs".into()));
        }
    }
    if let Some(&f) = confidences.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Invalid(format!(
            "confidence {f} outside [0, 1]"
        )));
    }
    if !(beta >= 0.0 && gamma >= 0.0 && beta.is_finite() && gamma.is_finite()) {
        return Err(Error::Invalid(format!(
            "regularizers beta = {beta}, gamma = {gamma}"
        )));
    }

    let f_sum: f64 = confidences.iter().sum();
    if f_sum + gamma == 0.0 {
        return Ok(StyleTransform::identity(d));
    }

    let mut phi_bar = Array1::<f64>::zeros(d);
    let mut t_bar = Array1::<f64>::zeros(d);
    let mut s_pp = Array2::<f64>::zeros((d, d));
    let mut s_tp = Array2::<f64>::zeros((d, d));
    for ((phi, t), &f) in features.iter().zip(targets).zip(confidences) {
        phi_bar.scaled_add(f, phi);
        t_bar.scaled_add(f, t);
        for r in 0..d {
            let fp = f * phi[r];
            let ft = f * t[r];
            for c in 0..d {
                s_pp[[r, c]] += fp * phi[c];
                s_tp[[r, c]] += ft * phi[c];
            }
        }
    }

    let denom = f_sum + gamma;
    let mut p = s_pp.clone();
    let mut q = s_tp.clone();
    for r in 0..d {
        for c in 0..d {
            p[[r, c]] -= phi_bar[r] * phi_bar[c] / denom;
            q[[r, c]] -= t_bar[r] * phi_bar[c] / denom;
        }
        p[[r, r]] += beta;
        q[[r, r]] += beta;
    }

    // A = Q P^-1 via P A^T = Q^T (P symmetric)
    let p_dm = DMatrix::from_row_iterator(d, d, p.iter().copied());
    let q_t = DMatrix::from_row_iterator(d, d, q.t().iter().copied());
    let a_t = match Cholesky::new(p_dm.clone()) {
        Some(chol) => chol.solve(&q_t),
        None => p_dm
            .lu()
            .solve(&q_t)
            .ok_or_else(|| Error::Degenerate("singular normal matrix at beta = 0".into()))?,
    };
    let a = Array2::from_shape_fn((d, d), |(r, c)| a_t[(c, r)]);
    let b = (&t_bar - &a.dot(&phi_bar)) / denom;
    Ok(StyleTransform { a, b })
}

/// STMA container: magic, dimension, then A row-major and b as LE f64.
pub fn serialize_stm(t: &StyleTransform) -> Vec<u8> {
    let d = t.dim();
    let mut out = Vec::with_capacity(4 + 4 + 8 * (d * d + d));
    out.extend_from_slice(b"STMA");
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in t.a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in t.b.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_stm(bytes: &[u8]) -> Result<StyleTransform> {
    if bytes.len() < 8 {
        return Err(Error::parse(0, "truncated transform container"));
    }
    if &bytes[..4] != b"STMA" {
        return Err(Error::parse(0, "bad magic, expected STMA"));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if d == 0 || d > 1 << 20 {
        return Err(Error::parse(4, format!("implausible dimension {d}")));
    }
    let expect = 8 + 8 * (d * d + d);
    if bytes.len() != expect {
        return Err(Error::parse(
            bytes.len().min(expect) as u64,
            format!("expected {expect} bytes for dimension {d}, got {}", bytes.len()),
        ));
    }
    let mut off = 8;
    let read = |off: &mut usize| {
        let v = f64::from_le_bytes(bytes[*off..*off + 8].try_into().unwrap());
        *off += 8;
        v
    };
    let mut a = Array2::zeros((d, d));
    for r in 0..d {
        for c in 0..d {
            a[[r, c]] = read(&mut off);
        }
    }
    let mut b = Array1::zeros(d);
    for r in 0..d {
        b[r] = read(&mut off);
    }
    if !(a.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite())) {
        return Err(Error::parse(8, "non-finite transform entries"));
    }
    Ok(StyleTransform { a, b })
}
