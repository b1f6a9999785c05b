//! Direction-decomposed feature maps.
//!
//! A sample is reduced to a stack of direction planes over the standard
//! square: each unit of edge gradient (offline) or stroke direction (online)
//! is split into the two neighboring chaincode directions and deposited
//! bilinearly at its normalized position. The result is a sparse,
//! non-negative (planes, n, n) tensor that feeds both the network and the
//! statistical baseline.

mod container;
mod decompose;
mod extract;
mod splat;

pub use container::{parse_dmap, serialize_dmap};
pub use decompose::{decompose, direction_vector, Decomposition, DIRECTIONS};
pub use extract::{extract_offline, extract_online, resample_field, ExtractConfig, ExtractStats};
pub use splat::Splatter;

use ndarray::Array3;

/// Which kind of sample a map was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Offline,
    Online,
}

/// A direction feature map with its dataset bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectMap {
    /// (planes, n, n), non-negative.
    pub data: Array3<f32>,
    pub modality: Modality,
    pub class: Option<u32>,
    pub writer: u32,
}

impl DirectMap {
    pub fn planes(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn size(&self) -> usize {
        self.data.shape()[1]
    }

    /// Fraction of cells that are exactly zero.
    pub fn sparsity(&self) -> f64 {
        let zeros = self.data.iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / self.data.len() as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Largest cell value.
    pub fn peak(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &v| m.max(v))
    }
}

/// Cell-wise average of a set of equally shaped maps.
pub fn average_map(maps: &[&DirectMap]) -> Option<Array3<f32>> {
    let first = maps.first()?;
    let mut acc = Array3::<f64>::zeros(first.data.raw_dim());
    for m in maps {
        if m.data.raw_dim() != acc.raw_dim() {
            return None;
        }
        acc.zip_mut_with(&m.data, |a, &b| *a += b as f64);
    }
    let k = maps.len() as f64;
    Some(acc.mapv(|v| (v / k) as f32))
}
