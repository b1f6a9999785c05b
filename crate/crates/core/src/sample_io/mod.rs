//! Sample containers and dataset plumbing: GNT/POT record parsing and
//! serialization, line-oriented manifests with writer grouping, and a
//! deterministic synthetic-writer generator for desk-scale experiments.

mod gnt;
mod manifest;
mod pot;
pub mod synth;

pub use gnt::{parse_gnt, parse_gnt_record_at, parse_gnt_with_offsets, serialize_gnt};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use pot::{parse_pot, parse_pot_record_at, parse_pot_with_offsets, serialize_pot};
pub use synth::{synth_generate, ClassGrammar, SynthConfig, SynthItem, WriterStyle};

/// A gray-scale character image as stored in its container: background at
/// level 255, foreground darker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineSample {
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit levels, `width * height` long.
    pub gray: Vec<u8>,
    /// Original 2-byte code, preserved verbatim.
    pub tag: [u8; 2],
    /// Dense class index, assigned from a manifest vocabulary.
    pub class: Option<u32>,
    pub writer: u32,
}

impl OfflineSample {
    pub fn level(&self, x: usize, y: usize) -> u8 {
        self.gray[y * self.width + x]
    }
}

/// A pen trajectory: ordered strokes of (x, y) tablet coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlineSample {
    pub strokes: Vec<Vec<(i16, i16)>>,
    /// Original 4-byte code, preserved verbatim (byte order differs across
    /// dataset releases, so it stays opaque here).
    pub tag: [u8; 4],
    pub class: Option<u32>,
    pub writer: u32,
}

impl OnlineSample {
    /// Total number of recorded points across strokes.
    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(|s| s.len()).sum()
    }
}
