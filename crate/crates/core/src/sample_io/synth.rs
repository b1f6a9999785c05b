//! Deterministic synthetic writers: a seeded stroke-template grammar per
//! class, writer styles (slant / scale / jitter / ink), and paired
//! online/offline rendering of the same distorted glyph.

use super::{OfflineSample, OnlineSample, Split};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Template coordinate lattice: points sit on multiples of 4 in [8, 56].
const LATTICE_STEP: i32 = 4;
const LATTICE_CELLS: i32 = 12;
const LATTICE_ORIGIN: f64 = 8.0;

fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 step; decorrelates derived RNG streams
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-writer rendering style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriterStyle {
    /// Drives the jitter stream; vary it to get repeated samples in one style.
    pub seed: u64,
    /// Shear angle in radians: (x, y) -> (x + y*tan(slant), y).
    pub slant: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    /// Standard deviation of per-point Gaussian jitter, in coordinate units.
    pub jitter_sigma: f64,
    /// Stroke thickness in pixels for the offline rendering.
    pub thickness: f64,
    /// Ink darkness in [0, 1]; 1 renders black strokes.
    pub contrast: f64,
}

impl WriterStyle {
    /// The identity style: reproduces templates verbatim.
    pub fn identity(seed: u64) -> Self {
        WriterStyle {
            seed,
            slant: 0.0,
            scale_x: 1.0,
            scale_y: 1.0,
            jitter_sigma: 0.0,
            thickness: 2.0,
            contrast: 1.0,
        }
    }
}

/// Seeded stroke templates (polylines) for a fixed set of glyph classes.
#[derive(Debug, Clone)]
pub struct ClassGrammar {
    seed: u64,
    templates: Vec<Vec<Vec<(f64, f64)>>>,
}

impl ClassGrammar {
    pub const DEFAULT_CLASSES: usize = 20;

    pub fn new(seed: u64, classes: usize) -> Self {
        let templates = (0..classes)
            .map(|c| Self::template(seed, c as u64))
            .collect();
        ClassGrammar { seed, templates }
    }

    pub fn classes(&self) -> usize {
        self.templates.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn strokes(&self, class: usize) -> Option<&[Vec<(f64, f64)>]> {
        self.templates.get(class).map(|t| t.as_slice())
    }

    fn template(seed: u64, class: u64) -> Vec<Vec<(f64, f64)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, class.wrapping_add(1)));
        let stroke_count = rng.gen_range(2..=4);
        let mut strokes = Vec::with_capacity(stroke_count);
        for _ in 0..stroke_count {
            let points = rng.gen_range(2..=4);
            let mut stroke: Vec<(f64, f64)> = Vec::with_capacity(points);
            while stroke.len() < points {
                let x = LATTICE_ORIGIN + (rng.gen_range(0..=LATTICE_CELLS) * LATTICE_STEP) as f64;
                let y = LATTICE_ORIGIN + (rng.gen_range(0..=LATTICE_CELLS) * LATTICE_STEP) as f64;
                if stroke.last() != Some(&(x, y)) {
                    stroke.push((x, y));
                }
            }
            strokes.push(stroke);
        }
        strokes
    }
}

/// Render one glyph in a given style. Pure in (grammar, style, class): the
/// same inputs produce bit-identical outputs. The online and offline samples
/// depict the same distorted trajectory.
pub fn synth_generate(
    grammar: &ClassGrammar,
    style: &WriterStyle,
    class: usize,
) -> Result<(OnlineSample, OfflineSample)> {
    let template = grammar
        .strokes(class)
        .ok_or_else(|| Error::Invalid(format!("unknown class index {class}")))?;

    let mut jitter_rng = ChaCha8Rng::seed_from_u64(mix(style.seed, class as u64));
    let normal = Normal::new(0.0, style.jitter_sigma.max(0.0)).expect("sigma >= 0");
    let tan_slant = style.slant.tan();

    let mut strokes: Vec<Vec<(i16, i16)>> = Vec::with_capacity(template.len());
    for stroke in template {
        let mut out = Vec::with_capacity(stroke.len());
        for &(x, y) in stroke {
            // slant, then scale, then jitter
            let sx = (x + y * tan_slant) * style.scale_x;
            let sy = y * style.scale_y;
            let (jx, jy) = if style.jitter_sigma > 0.0 {
                (normal.sample(&mut jitter_rng), normal.sample(&mut jitter_rng))
            } else {
                (0.0, 0.0)
            };
            let px = (sx + jx).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            let py = (sy + jy).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            // collapse duplicates introduced by rounding
            if out.last() != Some(&(px, py)) {
                out.push((px, py));
            }
        }
        if out.is_empty() {
            // fully degenerate stroke; keep a single point so the container
            // invariant (>= 1 point per stroke) holds
            out.push((0, 0));
        }
        strokes.push(out);
    }

    let code = class as u32;
    let offline = rasterize(&strokes, style, code);
    let online = OnlineSample {
        strokes,
        tag: code.to_le_bytes(),
        class: Some(code),
        writer: 0,
    };
    Ok((online, offline))
}

fn rasterize(strokes: &[Vec<(i16, i16)>], style: &WriterStyle, code: u32) -> OfflineSample {
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for s in strokes {
        for &(x, y) in s {
            min_x = min_x.min(x as i32);
            min_y = min_y.min(y as i32);
            max_x = max_x.max(x as i32);
            max_y = max_y.max(y as i32);
        }
    }
    let margin = style.thickness.ceil() as i32 + 2;
    let width = (max_x - min_x + 2 * margin + 1) as usize;
    let height = (max_y - min_y + 2 * margin + 1) as usize;
    let mut gray = vec![255u8; width * height];
    let ink = 254 - (style.contrast.clamp(0.0, 1.0) * 254.0).round() as u8;
    let radius = (style.thickness / 2.0).max(0.5);

    let mut stamp = |cx: f64, cy: f64| {
        let x0 = ((cx - radius).floor() as i32).max(0);
        let x1 = ((cx + radius).ceil() as i32).min(width as i32 - 1);
        let y0 = ((cy - radius).floor() as i32).max(0);
        let y1 = ((cy + radius).ceil() as i32).min(height as i32 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= radius * radius {
                    let px = &mut gray[y as usize * width + x as usize];
                    *px = (*px).min(ink);
                }
            }
        }
    };

    for s in strokes {
        for win in s.windows(2) {
            let (ax, ay) = (
                (win[0].0 as i32 - min_x + margin) as f64,
                (win[0].1 as i32 - min_y + margin) as f64,
            );
            let (bx, by) = (
                (win[1].0 as i32 - min_x + margin) as f64,
                (win[1].1 as i32 - min_y + margin) as f64,
            );
            let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
            let steps = (len / 0.25).ceil().max(1.0) as usize;
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                stamp(ax + t * (bx - ax), ay + t * (by - ay));
            }
        }
        if s.len() == 1 {
            let (x, y) = s[0];
            stamp(
                (x as i32 - min_x + margin) as f64,
                (y as i32 - min_y + margin) as f64,
            );
        }
    }

    OfflineSample {
        width,
        height,
        gray,
        tag: (code as u16).to_le_bytes(),
        class: Some(code),
        writer: 0,
    }
}

/// Parameters of the standard desk-scale dataset: a handful of training
/// writers with mild style variation plus held-out writers whose styles sit
/// outside the training range.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub grammar_seed: u64,
    pub classes: usize,
    pub train_writers: usize,
    pub test_writers: usize,
    /// Samples per class for each training writer.
    pub train_reps: usize,
    /// Samples per class for each held-out writer.
    pub test_reps: usize,
    /// Max |slant| of training writers (radians).
    pub train_slant: f64,
    /// Held-out writers draw |slant| from (train_slant, test_slant].
    pub test_slant: f64,
    pub train_scale_dev: f64,
    pub test_scale_dev: f64,
    pub jitter: f64,
    pub thickness: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grammar_seed: 7,
            classes: ClassGrammar::DEFAULT_CLASSES,
            train_writers: 8,
            test_writers: 10,
            train_reps: 5,
            test_reps: 5,
            train_slant: 0.12,
            test_slant: 0.38,
            train_scale_dev: 0.08,
            test_scale_dev: 0.22,
            jitter: 0.9,
            thickness: 2.5,
        }
    }
}

/// One generated glyph with its dataset bookkeeping.
#[derive(Debug, Clone)]
pub struct SynthItem {
    pub online: OnlineSample,
    pub offline: OfflineSample,
    pub class: u32,
    pub writer: u32,
    pub split: Split,
}

impl SynthConfig {
    /// Style of a given writer for one repetition. Writer traits (slant,
    /// scales, ink) are fixed per writer id; `rep` only moves the jitter
    /// stream.
    pub fn style_for(&self, writer: u32, rep: u32) -> WriterStyle {
        let held_out = (writer as usize) >= self.train_writers;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.grammar_seed, 0x57_52 ^ writer as u64));
        let (slant, scale_dev) = if held_out {
            // magnitude strictly beyond the training range so the style shift
            // is a real distribution shift, not a resample
            let mag = rng.gen_range(self.train_slant * 1.3..=self.test_slant);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let dev = rng.gen_range(self.train_scale_dev * 1.2..=self.test_scale_dev);
            (sign * mag, dev)
        } else {
            (
                rng.gen_range(-self.train_slant..=self.train_slant),
                rng.gen_range(0.0..=self.train_scale_dev),
            )
        };
        let dir = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        WriterStyle {
            seed: mix(self.grammar_seed, ((writer as u64) << 20) | rep as u64),
            slant,
            scale_x: 1.0 + dir * scale_dev,
            scale_y: 1.0 - dir * scale_dev * rng.gen_range(0.3..=1.0),
            jitter_sigma: self.jitter,
            thickness: self.thickness,
            contrast: rng.gen_range(0.55..=1.0),
        }
    }

    /// Generate the full dataset. Writers `0..train_writers` are tagged
    /// `train`; the following `test_writers` are tagged `test`.
    pub fn generate(&self) -> Vec<SynthItem> {
        let grammar = ClassGrammar::new(self.grammar_seed, self.classes);
        let mut items = Vec::new();
        let total_writers = self.train_writers + self.test_writers;
        for writer in 0..total_writers as u32 {
            let (split, reps) = if (writer as usize) < self.train_writers {
                (Split::Train, self.train_reps)
            } else {
                (Split::Test, self.test_reps)
            };
            for class in 0..self.classes {
                for rep in 0..reps as u32 {
                    let style = self.style_for(writer, rep);
                    let (mut online, mut offline) =
                        synth_generate(&grammar, &style, class).expect("class in range");
                    online.writer = writer;
                    offline.writer = writer;
                    items.push(SynthItem {
                        online,
                        offline,
                        class: class as u32,
                        writer,
                        split,
                    });
                }
            }
        }
        items
    }
}
