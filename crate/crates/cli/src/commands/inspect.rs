//! Identify a file (DMAP, HCNN, STMA, GNT, POT, or manifest text) and print
//! a summary record of its contents.

use crate::errors::{data_err, Result};
use crate::metrics::{MetricsReport, Record};
use hccr_core::adaptation::parse_stm;
use hccr_core::convnet::parse_checkpoint;
use hccr_core::directmap::parse_dmap;
use hccr_core::sample_io::{parse_gnt, parse_pot, Manifest, Split};
use ndarray::Array2;
use std::collections::BTreeSet;
use std::path::Path;

pub fn run(path: &Path) -> Result<MetricsReport> {
    let bytes = std::fs::read(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
    let mut report = MetricsReport::default();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();

    if bytes.starts_with(b"DMAP") {
        let map = parse_dmap(&bytes)?;
        let mut rec = Record::new("inspect")
            .w("kind", "dmap")
            .u("planes", map.planes() as u64)
            .u("size", map.size() as u64)
            .f("sparsity", map.sparsity())
            .f("mass", map.total_mass())
            .f("peak", map.peak() as f64)
            .u("writer", map.writer as u64)
            .w(
                "modality",
                match map.modality {
                    hccr_core::directmap::Modality::Offline => "offline",
                    hccr_core::directmap::Modality::Online => "online",
                },
            );
        if let Some(class) = map.class {
            rec = rec.u("class", class as u64);
        }
        report.emit(rec);
    } else if bytes.starts_with(b"HCNN") {
        let net = parse_checkpoint::<f64>(&bytes)?;
        let arch = &net.arch;
        report.emit(
            Record::new("inspect")
                .w("kind", "hcnn")
                .u("input_planes", arch.input_planes as u64)
                .u("input_size", arch.input_size as u64)
                .u("conv_layers", arch.conv_channels.len() as u64)
                .u("fc_layers", arch.fc_sizes.len() as u64)
                .u("classes", arch.classes as u64)
                .u("params", net.param_count() as u64)
                .u("bytes", bytes.len() as u64)
                .f("rescale", net.rescale),
        );
    } else if bytes.starts_with(b"STMA") {
        let t = parse_stm(&bytes)?;
        let gap = (&t.a - &Array2::<f64>::eye(t.dim()))
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let shift = t.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        report.emit(
            Record::new("inspect")
                .w("kind", "stma")
                .u("dim", t.dim() as u64)
                .f("identity_gap", gap)
                .f("bias_norm", shift),
        );
    } else if ext == "gnt" {
        let samples = parse_gnt(&bytes)?;
        let codes: BTreeSet<[u8; 2]> = samples.iter().map(|s| s.tag).collect();
        report.emit(
            Record::new("inspect")
                .w("kind", "gnt")
                .u("records", samples.len() as u64)
                .u("distinct_codes", codes.len() as u64),
        );
    } else if ext == "pot" {
        let samples = parse_pot(&bytes)?;
        let codes: BTreeSet<[u8; 4]> = samples.iter().map(|s| s.tag).collect();
        report.emit(
            Record::new("inspect")
                .w("kind", "pot")
                .u("records", samples.len() as u64)
                .u("distinct_codes", codes.len() as u64),
        );
    } else if let Ok(text) = std::str::from_utf8(&bytes) {
        let manifest = Manifest::from_text(text)?;
        let writers: BTreeSet<u32> = manifest.entries().iter().map(|e| e.writer).collect();
        report.emit(
            Record::new("inspect")
                .w("kind", "manifest")
                .u("entries", manifest.entries().len() as u64)
                .u("classes", manifest.class_count() as u64)
                .u("writers", writers.len() as u64)
                .u("train", manifest.indices_in(Split::Train).len() as u64)
                .u("test", manifest.indices_in(Split::Test).len() as u64)
                .u("adapt", manifest.indices_in(Split::Adapt).len() as u64),
        );
    } else {
        return Err(data_err(format!(
            "{}: unrecognized file format",
            path.display()
        )));
    }
    Ok(report)
}
