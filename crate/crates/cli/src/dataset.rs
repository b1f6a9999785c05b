//! Loading samples named by a manifest. Container files are read once and
//! records parsed at their manifest offsets; the manifest's label code and
//! writer id are authoritative.

use crate::errors::{data_err, Result};
use hccr_core::directmap::Modality;
use hccr_core::sample_io::{
    parse_gnt_record_at, parse_pot_record_at, Manifest, OfflineSample, OnlineSample,
};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub enum Sample {
    Offline(OfflineSample),
    Online(OnlineSample),
}

/// Read every sample of a manifest, in entry order.
pub fn load_samples(
    manifest_path: &Path,
    manifest: &Manifest,
    modality: Modality,
) -> Result<Vec<Sample>> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut files: HashMap<&str, Vec<u8>> = HashMap::new();
    let mut samples = Vec::with_capacity(manifest.entries().len());

    for entry in manifest.entries() {
        if !files.contains_key(entry.path.as_str()) {
            let bytes = std::fs::read(dir.join(&entry.path)).map_err(|e| {
                data_err(format!("cannot read container {}: {e}", entry.path))
            })?;
            files.insert(entry.path.as_str(), bytes);
        }
        let bytes = &files[entry.path.as_str()];
        let is_online = entry.path.ends_with(".pot");
        if is_online != (modality == Modality::Online) {
            return Err(data_err(format!(
                "container {} does not match the {} modality",
                entry.path,
                if modality == Modality::Online { "online" } else { "offline" },
            )));
        }
        let sample = if is_online {
            let (mut s, _) = parse_pot_record_at(bytes, entry.offset).map_err(|e| {
                data_err(format!("{} at offset {}: {e}", entry.path, entry.offset))
            })?;
            s.class = Some(entry.code);
            s.writer = entry.writer;
            Sample::Online(s)
        } else {
            let (mut s, _) = parse_gnt_record_at(bytes, entry.offset).map_err(|e| {
                data_err(format!("{} at offset {}: {e}", entry.path, entry.offset))
            })?;
            s.class = Some(entry.code);
            s.writer = entry.writer;
            Sample::Offline(s)
        };
        samples.push(sample);
    }
    Ok(samples)
}

/// Dense class labels of every entry, in entry order.
pub fn dense_labels(manifest: &Manifest) -> Result<Vec<u32>> {
    manifest
        .entries()
        .iter()
        .map(|e| {
            manifest
                .class_of(e.code)
                .ok_or_else(|| data_err(format!("label code {} missing from vocabulary", e.code)))
        })
        .collect()
}
