//! Extraction cache layout: a directory holding a copy of the source
//! manifest plus one DMAP file per entry, named by the entry index. The
//! cache is self-contained; labels, writers and splits come from the copied
//! manifest.

use crate::errors::{data_err, Result};
use hccr_core::directmap::{parse_dmap, serialize_dmap, DirectMap};
use hccr_core::sample_io::Manifest;
use std::path::{Path, PathBuf};

pub fn map_path(cache_dir: &Path, index: usize) -> PathBuf {
    cache_dir.join(format!("{index:06}.dmap"))
}

pub fn manifest_path(cache_dir: &Path) -> PathBuf {
    cache_dir.join("manifest.txt")
}

/// Write the cache: the manifest text verbatim plus every map. Rerunning
/// with identical inputs reproduces every byte.
pub fn write_cache(cache_dir: &Path, manifest_text: &str, maps: &[DirectMap]) -> Result<()> {
    std::fs::create_dir_all(cache_dir)?;
    std::fs::write(manifest_path(cache_dir), manifest_text)?;
    for (i, map) in maps.iter().enumerate() {
        std::fs::write(map_path(cache_dir, i), serialize_dmap(map))?;
    }
    Ok(())
}

pub fn load_cache(cache_dir: &Path) -> Result<(Manifest, Vec<DirectMap>)> {
    let manifest = Manifest::load(&manifest_path(cache_dir)).map_err(|e| {
        data_err(format!(
            "no extraction cache at {}: {e} (run extract first)",
            cache_dir.display()
        ))
    })?;
    let mut maps = Vec::with_capacity(manifest.entries().len());
    for i in 0..manifest.entries().len() {
        let path = map_path(cache_dir, i);
        let bytes = std::fs::read(&path)
            .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
        let map = parse_dmap(&bytes)
            .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        maps.push(map);
    }
    Ok((manifest, maps))
}
