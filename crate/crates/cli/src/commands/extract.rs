//! Extract feature maps for every manifest entry and store them in the cache
//! directory, one DMAP file per sample plus a copy of the manifest text.

use crate::cache::write_cache;
use crate::config::ExperimentConfig;
use crate::dataset::{load_samples, Sample};
use crate::errors::{data_err, Result};
use crate::metrics::{MetricsReport, Record};
use hccr_core::directmap::{
    extract_offline, extract_online, resample_field, DirectMap, ExtractStats, Modality,
};
use hccr_core::sample_io::Manifest;
use hccr_core::shape_norm::{fit_map, gray_normalize, NormSource};
use rayon::prelude::*;
use std::time::Instant;

/// Single-plane map holding the resampled gray image itself. The baseline
/// ablation that feeds the raw normalized image to the net instead of
/// direction planes.
fn raw_map(
    sample: &hccr_core::sample_io::OfflineSample,
    config: &ExperimentConfig,
) -> hccr_core::Result<(DirectMap, ExtractStats)> {
    let ex = &config.extract;
    let n = ex.map_size;
    let field = gray_normalize(sample, ex.gray);
    let map = fit_map(ex.method, &NormSource::Field(&field), n, ex.aspect)?;
    let out = resample_field(&field, &map, n);
    let input_mass: f64 = field.sum();
    let kept_mass: f64 = out.sum();
    let data = out
        .mapv(|v| v as f32)
        .into_shape_with_order((1, n, n))
        .expect("n*n plane");
    let map = DirectMap {
        data,
        modality: Modality::Offline,
        class: sample.class,
        writer: sample.writer,
    };
    let stats = ExtractStats {
        input_mass,
        kept_mass,
        clipped_mass: (input_mass - kept_mass).max(0.0),
    };
    Ok((map, stats))
}

pub fn run(config: &ExperimentConfig) -> Result<MetricsReport> {
    let manifest_path = config.manifest_path()?;
    let manifest_text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| data_err(format!("{}: {e}", manifest_path.display())))?;
    let manifest = Manifest::from_text(&manifest_text)?;
    let samples = load_samples(&manifest_path, &manifest, config.modality)?;

    let started = Instant::now();
    let extracted: Vec<hccr_core::Result<(DirectMap, ExtractStats)>> = samples
        .par_iter()
        .map(|sample| match sample {
            Sample::Offline(s) if config.raw_image => raw_map(s, config),
            Sample::Offline(s) => extract_offline(s, &config.extract),
            Sample::Online(s) => extract_online(s, &config.extract),
        })
        .collect();
    let elapsed = started.elapsed();

    let mut maps = Vec::with_capacity(extracted.len());
    let mut input_mass = 0.0;
    let mut kept_mass = 0.0;
    let mut clipped_mass = 0.0;
    let mut sparsity_sum = 0.0;
    for (i, item) in extracted.into_iter().enumerate() {
        let (map, stats) =
            item.map_err(|e| data_err(format!("sample {i} ({}): {e}", manifest.entries()[i].path)))?;
        input_mass += stats.input_mass;
        kept_mass += stats.kept_mass;
        clipped_mass += stats.clipped_mass;
        sparsity_sum += map.sparsity();
        maps.push(map);
    }

    let cache_dir = config.cache_dir();
    write_cache(&cache_dir, &manifest_text, &maps)?;

    let n = maps.len().max(1) as f64;
    let mut report = MetricsReport::default();
    report.emit(
        Record::new("extract")
            .u("samples", maps.len() as u64)
            .u("planes", maps.first().map_or(0, |m| m.planes()) as u64)
            .u("map_size", config.extract.map_size as u64)
            .w("cooperation", if config.extract.cooperated { "cooperated" } else { "based" })
            .f("mean_sparsity", sparsity_sum / n),
    );
    report.emit(
        Record::new("extract_mass")
            .f("input", input_mass)
            .f("kept", kept_mass)
            .f("clipped", clipped_mass),
    );
    report.emit(
        Record::new("extract_time")
            .f("total_ms", elapsed.as_secs_f64() * 1e3)
            .f("per_sample_ms", elapsed.as_secs_f64() * 1e3 / n),
    );
    std::fs::create_dir_all(config.out_dir())?;
    report.save(&config.out_dir().join("extract_metrics.txt"))?;
    Ok(report)
}
