//! Per-character wall-clock timings: feature extraction and network
//! inference, single-threaded, batch-1, with all file I/O done before the
//! clocks start.

use crate::cache::load_cache;
use crate::config::ExperimentConfig;
use crate::dataset::{load_samples, Sample};
use crate::errors::{data_err, Result};
use crate::metrics::{MetricsReport, Record};
use hccr_core::convnet::{logits, parse_checkpoint, Scalar};
use hccr_core::directmap::{extract_offline, extract_online};
use ndarray::Array3;
use std::time::Instant;

fn stats(mut ms: Vec<f64>) -> (f64, f64) {
    let mean = ms.iter().sum::<f64>() / ms.len().max(1) as f64;
    ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if ms.is_empty() {
        0.0
    } else if ms.len() % 2 == 1 {
        ms[ms.len() / 2]
    } else {
        (ms[ms.len() / 2 - 1] + ms[ms.len() / 2]) / 2.0
    };
    (mean, median)
}

pub fn run<T: Scalar>(config: &ExperimentConfig) -> Result<MetricsReport> {
    let manifest_path = config.manifest_path()?;
    let manifest_text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| data_err(format!("{}: {e}", manifest_path.display())))?;
    let manifest = hccr_core::sample_io::Manifest::from_text(&manifest_text)?;
    let samples = load_samples(&manifest_path, &manifest, config.modality)?;
    if samples.is_empty() {
        return Err(data_err("manifest is empty"));
    }

    let k = samples.len().min(200);
    let mut extract_ms = Vec::with_capacity(k);
    for sample in samples.iter().take(k) {
        let t = Instant::now();
        match sample {
            Sample::Offline(s) => extract_offline(s, &config.extract)?,
            Sample::Online(s) => extract_online(s, &config.extract)?,
        };
        extract_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (ext_mean, ext_median) = stats(extract_ms);

    let (_, maps) = load_cache(&config.cache_dir())?;
    let ckpt_path = config.checkpoint_paths()[0].clone();
    let bytes =
        std::fs::read(&ckpt_path).map_err(|e| data_err(format!("{}: {e}", ckpt_path.display())))?;
    let net = parse_checkpoint::<T>(&bytes)?;
    let typed: Vec<Array3<T>> = maps
        .iter()
        .take(k)
        .map(|m| m.data.mapv(|v| T::from_f64(v as f64)))
        .collect();
    let mut infer_ms = Vec::with_capacity(typed.len());
    for map in &typed {
        let t = Instant::now();
        let _ = logits(&net, map)?;
        infer_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (inf_mean, inf_median) = stats(infer_ms);

    let mut report = MetricsReport::default();
    report.emit(
        Record::new("bench")
            .w("stage", "extract")
            .u("chars", k as u64)
            .f("mean_ms", ext_mean)
            .f("median_ms", ext_median),
    );
    report.emit(
        Record::new("bench")
            .w("stage", "inference")
            .u("chars", typed.len() as u64)
            .f("mean_ms", inf_mean)
            .f("median_ms", inf_median),
    );
    report.emit(
        Record::new("model")
            .u("params", net.param_count() as u64)
            .u("bytes", bytes.len() as u64),
    );
    std::fs::create_dir_all(config.out_dir())?;
    report.save(&config.out_dir().join("bench_metrics.txt"))?;
    Ok(report)
}
