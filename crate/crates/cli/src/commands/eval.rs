//! Evaluate one or more checkpoints on the test split: cumulative top-N
//! accuracy, per-writer accuracy, the most frequent confusions, and
//! single-threaded inference timing.

use crate::cache::load_cache;
use crate::config::ExperimentConfig;
use crate::dataset::dense_labels;
use crate::errors::{data_err, Result};
use crate::metrics::{MetricsReport, Record};
use hccr_core::convnet::{logits, parse_checkpoint, top_n, NetworkParams, Scalar};
use hccr_core::sample_io::Split;
use ndarray::Array3;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

fn load_checkpoints<T: Scalar>(config: &ExperimentConfig) -> Result<Vec<NetworkParams<T>>> {
    let mut nets = Vec::new();
    for path in config.checkpoint_paths() {
        let bytes = std::fs::read(&path)
            .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        nets.push(parse_checkpoint::<T>(&bytes)?);
    }
    Ok(nets)
}

pub fn run<T: Scalar>(config: &ExperimentConfig) -> Result<MetricsReport> {
    let (manifest, maps) = load_cache(&config.cache_dir())?;
    let labels = dense_labels(&manifest)?;
    let test_idx = manifest.indices_in(Split::Test);
    if test_idx.is_empty() {
        return Err(data_err("manifest has no test-split samples"));
    }

    let nets = load_checkpoints::<T>(config)?;
    let net_refs: Vec<&NetworkParams<T>> = nets.iter().collect();
    let classes = manifest.class_count();
    let top_cap = config.top_n.min(classes);

    let typed: Vec<(usize, Array3<T>)> = test_idx
        .iter()
        .map(|&i| (i, maps[i].data.mapv(|v| T::from_f64(v as f64))))
        .collect();

    let ranked: Vec<Vec<(u32, f64)>> = typed
        .par_iter()
        .map(|(_, map)| top_n(&net_refs, map, top_cap))
        .collect::<hccr_core::Result<_>>()?;

    // Cumulative top-N hits, per-writer top-1, and confusion pairs.
    let mut top_hits = vec![0usize; top_cap];
    let mut by_writer: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut confusion: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for ((sample_idx, _), ranks) in typed.iter().zip(&ranked) {
        let truth = labels[*sample_idx];
        let writer = maps[*sample_idx].writer;
        if let Some(pos) = ranks.iter().position(|&(c, _)| c == truth) {
            for slot in top_hits.iter_mut().skip(pos) {
                *slot += 1;
            }
        }
        let entry = by_writer.entry(writer).or_insert((0, 0));
        entry.1 += 1;
        let top1 = ranks[0].0;
        if top1 == truth {
            entry.0 += 1;
        } else {
            *confusion.entry((truth, top1)).or_insert(0) += 1;
        }
    }

    let n = test_idx.len();
    let mut report = MetricsReport::default();
    report.emit(
        Record::new("eval_setup")
            .u("samples", n as u64)
            .u("classes", classes as u64)
            .u("nets", nets.len() as u64),
    );
    for (i, hits) in top_hits.iter().enumerate() {
        report.emit(
            Record::new("top_n")
                .u("n", (i + 1) as u64)
                .f("accuracy", *hits as f64 / n as f64),
        );
    }
    for (writer, (hits, total)) in &by_writer {
        report.emit(
            Record::new("writer_acc")
                .u("writer", *writer as u64)
                .u("samples", *total as u64)
                .f("accuracy", *hits as f64 / *total as f64),
        );
    }
    let mut pairs: Vec<((u32, u32), usize)> = confusion.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for ((truth, pred), count) in pairs.into_iter().take(10) {
        report.emit(
            Record::new("confusion")
                .u("truth", truth as u64)
                .u("predicted", pred as u64)
                .u("count", count as u64),
        );
    }

    // Timing: batch-1 forward passes on one thread, maps already in memory.
    let timed = typed.len().min(100);
    let started = Instant::now();
    for (_, map) in typed.iter().take(timed) {
        for net in &net_refs {
            let _ = logits(net, map)?;
        }
    }
    let elapsed = started.elapsed();
    report.emit(
        Record::new("eval_time")
            .u("timed", timed as u64)
            .f("per_sample_ms", elapsed.as_secs_f64() * 1e3 / timed.max(1) as f64),
    );
    let model_bytes: u64 = config
        .checkpoint_paths()
        .iter()
        .map(|p| std::fs::metadata(p).map(|m| m.len()).unwrap_or(0))
        .sum();
    report.emit(
        Record::new("model")
            .u("params", nets.iter().map(|p| p.param_count() as u64).sum())
            .u("bytes", model_bytes),
    );
    std::fs::create_dir_all(config.out_dir())?;
    report.save(&config.out_dir().join("eval_metrics.txt"))?;
    Ok(report)
}
