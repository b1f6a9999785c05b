//! Train a network on the cached training maps, logging per-epoch train and
//! test accuracy, and save the checkpoint.

use crate::cache::load_cache;
use crate::config::ExperimentConfig;
use crate::dataset::dense_labels;
use crate::errors::{data_err, Result};
use crate::metrics::{MetricsReport, Record};
use hccr_core::convnet::{
    fit_with, predict, serialize_checkpoint, EpochLog, NetworkParams, Scalar,
};
use hccr_core::sample_io::Split;
use ndarray::Array3;
use rayon::prelude::*;
use std::time::Instant;

fn split_accuracy<T: Scalar>(
    params: &NetworkParams<T>,
    maps: &[Array3<T>],
    labels: &[u32],
    indices: &[usize],
) -> f64 {
    if indices.is_empty() {
        return f64::NAN;
    }
    let hits: usize = indices
        .par_iter()
        .filter(|&&i| predict(&[params], &maps[i]).map_or(false, |p| p == labels[i]))
        .count();
    hits as f64 / indices.len() as f64
}

pub fn run<T: Scalar>(config: &ExperimentConfig) -> Result<MetricsReport> {
    let (manifest, maps) = load_cache(&config.cache_dir())?;
    let labels = dense_labels(&manifest)?;
    let train_idx = manifest.indices_in(Split::Train);
    let test_idx = manifest.indices_in(Split::Test);
    if train_idx.is_empty() {
        return Err(data_err("manifest has no train-split samples"));
    }

    let typed: Vec<Array3<T>> = maps
        .iter()
        .map(|m| m.data.mapv(|v| T::from_f64(v as f64)))
        .collect();
    let train_maps: Vec<Array3<T>> = train_idx.iter().map(|&i| typed[i].clone()).collect();
    let train_labels: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();

    let first = &maps[train_idx[0]];
    let arch = config
        .arch
        .build(first.planes(), first.size(), manifest.class_count())?;

    let mut report = MetricsReport::default();
    report.emit(
        Record::new("train_setup")
            .u("train", train_idx.len() as u64)
            .u("test", test_idx.len() as u64)
            .u("classes", manifest.class_count() as u64)
            .u("params", arch.param_count() as u64)
            .u("seed", config.train.seed),
    );

    let mut params = NetworkParams::<T>::init(&arch, config.train.seed)?;
    let started = Instant::now();
    let mut epoch_records = Vec::new();
    let outcome = fit_with(
        &mut params,
        &train_maps,
        &train_labels,
        &config.train,
        |p: &NetworkParams<T>, log: &EpochLog| {
            let test_acc = split_accuracy(p, &typed, &labels, &test_idx);
            let rec = Record::new("epoch")
                .u("n", log.epoch as u64)
                .f("loss", log.loss)
                .f("train_acc", log.train_accuracy)
                .f_opt("test_acc", (!test_acc.is_nan()).then_some(test_acc))
                .f("lr", log.learning_rate)
                .u("decays", log.decays as u64);
            println!("{rec}");
            epoch_records.push(rec);
        },
    );
    let elapsed = started.elapsed();

    for rec in epoch_records {
        report.push(rec);
    }
    let out_dir = config.out_dir();
    std::fs::create_dir_all(&out_dir)?;

    let logs = match outcome {
        Ok(logs) => logs,
        Err(e) => {
            report.save(&out_dir.join("train_log.txt"))?;
            return Err(e.into());
        }
    };

    let mut last_decays = 0;
    for log in &logs {
        if log.decays > last_decays {
            report.emit(
                Record::new("decay")
                    .u("epoch", log.epoch as u64)
                    .f("lr", log.learning_rate),
            );
            last_decays = log.decays;
        }
    }

    let bytes = serialize_checkpoint(&params);
    let model_path = out_dir.join("model.hcnn");
    std::fs::write(&model_path, &bytes)?;
    report.emit(
        Record::new("model")
            .u("params", params.param_count() as u64)
            .u("bytes", bytes.len() as u64)
            .u("epochs", logs.len() as u64)
            .f("rescale", Scalar::to_f64(params.rescale)),
    );
    report.save(&out_dir.join("train_log.txt"))?;

    let mut timing = MetricsReport::default();
    timing.emit(Record::new("train_time").f("total_s", elapsed.as_secs_f64()));
    timing.save(&out_dir.join("train_time.txt"))?;
    Ok(report)
}
