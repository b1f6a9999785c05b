//! Unsupervised per-writer adaptation. Class means come from the train
//! split; each adaptation-split writer gets a style transform fitted to its
//! own unlabeled samples, and pre/post accuracy is measured on those same
//! samples. The fitted transform is written next to the metrics as an STMA
//! file per writer.

use crate::cache::load_cache;
use crate::config::ExperimentConfig;
use crate::dataset::dense_labels;
use crate::errors::{data_err, Result};
use crate::metrics::{MetricsReport, Record};
use hccr_core::adaptation::{
    adapt_unsupervised_features, class_means, error_reduction_rate, serialize_stm, AdaptOutcome,
    StyleTransform,
};
use hccr_core::convnet::{parse_checkpoint, source_features, Scalar};
use hccr_core::sample_io::Split;
use ndarray::{Array1, Array2};
use rayon::prelude::*;

fn argmax_low(v: &Array1<f64>) -> u32 {
    let mut best = 0usize;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as u32
}

fn accuracy(preds: &[u32], truth: &[u32]) -> f64 {
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / preds.len().max(1) as f64
}

pub fn run<T: Scalar>(config: &ExperimentConfig) -> Result<MetricsReport> {
    let (manifest, maps) = load_cache(&config.cache_dir())?;
    let labels = dense_labels(&manifest)?;
    let classes = manifest.class_count();

    let ckpt_path = config.checkpoint_paths()[0].clone();
    let bytes =
        std::fs::read(&ckpt_path).map_err(|e| data_err(format!("{}: {e}", ckpt_path.display())))?;
    let net = parse_checkpoint::<T>(&bytes)?;
    let out = net
        .layers
        .last()
        .ok_or_else(|| data_err("checkpoint has no layers"))?;
    let out_weight: Array2<f64> = out.weight.mapv(Scalar::to_f64);
    let out_bias: Array1<f64> = out.bias.mapv(Scalar::to_f64);

    // Bottleneck features for every cached map, in manifest order.
    let phis: Vec<Array1<f64>> = maps
        .par_iter()
        .map(|m| {
            let typed = m.data.mapv(|v| T::from_f64(v as f64));
            source_features(&net, &typed).map(|f| f.mapv(Scalar::to_f64))
        })
        .collect::<hccr_core::Result<_>>()?;

    let train_idx = manifest.indices_in(Split::Train);
    if train_idx.is_empty() {
        return Err(data_err("manifest has no train-split samples for class means"));
    }
    let mean_feats: Vec<Array1<f64>> = train_idx.iter().map(|&i| phis[i].clone()).collect();
    let mean_labels: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
    let means = class_means(&mean_feats, &mean_labels, classes)?;

    let adapt_split = if manifest.indices_in(Split::Adapt).is_empty() {
        Split::Test
    } else {
        Split::Adapt
    };
    let writers = manifest.writers_in(adapt_split);
    if writers.is_empty() {
        return Err(data_err("manifest has no samples to adapt on"));
    }

    struct WriterRun {
        writer: u32,
        samples: usize,
        pre: f64,
        post: f64,
        dropped: usize,
        transform: StyleTransform,
    }

    let split_idx = manifest.indices_in(adapt_split);
    let runs: Vec<hccr_core::Result<Option<WriterRun>>> = writers
        .par_iter()
        .map(|&writer| {
            let mine: Vec<usize> = split_idx
                .iter()
                .copied()
                .filter(|&i| maps[i].writer == writer)
                .collect();
            if mine.is_empty() {
                return Ok(None);
            }
            let w_phis: Vec<Array1<f64>> = mine.iter().map(|&i| phis[i].clone()).collect();
            let truth: Vec<u32> = mine.iter().map(|&i| labels[i]).collect();
            let pre_preds: Vec<u32> = w_phis
                .iter()
                .map(|phi| argmax_low(&(out_weight.dot(phi) + &out_bias)))
                .collect();
            let pre = accuracy(&pre_preds, &truth);

            let outcome = if config.adapt.beta_tilde >= 1.0 {
                // Fully regularized: the transform is pinned to identity and
                // predictions cannot move.
                AdaptOutcome {
                    predictions: pre_preds,
                    confidences: vec![1.0; mine.len()],
                    transform: StyleTransform::identity(w_phis[0].len()),
                    dropped: 0,
                }
            } else {
                adapt_unsupervised_features(&out_weight, &out_bias, &means, &w_phis, &config.adapt)?
            };
            let post = accuracy(&outcome.predictions, &truth);
            Ok(Some(WriterRun {
                writer,
                samples: mine.len(),
                pre,
                post,
                dropped: outcome.dropped,
                transform: outcome.transform,
            }))
        })
        .collect();

    let out_dir = config.out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut report = MetricsReport::default();
    let mut pre_sum = 0.0;
    let mut post_sum = 0.0;
    let mut err_sum = 0.0;
    let mut rated = 0usize;
    let mut counted = 0usize;
    for run in runs {
        let Some(run) = run? else {
            eprintln!("warning: skipping a writer with no samples in the adaptation split");
            continue;
        };
        let err_reduction = error_reduction_rate(1.0 - run.pre, 1.0 - run.post);
        report.emit(
            Record::new("adapt")
                .u("writer", run.writer as u64)
                .u("samples", run.samples as u64)
                .f("pre", run.pre)
                .f("post", run.post)
                .f_opt("err_reduction", err_reduction)
                .u("dropped", run.dropped as u64),
        );
        std::fs::write(
            out_dir.join(format!("writer_{:03}.stma", run.writer)),
            serialize_stm(&run.transform),
        )?;
        pre_sum += run.pre;
        post_sum += run.post;
        if let Some(r) = err_reduction {
            err_sum += r;
            rated += 1;
        }
        counted += 1;
    }
    let k = counted.max(1) as f64;
    report.emit(
        Record::new("adapt_summary")
            .u("writers", counted as u64)
            .f("mean_pre", pre_sum / k)
            .f("mean_post", post_sum / k)
            .f_opt(
                "mean_err_reduction",
                (rated > 0).then(|| err_sum / rated as f64),
            )
            .u("rated", rated as u64),
    );
    report.save(&out_dir.join("adapt_metrics.txt"))?;
    Ok(report)
}
