//! Generate the synthetic dataset: one GNT and one POT container per writer
//! plus offline and online manifests, all under the output directory.

use crate::config::ExperimentConfig;
use crate::errors::Result;
use crate::metrics::{MetricsReport, Record};
use hccr_core::sample_io::{serialize_gnt, serialize_pot, Manifest, ManifestEntry, SynthItem};
use std::collections::BTreeMap;

pub fn run(config: &ExperimentConfig) -> Result<MetricsReport> {
    let out_dir = config.out_dir();
    std::fs::create_dir_all(&out_dir)?;

    let items = config.synth.generate();
    let mut by_writer: BTreeMap<u32, Vec<&SynthItem>> = BTreeMap::new();
    for item in &items {
        by_writer.entry(item.writer).or_default().push(item);
    }

    let mut offline_entries = Vec::new();
    let mut online_entries = Vec::new();
    for (&writer, group) in &by_writer {
        let gnt_name = format!("w{writer:03}.gnt");
        let pot_name = format!("w{writer:03}.pot");
        let mut gnt = Vec::new();
        let mut pot = Vec::new();
        for item in group {
            offline_entries.push(ManifestEntry {
                path: gnt_name.clone(),
                offset: gnt.len() as u64,
                code: item.class,
                writer,
                split: item.split,
            });
            gnt.extend_from_slice(&serialize_gnt(std::slice::from_ref(&item.offline)));
            online_entries.push(ManifestEntry {
                path: pot_name.clone(),
                offset: pot.len() as u64,
                code: item.class,
                writer,
                split: item.split,
            });
            pot.extend_from_slice(&serialize_pot(std::slice::from_ref(&item.online)));
        }
        std::fs::write(out_dir.join(&gnt_name), gnt)?;
        std::fs::write(out_dir.join(&pot_name), pot)?;
    }

    Manifest::build(offline_entries).save(&out_dir.join("manifest_offline.txt"))?;
    Manifest::build(online_entries).save(&out_dir.join("manifest_online.txt"))?;

    let mut report = MetricsReport::default();
    let train = items.iter().filter(|i| i.split.as_str() == "train").count();
    report.emit(
        Record::new("gen_synth")
            .u("writers", by_writer.len() as u64)
            .u("classes", config.synth.classes as u64)
            .u("items", items.len() as u64)
            .u("train", train as u64)
            .u("test", (items.len() - train) as u64),
    );
    report.save(&out_dir.join("gen_synth_metrics.txt"))?;
    Ok(report)
}
