//! Experiment configuration: a line-oriented `key = value` file with
//! `[section]` headers and `#` comments. Unknown keys are rejected so typos
//! surface as config errors instead of silently running defaults.
//!
//! Paths in the file resolve relative to the directory containing it.

use crate::errors::{config_err, CliError, Result};
use hccr_core::adaptation::AdaptConfig;
use hccr_core::convnet::{Architecture, TrainConfig};
use hccr_core::directmap::{ExtractConfig, Modality};
use hccr_core::sample_io::SynthConfig;
use hccr_core::shape_norm::{Aspect, GrayNorm, NormMethod};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

struct Raw {
    values: BTreeMap<(String, String), (String, usize)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Raw> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    config_err(format!("line {}: unterminated section header", lineno + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_err(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(config_err(format!("line {}: empty key", lineno + 1)));
            }
            if let Some((_, first)) = values.insert((section.clone(), key.clone()), (value, lineno + 1))
            {
                return Err(config_err(format!(
                    "line {}: key {key:?} in section [{section}] already set on line {first}",
                    lineno + 1
                )));
            }
        }
        Ok(Raw { values })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.values
            .remove(&(section.to_string(), key.to_string()))
            .map(|(v, _)| v)
    }

    fn finish(self) -> Result<()> {
        if let Some(((section, key), (_, line))) = self.values.into_iter().next() {
            return Err(config_err(format!(
                "line {line}: unknown key {key:?} in section [{section}]"
            )));
        }
        Ok(())
    }
}

fn parse_as<T: FromStr>(section: &str, key: &str, s: &str) -> Result<T>
where
    T::Err: Display,
{
    s.parse().map_err(|e| {
        config_err(format!("[{section}] {key} = {s:?}: {e}"))
    })
}

fn take_or<T: FromStr>(raw: &mut Raw, section: &str, key: &str, default: T) -> Result<T>
where
    T::Err: Display,
{
    match raw.take(section, key) {
        Some(s) => parse_as(section, key, &s),
        None => Ok(default),
    }
}

fn parse_list<T: FromStr>(section: &str, key: &str, s: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    s.split(',')
        .map(|part| parse_as(section, key, part.trim()))
        .collect()
}

fn parse_bool(section: &str, key: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(config_err(format!(
            "[{section}] {key} = {other:?}: expected true or false"
        ))),
    }
}

/// Network layout requested by the config; the input shape and class count
/// come from the extracted data at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub conv_channels: Vec<usize>,
    pub pool_after: Vec<bool>,
    pub fc_sizes: Vec<usize>,
    pub dropout: Vec<f64>,
    pub leaky_slope: f64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        let full = Architecture::full();
        ArchSpec {
            conv_channels: full.conv_channels,
            pool_after: full.pool_after,
            fc_sizes: full.fc_sizes,
            dropout: full.dropout,
            leaky_slope: full.leaky_slope,
        }
    }
}

impl ArchSpec {
    pub fn build(
        &self,
        input_planes: usize,
        input_size: usize,
        classes: usize,
    ) -> Result<Architecture> {
        let arch = Architecture {
            input_planes,
            input_size,
            conv_channels: self.conv_channels.clone(),
            pool_after: self.pool_after.clone(),
            fc_sizes: self.fc_sizes.clone(),
            classes,
            leaky_slope: self.leaky_slope,
            dropout: self.dropout.clone(),
        };
        arch.validate()
            .map_err(|e| config_err(format!("architecture: {e}")))?;
        Ok(arch)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub modality: Modality,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub extract: ExtractConfig,
    /// Ablation: feed the normalized gray image as a single input plane
    /// instead of the direction maps.
    pub raw_image: bool,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    /// beta_tilde = 1.0 is allowed here and pins the identity transform
    /// (adaptation disabled); the solver itself works on [0, 1).
    pub adapt: AdaptConfig,
    pub checkpoints: Vec<PathBuf>,
    pub top_n: usize,
    pub synth: SynthConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            config_err(format!("cannot read config {}: {e}", path.display()))
        })?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_text(&text, base_dir)
    }

    pub fn from_text(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut raw = Raw::parse(text)?;

        let manifest = raw.take("data", "manifest").map(PathBuf::from);
        let modality = match raw.take("data", "modality").as_deref() {
            None | Some("offline") => Modality::Offline,
            Some("online") => Modality::Online,
            Some(other) => {
                return Err(config_err(format!(
                    "[data] modality = {other:?}: expected offline or online"
                )))
            }
        };
        let out_dir = PathBuf::from(
            raw.take("data", "out_dir")
                .ok_or_else(|| config_err("[data] out_dir is required"))?,
        );
        let cache_dir = raw
            .take("data", "cache_dir")
            .map(PathBuf::from)
            .unwrap_or_else(|| out_dir.join("cache"));

        let d = ExtractConfig::default();
        // Trajectories carry no gray levels; only an explicit non-none gray
        // mode is a contradiction there.
        let default_gray = match modality {
            Modality::Online => GrayNorm::None,
            Modality::Offline => d.gray,
        };
        let extract = ExtractConfig {
            gray: take_or(&mut raw, "extract", "gray", default_gray)?,
            method: take_or(&mut raw, "extract", "method", d.method)?,
            aspect: take_or(&mut raw, "extract", "aspect", d.aspect)?,
            map_size: take_or(&mut raw, "extract", "map_size", d.map_size)?,
            cooperated: match raw.take("extract", "cooperation").as_deref() {
                None | Some("cooperated") => true,
                Some("based") => false,
                Some(other) => {
                    return Err(config_err(format!(
                        "[extract] cooperation = {other:?}: expected cooperated or based"
                    )))
                }
            },
        };
        let raw_image = match raw.take("extract", "raw_image") {
            Some(s) => parse_bool("extract", "raw_image", &s)?,
            None => false,
        };

        let mut arch = ArchSpec::default();
        let conv_overridden = raw.take("arch", "conv");
        if let Some(s) = &conv_overridden {
            arch.conv_channels = parse_list("arch", "conv", s)?;
            arch.pool_after = vec![true; arch.conv_channels.len()];
        }
        if let Some(s) = raw.take("arch", "pool") {
            let flags: Vec<u8> = parse_list("arch", "pool", &s)?;
            arch.pool_after = flags.iter().map(|&f| f != 0).collect();
        }
        let fc_overridden = raw.take("arch", "fc");
        if let Some(s) = &fc_overridden {
            arch.fc_sizes = parse_list("arch", "fc", s)?;
        }
        if let Some(s) = raw.take("arch", "dropout") {
            arch.dropout = parse_list("arch", "dropout", &s)?;
        } else if conv_overridden.is_some() || fc_overridden.is_some() {
            arch.dropout = vec![0.0; arch.conv_channels.len() + arch.fc_sizes.len()];
        }
        arch.leaky_slope = take_or(&mut raw, "arch", "leaky_slope", arch.leaky_slope)?;

        let td = TrainConfig::default();
        let train = TrainConfig {
            batch_size: take_or(&mut raw, "train", "batch_size", td.batch_size)?,
            momentum: take_or(&mut raw, "train", "momentum", td.momentum)?,
            learning_rate: take_or(&mut raw, "train", "learning_rate", td.learning_rate)?,
            decay_factor: take_or(&mut raw, "train", "decay_factor", td.decay_factor)?,
            weight_decay: take_or(&mut raw, "train", "weight_decay", td.weight_decay)?,
            patience: take_or(&mut raw, "train", "patience", td.patience)?,
            max_decays: take_or(&mut raw, "train", "max_decays", td.max_decays)?,
            max_epochs: take_or(&mut raw, "train", "max_epochs", td.max_epochs)?,
            seed: take_or(&mut raw, "train", "seed", td.seed)?,
        };

        let ad = AdaptConfig::default();
        let adapt = AdaptConfig {
            beta_tilde: take_or(&mut raw, "adapt", "beta_tilde", ad.beta_tilde)?,
            gamma: take_or(&mut raw, "adapt", "gamma", ad.gamma)?,
            iter_num: take_or(&mut raw, "adapt", "iter_num", ad.iter_num)?,
        };

        let checkpoints = match raw.take("eval", "checkpoints") {
            Some(s) => s.split(',').map(|p| PathBuf::from(p.trim())).collect(),
            None => Vec::new(),
        };
        let top_n = take_or(&mut raw, "eval", "top_n", 10usize)?;

        let sd = SynthConfig::default();
        let synth = SynthConfig {
            grammar_seed: take_or(&mut raw, "synth", "grammar_seed", sd.grammar_seed)?,
            classes: take_or(&mut raw, "synth", "classes", sd.classes)?,
            train_writers: take_or(&mut raw, "synth", "train_writers", sd.train_writers)?,
            test_writers: take_or(&mut raw, "synth", "test_writers", sd.test_writers)?,
            train_reps: take_or(&mut raw, "synth", "train_reps", sd.train_reps)?,
            test_reps: take_or(&mut raw, "synth", "test_reps", sd.test_reps)?,
            train_slant: take_or(&mut raw, "synth", "train_slant", sd.train_slant)?,
            test_slant: take_or(&mut raw, "synth", "test_slant", sd.test_slant)?,
            train_scale_dev: take_or(&mut raw, "synth", "train_scale_dev", sd.train_scale_dev)?,
            test_scale_dev: take_or(&mut raw, "synth", "test_scale_dev", sd.test_scale_dev)?,
            jitter: take_or(&mut raw, "synth", "jitter", sd.jitter)?,
            thickness: take_or(&mut raw, "synth", "thickness", sd.thickness)?,
        };

        raw.finish()?;

        let config = ExperimentConfig {
            base_dir,
            manifest,
            modality,
            out_dir,
            cache_dir,
            extract,
            raw_image,
            arch,
            train,
            adapt,
            checkpoints,
            top_n,
            synth,
        };
        config.validate()?;
        Ok(config)
    }

    /// Combination rules a run must satisfy regardless of command.
    pub fn validate(&self) -> Result<()> {
        if self.modality == Modality::Online {
            if self.extract.method == NormMethod::Ldpi {
                return Err(config_err(
                    "line-density normalization needs an image and is not applicable \
                     to online trajectories",
                ));
            }
            if self.extract.gray != GrayNorm::None {
                return Err(config_err(
                    "gray normalization applies to images; use gray = none for online data",
                ));
            }
            if self.raw_image {
                return Err(config_err(
                    "raw_image ablation needs an image; not applicable to online data",
                ));
            }
        }
        if self.extract.map_size < 4 || self.extract.map_size > 255 {
            return Err(config_err(format!(
                "map_size {} outside [4, 255]",
                self.extract.map_size
            )));
        }
        if self.top_n == 0 {
            return Err(config_err("top_n must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.adapt.beta_tilde) {
            return Err(config_err(format!(
                "beta_tilde {} outside [0, 1]",
                self.adapt.beta_tilde
            )));
        }
        if self.adapt.beta_tilde < 1.0 {
            self.adapt
                .validate()
                .map_err(|e| config_err(e.to_string()))?;
        } else if self.adapt.gamma < 0.0 || self.adapt.iter_num == 0 {
            return Err(config_err("bad adaptation constants"));
        }
        self.train
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if self.synth.classes < 2 || self.synth.train_writers == 0 {
            return Err(config_err("synthetic set needs >= 2 classes and >= 1 training writer"));
        }
        Ok(())
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    pub fn manifest_path(&self) -> Result<PathBuf> {
        self.manifest
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| config_err("[data] manifest is required for this command"))
    }

    /// Checkpoint paths, defaulting to the train command's output.
    pub fn checkpoint_paths(&self) -> Vec<PathBuf> {
        if self.checkpoints.is_empty() {
            vec![self.out_dir().join("model.hcnn")]
        } else {
            self.checkpoints.iter().map(|p| self.resolve(p)).collect()
        }
    }

    /// Aspect knob is carried in extract; expose for ablation tables.
    pub fn aspect(&self) -> Aspect {
        self.extract.aspect
    }
}

/// The precision flag: which scalar the network math runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "32" => Ok(Precision::F32),
            "64" => Ok(Precision::F64),
            other => Err(config_err(format!(
                "precision {other:?}: expected 32 or 64"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_text(text, PathBuf::from("/tmp/exp"))
    }

    #[test]
    fn defaults_fill_everything_but_out_dir() {
        let c = load("[data]\nout_dir = run\n").unwrap();
        assert_eq!(c.modality, Modality::Offline);
        assert_eq!(c.extract, ExtractConfig::default());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.adapt, AdaptConfig::default());
        assert_eq!(c.top_n, 10);
        assert!(!c.raw_image);
        assert_eq!(c.cache_dir(), PathBuf::from("/tmp/exp/run/cache"));
        assert_eq!(
            c.checkpoint_paths(),
            vec![PathBuf::from("/tmp/exp/run/model.hcnn")]
        );
        let arch = c.arch.build(8, 32, 3755).unwrap();
        assert_eq!(arch, Architecture::full());
    }

    #[test]
    fn parses_a_full_file() {
        let text = "
# toy run
[data]
manifest = data/manifest.txt
modality = offline
out_dir = runs/toy
cache_dir = cachedir

[extract]
gray = linear
method = bimoment
aspect = fill
map_size = 16
cooperation = based
raw_image = yes

[arch]
conv = 8, 16
pool = 1, 0
fc = 32
dropout = 0, 0.2, 0
leaky_slope = 0.25

[train]
batch_size = 50
learning_rate = 0.1
seed = 42

[adapt]
beta_tilde = 0.3
iter_num = 2

[eval]
checkpoints = a.hcnn, b.hcnn
top_n = 5

[synth]
classes = 10
";
        let c = load(text).unwrap();
        assert_eq!(c.manifest_path().unwrap(), PathBuf::from("/tmp/exp/data/manifest.txt"));
        assert_eq!(c.extract.gray, GrayNorm::Linear);
        assert_eq!(c.extract.method, NormMethod::Bimoment);
        assert_eq!(c.extract.aspect, Aspect::Fill);
        assert_eq!(c.extract.map_size, 16);
        assert!(!c.extract.cooperated);
        assert!(c.raw_image);
        assert_eq!(c.arch.conv_channels, vec![8, 16]);
        assert_eq!(c.arch.pool_after, vec![true, false]);
        assert_eq!(c.arch.fc_sizes, vec![32]);
        assert_eq!(c.arch.dropout, vec![0.0, 0.2, 0.0]);
        assert_eq!(c.arch.leaky_slope, 0.25);
        assert_eq!(c.train.batch_size, 50);
        assert_eq!(c.train.learning_rate, 0.1);
        assert_eq!(c.train.seed, 42);
        assert_eq!(c.adapt.beta_tilde, 0.3);
        assert_eq!(c.adapt.iter_num, 2);
        assert_eq!(c.checkpoints.len(), 2);
        assert_eq!(c.top_n, 5);
        assert_eq!(c.synth.classes, 10);
    }

    #[test]
    fn overriding_conv_defaults_pool_and_dropout() {
        let c = load("[data]\nout_dir = r\n[arch]\nconv = 4, 8\nfc = 16\n").unwrap();
        assert_eq!(c.arch.pool_after, vec![true, true]);
        assert_eq!(c.arch.dropout, vec![0.0; 3]);
        c.arch.build(8, 8, 5).unwrap();
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let e = load("[data]\nout_dir = r\ntypo_key = 1\n").unwrap_err();
        assert!(e.to_string().contains("typo_key"), "{e}");
        assert!(matches!(e, CliError::Config(_)));
        let e = load("[data]\nout_dir = a\nout_dir = b\n").unwrap_err();
        assert!(e.to_string().contains("already set"), "{e}");
    }

    #[test]
    fn rejects_online_incompatibilities() {
        let base = "[data]\nout_dir = r\nmodality = online\n[extract]\ngray = none\n";
        assert!(load(base).is_ok());
        let e = load(&format!("{base}method = ldpi\n")).unwrap_err();
        assert!(e.to_string().contains("not applicable"), "{e}");
        let e = load("[data]\nout_dir = r\nmodality = online\n[extract]\ngray = nonlinear\n")
            .unwrap_err();
        assert!(e.to_string().contains("gray"), "{e}");
        let e = load(&format!("{base}raw_image = true\n")).unwrap_err();
        assert!(e.to_string().contains("raw_image"), "{e}");
    }

    #[test]
    fn beta_tilde_one_is_the_identity_pin() {
        let c = load("[data]\nout_dir = r\n[adapt]\nbeta_tilde = 1\n").unwrap();
        assert_eq!(c.adapt.beta_tilde, 1.0);
        assert!(load("[data]\nout_dir = r\n[adapt]\nbeta_tilde = 1.5\n").is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[data]\n", // missing out_dir
            "[data]\nout_dir = r\n[extract]\ngray = fuzzy\n",
            "[data]\nout_dir = r\n[extract]\nmap_size = 3\n",
            "[data]\nout_dir = r\n[train]\nlearning_rate = 0\n",
            "[data]\nout_dir = r\n[eval]\ntop_n = 0\n",
            "[data]\nout_dir = r\nbroken line\n",
            "[data\nout_dir = r\n",
        ] {
            let e = load(text).unwrap_err();
            assert!(matches!(e, CliError::Config(_)), "{text} -> {e}");
        }
    }
}
