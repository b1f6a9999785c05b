//! Network architecture and training hyperparameters.

use crate::error::{Error, Result};

/// Convolutional network layout: a stack of 3x3 stride-1 padding-1 conv
/// layers (some followed by 2x2 max-pooling), a flatten, hidden
/// fully-connected layers, and a softmax output layer. Dropout probabilities
/// are listed per hidden layer (conv layers first, then hidden FCs).
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_planes: usize,
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    /// Whether a 2x2/2 max-pool follows each conv layer.
    pub pool_after: Vec<bool>,
    pub fc_sizes: Vec<usize>,
    pub classes: usize,
    /// Negative-side slope of the leaky rectifier.
    pub leaky_slope: f64,
    /// Dropout probability of each hidden layer's output.
    pub dropout: Vec<f64>,
}

impl Architecture {
    /// The full-scale recognition network: 8 conv layers widening from 50 to
    /// 400 channels with pooling after every second one, hidden FC layers of
    /// 900 and 200 units, and a 3755-way softmax.
    pub fn full() -> Self {
        Architecture {
            input_planes: 8,
            input_size: 32,
            conv_channels: vec![50, 100, 150, 200, 250, 300, 350, 400],
            pool_after: vec![false, true, false, true, false, true, false, true],
            fc_sizes: vec![900, 200],
            classes: 3755,
            leaky_slope: 1.0 / 3.0,
            dropout: vec![0.0, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.50, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_planes == 0 || self.input_size == 0 {
            return Err(Error::Dimension("empty input shape".into()));
        }
        if self.conv_channels.is_empty() {
            return Err(Error::Dimension("at least one conv layer required".into()));
        }
        if self.pool_after.len() != self.conv_channels.len() {
            return Err(Error::Dimension(format!(
                "pool flags ({}) must match conv layers ({})",
                self.pool_after.len(),
                self.conv_channels.len()
            )));
        }
        if self.classes < 2 {
            return Err(Error::Dimension("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Invalid(format!(
                "leaky slope {} outside [0, 1)",
                self.leaky_slope
            )));
        }
        let hidden = self.conv_channels.len() + self.fc_sizes.len();
        if self.dropout.len() != hidden {
            return Err(Error::Dimension(format!(
                "dropout list ({}) must cover the {hidden} hidden layers",
                self.dropout.len()
            )));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Invalid("dropout probabilities must be in [0, 1)".into()));
        }
        if self.dropout[0] != 0.0 || self.dropout[hidden - 1] != 0.0 {
            return Err(Error::Invalid(
                "first and last hidden layers must not use dropout".into(),
            ));
        }
        let mut size = self.input_size;
        for (i, &pool) in self.pool_after.iter().enumerate() {
            if pool {
                if size % 2 != 0 {
                    return Err(Error::Dimension(format!(
                        "pool after conv {} needs an even size, got {size}",
                        i + 1
                    )));
                }
                size /= 2;
            }
        }
        Ok(())
    }

    /// Spatial size after the conv stack.
    pub fn final_feature_size(&self) -> usize {
        let pools = self.pool_after.iter().filter(|&&p| p).count();
        self.input_size >> pools
    }

    /// Dimensionality of the flattened conv output.
    pub fn flatten_dim(&self) -> usize {
        let s = self.final_feature_size();
        self.conv_channels.last().unwrap() * s * s
    }

    /// Per-layer (fan-in, fan-out) of the weight matrices, conv layers as
    /// (in_channels * 9, out_channels).
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut input = self.input_planes;
        for &out in &self.conv_channels {
            dims.push((input * 9, out));
            input = out;
        }
        let mut features = self.flatten_dim();
        for &out in &self.fc_sizes {
            dims.push((features, out));
            features = out;
        }
        dims.push((features, self.classes));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fan_in, out)| fan_in * out + out)
            .sum()
    }
}

/// Stochastic gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate on a plateau.
    pub decay_factor: f64,
    pub weight_decay: f64,
    /// Epochs without a train-accuracy improvement before a decay.
    pub patience: usize,
    /// Training stops when a plateau occurs after this many decays.
    pub max_decays: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1000,
            momentum: 0.9,
            learning_rate: 0.005,
            decay_factor: 0.3,
            weight_decay: 0.0005,
            patience: 2,
            max_decays: 3,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Invalid("batch size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.decay_factor) || self.decay_factor == 0.0 {
            return Err(Error::Invalid(format!(
                "decay factor {} outside (0, 1)",
                self.decay_factor
            )));
        }
        if self.learning_rate <= 0.0 || self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Invalid("non-positive optimizer constants".into()));
        }
        Ok(())
    }
}
