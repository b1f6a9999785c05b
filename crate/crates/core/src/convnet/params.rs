//! Network parameters: initialization and the checkpoint format.

use super::arch::Architecture;
use super::scalar::Scalar;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Initialization standard deviation.
const INIT_SIGMA: f64 = 0.01;

/// Weights and bias of one layer. Conv weights are stored as
/// (out_channels, in_channels * 9) with kernel cells flattened
/// channel-major, row, column.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParam<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// All parameters of a network plus the frozen input rescale constant.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub arch: Architecture,
    /// Conv layers, hidden FC layers, output layer, in order.
    pub layers: Vec<LayerParam<T>>,
    /// Input maps are multiplied by this before the first layer.
    pub rescale: f64,
}

impl<T: Scalar> NetworkParams<T> {
    /// Gaussian-initialized weights, zero biases, deterministic per seed.
    /// The random stream is drawn in 64-bit so both precisions see the same
    /// underlying values.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_SIGMA).expect("valid sigma");
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, out)| LayerParam {
                weight: Array2::from_shape_fn((out, fan_in), |_| {
                    T::from_f64(normal.sample(&mut rng))
                }),
                bias: Array1::from_elem(out, T::zero()),
            })
            .collect();
        Ok(NetworkParams {
            arch: arch.clone(),
            layers,
            rescale: 1.0,
        })
    }

    /// Zero-valued blocks with this network's shapes (for gradients and
    /// optimizer state).
    pub fn zeros_like(&self) -> Vec<LayerParam<T>> {
        self.layers
            .iter()
            .map(|l| LayerParam {
                weight: Array2::zeros(l.weight.raw_dim()),
                bias: Array1::zeros(l.bias.raw_dim()),
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Cast every parameter (used to move between precisions).
    pub fn convert<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParam {
                    weight: l.weight.mapv(|v| U::from_f64(v.to_f64())),
                    bias: l.bias.mapv(|v| U::from_f64(v.to_f64())),
                })
                .collect(),
            rescale: self.rescale,
        }
    }
}

const MAGIC: &[u8; 4] = b"HCNN";
const VERSION: u8 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.pos as u64, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Serialize a checkpoint. Parameters are stored as little-endian 32-bit
/// floats in declaration order (per layer: weights row-major, then bias).
pub fn serialize_checkpoint<T: Scalar>(params: &NetworkParams<T>) -> Vec<u8> {
    let arch = &params.arch;
    let mut out = Vec::with_capacity(64 + params.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(arch.input_planes as u32).to_le_bytes());
    out.extend_from_slice(&(arch.input_size as u32).to_le_bytes());
    out.extend_from_slice(&(arch.conv_channels.len() as u32).to_le_bytes());
    for (c, &pool) in arch.conv_channels.iter().zip(&arch.pool_after) {
        out.extend_from_slice(&(*c as u32).to_le_bytes());
        out.push(pool as u8);
    }
    out.extend_from_slice(&(arch.fc_sizes.len() as u32).to_le_bytes());
    for &s in &arch.fc_sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(arch.classes as u32).to_le_bytes());
    out.extend_from_slice(&arch.leaky_slope.to_le_bytes());
    for &p in &arch.dropout {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&params.rescale.to_le_bytes());
    for layer in &params.layers {
        for &w in layer.weight.iter() {
            out.extend_from_slice(&(w.to_f64() as f32).to_le_bytes());
        }
        for &b in layer.bias.iter() {
            out.extend_from_slice(&(b.to_f64() as f32).to_le_bytes());
        }
    }
    out
}

pub fn parse_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<NetworkParams<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let input_planes = r.u32("input planes")? as usize;
    let input_size = r.u32("input size")? as usize;
    let conv_count = r.u32("conv count")? as usize;
    if conv_count > 1024 {
        return Err(Error::parse(r.pos as u64 - 4, "implausible conv count"));
    }
    let mut conv_channels = Vec::with_capacity(conv_count);
    let mut pool_after = Vec::with_capacity(conv_count);
    for _ in 0..conv_count {
        conv_channels.push(r.u32("conv width")? as usize);
        pool_after.push(match r.u8("pool flag")? {
            0 => false,
            1 => true,
            f => return Err(Error::parse(r.pos as u64 - 1, format!("bad pool flag {f}"))),
        });
    }
    let fc_count = r.u32("fc count")? as usize;
    if fc_count > 1024 {
        return Err(Error::parse(r.pos as u64 - 4, "implausible fc count"));
    }
    let mut fc_sizes = Vec::with_capacity(fc_count);
    for _ in 0..fc_count {
        fc_sizes.push(r.u32("fc width")? as usize);
    }
    let classes = r.u32("class count")? as usize;
    let leaky_slope = r.f64("leaky slope")?;
    let mut dropout = Vec::with_capacity(conv_count + fc_count);
    for _ in 0..conv_count + fc_count {
        dropout.push(r.f64("dropout")?);
    }
    let rescale = r.f64("rescale constant")?;
    if !rescale.is_finite() || rescale <= 0.0 {
        return Err(Error::parse(
            r.pos as u64 - 8,
            format!("bad rescale constant {rescale}"),
        ));
    }

    let arch = Architecture {
        input_planes,
        input_size,
        conv_channels,
        pool_after,
        fc_sizes,
        classes,
        leaky_slope,
        dropout,
    };
    arch.validate()?;

    let mut layers = Vec::new();
    for (fan_in, out) in arch.layer_dims() {
        let mut weight = Array2::<T>::zeros((out, fan_in));
        for w in weight.iter_mut() {
            let v = r.f32("weight")?;
            if !v.is_finite() {
                return Err(Error::parse(r.pos as u64 - 4, "non-finite weight"));
            }
            *w = T::from_f64(v as f64);
        }
        let mut bias = Array1::<T>::zeros(out);
        for b in bias.iter_mut() {
            let v = r.f32("bias")?;
            if !v.is_finite() {
                return Err(Error::parse(r.pos as u64 - 4, "non-finite bias"));
            }
            *b = T::from_f64(v as f64);
        }
        layers.push(LayerParam { weight, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(
            r.pos as u64,
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok(NetworkParams {
        arch,
        layers,
        rescale,
    })
}

/// A small architecture for fast tests and gradient checks.
#[cfg(test)]
pub fn tiny_arch(classes: usize) -> Architecture {
    Architecture {
        input_planes: 8,
        input_size: 8,
        conv_channels: vec![4, 8],
        pool_after: vec![true, true],
        fc_sizes: vec![16],
        classes,
        leaky_slope: 1.0 / 3.0,
        dropout: vec![0.0, 0.0, 0.0],
    }
}
