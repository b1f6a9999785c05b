//! Forward pass, softmax loss, and backpropagation.
//!
//! Convolutions run as im2col plus a matrix product. The per-sample tape
//! keeps exactly what backpropagation needs (input patches, pre-activations,
//! pooling argmax, dropout masks), so batch gradients process one sample at
//! a time in constant memory.

use super::params::{LayerParam, NetworkParams};
use super::scalar::Scalar;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed batch chunk size for parallel gradient reduction. Chunks are folded
/// in order, so results do not depend on the worker count.
const CHUNK: usize = 64;

/// Forward mode: training draws dropout masks from the seed, evaluation
/// applies no dropout (inverted scaling at train time needs no eval factor).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

pub(crate) fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 3x3 patches with zero padding 1, one row per output pixel, columns
/// flattened (channel, ky, kx).
fn im2col<T: Scalar>(input: &Array3<T>) -> Array2<T> {
    let (c, h, w) = input.dim();
    let mut out = Array2::zeros((h * w, c * 9));
    for ch in 0..c {
        for r in 0..h {
            for cl in 0..w {
                let row = r * w + cl;
                for ky in 0..3usize {
                    let ir = r as isize + ky as isize - 1;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ic = cl as isize + kx as isize - 1;
                        if ic < 0 || ic >= w as isize {
                            continue;
                        }
                        out[[row, ch * 9 + ky * 3 + kx]] =
                            input[[ch, ir as usize, ic as usize]];
                    }
                }
            }
        }
    }
    out
}

/// Scatter-add of patch gradients back onto the input grid.
fn col2im<T: Scalar>(dpatches: &Array2<T>, c: usize, h: usize, w: usize) -> Array3<T> {
    let mut out = Array3::zeros((c, h, w));
    for ch in 0..c {
        for r in 0..h {
            for cl in 0..w {
                let row = r * w + cl;
                for ky in 0..3usize {
                    let ir = r as isize + ky as isize - 1;
                    if ir < 0 || ir >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ic = cl as isize + kx as isize - 1;
                        if ic < 0 || ic >= w as isize {
                            continue;
                        }
                        out[[ch, ir as usize, ic as usize]] =
                            out[[ch, ir as usize, ic as usize]]
                                + dpatches[[row, ch * 9 + ky * 3 + kx]];
                    }
                }
            }
        }
    }
    out
}

fn leaky<T: Scalar>(v: T, slope: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * slope
    }
}

fn leaky_grad<T: Scalar>(pre: T, slope: T) -> T {
    if pre > T::zero() {
        T::one()
    } else {
        slope
    }
}

/// 2x2 stride-2 max-pooling; ties resolve to the first cell in row-major
/// block order so routing is deterministic.
fn maxpool<T: Scalar>(x: &Array3<T>) -> (Array3<T>, Array3<u8>) {
    let (c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    let mut arg = Array3::<u8>::zeros((c, oh, ow));
    for ch in 0..c {
        for r in 0..oh {
            for cl in 0..ow {
                let mut best = x[[ch, 2 * r, 2 * cl]];
                let mut idx = 0u8;
                for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let v = x[[ch, 2 * r + dy, 2 * cl + dx]];
                    if v > best {
                        best = v;
                        idx = k as u8;
                    }
                }
                out[[ch, r, cl]] = best;
                arg[[ch, r, cl]] = idx;
            }
        }
    }
    (out, arg)
}

fn dropout_mask_3d<T: Scalar>(shape: (usize, usize, usize), p: f64, seed: u64) -> Array3<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::from_f64(1.0 / (1.0 - p));
    Array3::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    })
}

fn dropout_mask_1d<T: Scalar>(len: usize, p: f64, seed: u64) -> Array1<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::from_f64(1.0 / (1.0 - p));
    Array1::from_shape_fn(len, |_| {
        if rng.gen::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    })
}

fn check_finite_3d<T: Scalar>(x: &Array3<T>, layer: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer,
            message: "non-finite activation".into(),
        })
    }
}

fn check_finite_1d<T: Scalar>(x: &Array1<T>, layer: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer,
            message: "non-finite activation".into(),
        })
    }
}

struct ConvTape<T> {
    patches: Array2<T>,
    pre_act: Array3<T>,
    pool_arg: Option<Array3<u8>>,
    mask: Option<Array3<T>>,
    input_dim: (usize, usize, usize),
}

struct FcTape<T> {
    input: Array1<T>,
    pre_act: Array1<T>,
    mask: Option<Array1<T>>,
}

/// Everything backpropagation needs from one forward pass.
pub struct Tape<T> {
    convs: Vec<ConvTape<T>>,
    fcs: Vec<FcTape<T>>,
    out_input: Array1<T>,
    pub logits: Array1<T>,
}

/// Forward pass recording a tape. `sample_seed` enables training mode.
pub fn forward_tape<T: Scalar>(
    params: &NetworkParams<T>,
    map: &Array3<T>,
    sample_seed: Option<u64>,
) -> Result<Tape<T>> {
    let arch = &params.arch;
    let expected = (arch.input_planes, arch.input_size, arch.input_size);
    if map.dim() != expected {
        return Err(Error::Dimension(format!(
            "input shape {:?} does not match architecture {:?}",
            map.dim(),
            expected
        )));
    }

    let slope = T::from_f64(arch.leaky_slope);
    let nc = arch.conv_channels.len();
    let mut x = map.mapv(|v| v * T::from_f64(params.rescale));
    let mut convs = Vec::with_capacity(nc);

    for li in 0..nc {
        let layer = &params.layers[li];
        let input_dim = x.dim();
        let patches = im2col(&x);
        // (out, h*w) = (out, c*9) . (c*9, h*w)
        let mut pre_mat = layer.weight.dot(&patches.t());
        for (mut row, &b) in pre_mat.outer_iter_mut().zip(layer.bias.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let (h, w) = (input_dim.1, input_dim.2);
        let pre_act = pre_mat
            .into_shape_with_order((arch.conv_channels[li], h, w))
            .expect("conv output shape");
        let mut out = pre_act.mapv(|v| leaky(v, slope));
        let pool_arg = if arch.pool_after[li] {
            let (pooled, arg) = maxpool(&out);
            out = pooled;
            Some(arg)
        } else {
            None
        };
        let p = arch.dropout[li];
        let mask = match (sample_seed, p > 0.0) {
            (Some(seed), true) => {
                let m = dropout_mask_3d::<T>(out.dim(), p, mix(seed, li as u64));
                out.zip_mut_with(&m, |o, &mv| *o = *o * mv);
                Some(m)
            }
            _ => None,
        };
        check_finite_3d(&out, li + 1)?;
        convs.push(ConvTape {
            patches,
            pre_act,
            pool_arg,
            mask,
            input_dim,
        });
        x = out;
    }

    let mut v: Array1<T> = Array1::from_iter(x.iter().copied());
    let mut fcs = Vec::with_capacity(arch.fc_sizes.len());
    for fi in 0..arch.fc_sizes.len() {
        let li = nc + fi;
        let layer = &params.layers[li];
        let input = v;
        let pre_act = layer.weight.dot(&input) + &layer.bias;
        let mut out = pre_act.mapv(|p| leaky(p, slope));
        let p = arch.dropout[li];
        let mask = match (sample_seed, p > 0.0) {
            (Some(seed), true) => {
                let m = dropout_mask_1d::<T>(out.len(), p, mix(seed, li as u64));
                out.zip_mut_with(&m, |o, &mv| *o = *o * mv);
                Some(m)
            }
            _ => None,
        };
        check_finite_1d(&out, li + 1)?;
        fcs.push(FcTape {
            input,
            pre_act,
            mask,
        });
        v = out;
    }

    let out_layer = params.layers.last().unwrap();
    let logits = out_layer.weight.dot(&v) + &out_layer.bias;
    check_finite_1d(&logits, params.layers.len())?;
    Ok(Tape {
        convs,
        fcs,
        out_input: v,
        logits,
    })
}

/// Pre-softmax logits in evaluation mode.
pub fn logits<T: Scalar>(params: &NetworkParams<T>, map: &Array3<T>) -> Result<Array1<T>> {
    Ok(forward_tape(params, map, None)?.logits)
}

/// Post-activation output of the bottleneck layer (the last hidden
/// fully-connected layer), evaluation mode. This is the feature vector the
/// adaptation layer transforms.
pub fn source_features<T: Scalar>(
    params: &NetworkParams<T>,
    map: &Array3<T>,
) -> Result<Array1<T>> {
    if params.arch.fc_sizes.is_empty() {
        return Err(Error::Invalid(
            "architecture has no hidden fully-connected bottleneck".into(),
        ));
    }
    Ok(forward_tape(params, map, None)?.out_input)
}

/// Logits from a bottleneck feature vector: just the output layer.
pub fn logits_from_source<T: Scalar>(
    params: &NetworkParams<T>,
    source: &Array1<T>,
) -> Result<Array1<T>> {
    let out = params.layers.last().unwrap();
    if source.len() != out.weight.ncols() {
        return Err(Error::Dimension(format!(
            "source feature length {} does not match the output layer fan-in {}",
            source.len(),
            out.weight.ncols()
        )));
    }
    Ok(out.weight.dot(source) + &out.bias)
}

/// Class probabilities.
pub fn forward<T: Scalar>(
    params: &NetworkParams<T>,
    map: &Array3<T>,
    mode: Mode,
) -> Result<Array1<T>> {
    let seed = match mode {
        Mode::Eval => None,
        Mode::Train { seed } => Some(seed),
    };
    let tape = forward_tape(params, map, seed)?;
    Ok(softmax(&tape.logits))
}

/// Max-subtracted softmax; never overflows for finite logits.
pub fn softmax<T: Scalar>(logits: &Array1<T>) -> Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut p = logits.mapv(|s| (s - max).exp());
    let sum = p.sum();
    p.mapv_inplace(|v| v / sum);
    p
}

/// Negative log-likelihood of `label`, computed in 64-bit.
pub fn nll<T: Scalar>(logits: &Array1<T>, label: usize) -> f64 {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v.to_f64()));
    let lse: f64 = logits.iter().map(|&v| (v.to_f64() - max).exp()).sum();
    max + lse.ln() - logits[label].to_f64()
}

/// Backpropagate `dlogits` through the tape; returns per-layer gradient
/// blocks for this single sample (no weight decay, no batch scaling).
pub fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    tape: &Tape<T>,
    dlogits: &Array1<T>,
) -> Vec<LayerParam<T>> {
    let arch = &params.arch;
    let slope = T::from_f64(arch.leaky_slope);
    let nc = arch.conv_channels.len();
    let mut grads: Vec<LayerParam<T>> = params
        .layers
        .iter()
        .map(|l| LayerParam {
            weight: Array2::zeros(l.weight.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        })
        .collect();

    // output layer
    let out_idx = params.layers.len() - 1;
    grads[out_idx].weight = dlogits
        .view()
        .insert_axis(Axis(1))
        .dot(&tape.out_input.view().insert_axis(Axis(0)));
    grads[out_idx].bias = dlogits.clone();
    let mut d: Array1<T> = params.layers[out_idx].weight.t().dot(dlogits);

    // hidden FC layers
    for fi in (0..arch.fc_sizes.len()).rev() {
        let li = nc + fi;
        let t = &tape.fcs[fi];
        if let Some(m) = &t.mask {
            d.zip_mut_with(m, |dv, &mv| *dv = *dv * mv);
        }
        d.zip_mut_with(&t.pre_act, |dv, &p| *dv = *dv * leaky_grad(p, slope));
        grads[li].weight = d
            .view()
            .insert_axis(Axis(1))
            .dot(&t.input.view().insert_axis(Axis(0)));
        grads[li].bias = d.clone();
        d = params.layers[li].weight.t().dot(&d);
    }

    // back into the conv stack
    let s = arch.final_feature_size();
    let mut dx: Array3<T> = d
        .into_shape_with_order((*arch.conv_channels.last().unwrap(), s, s))
        .expect("flatten gradient shape");

    for li in (0..nc).rev() {
        let t = &tape.convs[li];
        if let Some(m) = &t.mask {
            dx.zip_mut_with(m, |dv, &mv| *dv = *dv * mv);
        }
        // un-pool: route each cell's gradient to the argmax position
        let mut dpost = if let Some(arg) = &t.pool_arg {
            let (c, h, w) = t.pre_act.dim();
            let mut full = Array3::zeros((c, h, w));
            for ((ch, r, cl), &g) in dx.indexed_iter() {
                let idx = arg[[ch, r, cl] ] as usize;
                let (dy, dxo) = (idx / 2, idx % 2);
                full[[ch, 2 * r + dy, 2 * cl + dxo]] = g;
            }
            full
        } else {
            dx
        };
        dpost.zip_mut_with(&t.pre_act, |dv, &p| *dv = *dv * leaky_grad(p, slope));

        let (c_out, h, w) = dpost.dim();
        let dpre_mat = dpost
            .into_shape_with_order((c_out, h * w))
            .expect("conv gradient shape");
        // (out, c*9) = (out, h*w) . (h*w, c*9)
        grads[li].weight = dpre_mat.dot(&t.patches);
        grads[li].bias = dpre_mat.sum_axis(Axis(1));
        let dpatches = params.layers[li].weight.t().dot(&dpre_mat);
        // dpatches is (c*9, h*w); col2im expects (h*w, c*9)
        let (ci, hi, wi) = t.input_dim;
        dx = col2im(&dpatches.t().to_owned(), ci, hi, wi);
    }
    grads
}

/// Accumulated statistics of one gradient batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub mean_nll: f64,
    pub correct: usize,
}

fn add_blocks<T: Scalar>(acc: &mut [LayerParam<T>], delta: &[LayerParam<T>]) {
    for (a, d) in acc.iter_mut().zip(delta) {
        a.weight.zip_mut_with(&d.weight, |x, &y| *x = *x + y);
        a.bias.zip_mut_with(&d.bias, |x, &y| *x = *x + y);
    }
}

/// Mean gradient of the batch loss (negative log-likelihood plus the L2
/// penalty as an additive `weight_decay * w` term on weights only). Dropout
/// masks are fixed by (seed, position in batch), and chunk results are
/// folded in a fixed order, so the result is deterministic regardless of the
/// worker count.
pub fn gradient_with_stats<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &[&Array3<T>],
    labels: &[u32],
    seed: u64,
    weight_decay: f64,
) -> Result<(Vec<LayerParam<T>>, BatchStats)> {
    use rayon::prelude::*;

    if batch.is_empty() || batch.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "batch of {} maps with {} labels",
            batch.len(),
            labels.len()
        )));
    }
    let classes = params.arch.classes;
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Invalid(format!(
            "label {bad} outside the {classes}-class output"
        )));
    }

    let chunks: Vec<(Vec<LayerParam<T>>, f64, usize)> = batch
        .par_chunks(CHUNK)
        .zip(labels.par_chunks(CHUNK))
        .enumerate()
        .map(|(ci, (maps, labs))| {
            let mut acc = params.zeros_like();
            let mut loss = 0.0;
            let mut correct = 0;
            for (i, (&map, &label)) in maps.iter().zip(labs).enumerate() {
                let idx = (ci * CHUNK + i) as u64;
                let tape = forward_tape(params, map, Some(mix(seed, idx)))?;
                loss += nll(&tape.logits, label as usize);
                let probs = softmax(&tape.logits);
                let pred = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap();
                if pred == label as usize {
                    correct += 1;
                }
                let mut dlogits = probs;
                let l = label as usize;
                dlogits[l] = dlogits[l] - T::one();
                let sample = backward(params, &tape, &dlogits);
                add_blocks(&mut acc, &sample);
            }
            Ok((acc, loss, correct))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let mut correct = 0;
    for (blocks, l, c) in &chunks {
        add_blocks(&mut grads, blocks);
        loss += l;
        correct += c;
    }
    let scale = T::from_f64(1.0 / batch.len() as f64);
    let wd = T::from_f64(weight_decay);
    for (g, p) in grads.iter_mut().zip(&params.layers) {
        g.weight.mapv_inplace(|v| v * scale);
        g.bias.mapv_inplace(|v| v * scale);
        if weight_decay != 0.0 {
            g.weight.zip_mut_with(&p.weight, |gv, &w| *gv = *gv + wd * w);
        }
    }
    Ok((
        grads,
        BatchStats {
            mean_nll: loss / batch.len() as f64,
            correct,
        },
    ))
}

/// Mean batch gradient and mean negative log-likelihood.
pub fn gradient<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &[&Array3<T>],
    labels: &[u32],
    seed: u64,
    weight_decay: f64,
) -> Result<(Vec<LayerParam<T>>, f64)> {
    let (grads, stats) = gradient_with_stats(params, batch, labels, seed, weight_decay)?;
    Ok((grads, stats.mean_nll))
}
