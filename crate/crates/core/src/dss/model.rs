use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "dss-v1";

/// Shape of a one-hidden-layer perceptron `x ↦ W2 relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

impl MlpShape {
    pub fn param_count(&self) -> usize {
        self.n_hidden * self.n_in + self.n_hidden + self.n_out * self.n_hidden + self.n_out
    }

    /// Lengths of `W1, b1, W2, b2`.
    pub fn layer_lengths(&self) -> [usize; 4] {
        [self.n_hidden * self.n_in, self.n_hidden, self.n_out * self.n_hidden, self.n_out]
    }
}

/// Offsets of the four parameter arrays of one perceptron inside the flat vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpLayout {
    pub shape: MlpShape,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

impl MlpLayout {
    fn at(shape: MlpShape, start: usize) -> Self {
        let [lw1, lb1, lw2, _] = shape.layer_lengths();
        MlpLayout {
            shape,
            w1: start,
            b1: start + lw1,
            w2: start + lw1 + lb1,
            b2: start + lw1 + lb1 + lw2,
        }
    }

    pub fn end(&self) -> usize {
        self.b2 + self.shape.n_out
    }
}

/// Parameter offsets of one message-passing iteration.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockLayout {
    pub phi_out: MlpLayout,
    pub phi_in: MlpLayout,
    pub psi: MlpLayout,
    pub decoder: MlpLayout,
}

/// The four perceptron shapes of one iteration, in storage order:
/// outgoing message, ingoing message, latent update, decoder.
pub fn block_shapes(d: usize) -> [MlpShape; 4] {
    let message = MlpShape {
        n_in: 2 * d + 3,
        n_hidden: d,
        n_out: d,
    };
    [
        message,
        message,
        MlpShape {
            n_in: 3 * d + 1,
            n_hidden: d,
            n_out: d,
        },
        MlpShape {
            n_in: d,
            n_hidden: d,
            n_out: 1,
        },
    ]
}

/// Trainable parameters per iteration: `11 d² + 15 d + 1`.
pub fn block_param_count(d: usize) -> usize {
    block_shapes(d).iter().map(MlpShape::param_count).sum()
}

/// Total parameters of a model with `k_bar` iterations of latent width `d`.
pub fn param_count(k_bar: usize, d: usize) -> usize {
    k_bar * block_param_count(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    k_bar: usize,
    d: usize,
    alpha: f64,
    seed: u64,
}

/// Message-passing solver weights.
///
/// All parameters live in one flat vector; iteration `k` occupies
/// `k · (11d² + 15d + 1)..(k + 1) · (11d² + 15d + 1)` and inside it the
/// outgoing-message, ingoing-message, update and decoder perceptrons follow each
/// other, each stored as `W1, b1, W2, b2` with row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DssModel {
    k_bar: usize,
    d: usize,
    alpha: f64,
    seed: u64,
    params: Vec<f64>,
}

/// Xavier-uniform weights, zero biases.
pub fn init_model(k_bar: usize, d: usize, alpha: f64, seed: u64) -> Result<DssModel> {
    if k_bar == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "k_bar and d must be positive, got k_bar={k_bar}, d={d}"
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument("alpha must be finite".into()));
    }
    let mut model = DssModel::zeros(k_bar, d, alpha, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..k_bar {
        let block = model.block(k);
        for mlp in [block.phi_out, block.phi_in, block.psi, block.decoder] {
            let s = mlp.shape;
            let bound1 = (6.0 / (s.n_in + s.n_hidden) as f64).sqrt();
            for w in &mut model.params[mlp.w1..mlp.b1] {
                *w = rng.gen_range(-bound1..bound1);
            }
            let bound2 = (6.0 / (s.n_hidden + s.n_out) as f64).sqrt();
            for w in &mut model.params[mlp.w2..mlp.b2] {
                *w = rng.gen_range(-bound2..bound2);
            }
        }
    }
    Ok(model)
}

impl DssModel {
    /// A model with every parameter set to zero.
    pub fn zeros(k_bar: usize, d: usize, alpha: f64, seed: u64) -> Self {
        DssModel {
            k_bar,
            d,
            alpha,
            seed,
            params: vec![0.0; param_count(k_bar, d)],
        }
    }

    pub fn k_bar(&self) -> usize {
        self.k_bar
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn block(&self, k: usize) -> BlockLayout {
        let [mo, mi, psi, dec] = block_shapes(self.d);
        let start = k * block_param_count(self.d);
        let phi_out = MlpLayout::at(mo, start);
        let phi_in = MlpLayout::at(mi, phi_out.end());
        let psi = MlpLayout::at(psi, phi_in.end());
        let decoder = MlpLayout::at(dec, psi.end());
        BlockLayout {
            phi_out,
            phi_in,
            psi,
            decoder,
        }
    }

    /// Serializes to the `dss-v1` format: a JSON header line followed, for every
    /// iteration and perceptron in storage order, by one block per layer array
    /// (`u64` little-endian length, then that many little-endian `f64`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT_TAG.into(),
            k_bar: self.k_bar,
            d: self.d,
            alpha: self.alpha,
            seed: self.seed,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        let mut offset = 0;
        for _ in 0..self.k_bar {
            for shape in block_shapes(self.d) {
                for len in shape.layer_lengths() {
                    out.extend_from_slice(&(len as u64).to_le_bytes());
                    for v in &self.params[offset..offset + len] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    offset += len;
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::ModelFormat("missing header line".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
        if header.format != FORMAT_TAG {
            return Err(Error::ModelFormat(format!(
                "unsupported format {:?}, expected {FORMAT_TAG:?}",
                header.format
            )));
        }
        if header.k_bar == 0 || header.d == 0 {
            return Err(Error::ModelFormat("k_bar and d must be positive".into()));
        }
        let mut params = Vec::with_capacity(param_count(header.k_bar, header.d));
        let mut pos = newline + 1;
        let mut take = |n: usize| -> Result<&[u8]> {
            let chunk = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::ModelFormat("truncated weight data".into()))?;
            pos += n;
            Ok(chunk)
        };
        for k in 0..header.k_bar {
            for (m, shape) in block_shapes(header.d).iter().enumerate() {
                for (l, expected) in shape.layer_lengths().into_iter().enumerate() {
                    let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
                    if len != expected {
                        return Err(Error::ModelFormat(format!(
                            "shape mismatch in iteration {k}, perceptron {m}, layer {l}: \
                             block has {len} values, d={} requires {expected}",
                            header.d
                        )));
                    }
                    let raw = take(8 * len)?;
                    params.extend(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
                }
            }
        }
        if pos != bytes.len() {
            return Err(Error::ModelFormat(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(DssModel {
            k_bar: header.k_bar,
            d: header.d,
            alpha: header.alpha,
            seed: header.seed,
            params,
        })
    }
}

pub fn save_model(model: &DssModel, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DssModel> {
    DssModel::from_bytes(&fs::read(path)?)
}
