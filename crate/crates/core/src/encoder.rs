//! Four-branch text CNN with a hand-written backward pass.
//!
//! Each branch convolves the `dim × l` input with `n_f` kernels of one
//! width (stride 1), applies ReLU and max-pools over the valid positions.
//! The pooled branches are concatenated in width order into a `4·n_f`
//! vector. Two such towers make up a [`TwinEncoder`]: one consumes every
//! former side, the other every latter side.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{hex, SequenceMatrix};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "ctpe-checkpoint/1";
pub const BRANCHES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub l: usize,
    pub widths: Vec<usize>,
    pub n_filters: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 100,
            l: 200,
            widths: vec![1, 2, 3, 5],
            n_filters: 1024,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.l == 0 || self.n_filters == 0 {
            return Err(Error::Config(
                "dim, l and n_f must all be positive".into(),
            ));
        }
        if self.widths.len() != BRANCHES {
            return Err(Error::Config(format!(
                "expected {BRANCHES} kernel widths, got {}",
                self.widths.len()
            )));
        }
        if let Some(&w) = self.widths.iter().find(|&&w| w == 0 || w > self.l) {
            return Err(Error::Config(format!(
                "kernel width {w} must lie in [1, l = {}]",
                self.l
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        BRANCHES * self.n_filters
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }
}

/// `n_f` kernels of shape `dim × width` plus one bias per kernel.
///
/// Kernel `j` occupies `kernels[j*width*dim..(j+1)*width*dim]`, laid out
/// column by column like [`SequenceMatrix`] windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlockParams {
    pub width: usize,
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvBlockParams {
    pub fn n_filters(&self) -> usize {
        self.bias.len()
    }

    pub fn kernel(&self, j: usize) -> &[f64] {
        let k = self.kernels.len() / self.bias.len();
        &self.kernels[j * k..(j + 1) * k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub dim: usize,
    pub blocks: Vec<ConvBlockParams>,
}

impl EncoderParams {
    pub fn output_dim(&self) -> usize {
        self.blocks.iter().map(ConvBlockParams::n_filters).sum()
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            dim: self.dim,
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlockParams {
                    width: b.width,
                    kernels: vec![0.0; b.kernels.len()],
                    bias: vec![0.0; b.bias.len()],
                })
                .collect(),
        }
    }

    fn max_width(&self) -> usize {
        self.blocks.iter().map(|b| b.width).max().unwrap_or(1)
    }
}

/// Per-block pooling record of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub width: usize,
    /// Position of the maximal pre-activation per filter (lowest on ties).
    pub argmax: Vec<usize>,
    /// Maximal pre-activation per filter.
    pub peak: Vec<f64>,
}

impl BlockTrace {
    /// ReLU mask of the pooled unit.
    pub fn active(&self, j: usize) -> bool {
        self.peak[j] > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: SequenceMatrix,
    pub blocks: Vec<BlockTrace>,
    pub output: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Runs one tower over `m`; pooling only sees positions whose window lies
/// inside the first `valid_len` columns.
pub fn forward(params: &EncoderParams, m: &SequenceMatrix) -> Result<(Vec<f64>, ForwardTrace)> {
    if m.dim() != params.dim {
        return Err(Error::ShapeMismatch(format!(
            "input has {} rows, encoder expects {}",
            m.dim(),
            params.dim
        )));
    }
    let max_width = params.max_width();
    if m.valid_len() < max_width {
        return Err(Error::SequenceTooShort {
            valid_len: m.valid_len(),
            width: max_width,
        });
    }
    let mut output = Vec::with_capacity(params.output_dim());
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let positions = m.valid_len() - block.width + 1;
        let n_f = block.n_filters();
        let mut argmax = vec![0; n_f];
        let mut peak = vec![f64::NEG_INFINITY; n_f];
        for (j, (best_t, best)) in argmax.iter_mut().zip(peak.iter_mut()).enumerate() {
            let kernel = block.kernel(j);
            for t in 0..positions {
                let z = block.bias[j] + dot(kernel, m.window(t, block.width));
                if z > *best {
                    *best = z;
                    *best_t = t;
                }
            }
        }
        output.extend(peak.iter().map(|&z| z.max(0.0)));
        blocks.push(BlockTrace {
            width: block.width,
            argmax,
            peak,
        });
    }
    let trace = ForwardTrace {
        input: m.clone(),
        blocks,
        output: output.clone(),
    };
    Ok((output, trace))
}

/// Accumulates the gradient of `output · grad_out` into `grads` (and into
/// `input_grad`, laid out like the input matrix, when given).
pub fn backward_into(
    params: &EncoderParams,
    trace: &ForwardTrace,
    grad_out: &[f64],
    grads: &mut EncoderParams,
    mut input_grad: Option<&mut [f64]>,
) -> Result<()> {
    check_trace(params, trace)?;
    if grad_out.len() != params.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "output gradient of length {}, encoder output is {}",
            grad_out.len(),
            params.output_dim()
        )));
    }
    let same_shape = grads.dim == params.dim
        && grads.blocks.len() == params.blocks.len()
        && grads.blocks.iter().zip(&params.blocks).all(|(g, p)| {
            g.width == p.width && g.kernels.len() == p.kernels.len() && g.bias.len() == p.bias.len()
        });
    if !same_shape {
        return Err(Error::ShapeMismatch("gradient buffer shape".into()));
    }
    if let Some(g) = input_grad.as_deref() {
        if g.len() != trace.input.data().len() {
            return Err(Error::ShapeMismatch("input gradient buffer shape".into()));
        }
    }
    let dim = params.dim;
    let mut offset = 0;
    for ((block, bt), gblock) in params.blocks.iter().zip(&trace.blocks).zip(&mut grads.blocks) {
        let n_f = block.n_filters();
        let k = block.width * dim;
        for j in 0..n_f {
            let g = grad_out[offset + j];
            if g == 0.0 || !bt.active(j) {
                continue;
            }
            let t = bt.argmax[j];
            let window = trace.input.window(t, block.width);
            axpy(g, window, &mut gblock.kernels[j * k..(j + 1) * k]);
            gblock.bias[j] += g;
            if let Some(ig) = input_grad.as_deref_mut() {
                axpy(g, block.kernel(j), &mut ig[t * dim..t * dim + k]);
            }
        }
        offset += n_f;
    }
    Ok(())
}

/// Gradients of `output · grad_out` w.r.t. parameters and input.
pub fn backward(
    params: &EncoderParams,
    trace: &ForwardTrace,
    grad_out: &[f64],
) -> Result<(EncoderParams, Vec<f64>)> {
    let mut grads = params.zeros_like();
    let mut input_grad = vec![0.0; trace.input.data().len()];
    backward_into(params, trace, grad_out, &mut grads, Some(&mut input_grad))?;
    Ok((grads, input_grad))
}

fn check_trace(params: &EncoderParams, trace: &ForwardTrace) -> Result<()> {
    let consistent = trace.input.dim() == params.dim
        && trace.blocks.len() == params.blocks.len()
        && trace.output.len() == params.output_dim()
        && params.blocks.iter().zip(&trace.blocks).all(|(b, t)| {
            b.width == t.width
                && t.argmax.len() == b.n_filters()
                && t.argmax
                    .iter()
                    .all(|&a| a + b.width <= trace.input.valid_len())
        });
    if consistent {
        Ok(())
    } else {
        Err(Error::TraceMismatch)
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "cosine of vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// `(∂cos/∂u, ∂cos/∂v)` with `∂cos/∂u = v/(‖u‖‖v‖) − cos·u/‖u‖²`.
pub fn cosine_grad(u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    cosine(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    // unclamped value keeps the gradient exact
    let c = dot(u, v) / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| vi / (nu * nv) - c * ui / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| ui / (nu * nv) - c * vi / (nv * nv))
        .collect();
    Ok((du, dv))
}

/// Former and latter towers sharing one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinEncoder {
    pub config: EncoderConfig,
    pub former: EncoderParams,
    pub latter: EncoderParams,
}

impl TwinEncoder {
    pub fn zeros_like(&self) -> Self {
        TwinEncoder {
            config: self.config.clone(),
            former: self.former.zeros_like(),
            latter: self.latter.zeros_like(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Parameter tensors in checkpoint order: former then latter, each block
    /// kernels then bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        [&self.former, &self.latter]
            .into_iter()
            .flat_map(|p| p.blocks.iter())
            .flat_map(|b| [b.kernels.as_slice(), b.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [&mut self.former, &mut self.latter]
            .into_iter()
            .flat_map(|p| p.blocks.iter_mut())
            .flat_map(|b| [b.kernels.as_mut_slice(), b.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &TwinEncoder) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// Hex SHA-256 over the configuration and every parameter bit.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ctpe-encoder");
        for v in [self.config.dim, self.config.l, self.config.n_filters] {
            h.update((v as u64).to_le_bytes());
        }
        for w in &self.config.widths {
            h.update((*w as u64).to_le_bytes());
        }
        for t in self.tensors() {
            h.update((t.len() as u64).to_le_bytes());
            for v in t {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            encoder: self.clone(),
        };
        serde_json::to_writer(&mut out, &doc).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let doc: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "expected checkpoint format `{CHECKPOINT_FORMAT}`, found `{}`",
                doc.format
            )));
        }
        let twin = doc.encoder;
        twin.config.validate()?;
        let expected = init_encoder(&twin.config, 0)?.zeros_like();
        if twin.zeros_like() != expected {
            return Err(Error::Format(
                "checkpoint tensors do not match the declared configuration".into(),
            ));
        }
        if twin.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Format("non-finite checkpoint parameter".into()));
        }
        Ok(twin)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    #[serde(flatten)]
    encoder: TwinEncoder,
}

/// Initializes both towers: kernels uniform on `±√(6/(dim·width + n_f))`,
/// biases zero. The former tower is drawn before the latter.
pub fn init_encoder(config: &EncoderConfig, seed: u64) -> Result<TwinEncoder> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tower = |rng: &mut ChaCha8Rng| EncoderParams {
        dim: config.dim,
        blocks: config
            .widths
            .iter()
            .map(|&width| {
                let bound = (6.0 / (config.dim * width + config.n_filters) as f64).sqrt();
                let law = Uniform::new_inclusive(-bound, bound);
                ConvBlockParams {
                    width,
                    kernels: (0..config.n_filters * width * config.dim)
                        .map(|_| law.sample(rng))
                        .collect(),
                    bias: vec![0.0; config.n_filters],
                }
            })
            .collect(),
    };
    let former = tower(&mut rng);
    let latter = tower(&mut rng);
    Ok(TwinEncoder {
        config: config.clone(),
        former,
        latter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn single_block(dim: usize, width: usize, kernels: Vec<f64>, bias: Vec<f64>) -> EncoderParams {
        EncoderParams {
            dim,
            blocks: vec![ConvBlockParams {
                width,
                kernels,
                bias,
            }],
        }
    }

    fn column_input(dim: usize, len: usize, values: &[f64]) -> SequenceMatrix {
        let cols: Vec<Vec<f64>> = values.chunks(dim).map(<[f64]>::to_vec).collect();
        SequenceMatrix::from_columns(dim, len, &cols).unwrap()
    }

    fn random_input(rng: &mut ChaCha8Rng, dim: usize, l: usize, valid: usize) -> SequenceMatrix {
        let cols: Vec<Vec<f64>> = (0..valid)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        SequenceMatrix::from_columns(dim, l, &cols).unwrap()
    }

    fn random_twin(rng: &mut ChaCha8Rng, dim: usize, l: usize, n_f: usize) -> TwinEncoder {
        let config = EncoderConfig {
            dim,
            l,
            widths: vec![1, 2, 3, 5],
            n_filters: n_f,
        };
        let mut twin = init_encoder(&config, rng.gen()).unwrap();
        for t in twin.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        twin
    }

    #[test]
    fn default_output_dimension() {
        let config = EncoderConfig::default();
        assert_eq!(config.output_dim(), 4096);
        let small = EncoderConfig {
            dim: 4,
            ..EncoderConfig::default()
        };
        let twin = init_encoder(&small, 1).unwrap();
        assert_eq!(twin.former.output_dim(), 4096);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let config = EncoderConfig {
            dim: 6,
            l: 10,
            widths: vec![1, 2, 3, 5],
            n_filters: 3,
        };
        let a = init_encoder(&config, 9).unwrap();
        assert_eq!(a, init_encoder(&config, 9).unwrap());
        assert_ne!(a, init_encoder(&config, 10).unwrap());
        assert_ne!(a.former, a.latter);
        for b in &a.former.blocks {
            let bound = (6.0 / (6 * b.width + 3) as f64).sqrt();
            assert!(b.kernels.iter().all(|k| k.abs() <= bound));
            assert!(b.bias.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn init_rejects_wide_kernels() {
        let config = EncoderConfig {
            dim: 2,
            l: 3,
            widths: vec![1, 2, 3, 5],
            n_filters: 2,
        };
        assert!(matches!(init_encoder(&config, 0), Err(Error::Config(_))));
    }

    #[test]
    fn hand_computed_convolution() {
        let p = single_block(1, 2, vec![1.0, 1.0], vec![0.0]);
        let m = column_input(1, 3, &[1.0, -2.0, 3.0]);
        let (out, trace) = forward(&p, &m).unwrap();
        assert_eq!(out, vec![1.0]);
        assert_eq!(trace.blocks[0].argmax, vec![1]);

        let (grads, input_grad) = backward(&p, &trace, &[1.0]).unwrap();
        assert_eq!(grads.blocks[0].kernels, vec![-2.0, 3.0]);
        assert_eq!(grads.blocks[0].bias, vec![1.0]);
        assert_eq!(input_grad, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_parameters_give_zero_output_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut twin = random_twin(&mut rng, 3, 7, 2);
        twin = twin.zeros_like();
        let m = random_input(&mut rng, 3, 7, 7);
        let (out, trace) = forward(&twin.former, &m).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));

        let twin = random_twin(&mut rng, 3, 7, 2);
        let (_, trace2) = forward(&twin.former, &m).unwrap();
        let (g, ig) = backward(&twin.former, &trace2, &[0.0; 8]).unwrap();
        assert_eq!(g, twin.former.zeros_like());
        assert!(ig.iter().all(|&x| x == 0.0));
        let _ = trace;
    }

    #[test]
    fn block_lengths_follow_valid_length() {
        let config = EncoderConfig {
            dim: 2,
            l: 200,
            widths: vec![1, 2, 3, 5],
            n_filters: 1,
        };
        let twin = init_encoder(&config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_input(&mut rng, 2, 200, 200);
        let (_, trace) = forward(&twin.former, &m).unwrap();
        // windows over 200 columns: 200, 199, 198, 196 positions
        let positions: Vec<usize> = trace.blocks.iter().map(|b| 200 - b.width + 1).collect();
        assert_eq!(positions, vec![200, 199, 198, 196]);
        for b in &trace.blocks {
            assert!(b.argmax[0] + b.width <= 200);
        }
    }

    #[test]
    fn short_sequences_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let twin = random_twin(&mut rng, 2, 7, 1);
        let m = random_input(&mut rng, 2, 7, 4);
        assert!(matches!(
            forward(&twin.former, &m),
            Err(Error::SequenceTooShort { valid_len: 4, width: 5 })
        ));
    }

    #[test]
    fn max_pool_ties_resolve_to_lowest_position() {
        let p = single_block(1, 1, vec![1.0], vec![0.0]);
        let m = column_input(1, 4, &[0.5, 2.0, 2.0, 1.0]);
        let (_, trace) = forward(&p, &m).unwrap();
        assert_eq!(trace.blocks[0].argmax, vec![1]);
        let (_, ig) = backward(&p, &trace, &[1.0]).unwrap();
        assert_eq!(ig, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_foreign_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let small = random_twin(&mut rng, 2, 7, 1);
        let large = random_twin(&mut rng, 2, 7, 2);
        let m = random_input(&mut rng, 2, 7, 7);
        let (_, trace) = forward(&small.former, &m).unwrap();
        assert!(matches!(
            backward(&large.former, &trace, &[1.0; 8]),
            Err(Error::TraceMismatch)
        ));
    }

    /// Central finite differences of `output · grad_out`.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (dim, l, n_f) = (3, 7, 2);
        let h = 1e-6;
        for _ in 0..10 {
            let twin = random_twin(&mut rng, dim, l, n_f);
            let params = twin.former;
            let valid = rng.gen_range(5..=l);
            let m = random_input(&mut rng, dim, l, valid);
            let g: Vec<f64> = (0..4 * n_f).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let objective = |p: &EncoderParams, m: &SequenceMatrix| {
                dot(&forward(p, m).unwrap().0, &g)
            };
            let (_, trace) = forward(&params, &m).unwrap();
            let (grads, input_grad) = backward(&params, &trace, &g).unwrap();

            for (bi, block) in params.blocks.iter().enumerate() {
                for (which, len) in [(0, block.kernels.len()), (1, block.bias.len())] {
                    for i in 0..len {
                        let mut plus = params.clone();
                        let mut minus = params.clone();
                        let (pp, mm) = if which == 0 {
                            (&mut plus.blocks[bi].kernels[i], &mut minus.blocks[bi].kernels[i])
                        } else {
                            (&mut plus.blocks[bi].bias[i], &mut minus.blocks[bi].bias[i])
                        };
                        *pp += h;
                        *mm -= h;
                        let numeric = (objective(&plus, &m) - objective(&minus, &m)) / (2.0 * h);
                        let analytic = if which == 0 {
                            grads.blocks[bi].kernels[i]
                        } else {
                            grads.blocks[bi].bias[i]
                        };
                        let scale = numeric.abs().max(analytic.abs()).max(1e-8);
                        assert!(
                            (numeric - analytic).abs() / scale < 1e-4 || (numeric - analytic).abs() < 1e-9,
                            "block {bi} param {i}: {numeric} vs {analytic}"
                        );
                    }
                }
            }
            for i in 0..m.valid_len() * dim {
                let mut plus = m.clone();
                let mut minus = m.clone();
                plus.data_mut()[i] += h;
                minus.data_mut()[i] -= h;
                let numeric = (objective(&params, &plus) - objective(&params, &minus)) / (2.0 * h);
                assert!((numeric - input_grad[i]).abs() < 1e-6, "input {i}");
            }
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[3.0, -1.0, 2.0], &[3.0, -1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        let (du, dv) = cosine_grad(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(du, vec![0.0, 1.0]);
        assert_eq!(dv, vec![1.0, 0.0]);
        let (du, _) = cosine_grad(&[2.0, 1.0], &[2.0, 1.0]).unwrap();
        assert!(du.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn cosine_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..50 {
            let n = rng.gen_range(2..10);
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let raw = |a: &[f64], b: &[f64]| dot(a, b) / (norm(a) * norm(b));
            let (du, dv) = cosine_grad(&u, &v).unwrap();
            for i in 0..n {
                let mut up = u.clone();
                let mut um = u.clone();
                up[i] += h;
                um[i] -= h;
                let numeric = (raw(&up, &v) - raw(&um, &v)) / (2.0 * h);
                let scale = numeric.abs().max(du[i].abs()).max(1e-3);
                assert!((numeric - du[i]).abs() / scale < 1e-6);
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[i] += h;
                vm[i] -= h;
                let numeric = (raw(&u, &vp) - raw(&u, &vm)) / (2.0 * h);
                let scale = numeric.abs().max(dv[i].abs()).max(1e-3);
                assert!((numeric - dv[i]).abs() / scale < 1e-6);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let twin = random_twin(&mut rng, 3, 7, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        twin.save(&path).unwrap();
        let back = TwinEncoder::load(&path).unwrap();
        assert_eq!(back, twin);
        assert_eq!(back.fingerprint(), twin.fingerprint());
    }

    proptest! {
        #[test]
        fn zero_bias_output_is_nonnegative(seed in 0u64..1000, valid in 5usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let config = EncoderConfig { dim: 3, l: 8, widths: vec![1, 2, 3, 5], n_filters: 3 };
            let twin = init_encoder(&config, seed).unwrap();
            let m = random_input(&mut rng, 3, 8, valid);
            let (out, _) = forward(&twin.former, &m).unwrap();
            prop_assert!(out.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn padding_never_changes_the_output(seed in 0u64..1000, valid in 5usize..8, extra in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut twin = random_twin(&mut rng, 2, 8, 2);
            // negative biases make zero padding attractive to an unmasked max
            for b in &mut twin.former.blocks {
                b.bias.iter_mut().for_each(|x| *x = -2.0);
            }
            let m = random_input(&mut rng, 2, 8, valid);
            let (a, _) = forward(&twin.former, &m).unwrap();
            let (b, _) = forward(&twin.former, &m.padded(8 + extra)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn permuting_filters_permutes_outputs(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let twin = random_twin(&mut rng, 2, 7, 3);
            let m = random_input(&mut rng, 2, 7, 7);
            let (out, _) = forward(&twin.former, &m).unwrap();
            let mut permuted = twin.former.clone();
            // rotate the filters of block 2 by one
            let block = &mut permuted.blocks[2];
            let k = block.kernels.len() / 3;
            block.kernels.rotate_left(k);
            block.bias.rotate_left(1);
            let (out2, _) = forward(&permuted, &m).unwrap();
            prop_assert_eq!(&out2[..6], &out[..6]);
            prop_assert_eq!(&out2[6..9], &[out[7], out[8], out[6]][..]);
            prop_assert_eq!(&out2[9..], &out[9..]);
        }
    }
}
