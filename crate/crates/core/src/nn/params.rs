//! Parameter container, initialization and tensor naming.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Dense, Matrix, Scalar};
use super::Hyperparams;
use crate::tagset::NUM_TAGS;

/// All trainable tensors of the tagger. Also used to hold gradients.
///
/// The recurrent cell keeps its four gates in one matrix of shape
/// `4H x (E + H)` acting on `[x_t; h_{t-1}]`, gate blocks ordered
/// input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<F> {
    pub embedding: Matrix<F>,
    pub lstm_weight: Matrix<F>,
    pub lstm_bias: Vec<F>,
    pub tag_head: Vec<Dense<F>>,
    pub lm_head: Vec<Dense<F>>,
}

/// Name, shape and flat contents of one tensor.
pub struct TensorView<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

pub struct TensorViewMut<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [F],
}

impl<F> TensorView<'_, F> {
    /// Weight matrices enter the L2 term, biases do not.
    pub fn is_weight(&self) -> bool {
        is_weight_name(&self.name)
    }
}

impl<F> TensorViewMut<'_, F> {
    pub fn is_weight(&self) -> bool {
        is_weight_name(&self.name)
    }
}

pub fn is_weight_name(name: &str) -> bool {
    name == "embedding" || name.ends_with(".weight")
}

fn head<F: Scalar>(input: usize, sizes: &[usize], out: usize) -> Vec<Dense<F>> {
    let mut dims = vec![input];
    dims.extend_from_slice(sizes);
    dims.push(out);
    dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect()
}

impl<F: Scalar> Parameters<F> {
    /// All-zero parameters shaped by `hyper`.
    pub fn zeros(hyper: &Hyperparams) -> Self {
        let (v, e, h) = (hyper.vocab_size, hyper.embedding_size, hyper.hidden_size);
        Parameters {
            embedding: Matrix::zeros(v, e),
            lstm_weight: Matrix::zeros(4 * h, e + h),
            lstm_bias: vec![F::zero(); 4 * h],
            tag_head: head(h, &hyper.head_layer_sizes, NUM_TAGS),
            lm_head: head(h, &hyper.head_layer_sizes, v),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(F::zero());
        z
    }

    pub fn fill(&mut self, value: F) {
        for t in self.tensors_mut() {
            t.data.fill(value);
        }
    }

    pub fn embedding_size(&self) -> usize {
        self.embedding.cols
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm_bias.len() / 4
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows
    }

    /// Tensors in canonical order (also the order of the model file).
    pub fn tensors(&self) -> Vec<TensorView<'_, F>> {
        let mut out = vec![
            TensorView {
                name: "embedding".into(),
                shape: vec![self.embedding.rows, self.embedding.cols],
                data: &self.embedding.data,
            },
            TensorView {
                name: "lstm.weight".into(),
                shape: vec![self.lstm_weight.rows, self.lstm_weight.cols],
                data: &self.lstm_weight.data,
            },
            TensorView {
                name: "lstm.bias".into(),
                shape: vec![self.lstm_bias.len()],
                data: &self.lstm_bias,
            },
        ];
        for (prefix, layers) in [("tag_head", &self.tag_head), ("lm_head", &self.lm_head)] {
            for (i, l) in layers.iter().enumerate() {
                out.push(TensorView {
                    name: format!("{prefix}.{i}.weight"),
                    shape: vec![l.weight.rows, l.weight.cols],
                    data: &l.weight.data,
                });
                out.push(TensorView {
                    name: format!("{prefix}.{i}.bias"),
                    shape: vec![l.bias.len()],
                    data: &l.bias,
                });
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_, F>> {
        let mut out = vec![
            TensorViewMut {
                name: "embedding".into(),
                shape: vec![self.embedding.rows, self.embedding.cols],
                data: &mut self.embedding.data,
            },
            TensorViewMut {
                name: "lstm.weight".into(),
                shape: vec![self.lstm_weight.rows, self.lstm_weight.cols],
                data: &mut self.lstm_weight.data,
            },
            TensorViewMut {
                name: "lstm.bias".into(),
                shape: vec![self.lstm_bias.len()],
                data: &mut self.lstm_bias,
            },
        ];
        for (prefix, layers) in [("tag_head", &mut self.tag_head), ("lm_head", &mut self.lm_head)] {
            for (i, l) in layers.iter_mut().enumerate() {
                out.push(TensorViewMut {
                    name: format!("{prefix}.{i}.weight"),
                    shape: vec![l.weight.rows, l.weight.cols],
                    data: &mut l.weight.data,
                });
                out.push(TensorViewMut {
                    name: format!("{prefix}.{i}.bias"),
                    shape: vec![l.bias.len()],
                    data: &mut l.bias,
                });
            }
        }
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Parameters<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::of(x.f64())).collect::<Vec<G>>();
        let mat = |m: &Matrix<F>| Matrix {
            rows: m.rows,
            cols: m.cols,
            data: conv(&m.data),
        };
        let dense = |ls: &[Dense<F>]| {
            ls.iter()
                .map(|l| Dense {
                    weight: mat(&l.weight),
                    bias: conv(&l.bias),
                })
                .collect()
        };
        Parameters {
            embedding: mat(&self.embedding),
            lstm_weight: mat(&self.lstm_weight),
            lstm_bias: conv(&self.lstm_bias),
            tag_head: dense(&self.tag_head),
            lm_head: dense(&self.lm_head),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: F, other: &Parameters<F>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::tensor::axpy(scale, b.data, a.data);
        }
    }

    /// `(lambda / 2) * sum of squared weight-matrix entries`
    pub fn l2_penalty(&self, lambda: f64) -> f64 {
        let mut sum = 0.0f64;
        for t in self.tensors() {
            if t.is_weight() {
                sum += t.data.iter().map(|w| w.f64() * w.f64()).sum::<f64>();
            }
        }
        0.5 * lambda * sum
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill_uniform<F: Scalar>(data: &mut [F], limit: f64, rng: &mut ChaCha8Rng) {
    let s = F::of(limit);
    for x in data.iter_mut() {
        loop {
            let w = F::of(limit * (2.0 * rng.gen::<f64>() - 1.0));
            if w > -s && w < s {
                *x = w;
                break;
            }
        }
    }
}

/// Deterministic initialization from `hyper.seed`.
///
/// Weights are uniform in `(-s, s)` with a per-matrix Glorot limit; each gate
/// block of the recurrent matrix is its own matrix with fans `(E + H, H)`.
/// Biases are zero except the forget gate, which starts at 1.
pub fn init_params<F: Scalar>(hyper: &Hyperparams) -> Parameters<F> {
    let mut p = Parameters::<F>::zeros(hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let (v, e, h) = (hyper.vocab_size, hyper.embedding_size, hyper.hidden_size);
    fill_uniform(&mut p.embedding.data, glorot_limit(v, e), &mut rng);
    let gate_limit = glorot_limit(e + h, h);
    for block in p.lstm_weight.data.chunks_mut(h * (e + h)) {
        fill_uniform(block, gate_limit, &mut rng);
    }
    for b in &mut p.lstm_bias[h..2 * h] {
        *b = F::one();
    }
    for layer in p.tag_head.iter_mut().chain(p.lm_head.iter_mut()) {
        let limit = glorot_limit(layer.input_size(), layer.output_size());
        fill_uniform(&mut layer.weight.data, limit, &mut rng);
    }
    p
}
