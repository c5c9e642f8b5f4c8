//! Padded batches, the weighted multi-task loss and its gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{forward_sequence, neg_log_prob, Step};
use super::params::Parameters;
use super::tensor::{axpy, Dense, Scalar};
use super::{Hyperparams, NnError};
use crate::corpus::{encode_utterance, Utterance, Vocabulary, PAD_ID};
use crate::tagset::{Tag, NUM_TAGS};

/// Rows handled by one gradient task. Fixed so that the reduction order does
/// not depend on the number of threads.
const ROWS_PER_TASK: usize = 4;

/// One training sequence: input ids, gold tag indices and next-token targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub tokens: Vec<u32>,
    pub tags: Vec<usize>,
    pub next: Vec<u32>,
}

impl Sequence {
    pub fn new(tokens: Vec<u32>, tags: Vec<usize>, next: Vec<u32>) -> Self {
        assert_eq!(tokens.len(), tags.len());
        assert_eq!(tokens.len(), next.len());
        Sequence { tokens, tags, next }
    }

    /// `None` if the utterance lacks gold tags.
    pub fn from_utterance(vocab: &Vocabulary, utt: &Utterance) -> Option<Sequence> {
        let tags = utt.gold_tags()?;
        let ids = encode_utterance(vocab, utt);
        let n = tags.len();
        Some(Sequence {
            tokens: ids[..n].to_vec(),
            tags: tags.into_iter().map(Tag::index).collect(),
            next: ids[1..].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sequences padded with PAD to a common length; `lengths` masks the padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub tokens: Vec<Vec<u32>>,
    pub tags: Vec<Vec<usize>>,
    pub next: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn new(seqs: &[&Sequence]) -> Batch {
        let width = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let pad = |v: &[u32]| {
            let mut v = v.to_vec();
            v.resize(width, PAD_ID);
            v
        };
        Batch {
            tokens: seqs.iter().map(|s| pad(&s.tokens)).collect(),
            tags: seqs
                .iter()
                .map(|s| {
                    let mut t = s.tags.clone();
                    t.resize(width, 0);
                    t
                })
                .collect(),
            next: seqs.iter().map(|s| pad(&s.next)).collect(),
            lengths: seqs.iter().map(|s| s.len()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.lengths.len()
    }

    /// Number of unmasked steps.
    pub fn steps(&self) -> usize {
        self.lengths.iter().sum()
    }

    fn row(&self, r: usize) -> (&[u32], &[usize], &[u32]) {
        let n = self.lengths[r];
        (&self.tokens[r][..n], &self.tags[r][..n], &self.next[r][..n])
    }
}

/// Loss terms; `total = main + alpha * lm + reg`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub main: f64,
    pub lm: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossComponents {
    fn from_sums(main_sum: f64, lm_sum: f64, steps: usize, reg: f64, alpha: f64) -> Self {
        let (main, lm) = if steps == 0 {
            (0.0, 0.0)
        } else {
            (main_sum / steps as f64, lm_sum / steps as f64)
        };
        LossComponents {
            main,
            lm,
            reg,
            total: main + alpha * lm + reg,
        }
    }
}

fn check_weights(weights: &[f64]) {
    assert_eq!(weights.len(), NUM_TAGS, "one weight per tag");
}

/// Unnormalized weighted tag cross-entropy and LM cross-entropy of one trace.
fn row_sums<F: Scalar>(
    trace: &[Step<F>],
    tags: &[usize],
    next: &[u32],
    weights: &[f64],
) -> Result<(f64, f64), NnError> {
    let mut main = 0.0;
    let mut lm = 0.0;
    for (t, s) in trace.iter().enumerate() {
        let w = weights[tags[t]];
        if w == 0.0 {
            return Err(NnError::ZeroWeightClass {
                tag: Tag::from_index(tags[t]).expect("valid tag index").render(),
                step: t,
            });
        }
        main += w * neg_log_prob(&s.tag_logits, tags[t]);
        if s.has_lm() {
            lm += neg_log_prob(&s.lm_logits, next[t] as usize);
        }
    }
    Ok((main, lm))
}

/// Loss of already computed traces, one per batch row.
pub fn loss<F: Scalar>(
    params: &Parameters<F>,
    traces: &[Vec<Step<F>>],
    batch: &Batch,
    weights: &[f64],
    hyper: &Hyperparams,
) -> Result<LossComponents, NnError> {
    check_weights(weights);
    let mut main = 0.0;
    let mut lm = 0.0;
    for (r, trace) in traces.iter().enumerate() {
        let (_, tags, next) = batch.row(r);
        let (m, l) = row_sums(trace, tags, next, weights)?;
        main += m;
        lm += l;
    }
    Ok(LossComponents::from_sums(
        main,
        lm,
        batch.steps(),
        params.l2_penalty(hyper.lambda),
        hyper.alpha,
    ))
}

/// Forward pass over every row followed by [`loss`].
pub fn batch_loss<F: Scalar>(
    params: &Parameters<F>,
    batch: &Batch,
    weights: &[f64],
    hyper: &Hyperparams,
) -> Result<LossComponents, NnError> {
    let traces = (0..batch.rows())
        .map(|r| forward_sequence(params, batch.row(r).0, true))
        .collect::<Result<Vec<_>, _>>()?;
    loss(params, &traces, batch, weights, hyper)
}

fn head_backward<F: Scalar>(
    layers: &[Dense<F>],
    grads: &mut [Dense<F>],
    inputs: &[Vec<F>],
    mut d: Vec<F>,
    dh: &mut [F],
) {
    for l in (0..layers.len()).rev() {
        grads[l].weight.outer_acc(&d, &inputs[l]);
        axpy(F::one(), &d, &mut grads[l].bias);
        let mut din = vec![F::zero(); layers[l].input_size()];
        layers[l].weight.transpose_mul_acc(&d, &mut din);
        if l > 0 {
            for (g, a) in din.iter_mut().zip(&inputs[l]) {
                *g *= F::one() - *a * *a;
            }
        }
        d = din;
    }
    axpy(F::one(), &d, dh);
}

/// Accumulates into `grads` the gradient of
/// `main_scale * sum_t W_y (-log p_y) + lm_scale * sum_t (-log q_next)`
/// over one trace, cutting the recurrent gradient every `window` steps.
#[allow(clippy::too_many_arguments)]
pub fn backward<F: Scalar>(
    params: &Parameters<F>,
    trace: &[Step<F>],
    tags: &[usize],
    next: &[u32],
    weights: &[f64],
    main_scale: F,
    lm_scale: F,
    window: usize,
    grads: &mut Parameters<F>,
) {
    let h = params.hidden_size();
    let e = params.embedding_size();
    let window = window.max(1);
    let mut dh_next = vec![F::zero(); h];
    let mut dc_next = vec![F::zero(); h];
    for t in (0..trace.len()).rev() {
        let s = &trace[t];
        let mut dh = dh_next.clone();

        let mut dlogits = s.tag_probs.clone();
        dlogits[tags[t]] -= F::one();
        let scale = main_scale * F::of(weights[tags[t]]);
        dlogits.iter_mut().for_each(|x| *x *= scale);
        head_backward(&params.tag_head, &mut grads.tag_head, &s.tag_inputs, dlogits, &mut dh);

        if lm_scale != F::zero() && s.has_lm() {
            let mut dlogits = s.lm_probs.clone();
            dlogits[next[t] as usize] -= F::one();
            dlogits.iter_mut().for_each(|x| *x *= lm_scale);
            head_backward(&params.lm_head, &mut grads.lm_head, &s.lm_inputs, dlogits, &mut dh);
        }

        let mut da = vec![F::zero(); 4 * h];
        let mut dc_prev = vec![F::zero(); h];
        let one = F::one();
        for k in 0..h {
            let (i, f, o, g) = (s.gates[k], s.gates[h + k], s.gates[2 * h + k], s.gates[3 * h + k]);
            let tc = s.tanh_c[k];
            let dc = dc_next[k] + dh[k] * o * (one - tc * tc);
            da[k] = dc * g * i * (one - i);
            da[h + k] = dc * s.c_prev[k] * f * (one - f);
            da[2 * h + k] = dh[k] * tc * o * (one - o);
            da[3 * h + k] = dc * i * (one - g * g);
            dc_prev[k] = dc * f;
        }
        grads.lstm_weight.outer_acc(&da, &s.z);
        axpy(one, &da, &mut grads.lstm_bias);
        let mut dz = vec![F::zero(); e + h];
        params.lstm_weight.transpose_mul_acc(&da, &mut dz);
        axpy(one, &dz[..e], grads.embedding.row_mut(s.token as usize));

        if t % window == 0 {
            dh_next.fill(F::zero());
            dc_next.fill(F::zero());
        } else {
            dh_next.copy_from_slice(&dz[e..]);
            dc_next = dc_prev;
        }
    }
}

/// Adds the L2 gradient `lambda * w` to every weight matrix.
pub fn add_l2_gradient<F: Scalar>(params: &Parameters<F>, lambda: f64, grads: &mut Parameters<F>) {
    let lambda = F::of(lambda);
    for (g, p) in grads.tensors_mut().into_iter().zip(params.tensors()) {
        if p.is_weight() {
            axpy(lambda, p.data, g.data);
        }
    }
}

/// Loss and exact (window-truncated) gradients of a batch.
///
/// Rows are processed in fixed groups, possibly in parallel, and the group
/// gradients are summed in row order, so the result is bitwise reproducible.
pub fn loss_and_gradients<F: Scalar>(
    params: &Parameters<F>,
    batch: &Batch,
    weights: &[f64],
    hyper: &Hyperparams,
) -> Result<(LossComponents, Parameters<F>), NnError> {
    check_weights(weights);
    let steps = batch.steps();
    let inv = if steps == 0 { 0.0 } else { 1.0 / steps as f64 };
    let main_scale = F::of(inv);
    let lm_scale = F::of(hyper.alpha * inv);
    let rows: Vec<usize> = (0..batch.rows()).collect();
    let parts = rows
        .par_chunks(ROWS_PER_TASK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            let mut main = 0.0;
            let mut lm = 0.0;
            for &r in chunk {
                let (tokens, tags, next) = batch.row(r);
                let trace = forward_sequence(params, tokens, true)?;
                let (m, l) = row_sums(&trace, tags, next, weights)?;
                main += m;
                lm += l;
                backward(
                    params,
                    &trace,
                    tags,
                    next,
                    weights,
                    main_scale,
                    lm_scale,
                    hyper.context_window,
                    &mut g,
                );
            }
            Ok((main, lm, g))
        })
        .collect::<Result<Vec<_>, NnError>>()?;

    let mut grads = params.zeros_like();
    let mut main = 0.0;
    let mut lm = 0.0;
    for (m, l, g) in parts {
        main += m;
        lm += l;
        grads.add_scaled(F::one(), &g);
    }
    add_l2_gradient(params, hyper.lambda, &mut grads);
    let comps = LossComponents::from_sums(main, lm, steps, params.l2_penalty(hyper.lambda), hyper.alpha);
    Ok((comps, grads))
}
