//! One recurrent step and the per-step activation cache.

use super::params::Parameters;
use super::tensor::{sigmoid, softmax_in_place, Dense, Scalar};
use super::NnError;

/// Recurrent hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct State<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Scalar> State<F> {
    pub fn zeros(hidden: usize) -> Self {
        State {
            h: vec![F::zero(); hidden],
            c: vec![F::zero(); hidden],
        }
    }
}

/// Activations of one step, enough to backpropagate through it.
#[derive(Debug, Clone)]
pub struct Step<F> {
    pub token: u32,
    /// `[x_t; h_{t-1}]`
    pub z: Vec<F>,
    pub c_prev: Vec<F>,
    /// Post-activation gates `[i; f; o; g]`.
    pub gates: Vec<F>,
    pub c: Vec<F>,
    pub tanh_c: Vec<F>,
    pub h: Vec<F>,
    /// Inputs of each tag-head layer (the first is `h`).
    pub tag_inputs: Vec<Vec<F>>,
    pub tag_logits: Vec<F>,
    pub tag_probs: Vec<F>,
    /// Empty when the language-model head was skipped.
    pub lm_inputs: Vec<Vec<F>>,
    pub lm_logits: Vec<F>,
    pub lm_probs: Vec<F>,
}

impl<F: Scalar> Step<F> {
    pub fn state(&self) -> State<F> {
        State {
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }

    pub fn has_lm(&self) -> bool {
        !self.lm_probs.is_empty()
    }
}

/// `-log softmax(logits)[k]`, evaluated in f64 from the logits so that it
/// stays finite when the probability underflows.
pub fn neg_log_prob<F: Scalar>(logits: &[F], k: usize) -> f64 {
    let max = logits.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|x| (x.f64() - max).exp()).sum();
    max + sum.ln() - logits[k].f64()
}

/// Runs a feed-forward head: tanh on hidden layers, softmax on the output.
/// Returns the inputs of every layer, the logits and the output distribution.
pub fn run_head<F: Scalar>(layers: &[Dense<F>], input: &[F]) -> (Vec<Vec<F>>, Vec<F>, Vec<F>) {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut cur = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let mut out = vec![F::zero(); layer.output_size()];
        layer.weight.affine(&cur, &layer.bias, &mut out);
        if i + 1 < layers.len() {
            for x in out.iter_mut() {
                *x = x.tanh();
            }
        }
        inputs.push(std::mem::replace(&mut cur, out));
    }
    let mut probs = cur.clone();
    softmax_in_place(&mut probs);
    (inputs, cur, probs)
}

/// One step of the tagger on `token` from `state`.
///
/// `index` is only used to label a divergence error.
pub fn forward_step<F: Scalar>(
    p: &Parameters<F>,
    state: &State<F>,
    token: u32,
    want_lm: bool,
    index: usize,
) -> Result<Step<F>, NnError> {
    let v = p.vocab_size();
    if token as usize >= v {
        return Err(NnError::TokenOutOfRange { token, vocab: v });
    }
    let h = p.hidden_size();
    let mut z = Vec::with_capacity(p.embedding_size() + h);
    z.extend_from_slice(p.embedding.row(token as usize));
    z.extend_from_slice(&state.h);

    let mut gates = vec![F::zero(); 4 * h];
    p.lstm_weight.affine(&z, &p.lstm_bias, &mut gates);
    for x in &mut gates[..3 * h] {
        *x = sigmoid(*x);
    }
    for x in &mut gates[3 * h..] {
        *x = x.tanh();
    }
    let mut c = vec![F::zero(); h];
    let mut tanh_c = vec![F::zero(); h];
    let mut hn = vec![F::zero(); h];
    for k in 0..h {
        let (i, f, o, g) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
        c[k] = f * state.c[k] + i * g;
        tanh_c[k] = c[k].tanh();
        hn[k] = o * tanh_c[k];
    }

    let (tag_inputs, tag_logits, tag_probs) = run_head(&p.tag_head, &hn);
    let (lm_inputs, lm_logits, lm_probs) = if want_lm {
        run_head(&p.lm_head, &hn)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    let finite = hn
        .iter()
        .chain(&c)
        .chain(&tag_logits)
        .chain(&tag_probs)
        .chain(&lm_logits)
        .chain(&lm_probs)
        .all(|x| x.is_finite());
    if !finite {
        return Err(NnError::NonFinite { step: index });
    }
    Ok(Step {
        token,
        z,
        c_prev: state.c.clone(),
        gates,
        c,
        tanh_c,
        h: hn,
        tag_inputs,
        tag_logits,
        tag_probs,
        lm_inputs,
        lm_logits,
        lm_probs,
    })
}

/// Runs a whole token sequence from the zero state.
pub fn forward_sequence<F: Scalar>(
    p: &Parameters<F>,
    tokens: &[u32],
    want_lm: bool,
) -> Result<Vec<Step<F>>, NnError> {
    let mut state = State::zeros(p.hidden_size());
    let mut trace = Vec::with_capacity(tokens.len());
    for (t, &tok) in tokens.iter().enumerate() {
        let step = forward_step(p, &state, tok, want_lm, t)?;
        state.h.clone_from(&step.h);
        state.c.clone_from(&step.c);
        trace.push(step);
    }
    Ok(trace)
}
