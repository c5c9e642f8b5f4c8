//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, loss_and_gradients, Batch, Sequence};
use super::params::{init_params, Parameters};
use super::Hyperparams;
use crate::tagset::NUM_TAGS;

/// Keeps the relative error defined when both gradients vanish.
pub const REL_FLOOR: f64 = 1e-10;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub size: usize,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub h: f64,
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

/// Compares analytic gradients with `(L(w+h) - L(w-h)) / 2h` on up to
/// `samples` randomly chosen entries per tensor (all entries of smaller ones).
pub fn check_gradients(
    params: &Parameters<f64>,
    batch: &Batch,
    weights: &[f64],
    hyper: &Hyperparams,
    h: f64,
    samples: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, grads) = loss_and_gradients(params, batch, weights, hyper).expect("finite forward pass");
    let loss_at = |p: &Parameters<f64>| batch_loss(p, batch, weights, hyper).expect("finite forward pass").total;
    let mut work = params.clone();
    let mut tensors = Vec::new();
    let grad_views = grads.tensors();
    for (ti, g) in grad_views.iter().enumerate() {
        let len = g.data.len();
        let idx: Vec<usize> = if len <= samples {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, samples).into_vec();
            v.sort_unstable();
            v
        };
        let mut worst = 0.0f64;
        for &k in &idx {
            let orig = work.tensors()[ti].data[k];
            work.tensors_mut()[ti].data[k] = orig + h;
            let plus = loss_at(&work);
            work.tensors_mut()[ti].data[k] = orig - h;
            let minus = loss_at(&work);
            work.tensors_mut()[ti].data[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(g.data[k], numeric));
        }
        tensors.push(TensorCheck {
            name: g.name.clone(),
            size: len,
            checked: idx.len(),
            max_rel_error: worst,
        });
    }
    GradCheckReport {
        h,
        max_rel_error: tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max),
        tensors,
    }
}

/// Random short sequences over the vocabulary of `hyper`.
pub fn random_batch(hyper: &Hyperparams, rows: usize, max_len: usize, rng: &mut impl Rng) -> Batch {
    let v = hyper.vocab_size as u32;
    let seqs: Vec<Sequence> = (0..rows)
        .map(|_| {
            let n = rng.gen_range(1..=max_len);
            Sequence::new(
                (0..n).map(|_| rng.gen_range(1..v)).collect(),
                (0..n).map(|_| rng.gen_range(0..NUM_TAGS)).collect(),
                (0..n).map(|_| rng.gen_range(1..v)).collect(),
            )
        })
        .collect();
    Batch::new(&seqs.iter().collect::<Vec<_>>())
}

/// Full check in 64-bit arithmetic on a model built from `hyper` with random
/// biases, random data and non-uniform class weights. Sequences are kept
/// within the truncation window so the checked gradient is the exact one.
pub fn gradient_check(hyper: &Hyperparams, seed: u64, h: f64) -> GradCheckReport {
    let hyper = Hyperparams {
        seed,
        ..hyper.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut params = init_params::<f64>(&hyper);
    for t in params.tensors_mut() {
        if !t.is_weight() {
            for b in t.data.iter_mut() {
                *b += rng.gen_range(-0.5..0.5);
            }
        }
    }
    let batch = random_batch(&hyper, 4, hyper.context_window.min(8), &mut rng);
    let weights: Vec<f64> = (0..NUM_TAGS).map(|_| rng.gen_range(0.1..4.0)).collect();
    check_gradients(&params, &batch, &weights, &hyper, h, 200, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn tiny() -> Hyperparams {
        Hyperparams {
            vocab_size: 20,
            embedding_size: 8,
            hidden_size: 12,
            head_layer_sizes: vec![10],
            alpha: 0.1,
            lambda: 0.001,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let r = gradient_check(&tiny(), 1, 1e-4);
        assert!(r.max_rel_error < 1e-5, "{r:#?}");
        assert_eq!(r.tensors.len(), 11);
        for t in &r.tensors {
            assert_eq!(t.checked, t.size.min(200), "{}", t.name);
        }
    }

    /// The regularizer is quadratic, so central differences are exact up to
    /// the rounding of the loss value itself.
    #[test]
    fn regularizer_alone_is_exact() {
        let h = Hyperparams { alpha: 0.0, ..tiny() };
        let params = init_params::<f64>(&h);
        let empty = Batch::new(&[]);
        let loss = batch_loss(&params, &empty, &[1.0; NUM_TAGS], &h).unwrap().total;
        let (_, grads) = loss_and_gradients(&params, &empty, &[1.0; NUM_TAGS], &h).unwrap();
        let step = 1e-4;
        let rounding = 16.0 * f64::EPSILON * loss / step;
        let mut work = params.clone();
        for (ti, g) in grads.tensors().iter().enumerate() {
            for k in (0..g.data.len()).step_by(7) {
                let orig = work.tensors()[ti].data[k];
                work.tensors_mut()[ti].data[k] = orig + step;
                let plus = batch_loss(&work, &empty, &[1.0; NUM_TAGS], &h).unwrap().total;
                work.tensors_mut()[ti].data[k] = orig - step;
                let minus = batch_loss(&work, &empty, &[1.0; NUM_TAGS], &h).unwrap().total;
                work.tensors_mut()[ti].data[k] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                assert!((numeric - g.data[k]).abs() <= rounding, "{}[{k}]", g.name);
            }
        }
    }

    #[test]
    fn error_grows_with_step() {
        let small = gradient_check(&tiny(), 3, 1e-4).max_rel_error;
        let large = gradient_check(&tiny(), 3, 1.0).max_rel_error;
        assert!(large > 100.0 * small, "{small} vs {large}");
    }
}
