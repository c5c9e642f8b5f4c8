//! Mini-batch SGD with per-epoch learning-rate decay and early stopping on
//! development-set F_rm (ties broken by F_e, then tag accuracy).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_vocabulary, class_weights, ClassWeights, Corpus, WeightError, WeightScale};
use crate::metrics::{evaluate, EvalReport, MetricsError, RmMatch};
use crate::nn::{loss_and_gradients, Batch, Hyperparams, LossComponents, Model, NnError, Parameters, Scalar, Sequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev F_rm improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Minimum training frequency for a token to enter the vocabulary.
    pub min_count: u64,
    pub weight_scale: WeightScale,
    /// Rescale each batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            lr_decay: 0.9,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            seed: 0,
            min_count: 1,
            weight_scale: WeightScale::default(),
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(TrainError::Config(format!("lr decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(TrainError::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate used during epoch `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevScores {
    pub f_e: f64,
    pub f_rm: f64,
    pub f_rps: f64,
    pub tag_accuracy: f64,
}

impl From<&EvalReport> for DevScores {
    fn from(r: &EvalReport) -> Self {
        DevScores {
            f_e: r.f_e,
            f_rm: r.f_rm,
            f_rps: r.f_rps,
            tag_accuracy: r.tag_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean of the batch losses of the epoch.
    pub loss: LossComponents,
    pub dev: DevScores,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub hyper: Hyperparams,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub class_weights: ClassWeights,
    pub epochs: Vec<EpochReport>,
    pub best_epoch: usize,
    pub best_dev_f_rm: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} corpus has no utterances")]
    EmptyCorpus(&'static str),
    #[error("{corpus} utterance {index} has no gold tags")]
    Untagged { corpus: &'static str, index: usize },
    #[error("non-finite gradient in {tensor}[{index}]")]
    NonFiniteGradient { tensor: String, index: usize },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Numeric { epoch: usize, batch: usize, source: NnError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl TrainError {
    /// True for divergence rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient { .. }
                | TrainError::Numeric { .. }
                | TrainError::Nn(NnError::NonFinite { .. })
                | TrainError::Metrics(MetricsError::Model(NnError::NonFinite { .. }))
        )
    }
}

/// `w <- w - lr * g` for every tensor. Nothing is modified if any gradient
/// entry is non-finite.
pub fn sgd_step<F: Scalar>(params: &mut Parameters<F>, grads: &Parameters<F>, lr: f64) -> Result<(), TrainError> {
    for t in grads.tensors() {
        if let Some(index) = t.data.iter().position(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { tensor: t.name, index });
        }
    }
    let lr = F::of(lr);
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (w, &d) in p.data.iter_mut().zip(g.data) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Scales `grads` down to global L2 norm `max_norm` if it is larger.
/// Returns the norm before clipping.
pub fn clip_gradients<F: Scalar>(grads: &mut Parameters<F>, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|&g| g.to_f64().unwrap_or(f64::NAN).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = F::of(max_norm / norm);
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|g| *g = *g * k);
        }
    }
    norm
}

fn sequences(model: &Model, corpus: &Corpus, name: &'static str) -> Result<Vec<Sequence>, TrainError> {
    corpus
        .utterances()
        .enumerate()
        .map(|(index, u)| Sequence::from_utterance(&model.vocab, u).ok_or(TrainError::Untagged { corpus: name, index }))
        .collect()
}

/// One pass over `seqs` in the given order.
pub fn run_epoch(
    params: &mut Parameters<f32>,
    hyper: &Hyperparams,
    seqs: &[Sequence],
    order: &[usize],
    weights: &[f64],
    batch_size: usize,
    lr: f64,
    clip_norm: Option<f64>,
    epoch: usize,
) -> Result<LossComponents, TrainError> {
    let mut sum = LossComponents::default();
    let mut batches = 0usize;
    for (b, chunk) in order.chunks(batch_size).enumerate() {
        let rows: Vec<&Sequence> = chunk.iter().map(|&i| &seqs[i]).collect();
        let batch = Batch::new(&rows);
        let (l, mut g) = loss_and_gradients(params, &batch, weights, hyper).map_err(|source| TrainError::Numeric {
            epoch,
            batch: b,
            source,
        })?;
        if let Some(c) = clip_norm {
            clip_gradients(&mut g, c);
        }
        sgd_step(params, &g, lr)?;
        sum.main += l.main;
        sum.lm += l.lm;
        sum.reg += l.reg;
        sum.total += l.total;
        batches += 1;
    }
    let n = batches.max(1) as f64;
    Ok(LossComponents {
        main: sum.main / n,
        lm: sum.lm / n,
        reg: sum.reg / n,
        total: sum.total / n,
    })
}

/// Trains a tagger on `train`, selecting the epoch with the best dev F_rm.
pub fn train(
    train: &Corpus,
    dev: &Corpus,
    hyper: &Hyperparams,
    config: &TrainConfig,
) -> Result<(Model, TrainReport), TrainError> {
    train_with_progress(train, dev, hyper, config, |_| {})
}

/// Like [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    train: &Corpus,
    dev: &Corpus,
    hyper: &Hyperparams,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochReport),
) -> Result<(Model, TrainReport), TrainError> {
    config.validate()?;
    if train.utterances().next().is_none() {
        return Err(TrainError::EmptyCorpus("training"));
    }
    if dev.utterances().next().is_none() {
        return Err(TrainError::EmptyCorpus("development"));
    }
    if let Some(index) = dev.utterances().position(|u| !u.is_tagged()) {
        return Err(TrainError::Untagged {
            corpus: "development",
            index,
        });
    }

    let vocab = build_vocabulary(train, config.min_count);
    let mut model = Model::init(hyper.clone(), vocab)?;
    let weights = class_weights(train, hyper.gamma)?.normalized(config.weight_scale);
    let seqs = sequences(&model, train, "training")?;

    let mut epochs = Vec::new();
    let mut best: Option<(usize, [f64; 3], Parameters<f32>)> = None;
    let mut since_best = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for epoch in 0..config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let lr = config.learning_rate_at(epoch);
        let loss = run_epoch(
            &mut model.params,
            &model.hyper,
            &seqs,
            &order,
            &weights.weights,
            config.batch_size,
            lr,
            config.clip_norm,
            epoch,
        )?;
        let report = evaluate(&model, dev, RmMatch::RmOnly)?;
        // Ties on F_rm (e.g. a dev set without repairs) fall back to F_e,
        // then tag accuracy.
        let key = [report.f_rm, report.f_e, report.tag_accuracy];
        let improved = best.as_ref().is_none_or(|(_, k, _)| key > *k);
        if improved {
            best = Some((epoch, key, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let er = EpochReport {
            epoch,
            learning_rate: lr,
            loss,
            dev: DevScores::from(&report),
            improved,
        };
        progress(&er);
        epochs.push(er);
        if since_best > config.patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let (best_epoch, best_dev_f_rm) = match best {
        Some((e, k, params)) => {
            model.params = params;
            (e, k[0])
        }
        None => (0, 0.0),
    };
    let report = TrainReport {
        config: config.clone(),
        hyper: model.hyper.clone(),
        train_utterances: seqs.len(),
        dev_utterances: dev.utterances().count(),
        class_weights: weights,
        epochs,
        best_epoch,
        best_dev_f_rm,
        stop_reason,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::batch_loss;
    use crate::synthgen::{generate_corpus, Preset};

    fn small_hyper() -> Hyperparams {
        Hyperparams {
            embedding_size: 8,
            hidden_size: 8,
            head_layer_sizes: vec![8],
            seed: 1,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let h = Hyperparams {
            vocab_size: 4,
            ..small_hyper()
        };
        let mut p = Parameters::<f64>::zeros(&h);
        p.fill(1.0);
        let mut g = p.zeros_like();
        g.fill(2.0);
        let before = p.clone();
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, before);
        sgd_step(&mut p, &g, 0.1).unwrap();
        for t in p.tensors() {
            assert!(t.data.iter().all(|&w| (w - 0.8).abs() < 1e-15));
        }
        g.lstm_bias[2] = f64::NAN;
        let err = sgd_step(&mut p, &g, 0.1).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { index: 2, .. }));
    }

    #[test]
    fn one_small_step_lowers_the_loss() {
        let corpus = generate_corpus(&Preset::Mixed.config(3, 5)).unwrap();
        let vocab = build_vocabulary(&corpus, 1);
        let model = Model::init(small_hyper(), vocab).unwrap();
        let seqs = sequences(&model, &corpus, "training").unwrap();
        let batch = Batch::new(&seqs.iter().collect::<Vec<_>>());
        let w = class_weights(&corpus, 1.05).unwrap().unit_mean().weights;
        let p = model.params.cast::<f64>();
        let (l0, g) = loss_and_gradients(&p, &batch, &w, &model.hyper).unwrap();
        let mut q = p.clone();
        sgd_step(&mut q, &g, 1e-3).unwrap();
        let l1 = batch_loss(&q, &batch, &w, &model.hyper).unwrap();
        assert!(l1.total < l0.total, "{} -> {}", l0.total, l1.total);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let h = Hyperparams {
            vocab_size: 4,
            ..small_hyper()
        };
        let mut g = Parameters::<f64>::zeros(&h);
        g.fill(1.0);
        let n = g.tensors().iter().map(|t| t.data.len()).sum::<usize>() as f64;
        let before = clip_gradients(&mut g, 2.0);
        assert!((before - n.sqrt()).abs() < 1e-12);
        let after = clip_gradients(&mut g, 2.0);
        assert!((after - 2.0).abs() < 1e-12);
        let unchanged = g.clone();
        clip_gradients(&mut g, 10.0);
        assert_eq!(g, unchanged);
    }

    #[test]
    fn learning_rate_schedule_is_exact() {
        let c = TrainConfig::default();
        for e in 0..20 {
            assert_eq!(c.learning_rate_at(e), 0.01 * 0.9f64.powi(e as i32));
        }
    }

    fn tiny_run(config: &TrainConfig) -> (Model, TrainReport) {
        let corpus = generate_corpus(&Preset::Mixed.config(12, 3)).unwrap();
        let parts = corpus.split(&[0.75, 0.25]);
        train(&parts[0], &parts[1], &small_hyper(), config).unwrap()
    }

    #[test]
    fn training_is_deterministic_and_keeps_best_epoch() {
        let config = TrainConfig {
            learning_rate: 0.5,
            lr_decay: 0.95,
            max_epochs: 4,
            patience: 10,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (m1, r1) = tiny_run(&config);
        let (m2, r2) = tiny_run(&config);
        assert_eq!(r1, r2);
        assert_eq!(m1.to_bytes(), m2.to_bytes());
        assert_eq!(r1.epochs.len(), 4);
        assert_eq!(r1.stop_reason, StopReason::MaxEpochs);
        let best = r1.epochs.iter().map(|e| e.dev.f_rm).fold(f64::MIN, f64::max);
        assert_eq!(r1.best_dev_f_rm, best);
        let first = r1.epochs.iter().position(|e| e.dev.f_rm == best).unwrap();
        assert_eq!(r1.best_epoch, first);
        for w in r1.epochs.windows(2) {
            assert!(w[1].learning_rate <= w[0].learning_rate);
        }
    }

    #[test]
    fn patience_zero_stops_at_first_non_improvement() {
        let config = TrainConfig {
            learning_rate: 1e-9,
            max_epochs: 10,
            patience: 0,
            ..TrainConfig::default()
        };
        let (_, r) = tiny_run(&config);
        assert_eq!(r.stop_reason, StopReason::Patience);
        let first_bad = r.epochs.iter().position(|e| !e.improved).unwrap();
        assert_eq!(r.epochs.len(), first_bad + 1);
    }

    #[test]
    fn untagged_dev_is_rejected() {
        let corpus = generate_corpus(&Preset::Mixed.config(4, 3)).unwrap();
        let mut dev = corpus.clone();
        dev.dialogues[0].utterances[0].tokens[0].tag = None;
        let err = train(&corpus, &dev, &small_hyper(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::Untagged { .. }));
        let empty = Corpus::new("empty", vec![]);
        assert!(matches!(
            train(&empty, &corpus, &small_hyper(), &TrainConfig::default()),
            Err(TrainError::EmptyCorpus(_))
        ));
    }
}
