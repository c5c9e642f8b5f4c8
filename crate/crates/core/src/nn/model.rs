//! Trained tagger: hyperparameters, vocabulary and 32-bit parameters, with
//! batch tagging and an incremental session.

use rayon::prelude::*;

use super::forward::{forward_step, State};
use super::params::{init_params, Parameters};
use super::tensor::argmax;
use super::{Hyperparams, NnError};
use crate::corpus::{Corpus, Token, Vocabulary};
use crate::tagset::Tag;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hyper: Hyperparams,
    pub vocab: Vocabulary,
    pub params: Parameters<f32>,
}

/// Output for one consumed token.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub tag: Tag,
    pub tag_probs: Vec<f32>,
    pub lm_probs: Vec<f32>,
}

/// Utterance-scoped recurrent state of an incremental session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    state: State<f32>,
    consumed: usize,
    closed: bool,
}

impl SessionState {
    /// Tokens consumed since the last utterance boundary.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Resets the recurrent state at an utterance boundary.
    pub fn end_utterance(&mut self) -> Result<(), NnError> {
        if self.closed {
            return Err(NnError::SessionClosed);
        }
        self.state = State::zeros(self.state.h.len());
        self.consumed = 0;
        Ok(())
    }

    pub fn close(&mut self) {
        self.closed = true;
    }
}

fn tag_of(probs: &[f32]) -> Tag {
    Tag::from_index(argmax(probs)).expect("27 tag outputs")
}

impl Model {
    pub fn new(hyper: Hyperparams, vocab: Vocabulary, params: Parameters<f32>) -> Result<Model, NnError> {
        hyper.validate()?;
        if hyper.vocab_size != vocab.len() {
            return Err(NnError::InvalidHyper(format!(
                "vocab_size {} but vocabulary has {} entries",
                hyper.vocab_size,
                vocab.len()
            )));
        }
        let expected = Parameters::<f32>::zeros(&hyper);
        for (e, f) in expected.tensors().iter().zip(params.tensors()) {
            if e.name != f.name || e.shape != f.shape {
                return Err(NnError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: e.shape.clone(),
                    found: f.shape,
                });
            }
        }
        if expected.tensors().len() != params.tensors().len() {
            return Err(NnError::Header("wrong number of tensors".into()));
        }
        Ok(Model { hyper, vocab, params })
    }

    /// Freshly initialized model; `hyper.vocab_size` is taken from `vocab`.
    pub fn init(mut hyper: Hyperparams, vocab: Vocabulary) -> Result<Model, NnError> {
        hyper.vocab_size = vocab.len();
        hyper.validate()?;
        let params = init_params(&hyper);
        Ok(Model { hyper, vocab, params })
    }

    pub fn open_session(&self) -> SessionState {
        SessionState {
            state: State::zeros(self.hyper.hidden_size),
            consumed: 0,
            closed: false,
        }
    }

    /// Consumes one token and commits to its tag.
    pub fn feed_token(&self, session: &mut SessionState, token: u32) -> Result<Prediction, NnError> {
        if session.closed {
            return Err(NnError::SessionClosed);
        }
        let step = forward_step(&self.params, &session.state, token, true, session.consumed)?;
        session.state.h.clone_from(&step.h);
        session.state.c.clone_from(&step.c);
        session.consumed += 1;
        Ok(Prediction {
            tag: tag_of(&step.tag_probs),
            tag_probs: step.tag_probs,
            lm_probs: step.lm_probs,
        })
    }

    pub fn feed(&self, session: &mut SessionState, token: &Token) -> Result<Prediction, NnError> {
        self.feed_token(session, self.vocab.token_id(token))
    }

    /// Tags a whole utterance, one step at a time from the zero state.
    pub fn tag_ids(&self, ids: &[u32]) -> Result<Vec<Tag>, NnError> {
        let mut state = State::zeros(self.hyper.hidden_size);
        let mut tags = Vec::with_capacity(ids.len());
        for (t, &id) in ids.iter().enumerate() {
            let step = forward_step(&self.params, &state, id, false, t)?;
            tags.push(tag_of(&step.tag_probs));
            state.h = step.h;
            state.c = step.c;
        }
        Ok(tags)
    }

    pub fn tag_tokens(&self, tokens: &[Token]) -> Result<Vec<Tag>, NnError> {
        self.tag_ids(&self.vocab.encode_tokens(tokens))
    }

    /// Tags every utterance of the corpus, in corpus order.
    pub fn tag_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<Tag>>, NnError> {
        let utts: Vec<_> = corpus.utterances().collect();
        utts.par_iter().map(|u| self.tag_tokens(&u.tokens)).collect()
    }
}
