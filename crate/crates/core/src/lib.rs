//! Word-by-word incremental disfluency detection.
//!
//! The crate covers the whole pipeline: the 27-label repair tag scheme
//! ([`tagset`]), annotated dialogue corpora ([`corpus`]), a seeded generator of
//! disfluent restaurant-booking dialogues ([`synthgen`]), a multi-task LSTM tagger
//! with an auxiliary next-token objective ([`nn`]), its SGD training loop
//! ([`trainer`]) and micro-averaged F1 evaluation ([`metrics`]).

pub mod tagset;
pub mod corpus;
pub mod synthgen;
pub mod nn;
pub mod trainer;
pub mod metrics;
