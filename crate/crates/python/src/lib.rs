//! Python bindings: `import disfl`.
//!
//! Corpora and reports cross the boundary as JSON text; tags as their
//! canonical strings.

use std::sync::Arc;

use disfluency::corpus::{parse_jsonl, write_jsonl, Corpus, Token};
use disfluency::metrics::{evaluate, EvalReport, RmMatch};
use disfluency::nn::{Model, SessionState};
use disfluency::synthgen::{generate_corpus, GeneratorConfig, Preset};
use disfluency::tagset::{self, parse_tag, Tag};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_tags(tags: &[String]) -> PyResult<Vec<Tag>> {
    tags.iter().map(|t| parse_tag(t).map_err(value_err)).collect()
}

fn render(tags: &[Tag]) -> Vec<String> {
    tags.iter().map(|t| t.render()).collect()
}

fn tokens_from(words: &[String], pos: &[String]) -> PyResult<Vec<Token>> {
    if words.len() != pos.len() {
        return Err(PyValueError::new_err("words and pos differ in length"));
    }
    Ok(words.iter().zip(pos).map(|(w, p)| Token::new(w.as_str(), p.as_str(), None)).collect())
}

fn corpus_from_jsonl(text: &str) -> PyResult<Corpus> {
    let dialogues = parse_jsonl(text.as_bytes()).map_err(value_err)?;
    Ok(Corpus::new("python", dialogues))
}

/// Generates a corpus and returns it as JSONL text.
///
/// `config` is a JSON generator configuration; otherwise `preset`
/// (default `mixed`) with `dialogues` and `seed`.
#[pyfunction]
#[pyo3(signature = (dialogues=100, seed=0, preset="mixed", config=None))]
fn generate(dialogues: usize, seed: u64, preset: &str, config: Option<&str>) -> PyResult<String> {
    let cfg: GeneratorConfig = match config {
        Some(json) => serde_json::from_str(json).map_err(value_err)?,
        None => Preset::parse(preset).map_err(value_err)?.config(dialogues, seed),
    };
    let corpus = generate_corpus(&cfg).map_err(value_err)?;
    let mut out = Vec::new();
    write_jsonl(&corpus.dialogues, &mut out).map_err(value_err)?;
    Ok(String::from_utf8(out).expect("JSONL is UTF-8"))
}

/// Round-trips a tag through the parser: `"<rm-2/><rpMid/>"` -> same string.
#[pyfunction]
fn canonical_tag(tag: &str) -> PyResult<String> {
    Ok(parse_tag(tag).map_err(value_err)?.render())
}

/// Resolves a tag sequence into repair structures (a list of dicts).
#[pyfunction]
fn resolve(py: Python<'_>, tags: Vec<String>) -> PyResult<Py<PyAny>> {
    let tags = parse_tags(&tags)?;
    let structures = tagset::resolve_structures(&tags).map_err(value_err)?;
    let json = serde_json::to_string(&structures).expect("structures serialize");
    Ok(py.import("json")?.call_method1("loads", (json,))?.unbind())
}

/// Removes the disfluent material marked by `tags` from `words`.
#[pyfunction]
fn clean(words: Vec<String>, tags: Vec<String>) -> PyResult<Vec<String>> {
    if words.len() != tags.len() {
        return Err(PyValueError::new_err("words and tags differ in length"));
    }
    tagset::clean_with_tags(&words, &parse_tags(&tags)?).map_err(value_err)
}

/// Micro F1 scores of predicted against gold tag sequences, as JSON text.
#[pyfunction]
#[pyo3(signature = (gold, pred, rm_match="rm-only"))]
fn score(gold: Vec<Vec<String>>, pred: Vec<Vec<String>>, rm_match: &str) -> PyResult<String> {
    let mode = RmMatch::parse(rm_match).ok_or_else(|| value_err(format!("unknown rm match {rm_match:?}")))?;
    let gold: Vec<Vec<Tag>> = gold.iter().map(|g| parse_tags(g)).collect::<PyResult<_>>()?;
    let pred: Vec<Vec<Tag>> = pred.iter().map(|p| parse_tags(p)).collect::<PyResult<_>>()?;
    let report = EvalReport::from_tags(&gold, &pred, mode).map_err(value_err)?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

/// A trained tagger loaded from a model file.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: Arc<Model>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<PyModel> {
        let model = Model::load(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PyModel { inner: Arc::new(model) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab.len()
    }

    /// Tags one utterance given parallel word and POS lists.
    fn tag(&self, words: Vec<String>, pos: Vec<String>) -> PyResult<Vec<String>> {
        let tokens = tokens_from(&words, &pos)?;
        Ok(render(&self.inner.tag_tokens(&tokens).map_err(value_err)?))
    }

    /// Evaluates on a JSONL corpus and returns the report as JSON text.
    #[pyo3(signature = (jsonl, rm_match="rm-only"))]
    fn evaluate(&self, py: Python<'_>, jsonl: &str, rm_match: &str) -> PyResult<String> {
        let corpus = corpus_from_jsonl(jsonl)?;
        let mode = RmMatch::parse(rm_match).ok_or_else(|| value_err(format!("unknown rm match {rm_match:?}")))?;
        let model = Arc::clone(&self.inner);
        let report = py
            .detach(move || evaluate(&*model, &corpus, mode))
            .map_err(value_err)?;
        Ok(serde_json::to_string(&report).expect("report serializes"))
    }

    fn session(&self) -> Session {
        Session {
            model: Arc::clone(&self.inner),
            state: std::sync::Mutex::new(self.inner.open_session()),
        }
    }
}

/// Incremental tagging: one committed tag per fed token.
#[pyclass(frozen)]
struct Session {
    model: Arc<Model>,
    state: std::sync::Mutex<SessionState>,
}

#[pymethods]
impl Session {
    /// Feeds one token and returns its tag.
    fn feed(&self, word: &str, pos: &str) -> PyResult<String> {
        let mut state = self.state.lock().expect("session lock");
        let p = self
            .model
            .feed(&mut state, &Token::new(word, pos, None))
            .map_err(value_err)?;
        Ok(p.tag.render())
    }

    /// Resets the recurrent state at an utterance boundary.
    fn end_utterance(&self) -> PyResult<()> {
        self.state.lock().expect("session lock").end_utterance().map_err(value_err)
    }

    fn close(&self) {
        self.state.lock().expect("session lock").close();
    }

    #[getter]
    fn consumed(&self) -> usize {
        self.state.lock().expect("session lock").consumed()
    }
}

#[pymodule]
fn disfl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_tag, m)?)?;
    m.add_function(wrap_pyfunction!(resolve, m)?)?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_class::<PyModel>()?;
    m.add_class::<Session>()?;
    Ok(())
}
