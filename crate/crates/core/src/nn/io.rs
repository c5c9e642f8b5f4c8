//! Binary model file.
//!
//! Layout: magic `DFLT`, format version (u32 LE), header length (u64 LE),
//! UTF-8 JSON header, then every tensor as little-endian f32 in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::params::Parameters;
use super::{Hyperparams, NnError};
use crate::corpus::Vocabulary;

pub const MAGIC: &[u8; 4] = b"DFLT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the tensor data.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub hyper: Hyperparams,
    pub vocabulary: Vocabulary,
    pub tensors: Vec<TensorEntry>,
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let mut tensors = Vec::new();
        for t in self.params.tensors() {
            tensors.push(TensorEntry {
                name: t.name,
                shape: t.shape,
                offset,
            });
            offset += 4 * t.data.len() as u64;
        }
        let header = Header {
            hyper: self.hyper.clone(),
            vocabulary: self.vocab.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for x in t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model, NnError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(NnError::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(NnError::Truncated("preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(NnError::UnsupportedVersion(version));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let data_start = 16u64
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len() as u64)
            .ok_or_else(|| NnError::Truncated("header".into()))? as usize;
        let header: Header =
            serde_json::from_slice(&bytes[16..data_start]).map_err(|e| NnError::Header(e.to_string()))?;
        let data = &bytes[data_start..];

        let mut params = Parameters::<f32>::zeros(&header.hyper);
        let mut expected_offset = 0u64;
        {
            let mut views = params.tensors_mut();
            if views.len() != header.tensors.len() {
                return Err(NnError::Header(format!(
                    "expected {} tensors, header lists {}",
                    views.len(),
                    header.tensors.len()
                )));
            }
            for (view, entry) in views.iter_mut().zip(&header.tensors) {
                if view.name != entry.name || view.shape != entry.shape {
                    return Err(NnError::ShapeMismatch {
                        name: view.name.clone(),
                        expected: view.shape.clone(),
                        found: entry.shape.clone(),
                    });
                }
                if entry.offset != expected_offset {
                    return Err(NnError::Header(format!("tensor {} has offset {}", entry.name, entry.offset)));
                }
                let start = entry.offset as usize;
                let end = start + 4 * view.data.len();
                if end > data.len() {
                    return Err(NnError::Truncated(format!("tensor {}", entry.name)));
                }
                for (x, chunk) in view.data.iter_mut().zip(data[start..end].chunks_exact(4)) {
                    *x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
                expected_offset = end as u64;
            }
        }
        if expected_offset != data.len() as u64 {
            return Err(NnError::Header(format!(
                "{} trailing bytes after tensor data",
                data.len() as u64 - expected_offset
            )));
        }
        Model::new(header.hyper, header.vocabulary, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| NnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, NnError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| NnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Model::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let vocab = Vocabulary::from_counts([("x|NN".to_string(), 2), ("y|VB".to_string(), 1)], 1);
        let hyper = Hyperparams {
            embedding_size: 3,
            hidden_size: 4,
            head_layer_sizes: vec![5],
            alpha: 0.1,
            seed: 9,
            ..Hyperparams::default()
        };
        Model::init(hyper, vocab).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dflt");
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = model().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Model::from_bytes(&bad), Err(NnError::BadMagic));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(Model::from_bytes(&v2), Err(NnError::UnsupportedVersion(2)));
        assert!(matches!(
            Model::from_bytes(&bytes[..bytes.len() - 3]),
            Err(NnError::Truncated(_))
        ));
        assert!(matches!(Model::from_bytes(&bytes[..20]), Err(NnError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Model::from_bytes(&extra), Err(NnError::Header(_))));
    }

    #[test]
    fn header_shape_must_match_hyper() {
        let m = model();
        let bytes = m.to_bytes();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let text = String::from_utf8(bytes[16..16 + len].to_vec()).unwrap();
        let edited = text.replacen("\"shape\":[5,4]", "\"shape\":[4,5]", 1);
        assert_ne!(edited, text);
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(edited.len() as u64).to_le_bytes());
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&bytes[16 + len..]);
        assert!(matches!(Model::from_bytes(&out), Err(NnError::ShapeMismatch { .. })));
    }
}
