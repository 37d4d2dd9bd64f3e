use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::{decompose_traced, encode, ModelParams};
use crate::scalar::{dot, norm, Scalar};

/// Identity embeddings keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> EmbeddingSet<T> {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, utt: impl Into<String>, v: Vec<T>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding of length {} in a {}-dim set",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(utt.into(), v);
        Ok(())
    }

    pub fn get(&self, utt: &str) -> Option<&[T]> {
        self.vectors.get(utt).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ExtractReport<T> {
    pub set: EmbeddingSet<T>,
    pub skipped: Vec<(String, String)>,
}

/// Full-utterance forward pass keeping the identity component. Utterances the
/// network cannot process are skipped and listed.
pub fn extract_embeddings<'a, T: Scalar>(
    params: &ModelParams<T>,
    items: impl IntoIterator<Item = (&'a str, &'a FeatureMatrix)>,
) -> Result<ExtractReport<T>> {
    let mut set = EmbeddingSet::new(params.config.embed_dim);
    let mut skipped = Vec::new();
    for (utt, f) in items {
        if f.cols() != params.config.feat_dim {
            return Err(Error::Shape(format!(
                "features of {utt} have {} coefficients, checkpoint expects {}",
                f.cols(),
                params.config.feat_dim
            )));
        }
        match encode(f, params) {
            Ok(phi) => {
                let (dec, _) = decompose_traced(&phi.phi, params);
                set.insert(utt, dec.x_id)?;
            }
            Err(Error::TooShort { have, need }) => {
                skipped.push((utt.to_string(), format!("{have} frames, need {need}")))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ExtractReport { set, skipped })
}

pub fn cosine_score<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine scoring of {}- and {}-dim vectors",
            a.len(),
            b.len()
        )));
    }
    let d = norm(a) * norm(b);
    Ok(if d > T::zero() { dot(a, b) / d } else { T::zero() })
}

/// Text form: `utt v1 v2 ...` per line.
pub fn write_embeddings<T: Scalar>(path: impl AsRef<Path>, set: &EmbeddingSet<T>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for (utt, v) in &set.vectors {
        let vals: Vec<String> = v.iter().map(|x| format!("{:e}", x.as_f64())).collect();
        writeln!(out, "{utt} {}", vals.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingSet<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut set: Option<EmbeddingSet<T>> = None;
    for (no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(utt) = parts.next() else { continue };
        let v: std::result::Result<Vec<f64>, std::num::ParseFloatError> =
            parts.map(str::parse::<f64>).collect();
        let v: Vec<T> = v
            .map_err(|_| Error::format(path, format!("line {}: bad number", no + 1)))?
            .into_iter()
            .map(T::of)
            .collect();
        let s = set.get_or_insert_with(|| EmbeddingSet::new(v.len()));
        s.insert(utt, v)
            .map_err(|e| Error::format(path, format!("line {}: {e}", no + 1)))?;
    }
    set.ok_or_else(|| Error::format(path, "no embeddings".to_string()))
}
