//! Embedding sets, the XEB1 file format, relevance manifests and paired corpora.
//!
//! An [`EmbeddingSet`] holds one modality's `count × dim` matrix of `f32`
//! representations together with a stable string id per row. A
//! [`PairedCorpus`] joins a text set and an image set through relevance maps
//! in both directions, either one-to-one or one-to-many (several captions per
//! image).

mod manifest;
mod split;
mod xeb;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{build_corpus, parse_manifest, Cardinality, Item, PairedCorpus, Relation, RelevanceMap};
pub use split::{split_corpus, SplitSpec};
pub use xeb::{decode_embeddings, encode_embeddings, load_embeddings, save_embeddings, XEB_MAGIC, XEB_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Text => 0,
            Modality::Image => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Modality::Text),
            1 => Ok(Modality::Image),
            other => Err(Error::UnknownModality(other)),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
        })
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "text" => Ok(Modality::Text),
            "image" => Ok(Modality::Image),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

/// One modality's representations: `count` rows of `dim` finite `f32` values,
/// each row named by a unique id.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    modality: Modality,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingSet {
    fn eq(&self, other: &Self) -> bool {
        self.modality == other.modality
            && self.dim == other.dim
            && self.ids == other.ids
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingSet {
    /// Builds a set from row-major `data`, checking every invariant.
    pub fn new(modality: Modality, dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "{} ids × dim {} needs {} values, got {}",
                ids.len(),
                dim,
                ids.len() * dim,
                data.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let set = EmbeddingSet {
            modality,
            dim,
            ids,
            data,
            index,
        };
        set.check_finite()?;
        Ok(set)
    }

    pub fn from_rows(modality: Modality, ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Shape(format!(
                "row {bad} has {} entries, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(modality, dim, ids, rows.concat())
    }

    /// An empty set of the given width.
    pub fn empty(modality: Modality, dim: usize) -> Result<Self> {
        Self::new(modality, dim, Vec::new(), Vec::new())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let row = pos / self.dim;
            return Err(Error::NonFinite {
                id: self.ids[row].clone(),
                row,
                col: pos % self.dim,
            });
        }
        Ok(())
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// New set holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> EmbeddingSet {
        let ids: Vec<String> = rows.iter().map(|&r| self.ids[r].clone()).collect();
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        let index = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        EmbeddingSet {
            modality: self.modality,
            dim: self.dim,
            ids,
            data,
            index,
        }
    }

    /// Rows rescaled to unit L2 norm. A zero row is an error.
    pub fn l2_normalized(&self) -> Result<EmbeddingSet> {
        let mut data = self.data.clone();
        for (r, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm {
                    id: Some(self.ids[r].clone()),
                });
            }
            for v in row.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        EmbeddingSet::new(self.modality, self.dim, self.ids.clone(), data)
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(modality: Modality, dim: usize, ids: Vec<String>, data: Vec<f32>) -> Self {
        let index = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        EmbeddingSet {
            modality,
            dim,
            ids,
            data,
            index,
        }
    }
}
