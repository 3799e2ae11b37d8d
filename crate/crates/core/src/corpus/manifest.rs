use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingSet;
use crate::error::{Error, Result};

/// How many relations an id may take part in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Cardinality {
    OneToOne,
    /// Up to `captions_per_item` relations per id (Flickr-style five captions per image).
    OneToMany {
        captions_per_item: usize,
    },
}

impl Cardinality {
    pub const DEFAULT_CAPTIONS_PER_ITEM: usize = 5;

    pub fn limit(self) -> usize {
        match self {
            Cardinality::OneToOne => 1,
            Cardinality::OneToMany { captions_per_item } => captions_per_item,
        }
    }
}

/// Query id → ordered list of relevant candidate ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceMap {
    entries: BTreeMap<String, Vec<String>>,
}

impl RelevanceMap {
    pub fn get(&self, query: &str) -> Option<&[String]> {
        self.entries.get(query).map(Vec::as_slice)
    }

    pub fn is_relevant(&self, query: &str, candidate: &str) -> bool {
        self.get(query).is_some_and(|c| c.iter().any(|c| c == candidate))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub(crate) fn push(&mut self, query: &str, candidate: &str) {
        self.entries
            .entry(query.to_owned())
            .or_default()
            .push(candidate.to_owned());
    }
}

/// One manifest line: a text id related to an image id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub text_id: String,
    pub image_id: String,
    pub line: usize,
}

/// Parses `text_id<TAB>image_id` lines; blank lines and `#` comments are skipped.
pub fn parse_manifest(source: &str) -> Result<Vec<Relation>> {
    let mut out = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.strip_suffix('\r').unwrap_or(raw);
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        let mut fields = text.split('\t');
        let (Some(q), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::ManifestSyntax {
                line,
                reason: "expected exactly two tab-separated fields".into(),
            });
        };
        if q.is_empty() || c.is_empty() {
            return Err(Error::ManifestSyntax {
                line,
                reason: "empty id".into(),
            });
        }
        out.push(Relation {
            text_id: q.to_owned(),
            image_id: c.to_owned(),
            line,
        });
    }
    Ok(out)
}

/// A text set and an image set joined by relevance in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorpus {
    pub text: EmbeddingSet,
    pub image: EmbeddingSet,
    pub text_to_image: RelevanceMap,
    pub image_to_text: RelevanceMap,
    pub cardinality: Cardinality,
}

/// Reads a manifest file and joins the two sets with it.
pub fn build_corpus(
    text: EmbeddingSet,
    image: EmbeddingSet,
    manifest: impl AsRef<Path>,
    cardinality: Cardinality,
) -> Result<PairedCorpus> {
    let path = manifest.as_ref();
    let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PairedCorpus::from_relations(text, image, &parse_manifest(&source)?, cardinality)
}

impl PairedCorpus {
    pub fn from_relations(
        text: EmbeddingSet,
        image: EmbeddingSet,
        relations: &[Relation],
        cardinality: Cardinality,
    ) -> Result<Self> {
        let limit = cardinality.limit();
        if limit == 0 {
            return Err(Error::Config("captions_per_item must be at least 1".into()));
        }
        let mut t2i = RelevanceMap::default();
        let mut i2t = RelevanceMap::default();
        for rel in relations {
            if text.index_of(&rel.text_id).is_none() {
                return Err(Error::UnresolvedId {
                    id: rel.text_id.clone(),
                    side: "text",
                });
            }
            if image.index_of(&rel.image_id).is_none() {
                return Err(Error::UnresolvedId {
                    id: rel.image_id.clone(),
                    side: "image",
                });
            }
            if t2i.is_relevant(&rel.text_id, &rel.image_id) {
                return Err(Error::DuplicateRelation {
                    id: rel.text_id.clone(),
                    line: rel.line,
                });
            }
            // a caption always has a single image; only images may have several captions
            for (map, id, limit) in [(&t2i, &rel.text_id, 1), (&i2t, &rel.image_id, limit)] {
                if map.get(id).map_or(0, <[String]>::len) >= limit {
                    return Err(if limit == 1 {
                        Error::DuplicateRelation {
                            id: id.clone(),
                            line: rel.line,
                        }
                    } else {
                        Error::TooManyRelations { id: id.clone(), limit }
                    });
                }
            }
            t2i.push(&rel.text_id, &rel.image_id);
            i2t.push(&rel.image_id, &rel.text_id);
        }
        Ok(PairedCorpus {
            text,
            image,
            text_to_image: t2i,
            image_to_text: i2t,
            cardinality,
        })
    }

    /// Pairs row `i` of `text` with row `i` of `image`.
    pub fn aligned(text: EmbeddingSet, image: EmbeddingSet) -> Result<Self> {
        if text.count() != image.count() {
            return Err(Error::CountMismatch {
                left: text.count(),
                right: image.count(),
            });
        }
        let relations: Vec<Relation> = text
            .ids()
            .iter()
            .zip(image.ids())
            .enumerate()
            .map(|(line, (t, i))| Relation {
                text_id: t.clone(),
                image_id: i.clone(),
                line: line + 1,
            })
            .collect();
        Self::from_relations(text, image, &relations, Cardinality::OneToOne)
    }

    /// Groups of rows that belong together: the connected components of the
    /// relevance relation. One pair in one-to-one corpora, an image with its
    /// captions in one-to-many corpora, and a lone row for unrelated ids.
    /// Ordered by the smallest text row, then by image row for text-less groups.
    pub fn items(&self) -> Vec<Item> {
        let nt = self.text.count();
        let mut parent: Vec<usize> = (0..nt + self.image.count()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (t, images) in self.text_to_image.iter() {
            let ti = self.text.index_of(t).expect("validated");
            for i in images {
                let ii = nt + self.image.index_of(i).expect("validated");
                let (a, b) = (find(&mut parent, ti), find(&mut parent, ii));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
        let mut items: Vec<Item> = Vec::new();
        for node in 0..parent.len() {
            let root = find(&mut parent, node);
            let k = *slot.entry(root).or_insert_with(|| {
                items.push(Item::default());
                items.len() - 1
            });
            if node < nt {
                items[k].text_rows.push(node);
            } else {
                items[k].image_rows.push(node - nt);
            }
        }
        items
    }

    /// Sub-corpus holding the given items; rows keep their original order.
    pub fn subset(&self, items: &[Item]) -> PairedCorpus {
        let mut text_rows: Vec<usize> = items.iter().flat_map(|it| it.text_rows.iter().copied()).collect();
        let mut image_rows: Vec<usize> = items.iter().flat_map(|it| it.image_rows.iter().copied()).collect();
        text_rows.sort_unstable();
        image_rows.sort_unstable();
        let text = self.text.select(&text_rows);
        let image = self.image.select(&image_rows);
        let mut t2i = RelevanceMap::default();
        let mut i2t = RelevanceMap::default();
        for (t, images) in self.text_to_image.iter() {
            if text.index_of(t).is_none() {
                continue;
            }
            for i in images {
                // components are closed under relevance, so both ends are kept together
                t2i.push(t, i);
            }
        }
        for (i, texts) in self.image_to_text.iter() {
            if image.index_of(i).is_none() {
                continue;
            }
            for t in texts {
                i2t.push(i, t);
            }
        }
        PairedCorpus {
            text,
            image,
            text_to_image: t2i,
            image_to_text: i2t,
            cardinality: self.cardinality,
        }
    }

    /// `n` items drawn uniformly without replacement with a seeded shuffle.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PairedCorpus> {
        let mut items = self.items();
        if n > items.len() {
            return Err(Error::InvalidSplit(format!(
                "cannot sample {n} items from {}",
                items.len()
            )));
        }
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        items.truncate(n);
        Ok(self.subset(&items))
    }

    /// `(text_row, image_row)` for every relation, in text-row order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, images) in self.text_to_image.iter() {
            let ti = self.text.index_of(t).expect("validated");
            for i in images {
                out.push((ti, self.image.index_of(i).expect("validated")));
            }
        }
        out.sort_unstable();
        out
    }

    /// True when every text and every image has exactly one relation.
    pub fn is_one_to_one(&self) -> bool {
        self.text_to_image.len() == self.text.count()
            && self.image_to_text.len() == self.image.count()
            && self.text_to_image.iter().all(|(_, v)| v.len() == 1)
            && self.image_to_text.iter().all(|(_, v)| v.len() == 1)
    }
}

/// Rows forming one paired item.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Item {
    pub text_rows: Vec<usize>,
    pub image_rows: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Modality;

    fn set(modality: Modality, prefix: &str, n: usize) -> EmbeddingSet {
        let ids = (0..n).map(|i| format!("{prefix}{i}")).collect();
        EmbeddingSet::new(modality, 1, ids, (0..n).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn parses_comments_and_rejects_bad_lines() {
        let rels = parse_manifest("# header\n\nt0\ti0\r\nt1\ti1\n").unwrap();
        assert_eq!(rels.len(), 2);
        assert_eq!(rels[1].line, 4);
        assert_eq!(parse_manifest("a\tb\tc\n").unwrap_err().code(), "manifest_syntax");
        assert_eq!(parse_manifest("ab\n").unwrap_err().code(), "manifest_syntax");
    }

    #[test]
    fn one_to_one_identity_manifest() {
        let manifest: String = (0..10).map(|i| format!("t{i}\ti{i}\n")).collect();
        let c = PairedCorpus::from_relations(
            set(Modality::Text, "t", 10),
            set(Modality::Image, "i", 10),
            &parse_manifest(&manifest).unwrap(),
            Cardinality::OneToOne,
        )
        .unwrap();
        assert_eq!(c.text_to_image.len(), 10);
        assert_eq!(c.image_to_text.len(), 10);
        assert!(c.is_one_to_one());
        assert_eq!(c.text_to_image.get("t3").unwrap(), &["i3".to_string()]);
    }

    #[test]
    fn one_image_five_captions() {
        let manifest: String = (0..5).map(|i| format!("t{i}\ti0\n")).collect();
        let c = PairedCorpus::from_relations(
            set(Modality::Text, "t", 5),
            set(Modality::Image, "i", 1),
            &parse_manifest(&manifest).unwrap(),
            Cardinality::OneToMany { captions_per_item: 5 },
        )
        .unwrap();
        assert_eq!(c.image_to_text.get("i0").unwrap().len(), 5);
        for t in 0..5 {
            assert_eq!(c.text_to_image.get(&format!("t{t}")).unwrap(), &["i0".to_string()]);
        }
        assert_eq!(c.items().len(), 1);
        // b→a is the inverse of a→b
        for (t, images) in c.text_to_image.iter() {
            for i in images {
                assert!(c.image_to_text.is_relevant(i, t));
            }
        }
    }

    #[test]
    fn relation_errors() {
        let t = set(Modality::Text, "t", 2);
        let i = set(Modality::Image, "i", 2);
        let err = PairedCorpus::from_relations(
            t.clone(),
            i.clone(),
            &parse_manifest("t0\tnope\n").unwrap(),
            Cardinality::OneToOne,
        )
        .unwrap_err();
        assert_eq!(err.code(), "unresolved_id");

        let err = PairedCorpus::from_relations(
            t.clone(),
            i.clone(),
            &parse_manifest("t0\ti0\nt0\ti1\n").unwrap(),
            Cardinality::OneToOne,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateRelation { line: 2, .. }));

        let six: String = (0..6).map(|k| format!("t{k}\ti0\n")).collect();
        let err = PairedCorpus::from_relations(
            set(Modality::Text, "t", 6),
            i,
            &parse_manifest(&six).unwrap(),
            Cardinality::OneToMany { captions_per_item: 5 },
        )
        .unwrap_err();
        assert_eq!(err.code(), "too_many_relations");
    }

    #[test]
    fn sampling_is_seeded() {
        let c = PairedCorpus::aligned(set(Modality::Text, "t", 20), set(Modality::Image, "i", 20)).unwrap();
        let a = c.sample(5, 7).unwrap();
        let b = c.sample(5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text.count(), 5);
        assert!(a.is_one_to_one());
        assert_eq!(c.sample(0, 1).unwrap().text.count(), 0);
        assert!(c.sample(21, 1).is_err());
    }
}
