use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PairedCorpus;
use crate::error::{Error, Result};

/// Train/validation/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            ratios: [train, val, test],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidSplit(format!(
                "negative or non-finite ratio in {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Item counts for `n` items: validation and test get `floor(ratio·n)`,
    /// training takes the rest.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        // the epsilon keeps products like 0.1·10 = 0.9999… from flooring down
        let part = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let val = part(self.ratios[1]);
        let test = part(self.ratios[2]);
        [n - val - test, val, test]
    }
}

/// Seeded partition of the corpus items into (train, validation, test).
pub fn split_corpus(corpus: &PairedCorpus, spec: &SplitSpec) -> Result<(PairedCorpus, PairedCorpus, PairedCorpus)> {
    spec.validate()?;
    let mut items = corpus.items();
    if items.len() < 3 {
        return Err(Error::InvalidSplit(format!(
            "need at least 3 items, have {}",
            items.len()
        )));
    }
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let [train, val, _] = spec.sizes(items.len());
    let (train_items, rest) = items.split_at(train);
    let (val_items, test_items) = rest.split_at(val);
    Ok((
        corpus.subset(train_items),
        corpus.subset(val_items),
        corpus.subset(test_items),
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{EmbeddingSet, Modality};

    fn corpus(n: usize) -> PairedCorpus {
        let t = EmbeddingSet::new(
            Modality::Text,
            1,
            (0..n).map(|i| format!("t{i}")).collect(),
            vec![0.0; n],
        )
        .unwrap();
        let i = EmbeddingSet::new(
            Modality::Image,
            1,
            (0..n).map(|i| format!("i{i}")).collect(),
            vec![0.0; n],
        )
        .unwrap();
        PairedCorpus::aligned(t, i).unwrap()
    }

    #[test]
    fn ten_items_split_eight_one_one() {
        let (a, b, c) = split_corpus(&corpus(10), &SplitSpec::new(0.8, 0.1, 0.1, 42)).unwrap();
        assert_eq!((a.text.count(), b.text.count(), c.text.count()), (8, 1, 1));
        assert_eq!((a.image.count(), b.image.count(), c.image.count()), (8, 1, 1));
        assert!(a.is_one_to_one() && b.is_one_to_one() && c.is_one_to_one());
    }

    #[test]
    fn remainder_goes_to_training() {
        assert_eq!(SplitSpec::new(0.8, 0.1, 0.1, 0).sizes(17), [15, 1, 1]);
        assert_eq!(SplitSpec::new(0.4, 0.3, 0.3, 0).sizes(10), [4, 3, 3]);
    }

    #[test]
    fn rejects_bad_ratios_and_tiny_corpora() {
        assert_eq!(
            split_corpus(&corpus(10), &SplitSpec::new(0.8, 0.1, 0.2, 0))
                .unwrap_err()
                .code(),
            "invalid_split"
        );
        assert!(split_corpus(&corpus(2), &SplitSpec::default()).is_err());
    }

    #[test]
    fn same_seed_same_split_different_seed_different_split() {
        let c = corpus(100);
        let s1 = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 1)).unwrap();
        let again = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 1)).unwrap();
        let s2 = split_corpus(&c, &SplitSpec::new(0.8, 0.1, 0.1, 2)).unwrap();
        assert_eq!(s1.1.text.ids(), again.1.text.ids());
        assert_eq!(s1.2.text.ids(), again.2.text.ids());
        assert_ne!((s1.1.text.ids(), s1.2.text.ids()), (s2.1.text.ids(), s2.2.text.ids()));
    }

    #[test]
    fn one_to_many_items_stay_together() {
        let t = EmbeddingSet::new(
            Modality::Text,
            1,
            (0..10).map(|i| format!("t{i}")).collect(),
            vec![0.0; 10],
        )
        .unwrap();
        let i = EmbeddingSet::new(
            Modality::Image,
            1,
            (0..2).map(|i| format!("i{i}")).collect(),
            vec![0.0; 2],
        )
        .unwrap();
        let rels: Vec<_> = (0..10)
            .map(|k| crate::corpus::Relation {
                text_id: format!("t{k}"),
                image_id: format!("i{}", k / 5),
                line: k + 1,
            })
            .collect();
        let mut c = PairedCorpus::from_relations(
            t,
            i,
            &rels,
            crate::corpus::Cardinality::OneToMany { captions_per_item: 5 },
        )
        .unwrap();
        // a third, unrelated image makes three items
        let extra = EmbeddingSet::new(
            Modality::Image,
            1,
            vec!["i0".into(), "i1".into(), "i2".into()],
            vec![0.0; 3],
        )
        .unwrap();
        c = PairedCorpus::from_relations(c.text, extra, &rels, c.cardinality).unwrap();
        let (a, b, d) = split_corpus(&c, &SplitSpec::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 5)).unwrap();
        for part in [&a, &b, &d] {
            for (_, texts) in part.image_to_text.iter() {
                assert_eq!(texts.len(), 5);
                for t in texts {
                    assert!(part.text.index_of(t).is_some());
                }
            }
        }
        assert_eq!(a.text.count() + b.text.count() + d.text.count(), 10);
    }

    proptest! {
        #[test]
        fn split_is_a_deterministic_partition(n in 3usize..60, seed in any::<u64>(), t in 0.0f64..1.0) {
            let rest = 1.0 - t;
            let spec = SplitSpec::new(t, rest / 2.0, rest / 2.0, seed);
            let c = corpus(n);
            let (a, b, d) = split_corpus(&c, &spec).unwrap();
            let again = split_corpus(&c, &spec).unwrap();
            prop_assert_eq!(&a, &again.0);
            prop_assert_eq!(&b, &again.1);
            prop_assert_eq!(&d, &again.2);
            let mut seen = BTreeSet::new();
            for part in [&a, &b, &d] {
                for id in part.text.ids() {
                    prop_assert!(seen.insert(id.clone()), "{} in two splits", id);
                }
            }
            prop_assert_eq!(seen.len(), n);
        }
    }
}
