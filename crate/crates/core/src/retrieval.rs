//! Bidirectional top-K retrieval and its evaluation.
//!
//! Two rates are reported for every K:
//!
//! - hit rate: fraction of queries with at least one relevant candidate in the top K;
//! - precision: mean over queries of `(relevant in top K) / K`.
//!
//! With exactly one relevant candidate per query, `hit_rate == K · precision`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{PairedCorpus, RelevanceMap};
use crate::error::{Error, Result};
use crate::metrics::{csv_field, score_matrix, Metric, Orientation, ScoreMatrix};
use crate::scorer::ScorerModel;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TextToImage,
    ImageToText,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::TextToImage, Direction::ImageToText];

    pub fn name(self) -> &'static str {
        match self {
            Direction::TextToImage => "text_to_image",
            Direction::ImageToText => "image_to_text",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "t2i" | "text_to_image" | "text-to-image" => Ok(Direction::TextToImage),
            "i2t" | "image_to_text" | "image-to-text" => Ok(Direction::ImageToText),
            _ => Err(format!("unknown direction {s:?} (t2i, i2t)")),
        }
    }
}

/// What produces the scores: a fixed metric or a trained MLP.
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    Metric(Metric),
    Model(&'a ScorerModel),
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Metric(m) => m.name(),
            Scorer::Model(_) => "mlp",
        }
    }
}

/// Top candidates of one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub candidate_ids: Vec<String>,
    pub scores: Vec<f64>,
}

/// Ranks the columns of every row (one query per row) and keeps the best `k`.
/// Ties go to the lower candidate index.
pub fn rank(matrix: &ScoreMatrix, k: usize) -> Result<Vec<Ranking>> {
    let cols = matrix.cols();
    if k == 0 || k > cols {
        return Err(Error::KOutOfRange { k, max: cols });
    }
    let similarity = matrix.orientation == Orientation::Similarity;
    Ok((0..matrix.rows())
        .into_par_iter()
        .map(|r| {
            let scores = matrix.row(r);
            let better = |a: &usize, b: &usize| {
                let (sa, sb) = (scores[*a], scores[*b]);
                let ord = if similarity {
                    sb.partial_cmp(&sa)
                } else {
                    sa.partial_cmp(&sb)
                };
                ord.expect("finite scores").then(a.cmp(b))
            };
            let mut idx: Vec<usize> = (0..cols).collect();
            if k < cols {
                idx.select_nth_unstable_by(k - 1, better);
                idx.truncate(k);
            }
            idx.sort_unstable_by(better);
            Ranking {
                query_id: matrix.row_ids[r].clone(),
                candidate_ids: idx.iter().map(|&j| matrix.col_ids[j].clone()).collect(),
                scores: idx.iter().map(|&j| scores[j]).collect(),
            }
        })
        .collect())
}

fn relevant_in_top_k(rankings: &[Ranking], relevance: &RelevanceMap, k: usize) -> Result<Vec<usize>> {
    rankings
        .iter()
        .map(|r| {
            if r.candidate_ids.len() < k || k == 0 {
                return Err(Error::KOutOfRange {
                    k,
                    max: r.candidate_ids.len(),
                });
            }
            let relevant = relevance
                .get(&r.query_id)
                .ok_or_else(|| Error::MissingQuery(r.query_id.clone()))?;
            Ok(r.candidate_ids[..k].iter().filter(|c| relevant.contains(c)).count())
        })
        .collect()
}

/// Number of queries with a relevant candidate in their top `k`.
pub fn hit_count_at_k(rankings: &[Ranking], relevance: &RelevanceMap, k: usize) -> Result<usize> {
    Ok(relevant_in_top_k(rankings, relevance, k)?
        .into_iter()
        .filter(|&n| n > 0)
        .count())
}

pub fn hit_rate_at_k(rankings: &[Ranking], relevance: &RelevanceMap, k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::Empty("rankings"));
    }
    Ok(hit_count_at_k(rankings, relevance, k)? as f64 / rankings.len() as f64)
}

pub fn precision_at_k(rankings: &[Ranking], relevance: &RelevanceMap, k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::Empty("rankings"));
    }
    let total: usize = relevant_in_top_k(rankings, relevance, k)?.into_iter().sum();
    Ok(total as f64 / (k as f64 * rankings.len() as f64))
}

/// Best attainable precision@k: an image can have `captions_per_item`
/// relevant captions, a caption has one relevant image.
pub fn precision_upper_bound(direction: Direction, k: usize, captions_per_item: usize) -> f64 {
    assert!(
        k >= 1 && captions_per_item >= 1,
        "k and captions_per_item must be positive"
    );
    let relevant = match direction {
        Direction::ImageToText => captions_per_item,
        Direction::TextToImage => 1,
    };
    relevant.min(k) as f64 / k as f64
}

/// Query × candidate score matrix for one direction. Image-to-text scores are
/// computed with images as rows, never by transposing the text-to-image matrix
/// of a metric.
pub fn direction_matrix(corpus: &PairedCorpus, scorer: Scorer<'_>, direction: Direction) -> Result<ScoreMatrix> {
    match (scorer, direction) {
        (Scorer::Metric(m), Direction::TextToImage) => score_matrix(m, &corpus.text, &corpus.image),
        (Scorer::Metric(m), Direction::ImageToText) => score_matrix(m, &corpus.image, &corpus.text),
        (Scorer::Model(model), dir) => {
            let t2i = model.score_matrix(&corpus.text, &corpus.image)?;
            Ok(match dir {
                Direction::TextToImage => t2i,
                Direction::ImageToText => t2i.transpose(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    pub hits: usize,
    pub hit_rate: f64,
    pub precision: f64,
    pub precision_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub direction: Direction,
    pub scorer: String,
    pub query_count: usize,
    pub candidate_count: usize,
    pub captions_per_item: usize,
    pub at_k: Vec<AtK>,
}

impl RetrievalReport {
    pub fn ks(&self) -> Vec<usize> {
        self.at_k.iter().map(|a| a.k).collect()
    }

    pub fn hit_rate(&self, k: usize) -> Option<f64> {
        self.at_k.iter().find(|a| a.k == k).map(|a| a.hit_rate)
    }

    pub fn precision(&self, k: usize) -> Option<f64> {
        self.at_k.iter().find(|a| a.k == k).map(|a| a.precision)
    }

    pub const CSV_HEADER: &'static str = "direction,scorer,k,queries,hits,hit_rate,precision,precision_bound";

    /// CSV rows (no header), one per K.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for a in &self.at_k {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.direction,
                csv_field(&self.scorer),
                a.k,
                self.query_count,
                a.hits,
                a.hit_rate,
                a.precision,
                a.precision_bound
            ));
        }
        out
    }
}

/// Ranks, then reports hit rate and precision for every K in `ks`.
pub fn evaluate_rankings(
    rankings: &[Ranking],
    relevance: &RelevanceMap,
    direction: Direction,
    scorer: &str,
    candidate_count: usize,
    captions_per_item: usize,
    ks: &[usize],
) -> Result<RetrievalReport> {
    let at_k = ks
        .iter()
        .map(|&k| {
            Ok(AtK {
                k,
                hits: hit_count_at_k(rankings, relevance, k)?,
                hit_rate: hit_rate_at_k(rankings, relevance, k)?,
                precision: precision_at_k(rankings, relevance, k)?,
                precision_bound: precision_upper_bound(direction, k, captions_per_item),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalReport {
        direction,
        scorer: scorer.to_owned(),
        query_count: rankings.len(),
        candidate_count,
        captions_per_item,
        at_k,
    })
}

/// Scores, ranks and evaluates one direction; also returns the rankings
/// truncated to the largest K.
pub fn evaluate_with_rankings(
    corpus: &PairedCorpus,
    scorer: Scorer<'_>,
    direction: Direction,
    ks: &[usize],
) -> Result<(RetrievalReport, Vec<Ranking>)> {
    let max_k = ks.iter().copied().max().ok_or(Error::Empty("k list"))?;
    let matrix = direction_matrix(corpus, scorer, direction)?;
    let rankings = rank(&matrix, max_k)?;
    let relevance = match direction {
        Direction::TextToImage => &corpus.text_to_image,
        Direction::ImageToText => &corpus.image_to_text,
    };
    let report = evaluate_rankings(
        &rankings,
        relevance,
        direction,
        scorer.name(),
        matrix.cols(),
        corpus.cardinality.limit(),
        ks,
    )?;
    Ok((report, rankings))
}

pub fn evaluate(
    corpus: &PairedCorpus,
    scorer: Scorer<'_>,
    direction: Direction,
    ks: &[usize],
) -> Result<RetrievalReport> {
    evaluate_with_rankings(corpus, scorer, direction, ks).map(|(r, _)| r)
}

/// `query_id<TAB>rank<TAB>candidate_id<TAB>score` lines, ranks starting at 1.
pub fn rankings_to_tsv(rankings: &[Ranking]) -> String {
    let mut out = String::from("query_id\trank\tcandidate_id\tscore\n");
    for r in rankings {
        for (i, (c, s)) in r.candidate_ids.iter().zip(&r.scores).enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.query_id, i + 1, c, s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_manifest, Cardinality, EmbeddingSet, Modality};

    fn matrix(orientation: Orientation, scores: &[f64]) -> ScoreMatrix {
        ScoreMatrix {
            scorer: "test".into(),
            orientation,
            row_ids: vec!["q".into()],
            col_ids: (0..scores.len()).map(|i| format!("c{i}")).collect(),
            values: scores.to_vec(),
        }
    }

    #[test]
    fn similarity_sorts_descending() {
        let r = rank(&matrix(Orientation::Similarity, &[0.2, 0.9, 0.5]), 2).unwrap();
        assert_eq!(r[0].candidate_ids, vec!["c1", "c2"]);
        assert_eq!(r[0].scores, vec![0.9, 0.5]);
    }

    #[test]
    fn dissimilarity_sorts_ascending() {
        let r = rank(&matrix(Orientation::Dissimilarity, &[3.0, 1.0, 2.0]), 3).unwrap();
        assert_eq!(r[0].candidate_ids, vec!["c1", "c2", "c0"]);
    }

    #[test]
    fn ties_keep_index_order() {
        let r = rank(&matrix(Orientation::Similarity, &[0.5, 0.5]), 2).unwrap();
        assert_eq!(r[0].candidate_ids, vec!["c0", "c1"]);
        let r = rank(&matrix(Orientation::Dissimilarity, &[1.0, 0.0, 1.0, 0.0, 1.0]), 4).unwrap();
        assert_eq!(r[0].candidate_ids, vec!["c1", "c3", "c0", "c2"]);
    }

    #[test]
    fn k_out_of_range() {
        let m = matrix(Orientation::Similarity, &[0.1, 0.2]);
        assert_eq!(rank(&m, 3).unwrap_err().code(), "k_out_of_range");
        assert_eq!(rank(&m, 0).unwrap_err().code(), "k_out_of_range");
    }

    fn relevance(pairs: &[(&str, &str)]) -> RelevanceMap {
        let mut m = RelevanceMap::default();
        for (q, c) in pairs {
            m.push(q, c);
        }
        m
    }

    fn ranking(q: &str, cands: &[&str]) -> Ranking {
        Ranking {
            query_id: q.into(),
            candidate_ids: cands.iter().map(|s| s.to_string()).collect(),
            scores: vec![0.0; cands.len()],
        }
    }

    #[test]
    fn counting_hits() {
        let rel = relevance(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "4")]);
        let rankings = vec![
            ranking("a", &["1", "2"]),
            ranking("b", &["1", "2"]),
            ranking("c", &["3", "1"]),
            ranking("d", &["1", "3"]),
        ];
        assert_eq!(hit_rate_at_k(&rankings, &rel, 1).unwrap(), 0.5);
        assert_eq!(hit_rate_at_k(&rankings, &rel, 2).unwrap(), 0.75);
        assert_eq!(precision_at_k(&rankings, &rel, 2).unwrap(), 3.0 / 8.0);
        let missing = vec![ranking("zzz", &["1"])];
        assert_eq!(hit_rate_at_k(&missing, &rel, 1).unwrap_err().code(), "missing_query");
    }

    #[test]
    fn precision_with_five_captions() {
        let rel = relevance(&[
            ("img", "t0"),
            ("img", "t1"),
            ("img", "t2"),
            ("img", "t3"),
            ("img", "t4"),
        ]);
        let r = vec![ranking(
            "img",
            &["t3", "t0", "t4", "t1", "t2", "x0", "x1", "x2", "x3", "x4"],
        )];
        assert_eq!(precision_at_k(&r, &rel, 5).unwrap(), 1.0);
        assert_eq!(precision_at_k(&r, &rel, 10).unwrap(), 0.5);
        let one = relevance(&[("q", "c")]);
        let r = vec![ranking("q", &["c", "x", "y", "z", "w"])];
        assert_eq!(precision_at_k(&r, &one, 5).unwrap(), 0.2);
    }

    #[test]
    fn upper_bounds() {
        assert_eq!(precision_upper_bound(Direction::ImageToText, 5, 5), 1.0);
        assert_eq!(precision_upper_bound(Direction::TextToImage, 5, 5), 0.2);
        assert_eq!(precision_upper_bound(Direction::ImageToText, 10, 5), 0.5);
        assert_eq!(precision_upper_bound(Direction::TextToImage, 1, 5), 1.0);
        assert_eq!(precision_upper_bound(Direction::ImageToText, 3, 5), 1.0);
    }

    #[test]
    fn hand_built_three_item_corpus() {
        // text rows t0..t2, image rows i0..i2 on a line; t_k pairs with i_k.
        // Euclidean distances:
        //   t0=0 : i0=0.5 (0.5) i1=1.2 (1.2) i2=3 (3)     → i0, i1, i2
        //   t1=1 : i0 (0.5) i1 (0.2) i2 (2)              → i1, i0, i2
        //   t2=2 : i0 (1.5) i1 (0.8) i2 (1)              → i1, i2, i0
        let t = EmbeddingSet::new(
            Modality::Text,
            1,
            vec!["t0".into(), "t1".into(), "t2".into()],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        let i = EmbeddingSet::new(
            Modality::Image,
            1,
            vec!["i0".into(), "i1".into(), "i2".into()],
            vec![0.5, 1.2, 3.0],
        )
        .unwrap();
        let c = PairedCorpus::aligned(t, i).unwrap();
        let r = evaluate(
            &c,
            Scorer::Metric(Metric::Euclidean),
            Direction::TextToImage,
            &[1, 2, 3],
        )
        .unwrap();
        assert_eq!(r.hit_rate(1), Some(2.0 / 3.0));
        assert_eq!(r.hit_rate(2), Some(1.0));
        assert_eq!(r.hit_rate(3), Some(1.0));
        assert_eq!(r.precision(2), Some(0.5));
        // images as queries:
        //   i0=0.5 : t0 (0.5) t1 (0.5) t2 (1.5)  → tie → t0, t1, t2
        //   i1=1.2 : t1 (0.2) t2 (0.8) t0 (1.2)  → t1, t2, t0
        //   i2=3   : t2 (1)  t1 (2)  t0 (3)      → t2, t1, t0
        let r = evaluate(&c, Scorer::Metric(Metric::Euclidean), Direction::ImageToText, &[1, 2]).unwrap();
        assert_eq!(r.hit_rate(1), Some(1.0));
        assert_eq!(r.at_k[0].hits, 3);
    }

    #[test]
    fn tsv_export() {
        let r = vec![Ranking {
            query_id: "q".into(),
            candidate_ids: vec!["a".into(), "b".into()],
            scores: vec![0.5, 0.25],
        }];
        assert_eq!(
            rankings_to_tsv(&r),
            "query_id\trank\tcandidate_id\tscore\nq\t1\ta\t0.5\nq\t2\tb\t0.25\n"
        );
    }

    #[test]
    fn one_to_many_report_respects_bounds() {
        let t = EmbeddingSet::new(
            Modality::Text,
            1,
            (0..10).map(|k| format!("t{k}")).collect(),
            (0..10).map(|k| (k / 5) as f32).collect(),
        )
        .unwrap();
        let i = EmbeddingSet::new(Modality::Image, 1, vec!["i0".into(), "i1".into()], vec![0.0, 1.0]).unwrap();
        let manifest: String = (0..10).map(|k| format!("t{k}\ti{}\n", k / 5)).collect();
        let c = PairedCorpus::from_relations(
            t,
            i,
            &parse_manifest(&manifest).unwrap(),
            Cardinality::OneToMany { captions_per_item: 5 },
        )
        .unwrap();
        let r = evaluate(
            &c,
            Scorer::Metric(Metric::Euclidean),
            Direction::ImageToText,
            &[1, 5, 10],
        )
        .unwrap();
        assert_eq!(r.precision(5), Some(1.0));
        assert_eq!(r.precision(10), Some(0.5));
        for a in &r.at_k {
            assert!(a.precision <= a.precision_bound);
        }
        let r = evaluate(&c, Scorer::Metric(Metric::Euclidean), Direction::TextToImage, &[1, 2]).unwrap();
        assert_eq!(r.hit_rate(1), Some(1.0));
        assert_eq!(r.precision(2), Some(0.5));
    }
}
