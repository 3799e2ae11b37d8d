//! Standard (dis)similarity functions and dense cross-modal score matrices.
//!
//! All four metrics accumulate in `f64` over `f32` inputs. Cosine is the only
//! similarity (higher is closer); the rest are dissimilarities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Higher scores are closer.
    Similarity,
    /// Lower scores are closer.
    Dissimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Cosine,
    Manhattan,
    ChiSquare,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Euclidean, Metric::Cosine, Metric::Manhattan, Metric::ChiSquare];

    pub fn orientation(self) -> Orientation {
        match self {
            Metric::Cosine => Orientation::Similarity,
            _ => Orientation::Dissimilarity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Manhattan => "manhattan",
            Metric::ChiSquare => "chi_square",
        }
    }

    /// Evaluates the metric on two equal-length vectors.
    ///
    /// Chi-square is evaluated literally on signed inputs: terms whose
    /// denominator `p_i + q_i` is exactly zero are skipped, and the sum may be
    /// negative.
    pub fn score(self, p: &[f32], q: &[f32]) -> Result<f64> {
        if p.len() != q.len() {
            return Err(Error::DimMismatch {
                left: p.len(),
                right: q.len(),
            });
        }
        if p.is_empty() {
            return Err(Error::Empty("vectors"));
        }
        let pairs = p.iter().zip(q).map(|(&a, &b)| (f64::from(a), f64::from(b)));
        Ok(match self {
            Metric::Euclidean => pairs.map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Metric::Manhattan => pairs.map(|(a, b)| (a - b).abs()).sum(),
            Metric::ChiSquare => {
                0.5 * pairs
                    .filter(|(a, b)| a + b != 0.0)
                    .map(|(a, b)| (a - b) * (a - b) / (a + b))
                    .sum::<f64>()
            }
            Metric::Cosine => {
                let (mut dot, mut pp, mut qq) = (0.0, 0.0, 0.0);
                for (a, b) in pairs {
                    dot += a * b;
                    pp += a * a;
                    qq += b * b;
                }
                if pp == 0.0 || qq == 0.0 {
                    return Err(Error::ZeroNorm { id: None });
                }
                (dot / (pp.sqrt() * qq.sqrt())).clamp(-1.0, 1.0)
            }
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            "manhattan" => Ok(Metric::Manhattan),
            "chi_square" | "chisquare" | "chi2" => Ok(Metric::ChiSquare),
            _ => Err(format!(
                "unknown metric {s:?} (euclidean, cosine, manhattan, chi_square)"
            )),
        }
    }
}

/// Dense `rows × cols` score matrix with the ids of both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// Metric name, or `"mlp"` for a learned scorer.
    pub scorer: String,
    pub orientation: Orientation,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn transpose(&self) -> ScoreMatrix {
        let (r, c) = (self.rows(), self.cols());
        let mut values = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                values.push(self.get(i, j));
            }
        }
        ScoreMatrix {
            scorer: self.scorer.clone(),
            orientation: self.orientation,
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
            values,
        }
    }

    /// CSV with a header of column ids; the first column holds row ids.
    /// Values use Rust's shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for c in &self.col_ids {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (i, r) in self.row_ids.iter().enumerate() {
            out.push_str(&csv_field(r));
            for v in self.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Scores every row of `a` against every row of `b`. Rows are computed in
/// parallel; each entry equals `metric.score(a.row(i), b.row(j))` exactly.
pub fn score_matrix(metric: Metric, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<ScoreMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if metric == Metric::Cosine {
        for set in [a, b] {
            if let Some(r) = set.rows().position(|row| row.iter().all(|&v| v == 0.0)) {
                return Err(Error::ZeroNorm {
                    id: Some(set.id(r).to_owned()),
                });
            }
        }
    }
    let cols = b.count();
    let mut values = vec![0.0; a.count() * cols];
    if cols > 0 {
        values
            .par_chunks_mut(cols)
            .enumerate()
            .try_for_each(|(i, out)| -> Result<()> {
                let p = a.row(i);
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = metric.score(p, b.row(j))?;
                }
                Ok(())
            })?;
    }
    Ok(ScoreMatrix {
        scorer: metric.name().to_owned(),
        orientation: metric.orientation(),
        row_ids: a.ids().to_vec(),
        col_ids: b.ids().to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::Modality;

    #[test]
    fn hand_values() {
        assert_eq!(Metric::Cosine.score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((Metric::Cosine.score(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() <= 1e-12);
        assert_eq!(Metric::Euclidean.score(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(Metric::Manhattan.score(&[1.0, 2.0], &[4.0, 6.0]).unwrap(), 7.0);
        assert_eq!(Metric::ChiSquare.score(&[1.0, 1.0], &[1.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn cosine_self_similarity_is_one() {
        for v in [[0.3f32, -2.0, 7.5], [1e-3, 1e-3, 0.0], [-4.0, 0.0, 0.0]] {
            assert!((Metric::Cosine.score(&v, &v).unwrap() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn chi_square_skips_zero_denominators_and_may_go_negative() {
        // first term has p+q = 0 and is skipped
        assert_eq!(Metric::ChiSquare.score(&[1.0, 2.0], &[-1.0, 2.0]).unwrap(), 0.0);
        // (1-(-3))² / (1 + -3) = 16 / -2
        assert_eq!(Metric::ChiSquare.score(&[1.0], &[-3.0]).unwrap(), -4.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            Metric::Cosine.score(&[1.0], &[1.0, 2.0]).unwrap_err().code(),
            "dim_mismatch"
        );
        assert_eq!(
            Metric::Cosine.score(&[0.0, 0.0], &[1.0, 2.0]).unwrap_err().code(),
            "zero_norm"
        );
        assert_eq!(Metric::Euclidean.score(&[], &[]).unwrap_err().code(), "empty");
    }

    #[test]
    fn identity_rows_euclidean_matrix() {
        let a = EmbeddingSet::new(
            Modality::Text,
            2,
            vec!["x".into(), "y".into()],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let m = score_matrix(Metric::Euclidean, &a, &a).unwrap();
        assert_eq!(m.values, vec![0.0, 2f64.sqrt(), 2f64.sqrt(), 0.0]);
    }

    #[test]
    fn zero_row_under_cosine_names_the_id() {
        let a = EmbeddingSet::new(
            Modality::Text,
            2,
            vec!["ok".into(), "dead".into()],
            vec![1.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        match score_matrix(Metric::Cosine, &a, &a).unwrap_err() {
            Error::ZeroNorm { id } => assert_eq!(id.as_deref(), Some("dead")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(score_matrix(Metric::Euclidean, &a, &a).is_ok());
    }

    #[test]
    fn csv_layout() {
        let a = EmbeddingSet::new(Modality::Text, 1, vec!["a,1".into()], vec![1.0]).unwrap();
        let b = EmbeddingSet::new(Modality::Image, 1, vec!["b".into(), "c".into()], vec![1.0, 3.0]).unwrap();
        let m = score_matrix(Metric::Manhattan, &a, &b).unwrap();
        assert_eq!(m.to_csv(), "id,b,c\n\"a,1\",0,2\n");
    }

    fn vec3() -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10.0f32..10.0, 3)
    }

    proptest! {
        #[test]
        fn symmetric_bit_for_bit(p in vec3(), q in vec3()) {
            for m in Metric::ALL {
                match (m.score(&p, &q), m.score(&q, &p)) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                    (Err(_), Err(_)) => {}
                    other => prop_assert!(false, "asymmetric outcome {:?}", other),
                }
            }
        }

        #[test]
        fn cosine_ranking_is_scale_invariant(
            p in vec3(),
            qs in prop::collection::vec(vec3(), 2..8),
            c in 0.01f32..100.0,
        ) {
            prop_assume!(p.iter().any(|&v| v != 0.0));
            prop_assume!(qs.iter().all(|q| q.iter().any(|&v| v != 0.0)));
            let order = |scale: f32| {
                let mut idx: Vec<usize> = (0..qs.len()).collect();
                let s: Vec<f64> = qs
                    .iter()
                    .map(|q| {
                        let q: Vec<f32> = q.iter().map(|v| v * scale).collect();
                        Metric::Cosine.score(&p, &q).unwrap()
                    })
                    .collect();
                idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
                (idx, s)
            };
            let (base, s1) = order(1.0);
            let (scaled, s2) = order(c);
            // argsort invariance, except between candidates whose scores are within rounding
            let tied = |s: &[f64]| s.iter().enumerate().any(|(i, a)| s[i + 1..].iter().any(|b| (a - b).abs() < 1e-6));
            if !tied(&s1) && !tied(&s2) {
                prop_assert_eq!(base, scaled);
            }
        }
    }
}
