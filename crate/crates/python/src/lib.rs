//! Python bindings: the `xmodal` extension module.
//!
//! Embedding sets, paired corpora and trained scorers are exposed as classes;
//! metrics, gap measures and the statistics helpers as plain functions.
//! Reports come back as `dict`s with the same fields as the CLI's JSON.
//! Every engine error is raised as `xmodal.XmodalError` whose message starts
//! with the stable error code in brackets.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use xmodal::corpus::{build_corpus, load_embeddings, save_embeddings, split_corpus, Cardinality, SplitSpec};
use xmodal::geometry;
use xmodal::metrics::{self, Metric};
use xmodal::retrieval::{self, Direction, RetrievalReport, Scorer};
use xmodal::scorer::{self, LossKind, NegativeMode, TrainConfig, TrainHistory};
use xmodal::stats;

create_exception!(xmodal, XmodalError, PyValueError, "Error raised by the xmodal engine.");

fn err(e: xmodal::Error) -> PyErr {
    XmodalError::new_err(format!("[{}] {e}", e.code()))
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for xmodal::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| PyValueError::new_err(format!("bad {what} {s:?}: {e}")))
}

fn parse_modality(s: &str) -> PyResult<xmodal::Modality> {
    match s {
        "text" => Ok(xmodal::Modality::Text),
        "image" => Ok(xmodal::Modality::Image),
        _ => Err(PyValueError::new_err(format!(
            "modality must be 'text' or 'image', got {s:?}"
        ))),
    }
}

fn matrix_rows(m: &xmodal::ScoreMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// A named set of same-width embedding vectors of one modality.
#[pyclass(name = "EmbeddingSet", module = "xmodal", frozen)]
pub struct PyEmbeddingSet {
    inner: xmodal::EmbeddingSet,
}

#[pymethods]
impl PyEmbeddingSet {
    #[new]
    #[pyo3(signature = (modality, ids, rows, dim=None))]
    fn new(modality: &str, ids: Vec<String>, rows: Vec<Vec<f32>>, dim: Option<usize>) -> PyResult<Self> {
        let modality = parse_modality(modality)?;
        let dim = match (dim, rows.first()) {
            (Some(d), _) => d,
            (None, Some(r)) => r.len(),
            (None, None) => return Err(PyValueError::new_err("dim is required for an empty set")),
        };
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(PyValueError::new_err(format!(
                "row {bad} has {} values, expected {dim}",
                rows[bad].len()
            )));
        }
        let inner = xmodal::EmbeddingSet::new(modality, dim, ids, rows.concat()).or_raise()?;
        Ok(PyEmbeddingSet { inner })
    }

    /// Reads an XEB1 file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyEmbeddingSet {
            inner: load_embeddings(path).or_raise()?,
        })
    }

    /// Writes an XEB1 file.
    fn save(&self, path: &str) -> PyResult<()> {
        save_embeddings(&self.inner, path).or_raise()
    }

    #[getter]
    fn modality(&self) -> String {
        self.inner.modality().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.count() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn to_rows(&self) -> Vec<Vec<f32>> {
        self.inner.rows().map(<[f32]>::to_vec).collect()
    }

    fn l2_normalized(&self) -> PyResult<Self> {
        Ok(PyEmbeddingSet {
            inner: self.inner.l2_normalized().or_raise()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddingSet(modality={:?}, count={}, dim={})",
            self.inner.modality().to_string(),
            self.inner.count(),
            self.inner.dim()
        )
    }
}

/// Text and image sets joined by their relevance relations.
#[pyclass(name = "Corpus", module = "xmodal", frozen)]
pub struct PyCorpus {
    inner: xmodal::PairedCorpus,
}

fn cardinality(captions_per_item: Option<usize>) -> Cardinality {
    match captions_per_item {
        Some(n) => Cardinality::OneToMany { captions_per_item: n },
        None => Cardinality::OneToOne,
    }
}

fn report_dict<'py>(py: Python<'py>, r: &RetrievalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("direction", r.direction.name())?;
    d.set_item("scorer", &r.scorer)?;
    d.set_item("query_count", r.query_count)?;
    d.set_item("candidate_count", r.candidate_count)?;
    d.set_item("captions_per_item", r.captions_per_item)?;
    let at_k = PyList::empty(py);
    for a in &r.at_k {
        let e = PyDict::new(py);
        e.set_item("k", a.k)?;
        e.set_item("hits", a.hits)?;
        e.set_item("hit_rate", a.hit_rate)?;
        e.set_item("precision", a.precision)?;
        e.set_item("precision_bound", a.precision_bound)?;
        at_k.append(e)?;
    }
    d.set_item("at_k", at_k)?;
    Ok(d)
}

#[pymethods]
impl PyCorpus {
    /// Pairs text row `i` with image row `i`.
    #[staticmethod]
    fn aligned(text: &PyEmbeddingSet, image: &PyEmbeddingSet) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: xmodal::PairedCorpus::aligned(text.inner.clone(), image.inner.clone()).or_raise()?,
        })
    }

    /// Pairs rows through a `text_id<TAB>image_id` manifest file.
    #[staticmethod]
    #[pyo3(signature = (text, image, manifest, captions_per_item=None))]
    fn from_manifest(
        text: &PyEmbeddingSet,
        image: &PyEmbeddingSet,
        manifest: &str,
        captions_per_item: Option<usize>,
    ) -> PyResult<Self> {
        let inner = build_corpus(
            text.inner.clone(),
            image.inner.clone(),
            manifest,
            cardinality(captions_per_item),
        )
        .or_raise()?;
        Ok(PyCorpus { inner })
    }

    #[getter]
    fn text(&self) -> PyEmbeddingSet {
        PyEmbeddingSet {
            inner: self.inner.text.clone(),
        }
    }

    #[getter]
    fn image(&self) -> PyEmbeddingSet {
        PyEmbeddingSet {
            inner: self.inner.image.clone(),
        }
    }

    /// `(text_row, image_row)` for every relation.
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.inner.pairs()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: self.inner.sample(n, seed).or_raise()?,
        })
    }

    /// `(train, val, test)` corpora; items that share a caption or image stay together.
    fn split(&self, train: f64, val: f64, test: f64, seed: u64) -> PyResult<(Self, Self, Self)> {
        let (a, b, c) = split_corpus(&self.inner, &SplitSpec::new(train, val, test, seed)).or_raise()?;
        Ok((PyCorpus { inner: a }, PyCorpus { inner: b }, PyCorpus { inner: c }))
    }

    /// Retrieval report for one direction (`"text_to_image"`/`"t2i"` or
    /// `"image_to_text"`/`"i2t"`), scored by a metric name or a trained model.
    #[pyo3(signature = (direction, metric=None, model=None, ks=vec![1, 5, 10]))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        direction: &str,
        metric: Option<&str>,
        model: Option<&PyScorerModel>,
        ks: Vec<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let direction: Direction = parse("direction", direction)?;
        let scorer = match (metric, model) {
            (Some(_), Some(_)) => return Err(PyValueError::new_err("give either metric or model, not both")),
            (None, Some(m)) => Scorer::Model(&m.inner),
            (Some(m), None) => Scorer::Metric(parse::<Metric>("metric", m)?),
            (None, None) => return Err(PyValueError::new_err("a metric or a model is required")),
        };
        let inner = &self.inner;
        let report = py
            .detach(|| retrieval::evaluate(inner, scorer, direction, &ks))
            .or_raise()?;
        report_dict(py, &report)
    }

    fn __len__(&self) -> usize {
        self.inner.pairs().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(texts={}, images={}, relations={})",
            self.inner.text.count(),
            self.inner.image.count(),
            self.inner.pairs().len()
        )
    }
}

/// A trained (or freshly initialised) MLP pair scorer.
#[pyclass(name = "ScorerModel", module = "xmodal", frozen)]
pub struct PyScorerModel {
    inner: xmodal::ScorerModel,
}

fn history_dict<'py>(py: Python<'py>, h: &TrainHistory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("initial_train_loss", h.initial_train_loss)?;
    d.set_item("final_train_loss", h.final_train_loss)?;
    d.set_item("stopped_epoch", h.stopped_epoch)?;
    d.set_item("best_epoch", h.best_epoch)?;
    d.set_item("best_val_loss", h.best_val_loss)?;
    d.set_item("early_stopped", h.early_stopped)?;
    let epochs = PyList::empty(py);
    for e in &h.epochs {
        let row = PyDict::new(py);
        row.set_item("epoch", e.epoch)?;
        row.set_item("train_loss", e.train_loss)?;
        row.set_item("val_loss", e.val_loss)?;
        row.set_item("lr", e.lr)?;
        epochs.append(row)?;
    }
    d.set_item("epochs", epochs)?;
    Ok(d)
}

#[pymethods]
impl PyScorerModel {
    #[new]
    #[pyo3(signature = (text_dim, image_dim, hidden_sizes, seed=0))]
    fn new(text_dim: usize, image_dim: usize, hidden_sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(PyScorerModel {
            inner: xmodal::ScorerModel::new(text_dim, image_dim, &hidden_sizes, seed).or_raise()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyScorerModel {
            inner: scorer::load_model(path).or_raise()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        scorer::save_model(&self.inner, path).or_raise()
    }

    /// Trains on `train`, early-stopping on `val`. Returns `(model, history)`.
    #[staticmethod]
    #[pyo3(signature = (
        train, val, hidden_sizes=vec![100], *, loss="contrastive", negatives="in_batch",
        lr=5e-5, batch_size=64, max_epochs=100, patience=5, min_improvement=0.01, seed=0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        py: Python<'py>,
        train: &PyCorpus,
        val: &PyCorpus,
        hidden_sizes: Vec<usize>,
        loss: &str,
        negatives: &str,
        lr: f64,
        batch_size: usize,
        max_epochs: usize,
        patience: usize,
        min_improvement: f64,
        seed: u64,
    ) -> PyResult<(Self, Bound<'py, PyDict>)> {
        let config = TrainConfig {
            base_lr: lr,
            batch_size,
            max_epochs,
            early_stop_patience: patience,
            early_stop_min_improvement: min_improvement,
            loss: parse::<LossKind>("loss", loss)?,
            negative_mode: parse::<NegativeMode>("negative mode", negatives)?,
            seed,
            ..TrainConfig::default()
        };
        let (t, v) = (&train.inner, &val.inner);
        let (model, history) = py.detach(|| scorer::train(t, v, &config, &hidden_sizes)).or_raise()?;
        Ok((PyScorerModel { inner: model }, history_dict(py, &history)?))
    }

    #[getter]
    fn hidden_sizes(&self) -> Vec<usize> {
        self.inner.hidden_sizes().to_vec()
    }

    #[getter]
    fn text_dim(&self) -> usize {
        self.inner.text_dim()
    }

    #[getter]
    fn image_dim(&self) -> usize {
        self.inner.image_dim()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Score of one (text, image) pair, in [-1, 1].
    fn forward(&self, text: Vec<f32>, image: Vec<f32>) -> PyResult<f64> {
        self.inner.forward(&text, &image).or_raise()
    }

    /// Text × image score matrix as a list of rows.
    fn score_matrix(&self, py: Python<'_>, text: &PyEmbeddingSet, image: &PyEmbeddingSet) -> PyResult<Vec<Vec<f64>>> {
        let m = py
            .detach(|| self.inner.score_matrix(&text.inner, &image.inner))
            .or_raise()?;
        Ok(matrix_rows(&m))
    }

    fn __repr__(&self) -> String {
        format!(
            "ScorerModel(text_dim={}, image_dim={}, hidden_sizes={:?})",
            self.inner.text_dim(),
            self.inner.image_dim(),
            self.inner.hidden_sizes()
        )
    }
}

/// Row × column score matrix of `a` against `b` under a metric
/// (`euclidean`, `cosine`, `manhattan`, `chi_square`).
#[pyfunction]
fn score_matrix(py: Python<'_>, metric: &str, a: &PyEmbeddingSet, b: &PyEmbeddingSet) -> PyResult<Vec<Vec<f64>>> {
    let metric: Metric = parse("metric", metric)?;
    let m = py
        .detach(|| metrics::score_matrix(metric, &a.inner, &b.inner))
        .or_raise()?;
    Ok(matrix_rows(&m))
}

/// Distance between the two set centroids.
#[pyfunction]
fn centroid_gap(a: &PyEmbeddingSet, b: &PyEmbeddingSet) -> PyResult<f64> {
    geometry::centroid_gap(&a.inner, &b.inner).or_raise()
}

/// Exact Wasserstein-2 between two equal-size sets.
#[pyfunction]
fn wasserstein2_exact(a: &PyEmbeddingSet, b: &PyEmbeddingSet) -> PyResult<f64> {
    let ra: Vec<&[f32]> = a.inner.rows().collect();
    let rb: Vec<&[f32]> = b.inner.rows().collect();
    geometry::wasserstein2_exact(&ra, &rb).or_raise()
}

/// Mean Wasserstein-2 over seeded batches of paired rows.
#[pyfunction]
#[pyo3(signature = (a, b, batch_size=geometry::DEFAULT_W2_BATCH_SIZE, seed=0))]
fn wasserstein2_batched<'py>(
    py: Python<'py>,
    a: &PyEmbeddingSet,
    b: &PyEmbeddingSet,
    batch_size: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let w = py
        .detach(|| geometry::wasserstein2_batched(&a.inner, &b.inner, batch_size, seed))
        .or_raise()?;
    let d = PyDict::new(py);
    d.set_item("mean", w.mean)?;
    d.set_item("batches", w.batches)?;
    d.set_item("batch_size", w.batch_size)?;
    d.set_item("dropped", w.dropped)?;
    d.set_item("seed", w.seed)?;
    Ok(d)
}

/// Pearson chi-square (1 dof) comparing two success proportions.
/// Returns `(statistic, p_value)`.
#[pyfunction]
fn two_proportion_chisq(successes_a: u64, trials_a: u64, successes_b: u64, trials_b: u64) -> PyResult<(f64, f64)> {
    let a = stats::ProportionSample::new(successes_a, trials_a, "a").or_raise()?;
    let b = stats::ProportionSample::new(successes_b, trials_b, "b").or_raise()?;
    let r = stats::two_proportion_chisq(&a, &b).or_raise()?;
    Ok((r.statistic, r.p_value))
}

/// Holm step-down adjusted p-values, in input order.
#[pyfunction]
fn holm_adjust(p_values: Vec<f64>) -> PyResult<Vec<f64>> {
    stats::holm_adjust(&p_values).or_raise()
}

#[pymodule]
#[pyo3(name = "xmodal")]
fn xmodal_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("XmodalError", m.py().get_type::<XmodalError>())?;
    m.add_class::<PyEmbeddingSet>()?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyScorerModel>()?;
    m.add_function(wrap_pyfunction!(score_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(centroid_gap, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein2_exact, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein2_batched, m)?)?;
    m.add_function(wrap_pyfunction!(two_proportion_chisq, m)?)?;
    m.add_function(wrap_pyfunction!(holm_adjust, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>)) {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "xmodal").unwrap();
            xmodal_module(&m).unwrap();
            f(py, &m);
        });
    }

    #[test]
    fn engine_errors_carry_their_code() {
        with_module(|py, m| {
            let e = m.getattr("holm_adjust").unwrap().call1((vec![1.5f64],)).unwrap_err();
            assert!(e.is_instance_of::<XmodalError>(py));
            assert!(e.value(py).to_string().starts_with("[p_value]"));
        });
    }

    #[test]
    fn functions_round_trip_python_values() {
        with_module(|_py, m| {
            let adjusted: Vec<f64> = m
                .getattr("holm_adjust")
                .unwrap()
                .call1((vec![0.01, 0.04, 0.03],))
                .unwrap()
                .extract()
                .unwrap();
            assert_eq!(adjusted, vec![0.03, 0.06, 0.06]);
            let (stat, p): (f64, f64) = m
                .getattr("two_proportion_chisq")
                .unwrap()
                .call1((5u64, 10u64, 5u64, 10u64))
                .unwrap()
                .extract()
                .unwrap();
            assert_eq!((stat, p), (0.0, 1.0));
        });
    }
}
