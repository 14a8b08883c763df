//! Python bindings for the consolidation toolkit.
//!
//! Partitions, score matrices and confusion counts are exposed as classes;
//! everything else is plain Python data (lists, dicts, tuples).

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use consolidate_core::aggregation::aggregate_groups as core_aggregate;
use consolidate_core::clustering::{self, ClusterObjective, DistanceMatrix};
use consolidate_core::metrics::{self, ConfusionCounts};
use consolidate_core::model::{Assignment, WorkerAnnotation};
use consolidate_core::scoring::{self, EmbeddingTable, PairObjective, ScoreMatrix, Scorer};
use consolidate_core::{agreement, io, split, Error, GoldSet, Partition, PairLabel, QuestionRecord};
use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::MissingScore { .. } | Error::MissingEmbedding(_) => PyKeyError::new_err(e.to_string()),
        Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for consolidate_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

type PairTuple = (String, String, bool);

fn pair_tuples(labels: Vec<PairLabel>) -> Vec<PairTuple> {
    labels
        .into_iter()
        .map(|l| (l.sentence_id_a, l.sentence_id_b, l.same))
        .collect()
}

#[pyclass(name = "Partition", module = "consolidate", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyPartition {
    inner: Partition,
}

#[pymethods]
impl PyPartition {
    #[new]
    #[pyo3(signature = (groups, discarded = Vec::new()))]
    fn new(groups: Vec<Vec<String>>, discarded: Vec<String>) -> PyResult<Self> {
        Ok(PyPartition { inner: Partition::new(groups, discarded).py()? })
    }

    #[staticmethod]
    fn from_labels(ids: Vec<String>, labels: Vec<usize>) -> PyResult<Self> {
        if ids.len() != labels.len() {
            return Err(PyValueError::new_err("ids and labels differ in length"));
        }
        Ok(PyPartition { inner: Partition::from_labels(&ids, &labels) })
    }

    #[getter]
    fn groups(&self) -> Vec<Vec<String>> {
        self.inner.groups.clone()
    }

    #[getter]
    fn discarded(&self) -> Vec<String> {
        self.inner.discarded.clone()
    }

    fn n_kept(&self) -> usize {
        self.inner.n_kept()
    }

    /// Same groups regardless of group and member order.
    fn same_grouping(&self, other: PyRef<'_, PyPartition>) -> bool {
        self.inner.same_grouping(&other.inner)
    }

    /// `(a, b, same)` for every unordered pair of kept sentences.
    fn pair_labels(&self) -> Vec<PairTuple> {
        pair_tuples(self.inner.pair_labels())
    }

    fn __len__(&self) -> usize {
        self.inner.groups.len()
    }

    fn __repr__(&self) -> String {
        format!("Partition(groups={:?}, discarded={:?})", self.inner.groups, self.inner.discarded)
    }
}

#[pyclass(name = "Question", module = "consolidate", skip_from_py_object)]
#[derive(Clone)]
struct PyQuestion {
    inner: QuestionRecord,
}

#[pymethods]
impl PyQuestion {
    /// `sentences` holds `(sentence_id, text, relevance)` tuples.
    #[new]
    fn new(question_id: String, question: String, sentences: Vec<(String, String, f64)>) -> PyResult<Self> {
        let inner = QuestionRecord {
            question_id,
            question_text: question,
            sentences: sentences
                .into_iter()
                .map(|(sentence_id, text, relevance)| consolidate_core::SentenceRecord {
                    sentence_id,
                    text,
                    relevance,
                    source_url: None,
                    answer: None,
                })
                .collect(),
        };
        inner.validate().py()?;
        Ok(PyQuestion { inner })
    }

    #[getter]
    fn question_id(&self) -> String {
        self.inner.question_id.clone()
    }

    #[getter]
    fn question(&self) -> String {
        self.inner.question_text.clone()
    }

    fn sentence_ids(&self) -> Vec<String> {
        self.inner.sentence_ids().map(str::to_owned).collect()
    }

    fn text(&self, sentence_id: &str) -> PyResult<String> {
        self.inner
            .sentence(sentence_id)
            .map(|s| s.text.clone())
            .ok_or_else(|| PyKeyError::new_err(sentence_id.to_owned()))
    }

    fn __len__(&self) -> usize {
        self.inner.sentences.len()
    }

    fn __repr__(&self) -> String {
        format!("Question({:?}, {} sentences)", self.inner.question_id, self.inner.sentences.len())
    }
}

#[pyclass(name = "ScoreMatrix", module = "consolidate", skip_from_py_object)]
#[derive(Clone)]
struct PyScoreMatrix {
    inner: ScoreMatrix,
}

#[pymethods]
impl PyScoreMatrix {
    #[new]
    fn new(question_id: String, order: Vec<String>, values: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyScoreMatrix { inner: ScoreMatrix::from_nested(question_id, order, &values).py()? })
    }

    #[getter]
    fn question_id(&self) -> String {
        self.inner.question_id.clone()
    }

    #[getter]
    fn order(&self) -> Vec<String> {
        self.inner.order.clone()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.to_nested()
    }

    fn symmetrized(&self) -> Self {
        PyScoreMatrix { inner: scoring::symmetrize(&self.inner) }
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index ({i}, {j}) out of range for {n}")));
        }
        Ok(self.inner.get(i, j))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "ConfusionCounts", module = "consolidate", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyConfusion {
    inner: ConfusionCounts,
}

#[pymethods]
impl PyConfusion {
    #[new]
    #[pyo3(signature = (tp = 0, fp = 0, fn_ = 0, tn = 0))]
    fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        PyConfusion { inner: ConfusionCounts::new(tp, fp, fn_, tn) }
    }

    #[getter]
    fn tp(&self) -> u64 {
        self.inner.tp
    }

    #[getter]
    fn fp(&self) -> u64 {
        self.inner.fp
    }

    #[getter(r#fn)]
    fn fn_(&self) -> u64 {
        self.inner.fn_
    }

    #[getter]
    fn tn(&self) -> u64 {
        self.inner.tn
    }

    fn f1(&self) -> f64 {
        metrics::f1(&self.inner)
    }

    fn mcc(&self) -> f64 {
        metrics::mcc(&self.inner)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("ConfusionCounts(tp={}, fp={}, fn={}, tn={})", c.tp, c.fp, c.fn_, c.tn)
    }
}

fn gold_set(gold: HashMap<String, PyRef<'_, PyPartition>>) -> GoldSet {
    let mut set: Vec<(String, Partition)> =
        gold.into_iter().map(|(k, p)| (k, p.inner.clone())).collect();
    set.sort_by(|a, b| a.0.cmp(&b.0));
    set.into_iter().collect()
}

#[pyfunction]
fn load_questions(path: PathBuf) -> PyResult<Vec<PyQuestion>> {
    Ok(io::load_questions(&path).py()?.into_iter().map(|inner| PyQuestion { inner }).collect())
}

#[pyfunction]
fn load_partitions(path: PathBuf) -> PyResult<Vec<(String, PyPartition)>> {
    Ok(io::load_partitions(&path)
        .py()?
        .into_iter()
        .map(|(k, inner)| (k, PyPartition { inner }))
        .collect())
}

#[pyfunction]
fn load_scores(path: PathBuf, question: PyRef<'_, PyQuestion>) -> PyResult<PyScoreMatrix> {
    let table = io::load_scores(&path).py()?;
    let order = question.inner.sentence_ids().map(str::to_owned).collect();
    Ok(PyScoreMatrix { inner: table.matrix(&question.inner.question_id, order).py()? })
}

/// Returns `{"seed", "train", "validation", "test"}`.
#[pyfunction]
fn split_dataset(question_ids: Vec<String>, seed: u64) -> PyResult<BTreeMap<&'static str, Vec<String>>> {
    let s = split::split_dataset(&question_ids, seed).py()?;
    Ok(BTreeMap::from([
        ("train", s.train),
        ("validation", s.validation),
        ("test", s.test),
    ]))
}

/// `annotations` maps worker id to `{sentence_id: "g0" | "not_answer" | "hard"}`.
/// Returns the partition and the `(sentence_id, reason)` discards.
#[pyfunction]
fn aggregate_groups(
    question: PyRef<'_, PyQuestion>,
    annotations: BTreeMap<String, BTreeMap<String, String>>,
) -> PyResult<(PyPartition, Vec<(String, String)>)> {
    let workers = annotations
        .into_iter()
        .map(|(worker_id, a)| {
            let assignments = a
                .into_iter()
                .map(|(s, v)| Ok((s, parse::<Assignment>(&v)?)))
                .collect::<PyResult<_>>()?;
            Ok(WorkerAnnotation { worker_id, assignments })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = core_aggregate(&question.inner, &workers).py()?;
    let discards = out
        .discards
        .into_iter()
        .map(|d| (d.sentence_id, format!("{:?}", d.reason).to_uppercase()))
        .collect();
    Ok((PyPartition { inner: out.partition }, discards))
}

/// `votes[i]` holds every rater's category for item `i`. `categories`
/// defaults to one past the largest category seen.
#[pyfunction]
#[pyo3(signature = (votes, categories = None))]
fn fleiss_kappa(votes: Vec<Vec<usize>>, categories: Option<usize>) -> PyResult<f64> {
    let categories = categories.unwrap_or_else(|| votes.iter().flatten().max().map_or(1, |m| m + 1));
    agreement::fleiss_kappa(&votes, categories).py()
}

#[pyfunction]
fn average_agreement_rate(votes: Vec<Vec<usize>>) -> PyResult<f64> {
    agreement::average_agreement_rate(&votes).py()
}

/// `judgments[i]` holds every worker's binary label for item `i`.
#[pyfunction]
fn wawa_f1(judgments: Vec<Vec<bool>>) -> PyResult<f64> {
    agreement::wawa_f1(&judgments).py()
}

/// Scores every sentence pair of a question. `scorer` is `exact_norm`,
/// `token_jaccard` or `embed_cosine`; the latter needs `embeddings`.
#[pyfunction]
#[pyo3(signature = (question, scorer, embeddings = None))]
fn score_question(
    question: PyRef<'_, PyQuestion>,
    scorer: &str,
    embeddings: Option<HashMap<String, Vec<f64>>>,
) -> PyResult<PyScoreMatrix> {
    let scorer = match scorer {
        "exact_norm" => Scorer::ExactNorm,
        "token_jaccard" => Scorer::TokenJaccard,
        "embed_cosine" => {
            let mut table = EmbeddingTable::default();
            let mut entries: Vec<_> = embeddings
                .ok_or_else(|| PyValueError::new_err("embed_cosine needs embeddings"))?
                .into_iter()
                .collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (sid, v) in entries {
                table.insert(None, sid, v).py()?;
            }
            Scorer::EmbedCosine(table)
        }
        other => return Err(PyValueError::new_err(format!("unknown scorer {other:?}"))),
    };
    Ok(PyScoreMatrix { inner: scoring::score_question(&question.inner, &scorer).py()? })
}

#[pyfunction]
fn classify_pairs(scores: PyRef<'_, PyScoreMatrix>, threshold: f64) -> Vec<PairTuple> {
    pair_tuples(scoring::classify_pairs(&scoring::symmetrize(&scores.inner), threshold))
}

/// Symmetrizes the scores, converts them to distances and clusters.
#[pyfunction]
fn agglomerative_cluster(scores: PyRef<'_, PyScoreMatrix>, threshold: f64) -> PyResult<PyPartition> {
    let d = clustering::to_distance(&scoring::symmetrize(&scores.inner)).py()?;
    Ok(PyPartition { inner: clustering::agglomerative_cluster(&d, threshold).py()? })
}

#[pyfunction]
fn cluster_distances(order: Vec<String>, distances: Vec<Vec<f64>>, threshold: f64) -> PyResult<PyPartition> {
    let d = DistanceMatrix::from_nested("", order, &distances).py()?;
    Ok(PyPartition { inner: clustering::agglomerative_cluster(&d, threshold).py()? })
}

#[pyfunction]
#[pyo3(signature = (scores, gold, objective = "mcc"))]
fn select_pair_threshold(
    scores: Vec<PyRef<'_, PyScoreMatrix>>,
    gold: HashMap<String, PyRef<'_, PyPartition>>,
    objective: &str,
) -> PyResult<(f64, f64)> {
    let scores: Vec<ScoreMatrix> = scores.iter().map(|m| scoring::symmetrize(&m.inner)).collect();
    let s = scoring::select_pair_threshold(&scores, &gold_set(gold), parse::<PairObjective>(objective)?).py()?;
    Ok((s.threshold, s.value))
}

#[pyfunction]
#[pyo3(signature = (scores, gold, objective = "ami"))]
fn select_cluster_threshold(
    scores: Vec<PyRef<'_, PyScoreMatrix>>,
    gold: HashMap<String, PyRef<'_, PyPartition>>,
    objective: &str,
) -> PyResult<(f64, f64)> {
    let distances = scores
        .iter()
        .map(|m| clustering::to_distance(&scoring::symmetrize(&m.inner)))
        .collect::<consolidate_core::Result<Vec<_>>>()
        .py()?;
    let s = clustering::select_cluster_threshold(
        &distances,
        &gold_set(gold),
        parse::<ClusterObjective>(objective)?,
    )
    .py()?;
    Ok((s.threshold, s.value))
}

#[pyfunction]
fn pair_confusion(pred: Vec<PairTuple>, gold: PyRef<'_, PyPartition>) -> PyResult<PyConfusion> {
    let labels: Vec<PairLabel> = pred.into_iter().map(|(a, b, same)| PairLabel::new(&a, &b, same)).collect();
    Ok(PyConfusion { inner: metrics::pair_confusion(&labels, &gold.inner).py()? })
}

#[pyfunction]
fn ari(pred: PyRef<'_, PyPartition>, gold: PyRef<'_, PyPartition>) -> PyResult<f64> {
    metrics::ari(&pred.inner, &gold.inner).py()
}

#[pyfunction]
fn ami(pred: PyRef<'_, PyPartition>, gold: PyRef<'_, PyPartition>) -> PyResult<f64> {
    metrics::ami(&pred.inner, &gold.inner).py()
}

#[pymodule]
fn consolidate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPartition>()?;
    m.add_class::<PyQuestion>()?;
    m.add_class::<PyScoreMatrix>()?;
    m.add_class::<PyConfusion>()?;
    m.add_function(wrap_pyfunction!(load_questions, m)?)?;
    m.add_function(wrap_pyfunction!(load_partitions, m)?)?;
    m.add_function(wrap_pyfunction!(load_scores, m)?)?;
    m.add_function(wrap_pyfunction!(split_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_groups, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(average_agreement_rate, m)?)?;
    m.add_function(wrap_pyfunction!(wawa_f1, m)?)?;
    m.add_function(wrap_pyfunction!(score_question, m)?)?;
    m.add_function(wrap_pyfunction!(classify_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(agglomerative_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_distances, m)?)?;
    m.add_function(wrap_pyfunction!(select_pair_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(select_cluster_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(pair_confusion, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(ami, m)?)?;
    Ok(())
}
