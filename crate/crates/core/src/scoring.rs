//! Pairwise same-group scores and the validation-tuned pair threshold.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::metrics::{f1, mcc, ConfusionCounts};
use crate::model::{GoldSet, PairLabel, QuestionRecord};
use crate::{Error, Result};

/// Number of steps in the threshold grid `{0.00, 0.01, ..., 1.00}`.
pub const GRID_STEPS: usize = 100;

/// The threshold grid, in increasing order.
pub fn threshold_grid() -> impl Iterator<Item = f64> + Clone {
    (0..=GRID_STEPS).map(|k| k as f64 / GRID_STEPS as f64)
}

/// Square matrix of same-group scores for one question, in `[0, 1]` with a
/// unit diagonal. Entry `(i, j)` refers to `order[i]` and `order[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub question_id: String,
    pub order: Vec<String>,
    values: Vec<f64>,
}

impl ScoreMatrix {
    /// Builds a matrix from row-major values, clamping into `[0, 1]` and
    /// setting the diagonal to 1.
    pub fn from_fn<F>(question_id: impl Into<String>, order: Vec<String>, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> f64,
    {
        let n = order.len();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(if i == j { 1.0 } else { f(i, j).clamp(0.0, 1.0) });
            }
        }
        ScoreMatrix {
            question_id: question_id.into(),
            order,
            values,
        }
    }

    pub fn from_nested(
        question_id: impl Into<String>,
        order: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let question_id = question_id.into();
        check_square(&order, rows.iter().map(Vec::len), rows.len())?;
        if let Some(v) = rows.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "question {question_id}: non-finite score {v}"
            )));
        }
        Ok(Self::from_fn(question_id, order, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.len().max(1)).map(<[f64]>::to_vec).take(self.len()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

fn check_square(order: &[String], row_lens: impl Iterator<Item = usize>, n_rows: usize) -> Result<()> {
    let n = order.len();
    if n_rows != n {
        return Err(Error::validation(format!(
            "score matrix has {n_rows} rows for {n} sentences"
        )));
    }
    for (i, len) in row_lens.enumerate() {
        if len != n {
            return Err(Error::validation(format!(
                "score matrix row {i} has {len} entries, expected {n}"
            )));
        }
    }
    let unique: HashSet<&String> = order.iter().collect();
    if unique.len() != n {
        return Err(Error::validation("score matrix order repeats a sentence id"));
    }
    Ok(())
}

/// Replaces each off-diagonal entry by the mean of it and its transpose.
pub fn symmetrize(m: &ScoreMatrix) -> ScoreMatrix {
    ScoreMatrix::from_fn(m.question_id.clone(), m.order.clone(), |i, j| {
        (m.get(i, j) + m.get(j, i)) / 2.0
    })
}

/// Embedding vectors keyed by sentence id, optionally conditioned on the
/// question. Conditioned entries take precedence on lookup.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    shared: HashMap<String, Vec<f64>>,
    conditioned: HashMap<(String, String), Vec<f64>>,
}

impl EmbeddingTable {
    pub fn insert(
        &mut self,
        question_id: Option<String>,
        sentence_id: String,
        vector: Vec<f64>,
    ) -> Result<()> {
        let dim = *self.dim.get_or_insert(vector.len());
        if vector.len() != dim {
            return Err(Error::validation(format!(
                "embedding for {sentence_id} has dimension {}, expected {dim}",
                vector.len()
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "embedding for {sentence_id} has a non-finite component"
            )));
        }
        if vector.iter().all(|&v| v == 0.0) {
            return Err(Error::validation(format!(
                "embedding for {sentence_id} is the zero vector"
            )));
        }
        let previous = match question_id {
            Some(q) => self.conditioned.insert((q, sentence_id.clone()), vector),
            None => self.shared.insert(sentence_id.clone(), vector),
        };
        if previous.is_some() {
            return Err(Error::validation(format!(
                "duplicate embedding for {sentence_id}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn get(&self, question_id: &str, sentence_id: &str) -> Option<&[f64]> {
        self.conditioned
            .get(&(question_id.to_owned(), sentence_id.to_owned()))
            .or_else(|| self.shared.get(sentence_id))
            .map(Vec::as_slice)
    }
}

/// Score matrix as read from `scores.jsonl`: row-major, possibly asymmetric
/// and possibly with missing (`null`) entries.
#[derive(Clone, Debug, PartialEq)]
pub struct RawScoreMatrix {
    pub order: Vec<String>,
    values: Vec<Option<f64>>,
}

impl RawScoreMatrix {
    pub fn new(order: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        check_square(&order, rows.iter().map(Vec::len), rows.len())?;
        let values: Vec<Option<f64>> = rows.into_iter().flatten().collect();
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite score"));
        }
        Ok(RawScoreMatrix { order, values })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.order.len() + j]
    }
}

/// Precomputed matrices keyed by question id.
#[derive(Clone, Debug, Default)]
pub struct ScoreTable {
    pub matrices: HashMap<String, RawScoreMatrix>,
}

impl ScoreTable {
    pub fn insert(&mut self, question_id: impl Into<String>, m: RawScoreMatrix) {
        self.matrices.insert(question_id.into(), m);
    }

    /// The stored scores of question `qid` rearranged to `order`, clamped
    /// into `[0, 1]`. Fails if any off-diagonal pair is absent.
    pub fn matrix(&self, qid: &str, order: Vec<String>) -> Result<ScoreMatrix> {
        let raw = self.matrices.get(qid).ok_or_else(|| {
            Error::validation(format!("no precomputed scores for question {qid}"))
        })?;
        let pos: HashMap<&str, usize> = raw
            .order
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let n = order.len();
        let mut rows = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let value = pos
                    .get(order[i].as_str())
                    .zip(pos.get(order[j].as_str()))
                    .and_then(|(&a, &b)| raw.get(a, b));
                rows[i][j] = value.ok_or_else(|| {
                    let (a, b) = crate::canonical_pair(&order[i], &order[j]);
                    Error::MissingScore {
                        question_id: qid.to_owned(),
                        a: a.to_owned(),
                        b: b.to_owned(),
                    }
                })?;
            }
        }
        ScoreMatrix::from_nested(qid, order, &rows)
    }
}

/// Pair scoring strategy.
#[derive(Clone, Debug)]
pub enum Scorer {
    /// 1 when the texts are equal after case folding, punctuation removal
    /// and whitespace collapsing, else 0.
    ExactNorm,
    /// Jaccard overlap of lowercased whitespace tokens.
    TokenJaccard,
    /// `(1 + cos) / 2` of the sentence embeddings.
    EmbedCosine(EmbeddingTable),
    /// Externally computed scores, clamped to `[0, 1]`.
    Precomputed(ScoreTable),
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::ExactNorm => "exact_norm",
            Scorer::TokenJaccard => "token_jaccard",
            Scorer::EmbedCosine(_) => "embed_cosine",
            Scorer::Precomputed(_) => "precomputed",
        }
    }
}

/// Case-folds, drops punctuation and symbols, and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let tokens = |s: &str| -> HashSet<String> { s.split_whitespace().map(str::to_lowercase).collect() };
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Scores every ordered pair of the question's sentences, in question order.
pub fn score_question(question: &QuestionRecord, scorer: &Scorer) -> Result<ScoreMatrix> {
    let order: Vec<String> = question.sentence_ids().map(str::to_owned).collect();
    let qid = question.question_id.as_str();
    match scorer {
        Scorer::ExactNorm => {
            let norm: Vec<String> = question.sentences.iter().map(|s| normalize_text(&s.text)).collect();
            Ok(ScoreMatrix::from_fn(qid, order, |i, j| {
                f64::from(u8::from(norm[i] == norm[j]))
            }))
        }
        Scorer::TokenJaccard => {
            let texts: Vec<&str> = question.sentences.iter().map(|s| s.text.as_str()).collect();
            Ok(ScoreMatrix::from_fn(qid, order, |i, j| token_jaccard(texts[i], texts[j])))
        }
        Scorer::EmbedCosine(table) => {
            let vectors: Vec<&[f64]> = order
                .iter()
                .map(|s| table.get(qid, s).ok_or_else(|| Error::MissingEmbedding(s.clone())))
                .collect::<Result<_>>()?;
            Ok(ScoreMatrix::from_fn(qid, order, |i, j| {
                (1.0 + cosine(vectors[i], vectors[j])) / 2.0
            }))
        }
        Scorer::Precomputed(table) => table.matrix(qid, order),
    }
}

/// Objective maximised when choosing the pair threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairObjective {
    #[default]
    Mcc,
    F1,
}

impl PairObjective {
    pub fn evaluate(self, c: &ConfusionCounts) -> f64 {
        match self {
            PairObjective::Mcc => mcc(c),
            PairObjective::F1 => f1(c),
        }
    }
}

impl std::str::FromStr for PairObjective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mcc" => Ok(PairObjective::Mcc),
            "f1" => Ok(PairObjective::F1),
            _ => Err(format!("unknown pair objective {s:?} (expected mcc or f1)")),
        }
    }
}

/// A chosen grid threshold and the objective value it attains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub threshold: f64,
    pub value: f64,
}

/// Picks the grid point with the best objective; the earliest (smallest)
/// threshold wins ties.
pub(crate) fn argmax_grid(values: impl IntoIterator<Item = (f64, f64)>) -> Option<ThresholdSelection> {
    let mut best: Option<ThresholdSelection> = None;
    for (threshold, value) in values {
        if best.is_none_or(|b| value > b.value) {
            best = Some(ThresholdSelection { threshold, value });
        }
    }
    best
}

/// Collects `(score, gold_same)` for every unordered pair of every matrix.
/// Each matrix must cover exactly the kept sentences of its gold partition.
pub fn labeled_pair_scores(scores: &[ScoreMatrix], gold: &GoldSet) -> Result<Vec<(f64, bool)>> {
    let mut out = Vec::new();
    for m in scores {
        let partition = gold.get(&m.question_id).ok_or_else(|| {
            Error::validation(format!("no gold partition for question {}", m.question_id))
        })?;
        let index = partition.group_index();
        if index.len() != m.len() || m.order.iter().any(|s| !index.contains_key(s.as_str())) {
            return Err(Error::validation(format!(
                "question {}: scored sentences differ from the gold partition",
                m.question_id
            )));
        }
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                let same = index[m.order[i].as_str()] == index[m.order[j].as_str()];
                out.push((m.get(i, j), same));
            }
        }
    }
    Ok(out)
}

pub fn confusion_at(pairs: &[(f64, bool)], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &(score, gold) in pairs {
        c.record(score >= threshold, gold);
    }
    c
}

/// Selects the pair threshold on pooled validation pairs. Matrices are
/// expected to be symmetric; the upper triangle is used.
pub fn select_pair_threshold(
    scores: &[ScoreMatrix],
    gold: &GoldSet,
    objective: PairObjective,
) -> Result<ThresholdSelection> {
    let pairs = labeled_pair_scores(scores, gold)?;
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no labeled validation pairs for threshold selection".into(),
        ));
    }
    let selection = argmax_grid(
        threshold_grid().map(|t| (t, objective.evaluate(&confusion_at(&pairs, t)))),
    );
    selection.ok_or_else(|| Error::Invariant("empty threshold grid".into()))
}

/// "Same group" iff score >= threshold, one label per unordered pair.
pub fn classify_pairs(scores: &ScoreMatrix, threshold: f64) -> Vec<PairLabel> {
    let n = scores.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(PairLabel::new(
                &scores.order[i],
                &scores.order[j],
                scores.get(i, j) >= threshold,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Partition, SentenceRecord};

    fn question(texts: &[&str]) -> QuestionRecord {
        QuestionRecord {
            question_id: "q".into(),
            question_text: "?".into(),
            sentences: texts
                .iter()
                .enumerate()
                .map(|(i, t)| SentenceRecord {
                    sentence_id: format!("s{i}"),
                    text: t.to_string(),
                    relevance: 0.0,
                    source_url: None,
                    answer: None,
                })
                .collect(),
        }
    }

    #[test]
    fn grid_is_exact_hundredths() {
        let g: Vec<f64> = threshold_grid().collect();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[7], 0.07);
        assert_eq!(g[70], 0.7);
        assert_eq!(g[100], 1.0);
    }

    #[test]
    fn exact_norm_ignores_case_and_punctuation() {
        let q = question(&["Yes, it is HARD!", "yes it   is hard", "no"]);
        let m = score_question(&q, &Scorer::ExactNorm).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn jaccard_set_arithmetic() {
        assert_eq!(token_jaccard("a b c", "a b d"), 0.5);
        assert_eq!(token_jaccard("A b", "a B"), 1.0);
        let q = question(&["a b c", "a b d"]);
        let m = score_question(&q, &Scorer::TokenJaccard).unwrap();
        assert_eq!(m.get(1, 0), 0.5);
    }

    #[test]
    fn cosine_scores() {
        let q = question(&["x", "y", "z"]);
        let mut t = EmbeddingTable::default();
        t.insert(None, "s0".into(), vec![1.0, 0.0]).unwrap();
        t.insert(None, "s1".into(), vec![2.0, 0.0]).unwrap();
        t.insert(None, "s2".into(), vec![0.0, 3.0]).unwrap();
        let m = score_question(&q, &Scorer::EmbedCosine(t.clone())).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 0.5);

        // conditioned embedding overrides the shared one
        t.insert(Some("q".into()), "s1".into(), vec![-1.0, 0.0]).unwrap();
        let m = score_question(&q, &Scorer::EmbedCosine(t)).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn embedding_validation() {
        let mut t = EmbeddingTable::default();
        t.insert(None, "a".into(), vec![1.0, 0.0]).unwrap();
        assert!(t.insert(None, "b".into(), vec![1.0]).is_err());
        assert!(t.insert(None, "c".into(), vec![0.0, 0.0]).is_err());
        assert!(t.insert(None, "a".into(), vec![0.0, 1.0]).is_err());
        let q = question(&["x", "y"]);
        let mut t = EmbeddingTable::default();
        t.insert(None, "s0".into(), vec![1.0]).unwrap();
        assert!(matches!(
            score_question(&q, &Scorer::EmbedCosine(t)),
            Err(Error::MissingEmbedding(s)) if s == "s1"
        ));
    }

    #[test]
    fn precomputed_is_reordered_and_clamped() {
        let q = question(&["x", "y"]);
        let mut table = ScoreTable::default();
        table.insert(
            "q",
            RawScoreMatrix::new(
                vec!["s1".into(), "s0".into()],
                vec![vec![Some(1.0), Some(1.7)], vec![Some(0.25), None]],
            )
            .unwrap(),
        );
        let m = score_question(&q, &Scorer::Precomputed(table)).unwrap();
        // row s0, column s1 comes from raw (1, 0)
        assert_eq!(m.get(0, 1), 0.25);
        assert_eq!(m.get(1, 0), 1.0);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn precomputed_missing_pair_is_named() {
        let q = question(&["x", "y", "z"]);
        let mut table = ScoreTable::default();
        table.insert(
            "q",
            RawScoreMatrix::new(
                vec!["s0".into(), "s1".into()],
                vec![vec![Some(1.0), Some(0.5)], vec![Some(0.5), Some(1.0)]],
            )
            .unwrap(),
        );
        match score_question(&q, &Scorer::Precomputed(table)) {
            Err(Error::MissingScore { a, b, .. }) => assert_eq!((a.as_str(), b.as_str()), ("s0", "s2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn symmetrize_averages() {
        let m = ScoreMatrix::from_nested(
            "q",
            vec!["a".into(), "b".into()],
            &[vec![1.0, 0.8], vec![0.6, 1.0]],
        )
        .unwrap();
        let s = symmetrize(&m);
        assert!((s.get(0, 1) - 0.7).abs() < 1e-15);
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn classify_boundary_is_inclusive() {
        let m = ScoreMatrix::from_nested(
            "q",
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![1.0, 0.7, 0.69], vec![0.7, 1.0, 0.0], vec![0.69, 0.0, 1.0]],
        )
        .unwrap();
        let labels = classify_pairs(&m, 0.7);
        assert_eq!(labels[0], PairLabel::new("a", "b", true));
        assert_eq!(labels[1], PairLabel::new("a", "c", false));
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let m = ScoreMatrix::from_fn("q", ids, |_, _| 0.3);
        assert_eq!(classify_pairs(&m, 0.5).len(), 45);
    }

    fn gold_of(p: Partition) -> GoldSet {
        let mut g = GoldSet::new();
        g.insert("q".into(), p);
        g
    }

    #[test]
    fn oracle_scores_choose_one_hundredth() {
        let p = Partition::new(
            vec![vec!["a".into(), "b".into()], vec!["c".into()]],
            vec![],
        )
        .unwrap();
        let idx = p.group_index();
        let order: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let m = ScoreMatrix::from_fn("q", order.clone(), |i, j| {
            f64::from(u8::from(idx[order[i].as_str()] == idx[order[j].as_str()]))
        });
        let sel = select_pair_threshold(&[m], &gold_of(p), PairObjective::Mcc).unwrap();
        assert_eq!(sel.threshold, 0.01);
        assert_eq!(sel.value, 1.0);
    }

    #[test]
    fn flat_objective_chooses_zero() {
        let p = Partition::new(
            vec![vec!["a".into(), "b".into()], vec!["c".into()]],
            vec![],
        )
        .unwrap();
        let m = ScoreMatrix::from_fn("q", ["a", "b", "c"].map(String::from).to_vec(), |_, _| 0.5);
        for obj in [PairObjective::Mcc, PairObjective::F1] {
            let sel = select_pair_threshold(std::slice::from_ref(&m), &gold_of(p.clone()), obj).unwrap();
            assert_eq!(sel.threshold, 0.0);
        }
    }

    #[test]
    fn empty_validation_is_an_error() {
        assert!(select_pair_threshold(&[], &GoldSet::new(), PairObjective::Mcc).is_err());
    }
}
