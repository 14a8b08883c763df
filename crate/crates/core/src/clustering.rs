//! Average-linkage agglomerative grouping of a question's sentences.
//!
//! Starting from singletons, the two clusters with the smallest mean
//! cross-cluster distance are merged while that mean is below the threshold.
//! Ties go to the pair whose (smallest member id) keys are lexicographically
//! smallest. Linkage values closer than [`LINKAGE_EPS`] count as equal, both
//! between candidate pairs and against the threshold, so the result does
//! not depend on floating-point summation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{ami, ari};
use crate::model::{GoldSet, PairLabel, Partition, QuestionRecord};
use crate::scoring::{
    argmax_grid, classify_pairs, score_question, symmetrize, threshold_grid, ScoreMatrix, Scorer,
    ThresholdSelection,
};
use crate::{Error, Result};

pub const LINKAGE_EPS: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric dissimilarities in `[0, 1]` with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub question_id: String,
    pub order: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_nested(
        question_id: impl Into<String>,
        order: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let question_id = question_id.into();
        let n = order.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::validation(format!(
                "question {question_id}: distance matrix is not {n}x{n}"
            )));
        }
        let mut values = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i == j {
                    values.push(0.0);
                    continue;
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::validation(format!(
                        "question {question_id}: distance {v} outside [0, 1]"
                    )));
                }
                if (v - rows[j][i]).abs() > SYMMETRY_TOL {
                    return Err(Error::validation(format!(
                        "question {question_id}: distance matrix is not symmetric at ({}, {})",
                        order[i], order[j]
                    )));
                }
                values.push(v);
            }
        }
        Ok(DistanceMatrix {
            question_id,
            order,
            values,
        })
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
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// `1 - score`, with a zero diagonal. The scores must already be symmetric.
pub fn to_distance(scores: &ScoreMatrix) -> Result<DistanceMatrix> {
    if !scores.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::validation(format!(
            "question {}: score matrix must be symmetrized before conversion to distances",
            scores.question_id
        )));
    }
    let n = scores.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 1.0 - scores.get(i, j)).collect())
        .collect();
    DistanceMatrix::from_nested(scores.question_id.clone(), scores.order.clone(), &rows)
}

/// One merge of the agglomeration. `left` and `right` are the indices of the
/// smallest member sentence of each cluster; the merged cluster keeps `left`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

/// The full greedy merge sequence of a distance matrix.
///
/// The choice made at each step does not depend on the threshold, which only
/// decides where the sequence stops, so every threshold's partition is a cut
/// of the same dendrogram.
#[derive(Clone, Debug)]
pub struct Dendrogram {
    pub order: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn build(d: &DistanceMatrix) -> Result<Self> {
        let n = d.len();
        if n == 0 {
            return Err(Error::validation(format!(
                "question {}: nothing to cluster",
                d.question_id
            )));
        }
        // Slot i holds the cluster whose smallest input index is i.
        let mut sums: Vec<Vec<f64>> = d.to_nested();
        let mut size = vec![1usize; n];
        let mut key: Vec<&str> = d.order.iter().map(String::as_str).collect();
        let mut active: Vec<usize> = (0..n).collect();
        let mut merges = Vec::with_capacity(n - 1);

        while active.len() > 1 {
            let mut best: Option<(usize, usize, f64)> = None;
            for (x, &i) in active.iter().enumerate() {
                for &j in &active[x + 1..] {
                    let link = sums[i][j] / (size[i] * size[j]) as f64;
                    let better = match best {
                        None => true,
                        Some((bi, bj, bl)) => {
                            if link < bl - LINKAGE_EPS {
                                true
                            } else if link <= bl + LINKAGE_EPS {
                                tie_key(&key, i, j) < tie_key(&key, bi, bj)
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        best = Some((i, j, link));
                    }
                }
            }
            let (i, j, height) = best.expect("at least two active clusters");
            let (keep, gone) = (i.min(j), i.max(j));
            for &k in &active {
                if k != keep && k != gone {
                    let s = sums[keep][k] + sums[gone][k];
                    sums[keep][k] = s;
                    sums[k][keep] = s;
                }
            }
            size[keep] += size[gone];
            key[keep] = key[keep].min(key[gone]);
            active.retain(|&k| k != gone);
            merges.push(Merge {
                left: keep,
                right: gone,
                height,
            });
        }
        Ok(Dendrogram {
            order: d.order.clone(),
            merges,
        })
    }

    /// Applies merges while their height is below `threshold`.
    pub fn cut(&self, threshold: f64) -> Partition {
        let n = self.order.len();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for m in &self.merges {
            if m.height >= threshold - LINKAGE_EPS {
                break;
            }
            let moved = std::mem::take(&mut members[m.right]);
            members[m.left].extend(moved);
        }
        Partition {
            groups: members
                .into_iter()
                .filter(|g| !g.is_empty())
                .map(|mut g| {
                    g.sort_unstable();
                    g.into_iter().map(|i| self.order[i].clone()).collect()
                })
                .collect(),
            discarded: Vec::new(),
        }
    }
}

/// Tie-break key of a candidate merge: the two cluster keys, smaller first.
fn tie_key<'a>(key: &[&'a str], i: usize, j: usize) -> (&'a str, &'a str) {
    crate::canonical_pair(key[i], key[j])
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::validation(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Clusters with average linkage, merging while the closest pair of
/// clusters is strictly closer than `threshold`.
pub fn agglomerative_cluster(d: &DistanceMatrix, threshold: f64) -> Result<Partition> {
    check_threshold(threshold)?;
    Ok(Dendrogram::build(d)?.cut(threshold))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterObjective {
    #[default]
    Ami,
    Ari,
}

impl ClusterObjective {
    pub fn evaluate(self, pred: &Partition, gold: &Partition) -> Result<f64> {
        match self {
            ClusterObjective::Ami => ami(pred, gold),
            ClusterObjective::Ari => ari(pred, gold),
        }
    }
}

impl std::str::FromStr for ClusterObjective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ami" => Ok(ClusterObjective::Ami),
            "ari" => Ok(ClusterObjective::Ari),
            _ => Err(format!("unknown cluster objective {s:?} (expected ami or ari)")),
        }
    }
}

/// Picks the grid threshold maximising the mean per-question objective over
/// the validation distances; ties go to the smallest threshold.
pub fn select_cluster_threshold(
    distances: &[DistanceMatrix],
    gold: &GoldSet,
    objective: ClusterObjective,
) -> Result<ThresholdSelection> {
    if distances.is_empty() {
        return Err(Error::InsufficientData(
            "no validation questions for threshold selection".into(),
        ));
    }
    let cases: Vec<(Dendrogram, &Partition)> = distances
        .par_iter()
        .map(|d| {
            let g = gold.get(&d.question_id).ok_or_else(|| {
                Error::validation(format!("no gold partition for question {}", d.question_id))
            })?;
            Ok((Dendrogram::build(d)?, g))
        })
        .collect::<Result<_>>()?;

    let grid: Vec<f64> = threshold_grid().collect();
    let values: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            let total = cases
                .iter()
                .map(|(dg, g)| objective.evaluate(&dg.cut(t), g))
                .sum::<Result<f64>>()?;
            Ok((t, total / cases.len() as f64))
        })
        .collect::<Result<_>>()?;
    argmax_grid(values).ok_or_else(|| Error::Invariant("empty threshold grid".into()))
}

/// Predictions for one question in both evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Consolidation {
    pub partition: Partition,
    pub pair_labels: Vec<PairLabel>,
}

/// Symmetrized scores to pair labels and to a clustering.
pub fn consolidate_scores(
    scores: &ScoreMatrix,
    pair_threshold: f64,
    cluster_threshold: f64,
) -> Result<Consolidation> {
    let sym = symmetrize(scores);
    let pair_labels = classify_pairs(&sym, pair_threshold);
    let partition = agglomerative_cluster(&to_distance(&sym)?, cluster_threshold)?;
    Ok(Consolidation {
        partition,
        pair_labels,
    })
}

pub fn consolidate(
    question: &QuestionRecord,
    scorer: &Scorer,
    pair_threshold: f64,
    cluster_threshold: f64,
) -> Result<Consolidation> {
    consolidate_scores(&score_question(question, scorer)?, pair_threshold, cluster_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: &[Vec<f64>]) -> DistanceMatrix {
        let order = (1..=rows.len()).map(|i| format!("s{i}")).collect();
        DistanceMatrix::from_nested("q", order, rows).unwrap()
    }

    #[test]
    fn three_sentence_trace() {
        let d = dm(&[
            vec![0.0, 0.2, 0.9],
            vec![0.2, 0.0, 0.8],
            vec![0.9, 0.8, 0.0],
        ]);
        let p = agglomerative_cluster(&d, 0.5).unwrap();
        assert_eq!(p.groups, vec![vec!["s1", "s2"], vec!["s3"]]);
        let dg = Dendrogram::build(&d).unwrap();
        assert!((dg.merges[1].height - 0.85).abs() < 1e-15);
        // 0.85 < 0.86 merges everything
        assert_eq!(agglomerative_cluster(&d, 0.86).unwrap().groups.len(), 1);
        assert_eq!(agglomerative_cluster(&d, 0.85).unwrap().groups.len(), 2);
    }

    #[test]
    fn threshold_extremes() {
        let d = dm(&[
            vec![0.0, 0.0, 0.3],
            vec![0.0, 0.0, 0.99],
            vec![0.3, 0.99, 0.0],
        ]);
        assert_eq!(agglomerative_cluster(&d, 0.0).unwrap().groups.len(), 3);
        assert_eq!(agglomerative_cluster(&d, 1.0).unwrap().groups.len(), 1);
        assert!(agglomerative_cluster(&d, 1.5).is_err());
    }

    #[test]
    fn ties_go_to_smallest_ids() {
        let d = dm(&[
            vec![0.0, 0.5, 0.1, 0.5],
            vec![0.5, 0.0, 0.5, 0.1],
            vec![0.1, 0.5, 0.0, 0.5],
            vec![0.5, 0.1, 0.5, 0.0],
        ]);
        let dg = Dendrogram::build(&d).unwrap();
        assert_eq!((dg.merges[0].left, dg.merges[0].right), (0, 2));
        assert_eq!((dg.merges[1].left, dg.merges[1].right), (1, 3));
    }

    #[test]
    fn asymmetric_scores_are_rejected() {
        let m = ScoreMatrix::from_nested(
            "q",
            vec!["a".into(), "b".into()],
            &[vec![1.0, 0.8], vec![0.6, 1.0]],
        )
        .unwrap();
        assert!(to_distance(&m).is_err());
        let d = to_distance(&symmetrize(&m)).unwrap();
        assert!((d.get(0, 1) - 0.3).abs() < 1e-15);
        assert!(DistanceMatrix::from_nested(
            "q",
            vec!["a".into(), "b".into()],
            &[vec![0.0, 0.1], vec![0.2, 0.0]]
        )
        .is_err());
    }

    #[test]
    fn identity_scores_give_zero_distances() {
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let m = ScoreMatrix::from_fn("q", ids, |_, _| 1.0);
        let d = to_distance(&m).unwrap();
        assert!(d.to_nested().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sentence() {
        let m = ScoreMatrix::from_fn("q", vec!["only".into()], |_, _| 1.0);
        let c = consolidate_scores(&m, 0.5, 0.5).unwrap();
        assert_eq!(c.partition.groups, vec![vec!["only"]]);
        assert!(c.pair_labels.is_empty());
    }

    #[test]
    fn all_equal_distances_against_all_singletons_gold() {
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let d = DistanceMatrix::from_nested(
            "q",
            ids.clone(),
            &[vec![0.0, 0.4, 0.4], vec![0.4, 0.0, 0.4], vec![0.4, 0.4, 0.0]],
        )
        .unwrap();
        let mut gold = GoldSet::new();
        gold.insert("q".into(), Partition::singletons(ids));
        let sel = select_cluster_threshold(&[d], &gold, ClusterObjective::Ami).unwrap();
        assert_eq!(sel.threshold, 0.0);
        assert_eq!(sel.value, 1.0);
    }

    #[test]
    fn empty_validation_is_an_error() {
        assert!(select_cluster_threshold(&[], &GoldSet::new(), ClusterObjective::Ami).is_err());
    }
}
