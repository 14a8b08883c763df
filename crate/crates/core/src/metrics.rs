//! Evaluation measures.
//!
//! Classification is scored on pooled sentence pairs (micro F1 and MCC).
//! Grouping is scored per question with the adjusted Rand index and the
//! adjusted mutual information, then averaged.
//!
//! Degenerate cases: F1 and MCC are 0 when their denominator vanishes. ARI is
//! 1 when both its numerator and denominator vanish (identical trivial
//! partitions). AMI is 1 for identical groupings and 0 when its denominator
//! vanishes otherwise.

use std::collections::{BTreeMap, HashSet};
use std::ops::AddAssign;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::model::{GoldSet, PairLabel, Partition};
use crate::{round6, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn record(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
        self.tn += rhs.tn;
    }
}

/// `2tp / (2tp + fp + fn)`.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Matthews correlation coefficient.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt()
}

/// Confusion counts of predicted pair labels against a gold partition. The
/// labels must cover every unordered pair of the gold's kept sentences once.
pub fn pair_confusion(pred: &[PairLabel], gold: &Partition) -> Result<ConfusionCounts> {
    let index = gold.group_index();
    let n = index.len();
    let expected = n * n.saturating_sub(1) / 2;
    let mut seen = HashSet::with_capacity(pred.len());
    let mut c = ConfusionCounts::default();
    for label in pred {
        let (a, b) = (label.sentence_id_a.as_str(), label.sentence_id_b.as_str());
        let (Some(ga), Some(gb)) = (index.get(a), index.get(b)) else {
            return Err(Error::validation(format!(
                "predicted pair ({a}, {b}) is not a pair of gold sentences"
            )));
        };
        if a == b || !seen.insert(crate::canonical_pair(a, b)) {
            return Err(Error::validation(format!("pair ({a}, {b}) predicted twice")));
        }
        c.record(label.same, ga == gb);
    }
    if seen.len() != expected {
        return Err(Error::validation(format!(
            "{} predicted pairs for {n} gold sentences, expected {expected}",
            seen.len()
        )));
    }
    Ok(c)
}

fn check_same_sentences(pred: &Partition, gold: &Partition) -> Result<usize> {
    let p: HashSet<&str> = pred.kept_ids().collect();
    let g: HashSet<&str> = gold.kept_ids().collect();
    if p != g {
        let diff = p.symmetric_difference(&g).min().copied().unwrap_or_default();
        return Err(Error::validation(format!(
            "predicted and gold partitions cover different sentences (e.g. {diff})"
        )));
    }
    Ok(g.len())
}

/// Pair confusion of a predicted grouping, expanded to pair labels.
pub fn partition_pair_confusion(pred: &Partition, gold: &Partition) -> Result<ConfusionCounts> {
    check_same_sentences(pred, gold)?;
    pair_confusion(&pred.pair_labels(), gold)
}

/// Overlap counts between gold groups (rows) and predicted groups (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub gold_sizes: Vec<u64>,
    pub pred_sizes: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &Partition, gold: &Partition) -> Result<Self> {
        let n = check_same_sentences(pred, gold)?;
        let pred_index = pred.group_index();
        let mut counts = vec![vec![0u64; pred.groups.len()]; gold.groups.len()];
        for (u, g) in gold.groups.iter().enumerate() {
            for s in g {
                counts[u][pred_index[s.as_str()]] += 1;
            }
        }
        Ok(ContingencyTable {
            counts,
            gold_sizes: gold.groups.iter().map(|g| g.len() as u64).collect(),
            pred_sizes: pred.groups.iter().map(|g| g.len() as u64).collect(),
            n: n as u64,
        })
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts.iter().enumerate().flat_map(|(u, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(move |(v, &c)| (u, v, c))
        })
    }
}

fn comb2(k: u64) -> f64 {
    (k * k.saturating_sub(1) / 2) as f64
}

fn require_two(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "clustering metrics need at least 2 sentences, got {n}"
        )));
    }
    Ok(())
}

/// Adjusted Rand index.
pub fn ari(pred: &Partition, gold: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(pred, gold)?;
    require_two(t.n)?;
    let index: f64 = t.cells().map(|(_, _, c)| comb2(c)).sum();
    let sum_a: f64 = t.gold_sizes.iter().map(|&a| comb2(a)).sum();
    let sum_b: f64 = t.pred_sizes.iter().map(|&b| comb2(b)).sum();
    let expected = sum_a * sum_b / comb2(t.n);
    let max_index = (sum_a + sum_b) / 2.0;
    let num = index - expected;
    let den = max_index - expected;
    if den == 0.0 {
        return Ok(if num == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(num / den)
}

fn entropy(sizes: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

pub fn mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    t.cells()
        .map(|(u, v, c)| {
            let c = c as f64;
            let (a, b) = (t.gold_sizes[u] as f64, t.pred_sizes[v] as f64);
            c / n * (n * c / (a * b)).ln()
        })
        .sum()
}

/// Expected mutual information under the hypergeometric model of random
/// partitions with the table's marginals.
pub fn expected_mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n;
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &t.gold_sizes {
        for &b in &t.pred_sizes {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a as usize] + lf[b as usize] + lf[(n - a) as usize]
                + lf[(n - b) as usize]
                - lf[n as usize];
            for k in lo..=hi {
                let kf = k as f64;
                let log_p = fixed
                    - lf[k as usize]
                    - lf[(a - k) as usize]
                    - lf[(b - k) as usize]
                    - lf[(n + k - a - b) as usize];
                emi += kf / nf * (nf * kf / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with natural logs and the arithmetic mean of
/// the two entropies as normaliser.
pub fn ami(pred: &Partition, gold: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(pred, gold)?;
    require_two(t.n)?;
    if pred.same_grouping(gold) {
        return Ok(1.0);
    }
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let mean_h = (entropy(&t.gold_sizes, t.n) + entropy(&t.pred_sizes, t.n)) / 2.0;
    let den = mean_h - emi;
    if den.abs() < 1e-15 {
        return Ok(0.0);
    }
    Ok((mi - emi) / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSetting {
    Classification,
    Grouping,
}

/// How per-question grouping scores are combined into one number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingAggregate {
    /// Unweighted mean over questions.
    #[default]
    PerQuestionMean,
    /// One partition over the union of all questions' sentences.
    Pooled,
}

impl std::str::FromStr for GroupingAggregate {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" | "per_question_mean" => Ok(GroupingAggregate::PerQuestionMean),
            "pooled" => Ok(GroupingAggregate::Pooled),
            _ => Err(format!("unknown aggregate {s:?} (expected mean or pooled)")),
        }
    }
}

/// Metric bundle for one split. Metric values are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: EvalSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ami: Option<f64>,
    pub n_questions: usize,
    pub n_pairs: u64,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<GroupingAggregate>,
}

impl EvalReport {
    pub fn with_threshold(mut self, name: &str, value: f64) -> Self {
        self.thresholds.insert(name.to_owned(), value);
        self
    }
}

fn percent(x: f64) -> f64 {
    round6(100.0 * x)
}

fn lookup<'a, T>(map: &'a IndexMap<String, T>, qid: &str, what: &str) -> Result<&'a T> {
    map.get(qid)
        .ok_or_else(|| Error::validation(format!("no {what} for question {qid}")))
}

/// Pooled pair F1 and MCC over `question_ids`.
pub fn evaluate_classification(
    preds: &IndexMap<String, Vec<PairLabel>>,
    gold: &GoldSet,
    question_ids: &[String],
) -> Result<EvalReport> {
    let mut c = ConfusionCounts::default();
    for qid in question_ids {
        c += pair_confusion(lookup(preds, qid, "predicted pairs")?, lookup(gold, qid, "gold partition")?)
            .map_err(|e| Error::validation(format!("question {qid}: {e}")))?;
    }
    Ok(EvalReport {
        setting: EvalSetting::Classification,
        f1: Some(percent(f1(&c))),
        mcc: Some(percent(mcc(&c))),
        ari: None,
        ami: None,
        n_questions: question_ids.len(),
        n_pairs: c.total(),
        thresholds: BTreeMap::new(),
        confusion: Some(c),
        aggregate: None,
    })
}

/// Per-question `(question_id, ari, ami)` as fractions.
pub fn grouping_scores(
    preds: &GoldSet,
    gold: &GoldSet,
    question_ids: &[String],
) -> Result<Vec<(String, f64, f64)>> {
    question_ids
        .iter()
        .map(|qid| {
            let p = lookup(preds, qid, "predicted partition")?;
            let g = lookup(gold, qid, "gold partition")?;
            let wrap = |e: Error| Error::validation(format!("question {qid}: {e}"));
            Ok((qid.clone(), ari(p, g).map_err(wrap)?, ami(p, g).map_err(wrap)?))
        })
        .collect()
}

fn pooled(parts: &[(&String, &Partition)]) -> Partition {
    Partition {
        groups: parts
            .iter()
            .flat_map(|(qid, p)| {
                p.groups
                    .iter()
                    .map(move |g| g.iter().map(|s| format!("{qid}\u{1f}{s}")).collect())
            })
            .collect(),
        discarded: Vec::new(),
    }
}

/// ARI and AMI over `question_ids`, combined per `aggregate`.
pub fn evaluate_grouping(
    preds: &GoldSet,
    gold: &GoldSet,
    question_ids: &[String],
    aggregate: GroupingAggregate,
) -> Result<EvalReport> {
    if question_ids.is_empty() {
        return Err(Error::InsufficientData("no questions to evaluate".into()));
    }
    let n_pairs = question_ids
        .iter()
        .map(|q| lookup(gold, q, "gold partition").map(|p| comb2(p.n_kept() as u64) as u64))
        .sum::<Result<u64>>()?;
    let (ari_v, ami_v) = match aggregate {
        GroupingAggregate::PerQuestionMean => {
            let scores = grouping_scores(preds, gold, question_ids)?;
            let n = scores.len() as f64;
            (
                scores.iter().map(|s| s.1).sum::<f64>() / n,
                scores.iter().map(|s| s.2).sum::<f64>() / n,
            )
        }
        GroupingAggregate::Pooled => {
            let mut ps = Vec::new();
            let mut gs = Vec::new();
            for qid in question_ids {
                ps.push((qid, lookup(preds, qid, "predicted partition")?));
                gs.push((qid, lookup(gold, qid, "gold partition")?));
            }
            let (p, g) = (pooled(&ps), pooled(&gs));
            (ari(&p, &g)?, ami(&p, &g)?)
        }
    };
    Ok(EvalReport {
        setting: EvalSetting::Grouping,
        f1: None,
        mcc: None,
        ari: Some(percent(ari_v)),
        ami: Some(percent(ami_v)),
        n_questions: question_ids.len(),
        n_pairs,
        thresholds: BTreeMap::new(),
        confusion: None,
        aggregate: Some(aggregate),
    })
}

/// Predictions for either evaluation setting.
#[derive(Clone, Copy, Debug)]
pub enum Predictions<'a> {
    Pairs(&'a IndexMap<String, Vec<PairLabel>>),
    Groupings(&'a GoldSet),
}

pub fn evaluate(
    preds: Predictions<'_>,
    gold: &GoldSet,
    question_ids: &[String],
    aggregate: GroupingAggregate,
) -> Result<EvalReport> {
    match preds {
        Predictions::Pairs(p) => evaluate_classification(p, gold, question_ids),
        Predictions::Groupings(p) => evaluate_grouping(p, gold, question_ids, aggregate),
    }
}

/// Fraction of gold same-group pairs among all pairs of kept sentences.
pub fn positive_pair_rate(gold: &GoldSet) -> f64 {
    let mut c = ConfusionCounts::default();
    for p in gold.values() {
        for l in p.pair_labels() {
            c.record(l.same, l.same);
        }
    }
    if c.total() == 0 {
        0.0
    } else {
        c.tp as f64 / c.total() as f64
    }
}

/// Groups `(question_id, label)` pairs by question, in first-seen order.
pub fn labels_by_question(
    labels: impl IntoIterator<Item = (String, PairLabel)>,
) -> IndexMap<String, Vec<PairLabel>> {
    let mut out: IndexMap<String, Vec<PairLabel>> = IndexMap::new();
    for (q, l) in labels {
        out.entry(q).or_default().push(l);
    }
    out
}
