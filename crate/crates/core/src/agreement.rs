//! Inter-annotator agreement: Fleiss' kappa, average pairwise agreement and
//! worker agreement with the majority-vote aggregate (WAWA).

use serde::{Deserialize, Serialize};

use crate::aggregation::eligible_sentences;
use crate::model::{Assignment, QuestionAnnotations};
use crate::{Error, Result};

/// Per-rater category votes for each item.
pub type Votes = [Vec<usize>];

fn rater_count(items: &Votes) -> Result<usize> {
    let n = items
        .first()
        .ok_or_else(|| Error::InsufficientData("no items to rate".into()))?
        .len();
    if n < 2 {
        return Err(Error::validation(format!(
            "agreement needs at least 2 raters per item, got {n}"
        )));
    }
    if let Some((i, item)) = items.iter().enumerate().find(|(_, it)| it.len() != n) {
        return Err(Error::validation(format!(
            "item {i} has {} raters, expected {n}",
            item.len()
        )));
    }
    Ok(n)
}

fn category_counts(item: &[usize], categories: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; categories];
    for &c in item {
        *counts.get_mut(c).ok_or_else(|| {
            Error::validation(format!("category {c} out of range 0..{categories}"))
        })? += 1;
    }
    Ok(counts)
}

/// Fraction of agreeing rater pairs on one item, `(sum n_j^2 - n) / (n(n-1))`.
fn item_agreement(counts: &[usize], n: usize) -> f64 {
    let sq: usize = counts.iter().map(|c| c * c).sum();
    (sq - n) as f64 / (n * (n - 1)) as f64
}

/// Mean observed agreement over items (the P-bar of Fleiss' kappa).
pub fn average_agreement_rate(items: &Votes) -> Result<f64> {
    let n = rater_count(items)?;
    let categories = items.iter().flatten().max().map_or(1, |m| m + 1);
    let mut total = 0.0;
    for item in items {
        total += item_agreement(&category_counts(item, categories)?, n);
    }
    Ok(total / items.len() as f64)
}

/// Fleiss' kappa over `categories` categories.
///
/// Returns 1.0 when the chance agreement is 1, which happens only when every
/// vote falls in the same category.
pub fn fleiss_kappa(items: &Votes, categories: usize) -> Result<f64> {
    let n = rater_count(items)?;
    let mut totals = vec![0usize; categories];
    let mut observed = 0.0;
    for item in items {
        let counts = category_counts(item, categories)?;
        observed += item_agreement(&counts, n);
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
    }
    let p_bar = observed / items.len() as f64;
    let all = (items.len() * n) as f64;
    let p_e: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / all;
            p * p
        })
        .sum();
    if 1.0 - p_e <= f64::EPSILON {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Majority label of one item; an even split counts as positive.
pub fn majority(item: &[bool]) -> bool {
    let pos = item.iter().filter(|&&v| v).count();
    2 * pos >= item.len()
}

/// Pools every worker judgment as a prediction of the item's majority label
/// and returns the F1 of the positive class. When neither the majority nor
/// any worker ever says positive, the workers match the aggregate exactly and
/// the result is 1.0.
pub fn wawa_f1(items: &[Vec<bool>]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InsufficientData("no items to rate".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for item in items {
        if item.is_empty() {
            return Err(Error::validation("item without judgments"));
        }
        let gold = majority(item);
        for &v in item {
            match (v, gold) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n_items: usize,
    pub n_raters: usize,
    pub fleiss_kappa: f64,
    pub average_agreement_rate: f64,
    pub wawa_f1: f64,
}

impl AgreementStats {
    pub fn from_binary(items: &[Vec<bool>]) -> Result<Self> {
        let votes: Vec<Vec<usize>> = items
            .iter()
            .map(|it| it.iter().map(|&b| usize::from(b)).collect())
            .collect();
        let n_raters = rater_count(&votes)?;
        Ok(AgreementStats {
            n_items: items.len(),
            n_raters,
            fleiss_kappa: fleiss_kappa(&votes, 2)?,
            average_agreement_rate: average_agreement_rate(&votes)?,
            wawa_f1: wawa_f1(items)?,
        })
    }
}

/// Agreement for the two crowd tasks: deciding whether each sentence holds an
/// answer, and deciding for each pair of sentences every worker grouped
/// whether they share a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationQuality {
    pub answer_identification: AgreementStats,
    pub grouping: AgreementStats,
}

/// A sentence counts as answer-bearing for a worker unless it is marked
/// not-an-answer; hard-to-group sentences still hold an answer.
pub fn annotation_quality(annotations: &[QuestionAnnotations]) -> Result<AnnotationQuality> {
    let mut answer_items = Vec::new();
    let mut pair_items = Vec::new();
    for qa in annotations {
        let eligible: Vec<String> = eligible_sentences(&qa.workers)?.into_iter().collect();
        let sentences = qa.workers[0].assignments.keys();
        for s in sentences {
            answer_items.push(
                qa.workers
                    .iter()
                    .map(|w| w.assignments[s] != Assignment::NotAnswer)
                    .collect(),
            );
        }
        for (i, a) in eligible.iter().enumerate() {
            for b in &eligible[i + 1..] {
                pair_items.push(
                    qa.workers
                        .iter()
                        .map(|w| w.assignments[a].group() == w.assignments[b].group())
                        .collect(),
                );
            }
        }
    }
    Ok(AnnotationQuality {
        answer_identification: AgreementStats::from_binary(&answer_items)
            .map_err(|e| Error::validation(format!("answer identification: {e}")))?,
        grouping: AgreementStats::from_binary(&pair_items)
            .map_err(|e| Error::validation(format!("grouping: {e}")))?,
    })
}
