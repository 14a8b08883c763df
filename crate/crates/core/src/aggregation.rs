//! Builds gold partitions from several workers' groupings.
//!
//! A sentence is eligible when every worker put it into one of their groups.
//! Eligible sentences are visited by decreasing relevance and each is either
//! joined to an existing group, started as a new group, or discarded, so
//! that the surviving groups are ones on which all workers agree pairwise.

use std::collections::{BTreeSet, HashSet};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{GoldSet, Partition, QuestionAnnotations, QuestionRecord, WorkerAnnotation};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairVerdict {
    UnanimousSame,
    UnanimousDifferent,
    Disagreement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiscardReason {
    /// At least one worker did not put the sentence into a group.
    Ineligible,
    /// Workers disagreed about the sentence's relation to kept sentences.
    Disagreement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub sentence_id: String,
    pub reason: DiscardReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregationOutcome {
    pub partition: Partition,
    /// One entry per discarded sentence, in the same order as
    /// `partition.discarded`.
    pub discards: Vec<Discard>,
}

impl AggregationOutcome {
    pub fn count(&self, reason: DiscardReason) -> usize {
        self.discards.iter().filter(|d| d.reason == reason).count()
    }
}

/// Checks that every worker assigns every sentence of the universe formed by
/// all workers' assignments, and returns that universe.
fn sentence_universe(workers: &[WorkerAnnotation]) -> Result<BTreeSet<&str>> {
    if workers.is_empty() {
        return Err(Error::validation("no worker annotations"));
    }
    let universe: BTreeSet<&str> = workers
        .iter()
        .flat_map(|w| w.assignments.keys().map(String::as_str))
        .collect();
    for w in workers {
        if let Some(missing) = universe.iter().find(|s| !w.assignments.contains_key(**s)) {
            return Err(Error::validation(format!(
                "worker {} has no assignment for sentence {missing}",
                w.worker_id
            )));
        }
    }
    Ok(universe)
}

/// Sentences placed into some group by every worker.
pub fn eligible_sentences(workers: &[WorkerAnnotation]) -> Result<BTreeSet<String>> {
    let universe = sentence_universe(workers)?;
    Ok(universe
        .into_iter()
        .filter(|s| workers.iter().all(|w| w.assignments[*s].group().is_some()))
        .map(str::to_owned)
        .collect())
}

/// Whether all workers put `a` and `b` into the same group, all put them
/// into different groups, or neither.
pub fn pair_agreement(workers: &[WorkerAnnotation], a: &str, b: &str) -> Result<PairVerdict> {
    let mut same = 0usize;
    for w in workers {
        let group = |s: &str| {
            w.assignments.get(s).and_then(|x| x.group()).ok_or_else(|| {
                Error::validation(format!(
                    "sentence {s} is not eligible (worker {})",
                    w.worker_id
                ))
            })
        };
        if group(a)? == group(b)? {
            same += 1;
        }
    }
    Ok(if workers.is_empty() {
        return Err(Error::validation("no worker annotations"));
    } else if same == workers.len() {
        PairVerdict::UnanimousSame
    } else if same == 0 {
        PairVerdict::UnanimousDifferent
    } else {
        PairVerdict::Disagreement
    })
}

/// Eligible sentences in processing order: relevance descending, ties by
/// ascending sentence id.
fn processing_order<'q>(question: &'q QuestionRecord, eligible: &BTreeSet<String>) -> Vec<&'q str> {
    let mut sentences: Vec<_> = question
        .sentences
        .iter()
        .filter(|s| eligible.contains(&s.sentence_id))
        .collect();
    sentences.sort_by(|x, y| {
        y.relevance
            .total_cmp(&x.relevance)
            .then_with(|| x.sentence_id.cmp(&y.sentence_id))
    });
    sentences.iter().map(|s| s.sentence_id.as_str()).collect()
}

/// Runs the three-case construction over `order` given a pair verdict
/// oracle. Returns the groups and the sentences rejected for disagreement.
fn build_groups<'a, F>(
    question_id: &str,
    order: &[&'a str],
    verdict: F,
) -> Result<(Vec<Vec<String>>, HashSet<&'a str>)>
where
    F: Fn(&str, &str) -> Result<PairVerdict>,
{
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut rejected: HashSet<&str> = HashSet::new();

    for &s in order {
        let verdicts: Vec<Vec<PairVerdict>> = groups
            .iter()
            .map(|g| g.iter().map(|t| verdict(s, t)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let all_different = |skip: Option<usize>| {
            verdicts
                .iter()
                .enumerate()
                .filter(|(gi, _)| Some(*gi) != skip)
                .all(|(_, vs)| vs.iter().all(|v| *v == PairVerdict::UnanimousDifferent))
        };

        let joinable: Vec<usize> = (0..groups.len())
            .filter(|&gi| {
                verdicts[gi].iter().all(|v| *v == PairVerdict::UnanimousSame)
                    && all_different(Some(gi))
            })
            .collect();

        match joinable.as_slice() {
            [gi] => groups[*gi].push(s.to_owned()),
            [] if all_different(None) => groups.push(vec![s.to_owned()]),
            [] => {
                rejected.insert(s);
            }
            many => {
                return Err(Error::Invariant(format!(
                    "question {question_id}: sentence {s} can join {} groups",
                    many.len()
                )))
            }
        }
    }
    Ok((groups, rejected))
}

/// Aggregates the workers' groupings of one question into a partition.
///
/// Ineligible sentences and sentences whose relation to the already kept
/// sentences is not unanimous end up in `discarded`. A question without any
/// eligible sentence yields an empty grouping.
pub fn aggregate_groups(
    question: &QuestionRecord,
    workers: &[WorkerAnnotation],
) -> Result<AggregationOutcome> {
    let universe = sentence_universe(workers)?;
    let ids: BTreeSet<&str> = question.sentence_ids().collect();
    if let Some(s) = ids.difference(&universe).next() {
        return Err(Error::validation(format!(
            "question {}: no assignment for sentence {s}",
            question.question_id
        )));
    }
    if let Some(s) = universe.difference(&ids).next() {
        return Err(Error::validation(format!(
            "question {}: annotation names unknown sentence {s}",
            question.question_id
        )));
    }

    let eligible = eligible_sentences(workers)?;
    let order = processing_order(question, &eligible);
    let (groups, rejected) = build_groups(&question.question_id, &order, |a, b| {
        pair_agreement(workers, a, b)
    })?;

    let mut discarded = Vec::new();
    let mut discards = Vec::new();
    for s in question.sentence_ids() {
        let reason = if !eligible.contains(s) {
            DiscardReason::Ineligible
        } else if rejected.contains(s) {
            DiscardReason::Disagreement
        } else {
            continue;
        };
        discarded.push(s.to_owned());
        discards.push(Discard {
            sentence_id: s.to_owned(),
            reason,
        });
    }

    Ok(AggregationOutcome {
        partition: Partition::new(groups, discarded)?,
        discards,
    })
}

/// Per-question entry of the aggregation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionAggregation {
    pub question_id: String,
    pub n_sentences: usize,
    pub n_kept: usize,
    pub n_groups: usize,
    pub discarded_ineligible: usize,
    pub discarded_disagreement: usize,
    pub discards: Vec<Discard>,
    /// Set when the question is dropped from the gold set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub n_questions: usize,
    pub n_kept_questions: usize,
    pub n_sentences: usize,
    pub n_eligible_sentences: usize,
    pub n_kept_sentences: usize,
    pub questions: Vec<QuestionAggregation>,
}

/// Aggregates every question and keeps those with more than one preserved
/// sentence. Questions and annotations must match one to one.
pub fn aggregate_dataset(
    questions: &[QuestionRecord],
    annotations: &[QuestionAnnotations],
) -> Result<(GoldSet, AggregationReport)> {
    let by_id: std::collections::HashMap<&str, &QuestionAnnotations> = annotations
        .iter()
        .map(|a| (a.question_id.as_str(), a))
        .collect();
    let known: HashSet<&str> = questions.iter().map(|q| q.question_id.as_str()).collect();
    if let Some(a) = annotations
        .iter()
        .find(|a| !known.contains(a.question_id.as_str()))
    {
        return Err(Error::validation(format!(
            "annotations for unknown question {}",
            a.question_id
        )));
    }

    let outcomes: Vec<(&QuestionRecord, AggregationOutcome)> = questions
        .par_iter()
        .map(|q| {
            let ann = by_id.get(q.question_id.as_str()).ok_or_else(|| {
                Error::validation(format!("no annotations for question {}", q.question_id))
            })?;
            aggregate_groups(q, &ann.workers)
                .map(|o| (q, o))
        })
        .collect::<Result<_>>()?;

    let mut gold = GoldSet::new();
    let mut entries = Vec::with_capacity(outcomes.len());
    let mut n_eligible = 0;
    let mut n_kept_sentences = 0;
    for (q, outcome) in outcomes {
        let n_kept = outcome.partition.n_kept();
        let ineligible = outcome.count(DiscardReason::Ineligible);
        n_eligible += q.sentences.len() - ineligible;
        let dropped = if n_kept < 2 {
            info!(
                "dropping question {}: {n_kept} sentence(s) preserved",
                q.question_id
            );
            Some(format!("{n_kept} sentence(s) preserved; need at least 2"))
        } else {
            n_kept_sentences += n_kept;
            gold.insert(q.question_id.clone(), outcome.partition.clone());
            None
        };
        entries.push(QuestionAggregation {
            question_id: q.question_id.clone(),
            n_sentences: q.sentences.len(),
            n_kept,
            n_groups: outcome.partition.groups.len(),
            discarded_ineligible: ineligible,
            discarded_disagreement: outcome.count(DiscardReason::Disagreement),
            discards: outcome.discards,
            dropped,
        });
    }

    let report = AggregationReport {
        n_questions: questions.len(),
        n_kept_questions: gold.len(),
        n_sentences: questions.iter().map(|q| q.sentences.len()).sum(),
        n_eligible_sentences: n_eligible,
        n_kept_sentences,
        questions: entries,
    };
    Ok((gold, report))
}
