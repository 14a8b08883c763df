//! Descriptive statistics of a consolidated corpus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agreement::AnnotationQuality;
use crate::model::{GoldSet, QuestionRecord};
use crate::{round6, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_questions: usize,
    /// Sentences kept in some gold group.
    pub n_sentences: usize,
    pub n_groups: usize,
    pub mean_groups_per_question: f64,
    pub mean_sentences_per_group: f64,
    pub frac_multi_group_questions: f64,
    pub frac_questions_with_equivalent_pair: f64,
    /// Group size to number of groups of that size.
    pub group_size_histogram: BTreeMap<usize, usize>,
    pub frac_groups_size_1: f64,
    pub frac_groups_size_2: f64,
    pub frac_groups_size_3_plus: f64,
    pub n_pairs: u64,
    pub frac_same_group_pairs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_quality: Option<AnnotationQuality>,
}

impl StatsReport {
    /// Copy with every real rounded to six decimals.
    pub fn rounded(&self) -> Self {
        let mut r = self.clone();
        for x in [
            &mut r.mean_groups_per_question,
            &mut r.mean_sentences_per_group,
            &mut r.frac_multi_group_questions,
            &mut r.frac_questions_with_equivalent_pair,
            &mut r.frac_groups_size_1,
            &mut r.frac_groups_size_2,
            &mut r.frac_groups_size_3_plus,
            &mut r.frac_same_group_pairs,
        ] {
            *x = round6(*x);
        }
        if let Some(q) = r.annotation_quality.as_mut() {
            for s in [&mut q.answer_identification, &mut q.grouping] {
                s.fleiss_kappa = round6(s.fleiss_kappa);
                s.average_agreement_rate = round6(s.average_agreement_rate);
                s.wawa_f1 = round6(s.wawa_f1);
            }
        }
        r
    }

    /// `(name, value)` rows in a fixed order, for tabular output.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let f = |x: f64| format!("{:.6}", round6(x));
        let mut rows = vec![
            ("questions", self.n_questions.to_string()),
            ("sentences", self.n_sentences.to_string()),
            ("groups", self.n_groups.to_string()),
            ("groups_per_question", f(self.mean_groups_per_question)),
            ("sentences_per_group", f(self.mean_sentences_per_group)),
            ("multi_group_questions", f(self.frac_multi_group_questions)),
            (
                "questions_with_equivalent_pair",
                f(self.frac_questions_with_equivalent_pair),
            ),
            ("groups_size_1", f(self.frac_groups_size_1)),
            ("groups_size_2", f(self.frac_groups_size_2)),
            ("groups_size_3_plus", f(self.frac_groups_size_3_plus)),
            ("pairs", self.n_pairs.to_string()),
            ("same_group_pairs", f(self.frac_same_group_pairs)),
        ];
        if let Some(q) = &self.annotation_quality {
            let a = &q.answer_identification;
            let g = &q.grouping;
            rows.extend([
                ("answer_fleiss_kappa", f(a.fleiss_kappa)),
                ("answer_agreement_rate", f(a.average_agreement_rate)),
                ("answer_wawa_f1", f(a.wawa_f1)),
                ("grouping_fleiss_kappa", f(g.fleiss_kappa)),
                ("grouping_agreement_rate", f(g.average_agreement_rate)),
                ("grouping_wawa_f1", f(g.wawa_f1)),
            ]);
        }
        rows
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Computes corpus statistics over `questions`, each of which needs a gold
/// partition in `gold`.
pub fn corpus_stats(questions: &[QuestionRecord], gold: &GoldSet) -> Result<StatsReport> {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut n_sentences, mut n_groups, mut multi, mut with_pair) = (0, 0, 0, 0);
    let (mut n_pairs, mut same_pairs) = (0u64, 0u64);
    for q in questions {
        let p = gold.get(&q.question_id).ok_or_else(|| {
            Error::validation(format!("no gold partition for question {}", q.question_id))
        })?;
        p.validate_against(q.sentence_ids())
            .map_err(|e| Error::validation(format!("question {}: {e}", q.question_id)))?;
        let kept = p.n_kept() as u64;
        n_sentences += p.n_kept();
        n_groups += p.groups.len();
        if p.groups.len() > 1 {
            multi += 1;
        }
        if p.groups.iter().any(|g| g.len() > 1) {
            with_pair += 1;
        }
        n_pairs += kept * kept.saturating_sub(1) / 2;
        for g in &p.groups {
            *hist.entry(g.len()).or_default() += 1;
            let s = g.len() as u64;
            same_pairs += s * (s - 1) / 2;
        }
    }
    let size_count = |pred: &dyn Fn(usize) -> bool| -> usize {
        hist.iter().filter(|(s, _)| pred(**s)).map(|(_, c)| c).sum()
    };
    Ok(StatsReport {
        n_questions: questions.len(),
        n_sentences,
        n_groups,
        mean_groups_per_question: ratio(n_groups, questions.len()),
        mean_sentences_per_group: ratio(n_sentences, n_groups),
        frac_multi_group_questions: ratio(multi, questions.len()),
        frac_questions_with_equivalent_pair: ratio(with_pair, questions.len()),
        frac_groups_size_1: ratio(size_count(&|s| s == 1), n_groups),
        frac_groups_size_2: ratio(size_count(&|s| s == 2), n_groups),
        frac_groups_size_3_plus: ratio(size_count(&|s| s >= 3), n_groups),
        group_size_histogram: hist,
        n_pairs,
        frac_same_group_pairs: if n_pairs == 0 {
            0.0
        } else {
            same_pairs as f64 / n_pairs as f64
        },
        annotation_quality: None,
    })
}
