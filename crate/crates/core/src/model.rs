//! Corpus records: questions, crowd annotations, partitions and pair labels.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Gold (or predicted) partitions keyed by question id, in file order.
pub type GoldSet = IndexMap<String, Partition>;

/// One retrieved sentence of a question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_id: String,
    pub text: String,
    /// Retriever score; higher is more relevant.
    pub relevance: f64,
    #[serde(rename = "url", default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    /// Short answer extracted from this sentence by an upstream reader.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    #[serde(rename = "question")]
    pub question_text: String,
    pub sentences: Vec<SentenceRecord>,
}

impl QuestionRecord {
    /// Checks the per-record invariants: non-blank sentence text, finite
    /// relevance and sentence ids unique within the question.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.sentences {
            if s.text.trim().is_empty() {
                return Err(Error::validation(format!(
                    "question {}: sentence {} has empty text",
                    self.question_id, s.sentence_id
                )));
            }
            if !s.relevance.is_finite() {
                return Err(Error::validation(format!(
                    "question {}: sentence {} has non-finite relevance",
                    self.question_id, s.sentence_id
                )));
            }
            if !seen.insert(s.sentence_id.as_str()) {
                return Err(Error::validation(format!(
                    "question {}: duplicate sentence_id {}",
                    self.question_id, s.sentence_id
                )));
            }
        }
        Ok(())
    }

    pub fn sentence_ids(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.sentence_id.as_str())
    }

    pub fn sentence(&self, id: &str) -> Option<&SentenceRecord> {
        self.sentences.iter().find(|s| s.sentence_id == id)
    }

    /// Returns a copy holding only the sentences that are kept in `partition`,
    /// in the original order.
    pub fn restricted_to(&self, partition: &Partition) -> QuestionRecord {
        let kept: HashSet<&str> = partition.kept_ids().collect();
        QuestionRecord {
            question_id: self.question_id.clone(),
            question_text: self.question_text.clone(),
            sentences: self
                .sentences
                .iter()
                .filter(|s| kept.contains(s.sentence_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// A single worker's decision for one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Assignment {
    /// Placed in the worker's group `k`. Indices are local to the worker.
    Group(u32),
    NotAnswer,
    HardToGroup,
}

impl Assignment {
    pub fn group(self) -> Option<u32> {
        match self {
            Assignment::Group(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assignment::Group(k) => write!(f, "g{k}"),
            Assignment::NotAnswer => f.write_str("not_answer"),
            Assignment::HardToGroup => f.write_str("hard"),
        }
    }
}

impl std::str::FromStr for Assignment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "not_answer" => Ok(Assignment::NotAnswer),
            "hard" => Ok(Assignment::HardToGroup),
            _ => s
                .strip_prefix('g')
                .and_then(|k| k.parse().ok())
                .map(Assignment::Group)
                .ok_or_else(|| format!("invalid assignment {s:?}")),
        }
    }
}

impl Serialize for Assignment {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerAnnotation {
    pub worker_id: String,
    pub assignments: BTreeMap<String, Assignment>,
}

/// All workers' annotations for one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnnotations {
    pub question_id: String,
    pub workers: Vec<WorkerAnnotation>,
}

/// Grouping of a question's sentences into disjoint, non-empty groups. Any
/// sentence not in a group is listed in `discarded`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub groups: Vec<Vec<String>>,
    #[serde(default)]
    pub discarded: Vec<String>,
}

impl Partition {
    /// Builds a partition, rejecting empty groups and overlapping members.
    pub fn new(groups: Vec<Vec<String>>, discarded: Vec<String>) -> Result<Self> {
        let p = Partition { groups, discarded };
        p.check_disjoint()?;
        Ok(p)
    }

    /// Partition with every id in its own group.
    pub fn singletons<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Partition {
            groups: ids.into_iter().map(|s| vec![s.into()]).collect(),
            discarded: Vec::new(),
        }
    }

    /// Builds a partition from per-item cluster labels.
    pub fn from_labels<S: AsRef<str>>(ids: &[S], labels: &[usize]) -> Self {
        let mut by_label: IndexMap<usize, Vec<String>> = IndexMap::new();
        for (id, &l) in ids.iter().zip(labels) {
            by_label.entry(l).or_default().push(id.as_ref().to_owned());
        }
        Partition {
            groups: by_label.into_values().collect(),
            discarded: Vec::new(),
        }
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::validation("partition contains an empty group"));
            }
        }
        for id in self.groups.iter().flatten().chain(&self.discarded) {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!(
                    "sentence {id} appears more than once in partition"
                )));
            }
        }
        Ok(())
    }

    /// Checks that groups and discards exactly cover `sentence_ids`.
    pub fn validate_against<'a, I>(&self, sentence_ids: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a str>,
    {
        self.check_disjoint()?;
        let expected: HashSet<&str> = sentence_ids.into_iter().collect();
        let covered: HashSet<&str> = self
            .groups
            .iter()
            .flatten()
            .chain(&self.discarded)
            .map(String::as_str)
            .collect();
        if let Some(missing) = expected.difference(&covered).min() {
            return Err(Error::validation(format!(
                "sentence {missing} is not covered by the partition"
            )));
        }
        if let Some(extra) = covered.difference(&expected).min() {
            return Err(Error::validation(format!(
                "partition names unknown sentence {extra}"
            )));
        }
        Ok(())
    }

    /// Ids of sentences that belong to a group, in group order.
    pub fn kept_ids(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flatten().map(String::as_str)
    }

    pub fn n_kept(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Map from kept sentence id to group index.
    pub fn group_index(&self) -> HashMap<&str, usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| g.iter().map(move |s| (s.as_str(), gi)))
            .collect()
    }

    /// Groups with members sorted, ordered by smallest member. Two partitions
    /// describe the same grouping iff their canonical groups are equal.
    pub fn canonical_groups(&self) -> Vec<Vec<String>> {
        let mut groups: Vec<Vec<String>> = self
            .groups
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort();
                g
            })
            .collect();
        groups.sort();
        groups
    }

    /// Same grouping of kept sentences, ignoring group order, member order
    /// and discards.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        self.canonical_groups() == other.canonical_groups()
    }

    /// One label per unordered pair of kept sentences, sorted by pair.
    pub fn pair_labels(&self) -> Vec<PairLabel> {
        let index = self.group_index();
        let mut ids: Vec<&str> = index.keys().copied().collect();
        ids.sort_unstable();
        let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                out.push(PairLabel {
                    sentence_id_a: (*a).to_owned(),
                    sentence_id_b: (*b).to_owned(),
                    same: index[a] == index[b],
                });
            }
        }
        out
    }
}

/// Binary same-group label for an unordered sentence pair, with
/// `sentence_id_a < sentence_id_b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairLabel {
    pub sentence_id_a: String,
    pub sentence_id_b: String,
    pub same: bool,
}

impl PairLabel {
    pub fn new(x: &str, y: &str, same: bool) -> Self {
        let (a, b) = canonical_pair(x, y);
        PairLabel {
            sentence_id_a: a.to_owned(),
            sentence_id_b: b.to_owned(),
            same,
        }
    }
}

/// Orders a pair of ids lexicographically.
pub fn canonical_pair<'a>(x: &'a str, y: &'a str) -> (&'a str, &'a str) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn assignment_parses_wire_names() {
        assert_eq!("g0".parse::<Assignment>().unwrap(), Assignment::Group(0));
        assert_eq!("g17".parse::<Assignment>().unwrap(), Assignment::Group(17));
        assert_eq!("hard".parse::<Assignment>().unwrap(), Assignment::HardToGroup);
        assert_eq!("not_answer".parse::<Assignment>().unwrap(), Assignment::NotAnswer);
        assert!("g".parse::<Assignment>().is_err());
        assert!("group1".parse::<Assignment>().is_err());
        assert_eq!(Assignment::Group(3).to_string(), "g3");
    }

    #[test]
    fn partition_rejects_overlap_and_empty_groups() {
        assert!(Partition::new(vec![ids(&["a", "b"]), ids(&["b"])], vec![]).is_err());
        assert!(Partition::new(vec![ids(&["a"])], ids(&["a"])).is_err());
        assert!(Partition::new(vec![vec![]], vec![]).is_err());
        assert!(Partition::new(vec![ids(&["a"]), ids(&["b"])], ids(&["c"])).is_ok());
    }

    #[test]
    fn partition_rejects_uncovered_or_unknown_sentences() {
        let p = Partition::new(vec![ids(&["a", "b"])], vec![]).unwrap();
        assert!(p.validate_against(["a", "b"]).is_ok());
        let err = p.validate_against(["a", "b", "c"]).unwrap_err().to_string();
        assert!(err.contains('c'), "{err}");
        assert!(p.validate_against(["a"]).is_err());
    }

    #[test]
    fn pair_labels_are_canonical_and_complete() {
        let p = Partition::new(vec![ids(&["s3", "s1"]), ids(&["s2"])], ids(&["s4"])).unwrap();
        let labels = p.pair_labels();
        assert_eq!(
            labels,
            vec![
                PairLabel::new("s1", "s2", false),
                PairLabel::new("s1", "s3", true),
                PairLabel::new("s2", "s3", false),
            ]
        );
        assert!(labels.iter().all(|l| l.sentence_id_a < l.sentence_id_b));
    }

    #[test]
    fn same_grouping_ignores_order() {
        let p = Partition::new(vec![ids(&["b", "a"]), ids(&["c"])], vec![]).unwrap();
        let q = Partition::new(vec![ids(&["c"]), ids(&["a", "b"])], vec![]).unwrap();
        assert!(p.same_grouping(&q));
        assert!(!p.same_grouping(&Partition::singletons(["a", "b", "c"])));
    }

    #[test]
    fn question_validation() {
        let mut q = QuestionRecord {
            question_id: "q".into(),
            question_text: "why?".into(),
            sentences: vec![
                SentenceRecord {
                    sentence_id: "s1".into(),
                    text: "x".into(),
                    relevance: 1.0,
                    source_url: None,
                    answer: None,
                },
                SentenceRecord {
                    sentence_id: "s2".into(),
                    text: "  ".into(),
                    relevance: 0.5,
                    source_url: None,
                    answer: None,
                },
            ],
        };
        assert!(q.validate().is_err());
        q.sentences[1].text = "y".into();
        assert!(q.validate().is_ok());
        q.sentences[1].sentence_id = "s1".into();
        assert!(q.validate().is_err());
    }
}
