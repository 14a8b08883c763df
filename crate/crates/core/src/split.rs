//! Deterministic 80/10/10 split by question.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_QUESTIONS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Which part of a [`DatasetSplit`] to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "val" | "dev" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

impl DatasetSplit {
    pub fn get(&self, name: SplitName) -> &[String] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rejects an id that appears in more than one part.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!(
                    "question {id} appears in more than one split"
                )));
            }
        }
        Ok(())
    }
}

/// Sizes of (train, validation, test) for `n` questions: validation and
/// test are each `round(0.1 n)` and train takes the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let tenth = (n as f64 * 0.1).round() as usize;
    (n - 2 * tenth, tenth, tenth)
}

/// Shuffles the question ids with ChaCha8 seeded from `seed` (via
/// `SeedableRng::seed_from_u64`) and cuts validation, then test, then
/// train from the shuffled order. Each part is listed in input order.
pub fn split_dataset<S: AsRef<str>>(question_ids: &[S], seed: u64) -> Result<DatasetSplit> {
    let n = question_ids.len();
    if n < MIN_QUESTIONS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_QUESTIONS} questions to split, got {n}"
        )));
    }
    let mut unique = HashSet::new();
    for id in question_ids {
        if !unique.insert(id.as_ref()) {
            return Err(Error::validation(format!(
                "duplicate question_id {}",
                id.as_ref()
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let (_, n_val, n_test) = split_sizes(n);
    let mut part = vec![SplitName::Train; n];
    for &i in &order[..n_val] {
        part[i] = SplitName::Validation;
    }
    for &i in &order[n_val..n_val + n_test] {
        part[i] = SplitName::Test;
    }

    let mut split = DatasetSplit {
        seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (id, p) in question_ids.iter().zip(part) {
        let id = id.as_ref().to_owned();
        match p {
            SplitName::Train => split.train.push(id),
            SplitName::Validation => split.validation.push(id),
            SplitName::Test => split.test.push(id),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("q{i}")).collect()
    }

    #[test]
    fn released_corpus_sizes() {
        // 0.1 * 4699 = 469.9 rounds to 470
        assert_eq!(split_sizes(4699), (3759, 470, 470));
        let s = split_dataset(&ids(4699), 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (3759, 470, 470));
    }

    #[test]
    fn ten_questions_split_8_1_1() {
        let s = split_dataset(&ids(10), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = split_dataset(&ids(137), 42).unwrap();
        let b = split_dataset(&ids(137), 42).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.len(), 137);
        let c = split_dataset(&ids(137), 43).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn too_few_questions() {
        assert!(matches!(
            split_dataset(&ids(9), 0),
            Err(Error::InsufficientData(_))
        ));
    }
}
