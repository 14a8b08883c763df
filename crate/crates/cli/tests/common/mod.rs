#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use consolidate_core::io;
use consolidate_core::scoring::ScoreMatrix;
use consolidate_core::{GoldSet, Partition, QuestionRecord, SentenceRecord};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_consolidate"))
}

pub fn run_cli(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn consolidate");
    if std::env::var_os("CONSOLIDATE_TEST_VERBOSE").is_some() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ASPECTS: &[&str] = &[
    "paris france",
    "the river seine",
    "late nineteenth century",
    "wrought iron lattice",
    "three hundred metres tall",
    "gustave eiffel company",
    "world fair exhibition",
    "radio transmission antenna",
];

const FILLERS: &[&str] = &["indeed", "reportedly", "as noted", "in short", "notably", "overall"];

/// Sentence text for an aspect. Variant 0 and 1 differ only in case and
/// punctuation; later variants add filler words.
fn text_for(aspect: &str, variant: usize, rng: &mut ChaCha8Rng) -> String {
    match variant {
        0 => format!("{aspect}."),
        1 => format!("{}!", aspect.to_uppercase()),
        _ => {
            let filler = FILLERS.choose(rng).unwrap();
            format!("{filler}, it is {aspect}")
        }
    }
}

pub struct Corpus {
    pub questions: Vec<QuestionRecord>,
    pub gold: GoldSet,
}

/// Random questions with 2..=8 kept sentences spread over up to four groups
/// and occasionally one discarded sentence.
pub fn synthetic_corpus(n_questions: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut questions = Vec::new();
    let mut gold = GoldSet::new();
    for q in 0..n_questions {
        let qid = format!("q{q:03}");
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=4.min(n));
        let mut aspects: Vec<&str> = ASPECTS.to_vec();
        aspects.shuffle(&mut rng);
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        labels.shuffle(&mut rng);
        let mut used = vec![0usize; k];
        let mut sentences = Vec::new();
        let mut sids = Vec::new();
        for (i, &g) in labels.iter().enumerate() {
            let sid = format!("{qid}-s{i}");
            sentences.push(SentenceRecord {
                sentence_id: sid.clone(),
                text: text_for(aspects[g], used[g], &mut rng),
                relevance: rng.random_range(0..100) as f64 / 100.0,
                source_url: None,
                answer: None,
            });
            used[g] += 1;
            sids.push(sid);
        }
        let mut discarded = Vec::new();
        if rng.random_bool(0.3) {
            let sid = format!("{qid}-x");
            sentences.push(SentenceRecord {
                sentence_id: sid.clone(),
                text: "unrelated remark".to_owned(),
                relevance: 0.0,
                source_url: None,
                answer: None,
            });
            discarded.push(sid);
        }
        let partition = Partition::from_labels(&sids, &labels);
        let partition = Partition::new(partition.groups, discarded).unwrap();
        questions.push(QuestionRecord {
            question_id: qid.clone(),
            question_text: format!("what about item {q}?"),
            sentences,
        });
        gold.insert(qid, partition);
    }
    Corpus { questions, gold }
}

/// Scores that are exactly 1 for gold same-group pairs and 0 otherwise.
pub fn oracle_scores(gold: &GoldSet) -> Vec<ScoreMatrix> {
    gold.iter()
        .map(|(qid, p)| {
            let order: Vec<String> = p.kept_ids().map(str::to_owned).collect();
            let index = p.group_index();
            ScoreMatrix::from_fn(qid.clone(), order.clone(), |i, j| {
                f64::from(u8::from(index[order[i].as_str()] == index[order[j].as_str()]))
            })
        })
        .collect()
}

pub struct CorpusFiles {
    pub questions: PathBuf,
    pub gold: PathBuf,
    pub scores: PathBuf,
}

pub fn write_corpus(dir: &Path, corpus: &Corpus) -> CorpusFiles {
    let files = CorpusFiles {
        questions: dir.join("questions.jsonl"),
        gold: dir.join("partitions.jsonl"),
        scores: dir.join("scores.jsonl"),
    };
    io::write_questions(&files.questions, &corpus.questions).unwrap();
    io::write_partitions(&files.gold, &corpus.gold).unwrap();
    io::write_scores(&files.scores, &oracle_scores(&corpus.gold)).unwrap();
    files
}
