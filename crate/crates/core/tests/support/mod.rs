//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code paths under test
//! except for plain data types.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use consolidate_core::model::{Assignment, QuestionRecord, SentenceRecord, WorkerAnnotation};
use consolidate_core::Partition;
use rand::Rng;

pub const EPS: f64 = 1e-12;

/// Per-sentence labels over a fixed id order.
pub fn labels(p: &Partition, ids: &[String]) -> Vec<usize> {
    let mut by_id = HashMap::new();
    for (g, members) in p.groups.iter().enumerate() {
        for m in members {
            by_id.insert(m.as_str(), g);
        }
    }
    ids.iter().map(|s| by_id[s.as_str()]).collect()
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:02}")).collect()
}

pub fn random_partition<R: Rng>(rng: &mut R, ids: &[String], max_groups: usize) -> Partition {
    let k = rng.random_range(1..=max_groups.max(1));
    let labels: Vec<usize> = ids.iter().map(|_| rng.random_range(0..k)).collect();
    Partition::from_labels(ids, &labels)
}

/// Pair-counting ARI: `2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d))`, with 1.0
/// when the denominator is zero.
pub fn ari_pair_counting(pred: &[usize], gold: &[usize]) -> f64 {
    let n = gold.len();
    let (mut a, mut b, mut c, mut d) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (gold[i] == gold[j], pred[i] == pred[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (a * d - b * c) / den
    }
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn counts(labels: &[usize]) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    counts(labels)
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn mutual_information(pred: &[usize], gold: &[usize]) -> f64 {
    let n = gold.len() as f64;
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&g, &p) in gold.iter().zip(pred) {
        *joint.entry((g, p)).or_insert(0) += 1;
    }
    let cg = counts(gold);
    let cp = counts(pred);
    joint
        .iter()
        .map(|(&(g, p), &c)| {
            let c = c as f64;
            c / n * (n * c / (cg[&g] as f64 * cp[&p] as f64)).ln()
        })
        .sum()
}

/// Expected MI with hypergeometric cell probabilities from exact integer
/// binomials: `P(k) = C(a, k) C(n - a, b - k) / C(n, b)`.
pub fn expected_mi_exact(pred: &[usize], gold: &[usize]) -> f64 {
    let n = gold.len() as u64;
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in counts(gold).values() {
        for &b in counts(pred).values() {
            let total = binom(n, b) as f64;
            for k in 1..=a.min(b) {
                if b - k > n - a {
                    continue;
                }
                let p = (binom(a, k) * binom(n - a, b - k)) as f64 / total;
                let kf = k as f64;
                emi += p * kf / nf * (nf * kf / (a as f64 * b as f64)).ln();
            }
        }
    }
    emi
}

fn same_grouping(pred: &[usize], gold: &[usize]) -> bool {
    let n = gold.len();
    (0..n).all(|i| (0..n).all(|j| (gold[i] == gold[j]) == (pred[i] == pred[j])))
}

pub fn ami_reference(pred: &[usize], gold: &[usize]) -> f64 {
    if same_grouping(pred, gold) {
        return 1.0;
    }
    let emi = expected_mi_exact(pred, gold);
    let den = (entropy(pred) + entropy(gold)) / 2.0 - emi;
    if den.abs() < 1e-15 {
        return 0.0;
    }
    (mutual_information(pred, gold) - emi) / den
}

/// MCC from exact integer arithmetic, 0 when a marginal is empty.
pub fn mcc_reference(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let (tp, fp, fn_, tn) = (tp as i128, fp as i128, fn_ as i128, tn as i128);
    let prod = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if prod == 0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) as f64 / (prod as f64).sqrt()
}

pub fn f1_reference(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

/// Naive average linkage: every step recomputes every cluster-pair mean from
/// the original matrix. Same tie rule and strict threshold as the library.
pub fn naive_cluster(d: &[Vec<f64>], ids: &[String], threshold: f64) -> Vec<Vec<String>> {
    let n = ids.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[x] {
                    for &j in &clusters[y] {
                        s += d[i][j];
                    }
                }
                let link = s / (clusters[x].len() * clusters[y].len()) as f64;
                let kx = clusters[x].iter().map(|&i| ids[i].clone()).min().unwrap();
                let ky = clusters[y].iter().map(|&i| ids[i].clone()).min().unwrap();
                let key = if kx <= ky { (kx, ky) } else { (ky, kx) };
                let take = match &best {
                    None => true,
                    Some((bl, bk, _, _)) => {
                        link < bl - EPS || (link <= bl + EPS && key < *bk)
                    }
                };
                if take {
                    best = Some((link, key, x, y));
                }
            }
        }
        match best {
            Some((link, _, x, y)) if link < threshold - EPS => {
                let moved = clusters.remove(y);
                clusters[x].extend(moved);
            }
            _ => break,
        }
    }
    let mut out: Vec<Vec<String>> = clusters
        .into_iter()
        .map(|c| {
            let mut v: Vec<String> = c.into_iter().map(|i| ids[i].clone()).collect();
            v.sort();
            v
        })
        .collect();
    out.sort();
    out
}

/// Random symmetric distance matrix with zero diagonal. With `levels` set,
/// entries are drawn from `{0, 1/levels, ..., 1}` to force ties.
#[allow(clippy::needless_range_loop)]
pub fn random_distances<R: Rng>(rng: &mut R, n: usize, levels: Option<u32>) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = match levels {
                Some(l) => rng.random_range(0..=l) as f64 / l as f64,
                None => rng.random::<f64>(),
            };
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

pub fn question(id: &str, sids: &[String], relevance: &[f64]) -> QuestionRecord {
    QuestionRecord {
        question_id: id.to_owned(),
        question_text: format!("question {id}?"),
        sentences: sids
            .iter()
            .zip(relevance)
            .map(|(s, &r)| SentenceRecord {
                sentence_id: s.clone(),
                text: format!("sentence {s}"),
                relevance: r,
                source_url: None,
                answer: None,
            })
            .collect(),
    }
}

/// A worker who mostly follows `truth`, sometimes moves a sentence to another
/// group and sometimes marks it not-an-answer or hard.
pub fn noisy_worker<R: Rng>(rng: &mut R, id: &str, sids: &[String], truth: &[usize]) -> WorkerAnnotation {
    let k = truth.iter().max().map_or(1, |m| m + 2) as u32;
    let offset = rng.random_range(0..5u32);
    let assignments = sids
        .iter()
        .zip(truth)
        .map(|(s, &t)| {
            let roll: f64 = rng.random();
            let a = if roll < 0.07 {
                Assignment::NotAnswer
            } else if roll < 0.1 {
                Assignment::HardToGroup
            } else if roll < 0.3 {
                Assignment::Group(rng.random_range(0..k) + offset)
            } else {
                Assignment::Group(t as u32 + offset)
            };
            (s.clone(), a)
        })
        .collect();
    WorkerAnnotation {
        worker_id: id.to_owned(),
        assignments,
    }
}

/// Verifies the unanimity invariants of an aggregated partition directly
/// from the raw assignments. Returns a description of the first violation.
pub fn check_unanimity(p: &Partition, workers: &[WorkerAnnotation]) -> Result<(), String> {
    let group_of = |w: &WorkerAnnotation, s: &str| match w.assignments[s] {
        Assignment::Group(k) => Some(k),
        _ => None,
    };
    for s in p.kept_ids() {
        if workers.iter().any(|w| group_of(w, s).is_none()) {
            return Err(format!("kept sentence {s} is not grouped by every worker"));
        }
    }
    for (gi, g) in p.groups.iter().enumerate() {
        for (x, a) in g.iter().enumerate() {
            for b in &g[x + 1..] {
                if !workers.iter().all(|w| group_of(w, a) == group_of(w, b)) {
                    return Err(format!("intra-group pair ({a}, {b}) not unanimous same"));
                }
            }
            for h in &p.groups[gi + 1..] {
                for b in h {
                    if !workers.iter().all(|w| group_of(w, a) != group_of(w, b)) {
                        return Err(format!("inter-group pair ({a}, {b}) not unanimous different"));
                    }
                }
            }
        }
    }
    Ok(())
}
