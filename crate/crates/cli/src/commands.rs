use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use consolidate_core::aggregation::{aggregate_dataset, AggregationReport};
use consolidate_core::agreement::annotation_quality;
use consolidate_core::clustering::{
    agglomerative_cluster, consolidate_scores, select_cluster_threshold, to_distance,
    ClusterObjective,
};
use consolidate_core::io;
use consolidate_core::metrics::{
    evaluate_classification, evaluate_grouping, EvalReport, GroupingAggregate,
};
use consolidate_core::scoring::{
    score_question, select_pair_threshold, symmetrize, PairObjective, ScoreMatrix, Scorer,
};
use consolidate_core::split::{split_dataset, DatasetSplit, SplitName};
use consolidate_core::stats::corpus_stats;
use consolidate_core::{round6, GoldSet, PairLabel, QuestionRecord};

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse<T: std::str::FromStr<Err = String>>(value: Option<&str>, default: T) -> Result<T> {
    value.map_or(Ok(default), |v| v.parse().map_err(CliError::Usage))
}

fn load_questions(cfg: &RunConfig) -> Result<Vec<QuestionRecord>> {
    let qs = io::load_questions(RunConfig::require(&cfg.questions, "questions")?)?;
    if qs.is_empty() {
        return Err(usage("questions file contains no questions"));
    }
    Ok(qs)
}

/// Gold partitions from `--gold`, or aggregated from `--annotations`.
fn load_gold(
    cfg: &RunConfig,
    questions: Option<&[QuestionRecord]>,
) -> Result<(GoldSet, Option<AggregationReport>)> {
    if let Some(path) = &cfg.gold {
        return Ok((io::load_partitions(path)?, None));
    }
    match (&cfg.annotations, questions) {
        (Some(path), Some(qs)) => {
            let annotations = io::load_annotations(path)?;
            let (gold, report) = aggregate_dataset(qs, &annotations)?;
            Ok((gold, Some(report)))
        }
        _ => Err(usage(
            "gold partitions required: pass --gold, or --questions with --annotations",
        )),
    }
}

fn build_scorer(cfg: &RunConfig) -> Result<Scorer> {
    let name = match (&cfg.scorer, &cfg.scores) {
        (Some(s), _) => s.as_str(),
        (None, Some(_)) => "precomputed",
        (None, None) => return Err(usage("missing required option --scorer")),
    };
    Ok(match name {
        "exact_norm" => Scorer::ExactNorm,
        "token_jaccard" => Scorer::TokenJaccard,
        "embed_cosine" => Scorer::EmbedCosine(io::load_embeddings(RunConfig::require(
            &cfg.embeddings,
            "embeddings",
        )?)?),
        "precomputed" => {
            Scorer::Precomputed(io::load_scores(RunConfig::require(&cfg.scores, "scores")?)?)
        }
        other => {
            return Err(usage(format!(
                "unknown scorer {other:?} (expected exact_norm, token_jaccard, embed_cosine or precomputed)"
            )))
        }
    })
}

fn get_split(cfg: &RunConfig, ids: &[String]) -> Result<DatasetSplit> {
    match &cfg.splits {
        Some(path) => Ok(io::load_splits(path)?),
        None => Ok(split_dataset(ids, cfg.seed())?),
    }
}

fn split_name(cfg: &RunConfig, default: SplitName) -> Result<SplitName> {
    parse(cfg.split.as_deref(), default)
}

/// Ids to process: the `--split` part when given, else every gold question,
/// else every question.
fn selected_ids(
    cfg: &RunConfig,
    gold: Option<&GoldSet>,
    questions: Option<&[QuestionRecord]>,
) -> Result<Vec<String>> {
    let all: Vec<String> = match (gold, questions) {
        (Some(g), _) => g.keys().cloned().collect(),
        (None, Some(qs)) => qs.iter().map(|q| q.question_id.clone()).collect(),
        (None, None) => return Err(usage("nothing to process: pass --gold or --questions")),
    };
    if cfg.split.is_none() {
        return Ok(all);
    }
    let split = get_split(cfg, &all)?;
    Ok(split.get(split_name(cfg, SplitName::Test)?).to_vec())
}

/// Scores each question in `ids`, restricted to its gold sentences when a
/// gold partition is known.
fn score_many(
    scorer: &Scorer,
    questions: Option<&[QuestionRecord]>,
    gold: Option<&GoldSet>,
    ids: &[String],
) -> Result<Vec<ScoreMatrix>> {
    let by_id: HashMap<&str, &QuestionRecord> = questions
        .unwrap_or_default()
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect();
    let matrices = ids
        .par_iter()
        .map(|qid| -> Result<ScoreMatrix> {
            let partition = gold.and_then(|g| g.get(qid));
            if let Some(q) = by_id.get(qid.as_str()) {
                let q = match partition {
                    Some(p) => q.restricted_to(p),
                    None => (*q).clone(),
                };
                return Ok(score_question(&q, scorer)?);
            }
            match (scorer, partition) {
                (Scorer::Precomputed(table), Some(p)) => {
                    Ok(table.matrix(qid, p.kept_ids().map(str::to_owned).collect())?)
                }
                (Scorer::Precomputed(table), None) => {
                    let raw = table.matrices.get(qid).ok_or_else(|| {
                        usage(format!("no precomputed scores for question {qid}"))
                    })?;
                    Ok(table.matrix(qid, raw.order.clone())?)
                }
                _ => Err(usage(format!("question {qid} is not in --questions"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(matrices)
}

fn load_inputs(cfg: &RunConfig) -> Result<Option<Vec<QuestionRecord>>> {
    cfg.questions.as_ref().map(|_| load_questions(cfg)).transpose()
}

#[derive(Debug, Serialize, Deserialize)]
struct Thresholds {
    pair_threshold: f64,
    cluster_threshold: f64,
    objective: PairObjective,
    validation_value: f64,
    cluster_objective: ClusterObjective,
    cluster_validation_value: f64,
}

fn thresholds_from(cfg: &RunConfig) -> Result<Option<Thresholds>> {
    cfg.thresholds
        .as_deref()
        .map(|p| io::read_json(p).map_err(CliError::from))
        .transpose()
}

fn format_table(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

fn format_tsv(rows: &[(&str, String)]) -> String {
    let mut out = String::from("metric\tvalue\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k}\t{v}");
    }
    out
}

pub fn stats(cfg: &RunConfig) -> Result<()> {
    let questions = load_questions(cfg)?;
    let (gold, aggregated) = load_gold(cfg, Some(&questions))?;
    let questions: Vec<QuestionRecord> = if aggregated.is_some() {
        questions
            .into_iter()
            .filter(|q| gold.contains_key(&q.question_id))
            .collect()
    } else {
        questions
    };
    let mut report = corpus_stats(&questions, &gold)?;
    if let Some(path) = &cfg.annotations {
        report.annotation_quality = Some(annotation_quality(&io::load_annotations(path)?)?);
    }
    let report = report.rounded();
    let format = cfg.format.as_deref().unwrap_or("table");
    let (text, ext) = match format {
        "table" => (format_table(&report.rows()), "txt"),
        "tsv" => (format_tsv(&report.rows()), "tsv"),
        "json" => {
            let mut s = serde_json::to_string_pretty(&report)
                .map_err(|e| usage(e.to_string()))?;
            s.push('\n');
            (s, "json")
        }
        other => return Err(usage(format!("unknown format {other:?} (expected table, json or tsv)"))),
    };
    print!("{text}");
    if cfg.out.is_some() {
        let path = cfg.out_dir()?.join(format!("stats.{ext}"));
        std::fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn aggregate(cfg: &RunConfig) -> Result<()> {
    let questions = load_questions(cfg)?;
    let annotations = io::load_annotations(RunConfig::require(&cfg.annotations, "annotations")?)?;
    let (gold, report) = aggregate_dataset(&questions, &annotations)?;
    let out = cfg.out_dir()?;
    io::write_partitions(&out.join("partitions.jsonl"), &gold)?;
    io::write_json(&out.join("aggregation_report.json"), &report)?;
    let kept: Vec<QuestionRecord> = questions
        .into_iter()
        .filter(|q| gold.contains_key(&q.question_id))
        .collect();
    io::write_questions(&out.join("questions.jsonl"), &kept)?;
    println!(
        "kept {} of {} questions, {} of {} eligible sentences",
        report.n_kept_questions,
        report.n_questions,
        report.n_kept_sentences,
        report.n_eligible_sentences
    );
    Ok(())
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let ids: Vec<String> = match &cfg.gold {
        Some(path) => io::load_partitions(path)?.keys().cloned().collect(),
        None => load_questions(cfg)?
            .into_iter()
            .map(|q| q.question_id)
            .collect(),
    };
    let split = split_dataset(&ids, cfg.seed())?;
    io::write_splits(&cfg.out_dir()?.join("splits.json"), &split)?;
    println!(
        "train {} / validation {} / test {} (seed {})",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.seed
    );
    Ok(())
}

pub fn score(cfg: &RunConfig) -> Result<()> {
    let questions = load_inputs(cfg)?;
    let gold = cfg.gold.as_deref().map(io::load_partitions).transpose()?;
    let scorer = build_scorer(cfg)?;
    let ids = selected_ids(cfg, gold.as_ref(), questions.as_deref())?;
    let matrices = score_many(&scorer, questions.as_deref(), gold.as_ref(), &ids)?;
    io::write_scores(&cfg.out_dir()?.join("scores.jsonl"), &matrices)?;
    println!("scored {} questions with {}", matrices.len(), scorer.name());
    Ok(())
}

fn sweep_thresholds(
    cfg: &RunConfig,
    scorer: &Scorer,
    questions: Option<&[QuestionRecord]>,
    gold: &GoldSet,
    validation: &[String],
) -> Result<Thresholds> {
    let pair_objective: PairObjective = parse(cfg.objective.as_deref(), PairObjective::default())?;
    let cluster_objective: ClusterObjective =
        parse(cfg.cluster_objective.as_deref(), ClusterObjective::default())?;
    let scores: Vec<ScoreMatrix> = score_many(scorer, questions, Some(gold), validation)?
        .iter()
        .map(symmetrize)
        .collect();
    let pair = select_pair_threshold(&scores, gold, pair_objective)?;
    let distances = scores
        .iter()
        .map(to_distance)
        .collect::<consolidate_core::Result<Vec<_>>>()?;
    let cluster = select_cluster_threshold(&distances, gold, cluster_objective)?;
    info!(
        "selected pair threshold {} ({pair_objective:?} {}) and cluster threshold {} ({cluster_objective:?} {})",
        pair.threshold, pair.value, cluster.threshold, cluster.value
    );
    Ok(Thresholds {
        pair_threshold: pair.threshold,
        cluster_threshold: cluster.threshold,
        objective: pair_objective,
        validation_value: round6(pair.value),
        cluster_objective,
        cluster_validation_value: round6(cluster.value),
    })
}

fn print_thresholds(t: &Thresholds) {
    println!(
        "pair threshold {:.2} (validation {:?} {:.1})",
        t.pair_threshold,
        t.objective,
        100.0 * t.validation_value
    );
    println!(
        "cluster threshold {:.2} (validation {:?} {:.1})",
        t.cluster_threshold,
        t.cluster_objective,
        100.0 * t.cluster_validation_value
    );
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let questions = load_inputs(cfg)?;
    let (gold, _) = load_gold(cfg, questions.as_deref())?;
    let scorer = build_scorer(cfg)?;
    let ids: Vec<String> = gold.keys().cloned().collect();
    let split = get_split(cfg, &ids)?;
    let t = sweep_thresholds(cfg, &scorer, questions.as_deref(), &gold, &split.validation)?;
    io::write_json(&cfg.out_dir()?.join("thresholds.json"), &t)?;
    print_thresholds(&t);
    Ok(())
}

fn cluster_threshold(cfg: &RunConfig) -> Result<f64> {
    if let Some(t) = cfg.cluster_threshold {
        return Ok(t);
    }
    thresholds_from(cfg)?
        .map(|t| t.cluster_threshold)
        .ok_or_else(|| usage("missing required option --cluster-threshold (or --thresholds)"))
}

fn pair_threshold(cfg: &RunConfig) -> Result<Option<f64>> {
    if let Some(t) = cfg.pair_threshold {
        return Ok(Some(t));
    }
    Ok(thresholds_from(cfg)?.map(|t| t.pair_threshold))
}

pub fn cluster(cfg: &RunConfig) -> Result<()> {
    let questions = load_inputs(cfg)?;
    let gold = cfg.gold.as_deref().map(io::load_partitions).transpose()?;
    let scorer = build_scorer(cfg)?;
    let threshold = cluster_threshold(cfg)?;
    let ids = selected_ids(cfg, gold.as_ref(), questions.as_deref())?;
    let preds: GoldSet = score_many(&scorer, questions.as_deref(), gold.as_ref(), &ids)?
        .par_iter()
        .map(|m| {
            let d = to_distance(&symmetrize(m))?;
            Ok((m.question_id.clone(), agglomerative_cluster(&d, threshold)?))
        })
        .collect::<consolidate_core::Result<Vec<_>>>()?
        .into_iter()
        .collect();
    io::write_partitions(&cfg.out_dir()?.join("partitions.jsonl"), &preds)?;
    println!("clustered {} questions at threshold {threshold:.2}", preds.len());
    Ok(())
}

fn report_rows(reports: &[&EvalReport]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.1}"));
    let mut out = format!(
        "{:<16}{:>8}{:>8}{:>8}{:>8}{:>12}{:>10}\n",
        "setting", "F1", "MCC", "ARI", "AMI", "questions", "pairs"
    );
    for r in reports {
        let setting = serde_json::to_value(r.setting)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{setting:<16}{:>8}{:>8}{:>8}{:>8}{:>12}{:>10}",
            cell(r.f1),
            cell(r.mcc),
            cell(r.ari),
            cell(r.ami),
            r.n_questions,
            r.n_pairs
        );
    }
    out
}

fn write_report(out: &Path, report: &EvalReport) -> Result<()> {
    let name = match report.setting {
        consolidate_core::metrics::EvalSetting::Classification => "eval_report.classification.json",
        consolidate_core::metrics::EvalSetting::Grouping => "eval_report.grouping.json",
    };
    Ok(io::write_json(&out.join(name), report)?)
}

fn pair_predictions(scores: &[ScoreMatrix], threshold: f64) -> IndexMap<String, Vec<PairLabel>> {
    scores
        .iter()
        .map(|m| {
            (
                m.question_id.clone(),
                consolidate_core::scoring::classify_pairs(&symmetrize(m), threshold),
            )
        })
        .collect()
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let questions = load_inputs(cfg)?;
    let (gold, _) = load_gold(cfg, questions.as_deref())?;
    let all: Vec<String> = gold.keys().cloned().collect();
    let ids = get_split(cfg, &all)?
        .get(split_name(cfg, SplitName::Test)?)
        .to_vec();
    let aggregate: GroupingAggregate = parse(cfg.aggregate.as_deref(), GroupingAggregate::default())?;
    let stored = thresholds_from(cfg)?;
    let has_scores = cfg.scorer.is_some() || cfg.scores.is_some();
    let scores = if has_scores {
        Some(score_many(&build_scorer(cfg)?, questions.as_deref(), Some(&gold), &ids)?)
    } else {
        None
    };

    let mut reports = Vec::new();
    if let (Some(scores), Some(t)) = (&scores, pair_threshold(cfg)?) {
        let preds = pair_predictions(scores, t);
        reports.push(evaluate_classification(&preds, &gold, &ids)?.with_threshold("pair_threshold", t));
    }
    let grouping_preds: Option<(GoldSet, Option<f64>)> = if let Some(path) = &cfg.pred {
        Some((io::load_partitions(path)?, None))
    } else if let (Some(scores), Some(t)) = (
        &scores,
        cfg.cluster_threshold.or(stored.as_ref().map(|s| s.cluster_threshold)),
    ) {
        let preds = scores
            .iter()
            .map(|m| {
                let d = to_distance(&symmetrize(m))?;
                Ok((m.question_id.clone(), agglomerative_cluster(&d, t)?))
            })
            .collect::<consolidate_core::Result<GoldSet>>()?;
        Some((preds, Some(t)))
    } else {
        None
    };
    if let Some((preds, t)) = grouping_preds {
        let mut r = evaluate_grouping(&preds, &gold, &ids, aggregate)?;
        if let Some(t) = t {
            r = r.with_threshold("cluster_threshold", t);
        }
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(usage(
            "nothing to evaluate: pass --pred, or a scorer with --pair-threshold/--cluster-threshold/--thresholds",
        ));
    }
    let out = cfg.out_dir()?;
    for r in &reports {
        write_report(&out, r)?;
    }
    print!("{}", report_rows(&reports.iter().collect::<Vec<_>>()));
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let questions = load_questions(cfg)?;
    let (gold, aggregation) = load_gold(cfg, Some(&questions))?;
    let out = cfg.out_dir()?;
    if let Some(report) = &aggregation {
        io::write_partitions(&out.join("gold_partitions.jsonl"), &gold)?;
        io::write_json(&out.join("aggregation_report.json"), report)?;
    }
    let ids: Vec<String> = gold.keys().cloned().collect();
    let split = get_split(cfg, &ids)?;
    io::write_splits(&out.join("splits.json"), &split)?;

    let scorer = build_scorer(cfg)?;
    if matches!(scorer, Scorer::Precomputed(_)) {
        // fail on incomplete score files even when the gap is in the train split
        score_many(&scorer, Some(&questions), Some(&gold), &split.train)?;
    }
    let t = sweep_thresholds(cfg, &scorer, Some(&questions), &gold, &split.validation)?;
    io::write_json(&out.join("thresholds.json"), &t)?;

    let test_scores = score_many(&scorer, Some(&questions), Some(&gold), &split.test)?;
    io::write_scores(&out.join("scores.jsonl"), &test_scores)?;
    let results = test_scores
        .par_iter()
        .map(|m| consolidate_scores(m, t.pair_threshold, t.cluster_threshold))
        .collect::<consolidate_core::Result<Vec<_>>>()?;

    let mut pair_preds = IndexMap::new();
    let mut group_preds = GoldSet::new();
    for (m, c) in test_scores.iter().zip(results) {
        pair_preds.insert(m.question_id.clone(), c.pair_labels);
        group_preds.insert(m.question_id.clone(), c.partition);
    }
    io::write_partitions(&out.join("partitions.jsonl"), &group_preds)?;

    let aggregate: GroupingAggregate = parse(cfg.aggregate.as_deref(), GroupingAggregate::default())?;
    let classification = evaluate_classification(&pair_preds, &gold, &split.test)?
        .with_threshold("pair_threshold", t.pair_threshold);
    let grouping = evaluate_grouping(&group_preds, &gold, &split.test, aggregate)?
        .with_threshold("cluster_threshold", t.cluster_threshold);
    write_report(&out, &classification)?;
    write_report(&out, &grouping)?;

    println!("scorer {}", scorer.name());
    print_thresholds(&t);
    print!("{}", report_rows(&[&classification, &grouping]));
    Ok(())
}
