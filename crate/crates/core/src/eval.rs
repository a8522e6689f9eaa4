//! Per-task evaluation of model outputs against gold task samples.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::SemanticLabel;
use crate::grammar::{parse_labels, unescape};
use crate::metrics::{self, bleu, category_counts, combination, macro_f1, meteor, micro_f1, rouge1, tokenize};
use crate::sample::{Task, TaskSample};
use crate::Error;

/// n-gram order of the value BLEU reported for NLU and DPL.
pub const VALUE_BLEU_ORDER: usize = 4;

pub const LABEL_MICRO_F1: &str = "label_micro_f1";
pub const LABEL_MACRO_F1: &str = "label_macro_f1";
pub const PAIR_MICRO_F1: &str = "pair_micro_f1";
pub const PAIR_MACRO_F1: &str = "pair_macro_f1";
pub const VALUE_BLEU: &str = "value_bleu";
pub const COMBINATION: &str = "combination";
pub const BLEU1: &str = "bleu1";
pub const BLEU4: &str = "bleu4";
pub const ROUGE1: &str = "rouge1";
pub const METEOR: &str = "meteor";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub n_turns: usize,
    pub n_gold_items: usize,
    pub n_pred_items: usize,
    pub malformed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metrics: BTreeMap<String, f64>,
    pub counts: ReportCounts,
    /// Granularity (`label` or `pair`) to per-category F1.
    pub breakdown: BTreeMap<String, BTreeMap<String, f64>>,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Text table with the column layout used for the three tasks:
    /// label Micro/Macro-F1, label-slot Micro/Macro-F1, value BLEU and
    /// Combination for NLU/DPL; BLEU1, BLEU4, ROUGE1 and METEOR for NLG.
    pub fn to_table(&self) -> String {
        let m = |k: &str| self.metric(k).unwrap_or(0.0);
        let mut out = String::new();
        match self.task {
            Task::Nlu | Task::Dpl => {
                let (a, b) = if self.task == Task::Nlu {
                    ("Intent", "Intent-Slot")
                } else {
                    ("Action", "Action-Slot")
                };
                let _ = writeln!(
                    out,
                    "{:<6} | {:>15} | {:>15} | {:>8} | {:>11}",
                    "Task", a, b, "Value", "Combination"
                );
                let _ = writeln!(
                    out,
                    "{:<6} | {:>15} | {:>15} | {:>8} | {:>11}",
                    "", "Micro/Macro-F1", "Micro/Macro-F1", "BLEU", ""
                );
                let _ = writeln!(
                    out,
                    "{:<6} | {:>15} | {:>15} | {:>8.2} | {:>11.2}",
                    self.task.as_str().to_uppercase(),
                    format!("{:.2}/{:.2}", m(LABEL_MICRO_F1), m(LABEL_MACRO_F1)),
                    format!("{:.2}/{:.2}", m(PAIR_MICRO_F1), m(PAIR_MACRO_F1)),
                    m(VALUE_BLEU),
                    m(COMBINATION)
                );
            }
            Task::Nlg => {
                let _ = writeln!(
                    out,
                    "{:<6} | {:>8} | {:>8} | {:>8} | {:>8}",
                    "Task", "BLEU1", "BLEU4", "ROUGE1", "METEOR"
                );
                let _ = writeln!(
                    out,
                    "{:<6} | {:>8.2} | {:>8.2} | {:>8.2} | {:>8.2}",
                    "NLG",
                    m(BLEU1),
                    m(BLEU4),
                    m(ROUGE1),
                    m(METEOR)
                );
            }
        }
        let c = &self.counts;
        let _ = writeln!(
            out,
            "turns {}  gold items {}  predicted items {}  malformed {}",
            c.n_turns, c.n_gold_items, c.n_pred_items, c.malformed_count
        );
        out
    }
}

fn pair_key(l: &SemanticLabel) -> String {
    format!("{} | {}", l.label, l.slot.as_deref().unwrap_or("-"))
}

/// Gold and predicted values paired by `(label, slot)`. Each predicted label
/// is used at most once; a gold value without a partner is scored against an
/// empty hypothesis. Predicted values with no gold partner are ignored.
pub fn align_values(gold: &[SemanticLabel], pred: &[SemanticLabel]) -> Vec<(String, String)> {
    let mut used = alloc::vec![false; pred.len()];
    let mut out = Vec::new();
    for g in gold {
        let Some(gv) = g.value.as_deref() else {
            continue;
        };
        let partner = pred
            .iter()
            .enumerate()
            .find(|(i, p)| !used[*i] && p.value.is_some() && p.label == g.label && p.slot == g.slot);
        let hyp = match partner {
            Some((i, p)) => {
                used[i] = true;
                p.value.clone().unwrap_or_default()
            }
            None => String::new(),
        };
        out.push((gv.to_string(), hyp));
    }
    out
}

fn breakdown<K: Ord + Clone + ToString>(
    gold: &[BTreeSet<K>],
    pred: &[BTreeSet<K>],
) -> Result<BTreeMap<String, f64>, Error> {
    Ok(category_counts(gold, pred)?
        .into_iter()
        .filter(|(_, (_, n_gold))| *n_gold > 0)
        .map(|(k, (c, _))| (k.to_string(), c.f1()))
        .collect())
}

/// Scores structured predictions (NLU, DPL) from parsed label lists.
pub fn score_labels(
    task: Task,
    gold: &[Vec<SemanticLabel>],
    pred: &[Vec<SemanticLabel>],
    malformed_count: usize,
) -> Result<EvalReport, Error> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment(format!(
            "{} gold turns but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let names = |ls: &[Vec<SemanticLabel>]| -> Vec<BTreeSet<String>> {
        ls.iter().map(|l| l.iter().map(|x| x.label.clone()).collect()).collect()
    };
    let pairs = |ls: &[Vec<SemanticLabel>]| -> Vec<BTreeSet<String>> {
        ls.iter().map(|l| l.iter().map(pair_key).collect()).collect()
    };
    let (gl, pl) = (names(gold), names(pred));
    let (gp, pp) = (pairs(gold), pairs(pred));

    let mut refs = Vec::new();
    let mut hyps = Vec::new();
    for (g, p) in gold.iter().zip(pred) {
        for (r, h) in align_values(g, p) {
            refs.push(tokenize(&r));
            hyps.push(tokenize(&h));
        }
    }
    let value_bleu = if refs.is_empty() {
        0.0
    } else {
        bleu(&refs, &hyps, VALUE_BLEU_ORDER)?
    };
    let pair_micro = micro_f1(&gp, &pp)?;

    let mut m = BTreeMap::new();
    m.insert(LABEL_MICRO_F1.to_string(), micro_f1(&gl, &pl)?);
    m.insert(LABEL_MACRO_F1.to_string(), macro_f1(&gl, &pl)?);
    m.insert(PAIR_MICRO_F1.to_string(), pair_micro);
    m.insert(PAIR_MACRO_F1.to_string(), macro_f1(&gp, &pp)?);
    m.insert(VALUE_BLEU.to_string(), value_bleu);
    m.insert(COMBINATION.to_string(), combination(pair_micro, value_bleu)?);

    let mut b = BTreeMap::new();
    b.insert("label".to_string(), breakdown(&gl, &pl)?);
    b.insert("pair".to_string(), breakdown(&gp, &pp)?);

    Ok(EvalReport {
        task,
        metrics: m,
        counts: ReportCounts {
            n_turns: gold.len(),
            n_gold_items: gold.iter().map(Vec::len).sum(),
            n_pred_items: pred.iter().map(Vec::len).sum(),
            malformed_count,
        },
        breakdown: b,
    })
}

/// Scores generated responses (NLG).
pub fn score_responses(refs: &[String], hyps: &[String]) -> Result<EvalReport, Error> {
    if refs.len() != hyps.len() {
        return Err(Error::Alignment(format!(
            "{} gold responses but {} predictions",
            refs.len(),
            hyps.len()
        )));
    }
    let r: Vec<Vec<String>> = refs.iter().map(|s| tokenize(s)).collect();
    let h: Vec<Vec<String>> = hyps.iter().map(|s| tokenize(s)).collect();
    let mut m = BTreeMap::new();
    m.insert(BLEU1.to_string(), bleu(&r, &h, 1)?);
    m.insert(BLEU4.to_string(), bleu(&r, &h, 4)?);
    m.insert(ROUGE1.to_string(), rouge1(&r, &h)?);
    m.insert(METEOR.to_string(), meteor(&r, &h)?);
    Ok(EvalReport {
        task: Task::Nlg,
        metrics: m,
        counts: ReportCounts {
            n_turns: refs.len(),
            ..Default::default()
        },
        breakdown: BTreeMap::new(),
    })
}

/// Evaluates raw model outputs against gold samples of one task.
///
/// NLU/DPL outputs are parsed leniently and unparseable segments counted as
/// malformed; NLG outputs are compared as text after unescaping.
pub fn evaluate_task(gold: &[TaskSample], predictions: &[String], task: Task) -> Result<EvalReport, Error> {
    if gold.len() != predictions.len() {
        return Err(Error::Alignment(format!(
            "{} gold samples but {} predictions",
            gold.len(),
            predictions.len()
        )));
    }
    if let Some(s) = gold.iter().find(|s| s.task != task) {
        return Err(Error::Alignment(format!(
            "gold sample {}:{} is a {} sample, expected {}",
            s.dialogue_id, s.turn_index, s.task, task
        )));
    }
    match task.label_kind() {
        Some(kind) => {
            let g: Vec<Vec<SemanticLabel>> = gold.iter().map(|s| parse_labels(&s.target_seq, kind).0).collect();
            let mut malformed = 0;
            let p: Vec<Vec<SemanticLabel>> = predictions
                .iter()
                .map(|s| {
                    let (labels, bad) = parse_labels(s, kind);
                    malformed += bad;
                    labels
                })
                .collect();
            score_labels(task, &g, &p, malformed)
        }
        None => {
            let refs: Vec<String> = gold.iter().map(|s| unescape(&s.target_seq)).collect();
            let hyps: Vec<String> = predictions.iter().map(|s| unescape(s)).collect();
            score_responses(&refs, &hyps)
        }
    }
}

/// Re-exported for report consumers.
pub use metrics::Counts;
