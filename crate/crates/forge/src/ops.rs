//! Parallel front ends to the corpus operations. Output order always
//! matches input order, whatever the thread count.

use medforge_core::knowledge::AliasLexicon;
use medforge_core::perturb::{PerturbConfig, Perturber, Translator};
use medforge_core::pseudo::{PseudoConfig, PseudoLabeler, PseudoTally};
use medforge_core::rules::RuleSet;
use medforge_core::sample::{dialogue_samples, SampleConfig};
use medforge_core::{Corpus, KnowledgeBase, SampleFormat, Task, TaskSample};
use rayon::prelude::*;

use crate::config::PerturbMode;
use crate::error::{ForgeError, Result};

/// Suffix appended to the ids of perturbed copies in append mode.
pub const PERTURBED_ID_SUFFIX: &str = "#perturbed";

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ForgeError::Config(format!("thread pool: {}", e)))?;
    Ok(pool.install(f))
}

pub fn pseudo_label(
    unlabeled: &Corpus,
    pool: &Corpus,
    rules: &RuleSet,
    cfg: &PseudoConfig,
    threads: usize,
) -> Result<(Corpus, PseudoTally)> {
    let labeler = PseudoLabeler::from_corpus(pool, rules.clone(), cfg.clone())?;
    let selected = labeler.select(unlabeled)?;
    let labeled: Vec<_> = with_threads(threads, || selected.par_iter().map(|d| labeler.label_dialogue(d)).collect())?;
    let mut tally = PseudoTally::default();
    let mut dialogues = Vec::with_capacity(labeled.len());
    for (d, t) in labeled {
        tally += t;
        dialogues.push(d);
    }
    Ok((unlabeled.derive(dialogues), tally))
}

pub fn perturb(
    corpus: &Corpus,
    cfg: &PerturbConfig,
    lexicon: &AliasLexicon,
    translator: &(dyn Translator + Sync),
    threads: usize,
) -> Result<Corpus> {
    let p = Perturber::new(cfg, lexicon, corpus)?;
    let dialogues = with_threads(threads, || {
        corpus
            .dialogues
            .par_iter()
            .map(|d| p.perturb_dialogue(d, translator))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(corpus.derive(dialogues))
}

/// Combines originals and perturbed copies according to `mode`.
pub fn merge_perturbed(original: &Corpus, perturbed: Corpus, mode: PerturbMode) -> Corpus {
    match mode {
        PerturbMode::Replace => perturbed,
        PerturbMode::Append => {
            let mut dialogues = original.dialogues.clone();
            dialogues.extend(perturbed.dialogues.into_iter().map(|mut d| {
                d.id.push_str(PERTURBED_ID_SUFFIX);
                d
            }));
            original.derive(dialogues)
        }
    }
}

pub fn export(
    corpus: &Corpus,
    kb: &KnowledgeBase,
    task: Task,
    format: SampleFormat,
    cfg: &SampleConfig,
    threads: usize,
) -> Result<Vec<TaskSample>> {
    let per_dialogue = with_threads(threads, || {
        corpus
            .dialogues
            .par_iter()
            .map(|d| dialogue_samples(d, kb, task, format, cfg))
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(per_dialogue.into_iter().flatten().collect())
}
