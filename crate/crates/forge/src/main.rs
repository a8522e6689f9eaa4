use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medforge_core::cleanse::{balanced_sample, clean};
use medforge_core::eval::evaluate_task;
use medforge_core::knowledge::AliasLexicon;
use medforge_core::perturb::{IdentityTranslator, Strategy, Translator};
use medforge_core::stats::{corpus_stats, StatsReport};
use medforge_core::{KnowledgeBase, Task};
use medforge::backend::{Backend, EchoBackend, GoldReplayBackend, HttpBackend};
use medforge::config::{self, BackendKind, ForgeConfig, TranslatorKind};
use medforge::pipeline::run_pipeline;
use medforge::translate::HttpTranslator;
use medforge::{io, ops, ForgeError, Result};

#[derive(Parser)]
#[command(name = "forge", version, about = "Build, augment, serialize and evaluate medical dialogue corpora")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set pipeline.k_triples=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop short, media-bearing and low-entity dialogues, then anonymize.
    Clean(CleanArgs),
    /// Draw a balanced per-disease sample.
    Sample(SampleArgs),
    /// Label an unlabeled corpus from a human-labeled pool plus rules.
    PseudoLabel(PseudoArgs),
    /// Alias substitution, back-translation and random character edits.
    Perturb(PerturbArgs),
    /// Write NLU/DPL/NLG training samples as JSONL.
    Export(ExportArgs),
    /// Score one prediction per line against exported gold samples.
    Evaluate(EvaluateArgs),
    /// Run NLU -> DPL -> NLG against a backend and score every stage.
    Run(RunArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct CleanArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Knowledge base for the low-entity filter.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    min_utterances: Option<usize>,
    /// Also draw a balanced sample of this fraction.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SampleArgs {
    input: PathBuf,
    #[arg(long)]
    fraction: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PseudoArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PerturbArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of alias, bt, rm.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    translator: Option<String>,
    /// Recorded translations (JSONL) for `--translator fixture`.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    translator_url: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Nlu,
    Dpl,
    Nlg,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Nlu => Task::Nlu,
            TaskArg::Dpl => Task::Dpl,
            TaskArg::Nlg => Task::Nlg,
        }
    }
}

#[derive(Args)]
struct ExportArgs {
    input: PathBuf,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Tasks to export; all three by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    task: Vec<TaskArg>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// JSON report destination; the table always goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    corpus: PathBuf,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// http, echo or gold.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    backend_url: Option<String>,
    /// Exported samples replayed by `--backend gold`.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    oracle_nlu: bool,
    #[arg(long)]
    oracle_dpl: bool,
    #[arg(long, value_enum)]
    until: Option<TaskArg>,
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    corpus: PathBuf,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn set(overrides: &mut Vec<(String, toml::Value)>, key: &str, value: impl Into<toml::Value>) {
    overrides.push((key.to_string(), value.into()));
}

fn set_path(overrides: &mut Vec<(String, toml::Value)>, key: &str, value: &Option<PathBuf>) {
    if let Some(p) = value {
        set(overrides, key, p.display().to_string());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut overrides = cli
        .overrides
        .iter()
        .map(|s| config::parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(t) = cli.threads {
        set(&mut overrides, "threads", t as i64);
    }
    // Dedicated flags are applied after --set so they win.
    match &cli.command {
        Command::Clean(a) => {
            if let Some(n) = a.min_utterances {
                set(&mut overrides, "clean.min_utterances", n as i64);
            }
            if let Some(f) = a.fraction {
                set(&mut overrides, "clean.sample_fraction", f);
            }
            if let Some(s) = a.seed {
                set(&mut overrides, "clean.seed", s as i64);
            }
        }
        Command::Sample(a) => {
            if let Some(s) = a.seed {
                set(&mut overrides, "clean.seed", s as i64);
            }
        }
        Command::PseudoLabel(a) => {
            if let Some(d) = a.delta {
                set(&mut overrides, "pseudo.delta", d);
            }
            if let Some(l) = a.limit {
                set(&mut overrides, "pseudo.limit", l as i64);
            }
        }
        Command::Perturb(a) => {
            if let Some(s) = &a.strategies {
                let list: Vec<toml::Value> = s.iter().map(|x| toml::Value::String(x.clone())).collect();
                set(&mut overrides, "perturb.strategies", list);
            }
            if let Some(m) = &a.mode {
                set(&mut overrides, "perturb.mode", m.clone());
            }
            set_path(&mut overrides, "perturb.lexicon", &a.lexicon);
            if let Some(t) = &a.translator {
                set(&mut overrides, "perturb.translator", t.clone());
            }
            set_path(&mut overrides, "perturb.translator_fixture", &a.fixture);
            if let Some(u) = &a.translator_url {
                set(&mut overrides, "perturb.translator_url", u.clone());
            }
            if let Some(s) = a.seed {
                set(&mut overrides, "perturb.seed", s as i64);
            }
        }
        Command::Export(a) => {
            set_path(&mut overrides, "pipeline.kb_path", &a.kb);
            if let Some(f) = &a.format {
                set(&mut overrides, "pipeline.format", f.clone());
            }
        }
        Command::Run(a) => {
            set_path(&mut overrides, "pipeline.kb_path", &a.kb);
            if let Some(b) = &a.backend {
                set(&mut overrides, "pipeline.backend", b.clone());
            }
            if let Some(u) = &a.backend_url {
                set(&mut overrides, "pipeline.backend_url", u.clone());
            }
            set_path(&mut overrides, "pipeline.gold_path", &a.gold);
            if a.oracle_nlu {
                set(&mut overrides, "pipeline.oracle_nlu", true);
            }
            if a.oracle_dpl {
                set(&mut overrides, "pipeline.oracle_dpl", true);
            }
            if let Some(t) = a.until {
                set(&mut overrides, "pipeline.until", Task::from(t).as_str());
            }
        }
        Command::Evaluate(_) | Command::Stats(_) => {}
    }
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    let vocab = cfg.vocab.vocabulary();

    match cli.command {
        Command::Clean(a) => {
            let corpus = io::read_valid_corpus(&a.input, &vocab)?;
            let kb = a.kb.as_deref().map(io::read_kb).transpose()?;
            let mut out = clean(&corpus, kb.as_ref(), &cfg.clean.clean_config()?)?;
            if let Some(f) = cfg.clean.sample_fraction {
                out = balanced_sample(&out, f, cfg.clean.seed)?;
            }
            eprintln!("kept {} of {} dialogues", out.len(), corpus.len());
            io::write_corpus(&a.out, &out)
        }
        Command::Sample(a) => {
            let corpus = io::read_valid_corpus(&a.input, &vocab)?;
            let out = balanced_sample(&corpus, a.fraction, cfg.clean.seed)?;
            eprintln!("sampled {} of {} dialogues", out.len(), corpus.len());
            io::write_corpus(&a.out, &out)
        }
        Command::PseudoLabel(a) => {
            let pool = io::read_valid_corpus(&a.pool, &vocab)?;
            let unlabeled = io::read_valid_corpus(&a.unlabeled, &vocab)?;
            let rules = match &a.rules {
                Some(p) => io::read_rules(p, &vocab)?,
                None => medforge_core::rules::RuleSet::from_json("[]", &vocab)?,
            };
            let (out, tally) = ops::pseudo_label(&unlabeled, &pool, &rules, &cfg.pseudo.pseudo_config()?, cfg.threads)?;
            eprintln!(
                "labeled {} dialogues: {} utterances transferred, {} by rules, {} by default",
                out.len(),
                tally.transferred,
                tally.by_rules,
                tally.by_default
            );
            io::write_corpus(&a.out, &out)
        }
        Command::Perturb(a) => {
            let corpus = io::read_valid_corpus(&a.input, &vocab)?;
            let p = &cfg.perturb;
            let pcfg = p.perturb_config()?;
            let lexicon = match &p.lexicon {
                Some(path) => io::read_lexicon(path)?,
                None => AliasLexicon::new(),
            };
            let translator: Box<dyn Translator + Sync> = match p.translator {
                TranslatorKind::Identity => Box::new(IdentityTranslator),
                TranslatorKind::Fixture => {
                    let path = p.translator_fixture.as_deref().ok_or_else(|| {
                        ForgeError::Config("perturb.translator_fixture is required for the fixture translator".into())
                    })?;
                    Box::new(io::read_fixture_translator(path)?)
                }
                TranslatorKind::Http => {
                    let url = p.translator_url.as_deref().ok_or_else(|| {
                        ForgeError::Config("perturb.translator_url is required for the http translator".into())
                    })?;
                    Box::new(HttpTranslator::new(
                        url,
                        &p.source_lang,
                        &p.pivot_lang,
                        std::time::Duration::from_secs(p.request_timeout),
                        p.max_in_flight,
                    ))
                }
            };
            if pcfg.strategies.contains(&Strategy::AliasSubstitution) && lexicon.is_empty() {
                eprintln!("warning: alias substitution enabled with an empty lexicon");
            }
            let perturbed = ops::perturb(&corpus, &pcfg, &lexicon, translator.as_ref(), cfg.threads)?;
            let out = ops::merge_perturbed(&corpus, perturbed, p.mode);
            eprintln!("wrote {} dialogues ({:?} mode)", out.len(), p.mode);
            io::write_corpus(&a.out, &out)
        }
        Command::Export(a) => {
            let corpus = io::read_valid_corpus(&a.input, &vocab)?;
            let kb = load_kb(cfg.pipeline.kb_path.as_deref())?;
            let tasks: BTreeSet<Task> = if a.task.is_empty() {
                [Task::Nlu, Task::Dpl, Task::Nlg].into()
            } else {
                a.task.iter().map(|&t| t.into()).collect()
            };
            let sc = cfg.pipeline.sample_config();
            let mut samples = Vec::new();
            for t in tasks {
                samples.extend(ops::export(&corpus, &kb, t, cfg.pipeline.format, &sc, cfg.threads)?);
            }
            eprintln!("wrote {} samples", samples.len());
            io::write_samples(&a.out, &samples)
        }
        Command::Evaluate(a) => {
            let task: Task = a.task.into();
            let gold: Vec<_> = io::read_samples(&a.gold)?.into_iter().filter(|s| s.task == task).collect();
            let pred = io::read_predictions(&a.pred)?;
            let report = evaluate_task(&gold, &pred, task)?;
            print!("{}", report.to_table());
            if let Some(path) = &a.report {
                write_json(path, &report)?;
            }
            Ok(())
        }
        Command::Run(a) => {
            let corpus = io::read_valid_corpus(&a.corpus, &vocab)?;
            let kb = load_kb(cfg.pipeline.kb_path.as_deref())?;
            let backend = make_backend(&cfg)?;
            let mut sink = match &a.transcript {
                Some(p) => Some(fs::File::create(p).map_err(|e| ForgeError::io(p, e))?),
                None => None,
            };
            let outcome = run_pipeline(
                &corpus,
                &kb,
                &cfg.pipeline,
                backend.as_ref(),
                sink.as_mut().map(|f| f as &mut dyn std::io::Write),
            )?;
            for r in &outcome.reports {
                println!("{}", r.to_table());
            }
            if let Some(path) = &a.report {
                write_json(path, &outcome.reports)?;
            }
            Ok(())
        }
        Command::Stats(a) => {
            let corpus = io::read_valid_corpus(&a.corpus, &vocab)?;
            let report = corpus_stats(&corpus);
            if a.json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(|e| ForgeError::Config(e.to_string()))?);
            } else {
                print!("{}", stats_table(&report));
            }
            Ok(())
        }
    }
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase> {
    match path {
        Some(p) => io::read_kb(p),
        None => Ok(KnowledgeBase::default()),
    }
}

fn make_backend(cfg: &ForgeConfig) -> Result<Box<dyn Backend>> {
    let p = &cfg.pipeline;
    Ok(match p.backend {
        BackendKind::Echo => Box::new(EchoBackend),
        BackendKind::Gold => {
            let path = p
                .gold_path
                .as_deref()
                .ok_or_else(|| ForgeError::Config("pipeline.gold_path is required for the gold backend".into()))?;
            let gold = GoldReplayBackend::new(&io::read_samples(path)?);
            if gold.conflicts() > 0 {
                eprintln!("warning: {} gold samples share an input with a different target", gold.conflicts());
            }
            Box::new(gold)
        }
        BackendKind::Http => Box::new(HttpBackend::new(&p.backend_url, p.timeout(), p.max_retries)),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ForgeError::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| ForgeError::io(path, e))
}

fn stats_table(r: &StatsReport) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 9] = [
        ("dialogues", r.n_dialogues.to_string()),
        ("utterances", r.n_utterances.to_string()),
        ("characters", r.n_chars.to_string()),
        ("labels", r.n_labels.to_string()),
        ("utterances/dialogue", format!("{:.2}", r.utterances_per_dialogue.value())),
        ("characters/dialogue", format!("{:.2}", r.chars_per_dialogue.value())),
        ("characters/utterance", format!("{:.2}", r.chars_per_utterance.value())),
        ("labels/dialogue", format!("{:.2}", r.labels_per_dialogue.value())),
        ("labels/utterance", format!("{:.2}", r.labels_per_utterance.value())),
    ];
    for (k, v) in rows {
        s.push_str(&format!("{:<22}{:>12}\n", k, v));
    }
    if !r.label_distribution.is_empty() {
        s.push_str("\nlabel                   utterances\n");
        for (k, v) in &r.label_distribution {
            s.push_str(&format!("{:<22}{:>12}\n", k, v));
        }
    }
    if !r.slot_distribution.is_empty() {
        s.push_str("\nslot                distinct values\n");
        for (k, v) in &r.slot_distribution {
            s.push_str(&format!("{:<22}{:>12}\n", k, v));
        }
    }
    s
}
