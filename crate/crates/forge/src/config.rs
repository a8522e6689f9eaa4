//! The TOML configuration file.
//!
//! Values resolve in this order, first wins: `--set key=value` and dedicated
//! command-line flags, the `FORGE_BACKEND_URL` environment variable (for
//! `pipeline.backend_url` only), the config file, built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use medforge_core::cleanse::{AnonymizeRuleSpec, CleanConfig, DEFAULT_MEDIA_MARKERS};
use medforge_core::perturb::{OpMix, PerturbConfig, Strategy};
use medforge_core::pseudo::{MatchScope, PseudoConfig, DEFAULT_DELTA, DEFAULT_FALLBACK_LABEL};
use medforge_core::sample::SampleConfig;
use medforge_core::{SampleFormat, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::backend::Batching;
use crate::error::{ForgeError, Result};
use crate::io;

pub const BACKEND_URL_ENV: &str = "FORGE_BACKEND_URL";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeConfig {
    /// Worker threads for parallel stages; 0 picks one per core.
    pub threads: usize,
    pub vocab: VocabSection,
    pub clean: CleanSection,
    pub pseudo: PseudoSection,
    pub perturb: PerturbSection,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub intents: Option<Vec<String>>,
    pub actions: Option<Vec<String>>,
    pub slots: Option<Vec<String>>,
}

impl VocabSection {
    pub fn vocabulary(&self) -> Vocabulary {
        let d = Vocabulary::default();
        Vocabulary {
            intents: self.intents.clone().unwrap_or(d.intents),
            actions: self.actions.clone().unwrap_or(d.actions),
            slots: self.slots.clone().unwrap_or(d.slots),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanSection {
    pub min_utterances: usize,
    pub media_markers: Vec<String>,
    pub min_kb_entities: usize,
    pub anonymize_rules: Vec<AnonymizeRuleSpec>,
    /// Balanced per-disease sample drawn after cleaning.
    pub sample_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for CleanSection {
    fn default() -> Self {
        let d = CleanConfig::default();
        CleanSection {
            min_utterances: d.min_utterances,
            media_markers: DEFAULT_MEDIA_MARKERS.iter().map(|s| s.to_string()).collect(),
            min_kb_entities: d.min_kb_entities,
            anonymize_rules: Vec::new(),
            sample_fraction: None,
            seed: 0,
        }
    }
}

impl CleanSection {
    pub fn clean_config(&self) -> Result<CleanConfig> {
        let cfg = CleanConfig {
            min_utterances: self.min_utterances,
            media_markers: self.media_markers.clone(),
            min_kb_entities: self.min_kb_entities,
            anonymize_rules: io::anonymize_rules(&self.anonymize_rules)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoSection {
    pub delta: f64,
    pub limit: Option<usize>,
    pub default_label: String,
    pub scope: MatchScope,
}

impl Default for PseudoSection {
    fn default() -> Self {
        PseudoSection {
            delta: DEFAULT_DELTA,
            limit: None,
            default_label: DEFAULT_FALLBACK_LABEL.to_string(),
            scope: MatchScope::SameSpeaker,
        }
    }
}

impl PseudoSection {
    pub fn pseudo_config(&self) -> Result<PseudoConfig> {
        let cfg = PseudoConfig {
            delta: self.delta,
            limit: self.limit,
            default_label: self.default_label.clone(),
            scope: self.scope,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    /// Output is the originals followed by the perturbed copies.
    #[default]
    Append,
    /// Output is the perturbed copies only.
    Replace,
}

impl FromStr for PerturbMode {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "append" => Ok(PerturbMode::Append),
            "replace" => Ok(PerturbMode::Replace),
            other => Err(ForgeError::Config(format!("unknown perturb mode \"{}\"", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranslatorKind {
    #[default]
    Identity,
    Fixture,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSection {
    pub strategies: Vec<String>,
    pub rm_ops_per_dialogue: usize,
    pub rm_op_mix: OpMix,
    pub seed: u64,
    pub mode: PerturbMode,
    pub lexicon: Option<PathBuf>,
    pub translator: TranslatorKind,
    pub translator_fixture: Option<PathBuf>,
    pub translator_url: Option<String>,
    pub source_lang: String,
    pub pivot_lang: String,
    pub max_in_flight: usize,
    /// Seconds.
    pub request_timeout: u64,
}

impl Default for PerturbSection {
    fn default() -> Self {
        let d = PerturbConfig::default();
        PerturbSection {
            strategies: Strategy::ALL.iter().map(|s| s.key().to_string()).collect(),
            rm_ops_per_dialogue: d.rm_ops_per_dialogue,
            rm_op_mix: d.rm_op_mix,
            seed: d.seed,
            mode: PerturbMode::Append,
            lexicon: None,
            translator: TranslatorKind::Identity,
            translator_fixture: None,
            translator_url: None,
            source_lang: "zh".to_string(),
            pivot_lang: "en".to_string(),
            max_in_flight: 2,
            request_timeout: 60,
        }
    }
}

impl PerturbSection {
    pub fn perturb_config(&self) -> Result<PerturbConfig> {
        let strategies = self
            .strategies
            .iter()
            .map(|s| Strategy::from_str(s))
            .collect::<Result<_, _>>()?;
        let cfg = PerturbConfig {
            strategies,
            rm_ops_per_dialogue: self.rm_ops_per_dialogue,
            rm_op_mix: self.rm_op_mix,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Echo,
    /// Replays targets from `pipeline.gold_path`.
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendKind,
    pub backend_url: String,
    pub gold_path: Option<PathBuf>,
    pub oracle_nlu: bool,
    /// Only allowed when `until` is `nlg`.
    pub oracle_dpl: bool,
    /// Last stage to run.
    pub until: medforge_core::Task,
    pub kb_path: Option<PathBuf>,
    pub k_triples: usize,
    pub format: SampleFormat,
    pub max_history_chars: Option<usize>,
    pub max_new_tokens: usize,
    /// Seconds.
    pub request_timeout: u64,
    pub max_retries: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let b = Batching::default();
        PipelineConfig {
            backend: BackendKind::Http,
            backend_url: "http://127.0.0.1:8000".to_string(),
            gold_path: None,
            oracle_nlu: false,
            oracle_dpl: false,
            until: medforge_core::Task::Nlg,
            kb_path: None,
            k_triples: SampleConfig::default().k_triples,
            format: SampleFormat::Conditional,
            max_history_chars: None,
            max_new_tokens: b.max_new_tokens,
            request_timeout: 60,
            max_retries: 0,
            batch_size: b.batch_size,
            max_in_flight: b.max_in_flight,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.oracle_dpl && self.until != medforge_core::Task::Nlg {
            return Err(ForgeError::Config(
                "pipeline.oracle_dpl is only meaningful when the pipeline runs through nlg".to_string(),
            ));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(ForgeError::Config(
                "pipeline.batch_size and pipeline.max_in_flight must be >= 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            k_triples: self.k_triples,
            max_history_chars: self.max_history_chars,
        }
    }

    pub fn batching(&self) -> Batching {
        Batching {
            batch_size: self.batch_size,
            max_in_flight: self.max_in_flight,
            max_new_tokens: self.max_new_tokens,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout)
    }
}

/// Parses `key=value`. The value is read as a TOML literal when it parses as
/// one and as a bare string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ForgeError::Config(format!("override \"{}\" is not key=value", spec)))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ForgeError::Config(format!("empty key \"{}\"", key)))?;
    let mut node = table;
    for p in parts {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ForgeError::Config(format!("\"{}\" in \"{}\" is not a section", p, key)))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Layers file, environment and overrides into a typed config.
pub fn resolve(
    file_text: Option<&str>,
    env_backend_url: Option<&str>,
    overrides: &[(String, toml::Value)],
) -> Result<ForgeConfig> {
    let mut table: toml::Table = match file_text {
        Some(text) => toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    if let Some(url) = env_backend_url {
        set_path(&mut table, "pipeline.backend_url", toml::Value::String(url.to_string()))?;
    }
    for (key, value) in overrides {
        set_path(&mut table, key, value.clone())?;
    }
    let cfg: ForgeConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ForgeError::Config(e.to_string()))?;
    cfg.pipeline.validate()?;
    Ok(cfg)
}

/// Reads the config file (if any) and the environment.
pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<ForgeConfig> {
    let text = path.map(io::read_text).transpose()?;
    let env = std::env::var(BACKEND_URL_ENV).ok();
    resolve(text.as_deref(), env.as_deref(), overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file() {
        let cfg = resolve(None, None, &[]).unwrap();
        assert_eq!(cfg, ForgeConfig::default());
        assert_eq!(cfg.pipeline.batch_size, 16);
        assert_eq!(cfg.pipeline.max_in_flight, 2);
        assert_eq!(cfg.clean.min_utterances, 8);
        assert_eq!(cfg.pseudo.delta, 0.8);
    }

    #[test]
    fn precedence_flag_over_env_over_file() {
        let file = "[pipeline]\nbackend_url = \"http://file\"\nk_triples = 3\n";
        assert_eq!(resolve(Some(file), None, &[]).unwrap().pipeline.backend_url, "http://file");
        let env = resolve(Some(file), Some("http://env"), &[]).unwrap();
        assert_eq!(env.pipeline.backend_url, "http://env");
        assert_eq!(env.pipeline.k_triples, 3);
        let flag = parse_override("pipeline.backend_url=http://flag").unwrap();
        let cli = resolve(Some(file), Some("http://env"), &[flag]).unwrap();
        assert_eq!(cli.pipeline.backend_url, "http://flag");
    }

    #[test]
    fn overrides_are_typed() {
        let o = ["pseudo.delta=0.5", "pseudo.limit=10", "perturb.strategies=[\"alias\"]", "threads=4"]
            .iter()
            .map(|s| parse_override(s).unwrap())
            .collect::<Vec<_>>();
        let cfg = resolve(None, None, &o).unwrap();
        assert_eq!(cfg.pseudo.delta, 0.5);
        assert_eq!(cfg.pseudo.limit, Some(10));
        assert_eq!(cfg.perturb.strategies, vec!["alias".to_string()]);
        assert_eq!(cfg.threads, 4);
    }

    #[test]
    fn unknown_keys_and_bad_oracle_are_rejected() {
        assert!(resolve(Some("[pipeline]\nbackend_ur = \"x\"\n"), None, &[]).is_err());
        let o = vec![
            parse_override("pipeline.oracle_dpl=true").unwrap(),
            parse_override("pipeline.until=dpl").unwrap(),
        ];
        assert!(matches!(resolve(None, None, &o), Err(ForgeError::Config(_))));
    }
}
