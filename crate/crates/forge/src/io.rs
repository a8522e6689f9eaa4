//! Reading and writing the on-disk formats.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use medforge_core::cleanse::{AnonymizeRule, AnonymizeRuleSpec};
use medforge_core::knowledge::{parse_alias_lexicon, AliasLexicon};
use medforge_core::perturb::FixtureTranslator;
use medforge_core::rules::RuleSet;
use medforge_core::{Corpus, Dialogue, Issue, KnowledgeBase, TaskSample, Vocabulary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))
}

/// Parses one JSON value per non-blank line. Errors carry the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| ForgeError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| ForgeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| ForgeError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| ForgeError::io(path, e))?;
    }
    w.flush().map_err(|e| ForgeError::io(path, e))
}

/// Loads a corpus without validating it.
pub fn read_corpus(path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let dialogues: Vec<Dialogue> = read_jsonl(path)?.into_iter().map(|(_, d)| d).collect();
    Ok(Corpus::new(dialogues).with_vocab(vocab.clone()))
}

/// Loads a corpus and rejects it if any dialogue has error-level issues.
/// The message lists every offender with its line number.
pub fn read_valid_corpus(path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let rows: Vec<(usize, Dialogue)> = read_jsonl(path)?;
    let lines: Vec<usize> = rows.iter().map(|(l, _)| *l).collect();
    let corpus = Corpus::new(rows.into_iter().map(|(_, d)| d).collect()).with_vocab(vocab.clone());
    let errors = corpus.errors();
    if errors.is_empty() {
        return Ok(corpus);
    }
    let message = errors
        .iter()
        .map(|issue| format!("line {}: {}", issue_line(&corpus, &lines, issue), issue))
        .collect::<Vec<_>>()
        .join("\n");
    Err(ForgeError::Parse {
        path: path.to_path_buf(),
        line: issue_line(&corpus, &lines, &errors[0]),
        message: format!("{} validation error(s)\n{}", errors.len(), message),
    })
}

fn issue_line(corpus: &Corpus, lines: &[usize], issue: &Issue) -> usize {
    corpus
        .dialogues
        .iter()
        .rposition(|d| d.id == issue.dialogue)
        .map_or(0, |i| lines[i])
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_jsonl(path, &corpus.dialogues)
}

/// `.jsonl` files hold one triple object per line; anything else is TSV.
pub fn read_kb(path: &Path) -> Result<KnowledgeBase> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "jsonl") {
        KnowledgeBase::parse_jsonl(&text)
    } else {
        KnowledgeBase::parse_tsv(&text)
    };
    parsed.map_err(|e| at_line(path, e))
}

pub fn read_rules(path: &Path, vocab: &Vocabulary) -> Result<RuleSet> {
    Ok(RuleSet::from_json(&read_text(path)?, vocab)?)
}

pub fn read_lexicon(path: &Path) -> Result<AliasLexicon> {
    parse_alias_lexicon(&read_text(path)?).map_err(|e| at_line(path, e))
}

fn at_line(path: &Path, e: medforge_core::Error) -> ForgeError {
    match e {
        medforge_core::Error::Parse { line, message } => ForgeError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other.into(),
    }
}

/// One recorded round trip: `source` translates to `pivot`, which
/// translates back to `result`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub source: String,
    pub pivot: String,
    pub result: String,
}

pub fn read_fixture_translator(path: &Path) -> Result<FixtureTranslator> {
    let mut t = FixtureTranslator::default();
    for (_, r) in read_jsonl::<TranslationRecord>(path)? {
        t.record(&r.source, &r.pivot, &r.result);
    }
    Ok(t)
}

pub fn read_samples(path: &Path) -> Result<Vec<TaskSample>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, s)| s).collect())
}

pub fn write_samples(path: &Path, samples: &[TaskSample]) -> Result<()> {
    write_jsonl(path, samples)
}

/// One prediction per line. A trailing newline does not add an empty
/// prediction.
pub fn read_predictions(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    Ok(split_lines(&text))
}

pub fn split_lines(text: &str) -> Vec<String> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if text.is_empty() {
        return Vec::new();
    }
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect()
}

pub fn write_predictions(path: &Path, predictions: &[String]) -> Result<()> {
    let mut text = String::new();
    for p in predictions {
        text.push_str(p);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| ForgeError::io(path, e))
}

pub fn anonymize_rules(specs: &[AnonymizeRuleSpec]) -> Result<Vec<AnonymizeRule>> {
    Ok(specs.iter().map(AnonymizeRule::from_spec).collect::<Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_lines() {
        assert_eq!(split_lines(""), Vec::<String>::new());
        assert_eq!(split_lines("a\n"), vec!["a"]);
        assert_eq!(split_lines("a\n\nb"), vec!["a", "", "b"]);
        assert_eq!(split_lines("\n"), vec![""]);
        assert_eq!(split_lines("x\r\ny\r\n"), vec!["x", "y"]);
    }
}
