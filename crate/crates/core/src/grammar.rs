//! Fixed text grammar for task sequences.
//!
//! ```text
//! history  := turn (" " turn)*
//! turn     := ("[PATIENT]" | "[DOCTOR]") " " text
//! labels   := label (" ; " label)*
//! label    := name " | " slot " | " value      absent slot/value => "-"
//! triples  := head " # " relation " # " tail (" ; " ...)*
//! ```
//!
//! Free text is escaped with a backslash before `\ [ ] | ; # -`, newlines
//! become `\n`, and whitespace at either end of a field is escaped, so no
//! section tag or delimiter can appear inside a field.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{LabelKind, SemanticLabel};
use crate::knowledge::KnowledgeTriple;

pub const PATIENT_TAG: &str = "[PATIENT]";
pub const DOCTOR_TAG: &str = "[DOCTOR]";
pub const NLU_TAG: &str = "[NLU]";
pub const KB_TAG: &str = "[KB]";
pub const DPL_TAG: &str = "[DPL]";
pub const RESP_TAG: &str = "[RESP]";

pub const FIELD_SEP: &str = " | ";
pub const ITEM_SEP: &str = " ; ";
pub const TRIPLE_SEP: &str = " # ";
pub const ABSENT: &str = "-";

const SPECIAL: [char; 7] = ['\\', '[', ']', '|', ';', '#', '-'];

/// Escapes one free-text field.
pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let n = text.chars().count();
    for (i, c) in text.chars().enumerate() {
        match c {
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if SPECIAL.contains(&c) => {
                out.push('\\');
                out.push(c);
            }
            c if c.is_whitespace() && (i == 0 || i + 1 == n) => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape`]. A dangling backslash is kept literally.
pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn render_optional(field: Option<&str>) -> String {
    match field {
        Some(s) => escape(s),
        None => String::from(ABSENT),
    }
}

pub fn serialize_label(label: &SemanticLabel) -> String {
    let mut out = escape(&label.label);
    out.push_str(FIELD_SEP);
    out.push_str(&render_optional(label.slot.as_deref()));
    out.push_str(FIELD_SEP);
    out.push_str(&render_optional(label.value.as_deref()));
    out
}

/// Labels in their given order joined by `" ; "`; empty input gives `""`.
pub fn serialize_labels(labels: &[SemanticLabel]) -> String {
    let parts: Vec<String> = labels.iter().map(serialize_label).collect();
    parts.join(ITEM_SEP)
}

pub fn serialize_triples(triples: &[KnowledgeTriple]) -> String {
    let parts: Vec<String> = triples
        .iter()
        .map(|t| {
            let mut s = escape(&t.head);
            s.push_str(TRIPLE_SEP);
            s.push_str(&escape(&t.relation));
            s.push_str(TRIPLE_SEP);
            s.push_str(&escape(&t.tail));
            s
        })
        .collect();
    parts.join(ITEM_SEP)
}

/// A character of escaped text together with whether it was escaped.
#[derive(Clone, Copy)]
struct Tok {
    c: char,
    escaped: bool,
}

fn tokenize(text: &str) -> Vec<Tok> {
    let mut out = Vec::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(next) = chars.next() {
                out.push(Tok { c: next, escaped: true });
            } else {
                out.push(Tok { c, escaped: false });
            }
        } else {
            out.push(Tok { c, escaped: false });
        }
    }
    out
}

fn split_on(toks: &[Tok], sep: char) -> Vec<&[Tok]> {
    toks.split(|t| !t.escaped && t.c == sep).collect()
}

fn trim(mut toks: &[Tok]) -> &[Tok] {
    while let [first, rest @ ..] = toks {
        if !first.escaped && first.c.is_whitespace() {
            toks = rest;
        } else {
            break;
        }
    }
    while let [rest @ .., last] = toks {
        if !last.escaped && last.c.is_whitespace() {
            toks = rest;
        } else {
            break;
        }
    }
    toks
}

fn decode(toks: &[Tok]) -> String {
    toks.iter()
        .map(|t| match (t.escaped, t.c) {
            (true, 'n') => '\n',
            (true, 'r') => '\r',
            (true, 't') => '\t',
            (_, c) => c,
        })
        .collect()
}

fn is_absent(toks: &[Tok]) -> bool {
    matches!(toks, [t] if !t.escaped && t.c == '-')
}

fn parse_optional(toks: &[Tok]) -> Option<String> {
    if is_absent(toks) {
        None
    } else {
        Some(decode(toks))
    }
}

/// Parses one `name | slot | value` segment.
fn parse_segment(toks: &[Tok], kind: LabelKind) -> Option<SemanticLabel> {
    let fields = split_on(toks, '|');
    if fields.len() != 3 {
        return None;
    }
    let name = trim(fields[0]);
    let slot = trim(fields[1]);
    let value = trim(fields[2]);
    if name.is_empty() || slot.is_empty() || is_absent(name) {
        return None;
    }
    let slot = parse_optional(slot);
    let value = parse_optional(value);
    if slot.is_none() && value.is_some() {
        return None;
    }
    Some(SemanticLabel {
        kind,
        label: decode(name),
        slot,
        value,
    })
}

/// Lenient inverse of [`serialize_labels`].
///
/// Splits on unescaped `;`, skips empty segments, and counts segments that
/// do not parse. Never fails. `kind` is attached to every parsed label since
/// the grammar does not carry it.
pub fn parse_labels(text: &str, kind: LabelKind) -> (Vec<SemanticLabel>, usize) {
    let toks = tokenize(text);
    let mut labels = Vec::new();
    let mut malformed = 0;
    for seg in split_on(&toks, ';') {
        let seg = trim(seg);
        if seg.is_empty() {
            continue;
        }
        match parse_segment(seg, kind) {
            Some(l) => labels.push(l),
            None => malformed += 1,
        }
    }
    (labels, malformed)
}

/// Whether `text` contains any section or role tag verbatim.
pub fn contains_tag(text: &str) -> bool {
    [PATIENT_TAG, DOCTOR_TAG, NLU_TAG, KB_TAG, DPL_TAG, RESP_TAG]
        .iter()
        .any(|t| text.contains(t))
}
