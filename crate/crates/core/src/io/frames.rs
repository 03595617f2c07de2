//! Frame annotations, one JSON record per line with 0-based inclusive spans.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Argument, FrameParse, Ontology, Sentence, Supervision, Target, Token};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    tokens: Vec<String>,
    lemmas: Vec<String>,
    pos: Vec<String>,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Annotation {
    target: [usize; 2],
    lu: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame: Option<String>,
    #[serde(default)]
    arguments: Vec<ArgumentRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArgumentRecord {
    start: usize,
    end: usize,
    role: String,
}

fn records(text: &str, origin: &Path) -> Result<Vec<(usize, Record)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(line).map_err(|e| Error::parse(origin, k + 1, e.to_string()))?;
        if r.tokens.len() != r.lemmas.len() || r.tokens.len() != r.pos.len() {
            return Err(Error::parse(
                origin,
                k + 1,
                format!(
                    "record `{}`: {} tokens, {} lemmas, {} POS tags",
                    r.id,
                    r.tokens.len(),
                    r.lemmas.len(),
                    r.pos.len()
                ),
            ));
        }
        if r.tokens.is_empty() {
            return Err(Error::parse(origin, k + 1, format!("record `{}` has no tokens", r.id)));
        }
        out.push((k + 1, r));
    }
    Ok(out)
}

fn tokens(r: &Record) -> Vec<Token> {
    r.tokens
        .iter()
        .zip(&r.lemmas)
        .zip(&r.pos)
        .map(|((f, l), p)| Token::new(f.clone(), l.clone(), p.clone()))
        .collect()
}

pub fn read_frames(path: impl AsRef<Path>, ontology: Option<&Ontology>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    parse_frames(&super::read_text(path)?, path, ontology)
}

/// Frame-annotated sentences; every annotation must name its frame and pass
/// validation against `ontology` when one is given.
pub fn parse_frames(text: &str, origin: impl AsRef<Path>, ontology: Option<&Ontology>) -> Result<Vec<Sentence>> {
    let origin = origin.as_ref();
    let mut out = Vec::new();
    for (line, r) in records(text, origin)? {
        let n = r.tokens.len();
        let mut parses = Vec::new();
        for a in &r.annotations {
            let frame = a.frame.clone().ok_or_else(|| {
                Error::parse(origin, line, format!("record `{}`: annotation without a frame", r.id))
            })?;
            let parse = FrameParse {
                target: Target::new(a.target[0], a.target[1], a.lu.clone()),
                frame,
                arguments: a
                    .arguments
                    .iter()
                    .map(|x| Argument::new(x.start, x.end, x.role.clone()))
                    .collect(),
            };
            parse
                .validate(n, ontology, None)
                .map_err(|e| Error::parse(origin, line, format!("record `{}`: {e}", r.id)))?;
            parses.push(parse);
        }
        let mut s = Sentence::new(r.id.clone(), tokens(&r));
        s.supervision = Supervision::Frames(parses);
        out.push(s);
    }
    Ok(out)
}

pub fn read_targets(path: impl AsRef<Path>) -> Result<Vec<(Sentence, Vec<Target>)>> {
    let path = path.as_ref();
    parse_targets(&super::read_text(path)?, path)
}

/// Sentences with their targets only; frames and arguments, if present, are
/// ignored.
pub fn parse_targets(text: &str, origin: impl AsRef<Path>) -> Result<Vec<(Sentence, Vec<Target>)>> {
    let origin = origin.as_ref();
    let mut out = Vec::new();
    for (line, r) in records(text, origin)? {
        let n = r.tokens.len();
        let mut targets = Vec::new();
        for a in &r.annotations {
            let [start, end] = a.target;
            if start > end || end >= n {
                return Err(Error::parse(
                    origin,
                    line,
                    format!("record `{}`: target ({start}, {end}) outside {n} tokens", r.id),
                ));
            }
            targets.push(Target::new(start, end, a.lu.clone()));
        }
        out.push((Sentence::new(r.id.clone(), tokens(&r)), targets));
    }
    Ok(out)
}

/// One record per sentence; sentences without frame supervision are written
/// with no annotations.
pub fn format_frames(sentences: &[Sentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        let r = Record {
            id: s.id.clone(),
            tokens: s.tokens.iter().map(|t| t.form.clone()).collect(),
            lemmas: s.tokens.iter().map(|t| t.lemma.clone()).collect(),
            pos: s.tokens.iter().map(|t| t.pos.clone()).collect(),
            annotations: s
                .frames()
                .iter()
                .map(|p| Annotation {
                    target: [p.target.start, p.target.end],
                    lu: p.target.lu.clone(),
                    frame: Some(p.frame.clone()),
                    arguments: p
                        .arguments
                        .iter()
                        .map(|a| ArgumentRecord {
                            start: a.start,
                            end: a.end,
                            role: a.role.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&r).map_err(|e| Error::Invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_frames(sentences: &[Sentence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_frames(sentences)?).map_err(|e| super::with_path(e, path))?;
    Ok(())
}
