//! Tab-separated semantic dependency files: `id form lemma pos top pred`
//! followed by one argument column per predicate.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::model::{Arc, DependencyGraph, Sentence, Supervision, Token};
use crate::{Error, Result};

pub fn read_sdp(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    parse_sdp(&super::read_text(path)?, path)
}

struct Row {
    line: usize,
    cells: Vec<String>,
}

/// Parses SDP text; `origin` only labels errors.
pub fn parse_sdp(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let origin = origin.as_ref();
    let mut out = Vec::new();
    let mut id: Option<String> = None;
    let mut rows: Vec<Row> = Vec::new();
    for (k, line) in text.split('\n').enumerate() {
        let line_no = k + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            if !rows.is_empty() {
                let sid = id.take().unwrap_or_else(|| format!("s{}", out.len() + 1));
                out.push(sentence(sid, std::mem::take(&mut rows), origin)?);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if rows.is_empty() && id.is_none() {
                id = Some(rest.to_string());
            }
            continue;
        }
        rows.push(Row {
            line: line_no,
            cells: line.split('\t').map(str::to_string).collect(),
        });
    }
    if !rows.is_empty() {
        let sid = id.take().unwrap_or_else(|| format!("s{}", out.len() + 1));
        out.push(sentence(sid, rows, origin)?);
    }
    Ok(out)
}

fn flag(cell: &str, what: &str, line: usize, origin: &Path) -> Result<bool> {
    match cell {
        "+" => Ok(true),
        "-" => Ok(false),
        other => Err(Error::parse(origin, line, format!("{what} flag must be + or -, got `{other}`"))),
    }
}

fn sentence(id: String, rows: Vec<Row>, origin: &Path) -> Result<Sentence> {
    let width = rows[0].cells.len();
    if width < 6 {
        return Err(Error::parse(origin, rows[0].line, format!("expected at least 6 columns, got {width}")));
    }
    let mut tokens = Vec::new();
    let mut preds = Vec::new();
    let mut top = None;
    for (i, r) in rows.iter().enumerate() {
        if r.cells.len() != width {
            return Err(Error::parse(
                origin,
                r.line,
                format!("ragged row: {} columns, sentence started with {width}", r.cells.len()),
            ));
        }
        let expected = (i + 1).to_string();
        if r.cells[0] != expected {
            return Err(Error::parse(origin, r.line, format!("token id `{}`, expected {expected}", r.cells[0])));
        }
        if flag(&r.cells[4], "top", r.line, origin)? {
            if top.is_some() {
                return Err(Error::parse(origin, r.line, "second top token"));
            }
            top = Some(i);
        }
        if flag(&r.cells[5], "pred", r.line, origin)? {
            preds.push(i);
        }
        tokens.push(Token::new(r.cells[1].clone(), r.cells[2].clone(), r.cells[3].clone()));
    }
    if width != 6 + preds.len() {
        return Err(Error::parse(
            origin,
            rows[0].line,
            format!("{} argument columns for {} predicates", width - 6, preds.len()),
        ));
    }
    let mut arcs = BTreeSet::new();
    for (dep, r) in rows.iter().enumerate() {
        for (k, &head) in preds.iter().enumerate() {
            let cell = &r.cells[6 + k];
            if cell == "_" {
                continue;
            }
            if cell.is_empty() {
                return Err(Error::parse(origin, r.line, format!("empty label in column {}", 7 + k)));
            }
            if head == dep {
                return Err(Error::parse(origin, r.line, format!("self-loop on token {}", dep + 1)));
            }
            arcs.insert(Arc::new(head, dep, cell.clone()));
        }
    }
    let mut s = Sentence::new(id, tokens);
    s.supervision = Supervision::Dependencies(DependencyGraph { top, arcs });
    Ok(s)
}

/// Canonical text: a `#id` line, one row per token, and a blank line after
/// each sentence. Sentences without a graph are written with none.
pub fn format_sdp(sentences: &[Sentence]) -> Result<String> {
    let empty = DependencyGraph::default();
    let mut out = String::new();
    for s in sentences {
        let g = s.graph().unwrap_or(&empty);
        g.validate(s.len())?;
        let preds: Vec<usize> = g.predicates().into_iter().collect();
        let n = s.len();
        let mut cells = vec![vec!["_"; preds.len()]; n];
        for a in &g.arcs {
            let k = preds.binary_search(&a.head).expect("heads are predicates");
            if cells[a.dep][k] != "_" {
                return Err(Error::Invalid(format!(
                    "sentence `{}`: two labels on arc {}->{}",
                    s.id, a.head, a.dep
                )));
            }
            cells[a.dep][k] = &a.label;
        }
        writeln!(out, "#{}", s.id).unwrap();
        for (i, t) in s.tokens.iter().enumerate() {
            let top = if g.top == Some(i) { "+" } else { "-" };
            let pred = if preds.binary_search(&i).is_ok() { "+" } else { "-" };
            write!(out, "{}\t{}\t{}\t{}\t{top}\t{pred}", i + 1, t.form, t.lemma, t.pos).unwrap();
            for c in &cells[i] {
                write!(out, "\t{c}").unwrap();
            }
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_sdp(sentences: &[Sentence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_sdp(sentences)?).map_err(|e| super::with_path(e, path))?;
    Ok(())
}
