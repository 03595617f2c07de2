//! Text embeddings: a token followed by whitespace-separated floats per line.

use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    parse_embeddings(&super::read_text(path)?, path)
}

/// The width is fixed by the first vector; later duplicates overwrite
/// earlier ones. Blank lines are skipped.
pub fn parse_embeddings(text: &str, origin: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let origin = origin.as_ref();
    let mut out = HashMap::new();
    let mut width = None;
    for (k, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let v = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(origin, k + 1, format!("`{f}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None if v.is_empty() => return Err(Error::parse(origin, k + 1, format!("`{token}` has no values"))),
            None => width = Some(v.len()),
            Some(w) if w != v.len() => {
                return Err(Error::parse(
                    origin,
                    k + 1,
                    format!("`{token}` has {} values, expected {w}", v.len()),
                ))
            }
            _ => {}
        }
        out.insert(token.to_string(), v);
    }
    Ok(out)
}
