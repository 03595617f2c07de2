//! `{"frames": {name: {"roles": [...]}}, "lus": {lu: [frame, ...]}}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Ontology;
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    frames: BTreeMap<String, FrameEntry>,
    lus: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    roles: Vec<String>,
}

pub fn read_ontology(path: impl AsRef<Path>) -> Result<Ontology> {
    let path = path.as_ref();
    parse_ontology(&super::read_text(path)?, path)
}

pub fn parse_ontology(text: &str, origin: impl AsRef<Path>) -> Result<Ontology> {
    let origin = origin.as_ref();
    let file: OntologyFile =
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
    Ontology::new(
        file.frames.into_iter().map(|(f, e)| (f, e.roles)),
        file.lus,
    )
    .map_err(|e| Error::parse(origin, 0, e.to_string()))
}

/// Pretty-printed JSON with sorted keys.
pub fn format_ontology(ontology: &Ontology) -> String {
    let file = OntologyFile {
        frames: ontology
            .frames()
            .map(|(f, r)| (f.to_string(), FrameEntry { roles: r.to_vec() }))
            .collect(),
        lus: ontology.lus().map(|(l, f)| (l.to_string(), f.to_vec())).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("plain maps serialize");
    s.push('\n');
    s
}

pub fn write_ontology(ontology: &Ontology, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_ontology(ontology)).map_err(|e| super::with_path(e, path))?;
    Ok(())
}
