//! Corpus, ontology, embedding and checkpoint files.

pub(crate) mod checkpoint;
mod embeddings;
mod frames;
mod ontology;
mod sdp;

pub use checkpoint::{
    load_checkpoint, load_model, ontology_hash, save_checkpoint, save_model, Checkpoint, Manifest,
    CHECKPOINT_VERSION,
};
pub use embeddings::{load_embeddings, parse_embeddings};
pub use frames::{parse_frames, parse_targets, read_frames, read_targets, write_frames, format_frames};
pub use ontology::{parse_ontology, read_ontology, write_ontology, format_ontology};
pub use sdp::{format_sdp, parse_sdp, read_sdp, write_sdp};

use std::path::Path;

use crate::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(e, path))
}

pub(crate) fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
