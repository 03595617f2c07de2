//! Token embeddings, the BiLSTM and span/target representations.

use std::collections::HashMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, NodeId, ParamId, ParameterStore};
use crate::model::{Sentence, Target};
use crate::{Error, Result};

pub const UNK: &str = "<unk>";

/// A string index with UNK at 0 and training counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    items: Vec<String>,
    counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab::default();
        v.items.push(UNK.into());
        v.counts.push(0);
        v.index.insert(UNK.into(), 0);
        v
    }

    pub fn from_counts<'a>(items: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocab::new();
        for s in items {
            v.observe(s);
        }
        v
    }

    pub fn observe(&mut self, s: &str) -> usize {
        let id = match self.index.get(s) {
            Some(&id) => id,
            None => {
                let id = self.items.len();
                self.items.push(s.to_string());
                self.counts.push(0);
                self.index.insert(s.to_string(), id);
                id
            }
        };
        if id != 0 {
            self.counts[id] += 1;
        }
        id
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    }

    pub fn get(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(0)
    }

    pub fn count(&self, id: usize) -> usize {
        self.counts[id]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// Word, lemma and POS vocabularies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub words: Vocab,
    pub lemmas: Vocab,
    pub pos: Vocab,
}

impl Vocabularies {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Self {
        let mut v = Vocabularies {
            words: Vocab::new(),
            lemmas: Vocab::new(),
            pos: Vocab::new(),
        };
        for s in sentences {
            for t in &s.tokens {
                v.words.observe(&t.form);
                v.lemmas.observe(&t.lemma);
                v.pos.observe(&t.pos);
            }
        }
        v
    }

    pub fn reindex(&mut self) {
        self.words.reindex();
        self.lemmas.reindex();
        self.pos.reindex();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub lemma_dim: usize,
    pub pos_dim: usize,
    pub lstm_layers: usize,
    /// Per direction; `h_i` is twice as wide.
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub mlp_out: usize,
    pub word_dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 100,
            lemma_dim: 50,
            pos_dim: 50,
            lstm_layers: 2,
            lstm_hidden: 100,
            mlp_hidden: 100,
            mlp_out: 100,
            word_dropout: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.word_dim,
            self.lemma_dim,
            self.pos_dim,
            self.lstm_layers,
            self.lstm_hidden,
            self.mlp_hidden,
            self.mlp_out,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("encoder dimensions must be positive: {self:?}")));
        }
        if !(self.word_dropout >= 0.0 && self.word_dropout.is_finite()) {
            return Err(Error::Config(format!("word dropout {}", self.word_dropout)));
        }
        Ok(())
    }

    pub fn token_dim(&self) -> usize {
        self.word_dim + self.lemma_dim + self.pos_dim
    }

    pub fn ctx_dim(&self) -> usize {
        2 * self.lstm_hidden
    }
}

/// Probability of replacing a word seen `count` times by UNK.
pub fn unk_probability(alpha: f64, count: usize) -> f64 {
    (alpha / (1.0 + count as f64)).min(1.0)
}

/// Span length and boundary-to-target distances before the log transform.
pub fn raw_features(start: usize, end: usize, target_start: usize) -> [usize; 3] {
    [end + 1 - start, start.abs_diff(target_start), end.abs_diff(target_start)]
}

/// `(log₂(len+1), log₂(|i−t|+1), log₂(|j−t|+1))`.
pub fn discrete_features(start: usize, end: usize, target_start: usize) -> [f64; 3] {
    raw_features(start, end, target_start).map(|v| ((v + 1) as f64).log2())
}

/// A two-layer tanh MLP. The first layer is split by input block, which is
/// the same map as one matrix over the concatenated input but lets callers
/// project shared blocks once.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub blocks: Vec<ParamId>,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        name: &str,
        inputs: &[(&str, usize)],
        hidden: usize,
        out: usize,
    ) -> Result<Self> {
        let fan_in: usize = inputs.iter().map(|(_, w)| w).sum();
        let bound = (6.0 / (hidden + fan_in) as f64).sqrt();
        let mut blocks = Vec::new();
        for (block, width) in inputs {
            let data = (0..hidden * width).map(|_| rng.gen_range(-bound..bound)).collect();
            blocks.push(store.add(format!("{name}.w1.{block}"), Array::new(vec![hidden, *width], data)?)?);
        }
        Ok(Mlp {
            blocks,
            b1: store.add_zeros(format!("{name}.b1"), vec![hidden])?,
            w2: store.add_glorot(format!("{name}.w2"), out, hidden, rng)?,
            b2: store.add_zeros(format!("{name}.b2"), vec![out])?,
        })
    }

    /// First-layer contribution of input block `block`.
    pub fn project(&self, g: &mut Graph, block: usize, x: NodeId) -> Result<NodeId> {
        g.matvec(self.blocks[block], x)
    }

    /// Output from the projections of every block.
    pub fn combine(&self, g: &mut Graph, projected: &[NodeId]) -> Result<NodeId> {
        let b1 = g.param(self.b1);
        let mut terms = projected.to_vec();
        terms.push(b1);
        let pre = g.sum_all(&terms)?;
        let hidden = g.tanh(pre);
        let out = g.affine(self.w2, hidden, self.b2)?;
        Ok(g.tanh(out))
    }

    pub fn apply(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != self.blocks.len() {
            return Err(Error::Invalid(format!(
                "MLP takes {} input blocks, got {}",
                self.blocks.len(),
                inputs.len()
            )));
        }
        let projected = inputs
            .iter()
            .enumerate()
            .map(|(k, &x)| self.project(g, k, x))
            .collect::<Result<Vec<_>>>()?;
        self.combine(g, &projected)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.blocks.clone();
        p.extend([self.b1, self.w2, self.b2]);
        p
    }
}

#[derive(Clone, Debug)]
struct LstmDirection {
    w: ParamId,
    b: ParamId,
}

/// Contextualized token vectors `h_i = [fw_i; bw_i]`.
#[derive(Clone, Debug)]
pub struct Contextualized {
    pub h: Vec<NodeId>,
    /// First-layer projections of every `h_i` as span start and span end.
    span_start: Vec<NodeId>,
    span_end: Vec<NodeId>,
}

impl Contextualized {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Embedding tables, BiLSTM and the span and target MLPs, with parameter
/// names under a common prefix.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub vocab: Vocabularies,
    pub words: ParamId,
    pub lemmas: ParamId,
    pub pos: ParamId,
    layers: Vec<(LstmDirection, LstmDirection)>,
    pub span_mlp: Mlp,
    pub target_mlp: Mlp,
}

impl Encoder {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        prefix: &str,
        config: EncoderConfig,
        vocab: Vocabularies,
    ) -> Result<Self> {
        config.validate()?;
        let words = store.add_glorot(format!("{prefix}emb.word"), vocab.words.len(), config.word_dim, rng)?;
        let lemmas = store.add_glorot(format!("{prefix}emb.lemma"), vocab.lemmas.len(), config.lemma_dim, rng)?;
        let pos = store.add_glorot(format!("{prefix}emb.pos"), vocab.pos.len(), config.pos_dim, rng)?;
        let hsz = config.lstm_hidden;
        let mut layers = Vec::new();
        for k in 0..config.lstm_layers {
            let input = if k == 0 { config.token_dim() } else { config.ctx_dim() };
            let mut dir = |name: &str| -> Result<LstmDirection> {
                Ok(LstmDirection {
                    w: store.add_glorot(format!("{prefix}lstm.{k}.{name}.w"), 4 * hsz, input + hsz, rng)?,
                    b: store.add_zeros(format!("{prefix}lstm.{k}.{name}.b"), vec![4 * hsz])?,
                })
            };
            let fw = dir("fw")?;
            let bw = dir("bw")?;
            layers.push((fw, bw));
        }
        let ctx = config.ctx_dim();
        let span_mlp = Mlp::new(
            store,
            rng,
            &format!("{prefix}span"),
            &[("start", ctx), ("end", ctx), ("phi", 3)],
            config.mlp_hidden,
            config.mlp_out,
        )?;
        let target_mlp = Mlp::new(
            store,
            rng,
            &format!("{prefix}target"),
            &[("start", ctx), ("end", ctx), ("len", 1)],
            config.mlp_hidden,
            config.mlp_out,
        )?;
        Ok(Encoder {
            config,
            vocab,
            words,
            lemmas,
            pos,
            layers,
            span_mlp,
            target_mlp,
        })
    }

    /// Copies pretrained rows into the word table for every vocabulary word
    /// the file covers. Returns the number of rows set.
    pub fn init_words(&self, store: &mut ParameterStore, vectors: &HashMap<String, Vec<f64>>) -> Result<usize> {
        let dim = self.config.word_dim;
        let mut set = 0;
        let table = store.value_mut(self.words).data_mut();
        for (id, w) in self.vocab.words.items().iter().enumerate() {
            if let Some(v) = vectors.get(w) {
                if v.len() != dim {
                    return Err(Error::Config(format!(
                        "embedding for `{w}` has width {}, word_dim is {dim}",
                        v.len()
                    )));
                }
                table[id * dim..(id + 1) * dim].copy_from_slice(v);
                set += 1;
            }
        }
        Ok(set)
    }

    /// `[word; lemma; pos]` per token. With an rng (training), each word is
    /// replaced by UNK with probability `α/(1+#(w))`.
    pub fn embed_tokens(
        &self,
        g: &mut Graph,
        sentence: &Sentence,
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<NodeId>> {
        let alpha = self.config.word_dropout;
        let mut out = Vec::with_capacity(sentence.len());
        for t in &sentence.tokens {
            let mut w = self.vocab.words.get(&t.form);
            if let Some(rng) = dropout.as_deref_mut() {
                if w != 0 && rng.gen::<f64>() < unk_probability(alpha, self.vocab.words.count(w)) {
                    w = 0;
                }
            }
            let word = g.lookup(self.words, w)?;
            let lemma = g.lookup(self.lemmas, self.vocab.lemmas.get(&t.lemma))?;
            let pos = g.lookup(self.pos, self.vocab.pos.get(&t.pos))?;
            out.push(g.concat(&[word, lemma, pos])?);
        }
        Ok(out)
    }

    /// Stacked bidirectional LSTM over `inputs`.
    pub fn bilstm(&self, g: &mut Graph, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
        if inputs.is_empty() {
            return Err(Error::Invalid("BiLSTM over an empty sequence".into()));
        }
        let hsz = self.config.lstm_hidden;
        let mut xs = inputs.to_vec();
        for (fw, bw) in &self.layers {
            let run = |g: &mut Graph, dir: &LstmDirection, order: &mut dyn Iterator<Item = usize>| -> Result<Vec<NodeId>> {
                let mut h = g.input(vec![0.0; hsz]);
                let mut c = g.input(vec![0.0; hsz]);
                let mut out = vec![h; xs.len()];
                for i in order {
                    (h, c) = g.lstm_step(dir.w, dir.b, xs[i], h, c)?;
                    out[i] = h;
                }
                Ok(out)
            };
            let f = run(g, fw, &mut (0..xs.len()))?;
            let b = run(g, bw, &mut (0..xs.len()).rev())?;
            xs = f
                .into_iter()
                .zip(b)
                .map(|(f, b)| g.concat(&[f, b]))
                .collect::<Result<_>>()?;
        }
        Ok(xs)
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        sentence: &Sentence,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Contextualized> {
        let emb = self.embed_tokens(g, sentence, dropout)?;
        let h = self.bilstm(g, &emb)?;
        let span_start = h.iter().map(|&x| self.span_mlp.project(g, 0, x)).collect::<Result<_>>()?;
        let span_end = h.iter().map(|&x| self.span_mlp.project(g, 1, x)).collect::<Result<_>>()?;
        Ok(Contextualized { h, span_start, span_end })
    }

    /// `MLP_span([h_i; h_j; φ])`.
    pub fn span_representation(
        &self,
        g: &mut Graph,
        ctx: &Contextualized,
        start: usize,
        end: usize,
        features: [f64; 3],
    ) -> Result<NodeId> {
        if start > end || end >= ctx.len() {
            return Err(Error::Invalid(format!("span ({start}, {end}) outside {} tokens", ctx.len())));
        }
        let phi = g.input(features.to_vec());
        let phi = self.span_mlp.project(g, 2, phi)?;
        self.span_mlp.combine(g, &[ctx.span_start[start], ctx.span_end[end], phi])
    }

    /// `MLP_tgt([h_i; h_j; log₂(len+1)])`.
    pub fn target_representation(&self, g: &mut Graph, ctx: &Contextualized, target: &Target) -> Result<NodeId> {
        if target.start > target.end || target.end >= ctx.len() {
            return Err(Error::Invalid(format!(
                "target ({}, {}) outside {} tokens",
                target.start,
                target.end,
                ctx.len()
            )));
        }
        let len = g.input(vec![((target.len() + 1) as f64).log2()]);
        let (hs, he) = (ctx.h[target.start], ctx.h[target.end]);
        self.target_mlp.apply(g, &[hs, he, len])
    }
}
