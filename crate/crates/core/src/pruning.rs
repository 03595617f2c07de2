//! Small unlabeled models that filter argument spans and token arcs before
//! full decoding.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParameterStore};
use crate::encoder::{discrete_features, Contextualized, Encoder, EncoderConfig, Mlp, Vocabularies};
use crate::inference::{semi_markov_marginals, ScoredSpan};
use crate::io::{self, Manifest, CHECKPOINT_VERSION};
use crate::model::{Ontology, Sentence, Target};
use crate::{Error, Result};

const PREFIX: &str = "pruner.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunerConfig {
    pub encoder: EncoderConfig,
    pub arc_hidden: usize,
    pub arc_out: usize,
}

impl Default for PrunerConfig {
    fn default() -> Self {
        PrunerConfig {
            encoder: EncoderConfig {
                word_dim: 32,
                lemma_dim: 16,
                pos_dim: 16,
                lstm_layers: 1,
                lstm_hidden: 32,
                mlp_hidden: 32,
                mlp_out: 32,
                word_dropout: 1.0,
            },
            arc_hidden: 32,
            arc_out: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub max_span_len: usize,
    /// Heads kept per dependent.
    pub arc_top_k: usize,
    /// Arcs at or below this posterior are dropped.
    pub arc_floor: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            max_span_len: 20,
            arc_top_k: 20,
            arc_floor: 1e-4,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_span_len == 0 || self.arc_top_k == 0 || !(0.0..=1.0).contains(&self.arc_floor) {
            return Err(Error::Config(format!("invalid pruning configuration {self:?}")));
        }
        Ok(())
    }
}

/// `1/n²`.
pub fn span_threshold(n: usize) -> f64 {
    1.0 / (n * n) as f64
}

/// Unlabeled span and arc scorers over their own encoder. Parameter names
/// start with `pruner.`.
#[derive(Clone, Debug)]
pub struct Pruner {
    pub config: PrunerConfig,
    pub store: ParameterStore,
    pub encoder: Encoder,
    pub span_w: ParamId,
    pub arc_mlp: Mlp,
    pub arc_w: ParamId,
}

impl Pruner {
    pub fn new(config: PrunerConfig, vocab: Vocabularies, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let encoder = Encoder::new(&mut store, &mut rng, PREFIX, config.encoder.clone(), vocab)?;
        let ctx = config.encoder.ctx_dim();
        let span_w = store.add_glorot_vector(format!("{PREFIX}span.w"), config.encoder.mlp_out, &mut rng)?;
        let arc_mlp = Mlp::new(
            &mut store,
            &mut rng,
            &format!("{PREFIX}arc"),
            &[("head", ctx), ("dep", ctx)],
            config.arc_hidden,
            config.arc_out,
        )?;
        let arc_w = store.add_glorot_vector(format!("{PREFIX}arc.w"), config.arc_out, &mut rng)?;
        Ok(Pruner {
            config,
            store,
            encoder,
            span_w,
            arc_mlp,
            arc_w,
        })
    }

    fn span_nodes(
        &self,
        g: &mut Graph,
        ctx: &Contextualized,
        target: &Target,
        max_len: usize,
    ) -> Result<(Vec<(usize, usize)>, Vec<NodeId>)> {
        let n = ctx.len();
        let w = g.param(self.span_w);
        let mut spans = Vec::new();
        let mut nodes = Vec::new();
        for start in 0..n {
            for end in start..n.min(start + max_len) {
                let rep = self
                    .encoder
                    .span_representation(g, ctx, start, end, discrete_features(start, end, target.start))?;
                nodes.push(g.dot(w, rep)?);
                spans.push((start, end));
            }
        }
        Ok((spans, nodes))
    }

    fn arc_nodes(&self, g: &mut Graph, ctx: &Contextualized) -> Result<(Vec<(usize, usize)>, Vec<NodeId>)> {
        let n = ctx.len();
        let w = g.param(self.arc_w);
        let heads = ctx.h.iter().map(|&h| self.arc_mlp.project(g, 0, h)).collect::<Result<Vec<_>>>()?;
        let deps = ctx.h.iter().map(|&h| self.arc_mlp.project(g, 1, h)).collect::<Result<Vec<_>>>()?;
        let mut arcs = Vec::new();
        let mut nodes = Vec::new();
        for h in 0..n {
            for d in 0..n {
                if h != d {
                    let rep = self.arc_mlp.combine(g, &[heads[h], deps[d]])?;
                    nodes.push(g.dot(w, rep)?);
                    arcs.push((h, d));
                }
            }
        }
        Ok((arcs, nodes))
    }

    /// Posterior of every span of length at most `max_len` being an argument
    /// of `target`.
    pub fn span_posteriors(&self, sentence: &Sentence, target: &Target, max_len: usize) -> Result<Vec<((usize, usize), f64)>> {
        let mut g = Graph::new(&self.store);
        let ctx = self.encoder.encode(&mut g, sentence, None)?;
        let (spans, nodes) = self.span_nodes(&mut g, &ctx, target, max_len)?;
        let scored: Vec<ScoredSpan> = spans
            .iter()
            .zip(&nodes)
            .map(|(&(s, e), &n)| ScoredSpan::new(s, e, g.scalar(n)))
            .collect();
        let m = semi_markov_marginals(&scored, sentence.len(), max_len);
        Ok(spans.into_iter().zip(m.posteriors).collect())
    }

    /// `σ(s(h, d))` for every ordered token pair.
    pub fn arc_posteriors(&self, sentence: &Sentence) -> Result<Vec<((usize, usize), f64)>> {
        let mut g = Graph::new(&self.store);
        let ctx = self.encoder.encode(&mut g, sentence, None)?;
        let (arcs, nodes) = self.arc_nodes(&mut g, &ctx)?;
        Ok(arcs.into_iter().zip(nodes.iter().map(|&n| sigmoid(g.scalar(n)))).collect())
    }

    /// One gradient step on `−log p(gold segmentation)`; returns the loss.
    pub fn span_step(
        &mut self,
        sentence: &Sentence,
        target: &Target,
        gold: &BTreeSet<(usize, usize)>,
        max_len: usize,
        lr: f64,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        let (loss, grads) = {
            let mut g = Graph::new(&self.store);
            let ctx = self.encoder.encode(&mut g, sentence, Some(rng))?;
            let (spans, nodes) = self.span_nodes(&mut g, &ctx, target, max_len)?;
            let scored: Vec<ScoredSpan> = spans
                .iter()
                .zip(&nodes)
                .map(|(&(s, e), &n)| ScoredSpan::new(s, e, g.scalar(n)))
                .collect();
            let m = semi_markov_marginals(&scored, sentence.len(), max_len);
            let gold_score: f64 = spans
                .iter()
                .zip(&scored)
                .filter(|(s, _)| gold.contains(s))
                .map(|(_, s)| s.score)
                .sum();
            // d(log Z − gold)/ds = posterior − indicator.
            let terms: Vec<(NodeId, f64)> = spans
                .iter()
                .zip(&nodes)
                .zip(&m.posteriors)
                .map(|((s, &n), &p)| (n, p - f64::from(u8::from(gold.contains(s)))))
                .collect();
            let surrogate = g.weighted_sum(&terms)?;
            (m.log_z - gold_score, g.backward(surrogate)?)
        };
        self.store.accumulate(&grads);
        self.store.clip_and_step(lr)?;
        Ok(loss)
    }

    /// One gradient step on the summed per-arc logistic loss.
    pub fn arc_step(&mut self, sentence: &Sentence, gold: &BTreeSet<(usize, usize)>, lr: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let (loss, grads) = {
            let mut g = Graph::new(&self.store);
            let ctx = self.encoder.encode(&mut g, sentence, Some(rng))?;
            let (arcs, nodes) = self.arc_nodes(&mut g, &ctx)?;
            let mut loss = 0.0;
            let mut terms = Vec::with_capacity(nodes.len());
            for (a, &n) in arcs.iter().zip(&nodes) {
                let s = g.scalar(n);
                let y = f64::from(u8::from(gold.contains(a)));
                loss += softplus(s) - y * s;
                terms.push((n, sigmoid(s) - y));
            }
            if terms.is_empty() {
                return Ok(0.0);
            }
            let surrogate = g.weighted_sum(&terms)?;
            (loss, g.backward(surrogate)?)
        };
        self.store.accumulate(&grads);
        self.store.clip_and_step(lr)?;
        Ok(loss)
    }

    pub fn save(&self, path: impl AsRef<Path>, ontology: Option<&Ontology>) -> Result<()> {
        let payload = serde_json::json!({
            "config": self.config,
            "vocab": self.encoder.vocab,
        });
        let manifest = Manifest {
            kind: "pruner".into(),
            version: CHECKPOINT_VERSION,
            ontology_hash: ontology.map(io::ontology_hash).unwrap_or_default(),
            payload,
        };
        io::save_checkpoint(&self.store, &manifest, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ck = io::load_checkpoint(path)?;
        io::checkpoint::check_manifest(&ck.manifest, "pruner", None, false, path)?;
        #[derive(Deserialize)]
        struct Payload {
            config: PrunerConfig,
            vocab: Vocabularies,
        }
        let mut p: Payload = serde_json::from_value(ck.manifest.payload).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("pruner manifest: {e}"),
        })?;
        p.vocab.reindex();
        let mut pruner = Pruner::new(p.config, p.vocab, 0)?;
        io::checkpoint::restore(&mut pruner.store, ck.params, path)?;
        Ok(pruner)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_span_len: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            max_span_len: 20,
            seed: 0,
        }
    }
}

/// Mean losses per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainLog {
    pub span_loss: Vec<f64>,
    pub arc_loss: Vec<f64>,
}

/// Fits the span model on frame-annotated sentences and the arc model on
/// dependency-annotated ones. Either corpus may be empty, not both.
pub fn pretrain(pruner: &mut Pruner, frames: &[Sentence], graphs: &[Sentence], config: &PretrainConfig) -> Result<PretrainLog> {
    let span_items: Vec<(&Sentence, usize)> = frames
        .iter()
        .flat_map(|s| (0..s.frames().len()).map(move |k| (s, k)))
        .collect();
    let arc_items: Vec<&Sentence> = graphs.iter().filter(|s| s.graph().is_some()).collect();
    if span_items.is_empty() && arc_items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = PretrainLog::default();
    let mut order: Vec<usize> = (0..span_items.len() + arc_items.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut span_total, mut arc_total) = (0.0, 0.0);
        for &k in &order {
            if k < span_items.len() {
                let (s, i) = span_items[k];
                let parse = &s.frames()[i];
                let gold = parse.arguments.iter().map(|a| (a.start, a.end)).collect();
                span_total += pruner.span_step(s, &parse.target, &gold, config.max_span_len, config.learning_rate, &mut rng)?;
            } else {
                let s = arc_items[k - span_items.len()];
                let gold = s.graph().unwrap().arcs.iter().map(|a| (a.head, a.dep)).collect();
                arc_total += pruner.arc_step(s, &gold, config.learning_rate, &mut rng)?;
            }
        }
        if !span_items.is_empty() {
            log.span_loss.push(span_total / span_items.len() as f64);
        }
        if !arc_items.is_empty() {
            log.arc_loss.push(arc_total / arc_items.len() as f64);
        }
    }
    Ok(log)
}

/// Spans with posterior `≥ 1/n²` and length at most `max_span_len`.
pub fn prune_spans(pruner: &Pruner, sentence: &Sentence, target: &Target, config: &PruneConfig) -> Result<BTreeSet<(usize, usize)>> {
    let threshold = span_threshold(sentence.len());
    Ok(retain_spans(&pruner.span_posteriors(sentence, target, config.max_span_len)?, threshold, config.max_span_len))
}

/// The retention rule on precomputed posteriors.
pub fn retain_spans(posteriors: &[((usize, usize), f64)], threshold: f64, max_len: usize) -> BTreeSet<(usize, usize)> {
    posteriors
        .iter()
        .filter(|((s, e), p)| e + 1 - s <= max_len && *p >= threshold)
        .map(|&(span, _)| span)
        .collect()
}

/// Per dependent, the `K` most probable heads whose posterior exceeds the
/// floor.
pub fn prune_arcs(pruner: &Pruner, sentence: &Sentence, config: &PruneConfig) -> Result<BTreeSet<(usize, usize)>> {
    Ok(retain_arcs(&pruner.arc_posteriors(sentence)?, config.arc_top_k, config.arc_floor))
}

pub fn retain_arcs(posteriors: &[((usize, usize), f64)], k: usize, floor: f64) -> BTreeSet<(usize, usize)> {
    let mut by_dep: std::collections::BTreeMap<usize, Vec<(f64, usize)>> = Default::default();
    for &((h, d), p) in posteriors {
        if p > floor {
            by_dep.entry(d).or_default().push((p, h));
        }
    }
    let mut out = BTreeSet::new();
    for (d, mut heads) in by_dep {
        heads.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        out.extend(heads.into_iter().take(k).map(|(_, h)| (h, d)));
    }
    out
}

/// Recall of a retained set against gold items, and the retained count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RecallReport {
    pub gold: usize,
    pub kept: usize,
    pub retained: usize,
    pub recall: f64,
}

impl RecallReport {
    pub fn new<T: Ord>(retained: &BTreeSet<T>, gold: &BTreeSet<T>) -> Self {
        let kept = gold.intersection(retained).count();
        RecallReport {
            gold: gold.len(),
            kept,
            retained: retained.len(),
            recall: if gold.is_empty() { 1.0 } else { kept as f64 / gold.len() as f64 },
        }
    }

    pub fn merge(&mut self, other: &RecallReport) {
        self.gold += other.gold;
        self.kept += other.kept;
        self.retained += other.retained;
        self.recall = if self.gold == 0 { 1.0 } else { self.kept as f64 / self.gold as f64 };
    }
}

/// Retained arcs per token.
pub fn arc_density(retained: usize, tokens: usize) -> f64 {
    if tokens == 0 {
        0.0
    } else {
        retained as f64 / tokens as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Argument, FrameParse, Supervision, Token};

    fn tiny() -> PrunerConfig {
        PrunerConfig {
            encoder: EncoderConfig {
                word_dim: 4,
                lemma_dim: 2,
                pos_dim: 2,
                lstm_layers: 1,
                lstm_hidden: 3,
                mlp_hidden: 4,
                mlp_out: 4,
                word_dropout: 0.0,
            },
            arc_hidden: 4,
            arc_out: 4,
        }
    }

    fn toy() -> Sentence {
        let mut s = Sentence::new("p", ["the", "dog", "moved", "the", "box"].iter().map(|w| Token::new(*w, *w, "X")).collect());
        s.supervision = Supervision::Frames(vec![FrameParse {
            target: Target::new(2, 2, "move.v"),
            frame: "Motion".into(),
            arguments: vec![Argument::new(0, 1, "Agent"), Argument::new(3, 4, "Theme")],
        }]);
        s
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(span_threshold(2), 0.25);
        let post = [((0, 0), 0.25), ((0, 1), 0.2499), ((0, 20), 0.9)];
        let kept = retain_spans(&post, 0.25, 20);
        assert_eq!(kept, [(0, 0)].into());
    }

    #[test]
    fn arc_retention() {
        let post = [((0, 2), 0.9), ((1, 2), 0.5), ((3, 2), 0.1), ((2, 0), 0.3), ((1, 0), 0.3)];
        let all = retain_arcs(&post, 3, 0.0);
        assert_eq!(all.len(), 5);
        let best = retain_arcs(&post, 1, 0.0);
        assert_eq!(best, [(0, 2), (1, 0)].into());
        assert_eq!(retain_arcs(&post, 5, 0.3), [(0, 2), (1, 2)].into());
    }

    #[test]
    fn recall_report() {
        let kept: BTreeSet<u8> = [1, 2, 3].into();
        let gold: BTreeSet<u8> = [2, 4].into();
        let r = RecallReport::new(&kept, &gold);
        assert_eq!((r.kept, r.gold, r.recall), (1, 2, 0.5));
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn span_posteriors_rise_when_overfitting() {
        let s = toy();
        let vocab = Vocabularies::build([&s]);
        let mut p = Pruner::new(tiny(), vocab, 1).unwrap();
        let parse = s.frames()[0].clone();
        let gold: BTreeSet<(usize, usize)> = parse.arguments.iter().map(|a| (a.start, a.end)).collect();
        let mean_gold = |p: &Pruner| {
            let post = p.span_posteriors(&s, &parse.target, 5).unwrap();
            post.iter().filter(|(sp, _)| gold.contains(sp)).map(|(_, q)| q).sum::<f64>() / 2.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prev = mean_gold(&p);
        let mut prev_loss = f64::INFINITY;
        for _ in 0..15 {
            let loss = p.span_step(&s, &parse.target, &gold, 5, 0.05, &mut rng).unwrap();
            assert!(loss >= 0.0);
            assert!(loss <= prev_loss + 1e-9);
            prev_loss = loss;
            let now = mean_gold(&p);
            assert!(now > prev, "{now} <= {prev}");
            prev = now;
        }
        let kept = prune_spans(&p, &s, &parse.target, &PruneConfig::default()).unwrap();
        assert!(gold.is_subset(&kept));
    }

    #[test]
    fn zero_epochs_leaves_the_model_untouched() {
        let s = toy();
        let mut p = Pruner::new(tiny(), Vocabularies::build([&s]), 2).unwrap();
        let before = p.store.clone();
        let cfg = PretrainConfig { epochs: 0, ..Default::default() };
        pretrain(&mut p, &[s], &[], &cfg).unwrap();
        for ((_, a), (_, b)) in before.iter().zip(p.store.iter()) {
            assert_eq!(a, b);
        }
        assert!(matches!(pretrain(&mut p, &[], &[], &cfg), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn pruned_sets_are_subsets_and_names_are_prefixed() {
        let s = toy();
        let p = Pruner::new(tiny(), Vocabularies::build([&s]), 3).unwrap();
        assert!(p.store.iter().all(|(n, _)| n.starts_with(PREFIX)));
        let cfg = PruneConfig { arc_top_k: 2, ..Default::default() };
        let arcs = prune_arcs(&p, &s, &cfg).unwrap();
        assert!(arcs.iter().all(|&(h, d)| h != d && h < 5 && d < 5));
        let per_dep = arcs.iter().fold([0usize; 5], |mut c, &(_, d)| {
            c[d] += 1;
            c
        });
        assert!(per_dep.iter().all(|&c| c <= 2));
        let full = PruneConfig { arc_top_k: 4, arc_floor: 0.0, ..Default::default() };
        assert_eq!(prune_arcs(&p, &s, &full).unwrap().len(), 20);
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = toy();
        let p = Pruner::new(tiny(), Vocabularies::build([&s]), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        p.save(&path, None).unwrap();
        let q = Pruner::load(&path).unwrap();
        assert_eq!(p.arc_posteriors(&s).unwrap(), q.arc_posteriors(&s).unwrap());
        assert!(io::load_model(&path, None, false).is_err());
    }
}
