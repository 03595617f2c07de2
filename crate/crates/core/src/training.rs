//! Max-margin multitask training over disjoint corpora, prediction and
//! ensembling.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParameterStore};
use crate::encoder::Vocabularies;
use crate::eval::{eval_frames, eval_sdp};
use crate::inference::{cost_augment, Ad3Config, decode, Constraints, CostScope, DecodeConfig, DecodeMode};
use crate::model::{
    weighted_hamming, CandidateSpace, CostConfig, DependencyGraph, FrameParse, Ontology, PartId,
    Sentence, SpaceLimits, Supervision, Target,
};
use crate::pruning::{prune_arcs, prune_spans, PruneConfig, Pruner};
use crate::scorers::{Model, ModelConfig, Symbols};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// The rate is multiplied by `anneal_factor` every `anneal_every` epochs.
    pub anneal_every: usize,
    pub anneal_factor: f64,
    pub epochs: usize,
    pub clip: f64,
    pub l2: f64,
    /// Weight of the ℓ1 penalty on cross-task scores.
    pub lambda: f64,
    /// Share of exemplar sentences resampled into each epoch.
    pub exemplar_fraction: f64,
    pub word_dropout: f64,
    pub cost: CostConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.33,
            anneal_every: 10,
            anneal_factor: 0.5,
            epochs: 30,
            clip: 1.0,
            l2: 1e-6,
            lambda: 0.01,
            exemplar_fraction: 0.35,
            word_dropout: 1.0,
            cost: CostConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.anneal_factor, self.clip];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite())) || self.anneal_every == 0 {
            return Err(Error::Config("learning rate, annealing and clip must be positive".into()));
        }
        if self.l2 < 0.0 || self.lambda < 0.0 || self.word_dropout < 0.0 {
            return Err(Error::Config("l2, lambda and word dropout must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.exemplar_fraction) {
            return Err(Error::Config("exemplar fraction must lie in [0, 1]".into()));
        }
        self.cost.validate()
    }

    /// Rate used during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.anneal_factor.powi((epoch / self.anneal_every) as i32)
    }
}

/// Training and development data. Frame sentences carry frame parses,
/// dependency sentences carry graphs.
#[derive(Clone, Debug, Default)]
pub struct Corpora {
    pub fn_train: Vec<Sentence>,
    /// Lexicographic exemplars, subsampled every epoch.
    pub exemplars: Vec<Sentence>,
    pub dm_train: Vec<Sentence>,
    pub fn_dev: Vec<Sentence>,
    pub dm_dev: Vec<Sentence>,
}

/// Labels that never appear twice among one token's outgoing arcs.
pub fn detect_deterministic(graphs: &[Sentence]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut repeated = BTreeSet::new();
    for g in graphs.iter().filter_map(Sentence::graph) {
        let mut per_head: BTreeMap<(usize, &str), usize> = BTreeMap::new();
        for a in &g.arcs {
            seen.insert(a.label.clone());
            *per_head.entry((a.head, a.label.as_str())).or_default() += 1;
        }
        for ((_, l), c) in per_head {
            if c > 1 {
                repeated.insert(l.to_string());
            }
        }
    }
    seen.difference(&repeated).cloned().collect()
}

/// A fresh model whose vocabularies and symbol tables cover the training
/// data.
pub fn build_model(config: ModelConfig, corpora: &Corpora, ontology: &Ontology, seed: u64) -> Result<Model> {
    let vocab = Vocabularies::build(corpora.fn_train.iter().chain(&corpora.exemplars).chain(&corpora.dm_train));
    let labels: BTreeSet<String> = corpora
        .dm_train
        .iter()
        .filter_map(Sentence::graph)
        .flat_map(|g| g.arcs.iter().map(|a| a.label.clone()))
        .collect();
    let labels: Vec<String> = labels.into_iter().collect();
    let mut symbols = Symbols::new(ontology, &labels);
    symbols.deterministic = detect_deterministic(&corpora.dm_train);
    Model::new(config, vocab, symbols, seed)
}

/// Constraint set and solver settings for a model. `drop` enables skipping
/// near-zero cross-task scores.
pub fn decode_config(model: &Model, drop: bool) -> DecodeConfig {
    DecodeConfig {
        constraints: Constraints {
            deterministic_labels: model.symbols.deterministic_indices(),
            optional_top: model.config.decoding.optional_top,
            skip_frames: false,
        },
        drop_epsilon: if drop { model.config.decoding.drop_epsilon } else { None },
        solver: Ad3Config {
            max_iter: model.config.decoding.solver_max_iter,
            max_nodes: model.config.decoding.solver_max_nodes,
            tol: model.config.decoding.solver_tol,
            ..Default::default()
        },
    }
}

/// Optional pruning model applied while building candidate spaces.
#[derive(Clone, Copy, Debug)]
pub struct Pruning<'a> {
    pub pruner: &'a Pruner,
    pub config: &'a PruneConfig,
}

fn limits(model: &Model, dependencies: bool, cross_task: bool) -> SpaceLimits {
    let d = &model.config.decoding;
    SpaceLimits {
        max_span_len: d.max_span_len,
        dependencies: dependencies && !model.symbols.labels.is_empty(),
        cross_task,
        root_arcs: true,
        labels: model.symbols.labels.clone(),
        allowed_spans: None,
        allowed_arcs: None,
    }
}

/// Candidate space for one target. Dependency and cross-task parts follow the
/// model's decoding options.
pub fn frame_space(
    model: &Model,
    sentence: &Sentence,
    target: &Target,
    ontology: &Ontology,
    pruning: Option<Pruning>,
) -> Result<CandidateSpace> {
    let d = &model.config.decoding;
    let mut l = limits(model, d.joint, d.cross_task);
    if let Some(p) = pruning {
        let cfg = PruneConfig {
            max_span_len: d.max_span_len,
            ..p.config.clone()
        };
        l.allowed_spans = Some(prune_spans(p.pruner, sentence, target, &cfg)?);
        if l.dependencies {
            l.allowed_arcs = Some(prune_arcs(p.pruner, sentence, p.config)?);
        }
    }
    CandidateSpace::build(sentence, Some(target), ontology, &l)
}

/// Dependency-only candidate space.
pub fn sdp_space(model: &Model, sentence: &Sentence, ontology: &Ontology, pruning: Option<Pruning>) -> Result<CandidateSpace> {
    if model.symbols.labels.is_empty() {
        return Err(Error::Config("model has no dependency labels".into()));
    }
    let mut l = limits(model, true, false);
    if let Some(p) = pruning {
        l.allowed_arcs = Some(prune_arcs(p.pruner, sentence, p.config)?);
    }
    CandidateSpace::build(sentence, None, ontology, &l)
}

/// The two structures a hinge loss compares, with the cost-augmented value.
#[derive(Clone, Debug, PartialEq)]
pub struct Hinge {
    /// `S(predicted) + δ − S(reference)`, truncated at zero.
    pub value: f64,
    pub cost: f64,
    /// Cost-augmented argmax; empty when the loss is truncated.
    pub predicted: BTreeSet<PartId>,
    /// Gold structure (with its best latent completion); empty when truncated.
    pub reference: BTreeSet<PartId>,
}

impl Hinge {
    fn new(space: &CandidateSpace, predicted: BTreeSet<PartId>, reference: BTreeSet<PartId>, cost: f64) -> Self {
        let value = space.total_score(&predicted) + cost - space.total_score(&reference);
        if value > 0.0 {
            Hinge {
                value,
                cost,
                predicted,
                reference,
            }
        } else {
            Hinge {
                value: 0.0,
                cost,
                predicted: BTreeSet::new(),
                reference: BTreeSet::new(),
            }
        }
    }
}

/// Latent structured hinge on a scored frame space:
/// `max_{y,z} S(y, z) + δ(y, y*) − max_z S(y*, z)`. The cost covers frame
/// parts only.
pub fn latent_hinge(space: &CandidateSpace, gold: &FrameParse, cost: &CostConfig, config: &DecodeConfig) -> Result<Hinge> {
    let gold_parts = space.gold_frame_parts(gold).parts;
    let mut augmented = space.clone();
    augmented.set_scores(cost_augment(space, &gold_parts, cost, CostScope::Frames))?;
    let predicted = decode(&augmented, DecodeMode::Joint, config)?.parts;
    let frame_parts: BTreeSet<PartId> = predicted.iter().copied().filter(|&p| space.part(p).is_frame_part()).collect();
    let delta = weighted_hamming(&frame_parts, &gold_parts, cost);
    let reference = decode(space, DecodeMode::LatentCompletion(gold), config)?.parts;
    Ok(Hinge::new(space, predicted, reference, delta))
}

/// Structured hinge on a scored dependency space:
/// `max_z S(z) + δ(z, z*) − S(z*)`.
pub fn sdp_hinge(space: &CandidateSpace, gold: &DependencyGraph, cost: &CostConfig, config: &DecodeConfig) -> Result<Hinge> {
    let gold_parts = space.gold_dependency_parts(gold).parts;
    let mut augmented = space.clone();
    augmented.set_scores(cost_augment(space, &gold_parts, cost, CostScope::Dependencies))?;
    let predicted = decode(&augmented, DecodeMode::DependenciesOnly, config)?.parts;
    let dep_parts: BTreeSet<PartId> = predicted
        .iter()
        .copied()
        .filter(|&p| space.part(p).is_dependency_part())
        .collect();
    let delta = weighted_hamming(&dep_parts, &gold_parts, cost);
    Ok(Hinge::new(space, predicted, gold_parts, delta))
}

/// `Σ_{predicted} s − Σ_{reference} s + δ` as a graph node, so gradients reach
/// the scores of the parts active in either structure.
pub fn hinge_node(g: &mut Graph, nodes: &[NodeId], hinge: &Hinge) -> Result<NodeId> {
    if hinge.predicted.is_empty() && hinge.reference.is_empty() {
        return Ok(g.constant(0.0));
    }
    let mut weights: BTreeMap<PartId, f64> = BTreeMap::new();
    for &p in &hinge.predicted {
        *weights.entry(p).or_default() += 1.0;
    }
    for &p in &hinge.reference {
        *weights.entry(p).or_default() -= 1.0;
    }
    let terms: Vec<(NodeId, f64)> = weights
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|(p, w)| (nodes[p.index()], w))
        .collect();
    let c = g.constant(hinge.cost);
    if terms.is_empty() {
        return Ok(c);
    }
    let s = g.weighted_sum(&terms)?;
    g.add(s, c)
}

/// `λ Σ |s_c|` over the cross-task parts of `space`.
pub fn l1_penalty(g: &mut Graph, space: &CandidateSpace, nodes: &[NodeId], lambda: f64) -> Result<NodeId> {
    if lambda == 0.0 || space.cross_task().is_empty() {
        return Ok(g.constant(0.0));
    }
    let abs: Vec<NodeId> = space.cross_task().iter().map(|p| g.abs(nodes[p.index()])).collect();
    let total = g.sum_all(&abs)?;
    Ok(g.scale(total, lambda))
}

fn scored(g: &Graph, space: &CandidateSpace, nodes: &[NodeId]) -> Result<CandidateSpace> {
    let mut s = space.clone();
    s.set_scores(nodes.iter().map(|&n| g.scalar(n)).collect())?;
    Ok(s)
}

/// Scores `space` with `model` and returns the latent hinge loss node.
#[allow(clippy::too_many_arguments)]
pub fn latent_hinge_loss(
    g: &mut Graph,
    model: &Model,
    sentence: &Sentence,
    space: &CandidateSpace,
    gold: &FrameParse,
    cost: &CostConfig,
    config: &DecodeConfig,
    dropout: Option<&mut dyn RngCore>,
) -> Result<NodeId> {
    let nodes = model.score_space(g, sentence, space, dropout)?;
    let h = latent_hinge(&scored(g, space, &nodes)?, gold, cost, config)?;
    hinge_node(g, &nodes, &h)
}

/// Scores `space` with `model` and returns the dependency hinge loss node.
#[allow(clippy::too_many_arguments)]
pub fn sdp_hinge_loss(
    g: &mut Graph,
    model: &Model,
    sentence: &Sentence,
    space: &CandidateSpace,
    gold: &DependencyGraph,
    cost: &CostConfig,
    config: &DecodeConfig,
    dropout: Option<&mut dyn RngCore>,
) -> Result<NodeId> {
    let nodes = model.score_space(g, sentence, space, dropout)?;
    let h = sdp_hinge(&scored(g, space, &nodes)?, gold, cost, config)?;
    hinge_node(g, &nodes, &h)
}

/// Mean of the members' part scores. All members must share symbols so they
/// see the same candidate space.
pub fn ensemble_scores(members: &[&Model], sentence: &Sentence, space: &CandidateSpace) -> Result<Vec<f64>> {
    let (first, rest) = members
        .split_first()
        .ok_or_else(|| Error::Config("an ensemble needs at least one model".into()))?;
    for m in rest {
        if m.symbols != first.symbols || m.config.decoding != first.config.decoding {
            return Err(Error::Config("ensemble members build different candidate spaces".into()));
        }
    }
    let mut total = first.scores(sentence, space)?;
    for m in rest {
        for (t, s) in total.iter_mut().zip(m.scores(sentence, space)?) {
            *t += s;
        }
    }
    let k = members.len() as f64;
    Ok(total.into_iter().map(|t| t / k).collect())
}

/// Frame parses for every target, decoded jointly with the latent graph when
/// the model is joint.
pub fn predict_frames(
    members: &[&Model],
    inputs: &[(Sentence, Vec<Target>)],
    ontology: &Ontology,
    pruning: Option<Pruning>,
) -> Result<Vec<Sentence>> {
    let model = *members.first().ok_or_else(|| Error::Config("no model".into()))?;
    let config = decode_config(model, true);
    inputs
        .par_iter()
        .map(|(sentence, targets)| {
            let mut parses = Vec::with_capacity(targets.len());
            for t in targets {
                let mut space = frame_space(model, sentence, t, ontology, pruning)?;
                space.set_scores(ensemble_scores(members, sentence, &space)?)?;
                let d = decode(&space, DecodeMode::Joint, &config)?;
                parses.push(d.frame.ok_or_else(|| Error::Invalid(format!("no frame decoded for `{}`", sentence.id)))?);
            }
            let mut s = Sentence::new(sentence.id.clone(), sentence.tokens.clone());
            s.supervision = Supervision::Frames(parses);
            Ok(s)
        })
        .collect()
}

/// Dependency graphs for every sentence.
pub fn predict_sdp(members: &[&Model], sentences: &[Sentence], ontology: &Ontology, pruning: Option<Pruning>) -> Result<Vec<Sentence>> {
    let model = *members.first().ok_or_else(|| Error::Config("no model".into()))?;
    let config = decode_config(model, false);
    sentences
        .par_iter()
        .map(|sentence| {
            let mut space = sdp_space(model, sentence, ontology, pruning)?;
            space.set_scores(ensemble_scores(members, sentence, &space)?)?;
            let d = decode(&space, DecodeMode::DependenciesOnly, &config)?;
            let mut s = Sentence::new(sentence.id.clone(), sentence.tokens.clone());
            s.supervision = Supervision::Dependencies(d.graph.unwrap_or_default());
            Ok(s)
        })
        .collect()
}

/// Sentences stripped of supervision, paired with their gold targets.
pub fn targets_of(sentences: &[Sentence]) -> Vec<(Sentence, Vec<Target>)> {
    sentences
        .iter()
        .map(|s| {
            let t = s.frames().iter().map(|p| p.target.clone()).collect();
            (Sentence::new(s.id.clone(), s.tokens.clone()), t)
        })
        .collect()
}

/// Metrics of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub dev_fn_f1: Option<f64>,
    pub dev_sdp_f1: Option<f64>,
    pub seconds: f64,
}

impl EpochMetrics {
    /// Tab-separated: epoch, rate, mean loss, FN F1, SDP F1, seconds. Missing
    /// scores are written as `-`.
    pub fn tsv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        format!(
            "{}\t{}\t{:.6}\t{}\t{}\t{:.3}",
            self.epoch,
            self.learning_rate,
            self.train_loss,
            opt(self.dev_fn_f1),
            opt(self.dev_sdp_f1),
            self.seconds
        )
    }

    /// The early-stopping criterion: FN dev F1, else SDP dev F1, else the
    /// negated training loss.
    fn selection_score(&self) -> f64 {
        self.dev_fn_f1.or(self.dev_sdp_f1).unwrap_or(-self.train_loss)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters are kept; ties keep the earlier epoch.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn to_tsv(&self) -> String {
        self.epochs.iter().map(|e| e.tsv_line() + "\n").collect()
    }
}

enum Item<'a> {
    Frame(&'a Sentence, &'a FrameParse, CandidateSpace),
    Graph(&'a Sentence, &'a DependencyGraph, CandidateSpace),
}

impl Item<'_> {
    fn id(&self) -> &str {
        match self {
            Item::Frame(s, ..) | Item::Graph(s, ..) => &s.id,
        }
    }
}

fn frame_items<'a>(
    model: &Model,
    sentences: &'a [Sentence],
    ontology: &Ontology,
    pruning: Option<Pruning>,
) -> Result<Vec<Item<'a>>> {
    let mut out = Vec::new();
    for s in sentences {
        for p in s.frames() {
            out.push(Item::Frame(s, p, frame_space(model, s, &p.target, ontology, pruning)?));
        }
    }
    Ok(out)
}

/// Trains `model` in place and leaves it at the best epoch's parameters.
/// `on_epoch` sees every epoch's metrics and model as soon as the epoch ends.
///
/// With `joint` off, frame instances carry no dependency parts and the
/// dependency corpus is used only when there is no frame corpus.
pub fn train(
    model: &mut Model,
    corpora: &Corpora,
    ontology: &Ontology,
    config: &TrainConfig,
    pruning: Option<Pruning>,
    mut on_epoch: impl FnMut(&EpochMetrics, &Model) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    model.config.validate()?;
    model.store.clip = config.clip;
    model.store.l2 = config.l2;
    model.encoder.config.word_dropout = config.word_dropout;
    let has_frames = !corpora.fn_train.is_empty() || !corpora.exemplars.is_empty();
    let use_graphs = !model.symbols.labels.is_empty() && (model.config.decoding.joint || !has_frames);
    if !has_frames && !use_graphs {
        return Err(Error::EmptyCorpus);
    }
    for s in corpora.fn_train.iter().chain(&corpora.exemplars).chain(&corpora.fn_dev) {
        s.validate(Some(ontology))?;
    }

    let mut fixed = frame_items(model, &corpora.fn_train, ontology, pruning)?;
    if use_graphs {
        for s in &corpora.dm_train {
            if let Some(g) = s.graph() {
                fixed.push(Item::Graph(s, g, sdp_space(model, s, ontology, pruning)?));
            }
        }
    }
    let exemplars = frame_items(model, &corpora.exemplars, ontology, pruning)?;
    if fixed.is_empty() && exemplars.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dev_targets = targets_of(&corpora.fn_dev);
    let has_fn_dev = dev_targets.iter().any(|(_, t)| !t.is_empty());
    let sdp_dev = use_graphs && corpora.dm_dev.iter().any(|s| s.graph().is_some());

    let dcfg = decode_config(model, false);
    let lambda = if model.config.decoding.cross_task { config.lambda } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: None,
    };
    let finite = |space: CandidateSpace, item: &Item| {
        if space.scores.iter().all(|v| v.is_finite()) {
            Ok(space)
        } else {
            Err(Error::NonFiniteLoss(item.id().to_string()))
        }
    };
    let mut best: Option<(f64, ParameterStore)> = None;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate_at(epoch);
        let take = (config.exemplar_fraction * exemplars.len() as f64).round() as usize;
        let mut order: Vec<&Item> = fixed.iter().collect();
        order.extend(sample(&mut rng, exemplars.len(), take).into_iter().map(|k| &exemplars[k]));
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for item in &order {
            let (value, grads) = {
                let mut g = Graph::new(&model.store);
                let (space, hinge, nodes) = match item {
                    Item::Frame(s, parse, space) => {
                        let nodes = model.score_space(&mut g, s, space, Some(&mut rng))?;
                        let h = latent_hinge(&finite(scored(&g, space, &nodes)?, item)?, parse, &config.cost, &dcfg)?;
                        (space, h, nodes)
                    }
                    Item::Graph(s, graph, space) => {
                        let nodes = model.score_space(&mut g, s, space, Some(&mut rng))?;
                        let h = sdp_hinge(&finite(scored(&g, space, &nodes)?, item)?, graph, &config.cost, &dcfg)?;
                        (space, h, nodes)
                    }
                };
                let h = hinge_node(&mut g, &nodes, &hinge)?;
                let p = l1_penalty(&mut g, space, &nodes, lambda)?;
                let loss = g.add(h, p)?;
                let value = g.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss(item.id().to_string()));
                }
                (value, g.backward(loss)?)
            };
            total += value;
            model.store.accumulate(&grads);
            model.store.clip_and_step(lr)?;
        }

        let dev_fn_f1 = if has_fn_dev {
            let pred = predict_frames(&[&*model], &dev_targets, ontology, pruning)?;
            Some(eval_frames(&corpora.fn_dev, &pred, Some(ontology))?.parts.f1)
        } else {
            None
        };
        let dev_sdp_f1 = if sdp_dev {
            let pred = predict_sdp(&[&*model], &corpora.dm_dev, ontology, pruning)?;
            Some(eval_sdp(&corpora.dm_dev, &pred, true)?.arcs.f1)
        } else {
            None
        };
        let metrics = EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss: if order.is_empty() { 0.0 } else { total / order.len() as f64 },
            dev_fn_f1,
            dev_sdp_f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("{}", metrics.tsv_line());
        let score = metrics.selection_score();
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.store.clone()));
            report.best_epoch = Some(epoch);
        }
        on_epoch(&metrics, model)?;
        report.epochs.push(metrics);
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(report)
}

/// Number of cross-task parts, over frame sentences, whose score magnitude
/// is at most `epsilon`, and the total count.
pub fn sparse_cross_task(model: &Model, sentences: &[Sentence], ontology: &Ontology, epsilon: f64) -> Result<(usize, usize)> {
    let (mut small, mut all) = (0, 0);
    for s in sentences {
        for p in s.frames() {
            let space = frame_space(model, s, &p.target, ontology, None)?;
            let scores = model.scores(s, &space)?;
            for &c in space.cross_task() {
                all += 1;
                if scores[c.index()].abs() <= epsilon {
                    small += 1;
                }
            }
        }
    }
    Ok((small, all))
}
