//! Local part scores: low-rank multilinear forms for frame and cross-task
//! parts, MLPs with a final linear layer for dependency parts.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParameterStore};
use crate::encoder::{discrete_features, Contextualized, Encoder, EncoderConfig, Mlp, Vocabularies};
use crate::model::{CandidateSpace, Ontology, Part, Sentence};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Width of frame, LU, role and label embeddings.
    pub symbol_dim: usize,
    pub rank: usize,
    pub arc_hidden: usize,
    pub arc_out: usize,
    pub decoding: DecodingOptions,
}

/// How candidate spaces are built and decoded for this model. Stored with the
/// parameters so prediction rebuilds the spaces used in training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingOptions {
    pub max_span_len: usize,
    /// Frame instances also carry (latent) dependency parts.
    pub joint: bool,
    /// Generate cross-task parts; needs `joint`.
    pub cross_task: bool,
    /// Graphs may lack a top.
    pub optional_top: bool,
    /// Cross-task scores at most this large in magnitude are skipped when
    /// predicting.
    pub drop_epsilon: Option<f64>,
    /// ADMM iterations per branch-and-bound node.
    pub solver_max_iter: usize,
    /// Branch-and-bound nodes before the best repaired solution is returned.
    pub solver_max_nodes: usize,
    pub solver_tol: f64,
}

impl Default for DecodingOptions {
    fn default() -> Self {
        DecodingOptions {
            max_span_len: 20,
            joint: true,
            cross_task: true,
            optional_top: false,
            drop_epsilon: Some(1e-3),
            solver_max_iter: 300,
            solver_max_nodes: 20,
            solver_tol: 1e-4,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            symbol_dim: 100,
            rank: 100,
            arc_hidden: 100,
            arc_out: 100,
            decoding: DecodingOptions::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if [self.symbol_dim, self.rank, self.arc_hidden, self.arc_out].contains(&0) {
            return Err(Error::Config(format!("scorer dimensions must be positive: {self:?}")));
        }
        let d = &self.decoding;
        if d.max_span_len == 0 || d.solver_max_iter == 0 || d.solver_max_nodes == 0 {
            return Err(Error::Config("max_span_len and solver budgets must be positive".into()));
        }
        if d.solver_tol.is_nan() || d.solver_tol <= 0.0 {
            return Err(Error::Config(format!("solver_tol must be positive, got {}", d.solver_tol)));
        }
        if self.decoding.cross_task && !self.decoding.joint {
            return Err(Error::Config("cross-task parts require joint decoding".into()));
        }
        Ok(())
    }
}

/// Frame, LU, role and label inventories, each indexing an embedding table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Symbols {
    pub frames: Vec<String>,
    pub lus: Vec<String>,
    pub roles: Vec<String>,
    pub labels: Vec<String>,
    /// Labels that never occur twice among one token's outgoing arcs.
    #[serde(default)]
    pub deterministic: Vec<String>,
}

impl Symbols {
    pub fn new(ontology: &Ontology, labels: &[String]) -> Self {
        Symbols {
            frames: ontology.frames().map(|(f, _)| f.to_string()).collect(),
            lus: ontology.lus().map(|(l, _)| l.to_string()).collect(),
            roles: ontology.all_roles().into_iter().map(str::to_string).collect(),
            labels: labels.to_vec(),
            deterministic: Vec::new(),
        }
    }

    /// Positions of the deterministic labels in `labels`.
    pub fn deterministic_indices(&self) -> BTreeSet<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| self.deterministic.contains(l))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
struct SymbolIndex {
    frames: HashMap<String, usize>,
    lus: HashMap<String, usize>,
    roles: HashMap<String, usize>,
    labels: HashMap<String, usize>,
}

impl SymbolIndex {
    fn new(s: &Symbols) -> Self {
        let index = |v: &[String]| v.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        SymbolIndex {
            frames: index(&s.frames),
            lus: index(&s.lus),
            roles: index(&s.roles),
            labels: index(&s.labels),
        }
    }
}

/// A dependency part scorer: MLP then `w · g`.
#[derive(Clone, Debug)]
pub struct ArcScorer {
    pub mlp: Mlp,
    pub w: ParamId,
}

impl ArcScorer {
    fn new<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        name: &str,
        inputs: &[(&str, usize)],
        config: &ModelConfig,
    ) -> Result<Self> {
        Ok(ArcScorer {
            mlp: Mlp::new(store, rng, name, inputs, config.arc_hidden, config.arc_out)?,
            w: store.add_glorot_vector(format!("{name}.w"), config.arc_out, rng)?,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.mlp.params();
        p.push(self.w);
        p
    }
}

/// Encoder plus scorers, with every parameter in one store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParameterStore,
    pub encoder: Encoder,
    pub symbols: Symbols,
    index: SymbolIndex,
    pub frame_emb: ParamId,
    pub lu_emb: ParamId,
    pub role_emb: ParamId,
    pub label_emb: ParamId,
    /// Rank factors for the frame, target and LU slots.
    pub w: [ParamId; 3],
    /// Rank factors for the span and role slots.
    pub u: [ParamId; 2],
    /// Rank factors for the arc-weight and arc-representation slots.
    pub v: [ParamId; 2],
    pub head: ArcScorer,
    pub arc: ArcScorer,
    pub labeled: ArcScorer,
    /// Stands in for `h_i` when the head is the virtual root.
    pub root: ParamId,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabularies, symbols: Symbols, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let encoder = Encoder::new(&mut store, &mut rng, "", config.encoder.clone(), vocab)?;
        let d = config.symbol_dim;
        let r = config.rank;
        let ctx = config.encoder.ctx_dim();
        let out = config.encoder.mlp_out;
        let mut table = |store: &mut ParameterStore, name: &str, rows: usize| {
            store.add_glorot(format!("emb.{name}"), rows.max(1), d, &mut rng)
        };
        let frame_emb = table(&mut store, "frame", symbols.frames.len())?;
        let lu_emb = table(&mut store, "lu", symbols.lus.len())?;
        let role_emb = table(&mut store, "role", symbols.roles.len())?;
        let label_emb = table(&mut store, "label", symbols.labels.len())?;
        let w = [
            store.add_glorot("rank.w1", r, d, &mut rng)?,
            store.add_glorot("rank.w2", r, out, &mut rng)?,
            store.add_glorot("rank.w3", r, d, &mut rng)?,
        ];
        let u = [
            store.add_glorot("rank.u1", r, out, &mut rng)?,
            store.add_glorot("rank.u2", r, d, &mut rng)?,
        ];
        let v = [
            store.add_glorot("rank.v1", r, config.arc_out, &mut rng)?,
            store.add_glorot("rank.v2", r, config.arc_out, &mut rng)?,
        ];
        let head = ArcScorer::new(&mut store, &mut rng, "head", &[("token", ctx)], &config)?;
        let arc = ArcScorer::new(&mut store, &mut rng, "arc", &[("head", ctx), ("dep", ctx)], &config)?;
        let labeled = ArcScorer::new(
            &mut store,
            &mut rng,
            "labeled",
            &[("head", ctx), ("dep", ctx), ("label", d)],
            &config,
        )?;
        let root = store.add_glorot_vector("arc.root", ctx, &mut rng)?;
        Ok(Model {
            index: SymbolIndex::new(&symbols),
            config,
            store,
            encoder,
            symbols,
            frame_emb,
            lu_emb,
            role_emb,
            label_emb,
            w,
            u,
            v,
            head,
            arc,
            labeled,
            root,
        })
    }

    fn frame_id(&self, f: &str) -> Result<usize> {
        self.index
            .frames
            .get(f)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("frame `{f}` not in the model's ontology")))
    }

    fn lu_id(&self, lu: &str) -> Result<usize> {
        self.index.lus.get(lu).copied().ok_or_else(|| Error::UnknownLu(lu.into()))
    }

    fn role_id(&self, r: &str) -> Result<usize> {
        self.index
            .roles
            .get(r)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("role `{r}` not in the model's ontology")))
    }

    fn label_id(&self, l: &str) -> Result<usize> {
        self.index.labels.get(l).copied().ok_or_else(|| Error::UnknownLabel(l.into()))
    }

    /// `Σ_k (w¹_k·g_fr)(w²_k·g_tgt)(w³_k·g_lu)`.
    pub fn score_predicate(&self, g: &mut Graph, fr: NodeId, tgt: NodeId, lu: NodeId) -> Result<NodeId> {
        let p = self.predicate_factors(g, fr, tgt, lu)?;
        g.prod_sum(&p)
    }

    fn predicate_factors(&self, g: &mut Graph, fr: NodeId, tgt: NodeId, lu: NodeId) -> Result<Vec<NodeId>> {
        Ok(vec![
            g.matvec(self.w[0], fr)?,
            g.matvec(self.w[1], tgt)?,
            g.matvec(self.w[2], lu)?,
        ])
    }

    /// `Σ_k (w¹_k·g_fr)(w²_k·g_tgt)(w³_k·g_lu)(u¹_k·g_span)(u²_k·g_role)`.
    pub fn score_argument(
        &self,
        g: &mut Graph,
        fr: NodeId,
        tgt: NodeId,
        lu: NodeId,
        span: NodeId,
        role: NodeId,
    ) -> Result<NodeId> {
        let mut p = self.predicate_factors(g, fr, tgt, lu)?;
        p.push(g.matvec(self.u[0], span)?);
        p.push(g.matvec(self.u[1], role)?);
        g.prod_sum(&p)
    }

    /// The argument product times `(v¹_k·w^ua)(v²_k·g^ua)`.
    #[allow(clippy::too_many_arguments)]
    pub fn score_cross_task(
        &self,
        g: &mut Graph,
        fr: NodeId,
        tgt: NodeId,
        lu: NodeId,
        span: NodeId,
        role: NodeId,
        w_ua: NodeId,
        g_ua: NodeId,
    ) -> Result<NodeId> {
        let mut p = self.predicate_factors(g, fr, tgt, lu)?;
        p.push(g.matvec(self.u[0], span)?);
        p.push(g.matvec(self.u[1], role)?);
        p.push(g.matvec(self.v[0], w_ua)?);
        p.push(g.matvec(self.v[1], g_ua)?);
        g.prod_sum(&p)
    }

    fn token(&self, g: &mut Graph, ctx: &Contextualized, i: usize) -> NodeId {
        if i == ctx.len() {
            g.param(self.root)
        } else {
            ctx.h[i]
        }
    }

    /// `g^ua` for the arc `head → dep`.
    pub fn arc_representation(&self, g: &mut Graph, ctx: &Contextualized, head: usize, dep: usize) -> Result<NodeId> {
        let h = self.token(g, ctx, head);
        let d = self.token(g, ctx, dep);
        self.arc.mlp.apply(g, &[h, d])
    }

    /// Score of a head, unlabeled-arc or labeled-arc part, computed on its
    /// own. `labels` maps label indices of the part to names.
    pub fn score_dependency_part(
        &self,
        g: &mut Graph,
        ctx: &Contextualized,
        part: &Part,
        labels: &[String],
    ) -> Result<NodeId> {
        let n = ctx.len();
        let check = |i: usize, root_ok: bool| {
            if i < n || (root_ok && i == n) {
                Ok(())
            } else {
                Err(Error::Invalid(format!("token {i} outside {n} tokens")))
            }
        };
        let (scorer, rep) = match *part {
            Part::Head { token } => {
                check(token, false)?;
                (&self.head, self.head.mlp.apply(g, &[ctx.h[token]])?)
            }
            Part::UnlabeledArc { head, dep } => {
                check(head, true)?;
                check(dep, false)?;
                (&self.arc, self.arc_representation(g, ctx, head, dep)?)
            }
            Part::LabeledArc { head, dep, label } => {
                check(head, true)?;
                check(dep, false)?;
                let name = labels.get(label).ok_or_else(|| Error::UnknownLabel(format!("#{label}")))?;
                let l = g.lookup(self.label_emb, self.label_id(name)?)?;
                let h = self.token(g, ctx, head);
                let d = self.token(g, ctx, dep);
                (&self.labeled, self.labeled.mlp.apply(g, &[h, d, l])?)
            }
            _ => return Err(Error::Invalid(format!("{part:?} is not a dependency part"))),
        };
        let w = g.param(scorer.w);
        g.dot(w, rep)
    }

    pub fn encode(&self, g: &mut Graph, sentence: &Sentence, dropout: Option<&mut dyn RngCore>) -> Result<Contextualized> {
        self.encoder.encode(g, sentence, dropout)
    }

    /// One score node per part of `space`, in part order. Shared pieces
    /// (projections, span and arc representations) are computed once.
    pub fn score_space(
        &self,
        g: &mut Graph,
        sentence: &Sentence,
        space: &CandidateSpace,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Vec<NodeId>> {
        if sentence.len() != space.sentence_len() {
            return Err(Error::Misaligned(format!(
                "sentence `{}` has {} tokens, candidate space {}",
                sentence.id,
                sentence.len(),
                space.sentence_len()
            )));
        }
        let ctx = self.encode(g, sentence, dropout)?;
        let n = ctx.len();
        let mut nodes: Vec<Option<NodeId>> = vec![None; space.len()];

        // Frame parts.
        let mut pred_product: HashMap<usize, NodeId> = HashMap::new();
        let mut arg_product: HashMap<usize, NodeId> = HashMap::new();
        if let Some(target) = space.target() {
            let tgt = self.encoder.target_representation(g, &ctx, target)?;
            let lu = g.lookup(self.lu_emb, self.lu_id(&target.lu)?)?;
            let w2 = g.matvec(self.w[1], tgt)?;
            let w3 = g.matvec(self.w[2], lu)?;
            let mut spans: HashMap<(usize, usize), NodeId> = HashMap::new();
            let mut roles: HashMap<usize, NodeId> = HashMap::new();
            for id in space.ids() {
                match space.part(id) {
                    Part::Predicate { frame } => {
                        let fr = g.lookup(self.frame_emb, self.frame_id(&space.frames()[frame])?)?;
                        let w1 = g.matvec(self.w[0], fr)?;
                        let a = g.mul(w1, w2)?;
                        let p = g.mul(a, w3)?;
                        pred_product.insert(frame, p);
                        nodes[id.0] = Some(g.sum(p));
                    }
                    Part::Argument { frame, start, end, role } => {
                        let s = match spans.get(&(start, end)) {
                            Some(&s) => s,
                            None => {
                                let phi = discrete_features(start, end, target.start);
                                let rep = self.encoder.span_representation(g, &ctx, start, end, phi)?;
                                let s = g.matvec(self.u[0], rep)?;
                                spans.insert((start, end), s);
                                s
                            }
                        };
                        let role_id = self.role_id(&space.roles(frame)[role])?;
                        let r = match roles.get(&role_id) {
                            Some(&r) => r,
                            None => {
                                let e = g.lookup(self.role_emb, role_id)?;
                                let r = g.matvec(self.u[1], e)?;
                                roles.insert(role_id, r);
                                r
                            }
                        };
                        let p = pred_product[&frame];
                        let a = g.mul(p, s)?;
                        let a = g.mul(a, r)?;
                        arg_product.insert(id.0, a);
                        nodes[id.0] = Some(g.sum(a));
                    }
                    _ => {}
                }
            }
        }

        // Dependency parts.
        let mut g_ua: HashMap<usize, NodeId> = HashMap::new();
        if space.heads().next().is_some() || !space.arcs().is_empty() {
            let w_head = g.param(self.head.w);
            let w_arc = g.param(self.arc.w);
            let w_lab = g.param(self.labeled.w);
            let root = g.param(self.root);
            let token = |i: usize| if i == n { root } else { ctx.h[i] };
            let mut arc_proj: HashMap<(usize, usize), NodeId> = HashMap::new();
            let mut lab_proj: HashMap<(usize, usize), NodeId> = HashMap::new();
            let mut label_proj: HashMap<usize, NodeId> = HashMap::new();
            let proj = |g: &mut Graph, cache: &mut HashMap<(usize, usize), NodeId>, mlp: &Mlp, block: usize, i: usize| -> Result<NodeId> {
                if let Some(&p) = cache.get(&(block, i)) {
                    return Ok(p);
                }
                let p = mlp.project(g, block, token(i))?;
                cache.insert((block, i), p);
                Ok(p)
            };
            for id in space.ids() {
                match space.part(id) {
                    Part::Head { token: t } => {
                        let rep = self.head.mlp.apply(g, &[ctx.h[t]])?;
                        nodes[id.0] = Some(g.dot(w_head, rep)?);
                    }
                    Part::UnlabeledArc { head, dep } => {
                        let a = proj(g, &mut arc_proj, &self.arc.mlp, 0, head)?;
                        let b = proj(g, &mut arc_proj, &self.arc.mlp, 1, dep)?;
                        let rep = self.arc.mlp.combine(g, &[a, b])?;
                        g_ua.insert(id.0, rep);
                        nodes[id.0] = Some(g.dot(w_arc, rep)?);
                    }
                    Part::LabeledArc { head, dep, label } => {
                        let a = proj(g, &mut lab_proj, &self.labeled.mlp, 0, head)?;
                        let b = proj(g, &mut lab_proj, &self.labeled.mlp, 1, dep)?;
                        let l = match label_proj.get(&label) {
                            Some(&l) => l,
                            None => {
                                let e = g.lookup(self.label_emb, self.label_id(&space.labels()[label])?)?;
                                let l = self.labeled.mlp.project(g, 2, e)?;
                                label_proj.insert(label, l);
                                l
                            }
                        };
                        let rep = self.labeled.mlp.combine(g, &[a, b, l])?;
                        nodes[id.0] = Some(g.dot(w_lab, rep)?);
                    }
                    _ => {}
                }
            }
        }

        // Cross-task parts.
        if !space.cross_task().is_empty() {
            let w_ua = g.param(self.arc.w);
            let v1 = g.matvec(self.v[0], w_ua)?;
            let mut v2: HashMap<usize, NodeId> = HashMap::new();
            for &id in space.cross_task() {
                let Part::CrossTask { argument, arc } = space.part(id) else {
                    unreachable!("cross-task index holds cross-task parts")
                };
                let b = match v2.get(&arc.0) {
                    Some(&b) => b,
                    None => {
                        let b = g.matvec(self.v[1], g_ua[&arc.0])?;
                        v2.insert(arc.0, b);
                        b
                    }
                };
                nodes[id.0] = Some(g.prod_sum(&[arg_product[&argument.0], v1, b])?);
            }
        }
        Ok(nodes
            .into_iter()
            .map(|n| n.expect("every part kind is scored"))
            .collect())
    }

    /// Part scores for `space` at inference time.
    pub fn scores(&self, sentence: &Sentence, space: &CandidateSpace) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let nodes = self.score_space(&mut g, sentence, space, None)?;
        Ok(nodes.iter().map(|&n| g.scalar(n)).collect())
    }

    /// Rebuilds symbol and vocabulary indices after deserialization.
    pub fn reindex(&mut self) {
        self.index = SymbolIndex::new(&self.symbols);
        self.encoder.vocab.reindex();
    }
}

/// `Σ_k Π_j factors[j][k]` on plain vectors.
pub fn multilinear(factors: &[&[f64]]) -> f64 {
    let r = factors.first().map_or(0, |f| f.len());
    (0..r).map(|k| factors.iter().map(|f| f[k]).product::<f64>()).sum()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Array, GradCheckConfig};
    use crate::model::tests::{sentence, toy_ontology};
    use crate::model::{SpaceLimits, Target};

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                word_dim: 4,
                lemma_dim: 2,
                pos_dim: 2,
                lstm_layers: 1,
                lstm_hidden: 3,
                mlp_hidden: 4,
                mlp_out: 3,
                word_dropout: 1.0,
            },
            symbol_dim: 3,
            rank: 2,
            arc_hidden: 4,
            arc_out: 3,
            decoding: DecodingOptions::default(),
        }
    }

    pub(crate) fn tiny_model(seed: u64) -> Model {
        let labels = vec!["A".to_string(), "B".to_string()];
        let vocab = Vocabularies::build([&sentence(4)]);
        Model::new(tiny_config(), vocab, Symbols::new(&toy_ontology(), &labels), seed).unwrap()
    }

    fn space(n: usize) -> CandidateSpace {
        let limits = SpaceLimits {
            labels: vec!["A".into(), "B".into()],
            max_span_len: 2,
            ..Default::default()
        };
        let t = Target::new(1, 1, "move.v");
        CandidateSpace::build(&sentence(n), Some(&t), &toy_ontology(), &limits).unwrap()
    }

    fn set(store: &mut ParameterStore, id: ParamId, rows: usize, data: Vec<f64>) {
        let cols = data.len() / rows;
        let shape = if rows == 1 { vec![cols] } else { vec![rows, cols] };
        store.set(&store.name(id).to_string(), Array::new(shape, data).unwrap()).unwrap();
    }

    #[test]
    fn predicate_rank_one_product() {
        let mut m = tiny_model(0);
        // Each factor row picks the first coordinate; rank 2 with the second row zero.
        for w in m.w {
            let cols = m.store.value(w).rows_cols().1;
            let mut data = vec![0.0; 2 * cols];
            data[0] = 1.0;
            set(&mut m.store, w, 2, data);
        }
        let mut g = Graph::new(&m.store);
        let fr = g.input(vec![2.0, 0.0, 0.0]);
        let tgt = g.input(vec![3.0, 0.0, 0.0]);
        let lu = g.input(vec![4.0, 0.0, 0.0]);
        let s = m.score_predicate(&mut g, fr, tgt, lu).unwrap();
        assert_eq!(g.scalar(s), 24.0);
        let zero = g.input(vec![0.0; 3]);
        let s = m.score_predicate(&mut g, zero, tgt, lu).unwrap();
        assert_eq!(g.scalar(s), 0.0);
    }

    #[test]
    fn predicate_rank_two_sums_products() {
        let mut m = tiny_model(0);
        // Rank 0 reads coordinate 0, rank 1 reads coordinate 1.
        for w in m.w {
            set(&mut m.store, w, 2, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        }
        let mut g = Graph::new(&m.store);
        let fr = g.input(vec![5.0, -3.0, 0.0]);
        let tgt = g.input(vec![1.0, 1.0, 0.0]);
        let lu = g.input(vec![1.0, 1.0, 0.0]);
        let s = m.score_predicate(&mut g, fr, tgt, lu).unwrap();
        assert_eq!(g.scalar(s), 2.0);
    }

    #[test]
    fn argument_and_cross_task_products() {
        let mut m = tiny_model(0);
        for w in m.w.into_iter().chain(m.u).chain(m.v) {
            set(&mut m.store, w, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
        let mut g = Graph::new(&m.store);
        let one = g.input(vec![1.0, 0.0, 0.0]);
        let span = g.input(vec![2.0, 0.0, 0.0]);
        let role = g.input(vec![3.0, 0.0, 0.0]);
        let s = m.score_argument(&mut g, one, one, one, span, role).unwrap();
        assert_eq!(g.scalar(s), 6.0);
        let zero = g.input(vec![0.0; 3]);
        let s = m.score_argument(&mut g, one, one, one, span, zero).unwrap();
        assert_eq!(g.scalar(s), 0.0);
        let c = m.score_cross_task(&mut g, one, one, one, one, one, one, one).unwrap();
        assert_eq!(g.scalar(c), 1.0);
        let c = m.score_cross_task(&mut g, one, one, one, one, one, one, zero).unwrap();
        assert_eq!(g.scalar(c), 0.0);
    }

    #[test]
    fn doubling_v2_doubles_cross_task() {
        let m = tiny_model(1);
        let run = |m: &Model| {
            let mut g = Graph::new(&m.store);
            let x: Vec<NodeId> = (0..7).map(|k| g.input(vec![0.3 * k as f64 - 0.5, 0.7, -0.2])).collect();
            let s = m.score_cross_task(&mut g, x[0], x[1], x[2], x[3], x[4], x[5], x[6]).unwrap();
            g.scalar(s)
        };
        let base = run(&m);
        let mut m2 = m.clone();
        m2.store.value_mut(m2.v[1]).data_mut().iter_mut().for_each(|v| *v *= 2.0);
        assert!((run(&m2) - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn multilinear_scores_are_linear_in_each_slot() {
        let m = tiny_model(2);
        let base: Vec<Vec<f64>> = (0..5).map(|k| vec![0.1 * k as f64 + 0.2, -0.4, 0.9]).collect();
        let run = |xs: &[Vec<f64>]| {
            let mut g = Graph::new(&m.store);
            let n: Vec<NodeId> = xs.iter().map(|x| g.input(x.clone())).collect();
            let s = m.score_argument(&mut g, n[0], n[1], n[2], n[3], n[4]).unwrap();
            g.scalar(s)
        };
        let s0 = run(&base);
        for slot in 0..5 {
            let mut xs = base.clone();
            xs[slot].iter_mut().for_each(|v| *v *= -2.5);
            assert!((run(&xs) + 2.5 * s0).abs() < 1e-12);
        }
    }

    #[test]
    fn predicate_matches_explicit_tensor() {
        let m = tiny_model(3);
        let fr = [0.3, -0.7, 1.1];
        let tgt = [0.5, 0.2, -0.9];
        let lu = [-0.4, 0.8, 0.6];
        let rows = |p: ParamId| -> Vec<Vec<f64>> {
            let a = m.store.value(p);
            (0..a.rows_cols().0).map(|r| a.row(r).to_vec()).collect()
        };
        let (w1, w2, w3) = (rows(m.w[0]), rows(m.w[1]), rows(m.w[2]));
        let mut expected = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let t: f64 = (0..2).map(|k| w1[k][a] * w2[k][b] * w3[k][c]).sum();
                    expected += t * fr[a] * tgt[b] * lu[c];
                }
            }
        }
        let mut g = Graph::new(&m.store);
        let (x, y, z) = (g.input(fr.to_vec()), g.input(tgt.to_vec()), g.input(lu.to_vec()));
        let s = m.score_predicate(&mut g, x, y, z).unwrap();
        assert!((g.scalar(s) - expected).abs() < 1e-12);
    }

    #[test]
    fn dependency_part_examples() {
        let m = tiny_model(4);
        let s = sentence(3);
        let mut g = Graph::new(&m.store);
        let ctx = m.encode(&mut g, &s, None).unwrap();
        let labels = vec!["A".to_string(), "B".to_string()];
        let mut score = |part: Part| {
            let n = m.score_dependency_part(&mut g, &ctx, &part, &labels).unwrap();
            g.scalar(n)
        };
        let ab = score(Part::UnlabeledArc { head: 0, dep: 1 });
        let ba = score(Part::UnlabeledArc { head: 1, dep: 0 });
        assert_ne!(ab, ba);
        let la = score(Part::LabeledArc { head: 0, dep: 1, label: 0 });
        let lb = score(Part::LabeledArc { head: 0, dep: 1, label: 1 });
        assert_ne!(la, lb);
        assert!(score(Part::UnlabeledArc { head: 3, dep: 1 }).is_finite());
        assert!(m.score_dependency_part(&mut g, &ctx, &Part::LabeledArc { head: 0, dep: 1, label: 5 }, &labels).is_err());

        // Equal label embeddings give equal scores.
        let mut m2 = m.clone();
        let row = m2.store.value(m2.label_emb).row(0).to_vec();
        let d = row.len();
        m2.store.value_mut(m2.label_emb).data_mut()[d..2 * d].copy_from_slice(&row);
        let mut g = Graph::new(&m2.store);
        let ctx = m2.encode(&mut g, &s, None).unwrap();
        let a = m2.score_dependency_part(&mut g, &ctx, &Part::LabeledArc { head: 0, dep: 1, label: 0 }, &labels).unwrap();
        let b = m2.score_dependency_part(&mut g, &ctx, &Part::LabeledArc { head: 0, dep: 1, label: 1 }, &labels).unwrap();
        assert_eq!(g.scalar(a), g.scalar(b));
    }

    #[test]
    fn zero_final_weights_zero_scores() {
        let mut m = tiny_model(5);
        for s in [&m.head, &m.arc, &m.labeled] {
            let w = s.w;
            m.store.value_mut(w).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let sp = space(3);
        let scores = m.scores(&sentence(3), &sp).unwrap();
        for id in sp.ids() {
            if sp.part(id).is_dependency_part() || matches!(sp.part(id), Part::CrossTask { .. }) {
                assert_eq!(scores[id.0], 0.0);
            }
        }
    }

    #[test]
    fn zero_model_scores_zero() {
        let mut m = tiny_model(6);
        let ids: Vec<_> = m.store.ids().collect();
        for id in ids {
            m.store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let sp = space(3);
        assert!(m.scores(&sentence(3), &sp).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn scorers_have_disjoint_parameters() {
        let m = tiny_model(7);
        let sets = [m.head.params(), m.arc.params(), m.labeled.params()];
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(sets[i].iter().all(|p| !sets[j].contains(p)));
            }
        }
        let sp = space(3);
        let s = sentence(3);
        let before = m.scores(&s, &sp).unwrap();
        let mut m2 = m.clone();
        for p in m2.labeled.params() {
            m2.store.value_mut(p).data_mut().iter_mut().for_each(|v| *v += 0.3);
        }
        let after = m2.scores(&s, &sp).unwrap();
        for id in sp.ids() {
            let changed = before[id.0] != after[id.0];
            let labeled = matches!(sp.part(id), Part::LabeledArc { .. });
            assert_eq!(changed, labeled, "{:?}", sp.part(id));
        }
    }

    #[test]
    fn space_scores_match_individual_scorers() {
        let m = tiny_model(8);
        let s = sentence(4);
        let sp = space(4);
        let scores = m.scores(&s, &sp).unwrap();
        let mut g = Graph::new(&m.store);
        let ctx = m.encode(&mut g, &s, None).unwrap();
        let target = sp.target().unwrap().clone();
        let tgt = m.encoder.target_representation(&mut g, &ctx, &target).unwrap();
        let lu = g.lookup(m.lu_emb, m.lu_id(&target.lu).unwrap()).unwrap();
        let frame = |g: &mut Graph, f: usize| g.lookup(m.frame_emb, m.frame_id(&sp.frames()[f]).unwrap()).unwrap();
        let span = |g: &mut Graph, i: usize, j: usize| {
            m.encoder
                .span_representation(g, &ctx, i, j, discrete_features(i, j, target.start))
                .unwrap()
        };
        let role = |g: &mut Graph, f: usize, r: usize| g.lookup(m.role_emb, m.role_id(&sp.roles(f)[r]).unwrap()).unwrap();
        for id in sp.ids() {
            let node = match sp.part(id) {
                Part::Predicate { frame: f } => {
                    let fr = frame(&mut g, f);
                    m.score_predicate(&mut g, fr, tgt, lu).unwrap()
                }
                Part::Argument { frame: f, start, end, role: r } => {
                    let fr = frame(&mut g, f);
                    let sp_ = span(&mut g, start, end);
                    let ro = role(&mut g, f, r);
                    m.score_argument(&mut g, fr, tgt, lu, sp_, ro).unwrap()
                }
                Part::CrossTask { argument, arc } => {
                    let (Part::Argument { frame: f, start, end, role: r }, Part::UnlabeledArc { head, dep }) =
                        (sp.part(argument), sp.part(arc))
                    else {
                        unreachable!()
                    };
                    let fr = frame(&mut g, f);
                    let sp_ = span(&mut g, start, end);
                    let ro = role(&mut g, f, r);
                    let w_ua = g.param(m.arc.w);
                    let g_ua = m.arc_representation(&mut g, &ctx, head, dep).unwrap();
                    m.score_cross_task(&mut g, fr, tgt, lu, sp_, ro, w_ua, g_ua).unwrap()
                }
                p => m.score_dependency_part(&mut g, &ctx, &p, sp.labels()).unwrap(),
            };
            let direct = g.scalar(node);
            assert!((direct - scores[id.0]).abs() < 1e-12, "{:?}: {direct} vs {}", sp.part(id), scores[id.0]);
        }
        // Total of a structure is the sum of its part scores.
        let mut space = sp;
        space.set_scores(scores.clone()).unwrap();
        let some = [crate::PartId(0), crate::PartId(3), crate::PartId(space.len() - 1)];
        let total: f64 = some.iter().map(|p| scores[p.0]).sum();
        assert!((space.total_score(&some) - total).abs() < 1e-12);
    }

    #[test]
    fn space_scoring_is_deterministic() {
        let m = tiny_model(9);
        let sp = space(4);
        assert_eq!(m.scores(&sentence(4), &sp).unwrap(), m.scores(&sentence(4), &sp).unwrap());
    }

    #[test]
    fn multilinear_reference() {
        assert_eq!(multilinear(&[&[2.0], &[3.0], &[4.0]]), 24.0);
        assert_eq!(multilinear(&[&[1.0, 1.0], &[5.0, -3.0]]), 2.0);
    }

    #[test]
    fn scorer_gradients() {
        let mut m = tiny_model(10);
        let s = sentence(3);
        let sp = space(3);
        let weights: Vec<f64> = (0..sp.len()).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let model = m.clone();
        let report = grad_check(
            &mut m.store,
            |g| {
                let nodes = model.score_space(g, &s, &sp, None)?;
                let terms: Vec<(NodeId, f64)> = nodes.into_iter().zip(weights.iter().copied()).collect();
                g.weighted_sum(&terms)
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{:?}", report.per_param);
    }
}
