use std::collections::BTreeSet;

use super::ad3::{ad3_solve, Ad3Config, SolveStatus};
use super::factor_graph::{Constraints, FactorGraph};
use crate::model::{CandidateSpace, CostConfig, DependencyGraph, FrameParse, Part, PartId};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum DecodeMode<'a> {
    /// Frame parse and dependency graph together.
    Joint,
    /// Dependency graph only; frame parts are ignored.
    DependenciesOnly,
    /// Frame parse fixed to the given gold parse; dependencies are maximized.
    LatentCompletion(&'a FrameParse),
}

#[derive(Clone, Debug, Default)]
pub struct DecodeConfig {
    pub constraints: Constraints,
    pub solver: Ad3Config,
    /// Skip cross-task pairs whose score magnitude is at most this.
    pub drop_epsilon: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub frame: Option<FrameParse>,
    pub graph: Option<DependencyGraph>,
    /// Active parts, cross-task parts included.
    pub parts: BTreeSet<PartId>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// MAP structures for a scored candidate space.
pub fn decode(space: &CandidateSpace, mode: DecodeMode, config: &DecodeConfig) -> Result<Decoded> {
    if let Some(k) = space.scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("non-finite score on part {k}")));
    }
    let mut constraints = config.constraints.clone();
    constraints.skip_frames = matches!(mode, DecodeMode::DependenciesOnly);
    let mut graph = FactorGraph::from_space(space, &constraints)?;
    if let Some(eps) = config.drop_epsilon {
        drop_pairs(&mut graph, eps);
    }
    if let DecodeMode::LatentCompletion(gold) = mode {
        let gold = space.gold_frame_parts(gold).parts;
        for v in 0..graph.num_vars() {
            if let Some(p) = graph.parts[v] {
                if space.part(p).is_frame_part() {
                    graph.clamp(v, gold.contains(&p));
                }
            }
        }
    }
    let solved = ad3_solve(&graph, &config.solver)?;
    let frame = match mode {
        DecodeMode::LatentCompletion(gold) => Some(gold.clone()),
        DecodeMode::DependenciesOnly => None,
        DecodeMode::Joint => space.frame_parse_from(&solved.parts),
    };
    let has_deps = space.heads().next().is_some();
    Ok(Decoded {
        frame,
        graph: has_deps.then(|| space.graph_from(&solved.parts)),
        parts: solved.parts,
        objective: solved.objective,
        status: solved.status,
        iterations: solved.iterations,
    })
}

fn drop_pairs(graph: &mut FactorGraph, eps: f64) {
    let keep: Vec<bool> = graph
        .factors
        .iter()
        .map(|f| !matches!(f, super::Factor::Pair { score, .. } if score.abs() <= eps))
        .collect();
    let mut k = keep.iter();
    graph.factors.retain(|_| *k.next().unwrap());
    let mut k = keep.iter();
    graph.pair_parts.retain(|_| *k.next().unwrap());
}

/// Which part types a cost offset applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostScope {
    /// Predicate and argument parts.
    Frames,
    /// Head, unlabeled-arc and labeled-arc parts.
    Dependencies,
    /// Every part except cross-task parts.
    All,
}

impl CostScope {
    fn covers(self, part: &Part) -> bool {
        match self {
            CostScope::Frames => part.is_frame_part(),
            CostScope::Dependencies => part.is_dependency_part(),
            CostScope::All => !matches!(part, Part::CrossTask { .. }),
        }
    }
}

/// Scores with the Hamming cost folded in: gold parts lose the false-negative
/// cost, other parts in scope gain the false-positive cost. The decoded
/// objective then differs from `S + δ` by `fn · |gold|`.
pub fn cost_augment(
    space: &CandidateSpace,
    gold: &BTreeSet<PartId>,
    cost: &CostConfig,
    scope: CostScope,
) -> Vec<f64> {
    space
        .ids()
        .map(|id| {
            let s = space.score(id);
            if !scope.covers(&space.part(id)) {
                s
            } else if gold.contains(&id) {
                s - cost.false_negative_cost
            } else {
                s + cost.false_positive_cost
            }
        })
        .collect()
}

/// A copy of `space` without the cross-task parts whose score magnitude is
/// at most `epsilon`.
pub fn drop_sparse_cross_task(space: &CandidateSpace, epsilon: f64) -> Result<CandidateSpace> {
    let mut remap = vec![None; space.len()];
    let mut parts = Vec::new();
    let mut scores = Vec::new();
    for id in space.ids() {
        let part = match space.part(id) {
            Part::CrossTask { argument, arc } => {
                if space.score(id).abs() <= epsilon {
                    continue;
                }
                Part::CrossTask {
                    argument: remap[argument.0].expect("argument precedes cross-task part"),
                    arc: remap[arc.0].expect("arc precedes cross-task part"),
                }
            }
            p => p,
        };
        remap[id.0] = Some(PartId(parts.len()));
        parts.push(part);
        scores.push(space.score(id));
    }
    let roles = (0..space.frames().len()).map(|f| space.roles(f).to_vec()).collect();
    let mut out = CandidateSpace::from_parts(
        space.sentence_len(),
        space.target().cloned(),
        space.frames().to_vec(),
        roles,
        space.labels().to_vec(),
        parts,
    )?;
    out.set_scores(scores)?;
    Ok(out)
}
