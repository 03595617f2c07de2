//! Alternating-directions dual decomposition with a branch-and-bound wrapper.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::factor_graph::{Factor, FactorGraph, Propagator, Reduced};
use super::semimarkov::{semi_markov_map, ScoredSpan};
use crate::model::PartId;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Ad3Config {
    pub max_iter: usize,
    /// Primal and dual residual threshold.
    pub tol: f64,
    /// Initial penalty parameter.
    pub eta: f64,
    /// Double or halve `eta` when one residual exceeds the other tenfold.
    pub adapt_eta: bool,
    /// Branch on fractional variables until the optimum is certified.
    pub branch_and_bound: bool,
    pub max_nodes: usize,
    /// A solution within this distance of the dual bound is certified.
    pub gap: f64,
    /// Keep the per-iteration dual values of the root relaxation.
    pub record_trace: bool,
    /// Project onto the exact hull of span segmentations. Otherwise the span
    /// factor is relaxed to one at-most-one factor per token; the integer
    /// solutions are the same and branching closes the looser bound.
    pub exact_spans: bool,
}

impl Default for Ad3Config {
    fn default() -> Self {
        Ad3Config {
            max_iter: 1000,
            tol: 1e-6,
            eta: 0.05,
            adapt_eta: true,
            branch_and_bound: true,
            max_nodes: 2000,
            gap: 1e-7,
            record_trace: false,
            exact_spans: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    /// The objective is certified optimal by the dual bound.
    Exact,
    /// The best repaired solution found within the budget.
    Rounded,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub assignment: Vec<bool>,
    /// Active parts, cross-task parts included.
    pub parts: BTreeSet<PartId>,
    pub objective: f64,
    pub status: SolveStatus,
    /// ADMM iterations summed over all search nodes.
    pub iterations: usize,
    /// Dual bound of the root relaxation.
    pub dual: f64,
    pub nodes: usize,
    /// Root dual values per evaluation, when requested.
    pub dual_trace: Vec<f64>,
}

/// MAP assignment of `graph`.
pub fn ad3_solve(graph: &FactorGraph, config: &Ad3Config) -> Result<SolveResult> {
    let root = graph.reduce(&[])?;
    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut stack: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
    let mut nodes = 0;
    let mut iterations = 0;
    let mut root_dual = f64::INFINITY;
    let mut trace = Vec::new();
    let mut complete = true;
    while let Some(clamps) = stack.pop() {
        if nodes >= config.max_nodes {
            complete = false;
            break;
        }
        let red = if clamps.is_empty() {
            root.clone()
        } else {
            match graph.reduce(&clamps) {
                Ok(r) => r,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            }
        };
        nodes += 1;
        let incumbent = best.as_ref().map(|(v, _)| *v);
        let rel = relax(&red, config, nodes == 1 && config.record_trace, incumbent);
        iterations += rel.iterations;
        if nodes == 1 {
            root_dual = rel.dual;
            trace = rel.trace.clone();
        }
        if let Some((v, _)) = &best {
            if rel.dual <= v + config.gap {
                continue;
            }
        }
        if let Some((x, v)) = repair(graph, &red, &rel.p) {
            if best.as_ref().is_none_or(|(b, _)| v > *b + 1e-12) {
                best = Some((v, x));
            }
        }
        if best.as_ref().is_some_and(|(b, _)| *b >= rel.dual - config.gap) {
            continue;
        }
        if !config.branch_and_bound || red.free.is_empty() {
            complete &= red.free.is_empty();
            continue;
        }
        let i = (0..red.free.len())
            .min_by(|&a, &b| {
                (rel.p[a] - 0.5)
                    .abs()
                    .total_cmp(&(rel.p[b] - 0.5).abs())
                    .then(a.cmp(&b))
            })
            .unwrap();
        let v = red.free[i];
        let up = rel.p[i] >= 0.5;
        let mut other = clamps.clone();
        other.push((v, !up));
        let mut first = clamps;
        first.push((v, up));
        stack.push(other);
        stack.push(first);
    }
    if !stack.is_empty() {
        complete = false;
    }
    let (objective, assignment) =
        best.ok_or_else(|| Error::Infeasible("no feasible assignment found".into()))?;
    Ok(SolveResult {
        parts: graph.active_parts(&assignment),
        assignment,
        objective,
        status: if complete {
            SolveStatus::Exact
        } else {
            SolveStatus::Rounded
        },
        iterations,
        dual: root_dual,
        nodes,
        dual_trace: trace,
    })
}

/// Greedy rounding: fix variables in order of confidence, propagating after
/// each choice and flipping a choice that leads to a contradiction.
fn repair(graph: &FactorGraph, red: &Reduced, p: &[f64]) -> Option<(Vec<bool>, f64)> {
    let mut fixed = red.fixed.clone();
    let mut prop = Propagator::new(&graph.factors, graph.num_vars());
    let mut order: Vec<usize> = (0..red.free.len()).collect();
    order.sort_by(|&a, &b| {
        (p[b] - 0.5)
            .abs()
            .total_cmp(&(p[a] - 0.5).abs())
            .then(a.cmp(&b))
    });
    for i in order {
        let v = red.free[i];
        if fixed[v].is_some() {
            continue;
        }
        let want = p[i] > 0.5;
        if !prop.try_assign(&mut fixed, v, want) && !prop.try_assign(&mut fixed, v, !want) {
            return None;
        }
    }
    let x: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
    if !graph.is_feasible(&x) {
        return None;
    }
    let v = graph.objective(&x);
    Some((x, v))
}

struct Relaxed {
    p: Vec<f64>,
    dual: f64,
    iterations: usize,
    trace: Vec<f64>,
}

enum Kind {
    Xor,
    AtMostOne,
    Or,
    Pair(f64),
    SemiMarkov(SemiMarkovState),
}

struct LocalFactor {
    kind: Kind,
    vars: Vec<usize>,
    neg: Vec<bool>,
    /// First slot of this factor in the flat multiplier array.
    offset: usize,
}

struct SemiMarkovState {
    n: usize,
    spans: Vec<(usize, usize)>,
    active: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

fn local_factors(red: &Reduced, exact_spans: bool) -> (Vec<LocalFactor>, usize) {
    let mut out = Vec::new();
    let mut slots = 0;
    for f in &red.factors {
        if let (Factor::SemiMarkov { n, spans }, false) = (f, exact_spans) {
            for token in 0..*n {
                let vars: Vec<usize> = spans
                    .iter()
                    .filter(|s| s.start <= token && token <= s.end)
                    .map(|s| s.var)
                    .collect();
                if vars.len() >= 2 {
                    let len = vars.len();
                    out.push(LocalFactor {
                        kind: Kind::AtMostOne,
                        vars,
                        neg: vec![false; len],
                        offset: slots,
                    });
                    slots += len;
                }
            }
            continue;
        }
        let (kind, vars, neg) = match f {
            Factor::Xor(l) | Factor::AtMostOne(l) | Factor::Or(l) => {
                let kind = match f {
                    Factor::Xor(_) => Kind::Xor,
                    Factor::AtMostOne(_) => Kind::AtMostOne,
                    _ => Kind::Or,
                };
                (
                    kind,
                    l.iter().map(|l| l.var).collect(),
                    l.iter().map(|l| l.negated).collect(),
                )
            }
            Factor::Pair { a, b, score } => (Kind::Pair(*score), vec![*a, *b], vec![false; 2]),
            Factor::SemiMarkov { n, spans } => (
                Kind::SemiMarkov(SemiMarkovState {
                    n: *n,
                    spans: spans.iter().map(|s| (s.start, s.end)).collect(),
                    active: Vec::new(),
                    weights: Vec::new(),
                }),
                spans.iter().map(|s| s.var).collect(),
                vec![false; spans.len()],
            ),
        };
        let len = vars.len();
        out.push(LocalFactor {
            kind,
            vars,
            neg,
            offset: slots,
        });
        slots += len;
    }
    (out, slots)
}

/// ADMM on the relaxation of `red`. Stops early once the dual bound proves
/// the node cannot beat `incumbent`.
fn relax(red: &Reduced, config: &Ad3Config, record: bool, incumbent: Option<f64>) -> Relaxed {
    let m = red.scores.len();
    let theta = &red.scores;
    let (mut factors, slots) = local_factors(red, config.exact_spans);
    let mut deg = vec![0usize; m];
    for f in &factors {
        for &v in &f.vars {
            deg[v] += 1;
        }
    }
    let mut p: Vec<f64> = (0..m)
        .map(|i| {
            if deg[i] == 0 {
                if theta[i] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.5
            }
        })
        .collect();
    let isolated: f64 = (0..m).filter(|&i| deg[i] == 0).map(|i| theta[i].max(0.0)).sum();
    let mut lambda = vec![0.0; slots];
    let mut q = vec![0.0; slots];
    let mut eta = config.eta;
    let mut best_dual = f64::INFINITY;
    let mut trace = Vec::new();
    let mut iterations = 0;
    if factors.is_empty() {
        return Relaxed {
            p,
            dual: red.offset + isolated,
            iterations,
            trace,
        };
    }
    let mut a = Vec::new();
    let mut scratch = Vec::new();
    let mut sum = vec![0.0; m];
    for t in 1..=config.max_iter {
        iterations = t;
        for f in factors.iter_mut() {
            a.clear();
            a.extend(f.vars.iter().enumerate().map(|(s, &v)| {
                p[v] + (theta[v] / deg[v] as f64 + lambda[f.offset + s]) / eta
            }));
            let out = &mut q[f.offset..f.offset + f.vars.len()];
            solve_local(f, &a, eta, out, &mut scratch);
        }
        sum.fill(0.0);
        for f in &factors {
            for (s, &v) in f.vars.iter().enumerate() {
                sum[v] += q[f.offset + s];
            }
        }
        let mut dual_res = 0.0;
        for i in 0..m {
            if deg[i] > 0 {
                let new = sum[i] / deg[i] as f64;
                dual_res += deg[i] as f64 * (new - p[i]).powi(2);
                p[i] = new;
            }
        }
        let mut primal_res = 0.0;
        for f in &factors {
            for (s, &v) in f.vars.iter().enumerate() {
                let r = q[f.offset + s] - p[v];
                primal_res += r * r;
                lambda[f.offset + s] -= eta * r;
            }
        }
        let primal_res = (primal_res / slots as f64).sqrt();
        let dual_res = (dual_res / slots as f64).sqrt();
        let converged = primal_res < config.tol && dual_res < config.tol;
        if record || converged || t % 10 == 0 || t == config.max_iter {
            let d = red.offset + isolated + dual_value(&factors, theta, &deg, &lambda);
            best_dual = best_dual.min(d);
            if record {
                trace.push(best_dual);
            }
            if incumbent.is_some_and(|v| best_dual <= v + config.gap) {
                break;
            }
        }
        if converged {
            break;
        }
        if config.adapt_eta {
            if primal_res > 10.0 * dual_res {
                eta = (eta * 2.0).min(1e4);
            } else if dual_res > 10.0 * primal_res {
                eta = (eta / 2.0).max(1e-4);
            }
        }
    }
    Relaxed {
        p,
        dual: best_dual,
        iterations,
        trace,
    }
}

/// Σ over factors of the local MAP value under the split unaries plus
/// multipliers. An upper bound on every feasible objective.
fn dual_value(factors: &[LocalFactor], theta: &[f64], deg: &[usize], lambda: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut w = Vec::new();
    for f in factors {
        w.clear();
        w.extend(
            f.vars
                .iter()
                .enumerate()
                .map(|(s, &v)| theta[v] / deg[v] as f64 + lambda[f.offset + s]),
        );
        total += local_map(f, &w);
    }
    total
}

fn local_map(f: &LocalFactor, w: &[f64]) -> f64 {
    match &f.kind {
        Kind::Xor | Kind::AtMostOne | Kind::Or => {
            // Σ w x = Σ_{negated} w + Σ w' ℓ over literal values ℓ.
            let mut base = 0.0;
            let mut max = f64::NEG_INFINITY;
            let mut pos = 0.0;
            for (&w, &n) in w.iter().zip(&f.neg) {
                let lit = if n {
                    base += w;
                    -w
                } else {
                    w
                };
                max = max.max(lit);
                if lit > 0.0 {
                    pos += lit;
                }
            }
            base + match f.kind {
                Kind::Xor => max,
                Kind::AtMostOne => max.max(0.0),
                _ if pos > 0.0 => pos,
                _ => max,
            }
        }
        Kind::Pair(s) => 0f64.max(w[0]).max(w[1]).max(w[0] + w[1] + s),
        Kind::SemiMarkov(st) => {
            let spans: Vec<ScoredSpan> = st
                .spans
                .iter()
                .zip(w)
                .map(|(&(a, b), &w)| ScoredSpan::new(a, b, w))
                .collect();
            semi_markov_map(&spans, st.n, usize::MAX).1
        }
    }
}

/// Euclidean projection onto the probability simplex.
#[cfg(test)]
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_simplex_into(&mut out, &mut Vec::new());
    out
}

fn project_simplex_into(v: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &x) in scratch.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

fn clip(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Minimizes `½‖q − a‖²` (minus the pair term) over the factor's polytope.
fn solve_local(f: &mut LocalFactor, a: &[f64], eta: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
    match &mut f.kind {
        Kind::Xor | Kind::AtMostOne | Kind::Or => {
            let mut sum = 0.0;
            for ((o, &a), &n) in out.iter_mut().zip(a).zip(&f.neg) {
                *o = if n { 1.0 - a } else { a };
                sum += clip(*o);
            }
            let clipped = match f.kind {
                Kind::AtMostOne => sum <= 1.0,
                Kind::Or => sum >= 1.0,
                _ => false,
            };
            if clipped {
                out.iter_mut().for_each(|x| *x = clip(*x));
            } else {
                project_simplex_into(out, scratch);
            }
            for (o, &n) in out.iter_mut().zip(&f.neg) {
                if n {
                    *o = 1.0 - *o;
                }
            }
        }
        Kind::Pair(s) => {
            let (x, y) = project_pair(a[0], a[1], *s / eta);
            out[0] = x;
            out[1] = y;
        }
        Kind::SemiMarkov(st) => {
            let q = min_norm_point(st, a);
            out.copy_from_slice(&q);
        }
    }
}

/// Minimizes `½(x−a1)² + ½(y−a2)² − c·μ(x, y)` over the unit square where `μ`
/// is the largest (c ≥ 0) or smallest (c < 0) consistent joint marginal.
pub(crate) fn project_pair(a1: f64, a2: f64, c: f64) -> (f64, f64) {
    let objective = |x: f64, y: f64| {
        let joint = if c >= 0.0 { x.min(y) } else { (x + y - 1.0).max(0.0) };
        0.5 * (x - a1).powi(2) + 0.5 * (y - a2).powi(2) - c * joint
    };
    let mut cands: [(f64, f64); 8] = [(0.0, 0.0); 8];
    let mut len = 0;
    let mut push = |p: (f64, f64)| {
        cands[len] = p;
        len += 1;
    };
    if c >= 0.0 {
        let z = clip((a1 + a2 + c) / 2.0);
        push((z, z));
        let (x, y) = (clip(a1 + c), clip(a2));
        if x <= y {
            push((x, y));
        }
        let (x, y) = (clip(a1), clip(a2 + c));
        if y <= x {
            push((x, y));
        }
    } else {
        let (x, y) = (clip(a1), clip(a2));
        if x + y <= 1.0 {
            push((x, y));
        }
        let (x, y) = (clip(a1 + c), clip(a2 + c));
        if x + y >= 1.0 {
            push((x, y));
        }
        let x = clip((a1 - a2 + 1.0) / 2.0);
        push((x, 1.0 - x));
    }
    cands[..len]
        .iter()
        .chain(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])
        .copied()
        .min_by(|p, q| objective(p.0, p.1).total_cmp(&objective(q.0, q.1)))
        .unwrap()
}

/// Closest point to `a` in the convex hull of non-overlapping span sets, by
/// Wolfe's method with the DP as the linear oracle. The active set persists
/// across calls.
fn min_norm_point(st: &mut SemiMarkovState, a: &[f64]) -> Vec<f64> {
    let k = a.len();
    let oracle = |dir: &[f64]| -> Vec<usize> {
        let spans: Vec<ScoredSpan> = st
            .spans
            .iter()
            .zip(dir)
            .map(|(&(s, e), &d)| ScoredSpan::new(s, e, d))
            .collect();
        let mut v = semi_markov_map(&spans, st.n, usize::MAX).0;
        v.sort_unstable();
        v
    };
    let point = |active: &[Vec<usize>], weights: &[f64]| {
        let mut x = vec![0.0; k];
        for (v, &w) in active.iter().zip(weights) {
            for &s in v {
                x[s] += w;
            }
        }
        x
    };
    if st.active.is_empty() {
        st.active.push(oracle(a));
        st.weights.push(1.0);
    } else {
        minor_cycle(&mut st.active, &mut st.weights, a);
    }
    for _ in 0..200 {
        let x = point(&st.active, &st.weights);
        let dir: Vec<f64> = a.iter().zip(&x).map(|(a, x)| a - x).collect();
        let v = oracle(&dir);
        let gain: f64 =
            v.iter().map(|&s| dir[s]).sum::<f64>() - dir.iter().zip(&x).map(|(d, x)| d * x).sum::<f64>();
        if gain <= 1e-12 || st.active.contains(&v) {
            break;
        }
        st.active.push(v);
        st.weights.push(0.0);
        minor_cycle(&mut st.active, &mut st.weights, a);
    }
    point(&st.active, &st.weights)
}

/// Affine minimizer of `‖Vμ − a‖²` with `Σμ = 1` over the active vertices.
fn affine_min(active: &[Vec<usize>], a: &[f64]) -> Option<Vec<f64>> {
    let m = active.len();
    let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    for i in 0..m {
        for j in i..m {
            let shared = active[i].iter().filter(|s| active[j].binary_search(s).is_ok()).count();
            kkt[(i, j)] = shared as f64;
            kkt[(j, i)] = shared as f64;
        }
        kkt[(i, m)] = 1.0;
        kkt[(m, i)] = 1.0;
        rhs[i] = active[i].iter().map(|&s| a[s]).sum();
    }
    rhs[m] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    let mu: Vec<f64> = sol.iter().take(m).copied().collect();
    mu.iter().all(|v| v.is_finite()).then_some(mu)
}

fn minor_cycle(active: &mut Vec<Vec<usize>>, weights: &mut Vec<f64>, a: &[f64]) {
    for _ in 0..active.len() + 5 {
        if active.len() == 1 {
            weights[0] = 1.0;
            return;
        }
        let Some(mu) = affine_min(active, a) else {
            // Affinely dependent set: drop the newest vertex.
            active.pop();
            weights.pop();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            } else {
                let len = weights.len() as f64;
                weights.iter_mut().for_each(|w| *w = 1.0 / len);
            }
            continue;
        };
        if mu.iter().all(|&v| v > 1e-14) {
            *weights = mu;
            return;
        }
        let mut step: f64 = 1.0;
        for (w, m) in weights.iter().zip(&mu) {
            if *m <= 1e-14 && w - m > 1e-300 {
                step = step.min(w / (w - m));
            }
        }
        for (w, m) in weights.iter_mut().zip(&mu) {
            *w += step * (m - *w);
        }
        let mut i = 0;
        while i < active.len() {
            if weights[i] <= 1e-14 {
                active.remove(i);
                weights.remove(i);
            } else {
                i += 1;
            }
        }
        if active.is_empty() {
            return;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
}
