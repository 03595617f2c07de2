//! Exhaustive MAP search, used as a reference for the dual decomposition
//! solver.

use super::factor_graph::{Factor, FactorGraph, Literal};
use super::semimarkov::{semi_markov_map, ScoredSpan};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct BruteLimits {
    /// Largest connected component (in free variables) searched.
    pub max_component: usize,
    /// Search nodes allowed across all components.
    pub max_nodes: u64,
}

impl Default for BruteLimits {
    fn default() -> Self {
        BruteLimits {
            max_component: 512,
            max_nodes: 50_000_000,
        }
    }
}

const TIE: f64 = 1e-9;

/// Exact optimum by depth-first search over each connected component.
///
/// Ties within 1e-9 prefer fewer active variables, then the set whose
/// smallest differing variable index is active.
pub fn brute_force_map(graph: &FactorGraph, limits: &BruteLimits) -> Result<(Vec<bool>, f64)> {
    let n = graph.num_vars();
    let mut member: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (fi, f) in graph.factors.iter().enumerate() {
        for v in f.vars() {
            member[v].push(fi);
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for f in &graph.factors {
        let vars = f.vars();
        for w in vars.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut x = vec![false; n];
    let mut budget = limits.max_nodes;
    for vars in groups.values() {
        let free = vars.iter().filter(|&&v| graph.clamps[v].is_none()).count();
        if free > limits.max_component {
            return Err(Error::TooLarge(format!(
                "component with {free} free variables exceeds {}",
                limits.max_component
            )));
        }
        let mut search = Search::new(graph, &member, vars);
        search.run(0, &mut budget)?;
        let best = search
            .best
            .ok_or_else(|| Error::Infeasible("no assignment satisfies every factor".into()))?;
        for (i, &v) in vars.iter().enumerate() {
            x[v] = best.2[i];
        }
    }
    let value = graph.objective(&x);
    Ok((x, value))
}

struct Search<'g> {
    graph: &'g FactorGraph,
    vars: &'g [usize],
    /// Position of each graph variable inside `vars`.
    pos: Vec<Option<usize>>,
    member: &'g [Vec<usize>],
    state: Vec<Option<bool>>,
    /// Exclusive groups (positive literals of Xor/AtMostOne factors) by
    /// position; each position belongs to at most one group.
    group_of: Vec<Option<usize>>,
    groups: usize,
    /// Semi-Markov factors as (position, start, end) lists; positions in one
    /// of these are bounded by a DP instead of a group.
    chains: Vec<Vec<(usize, usize, usize)>>,
    in_chain: Vec<bool>,
    /// Pair factors touching each position: (other position, score).
    pairs: Vec<Vec<(usize, f64)>>,
    value: f64,
    count: usize,
    best: Option<(f64, usize, Vec<bool>)>,
}

impl<'g> Search<'g> {
    fn new(graph: &'g FactorGraph, member: &'g [Vec<usize>], vars: &'g [usize]) -> Self {
        let mut pos = vec![None; graph.num_vars()];
        for (i, &v) in vars.iter().enumerate() {
            pos[v] = Some(i);
        }
        let mut group_of = vec![None; vars.len()];
        let mut groups = 0;
        let mut pairs = vec![Vec::new(); vars.len()];
        let mut chains = Vec::new();
        let mut in_chain = vec![false; vars.len()];
        for f in &graph.factors {
            if let Factor::SemiMarkov { spans, .. } = f {
                let chain: Vec<(usize, usize, usize)> = spans
                    .iter()
                    .filter_map(|s| pos[s.var].map(|i| (i, s.start, s.end)))
                    .filter(|&(i, ..)| !in_chain[i])
                    .collect();
                for &(i, ..) in &chain {
                    in_chain[i] = true;
                }
                chains.push(chain);
            }
        }
        for f in &graph.factors {
            match f {
                Factor::Xor(l) | Factor::AtMostOne(l) => {
                    let members: Vec<usize> = l
                        .iter()
                        .filter(|l| !l.negated)
                        .filter_map(|l| pos[l.var])
                        .collect();
                    if members.len() >= 2
                        && members.iter().all(|&i| group_of[i].is_none() && !in_chain[i])
                    {
                        for &i in &members {
                            group_of[i] = Some(groups);
                        }
                        groups += 1;
                    }
                }
                Factor::Pair { a, b, score } => {
                    if let (Some(i), Some(j)) = (pos[*a], pos[*b]) {
                        pairs[i].push((j, *score));
                        pairs[j].push((i, *score));
                    }
                }
                _ => {}
            }
        }
        Search {
            graph,
            vars,
            pos,
            member,
            state: vec![None; vars.len()],
            group_of,
            groups,
            chains,
            in_chain,
            pairs,
            value: 0.0,
            count: 0,
            best: None,
        }
    }

    fn lit(&self, l: &Literal) -> Option<bool> {
        self.pos[l.var].and_then(|i| self.state[i]).map(|x| x != l.negated)
    }

    /// Whether the factors touching position `i` can still be satisfied.
    fn consistent(&self, i: usize) -> bool {
        let v = self.vars[i];
        self.member[v].iter().all(|&fi| match &self.graph.factors[fi] {
            Factor::Xor(l) | Factor::AtMostOne(l) | Factor::Or(l) => {
                let vals: Vec<Option<bool>> = l.iter().map(|l| self.lit(l)).collect();
                let trues = vals.iter().filter(|v| **v == Some(true)).count();
                let open = vals.iter().filter(|v| v.is_none()).count();
                match &self.graph.factors[fi] {
                    Factor::Xor(_) => trues <= 1 && trues + open >= 1,
                    Factor::AtMostOne(_) => trues <= 1,
                    _ => trues + open >= 1,
                }
            }
            Factor::Pair { .. } => true,
            Factor::SemiMarkov { spans, .. } => {
                let Some(me) = spans.iter().find(|s| s.var == v) else {
                    return true;
                };
                if self.state[i] != Some(true) {
                    return true;
                }
                spans.iter().all(|s| {
                    s.var == v
                        || self.pos[s.var].and_then(|j| self.state[j]) != Some(true)
                        || s.end < me.start
                        || me.end < s.start
                })
            }
        })
    }

    /// Optimistic completion value for the unassigned positions.
    fn bound(&self) -> f64 {
        let mut group_best = vec![0.0f64; self.groups];
        let mut free_gain = 0.0;
        let mut gains = vec![0.0; self.vars.len()];
        for i in 0..self.vars.len() {
            if self.state[i].is_some() {
                continue;
            }
            let mut gain = self.graph.scores[self.vars[i]];
            for &(j, s) in &self.pairs[i] {
                match self.state[j] {
                    Some(true) => gain += s,
                    Some(false) => {}
                    // Credit each open pair to its later endpoint only.
                    None if j < i => gain += s.max(0.0),
                    None => {}
                }
            }
            gains[i] = gain;
            match self.group_of[i] {
                _ if self.in_chain[i] => {}
                Some(g) => group_best[g] = group_best[g].max(gain),
                None => free_gain += gain.max(0.0),
            }
        }
        let mut chain_gain = 0.0;
        for chain in &self.chains {
            let taken: Vec<(usize, usize)> = chain
                .iter()
                .filter(|&&(i, ..)| self.state[i] == Some(true))
                .map(|&(_, s, e)| (s, e))
                .collect();
            let open: Vec<ScoredSpan> = chain
                .iter()
                .filter(|&&(i, s, e)| {
                    self.state[i].is_none() && taken.iter().all(|&(a, b)| e < a || b < s)
                })
                .map(|&(i, s, e)| ScoredSpan::new(s, e, gains[i]))
                .collect();
            let n = open.iter().map(|s| s.end + 1).max().unwrap_or(0);
            chain_gain += semi_markov_map(&open, n, usize::MAX).1;
        }
        self.value + free_gain + chain_gain + group_best.iter().sum::<f64>()
    }

    fn delta(&self, i: usize) -> f64 {
        let mut d = self.graph.scores[self.vars[i]];
        for &(j, s) in &self.pairs[i] {
            if self.state[j] == Some(true) {
                d += s;
            }
        }
        d
    }

    fn better(&self, value: f64, count: usize, x: &[bool]) -> bool {
        let Some((bv, bc, bx)) = &self.best else {
            return true;
        };
        if value > bv + TIE {
            return true;
        }
        if value < bv - TIE {
            return false;
        }
        if count != *bc {
            return count < *bc;
        }
        match x.iter().zip(bx).position(|(a, b)| a != b) {
            Some(k) => x[k],
            None => false,
        }
    }

    fn run(&mut self, i: usize, budget: &mut u64) -> Result<()> {
        if *budget == 0 {
            return Err(Error::TooLarge("brute-force search budget exhausted".into()));
        }
        *budget -= 1;
        if i == self.vars.len() {
            let x: Vec<bool> = self.state.iter().map(|s| s.unwrap()).collect();
            if self.better(self.value, self.count, &x) {
                self.best = Some((self.value, self.count, x));
            }
            return Ok(());
        }
        if let Some((bv, bc, _)) = &self.best {
            let ub = self.bound();
            if ub < bv - TIE || (ub <= bv + TIE && self.count > *bc) {
                return Ok(());
            }
        }
        let options: Vec<bool> = match self.graph.clamps[self.vars[i]] {
            Some(c) => vec![c],
            None if self.delta(i) > 0.0 => vec![true, false],
            None => vec![false, true],
        };
        for on in options {
            let d = if on { self.delta(i) } else { 0.0 };
            self.state[i] = Some(on);
            if self.consistent(i) {
                self.value += d;
                self.count += on as usize;
                self.run(i + 1, budget)?;
                self.value -= d;
                self.count -= on as usize;
            }
            self.state[i] = None;
        }
        Ok(())
    }
}
