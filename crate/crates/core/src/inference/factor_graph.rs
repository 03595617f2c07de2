use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::model::{CandidateSpace, Part, PartId};
use crate::{Error, Result};

/// A variable or its negation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, negated: false }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, negated: true }
    }

    fn value(self, x: bool) -> bool {
        x != self.negated
    }
}

/// One labeled span inside a semi-Markov factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpanVar {
    pub var: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// Exactly one literal is true.
    Xor(Vec<Literal>),
    /// At most one literal is true. `AtMostOne([a, ¬b])` encodes `a ⇒ b`.
    AtMostOne(Vec<Literal>),
    /// At least one literal is true.
    Or(Vec<Literal>),
    /// Adds `score` when both variables are on.
    Pair { a: usize, b: usize, score: f64 },
    /// Active spans must not overlap.
    SemiMarkov { n: usize, spans: Vec<SpanVar> },
}

impl Factor {
    pub fn implies(a: usize, b: usize) -> Self {
        Factor::AtMostOne(vec![Literal::pos(a), Literal::neg(b)])
    }

    pub fn vars(&self) -> Vec<usize> {
        match self {
            Factor::Xor(l) | Factor::AtMostOne(l) | Factor::Or(l) => {
                l.iter().map(|l| l.var).collect()
            }
            Factor::Pair { a, b, .. } => vec![*a, *b],
            Factor::SemiMarkov { spans, .. } => spans.iter().map(|s| s.var).collect(),
        }
    }

    fn satisfied(&self, x: &[bool]) -> bool {
        let count = |l: &[Literal]| l.iter().filter(|l| l.value(x[l.var])).count();
        match self {
            Factor::Xor(l) => count(l) == 1,
            Factor::AtMostOne(l) => count(l) <= 1,
            Factor::Or(l) => count(l) >= 1,
            Factor::Pair { .. } => true,
            Factor::SemiMarkov { spans, .. } => {
                let mut on: Vec<_> = spans.iter().filter(|s| x[s.var]).collect();
                on.sort_by_key(|s| (s.start, s.end));
                on.windows(2).all(|w| w[0].end < w[1].start)
            }
        }
    }
}

/// Binary variables with unary scores, factors and optional clamps.
#[derive(Clone, Debug, Default)]
pub struct FactorGraph {
    pub scores: Vec<f64>,
    pub factors: Vec<Factor>,
    pub clamps: Vec<Option<bool>>,
    /// Candidate part behind each variable, when built from a space.
    pub parts: Vec<Option<PartId>>,
    /// Cross-task part behind each Pair factor.
    pub pair_parts: Vec<Option<PartId>>,
}

/// Which hard constraints to add on top of the structural ones.
#[derive(Clone, Debug, Default)]
pub struct Constraints {
    /// Label indices that may appear on at most one outgoing arc per head.
    pub deterministic_labels: BTreeSet<usize>,
    /// Allow graphs without a top (the root XOR becomes at-most-one).
    pub optional_top: bool,
    /// Drop frame variables entirely (dependency-only decoding).
    pub skip_frames: bool,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, score: f64) -> usize {
        self.scores.push(score);
        self.clamps.push(None);
        self.parts.push(None);
        self.scores.len() - 1
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<()> {
        let vars = factor.vars();
        if vars.is_empty() {
            return Err(Error::Invalid("factor with no variables".into()));
        }
        if let Some(&v) = vars.iter().find(|&&v| v >= self.scores.len()) {
            return Err(Error::Invalid(format!("factor references unknown variable {v}")));
        }
        let distinct: BTreeSet<_> = vars.iter().collect();
        if distinct.len() != vars.len() {
            return Err(Error::Invalid("factor repeats a variable".into()));
        }
        self.factors.push(factor);
        self.pair_parts.push(None);
        Ok(())
    }

    pub fn clamp(&mut self, var: usize, value: bool) {
        self.clamps[var] = Some(value);
    }

    pub fn num_vars(&self) -> usize {
        self.scores.len()
    }

    /// Sum of active unary scores plus active Pair scores.
    pub fn objective(&self, x: &[bool]) -> f64 {
        let mut total: f64 = self
            .scores
            .iter()
            .zip(x)
            .filter(|(_, &on)| on)
            .map(|(s, _)| s)
            .sum();
        for f in &self.factors {
            if let Factor::Pair { a, b, score } = f {
                if x[*a] && x[*b] {
                    total += score;
                }
            }
        }
        total
    }

    /// Checks every factor and every clamp.
    pub fn is_feasible(&self, x: &[bool]) -> bool {
        x.len() == self.scores.len()
            && self.clamps.iter().zip(x).all(|(c, &v)| c.is_none_or(|c| c == v))
            && self.factors.iter().all(|f| f.satisfied(x))
    }

    /// Builds the decoding graph for a scored candidate space.
    pub fn from_space(space: &CandidateSpace, constraints: &Constraints) -> Result<Self> {
        let mut g = FactorGraph::new();
        let mut var_of = vec![None; space.len()];
        for id in space.ids() {
            let part = space.part(id);
            let skip = matches!(part, Part::CrossTask { .. })
                || (constraints.skip_frames && part.is_frame_part());
            if !skip {
                let v = g.add_var(space.score(id));
                g.parts[v] = Some(id);
                var_of[id.0] = Some(v);
            }
        }
        let var = |p: PartId| var_of[p.0].expect("part has a variable");

        if !constraints.skip_frames && space.target().is_some() {
            let preds: Vec<usize> = space.predicates().iter().map(|&p| var(p)).collect();
            if preds.is_empty() {
                return Err(Error::Invalid("target without predicate parts".into()));
            }
            g.add_factor(Factor::Xor(preds.iter().map(|&v| Literal::pos(v)).collect()))?;
            let mut spans = Vec::new();
            for &a in space.arguments() {
                let Part::Argument { frame, start, end, .. } = space.part(a) else {
                    unreachable!()
                };
                let pred = space
                    .predicates()
                    .iter()
                    .find(|&&p| space.part(p) == Part::Predicate { frame })
                    .ok_or_else(|| Error::Invalid(format!("argument of frame {frame} has no predicate")))?;
                g.add_factor(Factor::implies(var(a), var(*pred)))?;
                spans.push(SpanVar {
                    var: var(a),
                    start,
                    end,
                });
            }
            if !spans.is_empty() {
                g.add_factor(Factor::SemiMarkov {
                    n: space.sentence_len(),
                    spans,
                })?;
            }
        }

        let n = space.sentence_len();
        let root: Vec<Literal> = space
            .arcs()
            .iter()
            .filter(|&&a| matches!(space.part(a), Part::UnlabeledArc { head, .. } if head == n))
            .map(|&a| Literal::pos(var(a)))
            .collect();
        if !root.is_empty() {
            g.add_factor(if constraints.optional_top {
                Factor::AtMostOne(root)
            } else {
                Factor::Xor(root)
            })?;
        }
        let mut outgoing: Vec<Vec<Literal>> = vec![Vec::new(); n];
        for &a in space.arcs() {
            let Part::UnlabeledArc { head, .. } = space.part(a) else {
                unreachable!()
            };
            if head == n {
                continue;
            }
            let u = var(a);
            outgoing[head].push(Literal::pos(u));
            let labels = space.labels_of(a);
            if labels.is_empty() {
                // No label can realize the arc.
                g.add_factor(Factor::Xor(vec![Literal::neg(u)]))?;
            } else {
                let mut lits: Vec<Literal> = labels.iter().map(|&l| Literal::pos(var(l))).collect();
                lits.push(Literal::neg(u));
                g.add_factor(Factor::Xor(lits))?;
            }
            let h = space
                .head_part(head)
                .ok_or_else(|| Error::Invalid(format!("arc from {head} without a head part")))?;
            g.add_factor(Factor::implies(u, var(h)))?;
        }
        for token in 0..n {
            if let Some(h) = space.head_part(token) {
                let mut lits = outgoing[token].clone();
                lits.push(Literal::neg(var(h)));
                g.add_factor(Factor::Or(lits))?;
            }
        }
        if !constraints.deterministic_labels.is_empty() {
            let mut groups: std::collections::BTreeMap<(usize, usize), Vec<Literal>> =
                Default::default();
            for &l in space.labeled_arcs() {
                if let Part::LabeledArc { head, label, .. } = space.part(l) {
                    if constraints.deterministic_labels.contains(&label) {
                        groups.entry((head, label)).or_default().push(Literal::pos(var(l)));
                    }
                }
            }
            for (_, lits) in groups {
                if lits.len() > 1 {
                    g.add_factor(Factor::AtMostOne(lits))?;
                }
            }
        }

        if !constraints.skip_frames {
            for &c in space.cross_task() {
                let Part::CrossTask { argument, arc } = space.part(c) else {
                    unreachable!()
                };
                g.add_factor(Factor::Pair {
                    a: var(argument),
                    b: var(arc),
                    score: space.score(c),
                })?;
                *g.pair_parts.last_mut().unwrap() = Some(c);
            }
        }
        Ok(g)
    }

    /// Active parts of an assignment, cross-task parts included.
    pub fn active_parts(&self, x: &[bool]) -> BTreeSet<PartId> {
        let mut out: BTreeSet<PartId> = (0..x.len())
            .filter(|&v| x[v])
            .filter_map(|v| self.parts[v])
            .collect();
        for (f, p) in self.factors.iter().zip(&self.pair_parts) {
            if let (Factor::Pair { a, b, .. }, Some(p)) = (f, p) {
                if x[*a] && x[*b] {
                    out.insert(*p);
                }
            }
        }
        out
    }

    /// Line-oriented dump: one `var` line per variable, one line per factor.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let lit = |l: &Literal| {
            if l.negated {
                format!("!{}", l.var)
            } else {
                l.var.to_string()
            }
        };
        for (v, s) in self.scores.iter().enumerate() {
            let part = self.parts[v].map(|p| format!(" part={p}")).unwrap_or_default();
            let clamp = match self.clamps[v] {
                Some(true) => " clamp=1",
                Some(false) => " clamp=0",
                None => "",
            };
            let _ = writeln!(out, "var {v} score={s}{part}{clamp}");
        }
        for f in &self.factors {
            let line = match f {
                Factor::Xor(l) => format!("xor {}", l.iter().map(lit).collect::<Vec<_>>().join(" ")),
                Factor::AtMostOne(l) => {
                    format!("amo {}", l.iter().map(lit).collect::<Vec<_>>().join(" "))
                }
                Factor::Or(l) => format!("or {}", l.iter().map(lit).collect::<Vec<_>>().join(" ")),
                Factor::Pair { a, b, score } => format!("pair {a} {b} score={score}"),
                Factor::SemiMarkov { n, spans } => format!(
                    "semimarkov n={n} {}",
                    spans
                        .iter()
                        .map(|s| format!("{}:{}-{}", s.var, s.start, s.end))
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Unit propagation from the clamps plus `extra` until a fixpoint.
    pub(crate) fn propagate(&self, extra: &[(usize, bool)]) -> Result<Vec<Option<bool>>> {
        let mut fixed = self.clamps.clone();
        for &(v, b) in extra {
            set(&mut fixed, v, b)?;
        }
        propagate_in_place(&self.factors, &mut fixed)?;
        Ok(fixed)
    }

    /// Rewrites the graph over the variables left free by propagation.
    pub(crate) fn reduce(&self, extra: &[(usize, bool)]) -> Result<Reduced> {
        let fixed = self.propagate(extra)?;
        Ok(self.reduce_fixed(fixed))
    }

    pub(crate) fn reduce_fixed(&self, fixed: Vec<Option<bool>>) -> Reduced {
        let mut local = vec![None; self.num_vars()];
        let mut free = Vec::new();
        let mut scores = Vec::new();
        let mut offset = 0.0;
        for v in 0..self.num_vars() {
            match fixed[v] {
                None => {
                    local[v] = Some(free.len());
                    free.push(v);
                    scores.push(self.scores[v]);
                }
                Some(true) => offset += self.scores[v],
                Some(false) => {}
            }
        }
        let mut factors = Vec::new();
        let map_lits = |l: &[Literal]| -> Option<Vec<Literal>> {
            if l.iter().any(|l| fixed[l.var].is_some_and(|x| l.value(x))) {
                return None;
            }
            Some(
                l.iter()
                    .filter_map(|l| {
                        local[l.var].map(|v| Literal {
                            var: v,
                            negated: l.negated,
                        })
                    })
                    .collect(),
            )
        };
        for f in &self.factors {
            match f {
                Factor::Xor(l) => {
                    if let Some(m) = map_lits(l) {
                        if m.len() >= 2 {
                            factors.push(Factor::Xor(m));
                        }
                    }
                }
                Factor::AtMostOne(l) => {
                    if let Some(m) = map_lits(l) {
                        if m.len() >= 2 {
                            factors.push(Factor::AtMostOne(m));
                        }
                    }
                }
                Factor::Or(l) => {
                    if let Some(m) = map_lits(l) {
                        if m.len() >= 2 {
                            factors.push(Factor::Or(m));
                        }
                    }
                }
                Factor::Pair { a, b, score } => match (fixed[*a], fixed[*b]) {
                    (None, None) => factors.push(Factor::Pair {
                        a: local[*a].unwrap(),
                        b: local[*b].unwrap(),
                        score: *score,
                    }),
                    (Some(true), None) => scores[local[*b].unwrap()] += score,
                    (None, Some(true)) => scores[local[*a].unwrap()] += score,
                    (Some(true), Some(true)) => offset += score,
                    _ => {}
                },
                Factor::SemiMarkov { n, spans } => {
                    let spans: Vec<SpanVar> = spans
                        .iter()
                        .filter_map(|s| {
                            local[s.var].map(|v| SpanVar {
                                var: v,
                                start: s.start,
                                end: s.end,
                            })
                        })
                        .collect();
                    if spans.len() >= 2 {
                        factors.push(Factor::SemiMarkov { n: *n, spans });
                    }
                }
            }
        }
        Reduced {
            free,
            scores,
            factors,
            offset,
            fixed,
        }
    }
}

/// A graph restricted to its free variables after propagation.
#[derive(Clone, Debug)]
pub(crate) struct Reduced {
    /// Original index of each free variable.
    pub free: Vec<usize>,
    pub scores: Vec<f64>,
    pub factors: Vec<Factor>,
    /// Objective contributed by variables fixed on.
    pub offset: f64,
    pub fixed: Vec<Option<bool>>,
}

fn set(fixed: &mut [Option<bool>], v: usize, b: bool) -> Result<bool> {
    match fixed[v] {
        Some(x) if x == b => Ok(false),
        Some(_) => Err(Error::Infeasible(format!("variable {v} forced both ways"))),
        None => {
            fixed[v] = Some(b);
            Ok(true)
        }
    }
}

pub(crate) fn propagate_in_place(factors: &[Factor], fixed: &mut [Option<bool>]) -> Result<()> {
    Propagator::new(factors, fixed.len()).propagate_all(fixed)
}

fn infeasible(what: &str) -> Error {
    Error::Infeasible(format!("{what} factor cannot be satisfied"))
}

/// Unit propagation over the hard factors. Only factors touching a changed
/// variable are revisited, and assignments go on a trail so a failed trial
/// can be undone.
pub(crate) struct Propagator<'a> {
    factors: &'a [Factor],
    watch: Vec<Vec<usize>>,
    queue: Vec<usize>,
    queued: Vec<bool>,
    trail: Vec<usize>,
    on: Vec<(usize, usize)>,
}

impl<'a> Propagator<'a> {
    pub(crate) fn new(factors: &'a [Factor], num_vars: usize) -> Self {
        let mut watch = vec![Vec::new(); num_vars];
        for (k, f) in factors.iter().enumerate() {
            match f {
                Factor::Xor(l) | Factor::AtMostOne(l) | Factor::Or(l) => {
                    for lit in l {
                        watch[lit.var].push(k);
                    }
                }
                Factor::SemiMarkov { spans, .. } => {
                    for s in spans {
                        watch[s.var].push(k);
                    }
                }
                Factor::Pair { .. } => {}
            }
        }
        Propagator {
            factors,
            watch,
            queue: Vec::new(),
            queued: vec![false; factors.len()],
            trail: Vec::new(),
            on: Vec::new(),
        }
    }

    /// Visits every factor, then propagates to a fixpoint.
    pub(crate) fn propagate_all(&mut self, fixed: &mut [Option<bool>]) -> Result<()> {
        for k in 0..self.factors.len() {
            self.enqueue(k);
        }
        let r = self.run(fixed);
        self.trail.clear();
        r
    }

    /// Sets `v` to `value` and propagates. On a contradiction `fixed` is left
    /// as it was and `false` is returned.
    pub(crate) fn try_assign(&mut self, fixed: &mut [Option<bool>], v: usize, value: bool) -> bool {
        self.trail.clear();
        let ok = self.assign(fixed, v, value).and_then(|_| self.run(fixed)).is_ok();
        if !ok {
            for &u in &self.trail {
                fixed[u] = None;
            }
        }
        self.trail.clear();
        ok
    }

    fn enqueue(&mut self, k: usize) {
        if !self.queued[k] {
            self.queued[k] = true;
            self.queue.push(k);
        }
    }

    fn assign(&mut self, fixed: &mut [Option<bool>], v: usize, b: bool) -> Result<()> {
        match fixed[v] {
            Some(x) if x == b => Ok(()),
            Some(_) => Err(Error::Infeasible(format!("variable {v} forced both ways"))),
            None => {
                fixed[v] = Some(b);
                self.trail.push(v);
                for i in 0..self.watch[v].len() {
                    let k = self.watch[v][i];
                    self.enqueue(k);
                }
                Ok(())
            }
        }
    }

    fn run(&mut self, fixed: &mut [Option<bool>]) -> Result<()> {
        while let Some(k) = self.queue.pop() {
            self.queued[k] = false;
            if let Err(e) = self.visit(k, fixed) {
                for k in self.queue.drain(..) {
                    self.queued[k] = false;
                }
                return Err(e);
            }
        }
        Ok(())
    }

    fn visit(&mut self, k: usize, fixed: &mut [Option<bool>]) -> Result<()> {
        let factors = self.factors;
        match &factors[k] {
            f @ (Factor::Xor(l) | Factor::AtMostOne(l) | Factor::Or(l)) => {
                let (mut trues, mut free, mut last) = (0, 0, None);
                for &lit in l {
                    match fixed[lit.var] {
                        Some(x) if lit.value(x) => trues += 1,
                        Some(_) => {}
                        None => {
                            free += 1;
                            last = Some(lit);
                        }
                    }
                }
                let exclusive = !matches!(f, Factor::Or(_));
                let needs_one = !matches!(f, Factor::AtMostOne(_));
                if exclusive && trues > 1 {
                    return Err(infeasible("exclusive"));
                }
                if exclusive && trues == 1 && free > 0 {
                    for &lit in l {
                        if fixed[lit.var].is_none() {
                            self.assign(fixed, lit.var, lit.negated)?;
                        }
                    }
                }
                if needs_one && trues == 0 {
                    match (free, last) {
                        (0, _) => return Err(infeasible("covering")),
                        (1, Some(lit)) => self.assign(fixed, lit.var, !lit.negated)?,
                        _ => {}
                    }
                }
            }
            Factor::Pair { .. } => {}
            Factor::SemiMarkov { spans, .. } => {
                let mut on = std::mem::take(&mut self.on);
                on.clear();
                on.extend(spans.iter().filter(|s| fixed[s.var] == Some(true)).map(|s| (s.start, s.end)));
                let overlap = |a: (usize, usize), b: (usize, usize)| a.0 <= b.1 && b.0 <= a.1;
                let mut r = Ok(());
                if on.iter().enumerate().any(|(i, &a)| on[i + 1..].iter().any(|&b| overlap(a, b))) {
                    r = Err(infeasible("non-overlap"));
                } else if !on.is_empty() {
                    for sp in spans {
                        if fixed[sp.var].is_none() && on.iter().any(|&a| overlap(a, (sp.start, sp.end))) {
                            if let Err(e) = self.assign(fixed, sp.var, false) {
                                r = Err(e);
                                break;
                            }
                        }
                    }
                }
                self.on = on;
                r?;
            }
        }
        Ok(())
    }
}
