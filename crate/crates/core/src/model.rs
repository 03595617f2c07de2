//! Sentences, annotations, the frame ontology, parts and candidate spaces.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub lemma: String,
    pub pos: String,
}

impl Token {
    pub fn new(form: impl Into<String>, lemma: impl Into<String>, pos: impl Into<String>) -> Self {
        Token {
            form: form.into(),
            lemma: lemma.into(),
            pos: pos.into(),
        }
    }
}

/// The annotation attached to a training sentence. Corpora are disjoint, so a
/// sentence carries frame annotations or a dependency graph, never both.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Supervision {
    #[default]
    None,
    Frames(Vec<FrameParse>),
    Dependencies(DependencyGraph),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub supervision: Supervision,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Sentence {
            id: id.into(),
            tokens,
            supervision: Supervision::None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn frames(&self) -> &[FrameParse] {
        match &self.supervision {
            Supervision::Frames(f) => f,
            _ => &[],
        }
    }

    pub fn graph(&self) -> Option<&DependencyGraph> {
        match &self.supervision {
            Supervision::Dependencies(g) => Some(g),
            _ => None,
        }
    }

    pub fn validate(&self, ontology: Option<&Ontology>) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::EmptySentence(self.id.clone()));
        }
        match &self.supervision {
            Supervision::None => Ok(()),
            Supervision::Frames(parses) => {
                for p in parses {
                    p.validate(self.len(), ontology, None)?;
                }
                Ok(())
            }
            Supervision::Dependencies(g) => g.validate(self.len()),
        }
    }
}

/// A frame-evoking span, inclusive on both ends.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Target {
    pub start: usize,
    pub end: usize,
    pub lu: String,
}

impl Target {
    pub fn new(start: usize, end: usize, lu: impl Into<String>) -> Self {
        Target {
            start,
            end,
            lu: lu.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Argument {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

impl Argument {
    pub fn new(start: usize, end: usize, role: impl Into<String>) -> Self {
        Argument {
            start,
            end,
            role: role.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start <= end && start <= self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameParse {
    pub target: Target,
    pub frame: String,
    pub arguments: Vec<Argument>,
}

impl FrameParse {
    pub fn validate(
        &self,
        n: usize,
        ontology: Option<&Ontology>,
        max_span_len: Option<usize>,
    ) -> Result<()> {
        let t = &self.target;
        if t.start > t.end || t.end >= n {
            return Err(Error::Invalid(format!(
                "target span ({}, {}) outside sentence of length {n}",
                t.start, t.end
            )));
        }
        if let Some(ont) = ontology {
            let frames = ont.frames_for(&t.lu)?;
            if !frames.iter().any(|f| f == &self.frame) {
                return Err(Error::Invalid(format!(
                    "frame `{}` cannot be evoked by `{}`",
                    self.frame, t.lu
                )));
            }
        }
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(self.arguments.len());
        for a in &self.arguments {
            if a.start > a.end || a.end >= n {
                return Err(Error::Invalid(format!(
                    "argument span ({}, {}) outside sentence of length {n}",
                    a.start, a.end
                )));
            }
            if let Some(cap) = max_span_len {
                if a.len() > cap {
                    return Err(Error::Invalid(format!(
                        "argument span ({}, {}) longer than {cap}",
                        a.start, a.end
                    )));
                }
            }
            if let Some(ont) = ontology {
                if !ont.roles(&self.frame).iter().any(|r| r == &a.role) {
                    return Err(Error::Invalid(format!(
                        "role `{}` is not defined for frame `{}`",
                        a.role, self.frame
                    )));
                }
            }
            spans.push((a.start, a.end));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::Invalid(format!(
                    "overlapping arguments ({}, {}) and ({}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }
}

/// A labeled bilexical dependency.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arc {
    pub head: usize,
    pub dep: usize,
    pub label: String,
}

impl Arc {
    pub fn new(head: usize, dep: usize, label: impl Into<String>) -> Self {
        Arc {
            head,
            dep,
            label: label.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DependencyGraph {
    pub top: Option<usize>,
    pub arcs: BTreeSet<Arc>,
}

impl DependencyGraph {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(t) = self.top {
            if t >= n {
                return Err(Error::Invalid(format!("top {t} outside sentence of length {n}")));
            }
        }
        let mut seen = BTreeSet::new();
        for a in &self.arcs {
            if a.head >= n || a.dep >= n {
                return Err(Error::Invalid(format!(
                    "arc {}->{} outside sentence of length {n}",
                    a.head, a.dep
                )));
            }
            if a.head == a.dep {
                return Err(Error::Invalid(format!("self-loop on token {}", a.head)));
            }
            if !seen.insert((a.head, a.dep, a.label.as_str())) {
                return Err(Error::Invalid(format!("duplicate arc {}->{}", a.head, a.dep)));
            }
        }
        Ok(())
    }

    /// Tokens with at least one outgoing arc.
    pub fn predicates(&self) -> BTreeSet<usize> {
        self.arcs.iter().map(|a| a.head).collect()
    }
}

/// The frame lexicon: which frames each lexical unit can evoke and which roles
/// each frame licenses. Sets are kept sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Ontology {
    lu_to_frames: BTreeMap<String, Vec<String>>,
    frame_to_roles: BTreeMap<String, Vec<String>>,
}

impl Ontology {
    pub fn new<F, L>(frames: F, lus: L) -> Result<Self>
    where
        F: IntoIterator<Item = (String, Vec<String>)>,
        L: IntoIterator<Item = (String, Vec<String>)>,
    {
        let mut frame_to_roles = BTreeMap::new();
        for (frame, mut roles) in frames {
            roles.sort();
            roles.dedup();
            frame_to_roles.insert(frame, roles);
        }
        let mut lu_to_frames = BTreeMap::new();
        for (lu, mut fs) in lus {
            fs.sort();
            fs.dedup();
            for f in &fs {
                match frame_to_roles.get(f) {
                    None => {
                        return Err(Error::Invalid(format!(
                            "lexical unit `{lu}` refers to undefined frame `{f}`"
                        )))
                    }
                    Some(r) if r.is_empty() => {
                        return Err(Error::Invalid(format!("frame `{f}` has no roles")))
                    }
                    _ => {}
                }
            }
            lu_to_frames.insert(lu, fs);
        }
        Ok(Ontology {
            lu_to_frames,
            frame_to_roles,
        })
    }

    pub fn frames_for(&self, lu: &str) -> Result<&[String]> {
        self.lu_to_frames
            .get(lu)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLu(lu.to_string()))
    }

    pub fn roles(&self, frame: &str) -> &[String] {
        self.frame_to_roles.get(frame).map(Vec::as_slice).unwrap_or(&[])
    }

    /// LUs mapping to two or more frames.
    pub fn is_ambiguous(&self, lu: &str) -> bool {
        self.lu_to_frames.get(lu).is_some_and(|f| f.len() >= 2)
    }

    pub fn lus(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.lu_to_frames.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn frames(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.frame_to_roles.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn all_roles(&self) -> BTreeSet<&str> {
        self.frame_to_roles.values().flatten().map(String::as_str).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartId(pub usize);

impl PartId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A scoreable substructure. Frame and role fields index into the owning
/// space's `frames` and `roles[frame]` tables; arc heads equal to the sentence
/// length denote the virtual root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    Predicate {
        frame: usize,
    },
    Argument {
        frame: usize,
        start: usize,
        end: usize,
        role: usize,
    },
    Head {
        token: usize,
    },
    UnlabeledArc {
        head: usize,
        dep: usize,
    },
    LabeledArc {
        head: usize,
        dep: usize,
        label: usize,
    },
    CrossTask {
        argument: PartId,
        arc: PartId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PartKind {
    Predicate,
    Argument,
    Head,
    UnlabeledArc,
    LabeledArc,
    CrossTask,
}

impl Part {
    pub fn kind(&self) -> PartKind {
        match self {
            Part::Predicate { .. } => PartKind::Predicate,
            Part::Argument { .. } => PartKind::Argument,
            Part::Head { .. } => PartKind::Head,
            Part::UnlabeledArc { .. } => PartKind::UnlabeledArc,
            Part::LabeledArc { .. } => PartKind::LabeledArc,
            Part::CrossTask { .. } => PartKind::CrossTask,
        }
    }

    pub fn is_frame_part(&self) -> bool {
        matches!(self, Part::Predicate { .. } | Part::Argument { .. })
    }

    pub fn is_dependency_part(&self) -> bool {
        matches!(
            self,
            Part::Head { .. } | Part::UnlabeledArc { .. } | Part::LabeledArc { .. }
        )
    }
}

/// Candidate generation limits.
#[derive(Clone, Debug)]
pub struct SpaceLimits {
    pub max_span_len: usize,
    /// Generate head/arc parts.
    pub dependencies: bool,
    /// Generate cross-task parts (requires a target and dependencies).
    pub cross_task: bool,
    /// Generate virtual-root arcs carrying the top designation.
    pub root_arcs: bool,
    /// Dependency label inventory.
    pub labels: Vec<String>,
    /// Retained argument spans after pruning; `None` keeps all.
    pub allowed_spans: Option<BTreeSet<(usize, usize)>>,
    /// Retained token-to-token arcs `(head, dep)` after pruning; root arcs are
    /// never pruned.
    pub allowed_arcs: Option<BTreeSet<(usize, usize)>>,
}

impl Default for SpaceLimits {
    fn default() -> Self {
        SpaceLimits {
            max_span_len: 20,
            dependencies: true,
            cross_task: true,
            root_arcs: true,
            labels: Vec::new(),
            allowed_spans: None,
            allowed_arcs: None,
        }
    }
}

/// Parts of a gold structure found in a candidate space, plus the number of
/// gold parts the space cannot represent (pruned away).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoldParts {
    pub parts: BTreeSet<PartId>,
    pub missing: usize,
}

impl GoldParts {
    pub fn total(&self) -> usize {
        self.parts.len() + self.missing
    }
}

/// Every scoreable part for one decoding instance, with parallel scores and
/// lookup indices.
#[derive(Clone, Debug)]
pub struct CandidateSpace {
    n: usize,
    target: Option<Target>,
    frames: Vec<String>,
    roles: Vec<Vec<String>>,
    labels: Vec<String>,
    parts: Vec<Part>,
    pub scores: Vec<f64>,
    predicates: Vec<PartId>,
    arguments: Vec<PartId>,
    heads: Vec<Option<PartId>>,
    arcs: Vec<PartId>,
    labeled: Vec<PartId>,
    cross_task: Vec<PartId>,
    arc_index: HashMap<(usize, usize), PartId>,
    labeled_index: HashMap<(usize, usize, usize), PartId>,
    arg_index: HashMap<(usize, usize, usize, usize), PartId>,
    arc_labels: HashMap<PartId, Vec<PartId>>,
    span_arguments: BTreeMap<(usize, usize), Vec<PartId>>,
}

impl CandidateSpace {
    /// Enumerates candidate parts for `sentence`, optionally for one target.
    pub fn build(
        sentence: &Sentence,
        target: Option<&Target>,
        ontology: &Ontology,
        limits: &SpaceLimits,
    ) -> Result<Self> {
        let n = sentence.len();
        if n == 0 {
            return Err(Error::EmptySentence(sentence.id.clone()));
        }
        let mut parts = Vec::new();
        let mut frames = Vec::new();
        let mut roles = Vec::new();
        if let Some(t) = target {
            if t.start > t.end || t.end >= n {
                return Err(Error::Invalid(format!(
                    "target ({}, {}) outside sentence `{}`",
                    t.start, t.end, sentence.id
                )));
            }
            for f in ontology.frames_for(&t.lu)? {
                frames.push(f.clone());
                roles.push(ontology.roles(f).to_vec());
            }
            for frame in 0..frames.len() {
                parts.push(Part::Predicate { frame });
            }
            for (frame, frame_roles) in roles.iter().enumerate() {
                for start in 0..n {
                    for end in start..n.min(start + limits.max_span_len) {
                        if let Some(allowed) = &limits.allowed_spans {
                            if !allowed.contains(&(start, end)) {
                                continue;
                            }
                        }
                        for role in 0..frame_roles.len() {
                            parts.push(Part::Argument {
                                frame,
                                start,
                                end,
                                role,
                            });
                        }
                    }
                }
            }
        }
        if limits.dependencies {
            for token in 0..n {
                parts.push(Part::Head { token });
            }
            let arc_allowed = |h: usize, d: usize| {
                h != d
                    && limits
                        .allowed_arcs
                        .as_ref()
                        .is_none_or(|a| a.contains(&(h, d)))
            };
            for head in 0..n {
                for dep in 0..n {
                    if arc_allowed(head, dep) {
                        parts.push(Part::UnlabeledArc { head, dep });
                    }
                }
            }
            if limits.root_arcs {
                for dep in 0..n {
                    parts.push(Part::UnlabeledArc { head: n, dep });
                }
            }
            for head in 0..n {
                for dep in 0..n {
                    if arc_allowed(head, dep) {
                        for label in 0..limits.labels.len() {
                            parts.push(Part::LabeledArc { head, dep, label });
                        }
                    }
                }
            }
        }
        let mut space = Self::from_parts(
            n,
            target.cloned(),
            frames,
            roles,
            limits.labels.clone(),
            parts,
        )?;
        if limits.cross_task && limits.dependencies {
            if let Some(t) = target {
                let t0 = t.start;
                let mut extra = Vec::new();
                for &a in &space.arguments {
                    if let Part::Argument { start, end, .. } = space.parts[a.0] {
                        for dep in start..=end {
                            if let Some(&arc) = space.arc_index.get(&(t0, dep)) {
                                extra.push(Part::CrossTask { argument: a, arc });
                            }
                        }
                    }
                }
                for p in extra {
                    space.push(p)?;
                }
            }
        }
        Ok(space)
    }

    /// Assembles a space from an explicit part list. Parts are validated and
    /// indexed; scores start at zero.
    pub fn from_parts(
        n: usize,
        target: Option<Target>,
        frames: Vec<String>,
        roles: Vec<Vec<String>>,
        labels: Vec<String>,
        parts: Vec<Part>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySentence(String::new()));
        }
        if frames.len() != roles.len() {
            return Err(Error::Invalid("frame and role tables differ in length".into()));
        }
        let mut space = CandidateSpace {
            n,
            target,
            frames,
            roles,
            labels,
            parts: Vec::with_capacity(parts.len()),
            scores: Vec::with_capacity(parts.len()),
            predicates: Vec::new(),
            arguments: Vec::new(),
            heads: vec![None; n],
            arcs: Vec::new(),
            labeled: Vec::new(),
            cross_task: Vec::new(),
            arc_index: HashMap::new(),
            labeled_index: HashMap::new(),
            arg_index: HashMap::new(),
            arc_labels: HashMap::new(),
            span_arguments: BTreeMap::new(),
        };
        for p in parts {
            space.push(p)?;
        }
        Ok(space)
    }

    fn push(&mut self, part: Part) -> Result<PartId> {
        let id = PartId(self.parts.len());
        let n = self.n;
        let bad = |msg: String| Err(Error::Invalid(msg));
        match part {
            Part::Predicate { frame } => {
                if frame >= self.frames.len() || self.target.is_none() {
                    return bad(format!("predicate part with frame {frame} has no target/frame"));
                }
                self.predicates.push(id);
            }
            Part::Argument {
                frame,
                start,
                end,
                role,
            } => {
                if frame >= self.frames.len() || role >= self.roles[frame].len() {
                    return bad(format!("argument part references frame {frame} role {role}"));
                }
                if start > end || end >= n {
                    return bad(format!("argument span ({start}, {end}) out of range"));
                }
                if self.arg_index.insert((frame, start, end, role), id).is_some() {
                    return bad(format!("duplicate argument part ({start}, {end})"));
                }
                self.arguments.push(id);
                self.span_arguments.entry((start, end)).or_default().push(id);
            }
            Part::Head { token } => {
                if token >= n || self.heads[token].is_some() {
                    return bad(format!("bad head part for token {token}"));
                }
                self.heads[token] = Some(id);
            }
            Part::UnlabeledArc { head, dep } => {
                if head > n || dep >= n || head == dep {
                    return bad(format!("bad arc {head}->{dep}"));
                }
                if self.arc_index.insert((head, dep), id).is_some() {
                    return bad(format!("duplicate arc {head}->{dep}"));
                }
                self.arcs.push(id);
            }
            Part::LabeledArc { head, dep, label } => {
                if label >= self.labels.len() {
                    return bad(format!("label index {label} out of range"));
                }
                let Some(&arc) = self.arc_index.get(&(head, dep)) else {
                    return bad(format!("labeled arc {head}->{dep} without unlabeled arc"));
                };
                if head == n {
                    return bad("labeled arcs cannot leave the virtual root".into());
                }
                if self.labeled_index.insert((head, dep, label), id).is_some() {
                    return bad(format!("duplicate labeled arc {head}->{dep}"));
                }
                self.labeled.push(id);
                self.arc_labels.entry(arc).or_default().push(id);
            }
            Part::CrossTask { argument, arc } => {
                let (Some(Part::Argument { start, end, .. }), Some(Part::UnlabeledArc { head, dep })) =
                    (self.parts.get(argument.0), self.parts.get(arc.0))
                else {
                    return bad("cross-task part must join an argument and an arc".into());
                };
                let t0 = self.target.as_ref().map(|t| t.start);
                if Some(*head) != t0 || dep < start || dep > end {
                    return bad(format!(
                        "cross-task arc {head}->{dep} does not leave the target into ({start}, {end})"
                    ));
                }
                self.cross_task.push(id);
            }
        }
        self.parts.push(part);
        self.scores.push(0.0);
        Ok(id)
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    /// Index of the virtual root.
    pub fn root(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }

    pub fn frames(&self) -> &[String] {
        &self.frames
    }

    pub fn roles(&self, frame: usize) -> &[String] {
        &self.roles[frame]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn part(&self, id: PartId) -> Part {
        self.parts[id.0]
    }

    pub fn score(&self, id: PartId) -> f64 {
        self.scores[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = PartId> {
        (0..self.parts.len()).map(PartId)
    }

    pub fn predicates(&self) -> &[PartId] {
        &self.predicates
    }

    pub fn arguments(&self) -> &[PartId] {
        &self.arguments
    }

    pub fn head_part(&self, token: usize) -> Option<PartId> {
        self.heads.get(token).copied().flatten()
    }

    pub fn heads(&self) -> impl Iterator<Item = PartId> + '_ {
        self.heads.iter().flatten().copied()
    }

    /// All unlabeled arcs, root arcs included.
    pub fn arcs(&self) -> &[PartId] {
        &self.arcs
    }

    pub fn labeled_arcs(&self) -> &[PartId] {
        &self.labeled
    }

    pub fn cross_task(&self) -> &[PartId] {
        &self.cross_task
    }

    pub fn arc(&self, head: usize, dep: usize) -> Option<PartId> {
        self.arc_index.get(&(head, dep)).copied()
    }

    pub fn labeled_arc(&self, head: usize, dep: usize, label: usize) -> Option<PartId> {
        self.labeled_index.get(&(head, dep, label)).copied()
    }

    pub fn argument(&self, frame: usize, start: usize, end: usize, role: usize) -> Option<PartId> {
        self.arg_index.get(&(frame, start, end, role)).copied()
    }

    /// Labeled variants of an unlabeled arc.
    pub fn labels_of(&self, arc: PartId) -> &[PartId] {
        self.arc_labels.get(&arc).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn span_arguments(&self) -> &BTreeMap<(usize, usize), Vec<PartId>> {
        &self.span_arguments
    }

    pub fn set_scores(&mut self, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.parts.len() {
            return Err(Error::Invalid(format!(
                "{} scores for {} parts",
                scores.len(),
                self.parts.len()
            )));
        }
        self.scores = scores;
        Ok(())
    }

    /// Sum of scores over a part set.
    pub fn total_score<'a>(&self, parts: impl IntoIterator<Item = &'a PartId>) -> f64 {
        parts.into_iter().map(|p| self.scores[p.0]).sum()
    }

    fn frame_index(&self, name: &str) -> Option<usize> {
        self.frames.iter().position(|f| f == name)
    }

    /// Locates the parts of a gold frame parse.
    pub fn gold_frame_parts(&self, parse: &FrameParse) -> GoldParts {
        let mut gold = GoldParts::default();
        let Some(frame) = self.frame_index(&parse.frame) else {
            gold.missing = 1 + parse.arguments.len();
            return gold;
        };
        match self.predicates.iter().find(
            |&&p| matches!(self.parts[p.0], Part::Predicate { frame: f } if f == frame),
        ) {
            Some(&p) => {
                gold.parts.insert(p);
            }
            None => gold.missing += 1,
        }
        for a in &parse.arguments {
            let role = self.roles[frame].iter().position(|r| r == &a.role);
            match role.and_then(|r| self.argument(frame, a.start, a.end, r)) {
                Some(p) => {
                    gold.parts.insert(p);
                }
                None => gold.missing += 1,
            }
        }
        gold
    }

    /// Locates head, unlabeled-arc and labeled-arc parts of a gold graph. Gold
    /// heads are the tokens with at least one outgoing arc.
    pub fn gold_dependency_parts(&self, graph: &DependencyGraph) -> GoldParts {
        let mut gold = GoldParts::default();
        let push = |p: Option<PartId>, gold: &mut GoldParts| match p {
            Some(p) => {
                gold.parts.insert(p);
            }
            None => gold.missing += 1,
        };
        for h in graph.predicates() {
            push(self.head_part(h), &mut gold);
        }
        let unlabeled: BTreeSet<(usize, usize)> =
            graph.arcs.iter().map(|a| (a.head, a.dep)).collect();
        for &(h, d) in &unlabeled {
            push(self.arc(h, d), &mut gold);
        }
        for a in &graph.arcs {
            let l = self.labels.iter().position(|l| l == &a.label);
            push(l.and_then(|l| self.labeled_arc(a.head, a.dep, l)), &mut gold);
        }
        if let Some(t) = graph.top {
            push(self.arc(self.n, t), &mut gold);
        }
        gold
    }

    /// Reads the frame parse out of an active part set.
    pub fn frame_parse_from<'a>(
        &self,
        active: impl IntoIterator<Item = &'a PartId>,
    ) -> Option<FrameParse> {
        let target = self.target.clone()?;
        let mut frame = None;
        let mut args = Vec::new();
        for &p in active {
            match self.parts[p.0] {
                Part::Predicate { frame: f } => frame = Some(f),
                Part::Argument {
                    frame: f,
                    start,
                    end,
                    role,
                } => args.push((f, start, end, role)),
                _ => {}
            }
        }
        let frame = frame?;
        let mut arguments: Vec<Argument> = args
            .into_iter()
            .filter(|a| a.0 == frame)
            .map(|(f, s, e, r)| Argument::new(s, e, self.roles[f][r].clone()))
            .collect();
        arguments.sort();
        Some(FrameParse {
            target,
            frame: self.frames[frame].clone(),
            arguments,
        })
    }

    /// Reads the dependency graph out of an active part set. Labeled arcs
    /// define the arc set; an active root arc defines the top.
    pub fn graph_from<'a>(&self, active: impl IntoIterator<Item = &'a PartId>) -> DependencyGraph {
        let mut g = DependencyGraph::default();
        for &p in active {
            match self.parts[p.0] {
                Part::LabeledArc { head, dep, label } => {
                    g.arcs.insert(Arc::new(head, dep, self.labels[label].clone()));
                }
                Part::UnlabeledArc { head, dep } if head == self.n => {
                    if g.top.is_none_or(|t| dep < t) {
                        g.top = Some(dep);
                    }
                }
                _ => {}
            }
        }
        g
    }
}

/// Per-error costs of the weighted Hamming distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub false_positive_cost: f64,
    pub false_negative_cost: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            false_positive_cost: 0.4,
            false_negative_cost: 0.6,
        }
    }
}

impl CostConfig {
    pub fn zero() -> Self {
        CostConfig {
            false_positive_cost: 0.0,
            false_negative_cost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.false_positive_cost < 0.0 || self.false_negative_cost < 0.0 {
            return Err(Error::Config("costs must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `fp · |predicted ∖ gold| + fn · |gold ∖ predicted|`.
pub fn weighted_hamming<T: Ord>(
    predicted: &BTreeSet<T>,
    gold: &BTreeSet<T>,
    cost: &CostConfig,
) -> f64 {
    let fp = predicted.difference(gold).count() as f64;
    let fneg = gold.difference(predicted).count() as f64;
    cost.false_positive_cost * fp + cost.false_negative_cost * fneg
}
