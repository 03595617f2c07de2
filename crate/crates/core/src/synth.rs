//! Synthetic data: random scored decoding instances for solver checks, and a
//! small disjoint pair of corpora drawn from one toy grammar.
//!
//! The grammar is `NP V NP [P NP]` with optional determiners and adjectives.
//! Frame annotations mark the verb as target and the noun phrases and the
//! prepositional phrase as arguments; dependency graphs attach subject and
//! object nouns to the verb, so arcs from the target land inside argument
//! spans.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::inference::Constraints;
use crate::model::{
    Arc, Argument, CandidateSpace, DependencyGraph, FrameParse, Ontology, Sentence, SpaceLimits,
    Supervision, Target, Token,
};
use crate::Result;

/// Bounds for [`random_instance`].
#[derive(Clone, Debug)]
pub struct InstanceBounds {
    pub max_tokens: usize,
    pub max_frames: usize,
    pub max_roles: usize,
    pub max_labels: usize,
}

impl Default for InstanceBounds {
    fn default() -> Self {
        InstanceBounds {
            max_tokens: 6,
            max_frames: 2,
            max_roles: 3,
            max_labels: 2,
        }
    }
}

/// A scored joint candidate space with cross-task parts and the constraint
/// set to decode it under.
#[derive(Clone, Debug)]
pub struct Instance {
    pub space: CandidateSpace,
    pub constraints: Constraints,
}

/// Draws a random joint instance: sentence length, frame and role counts,
/// labels, target position and every part score (uniform in [−1, 1]).
pub fn random_instance<R: Rng>(rng: &mut R, bounds: &InstanceBounds) -> Result<Instance> {
    let n = rng.gen_range(1..=bounds.max_tokens);
    let frames = rng.gen_range(1..=bounds.max_frames);
    let frame_defs: Vec<(String, Vec<String>)> = (0..frames)
        .map(|f| {
            let roles = rng.gen_range(1..=bounds.max_roles);
            (format!("F{f}"), (0..roles).map(|r| format!("R{r}")).collect())
        })
        .collect();
    let names: Vec<String> = frame_defs.iter().map(|(f, _)| f.clone()).collect();
    let ontology = Ontology::new(frame_defs, [("lu.v".to_string(), names)])?;
    let labels: Vec<String> = (0..rng.gen_range(1..=bounds.max_labels))
        .map(|l| format!("L{l}"))
        .collect();
    let start = rng.gen_range(0..n);
    let end = rng.gen_range(start..n.min(start + 2));
    let target = Target::new(start, end, "lu.v");
    let sentence = Sentence::new(
        "random",
        (0..n).map(|i| Token::new(format!("w{i}"), format!("w{i}"), "X")).collect(),
    );
    let limits = SpaceLimits {
        max_span_len: n,
        labels: labels.clone(),
        ..Default::default()
    };
    let mut space = CandidateSpace::build(&sentence, Some(&target), &ontology, &limits)?;
    let scores = (0..space.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    space.set_scores(scores)?;
    let deterministic_labels = (0..labels.len()).filter(|_| rng.gen_bool(0.5)).collect();
    Ok(Instance {
        space,
        constraints: Constraints {
            deterministic_labels,
            optional_top: rng.gen_bool(0.25),
            skip_frames: false,
        },
    })
}

/// Sizes of the generated corpora.
#[derive(Clone, Debug)]
pub struct CorpusConfig {
    pub fn_train: usize,
    pub sdp_train: usize,
    pub fn_dev: usize,
    pub sdp_dev: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            fn_train: 200,
            sdp_train: 200,
            fn_dev: 50,
            sdp_dev: 50,
        }
    }
}

/// Frame-annotated and dependency-annotated sentences from one grammar.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub ontology: Ontology,
    pub labels: Vec<String>,
    pub fn_train: Vec<Sentence>,
    pub sdp_train: Vec<Sentence>,
    pub fn_dev: Vec<Sentence>,
    pub sdp_dev: Vec<Sentence>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Person,
    Food,
    Thing,
    Place,
}

const NOUNS: &[(&str, Class)] = &[
    ("man", Class::Person),
    ("woman", Class::Person),
    ("child", Class::Person),
    ("farmer", Class::Person),
    ("apple", Class::Food),
    ("bread", Class::Food),
    ("soup", Class::Food),
    ("box", Class::Thing),
    ("ball", Class::Thing),
    ("car", Class::Thing),
    ("table", Class::Place),
    ("house", Class::Place),
    ("market", Class::Place),
];

const ADJECTIVES: &[&str] = &["old", "red", "small", "big", "new"];
const DETERMINERS: &[&str] = &["the", "a"];
const PREPOSITIONS: &[&str] = &["to", "from", "at", "with"];

/// Verb lemma, its frames, and for each frame the object class that selects
/// it (the first matching frame wins; the last frame is the fallback).
const VERBS: &[(&str, &[(&str, Option<Class>)])] = &[
    ("move", &[("Placing", Some(Class::Thing)), ("Motion", None)]),
    ("put", &[("Placing", None)]),
    ("eat", &[("Ingestion", None)]),
    ("take", &[("Ingestion", Some(Class::Food)), ("Placing", None)]),
    ("see", &[("Perception", None)]),
    ("buy", &[("Commerce", None)]),
    ("get", &[("Commerce", Some(Class::Food)), ("Motion", None)]),
    ("hit", &[("Harm", None)]),
];

const FRAMES: &[(&str, [&str; 3])] = &[
    ("Motion", ["Theme", "Goal", "Source"]),
    ("Placing", ["Agent", "Theme", "Goal"]),
    ("Ingestion", ["Ingestor", "Ingestibles", "Place"]),
    ("Perception", ["Perceiver", "Phenomenon", "Place"]),
    ("Commerce", ["Buyer", "Goods", "Seller"]),
    ("Harm", ["Agent", "Victim", "Instrument"]),
];

pub const LABELS: &[&str] = &["ARG1", "ARG2", "BV"];

pub fn ontology() -> Ontology {
    Ontology::new(
        FRAMES
            .iter()
            .map(|(f, roles)| (f.to_string(), roles.iter().map(|r| r.to_string()).collect())),
        VERBS.iter().map(|(v, frames)| {
            (format!("{v}.v"), frames.iter().map(|(f, _)| f.to_string()).collect())
        }),
    )
    .expect("built-in ontology is valid")
}

struct Phrase {
    start: usize,
    head: usize,
    end: usize,
}

struct Builder {
    tokens: Vec<Token>,
    arcs: BTreeSet<Arc>,
}

impl Builder {
    fn push(&mut self, form: &str, pos: &str) -> usize {
        self.tokens.push(Token::new(form, form, pos));
        self.tokens.len() - 1
    }

    fn noun_phrase<R: Rng>(&mut self, rng: &mut R, classes: &[Class]) -> (Phrase, Class) {
        let candidates: Vec<&(&str, Class)> =
            NOUNS.iter().filter(|(_, c)| classes.contains(c)).collect();
        let &&(noun, class) = candidates.choose(rng).unwrap();
        let start = self.tokens.len();
        let det = rng.gen_bool(0.7).then(|| self.push(DETERMINERS.choose(rng).unwrap(), "DT"));
        let adj = rng.gen_bool(0.3).then(|| self.push(ADJECTIVES.choose(rng).unwrap(), "JJ"));
        let head = self.push(noun, "NN");
        if let Some(d) = det {
            self.arcs.insert(Arc::new(d, head, "BV"));
        }
        if let Some(a) = adj {
            self.arcs.insert(Arc::new(a, head, "ARG1"));
        }
        (Phrase { start, head, end: head }, class)
    }
}

/// One sentence with both its frame parse and its dependency graph.
pub fn sentence<R: Rng>(rng: &mut R, id: &str) -> (Sentence, FrameParse, DependencyGraph) {
    let mut b = Builder {
        tokens: Vec::new(),
        arcs: BTreeSet::new(),
    };
    let (verb, frames) = *VERBS.choose(rng).unwrap();
    let (subject, _) = b.noun_phrase(rng, &[Class::Person]);
    let v = b.push(verb, "VB");
    let (object, class) = b.noun_phrase(rng, &[Class::Food, Class::Thing, Class::Person]);
    let pp = rng.gen_bool(0.5).then(|| {
        let p = b.push(PREPOSITIONS.choose(rng).unwrap(), "IN");
        let (np, _) = b.noun_phrase(rng, &[Class::Place, Class::Person]);
        b.arcs.insert(Arc::new(p, v, "ARG1"));
        b.arcs.insert(Arc::new(p, np.head, "ARG2"));
        Phrase {
            start: p,
            head: np.head,
            end: np.end,
        }
    });
    b.arcs.insert(Arc::new(v, subject.head, "ARG1"));
    b.arcs.insert(Arc::new(v, object.head, "ARG2"));
    let frame = frames
        .iter()
        .find(|(_, c)| *c == Some(class))
        .or(frames.last())
        .unwrap()
        .0;
    let roles = FRAMES.iter().find(|(f, _)| *f == frame).unwrap().1;
    let mut arguments = vec![
        Argument::new(subject.start, subject.end, roles[0]),
        Argument::new(object.start, object.end, roles[1]),
    ];
    if let Some(pp) = &pp {
        arguments.push(Argument::new(pp.start, pp.end, roles[2]));
    }
    arguments.sort();
    let parse = FrameParse {
        target: Target::new(v, v, format!("{verb}.v")),
        frame: frame.to_string(),
        arguments,
    };
    let graph = DependencyGraph {
        top: Some(v),
        arcs: b.arcs,
    };
    (Sentence::new(id, b.tokens), parse, graph)
}

/// Generates the four splits. Frame sentences carry no graph and dependency
/// sentences carry no frames.
pub fn corpus<R: Rng>(rng: &mut R, config: &CorpusConfig) -> Corpus {
    let frames = |count: usize, prefix: &str, rng: &mut R| -> Vec<Sentence> {
        (0..count)
            .map(|i| {
                let (mut s, parse, _) = sentence(rng, &format!("{prefix}{i}"));
                s.supervision = Supervision::Frames(vec![parse]);
                s
            })
            .collect()
    };
    let fn_train = frames(config.fn_train, "fn-train-", rng);
    let fn_dev = frames(config.fn_dev, "fn-dev-", rng);
    let graphs = |count: usize, prefix: &str, rng: &mut R| -> Vec<Sentence> {
        (0..count)
            .map(|i| {
                let (mut s, _, graph) = sentence(rng, &format!("{prefix}{i}"));
                s.supervision = Supervision::Dependencies(graph);
                s
            })
            .collect()
    };
    let sdp_train = graphs(config.sdp_train, "sdp-train-", rng);
    let sdp_dev = graphs(config.sdp_dev, "sdp-dev-", rng);
    Corpus {
        ontology: ontology(),
        labels: LABELS.iter().map(|l| l.to_string()).collect(),
        fn_train,
        sdp_train,
        fn_dev,
        sdp_dev,
    }
}
