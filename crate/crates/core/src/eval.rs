//! Exact-match frame and dependency metrics, the argument error breakdown and
//! length-binned precision/recall.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{Argument, FrameParse, Ontology, Sentence};
use crate::{Error, Result};

/// Micro precision, recall and F1 from raw counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            correct,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }

    fn of_sets<T: Ord>(gold: &BTreeSet<T>, predicted: &BTreeSet<T>) -> Self {
        Prf::from_counts(gold.intersection(predicted).count(), predicted.len(), gold.len())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FnEvalResult {
    /// Over `(target, frame)` and `(target, span, role)` parts.
    pub parts: Prf,
    pub frame_accuracy: f64,
    pub targets: usize,
    /// Frame accuracy restricted to LUs with two or more frames.
    pub ambiguous_accuracy: f64,
    pub ambiguous_targets: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SdpEvalResult {
    pub arcs: Prf,
}

/// Pairs sentences by id; both sides must hold the same ids.
fn align<'a>(gold: &'a [Sentence], predicted: &'a [Sentence]) -> Result<Vec<(&'a Sentence, &'a Sentence)>> {
    if gold.len() != predicted.len() {
        return Err(Error::Misaligned(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut by_id: HashMap<&str, &Sentence> = HashMap::new();
    for p in predicted {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::Misaligned(format!("duplicate predicted sentence `{}`", p.id)));
        }
    }
    gold.iter()
        .map(|g| {
            let p = by_id
                .get(g.id.as_str())
                .ok_or_else(|| Error::Misaligned(format!("no prediction for sentence `{}`", g.id)))?;
            if p.len() != g.len() {
                return Err(Error::Misaligned(format!(
                    "sentence `{}` has {} gold tokens, {} predicted",
                    g.id,
                    g.len(),
                    p.len()
                )));
            }
            Ok((g, *p))
        })
        .collect()
}

type TargetKey<'a> = (&'a str, usize, usize);

fn parses_by_target(s: &Sentence) -> BTreeMap<(usize, usize), &FrameParse> {
    s.frames().iter().map(|p| ((p.target.start, p.target.end), p)).collect()
}

type FramePart<'a> = (TargetKey<'a>, &'a str, usize, usize);

/// Frame parts carry the frame name and an out-of-range span; argument parts
/// carry the role and span.
fn frame_parts<'a>(s: &'a Sentence, out: &mut BTreeSet<FramePart<'a>>) {
    for fp in s.frames() {
        let t = (s.id.as_str(), fp.target.start, fp.target.end);
        out.insert((t, fp.frame.as_str(), usize::MAX, usize::MAX));
        for a in &fp.arguments {
            out.insert((t, a.role.as_str(), a.start, a.end));
        }
    }
}

pub fn eval_frames(gold: &[Sentence], predicted: &[Sentence], ontology: Option<&Ontology>) -> Result<FnEvalResult> {
    let pairs = align(gold, predicted)?;
    let mut g_parts = BTreeSet::new();
    let mut p_parts = BTreeSet::new();
    let (mut targets, mut correct, mut amb, mut amb_correct) = (0, 0, 0, 0);
    for (g, p) in pairs {
        let pred = parses_by_target(p);
        frame_parts(g, &mut g_parts);
        frame_parts(p, &mut p_parts);
        for gp in g.frames() {
            targets += 1;
            let ok = pred
                .get(&(gp.target.start, gp.target.end))
                .is_some_and(|pp| pp.frame == gp.frame);
            correct += ok as usize;
            if ontology.is_some_and(|o| o.is_ambiguous(&gp.target.lu)) {
                amb += 1;
                amb_correct += ok as usize;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(FnEvalResult {
        parts: Prf::of_sets(&g_parts, &p_parts),
        frame_accuracy: ratio(correct, targets),
        targets,
        ambiguous_accuracy: ratio(amb_correct, amb),
        ambiguous_targets: amb,
    })
}

/// Labeled arcs, plus the top as an arc from the virtual root when
/// `include_top`.
pub fn eval_sdp(gold: &[Sentence], predicted: &[Sentence], include_top: bool) -> Result<SdpEvalResult> {
    let pairs = align(gold, predicted)?;
    let triples = |s: &Sentence| -> BTreeSet<(String, usize, usize, String)> {
        let mut out = BTreeSet::new();
        if let Some(g) = s.graph() {
            for a in &g.arcs {
                out.insert((s.id.clone(), a.head, a.dep, a.label.clone()));
            }
            if include_top {
                if let Some(t) = g.top {
                    out.insert((s.id.clone(), s.len(), t, String::new()));
                }
            }
        }
        out
    };
    let mut g_all = BTreeSet::new();
    let mut p_all = BTreeSet::new();
    for (g, p) in pairs {
        g_all.extend(triples(g));
        p_all.extend(triples(p));
    }
    Ok(SdpEvalResult {
        arcs: Prf::of_sets(&g_all, &p_all),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ErrorCategory {
    /// Frame misprediction.
    Frame,
    /// Matching span with incorrect role.
    Role,
    /// Matching role with incorrect (overlapping) span.
    Span,
    /// Predicted argument overlapping no gold span.
    Argument,
    /// Gold argument overlapping no predicted span.
    Missing,
    /// Any other wrong predicted argument: it overlaps gold spans but shares
    /// neither span nor role with them.
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::Frame,
        ErrorCategory::Role,
        ErrorCategory::Span,
        ErrorCategory::Argument,
        ErrorCategory::Missing,
        ErrorCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Frame => "frame",
            ErrorCategory::Role => "role",
            ErrorCategory::Span => "span",
            ErrorCategory::Argument => "argument",
            ErrorCategory::Missing => "missing",
            ErrorCategory::Other => "other",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorBreakdown {
    pub counts: BTreeMap<ErrorCategory, usize>,
    /// Role errors on targets whose frame was predicted correctly.
    pub role_with_correct_frame: usize,
}

impl ErrorBreakdown {
    pub fn count(&self, c: ErrorCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn percent(&self, c: ErrorCategory) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            100.0 * self.count(c) as f64 / t as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,count,percent\n");
        for c in ErrorCategory::ALL {
            writeln!(out, "{},{},{:.2}", c.name(), self.count(c), self.percent(c)).unwrap();
        }
        writeln!(out, "role_with_correct_frame,{},", self.role_with_correct_frame).unwrap();
        out
    }
}

fn overlaps(a: &Argument, b: &Argument) -> bool {
    a.overlaps(b.start, b.end)
}

/// Assigns every discrepancy to one category: a wrong frame, each wrong
/// predicted argument, and each gold argument no prediction overlaps.
pub fn error_breakdown(gold: &[Sentence], predicted: &[Sentence]) -> Result<ErrorBreakdown> {
    let pairs = align(gold, predicted)?;
    let mut out = ErrorBreakdown::default();
    let mut add = |c: ErrorCategory| *out.counts.entry(c).or_default() += 1;
    let mut role_ok_frame = 0;
    for (g, p) in pairs {
        let pred = parses_by_target(p);
        for gp in g.frames() {
            let empty = FrameParse {
                target: gp.target.clone(),
                frame: String::new(),
                arguments: Vec::new(),
            };
            let pp = pred.get(&(gp.target.start, gp.target.end)).copied().unwrap_or(&empty);
            let frame_ok = pp.frame == gp.frame;
            if !frame_ok {
                add(ErrorCategory::Frame);
            }
            for a in &pp.arguments {
                if gp.arguments.contains(a) {
                    continue;
                }
                let c = if gp.arguments.iter().any(|b| b.start == a.start && b.end == a.end) {
                    if frame_ok {
                        role_ok_frame += 1;
                    }
                    ErrorCategory::Role
                } else if !gp.arguments.iter().any(|b| overlaps(a, b)) {
                    ErrorCategory::Argument
                } else if gp.arguments.iter().any(|b| b.role == a.role && overlaps(a, b)) {
                    ErrorCategory::Span
                } else {
                    ErrorCategory::Other
                };
                add(c);
            }
            for b in &gp.arguments {
                if !pp.arguments.iter().any(|a| overlaps(a, b)) {
                    add(ErrorCategory::Missing);
                }
            }
        }
        // Predicted targets absent from gold count as frame errors.
        let gold_targets: BTreeSet<(usize, usize)> =
            g.frames().iter().map(|f| (f.target.start, f.target.end)).collect();
        for key in pred.keys() {
            if !gold_targets.contains(key) {
                add(ErrorCategory::Frame);
            }
        }
    }
    out.role_with_correct_frame = role_ok_frame;
    Ok(out)
}

/// `⌊log₁.₆ ℓ⌋`.
pub fn length_bin(len: usize) -> usize {
    ((len as f64).ln() / 1.6f64.ln()).floor() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LengthBin {
    pub bin: usize,
    pub precision: f64,
    pub recall: f64,
    /// Gold arguments in the bin.
    pub count: usize,
    pub predicted: usize,
}

/// Argument precision and recall per length bin; empty bins are omitted.
pub fn length_binned_pr(gold: &[Sentence], predicted: &[Sentence]) -> Result<Vec<LengthBin>> {
    let pairs = align(gold, predicted)?;
    // (gold, predicted, correct predicted, recalled gold) per bin.
    let mut bins: BTreeMap<usize, [usize; 4]> = BTreeMap::new();
    for (g, p) in pairs {
        let pred = parses_by_target(p);
        let gold_by = parses_by_target(g);
        for (key, gp) in &gold_by {
            let pp = pred.get(key);
            for a in &gp.arguments {
                let e = bins.entry(length_bin(a.len())).or_default();
                e[0] += 1;
                if pp.is_some_and(|pp| pp.arguments.contains(a)) {
                    e[3] += 1;
                }
            }
        }
        for (key, pp) in &pred {
            let gp = gold_by.get(key);
            for a in &pp.arguments {
                let e = bins.entry(length_bin(a.len())).or_default();
                e[1] += 1;
                if gp.is_some_and(|gp| gp.arguments.contains(a)) {
                    e[2] += 1;
                }
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(bins
        .into_iter()
        .map(|(bin, [g, p, c, r])| LengthBin {
            bin,
            precision: ratio(c, p),
            recall: ratio(r, g),
            count: g,
            predicted: p,
        })
        .collect())
}

pub fn length_bins_csv(bins: &[LengthBin]) -> String {
    let mut out = String::from("bin,precision,recall,count,predicted\n");
    for b in bins {
        writeln!(out, "{},{:.6},{:.6},{},{}", b.bin, b.precision, b.recall, b.count, b.predicted).unwrap();
    }
    out
}
