//! Non-overlapping labeled span selection over a sentence.

/// A candidate span `(start, end)` (inclusive) with a score. Several entries
/// may share a span, one per label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSpan {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl ScoredSpan {
    pub fn new(start: usize, end: usize, score: f64) -> Self {
        ScoredSpan { start, end, score }
    }

    fn len(&self) -> usize {
        self.end + 1 - self.start
    }
}

fn usable(s: &ScoredSpan, n: usize, max_len: usize) -> bool {
    s.start <= s.end && s.end < n && s.len() <= max_len
}

/// Highest-scoring set of non-overlapping spans; the empty set scores 0.
///
/// Returns indices into `spans` in left-to-right order. Ties prefer fewer
/// spans, then the earliest entry in `spans`.
pub fn semi_markov_map(spans: &[ScoredSpan], n: usize, max_len: usize) -> (Vec<usize>, f64) {
    let mut ending: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, s) in spans.iter().enumerate() {
        if usable(s, n, max_len) {
            ending[s.end].push(k);
        }
    }
    // best[j]: (value, count) over tokens 0..j; back[j]: span ending at j-1.
    let mut best = vec![(0.0f64, 0usize); n + 1];
    let mut back: Vec<Option<usize>> = vec![None; n + 1];
    for j in 0..n {
        let mut cur = best[j];
        let mut choice = None;
        for &k in &ending[j] {
            let s = &spans[k];
            let (v, c) = best[s.start];
            let cand = (v + s.score, c + 1);
            if cand.0 > cur.0 || (cand.0 == cur.0 && cand.1 < cur.1) {
                cur = cand;
                choice = Some(k);
            }
        }
        best[j + 1] = cur;
        back[j + 1] = choice;
    }
    let mut out = Vec::new();
    let mut j = n;
    while j > 0 {
        match back[j] {
            Some(k) => {
                out.push(k);
                j = spans[k].start;
            }
            None => j -= 1,
        }
    }
    out.reverse();
    (out, best[n].0)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-partition over all non-overlapping span sets (each weighted by the
/// exponentiated sum of its scores) and the marginal of every entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    pub log_z: f64,
    /// Posterior per entry of the input; unusable entries get 0.
    pub posteriors: Vec<f64>,
}

pub fn semi_markov_marginals(spans: &[ScoredSpan], n: usize, max_len: usize) -> Marginals {
    let mut ending: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut starting: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, s) in spans.iter().enumerate() {
        if usable(s, n, max_len) {
            ending[s.end].push(k);
            starting[s.start].push(k);
        }
    }
    // alpha[j]: log-sum over tokens 0..j; beta[i]: over tokens i..n.
    let mut alpha = vec![f64::NEG_INFINITY; n + 1];
    alpha[0] = 0.0;
    for j in 0..n {
        let mut acc = alpha[j];
        for &k in &ending[j] {
            acc = log_add(acc, alpha[spans[k].start] + spans[k].score);
        }
        alpha[j + 1] = acc;
    }
    let mut beta = vec![f64::NEG_INFINITY; n + 1];
    beta[n] = 0.0;
    for i in (0..n).rev() {
        let mut acc = beta[i + 1];
        for &k in &starting[i] {
            acc = log_add(acc, spans[k].score + beta[spans[k].end + 1]);
        }
        beta[i] = acc;
    }
    let log_z = alpha[n];
    let posteriors = spans
        .iter()
        .map(|s| {
            if usable(s, n, max_len) {
                (alpha[s.start] + s.score + beta[s.end + 1] - log_z).exp().min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    Marginals { log_z, posteriors }
}
