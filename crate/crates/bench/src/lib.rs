//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semjoint::encoder::EncoderConfig;
use semjoint::inference::ScoredSpan;
use semjoint::scorers::{DecodingOptions, Model, ModelConfig};
use semjoint::synth;
use semjoint::training::{build_model, frame_space, Corpora};
use semjoint::CandidateSpace;

/// Scored frame spaces from an untrained model over a synthetic dev set.
///
/// A fraction `sparsity` of cross-task scores is zeroed, standing in for the
/// effect of the ℓ1 penalty.
pub fn frame_spaces(seed: u64, sentences: usize, sparsity: f64) -> (Model, Vec<CandidateSpace>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = synth::corpus(
        &mut rng,
        &synth::CorpusConfig {
            fn_train: 20,
            sdp_train: 20,
            fn_dev: sentences,
            sdp_dev: 0,
        },
    );
    let corpora = Corpora {
        fn_train: c.fn_train.clone(),
        exemplars: Vec::new(),
        dm_train: c.sdp_train.clone(),
        fn_dev: Vec::new(),
        dm_dev: Vec::new(),
    };
    let dim = 16;
    let config = ModelConfig {
        encoder: EncoderConfig {
            word_dim: dim,
            lemma_dim: dim / 2,
            pos_dim: dim / 2,
            lstm_layers: 1,
            lstm_hidden: dim,
            mlp_hidden: dim,
            mlp_out: dim,
            word_dropout: 1.0,
        },
        symbol_dim: dim,
        rank: dim,
        arc_hidden: dim,
        arc_out: dim,
        decoding: DecodingOptions {
            max_span_len: 4,
            ..Default::default()
        },
    };
    let model = build_model(config, &corpora, &c.ontology, seed).expect("model");
    let mut spaces = Vec::new();
    for s in &c.fn_dev {
        for p in s.frames() {
            let mut space = frame_space(&model, s, &p.target, &c.ontology, None).expect("space");
            let mut scores = model.scores(s, &space).expect("scores");
            for id in space.cross_task() {
                if rng.gen_bool(sparsity) {
                    scores[id.index()] = 0.0;
                }
            }
            space.set_scores(scores).expect("scores fit");
            spaces.push(space);
        }
    }
    (model, spaces)
}

/// Every span of length at most `max_len` over `n` tokens, scored uniformly
/// in [−1, 1].
pub fn random_spans(seed: u64, n: usize, max_len: usize) -> Vec<ScoredSpan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spans = Vec::new();
    for start in 0..n {
        for end in start..n.min(start + max_len) {
            spans.push(ScoredSpan::new(start, end, rng.gen_range(-1.0..1.0)));
        }
    }
    spans
}
