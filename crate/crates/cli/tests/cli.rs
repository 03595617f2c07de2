use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semjoint::encoder::EncoderConfig;
use semjoint::io::{read_frames, read_sdp, write_frames, write_ontology, write_sdp};
use semjoint::scorers::{DecodingOptions, ModelConfig};
use semjoint::synth;

fn semjoint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semjoint"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Files {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Files {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// A small synthetic corpus written out in the on-disk formats.
fn corpus() -> Files {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let c = synth::corpus(
        &mut ChaCha8Rng::seed_from_u64(3),
        &synth::CorpusConfig {
            fn_train: 12,
            sdp_train: 12,
            fn_dev: 4,
            sdp_dev: 4,
        },
    );
    write_ontology(&c.ontology, root.join("ontology.json")).unwrap();
    write_frames(&c.fn_train, root.join("fn_train.jsonl")).unwrap();
    write_frames(&c.fn_dev, root.join("fn_dev.jsonl")).unwrap();
    write_sdp(&c.sdp_train, root.join("dm_train.sdp")).unwrap();
    write_sdp(&c.sdp_dev, root.join("dm_dev.sdp")).unwrap();
    let dim = 4;
    let config = ModelConfig {
        encoder: EncoderConfig {
            word_dim: dim,
            lemma_dim: dim,
            pos_dim: dim,
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
            max_span_len: 3,
            ..Default::default()
        },
    };
    fs::write(root.join("model.json"), serde_json::to_string(&config).unwrap()).unwrap();
    Files { _dir: dir, root }
}

#[test]
fn evaluate_identical_files_scores_one() {
    let f = corpus();
    let fn_dev = f.path("fn_dev.jsonl");
    let dm_dev = f.path("dm_dev.sdp");
    let o = semjoint(&[
        "evaluate",
        "--fn-gold",
        p(&fn_dev),
        "--fn-pred",
        p(&fn_dev),
        "--dm-gold",
        p(&dm_dev),
        "--dm-pred",
        p(&dm_dev),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let out = stdout(&o);
    let f1: Vec<&str> = out.lines().filter(|l| l.contains("F1")).collect();
    assert_eq!(f1.len(), 2, "{out}");
    assert!(f1.iter().all(|l| l.ends_with("F1 1.000")), "{out}");
}

#[test]
fn oracle_check_passes() {
    let o = semjoint(&["oracle-check", "--n", "100", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
}

#[test]
fn train_without_ontology_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = semjoint(&["train", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(semjoint(&["evaluate", "--bogus"]).status.code(), Some(1));
    assert_eq!(semjoint(&["nonsense"]).status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    assert_eq!(semjoint(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.sdp");
    let o = semjoint(&["evaluate", "--dm-gold", p(&missing), "--dm-pred", p(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.sdp"));
}

#[test]
fn unpaired_evaluation_files_are_rejected() {
    let f = corpus();
    let o = semjoint(&["evaluate", "--dm-gold", p(&f.path("dm_dev.sdp"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_sdp_reports_location() {
    let f = corpus();
    let bad = f.path("bad.sdp");
    fs::write(&bad, "#1\n1\tw\tw\tX\t-\tq\n").unwrap();
    let o = semjoint(&["evaluate", "--dm-gold", p(&bad), "--dm-pred", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.sdp:2"), "{o:?}");
}

#[test]
fn train_predict_evaluate_round_trip() {
    let f = corpus();
    let out = f.path("run");
    let o = semjoint(&[
        "train",
        "--ontology",
        p(&f.path("ontology.json")),
        "--fn-train",
        p(&f.path("fn_train.jsonl")),
        "--fn-dev",
        p(&f.path("fn_dev.jsonl")),
        "--dm-train",
        p(&f.path("dm_train.sdp")),
        "--dm-dev",
        p(&f.path("dm_dev.sdp")),
        "--model-config",
        p(&f.path("model.json")),
        "--epochs",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(out.join("model.ckpt").exists());
    assert!(out.join("train_config.json").exists());
    let metrics = fs::read_to_string(out.join("metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let model = out.join("model.ckpt");
    let frames_out = f.path("pred.jsonl");
    let o = semjoint(&[
        "predict",
        "--model",
        p(&model),
        "--ontology",
        p(&f.path("ontology.json")),
        "--input",
        p(&f.path("fn_dev.jsonl")),
        "--format",
        "fn",
        "--output",
        p(&frames_out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let gold = read_frames(f.path("fn_dev.jsonl"), None).unwrap();
    let pred = read_frames(&frames_out, None).unwrap();
    assert_eq!(gold.len(), pred.len());

    let graphs_out = f.path("pred.sdp");
    let o = semjoint(&[
        "predict",
        "--model",
        p(&model),
        "--ensemble",
        p(&model),
        "--ontology",
        p(&f.path("ontology.json")),
        "--input",
        p(&f.path("dm_dev.sdp")),
        "--format",
        "sdp",
        "--output",
        p(&graphs_out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(read_sdp(&graphs_out).unwrap().len(), 4);

    let o = semjoint(&[
        "evaluate",
        "--fn-gold",
        p(&f.path("fn_dev.jsonl")),
        "--fn-pred",
        p(&frames_out),
        "--ontology",
        p(&f.path("ontology.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("frame-id ambiguous"));

    let analysis = f.path("analysis");
    let o = semjoint(&[
        "export-analysis",
        "--gold",
        p(&f.path("fn_dev.jsonl")),
        "--pred",
        p(&frames_out),
        "--out",
        p(&analysis),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(analysis.join("error_breakdown.csv").exists());
    assert!(analysis.join("length_bins.csv").exists());
}

#[test]
fn predict_rejects_a_pruner_checkpoint_as_model() {
    let f = corpus();
    let pruner = f.path("pruner.ckpt");
    let o = semjoint(&[
        "pretrain-pruner",
        "--dm-train",
        p(&f.path("dm_train.sdp")),
        "--epochs",
        "1",
        "--max-span-len",
        "3",
        "--out",
        p(&pruner),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = semjoint(&[
        "predict",
        "--model",
        p(&pruner),
        "--input",
        p(&f.path("dm_dev.sdp")),
        "--format",
        "sdp",
        "--output",
        p(&f.path("x.sdp")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}
