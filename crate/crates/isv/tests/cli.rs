//! End-to-end runs of the `isv` binary on small synthetic worlds.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isv::checkpoint::Checkpoint;
use isv::pipeline::{Metrics, HASHES_HEADER};
use isv::report::parse_report;
use isv::text::{parse_protocol, parse_trials, ColumnMap};
use isv_core::trials::TrialType;
use isv_core::SpoofLabel;
use tempfile::TempDir;

const SMALL: &[&str] = &[
    "synth.speakers_train=4",
    "synth.speakers_eval=3",
    "synth.bonafide_per_speaker=4",
    "synth.replay_per_speaker=4",
    "frontend.steps=6",
    "frontend.batch=8",
    "e2e.steps=6",
    "e2e.speakers_per_batch=2",
    "e2e.utts_per_speaker=2",
    "e2e.isv_hidden=16,16",
    "backend.steps=30",
    "backend.batch=16",
    "backend.hidden_layers=2",
    "backend.hidden_nodes=16",
    "pad.steps=20",
];

fn isv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isv")).args(args).output().expect("spawn isv")
}

/// `verb --work-dir dir` with the small overrides plus `extra` arguments.
fn small(verb: &str, dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![verb.to_string(), "--work-dir".into(), dir.display().to_string()];
    for kv in SMALL {
        args.push("--set".into());
        args.push(kv.to_string());
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    isv(&refs)
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn metrics(dir: &Path) -> Metrics {
    Metrics::parse(&read(dir.join("metrics.txt")))
}

/// Every file of a directory by name, skipping `skip`.
fn snapshot(dir: &Path, skip: &[&str]) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .filter(|(name, _)| !skip.contains(&name.as_str()))
        .map(|(name, path)| (name, fs::read(path).unwrap()))
        .collect()
}

/// Per-step lines of `model` from a run log.
fn model_lines(log: &str, model: &str) -> Vec<String> {
    let prefix = format!("model={model} ");
    log.lines().filter(|l| l.starts_with(&prefix)).map(str::to_string).collect()
}

fn kv(line: &str) -> HashMap<&str, f64> {
    line.split_whitespace()
        .filter_map(|t| t.split_once('='))
        .filter_map(|(k, v)| v.parse().ok().map(|v| (k, v)))
        .collect()
}

#[test]
fn simulate_matches_config_counts_and_valid_trials() {
    let tmp = TempDir::new().unwrap();
    ok(small("simulate", tmp.path(), &[]));
    let dir = tmp.path().join("simulate");
    let m = metrics(&dir);
    assert_eq!(m.get("train.speakers"), Some("4"));
    assert_eq!(m.get("eval.speakers"), Some("3"));
    assert_eq!(m.get("trials.valid"), Some("true"));

    let train = parse_protocol(&read(dir.join("train_protocol.txt")), "train").unwrap();
    let eval = parse_protocol(&read(dir.join("eval_protocol.txt")), "eval").unwrap();
    for (proto, speakers) in [(&train, 4), (&eval, 3)] {
        let bonafide = proto.iter().filter(|r| r.label == SpoofLabel::Bonafide).count();
        assert_eq!(bonafide, speakers * 4);
        assert_eq!(proto.len() - bonafide, speakers * 4);
    }

    let by_id: HashMap<&str, (&str, SpoofLabel)> =
        eval.iter().map(|r| (r.utt.as_str(), (r.speaker.as_str(), r.label))).collect();
    let trials = parse_trials(&read(dir.join("trials.txt")), &ColumnMap::parse("", "").unwrap(), "trials").unwrap();
    assert!(!trials.is_empty());
    let mut counts = [0usize; 3];
    for t in &trials {
        let (es, el) = by_id[t.enroll.as_str()];
        let (ts, tl) = by_id[t.test.as_str()];
        assert_eq!(el, SpoofLabel::Bonafide, "{t:?}");
        assert_ne!(t.enroll, t.test);
        let expected = match (es == ts, tl) {
            (true, SpoofLabel::Bonafide) => TrialType::Target,
            (true, SpoofLabel::Replay) => TrialType::Replay,
            (false, SpoofLabel::Bonafide) => TrialType::ZeroEffort,
            (false, SpoofLabel::Replay) => panic!("cross-speaker replay trial {t:?}"),
        };
        assert_eq!(t.kind, expected, "{t:?}");
        counts[t.kind.index()] += 1;
    }
    for kind in TrialType::ALL {
        assert_eq!(m.get(&format!("trials.{kind}")), Some(counts[kind.index()].to_string().as_str()));
    }
}

#[test]
fn simulate_rerun_is_bitwise_identical() {
    let tmp = TempDir::new().unwrap();
    ok(small("simulate", tmp.path(), &["--seed", "5"]));
    let first = snapshot(&tmp.path().join("simulate"), &[]);
    ok(small("simulate", tmp.path(), &["--seed", "5"]));
    assert_eq!(first, snapshot(&tmp.path().join("simulate"), &[]));
    ok(small("simulate", tmp.path(), &["--seed", "6"]));
    assert_ne!(first["embeddings.isvemb"], fs::read(tmp.path().join("simulate/embeddings.isvemb")).unwrap());
}

#[test]
fn run_directory_has_config_hashes_metrics_and_log() {
    let tmp = TempDir::new().unwrap();
    ok(small("train-backend", tmp.path(), &[]));
    let dir = tmp.path().join("train-backend");
    let hashes = read(dir.join("hashes.txt"));
    let mut lines = hashes.lines();
    assert_eq!(lines.next(), Some(HASHES_HEADER));
    let names: Vec<&str> = lines.map(|l| l.split_whitespace().next().unwrap()).collect();
    for needed in ["config.txt", "metrics.txt", "log.txt", "backend.ckpt"] {
        assert!(names.contains(&needed), "{needed} not hashed: {names:?}");
    }
    let config = read(dir.join("config.txt"));
    assert!(config.contains("backend.steps = 30"));
    assert!(config.contains("optim.weight_decay = 0.0001"));
    assert!(config.contains("backend.alpha = 20"));
}

#[test]
fn backend_rerun_reproduces_metrics() {
    let tmp = TempDir::new().unwrap();
    let out = ok(small("train-backend", tmp.path(), &["--seed", "3"]));
    let first = read(tmp.path().join("train-backend/metrics.txt"));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), first);
    ok(small("train-backend", tmp.path(), &["--seed", "3"]));
    assert_eq!(first, read(tmp.path().join("train-backend/metrics.txt")));
}

#[test]
fn frontend_rerun_reproduces_metrics_in_both_modes() {
    for mode in [&[][..], &["--mtl"][..]] {
        let tmp = TempDir::new().unwrap();
        ok(small("train-frontend", tmp.path(), mode));
        let dir = tmp.path().join("train-frontend");
        let first = snapshot(&dir, &["config.txt", "hashes.txt"]);
        ok(small("train-frontend", tmp.path(), mode));
        assert_eq!(first, snapshot(&dir, &["config.txt", "hashes.txt"]));
        let expected = if mode.is_empty() { "separate" } else { "mtl" };
        assert_eq!(metrics(&dir).get("frontend.mode"), Some(expected));
    }
}

/// Trains `verb` in two halves (the second with `--resume`) and in one go,
/// and compares checkpoints, metrics and per-step log lines.
fn assert_resume_matches(verb: &str, half: &[&str], full: &[&str], ckpts: &[&str], models: &[&str]) {
    let straight = TempDir::new().unwrap();
    let resumed = TempDir::new().unwrap();
    ok(small(verb, straight.path(), full));
    ok(small(verb, resumed.path(), half));
    let mut again = full.to_vec();
    again.push("--resume");
    ok(small(verb, resumed.path(), &again));
    let (a, b) = (straight.path().join(verb), resumed.path().join(verb));
    for ck in ckpts {
        assert_eq!(fs::read(a.join(ck)).unwrap(), fs::read(b.join(ck)).unwrap(), "{verb}: {ck} differs");
    }
    assert_eq!(read(a.join("metrics.txt")), read(b.join("metrics.txt")), "{verb}: metrics differ");
    let (la, lb) = (read(a.join("log.txt")), read(b.join("log.txt")));
    for model in models {
        assert_eq!(model_lines(&la, model), model_lines(&lb, model), "{verb}: {model} log differs");
    }
}

#[test]
fn backend_resume_matches_uninterrupted_training() {
    assert_resume_matches(
        "train-backend",
        &["--set", "backend.steps=13", "--set", "pad.steps=7"],
        &[],
        &["backend.ckpt", "pad.ckpt"],
        &["pad", "backend"],
    );
}

#[test]
fn backend_resume_after_pad_classifier_finished() {
    assert_resume_matches(
        "train-backend",
        &["--set", "backend.steps=11"],
        &[],
        &["backend.ckpt", "pad.ckpt"],
        &["pad", "backend"],
    );
}

#[test]
fn frontend_resume_matches_uninterrupted_training() {
    assert_resume_matches(
        "train-frontend",
        &["--set", "frontend.steps=3"],
        &[],
        &["sid.ckpt", "pad.ckpt"],
        &["sid", "pad"],
    );
}

#[test]
fn e2e_resume_matches_uninterrupted_training() {
    assert_resume_matches("train-e2e", &["--set", "e2e.steps=2"], &[], &["e2e.ckpt"], &["e2e"]);
}

#[test]
fn e2e_log_totals_are_component_sums() {
    let tmp = TempDir::new().unwrap();
    ok(small("train-e2e", tmp.path(), &[]));
    let log = read(tmp.path().join("train-e2e/log.txt"));
    let lines = model_lines(&log, "e2e");
    assert_eq!(lines.len(), 6);
    for line in &lines {
        let v = kv(line);
        for key in ["sid", "pad", "isv", "total"] {
            assert!(v[key].is_finite(), "{line}");
        }
        assert!((v["total"] - (v["sid"] + v["pad"] + v["isv"])).abs() <= 1e-9, "{line}");
    }
    let ck = Checkpoint::load(&tmp.path().join("train-e2e/e2e.ckpt")).unwrap();
    assert_eq!(ck.step(), 6);
}

#[test]
fn backend_log_totals_weight_sv_by_alpha() {
    let tmp = TempDir::new().unwrap();
    ok(small("train-backend", tmp.path(), &["--alpha", "7.5"]));
    let log = read(tmp.path().join("train-backend/log.txt"));
    let lines = model_lines(&log, "backend");
    assert_eq!(lines.len(), 30);
    for line in &lines {
        let v = kv(line);
        assert_eq!(v["alpha"], 7.5);
        assert!((v["total"] - (7.5 * v["sv"] + v["isv"])).abs() <= 1e-9, "{line}");
    }
}

#[test]
fn alpha_zero_warns_about_overfitting() {
    let tmp = TempDir::new().unwrap();
    let out = ok(small("train-backend", tmp.path(), &["--alpha", "0"]));
    assert!(stderr(&out).contains("WARNING"), "{}", stderr(&out));
    assert!(stderr(&out).contains("overfitting"));
    let dir = tmp.path().join("train-backend");
    assert_eq!(metrics(&dir).get("warning.alpha_zero"), Some("true"));
    assert!(read(dir.join("log.txt")).lines().any(|l| l == "warning=alpha_zero"));

    let plain = TempDir::new().unwrap();
    let out = ok(small("train-backend", plain.path(), &[]));
    assert!(!stderr(&out).contains("WARNING"));
}

#[test]
fn pad_input_flag_selects_fusion_input() {
    let tmp = TempDir::new().unwrap();
    ok(small("train-backend", tmp.path(), &["--pad-input", "predictions"]));
    let m = metrics(&tmp.path().join("train-backend"));
    assert_eq!(m.get("backend.pad_input"), Some("predictions"));
    assert!(m.get("monitor.collapsed").is_some());
    assert!(m.f64("monitor.final_score_sd").unwrap().is_finite());
}

#[test]
fn evaluate_report_columns_and_repeatability() {
    let tmp = TempDir::new().unwrap();
    ok(small("train-backend", tmp.path(), &[]));
    ok(small("train-e2e", tmp.path(), &[]));
    let scorers = ["--set", "eval.scorers=cosine,modular,e2e"];
    ok(small("evaluate", tmp.path(), &scorers));
    let dir = tmp.path().join("evaluate");
    let report = read(dir.join("report.txt"));
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(&header[1..], ["ZE-EER", "PAD-EER", "ISV-EER"]);
    let rows = parse_report(&report).unwrap();
    let names: Vec<&str> = rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["cosine", "modular", "e2e"]);
    for name in names {
        for file in [format!("scores_{name}.txt"), format!("hist_{name}.txt"), format!("hist_{name}.svg")] {
            assert!(dir.join(&file).is_file(), "{file}");
        }
    }

    let first = snapshot(&dir, &[]);
    ok(small("evaluate", tmp.path(), &scorers));
    assert_eq!(first, snapshot(&dir, &[]));
}

#[test]
fn evaluate_lists_every_missing_artifact() {
    let tmp = TempDir::new().unwrap();
    let out = small(
        "evaluate",
        tmp.path(),
        &["--set", "eval.scorers=cosine,modular,e2e", "--set", "backend.embeddings=frontend"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let err = stderr(&out);
    let missing: Vec<&str> = err.lines().filter(|l| l.starts_with("ERROR: missing artifact")).collect();
    assert_eq!(missing.len(), 7, "{err}");
    for name in ["backend.ckpt", "pad_scores.txt", "e2e.ckpt", "embeddings.isvemb", "trials.txt"] {
        assert!(missing.iter().any(|l| l.contains(name)), "{name} not reported:\n{err}");
    }
    assert!(!tmp.path().join("evaluate").exists());
}

#[test]
fn config_errors_exit_2_before_training() {
    let tmp = TempDir::new().unwrap();
    let out = small("train-backend", tmp.path(), &["--set", "backend.learning_rate=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).lines().any(|l| l.starts_with("ERROR:")), "{}", stderr(&out));
    assert!(!tmp.path().join("train-backend").exists());

    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "seed = 1\nbackend.alpha = -2\n").unwrap();
    let out = isv(&["train-backend", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("ERROR:"));

    let out = isv(&["train-backend", "--pad-input", "sometimes"]);
    assert_eq!(out.status.code(), Some(2));
    let out = isv(&["train-everything"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let out = isv(&["simulate", "--config", tmp.path().join("nope.conf").to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).starts_with("ERROR:"));
}

#[test]
fn checked_in_config_equals_defaults() {
    let conf: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", "default.conf"].iter().collect();
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let with = small("simulate", a.path(), &["--config", conf.to_str().unwrap()]);
    ok(with);
    ok(small("simulate", b.path(), &[]));
    let skip = ["config.txt", "hashes.txt"];
    assert_eq!(snapshot(&a.path().join("simulate"), &skip), snapshot(&b.path().join("simulate"), &skip));
}

#[test]
fn help_lists_every_verb() {
    let out = ok(isv(&["--help"]));
    let text = String::from_utf8(out.stdout).unwrap();
    for verb in ["simulate", "train-frontend", "train-e2e", "train-backend", "evaluate"] {
        assert!(text.contains(verb), "{verb}");
    }
    let out = ok(isv(&["train-backend", "--help"]));
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--config", "--seed", "--mtl", "--pad-input", "--alpha", "--resume", "--set"] {
        assert!(text.contains(flag), "{flag}");
    }
}
