//! The five pipeline commands. Each writes into `{work_dir}/{verb}/`:
//! the resolved config, an append-only step log, metrics, artifacts and a
//! hash manifest of everything it wrote.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use isv_core::eer::{evaluate_system, EerPoint, EvalReport, ScoreSet};
use isv_core::features::FeatureMatrix;
use isv_core::histogram::histogram;
use isv_core::layers::Parameterized;
use isv_core::models::{cosine_score, Backend, E2eModel, FrontendModel, FrontendTask, PadClassifier};
use isv_core::rng::{stream, STREAM_INIT};
use isv_core::synth::{synth_embedding_world, synth_feature_world};
use isv_core::train::{
    backend_step, classifier_pad_probs, e2e_step, embed_all, frontend_pad_probs, frontend_step, pad_step,
    BackendData, FeatureSet, StepLog, Trainer,
};
use isv_core::trials::Trial;
use sha2::{Digest, Sha256};

use crate::checkpoint::{AnyModel, Checkpoint};
use crate::config::{PadInput, RunConfig};
use crate::corpus::{check_present, load_embeddings, load_features, Corpus, FrontendExport, Split};
use crate::error::{Error, Result};
use crate::featfile::{features_to_bytes, FeatureRecord};
use crate::fsio::{read_text, write_bytes};
use crate::report::{format_histogram, format_kv, format_report, histogram_svg, report_metrics};
use crate::store::EmbeddingStore;
use crate::text::{format_pad_scores, format_protocol, format_scores, format_trials, parse_pad_scores, ProtocolRecord, ScoreLine};

pub const HASHES_HEADER: &str = "# isv-hashes v1";
const CHUNK: usize = 64;

/// Ordered `key=value` metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics(pub Vec<(String, String)>);

impl Metrics {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn extend(&mut self, pairs: Vec<(String, String)>) {
        self.0.extend(pairs);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn parse(text: &str) -> Self {
        Metrics(
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    fn eer(&mut self, key: &str, p: Option<EerPoint>) {
        if let Some(p) = p {
            self.push(key, p.eer);
        }
    }
}

/// Output directory of one command.
pub struct RunDir {
    dir: PathBuf,
    log: File,
    written: Vec<String>,
}

impl RunDir {
    /// Creates the directory, writes `config.txt` and opens `log.txt`,
    /// appending when resuming.
    pub fn open(cfg: &RunConfig, verb: &str, append_log: bool) -> Result<Self> {
        let dir = cfg.work_dir().join(verb);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let log_path = dir.join("log.txt");
        let log = OpenOptions::new()
            .create(true)
            .append(append_log)
            .write(true)
            .truncate(!append_log)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let mut run = RunDir {
            dir,
            log,
            written: Vec::new(),
        };
        run.write("config.txt", cfg.resolved_text().as_bytes())?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn log(&mut self, line: &str) -> Result<()> {
        writeln!(self.log, "{line}").map_err(|e| Error::io(&self.dir.join("log.txt"), e))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_bytes(&self.path(name), bytes)?;
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    /// Writes `metrics.txt` and the hash manifest.
    pub fn finish(mut self, metrics: &Metrics) -> Result<()> {
        self.write("metrics.txt", format_kv(&metrics.0).as_bytes())?;
        self.log.flush().map_err(|e| Error::io(&self.dir.join("log.txt"), e))?;
        let mut names = self.written.clone();
        names.push("log.txt".into());
        names.sort();
        let mut text = format!("{HASHES_HEADER}\n");
        for name in names {
            let bytes = fs::read(self.path(&name)).map_err(|e| Error::io(&self.path(&name), e))?;
            text.push_str(&format!("{name} sha256:{}\n", hex::encode(Sha256::digest(&bytes))));
        }
        self.write("hashes.txt", text.as_bytes())
    }
}

/// Per-model seed used for both initialization and batch sampling.
pub fn model_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

const SALT_SID: u64 = 1;
const SALT_PAD: u64 = 2;
const SALT_MTL: u64 = 3;
const SALT_E2E: u64 = 4;
const SALT_PAD_CLASSIFIER: u64 = 5;
const SALT_BACKEND: u64 = 6;

/// Runs `step` until `steps` optimizer steps are done, logging each, and
/// saves `{name}.ckpt`. With `resume`, continues from that checkpoint.
/// Returns the trainer and the loss total of the last step; a resumed model
/// that needs no further steps recovers it from the log.
fn train_model<M, F>(
    run: &mut RunDir,
    name: &str,
    steps: usize,
    resume: bool,
    fresh: Trainer<M>,
    wrap: fn(M) -> AnyModel,
    unwrap: fn(AnyModel) -> Option<M>,
    mut step: F,
) -> Result<(Trainer<M>, Option<f64>)>
where
    M: Parameterized + Clone,
    F: FnMut(&mut Trainer<M>) -> isv_core::Result<StepLog>,
{
    let file = format!("{name}.ckpt");
    let mut trainer = if resume {
        let path = run.path(&file);
        check_present(&[&path])?;
        let ck = Checkpoint::load(&path)?;
        if ck.model.descriptor() != wrap(fresh.model.clone()).descriptor()
            || ck.optimizer.config != fresh.optimizer.config
            || ck.seed != fresh.seed
        {
            return Err(Error::Config(format!("{} does not match the current configuration", path.display())));
        }
        let model = unwrap(ck.model).expect("descriptor kinds matched");
        Trainer {
            model,
            optimizer: ck.optimizer,
            seed: ck.seed,
        }
    } else {
        fresh
    };
    if trainer.step() as usize > steps {
        return Err(Error::Config(format!(
            "{file} is at step {} which exceeds the configured {steps}",
            trainer.step()
        )));
    }
    let mut last = None;
    while (trainer.step() as usize) < steps {
        let log = step(&mut trainer)?;
        let mut line = format!("model={name} step={} {}", log.step, log.report.to_kv());
        if !log.pad_inputs.is_empty() {
            let mae = log
                .pad_inputs
                .iter()
                .zip(&log.pad_labels)
                .map(|(p, l)| (p - l).abs())
                .sum::<f64>()
                / log.pad_inputs.len() as f64;
            line.push_str(&format!(" pad_input_mae={mae:e}"));
        }
        run.log(&line)?;
        last = Some(log.report.total);
    }
    if last.is_none() && resume {
        last = last_logged_total(&run.path("log.txt"), name)?;
    }
    let ck = Checkpoint {
        model: wrap(trainer.model.clone()),
        optimizer: trainer.optimizer.clone(),
        seed: trainer.seed,
    };
    run.write(&file, &ck.to_bytes())?;
    Ok((trainer, last))
}

fn feature_set(split: &Split<FeatureMatrix>) -> FeatureSet {
    FeatureSet {
        features: split.data.clone(),
        speakers: split.speaker_idx.clone(),
        labels: split.labels.clone(),
    }
}

/// `total=` of the last `model={name}` line in a run log.
fn last_logged_total(log: &Path, name: &str) -> Result<Option<f64>> {
    let text = read_text(log)?;
    let prefix = format!("model={name} ");
    let Some(line) = text.lines().rev().find(|l| l.starts_with(&prefix)) else {
        return Ok(None);
    };
    let total = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("total="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("{}: no total in `{line}`", log.display())))?;
    Ok(Some(total))
}

fn push_final(metrics: &mut Metrics, name: &str, last: &Option<f64>) {
    if let Some(total) = last {
        metrics.push(format!("{name}.final_loss"), total);
    }
}

/// Maps an evaluation id to its row in the concatenation `train ++ eval`.
fn eval_lookup<T>(corpus: &Corpus<T>) -> HashMap<String, usize> {
    let offset = corpus.train.len();
    corpus.eval.ids.iter().enumerate().map(|(i, id)| (id.clone(), offset + i)).collect()
}

fn all_ids<T>(corpus: &Corpus<T>) -> Vec<(&String, &String, isv_core::SpoofLabel)> {
    let mut out = Vec::with_capacity(corpus.train.len() + corpus.eval.len());
    for split in [&corpus.train, &corpus.eval] {
        out.extend((0..split.len()).map(|i| (&split.ids[i], &split.speakers[i], split.labels[i])));
    }
    out
}

fn write_corpus_text<T>(run: &mut RunDir, corpus: &Corpus<T>) -> Result<()> {
    run.write("train_protocol.txt", format_protocol(&corpus.train.protocol()).as_bytes())?;
    run.write("eval_protocol.txt", format_protocol(&corpus.eval.protocol()).as_bytes())?;
    run.write("trials.txt", format_trials(&corpus.trials).as_bytes())
}

fn score_lines(trials: &[Trial], scores: &ScoreSet) -> Vec<ScoreLine> {
    trials
        .iter()
        .zip(scores.entries())
        .map(|(t, s)| ScoreLine {
            trial: t.clone(),
            score: s.score,
        })
        .collect()
}

/// Writes scores, histogram table and plot for one scorer.
fn write_scorer_outputs(run: &mut RunDir, cfg: &RunConfig, name: &str, trials: &[Trial], scores: &ScoreSet) -> Result<()> {
    run.write(&format!("scores_{name}.txt"), format_scores(&score_lines(trials, scores)).as_bytes())?;
    let range = if name == "cosine" { (-1.0, 1.0) } else { (0.0, 1.0) };
    let h = histogram(scores, cfg.usize("eval.hist_bins")?, Some(range))?;
    run.write(&format!("hist_{name}.txt"), format_histogram(&h).as_bytes())?;
    run.write(&format!("hist_{name}.svg"), histogram_svg(&h, name).as_bytes())
}

/// Writes both synthetic worlds in the file formats.
pub fn simulate(cfg: &RunConfig) -> Result<Metrics> {
    cfg.validate()?;
    let mut run = RunDir::open(cfg, "simulate", false)?;
    let seed = cfg.seed()?;
    let cap = Some(cfg.usize("eval.trials_per_type")?).filter(|&c| c > 0);
    let ew = synth_embedding_world(&cfg.embedding_world()?)?;
    let fw = synth_feature_world(&cfg.feature_world()?)?;
    let trials = ew.eval.trials(cap, seed);

    let mut store = EmbeddingStore::new(ew.config.dim);
    for item in ew.train.items.iter().chain(&ew.eval.items) {
        store.insert_f64(&item.id, &item.speaker, item.label, &item.data)?;
    }
    let feats: Vec<FeatureRecord> = fw
        .train
        .items
        .iter()
        .chain(&fw.eval.items)
        .map(|i| FeatureRecord {
            id: i.id.clone(),
            speaker: i.speaker.clone(),
            label: i.label,
            features: i.data.clone(),
        })
        .collect();
    let protocol_only = |items: &[isv_core::synth::SynthItem<Vec<f64>>]| {
        Split::new(
            items
                .iter()
                .map(|i| {
                    let r = ProtocolRecord {
                        utt: i.id.clone(),
                        speaker: i.speaker.clone(),
                        label: i.label,
                    };
                    (r, ())
                })
                .collect(),
        )
    };
    let corpus = Corpus {
        train: protocol_only(&ew.train.items),
        eval: protocol_only(&ew.eval.items),
        trials,
    };
    corpus.validate_trials()?;
    write_corpus_text(&mut run, &corpus)?;
    run.write("embeddings.isvemb", &store.to_bytes())?;
    run.write("features.isvfeat", &features_to_bytes(&feats)?)?;

    let mut m = Metrics::default();
    for (name, split) in [("train", &corpus.train), ("eval", &corpus.eval)] {
        m.push(format!("{name}.speakers"), split.n_speakers());
        for label in [isv_core::SpoofLabel::Bonafide, isv_core::SpoofLabel::Replay] {
            let n = split.labels.iter().filter(|&&l| l == label).count();
            m.push(format!("{name}.{}", label.as_str()), n);
        }
    }
    let counts = isv_core::synth::trial_counts(&corpus.trials);
    for kind in isv_core::trials::TrialType::ALL {
        m.push(format!("trials.{kind}"), counts[kind.index()]);
    }
    m.push("trials.valid", true);
    run.finish(&m)?;
    Ok(m)
}

/// Trains the speaker identifier and bona fide detector, separately or as
/// one multi-task network, and exports embeddings and bona fide scores.
pub fn train_frontend(cfg: &RunConfig, resume: bool) -> Result<Metrics> {
    cfg.validate()?;
    let mtl = cfg.frontend_mtl()?;
    let enc = cfg.encoder()?;
    let opt = cfg.optimizer()?;
    let seed = cfg.seed()?;
    let steps = cfg.usize("frontend.steps")?;
    let batch = cfg.usize("frontend.batch")?;
    let corpus = load_features(cfg)?;
    let data = feature_set(&corpus.train);
    let n_spk = corpus.train.n_speakers();
    let mut run = RunDir::open(cfg, "train-frontend", resume)?;
    let fresh = |task: FrontendTask, salt: u64| -> Result<Trainer<FrontendModel>> {
        let ms = model_seed(seed, salt);
        let model = FrontendModel::new(enc.clone(), task, n_spk, &mut stream(ms, STREAM_INIT))?;
        Ok(Trainer::new(model, opt, ms)?)
    };
    let wrap: fn(FrontendModel) -> AnyModel = AnyModel::Frontend;
    let unwrap: fn(AnyModel) -> Option<FrontendModel> = |m| match m {
        AnyModel::Frontend(f) => Some(f),
        _ => None,
    };
    let mut m = Metrics::default();
    m.push("frontend.mode", if mtl { "mtl" } else { "separate" });
    let (emb_model, pad_model) = if mtl {
        let (t, last) = train_model(&mut run, "mtl", steps, resume, fresh(FrontendTask::Mtl, SALT_MTL)?, wrap, unwrap, |t| {
            frontend_step(t, &data, batch)
        })?;
        push_final(&mut m, "mtl", &last);
        (t.model.clone(), t.model)
    } else {
        let (sid, last) = train_model(&mut run, "sid", steps, resume, fresh(FrontendTask::Sid, SALT_SID)?, wrap, unwrap, |t| {
            frontend_step(t, &data, batch)
        })?;
        push_final(&mut m, "sid", &last);
        let (pad, last) = train_model(&mut run, "pad", steps, resume, fresh(FrontendTask::Pad, SALT_PAD)?, wrap, unwrap, |t| {
            frontend_step(t, &data, batch)
        })?;
        push_final(&mut m, "pad", &last);
        (sid.model, pad.model)
    };

    let all: Vec<FeatureMatrix> = corpus.train.data.iter().chain(&corpus.eval.data).cloned().collect();
    let emb = embed_all(&emb_model.encoder, &all, CHUNK)?;
    let pad = frontend_pad_probs(&pad_model, &all, CHUNK)?;
    let mut store = EmbeddingStore::new(enc.embedding_dim);
    let mut pad_lines = Vec::with_capacity(all.len());
    for (i, (id, spk, label)) in all_ids(&corpus).into_iter().enumerate() {
        store.insert_f64(id, spk, label, &emb[i])?;
        pad_lines.push((id.clone(), pad[i]));
    }
    run.write("embeddings.isvemb", &store.to_bytes())?;
    run.write("pad_scores.txt", format_pad_scores(&pad_lines).as_bytes())?;
    write_corpus_text(&mut run, &corpus)?;

    let lookup = eval_lookup(&corpus);
    let find = |id: &str| lookup.get(id).copied();
    let (ze, _) = evaluate_system(&corpus.trials, find, |&a, &b| cosine_score(&emb[a], &emb[b]))?;
    let (pd, _) = evaluate_system(&corpus.trials, find, |_, &b| Ok(pad[b]))?;
    m.eer("frontend.ze_eer", ze.ze);
    m.eer("frontend.pad_eer", pd.pad);
    run.finish(&m)?;
    Ok(m)
}

/// Trains the joint network with the summed three-part loss.
pub fn train_e2e(cfg: &RunConfig, resume: bool) -> Result<Metrics> {
    cfg.validate()?;
    let corpus = load_features(cfg)?;
    let mut e2e = cfg.e2e()?;
    e2e.n_speakers = corpus.train.n_speakers();
    let seed = model_seed(cfg.seed()?, SALT_E2E);
    let data = feature_set(&corpus.train);
    let (spb, ups) = (cfg.usize("e2e.speakers_per_batch")?, cfg.usize("e2e.utts_per_speaker")?);
    let mut run = RunDir::open(cfg, "train-e2e", resume)?;
    let fresh = Trainer::new(E2eModel::new(e2e, &mut stream(seed, STREAM_INIT))?, cfg.optimizer()?, seed)?;
    let (t, last) = train_model(
        &mut run,
        "e2e",
        cfg.usize("e2e.steps")?,
        resume,
        fresh,
        AnyModel::E2e,
        |m| match m {
            AnyModel::E2e(e) => Some(e),
            _ => None,
        },
        |t| e2e_step(t, &data, spb, ups),
    )?;
    let mut m = Metrics::default();
    push_final(&mut m, "e2e", &last);
    let (report, scores) = score_e2e(&t.model, &corpus)?;
    m.extend(report_metrics("e2e", &report, &scores));
    run.write("scores_e2e.txt", format_scores(&score_lines(&corpus.trials, &scores)).as_bytes())?;
    run.finish(&m)?;
    Ok(m)
}

fn score_e2e(model: &E2eModel, corpus: &Corpus<FeatureMatrix>) -> Result<(EvalReport, ScoreSet)> {
    let emb = embed_all(&model.frontend.encoder, &corpus.eval.data, CHUNK)?;
    let idx = corpus.eval.index();
    Ok(evaluate_system(&corpus.trials, |id| idx.get(id).copied(), |&a, &b| model.score_pair(&emb[a], &emb[b]))?)
}

fn score_cosine(corpus: &Corpus<Vec<f64>>) -> Result<(EvalReport, ScoreSet)> {
    let idx = corpus.eval.index();
    let emb = &corpus.eval.data;
    Ok(evaluate_system(&corpus.trials, |id| idx.get(id).copied(), |&a, &b| cosine_score(&emb[a], &emb[b]))?)
}

fn score_modular(backend: &Backend, corpus: &Corpus<Vec<f64>>, eval_pad: &[f64]) -> Result<(EvalReport, ScoreSet)> {
    let idx = corpus.eval.index();
    let emb = &corpus.eval.data;
    Ok(evaluate_system(&corpus.trials, |id| idx.get(id).copied(), |&a, &b| {
        Ok(backend.backend_forward(&emb[a], &emb[b], eval_pad[b])?.final_score)
    })?)
}

/// Per-utterance bona fide probabilities looked up by id.
fn pad_for_split(scores: &HashMap<String, f64>, split: &Split<Vec<f64>>) -> Result<Vec<f64>> {
    let missing: Vec<String> = split.ids.iter().filter(|id| !scores.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(isv_core::Error::MissingUtterances(missing).into());
    }
    Ok(split.ids.iter().map(|id| scores[id]).collect())
}

pub const ALPHA_ZERO_WARNING: &str =
    "WARNING: backend.alpha = 0 removes the same-speaker loss; the back-end is prone to overfitting";

/// Trains the back-end on embedding pairs with bona fide labels (or
/// predictions) as the fusion input, then scores the evaluation trials
/// with it and with the cosine baseline.
pub fn train_backend(cfg: &RunConfig, resume: bool) -> Result<Metrics> {
    cfg.validate()?;
    let corpus = load_embeddings(cfg)?;
    let dim = corpus.train.data.first().map(Vec::len).ok_or_else(|| Error::Config("no training embeddings".into()))?;
    let bcfg = cfg.backend(dim)?;
    let opt = cfg.optimizer()?;
    let seed = cfg.seed()?;
    let mut run = RunDir::open(cfg, "train-backend", resume)?;
    let mut m = Metrics::default();
    if bcfg.alpha == 0.0 {
        eprintln!("{ALPHA_ZERO_WARNING}");
        run.log("warning=alpha_zero")?;
        m.push("warning.alpha_zero", true);
    }

    let (train_pad, eval_pad) = match cfg.get("pad.source") {
        "classifier" => {
            let targets: Vec<f64> = corpus.train.labels.iter().map(|l| l.pad_target()).collect();
            let ms = model_seed(seed, SALT_PAD_CLASSIFIER);
            let model = PadClassifier::new(dim, cfg.usize("pad.hidden")?, &mut stream(ms, STREAM_INIT));
            let batch = cfg.usize("pad.batch")?;
            let (t, last) = train_model(
                &mut run,
                "pad",
                cfg.usize("pad.steps")?,
                resume,
                Trainer::new(model, opt, ms)?,
                AnyModel::Pad,
                |m| match m {
                    AnyModel::Pad(p) => Some(p),
                    _ => None,
                },
                |t| pad_step(t, &corpus.train.data, &targets, batch),
            )?;
            push_final(&mut m, "pad", &last);
            (
                classifier_pad_probs(&t.model, &corpus.train.data)?,
                classifier_pad_probs(&t.model, &corpus.eval.data)?,
            )
        }
        _ => {
            let path = FrontendExport::in_dir(&cfg.work_dir().join("train-frontend")).pad_scores;
            check_present(&[&path])?;
            let scores: HashMap<String, f64> =
                parse_pad_scores(&read_text(&path)?, &path.display().to_string())?.into_iter().collect();
            (pad_for_split(&scores, &corpus.train)?, pad_for_split(&scores, &corpus.eval)?)
        }
    };

    let mut data = BackendData::new(corpus.train.data.clone(), &corpus.train.speaker_idx, &corpus.train.labels)?;
    let mode = cfg.pad_input()?;
    if mode == PadInput::Predictions {
        data = data.with_pad_predictions(train_pad.clone())?;
    }
    m.push("backend.pad_input", if mode == PadInput::Labels { "labels" } else { "predictions" });
    let ms = model_seed(seed, SALT_BACKEND);
    let batch = cfg.usize("backend.batch")?;
    let fresh = Trainer::new(Backend::new(bcfg, &mut stream(ms, STREAM_INIT))?, opt, ms)?;
    let (t, last) = train_model(
        &mut run,
        "backend",
        cfg.usize("backend.steps")?,
        resume,
        fresh,
        AnyModel::Backend,
        |m| match m {
            AnyModel::Backend(b) => Some(b),
            _ => None,
        },
        |t| backend_step(t, &data, batch),
    )?;
    push_final(&mut m, "backend", &last);

    let pad_lines: Vec<(String, f64)> = corpus
        .train
        .ids
        .iter()
        .zip(&train_pad)
        .chain(corpus.eval.ids.iter().zip(&eval_pad))
        .map(|(id, &p)| (id.clone(), p))
        .collect();
    run.write("pad_scores.txt", format_pad_scores(&pad_lines).as_bytes())?;

    let (cos, cos_scores) = score_cosine(&corpus)?;
    let (modular, mod_scores) = score_modular(&t.model, &corpus, &eval_pad)?;
    m.extend(report_metrics("cosine", &cos, &cos_scores));
    m.extend(report_metrics("modular", &modular, &mod_scores));
    let finals: Vec<f64> = mod_scores.entries().iter().map(|e| e.score).collect();
    let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
    let sd = (finals.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / finals.len().max(1) as f64).sqrt();
    m.push("monitor.final_score_sd", sd);
    let collapsed = sd < 1e-2 || modular.isv.is_some_and(|p| p.eer >= 40.0);
    m.push("monitor.collapsed", collapsed);
    if collapsed {
        run.log("warning=collapse")?;
    }
    run.write(
        "report.txt",
        format_report(&[("cosine".to_string(), cos), ("modular".to_string(), modular)]).as_bytes(),
    )?;
    write_scorer_outputs(&mut run, cfg, "modular", &corpus.trials, &mod_scores)?;
    run.finish(&m)?;
    Ok(m)
}

/// Scores the evaluation trials with every configured scorer.
pub fn evaluate(cfg: &RunConfig) -> Result<Metrics> {
    cfg.validate()?;
    let scorers = cfg.scorers()?;
    let work = cfg.work_dir();
    let wants = |s: &str| scorers.iter().any(|x| x == s);
    let backend_dir = work.join("train-backend");
    let mut needed: Vec<PathBuf> = Vec::new();
    if (wants("cosine") || wants("modular")) && cfg.get("backend.embeddings") == "frontend" {
        let ex = FrontendExport::in_dir(&work.join("train-frontend"));
        needed.extend([ex.embeddings, ex.train_protocol, ex.eval_protocol, ex.trials]);
    }
    if wants("modular") {
        needed.push(backend_dir.join("backend.ckpt"));
        needed.push(backend_dir.join("pad_scores.txt"));
    }
    if wants("e2e") {
        needed.push(work.join("train-e2e").join("e2e.ckpt"));
    }
    let refs: Vec<&Path> = needed.iter().map(PathBuf::as_path).collect();
    check_present(&refs)?;

    let emb = if wants("cosine") || wants("modular") { Some(load_embeddings(cfg)?) } else { None };
    let feat = if wants("e2e") { Some(load_features(cfg)?) } else { None };
    let trials = emb
        .as_ref()
        .map(|c| c.trials.clone())
        .or_else(|| feat.as_ref().map(|c| c.trials.clone()))
        .expect("at least one scorer");

    let mut run = RunDir::open(cfg, "evaluate", false)?;
    run.write("trials.txt", format_trials(&trials).as_bytes())?;
    let mut m = Metrics::default();
    let mut rows = Vec::new();
    for name in &scorers {
        let (report, scores) = match name.as_str() {
            "cosine" => score_cosine(emb.as_ref().expect("loaded"))?,
            "modular" => {
                let corpus = emb.as_ref().expect("loaded");
                let backend = match Checkpoint::load(&backend_dir.join("backend.ckpt"))?.model {
                    AnyModel::Backend(b) => b,
                    other => return Err(Error::Format(format!("backend.ckpt holds a {} model", other.kind()))),
                };
                let path = backend_dir.join("pad_scores.txt");
                let pad: HashMap<String, f64> =
                    parse_pad_scores(&read_text(&path)?, &path.display().to_string())?.into_iter().collect();
                score_modular(&backend, corpus, &pad_for_split(&pad, &corpus.eval)?)?
            }
            _ => {
                let corpus = feat.as_ref().expect("loaded");
                if corpus.trials != trials {
                    return Err(Error::Format("feature and embedding corpora disagree on the trial list".into()));
                }
                let model = match Checkpoint::load(&work.join("train-e2e").join("e2e.ckpt"))?.model {
                    AnyModel::E2e(e) => e,
                    other => return Err(Error::Format(format!("e2e.ckpt holds a {} model", other.kind()))),
                };
                score_e2e(&model, corpus)?
            }
        };
        m.extend(report_metrics(name, &report, &scores));
        write_scorer_outputs(&mut run, cfg, name, &trials, &scores)?;
        rows.push((name.clone(), report));
    }
    run.write("report.txt", format_report(&rows).as_bytes())?;
    run.finish(&m)?;
    Ok(m)
}
