//! Labeled utterance collections for training and evaluation, loaded from
//! the synthetic generators or from protocol, feature and trial files.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use isv_core::features::{FeatureMatrix, Utterance, UtteranceData};
use isv_core::synth::{synth_embedding_world, synth_feature_world, SynthSplit};
use isv_core::trials::{validate_trial, Trial};
use isv_core::SpoofLabel;

use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::featfile::read_features;
use crate::store::EmbeddingStore;
use crate::text::{read_protocol, read_trials, ColumnMap, ProtocolRecord};
use crate::wav::read_wav;

/// Utterances of one split with per-utterance payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub ids: Vec<String>,
    pub speakers: Vec<String>,
    /// Index of each utterance's speaker among the split's sorted speaker ids.
    pub speaker_idx: Vec<usize>,
    pub labels: Vec<SpoofLabel>,
    pub data: Vec<T>,
}

impl<T> Split<T> {
    pub fn new(records: Vec<(ProtocolRecord, T)>) -> Self {
        let names: BTreeSet<&str> = records.iter().map(|(r, _)| r.speaker.as_str()).collect();
        let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let speaker_idx = records.iter().map(|(r, _)| pos[r.speaker.as_str()]).collect();
        let mut split = Split {
            ids: Vec::with_capacity(records.len()),
            speakers: Vec::with_capacity(records.len()),
            speaker_idx,
            labels: Vec::with_capacity(records.len()),
            data: Vec::with_capacity(records.len()),
        };
        for (r, d) in records {
            split.ids.push(r.utt);
            split.speakers.push(r.speaker);
            split.labels.push(r.label);
            split.data.push(d);
        }
        split
    }

    fn from_synth(s: SynthSplit<T>) -> Self {
        Self::new(
            s.items
                .into_iter()
                .map(|i| {
                    (
                        ProtocolRecord {
                            utt: i.id,
                            speaker: i.speaker,
                            label: i.label,
                        },
                        i.data,
                    )
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_speakers(&self) -> usize {
        self.speaker_idx.iter().max().map_or(0, |m| m + 1)
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    pub fn protocol(&self) -> Vec<ProtocolRecord> {
        (0..self.len())
            .map(|i| ProtocolRecord {
                utt: self.ids[i].clone(),
                speaker: self.speakers[i].clone(),
                label: self.labels[i],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<T> {
    pub train: Split<T>,
    pub eval: Split<T>,
    /// Evaluation trials over `eval` utterances.
    pub trials: Vec<Trial>,
}

impl<T> Corpus<T> {
    /// Checks every trial against the evaluation protocol.
    pub fn validate_trials(&self) -> Result<()> {
        let idx = self.eval.index();
        let mut missing = Vec::new();
        for t in &self.trials {
            for id in [&t.enroll, &t.test] {
                if !idx.contains_key(id.as_str()) && !missing.contains(id) {
                    missing.push(id.clone());
                }
            }
        }
        if !missing.is_empty() {
            return Err(isv_core::Error::MissingUtterances(missing).into());
        }
        for t in &self.trials {
            let (e, s) = (idx[t.enroll.as_str()], idx[t.test.as_str()]);
            validate_trial(
                (self.eval.speakers[e].as_str(), self.eval.labels[e]),
                (self.eval.speakers[s].as_str(), self.eval.labels[s]),
                t.kind,
            )
            .map_err(|err| Error::Format(format!("trial {} {} {}: {err}", t.enroll, t.test, t.kind)))?;
        }
        Ok(())
    }
}

fn trial_cap(cfg: &RunConfig) -> Result<Option<usize>> {
    Ok(Some(cfg.usize("eval.trials_per_type")?).filter(|&c| c > 0))
}

fn required(cfg: &RunConfig, key: &str) -> Result<PathBuf> {
    cfg.path(key)
        .ok_or_else(|| Error::Config(format!("`{key}` must be set when data.source = files")))
}

/// Reports every path in `paths` that does not exist.
pub fn check_present(paths: &[&Path]) -> Result<()> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(missing))
    }
}

/// Attaches per-utterance payloads from `lookup`, listing every id it lacks.
fn attach<T>(protocol: Vec<ProtocolRecord>, mut lookup: impl FnMut(&str) -> Option<T>) -> Result<Split<T>> {
    let mut missing = Vec::new();
    let mut records = Vec::with_capacity(protocol.len());
    for r in protocol {
        match lookup(&r.utt) {
            Some(d) => records.push((r, d)),
            None => missing.push(r.utt),
        }
    }
    if !missing.is_empty() {
        return Err(isv_core::Error::MissingUtterances(missing).into());
    }
    Ok(Split::new(records))
}

/// Feature corpus for the front-end and joint models.
pub fn load_features(cfg: &RunConfig) -> Result<Corpus<FeatureMatrix>> {
    match cfg.data_source()? {
        DataSource::Synth => {
            let world = synth_feature_world(&cfg.feature_world()?)?;
            let trials = world.eval.trials(trial_cap(cfg)?, cfg.seed()?);
            Ok(Corpus {
                train: Split::from_synth(world.train),
                eval: Split::from_synth(world.eval),
                trials,
            })
        }
        DataSource::Files => {
            let train_p = required(cfg, "data.train_protocol")?;
            let eval_p = required(cfg, "data.eval_protocol")?;
            let trials_p = required(cfg, "data.trials")?;
            let feats = cfg.path("data.features");
            let wavs = cfg.path("data.wav_dir");
            let mut paths: Vec<&Path> = vec![&train_p, &eval_p, &trials_p];
            match (&feats, &wavs) {
                (Some(f), _) => paths.push(f),
                (None, Some(w)) => paths.push(w),
                (None, None) => {
                    return Err(Error::Config("set data.features or data.wav_dir when data.source = files".into()))
                }
            }
            check_present(&paths)?;
            let train = read_protocol(&train_p)?;
            let eval = read_protocol(&eval_p)?;
            let (train, eval) = if let Some(f) = feats {
                let mut by_id: HashMap<String, FeatureMatrix> =
                    read_features(&f)?.into_iter().map(|r| (r.id, r.features)).collect();
                (attach(train, |id| by_id.remove(id))?, attach(eval, |id| by_id.remove(id))?)
            } else {
                let dir = wavs.expect("checked above");
                let mel = cfg.mel()?;
                let load = |recs: Vec<ProtocolRecord>| -> Result<Split<FeatureMatrix>> {
                    let mut out = Vec::with_capacity(recs.len());
                    let mut missing = Vec::new();
                    for r in recs {
                        let path = dir.join(format!("{}.wav", r.utt));
                        if !path.exists() {
                            missing.push(path.display().to_string());
                            continue;
                        }
                        let (samples, sample_rate) = read_wav(&path)?;
                        let utt = Utterance {
                            id: r.utt.clone(),
                            speaker: r.speaker.clone(),
                            label: r.label,
                            data: UtteranceData::Samples { samples, sample_rate },
                        };
                        let f = utt.features(&mel)?;
                        out.push((r, f));
                    }
                    if !missing.is_empty() {
                        return Err(Error::MissingArtifacts(missing));
                    }
                    Ok(Split::new(out))
                };
                (load(train)?, load(eval)?)
            };
            let map = ColumnMap::parse(cfg.get("data.trial_columns"), cfg.get("data.trial_tokens"))?;
            let corpus = Corpus {
                train,
                eval,
                trials: read_trials(&trials_p, &map)?,
            };
            corpus.validate_trials()?;
            Ok(corpus)
        }
    }
}

/// Paths of the embedding export written by the front-end run.
pub struct FrontendExport {
    pub embeddings: PathBuf,
    pub train_protocol: PathBuf,
    pub eval_protocol: PathBuf,
    pub trials: PathBuf,
    pub pad_scores: PathBuf,
}

impl FrontendExport {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            embeddings: dir.join("embeddings.isvemb"),
            train_protocol: dir.join("train_protocol.txt"),
            eval_protocol: dir.join("eval_protocol.txt"),
            trials: dir.join("trials.txt"),
            pad_scores: dir.join("pad_scores.txt"),
        }
    }
}

/// Embedding corpus for the back-end and the cosine baseline.
///
/// `backend.embeddings = synth` draws the synthetic embedding world;
/// `frontend` reads the export of a previous `train-frontend` run.
pub fn load_embeddings(cfg: &RunConfig) -> Result<Corpus<Vec<f64>>> {
    match cfg.get("backend.embeddings") {
        "synth" => {
            if cfg.data_source()? != DataSource::Synth {
                return Err(Error::Config(
                    "backend.embeddings = synth requires data.source = synth; use frontend embeddings for files".into(),
                ));
            }
            let world = synth_embedding_world(&cfg.embedding_world()?)?;
            let trials = world.eval.trials(trial_cap(cfg)?, cfg.seed()?);
            Ok(Corpus {
                train: Split::from_synth(world.train),
                eval: Split::from_synth(world.eval),
                trials,
            })
        }
        _ => {
            let ex = FrontendExport::in_dir(&cfg.work_dir().join("train-frontend"));
            check_present(&[&ex.embeddings, &ex.train_protocol, &ex.eval_protocol, &ex.trials])?;
            let store = EmbeddingStore::load(&ex.embeddings)?;
            let corpus = Corpus {
                train: attach(read_protocol(&ex.train_protocol)?, |id| store.vector(id))?,
                eval: attach(read_protocol(&ex.eval_protocol)?, |id| store.vector(id))?,
                trials: read_trials(&ex.trials, &ColumnMap::default())?,
            };
            corpus.validate_trials()?;
            Ok(corpus)
        }
    }
}
