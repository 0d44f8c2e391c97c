use std::fmt::Write as _;

use isv::checkpoint::{AnyModel, Checkpoint, CHECKPOINT_MAGIC};
use isv::featfile::{read_features, write_features, FeatureRecord};
use isv::store::{write_store, EmbeddingRecord, EmbeddingStore};
use isv::text::{
    format_scores, format_trials, parse_protocol, parse_scores, parse_trials, read_trials, write_trials, ColumnMap,
    ProtocolRecord, ScoreLine,
};
use isv::Error;
use isv_core::features::{FeatureMatrix, BANDS};
use isv_core::models::{Backend, BackendConfig, E2eConfig, E2eModel, EncoderConfig, FrontendModel, FrontendTask, PadClassifier};
use isv_core::optim::{Amsgrad, AmsgradConfig};
use isv_core::rng::{normal, stream, IsvRng};
use isv_core::trials::{Trial, TrialType};
use isv_core::SpoofLabel;
use proptest::prelude::*;
use rand::Rng;

fn native() -> ColumnMap {
    ColumnMap::parse("", "").unwrap()
}

fn random_trials(rng: &mut IsvRng, n: usize) -> Vec<Trial> {
    (0..n)
        .map(|i| Trial {
            enroll: format!("E{}_{}", rng.random_range(0..500), i),
            test: format!("T{}", rng.random_range(0..5000)),
            kind: TrialType::ALL[rng.random_range(0..3)],
        })
        .collect()
}

#[test]
fn protocol_examples() {
    assert_eq!(
        parse_protocol("u1 s1 bonafide\n", "p").unwrap(),
        vec![ProtocolRecord { utt: "u1".into(), speaker: "s1".into(), label: SpoofLabel::Bonafide }]
    );
    assert!(parse_protocol("", "p").unwrap().is_empty());
    match parse_protocol("a s bonafide\n# note\nb s replay\na s replay\n", "p") {
        Err(Error::Duplicate { id, first, second, .. }) => assert_eq!((id.as_str(), first, second), ("a", 1, 4)),
        other => panic!("{other:?}"),
    }
    match parse_protocol("a s bonafide\nb s\n", "p") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn trial_line_and_unknown_token() {
    let t = parse_trials("e1 t1 target\n", &native(), "t").unwrap();
    assert_eq!(t, vec![Trial { enroll: "e1".into(), test: "t1".into(), kind: TrialType::Target }]);
    assert!(matches!(parse_trials("e1 t1 target\ne2 t2 spoof\n", &native(), "t"), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn official_sized_trial_file_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.txt");
    let mut text = String::new();
    for (kind, n) in [("target", 1106), ("zero_effort", 18624), ("replay", 10878)] {
        for i in 0..n {
            writeln!(text, "enr{} tst{kind}{i} {kind}", i % 97).unwrap();
        }
    }
    std::fs::write(&path, text).unwrap();
    let trials = read_trials(&path, &native()).unwrap();
    let count = |k| trials.iter().filter(|t| t.kind == k).count();
    assert_eq!(
        [count(TrialType::Target), count(TrialType::ZeroEffort), count(TrialType::Replay)],
        [1106, 18624, 10878]
    );
}

#[test]
fn ten_thousand_trials_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.txt");
    let trials = random_trials(&mut stream(3, 0), 10_000);
    write_trials(&path, &trials).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = read_trials(&path, &native()).unwrap();
    assert_eq!(back, trials);
    assert_eq!(format_trials(&back).into_bytes(), bytes);
}

#[test]
fn scores_round_trip_bitwise() {
    let mut rng = stream(4, 0);
    let lines: Vec<ScoreLine> = random_trials(&mut rng, 2000)
        .into_iter()
        .map(|trial| ScoreLine { trial, score: normal(&mut rng) * 10f64.powi(rng.random_range(-8..8)) })
        .collect();
    let back = parse_scores(&format_scores(&lines), "s").unwrap();
    for (a, b) in lines.iter().zip(&back) {
        assert_eq!(a.trial, b.trial);
        assert_eq!(a.score.to_bits(), b.score.to_bits());
    }
}

fn record(id: &str, vector: Vec<f32>) -> EmbeddingRecord {
    EmbeddingRecord { id: id.into(), speaker: "s".into(), label: SpoofLabel::Replay, vector }
}

#[test]
fn empty_store_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.isvemb");
    EmbeddingStore::new(16).save(&path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 4 + 8);
    let back = EmbeddingStore::load(&path).unwrap();
    assert!(back.is_empty());
    assert_eq!(back.dim(), 16);
}

#[test]
fn hundred_embeddings_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.isvemb");
    let mut rng = stream(5, 0);
    let mut store = EmbeddingStore::new(64);
    for i in 0..100 {
        let v: Vec<f32> = (0..64).map(|_| f32::from_bits(rng.random::<u32>() & 0xBFFF_FFFF)).collect();
        store.insert(record(&format!("u{i}"), v)).unwrap();
    }
    store.save(&path).unwrap();
    let back = EmbeddingStore::load(&path).unwrap();
    for (a, b) in store.records().iter().zip(back.records()) {
        assert_eq!((&a.id, &a.speaker, a.label), (&b.id, &b.speaker, b.label));
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.vector), bits(&b.vector));
    }
}

#[test]
fn mixed_dimensions_never_reach_the_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.isvemb");
    let err = write_store(&path, &[record("a", vec![0.0; 4]), record("b", vec![0.0; 5])]).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
    assert!(!path.exists());
}

#[test]
fn truncated_store_is_corrupt() {
    let mut store = EmbeddingStore::new(3);
    store.insert(record("a", vec![1.0, 2.0, 3.0])).unwrap();
    let bytes = store.to_bytes();
    for cut in [bytes.len() - 1, 21, 13] {
        assert!(matches!(EmbeddingStore::from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
    }
}

#[test]
fn features_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.isvfeat");
    let mut rng = stream(6, 0);
    let records: Vec<FeatureRecord> = (0..20)
        .map(|i| {
            let frames = rng.random_range(1..40);
            FeatureRecord {
                id: format!("u{i}"),
                speaker: format!("s{}", i % 3),
                label: if i % 2 == 0 { SpoofLabel::Bonafide } else { SpoofLabel::Replay },
                features: FeatureMatrix::new(frames, (0..frames * BANDS).map(|_| normal(&mut rng)).collect(), 400, 160).unwrap(),
            }
        })
        .collect();
    write_features(&path, &records).unwrap();
    assert_eq!(read_features(&path).unwrap(), records);
}

/// A checkpoint with non-trivial optimizer state: two updates from random gradients.
fn checkpoint(mut model: AnyModel, rng: &mut IsvRng) -> Checkpoint {
    let mut optimizer = Amsgrad::new(AmsgradConfig::default()).unwrap();
    for _ in 0..2 {
        model.params().visit_params("", &mut |_, p| {
            p.grad.data_mut().iter_mut().for_each(|g| *g = normal(rng));
        });
        optimizer.step(model.params()).unwrap();
    }
    Checkpoint { model, optimizer, seed: rng.random() }
}

fn all_models(rng: &mut IsvRng) -> Vec<AnyModel> {
    vec![
        AnyModel::Frontend(FrontendModel::new(EncoderConfig::default(), FrontendTask::Mtl, 5, rng).unwrap()),
        AnyModel::Frontend(FrontendModel::new(EncoderConfig::default(), FrontendTask::Pad, 0, rng).unwrap()),
        AnyModel::E2e(E2eModel::new(E2eConfig::default(), rng).unwrap()),
        AnyModel::Backend(Backend::new(BackendConfig::default(), rng).unwrap()),
        AnyModel::Pad(PadClassifier::new(64, 32, rng)),
    ]
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream(7, 0);
    for model in all_models(&mut rng) {
        let ck = checkpoint(model, &mut rng);
        let path = dir.path().join(format!("{}.ckpt", ck.model.kind()));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.to_bytes(), ck.to_bytes());
        let bits = |c: &Checkpoint| {
            let mut out = Vec::new();
            c.model.clone().params().visit_params("", &mut |_, p| out.extend(p.value.data().iter().map(|v| v.to_bits())));
            out
        };
        assert_eq!(bits(&back), bits(&ck));
        assert_eq!(back.optimizer, ck.optimizer);
        assert_eq!((back.seed, back.step()), (ck.seed, 2));
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let mut rng = stream(8, 0);
    let ck = checkpoint(AnyModel::Pad(PadClassifier::new(8, 4, &mut rng)), &mut rng);
    let bytes = ck.to_bytes();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);

    let mut flipped = bytes.clone();
    flipped[0] ^= 0x01;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Format(_))));

    let mut version = bytes.clone();
    version[7] = b'2';
    assert!(matches!(Checkpoint::from_bytes(&version), Err(Error::Format(_))));

    for cut in [bytes.len() - 1, bytes.len() / 2, 12] {
        assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
    }

    let mut body = bytes.clone();
    let mid = body.len() / 2;
    body[mid] ^= 0x40;
    assert!(matches!(Checkpoint::from_bytes(&body), Err(Error::Corrupt(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_bytes_round_trip(dim in 1usize..16, rows in prop::collection::vec(prop::collection::vec(any::<f32>(), 16), 0..20)) {
        let mut store = EmbeddingStore::new(dim);
        for (i, r) in rows.iter().enumerate() {
            store.insert(record(&format!("id{i}"), r[..dim].to_vec())).unwrap();
        }
        let bytes = store.to_bytes();
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn protocol_parse_is_all_or_nothing(lines in prop::collection::vec((0u8..6, 0u8..3, any::<bool>()), 1..30), bad in 0usize..30) {
        let mut text = String::new();
        for (i, (spk, _, replay)) in lines.iter().enumerate() {
            let label = if *replay { "replay" } else { "bonafide" };
            if i == bad {
                writeln!(text, "u{i} s{spk} maybe").unwrap();
            } else {
                writeln!(text, "u{i} s{spk} {label}").unwrap();
            }
        }
        let parsed = parse_protocol(&text, "p");
        if bad < lines.len() {
            let at_bad_line = matches!(parsed, Err(Error::Parse { line, .. }) if line == bad + 1);
            prop_assert!(at_bad_line);
        } else {
            prop_assert_eq!(parsed.unwrap().len(), lines.len());
        }
    }
}
