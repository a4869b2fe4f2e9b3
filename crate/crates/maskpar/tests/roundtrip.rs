use std::path::Path;

use maskpar::checkpoint::{self, Checkpoint};
use maskpar::manifest::{load_manifest, read_records, write_records, Split};
use maskpar::run::{prepare, train_run, RunConfig};
use maskpar::synth::write_synth;
use maskpar::Error;
use maskpar_core::data::{synth_generate, synthetic_policy, SynthSpec};
use maskpar_core::train::{predict_probabilities, TrainConfig};
use maskpar_core::{Model, ModelConfig};

fn small_run(epochs: usize) -> RunConfig {
    RunConfig {
        model: ModelConfig::desk_light(),
        train: TrainConfig { learning_rate: 1e-3, epochs, dropout_p: 0.3, ..TrainConfig::default() },
        data_seed: 4,
    }
}

fn synth_dir(dir: &Path, n: usize) -> maskpar::synth::SynthFiles {
    write_synth(&SynthSpec::new(n, 0.8, 0.3, 4), dir).unwrap()
}

#[test]
fn synth_manifest_reloads_the_generated_set() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::new(30, 0.8, 0.3, 4);
    let files = write_synth(&spec, dir.path()).unwrap();
    let policy = maskpar::policies::load_policy(files.policy.to_str().unwrap()).unwrap();
    assert_eq!(policy, synthetic_policy());
    let data = load_manifest(&files.manifest, &policy).unwrap();
    let fresh = synth_generate(&spec).unwrap();
    assert_eq!(data.len(), fresh.len());
    for (a, b) in data.samples.iter().zip(&fresh) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.mask, b.mask);
        // 8-bit storage
        let err = a.image.data.iter().zip(&b.image.data).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(err <= 0.5 / 255.0 + 1e-6, "{err}");
    }
    assert_eq!(data.split(Split::Train).len(), 24);
    assert_eq!(data.split(Split::Val).len(), 3);
    assert_eq!(data.split(Split::Test).len(), 3);
}

#[test]
fn missing_image_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 5);
    std::fs::remove_file(dir.path().join("images/synth-00002.png")).unwrap();
    let err = load_manifest(&files.manifest, &synthetic_policy()).unwrap_err();
    match &err {
        Error::Record { id, source } => {
            assert_eq!(id, "synth-00002");
            assert!(matches!(**source, Error::Io { .. } | Error::Image { .. }), "{source}");
        }
        other => panic!("{other}"),
    }
    assert!(err.to_string().contains("synth-00002"));
}

#[test]
fn unknown_label_is_a_config_error_with_the_record_id() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 3);
    let mut recs = read_records(&files.manifest).unwrap();
    recs[1].labels.entry("Head".into()).or_default().insert("Headwear".into(), vec!["Crown".into()]);
    write_records(&files.manifest, &recs).unwrap();
    let err = load_manifest(&files.manifest, &synthetic_policy()).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("synth-00001") && err.to_string().contains("Crown"));
}

#[test]
fn malformed_line_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.jsonl");
    std::fs::write(&p, "{\"id\": \"a\", \"image\": \"x.png\", \"mask\": \"y.png\", \"colour\": 1}\n").unwrap();
    let err = load_manifest(&p, &synthetic_policy()).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("line 1"), "{err}");
}

#[test]
fn checkpoint_reproduces_evaluation_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 20);
    let data = load_manifest(&files.manifest, &synthetic_policy()).unwrap();
    let out = train_run(&synthetic_policy(), &data, &small_run(2), Some(dir.path()), None).unwrap();
    let loaded = checkpoint::load(&dir.path().join("best.ckpt")).unwrap();
    assert_eq!(loaded.model.params(), out.model.params());
    let p = prepare(&data.samples, &ModelConfig::desk_light()).unwrap();
    let a = predict_probabilities(&out.model, &p, 7).unwrap();
    let b = predict_probabilities(&loaded.model, &p, 7).unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    // second trip through bytes changes nothing
    let again = checkpoint::from_bytes(&checkpoint::to_bytes(&loaded), Path::new("mem")).unwrap();
    assert_eq!(checkpoint::to_bytes(&again), checkpoint::to_bytes(&loaded));
}

#[test]
fn checkpoint_rejects_a_foreign_policy_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 10);
    let data = load_manifest(&files.manifest, &synthetic_policy()).unwrap();
    let model = Model::new(ModelConfig::desk(), synthetic_policy(), 0).unwrap();
    let ck = Checkpoint { model, train: None, resume: None };
    let err = train_run(&synthetic_policy(), &data, &small_run(1), None, Some(ck)).unwrap_err();
    assert!(err.is_config(), "{err}");
}

#[test]
fn fixed_seed_runs_repeat_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 24);
    let data = load_manifest(&files.manifest, &synthetic_policy()).unwrap();
    let a = train_run(&synthetic_policy(), &data, &small_run(2), None, None).unwrap();
    let b = train_run(&synthetic_policy(), &data, &small_run(2), None, None).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert!(!a.record.losses().is_empty());
    assert_eq!(bits(a.record.losses()), bits(b.record.losses()));
    assert_eq!(a.record.fingerprint, b.record.fingerprint);
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 24);
    let data = load_manifest(&files.manifest, &synthetic_policy()).unwrap();
    let (whole, part) = (dir.path().join("whole"), dir.path().join("part"));
    let full = train_run(&synthetic_policy(), &data, &small_run(4), Some(&whole), None).unwrap();
    train_run(&synthetic_policy(), &data, &small_run(2), Some(&part), None).unwrap();
    let ck = checkpoint::load(&part.join("last.ckpt")).unwrap();
    let rest = train_run(&synthetic_policy(), &data, &small_run(4), Some(&part), Some(ck)).unwrap();

    let tail: Vec<u64> =
        full.record.epochs[2..].iter().flat_map(|e| e.step_losses.iter().map(|v| v.to_bits())).collect();
    let resumed: Vec<u64> = rest.record.losses().into_iter().map(f64::to_bits).collect();
    assert_eq!(tail, resumed);
    let bytes = |p: &Path| std::fs::read(p.join("last.ckpt")).unwrap();
    assert_eq!(bytes(&whole), bytes(&part));
}

#[test]
fn run_directory_holds_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_dir(dir.path(), 20);
    let data = load_manifest(&files.manifest, &synthetic_policy()).unwrap();
    let out = dir.path().join("run");
    train_run(&synthetic_policy(), &data, &small_run(1), Some(&out), None).unwrap();
    for f in ["best.ckpt", "last.ckpt", "run.json", "metrics.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rec: maskpar::report::RunRecord = maskpar::report::read_json(&out.join("run.json")).unwrap();
    assert_eq!(rec.epochs.len(), 1);
    assert!(rec.final_report.is_some() && rec.error.is_none());
}
