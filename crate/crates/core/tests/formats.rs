//! On-disk round trips for every file format.

use foodlab::inference::predict_dataset;
use foodlab::io::logits::{load_labels, load_logits, save_logits, save_predictions};
use foodlab::io::{generate, Checkpoint, DataDir, Dataset, SyntheticDatasetSpec, write_dataset_dir};
use foodlab::training::{train, ExperimentConfig};
use foodlab::Error;

fn spec() -> SyntheticDatasetSpec {
    SyntheticDatasetSpec {
        superclasses: 2,
        fine_per_superclass: 2,
        train_per_class: 6,
        val_per_class: 3,
        test_per_class: 3,
        height: 12,
        width: 12,
        ..SyntheticDatasetSpec::default()
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec();
    let g = generate(&spec).unwrap();
    write_dataset_dir(&spec, &g, dir.path()).unwrap();
    let data = DataDir::open(dir.path()).unwrap();
    assert_eq!(data.load_split("train").unwrap(), g.train);
    assert_eq!(Dataset::load(&dir.path().join("test.fgfd")).unwrap(), g.test);

    let cfg = ExperimentConfig {
        train_size: 10,
        test_size: 12,
        hidden: vec![8, 4],
        classes: 4,
        batch_size: 4,
        epochs: 1,
        ..ExperimentConfig::config_b()
    };
    let (ckpt, _) = train(&cfg, &g.train, &g.val).unwrap();
    let ck = dir.path().join("m.ckpt");
    ckpt.save(&ck).unwrap();
    let loaded = Checkpoint::load(&ck).unwrap();
    assert_eq!(loaded, ckpt);

    let logits = predict_dataset(&loaded, &g.test, None).unwrap();
    let lp = dir.path().join("m.csv");
    save_logits(&logits, &lp).unwrap();
    let back = load_logits(&lp).unwrap();
    assert_eq!(back.logits(), logits.logits());
    assert_eq!(back.image_ids(), logits.image_ids());
    assert_eq!(back.model_tag, "m");

    let pp = dir.path().join("p.csv");
    save_predictions(logits.image_ids(), &g.test.labels, &pp).unwrap();
    let (ids, labels) = load_labels(&pp).unwrap();
    assert_eq!(labels, g.test.labels);
    assert_eq!(ids, load_labels(&dir.path().join("test.fgfd")).unwrap().0);
}

#[test]
fn flipped_byte_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(&spec()).unwrap();
    let cfg = ExperimentConfig { train_size: 12, test_size: 12, hidden: vec![4], classes: 4, epochs: 0, ..ExperimentConfig::config_b() };
    let (ckpt, _) = train(&cfg, &g.train, &g.val).unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::CorruptFile { .. })));
}
