//! Container round-trips and malformed-input handling.

use eegdec::data::{
    load_epochs, load_recording, load_recording_csv, save_epochs, save_recording, EpochSet,
    Event, Recording,
};
use eegdec::Error;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_recording(seed: u64, n_ch: usize, n_samp: usize, n_events: usize) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = Array2::from_shape_fn((n_ch, n_samp), |_| rng.gen_range(-100.0..100.0));
    let events = (0..n_events)
        .map(|_| Event {
            sample_index: rng.gen_range(0..n_samp as u64),
            label: rng.gen_range(0..3),
        })
        .collect();
    Recording {
        subject_id: seed as u32,
        rate_hz: 2048.0,
        channels: (0..n_ch).map(|i| format!("ch{i}")).collect(),
        samples,
        events,
        class_values_cpd: vec![0.05, 0.1, 0.3],
    }
}

fn random_epochs(seed: u64, n_trials: usize, n_ch: usize, n_time: usize) -> EpochSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EpochSet {
        subject_id: 3,
        rate_hz: 256.0,
        channels: (0..n_ch).map(|i| format!("ch{i}")).collect(),
        epochs: Array3::from_shape_fn((n_trials, n_ch, n_time), |_| {
            rng.gen_range(-50.0..50.0)
        }),
        labels: (0..n_trials).map(|_| rng.gen_range(0..3)).collect(),
        window_ms: (-200.0, 800.0),
        class_values_cpd: vec![0.05, 0.1, 0.3],
    }
}

#[test]
fn recording_roundtrip_is_bit_exact() {
    let rec = random_recording(7, 32, 5000, 10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.eegrec");
    save_recording(&rec, &path).unwrap();
    let back = load_recording(&path).unwrap();
    assert_eq!(back, rec);
    assert_eq!(back.n_channels(), 32);
    assert_eq!(back.events.len(), 10);
}

#[test]
fn two_loads_are_identical(){
    let rec = random_recording(99, 4, 300, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.eegrec");
    save_recording(&rec, &path).unwrap();
    assert_eq!(load_recording(&path).unwrap(), load_recording(&path).unwrap());
}

#[test]
fn epochs_roundtrip_including_nan_payloads() {
    let mut es = random_epochs(1, 12, 9, 256);
    es.epochs[[0, 0, 0]] = f64::NAN;
    es.epochs[[1, 2, 3]] = -0.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.eegep");
    save_epochs(&es, &path).unwrap();
    let back = load_epochs(&path).unwrap();
    // PartialEq fails on NaN; compare bit patterns instead.
    assert_eq!(back.labels, es.labels);
    assert_eq!(back.channels, es.channels);
    let a: Vec<u64> = back.epochs.iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = es.epochs.iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn empty_epoch_set_roundtrips() {
    let es = random_epochs(2, 0, 9, 256);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.eegep");
    save_epochs(&es, &path).unwrap();
    let back = load_epochs(&path).unwrap();
    assert_eq!(back.n_trials(), 0);
    assert_eq!(back, es);
}

#[test]
fn paper_scale_epoch_set_roundtrips() {
    let es = random_epochs(3, 1344, 9, 64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.eegep");
    save_epochs(&es, &path).unwrap();
    assert_eq!(load_epochs(&path).unwrap().n_trials(), 1344);
}

#[test]
fn truncated_file_reports_offset() {
    let rec = random_recording(5, 5, 100, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.eegrec");
    save_recording(&rec, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    // Drop one sample row's worth of data from the end.
    std::fs::write(&path, &bytes[..bytes.len() - 100 * 8]).unwrap();
    match load_recording(&path) {
        Err(Error::Format { offset, msg }) => {
            assert!(offset > 0);
            assert!(msg.contains("end of file"), "{msg}");
        }
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn bad_magic_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.eegrec");
    std::fs::write(&path, b"NOTAFILEatall___").unwrap();
    assert!(matches!(
        load_recording(&path),
        Err(Error::Format { .. })
    ));
}

#[test]
fn future_version_rejected() {
    let rec = random_recording(5, 2, 10, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.eegrec");
    save_recording(&rec, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8] = 9; // version field follows the 8-byte magic
    std::fs::write(&path, &bytes).unwrap();
    match load_recording(&path) {
        Err(Error::Version { found, expected }) => {
            assert_eq!(found, 9);
            assert_eq!(expected, 1);
        }
        other => panic!("expected version error, got {other:?}"),
    }
}

#[test]
fn csv_import_parses_channels_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let ev = dir.path().join("r.events");
    std::fs::write(&csv, "O1,Oz\n1.5,2.5\n-3.0,4.0\n0.0,1.0\n").unwrap();
    std::fs::write(&ev, "sample_index,label\n1,2\n2,0\n").unwrap();
    let rec = load_recording_csv(&csv, Some(&ev), 512.0, 4).unwrap();
    assert_eq!(rec.channels, vec!["O1".to_string(), "Oz".to_string()]);
    assert_eq!(rec.n_samples(), 3);
    assert_eq!(rec.samples[[0, 1]], -3.0);
    assert_eq!(rec.samples[[1, 0]], 2.5);
    assert_eq!(
        rec.events,
        vec![
            Event { sample_index: 1, label: 2 },
            Event { sample_index: 2, label: 0 }
        ]
    );
}

#[test]
fn csv_ragged_row_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "O1,Oz\n1.0,2.0\n3.0\n").unwrap();
    assert!(matches!(
        load_recording_csv(&csv, None, 512.0, 0),
        Err(Error::Format { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn prop_epochs_roundtrip(seed in 0u64..1000, n_trials in 0usize..8, n_time in 1usize..40) {
        let es = random_epochs(seed, n_trials, 3, n_time);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.eegep");
        save_epochs(&es, &path).unwrap();
        prop_assert_eq!(load_epochs(&path).unwrap(), es);
    }

    #[test]
    fn prop_recording_roundtrip(seed in 0u64..1000, n_ch in 1usize..6, n_samp in 1usize..200) {
        let rec = random_recording(seed, n_ch, n_samp, 3.min(n_samp));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.eegrec");
        save_recording(&rec, &path).unwrap();
        prop_assert_eq!(load_recording(&path).unwrap(), rec);
    }
}
