//! Scratch diagnostic: train the default model on a small separable set
//! and print per-epoch loss/accuracy, then try one synthetic subject.
//!
//! Usage: probe [max_epochs] [lr] [n_trials] [mode: sep|synth]

use eegdec::data::{split, SplitPlan, SplitSpec};
use eegdec::network::{init_params, ArchConfig};
use eegdec::synth::{generate_subject, test_profile};
use eegdec::training::{train, TrainConfig};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn separable(arch: &ArchConfig, n_trials: usize, seed: u64) -> eegdec::data::EpochSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epochs = Array3::zeros((n_trials, arch.n_channels, arch.n_time));
    let mut labels = Vec::new();
    for trial in 0..n_trials {
        let class = (trial % 3) as u32;
        labels.push(class);
        let freq = 2.0 + 2.0 * class as f64;
        for c in 0..arch.n_channels {
            for t in 0..arch.n_time {
                let phase =
                    2.0 * std::f64::consts::PI * freq * t as f64 / arch.n_time as f64;
                epochs[[trial, c, t]] =
                    3.0 * phase.sin() * (1.0 + 0.2 * c as f64) + 0.2 * rng.gen_range(-1.0..1.0);
            }
        }
    }
    eegdec::data::EpochSet {
        subject_id: 0,
        rate_hz: 256.0,
        channels: (0..arch.n_channels).map(|i| format!("c{i}")).collect(),
        epochs,
        labels,
        window_ms: (-200.0, 800.0),
        class_values_cpd: vec![0.05, 0.1, 0.3],
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let n_trials: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(33);
    let mode = args.get(4).cloned().unwrap_or_else(|| "sep".into());

    let arch = ArchConfig::default();
    if mode == "cohort" {
        let cfg = eegdec::synth::CohortConfig {
            n_subjects: max_epochs,
            ..eegdec::synth::CohortConfig::default()
        };
        for p in eegdec::synth::cohort_profiles(&cfg).unwrap() {
            println!("{p:#?}");
        }
        return;
    }
    let es = if mode == "cs" {
        let ccfg = eegdec::synth::CohortConfig::default();
        let cohort = eegdec::synth::generate_cohort(&ccfg, 256.0).unwrap();
        cohort.into_iter().nth(n_trials).unwrap()
    } else if mode == "synth" {
        let mut profile = test_profile(1);
        if let Ok(noise) = std::env::args().nth(5).unwrap_or_default().parse::<f64>() {
            profile.noise_level_uv = noise;
        }
        generate_subject(&profile, n_trials, 256.0).unwrap()
    } else {
        separable(&arch, n_trials, 1)
    };
    let cfg = TrainConfig {
        max_epochs,
        lr_initial: lr,
        lr_reduced: lr / 10.0,
        batch_size: 64,
        seed: 5,
        ..TrainConfig::default()
    };
    let plan = SplitPlan {
        seed: 2,
        spec: SplitSpec::Fractions {
            train: 8.0 / 9.0,
            validation: 1.0 / 9.0,
            test: 0.0,
        },
        stratify_by_label: true,
    };
    let (tr, va, _) = split(&es, &plan).unwrap();
    println!("train {} trials, val {}", tr.n_trials(), va.n_trials());
    let init = init_params(&arch, 7).unwrap();
    let (_best, hist) = train(&arch, &init, &tr, &va, &cfg).unwrap();
    for e in 0..hist.n_epochs() {
        println!(
            "epoch {e:3}  loss {:8.4}  train_acc {:.3}  val_acc {:.3}  lr {}",
            hist.train_loss[e], hist.train_accuracy[e], hist.val_accuracy[e], hist.learning_rate[e]
        );
    }
}
