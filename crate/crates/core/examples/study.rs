//! Run the full synthetic study at a configurable scale and print the
//! headline numbers: within-subject accuracy, leave-one-subject-out
//! accuracy, the fine-tuning sweep, and the band-power baseline.
//!
//! Usage: study [n_subjects] [n_trials] [max_epochs] [folds] [seed] [mode]
//! where mode is all (default), sweep, or intra.

use std::time::Instant;

use eegdec::baseline::{band_power_features, svm_fit, svm_predict};
use eegdec::data::{kfold_indices, EpochSet};
use eegdec::eval::{accuracy, run_inter_finetuned, run_intra};
use eegdec::network::ArchConfig;
use eegdec::synth::{generate_cohort, CohortConfig};
use eegdec::training::TrainConfig;
use eegdec::util::mean;

fn svm_intra(es: &EpochSet, folds: usize, seed: u64) -> f64 {
    let features = band_power_features(es).unwrap();
    let assignment = kfold_indices(es, folds, seed, true).unwrap();
    let mut accs = Vec::new();
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..es.n_trials())
            .filter(|&i| assignment[i] != fold)
            .collect();
        let test_idx: Vec<usize> = (0..es.n_trials())
            .filter(|&i| assignment[i] == fold)
            .collect();
        let take = |idx: &[usize]| {
            let mut m = ndarray::Array2::zeros((idx.len(), features.ncols()));
            for (r, &i) in idx.iter().enumerate() {
                m.row_mut(r).assign(&features.row(i));
            }
            m
        };
        let train_y: Vec<u32> = train_idx.iter().map(|&i| es.labels[i]).collect();
        let test_y: Vec<u32> = test_idx.iter().map(|&i| es.labels[i]).collect();
        let model = svm_fit(&take(&train_idx), &train_y, 1.0).unwrap();
        let preds = svm_predict(&model, &take(&test_idx));
        accs.push(accuracy(&preds, &test_y).unwrap());
    }
    mean(&accs)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |i: usize, default: usize| -> usize {
        args.get(i).map(|s| s.parse().unwrap()).unwrap_or(default)
    };
    let n_subjects = get(1, 10);
    let n_trials = get(2, 300);
    let max_epochs = get(3, 25);
    let folds = get(4, 10);
    let seed = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0u64);
    let mode = args.get(6).cloned().unwrap_or_else(|| "all".into());

    let arch = ArchConfig::default();
    let cfg = TrainConfig {
        max_epochs,
        seed,
        batch_size: 32,
        lr_initial: 0.05,
        lr_reduced: 0.005,
        ..TrainConfig::default()
    };
    let cohort_cfg = CohortConfig {
        n_subjects,
        n_trials_per_subject: n_trials,
        seed,
        ..CohortConfig::default()
    };

    let t0 = Instant::now();
    let cohort = generate_cohort(&cohort_cfg, 256.0).unwrap();
    println!("cohort: {n_subjects} subjects x {n_trials} trials  ({:.1?})", t0.elapsed());

    if mode == "all" || mode == "intra" {
        let t0 = Instant::now();
        let svm_accs: Vec<f64> = cohort.iter().map(|s| svm_intra(s, folds, seed)).collect();
        println!(
            "svm intra:    mean {:.3}  per-subject {:?}  ({:.1?})",
            mean(&svm_accs),
            svm_accs.iter().map(|a| (a * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t0.elapsed()
        );

        let t0 = Instant::now();
        let intra: Vec<f64> = cohort
            .iter()
            .map(|s| run_intra(s, &arch, &cfg, folds).unwrap().mean())
            .collect();
        println!(
            "net intra:    mean {:.3}  per-subject {:?}  ({:.1?})",
            mean(&intra),
            intra.iter().map(|a| (a * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t0.elapsed()
        );
    }

    if mode == "all" || mode == "sweep" {
        let t0 = Instant::now();
        let sweep = run_inter_finetuned(&cohort, &arch, &cfg, &[0.0, 0.1, 0.2]).unwrap();
        println!(
            "net inter:    mean {:.3}  per-subject {:?}",
            sweep.base_mean(),
            sweep
                .base_accuracies
                .iter()
                .map(|a| (a * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
        for (fi, f) in sweep.fractions.iter().enumerate() {
            let col: Vec<f64> = sweep.accuracies.iter().map(|row| row[fi]).collect();
            println!(
                "sweep f={f:.1}:  mean {:.3}  per-subject {:?}",
                mean(&col),
                col.iter().map(|a| (a * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
        println!("sweep time: {:.1?}", t0.elapsed());
    }
}
