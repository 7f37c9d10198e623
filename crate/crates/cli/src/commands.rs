//! The seven pipeline subcommands. Each one resolves its inputs, does the
//! work, and writes results plus a manifest under its own subdirectory of
//! the configured output directory. Inputs are never modified, and a rerun
//! with the same config and seed rewrites byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use eegdec::data::{load_epochs, load_recording, save_epochs, save_recording, EpochSet};
use eegdec::eval::{
    run_inter_base, run_inter_finetuned, run_intra, study_report,
};
use eegdec::signal::{
    apply_fir, common_average_reference, design_windowed_sinc, downsample, epoch,
    reject_artifacts, FilterKind, RejectionThresholds,
};
use eegdec::synth::{cohort_profiles, generate_subject, generate_subject_continuous};

use crate::config::ResolvedConfig;
use crate::manifest::write_manifest;
use crate::results::ResultsTable;
use crate::CliError;

/// Condition names used in results headers and the stats report.
const COND_INTRA: &str = "intra";
const COND_INTER: &str = "inter_base";
const COND_SWEEP: &str = "finetune_sweep";

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Output(format!("creating {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Output(format!("writing {}: {e}", path.display())))
}

/// Files under `dir` with the given extension, sorted by name so every
/// run visits subjects in the same order.
fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("reading directory {}: {e}", dir.display())))?;
    for entry in entries {
        let entry =
            entry.map_err(|e| CliError::Input(format!("reading {}: {e}", dir.display())))?;
        let path = entry.path();
        if path.extension().and_then(|s| s.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn cmd_synth(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("synth");
    ensure_dir(&out)?;
    let cohort_cfg = run.synth.to_cohort(run.seed);
    let profiles = cohort_profiles(&cohort_cfg).map_err(compute)?;
    let mut summary = String::from("subject\tfile\ttrials\trate_hz\n");
    for p in &profiles {
        let (file, n_trials) = if run.synth.continuous {
            let rec = generate_subject_continuous(
                p,
                cohort_cfg.n_trials_per_subject,
                run.synth.rate_hz,
            )
            .map_err(compute)?;
            let file = format!("subject_{:02}.eegrec", p.subject_id);
            save_recording(&rec, &out.join(&file)).map_err(output)?;
            (file, rec.events.len())
        } else {
            let es = generate_subject(p, cohort_cfg.n_trials_per_subject, run.synth.rate_hz)
                .map_err(compute)?;
            let file = format!("subject_{:02}.eegep", p.subject_id);
            save_epochs(&es, &out.join(&file)).map_err(output)?;
            (file, es.n_trials())
        };
        summary.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.subject_id, file, n_trials, run.synth.rate_hz
        ));
    }
    write_text(&out.join("summary.txt"), &summary)?;
    write_manifest("synth", rc, &out)
}

pub fn cmd_preprocess(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("preprocess");
    ensure_dir(&out)?;
    let inputs: Vec<PathBuf> = if !run.data.recordings.is_empty() {
        run.data.recordings.clone()
    } else {
        sorted_files(&run.output_dir.join("synth"), "eegrec").unwrap_or_default()
    };
    if inputs.is_empty() {
        return Err(CliError::Input(
            "no recordings: list them under [data].recordings or run `synth` with continuous = true"
                .into(),
        ));
    }
    let p = &run.preprocess;
    let thresholds = RejectionThresholds {
        abs_amplitude_uv: p.reject_abs_amplitude_uv,
        channel_std_z: p.reject_channel_std_z,
        global_std_z: p.reject_global_std_z,
    };
    let mut summary = String::from("input\trate_in_hz\trate_out_hz\tevents\tepochs\tskipped\trejected\n");
    for input in &inputs {
        let rec = load_recording(input)
            .map_err(|e| CliError::Input(format!("loading {}: {e}", input.display())))?;
        let rate_in = rec.rate_hz;
        let bp = design_windowed_sinc(
            FilterKind::BandPass,
            (p.bandpass_hz[0], p.bandpass_hz[1]),
            (p.bandpass_transition_hz[0], p.bandpass_transition_hz[1]),
            rate_in,
        )
        .map_err(compute)?;
        let bs = design_windowed_sinc(
            FilterKind::BandStop,
            (p.bandstop_hz[0], p.bandstop_hz[1]),
            (p.bandstop_transition_hz[0], p.bandstop_transition_hz[1]),
            rate_in,
        )
        .map_err(compute)?;
        let mut rec = apply_fir(&rec, &bp).map_err(compute)?;
        rec = apply_fir(&rec, &bs).map_err(compute)?;
        rec = downsample(&rec, p.target_rate_hz).map_err(compute)?;
        if p.car {
            rec = common_average_reference(&rec).map_err(compute)?;
        }
        let n_events = rec.events.len();
        let baseline = p.baseline_window_ms.map(|w| (w[0], w[1]));
        let (mut es, skipped) = epoch(
            &rec,
            (p.epoch_window_ms[0], p.epoch_window_ms[1]),
            baseline,
        )
        .map_err(compute)?;
        let mut rejected = 0;
        if p.reject {
            let (kept, mask) = reject_artifacts(&es, &thresholds).map_err(compute)?;
            rejected = mask.iter().filter(|&&k| !k).count();
            es = kept;
        }
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("recording");
        let file = format!("{stem}.eegep");
        save_epochs(&es, &out.join(&file)).map_err(output)?;
        summary.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            input.display(),
            rate_in,
            es.rate_hz,
            n_events,
            es.n_trials(),
            skipped,
            rejected
        ));
    }
    write_text(&out.join("summary.txt"), &summary)?;
    write_manifest("preprocess", rc, &out)
}

/// Epoch inputs for the training commands: explicit [data].epochs if
/// given, otherwise the preprocess output, otherwise the synth output.
fn load_cohort(rc: &ResolvedConfig) -> Result<Vec<EpochSet>, CliError> {
    let run = &rc.run;
    let paths: Vec<PathBuf> = if !run.data.epochs.is_empty() {
        run.data.epochs.clone()
    } else {
        let pre = sorted_files(&run.output_dir.join("preprocess"), "eegep").unwrap_or_default();
        if !pre.is_empty() {
            pre
        } else {
            sorted_files(&run.output_dir.join("synth"), "eegep").unwrap_or_default()
        }
    };
    if paths.is_empty() {
        return Err(CliError::Input(
            "no epoch files: list them under [data].epochs or run `synth`/`preprocess` first"
                .into(),
        ));
    }
    let mut cohort = Vec::with_capacity(paths.len());
    for path in &paths {
        let es = load_epochs(path)
            .map_err(|e| CliError::Input(format!("loading {}: {e}", path.display())))?;
        let arch = &rc.run.arch;
        if es.n_channels() != arch.n_channels || es.n_time() != arch.n_time {
            return Err(CliError::Config(format!(
                "{}: epochs are {} channels x {} samples but [arch] expects {} x {}",
                path.display(),
                es.n_channels(),
                es.n_time(),
                arch.n_channels,
                arch.n_time
            )));
        }
        cohort.push(es);
    }
    cohort.sort_by_key(|es| es.subject_id);
    Ok(cohort)
}

pub fn cmd_train_intra(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("train_intra");
    ensure_dir(&out)?;
    let cohort = load_cohort(rc)?;
    let arch = run.arch.to_arch();
    let train_cfg = run.train.to_train(run.seed);
    let mut table = ResultsTable::new(COND_INTRA, &["subject", "fold", "accuracy"]);
    for es in &cohort {
        let res = run_intra(es, &arch, &train_cfg, run.eval.folds)
            .map_err(|e| compute_ctx(e, &format!("subject {}", es.subject_id)))?;
        for (fold, acc) in res.fold_accuracies.iter().enumerate() {
            table.push(&[es.subject_id.to_string(), fold.to_string()], *acc);
        }
    }
    table.save(&out.join("results.txt"))?;
    write_manifest("train-intra", rc, &out)
}

pub fn cmd_train_inter(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("train_inter");
    ensure_dir(&out)?;
    let cohort = load_cohort(rc)?;
    let arch = run.arch.to_arch();
    let train_cfg = run.train.to_train(run.seed);
    let res = run_inter_base(&cohort, &arch, &train_cfg)
        .map_err(|e| compute_ctx(e, "held-out subject evaluation"))?;
    let mut table = ResultsTable::new(COND_INTER, &["subject", "accuracy"]);
    for (id, acc) in res.subject_ids.iter().zip(&res.accuracies) {
        table.push(&[id.to_string()], *acc);
    }
    table.save(&out.join("results.txt"))?;
    write_manifest("train-inter", rc, &out)
}

pub fn cmd_finetune_sweep(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("finetune_sweep");
    ensure_dir(&out)?;
    let cohort = load_cohort(rc)?;
    let arch = run.arch.to_arch();
    let train_cfg = run.train.to_train(run.seed);
    let res = run_inter_finetuned(&cohort, &arch, &train_cfg, &run.eval.fractions)
        .map_err(|e| compute_ctx(e, "fine-tune sweep"))?;
    let mut table = ResultsTable::new(COND_SWEEP, &["subject", "fraction", "accuracy"]);
    for (si, id) in res.subject_ids.iter().enumerate() {
        for (fi, f) in res.fractions.iter().enumerate() {
            table.push(
                &[id.to_string(), format!("{f:.2}")],
                res.accuracies[si][fi],
            );
        }
    }
    table.save(&out.join("results.txt"))?;
    write_manifest("finetune-sweep", rc, &out)
}

/// Per-condition per-subject accuracy vectors from whichever results
/// files exist, in report order: intra, inter, then each sweep fraction.
fn collect_conditions(run_dir: &Path) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let mut conditions = Vec::new();
    let intra_path = run_dir.join("train_intra/results.txt");
    if intra_path.exists() {
        let t = ResultsTable::load(&intra_path)?;
        let per_subject: Vec<f64> = t
            .grouped(0)
            .into_iter()
            .map(|(_, folds)| folds.iter().sum::<f64>() / folds.len() as f64)
            .collect();
        conditions.push((COND_INTRA.to_string(), per_subject));
    }
    let inter_path = run_dir.join("train_inter/results.txt");
    if inter_path.exists() {
        let t = ResultsTable::load(&inter_path)?;
        let accs: Vec<f64> = t.rows.iter().map(|(_, a)| *a).collect();
        conditions.push((COND_INTER.to_string(), accs));
    }
    let sweep_path = run_dir.join("finetune_sweep/results.txt");
    if sweep_path.exists() {
        let t = ResultsTable::load(&sweep_path)?;
        for (fraction, accs) in t.grouped(1) {
            conditions.push((format!("finetune_{fraction}"), accs));
        }
    }
    if conditions.is_empty() {
        return Err(CliError::Input(format!(
            "no results under {}: run train-intra, train-inter, or finetune-sweep first",
            run_dir.display()
        )));
    }
    Ok(conditions)
}

pub fn cmd_stats(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("stats");
    ensure_dir(&out)?;
    let conditions = collect_conditions(&run.output_dir)?;
    let report = study_report(&conditions).map_err(compute)?;
    write_text(&out.join("report.txt"), &report)?;
    write_manifest("stats", rc, &out)
}

pub fn cmd_export(rc: &ResolvedConfig) -> Result<(), CliError> {
    let run = &rc.run;
    let out = run.output_dir.join("export");
    ensure_dir(&out)?;
    let mut wrote_any = false;

    let intra_path = run.output_dir.join("train_intra/results.txt");
    let mut per_subject: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    let mut add_column = |name: &str, pairs: Vec<(String, f64)>| {
        per_subject.push((name.to_string(), pairs));
    };
    if intra_path.exists() {
        let t = ResultsTable::load(&intra_path)?;
        // Fold-level series for per-subject spread plots.
        let mut folds = String::from("subject\tfold\taccuracy\n");
        for (keys, acc) in &t.rows {
            folds.push_str(&format!("{}\t{}\t{acc:.6}\n", keys[0], keys[1]));
        }
        write_text(&out.join("intra_folds.tsv"), &folds)?;
        wrote_any = true;
        add_column(
            COND_INTRA,
            t.grouped(0)
                .into_iter()
                .map(|(s, f)| (s, f.iter().sum::<f64>() / f.len() as f64))
                .collect(),
        );
    }
    let inter_path = run.output_dir.join("train_inter/results.txt");
    if inter_path.exists() {
        let t = ResultsTable::load(&inter_path)?;
        add_column(
            COND_INTER,
            t.rows
                .iter()
                .map(|(keys, acc)| (keys[0].clone(), *acc))
                .collect(),
        );
        wrote_any = true;
    }
    let sweep_path = run.output_dir.join("finetune_sweep/results.txt");
    if sweep_path.exists() {
        let t = ResultsTable::load(&sweep_path)?;
        let by_fraction = t.grouped(1);
        // Mean-over-subjects curve for the data-fraction plot.
        let mut curve = String::from("fraction\tmean_accuracy\tstd_accuracy\n");
        for (fraction, accs) in &by_fraction {
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            curve.push_str(&format!("{fraction}\t{mean:.6}\t{:.6}\n", var.sqrt()));
        }
        write_text(&out.join("sweep_curve.tsv"), &curve)?;
        wrote_any = true;
        for (fraction, accs) in by_fraction {
            let t2 = ResultsTable::load(&sweep_path)?;
            let subjects: Vec<String> = t2
                .rows
                .iter()
                .filter(|(keys, _)| keys[1] == fraction)
                .map(|(keys, _)| keys[0].clone())
                .collect();
            add_column(
                &format!("finetune_{fraction}"),
                subjects.into_iter().zip(accs).collect(),
            );
        }
    }
    if !wrote_any {
        return Err(CliError::Input(format!(
            "no results under {}: nothing to export",
            run.output_dir.display()
        )));
    }
    // Wide per-subject table: one row per subject, one column per
    // condition, blank where a condition lacks that subject.
    if !per_subject.is_empty() {
        let mut subjects: Vec<String> = Vec::new();
        for (_, pairs) in &per_subject {
            for (s, _) in pairs {
                if !subjects.contains(s) {
                    subjects.push(s.clone());
                }
            }
        }
        subjects.sort_by_key(|s| s.parse::<u64>().unwrap_or(u64::MAX));
        let mut wide = String::from("subject");
        for (name, _) in &per_subject {
            wide.push('\t');
            wide.push_str(name);
        }
        wide.push('\n');
        for s in &subjects {
            wide.push_str(s);
            for (_, pairs) in &per_subject {
                wide.push('\t');
                match pairs.iter().find(|(ps, _)| ps == s) {
                    Some((_, acc)) => wide.push_str(&format!("{acc:.6}")),
                    None => wide.push_str(""),
                }
            }
            wide.push('\n');
        }
        write_text(&out.join("per_subject_accuracy.tsv"), &wide)?;
    }
    write_manifest("export", rc, &out)
}

fn compute(e: eegdec::Error) -> CliError {
    CliError::Compute(format!("{e}"))
}

fn compute_ctx(e: eegdec::Error, ctx: &str) -> CliError {
    CliError::Compute(format!("{ctx}: {e}"))
}

fn output(e: eegdec::Error) -> CliError {
    CliError::Output(format!("{e}"))
}
