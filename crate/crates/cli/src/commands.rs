//! Subcommand bodies. Each writes its human-readable output to `out` and its
//! artifacts under the configured output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use qvc_core::circuit::build_block;
use qvc_core::data::{crossval_run, ensemble_predict, load_csv, make_folds, misclassification_rate, Dataset, Summary};
use qvc_core::encoding::Preprocessor;
use qvc_core::experiments::{noise_sweep, propagation_bound_check, NoiseSpec};
use qvc_core::gradient::parity_suite;
use qvc_core::seed;

use crate::model_file::{ModelFile, Provenance};
use crate::{CliError, RunConfig};

// Seed stream tags for the command-level experiments.
const FOLDS: u64 = 0xF0;
const NOISE: u64 = 0x4E;
const BOUND: u64 = 0xB0;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load_data(cfg: &RunConfig, path: &Path) -> Result<Dataset, CliError> {
    let schema = cfg.schema()?;
    let loaded = load_csv(path, &schema).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if loaded.rejected_rows > 0 {
        eprintln!("{}: skipped {} rows with missing values", path.display(), loaded.rejected_rows);
    }
    Ok(loaded.dataset)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?))
}

fn json_line<T: Serialize>(w: &mut impl Write, value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w, "{line}").map_err(|e| CliError::Io(e.to_string()))
}

fn cell(s: &Summary) -> String {
    format!("{:.3}±{:.3}", s.mean, s.std)
}

fn config_err(e: qvc_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(cfg, &cfg.data_path()?)?;
    let setup = cfg.setup(data.n_features())?;
    let pre = setup.preprocessor(data.n_features()).map_err(config_err)?;
    let models = setup.train_ensemble(&data, &[])?;

    let hash = cfg.hash();
    let file = ModelFile::from_models(
        setup.architecture.clone(),
        pre,
        data.class_names().to_vec(),
        &models,
        Provenance {
            seed: cfg.seed()?,
            config_hash: hash.clone(),
        },
    );
    let model_path = cfg.model_path();
    file.save(&model_path)?;

    let dir = cfg.out_dir();
    let mut log = create(&dir, "metrics.jsonl")?;
    for m in &models {
        for e in &m.metrics {
            json_line(
                &mut log,
                &json!({ "config_hash": hash, "positive_class": m.positive_class, "metrics": e }),
            )?;
        }
    }
    log.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let eval = setup.evaluation;
    let preds = data
        .features()
        .iter()
        .enumerate()
        .map(|(i, x)| ensemble_predict(&models, x, eval.fork(&[i as u64])))
        .collect::<qvc_core::Result<Vec<_>>>()?;
    let err = misclassification_rate(&preds, data.labels())?;
    let w = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "trained {} classifier(s) on {} samples", models.len(), data.len()).map_err(w)?;
    for m in &models {
        if let Some(last) = m.metrics.last() {
            writeln!(
                out,
                "  class {:<10} cost {:.6}  train error {:.3}",
                data.class_names()[m.positive_class],
                last.cost,
                last.train_error
            )
            .map_err(w)?;
        }
    }
    writeln!(out, "training error {err:.3}").map_err(w)?;
    writeln!(out, "model written to {}", model_path.display()).map_err(w)?;
    Ok(())
}

pub fn predict(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let file = ModelFile::load(&cfg.model_path())?;
    let models = file.to_models()?;
    let data = load_data(cfg, &cfg.data_path()?)?;
    if data.n_features() != file.preprocessor.input_dim {
        return Err(CliError::Data(format!(
            "model expects {} features, data has {}",
            file.preprocessor.input_dim,
            data.n_features()
        )));
    }
    let eval = cfg.estimator()?;
    let w = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "row,predicted,actual").map_err(w)?;
    let mut wrong = 0usize;
    for (i, (x, &l)) in data.features().iter().zip(data.labels()).enumerate() {
        let class = ensemble_predict(&models, x, eval.fork(&[i as u64]))?;
        let predicted = &file.class_names[class];
        let actual = &data.class_names()[l];
        if predicted != actual {
            wrong += 1;
        }
        writeln!(out, "{i},{predicted},{actual}").map_err(w)?;
    }
    writeln!(out, "# error {:.3}", wrong as f64 / data.len() as f64).map_err(w)?;
    Ok(())
}

pub fn crossval(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(cfg, &cfg.data_path()?)?;
    let setup = cfg.setup(data.n_features())?;
    let (k, reps) = cfg.folds()?;
    let plan = make_folds(&data, k, reps, seed::derive(cfg.seed()?, &[FOLDS])).map_err(|e| CliError::Data(e.to_string()))?;
    let report = crossval_run(&data, &setup, &plan)?;

    let hash = cfg.hash();
    let mut log = create(&cfg.out_dir(), "crossval.jsonl")?;
    for c in &report.cells {
        json_line(&mut log, &json!({ "config_hash": hash, "cell": c }))?;
    }
    for t in &report.tasks {
        json_line(&mut log, &json!({ "config_hash": hash, "task": t }))?;
    }
    json_line(
        &mut log,
        &json!({
            "config_hash": hash,
            "summary": {
                "train": report.train, "test": report.test,
                "ensemble_train": report.ensemble_train, "ensemble_test": report.ensemble_test,
                "baseline_test": report.baseline_test,
            }
        }),
    )?;
    log.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let w = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(
        out,
        "{} samples, {} classes, {k}-fold x {reps}, {} qubits, ranges {:?}",
        data.len(),
        data.n_classes(),
        setup.architecture.n_qubits,
        setup.architecture.ranges
    )
    .map_err(w)?;
    writeln!(out, "{:<16} {:<14} {:<14} train/test", "", "train", "test").map_err(w)?;
    let row = |out: &mut dyn Write, name: &str, tr: &Summary, te: &Summary| {
        writeln!(out, "{name:<16} {:<14} {:<14} {:.3}/{:.3}", cell(tr), cell(te), tr.mean, te.mean)
    };
    if report.per_class.len() > 1 {
        for (c, tr, te) in &report.per_class {
            row(out, &format!("class {}", data.class_names()[*c]), tr, te).map_err(w)?;
        }
    }
    row(out, "averaged", &report.train, &report.test).map_err(w)?;
    row(out, "ensemble", &report.ensemble_train, &report.ensemble_test).map_err(w)?;
    writeln!(out, "{:<16} {:<14} {:<14}", "majority", "-", cell(&report.baseline_test)).map_err(w)?;
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let pc = cfg.parity_config()?;
    let r = parity_suite(&pc)?;
    let w = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(
        out,
        "gradient parity: {} instances, {} parameters, qubits {}..={}, h {:e}",
        r.instances, r.parameters, pc.min_qubits, pc.max_qubits, pc.h
    )
    .map_err(w)?;
    writeln!(out, "max absolute deviation  {:.3e}", r.max_abs_dev).map_err(w)?;
    writeln!(out, "max relative deviation  {:.3e}", r.max_rel_dev).map_err(w)?;
    writeln!(out, "violations              {}", r.violations).map_err(w)?;
    if r.passed() {
        writeln!(out, "PASS").map_err(w)?;
        Ok(())
    } else {
        writeln!(out, "FAIL").map_err(w)?;
        Err(CliError::Failure(format!(
            "{} of {} parameters outside tolerance",
            r.violations, r.parameters
        )))
    }
}

pub fn noise(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let file = ModelFile::load(&cfg.model_path())?;
    let models = file.to_models()?;
    let path = cfg.test_data_path().map(Ok).unwrap_or_else(|| cfg.data_path())?;
    let test = load_data(cfg, &path)?;
    let eval = cfg.estimator()?;
    let root = cfg.seed()?;
    let (target, distribution, trials) = (cfg.noise_target()?, cfg.noise_distribution()?, cfg.noise_trials()?);

    let hash = cfg.hash();
    let mut log = create(&cfg.out_dir(), "noise.jsonl")?;
    let w = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "{:<10} {:>10} {:>10} {:>10} {:>10}", "level", "mean", "std", "max", "min").map_err(w)?;
    for (i, &level) in cfg.noise_levels()?.iter().enumerate() {
        let spec = NoiseSpec {
            level,
            target,
            trials,
            seed: seed::derive(root, &[NOISE, i as u64]),
            distribution,
        };
        let r = noise_sweep(&models, &test, &spec, eval)?;
        json_line(&mut log, &json!({ "config_hash": hash, "noise": r }))?;
        let note = if r.relative { "" } else { "  (absolute: baseline error 0)" };
        writeln!(
            out,
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}{note}",
            level, r.mean, r.std, r.max, r.min
        )
        .map_err(w)?;
    }

    let (delta, bound_trials) = cfg.bound()?;
    let spec = &models[0].classifier.spec;
    let b = propagation_bound_check(spec, &models[0].classifier.theta, delta, bound_trials, seed::derive(root, &[BOUND]))?;
    json_line(&mut log, &json!({ "config_hash": hash, "bound": b }))?;
    log.flush().map_err(w)?;
    writeln!(
        out,
        "bound: delta {:e}, {} gates, 4Ld = {:.3e}, max |psi'-psi| = {:.3e}, violations {}/{}",
        b.delta, b.gates, b.bound, b.max_deviation, b.violations, b.trials
    )
    .map_err(w)?;
    Ok(())
}

pub fn describe(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let input_dim = match cfg.data_path() {
        Ok(p) => Some(load_data(cfg, &p)?.n_features()),
        Err(_) => cfg.input_dim()?,
    };
    let arch = match input_dim {
        Some(d) => cfg.architecture(d)?,
        None if !cfg.get("n_qubits").is_empty() => cfg.architecture(0)?,
        None => return Err(CliError::Config("describe needs data, input_dim or n_qubits".into())),
    };
    let spec = arch.build().map_err(config_err)?;
    let w = |e: std::io::Error| CliError::Io(e.to_string());
    if let Some(d) = input_dim {
        let pre = Preprocessor::new(d, cfg.get("pad_value").parse().unwrap_or(0.0), cfg.get("copies").parse().unwrap_or(1))
            .map_err(config_err)?;
        writeln!(
            out,
            "input: {d} features, padded to {}, {} cop{} -> {} qubits",
            pre.padded_dim(),
            pre.copies,
            if pre.copies == 1 { "y" } else { "ies" },
            pre.n_qubits()
        )
        .map_err(w)?;
    }
    writeln!(out, "qubits: {}", arch.n_qubits).map_err(w)?;
    for (b, &r) in arch.ranges.iter().enumerate() {
        let slots = build_block(arch.n_qubits, r).map_err(config_err)?;
        let controlled = slots.iter().filter(|s| s.control.is_some()).count();
        writeln!(
            out,
            "block {}: range {r}, {} single + {controlled} controlled",
            b + 1,
            slots.len() - controlled
        )
        .map_err(w)?;
    }
    if arch.final_gate {
        writeln!(out, "final single gate on qubit 0").map_err(w)?;
    }
    writeln!(
        out,
        "{} gates, {} parameters ({} circuit + 1 bias)",
        spec.gate_count(),
        spec.param_len() + 1,
        spec.param_len()
    )
    .map_err(w)?;
    Ok(())
}
