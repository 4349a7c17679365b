use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::manifest::{file_hash, Manifest, MANIFEST};
use super::RunConfig;
use crate::behavior::{load_policy, save_policy, train_bc};
use crate::data::{load_dataset, save_dataset, sidecar_path, split, Dataset};
use crate::dynamics::{load_ensemble, save_ensemble, train_ensemble, Ensemble, ModelRecord};
use crate::env::generate_dataset;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_policy, rank_plot_script, return_curve_script, sweep_d, sweep_rows, EvalReport,
    SweepRow,
};
use crate::jsonfile;
use crate::nn::{weights, PolicyNet};
use crate::search::{wsbc_search, ConstraintBox, SearchMode};

pub const CONFIG: &str = "config.json";
pub const DATASET: &str = "dataset.wsbc";
pub const PSI: &str = "psi.wsbw";
pub const THETA: &str = "theta.wsbw";

/// Summary of a search, stored next to `θ*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub mode: SearchMode,
    pub d: f64,
    pub alpha: Option<f64>,
    pub best_fitness: f64,
    pub mean_return: f64,
    pub penalty: f64,
    /// `max_i |θ*_i - ψ_i|` of the stored (f32) weights.
    pub max_distance: f64,
    pub param_count: usize,
}

fn resolved(cfg: &RunConfig) -> Result<RunConfig> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

fn file_name(path: &Path) -> Result<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))
}

fn parent(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn dataset_manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Loads a dataset, first checking it against its generation manifest when
/// one exists (ingested data may have none).
fn load_checked_dataset(path: &Path) -> Result<Dataset> {
    let mpath = dataset_manifest_path(path);
    if mpath.exists() {
        Manifest::load(&mpath)?.checked_output(&file_name(path)?, &parent(path))?;
    }
    load_dataset(path)
}

/// Checks every output of the stage directory `dir` against its manifest.
fn check_stage_dir(dir: &Path) -> Result<Manifest> {
    let m = Manifest::load(&dir.join(MANIFEST))?;
    for name in m.outputs.keys() {
        m.checked_output(name, dir)?;
    }
    Ok(m)
}

fn finish(mut m: Manifest, dir: &Path, files: &[String], path: &Path) -> Result<Manifest> {
    for f in files {
        m.add_output(dir, f)?;
    }
    jsonfile::write(path, &m)?;
    Ok(m)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates a dataset at `out`, with `<out>.json` (sidecar) and
/// `<out>.manifest.json`.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let cfg = resolved(cfg)?;
    let dir = parent(out);
    jsonfile::create_dir(&dir)?;
    let ds = generate_dataset(&cfg.generate)?;
    save_dataset(&ds, out)?;
    let mut m = Manifest::new("generate", &cfg);
    m.summary = json!({
        "episodes": ds.n_episodes(),
        "transitions": ds.n_transitions(),
        "generate_seed": cfg.generate.seed,
    });
    log::info!(
        "generated {} transitions in {} episodes",
        ds.n_transitions(),
        ds.n_episodes()
    );
    finish(
        m,
        &dir,
        &[file_name(out)?, file_name(&sidecar_path(out))?],
        &dataset_manifest_path(out),
    )
}

fn with_dataset_history(cfg: &RunConfig, ds: &Dataset) -> Result<RunConfig> {
    let mut cfg = resolved(cfg)?;
    cfg.align_history(ds.history_len);
    Ok(cfg)
}

/// Trains the transition-model ensemble on the training split of `data`.
pub fn train_models(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Manifest> {
    let ds = load_checked_dataset(data)?;
    let cfg = with_dataset_history(cfg, &ds)?;
    jsonfile::create_dir(out)?;
    let (train, val) = split(&ds, cfg.validation_fraction, cfg.stage_seed("split"))?;
    let base_seed = cfg.stage_seed("models");
    let (ensemble, trained) = train_ensemble(
        &train,
        &val,
        &cfg.models.train,
        cfg.models.ensemble_size,
        base_seed,
    )?;
    let records: Vec<ModelRecord> = trained
        .iter()
        .map(|t| ModelRecord::new(t, cfg.models.train.overshoot))
        .collect();
    let files = save_ensemble(out, &ensemble, &records)?;
    cfg.save(&out.join(CONFIG))?;
    let mut m = Manifest::new("train-models", &cfg);
    m.add_input("dataset", data, out)?;
    m.summary = json!({
        "base_seed": base_seed,
        "validation_loss": trained.iter().map(|t| t.validation_loss).collect::<Vec<_>>(),
        "epochs": trained.iter().map(|t| t.epochs).collect::<Vec<_>>(),
    });
    let names = files
        .iter()
        .map(|f| file_name(f))
        .collect::<Result<Vec<_>>>()?;
    finish(m, out, &names, &out.join(MANIFEST))
}

/// Clones the behavior policy from the training split of `data`.
pub fn train_behavior(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Manifest> {
    let ds = load_checked_dataset(data)?;
    let cfg = with_dataset_history(cfg, &ds)?;
    jsonfile::create_dir(out)?;
    let (train, val) = split(&ds, cfg.validation_fraction, cfg.stage_seed("split"))?;
    let seed = cfg.stage_seed("behavior");
    let clone = train_bc(&train, &val, &cfg.behavior, seed)?;
    let psi = out.join(PSI);
    save_policy(
        &psi,
        clone.weights.as_slice(),
        &clone.record(Some(file_hash(data)?)),
    )?;
    cfg.save(&out.join(CONFIG))?;
    let mut m = Manifest::new("train-bc", &cfg);
    m.add_input("dataset", data, out)?;
    m.summary = json!({
        "seed": seed,
        "train_mse": clone.train_mse,
        "validation_mse": clone.validation_mse,
        "epochs": clone.epochs,
    });
    finish(
        m,
        out,
        &[PSI.to_string(), file_name(&sidecar_path(&psi))?],
        &out.join(MANIFEST),
    )
}

struct Upstream {
    dataset: Dataset,
    ensemble: Ensemble,
    net: PolicyNet,
    psi: Vec<f64>,
}

fn load_upstream(data: &Path, models: &Path, behavior: &Path) -> Result<Upstream> {
    let dataset = load_checked_dataset(data)?;
    check_stage_dir(models)?;
    check_stage_dir(behavior)?;
    let (ensemble, _) = load_ensemble(models)?;
    let (psi, record) = load_policy(&behavior.join(PSI))?;
    Ok(Upstream {
        dataset,
        ensemble,
        net: record.net,
        psi: psi.0,
    })
}

fn search_box(psi: &[f64], mode: SearchMode, d: f64) -> Result<ConstraintBox> {
    let radius = match mode {
        SearchMode::Constrained => d,
        SearchMode::Penalized => f64::INFINITY,
    };
    ConstraintBox::new(psi.to_vec(), radius)
}

/// Runs the policy search and writes `θ*` rounded to storage precision
/// (staying inside the box in constrained mode).
pub fn search(
    cfg: &RunConfig,
    data: &Path,
    models: &Path,
    behavior: &Path,
    out: &Path,
) -> Result<Manifest> {
    let up = load_upstream(data, models, behavior)?;
    let cfg = with_dataset_history(cfg, &up.dataset)?;
    jsonfile::create_dir(out)?;
    let s = &cfg.search;
    let outcome = wsbc_search(&up.ensemble, &up.net, &up.psi, &up.dataset, s, |_, _| {})?;
    let bx = search_box(&up.psi, s.mode, s.d)?;
    let theta = bx.quantize_f32(&outcome.theta_star);
    weights::write(&out.join(THETA), &theta)?;
    let record = SearchRecord {
        mode: s.mode,
        d: s.d,
        alpha: outcome.alpha,
        best_fitness: outcome.best_fitness,
        mean_return: outcome.parts.mean_return,
        penalty: outcome.parts.penalty,
        max_distance: bx.distance(&theta),
        param_count: theta.len(),
    };
    jsonfile::write(&out.join("search.json"), &record)?;
    let mut csv = csv::Writer::from_path(out.join("fitness.csv"))
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    csv.write_record(["iteration", "best_fitness"])
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    for (i, f) in outcome.history.iter().enumerate() {
        csv.write_record([i.to_string(), f.to_string()])
            .map_err(|e| Error::Corrupt(e.to_string()))?;
    }
    csv.flush()
        .map_err(|e| Error::io(out.join("fitness.csv"), e))?;
    write_text(
        &out.join("fitness_plot.py"),
        &return_curve_script("fitness.csv"),
    )?;
    cfg.save(&out.join(CONFIG))?;
    let mut m = Manifest::new("search", &cfg);
    m.add_input("dataset", data, out)?;
    m.add_input("models", models, out)?;
    m.add_input("behavior", behavior, out)?;
    m.summary = serde_json::to_value(&record).map_err(|e| Error::json(out.join(MANIFEST), e))?;
    log::info!(
        "search finished: fitness {:.4}, max |theta - psi| = {:e}",
        record.best_fitness,
        record.max_distance
    );
    let files = ["search.json", THETA, "fitness.csv", "fitness_plot.py"].map(String::from);
    finish(m, out, &files, &out.join(MANIFEST))
}

/// Re-reads a search directory and checks the stored `θ*` against the box
/// around the stored `ψ`. Returns `max_i |θ*_i - ψ_i|`.
pub fn verify_search(dir: &Path) -> Result<f64> {
    let m = Manifest::load(&dir.join(MANIFEST))?;
    let theta = weights::read(&m.checked_output(THETA, dir)?)?;
    let record: SearchRecord = jsonfile::read(&m.checked_output("search.json", dir)?)?;
    let behavior = m.checked_input("behavior", dir)?;
    let (psi, _) = load_policy(&behavior.join(PSI))?;
    let bx = search_box(psi.as_slice(), record.mode, record.d)?;
    bx.verify(&theta)?;
    Ok(bx.distance(&theta))
}

fn write_report(report: &EvalReport, dir: &Path, stem: &str) -> Result<Vec<String>> {
    let json_name = format!("{stem}.json");
    let csv_name = format!("{stem}.csv");
    report.save_json(&dir.join(&json_name))?;
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .map_err(|e| Error::io(dir.join(&csv_name), e))?;
    std::fs::write(dir.join(&csv_name), buf).map_err(|e| Error::io(dir.join(&csv_name), e))?;
    Ok(vec![json_name, csv_name])
}

/// Evaluates the `θ*` of a search directory and its behavior clone on the
/// true plant. Refuses to run when the ensemble, the clone or `θ*` no longer
/// match the hashes recorded by the search.
pub fn evaluate(cfg: &RunConfig, search_dir: &Path, out: &Path) -> Result<Manifest> {
    let sm = Manifest::load(&search_dir.join(MANIFEST))?;
    sm.checked_input("models", search_dir)?;
    let behavior = sm.checked_input("behavior", search_dir)?;
    let theta = weights::read(&sm.checked_output(THETA, search_dir)?)?;
    let (psi, record) = load_policy(&behavior.join(PSI))?;
    let cfg = resolved(cfg)?;
    jsonfile::create_dir(out)?;
    let report = evaluate_policy(&record.net, &theta, &cfg.eval)?;
    let clone = evaluate_policy(&record.net, psi.as_slice(), &cfg.eval)?;
    log::info!(
        "evaluation: theta* mean {:.3} (p10 {:.3}), clone mean {:.3}",
        report.mean,
        report.tenth_percentile,
        clone.mean
    );
    let mut files = write_report(&report, out, "report")?;
    files.extend(write_report(&clone, out, "clone_report")?);
    cfg.save(&out.join(CONFIG))?;
    let mut m = Manifest::new("evaluate", &cfg);
    m.add_input("search", search_dir, out)?;
    m.add_input("behavior", &behavior, out)?;
    m.summary = json!({
        "mean": report.mean,
        "tenth_percentile": report.tenth_percentile,
        "standard_error": report.standard_error,
        "clone_mean": clone.mean,
        "clone_standard_error": clone.standard_error,
    });
    finish(m, out, &files, &out.join(MANIFEST))
}

/// Searches and evaluates every `(d, repetition)` pair and writes the
/// per-`d` summary (`sweep.csv`), all cells (`cells.json`) and a rank plot
/// script.
pub fn sweep(
    cfg: &RunConfig,
    data: &Path,
    models: &Path,
    behavior: &Path,
    out: &Path,
) -> Result<Manifest> {
    let up = load_upstream(data, models, behavior)?;
    let cfg = with_dataset_history(cfg, &up.dataset)?;
    jsonfile::create_dir(out)?;
    let seeds: Vec<u64> = (0..cfg.sweep.repetitions)
        .map(|r| cfg.sweep_seed(r))
        .collect();
    let cells = sweep_d(
        &up.ensemble,
        &up.net,
        &up.psi,
        &up.dataset,
        &cfg.search,
        &cfg.eval,
        &cfg.sweep.d_values,
        &seeds,
    )?;
    let rows = sweep_rows(&cells)?;
    let mut buf = Vec::new();
    SweepRow::write_csv(&rows, &mut buf).map_err(|e| Error::io(out.join("sweep.csv"), e))?;
    std::fs::write(out.join("sweep.csv"), buf).map_err(|e| Error::io(out.join("sweep.csv"), e))?;
    jsonfile::write(&out.join("cells.json"), &cells)?;
    write_text(&out.join("rank_plot.py"), &rank_plot_script("sweep.csv"))?;
    cfg.save(&out.join(CONFIG))?;
    let mut m = Manifest::new("sweep", &cfg);
    m.add_input("dataset", data, out)?;
    m.add_input("models", models, out)?;
    m.add_input("behavior", behavior, out)?;
    m.summary = serde_json::to_value(&rows).map_err(|e| Error::json(out.join(MANIFEST), e))?;
    let files = ["sweep.csv", "cells.json", "rank_plot.py"].map(String::from);
    finish(m, out, &files, &out.join(MANIFEST))
}

/// Generate, train both models, search and evaluate inside `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let cfg = resolved(cfg)?;
    jsonfile::create_dir(out)?;
    cfg.save(&out.join(CONFIG))?;
    let data = out.join(DATASET);
    generate(&cfg, &data)?;
    train_models(&cfg, &data, &out.join("models"))?;
    train_behavior(&cfg, &data, &out.join("behavior"))?;
    search(
        &cfg,
        &data,
        &out.join("models"),
        &out.join("behavior"),
        &out.join("search"),
    )?;
    evaluate(&cfg, &out.join("search"), &out.join("eval"))
}
