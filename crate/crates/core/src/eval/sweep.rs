use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    average_rank, evaluate_policy, mean, percentile, standard_error, EvalConfig, EvalReport,
    ScoreTable,
};
use crate::data::Dataset;
use crate::dynamics::Ensemble;
use crate::error::{Error, Result};
use crate::nn::PolicyNet;
use crate::search::{wsbc_search, ConstraintBox, SearchConfig, SearchMode};

/// One `(d, seed)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub d: f64,
    pub seed: u64,
    pub best_fitness: f64,
    pub report: EvalReport,
}

/// Per-`d` summary over seeds of the seeds' mean evaluation returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: f64,
    pub seeds: usize,
    pub tenth_percentile: f64,
    pub mean: f64,
    pub standard_error: f64,
    /// Rank of this `d` among all swept values by tenth percentile (1 = best).
    pub rank: f64,
}

/// Runs a search and an evaluation for every `(d, seed)` pair, `d` major.
/// The search seed is the cell's seed; the evaluation episodes are the same
/// for every cell. Weights are rounded to storage precision before
/// evaluation, as they would be when saved.
#[allow(clippy::too_many_arguments)]
pub fn sweep_d(
    ensemble: &Ensemble,
    net: &PolicyNet,
    psi: &[f64],
    dataset: &Dataset,
    search: &SearchConfig,
    eval: &EvalConfig,
    d_values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepCell>> {
    if d_values.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "a sweep needs at least one d and one seed".into(),
        ));
    }
    let mut cells = Vec::with_capacity(d_values.len() * seeds.len());
    for &d in d_values {
        for &seed in seeds {
            let mut cfg = search.clone();
            cfg.d = d;
            cfg.swarm.seed = seed;
            let out = wsbc_search(ensemble, net, psi, dataset, &cfg, |_, _| {})?;
            let radius = if cfg.mode == SearchMode::Constrained {
                d
            } else {
                f64::INFINITY
            };
            let theta = ConstraintBox::new(psi.to_vec(), radius)?.quantize_f32(&out.theta_star);
            let report = evaluate_policy(net, &theta, eval)?;
            log::info!(
                "sweep d = {d}, seed = {seed}: mean return {:.3}",
                report.mean
            );
            cells.push(SweepCell {
                d,
                seed,
                best_fitness: out.best_fitness,
                report,
            });
        }
    }
    Ok(cells)
}

/// Groups cells by `d` (first-appearance order) and ranks the groups.
pub fn sweep_rows(cells: &[SweepCell]) -> Result<Vec<SweepRow>> {
    let mut ds: Vec<f64> = Vec::new();
    for c in cells {
        if !ds.contains(&c.d) {
            ds.push(c.d);
        }
    }
    let mut rows = Vec::new();
    let mut table = ScoreTable::default();
    for &d in &ds {
        let means: Vec<f64> = cells
            .iter()
            .filter(|c| c.d == d)
            .map(|c| c.report.mean)
            .collect();
        let p10 = percentile(&means, 10.0)?;
        table.set(&d.to_string(), "sweep", p10);
        rows.push(SweepRow {
            d,
            seeds: means.len(),
            tenth_percentile: p10,
            mean: mean(&means),
            standard_error: standard_error(&means),
            rank: 1.0,
        });
    }
    if rows.len() >= 2 {
        let ranks = average_rank(&table)?;
        for r in &mut rows {
            r.rank = ranks.rank(&r.d.to_string(), "sweep").unwrap_or(1.0);
        }
    }
    Ok(rows)
}

impl SweepRow {
    pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "d,seeds,tenth_percentile,mean,standard_error,rank")?;
        for r in rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.d, r.seeds, r.tenth_percentile, r.mean, r.standard_error, r.rank
            )?;
        }
        Ok(())
    }
}

/// Python script plotting tenth percentile and rank against `d` from the
/// sweep CSV `csv_name` (relative to the script's directory).
pub fn rank_plot_script(csv_name: &str) -> String {
    format!(
        r#"import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{csv_name}")) as f:
    rows = list(csv.DictReader(f))
d = [float(r["d"]) for r in rows]
p10 = [float(r["tenth_percentile"]) for r in rows]
rank = [float(r["rank"]) for r in rows]

fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.5))
a.plot(d, p10, marker="o")
a.set_xscale("log")
a.set_xlabel("d")
a.set_ylabel("tenth percentile return")
b.plot(d, rank, marker="o")
b.set_xscale("log")
b.set_xlabel("d")
b.set_ylabel("rank")
b.invert_yaxis()
fig.tight_layout()
fig.savefig(os.path.join(here, "rank_vs_d.png"), dpi=150)
"#
    )
}

/// Python script plotting the best fitness per iteration from a search's
/// `iteration,best_fitness` CSV.
pub fn return_curve_script(csv_name: &str) -> String {
    format!(
        r#"import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{csv_name}")) as f:
    rows = list(csv.DictReader(f))
it = [int(r["iteration"]) for r in rows]
best = [float(r["best_fitness"]) for r in rows]

plt.figure(figsize=(5, 3.5))
plt.plot(it, best)
plt.xlabel("iteration")
plt.ylabel("best fitness")
plt.tight_layout()
plt.savefig(os.path.join(here, "fitness.png"), dpi=150)
"#
    )
}
