use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tenth-percentile scores of several algorithms on several datasets, as
/// published alongside the method (the last algorithm, `ours`, is the
/// weight-constrained search). Blank cells are missing results.
pub const TABLE1_CSV: &str = include_str!("../../fixtures/table1.csv");

/// One filled cell: the score and its printed label (e.g. `-134 (2)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub score: f64,
    pub label: String,
}

/// Algorithms × datasets matrix of scores, higher is better.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// `cells[algorithm][dataset]`; `None` marks a missing result.
    pub cells: Vec<Vec<Option<Cell>>>,
}

#[derive(Deserialize)]
struct Row {
    dataset: String,
    epsilon: String,
    algorithm: String,
    score: Option<f64>,
    #[allow(dead_code)]
    stderr: Option<f64>,
    cell: Option<String>,
}

impl ScoreTable {
    pub fn new(algorithms: Vec<String>, datasets: Vec<String>) -> Self {
        let cells = vec![vec![None; datasets.len()]; algorithms.len()];
        ScoreTable {
            algorithms,
            datasets,
            cells,
        }
    }

    /// The bundled published table. Dataset columns are named
    /// `<behavior policy>-<epsilon>`, e.g. `bad-0.0`.
    pub fn table1() -> Self {
        Self::from_csv(TABLE1_CSV.as_bytes()).expect("bundled table parses")
    }

    /// Reads `dataset,epsilon,algorithm,score,stderr,cell` rows; rows with an
    /// empty score are missing cells. Order of first appearance fixes the
    /// row and column order.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut table = ScoreTable::default();
        let mut rd = csv::Reader::from_reader(reader);
        for row in rd.deserialize::<Row>() {
            let row = row.map_err(|e| Error::Corrupt(format!("score table: {e}")))?;
            let column = format!("{}-{}", row.dataset, row.epsilon);
            let a = table.algorithm_index_or_insert(&row.algorithm);
            let d = table.dataset_index_or_insert(&column);
            if let Some(score) = row.score {
                let label = row.cell.unwrap_or_else(|| score.to_string());
                table.cells[a][d] = Some(Cell { score, label });
            }
        }
        Ok(table)
    }

    /// Writes one row per cell, in the format read by [`ScoreTable::from_csv`]
    /// with the column name split at its last `-`.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Corrupt(format!("score table: {e}"));
        w.write_record(["dataset", "epsilon", "algorithm", "score", "stderr", "cell"])
            .map_err(io)?;
        for (d, name) in self.datasets.iter().enumerate() {
            let (ds, eps) = name.rsplit_once('-').unwrap_or((name, ""));
            for (a, alg) in self.algorithms.iter().enumerate() {
                let (score, label) = match &self.cells[a][d] {
                    Some(c) => (c.score.to_string(), c.label.clone()),
                    None => (String::new(), String::new()),
                };
                w.write_record([ds, eps, alg, &score, "", &label])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Corrupt(e.to_string()))
    }

    fn algorithm_index_or_insert(&mut self, name: &str) -> usize {
        if let Some(i) = self.algorithms.iter().position(|a| a == name) {
            return i;
        }
        self.algorithms.push(name.to_string());
        self.cells.push(vec![None; self.datasets.len()]);
        self.algorithms.len() - 1
    }

    fn dataset_index_or_insert(&mut self, name: &str) -> usize {
        if let Some(i) = self.datasets.iter().position(|d| d == name) {
            return i;
        }
        self.datasets.push(name.to_string());
        for row in &mut self.cells {
            row.push(None);
        }
        self.datasets.len() - 1
    }

    pub fn algorithm(&self, name: &str) -> Option<usize> {
        self.algorithms.iter().position(|a| a == name)
    }

    pub fn dataset(&self, name: &str) -> Option<usize> {
        self.datasets.iter().position(|d| d == name)
    }

    pub fn set(&mut self, algorithm: &str, dataset: &str, score: f64) {
        let a = self.algorithm_index_or_insert(algorithm);
        let d = self.dataset_index_or_insert(dataset);
        self.cells[a][d] = Some(Cell {
            score,
            label: score.to_string(),
        });
    }

    pub fn get(&self, algorithm: &str, dataset: &str) -> Option<&Cell> {
        self.cells[self.algorithm(algorithm)?][self.dataset(dataset)?].as_ref()
    }

    /// Columns holding at least two scores.
    pub fn populated_columns(&self) -> Vec<usize> {
        (0..self.datasets.len())
            .filter(|&d| self.cells.iter().filter(|row| row[d].is_some()).count() >= 2)
            .collect()
    }
}

/// Per-column ranks and their per-algorithm means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[algorithm][dataset]`: 1 is best; ties share the average of the
    /// ranks they span; `None` for missing or excluded cells.
    pub ranks: Vec<Vec<Option<f64>>>,
    /// Mean rank over the columns where the algorithm was ranked.
    pub mean_rank: Vec<Option<f64>>,
    /// Columns left out for holding fewer than two scores.
    pub excluded: Vec<String>,
}

impl RankSummary {
    pub fn rank(&self, algorithm: &str, dataset: &str) -> Option<f64> {
        let a = self.algorithms.iter().position(|x| x == algorithm)?;
        let d = self.datasets.iter().position(|x| x == dataset)?;
        self.ranks[a][d]
    }

    pub fn mean(&self, algorithm: &str) -> Option<f64> {
        self.mean_rank[self.algorithms.iter().position(|x| x == algorithm)?]
    }
}

/// Ranks algorithms within every dataset column (descending score) and
/// averages each algorithm's ranks over the columns where it has a score.
pub fn average_rank(table: &ScoreTable) -> Result<RankSummary> {
    if table.algorithms.len() < 2 {
        return Err(Error::InvalidParameter(
            "ranking needs at least two algorithms".into(),
        ));
    }
    let n_alg = table.algorithms.len();
    let mut ranks = vec![vec![None; table.datasets.len()]; n_alg];
    let mut excluded = Vec::new();
    for (d, name) in table.datasets.iter().enumerate() {
        let scored: Vec<(usize, f64)> = (0..n_alg)
            .filter_map(|a| table.cells[a][d].as_ref().map(|c| (a, c.score)))
            .collect();
        if scored.len() < 2 {
            log::warn!("column {name} has fewer than two scores and is excluded from ranking");
            excluded.push(name.clone());
            continue;
        }
        for &(a, s) in &scored {
            let better = scored.iter().filter(|(_, t)| *t > s).count();
            let equal = scored.iter().filter(|(_, t)| *t == s).count();
            // positions better+1 ..= better+equal, averaged
            ranks[a][d] = Some(better as f64 + (equal as f64 + 1.0) / 2.0);
        }
    }
    let mean_rank = ranks
        .iter()
        .map(|row| {
            let r: Vec<f64> = row.iter().flatten().copied().collect();
            (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
        })
        .collect();
    Ok(RankSummary {
        algorithms: table.algorithms.clone(),
        datasets: table.datasets.clone(),
        ranks,
        mean_rank,
        excluded,
    })
}
