//! Result matrices, win counts and their CSV / Markdown renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::Method;
use super::runner::CellResult;
use crate::error::Result;
use crate::tsf::DatasetId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub manifest_hash: String,
    pub master_seed: u64,
    pub datasets: Vec<DatasetId>,
    pub methods: Vec<Method>,
    /// Observed prefix length per target, `None` where preparation failed.
    pub prefix_lengths: Vec<Option<usize>>,
    /// Row-major: dataset, then method.
    pub cells: Vec<CellResult>,
}

/// Best method of one dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowWinner {
    /// Index into `methods`; `None` if no cell of the row has a score.
    pub winner: Option<usize>,
    /// Another method reached the same minimum.
    pub tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeadToHead {
    pub a_wins: usize,
    pub b_wins: usize,
    pub ties: usize,
}

fn score(c: &CellResult) -> Option<f64> {
    c.mase.filter(|v| v.is_finite())
}

impl EvalReport {
    pub fn cell(&self, dataset: usize, method: usize) -> &CellResult {
        &self.cells[dataset * self.methods.len() + method]
    }

    pub fn method_index(&self, method: Method) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    pub fn mase(&self, dataset: usize, method: Method) -> Option<f64> {
        self.method_index(method).and_then(|j| self.cell(dataset, j).mase)
    }

    /// Unique minimum per row; ties go to the earlier method.
    pub fn row_winners(&self) -> Vec<RowWinner> {
        (0..self.datasets.len())
            .map(|i| {
                let mut best: Option<(usize, f64)> = None;
                let mut tie = false;
                for j in 0..self.methods.len() {
                    let Some(v) = score(self.cell(i, j)) else { continue };
                    match best {
                        Some((_, b)) if v == b => tie = true,
                        Some((_, b)) if v > b => {}
                        _ => {
                            best = Some((j, v));
                            tie = false;
                        }
                    }
                }
                RowWinner {
                    winner: best.map(|b| b.0),
                    tie,
                }
            })
            .collect()
    }

    pub fn win_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.methods.len()];
        for w in self.row_winners() {
            if let Some(j) = w.winner {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Rows where both methods have a score, compared pairwise.
    pub fn head_to_head(&self, a: Method, b: Method) -> HeadToHead {
        let mut out = HeadToHead::default();
        let (Some(ja), Some(jb)) = (self.method_index(a), self.method_index(b)) else {
            return out;
        };
        for i in 0..self.datasets.len() {
            if let (Some(x), Some(y)) = (score(self.cell(i, ja)), score(self.cell(i, jb))) {
                if x < y {
                    out.a_wins += 1;
                } else if y < x {
                    out.b_wins += 1;
                } else {
                    out.ties += 1;
                }
            }
        }
        out
    }

    /// Mean MASE of a method over rows where it has a score.
    pub fn mean_mase(&self, method: Method) -> Option<f64> {
        let j = self.method_index(method)?;
        let vals: Vec<f64> = (0..self.datasets.len()).filter_map(|i| score(self.cell(i, j))).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    /// `dataset,method,mase,excluded,seed,manifest_hash`; failed cells leave `mase` empty.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "method", "mase", "excluded", "seed", "manifest_hash"])?;
        for c in &self.cells {
            let mase = c.mase.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                c.dataset.as_str(),
                c.method.name(),
                &mase,
                &c.excluded.to_string(),
                &c.seed.to_string(),
                &self.manifest_hash,
            ])?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    pub fn to_markdown(&self) -> String {
        let winners = self.row_winners();
        let mut s = String::new();
        let _ = writeln!(s, "# Leave-one-out MASE\n");
        let _ = writeln!(s, "manifest `{}`, master seed {}\n", self.manifest_hash, self.master_seed);
        s.push_str("| Dataset | Prefix |");
        for m in &self.methods {
            let _ = write!(s, " {m} |");
        }
        s.push_str("\n|---|---:|");
        s.push_str(&"---:|".repeat(self.methods.len()));
        s.push('\n');
        for (i, id) in self.datasets.iter().enumerate() {
            let prefix = self.prefix_lengths[i].map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            let _ = write!(s, "| {id} | {prefix} |");
            for j in 0..self.methods.len() {
                let c = self.cell(i, j);
                let text = match c.mase {
                    Some(v) if winners[i].winner == Some(j) => format!("**{v:.3}**"),
                    Some(v) => format!("{v:.3}"),
                    None => "failed".into(),
                };
                let _ = write!(s, " {text} |");
            }
            s.push('\n');
        }
        let counts = self.win_counts();
        let rows = self.datasets.len().max(1) as f64;
        s.push_str("| Wins | |");
        for c in &counts {
            let _ = write!(s, " {c} |");
        }
        s.push_str("\n| % Wins | |");
        for c in &counts {
            let _ = write!(s, " {:.1} |", 100.0 * *c as f64 / rows);
        }
        s.push('\n');
        let ties = winners.iter().filter(|w| w.tie).count();
        if ties > 0 {
            let _ = writeln!(s, "\n{ties} row(s) tied; ties go to the earlier column.");
        }
        let failed = self.failed_cells().count();
        if failed > 0 {
            let _ = writeln!(s, "\n{failed} failed cell(s):\n");
            for c in self.failed_cells() {
                let _ = writeln!(s, "- {} / {}: {}", c.dataset, c.method, c.error.as_deref().unwrap_or(""));
            }
        }
        s
    }

    /// Writes `results.csv`, `summary.md` and `report.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("summary.md"), self.to_markdown())?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
