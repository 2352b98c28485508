//! AWP × RMP × depth ablation grid.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use amp2_core::data::generate_point_dataset;
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, ExperimentConfig, NetworkTemplate};
use crate::error::{BenchError, Result};
use crate::experiment::{mean, run_seed_on, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub depths: Vec<usize>,
    pub awp: Vec<bool>,
    pub rmp: Vec<bool>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            depths: vec![3],
            awp: vec![false, true],
            rmp: vec![false, true],
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" | "✓" => Some(true),
        "0" | "false" | "off" | "no" | "✗" => Some(false),
        _ => None,
    }
}

impl FromStr for GridSpec {
    type Err = BenchError;

    /// `depth=3,4,6;awp=0,1;rmp=0,1`; omitted axes keep their defaults.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || BenchError::Grid(s.to_string());
        let mut grid = GridSpec::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part.split_once('=').ok_or_else(bad)?;
            let items = values.split(',').map(str::trim);
            match key.trim() {
                "depth" => {
                    grid.depths = items.map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                }
                "awp" => grid.awp = items.map(|v| parse_bool(v).ok_or_else(bad)).collect::<Result<_>>()?,
                "rmp" => grid.rmp = items.map(|v| parse_bool(v).ok_or_else(bad)).collect::<Result<_>>()?,
                _ => return Err(bad()),
            }
        }
        if grid.depths.is_empty() || grid.awp.is_empty() || grid.rmp.is_empty() || grid.depths.contains(&0) {
            return Err(bad());
        }
        Ok(grid)
    }
}

impl GridSpec {
    /// Cells in table order: depth-major, then AWP, then RMP.
    pub fn cells(&self) -> Vec<(usize, Ablation)> {
        let mut out = Vec::new();
        for &depth in &self.depths {
            for &awp in &self.awp {
                for &rmp in &self.rmp {
                    out.push((depth, Ablation { awp, rmp }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub depth: usize,
    pub awp: bool,
    pub rmp: bool,
    pub config_hash: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Every run, grouped per row in row order.
    pub records: Vec<Vec<RunRecord>>,
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

impl AblationTable {
    pub fn row(&self, depth: usize, awp: bool, rmp: bool) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.depth == depth && r.awp == awp && r.rmp == rmp)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| blocks | AWP | RMP | mean acc (%) | std | runs |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            s += &format!(
                "| {} | {} | {} | {:.2} | {:.2} | {} |\n",
                r.depth,
                mark(r.awp),
                mark(r.rmp),
                r.mean,
                r.std,
                r.accuracies.len()
            );
        }
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["depth", "awp", "rmp", "mean_accuracy", "std", "runs", "config_hash"])?;
        for r in &self.rows {
            out.write_record([
                r.depth.to_string(),
                r.awp.to_string(),
                r.rmp.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.accuracies.len().to_string(),
                r.config_hash.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Copy of `base` with the block count and component switches applied.
pub fn cell_config(base: &ExperimentConfig, depth: usize, ablation: Ablation) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match &mut cfg.network {
        NetworkTemplate::PointNet(p) => p.blocks.depth_blocks = depth,
        NetworkTemplate::Explicit(_) => {
            return Err(BenchError::Config {
                path: "network.template".into(),
                reason: "depth sweeps need a generated template".into(),
            })
        }
    }
    cfg.ablation = ablation;
    cfg.name = format!("{}-d{depth}-awp{}-rmp{}", base.name, ablation.awp as u8, ablation.rmp as u8);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every (cell, seed) pair on `workers` threads. Each pair is
/// single-threaded and seeded, so results do not depend on `workers`.
pub fn run_ablation_grid(base: &ExperimentConfig, grid: &GridSpec, workers: usize) -> Result<AblationTable> {
    let cells = grid
        .cells()
        .into_iter()
        .map(|(d, a)| cell_config(base, d, a))
        .collect::<Result<Vec<_>>>()?;
    let data = generate_point_dataset(&base.dataset)?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| base.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<RunRecord>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cell, seed)) = jobs.get(j) else { break };
                let rec = run_seed_on(&cells[cell], &data, seed);
                *slots[j].lock().expect("slot lock") = Some(rec);
            });
        }
    });
    let mut results = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("job ran"))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for cfg in &cells {
        let recs: Vec<RunRecord> = results.by_ref().take(base.seeds.len()).collect();
        let accs: Vec<f64> = recs.iter().map(|r| r.final_test_accuracy).collect();
        let m = mean(accs.iter().copied());
        let var = if accs.len() > 1 {
            accs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (accs.len() - 1) as f64
        } else {
            0.0
        };
        rows.push(AblationRow {
            depth: match &cfg.network {
                NetworkTemplate::PointNet(p) => p.blocks.depth_blocks,
                NetworkTemplate::Explicit(s) => s.depth_blocks,
            },
            awp: cfg.ablation.awp,
            rmp: cfg.ablation.rmp,
            config_hash: cfg.hash(),
            accuracies: accs,
            mean: m,
            std: var.sqrt(),
        });
        records.push(recs);
    }
    Ok(AblationTable { rows, records })
}
