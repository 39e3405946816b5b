//! Table formats.
//!
//! Sweep tables (`sweep_cost.csv`, `sweep_budget.csv`, `compare.csv`):
//!
//! ```text
//! row,parameter,mean_reward,std_reward,normalized_reward,mean_consulted,max_consulted,relative_calls,auc_per_episode,auc_window,success_rate
//! ```
//!
//! `normalized_reward` divides by the DEEP-only anchor's mean reward. Anchor
//! rows carry an empty `parameter`.
//!
//! Heatmaps (`heatmap.csv`): `location,name,count,share`, with `share` empty
//! when no activation occurred.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, Bundle, EvalConfig, EvalMetrics, Workbench};
use crate::envs::{Environment, Featurizer};
use crate::error::{Error, Result};
use crate::trainer::StepRecord;

const TABLE_HEADER: &str = "row,parameter,mean_reward,std_reward,normalized_reward,mean_consulted,max_consulted,relative_calls,auc_per_episode,auc_window,success_rate";

fn table_row(out: &mut String, row: &str, parameter: &str, m: &EvalMetrics, norm: f64) {
    let normalized = if norm != 0.0 { m.mean_reward / norm } else { f64::NAN };
    let _ = writeln!(
        out,
        "{row},{parameter},{},{},{},{},{},{},{},{},{}",
        m.mean_reward,
        m.std_reward,
        normalized,
        m.mean_consulted,
        m.max_consulted,
        m.relative_calls,
        m.auc_per_episode,
        m.auc_window,
        m.success_rate
    );
}

/// `sqrt((s_a^2 + s_b^2) / 2)` over the per-seed mean rewards.
pub fn pooled_std(a: &EvalMetrics, b: &EvalMetrics) -> f64 {
    ((a.std_reward.powi(2) + b.std_reward.powi(2)) / 2.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter_name: String,
    pub rows: Vec<SweepRow>,
    pub quick_only: EvalMetrics,
    pub deep_only: EvalMetrics,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TABLE_HEADER}\n");
        let norm = self.deep_only.mean_reward;
        for r in &self.rows {
            table_row(&mut out, &r.metrics.label, &r.parameter.to_string(), &r.metrics, norm);
        }
        table_row(&mut out, "quick_only", "", &self.quick_only, norm);
        table_row(&mut out, "deep_only", "", &self.deep_only, norm);
        out
    }
}

fn sweep<E, F>(
    bench: &Workbench<E, F>,
    name: &str,
    grid: &[f64],
    bundles: Vec<Bundle>,
    config: &EvalConfig,
) -> Result<SweepTable>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    if grid.is_empty() {
        return Err(Error::invalid(format!("{name} grid is empty")));
    }
    let mut all = bundles;
    all.push(Bundle::always_quick());
    all.push(Bundle::always_deep());
    let mut metrics = all.par_iter().map(|b| evaluate(bench, b, config)).collect::<Result<Vec<_>>>()?;
    let deep_only = metrics.pop().expect("anchor");
    let quick_only = metrics.pop().expect("anchor");
    let rows = grid.iter().zip(metrics).map(|(&parameter, metrics)| SweepRow { parameter, metrics }).collect();
    Ok(SweepTable { parameter_name: name.to_string(), rows, quick_only, deep_only })
}

/// One plain-switching row per switch cost, plus QUICK-only and DEEP-only anchors.
pub fn sweep_cost<E, F>(bench: &Workbench<E, F>, costs: &[f64], config: &EvalConfig) -> Result<SweepTable>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::invalid(format!("cost {c} must be finite and >= 0")));
    }
    let bundles = costs.iter().map(|&c| Bundle::londi(c)).collect();
    sweep(bench, "cost", costs, bundles, config)
}

/// One budgeted row per budget, plus anchors.
pub fn sweep_budget<E, F>(
    bench: &Workbench<E, F>,
    budgets: &[u32],
    penalty: f64,
    cost: f64,
    config: &EvalConfig,
) -> Result<SweepTable>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    let bundles = budgets.iter().map(|&n| Bundle::londi_b(n, penalty, cost)).collect();
    let grid: Vec<f64> = budgets.iter().map(|&n| n as f64).collect();
    sweep(bench, "budget", &grid, bundles, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiff {
    pub a: String,
    pub b: String,
    pub mean_diff: f64,
    pub pooled_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<EvalMetrics>,
    pub pairs: Vec<PairDiff>,
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&EvalMetrics> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let norm = self.row("deep_only").map_or(f64::NAN, |d| d.mean_reward);
        let mut out = format!("{TABLE_HEADER}\n");
        for r in &self.rows {
            table_row(&mut out, &r.label, "", r, norm);
        }
        out
    }

    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("a,b,mean_diff,pooled_std\n");
        for p in &self.pairs {
            let _ = writeln!(out, "{},{},{},{}", p.a, p.b, p.mean_diff, p.pooled_std);
        }
        out
    }
}

/// Evaluates every bundle on the same seeds and reports all pairwise mean
/// differences with pooled std.
pub fn compare_baselines<E, F>(
    bench: &Workbench<E, F>,
    bundles: &[Bundle],
    config: &EvalConfig,
) -> Result<ComparisonTable>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    if bundles.len() < 2 {
        return Err(Error::invalid("comparison needs at least two bundles"));
    }
    let rows = bundles.par_iter().map(|b| evaluate(bench, b, config)).collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            pairs.push(PairDiff {
                a: a.label.clone(),
                b: b.label.clone(),
                mean_diff: a.mean_reward - b.mean_reward,
                pooled_std: pooled_std(a, b),
            });
        }
    }
    Ok(ComparisonTable { rows, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapTable {
    pub names: Vec<String>,
    pub counts: Vec<u64>,
    /// `None` when there were no activations.
    pub shares: Option<Vec<f64>>,
}

impl HeatmapTable {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn share_of(&self, location: usize) -> Option<f64> {
        self.shares.as_ref().map(|s| s[location])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("location,name,count,share\n");
        for (i, (name, count)) in self.names.iter().zip(&self.counts).enumerate() {
            let share = self.shares.as_ref().map_or(String::new(), |s| s[i].to_string());
            let _ = writeln!(out, "{i},{name},{count},{share}");
        }
        out
    }
}

pub fn heatmap_from_counts(counts: &[u64], names: &[String]) -> Result<HeatmapTable> {
    if counts.len() > names.len() {
        return Err(Error::invalid(format!(
            "activation at location {} but only {} locations are named",
            counts.len() - 1,
            names.len()
        )));
    }
    let mut padded = counts.to_vec();
    padded.resize(names.len(), 0);
    let total: u64 = padded.iter().sum();
    let shares = (total > 0).then(|| padded.iter().map(|&c| c as f64 / total as f64).collect());
    Ok(HeatmapTable { names: names.to_vec(), counts: padded, shares })
}

/// Per-location consulted-activation counts from a step log.
pub fn emit_heatmap(records: &[StepRecord], names: &[String]) -> Result<HeatmapTable> {
    if names.is_empty() {
        return Err(Error::invalid("no location map given"));
    }
    let mut counts = vec![0u64; names.len()];
    for r in records {
        let slot = counts.get_mut(r.location).ok_or_else(|| {
            Error::invalid(format!("record at episode {} step {} has unknown location {}", r.episode, r.step, r.location))
        })?;
        if r.consulted && r.g {
            *slot += 1;
        }
    }
    heatmap_from_counts(&counts, names)
}

/// Sidecar written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub artifact: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    /// Full command line that produced the artifact.
    pub command: Vec<String>,
    /// Resolved configuration.
    pub config: serde_json::Value,
}

/// Writes `dir/name` and `dir/name.meta.json`.
pub fn write_artifact(dir: &Path, name: &str, contents: &str, metadata: &ArtifactMetadata) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    let meta = serde_json::to_string_pretty(metadata).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.meta.json")), meta + "\n")?;
    Ok(())
}
