//! Evaluation of switch policies, parameter sweeps, heatmaps and table
//! emission.
//!
//! Every evaluation trains (where needed) and rolls out each seed
//! independently, in parallel; results are joined in seed order so tables are
//! byte-identical across runs. Evaluation streams depend only on the seed, so
//! all bundles evaluated with one seed share their environment randomness.

mod tables;

pub use tables::{
    compare_baselines, emit_heatmap, heatmap_from_counts, pooled_std, sweep_budget, sweep_cost,
    write_artifact, ArtifactMetadata, ComparisonTable, HeatmapTable, SweepRow, SweepTable,
};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Featurizer};
use crate::error::{Error, Result};
use crate::policies::{CostLedger, PolicyProvider};
use crate::trainer::{
    make_baseline_switcher, run_episode, train_budgeted_switcher, train_switcher, BaselineKind,
    BudgetRule, Decider, EpisodeOutcome, RolloutSettings, RunRngs, TrainConfig, TrainOutcome,
};

/// Environment, featurizer and the two action policies.
#[derive(Clone)]
pub struct Workbench<E, F> {
    pub env: E,
    pub featurizer: F,
    pub quick: Arc<dyn PolicyProvider>,
    pub deep: Arc<dyn PolicyProvider>,
    pub location_names: Vec<String>,
}

impl<E: Environment, F> Workbench<E, F> {
    pub fn new(env: E, featurizer: F, quick: Arc<dyn PolicyProvider>, deep: Arc<dyn PolicyProvider>) -> Self {
        let location_names = env.location_names();
        Workbench { env, featurizer, quick, deep, location_names }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitcherSpec {
    Baseline { baseline: BaselineKind },
    /// Plain switching learner with cost `cost`.
    Londi { cost: f64 },
    /// Budgeted learner.
    LondiB { budget: u32, penalty: f64, cost: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub label: String,
    pub spec: SwitcherSpec,
    /// Hard activation cap for baselines compared at a matched budget.
    pub budget_cap: Option<u32>,
}

impl Bundle {
    pub fn baseline(label: impl Into<String>, kind: BaselineKind) -> Self {
        Bundle { label: label.into(), spec: SwitcherSpec::Baseline { baseline: kind }, budget_cap: None }
    }

    pub fn always_quick() -> Self {
        Self::baseline("quick_only", BaselineKind::AlwaysQuick)
    }

    pub fn always_deep() -> Self {
        Self::baseline("deep_only", BaselineKind::AlwaysDeep)
    }

    pub fn londi(cost: f64) -> Self {
        Bundle { label: format!("londi_c{cost}"), spec: SwitcherSpec::Londi { cost }, budget_cap: None }
    }

    pub fn londi_b(budget: u32, penalty: f64, cost: f64) -> Self {
        Bundle {
            label: format!("londi_b_n{budget}"),
            spec: SwitcherSpec::LondiB { budget, penalty, cost },
            budget_cap: None,
        }
    }

    pub fn capped(mut self, cap: u32) -> Self {
        self.budget_cap = Some(cap);
        self.label = format!("{}_cap{cap}", self.label);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Training hyperparameters; cost, budget, penalty and seed are set per bundle and seed.
    pub train: TrainConfig,
    /// Evaluation episodes per seed.
    pub episodes: usize,
    pub persistence_p: f64,
    /// Step window for the fixed-length cost AUC.
    pub auc_window: usize,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train: TrainConfig { record_log: false, ..TrainConfig::default() },
            episodes: 1000,
            persistence_p: 0.0,
            auc_window: 1000,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.seeds.is_empty() {
            return Err(Error::invalid("evaluation needs at least one episode and one seed"));
        }
        if !(0.0..=1.0).contains(&self.persistence_p) {
            return Err(Error::invalid(format!("persistence_p {} not in [0, 1]", self.persistence_p)));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_consulted: f64,
    pub max_consulted: u32,
    pub deep_steps: u64,
    pub steps: u64,
    /// Compute cost per episode.
    pub auc_per_episode: f64,
    /// Compute cost of the first `auc_window` deployed steps.
    pub auc_window: f64,
    pub success_rate: f64,
    /// Consulted activations per location id.
    pub activation_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub label: String,
    pub per_seed: Vec<SeedMetrics>,
    /// Mean over seeds of the per-seed mean reward.
    pub mean_reward: f64,
    /// Sample std over seeds of the per-seed mean reward.
    pub std_reward: f64,
    pub mean_consulted: f64,
    pub max_consulted: u32,
    pub deep_steps: u64,
    /// Share of steps where DEEPTHINK acted (always-deep is 1).
    pub relative_calls: f64,
    pub auc_per_episode: f64,
    pub auc_window: f64,
    pub success_rate: f64,
    pub activation_counts: Vec<u64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (0 for fewer than two values).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl EvalMetrics {
    fn aggregate(label: String, per_seed: Vec<SeedMetrics>) -> Self {
        let rewards: Vec<f64> = per_seed.iter().map(|s| s.mean_reward).collect();
        let n_loc = per_seed.iter().map(|s| s.activation_counts.len()).max().unwrap_or(0);
        let mut activation_counts = vec![0u64; n_loc];
        for s in &per_seed {
            for (i, c) in s.activation_counts.iter().enumerate() {
                activation_counts[i] += c;
            }
        }
        let steps: u64 = per_seed.iter().map(|s| s.steps).sum();
        let deep_steps: u64 = per_seed.iter().map(|s| s.deep_steps).sum();
        let avg = |f: &dyn Fn(&SeedMetrics) -> f64| mean(&per_seed.iter().map(f).collect::<Vec<_>>());
        EvalMetrics {
            mean_reward: mean(&rewards),
            std_reward: sample_std(&rewards),
            mean_consulted: avg(&|s| s.mean_consulted),
            max_consulted: per_seed.iter().map(|s| s.max_consulted).max().unwrap_or(0),
            deep_steps,
            relative_calls: if steps == 0 { 0.0 } else { deep_steps as f64 / steps as f64 },
            auc_per_episode: avg(&|s| s.auc_per_episode),
            auc_window: avg(&|s| s.auc_window),
            success_rate: avg(&|s| s.success_rate),
            activation_counts,
            label,
            per_seed,
        }
    }
}

/// A trained or baseline switch policy ready for deployment.
enum Deployed {
    Learned(crate::trainer::GreedySwitch),
    Baseline(crate::trainer::BaselineSwitch),
}

impl Deployed {
    fn decider(&mut self) -> &mut dyn Decider {
        match self {
            Deployed::Learned(g) => g,
            Deployed::Baseline(b) => b,
        }
    }
}

/// Trains the bundle's learner (if any) for one seed.
pub fn train_bundle<E, F>(
    bench: &Workbench<E, F>,
    bundle: &Bundle,
    train: &TrainConfig,
    seed: u64,
) -> Result<Option<TrainOutcome>>
where
    E: Environment,
    F: Featurizer<E::Observation> + Clone,
{
    let (mut env, mut feat) = (bench.env.clone(), bench.featurizer.clone());
    match bundle.spec {
        SwitcherSpec::Baseline { .. } => Ok(None),
        SwitcherSpec::Londi { cost } => {
            let config = TrainConfig { cost, seed, ..train.clone() };
            let learner = config.learner(false)?;
            train_switcher(&mut env, &mut feat, &*bench.quick, &*bench.deep, learner, &config).map(Some)
        }
        SwitcherSpec::LondiB { budget, penalty, cost } => {
            let config = TrainConfig { cost, budget, penalty, seed, ..train.clone() };
            let learner = config.learner(true)?;
            train_budgeted_switcher(&mut env, &mut feat, &*bench.quick, &*bench.deep, learner, &config).map(Some)
        }
    }
}

fn rollout_settings(bundle: &Bundle, persistence_p: f64) -> RolloutSettings {
    let (cost, budget) = match bundle.spec {
        SwitcherSpec::Baseline { .. } => {
            (0.0, bundle.budget_cap.map(|n| BudgetRule { n, penalty: 0.0, hard_cap: true }))
        }
        SwitcherSpec::Londi { cost } => (cost, None),
        SwitcherSpec::LondiB { budget, penalty, cost } => {
            (cost, Some(BudgetRule { n: budget, penalty, hard_cap: false }))
        }
    };
    RolloutSettings { persistence_p, cost, budget, horizon: None }
}

fn evaluate_seed<E, F>(bench: &Workbench<E, F>, bundle: &Bundle, config: &EvalConfig, seed: u64) -> Result<SeedMetrics>
where
    E: Environment,
    F: Featurizer<E::Observation> + Clone,
{
    let mut deployed = match train_bundle(bench, bundle, &config.train, seed)? {
        Some(outcome) => Deployed::Learned(outcome.policy()),
        None => match bundle.spec {
            SwitcherSpec::Baseline { baseline } => Deployed::Baseline(make_baseline_switcher(baseline)?),
            _ => unreachable!("learners always return an outcome"),
        },
    };
    let settings = rollout_settings(bundle, config.persistence_p);
    let (mut env, mut feat) = (bench.env.clone(), bench.featurizer.clone());
    let mut rngs = RunRngs::evaluation(seed);
    let mut ledger = CostLedger::new();
    let mut clock = 0u64;
    let mut outcomes: Vec<EpisodeOutcome> = Vec::with_capacity(config.episodes);
    let mut ep = 0;
    while ep < config.episodes || ledger.len() < config.auc_window {
        let out = run_episode(
            &mut env,
            &mut feat,
            &*bench.quick,
            &*bench.deep,
            deployed.decider(),
            &settings,
            &mut rngs,
            ep,
            &mut ledger,
            &mut clock,
            |_, _| {},
        )?;
        if ep < config.episodes {
            outcomes.push(out);
        }
        ep += 1;
    }
    let rewards: Vec<f64> = outcomes.iter().map(|o| o.env_return).collect();
    let mut activation_counts = vec![0u64; bench.location_names.len()];
    for o in &outcomes {
        for &loc in &o.activation_locations {
            if loc >= activation_counts.len() {
                activation_counts.resize(loc + 1, 0);
            }
            activation_counts[loc] += 1;
        }
    }
    let n = outcomes.len() as f64;
    Ok(SeedMetrics {
        seed,
        episodes: outcomes.len(),
        mean_reward: mean(&rewards),
        std_reward: sample_std(&rewards),
        mean_consulted: outcomes.iter().map(|o| o.consulted_activations as f64).sum::<f64>() / n,
        max_consulted: outcomes.iter().map(|o| o.consulted_activations).max().unwrap_or(0),
        deep_steps: outcomes.iter().map(|o| o.deep_steps as u64).sum(),
        steps: outcomes.iter().map(|o| o.steps as u64).sum(),
        auc_per_episode: outcomes.iter().map(|o| o.compute_cost).sum::<f64>() / n,
        auc_window: ledger.prefix_cost(config.auc_window),
        success_rate: outcomes.iter().filter(|o| o.succeeded).count() as f64 / n,
        activation_counts,
    })
}

/// Greedy (no-exploration) deployment of a bundle over every seed.
pub fn evaluate<E, F>(bench: &Workbench<E, F>, bundle: &Bundle, config: &EvalConfig) -> Result<EvalMetrics>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    config.validate()?;
    let per_seed = config
        .seeds
        .par_iter()
        .map(|&seed| evaluate_seed(bench, bundle, config, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalMetrics::aggregate(bundle.label.clone(), per_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{RoomsFeaturizer, RoomsWorld, RoomsWorldConfig};
    use crate::policies::calibrated_pair;

    pub(crate) fn rooms_bench() -> Workbench<RoomsWorld, RoomsFeaturizer> {
        let (env, mdp, feat) = RoomsWorld::build(RoomsWorldConfig::default()).unwrap();
        let pair = calibrated_pair(&mdp, env.start_state(), 0.05, 0.5, 1.0, 5.0).unwrap();
        Workbench::new(env, feat, Arc::new(pair.quick), Arc::new(pair.deep))
    }

    fn quick_config() -> EvalConfig {
        EvalConfig {
            train: TrainConfig { episodes: 200, record_log: false, ..TrainConfig::default() },
            episodes: 50,
            auc_window: 300,
            seeds: vec![1, 2],
            ..EvalConfig::default()
        }
    }

    #[test]
    fn degenerate_bundles() {
        let bench = rooms_bench();
        let config = quick_config();
        let q = evaluate(&bench, &Bundle::always_quick(), &config).unwrap();
        assert_eq!(q.relative_calls, 0.0);
        assert_eq!(q.mean_consulted, 0.0);
        let steps = q.per_seed[0].steps as f64;
        assert_eq!(q.per_seed[0].auc_per_episode * 50.0, steps);
        assert_eq!(q.auc_window, 300.0);
        let d = evaluate(&bench, &Bundle::always_deep(), &config).unwrap();
        assert_eq!(d.relative_calls, 1.0);
        assert_eq!(d.auc_window, 1500.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let bench = rooms_bench();
        let config = quick_config();
        let b = Bundle::londi_b(2, 10.0, 0.01);
        assert_eq!(evaluate(&bench, &b, &config).unwrap(), evaluate(&bench, &b, &config).unwrap());
    }

    #[test]
    fn rejects_empty_seeds() {
        let bench = rooms_bench();
        let config = EvalConfig { seeds: vec![], ..quick_config() };
        assert!(evaluate(&bench, &Bundle::always_quick(), &config).is_err());
    }
}
