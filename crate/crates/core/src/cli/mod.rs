//! Command-line driver.
//!
//! Settings come from an optional TOML run file (`--config`) and are then
//! overridden by flags. Unknown keys in either file are an error.
//!
//! ```toml
//! env = "rooms10.toml"      # environment file, relative to this file
//! cost = 0.01
//! budget = 2
//! penalty = 100.0
//! persistence = 0.0
//! episodes = 1000           # evaluation episodes per seed
//! train_episodes = 6000
//! seeds = [1, 2, 3, 4, 5]
//! outdir = "out"
//! tolerance = 1e-10
//! workers = 4               # 0 = one per core
//! costs = [0.0, 0.02, 0.05, 0.1, 0.3]
//! budgets = [0, 1, 2, 3, 4]
//! bundle = "londi-b"        # eval / heatmap: londi | londi-b | quick | deep | probabilistic | cascade
//! auc_window = 1000
//!
//! [train]                   # any TrainConfig field
//! batch_size = 64
//!
//! [baselines]
//! probabilistic_p = 0.5
//! cascade_threshold = -0.05
//! cascade_distance_weight = 0.1
//! ```
//!
//! Artifacts go to `<outdir>/<subcommand>/<config-hash>/` with `tables/`,
//! `logs/`, `solutions/` and `metadata/`. Every file has a `.meta.json`
//! sidecar with the command line, resolved configuration and hash. The hash
//! covers the resolved configuration (including the environment and any MDP
//! file contents) but not `outdir` or `workers`.
//!
//! Exit codes: 0 success, 2 validation, 3 solver, 4 I/O. Failures print one
//! JSON line `{"error": <kind>, "message": <text>}` on stderr.

mod envfile;

pub use envfile::{build_policies, EnvFile, EnvKind, GridSection, MdpSection, PolicySection};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::budget::{augment_with_budget, solve_budgeted, BudgetSpec};
use crate::envs::{Environment, Featurizer, GridTask, MdpSimulator, RoomsWorld};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::reporting::{
    compare_baselines, emit_heatmap, evaluate, heatmap_from_counts, sweep_budget, sweep_cost, train_bundle,
    write_artifact, ArtifactMetadata, Bundle, ComparisonTable, EvalConfig, EvalMetrics, Workbench,
};
use crate::switching::{solve_switcher, SwitchCost};
use crate::trainer::{validate_trace, BaselineKind, TraceRules, TrainConfig, TrainLog};

#[derive(Debug, Parser)]
#[command(name = "switchctl", version, about = "Switching control between a cheap and an expensive policy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Exact switcher solution on the exported MDP.
    Solve,
    /// Exact budgeted solution on the budget-augmented MDP.
    SolveBudgeted,
    /// Train the plain switcher, one run per seed.
    Train,
    /// Train the budgeted switcher, one run per seed.
    TrainB,
    /// Train (if needed) and evaluate one bundle.
    Eval,
    /// Budgeted switcher at each cost in `--costs`, with both anchors.
    SweepCost,
    /// Budgeted switcher at each budget in `--budgets`, with both anchors.
    SweepBudget,
    /// Activation heatmap from a log (`--log`) or from evaluating a bundle.
    Heatmap,
    /// Budgeted learner against capped baselines and the anchors.
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::SolveBudgeted => "solve-budgeted",
            Command::Train => "train",
            Command::TrainB => "train-b",
            Command::Eval => "eval",
            Command::SweepCost => "sweep-cost",
            Command::SweepBudget => "sweep-budget",
            Command::Heatmap => "heatmap",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Environment file.
    #[arg(long, global = true)]
    pub env: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cost: Option<f64>,
    #[arg(long, global = true)]
    pub budget: Option<u32>,
    #[arg(long, global = true)]
    pub penalty: Option<f64>,
    #[arg(long, global = true)]
    pub persistence: Option<f64>,
    /// Evaluation episodes per seed.
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub train_episodes: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub budgets: Option<Vec<u32>>,
    #[arg(long, global = true)]
    pub bundle: Option<String>,
    /// Step log (JSON lines) for `heatmap`.
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
    #[arg(long, global = true)]
    pub auc_window: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    pub probabilistic_p: f64,
    pub cascade_threshold: f64,
    pub cascade_distance_weight: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams { probabilistic_p: 0.5, cascade_threshold: -0.05, cascade_distance_weight: 0.1 }
    }
}

/// Run file contents. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: Option<PathBuf>,
    pub cost: Option<f64>,
    pub budget: Option<u32>,
    pub penalty: Option<f64>,
    pub persistence: Option<f64>,
    pub episodes: Option<usize>,
    pub train_episodes: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub outdir: Option<PathBuf>,
    pub tolerance: Option<f64>,
    pub workers: Option<usize>,
    pub costs: Option<Vec<f64>>,
    pub budgets: Option<Vec<u32>>,
    pub bundle: Option<String>,
    pub log: Option<PathBuf>,
    pub auc_window: Option<usize>,
    pub train: Option<TrainConfig>,
    pub baselines: Option<BaselineParams>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("run file: {e}")))
    }

    /// Reads a run file; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::invalid(format!("run file {} does not exist", path.display())));
        }
        let mut c = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.env, &mut c.outdir, &mut c.log].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }
}

/// Fully resolved settings; this is what gets hashed and recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub command: Command,
    pub env: EnvFile,
    pub cost: f64,
    pub budget: u32,
    pub penalty: f64,
    pub persistence: f64,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub costs: Vec<f64>,
    pub budgets: Vec<u32>,
    pub bundle: String,
    pub log: Option<PathBuf>,
    pub auc_window: usize,
    pub train: TrainConfig,
    pub baselines: BaselineParams,
}

/// Settings that do not change results.
#[derive(Debug, Clone, PartialEq)]
pub struct Runtime {
    pub outdir: PathBuf,
    pub workers: usize,
}

pub fn resolve(command: Command, flags: &Flags) -> Result<(Resolved, Runtime)> {
    let file = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env = match flags.env.as_ref().or(file.env.as_ref()) {
        Some(p) => EnvFile::load(p)?,
        None => EnvFile::default(),
    };
    let mut train = file.train.clone().unwrap_or_else(|| TrainConfig { episodes: 6000, ..TrainConfig::default() });
    if let Some(n) = flags.train_episodes.or(file.train_episodes) {
        train.episodes = n;
    }
    let persistence = flags.persistence.or(file.persistence).unwrap_or(0.0);
    train.persistence_p = persistence;
    let default_bundle = if command == Command::Eval || command == Command::Heatmap { "londi-b" } else { "" };
    let resolved = Resolved {
        command,
        env,
        cost: flags.cost.or(file.cost).unwrap_or(0.01),
        budget: flags.budget.or(file.budget).unwrap_or(2),
        penalty: flags.penalty.or(file.penalty).unwrap_or(100.0),
        persistence,
        episodes: flags.episodes.or(file.episodes).unwrap_or(1000),
        seeds: flags.seeds.clone().or(file.seeds).unwrap_or_else(|| vec![1, 2, 3, 4, 5]),
        tolerance: flags.tolerance.or(file.tolerance).unwrap_or(1e-10),
        costs: flags.costs.clone().or(file.costs).unwrap_or_else(|| vec![0.0, 0.02, 0.05, 0.1, 0.3]),
        budgets: flags.budgets.clone().or(file.budgets).unwrap_or_else(|| vec![0, 1, 2, 3, 4]),
        bundle: flags.bundle.clone().or(file.bundle).unwrap_or_else(|| default_bundle.to_string()),
        log: flags.log.clone().or(file.log),
        auc_window: flags.auc_window.or(file.auc_window).unwrap_or(1000),
        train,
        baselines: file.baselines.unwrap_or_default(),
    };
    let runtime = Runtime {
        outdir: flags.outdir.clone().or(file.outdir).unwrap_or_else(|| PathBuf::from("out")),
        workers: flags.workers.or(file.workers).unwrap_or(0),
    };
    resolved.validate()?;
    Ok((resolved, runtime))
}

impl Resolved {
    pub fn validate(&self) -> Result<()> {
        SwitchCost::new(self.cost)?;
        for &c in &self.costs {
            SwitchCost::new(c)?;
        }
        if !(self.penalty.is_finite() && self.penalty >= 0.0) {
            return Err(Error::invalid(format!("penalty must be finite and >= 0, got {}", self.penalty)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.seeds.is_empty() || self.episodes == 0 {
            return Err(Error::invalid("need at least one seed and one episode"));
        }
        if self.costs.is_empty() || self.budgets.is_empty() {
            return Err(Error::invalid("sweep grids must be nonempty"));
        }
        if let Some(log) = &self.log {
            if !log.is_file() {
                return Err(Error::invalid(format!("log file {} does not exist", log.display())));
            }
        }
        if !self.bundle.is_empty() {
            self.bundle()?;
        }
        self.eval_config().validate()
    }

    pub fn hash(&self, extra: &[u8]) -> Result<String> {
        let json = serde_json::to_string(self).map_err(|e| Error::invalid(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        h.update(extra);
        Ok(format!("{:x}", h.finalize())[..16].to_string())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            train: TrainConfig { record_log: false, ..self.train.clone() },
            episodes: self.episodes,
            persistence_p: self.persistence,
            auc_window: self.auc_window,
            seeds: self.seeds.clone(),
        }
    }

    fn probabilistic(&self) -> Bundle {
        Bundle::baseline("probabilistic", BaselineKind::Probabilistic { p: self.baselines.probabilistic_p })
    }

    fn cascade(&self) -> Bundle {
        Bundle::baseline(
            "cascade",
            BaselineKind::Cascade {
                threshold: self.baselines.cascade_threshold,
                distance_weight: self.baselines.cascade_distance_weight,
            },
        )
    }

    pub fn bundle(&self) -> Result<Bundle> {
        Ok(match self.bundle.as_str() {
            "londi" => Bundle::londi(self.cost),
            "londi-b" => Bundle::londi_b(self.budget, self.penalty, self.cost),
            "quick" => Bundle::always_quick(),
            "deep" => Bundle::always_deep(),
            "probabilistic" => self.probabilistic(),
            "cascade" => self.cascade(),
            other => {
                return Err(Error::invalid(format!(
                    "unknown bundle `{other}` (londi, londi-b, quick, deep, probabilistic, cascade)"
                )))
            }
        })
    }
}

/// Output tree for one run.
pub struct Layout {
    pub root: PathBuf,
    hash: String,
    seeds: Vec<u64>,
    command: Vec<String>,
    config: serde_json::Value,
}

impl Layout {
    fn new(runtime: &Runtime, resolved: &Resolved, hash: String, argv: &[String]) -> Result<Self> {
        let root = runtime.outdir.join(resolved.command.name()).join(&hash);
        let config = serde_json::to_value(resolved).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Layout { root, hash, seeds: resolved.seeds.clone(), command: argv.to_vec(), config })
    }

    fn meta(&self, artifact: &str) -> ArtifactMetadata {
        ArtifactMetadata {
            artifact: artifact.to_string(),
            config_hash: self.hash.clone(),
            seeds: self.seeds.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.config.clone(),
        }
    }

    /// Writes `<root>/<kind>/<name>` plus its sidecar.
    pub fn write(&self, kind: &str, name: &str, contents: &str) -> Result<PathBuf> {
        let dir = self.root.join(kind);
        write_artifact(&dir, name, contents, &self.meta(&format!("{kind}/{name}")))?;
        Ok(dir.join(name))
    }
}

const SEED_HEADER: &str = "seed,episodes,mean_reward,std_reward,mean_consulted,max_consulted,deep_steps,steps,auc_per_episode,auc_window,success_rate";

fn per_seed_csv(m: &EvalMetrics) -> String {
    let mut out = format!("{SEED_HEADER}\n");
    for s in &m.per_seed {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.seed,
            s.episodes,
            s.mean_reward,
            s.std_reward,
            s.mean_consulted,
            s.max_consulted,
            s.deep_steps,
            s.steps,
            s.auc_per_episode,
            s.auc_window,
            s.success_rate
        );
    }
    out
}

fn solve_exact(r: &Resolved, mdp: &TabularMdp, quick: &crate::policies::TablePolicy, deep: &crate::policies::TablePolicy, out: &Layout) -> Result<()> {
    match r.command {
        Command::Solve => {
            let sol = solve_switcher(mdp, quick.stationary(), deep.stationary(), SwitchCost::new(r.cost)?, r.tolerance)?;
            out.write("solutions", "switch_solution.csv", &sol.to_text())?;
        }
        Command::SolveBudgeted => {
            let spec = BudgetSpec::new(r.budget, r.penalty, SwitchCost::new(r.cost)?)?;
            let b = augment_with_budget(mdp, quick.stationary(), deep.stationary(), spec)?;
            out.write("solutions", "budget_solution.csv", &solve_budgeted(&b, r.tolerance)?.to_text())?;
        }
        _ => unreachable!("only exact solves"),
    }
    Ok(())
}

fn train_runs<E, F>(r: &Resolved, bench: &Workbench<E, F>, out: &Layout) -> Result<()>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    let budgeted = r.command == Command::TrainB;
    let bundle = if budgeted { Bundle::londi_b(r.budget, r.penalty, r.cost) } else { Bundle::londi(r.cost) };
    let train = TrainConfig { record_log: true, ..r.train.clone() };
    let rules = TraceRules { cost: r.cost, budget: budgeted.then_some((r.budget, r.penalty)) };
    let runs = r
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = train_bundle(bench, &bundle, &train, seed)?.expect("learner bundle");
            validate_trace(outcome.log.records(), &rules)?;
            Ok((seed, outcome))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = String::from("seed,episodes,mean_env_return,mean_shaped_return,mean_consulted,max_consulted,deep_steps,compute_cost\n");
    for (seed, o) in &runs {
        out.write("logs", &format!("train_seed{seed}.jsonl"), &o.log.to_jsonl()?)?;
        out.write("solutions", &format!("switch_seed{seed}.csv"), &o.policy().to_text())?;
        let n = o.episodes.len() as f64;
        let _ = writeln!(
            summary,
            "{seed},{},{},{},{},{},{},{}",
            o.episodes.len(),
            o.episodes.iter().map(|e| e.env_return).sum::<f64>() / n,
            o.episodes.iter().map(|e| e.shaped_return).sum::<f64>() / n,
            o.episodes.iter().map(|e| e.consulted_activations as f64).sum::<f64>() / n,
            o.episodes.iter().map(|e| e.consulted_activations).max().unwrap_or(0),
            o.episodes.iter().map(|e| u64::from(e.deep_steps)).sum::<u64>(),
            o.ledger.cumulative()
        );
    }
    out.write("tables", "train_summary.csv", &summary)?;
    Ok(())
}

fn simulate<E, F>(r: &Resolved, bench: &Workbench<E, F>, out: &Layout) -> Result<()>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    let config = r.eval_config();
    match r.command {
        Command::Train | Command::TrainB => train_runs(r, bench, out)?,
        Command::Eval => {
            let m = evaluate(bench, &r.bundle()?, &config)?;
            out.write("tables", "eval.csv", &ComparisonTable { rows: vec![m.clone()], pairs: vec![] }.to_csv())?;
            out.write("tables", "eval_per_seed.csv", &per_seed_csv(&m))?;
        }
        Command::SweepCost => {
            out.write("tables", "sweep_cost.csv", &sweep_cost(bench, &r.costs, &config)?.to_csv())?;
        }
        Command::SweepBudget => {
            out.write("tables", "sweep_budget.csv", &sweep_budget(bench, &r.budgets, r.penalty, r.cost, &config)?.to_csv())?;
        }
        Command::Heatmap => {
            let table = match &r.log {
                Some(path) => emit_heatmap(TrainLog::from_jsonl(&std::fs::read_to_string(path)?)?.records(), &bench.location_names)?,
                None => {
                    let m = evaluate(bench, &r.bundle()?, &config)?;
                    heatmap_from_counts(&m.activation_counts, &bench.location_names)?
                }
            };
            out.write("tables", "heatmap.csv", &table.to_csv())?;
        }
        Command::Compare => {
            let bundles = vec![
                Bundle::londi_b(r.budget, r.penalty, r.cost),
                r.probabilistic().capped(r.budget),
                r.cascade().capped(r.budget),
                Bundle::always_quick(),
                Bundle::always_deep(),
            ];
            let table = compare_baselines(bench, &bundles, &config)?;
            out.write("tables", "compare.csv", &table.to_csv())?;
            out.write("tables", "compare_pairs.csv", &table.pairs_csv())?;
        }
        Command::Solve | Command::SolveBudgeted => unreachable!("handled before simulation"),
    }
    Ok(())
}

fn dispatch<E, F>(r: &Resolved, env: E, featurizer: F, mdp: &TabularMdp, start: usize, out: &Layout) -> Result<()>
where
    E: Environment + Sync,
    F: Featurizer<E::Observation> + Clone + Send + Sync,
{
    let (quick, deep) = build_policies(mdp, start, &r.env.policies)?;
    if matches!(r.command, Command::Solve | Command::SolveBudgeted) {
        return solve_exact(r, mdp, &quick, &deep, out);
    }
    let bench = Workbench::new(env, featurizer, Arc::new(quick), Arc::new(deep));
    simulate(r, &bench, out)
}

/// Runs one command and returns the artifact directory.
pub fn execute(resolved: &Resolved, runtime: &Runtime, argv: &[String]) -> Result<PathBuf> {
    let mdp_text = resolved.env.mdp_text()?;
    let hash = resolved.hash(mdp_text.as_deref().unwrap_or("").as_bytes())?;
    let out = Layout::new(runtime, resolved, hash, argv)?;
    let run = || -> Result<()> {
        let r = resolved;
        match r.env.kind {
            EnvKind::Rooms => {
                let (env, mdp, feat) = RoomsWorld::build(r.env.rooms.clone().unwrap_or_default())?;
                let start = env.start_state();
                dispatch(r, env, feat, &mdp, start, &out)
            }
            EnvKind::Grid => {
                let config = r.env.grid.as_ref().expect("checked on load").config()?;
                let (env, feat, mdp) = GridTask::build(config)?;
                let start = env.start_state();
                dispatch(r, env, feat, &mdp?, start, &out)
            }
            EnvKind::Mdp => {
                let section = r.env.mdp.as_ref().expect("checked on load");
                let mdp = TabularMdp::from_text(mdp_text.as_deref().expect("read above"))?;
                let sim = MdpSimulator::new(mdp.clone(), section.start, section.horizon)?;
                let feat = sim.featurizer();
                dispatch(r, sim, feat, &mdp, section.start, &out)
            }
        }
    };
    if runtime.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(runtime.workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
        pool.install(run)?;
    } else {
        run()?;
    }
    let run_meta = serde_json::to_string_pretty(&out.meta("metadata/run.json")).map_err(|e| Error::invalid(e.to_string()))?;
    let meta_dir = out.root.join("metadata");
    std::fs::create_dir_all(&meta_dir)?;
    std::fs::write(meta_dir.join("run.json"), run_meta + "\n")?;
    Ok(out.root)
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        "solver" => 3,
        "io" => 4,
        _ => 2,
    }
}

pub fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            eprintln!("{}", error_line("validation", first));
            return 2;
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = resolve(cli.command, &cli.flags).and_then(|(r, rt)| execute(&r, &rt, &argv));
    match result {
        Ok(dir) => {
            println!("{}", serde_json::json!({ "status": "ok", "artifacts": dir }));
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_file_rejects_unknown_keys() {
        assert!(RunConfig::parse("cost = 0.1\nbogus = 2\n").is_err());
        assert!(RunConfig::parse("[train]\nepisodez = 3\n").is_err());
        assert!(RunConfig::parse("[baselines]\np = 0.5\n").is_err());
        let c = RunConfig::parse("cost = 0.1\nseeds = [3, 4]\n[train]\nepisodes = 7\n").unwrap();
        assert_eq!((c.cost, c.seeds, c.train.unwrap().episodes), (Some(0.1), Some(vec![3, 4]), 7));
    }

    #[test]
    fn flags_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "cost = 0.5\nbudget = 3\nseeds = [9]\n").unwrap();
        let flags = Flags { config: Some(path), cost: Some(0.2), ..Flags::default() };
        let (r, _) = resolve(Command::Solve, &flags).unwrap();
        assert_eq!((r.cost, r.budget, r.seeds.clone()), (0.2, 3, vec![9]));
    }

    #[test]
    fn hash_ignores_runtime_settings_but_not_parameters() {
        let (a, _) = resolve(Command::Solve, &Flags::default()).unwrap();
        let (b, _) = resolve(Command::Solve, &Flags { outdir: Some("elsewhere".into()), workers: Some(3), ..Flags::default() }).unwrap();
        let (c, _) = resolve(Command::Solve, &Flags { cost: Some(0.3), ..Flags::default() }).unwrap();
        assert_eq!(a.hash(b"").unwrap(), b.hash(b"").unwrap());
        assert_ne!(a.hash(b"").unwrap(), c.hash(b"").unwrap());
        assert_ne!(a.hash(b"").unwrap(), a.hash(b"x").unwrap());
    }

    #[test]
    fn validation_failures_map_to_exit_two() {
        let bad = Flags { cost: Some(-1.0), ..Flags::default() };
        let e = resolve(Command::Solve, &bad).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let missing = Flags { env: Some("/no/such/env.toml".into()), ..Flags::default() };
        assert_eq!(exit_code(&resolve(Command::Solve, &missing).unwrap_err()), 2);
        let bundle = Flags { bundle: Some("oracle".into()), ..Flags::default() };
        assert!(resolve(Command::Eval, &bundle).is_err());
        assert_eq!(exit_code(&Error::SolverFailure { iterations: 1, residual: 1.0 }), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
    }

    #[test]
    fn error_line_is_single_line_json() {
        let line = error_line("validation", "bad\nthing");
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "validation");
    }
}
