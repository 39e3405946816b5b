//! Per-step training logs.
//!
//! Persisted as JSON lines, one object per step, fields in this order:
//! `episode, step, state, location, m, persistence_draw, consulted, g, tier,
//! env_reward, reward, cost, remaining`. `m` is the regime counter before the
//! step, `persistence_draw` is null while the regime is off, `reward` is the
//! stored (adjusted) reward, `cost` the compute spent on policy calls and
//! `remaining` the budget after the step (null for unbudgeted runs).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::Tier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub state: usize,
    pub location: usize,
    pub m: u32,
    pub persistence_draw: Option<bool>,
    pub consulted: bool,
    pub g: bool,
    pub tier: Tier,
    pub env_reward: f64,
    pub reward: f64,
    pub cost: f64,
    pub remaining: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })
            })
            .collect::<Result<_>>()?;
        Ok(TrainLog { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    /// Consulted activations per episode, in episode order.
    pub fn activations_per_episode(&self) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        let mut current = None;
        for r in &self.records {
            if current != Some(r.episode) {
                current = Some(r.episode);
                out.push(0);
            }
            if r.consulted && r.g {
                *out.last_mut().expect("pushed above") += 1;
            }
        }
        out
    }
}

/// Parameters the trace validator needs to recompute stored rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRules {
    pub cost: f64,
    /// `(n, penalty)` for budgeted runs.
    pub budget: Option<(u32, f64)>,
}

/// Checks the regime law on a log: DEEPTHINK acts at a step iff the regime
/// persisted or the consulted decision was 1, the counter `m` evolves as in
/// the switching loop, the budget drops by one per consulted activation, and
/// stored rewards carry exactly the cost and penalty adjustments.
pub fn validate_trace(records: &[StepRecord], rules: &TraceRules) -> Result<()> {
    let fail = |r: &StepRecord, what: &str| {
        Err(Error::invalid(format!("trace violation at episode {} step {}: {what}", r.episode, r.step)))
    };
    let mut expect_m = 0u32;
    let mut expect_n = rules.budget.map_or(0, |(n, _)| n as i64);
    let mut episode = None;
    for r in records {
        if episode != Some(r.episode) {
            episode = Some(r.episode);
            expect_m = 0;
            expect_n = rules.budget.map_or(0, |(n, _)| n as i64);
        }
        if r.m != expect_m {
            return fail(r, &format!("m is {}, expected {expect_m}", r.m));
        }
        if r.persistence_draw.is_some() != (r.m > 0) {
            return fail(r, "persistence drawn exactly when the regime is on");
        }
        let persisted = r.persistence_draw == Some(true);
        if r.consulted == persisted {
            return fail(r, "consulted iff not persisted");
        }
        let deep = persisted || (r.consulted && r.g);
        if (r.tier == Tier::Deep) != deep {
            return fail(r, "acting tier disagrees with the regime law");
        }
        let activated = r.consulted && r.g;
        if activated {
            expect_n -= 1;
        }
        let mut reward = r.env_reward;
        if activated {
            reward -= rules.cost;
        }
        if let Some((_, penalty)) = rules.budget {
            if r.remaining != Some(expect_n) {
                return fail(r, &format!("remaining {:?}, expected {expect_n}", r.remaining));
            }
            if expect_n < 0 {
                reward -= penalty;
            }
        }
        if (reward - r.reward).abs() > 1e-9 * (1.0 + reward.abs()) {
            return fail(r, &format!("stored reward {} but adjustments give {reward}", r.reward));
        }
        if r.consulted {
            expect_m = if r.g { r.m.max(1) } else { 0 };
        }
    }
    Ok(())
}
