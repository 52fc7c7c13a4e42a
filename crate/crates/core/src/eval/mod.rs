//! Scenario orchestration, episode metrics and batch evaluation.

pub mod trace;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use trace::{emit_series, platoon_gaps, replay, Divergence, ReplayReport, StepRecord, Trace, TraceHeader, VehicleRecord, SCHEMA_VERSION};

use crate::dynamics::VehicleState;
use crate::env::{EnvConfig, Episode, HighLevelAction};
use crate::error::{Error, Result};
use crate::fsm::{Proposer, ScriptedProposer, Supervisor, SupervisorConfig};
use crate::learner::{ActorCritic, PolicyProposer};
use crate::world::{spawn_traffic, ScenarioKind, TrafficSetup, VehicleStatus, WorldState};

/// Parses a TOML file, reporting failures with the offending field path.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_toml(&text)
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub traffic: TrafficSetup,
    pub env: EnvConfig,
    pub supervisor: SupervisorConfig,
    pub seeds: Vec<u64>,
    /// Speed below which a stopped, collision-free platoon counts as a safe halt.
    pub halt_speed: f64,
    /// End the episode once every member has cleared the scenario zone.
    pub stop_on_pass: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "plain".into(),
            traffic: TrafficSetup::default(),
            env: EnvConfig::default(),
            supervisor: SupervisorConfig::default(),
            seeds: vec![0],
            halt_speed: 1.0,
            stop_on_pass: true,
        }
    }
}

impl ScenarioSpec {
    pub fn with_kind(kind: ScenarioKind) -> Self {
        let mut spec = Self::default();
        spec.traffic.scenario.kind = kind;
        spec.name = format!("{kind:?}");
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.traffic.validate()?;
        self.supervisor.safety.validate()?;
        if self.env.max_steps == 0 {
            return Err(Error::config("env.max_steps", "must be positive"));
        }
        if !(self.halt_speed >= 0.0) {
            return Err(Error::config("halt_speed", "must be non-negative"));
        }
        Ok(())
    }
}

/// Where the data-driven proposals come from.
#[derive(Debug, Clone)]
pub enum PolicySource {
    Scripted(HighLevelAction),
    Network(ActorCritic),
}

impl PolicySource {
    fn proposer(&self, spec: &ScenarioSpec) -> Box<dyn Proposer> {
        match self {
            PolicySource::Scripted(action) => Box::new(ScriptedProposer { action: *action }),
            PolicySource::Network(net) => Box::new(PolicyProposer::greedy(net.clone(), spec.supervisor.safety)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PolicySource::Scripted(action) => format!("scripted:{action:?}"),
            PolicySource::Network(_) => "checkpoint:greedy".into(),
        }
    }
}

/// One episode's metrics. Outcome columns are 0/1 per episode, so the
/// aggregate produced by [`MetricsReport::aggregate`] holds rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: Option<u64>,
    pub scenario: String,
    pub steps: f64,
    pub avg_speed: f64,
    pub avg_hwd: f64,
    pub collision: f64,
    pub passed: f64,
    pub safe_halt: f64,
    pub timeout: f64,
    pub failed: f64,
    pub substitutions: f64,
    pub mean_reward: f64,
    pub error: Option<String>,
}

impl MetricsRow {
    fn failed(seed: u64, scenario: &str, error: String) -> Self {
        Self {
            seed: Some(seed),
            scenario: scenario.to_string(),
            steps: f64::NAN,
            avg_speed: f64::NAN,
            avg_hwd: f64::NAN,
            collision: f64::NAN,
            passed: f64::NAN,
            safe_halt: f64::NAN,
            timeout: f64::NAN,
            failed: 1.0,
            substitutions: f64::NAN,
            mean_reward: f64::NAN,
            error: Some(error),
        }
    }
}

fn all_past(states: &[&VehicleState], zone_end: f64) -> bool {
    states.iter().all(|s| s.rear() > zone_end)
}

/// Metrics of a finished trace. The outcome is exactly one of collision,
/// pass, safe halt or timeout. A safe halt ends with every member either
/// stopped or already through the zone.
pub fn compute_metrics(trace: &Trace, halt_speed: f64) -> MetricsRow {
    let ids = &trace.header.platoon_ids;
    let zone_end = trace.header.spec.traffic.road.scenario_zone[1];
    let (mut speed_sum, mut speed_n) = (0.0, 0usize);
    let (mut hwd_sum, mut hwd_n) = (0.0, 0usize);
    let (mut reward_sum, mut substitutions) = (0.0, 0usize);
    let mut collision = false;
    let mut passed = false;
    for rec in &trace.steps {
        let members: Vec<&VehicleRecord> = rec.vehicles.iter().filter(|v| ids.contains(&v.state.id)).collect();
        for m in &members {
            speed_sum += m.state.v;
            speed_n += 1;
            collision |= m.status == VehicleStatus::Crashed;
        }
        let states: Vec<&VehicleState> = members.iter().map(|m| &m.state).collect();
        let gaps = platoon_gaps(&states);
        if !gaps.is_empty() {
            hwd_sum += gaps.iter().map(|g| g.2).sum::<f64>() / gaps.len() as f64;
            hwd_n += 1;
        }
        passed |= !collision && all_past(&states, zone_end);
        reward_sum += rec.reward.r_global;
        substitutions += rec.substitutions.len();
    }
    let passed = passed && !collision;
    let halted = !collision
        && !passed
        && trace.steps.last().is_some_and(|rec| {
            rec.vehicles
                .iter()
                .filter(|v| ids.contains(&v.state.id))
                .all(|v| v.state.v <= halt_speed || v.state.rear() > zone_end)
        });
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mean = |sum: f64, n: usize| if n == 0 { f64::NAN } else { sum / n as f64 };
    MetricsRow {
        seed: Some(trace.header.seed),
        scenario: trace.header.spec.name.clone(),
        steps: trace.steps.len() as f64,
        avg_speed: mean(speed_sum, speed_n),
        avg_hwd: mean(hwd_sum, hwd_n),
        collision: flag(collision),
        passed: flag(passed),
        safe_halt: flag(halted),
        timeout: flag(!collision && !passed && !halted),
        failed: 0.0,
        substitutions: substitutions as f64,
        mean_reward: mean(reward_sum, trace.steps.len()),
        error: None,
    }
}

fn supervisor_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5AFE
}

/// Runs one episode from a prepared world.
pub fn run_episode_from(world: WorldState, platoon_ids: Vec<u32>, spec: &ScenarioSpec, seed: u64, policy: &PolicySource, spawned: bool) -> Result<(MetricsRow, Trace)> {
    let header = TraceHeader {
        schema: SCHEMA_VERSION,
        spec: spec.clone(),
        seed,
        spawned,
        policy: policy.describe(),
        platoon_ids: platoon_ids.clone(),
        initial_world: world.clone(),
    };
    let mut episode = Episode::new(world, platoon_ids, spec.env.clone())?;
    let mut supervisor = Supervisor::new(spec.supervisor, episode.world.dt(), supervisor_seed(seed))?;
    let mut proposer = policy.proposer(spec);
    let zone_end = spec.traffic.road.scenario_zone[1];
    let mut steps = Vec::new();
    while !episode.is_done() {
        let obs = episode.observe()?;
        let ids = episode.platoon_ids.clone();
        let decision = supervisor.decide(&mut episode.world, &ids, proposer.as_mut(), &obs)?;
        let result = episode.step_commands(&decision.commands)?;
        let record = StepRecord::new(&episode.world, decision, result.info);
        steps.push(record);
        if spec.stop_on_pass {
            let members: Vec<&VehicleState> = ids.iter().filter_map(|id| episode.world.vehicle(*id)).map(|v| &v.state).collect();
            let crashed = ids.iter().any(|id| episode.world.vehicle(*id).is_some_and(|v| v.status == VehicleStatus::Crashed));
            if !crashed && all_past(&members, zone_end) {
                break;
            }
        }
    }
    let trace = Trace { header, steps };
    Ok((compute_metrics(&trace, spec.halt_speed), trace))
}

/// Spawns the scenario for `seed` and runs the full supervisor stack.
pub fn run_episode(spec: &ScenarioSpec, seed: u64, policy: &PolicySource) -> Result<(MetricsRow, Trace)> {
    spec.validate()?;
    let (world, ids) = spawn_traffic(&spec.traffic, seed)?;
    run_episode_from(world, ids, spec, seed, policy, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub aggregate: MetricsRow,
}

impl MetricsReport {
    /// Column means over the rows; failed rows only enter the `failed` column.
    pub fn aggregate(rows: &[MetricsRow], scenario: &str) -> MetricsRow {
        let ok: Vec<&MetricsRow> = rows.iter().filter(|r| r.failed == 0.0).collect();
        let mean = |f: fn(&MetricsRow) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        MetricsRow {
            seed: None,
            scenario: scenario.to_string(),
            steps: mean(|r| r.steps),
            avg_speed: mean(|r| r.avg_speed),
            avg_hwd: mean(|r| r.avg_hwd),
            collision: mean(|r| r.collision),
            passed: mean(|r| r.passed),
            safe_halt: mean(|r| r.safe_halt),
            timeout: mean(|r| r.timeout),
            failed: if rows.is_empty() { f64::NAN } else { rows.iter().map(|r| r.failed).sum::<f64>() / rows.len() as f64 },
            substitutions: mean(|r| r.substitutions),
            mean_reward: mean(|r| r.mean_reward),
            error: None,
        }
    }

    pub fn num_failed(&self) -> usize {
        self.rows.iter().filter(|r| r.failed != 0.0).count()
    }

    /// Rows followed by the aggregate, with a header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.rows.iter().chain(std::iter::once(&self.aggregate)) {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn guarded_episode(spec: &ScenarioSpec, seed: u64, policy: &PolicySource) -> (MetricsRow, Option<Trace>) {
    match catch_unwind(AssertUnwindSafe(|| run_episode(spec, seed, policy))) {
        Ok(Ok((row, trace))) => (row, Some(trace)),
        Ok(Err(e)) => (MetricsRow::failed(seed, &spec.name, e.to_string()), None),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (MetricsRow::failed(seed, &spec.name, format!("panic: {msg}")), None)
        }
    }
}

/// Evaluates every seed on a pool of `jobs` threads. Rows come back in seed
/// order whatever the parallelism; a failing episode yields a failed row.
pub fn run_eval_with_traces(spec: &ScenarioSpec, seeds: &[u64], policy: &PolicySource, jobs: usize) -> Result<(MetricsReport, Vec<Option<Trace>>)> {
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds to evaluate"));
    }
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let results: Vec<(MetricsRow, Option<Trace>)> = pool.install(|| seeds.par_iter().map(|&seed| guarded_episode(spec, seed, policy)).collect());
    let (rows, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let aggregate = MetricsReport::aggregate(&rows, &spec.name);
    Ok((MetricsReport { rows, aggregate }, traces))
}

pub fn run_eval(spec: &ScenarioSpec, seeds: &[u64], policy: &PolicySource, jobs: usize) -> Result<MetricsReport> {
    let pool_result = run_eval_with_traces(spec, seeds, policy, jobs)?;
    Ok(pool_result.0)
}
