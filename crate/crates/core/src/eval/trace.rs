//! JSON-lines episode traces, replay validation and plot-series export.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioSpec;
use crate::dynamics::{ControlCommand, VehicleState};
use crate::env::{DoneReason, Episode, HighLevelAction, RewardBreakdown, StepInfo};
use crate::error::{Error, Result};
use crate::fsm::{Decision, FsmMode, MaskCheck, RiskAssessment, Strategy, SubstitutionRecord};
use crate::world::{spawn_traffic, VehicleStatus, WorldEvent, WorldState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub spec: ScenarioSpec,
    pub seed: u64,
    /// The initial world came from `spawn_traffic(spec.traffic, seed)`.
    pub spawned: bool,
    pub policy: String,
    pub platoon_ids: Vec<u32>,
    pub initial_world: WorldState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub state: VehicleState,
    pub status: VehicleStatus,
}

/// Everything that happened in one control step; `vehicles` is the state
/// after the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub vehicles: Vec<VehicleRecord>,
    pub fsm: FsmMode,
    pub strategy: Strategy,
    pub risk: RiskAssessment,
    pub proposed: Option<Vec<HighLevelAction>>,
    pub action: Option<Vec<HighLevelAction>>,
    pub commands: BTreeMap<u32, ControlCommand>,
    pub reward: RewardBreakdown,
    pub substitutions: Vec<SubstitutionRecord>,
    pub mask_checks: Vec<MaskCheck>,
    pub events: Vec<WorldEvent>,
    pub done: Option<DoneReason>,
}

fn vehicle_records(world: &WorldState) -> Vec<VehicleRecord> {
    world
        .vehicles
        .iter()
        .map(|v| VehicleRecord {
            state: v.state.clone(),
            status: v.status,
        })
        .collect()
}

impl StepRecord {
    pub fn new(world: &WorldState, decision: Decision, info: StepInfo) -> Self {
        Self {
            step: world.step_index,
            time: world.time,
            vehicles: vehicle_records(world),
            fsm: decision.fsm,
            strategy: decision.strategy,
            risk: decision.assessment,
            proposed: decision.proposed.map(|a| a.per_vehicle),
            action: decision.final_action.map(|a| a.per_vehicle),
            commands: decision.commands,
            reward: info.reward,
            substitutions: decision.substitutions,
            mask_checks: decision.mask_checks,
            events: info.events,
            done: info.reason,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(Box<TraceHeader>),
    Step(Box<StepRecord>),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum RecordKind {
    Header,
    Step,
}

#[derive(Deserialize)]
struct Tag {
    record: RecordKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
}

impl Trace {
    /// One JSON object per line: the header, then one record per step.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        serde_json::to_writer(&mut *w, &Line::Header(Box::new(self.header.clone())))?;
        w.write_all(b"\n")?;
        for step in &self.steps {
            serde_json::to_writer(&mut *w, &Line::Step(Box::new(step.clone())))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out)?;
        Ok(out)
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut header = None;
        let mut steps = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            // The tag is read on its own and the record is then decoded
            // directly: the tagged-enum path buffers values and cannot carry
            // the 128-bit RNG counters.
            let err = |e: serde_json::Error| Error::Trace(format!("line {}: {e}", n + 1));
            let tag: Tag = serde_json::from_str(&line).map_err(err)?;
            match tag.record {
                RecordKind::Header if header.is_none() && n == 0 => header = Some(serde_json::from_str::<TraceHeader>(&line).map_err(err)?),
                RecordKind::Header => return Err(Error::Trace(format!("line {}: unexpected header", n + 1))),
                RecordKind::Step => steps.push(serde_json::from_str::<StepRecord>(&line).map_err(err)?),
            }
        }
        let header = header.ok_or_else(|| Error::Trace("missing header".into()))?;
        if header.schema != SCHEMA_VERSION {
            return Err(Error::Trace(format!("unsupported schema version {}", header.schema)));
        }
        Ok(Self { header, steps })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// 0 refers to the initial world.
    pub step: u64,
    pub vehicle: Option<u32>,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps_checked: usize,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none()
    }
}

fn differing_fields(a: &impl Serialize, b: &impl Serialize, prefix: &str) -> Result<Vec<String>> {
    let (a, b) = (serde_json::to_value(a)?, serde_json::to_value(b)?);
    let mut out = Vec::new();
    match (a, b) {
        (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
            let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            for k in keys {
                if a.get(k) != b.get(k) {
                    out.push(format!("{prefix}{k}"));
                }
            }
        }
        (a, b) if a != b => out.push(prefix.trim_end_matches('.').to_string()),
        _ => {}
    }
    Ok(out)
}

fn compare_vehicles(step: u64, expected: &[VehicleRecord], actual: &[VehicleRecord]) -> Result<Option<Divergence>> {
    if expected.len() != actual.len() {
        return Ok(Some(Divergence {
            step,
            vehicle: None,
            fields: vec!["vehicles.len".into()],
        }));
    }
    for (e, a) in expected.iter().zip(actual) {
        let mut fields = differing_fields(&e.state, &a.state, "state.")?;
        if e.status != a.status {
            fields.push("status".into());
        }
        if !fields.is_empty() {
            return Ok(Some(Divergence {
                step,
                vehicle: Some(e.state.id),
                fields,
            }));
        }
    }
    Ok(None)
}

/// Re-simulates the trace by re-applying its recorded commands and checks
/// that every vehicle state matches exactly.
pub fn replay(trace: &Trace) -> Result<ReplayReport> {
    let header = &trace.header;
    let world = if header.spawned {
        let (world, ids) = spawn_traffic(&header.spec.traffic, header.seed)?;
        if ids != header.platoon_ids || world != header.initial_world {
            let fields = differing_fields(&world, &header.initial_world, "world.")?;
            return Ok(ReplayReport {
                steps_checked: 0,
                divergence: Some(Divergence { step: 0, vehicle: None, fields }),
            });
        }
        world
    } else {
        header.initial_world.clone()
    };
    let mut episode = Episode::new(world, header.platoon_ids.clone(), header.spec.env.clone())?;
    for (k, rec) in trace.steps.iter().enumerate() {
        if episode.is_done() {
            return Ok(ReplayReport {
                steps_checked: k,
                divergence: Some(Divergence {
                    step: rec.step,
                    vehicle: None,
                    fields: vec!["done".into()],
                }),
            });
        }
        let result = episode.step_commands(&rec.commands)?;
        let actual = vehicle_records(&episode.world);
        let mut divergence = compare_vehicles(rec.step, &rec.vehicles, &actual)?;
        if divergence.is_none() && (episode.world.step_index != rec.step || result.info.reason != rec.done) {
            divergence = Some(Divergence {
                step: rec.step,
                vehicle: None,
                fields: vec!["step".into()],
            });
        }
        if divergence.is_some() {
            return Ok(ReplayReport {
                steps_checked: k,
                divergence,
            });
        }
    }
    Ok(ReplayReport {
        steps_checked: trace.steps.len(),
        divergence: None,
    })
}

/// Bumper gaps `(follower, predecessor, gap)` along the platoon ordered by
/// decreasing position.
pub fn platoon_gaps(members: &[&VehicleState]) -> Vec<(u32, u32, f64)> {
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| b.s.total_cmp(&a.s).then(a.id.cmp(&b.id)));
    sorted.windows(2).map(|w| (w[1].id, w[0].id, w[0].rear() - w[1].front())).collect()
}

#[derive(Serialize)]
struct PositionRow {
    step: u64,
    time: f64,
    id: u32,
    in_platoon: bool,
    lane: usize,
    s: f64,
    y: f64,
    v: f64,
    a: f64,
}

#[derive(Serialize)]
struct HeadwayRow {
    step: u64,
    time: f64,
    follower: u32,
    predecessor: u32,
    headway: f64,
}

/// Writes `positions.csv` (every vehicle, every step) and `headways.csv`
/// (platoon gaps) into `dir`.
pub fn emit_series(trace: &Trace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut positions = csv::Writer::from_path(dir.join("positions.csv"))?;
    let mut headways = csv::Writer::from_path(dir.join("headways.csv"))?;
    let ids = &trace.header.platoon_ids;
    for rec in &trace.steps {
        for v in &rec.vehicles {
            let s = &v.state;
            positions.serialize(PositionRow {
                step: rec.step,
                time: rec.time,
                id: s.id,
                in_platoon: ids.contains(&s.id),
                lane: s.lane,
                s: s.s,
                y: s.y,
                v: s.v,
                a: s.a,
            })?;
        }
        let members: Vec<&VehicleState> = rec.vehicles.iter().map(|v| &v.state).filter(|s| ids.contains(&s.id)).collect();
        for (follower, predecessor, headway) in platoon_gaps(&members) {
            headways.serialize(HeadwayRow {
                step: rec.step,
                time: rec.time,
                follower,
                predecessor,
                headway,
            })?;
        }
    }
    positions.flush()?;
    headways.flush()?;
    Ok(())
}
