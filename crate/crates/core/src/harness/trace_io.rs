//! Newline-delimited JSON trace files: one header line, then one line per
//! trace record. Step lines carry Cartesian poses for rendering next to the
//! Frenet state.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::cost::CostBreakdown;
use crate::frenet::{GoalRegion, Pose, RoadMap, Waypoint};
use crate::planner::{Outcome, PlanStats, Trace, TraceRecord};
use crate::world::{DriveAction, WorldState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSnapshot {
    pub lane_count: usize,
    pub lane_width: f64,
    pub lane_d_centers: Vec<f64>,
    pub reference: Vec<Waypoint>,
    pub goal: GoalRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub record: String,
    pub schema_version: u32,
    pub scenario: String,
    pub outcome: Outcome,
    pub total_cost: f64,
    pub t1: f64,
    pub records: usize,
    pub road: RoadSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CartesianSnapshot {
    ego: Pose,
    others: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepLine {
    record: String,
    step: usize,
    t: f64,
    world: WorldState,
    cartesian: CartesianSnapshot,
    action: Option<DriveAction>,
    cost: CostBreakdown,
    planner: Option<PlanStats>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn pose(map: &RoadMap, s: f64, d: f64) -> Pose {
    map.reference_line.frenet_to_cartesian_extended(s, d)
}

/// Writes `trace` as NDJSON. Output bytes depend only on the trace and map.
pub fn write_trace(
    trace: &Trace,
    scenario: &str,
    t1: f64,
    map: &RoadMap,
    out: &mut impl Write,
) -> std::io::Result<()> {
    let header = TraceHeader {
        record: "header".into(),
        schema_version: SCHEMA_VERSION,
        scenario: scenario.to_owned(),
        outcome: trace.outcome,
        total_cost: trace.total_cost,
        t1,
        records: trace.records.len(),
        road: RoadSnapshot {
            lane_count: map.lane_count,
            lane_width: map.lane_width,
            lane_d_centers: map.lane_d_centers.clone(),
            reference: map.reference_line.waypoints().to_vec(),
            goal: map.goal.clone(),
        },
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for r in &trace.records {
        let line = StepLine {
            record: "step".into(),
            step: r.step,
            t: r.t,
            cartesian: CartesianSnapshot {
                ego: pose(map, r.world.ego.s, r.world.ego.d),
                others: r.world.others.iter().map(|o| pose(map, o.s, o.d)).collect(),
            },
            world: r.world.clone(),
            action: r.action,
            cost: r.cost,
            planner: r.planner.clone(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn export_trace(trace: &Trace, scenario: &str, t1: f64, map: &RoadMap, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_trace(trace, scenario, t1, map, &mut w).map_err(io_err(path))
}

/// Parses an NDJSON trace. Latencies are not stored in the file and come
/// back empty.
pub fn read_trace(input: impl Read) -> Result<(TraceHeader, Trace), HarnessError> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let fmt = |index: usize, message: String| HarnessError::Format { index, message };
    let (_, first) = lines.next().ok_or_else(|| fmt(0, "empty trace file".into()))?;
    let first = first.map_err(|e| fmt(0, e.to_string()))?;
    let version: serde_json::Value = serde_json::from_str(&first).map_err(|e| fmt(0, e.to_string()))?;
    match version.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(fmt(0, format!("unsupported schema version {v}"))),
        None => return Err(fmt(0, "header has no schema_version".into())),
    }
    let header: TraceHeader = serde_json::from_str(&first).map_err(|e| fmt(0, e.to_string()))?;
    if header.record != "header" {
        return Err(fmt(0, format!("expected a header record, found {:?}", header.record)));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| fmt(i, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: StepLine = serde_json::from_str(&line).map_err(|e| fmt(i, e.to_string()))?;
        if s.record != "step" {
            return Err(fmt(i, format!("expected a step record, found {:?}", s.record)));
        }
        records.push(TraceRecord {
            step: s.step,
            t: s.t,
            world: s.world,
            action: s.action,
            cost: s.cost,
            planner: s.planner,
        });
    }
    if records.len() != header.records {
        return Err(fmt(
            records.len() + 1,
            format!("header announces {} records, found {}", header.records, records.len()),
        ));
    }
    let trace = Trace {
        outcome: header.outcome,
        records,
        total_cost: header.total_cost,
        latencies: Vec::new(),
    };
    Ok((header, trace))
}

pub fn import_trace(path: &Path) -> Result<(TraceHeader, Trace), HarnessError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_trace(file)
}
