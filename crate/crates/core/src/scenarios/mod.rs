//! Scenario configurations: road, goal, traffic, limits, costs and planner
//! settings, plus the seeded generators for the benchmark worlds.

mod presets;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostModel, CostParams, CostWeights};
use crate::frenet::{GoalRegion, MapError, ReferenceLine, RoadMap};
use crate::planner::{PlannerConfig, Problem};
use crate::world::{pairwise_distance, KinematicLimits, VehicleScript, VehicleState, WorldState};

pub use presets::{
    make_he, make_qualitative_intersection, make_qualitative_ramp, make_sln, make_ulti, scenario_by_name,
    RAMP_CUT_IN_TIME, SCENARIO_NAMES,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("config parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Straight {
        length: f64,
    },
    /// Straight approach, circular arc, straight exit. Positive angles turn
    /// left.
    Bend {
        approach: f64,
        radius: f64,
        angle_deg: f64,
        exit: f64,
        spacing: f64,
    },
    Polyline {
        points: Vec<[f64; 2]>,
    },
}

impl ReferenceSpec {
    pub fn build(&self) -> Result<ReferenceLine, MapError> {
        match self {
            ReferenceSpec::Straight { length } => ReferenceLine::straight(*length),
            ReferenceSpec::Bend {
                approach,
                radius,
                angle_deg,
                exit,
                spacing,
            } => ReferenceLine::bend(*approach, *radius, angle_deg.to_radians(), *exit, *spacing),
            ReferenceSpec::Polyline { points } => {
                let pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
                ReferenceLine::from_points(&pts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSpec {
    pub reference: ReferenceSpec,
    pub lane_count: usize,
    pub lane_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedVehicle {
    pub initial: VehicleState,
    pub script: VehicleScript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub road: RoadSpec,
    pub goal: GoalRegion,
    pub ego_initial: VehicleState,
    #[serde(default)]
    pub others: Vec<ScriptedVehicle>,
    #[serde(default)]
    pub limits: KinematicLimits,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub cost_params: CostParams,
    #[serde(default)]
    pub planner: PlannerConfig,
    pub max_steps: usize,
}

/// Planner settings that can be replaced on a generated config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub iterations: Option<usize>,
    pub lookahead_depth: Option<usize>,
    pub t1: Option<f64>,
    pub horizon: Option<f64>,
    pub ucb_const: Option<f64>,
    pub rng_seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        let p = &mut cfg.planner;
        if let Some(v) = self.iterations {
            p.iterations = v;
        }
        if let Some(v) = self.lookahead_depth {
            p.lookahead_depth = v;
        }
        if let Some(v) = self.t1 {
            p.t1 = v;
        }
        if let Some(v) = self.horizon {
            p.horizon = v;
        }
        if let Some(v) = self.ucb_const {
            p.ucb_const = v;
        }
        if let Some(v) = self.rng_seed {
            p.rng_seed = v;
        }
    }
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub map: RoadMap,
    pub world: WorldState,
    pub scripts: Vec<VehicleScript>,
    pub limits: KinematicLimits,
    pub cost: CostModel,
    pub planner: PlannerConfig,
    pub max_steps: usize,
}

impl Scenario {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            map: &self.map,
            scripts: &self.scripts,
            limits: &self.limits,
            cost: &self.cost,
        }
    }
}

const LANE_EPS: f64 = 1e-9;

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::Parse {
            path: String::new(),
            message: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario configs serialize to TOML")
    }

    fn build_map(&self) -> Result<RoadMap, ScenarioError> {
        if self.road.lane_count < 1 {
            return Err(invalid("road.lane_count", "need at least one lane"));
        }
        if !(self.road.lane_width > 0.0) {
            return Err(invalid("road.lane_width", "must be positive"));
        }
        let line = self
            .road
            .reference
            .build()
            .map_err(|e| invalid("road.reference", e.to_string()))?;
        RoadMap::new(line, self.road.lane_count, self.road.lane_width, self.goal.clone())
            .map_err(|e| invalid("goal", e.to_string()))
    }

    fn check_vehicle(&self, path: &str, v: &VehicleState, map: &RoadMap, on_lane: bool) -> Result<(), ScenarioError> {
        if !(v.length > 0.0 && v.width > 0.0) {
            return Err(invalid(format!("{path}.length"), "footprint must be positive"));
        }
        if !(v.s.is_finite() && v.d.is_finite() && v.speed.is_finite() && v.accel.is_finite()) {
            return Err(invalid(path, "state must be finite"));
        }
        if on_lane {
            if v.lane >= map.lane_count {
                return Err(invalid(
                    format!("{path}.lane"),
                    format!("lane {} does not exist ({} lanes)", v.lane, map.lane_count),
                ));
            }
            if (v.d - map.lane_center(v.lane)).abs() > LANE_EPS {
                return Err(invalid(
                    format!("{path}.d"),
                    format!("d = {} is not the center of lane {}", v.d, v.lane),
                ));
            }
        }
        Ok(())
    }

    fn check_script(&self, path: &str, v: &VehicleState, script: &VehicleScript, map: &RoadMap) -> Result<(), ScenarioError> {
        match script {
            VehicleScript::ConstantSpeed | VehicleScript::Crossing { .. } => Ok(()),
            VehicleScript::Piecewise {
                segments,
                change_duration,
            } => {
                let path = format!("{path}.script");
                if segments.is_empty() {
                    return Err(invalid(format!("{path}.segments"), "need at least one segment"));
                }
                if !(*change_duration > 0.0) {
                    return Err(invalid(format!("{path}.change_duration"), "must be positive"));
                }
                if segments[0].t_start != 0.0 {
                    return Err(invalid(format!("{path}.segments[0].t_start"), "first segment must start at 0"));
                }
                if segments[0].lane != v.lane || segments[0].speed != v.speed {
                    return Err(invalid(
                        format!("{path}.segments[0]"),
                        "first segment must match the initial lane and speed",
                    ));
                }
                for (i, g) in segments.iter().enumerate() {
                    if g.lane >= map.lane_count {
                        return Err(invalid(format!("{path}.segments[{i}].lane"), "lane does not exist"));
                    }
                    if !(g.speed >= 0.0) {
                        return Err(invalid(format!("{path}.segments[{i}].speed"), "must be non-negative"));
                    }
                    if i > 0 {
                        let prev = &segments[i - 1];
                        if !(g.t_start > prev.t_start) {
                            return Err(invalid(format!("{path}.segments[{i}].t_start"), "segments must be time-ordered"));
                        }
                        if g.lane.abs_diff(prev.lane) > 1 {
                            return Err(invalid(
                                format!("{path}.segments[{i}].lane"),
                                "lane transitions must be between adjacent lanes",
                            ));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Checks every invariant and reports the first violation with its
    /// field path.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        self.limits.validate().map_err(|e| invalid("limits", e.to_string()))?;
        self.weights.validate().map_err(|e| invalid("weights", e))?;
        self.cost_params.validate().map_err(|e| invalid("cost_params", e))?;
        self.planner
            .validate(&self.limits)
            .map_err(|e| invalid("planner", e.to_string()))?;
        if self.max_steps < 1 {
            return Err(invalid("max_steps", "must be at least 1"));
        }
        let map = self.build_map()?;
        let ego = &self.ego_initial;
        self.check_vehicle("ego_initial", ego, &map, true)?;
        if !(0.0..=self.limits.v_max).contains(&ego.speed) {
            return Err(invalid("ego_initial.speed", format!("must be in [0, {}]", self.limits.v_max)));
        }
        if !(self.limits.a_min..=self.limits.a_max).contains(&ego.accel) {
            return Err(invalid("ego_initial.accel", "outside the acceleration limits"));
        }
        if !(0.0..=map.reference_line.length()).contains(&ego.s) {
            return Err(invalid("ego_initial.s", "outside the reference line"));
        }
        for (i, o) in self.others.iter().enumerate() {
            let path = format!("others[{i}]");
            let on_lane = !matches!(o.script, VehicleScript::Crossing { .. });
            self.check_vehicle(&format!("{path}.initial"), &o.initial, &map, on_lane)?;
            self.check_script(&path, &o.initial, &o.script, &map)?;
            if pairwise_distance(ego, &o.initial) == 0.0 {
                return Err(invalid(format!("{path}.initial"), "overlaps the ego at t = 0"));
            }
        }
        Ok(Scenario {
            name: self.name.clone(),
            world: WorldState {
                t: 0.0,
                ego: *ego,
                others: self.others.iter().map(|o| o.initial).collect(),
                lane_change: None,
            },
            scripts: self.others.iter().map(|o| o.script.clone()).collect(),
            map,
            limits: self.limits.clone(),
            cost: CostModel::new(self.weights, self.cost_params),
            planner: self.planner.clone(),
            max_steps: self.max_steps,
        })
    }
}
