//! Seeded generators for the benchmark worlds.
//!
//! All geometry, speeds and deadlines below are chosen for this simulator;
//! the seed jitters them within the ranges written next to each value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Overrides, ReferenceSpec, RoadSpec, ScenarioConfig, ScenarioError, ScriptedVehicle};
use crate::cost::{CostParams, CostWeights};
use crate::frenet::{GoalKind, GoalRegion};
use crate::planner::PlannerConfig;
use crate::world::{KinematicLimits, ScriptSegment, VehicleScript, VehicleState};

pub const SCENARIO_NAMES: [&str; 5] = ["ulti", "he", "sln", "intersection", "ramp"];

const LANE_WIDTH: f64 = 3.5;

fn jitter(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0xA24B_AED4_963E_E407))
}

fn on_lane(s: f64, lane: usize, speed: f64) -> VehicleState {
    VehicleState {
        s,
        d: lane as f64 * LANE_WIDTH,
        speed,
        lane,
        ..VehicleState::default()
    }
}

fn constant(s: f64, lane: usize, speed: f64) -> ScriptedVehicle {
    ScriptedVehicle {
        initial: on_lane(s, lane, speed),
        script: VehicleScript::ConstantSpeed,
    }
}

/// A slow vehicle that moves from `from` into `to` at `t_cut`.
fn cut_in(s: f64, from: usize, to: usize, speed: f64, t_cut: f64) -> ScriptedVehicle {
    ScriptedVehicle {
        initial: on_lane(s, from, speed),
        script: VehicleScript::Piecewise {
            segments: vec![
                ScriptSegment {
                    t_start: 0.0,
                    speed,
                    lane: from,
                },
                ScriptSegment {
                    t_start: t_cut,
                    speed,
                    lane: to,
                },
            ],
            change_duration: 1.0,
        },
    }
}

/// Cross traffic at arc length `s`: a car whose long axis runs across the
/// corridor, reaching `d = 0` at time `t_cross`. Positive `speed` comes from
/// the left (large `d`) and moves right.
fn crossing(s: f64, t_cross: f64, speed: f64) -> ScriptedVehicle {
    ScriptedVehicle {
        initial: VehicleState {
            s,
            d: speed * t_cross,
            speed: 0.0,
            accel: 0.0,
            lane: 0,
            length: 1.8,
            width: 4.5,
        },
        script: VehicleScript::Crossing { lateral_speed: -speed },
    }
}

fn base(name: &str, road: RoadSpec, goal: GoalRegion, ego: VehicleState, others: Vec<ScriptedVehicle>) -> ScenarioConfig {
    let max_steps = goal.deadline.ceil() as usize;
    ScenarioConfig {
        name: name.to_owned(),
        road,
        goal,
        ego_initial: ego,
        others,
        limits: KinematicLimits::default(),
        weights: CostWeights::default(),
        cost_params: CostParams::default(),
        planner: PlannerConfig::default(),
        max_steps,
    }
}

fn finish(mut cfg: ScenarioConfig, seed: u64, overrides: &Overrides) -> ScenarioConfig {
    cfg.planner.rng_seed = seed;
    overrides.apply(&mut cfg);
    cfg
}

/// Unprotected left turn: the route bends left through an intersection,
/// the turn must be taken from the left lane, and five cross-traffic cars
/// pass through two conflict points. The deadline only leaves room for the
/// early gaps.
pub fn make_ulti(seed: u64, overrides: &Overrides) -> ScenarioConfig {
    let mut r = jitter(seed, 1);
    let road = RoadSpec {
        reference: ReferenceSpec::Bend {
            approach: 100.0,
            radius: 25.0,
            angle_deg: 90.0,
            exit: 150.0,
            spacing: 1.0,
        },
        lane_count: 2,
        lane_width: LANE_WIDTH,
    };
    let goal = GoalRegion {
        kind: GoalKind::IntersectionCrossing,
        s_goal: 160.0,
        required_lane: Some(1),
        deadline: 10.0,
    };
    let ego = on_lane(60.0, 0, r.gen_range(9.0..11.0));
    // Near conflict point: traffic from the left; far point: from the right.
    let near = 92.0 + r.gen_range(-2.0..2.0);
    let far = 128.0 + r.gen_range(-2.0..2.0);
    let mut others = Vec::with_capacity(5);
    for t in [2.5, 4.5, 6.5] {
        others.push(crossing(near, t + r.gen_range(0.0..1.5), r.gen_range(8.0..15.0)));
    }
    for t in [4.0, 6.0] {
        others.push(crossing(far, t + r.gen_range(0.0..1.5), -r.gen_range(8.0..15.0)));
    }
    finish(base("ulti", road, goal, ego, others), seed, overrides)
}

/// Highway exit: the exit is in the rightmost lane and a slow car cuts into
/// that lane ahead of the ego.
pub fn make_he(seed: u64, overrides: &Overrides) -> ScenarioConfig {
    let mut r = jitter(seed, 2);
    let road = RoadSpec {
        reference: ReferenceSpec::Straight { length: 500.0 },
        lane_count: 3,
        lane_width: LANE_WIDTH,
    };
    let s0 = 60.0;
    let goal = GoalRegion {
        kind: GoalKind::RampExit,
        s_goal: s0 + r.gen_range(170.0..190.0),
        required_lane: Some(0),
        deadline: 24.0,
    };
    let ego = on_lane(s0, 0, r.gen_range(11.0..13.0));
    let others = vec![
        cut_in(s0 + r.gen_range(22.0..32.0), 1, 0, 6.0, r.gen_range(2.0..4.0)),
        constant(s0 + r.gen_range(70.0..100.0), 1, r.gen_range(13.0..15.0)),
        constant(s0 + r.gen_range(0.0..30.0), 2, r.gen_range(12.0..15.0)),
        constant(s0 + r.gen_range(-40.0..-20.0), 2, r.gen_range(9.0..11.0)),
        constant(s0 + r.gen_range(-45.0..-30.0), 0, r.gen_range(8.0..10.0)),
    ];
    finish(base("he", road, goal, ego, others), seed, overrides)
}

/// Straight three-lane road with a slower leader and traffic on both sides.
pub fn make_sln(seed: u64, overrides: &Overrides) -> ScenarioConfig {
    let mut r = jitter(seed, 3);
    let road = RoadSpec {
        reference: ReferenceSpec::Straight { length: 600.0 },
        lane_count: 3,
        lane_width: LANE_WIDTH,
    };
    let s0 = 60.0;
    let goal = GoalRegion {
        kind: GoalKind::ProgressLine,
        s_goal: s0 + 200.0,
        required_lane: None,
        deadline: 30.0,
    };
    let ego = on_lane(s0, 1, r.gen_range(12.0..14.0));
    let others = vec![
        constant(s0 + r.gen_range(35.0..55.0), 1, r.gen_range(9.0..11.0)),
        constant(s0 + r.gen_range(20.0..60.0), 0, r.gen_range(10.0..13.0)),
        constant(s0 + r.gen_range(60.0..100.0), 2, r.gen_range(11.0..14.0)),
        constant(s0 + r.gen_range(-45.0..-25.0), 0, r.gen_range(8.0..10.5)),
        constant(s0 + r.gen_range(-50.0..-30.0), 2, r.gen_range(8.0..10.5)),
    ];
    finish(base("sln", road, goal, ego, others), seed, overrides)
}

/// One car approaching the intersection from the left while the ego turns.
pub fn make_qualitative_intersection(overrides: &Overrides) -> ScenarioConfig {
    let mut cfg = make_ulti(0, &Overrides::default());
    cfg.name = "intersection".into();
    cfg.others = vec![crossing(92.0, 7.0, 10.0)];
    cfg.planner.rng_seed = 0;
    overrides.apply(&mut cfg);
    cfg
}

/// Time at which the ramp scenario's slow car starts moving into the ego lane.
pub const RAMP_CUT_IN_TIME: f64 = 2.0;

/// A slow car cuts into the exit lane just ahead of the ego, which has to
/// dodge left and come back before the ramp.
pub fn make_qualitative_ramp(overrides: &Overrides) -> ScenarioConfig {
    let road = RoadSpec {
        reference: ReferenceSpec::Straight { length: 500.0 },
        lane_count: 3,
        lane_width: LANE_WIDTH,
    };
    let s0 = 60.0;
    let goal = GoalRegion {
        kind: GoalKind::RampExit,
        s_goal: s0 + 160.0,
        required_lane: Some(0),
        deadline: 20.0,
    };
    let ego = on_lane(s0, 0, 12.0);
    let others = vec![
        cut_in(s0 + 20.0, 1, 0, 6.0, RAMP_CUT_IN_TIME),
        constant(s0 + 90.0, 0, 14.0),
        constant(s0 - 30.0, 2, 10.0),
    ];
    let mut cfg = base("ramp", road, goal, ego, others);
    overrides.apply(&mut cfg);
    cfg
}

/// Generator lookup for the CLI and batch runner. Fixed scenarios ignore the
/// seed except for the planner seed.
pub fn scenario_by_name(name: &str, seed: u64, overrides: &Overrides) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = match name {
        "ulti" => return Ok(make_ulti(seed, overrides)),
        "he" => return Ok(make_he(seed, overrides)),
        "sln" => return Ok(make_sln(seed, overrides)),
        "intersection" => make_qualitative_intersection(&Overrides::default()),
        "ramp" => make_qualitative_ramp(&Overrides::default()),
        other => return Err(ScenarioError::UnknownScenario(other.to_owned())),
    };
    cfg.planner.rng_seed = seed;
    overrides.apply(&mut cfg);
    Ok(cfg)
}
