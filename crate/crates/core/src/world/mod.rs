//! Vehicle states, the discrete action set, world stepping under kinematic
//! limits, and collision detection.

mod geometry;
mod script;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::RoadMap;

pub use geometry::{check_collision, min_gap, pairwise_distance};
pub(crate) use geometry::overlaps_any;
pub use script::{step_others, ScriptSegment, VehicleScript};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("action {action} is not feasible: {reason}")]
    InfeasibleAction { action: DriveAction, reason: String },
    #[error("invalid kinematic limits: {0}")]
    Limits(String),
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

/// One vehicle in Frenet coordinates. `length` spans `s` and `width` spans `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleState {
    pub s: f64,
    pub d: f64,
    pub speed: f64,
    #[serde(default)]
    pub accel: f64,
    pub lane: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            s: 0.0,
            d: 0.0,
            speed: 0.0,
            accel: 0.0,
            lane: 0,
            length: default_length(),
            width: default_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lateral {
    Keep,
    LeftChange,
    RightChange,
}

impl Lateral {
    pub const ALL: [Lateral; 3] = [Lateral::Keep, Lateral::LeftChange, Lateral::RightChange];
}

/// A tree edge: a longitudinal jerk level (index into the configured jerk
/// set) paired with a lateral maneuver.
///
/// The derived ordering is the canonical one used for tie-breaking: jerk
/// ascending, then keep < left < right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveAction {
    pub jerk_level: usize,
    pub lateral: Lateral,
}

impl DriveAction {
    pub fn keep(jerk_level: usize) -> Self {
        Self {
            jerk_level,
            lateral: Lateral::Keep,
        }
    }

    /// Position in the canonical ordering.
    pub fn ordinal(&self) -> usize {
        self.jerk_level * 3 + self.lateral as usize
    }
}

impl std::fmt::Display for DriveAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lat = match self.lateral {
            Lateral::Keep => "keep",
            Lateral::LeftChange => "left",
            Lateral::RightChange => "right",
        };
        write!(f, "j{}/{lat}", self.jerk_level)
    }
}

/// An in-flight lane change. The vehicle's `lane` stays the origin lane
/// until `progress` reaches 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChange {
    pub target_lane: usize,
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: f64,
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
    pub lane_change: Option<LaneChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicLimits {
    pub v_max: f64,
    pub v_min: f64,
    pub a_max: f64,
    pub a_min: f64,
    /// Jerk levels in m/s^3, ascending.
    pub jerk_set: Vec<f64>,
    pub lane_change_duration: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self {
            v_max: 20.0,
            v_min: 0.0,
            a_max: 3.0,
            a_min: -5.0,
            jerk_set: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            lane_change_duration: 1.0,
        }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<(), WorldError> {
        let err = |m: String| Err(WorldError::Limits(m));
        if self.v_min != 0.0 {
            return err(format!("v_min must be 0, got {}", self.v_min));
        }
        if !(self.v_max > 0.0) {
            return err(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.a_min < 0.0 && self.a_max > 0.0) {
            return err(format!(
                "need a_min < 0 < a_max, got [{}, {}]",
                self.a_min, self.a_max
            ));
        }
        if !(self.lane_change_duration > 0.0) {
            return err("lane_change_duration must be positive".into());
        }
        if self.jerk_set.windows(2).any(|w| !(w[0] < w[1])) {
            return err("jerk_set must be strictly ascending".into());
        }
        if !self.jerk_set.contains(&0.0) {
            return err("jerk_set must contain 0".into());
        }
        let n = self.jerk_set.len();
        for (i, j) in self.jerk_set.iter().enumerate() {
            if (j + self.jerk_set[n - 1 - i]).abs() > 1e-12 {
                return err("jerk_set must be symmetric about 0".into());
            }
        }
        Ok(())
    }

    /// Index of the zero-jerk level.
    pub fn zero_jerk_level(&self) -> usize {
        self.jerk_set
            .iter()
            .position(|&j| j == 0.0)
            .expect("validated jerk_set contains 0")
    }

    pub fn jerk(&self, level: usize) -> f64 {
        self.jerk_set[level]
    }
}

/// Lateral maneuvers available from the given ego lane situation.
pub(crate) fn lateral_options(
    lane: usize,
    lane_change: Option<&LaneChange>,
    map: &RoadMap,
) -> impl Iterator<Item = Lateral> {
    let in_flight = lane_change.is_some();
    let can_left = !in_flight && lane < map.leftmost_lane();
    let can_right = !in_flight && lane > 0;
    Lateral::ALL.into_iter().filter(move |l| match l {
        Lateral::Keep => true,
        Lateral::LeftChange => can_left,
        Lateral::RightChange => can_right,
    })
}

pub(crate) fn feasible_for(
    lane: usize,
    lane_change: Option<&LaneChange>,
    limits: &KinematicLimits,
    map: &RoadMap,
) -> Vec<DriveAction> {
    let laterals: Vec<Lateral> = lateral_options(lane, lane_change, map).collect();
    let mut out = Vec::with_capacity(limits.jerk_set.len() * laterals.len());
    for jerk_level in 0..limits.jerk_set.len() {
        out.extend(laterals.iter().map(|&lateral| DriveAction {
            jerk_level,
            lateral,
        }));
    }
    out
}

/// Every jerk level crossed with every lateral maneuver that stays on the
/// road. While a lane change is in flight only `keep` is offered. Clamping in
/// [`step_ego`] keeps every jerk level within the kinematic limits, so none
/// is ever dropped. The result is in canonical order and never empty.
pub fn feasible_actions(w: &WorldState, limits: &KinematicLimits, map: &RoadMap) -> Vec<DriveAction> {
    feasible_for(w.ego.lane, w.lane_change.as_ref(), limits, map)
}

fn check_action(
    ego: &VehicleState,
    lane_change: Option<&LaneChange>,
    a: DriveAction,
    limits: &KinematicLimits,
    map: &RoadMap,
) -> Result<(), WorldError> {
    let fail = |reason: &str| {
        Err(WorldError::InfeasibleAction {
            action: a,
            reason: reason.to_owned(),
        })
    };
    if a.jerk_level >= limits.jerk_set.len() {
        return fail("jerk level out of range");
    }
    if !lateral_options(ego.lane, lane_change, map).any(|l| l == a.lateral) {
        return fail(if lane_change.is_some() {
            "lane change already in flight"
        } else {
            "lane change leaves the road"
        });
    }
    Ok(())
}

/// Ego kinematics over `dt` without feasibility checks. Shared by the
/// planner's sub-step sweeps so intermediate states use the same formulas.
pub(crate) fn advance_ego(
    ego: &VehicleState,
    lane_change: Option<&LaneChange>,
    a: DriveAction,
    limits: &KinematicLimits,
    map: &RoadMap,
    dt: f64,
) -> (VehicleState, Option<LaneChange>) {
    let jerk = limits.jerk_set[a.jerk_level];
    let mut accel = (ego.accel + jerk * dt).clamp(limits.a_min, limits.a_max);
    let raw_speed = ego.speed + 0.5 * (ego.accel + accel) * dt;
    let speed = raw_speed.clamp(limits.v_min, limits.v_max);
    // A vehicle pinned at a speed bound does not keep accelerating into it.
    if (speed <= limits.v_min && accel < 0.0) || (speed >= limits.v_max && accel > 0.0) {
        accel = 0.0;
    }
    let s = ego.s + 0.5 * (ego.speed + speed) * dt;

    let mut next = VehicleState {
        s,
        speed,
        accel,
        ..*ego
    };
    let change = match (lane_change, a.lateral) {
        (Some(lc), _) => Some(*lc),
        (None, Lateral::Keep) => None,
        (None, Lateral::LeftChange) => Some(LaneChange {
            target_lane: ego.lane + 1,
            progress: 0.0,
        }),
        (None, Lateral::RightChange) => Some(LaneChange {
            target_lane: ego.lane - 1,
            progress: 0.0,
        }),
    };
    let change = change.and_then(|lc| {
        let progress = lc.progress + dt / limits.lane_change_duration;
        let origin = map.lane_center(ego.lane);
        let target = map.lane_center(lc.target_lane);
        if progress >= 1.0 - 1e-9 {
            next.lane = lc.target_lane;
            next.d = target;
            None
        } else {
            next.d = origin + (target - origin) * progress;
            Some(LaneChange {
                target_lane: lc.target_lane,
                progress,
            })
        }
    });
    (next, change)
}

/// Advances the ego by `dt` under action `a`; other vehicles are untouched.
///
/// Acceleration and speed are clamped to the limits and integrated with the
/// trapezoidal rule, which is exact for speed under piecewise-constant jerk.
/// Lateral motion moves `d` linearly toward the target lane center over
/// `lane_change_duration`; the lane index switches when the change completes.
pub fn step_ego(
    w: &WorldState,
    a: DriveAction,
    limits: &KinematicLimits,
    map: &RoadMap,
    dt: f64,
) -> Result<WorldState, WorldError> {
    check_action(&w.ego, w.lane_change.as_ref(), a, limits, map)?;
    let (ego, lane_change) = advance_ego(&w.ego, w.lane_change.as_ref(), a, limits, map, dt);
    Ok(WorldState {
        t: w.t + dt,
        ego,
        others: w.others.clone(),
        lane_change,
    })
}

/// Result of executing one action over one step with a swept collision check.
#[derive(Debug, Clone, PartialEq)]
pub struct SweptStep {
    /// World at the end of the step, or frozen at the impact configuration
    /// (stamped with the end-of-step time) when a collision occurred.
    pub world: WorldState,
    pub collided: bool,
}

/// Steps ego and scripted traffic together over `dt`, checking for overlap at
/// `substeps` evenly spaced instants so fast crossings cannot tunnel through
/// each other between step boundaries.
///
/// On impact the vehicles stop where they collided: the returned world holds
/// the impact positions with zero speed.
#[allow(clippy::too_many_arguments)]
pub fn sweep_step(
    w: &WorldState,
    a: DriveAction,
    scripts: &[VehicleScript],
    limits: &KinematicLimits,
    map: &RoadMap,
    dt: f64,
    substeps: usize,
) -> Result<SweptStep, WorldError> {
    check_action(&w.ego, w.lane_change.as_ref(), a, limits, map)?;
    let substeps = substeps.max(1);
    let end_others = step_others(w, scripts, map, dt).others;
    for j in 1..=substeps {
        let h = if j == substeps {
            dt
        } else {
            dt * j as f64 / substeps as f64
        };
        let (ego, lane_change) = advance_ego(&w.ego, w.lane_change.as_ref(), a, limits, map, h);
        let others = if j == substeps {
            end_others.clone()
        } else {
            step_others(w, scripts, map, h).others
        };
        if overlaps_any(&ego, &others) {
            let stop = |v: VehicleState| VehicleState {
                speed: 0.0,
                accel: 0.0,
                ..v
            };
            return Ok(SweptStep {
                world: WorldState {
                    t: w.t + dt,
                    ego: stop(ego),
                    others: others.into_iter().map(stop).collect(),
                    lane_change,
                },
                collided: true,
            });
        }
        if j == substeps {
            return Ok(SweptStep {
                world: WorldState {
                    t: w.t + dt,
                    ego,
                    others,
                    lane_change,
                },
                collided: false,
            });
        }
    }
    unreachable!("loop returns on the final sub-step")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frenet::{GoalKind, GoalRegion, ReferenceLine};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn map3() -> RoadMap {
        RoadMap::new(
            ReferenceLine::straight(500.0).unwrap(),
            3,
            3.5,
            GoalRegion {
                kind: GoalKind::ProgressLine,
                s_goal: 400.0,
                required_lane: None,
                deadline: 30.0,
            },
        )
        .unwrap()
    }

    fn world(speed: f64, accel: f64, lane: usize) -> WorldState {
        WorldState {
            t: 0.0,
            ego: VehicleState {
                s: 0.0,
                d: 3.5 * lane as f64,
                speed,
                accel,
                lane,
                ..VehicleState::default()
            },
            others: vec![],
            lane_change: None,
        }
    }

    #[test]
    fn default_limits_are_valid() {
        KinematicLimits::default().validate().unwrap();
        let mut l = KinematicLimits {
            jerk_set: vec![-2.0, 0.0, 1.0],
            ..KinematicLimits::default()
        };
        assert!(l.validate().is_err());
        l.jerk_set = vec![-1.0, 1.0];
        assert!(l.validate().is_err());
    }

    #[test]
    fn action_counts() {
        let (limits, map) = (KinematicLimits::default(), map3());
        assert_eq!(feasible_actions(&world(10.0, 0.0, 1), &limits, &map).len(), 15);
        let left = feasible_actions(&world(10.0, 0.0, 2), &limits, &map);
        assert_eq!(left.len(), 10);
        assert!(left.iter().all(|a| a.lateral != Lateral::LeftChange));
        let right = feasible_actions(&world(10.0, 0.0, 0), &limits, &map);
        assert_eq!(right.len(), 10);
        assert!(right.iter().all(|a| a.lateral != Lateral::RightChange));
    }

    #[test]
    fn actions_are_in_canonical_order() {
        let acts = feasible_actions(&world(10.0, 0.0, 1), &KinematicLimits::default(), &map3());
        assert!(acts.windows(2).all(|w| w[0] < w[1]));
        assert!(acts.windows(2).all(|w| w[0].ordinal() < w[1].ordinal()));
    }

    #[test]
    fn mid_change_offers_keep_only() {
        let map = map3();
        let limits = KinematicLimits {
            lane_change_duration: 2.0,
            ..KinematicLimits::default()
        };
        let w0 = world(10.0, 0.0, 1);
        let a = DriveAction {
            jerk_level: 2,
            lateral: Lateral::LeftChange,
        };
        let w1 = step_ego(&w0, a, &limits, &map, 1.0).unwrap();
        let lc = w1.lane_change.expect("change in flight");
        assert_eq!(lc.target_lane, 2);
        assert_abs_diff_eq!(lc.progress, 0.5);
        assert_abs_diff_eq!(w1.ego.d, 3.5 + 1.75);
        assert_eq!(w1.ego.lane, 1);
        let acts = feasible_actions(&w1, &limits, &map);
        assert_eq!(acts.len(), 5);
        assert!(acts.iter().all(|a| a.lateral == Lateral::Keep));
        assert!(step_ego(&w1, a, &limits, &map, 1.0).is_err());
        // Completes exactly one duration after it started.
        let w2 = step_ego(&w1, DriveAction::keep(2), &limits, &map, 1.0).unwrap();
        assert!(w2.lane_change.is_none());
        assert_eq!(w2.ego.lane, 2);
        assert_eq!(w2.ego.d, 7.0);
        assert_eq!(w2.t, 2.0);
    }

    #[test]
    fn uniform_motion() {
        let w = step_ego(&world(10.0, 0.0, 1), DriveAction::keep(2), &KinematicLimits::default(), &map3(), 1.0).unwrap();
        assert_eq!(w.ego.speed, 10.0);
        assert_eq!(w.ego.s, 10.0);
        assert_eq!(w.t, 1.0);
    }

    #[test]
    fn trapezoidal_integration() {
        // Closed form with constant jerk j from a0 = 0: a = j t, v = v0 + j t^2/2.
        // Trapezoid on v gives s = (v0 + v1)/2 * dt.
        let w = step_ego(&world(10.0, 0.0, 1), DriveAction::keep(3), &KinematicLimits::default(), &map3(), 1.0).unwrap();
        let (j, v0, dt) = (1.0, 10.0, 1.0);
        let v1 = v0 + 0.5 * j * dt * dt;
        assert_eq!(w.ego.accel, 1.0);
        assert_eq!(w.ego.speed, v1);
        assert_eq!(w.ego.s, 0.5 * (v0 + v1) * dt);
        assert_eq!(w.ego.s, 10.25);
    }

    #[test]
    fn clamped_at_rest() {
        let w = step_ego(&world(0.0, 0.0, 1), DriveAction::keep(0), &KinematicLimits::default(), &map3(), 1.0).unwrap();
        assert_eq!(w.ego.speed, 0.0);
        assert_eq!(w.ego.s, 0.0);
        assert_eq!(w.ego.accel, 0.0);
    }

    #[test]
    fn out_of_range_jerk_rejected() {
        let r = step_ego(&world(10.0, 0.0, 1), DriveAction::keep(9), &KinematicLimits::default(), &map3(), 1.0);
        assert!(matches!(r, Err(WorldError::InfeasibleAction { .. })));
        let off_road = DriveAction {
            jerk_level: 2,
            lateral: Lateral::LeftChange,
        };
        assert!(step_ego(&world(10.0, 0.0, 2), off_road, &KinematicLimits::default(), &map3(), 1.0).is_err());
    }

    #[test]
    fn swept_step_catches_crossing_between_boundaries() {
        // A crossing vehicle sweeps across the ego's path mid-step; both
        // endpoints are clear but the middle of the step is not.
        let map = map3();
        let limits = KinematicLimits::default();
        let mut w = world(10.0, 0.0, 0);
        w.others.push(VehicleState {
            s: 5.0,
            d: 5.0,
            speed: 0.0,
            lane: 0,
            length: 1.8,
            width: 4.5,
            accel: 0.0,
        });
        let scripts = vec![VehicleScript::Crossing { lateral_speed: -10.0 }];
        let end = step_others(&w, &scripts, &map, 1.0);
        let end = step_ego(&end, DriveAction::keep(2), &limits, &map, 1.0).unwrap();
        assert!(!check_collision(&w));
        assert!(!check_collision(&end));
        let swept = sweep_step(&w, DriveAction::keep(2), &scripts, &limits, &map, 1.0, 4).unwrap();
        assert!(swept.collided);
        assert!(check_collision(&swept.world));
        assert_eq!(swept.world.t, 1.0);
        assert_eq!(swept.world.ego.speed, 0.0);
    }

    #[test]
    fn swept_step_matches_plain_steps_without_contact() {
        let map = map3();
        let limits = KinematicLimits::default();
        let mut w = world(12.0, 0.5, 1);
        w.others.push(VehicleState {
            s: 60.0,
            d: 3.5,
            speed: 9.0,
            lane: 1,
            ..VehicleState::default()
        });
        let scripts = vec![VehicleScript::ConstantSpeed];
        let a = DriveAction {
            jerk_level: 1,
            lateral: Lateral::RightChange,
        };
        let swept = sweep_step(&w, a, &scripts, &limits, &map, 1.0, 5).unwrap();
        let plain = step_ego(&step_others(&w, &scripts, &map, 1.0), a, &limits, &map, 1.0).unwrap();
        assert!(!swept.collided);
        assert_eq!(swept.world, plain);
    }

    proptest! {
        #[test]
        fn step_respects_limits(
            speed in 0.0..20.0f64,
            accel in -5.0..3.0f64,
            jerk_level in 0usize..5,
            dt in 0.05..2.0f64,
        ) {
            let limits = KinematicLimits::default();
            let w = step_ego(&world(speed, accel, 1), DriveAction::keep(jerk_level), &limits, &map3(), dt).unwrap();
            prop_assert!(w.ego.speed >= 0.0 && w.ego.speed <= limits.v_max);
            prop_assert!(w.ego.accel >= limits.a_min && w.ego.accel <= limits.a_max);
            prop_assert!(w.ego.s >= 0.0);
        }

        #[test]
        fn jerk_zero_preserves_uniform_motion(speed in 0.0..20.0f64, dt in 0.05..2.0f64) {
            let w = step_ego(&world(speed, 0.0, 1), DriveAction::keep(2), &KinematicLimits::default(), &map3(), dt).unwrap();
            prop_assert_eq!(w.ego.speed, speed);
            prop_assert_eq!(w.ego.s, speed * dt);
        }
    }
}
