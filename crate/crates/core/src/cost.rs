//! The composite driving objective: a weighted sum of safety, comfort,
//! passability, and maneuver costs accumulated over a trajectory.

use serde::{Deserialize, Serialize};

use crate::frenet::{distance_to_goal, GoalRegion};
use crate::world::{
    check_collision, min_gap, pairwise_distance, DriveAction, KinematicLimits, Lateral, VehicleState, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub w_s: f64,
    pub w_c: f64,
    pub w_p: f64,
    pub w_o: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_s: 1.0,
            w_c: 0.1,
            w_p: 1.0,
            w_o: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.w_s, self.w_c, self.w_p, self.w_o];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err("weights must be finite and non-negative".into());
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err("at least one weight must be positive".into());
        }
        Ok(())
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            w_s: self.w_s * lambda,
            w_c: self.w_c * lambda,
            w_p: self.w_p * lambda,
            w_o: self.w_o * lambda,
        }
    }
}

/// How the safety term aggregates over neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyAggregation {
    /// Only the closest vehicle counts.
    #[default]
    MinGap,
    /// Every vehicle within the threshold contributes.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    pub d_thresh: f64,
    pub k_jerk: f64,
    pub goal_scale: f64,
    pub fail_penalty: f64,
    pub lane_change_cost: f64,
    /// Finite stand-in for the infinite cost of a collision.
    pub collision_cost: f64,
    pub safety_aggregation: SafetyAggregation,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            d_thresh: 10.0,
            k_jerk: 1.0,
            goal_scale: 0.1,
            fail_penalty: 500.0,
            lane_change_cost: 2.0,
            collision_cost: 1e6,
            safety_aggregation: SafetyAggregation::MinGap,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_thresh > 0.0) {
            return Err(format!("d_thresh must be positive, got {}", self.d_thresh));
        }
        let non_neg = [
            ("k_jerk", self.k_jerk),
            ("goal_scale", self.goal_scale),
            ("fail_penalty", self.fail_penalty),
            ("lane_change_cost", self.lane_change_cost),
        ];
        if let Some((name, v)) = non_neg.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(format!("{name} must be finite and non-negative, got {v}"));
        }
        // The saturated collision cost has to dwarf anything a collision-free
        // trajectory can accumulate.
        let typical = self.fail_penalty.max(self.lane_change_cost).max(1.0 / self.d_thresh).max(1.0);
        if !(self.collision_cost >= 1e3 * typical) || !self.collision_cost.is_finite() {
            return Err(format!(
                "collision_cost {} must be finite and at least 1000x the other penalties ({typical})",
                self.collision_cost
            ));
        }
        Ok(())
    }
}

/// Per-component costs with their weighted total.
///
/// `total` is always `((w_s*safety + w_c*comfort) + w_p*passability) + w_o*other`,
/// evaluated in that order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBreakdown {
    pub safety: f64,
    pub comfort: f64,
    pub passability: f64,
    pub other: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn from_components(safety: f64, comfort: f64, passability: f64, other: f64, w: &CostWeights) -> Self {
        Self {
            safety,
            comfort,
            passability,
            other,
            total: w.w_s * safety + w.w_c * comfort + w.w_p * passability + w.w_o * other,
        }
    }

    /// Component-wise sum, total recomputed from the summed components.
    pub fn combine(&self, rhs: &CostBreakdown, w: &CostWeights) -> Self {
        Self::from_components(
            self.safety + rhs.safety,
            self.comfort + rhs.comfort,
            self.passability + rhs.passability,
            self.other + rhs.other,
            w,
        )
    }
}

/// Unweighted running sums used while accumulating a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Components {
    pub safety: f64,
    pub comfort: f64,
    pub passability: f64,
    pub other: f64,
}

impl Components {
    pub fn add(&mut self, rhs: &Components) {
        self.safety += rhs.safety;
        self.comfort += rhs.comfort;
        self.passability += rhs.passability;
        self.other += rhs.other;
    }

    pub fn breakdown(&self, w: &CostWeights) -> CostBreakdown {
        CostBreakdown::from_components(self.safety, self.comfort, self.passability, self.other, w)
    }
}

/// Safety cost as a function of one gap: zero beyond the threshold, `1/gap`
/// inside it, and the saturated collision cost at contact.
pub fn safety_from_gap(gap: f64, p: &CostParams) -> f64 {
    if gap <= 0.0 {
        p.collision_cost
    } else if gap <= p.d_thresh {
        1.0 / gap
    } else {
        0.0
    }
}

pub fn safety_cost(w: &WorldState, p: &CostParams) -> f64 {
    safety_parts(&w.ego, &w.others, p)
}

fn safety_parts(ego: &VehicleState, others: &[VehicleState], p: &CostParams) -> f64 {
    match p.safety_aggregation {
        SafetyAggregation::MinGap => min_gap(ego, others).map_or(0.0, |g| safety_from_gap(g, p)),
        SafetyAggregation::Sum => others.iter().map(|o| safety_from_gap(pairwise_distance(ego, o), p)).sum(),
    }
}

pub fn comfort_cost(jerk: f64, p: &CostParams) -> f64 {
    p.k_jerk * jerk * jerk
}

/// Distance-to-goal term, plus the pass/fail penalty when `terminal`.
pub fn passability_cost(w: &WorldState, goal: &GoalRegion, p: &CostParams, terminal: bool) -> f64 {
    let progress = p.goal_scale * distance_to_goal(w.ego.s, goal);
    if terminal {
        progress + terminal_penalty(w, goal, p)
    } else {
        progress
    }
}

pub(crate) fn terminal_penalty(w: &WorldState, goal: &GoalRegion, p: &CostParams) -> f64 {
    terminal_penalty_parts(&w.ego, w.lane_change.is_some(), goal, p)
}

pub(crate) fn terminal_penalty_parts(ego: &VehicleState, changing_lanes: bool, goal: &GoalRegion, p: &CostParams) -> f64 {
    if goal.is_satisfied(ego.s, ego.lane, changing_lanes) {
        0.0
    } else {
        p.fail_penalty
    }
}

pub fn other_cost(a: &DriveAction, p: &CostParams) -> f64 {
    match a.lateral {
        Lateral::Keep => 0.0,
        Lateral::LeftChange | Lateral::RightChange => p.lane_change_cost,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub params: CostParams,
}

impl CostModel {
    pub fn new(weights: CostWeights, params: CostParams) -> Self {
        Self { weights, params }
    }

    /// Unweighted costs of one step that ended in `w` after taking `a`.
    /// `collided` replaces the proximity term with the collision cost.
    pub(crate) fn step_components(
        &self,
        w: &WorldState,
        a: &DriveAction,
        limits: &KinematicLimits,
        goal: &GoalRegion,
        collided: bool,
    ) -> Components {
        self.step_components_parts(&w.ego, &w.others, a, limits, goal, collided)
    }

    pub(crate) fn step_components_parts(
        &self,
        ego: &VehicleState,
        others: &[VehicleState],
        a: &DriveAction,
        limits: &KinematicLimits,
        goal: &GoalRegion,
        collided: bool,
    ) -> Components {
        let p = &self.params;
        Components {
            safety: if collided { p.collision_cost } else { safety_parts(ego, others, p) },
            comfort: comfort_cost(limits.jerk(a.jerk_level), p),
            passability: p.goal_scale * distance_to_goal(ego.s, goal),
            other: other_cost(a, p),
        }
    }

    /// Weighted cost of one step, as recorded in traces.
    pub fn step_cost(
        &self,
        w: &WorldState,
        a: &DriveAction,
        limits: &KinematicLimits,
        goal: &GoalRegion,
        collided: bool,
    ) -> CostBreakdown {
        self.step_components(w, a, limits, goal, collided).breakdown(&self.weights)
    }
}

/// Sums the per-step costs of `steps`, where each entry is the world reached
/// after taking the paired action.
///
/// Components are summed left to right and weighted once at the end. When
/// `terminal` is set, the pass/fail penalty is charged unless some world in
/// `steps` satisfied the goal.
/// A step whose world is in collision is charged the collision cost and ends
/// the accumulation; later steps and the terminal penalty are not scored.
pub fn accumulate_trajectory_cost(
    steps: &[(WorldState, DriveAction)],
    goal: &GoalRegion,
    model: &CostModel,
    limits: &KinematicLimits,
    terminal: bool,
) -> CostBreakdown {
    let mut sum = Components::default();
    let mut reached = false;
    for (w, a) in steps {
        reached = reached || goal.is_satisfied(w.ego.s, w.ego.lane, w.lane_change.is_some());
        let collided = check_collision(w);
        sum.add(&model.step_components(w, a, limits, goal, collided));
        if collided {
            return sum.breakdown(&model.weights);
        }
    }
    if terminal && !reached {
        if let Some((last, _)) = steps.last() {
            sum.passability += terminal_penalty(last, goal, &model.params);
        }
    }
    sum.breakdown(&model.weights)
}
