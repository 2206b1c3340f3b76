//! Anytime Monte Carlo tree search over discrete driving actions, and the
//! receding-horizon loop that executes its first decision and replans.

mod tree;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{accumulate_trajectory_cost, terminal_penalty, CostBreakdown, CostModel};
use crate::frenet::RoadMap;
use crate::world::{check_collision, sweep_step, DriveAction, KinematicLimits, VehicleScript, WorldError, WorldState};

pub use tree::{ucb_value, NodeId, SearchTree, TreeNode, ROOT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("world at t={t} is already in collision")]
    StartInCollision { t: f64 },
    #[error("expansion contract violated: {0}")]
    Expansion(String),
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// How the executed action is picked from the root's children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalSelection {
    /// Lowest mean cost.
    #[default]
    MinMeanCost,
    /// Most visits (the "robust child").
    MostVisited,
}

/// What selection does with children whose edge collides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionLeaves {
    /// Never select them. A node whose children all collide is scored by its
    /// own rollout, which then collides as well.
    #[default]
    Prune,
    /// Select them like any other child; each visit charges the collision
    /// cost of the path.
    Charge,
}

/// Which rollout jerk draws are rejected and redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutGuard {
    /// Plain random draws.
    Off,
    /// Redraw levels whose next step collides.
    NextStep,
    /// Also redraw levels after which full braking cannot avoid a collision
    /// before the horizon.
    #[default]
    BrakingEscape,
}

/// Which rollout costs feed the running maximum that normalizes UCB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScale {
    /// Every rollout, collisions included.
    #[default]
    AllRollouts,
    /// Only rollouts that did not collide.
    CollisionFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub iterations: usize,
    pub lookahead_depth: usize,
    /// Duration of one tree edge, seconds.
    pub t1: f64,
    /// Planning horizon measured from the root, seconds.
    pub horizon: f64,
    pub ucb_const: f64,
    /// Probability of each jerk level during rollouts. Empty means uniform.
    pub rollout_probs: Vec<f64>,
    pub rollout_guard: RolloutGuard,
    pub collision_leaves: CollisionLeaves,
    /// Collision checks per step (swept check).
    pub collision_substeps: usize,
    pub rng_seed: u64,
    /// Optional wall-clock budget per plan call, seconds.
    pub time_budget: Option<f64>,
    pub final_selection: FinalSelection,
    pub cost_scale: CostScale,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lookahead_depth: 3,
            t1: 1.0,
            horizon: 8.0,
            ucb_const: 1.4,
            rollout_probs: Vec::new(),
            rollout_guard: RolloutGuard::BrakingEscape,
            collision_leaves: CollisionLeaves::Prune,
            collision_substeps: 4,
            rng_seed: 0,
            time_budget: None,
            final_selection: FinalSelection::MinMeanCost,
            cost_scale: CostScale::AllRollouts,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self, limits: &KinematicLimits) -> Result<(), PlannerError> {
        let err = |m: String| Err(PlannerError::Config(m));
        if self.iterations < 1 {
            return err("iterations must be at least 1".into());
        }
        if !(self.t1 > 0.0) || !(self.horizon > 0.0) {
            return err("t1 and horizon must be positive".into());
        }
        let steps = self.horizon / self.t1;
        if (steps - steps.round()).abs() > 1e-9 {
            return err(format!("horizon {} is not a multiple of t1 {}", self.horizon, self.t1));
        }
        if self.lookahead_depth < 1 || self.lookahead_depth > self.horizon_steps() {
            return err(format!(
                "lookahead_depth must be in 1..={} for horizon {} and t1 {}",
                self.horizon_steps(),
                self.horizon,
                self.t1
            ));
        }
        if !(self.ucb_const >= 0.0) {
            return err("ucb_const must be non-negative".into());
        }
        if !self.rollout_probs.is_empty() {
            if self.rollout_probs.len() != limits.jerk_set.len() {
                return err(format!(
                    "rollout_probs has {} entries for {} jerk levels",
                    self.rollout_probs.len(),
                    limits.jerk_set.len()
                ));
            }
            if self.rollout_probs.iter().any(|p| !(*p >= 0.0)) {
                return err("rollout_probs must be non-negative".into());
            }
            let sum: f64 = self.rollout_probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return err(format!("rollout_probs sum to {sum}, not 1"));
            }
        }
        if self.collision_substeps < 1 {
            return err("collision_substeps must be at least 1".into());
        }
        if let Some(b) = self.time_budget {
            if !(b > 0.0) {
                return err("time_budget must be positive".into());
            }
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.horizon / self.t1).round() as usize
    }

    fn rollout_weights(&self, levels: usize) -> Vec<f64> {
        if self.rollout_probs.is_empty() {
            vec![1.0 / levels as f64; levels]
        } else {
            self.rollout_probs.clone()
        }
    }
}

/// Everything about the world the planner treats as fixed.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub map: &'a RoadMap,
    pub scripts: &'a [VehicleScript],
    pub limits: &'a KinematicLimits,
    pub cost: &'a CostModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildStats {
    pub action: DriveAction,
    pub visits: u64,
    /// `None` while unvisited.
    pub mean_cost: Option<f64>,
    /// `None` stands for the unvisited `+inf` score.
    pub ucb: Option<f64>,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub best_action: DriveAction,
    pub root_stats: Vec<ChildStats>,
    pub iterations_run: usize,
    pub elapsed: Duration,
}

/// Runs the search from `world` and returns the action to execute.
pub fn plan(world: &WorldState, config: &PlannerConfig, problem: &Problem) -> Result<PlanResult, PlannerError> {
    let start = Instant::now();
    let mut tree = SearchTree::new(world, config, problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let deadline = config.time_budget.map(|b| start + Duration::from_secs_f64(b));
    let mut iterations_run = 0;
    while iterations_run < config.iterations {
        if let Some(d) = deadline {
            if iterations_run > 0 && iterations_run % 32 == 0 && Instant::now() >= d {
                break;
            }
        }
        tree.iterate(&mut rng)?;
        iterations_run += 1;
    }
    let best_action = best_root_action(&tree, config.final_selection);
    let root = tree.node(ROOT);
    let root_stats = root
        .children()
        .map(|c| {
            let n = tree.node(c);
            let ucb = tree.ucb(c, root.visits.max(1));
            ChildStats {
                action: n.action.expect("child has an action"),
                visits: n.visits,
                mean_cost: n.mean_cost(),
                ucb: ucb.is_finite().then_some(ucb),
                collided: n.collided,
            }
        })
        .collect();
    Ok(PlanResult {
        best_action,
        root_stats,
        iterations_run,
        elapsed: start.elapsed(),
    })
}

/// Picks among visited root children; ties go to the lowest action ordinal.
/// With no visited child, falls back to the cheapest non-colliding edge.
fn best_root_action(tree: &SearchTree, mode: FinalSelection) -> DriveAction {
    let root = tree.node(ROOT);
    let mut best: Option<(NodeId, f64)> = None;
    for c in root.children() {
        let n = tree.node(c);
        if n.visits == 0 {
            continue;
        }
        let key = match mode {
            FinalSelection::MinMeanCost => n.total_cost / n.visits as f64,
            FinalSelection::MostVisited => -(n.visits as f64),
        };
        if best.is_none_or(|(_, k)| key < k) {
            best = Some((c, key));
        }
    }
    if let Some((c, _)) = best {
        return tree.node(c).action.expect("child has an action");
    }
    let fallback = root
        .children()
        .filter(|&c| !tree.node(c).collided)
        .min_by(|&a, &b| tree.node(a).edge_cost.total_cmp(&tree.node(b).edge_cost))
        .or(root.children().next());
    match fallback {
        Some(c) => tree.node(c).action.expect("child has an action"),
        None => DriveAction::keep(0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

/// Planner statistics attached to a trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStats {
    pub iterations_run: usize,
    pub root_stats: Vec<ChildStats>,
}

/// The world at `t = step * t1` and what happened next.
///
/// Every executed step has a record with its action and step cost. The last
/// record holds the final world; its `action` and `planner` are `None` and
/// its cost carries only the end-of-run pass/fail penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    pub world: WorldState,
    pub action: Option<DriveAction>,
    pub cost: CostBreakdown,
    pub planner: Option<PlanStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub outcome: Outcome,
    pub records: Vec<TraceRecord>,
    pub total_cost: f64,
    /// Wall-clock time of each plan call, seconds. Not part of the
    /// deterministic record.
    #[serde(skip)]
    pub latencies: Vec<f64>,
}

/// Latencies are wall-clock measurements and do not take part in equality.
impl PartialEq for Trace {
    fn eq(&self, other: &Self) -> bool {
        self.outcome == other.outcome && self.records == other.records && self.total_cost == other.total_cost
    }
}

impl Trace {
    /// Number of executed steps.
    pub fn steps(&self) -> usize {
        self.records.iter().filter(|r| r.action.is_some()).count()
    }

    pub fn final_world(&self) -> &WorldState {
        &self.records.last().expect("a trace has at least one record").world
    }
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_add((step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Plans, executes the chosen action for one step, and repeats with a fresh
/// tree until the goal is reached, a collision happens, the goal deadline
/// passes, or `max_steps` steps have run.
pub fn receding_horizon_run(
    initial: &WorldState,
    config: &PlannerConfig,
    problem: &Problem,
    max_steps: usize,
) -> Result<Trace, PlannerError> {
    config.validate(problem.limits)?;
    let goal = &problem.map.goal;
    let model = problem.cost;
    let mut world = initial.clone();
    let mut records = Vec::new();
    let mut executed: Vec<(WorldState, DriveAction)> = Vec::new();
    let mut latencies = Vec::new();
    let satisfied = |w: &WorldState| goal.is_satisfied(w.ego.s, w.ego.lane, w.lane_change.is_some());
    if check_collision(&world) {
        return Err(PlannerError::StartInCollision { t: world.t });
    }
    let mut outcome = if satisfied(&world) { Some(Outcome::Success) } else { None };
    let mut step = 0;
    while outcome.is_none() {
        let cfg = PlannerConfig {
            rng_seed: step_seed(config.rng_seed, step),
            ..config.clone()
        };
        let result = plan(&world, &cfg, problem)?;
        latencies.push(result.elapsed.as_secs_f64());
        let a = result.best_action;
        let swept = sweep_step(
            &world,
            a,
            problem.scripts,
            problem.limits,
            problem.map,
            config.t1,
            config.collision_substeps,
        )?;
        let cost = model.step_cost(&swept.world, &a, problem.limits, goal, swept.collided);
        records.push(TraceRecord {
            step,
            t: world.t,
            world,
            action: Some(a),
            cost,
            planner: Some(PlanStats {
                iterations_run: result.iterations_run,
                root_stats: result.root_stats,
            }),
        });
        world = swept.world;
        executed.push((world.clone(), a));
        step += 1;
        outcome = if swept.collided {
            Some(Outcome::Collision)
        } else if satisfied(&world) {
            Some(Outcome::Success)
        } else if step >= max_steps || world.t >= goal.deadline - 1e-9 {
            Some(Outcome::Timeout)
        } else {
            None
        };
    }
    let outcome = outcome.expect("loop exits with an outcome");
    let final_penalty = if outcome == Outcome::Collision {
        0.0
    } else {
        terminal_penalty(&world, goal, &model.params)
    };
    records.push(TraceRecord {
        step,
        t: world.t,
        world,
        action: None,
        cost: CostBreakdown::from_components(0.0, 0.0, final_penalty, 0.0, &model.weights),
        planner: None,
    });
    let total_cost = if executed.is_empty() {
        0.0
    } else {
        accumulate_trajectory_cost(&executed, goal, model, problem.limits, true).total
    };
    Ok(Trace {
        outcome,
        records,
        total_cost,
        latencies,
    })
}
