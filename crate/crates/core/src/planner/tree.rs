//! Arena-backed search tree and the four MCTS phases.

use rand::Rng;

use super::{CollisionLeaves, CostScale, PlannerConfig, PlannerError, Problem, RolloutGuard};
use crate::cost::{terminal_penalty_parts, Components};
use crate::world::{
    advance_ego, feasible_for, overlaps_any, step_others, DriveAction, LaneChange, VehicleState, WorldState,
};

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

/// Exploration bonus and normalized exploitation term for one child.
///
/// Unvisited children score `+inf` so every sibling is tried once before any
/// is revisited.
pub fn ucb_value(total_cost: f64, visits: u64, parent_visits: u64, c: f64, cost_scale: f64) -> f64 {
    if visits == 0 {
        return f64::INFINITY;
    }
    let n = visits as f64;
    -(total_cost / cost_scale) / n + c * (2.0 * (parent_visits as f64).ln() / n).sqrt()
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    pub action: Option<DriveAction>,
    pub depth: usize,
    pub ego: VehicleState,
    pub lane_change: Option<LaneChange>,
    /// The step into this node ran into another vehicle.
    pub collided: bool,
    /// Some state on the root-to-node path satisfied the goal.
    pub reached: bool,
    pub visits: u64,
    pub total_cost: f64,
    /// Unweighted cost of the root-to-node path.
    pub(crate) path: Components,
    /// Weighted cost of the edge into this node.
    pub edge_cost: f64,
    children: Option<(NodeId, usize)>,
    /// Rollouts started at this node itself.
    pub rollouts: u64,
}

impl TreeNode {
    pub fn children(&self) -> std::ops::Range<NodeId> {
        match self.children {
            Some((first, n)) => first..first + n,
            None => 0..0,
        }
    }

    pub fn is_expanded(&self) -> bool {
        self.children.is_some()
    }

    pub fn mean_cost(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.total_cost / self.visits as f64)
    }
}

/// Scripted traffic is independent of the ego, so its positions at every
/// step boundary and collision sub-step are computed once per plan call.
struct Forecast {
    /// `frames[k]`: others at `k` steps after the root.
    frames: Vec<Vec<VehicleState>>,
    /// `sub[k][j]`: others at sub-step `j + 1` of step `k`.
    sub: Vec<Vec<Vec<VehicleState>>>,
}

impl Forecast {
    fn new(world: &WorldState, problem: &Problem, t1: f64, steps: usize, substeps: usize) -> Self {
        let mut frames = Vec::with_capacity(steps + 1);
        let mut sub = Vec::with_capacity(steps);
        let mut w = world.clone();
        frames.push(w.others.clone());
        for _ in 0..steps {
            let inner: Vec<_> = (1..substeps)
                .map(|j| step_others(&w, problem.scripts, problem.map, t1 * j as f64 / substeps as f64).others)
                .collect();
            sub.push(inner);
            w = step_others(&w, problem.scripts, problem.map, t1);
            w.t += t1;
            frames.push(w.others.clone());
        }
        Self { frames, sub }
    }
}

#[derive(Clone, Copy)]
struct StepResult {
    ego: VehicleState,
    lane_change: Option<LaneChange>,
    collided: bool,
}

pub struct SearchTree<'a> {
    problem: &'a Problem<'a>,
    config: &'a PlannerConfig,
    root_time: f64,
    steps: usize,
    forecast: Forecast,
    nodes: Vec<TreeNode>,
    rollout_weights: Vec<f64>,
    /// Largest rollout cost seen so far; normalizes the UCB exploitation
    /// term.
    max_cost: f64,
}

impl<'a> SearchTree<'a> {
    pub fn new(world: &WorldState, config: &'a PlannerConfig, problem: &'a Problem<'a>) -> Result<Self, PlannerError> {
        if overlaps_any(&world.ego, &world.others) {
            return Err(PlannerError::StartInCollision { t: world.t });
        }
        let steps = config.horizon_steps();
        let substeps = config.collision_substeps.max(1);
        let forecast = Forecast::new(world, problem, config.t1, steps, substeps);
        let mut nodes = Vec::with_capacity(1 + 8 * config.iterations.min(1 << 16));
        nodes.push(TreeNode {
            parent: None,
            action: None,
            depth: 0,
            ego: world.ego,
            lane_change: world.lane_change,
            collided: false,
            reached: false,
            visits: 0,
            total_cost: 0.0,
            path: Components::default(),
            edge_cost: 0.0,
            children: None,
            rollouts: 0,
        });
        let rollout_weights = config.rollout_weights(problem.limits.jerk_set.len());
        Ok(Self {
            problem,
            config,
            root_time: world.t,
            steps,
            forecast,
            nodes,
            rollout_weights,
            max_cost: 0.0,
        })
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    #[cfg(test)]
    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id]
    }

    #[cfg(test)]
    pub(crate) fn set_max_cost(&mut self, c: f64) {
        self.max_cost = c;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cost_scale(&self) -> f64 {
        if self.max_cost > 0.0 {
            self.max_cost
        } else {
            1.0
        }
    }

    /// Full world snapshot at a node.
    pub fn world(&self, id: NodeId) -> WorldState {
        let n = &self.nodes[id];
        let mut t = self.root_time;
        for _ in 0..n.depth {
            t += self.config.t1;
        }
        WorldState {
            t,
            ego: n.ego,
            others: self.forecast.frames[n.depth].clone(),
            lane_change: n.lane_change,
        }
    }

    pub fn ucb(&self, child: NodeId, parent_visits: u64) -> f64 {
        let n = &self.nodes[child];
        ucb_value(n.total_cost, n.visits, parent_visits, self.config.ucb_const, self.cost_scale())
    }

    /// Descends by maximal UCB until reaching an unvisited node, a node at
    /// the lookahead depth, or a node that collided. With pruning, colliding
    /// children are skipped and a node left with none stops the descent.
    pub fn select(&self) -> NodeId {
        let mut id = ROOT;
        loop {
            let n = &self.nodes[id];
            if n.collided || n.depth >= self.config.lookahead_depth || n.visits == 0 || !n.is_expanded() {
                return id;
            }
            let scale = self.cost_scale();
            let log_n = 2.0 * (n.visits as f64).ln();
            let mut best = None;
            let mut best_score = f64::NEG_INFINITY;
            let prune = self.config.collision_leaves == CollisionLeaves::Prune;
            for c in n.children() {
                let ch = &self.nodes[c];
                if prune && ch.collided {
                    continue;
                }
                let score = if ch.visits == 0 {
                    f64::INFINITY
                } else {
                    let v = ch.visits as f64;
                    -(ch.total_cost / scale) / v + self.config.ucb_const * (log_n / v).sqrt()
                };
                if best.is_none() || score > best_score {
                    best = Some(c);
                    best_score = score;
                }
            }
            match best {
                Some(c) => id = c,
                None => return id,
            }
        }
    }

    fn simulate(&self, ego: &VehicleState, lc: Option<&LaneChange>, a: DriveAction, k: usize) -> StepResult {
        let (limits, map) = (self.problem.limits, self.problem.map);
        let n = self.config.collision_substeps.max(1);
        let dt = self.config.t1;
        for j in 1..=n {
            let (h, others) = if j == n {
                (dt, &self.forecast.frames[k + 1])
            } else {
                (dt * j as f64 / n as f64, &self.forecast.sub[k][j - 1])
            };
            let (e, lane_change) = advance_ego(ego, lc, a, limits, map, h);
            if overlaps_any(&e, others) {
                return StepResult {
                    ego: VehicleState {
                        speed: 0.0,
                        accel: 0.0,
                        ..e
                    },
                    lane_change,
                    collided: true,
                };
            }
            if j == n {
                return StepResult {
                    ego: e,
                    lane_change,
                    collided: false,
                };
            }
        }
        unreachable!("final sub-step returns")
    }

    fn step_components(&self, r: &StepResult, a: &DriveAction, k: usize) -> Components {
        self.problem.cost.step_components_parts(
            &r.ego,
            &self.forecast.frames[k + 1],
            a,
            self.problem.limits,
            &self.problem.map.goal,
            r.collided,
        )
    }

    /// Creates one child per feasible action of `id`.
    pub fn expand(&mut self, id: NodeId) -> Result<std::ops::Range<NodeId>, PlannerError> {
        let n = &self.nodes[id];
        if n.depth >= self.config.lookahead_depth {
            return Err(PlannerError::Expansion(format!(
                "node at depth {} is at the lookahead bound {}",
                n.depth, self.config.lookahead_depth
            )));
        }
        if n.is_expanded() {
            return Err(PlannerError::Expansion(format!("node {id} is already expanded")));
        }
        if n.collided {
            return Err(PlannerError::Expansion(format!("node {id} is a collision leaf")));
        }
        let (ego, lc, depth, path, reached) = (n.ego, n.lane_change, n.depth, n.path, n.reached);
        let actions = feasible_for(ego.lane, lc.as_ref(), self.problem.limits, self.problem.map);
        let first = self.nodes.len();
        let w = &self.problem.cost.weights;
        for a in &actions {
            let r = self.simulate(&ego, lc.as_ref(), *a, depth);
            let edge = self.step_components(&r, a, depth);
            let mut p = path;
            p.add(&edge);
            self.nodes.push(TreeNode {
                parent: Some(id),
                action: Some(*a),
                depth: depth + 1,
                ego: r.ego,
                lane_change: r.lane_change,
                collided: r.collided,
                reached: reached || self.satisfied(&r.ego, r.lane_change.is_some()),
                visits: 0,
                total_cost: 0.0,
                path: p,
                edge_cost: edge.breakdown(w).total,
                children: None,
                rollouts: 0,
            });
        }
        self.nodes[id].children = Some((first, actions.len()));
        Ok(first..self.nodes.len())
    }

    /// Whether braking as hard as the jerk set allows from `from`, starting
    /// at step `k`, stays clear of every vehicle until the ego stops or the
    /// horizon ends.
    fn can_escape(&self, from: &StepResult, k: usize) -> bool {
        let brake = DriveAction::keep(0);
        let mut ego = from.ego;
        let mut lc = from.lane_change;
        for step in k..self.steps {
            if ego.speed <= 0.0 {
                return true;
            }
            let r = self.simulate(&ego, lc.as_ref(), brake, step);
            if r.collided {
                return false;
            }
            ego = r.ego;
            lc = r.lane_change;
        }
        true
    }

    fn satisfied(&self, ego: &VehicleState, changing_lanes: bool) -> bool {
        self.problem.map.goal.is_satisfied(ego.s, ego.lane, changing_lanes)
    }

    fn sample_jerk(&self, weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (i, &wt) in weights.iter().enumerate() {
            if wt <= 0.0 {
                continue;
            }
            acc += wt;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
        last
    }

    /// Random lane-keeping continuation from `id` to the horizon. Returns the
    /// weighted cost of the whole trajectory from the root, including the
    /// pass/fail penalty at the horizon unless some state on the way met the
    /// goal.
    ///
    /// Under a rollout guard a rejected jerk level is dropped and the draw
    /// repeated over the remaining levels. `NextStep` rejects levels whose
    /// step collides; `BrakingEscape` also rejects levels after which full
    /// braking cannot stop clear of traffic. If nothing passes, the first
    /// draw that survived the step is used, else the first draw.
    pub fn rollout(&self, id: NodeId, rng: &mut impl Rng) -> f64 {
        let n = &self.nodes[id];
        let model = self.problem.cost;
        let mut path = n.path;
        if n.collided {
            return path.breakdown(&model.weights).total;
        }
        let mut ego = n.ego;
        let mut lc = n.lane_change;
        let mut reached = n.reached;
        let mut weights = self.rollout_weights.clone();
        for k in n.depth..self.steps {
            weights.copy_from_slice(&self.rollout_weights);
            let first = self.sample_jerk(&weights, rng).expect("rollout weights have positive mass");
            let mut level = first;
            let mut r = self.simulate(&ego, lc.as_ref(), DriveAction::keep(level), k);
            if self.config.rollout_guard != RolloutGuard::Off {
                // First draw that survives the next step, used when no draw
                // passes the full guard.
                let mut survivor: Option<(usize, StepResult)> = None;
                loop {
                    if !r.collided {
                        if self.config.rollout_guard == RolloutGuard::NextStep || self.can_escape(&r, k + 1) {
                            break;
                        }
                        survivor.get_or_insert((level, r));
                    }
                    weights[level] = 0.0;
                    match self.sample_jerk(&weights, rng) {
                        Some(l) => {
                            level = l;
                            r = self.simulate(&ego, lc.as_ref(), DriveAction::keep(level), k);
                        }
                        None => {
                            (level, r) = match survivor {
                                Some(v) => v,
                                None => (first, self.simulate(&ego, lc.as_ref(), DriveAction::keep(first), k)),
                            };
                            break;
                        }
                    }
                }
            }
            let a = DriveAction::keep(level);
            path.add(&self.step_components(&r, &a, k));
            if r.collided {
                return path.breakdown(&model.weights).total;
            }
            ego = r.ego;
            lc = r.lane_change;
            reached = reached || self.satisfied(&ego, lc.is_some());
        }
        if !reached {
            path.passability += terminal_penalty_parts(&ego, lc.is_some(), &self.problem.map.goal, &model.params);
        }
        path.breakdown(&model.weights).total
    }

    /// Adds `cost` and one visit to every node from `leaf` up to the root.
    pub fn backpropagate(&mut self, leaf: NodeId, cost: f64) {
        let counts = match self.config.cost_scale {
            CostScale::AllRollouts => true,
            CostScale::CollisionFree => cost < self.problem.cost.params.collision_cost,
        };
        if counts && cost > self.max_cost {
            self.max_cost = cost;
        }
        self.nodes[leaf].rollouts += 1;
        let mut id = Some(leaf);
        while let Some(i) = id {
            let n = &mut self.nodes[i];
            n.total_cost += cost;
            n.visits += 1;
            id = n.parent;
        }
    }

    /// One select / expand / rollout / backpropagate cycle.
    pub fn iterate(&mut self, rng: &mut impl Rng) -> Result<(), PlannerError> {
        let leaf = self.select();
        let n = &self.nodes[leaf];
        if !n.collided && n.visits == 0 && n.depth < self.config.lookahead_depth && !n.is_expanded() {
            self.expand(leaf)?;
        }
        let cost = self.rollout(leaf, rng);
        self.backpropagate(leaf, cost);
        Ok(())
    }
}
