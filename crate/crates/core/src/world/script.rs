//! Scripted (perfectly predicted) motion of the non-ego vehicles.

use serde::{Deserialize, Serialize};

use super::{VehicleState, WorldState};
use crate::frenet::RoadMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSegment {
    pub t_start: f64,
    pub speed: f64,
    pub lane: usize,
}

fn default_change_duration() -> f64 {
    1.0
}

/// How a non-ego vehicle moves. Scripts are functions of time only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VehicleScript {
    /// Keeps its initial speed and lane.
    ConstantSpeed,
    /// Follows a time-ordered `(t_start, speed, lane)` schedule starting at
    /// t = 0. Speed switches instantly at each segment start; a lane switch
    /// moves `d` linearly to the new lane center over `change_duration`.
    Piecewise {
        segments: Vec<ScriptSegment>,
        #[serde(default = "default_change_duration")]
        change_duration: f64,
    },
    /// Cross traffic: stays at its `s` and sweeps across the corridor along
    /// `d` at `lateral_speed` (m/s, negative moves right).
    Crossing { lateral_speed: f64 },
}

impl VehicleScript {
    fn active_segment(segments: &[ScriptSegment], t: f64) -> usize {
        segments
            .partition_point(|g| g.t_start <= t + 1e-9)
            .saturating_sub(1)
    }

    /// State of a vehicle following this script at time `t + dt`, given its
    /// state `v` at time `t`.
    pub fn advance(&self, v: &VehicleState, t: f64, dt: f64, map: &RoadMap) -> VehicleState {
        match self {
            VehicleScript::ConstantSpeed => VehicleState {
                s: v.s + v.speed * dt,
                ..*v
            },
            VehicleScript::Crossing { lateral_speed } => VehicleState {
                d: v.d + lateral_speed * dt,
                ..*v
            },
            VehicleScript::Piecewise {
                segments,
                change_duration,
            } => {
                let end = t + dt;
                let mut s = v.s;
                let mut tau = t;
                while tau < end {
                    let k = Self::active_segment(segments, tau);
                    let next = segments
                        .get(k + 1)
                        .map(|g| g.t_start)
                        .filter(|&ts| ts < end)
                        .unwrap_or(end);
                    s += segments[k].speed * (next - tau);
                    tau = next;
                }
                let k = Self::active_segment(segments, end);
                let seg = segments[k];
                let center = map.lane_center(seg.lane);
                let d = match k.checked_sub(1).map(|p| segments[p].lane) {
                    Some(prev) if prev != seg.lane && end - seg.t_start < *change_duration => {
                        let from = map.lane_center(prev);
                        from + (center - from) * ((end - seg.t_start) / change_duration)
                    }
                    _ => center,
                };
                VehicleState {
                    s,
                    d,
                    speed: seg.speed,
                    accel: 0.0,
                    lane: seg.lane,
                    ..*v
                }
            }
        }
    }
}

/// Advances every scripted vehicle by `dt`. `scripts[i]` drives `w.others[i]`.
/// The ego and the clock are left untouched.
pub fn step_others(w: &WorldState, scripts: &[VehicleScript], map: &RoadMap, dt: f64) -> WorldState {
    assert_eq!(
        scripts.len(),
        w.others.len(),
        "one script per other vehicle"
    );
    WorldState {
        others: w
            .others
            .iter()
            .zip(scripts)
            .map(|(v, script)| script.advance(v, w.t, dt, map))
            .collect(),
        ..w.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frenet::{GoalKind, GoalRegion, ReferenceLine};

    fn map() -> RoadMap {
        RoadMap::new(
            ReferenceLine::straight(500.0).unwrap(),
            2,
            3.5,
            GoalRegion {
                kind: GoalKind::RampExit,
                s_goal: 300.0,
                required_lane: Some(0),
                deadline: 30.0,
            },
        )
        .unwrap()
    }

    fn world_with(other: VehicleState) -> WorldState {
        WorldState {
            t: 0.0,
            ego: VehicleState::default(),
            others: vec![other],
            lane_change: None,
        }
    }

    #[test]
    fn constant_speed_advances() {
        let w = world_with(VehicleState {
            s: 50.0,
            speed: 15.0,
            ..VehicleState::default()
        });
        let next = step_others(&w, &[VehicleScript::ConstantSpeed], &map(), 1.0);
        assert_eq!(next.others[0].s, 65.0);
        assert_eq!(next.t, w.t);
        assert_eq!(next.ego, w.ego);
    }

    #[test]
    fn empty_traffic_unchanged() {
        let w = WorldState {
            t: 3.0,
            ego: VehicleState::default(),
            others: vec![],
            lane_change: None,
        };
        assert_eq!(step_others(&w, &[], &map(), 1.0), w);
    }

    #[test]
    fn cut_in_switches_lane_on_schedule() {
        let script = VehicleScript::Piecewise {
            segments: vec![
                ScriptSegment {
                    t_start: 0.0,
                    speed: 6.0,
                    lane: 1,
                },
                ScriptSegment {
                    t_start: 2.0,
                    speed: 6.0,
                    lane: 0,
                },
            ],
            change_duration: 1.0,
        };
        let scripts = [script];
        let mut w = world_with(VehicleState {
            s: 30.0,
            d: 3.5,
            speed: 6.0,
            lane: 1,
            ..VehicleState::default()
        });
        let m = map();
        for _ in 0..2 {
            w = step_others(&w, &scripts, &m, 1.0);
            w.t += 1.0;
        }
        // At the scheduled time the lane index flips; d then slides over.
        assert_eq!(w.others[0].lane, 0);
        assert_eq!(w.others[0].d, 3.5);
        assert_eq!(w.others[0].s, 42.0);
        let half = step_others(&w, &scripts, &m, 0.5);
        assert_eq!(half.others[0].d, 1.75);
        w = step_others(&w, &scripts, &m, 1.0);
        assert_eq!(w.others[0].d, 0.0);
    }

    #[test]
    fn speed_change_mid_step_is_integrated_exactly() {
        let script = VehicleScript::Piecewise {
            segments: vec![
                ScriptSegment {
                    t_start: 0.0,
                    speed: 10.0,
                    lane: 0,
                },
                ScriptSegment {
                    t_start: 0.25,
                    speed: 2.0,
                    lane: 0,
                },
            ],
            change_duration: 1.0,
        };
        let w = world_with(VehicleState {
            speed: 10.0,
            ..VehicleState::default()
        });
        let next = step_others(&w, &[script], &map(), 1.0);
        assert_eq!(next.others[0].s, 2.5 + 1.5);
        assert_eq!(next.others[0].speed, 2.0);
    }

    #[test]
    fn stepping_is_deterministic() {
        let w = world_with(VehicleState {
            s: 12.0,
            d: 20.0,
            ..VehicleState::default()
        });
        let scripts = [VehicleScript::Crossing { lateral_speed: -9.0 }];
        let a = step_others(&w, &scripts, &map(), 0.7);
        let b = step_others(&w, &scripts, &map(), 0.7);
        assert_eq!(a, b);
        assert_eq!(a.others[0].d, 20.0 + -9.0 * 0.7);
        assert_eq!(a.others[0].s, 12.0);
    }
}
