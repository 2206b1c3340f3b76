//! Road model in Frenet coordinates.
//!
//! A [`ReferenceLine`] is a piecewise-linear centerline whose waypoints also
//! carry a heading. Positions along a segment are interpolated linearly and the
//! heading is interpolated between the two waypoint headings, so the lateral
//! normal rotates smoothly along the line. This keeps the `(s, d) -> (x, y)`
//! map continuous and invertible inside the lane tube even on curved roads.
//!
//! Lane 0 is the rightmost lane and `d` grows to the left.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when deciding whether an arc length lies on the line.
const S_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("reference line needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {1} coincide")]
    DegenerateSegment(usize, usize),
    #[error("heading jumps by {jump:.3} rad between waypoints {index} and {}", index + 1)]
    HeadingDiscontinuity { index: usize, jump: f64 },
    #[error("arc length {s} is outside [0, {length}]")]
    OutOfBounds { s: f64, length: f64 },
    #[error("point ({x}, {y}) does not project onto the reference line")]
    NoProjection { x: f64, y: f64 },
    #[error("point ({x}, {y}) is {offset:.2} m from the reference line (limit {limit:.2} m)")]
    TooFar { x: f64, y: f64, offset: f64, limit: f64 },
    #[error("projection of ({x}, {y}) is ambiguous: s = {s1} or s = {s2}")]
    Ambiguous { x: f64, y: f64, s1: f64, s2: f64 },
    #[error("lane layout: {0}")]
    Lanes(String),
    #[error("goal: {0}")]
    Goal(String),
}

/// A waypoint of the reference line. `heading` is the tangent direction at
/// the waypoint, in radians from the +x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Cartesian pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLine {
    waypoints: Vec<Waypoint>,
    arc_length: Vec<f64>,
    /// Heading increments per segment, wrapped to (-pi, pi].
    dheading: Vec<f64>,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

impl ReferenceLine {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, MapError> {
        if waypoints.len() < 2 {
            return Err(MapError::TooFewWaypoints(waypoints.len()));
        }
        let mut arc_length = Vec::with_capacity(waypoints.len());
        let mut dheading = Vec::with_capacity(waypoints.len() - 1);
        arc_length.push(0.0);
        for (i, pair) in waypoints.windows(2).enumerate() {
            let len = (pair[1].x - pair[0].x).hypot(pair[1].y - pair[0].y);
            if len <= 0.0 {
                return Err(MapError::DegenerateSegment(i, i + 1));
            }
            let jump = wrap_angle(pair[1].heading - pair[0].heading);
            if jump.abs() >= PI / 2.0 {
                return Err(MapError::HeadingDiscontinuity { index: i, jump });
            }
            dheading.push(jump);
            arc_length.push(arc_length[i] + len);
        }
        Ok(Self {
            waypoints,
            arc_length,
            dheading,
        })
    }

    /// Builds a line through `points`, using the bisector of the adjacent
    /// segment directions as the waypoint heading.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, MapError> {
        if points.len() < 2 {
            return Err(MapError::TooFewWaypoints(points.len()));
        }
        let seg_heading: Vec<f64> = points
            .windows(2)
            .map(|p| (p[1].1 - p[0].1).atan2(p[1].0 - p[0].0))
            .collect();
        let waypoints = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let heading = if i == 0 {
                    seg_heading[0]
                } else if i == points.len() - 1 {
                    seg_heading[i - 1]
                } else {
                    let a = seg_heading[i - 1];
                    a + 0.5 * wrap_angle(seg_heading[i] - a)
                };
                Waypoint { x, y, heading }
            })
            .collect();
        Self::new(waypoints)
    }

    /// Straight line from the origin along +x.
    pub fn straight(length: f64) -> Result<Self, MapError> {
        Self::new(vec![
            Waypoint {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            Waypoint {
                x: length,
                y: 0.0,
                heading: 0.0,
            },
        ])
    }

    /// Straight approach along +x, a circular bend of `radius` turning left by
    /// `angle` radians (right when negative), then a straight exit. The bend is
    /// sampled every `spacing` meters with exact tangent headings.
    pub fn bend(
        approach: f64,
        radius: f64,
        angle: f64,
        exit: f64,
        spacing: f64,
    ) -> Result<Self, MapError> {
        let mut wps = vec![Waypoint {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        }];
        if approach > 0.0 {
            wps.push(Waypoint {
                x: approach,
                y: 0.0,
                heading: 0.0,
            });
        }
        let sign = angle.signum();
        let arc_len = radius * angle.abs();
        let n = ((arc_len / spacing).ceil() as usize).max(2);
        // Center of the bend sits on the left (or right) of the approach end.
        let (cx, cy) = (approach, sign * radius);
        for k in 1..=n {
            let theta = angle * k as f64 / n as f64;
            wps.push(Waypoint {
                x: cx + radius * theta.abs().sin(),
                y: cy - sign * radius * theta.cos(),
                heading: theta,
            });
        }
        if exit > 0.0 {
            let last = *wps.last().expect("non-empty");
            wps.push(Waypoint {
                x: last.x + exit * angle.cos(),
                y: last.y + exit * angle.sin(),
                heading: angle,
            });
        }
        Self::new(wps)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn arc_length_table(&self) -> &[f64] {
        &self.arc_length
    }

    pub fn length(&self) -> f64 {
        *self.arc_length.last().expect("at least two waypoints")
    }

    fn segment_at(&self, s: f64) -> usize {
        let idx = self.arc_length.partition_point(|&a| a <= s);
        idx.saturating_sub(1).min(self.waypoints.len() - 2)
    }

    /// Base point, heading at fraction `tau` of segment `i`.
    fn eval_segment(&self, i: usize, tau: f64) -> (f64, f64, f64) {
        let (a, b) = (&self.waypoints[i], &self.waypoints[i + 1]);
        (
            a.x + tau * (b.x - a.x),
            a.y + tau * (b.y - a.y),
            a.heading + tau * self.dheading[i],
        )
    }

    /// Heading of the line at arc length `s` (clamped to the line).
    pub fn heading_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let tau = (s - self.arc_length[i]) / (self.arc_length[i + 1] - self.arc_length[i]);
        self.eval_segment(i, tau).2
    }

    pub fn frenet_to_cartesian(&self, s: f64, d: f64) -> Result<Pose, MapError> {
        let length = self.length();
        if !(-S_EPS..=length + S_EPS).contains(&s) {
            return Err(MapError::OutOfBounds { s, length });
        }
        Ok(self.frenet_to_cartesian_unchecked(s.clamp(0.0, length), d))
    }

    /// Like [`frenet_to_cartesian`](Self::frenet_to_cartesian) but extends the
    /// first and last segments past the ends of the line. Used for rendering
    /// vehicles that have driven off the mapped stretch.
    pub fn frenet_to_cartesian_extended(&self, s: f64, d: f64) -> Pose {
        let length = self.length();
        if (0.0..=length).contains(&s) {
            return self.frenet_to_cartesian_unchecked(s, d);
        }
        let (anchor_s, wp) = if s < 0.0 {
            (0.0, self.waypoints[0])
        } else {
            (length, *self.waypoints.last().expect("non-empty"))
        };
        let ds = s - anchor_s;
        let (sin, cos) = wp.heading.sin_cos();
        Pose {
            x: wp.x + ds * cos - d * sin,
            y: wp.y + ds * sin + d * cos,
            heading: wp.heading,
        }
    }

    fn frenet_to_cartesian_unchecked(&self, s: f64, d: f64) -> Pose {
        let i = self.segment_at(s);
        let tau = (s - self.arc_length[i]) / (self.arc_length[i + 1] - self.arc_length[i]);
        let (bx, by, heading) = self.eval_segment(i, tau);
        let (sin, cos) = heading.sin_cos();
        Pose {
            x: bx - d * sin,
            y: by + d * cos,
            heading,
        }
    }

    /// Projects `(x, y)` onto the line along the interpolated normal field.
    ///
    /// Every segment whose normal sweep contains the point contributes a
    /// candidate; the candidate with the smallest lateral offset wins. Two
    /// equally close candidates at different arc lengths are ambiguous.
    pub fn cartesian_to_frenet(&self, x: f64, y: f64) -> Result<(f64, f64), MapError> {
        let mut candidates: Vec<(f64, f64)> = Vec::new();
        for i in 0..self.waypoints.len() - 1 {
            // Tangential residual of the point relative to the base at tau.
            let f = |tau: f64| {
                let (bx, by, h) = self.eval_segment(i, tau);
                (x - bx) * h.cos() + (y - by) * h.sin()
            };
            let (f0, f1) = (f(0.0), f(1.0));
            if f0 < 0.0 || f1 > 0.0 {
                continue;
            }
            let tau = if self.dheading[i] == 0.0 {
                // The residual is linear in tau on a straight segment.
                if f0 == f1 { 0.0 } else { f0 / (f0 - f1) }
            } else {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            let (bx, by, h) = self.eval_segment(i, tau);
            let d = -(x - bx) * h.sin() + (y - by) * h.cos();
            let s = self.arc_length[i] + tau * (self.arc_length[i + 1] - self.arc_length[i]);
            candidates.push((s, d));
        }
        let (s, d) = candidates
            .iter()
            .copied()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .ok_or(MapError::NoProjection { x, y })?;
        // Adjacent segments share their end points, so only candidates at a
        // different arc length can make the projection ambiguous.
        if let Some(&(s2, _)) = candidates
            .iter()
            .find(|(s2, d2)| (d2.abs() - d.abs()).abs() <= 1e-9 && (s2 - s).abs() > 1e-6)
        {
            return Err(MapError::Ambiguous { x, y, s1: s, s2 });
        }
        Ok((s, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    IntersectionCrossing,
    RampExit,
    ProgressLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRegion {
    pub kind: GoalKind,
    pub s_goal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_lane: Option<usize>,
    pub deadline: f64,
}

impl GoalRegion {
    /// True once the vehicle is at or past `s_goal` and settled in the
    /// required lane, if one is specified.
    pub fn is_satisfied(&self, s: f64, lane: usize, changing_lanes: bool) -> bool {
        s >= self.s_goal
            && match self.required_lane {
                Some(req) => lane == req && !changing_lanes,
                None => true,
            }
    }
}

/// Remaining distance to the goal line, clamped at zero once past it.
pub fn distance_to_goal(s_ego: f64, goal: &GoalRegion) -> f64 {
    (goal.s_goal - s_ego).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadMap {
    pub reference_line: ReferenceLine,
    pub lane_count: usize,
    pub lane_width: f64,
    pub lane_d_centers: Vec<f64>,
    pub goal: GoalRegion,
}

impl RoadMap {
    /// Lanes are laid out leftwards from the reference line: lane `i` is
    /// centered at `d = i * lane_width`.
    pub fn new(
        reference_line: ReferenceLine,
        lane_count: usize,
        lane_width: f64,
        goal: GoalRegion,
    ) -> Result<Self, MapError> {
        if lane_count == 0 {
            return Err(MapError::Lanes("lane_count must be at least 1".into()));
        }
        if !(lane_width > 0.0) {
            return Err(MapError::Lanes(format!(
                "lane_width must be positive, got {lane_width}"
            )));
        }
        let length = reference_line.length();
        if !(0.0..=length).contains(&goal.s_goal) {
            return Err(MapError::Goal(format!(
                "s_goal {} outside the reference line [0, {length}]",
                goal.s_goal
            )));
        }
        if !(goal.deadline > 0.0) {
            return Err(MapError::Goal(format!(
                "deadline must be positive, got {}",
                goal.deadline
            )));
        }
        if let Some(lane) = goal.required_lane {
            if lane >= lane_count {
                return Err(MapError::Goal(format!(
                    "required_lane {lane} does not exist ({lane_count} lanes)"
                )));
            }
        }
        let lane_d_centers = (0..lane_count).map(|i| i as f64 * lane_width).collect();
        Ok(Self {
            reference_line,
            lane_count,
            lane_width,
            lane_d_centers,
            goal,
        })
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        self.lane_d_centers[lane]
    }

    pub fn leftmost_lane(&self) -> usize {
        self.lane_count - 1
    }

    /// Lateral extent of the drivable area, edge to edge.
    pub fn d_bounds(&self) -> (f64, f64) {
        let half = 0.5 * self.lane_width;
        (
            self.lane_d_centers[0] - half,
            self.lane_d_centers[self.lane_count - 1] + half,
        )
    }

    /// Projection restricted to the lane tube (`|d| < 5 * lane_width`).
    pub fn cartesian_to_frenet(&self, x: f64, y: f64) -> Result<(f64, f64), MapError> {
        let (s, d) = self.reference_line.cartesian_to_frenet(x, y)?;
        let limit = 5.0 * self.lane_width;
        if d.abs() >= limit {
            return Err(MapError::TooFar {
                x,
                y,
                offset: d.abs(),
                limit,
            });
        }
        Ok((s, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn goal(s_goal: f64) -> GoalRegion {
        GoalRegion {
            kind: GoalKind::ProgressLine,
            s_goal,
            required_lane: None,
            deadline: 10.0,
        }
    }

    #[test]
    fn straight_line_identity() {
        let line = ReferenceLine::straight(100.0).unwrap();
        let p = line.frenet_to_cartesian(10.0, 0.0).unwrap();
        assert_eq!((p.x, p.y, p.heading), (10.0, 0.0, 0.0));
        let p = line.frenet_to_cartesian(10.0, 3.5).unwrap();
        assert_eq!((p.x, p.y, p.heading), (10.0, 3.5, 0.0));
        assert_eq!(line.cartesian_to_frenet(10.0, 0.0).unwrap(), (10.0, 0.0));
        assert_eq!(line.cartesian_to_frenet(10.0, 3.5).unwrap(), (10.0, 3.5));
    }

    #[test]
    fn out_of_range_arc_length_is_rejected() {
        let line = ReferenceLine::straight(100.0).unwrap();
        assert!(matches!(
            line.frenet_to_cartesian(100.5, 0.0),
            Err(MapError::OutOfBounds { .. })
        ));
        assert!(matches!(
            line.frenet_to_cartesian(-1.0, 0.0),
            Err(MapError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn quarter_circle_endpoint() {
        // Independent parametrization: center (0, 50), start (0, 0) heading +x.
        let r = 50.0;
        let n = 4000;
        let wps: Vec<Waypoint> = (0..=n)
            .map(|k| {
                let th = 0.5 * PI * k as f64 / n as f64;
                Waypoint {
                    x: r * th.sin(),
                    y: r - r * th.cos(),
                    heading: th,
                }
            })
            .collect();
        let line = ReferenceLine::new(wps).unwrap();
        // Chord length converges to the arc length 25*pi.
        assert_abs_diff_eq!(line.length(), 25.0 * PI, epsilon = 1e-4);
        let p = line.frenet_to_cartesian(line.length(), 0.0).unwrap();
        assert_abs_diff_eq!(p.x, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.heading, 0.5 * PI, epsilon = 1e-12);
        // Halfway along: 45 degrees on the arc.
        let p = line.frenet_to_cartesian(0.5 * line.length(), 0.0).unwrap();
        let th = 0.25 * PI;
        assert_abs_diff_eq!(p.x, r * th.sin(), epsilon = 1e-3);
        assert_abs_diff_eq!(p.y, r - r * th.cos(), epsilon = 1e-3);
        assert_abs_diff_eq!(p.heading, th, epsilon = 1e-3);
    }

    #[test]
    fn bend_builder_matches_circle() {
        let line = ReferenceLine::bend(20.0, 25.0, 0.5 * PI, 30.0, 0.5).unwrap();
        let arc = 25.0 * 0.5 * PI;
        assert_abs_diff_eq!(line.length(), 20.0 + arc + 30.0, epsilon = 1e-3);
        let end = line.waypoints().last().unwrap();
        assert_abs_diff_eq!(end.x, 45.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, 55.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.heading, 0.5 * PI, epsilon = 1e-12);
    }

    #[test]
    fn heading_discontinuity_rejected() {
        let wps = vec![
            Waypoint {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            Waypoint {
                x: 1.0,
                y: 0.0,
                heading: 2.0,
            },
        ];
        assert!(matches!(
            ReferenceLine::new(wps),
            Err(MapError::HeadingDiscontinuity { .. })
        ));
        assert!(matches!(
            ReferenceLine::from_points(&[(0.0, 0.0)]),
            Err(MapError::TooFewWaypoints(1))
        ));
    }

    #[test]
    fn projection_beyond_line_ends_fails() {
        let line = ReferenceLine::straight(100.0).unwrap();
        assert!(matches!(
            line.cartesian_to_frenet(-5.0, 1.0),
            Err(MapError::NoProjection { .. })
        ));
    }

    #[test]
    fn equidistant_projection_is_ambiguous() {
        // A U-turn: the point in the middle of the two legs is equally far
        // from both.
        let mut pts: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 * 10.0, 0.0)).collect();
        pts.extend((0..=10).rev().map(|i| (i as f64 * 10.0, 10.0)));
        // Replace the hard U-turn with a dense semicircle so heading steps stay small.
        let mut line_pts: Vec<(f64, f64)> = pts[..=10].to_vec();
        for k in 1..40 {
            let th = PI * k as f64 / 40.0 - 0.5 * PI;
            line_pts.push((100.0 + 5.0 * th.cos(), 5.0 + 5.0 * th.sin()));
        }
        line_pts.extend_from_slice(&pts[11..]);
        let line = ReferenceLine::from_points(&line_pts).unwrap();
        let r = line.cartesian_to_frenet(50.0, 5.0);
        assert!(matches!(r, Err(MapError::Ambiguous { .. })), "{r:?}");
    }

    #[test]
    fn distance_to_goal_clamps() {
        let g = goal(100.0);
        assert_eq!(distance_to_goal(90.0, &g), 10.0);
        assert_eq!(distance_to_goal(100.0, &g), 0.0);
        assert_eq!(distance_to_goal(120.0, &g), 0.0);
    }

    #[test]
    fn lane_centers_spaced_by_width() {
        let map = RoadMap::new(ReferenceLine::straight(200.0).unwrap(), 3, 3.5, goal(150.0)).unwrap();
        assert_eq!(map.lane_d_centers, vec![0.0, 3.5, 7.0]);
        for w in map.lane_d_centers.windows(2) {
            assert_eq!(w[1] - w[0], 3.5);
        }
        assert_eq!(map.d_bounds(), (-1.75, 8.75));
    }

    #[test]
    fn road_map_rejects_bad_goal() {
        let line = ReferenceLine::straight(200.0).unwrap();
        assert!(RoadMap::new(line.clone(), 3, 3.5, goal(250.0)).is_err());
        let mut g = goal(100.0);
        g.deadline = 0.0;
        assert!(RoadMap::new(line.clone(), 3, 3.5, g).is_err());
        let mut g = goal(100.0);
        g.required_lane = Some(3);
        assert!(RoadMap::new(line, 3, 3.5, g).is_err());
    }

    #[test]
    fn tube_limit_enforced() {
        let map = RoadMap::new(ReferenceLine::straight(200.0).unwrap(), 2, 3.5, goal(150.0)).unwrap();
        assert!(map.cartesian_to_frenet(50.0, 10.0).is_ok());
        assert!(matches!(
            map.cartesian_to_frenet(50.0, 20.0),
            Err(MapError::TooFar { .. })
        ));
    }
}
