use super::{VehicleState, WorldState};

/// Gap between the two vehicles' footprint rectangles in the `(s, d)` plane.
///
/// Footprints are axis-aligned: `length` spans `s`, `width` spans `d`. The
/// result is the Euclidean distance between the rectangles, 0 when they touch
/// or overlap.
pub fn pairwise_distance(a: &VehicleState, b: &VehicleState) -> f64 {
    let gap_s = ((a.s - b.s).abs() - 0.5 * (a.length + b.length)).max(0.0);
    let gap_d = ((a.d - b.d).abs() - 0.5 * (a.width + b.width)).max(0.0);
    if gap_d == 0.0 {
        gap_s
    } else if gap_s == 0.0 {
        gap_d
    } else {
        gap_s.hypot(gap_d)
    }
}

/// Smallest footprint gap between `ego` and any of `others`, `None` when
/// there are no other vehicles.
pub fn min_gap(ego: &VehicleState, others: &[VehicleState]) -> Option<f64> {
    others
        .iter()
        .map(|o| pairwise_distance(ego, o))
        .min_by(f64::total_cmp)
}

pub(crate) fn overlaps_any(ego: &VehicleState, others: &[VehicleState]) -> bool {
    others.iter().any(|o| pairwise_distance(ego, o) == 0.0)
}

/// True iff some other vehicle's footprint overlaps the ego's.
pub fn check_collision(w: &WorldState) -> bool {
    overlaps_any(&w.ego, &w.others)
}
