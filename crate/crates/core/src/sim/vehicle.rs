use serde::{Deserialize, Serialize};

use super::geometry::Lane;

pub const MAX_SPEED: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub phi: f64,
    pub length: f64,
    pub width: f64,
    /// For the ego this is the lane it is assigned to, which leads the
    /// physical lane during a lane change.
    pub lane: Lane,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, v: f64, phi: f64, lane: Lane) -> Self {
        Self { x, y, v, phi, length: 5.0, width: 2.0, lane }
    }

    pub fn vx(&self) -> f64 {
        self.v * self.phi.cos()
    }

    pub fn vy(&self) -> f64 {
        self.v * self.phi.sin()
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.phi.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let pts = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)];
        pts.map(|(dx, dy)| [self.x + dx * c - dy * s, self.y + dx * s + dy * c])
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.phi.sin_cos();
        [[c, s], [-s, c]]
    }
}

/// Separating-axis test on the two oriented footprints. Touching edges count as
/// overlap.
pub fn overlap(a: &VehicleState, b: &VehicleState) -> bool {
    // Cheap reject on circumscribed circles.
    let ra = 0.5 * a.length.hypot(a.width);
    let rb = 0.5 * b.length.hypot(b.width);
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    if dx * dx + dy * dy > (ra + rb) * (ra + rb) {
        return false;
    }
    let ca = a.corners();
    let cb = b.corners();
    for axis in a.axes().into_iter().chain(b.axes()) {
        let project = |pts: &[[f64; 2]; 4]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = p[0] * axis[0] + p[1] * axis[1];
                (lo.min(d), hi.max(d))
            })
        };
        let (a_lo, a_hi) = project(&ca);
        let (b_lo, b_hi) = project(&cb);
        if a_hi < b_lo || b_hi < a_lo {
            return false;
        }
    }
    true
}
