use serde::{Deserialize, Serialize};

use super::geometry::{Lane, RoadGeometry};
use super::vehicle::VehicleState;

/// Features per observed vehicle, and in the ego row.
pub const OBS_FEATURES: usize = 5;

/// Ego-relative features of one mainline vehicle. `p = 0` rows are padding.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureRow {
    pub p: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoFeatures {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub phi: f64,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Exactly `n` rows sorted by `|x|` ascending, padding last.
    pub rows: Vec<FeatureRow>,
    pub ego: EgoFeatures,
}

impl Observation {
    pub fn flat_dim(n: usize) -> usize {
        OBS_FEATURES * (n + 1)
    }

    pub fn observed(&self) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(|r| r.p > 0.5)
    }

    /// Scaled network input: ego row then the vehicle rows.
    pub fn flatten(&self, geometry: &RoadGeometry) -> Vec<f32> {
        let mut out = Vec::with_capacity(Self::flat_dim(self.rows.len()));
        self.flatten_into(geometry, &mut out);
        out
    }

    pub fn flatten_into(&self, geometry: &RoadGeometry, out: &mut Vec<f32>) {
        let w = geometry.lane_width;
        let e = &self.ego;
        out.extend_from_slice(&[
            ((e.x - geometry.merge_end()) / 100.0) as f32,
            (e.y / w) as f32,
            (e.v / 30.0) as f32,
            e.phi as f32,
            if e.merged { 1.0 } else { 0.0 },
        ]);
        for r in &self.rows {
            out.extend_from_slice(&[
                r.p as f32,
                (r.x / 100.0) as f32,
                (r.y / w) as f32,
                (r.vx / 10.0) as f32,
                (r.vy / 10.0) as f32,
            ]);
        }
    }
}

/// Builds the observation of the `n` mainline vehicles nearest to the ego
/// (by longitudinal distance) within `range` meters.
pub fn observe(
    ego: &VehicleState,
    traffic: &[VehicleState],
    n: usize,
    range: f64,
    geometry: &RoadGeometry,
) -> Observation {
    let mut near: Vec<(f64, usize)> = traffic
        .iter()
        .enumerate()
        .map(|(i, v)| ((v.x - ego.x).abs(), i))
        .filter(|(d, _)| *d <= range)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (evx, evy) = (ego.vx(), ego.vy());
    let mut rows: Vec<FeatureRow> = near
        .iter()
        .take(n)
        .map(|&(_, i)| {
            let v = &traffic[i];
            FeatureRow { p: 1.0, x: v.x - ego.x, y: v.y - ego.y, vx: v.vx() - evx, vy: v.vy() - evy }
        })
        .collect();
    rows.resize(n, FeatureRow::default());
    Observation {
        rows,
        ego: EgoFeatures {
            x: ego.x,
            y: ego.y,
            v: ego.v,
            phi: ego.phi,
            merged: geometry.lane_of_y(ego.y) == Lane::Main,
        },
    }
}
