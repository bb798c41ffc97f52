//! Brute-force capacity of a planar convex body under a rotation `R(theta)`.
//!
//! Every boundary characteristic in the plane is a counterclockwise arc of
//! `dD`, and the capacity is the smallest area swept by an arc from `z0` to
//! `R(theta) z0`.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;

use crate::bodies::ConvexBody;
use crate::closedform::{CapacityResult, Method};
use crate::error::{Error, Result};
use crate::spectrum::golden_min;

pub const DEFAULT_SAMPLES: usize = 4096;

/// Counterclockwise sample of the boundary, with cumulative sector areas.
#[derive(Debug, Clone)]
pub struct BoundaryPolyline {
    pub points: Vec<[f64; 2]>,
    pub origin_interior: bool,
    /// Unwrapped polar angle of each point, starting at `angles[0]`.
    angles: Vec<f64>,
    /// Sector area swept from `points[0]` to `points[i]`.
    areas: Vec<f64>,
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

impl BoundaryPolyline {
    /// Samples `dD` at the support points of `k` equally spaced normals.
    /// A polygon vertex is hit exactly when its normal cone is wider than the
    /// sample spacing `2pi / k`; a sharper vertex is cut off by one chord.
    pub fn sample(body: &ConvexBody, k: usize) -> Result<Self> {
        if body.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: body.dim() });
        }
        if k < 8 {
            return Err(Error::InvalidInput(format!("need at least 8 boundary samples, got {k}")));
        }
        let origin_interior = body.origin_is_interior();
        if !origin_interior {
            return Err(Error::OriginNotInterior);
        }
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(k);
        for i in 0..k {
            let phi = TAU * i as f64 / k as f64;
            let x = body.support_argmax(&DVector::from_vec(vec![phi.cos(), phi.sin()]))?;
            let p = [x[0], x[1]];
            let scale = p[0].abs().max(p[1].abs()).max(1.0);
            if let Some(last) = points.last() {
                if (last[0] - p[0]).abs().max((last[1] - p[1]).abs()) <= 1e-13 * scale {
                    continue;
                }
            }
            points.push(p);
        }
        while points.len() > 1 {
            let (a, b) = (points[0], points[points.len() - 1]);
            let scale = a[0].abs().max(a[1].abs()).max(1.0);
            if (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) <= 1e-13 * scale {
                points.pop();
            } else {
                break;
            }
        }
        if points.len() < 3 {
            return Err(Error::InvalidInput("boundary sample is degenerate".into()));
        }
        let m = points.len();
        let mut angles = Vec::with_capacity(m + 1);
        let mut areas = Vec::with_capacity(m + 1);
        let mut angle = points[0][1].atan2(points[0][0]);
        angles.push(angle);
        areas.push(0.0);
        for i in 0..m {
            let (a, b) = (points[i], points[(i + 1) % m]);
            let c = cross(a, b);
            if !(c > 0.0) {
                return Err(Error::OriginNotInterior);
            }
            angle += c.atan2(a[0] * b[0] + a[1] * b[1]);
            angles.push(angle);
            areas.push(areas[i] + 0.5 * c);
        }
        Ok(Self { points, origin_interior, angles, areas })
    }

    /// Area enclosed by the polyline.
    pub fn area(&self) -> f64 {
        self.areas[self.points.len()]
    }

    /// Boundary point on the ray at polar angle `phi`.
    pub fn point_at(&self, phi: f64) -> [f64; 2] {
        let (i, _) = self.locate(phi);
        self.ray_hit(i, phi)
    }

    fn locate(&self, phi: f64) -> (usize, f64) {
        let a0 = self.angles[0];
        let turns = ((phi - a0) / TAU).floor();
        let local = phi - turns * TAU;
        let m = self.points.len();
        let i = match self.angles.binary_search_by(|a| a.partial_cmp(&local).unwrap()) {
            Ok(i) => i.min(m - 1),
            Err(i) => i.saturating_sub(1).min(m - 1),
        };
        (i, turns)
    }

    fn ray_hit(&self, i: usize, phi: f64) -> [f64; 2] {
        let m = self.points.len();
        let (a, b) = (self.points[i], self.points[(i + 1) % m]);
        let u = [phi.cos(), phi.sin()];
        let d = [b[0] - a[0], b[1] - a[1]];
        let den = cross(u, d);
        let s = (-cross(u, a) / den).clamp(0.0, 1.0);
        [a[0] + s * d[0], a[1] + s * d[1]]
    }

    /// Sector area swept counterclockwise from the ray at the first sample to
    /// the ray at `phi`, extended periodically.
    pub fn swept(&self, phi: f64) -> f64 {
        let (i, turns) = self.locate(phi);
        let x = self.ray_hit(i, phi);
        turns * self.area() + self.areas[i] + 0.5 * cross(self.points[i], x)
    }

    /// Area swept by the arc from angle `phi` to `phi + theta`.
    pub fn arc_area(&self, phi: f64, theta: f64) -> f64 {
        self.swept(phi + theta) - self.swept(phi)
    }
}

/// Minimal swept sector area of a boundary arc from `z0` to `R(theta) z0`.
pub fn arc_capacity_2d(body: &ConvexBody, theta: f64) -> Result<CapacityResult> {
    arc_capacity_2d_with(body, theta, DEFAULT_SAMPLES)
}

pub fn arc_capacity_2d_with(body: &ConvexBody, theta: f64, samples: usize) -> Result<CapacityResult> {
    if !(theta > 0.0 && theta <= TAU) {
        return Err(Error::InvalidInput(format!("rotation angle must lie in (0, 2pi], got {theta}")));
    }
    let poly = BoundaryPolyline::sample(body, samples)?;
    let k = samples;
    let step = TAU / k as f64;
    let vals: Vec<f64> = (0..k).map(|i| poly.arc_area(i as f64 * step, theta)).collect();
    let mut order: Vec<usize> = (0..k).filter(|&i| vals[i] <= vals[(i + k - 1) % k] && vals[i] <= vals[(i + 1) % k]).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    order.truncate(8);
    let (mut best, mut best_phi) = (f64::INFINITY, 0.0);
    for &i in &order {
        let c = i as f64 * step;
        let (phi, v) = golden_min(|x| poly.arc_area(x, theta), c - step, c + step, 1e-13);
        let (phi, v) = if vals[i] < v { (c, vals[i]) } else { (phi, v) };
        if v < best {
            best = v;
            best_phi = phi;
        }
    }
    let start = poly.point_at(best_phi);
    Ok(CapacityResult::new(best, Method::Oracle2d)
        .with("start_angle", best_phi.rem_euclid(TAU))
        .with("start_q", start[0])
        .with("start_p", start[1])
        .with("boundary_points", poly.points.len() as f64)
        .with("area", poly.area())
        .with("theta_over_pi", theta / PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn disc_half_angle() {
        for th in [0.3, PI / 2.0, 2.0, PI, TAU] {
            let c = arc_capacity_2d(&ConvexBody::unit_ball(2), th).unwrap().value;
            assert!((c - th / 2.0).abs() < 1e-6 * th, "{th}: {c}");
        }
    }

    #[test]
    fn square_full_turn_is_area() {
        let sq = ConvexBody::cuboid(&[1.0, 1.0]).unwrap();
        let c = arc_capacity_2d(&sq, TAU).unwrap().value;
        assert!((c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn offset_triangle_monotone_in_angle() {
        let tri = ConvexBody::polytope(vec![v(1.0, -0.2), v(-0.4, 0.9), v(-0.5, -0.6)]).unwrap();
        let a = arc_capacity_2d(&tri, 1.0).unwrap().value;
        let b = arc_capacity_2d(&tri, 2.0).unwrap().value;
        let c = arc_capacity_2d(&tri, TAU).unwrap().value;
        assert!(a <= b && b <= c);
    }

    #[test]
    fn rejects_exterior_origin() {
        let b = ConvexBody::ball(0.5, v(2.0, 0.0)).unwrap();
        assert_eq!(arc_capacity_2d(&b, 1.0).unwrap_err(), Error::OriginNotInterior);
    }
}
