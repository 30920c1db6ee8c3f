//! Rigid polygons, poses, scenes and the penetration machinery used by
//! the collision energy and the MTV baseline.

mod mtv;
mod penetration;
pub mod polygon;
mod vec2;

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use mtv::{mtv_separate, MtvConfig, MtvOutcome};
pub use penetration::{
    exact_support, penetration, support, support_weighted, DirectionMin, PairPenetration, PartAggregation,
    PenetrationParams, PlacedPart,
};
pub(crate) use penetration::penetration_placed;
pub use polygon::convex_decompose;
pub use vec2::Vec2;

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Shortest angular distance between two headings, in `[0, π]`.
pub fn wrapped_angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    d.min(TAU - d)
}

/// Signed shortest rotation from `b` to `a`, in `(-π, π]`.
pub fn wrapped_angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub p: Vec2,
    theta: f64,
}

impl Pose {
    pub fn new(p: Vec2, theta: f64) -> Self {
        Self {
            p,
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec2::ZERO, 0.0)
    }

    /// Rotation angle in `[0, 2π)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = wrap_angle(theta);
    }

    #[inline]
    pub fn apply(&self, local: Vec2) -> Vec2 {
        local.rotate(self.theta) + self.p
    }
}

/// Immutable rigid polygon expressed in a frame centred on its area
/// centroid, with cached convex decomposition.
#[derive(Debug, PartialEq)]
pub struct RigidShape {
    id: u64,
    vertices: Vec<Vec2>,
    parts: Vec<Vec<Vec2>>,
    part_normals: Vec<Vec<Vec2>>,
    hull: Vec<Vec2>,
    hull_normals: Vec<Vec2>,
    circumradius: f64,
    area: f64,
}

impl RigidShape {
    /// Builds a shape from vertices given in any frame. The vertices are
    /// re-expressed relative to the area centroid, which is returned so the
    /// caller can place the shape where it was drawn.
    pub fn from_outline(id: u64, outline: &[Vec2]) -> Result<(Self, Vec2)> {
        let bad = |reason: String| Error::InvalidGeometry {
            index: id as usize,
            reason,
        };
        if outline.len() < 3 {
            return Err(bad(format!("needs at least 3 vertices, got {}", outline.len())));
        }
        if let Some(k) = outline.iter().position(|v| !v.is_finite()) {
            return Err(bad(format!("vertex {k} is not finite")));
        }
        let mut ccw = outline.to_vec();
        let signed = polygon::signed_area(&ccw);
        let scale = ccw
            .iter()
            .map(|v| v.norm_sq())
            .fold(0.0, f64::max)
            .max(1e-300);
        if signed.abs() <= 1e-12 * scale {
            return Err(bad("polygon is degenerate (zero area)".into()));
        }
        if signed < 0.0 {
            ccw.reverse();
        }
        polygon::check_simple(&ccw)?;

        let c = polygon::centroid(&ccw);
        let vertices: Vec<Vec2> = ccw.iter().map(|&v| v - c).collect();
        let parts = convex_decompose(&vertices)?;
        let part_normals = parts.iter().map(|p| outward_normals(p)).collect();
        let hull = polygon::convex_hull(&vertices);
        let hull_normals = outward_normals(&hull);
        let circumradius = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let area = polygon::area(&vertices);
        Ok((
            Self {
                id,
                vertices,
                parts,
                part_normals,
                hull,
                hull_normals,
                circumradius,
                area,
            },
            c,
        ))
    }

    /// Builds a shape, recentring its vertices on the area centroid.
    pub fn new(id: u64, vertices: &[Vec2]) -> Result<Self> {
        Self::from_outline(id, vertices).map(|(s, _)| s)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Counter-clockwise vertices in the local frame.
    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn convex_parts(&self) -> &[Vec<Vec2>] {
        &self.parts
    }

    pub(crate) fn part_normals(&self) -> &[Vec<Vec2>] {
        &self.part_normals
    }

    /// Counter-clockwise convex hull of the vertices.
    pub fn hull(&self) -> &[Vec2] {
        &self.hull
    }

    pub(crate) fn hull_normals(&self) -> &[Vec2] {
        &self.hull_normals
    }

    pub fn circumradius(&self) -> f64 {
        self.circumradius
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| self.vertices[i].distance(self.vertices[(i + 1) % n]))
            .sum()
    }

    /// `count` points spaced uniformly by arc length along the boundary,
    /// starting at the first vertex.
    pub fn boundary_samples(&self, count: usize) -> Vec<Vec2> {
        let n = self.vertices.len();
        let perimeter = self.perimeter();
        let step = perimeter / count as f64;
        let mut out = Vec::with_capacity(count);
        let mut edge = 0usize;
        let mut edge_start = 0.0;
        for k in 0..count {
            let s = k as f64 * step;
            loop {
                let a = self.vertices[edge];
                let b = self.vertices[(edge + 1) % n];
                let len = a.distance(b);
                if s <= edge_start + len || edge == n - 1 {
                    let t = if len > 0.0 { ((s - edge_start) / len).clamp(0.0, 1.0) } else { 0.0 };
                    out.push(a + (b - a) * t);
                    break;
                }
                edge_start += len;
                edge += 1;
            }
        }
        out
    }
}

fn outward_normals(part: &[Vec2]) -> Vec<Vec2> {
    let n = part.len();
    (0..n)
        .filter_map(|i| {
            let e = part[(i + 1) % n] - part[i];
            let len = e.norm();
            (len > 0.0).then(|| Vec2::new(e.y / len, -e.x / len))
        })
        .collect()
}

/// Applies `pose` to every local vertex of `shape`.
pub fn transform_vertices(shape: &RigidShape, pose: &Pose) -> Vec<Vec2> {
    let (s, c) = pose.theta.sin_cos();
    shape
        .vertices
        .iter()
        .map(|&v| v.rotate_sc(s, c) + pose.p)
        .collect()
}

/// Axis-aligned world box of the arrangement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub min: Vec2,
    pub max: Vec2,
}

impl Domain {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::new(Vec2::ZERO, Vec2::new(128.0, 128.0))
    }
}

/// Shapes plus their poses. Shapes are shared and never mutated; only
/// poses change while optimizing.
#[derive(Clone, Debug)]
pub struct Scene {
    pub shapes: Vec<Arc<RigidShape>>,
    pub poses: Vec<Pose>,
    pub domain: Domain,
}

impl Scene {
    pub fn new(shapes: Vec<Arc<RigidShape>>, poses: Vec<Pose>, domain: Domain) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::EmptyScene);
        }
        if shapes.len() != poses.len() {
            return Err(Error::MalformedScene(format!(
                "{} shapes but {} poses",
                shapes.len(),
                poses.len()
            )));
        }
        let mut ids: Vec<u64> = shapes.iter().map(|s| s.id()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0]));
        }
        Ok(Self {
            shapes,
            poses,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn world_vertices(&self, i: usize) -> Vec<Vec2> {
        transform_vertices(&self.shapes[i], &self.poses[i])
    }

    pub fn total_area(&self) -> f64 {
        self.shapes.iter().map(|s| s.area()).sum()
    }

    /// Bounding box of all transformed vertices.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..self.len() {
            for v in self.world_vertices(i) {
                lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
                hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
            }
        }
        (lo, hi)
    }

    /// Extent of the arrangement along a unit axis.
    pub fn extent_along(&self, axis: Vec2) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.len() {
            for v in self.world_vertices(i) {
                let t = v.dot(axis);
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        hi - lo
    }
}
