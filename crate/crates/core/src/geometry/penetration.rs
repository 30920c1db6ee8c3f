//! Smoothed support functions and Minkowski penetration depth with
//! analytic pose gradients.
//!
//! For convex parts A (of shape i) and B (of shape j) and a unit direction
//! `d`, the projected overlap is `g(d) = h_A(d) + h_B(-d)` on world
//! vertices, which equals `h_i(d) + h_j(-d) - d·(p_j - p_i)` in body frames.
//! The minimum over the outward normals of A and the negated outward normals
//! of B is the penetration depth (positive) or minus a separation bound.
//! A shape pair takes the (soft) maximum over its part pairs, or compares hulls.

use super::{Pose, RigidShape, Vec2};

/// How the minimum over candidate directions is taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DirectionMin {
    /// Log-sum-exp soft minimum with the given temperature.
    Soft { temperature: f64 },
    /// Exact minimum; the gradient is that of the minimizing direction.
    Hard,
}

/// Which convex pieces stand in for a non-convex shape.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PartAggregation {
    /// Every convex part; the deepest part pair governs.
    #[default]
    Parts,
    /// The convex hull alone. Never smaller than the part value, and a
    /// shape can no longer sit inside another's pocket.
    Hull,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenetrationParams {
    /// Log-sum-exp temperature of the support function. Zero selects the
    /// exact (hard max) support.
    pub support_temperature: f64,
    pub direction_min: DirectionMin,
    pub aggregation: PartAggregation,
}

impl Default for PenetrationParams {
    fn default() -> Self {
        Self {
            support_temperature: 0.05,
            direction_min: DirectionMin::Soft { temperature: 0.1 },
            aggregation: PartAggregation::Parts,
        }
    }
}

impl PenetrationParams {
    /// Exact SAT penetration without smoothing.
    pub fn exact() -> Self {
        Self {
            support_temperature: 0.0,
            direction_min: DirectionMin::Hard,
            aggregation: PartAggregation::Parts,
        }
    }
}

/// Exact support value `max_v d·v`.
pub fn exact_support(points: &[Vec2], dir: Vec2) -> f64 {
    points.iter().map(|&v| dir.dot(v)).fold(f64::NEG_INFINITY, f64::max)
}

/// Log-sum-exp support `t·log Σ exp(d·v / t)`; `t <= 0` gives the exact max.
pub fn support(points: &[Vec2], dir: Vec2, temperature: f64) -> f64 {
    support_weighted(points, dir, temperature).0
}

/// Support value together with the softmax weights over the vertices.
pub fn support_weighted(points: &[Vec2], dir: Vec2, temperature: f64) -> (f64, Vec<f64>) {
    let m = exact_support(points, dir);
    if temperature <= 0.0 {
        let k = points
            .iter()
            .position(|&v| dir.dot(v) == m)
            .unwrap_or(0);
        let mut w = vec![0.0; points.len()];
        w[k] = 1.0;
        return (m, w);
    }
    let mut w: Vec<f64> = points
        .iter()
        .map(|&v| ((dir.dot(v) - m) / temperature).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    (m + temperature * sum.ln(), w)
}

/// One convex part placed in the world.
#[derive(Clone, Debug)]
pub struct PlacedPart {
    /// World vertices.
    pub verts: Vec<Vec2>,
    /// Vertex offsets from the shape's translation, `R(θ)·v_local`.
    pub arms: Vec<Vec2>,
    /// World outward unit edge normals.
    pub normals: Vec<Vec2>,
}

impl PlacedPart {
    fn placed(local: &[Vec2], normals: &[Vec2], pose: &Pose) -> PlacedPart {
        let (s, c) = pose.theta().sin_cos();
        let arms: Vec<Vec2> = local.iter().map(|&v| v.rotate_sc(s, c)).collect();
        PlacedPart {
            verts: arms.iter().map(|&a| a + pose.p).collect(),
            arms,
            normals: normals.iter().map(|&n| n.rotate_sc(s, c)).collect(),
        }
    }

    /// The pieces standing in for `shape` under `aggregation`.
    pub fn place(shape: &RigidShape, pose: &Pose, aggregation: PartAggregation) -> Vec<PlacedPart> {
        match aggregation {
            PartAggregation::Parts => Self::place_shape(shape, pose),
            PartAggregation::Hull => vec![Self::placed(shape.hull(), shape.hull_normals(), pose)],
        }
    }

    pub fn place_shape(shape: &RigidShape, pose: &Pose) -> Vec<PlacedPart> {
        shape
            .convex_parts()
            .iter()
            .zip(shape.part_normals())
            .map(|(part, normals)| Self::placed(part, normals, pose))
            .collect()
    }
}

/// Penetration of a shape pair with gradients with respect to both poses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPenetration {
    pub value: f64,
    /// `(∂/∂p_x, ∂/∂p_y, ∂/∂θ)` for shape i.
    pub grad_i: [f64; 3],
    /// Same for shape j.
    pub grad_j: [f64; 3],
    /// Governing direction, pointing from shape i toward shape j.
    pub direction: Vec2,
    /// Value gap between the deepest and the runner-up convex-part pair
    /// (infinite for a single pair). Small gaps are non-smooth ties.
    pub part_gap: f64,
    /// Gap between the best and runner-up direction of the governing pair.
    pub direction_gap: f64,
}

struct Lse {
    value: f64,
    mean_point: Vec2,
    /// Σ w_v · dir·perp(arm_v): derivative through the vertices' rotation.
    spin: f64,
}

fn lse(verts: &[Vec2], arms: &[Vec2], dir: Vec2, temperature: f64) -> Lse {
    let m = exact_support(verts, dir);
    if temperature <= 0.0 {
        let k = verts.iter().position(|&v| dir.dot(v) == m).unwrap_or(0);
        return Lse {
            value: m,
            mean_point: verts[k],
            spin: dir.dot(arms[k].perp()),
        };
    }
    let mut sum = 0.0;
    let mut mean = Vec2::ZERO;
    let mut spin = 0.0;
    for (&v, &a) in verts.iter().zip(arms) {
        let w = ((dir.dot(v) - m) / temperature).exp();
        sum += w;
        mean += v * w;
        spin += w * dir.dot(a.perp());
    }
    Lse {
        value: m + temperature * sum.ln(),
        mean_point: mean * (1.0 / sum),
        spin: spin / sum,
    }
}

struct PartPair {
    value: f64,
    grad_i: [f64; 3],
    grad_j: [f64; 3],
    direction: Vec2,
    direction_gap: f64,
}

fn part_pair(a: &PlacedPart, b: &PlacedPart, params: &PenetrationParams) -> PartPair {
    let t = params.support_temperature;
    let count = a.normals.len() + b.normals.len();
    let mut values = Vec::with_capacity(count);
    let mut grads = Vec::with_capacity(count);
    let mut dirs = Vec::with_capacity(count);

    let candidates = a
        .normals
        .iter()
        .map(|&n| (n, true))
        .chain(b.normals.iter().map(|&n| (-n, false)));
    for (d, owned_by_i) in candidates {
        let ha = lse(&a.verts, &a.arms, d, t);
        let hb = lse(&b.verts, &b.arms, -d, t);
        let g = ha.value + hb.value;
        // The direction rotates with its owner: ∂d/∂θ = perp(d).
        let through_dir = (ha.mean_point - hb.mean_point).dot(d.perp());
        let mut gi = [d.x, d.y, ha.spin];
        let mut gj = [-d.x, -d.y, hb.spin];
        if owned_by_i {
            gi[2] += through_dir;
        } else {
            gj[2] += through_dir;
        }
        values.push(g);
        grads.push((gi, gj));
        dirs.push(d);
    }

    let (best, best_val) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let runner_up = values
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != best)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);

    match params.direction_min {
        DirectionMin::Hard => PartPair {
            value: best_val,
            grad_i: grads[best].0,
            grad_j: grads[best].1,
            direction: dirs[best],
            direction_gap: runner_up - best_val,
        },
        DirectionMin::Soft { temperature } => {
            let mut sum = 0.0;
            let mut gi = [0.0; 3];
            let mut gj = [0.0; 3];
            for (k, &v) in values.iter().enumerate() {
                let w = (-(v - best_val) / temperature).exp();
                sum += w;
                for c in 0..3 {
                    gi[c] += w * grads[k].0[c];
                    gj[c] += w * grads[k].1[c];
                }
            }
            for c in 0..3 {
                gi[c] /= sum;
                gj[c] /= sum;
            }
            PartPair {
                value: best_val - temperature * sum.ln(),
                grad_i: gi,
                grad_j: gj,
                direction: dirs[best],
                direction_gap: runner_up - best_val,
            }
        }
    }
}

/// Penetration between two placed shapes. The deepest convex-part pair
/// governs: exactly under [`DirectionMin::Hard`], through a log-sum-exp
/// soft maximum at the soft-min temperature otherwise.
pub(crate) fn penetration_placed(
    parts_i: &[PlacedPart],
    parts_j: &[PlacedPart],
    params: &PenetrationParams,
) -> PairPenetration {
    let pairs: Vec<PartPair> = parts_i
        .iter()
        .flat_map(|a| parts_j.iter().map(move |b| (a, b)))
        .map(|(a, b)| part_pair(a, b, params))
        .collect();
    let best = pairs
        .iter()
        .enumerate()
        .fold(0, |acc, (k, p)| if p.value > pairs[acc].value { k } else { acc });
    let top = &pairs[best];
    let runner_up = pairs
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != best)
        .map(|(_, p)| p.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = PairPenetration {
        value: top.value,
        grad_i: top.grad_i,
        grad_j: top.grad_j,
        direction: top.direction,
        part_gap: top.value - runner_up,
        direction_gap: top.direction_gap,
    };
    if let (DirectionMin::Soft { temperature }, true) = (params.direction_min, pairs.len() > 1) {
        let weights: Vec<f64> = pairs
            .iter()
            .map(|p| ((p.value - top.value) / temperature).exp())
            .collect();
        let sum: f64 = weights.iter().sum();
        out.value = top.value + temperature * sum.ln();
        out.grad_i = [0.0; 3];
        out.grad_j = [0.0; 3];
        for (p, w) in pairs.iter().zip(&weights) {
            for c in 0..3 {
                out.grad_i[c] += w / sum * p.grad_i[c];
                out.grad_j[c] += w / sum * p.grad_j[c];
            }
        }
    }
    out
}

/// Penetration depth of shape j into shape i at the given poses.
pub fn penetration(
    shape_i: &RigidShape,
    pose_i: &Pose,
    shape_j: &RigidShape,
    pose_j: &Pose,
    params: &PenetrationParams,
) -> PairPenetration {
    let pi = PlacedPart::place(shape_i, pose_i, params.aggregation);
    let pj = PlacedPart::place(shape_j, pose_j, params.aggregation);
    penetration_placed(&pi, &pj, params)
}
