//! Pose projection: proximal descent on collision and containment energies.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::penetration_placed;
use crate::geometry::{wrapped_angle_difference, PartAggregation, PenetrationParams, PlacedPart, Pose, RigidShape, Scene, Vec2};

/// Gradient with respect to one pose: `(∂x, ∂y, ∂θ)`.
pub type PoseGradient = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionConfig {
    pub tau_p: f64,
    pub tau_theta: f64,
    pub w_coll: f64,
    pub w_cont: f64,
    pub sigma_g: f64,
    pub steps: usize,
    /// Largest per-shape displacement of a trial step, grid units.
    pub step_size: f64,
    pub max_halvings: usize,
    pub boundary_samples: usize,
    /// Membrane level treated as the boundary.
    pub level: f64,
    pub penetration: PenetrationParams,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            tau_p: 0.8,
            tau_theta: 0.8,
            w_coll: 10.0,
            w_cont: 5.0,
            sigma_g: 2.0,
            steps: 30,
            step_size: 0.05,
            max_halvings: 5,
            boundary_samples: 64,
            level: 0.5,
            penetration: PenetrationParams {
                aggregation: PartAggregation::Hull,
                ..PenetrationParams::default()
            },
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tau_p,
            self.tau_theta,
            self.w_coll,
            self.w_cont,
            self.sigma_g,
            self.step_size,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.boundary_samples == 0 {
            return Err(Error::Config("projection constants must be positive".into()));
        }
        Ok(())
    }
}

/// Numerically stable `log(1 + eˣ)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Energy and per-shape pose gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEval {
    pub value: f64,
    pub grads: Vec<PoseGradient>,
}

impl EnergyEval {
    fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            grads: vec![[0.0; 3]; n],
        }
    }
}

fn place_all(shapes: &[Arc<RigidShape>], poses: &[Pose], params: &PenetrationParams) -> Vec<Vec<PlacedPart>> {
    shapes
        .iter()
        .zip(poses)
        .map(|(s, p)| PlacedPart::place(s, p, params.aggregation))
        .collect()
}

fn collision_placed(placed: &[Vec<PlacedPart>], params: &PenetrationParams, sigma_g: f64) -> EnergyEval {
    let n = placed.len();
    let mut out = EnergyEval::zero(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let pen = penetration_placed(&placed[i], &placed[j], params);
            let x = pen.value / sigma_g;
            let sp = softplus(x);
            out.value += sp * sp;
            let de_dg = 2.0 * sp * sigmoid(x) / sigma_g;
            for k in 0..3 {
                out.grads[i][k] += de_dg * pen.grad_i[k];
                out.grads[j][k] += de_dg * pen.grad_j[k];
            }
        }
    }
    out
}

/// `Σ_{i<j} softplus(g_ij/σ_g)²` with pose gradients.
pub fn collision_energy(scene: &Scene, params: &PenetrationParams, sigma_g: f64) -> EnergyEval {
    collision_placed(&place_all(&scene.shapes, &scene.poses, params), params, sigma_g)
}

/// Boundary samples of every shape in its local frame.
pub fn local_boundary_samples(shapes: &[Arc<RigidShape>], count: usize) -> Vec<Vec<Vec2>> {
    shapes.iter().map(|s| s.boundary_samples(count)).collect()
}

fn containment_samples(samples: &[Vec<Vec2>], poses: &[Pose], membrane: &ScalarField, level: f64) -> EnergyEval {
    let mut out = EnergyEval::zero(poses.len());
    for (i, (local, pose)) in samples.iter().zip(poses).enumerate() {
        let (sn, cs) = pose.theta().sin_cos();
        for &v in local {
            let arm = v.rotate_sc(sn, cs);
            let (u, grad) = membrane.sample_bilinear(arm + pose.p);
            let deficit = level - u;
            if deficit <= 0.0 {
                continue;
            }
            out.value += deficit * deficit;
            let dx = grad * (-2.0 * deficit);
            out.grads[i][0] += dx.x;
            out.grads[i][1] += dx.y;
            out.grads[i][2] += dx.dot(arm.perp());
        }
    }
    out
}

/// `Σ_i Σ_b max(0, level − u(x_ib))²` over arc-length boundary samples.
pub fn containment_energy(scene: &Scene, membrane: &ScalarField, samples_per_shape: usize, level: f64) -> EnergyEval {
    containment_samples(
        &local_boundary_samples(&scene.shapes, samples_per_shape),
        &scene.poses,
        membrane,
        level,
    )
}

/// Terms of the projection objective at one set of poses.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub proximal: f64,
    pub collision: f64,
    pub containment: f64,
    pub grads: Vec<PoseGradient>,
}

/// The projection objective for fixed shapes, anchor and membrane.
pub struct Objective<'a> {
    shapes: &'a [Arc<RigidShape>],
    anchor: &'a [Pose],
    membrane: &'a ScalarField,
    samples: Vec<Vec<Vec2>>,
    config: ProjectionConfig,
}

impl<'a> Objective<'a> {
    pub fn new(
        shapes: &'a [Arc<RigidShape>],
        anchor: &'a [Pose],
        membrane: &'a ScalarField,
        config: ProjectionConfig,
    ) -> Result<Self> {
        if shapes.len() != anchor.len() {
            return Err(Error::MalformedScene("anchor and shape counts differ".into()));
        }
        config.validate()?;
        Ok(Self {
            shapes,
            anchor,
            membrane,
            samples: local_boundary_samples(shapes, config.boundary_samples),
            config,
        })
    }

    pub fn evaluate(&self, poses: &[Pose]) -> ObjectiveEval {
        let cfg = &self.config;
        let n = poses.len();
        let mut grads = vec![[0.0; 3]; n];
        let mut proximal = 0.0;
        for i in 0..n {
            let dp = poses[i].p - self.anchor[i].p;
            let r2 = self.shapes[i].circumradius().powi(2);
            let dt = wrapped_angle_difference(poses[i].theta(), self.anchor[i].theta());
            proximal += dp.norm_sq() / (2.0 * cfg.tau_p) + r2 * dt * dt / (2.0 * cfg.tau_theta);
            grads[i][0] += dp.x / cfg.tau_p;
            grads[i][1] += dp.y / cfg.tau_p;
            grads[i][2] += r2 * dt / cfg.tau_theta;
        }
        let coll = collision_placed(&place_all(self.shapes, poses, &cfg.penetration), &cfg.penetration, cfg.sigma_g);
        let cont = containment_samples(&self.samples, poses, self.membrane, cfg.level);
        for i in 0..n {
            for k in 0..3 {
                grads[i][k] += cfg.w_coll * coll.grads[i][k] + cfg.w_cont * cont.grads[i][k];
            }
        }
        ObjectiveEval {
            value: proximal + cfg.w_coll * coll.value + cfg.w_cont * cont.value,
            proximal,
            collision: coll.value,
            containment: cont.value,
            grads,
        }
    }
}

/// Objective value of `scene` relative to `anchor`.
pub fn projection_objective(
    scene: &Scene,
    anchor: &[Pose],
    membrane: &ScalarField,
    config: &ProjectionConfig,
) -> Result<ObjectiveEval> {
    Ok(Objective::new(&scene.shapes, anchor, membrane, *config)?.evaluate(&scene.poses))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionReport {
    pub initial: ObjectiveEval,
    pub best: ObjectiveEval,
    pub accepted_steps: usize,
}

/// Backtracking gradient descent from the scene's current poses.
/// Rotation components are scaled by `1/r²`, and each trial step is sized
/// so the shape moving furthest travels `step_size` (halved on failure).
/// Returns the best iterate.
pub fn project_poses(
    scene: &Scene,
    anchor: &[Pose],
    membrane: &ScalarField,
    config: &ProjectionConfig,
) -> Result<(Scene, ProjectionReport)> {
    let objective = Objective::new(&scene.shapes, anchor, membrane, *config)?;
    let mut poses = scene.poses.clone();
    let initial = objective.evaluate(&poses);
    let mut current = initial.clone();
    let mut accepted = 0;
    let inv_r2: Vec<f64> = scene.shapes.iter().map(|s| 1.0 / s.circumradius().powi(2)).collect();

    'outer: for _ in 0..config.steps {
        // Largest per-shape displacement the raw direction would cause,
        // counting rotation as arc length at the circumradius.
        let reach = current
            .grads
            .iter()
            .zip(&inv_r2)
            .map(|(g, &k)| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2] * k).sqrt())
            .fold(0.0, f64::max);
        if reach == 0.0 {
            break;
        }
        let mut step = config.step_size / reach;
        for _ in 0..=config.max_halvings {
            let trial: Vec<Pose> = poses
                .iter()
                .zip(&current.grads)
                .zip(&inv_r2)
                .map(|((p, g), &k)| {
                    Pose::new(
                        p.p - Vec2::new(g[0], g[1]) * step,
                        p.theta() - g[2] * k * step,
                    )
                })
                .collect();
            let eval = objective.evaluate(&trial);
            if eval.value < current.value {
                poses = trial;
                current = eval;
                accepted += 1;
                continue 'outer;
            }
            step *= 0.5;
        }
        break;
    }
    let mut out = scene.clone();
    out.poses = poses;
    Ok((
        out,
        ProjectionReport {
            initial,
            best: current,
            accepted_steps: accepted,
        },
    ))
}
