//! Scene generators and finite-difference helpers shared by the test targets.
#![allow(dead_code)]

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mosaic_core::fields::{Grid, ScalarField};
use mosaic_core::geometry::{penetration, PenetrationParams, Pose, RigidShape, Scene, Vec2};

pub fn random_outline(rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let s = rng.random_range(2.5..6.0);
    match rng.random_range(0..4) {
        // Convex: sorted angles on a jittered ellipse.
        0 | 1 => {
            let k = rng.random_range(3..=7);
            let mut angles: Vec<f64> = (0..k)
                .map(|i| (i as f64 + rng.random_range(0.1..0.9)) * TAU / k as f64)
                .collect();
            angles.sort_by(f64::total_cmp);
            let aspect = rng.random_range(0.5..1.0);
            angles
                .into_iter()
                .map(|a| Vec2::new(s * a.cos(), s * aspect * a.sin()))
                .collect()
        }
        2 => {
            let t = s * rng.random_range(0.35..0.6);
            vec![
                Vec2::new(-s, -s),
                Vec2::new(s, -s),
                Vec2::new(s, -s + t),
                Vec2::new(-s + t, -s + t),
                Vec2::new(-s + t, s),
                Vec2::new(-s, s),
            ]
        }
        _ => {
            let t = s * rng.random_range(0.25..0.45);
            vec![
                Vec2::new(-s, s - t),
                Vec2::new(-t, s - t),
                Vec2::new(-t, -s),
                Vec2::new(t, -s),
                Vec2::new(t, s - t),
                Vec2::new(s, s - t),
                Vec2::new(s, s),
                Vec2::new(-s, s),
            ]
        }
    }
}

/// `n` random shapes crowded around the domain centre so most pairs touch.
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Scene {
    let shapes: Vec<Arc<RigidShape>> = (0..n)
        .map(|k| Arc::new(RigidShape::new(k as u64, &random_outline(rng)).unwrap()))
        .collect();
    let poses = (0..n)
        .map(|_| {
            Pose::new(
                Vec2::new(64.0 + rng.random_range(-6.0..6.0), 64.0 + rng.random_range(-6.0..6.0)),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    Scene::new(shapes, poses, Default::default()).unwrap()
}

/// A smooth disc of `radius` world units around the domain centre.
pub fn disc_membrane(radius: f64) -> ScalarField {
    let grid = Grid::unit(128, 128);
    ScalarField::from_fn(grid, |i, j| {
        let r = grid.cell_center(i, j).distance(Vec2::new(64.0, 64.0));
        0.5 + 0.5 * ((radius - r) / 3.0).tanh()
    })
}

/// Every pair is at least `gap` away from a part or direction switch.
pub fn away_from_ties(scene: &Scene, params: &PenetrationParams, gap: f64) -> bool {
    for i in 0..scene.len() {
        for j in (i + 1)..scene.len() {
            let pen = penetration(&scene.shapes[i], &scene.poses[i], &scene.shapes[j], &scene.poses[j], params);
            if pen.part_gap < gap || pen.direction_gap < gap {
                return false;
            }
        }
    }
    true
}

/// No boundary sample lies within `gap` cells of a line through cell
/// centres, where bilinear interpolation has a kink.
pub fn away_from_cell_lines(scene: &Scene, grid: &Grid, samples: usize, gap: f64) -> bool {
    scene.shapes.iter().zip(&scene.poses).all(|(shape, pose)| {
        shape.boundary_samples(samples).iter().all(|&v| {
            let g = grid.to_grid(pose.apply(v));
            [g.x, g.y].iter().all(|c| {
                let f = c - c.floor();
                f > gap && f < 1.0 - gap
            })
        })
    })
}

/// Relative max-norm error between an analytic gradient and central
/// differences of `energy` with step `h` in every pose coordinate.
pub fn gradient_error(
    poses: &[Pose],
    analytic: &[[f64; 3]],
    h: f64,
    mut energy: impl FnMut(&[Pose]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..poses.len() {
        for k in 0..3 {
            let mut shifted = |delta: f64| {
                let mut p = poses.to_vec();
                let base = p[i];
                p[i] = match k {
                    0 => Pose::new(base.p + Vec2::new(delta, 0.0), base.theta()),
                    1 => Pose::new(base.p + Vec2::new(0.0, delta), base.theta()),
                    _ => Pose::new(base.p, base.theta() + delta),
                };
                energy(&p)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst = worst.max((fd - analytic[i][k]).abs());
            scale = scale.max(fd.abs()).max(analytic[i][k].abs());
        }
    }
    worst / scale.max(1e-8)
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-3;
pub const TIE_GAP: f64 = 1e-3;
pub const SUITE_SCENES: usize = 100;

#[derive(Clone, Copy, Debug, Default)]
pub struct SuiteOutcome {
    pub checked: usize,
    pub skipped_ties: usize,
    pub failures: usize,
    pub worst: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.checked == SUITE_SCENES && self.failures == 0
    }
}

/// Runs `check` on random scenes until `SUITE_SCENES` of them are away from
/// ties. `check` returns `None` for a tie and the relative error otherwise.
pub fn run_suite(seed: u64, mut check: impl FnMut(&Scene) -> Option<f64>) -> SuiteOutcome {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteOutcome::default();
    while out.checked < SUITE_SCENES && out.skipped_ties < 10 * SUITE_SCENES {
        let n = rng.random_range(2..=5);
        let scene = random_scene(&mut rng, n);
        match check(&scene) {
            None => out.skipped_ties += 1,
            Some(err) => {
                out.checked += 1;
                out.worst = out.worst.max(err);
                if !(err <= FD_TOLERANCE) {
                    out.failures += 1;
                }
            }
        }
    }
    out
}

pub fn collision_suite(seed: u64, params: PenetrationParams) -> SuiteOutcome {
    use mosaic_core::projection::collision_energy;
    let sigma_g = 2.0;
    run_suite(seed, |scene| {
        if !away_from_ties(scene, &params, TIE_GAP) {
            return None;
        }
        let eval = collision_energy(scene, &params, sigma_g);
        let mut probe = scene.clone();
        Some(gradient_error(&scene.poses, &eval.grads, FD_STEP, |p| {
            probe.poses = p.to_vec();
            collision_energy(&probe, &params, sigma_g).value
        }))
    })
}

pub fn containment_suite(seed: u64) -> SuiteOutcome {
    use mosaic_core::projection::containment_energy;
    let membrane = disc_membrane(9.0);
    let samples = 64;
    run_suite(seed, |scene| {
        if !away_from_cell_lines(scene, &membrane.grid, samples, TIE_GAP) {
            return None;
        }
        let eval = containment_energy(scene, &membrane, samples, 0.5);
        let mut probe = scene.clone();
        Some(gradient_error(&scene.poses, &eval.grads, FD_STEP, |p| {
            probe.poses = p.to_vec();
            containment_energy(&probe, &membrane, samples, 0.5).value
        }))
    })
}

pub fn objective_suite(seed: u64, config: mosaic_core::projection::ProjectionConfig) -> SuiteOutcome {
    use mosaic_core::projection::Objective;
    let membrane = disc_membrane(9.0);
    let mut jitter = {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(seed ^ 0x5eed)
    };
    run_suite(seed, |scene| {
        if !away_from_ties(scene, &config.penetration, TIE_GAP)
            || !away_from_cell_lines(scene, &membrane.grid, config.boundary_samples, TIE_GAP)
        {
            return None;
        }
        let anchor: Vec<Pose> = scene
            .poses
            .iter()
            .map(|p| {
                Pose::new(
                    p.p + Vec2::new(jitter.random_range(-0.5..0.5), jitter.random_range(-0.5..0.5)),
                    p.theta() + jitter.random_range(-0.2..0.2),
                )
            })
            .collect();
        let objective = Objective::new(&scene.shapes, &anchor, &membrane, config).unwrap();
        let eval = objective.evaluate(&scene.poses);
        Some(gradient_error(&scene.poses, &eval.grads, FD_STEP, |p| objective.evaluate(p).value))
    })
}
