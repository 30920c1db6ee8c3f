//! Seeded generator for overlapping test arrangements.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{scene_from_file, SceneFile, ShapeSpec};
use crate::error::{Error, Result};
use crate::fields::{overlap_percentage, rasterize_occupancy, Grid};
use crate::geometry::{Domain, Vec2};

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureOptions {
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Half-size range of generated shapes, world units.
    pub size: (f64, f64),
    /// Accepted initial overlap window, percent.
    pub overlap: (f64, f64),
    /// Spread layout: stretch factor and direction of the long axis.
    pub elongation: Option<(f64, f64)>,
    pub grid_resolution: usize,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            min_shapes: 5,
            max_shapes: 9,
            size: (4.0, 7.0),
            overlap: (20.0, 40.0),
            elongation: None,
            grid_resolution: 128,
        }
    }
}

fn rect(hw: f64, hh: f64) -> Vec<Vec2> {
    vec![
        Vec2::new(-hw, -hh),
        Vec2::new(hw, -hh),
        Vec2::new(hw, hh),
        Vec2::new(-hw, hh),
    ]
}

fn convex_shape(rng: &mut ChaCha8Rng, s: f64) -> Vec<Vec2> {
    match rng.random_range(0..3) {
        0 => rect(s, s * rng.random_range(0.45..0.9)),
        1 => vec![
            Vec2::new(-s, -0.8 * s),
            Vec2::new(s, -0.8 * s),
            Vec2::new(rng.random_range(-0.5..0.5) * s, s),
        ],
        _ => {
            let k = rng.random_range(5..=7);
            let phase = rng.random_range(0.0..1.0);
            (0..k)
                .map(|i| Vec2::from_angle((i as f64 + phase) * std::f64::consts::TAU / k as f64) * s)
                .collect()
        }
    }
}

fn concave_shape(rng: &mut ChaCha8Rng, s: f64) -> Vec<Vec2> {
    let t = s * rng.random_range(0.4..0.55);
    match rng.random_range(0..4) {
        // L
        0 => vec![
            Vec2::new(-s, -s),
            Vec2::new(s, -s),
            Vec2::new(s, -s + 2.0 * t),
            Vec2::new(-s + 2.0 * t, -s + 2.0 * t),
            Vec2::new(-s + 2.0 * t, s),
            Vec2::new(-s, s),
        ],
        // T
        1 => vec![
            Vec2::new(-s, s - 2.0 * t),
            Vec2::new(-t, s - 2.0 * t),
            Vec2::new(-t, -s),
            Vec2::new(t, -s),
            Vec2::new(t, s - 2.0 * t),
            Vec2::new(s, s - 2.0 * t),
            Vec2::new(s, s),
            Vec2::new(-s, s),
        ],
        // U
        2 => vec![
            Vec2::new(-s, -s),
            Vec2::new(s, -s),
            Vec2::new(s, s),
            Vec2::new(s - 1.6 * t, s),
            Vec2::new(s - 1.6 * t, -s + 1.6 * t),
            Vec2::new(-s + 1.6 * t, -s + 1.6 * t),
            Vec2::new(-s + 1.6 * t, s),
            Vec2::new(-s, s),
        ],
        // Chevron
        _ => vec![
            Vec2::new(-s, -s),
            Vec2::new(0.0, -s + 1.2 * t),
            Vec2::new(s, -s),
            Vec2::new(s, -s + 1.6 * t),
            Vec2::new(0.0, s),
            Vec2::new(-s, -s + 1.6 * t),
        ],
    }
}

fn placed_outline(local: &[Vec2], p: Vec2, theta: f64) -> Vec<[f64; 2]> {
    local.iter().map(|&v| (v.rotate(theta) + p).into()).collect()
}

/// Builds one fixture: a random mix of convex and non-convex shapes whose
/// layout is contracted about its centre until the overlap percentage
/// falls inside the requested window.
pub fn generate_fixture(seed: u64, options: &FixtureOptions) -> Result<SceneFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = Domain::default();
    let centre = (domain.min + domain.max) * 0.5;
    let n = rng.random_range(options.min_shapes..=options.max_shapes);
    let concave = rng.random_range(1..n);
    let mut locals: Vec<Vec<Vec2>> = (0..n)
        .map(|k| {
            let s = rng.random_range(options.size.0..options.size.1);
            if k < concave {
                concave_shape(&mut rng, s)
            } else {
                convex_shape(&mut rng, s)
            }
        })
        .collect();
    locals.shuffle(&mut rng);
    let thetas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let spread = options.size.1 * 2.2 * (n as f64).sqrt();
    let offsets: Vec<Vec2> = (0..n)
        .map(|_| {
            let r = spread * rng.random_range(0.0f64..1.0).sqrt();
            let d = Vec2::from_angle(rng.random_range(0.0..std::f64::consts::TAU)) * r;
            match options.elongation {
                Some((stretch, angle)) => {
                    let axis = Vec2::from_angle(angle);
                    let along = d.dot(axis) * stretch;
                    let across = d.dot(axis.perp()) / stretch;
                    axis * along + axis.perp() * across
                }
                None => d,
            }
        })
        .collect();

    let grid = Grid::covering(&domain, options.grid_resolution);
    let layout = |k: f64| -> Vec<Vec<[f64; 2]>> {
        (0..n)
            .map(|i| placed_outline(&locals[i], centre + offsets[i] * k, thetas[i]))
            .collect()
    };
    let overlap_at = |k: f64| -> Result<f64> {
        let file = to_file(seed, &layout(k));
        let scene = scene_from_file(&file)?;
        let fields: Vec<_> = scene
            .shapes
            .iter()
            .zip(&scene.poses)
            .map(|(s, p)| rasterize_occupancy(s, p, &grid, 1.0).field)
            .collect();
        Ok(overlap_percentage(&fields))
    };

    let (lo_pct, hi_pct) = options.overlap;
    let target = 0.5 * (lo_pct + hi_pct);
    // Overlap shrinks as the layout expands.
    let (mut tight, mut loose) = (0.0, 1.0);
    while overlap_at(loose)? > lo_pct {
        loose *= 1.5;
        if loose > 50.0 {
            return Err(Error::MalformedScene(format!("fixture {seed}: layout never separates")));
        }
    }
    for _ in 0..60 {
        let k = 0.5 * (tight + loose);
        let pct = overlap_at(k)?;
        if (lo_pct..=hi_pct).contains(&pct) {
            return Ok(to_file(seed, &layout(k)));
        }
        if pct > target {
            tight = k;
        } else {
            loose = k;
        }
    }
    Err(Error::MalformedScene(format!(
        "fixture {seed}: could not reach {lo_pct}–{hi_pct}% overlap"
    )))
}

fn to_file(seed: u64, outlines: &[Vec<[f64; 2]>]) -> SceneFile {
    SceneFile {
        name: Some(format!("fixture-{seed}")),
        domain: None,
        declared_area: None,
        shapes: outlines
            .iter()
            .enumerate()
            .map(|(k, v)| ShapeSpec {
                id: k as u64 + 1,
                vertices: v.clone(),
                pose: None,
            })
            .collect(),
    }
}
