//! Minimum-translation-vector separation, the geometry-only baseline.

use super::penetration::{penetration_placed, PartAggregation, PenetrationParams, PlacedPart};
use super::Scene;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtvConfig {
    /// Sweep cap; every sweep visits every pair once.
    pub max_sweeps: usize,
    /// Clearance left between separated pairs, in world units. Touching
    /// polygons still share antialiased boundary cells on the raster.
    pub clearance: f64,
    /// Pieces standing in for non-convex shapes.
    pub aggregation: PartAggregation,
}

impl Default for MtvConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 1000,
            clearance: 1.0,
            aggregation: PartAggregation::Hull,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MtvOutcome {
    pub scene: Scene,
    pub sweeps: usize,
    /// False when the sweep cap was hit before all pairs separated.
    pub converged: bool,
}

/// Pushes overlapping pairs apart along their exact minimum-penetration
/// direction, half each, until every pair is separated by the clearance.
pub fn mtv_separate(scene: &Scene, config: &MtvConfig) -> MtvOutcome {
    let params = PenetrationParams {
        aggregation: config.aggregation,
        ..PenetrationParams::exact()
    };
    let mut out = scene.clone();
    let n = out.len();
    let target = -config.clearance;
    let tol = 1e-9;

    let mut placed: Vec<Vec<PlacedPart>> = (0..n)
        .map(|i| PlacedPart::place(&out.shapes[i], &out.poses[i], config.aggregation))
        .collect();

    for sweep in 0..config.max_sweeps {
        let mut moved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let pen = penetration_placed(&placed[i], &placed[j], &params);
                if pen.value <= target + tol {
                    continue;
                }
                // Slight overshoot so the pair lands strictly inside the
                // clearance instead of on its edge.
                let push = (pen.value - target) * 0.5 + 1e-7;
                let d = pen.direction;
                out.poses[i].p -= d * push;
                out.poses[j].p += d * push;
                placed[i] = PlacedPart::place(&out.shapes[i], &out.poses[i], config.aggregation);
                placed[j] = PlacedPart::place(&out.shapes[j], &out.poses[j], config.aggregation);
                moved = true;
            }
        }
        if !moved {
            return MtvOutcome {
                scene: out,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    MtvOutcome {
        scene: out,
        sweeps: config.max_sweeps,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{penetration, Domain, Pose, RigidShape, Vec2};
    use super::*;
    use std::sync::Arc;

    fn square(id: u64) -> Arc<RigidShape> {
        Arc::new(
            RigidShape::new(
                id,
                &[
                    Vec2::new(-0.5, -0.5),
                    Vec2::new(0.5, -0.5),
                    Vec2::new(0.5, 0.5),
                    Vec2::new(-0.5, 0.5),
                ],
            )
            .unwrap(),
        )
    }

    fn scene(centres: &[Vec2]) -> Scene {
        Scene::new(
            (0..centres.len() as u64).map(square).collect(),
            centres.iter().map(|&c| Pose::new(c, 0.0)).collect(),
            Domain::default(),
        )
        .unwrap()
    }

    fn max_pair_penetration(s: &Scene) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                let g = penetration(
                    &s.shapes[i],
                    &s.poses[i],
                    &s.shapes[j],
                    &s.poses[j],
                    &PenetrationParams::exact(),
                );
                worst = worst.max(g.value);
            }
        }
        worst
    }

    #[test]
    fn separated_scene_untouched() {
        let s = scene(&[Vec2::new(10.0, 10.0), Vec2::new(20.0, 10.0)]);
        let out = mtv_separate(&s, &MtvConfig::default());
        assert!(out.converged);
        assert_eq!(out.scene.poses, s.poses);
    }

    #[test]
    fn coincident_squares_separate() {
        let s = scene(&[Vec2::new(10.0, 10.0), Vec2::new(10.0, 10.0)]);
        let out = mtv_separate(&s, &MtvConfig::default());
        assert!(out.converged);
        let d = out.scene.poses[1].p - out.scene.poses[0].p;
        assert!(d.x.abs().max(d.y.abs()) >= 1.0);
        assert!(max_pair_penetration(&out.scene) <= 0.0);
    }

    #[test]
    fn chain_resolves_all_pairs() {
        let s = scene(&[
            Vec2::new(10.0, 10.0),
            Vec2::new(10.6, 10.1),
            Vec2::new(11.1, 9.9),
        ]);
        let out = mtv_separate(&s, &MtvConfig::default());
        assert!(out.converged);
        assert!(max_pair_penetration(&out.scene) <= 1e-6);
    }

    #[test]
    fn geometry_is_never_touched() {
        let s = scene(&[Vec2::new(10.0, 10.0), Vec2::new(10.3, 10.0)]);
        let out = mtv_separate(&s, &MtvConfig::default());
        for (a, b) in s.shapes.iter().zip(&out.scene.shapes) {
            assert!(Arc::ptr_eq(a, b));
            assert_eq!(a.vertices(), b.vertices());
        }
    }

    #[test]
    fn sweep_cap_reports_failure() {
        let s = scene(&[Vec2::new(10.0, 10.0), Vec2::new(10.0, 10.0)]);
        let out = mtv_separate(
            &s,
            &MtvConfig {
                max_sweeps: 0,
                ..MtvConfig::default()
            },
        );
        assert!(!out.converged);
    }
}
