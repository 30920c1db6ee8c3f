use std::sync::Arc;

use mosaic_core::engine::*;
use mosaic_core::fields::{overlap_percentage, rasterize_occupancy, Grid};
use mosaic_core::fixtures::{generate_fixture, FixtureOptions};
use mosaic_core::geometry::{Pose, RigidShape, Scene, Vec2};
use mosaic_core::guidance::{ConstantDirection, GuidanceSpec};
use mosaic_core::Error;

fn square(id: u64, half: f64, at: Vec2) -> (Arc<RigidShape>, Pose) {
    let outline = [
        Vec2::new(-half, -half),
        Vec2::new(half, -half),
        Vec2::new(half, half),
        Vec2::new(-half, half),
    ];
    (Arc::new(RigidShape::new(id, &outline).unwrap()), Pose::new(at, 0.0))
}

fn scene_of(parts: Vec<(Arc<RigidShape>, Pose)>) -> Scene {
    let (shapes, poses) = parts.into_iter().unzip();
    Scene::new(shapes, poses, Default::default()).unwrap()
}

fn half_overlapping_squares() -> Scene {
    scene_of(vec![
        square(1, 8.0, Vec2::new(60.0, 64.0)),
        square(2, 8.0, Vec2::new(68.0, 64.0)),
    ])
}

fn config(mode: Mode) -> Phase2Config {
    Phase2Config {
        mode,
        guidance_spec: Some("const-dir:0,1".parse().unwrap()),
        ..Phase2Config::default()
    }
}

fn fixture_scene(seed: u64) -> Scene {
    scene_from_file(&generate_fixture(seed, &FixtureOptions::default()).unwrap()).unwrap()
}

#[test]
fn feasible_scene_stops_before_the_first_iteration() {
    let scene = scene_of(vec![
        square(1, 5.0, Vec2::new(30.0, 30.0)),
        square(2, 5.0, Vec2::new(80.0, 80.0)),
    ]);
    for mode in [Mode::Semantic, Mode::Isotropic, Mode::MtvOnly] {
        let result = phase2_run(scene.clone(), &config(mode)).unwrap();
        assert_eq!(result.iterations, 0);
        assert!(result.metrics.rows.is_empty());
        assert!(result.success);
        assert_eq!(result.scene.poses, scene.poses);
    }
}

#[test]
fn half_overlapping_squares_separate_isotropically() {
    let scene = half_overlapping_squares();
    let grid = Grid::covering(&scene.domain, 128);
    let occ: Vec<_> = (0..2)
        .map(|i| rasterize_occupancy(&scene.shapes[i], &scene.poses[i], &grid, 1.0).field)
        .collect();
    assert!(overlap_percentage(&occ) > 20.0);

    let result = phase2_run(scene, &config(Mode::Isotropic)).unwrap();
    assert!(result.success);
    assert!(result.iterations <= 500);
    assert!(result.metrics.final_overlap() <= 0.5);
    let gap = (result.scene.poses[0].p - result.scene.poses[1].p).norm();
    assert!(gap > 15.0, "centres only {gap} apart");
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let result = phase2_run(fixture_scene(3), &Phase2Config { seed: 17, ..config(Mode::Semantic) }).unwrap();
        let (csv, svg) = (dir.path().join(format!("m{k}.csv")), dir.path().join(format!("s{k}.svg")));
        result.metrics.write_csv(&csv).unwrap();
        export_snapshot(&result.scene, result.membrane.as_ref(), &svg).unwrap();
        bytes.push((std::fs::read(csv).unwrap(), std::fs::read(svg).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
    let csv = String::from_utf8(bytes[0].0.clone()).unwrap();
    assert!(csv.starts_with("iter,overlap_pct,pressure_sum,area_u,E_coll,E_cont,ms\n"));
}

#[test]
fn incoherent_guidance_reproduces_the_isotropic_run() {
    let scene = fixture_scene(5);
    let iso = phase2_run(scene.clone(), &config(Mode::Isotropic)).unwrap();
    let sem = Phase2Run::new(
        scene,
        config(Mode::Semantic),
        Some(Box::new(ConstantDirection::new(0.7, 0.0).unwrap())),
    )
    .unwrap()
    .run(&mut |_| {})
    .unwrap();
    assert_eq!(iso.metrics.to_csv(), sem.metrics.to_csv());
    assert_eq!(iso.scene.poses, sem.scene.poses);
    assert_eq!(iso.membrane, sem.membrane);
}

#[test]
fn task_rules_hold_at_every_iteration() {
    let scene = fixture_scene(8);
    let originals: Vec<Vec<Vec2>> = scene.shapes.iter().map(|s| s.vertices().to_vec()).collect();
    let ids: Vec<u64> = scene.shapes.iter().map(|s| s.id()).collect();
    let tau = 0.5;
    let mut seen = 0;
    let result = Phase2Run::new(scene, config(Mode::Semantic), None)
        .unwrap()
        .run(&mut |view| {
            seen += 1;
            assert_eq!(view.scene.len(), ids.len());
            for (i, shape) in view.scene.shapes.iter().enumerate() {
                assert_eq!(shape.id(), ids[i]);
                assert_eq!(shape.vertices(), originals[i].as_slice());
            }
        })
        .unwrap();
    assert_eq!(seen, result.iterations);
    assert_eq!(result.metrics.rows.len(), result.iterations);
    if result.success {
        assert!(result.metrics.final_overlap() <= tau);
    }
}

#[test]
fn iteration_cap_ends_the_run() {
    let result = phase2_run(
        fixture_scene(2),
        &Phase2Config {
            max_iterations: 1,
            ..config(Mode::Isotropic)
        },
    )
    .unwrap();
    assert_eq!(result.iterations, 1);
    assert_eq!(result.success, result.metrics.final_overlap() <= 0.5);
}

#[test]
fn mtv_mode_is_a_single_pass_without_membrane() {
    let result = phase2_run(fixture_scene(4), &config(Mode::MtvOnly)).unwrap();
    assert_eq!(result.iterations, 1);
    assert!(result.membrane.is_none());
    assert!(result.metrics.rows[0].mtv_converged);
}

#[test]
fn semantic_mode_needs_a_provider() {
    let cfg = Phase2Config {
        guidance_spec: None,
        ..config(Mode::Semantic)
    };
    let err = Phase2Run::new(half_overlapping_squares(), cfg, None).err().unwrap();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn unreadable_feature_dump_aborts_the_run() {
    let cfg = Phase2Config {
        guidance_spec: Some(GuidanceSpec::File("/nonexistent/features.ssfd".into())),
        ..config(Mode::Semantic)
    };
    let started = Phase2Run::new(half_overlapping_squares(), cfg, None);
    let outcome = started.and_then(|run| run.run(&mut |_| {}));
    assert!(outcome.is_err());
}

#[test]
fn bad_configs_are_rejected() {
    for cfg in [
        Phase2Config { tau_stop: 0.0, ..config(Mode::Isotropic) },
        Phase2Config { grid_resolution: 4, ..config(Mode::Isotropic) },
        Phase2Config { alpha: -1.0, ..config(Mode::Isotropic) },
    ] {
        assert!(matches!(Phase2Run::new(half_overlapping_squares(), cfg, None), Err(Error::Config(_))));
    }
}

#[test]
fn modes_parse_and_print() {
    for (text, mode) in [("semantic", Mode::Semantic), ("isotropic", Mode::Isotropic), ("mtv", Mode::MtvOnly)] {
        assert_eq!(text.parse::<Mode>().unwrap(), mode);
        assert_eq!(mode.to_string(), text);
    }
    assert!("anisotropic".parse::<Mode>().is_err());
}
