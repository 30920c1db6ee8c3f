use std::f64::consts::TAU;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mosaic_core::bridge::*;
use mosaic_core::geometry::{Domain, Pose, RigidShape, Scene, Vec2};
use mosaic_core::guidance::{FeatureField, FeatureSource};
use mosaic_core::Error;

fn random_field(seed: u64) -> FeatureField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // f32-representable so the narrowing in the encoder is lossless.
    let values = (0..4 * 8 * 8)
        .map(|_| rng.random_range(-3.0f32..3.0) as f64)
        .collect();
    FeatureField::new(4, 8, 8, values, FeatureSource::Synthetic).unwrap()
}

fn format_err(e: Error) -> FormatError {
    match e {
        Error::Format(f) => f,
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn feature_dump_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.ssfd");
    let field = random_field(7);
    write_feature_dump(&path, &field).unwrap();
    let back = read_feature_dump(&path).unwrap();
    assert_eq!((back.channels(), back.height(), back.width()), (4, 8, 8));
    assert_eq!(back.source(), FeatureSource::File);
    for (a, b) in field.values().iter().zip(back.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn header_layout_is_little_endian() {
    let bytes = encode_feature_dump(&random_field(1)).unwrap();
    assert_eq!(&bytes[..4], b"SSFD");
    assert_eq!(&bytes[4..14], &[1, 0, 4, 0, 8, 0, 8, 0, 0, 0]);
    assert_eq!(bytes.len(), 14 + 4 * 256 + 4);
    let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    assert_eq!(crc, crc32fast::hash(&bytes[14..bytes.len() - 4]));
}

#[test]
fn truncated_payload_is_a_size_mismatch() {
    let bytes = encode_feature_dump(&random_field(2)).unwrap();
    let cut = &bytes[..bytes.len() - 9];
    let err = format_err(decode_feature_dump(cut).unwrap_err());
    assert_eq!(
        err,
        FormatError::SizeMismatch {
            expected: bytes.len(),
            found: cut.len()
        }
    );
}

#[test]
fn flipped_payload_byte_fails_the_crc() {
    let mut bytes = encode_feature_dump(&random_field(3)).unwrap();
    bytes[14 + 101] ^= 0x40;
    let err = format_err(decode_feature_dump(&bytes).unwrap_err());
    assert!(matches!(err, FormatError::CrcMismatch { .. }), "{err}");
}

#[test]
fn bad_magic_version_and_dtype_are_distinct() {
    let good = encode_feature_dump(&random_field(4)).unwrap();

    let mut bytes = good.clone();
    bytes[0] = b'X';
    assert_eq!(
        format_err(decode_feature_dump(&bytes).unwrap_err()),
        FormatError::BadMagic(*b"XSFD")
    );

    let mut bytes = good.clone();
    bytes[4] = 9;
    assert_eq!(
        format_err(decode_feature_dump(&bytes).unwrap_err()),
        FormatError::UnsupportedVersion(9)
    );

    let mut bytes = good;
    bytes[12] = 1;
    assert_eq!(
        format_err(decode_feature_dump(&bytes).unwrap_err()),
        FormatError::UnsupportedDtype(1)
    );
}

fn square_scene(ids: &[u64]) -> Scene {
    let outline = [
        Vec2::new(-1.0, -1.0),
        Vec2::new(1.0, -1.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(-1.0, 1.0),
    ];
    let shapes = ids
        .iter()
        .map(|&id| Arc::new(RigidShape::new(id, &outline).unwrap()))
        .collect();
    let poses = ids.iter().map(|_| Pose::identity()).collect();
    Scene::new(shapes, poses, Domain::default()).unwrap()
}

#[test]
fn missing_id_is_named() {
    let scene = square_scene(&[3, 11, 42]);
    let err = parse_pose_dump("3 1 2 0\n# nothing for 11\n42 5 5 1\n", &scene).unwrap_err();
    assert_eq!(err, FormatError::MissingId(11));
    assert!(err.to_string().contains("11"));
}

#[test]
fn extra_and_repeated_ids_are_rejected_with_line_numbers() {
    let scene = square_scene(&[1, 2]);
    let err = parse_pose_dump("1 0 0 0\n2 0 0 0\n9 0 0 0\n", &scene).unwrap_err();
    assert_eq!(err, FormatError::UnknownId { line: 3, id: 9 });
    let err = parse_pose_dump("1 0 0 0\n\n1 0 0 0\n", &scene).unwrap_err();
    assert_eq!(err, FormatError::RepeatedId { line: 3, id: 1 });
    let err = parse_pose_dump("1 0 0\n", &scene).unwrap_err();
    assert!(matches!(err, FormatError::Parse { line: 1, .. }), "{err}");
    let err = parse_pose_dump("1 0 0 0\n2 0 nan 0\n", &scene).unwrap_err();
    assert!(matches!(err, FormatError::Parse { line: 2, .. }), "{err}");
}

#[test]
fn theta_is_wrapped_on_load() {
    let scene = square_scene(&[5]);
    let poses = parse_pose_dump("5 10 20 7.0  # past a full turn\n", &scene).unwrap();
    assert!((poses[0].theta() - (7.0 - TAU)).abs() < 1e-12);
    assert_eq!(poses[0].p, Vec2::new(10.0, 20.0));
}

proptest! {
    #[test]
    fn pose_dump_round_trip(
        raw in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0, -20.0f64..20.0), 1..12)
    ) {
        let ids: Vec<u64> = (0..raw.len() as u64).map(|k| 3 * k + 1).collect();
        let mut scene = square_scene(&ids);
        scene.poses = raw.iter().map(|&(x, y, t)| Pose::new(Vec2::new(x, y), t)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        write_pose_dump(&path, &scene).unwrap();
        let back = read_pose_dump(&path, &scene).unwrap();
        for (a, b) in scene.poses.iter().zip(&back) {
            prop_assert!((a.p.x - b.p.x).abs() <= 1e-9);
            prop_assert!((a.p.y - b.p.y).abs() <= 1e-9);
            prop_assert!((a.theta() - b.theta()).abs() <= 1e-9);
            prop_assert!((0.0..TAU).contains(&b.theta()));
        }
    }

    #[test]
    fn feature_dump_detects_every_single_byte_flip(seed in 0u64..50, at in 0usize..1042, bit in 0u8..8) {
        let good = encode_feature_dump(&random_field(seed)).unwrap();
        let mut bytes = good.clone();
        bytes[at] ^= 1 << bit;
        prop_assert!(decode_feature_dump(&bytes).is_err());
    }
}
