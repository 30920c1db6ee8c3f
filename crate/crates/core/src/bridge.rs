//! File formats shared with the external feature/pose exporter.
//!
//! Feature dumps are binary: the magic `SSFD`, then little-endian `u16`
//! version, channel count, height, width and dtype code (0 = `f32`), the
//! channel-major payload of little-endian `f32`, and a trailing CRC32 of
//! the payload bytes as a little-endian `u32`.
//!
//! Pose dumps are text, one `id x y theta` line per shape; blank lines and
//! `#` comments are ignored.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Scene, Vec2};
use crate::guidance::{FeatureField, FeatureSource};

pub const FEATURE_MAGIC: [u8; 4] = *b"SSFD";
pub const FEATURE_VERSION: u16 = 1;
pub const DTYPE_F32: u16 = 0;
const HEADER_LEN: usize = 14;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"SSFD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported feature dump version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u16),
    #[error("feature dump is {found} bytes, header implies {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("payload CRC32 {computed:#010x} does not match stored {stored:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("feature dump dimension {0} does not fit in u16")]
    DimensionTooLarge(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: id {id} is not in the scene")]
    UnknownId { line: usize, id: u64 },
    #[error("line {line}: id {id} appears twice")]
    RepeatedId { line: usize, id: u64 },
    #[error("no pose for shape id {0}")]
    MissingId(u64),
}

fn u16_dim(v: usize) -> Result<u16, FormatError> {
    u16::try_from(v).map_err(|_| FormatError::DimensionTooLarge(v))
}

/// Serializes a feature field. Values are narrowed to `f32`.
pub fn encode_feature_dump(field: &FeatureField) -> Result<Vec<u8>, FormatError> {
    let payload_len = field.values().len() * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len + 4);
    out.extend_from_slice(&FEATURE_MAGIC);
    for v in [
        FEATURE_VERSION,
        u16_dim(field.channels())?,
        u16_dim(field.height())?,
        u16_dim(field.width())?,
        DTYPE_F32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in field.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses and validates a feature dump.
pub fn decode_feature_dump(bytes: &[u8]) -> Result<FeatureField> {
    if bytes.len() < 4 {
        return Err(FormatError::SizeMismatch {
            expected: HEADER_LEN + 4,
            found: bytes.len(),
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
    if magic != FEATURE_MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::SizeMismatch {
            expected: HEADER_LEN + 4,
            found: bytes.len(),
        }
        .into());
    }
    let field_at = |k: usize| u16::from_le_bytes([bytes[4 + 2 * k], bytes[5 + 2 * k]]);
    let (version, c, h, w, dtype) = (field_at(0), field_at(1), field_at(2), field_at(3), field_at(4));
    if version != FEATURE_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    if dtype != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(dtype).into());
    }
    let count = c as usize * h as usize * w as usize;
    let expected = HEADER_LEN + 4 * count + 4;
    if bytes.len() != expected {
        return Err(FormatError::SizeMismatch {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + 4 * count];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("length checked"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::CrcMismatch { stored, computed }.into());
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of 4")) as f64)
        .collect();
    FeatureField::new(c as usize, h as usize, w as usize, values, FeatureSource::File)
}

pub fn write_feature_dump(path: &Path, field: &FeatureField) -> Result<()> {
    let bytes = encode_feature_dump(field)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_dump(path: &Path) -> Result<FeatureField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_dump(&bytes)
}

/// Renders the scene's poses as a pose dump.
pub fn format_pose_dump(scene: &Scene) -> String {
    let mut out = String::from("# id x y theta\n");
    for (shape, pose) in scene.shapes.iter().zip(&scene.poses) {
        writeln!(
            out,
            "{} {:.12} {:.12} {:.12}",
            shape.id(),
            pose.p.x,
            pose.p.y,
            pose.theta()
        )
        .expect("writing to a String");
    }
    out
}

/// Parses a pose dump against `scene`, returning poses in scene order.
pub fn parse_pose_dump(text: &str, scene: &Scene) -> Result<Vec<Pose>, FormatError> {
    let index: HashMap<u64, usize> = scene
        .shapes
        .iter()
        .enumerate()
        .map(|(k, s)| (s.id(), k))
        .collect();
    let mut poses: Vec<Option<Pose>> = vec![None; scene.len()];
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 4 {
            return Err(FormatError::Parse {
                line,
                message: format!("expected `id x y theta`, found {} fields", tokens.len()),
            });
        }
        let id: u64 = tokens[0].parse().map_err(|e| FormatError::Parse {
            line,
            message: format!("bad id `{}`: {e}", tokens[0]),
        })?;
        let mut nums = [0.0f64; 3];
        for (slot, tok) in nums.iter_mut().zip(&tokens[1..]) {
            *slot = tok.parse().map_err(|e| FormatError::Parse {
                line,
                message: format!("bad number `{tok}`: {e}"),
            })?;
            if !slot.is_finite() {
                return Err(FormatError::Parse {
                    line,
                    message: format!("non-finite value `{tok}`"),
                });
            }
        }
        let &k = index.get(&id).ok_or(FormatError::UnknownId { line, id })?;
        if !seen.insert(id) {
            return Err(FormatError::RepeatedId { line, id });
        }
        poses[k] = Some(Pose::new(Vec2::new(nums[0], nums[1]), nums[2]));
    }
    poses
        .into_iter()
        .zip(&scene.shapes)
        .map(|(p, s)| p.ok_or(FormatError::MissingId(s.id())))
        .collect()
}

pub fn write_pose_dump(path: &Path, scene: &Scene) -> Result<()> {
    fs::write(path, format_pose_dump(scene)).map_err(|e| Error::io(path, e))
}

pub fn read_pose_dump(path: &Path, scene: &Scene) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_pose_dump(&text, scene)?)
}
