//! Scene files: JSON, and a flat-polygon SVG subset.

use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use svgtypes::{PathParser, PathSegment, PointsParser, ViewBox};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Pose, RigidShape, Scene, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub id: u64,
    /// Outline in world units.
    pub vertices: Vec<[f64; 2]>,
    /// Places the outline's area centroid; defaults to where it was drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    /// Total shape area stated by the author, checked by tests only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_area: Option<f64>,
    pub shapes: Vec<ShapeSpec>,
}

fn reindex(index: usize, e: Error) -> Error {
    match e {
        Error::InvalidGeometry { reason, .. } => Error::InvalidGeometry { index, reason },
        Error::SelfIntersecting { .. } => Error::InvalidGeometry {
            index,
            reason: e.to_string(),
        },
        other => other,
    }
}

fn build_scene(outlines: Vec<(u64, Vec<Vec2>, Option<PoseSpec>)>, domain: Domain) -> Result<Scene> {
    if outlines.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut shapes = Vec::with_capacity(outlines.len());
    let mut poses = Vec::with_capacity(outlines.len());
    for (index, (id, outline, pose)) in outlines.into_iter().enumerate() {
        let (shape, centroid) = RigidShape::from_outline(id, &outline).map_err(|e| reindex(index, e))?;
        let pose = match pose {
            Some(p) if p.x.is_finite() && p.y.is_finite() && p.theta.is_finite() => {
                Pose::new(Vec2::new(p.x, p.y), p.theta)
            }
            Some(_) => {
                return Err(Error::InvalidGeometry {
                    index,
                    reason: "pose is not finite".into(),
                })
            }
            None => Pose::new(centroid, 0.0),
        };
        shapes.push(Arc::new(shape));
        poses.push(pose);
    }
    Scene::new(shapes, poses, domain)
}

fn domain_from(spec: Option<&DomainSpec>) -> Result<Domain> {
    let Some(d) = spec else {
        return Ok(Domain::default());
    };
    let (min, max) = (Vec2::from(d.min), Vec2::from(d.max));
    if !(min.is_finite() && max.is_finite() && max.x > min.x && max.y > min.y) {
        return Err(Error::MalformedScene("domain must have positive extent".into()));
    }
    Ok(Domain::new(min, max))
}

pub fn parse_scene_json(text: &str) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text)?;
    scene_from_file(&file)
}

pub fn scene_from_file(file: &SceneFile) -> Result<Scene> {
    let domain = domain_from(file.domain.as_ref())?;
    build_scene(
        file.shapes
            .iter()
            .map(|s| (s.id, s.vertices.iter().map(|&v| Vec2::from(v)).collect(), s.pose.clone()))
            .collect(),
        domain,
    )
}

/// Describes a scene with world-space outlines and no explicit poses.
pub fn scene_to_file(scene: &Scene) -> SceneFile {
    SceneFile {
        name: None,
        domain: Some(DomainSpec {
            min: scene.domain.min.into(),
            max: scene.domain.max.into(),
        }),
        declared_area: None,
        shapes: (0..scene.len())
            .map(|i| ShapeSpec {
                id: scene.shapes[i].id(),
                vertices: scene.shapes[i].vertices().iter().map(|&v| v.into()).collect(),
                pose: Some(PoseSpec {
                    x: scene.poses[i].p.x,
                    y: scene.poses[i].p.y,
                    theta: scene.poses[i].theta(),
                }),
            })
            .collect(),
    }
}

fn svg_path_outline(index: usize, d: &str) -> Result<Vec<Vec2>> {
    let unsupported = |reason: &str| Error::UnsupportedSvg {
        index,
        reason: reason.into(),
    };
    let mut pts: Vec<Vec2> = Vec::new();
    let mut cur = Vec2::ZERO;
    let mut closed = false;
    for seg in PathParser::from(d) {
        let seg = seg.map_err(|e| unsupported(&format!("bad path data: {e}")))?;
        if closed {
            return Err(unsupported("only one closed subpath per element is supported"));
        }
        let next = match seg {
            PathSegment::MoveTo { abs, x, y } => {
                if !pts.is_empty() {
                    return Err(unsupported("only one subpath per element is supported"));
                }
                if abs {
                    Vec2::new(x, y)
                } else {
                    cur + Vec2::new(x, y)
                }
            }
            PathSegment::LineTo { abs, x, y } => {
                if abs {
                    Vec2::new(x, y)
                } else {
                    cur + Vec2::new(x, y)
                }
            }
            PathSegment::HorizontalLineTo { abs, x } => Vec2::new(if abs { x } else { cur.x + x }, cur.y),
            PathSegment::VerticalLineTo { abs, y } => Vec2::new(cur.x, if abs { y } else { cur.y + y }),
            PathSegment::ClosePath { .. } => {
                closed = true;
                continue;
            }
            _ => return Err(unsupported("curved segments are not supported; flatten them to line segments")),
        };
        if pts.is_empty() && !matches!(seg, PathSegment::MoveTo { .. }) {
            return Err(unsupported("path must start with a move-to"));
        }
        pts.push(next);
        cur = next;
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Ok(pts)
}

/// Parses `<path>` and `<polygon>` elements. Elements with `fill="none"`
/// are skipped; ids come from `data-id`, falling back to document order.
pub fn parse_scene_svg(text: &str) -> Result<Scene> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedScene(format!("invalid SVG: {e}")))?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(Error::MalformedScene("root element is not <svg>".into()));
    }
    let domain = match root.attribute("viewBox") {
        Some(vb) => {
            let vb = ViewBox::from_str(vb).map_err(|e| Error::MalformedScene(format!("bad viewBox: {e}")))?;
            Domain::new(Vec2::new(vb.x, vb.y), Vec2::new(vb.x + vb.w, vb.y + vb.h))
        }
        None => Domain::default(),
    };
    let mut outlines = Vec::new();
    let mut index = 0usize;
    for node in root.descendants().filter(|n| n.is_element()) {
        let tag = node.tag_name().name();
        if tag != "path" && tag != "polygon" {
            if node.attribute("transform").is_some() && node != root {
                return Err(Error::UnsupportedSvg {
                    index,
                    reason: format!("transform on <{tag}> is not supported"),
                });
            }
            continue;
        }
        if node.attribute("fill") == Some("none") {
            continue;
        }
        if node.attribute("transform").is_some() {
            return Err(Error::UnsupportedSvg {
                index,
                reason: "transform attributes are not supported".into(),
            });
        }
        let outline = if tag == "path" {
            svg_path_outline(index, node.attribute("d").unwrap_or(""))?
        } else {
            PointsParser::from(node.attribute("points").unwrap_or(""))
                .map(|(x, y)| Vec2::new(x, y))
                .collect()
        };
        let id = match node.attribute("data-id") {
            Some(v) => v.parse().map_err(|_| Error::UnsupportedSvg {
                index,
                reason: format!("data-id `{v}` is not an unsigned integer"),
            })?,
            None => index as u64,
        };
        outlines.push((id, outline, None));
        index += 1;
    }
    build_scene(outlines, domain)
}

/// Loads a scene from `.json` or `.svg`.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_svg = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("svg"));
    if is_svg {
        parse_scene_svg(&text)
    } else {
        parse_scene_json(&text)
    }
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    let text = serde_json::to_string_pretty(&scene_to_file(scene))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
