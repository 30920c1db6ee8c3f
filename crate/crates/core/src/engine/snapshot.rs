//! SVG snapshots of an arrangement and its membrane.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::{Scene, Vec2};

/// Distinct fill colour per id, spaced by the golden angle in hue.
pub fn shape_color(id: u64) -> String {
    let hue = (id as f64 * 137.507_764_050_037_85).rem_euclid(360.0);
    format!("hsl({hue:.1},62%,58%)")
}

type EdgeKey = (u8, isize, isize);

/// One polyline of a level contour.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<Vec2>,
    /// False when the line runs into the grid border.
    pub closed: bool,
}

/// Polylines of the `level` contour, through cell centres, in world
/// coordinates. Border cells extend outwards unchanged, so a field that is
/// level everywhere has no contour.
pub fn membrane_contour(u: &ScalarField, level: f64) -> Vec<Contour> {
    let g = u.grid;
    let (w, h) = (g.width as isize, g.height as isize);
    let at = |i: isize, j: isize| -> f64 { u.values[g.index(i.clamp(0, w - 1) as usize, j.clamp(0, h - 1) as usize)] };
    let centre = |i: isize, j: isize| {
        Vec2::new(
            g.origin.x + (i as f64 + 0.5) * g.cell,
            g.origin.y + (j as f64 + 0.5) * g.cell,
        )
    };
    // Crossing on the edge from (i, j) towards +x (kind 0) or +y (kind 1).
    let crossing = |key: EdgeKey| -> Vec2 {
        let (kind, i, j) = key;
        let (i2, j2) = if kind == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (at(i, j), at(i2, j2));
        let t = if a == b { 0.5 } else { ((level - a) / (b - a)).clamp(0.0, 1.0) };
        let (pa, pb) = (centre(i, j), centre(i2, j2));
        pa + (pb - pa) * t
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..h - 1 {
        for i in 0..w - 1 {
            let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let inside = v.map(|x| x >= level);
            let code = inside
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
            if code == 0 || code == 15 {
                continue;
            }
            // Edges of the square: bottom, right, top, left.
            let e = [(0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j)];
            let mid_inside = v.iter().sum::<f64>() / 4.0 >= level;
            let pairs: &[(usize, usize)] = match code {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 if mid_inside => &[(3, 2), (0, 1)],
                5 => &[(3, 0), (1, 2)],
                10 if mid_inside => &[(3, 0), (1, 2)],
                10 => &[(3, 2), (0, 1)],
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                segments.push((e[a], e[b]));
            }
        }
    }

    let mut adjacency: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(k);
        adjacency.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    // Follows unused segments from `tail`, appending keys. True if the walk
    // came back to `stop`.
    let walk = |mut tail: EdgeKey, stop: EdgeKey, keys: &mut Vec<EdgeKey>, used: &mut Vec<bool>| -> bool {
        loop {
            let Some(k) = adjacency[&tail].iter().copied().find(|&k| !used[k]) else {
                return false;
            };
            used[k] = true;
            let (a, b) = segments[k];
            tail = if a == tail { b } else { a };
            if tail == stop {
                return true;
            }
            keys.push(tail);
        }
    };
    let mut contours = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, second) = segments[start];
        let mut keys = vec![first, second];
        let closed = walk(second, first, &mut keys, &mut used);
        if !closed {
            let mut back = Vec::new();
            walk(first, second, &mut back, &mut used);
            back.reverse();
            back.extend(keys);
            keys = back;
        }
        contours.push(Contour {
            points: keys.into_iter().map(crossing).collect(),
            closed,
        });
    }
    contours
}

fn polyline_path(points: &[Vec2], close: bool) -> String {
    let mut d = String::new();
    for (k, p) in points.iter().enumerate() {
        let cmd = if k == 0 { 'M' } else { 'L' };
        write!(d, "{cmd}{:.6} {:.6} ", p.x, p.y).expect("writing to a String");
    }
    if close {
        d.push('Z');
    }
    d.trim_end().to_string()
}

/// SVG text of the arrangement, with the membrane's 0.5 contour when a
/// membrane is given.
pub fn render_snapshot(scene: &Scene, membrane: Option<&ScalarField>) -> String {
    let d = scene.domain;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.6} {:.6} {:.6} {:.6}">"#,
        d.min.x,
        d.min.y,
        d.width(),
        d.height()
    )
    .expect("writing to a String");
    for i in 0..scene.len() {
        let id = scene.shapes[i].id();
        writeln!(
            out,
            r##"  <path data-id="{id}" d="{}" fill="{}" stroke="#202020" stroke-width="0.15"/>"##,
            polyline_path(&scene.world_vertices(i), true),
            shape_color(id)
        )
        .expect("writing to a String");
    }
    if let Some(u) = membrane {
        let loops = membrane_contour(u, 0.5);
        if !loops.is_empty() {
            let d: Vec<String> = loops.iter().map(|l| polyline_path(&l.points, l.closed)).collect();
            writeln!(
                out,
                r##"  <path class="membrane" d="{}" fill="none" stroke="#1f6feb" stroke-width="0.35"/>"##,
                d.join(" ")
            )
            .expect("writing to a String");
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn export_snapshot(scene: &Scene, membrane: Option<&ScalarField>, path: &Path) -> Result<()> {
    fs::write(path, render_snapshot(scene, membrane)).map_err(|e| Error::io(path, e))
}
