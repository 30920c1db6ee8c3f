//! Plain polygon utilities: area, centroid, simplicity, convexity and
//! convex decomposition by ear clipping plus greedy merging.

use super::Vec2;
use crate::error::{Error, Result};

/// Signed shoelace area; positive for counter-clockwise winding.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

pub fn area(poly: &[Vec2]) -> f64 {
    signed_area(poly).abs()
}

/// Area centroid. Falls back to the vertex mean for degenerate input.
pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let a = signed_area(poly);
    if a.abs() < 1e-300 {
        let sum = poly.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
        return sum * (1.0 / n.max(1) as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let w = p.cross(q);
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    Vec2::new(cx / (6.0 * a), cy / (6.0 * a))
}

fn scale_of(poly: &[Vec2]) -> f64 {
    poly.iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0, f64::max)
        .max(1.0)
}

/// True when every turn is left or straight (counter-clockwise convex).
pub fn is_convex(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let eps = 1e-12 * scale_of(poly).powi(2);
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        (b - a).cross(c - b) >= -eps
    })
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2, eps: f64) -> bool {
    (b - a).cross(p - a).abs() <= eps
        && p.x >= a.x.min(b.x) - eps
        && p.x <= a.x.max(b.x) + eps
        && p.y >= a.y.min(b.y) - eps
        && p.y <= a.y.max(b.y) + eps
}

fn segments_touch(a: Vec2, b: Vec2, c: Vec2, d: Vec2, eps: f64) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    on_segment(c, a, b, eps)
        || on_segment(d, a, b, eps)
        || on_segment(a, c, d, eps)
        || on_segment(b, c, d, eps)
}

/// Checks that the closed polyline does not cross or touch itself.
pub fn check_simple(poly: &[Vec2]) -> Result<()> {
    let n = poly.len();
    let eps = 1e-12 * scale_of(poly).powi(2);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (b - a).norm_sq() == 0.0 {
            return Err(Error::SelfIntersecting {
                first: i,
                second: (i + 1) % n,
            });
        }
        // Adjacent edges may only share their common vertex; a fold-back
        // spike overlaps collinearly.
        let c = poly[(i + 2) % n];
        if (b - a).cross(c - b).abs() <= eps && (b - a).dot(c - b) < 0.0 {
            return Err(Error::SelfIntersecting {
                first: i,
                second: (i + 1) % n,
            });
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let c = poly[j];
            let d = poly[(j + 1) % n];
            if segments_touch(a, b, c, d, eps) {
                return Err(Error::SelfIntersecting { first: i, second: j });
            }
        }
    }
    Ok(())
}

fn point_in_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2, eps: f64) -> bool {
    let d1 = (b - a).cross(p - a);
    let d2 = (c - b).cross(p - b);
    let d3 = (a - c).cross(p - c);
    d1 >= -eps && d2 >= -eps && d3 >= -eps
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
/// Returns index triples into `poly`. Collinear vertices are clipped
/// without emitting a degenerate triangle.
fn triangulate(poly: &[Vec2]) -> Vec<[usize; 3]> {
    let eps = 1e-12 * scale_of(poly).powi(2);
    let mut remaining: Vec<usize> = (0..poly.len()).collect();
    let mut tris = Vec::with_capacity(poly.len().saturating_sub(2));
    let mut guard = 0usize;
    while remaining.len() > 3 {
        let m = remaining.len();
        let mut clipped = false;
        for k in 0..m {
            let ip = remaining[(k + m - 1) % m];
            let ic = remaining[k];
            let inx = remaining[(k + 1) % m];
            let (a, b, c) = (poly[ip], poly[ic], poly[inx]);
            let turn = (b - a).cross(c - b);
            if turn.abs() <= eps {
                remaining.remove(k);
                clipped = true;
                break;
            }
            if turn < 0.0 {
                continue;
            }
            let blocked = remaining.iter().any(|&o| {
                o != ip
                    && o != ic
                    && o != inx
                    && poly[o] != a
                    && poly[o] != b
                    && poly[o] != c
                    && point_in_triangle(poly[o], a, b, c, eps)
            });
            if !blocked {
                tris.push([ip, ic, inx]);
                remaining.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // Numerically stuck; emit a fan of the rest rather than loop.
            guard += 1;
            if guard > 1 {
                for k in 1..remaining.len() - 1 {
                    tris.push([remaining[0], remaining[k], remaining[k + 1]]);
                }
                return tris;
            }
        }
    }
    if remaining.len() == 3 {
        let (a, b, c) = (poly[remaining[0]], poly[remaining[1]], poly[remaining[2]]);
        if (b - a).cross(c - b).abs() > eps {
            tris.push([remaining[0], remaining[1], remaining[2]]);
        }
    }
    tris
}

/// Merges `b` into `a` across the shared directed edge `a[i] -> a[i+1]`
/// (which appears reversed in `b`). Returns `None` if they share no edge.
fn merge_across_edge(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let na = a.len();
    let nb = b.len();
    for i in 0..na {
        let (u, v) = (a[i], a[(i + 1) % na]);
        for j in 0..nb {
            if b[j] == v && b[(j + 1) % nb] == u {
                // Walk a from v around to u, then b from u (exclusive)
                // around to v (exclusive).
                let mut merged = Vec::with_capacity(na + nb - 2);
                for k in 0..na {
                    merged.push(a[(i + 1 + k) % na]);
                }
                for k in 2..nb {
                    merged.push(b[(j + k) % nb]);
                }
                return Some(merged);
            }
        }
    }
    None
}

fn strip_collinear(poly: Vec<Vec2>) -> Vec<Vec2> {
    let eps = 1e-12 * scale_of(&poly).powi(2);
    let mut out = poly;
    loop {
        let n = out.len();
        if n <= 3 {
            return out;
        }
        let hit = (0..n).find(|&i| {
            let a = out[(i + n - 1) % n];
            let b = out[i];
            let c = out[(i + 1) % n];
            (b - a).cross(c - b).abs() <= eps
        });
        match hit {
            Some(i) => {
                out.remove(i);
            }
            None => return out,
        }
    }
}

/// Splits a simple polygon into convex pieces whose union is the input.
///
/// Already-convex input comes back as a single part. Winding of the input
/// may be either orientation; parts are always counter-clockwise.
/// Counter-clockwise convex hull (Andrew's monotone chain), collinear
/// points dropped.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let ordered: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in ordered {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (b - a).cross(p - a) > 0.0 {
                    break;
                }
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn convex_decompose(poly: &[Vec2]) -> Result<Vec<Vec<Vec2>>> {
    if poly.len() < 3 {
        return Err(Error::InvalidGeometry {
            index: 0,
            reason: format!("polygon needs at least 3 vertices, got {}", poly.len()),
        });
    }
    check_simple(poly)?;
    let mut ccw = poly.to_vec();
    if signed_area(&ccw) < 0.0 {
        ccw.reverse();
    }
    if is_convex(&ccw) {
        return Ok(vec![ccw]);
    }

    let mut parts: Vec<Vec<usize>> = triangulate(&ccw).into_iter().map(|t| t.to_vec()).collect();
    let as_points = |idx: &[usize]| idx.iter().map(|&k| ccw[k]).collect::<Vec<_>>();

    // Greedy Hertel-Mehlhorn: merge across any shared diagonal as long as
    // the union stays convex.
    let mut changed = true;
    while changed {
        changed = false;
        'outer: for a in 0..parts.len() {
            for b in (a + 1)..parts.len() {
                if let Some(merged) = merge_across_edge(&parts[a], &parts[b]) {
                    if is_convex(&as_points(&merged)) {
                        parts[a] = merged;
                        parts.remove(b);
                        changed = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(parts
        .iter()
        .map(|p| strip_collinear(as_points(p)))
        .collect())
}
