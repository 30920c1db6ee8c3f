//! Grid-sampled scalar fields: occupancy rasterization, union, pressure
//! and the discrete overlap metric.

use crate::error::{Error, Result};
use crate::geometry::{transform_vertices, Domain, Pose, RigidShape, Vec2};

/// Square-celled grid. Cell `(i, j)` has its centre at
/// `origin + ((i + ½)·cell, (j + ½)·cell)`; storage is row-major in `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub origin: Vec2,
    pub cell: f64,
}

impl Grid {
    pub fn new(width: usize, height: usize, origin: Vec2, cell: f64) -> Self {
        assert!(width > 0 && height > 0 && cell > 0.0, "degenerate grid");
        Self {
            width,
            height,
            origin,
            cell,
        }
    }

    /// `resolution × resolution` grid whose square cells cover `domain`.
    pub fn covering(domain: &Domain, resolution: usize) -> Self {
        let cell = domain.width().max(domain.height()) / resolution as f64;
        Self::new(resolution, resolution, domain.min, cell)
    }

    /// Unit cells with the origin at zero; world units equal cells.
    pub fn unit(width: usize, height: usize) -> Self {
        Self::new(width, height, Vec2::ZERO, 1.0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.cell,
            self.origin.y + (j as f64 + 0.5) * self.cell,
        )
    }

    /// Continuous cell-centre coordinates of a world point.
    #[inline]
    pub fn to_grid(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            (p.x - self.origin.x) / self.cell - 0.5,
            (p.y - self.origin.y) / self.cell - 0.5,
        )
    }

    pub fn world_max(&self) -> Vec2 {
        Vec2::new(
            self.origin.x + self.width as f64 * self.cell,
            self.origin.y + self.height as f64 * self.cell,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn filled(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count does not match grid");
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.height {
            for i in 0..grid.width {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value outside the grid reads as zero.
    #[inline]
    fn at_padded(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i >= self.grid.width as isize || j >= self.grid.height as isize {
            0.0
        } else {
            self.values[self.grid.index(i as usize, j as usize)]
        }
    }

    /// Bilinear interpolation between cell centres at a world point, with
    /// its spatial gradient. Cells beyond the grid read as zero.
    pub fn sample_bilinear(&self, p: Vec2) -> (f64, Vec2) {
        let g = self.grid.to_grid(p);
        let fx = g.x.floor();
        let fy = g.y.floor();
        let tx = g.x - fx;
        let ty = g.y - fy;
        let (i, j) = (fx as isize, fy as isize);
        let v00 = self.at_padded(i, j);
        let v10 = self.at_padded(i + 1, j);
        let v01 = self.at_padded(i, j + 1);
        let v11 = self.at_padded(i + 1, j + 1);
        let value = v00 * (1.0 - tx) * (1.0 - ty)
            + v10 * tx * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v11 * tx * ty;
        let dx = ((v10 - v00) * (1.0 - ty) + (v11 - v01) * ty) / self.grid.cell;
        let dy = ((v01 - v00) * (1.0 - tx) + (v11 - v10) * tx) / self.grid.cell;
        (value, Vec2::new(dx, dy))
    }
}

/// Normalized 1D Gaussian taps, truncated at three standard deviations.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Border handling for separable blurs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Border {
    /// Off-grid taps are dropped and the rest renormalized.
    Renormalize,
    /// Off-grid taps read zero; mass leaks out at the edge.
    Zero,
}

/// Separable Gaussian blur of a row-major `width × height` array.
pub(crate) fn blur(values: &[f64], width: usize, height: usize, sigma: f64, border: Border) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let taps = gaussian_kernel(sigma);
    let r = (taps.len() / 2) as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for j in 0..height {
            for i in 0..width {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (k, &w) in taps.iter().enumerate() {
                    let off = k as isize - r;
                    let (ii, jj) = if horizontal {
                        (i as isize + off, j as isize)
                    } else {
                        (i as isize, j as isize + off)
                    };
                    if ii < 0 || jj < 0 || ii >= width as isize || jj >= height as isize {
                        continue;
                    }
                    acc += w * src[jj as usize * width + ii as usize];
                    wsum += w;
                }
                out[j * width + i] = match border {
                    Border::Renormalize if wsum > 0.0 => acc / wsum,
                    _ => acc,
                };
            }
        }
        out
    };
    let h = pass(values, true);
    pass(&h, false)
}

/// Central differences in the interior, one-sided at the borders, in
/// units of value per cell.
pub(crate) fn gradient(values: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |i: usize, j: usize| values[j * width + i];
    let mut gx = vec![0.0; values.len()];
    let mut gy = vec![0.0; values.len()];
    for j in 0..height {
        for i in 0..width {
            let k = j * width + i;
            gx[k] = if width < 2 {
                0.0
            } else if i == 0 {
                at(1, j) - at(0, j)
            } else if i == width - 1 {
                at(i, j) - at(i - 1, j)
            } else {
                0.5 * (at(i + 1, j) - at(i - 1, j))
            };
            gy[k] = if height < 2 {
                0.0
            } else if j == 0 {
                at(i, 1) - at(i, 0)
            } else if j == height - 1 {
                at(i, j) - at(i, j - 1)
            } else {
                0.5 * (at(i, j + 1) - at(i, j - 1))
            };
        }
    }
    (gx, gy)
}

/// Signed distance from `q` to a simple polygon boundary, negative inside.
pub fn polygon_sdf(poly: &[Vec2], q: Vec2) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    let mut inside = false;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        let ab = b - a;
        let t = ((q - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
        best = best.min((q - (a + ab * t)).norm_sq());
        if (a.y > q.y) != (b.y > q.y) {
            let x_cross = a.x + (q.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if q.x < x_cross {
                inside = !inside;
            }
        }
    }
    let d = best.sqrt();
    if inside {
        -d
    } else {
        d
    }
}

#[derive(Clone, Debug)]
pub struct Rasterized {
    pub field: ScalarField,
    /// Part of the shape lies outside the grid's world box.
    pub clipped: bool,
}

/// Soft coverage `clamp(½ − sdf/w, 0, 1)` of a posed shape, with `w` the
/// antialiasing width in cells.
pub fn rasterize_occupancy(shape: &RigidShape, pose: &Pose, grid: &Grid, aa_cells: f64) -> Rasterized {
    let poly = transform_vertices(shape, pose);
    let w = aa_cells * grid.cell;
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for &v in &poly {
        lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let top = grid.world_max();
    let clipped = lo.x < grid.origin.x || lo.y < grid.origin.y || hi.x > top.x || hi.y > top.y;

    let mut field = ScalarField::zeros(*grid);
    let g_lo = grid.to_grid(lo - Vec2::new(w, w));
    let g_hi = grid.to_grid(hi + Vec2::new(w, w));
    let i0 = g_lo.x.floor().max(0.0) as usize;
    let j0 = g_lo.y.floor().max(0.0) as usize;
    let i1 = (g_hi.x.ceil().max(-1.0) as isize).min(grid.width as isize - 1);
    let j1 = (g_hi.y.ceil().max(-1.0) as isize).min(grid.height as isize - 1);
    if i1 < 0 || j1 < 0 {
        return Rasterized { field, clipped };
    }
    for j in j0..=j1 as usize {
        for i in i0..=i1 as usize {
            let sdf = polygon_sdf(&poly, grid.cell_center(i, j));
            field.values[grid.index(i, j)] = (0.5 - sdf / w).clamp(0.0, 1.0);
        }
    }
    Rasterized { field, clipped }
}

fn check_same_grid(fields: &[&ScalarField]) -> Result<Grid> {
    let first = fields.first().ok_or(Error::EmptyFieldList)?.grid;
    if fields.iter().any(|f| f.grid != first) {
        return Err(Error::GridMismatch);
    }
    Ok(first)
}

/// Cellwise maximum.
pub fn union_occupancy(fields: &[ScalarField]) -> Result<ScalarField> {
    let refs: Vec<&ScalarField> = fields.iter().collect();
    let grid = check_same_grid(&refs)?;
    let mut out = fields[0].clone();
    for f in &fields[1..] {
        for (o, &v) in out.values.iter_mut().zip(&f.values) {
            *o = o.max(v);
        }
    }
    debug_assert_eq!(out.grid, grid);
    Ok(out)
}

/// Cellwise sum of occupancies.
pub fn occupancy_sum(fields: &[ScalarField]) -> Result<ScalarField> {
    let refs: Vec<&ScalarField> = fields.iter().collect();
    let grid = check_same_grid(&refs)?;
    let mut out = ScalarField::zeros(grid);
    for f in fields {
        for (o, &v) in out.values.iter_mut().zip(&f.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// Overlap plus containment pressure:
/// `max(0, Σs − 1)² + max(0, Σs − u)²`.
pub fn pressure_field(occupancies: &[ScalarField], membrane: &ScalarField) -> Result<ScalarField> {
    let total = occupancy_sum(occupancies)?;
    if total.grid != membrane.grid {
        return Err(Error::GridMismatch);
    }
    let values = total
        .values
        .iter()
        .zip(&membrane.values)
        .map(|(&s, &u)| {
            let over = (s - 1.0).max(0.0);
            let out = (s - u).max(0.0);
            over * over + out * out
        })
        .collect();
    Ok(ScalarField::from_values(total.grid, values))
}

/// Percentage of occupied cells (`s > 0.1`) that are claimed by two or
/// more shapes. Zero when nothing is occupied.
pub fn overlap_percentage(occupancies: &[ScalarField]) -> f64 {
    let Some(first) = occupancies.first() else {
        return 0.0;
    };
    let mut occupied = 0usize;
    let mut multiple = 0usize;
    for k in 0..first.values.len() {
        let count = occupancies.iter().filter(|f| f.values[k] > 0.1).count();
        if count >= 1 {
            occupied += 1;
        }
        if count >= 2 {
            multiple += 1;
        }
    }
    if occupied == 0 {
        0.0
    } else {
        100.0 * multiple as f64 / occupied as f64
    }
}
