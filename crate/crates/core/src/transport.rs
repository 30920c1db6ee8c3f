//! Anisotropic screened-Poisson transport and interface flux.

use crate::error::{Error, Result};
use crate::fields::{blur, gradient, Border, Grid, ScalarField};
use crate::guidance::{Sym2, TensorField};

/// `αv − ∇·(D∇v)` on a grid with zero-flux boundaries.
///
/// The divergence term is the Hessian of the discrete energy
/// `½Σ_faces a_f (Δv)² + Σ_corners D_xy gx gy`, where corner tensors are
/// the mean of the four surrounding cells and `gx`, `gy` are corner
/// differences. The operator is therefore exactly symmetric, and positive
/// definite whenever `α > 0` and every `D` is positive semidefinite.
#[derive(Clone, Debug)]
pub struct AnisotropicOperator {
    grid: Grid,
    alpha: f64,
    /// x-faces, `(width − 1) × height`.
    ax: Vec<f64>,
    /// y-faces, `width × (height − 1)`.
    ay: Vec<f64>,
    /// Corners, `(width − 1) × (height − 1)`.
    cxy: Vec<f64>,
    diag: Vec<f64>,
}

impl AnisotropicOperator {
    pub fn new(grid: Grid, tensors: &TensorField, alpha: f64) -> Result<Self> {
        if tensors.width != grid.width || tensors.height != grid.height {
            return Err(Error::GridMismatch);
        }
        let (w, h) = (grid.width, grid.height);
        let inv_h2 = 1.0 / (grid.cell * grid.cell);
        let d = |i: usize, j: usize| tensors.at(i, j);
        let corner = |i: usize, j: usize| -> Sym2 {
            d(i, j)
                .add(d(i + 1, j))
                .add(d(i, j + 1))
                .add(d(i + 1, j + 1))
                .scaled(0.25)
        };

        let mut cxy = vec![0.0; (w.saturating_sub(1)) * (h.saturating_sub(1))];
        let mut cxx = vec![0.0; cxy.len()];
        let mut cyy = vec![0.0; cxy.len()];
        for j in 0..h.saturating_sub(1) {
            for i in 0..w - 1 {
                let c = corner(i, j);
                let k = j * (w - 1) + i;
                cxx[k] = c.xx;
                cyy[k] = c.yy;
                cxy[k] = c.xy * inv_h2;
            }
        }

        let mut ax = vec![0.0; (w.saturating_sub(1)) * h];
        for j in 0..h {
            for i in 0..w.saturating_sub(1) {
                let mut a = 0.0;
                let mut present = 0;
                if j > 0 {
                    a += 0.5 * cxx[(j - 1) * (w - 1) + i];
                    present += 1;
                }
                if j + 1 < h {
                    a += 0.5 * cxx[j * (w - 1) + i];
                    present += 1;
                }
                let face = 0.5 * (d(i, j).xx + d(i + 1, j).xx);
                a += (2 - present) as f64 * 0.5 * face;
                ax[j * (w - 1) + i] = a * inv_h2;
            }
        }
        let mut ay = vec![0.0; w * (h.saturating_sub(1))];
        for j in 0..h.saturating_sub(1) {
            for i in 0..w {
                let mut a = 0.0;
                let mut present = 0;
                if i > 0 {
                    a += 0.5 * cyy[j * (w - 1) + i - 1];
                    present += 1;
                }
                if i + 1 < w {
                    a += 0.5 * cyy[j * (w - 1) + i];
                    present += 1;
                }
                let face = 0.5 * (d(i, j).yy + d(i, j + 1).yy);
                a += (2 - present) as f64 * 0.5 * face;
                ay[j * w + i] = a * inv_h2;
            }
        }

        let mut diag = vec![alpha; w * h];
        for j in 0..h {
            for i in 0..w.saturating_sub(1) {
                let a = ax[j * (w - 1) + i];
                diag[j * w + i] += a;
                diag[j * w + i + 1] += a;
            }
        }
        for j in 0..h.saturating_sub(1) {
            for i in 0..w {
                let a = ay[j * w + i];
                diag[j * w + i] += a;
                diag[(j + 1) * w + i] += a;
            }
        }
        for j in 0..h.saturating_sub(1) {
            for i in 0..w.saturating_sub(1) {
                let half = 0.5 * cxy[j * (w - 1) + i];
                diag[j * w + i] += half;
                diag[j * w + i + 1] -= half;
                diag[(j + 1) * w + i] -= half;
                diag[(j + 1) * w + i + 1] += half;
            }
        }
        diag.iter_mut().for_each(|x| *x = x.max(alpha));

        Ok(Self {
            grid,
            alpha,
            ax,
            ay,
            cxy,
            diag,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Jacobi preconditioner entries.
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (w, h) = (self.grid.width, self.grid.height);
        debug_assert_eq!(v.len(), w * h);
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.alpha * x;
        }
        for j in 0..h {
            let row = j * w;
            for i in 0..w.saturating_sub(1) {
                let f = self.ax[j * (w - 1) + i] * (v[row + i + 1] - v[row + i]);
                out[row + i] -= f;
                out[row + i + 1] += f;
            }
        }
        for j in 0..h.saturating_sub(1) {
            let row = j * w;
            for i in 0..w {
                let f = self.ay[row + i] * (v[row + w + i] - v[row + i]);
                out[row + i] -= f;
                out[row + w + i] += f;
            }
        }
        for j in 0..h.saturating_sub(1) {
            let row = j * w;
            for i in 0..w.saturating_sub(1) {
                let c = self.cxy[j * (w - 1) + i];
                if c == 0.0 {
                    continue;
                }
                let k00 = row + i;
                let (v00, v10, v01, v11) = (v[k00], v[k00 + 1], v[k00 + w], v[k00 + w + 1]);
                let gx = 0.5 * ((v10 + v11) - (v00 + v01));
                let gy = 0.5 * ((v01 + v11) - (v00 + v10));
                let hc = 0.5 * c;
                out[k00] -= hc * (gx + gy);
                out[k00 + 1] += hc * (gy - gx);
                out[k00 + w] += hc * (gx - gy);
                out[k00 + w + 1] += hc * (gx + gy);
            }
        }
    }

    pub fn apply_field(&self, v: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; v.values.len()];
        self.apply(&v.values, &mut out);
        ScalarField::from_values(self.grid, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    /// Target `‖b − Ax‖ / ‖b‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub jacobi: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 500,
            jacobi: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Relative residual of each iterate, starting with the initial guess.
    /// Not monotone in general.
    pub residuals: Vec<f64>,
    /// `½xᵀAx − bᵀx` of each iterate. Exact CG never increases it.
    pub energies: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients. Returns the iterate with the
/// smallest residual seen.
pub fn conjugate_gradient(
    op: &AnisotropicOperator,
    b: &[f64],
    initial: Option<&[f64]>,
    config: &CgConfig,
) -> (Vec<f64>, SolveReport) {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = initial.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
                residuals: vec![0.0],
                energies: vec![0.0],
            },
        );
    }
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        if config.jacobi {
            for ((z, r), d) in z.iter_mut().zip(r).zip(op.diagonal()) {
                *z = r / d;
            }
        } else {
            z.copy_from_slice(r);
        }
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    let mut residuals = vec![rel];
    // With Ax = b − r the energy is −½xᵀ(b + r).
    let energy = |x: &[f64], r: &[f64]| -0.5 * x.iter().zip(b).zip(r).map(|((x, b), r)| x * (b + r)).sum::<f64>();
    let mut energies = vec![energy(&x, &r)];
    let mut best = (rel, x.clone());
    let mut iterations = 0;
    let mut ap = vec![0.0; n];

    while rel > config.tolerance && iterations < config.max_iterations {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        iterations += 1;
        rel = dot(&r, &r).sqrt() / b_norm;
        residuals.push(rel);
        energies.push(energy(&x, &r));
        if rel < best.0 {
            best = (rel, x.clone());
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let (relative_residual, x) = best;
    (
        x,
        SolveReport {
            iterations,
            relative_residual,
            converged: relative_residual <= config.tolerance,
            residuals,
            energies,
        },
    )
}

/// Solves `αφ − ∇·(D∇φ) = P`, optionally warm-started.
pub fn solve_transport(
    pressure: &ScalarField,
    tensors: &TensorField,
    alpha: f64,
    config: &CgConfig,
    warm_start: Option<&ScalarField>,
) -> Result<(ScalarField, SolveReport)> {
    if let Some(ws) = warm_start {
        if ws.grid != pressure.grid {
            return Err(Error::GridMismatch);
        }
    }
    let op = AnisotropicOperator::new(pressure.grid, tensors, alpha)?;
    let (phi, report) = conjugate_gradient(&op, &pressure.values, warm_start.map(|w| w.values.as_slice()), config);
    if !report.converged {
        log::debug!(
            "transport solve stopped at relative residual {:.3e} after {} iterations",
            report.relative_residual,
            report.iterations
        );
    }
    Ok((ScalarField::from_values(pressure.grid, phi), report))
}

/// Half-width of the interface band around the 0.5 level.
pub const BAND_HALF_WIDTH: f64 = 0.1;

/// Outward interface flux `−∇φ·n` on the band `|u − 0.5| < half_width`,
/// zero elsewhere. `n = −∇u/‖∇u‖` points out of the membrane, so the flux
/// is positive where the potential falls off towards the outside. Returns the flux and the band mask.
pub fn interface_flux(phi: &ScalarField, u: &ScalarField, half_width: f64) -> Result<(ScalarField, Vec<bool>)> {
    if phi.grid != u.grid {
        return Err(Error::GridMismatch);
    }
    let g = u.grid;
    let (px, py) = gradient(&phi.values, g.width, g.height);
    let (ux, uy) = gradient(&u.values, g.width, g.height);
    let mut band = vec![false; g.len()];
    let mut flux = vec![0.0; g.len()];
    for k in 0..g.len() {
        if (u.values[k] - 0.5).abs() >= half_width {
            continue;
        }
        band[k] = true;
        let norm = (ux[k] * ux[k] + uy[k] * uy[k]).sqrt();
        if norm < 1e-8 {
            continue;
        }
        flux[k] = (px[k] * ux[k] + py[k] * uy[k]) / (norm * g.cell);
    }
    Ok((ScalarField::from_values(g, flux), band))
}

/// Cells within Euclidean distance `radius` (cells) of a marked cell.
pub(crate) fn dilate(mask: &[bool], width: usize, height: usize, radius: f64) -> Vec<bool> {
    let r = radius.floor() as isize;
    let r2 = radius * radius;
    let mut out = vec![false; mask.len()];
    for j in 0..height as isize {
        for i in 0..width as isize {
            if !mask[j as usize * width + i as usize] {
                continue;
            }
            for dj in -r..=r {
                for di in -r..=r {
                    if (di * di + dj * dj) as f64 > r2 {
                        continue;
                    }
                    let (ii, jj) = (i + di, j + dj);
                    if ii >= 0 && jj >= 0 && ii < width as isize && jj < height as isize {
                        out[jj as usize * width + ii as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Smoothing width and band dilation for `smooth_band`, in cells.
pub const BAND_SIGMA: f64 = 1.5;
pub const BAND_DILATION: f64 = 2.0;

/// Gaussian smoothing of the flux confined to the dilated band: each
/// source cell spreads its value over the dilated band with kernel weights
/// renormalized to that band, so the total is conserved. The result is
/// clamped at zero.
pub fn smooth_band(flux: &ScalarField, band: &[bool], sigma: f64, dilation: f64) -> ScalarField {
    let g = flux.grid;
    let region = dilate(band, g.width, g.height, dilation);
    let indicator: Vec<f64> = region.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let reach = blur(&indicator, g.width, g.height, sigma, Border::Zero);
    let scaled: Vec<f64> = flux
        .values
        .iter()
        .zip(&reach)
        .map(|(&w, &n)| if n > 0.0 { w / n } else { 0.0 })
        .collect();
    let spread = blur(&scaled, g.width, g.height, sigma, Border::Zero);
    ScalarField::from_values(
        g,
        spread
            .iter()
            .zip(&region)
            .map(|(&v, &inside)| if inside { v.max(0.0) } else { 0.0 })
            .collect(),
    )
}
