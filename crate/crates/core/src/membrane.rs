//! Phase-field membrane and its ADMM update.

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::transport::{conjugate_gradient, AnisotropicOperator, CgConfig, SolveReport};

/// Limits on the membrane's cell-sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaBounds {
    pub min: f64,
    pub max: f64,
}

/// Cells of slack allowed when matching a violated area bound.
pub const AREA_TOLERANCE: f64 = 0.5;

impl AreaBounds {
    pub const MARGIN: f64 = 1.1;

    /// `A_min = 1.1 × shape area`, `A_max = 2·A_min`, both in cells. When
    /// `A_max` would exceed the grid it is capped at the cell count.
    pub fn from_shape_area(shape_area_cells: f64, cell_count: usize) -> Result<Self> {
        let min = Self::MARGIN * shape_area_cells;
        let n = cell_count as f64;
        if !(min > 0.0) || min >= n {
            return Err(Error::Config(format!(
                "membrane area floor {min:.1} does not fit a grid of {cell_count} cells"
            )));
        }
        let max = 2.0 * min;
        if max > n {
            log::warn!("membrane area cap {max:.1} exceeds the grid; capped at {cell_count} cells");
        }
        Ok(Self { min, max: max.min(n) })
    }

    pub fn contains(&self, area: f64) -> bool {
        area >= self.min && area <= self.max + AREA_TOLERANCE
    }
}

/// Soft indicator of `{s > 0.1}` dilated by a disk of `radius` cells, with
/// a one-cell antialiased rim, raised to at least `s`.
pub fn init_membrane(occupancy: &ScalarField, radius: f64) -> Result<ScalarField> {
    let g = occupancy.grid;
    let (w, h) = (g.width as isize, g.height as isize);
    let seeds: Vec<(isize, isize)> = (0..g.height)
        .flat_map(|j| (0..g.width).map(move |i| (i, j)))
        .filter(|&(i, j)| occupancy.at(i, j) > 0.1)
        .map(|(i, j)| (i as isize, j as isize))
        .collect();
    if seeds.is_empty() {
        return Err(Error::EmptyOccupancy);
    }
    let reach = (radius + 0.5).ceil() as isize;
    let mut dist2 = vec![f64::INFINITY; g.len()];
    for &(si, sj) in &seeds {
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (i, j) = (si + di, sj + dj);
                if i < 0 || j < 0 || i >= w || j >= h {
                    continue;
                }
                let k = (j * w + i) as usize;
                let d2 = (di * di + dj * dj) as f64;
                if d2 < dist2[k] {
                    dist2[k] = d2;
                }
            }
        }
    }
    Ok(ScalarField::from_values(
        g,
        dist2
            .iter()
            .zip(&occupancy.values)
            .map(|(&d2, &s)| (radius + 0.5 - d2.sqrt()).clamp(0.0, 1.0).max(s))
            .collect(),
    ))
}

/// ADMM iterates for the membrane.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub u: ScalarField,
    /// Feasible iterate; this is the published membrane.
    pub z: ScalarField,
    /// Scaled dual.
    pub y: ScalarField,
    pub rho: f64,
}

impl AdmmState {
    pub fn new(z: ScalarField, rho: f64) -> Self {
        Self {
            u: z.clone(),
            y: ScalarField::zeros(z.grid),
            z,
            rho,
        }
    }

    pub fn grid(&self) -> Grid {
        self.z.grid
    }

    pub fn membrane(&self) -> &ScalarField {
        &self.z
    }
}

/// Solves `(ρ − ∇·D∇)u = ρ(z − y) + w_drive`. `op` must carry `α = ρ`.
pub fn admm_u_step(
    state: &AdmmState,
    op: &AnisotropicOperator,
    drive: &ScalarField,
    cg: &CgConfig,
) -> (ScalarField, SolveReport) {
    let rho = state.rho;
    let rhs: Vec<f64> = state
        .z
        .values
        .iter()
        .zip(&state.y.values)
        .zip(&drive.values)
        .map(|((z, y), w)| rho * (z - y) + w)
        .collect();
    let (u, report) = conjugate_gradient(op, &rhs, Some(&state.u.values), cg);
    (ScalarField::from_values(state.grid(), u), report)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectionReport {
    /// Uniform shift applied before the final clamp.
    pub shift: f64,
    /// The constraint set is empty; the result is only box-clamped.
    pub infeasible: bool,
}

fn clamped_sum(v: &[f64], s: &[f64], shift: f64) -> f64 {
    v.iter().zip(s).map(|(&v, &s)| (v + shift).clamp(s, 1.0)).sum()
}

/// Projects `v` onto `{z : s ≤ z ≤ 1, A_min ≤ Σz ≤ A_max}` by clamping and,
/// when the area is out of bounds, a uniform shift found by bisection.
pub fn admm_z_step(v: &ScalarField, occupancy: &ScalarField, bounds: &AreaBounds) -> (ScalarField, ProjectionReport) {
    let s = &occupancy.values;
    let clamp_with = |shift: f64| {
        ScalarField::from_values(
            v.grid,
            v.values
                .iter()
                .zip(s)
                .map(|(&v, &s)| (v + shift).clamp(s, 1.0))
                .collect(),
        )
    };
    let base = clamped_sum(&v.values, s, 0.0);
    let floor: f64 = s.iter().map(|x| x.min(1.0)).sum();
    let n = v.values.len() as f64;
    let shrink = base > bounds.max;
    let target = if shrink {
        if floor > bounds.max {
            return (clamp_with(0.0), ProjectionReport { shift: 0.0, infeasible: true });
        }
        bounds.max
    } else if base < bounds.min {
        if bounds.min > n {
            return (clamp_with(0.0), ProjectionReport { shift: 0.0, infeasible: true });
        }
        bounds.min
    } else {
        return (clamp_with(0.0), ProjectionReport::default());
    };

    // The clamped sum is non-decreasing in the shift. Bracket the target,
    // then bisect until the bracket stops shrinking, keeping the end that
    // satisfies the bound.
    let f = |shift: f64| clamped_sum(&v.values, s, shift);
    let (mut lo, mut hi) = if shrink { (-1.0, 0.0) } else { (0.0, 1.0) };
    while f(lo) > target {
        lo *= 2.0;
    }
    while f(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let shift = if shrink { lo } else { hi };
    (clamp_with(shift), ProjectionReport { shift, infeasible: false })
}

/// `y ← y + (u − z)`.
pub fn admm_y_step(y: &ScalarField, u: &ScalarField, z: &ScalarField) -> ScalarField {
    ScalarField::from_values(
        y.grid,
        y.values
            .iter()
            .zip(&u.values)
            .zip(&z.values)
            .map(|((y, u), z)| y + u - z)
            .collect(),
    )
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MembraneReport {
    /// `‖u − z‖₂` after each inner cycle.
    pub primal_residuals: Vec<f64>,
    pub solver_failures: usize,
    pub infeasible: bool,
}

/// Runs `inner` ADMM cycles. On return `u` is set to the published,
/// feasible `z`.
pub fn membrane_update(
    state: &mut AdmmState,
    op: &AnisotropicOperator,
    drive: &ScalarField,
    occupancy: &ScalarField,
    bounds: &AreaBounds,
    inner: usize,
    cg: &CgConfig,
) -> Result<MembraneReport> {
    if drive.grid != state.grid() || occupancy.grid != state.grid() || *op.grid() != state.grid() {
        return Err(Error::GridMismatch);
    }
    let mut report = MembraneReport::default();
    for _ in 0..inner {
        let (u, solve) = admm_u_step(state, op, drive, cg);
        if !solve.converged {
            report.solver_failures += 1;
        }
        let shifted = ScalarField::from_values(
            u.grid,
            u.values.iter().zip(&state.y.values).map(|(u, y)| u + y).collect(),
        );
        let (z, proj) = admm_z_step(&shifted, occupancy, bounds);
        report.infeasible |= proj.infeasible;
        state.y = admm_y_step(&state.y, &u, &z);
        report.primal_residuals.push(
            u.values
                .iter()
                .zip(&z.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        );
        state.u = u;
        state.z = z;
    }
    state.u = state.z.clone();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::TensorField;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_occupancy(grid: Grid, lo: usize, hi: usize) -> ScalarField {
        ScalarField::from_fn(grid, |i, j| {
            if (lo..hi).contains(&i) && (lo..hi).contains(&j) {
                1.0
            } else {
                0.0
            }
        })
    }

    fn identity_op(grid: Grid, rho: f64) -> AnisotropicOperator {
        AnisotropicOperator::new(grid, &TensorField::identity(grid.width, grid.height), rho).unwrap()
    }

    #[test]
    fn init_covers_square_plus_margin() {
        let grid = Grid::unit(40, 40);
        let s = square_occupancy(grid, 15, 25);
        let u = init_membrane(&s, 5.0).unwrap();
        for j in 0..40 {
            for i in 0..40 {
                // Brute-force distance to the square's cells.
                let mut d = f64::INFINITY;
                for sj in 15..25 {
                    for si in 15..25 {
                        let dd = (((i as f64 - si as f64).powi(2)) + ((j as f64 - sj as f64).powi(2))).sqrt();
                        d = d.min(dd);
                    }
                }
                let v = u.at(i, j);
                assert!(v >= s.at(i, j));
                if d <= 4.5 {
                    assert_eq!(v, 1.0);
                } else if d >= 5.5 {
                    assert_eq!(v, 0.0);
                } else {
                    assert!((v - (5.5 - d)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn init_rejects_empty_grid() {
        assert!(matches!(
            init_membrane(&ScalarField::zeros(Grid::unit(8, 8)), 5.0),
            Err(Error::EmptyOccupancy)
        ));
    }

    #[test]
    fn u_step_keeps_constants() {
        let grid = Grid::unit(16, 16);
        let state = AdmmState::new(ScalarField::filled(grid, 0.7), 1.0);
        let (u, r) = admm_u_step(&state, &identity_op(grid, 1.0), &ScalarField::zeros(grid), &CgConfig::default());
        assert!(r.converged);
        assert!(u.values.iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn u_step_matches_dense_screened_response() {
        let grid = Grid::unit(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = TensorField {
            width: 32,
            height: 32,
            values: (0..1024)
                .map(|_| {
                    let a = rng.random_range(0.0..3.0);
                    crate::guidance::axis_tensor(crate::geometry::Vec2::from_angle(a), rng.random_range(0.0..1.0), 15.0)
                })
                .collect(),
        };
        let op = AnisotropicOperator::new(grid, &t, 1.0).unwrap();
        let mut drive = ScalarField::zeros(grid);
        drive.values[grid.index(16, 16)] = 1.0;
        let mut state = AdmmState::new(ScalarField::zeros(grid), 1.0);
        state.u = ScalarField::zeros(grid);
        let cfg = CgConfig {
            tolerance: 1e-10,
            ..Default::default()
        };
        let (u, _) = admm_u_step(&state, &op, &drive, &cfg);
        let n = grid.len();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            op.apply(&e, &mut col);
            e[k] = 0.0;
            m.set_column(k, &DVector::from_column_slice(&col));
        }
        let exact = m.cholesky().unwrap().solve(&DVector::from_vec(drive.values.clone()));
        let scale = exact.amax();
        for k in 0..n {
            assert!((u.values[k] - exact[k]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn z_step_identity_inside_set() {
        let grid = Grid::unit(8, 8);
        let s = square_occupancy(grid, 2, 4);
        let v = ScalarField::from_fn(grid, |i, j| s.at(i, j).max(0.5));
        let bounds = AreaBounds { min: 10.0, max: 60.0 };
        let (z, r) = admm_z_step(&v, &s, &bounds);
        assert_eq!(z, v);
        assert_eq!(r, ProjectionReport::default());
    }

    #[test]
    fn z_step_clamps_box() {
        let grid = Grid::unit(8, 8);
        let v = ScalarField::filled(grid, 1.4);
        let bounds = AreaBounds { min: 1.0, max: 64.0 };
        let (z, _) = admm_z_step(&v, &ScalarField::zeros(grid), &bounds);
        assert!(z.values.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn z_step_hits_area_cap_like_exhaustive_scan() {
        let grid = Grid::unit(16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a_min = 40.0;
        let bounds = AreaBounds { min: a_min, max: 2.0 * a_min };
        // Slack cells summing to 2.6·A_min before projection.
        let raw: Vec<f64> = (0..256).map(|_| rng.random_range(0.1..0.7)).collect();
        let scale = 2.6 * a_min / raw.iter().sum::<f64>();
        let v = ScalarField::from_values(grid, raw.iter().map(|x| x * scale).collect());
        let s = ScalarField::zeros(grid);
        let (z, r) = admm_z_step(&v, &s, &bounds);
        assert!(!r.infeasible);
        assert!((z.sum() - bounds.max).abs() <= AREA_TOLERANCE);
        // Exhaustive scan over λ ∈ [−1, 1].
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=200_000 {
            let lambda = -1.0 + k as f64 * 1e-5;
            let sum = clamped_sum(&v.values, &s.values, lambda);
            if (sum - bounds.max).abs() < best.0 {
                best = ((sum - bounds.max).abs(), lambda);
            }
        }
        assert!((r.shift - best.1).abs() < 1e-3);
    }

    #[test]
    fn z_step_grows_to_floor() {
        let grid = Grid::unit(16, 16);
        let s = square_occupancy(grid, 4, 8);
        let bounds = AreaBounds { min: 40.0, max: 80.0 };
        let (z, r) = admm_z_step(&ScalarField::zeros(grid), &s, &bounds);
        assert!(r.shift > 0.0);
        assert!(z.sum() >= bounds.min && z.sum() <= bounds.min + AREA_TOLERANCE);
    }

    #[test]
    fn z_step_flags_infeasible() {
        let grid = Grid::unit(8, 8);
        let s = ScalarField::filled(grid, 1.0);
        let (z, r) = admm_z_step(&s, &s, &AreaBounds { min: 10.0, max: 20.0 });
        assert!(r.infeasible);
        assert_eq!(z, s);
    }

    #[test]
    fn y_step_formula() {
        let grid = Grid::unit(4, 4);
        let y = ScalarField::zeros(grid);
        let u = ScalarField::filled(grid, 0.3);
        let z = ScalarField::filled(grid, 0.1);
        let y1 = admm_y_step(&y, &u, &u);
        assert_eq!(y1, y);
        let y1 = admm_y_step(&y, &u, &z);
        let y2 = admm_y_step(&y1, &u, &z);
        assert!(y1.values.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        assert!(y2.values.iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn zero_drive_constant_start_is_fixed() {
        let grid = Grid::unit(24, 24);
        let s = square_occupancy(grid, 8, 14);
        let bounds = AreaBounds::from_shape_area(36.0, grid.len()).unwrap();
        let start = ScalarField::from_fn(grid, |i, j| s.at(i, j).max(0.0));
        let constant = ScalarField::filled(grid, 1.0);
        let _ = start;
        let mut state = AdmmState::new(constant.clone(), 1.0);
        let big = AreaBounds { min: bounds.min, max: grid.len() as f64 };
        membrane_update(
            &mut state,
            &identity_op(grid, 1.0),
            &ScalarField::zeros(grid),
            &s,
            &big,
            10,
            &CgConfig::default(),
        )
        .unwrap();
        for (a, b) in state.membrane().values.iter().zip(&constant.values) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn positive_drive_grows_area() {
        let grid = Grid::unit(32, 32);
        let s = square_occupancy(grid, 12, 20);
        let bounds = AreaBounds::from_shape_area(64.0, grid.len()).unwrap();
        let init = init_membrane(&s, 5.0).unwrap();
        let (init, _) = admm_z_step(&init, &s, &bounds);
        let mut state = AdmmState::new(init, 1.0);
        let drive = ScalarField::filled(grid, 0.2);
        let op = identity_op(grid, 1.0);
        let mut last = state.membrane().sum();
        for _ in 0..5 {
            membrane_update(&mut state, &op, &drive, &s, &bounds, 10, &CgConfig::default()).unwrap();
            let area = state.membrane().sum();
            assert!(area >= last - 1e-6 || area >= bounds.max - AREA_TOLERANCE);
            last = area;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn published_membrane_is_feasible(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::unit(20, 20);
            let lo = rng.random_range(2..8);
            let hi = lo + rng.random_range(3..8);
            let s = square_occupancy(grid, lo, hi);
            let bounds = AreaBounds::from_shape_area(s.sum(), grid.len()).unwrap();
            let drive = ScalarField::from_fn(grid, |_, _| rng.random_range(0.0..0.5));
            let init = init_membrane(&s, 5.0).unwrap();
            let (init, _) = admm_z_step(&init, &s, &bounds);
            let mut state = AdmmState::new(init, 1.0);
            let report = membrane_update(&mut state, &identity_op(grid, 1.0), &drive, &s, &bounds, 10, &CgConfig::default()).unwrap();
            let u = state.membrane();
            prop_assert!(u.values.iter().zip(&s.values).all(|(&u, &s)| (0.0..=1.0).contains(&u) && u >= s - 1e-6));
            prop_assert!(bounds.contains(u.sum()));
            prop_assert_eq!(report.primal_residuals.len(), 10);
        }

        #[test]
        fn nonnegative_inputs_keep_u_nonnegative(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::unit(16, 16);
            let z = ScalarField::from_fn(grid, |_, _| rng.random_range(0.0..1.0));
            let drive = ScalarField::from_fn(grid, |_, _| rng.random_range(0.0..0.3));
            let t = TensorField {
                width: 16,
                height: 16,
                values: (0..256).map(|_| crate::guidance::axis_tensor(
                    crate::geometry::Vec2::from_angle(rng.random_range(0.0..3.2)),
                    rng.random_range(0.0..1.0),
                    15.0,
                )).collect(),
            };
            let op = AnisotropicOperator::new(grid, &t, 1.0).unwrap();
            let state = AdmmState::new(z, 1.0);
            let (u, _) = admm_u_step(&state, &op, &drive, &CgConfig::default());
            prop_assert!(u.values.iter().all(|&v| v >= -1e-6));
        }
    }
}
