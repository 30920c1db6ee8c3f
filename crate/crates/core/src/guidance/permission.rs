//! Feature prototypes, the permission field and the gated expansion drive.

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fields::ScalarField;

use super::features::FeatureField;

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Interior feature prototypes, refreshed by exponential moving average.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeSet {
    vectors: Vec<Vec<f64>>,
    count: usize,
    ema: f64,
    threshold: f64,
}

/// What happened during a prototype refresh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrototypeUpdate {
    pub qualifying_cells: usize,
    /// Fewer than `count` cells qualified; sampled with replacement.
    pub with_replacement: bool,
    /// No cell qualified; the set was left unchanged.
    pub skipped: bool,
}

impl PrototypeSet {
    pub fn new(count: usize, ema: f64, threshold: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("prototype count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&ema) {
            return Err(Error::Config(format!("EMA rate {ema} outside [0, 1]")));
        }
        Ok(Self {
            vectors: Vec::new(),
            count,
            ema,
            threshold,
        })
    }

    pub fn is_initialized(&self) -> bool {
        !self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Samples `count` cells with occupancy above the threshold and blends
    /// their normalized features into the prototypes. The first call
    /// adopts the samples directly. `features` must live on the
    /// occupancy grid.
    pub fn update<R: Rng>(
        &mut self,
        features: &FeatureField,
        occupancy: &ScalarField,
        rng: &mut R,
    ) -> PrototypeUpdate {
        debug_assert_eq!(features.width() * features.height(), occupancy.values.len());
        let qualifying: Vec<usize> = occupancy
            .values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > self.threshold)
            .map(|(k, _)| k)
            .collect();
        let mut report = PrototypeUpdate {
            qualifying_cells: qualifying.len(),
            ..Default::default()
        };
        if qualifying.is_empty() {
            report.skipped = true;
            return report;
        }
        let picks: Vec<usize> = if qualifying.len() >= self.count {
            index::sample(rng, qualifying.len(), self.count)
                .into_iter()
                .map(|k| qualifying[k])
                .collect()
        } else {
            report.with_replacement = true;
            (0..self.count)
                .map(|_| qualifying[rng.random_range(0..qualifying.len())])
                .collect()
        };
        let samples: Vec<Vec<f64>> = picks
            .into_iter()
            .map(|cell| normalize(features.vector_at(cell)))
            .collect();
        if self.vectors.is_empty() {
            self.vectors = samples;
        } else {
            let eta = self.ema;
            for (proto, sample) in self.vectors.iter_mut().zip(samples) {
                let blended = proto
                    .iter()
                    .zip(&sample)
                    .map(|(p, s)| (1.0 - eta) * p + eta * s)
                    .collect();
                *proto = normalize(blended);
            }
        }
        report
    }
}

/// Soft nearest-prototype score `τ·log Σ_k exp(cos(f, f*_k)/τ)`.
pub fn prototype_score(feature: &[f64], prototypes: &[Vec<f64>], tau: f64) -> f64 {
    let cosines: Vec<f64> = prototypes.iter().map(|p| cosine(feature, p)).collect();
    let m = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = cosines.iter().map(|c| ((c - m) / tau).exp()).sum();
    m + tau * sum.ln()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Permission `π = sigmoid((score − median)/T)`, with the median taken over
/// shape interiors (`s > 0.5`). An empty interior yields a constant field
/// at `floor`.
pub fn permission_field(
    features: &FeatureField,
    prototypes: &PrototypeSet,
    occupancy: &ScalarField,
    tau: f64,
    temperature: f64,
    floor: f64,
) -> ScalarField {
    let grid = occupancy.grid;
    if !prototypes.is_initialized() {
        warn!("permission requested before prototypes were initialized; using floor");
        return ScalarField::filled(grid, floor);
    }
    let scores: Vec<f64> = (0..grid.len())
        .map(|cell| prototype_score(&features.vector_at(cell), prototypes.vectors(), tau))
        .collect();
    let interior: Vec<f64> = scores
        .iter()
        .zip(&occupancy.values)
        .filter(|(_, &s)| s > 0.5)
        .map(|(&sc, _)| sc)
        .collect();
    if interior.is_empty() {
        warn!("permission field has an empty interior mask; using floor");
        return ScalarField::filled(grid, floor);
    }
    let med = median(interior);
    ScalarField::from_values(
        grid,
        scores.iter().map(|&sc| sigmoid((sc - med) / temperature)).collect(),
    )
}

/// `w_drive = w_band·(ε + (1 − ε)·π)`.
pub fn gated_drive(band: &ScalarField, permission: &ScalarField, epsilon: f64) -> Result<ScalarField> {
    if band.grid != permission.grid {
        return Err(Error::GridMismatch);
    }
    Ok(ScalarField::from_values(
        band.grid,
        band.values
            .iter()
            .zip(&permission.values)
            .map(|(&w, &p)| w * (epsilon + (1.0 - epsilon) * p))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::guidance::features::FeatureSource;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn features(grid: Grid, channels: usize, f: impl Fn(usize, usize) -> f64) -> FeatureField {
        let n = grid.len();
        let values = (0..channels).flat_map(|c| (0..n).map(move |k| (c, k))).map(|(c, k)| f(c, k)).collect();
        FeatureField::new(channels, grid.height, grid.width, values, FeatureSource::Synthetic).unwrap()
    }

    fn blob(grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |i, j| if (3..9).contains(&i) && (3..9).contains(&j) { 1.0 } else { 0.0 })
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn single_prototype_score_is_cosine() {
        let p = vec![vec![0.6, 0.8]];
        assert!((prototype_score(&[0.6, 0.8], &p, 0.1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_identical_prototypes() {
        let p = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let s = prototype_score(&[2.0, 0.0], &p, 0.1);
        assert!((s - (1.0 + 0.1 * 2f64.ln())).abs() < 1e-12);
        assert!((s - 1.0693).abs() < 1e-4);
    }

    #[test]
    fn ema_zero_keeps_prototypes() {
        let grid = Grid::unit(12, 12);
        let f = features(grid, 3, |c, k| ((c + 1) * (k % 7)) as f64 - 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = PrototypeSet::new(4, 0.0, 0.9).unwrap();
        set.update(&f, &blob(grid), &mut rng);
        let before = set.clone();
        set.update(&f, &blob(grid), &mut rng);
        for (a, b) in set.vectors().iter().zip(before.vectors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ema_one_adopts_fresh_samples() {
        let grid = Grid::unit(12, 12);
        let f = features(grid, 3, |c, k| ((c + 1) * (k % 7)) as f64 - 2.0);
        let mut set = PrototypeSet::new(4, 1.0, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        set.update(&f, &blob(grid), &mut rng);
        // Replay the second draw with a cloned generator.
        let mut probe_rng = rng.clone();
        let mut fresh = PrototypeSet::new(4, 1.0, 0.9).unwrap();
        fresh.update(&f, &blob(grid), &mut probe_rng);
        set.update(&f, &blob(grid), &mut rng);
        for (a, b) in set.vectors().iter().zip(fresh.vectors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_features_give_equal_prototypes() {
        let grid = Grid::unit(12, 12);
        let f = features(grid, 2, |c, _| if c == 0 { 3.0 } else { 4.0 });
        let mut set = PrototypeSet::new(5, 0.1, 0.9).unwrap();
        set.update(&f, &blob(grid), &mut ChaCha8Rng::seed_from_u64(9));
        for p in set.vectors() {
            assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_interior_samples_with_replacement() {
        let grid = Grid::unit(8, 8);
        let f = features(grid, 1, |_, k| k as f64 + 1.0);
        let occ = ScalarField::from_fn(grid, |i, j| if i == 2 && j == 2 { 1.0 } else { 0.0 });
        let mut set = PrototypeSet::new(32, 0.1, 0.9).unwrap();
        let r = set.update(&f, &occ, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(r.with_replacement && !r.skipped);
        assert_eq!(set.vectors().len(), 32);
        let empty = set.update(&f, &ScalarField::zeros(grid), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(empty.skipped);
    }

    #[test]
    fn median_cell_gets_half_permission() {
        let grid = Grid::unit(9, 9);
        let f = features(grid, 2, |c, k| if c == 0 { 1.0 } else { (k % 9) as f64 * 0.3 });
        let occ = blob(grid);
        let mut set = PrototypeSet::new(8, 0.1, 0.9).unwrap();
        set.update(&f, &occ, &mut ChaCha8Rng::seed_from_u64(4));
        let pi = permission_field(&f, &set, &occ, 0.1, 0.2, 0.05);
        assert!(pi.values.iter().all(|&p| p > 0.0 && p < 1.0));
        // The interior median of π sits at one half.
        let mut inside: Vec<f64> = pi
            .values
            .iter()
            .zip(&occ.values)
            .filter(|(_, &s)| s > 0.5)
            .map(|(&p, _)| p)
            .collect();
        inside.sort_by(f64::total_cmp);
        let n = inside.len();
        let med = 0.5 * (inside[n / 2 - 1] + inside[n / 2]);
        assert!((med - 0.5).abs() < 0.02);
    }

    #[test]
    fn empty_interior_falls_back_to_floor() {
        let grid = Grid::unit(8, 8);
        let f = features(grid, 1, |_, k| k as f64);
        let mut set = PrototypeSet::new(2, 0.1, 0.9).unwrap();
        set.update(&f, &ScalarField::filled(grid, 1.0), &mut ChaCha8Rng::seed_from_u64(0));
        let pi = permission_field(&f, &set, &ScalarField::zeros(grid), 0.1, 0.2, 0.05);
        assert!(pi.values.iter().all(|&p| p == 0.05));
    }

    #[test]
    fn drive_endpoints() {
        let grid = Grid::unit(3, 1);
        let band = ScalarField::from_values(grid, vec![2.0, 2.0, 0.0]);
        let pi = ScalarField::from_values(grid, vec![1.0, 0.0, 0.7]);
        let d = gated_drive(&band, &pi, 0.05).unwrap();
        assert_eq!(d.values[0], 2.0);
        assert!((d.values[1] - 0.1).abs() < 1e-15);
        assert_eq!(d.values[2], 0.0);
    }

    proptest! {
        #[test]
        fn drive_is_sandwiched(w in -10.0f64..10.0, p in 0.0f64..1.0) {
            let grid = Grid::unit(1, 1);
            let d = gated_drive(
                &ScalarField::from_values(grid, vec![w]),
                &ScalarField::from_values(grid, vec![p]),
                0.05,
            ).unwrap().values[0];
            prop_assert!(d * w >= 0.0);
            prop_assert!(d.abs() <= w.abs() + 1e-15);
            prop_assert!(d.abs() >= 0.05 * w.abs() - 1e-15);
        }

        #[test]
        fn permission_increases_with_score(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(sigmoid(lo / 0.2) < sigmoid(hi / 0.2));
        }
    }
}
