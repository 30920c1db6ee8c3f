//! Semantic guidance: features to diffusion tensors, permission and the
//! gated drive.

mod features;
mod permission;
mod provider;
mod tensor;

pub use features::{
    resample_features, resample_scalar, resample_tensors, standardize_features, structure_tensor, FeatureField,
    FeatureSource, MIN_FEATURE_SIDE,
};
pub use permission::{cosine, gated_drive, permission_field, prototype_score, PrototypeSet, PrototypeUpdate};
pub use provider::{
    ConstantDirection, FileFeatures, GuidanceProvider, GuidanceRequest, GuidanceSample, GuidanceSpec, Silhouette,
    SILHOUETTE_SIDE,
};
pub use tensor::{axis_tensor, diffusion_tensor, eigen_coherence, project_spd, Eigen, Sym2, TensorField};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceConfig {
    /// Structure tensor smoothing, feature cells.
    pub sigma: f64,
    pub beta: f64,
    pub tau: f64,
    pub temperature: f64,
    pub epsilon: f64,
    pub ema: f64,
    pub prototypes: usize,
    pub sample_threshold: f64,
    /// Provider is queried every `refresh_stride` outer iterations.
    pub refresh_stride: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            beta: 15.0,
            tau: 0.1,
            temperature: 0.2,
            epsilon: 0.05,
            ema: 0.1,
            prototypes: 32,
            sample_threshold: 0.9,
            refresh_stride: 1,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma, self.beta, self.tau, self.temperature];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("guidance constants must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("ε = {} outside (0, 1)", self.epsilon)));
        }
        if self.prototypes == 0 || self.refresh_stride == 0 {
            return Err(Error::Config("prototype count and refresh stride must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ema) {
            return Err(Error::Config(format!("EMA rate {} outside [0, 1]", self.ema)));
        }
        Ok(())
    }
}

/// Diffusion tensors and permission on the simulation grid.
#[derive(Clone, Debug)]
pub struct GuidanceOutput {
    pub tensors: TensorField,
    pub permission: ScalarField,
    pub prototype_update: Option<PrototypeUpdate>,
}

enum Cached {
    Features { standardized: FeatureField, tensors: TensorField },
    Direct(TensorField),
}

/// Provider plus the state carried between outer iterations.
pub struct GuidanceState {
    config: GuidanceConfig,
    provider: Box<dyn GuidanceProvider>,
    prototypes: PrototypeSet,
    rng: ChaCha8Rng,
    cached: Option<Cached>,
}

impl GuidanceState {
    pub fn new(config: GuidanceConfig, provider: Box<dyn GuidanceProvider>, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            prototypes: PrototypeSet::new(config.prototypes, config.ema, config.sample_threshold)?,
            config,
            provider,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cached: None,
        })
    }

    pub fn provider_name(&self) -> String {
        self.provider.name()
    }

    pub fn prototypes(&self) -> &PrototypeSet {
        &self.prototypes
    }

    fn refresh(&mut self, iteration: usize, width: usize, height: usize) -> Result<()> {
        let due = self.cached.is_none() || iteration.is_multiple_of(self.config.refresh_stride);
        if !due {
            return Ok(());
        }
        let cfg = self.config;
        self.cached = Some(match self.provider.sample(&GuidanceRequest { iteration })? {
            GuidanceSample::Direct {
                coherent_axis,
                coherence,
            } => Cached::Direct(TensorField::uniform(
                width,
                height,
                axis_tensor(coherent_axis, coherence, cfg.beta),
            )),
            GuidanceSample::Features(f) => {
                let standardized = standardize_features(&f);
                let s = structure_tensor(&standardized, cfg.sigma);
                let native = TensorField {
                    width: s.width,
                    height: s.height,
                    values: s
                        .values
                        .iter()
                        .map(|m| diffusion_tensor(&eigen_coherence(m), cfg.beta))
                        .collect(),
                };
                Cached::Features {
                    standardized: resample_features(&standardized, width, height),
                    tensors: resample_tensors(&native, width, height, cfg.beta),
                }
            }
        });
        Ok(())
    }

    /// Tensors and permission for this outer iteration, given the union
    /// occupancy on the simulation grid.
    pub fn evaluate(&mut self, iteration: usize, occupancy: &ScalarField) -> Result<GuidanceOutput> {
        let grid = occupancy.grid;
        self.refresh(iteration, grid.width, grid.height)?;
        let cfg = self.config;
        match self.cached.as_ref().expect("refreshed above") {
            Cached::Direct(t) => Ok(GuidanceOutput {
                tensors: t.clone(),
                permission: ScalarField::filled(grid, 1.0),
                prototype_update: None,
            }),
            Cached::Features { standardized, tensors } => {
                let report = self.prototypes.update(standardized, occupancy, &mut self.rng);
                if report.with_replacement {
                    log::debug!(
                        "only {} cells qualified for prototype sampling; sampled with replacement",
                        report.qualifying_cells
                    );
                }
                let permission = permission_field(
                    standardized,
                    &self.prototypes,
                    occupancy,
                    cfg.tau,
                    cfg.temperature,
                    cfg.epsilon,
                );
                Ok(GuidanceOutput {
                    tensors: tensors.clone(),
                    permission,
                    prototype_update: Some(report),
                })
            }
        }
    }
}
