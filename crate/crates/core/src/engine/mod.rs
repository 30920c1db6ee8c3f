//! The outer loop: membrane evolution alternating with pose projection.

mod metrics;
mod scene_io;
mod snapshot;

pub use metrics::{IterationMetrics, RunMetrics, CSV_HEADER};
pub use scene_io::{
    load_scene, parse_scene_json, parse_scene_svg, save_scene, scene_from_file, scene_to_file, DomainSpec, PoseSpec,
    SceneFile, ShapeSpec,
};
pub use snapshot::{export_snapshot, membrane_contour, render_snapshot, shape_color, Contour};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fields::{overlap_percentage, pressure_field, rasterize_occupancy, union_occupancy, Grid, ScalarField};
use crate::geometry::{mtv_separate, MtvConfig, Scene};
use crate::guidance::{gated_drive, GuidanceConfig, GuidanceProvider, GuidanceSpec, GuidanceState, TensorField};
use crate::membrane::{admm_z_step, init_membrane, membrane_update, AdmmState, AreaBounds};
use crate::projection::{project_poses, ProjectionConfig};
use crate::transport::{
    interface_flux, smooth_band, solve_transport, AnisotropicOperator, CgConfig, BAND_DILATION, BAND_HALF_WIDTH,
    BAND_SIGMA,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Semantic,
    Isotropic,
    MtvOnly,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" => Ok(Mode::Semantic),
            "isotropic" => Ok(Mode::Isotropic),
            "mtv" | "mtv-only" => Ok(Mode::MtvOnly),
            _ => Err(Error::Config(format!("unknown mode `{s}`; expected semantic, isotropic or mtv"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Mode::Semantic => "semantic",
            Mode::Isotropic => "isotropic",
            Mode::MtvOnly => "mtv",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase2Config {
    pub mode: Mode,
    /// Stop once the overlap percentage is at or below this.
    pub tau_stop: f64,
    pub max_iterations: usize,
    pub grid_resolution: usize,
    /// Occupancy antialiasing width, cells.
    pub aa_cells: f64,
    /// Screening of the transport equation.
    pub alpha: f64,
    pub cg: CgConfig,
    pub band_half_width: f64,
    pub band_sigma: f64,
    pub band_dilation: f64,
    pub rho: f64,
    pub admm_inner: usize,
    /// Initial membrane dilation, cells.
    pub init_radius: f64,
    pub guidance: GuidanceConfig,
    pub guidance_spec: Option<GuidanceSpec>,
    pub projection: ProjectionConfig,
    pub mtv: MtvConfig,
    pub seed: u64,
    /// Fill the `ms` metrics column; off keeps output reproducible.
    pub record_timing: bool,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            mode: Mode::Semantic,
            tau_stop: 0.5,
            max_iterations: 500,
            grid_resolution: 128,
            aa_cells: 1.0,
            alpha: 0.01,
            cg: CgConfig::default(),
            band_half_width: BAND_HALF_WIDTH,
            band_sigma: BAND_SIGMA,
            band_dilation: BAND_DILATION,
            rho: 1.0,
            admm_inner: 10,
            init_radius: 5.0,
            guidance: GuidanceConfig::default(),
            guidance_spec: None,
            projection: ProjectionConfig::default(),
            mtv: MtvConfig::default(),
            seed: 0,
            record_timing: false,
        }
    }
}

impl Phase2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_stop > 0.0) {
            return Err(Error::Config("τ_stop must be positive".into()));
        }
        if self.grid_resolution < 8 {
            return Err(Error::Config("grid resolution must be at least 8".into()));
        }
        if !(self.alpha > 0.0 && self.rho > 0.0 && self.aa_cells > 0.0 && self.cg.tolerance > 0.0) {
            return Err(Error::Config("α, ρ, antialiasing width and CG tolerance must be positive".into()));
        }
        self.guidance.validate()?;
        self.projection.validate()
    }
}

/// State visible to observers after each outer iteration.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub scene: &'a Scene,
    /// Published membrane, absent in MTV mode.
    pub membrane: Option<&'a ScalarField>,
    /// Union occupancy the membrane was projected against.
    pub occupancy: Option<&'a ScalarField>,
    pub bounds: Option<AreaBounds>,
    pub metrics: &'a IterationMetrics,
}

#[derive(Clone, Debug)]
pub struct Phase2Result {
    pub scene: Scene,
    pub membrane: Option<ScalarField>,
    pub metrics: RunMetrics,
    /// Final overlap is at or below `τ_stop`.
    pub success: bool,
    pub iterations: usize,
}

fn rasterize_all(scene: &Scene, grid: &Grid, aa: f64) -> Vec<ScalarField> {
    scene
        .shapes
        .iter()
        .zip(&scene.poses)
        .map(|(s, p)| rasterize_occupancy(s, p, grid, aa).field)
        .collect()
}

/// A run in progress; advance it with [`Phase2Run::step`].
pub struct Phase2Run {
    config: Phase2Config,
    scene: Scene,
    grid: Grid,
    bounds: Option<AreaBounds>,
    admm: Option<AdmmState>,
    guidance: Option<GuidanceState>,
    occupancies: Vec<ScalarField>,
    phi: Option<ScalarField>,
    metrics: RunMetrics,
    iteration: usize,
    done: bool,
}

impl Phase2Run {
    /// Prepares a run. Semantic mode needs a provider, either passed here
    /// or built from `config.guidance_spec`.
    pub fn new(scene: Scene, config: Phase2Config, provider: Option<Box<dyn GuidanceProvider>>) -> Result<Self> {
        config.validate()?;
        let grid = Grid::covering(&scene.domain, config.grid_resolution);
        let occupancies = rasterize_all(&scene, &grid, config.aa_cells);
        let overlap = overlap_percentage(&occupancies);
        let mut run = Self {
            grid,
            bounds: None,
            admm: None,
            guidance: None,
            occupancies,
            phi: None,
            metrics: RunMetrics {
                initial_overlap_pct: overlap,
                rows: Vec::new(),
            },
            iteration: 0,
            done: overlap <= config.tau_stop || config.max_iterations == 0,
            scene,
            config,
        };
        if run.config.mode == Mode::MtvOnly {
            return Ok(run);
        }
        if run.config.mode == Mode::Semantic {
            let provider = match provider {
                Some(p) => p,
                None => run
                    .config
                    .guidance_spec
                    .as_ref()
                    .ok_or_else(|| Error::Config("semantic mode needs a guidance provider".into()))?
                    .build()?,
            };
            run.guidance = Some(GuidanceState::new(run.config.guidance, provider, run.config.seed)?);
        }
        let cell_area = grid.cell * grid.cell;
        let bounds = AreaBounds::from_shape_area(run.scene.total_area() / cell_area, grid.len())?;
        let union = union_occupancy(&run.occupancies)?;
        let init = init_membrane(&union, run.config.init_radius)?;
        let (init, _) = admm_z_step(&init, &union, &bounds);
        run.admm = Some(AdmmState::new(init, run.config.rho));
        run.bounds = Some(bounds);
        Ok(run)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn membrane(&self) -> Option<&ScalarField> {
        self.admm.as_ref().map(|a| a.membrane())
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn overlap(&self) -> f64 {
        self.metrics.final_overlap()
    }

    /// Runs one outer iteration and reports it to `observer`. Returns
    /// `false` once the run has terminated.
    pub fn step(&mut self, observer: &mut dyn FnMut(&IterationView)) -> Result<bool> {
        if self.done {
            return Ok(false);
        }
        let started = self.config.record_timing.then(Instant::now);
        let iter = self.iteration;
        let mut row = IterationMetrics {
            iter,
            ..Default::default()
        };
        let union = if self.config.mode == Mode::MtvOnly {
            let outcome = mtv_separate(&self.scene, &self.config.mtv);
            self.scene = outcome.scene;
            row.mtv_converged = outcome.converged;
            None
        } else {
            Some(self.membrane_and_poses(&mut row)?)
        };
        self.occupancies = rasterize_all(&self.scene, &self.grid, self.config.aa_cells);
        row.overlap_pct = overlap_percentage(&self.occupancies);
        row.ms = started.map(|t| t.elapsed().as_secs_f64() * 1e3);
        self.iteration += 1;
        self.done = row.overlap_pct <= self.config.tau_stop
            || self.iteration >= self.config.max_iterations
            || self.config.mode == Mode::MtvOnly;
        observer(&IterationView {
            iteration: iter,
            scene: &self.scene,
            membrane: self.admm.as_ref().map(|a| a.membrane()),
            occupancy: union.as_ref(),
            bounds: self.bounds,
            metrics: &row,
        });
        self.metrics.rows.push(row);
        Ok(!self.done)
    }

    fn membrane_and_poses(&mut self, row: &mut IterationMetrics) -> Result<ScalarField> {
        let cfg = &self.config;
        let grid = self.grid;
        let admm = self.admm.as_mut().expect("membrane modes carry ADMM state");
        let bounds = self.bounds.expect("membrane modes carry area bounds");
        let union = union_occupancy(&self.occupancies)?;
        let pressure = pressure_field(&self.occupancies, admm.membrane())?;
        row.pressure_sum = pressure.sum();

        let (tensors, permission) = match self.guidance.as_mut() {
            Some(g) => {
                let out = g.evaluate(self.iteration, &union)?;
                row.prototypes_with_replacement = out.prototype_update.is_some_and(|u| u.with_replacement);
                (out.tensors, out.permission)
            }
            None => (
                TensorField::identity(grid.width, grid.height),
                ScalarField::filled(grid, 1.0),
            ),
        };

        let (phi, report) = solve_transport(&pressure, &tensors, cfg.alpha, &cfg.cg, self.phi.as_ref())?;
        row.transport_converged = report.converged;
        let (flux, band) = interface_flux(&phi, admm.membrane(), cfg.band_half_width)?;
        self.phi = Some(phi);
        let w_band = smooth_band(&flux, &band, cfg.band_sigma, cfg.band_dilation);
        let drive = gated_drive(&w_band, &permission, cfg.guidance.epsilon)?;

        let op = AnisotropicOperator::new(grid, &tensors, admm.rho)?;
        let mrep = membrane_update(admm, &op, &drive, &union, &bounds, cfg.admm_inner, &cfg.cg)?;
        row.membrane_solver_failures = mrep.solver_failures;
        row.membrane_infeasible = mrep.infeasible;
        row.area_u = admm.membrane().sum();

        let anchor = self.scene.poses.clone();
        let (scene, prep) = project_poses(&self.scene, &anchor, admm.membrane(), &cfg.projection)?;
        self.scene = scene;
        row.e_coll = prep.best.collision;
        row.e_cont = prep.best.containment;
        Ok(union)
    }

    /// Runs to termination.
    pub fn run(mut self, observer: &mut dyn FnMut(&IterationView)) -> Result<Phase2Result> {
        while self.step(observer)? {}
        let success = self.overlap() <= self.config.tau_stop;
        Ok(Phase2Result {
            membrane: self.admm.map(|a| a.z),
            iterations: self.iteration,
            metrics: self.metrics,
            scene: self.scene,
            success,
        })
    }
}

/// Runs the outer loop on `scene` with the provider named in the config.
pub fn phase2_run(scene: Scene, config: &Phase2Config) -> Result<Phase2Result> {
    Phase2Run::new(scene, config.clone(), None)?.run(&mut |_| {})
}
