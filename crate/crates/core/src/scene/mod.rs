//! Scene files.
//!
//! A scene is a TOML document; every section and key is optional except the
//! particle sources. Omitted values take the defaults below.
//!
//! ```toml
//! [domain]
//! origin = [0.0, 0.0, 0.0]
//! size = 1.0                  # edge of the cubic domain, m
//! grid_resolution = 25        # cells per axis
//!
//! [simulation]
//! dt = 3e-4
//! gravity = [0.0, 0.0, -9.8]
//! frames = 150                # sampled frames after the initial one
//! sample_every = 10           # steps between frames
//! # steps = 1500              # defaults to frames * sample_every
//! seed = 0                    # particle jitter
//!
//! [[materials]]
//! elastic = "fixed_corotated" # fixed_corotated | neo_hookean | stvk
//! plastic = "identity"        # identity | drucker_prager | von_mises | fluid
//! youngs_modulus = 1e5
//! poisson_ratio = 0.3
//! friction_angle = 30.0       # degrees, drucker_prager
//! yield_stress = 1e3          # Pa, von_mises
//! learnable = false           # estimate may reassign this block
//!
//! [[sources]]
//! shape = { kind = "box", min = [0.4, 0.4, 0.4], max = [0.6, 0.6, 0.6] }
//! # shape = { kind = "sphere", center = [0.5, 0.5, 0.5], radius = 0.1 }
//! # points = { path = "cloud.ply", center = [0.5, 0.5, 0.5], extent = 0.3, opacity_threshold = 0.0 }
//! density = 1000.0
//! velocity = [0.0, 0.0, 0.0]
//! material = 0                # index into [[materials]]
//!
//! [estimation]               # used by `estimate` only
//! stages = 10
//! frames_per_stage = 15
//! internal = 30               # iterations per stage
//! outer = 5                   # passes over all stages
//! learning_rate = 5e-5
//! temperature = 1.0           # straight-through softmax temperature
//! neighborhood_size = 32
//! prior_margin_steps = 20.0   # head start of the declared categories, in learning-rate steps
//!
//! [[boundary_conditions]]
//! kind = "ground_plane_sticky" # or ground_plane_slip
//! point = [0.0, 0.0, 0.1]
//! normal = [0.0, 0.0, 1.0]
//!
//! [[boundary_conditions]]
//! kind = "domain_walls"
//! thickness = 3
//!
//! [[boundary_conditions]]
//! kind = "impulse"             # or constant_force with `force` in N
//! region_min = [0.0, 0.0, 0.0]
//! region_max = [1.0, 1.0, 1.0]
//! start = 0.0
//! end = 0.01
//! delta_v = [1.0, 0.0, 0.0]
//! ```
//!
//! Relative point-file paths are resolved against the scene file.

mod points;
mod sampling;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{ElasticModelId, MaterialSpec, PhysicalParams, PlasticModelId, DEFAULT_FRICTION_ANGLE_DEG, DEFAULT_YIELD_STRESS};
use crate::mpm::{init_state, Boundary, GridCondition, GridSpec, ParticleForcing, ParticleState, SimError, Simulator, StepParams};
use crate::render::GaussianKernel;
use crate::tensor::Vec3;

pub use points::{load_points, PointCloud, NORMALIZED_EXTENT};
pub use sampling::{sample_shape, SampledParticles};

/// Largest allowed `dt · wave speed`, in cells.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("empty source: {0}")]
    EmptySource(String),
    #[error("point cloud {0} has no points")]
    EmptyCloud(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default = "one")]
    pub size: f64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            origin: [0.0; 3],
            size: 1.0,
            grid_resolution: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            gravity: default_gravity(),
            frames: default_frames(),
            sample_every: default_sample_every(),
            steps: None,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn n_steps(&self) -> usize {
        self.steps.unwrap_or(self.frames * self.sample_every)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_frames_per_stage")]
    pub frames_per_stage: usize,
    #[serde(default = "default_internal")]
    pub internal: usize,
    #[serde(default = "default_outer")]
    pub outer: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "default_neighborhood_size")]
    pub neighborhood_size: usize,
    #[serde(default = "default_prior_margin_steps")]
    pub prior_margin_steps: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            stages: default_stages(),
            frames_per_stage: default_frames_per_stage(),
            internal: default_internal(),
            outer: default_outer(),
            learning_rate: default_learning_rate(),
            temperature: 1.0,
            neighborhood_size: default_neighborhood_size(),
            prior_margin_steps: default_prior_margin_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default = "default_elastic")]
    pub elastic: ElasticModelId,
    #[serde(default = "default_plastic")]
    pub plastic: PlasticModelId,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    #[serde(default = "default_friction")]
    pub friction_angle: f64,
    #[serde(default = "default_yield")]
    pub yield_stress: f64,
    #[serde(default)]
    pub learnable: bool,
}

impl MaterialConfig {
    pub fn spec(&self) -> Result<MaterialSpec, crate::constitutive::ConstitutiveError> {
        let params = PhysicalParams::new(self.youngs_modulus, self.poisson_ratio)?
            .with_friction_angle(self.friction_angle)?
            .with_yield_stress(self.yield_stress)?;
        Ok(MaterialSpec::new(self.elastic, self.plastic, params))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Shape {
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Shape::Box { min, max } => (Vec3::from(*min), Vec3::from(*max)),
            Shape::Sphere { center, radius } => {
                let c = Vec3::from(*center);
                (c.add_scalar(-radius), c.add_scalar(*radius))
            }
        }
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            Shape::Box { min, max } => (0..3).all(|d| x[d] >= min[d] && x[d] <= max[d]),
            Shape::Sphere { center, radius } => (x - Vec3::from(*center)).norm() <= *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSource {
    pub path: PathBuf,
    #[serde(default = "centre")]
    pub center: [f64; 3],
    /// Longest edge of the placed cloud, m.
    #[serde(default = "default_extent")]
    pub extent: f64,
    #[serde(default)]
    pub opacity_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PointSource>,
    pub density: f64,
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub material: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryCondition {
    GroundPlaneSticky {
        #[serde(default)]
        point: [f64; 3],
        #[serde(default = "up")]
        normal: [f64; 3],
    },
    GroundPlaneSlip {
        #[serde(default)]
        point: [f64; 3],
        #[serde(default = "up")]
        normal: [f64; 3],
    },
    DomainWalls {
        #[serde(default = "default_wall")]
        thickness: usize,
    },
    Impulse {
        region_min: [f64; 3],
        region_max: [f64; 3],
        start: f64,
        end: f64,
        delta_v: [f64; 3],
    },
    ConstantForce {
        region_min: [f64; 3],
        region_max: [f64; 3],
        start: f64,
        end: f64,
        force: [f64; 3],
    },
}

impl BoundaryCondition {
    fn lower(&self) -> (Option<GridCondition>, Option<ParticleForcing>) {
        match self.clone() {
            Self::GroundPlaneSticky { point, normal } => (Some(GridCondition::GroundPlaneSticky { point, normal }), None),
            Self::GroundPlaneSlip { point, normal } => (Some(GridCondition::GroundPlaneSlip { point, normal }), None),
            Self::DomainWalls { thickness } => (Some(GridCondition::DomainWalls { thickness }), None),
            Self::Impulse {
                region_min,
                region_max,
                start,
                end,
                delta_v,
            } => (
                None,
                Some(ParticleForcing::Impulse {
                    region_min,
                    region_max,
                    start,
                    end,
                    delta_v,
                }),
            ),
            Self::ConstantForce {
                region_min,
                region_max,
                start,
                end,
                force,
            } => (
                None,
                Some(ParticleForcing::ConstantForce {
                    region_min,
                    region_max,
                    start,
                    end,
                    force,
                }),
            ),
        }
    }
}

fn default_stages() -> usize {
    10
}
fn default_frames_per_stage() -> usize {
    15
}
fn default_internal() -> usize {
    30
}
fn default_outer() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    5e-5
}
fn default_neighborhood_size() -> usize {
    32
}
fn default_prior_margin_steps() -> f64 {
    20.0
}
fn one() -> f64 {
    1.0
}
fn default_resolution() -> usize {
    25
}
fn default_dt() -> f64 {
    3e-4
}
fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.8]
}
fn default_frames() -> usize {
    150
}
fn default_sample_every() -> usize {
    10
}
fn default_elastic() -> ElasticModelId {
    ElasticModelId::FixedCorotated
}
fn default_plastic() -> PlasticModelId {
    PlasticModelId::Identity
}
fn default_friction() -> f64 {
    DEFAULT_FRICTION_ANGLE_DEG
}
fn default_yield() -> f64 {
    DEFAULT_YIELD_STRESS
}
fn centre() -> [f64; 3] {
    [0.5; 3]
}
fn default_extent() -> f64 {
    NORMALIZED_EXTENT
}
fn up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_wall() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub materials: Vec<MaterialConfig>,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub boundary_conditions: Vec<BoundaryCondition>,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

/// Everything needed to run a scene.
#[derive(Debug, Clone)]
pub struct BuiltScene {
    pub grid: GridSpec,
    pub step: StepParams,
    pub boundary: Boundary,
    pub materials: Vec<MaterialSpec>,
    pub learnable: Vec<bool>,
    pub state: ParticleState,
    pub material_of: Vec<usize>,
    pub kernels: Vec<GaussianKernel>,
}

impl BuiltScene {
    pub fn simulator(&self) -> Result<Simulator, SimError> {
        let blended = self.materials.iter().map(crate::constitutive::BlendedMaterial::from_spec).collect();
        Simulator::new(self.grid, self.step, self.boundary.clone(), blended, self.material_of.clone())
    }
}

/// Read, default-fill and validate a scene file.
pub fn load_scene(path: &Path) -> Result<SceneConfig, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Parse(format!("{}: {e}", path.display())))?;
    let mut cfg = SceneConfig::from_toml_str(&text).map_err(|e| match e {
        SceneError::Parse(m) => SceneError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for s in &mut cfg.sources {
        if let Some(p) = &mut s.points {
            if p.path.is_relative() {
                p.path = base.join(&p.path);
            }
        }
    }
    Ok(cfg)
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SceneError> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene configs always serialise")
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(Vec3::from(self.domain.origin), self.domain.size, self.domain.grid_resolution)
    }

    pub fn step_params(&self) -> StepParams {
        StepParams {
            dt: self.simulation.dt,
            gravity: Vec3::from(self.simulation.gravity),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let d = &self.domain;
        if !(d.size > 0.0 && d.size.is_finite()) || !d.origin.iter().all(|v| v.is_finite()) {
            return Err(invalid("domain", "size must be positive and origin finite"));
        }
        if d.grid_resolution < 6 {
            return Err(invalid("domain.grid_resolution", "needs at least 6 cells per axis"));
        }
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(invalid("simulation.dt", format!("{} must be positive", s.dt)));
        }
        if !s.gravity.iter().all(|g| g.is_finite()) {
            return Err(invalid("simulation.gravity", "must be finite"));
        }
        if s.sample_every == 0 {
            return Err(invalid("simulation.sample_every", "must be positive"));
        }
        let mut specs = Vec::new();
        for (i, m) in self.materials.iter().enumerate() {
            specs.push(m.spec().map_err(|e| invalid(format!("materials[{i}]"), e.to_string()))?);
        }
        if self.sources.is_empty() {
            return Err(invalid("sources", "at least one particle source is required"));
        }
        let grid = self.grid();
        let (lo, hi) = (grid.origin, grid.upper());
        for (i, src) in self.sources.iter().enumerate() {
            let field = format!("sources[{i}]");
            if !(src.density > 0.0 && src.density.is_finite()) {
                return Err(invalid(format!("{field}.density"), "must be positive"));
            }
            if !src.velocity.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("{field}.velocity"), "must be finite"));
            }
            let Some(spec) = specs.get(src.material) else {
                return Err(invalid(format!("{field}.material"), format!("no material block {}", src.material)));
            };
            let (slo, shi) = match (&src.shape, &src.points) {
                (Some(shape), None) => {
                    if let Shape::Sphere { radius, .. } = shape {
                        if !(*radius >= 0.0) {
                            return Err(invalid(format!("{field}.shape.radius"), "must be non-negative"));
                        }
                    }
                    shape.bounds()
                }
                (None, Some(p)) => {
                    if !(p.extent > 0.0) {
                        return Err(invalid(format!("{field}.points.extent"), "must be positive"));
                    }
                    let c = Vec3::from(p.center);
                    (c.add_scalar(-0.5 * p.extent), c.add_scalar(0.5 * p.extent))
                }
                _ => return Err(invalid(field, "exactly one of `shape` and `points` is required")),
            };
            if (0..3).any(|k| !(slo[k] >= lo[k] && shi[k] <= hi[k] && slo[k] <= shi[k])) {
                return Err(invalid(field.to_string(), "geometry must lie inside the domain"));
            }
            let c = spec.params.wave_speed(src.density);
            if s.dt * c > CFL_LIMIT * grid.dx {
                return Err(invalid(
                    "simulation.dt",
                    format!(
                        "dt {} times wave speed {c:.3} m/s of material {} exceeds {CFL_LIMIT} dx = {}",
                        s.dt,
                        src.material,
                        CFL_LIMIT * grid.dx
                    ),
                ));
            }
        }
        let est = &self.estimation;
        if est.stages == 0 || est.frames_per_stage == 0 || est.internal == 0 || est.outer == 0 || est.neighborhood_size == 0 {
            return Err(invalid("estimation", "counts must be positive"));
        }
        if !(est.learning_rate > 0.0 && est.learning_rate.is_finite()) || !(est.temperature > 0.0 && est.temperature.is_finite()) {
            return Err(invalid("estimation", "learning rate and temperature must be positive"));
        }
        if !(est.prior_margin_steps >= 0.0 && est.prior_margin_steps.is_finite()) {
            return Err(invalid("estimation.prior_margin_steps", "must be non-negative"));
        }
        for (i, bc) in self.boundary_conditions.iter().enumerate() {
            let (g, p) = bc.lower();
            g.map(|g| g.validate())
                .transpose()
                .map_err(|m| invalid(format!("boundary_conditions[{i}]"), m))?;
            p.map(|p| p.validate())
                .transpose()
                .map_err(|m| invalid(format!("boundary_conditions[{i}]"), m))?;
        }
        Ok(())
    }

    /// Sample every source and assemble particles, kernels and boundaries.
    pub fn build(&self) -> Result<BuiltScene, SceneError> {
        self.validate()?;
        let grid = self.grid();
        let particle_scale = 0.25 * grid.dx;
        let mut positions = Vec::new();
        let mut masses = Vec::new();
        let mut volumes = Vec::new();
        let mut velocities = Vec::new();
        let mut material_of = Vec::new();
        let mut kernels = Vec::new();
        for (i, src) in self.sources.iter().enumerate() {
            let start = positions.len();
            if let Some(shape) = &src.shape {
                let s = sample_shape(shape, src.density, &grid, self.simulation.seed.wrapping_add(i as u64))?;
                kernels.extend(s.positions.iter().map(|x| GaussianKernel::isotropic(*x, particle_scale)));
                positions.extend(s.positions);
                masses.extend(s.masses);
                volumes.extend(s.volumes);
            } else if let Some(p) = &src.points {
                let mut cloud = load_points(&p.path)?;
                cloud.filter_opacity(p.opacity_threshold);
                if cloud.is_empty() {
                    return Err(SceneError::EmptyCloud(format!("{} after opacity filtering", p.path.display())));
                }
                let k = p.extent / NORMALIZED_EXTENT;
                let centre = Vec3::from(p.center);
                let volume = (0.5 * grid.dx).powi(3);
                for (j, x) in cloud.positions.iter().enumerate() {
                    let pos = centre + (x - Vec3::repeat(0.5)) * k;
                    kernels.push(GaussianKernel {
                        center: pos,
                        covariance: cloud
                            .covariances
                            .as_ref()
                            .map_or(crate::tensor::Mat3::identity() * particle_scale.powi(2), |c| c[j] * (k * k)),
                        opacity: cloud.opacities.as_ref().map_or(1.0, |o| o[j]),
                        payload: cloud.payload.get(j).cloned().unwrap_or_default(),
                    });
                    positions.push(pos);
                    masses.push(src.density * volume);
                    volumes.push(volume);
                }
            }
            let n = positions.len() - start;
            velocities.extend(std::iter::repeat_n(Vec3::from(src.velocity), n));
            material_of.extend(std::iter::repeat_n(src.material, n));
        }
        let mut state = init_state(&positions, &masses, &volumes, &grid).map_err(|e| invalid("sources", e.to_string()))?;
        state.v = velocities;
        for (k, x) in kernels.iter_mut().zip(&state.x) {
            k.center = *x;
        }
        let mut boundary = Boundary::default();
        for bc in &self.boundary_conditions {
            let (g, p) = bc.lower();
            boundary.grid.extend(g);
            boundary.particle.extend(p);
        }
        Ok(BuiltScene {
            grid,
            step: self.step_params(),
            boundary,
            materials: self.materials.iter().map(|m| m.spec().expect("validated")).collect(),
            learnable: self.materials.iter().map(|m| m.learnable).collect(),
            state,
            material_of,
            kernels,
        })
    }
}
