//! Moving-least-squares MPM with APIC transfers on a quadratic B-spline grid.
//!
//! One step runs stress evaluation, particle forcing, P2G, the grid update with
//! boundary conditions, G2P, and finally the plastic return map. Internal forces
//! use the Kirchhoff stress `P Fᵀ` of each particle and are scattered together
//! with the APIC momentum.

mod adjoint;
mod boundary;
mod grid;
mod stencil;
mod step;
mod trajectory;

use thiserror::Error;

use crate::constitutive::ConstitutiveError;
use crate::tensor::{Mat3, Vec3};

pub use adjoint::{MaterialCotangent, StepCotangent, StepTape};
pub use boundary::{GridCondition, ParticleForcing};
pub use grid::{g2p, grid_update, p2g, GridField, MIN_NODE_MASS};
pub use stencil::{bspline_stencil, Stencil, OFFSETS};
pub use step::{Boundary, Simulator, StepParams};
pub use trajectory::{Sample, Trajectory};

/// Particles are kept this many cells away from every domain face.
pub const BOUNDARY_MARGIN_CELLS: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("particle {index} at {position:?} lies outside the domain")]
    OutOfDomain { index: usize, position: [f64; 3] },
    #[error("particle {index}: {reason}")]
    InvalidParticle { index: usize, reason: String },
    #[error("unstable step {step}: {reason}")]
    UnstableStep { step: usize, reason: String },
    #[error("material failure at step {step}, particle {particle}: {source}")]
    Material {
        step: usize,
        particle: usize,
        #[source]
        source: ConstitutiveError,
    },
    #[error("invalid simulator setup: {0}")]
    Setup(String),
}

impl SimError {
    pub fn step(&self) -> Option<usize> {
        match self {
            Self::UnstableStep { step, .. } | Self::Material { step, .. } => Some(*step),
            _ => None,
        }
    }
}

/// Build `scene` and run it single-threaded.
pub fn simulate(scene: &crate::scene::SceneConfig, n_steps: usize, sample_every: usize) -> Result<Trajectory, SimError> {
    let built = scene.build().map_err(|e| SimError::Setup(e.to_string()))?;
    built.simulator()?.run(built.state, n_steps, sample_every)
}

/// Cubic background grid with `res` cells of width `dx` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Vec3,
    pub dx: f64,
    pub res: usize,
}

impl GridSpec {
    pub fn new(origin: Vec3, size: f64, res: usize) -> Self {
        Self {
            origin,
            dx: size / res as f64,
            res,
        }
    }

    pub fn unit(res: usize) -> Self {
        Self::new(Vec3::zeros(), 1.0, res)
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.res + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(3)
    }

    pub fn size(&self) -> f64 {
        self.dx * self.res as f64
    }

    pub fn upper(&self) -> Vec3 {
        self.origin.add_scalar(self.size())
    }

    #[inline]
    pub fn node_position(&self, node: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(node[0] as f64, node[1] as f64, node[2] as f64) * self.dx
    }

    #[inline]
    pub fn flat_index(&self, node: [usize; 3]) -> usize {
        let n = self.nodes_per_axis();
        (node[0] * n + node[1]) * n + node[2]
    }

    pub fn unflatten(&self, i: usize) -> [usize; 3] {
        let n = self.nodes_per_axis();
        [i / (n * n), (i / n) % n, i % n]
    }

    #[inline]
    pub fn contains(&self, x: &Vec3) -> bool {
        let hi = self.upper();
        (0..3).all(|d| x[d] >= self.origin[d] && x[d] <= hi[d])
    }

    /// Per-axis bounds particles are clamped into.
    pub fn clamp_bounds(&self) -> (Vec3, Vec3) {
        let m = BOUNDARY_MARGIN_CELLS * self.dx;
        (self.origin.add_scalar(m), self.upper().add_scalar(-m))
    }
}

/// Struct-of-arrays particle state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub f: Vec<Mat3>,
    pub c: Vec<Mat3>,
    pub mass: Vec<f64>,
    pub volume: Vec<f64>,
    pub time: f64,
}

impl ParticleState {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.v.iter().zip(&self.mass).map(|(v, m)| v * *m).sum()
    }
}

/// Particles at rest: `v = 0`, `F = I`, `C = 0`.
pub fn init_state(positions: &[Vec3], masses: &[f64], volumes: &[f64], grid: &GridSpec) -> Result<ParticleState, SimError> {
    if masses.len() != positions.len() || volumes.len() != positions.len() {
        return Err(SimError::Setup(format!(
            "{} positions, {} masses, {} volumes",
            positions.len(),
            masses.len(),
            volumes.len()
        )));
    }
    let (lo, hi) = grid.clamp_bounds();
    let mut x = Vec::with_capacity(positions.len());
    for (index, p) in positions.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) || !grid.contains(p) {
            return Err(SimError::OutOfDomain {
                index,
                position: [p[0], p[1], p[2]],
            });
        }
        if !(masses[index] > 0.0 && volumes[index] > 0.0) {
            return Err(SimError::InvalidParticle {
                index,
                reason: format!("mass {} and volume {} must be positive", masses[index], volumes[index]),
            });
        }
        x.push(p.sup(&lo).inf(&hi));
    }
    let n = positions.len();
    Ok(ParticleState {
        x,
        v: vec![Vec3::zeros(); n],
        f: vec![Mat3::identity(); n],
        c: vec![Mat3::zeros(); n],
        mass: masses.to_vec(),
        volume: volumes.to_vec(),
        time: 0.0,
    })
}
