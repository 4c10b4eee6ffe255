use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use super::boundary::{GridCondition, ParticleForcing};
use super::grid::{g2p, gather, grid_update, p2g, p2g_range, GridField};
use super::stencil::bspline_stencil;
use super::trajectory::{Sample, Trajectory};
use super::{GridSpec, ParticleState, SimError};
use crate::constitutive::BlendedMaterial;
use crate::tensor::{is_finite_mat, is_finite_vec, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    pub gravity: Vec3,
}

impl Default for StepParams {
    fn default() -> Self {
        Self {
            dt: 3e-4,
            gravity: Vec3::new(0.0, 0.0, -9.8),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Boundary {
    pub grid: Vec<GridCondition>,
    pub particle: Vec<ParticleForcing>,
}

/// One simulation context: grid, boundary setup, per-particle materials and
/// scratch buffers. With one thread every stage runs sequentially and the
/// result is bitwise reproducible; with more, P2G scatters into per-worker
/// grids that are summed in worker order.
#[derive(Clone)]
pub struct Simulator {
    pub grid: GridSpec,
    pub params: StepParams,
    pub boundary: Boundary,
    pub(super) materials: Vec<BlendedMaterial>,
    pub(super) material_of: Vec<usize>,
    threads: usize,
    pool: Option<Arc<ThreadPool>>,
    pub(super) field: GridField,
    workers: Vec<GridField>,
    kirchhoff: Vec<Mat3>,
}

impl Simulator {
    pub fn new(
        grid: GridSpec,
        params: StepParams,
        boundary: Boundary,
        materials: Vec<BlendedMaterial>,
        material_of: Vec<usize>,
    ) -> Result<Self, SimError> {
        if !(params.dt > 0.0 && params.dt.is_finite()) || !is_finite_vec(&params.gravity) {
            return Err(SimError::Setup(format!("bad step parameters {params:?}")));
        }
        if grid.res < 2 * super::BOUNDARY_MARGIN_CELLS as usize + 2 || !(grid.dx > 0.0) {
            return Err(SimError::Setup(format!("grid resolution {} is too small", grid.res)));
        }
        let mut sim = Self {
            grid,
            params,
            boundary,
            materials: Vec::new(),
            material_of: Vec::new(),
            threads: 1,
            pool: None,
            field: GridField::new(grid),
            workers: Vec::new(),
            kirchhoff: Vec::new(),
        };
        sim.set_materials(materials, material_of)?;
        Ok(sim)
    }

    pub fn with_threads(mut self, threads: usize) -> Result<Self, SimError> {
        if threads == 0 {
            return Err(SimError::Setup("thread count must be at least 1".into()));
        }
        self.threads = threads;
        if threads == 1 {
            self.pool = None;
            self.workers.clear();
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| SimError::Setup(e.to_string()))?;
            self.pool = Some(Arc::new(pool));
            self.workers = vec![GridField::new(self.grid); threads];
        }
        Ok(self)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn set_materials(&mut self, materials: Vec<BlendedMaterial>, material_of: Vec<usize>) -> Result<(), SimError> {
        if let Some(index) = material_of.iter().position(|&m| m >= materials.len()) {
            return Err(SimError::InvalidParticle {
                index,
                reason: format!("material {} of {}", material_of[index], materials.len()),
            });
        }
        self.materials = materials;
        self.material_of = material_of;
        Ok(())
    }

    /// Replace the material table, keeping the particle assignment.
    pub fn update_materials(&mut self, materials: Vec<BlendedMaterial>) -> Result<(), SimError> {
        let of = std::mem::take(&mut self.material_of);
        self.set_materials(materials, of)
    }

    pub fn materials(&self) -> &[BlendedMaterial] {
        &self.materials
    }

    pub fn material_of(&self) -> &[usize] {
        &self.material_of
    }

    /// Grid as left by the most recent step.
    pub fn grid_field(&self) -> &GridField {
        &self.field
    }

    fn map_particles<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    /// Advance `state` by one step. `step` only labels errors.
    pub fn step(&mut self, state: &mut ParticleState, step: usize) -> Result<(), SimError> {
        let n = state.len();
        if n != self.material_of.len() {
            return Err(SimError::Setup(format!(
                "{n} particles but {} material slots",
                self.material_of.len()
            )));
        }
        let dt = self.params.dt;

        for forcing in &self.boundary.particle {
            for p in 0..n {
                state.v[p] += forcing.delta_v(&state.x[p], state.mass[p], state.time, dt);
            }
        }

        let stresses = {
            let (materials, of, st) = (&self.materials, &self.material_of, &*state);
            self.map_particles(n, |p| materials[of[p]].piola(&st.f[p]).map(|pk| pk * st.f[p].transpose()))
        };
        self.kirchhoff.clear();
        for (particle, r) in stresses.into_iter().enumerate() {
            self.kirchhoff
                .push(r.map_err(|source| SimError::Material { step, particle, source })?);
        }

        self.scatter(state);
        grid_update(&mut self.field, dt, &self.params.gravity, &self.boundary.grid);

        if self.pool.is_none() {
            g2p(&self.field, state, dt);
        } else {
            let (lo, hi) = self.grid.clamp_bounds();
            let (field, st) = (&self.field, &*state);
            let gathered = self.map_particles(n, |p| {
                let g = gather(field, &bspline_stencil(&st.x[p], &field.spec));
                let x = (st.x[p] + dt * g.v).sup(&lo).inf(&hi);
                (x, g.v, g.c, (Mat3::identity() + dt * g.grad_v) * st.f[p])
            });
            for (p, (x, v, c, f)) in gathered.into_iter().enumerate() {
                state.x[p] = x;
                state.v[p] = v;
                state.c[p] = c;
                state.f[p] = f;
            }
        }

        let projected = {
            let (materials, of, st) = (&self.materials, &self.material_of, &*state);
            self.map_particles(n, |p| materials[of[p]].project(&st.f[p]))
        };
        for (particle, r) in projected.into_iter().enumerate() {
            state.f[particle] = r.map_err(|source| SimError::Material { step, particle, source })?;
        }
        state.time += dt;
        check_state(state, step)
    }

    fn scatter(&mut self, state: &ParticleState) {
        self.field.clear();
        let dt = self.params.dt;
        let Some(pool) = &self.pool else {
            p2g(state, &self.kirchhoff, &mut self.field, dt);
            return;
        };
        let n = state.len();
        let chunk = n.div_ceil(self.workers.len()).max(1);
        let tau = &self.kirchhoff;
        pool.install(|| {
            self.workers.par_iter_mut().enumerate().for_each(|(k, buf)| {
                buf.clear();
                let start = (k * chunk).min(n);
                p2g_range(state, tau, start..(start + chunk).min(n), buf, dt);
            });
            let workers = &self.workers;
            let field = &mut self.field;
            field
                .mass
                .par_iter_mut()
                .zip(field.momentum.par_iter_mut())
                .enumerate()
                .for_each(|(i, (m, q))| {
                    for w in workers {
                        *m += w.mass[i];
                        *q += w.momentum[i];
                    }
                });
        });
    }

    /// Run `n_steps` steps from `state`, sampling step 0, every
    /// `sample_every`-th step and the last one.
    pub fn run(&mut self, mut state: ParticleState, n_steps: usize, sample_every: usize) -> Result<Trajectory, SimError> {
        if sample_every == 0 {
            return Err(SimError::Setup("sample_every must be positive".into()));
        }
        let mut traj = Trajectory::new(sample_every);
        traj.samples.push(Sample::of(0, &state));
        for step in 0..n_steps {
            self.step(&mut state, step)?;
            if (step + 1) % sample_every == 0 || step + 1 == n_steps {
                traj.samples.push(Sample::of(step + 1, &state));
            }
        }
        Ok(traj)
    }
}

pub(crate) fn check_state(state: &ParticleState, step: usize) -> Result<(), SimError> {
    for p in 0..state.len() {
        let reason = if !is_finite_vec(&state.x[p]) || !is_finite_vec(&state.v[p]) {
            "non-finite position or velocity"
        } else if !is_finite_mat(&state.f[p]) || !is_finite_mat(&state.c[p]) {
            "non-finite deformation gradient or affine velocity"
        } else if !(state.f[p].determinant() > 0.0) {
            "inverted deformation gradient"
        } else {
            continue;
        };
        return Err(SimError::UnstableStep {
            step,
            reason: format!("particle {p}: {reason}"),
        });
    }
    Ok(())
}
