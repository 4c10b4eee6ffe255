//! Reverse pass of one step.
//!
//! The forward internals are recomputed from the state at the start of the
//! step, so a tape only stores one `ParticleState` per step. Boundary
//! decisions (clamping, active grid conditions, forcing regions) are treated
//! as locally constant, which makes the pass exact wherever the step is
//! differentiable.

use super::boundary::{apply_grid_conditions, Projector};
use super::grid::{gather, p2g, GridField, MIN_NODE_MASS};
use super::stencil::{bspline_stencil, OFFSETS};
use super::step::Simulator;
use super::{ParticleState, SimError};
use crate::tensor::{Mat3, Vec3};

/// Cotangents of every per-particle state field.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCotangent {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub f: Vec<Mat3>,
    pub c: Vec<Mat3>,
}

impl StepCotangent {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![Vec3::zeros(); n],
            v: vec![Vec3::zeros(); n],
            f: vec![Mat3::zeros(); n],
            c: vec![Mat3::zeros(); n],
        }
    }
}

/// Cotangents of one entry of the material table.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaterialCotangent {
    pub mu: f64,
    pub lambda: f64,
    pub elastic: [f64; 3],
    pub plastic: [f64; 4],
}

/// States at the start of every recorded step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTape {
    pub states: Vec<ParticleState>,
}

impl Simulator {
    /// Run forward, keeping every pre-step state for the reverse pass.
    pub fn run_taped(
        &mut self,
        mut state: ParticleState,
        n_steps: usize,
        first_step: usize,
    ) -> Result<(ParticleState, StepTape), SimError> {
        let mut tape = StepTape {
            states: Vec::with_capacity(n_steps),
        };
        for k in 0..n_steps {
            tape.states.push(state.clone());
            self.step(&mut state, first_step + k)?;
        }
        Ok((state, tape))
    }

    /// Pull `out` (the cotangent of the state after the step) back to the
    /// state before it, accumulating material cotangents into `materials_bar`.
    pub fn step_vjp(
        &mut self,
        start: &ParticleState,
        out: &StepCotangent,
        materials_bar: &mut [MaterialCotangent],
        step: usize,
    ) -> Result<StepCotangent, SimError> {
        let n = start.len();
        let dt = self.params.dt;
        let gravity = self.params.gravity;
        let spec = self.grid;
        let dx = spec.dx;
        let k_apic = 4.0 / (dx * dx);
        let fail = |particle: usize| move |source| SimError::Material { step, particle, source };

        // forward replay
        let mut pre = start.clone();
        for forcing in &self.boundary.particle {
            for p in 0..n {
                pre.v[p] += forcing.delta_v(&start.x[p], start.mass[p], start.time, dt);
            }
        }
        let mut piola = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        for p in 0..n {
            let pk = self.materials[self.material_of[p]].piola(&start.f[p]).map_err(fail(p))?;
            piola.push(pk);
            tau.push(pk * start.f[p].transpose());
        }
        let mut grid = GridField::new(spec);
        p2g(&pre, &tau, &mut grid, dt);
        let mut v_hat = vec![Vec3::zeros(); grid.mass.len()];
        for i in 0..grid.mass.len() {
            if grid.mass[i] >= MIN_NODE_MASS {
                v_hat[i] = grid.momentum[i] / grid.mass[i] + dt * gravity;
                grid.velocity[i] = apply_grid_conditions(&self.boundary.grid, &spec, spec.unflatten(i), v_hat[i], |_| {});
            }
        }

        // G2P and return map
        let (lo, hi) = spec.clamp_bounds();
        let mut v_tilde_bar = vec![Vec3::zeros(); grid.mass.len()];
        let mut bar = StepCotangent::zeros(n);
        for p in 0..n {
            let s = bspline_stencil(&start.x[p], &spec);
            let g = gather(&grid, &s);
            let f_trial = (Mat3::identity() + dt * g.grad_v) * start.f[p];
            let mat = &self.materials[self.material_of[p]];
            let pv = mat.project_vjp(&f_trial, &out.f[p]).map_err(fail(p))?;
            let mb = &mut materials_bar[self.material_of[p]];
            mb.mu += pv.mu_bar;
            mb.lambda += pv.lambda_bar;
            for k in 0..4 {
                mb.plastic[k] += pv.weight_bar[k];
            }
            let grad_bar = dt * pv.f_bar * start.f[p].transpose();
            bar.f[p] = (Mat3::identity() + dt * g.grad_v).transpose() * pv.f_bar;

            let x_u = start.x[p] + dt * g.v;
            let mut x_u_bar = out.x[p];
            for d in 0..3 {
                if x_u[d] < lo[d] || x_u[d] > hi[d] {
                    x_u_bar[d] = 0.0;
                }
            }
            let mut x_bar = x_u_bar;
            let v_bar = out.v[p] + dt * x_u_bar;
            let c_bar = out.c[p];
            for o in OFFSETS {
                let i = grid.index(s.node(o));
                let vi = grid.velocity[i];
                let w = s.weight(o);
                let dw = s.gradient(o);
                let r = s.offset(o, dx);
                v_tilde_bar[i] += w * v_bar + k_apic * w * (c_bar * r) + grad_bar * dw;
                x_bar += (vi.dot(&v_bar) + k_apic * vi.dot(&(c_bar * r))) * dw - k_apic * w * (c_bar.transpose() * vi)
                    + s.hessian(o) * (grad_bar.transpose() * vi);
            }
            bar.x[p] = x_bar;
        }

        // grid update
        let mut q_bar = vec![Vec3::zeros(); grid.mass.len()];
        let mut m_bar = vec![0.0; grid.mass.len()];
        let mut fired = Vec::new();
        for i in 0..grid.mass.len() {
            let m = grid.mass[i];
            if m < MIN_NODE_MASS || v_tilde_bar[i] == Vec3::zeros() {
                continue;
            }
            fired.clear();
            apply_grid_conditions(&self.boundary.grid, &spec, spec.unflatten(i), v_hat[i], |pj: Projector| {
                fired.push(pj)
            });
            let mut vb = v_tilde_bar[i];
            for pj in fired.iter().rev() {
                vb = pj.apply(&vb);
            }
            q_bar[i] = vb / m;
            m_bar[i] = -(grid.momentum[i] / m).dot(&vb) / m;
        }

        // P2G and stress
        for p in 0..n {
            let s = bspline_stencil(&start.x[p], &spec);
            let m = start.mass[p];
            let vol = start.volume[p];
            let (vb, c) = (pre.v[p], start.c[p]);
            let mut v_b_bar = Vec3::zeros();
            let mut c_bar = Mat3::zeros();
            let mut tau_bar = Mat3::zeros();
            let mut x_bar = Vec3::zeros();
            for o in OFFSETS {
                let i = grid.index(s.node(o));
                let (qb, mb) = (q_bar[i], m_bar[i]);
                if qb == Vec3::zeros() && mb == 0.0 {
                    continue;
                }
                let w = s.weight(o);
                let dw = s.gradient(o);
                let r = s.offset(o, dx);
                v_b_bar += w * m * qb;
                c_bar += w * m * qb * r.transpose();
                tau_bar -= dt * vol * qb * dw.transpose();
                x_bar += (m * qb.dot(&(vb + c * r)) + mb * m) * dw
                    - w * m * (c.transpose() * qb)
                    - dt * vol * (s.hessian(o) * (tau[p].transpose() * qb));
            }
            let p_bar = tau_bar * start.f[p];
            let mat = &self.materials[self.material_of[p]];
            let sv = mat.piola_vjp(&start.f[p], &p_bar).map_err(fail(p))?;
            let mb = &mut materials_bar[self.material_of[p]];
            mb.mu += sv.mu_bar;
            mb.lambda += sv.lambda_bar;
            for k in 0..3 {
                mb.elastic[k] += sv.weight_bar[k];
            }
            bar.f[p] += tau_bar.transpose() * piola[p] + sv.f_bar;
            bar.x[p] += x_bar;
            bar.v[p] = v_b_bar;
            bar.c[p] = c_bar;
        }
        Ok(bar)
    }
}
