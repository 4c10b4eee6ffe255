use std::ops::Range;

use super::boundary::{apply_grid_conditions, GridCondition};
use super::stencil::{bspline_stencil, Stencil, OFFSETS};
use super::{GridSpec, ParticleState};
use crate::tensor::{Mat3, Vec3};

/// Nodes lighter than this are treated as empty.
pub const MIN_NODE_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub mass: Vec<f64>,
    pub momentum: Vec<Vec3>,
    pub velocity: Vec<Vec3>,
}

impl GridField {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.node_count();
        Self {
            spec,
            mass: vec![0.0; n],
            momentum: vec![Vec3::zeros(); n],
            velocity: vec![Vec3::zeros(); n],
        }
    }

    pub fn clear(&mut self) {
        self.mass.fill(0.0);
        self.momentum.fill(Vec3::zeros());
        self.velocity.fill(Vec3::zeros());
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Sum of the scattered momenta, before the force and velocity update.
    pub fn total_momentum(&self) -> Vec3 {
        self.momentum.iter().sum()
    }

    #[inline]
    pub(crate) fn index(&self, node: [i64; 3]) -> usize {
        let n = self.spec.nodes_per_axis() as i64;
        assert!(
            node.iter().all(|&c| c >= 0 && c < n),
            "stencil node {node:?} outside a grid of {n} nodes per axis"
        );
        self.spec.flat_index(node.map(|c| c as usize))
    }
}

/// Scatter mass, APIC momentum and the internal force impulse
/// `-dt V τ ∇w` of every particle. `kirchhoff` holds `P Fᵀ` per particle.
/// Accumulates into `grid` without clearing it.
pub fn p2g(state: &ParticleState, kirchhoff: &[Mat3], grid: &mut GridField, dt: f64) {
    p2g_range(state, kirchhoff, 0..state.len(), grid, dt);
}

pub(crate) fn p2g_range(state: &ParticleState, kirchhoff: &[Mat3], range: Range<usize>, grid: &mut GridField, dt: f64) {
    let dx = grid.spec.dx;
    for p in range {
        let s = bspline_stencil(&state.x[p], &grid.spec);
        let m = state.mass[p];
        let force = -dt * state.volume[p] * kirchhoff[p];
        let (v, c) = (state.v[p], state.c[p]);
        for o in OFFSETS {
            let i = grid.index(s.node(o));
            let w = s.weight(o);
            grid.mass[i] += w * m;
            grid.momentum[i] += w * m * (v + c * s.offset(o, dx)) + force * s.gradient(o);
        }
    }
}

/// `v_i = q_i / m_i + dt g`, zero on empty nodes, then the boundary conditions.
pub fn grid_update(grid: &mut GridField, dt: f64, gravity: &Vec3, conditions: &[GridCondition]) {
    let spec = grid.spec;
    for i in 0..grid.mass.len() {
        let m = grid.mass[i];
        grid.velocity[i] = if m < MIN_NODE_MASS {
            Vec3::zeros()
        } else {
            let v = grid.momentum[i] / m + dt * gravity;
            apply_grid_conditions(conditions, &spec, spec.unflatten(i), v, |_| {})
        };
    }
}

/// Gathered quantities of one particle.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Gathered {
    pub v: Vec3,
    pub c: Mat3,
    pub grad_v: Mat3,
}

#[inline]
pub(crate) fn gather(grid: &GridField, s: &Stencil) -> Gathered {
    let dx = grid.spec.dx;
    let mut v = Vec3::zeros();
    let mut b = Mat3::zeros();
    let mut grad_v = Mat3::zeros();
    for o in OFFSETS {
        let vi = grid.velocity[grid.index(s.node(o))];
        let w = s.weight(o);
        v += w * vi;
        b += w * vi * s.offset(o, dx).transpose();
        grad_v += vi * s.gradient(o).transpose();
    }
    Gathered {
        v,
        c: b * (4.0 / (dx * dx)),
        grad_v,
    }
}

/// Updates `v`, `C` and `x` (clamped into the margin) and replaces `F` with
/// the trial gradient `(I + dt ∇v) F`.
pub fn g2p(grid: &GridField, state: &mut ParticleState, dt: f64) {
    let (lo, hi) = grid.spec.clamp_bounds();
    for p in 0..state.len() {
        let s = bspline_stencil(&state.x[p], &grid.spec);
        let g = gather(grid, &s);
        state.v[p] = g.v;
        state.c[p] = g.c;
        state.x[p] = (state.x[p] + dt * g.v).sup(&lo).inf(&hi);
        state.f[p] = (Mat3::identity() + dt * g.grad_v) * state.f[p];
    }
}
