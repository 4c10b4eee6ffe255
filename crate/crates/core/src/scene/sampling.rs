use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SceneError, Shape};
use crate::mpm::GridSpec;
use crate::tensor::Vec3;

/// Jitter of each seeded particle, as a fraction of its sub-cell width.
const JITTER: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampledParticles {
    pub positions: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl SampledParticles {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Eight particles in every grid cell whose centre lies inside the shape,
/// one per octant, each jittered from the octant centre.
pub fn sample_shape(shape: &Shape, density: f64, grid: &GridSpec, seed: u64) -> Result<SampledParticles, SceneError> {
    let dx = grid.dx;
    let (lo, hi) = shape.bounds();
    let cell_range = |d: usize| {
        let a = ((lo[d] - grid.origin[d]) / dx - 0.5).ceil().max(0.0) as usize;
        let b = (((hi[d] - grid.origin[d]) / dx - 0.5).floor() as i64).min(grid.res as i64 - 1);
        (a, b)
    };
    let ranges = [cell_range(0), cell_range(1), cell_range(2)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let volume = (0.5 * dx).powi(3);
    let mut out = SampledParticles::default();
    for i in ranges[0].0 as i64..=ranges[0].1 {
        for j in ranges[1].0 as i64..=ranges[1].1 {
            for k in ranges[2].0 as i64..=ranges[2].1 {
                let cell = Vec3::new(i as f64, j as f64, k as f64);
                let centre = grid.origin + (cell.add_scalar(0.5)) * dx;
                if !shape.contains(&centre) {
                    continue;
                }
                for octant in 0..8 {
                    let sub = Vec3::new((octant & 1) as f64, ((octant >> 1) & 1) as f64, (octant >> 2) as f64);
                    let jitter = Vec3::from_fn(|_, _| rng.gen_range(-JITTER..JITTER));
                    let local = (sub.add_scalar(0.5) + jitter) * 0.5;
                    out.positions.push(grid.origin + (cell + local) * dx);
                    out.masses.push(density * volume);
                    out.volumes.push(volume);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(SceneError::EmptySource(format!("{shape:?} covers no grid cell")));
    }
    Ok(out)
}
