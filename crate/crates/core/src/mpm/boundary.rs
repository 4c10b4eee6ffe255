use super::GridSpec;
use crate::tensor::Vec3;

/// Conditions applied to grid velocities after the force update.
#[derive(Debug, Clone, PartialEq)]
pub enum GridCondition {
    /// Nodes on or below the plane through `point` with upward `normal` are fixed.
    GroundPlaneSticky { point: [f64; 3], normal: [f64; 3] },
    /// Nodes on or below the plane lose the velocity component pointing into it.
    GroundPlaneSlip { point: [f64; 3], normal: [f64; 3] },
    /// Slip walls on all six faces, `thickness` nodes deep.
    DomainWalls { thickness: usize },
}

/// Velocity changes applied to particles before P2G during `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParticleForcing {
    /// Total velocity change `delta_v`, spread evenly over the window.
    Impulse {
        region_min: [f64; 3],
        region_max: [f64; 3],
        start: f64,
        end: f64,
        delta_v: [f64; 3],
    },
    /// A force in newtons on every particle in the region.
    ConstantForce {
        region_min: [f64; 3],
        region_max: [f64; 3],
        start: f64,
        end: f64,
        force: [f64; 3],
    },
}

/// Linear map a grid condition applied to one node velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Projector {
    Zero,
    /// `v - (v·n) n` with unit `n`.
    RemoveNormal(Vec3),
}

impl Projector {
    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        match self {
            Projector::Zero => Vec3::zeros(),
            Projector::RemoveNormal(n) => v - v.dot(n) * n,
        }
    }
}

fn unit(v: &[f64; 3]) -> Vec3 {
    let n = Vec3::from(*v);
    n / n.norm()
}

impl GridCondition {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::GroundPlaneSticky { point, normal } | Self::GroundPlaneSlip { point, normal } => {
                let n = Vec3::from(*normal);
                if !(n.norm() > 0.0 && n.iter().all(|x| x.is_finite())) {
                    return Err("ground plane normal must be a finite nonzero vector".into());
                }
                if !point.iter().all(|x| x.is_finite()) {
                    return Err("ground plane point must be finite".into());
                }
                Ok(())
            }
            Self::DomainWalls { .. } => Ok(()),
        }
    }

    /// Projector this condition applies at `node` with current velocity `v`.
    pub(crate) fn projector(&self, grid: &GridSpec, node: [usize; 3], v: &Vec3) -> Option<Projector> {
        match self {
            Self::GroundPlaneSticky { point, normal } => {
                let n = unit(normal);
                ((grid.node_position(node) - Vec3::from(*point)).dot(&n) <= 0.0).then_some(Projector::Zero)
            }
            Self::GroundPlaneSlip { point, normal } => {
                let n = unit(normal);
                let below = (grid.node_position(node) - Vec3::from(*point)).dot(&n) <= 0.0;
                (below && v.dot(&n) < 0.0).then_some(Projector::RemoveNormal(n))
            }
            Self::DomainWalls { thickness } => {
                let last = grid.nodes_per_axis() - 1;
                for d in 0..3 {
                    let into_low = node[d] < *thickness && v[d] < 0.0;
                    let into_high = node[d] + thickness > last && v[d] > 0.0;
                    if into_low || into_high {
                        let mut n = Vec3::zeros();
                        n[d] = 1.0;
                        return Some(Projector::RemoveNormal(n));
                    }
                }
                None
            }
        }
    }
}

/// Apply every condition in order, recording the projections that fired.
pub(crate) fn apply_grid_conditions(
    conditions: &[GridCondition],
    grid: &GridSpec,
    node: [usize; 3],
    v: Vec3,
    mut record: impl FnMut(Projector),
) -> Vec3 {
    let mut v = v;
    for c in conditions {
        // walls can clip several axes; keep projecting until none fires
        let mut guard = 0;
        while let Some(p) = c.projector(grid, node, &v) {
            v = p.apply(&v);
            record(p);
            guard += 1;
            if matches!(p, Projector::Zero) || guard == 3 || !matches!(c, GridCondition::DomainWalls { .. }) {
                break;
            }
        }
    }
    v
}

impl ParticleForcing {
    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi, start, end, payload) = self.parts();
        if !(start >= 0.0 && end > start && end.is_finite()) {
            return Err(format!("activation window [{start}, {end}) must be non-negative and well ordered"));
        }
        if (0..3).any(|d| !(lo[d] <= hi[d])) {
            return Err("region_min must not exceed region_max".into());
        }
        if !payload.iter().all(|x| x.is_finite()) {
            return Err("forcing payload must be finite".into());
        }
        Ok(())
    }

    fn parts(&self) -> ([f64; 3], [f64; 3], f64, f64, [f64; 3]) {
        match *self {
            Self::Impulse {
                region_min,
                region_max,
                start,
                end,
                delta_v,
            } => (region_min, region_max, start, end, delta_v),
            Self::ConstantForce {
                region_min,
                region_max,
                start,
                end,
                force,
            } => (region_min, region_max, start, end, force),
        }
    }

    /// Velocity change for one particle during the step starting at `time`.
    pub fn delta_v(&self, x: &Vec3, mass: f64, time: f64, dt: f64) -> Vec3 {
        let (lo, hi, start, end, payload) = self.parts();
        if time < start || time >= end || (0..3).any(|d| x[d] < lo[d] || x[d] > hi[d]) {
            return Vec3::zeros();
        }
        let payload = Vec3::from(payload);
        match self {
            Self::Impulse { .. } => payload * (dt / (end - start)),
            Self::ConstantForce { .. } => payload * (dt / mass),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground(sticky: bool) -> GridCondition {
        let point = [0.0, 0.0, 0.1];
        let normal = [0.0, 0.0, 1.0];
        if sticky {
            GridCondition::GroundPlaneSticky { point, normal }
        } else {
            GridCondition::GroundPlaneSlip { point, normal }
        }
    }

    #[test]
    fn sticky_ground_zeroes_nodes_below() {
        let g = GridSpec::unit(25);
        let v = Vec3::new(1.0, 2.0, -3.0);
        let below = apply_grid_conditions(&[ground(true)], &g, [5, 5, 2], v, |_| {});
        let above = apply_grid_conditions(&[ground(true)], &g, [5, 5, 3], v, |_| {});
        assert_eq!(below, Vec3::zeros());
        assert_eq!(above, v);
    }

    #[test]
    fn slip_ground_only_removes_inward_motion() {
        let g = GridSpec::unit(25);
        let down = apply_grid_conditions(&[ground(false)], &g, [5, 5, 1], Vec3::new(1.0, 2.0, -3.0), |_| {});
        assert_eq!(down, Vec3::new(1.0, 2.0, 0.0));
        let up = apply_grid_conditions(&[ground(false)], &g, [5, 5, 1], Vec3::new(1.0, 2.0, 3.0), |_| {});
        assert_eq!(up, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn walls_clip_each_axis() {
        let g = GridSpec::unit(25);
        let walls = [GridCondition::DomainWalls { thickness: 3 }];
        let out = apply_grid_conditions(&walls, &g, [0, 25, 12], Vec3::new(-1.0, 1.0, 1.0), |_| {});
        assert_eq!(out, Vec3::new(0.0, 0.0, 1.0));
        let out = apply_grid_conditions(&walls, &g, [0, 25, 12], Vec3::new(1.0, -1.0, 1.0), |_| {});
        assert_eq!(out, Vec3::new(1.0, -1.0, 1.0));
    }

    #[test]
    fn impulse_is_spread_over_its_window() {
        let f = ParticleForcing::Impulse {
            region_min: [0.0; 3],
            region_max: [1.0; 3],
            start: 0.0,
            end: 0.03,
            delta_v: [3.0, 0.0, 0.0],
        };
        let dt = 3e-4;
        let total: f64 = (0..200).map(|n| f.delta_v(&Vec3::repeat(0.5), 1.0, n as f64 * dt, dt)[0]).sum();
        assert!((total - 3.0).abs() < 1e-9);
        assert_eq!(f.delta_v(&Vec3::repeat(1.5), 1.0, 0.0, dt), Vec3::zeros());
    }

    #[test]
    fn bad_windows_are_rejected() {
        let f = ParticleForcing::ConstantForce {
            region_min: [0.0; 3],
            region_max: [1.0; 3],
            start: 0.5,
            end: 0.1,
            force: [0.0; 3],
        };
        assert!(f.validate().is_err());
    }
}
