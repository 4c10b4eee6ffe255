use super::EstimationError;
use crate::tensor::Vec3;

/// Default neighbourhood size.
pub const DEFAULT_NEIGHBORHOOD_SIZE: usize = 32;

/// Fixed grouping of particles into neighbourhoods around FPS centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Particle index of each centre, in selection order.
    pub centers: Vec<usize>,
    /// Neighbourhood of every particle.
    pub assignment: Vec<usize>,
    /// Target neighbourhood size used to pick the number of centres.
    pub k: usize,
}

impl Partition {
    /// `ceil(N / k)` FPS centres, then nearest-centre assignment.
    pub fn build(positions: &[Vec3], k: usize) -> Result<Self, EstimationError> {
        if k == 0 {
            return Err(EstimationError::Config("neighbourhood size must be positive".into()));
        }
        let centers = fps_partition(positions, positions.len().div_ceil(k))?;
        Ok(knn_assign(positions, &centers, k))
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Particle count of each neighbourhood.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.centers.len()];
        for &a in &self.assignment {
            out[a] += 1;
        }
        out
    }
}

/// Greedy farthest point sampling starting from particle 0. Ties go to the
/// lowest particle index.
pub fn fps_partition(positions: &[Vec3], n_centers: usize) -> Result<Vec<usize>, EstimationError> {
    if n_centers > positions.len() || (n_centers == 0 && !positions.is_empty()) {
        return Err(EstimationError::TooFewParticles {
            requested: n_centers,
            available: positions.len(),
        });
    }
    let mut centers = Vec::with_capacity(n_centers);
    if n_centers == 0 {
        return Ok(centers);
    }
    let mut dist = vec![f64::INFINITY; positions.len()];
    let mut taken = vec![false; positions.len()];
    let mut next = 0;
    for _ in 0..n_centers {
        centers.push(next);
        taken[next] = true;
        let c = positions[next];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, x) in positions.iter().enumerate() {
            dist[i] = dist[i].min((x - c).norm_squared());
            if !taken[i] && dist[i] > best.0 {
                best = (dist[i], i);
            }
        }
        next = best.1;
    }
    Ok(centers)
}

/// Assign every particle to its nearest centre; equidistant particles go to
/// the centre listed first.
pub fn knn_assign(positions: &[Vec3], centers: &[usize], k: usize) -> Partition {
    let assignment = positions
        .iter()
        .map(|x| {
            let mut best = (f64::INFINITY, 0);
            for (j, &c) in centers.iter().enumerate() {
                let d = (x - positions[c]).norm_squared();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect();
    Partition {
        centers: centers.to_vec(),
        assignment,
        k,
    }
}
