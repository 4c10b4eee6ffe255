use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{select_material, EstimationError, LossRecord, MaterialLogits, Partition};
use crate::constitutive::{ElasticModelId, PlasticModelId};

/// One neighbourhood of the material-assignment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodRecord {
    pub index: usize,
    /// Particle index of the FPS centre, among the learnable particles.
    pub center: usize,
    pub particles: usize,
    pub elastic: ElasticModelId,
    pub plastic: PlasticModelId,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub friction_angle: f64,
    pub yield_stress: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentFile {
    /// Neighbourhood of every learnable particle.
    assignment: Vec<usize>,
    neighborhoods: Vec<NeighborhoodRecord>,
}

/// Write the selected material of every neighbourhood as TOML.
pub fn write_assignment(path: &Path, logits: &MaterialLogits, partition: &Partition) -> Result<(), EstimationError> {
    let sizes = partition.sizes();
    let neighborhoods = (0..logits.len())
        .map(|j| {
            let s = select_material(logits, j);
            NeighborhoodRecord {
                index: j,
                center: partition.centers[j],
                particles: sizes[j],
                elastic: s.elastic,
                plastic: s.plastic,
                youngs_modulus: s.params.youngs_modulus(),
                poisson_ratio: s.params.poisson_ratio(),
                friction_angle: s.params.friction_angle,
                yield_stress: s.params.yield_stress,
            }
        })
        .collect();
    let file = AssignmentFile {
        assignment: partition.assignment.clone(),
        neighborhoods,
    };
    let text = toml::to_string(&file).map_err(|e| std::io::Error::other(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Per-particle assignment and per-neighbourhood records of a file written
/// by [`write_assignment`].
pub fn read_assignment(path: &Path) -> Result<(Vec<usize>, Vec<NeighborhoodRecord>), EstimationError> {
    let text = std::fs::read_to_string(path)?;
    let file: AssignmentFile = toml::from_str(&text).map_err(|e| EstimationError::Config(format!("{}: {e}", path.display())))?;
    Ok((file.assignment, file.neighborhoods))
}

/// `outer,stage,internal,loss` with a header row.
pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<(), EstimationError> {
    let mut text = String::from("outer,stage,internal,loss\n");
    for r in log {
        text.push_str(&format!("{},{},{},{:e}\n", r.outer, r.stage, r.internal, r.loss));
    }
    std::fs::write(path, text)?;
    Ok(())
}
