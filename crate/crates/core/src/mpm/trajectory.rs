use super::ParticleState;
use crate::tensor::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub time: f64,
    pub x: Vec<Vec3>,
    pub f: Vec<Mat3>,
}

impl Sample {
    pub fn of(step: usize, state: &ParticleState) -> Self {
        Self {
            step,
            time: state.time,
            x: state.x.clone(),
            f: state.f.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_every: usize,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new(sample_every: usize) -> Self {
        Self {
            sample_every,
            samples: Vec::new(),
        }
    }

    /// Positions only, for loss evaluation against external references.
    pub fn from_positions(sample_every: usize, frames: Vec<Vec<Vec3>>) -> Self {
        let samples = frames
            .into_iter()
            .enumerate()
            .map(|(k, x)| Sample {
                step: k * sample_every,
                time: 0.0,
                f: vec![Mat3::identity(); x.len()],
                x,
            })
            .collect();
        Self { sample_every, samples }
    }

    /// `⌈n_steps / sample_every⌉ + 1`
    pub fn expected_samples(n_steps: usize, sample_every: usize) -> usize {
        n_steps.div_ceil(sample_every) + 1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn particle_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }
}
