//! Material estimation against a reference trajectory.
//!
//! Learnable particles are grouped into neighbourhoods once, by farthest
//! point sampling and nearest-centre assignment. Each neighbourhood owns
//! category logits for the elastic and plastic heads plus an unconstrained
//! Young's modulus and Poisson ratio. The forward pass uses the hard argmax
//! choice; gradients of the logits follow the straight-through rule through
//! `softmax(logits / temperature)`. Gradients are computed in reverse mode
//! through the recorded steps of a stage window.

mod logits;
mod output;
mod partition;
mod train;

use thiserror::Error;

use crate::constitutive::{BlendedMaterial, MaterialSpec};
use crate::mpm::{MaterialCotangent, ParticleState, SimError, Simulator, StepCotangent, Trajectory};
use crate::scene::BuiltScene;
use crate::tensor::Vec3;

pub use logits::{
    argmax, logit_from_poisson, poisson_from_logit, select_material, softmax, ste_backward, youngs_from_log, LogitGradient, MaterialLogits,
    PlasticConstants, PARAMS_PER_NEIGHBORHOOD,
};
pub use output::{read_assignment, write_assignment, write_loss_log, NeighborhoodRecord};
pub use partition::{fps_partition, knn_assign, Partition, DEFAULT_NEIGHBORHOOD_SIZE};
pub use train::{logit_groups, train, Adam, LossRecord, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("cannot pick {requested} centres from {available} particles")]
    TooFewParticles { requested: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid estimation config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Simulation {
        context: String,
        #[source]
        source: SimError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl EstimationError {
    fn sim(context: impl Into<String>) -> impl FnOnce(SimError) -> Self {
        let context = context.into();
        move |source| Self::Simulation { context, source }
    }
}

/// Mean squared distance between corresponding particles over all samples.
pub fn trajectory_loss(simulated: &Trajectory, reference: &Trajectory) -> Result<f64, EstimationError> {
    if simulated.len() != reference.len() {
        return Err(EstimationError::ShapeMismatch(format!(
            "{} simulated frames against {} reference frames",
            simulated.len(),
            reference.len()
        )));
    }
    let frames: Vec<&[Vec3]> = simulated.samples.iter().map(|s| s.x.as_slice()).collect();
    let refs: Vec<&[Vec3]> = reference.samples.iter().map(|s| s.x.as_slice()).collect();
    frames_loss(&frames, &refs)
}

fn frames_loss(frames: &[&[Vec3]], refs: &[&[Vec3]]) -> Result<f64, EstimationError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, (a, b)) in frames.iter().zip(refs).enumerate() {
        if a.len() != b.len() {
            return Err(EstimationError::ShapeMismatch(format!(
                "frame {k}: {} simulated particles against {} reference particles",
                a.len(),
                b.len()
            )));
        }
        sum += a.iter().zip(b.iter()).map(|(x, r)| (x - r).norm_squared()).sum::<f64>();
        count += a.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Reference frames `first_frame + 1 ..= first_frame + frames`, simulated
/// from the state matching reference frame `first_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageWindow {
    pub first_frame: usize,
    pub frames: usize,
}

/// A scene prepared for estimation.
#[derive(Clone)]
pub struct Problem {
    pub simulator: Simulator,
    pub initial: ParticleState,
    pub partition: Partition,
    /// Particles whose material is learned, in partition order.
    pub learnable: Vec<usize>,
    /// Materials of the remaining particles, after the neighbourhood entries.
    pub fixed: Vec<BlendedMaterial>,
    /// Material table entry of every particle.
    pub material_of: Vec<usize>,
    pub sample_every: usize,
    /// Scene material of each neighbourhood centre.
    pub declared: Vec<MaterialSpec>,
}

impl Problem {
    /// Partition the learnable particles of `scene` into neighbourhoods of
    /// about `k`. If no material block is marked learnable, every particle is.
    pub fn new(scene: &BuiltScene, sample_every: usize, k: usize) -> Result<Self, EstimationError> {
        if sample_every == 0 {
            return Err(EstimationError::Config("sample stride must be positive".into()));
        }
        let any = scene.learnable.iter().any(|&l| l);
        let is_learnable = |p: usize| !any || scene.learnable[scene.material_of[p]];
        let n = scene.state.len();
        let learnable: Vec<usize> = (0..n).filter(|&p| is_learnable(p)).collect();
        let positions: Vec<Vec3> = learnable.iter().map(|&p| scene.state.x[p]).collect();
        let partition = Partition::build(&positions, k)?;
        let n_nb = partition.len();

        let mut fixed_index = vec![usize::MAX; scene.materials.len()];
        let mut fixed = Vec::new();
        let mut material_of = vec![0; n];
        for (i, &p) in learnable.iter().enumerate() {
            material_of[p] = partition.assignment[i];
        }
        for p in (0..n).filter(|&p| !is_learnable(p)) {
            let m = scene.material_of[p];
            if fixed_index[m] == usize::MAX {
                fixed_index[m] = n_nb + fixed.len();
                fixed.push(BlendedMaterial::from_spec(&scene.materials[m]));
            }
            material_of[p] = fixed_index[m];
        }
        let declared: Vec<MaterialSpec> = partition
            .centers
            .iter()
            .map(|&c| scene.materials[scene.material_of[learnable[c]]])
            .collect();
        let params: Vec<_> = declared.iter().map(|d| d.params).collect();
        let mut table = MaterialLogits::uniform(&params).hard_materials();
        table.extend(fixed.iter().copied());
        let simulator = Simulator::new(scene.grid, scene.step, scene.boundary.clone(), table, material_of.clone())
            .map_err(EstimationError::sim("building the estimation simulator"))?;
        Ok(Self {
            simulator,
            initial: scene.state.clone(),
            partition,
            learnable,
            fixed,
            material_of,
            sample_every,
            declared,
        })
    }

    /// Starting point from the scene: its parameters, and category logits
    /// that favour the declared models by `margin`. With a zero margin the
    /// logits are uniform and the first model of each head is selected.
    pub fn initial_logits(&self, margin: f64) -> MaterialLogits {
        let params: Vec<_> = self.declared.iter().map(|d| d.params).collect();
        let mut logits = MaterialLogits::uniform(&params);
        for (j, d) in self.declared.iter().enumerate() {
            logits.elastic[j][d.elastic.index()] += margin;
            logits.plastic[j][d.plastic.index()] += margin;
        }
        logits
    }

    pub fn with_threads(mut self, threads: usize) -> Result<Self, EstimationError> {
        self.simulator = self.simulator.with_threads(threads).map_err(EstimationError::sim("thread pool"))?;
        Ok(self)
    }

    /// Full material table for the given neighbourhood materials.
    pub fn table(&self, neighborhoods: Vec<BlendedMaterial>) -> Vec<BlendedMaterial> {
        let mut t = neighborhoods;
        t.extend(self.fixed.iter().copied());
        t
    }

    fn check_reference(&self, reference: &Trajectory, window: StageWindow) -> Result<(), EstimationError> {
        if reference.particle_count() != self.initial.len() {
            return Err(EstimationError::ShapeMismatch(format!(
                "reference has {} particles, scene has {}",
                reference.particle_count(),
                self.initial.len()
            )));
        }
        if window.first_frame + window.frames >= reference.len() {
            return Err(EstimationError::ShapeMismatch(format!(
                "window ends at frame {} but the reference has {} frames",
                window.first_frame + window.frames,
                reference.len()
            )));
        }
        Ok(())
    }

    /// Forward pass over `window` with the given neighbourhood materials.
    /// Returns the window loss and the end state.
    pub fn window_loss(
        &self,
        neighborhoods: Vec<BlendedMaterial>,
        reference: &Trajectory,
        start: &ParticleState,
        window: StageWindow,
    ) -> Result<(f64, ParticleState), EstimationError> {
        self.check_reference(reference, window)?;
        let mut sim = self.simulator.clone();
        sim.update_materials(self.table(neighborhoods))
            .map_err(EstimationError::sim("materials"))?;
        let m = self.sample_every;
        let mut state = start.clone();
        let mut frames = Vec::with_capacity(window.frames);
        for f in 0..window.frames {
            for k in 0..m {
                let step = (window.first_frame + f) * m + k;
                sim.step(&mut state, step).map_err(EstimationError::sim("forward window"))?;
            }
            frames.push(state.x.clone());
        }
        let sims: Vec<&[Vec3]> = frames.iter().map(Vec::as_slice).collect();
        let refs: Vec<&[Vec3]> = (1..=window.frames)
            .map(|f| reference.samples[window.first_frame + f].x.as_slice())
            .collect();
        Ok((frames_loss(&sims, &refs)?, state))
    }

    /// Loss over reference frames `1..=frames`, simulated from the initial state.
    pub fn rollout_loss(&self, logits: &MaterialLogits, reference: &Trajectory, frames: usize) -> Result<f64, EstimationError> {
        let window = StageWindow { first_frame: 0, frames };
        Ok(self.window_loss(logits.hard_materials(), reference, &self.initial, window)?.0)
    }
}

/// Loss of `window` and its gradient with respect to every learned field,
/// plus the end state of the window.
pub fn estimate_gradients(
    problem: &Problem,
    logits: &MaterialLogits,
    reference: &Trajectory,
    start: &ParticleState,
    window: StageWindow,
    temperature: f64,
) -> Result<(f64, LogitGradient, ParticleState), EstimationError> {
    problem.check_reference(reference, window)?;
    if logits.len() != problem.partition.len() {
        return Err(EstimationError::ShapeMismatch(format!(
            "{} logit rows for {} neighbourhoods",
            logits.len(),
            problem.partition.len()
        )));
    }
    let mut sim = problem.simulator.clone();
    sim.update_materials(problem.table(logits.hard_materials()))
        .map_err(EstimationError::sim("materials"))?;
    let m = problem.sample_every;
    let n_steps = window.frames * m;
    let first_step = window.first_frame * m;
    let (end, tape) = sim
        .run_taped(start.clone(), n_steps, first_step)
        .map_err(EstimationError::sim("forward window"))?;

    let n = start.len();
    let scale = 1.0 / (window.frames * n).max(1) as f64;
    let post = |k: usize| if k + 1 < n_steps { &tape.states[k + 1] } else { &end };
    let mut loss = 0.0;
    let mut bar = StepCotangent::zeros(n);
    let mut materials_bar = vec![MaterialCotangent::default(); sim.materials().len()];
    for k in (0..n_steps).rev() {
        if (k + 1) % m == 0 {
            let r = &reference.samples[window.first_frame + (k + 1) / m].x;
            let x = &post(k).x;
            for p in 0..n {
                let d = x[p] - r[p];
                loss += d.norm_squared() * scale;
                bar.x[p] += 2.0 * scale * d;
            }
        }
        bar = sim
            .step_vjp(&tape.states[k], &bar, &mut materials_bar, first_step + k)
            .map_err(EstimationError::sim("reverse window"))?;
    }

    let mut grad = LogitGradient::zeros(logits.len());
    for j in 0..logits.len() {
        let mb = &materials_bar[j];
        grad.elastic[j] = ste_backward(&logits.elastic[j], &mb.elastic, temperature);
        grad.plastic[j] = ste_backward(&logits.plastic[j], &mb.plastic, temperature);
        let [mu_e, mu_nu, la_e, la_nu] = logits.params(j).lame_partials();
        let (de, dnu) = logits.param_jacobian(j);
        grad.log_e[j] = (mb.mu * mu_e + mb.lambda * la_e) * de;
        grad.nu_logit[j] = (mb.mu * mu_nu + mb.lambda * la_nu) * dnu;
    }
    Ok((loss, grad, end))
}
