use super::{estimate_gradients, EstimationError, MaterialLogits, Problem, StageWindow};
use crate::mpm::{ParticleState, Trajectory};

/// Adaptive-moment optimiser with the usual constants
/// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
///
/// The second moment is tracked per group of coordinates (the mean of the
/// squared gradients in the group). With one coordinate per group this is
/// plain Adam. Grouping the logits of a categorical head keeps their relative
/// step sizes, so the most favoured category also moves fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    group: Vec<usize>,
    group_size: Vec<usize>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, n: usize) -> Self {
        Self::grouped(learning_rate, (0..n).collect())
    }

    /// `group[i]` is the group of coordinate `i`; ids must be `0..n_groups`.
    pub fn grouped(learning_rate: f64, group: Vec<usize>) -> Self {
        let n_groups = group.iter().map(|g| g + 1).max().unwrap_or(0);
        let mut group_size = vec![0; n_groups];
        for &g in &group {
            group_size[g] += 1;
        }
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; group.len()],
            v: vec![0.0; n_groups],
            group,
            group_size,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut sq = vec![0.0; self.v.len()];
        for (i, g) in grad.iter().enumerate() {
            sq[self.group[i]] += g * g / self.group_size[self.group[i]] as f64;
        }
        for (v, s) in self.v.iter_mut().zip(sq) {
            *v = self.beta2 * *v + (1.0 - self.beta2) * s;
        }
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            let v = self.v[self.group[i]];
            params[i] -= self.learning_rate * (self.m[i] / c1) / ((v / c2).sqrt() + self.eps);
        }
    }
}

/// Optimiser groups of the flat logit layout: per neighbourhood the elastic
/// head, the plastic head, `log_e` and `nu_logit`.
pub fn logit_groups(n_neighborhoods: usize) -> Vec<usize> {
    (0..n_neighborhoods)
        .flat_map(|j| [0, 0, 0, 1, 1, 1, 1, 2, 3].map(|g| 4 * j + g))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stages: usize,
    pub frames_per_stage: usize,
    pub internal: usize,
    pub outer: usize,
    pub sample_every: usize,
    pub learning_rate: f64,
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stages: 10,
            frames_per_stage: 15,
            internal: 30,
            outer: 5,
            sample_every: 10,
            learning_rate: 5e-5,
            temperature: 1.0,
        }
    }
}

impl TrainConfig {
    /// Reference frames the schedule consumes after the initial one.
    pub fn frames(&self) -> usize {
        self.stages * self.frames_per_stage
    }

    pub fn validate(&self, reference_frames: usize) -> Result<(), EstimationError> {
        let bad = |m: String| Err(EstimationError::Config(m));
        if self.stages == 0 || self.frames_per_stage == 0 || self.internal == 0 || self.outer == 0 || self.sample_every == 0 {
            return bad("stages, frames per stage, iterations and stride must all be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if self.frames() + 1 > reference_frames {
            return Err(EstimationError::ShapeMismatch(format!(
                "{} stages of {} frames need {} reference frames, got {reference_frames}",
                self.stages,
                self.frames_per_stage,
                self.frames() + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub outer: usize,
    pub stage: usize,
    pub internal: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub logits: MaterialLogits,
    pub log: Vec<LossRecord>,
    /// Loss over every scheduled frame, rolled out from the initial state.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Grouped multi-pass training. Every internal iteration of a stage restarts
/// from the stage's checkpoint; the next stage starts from the end state of
/// the last internal iteration. `observer` sees each record together with the
/// state the iteration started from.
pub fn train(
    problem: &Problem,
    reference: &Trajectory,
    initial: MaterialLogits,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&LossRecord, &ParticleState),
) -> Result<TrainReport, EstimationError> {
    if cfg.sample_every != problem.sample_every {
        return Err(EstimationError::Config(format!(
            "config stride {} differs from the problem stride {}",
            cfg.sample_every, problem.sample_every
        )));
    }
    cfg.validate(reference.len())?;
    let initial_loss = problem.rollout_loss(&initial, reference, cfg.frames())?;
    let mut logits = initial;
    let mut flat = logits.to_flat();
    let mut adam = Adam::grouped(cfg.learning_rate, logit_groups(logits.len()));
    let mut log = Vec::with_capacity(cfg.outer * cfg.stages * cfg.internal);
    for outer in 0..cfg.outer {
        let mut checkpoint = problem.initial.clone();
        for stage in 0..cfg.stages {
            let window = StageWindow {
                first_frame: stage * cfg.frames_per_stage,
                frames: cfg.frames_per_stage,
            };
            let mut end = None;
            for internal in 0..cfg.internal {
                let (loss, grad, state) =
                    estimate_gradients(problem, &logits, reference, &checkpoint, window, cfg.temperature).map_err(|e| match e {
                        EstimationError::Simulation { context, source } => EstimationError::Simulation {
                            context: format!("outer {outer}, stage {stage}, iteration {internal}: {context}"),
                            source,
                        },
                        other => other,
                    })?;
                let record = LossRecord {
                    outer,
                    stage,
                    internal,
                    loss,
                };
                observer(&record, &checkpoint);
                log.push(record);
                adam.step(&mut flat, &grad.to_flat());
                logits.set_flat(&flat);
                end = Some(state);
            }
            checkpoint = end.expect("at least one internal iteration");
        }
    }
    let final_loss = problem.rollout_loss(&logits, reference, cfg.frames())?;
    Ok(TrainReport {
        logits,
        log,
        initial_loss,
        final_loss,
    })
}
