use crate::constitutive::{
    BlendedMaterial, ElasticModelId, MaterialSpec, PhysicalParams, PlasticModelId, DEFAULT_FRICTION_ANGLE_DEG, DEFAULT_YIELD_STRESS,
};

/// Learned values per neighbourhood.
pub const PARAMS_PER_NEIGHBORHOOD: usize = 9;

const LOG_E_BOUND: f64 = 700.0;
const NU_MIN: f64 = 1e-6;
const NU_MAX: f64 = 0.5 - 1e-6;

/// Fixed plasticity constants of one neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasticConstants {
    pub friction_angle: f64,
    pub yield_stress: f64,
}

impl Default for PlasticConstants {
    fn default() -> Self {
        Self {
            friction_angle: DEFAULT_FRICTION_ANGLE_DEG,
            yield_stress: DEFAULT_YIELD_STRESS,
        }
    }
}

/// Per-neighbourhood category logits and unconstrained physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLogits {
    pub elastic: Vec<[f64; 3]>,
    pub plastic: Vec<[f64; 4]>,
    pub log_e: Vec<f64>,
    pub nu_logit: Vec<f64>,
    pub constants: Vec<PlasticConstants>,
}

/// Gradient of a scalar with respect to every learned field.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGradient {
    pub elastic: Vec<[f64; 3]>,
    pub plastic: Vec<[f64; 4]>,
    pub log_e: Vec<f64>,
    pub nu_logit: Vec<f64>,
}

impl LogitGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            elastic: vec![[0.0; 3]; n],
            plastic: vec![[0.0; 4]; n],
            log_e: vec![0.0; n],
            nu_logit: vec![0.0; n],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.elastic, &self.plastic, &self.log_e, &self.nu_logit)
    }
}

fn flatten(elastic: &[[f64; 3]], plastic: &[[f64; 4]], log_e: &[f64], nu: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(elastic.len() * PARAMS_PER_NEIGHBORHOOD);
    for j in 0..elastic.len() {
        out.extend_from_slice(&elastic[j]);
        out.extend_from_slice(&plastic[j]);
        out.push(log_e[j]);
        out.push(nu[j]);
    }
    out
}

pub fn youngs_from_log(log_e: f64) -> f64 {
    log_e.clamp(-LOG_E_BOUND, LOG_E_BOUND).exp()
}

pub fn poisson_from_logit(q: f64) -> f64 {
    (0.5 / (1.0 + (-q).exp())).clamp(NU_MIN, NU_MAX)
}

/// Inverse of [`poisson_from_logit`] inside the clamp range.
pub fn logit_from_poisson(nu: f64) -> f64 {
    let s = 2.0 * nu.clamp(NU_MIN, NU_MAX);
    (s / (1.0 - s)).ln()
}

/// Softmax of `z / temperature`.
pub fn softmax<const K: usize>(z: &[f64; K], temperature: f64) -> [f64; K] {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; K];
    let mut sum = 0.0;
    for k in 0..K {
        out[k] = ((z[k] - m) / temperature).exp();
        sum += out[k];
    }
    out.map(|v| v / sum)
}

/// First index of the maximum.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = k;
        }
    }
    best
}

/// Straight-through backward pass: the cotangent of the selection weights
/// pulled back through `softmax(z / temperature)`.
pub fn ste_backward<const K: usize>(z: &[f64; K], w_bar: &[f64; K], temperature: f64) -> [f64; K] {
    let s = softmax(z, temperature);
    let mean: f64 = (0..K).map(|k| s[k] * w_bar[k]).sum();
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = s[k] / temperature * (w_bar[k] - mean);
    }
    out
}

fn one_hot<const K: usize>(k: usize) -> [f64; K] {
    let mut out = [0.0; K];
    out[k] = 1.0;
    out
}

impl MaterialLogits {
    /// Uniform category logits (so the first model of each head is
    /// selected) with the given starting parameters.
    pub fn uniform(params: &[PhysicalParams]) -> Self {
        Self {
            elastic: vec![[0.0; 3]; params.len()],
            plastic: vec![[0.0; 4]; params.len()],
            log_e: params.iter().map(|p| p.youngs_modulus().ln()).collect(),
            nu_logit: params.iter().map(|p| logit_from_poisson(p.poisson_ratio())).collect(),
            constants: params
                .iter()
                .map(|p| PlasticConstants {
                    friction_angle: p.friction_angle,
                    yield_stress: p.yield_stress,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.elastic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elastic.is_empty()
    }

    pub fn params(&self, j: usize) -> PhysicalParams {
        let c = self.constants[j];
        PhysicalParams::new(youngs_from_log(self.log_e[j]), poisson_from_logit(self.nu_logit[j]))
            .and_then(|p| p.with_friction_angle(c.friction_angle))
            .and_then(|p| p.with_yield_stress(c.yield_stress))
            .expect("mapped parameters are always admissible")
    }

    /// Derivatives of `(E, nu)` with respect to `(log_e, nu_logit)`.
    pub fn param_jacobian(&self, j: usize) -> (f64, f64) {
        let le = self.log_e[j];
        let de = if le.abs() < LOG_E_BOUND { le.exp() } else { 0.0 };
        let s = 1.0 / (1.0 + (-self.nu_logit[j]).exp());
        let nu = 0.5 * s;
        let dnu = if nu > NU_MIN && nu < NU_MAX { 0.5 * s * (1.0 - s) } else { 0.0 };
        (de, dnu)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.elastic, &self.plastic, &self.log_e, &self.nu_logit)
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len() * PARAMS_PER_NEIGHBORHOOD);
        for (j, c) in flat.chunks_exact(PARAMS_PER_NEIGHBORHOOD).enumerate() {
            self.elastic[j].copy_from_slice(&c[0..3]);
            self.plastic[j].copy_from_slice(&c[3..7]);
            self.log_e[j] = c[7];
            self.nu_logit[j] = c[8];
        }
    }

    /// Hard material of every neighbourhood.
    pub fn hard_materials(&self) -> Vec<BlendedMaterial> {
        (0..self.len())
            .map(|j| BlendedMaterial::from_spec(&select_material(self, j)))
            .collect()
    }

    /// Selection whose forward value is the hard choice at `anchor` and whose
    /// weights move with `softmax(self / temperature)` away from it. Equal to
    /// the hard material when `self == anchor`.
    pub fn surrogate(&self, j: usize, anchor: &MaterialLogits, temperature: f64) -> BlendedMaterial {
        let mut elastic: [f64; 3] = one_hot(argmax(&anchor.elastic[j]));
        let mut plastic: [f64; 4] = one_hot(argmax(&anchor.plastic[j]));
        let (se, se0) = (softmax(&self.elastic[j], temperature), softmax(&anchor.elastic[j], temperature));
        let (sp, sp0) = (softmax(&self.plastic[j], temperature), softmax(&anchor.plastic[j], temperature));
        for k in 0..3 {
            elastic[k] += se[k] - se0[k];
        }
        for k in 0..4 {
            plastic[k] += sp[k] - sp0[k];
        }
        BlendedMaterial {
            elastic,
            plastic,
            params: self.params(j),
        }
    }
}

/// Hard selection for one neighbourhood: the first maximal logit of each head.
pub fn select_material(logits: &MaterialLogits, neighborhood: usize) -> MaterialSpec {
    let e = ElasticModelId::from_index(argmax(&logits.elastic[neighborhood])).expect("three elastic heads");
    let p = PlasticModelId::from_index(argmax(&logits.plastic[neighborhood])).expect("four plastic heads");
    MaterialSpec::new(e, p, logits.params(neighborhood))
}
