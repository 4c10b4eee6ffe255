//! The material zoo: three hyperelastic stress laws, four plasticity return
//! maps, and the parameter plumbing shared between them.
//!
//! Every stress law maps a deformation gradient `F` to the first
//! Piola-Kirchhoff stress `P`; every return map projects a trial deformation
//! gradient back onto its admissible set. All twelve elastic × plastic pairs
//! are valid [`MaterialSpec`]s.

mod blend;
mod elastic;
mod isotropic;
mod plastic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

pub use blend::{BlendedMaterial, ProjectVjp, StressVjp};
pub use elastic::{
    cauchy_from_piola, fixed_corotated_energy, fixed_corotated_piola, neo_hookean_energy, neo_hookean_piola, stvk_energy, stvk_piola,
    NEO_HOOKEAN_J_MIN,
};
pub use plastic::{drucker_prager_alpha, return_drucker_prager, return_fluid, return_identity, return_von_mises};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("Poisson ratio {0} outside [0, 0.5)")]
    InvalidPoissonRatio(f64),
    #[error("Young's modulus {0} must be positive and finite")]
    InvalidYoungsModulus(f64),
    #[error("invalid material parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("degenerate Jacobian J = {0:e}")]
    DegenerateJacobian(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElasticModelId {
    #[serde(rename = "fixed_corotated")]
    FixedCorotated,
    #[serde(rename = "neo_hookean")]
    NeoHookean,
    #[serde(rename = "stvk")]
    StVK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlasticModelId {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "drucker_prager")]
    DruckerPrager,
    #[serde(rename = "von_mises")]
    VonMises,
    #[serde(rename = "fluid")]
    Fluid,
}

impl ElasticModelId {
    pub const ALL: [ElasticModelId; 3] = [Self::FixedCorotated, Self::NeoHookean, Self::StVK];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FixedCorotated => "fixed_corotated",
            Self::NeoHookean => "neo_hookean",
            Self::StVK => "stvk",
        }
    }

    pub fn piola(self, f: &crate::Mat3, params: &PhysicalParams) -> Result<crate::Mat3, ConstitutiveError> {
        match self {
            Self::FixedCorotated => fixed_corotated_piola(f, params),
            Self::NeoHookean => neo_hookean_piola(f, params),
            Self::StVK => stvk_piola(f, params),
        }
    }
}

impl PlasticModelId {
    pub const ALL: [PlasticModelId; 4] = [Self::Identity, Self::DruckerPrager, Self::VonMises, Self::Fluid];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::DruckerPrager => "drucker_prager",
            Self::VonMises => "von_mises",
            Self::Fluid => "fluid",
        }
    }

    pub fn project(self, f_trial: &crate::Mat3, params: &PhysicalParams) -> Result<crate::Mat3, ConstitutiveError> {
        match self {
            Self::Identity => Ok(return_identity(f_trial)),
            Self::DruckerPrager => return_drucker_prager(f_trial, params),
            Self::VonMises => return_von_mises(f_trial, params),
            Self::Fluid => return_fluid(f_trial),
        }
    }
}

impl std::fmt::Display for ElasticModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::fmt::Display for PlasticModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ElasticModelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown elastic model `{s}`"))
    }
}

impl std::str::FromStr for PlasticModelId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown plastic model `{s}`"))
    }
}

pub const DEFAULT_FRICTION_ANGLE_DEG: f64 = 30.0;
pub const DEFAULT_YIELD_STRESS: f64 = 1.0e3;

/// Lamé parameters `(mu, lambda)` from Young's modulus and Poisson's ratio.
pub fn lame_from_young_poisson(e: f64, nu: f64) -> Result<(f64, f64), ConstitutiveError> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(ConstitutiveError::InvalidYoungsModulus(e));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(ConstitutiveError::InvalidPoissonRatio(nu));
    }
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((mu, lambda))
}

/// Physical parameters of one material. `mu` and `lambda` are always derived
/// from `youngs_modulus` and `poisson_ratio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    youngs_modulus: f64,
    poisson_ratio: f64,
    mu: f64,
    lambda: f64,
    /// Drucker-Prager friction angle in degrees.
    pub friction_angle: f64,
    /// Von Mises yield stress in Pa.
    pub yield_stress: f64,
}

impl PhysicalParams {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64) -> Result<Self, ConstitutiveError> {
        let (mu, lambda) = lame_from_young_poisson(youngs_modulus, poisson_ratio)?;
        Ok(Self {
            youngs_modulus,
            poisson_ratio,
            mu,
            lambda,
            friction_angle: DEFAULT_FRICTION_ANGLE_DEG,
            yield_stress: DEFAULT_YIELD_STRESS,
        })
    }

    pub fn with_friction_angle(mut self, degrees: f64) -> Result<Self, ConstitutiveError> {
        if !(0.0..90.0).contains(&degrees) {
            return Err(ConstitutiveError::InvalidParameter {
                name: "friction_angle",
                value: degrees,
            });
        }
        self.friction_angle = degrees;
        Ok(self)
    }

    pub fn with_yield_stress(mut self, yield_stress: f64) -> Result<Self, ConstitutiveError> {
        if !(yield_stress > 0.0 && yield_stress.is_finite()) {
            return Err(ConstitutiveError::InvalidParameter {
                name: "yield_stress",
                value: yield_stress,
            });
        }
        self.yield_stress = yield_stress;
        Ok(self)
    }

    pub fn youngs_modulus(&self) -> f64 {
        self.youngs_modulus
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.poisson_ratio
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Test helper: parameters with the given Lamé pair directly.
    pub fn from_lame(mu: f64, lambda: f64) -> Self {
        let youngs_modulus = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
        let poisson_ratio = lambda / (2.0 * (lambda + mu));
        Self {
            youngs_modulus,
            poisson_ratio,
            mu,
            lambda,
            friction_angle: DEFAULT_FRICTION_ANGLE_DEG,
            yield_stress: DEFAULT_YIELD_STRESS,
        }
    }

    /// `(d mu / dE, d mu / dnu, d lambda / dE, d lambda / dnu)`.
    pub fn lame_partials(&self) -> [f64; 4] {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        let a = 1.0 + nu;
        let b = 1.0 - 2.0 * nu;
        [
            1.0 / (2.0 * a),
            -e / (2.0 * a * a),
            nu / (a * b),
            e * (1.0 + 2.0 * nu * nu) / (a * a * b * b),
        ]
    }

    /// P-wave speed for a material of the given density.
    pub fn wave_speed(&self, density: f64) -> f64 {
        ((self.lambda + 2.0 * self.mu) / density).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSpec {
    pub elastic: ElasticModelId,
    pub plastic: PlasticModelId,
    pub params: PhysicalParams,
}

impl MaterialSpec {
    pub fn new(elastic: ElasticModelId, plastic: PlasticModelId, params: PhysicalParams) -> Self {
        Self { elastic, plastic, params }
    }

    /// All twelve elastic × plastic pairs with shared parameters.
    pub fn all_combinations(params: PhysicalParams) -> Vec<MaterialSpec> {
        ElasticModelId::ALL
            .into_iter()
            .flat_map(|e| PlasticModelId::ALL.into_iter().map(move |p| Self::new(e, p, params)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lame_examples() {
        let (mu, lambda) = lame_from_young_poisson(1e5, 0.3).unwrap();
        assert_relative_eq!(mu, 1e5 / 2.6, max_relative = 1e-15);
        assert_relative_eq!(lambda, 3e4 / (1.3 * 0.4), max_relative = 1e-15);
        assert!((mu - 38461.54).abs() < 0.01);
        assert!((lambda - 57692.31).abs() < 0.01);

        assert_eq!(lame_from_young_poisson(2.0, 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(lame_from_young_poisson(1.0, 0.5), Err(ConstitutiveError::InvalidPoissonRatio(0.5)));
        assert!(lame_from_young_poisson(1.0, -0.1).is_err());
        assert!(lame_from_young_poisson(0.0, 0.2).is_err());
    }

    #[test]
    fn physical_params_keep_lame_in_sync() {
        let p = PhysicalParams::new(2.5e5, 0.25).unwrap();
        let (mu, lambda) = lame_from_young_poisson(2.5e5, 0.25).unwrap();
        assert_eq!(p.mu(), mu);
        assert_eq!(p.lambda(), lambda);
        let q = PhysicalParams::from_lame(p.mu(), p.lambda());
        assert_relative_eq!(q.youngs_modulus(), 2.5e5, max_relative = 1e-12);
        assert_relative_eq!(q.poisson_ratio(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn lame_partials_match_finite_differences() {
        let p = PhysicalParams::new(3e4, 0.35).unwrap();
        let d = p.lame_partials();
        let h_e = 1e-2;
        let h_nu = 1e-7;
        let lp = |e, nu| lame_from_young_poisson(e, nu).unwrap();
        let (mu_pe, la_pe) = lp(3e4 + h_e, 0.35);
        let (mu_me, la_me) = lp(3e4 - h_e, 0.35);
        let (mu_pn, la_pn) = lp(3e4, 0.35 + h_nu);
        let (mu_mn, la_mn) = lp(3e4, 0.35 - h_nu);
        assert_relative_eq!(d[0], (mu_pe - mu_me) / (2.0 * h_e), max_relative = 1e-6);
        assert_relative_eq!(d[1], (mu_pn - mu_mn) / (2.0 * h_nu), max_relative = 1e-6);
        assert_relative_eq!(d[2], (la_pe - la_me) / (2.0 * h_e), max_relative = 1e-6);
        assert_relative_eq!(d[3], (la_pn - la_mn) / (2.0 * h_nu), max_relative = 1e-6);
    }

    #[test]
    fn all_twelve_combinations_are_constructible() {
        let combos = MaterialSpec::all_combinations(PhysicalParams::new(1e5, 0.3).unwrap());
        assert_eq!(combos.len(), 12);
        let unique: std::collections::HashSet<_> = combos.iter().map(|m| (m.elastic, m.plastic)).collect();
        assert_eq!(unique.len(), 12);
    }

    #[test]
    fn model_names_round_trip() {
        for m in ElasticModelId::ALL {
            assert_eq!(m.name().parse::<ElasticModelId>().unwrap(), m);
            assert_eq!(ElasticModelId::from_index(m.index()), Some(m));
        }
        for m in PlasticModelId::ALL {
            assert_eq!(m.name().parse::<PlasticModelId>().unwrap(), m);
            assert_eq!(PlasticModelId::from_index(m.index()), Some(m));
        }
    }
}
