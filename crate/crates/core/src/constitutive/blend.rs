//! Convex mixtures of the expert models.
//!
//! A hard material choice is the special case of one-hot weights. The
//! estimation layer needs the general case because its straight-through
//! gradient is defined through a softened selection, and the reverse pass
//! needs the cotangent of every weight, including the ones that are zero.

use super::elastic::elastic_vjp;
use super::plastic::plastic_vjp;
use super::{ConstitutiveError, ElasticModelId, MaterialSpec, PhysicalParams, PlasticModelId};
use crate::tensor::Mat3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendedMaterial {
    pub elastic: [f64; 3],
    pub plastic: [f64; 4],
    pub params: PhysicalParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressVjp {
    pub f_bar: Mat3,
    pub mu_bar: f64,
    pub lambda_bar: f64,
    pub weight_bar: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectVjp {
    pub f_bar: Mat3,
    pub mu_bar: f64,
    pub lambda_bar: f64,
    pub weight_bar: [f64; 4],
}

impl BlendedMaterial {
    pub fn from_spec(spec: &MaterialSpec) -> Self {
        let mut elastic = [0.0; 3];
        let mut plastic = [0.0; 4];
        elastic[spec.elastic.index()] = 1.0;
        plastic[spec.plastic.index()] = 1.0;
        Self {
            elastic,
            plastic,
            params: spec.params,
        }
    }

    pub fn piola(&self, f: &Mat3) -> Result<Mat3, ConstitutiveError> {
        let mut p = Mat3::zeros();
        for (model, &w) in ElasticModelId::ALL.iter().zip(&self.elastic) {
            if w != 0.0 {
                p += w * model.piola(f, &self.params)?;
            }
        }
        Ok(p)
    }

    pub fn project(&self, f_trial: &Mat3) -> Result<Mat3, ConstitutiveError> {
        let mut out = Mat3::zeros();
        for (model, &w) in PlasticModelId::ALL.iter().zip(&self.plastic) {
            if w != 0.0 {
                out += w * model.project(f_trial, &self.params)?;
            }
        }
        Ok(out)
    }

    /// Models with zero weight that cannot be evaluated at `f` (for example
    /// Neo-Hookean below its Jacobian floor) contribute a zero weight cotangent.
    pub fn piola_vjp(&self, f: &Mat3, p_bar: &Mat3) -> Result<StressVjp, ConstitutiveError> {
        let mut out = StressVjp {
            f_bar: Mat3::zeros(),
            mu_bar: 0.0,
            lambda_bar: 0.0,
            weight_bar: [0.0; 3],
        };
        for (k, model) in ElasticModelId::ALL.into_iter().enumerate() {
            let w = self.elastic[k];
            match model.piola(f, &self.params) {
                Ok(p) => out.weight_bar[k] = p.dot(p_bar),
                Err(e) if w != 0.0 => return Err(e),
                Err(_) => continue,
            }
            if w != 0.0 {
                let (f_bar, mu_bar, lambda_bar) = elastic_vjp(model, f, &self.params, p_bar)?;
                out.f_bar += w * f_bar;
                out.mu_bar += w * mu_bar;
                out.lambda_bar += w * lambda_bar;
            }
        }
        Ok(out)
    }

    pub fn project_vjp(&self, f_trial: &Mat3, g_bar: &Mat3) -> Result<ProjectVjp, ConstitutiveError> {
        let mut out = ProjectVjp {
            f_bar: Mat3::zeros(),
            mu_bar: 0.0,
            lambda_bar: 0.0,
            weight_bar: [0.0; 4],
        };
        for (k, model) in PlasticModelId::ALL.into_iter().enumerate() {
            let w = self.plastic[k];
            match model.project(f_trial, &self.params) {
                Ok(z) => out.weight_bar[k] = z.dot(g_bar),
                Err(e) if w != 0.0 => return Err(e),
                Err(_) => continue,
            }
            if w != 0.0 {
                let (f_bar, mu_bar, lambda_bar) = plastic_vjp(model, f_trial, &self.params, g_bar)?;
                out.f_bar += w * f_bar;
                out.mu_bar += w * mu_bar;
                out.lambda_bar += w * lambda_bar;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mixture(rng: &mut ChaCha8Rng) -> BlendedMaterial {
        let params = PhysicalParams::new(5e4, 0.3).unwrap().with_yield_stress(1.5e3).unwrap();
        BlendedMaterial {
            elastic: [0.6, 0.3, 0.1].map(|w: f64| w + rng.gen_range(-0.05..0.05)),
            plastic: [0.4, 0.2, 0.3, 0.1],
            params,
        }
    }

    #[test]
    fn one_hot_blend_matches_the_spec() {
        let params = PhysicalParams::new(1e5, 0.3).unwrap();
        let f = Mat3::new(1.1, 0.05, 0.0, -0.02, 0.95, 0.1, 0.0, 0.03, 1.02);
        for spec in MaterialSpec::all_combinations(params) {
            let b = BlendedMaterial::from_spec(&spec);
            assert_eq!(b.piola(&f).unwrap(), spec.elastic.piola(&f, &params).unwrap());
            assert_eq!(b.project(&f).unwrap(), spec.plastic.project(&f, &params).unwrap());
        }
    }

    #[test]
    fn blended_vjps_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let b = mixture(&mut rng);
            let f = Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
            let bar = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let dir = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let h = 1e-7;

            let s = b.piola_vjp(&f, &bar).unwrap();
            let fd = (b.piola(&(f + h * dir)).unwrap() - b.piola(&(f - h * dir)).unwrap()).dot(&bar) / (2.0 * h);
            assert!((fd - s.f_bar.dot(&dir)).abs() <= 1e-5 * (1.0 + fd.abs()));
            for k in 0..3 {
                let (mut up, mut down) = (b, b);
                up.elastic[k] += 1e-3;
                down.elastic[k] -= 1e-3;
                let fd = (up.piola(&f).unwrap() - down.piola(&f).unwrap()).dot(&bar) / 2e-3;
                assert!((fd - s.weight_bar[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }

            let p = b.project_vjp(&f, &bar).unwrap();
            let fd = (b.project(&(f + h * dir)).unwrap() - b.project(&(f - h * dir)).unwrap()).dot(&bar) / (2.0 * h);
            assert!((fd - p.f_bar.dot(&dir)).abs() <= 1e-5 * (1.0 + fd.abs()));
            for k in 0..4 {
                let (mut up, mut down) = (b, b);
                up.plastic[k] += 1e-3;
                down.plastic[k] -= 1e-3;
                let fd = (up.project(&f).unwrap() - down.project(&f).unwrap()).dot(&bar) / 2e-3;
                assert!((fd - p.weight_bar[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}
