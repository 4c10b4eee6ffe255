use super::elastic::positive_stretches;
use super::isotropic::{assemble, isotropic_vjp, PrincipalJacobian};
use super::{ConstitutiveError, PhysicalParams, PlasticModelId};
use crate::dual::Scalar;
use crate::tensor::{inverse_transpose, svd3, Mat3, TensorError, DEGENERATE_DET};

/// Deviatoric log-strains shorter than this define no flow direction.
const MIN_DEVIATOR_NORM: f64 = 1e-12;

pub fn return_identity(f_trial: &Mat3) -> Mat3 {
    *f_trial
}

/// `α = √(2/3) · 2 sin φ / (3 − sin φ)` for a friction angle in degrees.
pub fn drucker_prager_alpha(friction_angle_deg: f64) -> f64 {
    let s = friction_angle_deg.to_radians().sin();
    (2.0_f64 / 3.0).sqrt() * 2.0 * s / (3.0 - s)
}

pub fn return_drucker_prager(f_trial: &Mat3, params: &PhysicalParams) -> Result<Mat3, ConstitutiveError> {
    svd_return(PlasticModelId::DruckerPrager, f_trial, params)
}

pub fn return_von_mises(f_trial: &Mat3, params: &PhysicalParams) -> Result<Mat3, ConstitutiveError> {
    svd_return(PlasticModelId::VonMises, f_trial, params)
}

/// `ψ(F) = J^{1/3} I`
pub fn return_fluid(f_trial: &Mat3) -> Result<Mat3, ConstitutiveError> {
    let j = checked_det(f_trial)?;
    Ok(Mat3::identity() * j.cbrt())
}

fn checked_det(f: &Mat3) -> Result<f64, ConstitutiveError> {
    let j = f.determinant();
    if !(j >= DEGENERATE_DET) {
        return Err(TensorError::SingularInput { det: j }.into());
    }
    Ok(j)
}

fn svd_return(model: PlasticModelId, f_trial: &Mat3, params: &PhysicalParams) -> Result<Mat3, ConstitutiveError> {
    checked_det(f_trial)?;
    let svd = svd3(f_trial);
    let sigma = positive_stretches(&svd.sigma)?;
    let z = plastic_principal(model, sigma, params.mu(), params.lambda(), params)?;
    Ok(assemble(&svd, &z))
}

/// Projected principal stretches `Z(Σ)` for the two yield-surface models.
/// Identity and fluid are handled without an SVD and return `s` unchanged here.
pub(crate) fn plastic_principal<S: Scalar>(
    model: PlasticModelId,
    s: [S; 3],
    mu: S,
    lambda: S,
    params: &PhysicalParams,
) -> Result<[S; 3], ConstitutiveError> {
    let eps = s.map(|x| x.ln());
    let tr = eps[0] + eps[1] + eps[2];
    match model {
        PlasticModelId::DruckerPrager => {
            if tr.re() > 0.0 {
                return Ok([S::cst(1.0); 3]);
            }
            let hat = eps.map(|e| e - tr / 3.0);
            let norm_sq = hat[0] * hat[0] + hat[1] * hat[1] + hat[2] * hat[2];
            if norm_sq.re() < MIN_DEVIATOR_NORM * MIN_DEVIATOR_NORM {
                return Ok(s);
            }
            let norm = norm_sq.sqrt();
            let alpha = drucker_prager_alpha(params.friction_angle);
            let delta_gamma = norm + tr * (lambda * 3.0 + mu * 2.0) / (mu * 2.0) * alpha;
            if delta_gamma.re() <= 0.0 {
                return Ok(s);
            }
            Ok([0, 1, 2].map(|i| (eps[i] - delta_gamma * hat[i] / norm).exp()))
        }
        PlasticModelId::VonMises => {
            let hat = eps.map(|e| e - tr / 3.0);
            let norm_sq = hat[0] * hat[0] + hat[1] * hat[1] + hat[2] * hat[2];
            if norm_sq.re() < MIN_DEVIATOR_NORM * MIN_DEVIATOR_NORM {
                return Ok(s);
            }
            let norm = norm_sq.sqrt();
            let delta_gamma = norm - S::cst(params.yield_stress) / (mu * 2.0);
            if delta_gamma.re() <= 0.0 {
                return Ok(s);
            }
            Ok([0, 1, 2].map(|i| (eps[i] - delta_gamma * hat[i] / norm).exp()))
        }
        PlasticModelId::Identity | PlasticModelId::Fluid => Ok(s),
    }
}

/// Cotangent of a return map: returns `(F_trial_bar, mu_bar, lambda_bar)`.
pub(crate) fn plastic_vjp(
    model: PlasticModelId,
    f_trial: &Mat3,
    params: &PhysicalParams,
    f_bar: &Mat3,
) -> Result<(Mat3, f64, f64), ConstitutiveError> {
    match model {
        PlasticModelId::Identity => Ok((*f_bar, 0.0, 0.0)),
        PlasticModelId::Fluid => {
            let j = checked_det(f_trial)?;
            let f_inv_t = inverse_transpose(f_trial)?;
            Ok((j.cbrt() / 3.0 * f_bar.trace() * f_inv_t, 0.0, 0.0))
        }
        PlasticModelId::DruckerPrager | PlasticModelId::VonMises => {
            checked_det(f_trial)?;
            let svd = svd3(f_trial);
            let sigma = positive_stretches(&svd.sigma)?;
            let jac = PrincipalJacobian::evaluate(&sigma, params.mu(), params.lambda(), |s, mu, la| {
                plastic_principal(model, s, mu, la, params)
            })?;
            Ok(isotropic_vjp(&svd, &jac, f_bar))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rotation_z, Vec3};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> PhysicalParams {
        PhysicalParams::new(1e5, 0.3)
            .unwrap()
            .with_friction_angle(30.0)
            .unwrap()
            .with_yield_stress(2e3)
            .unwrap()
    }

    fn random_trial(rng: &mut ChaCha8Rng) -> Mat3 {
        loop {
            let f = Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.4..0.4));
            if f.determinant() > 0.2 {
                return f;
            }
        }
    }

    #[test]
    fn identity_passes_through() {
        let d = Mat3::from_diagonal(&Vec3::new(3.0, 1.0, 1.0));
        assert_eq!(return_identity(&Mat3::identity()), Mat3::identity());
        assert_eq!(return_identity(&d), d);
        let m = Mat3::new(0.3, -1.0, 2.0, 4.0, 0.1, -0.2, 7.0, 8.0, 9.0);
        assert_eq!(return_identity(&m), m);
    }

    #[test]
    fn drucker_prager_expansion_returns_to_rest() {
        let f = Mat3::from_diagonal(&Vec3::new(1.2, 1.1, 1.05));
        assert_relative_eq!(return_drucker_prager(&f, &params()).unwrap(), Mat3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn drucker_prager_keeps_rotations() {
        let r = rotation_z(0.4);
        assert_relative_eq!(return_drucker_prager(&r, &params()).unwrap(), r, epsilon = 1e-12);
    }

    #[test]
    fn drucker_prager_compression_inside_cone_is_elastic() {
        // pure volumetric compression has no deviator, so it never flows
        let f = Mat3::identity() * 0.95;
        assert_relative_eq!(return_drucker_prager(&f, &params()).unwrap(), f, epsilon = 1e-14);
    }

    #[test]
    fn drucker_prager_projects_onto_cone() {
        let p = params();
        let f = Mat3::from_diagonal(&Vec3::new(1.2, 0.8, 0.85));
        let out = return_drucker_prager(&f, &p).unwrap();
        let eps = svd3(&out).sigma.map(f64::ln);
        let tr = eps.sum();
        let hat = eps.add_scalar(-tr / 3.0);
        let alpha = drucker_prager_alpha(30.0);
        let dg = hat.norm() + alpha * (3.0 * p.lambda() + 2.0 * p.mu()) / (2.0 * p.mu()) * tr;
        assert!(dg.abs() < 1e-12, "{dg}");
        assert!((out.determinant() - f.determinant()).abs() < 1e-12);
    }

    #[test]
    fn von_mises_examples() {
        let p = params();
        assert_relative_eq!(return_von_mises(&Mat3::identity(), &p).unwrap(), Mat3::identity(), epsilon = 1e-15);
        // yield strain is 2e3 / (2 mu) ≈ 0.026; this is well below it
        let f = Mat3::from_diagonal(&Vec3::new(1.005, 0.998, 1.0));
        assert_relative_eq!(return_von_mises(&f, &p).unwrap(), f, epsilon = 1e-14);
        let f = Mat3::from_diagonal(&Vec3::new(1.3, 0.9, 1.0));
        let out = return_von_mises(&f, &p).unwrap();
        let eps = svd3(&out).sigma.map(f64::ln);
        let hat = eps.add_scalar(-eps.sum() / 3.0);
        assert_relative_eq!(hat.norm(), p.yield_stress / (2.0 * p.mu()), max_relative = 1e-10);
    }

    #[test]
    fn fluid_examples() {
        let out = return_fluid(&Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0))).unwrap();
        assert_relative_eq!(out, Mat3::identity() * 2f64.cbrt(), epsilon = 1e-15);
        assert!((out[(0, 0)] - 1.259921).abs() < 1e-6);
        assert_eq!(return_fluid(&Mat3::identity()).unwrap(), Mat3::identity());
    }

    #[test]
    fn return_maps_are_idempotent() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let f = random_trial(&mut rng);
            for model in PlasticModelId::ALL {
                let once = model.project(&f, &p).unwrap();
                let twice = model.project(&once, &p).unwrap();
                assert!((twice - once).norm() <= 1e-8, "{model}");
            }
            let fluid = return_fluid(&f).unwrap();
            assert!((fluid.determinant() - f.determinant()).abs() <= 1e-10 * f.determinant());
        }
    }

    #[test]
    fn degenerate_trials_error() {
        let f = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
        for model in [PlasticModelId::DruckerPrager, PlasticModelId::VonMises, PlasticModelId::Fluid] {
            assert!(model.project(&f, &params()).is_err());
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut cases: Vec<Mat3> = (0..60).map(|_| random_trial(&mut rng)).collect();
        cases.push(Mat3::identity() * 0.97);
        cases.push(rotation_z(0.2) * Mat3::from_diagonal(&Vec3::new(1.1, 0.9, 0.9)));
        for f in cases {
            for model in PlasticModelId::ALL {
                let g_bar = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                let (f_bar, mu_bar, lambda_bar) = plastic_vjp(model, &f, &p, &g_bar).unwrap();
                let h = 1e-7;
                for _ in 0..3 {
                    let dir = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                    let fd = (model.project(&(f + h * dir), &p).unwrap() - model.project(&(f - h * dir), &p).unwrap()) / (2.0 * h);
                    let fd = fd.dot(&g_bar);
                    let ad = f_bar.dot(&dir);
                    assert!((fd - ad).abs() <= 1e-5 * (1.0 + fd.abs()), "{model} {f}: {fd} vs {ad}");
                }
                let hm = 1e-2;
                let with = |mu: f64, la: f64| {
                    let mut q = PhysicalParams::from_lame(mu, la);
                    q.friction_angle = p.friction_angle;
                    q.yield_stress = p.yield_stress;
                    model.project(&f, &q).unwrap()
                };
                let dmu = (with(p.mu() + hm, p.lambda()) - with(p.mu() - hm, p.lambda())) / (2.0 * hm);
                let dla = (with(p.mu(), p.lambda() + hm) - with(p.mu(), p.lambda() - hm)) / (2.0 * hm);
                assert!((dmu.dot(&g_bar) - mu_bar).abs() <= 1e-9 + 1e-5 * mu_bar.abs(), "{model}");
                assert!((dla.dot(&g_bar) - lambda_bar).abs() <= 1e-9 + 1e-5 * lambda_bar.abs(), "{model}");
            }
        }
    }
}
