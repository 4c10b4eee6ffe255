use super::isotropic::{assemble, isotropic_vjp, PrincipalJacobian};
use super::{ConstitutiveError, ElasticModelId, PhysicalParams};
use crate::dual::Scalar;
use crate::tensor::{inverse_transpose, polar_decompose, svd3, Mat3, TensorError, DEGENERATE_DET};

/// Neo-Hookean stress is only evaluated for `J` above this.
pub const NEO_HOOKEAN_J_MIN: f64 = 0.05;

/// `P = 2μ(F − R) + λJ(J − 1)F⁻ᵀ` with `R` from the polar decomposition.
pub fn fixed_corotated_piola(f: &Mat3, params: &PhysicalParams) -> Result<Mat3, ConstitutiveError> {
    let j = f.determinant();
    let (r, _) = polar_decompose(f)?;
    let f_inv_t = inverse_transpose(f)?;
    Ok(2.0 * params.mu() * (f - r) + params.lambda() * j * (j - 1.0) * f_inv_t)
}

/// `P = μ(F − F⁻ᵀ) + λ log(J) F⁻ᵀ`
pub fn neo_hookean_piola(f: &Mat3, params: &PhysicalParams) -> Result<Mat3, ConstitutiveError> {
    let j = f.determinant();
    if !(j > NEO_HOOKEAN_J_MIN) {
        return Err(ConstitutiveError::DegenerateJacobian(j));
    }
    let f_inv_t = inverse_transpose(f)?;
    Ok(params.mu() * (f - f_inv_t) + params.lambda() * j.ln() * f_inv_t)
}

/// `P = U(2μΣ⁻¹ lnΣ + λ tr(lnΣ) Σ⁻¹)Vᵀ`
pub fn stvk_piola(f: &Mat3, params: &PhysicalParams) -> Result<Mat3, ConstitutiveError> {
    let svd = svd3(f);
    let sigma = positive_stretches(&svd.sigma)?;
    let g = elastic_principal(ElasticModelId::StVK, sigma, params.mu(), params.lambda())?;
    Ok(assemble(&svd, &g))
}

/// Cauchy stress `σ = P Fᵀ / det(F)`.
pub fn cauchy_from_piola(f: &Mat3, p: &Mat3) -> Result<Mat3, ConstitutiveError> {
    let j = f.determinant();
    if !(j >= DEGENERATE_DET) {
        return Err(TensorError::SingularInput { det: j }.into());
    }
    Ok(p * f.transpose() / j)
}

pub fn fixed_corotated_energy(f: &Mat3, params: &PhysicalParams) -> Result<f64, ConstitutiveError> {
    let j = f.determinant();
    if !(j >= DEGENERATE_DET) {
        return Err(TensorError::SingularInput { det: j }.into());
    }
    let s = svd3(f).sigma;
    let shear: f64 = s.iter().map(|x| (x - 1.0).powi(2)).sum();
    Ok(params.mu() * shear + 0.5 * params.lambda() * (j - 1.0).powi(2))
}

pub fn neo_hookean_energy(f: &Mat3, params: &PhysicalParams) -> Result<f64, ConstitutiveError> {
    let j = f.determinant();
    if !(j > NEO_HOOKEAN_J_MIN) {
        return Err(ConstitutiveError::DegenerateJacobian(j));
    }
    let ln_j = j.ln();
    let mu = params.mu();
    Ok(0.5 * mu * (f.norm_squared() - 3.0) - mu * ln_j + 0.5 * params.lambda() * ln_j * ln_j)
}

/// Hencky-strain energy whose derivative is the StVK stress above.
pub fn stvk_energy(f: &Mat3, params: &PhysicalParams) -> Result<f64, ConstitutiveError> {
    let svd = svd3(f);
    let s = positive_stretches(&svd.sigma)?;
    let ln = s.map(f64::ln);
    let tr: f64 = ln.iter().sum();
    let sq: f64 = ln.iter().map(|x| x * x).sum();
    Ok(params.mu() * sq + 0.5 * params.lambda() * tr * tr)
}

pub(crate) fn positive_stretches(sigma: &crate::Vec3) -> Result<[f64; 3], ConstitutiveError> {
    for &value in sigma.iter() {
        if !(value > 0.0) {
            return Err(TensorError::NonPositiveSingularValue { value }.into());
        }
    }
    Ok([sigma[0], sigma[1], sigma[2]])
}

/// Principal Piola stresses as a function of the principal stretches.
pub(crate) fn elastic_principal<S: Scalar>(model: ElasticModelId, s: [S; 3], mu: S, lambda: S) -> Result<[S; 3], ConstitutiveError> {
    let j = s[0] * s[1] * s[2];
    Ok(match model {
        ElasticModelId::FixedCorotated => {
            let vol = lambda * (j - 1.0) * j;
            s.map(|si| mu * (si - 1.0) * 2.0 + vol / si)
        }
        ElasticModelId::NeoHookean => {
            if !(j.re() > NEO_HOOKEAN_J_MIN) {
                return Err(ConstitutiveError::DegenerateJacobian(j.re()));
            }
            let vol = lambda * j.ln();
            s.map(|si| mu * (si - S::cst(1.0) / si) + vol / si)
        }
        ElasticModelId::StVK => {
            let ln = s.map(|si| si.ln());
            let tr = ln[0] + ln[1] + ln[2];
            [0, 1, 2].map(|i| (mu * ln[i] * 2.0 + lambda * tr) / s[i])
        }
    })
}

/// Cotangent of the stress law: returns `(F_bar, mu_bar, lambda_bar)`.
pub(crate) fn elastic_vjp(
    model: ElasticModelId,
    f: &Mat3,
    params: &PhysicalParams,
    p_bar: &Mat3,
) -> Result<(Mat3, f64, f64), ConstitutiveError> {
    let j = f.determinant();
    if !(j >= DEGENERATE_DET) {
        return Err(TensorError::SingularInput { det: j }.into());
    }
    let svd = svd3(f);
    let sigma = positive_stretches(&svd.sigma)?;
    let jac = PrincipalJacobian::evaluate(&sigma, params.mu(), params.lambda(), |s, mu, la| {
        elastic_principal(model, s, mu, la)
    })?;
    Ok(isotropic_vjp(&svd, &jac, p_bar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rotation_z, Vec3};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_lame() -> PhysicalParams {
        PhysicalParams::from_lame(1.0, 1.0)
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let angle = rng.gen_range(-3.0..3.0);
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    fn random_deformation(rng: &mut ChaCha8Rng, min_det: f64) -> Mat3 {
        loop {
            let f = Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
            if f.determinant() > min_det {
                return f;
            }
        }
    }

    fn all_piola(f: &Mat3, p: &PhysicalParams) -> [Mat3; 3] {
        ElasticModelId::ALL.map(|m| m.piola(f, p).unwrap())
    }

    #[test]
    fn hand_evaluated_examples() {
        let f = Mat3::from_diagonal(&Vec3::new(1.1, 1.0, 1.0));
        let p = unit_lame();
        let fc = fixed_corotated_piola(&f, &p).unwrap();
        assert_relative_eq!(fc, Mat3::from_diagonal(&Vec3::new(0.3, 0.11, 0.11)), epsilon = 1e-12);

        let l = 1.1f64.ln();
        let nh = neo_hookean_piola(&f, &p).unwrap();
        let expected = Mat3::from_diagonal(&Vec3::new(1.1 - 1.0 / 1.1 + l / 1.1, l, l));
        assert_relative_eq!(nh, expected, epsilon = 1e-12);
        assert!((nh[(0, 0)] - 0.27755).abs() < 1e-5);
        assert!((nh[(1, 1)] - 0.09531).abs() < 1e-5);

        let st = stvk_piola(&f, &p).unwrap();
        assert_relative_eq!(st, Mat3::from_diagonal(&Vec3::new(3.0 * l / 1.1, l, l)), epsilon = 1e-12);
        assert!((st[(0, 0)] - 0.25994).abs() < 1e-5);
    }

    #[test]
    fn zero_stress_at_rest_and_under_rotation() {
        let p = PhysicalParams::new(1e5, 0.3).unwrap();
        for s in all_piola(&Mat3::identity(), &p) {
            assert!(s.norm() <= 1e-12 * p.mu());
        }
        for s in all_piola(&rotation_z(0.7), &p) {
            assert!(s.norm() <= 1e-8 * p.mu());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            for s in all_piola(&r, &p) {
                assert!(s.norm() <= 1e-8 * p.mu(), "{}", s.norm());
            }
        }
    }

    #[test]
    fn cauchy_examples() {
        let p = Mat3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        assert_eq!(cauchy_from_piola(&Mat3::identity(), &p).unwrap(), p);
        assert_eq!(cauchy_from_piola(&Mat3::identity(), &Mat3::zeros()).unwrap(), Mat3::zeros());
        let f = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        let p = Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(cauchy_from_piola(&f, &p).unwrap(), Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 0.0)));
        assert!(cauchy_from_piola(&Mat3::zeros(), &p).is_err());
    }

    #[test]
    fn cauchy_stress_is_symmetric() {
        let p = PhysicalParams::new(1e5, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let f = random_deformation(&mut rng, 0.3);
            for piola in all_piola(&f, &p) {
                let sigma = cauchy_from_piola(&f, &piola).unwrap();
                assert!((sigma - sigma.transpose()).norm() <= 1e-7 * sigma.norm());
            }
        }
    }

    #[test]
    fn neo_hookean_rejects_collapsed_volume() {
        let f = Mat3::from_diagonal(&Vec3::new(0.3, 0.3, 0.3));
        assert!(matches!(
            neo_hookean_piola(&f, &unit_lame()),
            Err(ConstitutiveError::DegenerateJacobian(_))
        ));
    }

    #[test]
    fn stvk_rejects_inverted_input() {
        let f = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(stvk_piola(&f, &unit_lame()).is_err());
    }

    fn central_energy_gradient(energy: impl Fn(&Mat3) -> f64, f: &Mat3, h: f64) -> Mat3 {
        Mat3::from_fn(|r, c| {
            let mut fp = *f;
            let mut fm = *f;
            fp[(r, c)] += h;
            fm[(r, c)] -= h;
            (energy(&fp) - energy(&fm)) / (2.0 * h)
        })
    }

    type EnergyFn = fn(&Mat3, &PhysicalParams) -> Result<f64, ConstitutiveError>;

    #[test]
    fn piola_is_energy_gradient() {
        let p = PhysicalParams::new(1e3, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let f = random_deformation(&mut rng, 0.3);
            let pairs: [(EnergyFn, ElasticModelId); 3] = [
                (fixed_corotated_energy, ElasticModelId::FixedCorotated),
                (neo_hookean_energy, ElasticModelId::NeoHookean),
                (stvk_energy, ElasticModelId::StVK),
            ];
            for (energy, model) in pairs {
                let fd = central_energy_gradient(|x| energy(x, &p).unwrap(), &f, 1e-5);
                let analytic = model.piola(&f, &p).unwrap();
                assert!((fd - analytic).norm() <= 1e-4 * analytic.norm().max(p.mu() * 1e-3), "{model}");
            }
        }
    }

    /// Directional derivative of `model.piola` along `dir`, by central differences.
    fn piola_directional_fd(model: ElasticModelId, f: &Mat3, p: &PhysicalParams, dir: &Mat3) -> Mat3 {
        let h = 1e-6;
        (model.piola(&(f + h * dir), p).unwrap() - model.piola(&(f - h * dir), p).unwrap()) / (2.0 * h)
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = PhysicalParams::new(2e3, 0.3).unwrap();
        let mut cases: Vec<Mat3> = (0..40).map(|_| random_deformation(&mut rng, 0.4)).collect();
        // coincident stretches exercise the limit branch
        cases.push(Mat3::identity());
        cases.push(rotation_z(0.3) * Mat3::from_diagonal(&Vec3::new(1.2, 1.2, 0.9)));
        cases.push(Mat3::identity() + Mat3::from_fn(|_, _| 1e-9));
        for f in cases {
            for model in ElasticModelId::ALL {
                let p_bar = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                let (f_bar, mu_bar, lambda_bar) = elastic_vjp(model, &f, &p, &p_bar).unwrap();
                for _ in 0..3 {
                    let dir = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                    let fd = piola_directional_fd(model, &f, &p, &dir).dot(&p_bar);
                    let ad = f_bar.dot(&dir);
                    assert!((fd - ad).abs() <= 1e-5 * (fd.abs() + p.mu()), "{model}: {fd} vs {ad}");
                }
                let h = 1e-4;
                let dmu = (model.piola(&f, &PhysicalParams::from_lame(p.mu() + h, p.lambda())).unwrap()
                    - model.piola(&f, &PhysicalParams::from_lame(p.mu() - h, p.lambda())).unwrap())
                    / (2.0 * h);
                let dla = (model.piola(&f, &PhysicalParams::from_lame(p.mu(), p.lambda() + h)).unwrap()
                    - model.piola(&f, &PhysicalParams::from_lame(p.mu(), p.lambda() - h)).unwrap())
                    / (2.0 * h);
                assert!((dmu.dot(&p_bar) - mu_bar).abs() <= 1e-6 * (1.0 + mu_bar.abs()));
                assert!((dla.dot(&p_bar) - lambda_bar).abs() <= 1e-6 * (1.0 + lambda_bar.abs()));
            }
        }
    }
}
