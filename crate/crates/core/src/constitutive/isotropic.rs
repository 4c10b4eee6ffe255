//! Derivatives of isotropic matrix functions `G(F) = U · diag(g(σ)) · Vᵀ`.
//!
//! Every stress law and the two SVD-based return maps are of this form. The
//! derivative is assembled in the rotated frame: diagonal entries follow the
//! 3×3 Jacobian of `g`, and each off-diagonal pair `(ij, ji)` mixes through
//! the divided differences `(g_i - g_j)/(σ_i - σ_j)` and
//! `(g_i + g_j)/(σ_i + σ_j)`. When two stretches coincide the first quotient
//! is replaced by its limit `∂g_i/∂σ_i - ∂g_i/∂σ_j`, which keeps the result
//! finite at `F = I`.

use crate::dual::Dual;
use crate::tensor::{Mat3, Svd3};

/// Relative gap below which two stretches are treated as equal.
const COINCIDENT_STRETCH_TOL: f64 = 1e-6;

pub(crate) type D5 = Dual<5>;

/// Principal values and their partial derivatives with respect to the three
/// stretches, `mu` and `lambda`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PrincipalJacobian {
    pub g: [f64; 3],
    /// `d_sigma[i][j] = ∂g_i / ∂σ_j`
    pub d_sigma: [[f64; 3]; 3],
    pub d_mu: [f64; 3],
    pub d_lambda: [f64; 3],
}

impl PrincipalJacobian {
    pub fn evaluate<E>(sigma: &[f64; 3], mu: f64, lambda: f64, g: impl Fn([D5; 3], D5, D5) -> Result<[D5; 3], E>) -> Result<Self, E> {
        let s = [D5::var(sigma[0], 0), D5::var(sigma[1], 1), D5::var(sigma[2], 2)];
        let out = g(s, D5::var(mu, 3), D5::var(lambda, 4))?;
        let mut jac = PrincipalJacobian {
            g: [0.0; 3],
            d_sigma: [[0.0; 3]; 3],
            d_mu: [0.0; 3],
            d_lambda: [0.0; 3],
        };
        for i in 0..3 {
            jac.g[i] = out[i].re;
            jac.d_sigma[i] = [out[i].eps[0], out[i].eps[1], out[i].eps[2]];
            jac.d_mu[i] = out[i].eps[3];
            jac.d_lambda[i] = out[i].eps[4];
        }
        Ok(jac)
    }

    fn minus_quotient(&self, sigma: &[f64; 3], i: usize, j: usize) -> f64 {
        let gap = sigma[i] - sigma[j];
        if gap.abs() > COINCIDENT_STRETCH_TOL * (sigma[i].abs() + sigma[j].abs()) {
            (self.g[i] - self.g[j]) / gap
        } else {
            0.5 * ((self.d_sigma[i][i] - self.d_sigma[i][j]) + (self.d_sigma[j][j] - self.d_sigma[j][i]))
        }
    }
}

/// Pull the cotangent `g_bar` of `G(F)` back to `(F_bar, mu_bar, lambda_bar)`.
pub(crate) fn isotropic_vjp(svd: &Svd3, jac: &PrincipalJacobian, g_bar: &Mat3) -> (Mat3, f64, f64) {
    let sigma = [svd.sigma[0], svd.sigma[1], svd.sigma[2]];
    let gt = svd.u.transpose() * g_bar * svd.v;
    let mut ft = Mat3::zeros();
    let mut mu_bar = 0.0;
    let mut lambda_bar = 0.0;
    for i in 0..3 {
        mu_bar += gt[(i, i)] * jac.d_mu[i];
        lambda_bar += gt[(i, i)] * jac.d_lambda[i];
        for j in 0..3 {
            ft[(j, j)] += jac.d_sigma[i][j] * gt[(i, i)];
        }
    }
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let minus = jac.minus_quotient(&sigma, i, j);
        let plus = (jac.g[i] + jac.g[j]) / (sigma[i] + sigma[j]);
        let a = 0.5 * (minus + plus);
        let b = 0.5 * (minus - plus);
        ft[(i, j)] = a * gt[(i, j)] + b * gt[(j, i)];
        ft[(j, i)] = b * gt[(i, j)] + a * gt[(j, i)];
    }
    (svd.u * ft * svd.v.transpose(), mu_bar, lambda_bar)
}

/// `U · diag(g) · Vᵀ`
pub(crate) fn assemble(svd: &Svd3, g: &[f64; 3]) -> Mat3 {
    let mut out = Mat3::zeros();
    for k in 0..3 {
        out += g[k] * svd.u.column(k) * svd.v.column(k).transpose();
    }
    out
}
