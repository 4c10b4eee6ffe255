//! Small fixed-size linear algebra used by every constitutive model.
//!
//! Everything here works on 3×3 matrices and 3-vectors of `f64`. The SVD is a
//! one-sided (Hestenes) Jacobi iteration, which keeps small singular values
//! accurate to working precision and leaves already-diagonal inputs untouched.

use thiserror::Error;

pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// `det(F)` below this is treated as a collapsed element.
pub const DEGENERATE_DET: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("singular input: det = {det:e}")]
    SingularInput { det: f64 },
    #[error("non-positive singular value {value:e}")]
    NonPositiveSingularValue { value: f64 },
}

/// Signed singular value decomposition `m = u · diag(sigma) · vᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Mat3,
    pub sigma: Vec3,
    pub v: Mat3,
}

impl Svd3 {
    pub fn reconstruct(&self) -> Mat3 {
        self.u * Mat3::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

/// Singular value decomposition with proper rotations on both sides.
///
/// `u` and `v` always have determinant +1. Singular values are sorted by
/// descending magnitude; a reflection in `m` shows up as a negative last entry.
pub fn svd3(m: &Mat3) -> Svd3 {
    let mut b = *m;
    let mut v = Mat3::identity();

    let scale = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return Svd3 {
            u: Mat3::identity(),
            sigma: Vec3::zeros(),
            v: Mat3::identity(),
        };
    }

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = b.column(p).norm_squared();
            let beta = b.column(q).norm_squared();
            let gamma = b.column(p).dot(&b.column(q));
            if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for r in 0..3 {
                let bp = b[(r, p)];
                let bq = b[(r, q)];
                b[(r, p)] = c * bp - s * bq;
                b[(r, q)] = s * bp + c * bq;
                let vp = v[(r, p)];
                let vq = v[(r, q)];
                v[(r, p)] = c * vp - s * vq;
                v[(r, q)] = s * vp + c * vq;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = [b.column(0).norm(), b.column(1).norm(), b.column(2).norm()];

    // stable sort, descending
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));
    let b_sorted = Mat3::from_columns(&[b.column(order[0]), b.column(order[1]), b.column(order[2])]);
    let mut v_sorted = Mat3::from_columns(&[v.column(order[0]), v.column(order[1]), v.column(order[2])]);
    sigma = [sigma[order[0]], sigma[order[1]], sigma[order[2]]];

    let mut u = Mat3::zeros();
    let tiny = scale * 1e-12;
    let mut rank = 0;
    for k in 0..3 {
        if sigma[k] > tiny {
            u.set_column(k, &(b_sorted.column(k) / sigma[k]));
            rank += 1;
        }
    }
    complete_basis(&mut u, rank);

    if v_sorted.determinant() < 0.0 {
        let c = -v_sorted.column(2);
        v_sorted.set_column(2, &c);
        let c = -u.column(2);
        u.set_column(2, &c);
    }
    if u.determinant() < 0.0 {
        let c = -u.column(2);
        u.set_column(2, &c);
        sigma[2] = -sigma[2];
    }

    Svd3 {
        u,
        sigma: Vec3::new(sigma[0], sigma[1], sigma[2]),
        v: v_sorted,
    }
}

/// Fill the columns `rank..3` of `u` with an orthonormal completion.
fn complete_basis(u: &mut Mat3, rank: usize) {
    match rank {
        3 => {}
        2 => {
            let c = u.column(0).cross(&u.column(1));
            u.set_column(2, &c.normalize());
        }
        1 => {
            let a: Vec3 = u.column(0).into();
            let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let b = a.cross(&helper).normalize();
            u.set_column(1, &b);
            u.set_column(2, &a.cross(&b));
        }
        _ => *u = Mat3::identity(),
    }
}

/// Polar decomposition `f = r · s` with `r` a proper rotation.
pub fn polar_decompose(f: &Mat3) -> Result<(Mat3, Mat3), TensorError> {
    let det = f.determinant();
    if !(det >= DEGENERATE_DET) {
        return Err(TensorError::SingularInput { det });
    }
    let svd = svd3(f);
    let r = svd.u * svd.v.transpose();
    let s = svd.v * Mat3::from_diagonal(&svd.sigma) * svd.v.transpose();
    Ok((r, symmetrize(&s)))
}

pub fn diag_log(sigma: &Vec3) -> Result<Vec3, TensorError> {
    if let Some(&value) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(TensorError::NonPositiveSingularValue { value });
    }
    Ok(sigma.map(f64::ln))
}

pub fn diag_exp(eps: &Vec3) -> Vec3 {
    eps.map(f64::exp)
}

#[inline]
pub fn symmetrize(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// `F^{-T}`, erroring out on (near) singular input.
pub fn inverse_transpose(f: &Mat3) -> Result<Mat3, TensorError> {
    let det = f.determinant();
    if !(det.abs() >= DEGENERATE_DET) {
        return Err(TensorError::SingularInput { det });
    }
    f.try_inverse().map(|inv| inv.transpose()).ok_or(TensorError::SingularInput { det })
}

pub fn is_finite_mat(m: &Mat3) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn is_finite_vec(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Rotation about the z axis by `angle` radians.
pub fn rotation_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
