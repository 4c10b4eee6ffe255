use super::GridSpec;
use crate::tensor::{Mat3, Vec3};

/// Quadratic B-spline weights over the 3×3×3 nodes around a particle.
///
/// `base` is the lowest node index of the stencil on each axis and `fx` the
/// particle position relative to it, in cells, so `fx ∈ [0.5, 1.5)`.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub base: [i64; 3],
    pub fx: Vec3,
    pub w: [[f64; 3]; 3],
    pub dw: [[f64; 3]; 3],
    inv_dx: f64,
}

const DDW: [f64; 3] = [1.0, -2.0, 1.0];

pub fn bspline_stencil(xp: &Vec3, grid: &GridSpec) -> Stencil {
    let inv_dx = 1.0 / grid.dx;
    let mut base = [0i64; 3];
    let mut fx = Vec3::zeros();
    let mut w = [[0.0; 3]; 3];
    let mut dw = [[0.0; 3]; 3];
    for d in 0..3 {
        let xs = (xp[d] - grid.origin[d]) * inv_dx;
        let b = (xs - 0.5).floor();
        let f = xs - b;
        base[d] = b as i64;
        fx[d] = f;
        w[d] = [0.5 * (1.5 - f).powi(2), 0.75 - (f - 1.0).powi(2), 0.5 * (f - 0.5).powi(2)];
        dw[d] = [(f - 1.5) * inv_dx, -2.0 * (f - 1.0) * inv_dx, (f - 0.5) * inv_dx];
    }
    Stencil { base, fx, w, dw, inv_dx }
}

impl Stencil {
    #[inline]
    pub fn weight(&self, o: [usize; 3]) -> f64 {
        self.w[0][o[0]] * self.w[1][o[1]] * self.w[2][o[2]]
    }

    /// Gradient of the weight with respect to the particle position.
    #[inline]
    pub fn gradient(&self, o: [usize; 3]) -> Vec3 {
        let (w, dw) = (&self.w, &self.dw);
        Vec3::new(
            dw[0][o[0]] * w[1][o[1]] * w[2][o[2]],
            w[0][o[0]] * dw[1][o[1]] * w[2][o[2]],
            w[0][o[0]] * w[1][o[1]] * dw[2][o[2]],
        )
    }

    #[inline]
    pub fn hessian(&self, o: [usize; 3]) -> Mat3 {
        let s = self.inv_dx * self.inv_dx;
        let w = [self.w[0][o[0]], self.w[1][o[1]], self.w[2][o[2]]];
        let dw = [self.dw[0][o[0]], self.dw[1][o[1]], self.dw[2][o[2]]];
        let dd = [DDW[o[0]] * s, DDW[o[1]] * s, DDW[o[2]] * s];
        Mat3::new(
            dd[0] * w[1] * w[2],
            dw[0] * dw[1] * w[2],
            dw[0] * w[1] * dw[2],
            dw[0] * dw[1] * w[2],
            w[0] * dd[1] * w[2],
            w[0] * dw[1] * dw[2],
            dw[0] * w[1] * dw[2],
            w[0] * dw[1] * dw[2],
            w[0] * w[1] * dd[2],
        )
    }

    /// `x_i - x_p` for the node at offset `o`.
    #[inline]
    pub fn offset(&self, o: [usize; 3], dx: f64) -> Vec3 {
        Vec3::new(o[0] as f64 - self.fx[0], o[1] as f64 - self.fx[1], o[2] as f64 - self.fx[2]) * dx
    }

    #[inline]
    pub fn node(&self, o: [usize; 3]) -> [i64; 3] {
        [self.base[0] + o[0] as i64, self.base[1] + o[1] as i64, self.base[2] + o[2] as i64]
    }
}

/// The 27 stencil offsets in a fixed order.
pub const OFFSETS: [[usize; 3]; 27] = {
    let mut out = [[0; 3]; 27];
    let mut k = 0;
    while k < 27 {
        out[k] = [k / 9, (k / 3) % 3, k % 3];
        k += 1;
    }
    out
};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::unit(25)
    }

    #[test]
    fn particle_on_a_node_gets_the_textbook_weights() {
        let g = grid();
        let s = bspline_stencil(&Vec3::new(0.4, 0.4, 0.4), &g);
        for d in 0..3 {
            for (a, b) in s.w[d].iter().zip([0.125, 0.75, 0.125]) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(s.base[d], 9);
        }
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let x = Vec3::from_fn(|_, _| rng.gen_range(0.08..0.92));
            let s = bspline_stencil(&x, &g);
            let mut sum_w = 0.0;
            let mut sum_g = Vec3::zeros();
            let mut first_moment = Vec3::zeros();
            for o in OFFSETS {
                sum_w += s.weight(o);
                sum_g += s.gradient(o);
                first_moment += s.weight(o) * s.offset(o, g.dx);
            }
            assert!((sum_w - 1.0).abs() <= 1e-12);
            assert!(sum_g.norm() <= 1e-10);
            assert!(first_moment.norm() <= 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = 1e-7;
        for _ in 0..200 {
            let x = Vec3::from_fn(|_, _| rng.gen_range(0.2..0.8));
            let s = bspline_stencil(&x, &g);
            for o in OFFSETS {
                let node = s.node(o);
                for d in 0..3 {
                    let mut e = Vec3::zeros();
                    e[d] = h;
                    let at = |y: Vec3| {
                        let t = bspline_stencil(&y, &g);
                        // same node seen from the perturbed stencil
                        let oo = [0, 1, 2].map(|k| (node[k] - t.base[k]) as usize);
                        if oo.iter().any(|&v| v > 2) {
                            return (0.0, Vec3::zeros());
                        }
                        (t.weight(oo), t.gradient(oo))
                    };
                    let (wp, gp) = at(x + e);
                    let (wm, gm) = at(x - e);
                    assert!(((wp - wm) / (2.0 * h) - s.gradient(o)[d]).abs() < 1e-6);
                    let col = (gp - gm) / (2.0 * h);
                    assert!((col - s.hessian(o).column(d)).norm() < 1e-3 * g.dx.powi(-2));
                }
            }
        }
    }
}
