use std::io::Write;
use std::path::Path;

use super::{FrameRecord, RenderError};
use crate::tensor::Vec3;

/// Footprints are cut off beyond this many standard deviations.
const CUTOFF_SIGMAS: f64 = 3.0;
/// Screen-space blur added to every footprint, in pixels.
const MIN_FOOTPRINT_PX: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewAxis {
    X,
    Y,
    Z,
}

impl ViewAxis {
    /// Image (column, row) axes; the row axis points up.
    fn screen(self) -> (usize, usize) {
        match self {
            ViewAxis::X => (1, 2),
            ViewAxis::Y => (0, 2),
            ViewAxis::Z => (0, 1),
        }
    }
}

impl std::str::FromStr for ViewAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(ViewAxis::X),
            "y" | "Y" => Ok(ViewAxis::Y),
            "z" | "Z" => Ok(ViewAxis::Z),
            _ => Err(format!("unknown axis `{s}`, expected x, y or z")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major accumulated density, top row first.
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Binary 8-bit PGM, tone mapped with `1 - exp(-v)`.
    pub fn write_pgm(&self, path: &Path) -> Result<(), RenderError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| (255.0 * (1.0 - (-v.max(0.0)).exp())).round() as u8)
            .collect();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }
}

/// Orthographic splat of `frame` viewed along `axis` over the square window
/// `[lo, lo + size]²` of the two remaining axes. `opacities` defaults to 1.
pub fn splat_preview(frame: &FrameRecord, opacities: Option<&[f64]>, axis: ViewAxis, resolution: usize, lo: Vec3, size: f64) -> GrayImage {
    let mut img = GrayImage {
        width: resolution,
        height: resolution,
        pixels: vec![0.0; resolution * resolution],
    };
    if resolution == 0 {
        return img;
    }
    let (a, b) = axis.screen();
    let px = size / resolution as f64;
    let blur = (MIN_FOOTPRINT_PX * px).powi(2);
    for (k, (c, s)) in frame.centers.iter().zip(&frame.covariances).enumerate() {
        let alpha = opacities.map_or(1.0, |o| o[k]);
        let (saa, sab, sbb) = (s[(a, a)] + blur, s[(a, b)], s[(b, b)] + blur);
        let det = saa * sbb - sab * sab;
        if !(det > 0.0) || !c.iter().all(|v| v.is_finite()) {
            continue;
        }
        let (iaa, iab, ibb) = (sbb / det, -sab / det, saa / det);
        let (u0, v0) = ((c[a] - lo[a]) / px, (c[b] - lo[b]) / px);
        let (ru, rv) = (CUTOFF_SIGMAS * saa.sqrt() / px, CUTOFF_SIGMAS * sbb.sqrt() / px);
        let col_lo = (u0 - ru - 0.5).floor().max(0.0) as usize;
        let col_hi = ((u0 + ru - 0.5).ceil() as i64).min(resolution as i64 - 1);
        let row_lo = (v0 - rv - 0.5).floor().max(0.0) as usize;
        let row_hi = ((v0 + rv - 0.5).ceil() as i64).min(resolution as i64 - 1);
        for j in row_lo as i64..=row_hi {
            for i in col_lo as i64..=col_hi {
                let du = (i as f64 + 0.5 - u0) * px;
                let dv = (j as f64 + 0.5 - v0) * px;
                let m = du * du * iaa + 2.0 * du * dv * iab + dv * dv * ibb;
                if m > CUTOFF_SIGMAS * CUTOFF_SIGMAS {
                    continue;
                }
                let row = resolution - 1 - j as usize;
                img.pixels[row * resolution + i as usize] += alpha * (-0.5 * m).exp();
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mat3;

    fn frame(centers: Vec<Vec3>) -> FrameRecord {
        let n = centers.len();
        FrameRecord {
            time: None,
            centers,
            covariances: vec![Mat3::identity() * 4e-4; n],
            rotations: None,
        }
    }

    #[test]
    fn empty_frame_is_blank() {
        let img = splat_preview(&frame(vec![]), None, ViewAxis::Z, 32, Vec3::zeros(), 1.0);
        assert!(img.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centred_kernel_peaks_in_the_middle() {
        let img = splat_preview(&frame(vec![Vec3::repeat(0.5)]), None, ViewAxis::Y, 65, Vec3::zeros(), 1.0);
        let (best, _) = img
            .pixels
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!((best % 65, best / 65), (32, 32));
    }

    #[test]
    fn overlapping_kernels_accumulate() {
        let one = splat_preview(&frame(vec![Vec3::new(0.3, 0.6, 0.5)]), None, ViewAxis::Z, 48, Vec3::zeros(), 1.0);
        let two = splat_preview(&frame(vec![Vec3::new(0.3, 0.6, 0.5); 2]), None, ViewAxis::Z, 48, Vec3::zeros(), 1.0);
        assert!(one.pixels.iter().zip(&two.pixels).all(|(a, b)| b >= a));
        assert!(two.pixels.iter().sum::<f64>() > one.pixels.iter().sum::<f64>());
    }

    #[test]
    fn up_is_up() {
        let img = splat_preview(&frame(vec![Vec3::new(0.5, 0.5, 0.9)]), None, ViewAxis::Y, 20, Vec3::zeros(), 1.0);
        let top: f64 = (0..20).map(|c| img.at(c, 2)).sum();
        let bottom: f64 = (0..20).map(|c| img.at(c, 17)).sum();
        assert!(top > bottom);
    }
}
