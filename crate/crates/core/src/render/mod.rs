//! Gaussian kernels carried by the particles, their per-frame deformation,
//! the binary frame file and a small orthographic preview splatter.
//!
//! # Frame file
//!
//! Little-endian throughout:
//!
//! | offset | type      | content                              |
//! |--------|-----------|--------------------------------------|
//! | 0      | `[u8; 4]` | magic `CGSF`                         |
//! | 4      | `u32`     | format version, currently 1          |
//! | 8      | `u32`     | frame count `T`                      |
//! | 12     | `u32`     | kernel count `K`                     |
//! | 16     | `f32 × 9` | frame 0, kernel 0                    |
//! | ...    |           | `T · K` records, frame-major         |
//!
//! Each record is `cx cy cz s00 s01 s02 s11 s12 s22`: the centre followed by
//! the upper triangle of the covariance. Frame times are not stored.

mod preview;

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::mpm::Trajectory;
use crate::tensor::{polar_decompose, symmetrize, Mat3, TensorError, Vec3};

pub use preview::{splat_preview, GrayImage, ViewAxis};

pub const FRAME_MAGIC: [u8; 4] = *b"CGSF";
pub const FRAME_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("trajectory has {particles} particles but {kernels} kernels were given")]
    KernelCountMismatch { particles: usize, kernels: usize },
    #[error("frame {frame} has {found} kernels, expected {expected}")]
    RaggedFrames { frame: usize, expected: usize, found: usize },
    #[error("malformed frame file: {0}")]
    Parse(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub center: Vec3,
    pub covariance: Mat3,
    pub opacity: f64,
    /// Shading coefficients and any other per-kernel data, never interpreted.
    pub payload: Vec<f32>,
}

impl GaussianKernel {
    pub fn isotropic(center: Vec3, std_dev: f64) -> Self {
        Self {
            center,
            covariance: Mat3::identity() * (std_dev * std_dev),
            opacity: 1.0,
            payload: Vec::new(),
        }
    }
}

/// `F Σ Fᵀ`, symmetrised.
pub fn deform_covariance(sigma: &Mat3, f: &Mat3) -> Mat3 {
    symmetrize(&(f * sigma * f.transpose()))
}

/// `Rᵀ d` with `R` the rotation of `F = R S`.
pub fn rotate_view_dir(d: &Vec3, f: &Mat3) -> Result<Vec3, TensorError> {
    let (r, _) = polar_decompose(f)?;
    Ok(r.transpose() * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Simulation time; `None` for frames read back from a file.
    pub time: Option<f64>,
    pub centers: Vec<Vec3>,
    pub covariances: Vec<Mat3>,
    pub rotations: Option<Vec<Mat3>>,
}

impl FrameRecord {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Deform the rest kernels by every sampled state of `trajectory`.
pub fn frames_from_trajectory(trajectory: &Trajectory, kernels: &[GaussianKernel]) -> Result<Vec<FrameRecord>, RenderError> {
    let particles = trajectory.particle_count();
    if !trajectory.is_empty() && particles != kernels.len() {
        return Err(RenderError::KernelCountMismatch {
            particles,
            kernels: kernels.len(),
        });
    }
    trajectory
        .samples
        .iter()
        .map(|s| {
            let mut rotations = Vec::with_capacity(s.f.len());
            for f in &s.f {
                rotations.push(polar_decompose(f)?.0);
            }
            Ok(FrameRecord {
                time: Some(s.time),
                centers: s.x.clone(),
                covariances: kernels.iter().zip(&s.f).map(|(k, f)| deform_covariance(&k.covariance, f)).collect(),
                rotations: Some(rotations),
            })
        })
        .collect()
}

pub fn write_frames(frames: &[FrameRecord], mut out: impl Write) -> Result<(), RenderError> {
    let kernels = frames.first().map_or(0, FrameRecord::len);
    for (frame, f) in frames.iter().enumerate() {
        if f.len() != kernels || f.covariances.len() != kernels {
            return Err(RenderError::RaggedFrames {
                frame,
                expected: kernels,
                found: f.len(),
            });
        }
    }
    let header_count = |n: usize| u32::try_from(n).map_err(|_| RenderError::Parse(format!("count {n} exceeds u32")));
    out.write_all(&FRAME_MAGIC)?;
    out.write_all(&FRAME_VERSION.to_le_bytes())?;
    out.write_all(&header_count(frames.len())?.to_le_bytes())?;
    out.write_all(&header_count(kernels)?.to_le_bytes())?;
    for f in frames {
        for (c, s) in f.centers.iter().zip(&f.covariances) {
            let rec = [c[0], c[1], c[2], s[(0, 0)], s[(0, 1)], s[(0, 2)], s[(1, 1)], s[(1, 2)], s[(2, 2)]];
            for v in rec {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_frames(mut input: impl Read) -> Result<Vec<FrameRecord>, RenderError> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|e| RenderError::Parse(format!("header: {e}")))?;
    if header[..4] != FRAME_MAGIC {
        return Err(RenderError::Parse("bad magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(header[4 * k..4 * k + 4].try_into().unwrap());
    if word(1) != FRAME_VERSION {
        return Err(RenderError::Parse(format!("unsupported version {}", word(1))));
    }
    let (frames, kernels) = (word(2) as usize, word(3) as usize);
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected = frames
        .checked_mul(kernels)
        .and_then(|n| n.checked_mul(36))
        .ok_or_else(|| RenderError::Parse("header counts overflow".into()))?;
    if body.len() != expected {
        return Err(RenderError::Parse(format!(
            "body is {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let mut values = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64);
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut centers = Vec::with_capacity(kernels);
        let mut covariances = Vec::with_capacity(kernels);
        for _ in 0..kernels {
            let r: [f64; 9] = std::array::from_fn(|_| values.next().unwrap());
            centers.push(Vec3::new(r[0], r[1], r[2]));
            covariances.push(Mat3::new(r[3], r[4], r[5], r[4], r[6], r[7], r[5], r[7], r[8]));
        }
        out.push(FrameRecord {
            time: None,
            centers,
            covariances,
            rotations: None,
        });
    }
    Ok(out)
}

/// Write the deformed kernels of every trajectory sample to `path`.
pub fn export_frames(trajectory: &Trajectory, kernels: &[GaussianKernel], path: &Path) -> Result<usize, RenderError> {
    let frames = frames_from_trajectory(trajectory, kernels)?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_frames(&frames, &mut w)?;
    w.flush()?;
    Ok(frames.len())
}

pub fn load_frames(path: &Path) -> Result<Vec<FrameRecord>, RenderError> {
    read_frames(BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpm::Sample;
    use crate::tensor::rotation_z;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    fn sym_eigenvalues(m: &Mat3) -> [f64; 3] {
        let mut a = *m;
        for _ in 0..50 {
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut j = Mat3::identity();
                j[(p, p)] = c;
                j[(q, q)] = c;
                j[(p, q)] = s;
                j[(q, p)] = -s;
                a = j.transpose() * a * j;
            }
        }
        let mut e = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        e.sort_by(f64::total_cmp);
        e
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Mat3 {
        let a = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        a * a.transpose() + Mat3::identity() * 0.1
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        let axis = nalgebra::Unit::new_normalize(Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)));
        *nalgebra::Rotation3::from_axis_angle(&axis, rng.gen_range(-3.1..3.1)).matrix()
    }

    #[test]
    fn covariance_examples() {
        let s = Mat3::new(2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5);
        assert_eq!(deform_covariance(&s, &Mat3::identity()), s);
        assert_eq!(
            deform_covariance(&Mat3::identity(), &(Mat3::identity() * 2.0)),
            Mat3::identity() * 4.0
        );
    }

    #[test]
    fn rotations_preserve_covariance_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = random_spd(&mut rng);
            let out = deform_covariance(&s, &random_rotation(&mut rng));
            assert_eq!(out, out.transpose());
            let (a, b) = (sym_eigenvalues(&s), sym_eigenvalues(&out));
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-9 * a[2], "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn covariance_volume_scales_with_det_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let s = random_spd(&mut rng);
            let f = Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
            let lhs = deform_covariance(&s, &f).determinant();
            let rhs = f.determinant().powi(2) * s.determinant();
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-300), "{lhs} {rhs}");
        }
    }

    #[test]
    fn view_direction_examples() {
        let d = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(rotate_view_dir(&d, &Mat3::identity()).unwrap(), d);
        let out = rotate_view_dir(&d, &rotation_z(std::f64::consts::FRAC_PI_2)).unwrap();
        assert!((out - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        let out = rotate_view_dir(&d, &Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0))).unwrap();
        assert!((out - d).norm() < 1e-12);
        assert!(rotate_view_dir(&d, &Mat3::zeros()).is_err());
    }

    #[test]
    fn view_direction_keeps_its_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let f = random_rotation(&mut rng) * random_spd(&mut rng);
            let d = Vec3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
            let out = rotate_view_dir(&d, &f).unwrap();
            assert!((out.norm() - d.norm()).abs() <= 1e-10);
        }
    }

    fn trajectory(frames: usize, n: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = (0..frames)
            .map(|k| Sample {
                step: 10 * k,
                time: 3e-3 * k as f64,
                x: (0..n).map(|_| Vec3::from_fn(|_, _| rng.gen_range(0.0..1.0))).collect(),
                f: (0..n)
                    .map(|_| Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.1..0.1)))
                    .collect(),
            })
            .collect();
        Trajectory { sample_every: 10, samples }
    }

    #[test]
    fn frame_file_round_trip() {
        let traj = trajectory(151, 7);
        let kernels: Vec<_> = traj.samples[0].x.iter().map(|c| GaussianKernel::isotropic(*c, 0.01)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.bin");
        assert_eq!(export_frames(&traj, &kernels, &path).unwrap(), 151);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 151);
        assert_eq!(bytes.len(), 16 + 151 * 7 * 36);

        let back = load_frames(&path).unwrap();
        let written = frames_from_trajectory(&traj, &kernels).unwrap();
        for (a, b) in back.iter().zip(&written) {
            for (ca, cb) in a.centers.iter().zip(&b.centers) {
                assert_eq!(*ca, cb.map(|v| v as f32 as f64));
            }
        }
        let mut again = Vec::new();
        write_frames(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn mismatched_kernels_and_corrupt_files() {
        let traj = trajectory(3, 4);
        let kernels = vec![GaussianKernel::isotropic(Vec3::zeros(), 0.1); 3];
        assert!(matches!(
            frames_from_trajectory(&traj, &kernels),
            Err(RenderError::KernelCountMismatch { particles: 4, kernels: 3 })
        ));
        assert!(read_frames(&b"CGSF\x01\x00\x00\x00\x02\x00\x00\x00\x01\x00\x00\x00"[..]).is_err());
        assert!(read_frames(&b"NOPE"[..]).is_err());
    }

    #[test]
    fn deformation_leaves_opacity_and_payload_alone() {
        let mut traj = trajectory(2, 1);
        traj.samples[1].f[0] = Mat3::identity() * 1.5;
        let kernels = vec![GaussianKernel {
            payload: vec![0.25, 0.5],
            opacity: 0.7,
            ..GaussianKernel::isotropic(Vec3::zeros(), 0.1)
        }];
        let before = kernels.clone();
        let frames = frames_from_trajectory(&traj, &kernels).unwrap();
        assert_eq!(kernels, before);
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].len(), 1);
    }
}
