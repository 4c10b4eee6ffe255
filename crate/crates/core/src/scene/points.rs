//! Point-cloud input.
//!
//! Two formats are accepted:
//!
//! * ASCII, one point per line: `x y z` or `x y z sx sy sz qw qx qy qz opacity`
//!   with linear scales (standard deviations), a rotation quaternion and a
//!   linear opacity. `#` starts a comment.
//! * PLY (`ascii` or `binary_little_endian`) with a `vertex` element holding
//!   `x y z` and optionally the usual Gaussian-splat properties `scale_0..2`
//!   (log scales), `rot_0..3` (quaternion, w first) and `opacity` (logit).
//!   Every other vertex property is kept as an opaque payload.

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use super::SceneError;
use crate::tensor::{Mat3, Vec3};

/// Longest bounding-box edge after normalisation.
pub const NORMALIZED_EXTENT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub covariances: Option<Vec<Mat3>>,
    pub opacities: Option<Vec<f64>>,
    /// Names of the payload columns.
    pub payload_names: Vec<String>,
    pub payload: Vec<Vec<f32>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Drop points whose opacity is below `threshold`.
    pub fn filter_opacity(&mut self, threshold: f64) {
        let Some(opacity) = self.opacities.clone() else { return };
        let keep: Vec<bool> = opacity.iter().map(|&a| a >= threshold).collect();
        let pick = |v: &mut Vec<_>| {
            let mut k = keep.iter();
            v.retain(|_| *k.next().unwrap());
        };
        pick(&mut self.positions);
        if let Some(c) = &mut self.covariances {
            let mut k = keep.iter();
            c.retain(|_| *k.next().unwrap());
        }
        let mut k = keep.iter();
        self.opacities.as_mut().unwrap().retain(|_| *k.next().unwrap());
        if !self.payload.is_empty() {
            let mut k = keep.iter();
            self.payload.retain(|_| *k.next().unwrap());
        }
    }

    /// Centre the cloud at `(0.5, 0.5, 0.5)` and scale its longest edge to
    /// [`NORMALIZED_EXTENT`]; covariances scale with the square.
    pub fn normalize(&mut self) {
        if self.positions.is_empty() {
            return;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).max();
        let scale = if extent > 0.0 { NORMALIZED_EXTENT / extent } else { 1.0 };
        let mid = (lo + hi) * 0.5;
        for p in &mut self.positions {
            *p = (*p - mid) * scale + Vec3::repeat(0.5);
        }
        if let Some(c) = &mut self.covariances {
            for m in c {
                *m *= scale * scale;
            }
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> SceneError {
    SceneError::Parse(format!("{}:{line}: {msg}", path.display()))
}

/// Read a point file and normalise it into the unit domain.
pub fn load_points(path: &Path) -> Result<PointCloud, SceneError> {
    let bytes = std::fs::read(path).map_err(|e| SceneError::Parse(format!("{}: {e}", path.display())))?;
    let mut cloud = if bytes.starts_with(b"ply") {
        read_ply(path, &bytes)?
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| parse_err(path, 0, e))?;
        read_ascii(path, text)?
    };
    if cloud.is_empty() {
        return Err(SceneError::EmptyCloud(path.display().to_string()));
    }
    cloud.normalize();
    Ok(cloud)
}

fn kernel_covariance(scale: [f64; 3], q: [f64; 4]) -> Mat3 {
    let r = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix();
    let s = Mat3::from_diagonal(&Vec3::from(scale.map(|x| x * x)));
    let m = r.matrix() * s * r.matrix().transpose();
    (m + m.transpose()) * 0.5
}

fn read_ascii(path: &Path, text: &str) -> Result<PointCloud, SceneError> {
    let mut cloud = PointCloud::default();
    let mut full: Option<bool> = None;
    let mut covs = Vec::new();
    let mut opac = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(path, n + 1, format!("`{t}`: {e}"))))
            .collect::<Result<_, _>>()?;
        let is_full = match vals.len() {
            3 => false,
            11 => true,
            k => return Err(parse_err(path, n + 1, format!("expected 3 or 11 values, found {k}"))),
        };
        if *full.get_or_insert(is_full) != is_full {
            return Err(parse_err(path, n + 1, "mixed short and long records"));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, n + 1, "non-finite value"));
        }
        cloud.positions.push(Vec3::new(vals[0], vals[1], vals[2]));
        if is_full {
            covs.push(kernel_covariance([vals[3], vals[4], vals[5]], [vals[6], vals[7], vals[8], vals[9]]));
            opac.push(vals[10]);
        }
    }
    if full == Some(true) {
        cloud.covariances = Some(covs);
        cloud.opacities = Some(opac);
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

fn read_ply(path: &Path, bytes: &[u8]) -> Result<PointCloud, SceneError> {
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(path, 1, "missing end_header"))?;
    let mut body = end + marker.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(parse_err(path, 1, "end_header must end its line"));
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| parse_err(path, 1, e))?;

    let mut binary = None;
    let mut count = None;
    let mut props: Vec<(String, PlyType)> = Vec::new();
    let mut in_vertex = false;
    for (n, line) in header.lines().enumerate() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(parse_err(path, n + 1, format!("unsupported format {other}"))),
            ["element", name, c] => {
                if count.is_some() && in_vertex {
                    return Err(parse_err(path, n + 1, "only a single vertex element is supported"));
                }
                in_vertex = *name == "vertex";
                if !in_vertex {
                    return Err(parse_err(path, n + 1, format!("unsupported element {name}")));
                }
                count = Some(c.parse::<usize>().map_err(|e| parse_err(path, n + 1, e))?);
            }
            ["property", "list", ..] => return Err(parse_err(path, n + 1, "list properties are not supported")),
            ["property", ty, name] => {
                let ty = PlyType::parse(ty).ok_or_else(|| parse_err(path, n + 1, format!("unknown type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            _ => return Err(parse_err(path, n + 1, format!("unexpected header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err(path, 1, "missing format line"))?;
    let count = count.ok_or_else(|| parse_err(path, 1, "missing vertex element"))?;
    let col = |name: &str| props.iter().position(|(p, _)| p == name);
    let (ix, iy, iz) = match (col("x"), col("y"), col("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(path, 1, "vertex element needs x, y and z")),
    };

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    if binary {
        let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
        let data = &bytes[body..];
        if data.len() < stride * count {
            return Err(parse_err(
                path,
                0,
                format!("truncated body: {} of {} bytes", data.len(), stride * count),
            ));
        }
        for r in 0..count {
            let mut off = r * stride;
            let mut row = Vec::with_capacity(props.len());
            for (_, t) in &props {
                row.push(t.read(&data[off..]));
                off += t.size();
            }
            rows.push(row);
        }
    } else {
        let text = std::str::from_utf8(&bytes[body..]).map_err(|e| parse_err(path, 0, e))?;
        for (r, line) in text.lines().filter(|l| !l.trim().is_empty()).take(count).enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(path, r + 1, e)))
                .collect::<Result<_, _>>()?;
            if row.len() != props.len() {
                return Err(parse_err(path, r + 1, format!("expected {} values", props.len())));
            }
            rows.push(row);
        }
        if rows.len() != count {
            return Err(parse_err(path, 0, format!("expected {count} vertices, found {}", rows.len())));
        }
    }

    let scale_cols = [col("scale_0"), col("scale_1"), col("scale_2")];
    let rot_cols = [col("rot_0"), col("rot_1"), col("rot_2"), col("rot_3")];
    let opacity_col = col("opacity");
    let mut used = vec![ix, iy, iz];
    let has_kernels = scale_cols.iter().chain(&rot_cols).all(Option::is_some);
    if has_kernels {
        used.extend(scale_cols.iter().chain(&rot_cols).map(|c| c.unwrap()));
    }
    used.extend(opacity_col);
    let payload_cols: Vec<usize> = (0..props.len()).filter(|c| !used.contains(c)).collect();

    let mut cloud = PointCloud {
        payload_names: payload_cols.iter().map(|&c| props[c].0.clone()).collect(),
        ..Default::default()
    };
    let mut covs = Vec::new();
    let mut opac = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let p = Vec3::new(row[ix], row[iy], row[iz]);
        if !p.iter().all(|v| v.is_finite()) {
            return Err(parse_err(path, r + 1, "non-finite position"));
        }
        cloud.positions.push(p);
        if has_kernels {
            let s = scale_cols.map(|c| row[c.unwrap()].exp());
            let q = rot_cols.map(|c| row[c.unwrap()]);
            covs.push(kernel_covariance(s, q));
        }
        if let Some(c) = opacity_col {
            opac.push(1.0 / (1.0 + (-row[c]).exp()));
        }
        if !payload_cols.is_empty() {
            cloud.payload.push(payload_cols.iter().map(|&c| row[c] as f32).collect());
        }
    }
    if has_kernels {
        cloud.covariances = Some(covs);
    }
    if opacity_col.is_some() {
        cloud.opacities = Some(opac);
    }
    Ok(cloud)
}
