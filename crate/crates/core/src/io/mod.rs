//! File formats, run configuration and the unit-box normalization.
//!
//! Clouds are read from `.xyz` (3 or 6 columns) or `.ply`, meshes from `.obj`
//! or `.ply`. PLY output is binary little-endian unless asked otherwise; a
//! mesh carrying scalars writes them as a `quality` vertex property.

mod config;
mod obj;
mod ply;
mod xyz;

use std::path::Path;

use crate::error::{Error, Result};
use crate::meshing::TriangleMesh;
use crate::network::Vec3;
use crate::sampling::PointCloud;

pub use config::{FixtureSpec, RunConfig};
pub use ply::PlyFormat;

/// Name of the per-vertex scalar property in mesh PLY files.
pub const QUALITY_PROPERTY: &str = "quality";

fn label(path: &Path) -> String {
    path.display().to_string()
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn utf8<'a>(bytes: &'a [u8], label: &str) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::parse(label, line, "invalid UTF-8")
    })
}

/// Parses an `.xyz` cloud held in memory.
pub fn parse_xyz(bytes: &[u8], label: &str) -> Result<PointCloud> {
    let (points, normals) = xyz::parse(utf8(bytes, label)?, label)?;
    if points.is_empty() {
        return Err(Error::Empty(format!("{label}: no points")));
    }
    PointCloud::new(points, normals)
}

/// Parses a PLY cloud held in memory. Normals are read when the vertex
/// element has all of `nx`, `ny`, `nz`.
pub fn parse_ply_cloud(bytes: &[u8], label: &str) -> Result<PointCloud> {
    let ply = ply::parse(bytes, label)?;
    let (points, normals) = ply_vertices(&ply, label)?;
    if points.is_empty() {
        return Err(Error::Empty(format!("{label}: no points")));
    }
    PointCloud::new(points, normals)
}

fn ply_vertices(ply: &ply::Ply, label: &str) -> Result<(Vec<Vec3>, Option<Vec<Vec3>>)> {
    let v = ply
        .element("vertex")
        .ok_or_else(|| Error::parse(label, 0, "no `vertex` element"))?;
    let column = |name: &str| v.scalar(name);
    let (Some(x), Some(y), Some(z)) = (column("x"), column("y"), column("z")) else {
        return Err(Error::parse(label, 0, "vertex element needs scalar x, y and z"));
    };
    let points = (0..v.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
    let normals = match (column("nx"), column("ny"), column("nz")) {
        (Some(a), Some(b), Some(c)) => Some((0..v.count).map(|i| Vec3::new(a[i], b[i], c[i])).collect()),
        _ => None,
    };
    Ok((points, normals))
}

/// A cloud read from disk, after duplicate removal.
#[derive(Clone, Debug)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    pub duplicates_removed: usize,
}

/// Loads a `.xyz` or `.ply` cloud and drops exact duplicate points.
pub fn load_cloud(path: &Path) -> Result<LoadedCloud> {
    let bytes = read_bytes(path)?;
    let name = label(path);
    let mut cloud = match extension(path).as_str() {
        "xyz" | "txt" => parse_xyz(&bytes, &name)?,
        "ply" => parse_ply_cloud(&bytes, &name)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "{name}: unsupported cloud extension `{other}` (expected .xyz or .ply)"
            )))
        }
    };
    let duplicates_removed = cloud.dedup();
    Ok(LoadedCloud {
        cloud,
        duplicates_removed,
    })
}

pub fn cloud_to_xyz(cloud: &PointCloud) -> String {
    xyz::write(cloud.points(), cloud.normals())
}

pub fn cloud_to_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let cols = |f: fn(&Vec3) -> f64, v: &[Vec3]| v.iter().map(f).collect::<Vec<f64>>();
    let p = cloud.points();
    let mut data = vec![("x", cols(|v| v[0], p)), ("y", cols(|v| v[1], p)), ("z", cols(|v| v[2], p))];
    if let Some(n) = cloud.normals() {
        data.extend([("nx", cols(|v| v[0], n)), ("ny", cols(|v| v[1], n)), ("nz", cols(|v| v[2], n))]);
    }
    let out: Vec<ply::OutScalar> = data
        .iter()
        .map(|(name, values)| ply::OutScalar { name, values })
        .collect();
    ply::write(format, &out, None)
}

/// Writes a cloud as `.xyz` or binary `.ply`, chosen by extension.
pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    match extension(path).as_str() {
        "xyz" | "txt" => write_bytes(path, cloud_to_xyz(cloud).as_bytes()),
        "ply" => write_bytes(path, &cloud_to_ply(cloud, PlyFormat::BinaryLittleEndian)),
        other => Err(Error::InvalidArgument(format!(
            "{}: unsupported cloud extension `{other}`",
            label(path)
        ))),
    }
}

pub fn parse_obj(bytes: &[u8], label: &str) -> Result<TriangleMesh> {
    let (vertices, triangles) = obj::parse(utf8(bytes, label)?, label)?;
    TriangleMesh::new(vertices, triangles)
}

/// Parses a PLY mesh. Faces come from the `vertex_indices` (or
/// `vertex_index`) list and are fan-triangulated; a `quality` vertex
/// property becomes the mesh scalars.
pub fn parse_ply_mesh(bytes: &[u8], label: &str) -> Result<TriangleMesh> {
    let ply = ply::parse(bytes, label)?;
    let (vertices, _) = ply_vertices(&ply, label)?;
    let mut triangles = Vec::new();
    if let Some(face) = ply.element("face") {
        let lists = face
            .list(&["vertex_indices", "vertex_index"])
            .ok_or_else(|| Error::parse(label, 0, "face element has no vertex_indices list"))?;
        for (row, list) in lists.iter().enumerate() {
            if list.len() < 3 {
                return Err(Error::parse(label, 0, format!("face {row} has {} vertices", list.len())));
            }
            let idx = list
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 && v < vertices.len() as f64 {
                        Ok(v as usize)
                    } else {
                        Err(Error::parse(label, 0, format!("face {row} has bad vertex index {v}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            for k in 1..idx.len() - 1 {
                triangles.push([idx[0], idx[k], idx[k + 1]]);
            }
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles)?;
    if let Some(q) = ply.element("vertex").and_then(|v| v.scalar(QUALITY_PROPERTY)) {
        mesh.scalars = Some(q.to_vec());
    }
    Ok(mesh)
}

pub fn mesh_to_obj(mesh: &TriangleMesh) -> String {
    obj::write(&mesh.vertices, &mesh.triangles)
}

pub fn mesh_to_ply(mesh: &TriangleMesh, format: PlyFormat) -> Vec<u8> {
    let v = &mesh.vertices;
    let xs: Vec<f64> = v.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = v.iter().map(|p| p[1]).collect();
    let zs: Vec<f64> = v.iter().map(|p| p[2]).collect();
    let mut cols = vec![
        ply::OutScalar { name: "x", values: &xs },
        ply::OutScalar { name: "y", values: &ys },
        ply::OutScalar { name: "z", values: &zs },
    ];
    if let Some(s) = &mesh.scalars {
        cols.push(ply::OutScalar {
            name: QUALITY_PROPERTY,
            values: s,
        });
    }
    ply::write(format, &cols, Some(&mesh.triangles))
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = read_bytes(path)?;
    let name = label(path);
    match extension(path).as_str() {
        "obj" => parse_obj(&bytes, &name),
        "ply" => parse_ply_mesh(&bytes, &name),
        other => Err(Error::InvalidArgument(format!(
            "{name}: unsupported mesh extension `{other}` (expected .obj or .ply)"
        ))),
    }
}

/// Writes `.obj` or binary `.ply` by extension. OBJ has no scalar channel,
/// so scalars are only kept in PLY.
pub fn save_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match extension(path).as_str() {
        "obj" => write_bytes(path, mesh_to_obj(mesh).as_bytes()),
        "ply" => write_bytes(path, &mesh_to_ply(mesh, PlyFormat::BinaryLittleEndian)),
        other => Err(Error::InvalidArgument(format!(
            "{}: unsupported mesh extension `{other}`",
            label(path)
        ))),
    }
}

/// Uniform scale plus translation taking a cloud's bounding box to a cube
/// of side 1 centred at the origin: `x' = (x - center) * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Normalization {
    pub const IDENTITY: Self = Self {
        center: Vec3::new(0.0, 0.0, 0.0),
        scale: 1.0,
    };

    /// Fails when every point coincides.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        let first = *points
            .first()
            .ok_or_else(|| Error::Empty("cannot normalize an empty cloud".into()))?;
        let (lo, hi) = points
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        let extent = (hi - lo).max();
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidArgument("cloud has zero extent".into()));
        }
        Ok(Self {
            center: (lo + hi) * 0.5,
            scale: 1.0 / extent,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + self.center
    }

    /// Normals are unchanged by a uniform scale and a shift.
    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud.points().iter().map(|p| self.apply(p)).collect();
        PointCloud::new(points, cloud.normals().map(<[Vec3]>::to_vec)).expect("affine image of a valid cloud")
    }

    pub fn invert_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        TriangleMesh {
            vertices: mesh.vertices.iter().map(|p| self.invert(p)).collect(),
            ..mesh.clone()
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "center {:?} {:?} {:?}\nscale {:?}\n",
            self.center[0], self.center[1], self.center[2], self.scale
        )
    }

    pub fn parse(text: &str, label: &str) -> Result<Self> {
        let mut center = None;
        let mut scale = None;
        for (i, line) in text.lines().enumerate() {
            let words: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::parse(label, i + 1, format!("`{s}` is not a number")))
            };
            match words.as_slice() {
                [] => {}
                ["center", x, y, z] => center = Some(Vec3::new(num(x)?, num(y)?, num(z)?)),
                ["scale", s] => scale = Some(num(s)?),
                _ => return Err(Error::parse(label, i + 1, format!("unexpected line `{line}`"))),
            }
        }
        match (center, scale) {
            (Some(center), Some(scale)) if scale > 0.0 && scale.is_finite() && center.iter().all(|c| c.is_finite()) => {
                Ok(Self { center, scale })
            }
            _ => Err(Error::parse(label, 0, "needs a finite center and a positive scale")),
        }
    }
}

/// Rescales a cloud into the unit box and returns the transform used.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<(PointCloud, Normalization)> {
    let t = Normalization::fit(cloud.points())?;
    Ok((t.apply_cloud(cloud), t))
}
