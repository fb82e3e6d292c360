//! Grid sampling of a field and zero-level extraction with marching cubes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::ImplicitField;
use crate::losses::gaussian_curvature;
use crate::mc_tables::{EDGE_TABLE, TRI_TABLE};
use crate::network::{JetOrder, Vec3};

/// Half-width of the sampled cube; 5% padding around the normalization box.
pub const GRID_EXTENT: f64 = 0.55;
pub const DEFAULT_RESOLUTION: usize = 256;
pub const MIN_RESOLUTION: usize = 2;

/// Field values at `resolution^3` nodes spanning `[-0.55, 0.55]^3`, with
/// both faces of the cube included. Stored row-major with x slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    resolution: usize,
    origin: f64,
    spacing: f64,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::InvalidArgument(format!("grid resolution {resolution} is below {MIN_RESOLUTION}")));
        }
        let expected = resolution
            .checked_pow(3)
            .ok_or_else(|| Error::InvalidArgument(format!("grid resolution {resolution} is too large")))?;
        if values.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {resolution}^3 grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("grid value {i}")));
        }
        Ok(Self {
            resolution,
            origin: -GRID_EXTENT,
            spacing: 2.0 * GRID_EXTENT / (resolution - 1) as f64,
            values,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin + i as f64 * self.spacing,
            self.origin + j as f64 * self.spacing,
            self.origin + k as f64 * self.spacing,
        )
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution + j) * self.resolution + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }
}

/// Evaluates the field at every grid node, one x-slab at a time.
pub fn sample_grid<F: ImplicitField + ?Sized>(field: &F, resolution: usize) -> Result<ScalarGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!("grid resolution {resolution} is below {MIN_RESOLUTION}")));
    }
    let spacing = 2.0 * GRID_EXTENT / (resolution - 1) as f64;
    let coord = |i: usize| -GRID_EXTENT + i as f64 * spacing;
    let mut values = Vec::with_capacity(resolution * resolution * resolution);
    let mut slab = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        slab.clear();
        for j in 0..resolution {
            for k in 0..resolution {
                slab.push(Vec3::new(coord(i), coord(j), coord(k)));
            }
        }
        values.extend(field.values(&slab));
    }
    ScalarGrid::new(resolution, values)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Optional per-vertex scalar, e.g. absolute Gaussian curvature.
    pub scalars: Option<Vec<f64>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            scalars: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteInput(format!("vertex {i}")));
        }
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidArgument(format!("triangle {t} indexes past {n} vertices")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidArgument(format!("triangle {t} repeats a vertex")));
            }
        }
        if let Some(s) = &self.scalars {
            if s.len() != n {
                return Err(Error::InvalidArgument(format!("{} scalars for {n} vertices", s.len())));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Area-weighted normal direction of a triangle (unnormalized, twice the
    /// area in length).
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * self.face_cross(t).norm()).sum()
    }

    /// How many triangles use each undirected edge.
    pub fn edge_valence(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge is shared by exactly two triangles, traversed in opposite
    /// directions.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(usize, usize), i32> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *directed.entry(key).or_insert(0) += if a < b { 1 } else { -1 };
            }
        }
        !self.triangles.is_empty()
            && directed.values().all(|&d| d == 0)
            && self.edge_valence().values().all(|&c| c == 2)
    }

    /// V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &i in tri {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_valence().len() as i64 + self.triangles.len() as i64
    }

    /// Signed enclosed volume; positive when faces are wound outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0)
            .sum()
    }
}

/// Cube corner offsets in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Endpoint corners of each cube edge.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the `iso` level set. Triangles are wound so their normals point
/// toward larger field values, i.e. outward for a field that is positive
/// outside. A grid that never crosses `iso` gives an empty mesh.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> TriangleMesh {
    let r = grid.resolution();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut welded: HashMap<(usize, u8), usize> = HashMap::new();

    for i in 0..r - 1 {
        for j in 0..r - 1 {
            for k in 0..r - 1 {
                let mut vals = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    vals[c] = grid.get(i + off[0], j + off[1], k + off[2]);
                    if vals[c] < iso {
                        case |= 1 << c;
                    }
                }
                let crossed = EDGE_TABLE[case];
                if crossed == 0 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                for (e, &[c0, c1]) in EDGES.iter().enumerate() {
                    if crossed & (1 << e) == 0 {
                        continue;
                    }
                    // key the vertex by the lower grid node and axis of the edge
                    let (a, b) = (CORNERS[c0], CORNERS[c1]);
                    let axis = (0..3).find(|&d| a[d] != b[d]).unwrap();
                    let lo = if a[axis] < b[axis] { a } else { b };
                    let node = grid.index(i + lo[0], j + lo[1], k + lo[2]);
                    edge_vertex[e] = *welded.entry((node, axis as u8)).or_insert_with(|| {
                        let (v0, v1) = (vals[c0], vals[c1]);
                        let p0 = grid.point(i + a[0], j + a[1], k + a[2]);
                        let p1 = grid.point(i + b[0], j + b[1], k + b[2]);
                        let t = if v1 != v0 { (iso - v0) / (v1 - v0) } else { 0.5 };
                        vertices.push(p0 + (p1 - p0) * t);
                        vertices.len() - 1
                    });
                }
                for tri in TRI_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let (a, b, c) = (
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[1] as usize],
                        edge_vertex[tri[2] as usize],
                    );
                    if a != b && b != c && a != c {
                        // the table winds toward the inside
                        triangles.push([a, c, b]);
                    }
                }
            }
        }
    }
    TriangleMesh {
        vertices,
        triangles,
        scalars: None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureColors {
    pub values: Vec<f64>,
    /// Vertices where the gradient vanished; their value is 0.
    pub guarded: usize,
}

/// `|k|` at every vertex, with curvature measured in the field's input
/// frame (the frame the curvature penalty acts in).
pub fn curvature_colors<F: ImplicitField + ?Sized>(field: &F, mesh: &TriangleMesh) -> CurvatureColors {
    let jets = field.input_jets(&mesh.vertices, JetOrder::Hessian);
    let mut guarded = 0;
    let values = jets
        .iter()
        .map(|j| {
            let k = gaussian_curvature(j);
            if k.guarded || !k.value.is_finite() {
                guarded += 1;
                0.0
            } else {
                k.value.abs()
            }
        })
        .collect();
    CurvatureColors { values, guarded }
}
