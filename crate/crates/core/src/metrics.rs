//! Reconstruction quality: Chamfer (L1), F1, normal consistency and
//! Hausdorff distance between surface samples.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::meshing::TriangleMesh;
use crate::network::Vec3;
use crate::spatial::{KdTree, Metric};

pub const DEFAULT_F1_THRESHOLD: f64 = 5e-3;
pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;

/// Points on a surface with their unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSamples {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl SurfaceSamples {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("surface samples".into()));
        }
        if points.len() != normals.len() {
            return Err(Error::InvalidArgument(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| !((n.norm() - 1.0).abs() <= 1e-6)) {
            return Err(Error::InvalidArgument(format!("normal {i} is not unit length")));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteInput(format!("sample {i}")));
        }
        Ok(Self { points, normals })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-uniform samples of a mesh, with the index of each sample's source
/// triangle.
pub fn sample_mesh_indexed<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    count: usize,
    rng: &mut R,
) -> Result<(SurfaceSamples, Vec<usize>)> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    mesh.validate()?;
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += 0.5 * mesh.face_cross(t).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("mesh has zero total area".into()));
    }
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut faces = Vec::with_capacity(count);
    for _ in 0..count {
        let u = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangles[t];
        let (a, b, c) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let s = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        normals.push(mesh.face_cross(t).normalize());
        faces.push(t);
    }
    Ok((SurfaceSamples { points, normals }, faces))
}

pub fn sample_mesh<R: Rng + ?Sized>(mesh: &TriangleMesh, count: usize, rng: &mut R) -> Result<SurfaceSamples> {
    sample_mesh_indexed(mesh, count, rng).map(|(s, _)| s)
}

/// Distances from every point of `from` to its nearest point of `to`.
fn nearest(from: &[Vec3], to: &KdTree, metric: Metric) -> Vec<(usize, f64)> {
    from.iter()
        .map(|p| {
            let n = to.nearest(p, metric).expect("non-empty tree");
            (n.index, n.distance)
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// `10^3 * (mean_a min_b |a-b|_1 + mean_b min_a |a-b|_1) / 2`.
pub fn chamfer_l1(a: &[Vec3], b: &[Vec3]) -> f64 {
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    let ab = nearest(a, &tb, Metric::Manhattan);
    let ba = nearest(b, &ta, Metric::Manhattan);
    1e3 * 0.5 * (mean(ab.iter().map(|x| x.1), a.len()) + mean(ba.iter().map(|x| x.1), b.len()))
}

fn f1_from(ab: &[(usize, f64)], ba: &[(usize, f64)], threshold: f64) -> f64 {
    let precision = ab.iter().filter(|x| x.1 <= threshold).count() as f64 / ab.len() as f64;
    let recall = ba.iter().filter(|x| x.1 <= threshold).count() as f64 / ba.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

/// Harmonic mean of precision and recall at a Euclidean distance
/// threshold, scaled to [0, 100].
pub fn f1_score(a: &[Vec3], b: &[Vec3], threshold: f64) -> f64 {
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    f1_from(&nearest(a, &tb, Metric::Euclidean), &nearest(b, &ta, Metric::Euclidean), threshold)
}

fn nc_from(a: &SurfaceSamples, b: &SurfaceSamples, ab: &[(usize, f64)], ba: &[(usize, f64)]) -> f64 {
    let dir = |from: &SurfaceSamples, to: &SurfaceSamples, nn: &[(usize, f64)]| {
        mean(
            from.normals.iter().zip(nn).map(|(n, &(j, _))| n.dot(&to.normals[j]).abs()),
            nn.len(),
        )
    };
    100.0 * 0.5 * (dir(a, b, ab) + dir(b, a, ba))
}

/// Mean absolute cosine between each normal and that of its Euclidean
/// nearest neighbour, symmetrized and scaled to [0, 100].
pub fn normal_consistency(a: &SurfaceSamples, b: &SurfaceSamples) -> f64 {
    let (ta, tb) = (KdTree::new(&a.points), KdTree::new(&b.points));
    nc_from(
        a,
        b,
        &nearest(&a.points, &tb, Metric::Euclidean),
        &nearest(&b.points, &ta, Metric::Euclidean),
    )
}

pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> f64 {
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    let ab = nearest(a, &tb, Metric::Euclidean);
    let ba = nearest(b, &ta, Metric::Euclidean);
    ab.iter().chain(&ba).map(|x| x.1).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    /// Normal consistency, x100.
    pub nc: f64,
    /// L1 Chamfer distance, x1000.
    pub cd: f64,
    /// F1 score, x100.
    pub f1: f64,
    pub hausdorff: f64,
    pub sample_count: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "nc,cd,f1,hausdorff,samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{}",
            self.nc, self.cd, self.f1, self.hausdorff, self.sample_count
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric          value")?;
        writeln!(f, "NC  (x1e2)   {:>9.3}", self.nc)?;
        writeln!(f, "CD  (x1e3)   {:>9.4}", self.cd)?;
        writeln!(f, "F1  (x1e2)   {:>9.3}", self.f1)?;
        writeln!(f, "Hausdorff    {:>9.5}", self.hausdorff)?;
        write!(f, "samples      {:>9}", self.sample_count)
    }
}

/// All metrics between two sampled surfaces, sharing nearest-neighbour
/// queries between them.
pub fn compare(recon: &SurfaceSamples, truth: &SurfaceSamples, f1_threshold: f64) -> MetricsReport {
    let (ta, tb) = (KdTree::new(&recon.points), KdTree::new(&truth.points));
    let ab = nearest(&recon.points, &tb, Metric::Euclidean);
    let ba = nearest(&truth.points, &ta, Metric::Euclidean);
    let ab1 = nearest(&recon.points, &tb, Metric::Manhattan);
    let ba1 = nearest(&truth.points, &ta, Metric::Manhattan);
    MetricsReport {
        nc: nc_from(recon, truth, &ab, &ba),
        cd: 1e3 * 0.5 * (mean(ab1.iter().map(|x| x.1), ab1.len()) + mean(ba1.iter().map(|x| x.1), ba1.len())),
        f1: f1_from(&ab, &ba, f1_threshold),
        hausdorff: ab.iter().chain(&ba).map(|x| x.1).fold(0.0, f64::max),
        sample_count: recon.len().min(truth.len()),
    }
}

/// Samples both meshes with `count` points each and compares them.
pub fn evaluate_meshes<R: Rng + ?Sized>(
    recon: &TriangleMesh,
    truth: &TriangleMesh,
    count: usize,
    f1_threshold: f64,
    rng: &mut R,
) -> Result<MetricsReport> {
    if recon.is_empty() {
        return Err(Error::Empty("reconstructed mesh has no triangles".into()));
    }
    let a = sample_mesh(recon, count, rng)?;
    let b = sample_mesh(truth, count, rng)?;
    Ok(compare(&a, &b, f1_threshold))
}
