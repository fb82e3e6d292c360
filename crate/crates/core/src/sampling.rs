//! Point sets fed to the loss: manifold batches from the input cloud, uniform
//! far-field samples, Gaussian near-surface samples and their projections
//! onto the current zero set.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::ImplicitField;
use crate::losses::GRADIENT_EPS;
use crate::network::{JetOrder, Vec3};
use crate::spatial::KdTree;

/// Points in world space, with optional ground-truth normals that are only
/// ever used for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point cloud has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteInput(format!("point {i}")));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if let Some(i) = n.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
                return Err(Error::NonFiniteInput(format!("normal {i}")));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Option<Vec<Vec3>>) {
        (self.points, self.normals)
    }

    /// Drops exact (bitwise) duplicate positions, keeping the first
    /// occurrence. Returns the number removed.
    pub fn dedup(&mut self) -> usize {
        let mut seen = std::collections::HashSet::with_capacity(self.points.len());
        let mut keep = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            let key = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
            if seen.insert(key) {
                keep.push(i);
            }
        }
        let removed = self.points.len() - keep.len();
        if removed > 0 {
            self.points = keep.iter().map(|&i| self.points[i]).collect();
            if let Some(n) = &self.normals {
                self.normals = Some(keep.iter().map(|&i| n[i]).collect());
            }
        }
        removed
    }

    /// Whether every point lies in `[-0.6, 0.6]^3`.
    pub fn is_normalized(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.abs() <= 0.6))
    }
}

/// Per-point distance to the k-th nearest other point of the cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborScales(Vec<f64>);

impl NeighborScales {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn knn_scales(cloud: &PointCloud, k: usize) -> Result<NeighborScales> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must satisfy 1 <= k < {n} (cloud size)"
        )));
    }
    let tree = KdTree::new(cloud.points());
    let mut out = Vec::with_capacity(n);
    for (i, p) in cloud.points().iter().enumerate() {
        let sigma = tree.k_nearest(p, k, Some(i))[k - 1].distance;
        if sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "point {i} has {k} coincident neighbours; deduplicate the cloud first"
            )));
        }
        out.push(sigma);
    }
    Ok(NeighborScales(out))
}

/// One Gaussian draw around each cloud point, cycling over the cloud in a
/// fresh random order per pass until `count` points exist.
pub fn sample_omega<R: Rng + ?Sized>(
    cloud: &PointCloud,
    scales: &NeighborScales,
    count: usize,
    rng: &mut R,
) -> Vec<Vec3> {
    assert_eq!(scales.len(), cloud.len(), "scales do not match cloud");
    let n = cloud.len();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let take = (count - out.len()).min(n);
        for i in index::sample(rng, n, take) {
            let g = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            out.push(cloud.points()[i] + g * scales.0[i]);
        }
    }
    out
}

pub fn sample_uniform<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Vec3> {
    (0..count)
        .map(|_| {
            Vec3::new(
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub points: Vec<Vec3>,
    /// Points left in place because the gradient nearly vanished there.
    pub passed_through: usize,
}

/// One step of `x' = x - f(x) * grad f / |grad f|`.
///
/// The step is taken in the field's input frame and mapped back, so the
/// result does not depend on how the field scales its inputs.
pub fn project_to_surface<F: ImplicitField + ?Sized>(field: &F, points: &[Vec3]) -> Projection {
    let jets = field.input_jets(points, JetOrder::Gradient);
    let s = field.input_scale();
    let mut passed_through = 0;
    let projected = points
        .iter()
        .zip(&jets)
        .map(|(x, jet)| {
            let norm = jet.gradient.norm();
            if !(norm >= GRADIENT_EPS) || !jet.value.is_finite() {
                passed_through += 1;
                return *x;
            }
            x - jet.gradient * (jet.value / (norm * s))
        })
        .collect();
    Projection {
        points: projected,
        passed_through,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingConfig {
    pub batch_manifold: usize,
    pub batch_uniform: usize,
    pub batch_omega: usize,
    pub dynamic_sampling: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            batch_manifold: 10_000,
            batch_uniform: 15_000,
            batch_omega: 15_000,
            dynamic_sampling: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub manifold: Vec<Vec3>,
    pub uniform: Vec<Vec3>,
    pub near_surface: Vec<Vec3>,
    pub projected: Vec<Vec3>,
    pub passed_through: usize,
}

/// The random stream used for a given iteration. Each iteration owns an
/// independent stream, so a run resumed from a checkpoint draws exactly the
/// samples the uninterrupted run would have.
pub fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

pub fn make_batch<F: ImplicitField + ?Sized>(
    cloud: &PointCloud,
    scales: &NeighborScales,
    config: &SamplingConfig,
    field: &F,
    seed: u64,
    iteration: usize,
) -> SampleBatch {
    let mut rng = iteration_rng(seed, iteration);
    let m = cloud.len().min(config.batch_manifold);
    let manifold = index::sample(&mut rng, cloud.len(), m)
        .into_iter()
        .map(|i| cloud.points()[i])
        .collect();
    let uniform = sample_uniform(config.batch_uniform, &mut rng);
    let near_surface = sample_omega(cloud, scales, config.batch_omega, &mut rng);
    let (projected, passed_through) = if config.dynamic_sampling {
        let p = project_to_surface(field, &uniform);
        (p.points, p.passed_through)
    } else {
        (Vec::new(), 0)
    };
    SampleBatch {
        manifold,
        uniform,
        near_surface,
        projected,
        passed_through,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PlaneField, SphereSdf};
    use crate::network::FieldNetwork;

    fn cube_corners() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
        }
        PointCloud::new(pts, None).unwrap()
    }

    #[test]
    fn cube_corner_scales() {
        let s = knn_scales(&cube_corners(), 1).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 1.0));
        let s3 = knn_scales(&cube_corners(), 3).unwrap();
        assert!(s3.as_slice().iter().all(|&v| v == 1.0));
        let s4 = knn_scales(&cube_corners(), 4).unwrap();
        assert!(s4.as_slice().iter().all(|&v| v == 2f64.sqrt()));
    }

    #[test]
    fn knn_rejects_bad_k_and_duplicates() {
        assert!(knn_scales(&cube_corners(), 0).is_err());
        assert!(knn_scales(&cube_corners(), 8).is_err());
        let dup = PointCloud::new(vec![Vec3::x(), Vec3::x(), Vec3::y()], None).unwrap();
        assert!(knn_scales(&dup, 1).is_err());
    }

    #[test]
    fn dedup_keeps_first_and_normals() {
        let mut c = PointCloud::new(
            vec![Vec3::x(), Vec3::y(), Vec3::x(), Vec3::z()],
            Some(vec![Vec3::z(), Vec3::x(), Vec3::y(), Vec3::z()]),
        )
        .unwrap();
        assert_eq!(c.dedup(), 1);
        assert_eq!(c.points(), &[Vec3::x(), Vec3::y(), Vec3::z()]);
        assert_eq!(c.normals().unwrap(), &[Vec3::z(), Vec3::x(), Vec3::z()]);
    }

    #[test]
    fn zero_scale_omega_returns_sources() {
        let cloud = cube_corners();
        let scales = NeighborScales::from_vec(vec![0.0; 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sample_omega(&cloud, &scales, 20, &mut rng);
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|p| cloud.points().contains(p)));
        // each full pass covers every point once
        for p in cloud.points() {
            assert!(out[..8].contains(p));
        }
    }

    #[test]
    fn omega_spread_matches_sigma() {
        let cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::x()], None).unwrap();
        let scales = NeighborScales::from_vec(vec![0.02, 0.02]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = sample_omega(&cloud, &scales, 200_000, &mut rng);
        let near: Vec<&Vec3> = out.iter().filter(|p| p[0] < 0.5).collect();
        assert!((near.len() as f64 - 100_000.0).abs() < 1.0);
        for axis in 0..3 {
            let var = near.iter().map(|p| p[axis] * p[axis]).sum::<f64>() / near.len() as f64;
            assert!((var.sqrt() / 0.02 - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn uniform_samples_stay_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = sample_uniform(1_000_000, &mut rng);
        assert!(out.iter().all(|p| p.iter().all(|c| c.abs() <= 0.5)));
        let mean = out.iter().sum::<Vec3>() / out.len() as f64;
        assert!(mean.amax() < 0.01);
        assert_eq!(sample_uniform(1, &mut rng).len(), 1);
    }

    #[test]
    fn projection_onto_analytic_sphere() {
        let s = SphereSdf::new(0.4);
        let p = project_to_surface(&s, &[Vec3::new(0.0, 0.0, 0.5), Vec3::zeros()]);
        assert!((p.points[0] - Vec3::new(0.0, 0.0, 0.4)).norm() < 1e-15);
        assert_eq!(p.points[1], Vec3::zeros());
        assert_eq!(p.passed_through, 1);

        let on = Vec3::new(0.0, 0.4, 0.0);
        assert_eq!(project_to_surface(&s, &[on]).points[0], on);

        let plane = PlaneField::new(Vec3::new(1.0, 1.0, 0.0), 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = sample_uniform(100, &mut rng);
        for q in project_to_surface(&plane, &pts).points {
            assert!(plane.value(&q).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_frame_independent() {
        // a network evaluated with input scale 2 and the same parameters at
        // scale 1 over doubled inputs describe the same field
        let a = FieldNetwork::init_with_scale(&[3, 16, 16, 1], 30.0, 2.0, 8).unwrap();
        let b = FieldNetwork::from_params(&[3, 16, 16, 1], 30.0, 1.0, a.params().to_vec()).unwrap();
        let x = [Vec3::new(0.1, -0.2, 0.05)];
        let pa = project_to_surface(&a, &x).points[0];
        let pb = project_to_surface(&b, &[x[0] * 2.0]).points[0];
        assert!((pa * 2.0 - pb).norm() < 1e-12);
    }

    #[test]
    fn batches_are_deterministic_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = sample_uniform(300, &mut rng);
        let cloud = PointCloud::new(pts, None).unwrap();
        let scales = knn_scales(&cloud, 10).unwrap();
        let net = FieldNetwork::init(&[3, 8, 8, 1], 30.0, 1).unwrap();
        let cfg = SamplingConfig {
            batch_manifold: 500,
            batch_uniform: 40,
            batch_omega: 700,
            dynamic_sampling: true,
        };
        let a = make_batch(&cloud, &scales, &cfg, &net, 9, 3);
        let b = make_batch(&cloud, &scales, &cfg, &net, 9, 3);
        assert_eq!(a, b);
        assert_eq!(a.manifold.len(), 300);
        assert_eq!(a.uniform.len(), 40);
        assert_eq!(a.near_surface.len(), 700);
        assert_eq!(a.projected.len(), 40);
        assert!(a.manifold.iter().all(|p| cloud.points().contains(p)));
        let c = make_batch(&cloud, &scales, &cfg, &net, 9, 4);
        assert_ne!(a.uniform, c.uniform);
        let off = SamplingConfig {
            dynamic_sampling: false,
            ..cfg
        };
        assert!(make_batch(&cloud, &scales, &off, &net, 9, 3).projected.is_empty());
    }
}
