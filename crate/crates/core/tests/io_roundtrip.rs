use cadsdf::fixtures::{bbox_diagonal, distance_to_features, synth_fixture, FixtureKind, SPHERE_RADIUS};
use cadsdf::io::{self, Normalization, PlyFormat};
use cadsdf::{PointCloud, TriangleMesh, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(n: usize, normals: bool, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() * 1e-7, rng.random::<f64>() * 3e5);
    let points: Vec<Vec3> = (0..n).map(|_| v()).collect();
    let normals = normals.then(|| (0..n).map(|_| v().normalize()).collect());
    PointCloud::new(points, normals).unwrap()
}

#[test]
fn three_line_xyz() {
    let c = io::parse_xyz(b"0 0 0\n1 0 0\n0 1 0\n", "t.xyz").unwrap();
    assert_eq!(c.len(), 3);
    assert!(c.normals().is_none());
}

#[test]
fn ply_cloud_round_trips_bit_exactly() {
    let cloud = random_cloud(10_000, true, 7);
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let bytes = io::cloud_to_ply(&cloud, format);
        let back = io::parse_ply_cloud(&bytes, "c.ply").unwrap();
        assert_eq!(back, cloud, "{format:?}");
    }
}

#[test]
fn load_cloud_dedups_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.xyz");
    std::fs::write(&path, "0 0 0\n1 1 1\n0 0 0\n1 1 1\n2 2 2\n").unwrap();
    let loaded = io::load_cloud(&path).unwrap();
    assert_eq!(loaded.duplicates_removed, 2);
    assert_eq!(loaded.cloud.len(), 3);

    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "0 0 0\n1 1\n").unwrap();
    let e = io::load_cloud(&bad).unwrap_err().to_string();
    assert!(e.contains("bad.xyz") && e.contains("line 2"), "{e}");
    assert!(io::load_cloud(&dir.path().join("c.pcd")).is_err());
}

#[test]
fn mesh_round_trips_with_scalars() {
    let (mesh, _) = cadsdf::fixtures::ground_truth(FixtureKind::BoxMinusCylinder);
    let mut mesh = mesh;
    mesh.scalars = Some((0..mesh.vertices.len()).map(|i| i as f64 * 0.37).collect());
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let back = io::parse_ply_mesh(&io::mesh_to_ply(&mesh, format), "m.ply").unwrap();
        assert_eq!(back, mesh);
    }
    let obj = io::parse_obj(io::mesh_to_obj(&mesh).as_bytes(), "m.obj").unwrap();
    assert_eq!(obj.vertices, mesh.vertices);
    assert_eq!(obj.triangles, mesh.triangles);

    let dir = tempfile::tempdir().unwrap();
    for name in ["m.obj", "m.ply"] {
        let path = dir.path().join(name);
        io::save_mesh(&path, &mesh).unwrap();
        assert_eq!(io::load_mesh(&path).unwrap().triangles, mesh.triangles);
    }
}

#[test]
fn normalization_examples() {
    let corners: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64 * 2.0, ((i >> 1) & 1) as f64 * 2.0, ((i >> 2) & 1) as f64 * 2.0))
        .collect();
    let cloud = PointCloud::new(corners, None).unwrap();
    let (norm, t) = io::normalize_cloud(&cloud).unwrap();
    assert_eq!(t.scale, 0.5);
    for p in norm.points() {
        assert!(p.iter().all(|c| c.abs() == 0.5));
    }

    let unit: Vec<Vec3> = cloud.points().iter().map(|p| p * 0.5 - Vec3::repeat(0.5)).collect();
    let t = Normalization::fit(&unit).unwrap();
    assert!(t.center.norm() < 1e-12 && (t.scale - 1.0).abs() < 1e-12);

    let single = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0); 4], None).unwrap();
    assert!(io::normalize_cloud(&single).is_err());
}

#[test]
fn normalization_inverts_on_every_fixture() {
    for kind in FixtureKind::ALL {
        let fx = synth_fixture(kind, 2000, 0.01, 0.0, 3).unwrap();
        let shifted: Vec<Vec3> = fx.cloud.points().iter().map(|p| p * 3.7 + Vec3::new(5.0, -2.0, 0.3)).collect();
        let cloud = PointCloud::new(shifted.clone(), None).unwrap();
        let (norm, t) = io::normalize_cloud(&cloud).unwrap();
        assert!(norm.points().iter().all(|p| p.iter().all(|c| c.abs() <= 0.5 + 1e-12)));
        for (a, b) in norm.points().iter().zip(&shifted) {
            assert!((t.invert(a) - b).norm() < 1e-9, "{kind:?}");
        }
    }
}

#[test]
fn sphere_fixture_lies_on_the_sphere() {
    let fx = synth_fixture(FixtureKind::Sphere, 10_000, 0.0, 0.0, 0).unwrap();
    assert_eq!(fx.cloud.len(), 10_000);
    let normals = fx.cloud.normals().unwrap();
    for (p, n) in fx.cloud.points().iter().zip(normals) {
        assert!((p.norm() - SPHERE_RADIUS).abs() < 1e-9);
        assert!((n - p / p.norm()).norm() < 1e-12);
    }
}

#[test]
fn cube_noise_has_the_requested_spread() {
    let clean = synth_fixture(FixtureKind::Cube, 10_000, 0.0, 0.0, 11).unwrap();
    let noisy = synth_fixture(FixtureKind::Cube, 10_000, 0.005, 0.0, 11).unwrap();
    let want = 0.005 * bbox_diagonal(&clean.mesh);
    let d: Vec<f64> = clean
        .cloud
        .points()
        .iter()
        .zip(noisy.cloud.points())
        .flat_map(|(a, b)| (b - a).iter().copied().collect::<Vec<_>>())
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    assert!((sd / want - 1.0).abs() < 0.05, "{sd} vs {want}");
}

#[test]
fn missing_band_is_empty() {
    for kind in [FixtureKind::Cube, FixtureKind::Cylinder, FixtureKind::BoxMinusCylinder, FixtureKind::FandiskLikeWedge] {
        let fx = synth_fixture(kind, 5000, 0.0, 0.1, 5).unwrap();
        assert_eq!(fx.cloud.len(), 5000);
        let closest = fx
            .cloud
            .points()
            .iter()
            .map(|p| distance_to_features(&fx.features, p))
            .fold(f64::INFINITY, f64::min);
        assert!(closest >= 0.05, "{kind:?}: {closest}");
    }
}

#[test]
fn fixtures_are_pure_in_the_seed() {
    let a = synth_fixture(FixtureKind::FandiskLikeWedge, 500, 0.002, 0.05, 9).unwrap();
    let b = synth_fixture(FixtureKind::FandiskLikeWedge, 500, 0.002, 0.05, 9).unwrap();
    let c = synth_fixture(FixtureKind::FandiskLikeWedge, 500, 0.002, 0.05, 10).unwrap();
    assert_eq!(a.cloud, b.cloud);
    assert_ne!(a.cloud, c.cloud);
}

#[test]
fn samples_lie_on_the_ground_truth_mesh_faces() {
    // every clean sample must be within tessellation error of the GT surface
    for kind in FixtureKind::ALL {
        let fx = synth_fixture(kind, 300, 0.0, 0.0, 1).unwrap();
        let mesh: &TriangleMesh = &fx.mesh;
        for p in fx.cloud.points() {
            let d = mesh
                .triangles
                .iter()
                .map(|t| point_triangle_distance(p, &mesh.vertices[t[0]], &mesh.vertices[t[1]], &mesh.vertices[t[2]]))
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-4, "{kind:?}: {d}");
        }
    }
}

fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    // brute force over a fine barycentric lattice plus the exact plane
    // distance when the projection falls inside
    let n = (b - a).cross(&(c - a));
    let area2 = n.norm();
    let n = n / area2;
    let q = p - n * (p - a).dot(&n);
    let u = (b - q).cross(&(c - q)).dot(&n) / area2;
    let v = (c - q).cross(&(a - q)).dot(&n) / area2;
    let w = 1.0 - u - v;
    if u >= 0.0 && v >= 0.0 && w >= 0.0 {
        return (p - q).norm();
    }
    let seg = |x: &Vec3, y: &Vec3| {
        let t = ((p - x).dot(&(y - x)) / (y - x).norm_squared()).clamp(0.0, 1.0);
        (p - (x + (y - x) * t)).norm()
    };
    seg(a, b).min(seg(b, c)).min(seg(c, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xyz_round_trips_bit_exactly(
        pts in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 1..60),
        with_normals in any::<bool>(),
    ) {
        let points: Vec<Vec3> = pts.iter().map(|p| Vec3::from(*p)).collect();
        let normals = with_normals.then(|| points.iter().map(|p| p * 0.5).collect());
        let cloud = PointCloud::new(points, normals).unwrap();
        let back = io::parse_xyz(io::cloud_to_xyz(&cloud).as_bytes(), "p.xyz").unwrap();
        prop_assert_eq!(back, cloud);
    }

    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = io::parse_xyz(&bytes, "f");
        let _ = io::parse_ply_cloud(&bytes, "f");
        let _ = io::parse_obj(&bytes, "f");
        let _ = io::parse_ply_mesh(&bytes, "f");
    }

    #[test]
    fn ply_header_mutations_never_panic(cut in 0usize..200, flip in 0usize..200, byte in any::<u8>()) {
        let cloud = PointCloud::new(vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0, 2.0, 3.0)], None).unwrap();
        let mut bytes = io::cloud_to_ply(&cloud, PlyFormat::BinaryLittleEndian);
        let i = flip % bytes.len();
        bytes[i] = byte;
        bytes.truncate(cut.max(1).min(bytes.len()));
        let _ = io::parse_ply_cloud(&bytes, "f");
    }
}
