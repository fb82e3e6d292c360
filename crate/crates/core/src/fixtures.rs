//! Synthetic CAD-like shapes with exact normals, a ground-truth mesh and
//! their sharp feature curves.
//!
//! Points are drawn area-uniformly from analytic surface patches, so curved
//! parts (sphere, cylinder walls, hole) are sampled exactly rather than from
//! their tessellation.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::meshing::TriangleMesh;
use crate::network::Vec3;
use crate::sampling::PointCloud;

pub const SPHERE_RADIUS: f64 = 0.4;
pub const CUBE_HALF: f64 = 0.35;
pub const CYLINDER_RADIUS: f64 = 0.3;
pub const CYLINDER_HALF_HEIGHT: f64 = 0.35;
/// Box of half-extents (0.35, 0.35, 0.2) with a vertical hole of radius 0.15.
pub const HOLED_BOX_HALF: [f64; 3] = [0.35, 0.35, 0.2];
pub const HOLE_RADIUS: f64 = 0.15;

/// Segments per full turn in the tessellated ground truth.
const RING: usize = 256;
const ICOSPHERE_LEVEL: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FixtureKind {
    Sphere,
    Cube,
    Cylinder,
    BoxMinusCylinder,
    FandiskLikeWedge,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::Sphere,
        FixtureKind::Cube,
        FixtureKind::Cylinder,
        FixtureKind::BoxMinusCylinder,
        FixtureKind::FandiskLikeWedge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::Sphere => "sphere",
            FixtureKind::Cube => "cube",
            FixtureKind::Cylinder => "cylinder",
            FixtureKind::BoxMinusCylinder => "box_minus_cylinder",
            FixtureKind::FandiskLikeWedge => "fandisk_like_wedge",
        }
    }
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture `{s}`")))
    }
}

/// A sharp crease of the ground-truth shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SharpFeature {
    Segment { a: Vec3, b: Vec3 },
    /// Circle in the plane z = center.z, around the vertical axis.
    Circle { center: Vec3, radius: f64 },
}

impl SharpFeature {
    pub fn distance(&self, p: &Vec3) -> f64 {
        match *self {
            SharpFeature::Segment { a, b } => {
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm()
            }
            SharpFeature::Circle { center, radius } => {
                let d = p - center;
                let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                ((rho - radius).powi(2) + d[2] * d[2]).sqrt()
            }
        }
    }
}

pub fn distance_to_features(features: &[SharpFeature], p: &Vec3) -> f64 {
    features.iter().map(|f| f.distance(p)).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub kind: FixtureKind,
    pub cloud: PointCloud,
    pub mesh: TriangleMesh,
    pub features: Vec<SharpFeature>,
}

#[derive(Clone, Copy, Debug)]
enum Patch {
    /// Counter-clockwise seen from outside.
    Triangle([Vec3; 3]),
    Sphere { radius: f64 },
    CylinderWall { radius: f64, z0: f64, z1: f64, outward: bool },
    Disk { radius: f64, z: f64, up: bool },
    /// Axis-aligned rectangle centred on the z axis minus a central disk.
    HoledRect { half: [f64; 2], z: f64, hole: f64, up: bool },
}

impl Patch {
    fn area(&self) -> f64 {
        match *self {
            Patch::Triangle([a, b, c]) => 0.5 * (b - a).cross(&(c - a)).norm(),
            Patch::Sphere { radius } => 4.0 * PI * radius * radius,
            Patch::CylinderWall { radius, z0, z1, .. } => TAU * radius * (z1 - z0),
            Patch::Disk { radius, .. } => PI * radius * radius,
            Patch::HoledRect { half, hole, .. } => 4.0 * half[0] * half[1] - PI * hole * hole,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec3, Vec3) {
        let sign = |b: bool| if b { 1.0 } else { -1.0 };
        match *self {
            Patch::Triangle([a, b, c]) => {
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                let su = u.sqrt();
                let p = a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v);
                (p, (b - a).cross(&(c - a)).normalize())
            }
            Patch::Sphere { radius } => loop {
                let g = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                let len = g.norm();
                if len > 1e-12 {
                    let n = g / len;
                    break (n * radius, n);
                }
            },
            Patch::CylinderWall { radius, z0, z1, outward } => {
                let t = rng.random::<f64>() * TAU;
                let (s, c) = t.sin_cos();
                let z = z0 + rng.random::<f64>() * (z1 - z0);
                (Vec3::new(radius * c, radius * s, z), Vec3::new(c, s, 0.0) * sign(outward))
            }
            Patch::Disk { radius, z, up } => {
                let rho = radius * rng.random::<f64>().sqrt();
                let (s, c) = (rng.random::<f64>() * TAU).sin_cos();
                (Vec3::new(rho * c, rho * s, z), Vec3::new(0.0, 0.0, sign(up)))
            }
            Patch::HoledRect { half, z, hole, up } => loop {
                let x = rng.random_range(-half[0]..=half[0]);
                let y = rng.random_range(-half[1]..=half[1]);
                if x * x + y * y >= hole * hole {
                    break (Vec3::new(x, y, z), Vec3::new(0.0, 0.0, sign(up)));
                }
            },
        }
    }
}

/// Welds vertices by exact position so shared edges match.
#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    index: HashMap<[u64; 3], usize>,
}

impl MeshBuilder {
    fn vertex(&mut self, p: Vec3) -> usize {
        let key = [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            self.vertices.len() - 1
        })
    }

    /// Fan-triangulates a convex polygon given counter-clockwise from outside.
    fn polygon(&mut self, pts: &[Vec3]) {
        let ids: Vec<usize> = pts.iter().map(|&p| self.vertex(p)).collect();
        for k in 1..ids.len() - 1 {
            self.triangles.push([ids[0], ids[k], ids[k + 1]]);
        }
    }

    fn finish(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.triangles).expect("fixture mesh is valid")
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// Polyhedron from outward CCW faces: sampling patches, mesh and every edge
/// as a sharp feature.
fn polyhedron(faces: &[Vec<Vec3>]) -> (Vec<Patch>, TriangleMesh, Vec<SharpFeature>) {
    let mut b = MeshBuilder::default();
    let mut patches = Vec::new();
    let mut edges: Vec<(Vec3, Vec3)> = Vec::new();
    for f in faces {
        b.polygon(f);
        for k in 1..f.len() - 1 {
            patches.push(Patch::Triangle([f[0], f[k], f[k + 1]]));
        }
        for k in 0..f.len() {
            let (p, q) = (f[k], f[(k + 1) % f.len()]);
            if !edges.iter().any(|&(a, c)| (a == q && c == p) || (a == p && c == q)) {
                edges.push((p, q));
            }
        }
    }
    let features = edges.into_iter().map(|(a, b)| SharpFeature::Segment { a, b }).collect();
    (patches, b.finish(), features)
}

fn box_faces(h: [f64; 3]) -> Vec<Vec<Vec3>> {
    let [x, y, z] = h;
    vec![
        vec![v(x, -y, -z), v(x, y, -z), v(x, y, z), v(x, -y, z)],
        vec![v(-x, -y, -z), v(-x, -y, z), v(-x, y, z), v(-x, y, -z)],
        vec![v(-x, y, -z), v(-x, y, z), v(x, y, z), v(x, y, -z)],
        vec![v(-x, -y, -z), v(x, -y, -z), v(x, -y, z), v(-x, -y, z)],
        vec![v(-x, -y, z), v(x, -y, z), v(x, y, z), v(-x, y, z)],
        vec![v(-x, -y, -z), v(-x, y, -z), v(x, y, -z), v(x, -y, -z)],
    ]
}

fn icosphere(radius: f64, level: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        v(-1.0, t, 0.0),
        v(1.0, t, 0.0),
        v(-1.0, -t, 0.0),
        v(1.0, -t, 0.0),
        v(0.0, -1.0, t),
        v(0.0, 1.0, t),
        v(0.0, -1.0, -t),
        v(0.0, 1.0, -t),
        v(t, 0.0, -1.0),
        v(t, 0.0, 1.0),
        v(-t, 0.0, -1.0),
        v(-t, 0.0, 1.0),
    ]
    .iter()
    .map(|p| p.normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    let verts = verts.into_iter().map(|p| p * radius).collect();
    TriangleMesh::new(verts, tris).expect("icosphere is valid")
}

fn cylinder() -> (Vec<Patch>, TriangleMesh, Vec<SharpFeature>) {
    let (r, h) = (CYLINDER_RADIUS, CYLINDER_HALF_HEIGHT);
    let patches = vec![
        Patch::CylinderWall { radius: r, z0: -h, z1: h, outward: true },
        Patch::Disk { radius: r, z: h, up: true },
        Patch::Disk { radius: r, z: -h, up: false },
    ];
    let ring = |z: f64| -> Vec<Vec3> {
        (0..RING)
            .map(|i| {
                let (s, c) = (TAU * i as f64 / RING as f64).sin_cos();
                v(r * c, r * s, z)
            })
            .collect()
    };
    let (top, bot) = (ring(h), ring(-h));
    let mut b = MeshBuilder::default();
    for i in 0..RING {
        let j = (i + 1) % RING;
        b.polygon(&[bot[i], bot[j], top[j], top[i]]);
        b.polygon(&[v(0.0, 0.0, h), top[i], top[j]]);
        b.polygon(&[v(0.0, 0.0, -h), bot[j], bot[i]]);
    }
    let features = [h, -h]
        .map(|z| SharpFeature::Circle { center: v(0.0, 0.0, z), radius: r })
        .to_vec();
    (patches, b.finish(), features)
}

fn holed_box() -> (Vec<Patch>, TriangleMesh, Vec<SharpFeature>) {
    let [hx, hy, hz] = HOLED_BOX_HALF;
    let r = HOLE_RADIUS;
    let mut patches: Vec<Patch> = Vec::new();
    for f in &box_faces(HOLED_BOX_HALF)[..4] {
        patches.push(Patch::Triangle([f[0], f[1], f[2]]));
        patches.push(Patch::Triangle([f[0], f[2], f[3]]));
    }
    patches.push(Patch::HoledRect { half: [hx, hy], z: hz, hole: r, up: true });
    patches.push(Patch::HoledRect { half: [hx, hy], z: -hz, hole: r, up: false });
    patches.push(Patch::CylinderWall { radius: r, z0: -hz, z1: hz, outward: false });

    // square boundary walked counter-clockwise with exact corners, and the
    // hole rim at the same polar angles
    let m = RING / 4;
    let corners = [[hx, -hy], [hx, hy], [-hx, hy], [-hx, -hy]];
    let mut square = Vec::with_capacity(RING);
    for s in 0..4 {
        let (a, c) = (corners[s], corners[(s + 1) % 4]);
        for k in 0..m {
            let t = k as f64 / m as f64;
            square.push([a[0] + (c[0] - a[0]) * t, a[1] + (c[1] - a[1]) * t]);
        }
    }
    let rim: Vec<[f64; 2]> = square
        .iter()
        .map(|q| {
            let len = q[0].hypot(q[1]);
            [r * q[0] / len, r * q[1] / len]
        })
        .collect();
    let at = |p: [f64; 2], z: f64| v(p[0], p[1], z);
    let mut b = MeshBuilder::default();
    for i in 0..RING {
        let j = (i + 1) % RING;
        let (q0, q1, c0, c1) = (square[i], square[j], rim[i], rim[j]);
        b.polygon(&[at(q0, -hz), at(q1, -hz), at(q1, hz), at(q0, hz)]);
        b.polygon(&[at(q0, hz), at(q1, hz), at(c1, hz), at(c0, hz)]);
        b.polygon(&[at(q0, -hz), at(c0, -hz), at(c1, -hz), at(q1, -hz)]);
        b.polygon(&[at(c0, -hz), at(c0, hz), at(c1, hz), at(c1, -hz)]);
    }
    let (_, _, mut features) = polyhedron(&box_faces(HOLED_BOX_HALF));
    features.extend([hz, -hz].map(|z| SharpFeature::Circle { center: v(0.0, 0.0, z), radius: r }));
    (patches, b.finish(), features)
}

fn wedge_faces() -> Vec<Vec<Vec3>> {
    let (x, y, z) = (0.35, 0.3, 0.25);
    let b = [v(-x, -y, -z), v(x, -y, -z), v(x, y, -z), v(-x, y, -z)];
    let t = [v(-x, -y, z), v(-x, y, z)];
    vec![
        vec![b[0], b[3], b[2], b[1]],
        vec![b[0], t[0], t[1], b[3]],
        vec![b[1], b[2], t[1], t[0]],
        vec![b[0], b[1], t[0]],
        vec![b[3], t[1], b[2]],
    ]
}

fn shape(kind: FixtureKind) -> (Vec<Patch>, TriangleMesh, Vec<SharpFeature>) {
    match kind {
        FixtureKind::Sphere => (
            vec![Patch::Sphere { radius: SPHERE_RADIUS }],
            icosphere(SPHERE_RADIUS, ICOSPHERE_LEVEL),
            Vec::new(),
        ),
        FixtureKind::Cube => polyhedron(&box_faces([CUBE_HALF; 3])),
        FixtureKind::Cylinder => cylinder(),
        FixtureKind::BoxMinusCylinder => holed_box(),
        FixtureKind::FandiskLikeWedge => polyhedron(&wedge_faces()),
    }
}

/// Ground-truth mesh and sharp features of a fixture.
pub fn ground_truth(kind: FixtureKind) -> (TriangleMesh, Vec<SharpFeature>) {
    let (_, mesh, features) = shape(kind);
    (mesh, features)
}

pub fn bbox_diagonal(mesh: &TriangleMesh) -> f64 {
    let Some(&first) = mesh.vertices.first() else {
        return 0.0;
    };
    let (lo, hi) = mesh
        .vertices
        .iter()
        .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    (hi - lo).norm()
}

/// Samples `count` points from a fixture surface.
///
/// `noise_sigma` is the per-axis Gaussian displacement as a fraction of the
/// bounding-box diagonal. Points whose clean position lies within
/// `missing_fraction / 2` of a sharp feature are rejected and redrawn, so a
/// band of width `missing_fraction` around every crease is left empty.
/// Normals are those of the clean surface. Pure in `seed`.
pub fn synth_fixture(
    kind: FixtureKind,
    count: usize,
    noise_sigma: f64,
    missing_fraction: f64,
    seed: u64,
) -> Result<Fixture> {
    if count == 0 {
        return Err(Error::InvalidArgument("fixture count must be positive".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise_sigma}")));
    }
    if !(0.0..1.0).contains(&missing_fraction) {
        return Err(Error::InvalidArgument(format!(
            "missing fraction must lie in [0, 1), got {missing_fraction}"
        )));
    }
    let (patches, mesh, features) = shape(kind);
    let cdf: Vec<f64> = patches
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p.area();
            Some(*acc)
        })
        .collect();
    let total = *cdf.last().expect("at least one patch");
    let band = 0.5 * missing_fraction;
    let sigma = noise_sigma * bbox_diagonal(&mesh);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let max_draws = count.saturating_mul(200).max(10_000);
    let mut draws = 0;
    while points.len() < count && draws < max_draws {
        draws += 1;
        let u = rng.random::<f64>() * total;
        let patch = &patches[cdf.partition_point(|&c| c <= u).min(patches.len() - 1)];
        let (p, n) = patch.sample(&mut rng);
        if band > 0.0 && distance_to_features(&features, &p) < band {
            continue;
        }
        points.push(p);
        normals.push(n);
    }
    if points.len() < count {
        return Err(Error::InvalidArgument(format!(
            "missing fraction {missing_fraction} leaves too little of the {} surface to sample",
            kind.name()
        )));
    }
    if sigma > 0.0 {
        for p in &mut points {
            for c in p.iter_mut() {
                *c += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(Fixture {
        kind,
        cloud: PointCloud::new(points, Some(normals))?,
        mesh,
        features,
    })
}
