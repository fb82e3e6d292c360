//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default. `CADSDF_ACCEPTANCE=1,2,9` restricts the
//! run to the listed criteria. This target reports and does not gate: it
//! exits nonzero on a failed criterion only when `CADSDF_ACCEPTANCE_STRICT`
//! is set. Artifacts of the end-to-end runs are kept under
//! `target/tmp/acceptance`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cadsdf::checkpoint::Checkpoint;
use cadsdf::field::{CylinderSdf, PlaneField, SphereSdf};
use cadsdf::fixtures::{distance_to_features, ground_truth, FixtureKind};
use cadsdf::losses::{self, annealing_tau, gauss_term, gaussian_curvature, AnnealingMode, DoubleTrough, LossWeights};
use cadsdf::meshing::{marching_cubes, sample_grid};
use cadsdf::metrics::{chamfer_l1, compare, f1_score, hausdorff, normal_consistency, SurfaceSamples};
use cadsdf::sampling::{knn_scales, sample_omega};
use cadsdf::spatial::{KdTree, Metric};
use cadsdf::{io, FieldNetwork, Jet2, JetOrder, Vec3};
use nalgebra::{Matrix2, Matrix3, Matrix3x2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reduced end-to-end scale: see the README's acceptance notes.
const E2E_RUN: &str = "iterations = 2000
layer_sizes = 3,128,128,128,128,1
batch_manifold = 1000
batch_uniform = 1000
batch_omega = 1000
init = geometric
mesh_resolution = 128
";
const E2E_POINTS: &str = "2000";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() <= budget_s
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cadsdf"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("`cadsdf {}`: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// nc, cd, f1 from `eval --csv`.
fn eval_csv(dir: &Path, mesh: &str, gt: &str) -> Result<[f64; 3], String> {
    let out = cli(dir, &["eval", mesh, gt, "--csv"])?;
    let row = out.lines().nth(1).ok_or("eval printed no row")?;
    let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap_or(f64::NAN)).collect();
    Ok([v[0], v[1], v[2]])
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn box_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
        .collect()
}

fn criterion_1() -> Outcome {
    let dt = DoubleTrough::default();
    let mut worst: f64 = 0.0;
    for f in [losses::double_trough as fn(f64) -> f64, |t| DoubleTrough::default().eval(t)] {
        worst = worst
            .max(f(0.0).abs())
            .max((f(FRAC_PI_4) - FRAC_PI_4).abs())
            .max((f(FRAC_PI_2) - 0.25).abs());
    }
    let h = 1e-5;
    let slope = |t: f64| (dt.eval(t + h) - dt.eval(t - h)) / (2.0 * h);
    let (s1, s2) = (slope(FRAC_PI_4).abs(), slope(FRAC_PI_2).abs());
    outcome(
        worst <= 1e-12 && s1 <= 1e-8 && s2 <= 1e-8,
        format!("max value error {worst:.1e}, |DT'(pi/4)| {s1:.1e}, |DT'(pi/2)| {s2:.1e}"),
    )
}

fn tangent_plane_curvature(jet: &Jet2) -> f64 {
    let n = jet.gradient.normalize();
    let helper = if n[0].abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    let t = Matrix3x2::from_columns(&[t1, t2]);
    let s: Matrix2<f64> = t.transpose() * jet.hessian * t;
    let ev = s.symmetric_eigenvalues();
    ev[0] * ev[1] / jet.gradient.norm_squared()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut plane_max: f64 = 0.0;
    for _ in 0..100 {
        let plane = PlaneField::new(unit(&mut rng), rng.random_range(-0.3..0.3));
        plane_max = plane_max.max(gaussian_curvature(&plane.jet(&(unit(&mut rng) * 0.5))).value.abs());
    }
    let mut sphere_err: f64 = 0.0;
    for r in [0.3, 0.4, 1.0] {
        let s = SphereSdf::new(r);
        for _ in 0..100 {
            let k = gaussian_curvature(&s.jet(&(unit(&mut rng) * r))).value;
            sphere_err = sphere_err.max((k - 1.0 / (r * r)).abs());
        }
    }
    let cyl = CylinderSdf { radius: 0.3 };
    let mut cyl_max: f64 = 0.0;
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let p = Vec3::new(0.3 * t.cos(), 0.3 * t.sin(), rng.random_range(-0.5..0.5));
        cyl_max = cyl_max.max(gaussian_curvature(&cyl.jet(&p)).value.abs());
    }
    let mut oracle_err: f64 = 0.0;
    for _ in 0..100 {
        let g = unit(&mut rng) * rng.random_range(0.1..3.0);
        let mut h = Matrix3::zeros();
        for i in 0..3 {
            for j in i..3 {
                let v = rng.random_range(-2.0..2.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let jet = Jet2::new(0.0, g, h);
        let want = tangent_plane_curvature(&jet);
        oracle_err = oracle_err.max((gaussian_curvature(&jet).value - want).abs() / want.abs().max(1.0));
    }
    outcome(
        plane_max == 0.0 && sphere_err <= 1e-9 && cyl_max <= 1e-9 && oracle_err <= 1e-8,
        format!("plane {plane_max:.1e}, sphere {sphere_err:.1e}, cylinder {cyl_max:.1e}, oracle {oracle_err:.1e}"),
    )
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-4;
    let (mut worst_g, mut worst_h): (f64, f64) = (0.0, 0.0);
    for draw in 0..100 {
        let mut net = FieldNetwork::init(&[3, 16, 16, 1], 30.0, draw).unwrap();
        let params: Vec<f64> = net
            .params()
            .iter()
            .map(|&p| if p == 0.0 { rng.random_range(-0.5..0.5) } else { p })
            .collect();
        net.set_params(&params).unwrap();
        let x = box_points(&mut rng, 1)[0];
        let jet = net.eval_jet(&x).unwrap();
        let mut g = Vec3::zeros();
        let mut hm = Matrix3::zeros();
        for i in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[i] += h;
            xm[i] -= h;
            g[i] = (net.eval(&xp).unwrap() - net.eval(&xm).unwrap()) / (2.0 * h);
            let col = (net.eval_jet(&xp).unwrap().gradient - net.eval_jet(&xm).unwrap().gradient) / (2.0 * h);
            hm.set_column(i, &col);
        }
        worst_g = worst_g.max(rel_err(jet.gradient.as_slice(), g.as_slice()));
        worst_h = worst_h.max(rel_err(jet.hessian.as_slice(), hm.as_slice()));
    }

    let net = FieldNetwork::init(&[3, 16, 16, 1], 30.0, 11).unwrap();
    let (p, q, o) = (box_points(&mut rng, 32), box_points(&mut rng, 32), box_points(&mut rng, 32));
    let weights = LossWeights::default();
    let tau = 1.0;
    let groups = losses::loss_groups(&p, &q, &o, &[], weights.regularizer);
    let loss_of = |n: &FieldNetwork| {
        let jets: Vec<Vec<Jet2>> = groups.iter().map(|g| n.eval_input_jets(g.points, g.order).unwrap()).collect();
        losses::total_loss_with_adjoints(&jets, &weights, tau).unwrap().0.total
    };
    let (_, grad) = net
        .loss_param_gradient(&groups, |jets| {
            let (b, adj) = losses::total_loss_with_adjoints(jets, &weights, tau)?;
            Ok((b.total, adj))
        })
        .unwrap();
    let base = net.params().to_vec();
    let mut probe = net.clone();
    let mut fd = vec![0.0; base.len()];
    let mut params = base.clone();
    let step = 1e-5;
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_params(&params).unwrap();
        let up = loss_of(&probe);
        params[i] = base[i] - step;
        probe.set_params(&params).unwrap();
        let down = loss_of(&probe);
        params[i] = base[i];
        fd[i] = (up - down) / (2.0 * step);
    }
    let worst_p = rel_err(grad.as_slice(), &fd);
    outcome(
        worst_g < 1e-4 && worst_h < 1e-4 && worst_p < 1e-3,
        format!("jet gradient {worst_g:.1e}, jet Hessian {worst_h:.1e}, parameter gradient {worst_p:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let grid = sample_grid(&SphereSdf::new(0.4), 128).unwrap();
    let mesh = marching_cubes(&grid, 0.0);
    let cell_diag = grid.spacing() * 3f64.sqrt();
    let worst = mesh.vertices.iter().map(|v| (v.norm() - 0.4).abs()).fold(0.0, f64::max);
    let (tight, euler) = (mesh.is_watertight(), mesh.euler_characteristic());
    outcome(
        tight && euler == 2 && worst < cell_diag,
        format!("watertight {tight}, euler {euler}, max radius error {worst:.2e} (cell diagonal {cell_diag:.2e})"),
    )
}

fn fit_fixture(dir: &Path, name: &str, synth: &[&str], extra: &str) -> Result<(), String> {
    let cloud = format!("{name}.xyz");
    let gt = format!("{name}_gt.obj");
    let mut args = vec!["synth"];
    args.extend_from_slice(synth);
    args.extend_from_slice(&["--count", E2E_POINTS, "--out", &cloud, "--gt", &gt]);
    cli(dir, &args)?;
    let cfg = format!("{name}.cfg");
    let out = format!("{name}_out");
    std::fs::write(dir.join(&cfg), format!("input = {cloud}\noutput = {out}\n{E2E_RUN}{extra}")).unwrap();
    cli(dir, &["fit", &cfg, "--progress", "0"])?;
    let model = format!("{out}/model.bin");
    let mesh = format!("{name}_mesh.ply");
    cli(dir, &["mesh", &model, "--res", "128", "--out", &mesh, "--curvature"])?;
    Ok(())
}

/// The loss terms of the last training iteration, for failure reports.
fn final_terms(dir: &Path, name: &str) -> String {
    let log = std::fs::read_to_string(dir.join(format!("{name}_out/log.csv"))).unwrap_or_default();
    let mut lines = log.lines();
    let (Some(header), Some(last)) = (lines.next(), lines.last()) else {
        return "no training log".into();
    };
    let terms: Vec<String> = header
        .split(',')
        .zip(last.split(','))
        .map(|(k, v)| format!("{k} {}", v.parse::<f64>().map_or(v.to_string(), |x| format!("{x:.3e}"))))
        .collect();
    format!("last iteration: {}", terms.join(", "))
}

fn criterion_5() -> Result<Outcome, String> {
    let dir = work_dir("sphere");
    let start = Instant::now();
    fit_fixture(&dir, "sphere", &["sphere", "--seed", "1"], "")?;
    let [nc, cd, f1] = eval_csv(&dir, "sphere_mesh.ply", "sphere_gt.obj").map_err(|e| format!("{e}; {}", final_terms(&dir, "sphere")))?;
    let t = start.elapsed();
    Ok(outcome(
        cd < 5.0 && nc > 97.0 && f1 > 85.0 && within(t, 1200.0),
        format!("CD {cd:.3}, NC {nc:.2}, F1 {f1:.2}, {:.0}s", t.as_secs_f64()),
    ))
}

/// The training cloud as `fit` saw it, in the network's frame.
fn normalized_cloud(dir: &Path, cloud: &str) -> cadsdf::PointCloud {
    let raw = io::load_cloud(&dir.join(cloud)).unwrap().cloud;
    io::normalize_cloud(&raw).unwrap().0
}

fn held_out_dt(dir: &Path, name: &str) -> f64 {
    let cloud = normalized_cloud(dir, &format!("{name}.xyz"));
    let scales = knn_scales(&cloud, 50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0fff);
    let omega = sample_omega(&cloud, &scales, 5000, &mut rng);
    let net = Checkpoint::load(&dir.join(format!("{name}_out/model.bin"))).unwrap().network;
    let jets = net.eval_input_jets(&omega, JetOrder::Hessian).unwrap();
    gauss_term(&jets, Some(&DoubleTrough::default())).value
}

fn criterion_6() -> Result<Outcome, String> {
    let dir = work_dir("cube");
    let start = Instant::now();
    fit_fixture(&dir, "plain", &["cube", "--seed", "2"], "regularizer = none\n")?;
    fit_fixture(&dir, "gauss", &["cube", "--seed", "2"], "regularizer = gauss_dt\n")?;
    let (dt0, dt1) = (held_out_dt(&dir, "plain"), held_out_dt(&dir, "gauss"));
    let dt = format!("mean DT(|k|) {dt1:.4e} vs {dt0:.4e} unregularized");
    let [nc0, cd0, _] = eval_csv(&dir, "plain_mesh.ply", "plain_gt.obj").map_err(|e| format!("{dt}; {e}"))?;
    let [nc1, cd1, _] = eval_csv(&dir, "gauss_mesh.ply", "gauss_gt.obj").map_err(|e| format!("{dt}; {e}"))?;
    let t = start.elapsed();
    Ok(outcome(
        dt1 < dt0 && cd1 <= 1.1 * cd0 && nc1 >= 0.9 * nc0 && within(t, 2400.0),
        format!(
            "{dt}; CD {cd1:.3} vs {cd0:.3}; NC {nc1:.2} vs {nc0:.2}; {:.0}s",
            t.as_secs_f64()
        ),
    ))
}

/// (vertices with |k| > 1 within 0.05 of a GT edge, all vertices)
fn sharp_vertices_near_edges(dir: &Path, mesh: &str) -> (usize, usize) {
    let mesh = io::load_mesh(&dir.join(mesh)).unwrap();
    let (_, features) = ground_truth(FixtureKind::Cube);
    let k = mesh.scalars.unwrap_or_default();
    let sharp = mesh
        .vertices
        .iter()
        .zip(&k)
        .filter(|(v, &k)| k > 1.0 && distance_to_features(&features, v) <= 0.05)
        .count();
    (sharp, mesh.vertices.len())
}

fn criterion_7() -> Result<Outcome, String> {
    let dir = work_dir("incomplete");
    let synth = ["cube", "--seed", "3", "--missing", "0.1"];
    fit_fixture(&dir, "dynamic", &synth, "dynamic_sampling = true\n")?;
    fit_fixture(&dir, "fixed", &synth, "dynamic_sampling = false\n")?;
    let (on, on_total) = sharp_vertices_near_edges(&dir, "dynamic_mesh.ply");
    let (off, off_total) = sharp_vertices_near_edges(&dir, "fixed_mesh.ply");
    Ok(outcome(
        on > off,
        format!(
            "vertices with |k| > 1 within 0.05 of edges: {on} of {on_total} with dynamic sampling, {off} of {off_total} without"
        ),
    ))
}

fn criterion_8() -> Outcome {
    let t = 10_000;
    let tau = |i| annealing_tau(i, t, AnnealingMode::Paper);
    let got = [tau(0), tau(t / 5), tau(t / 2), tau(t)];
    outcome(got == [1.0, 1.0, 1e-4, 0.0], format!("tau at 0, 0.2T, 0.5T, T = {got:?}"))
}

fn brute_nearest(q: &Vec3, pts: &[Vec3], l1: bool) -> f64 {
    pts.iter()
        .map(|p| {
            let d = q - p;
            if l1 {
                d.abs().sum()
            } else {
                d.norm()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..20 {
        let na = rng.random_range(1..=300);
        let nb = rng.random_range(1..=300);
        let (a, b) = (box_points(&mut rng, na), box_points(&mut rng, nb));
        let mean = |from: &[Vec3], to: &[Vec3]| from.iter().map(|q| brute_nearest(q, to, true)).sum::<f64>() / from.len() as f64;
        let cd = 0.5 * (mean(&a, &b) + mean(&b, &a));
        let hd = |from: &[Vec3], to: &[Vec3]| from.iter().map(|q| brute_nearest(q, to, false)).fold(0.0, f64::max);
        let hausd = hd(&a, &b).max(hd(&b, &a));
        let count_within = |from: &[Vec3], to: &[Vec3]| {
            from.iter().filter(|q| brute_nearest(q, to, false) <= 0.1).count() as f64 / from.len() as f64
        };
        let (prec, rec) = (count_within(&a, &b), count_within(&b, &a));
        let f1 = if prec + rec == 0.0 { 0.0 } else { 200.0 * prec * rec / (prec + rec) };
        if (chamfer_l1(&a, &b) - cd * 1e3).abs() > 1e-9 * cd * 1e3 || (f1_score(&a, &b, 0.1) - f1).abs() > 1e-9 {
            mismatches += 1;
        }
        if hausdorff(&a, &b) != hausd {
            mismatches += 1;
        }
        let tree = KdTree::new(&b);
        for q in &a {
            let l2 = tree.nearest(q, Metric::Euclidean).unwrap().distance;
            let l1 = tree.nearest(q, Metric::Manhattan).unwrap().distance;
            if l2 != brute_nearest(q, &b, false) || l1 != brute_nearest(q, &b, true) {
                mismatches += 1;
            }
        }
    }
    let pts: Vec<Vec3> = (0..200).map(|_| unit(&mut rng) * 0.4).collect();
    let normals: Vec<Vec3> = pts.iter().map(|p| p.normalize()).collect();
    let s = SurfaceSamples::new(pts.clone(), normals).unwrap();
    let (f1, nc, cd) = (f1_score(&pts, &pts, 5e-3), normal_consistency(&s, &s), chamfer_l1(&pts, &pts));
    let report = compare(&s, &s, 5e-3);
    let identity = f1 == 100.0 && nc == 100.0 && cd == 0.0 && report.f1 == 100.0 && report.nc == 100.0 && report.cd == 0.0;
    outcome(
        mismatches == 0 && identity,
        format!("{mismatches} mismatches against brute force; f1(A,A) {f1}, nc(A,A) {nc}, cd(A,A) {cd}"),
    )
}

fn criterion_10() -> Result<Outcome, String> {
    let dir = work_dir("determinism");
    cli(&dir, &["synth", "cube", "--count", "1000", "--out", "cube.xyz"])?;
    let cfg = "input = cube.xyz\niterations = 60\nlayer_sizes = 3,32,32,32,1\nbatch_manifold = 300\nbatch_uniform = 300\nbatch_omega = 300\ncheckpoint_every = 25\nseed = 17\ndeterministic = true\n";
    std::fs::write(dir.join("run.cfg"), cfg).unwrap();
    cli(&dir, &["fit", "run.cfg", "--out", "a", "--progress", "0"])?;
    cli(&dir, &["fit", "run.cfg", "--out", "b", "--progress", "0"])?;
    let mut differing = Vec::new();
    for f in ["model.bin", "checkpoint.bin", "log.csv"] {
        if std::fs::read(dir.join("a").join(f)).ok() != std::fs::read(dir.join("b").join(f)).ok() {
            differing.push(f);
        }
    }
    Ok(outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "checkpoints and logs bit-identical".to_string()
        } else {
            format!("differing files: {differing:?}")
        },
    ))
}

fn criterion_11() -> Result<Outcome, String> {
    let dir = work_dir("bench");
    let out = cli(&dir, &["bench", "--iterations", "2", "--warmup", "1"])?;
    let summary = out
        .lines()
        .find(|l| l.starts_with("per-iteration wall time"))
        .ok_or("bench printed no summary")?;
    let mean: f64 = summary
        .split("mean ")
        .nth(1)
        .and_then(|s| s.split(' ').next())
        .and_then(|s| s.parse().ok())
        .ok_or("unparseable summary")?;
    Ok(outcome(mean.is_finite() && mean > 0.0, format!("default configuration: {mean:.1} ms per iteration")))
}

/// (id, name, runtime budget in seconds, check)
type Criterion = (usize, &'static str, f64, fn() -> Result<Outcome, String>);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("CADSDF_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 11] = [
        (1, "double-trough exactness", 1.0, || Ok(criterion_1())),
        (2, "curvature oracle", 5.0, || Ok(criterion_2())),
        (3, "derivative correctness", 120.0, || Ok(criterion_3())),
        (4, "marching cubes on sphere stub", 30.0, || Ok(criterion_4())),
        (5, "end-to-end sphere fit", f64::INFINITY, criterion_5),
        (6, "end-to-end cube fit, regularizer ablation", f64::INFINITY, criterion_6),
        (7, "incomplete data, dynamic sampling", f64::INFINITY, criterion_7),
        (8, "annealing schedule", 1.0, || Ok(criterion_8())),
        (9, "metric oracles", 30.0, || Ok(criterion_9())),
        (10, "determinism", f64::INFINITY, criterion_10),
        (11, "benchmark report", f64::INFINITY, criterion_11),
    ];
    let (mut failed, mut ran) = (0, 0);
    for (id, name, budget, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) if secs > budget => (false, format!("{} (took {secs:.1}s, budget {budget}s)", o.detail)),
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, e),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("{failed} of {ran} criteria failed");
    if failed > 0 && std::env::var_os("CADSDF_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
