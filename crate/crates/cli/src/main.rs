use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cadsdf::checkpoint::Checkpoint;
use cadsdf::fixtures::{synth_fixture, FixtureKind};
use cadsdf::io::{self, Normalization, RunConfig};
use cadsdf::meshing::{curvature_colors, marching_cubes, sample_grid, DEFAULT_RESOLUTION};
use cadsdf::metrics::{evaluate_meshes, MetricsReport, DEFAULT_F1_THRESHOLD, DEFAULT_SAMPLE_COUNT};
use cadsdf::optimizer::{fit, FitOptions, TrainConfig, Trainer, CHECKPOINT_FILE};
use cadsdf::{Error, FieldNetwork, Result, TriangleMesh};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the normalization record written next to the trained model.
const TRANSFORM_FILE: &str = "transform.txt";
const RESOLVED_CONFIG_FILE: &str = "config.txt";
const FIXTURE_MESH_FILE: &str = "ground_truth.obj";
const FIT_MESH_FILE: &str = "mesh.ply";
const METRICS_FILE: &str = "metrics.csv";

#[derive(Parser)]
#[command(name = "cadsdf", version, about = "Neural SDF reconstruction of CAD-like surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a field from a run config; writes log.csv, checkpoints and model.bin.
    Fit {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the output directory's checkpoint.bin.
        #[arg(long)]
        resume: bool,
        /// Progress line every N iterations (0 silences it).
        #[arg(long, default_value_t = 100)]
        progress: usize,
    },
    /// Extract the zero level set of a trained field.
    Mesh {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        res: usize,
        /// Output .obj or .ply (default: mesh_<res>.ply beside the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Store |Gaussian curvature| per vertex as a PLY quality property.
        #[arg(long)]
        curvature: bool,
        /// Normalization record to undo (default: transform.txt beside the checkpoint).
        #[arg(long, conflicts_with = "raw")]
        transform: Option<PathBuf>,
        /// Keep the mesh in the network's normalized frame.
        #[arg(long)]
        raw: bool,
    },
    /// Compare a mesh against ground truth.
    Eval {
        mesh: PathBuf,
        ground_truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_F1_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print a CSV header and row instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Write a synthetic fixture cloud and optionally its ground-truth mesh.
    Synth {
        kind: FixtureKind,
        /// Cloud file, .xyz or .ply.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth mesh file, .obj or .ply.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        /// Gaussian displacement per axis, as a fraction of the bounding-box diagonal.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Width of the empty band left around sharp edges.
        #[arg(long, default_value_t = 0.0)]
        missing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time training iterations of a configuration (default: the full-size network).
    Bench {
        /// Run config to time; defaults to the built-in configuration on a sphere fixture.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Fixture size when no config is given.
        #[arg(long, default_value_t = 10_000)]
        count: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            config,
            out,
            resume,
            progress,
        } => run_fit(&config, out, resume, progress),
        Command::Mesh {
            checkpoint,
            res,
            out,
            curvature,
            transform,
            raw,
        } => run_mesh(&checkpoint, res, out, curvature, transform, raw),
        Command::Eval {
            mesh,
            ground_truth,
            samples,
            threshold,
            seed,
            csv,
        } => run_eval(&mesh, &ground_truth, samples, threshold, seed, csv),
        Command::Synth {
            kind,
            out,
            gt,
            count,
            noise,
            missing,
            seed,
        } => run_synth(kind, &out, gt.as_deref(), count, noise, missing, seed),
        Command::Bench {
            config,
            iterations,
            warmup,
            count,
        } => run_bench(config.as_deref(), iterations, warmup, count),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Loads or generates the training cloud described by a run config, in its
/// original frame.
fn config_cloud(cfg: &RunConfig) -> Result<(cadsdf::PointCloud, Option<cadsdf::TriangleMesh>)> {
    if let Some(f) = &cfg.fixture {
        let fx = synth_fixture(f.kind, f.count, f.noise, f.missing, f.seed)?;
        return Ok((fx.cloud, Some(fx.mesh)));
    }
    let path = cfg.input.as_ref().expect("validated config has an input");
    let loaded = io::load_cloud(path)?;
    if loaded.duplicates_removed > 0 {
        eprintln!("{}: removed {} duplicate points", path.display(), loaded.duplicates_removed);
    }
    Ok((loaded.cloud, None))
}

fn run_fit(config: &Path, out: Option<PathBuf>, resume: bool, progress: usize) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(out) = out {
        cfg.output = out;
    }
    cfg.check_paths()?;
    let (cloud, fixture_mesh) = config_cloud(&cfg)?;
    let transform = if cfg.normalize {
        Normalization::fit(cloud.points())?
    } else {
        Normalization::IDENTITY
    };
    let cloud = transform.apply_cloud(&cloud);
    let dir = &cfg.output;
    write_text(&dir.join(TRANSFORM_FILE), &transform.to_text())?;
    write_text(&dir.join(RESOLVED_CONFIG_FILE), &cfg.to_text())?;
    if let Some(mesh) = &fixture_mesh {
        io::save_mesh(&dir.join(FIXTURE_MESH_FILE), mesh)?;
    }
    let resume = if resume {
        let path = dir.join(CHECKPOINT_FILE);
        Some(Checkpoint::load(&path)?)
    } else {
        None
    };
    let started = Instant::now();
    let result = fit(
        &cloud,
        &cfg.train,
        FitOptions {
            out_dir: Some(dir.clone()),
            resume,
            progress_every: progress,
        },
    )?;
    let last = result.log.last().map(|r| r.breakdown.total).unwrap_or(f64::NAN);
    println!(
        "trained {} iterations in {:.1}s, final loss {last:.6e}, model in {}",
        result.log.len(),
        started.elapsed().as_secs_f64(),
        dir.display()
    );

    let started = Instant::now();
    let mesh = extract(&result.network, cfg.mesh_resolution, false, &transform)?;
    let mesh_path = dir.join(FIT_MESH_FILE);
    io::save_mesh(&mesh_path, &mesh)?;
    print_mesh_summary(&mesh_path, &mesh, started);
    let truth = match (&cfg.ground_truth, fixture_mesh) {
        (Some(path), _) => Some(io::load_mesh(path)?),
        (None, fixture) => fixture,
    };
    if let Some(truth) = truth {
        if mesh.triangles.is_empty() {
            eprintln!("warning: skipping evaluation, the reconstructed mesh is empty");
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let report = evaluate_meshes(&mesh, &truth, cfg.metric_samples, cfg.f1_threshold, &mut rng)?;
        write_text(&dir.join(METRICS_FILE), &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()))?;
        println!("{report}");
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_mesh(
    checkpoint: &Path,
    res: usize,
    out: Option<PathBuf>,
    curvature: bool,
    transform: Option<PathBuf>,
    raw: bool,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let out = out.unwrap_or_else(|| dir.join(format!("mesh_{res}.ply")));
    let is_ply = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if curvature && !is_ply {
        return Err(Error::InvalidArgument("--curvature needs a .ply output".into()));
    }
    let transform = if raw {
        Normalization::IDENTITY
    } else {
        let path = transform.unwrap_or_else(|| dir.join(TRANSFORM_FILE));
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            Normalization::parse(&text, &path.display().to_string())?
        } else {
            Normalization::IDENTITY
        }
    };
    let started = Instant::now();
    let mesh = extract(&ckpt.network, res, curvature, &transform)?;
    io::save_mesh(&out, &mesh)?;
    print_mesh_summary(&out, &mesh, started);
    Ok(())
}

/// Zero level set at `res`^3, optionally with |k| per vertex, mapped back
/// through `transform`.
fn extract(net: &FieldNetwork, res: usize, curvature: bool, transform: &Normalization) -> Result<TriangleMesh> {
    let grid = sample_grid(net, res)?;
    let mut mesh = marching_cubes(&grid, 0.0);
    if mesh.triangles.is_empty() {
        let (lo, hi) = grid.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        eprintln!("warning: the field has no zero crossing on the grid (values span {lo:.3e} to {hi:.3e})");
    }
    if curvature {
        let colors = curvature_colors(net, &mesh);
        if colors.guarded > 0 {
            eprintln!("{} vertices had a vanishing gradient; their curvature is set to 0", colors.guarded);
        }
        mesh.scalars = Some(colors.values);
    }
    Ok(transform.invert_mesh(&mesh))
}

fn print_mesh_summary(out: &Path, mesh: &TriangleMesh, started: Instant) {
    println!(
        "{}: {} vertices, {} triangles, watertight {}, euler {} ({:.1}s)",
        out.display(),
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.is_watertight(),
        mesh.euler_characteristic(),
        started.elapsed().as_secs_f64()
    );
}

fn run_eval(mesh: &Path, truth: &Path, samples: usize, threshold: f64, seed: u64, csv: bool) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidArgument("--samples must be positive".into()));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument("--threshold must be positive".into()));
    }
    let recon = io::load_mesh(mesh)?;
    let gt = io::load_mesh(truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = evaluate_meshes(&recon, &gt, samples, threshold, &mut rng)?;
    if csv {
        println!("{}\n{}", MetricsReport::CSV_HEADER, report.csv_row());
    } else {
        println!("{report}");
    }
    Ok(())
}

fn run_synth(
    kind: FixtureKind,
    out: &Path,
    gt: Option<&Path>,
    count: usize,
    noise: f64,
    missing: f64,
    seed: u64,
) -> Result<()> {
    let fx = synth_fixture(kind, count, noise, missing, seed)?;
    io::save_cloud(out, &fx.cloud)?;
    if let Some(gt) = gt {
        io::save_mesh(gt, &fx.mesh)?;
    }
    println!("{}: {} points of {}", out.display(), fx.cloud.len(), kind.name());
    Ok(())
}

fn run_bench(config: Option<&Path>, iterations: usize, warmup: usize, count: usize) -> Result<()> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("--iterations must be positive".into()));
    }
    let (cloud, mut train) = match config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            cfg.check_paths()?;
            let (cloud, _) = config_cloud(&cfg)?;
            let cloud = if cfg.normalize { io::normalize_cloud(&cloud)?.0 } else { cloud };
            (cloud, cfg.train)
        }
        None => (
            synth_fixture(FixtureKind::Sphere, count, 0.0, 0.0, 0)?.cloud,
            TrainConfig::default(),
        ),
    };
    // time early iterations, where the annealed curvature term is active
    train.iterations = train.iterations.max(5 * (warmup + iterations));
    train.checkpoint_every = 0;
    let params: usize = train.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    println!(
        "layers {:?} ({params} parameters), batches {}/{}/{} (manifold/uniform/near-surface), regularizer {}, {} cloud points",
        train.layer_sizes,
        train.batch_manifold,
        train.batch_uniform,
        train.batch_omega,
        train.weights.regularizer.name(),
        cloud.len()
    );
    let mut trainer = Trainer::new(&cloud, train)?;
    for _ in 0..warmup {
        trainer.step()?;
    }
    let mut times = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let t = Instant::now();
        trainer.step()?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        println!("iteration {}: {ms:.2} ms", warmup + i);
        times.push(ms);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    println!(
        "per-iteration wall time: mean {mean:.2} ms, median {:.2} ms, min {:.2} ms over {iterations} iterations",
        sorted[sorted.len() / 2],
        sorted[0]
    );
    Ok(())
}
