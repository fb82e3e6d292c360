use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fixtures::FixtureKind;
use crate::meshing::{DEFAULT_RESOLUTION, MIN_RESOLUTION};
use crate::metrics::{DEFAULT_F1_THRESHOLD, DEFAULT_SAMPLE_COUNT};
use crate::optimizer::TrainConfig;

/// A synthetic cloud generated in place of an input file.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub count: usize,
    pub noise: f64,
    pub missing: f64,
    pub seed: u64,
}

/// Everything a `fit` run needs, read from a flat `key = value` file.
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub input: Option<PathBuf>,
    pub fixture: Option<FixtureSpec>,
    pub output: PathBuf,
    pub normalize: bool,
    pub mesh_resolution: usize,
    pub metric_samples: usize,
    pub f1_threshold: f64,
    /// Ground-truth mesh; when present `fit` also meshes and evaluates.
    pub ground_truth: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            input: None,
            fixture: None,
            output: PathBuf::from("out"),
            normalize: true,
            mesh_resolution: DEFAULT_RESOLUTION,
            metric_samples: DEFAULT_SAMPLE_COUNT,
            f1_threshold: DEFAULT_F1_THRESHOLD,
            ground_truth: None,
        }
    }
}

fn value<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn enumerated<T: std::str::FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|e: Error| e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty());
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn parse(text: &str, label: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut fixture_kind = None;
        let mut fx_count = 10_000;
        let mut fx_noise = 0.0;
        let mut fx_missing = 0.0;
        let mut fx_seed = None;
        let mut seen = HashSet::new();
        let resolve = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(label, line_no, "expected `key = value`"))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::parse(label, line_no, format!("duplicate key `{key}`")));
            }
            let t = &mut cfg.train;
            let w = &mut t.weights;
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "iterations" => t.iterations = value(val)?,
                    "learning_rate" => t.learning_rate = value(val)?,
                    "adam_beta1" => t.adam_beta1 = value(val)?,
                    "adam_beta2" => t.adam_beta2 = value(val)?,
                    "adam_eps" => t.adam_eps = value(val)?,
                    "lambda_e" => w.lambda_e = value(val)?,
                    "lambda_dm" => w.lambda_dm = value(val)?,
                    "lambda_dnm" => w.lambda_dnm = value(val)?,
                    "lambda_gauss" => w.lambda_gauss = value(val)?,
                    "alpha" => w.alpha = value(val)?,
                    "dt_a" => w.dt_a = value(val)?,
                    "regularizer" => w.regularizer = enumerated(val)?,
                    "batch_manifold" => t.batch_manifold = value(val)?,
                    "batch_uniform" => t.batch_uniform = value(val)?,
                    "batch_omega" => t.batch_omega = value(val)?,
                    "knn_k" => t.knn_k = value(val)?,
                    "annealing" => t.annealing = enumerated(val)?,
                    "dynamic_sampling" => t.dynamic_sampling = flag(val)?,
                    "seed" => t.seed = value(val)?,
                    "deterministic" => t.deterministic = flag(val)?,
                    "checkpoint_every" => t.checkpoint_every = value(val)?,
                    "layer_sizes" => {
                        t.layer_sizes = val.split(',').map(|s| value(s.trim())).collect::<std::result::Result<_, _>>()?
                    }
                    "omega0" => t.omega0 = value(val)?,
                    "input_scale" => t.input_scale = value(val)?,
                    "init" => t.init = enumerated(val)?,
                    "input" => cfg.input = Some(resolve(val)),
                    "output" => cfg.output = resolve(val),
                    "normalize" => cfg.normalize = flag(val)?,
                    "mesh_resolution" => cfg.mesh_resolution = value(val)?,
                    "metric_samples" => cfg.metric_samples = value(val)?,
                    "f1_threshold" => cfg.f1_threshold = value(val)?,
                    "ground_truth" => cfg.ground_truth = Some(resolve(val)),
                    "fixture" => fixture_kind = Some(enumerated::<FixtureKind>(val)?),
                    "fixture_count" => fx_count = value(val)?,
                    "fixture_noise" => fx_noise = value(val)?,
                    "fixture_missing" => fx_missing = value(val)?,
                    "fixture_seed" => fx_seed = Some(value(val)?),
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            r.map_err(|m| Error::parse(label, line_no, format!("{key}: {m}")))?;
        }
        let fixture_keys = ["fixture_count", "fixture_noise", "fixture_missing", "fixture_seed"];
        if fixture_kind.is_none() && fixture_keys.iter().any(|k| seen.contains(*k)) {
            return Err(Error::Config("fixture_* keys given without `fixture`".into()));
        }
        cfg.fixture = fixture_kind.map(|kind| FixtureSpec {
            kind,
            count: fx_count,
            noise: fx_noise,
            missing: fx_missing,
            seed: fx_seed.unwrap_or(cfg.train.seed),
        });
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks values and paths without touching the filesystem beyond
    /// reading metadata.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match (&self.input, &self.fixture) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `input` or `fixture`, not both".into())),
            (None, None) => return Err(Error::Config("one of `input` or `fixture` is required".into())),
            _ => {}
        }
        if let Some(f) = &self.fixture {
            if f.count == 0 {
                return Err(Error::Config("fixture_count must be positive".into()));
            }
            if !(f.noise >= 0.0 && f.noise.is_finite()) {
                return Err(Error::Config(format!("fixture_noise must be >= 0, got {}", f.noise)));
            }
            if !(0.0..1.0).contains(&f.missing) {
                return Err(Error::Config(format!("fixture_missing must lie in [0, 1), got {}", f.missing)));
            }
        }
        if self.mesh_resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!("mesh_resolution must be >= {MIN_RESOLUTION}")));
        }
        if self.metric_samples == 0 {
            return Err(Error::Config("metric_samples must be positive".into()));
        }
        if !(self.f1_threshold > 0.0 && self.f1_threshold.is_finite()) {
            return Err(Error::Config("f1_threshold must be positive".into()));
        }
        Ok(())
    }

    /// Verifies that input files exist and the output directory can be
    /// created. Meant to run before any training work.
    pub fn check_paths(&self) -> Result<()> {
        let missing = |p: &Path| Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"));
        for p in self.input.iter().chain(&self.ground_truth) {
            if !p.is_file() {
                return Err(missing(p));
            }
        }
        if self.output.exists() && !self.output.is_dir() {
            return Err(Error::io(
                &self.output,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "exists and is not a directory"),
            ));
        }
        std::fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let w = &t.weights;
        let sizes: Vec<String> = t.layer_sizes.iter().map(|s| s.to_string()).collect();
        let mut rows: Vec<(&str, String)> = Vec::new();
        if let Some(p) = &self.input {
            rows.push(("input", p.display().to_string()));
        }
        if let Some(f) = &self.fixture {
            rows.push(("fixture", f.kind.name().into()));
            rows.push(("fixture_count", f.count.to_string()));
            rows.push(("fixture_noise", format!("{:?}", f.noise)));
            rows.push(("fixture_missing", format!("{:?}", f.missing)));
            rows.push(("fixture_seed", f.seed.to_string()));
        }
        if let Some(p) = &self.ground_truth {
            rows.push(("ground_truth", p.display().to_string()));
        }
        rows.extend([
            ("output", self.output.display().to_string()),
            ("normalize", self.normalize.to_string()),
            ("mesh_resolution", self.mesh_resolution.to_string()),
            ("metric_samples", self.metric_samples.to_string()),
            ("f1_threshold", format!("{:?}", self.f1_threshold)),
            ("iterations", t.iterations.to_string()),
            ("learning_rate", format!("{:?}", t.learning_rate)),
            ("adam_beta1", format!("{:?}", t.adam_beta1)),
            ("adam_beta2", format!("{:?}", t.adam_beta2)),
            ("adam_eps", format!("{:?}", t.adam_eps)),
            ("lambda_e", format!("{:?}", w.lambda_e)),
            ("lambda_dm", format!("{:?}", w.lambda_dm)),
            ("lambda_dnm", format!("{:?}", w.lambda_dnm)),
            ("lambda_gauss", format!("{:?}", w.lambda_gauss)),
            ("alpha", format!("{:?}", w.alpha)),
            ("dt_a", format!("{:?}", w.dt_a)),
            ("regularizer", w.regularizer.name().into()),
            ("batch_manifold", t.batch_manifold.to_string()),
            ("batch_uniform", t.batch_uniform.to_string()),
            ("batch_omega", t.batch_omega.to_string()),
            ("knn_k", t.knn_k.to_string()),
            ("annealing", t.annealing.name().into()),
            ("dynamic_sampling", t.dynamic_sampling.to_string()),
            ("seed", t.seed.to_string()),
            ("deterministic", t.deterministic.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("layer_sizes", sizes.join(",")),
            ("omega0", format!("{:?}", t.omega0)),
            ("input_scale", format!("{:?}", t.input_scale)),
            ("init", t.init.name().into()),
        ]);
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
