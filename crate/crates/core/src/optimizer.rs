//! Adam and the training loop.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::{Checkpoint, TrainingState};
use crate::error::{Error, Result};
use crate::losses::{self, AnnealingMode, LossBreakdown, LossWeights};
use crate::network::{FieldNetwork, InitScheme, ParamGradient, DEFAULT_INPUT_SCALE, DEFAULT_LAYER_SIZES, DEFAULT_OMEGA0};
use crate::sampling::{self, NeighborScales, PointCloud, SamplingConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn from_parts(m: Vec<f64>, v: Vec<f64>, step: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::ParamCountMismatch {
                expected: m.len(),
                actual: v.len(),
            });
        }
        if !m.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::NonFiniteInput("Adam moments".into()));
        }
        if v.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument("negative second moment".into()));
        }
        Ok(Self { m, v, step })
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grad: &ParamGradient, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ParamCountMismatch {
            expected: params.len(),
            actual: if grad.len() != params.len() { grad.len() } else { state.m.len() },
        });
    }
    if let Some(index) = grad.as_slice().iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grad.as_slice())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weights: LossWeights,
    pub batch_manifold: usize,
    pub batch_uniform: usize,
    pub batch_omega: usize,
    pub knn_k: usize,
    pub annealing: AnnealingMode,
    pub dynamic_sampling: bool,
    pub seed: u64,
    /// Training is single-threaded and every reduction runs in a fixed order,
    /// so runs are always reproducible; the flag is kept so configs can state
    /// the requirement explicitly.
    pub deterministic: bool,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub layer_sizes: Vec<usize>,
    pub omega0: f64,
    pub input_scale: f64,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let sampling = SamplingConfig::default();
        Self {
            iterations: 10_000,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            weights: LossWeights::default(),
            batch_manifold: sampling.batch_manifold,
            batch_uniform: sampling.batch_uniform,
            batch_omega: sampling.batch_omega,
            knn_k: 50,
            annealing: AnnealingMode::Paper,
            dynamic_sampling: sampling.dynamic_sampling,
            seed: 0,
            deterministic: true,
            checkpoint_every: 1000,
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            omega0: DEFAULT_OMEGA0,
            input_scale: DEFAULT_INPUT_SCALE,
            init: InitScheme::Siren,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        for (name, n) in [
            ("batch_manifold", self.batch_manifold),
            ("batch_uniform", self.batch_uniform),
            ("batch_omega", self.batch_omega),
            ("knn_k", self.knn_k),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) || !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad("omega0 and input_scale must be positive".into());
        }
        self.weights.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            batch_manifold: self.batch_manifold,
            batch_uniform: self.batch_uniform,
            batch_omega: self.batch_omega,
            dynamic_sampling: self.dynamic_sampling,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub breakdown: LossBreakdown,
}

pub const LOG_HEADER: &str = "iteration,tau,eikonal,dm,dnm,reg,total";

impl LogRow {
    /// CSV line without the newline. Floats use the shortest representation
    /// that parses back to the same value.
    pub fn csv(&self) -> String {
        let b = &self.breakdown;
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.iteration, b.tau, b.eikonal, b.dirichlet_manifold, b.dirichlet_nonmanifold, b.regularizer, b.total
        )
    }
}

/// A training run that can be stepped, inspected and checkpointed.
pub struct Trainer<'a> {
    cloud: &'a PointCloud,
    scales: NeighborScales,
    config: TrainConfig,
    network: FieldNetwork,
    adam: AdamState,
    completed: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cloud: &'a PointCloud, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let network = FieldNetwork::init_scheme(
            &config.layer_sizes,
            config.omega0,
            config.input_scale,
            config.seed,
            config.init,
        )?;
        let adam = AdamState::new(network.param_count());
        Self::assemble(cloud, config, network, adam, 0)
    }

    /// Continues the run recorded in `checkpoint`, which must come from a
    /// run with the same seed, length and architecture.
    pub fn resume(cloud: &'a PointCloud, config: TrainConfig, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        let state = checkpoint
            .state
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no training state".into()))?;
        let net = checkpoint.network;
        if state.seed != config.seed || state.total != config.iterations {
            return Err(Error::Checkpoint(format!(
                "checkpoint is from a run with seed {} and {} iterations, config has seed {} and {}",
                state.seed, state.total, config.seed, config.iterations
            )));
        }
        if net.layer_sizes() != config.layer_sizes.as_slice()
            || net.omega0() != config.omega0
            || net.input_scale() != config.input_scale
        {
            return Err(Error::Checkpoint("checkpoint architecture differs from config".into()));
        }
        if state.adam.m.len() != net.param_count() {
            return Err(Error::ParamCountMismatch {
                expected: net.param_count(),
                actual: state.adam.m.len(),
            });
        }
        Self::assemble(cloud, config, net, state.adam, state.completed)
    }

    fn assemble(
        cloud: &'a PointCloud,
        config: TrainConfig,
        network: FieldNetwork,
        adam: AdamState,
        completed: usize,
    ) -> Result<Self> {
        let scales = sampling::knn_scales(cloud, config.knn_k)?;
        Ok(Self {
            cloud,
            scales,
            config,
            network,
            adam,
            completed,
        })
    }

    pub fn network(&self) -> &FieldNetwork {
        &self.network
    }

    pub fn into_network(self) -> FieldNetwork {
        self.network
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn scales(&self) -> &NeighborScales {
        &self.scales
    }

    /// Iterations taken so far.
    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn is_done(&self) -> bool {
        self.completed >= self.config.iterations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            network: self.network.clone(),
            state: Some(TrainingState {
                completed: self.completed,
                total: self.config.iterations,
                seed: self.config.seed,
                adam: self.adam.clone(),
            }),
        }
    }

    /// Sample, evaluate the loss and its gradient, update the parameters.
    pub fn step(&mut self) -> Result<LogRow> {
        let it = self.completed;
        let cfg = &self.config;
        let tau = losses::annealing_tau(it, cfg.iterations, cfg.annealing);
        // The curvature term is the only consumer of projected points and
        // of near-surface Hessians; skip both while it carries no weight.
        let reg_active = tau != 0.0 && cfg.weights.lambda_gauss != 0.0;
        let mut sampling = cfg.sampling();
        sampling.dynamic_sampling &= reg_active && cfg.weights.regularizer.uses_curvature();
        let batch = sampling::make_batch(self.cloud, &self.scales, &sampling, &self.network, cfg.seed, it);
        let mut weights = cfg.weights;
        if !reg_active {
            weights.regularizer = losses::Regularizer::None;
        }
        let groups = losses::loss_groups(
            &batch.manifold,
            &batch.uniform,
            &batch.near_surface,
            &batch.projected,
            weights.regularizer,
        );
        let mut breakdown = None;
        let (_, grad) = self
            .network
            .loss_param_gradient(&groups, |jets| {
                let (b, adj) = losses::total_loss_with_adjoints(jets, &weights, tau)?;
                breakdown = Some(b);
                Ok((b.total, adj))
            })
            .map_err(|e| with_iteration(e, it))?;
        let mut params = self.network.params().to_vec();
        adam_step(&mut params, &grad, &mut self.adam, &cfg.adam()).map_err(|e| with_iteration(e, it))?;
        self.network.params_mut().copy_from_slice(&params);
        self.completed += 1;
        Ok(LogRow {
            iteration: it,
            breakdown: breakdown.expect("loss closure ran"),
        })
    }
}

fn with_iteration(e: Error, it: usize) -> Error {
    match e {
        Error::NonFiniteLoss { detail, .. } => Error::NonFiniteLoss {
            iteration: Some(it),
            detail,
        },
        Error::NonFiniteGradient { index } => Error::NonFiniteLoss {
            iteration: Some(it),
            detail: format!("gradient entry {index} is not finite"),
        },
        other => other,
    }
}

/// Files written by [`fit`] into its output directory.
pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MODEL_FILE: &str = "model.bin";

#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Directory for the CSV log, periodic checkpoints and the final model.
    pub out_dir: Option<PathBuf>,
    /// Continue from this checkpoint instead of starting fresh.
    pub resume: Option<Checkpoint>,
    /// Print a progress line to stderr every this many iterations (0: never).
    pub progress_every: usize,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub network: FieldNetwork,
    /// Rows produced by this call (a resumed run omits earlier rows).
    pub log: Vec<LogRow>,
    pub final_checkpoint: Checkpoint,
}

pub fn fit(cloud: &PointCloud, config: &TrainConfig, options: FitOptions) -> Result<FitResult> {
    let mut trainer = match options.resume {
        Some(c) => Trainer::resume(cloud, config.clone(), c)?,
        None => Trainer::new(cloud, config.clone())?,
    };
    let mut log_file = match &options.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(open_log(&dir.join(LOG_FILE), trainer.completed())?)
        }
        None => None,
    };
    let started = Instant::now();
    let mut log = Vec::with_capacity(config.iterations - trainer.completed());
    while !trainer.is_done() {
        let row = trainer.step()?;
        if let Some((path, f)) = log_file.as_mut() {
            writeln!(f, "{}", row.csv()).map_err(|e| Error::io(&*path, e))?;
        }
        let done = trainer.completed();
        if options.progress_every > 0 && (done % options.progress_every == 0 || done == config.iterations) {
            eprintln!(
                "iter {done}/{} total {:.6e} tau {:.3e} ({:.1}s)",
                config.iterations,
                row.breakdown.total,
                row.breakdown.tau,
                started.elapsed().as_secs_f64()
            );
        }
        if let Some(dir) = &options.out_dir {
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.iterations {
                if let Some((path, f)) = log_file.as_mut() {
                    f.flush().map_err(|e| Error::io(&*path, e))?;
                }
                trainer.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
            }
        }
        log.push(row);
    }
    if let Some((path, mut f)) = log_file {
        f.flush().map_err(|e| Error::io(&path, e))?;
    }
    let final_checkpoint = trainer.checkpoint();
    if let Some(dir) = &options.out_dir {
        final_checkpoint.save(&dir.join(MODEL_FILE))?;
    }
    Ok(FitResult {
        network: trainer.into_network(),
        log,
        final_checkpoint,
    })
}

/// Opens the log for writing. When resuming, rows at or beyond the resume
/// point are dropped so the file matches an uninterrupted run.
fn open_log(path: &Path, resume_from: usize) -> Result<(PathBuf, std::io::BufWriter<fs::File>)> {
    let mut kept = vec![LOG_HEADER.to_string()];
    if resume_from > 0 {
        if let Ok(f) = fs::File::open(path) {
            for line in BufReader::new(f).lines().skip(1) {
                let line = line.map_err(|e| Error::io(path, e))?;
                let it: Option<usize> = line.split(',').next().and_then(|s| s.parse().ok());
                if it.is_some_and(|it| it < resume_from) {
                    kept.push(line);
                }
            }
        }
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for line in kept {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok((path.to_path_buf(), w))
}
