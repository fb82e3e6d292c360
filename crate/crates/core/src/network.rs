//! Sine-activated MLP representing the signed distance field.
//!
//! Every layer except the last computes `sin(omega0 * (W a + b))`; the last
//! layer is affine. World coordinates are multiplied by `input_scale` before
//! entering the first layer, so a world box of `[-0.5, 0.5]^3` maps onto the
//! network-input box `[-1, 1]^3`.
//!
//! Derivatives with respect to the input are carried forward as second-order
//! jets (value, 3 first derivatives, 6 unique second derivatives per unit), and
//! parameter gradients of any loss built from those jets are obtained by a
//! reverse sweep over the same computation. Both sweeps are written as dense
//! matrix products over a "channel-major" activation layout: for `n` points and
//! `K` channels the activation matrix has `n * K` rows, with the `K` rows of one
//! point stored contiguously in the order `value, d0, d1, d2, d00, d11, d22,
//! d01, d02, d12`.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Unique Hessian entries in channel order.
pub(crate) const HESSIAN_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Points per forward/backward block.
const CHUNK: usize = 512;

/// Above this many bytes of intermediate storage the forward pass is repeated
/// during the reverse sweep instead of being kept.
const TAPE_BUDGET_BYTES: usize = 768 << 20;

/// Default SIREN frequency multiplier.
pub const DEFAULT_OMEGA0: f64 = 30.0;

/// Default world-to-network coordinate scale.
pub const DEFAULT_INPUT_SCALE: f64 = 2.0;

/// Default architecture: four hidden layers of 256 units.
pub const DEFAULT_LAYER_SIZES: [usize; 6] = [3, 256, 256, 256, 256, 1];

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vec3,
    pub hessian: Matrix3<f64>,
}

impl Jet2 {
    pub fn new(value: f64, gradient: Vec3, hessian: Matrix3<f64>) -> Self {
        Self {
            value,
            gradient,
            hessian,
        }
    }

    /// Re-expresses derivatives taken with respect to `u` as derivatives with
    /// respect to `x`, where `u = scale * x`.
    pub fn chain_scale(&self, scale: f64) -> Jet2 {
        Jet2 {
            value: self.value,
            gradient: self.gradient * scale,
            hessian: self.hessian * (scale * scale),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.hessian.iter().all(|v| v.is_finite())
    }
}

/// How many derivative orders a jet evaluation must produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

impl JetOrder {
    pub fn channels(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 4,
            JetOrder::Hessian => 10,
        }
    }
}

/// Sensitivity of a scalar loss to one jet.
///
/// `hessian` holds the derivative with respect to each of the nine matrix
/// entries taken independently; symmetric pairs are summed internally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JetAdjoint {
    pub value: f64,
    pub gradient: Vec3,
    pub hessian: Matrix3<f64>,
}

impl Default for JetAdjoint {
    fn default() -> Self {
        Self {
            value: 0.0,
            gradient: Vec3::zeros(),
            hessian: Matrix3::zeros(),
        }
    }
}

/// Derivative of a loss with respect to every network parameter, in the
/// network's canonical parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient(Vec<f64>);

impl ParamGradient {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A set of points whose jets feed a loss.
#[derive(Clone, Copy, Debug)]
pub struct JetGroup<'a> {
    pub points: &'a [Vec3],
    pub order: JetOrder,
}

impl<'a> JetGroup<'a> {
    pub fn new(points: &'a [Vec3], order: JetOrder) -> Self {
        Self { points, order }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

/// Parameters of the sine-activated MLP.
///
/// Canonical flat parameter order: for each layer in turn, the weight matrix
/// row-major (`fan_out x fan_in`) followed by the bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldNetwork {
    layer_sizes: Vec<usize>,
    omega0: f64,
    input_scale: f64,
    params: Vec<f64>,
    layers: Vec<LayerShape>,
}

fn layer_shapes(layer_sizes: &[usize]) -> Result<(Vec<LayerShape>, usize)> {
    if layer_sizes.len() < 3 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least one hidden layer, got sizes {layer_sizes:?}"
        )));
    }
    if layer_sizes[0] != 3 || *layer_sizes.last().unwrap() != 1 {
        return Err(Error::InvalidArchitecture(format!(
            "layer sizes must start with 3 and end with 1, got {layer_sizes:?}"
        )));
    }
    if let Some(w) = layer_sizes[1..layer_sizes.len() - 1].iter().find(|&&w| w < 2) {
        return Err(Error::InvalidArchitecture(format!(
            "hidden width {w} is degenerate (need >= 2)"
        )));
    }
    let overflow = || Error::InvalidArchitecture(format!("parameter count overflows for sizes {layer_sizes:?}"));
    let mut offset: usize = 0;
    let mut shapes = Vec::with_capacity(layer_sizes.len() - 1);
    for w in layer_sizes.windows(2) {
        let weights = w[0].checked_mul(w[1]).ok_or_else(overflow)?;
        let bias_offset = offset.checked_add(weights).ok_or_else(overflow)?;
        shapes.push(LayerShape {
            fan_in: w[0],
            fan_out: w[1],
            weight_offset: offset,
            bias_offset,
        });
        offset = bias_offset.checked_add(w[1]).ok_or_else(overflow)?;
    }
    Ok((shapes, offset))
}

/// Starting point for the parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum InitScheme {
    /// Standard SIREN initialization.
    #[default]
    Siren,
    /// Geometric sine initialization: early layers act almost linearly, the
    /// last hidden layer turns each feature into `cos(pi/2 * h)`, and the
    /// output layer sums them against an offset, so the initial field is a
    /// smooth bowl close to `c * |u|^2` with no spurious zero crossings.
    /// Requires the last two hidden layers to have equal width.
    Geometric,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siren" => Ok(InitScheme::Siren),
            "geometric" => Ok(InitScheme::Geometric),
            other => Err(Error::InvalidArgument(format!("unknown init scheme `{other}`"))),
        }
    }
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Siren => "siren",
            InitScheme::Geometric => "geometric",
        }
    }
}

fn fill_uniform(values: &mut [f64], bound: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let dist = Uniform::new(-bound, bound).map_err(|e| Error::InvalidArchitecture(format!("init bound {bound}: {e}")))?;
    for v in values.iter_mut() {
        *v = dist.sample(rng);
    }
    Ok(())
}

fn geometric_init(layers: &[LayerShape], omega0: f64, params: &mut [f64], rng: &mut ChaCha8Rng) -> Result<()> {
    let n = layers.len();
    let square = &layers[n - 2];
    if n < 3 || square.fan_in != square.fan_out {
        return Err(Error::InvalidArchitecture(
            "geometric init needs at least two hidden layers, the last two of equal width".into(),
        ));
    }
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for shape in &layers[..n - 2] {
        let bound = (3.0 / shape.fan_out as f64).sqrt() / omega0;
        fill_uniform(&mut params[shape.weight_offset..shape.bias_offset], bound, rng)?;
        let bias_bound = 1.0 / (1000.0 * shape.fan_out as f64) / omega0;
        fill_uniform(&mut params[shape.bias_offset..shape.bias_offset + shape.fan_out], bias_bound, rng)?;
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let w = square.fan_out;
    for r in 0..w {
        for c in 0..w {
            let diag = if r == c { half_pi } else { 0.0 };
            params[square.weight_offset + r * w + c] = (diag + 1e-3 * noise.sample(rng)) / omega0;
        }
        params[square.bias_offset + r] = (half_pi + 1e-3 * noise.sample(rng)) / omega0;
    }
    let last = &layers[n - 1];
    for c in 0..last.fan_in {
        params[last.weight_offset + c] = -1.0 + 1e-5 * noise.sample(rng);
    }
    params[last.bias_offset] = last.fan_in as f64;
    Ok(())
}

impl FieldNetwork {
    /// Builds a network from explicit parameters.
    pub fn from_params(
        layer_sizes: &[usize],
        omega0: f64,
        input_scale: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let (layers, count) = layer_shapes(layer_sizes)?;
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidArchitecture(format!("omega0 must be positive, got {omega0}")));
        }
        if !(input_scale > 0.0 && input_scale.is_finite()) {
            return Err(Error::InvalidArchitecture(format!(
                "input_scale must be positive, got {input_scale}"
            )));
        }
        if params.len() != count {
            return Err(Error::ParamCountMismatch {
                expected: count,
                actual: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArchitecture(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            omega0,
            input_scale,
            params,
            layers,
        })
    }

    /// SIREN-style initialization: first-layer weights uniform in
    /// `(-1/fan_in, 1/fan_in)`, later weights uniform in
    /// `(-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0)`, biases zero.
    pub fn init(layer_sizes: &[usize], omega0: f64, seed: u64) -> Result<Self> {
        Self::init_with_scale(layer_sizes, omega0, DEFAULT_INPUT_SCALE, seed)
    }

    pub fn init_with_scale(
        layer_sizes: &[usize],
        omega0: f64,
        input_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::init_scheme(layer_sizes, omega0, input_scale, seed, InitScheme::Siren)
    }

    pub fn init_scheme(
        layer_sizes: &[usize],
        omega0: f64,
        input_scale: f64,
        seed: u64,
        scheme: InitScheme,
    ) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidArchitecture(format!("omega0 must be positive, got {omega0}")));
        }
        let (layers, count) = layer_shapes(layer_sizes)?;
        let mut params = vec![0.0; count];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match scheme {
            InitScheme::Siren => {
                for (l, shape) in layers.iter().enumerate() {
                    let bound = if l == 0 {
                        1.0 / shape.fan_in as f64
                    } else {
                        (6.0 / shape.fan_in as f64).sqrt() / omega0
                    };
                    fill_uniform(&mut params[shape.weight_offset..shape.bias_offset], bound, &mut rng)?;
                }
            }
            InitScheme::Geometric => geometric_init(&layers, omega0, &mut params, &mut rng)?,
        }
        Self::from_params(layer_sizes, omega0, input_scale, params)
    }

    /// Network with every weight and bias set to zero.
    pub fn zeros(layer_sizes: &[usize], omega0: f64) -> Result<Self> {
        let (_, count) = layer_shapes(layer_sizes)?;
        Self::from_params(layer_sizes, omega0, DEFAULT_INPUT_SCALE, vec![0.0; count])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Overwrites every parameter. Rejects wrong lengths and non-finite values.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ParamCountMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArchitecture(format!("parameter {i} is not finite")));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Field value at a world-space point.
    pub fn eval(&self, x: &Vec3) -> Result<f64> {
        check_finite(std::slice::from_ref(x))?;
        Ok(self.raw_forward(std::slice::from_ref(x), JetOrder::Value, None)[0])
    }

    /// Field values at many world-space points.
    pub fn eval_batch(&self, xs: &[Vec3]) -> Result<Vec<f64>> {
        check_finite(xs)?;
        Ok(self.values_unchecked(xs))
    }

    /// Value, gradient and Hessian with respect to world coordinates.
    pub fn eval_jet(&self, x: &Vec3) -> Result<Jet2> {
        Ok(self.eval_jet_batch(std::slice::from_ref(x))?[0])
    }

    /// Elementwise [`FieldNetwork::eval_jet`].
    pub fn eval_jet_batch(&self, xs: &[Vec3]) -> Result<Vec<Jet2>> {
        check_finite(xs)?;
        let s = self.input_scale;
        Ok(self
            .input_jets_unchecked(xs, JetOrder::Hessian)
            .into_iter()
            .map(|j| j.chain_scale(s))
            .collect())
    }

    /// Jets at world-space points with derivatives taken in the network-input
    /// frame (`u = input_scale * x`). This is the frame every loss uses.
    pub fn eval_input_jets(&self, xs: &[Vec3], order: JetOrder) -> Result<Vec<Jet2>> {
        check_finite(xs)?;
        Ok(self.input_jets_unchecked(xs, order))
    }

    pub(crate) fn values_unchecked(&self, xs: &[Vec3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(CHUNK) {
            out.extend(self.raw_forward(chunk, JetOrder::Value, None));
        }
        out
    }

    pub(crate) fn input_jets_unchecked(&self, xs: &[Vec3], order: JetOrder) -> Vec<Jet2> {
        let k = order.channels();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(CHUNK) {
            let raw = self.raw_forward(chunk, order, None);
            out.extend(raw.chunks_exact(k).map(jet_from_channels));
        }
        out
    }

    /// Evaluates a loss built from jets over `groups` and its gradient with
    /// respect to every parameter.
    ///
    /// `loss` receives one jet list per group (derivatives in the
    /// network-input frame) and returns the scalar loss together with the
    /// sensitivity of that loss to each jet.
    pub fn loss_param_gradient<F>(
        &self,
        groups: &[JetGroup<'_>],
        loss: F,
    ) -> Result<(f64, ParamGradient)>
    where
        F: FnOnce(&[Vec<Jet2>]) -> Result<(f64, Vec<Vec<JetAdjoint>>)>,
    {
        for g in groups {
            check_finite(g.points)?;
        }
        let tape_bytes: usize = groups
            .iter()
            .map(|g| g.points.len() * self.tape_bytes_per_point(g.order))
            .sum();
        let keep = tape_bytes <= TAPE_BUDGET_BYTES;

        let mut jets = Vec::with_capacity(groups.len());
        let mut tapes: Vec<Vec<Tape>> = Vec::with_capacity(groups.len());
        for g in groups {
            let k = g.order.channels();
            let mut group_jets = Vec::with_capacity(g.points.len());
            let mut group_tapes = Vec::new();
            for chunk in g.points.chunks(CHUNK) {
                let mut tape = keep.then(Tape::new);
                let raw = self.raw_forward(chunk, g.order, tape.as_mut());
                group_jets.extend(raw.chunks_exact(k).map(jet_from_channels));
                if let Some(t) = tape {
                    group_tapes.push(t);
                }
            }
            jets.push(group_jets);
            tapes.push(group_tapes);
        }

        let (value, adjoints) = loss(&jets)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: None,
                detail: format!("loss evaluated to {value}"),
            });
        }
        if adjoints.len() != groups.len() {
            return Err(Error::InvalidArgument(format!(
                "loss returned {} adjoint groups for {} jet groups",
                adjoints.len(),
                groups.len()
            )));
        }

        let mut grad = vec![0.0; self.params.len()];
        for (gi, g) in groups.iter().enumerate() {
            let adj = &adjoints[gi];
            if adj.len() != g.points.len() {
                return Err(Error::InvalidArgument(format!(
                    "group {gi}: {} adjoints for {} points",
                    adj.len(),
                    g.points.len()
                )));
            }
            let k = g.order.channels();
            for (ci, (chunk, chunk_adj)) in g.points.chunks(CHUNK).zip(adj.chunks(CHUNK)).enumerate() {
                let out_adj: Vec<f64> = chunk_adj
                    .iter()
                    .flat_map(|a| adjoint_channels(a, k))
                    .collect();
                if keep {
                    self.backward(&tapes[gi][ci], &out_adj, &mut grad);
                } else {
                    let mut tape = Tape::new();
                    self.raw_forward(chunk, g.order, Some(&mut tape));
                    self.backward(&tape, &out_adj, &mut grad);
                }
            }
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        Ok((value, ParamGradient(grad)))
    }

    fn tape_bytes_per_point(&self, order: JetOrder) -> usize {
        let k = order.channels();
        let floats: usize = self
            .layers
            .iter()
            .map(|l| k * l.fan_in + k * l.fan_out + 2 * l.fan_out)
            .sum();
        floats * std::mem::size_of::<f64>()
    }

    fn weights(&self, l: usize) -> &[f64] {
        let s = &self.layers[l];
        &self.params[s.weight_offset..s.bias_offset]
    }

    fn biases(&self, l: usize) -> &[f64] {
        let s = &self.layers[l];
        &self.params[s.bias_offset..s.bias_offset + s.fan_out]
    }

    /// Forward sweep over points in world coordinates. Returns `n * K` output
    /// channels. When `tape` is given, every intermediate needed by
    /// [`FieldNetwork::backward`] is recorded.
    fn raw_forward(&self, xs: &[Vec3], order: JetOrder, mut tape: Option<&mut Tape>) -> Vec<f64> {
        let k = order.channels();
        let n = xs.len();
        let rows = n * k;
        let mut act = vec![0.0; rows * 3];
        for (p, x) in xs.iter().enumerate() {
            let base = p * k * 3;
            for i in 0..3 {
                act[base + i] = x[i] * self.input_scale;
            }
            if k > 1 {
                for i in 0..3 {
                    act[base + (1 + i) * 3 + i] = 1.0;
                }
            }
        }
        if let Some(t) = tape.as_deref_mut() {
            t.points = n;
            t.order = order;
            t.layers.clear();
        }
        let last = self.layers.len() - 1;
        for (l, shape) in self.layers.iter().enumerate() {
            let mut pre = vec![0.0; rows * shape.fan_out];
            gemm_abt(rows, shape.fan_in, shape.fan_out, &act, self.weights(l), &mut pre);
            let bias = self.biases(l);
            for p in 0..n {
                let row = &mut pre[p * k * shape.fan_out..p * k * shape.fan_out + shape.fan_out];
                for (z, b) in row.iter_mut().zip(bias) {
                    *z += b;
                }
            }
            if l == last {
                if let Some(t) = tape.as_deref_mut() {
                    t.layers.push(LayerTape {
                        input: act,
                        pre: Vec::new(),
                        sin: Vec::new(),
                        cos: Vec::new(),
                    });
                }
                return pre;
            }
            let width = shape.fan_out;
            let mut out = vec![0.0; rows * width];
            let mut sin = vec![0.0; n * width];
            let mut cos = vec![0.0; n * width];
            sine_forward(self.omega0, k, width, &pre, &mut out, &mut sin, &mut cos);
            if let Some(t) = tape.as_deref_mut() {
                t.layers.push(LayerTape {
                    input: std::mem::replace(&mut act, out),
                    pre,
                    sin,
                    cos,
                });
            } else {
                act = out;
            }
        }
        unreachable!("network has at least one layer")
    }

    /// Reverse sweep: accumulates `d loss / d params` into `grad` given the
    /// sensitivity of the loss to every output channel.
    fn backward(&self, tape: &Tape, out_adj: &[f64], grad: &mut [f64]) {
        let k = tape.order.channels();
        let n = tape.points;
        let rows = n * k;
        debug_assert_eq!(out_adj.len(), rows);
        let last = self.layers.len() - 1;
        let mut adj = out_adj.to_vec();
        for l in (0..self.layers.len()).rev() {
            let shape = &self.layers[l];
            let lt = &tape.layers[l];
            if l != last {
                let mut pre_adj = vec![0.0; rows * shape.fan_out];
                sine_backward(self.omega0, k, shape.fan_out, &lt.pre, &lt.sin, &lt.cos, &adj, &mut pre_adj);
                adj = pre_adj;
            }
            // weights: grad += adj^T * input
            let (w_grad, rest) = grad[shape.weight_offset..].split_at_mut(shape.fan_in * shape.fan_out);
            gemm_atb_acc(rows, shape.fan_out, shape.fan_in, &adj, &lt.input, w_grad);
            let b_grad = &mut rest[..shape.fan_out];
            for p in 0..n {
                let row = &adj[p * k * shape.fan_out..p * k * shape.fan_out + shape.fan_out];
                for (g, a) in b_grad.iter_mut().zip(row) {
                    *g += a;
                }
            }
            if l > 0 {
                let mut in_adj = vec![0.0; rows * shape.fan_in];
                gemm_ab(rows, shape.fan_out, shape.fan_in, &adj, self.weights(l), &mut in_adj);
                adj = in_adj;
            }
        }
    }
}

fn check_finite(xs: &[Vec3]) -> Result<()> {
    if let Some(i) = xs.iter().position(|x| !x.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFiniteInput(format!("point {i} is {:?}", xs[i].as_slice())));
    }
    Ok(())
}

fn jet_from_channels(c: &[f64]) -> Jet2 {
    let mut jet = Jet2::new(c[0], Vec3::zeros(), Matrix3::zeros());
    if c.len() >= 4 {
        jet.gradient = Vec3::new(c[1], c[2], c[3]);
    }
    if c.len() == 10 {
        for (q, &(a, b)) in HESSIAN_PAIRS.iter().enumerate() {
            jet.hessian[(a, b)] = c[4 + q];
            jet.hessian[(b, a)] = c[4 + q];
        }
    }
    jet
}

fn adjoint_channels(a: &JetAdjoint, k: usize) -> impl Iterator<Item = f64> + '_ {
    (0..k).map(move |ch| match ch {
        0 => a.value,
        1..=3 => a.gradient[ch - 1],
        _ => {
            let (i, j) = HESSIAN_PAIRS[ch - 4];
            if i == j {
                a.hessian[(i, i)]
            } else {
                a.hessian[(i, j)] + a.hessian[(j, i)]
            }
        }
    })
}

struct Tape {
    points: usize,
    order: JetOrder,
    layers: Vec<LayerTape>,
}

impl Tape {
    fn new() -> Self {
        Self {
            points: 0,
            order: JetOrder::Value,
            layers: Vec::new(),
        }
    }
}

struct LayerTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    sin: Vec<f64>,
    cos: Vec<f64>,
}

/// Propagates jets through `y = sin(omega * z)`.
fn sine_forward(
    omega: f64,
    k: usize,
    width: usize,
    pre: &[f64],
    out: &mut [f64],
    sin: &mut [f64],
    cos: &mut [f64],
) {
    let n = sin.len() / width;
    let w2 = omega * omega;
    for p in 0..n {
        let base = p * k * width;
        let s_row = &mut sin[p * width..(p + 1) * width];
        let c_row = &mut cos[p * width..(p + 1) * width];
        for j in 0..width {
            let (s, c) = (omega * pre[base + j]).sin_cos();
            s_row[j] = s;
            c_row[j] = c;
            out[base + j] = s;
        }
        for ch in 1..k.min(4) {
            let off = base + ch * width;
            for j in 0..width {
                out[off + j] = omega * c_row[j] * pre[off + j];
            }
        }
        if k == 10 {
            for (q, &(a, b)) in HESSIAN_PAIRS.iter().enumerate() {
                let off = base + (4 + q) * width;
                let oa = base + (1 + a) * width;
                let ob = base + (1 + b) * width;
                for j in 0..width {
                    out[off + j] =
                        omega * c_row[j] * pre[off + j] - w2 * s_row[j] * pre[oa + j] * pre[ob + j];
                }
            }
        }
    }
}

/// Reverse of [`sine_forward`]: maps output sensitivities to pre-activation
/// sensitivities.
#[allow(clippy::too_many_arguments)]
fn sine_backward(
    omega: f64,
    k: usize,
    width: usize,
    pre: &[f64],
    sin: &[f64],
    cos: &[f64],
    out_adj: &[f64],
    pre_adj: &mut [f64],
) {
    let n = sin.len() / width;
    let w2 = omega * omega;
    let w3 = w2 * omega;
    for p in 0..n {
        let base = p * k * width;
        let s_row = &sin[p * width..(p + 1) * width];
        let c_row = &cos[p * width..(p + 1) * width];
        for j in 0..width {
            pre_adj[base + j] = out_adj[base + j] * omega * c_row[j];
        }
        for ch in 1..k.min(4) {
            let off = base + ch * width;
            for j in 0..width {
                pre_adj[base + j] -= w2 * s_row[j] * out_adj[off + j] * pre[off + j];
                pre_adj[off + j] = out_adj[off + j] * omega * c_row[j];
            }
        }
        if k == 10 {
            for (q, &(a, b)) in HESSIAN_PAIRS.iter().enumerate() {
                let off = base + (4 + q) * width;
                let oa = base + (1 + a) * width;
                let ob = base + (1 + b) * width;
                for j in 0..width {
                    let ybar = out_adj[off + j];
                    let (s, c) = (s_row[j], c_row[j]);
                    pre_adj[off + j] = ybar * omega * c;
                    pre_adj[base + j] +=
                        ybar * (-w2 * s * pre[off + j] - w3 * c * pre[oa + j] * pre[ob + j]);
                    let sbar = w2 * s * ybar;
                    pre_adj[oa + j] -= sbar * pre[ob + j];
                    pre_adj[ob + j] -= sbar * pre[oa + j];
                }
            }
        }
    }
}

/// `c (m x n) = a (m x k) * b^T` where `b` is `n x k`, all row-major.
fn gemm_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 {
        return;
    }
    // SAFETY: slice lengths checked above match the strides passed.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m x n) = a (m x k) * b (k x n)`, all row-major.
fn gemm_ab(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 {
        return;
    }
    // SAFETY: slice lengths checked above match the strides passed.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m x n) += a^T * b` where `a` is `r x m` and `b` is `r x n`, row-major.
fn gemm_atb_acc(r: usize, m: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), r * m);
    debug_assert_eq!(b.len(), r * n);
    debug_assert_eq!(c.len(), m * n);
    if r == 0 {
        return;
    }
    // SAFETY: slice lengths checked above match the strides passed.
    unsafe {
        matrixmultiply::dgemm(
            m, r, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}
