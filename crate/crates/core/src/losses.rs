//! Loss terms of the fitting objective and their sensitivities to field jets.
//!
//! All jets handed to this module carry derivatives in the network-input
//! frame. Every term is a mean over its point set, so each point's adjoint is
//! its local derivative divided by the set size.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::network::{Jet2, JetAdjoint, JetGroup, JetOrder, Vec3};

/// Gradient norms below this are treated as critical points of the field.
pub const GRADIENT_EPS: f64 = 1e-8;

/// Smoothness term added to the basic Eikonal/Dirichlet objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regularizer {
    /// Mean double-trough-shaped absolute Gaussian curvature over Ω ∪ Q′.
    GaussDt,
    /// Mean absolute Gaussian curvature over Ω ∪ Q′.
    GaussPlain,
    /// Mean `½‖∇f‖²` over P ∪ Q.
    DirichletEnergy,
    /// Mean squared Frobenius norm of the Hessian over P ∪ Q.
    HessianL2,
    /// Mean entrywise L1 norm of the Hessian over P ∪ Q.
    HessianL1,
    None,
}

impl Regularizer {
    pub fn uses_curvature(self) -> bool {
        matches!(self, Regularizer::GaussDt | Regularizer::GaussPlain)
    }

    pub fn name(self) -> &'static str {
        match self {
            Regularizer::GaussDt => "gauss_dt",
            Regularizer::GaussPlain => "gauss_plain",
            Regularizer::DirichletEnergy => "dirichlet_energy",
            Regularizer::HessianL2 => "hessian_l2",
            Regularizer::HessianL1 => "hessian_l1",
            Regularizer::None => "none",
        }
    }

    /// Jet order needed on the manifold and uniform batches.
    pub fn surface_order(self) -> JetOrder {
        match self {
            Regularizer::HessianL2 | Regularizer::HessianL1 => JetOrder::Hessian,
            _ => JetOrder::Gradient,
        }
    }
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gauss_dt" => Regularizer::GaussDt,
            "gauss_plain" => Regularizer::GaussPlain,
            "dirichlet_energy" => Regularizer::DirichletEnergy,
            "hessian_l2" => Regularizer::HessianL2,
            "hessian_l1" => Regularizer::HessianL1,
            "none" => Regularizer::None,
            other => return Err(Error::InvalidArgument(format!("unknown regularizer `{other}`"))),
        })
    }
}

/// Weights and shape parameters of the total loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_dm: f64,
    pub lambda_dnm: f64,
    /// Weight of whichever regularizer is selected.
    pub lambda_gauss: f64,
    /// Decay rate of the non-manifold penalty `exp(-alpha |f|)`.
    pub alpha: f64,
    /// Height of the second double-trough valley.
    pub dt_a: f64,
    pub regularizer: Regularizer,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_e: 50.0,
            lambda_dm: 7000.0,
            lambda_dnm: 600.0,
            lambda_gauss: 10.0,
            alpha: 100.0,
            dt_a: 0.25,
            regularizer: Regularizer::GaussDt,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_e", self.lambda_e),
            ("lambda_dm", self.lambda_dm),
            ("lambda_dnm", self.lambda_dnm),
            ("lambda_gauss", self.lambda_gauss),
            ("alpha", self.alpha),
        ];
        for (name, w) in named {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {w}")));
            }
        }
        if !(self.dt_a > 0.0 && self.dt_a < FRAC_PI_4) {
            return Err(Error::InvalidArgument(format!(
                "dt_a must lie in (0, pi/4), got {}",
                self.dt_a
            )));
        }
        Ok(())
    }
}

/// Per-term values of one loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub eikonal: f64,
    pub dirichlet_manifold: f64,
    pub dirichlet_nonmanifold: f64,
    pub regularizer: f64,
    pub total: f64,
    pub tau: f64,
    /// Curvature points skipped because of a vanishing gradient.
    pub guarded: usize,
}

/// Jets of one training batch, grouped by the loss terms that consume them.
#[derive(Clone, Debug, Default)]
pub struct BatchJets {
    pub manifold: Vec<Jet2>,
    pub uniform: Vec<Jet2>,
    pub near_surface: Vec<Jet2>,
    pub projected: Vec<Jet2>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean_of(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Mean of `|1 - ‖∇f‖|`.
pub fn eikonal_term(jets: &[Jet2]) -> f64 {
    mean_of(jets.iter().map(|j| (1.0 - j.gradient.norm()).abs()), jets.len())
}

/// Mean of `|f|`.
pub fn dirichlet_manifold(jets: &[Jet2]) -> f64 {
    mean_of(jets.iter().map(|j| j.value.abs()), jets.len())
}

/// Mean of `exp(-alpha |f|)`.
pub fn dirichlet_nonmanifold(jets: &[Jet2], alpha: f64) -> f64 {
    mean_of(jets.iter().map(|j| (-alpha * j.value.abs()).exp()), jets.len())
}

/// Gaussian curvature of a level set together with a flag for critical points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Curvature {
    pub value: f64,
    /// Set when `‖∇f‖ < GRADIENT_EPS`; `value` is then 0 and the point must not
    /// contribute to curvature statistics.
    pub guarded: bool,
}

/// Determinant of the bordered matrix `[[H, ∇fᵀ], [∇f, 0]]`, expanded along
/// the border row and column. Equals `-∇fᵀ adj(H) ∇f`.
pub fn bordered_determinant(hessian: &Matrix3<f64>, gradient: &Vec3) -> f64 {
    -adjugate_quadratic(hessian, gradient)
}

/// `gᵀ adj(H) g` for symmetric `H`.
fn adjugate_quadratic(h: &Matrix3<f64>, g: &Vec3) -> f64 {
    let adj = symmetric_adjugate(h);
    (g.transpose() * adj * g)[(0, 0)]
}

fn symmetric_adjugate(h: &Matrix3<f64>) -> Matrix3<f64> {
    let (h11, h22, h33) = (h[(0, 0)], h[(1, 1)], h[(2, 2)]);
    let (h12, h13, h23) = (h[(0, 1)], h[(0, 2)], h[(1, 2)]);
    let a11 = h22 * h33 - h23 * h23;
    let a22 = h11 * h33 - h13 * h13;
    let a33 = h11 * h22 - h12 * h12;
    let a12 = h13 * h23 - h12 * h33;
    let a13 = h12 * h23 - h13 * h22;
    let a23 = h12 * h13 - h11 * h23;
    Matrix3::new(a11, a12, a13, a12, a22, a23, a13, a23, a33)
}

/// Gaussian curvature of the level set through a point, `-det(B) / ‖∇f‖⁴`
/// with `B` the bordered Hessian.
pub fn gaussian_curvature(jet: &Jet2) -> Curvature {
    let gn = jet.gradient.norm();
    if !(gn >= GRADIENT_EPS) {
        return Curvature {
            value: 0.0,
            guarded: true,
        };
    }
    let det = bordered_determinant(&jet.hessian, &jet.gradient);
    Curvature {
        value: -det / gn.powi(4),
        guarded: false,
    }
}

/// Derivatives of the curvature with respect to gradient and Hessian entries
/// (entries treated independently; off-diagonal sensitivity split evenly).
fn curvature_sensitivity(jet: &Jet2) -> (f64, Vec3, Matrix3<f64>) {
    let g = &jet.gradient;
    let h = &jet.hessian;
    let gn2 = g.norm_squared();
    let gn4 = gn2 * gn2;
    let adj = symmetric_adjugate(h);
    let numer = (g.transpose() * adj * g)[(0, 0)];
    let k = numer / gn4;
    let d_grad = (adj * g) * (2.0 / gn4) - g * (4.0 * numer / (gn4 * gn2));

    let (g1, g2, g3) = (g[0], g[1], g[2]);
    let (h11, h22, h33) = (h[(0, 0)], h[(1, 1)], h[(2, 2)]);
    let (h12, h13, h23) = (h[(0, 1)], h[(0, 2)], h[(1, 2)]);
    // derivatives of gᵀ adj(H) g with respect to each unique symmetric entry
    let d11 = g2 * g2 * h33 + g3 * g3 * h22 - 2.0 * g2 * g3 * h23;
    let d22 = g1 * g1 * h33 + g3 * g3 * h11 - 2.0 * g1 * g3 * h13;
    let d33 = g1 * g1 * h22 + g2 * g2 * h11 - 2.0 * g1 * g2 * h12;
    let d12 = -2.0 * g3 * g3 * h12 - 2.0 * g1 * g2 * h33 + 2.0 * g1 * g3 * h23 + 2.0 * g2 * g3 * h13;
    let d13 = -2.0 * g2 * g2 * h13 + 2.0 * g1 * g2 * h23 - 2.0 * g1 * g3 * h22 + 2.0 * g2 * g3 * h12;
    let d23 = -2.0 * g1 * g1 * h23 + 2.0 * g1 * g2 * h13 + 2.0 * g1 * g3 * h12 - 2.0 * g2 * g3 * h11;
    let d_hess = Matrix3::new(
        d11,
        0.5 * d12,
        0.5 * d13,
        0.5 * d12,
        d22,
        0.5 * d23,
        0.5 * d13,
        0.5 * d23,
        d33,
    ) / gn4;
    (k, d_grad, d_hess)
}

/// Quartic with `DT(0) = 0`, a peak `DT(π/4) = π/4`, and a valley
/// `DT(π/2) = a`, both extrema having zero slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoubleTrough {
    /// Coefficients of `t, t², t³, t⁴`.
    coeffs: [f64; 4],
}

impl DoubleTrough {
    pub fn new(a: f64) -> Self {
        Self {
            coeffs: [
                12.0 * a / PI,
                (16.0 * PI - 116.0 * a) / PI.powi(2),
                (352.0 * a - 64.0 * PI) / PI.powi(3),
                (64.0 * PI - 320.0 * a) / PI.powi(4),
            ],
        }
    }

    pub fn coefficients(&self) -> [f64; 4] {
        self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coeffs;
        t * (c1 + t * (c2 + t * (c3 + t * c4)))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coeffs;
        c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * 4.0 * c4))
    }
}

impl Default for DoubleTrough {
    fn default() -> Self {
        Self::new(0.25)
    }
}

/// The default double-trough curve (valley height 1/4), written with its
/// closed-form coefficients.
pub fn double_trough(t: f64) -> f64 {
    let pi2 = PI * PI;
    let pi3 = pi2 * PI;
    let pi4 = pi3 * PI;
    (64.0 * PI - 80.0) / pi4 * t.powi(4) - (64.0 * PI - 88.0) / pi3 * t.powi(3)
        + (16.0 * PI - 29.0) / pi2 * t * t
        + 3.0 / PI * t
}

/// Result of a curvature-penalty evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussTerm {
    pub value: f64,
    /// Points excluded from the mean because their gradient vanished.
    pub excluded: usize,
}

/// Mean of `DT(|k|)` (or `|k|` when `shape` is `None`) over the points whose
/// gradient is not degenerate.
pub fn gauss_term(jets: &[Jet2], shape: Option<&DoubleTrough>) -> GaussTerm {
    let mut sum = 0.0;
    let mut used = 0usize;
    for jet in jets {
        let k = gaussian_curvature(jet);
        if k.guarded {
            continue;
        }
        let t = k.value.abs();
        sum += shape.map_or(t, |dt| dt.eval(t));
        used += 1;
    }
    GaussTerm {
        value: if used == 0 { 0.0 } else { sum / used as f64 },
        excluded: jets.len() - used,
    }
}

/// One of the comparison smoothness energies, averaged over `jets`.
pub fn alt_energy(jets: &[Jet2], kind: Regularizer) -> Result<f64> {
    let per_point: fn(&Jet2) -> f64 = match kind {
        Regularizer::DirichletEnergy => |j| 0.5 * j.gradient.norm_squared(),
        Regularizer::HessianL2 => |j| j.hessian.norm_squared(),
        Regularizer::HessianL1 => |j| j.hessian.iter().map(|v| v.abs()).sum(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{} is not a smoothness energy",
                other.name()
            )))
        }
    };
    Ok(mean_of(jets.iter().map(per_point), jets.len()))
}

/// Schedule of the annealing factor τ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnnealingMode {
    /// 1 until 20% of the run, linear to 1e-4 at 50%, linear to 0 at the end.
    Paper,
    /// τ = 1 throughout (developability enforcement).
    Constant,
    /// τ = 0 throughout: the regularizer is switched off.
    Off,
}

impl std::str::FromStr for AnnealingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(AnnealingMode::Paper),
            "constant" => Ok(AnnealingMode::Constant),
            "off" => Ok(AnnealingMode::Off),
            other => Err(Error::InvalidArgument(format!("unknown annealing mode `{other}`"))),
        }
    }
}

impl AnnealingMode {
    pub fn name(self) -> &'static str {
        match self {
            AnnealingMode::Paper => "paper",
            AnnealingMode::Constant => "constant",
            AnnealingMode::Off => "off",
        }
    }
}

const TAU_FLOOR: f64 = 1e-4;

pub fn annealing_tau(iteration: usize, total: usize, mode: AnnealingMode) -> f64 {
    match mode {
        AnnealingMode::Constant => 1.0,
        AnnealingMode::Off => 0.0,
        AnnealingMode::Paper => {
            if total == 0 {
                return 1.0;
            }
            let it = iteration.min(total) as f64;
            let t = total as f64;
            let (hold, mid) = (0.2 * t, 0.5 * t);
            if it <= hold {
                1.0
            } else if it <= mid {
                let s = (it - hold) / (mid - hold);
                (1.0 - s) + s * TAU_FLOOR
            } else if iteration >= total {
                0.0
            } else {
                let s = (it - mid) / (t - mid);
                TAU_FLOOR * (1.0 - s)
            }
        }
    }
}

/// Jet requests for one batch, in the fixed order
/// `[manifold, uniform, near_surface, projected]`. Curvature groups are empty
/// unless the regularizer needs them.
pub fn loss_groups<'a>(
    manifold: &'a [Vec3],
    uniform: &'a [Vec3],
    near_surface: &'a [Vec3],
    projected: &'a [Vec3],
    regularizer: Regularizer,
) -> Vec<JetGroup<'a>> {
    let order = regularizer.surface_order();
    let curv: (&[Vec3], &[Vec3]) = if regularizer.uses_curvature() {
        (near_surface, projected)
    } else {
        (&[], &[])
    };
    vec![
        JetGroup::new(manifold, order),
        JetGroup::new(uniform, order),
        JetGroup::new(curv.0, JetOrder::Hessian),
        JetGroup::new(curv.1, JetOrder::Hessian),
    ]
}

/// The annealed total loss over a batch.
pub fn total_loss(jets: &BatchJets, weights: &LossWeights, tau: f64) -> Result<LossBreakdown> {
    let groups = [
        jets.manifold.clone(),
        jets.uniform.clone(),
        jets.near_surface.clone(),
        jets.projected.clone(),
    ];
    Ok(total_loss_with_adjoints(&groups, weights, tau)?.0)
}

/// The annealed total loss over jets laid out as by [`loss_groups`], together
/// with the loss sensitivity to every jet.
pub fn total_loss_with_adjoints(
    groups: &[Vec<Jet2>],
    weights: &LossWeights,
    tau: f64,
) -> Result<(LossBreakdown, Vec<Vec<JetAdjoint>>)> {
    if groups.len() != 4 {
        return Err(Error::InvalidArgument(format!(
            "expected 4 jet groups, got {}",
            groups.len()
        )));
    }
    let (manifold, uniform) = (&groups[0], &groups[1]);
    let mut adj: Vec<Vec<JetAdjoint>> = groups
        .iter()
        .map(|g| vec![JetAdjoint::default(); g.len()])
        .collect();

    // Eikonal over P ∪ Q
    let n_surface = manifold.len() + uniform.len();
    let eikonal = mean_of(
        manifold
            .iter()
            .chain(uniform.iter())
            .map(|j| (1.0 - j.gradient.norm()).abs()),
        n_surface,
    );
    let scale_e = weights.lambda_e / n_surface.max(1) as f64;
    for gi in 0..2 {
        for (j, a) in groups[gi].iter().zip(adj[gi].iter_mut()) {
            let gn = j.gradient.norm();
            if gn > 0.0 {
                a.gradient += j.gradient * (-sign(1.0 - gn) / gn * scale_e);
            }
        }
    }

    let dm = dirichlet_manifold(manifold);
    let scale_dm = weights.lambda_dm / manifold.len().max(1) as f64;
    for (j, a) in manifold.iter().zip(adj[0].iter_mut()) {
        a.value += sign(j.value) * scale_dm;
    }

    let dnm = dirichlet_nonmanifold(uniform, weights.alpha);
    let scale_dnm = weights.lambda_dnm / uniform.len().max(1) as f64;
    for (j, a) in uniform.iter().zip(adj[1].iter_mut()) {
        a.value += -weights.alpha * sign(j.value) * (-weights.alpha * j.value.abs()).exp() * scale_dnm;
    }

    let reg_weight = tau * weights.lambda_gauss;
    let mut guarded = 0;
    let regularizer = match weights.regularizer {
        Regularizer::None => 0.0,
        Regularizer::GaussDt | Regularizer::GaussPlain => {
            let shape = (weights.regularizer == Regularizer::GaussDt).then(|| DoubleTrough::new(weights.dt_a));
            let mut sum = 0.0;
            let mut used = Vec::new();
            for gi in 2..4 {
                for (pi, j) in groups[gi].iter().enumerate() {
                    let k = gaussian_curvature(j);
                    if k.guarded {
                        guarded += 1;
                        continue;
                    }
                    let t = k.value.abs();
                    sum += shape.as_ref().map_or(t, |dt| dt.eval(t));
                    used.push((gi, pi));
                }
            }
            let n = used.len();
            if n > 0 && reg_weight != 0.0 {
                let scale = reg_weight / n as f64;
                for (gi, pi) in used {
                    let jet = &groups[gi][pi];
                    let (k, d_grad, d_hess) = curvature_sensitivity(jet);
                    let dphi = shape.as_ref().map_or(1.0, |dt| dt.derivative(k.abs())) * sign(k);
                    let a = &mut adj[gi][pi];
                    a.gradient += d_grad * (dphi * scale);
                    a.hessian += d_hess * (dphi * scale);
                }
            }
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }
        kind => {
            let all: Vec<Jet2> = manifold.iter().chain(uniform.iter()).copied().collect();
            let value = alt_energy(&all, kind)?;
            let scale = reg_weight / n_surface.max(1) as f64;
            if reg_weight != 0.0 {
                for gi in 0..2 {
                    for (j, a) in groups[gi].iter().zip(adj[gi].iter_mut()) {
                        match kind {
                            Regularizer::DirichletEnergy => a.gradient += j.gradient * scale,
                            Regularizer::HessianL2 => a.hessian += j.hessian * (2.0 * scale),
                            Regularizer::HessianL1 => a.hessian += j.hessian.map(sign) * scale,
                            _ => unreachable!(),
                        }
                    }
                }
            }
            value
        }
    };

    let total = weights.lambda_e * eikonal
        + weights.lambda_dm * dm
        + weights.lambda_dnm * dnm
        + reg_weight * regularizer;
    let breakdown = LossBreakdown {
        eikonal,
        dirichlet_manifold: dm,
        dirichlet_nonmanifold: dnm,
        regularizer,
        total,
        tau,
        guarded,
    };
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: None,
            detail: format!("{breakdown:?}"),
        });
    }
    Ok((breakdown, adj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn jet(value: f64, gradient: Vec3, hessian: Matrix3<f64>) -> Jet2 {
        Jet2::new(value, gradient, hessian)
    }

    fn flat(value: f64, gradient: Vec3) -> Jet2 {
        jet(value, gradient, Matrix3::zeros())
    }

    /// Analytic jet of `‖x‖ - r`.
    fn sphere_jet(x: Vec3, r: f64) -> Jet2 {
        let n = x.norm();
        let g = x / n;
        let h = (Matrix3::identity() - g * g.transpose()) / n;
        jet(n - r, g, h)
    }

    /// Analytic jet of `sqrt(x² + y²) - r`.
    fn cylinder_jet(x: Vec3, r: f64) -> Jet2 {
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let g = Vec3::new(x[0] / rho, x[1] / rho, 0.0);
        let mut h = Matrix3::zeros();
        h[(0, 0)] = x[1] * x[1] / rho.powi(3);
        h[(1, 1)] = x[0] * x[0] / rho.powi(3);
        h[(0, 1)] = -x[0] * x[1] / rho.powi(3);
        h[(1, 0)] = h[(0, 1)];
        jet(rho - r, g, h)
    }

    #[test]
    fn eikonal_examples() {
        let unit = vec![flat(0.0, Vec3::new(0.0, 0.6, 0.8)); 4];
        assert_eq!(eikonal_term(&unit), 0.0);
        assert_eq!(eikonal_term(&[flat(0.0, Vec3::new(2.0, 0.0, 0.0))]), 1.0);
        let sdf: Vec<Jet2> = [Vec3::new(0.3, -0.2, 0.1), Vec3::new(-0.01, 0.4, 0.2)]
            .iter()
            .map(|&x| sphere_jet(x, 0.4))
            .collect();
        assert!(eikonal_term(&sdf) < 1e-9);
    }

    #[test]
    fn dirichlet_examples() {
        let z = vec![flat(0.0, Vec3::x()); 3];
        assert_eq!(dirichlet_manifold(&z), 0.0);
        assert_relative_eq!(
            dirichlet_manifold(&[flat(0.1, Vec3::x()), flat(-0.3, Vec3::x())]),
            0.2,
            epsilon = 1e-15
        );
        assert_eq!(dirichlet_nonmanifold(&z, 100.0), 1.0);
        let tenth = vec![flat(0.1, Vec3::x()), flat(-0.1, Vec3::x())];
        assert_relative_eq!(dirichlet_nonmanifold(&tenth, 100.0), (-10.0f64).exp(), epsilon = 1e-18);
        assert_eq!(dirichlet_nonmanifold(&tenth, 0.0), 1.0);
    }

    #[test]
    fn curvature_of_analytic_fields() {
        let plane = flat(0.0, Vec3::z());
        assert_eq!(gaussian_curvature(&plane).value, 0.0);
        for r in [0.3, 0.4, 1.0] {
            let j = sphere_jet(Vec3::new(r, 0.0, 0.0), r);
            assert_relative_eq!(bordered_determinant(&j.hessian, &j.gradient), -1.0 / (r * r), epsilon = 1e-12);
            assert_relative_eq!(gaussian_curvature(&j).value, 1.0 / (r * r), epsilon = 1e-9);
        }
        let c = cylinder_jet(Vec3::new(0.3 * 0.6, 0.3 * 0.8, 0.1), 0.3);
        assert!(gaussian_curvature(&c).value.abs() < 1e-9);
    }

    #[test]
    fn curvature_guard_flags_critical_points() {
        let k = gaussian_curvature(&jet(0.1, Vec3::new(1e-9, 0.0, 0.0), Matrix3::identity()));
        assert!(k.guarded);
        assert_eq!(k.value, 0.0);
        let term = gauss_term(&[flat(0.0, Vec3::zeros()), sphere_jet(Vec3::x(), 1.0)], None);
        assert_eq!(term.excluded, 1);
        assert_relative_eq!(term.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn double_trough_conditions() {
        assert_eq!(double_trough(0.0), 0.0);
        assert_relative_eq!(double_trough(FRAC_PI_4), FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(double_trough(FRAC_PI_2), 0.25, epsilon = 1e-12);
        let h = 1e-6;
        for t in [FRAC_PI_4, FRAC_PI_2] {
            let d = (double_trough(t + h) - double_trough(t - h)) / (2.0 * h);
            assert!(d.abs() < 1e-8, "DT'({t}) = {d}");
        }
    }

    #[test]
    fn general_double_trough_matches_closed_form() {
        let dt = DoubleTrough::default();
        let pi = PI;
        let expected = [
            3.0 / pi,
            (16.0 * pi - 29.0) / pi.powi(2),
            -(64.0 * pi - 88.0) / pi.powi(3),
            (64.0 * pi - 80.0) / pi.powi(4),
        ];
        for (c, e) in dt.coefficients().iter().zip(expected) {
            assert_relative_eq!(*c, e, epsilon = 1e-13);
        }
        for t in [0.0, 0.3, 1.0, 2.5] {
            assert_relative_eq!(dt.eval(t), double_trough(t), epsilon = 1e-12);
        }
        for a in [0.05, 0.25, 0.6] {
            let dt = DoubleTrough::new(a);
            assert_relative_eq!(dt.eval(FRAC_PI_4), FRAC_PI_4, epsilon = 1e-12);
            assert_relative_eq!(dt.eval(FRAC_PI_2), a, epsilon = 1e-12);
            assert!(dt.derivative(FRAC_PI_4).abs() < 1e-12);
            assert!(dt.derivative(FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss_term_examples() {
        let plane = vec![flat(0.0, Vec3::z()); 5];
        assert_eq!(gauss_term(&plane, Some(&DoubleTrough::default())).value, 0.0);
        let sphere: Vec<Jet2> = [Vec3::x(), Vec3::y(), Vec3::new(0.6, 0.0, 0.8)]
            .iter()
            .map(|&x| sphere_jet(x, 1.0))
            .collect();
        assert_relative_eq!(gauss_term(&sphere, None).value, 1.0, epsilon = 1e-12);
        // sphere of radius sqrt(2/pi) has k = pi/2
        let r = (2.0 / PI).sqrt();
        let at_half_pi: Vec<Jet2> = [Vec3::x(), Vec3::z()].iter().map(|&d| sphere_jet(d * r, r)).collect();
        assert_relative_eq!(
            gauss_term(&at_half_pi, Some(&DoubleTrough::default())).value,
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn alt_energy_examples() {
        let zero = vec![flat(0.0, Vec3::zeros()); 3];
        for kind in [Regularizer::DirichletEnergy, Regularizer::HessianL2, Regularizer::HessianL1] {
            assert_eq!(alt_energy(&zero, kind).unwrap(), 0.0);
        }
        let unit = vec![flat(0.0, Vec3::y()); 2];
        assert_eq!(alt_energy(&unit, Regularizer::DirichletEnergy).unwrap(), 0.5);
        assert_eq!(alt_energy(&unit, Regularizer::HessianL2).unwrap(), 0.0);
        assert_eq!(alt_energy(&unit, Regularizer::HessianL1).unwrap(), 0.0);
        let ident = vec![jet(0.0, Vec3::x(), Matrix3::identity())];
        assert_eq!(alt_energy(&ident, Regularizer::HessianL2).unwrap(), 3.0);
        assert_eq!(alt_energy(&ident, Regularizer::HessianL1).unwrap(), 3.0);
        assert!(alt_energy(&ident, Regularizer::GaussDt).is_err());
    }

    #[test]
    fn annealing_schedule_points() {
        let t = 1000;
        let m = AnnealingMode::Paper;
        assert_eq!(annealing_tau(0, t, m), 1.0);
        assert_eq!(annealing_tau(100, t, m), 1.0);
        assert_eq!(annealing_tau(200, t, m), 1.0);
        assert_eq!(annealing_tau(500, t, m), 1e-4);
        assert_eq!(annealing_tau(1000, t, m), 0.0);
        assert_relative_eq!(annealing_tau(350, t, m), 0.5 * (1.0 + 1e-4), epsilon = 1e-12);
        assert_relative_eq!(annealing_tau(750, t, m), 0.5e-4, epsilon = 1e-15);
        assert_eq!(annealing_tau(123, t, AnnealingMode::Constant), 1.0);
        assert_eq!(annealing_tau(123, t, AnnealingMode::Off), 0.0);
    }

    #[test]
    fn breakdown_identity_and_basic_loss() {
        let manifold = vec![flat(0.01, Vec3::new(0.9, 0.1, 0.0)), flat(-0.02, Vec3::new(0.0, 1.2, 0.0))];
        let uniform = vec![flat(0.3, Vec3::new(0.0, 0.0, 1.1))];
        let omega = vec![sphere_jet(Vec3::new(0.5, 0.1, 0.0), 0.4)];
        let batch = BatchJets {
            manifold,
            uniform,
            near_surface: omega,
            projected: vec![],
        };
        let w = LossWeights::default();
        let b = total_loss(&batch, &w, 0.3).unwrap();
        let expect = w.lambda_e * b.eikonal
            + w.lambda_dm * b.dirichlet_manifold
            + w.lambda_dnm * b.dirichlet_nonmanifold
            + 0.3 * w.lambda_gauss * b.regularizer;
        assert_relative_eq!(b.total, expect, max_relative = 1e-12);
        let basic = total_loss(&batch, &w, 0.0).unwrap();
        assert_relative_eq!(
            basic.total,
            w.lambda_e * basic.eikonal + w.lambda_dm * basic.dirichlet_manifold + w.lambda_dnm * basic.dirichlet_nonmanifold,
            max_relative = 1e-15
        );
        let none = LossWeights {
            regularizer: Regularizer::None,
            ..w
        };
        assert_eq!(total_loss(&batch, &none, 1.0).unwrap().regularizer, 0.0);
    }

    /// Hand arithmetic on a 3-point batch (one point per loss set).
    #[test]
    fn three_point_batch_by_hand() {
        let p = flat(0.02, Vec3::new(0.0, 0.0, 1.5)); // |1-1.5| = 0.5
        let q = flat(-0.05, Vec3::new(0.6, 0.0, 0.0)); // |1-0.6| = 0.4
        let r = 2.0f64;
        let o = sphere_jet(Vec3::new(0.0, r, 0.0), r); // k = 0.25
        let batch = BatchJets {
            manifold: vec![p],
            uniform: vec![q],
            near_surface: vec![o],
            projected: vec![],
        };
        let w = LossWeights::default();
        let b = total_loss(&batch, &w, 0.5).unwrap();
        let eik = (0.5 + 0.4) / 2.0;
        let dm = 0.02;
        let dnm = (-100.0f64 * 0.05).exp();
        let reg = double_trough(0.25);
        assert_relative_eq!(b.eikonal, eik, epsilon = 1e-14);
        assert_relative_eq!(b.dirichlet_manifold, dm, epsilon = 1e-15);
        assert_relative_eq!(b.dirichlet_nonmanifold, dnm, epsilon = 1e-15);
        assert_relative_eq!(b.regularizer, reg, epsilon = 1e-12);
        assert_relative_eq!(b.total, 50.0 * eik + 7000.0 * dm + 600.0 * dnm + 0.5 * 10.0 * reg, max_relative = 1e-12);
    }

    #[test]
    fn curvature_sensitivity_matches_finite_differences() {
        let g = Vec3::new(0.3, -0.8, 0.5);
        let h = Matrix3::new(0.7, 0.2, -0.1, 0.2, -0.4, 0.3, -0.1, 0.3, 0.9);
        let j = jet(0.0, g, h);
        let (k, dg, dh) = curvature_sensitivity(&j);
        assert_relative_eq!(k, gaussian_curvature(&j).value, epsilon = 1e-14);
        let eps = 1e-6;
        for i in 0..3 {
            let mut jp = j;
            let mut jm = j;
            jp.gradient[i] += eps;
            jm.gradient[i] -= eps;
            let fd = (gaussian_curvature(&jp).value - gaussian_curvature(&jm).value) / (2.0 * eps);
            assert_relative_eq!(dg[i], fd, epsilon = 1e-7);
        }
        for a in 0..3 {
            for b in a..3 {
                let mut jp = j;
                let mut jm = j;
                jp.hessian[(a, b)] += eps;
                jp.hessian[(b, a)] = jp.hessian[(a, b)];
                jm.hessian[(a, b)] -= eps;
                jm.hessian[(b, a)] = jm.hessian[(a, b)];
                let fd = (gaussian_curvature(&jp).value - gaussian_curvature(&jm).value) / (2.0 * eps);
                let analytic = if a == b { dh[(a, a)] } else { dh[(a, b)] + dh[(b, a)] };
                assert_relative_eq!(analytic, fd, epsilon = 1e-7);
            }
        }
    }
}
