//! Scalar fields that can be sampled, projected onto, and meshed.
//!
//! The trained network is the main implementor; the closed-form fields here
//! serve as exact references for projection, curvature and meshing.

use nalgebra::Matrix3;

use crate::network::{FieldNetwork, Jet2, JetOrder, Vec3};

/// A scalar field over world space.
///
/// Jets are reported with derivatives taken in the field's input frame,
/// `u = input_scale() * x`. For closed-form fields the scale is 1 and the
/// input frame is the world frame.
pub trait ImplicitField {
    fn input_scale(&self) -> f64;

    fn values(&self, xs: &[Vec3]) -> Vec<f64>;

    fn input_jets(&self, xs: &[Vec3], order: JetOrder) -> Vec<Jet2>;

    fn value(&self, x: &Vec3) -> f64 {
        self.values(std::slice::from_ref(x))[0]
    }
}

impl ImplicitField for FieldNetwork {
    fn input_scale(&self) -> f64 {
        FieldNetwork::input_scale(self)
    }

    fn values(&self, xs: &[Vec3]) -> Vec<f64> {
        self.values_unchecked(xs)
    }

    fn input_jets(&self, xs: &[Vec3], order: JetOrder) -> Vec<Jet2> {
        self.input_jets_unchecked(xs, order)
    }
}

impl<F: ImplicitField + ?Sized> ImplicitField for &F {
    fn input_scale(&self) -> f64 {
        (**self).input_scale()
    }

    fn values(&self, xs: &[Vec3]) -> Vec<f64> {
        (**self).values(xs)
    }

    fn input_jets(&self, xs: &[Vec3], order: JetOrder) -> Vec<Jet2> {
        (**self).input_jets(xs, order)
    }
}

/// Exact signed distance to a sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereSdf {
    pub center: Vec3,
    pub radius: f64,
}

impl SphereSdf {
    pub fn new(radius: f64) -> Self {
        Self {
            center: Vec3::zeros(),
            radius,
        }
    }

    pub fn jet(&self, x: &Vec3) -> Jet2 {
        let d = x - self.center;
        let n = d.norm();
        if n == 0.0 {
            return Jet2::new(-self.radius, Vec3::zeros(), Matrix3::zeros());
        }
        let g = d / n;
        let h = (Matrix3::identity() - g * g.transpose()) / n;
        Jet2::new(n - self.radius, g, h)
    }
}

/// `n · x - offset` for a unit normal `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneField {
    pub normal: Vec3,
    pub offset: f64,
}

impl PlaneField {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        Self {
            normal: normal.normalize(),
            offset,
        }
    }

    pub fn jet(&self, x: &Vec3) -> Jet2 {
        Jet2::new(self.normal.dot(x) - self.offset, self.normal, Matrix3::zeros())
    }
}

/// Exact signed distance to an infinite cylinder around the z axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderSdf {
    pub radius: f64,
}

impl CylinderSdf {
    pub fn jet(&self, x: &Vec3) -> Jet2 {
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if rho == 0.0 {
            return Jet2::new(-self.radius, Vec3::zeros(), Matrix3::zeros());
        }
        let g = Vec3::new(x[0] / rho, x[1] / rho, 0.0);
        let r3 = rho * rho * rho;
        let mut h = Matrix3::zeros();
        h[(0, 0)] = x[1] * x[1] / r3;
        h[(1, 1)] = x[0] * x[0] / r3;
        h[(0, 1)] = -x[0] * x[1] / r3;
        h[(1, 0)] = h[(0, 1)];
        Jet2::new(rho - self.radius, g, h)
    }
}

fn truncate(jet: Jet2, order: JetOrder) -> Jet2 {
    match order {
        JetOrder::Value => Jet2::new(jet.value, Vec3::zeros(), Matrix3::zeros()),
        JetOrder::Gradient => Jet2::new(jet.value, jet.gradient, Matrix3::zeros()),
        JetOrder::Hessian => jet,
    }
}

macro_rules! analytic_field {
    ($ty:ty) => {
        impl ImplicitField for $ty {
            fn input_scale(&self) -> f64 {
                1.0
            }

            fn values(&self, xs: &[Vec3]) -> Vec<f64> {
                xs.iter().map(|x| self.jet(x).value).collect()
            }

            fn input_jets(&self, xs: &[Vec3], order: JetOrder) -> Vec<Jet2> {
                xs.iter().map(|x| truncate(self.jet(x), order)).collect()
            }
        }
    };
}

analytic_field!(SphereSdf);
analytic_field!(PlaneField);
analytic_field!(CylinderSdf);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_field_matches_inherent_methods() {
        let net = FieldNetwork::init(&[3, 8, 8, 1], 30.0, 2).unwrap();
        let xs = [Vec3::new(0.1, 0.2, -0.3), Vec3::new(-0.2, 0.05, 0.4)];
        assert_eq!(ImplicitField::values(&net, &xs), net.eval_batch(&xs).unwrap());
        let jets = ImplicitField::input_jets(&net, &xs, JetOrder::Hessian);
        let world = net.eval_jet_batch(&xs).unwrap();
        for (a, b) in jets.iter().zip(&world) {
            assert_eq!(a.chain_scale(net.input_scale()), *b);
        }
    }

    #[test]
    fn analytic_jets_are_consistent() {
        let s = SphereSdf::new(0.4);
        assert_eq!(s.value(&Vec3::zeros()), -0.4);
        let j = s.jet(&Vec3::new(0.0, 0.0, 0.5));
        assert!((j.value - 0.1).abs() < 1e-15);
        assert_eq!(j.gradient, Vec3::z());
        let p = PlaneField::new(Vec3::new(0.0, 0.0, 2.0), 0.1);
        assert_eq!(p.value(&Vec3::new(5.0, -3.0, 0.1)), 0.0);
        let c = CylinderSdf { radius: 0.2 };
        assert!((c.value(&Vec3::new(0.3, 0.4, 7.0)) - 0.3).abs() < 1e-15);
    }
}
