//! Reconstruction of CAD-like surfaces from unoriented point clouds.
//!
//! A sine-activated MLP is fitted as a signed distance field under Eikonal and
//! Dirichlet constraints plus a Gaussian-curvature penalty shaped by a
//! double-trough function, after which the zero level set is extracted with
//! marching cubes and compared against ground truth.

pub mod checkpoint;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod io;
pub mod losses;
mod mc_tables;
pub mod meshing;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod sampling;
pub mod spatial;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use field::ImplicitField;
pub use fixtures::{synth_fixture, Fixture, FixtureKind};
pub use io::{load_cloud, normalize_cloud, Normalization, RunConfig};
pub use network::{FieldNetwork, InitScheme, Jet2, JetAdjoint, JetGroup, JetOrder, ParamGradient, Vec3};
pub use meshing::TriangleMesh;
pub use metrics::{MetricsReport, SurfaceSamples};
pub use sampling::{PointCloud, SampleBatch};
pub use optimizer::{fit, FitOptions, FitResult, TrainConfig, Trainer};
