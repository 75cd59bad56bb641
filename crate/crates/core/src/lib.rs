pub mod dla;
pub mod error;
pub mod gluing;
pub mod harness;
pub mod hitting;
pub mod kernel;
pub mod law;
pub mod oracle;
pub mod rng;
pub mod special;
pub mod validate;
pub mod z3;

pub use error::{LdlaError, Result};
pub use law::{LawKind, LawSpec, StepLaw};
pub use kernel::{compute_a, PotentialKernel};
pub use hitting::{two_point_escape, HittingSystem};
pub use gluing::{mu_at, GluingDistribution, GluingSampler, NuSampler};
pub use dla::{run_dla, Aggregate, DlaRun, RunConfig, SamplerKind, StepRecord, Trajectory};
pub use harness::{fit_exponent, sweep, EnsembleSpec, ExponentEstimate};
