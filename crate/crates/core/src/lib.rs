//! Maximum-entropy edge profiles, exact uniform sampling from
//! profile-defined graph sets, and the sandwich coupling between those
//! sets and inhomogeneous random graphs.

pub mod analysis;
pub mod constraints;
pub mod coupling;
pub mod error;
pub mod graphspace;
mod lp;
pub mod maxent;
pub mod oracle;
pub mod rng;
pub mod sampler;

pub use constraints::ConstraintSpec;
pub use coupling::{CouplingOutcome, SandwichCoupler};
pub use error::{Error, Result};
pub use graphspace::{EdgePartition, Graph, Profile};
pub use maxent::{maximize_entropy, MaxEntSolution, ProbabilityMatrix, SolveStatus, SolverOptions};
pub use rng::RandomStream;
pub use sampler::{ProfileDistribution, ProfileSampler, SamplerOptions, Strategy};
