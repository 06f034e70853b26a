//! Dynamic loop self-scheduling on heterogeneous, perturbed systems.
//!
//! The crate contains the thirteen chunk calculators, a discrete-event
//! simulator of a master-worker loop execution, periodic perturbation models,
//! the simulation-assisted technique selection loop and the metrics and
//! experiment driver built on top of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dls;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod perturbation;
pub mod platform;
pub mod sim;
pub mod simas;
pub mod workload;

pub use dls::{Chunk, DlsConfig, DlsState, PeStats, Technique};
pub use error::{Error, Result};
pub use perturbation::{PerturbationSpec, Scenario, Target};
pub use platform::{Host, Link, Platform};
pub use sim::{simulate, ChunkRecord, SimInput, SimOutcome};
pub use simas::{run_with_simas, SimasConfig, SimasOutcome};
pub use workload::{Distribution, DistributionSpec, Workload};
