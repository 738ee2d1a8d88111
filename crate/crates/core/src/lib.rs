//! Federated multiple-instance learning with quality-diversity client selection.
//!
//! The crate simulates a server and a population of clients on one machine:
//!
//! * [`datasets`] builds bag-structured data (synthetic feature bags, MNIST, FBAG files),
//! * [`partition`] splits it across clients with label- or cluster-skewed non-IID schemes,
//! * [`model`] is a gated-attention MIL network with hand-derived gradients,
//! * [`selection`] profiles clients and draws a cohort from an exact k-DPP,
//! * [`federation`] runs the FedAvg loop over the selected cohort,
//! * [`metrics`] scores the global model.
//!
//! Numerical code is generic over [`Scalar`]; the aliases below fix it to `f64`,
//! which is what the simulator uses end to end.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod federation;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod rng;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use datasets::{Bag, BagDataset, Split, SyntheticSpec};
pub use federation::{FederationConfig, FederationOutcome, RoundRecord};
pub use metrics::EvalResult;
pub use model::{LookaheadConfig, ModelConfig, ModelShape};
pub use partition::{ClientShard, DirichletConfig, PartitionPlan, PowerLawConfig, UtilizationConfig};
pub use selection::{SelectionMethod, Subset};

/// Dense row-major matrix over `f64`.
pub type Matrix = linalg::Mat<f64>;
/// Attention-MIL weights over `f64`.
pub type ModelParams = model::Params<f64>;
/// Per-client profile over `f64`.
pub type ClientProfile = selection::ClientProfile<f64>;
/// DPPQ kernel over `f64`.
pub type SelectionKernel = selection::Kernel<f64>;
/// Symmetric eigendecomposition over `f64`.
pub type SymEig = linalg::SymEig<f64>;
