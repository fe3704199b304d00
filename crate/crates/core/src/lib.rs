//! Optimization on the partitioned subspace (PS) manifold.
//!
//! The PS manifold is the quotient of the orthogonal group whose points are
//! ordered tuples of mutually orthogonal subspaces with fixed dimensions. It
//! contains the Grassmannian (one partition) and the Stiefel manifold (all
//! partitions of size one) as special cases.
//!
//! - [`matrix`]: dense primitives (sign-canonical QR, SVD, principal angles).
//! - [`manifold`]: points, tangent projection, retraction, equivalence classes.
//! - [`optim`]: Riemannian gradient descent with backtracking.
//! - [`mdpca`]: multiple-dataset PCA with per-dataset and shared partitions.
//! - [`cdt`]: class-discriminative transfer subspaces for domain adaptation.
//! - [`sweep`]: partition-size sweeps over MD-PCA fits.
//! - [`verify`]: self-checks against independent reference implementations.

pub mod cdt;
pub mod checkpoint;
pub mod classify;
pub mod data;
pub mod error;
pub mod exec;
pub mod manifold;
pub mod matrix;
pub mod mdpca;
pub mod optim;
pub mod sweep;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
pub use manifold::{PartitionSpec, PsPoint, TangentVector};
pub use matrix::Mat;
pub use optim::{LossProblem, OptimizeReport, OptimizerConfig, Termination};
