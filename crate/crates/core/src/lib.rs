//! Simulation and verification toolkit for stationary random fields on
//! `Z^d` built from iid innovations.

// `!(x > 0.0)` is used deliberately so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dependence;
pub mod error;
pub mod estimation;
pub mod fclt;
pub mod fields;
pub mod lattice;
pub mod noise;
pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{FieldModel, LinearKernel, LipschitzMap, ModelKind, TruncatedField, VolterraKernel};
pub use lattice::{make_domain, Domain, DomainShape, LatticePoint};
pub use noise::{couple, CoupledNoise, Innovations, NoiseDistribution, NoiseField, NoiseSpec};
pub use fclt::IndexSet;

/// Library version recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
