//! Simulation and numerical verification of the joint limit laws of maxima and
//! minima of stationary Gaussian random fields, observed both over a continuous
//! domain and over uniform sampling grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`covmodels`]: stationary covariance families and the strongly dependent
//!   mixture construction.
//! - [`fieldsim`]: exact lattice simulation (circulant embedding, dense
//!   factorization, AR(1) recursion) and fractional Brownian motion paths.
//! - [`grids`]: sparse / Pickands / dense sampling regimes.
//! - [`norming`]: the normalizing constants and the four-level transform.
//! - [`pickands`]: Monte Carlo estimation of Pickands-type constants.
//! - [`limitlaws`]: quadrature evaluation of the joint limit distributions.
//! - [`harness`]: replicated experiments and their comparison reports.
//!
//! Supporting numerics live in [`quadrature`], [`mvn`], [`stats`],
//! [`linalg`], [`special`] and [`rng`].

pub mod covmodels;
pub mod error;
pub mod fieldsim;
pub mod grids;
pub mod harness;
pub mod limitlaws;
pub mod linalg;
pub mod mvn;
pub mod norming;
pub mod pickands;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;

pub use covmodels::{CovarianceModel, CovarianceKind, FieldModel, MixtureFieldSpec};
pub use error::{Error, Result};
pub use fieldsim::{FbmPath, FieldSample, LatticeSpec};
pub use grids::{DomainSpec, GridSpec};
pub use harness::{ComparisonReport, ExperimentConfig, ExtremesRecord};
pub use limitlaws::{LimitParams, MinConvention, Theorem};
pub use norming::{LevelQuadruple, NormingConstants};
pub use pickands::{PickandsConfig, PickandsEstimate};
