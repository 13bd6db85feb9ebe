//! Bayesian estimation of time-varying-parameter VAR models with one
//! exogenous regressor whose long-run multiplier is held constant over time.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`] dense factorizations and the random draws everything else uses;
//! * [`statespace`] Kalman filter and Carter–Kohn simulation smoother for
//!   random-walk states;
//! * [`model`] model types and the long-run constraint algebra;
//! * [`priors`] OLS calibration of the prior on a training sample;
//! * [`gibbs`] the sampler (constrained and unconstrained);
//! * [`analysis`] impulse responses, long-run growth, forecasting, error tables;
//! * [`benchmarks`] constant-parameter VARX and the three-method comparison;
//! * [`simulate`] synthetic data-generating process;
//! * [`data`], [`config`] and [`io`] ingestion, run configuration and persistence.

pub mod analysis;
pub mod benchmarks;
pub mod config;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod numkit;
pub mod ols;
pub mod priors;
pub mod simulate;
pub mod statespace;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};

pub use analysis::{ErrorTable, ForecastMode, ForecastSet, GrowthBands, IrfGrid};
pub use benchmarks::{BenchmarkTable, ConstantVarx, EvalPlan, SuiteConfig};
pub use config::{RunConfig, RunMode};
pub use data::{Dataset, Quarter};
pub use gibbs::{ChainOutput, ChainRecord, MixtureTable, SamplerOptions};
pub use io::{ChainHeader, ColumnMap, Manifest};
pub use model::{CoefAt, CoefState, CovState, ElasticityState, Hyperparams, Layout, McmcConfig, ModelConfig};
pub use numkit::{RngStream, SymMatrix};
pub use priors::{PriorOverrides, PriorSpec};
