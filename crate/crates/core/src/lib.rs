#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN
#![allow(clippy::excessive_precision)] // reference constants keep their published digits
//! Matrix-free sum-product GAMP with a closed-form Laplacian-prior denoiser,
//! EM learning of the prior scale and noise variance, and a Monte-Carlo
//! harness for angular-domain mmWave MIMO channel estimation.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod em;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gamp;
pub mod laplace;
pub mod operator;
pub mod quadrature;
pub mod selftest;
pub mod special;

pub use error::{Error, Result};
pub use gamp::{run_gamp, GampConfig, GampResult, InputDenoiser};
pub use laplace::{posterior_stats, LaplaceDenoiser, LaplacePrior};
pub use operator::LinearOperator;
