//! Natural-gradient geometry for learning with hidden units on finite
//! state spaces.
//!
//! The crate covers the Fisher-Rao metric and KL gradients on the open
//! simplex ([`simplex`]), the marginalization fibration of a joint
//! visible/hidden space ([`fibration`]), parametric submodels with Fisher
//! matrices, tangent projections and cylindricity checks ([`model`]),
//! Bayesian networks with block-diagonal Fisher solves ([`bayesnet`]), the
//! visible KL / ELBO objectives ([`objectives`]) and a seeded experiment
//! harness with a CLI ([`harness`]).
//!
//! Core routines are generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64`.

// `!(x > 0.0)` style comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayesnet;
pub mod error;
pub mod fibration;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod sampling;
pub mod scalar;
pub mod simplex;

pub use error::{Error, Result};
pub use fibration::{HVDecomposition, JointSpace};
pub use model::{CylindricityReport, FisherMatrix, ParametricModel};
pub use scalar::Real;
pub use simplex::{Distribution, StateSpace, TangentVector};

pub type Distribution64 = simplex::Distribution<f64>;
pub type TangentVector64 = simplex::TangentVector<f64>;
pub type FisherMatrix64 = model::FisherMatrix<f64>;
pub type ObjectiveContext64 = objectives::ObjectiveContext<f64>;
pub type SoftmaxModel64 = model::SoftmaxModel<f64>;
pub type ProductModel64 = model::ProductModel<f64>;
pub type TiedModel64 = model::TiedModel<f64>;

pub type Distribution32 = simplex::Distribution<f32>;
pub type TangentVector32 = simplex::TangentVector<f32>;
