//! Steady-sliding frictional contact on the elastic half-plane with
//! heterogeneous Coulomb friction, solved through Carleman singular integral
//! equations.

pub mod carleman;
pub mod contact;
pub mod error;
pub mod homogenize;
pub mod indentor;
pub mod profile;
pub mod quad;
pub mod sing_integral;

pub use error::{Error, Result};
