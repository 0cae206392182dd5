//! Weak-coupling particle dynamics and their Landau limit.

pub mod error;
pub mod hierarchy;
pub mod kernel;
pub mod nbody;
pub mod operator;
pub mod phase;
pub mod potential;
pub mod quad;
pub mod real;
pub mod report;
pub mod twobody;

pub use error::{Error, Result};
pub use real::Real;

pub type Potential = potential::RadialPotential<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
