//! Convex-integration construction of dissipative solutions to the
//! stochastically forced 3D Euler equations on the periodic box.

pub mod bump;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod iterate;
pub mod noise;
pub mod par;
pub mod params;
pub mod quad;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
