//! Symbol calculus, Weyl quantisation, heat traces and spectral asymptotics
//! for hypoelliptic operators of finite and infinite order.

pub mod asymptotics;
pub mod calculus;
pub mod eigen;
pub mod error;
pub mod heat;
pub mod jet;
pub mod numerics;
pub mod quantize;
pub mod quadrature;
pub mod symbols;
pub mod weights;

pub use error::{Error, Result};
