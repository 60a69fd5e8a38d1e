//! Random unitary band matrices `U_ω = D_ω S(t)` on the full and half
//! lattice, their transfer-matrix cocycles and Lyapunov exponents, the
//! non-compactness certificate behind positivity of those exponents, and
//! dense spectral diagnostics of finite windows.

pub mod acceptance;
pub mod angle;
pub mod disorder;
pub mod error;
pub mod exec;
pub mod fuerstenberg;
pub mod fmt;
pub mod mat2;
pub mod operator;
pub mod params;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use exec::Exec;
pub use params::BandParameters;
