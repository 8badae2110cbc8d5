pub mod scalar;

pub use scalar::Real;
