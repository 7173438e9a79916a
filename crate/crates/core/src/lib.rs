pub mod applications;
pub mod error;
pub mod linalg;
pub mod modes;
pub mod qfi;
pub mod scans;
pub mod selftest;
pub mod states;
pub mod sweep;
pub mod symplectic;
pub mod tolerance;

pub use error::{Error, Result};
pub use tolerance::Tolerances;
