pub mod error;
pub mod fields;
pub mod diagnostics;
pub mod driver;
pub mod greens;
pub mod kinetic;
pub mod phase_space;
pub mod picard;
pub mod remap;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
