//! Turns an overlapping arrangement of rigid polygons into an overlap-free
//! one by growing a phase-field membrane under anisotropic pressure
//! transport and projecting poses into it.

pub mod bridge;
pub mod engine;
mod error;
pub mod fields;
pub mod fixtures;
pub mod geometry;
pub mod guidance;
pub mod membrane;
pub mod projection;
pub mod transport;

pub use error::{Error, Result};
