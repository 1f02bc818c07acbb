//! Simulation and reconstruction toolkit for synchronized multi-frequency
//! shear-wave elastography with a swept plane-wave transducer.
//!
//! The pipeline runs phantom -> steady-state field -> swept acquisition ->
//! displacement tracking -> phasor fitting -> scan conversion -> curl ->
//! local frequency estimation -> elasticity statistics. A transient
//! radiation-force baseline is included for comparison.

pub mod acquisition;
pub mod arfi;
pub mod error;
pub mod exec;
pub mod fft;
pub mod forward;
pub mod geometry;
pub mod inversion;
pub mod io;
pub mod phantom;
pub mod phasor;
pub mod pipeline;
pub mod sequence;
pub mod spectrum;
pub mod tracking;
pub mod volume;

pub use error::{Error, Result};
pub use exec::Execution;
pub use volume::{Volume, VectorVolume, C64};
