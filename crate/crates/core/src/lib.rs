//! Open-set recognition toolkit.
//!
//! Trains small dense classifiers with cross-entropy, background-class,
//! entropic open-set or objectosphere objectives and evaluates them with
//! open-set classification rate (OSCR) curves and related statistics.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod training;
pub mod losses;
pub mod network;
pub mod numeric;
pub mod plot;

pub use error::{Error, Result};
