//! Discrete-time quantum walks of a spin-1/2 walker on 1D and 2D lattices.
//!
//! The crate covers state containers and observables, coin-angle landscapes,
//! walk protocols, Bloch-band topology, stroboscopic decoherence, edge-state
//! analysis and a declarative scenario runner.

pub mod bloch;
pub mod coin_field;
pub mod decoherence;
pub mod edge;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod protocol;
pub mod scenario;
pub mod state;

pub use error::{Error, Result};
pub use num_complex::Complex64;
