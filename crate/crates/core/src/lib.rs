//! Numerical laboratory for index estimates of minimal hypersurfaces in
//! compact symmetric spaces.
//!
//! The crate is organised bottom-up: [`lie_core`] and [`space_models`] give
//! the ambient geometry, [`hypersurfaces`] the immersed surfaces on periodic
//! grids, [`spectral`] and [`hodge`] the discrete operators, [`trace_lab`]
//! the test-variation families and trace identities, and [`simdiag`] the
//! smooth simultaneous diagonalization of commuting tensor fields.

pub mod error;
pub mod hodge;
pub mod hypersurfaces;
pub mod jet;
pub mod lie_core;
pub mod simdiag;
pub mod space_models;
pub mod spectral;
pub mod trace_lab;

pub use error::{Error, Result};
