//! Exact and random-matrix predictions for the time-dependent quantum Fisher
//! information of a pure state evolving under a chaotic Hamiltonian.

pub mod analytics;
pub mod correlators;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod qfi;
pub mod rmt;
pub mod spin;

pub use error::{QfiError, Result};
pub use linalg::{eigh, kron, to_eigenbasis, ComplexState, EigenSystem, SymmetricMatrix, C64};
