//! Bethe-ansatz transition densities for sticky Brownian motions on the
//! Weyl chamber, with exact identity checks, a random-walk oracle and
//! diagonal (atom) analytics.

pub mod atoms;
pub mod bethe;
pub mod combinatorics;
pub mod density;
pub mod error;
pub mod exact;
pub mod identity;
pub mod measure;
pub mod par;
pub mod rules;
pub mod rwre;

pub use error::{Error, Result};
