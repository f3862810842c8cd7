//! Reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every scalar operation of a forward computation; a
//! single reverse sweep ([`Tape::backward`]) then yields exact derivatives of
//! one scalar output with respect to every recorded node. Rollout code is
//! written against the [`Real`] trait so the same function runs untaped on
//! `f64` or taped on [`Var`].
//!
//! ```
//! use mimic_core::autodiff::{Real, Tape};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(2.0);
//! let y = tape.leaf(3.0);
//! let f = x * y + y;
//! let grad = tape.gradient(f, &[x, y]).unwrap();
//! assert_eq!(grad, vec![3.0, 3.0]);
//!
//! // The same code path evaluated without a tape:
//! fn g<R: Real>(x: R, y: R) -> R { x * y + y }
//! assert_eq!(g(2.0, 3.0), f.value());
//! ```

mod real;
mod tape;

pub use real::Real;
pub use tape::{Adjoints, Op, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdError {
    #[error("variables from different tapes were combined")]
    CrossTape,
    #[error("backward pass requested on an empty tape")]
    EmptyTape,
    #[error("record called with {inputs} inputs but {partials} partials")]
    ArityMismatch { inputs: usize, partials: usize },
}
