//! Finite checks behind the non-reducibility of products of Ramsey's theorem
//! for singletons, and executable versions of the constructive reductions.

pub mod cli;
pub mod covering;
pub mod error;
pub mod problems;
pub mod reductions;
pub mod search;
pub mod streams;

pub use error::{Error, Result};
