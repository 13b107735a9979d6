//! Compiles every chapter of the guide as documentation, so `cargo test`
//! runs its snippets against the current API.
#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}

#[doc = include_str!("../../../book/src/lower_bounds.md")]
pub mod lower_bounds {}

#[doc = include_str!("../../../book/src/flux.md")]
pub mod flux {}

#[doc = include_str!("../../../book/src/estimator.md")]
pub mod estimator {}

#[doc = include_str!("../../../book/src/adaptivity.md")]
pub mod adaptivity {}

#[doc = include_str!("../../../book/src/homotopy.md")]
pub mod homotopy {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
