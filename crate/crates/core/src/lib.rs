//! Send-or-wait decisions for XOR inter-flow network coding.
//!
//! [`policy`] holds the threshold rule and its numeric oracles,
//! [`estimators`] the online rate estimates it needs, [`coding`] the XOR
//! coding layer, and [`sim`] a seeded discrete-event simulator.
//! [`experiment`] runs policy x load x seed matrices and [`verify`] the
//! acceptance suite.
//!
//! ```
//! use copestop::policy::{threshold, PolicyParams};
//!
//! let p = PolicyParams::with_unit_gain(10.0, 5.0, 0.05, 40).unwrap();
//! assert!((threshold(&p) - 3.5714).abs() < 1e-4);
//! ```

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coding;
pub mod config;
pub mod estimators;
pub mod experiment;
pub mod ids;
pub mod policy;
pub mod quadrature;
pub mod sim;
pub mod stats;
pub mod verify;

/// Guide chapters, compiled as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/stopping.md")]
    mod stopping {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/coding.md")]
    mod coding {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
