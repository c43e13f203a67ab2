//! Bootstrap likelihood-ratio inference for instrumental-variables
//! regression.
//!
//! The crate covers identification of the target coefficients
//! ([`identify`]), a penalized linear quasi-likelihood ([`quasi_likelihood`])
//! and its multiplier bootstrap ([`bootstrap`]), the LR, CLR, AR and LM tests
//! of the two-equation benchmark model ([`benchmark_tests`]), data
//! generation ([`simgen`]) and Monte Carlo power studies ([`harness`]), and
//! numerical checks of the concentration bounds ([`diagnostics`]).
//!
//! ```
//! use ivboot::benchmark_tests::{t_clr, STPair};
//! use nalgebra::DVector;
//!
//! let pair = STPair { s: DVector::from_vec(vec![2.0, 0.0]), t: DVector::from_vec(vec![0.0, 1.0]), beta0: 0.0 };
//! assert_eq!(t_clr(&pair), 6.0);
//! ```

pub mod basis_model;
pub mod bootstrap;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod identify;
pub mod linalg;
pub mod outcome;
pub mod quasi_likelihood;
pub mod rng;
pub mod simgen;
pub mod stats;

pub use error::{IvError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/identification.md")]
    mod identification {}
    #[doc = include_str!("../../../book/src/quasi_likelihood.md")]
    mod quasi_likelihood {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/benchmark_tests.md")]
    mod benchmark_tests {}
    #[doc = include_str!("../../../book/src/power.md")]
    mod power {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
