//! Semiclassical entanglement dynamics of two coupled spins.

// `!(x > y)` is how NaN is rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod flow;
pub mod models;
pub mod numerics;
pub mod quantum;
pub mod runner;
pub mod selftest;
pub mod semiclassical;
pub mod spin;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/coherent_states.md")]
    mod coherent_states {}
    #[doc = include_str!("../../../book/src/exact_purity.md")]
    mod exact_purity {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/semiclassical_purity.md")]
    mod semiclassical_purity {}
    #[doc = include_str!("../../../book/src/canonical_limit.md")]
    mod canonical_limit {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
}
