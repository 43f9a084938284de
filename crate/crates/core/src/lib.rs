//! Weighted computation-rate maximization for wireless-powered multiuser
//! mobile edge computing.

pub mod benchmarks;
pub mod cli;
pub mod dual;
pub mod ellipsoid;
pub mod error;
pub mod experiments;
pub mod hermitian;
pub mod joint;
pub mod model;
pub mod oracle;
pub mod recovery;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/dual.md")]
    mod dual {}
    #[doc = include_str!("../../../book/src/ellipsoid.md")]
    mod ellipsoid {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
