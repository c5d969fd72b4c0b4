pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod geo;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod serve;
pub mod sweep;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use parcel_tensor as tensor;

/// The guide in `book/`, compiled here so its snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/serving.md")]
    mod serving {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
