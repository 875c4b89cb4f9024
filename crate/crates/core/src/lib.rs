//! On-the-fly time-series augmentation for global forecasting models.
//!
//! Each training mini-batch (and each validation pass) is doubled with
//! synthetic copies built by decomposing the log series into trend, seasonal
//! and remainder and resampling the remainder with a moving-blocks
//! bootstrap. A residual-stack MLP forecaster is trained on the result.
//!
//! ```
//! use ondat::augment::{augment_batch, AugmenterConfig};
//! use ondat::synthetic::{seasonal_corpus, SyntheticSpec};
//! use rand::SeedableRng;
//!
//! let batch = seasonal_corpus(&SyntheticSpec { n_series: 3, ..Default::default() });
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let doubled = augment_batch(&batch, &AugmenterConfig::mbb(), &mut rng);
//! assert_eq!(doubled.len(), 6);
//! assert_eq!(doubled[3].id(), "syn_0#syn");
//! ```

pub mod augment;
pub mod decomp;
pub mod error;
pub mod eval;
pub mod model;
pub mod synthetic;
pub mod train;
pub mod tsdata;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    mod decomposition {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
