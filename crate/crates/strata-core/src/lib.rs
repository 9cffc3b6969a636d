//! Two-stage analysis of a binary outcome over mixed-type tabular data.
//!
//! Stage one is unsupervised: rows are clustered with Partitioning Around
//! Medoids ([`pam`]) over a Gower dissimilarity matrix ([`gower`]), and the
//! number of clusters is selected by bootstrap Jaccard stability
//! ([`stability`]).
//!
//! Stage two is supervised: a logistic regression with cluster main effects
//! and feature-by-cluster interactions is fitted under an overlapping
//! group-lasso penalty that enforces strong hierarchy ([`design`], [`glasso`]),
//! cluster-conditional odds ratios and ratios of odds ratios are extracted
//! from the sum-to-zero parameterization ([`effects`]), and their sampling
//! distributions are obtained by a nonparametric bootstrap with BCa intervals
//! ([`bootstrap`]).
//!
//! All numeric kernels are generic over the scalar type through the
//! [`scalar::Scalar`] trait; `f64` aliases for the main result types live at
//! the crate root. Every randomized routine takes an explicit seed and is
//! reproducible independent of thread count.

pub mod bootstrap;
pub mod dataset;
pub mod design;
pub mod effects;
pub mod error;
pub mod glasso;
pub mod gower;
pub mod linalg;
pub mod normal;
pub mod pam;
pub mod scalar;
pub mod seed;
pub mod stability;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the types most callers touch.
pub type Dataset64 = dataset::Dataset<f64>;
pub type DissimilarityMatrix64 = gower::DissimilarityMatrix<f64>;
pub type Partition64 = pam::Partition<f64>;
