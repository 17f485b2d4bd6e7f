//! Lung-CT classification toolkit: Canny edge maps and single-level Haar
//! wavelet statistics as features, a one-hidden-layer perceptron trained by
//! mini-batch SGD, and the Dragonfly Algorithm as a bounded minimizer and
//! hyperparameter tuner.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`). The
//! pipeline, checkpoint format and CLI work in `f64`; the aliases below name
//! the concrete types they use.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod dragonfly;
pub mod evaluation;
pub mod imaging;
pub mod neuralnet;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod wavelet;

mod io_util;

pub use scalar::Scalar;

/// Number of output classes (benign, malignant, normal).
pub const NUM_CLASSES: usize = 3;

/// Side length every image is resized to before feature extraction.
pub const IMAGE_SIDE: usize = 128;

pub type Mlp = neuralnet::MlpParams<f64>;
pub type Mlp32 = neuralnet::MlpParams<f32>;
pub type Decomposition = wavelet::WaveletDecomposition<f64>;
pub type Features = wavelet::FeatureVector<f64>;
pub type Normalized = imaging::NormalizedImage<f64>;
pub type SwarmConfig = dragonfly::DaConfig<f64>;
pub type Swarm = dragonfly::DaState<f64>;
pub type Report = neuralnet::TrainReport;
