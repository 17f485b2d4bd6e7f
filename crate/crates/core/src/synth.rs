//! Seeded synthetic corpus in the directory-per-class layout.
//!
//! * benign: dark background with a few large smooth blobs (low frequency)
//! * malignant: mid-gray i.i.d. speckle (high frequency)
//! * normal: bright oriented sinusoidal ridges (mid frequency)
//!
//! The classes differ in mean brightness and in how their energy spreads
//! over the Haar detail subbands, so both flattened pixels and wavelet
//! statistics separate them.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dataset::{Class, DatasetManifest, Sample};
use crate::imaging::{GrayImage8, ImagingError};
use crate::IMAGE_SIDE;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("n_per_class must be positive")]
    Empty,
    #[error("cannot create {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

fn image_rng(seed: u64, class: Class, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class.index() as u64) << 32) | index as u64);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn to_image(field: &[f64]) -> GrayImage8 {
    let pixels = field
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage8::new(IMAGE_SIDE, IMAGE_SIDE, pixels).expect("square synthetic image")
}

fn blobs(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = IMAGE_SIDE;
    let count = rng.random_range(3..=5);
    let specs: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(0.0..n as f64),
                rng.random_range(0.0..n as f64),
                rng.random_range(12.0..24.0),
                rng.random_range(25.0..50.0),
            )
        })
        .collect();
    let mut field = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let mut v = 60.0;
            for &(cx, cy, sigma, amp) in &specs {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            field.push(v + 1.5 * gauss(rng));
        }
    }
    field
}

fn speckle(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..IMAGE_SIDE * IMAGE_SIDE)
        .map(|_| 128.0 + rng.random_range(-50.0..50.0))
        .collect()
}

fn ridges(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = IMAGE_SIDE;
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let period = rng.random_range(6.0..10.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let mut field = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let u = (x as f64 * c + y as f64 * s) / period;
            field.push(185.0 + 30.0 * (std::f64::consts::TAU * u + phase).sin() + 4.0 * gauss(rng));
        }
    }
    field
}

/// Renders image `index` of `class`; depends only on `(seed, class, index)`.
pub fn synth_image(class: Class, seed: u64, index: usize) -> GrayImage8 {
    let mut rng = image_rng(seed, class, index);
    let field = match class {
        Class::Benign => blobs(&mut rng),
        Class::Malignant => speckle(&mut rng),
        Class::Normal => ridges(&mut rng),
    };
    to_image(&field)
}

/// Writes `n_per_class` PNGs per class under `dir/<class>/synth_NNNNN.png`.
pub fn synth_generate(
    n_per_class: usize,
    seed: u64,
    dir: &Path,
) -> Result<DatasetManifest, SynthError> {
    if n_per_class == 0 {
        return Err(SynthError::Empty);
    }
    let mut samples = Vec::with_capacity(3 * n_per_class);
    for class in Class::ALL {
        let class_dir = dir.join(class.dir_name());
        std::fs::create_dir_all(&class_dir).map_err(|source| SynthError::Io {
            path: class_dir.clone(),
            source,
        })?;
        for i in 0..n_per_class {
            let path = class_dir.join(format!("synth_{i:05}.png"));
            synth_image(class, seed, i).save_png(&path)?;
            samples.push(Sample { path, class });
        }
    }
    Ok(DatasetManifest::from_samples(samples))
}
