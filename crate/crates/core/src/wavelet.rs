//! Single-level orthonormal 2D Haar transform and per-subband statistics.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::imaging::{canny_multi, ImagingError, NormalizedImage};
use crate::io_util::{fmt_sig, write_atomic};
use crate::{Scalar, IMAGE_SIDE};

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("haar transform needs even dimensions, got {rows}x{cols}")]
    OddDimension { rows: usize, cols: usize },
    #[error("subband shapes differ: {0:?}")]
    ShapeMismatch([(usize, usize); 4]),
    #[error("statistics of an empty matrix")]
    Empty,
    #[error("feature extraction expects {expected}x{expected}, got {width}x{height}")]
    WrongSize {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = WaveletError> = std::result::Result<T, E>;

/// The four subbands of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition<T> {
    pub ca: Array2<T>,
    pub ch: Array2<T>,
    pub cv: Array2<T>,
    pub cd: Array2<T>,
}

impl<T: Scalar> WaveletDecomposition<T> {
    /// Subbands in `cA, cH, cV, cD` order.
    pub fn subbands(&self) -> [&Array2<T>; 4] {
        [&self.ca, &self.ch, &self.cv, &self.cd]
    }

    pub fn energy(&self) -> T {
        self.subbands().iter().map(|b| sum_squares(b.view())).sum()
    }
}

pub const SUBBAND_NAMES: [&str; 4] = ["cA", "cH", "cV", "cD"];
pub const STAT_NAMES: [&str; 4] = ["mean", "std", "energy", "entropy"];
pub const VARIANT_NAMES: [&str; 4] = ["raw", "canny50-150", "canny100-200", "canny150-250"];
pub const FEATURE_LEN: usize = 64;

fn sum_squares<T: Scalar>(m: ArrayView2<T>) -> T {
    m.iter().map(|&v| v * v).sum()
}

/// One level of the orthonormal 2D Haar transform. For each 2x2 block
/// `[a b; c d]`: `cA = (a+b+c+d)/2`, `cH = (a+b-c-d)/2`,
/// `cV = (a-b+c-d)/2`, `cD = (a-b-c+d)/2`.
pub fn haar_dwt2<T: Scalar>(x: ArrayView2<T>) -> Result<WaveletDecomposition<T>> {
    let (rows, cols) = x.dim();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(WaveletError::OddDimension { rows, cols });
    }
    let (hr, hc) = (rows / 2, cols / 2);
    let half = T::of(0.5);
    let mut out = WaveletDecomposition {
        ca: Array2::zeros((hr, hc)),
        ch: Array2::zeros((hr, hc)),
        cv: Array2::zeros((hr, hc)),
        cd: Array2::zeros((hr, hc)),
    };
    for i in 0..hr {
        for j in 0..hc {
            let a = x[[2 * i, 2 * j]];
            let b = x[[2 * i, 2 * j + 1]];
            let c = x[[2 * i + 1, 2 * j]];
            let d = x[[2 * i + 1, 2 * j + 1]];
            out.ca[[i, j]] = (a + b + c + d) * half;
            out.ch[[i, j]] = (a + b - c - d) * half;
            out.cv[[i, j]] = (a - b + c - d) * half;
            out.cd[[i, j]] = (a - b - c + d) * half;
        }
    }
    Ok(out)
}

/// Exact inverse of [`haar_dwt2`].
pub fn haar_idwt2<T: Scalar>(d: &WaveletDecomposition<T>) -> Result<Array2<T>> {
    let shapes = [d.ca.dim(), d.ch.dim(), d.cv.dim(), d.cd.dim()];
    if shapes.iter().any(|&s| s != shapes[0]) {
        return Err(WaveletError::ShapeMismatch(shapes));
    }
    let (hr, hc) = shapes[0];
    let half = T::of(0.5);
    let mut x = Array2::zeros((2 * hr, 2 * hc));
    for i in 0..hr {
        for j in 0..hc {
            let (a, h, v, g) = (d.ca[[i, j]], d.ch[[i, j]], d.cv[[i, j]], d.cd[[i, j]]);
            x[[2 * i, 2 * j]] = (a + h + v + g) * half;
            x[[2 * i, 2 * j + 1]] = (a + h - v - g) * half;
            x[[2 * i + 1, 2 * j]] = (a - h + v - g) * half;
            x[[2 * i + 1, 2 * j + 1]] = (a - h - v + g) * half;
        }
    }
    Ok(x)
}

/// Mean, population standard deviation, energy and histogram entropy of a
/// coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubbandStats<T> {
    pub mean: T,
    pub std: T,
    pub energy: T,
    /// Shannon entropy in bits of a 256-bin histogram over `[min, max]`.
    pub entropy: T,
}

impl<T: Scalar> SubbandStats<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.mean, self.std, self.energy, self.entropy]
    }
}

pub const ENTROPY_BINS: usize = 256;

pub fn subband_stats<T: Scalar>(m: ArrayView2<T>) -> Result<SubbandStats<T>> {
    let n = m.len();
    if n == 0 {
        return Err(WaveletError::Empty);
    }
    let nt = T::of_usize(n);
    let mean = m.iter().copied().sum::<T>() / nt;
    let var = m.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
    let energy = sum_squares(m);

    let (min, max) = m
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let entropy = if max > min {
        let mut hist = [0usize; ENTROPY_BINS];
        let width = (max - min) / T::of_usize(ENTROPY_BINS);
        for &v in m.iter() {
            let bin = ((v - min) / width).floor().to_usize().unwrap_or(0);
            hist[bin.min(ENTROPY_BINS - 1)] += 1;
        }
        hist.iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = T::of_usize(c) / nt;
                -p * p.log2()
            })
            .sum()
    } else {
        T::zero()
    };

    Ok(SubbandStats {
        mean,
        std: var.sqrt(),
        energy,
        entropy,
    })
}

/// The 64 statistics describing one image: 4 variants (raw, then the three
/// Canny maps) x 4 subbands (`cA, cH, cV, cD`) x 4 statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Column names in feature order, `variant.subband.stat`.
    pub fn names() -> Vec<String> {
        let mut names = Vec::with_capacity(FEATURE_LEN);
        for v in VARIANT_NAMES {
            for b in SUBBAND_NAMES {
                for s in STAT_NAMES {
                    names.push(format!("{v}.{b}.{s}"));
                }
            }
        }
        names
    }

    pub fn index_of(variant: usize, subband: usize, stat: usize) -> usize {
        (variant * 4 + subband) * 4 + stat
    }
}

/// Extracts the 64-value feature vector from a normalized 128x128 image.
/// The Canny variants run on the 8-bit image recovered from `img`.
pub fn feature_vector<T: Scalar>(img: &NormalizedImage<T>) -> Result<FeatureVector<T>> {
    if img.width() != IMAGE_SIDE || img.height() != IMAGE_SIDE {
        return Err(WaveletError::WrongSize {
            expected: IMAGE_SIDE,
            width: img.width(),
            height: img.height(),
        });
    }
    let gray = img.denormalize();
    let [e0, e1, e2] = canny_multi(&gray)?;
    let variants = [
        img.values().clone(),
        e0.to_real(),
        e1.to_real(),
        e2.to_real(),
    ];

    let mut values = Vec::with_capacity(FEATURE_LEN);
    for v in &variants {
        let dec = haar_dwt2(v.view())?;
        for band in dec.subbands() {
            values.extend(subband_stats(band.view())?.as_array());
        }
    }
    debug_assert_eq!(values.len(), FEATURE_LEN);
    Ok(FeatureVector { values })
}

/// Writes a feature matrix as CSV: `variant.subband.stat` header columns,
/// one row per image, label column last.
pub fn write_features_csv<T: Scalar>(
    path: &Path,
    rows: &[(FeatureVector<T>, usize)],
) -> Result<()> {
    let mut out = FeatureVector::<T>::names().join(",");
    out.push_str(",label\n");
    for (fv, label) in rows {
        for v in fv.values() {
            write!(out, "{},", fmt_sig(v.to_f64_lossy())).expect("write to string");
        }
        writeln!(out, "{label}").expect("write to string");
    }
    write_atomic(path, out.as_bytes()).map_err(|source| WaveletError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{normalize, GrayImage8};
    use ndarray::array;

    #[test]
    fn constant_block() {
        let d = haar_dwt2(array![[1.0, 1.0], [1.0, 1.0]].view()).unwrap();
        assert_eq!(d.ca, array![[2.0]]);
        assert_eq!(d.ch, array![[0.0]]);
        assert_eq!(d.cv, array![[0.0]]);
        assert_eq!(d.cd, array![[0.0]]);
    }

    #[test]
    fn known_block_and_energy() {
        let x = array![[4.0, 2.0], [2.0, 0.0]];
        let d = haar_dwt2(x.view()).unwrap();
        assert_eq!(d.ca, array![[4.0]]);
        assert_eq!(d.ch, array![[2.0]]);
        assert_eq!(d.cv, array![[2.0]]);
        assert_eq!(d.cd, array![[0.0]]);
        assert_eq!(d.energy(), 24.0);
        assert_eq!(x.iter().map(|v| v * v).sum::<f64>(), 24.0);
        assert_eq!(haar_idwt2(&d).unwrap(), x);
    }

    #[test]
    fn inverse_of_constant_approximation() {
        let d = WaveletDecomposition {
            ca: array![[2.0]],
            ch: array![[0.0]],
            cv: array![[0.0]],
            cd: array![[0.0]],
        };
        assert_eq!(haar_idwt2(&d).unwrap(), array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn odd_and_mismatched_shapes() {
        assert!(matches!(
            haar_dwt2(Array2::<f64>::zeros((3, 4)).view()),
            Err(WaveletError::OddDimension { .. })
        ));
        let d = WaveletDecomposition {
            ca: Array2::<f64>::zeros((2, 2)),
            ch: Array2::zeros((2, 2)),
            cv: Array2::zeros((2, 1)),
            cd: Array2::zeros((2, 2)),
        };
        assert!(matches!(
            haar_idwt2(&d),
            Err(WaveletError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn stats_examples() {
        let s = subband_stats(Array2::from_elem((2, 2), 3.0).view()).unwrap();
        assert_eq!((s.mean, s.std, s.energy, s.entropy), (3.0, 0.0, 36.0, 0.0));

        let s = subband_stats(array![[1.0, 2.0], [3.0, 4.0]].view()).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.energy, 30.0);
        assert_eq!(s.entropy, 2.0);

        assert!(matches!(
            subband_stats(Array2::<f64>::zeros((0, 3)).view()),
            Err(WaveletError::Empty)
        ));
    }

    #[test]
    fn uniform_histogram_has_eight_bits() {
        let m = Array2::from_shape_fn((16, 16), |(i, j)| (i * 16 + j) as f64);
        let s = subband_stats(m.view()).unwrap();
        assert!((s.entropy - 8.0).abs() < 1e-12);
    }

    #[test]
    fn feature_vector_of_flat_images() {
        let zero = NormalizedImage::from_array(Array2::<f64>::zeros((128, 128)));
        let fv = feature_vector(&zero).unwrap();
        assert_eq!(fv.values().len(), FEATURE_LEN);
        assert!(fv.values().iter().all(|&v| v == 0.0));

        let img = GrayImage8::filled(128, 128, 200).unwrap();
        let n = normalize::<f64>(&img);
        let mean = n.values().mean().unwrap();
        let fv = feature_vector(&n).unwrap();
        let ca_mean = fv.values()[FeatureVector::<f64>::index_of(0, 0, 0)];
        assert!((ca_mean - 2.0 * mean).abs() < 1e-12);

        let small = NormalizedImage::from_array(Array2::<f64>::zeros((64, 64)));
        assert!(matches!(
            feature_vector(&small),
            Err(WaveletError::WrongSize { .. })
        ));
    }

    #[test]
    fn names_match_layout() {
        let names = FeatureVector::<f64>::names();
        assert_eq!(names.len(), FEATURE_LEN);
        assert_eq!(names[0], "raw.cA.mean");
        assert_eq!(
            names[FeatureVector::<f64>::index_of(3, 3, 3)],
            "canny150-250.cD.entropy"
        );
        assert_eq!(
            names[FeatureVector::<f64>::index_of(1, 2, 2)],
            "canny50-150.cV.energy"
        );
    }
}
