//! Directory-per-class corpus scanning and the stratified train/test split.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} has no `{1}` class directory")]
    MissingClassDir(PathBuf, &'static str),
    #[error("cannot list {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("class {0} has a single sample and cannot be stratified")]
    TooFewSamples(Class),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Benign = 0,
    Malignant = 1,
    Normal = 2,
}

impl Class {
    pub const ALL: [Class; NUM_CLASSES] = [Class::Benign, Class::Malignant, Class::Normal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Class::Benign => "benign",
            Class::Malignant => "malignant",
            Class::Normal => "normal",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub class: Class,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub counts: [usize; NUM_CLASSES],
    /// Non-fatal problems found while scanning (e.g. empty class directories).
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let mut counts = [0; NUM_CLASSES];
        for s in &samples {
            counts[s.class.index()] += 1;
        }
        Self {
            samples,
            counts,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class.index()).collect()
    }
}

const IMAGE_EXTENSIONS: [&str; 9] = [
    "png", "jpg", "jpeg", "bmp", "tif", "tiff", "pgm", "ppm", "pnm",
];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Finds the class directory, matching `benign` or `benign cases` in any case.
fn find_class_dir(root: &Path, class: Class) -> Result<Option<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut matches = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        if !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_lowercase();
        let base = name.strip_suffix(" cases").unwrap_or(&name);
        if base == class.dir_name() {
            matches.push(entry.path());
        }
    }
    matches.sort();
    Ok(matches.into_iter().next())
}

/// Scans `root/{benign,malignant,normal}` in class order; files inside each
/// directory are sorted by name.
pub fn scan_dataset(root: &Path) -> Result<DatasetManifest> {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for class in Class::ALL {
        let dir = find_class_dir(root, class)?
            .ok_or_else(|| DatasetError::MissingClassDir(root.to_path_buf(), class.dir_name()))?;
        let mut files = Vec::new();
        let entries = std::fs::read_dir(&dir).map_err(|source| DatasetError::Io {
            path: dir.clone(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| DatasetError::Io {
                path: dir.clone(),
                source,
            })?;
            let path = entry.path();
            if path.is_file() && is_image(&path) {
                files.push(path);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        if files.is_empty() {
            let msg = format!("class directory {} contains no images", dir.display());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        samples.extend(files.into_iter().map(|path| Sample { path, class }));
    }
    let mut manifest = DatasetManifest::from_samples(samples);
    manifest.warnings = warnings;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: each class's indices are shuffled with one seeded
/// generator (classes visited in order) and the first `floor(ratio * n_c)`
/// go to training. Empty classes are skipped.
pub fn split_train_test(labels: &[usize], ratio: f64, seed: u64) -> Result<SplitIndices> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = SplitIndices {
        train: Vec::new(),
        test: Vec::new(),
    };
    for class in Class::ALL {
        let mut idx: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == class.index())
            .collect();
        match idx.len() {
            0 => continue,
            1 => return Err(DatasetError::TooFewSamples(class)),
            _ => {}
        }
        idx.shuffle(&mut rng);
        let n_train = train_count(idx.len(), ratio);
        split.train.extend_from_slice(&idx[..n_train]);
        split.test.extend_from_slice(&idx[n_train..]);
    }
    Ok(split)
}

/// `floor(ratio * n)`, robust to `0.7 * 120` landing a hair under 84.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

pub fn split_manifest(m: &DatasetManifest, ratio: f64, seed: u64) -> Result<SplitIndices> {
    split_train_test(&m.labels(), ratio, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_with_counts(counts: [usize; 3]) -> Vec<usize> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect()
    }

    #[test]
    fn table_one_split() {
        let labels = labels_with_counts([120, 561, 416]);
        let s = split_train_test(&labels, 0.7, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (767, 330));
        let per_class = |idx: &[usize], c| idx.iter().filter(|&&i| labels[i] == c).count();
        assert_eq!(
            [
                per_class(&s.train, 0),
                per_class(&s.train, 1),
                per_class(&s.train, 2)
            ],
            [84, 392, 291]
        );
        assert_eq!(
            [
                per_class(&s.test, 0),
                per_class(&s.test, 1),
                per_class(&s.test, 2)
            ],
            [36, 169, 125]
        );
        assert_eq!(s, split_train_test(&labels, 0.7, 1).unwrap());
    }

    #[test]
    fn small_classes() {
        let s = split_train_test(&[0, 0, 1, 1, 2, 2], 0.5, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3, 3));
        assert!(matches!(
            split_train_test(&[0, 1, 1], 0.5, 3),
            Err(DatasetError::TooFewSamples(Class::Benign))
        ));
        assert!(matches!(
            split_train_test(&[0, 0], 1.0, 3),
            Err(DatasetError::BadRatio(_))
        ));
    }

    #[test]
    fn scan_layout() {
        let dir = tempfile::tempdir().unwrap();
        for (d, files) in [
            ("Benign", vec![]),
            ("malignant", vec!["b.png", "a.png"]),
            ("NORMAL cases", vec!["z.jpg", "notes.txt"]),
        ] {
            std::fs::create_dir(dir.path().join(d)).unwrap();
            for f in files {
                std::fs::write(dir.path().join(d).join(f), b"x").unwrap();
            }
        }
        let m = scan_dataset(dir.path()).unwrap();
        assert_eq!(m.counts, [0, 2, 1]);
        assert_eq!(m.warnings.len(), 1);
        let names: Vec<_> = m
            .samples
            .iter()
            .map(|s| s.path.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["a.png", "b.png", "z.jpg"]);
        assert_eq!(scan_dataset(dir.path()).unwrap(), m);

        std::fs::remove_dir(dir.path().join("Benign")).unwrap();
        assert!(matches!(
            scan_dataset(dir.path()),
            Err(DatasetError::MissingClassDir(_, "benign"))
        ));
    }
}
