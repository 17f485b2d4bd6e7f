//! End-to-end run: preprocess, build inputs, initial training, swarm tuning
//! of (learning rate, hidden width), retraining and held-out evaluation.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::{ConfigError, InputMode, RunConfig};
use crate::dataset::{self, DatasetError, DatasetManifest, SplitIndices};
use crate::dragonfly::{self, DaError, Objective};
use crate::evaluation::{self, ConfusionMatrix, EvalError, MetricsReport, RocCurve};
use crate::imaging::{self, ImagingError, NormalizedImage, CANNY_PAIRS};
use crate::io_util::{fmt_sig, write_atomic};
use crate::neuralnet::{self, LabeledSet, MlpParams, NnError, TrainConfig, TrainReport};
use crate::wavelet::{self, FeatureVector, WaveletError};
use crate::{IMAGE_SIDE, NUM_CLASSES};

/// Pipeline steps, used to name the failing stage in errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Preprocess,
    Split,
    InitialTraining,
    Tuning,
    FinalTraining,
    Evaluation,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "configuration",
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocessing",
            Stage::Split => "train/test split",
            Stage::InitialTraining => "initial training",
            Stage::Tuning => "hyperparameter tuning",
            Stage::FinalTraining => "final training",
            Stage::Evaluation => "evaluation",
            Stage::Export => "export",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Swarm(#[from] DaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Other(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
#[error("{stage} failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T, E: Into<StageError>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an image, resizes it to 128x128 and maps it to `[-1, 1]`.
pub fn preprocess_image(path: &Path) -> Result<NormalizedImage<f64>, ImagingError> {
    let img = imaging::load_grayscale(path)?;
    let img = imaging::resize_bilinear(&img, IMAGE_SIDE, IMAGE_SIDE)?;
    Ok(imaging::normalize(&img))
}

pub fn preprocess_manifest(
    m: &DatasetManifest,
    debug_dir: Option<&Path>,
) -> Result<Vec<NormalizedImage<f64>>> {
    if let Some(dir) = debug_dir {
        std::fs::create_dir_all(dir)
            .map_err(io_err(dir))
            .at(Stage::Preprocess)?;
    }
    let mut out = Vec::with_capacity(m.len());
    for (i, s) in m.samples.iter().enumerate() {
        let img = preprocess_image(&s.path).at(Stage::Preprocess)?;
        if let Some(dir) = debug_dir {
            let gray = img.denormalize();
            for pair in CANNY_PAIRS {
                let stem = format!("{:05}_{}_t{}", i, s.class, pair.tag());
                imaging::canny_stages(&gray, pair)
                    .and_then(|st| st.write_debug(dir, &stem))
                    .at(Stage::Preprocess)?;
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// One input row per image, laid out for `mode`.
pub fn build_inputs(
    images: &[NormalizedImage<f64>],
    mode: InputMode,
) -> Result<Array2<f64>, WaveletError> {
    let dim = mode.input_dim();
    let mut x = Array2::zeros((images.len(), dim));
    for (mut row, img) in x.rows_mut().into_iter().zip(images) {
        match mode {
            InputMode::Flat => {
                if img.width() != IMAGE_SIDE || img.height() != IMAGE_SIDE {
                    return Err(WaveletError::WrongSize {
                        expected: IMAGE_SIDE,
                        width: img.width(),
                        height: img.height(),
                    });
                }
                row.iter_mut()
                    .zip(img.values().iter())
                    .for_each(|(r, &v)| *r = v);
            }
            InputMode::Features => {
                let fv = wavelet::feature_vector(img)?;
                row.iter_mut().zip(fv.values()).for_each(|(r, &v)| *r = v);
            }
        }
    }
    Ok(x)
}

/// Per-column z-scoring fitted on the training rows. Constant columns get
/// unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty rows");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}

/// Maps a raw swarm position to (learning rate, hidden width).
pub fn decode_candidate(candidate: &[f64], hidden_bounds: (f64, f64)) -> (f64, usize) {
    let hidden = candidate[1].round().clamp(hidden_bounds.0, hidden_bounds.1) as usize;
    (candidate[0], hidden.max(1))
}

/// Trains a fresh network with the candidate learning rate and hidden width
/// for the budget's epochs and returns minus its validation accuracy.
/// Divergence yields `+inf`.
pub fn mlp_tuning_objective(
    candidate: &[f64],
    fit: &LabeledSet<f64>,
    val: &LabeledSet<f64>,
    budget: &TrainConfig,
    hidden_bounds: (f64, f64),
) -> f64 {
    let (lr, hidden) = decode_candidate(candidate, hidden_bounds);
    let cfg = TrainConfig {
        learning_rate: lr,
        ..budget.clone()
    };
    let params = match neuralnet::init_params::<f64>(fit.dim(), hidden, budget.seed) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("candidate ({lr}, {hidden}) rejected: {e}");
            return f64::INFINITY;
        }
    };
    match neuralnet::train(params, fit, val, &cfg).and_then(|(p, _)| neuralnet::accuracy(&p, val)) {
        Ok(acc) => -acc,
        Err(e) => {
            log::warn!("candidate ({lr}, {hidden}) rejected: {e}");
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningRecord {
    pub learning_rate: f64,
    pub hidden: usize,
    pub fitness: f64,
}

/// [`mlp_tuning_objective`] as a swarm objective that logs every evaluation.
pub struct TuningObjective<'a> {
    pub fit: &'a LabeledSet<f64>,
    pub val: &'a LabeledSet<f64>,
    pub budget: TrainConfig,
    pub hidden_bounds: (f64, f64),
    log: Mutex<Vec<TuningRecord>>,
}

impl<'a> TuningObjective<'a> {
    pub fn new(
        fit: &'a LabeledSet<f64>,
        val: &'a LabeledSet<f64>,
        budget: TrainConfig,
        hidden_bounds: (f64, f64),
    ) -> Self {
        Self {
            fit,
            val,
            budget,
            hidden_bounds,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<TuningRecord> {
        self.log.lock().expect("tuning log").clone()
    }
}

impl Objective<f64> for TuningObjective<'_> {
    fn evaluate(&self, x: &[f64]) -> f64 {
        let fitness = mlp_tuning_objective(x, self.fit, self.val, &self.budget, self.hidden_bounds);
        let (learning_rate, hidden) = decode_candidate(x, self.hidden_bounds);
        self.log.lock().expect("tuning log").push(TuningRecord {
            learning_rate,
            hidden,
            fitness,
        });
        fitness
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub learning_rate: f64,
    pub hidden: usize,
    pub fitness: f64,
    pub trace: Vec<f64>,
    pub evaluations: Vec<TuningRecord>,
}

impl TuningOutcome {
    pub fn validation_accuracy(&self) -> f64 {
        -self.fitness
    }

    pub fn evaluations_csv(&self) -> String {
        let mut out = String::from("candidate_lr,candidate_hidden,fitness\n");
        for r in &self.evaluations {
            writeln!(
                out,
                "{},{},{}",
                fmt_sig(r.learning_rate),
                r.hidden,
                fmt_sig(r.fitness)
            )
            .expect("write to string");
        }
        out
    }
}

/// Searches (learning rate, hidden width) with the swarm, scoring each
/// candidate by validation accuracy after `budget.epochs` epochs.
pub fn tune(
    fit: &LabeledSet<f64>,
    val: &LabeledSet<f64>,
    cfg: &RunConfig,
) -> Result<TuningOutcome, DaError> {
    let budget = TrainConfig {
        epochs: cfg.tune.epochs,
        ..cfg.train.clone()
    };
    let objective =
        TuningObjective::new(fit, val, budget, (cfg.tune.hidden_min, cfg.tune.hidden_max));
    let da = cfg.tune.da_config(cfg.train.seed);
    let result = dragonfly::optimize(&objective, &da)?;
    let (learning_rate, hidden) = decode_candidate(&result.best_position, objective.hidden_bounds);
    Ok(TuningOutcome {
        learning_rate,
        hidden,
        fitness: result.best_fitness,
        trace: result.trace,
        evaluations: objective.records(),
    })
}

pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,best_fitness\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_sig(*v)).expect("write to string");
    }
    out
}

/// Test-set evaluation products.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub probs: Array2<f64>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub curves: [Option<RocCurve>; NUM_CLASSES],
}

pub fn evaluate(params: &MlpParams<f64>, data: &LabeledSet<f64>) -> Result<Evaluation, StageError> {
    let pred = neuralnet::predict(params, data.inputs.view())?;
    let confusion = evaluation::confusion_matrix(&data.labels, &pred.classes)?;
    let mut curves: [Option<RocCurve>; NUM_CLASSES] = Default::default();
    let mut aucs = [None; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let scores = pred.probs.column(c).to_vec();
        match evaluation::roc_one_vs_rest(&data.labels, &scores, c) {
            Ok(curve) => {
                aucs[c] = Some(evaluation::auc(&curve));
                curves[c] = Some(curve);
            }
            Err(EvalError::DegenerateClass { .. }) => {
                log::warn!("no ROC for class {c}: single-class test set")
            }
            Err(e) => return Err(e.into()),
        }
    }
    let metrics = evaluation::classification_metrics(&confusion)?.with_auc(aucs);
    Ok(Evaluation {
        predictions: pred.classes,
        probs: pred.probs,
        confusion,
        metrics,
        curves,
    })
}

fn predictions_csv(manifest: &DatasetManifest, indices: &[usize], eval: &Evaluation) -> String {
    let mut out = String::from("path,true,predicted,p0,p1,p2\n");
    for (k, &i) in indices.iter().enumerate() {
        let p = eval.probs.row(k);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            manifest.samples[i].path.display(),
            manifest.samples[i].class.index(),
            eval.predictions[k],
            fmt_sig(p[0]),
            fmt_sig(p[1]),
            fmt_sig(p[2])
        )
        .expect("write to string");
    }
    out
}

/// Files are written into a hidden staging directory inside the output
/// directory and moved into place only once everything succeeded.
struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(target: &Path) -> Result<Self, StageError> {
        std::fs::create_dir_all(target).map_err(io_err(target))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(target)
            .map_err(io_err(target))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.path().join(name)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), StageError> {
        let path = self.path(name);
        write_atomic(&path, body.as_bytes()).map_err(io_err(&path))
    }

    fn register(&mut self, names: impl IntoIterator<Item = String>) {
        self.files.extend(names);
    }

    fn commit(self) -> Result<Vec<PathBuf>, StageError> {
        let mut out = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let from = self.dir.path().join(name);
            let to = self.target.join(name);
            std::fs::rename(&from, &to).map_err(io_err(&to))?;
            out.push(to);
        }
        Ok(out)
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub manifest: DatasetManifest,
    pub split: SplitIndices,
    /// Indices (into the manifest) of the validation carve of the training split.
    pub validation: Vec<usize>,
    pub initial_report: TrainReport,
    pub tuning: Option<TuningOutcome>,
    pub final_report: TrainReport,
    pub final_hidden: usize,
    pub final_learning_rate: f64,
    /// Final parameters acting on unstandardized inputs, as checkpointed.
    pub params: MlpParams<f64>,
    pub evaluation: Evaluation,
    pub files: Vec<PathBuf>,
}

/// Data sets prepared for training; all inputs standardized with the
/// statistics of `fit`.
struct Prepared {
    fit: LabeledSet<f64>,
    val: LabeledSet<f64>,
    test_raw: LabeledSet<f64>,
    standardizer: Standardizer,
    validation: Vec<usize>,
}

fn prepare(
    x: &Array2<f64>,
    labels: &[usize],
    split: &SplitIndices,
    cfg: &RunConfig,
) -> Result<Prepared> {
    let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let inner = dataset::split_train_test(&train_labels, 1.0 - cfg.val_ratio, cfg.train.seed)
        .at(Stage::Split)?;
    let fit_idx: Vec<usize> = inner.train.iter().map(|&k| split.train[k]).collect();
    let val_idx: Vec<usize> = inner.test.iter().map(|&k| split.train[k]).collect();
    if fit_idx.is_empty() || val_idx.is_empty() || split.test.is_empty() {
        return Err(PipelineError {
            stage: Stage::Split,
            source: StageError::Other(format!(
                "empty partition (fit {}, validation {}, test {})",
                fit_idx.len(),
                val_idx.len(),
                split.test.len()
            )),
        });
    }
    let all = LabeledSet::new(x.clone(), labels.to_vec()).at(Stage::Split)?;
    let fit_raw = all.select(&fit_idx);
    let standardizer = match cfg.input_mode {
        InputMode::Features => Standardizer::fit(&fit_raw.inputs),
        InputMode::Flat => Standardizer::identity(fit_raw.dim()),
    };
    let standardize = |s: LabeledSet<f64>| LabeledSet {
        inputs: standardizer.apply(&s.inputs),
        labels: s.labels,
    };
    Ok(Prepared {
        fit: standardize(fit_raw),
        val: standardize(all.select(&val_idx)),
        test_raw: all.select(&split.test),
        validation: val_idx,
        standardizer,
    })
}

/// Runs preprocessing, initial training, tuning (unless skipped), final
/// training and evaluation, writing all artifacts into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate().at(Stage::Config)?;
    let root = cfg
        .data_root
        .as_deref()
        .ok_or(ConfigError::Missing("data_root"))
        .at(Stage::Config)?;
    let manifest = dataset::scan_dataset(root).at(Stage::Ingest)?;
    log::info!(
        "dataset: {} images, per class {:?}",
        manifest.len(),
        manifest.counts
    );

    let images = preprocess_manifest(&manifest, cfg.debug_dir.as_deref())?;
    let x = build_inputs(&images, cfg.input_mode).at(Stage::Preprocess)?;
    let labels = manifest.labels();
    let split =
        dataset::split_train_test(&labels, cfg.train_ratio, cfg.train.seed).at(Stage::Split)?;
    let prep = prepare(&x, &labels, &split, cfg)?;
    let input_dim = cfg.input_mode.input_dim();

    let init = neuralnet::init_params::<f64>(input_dim, cfg.hidden_dim, cfg.train.seed)
        .at(Stage::InitialTraining)?;
    let (initial_params, initial_report) =
        neuralnet::train(init, &prep.fit, &prep.val, &cfg.train).at(Stage::InitialTraining)?;
    log::info!("initial training: {:?}", initial_report.last());

    let (tuning, final_params, final_report, final_hidden, final_lr) = if cfg.skip_tuning {
        (
            None,
            initial_params,
            initial_report.clone(),
            cfg.hidden_dim,
            cfg.train.learning_rate,
        )
    } else {
        let outcome = tune(&prep.fit, &prep.val, cfg).at(Stage::Tuning)?;
        log::info!(
            "tuning: lr {} hidden {} validation accuracy {}",
            outcome.learning_rate,
            outcome.hidden,
            outcome.validation_accuracy()
        );
        let train_cfg = TrainConfig {
            learning_rate: outcome.learning_rate,
            ..cfg.train.clone()
        };
        let init = neuralnet::init_params::<f64>(input_dim, outcome.hidden, cfg.train.seed)
            .at(Stage::FinalTraining)?;
        let (p, r) =
            neuralnet::train(init, &prep.fit, &prep.val, &train_cfg).at(Stage::FinalTraining)?;
        let (h, lr) = (outcome.hidden, outcome.learning_rate);
        (Some(outcome), p, r, h, lr)
    };

    let params = final_params
        .fold_input_standardization(
            prep.standardizer.mean.view(),
            prep.standardizer.scale.view(),
        )
        .at(Stage::Evaluation)?;
    let eval = evaluate(&params, &prep.test_raw).at(Stage::Evaluation)?;
    log::info!(
        "test accuracy {:.4}, macro F1 {:.4}",
        eval.metrics.accuracy,
        eval.metrics.macro_f1
    );

    let mut stage = Staging::new(&cfg.output_dir).at(Stage::Export)?;
    let ckpt = stage.path("model.wmlp");
    checkpoint::save_checkpoint(&params, &ckpt).at(Stage::Export)?;
    stage
        .write("train_report.csv", &final_report.to_csv())
        .at(Stage::Export)?;
    if let Some(t) = &tuning {
        stage
            .write("initial_train_report.csv", &initial_report.to_csv())
            .at(Stage::Export)?;
        stage
            .write("trace.csv", &trace_csv(&t.trace))
            .at(Stage::Export)?;
        stage
            .write("tuning.csv", &t.evaluations_csv())
            .at(Stage::Export)?;
    }
    let written = evaluation::export_report(
        &eval.metrics,
        &eval.confusion,
        &eval.curves,
        stage.dir.path(),
    )
    .at(Stage::Export)?;
    stage.register(
        written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())),
    );
    stage
        .write(
            "predictions.csv",
            &predictions_csv(&manifest, &split.test, &eval),
        )
        .at(Stage::Export)?;
    if cfg.input_mode == InputMode::Features {
        let rows: Vec<(FeatureVector<f64>, usize)> = images
            .iter()
            .zip(&labels)
            .map(|(img, &l)| wavelet::feature_vector(img).map(|f| (f, l)))
            .collect::<Result<_, _>>()
            .at(Stage::Export)?;
        let path = stage.path("features.csv");
        wavelet::write_features_csv(&path, &rows).at(Stage::Export)?;
    }
    stage
        .write("run_config.txt", &cfg.to_text())
        .at(Stage::Export)?;
    let files = stage.commit().at(Stage::Export)?;

    Ok(PipelineOutput {
        manifest,
        split,
        validation: prep.validation,
        initial_report,
        tuning,
        final_report,
        final_hidden,
        final_learning_rate: final_lr,
        params,
        evaluation: eval,
        files,
    })
}

/// Scores a saved checkpoint on every image under `data_root` and writes
/// the metric files into `out_dir`. The input mode follows from the
/// checkpoint's input width.
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    data_root: &Path,
    out_dir: &Path,
) -> Result<Evaluation> {
    let params = checkpoint::load_checkpoint(checkpoint_path).at(Stage::Ingest)?;
    let mode = InputMode::from_input_dim(params.input_dim())
        .ok_or_else(|| {
            StageError::Other(format!(
                "checkpoint input width {} matches no input mode",
                params.input_dim()
            ))
        })
        .at(Stage::Ingest)?;
    let manifest = dataset::scan_dataset(data_root).at(Stage::Ingest)?;
    let images = preprocess_manifest(&manifest, None)?;
    let x = build_inputs(&images, mode).at(Stage::Preprocess)?;
    let data = LabeledSet::new(x, manifest.labels()).at(Stage::Preprocess)?;
    let eval = evaluate(&params, &data).at(Stage::Evaluation)?;

    let mut stage = Staging::new(out_dir).at(Stage::Export)?;
    let written = evaluation::export_report(
        &eval.metrics,
        &eval.confusion,
        &eval.curves,
        stage.dir.path(),
    )
    .at(Stage::Export)?;
    stage.register(
        written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())),
    );
    let all: Vec<usize> = (0..manifest.len()).collect();
    stage
        .write("predictions.csv", &predictions_csv(&manifest, &all, &eval))
        .at(Stage::Export)?;
    stage.commit().at(Stage::Export)?;
    Ok(eval)
}
