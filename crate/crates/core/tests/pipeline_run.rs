use std::fs;
use std::path::Path;

use wmlp::checkpoint::load_checkpoint;
use wmlp::config::{InputMode, RunConfig, TuneConfig};
use wmlp::neuralnet::TrainConfig;
use wmlp::pipeline::{evaluate_checkpoint, mlp_tuning_objective, run_pipeline};
use wmlp::synth::synth_generate;

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

fn small_run(root: &Path, out: &Path, skip_tuning: bool) -> RunConfig {
    RunConfig {
        input_mode: InputMode::Features,
        data_root: Some(root.to_path_buf()),
        output_dir: out.to_path_buf(),
        skip_tuning,
        train: TrainConfig {
            epochs: 15,
            batch_size: 16,
            ..TrainConfig::default()
        },
        tune: TuneConfig {
            epochs: 3,
            ..TuneConfig::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn skip_tuning_run_writes_the_evaluation_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth_generate(20, 3, &root).unwrap();
    let out = dir.path().join("out");
    let res = run_pipeline(&small_run(&root, &out, true)).unwrap();

    assert!(res.tuning.is_none());
    assert_eq!(res.split.train.len() + res.split.test.len(), 60);
    assert_eq!(res.split.test.len(), 18);
    for f in [
        "model.wmlp",
        "train_report.csv",
        "metrics.csv",
        "confusion.csv",
        "predictions.csv",
        "features.csv",
        "run_config.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    for c in 0..3 {
        assert!(out.join(format!("roc_class{c}.csv")).is_file());
    }
    assert!(!out.join("trace.csv").exists());
    assert_eq!(
        header(&out.join("metrics.csv")),
        "scope,accuracy,precision,recall,f1,auc"
    );
    assert_eq!(header(&out.join("confusion.csv")), "true\\pred,0,1,2");
    assert_eq!(
        fs::read_to_string(out.join("train_report.csv"))
            .unwrap()
            .lines()
            .count(),
        16
    );
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".staging"))
        .collect();
    assert!(leftovers.is_empty());

    let saved = load_checkpoint(&out.join("model.wmlp")).unwrap();
    assert_eq!(saved, res.params);
    assert_eq!(saved.input_dim(), 64);

    let eval_out = dir.path().join("eval");
    let eval = evaluate_checkpoint(&out.join("model.wmlp"), &root, &eval_out).unwrap();
    assert_eq!(eval.predictions.len(), 60);
    assert!(eval_out.join("metrics.csv").is_file());
}

#[test]
fn tuned_run_records_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    synth_generate(12, 4, &root).unwrap();
    let out = dir.path().join("out");
    let res = run_pipeline(&small_run(&root, &out, false)).unwrap();
    let tuning = res.tuning.as_ref().unwrap();
    assert_eq!(tuning.trace.len(), 3);
    assert!(tuning.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!((0.0001..=0.1).contains(&tuning.learning_rate));
    assert!((10..=200).contains(&tuning.hidden));
    assert_eq!(res.final_hidden, tuning.hidden);
    assert_eq!(res.params.hidden_dim(), tuning.hidden);
    for f in ["trace.csv", "tuning.csv", "initial_train_report.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(header(&out.join("trace.csv")), "iteration,best_fitness");
    assert_eq!(
        header(&out.join("tuning.csv")),
        "candidate_lr,candidate_hidden,fitness"
    );
}

#[test]
fn missing_data_root_reports_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run(&dir.path().join("nope"), &dir.path().join("out"), true);
    let err = run_pipeline(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("ingest failed"), "{err}");
}

#[test]
fn tuning_objective_is_a_negated_accuracy_and_deterministic() {
    use wmlp::dataset::scan_dataset;
    use wmlp::neuralnet::LabeledSet;
    use wmlp::pipeline::{build_inputs, preprocess_manifest, Standardizer};

    let dir = tempfile::tempdir().unwrap();
    synth_generate(10, 2, dir.path()).unwrap();
    let m = scan_dataset(dir.path()).unwrap();
    let x = build_inputs(&preprocess_manifest(&m, None).unwrap(), InputMode::Features).unwrap();
    let x = Standardizer::fit(&x).apply(&x);
    let all = LabeledSet::new(x, m.labels()).unwrap();
    let fit = all.select(&(0..30).filter(|i| i % 3 != 0).collect::<Vec<_>>());
    let val = all.select(&(0..30).filter(|i| i % 3 == 0).collect::<Vec<_>>());
    let budget = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    for cand in [[0.0001, 10.0], [0.05, 57.3], [0.1, 200.0]] {
        let a = mlp_tuning_objective(&cand, &fit, &val, &budget, (10.0, 200.0));
        let b = mlp_tuning_objective(&cand, &fit, &val, &budget, (10.0, 200.0));
        assert!((-1.0..=0.0).contains(&a), "{a}");
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
