use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acmca::data::{synth_cohort, SynthSpec};
use acmca::experiment::{write_tables, Manifest};

fn acmca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acmca"))
        .args(args)
        .current_dir(dir)
        .env_remove("ACMCA_OUTPUT_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), stderr(&o));
    o
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// 15-subject-per-class synthetic dataset in `dir/ds`.
fn small_dataset(dir: &Path, extra: &[&str]) {
    let mut args = vec!["prepare", "--synthetic", "--n-per-class", "15", "--img-width", "8", "--snp-count", "80", "--out", "ds"];
    args.extend_from_slice(extra);
    ok(acmca(dir, &args));
}

#[test]
fn every_subcommand_documents_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("prepare", &["--synthetic", "--clinical", "--genotype", "--mri-features", "--pet-features", "--seed", "--n-per-class", "--min-gq", "--hwe-p", "--config", "--out"]),
        ("train", &["--dataset", "--variant", "--epochs", "--batch-size", "--lr", "--feature-dim", "--optimizer", "--config"]),
        ("eval", &["--checkpoint", "--dataset", "--split", "--out"]),
        ("preset", &["<NAME>", "--values", "--dataset", "--epochs", "--seed"]),
        ("sweep", &["--axis", "--values", "--variant", "--dataset"]),
    ];
    for (cmd, flags) in cases {
        let out = ok(acmca(dir.path(), &[cmd, "--help"]));
        let text = stdout(&out);
        for f in flags {
            assert!(text.contains(f), "`{cmd} --help` does not mention {f}");
        }
    }
    ok(acmca(dir.path(), &["--help"]));
}

#[test]
fn synthetic_prepare_writes_manifest_with_default_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    ok(acmca(dir.path(), &["prepare", "--synthetic", "--n-per-class", "60", "--seed", "7", "--out", "ds"]));
    let m = manifest(&dir.path().join("ds"));
    assert_eq!(m.n_subjects, 180);
    assert_eq!(m.seed, 7);
    assert_eq!((m.thresholds.min_gq, m.thresholds.max_missing, m.thresholds.min_maf, m.thresholds.hwe_p), (20, 0.05, 0.01, 0.05));
    assert!(dir.path().join("ds/dataset.json").exists());
    assert!(dir.path().join("ds/config.toml").exists());
}

#[test]
fn partial_file_inputs_list_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = acmca(dir.path(), &["prepare", "--clinical", "a.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for flag in ["--genotype", "--mri-features", "--pet-features"] {
        assert!(err.contains(flag), "{err}");
    }
    assert_eq!(acmca(dir.path(), &["prepare"]).status.code(), Some(2));
}

#[test]
fn disjoint_cohort_files_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = synth_cohort(&SynthSpec { n_per_class: 5, snp_count: 40, img_width: 4, ..Default::default() }).unwrap();
    for r in &mut tables.clinical.records {
        r.subject_id = format!("OTHER{}", r.subject_id);
    }
    let paths = write_tables(&tables, &dir.path().join("raw")).unwrap();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let out = acmca(
        dir.path(),
        &[
            "prepare",
            "--clinical",
            &p(&paths.clinical),
            "--genotype",
            &p(&paths.genotype),
            "--mri-features",
            &p(&paths.mri_features),
            "--pet-features",
            &p(&paths.pet_features),
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("synthetic"), "{}", stderr(&out));
}

#[test]
fn file_inputs_prepare_like_synthetic_mode() {
    let dir = tempfile::tempdir().unwrap();
    let tables = synth_cohort(&SynthSpec { seed: 3, n_per_class: 15, snp_count: 80, img_width: 8, ..Default::default() }).unwrap();
    let paths = write_tables(&tables, &dir.path().join("raw")).unwrap();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    ok(acmca(
        dir.path(),
        &[
            "prepare",
            "--clinical",
            &p(&paths.clinical),
            "--genotype",
            &p(&paths.genotype),
            "--mri-features",
            &p(&paths.mri_features),
            "--pet-features",
            &p(&paths.pet_features),
            "--seed",
            "3",
            "--out",
            "from_files",
        ],
    ));
    small_dataset(dir.path(), &["--seed", "3"]);
    assert_eq!(
        fs::read(dir.path().join("from_files/dataset.json")).unwrap(),
        fs::read(dir.path().join("ds/dataset.json")).unwrap()
    );
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_acmca"))
        .args(["prepare", "--synthetic", "--n-per-class", "5", "--img-width", "4", "--snp-count", "40"])
        .current_dir(dir.path())
        .env("ACMCA_OUTPUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    ok(out);
    assert!(dir.path().join("root/dataset/manifest.json").exists());
}

#[test]
fn train_is_deterministic_and_streams_progress() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), &[]);
    let run = |out: &str| ok(acmca(dir.path(), &["train", "--dataset", "ds", "--epochs", "3", "--feature-dim", "16", "--out", out]));
    let first = run("a");
    run("b");
    let lines: Vec<String> = stderr(&first).lines().filter(|l| l.starts_with("epoch=")).map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("epoch=1 loss=") && lines[0].contains(" train_acc=") && lines[0].contains(" eval_acc="));
    for f in ["train_log.csv", "checkpoint.json", "best_checkpoint.json"] {
        assert_eq!(fs::read(dir.path().join("a/ACMCA").join(f)).unwrap(), fs::read(dir.path().join("b/ACMCA").join(f)).unwrap(), "{f}");
    }
    assert!(dir.path().join("a/config.toml").exists());
}

#[test]
fn memorized_training_set_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    ok(acmca(dir.path(), &["prepare", "--synthetic", "--n-per-class", "4", "--img-width", "6", "--snp-count", "60", "--test-fraction", "0.25", "--out", "ds"]));
    ok(acmca(dir.path(), &["train", "--dataset", "ds", "--epochs", "60", "--batch-size", "4", "--feature-dim", "16", "--lr", "0.003", "--out", "tr"]));
    let out = ok(acmca(dir.path(), &["eval", "--checkpoint", "tr/ACMCA/checkpoint.json", "--dataset", "ds", "--split", "train", "--out", "ev"]));
    let line = stdout(&out);
    for metric in ["accuracy", "recall", "specificity", "f1", "auc", "overall_accuracy"] {
        assert!(line.contains(&format!(" {metric}=1.0000")), "{metric} not perfect: {line}");
    }
    let csv = fs::read_to_string(dir.path().join("ev/metrics_ACMCA.csv")).unwrap();
    assert!(csv.contains("class,accuracy,recall,specificity,f1,auc"));
    assert!(dir.path().join("ev/roc_ACMCA.svg").exists());
}

#[test]
fn eval_rejects_mismatched_widths() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), &[]);
    ok(acmca(dir.path(), &["prepare", "--synthetic", "--n-per-class", "15", "--img-width", "8", "--snp-count", "80", "--top-k-snps", "30", "--out", "narrow"]));
    ok(acmca(dir.path(), &["train", "--dataset", "ds", "--epochs", "1", "--feature-dim", "16", "--out", "tr"]));
    let out = acmca(dir.path(), &["eval", "--checkpoint", "tr/ACMCA/checkpoint.json", "--dataset", "narrow"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    let wide = manifest(&dir.path().join("ds")).widths.genetic;
    assert!(err.contains(&format!("genetic {wide}")) && err.contains("genetic 30"), "{err}");
}

#[test]
fn diverging_training_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), &[]);
    let out = acmca(dir.path(), &["train", "--dataset", "ds", "--epochs", "20", "--feature-dim", "16", "--optimizer", "sgd", "--lr", "1e12", "--out", "tr"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("epoch"), "{}", stderr(&out));
}

#[test]
fn bad_settings_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), &[]);
    let out = acmca(dir.path(), &["train", "--dataset", "ds", "--feature-dim", "90"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("81") && stderr(&out).contains("100"));
    fs::write(dir.path().join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    assert_eq!(acmca(dir.path(), &["train", "--dataset", "ds", "--config", "bad.toml"]).status.code(), Some(2));
    assert_eq!(acmca(dir.path(), &["preset", "tables"]).status.code(), Some(2));
    assert_eq!(acmca(dir.path(), &["train", "--dataset", "ds", "--variant", "CGM"]).status.code(), Some(2));
}

#[test]
fn ablation_preset_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), &[]);
    let run = |out: &str| ok(acmca(dir.path(), &["preset", "ablation-suite", "--dataset", "ds", "--epochs", "2", "--feature-dim", "16", "--out", out]));
    run("a");
    run("b");
    let table = fs::read_to_string(dir.path().join("a/comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(fs::read(dir.path().join("a/comparison.csv")).unwrap(), fs::read(dir.path().join("b/comparison.csv")).unwrap());
    assert!(dir.path().join("a/roc_comparison.svg").exists());
    assert!(dir.path().join("a/config.toml").exists());
}

#[test]
fn sweep_preset_emits_requested_points() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path(), &[]);
    ok(acmca(dir.path(), &["preset", "sweep-epochs", "--dataset", "ds", "--values", "1,2,3", "--feature-dim", "16", "--out", "sw"]));
    let csv = fs::read_to_string(dir.path().join("sw/sweep_epochs.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, vec!["epochs,test_accuracy,final_loss", rows[1], rows[2], rows[3]]);
    assert_eq!(rows.len(), 4);
    ok(acmca(dir.path(), &["sweep", "--axis", "batch-size", "--values", "8,16", "--dataset", "ds", "--epochs", "1", "--feature-dim", "16", "--out", "sb"]));
    assert!(dir.path().join("sb/sweep_batch_size.svg").exists());
    let err = acmca(dir.path(), &["preset", "ablation-suite", "--values", "1"]);
    assert_eq!(err.status.code(), Some(2));
}
