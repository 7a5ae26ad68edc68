use std::path::{Path, PathBuf};

use acmca::data::SynthSpec;
use acmca::eval::{evaluate, file_stem, write_report};
use acmca::experiment::{
    load_dataset, run_preset, run_sweep, save_dataset, CohortPaths, DataSource, Dataset, ExperimentConfig, PresetOutcome,
};
use acmca::model::{load_checkpoint, save_checkpoint, VariantSpec};
use acmca::train::{train, EpochRecord, SweepPoint};
use acmca::{Error, Result};

use crate::args::{Common, EvalArgs, Hyper, PrepareArgs, PresetArgs, SweepArgs, SynthArgs, TrainArgs, OUTPUT_ROOT_ENV};

/// Where a command writes: `--out`, else `$ACMCA_OUTPUT_ROOT/<sub>`, else
/// `<config output_dir>/<sub>`.
fn output_dir(explicit: Option<&Path>, cfg: &ExperimentConfig, sub: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(sub),
        _ => cfg.output_dir.join(sub),
    }
}

fn base_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_hyper(cfg: &mut ExperimentConfig, h: &Hyper) {
    let t = &mut cfg.train;
    t.epochs = h.epochs.unwrap_or(t.epochs);
    t.batch_size = h.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = h.learning_rate.unwrap_or(t.learning_rate);
    t.optimizer = h.optimizer.unwrap_or(t.optimizer);
    if let Some(d) = h.feature_dim {
        t.feature_dim = d;
        t.model = None;
    }
}

fn apply_synth(spec: &mut SynthSpec, a: &SynthArgs) {
    spec.n_per_class = a.n_per_class.unwrap_or(spec.n_per_class);
    spec.snp_count = a.snp_count.unwrap_or(spec.snp_count);
    spec.img_width = a.img_width.unwrap_or(spec.img_width);
    spec.class_separation = a.separation.unwrap_or(spec.class_separation);
    spec.correlation = a.correlation.unwrap_or(spec.correlation);
    spec.signal = a.signal.unwrap_or(spec.signal);
}

fn synth_flags_given(a: &SynthArgs) -> bool {
    a.n_per_class.is_some()
        || a.snp_count.is_some()
        || a.img_width.is_some()
        || a.separation.is_some()
        || a.correlation.is_some()
        || a.signal.is_some()
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::Io { path, source: e })
}

pub fn prepare(args: &PrepareArgs) -> Result<i32> {
    let mut cfg = base_config(&args.common)?;
    let files = [
        ("--clinical", &args.clinical),
        ("--genotype", &args.genotype),
        ("--mri-features", &args.mri_features),
        ("--pet-features", &args.pet_features),
    ];
    let given = files.iter().filter(|(_, p)| p.is_some()).count();
    if given > 0 {
        let missing: Vec<&str> = files.iter().filter(|(_, p)| p.is_none()).map(|(f, _)| *f).collect();
        if !missing.is_empty() {
            return Err(Error::Usage(format!(
                "file input needs all four modalities; missing {}",
                missing.join(", ")
            )));
        }
        let path = |p: &Option<PathBuf>| p.clone().expect("checked above");
        cfg.data = DataSource::Files(CohortPaths {
            clinical: path(&args.clinical),
            genotype: path(&args.genotype),
            mri_features: path(&args.mri_features),
            pet_features: path(&args.pet_features),
        });
    } else if args.synthetic {
        if !matches!(cfg.data, DataSource::Synthetic(_)) {
            cfg.data = DataSource::Synthetic(SynthSpec::default());
        }
    } else if args.common.config.is_none() {
        return Err(Error::Usage(
            "no data source: pass --synthetic, or all of --clinical, --genotype, --mri-features and \
             --pet-features, or a --config with a [data] section"
                .into(),
        ));
    }
    match &mut cfg.data {
        DataSource::Synthetic(spec) => apply_synth(spec, &args.synth),
        DataSource::Files(_) if synth_flags_given(&args.synth) => {
            return Err(Error::Usage("synthetic generator flags only apply with --synthetic".into()))
        }
        DataSource::Files(_) => {}
    }
    let th = &mut cfg.prepare.thresholds;
    th.min_gq = args.min_gq.unwrap_or(th.min_gq);
    th.max_missing = args.max_missing.unwrap_or(th.max_missing);
    th.min_maf = args.min_maf.unwrap_or(th.min_maf);
    th.hwe_p = args.hwe_p.unwrap_or(th.hwe_p);
    cfg.prepare.top_k_snps = args.top_k_snps.unwrap_or(cfg.prepare.top_k_snps);
    cfg.test_fraction = args.test_fraction.unwrap_or(cfg.test_fraction);
    cfg.validate()?;

    let out = output_dir(args.common.out.as_deref(), &cfg, "dataset");
    let dataset = cfg.build_dataset()?;
    save_dataset(&dataset, &out)?;
    write_config(&cfg, &out)?;
    let m = &dataset.manifest;
    log::info!(
        "{} subjects ({} train, {} test); {} of {} SNP sites kept, {} used",
        m.n_subjects,
        m.n_train,
        m.n_test,
        m.filter.kept_sites,
        m.filter.input_sites,
        m.widths.genetic
    );
    println!("{}", out.display());
    Ok(0)
}

pub fn train_cmd(args: &TrainArgs) -> Result<i32> {
    let mut cfg = base_config(&args.common)?;
    apply_hyper(&mut cfg, &args.hyper);
    if !args.variants.is_empty() {
        cfg.variants = args.variants.clone();
    }
    cfg.validate()?;
    let dataset = load_dataset(&args.dataset)?;
    let out = output_dir(args.common.out.as_deref(), &cfg, "train");
    write_config(&cfg, &out)?;
    let base = cfg.train_config()?;
    let variants = cfg.variant_specs()?;
    let tagged = variants.len() > 1;
    for variant in variants {
        let tc = acmca::train::TrainConfig { variant: variant.clone(), ..base.clone() };
        let name = variant.name.clone();
        let mut progress = |r: &EpochRecord| {
            if tagged {
                eprintln!("[{name}] {}", r.progress_line());
            } else {
                eprintln!("{}", r.progress_line());
            }
        };
        let outcome = train(&dataset.train, Some(&dataset.test), &tc, Some(&mut progress))?;
        let run_dir = out.join(file_stem(&variant.name));
        std::fs::create_dir_all(&run_dir).map_err(|e| Error::Io { path: run_dir.clone(), source: e })?;
        let meta = [
            ("variant", variant.name.clone()),
            ("seed", tc.seed.to_string()),
            ("learning_rate", tc.learning_rate.to_string()),
            ("batch_size", tc.batch_size.to_string()),
            ("optimizer", tc.optimizer.to_string()),
        ];
        outcome.log.write_csv(&run_dir.join("train_log.csv"), &meta, false)?;
        save_checkpoint(&outcome.model, &run_dir.join("checkpoint.json"))?;
        if let Some((epoch, best)) = &outcome.best {
            save_checkpoint(best, &run_dir.join("best_checkpoint.json"))?;
            log::info!("[{}] best test accuracy at epoch {epoch}", variant.name);
        }
        println!("{}", run_dir.join("checkpoint.json").display());
    }
    Ok(0)
}

pub fn eval_cmd(args: &EvalArgs) -> Result<i32> {
    let model = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.dataset)?;
    let want = model.inputs();
    let have = dataset.manifest.widths;
    if want != have {
        return Err(Error::Config(format!(
            "checkpoint expects input widths (clinical {}, genetic {}, mri {}, pet {}) but the dataset has \
             (clinical {}, genetic {}, mri {}, pet {})",
            want.clinical, want.genetic, want.mri, want.pet, have.clinical, have.genetic, have.mri, have.pet
        )));
    }
    let batch = if args.split == "train" { &dataset.train } else { &dataset.test };
    let report = evaluate(&model, batch)?;
    let out = output_dir(args.out.as_deref(), &ExperimentConfig::default(), "eval");
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    write_report(&report, &out)?;
    let m = &report.metrics.macro_avg;
    let auc = report.roc.macro_auc.map_or("na".to_string(), |a| format!("{a:.4}"));
    println!(
        "{} n={} accuracy={:.4} recall={:.4} specificity={:.4} f1={:.4} auc={auc} overall_accuracy={:.4}",
        report.variant, report.n_samples, m.accuracy, m.recall, m.specificity, m.f1, report.metrics.overall_accuracy
    );
    Ok(0)
}

fn dataset_for(cfg: &ExperimentConfig, explicit: Option<&Path>, out: &Path) -> Result<Dataset> {
    match explicit {
        Some(dir) => load_dataset(dir),
        None => {
            let ds = cfg.build_dataset()?;
            save_dataset(&ds, &out.join("dataset"))?;
            Ok(ds)
        }
    }
}

fn print_sweep(points: &[SweepPoint]) {
    for p in points {
        println!("{} test_accuracy={:.4} final_loss={:.6}", p.value, p.test_accuracy, p.final_loss);
    }
}

pub fn preset_cmd(args: &PresetArgs) -> Result<i32> {
    let mut cfg = base_config(&args.common)?;
    apply_hyper(&mut cfg, &args.hyper);
    if args.values.is_some() && args.name.sweep_axis().is_none() {
        return Err(Error::Usage(format!("--values only applies to sweep presets, not {}", args.name)));
    }
    cfg.validate()?;
    let out = output_dir(args.common.out.as_deref(), &cfg, args.name.name());
    let dataset = dataset_for(&cfg, args.dataset.as_deref(), &out)?;
    match run_preset(args.name, &cfg, &dataset, args.values.as_deref(), &out)? {
        PresetOutcome::Comparison(outcome) => {
            for r in &outcome.reports {
                let auc = r.roc.macro_auc.map_or("na".to_string(), |a| format!("{a:.4}"));
                println!("{} accuracy={:.4} overall_accuracy={:.4} auc={auc}", r.variant, r.metrics.macro_avg.accuracy, r.metrics.overall_accuracy);
            }
            if let Some(first) = outcome.failures.first() {
                log::error!(
                    "{} of {} runs failed; see {}",
                    outcome.failures.len(),
                    outcome.failures.len() + outcome.reports.len(),
                    out.join("failures.json").display()
                );
                return Ok(first.exit_code);
            }
        }
        PresetOutcome::Sweep(points) => print_sweep(&points),
    }
    log::info!("results in {}", out.display());
    Ok(0)
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<i32> {
    let mut cfg = base_config(&args.common)?;
    apply_hyper(&mut cfg, &args.hyper);
    VariantSpec::by_name(&args.variant)?;
    cfg.variants = vec![args.variant.clone()];
    cfg.validate()?;
    let out = output_dir(args.common.out.as_deref(), &cfg, &format!("sweep-{}", args.axis.name()));
    let dataset = dataset_for(&cfg, args.dataset.as_deref(), &out)?;
    write_config(&cfg, &out)?;
    let values = args.values.clone().unwrap_or_else(|| args.axis.default_values());
    let points = run_sweep(&dataset, args.axis, &values, &cfg.train_config()?, &out)?;
    print_sweep(&points);
    log::info!("results in {}", out.display());
    Ok(0)
}
