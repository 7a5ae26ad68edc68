//! End-to-end experiment plumbing: dataset preparation and persistence,
//! declarative configuration, and the named experiment presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    prepare_cohort, read_clinical, read_features, read_genotypes, split_stratified, standardize_clinical,
    synth_cohort, write_clinical, write_features, write_genotypes, ClinicalStats, CohortTables, FilterReason,
    FilterThresholds, ModalBatch, PrepareOptions, SynthSpec,
};
use crate::error::{Error, Result};
use crate::eval::{compare_report, evaluate, file_stem, EvalReport};
use crate::model::{save_checkpoint, InputWidths, Modality, ModalitySet, VariantSpec};
use crate::train::{sweep, train, write_sweep, SweepAxis, SweepPoint, TrainConfig};

pub const DATASET_FILE: &str = "dataset.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Locations of the four raw input tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortPaths {
    pub clinical: PathBuf,
    pub genotype: PathBuf,
    pub mri_features: PathBuf,
    pub pet_features: PathBuf,
}

impl CohortPaths {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        CohortPaths {
            clinical: dir.join("clinical.csv"),
            genotype: dir.join("genotypes.tsv"),
            mri_features: dir.join("mri_features.csv"),
            pet_features: dir.join("pet_features.csv"),
        }
    }

    pub fn load(&self) -> Result<CohortTables> {
        Ok(CohortTables {
            clinical: read_clinical(&self.clinical)?,
            genotypes: read_genotypes(&self.genotype)?,
            mri: read_features(&self.mri_features)?,
            pet: read_features(&self.pet_features)?,
        })
    }
}

/// Writes the four tables under their conventional names in `dir`.
pub fn write_tables(tables: &CohortTables, dir: &Path) -> Result<CohortPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = CohortPaths::in_dir(dir);
    write_clinical(&tables.clinical, &paths.clinical)?;
    write_genotypes(&tables.genotypes, &paths.genotype)?;
    write_features(&tables.mri, &paths.mri_features)?;
    write_features(&tables.pet, &paths.pet_features)?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthSpec),
    Files(CohortPaths),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SynthSpec::default())
    }
}

/// Counts of SNP sites removed by each quality filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterSummary {
    pub input_sites: usize,
    pub kept_sites: usize,
    pub masked_calls: usize,
    pub removed_missingness: usize,
    pub removed_maf: usize,
    pub removed_hwe: usize,
}

/// Provenance of a prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub source: String,
    pub synthetic: Option<SynthSpec>,
    pub seed: u64,
    pub test_fraction: f64,
    pub thresholds: FilterThresholds,
    pub top_k_snps: usize,
    pub n_subjects: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_class_counts: [usize; 3],
    pub test_class_counts: [usize; 3],
    pub widths: InputWidths,
    pub filter: FilterSummary,
    pub snp_ids: Vec<String>,
    /// Clinical standardization fitted on the training split.
    pub clinical_stats: ClinicalStats,
}

/// Train/test splits ready for the model, plus their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: ModalBatch,
    pub test: ModalBatch,
    pub manifest: Manifest,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    train: ModalBatch,
    test: ModalBatch,
}

/// Loads or generates the raw tables, prepares the cohort, splits it
/// stratified by class and standardizes clinical values with training-split
/// statistics. `seed` drives the synthetic generator and the split.
pub fn build_dataset(source: &DataSource, prepare: &PrepareOptions, test_fraction: f64, seed: u64) -> Result<Dataset> {
    let (tables, source_name, synthetic) = match source {
        DataSource::Synthetic(spec) => {
            let spec = SynthSpec { seed, ..spec.clone() };
            (synth_cohort(&spec)?, "synthetic", Some(spec))
        }
        DataSource::Files(paths) => (paths.load()?, "files", None),
    };
    let cohort = prepare_cohort(&tables, prepare)?;
    let (tr, te) = split_stratified(&cohort.batch.labels, test_fraction, seed)?;
    let mut train = cohort.batch.select(&tr)?;
    let mut test = cohort.batch.select(&te)?;
    let clinical_stats = standardize_clinical(&mut train, &mut test)?;
    let report = &cohort.filter_report;
    let filter = FilterSummary {
        input_sites: report.input_sites,
        kept_sites: report.kept_sites,
        masked_calls: report.masked_calls,
        removed_missingness: report.removed_by(|r| matches!(r, FilterReason::Missingness { .. })),
        removed_maf: report.removed_by(|r| matches!(r, FilterReason::Maf { .. })),
        removed_hwe: report.removed_by(|r| matches!(r, FilterReason::Hwe { .. })),
    };
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        source: source_name.into(),
        synthetic,
        seed,
        test_fraction,
        thresholds: prepare.thresholds,
        top_k_snps: prepare.top_k_snps,
        n_subjects: cohort.batch.len(),
        n_train: train.len(),
        n_test: test.len(),
        train_class_counts: train.class_counts(),
        test_class_counts: test.class_counts(),
        widths: train.widths(),
        filter,
        snp_ids: cohort.snp_ids,
        clinical_stats,
    };
    Ok(Dataset { train, test, manifest })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
}

/// Writes `dataset.json` and `manifest.json` into `dir`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(DATASET_FILE), &DatasetFile { train: dataset.train.clone(), test: dataset.test.clone() })?;
    write_json(&dir.join(MANIFEST_FILE), &dataset.manifest)
}

/// Reads a dataset written by [`save_dataset`], checking that the splits
/// agree with the manifest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "dataset format version {} is not supported (expected {DATASET_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let file: DatasetFile = read_json(&dir.join(DATASET_FILE))?;
    for (split, batch, n) in [("train", &file.train, manifest.n_train), ("test", &file.test, manifest.n_test)] {
        if batch.len() != n || batch.widths() != manifest.widths {
            return Err(Error::Data(format!(
                "{split} split ({} samples, widths {:?}) disagrees with the manifest ({n} samples, widths {:?})",
                batch.len(),
                batch.widths(),
                manifest.widths
            )));
        }
    }
    Ok(Dataset { train: file.train, test: file.test, manifest })
}

/// Complete description of an experiment. Every field has a default and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives data generation, the split and parameter initialization.
    pub seed: u64,
    pub test_fraction: f64,
    pub output_dir: PathBuf,
    pub data: DataSource,
    pub prepare: PrepareOptions,
    pub train: TrainConfig,
    /// Variant names run by `train` and by custom comparisons.
    pub variants: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            test_fraction: 0.2,
            output_dir: PathBuf::from("acmca-out"),
            data: DataSource::default(),
            prepare: PrepareOptions::default(),
            train: TrainConfig::default(),
            variants: vec!["acmca".into()],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Training settings with the experiment seed applied. The first entry
    /// of `variants`, if any, replaces `train.variant`; presets that compare
    /// variants override it per run.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let variant = match self.variants.first() {
            Some(name) => VariantSpec::by_name(name)?,
            None => self.train.variant.clone(),
        };
        Ok(TrainConfig { seed: self.seed, variant, ..self.train.clone() })
    }

    pub fn variant_specs(&self) -> Result<Vec<VariantSpec>> {
        self.variants.iter().map(|n| VariantSpec::by_name(n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        self.train_config()?.validate()?;
        for v in self.variant_specs()? {
            v.validate()?;
        }
        Ok(())
    }

    pub fn build_dataset(&self) -> Result<Dataset> {
        build_dataset(&self.data, &self.prepare, self.test_fraction, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ModalityMatrix,
    VariantComparison,
    AblationSuite,
    SweepEpochs,
    SweepBatch,
    SweepDim,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::ModalityMatrix,
        Preset::VariantComparison,
        Preset::AblationSuite,
        Preset::SweepEpochs,
        Preset::SweepBatch,
        Preset::SweepDim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ModalityMatrix => "modality-matrix",
            Preset::VariantComparison => "variant-comparison",
            Preset::AblationSuite => "ablation-suite",
            Preset::SweepEpochs => "sweep-epochs",
            Preset::SweepBatch => "sweep-batch",
            Preset::SweepDim => "sweep-dim",
        }
    }

    /// Variants compared by this preset; `None` for sweeps.
    pub fn variants(self) -> Option<Vec<VariantSpec>> {
        use Modality::*;
        let subset = |mods: &[Modality]| VariantSpec::modality_subset(ModalitySet::of(mods).expect("nonempty"));
        match self {
            Preset::ModalityMatrix => Some(vec![
                subset(&[Clinical]),
                subset(&[Genetic]),
                subset(&[Mri]),
                subset(&[Pet]),
                subset(&[Clinical, Mri]),
                subset(&[Genetic, Pet]),
                subset(&[Clinical, Genetic, Mri, Pet]),
            ]),
            Preset::VariantComparison => Some(vec![
                VariantSpec::acmca(),
                VariantSpec::symmetric(),
                VariantSpec::mcad(),
                VariantSpec::concat_baseline(),
            ]),
            Preset::AblationSuite => Some(vec![
                VariantSpec::wcm(),
                VariantSpec::wde(),
                VariantSpec::wfnet(),
                VariantSpec::wt(),
                VariantSpec::acmca(),
            ]),
            _ => None,
        }
    }

    pub fn sweep_axis(self) -> Option<SweepAxis> {
        match self {
            Preset::SweepEpochs => Some(SweepAxis::Epochs),
            Preset::SweepBatch => Some(SweepAxis::BatchSize),
            Preset::SweepDim => Some(SweepAxis::FeatureDim),
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            Error::Usage(format!("unknown preset '{s}'; expected one of {}", names.join(", ")))
        })
    }
}

/// A run that did not finish, as recorded in `failures.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: String,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOutcome {
    /// Reports of the runs that finished, in preset order.
    pub reports: Vec<EvalReport>,
    pub failures: Vec<RunFailure>,
}

impl ComparisonOutcome {
    pub fn report(&self, variant: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.variant == variant)
    }
}

fn run_one(dataset: &Dataset, variant: &VariantSpec, base: &TrainConfig, run_dir: &Path) -> Result<EvalReport> {
    let cfg = TrainConfig { variant: variant.clone(), ..base.clone() };
    let name = variant.name.clone();
    let mut progress = |r: &crate::train::EpochRecord| log::info!("[{name}] {}", r.progress_line());
    let outcome = train(&dataset.train, Some(&dataset.test), &cfg, Some(&mut progress))?;
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let meta = [("variant", variant.name.clone()), ("seed", cfg.seed.to_string())];
    outcome.log.write_csv(&run_dir.join("train_log.csv"), &meta, false)?;
    save_checkpoint(&outcome.model, &run_dir.join("checkpoint.json"))?;
    if let Some((epoch, best)) = &outcome.best {
        save_checkpoint(best, &run_dir.join("best_checkpoint.json"))?;
        log::info!("[{}] best evaluation accuracy at epoch {epoch}", variant.name);
    }
    evaluate(&outcome.model, &dataset.test)
}

/// Trains and evaluates every variant on the shared dataset (in parallel),
/// writing each run to `out_dir/runs/<variant>/` and the comparison files to
/// `out_dir`. Failed runs are listed in `failures.json`; the others are kept.
pub fn run_comparison(
    dataset: &Dataset,
    variants: &[VariantSpec],
    base: &TrainConfig,
    out_dir: &Path,
) -> Result<ComparisonOutcome> {
    if variants.is_empty() {
        return Err(Error::Usage("no variants to run".into()));
    }
    base.validate()?;
    for v in variants {
        v.validate()?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(String, Result<EvalReport>)> = variants
        .par_iter()
        .map(|v| (v.name.clone(), run_one(dataset, v, base, &out_dir.join("runs").join(file_stem(&v.name)))))
        .collect();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (run, res) in results {
        match res {
            Ok(r) => reports.push(r),
            Err(e) => {
                log::error!("[{run}] {e}");
                failures.push(RunFailure { run, error: e.to_string(), exit_code: e.exit_code() });
            }
        }
    }
    write_json(&out_dir.join("failures.json"), &failures)?;
    if !reports.is_empty() {
        let meta = [("seed", base.seed.to_string()), ("epochs", base.epochs.to_string()), ("n_test", dataset.test.len().to_string())];
        compare_report(&reports, out_dir, &meta)?;
    }
    Ok(ComparisonOutcome { reports, failures })
}

/// Sweeps one hyperparameter for a single variant and writes the curve.
pub fn run_sweep(
    dataset: &Dataset,
    axis: SweepAxis,
    values: &[usize],
    base: &TrainConfig,
    out_dir: &Path,
) -> Result<Vec<SweepPoint>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let result = sweep(&dataset.train, &dataset.test, axis, values, base);
    let failures: Vec<RunFailure> = match &result {
        Ok(_) => Vec::new(),
        Err(e) => vec![RunFailure { run: format!("sweep-{}", axis.name()), error: e.to_string(), exit_code: e.exit_code() }],
    };
    write_json(&out_dir.join("failures.json"), &failures)?;
    let points = result?;
    write_sweep(out_dir, axis, base, &points)?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PresetOutcome {
    Comparison(ComparisonOutcome),
    Sweep(Vec<SweepPoint>),
}

/// Runs a preset into `out_dir`, writing the resolved configuration next to
/// the outputs. Sweeps use `values` or the axis defaults.
pub fn run_preset(
    preset: Preset,
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    values: Option<&[usize]>,
    out_dir: &Path,
) -> Result<PresetOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let resolved = cfg.to_toml()?;
    std::fs::write(out_dir.join("config.toml"), resolved).map_err(|e| Error::io(out_dir.join("config.toml"), e))?;
    let base = cfg.train_config()?;
    if let Some(variants) = preset.variants() {
        return run_comparison(dataset, &variants, &base, out_dir).map(PresetOutcome::Comparison);
    }
    let axis = preset.sweep_axis().expect("every preset is a comparison or a sweep");
    let values = values.map_or_else(|| axis.default_values(), <[usize]>::to_vec);
    run_sweep(dataset, axis, &values, &base, out_dir).map(PresetOutcome::Sweep)
}
