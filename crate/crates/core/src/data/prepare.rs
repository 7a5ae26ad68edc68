use serde::{Deserialize, Serialize};

use super::clinical::ClinicalStats;
use super::cohort::intersect_cohort;
use super::genotype::{encode_alleles, filter_snps, select_top_k_variance, FilterReport, FilterThresholds};
use super::synth::CohortTables;
use super::ModalBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareOptions {
    pub thresholds: FilterThresholds,
    /// Number of highest-variance SNPs kept after QC (capped at the number
    /// of sites that survive).
    pub top_k_snps: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions { thresholds: FilterThresholds::default(), top_k_snps: 100 }
    }
}

/// A model-ready cohort. Clinical rows are raw (gender code plus the six
/// measures); standardize them with statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedCohort {
    pub batch: ModalBatch,
    pub snp_ids: Vec<String>,
    pub filter_report: FilterReport,
}

/// Intersects the four sources, runs SNP QC on the cohort, encodes and
/// reduces genotypes, and aligns every modality by sorted subject id.
pub fn prepare_cohort(tables: &CohortTables, opts: &PrepareOptions) -> Result<PreparedCohort> {
    let clinical_ids: Vec<String> = tables.clinical.records.iter().map(|r| r.subject_id.clone()).collect();
    let ids = intersect_cohort(&[
        ("clinical", &clinical_ids),
        ("genotype", &tables.genotypes.subjects),
        ("mri", &tables.mri.subjects),
        ("pet", &tables.pet.subjects),
    ])?;
    let genotypes = tables.genotypes.restrict_subjects(&ids)?;
    let (filtered, filter_report) = filter_snps(&genotypes, &opts.thresholds);
    if filtered.n_sites() == 0 {
        return Err(Error::Data(format!(
            "no SNP survives quality control ({} sites in); relax the thresholds",
            filter_report.input_sites
        )));
    }
    let encoded = encode_alleles(&filtered)?;
    let k = opts.top_k_snps.min(encoded.site_ids.len());
    let reduced = select_top_k_variance(&encoded, k)?;

    let mut rows = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for id in &ids {
        let rec = tables.clinical.get(id).expect("id taken from the clinical table");
        rows.push(rec.raw_vector().to_vec());
        labels.push(rec.label.index());
    }
    let batch = ModalBatch::new(
        ids.clone(),
        Tensor::from_rows(&rows)?,
        reduced.values,
        tables.mri.rows_for(&ids)?,
        tables.pet.rows_for(&ids)?,
        labels,
    )?;
    Ok(PreparedCohort { batch, snp_ids: reduced.site_ids, filter_report })
}

/// Fits clinical statistics on `train` and applies them to both splits.
pub fn standardize_clinical(train: &mut ModalBatch, test: &mut ModalBatch) -> Result<ClinicalStats> {
    let (stats, warnings) = ClinicalStats::fit(&train.clinical)?;
    warnings.iter().for_each(|w| log::warn!("{w}"));
    train.clinical = stats.apply(&train.clinical)?;
    test.clinical = stats.apply(&test.clinical)?;
    Ok(stats)
}
