//! Input tables, SNP quality control, cohort assembly and synthetic cohorts.

mod clinical;
mod cohort;
mod features;
mod genotype;
mod prepare;
mod synth;

pub use clinical::{
    normalize_clinical, parse_clinical, read_clinical, write_clinical, ClinicalRecord, ClinicalStats, ClinicalTable,
    Gender, CLINICAL_FEATURES,
};
pub use cohort::{intersect_cohort, split_stratified};
pub use features::{parse_features, read_features, write_features, FeatureVectorTable};
pub use genotype::{
    encode_alleles, filter_snps, hwe_test, parse_genotypes, read_genotypes, select_top_k_variance, write_genotypes,
    AlleleMatrix, Call, FilterReason, FilterReport, FilterThresholds, GenotypeTable, SiteMeta,
};
pub use prepare::{prepare_cohort, standardize_clinical, PrepareOptions, PreparedCohort};
pub use synth::{synth_cohort, CohortTables, SignalLayout, SynthSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputWidths, Modality};
use crate::tensor::Tensor;

/// Diagnostic class, with `index()` giving the label id used in tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    CN,
    MCI,
    AD,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::CN, Label::MCI, Label::AD];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::CN => "CN",
            Label::MCI => "MCI",
            Label::AD => "AD",
        })
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CN" => Ok(Label::CN),
            "MCI" => Ok(Label::MCI),
            "AD" => Ok(Label::AD),
            other => Err(Error::Usage(format!("unknown label '{other}' (expected CN, MCI or AD)"))),
        }
    }
}

/// Subject-aligned features for all four modalities plus label indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalBatch {
    pub ids: Vec<String>,
    pub clinical: Tensor,
    pub genetic: Tensor,
    pub mri: Tensor,
    pub pet: Tensor,
    pub labels: Vec<usize>,
}

impl ModalBatch {
    pub fn new(
        ids: Vec<String>,
        clinical: Tensor,
        genetic: Tensor,
        mri: Tensor,
        pet: Tensor,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = ids.len();
        for (m, t) in Modality::ALL.iter().zip([&clinical, &genetic, &mri, &pet]) {
            if t.shape().len() != 2 || t.shape()[0] != n {
                return Err(Error::shape(
                    "modal_batch",
                    format!("{m} matrix {:?} does not have {n} rows", t.shape()),
                ));
            }
        }
        if labels.len() != n {
            return Err(Error::shape("modal_batch", format!("{} labels for {n} subjects", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= Label::ALL.len()) {
            return Err(Error::Usage(format!("label index {bad} out of range")));
        }
        Ok(ModalBatch { ids, clinical, genetic, mri, pet, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn modality(&self, m: Modality) -> &Tensor {
        match m {
            Modality::Clinical => &self.clinical,
            Modality::Genetic => &self.genetic,
            Modality::Mri => &self.mri,
            Modality::Pet => &self.pet,
        }
    }

    pub fn modality_mut(&mut self, m: Modality) -> &mut Tensor {
        match m {
            Modality::Clinical => &mut self.clinical,
            Modality::Genetic => &mut self.genetic,
            Modality::Mri => &mut self.mri,
            Modality::Pet => &mut self.pet,
        }
    }

    pub fn widths(&self) -> InputWidths {
        InputWidths {
            clinical: self.clinical.shape()[1],
            genetic: self.genetic.shape()[1],
            mri: self.mri.shape()[1],
            pet: self.pet.shape()[1],
        }
    }

    /// Subset of samples in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<ModalBatch> {
        if indices.is_empty() {
            return Err(Error::Usage("cannot select an empty batch".into()));
        }
        Ok(ModalBatch {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            clinical: self.clinical.select_rows(indices)?,
            genetic: self.genetic.select_rows(indices)?,
            mri: self.mri.select_rows(indices)?,
            pet: self.pet.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Each sample's four modality vectors concatenated (C, G, M, P order).
    pub fn concatenated_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                Modality::ALL
                    .iter()
                    .flat_map(|&m| self.modality(m).row(i).iter().copied())
                    .collect()
            })
            .collect()
    }
}
