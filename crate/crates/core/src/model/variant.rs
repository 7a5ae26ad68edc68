use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four input streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Clinical,
    Genetic,
    Mri,
    Pet,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Clinical, Modality::Genetic, Modality::Mri, Modality::Pet];

    pub fn index(self) -> usize {
        match self {
            Modality::Clinical => 0,
            Modality::Genetic => 1,
            Modality::Mri => 2,
            Modality::Pet => 3,
        }
    }

    pub fn code(self) -> char {
        match self {
            Modality::Clinical => 'C',
            Modality::Genetic => 'G',
            Modality::Mri => 'M',
            Modality::Pet => 'P',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Clinical => "clinical",
            Modality::Genetic => "genetic",
            Modality::Mri => "mri",
            Modality::Pet => "pet",
        }
    }

    pub fn is_imaging(self) -> bool {
        matches!(self, Modality::Mri | Modality::Pet)
    }

    /// Imaging partner of a numerical modality and vice versa (C↔M, G↔P).
    pub fn partner(self) -> Modality {
        match self {
            Modality::Clinical => Modality::Mri,
            Modality::Mri => Modality::Clinical,
            Modality::Genetic => Modality::Pet,
            Modality::Pet => Modality::Genetic,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nonempty subset of modalities, written as letters in `CGMP` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub const FULL: ModalitySet = ModalitySet(0b1111);

    pub fn of(mods: &[Modality]) -> Result<Self> {
        let bits = mods.iter().fold(0u8, |acc, m| acc | 1 << m.index());
        if bits == 0 {
            return Err(Error::Variant("modality set must not be empty".into()));
        }
        Ok(ModalitySet(bits))
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.iter().try_for_each(|m| write!(f, "{}", m.code()))
    }
}

impl FromStr for ModalitySet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut mods = Vec::new();
        for ch in s.chars() {
            let m = match ch.to_ascii_uppercase() {
                'C' => Modality::Clinical,
                'G' => Modality::Genetic,
                'M' => Modality::Mri,
                'P' => Modality::Pet,
                other => {
                    return Err(Error::Variant(format!(
                        "unknown modality letter '{other}' (expected C, G, M or P)"
                    )))
                }
            };
            mods.push(m);
        }
        ModalitySet::of(&mods)
    }
}

impl TryFrom<String> for ModalitySet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModalitySet> for String {
    fn from(m: ModalitySet) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Numerical modalities query imaging modalities (C→M, G→P) only.
    Asymmetric,
    /// Both directions per pair.
    Symmetric,
    /// Imaging tokens concatenated first, then queried by concatenated C,G.
    ConcatImagingThenCross,
    /// Encoder tokens concatenated and passed on unchanged.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeepMode {
    Parallel,
    FourierOnly,
    AttentionOnly,
    None,
}

impl FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymmetric" => Ok(FusionMode::Asymmetric),
            "symmetric" => Ok(FusionMode::Symmetric),
            "concat-imaging-then-cross" | "mcad" => Ok(FusionMode::ConcatImagingThenCross),
            "none" => Ok(FusionMode::None),
            _ => Err(Error::Config(format!("unknown fusion mode '{s}'"))),
        }
    }
}

impl FromStr for DeepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(DeepMode::Parallel),
            "fourier-only" => Ok(DeepMode::FourierOnly),
            "attention-only" => Ok(DeepMode::AttentionOnly),
            "none" => Ok(DeepMode::None),
            _ => Err(Error::Config(format!(
                "unknown deep-extract mode '{s}' (expected parallel, fourier-only, attention-only or none)"
            ))),
        }
    }
}

/// Which architecture blocks are active.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub modalities: ModalitySet,
    pub fusion: FusionMode,
    pub deep: DeepMode,
}

impl VariantSpec {
    pub fn new(name: impl Into<String>, modalities: ModalitySet, fusion: FusionMode, deep: DeepMode) -> Self {
        VariantSpec { name: name.into(), modalities, fusion, deep }
    }

    pub fn acmca() -> Self {
        Self::new("ACMCA", ModalitySet::FULL, FusionMode::Asymmetric, DeepMode::Parallel)
    }

    /// Cross-attention removed.
    pub fn wcm() -> Self {
        Self::new("ACMCA-WCM", ModalitySet::FULL, FusionMode::None, DeepMode::Parallel)
    }

    /// Deep feature extraction removed.
    pub fn wde() -> Self {
        Self::new("ACMCA-WDE", ModalitySet::FULL, FusionMode::Asymmetric, DeepMode::None)
    }

    /// Fourier branch masked.
    pub fn wfnet() -> Self {
        Self::new("ACMCA-WFnet", ModalitySet::FULL, FusionMode::Asymmetric, DeepMode::AttentionOnly)
    }

    /// Self-attention branch masked.
    pub fn wt() -> Self {
        Self::new("ACMCA-WT", ModalitySet::FULL, FusionMode::Asymmetric, DeepMode::FourierOnly)
    }

    pub fn symmetric() -> Self {
        Self::new("ACMCA-CM", ModalitySet::FULL, FusionMode::Symmetric, DeepMode::Parallel)
    }

    pub fn mcad() -> Self {
        Self::new("ACMCA-MCAD", ModalitySet::FULL, FusionMode::ConcatImagingThenCross, DeepMode::Parallel)
    }

    /// Plain concatenation of encoder features straight into the classifier.
    pub fn concat_baseline() -> Self {
        Self::new("Concat", ModalitySet::FULL, FusionMode::None, DeepMode::None)
    }

    /// Runs on a modality subset: single modalities skip fusion, complete
    /// numerical/imaging pairs use asymmetric fusion.
    pub fn modality_subset(mods: ModalitySet) -> Self {
        let fusion = if mods.len() == 1 { FusionMode::None } else { FusionMode::Asymmetric };
        let name = mods.to_string();
        Self::new(name, mods, fusion, DeepMode::Parallel)
    }

    /// Looks up a named variant (`acmca`, `wcm`, `wde`, `wfnet`, `wt`,
    /// `symmetric`, `mcad`, `concat`) or a modality subset such as `CM`.
    pub fn by_name(name: &str) -> Result<Self> {
        let v = match name.to_ascii_lowercase().as_str() {
            "acmca" | "full" => Self::acmca(),
            "wcm" | "acmca-wcm" => Self::wcm(),
            "wde" | "acmca-wde" => Self::wde(),
            "wfnet" | "acmca-wfnet" => Self::wfnet(),
            "wt" | "acmca-wt" => Self::wt(),
            "symmetric" | "acmca-cm" => Self::symmetric(),
            "mcad" | "acmca-mcad" => Self::mcad(),
            "concat" | "concat-baseline" => Self::concat_baseline(),
            other => match other.parse::<ModalitySet>() {
                Ok(mods) => Self::modality_subset(mods),
                Err(_) => {
                    return Err(Error::Config(format!(
                        "unknown variant '{name}'; expected one of acmca, wcm, wde, wfnet, wt, \
                         symmetric, mcad, concat or a modality subset like CM"
                    )))
                }
            },
        };
        Ok(v)
    }

    /// Checks that the fusion mode can run on the active modalities.
    pub fn validate(&self) -> Result<()> {
        let mods = self.modalities;
        match self.fusion {
            FusionMode::None => Ok(()),
            FusionMode::Asymmetric | FusionMode::Symmetric => {
                if let Some(lonely) = mods.iter().find(|m| !mods.contains(m.partner())) {
                    return Err(Error::Variant(format!(
                        "{} fusion pairs clinical with MRI and genetic with PET; {lonely} is active \
                         without {}. Use a complete pair (CM, GP, CGMP) or fusion mode none",
                        fusion_label(self.fusion),
                        lonely.partner()
                    )));
                }
                Ok(())
            }
            FusionMode::ConcatImagingThenCross => {
                if mods != ModalitySet::FULL {
                    return Err(Error::Variant(format!(
                        "concat-imaging-then-cross fusion needs all four modalities, got {mods}; \
                         use asymmetric fusion on a two-modality pair or fusion mode none"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn fusion_label(f: FusionMode) -> &'static str {
    match f {
        FusionMode::Asymmetric => "asymmetric",
        FusionMode::Symmetric => "symmetric",
        FusionMode::ConcatImagingThenCross => "concat-imaging-then-cross",
        FusionMode::None => "none",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_set_round_trips_through_letters() {
        let s: ModalitySet = "pc".parse().unwrap();
        assert_eq!(s.to_string(), "CP");
        assert_eq!(s.len(), 2);
        assert!("".parse::<ModalitySet>().is_err());
        assert!("CX".parse::<ModalitySet>().is_err());
    }

    #[test]
    fn unpaired_modality_rejected_for_cross_fusion() {
        let v = VariantSpec::new("x", "CG".parse().unwrap(), FusionMode::Asymmetric, DeepMode::Parallel);
        let msg = v.validate().unwrap_err().to_string();
        assert!(msg.contains("fusion mode none"), "{msg}");
        assert!(VariantSpec::modality_subset("CM".parse().unwrap()).validate().is_ok());
        assert!(VariantSpec::modality_subset("G".parse().unwrap()).validate().is_ok());
        let m = VariantSpec::new("m", "CM".parse().unwrap(), FusionMode::ConcatImagingThenCross, DeepMode::None);
        assert!(m.validate().is_err());
    }

    #[test]
    fn named_variants_resolve() {
        for n in ["acmca", "wcm", "wde", "wfnet", "wt", "symmetric", "mcad", "concat", "GP"] {
            VariantSpec::by_name(n).unwrap().validate().unwrap();
        }
        assert!(VariantSpec::by_name("bogus").is_err());
        assert_eq!(VariantSpec::wde().deep, DeepMode::None);
    }
}
