//! Deterministic synthetic cohorts.
//!
//! Every modality carries Gaussian class clusters whose means sit on a
//! simplex with pairwise distance `sqrt(2) * class_separation`. Noise shares a
//! per-subject latent factor across modalities (`correlation`), and the
//! genotype table includes junk sites and low-quality calls so the QC
//! filters have something to remove.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::clinical::{ClinicalRecord, ClinicalTable, Gender};
use super::features::FeatureVectorTable;
use super::genotype::{Call, GenotypeTable, SiteMeta};
use super::Label;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LATENT_DIM: usize = 4;
const SIGNAL_SITE_FRACTION: f64 = 0.3;
const RARE_SITE_FRACTION: f64 = 0.05;
const GAPPY_SITE_FRACTION: f64 = 0.04;
const HWE_SITE_FRACTION: f64 = 0.03;
const LOW_GQ_RATE: f64 = 0.005;
const BACKGROUND_MISSING_RATE: f64 = 0.003;
const GENOTYPE_EFFECT: f64 = 0.2;

// (mean, sd) used to place the six numeric clinical measures on a
// plausible scale.
const CLINICAL_SCALE: [(f64, f64); 6] = [(72.0, 7.0), (24.0, 3.0), (27.0, 2.0), (0.5, 0.4), (5.0, 5.0), (2.0, 1.5)];

/// Where the class signal lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalLayout {
    /// Every modality separates all three classes.
    #[default]
    Shared,
    /// Clinical and MRI separate CN from the rest; genetic and PET separate
    /// AD from the rest. Only the combination identifies all three classes.
    SplitPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_per_class: usize,
    pub snp_count: usize,
    pub img_width: usize,
    pub class_separation: f64,
    /// Weight of the shared latent factor in each modality's noise, in [0, 1).
    pub correlation: f64,
    pub signal: SignalLayout,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_per_class: 60,
            snp_count: 200,
            img_width: 32,
            class_separation: 3.0,
            correlation: 0.3,
            signal: SignalLayout::Shared,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::Config(format!("class separation must be >= 0, got {}", self.class_separation)));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::Config(format!("correlation must lie in [0, 1), got {}", self.correlation)));
        }
        if self.n_per_class < 2 {
            return Err(Error::Config("synthetic cohorts need at least 2 subjects per class".into()));
        }
        if self.img_width < 3 {
            return Err(Error::Config("imaging width must be at least 3".into()));
        }
        if self.snp_count == 0 {
            return Err(Error::Config("snp count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortTables {
    pub clinical: ClinicalTable,
    pub genotypes: GenotypeTable,
    pub mri: FeatureVectorTable,
    pub pet: FeatureVectorTable,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `width x k` matrix with orthonormal columns (Gram-Schmidt on Gaussians).
fn orthonormal(rng: &mut ChaCha8Rng, width: usize, k: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..width).map(|_| normal(rng)).collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    cols
}

/// Class means in simplex coordinates, pairwise distance `sqrt(2) * sep`.
fn class_coords(layout_target: Option<usize>, sep: f64) -> [[f64; 3]; 3] {
    match layout_target {
        // e_c - 1/3: the centred standard simplex
        None => std::array::from_fn(|c| std::array::from_fn(|k| sep * (f64::from(u8::from(c == k)) - 1.0 / 3.0))),
        // one class against the rest along a single axis
        Some(t) => {
            let d = sep * 2f64.sqrt();
            std::array::from_fn(|c| [if c == t { 2.0 * d / 3.0 } else { -d / 3.0 }, 0.0, 0.0])
        }
    }
}

struct ContinuousModality {
    basis: Vec<Vec<f64>>,
    mixing: Vec<Vec<f64>>, // width x LATENT_DIM
    coords: [[f64; 3]; 3],
}

impl ContinuousModality {
    fn new(rng: &mut ChaCha8Rng, width: usize, coords: [[f64; 3]; 3]) -> Self {
        let basis = orthonormal(rng, width, 3);
        let scale = 1.0 / (LATENT_DIM as f64).sqrt();
        let mixing = (0..width).map(|_| (0..LATENT_DIM).map(|_| normal(rng) * scale).collect()).collect();
        ContinuousModality { basis, mixing, coords }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, class: usize, z: &[f64], rho: f64) -> Vec<f64> {
        let width = self.mixing.len();
        let own = (1.0 - rho * rho).sqrt();
        (0..width)
            .map(|i| {
                let mean: f64 = (0..3).map(|k| self.coords[class][k] * self.basis[k][i]).sum();
                let shared: f64 = self.mixing[i].iter().zip(z).map(|(a, b)| a * b).sum();
                mean + rho * shared + own * normal(rng)
            })
            .collect()
    }
}

enum SiteKind {
    Plain,
    Signal([f64; 3]),
    Rare,
    Gappy,
    HweViolating,
}

/// Generates all four tables for `3 * n_per_class` subjects. Subject `i`
/// gets id `SYN{i:04}` and class `i % 3`. Output is a pure function of the spec.
pub fn synth_cohort(spec: &SynthSpec) -> Result<CohortTables> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = 3 * spec.n_per_class;
    let sep = spec.class_separation;
    let (cm_target, gp_target) = match spec.signal {
        SignalLayout::Shared => (None, None),
        SignalLayout::SplitPairs => (Some(Label::CN.index()), Some(Label::AD.index())),
    };
    let clin = ContinuousModality::new(&mut rng, 6, class_coords(cm_target, sep));
    let mri = ContinuousModality::new(&mut rng, spec.img_width, class_coords(cm_target, sep));
    let pet = ContinuousModality::new(&mut rng, spec.img_width, class_coords(gp_target, sep));

    let sites = genotype_sites(&mut rng, spec.snp_count, gp_target);

    let ids: Vec<String> = (0..n).map(|i| format!("SYN{i:04}")).collect();
    let mut clinical = ClinicalTable::default();
    let mut mri_rows = Vec::with_capacity(n * spec.img_width);
    let mut pet_rows = Vec::with_capacity(n * spec.img_width);
    let mut calls = vec![Vec::with_capacity(n); spec.snp_count];
    for (i, id) in ids.iter().enumerate() {
        let class = i % 3;
        let z: Vec<f64> = (0..LATENT_DIM).map(|_| normal(&mut rng)).collect();
        let c = clin.sample(&mut rng, class, &z, spec.correlation);
        let v: [f64; 6] = std::array::from_fn(|k| CLINICAL_SCALE[k].0 + CLINICAL_SCALE[k].1 * c[k]);
        clinical.records.push(ClinicalRecord {
            subject_id: id.clone(),
            gender: if rng.random_bool(0.5) { Gender::F } else { Gender::M },
            age: v[0],
            moca: v[1],
            mmse: v[2],
            cdr: v[3],
            faq: v[4],
            gds: v[5],
            label: Label::from_index(class).expect("class < 3"),
        });
        mri_rows.extend(mri.sample(&mut rng, class, &z, spec.correlation));
        pet_rows.extend(pet.sample(&mut rng, class, &z, spec.correlation));
        for (site, (kind, p0)) in sites.iter().enumerate() {
            calls[site].push(sample_call(&mut rng, kind, *p0, class, sep));
        }
    }
    let site_meta = (0..spec.snp_count)
        .map(|j| {
            let bases = ["A", "C", "G", "T"];
            let r = j % 4;
            SiteMeta {
                site: format!("{}:{}", 1 + j / 1000, 10_000 + 137 * j),
                id: format!("rs{}", 100_000 + j),
                ref_allele: bases[r].into(),
                alt_allele: bases[(r + 2) % 4].into(),
            }
        })
        .collect();
    let w = spec.img_width;
    Ok(CohortTables {
        clinical,
        genotypes: GenotypeTable { sites: site_meta, subjects: ids.clone(), calls },
        mri: FeatureVectorTable { subjects: ids.clone(), values: Tensor::new(&[n, w], mri_rows)? },
        pet: FeatureVectorTable { subjects: ids, values: Tensor::new(&[n, w], pet_rows)? },
    })
}

fn genotype_sites(rng: &mut ChaCha8Rng, count: usize, target: Option<usize>) -> Vec<(SiteKind, f64)> {
    let n_junk = |f: f64| ((count as f64) * f).round() as usize;
    let (n_signal, n_rare, n_gappy, n_hwe) =
        (n_junk(SIGNAL_SITE_FRACTION), n_junk(RARE_SITE_FRACTION), n_junk(GAPPY_SITE_FRACTION), n_junk(HWE_SITE_FRACTION));
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let mut kinds: Vec<Option<SiteKind>> = (0..count).map(|_| None).collect();
    let mut it = order.into_iter();
    for _ in 0..n_signal.min(count) {
        let Some(j) = it.next() else { break };
        let t = target.unwrap_or_else(|| rng.random_range(0..3));
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        kinds[j] = Some(SiteKind::Signal(std::array::from_fn(|c| sign * if c == t { 1.0 } else { -0.5 })));
    }
    let junk = std::iter::repeat_n(0, n_rare).chain(std::iter::repeat_n(1, n_gappy)).chain(std::iter::repeat_n(2, n_hwe));
    for (tag, j) in junk.zip(it) {
        kinds[j] = Some(match tag {
            0 => SiteKind::Rare,
            1 => SiteKind::Gappy,
            _ => SiteKind::HweViolating,
        });
    }
    kinds
        .into_iter()
        .map(|k| (k.unwrap_or(SiteKind::Plain), rng.random_range(0.1..0.5)))
        .collect()
}

fn sample_call(rng: &mut ChaCha8Rng, kind: &SiteKind, p0: f64, class: usize, sep: f64) -> Call {
    let missing_rate = match kind {
        SiteKind::Gappy => 0.12,
        _ => BACKGROUND_MISSING_RATE,
    };
    if rng.random_bool(missing_rate) {
        return Call::MISSING;
    }
    let alt_count = match kind {
        SiteKind::HweViolating => {
            if rng.random_bool(0.9) {
                1
            } else {
                2 * u8::from(rng.random_bool(0.5))
            }
        }
        _ => {
            let p = match kind {
                SiteKind::Rare => 0.002,
                SiteKind::Signal(o) => {
                    let logit = (p0 / (1.0 - p0)).ln() + GENOTYPE_EFFECT * sep * o[class];
                    1.0 / (1.0 + (-logit).exp())
                }
                _ => p0,
            };
            u8::from(rng.random_bool(p)) + u8::from(rng.random_bool(p))
        }
    };
    let gq = if rng.random_bool(LOW_GQ_RATE) { rng.random_range(5..20) } else { rng.random_range(20..100) };
    Call::new(alt_count, Some(gq))
}
