mod common;

use acmca::data::{
    encode_alleles, filter_snps, hwe_test, intersect_cohort, parse_clinical, prepare_cohort, read_clinical,
    read_features, read_genotypes, select_top_k_variance, split_stratified, synth_cohort, write_clinical,
    write_features, write_genotypes, AlleleMatrix, Call, CohortTables, FilterReason, FilterThresholds,
    GenotypeTable, PrepareOptions, SignalLayout, SiteMeta, SynthSpec,
};
use acmca::{Error, Tensor};
use proptest::prelude::*;

fn site(id: &str) -> SiteMeta {
    SiteMeta { site: format!("1:{id}"), id: id.into(), ref_allele: "A".into(), alt_allele: "G".into() }
}

/// One site per entry: `(hom-ref, het, hom-alt, missing)` counts, all GQ 60.
fn table_from_counts(sites: &[(usize, usize, usize, usize)]) -> GenotypeTable {
    let n = sites[0].0 + sites[0].1 + sites[0].2 + sites[0].3;
    let calls = sites
        .iter()
        .map(|&(a, b, c, m)| {
            assert_eq!(a + b + c + m, n);
            let mut row = Vec::new();
            row.extend(std::iter::repeat_n(Call::new(0, Some(60)), a));
            row.extend(std::iter::repeat_n(Call::new(1, Some(60)), b));
            row.extend(std::iter::repeat_n(Call::new(2, Some(60)), c));
            row.extend(std::iter::repeat_n(Call::MISSING, m));
            row
        })
        .collect();
    GenotypeTable {
        sites: (0..sites.len()).map(|i| site(&format!("rs{i}"))).collect(),
        subjects: (0..n).map(|i| format!("S{i:03}")).collect(),
        calls,
    }
}

/// Expected genotype counts under Hardy-Weinberg, computed directly.
fn hwe_expected(counts: [usize; 3]) -> [f64; 3] {
    let n = counts.iter().sum::<usize>() as f64;
    let p = (2.0 * counts[0] as f64 + counts[1] as f64) / (2.0 * n);
    [n * p * p, 2.0 * n * p * (1.0 - p), n * (1.0 - p) * (1.0 - p)]
}

#[test]
fn equilibrium_site_is_retained_with_unit_p() {
    let counts = [36, 48, 16];
    assert_eq!(hwe_expected(counts), [36.0, 48.0, 16.0]);
    let (chi2, p) = hwe_test(counts);
    assert!(chi2.abs() < 1e-12);
    assert!((p - 1.0).abs() < 1e-12);
    let (kept, report) = filter_snps(&table_from_counts(&[(36, 48, 16, 0)]), &FilterThresholds::default());
    assert_eq!(kept.n_sites(), 1);
    assert!(report.removed.is_empty());
}

#[test]
fn chi_square_statistic_matches_direct_sum() {
    for counts in [[50, 30, 20], [10, 80, 10], [70, 20, 10], [5, 5, 90]] {
        let e = hwe_expected(counts);
        let want: f64 = counts.iter().zip(e).map(|(&o, e)| (o as f64 - e).powi(2) / e).sum();
        assert!((hwe_test(counts).0 - want).abs() < 1e-9 * want.max(1.0));
    }
}

#[test]
fn rare_and_gappy_sites_are_removed() {
    // alt frequency 1/200 = 0.005 < 0.01; 6 of 100 calls missing > 5%;
    // exactly 5 missing is still allowed
    let t = table_from_counts(&[(99, 1, 0, 0), (45, 40, 9, 6), (46, 40, 9, 5)]);
    let (kept, report) = filter_snps(&t, &FilterThresholds::default());
    assert_eq!(kept.sites.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), vec!["rs2"]);
    assert!(matches!(report.removed[0], (ref id, FilterReason::Maf { maf }) if id == "rs0" && (maf - 0.005).abs() < 1e-15));
    assert!(matches!(report.removed[1], (ref id, FilterReason::Missingness { rate }) if id == "rs1" && (rate - 0.06).abs() < 1e-15));
}

#[test]
fn strong_heterozygote_excess_fails_hwe() {
    let (kept, report) = filter_snps(&table_from_counts(&[(10, 80, 10, 0)]), &FilterThresholds::default());
    assert_eq!(kept.n_sites(), 0);
    assert!(matches!(report.removed[0].1, FilterReason::Hwe { p } if p < 0.05));
}

#[test]
fn allele_encoding_and_mode_imputation() {
    let t = table_from_counts(&[(5, 3, 1, 2), (1, 2, 6, 2)]);
    let m = encode_alleles(&t).unwrap();
    // subjects 9 and 10 are missing at both sites
    let col = |j: usize| (0..11).map(|i| m.values.at(&[i, j])).collect::<Vec<_>>();
    let counting_mode = |v: &[f64]| {
        let mut c = [0; 3];
        v.iter().take(9).for_each(|&x| c[x as usize] += 1);
        (0..3).max_by_key(|&k| (c[k], std::cmp::Reverse(k))).unwrap() as f64
    };
    assert_eq!(col(0)[3..8], [0.0, 0.0, 1.0, 1.0, 1.0]);
    assert_eq!(col(0)[9], counting_mode(&col(0)));
    assert_eq!(col(0)[9], 0.0);
    assert_eq!(col(1)[10], 2.0);
}

fn alleles(rows: &[Vec<f64>]) -> AlleleMatrix {
    AlleleMatrix {
        subjects: (0..rows.len()).map(|i| format!("s{i}")).collect(),
        site_ids: (0..rows[0].len()).map(|j| format!("rs{j}")).collect(),
        values: Tensor::from_rows(rows).unwrap(),
    }
}

fn variance(m: &AlleleMatrix, j: usize) -> f64 {
    let n = m.values.shape()[0];
    let col: Vec<f64> = (0..n).map(|i| m.values.at(&[i, j])).collect();
    let mean = col.iter().sum::<f64>() / n as f64;
    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
}

#[test]
fn constant_site_never_beats_a_varying_one_and_full_k_is_identity() {
    let m = alleles(&[vec![1.0, 0.0, 2.0, 1.0, 0.0], vec![1.0, 2.0, 2.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 0.0, 2.0]]);
    let top = select_top_k_variance(&m, 4).unwrap();
    assert!(!top.site_ids.contains(&"rs0".to_string()));
    assert_eq!(select_top_k_variance(&m, 5).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_matches_brute_force_ranking(
        rows in prop::collection::vec(prop::collection::vec(0u8..3, 5), 2..9),
        k in 1usize..=5,
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let m = alleles(&rows);
        let top = select_top_k_variance(&m, k).unwrap();
        let kept: Vec<usize> = top.site_ids.iter().map(|s| s[2..].parse().unwrap()).collect();
        prop_assert_eq!(kept.len(), k);
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        for j in (0..5).filter(|j| !kept.contains(j)) {
            for &i in &kept {
                let (vi, vj) = (variance(&m, i), variance(&m, j));
                prop_assert!(vi > vj + 1e-12 || ((vi - vj).abs() <= 1e-12 && i < j));
            }
        }
    }

    #[test]
    fn filter_is_idempotent_and_encoding_is_ternary(
        sites in prop::collection::vec(prop::collection::vec((0u8..4, 0u32..100), 30), 1..8),
    ) {
        let n = 30;
        let t = GenotypeTable {
            sites: (0..sites.len()).map(|i| site(&format!("rs{i}"))).collect(),
            subjects: (0..n).map(|i| format!("S{i}")).collect(),
            calls: sites
                .iter()
                .map(|row| row.iter().map(|&(g, q)| if g == 3 { Call::MISSING } else { Call::new(g, Some(q)) }).collect())
                .collect(),
        };
        let th = FilterThresholds { max_missing: 0.5, ..Default::default() };
        let (once, _) = filter_snps(&t, &th);
        let (twice, report) = filter_snps(&once, &th);
        prop_assert_eq!(&once, &twice);
        prop_assert!(report.removed.is_empty());
        if once.n_sites() > 0 {
            let m = encode_alleles(&once).unwrap();
            prop_assert!(m.values.data().iter().all(|v| [0.0, 1.0, 2.0].contains(v)));
        }
    }

    #[test]
    fn intersection_is_bounded_by_smallest_input(
        a in prop::collection::btree_set(0u8..40, 1..30),
        b in prop::collection::btree_set(0u8..40, 1..30),
        c in prop::collection::btree_set(0u8..40, 1..30),
    ) {
        let ids = |s: &std::collections::BTreeSet<u8>| s.iter().map(|v| format!("id{v:02}")).collect::<Vec<_>>();
        let (ia, ib, ic) = (ids(&a), ids(&b), ids(&c));
        let oracle: Vec<String> = ia.iter().filter(|x| ib.contains(x) && ic.contains(x)).cloned().collect();
        match intersect_cohort(&[("a", &ia), ("b", &ib), ("c", &ic)]) {
            Ok(got) => {
                prop_assert!(got.len() <= ia.len().min(ib.len()).min(ic.len()));
                prop_assert_eq!(got, oracle);
            }
            Err(e) => {
                prop_assert!(oracle.is_empty());
                prop_assert!(matches!(e, Error::Data(_)));
            }
        }
    }

    #[test]
    fn split_partitions_and_preserves_proportions(
        counts in prop::collection::vec(2usize..40, 3),
        frac in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = (0..3).flat_map(|c| std::iter::repeat_n(c, counts[c])).collect();
        let (tr, te) = split_stratified(&labels, frac, seed).unwrap();
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in 0..3 {
            let got = te.iter().filter(|&&i| labels[i] == c).count() as f64;
            prop_assert!((got - counts[c] as f64 * frac).abs() <= 1.0);
        }
    }
}

#[test]
fn staged_partial_overlap_matches_hand_set() {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let clinical = s(&["p1", "p2", "p3", "p4", "p5"]);
    let genetic = s(&["p5", "p3", "p2", "p9"]);
    let mri = s(&["p2", "p3", "p5", "p7"]);
    let pet = s(&["p3", "p5", "p2", "p1"]);
    let got = intersect_cohort(&[("c", &clinical), ("g", &genetic), ("m", &mri), ("p", &pet)]).unwrap();
    assert_eq!(got, s(&["p2", "p3", "p5"]));
}

#[test]
fn cohort_sized_split_gives_expected_test_counts() {
    let labels: Vec<usize> = [165, 39, 35].iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    let (_, te) = split_stratified(&labels, 0.2, 3).unwrap();
    let per: Vec<usize> = (0..3).map(|c| te.iter().filter(|&&i| labels[i] == c).count()).collect();
    assert_eq!(per, vec![33, 8, 7]);
}

#[test]
fn ninety_balanced_samples_split_six_each() {
    let labels: Vec<usize> = (0..90).map(|i| i / 30).collect();
    let (tr, te) = split_stratified(&labels, 0.2, 0).unwrap();
    assert_eq!(tr.len(), 72);
    for c in 0..3 {
        assert_eq!(te.iter().filter(|&&i| labels[i] == c).count(), 6);
    }
}

#[test]
fn three_row_clinical_file_parses() {
    let csv = "subject_id,gender,age,moca,mmse,cdr,faq,gds,label\n\
               a,M,70,26,29,0,0,1,CN\nb,F,74,22,25,0.5,4,2,MCI\nc,M,81,15,18,1,18,4,AD\n";
    assert_eq!(parse_clinical(csv.as_bytes(), "x").unwrap().len(), 3);
}

fn write_all(t: &CohortTables, dir: &std::path::Path) -> Vec<Vec<u8>> {
    write_clinical(&t.clinical, &dir.join("clinical.csv")).unwrap();
    write_genotypes(&t.genotypes, &dir.join("genotypes.tsv")).unwrap();
    write_features(&t.mri, &dir.join("mri.csv")).unwrap();
    write_features(&t.pet, &dir.join("pet.csv")).unwrap();
    ["clinical.csv", "genotypes.tsv", "mri.csv", "pet.csv"].iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
}

#[test]
fn same_seed_gives_byte_identical_files_and_file_round_trip_is_lossless() {
    let spec = SynthSpec { n_per_class: 12, snp_count: 80, img_width: 8, seed: 21, ..Default::default() };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let t = synth_cohort(&spec).unwrap();
    assert_eq!(write_all(&t, d1.path()), write_all(&synth_cohort(&spec).unwrap(), d2.path()));

    let reread = CohortTables {
        clinical: read_clinical(&d1.path().join("clinical.csv")).unwrap(),
        genotypes: read_genotypes(&d1.path().join("genotypes.tsv")).unwrap(),
        mri: read_features(&d1.path().join("mri.csv")).unwrap(),
        pet: read_features(&d1.path().join("pet.csv")).unwrap(),
    };
    assert_eq!(reread, t);
    let opts = PrepareOptions::default();
    assert_eq!(prepare_cohort(&reread, &opts).unwrap(), prepare_cohort(&t, &opts).unwrap());
}

#[test]
fn separable_cohort_is_learnable_by_nearest_centroid() {
    for seed in 0..3 {
        let acc = common::synthetic_centroid_accuracy(&SynthSpec { seed, ..Default::default() });
        assert!(acc > 0.95, "seed {seed}: nearest-centroid accuracy {acc}");
    }
}

#[test]
fn no_signal_cohort_sits_at_chance() {
    let accs: Vec<f64> = (0..5)
        .map(|seed| common::synthetic_centroid_accuracy(&SynthSpec { seed, class_separation: 0.0, ..Default::default() }))
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.1, "mean chance accuracy {mean} ({accs:?})");
}

#[test]
fn centroid_accuracy_is_monotone_in_separation() {
    let seps = [0.0, 0.5, 1.0, 2.0, 3.0];
    for seed in 0..5 {
        let accs: Vec<f64> = seps
            .iter()
            .map(|&s| common::synthetic_centroid_accuracy(&SynthSpec { seed, class_separation: s, ..Default::default() }))
            .collect();
        for w in accs.windows(2) {
            assert!(w[0] <= w[1] + 0.05, "seed {seed}: {accs:?}");
        }
    }
}

#[test]
fn split_pairs_layout_needs_both_pairs() {
    use acmca::data::{split_stratified as split, standardize_clinical};
    let spec = SynthSpec { signal: SignalLayout::SplitPairs, ..Default::default() };
    let cohort = prepare_cohort(&synth_cohort(&spec).unwrap(), &PrepareOptions::default()).unwrap();
    let (tr, te) = split(&cohort.batch.labels, 0.2, 0).unwrap();
    let mut train = cohort.batch.select(&tr).unwrap();
    let mut test = cohort.batch.select(&te).unwrap();
    standardize_clinical(&mut train, &mut test).unwrap();
    let acc_of = |mods: &[acmca::model::Modality]| {
        let rows = |b: &acmca::data::ModalBatch| {
            (0..b.len())
                .map(|i| mods.iter().flat_map(|&m| b.modality(m).row(i).to_vec()).collect::<Vec<f64>>())
                .collect::<Vec<_>>()
        };
        common::nearest_centroid_accuracy(&rows(&train), &train.labels, &rows(&test), &test.labels)
    };
    use acmca::model::Modality::*;
    let full = acc_of(&[Clinical, Genetic, Mri, Pet]);
    for single in [Clinical, Mri, Pet] {
        let a = acc_of(&[single]);
        assert!(a < 0.8, "{single} alone reaches {a}");
        assert!(full > a, "{single}: {a} vs full {full}");
    }
    assert!(full > 0.9, "full {full}");
}
