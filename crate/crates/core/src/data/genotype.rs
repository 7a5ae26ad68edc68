//! Genotype tables, SNP quality control and additive allele encoding.
//!
//! The on-disk layout is tab separated. Leading `#` lines describe sites
//! (`#site  id  ref  alt`, the first being the column header), followed by a
//! `subject_id  <site id>...` header and one row per subject whose cells are
//! `GT:GQ` (for example `0/1:35`), `GT` alone, or `./.` for a missing call.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub site: String,
    pub id: String,
    pub ref_allele: String,
    pub alt_allele: String,
}

/// One genotype call: alternate-allele count (`None` when missing) and
/// genotype quality when reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Call {
    pub alt_count: Option<u8>,
    pub gq: Option<u32>,
}

impl Call {
    pub const MISSING: Call = Call { alt_count: None, gq: None };

    pub fn new(alt_count: u8, gq: Option<u32>) -> Call {
        Call { alt_count: Some(alt_count), gq }
    }

    fn parse(cell: &str) -> Option<Call> {
        let mut parts = cell.trim().split(':');
        let gt = parts.next()?;
        let gq = match parts.next() {
            None | Some("") | Some(".") => None,
            Some(q) => Some(q.parse::<u32>().ok()?),
        };
        let alleles: Vec<&str> = gt.split(['/', '|']).collect();
        if alleles.len() != 2 {
            return None;
        }
        if alleles.iter().all(|a| *a == ".") {
            return Some(Call { alt_count: None, gq });
        }
        let mut count = 0u8;
        for a in alleles {
            match a {
                "0" => {}
                "1" => count += 1,
                _ => return None,
            }
        }
        Some(Call { alt_count: Some(count), gq })
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gt = match self.alt_count {
            None => "./.",
            Some(0) => "0/0",
            Some(1) => "0/1",
            Some(_) => "1/1",
        };
        match self.gq {
            Some(q) => write!(f, "{gt}:{q}"),
            None => f.write_str(gt),
        }
    }
}

/// Calls stored site-major: `calls[site][subject]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenotypeTable {
    pub sites: Vec<SiteMeta>,
    pub subjects: Vec<String>,
    pub calls: Vec<Vec<Call>>,
}

impl GenotypeTable {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Keeps only the listed subjects, in the given order.
    pub fn restrict_subjects(&self, ids: &[String]) -> Result<GenotypeTable> {
        let pos: HashMap<&str, usize> = self.subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx = ids
            .iter()
            .map(|id| pos.get(id.as_str()).copied().ok_or_else(|| Error::Data(format!("subject {id} has no genotypes"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(GenotypeTable {
            sites: self.sites.clone(),
            subjects: ids.to_vec(),
            calls: self.calls.iter().map(|row| idx.iter().map(|&i| row[i]).collect()).collect(),
        })
    }
}

pub fn read_genotypes(path: &Path) -> Result<GenotypeTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_genotypes(file, &path.display().to_string())
}

pub fn parse_genotypes<R: Read>(reader: R, source: &str) -> Result<GenotypeTable> {
    let mut meta: HashMap<String, SiteMeta> = HashMap::new();
    let mut header: Option<Vec<String>> = None;
    let mut table = GenotypeTable::default();
    let mut seen_subjects: HashMap<String, usize> = HashMap::new();
    let mut meta_header_seen = false;

    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::schema(source, format!("line {lineno}: {e}")))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let f: Vec<&str> = rest.split('\t').map(str::trim).collect();
            if !meta_header_seen && f.first().is_some_and(|s| s.eq_ignore_ascii_case("site")) {
                meta_header_seen = true;
                continue;
            }
            if f.len() != 4 {
                return Err(Error::schema(source, format!("line {lineno}: site line needs 4 fields (site, id, ref, alt)")));
            }
            meta.insert(
                f[1].to_string(),
                SiteMeta { site: f[0].into(), id: f[1].into(), ref_allele: f[2].into(), alt_allele: f[3].into() },
            );
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let Some(cols) = &header else {
            if !fields[0].trim().eq_ignore_ascii_case("subject_id") {
                return Err(Error::schema(source, format!("line {lineno}: expected a subject_id header row")));
            }
            let cols: Vec<String> = fields[1..].iter().map(|s| s.trim().to_string()).collect();
            if cols.is_empty() {
                return Err(Error::schema(source, "header lists no sites"));
            }
            table.sites = cols
                .iter()
                .map(|id| {
                    meta.get(id).cloned().unwrap_or_else(|| SiteMeta {
                        site: id.clone(),
                        id: id.clone(),
                        ref_allele: "?".into(),
                        alt_allele: "?".into(),
                    })
                })
                .collect();
            table.calls = vec![Vec::new(); cols.len()];
            header = Some(cols);
            continue;
        };
        if fields.len() != cols.len() + 1 {
            return Err(Error::schema(
                source,
                format!("line {lineno}: {} genotype cells for {} sites", fields.len() - 1, cols.len()),
            ));
        }
        let calls = fields[1..]
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                Call::parse(cell).ok_or_else(|| {
                    Error::schema(source, format!("line {lineno}: bad genotype '{cell}' at site {}", cols[j]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let subject = fields[0].trim().to_string();
        if let Some(&at) = seen_subjects.get(&subject) {
            log::warn!("{source}: line {lineno}: duplicate subject {subject}; keeping the latest row");
            for (site, c) in calls.into_iter().enumerate() {
                table.calls[site][at] = c;
            }
        } else {
            seen_subjects.insert(subject.clone(), table.subjects.len());
            table.subjects.push(subject);
            for (site, c) in calls.into_iter().enumerate() {
                table.calls[site].push(c);
            }
        }
    }
    if header.is_none() {
        return Err(Error::schema(source, "no subject_id header row found"));
    }
    Ok(table)
}

pub fn write_genotypes(table: &GenotypeTable, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "#site\tid\tref\talt").map_err(io)?;
    for s in &table.sites {
        writeln!(w, "#{}\t{}\t{}\t{}", s.site, s.id, s.ref_allele, s.alt_allele).map_err(io)?;
    }
    let ids: Vec<&str> = table.sites.iter().map(|s| s.id.as_str()).collect();
    writeln!(w, "subject_id\t{}", ids.join("\t")).map_err(io)?;
    for (j, subject) in table.subjects.iter().enumerate() {
        let cells: Vec<String> = table.calls.iter().map(|row| row[j].to_string()).collect();
        writeln!(w, "{subject}\t{}", cells.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterThresholds {
    /// Calls below this genotype quality are treated as missing.
    pub min_gq: u32,
    /// Sites whose missing-call fraction exceeds this are dropped.
    pub max_missing: f64,
    /// Sites whose minor allele frequency is below this are dropped.
    pub min_maf: f64,
    /// Sites whose Hardy-Weinberg p-value is below this are dropped.
    pub hwe_p: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds { min_gq: 20, max_missing: 0.05, min_maf: 0.01, hwe_p: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FilterReason {
    Missingness { rate: f64 },
    Maf { maf: f64 },
    Hwe { p: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_sites: usize,
    pub kept_sites: usize,
    pub masked_calls: usize,
    pub removed: Vec<(String, FilterReason)>,
}

impl FilterReport {
    pub fn removed_by(&self, pick: fn(&FilterReason) -> bool) -> usize {
        self.removed.iter().filter(|(_, r)| pick(r)).count()
    }
}

/// Hardy-Weinberg chi-square test (1 degree of freedom, no continuity
/// correction) from genotype counts `[hom-ref, het, hom-alt]`. Returns
/// `(chi2, p)`; monomorphic or empty sites give `(0, 1)`.
pub fn hwe_test(counts: [usize; 3]) -> (f64, f64) {
    let n = (counts[0] + counts[1] + counts[2]) as f64;
    if n == 0.0 {
        return (0.0, 1.0);
    }
    let p = (2 * counts[0] + counts[1]) as f64 / (2.0 * n);
    let q = 1.0 - p;
    let expected = [n * p * p, 2.0 * n * p * q, n * q * q];
    if expected.iter().any(|&e| e <= 0.0) {
        return (0.0, 1.0);
    }
    let chi2: f64 = counts.iter().zip(expected).map(|(&o, e)| (o as f64 - e).powi(2) / e).sum();
    if chi2 <= 0.0 {
        return (chi2.max(0.0), 1.0);
    }
    (chi2, statrs::function::gamma::gamma_ur(0.5, chi2 / 2.0))
}

fn genotype_counts(row: &[Call]) -> [usize; 3] {
    let mut c = [0; 3];
    for call in row {
        if let Some(a) = call.alt_count {
            c[a.min(2) as usize] += 1;
        }
    }
    c
}

/// Applies the quality-control cascade in order: mask low-GQ calls, then
/// drop sites failing missingness, MAF and HWE. A call without GQ passes
/// the quality mask. Running the filter on its own output changes nothing.
pub fn filter_snps(table: &GenotypeTable, t: &FilterThresholds) -> (GenotypeTable, FilterReport) {
    let mut report = FilterReport { input_sites: table.n_sites(), ..Default::default() };
    let mut out = GenotypeTable { subjects: table.subjects.clone(), ..Default::default() };
    if table.n_sites() == 0 || table.n_subjects() == 0 {
        log::warn!("genotype table is empty; nothing to filter");
        return (out, report);
    }
    let n = table.n_subjects() as f64;
    for (meta, row) in table.sites.iter().zip(&table.calls) {
        let masked: Vec<Call> = row
            .iter()
            .map(|c| match c.gq {
                Some(q) if q < t.min_gq && c.alt_count.is_some() => {
                    report.masked_calls += 1;
                    Call { alt_count: None, gq: c.gq }
                }
                _ => *c,
            })
            .collect();
        let counts = genotype_counts(&masked);
        let called = counts.iter().sum::<usize>();
        let missing_rate = (masked.len() - called) as f64 / n;
        if missing_rate > t.max_missing {
            report.removed.push((meta.id.clone(), FilterReason::Missingness { rate: missing_rate }));
            continue;
        }
        let alt_freq = (counts[1] + 2 * counts[2]) as f64 / (2.0 * called as f64);
        let maf = alt_freq.min(1.0 - alt_freq);
        if maf < t.min_maf {
            report.removed.push((meta.id.clone(), FilterReason::Maf { maf }));
            continue;
        }
        let (_, p) = hwe_test(counts);
        if p < t.hwe_p {
            report.removed.push((meta.id.clone(), FilterReason::Hwe { p }));
            continue;
        }
        out.sites.push(meta.clone());
        out.calls.push(masked);
    }
    report.kept_sites = out.n_sites();
    (out, report)
}

/// Additive 0/1/2 allele matrix, one row per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlleleMatrix {
    pub subjects: Vec<String>,
    pub site_ids: Vec<String>,
    pub values: Tensor,
}

/// Encodes calls as alternate-allele counts, imputing missing calls with the
/// site's most frequent count (ties go to the smaller count).
pub fn encode_alleles(table: &GenotypeTable) -> Result<AlleleMatrix> {
    if table.n_sites() == 0 || table.n_subjects() == 0 {
        return Err(Error::Data("genotype table has no sites or no subjects to encode".into()));
    }
    let (ns, nv) = (table.n_subjects(), table.n_sites());
    let mut values = vec![0.0; ns * nv];
    for (site, row) in table.calls.iter().enumerate() {
        let counts = genotype_counts(row);
        if counts.iter().sum::<usize>() == 0 {
            return Err(Error::Data(format!("site {} has no called genotypes to impute from", table.sites[site].id)));
        }
        let mode = (0..3).fold(0, |best, k| if counts[k] > counts[best] { k } else { best });
        for (subj, call) in row.iter().enumerate() {
            values[subj * nv + site] = call.alt_count.map_or(mode, |a| a.min(2) as usize) as f64;
        }
    }
    Ok(AlleleMatrix {
        subjects: table.subjects.clone(),
        site_ids: table.sites.iter().map(|s| s.id.clone()).collect(),
        values: Tensor::new(&[ns, nv], values)?,
    })
}

/// Keeps the `k` columns with the highest population variance (ties go to
/// the lower index), preserving their original order.
pub fn select_top_k_variance(m: &AlleleMatrix, k: usize) -> Result<AlleleMatrix> {
    let (ns, nv) = (m.values.shape()[0], m.values.shape()[1]);
    if k == 0 || k > nv {
        return Err(Error::Usage(format!("cannot keep {k} of {nv} SNP columns (need 1..={nv})")));
    }
    // n²·variance as n·Σx² − (Σx)², exact for integer allele counts so that
    // equal variances really tie and fall back to the site index
    let var: Vec<f64> = (0..nv)
        .map(|j| {
            let (s, s2) = (0..ns).map(|i| m.values.data()[i * nv + j]).fold((0.0, 0.0), |(s, s2), v| (s + v, s2 + v * v));
            ns as f64 * s2 - s * s
        })
        .collect();
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    let data = (0..ns).flat_map(|i| keep.iter().map(move |&j| (i, j))).map(|(i, j)| m.values.data()[i * nv + j]);
    Ok(AlleleMatrix {
        subjects: m.subjects.clone(),
        site_ids: keep.iter().map(|&j| m.site_ids[j].clone()).collect(),
        values: Tensor::new(&[ns, k], data.collect())?,
    })
}
