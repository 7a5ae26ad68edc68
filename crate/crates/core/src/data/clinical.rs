use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clinical feature order in encoded vectors: gender (M=0, F=1), then the
/// six z-scored numeric measures.
pub const CLINICAL_FEATURES: [&str; 7] = ["gender", "age", "moca", "mmse", "cdr", "faq", "gds"];

// (csv header, display name)
const COLUMNS: [(&str, &str); 9] = [
    ("subject_id", "subject_id"),
    ("gender", "gender"),
    ("age", "age"),
    ("moca", "MoCA"),
    ("mmse", "MMSE"),
    ("cdr", "CDR"),
    ("faq", "FAQ"),
    ("gds", "GDS"),
    ("label", "label"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    fn parse(s: &str) -> Option<Gender> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Some(Gender::M),
            "f" | "female" => Some(Gender::F),
            _ => None,
        }
    }

    pub fn code(self) -> f64 {
        match self {
            Gender::M => 0.0,
            Gender::F => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub subject_id: String,
    pub gender: Gender,
    pub age: f64,
    pub moca: f64,
    pub mmse: f64,
    pub cdr: f64,
    pub faq: f64,
    pub gds: f64,
    pub label: Label,
}

impl ClinicalRecord {
    /// Raw 7-wide vector: gender code followed by the numeric measures.
    pub fn raw_vector(&self) -> [f64; 7] {
        [self.gender.code(), self.age, self.moca, self.mmse, self.cdr, self.faq, self.gds]
    }
}

/// One row per subject (the latest row wins on duplicates).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClinicalTable {
    pub records: Vec<ClinicalRecord>,
    pub warnings: Vec<String>,
}

impl ClinicalTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, subject: &str) -> Option<&ClinicalRecord> {
        self.records.iter().find(|r| r.subject_id == subject)
    }
}

pub fn read_clinical(path: &Path) -> Result<ClinicalTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_clinical(file, &path.display().to_string())
}

/// Parses the clinical CSV. Rows with unparseable fields are skipped with a
/// row-numbered warning; missing columns and empty input are schema errors.
pub fn parse_clinical<R: Read>(reader: R, source: &str) -> Result<ClinicalTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::schema(source, format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::schema(source, "empty file: no header row"));
    }
    let lookup: HashMap<String, usize> =
        headers.iter().enumerate().map(|(i, h)| (h.to_ascii_lowercase(), i)).collect();
    let mut idx = [0usize; 9];
    for (slot, (key, display)) in idx.iter_mut().zip(COLUMNS) {
        *slot = *lookup
            .get(key)
            .ok_or_else(|| Error::schema(source, format!("missing required column {display}")))?;
    }

    let mut table = ClinicalTable::default();
    let mut position: HashMap<String, usize> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                table.warnings.push(format!("row {row}: unreadable record: {e}"));
                continue;
            }
        };
        match parse_row(&rec, &idx) {
            Ok(r) => {
                if let Some(&at) = position.get(&r.subject_id) {
                    table.warnings.push(format!(
                        "row {row}: duplicate subject {}; keeping the latest record",
                        r.subject_id
                    ));
                    table.records[at] = r;
                } else {
                    position.insert(r.subject_id.clone(), table.records.len());
                    table.records.push(r);
                }
            }
            Err(msg) => table.warnings.push(format!("row {row}: {msg}")),
        }
    }
    if table.records.is_empty() {
        return Err(Error::schema(source, "no valid data rows"));
    }
    for w in &table.warnings {
        log::warn!("{source}: {w}");
    }
    Ok(table)
}

fn parse_row(rec: &csv::StringRecord, idx: &[usize; 9]) -> std::result::Result<ClinicalRecord, String> {
    let field = |k: usize| rec.get(idx[k]).unwrap_or("");
    let num = |k: usize| -> std::result::Result<f64, String> {
        let raw = field(k);
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("unparseable {} value '{raw}'", COLUMNS[k].1))
    };
    let subject_id = field(0).to_string();
    if subject_id.is_empty() {
        return Err("empty subject_id".into());
    }
    let gender = Gender::parse(field(1)).ok_or_else(|| format!("unparseable gender value '{}'", field(1)))?;
    let label = field(8)
        .parse::<Label>()
        .map_err(|_| format!("unparseable label value '{}'", field(8)))?;
    Ok(ClinicalRecord {
        subject_id,
        gender,
        age: num(2)?,
        moca: num(3)?,
        mmse: num(4)?,
        cdr: num(5)?,
        faq: num(6)?,
        gds: num(7)?,
        label,
    })
}

pub fn write_clinical(table: &ClinicalTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(e.to_string()))?;
    let csv_err = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(COLUMNS.map(|c| c.0)).map_err(csv_err)?;
    for r in &table.records {
        let gender = match r.gender {
            Gender::M => "M",
            Gender::F => "F",
        };
        let nums = [r.age, r.moca, r.mmse, r.cdr, r.faq, r.gds].map(|v| v.to_string());
        let mut fields = vec![r.subject_id.clone(), gender.to_string()];
        fields.extend(nums);
        fields.push(r.label.to_string());
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-column statistics for the six numeric clinical measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalStats {
    pub means: [f64; 6],
    pub sds: [f64; 6],
}

impl ClinicalStats {
    /// Fits means and population standard deviations on raw 7-wide clinical
    /// rows. Zero-variance columns get `sd = 1` (centred only) and a warning.
    pub fn fit(raw: &Tensor) -> Result<(ClinicalStats, Vec<String>)> {
        check_clinical_shape(raw)?;
        let n = raw.shape()[0] as f64;
        let mut means = [0.0; 6];
        let mut sds = [0.0; 6];
        let mut warnings = Vec::new();
        for j in 0..6 {
            let col = (0..raw.shape()[0]).map(|i| raw.row(i)[j + 1]);
            let mean = col.clone().sum::<f64>() / n;
            let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            sds[j] = if var > 0.0 {
                var.sqrt()
            } else {
                warnings.push(format!(
                    "clinical column {} has zero variance; passing it through centred",
                    CLINICAL_FEATURES[j + 1]
                ));
                1.0
            };
        }
        Ok((ClinicalStats { means, sds }, warnings))
    }

    /// z-scores the numeric columns; the gender code passes through.
    pub fn apply(&self, raw: &Tensor) -> Result<Tensor> {
        check_clinical_shape(raw)?;
        let mut out = raw.clone();
        for row in out.data_mut().chunks_mut(7) {
            for j in 0..6 {
                row[j + 1] = (row[j + 1] - self.means[j]) / self.sds[j];
            }
        }
        Ok(out)
    }
}

fn check_clinical_shape(raw: &Tensor) -> Result<()> {
    if raw.shape().len() != 2 || raw.shape()[1] != 7 {
        return Err(Error::shape("clinical", format!("expected (n, 7) rows, got {:?}", raw.shape())));
    }
    Ok(())
}

/// Encodes a table into 7-wide normalized vectors, fitting statistics unless
/// `stats` is given (pass the training statistics for a test split).
pub fn normalize_clinical(table: &ClinicalTable, stats: Option<&ClinicalStats>) -> Result<(Tensor, ClinicalStats)> {
    let rows: Vec<Vec<f64>> = table.records.iter().map(|r| r.raw_vector().to_vec()).collect();
    let raw = Tensor::from_rows(&rows)?;
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let (s, warnings) = ClinicalStats::fit(&raw)?;
            warnings.iter().for_each(|w| log::warn!("{w}"));
            s
        }
    };
    Ok((stats.apply(&raw)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "subject_id,gender,age,moca,mmse,cdr,faq,gds,label\n";

    #[test]
    fn parses_well_formed_rows() {
        let csv = format!(
            "{HEADER}S1,M,70,25,28,0,0,1,CN\nS2,F,75.5,20,24,0.5,5,2,MCI\nS3,female,80,15,19,1,15,3,ad\n"
        );
        let t = parse_clinical(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.records[2].label, Label::AD);
        assert_eq!(t.records[1].raw_vector(), [1.0, 75.5, 20.0, 24.0, 0.5, 5.0, 2.0]);
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "subject_id,gender,age,moca,cdr,faq,gds,label\nS1,M,70,25,0,0,1,CN\n";
        let err = parse_clinical(csv.as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        assert!(err.to_string().contains("MMSE"), "{err}");
    }

    #[test]
    fn empty_input_is_schema_error() {
        assert!(matches!(parse_clinical("".as_bytes(), "t"), Err(Error::Schema { .. })));
        assert!(matches!(parse_clinical(HEADER.as_bytes(), "t"), Err(Error::Schema { .. })));
    }

    #[test]
    fn duplicate_subject_keeps_latest() {
        let csv = format!("{HEADER}S1,M,70,25,28,0,0,1,CN\nS2,F,71,25,28,0,0,1,CN\nS1,M,72,18,22,1,9,2,AD\n");
        let t = parse_clinical(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.len(), 2);
        let s1 = t.get("S1").unwrap();
        assert_eq!(s1.age, 72.0);
        assert_eq!(s1.label, Label::AD);
        assert_eq!(t.warnings.len(), 1);
        assert!(t.warnings[0].contains("row 4"));
    }

    #[test]
    fn bad_rows_are_skipped_with_row_numbers() {
        let csv = format!("{HEADER}S1,M,70,25,28,0,0,1,CN\nS2,F,abc,25,28,0,0,1,CN\nS3,M,70,25,28,0,0,1,XX\n");
        let t = parse_clinical(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.warnings[0].starts_with("row 3") && t.warnings[0].contains("age"));
        assert!(t.warnings[1].starts_with("row 4") && t.warnings[1].contains("label"));
    }

    #[test]
    fn z_score_of_one_sd_above_mean() {
        // age column: mean 50, population sd 10
        let raw = Tensor::from_rows(&[
            vec![0.0, 40.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![1.0, 60.0, 2.0, 1.0, 1.0, 1.0, 1.0],
        ])
        .unwrap();
        let (stats, warnings) = ClinicalStats::fit(&raw).unwrap();
        assert_eq!(stats.means[0], 50.0);
        assert_eq!(stats.sds[0], 10.0);
        assert_eq!(warnings.len(), 4); // mmse, cdr, faq, gds are constant
        let z = stats.apply(&raw).unwrap();
        assert_eq!(z.row(1)[1], 1.0);
        assert_eq!(z.row(1)[0], 1.0); // gender untouched
        assert_eq!(z.row(0)[3], 0.0); // constant column centred
    }

    #[test]
    fn hand_computed_z_scores() {
        let csv = format!("{HEADER}A,M,60,20,24,0,2,1,CN\nB,F,70,26,30,1,4,3,AD\nC,M,80,23,27,0.5,9,2,MCI\n");
        let t = parse_clinical(csv.as_bytes(), "t").unwrap();
        let (z, stats) = normalize_clinical(&t, None).unwrap();
        // age: mean 70, population sd sqrt(200/3)
        let sd = (200.0f64 / 3.0).sqrt();
        assert!((z.row(0)[1] - (-10.0 / sd)).abs() < 1e-12);
        assert!((z.row(2)[1] - (10.0 / sd)).abs() < 1e-12);
        // faq: values 2, 4, 9 → mean 5, var (9+1+16)/3
        let faq_sd = (26.0f64 / 3.0).sqrt();
        assert!((z.row(2)[5] - 4.0 / faq_sd).abs() < 1e-12);
        // reusing the stats reproduces the same transform
        let (z2, _) = normalize_clinical(&t, Some(&stats)).unwrap();
        assert_eq!(z, z2);
    }
}
