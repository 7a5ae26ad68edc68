use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Precomputed per-subject imaging feature vectors (`subject_id,f0,f1,...`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVectorTable {
    pub subjects: Vec<String>,
    pub values: Tensor,
}

impl FeatureVectorTable {
    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Rows for the given subjects, in order.
    pub fn rows_for(&self, ids: &[String]) -> Result<Tensor> {
        let pos: HashMap<&str, usize> = self.subjects.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx = ids
            .iter()
            .map(|id| pos.get(id.as_str()).copied().ok_or_else(|| Error::Data(format!("subject {id} has no feature vector"))))
            .collect::<Result<Vec<_>>>()?;
        self.values.select_rows(&idx)
    }
}

pub fn read_features(path: &Path) -> Result<FeatureVectorTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(file, &path.display().to_string())
}

pub fn parse_features<R: Read>(reader: R, source: &str) -> Result<FeatureVectorTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::schema(source, format!("unreadable header: {e}")))?.clone();
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("subject_id") {
        return Err(Error::schema(source, "first column must be subject_id"));
    }
    let width = headers.len() - 1;
    if width == 0 {
        return Err(Error::schema(source, "no feature columns"));
    }
    let mut subjects = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::schema(source, format!("row {row}: {e}")))?;
        if rec.len() != width + 1 {
            return Err(Error::schema(source, format!("row {row}: {} values, expected {width}", rec.len() - 1)));
        }
        subjects.push(rec[0].to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::schema(source, format!("row {row}: non-numeric value '{cell}' in {}", &headers[j + 1])))?;
            data.push(v);
        }
    }
    if subjects.is_empty() {
        return Err(Error::schema(source, "no data rows"));
    }
    let n = subjects.len();
    Ok(FeatureVectorTable { subjects, values: Tensor::new(&[n, width], data)? })
}

pub fn write_features(table: &FeatureVectorTable, path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Serde(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["subject_id".to_string()];
    header.extend((0..table.width()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in table.subjects.iter().enumerate() {
        let mut rec = vec![s.clone()];
        rec.extend(table.values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let t = FeatureVectorTable {
            subjects: vec!["a".into(), "b".into()],
            values: Tensor::from_rows(&[vec![0.1, -2.5e-7, 3.0], vec![1.0 / 3.0, 4.0, -0.0]]).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_features(&t, &p).unwrap();
        assert_eq!(read_features(&p).unwrap(), t);
    }

    #[test]
    fn rejects_ragged_and_non_numeric_rows() {
        let ragged = "subject_id,f0,f1\na,1,2\nb,1\n";
        assert!(parse_features(ragged.as_bytes(), "x").unwrap_err().to_string().contains("row 3"));
        let nan = "subject_id,f0\na,nan\n";
        assert!(matches!(parse_features(nan.as_bytes(), "x"), Err(Error::Schema { .. })));
        assert!(matches!(parse_features("id,f0\na,1\n".as_bytes(), "x"), Err(Error::Schema { .. })));
    }

    #[test]
    fn rows_for_reorders_and_reports_missing() {
        let t = parse_features("subject_id,f0\na,1\nb,2\n".as_bytes(), "x").unwrap();
        assert_eq!(t.rows_for(&["b".into(), "a".into()]).unwrap().data(), &[2.0, 1.0]);
        assert!(matches!(t.rows_for(&["c".into()]), Err(Error::Data(_))));
    }
}
