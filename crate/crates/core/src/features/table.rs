use std::path::Path;

use crate::error::{Error, Result};
use crate::io::ClassLabel;

use super::FEATURE_DIM;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "mfcc_0", "mfcc_1", "mfcc_2", "mfcc_3", "mfcc_4", "mfcc_5", "mfcc_6", "mfcc_7", "mfcc_8",
    "mfcc_9", "mfcc_10", "mfcc_11", "mfcc_12", "zcr", "rms", "w1_mean", "w1_std", "w2_mean",
    "w2_std", "w3_mean", "w3_std", "w4_mean", "w4_std", "w5_mean", "w5_std",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub label: ClassLabel,
    pub values: [f64; FEATURE_DIM],
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["id", "label"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut rec = vec![row.id.clone(), row.label.code().to_string()];
        rec.extend(row.values.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected: Vec<&str> = ["id", "label"].into_iter().chain(FEATURE_NAMES).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::malformed("feature table", "unexpected header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let label: ClassLabel = rec[1].parse()?;
        let mut values = [0.0; FEATURE_DIM];
        for (v, s) in values.iter_mut().zip(rec.iter().skip(2)) {
            *v = s
                .parse()
                .map_err(|_| Error::malformed("feature table", format!("bad number {s:?}")))?;
        }
        out.push(FeatureRow {
            id: rec[0].to_string(),
            label,
            values,
        });
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::malformed("csv", format!("{}: {e}", path.display()))
}
