//! CSV loading and snapshot export (RFC 4180, header row required).

use std::path::Path;

use ndarray::Array2;

use super::{DataError, Dataset, FeatureKind, FeatureSpec, validate_schema};

/// Load a CSV file against an explicit schema; no type inference.
///
/// Every schema feature and the label column must appear in the header.
/// Numeric cells parse as reals, categorical cells must match one of the
/// schema's categories, labels must be `0` or `1`.
pub fn load_csv(path: &Path, schema: &[FeatureSpec], label_column: &str) -> Result<Dataset, DataError> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| headers.iter().position(|h| h == name);
    let feature_cols: Vec<usize> = schema
        .iter()
        .map(|spec| col_index(&spec.name).ok_or_else(|| DataError::MissingColumn(spec.name.clone())))
        .collect::<Result<_, _>>()?;
    let label_col = col_index(label_column).ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;

    let mut cells: Vec<f64> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (spec, &col) in schema.iter().zip(&feature_cols) {
            let raw = record.get(col).ok_or_else(|| DataError::ParseFailure {
                row,
                message: format!("row too short for column `{}`", spec.name),
            })?;
            let value = match &spec.kind {
                FeatureKind::Numeric => raw.trim().parse::<f64>().map_err(|e| DataError::ParseFailure {
                    row,
                    message: format!("`{raw}` in `{}`: {e}", spec.name),
                })?,
                FeatureKind::Categorical { categories } => categories
                    .iter()
                    .position(|c| c == raw)
                    .ok_or_else(|| DataError::UnknownCategory {
                        row,
                        feature: spec.name.clone(),
                        value: raw.to_string(),
                    })? as f64,
            };
            cells.push(value);
        }
        let raw_label = record.get(label_col).ok_or_else(|| DataError::ParseFailure {
            row,
            message: "row too short for label column".into(),
        })?;
        labels.push(match raw_label.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DataError::NonBinaryLabel {
                    column: label_column.to_string(),
                    row,
                    value: other.to_string(),
                });
            }
        });
    }
    let n = labels.len();
    if n == 0 {
        return Err(DataError::InvalidData("CSV has no data rows".into()));
    }
    let rows = Array2::from_shape_vec((n, schema.len()), cells)
        .map_err(|e| DataError::InvalidData(e.to_string()))?;
    Dataset::new(schema.to_vec(), rows, labels)
}

/// Write a dataset snapshot as CSV plus a JSON schema sidecar.
pub fn export_csv(ds: &Dataset, csv_path: &Path, schema_path: &Path) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(csv_path)?;
    let mut header: Vec<String> = ds.schema().iter().map(|s| s.name.clone()).collect();
    header.push("label".to_string());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = Vec::with_capacity(ds.d() + 1);
        for (j, spec) in ds.schema().iter().enumerate() {
            let cell = ds.rows()[[i, j]];
            record.push(match &spec.kind {
                FeatureKind::Numeric => format!("{cell}"),
                FeatureKind::Categorical { categories } => categories[cell as usize].clone(),
            });
        }
        record.push(ds.labels()[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    save_schema(ds.schema(), schema_path)
}

pub fn save_schema(schema: &[FeatureSpec], path: &Path) -> Result<(), DataError> {
    let json = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_schema(path: &Path) -> Result<Vec<FeatureSpec>, DataError> {
    let raw = std::fs::read_to_string(path)?;
    let schema: Vec<FeatureSpec> =
        serde_json::from_str(&raw).map_err(|e| DataError::InvalidSchema(e.to_string()))?;
    validate_schema(&schema)?;
    Ok(schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy_schema() -> Vec<FeatureSpec> {
        vec![
            FeatureSpec::numeric("age"),
            FeatureSpec::categorical("color", ["red", "blue"]),
        ]
    }

    #[test]
    fn parses_numeric_and_categorical_columns() {
        let f = write_temp("age,color,label\n1.5,red,0\n2.5,blue,1\n3.5,red,1\n");
        let ds = load_csv(f.path(), &toy_schema(), "label").unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.rows()[[1, 1]], 1.0);
        assert_eq!(ds.labels(), &[0, 1, 1]);
    }

    #[test]
    fn unknown_category_is_reported_with_position() {
        let f = write_temp("age,color,label\n1.0,red,0\n2.0,purple,1\n");
        match load_csv(f.path(), &toy_schema(), "label") {
            Err(DataError::UnknownCategory { row, feature, value }) => {
                assert_eq!(row, 1);
                assert_eq!(feature, "color");
                assert_eq!(value, "purple");
            }
            other => panic!("expected UnknownCategory, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_nonbinary_label_errors() {
        let f = write_temp("age,label\n1.0,0\n");
        assert!(matches!(
            load_csv(f.path(), &toy_schema(), "label"),
            Err(DataError::MissingColumn(c)) if c == "color"
        ));
        let f = write_temp("age,color,label\n1.0,red,2\n");
        assert!(matches!(
            load_csv(f.path(), &toy_schema(), "label"),
            Err(DataError::NonBinaryLabel { .. })
        ));
    }

    #[test]
    fn spambase_shaped_csv_round_trips() {
        // 57 numeric features, 4601 rows, as in the spambase layout.
        let d = 57;
        let n = 4601;
        let schema: Vec<FeatureSpec> = (0..d).map(|j| FeatureSpec::numeric(format!("f{j}"))).collect();
        let mut content = String::new();
        for j in 0..d {
            content.push_str(&format!("f{j},"));
        }
        content.push_str("label\n");
        for i in 0..n {
            for j in 0..d {
                content.push_str(&format!("{}.5,", (i + j) % 10));
            }
            content.push_str(if i % 3 == 0 { "1\n" } else { "0\n" });
        }
        let f = write_temp(&content);
        let ds = load_csv(f.path(), &schema, "label").unwrap();
        assert_eq!((ds.n(), ds.d()), (4601, 57));
    }

    #[test]
    fn export_then_load_preserves_data() {
        let f = write_temp("age,color,label\n1.5,red,0\n2.5,blue,1\n");
        let schema = toy_schema();
        let ds = load_csv(f.path(), &schema, "label").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("snap.csv");
        let schema_path = dir.path().join("snap.schema.json");
        export_csv(&ds, &csv_path, &schema_path).unwrap();
        let loaded_schema = load_schema(&schema_path).unwrap();
        assert_eq!(loaded_schema, schema);
        let again = load_csv(&csv_path, &loaded_schema, "label").unwrap();
        assert_eq!(again, ds);
    }
}
