use std::io::Write;
use std::path::PathBuf;

use skipring::data::{column_stats, load_csv, preprocess, LoadOptions, Threshold};
use skipring::Error;

fn housing() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/housing.csv")
}

fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn binary_labels_map_to_signs() {
    let f = write_tmp("a,b,label\n1,2,0\n3,4,1\n5,6,1\n");
    let opts = LoadOptions {
        threshold: Threshold::None,
        ..LoadOptions::new("label")
    };
    let (data, report) = load_csv(f.path(), &opts).unwrap();
    assert_eq!(data.labels(), &[-1.0, 1.0, 1.0]);
    assert_eq!(data.dim(), 2);
    assert_eq!(report.rows, 3);
    assert_eq!(data.row(1), &[3.0, 4.0]);
}

#[test]
fn bad_cell_reports_row_and_column() {
    let f = write_tmp("a,b,label\n1,2,0\n3,oops,1\n");
    match load_csv(f.path(), &LoadOptions::new("label")) {
        Err(Error::Parse { row, column, value }) => {
            assert_eq!(row, 2);
            assert_eq!(column, "b");
            assert_eq!(value, "oops");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_cells_are_counted_and_skipped() {
    let f = write_tmp("a,b,label\n1,,0\n3,4,1\nNA,1,0\n5,6,0\n");
    let (data, report) = load_csv(f.path(), &LoadOptions::new("label")).unwrap();
    assert_eq!(report.rows_with_missing, 2);
    assert_eq!(data.len(), 2);
}

#[test]
fn absent_label_and_empty_files_fail() {
    let f = write_tmp("a,b\n1,2\n");
    assert!(matches!(load_csv(f.path(), &LoadOptions::new("label")), Err(Error::MissingLabelColumn(_))));
    let f = write_tmp("a,label\n,1\n");
    assert!(matches!(load_csv(f.path(), &LoadOptions::new("label")), Err(Error::NoUsableRows(_))));
}

#[test]
fn semicolon_delimiter() {
    let f = write_tmp("a;label\n1.5;3\n2.5;9\n");
    let opts = LoadOptions {
        delimiter: b';',
        threshold: Threshold::Value(5.0),
        ..LoadOptions::new("label")
    };
    let (data, _) = load_csv(f.path(), &opts).unwrap();
    assert_eq!(data.labels(), &[-1.0, 1.0]);
}

#[test]
fn housing_file_parses_completely() {
    let text = std::fs::read_to_string(housing()).unwrap();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_cols = lines.next().unwrap().split(',').count();
    let rows = lines.count();
    let (data, report) = load_csv(&housing(), &LoadOptions::new("MEDV")).unwrap();
    assert_eq!(report.rows, rows);
    assert_eq!(report.rows, 506);
    assert_eq!(data.dim(), header_cols - 1);
    assert!((report.positive_fraction - 0.5).abs() < 0.02);
}

#[test]
fn standardized_columns_have_unit_moments() {
    let (data, _) = load_csv(&housing(), &LoadOptions::new("MEDV")).unwrap();
    let stats = column_stats(&data);
    for i in 0..data.len().min(50) {
        for (j, (m, s)) in stats.iter().enumerate() {
            let z = (data.row(i)[j] - m) / s;
            assert!(z.is_finite());
        }
    }
    // moments of the standardized (not yet normalized) columns
    for (j, (m, s)) in stats.iter().enumerate() {
        let z: Vec<f64> = (0..data.len()).map(|i| (data.row(i)[j] - m) / s).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 1e-9 && (var.sqrt() - 1.0).abs() < 1e-9, "column {j}");
    }
    let pre = preprocess(&data);
    for i in 0..pre.len() {
        let norm: f64 = pre.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}
