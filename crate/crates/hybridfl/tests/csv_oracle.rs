use hybridfl::dataset_io::{load_csv, read_csv, save_csv, DataFileError};
use hybridfl_core::data::Dataset;
use rand::{Rng, RngCore, SeedableRng};

#[test]
fn ten_thousand_rows_round_trip() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    let (n, d, k) = (10_000, 7, 5);
    let features: Vec<f64> = (0..n * d)
        .map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-30..30)))
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|_| (rng.next_u64() % k as u64) as usize).collect();
    labels[0] = k - 1;
    let oracle = Dataset::new(features, labels, d, k).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    save_csv(&path, &oracle).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back.len(), n);
    assert_eq!(back.dim(), d);
    assert_eq!(back.num_classes(), k);
    assert_eq!(back.labels(), oracle.labels());
    assert!(back.features().iter().zip(oracle.features()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn malformed_files_report_line_numbers() {
    let err = read_csv("f0,f1,label\n1,2,0\n3,x,1\n".as_bytes()).unwrap_err();
    match err {
        DataFileError::NonNumeric { line, column, value } => {
            assert_eq!((line, column.as_str(), value.as_str()), (3, "f1", "x"));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_csv("f0,label\n".as_bytes()), Err(DataFileError::NoRows)));
    let missing = load_csv(std::path::Path::new("/nonexistent/file.csv")).unwrap_err();
    assert!(missing.to_string().contains("/nonexistent/file.csv"));
}
