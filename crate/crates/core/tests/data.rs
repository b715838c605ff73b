use std::fs;

use esn_core::data::{self, load_csv, save_dataset, split, DataSource, Dataset, SplitSpec};
use esn_core::reservoir::{EsnHyperParams, EsnModel, ReservoirState};
use esn_core::systems::{self, System, SystemSpec};
use esn_core::{Error, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn small_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.csv");
    fs::write(&path, "t,a,b\n0,1,2\n0.5,3,4\n1.0,5,6\n").unwrap();
    let ds = load_csv(&path, Some(2)).unwrap();
    assert_eq!(ds.series.len(), 3);
    assert_eq!(ds.series.dt(), 0.5);
    assert_eq!(ds.series.row(2), [5.0, 6.0]);
    assert_eq!(ds.source, DataSource::ExperimentalCsv);
    assert!(matches!(load_csv(&path, Some(3)), Err(Error::Dimension { .. })));
}

#[test]
fn nan_row_is_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "t,a\n0,1\n1,2\n2,NaN\n3,4\n").unwrap();
    match load_csv(&path, None) {
        Err(e @ Error::Parse { line: 4, .. }) => assert!(e.to_string().contains('4')),
        other => panic!("expected a parse error on line 4, got {other:?}"),
    }
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            vec![
                rng.random_range(-1e3..1e3),
                rng.random::<f64>() * 1e-300,
                -rng.random::<f64>() / 3.0,
            ]
        })
        .collect();
    let series = TimeSeries::from_rows(&rows, 0.057).unwrap();
    let ds = Dataset::new(series, DataSource::Simulated, "random rows").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    save_dataset(&ds, &path).unwrap();
    let back = load_csv(&path, Some(3)).unwrap();
    assert_eq!(back.series.dt().to_bits(), 0.057f64.to_bits());
    for (a, b) in back.series.values().iter().zip(ds.series.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back.source, DataSource::Simulated);
    assert_eq!(back.provenance, "random rows");

    // without the sidecar dt is recovered from the time column
    fs::remove_file(data::meta_path(&path)).unwrap();
    let bare = load_csv(&path, None).unwrap();
    assert!((bare.series.dt() - 0.057).abs() < 1e-12);
}

#[test]
fn split_partitions_with_floor_rule() {
    let make = |n: usize| {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        Dataset::new(TimeSeries::from_rows(&rows, 1.0).unwrap(), DataSource::Simulated, "ramp").unwrap()
    };
    let (a, b) = split(&make(100), SplitSpec { train_fraction: 0.8 }).unwrap();
    assert_eq!((a.series.len(), b.series.len()), (80, 20));
    let ds = make(5);
    let (a, b) = split(&ds, SplitSpec { train_fraction: 0.5 }).unwrap();
    assert_eq!((a.series.len(), b.series.len()), (2, 3));
    let joined = a.series.concat(&b.series).unwrap();
    assert_eq!(joined.values(), ds.series.values());
    assert_eq!(b.series.t0(), 2.0);
    assert!(split(&ds, SplitSpec { train_fraction: 1.0 }).is_err());
}

fn trained_lorenz() -> EsnModel {
    let series = systems::generate(&SystemSpec::new(System::lorenz(), 0.01, 3000)).unwrap();
    let mut model = EsnModel::new(EsnHyperParams {
        n_nodes: 120,
        washout: 100,
        ridge: 1e-6,
        ..EsnHyperParams::default()
    })
    .unwrap();
    model.fit(&series).unwrap();
    model
}

#[test]
fn model_round_trip_is_exact() {
    let model = trained_lorenz();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    data::save_model(&model, &path).unwrap();
    let back = data::load_model(&path).unwrap();
    assert_eq!(back, model);
    let x = ReservoirState::zeros(120);
    assert_eq!(back.readout(&[1.0], &x).unwrap(), model.readout(&[1.0], &x).unwrap());
}

#[test]
fn model_without_readout_loads_untrained() {
    let model = EsnModel::new(EsnHyperParams {
        n_nodes: 40,
        ..EsnHyperParams::default()
    })
    .unwrap();
    let text = data::model_to_json(&model).unwrap();
    let mut back = data::model_from_json(&text).unwrap();
    assert!(!back.is_trained());
    assert!(matches!(back.readout(&[0.0], &ReservoirState::zeros(40)), Err(Error::Untrained)));
    let series = systems::generate(&SystemSpec::new(System::lorenz(), 0.01, 1000)).unwrap();
    back.fit(&series).unwrap();
    assert!(back.readout(&[0.0], &ReservoirState::zeros(40)).is_ok());
}

#[test]
fn unknown_format_version_is_rejected() {
    let model = trained_lorenz();
    let text = data::model_to_json(&model).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["format_version"] = serde_json::json!(99);
    let err = data::model_from_json(&doc.to_string()).unwrap_err();
    assert!(matches!(err, Error::FormatVersion { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn surrogate_is_labelled_and_quantised() {
    let ds = data::experimental_surrogate(2000, 4).unwrap();
    assert_eq!(ds.source, DataSource::ExperimentalCsv);
    assert!(ds.provenance.contains("surrogate"));
    assert_eq!(ds.series.dt(), 0.057);
    for c in 0..3 {
        let mut levels = ds.series.column(c);
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert!(levels.len() <= 1024);
    }
    assert_eq!(ds, data::experimental_surrogate(2000, 4).unwrap());
}
