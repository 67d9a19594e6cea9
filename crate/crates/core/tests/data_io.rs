mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use slds_core::data_io::*;
use slds_core::evaluation::*;
use slds_core::model::{random_sparse_model, simulate_dataset, SparseModelSpec};
use slds_core::{FitConfig, ObservationSequence};

const STATE_GRID: [usize; 10] = [2, 3, 4, 5, 6, 7, 8, 9, 12, 15];

fn parse(text: &str) -> slds_core::Result<Vec<IrregularSeries>> {
    parse_raw_series(text.as_bytes())
}

#[test]
fn three_named_variables_per_series() {
    let mut text = String::from("series_id,variable,timestamp,value\n");
    for p in ["p1", "p2"] {
        for (k, var) in ["MCHC", "MCH", "MCV"].iter().enumerate() {
            for t in [0, 30_000, 61_000] {
                text.push_str(&format!("{p},{var},{},{}\n", t + k as i64 * 100, 30.0 + t as f64 / 1e4));
            }
        }
    }
    let series = parse(&text).unwrap();
    assert_eq!(series.len(), 2);
    for s in &series {
        assert_eq!(s.variables, vec!["MCHC", "MCH", "MCV"]);
    }
}

#[test]
fn unordered_input_is_sorted_and_duplicates_are_located() {
    let text = "series_id,variable,timestamp,value\na,x,200,2\na,x,0,0\na,x,100,1\n";
    let s = parse(text).unwrap();
    assert_eq!(s[0].points[0], vec![(0, 0.0), (100, 1.0), (200, 2.0)]);
    let dup = "series_id,variable,timestamp,value\na,x,0,1\na,x,5,1\na,x,0,1\n";
    let err = parse(dup).unwrap_err().to_string();
    assert!(err.contains("lines 2 and 4"), "{err}");
    assert!(parse("").unwrap_err().to_string().contains("no records"));
    assert!(parse("series_id,variable,timestamp,value\n").unwrap_err().to_string().contains("no records"));
    let bad = parse("series_id,variable,timestamp,value\na,x,0,1\na,x,zz,1\n").unwrap_err().to_string();
    assert!(bad.contains("line 3"), "{bad}");
    assert!(parse("id,var,time,value\na,x,0,1\n").is_err());
    assert!(parse("series_id,variable,timestamp,value\na,x,0,1\n").is_err());
}

#[test]
fn eight_hour_grid_example() {
    let s = IrregularSeries { series_id: "a".into(), variables: vec!["x".into()], points: vec![vec![(0, 10.0), (57_600, 14.0)]] };
    let y = resample_interpolate(&s, DEFAULT_STEP_SECONDS).unwrap();
    assert_eq!(y.values.as_slice(), &[10.0, 12.0, 14.0]);
    assert_eq!(y.series_id.as_deref(), Some("a"));
}

#[test]
fn grid_is_the_intersection_window() {
    let s = IrregularSeries {
        series_id: "b".into(),
        variables: vec!["x".into(), "y".into()],
        points: vec![vec![(0, 0.0), (100, 100.0)], vec![(30, 1.0), (90, 1.0)]],
    };
    assert_eq!(resample_grid(&s, 20).unwrap(), vec![30, 50, 70, 90]);
    let disjoint = IrregularSeries { points: vec![vec![(0, 0.0), (10, 1.0)], vec![(20, 1.0), (30, 1.0)]], ..s.clone() };
    assert!(resample_grid(&disjoint, 5).is_err());
    assert!(resample_grid(&s, 1000).is_err());
}

fn irregular(times: &[i64], values: &[f64]) -> IrregularSeries {
    let mut pts: Vec<(i64, f64)> = times.iter().cloned().zip(values.iter().cloned()).collect();
    pts.sort_by_key(|p| p.0);
    pts.dedup_by_key(|p| p.0);
    IrregularSeries { series_id: "r".into(), variables: vec!["v".into()], points: vec![pts] }
}

proptest! {
    #[test]
    fn interpolated_values_stay_between_their_neighbours(
        raw in prop::collection::vec((0i64..200_000, -50.0f64..50.0), 2..30),
        step in 1_000i64..20_000,
    ) {
        let (times, values): (Vec<i64>, Vec<f64>) = raw.into_iter().unzip();
        let s = irregular(&times, &values);
        prop_assume!(s.points[0].len() >= 2);
        let Ok(grid) = resample_grid(&s, step) else { return Ok(()) };
        let y = resample_interpolate(&s, step).unwrap();
        let pts = &s.points[0];
        for (g, t) in grid.iter().enumerate() {
            prop_assert!(g == 0 || grid[g] - grid[g - 1] == step);
            let k = pts.partition_point(|p| p.0 < *t);
            let v = y.values[(g, 0)];
            if pts[k].0 == *t {
                prop_assert_eq!(v, pts[k].1);
            } else {
                let (lo, hi) = (pts[k - 1].1.min(pts[k].1), pts[k - 1].1.max(pts[k].1));
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn affine_signals_are_reproduced_exactly(
        times in prop::collection::vec(0i64..500_000, 2..20),
        slope in -1e-3f64..1e-3,
        intercept in -100.0f64..100.0,
    ) {
        let values: Vec<f64> = times.iter().map(|t| slope * *t as f64 + intercept).collect();
        let s = irregular(&times, &values);
        prop_assume!(s.points[0].len() >= 2);
        let Ok(grid) = resample_grid(&s, 7_200) else { return Ok(()) };
        let y = resample_interpolate(&s, 7_200).unwrap();
        for (g, t) in grid.iter().enumerate() {
            prop_assert!((y.values[(g, 0)] - (slope * *t as f64 + intercept)).abs() <= 1e-9);
        }
    }
}

#[test]
fn written_sequences_load_back_unchanged() {
    let truth = random_sparse_model(&SparseModelSpec::new(2, 3, 0.5), 1).unwrap();
    let data = simulate_dataset(&truth, 4, 7, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    write_sequences_csv(&path, &data, &names, DEFAULT_STEP_SECONDS).unwrap();
    let back = load_sequences(&path, DEFAULT_STEP_SECONDS).unwrap();
    assert_eq!(back.len(), 4);
    for (a, b) in data.iter().zip(&back) {
        assert_eq!(a.values, b.values);
        assert_eq!(a.series_id, b.series_id);
    }
}

fn meta() -> ModelMeta {
    ModelMeta { beta: 2.5, iterations: 17, final_objective: Some(-123.456), data_fingerprint: "abc".into() }
}

#[test]
fn model_files_round_trip_bit_for_bit() {
    let mut rng = rng(3);
    let params = random_stable_params(&mut rng, 3, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&params, &meta(), &path).unwrap();
    let (back, m) = load_model(&path).unwrap();
    assert_eq!(back, params);
    assert_eq!(m, meta());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    for k in ["format_version", "l", "d", "A", "C", "Q", "R", "pi1", "V1", "beta", "fit"] {
        assert!(keys.contains(&k), "missing {k}");
    }
}

#[test]
fn tampered_and_foreign_model_files_are_refused() {
    let mut rng = rng(4);
    let params = random_stable_params(&mut rng, 2, 2);
    let good = model_to_json(&params, &meta()).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&good).unwrap();
    doc["Q"] = serde_json::json!([[1.0, 2.0], [2.0, 1.0]]);
    let err = model_from_json(&doc.to_string()).unwrap_err().to_string();
    assert!(err.contains("Q not PSD"), "{err}");

    let mut doc: serde_json::Value = serde_json::from_str(&good).unwrap();
    doc["format_version"] = serde_json::json!(999);
    let err = model_from_json(&doc.to_string()).unwrap_err().to_string();
    assert!(err.contains("999"), "{err}");

    let mut doc: serde_json::Value = serde_json::from_str(&good).unwrap();
    doc["C"] = serde_json::json!([[1.0]]);
    assert!(model_from_json(&doc.to_string()).is_err());
}

fn header(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn report_columns_follow_the_state_grid() {
    let truth = random_sparse_model(&SparseModelSpec::new(2, 2, 0.5), 1).unwrap();
    let train = simulate_dataset(&truth, 10, 20, 2).unwrap();
    let test = simulate_dataset(&truth, 10, 20, 3).unwrap();
    let mut cfg = BenchmarkConfig::new(STATE_GRID.to_vec(), vec![0.0, 1.0]);
    cfg.repeats = 3;
    cfg.fit.em_max_iter = 3;
    let res = run_benchmark(&train, &test, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_report(&res, dir.path()).unwrap();
    assert_eq!(files.len(), 4);

    assert_eq!(header(&dir.path().join(TABLE_FILE)), "method,beta,2,3,4,5,6,7,8,9,12,15");
    let table = std::fs::read_to_string(dir.path().join(TABLE_FILE)).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(rows[0].starts_with("OLDS,0,"));
    assert!(rows[1].starts_with("SLDS,1,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 12));

    let records = read_long_form(dir.path().join(LONG_FILE)).unwrap();
    assert_eq!(records.len(), res.cells.iter().filter(|c| c.ok()).count() * 3);
    for cell in res.cells.iter().filter(|c| c.ok()) {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.states == cell.states && r.beta == cell.beta)
            .map(|r| r.amae)
            .collect();
        assert_eq!(vals.len(), 3);
        let mean = vals.iter().sum::<f64>() / 3.0;
        assert!((mean - cell.mean).abs() <= 1e-9);
        assert!(records.iter().any(|r| r.method == cell.method.label()));
    }
    assert_eq!(header(&dir.path().join(PLOT_FILE)), "method,beta,states,mean_amae,std_amae");
}

#[test]
fn empty_grid_writes_headers_only() {
    let res = BenchmarkResult {
        config: BenchmarkEcho {
            train_size: 0,
            test_size: 0,
            state_sizes: STATE_GRID.to_vec(),
            betas: vec![],
            repeats: 10,
            tasks_per_series: 5,
            tasks_per_repeat: vec![],
            seed: 0,
            fit: FitConfig::new(1, 0.0),
            validation_fraction: None,
        },
        cells: vec![],
        selections: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    write_report(&res, dir.path()).unwrap();
    for file in [TABLE_FILE, LONG_FILE, PLOT_FILE] {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().count(), 1, "{file}");
    }
    assert_eq!(header(&dir.path().join(TABLE_FILE)), "method,beta,2,3,4,5,6,7,8,9,12,15");
}

#[test]
fn fingerprints_track_the_data() {
    let a = vec![ObservationSequence::new(DMatrix::from_element(3, 2, 1.0))];
    let mut b = a.clone();
    assert_eq!(data_fingerprint(&a), data_fingerprint(&b));
    b[0].values[(1, 1)] = 1.0 + f64::EPSILON;
    assert_ne!(data_fingerprint(&a), data_fingerprint(&b));
}
