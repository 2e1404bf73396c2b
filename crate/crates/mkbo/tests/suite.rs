use std::collections::BTreeMap;
use std::path::Path;

use mkbo::config::{AuxSource, ExperimentConfig, GridConfig, HyperGrids, MethodConfig, ObjectiveConfig, Strategy};
use mkbo::data::{load_dataset_csv, read_dataset_csv};
use mkbo::suite::{quantile, read_summary_csv, run_suite, write_outputs};
use mkbo_core::bo::AcquisitionKind;
use mkbo_core::dataset::normalize_unit_box;
use proptest::prelude::*;

fn small(methods: Vec<MethodConfig>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::simulated();
    cfg.grid = Some(GridConfig {
        bounds: vec![[-1.0, 1.0], [-1.0, 1.0]],
        resolution: vec![9, 9],
    });
    cfg.methods = methods;
    cfg.iterations = 6;
    cfg.repetitions = 3;
    cfg.aux = Some(AuxSource::Generator { count: 25, seed: 1000 });
    cfg.hypers = HyperGrids {
        sigma_grid: vec![0.05, 0.2, 0.8],
        noise_grid: vec![1e-6, 1e-3],
    };
    cfg.pretrain.c_grid = vec![1.0, 10.0];
    cfg
}

fn method(strategy: Strategy, acquisition: AcquisitionKind) -> MethodConfig {
    MethodConfig { strategy, acquisition }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.insert(rel, std::fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn zero_iterations_give_empty_curves() {
    let mut cfg = small(vec![method(Strategy::PlainSe, AcquisitionKind::Ucb)]);
    cfg.iterations = 0;
    cfg.repetitions = 1;
    let result = run_suite(&cfg).unwrap();
    assert!(result.summary.is_empty());
    assert!(result.manifest.ok);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&result, dir.path()).unwrap();
    assert_eq!(
        std::fs::read_to_string(dir.path().join("summary.csv")).unwrap(),
        "method,t,median,q25,q75\n"
    );
    assert_eq!(
        std::fs::read(dir.path().join("traces/plain-se+UCB/rep0.jsonl")).unwrap(),
        b""
    );
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = small(vec![
        method(Strategy::PlainSe, AcquisitionKind::Ucb),
        method(Strategy::Reweighted, AcquisitionKind::Ei),
        method(Strategy::Mixture, AcquisitionKind::Ucb),
    ]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&run_suite(&cfg).unwrap(), a.path()).unwrap();
    write_outputs(&run_suite(&cfg).unwrap(), b.path()).unwrap();
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta.len(), 3 * 3 + 2);
    assert_eq!(ta, tb);
}

#[test]
fn duplicated_method_gives_identical_curves() {
    let m = method(Strategy::PlainSe, AcquisitionKind::Ei);
    let result = run_suite(&small(vec![m, m])).unwrap();
    let (first, second) = result.summary.split_at(result.summary.len() / 2);
    assert_eq!(first, second);
}

#[test]
fn traces_stay_on_the_grid_and_best_is_monotone() {
    let cfg = small(vec![
        method(Strategy::PlainSe, AcquisitionKind::Ucb),
        method(Strategy::ReweightedComposite, AcquisitionKind::Ucb),
    ]);
    let grid = mkbo_core::dataset::uniform_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[9, 9]);
    let result = run_suite(&cfg).unwrap();
    assert!(result.manifest.ok, "{:?}", result.manifest.methods);
    for run in &result.runs {
        for trace in run.reps.iter().map(|r| r.as_ref().unwrap()) {
            assert_eq!(trace.len(), 6);
            for w in trace.windows(2) {
                assert!(w[1].best <= w[0].best);
            }
            for r in trace {
                assert!(grid.contains(&r.x), "{:?} not a candidate", r.x);
                assert_eq!(r.y, mkbo_core::sim::simulated_objective(&r.x).unwrap());
            }
        }
    }
    let mut finals = result.runs[0].final_bests();
    let last = result.summary.iter().find(|r| r.t == 6).unwrap();
    finals.sort_by(f64::total_cmp);
    assert_eq!(last.median, quantile(&finals, 0.5));
}

#[test]
fn missing_aux_fails_validation_and_bad_kernels_land_in_the_manifest() {
    let mut cfg = small(vec![method(Strategy::Reweighted, AcquisitionKind::Ucb)]);
    cfg.aux = None;
    assert!(run_suite(&cfg).is_err());

    // constant aux targets give an all-zero SVM, so pre-training fails
    let dir = tempfile::tempdir().unwrap();
    let aux = dir.path().join("aux.csv");
    std::fs::write(&aux, "x1,x2,y\n0,0,1\n0.5,0.1,1\n-0.3,0.9,1\n0.2,-0.6,1\n").unwrap();
    let mut cfg = small(vec![
        method(Strategy::PlainSe, AcquisitionKind::Ucb),
        method(Strategy::Reweighted, AcquisitionKind::Ucb),
    ]);
    cfg.aux = Some(AuxSource::Csv(aux));
    cfg.pretrain.epsilon = 0.5;
    let result = run_suite(&cfg).unwrap();
    assert!(!result.manifest.ok);
    assert_eq!(result.manifest.methods[0].completed, 3);
    assert_eq!(result.manifest.methods[1].completed, 0);
    assert_eq!(result.manifest.methods[1].failures.len(), 1);
    assert_eq!(result.summary.iter().filter(|r| r.method == "plain-se+UCB").count(), 6);
}

#[test]
fn table_objective_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x1,x2,y\n");
    for i in 0..6 {
        for j in 0..5 {
            let (a, b) = (100.0 + 10.0 * i as f64, 2.0 * j as f64);
            csv.push_str(&format!("{a},{b},{}\n", 400.0 + a - 3.0 * b));
        }
    }
    std::fs::write(dir.path().join("fibre.csv"), csv).unwrap();
    let cfg = r#"{
        "objective": {"kind": "table", "path": "fibre.csv",
                      "transform": {"kind": "squared-distance-to-target", "target": 500.0}},
        "methods": [{"strategy": "plain-se", "acquisition": "EI"}],
        "iterations": 5, "repetitions": 2, "seed": 3,
        "hypers": {"sigma_grid": [0.1, 0.5], "noise_grid": [1e-6, 1e-2]}
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let cfg = ExperimentConfig::from_path(dir.path().join("cfg.json")).unwrap();
    assert!(matches!(cfg.objective, ObjectiveConfig::Table { .. }));
    let table = load_dataset_csv(dir.path().join("fibre.csv")).unwrap();
    let result = run_suite(&cfg).unwrap();
    assert!(result.manifest.ok);
    for trace in result.runs[0].reps.iter().map(|r| r.as_ref().unwrap()) {
        for r in trace {
            let i = table.xs().iter().position(|x| x == &r.x).expect("row of the table");
            assert_eq!(r.y, (table.ys()[i] - 500.0).powi(2));
        }
    }
    let out = tempfile::tempdir().unwrap();
    write_outputs(&result, out.path()).unwrap();
    assert_eq!(
        read_summary_csv(&out.path().join("summary.csv")).unwrap(),
        result.summary
    );
}

#[test]
fn single_row_file_flags_every_column() {
    let d = read_dataset_csv("x1,x2,y\n3,4,5\n".as_bytes()).unwrap();
    let (u, map) = normalize_unit_box(&d).unwrap();
    assert_eq!(map.constant_columns(), vec![0, 1, 2]);
    assert_eq!(u.xs()[0], vec![0.5, 0.5]);
    assert_eq!(u.ys(), &[0.5]);
}

#[test]
fn column_midpoint_maps_to_one_half() {
    let d = read_dataset_csv("x1,y\n2,0\n4,1\n3,7\n".as_bytes()).unwrap();
    let (u, _) = normalize_unit_box(&d).unwrap();
    assert_eq!(u.xs()[2], vec![0.5]);
}

proptest! {
    #[test]
    fn normalization_round_trips(rows in proptest::collection::vec(
        (proptest::collection::vec(-1e3f64..1e3, 3), -1e3f64..1e3), 2..20)) {
        let mut csv = String::from("x1,x2,x3,y\n");
        for (x, y) in &rows {
            csv.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], y));
        }
        let d = read_dataset_csv(csv.as_bytes()).unwrap();
        let (u, map) = normalize_unit_box(&d).unwrap();
        for (x, y) in u.rows() {
            prop_assert!(x.iter().chain([&y]).all(|v| (0.0..=1.0).contains(v)));
        }
        let back = map.invert(&u);
        for ((a, ya), (b, yb)) in back.rows().zip(d.rows()) {
            for (p, q) in a.iter().zip(b) {
                prop_assert!((p - q).abs() <= 1e-12 * q.abs().max(1.0));
            }
            prop_assert!((ya - yb).abs() <= 1e-12 * yb.abs().max(1.0));
        }
    }

    #[test]
    fn quartiles_ignore_repetition_order(mut v in proptest::collection::vec(-5.0f64..5.0, 1..15), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        v.sort_by(f64::total_cmp);
        for p in [0.25, 0.5, 0.75] {
            prop_assert_eq!(quantile(&v, p), quantile(&sorted, p));
        }
    }
}
