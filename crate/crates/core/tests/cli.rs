//! End-to-end checks of the `wavecal` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use wavecal::cli::{ingest, read_spec_file, write_dataset, Dataset, IngestOptions};
use wavecal::MultiSignal;

fn docs(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/specs").join(name)
}

fn wavecal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavecal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_gyros(dir: &Path, length: usize, seed: u64) -> PathBuf {
    let data = dir.join("gyros.csv");
    let out = wavecal(&[
        "simulate",
        path(&docs("three_gyros.toml")),
        "--length",
        &length.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path(&data),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    data
}

#[test]
fn shipped_specs_parse() {
    for (name, params) in [("m1_pair.toml", 9), ("three_gyros.toml", 9), ("accelerometers.toml", 11)] {
        let file = read_spec_file(&docs(name)).unwrap();
        assert_eq!(file.theta.unwrap().len(), params, "{name}");
    }
}

#[test]
fn replicates_get_suffixes_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sim.csv");
    let spec = docs("m1_pair.toml");
    let args = [
        "simulate",
        path(&spec),
        "--length",
        "512",
        "--replicates",
        "2",
        "--seed",
        "11",
        "--out",
        path(&out_path),
    ];
    assert_eq!(wavecal(&args).status.code(), Some(0));
    let first: Vec<Vec<u8>> = ["sim_r000.csv", "sim_r001.csv"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    assert!(!out_path.exists());
    assert_ne!(first[0], first[1]);
    assert_eq!(wavecal(&args).status.code(), Some(0));
    for (f, bytes) in ["sim_r000.csv", "sim_r001.csv"].iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), bytes);
    }
}

#[test]
fn fit_report_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_gyros(dir.path(), 4096, 5);
    let spec = docs("three_gyros.toml");
    let run = |threads: &str, name: &str| {
        let report = dir.path().join(name);
        let table = dir.path().join(format!("{name}.csv"));
        let out = wavecal(&[
            "fit",
            path(&data),
            path(&spec),
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            path(&report),
            "--table",
            path(&table),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        (std::fs::read(report).unwrap(), std::fs::read(table).unwrap())
    };
    let one = run("1", "a.json");
    let two = run("2", "b.json");
    assert_eq!(one, two);
    let report: Value = serde_json::from_slice(&one.0).unwrap();
    assert_eq!(report["parameters"].as_array().unwrap().len(), 9);
    let header = String::from_utf8(one.1).unwrap();
    assert!(header.starts_with("i,i_prime,j,tau,gamma_hat,sign,abs_gamma,ci_lo,ci_hi,implied"));
}

#[test]
fn simulate_then_fit_recovers_the_random_walk() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_gyros(dir.path(), 1 << 15, 21);
    let report = dir.path().join("fit.json");
    let out = wavecal(&["fit", path(&data), path(&docs("three_gyros.toml")), "--out", path(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    let truth = read_spec_file(&docs("three_gyros.toml")).unwrap().theta.unwrap();
    for (p, entry) in report["parameters"].as_array().unwrap().iter().enumerate().skip(3) {
        let estimate = entry["estimate"].as_f64().unwrap();
        let se = entry["std_error"].as_f64().unwrap();
        assert!(
            (estimate - truth.values[p]).abs() <= 4.0 * se,
            "{}: {estimate} vs {} (se {se})",
            entry["name"],
            truth.values[p]
        );
    }
}

#[test]
fn blank_cell_is_reported_with_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "gx,gy\n1.0,2.0\n3.0,\n5.0,6.0\n").unwrap();
    let out = wavecal(&["moments", path(&data), "--out", path(&dir.path().join("m.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let message = stderr(&out);
    assert!(message.contains("row 3") && message.contains("gy"), "{message}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavecal(&[
        "moments",
        path(&dir.path().join("absent.csv")),
        "--out",
        path(&dir.path().join("m.csv")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_model_stops_before_fitting() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_gyros(dir.path(), 1024, 1);
    let spec = dir.path().join("bad.toml");
    std::fs::write(
        &spec,
        "channels = 3\nclass = \"M2\"\n\
         [[block]]\nkind = \"AR1\"\nchannels = [1, 2, 3]\n\
         [[block]]\nkind = \"AR1\"\nchannels = [1, 2, 3]\n\
         [[block]]\nkind = \"RW\"\nchannels = [1, 2, 3]\n",
    )
    .unwrap();
    let report = dir.path().join("fit.json");
    let out = wavecal(&["fit", path(&data), path(&spec), "--out", path(&report)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("RW"), "{}", stderr(&out));
    assert!(!report.exists());
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(wavecal(&["fit"]).status.code(), Some(2));
    assert_eq!(wavecal(&["moments", "x.csv", "--out", "y.csv", "--bandwidth", "wide"]).status.code(), Some(2));
    assert_eq!(wavecal(&["--help"]).status.code(), Some(0));
}

#[test]
fn moment_table_has_one_row_per_moment() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_gyros(dir.path(), 2048, 2);
    let table = dir.path().join("m.csv");
    let out = wavecal(&["moments", path(&data), "--levels", "6", "--out", path(&table)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().count(), 1 + 6 * 6);
}

#[test]
fn duplicated_channel_rejects_independence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("twins.csv");
    let walk: Vec<f64> = (0..2048)
        .scan(0.0, |s, t: u64| {
            *s += ((t.wrapping_mul(2654435761) % 1000) as f64 - 499.5) / 1000.0;
            Some(*s)
        })
        .collect();
    let twins = Dataset::new(vec!["a".into(), "b".into()], MultiSignal::new(vec![walk.clone(), walk]).unwrap()).unwrap();
    write_dataset(&data, &twins).unwrap();
    let spec = dir.path().join("shared.toml");
    std::fs::write(
        &spec,
        "channels = 2\nclass = \"M1\"\n\
         [[block]]\nkind = \"WN\"\nchannels = [1, 2]\n\
         [[block]]\nkind = \"RW\"\nchannels = [1, 2]\ncross = \"full\"\n",
    )
    .unwrap();
    let report = dir.path().join("dep.json");
    let out = wavecal(&[
        "test-dep",
        path(&data),
        path(&spec),
        "--bootstrap",
        "19",
        "--seed",
        "7",
        "--out",
        path(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    let retained = report["retained"].as_f64().unwrap();
    assert_eq!(report["p_value"].as_f64().unwrap(), 1.0 / (retained + 1.0));
}

#[test]
fn demean_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("offset.csv");
    let a: Vec<f64> = (0..64).map(|t| 5.0 + (t as f64 * 0.7).sin() / 3.0).collect();
    let b: Vec<f64> = (0..64).map(|t| -1.0 / (t as f64 + 1.0)).collect();
    let ds = Dataset::new(vec!["a".into(), "b".into()], MultiSignal::new(vec![a, b]).unwrap()).unwrap();
    write_dataset(&data, &ds).unwrap();
    let back = ingest(&data, &IngestOptions::default()).unwrap();
    assert_eq!(back.signal, ds.signal);
    assert_eq!(back.names, ds.names);
    let centered = ingest(
        &data,
        &IngestOptions {
            demean: true,
            ..IngestOptions::default()
        },
    )
    .unwrap();
    for i in 0..2 {
        let mean: f64 = centered.signal.channel(i).iter().sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-14, "{mean}");
    }
}
