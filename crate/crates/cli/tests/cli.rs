use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsensemble::series;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tsensemble(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsensemble"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs a bundled config with a small budget into `out`.
fn quick_run(config: &str, seed: &str, out: &Path) {
    let cfg = root().join("configs").join(config);
    let o = tsensemble(&[
        "run",
        cfg.to_str().unwrap(),
        "--seed",
        seed,
        "--restarts",
        "2",
        "--epochs",
        "30",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn report_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn f64s(v: &serde_json::Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn lynx_run_emits_forecast_diagram_data() {
    let dir = tempfile::tempdir().unwrap();
    quick_run("lynx.toml", "5", dir.path());
    for f in [
        "report.txt",
        "report.json",
        "errors.csv",
        "forecasts.csv",
        "trainer_mape.csv",
        "baseline.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let (header, rows) = read_csv(&dir.path().join("forecasts.csv"));
    assert_eq!(rows.len(), 14);
    assert_eq!(header.len(), 3 + 7);
    assert_eq!(&header[..3], ["index", "actual", "combined"]);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert_eq!(
        column(&rows, 0),
        (100..114).map(f64::from).collect::<Vec<_>>()
    );

    // the CSV text parses back to exactly the values in the report
    let report = report_json(dir.path());
    assert_eq!(
        column(&rows, 2),
        f64s(&report["ensemble"]["combined_original"])
    );
    assert_eq!(
        column(&rows, 1),
        f64s(&report["ensemble"]["test_actual_original"])
    );
    for (k, m) in report["ensemble"]["members"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
    {
        assert_eq!(header[3 + k], m["label"].as_str().unwrap());
        assert_eq!(column(&rows, 3 + k), f64s(&m["forecast_original"]));
    }

    let (header, rows) = read_csv(&dir.path().join("trainer_mape.csv"));
    assert_eq!(header, ["trainer", "restart", "seed", "final_loss", "mape"]);
    assert_eq!(rows.len(), 7 * 2);
}

#[test]
fn reported_metrics_recompute_from_forecasts() {
    let dir = tempfile::tempdir().unwrap();
    quick_run("lynx.toml", "6", dir.path());
    let (header, rows) = read_csv(&dir.path().join("forecasts.csv"));
    let actual = column(&rows, 1);
    let (_, err_rows) = read_csv(&dir.path().join("errors.csv"));
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    let mut checked = 0;
    for (i, model) in header.iter().enumerate().skip(2) {
        let name = if model == "combined" {
            "ensemble"
        } else {
            model
        };
        let forecast = column(&rows, i);
        for scale in ["original", "working"] {
            let (a, f) = match scale {
                "original" => (actual.clone(), forecast.clone()),
                _ => (
                    actual.iter().map(|v| v.log10()).collect(),
                    forecast.iter().map(|v| v.log10()).collect(),
                ),
            };
            let e = series::metrics(&a, &f).unwrap();
            let row = err_rows
                .iter()
                .find(|r| r[0] == name && r[1] == scale)
                .unwrap();
            let got: Vec<f64> = row[2..].iter().map(|x| x.parse().unwrap()).collect();
            assert!(
                close(e.mae, got[0]) && close(e.mse, got[1]) && close(e.mape, got[2]),
                "{name} {scale}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 2 * 8);

    let (_, base_rows) = read_csv(&dir.path().join("baseline.csv"));
    let e = series::metrics(&column(&base_rows, 1), &column(&base_rows, 2)).unwrap();
    let row = err_rows
        .iter()
        .find(|r| r[0] == "baseline" && r[1] == "original")
        .unwrap();
    assert!(close(e.mse, row[3].parse().unwrap()));
}

#[test]
fn same_seed_gives_byte_identical_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    quick_run("lynx.toml", "9", a.path());
    quick_run("lynx.toml", "9", b.path());
    quick_run("lynx.toml", "10", c.path());
    for f in [
        "errors.csv",
        "forecasts.csv",
        "trainer_mape.csv",
        "baseline.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(a.path().join("forecasts.csv")).unwrap(),
        fs::read(c.path().join("forecasts.csv")).unwrap()
    );
}

#[test]
fn config_echo_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    quick_run("lynx.toml", "11", a.path());
    let echo = a.path().join("config.toml");
    let o = tsensemble(&[
        "run",
        echo.to_str().unwrap(),
        "--out-dir",
        b.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["errors.csv", "forecasts.csv", "trainer_mape.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn airline_report_has_sarima_row_and_compare_scales_mse() {
    let air = tempfile::tempdir().unwrap();
    let lynx = tempfile::tempdir().unwrap();
    quick_run("airline.toml", "1", air.path());
    quick_run("lynx.toml", "1", lynx.path());
    let text = fs::read_to_string(air.path().join("report.txt")).unwrap();
    assert!(text.contains("SARIMA(0,1,1)x(0,1,1)12"), "{text}");
    let (header, rows) = read_csv(&air.path().join("forecasts.csv"));
    assert_eq!((rows.len(), header.len()), (12, 10));

    let reports = [air.path().to_str().unwrap(), lynx.path().to_str().unwrap()];
    let raw = tsensemble(&["compare", reports[0], reports[1]]);
    assert!(raw.status.success());
    let scaled = tsensemble(&[
        "compare",
        "--scale-mse",
        "--trainers",
        reports[0],
        reports[1],
    ]);
    let raw = String::from_utf8(raw.stdout).unwrap();
    let scaled = String::from_utf8(scaled.stdout).unwrap();
    let rows = |t: &str| -> Vec<Vec<String>> {
        t.lines()
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect()
    };
    let (raw_rows, scaled_rows) = (rows(&raw), rows(&scaled));
    assert_eq!(raw_rows.len(), 4);
    assert_eq!(scaled.lines().next().unwrap().split(',').count(), 4 + 7);
    let cell = |r: &[Vec<String>], i: usize, j: usize| -> f64 { r[i][j].parse().unwrap() };
    // airline MSE shown ×1e-4, MAPE and the lynx rows untouched
    let ratio = cell(&scaled_rows, 0, 3) / cell(&raw_rows, 0, 3);
    assert!((ratio - 1e-4).abs() < 1e-9, "{ratio}");
    assert_eq!(scaled_rows[1][3], raw_rows[1][3]);
    assert_eq!(scaled_rows[2][3], raw_rows[2][3]);
    assert_eq!(raw_rows[0][..2], ["airline".to_string(), "MSE".to_string()]);
}

#[test]
fn split_mismatch_fails_naming_the_fields() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(root().join("configs/lynx.toml"))
        .unwrap()
        .replace("test = 14", "test = 15")
        .replace(
            "../data/lynx.csv",
            root().join("data/lynx.csv").to_str().unwrap(),
        );
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let o = tsensemble(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["split.train", "split.validation", "split.test"] {
        assert!(err.contains(field), "{err}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "dataset = \"x.csv\"\nrestart = 5\n").unwrap();
    let o = tsensemble(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("restart"));
}
