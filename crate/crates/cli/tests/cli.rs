use std::fs;
use std::path::Path;
use std::process::Command;

use nvmaser::config::Config;
use nvmaser_cli::fig2::run_fig2;
use nvmaser_cli::settings::Settings;
use nvmaser_cli::single::run_single;
use nvmaser_cli::sweep::{run_sweep, SweepSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nvmaser"))
}

fn settings(lines: &[&str]) -> Settings {
    Settings::from_config(Config::parse(&lines.join("\n")).unwrap())
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[k].to_string()).collect()
}

const SMALL_SWEEP: &[&str] = &[
    "preset = breeze2018",
    "temperature = 0.025",
    "axis1 = eta_over_gamma log 1e-2 1e4 7",
    "axis2 = n_spins log 1e12 1e15 4",
];

fn run_cli(dir: &Path, workers: &str, args: &[&str]) -> std::process::Output {
    bin().args(args).args(["--workers", workers, "--out"]).arg(dir).output().unwrap()
}

#[test]
fn sweep_output_is_byte_identical_across_runs_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.cfg");
    fs::write(&cfg, SMALL_SWEEP.join("\n")).unwrap();
    let mut files = Vec::new();
    for (k, workers) in ["1", "4", "4"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{k}"));
        let out = run_cli(&dir, workers, &["sweep", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(fs::read(dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
}

#[test]
fn every_row_carries_hash_and_units() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = settings(SMALL_SWEEP);
    let spec = SweepSpec::from_settings(&mut s).unwrap();
    let meta = run_sweep(&s, &spec, tmp.path()).unwrap();
    assert_eq!(meta.points, 28);
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 29);
    assert!(column(&text, "config_hash").iter().all(|h| *h == s.hash && h.len() == 16));
    assert!(column(&text, "units").iter().all(|u| u == "angular"));
}

#[test]
fn ascending_and_descending_continuation_agree_off_flagged_points() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = settings(SMALL_SWEEP);
    let spec = SweepSpec::from_settings(&mut s).unwrap();
    run_sweep(&s, &spec, tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let up = column(&text, "photon_number");
    let down = column(&text, "photon_number_descending");
    let flag = column(&text, "hysteresis");
    for ((a, b), f) in up.iter().zip(&down).zip(&flag) {
        let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
        if f == "false" {
            assert!((a - b).abs() <= 0.01 * a.abs().max(b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn sweep_reports_threshold_knee_along_pump_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = settings(SMALL_SWEEP);
    let spec = SweepSpec::from_settings(&mut s).unwrap();
    run_sweep(&s, &spec, tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let n: Vec<f64> = column(&text, "n_spins").iter().map(|x| x.parse().unwrap()).collect();
    let regime = column(&text, "regime");
    // at N = 1e15 the highest pump masing, the lowest does not
    let row: Vec<&String> = n.iter().zip(&regime).filter(|(x, _)| (**x - 1e15).abs() < 1e9).map(|(_, r)| r).collect();
    assert_eq!(row.first().unwrap().as_str(), "superradiance");
    assert_eq!(row.last().unwrap().as_str(), "superradiant_maser");
}

#[test]
fn bad_configuration_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(tmp.path(), "1", &["single", "--override", "g=abc"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_cli(tmp.path(), "1", &["single", "--preset", "nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_cli(tmp.path(), "1", &["sweep", "--override", "axis1=eta log -1 2 5", "--override", "axis2=g linear 0 1 3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_cli(tmp.path(), "1", &["sweep", "--override", "axis1=eta log 1 2 1", "--override", "axis2=g linear 0 1 3"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = tmp.path().join("missing.cfg");
    let out = run_cli(tmp.path(), "1", &["single", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_masing_example_in_hertz() {
    let tmp = tempfile::tempdir().unwrap();
    let s = settings(&["units = hertz", "preset = breeze2018", "temperature = 0.025", "eta_over_gamma = 1e3"]);
    let r = run_single(&s, tmp.path()).unwrap();
    assert_eq!(format!("{:?}", r.regime), "SuperradiantMaser");
    let w = r.linewidth.unwrap();
    assert!(w > 0.0 && w < 1e-3, "{w}");
    let text = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    assert!(column(&text, "units").iter().all(|u| u == "hertz"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["regime"], "superradiant_maser");
}

#[test]
fn single_unpumped_cold_gives_two_broad_peaks() {
    let tmp = tempfile::tempdir().unwrap();
    let s = settings(&["units = hertz", "preset = breeze2018", "temperature = 0.025", "eta = 0"]);
    let r = run_single(&s, tmp.path()).unwrap();
    assert!(r.steady.photon_number < 1e-3);
    assert_eq!(r.peaks.len(), 2);
    assert!(r.peaks.iter().all(|p| p.fwhm > 1e5), "{:?}", r.peaks);
}

#[test]
fn uncoupled_configuration_is_thermal() {
    let tmp = tempfile::tempdir().unwrap();
    let s = settings(&["g = 0", "eta_over_gamma = 10"]);
    let r = run_single(&s, tmp.path()).unwrap();
    let n_th = r.rates.n_c_th;
    assert!((r.steady.photon_number - n_th).abs() <= 1e-12 * n_th);
    assert_eq!(r.steady.spin_photon.norm(), 0.0);
    let expected = (r.params.eta - r.params.gamma) / (r.params.eta + r.params.gamma * (2.0 * r.rates.n_k_th + 1.0));
    assert!((r.steady.inversion - expected).abs() < 1e-12);
}

#[test]
fn trajectory_is_written_when_requested() {
    let tmp = tempfile::tempdir().unwrap();
    let s = settings(&["temperature = 0.025", "eta_over_gamma = 100", "t_end = 1e-3", "samples = 10"]);
    run_single(&s, tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(column(&text, "t").len(), 10);
}

#[test]
fn presets_lists_every_parameter_set() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(tmp.path(), "2", &["presets"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("breeze2018"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("presets.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 6);
}

#[test]
fn oracle_check_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(tmp.path(), "2", &["oracle-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("oracle_report.json")).unwrap()).unwrap();
    assert!(report.as_array().unwrap().iter().all(|r| r["pass"] == true));
}

#[test]
fn fig2_writes_spectra_and_peak_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let s = settings(&["units = hertz", "preset = breeze2018", "classes = 8", "eta_over_gamma_list = 1e-3, 1e3"]);
    let r = run_fig2(&s, tmp.path()).unwrap();
    assert_eq!(r.spectra.len(), 2);
    assert!(r.spectra.iter().all(|e| e.status == "ok"));
    assert!(r.spectra[1].photon_number.unwrap() > r.spectra[0].photon_number.unwrap());
    let classes = fs::read_to_string(tmp.path().join("fig2_classes.csv")).unwrap();
    assert_eq!(column(&classes, "class").len(), 16);
    let counts: f64 = column(&classes, "count").iter().take(8).map(|c| c.parse::<f64>().unwrap()).sum();
    assert_eq!(counts, 4e13);
    let spectra = fs::read_to_string(tmp.path().join("fig2_spectra.csv")).unwrap();
    let etas = column(&spectra, "eta_over_gamma");
    assert!(etas.iter().any(|e| e == "1e-3") && etas.iter().any(|e| e == "1e3"));
    assert!(tmp.path().join("fig2_peaks.json").exists());
}
