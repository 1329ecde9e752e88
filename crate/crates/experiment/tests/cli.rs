use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qfi_experiment::output::read_table;
use qfi_experiment::{ExperimentConfig, RunManifest};

fn qfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfi")).args(args).output().expect("spawn qfi")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn rmt_config(dir: &Path, extra: &str) -> String {
    format!(
        "scenario = \"rmt-qfi\"\nn_realizations = 4\nseed = 42\noutput_dir = \"{}\"\n{extra}\n[rmt]\nn = 80\ng = 2.0\n[time]\nstart = 0.1\nstop = 20.0\npoints = 6\nunit = \"inverse-gamma\"\n",
        dir.display()
    )
}

fn spin_config(dir: &Path, n: usize, states: &str) -> String {
    format!(
        "scenario = \"spin-qfi\"\nn_realizations = 2\nseed = 3\noutput_dir = \"{}\"\nprobe_time = 50.0\n\
         [spin]\nn = {n}\nb = 0.01\nbx_bath = 0.3\njx = 1.0\njz_sb = 0.2\njx_sb = 0.4\nn_system = 1\n\
         couplings = [{{ system_site = 1, bath_site = 5 }}]\n\
         [analysis]\ninitial_states = {states}\nfit_stop = 20.0\nfit_points = 40\n\
         [time]\nstart = 0.1\nstop = 100.0\npoints = 5\n",
        dir.display()
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_reports_field_and_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write(tmp.path(), "good.toml", &rmt_config(&tmp.path().join("o"), ""));
    assert_eq!(code(&qfi(&["validate", &good])), 0);

    let bad = write(tmp.path(), "bad.toml", &rmt_config(&tmp.path().join("o"), "").replace("g = 2.0", "g = -1.0"));
    let out = qfi(&["validate", &bad]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rmt.g"));

    let unknown = write(tmp.path(), "unknown.toml", &format!("{}bogus = 1\n", rmt_config(&tmp.path().join("o"), "")));
    let out = qfi(&["validate", &unknown]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn dry_run_writes_planned_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("dry");
    let cfg = write(tmp.path(), "c.toml", &rmt_config(&dir, ""));
    assert_eq!(code(&qfi(&["run", "--dry-run", &cfg])), 0);
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.realizations.len(), 4);
    assert!(!dir.join("aggregate.csv").exists());
}

#[test]
fn rerun_from_manifest_is_bit_identical_and_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let cfg = write(tmp.path(), "c.toml", &rmt_config(&first, ""));
    assert_eq!(code(&qfi(&["--workers", "1", "run", &cfg])), 0);

    // the manifest carries the full config; point it at a new directory
    let manifest = fs::read_to_string(first.join("manifest.toml")).unwrap();
    let second = tmp.path().join("second");
    let replayed = manifest.replace(&first.display().to_string(), &second.display().to_string());
    let replay = write(tmp.path(), "replay.toml", &replayed);
    assert_eq!(code(&qfi(&["--workers", "3", "run", &replay])), 0);

    for k in 0..4 {
        let name = format!("realization_{k:04}.csv");
        assert_eq!(fs::read(first.join(&name)).unwrap(), fs::read(second.join(&name)).unwrap(), "{name}");
    }
    assert_eq!(fs::read(first.join("aggregate.csv")).unwrap(), fs::read(second.join("aggregate.csv")).unwrap());
}

#[test]
fn aggregate_mean_matches_realizations() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("agg");
    let cfg = write(tmp.path(), "c.toml", &rmt_config(&dir, ""));
    assert_eq!(code(&qfi(&["run", &cfg])), 0);
    let tables: Vec<_> = (0..4).map(|k| read_table(&dir.join(format!("realization_{k:04}.csv")), 0).unwrap()).collect();
    let agg = read_table(&dir.join("aggregate.csv"), 0).unwrap();
    let mean = agg.column("F_Q_exact_mean").unwrap();
    for (row, m) in mean.iter().enumerate() {
        let direct: f64 = tables.iter().map(|t| t.column("F_Q_exact").unwrap()[row]).sum::<f64>() / 4.0;
        assert!((m - direct).abs() <= 1e-12 * direct.abs(), "row {row}: {m} vs {direct}");
    }
    let report = qfi(&["report", &dir.to_string_lossy()]);
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stdout).contains("median_rel_dev"));
}

#[test]
fn sweep_writes_summary_and_rejects_single_point() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sweep");
    let body = format!("{}[sweep]\nparameter = \"rmt.n\"\nvalues = [60, 90]\n", rmt_config(&dir, ""));
    let cfg = write(tmp.path(), "s.toml", &body);
    let out = qfi(&["sweep", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("summary.csv").exists());
    assert!(dir.join("point_000/manifest.toml").exists() && dir.join("point_001/manifest.toml").exists());
    assert!(fs::read_to_string(dir.join("monotonicity.txt")).unwrap().contains("median_rel_dev"));

    let single = write(tmp.path(), "one.toml", &body.replace("[60, 90]", "[60]"));
    let out = qfi(&["sweep", &single]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.values"));
}

#[test]
fn failed_realizations_above_threshold_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fail");
    // valid config, but 64 levels are too few for the density-of-states estimate
    let states = "[{ kind = \"basis-eigenstate\", index = 20 }, { kind = \"antiferromagnetic\" }]";
    let cfg = write(tmp.path(), "f.toml", &spin_config(&dir, 6, states));
    assert_eq!(code(&qfi(&["validate", &cfg])), 0);
    let out = qfi(&["run", &cfg]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!((m.n_ok, m.n_failed), (0, 2));
    assert!(m.prepare_error.is_some());
}

#[test]
fn spin_run_records_fit_and_cfi() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("spin");
    let states = "[{ kind = \"system-superposition\", index = 20 }, { kind = \"antiferromagnetic\" }]";
    let cfg = write(tmp.path(), "s.toml", &spin_config(&dir, 7, states));
    let out = qfi(&["run", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let t = read_table(&dir.join("realization_0000.csv"), 0).unwrap();
    let (f, c) = (t.column("F_Q_exact").unwrap(), t.column("CFI_pop").unwrap());
    assert!(f.iter().zip(&c).all(|(f, c)| *c <= f * (1.0 + 1e-3)));
    let m = RunManifest::read(&dir).unwrap();
    assert!(m.derived.contains_key("gamma_hat"));
    let replay = ExperimentConfig::load(&dir.join("manifest.toml")).unwrap();
    assert_eq!(replay.n_realizations, 2);
}
