use std::path::Path;
use std::process::{Command, Output};

fn patchsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchsim"))
        .args(args)
        .current_dir(dir)
        .env("PATCHSIM_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn meanfield_reports_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let o = patchsim(&["meanfield", "--a", "3", "--u0", "0.9"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("extinct"));
    let o = patchsim(&["meanfield", "--a", "4.5", "--u0", "0.5"], dir.path());
    assert!(stdout(&o).starts_with("upper_equilibrium 0.6667"), "{}", stdout(&o));
    let o = patchsim(&["meanfield", "--a", "4.5", "--u0", "0.3333333", "--t-max", "20"], dir.path());
    assert!(stdout(&o).starts_with("undetermined"), "{}", stdout(&o));
    assert!(dir.path().join("meanfield.csv").exists());
    assert!(dir.path().join("meanfield.csv.manifest.toml").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&patchsim(&["meanfield", "--a", "3", "--u0", "1.5"], dir.path())), 2);
    let small_torus = ["simulate", "--a", "1", "--b", "1", "--n", "5", "--m", "2", "--l", "4"];
    assert_eq!(code(&patchsim(&small_torus, dir.path())), 2);
    let empty = ["sweep", "--a", "2", "--b", "1", "--n", "10", "--l", "21", "--m-list", ""];
    assert_eq!(code(&patchsim(&empty, dir.path())), 2);
    assert_eq!(code(&patchsim(&["sweep", "--a", "2", "--b", "1", "--n", "10", "--l", "21"], dir.path())), 2);
    assert_eq!(code(&patchsim(&["no-such-command"], dir.path())), 2);
    assert_eq!(code(&patchsim(&["--help"], dir.path())), 0);
}

#[test]
fn subcritical_simulation_dies_out() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--a", "0.4", "--b", "0.4", "--n", "20", "--m", "1", "--l", "21", "--replicas", "200"];
    let o = patchsim(&args, dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("point=0"), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "replica,survived,extinction_time,terminal_time,events");
    assert_eq!(lines.count(), 200);
}

#[test]
fn manifest_rerun_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 3] = [
        &["simulate", "--a", "1", "--b", "2", "--n", "8", "--l", "7", "--replicas", "30", "--seed", "7"],
        &["dual", "--mode", "full", "--l", "3", "--n", "3", "--a", "1", "--b", "1", "--t", "1", "--replicas", "50"],
        &["percolation", "--q", "0.3", "--levels", "20", "--replicas", "100", "--seed", "3"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let first = format!("first{k}.csv");
        let second = format!("second{k}.csv");
        let mut a = args.to_vec();
        a.extend(["--out", &first]);
        assert_eq!(code(&patchsim(&a, dir.path())), 0, "{args:?}");
        let manifest = format!("{first}.manifest.toml");
        let o = patchsim(&["--config", &manifest, args[0], "--out", &second], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let x = std::fs::read(dir.path().join(&first)).unwrap();
        let y = std::fs::read(dir.path().join(&second)).unwrap();
        assert_eq!(x, y, "{args:?}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "q = 1.0\nlevels = 10\nreplicas = 20\n").unwrap();
    let o = patchsim(&["--config", "c.toml", "percolation"], dir.path());
    assert!(stdout(&o).starts_with("survival 0"), "{}", stdout(&o));
    let o = patchsim(&["--config", "c.toml", "percolation", "--q", "0"], dir.path());
    assert!(stdout(&o).starts_with("survival 1"), "{}", stdout(&o));
    let manifest = std::fs::read_to_string(dir.path().join("percolation.csv.manifest.toml")).unwrap();
    assert!(manifest.contains("q = 0.0"), "{manifest}");
    assert!(manifest.contains("levels = 10"), "{manifest}");
}

#[test]
fn sweep_bound_column_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let args =
        ["sweep", "--a", "2", "--b", "1", "--n", "6", "--l", "41", "--m-list", "1,2,4", "--replicas", "20"];
    assert_eq!(code(&patchsim(&args, dir.path())), 0);
    let mut reader = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let bounds: Vec<f64> = reader.records().map(|r| r.unwrap()[5].parse().unwrap()).collect();
    assert_eq!(bounds.len(), 3);
    assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");
}

#[test]
fn dual_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = patchsim(&["dual", "--mode", "zeta", "--a", "1", "--b", "2", "--t", "30", "--replicas", "2000"], dir.path());
    assert_eq!(code(&o), 0);
    let o = patchsim(&["dual", "--mode", "zeta", "--a", "3", "--b", "3", "--t", "2", "--replicas", "200"], dir.path());
    assert!(stdout(&o).contains("0.2113") && stdout(&o).contains("0.788675"), "{}", stdout(&o));
    let args = ["dual", "--mode", "full", "--l", "3", "--n", "3", "--a", "1", "--b", "1", "--t", "1", "--replicas", "300"];
    let mut a = args.to_vec();
    a.push("--check-duality");
    let o = patchsim(&a, dir.path());
    assert!(stdout(&o).contains("300/300 duality checks passed"), "{}", stdout(&o));
}

#[test]
fn bounds_and_drift_scan() {
    let dir = tempfile::tempdir().unwrap();
    let o = patchsim(&["bounds", "--a", "2", "--b", "1", "--n", "50", "--m", "1000000000"], dir.path());
    assert!(stdout(&o).contains("0.1005"), "{}", stdout(&o));
    assert!(dir.path().join("bounds.csv.occupation.csv").exists());
    let o = patchsim(&["drift-scan", "--lemma", "outer-sum", "--b", "9", "--n", "400"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("PASS margin="), "{}", stdout(&o));
    let o = patchsim(&["drift-scan", "--lemma", "outer-up", "--b", "9", "--n", "100"], dir.path());
    assert_eq!(code(&o), 4, "{}", stdout(&o));
    assert!(dir.path().join("drift-scan.csv").exists());
}
