use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const KOLMOGOROV: &str = "[operator]\nq = [[1.0, 0.0], [0.0, 0.0]]\nb = [[0.0, 0.0], [1.0, 0.0]]\n";

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypoell"))
        .args(args)
        .env("HYPOELL_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn analyze_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let k = configs().join("kolmogorov.toml");
    let o = run(&["analyze", "--config", k.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("block sizes: (1,1)"));
    assert!(tmp.path().join("analyze.csv").exists());

    let d = configs().join("degenerate.toml");
    let o = run(&["analyze", "--config", d.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("not hypoelliptic"));

    let bad = write_config(
        tmp.path(),
        "bad.toml",
        "[operator]\nq = [[1.0, 0.0]]\nb = 3\n",
    );
    let o = run(&["analyze", "--config", &bad], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        &["analyze", "--config", "/nonexistent/run.toml"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["analyze"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--seed", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(tmp.path().join("qh_table.csv").exists());

    let o = run(&["verify", "--mutate", "qh"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL after"), "{}", stdout(&o));

    let empty = write_config(tmp.path(), "empty.toml", "[verify.bounds]\n");
    let o = run(&["verify", "--config", &empty], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let zero = write_config(
        tmp.path(),
        "zero.toml",
        "[verify.bounds]\nr_max = 2\nk_max = 0\nh_max = 2\n",
    );
    let o = run(&["verify", "--config", &zero], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["verify", "--mutate", "nonsense"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["verify", "--jobs", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_decay_reports_target_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let k = configs().join("kolmogorov.toml");
    let o = run(&["fit-decay", "--config", k.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(tmp.path().join("decay.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "oracle");
    assert_eq!(row[8], "-1.500000");
    assert_eq!(row[10], "true");

    let again = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "fit-decay",
            "--config",
            k.to_str().unwrap(),
            "--out",
            again.path().to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    for f in ["decay.csv", "decay_samples_oracle.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }

    let missing = write_config(
        tmp.path(),
        "missing.toml",
        &format!("{KOLMOGOROV}[fit_decay]\ndatum = {{ kind = \"gaussian\", width = 1.0 }}\n"),
    );
    let o = run(&["fit-decay", "--config", &missing], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_and_solver_modes_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let c = configs().join("decay_both.toml");
    let o = run(&["fit-decay", "--config", c.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(tmp.path().join("decay.csv")).unwrap();
    let slopes: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(slopes.len(), 2);
    assert!((slopes[0] - slopes[1]).abs() < 0.1, "{slopes:?}");
}

#[test]
fn simulate_and_schauder_on_a_coarse_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{KOLMOGOROV}[grid]\nradius = 4.0\nspacing = 0.1\n\
         [simulate]\ntimes = [0.1, 0.2]\ndatum = {{ kind = \"gaussian\", width = 1.0 }}\n\
         [schauder]\ndata = [{{ kind = \"gaussian\", width = 1.0 }}, {{ kind = \"lorentzian\", scale = 1.0 }}]\n"
    );
    let c = write_config(tmp.path(), "coarse.toml", &body);
    let o = run(&["simulate", "--config", &c, "--jobs", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(tmp.path().join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(tmp.path().join("u_001.csv").exists());
    let first = std::fs::read(tmp.path().join("simulate.csv")).unwrap();
    run(&["simulate", "--config", &c], tmp.path());
    assert_eq!(
        first,
        std::fs::read(tmp.path().join("simulate.csv")).unwrap()
    );

    let o = run(&["schauder", "--config", &c], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("ratio spread"));
}

#[test]
fn simulate_reports_maximum_principle_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{KOLMOGOROV}[grid]\nupwind = \"never\"\n\
         [simulate]\ntimes = [0.1]\ndatum = {{ kind = \"tanh-ridge\", direction = [0.0, 1.0], scale = 1.0 }}\n"
    );
    let c = write_config(tmp.path(), "central.toml", &body);
    let o = run(&["simulate", "--config", &c], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("maximum principle"));
}
