use std::path::Path;
use std::process::{Command, Output};

fn reclab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reclab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
epsilons = [0.0, 0.1]
seeds = [0]
methods = ["SCFE", "GSM"]
max_instances = 5
[dataset]
kind = "synthetic"
n_per_class = 30
d = 2
class_separation = 1.0
noise_std = 0.5
[train]
epochs = 100
"#;

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.display().to_string()
}

#[test]
fn sweep_writes_all_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = reclab(&["sweep", "--config", &cfg, "--output", "out"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "results.csv",
        "bounds.csv",
        "conditions.csv",
        "summary.json",
        "plotdata/validity_vs_eps.csv",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    let results = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2);
    assert!(results
        .lines()
        .next()
        .unwrap()
        .contains("adv_accuracy_eps0.1"));

    let rep = reclab(&["report", "out"], dir.path());
    assert!(rep.status.success());
    let text = String::from_utf8(rep.stdout).unwrap();
    assert!(text.contains("SCFE") && text.contains("GSM"));
}

#[test]
fn flags_override_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = reclab(
        &[
            "sweep",
            "--config",
            &cfg,
            "--epsilons",
            "0,0.05,0.2",
            "--methods",
            "SCFE",
            "--output",
            "o",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = std::fs::read_to_string(dir.path().join("o/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 3);

    let out = reclab(
        &[
            "sweep",
            "--config",
            &cfg,
            "--methods",
            "GSM",
            "--family",
            "mlp",
            "--depth",
            "1",
            "--width",
            "4",
            "--output",
            "m",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = std::fs::read_to_string(dir.path().join("m/results.csv")).unwrap();
    assert!(
        results.lines().skip(1).all(|l| l.contains(",mlp,1,4,GSM,")),
        "{results}"
    );
}

#[test]
fn verify_bounds_prints_totals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = reclab(
        &[
            "verify-bounds",
            "--config",
            &cfg,
            "--methods",
            "SCFE",
            "--output",
            "b",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with("bounds: ") && text.contains("0 violations"),
        "{text}"
    );
    assert!(dir.path().join("b/bounds.csv").is_file());
}

#[test]
fn train_then_recourse_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = reclab(
        &[
            "train",
            "--config",
            &cfg,
            "--epsilon",
            "0.1",
            "--out",
            "m.txt",
            "--log",
            "run.jsonl",
            "--vae-out",
            "vae.txt",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let log = std::fs::read_to_string(dir.path().join("run.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 100);
    assert!(std::fs::read_to_string(dir.path().join("m.txt"))
        .unwrap()
        .starts_with("reclab-model 1"));

    for method in ["SCFE", "GSM", "CCHVAE"] {
        let out = reclab(
            &[
                "recourse", "--config", &cfg, "--model", "m.txt", "--vae", "vae.txt", "--method",
                method,
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{method}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let csv = String::from_utf8(out.stdout).unwrap();
        assert!(csv.lines().count() > 1, "{method}");
        assert!(csv.lines().skip(1).all(|l| l.contains(method)));
    }

    let out = reclab(
        &[
            "recourse", "--model", "m.txt", "--method", "GSM", "--point", "-1.0,0.2",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = reclab(&["sweep", "--config", "nope.toml"], dir.path());
    assert!(!missing.status.success());
    let bad_grid = reclab(&["sweep", "--epsilons", "0.1,0.2"], dir.path());
    assert!(!bad_grid.status.success());
    assert!(String::from_utf8_lossy(&bad_grid.stderr).contains("epsilon"));
    let positive = reclab(&["train", "--out", "m.txt", "--epochs", "50"], dir.path());
    assert!(positive.status.success());
    let already = reclab(
        &[
            "recourse", "--model", "m.txt", "--method", "SCFE", "--point", "5,0",
        ],
        dir.path(),
    );
    assert!(!already.status.success());
}
