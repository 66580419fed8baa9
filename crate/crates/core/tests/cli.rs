use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pdcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdcov")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(name).display().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[test]
fn simulate_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p = 6\nn_values = [3, 4]\nm = 10\nmaster_seed = 5\n");
    let out = dir.path().join("out");
    let o = pdcov(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "markdown"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["overdispersion.csv", "explained.csv", "cse.csv", "sweep.csv", "manifest.json", "tables.md"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let lines = csv_lines(&out.join("cse.csv"));
    assert_eq!(lines[0], "n,POP,MLE,LW,PDC,SPDC,LSPDC,MAXPDC,RPDC");
    assert_eq!(lines.len(), 3);
    let md = fs::read_to_string(out.join("tables.md")).unwrap();
    let cell = lines[1].split(',').nth(5).unwrap();
    assert!(md.contains(cell));
}

#[test]
fn pcs_flag_adds_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p = 5\nn_values = [3]\nm = 4\n");
    let out = dir.path().join("out");
    let o = pdcov(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--pcs", "2"]);
    assert!(o.status.success());
    assert!(out.join("cse_pc2.csv").exists());
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p = 5\nn_values = [3]\nm = 4\n");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(pdcov(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]).status.success());
        csv_lines(&out.join("cse.csv"))
    };
    assert_ne!(run("1", "a"), run("2", "b"));
    assert_eq!(run("1", "a"), run("1", "c"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad = write(dir.path(), "bad.toml", "p = 5\ncolour = \"red\"\n");
    assert_eq!(pdcov(&["simulate", "--config", &bad, "--out", out]).status.code(), Some(2));
    let bad = write(dir.path(), "bad2.toml", "n_values = [1]\n");
    assert_eq!(pdcov(&["simulate", "--config", &bad, "--out", out]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(pdcov(&["simulate", "--config", missing.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    assert_eq!(pdcov(&["analyze", "--data", &fixture("data/missing.tsv"), "--out", out]).status.code(), Some(2));
}

#[test]
fn failure_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "n_values = [2]\nm = 50\n");
    let out = dir.path().join("out");
    let o = pdcov(&[
        "analyze", "--config", &cfg, "--data", &fixture("tests/fixtures/mostly_constant_10x3.tsv"),
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn analyze_fixture_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "m = 3\nestimators = [\"MLE\", \"SPDC\"]\n");
    let out = dir.path().join("out");
    let o = pdcov(&[
        "analyze", "--config", &cfg, "--data", &fixture("data/expression_fixture_200x74.tsv"),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&out.join("overdispersion.csv"));
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("5,") && lines[11].starts_with("15,"));
}

#[test]
fn estimate_identical_estimators_levene_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p = 6\nn_values = [4]\nestimators = [\"MLE\", \"MLE\"]\n");
    let out = dir.path().join("out");
    let o = pdcov(&["estimate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("MLE.csv").exists() && out.join("MLE_2.csv").exists() && out.join("POP.csv").exists());
    let lev = csv_lines(&out.join("levene.csv"));
    assert_eq!(lev.len(), 3);
    for row in &lev[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[4].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn estimate_single_estimator_has_no_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p = 6\nn_values = [4]\nestimators = [\"LW\"]\n");
    let out = dir.path().join("out");
    assert!(pdcov(&["estimate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(!out.join("levene.csv").exists());
    assert!(!fs::read_to_string(out.join("summary.md")).unwrap().contains("Levene"));
}

#[test]
fn report_ranks_and_preserves_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "p = 6\nn_values = [3, 4]\nm = 8\n");
    let run = dir.path().join("run");
    assert!(pdcov(&["simulate", "--config", &cfg, "--out", run.to_str().unwrap()]).status.success());
    let rep = dir.path().join("rep");
    let o = pdcov(&["report", "--input", run.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = fs::read_to_string(rep.join("report.md")).unwrap();
    assert!(md.contains("[1st]") && md.contains("### Ranking"));
    for line in csv_lines(&run.join("overdispersion.csv")).iter().skip(1) {
        for cell in line.split(',').skip(1) {
            assert!(md.contains(cell), "{cell}");
        }
    }
}

#[test]
fn report_single_method_has_no_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    write(&input, "cse.csv", "n,MLE\n5,0.5\n6,0.4\n");
    let rep = dir.path().join("rep");
    assert!(pdcov(&["report", "--input", input.to_str().unwrap(), "--out", rep.to_str().unwrap()]).status.success());
    let md = fs::read_to_string(rep.join("report.md")).unwrap();
    assert!(!md.contains("Ranking") && !md.contains("[1st]"));
}

#[test]
fn report_without_tables_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdcov(&["report", "--input", dir.path().to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
