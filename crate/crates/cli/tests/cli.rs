use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opser-sim"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("opser-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn opser-sim")
}

fn csv_rows(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let rows = r.records().map(|x| x.unwrap()).collect();
    (header, rows)
}

const SMALL: &str = r#"
name = "small"
duration_s = 4.0
seeds = [1, 2]

[topology]
kind = "grid"
rows = 3
cols = 3
spacing_m = 10.0
"#;

#[test]
fn run_writes_csv_and_a_valid_trace() {
    let dir = scratch("run");
    let sc = dir.join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let out_dir = dir.join("out");
    let o = run(&[
        "--seed",
        "7",
        "--protocol",
        "oppbcast",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "run",
        sc.to_str().unwrap(),
        "--trace",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out_dir.join("small-oppbcast.csv"));
    assert_eq!(rows.len(), 1);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(&rows[0][col("seed")], "7");
    assert_eq!(&rows[0][col("protocol")], "oppbcast");
    assert_eq!(&rows[0][col("n_nodes")], "9");

    let trace = out_dir.join("small-oppbcast-seed7.trace");
    let v = run(&["validate", trace.to_str().unwrap()]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(" 0 violations"));
}

#[test]
fn run_uses_every_seed_of_the_file() {
    let dir = scratch("seeds");
    let sc = dir.join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let o = run(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "run",
        sc.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (_, rows) = csv_rows(&dir.join("small-opser.csv"));
    assert_eq!(rows.len(), 2);
}

#[test]
fn validate_rejects_a_tampered_trace() {
    let dir = scratch("tamper");
    let sc = dir.join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let o = run(&[
        "--seed",
        "1",
        "--out-dir",
        dir.to_str().unwrap(),
        "run",
        sc.to_str().unwrap(),
        "--trace",
    ]);
    assert!(o.status.success());
    let trace = dir.join("small-opser-seed1.trace");
    let text = fs::read_to_string(&trace).unwrap();
    // Repeating the first flood transmission breaks the send-once rule.
    let cid = text
        .lines()
        .find(|l| l.contains("type=CID"))
        .unwrap()
        .to_string();
    let tampered = text.replacen(&cid, &format!("{cid}\n{cid}"), 1);
    let bad = dir.join("bad.trace");
    fs::write(&bad, tampered).unwrap();
    let v = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stdout).contains("cid_once"));
}

#[test]
fn sweep_writes_runs_and_aggregates() {
    let dir = scratch("sweep");
    fs::write(dir.join("small.toml"), SMALL).unwrap();
    let spec = dir.join("s.toml");
    fs::write(
        &spec,
        r#"
name = "tiny"
base = "small.toml"
seeds = [1, 2, 3]

[sweep]
"topology.side" = [2, 3]
protocol = ["opser", "oppbcast"]
"#,
    )
    .unwrap();
    let out = dir.join("out");
    let o = run(&[
        "--out-dir",
        out.to_str().unwrap(),
        "sweep",
        spec.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, runs) = csv_rows(&out.join("tiny-runs.csv"));
    assert_eq!(runs.len(), 12);
    let mut pairs: Vec<(String, String)> = runs
        .iter()
        .map(|r| (r[1].to_string(), r[3].to_string()))
        .collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 12, "each row is one (point, seed) pair");
    let (header, agg) = csv_rows(&out.join("tiny.csv"));
    assert_eq!(agg.len(), 4);
    assert!(header.iter().any(|h| h == "pdr_mean"));

    // --protocol keeps only the matching points; --seed narrows the seeds.
    let o = run(&[
        "--protocol",
        "oppbcast",
        "--seed",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
        "sweep",
        spec.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (_, runs) = csv_rows(&out.join("tiny-runs.csv"));
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| &r[4] == "oppbcast" && &r[3] == "5"));
}

#[test]
fn bad_sweep_key_fails_before_running() {
    let dir = scratch("badkey");
    let spec = dir.join("s.toml");
    fs::write(
        &spec,
        "name = \"bad\"\n[sweep]\n\"mac.no_such_key\" = [1, 2]\n",
    )
    .unwrap();
    let out = dir.join("out");
    let o = run(&[
        "--out-dir",
        out.to_str().unwrap(),
        "sweep",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("bad-runs.csv").exists());
}

#[test]
fn analyze_writes_tables() {
    let dir = scratch("analyze");
    let o = run(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "analyze",
        "--trials",
        "500",
    ]);
    assert!(o.status.success());
    for f in [
        "analysis-cid-cost.csv",
        "analysis-delivery.csv",
        "analysis-prr.csv",
    ] {
        let (_, rows) = csv_rows(&dir.join(f));
        assert!(!rows.is_empty(), "{f}");
    }
    let (_, rows) = csv_rows(&dir.join("analysis-delivery.csv"));
    for r in rows {
        let po: f64 = r[3].parse().unwrap();
        let pu: f64 = r[4].parse().unwrap();
        assert!(po >= pu);
    }
}

#[test]
fn errors_are_reported() {
    let o = run(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = run(&["--protocol", "aodv", "run", "x.toml"]);
    assert!(!o.status.success());
}

#[test]
fn shipped_scenarios_and_recipes_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for entry in fs::read_dir(root.join("scenarios")).unwrap() {
        let p = entry.unwrap().path();
        opser_core::Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for entry in fs::read_dir(root.join("recipes")).unwrap() {
        let p = entry.unwrap().path();
        let (spec, dir) = opser_core::scenario::sweep::SweepSpec::load(&p).unwrap();
        let plan = spec
            .plan(&dir)
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(plan.run_count() > 0);
    }
}
