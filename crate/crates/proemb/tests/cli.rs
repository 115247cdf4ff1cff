use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny network setting
setting = tiny
runs = 2
n = 100
d = 4
vocab = 60
doc_len = 20
h = mean
epochs = 2
mlp_epochs = 2
methods = oracle, tsls, t-lr, pe-lr
sweep_dims = 2, 4
";

fn proemb(args: &[&str], dir: &Path, env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_proemb"));
    cmd.args(args).current_dir(dir).env("RUST_LOG", "warn");
    match env_seed {
        Some(s) => cmd.env("PROEMB_SEED", s),
        None => cmd.env_remove("PROEMB_SEED"),
    };
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), SMALL).unwrap();
    dir
}

fn lock_value(dir: &Path, key: &str) -> String {
    let lock = std::fs::read_to_string(dir.join("config.lock")).unwrap();
    lock.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap()
        .to_string()
}

#[test]
fn run_writes_lock_and_tables() {
    let dir = setup();
    let out = proemb(&["run", "-c", "tiny.cfg", "--out", "out", "--lambda-rb", "0.5"], dir.path(), None);
    let run = dir.path().join("out");
    for f in ["config.lock", "table.json", "table.csv", "table.md"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(lock_value(&run, "lambda_rb"), "0.5");
    assert_eq!(lock_value(&run, "runs"), "2");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("| method | base learner | input | runs | tiny |"));

    // The lock file is itself a valid config reproducing the same table.
    proemb(&["run", "-c", "out/config.lock", "--out", "again"], dir.path(), None);
    let a = std::fs::read(run.join("table.json")).unwrap();
    let b = std::fs::read(dir.path().join("again/table.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_precedence() {
    let dir = setup();
    proemb(&["generate", "-c", "tiny.cfg", "--out", "a", "--run", "0"], dir.path(), None);
    assert_eq!(lock_value(&dir.path().join("a"), "seed"), "0");
    proemb(&["generate", "-c", "tiny.cfg", "--out", "b", "--run", "0"], dir.path(), Some("5"));
    assert_eq!(lock_value(&dir.path().join("b"), "seed"), "5");
    proemb(&["generate", "-c", "tiny.cfg", "--out", "c", "--run", "0", "--seed", "9"], dir.path(), Some("5"));
    assert_eq!(lock_value(&dir.path().join("c"), "seed"), "9");
    let edges = |d: &str| std::fs::read(dir.path().join(d).join("run-0/edges.csv")).unwrap();
    assert_ne!(edges("a"), edges("b"));
}

#[test]
fn estimate_on_generated_files_matches_simulation() {
    let dir = setup();
    let gen = proemb(&["generate", "-c", "tiny.cfg", "--out", "panels", "--proxies", "sparse"], dir.path(), None);
    assert_eq!(String::from_utf8(gen.stdout).unwrap().lines().count(), 2);
    let header = std::fs::read_to_string(dir.path().join("panels/run-1/proxies.csv")).unwrap();
    assert!(header.starts_with("node,word,count\n"));

    for method in ["tsls", "t-lr", "oracle"] {
        let sim = proemb(&["estimate", "-c", "tiny.cfg", "--method", method, "--run", "1", "--out", "sim"], dir.path(), None);
        let file = proemb(
            &["estimate", "-c", "tiny.cfg", "--method", method, "--run", "1", "--panel", "panels/run-1", "--out", "file"],
            dir.path(),
            None,
        );
        assert_eq!(sim.stdout, file.stdout, "{method}");
    }
    assert!(dir.path().join("file/ite.csv").exists());
}

#[test]
fn estimate_saves_proemb_checkpoint() {
    let dir = setup();
    proemb(&["estimate", "-c", "tiny.cfg", "--method", "pe-lr", "--out", "pe", "--save-model"], dir.path(), None);
    let (_, sidecar) = proemb::formats::load_checkpoint(&dir.path().join("pe")).unwrap();
    assert_eq!((sidecar.d, sidecar.vocab, sidecar.epochs), (4, 60, 2));
    assert_eq!(sidecar.loss_trace.len(), 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pe/estimate.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "pe-lr");
    assert_eq!(report["d_or_V"], 4);
}

#[test]
fn sweep_and_report() {
    let dir = setup();
    proemb(&["sweep", "-c", "tiny.cfg", "--out", "sw", "--dims", "2,3"], dir.path(), None);
    let table = proemb::formats::read_table(&dir.path().join("sw/table.json")).unwrap();
    assert_eq!(table.settings, ["dim=2", "dim=3"]);
    assert_eq!(lock_value(&dir.path().join("sw"), "sweep_dims"), "2,3");

    let md = proemb(&["report", "sw/table.json"], dir.path(), None);
    let md = String::from_utf8(md.stdout).unwrap();
    assert!(md.lines().all(|l| l.matches('|').count() == 4 + 2 + 1));
    proemb(&["report", "sw/table.json", "--format", "json", "--out", "copy.json"], dir.path(), None);
    assert_eq!(
        std::fs::read(dir.path().join("copy.json")).unwrap(),
        std::fs::read(dir.path().join("sw/table.json")).unwrap()
    );
    let csv = proemb(&["report", "sw/table.json", "--format", "csv"], dir.path(), None);
    assert!(String::from_utf8(csv.stdout).unwrap().starts_with("method,setting,runs,successes,rmse,mean,std,estimates\n"));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = setup();
    for args in [
        vec!["run", "-c", "tiny.cfg", "--out", "x", "--runs", "0"],
        vec!["run", "-c", "missing.cfg", "--out", "x"],
        vec!["estimate", "-c", "tiny.cfg", "--method", "nope", "--out", "x"],
        vec!["sweep", "-c", "tiny.cfg", "--out", "x", "--dims", "500"],
        vec!["report", "nothing.json"],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_proemb"))
            .args(&args)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error:"), "{args:?}");
    }
}
