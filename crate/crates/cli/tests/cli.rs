mod common;

use std::fs;
use std::path::Path;
use std::process::Child;

use common::{p, run, spawn_master, stderr, stdout, write_config, write_synthetic};
use fet_core::forest::load_model;

const BASE: &str = r#"
data = "data.csv"
label_column = "label"
classes = ["no", "yes"]
timeout_secs = 20
[session]
clients = 2
trees = 4
max_depth = 6
seed = 3
"#;

fn setup(rows: usize) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(&dir.path().join("data.csv"), rows);
    let cfg = write_config(dir.path(), "run.toml", BASE);
    (dir, cfg)
}

fn wait(child: Child) -> std::process::Output {
    child.wait_with_output().unwrap()
}

#[test]
fn simulate_writes_model_and_reports_deterministically() {
    let (dir, cfg) = setup(300);
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("privacy: none"), "{}", stdout(&o));
    let model = fs::read(out.join("model.json")).unwrap();
    let report = fs::read(out.join("report.json")).unwrap();
    assert!(out.join("report.txt").exists());
    let forest = load_model(out.join("model.json")).unwrap();
    assert_eq!(forest.trees.len(), 4);
    let json: serde_json::Value = serde_json::from_slice(&report).unwrap();
    assert!(json["accuracy"]["mean"].as_f64().unwrap() > 0.7, "{json}");

    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(out.join("model.json")).unwrap(), model);
    assert_eq!(fs::read(out.join("report.json")).unwrap(), report);
}

#[test]
fn flags_take_precedence_over_the_config_file() {
    let (dir, cfg) = setup(200);
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&out), "--trees", "2", "--privacy", "gdp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let forest = load_model(out.join("model.json")).unwrap();
    let session = &forest.training.as_ref().unwrap().session;
    assert_eq!(forest.trees.len(), 2);
    assert_eq!(session.max_depth, 6, "file value kept");
    assert_eq!(session.min_samples_leaf, 1, "default kept");
    assert!(stdout(&o).contains("total epsilon"), "{}", stdout(&o));
}

#[test]
fn invalid_config_key_is_named() {
    let (dir, _) = setup(50);
    let cfg = write_config(dir.path(), "bad.toml", "data = \"data.csv\"\n[session]\ntress = 3\n");
    let o = run(&["simulate", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tress"), "{}", stderr(&o));
}

#[test]
fn invalid_values_are_config_errors() {
    let (_dir, cfg) = setup(50);
    let o = run(&["simulate", "--config", p(&cfg), "--trees", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(&["simulate", "--config", p(&cfg), "--privacy", "sometimes"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--data", p(&dir.path().join("nope.csv")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn shard(dir: &Path, cfg: &Path) -> std::path::PathBuf {
    let shards = dir.join("shards");
    let o = run(&["shard", "--config", p(cfg), "--out", p(&shards)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    shards
}

fn distributed(cfg: &Path, shards: &Path, dir: &Path, extra: &[&str]) -> (Vec<u8>, Vec<Vec<u8>>) {
    let master_out = dir.join("master");
    let mut margs = vec!["--config", p(cfg), "--out", p(&master_out)];
    margs.extend_from_slice(extra);
    let master = spawn_master(&margs);
    let clients: Vec<_> = (0..2)
        .map(|i| {
            let out = dir.join(format!("client{i}"));
            let data = shards.join(format!("client-{i}.csv"));
            let id = i.to_string();
            let mut args = vec![
                "client".to_string(),
                "--config".into(),
                p(cfg).into(),
                "--connect".into(),
                master.addr.clone(),
                "--data".into(),
                p(&data).into(),
                "--client-id".into(),
                id,
                "--out".into(),
                p(&out).into(),
            ];
            args.extend(extra.iter().map(|s| s.to_string()));
            let child = common::fet()
                .args(&args)
                .stdout(std::process::Stdio::piped())
                .stderr(std::process::Stdio::piped())
                .spawn()
                .unwrap();
            (out, child)
        })
        .collect();
    let m = wait(master.child);
    assert_eq!(m.status.code(), Some(0), "master: {}", master.stderr_rest.recv().unwrap_or_default());
    let copies = clients
        .into_iter()
        .map(|(out, child)| {
            let o = wait(child);
            assert_eq!(o.status.code(), Some(0), "client: {}", stderr(&o));
            fs::read(out.join("model.json")).unwrap()
        })
        .collect();
    (fs::read(master_out.join("model.json")).unwrap(), copies)
}

#[test]
fn tcp_session_reproduces_the_simulated_model() {
    let (dir, cfg) = setup(240);
    let sim_out = dir.path().join("sim");
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&sim_out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let simulated = fs::read(sim_out.join("model.json")).unwrap();

    let shards = shard(dir.path(), &cfg);
    assert!(shards.join("test.csv").exists());
    let (master, clients) = distributed(&cfg, &shards, dir.path(), &[]);
    assert_eq!(master, simulated);
    for c in clients {
        assert_eq!(c, simulated);
    }
}

#[test]
fn master_rejects_a_client_with_the_wrong_schema() {
    let (dir, cfg) = setup(120);
    let shards = shard(dir.path(), &cfg);
    // Drop column `c` from client 1's shard.
    let text = fs::read_to_string(shards.join("client-1.csv")).unwrap();
    let narrow: String = text
        .lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            format!("{},{},{},{}\n", cells[0], cells[1], cells[3], cells[4])
        })
        .collect();
    fs::write(shards.join("client-1.csv"), narrow).unwrap();

    let master = spawn_master(&["--config", p(&cfg), "--out", p(&dir.path().join("m"))]);
    let clients: Vec<_> = (0..2)
        .map(|i| {
            common::fet()
                .args([
                    "client",
                    "--config",
                    p(&cfg),
                    "--connect",
                    &master.addr,
                    "--data",
                    p(&shards.join(format!("client-{i}.csv"))),
                    "--client-id",
                    &i.to_string(),
                    "--out",
                    p(&dir.path().join(format!("c{i}"))),
                ])
                .spawn()
                .unwrap()
        })
        .collect();
    let m = wait(master.child);
    assert_eq!(m.status.code(), Some(3));
    let err = master.stderr_rest.recv().unwrap();
    assert!(err.contains("schema mismatch") && err.contains("features"), "{err}");
    for c in clients {
        assert_ne!(wait(c).status.code(), Some(0));
    }
}

#[test]
fn client_without_a_master_fails_to_connect() {
    let (dir, cfg) = setup(60);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = run(&[
        "client",
        "--config",
        p(&cfg),
        "--connect",
        &format!("127.0.0.1:{port}"),
        "--client-id",
        "0",
        "--out",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("cannot connect"), "{}", stderr(&o));
}

#[test]
fn master_times_out_waiting_for_clients() {
    let (dir, cfg) = setup(60);
    let master = spawn_master(&["--config", p(&cfg), "--timeout-secs", "0.5", "--out", p(&dir.path().join("m"))]);
    let m = wait(master.child);
    assert_eq!(m.status.code(), Some(3));
    assert!(master.stderr_rest.recv().unwrap().contains("timed out"));
}

fn train_single_client_deep(dir: &Path, cfg: &Path) -> std::path::PathBuf {
    let out = dir.join("deep");
    let o = run(&[
        "simulate",
        "--config",
        p(cfg),
        "--clients",
        "1",
        "--max-depth",
        "60",
        "--trees",
        "5",
        "--subsample-fraction",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out.join("model.json")
}

#[test]
fn predict_memorizes_training_rows() {
    let (dir, cfg) = setup(200);
    let model = train_single_client_deep(dir.path(), &cfg);
    let shards = dir.path().join("one");
    let o = run(&["shard", "--config", p(&cfg), "--clients", "1", "--out", p(&shards)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let train = shards.join("client-0.csv");
    let pred_path = dir.path().join("pred.txt");
    let o = run(&["predict", "--model", p(&model), "--data", p(&train), "--out", p(&pred_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let pred: Vec<String> = fs::read_to_string(&pred_path).unwrap().lines().map(str::to_owned).collect();
    let truth: Vec<String> = fs::read_to_string(&train)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_owned())
        .collect();
    assert_eq!(pred.len(), truth.len());
    let agree = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
    assert!(agree > 0.95, "agreement {agree}");
}

#[test]
fn predict_handles_empty_input_and_bad_columns() {
    let (dir, cfg) = setup(100);
    let model = train_single_client_deep(dir.path(), &cfg);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("empty.txt");
    let o = run(&["predict", "--model", p(&model), "--data", p(&empty), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");

    let header_only = dir.path().join("header.csv");
    fs::write(&header_only, "a,b,c,d\n").unwrap();
    let o = run(&["predict", "--model", p(&model), "--data", p(&header_only)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");

    let narrow = dir.path().join("narrow.csv");
    fs::write(&narrow, "a,b\n0.1,0.2\n").unwrap();
    let o = run(&["predict", "--model", p(&model), "--data", p(&narrow)]);
    assert_ne!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains("expected 4 feature columns") && err.contains("found 2"), "{err}");

    let o = run(&["predict", "--model", p(&dir.path().join("missing.json")), "--data", p(&narrow)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn eval_scores_a_saved_model() {
    let (dir, cfg) = setup(300);
    let sim = dir.path().join("sim");
    assert_eq!(run(&["simulate", "--config", p(&cfg), "--out", p(&sim)]).status.code(), Some(0));
    let shards = shard(dir.path(), &cfg);
    let rep = dir.path().join("eval");
    let o = run(&[
        "eval",
        "--model",
        p(&sim.join("model.json")),
        "--data",
        p(&shards.join("test.csv")),
        "--out",
        p(&rep),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // The test file is the simulate run's held-out split, so the scores agree.
    let a: serde_json::Value = serde_json::from_slice(&fs::read(sim.join("report.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&fs::read(rep.join("report.json")).unwrap()).unwrap();
    assert_eq!(a["accuracy"]["mean"], b["accuracy"]["mean"]);
    assert_eq!(a["f1"]["mean"], b["f1"]["mean"]);
}

#[test]
fn sweep_emits_one_row_per_value() {
    let (dir, cfg) = setup(200);
    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep", "--config", p(&cfg), "--axis", "trees", "--values", "1,3,5", "--repeats", "2", "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep-trees.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,mean,stddev,f1_mean,f1_stddev");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,") && lines[3].starts_with("5,"));
    let o = run(&["sweep", "--config", p(&cfg), "--axis", "clients", "--values", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
