//! Implementations of the `fet` subcommands.

use std::collections::HashMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use fet_core::dataset::{load_csv, shard_rows, split_train_test, write_csv, DataShard};
use fet_core::forest::{load_model, save_model};
use fet_core::metrics::{evaluate, repeat_experiment, repeat_experiment_with_model, EvalReport, ExperimentOptions};
use fet_core::protocol::{client_run, master_run, TcpLink};
use fet_core::{Forest, ProtocolError, SessionConfig};

use crate::config::RunConfig;
use crate::error::CliError;

/// Which session setting a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Clients,
    Trees,
    Depth,
}

impl SweepAxis {
    fn apply(self, session: &mut SessionConfig, value: usize) {
        match self {
            SweepAxis::Clients => session.clients = value,
            SweepAxis::Trees => session.trees = value,
            SweepAxis::Depth => session.max_depth = value,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SweepAxis::Clients => "clients",
            SweepAxis::Trees => "trees",
            SweepAxis::Depth => "depth",
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn experiment_options(cfg: &RunConfig, repeats: usize) -> ExperimentOptions {
    ExperimentOptions {
        repeats,
        train_fraction: cfg.train_fraction,
        f1_mode: cfg.f1_mode,
        parallel: true,
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<DataShard, CliError> {
    let path = cfg.data_path()?;
    log::info!("loading {}", path.display());
    Ok(load_csv(&path, &cfg.csv_options())?)
}

/// One line stating the privacy guarantee of a trained forest.
pub fn epsilon_line(forest: &Forest) -> String {
    match &forest.training {
        Some(t) => match t.epsilon_total {
            Some(eps) => format!(
                "privacy: {}, epsilon_node {}, total epsilon {} over {} trees",
                t.session.privacy, t.session.epsilon_node, eps, t.session.trees
            ),
            None => "privacy: none (labels are released exactly; no epsilon guarantee)".into(),
        },
        None => "privacy: unknown (model carries no training record)".into(),
    }
}

fn write_report(out: &Path, report: &EvalReport) -> Result<(), CliError> {
    write_file(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("report.txt"), &report.table())
}

fn save(forest: &Forest, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(forest, path)?;
    println!("model written to {}", path.display());
    Ok(())
}

/// Trains over in-process clients, evaluates on the held-out split, and
/// writes `model.json`, `report.json` and `report.txt`. The model is the one
/// from repeat 0, which uses the configured seed.
pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let (report, forest) = repeat_experiment_with_model(&cfg.session, &data, &experiment_options(cfg, cfg.repeats))?;
    save(&forest, &cfg.out.join("model.json"))?;
    write_report(&cfg.out, &report)?;
    print!("{}", report.table());
    println!("{}", epsilon_line(&forest));
    Ok(())
}

/// Accepts `clients` connections within the timeout and coordinates one
/// session over them.
pub fn master(cfg: &RunConfig) -> Result<(), CliError> {
    let addr = cfg
        .listen
        .as_deref()
        .ok_or_else(|| CliError::Config("master needs a listen address (set `listen` or pass --listen)".into()))?;
    let listener = TcpListener::bind(addr).map_err(|e| CliError::io(format!("cannot listen on {addr}"), e))?;
    let local = listener.local_addr().map_err(|e| CliError::io(addr, e))?;
    eprintln!("listening on {local}");
    listener
        .set_nonblocking(true)
        .map_err(|e| CliError::io(local, e))?;

    let want = cfg.session.clients;
    let deadline = Instant::now() + cfg.timeout();
    let mut links = Vec::with_capacity(want);
    while links.len() < want {
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false).map_err(|e| CliError::io(peer, e))?;
                log::info!("client connected from {peer} ({}/{want})", links.len() + 1);
                links.push(TcpLink::new(stream, cfg.timeout())?);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(ProtocolError::Timeout {
                        peer: format!("clients ({} of {want} connected)", links.len()),
                    }
                    .into());
                }
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            Err(e) => return Err(CliError::io(local, e)),
        }
    }
    let forest = master_run(&cfg.session, links)?;
    save(&forest, &cfg.out.join("model.json"))?;
    println!("{}", epsilon_line(&forest));
    Ok(())
}

/// Reads the header row of a CSV file (empty for an empty file).
fn csv_header(path: &Path) -> Result<Vec<String>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path.display(), e))?;
    let header = reader.headers().map_err(|e| CliError::io(path.display(), e))?;
    Ok(header.iter().map(str::to_owned).collect())
}

/// Joins a session as client `client_id` with the local shard in `data`.
pub fn client(cfg: &RunConfig) -> Result<(), CliError> {
    let addr = cfg
        .connect
        .as_deref()
        .ok_or_else(|| CliError::Config("client needs a master address (set `connect` or pass --connect)".into()))?;
    let client_id = match (cfg.client_id, cfg.session.clients) {
        (Some(id), _) => id,
        (None, 1) => 0,
        (None, _) => return Err(CliError::Config("client needs --client-id when clients > 1".into())),
    };
    let path = cfg.data_path()?;
    let mut opts = cfg.csv_options();
    if cfg.has_header && !opts.ignore_columns.is_empty() {
        // Shard files written by `fet shard` no longer carry ignored columns.
        let header = csv_header(&path)?;
        opts.ignore_columns.retain(|c| header.contains(c));
    }
    let mut shard = load_csv(&path, &opts)?;
    shard.client_id = client_id;
    log::info!("client {client_id}: {} rows from {}", shard.len(), path.display());

    let mut link = TcpLink::connect(addr, cfg.timeout()).map_err(|e| match e {
        ProtocolError::Io(io) => CliError::io(format!("cannot connect to {addr}"), io),
        other => other.into(),
    })?;
    let forest = client_run(&cfg.session, &shard, &mut link)?;
    save(&forest, &cfg.out.join("model.json"))?;
    println!("{}", epsilon_line(&forest));
    Ok(())
}

/// Writes the train split dealt into one CSV per client plus the test split,
/// exactly as `simulate` partitions the data, so a distributed run over these
/// files reproduces the simulated model.
pub fn shard(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let (train, test) = split_train_test(&data, cfg.train_fraction, cfg.session.seed)?;
    let shards = shard_rows(&train, cfg.session.clients, cfg.session.seed)?;
    create_dir(&cfg.out)?;
    for s in &shards {
        let path = cfg.out.join(format!("client-{}.csv", s.client_id));
        write_csv(s, &path, cfg.label_name())?;
        println!("{} rows -> {}", s.len(), path.display());
    }
    let path = cfg.out.join("test.csv");
    write_csv(&test, &path, cfg.label_name())?;
    println!("{} rows -> {}", test.len(), path.display());
    Ok(())
}

/// Runs a repeated experiment per axis value and writes
/// `sweep-<axis>.csv` with accuracy and F1 summaries.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[usize]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let mut sessions = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = cfg.session.clone();
        axis.apply(&mut s, v);
        s.validate()?;
        sessions.push(s);
    }
    let data = load_dataset(cfg)?;
    let mut csv = String::from("value,mean,stddev,f1_mean,f1_stddev\n");
    for (&v, session) in values.iter().zip(&sessions) {
        let report = repeat_experiment(session, &data, &experiment_options(cfg, cfg.repeats))?;
        log::info!("{} = {v}: accuracy {:.4}", axis.name(), report.accuracy.mean);
        csv.push_str(&format!(
            "{v},{},{},{},{}\n",
            report.accuracy.mean, report.accuracy.stddev, report.f1.mean, report.f1.stddev
        ));
    }
    let path = cfg.out.join(format!("sweep-{}.csv", axis.name()));
    write_file(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

/// Rows of a CSV aligned to a model's features, plus the raw label column
/// when the file has one.
#[derive(Debug, Default)]
pub struct ModelInput {
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

/// Reads a headed CSV whose columns are the model's features (by name, in
/// any order) and at most one extra column, taken as the label. Columns named
/// in `ignore` are dropped first. An empty file yields no rows.
pub fn read_model_input(forest: &Forest, path: &Path, ignore: &[String]) -> Result<ModelInput, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(ModelInput::default());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::io(path.display(), e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let kept: Vec<usize> = (0..header.len()).filter(|&c| !ignore.contains(&header[c])).collect();
    let features = &forest.schema.features;
    let f = features.len();
    let position: HashMap<&str, usize> = kept.iter().map(|&c| (header[c].as_str(), c)).collect();
    let extra: Vec<usize> = kept
        .iter()
        .copied()
        .filter(|&c| !features.iter().any(|m| m.name == header[c]))
        .collect();
    if kept.len() < f || extra.len() > 1 || kept.len() > f + 1 {
        return Err(CliError::Io(format!(
            "{}: column count mismatch: expected {f} feature columns (optionally plus one label column), found {}",
            path.display(),
            kept.len()
        )));
    }
    let mut columns = Vec::with_capacity(f);
    for meta in features {
        match position.get(meta.name.as_str()) {
            Some(&c) => columns.push(c),
            None => {
                return Err(CliError::Io(format!(
                    "{}: model feature `{}` is missing",
                    path.display(),
                    meta.name
                )))
            }
        }
    }
    let label_col = extra.first().copied();

    let mut input = ModelInput {
        rows: Vec::new(),
        labels: label_col.map(|_| Vec::new()),
    };
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(path.display(), e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(f);
        for (meta, &c) in features.iter().zip(&columns) {
            let cell = &record[c];
            row.push(meta.encode(cell).ok_or_else(|| {
                CliError::Io(format!(
                    "{} line {line}: `{cell}` is not a valid value of feature `{}`",
                    path.display(),
                    meta.name
                ))
            })?);
        }
        input.rows.push(row);
        if let (Some(labels), Some(c)) = (input.labels.as_mut(), label_col) {
            labels.push(record[c].to_owned());
        }
    }
    Ok(input)
}

/// Writes one predicted class name per input row.
pub fn predict(model: &Path, data: &Path, out: Option<&Path>, ignore: &[String]) -> Result<(), CliError> {
    let forest = load_model(model)?;
    let input = read_model_input(&forest, data, ignore)?;
    let pred = forest.predict_all(input.rows.iter().map(Vec::as_slice))?;
    let mut text = String::with_capacity(pred.len() * 4);
    for p in pred {
        text.push_str(forest.schema.labels.name(p));
        text.push('\n');
    }
    match out {
        Some(path) => {
            write_file(path, &text)?;
            log::info!("{} predictions written to {}", input.rows.len(), path.display());
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("stdout", e))?,
    }
    Ok(())
}

/// Scores a saved model on a labelled CSV.
pub fn eval(model: &Path, data: &Path, out: Option<&Path>, ignore: &[String], cfg: &RunConfig) -> Result<(), CliError> {
    let forest = load_model(model)?;
    let input = read_model_input(&forest, data, ignore)?;
    let raw = input
        .labels
        .ok_or_else(|| CliError::Io(format!("{}: no label column to evaluate against", data.display())))?;
    let classes = &forest.schema.labels;
    let labels = raw
        .iter()
        .map(|l| {
            classes
                .index_of(l)
                .ok_or_else(|| CliError::Io(format!("{}: label `{l}` is not a model class", data.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let test = DataShard::from_rows(Arc::new(forest.schema.clone()), &input.rows, labels)?;
    let evaluation = evaluate(&forest, &test, cfg.f1_mode)?;
    let seed = forest.training.as_ref().map_or(0, |t| t.session.seed);
    let eps = forest.training.as_ref().and_then(|t| t.epsilon_total);
    let report = EvalReport::from_runs(vec![(seed, evaluation, eps)]);
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    print!("{}", report.table());
    println!("{}", epsilon_line(&forest));
    Ok(())
}
