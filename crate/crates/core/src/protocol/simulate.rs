//! In-process sessions: one master and `clients` client threads connected by
//! channel pairs.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{
    channel_pair, client_run_with_stats, master_run, ClientStats, ProtocolError, RecordingLink, SessionConfig,
    TranscriptEntry, DEFAULT_TIMEOUT,
};
use crate::dataset::{shard_rows, DataShard};
use crate::forest::Forest;

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Keep every frame seen by the master.
    pub record: bool,
    pub timeout: Duration,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            record: true,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug)]
pub struct Simulation {
    pub forest: Forest,
    /// Frames in the order the master sent or received them; empty unless
    /// recording was requested.
    pub transcript: Vec<TranscriptEntry>,
    pub client_forests: Vec<Forest>,
    pub client_stats: Vec<ClientStats>,
}

/// Deals `data` into `config.clients` shards and trains over them with a
/// recorded transcript.
pub fn simulate(config: &SessionConfig, data: &DataShard) -> Result<Simulation, ProtocolError> {
    simulate_with(config, data, SimOptions::default())
}

pub fn simulate_with(config: &SessionConfig, data: &DataShard, opts: SimOptions) -> Result<Simulation, ProtocolError> {
    config.validate()?;
    let shards = shard_rows(data, config.clients, config.seed)?;
    simulate_shards(config, &shards, opts)
}

/// Trains over pre-dealt shards; shard `i` must carry client id `i`.
pub fn simulate_shards(config: &SessionConfig, shards: &[DataShard], opts: SimOptions) -> Result<Simulation, ProtocolError> {
    config.validate()?;
    let log = opts.record.then(|| Arc::new(Mutex::new(Vec::new())));
    let (master_ends, client_ends): (Vec<_>, Vec<_>) = shards
        .iter()
        .map(|s| {
            let (m, c) = channel_pair(opts.timeout, &format!("client {}", s.client_id));
            (RecordingLink::new(m, s.client_id, log.clone()), c)
        })
        .unzip();

    let (master, clients) = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .zip(client_ends)
            .map(|(shard, mut link)| {
                std::thread::Builder::new()
                    .name(format!("fet-client-{}", shard.client_id))
                    .spawn_scoped(scope, move || client_run_with_stats(config, shard, &mut link))
                    .expect("spawning a client thread")
            })
            .collect();
        let master = master_run(config, master_ends);
        let clients: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("client thread panicked"))
            .collect();
        (master, clients)
    });

    let forest = master?;
    let mut client_forests = Vec::with_capacity(clients.len());
    let mut client_stats = Vec::with_capacity(clients.len());
    for (i, c) in clients.into_iter().enumerate() {
        let (f, stats) = c?;
        if f != forest {
            return Err(ProtocolError::Diverged(format!("client {i} forest differs from the master's")));
        }
        client_forests.push(f);
        client_stats.push(stats);
    }
    let transcript = log
        .map(|l| std::mem::take(&mut *l.lock().expect("transcript lock poisoned")))
        .unwrap_or_default();
    Ok(Simulation {
        forest,
        transcript,
        client_forests,
        client_stats,
    })
}
