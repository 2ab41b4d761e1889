//! Experiment orchestration: builds a federation from an
//! [`ExperimentConfig`], drives the client streams, schedules
//! communication and reduces everything into a [`MetricsReport`].

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use config::{DataSource, ExperimentConfig, Interleaving, Mode};
pub use report::{ClientMetrics, CommMetrics, DomainMetrics, MetricsReport, RoundLog, TheoryMetrics, TraceRow};

use crate::adapt::{Client, LatteParams, Policy, PredictionTrace, RetrievalLogRow};
use crate::data::federation::{load_federation, ood_domain, theory_stream};
use crate::data::format::{load_dataset, EmbeddingDataset};
use crate::data::partition::partition;
use crate::data::synthetic::synthesize;
use crate::data::world::{sample_theory, TheoryHead, TheoryWorld};
use crate::error::{Error, Result};
use crate::math::{Embedding, LogitHead, Logits, TextClassifier};
use crate::memory::Space;
use crate::server::GlobalMemory;
use crate::seeds::{derive_seed, derived_rng, tag};
use crate::theory::{asymptotic_targets, ErrorReport};

const REPEAT_TAG: u64 = 7;

/// Upper bounds on one exchange's payload bytes: uploading `c` prototypes of
/// dimension `d` and downloading `k_e` per class.
pub fn comm_bytes(c: usize, d: usize, k_e: usize, bytes_per_scalar: usize) -> (usize, usize) {
    (c * d * bytes_per_scalar, c * k_e * d * bytes_per_scalar)
}

/// The classifier head every client of a run shares.
#[derive(Clone, Debug)]
pub enum RunHead {
    Text(TextClassifier<f64>),
    Theory(TheoryHead),
}

impl LogitHead<f64> for RunHead {
    fn num_classes(&self) -> usize {
        match self {
            RunHead::Text(h) => LogitHead::<f64>::num_classes(h),
            RunHead::Theory(h) => LogitHead::<f64>::num_classes(h),
        }
    }

    fn dim(&self) -> usize {
        match self {
            RunHead::Text(h) => LogitHead::<f64>::dim(h),
            RunHead::Theory(h) => LogitHead::<f64>::dim(h),
        }
    }

    fn logits(&self, f: &[f64]) -> Result<Logits<f64>> {
        match self {
            RunHead::Text(h) => h.logits(f),
            RunHead::Theory(h) => h.logits(f),
        }
    }
}

/// One client's stream.
#[derive(Clone, Debug)]
pub struct ClientStream {
    pub client: usize,
    pub domain: u32,
    /// Whether the client is in-distribution (theory mode).
    pub in_distribution: bool,
    pub samples: Vec<Embedding<f64>>,
    pub labels: Vec<usize>,
}

/// A fully materialized federation for one repeat.
pub struct Federation {
    pub head: Arc<RunHead>,
    pub space: Space,
    pub world: Option<TheoryWorld>,
    pub streams: Vec<ClientStream>,
}

/// Data loaded once per experiment and reused across repeats.
enum Prepared {
    Dataset(EmbeddingDataset),
    World(TheoryWorld),
    Federation(TheoryWorld, Vec<EmbeddingDataset>, Vec<Option<usize>>),
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    Ok(match &cfg.data {
        DataSource::Dataset(path) => Prepared::Dataset(load_dataset(path)?),
        DataSource::Synthetic(spec) => Prepared::Dataset(synthesize(spec, cfg.seed)?),
        DataSource::World(spec) => Prepared::World(TheoryWorld::new(spec.clone())?),
        DataSource::Federation(path) => {
            let (m, data) = load_federation(path)?;
            let ood = m.clients.iter().map(|c| c.ood).collect();
            Prepared::Federation(m.world, data, ood)
        }
    })
}

fn truncate(stream: &mut ClientStream, n: Option<usize>) {
    if let Some(n) = n {
        stream.samples.truncate(n);
        stream.labels.truncate(n);
    }
}

fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    if repeat == 0 {
        seed
    } else {
        derive_seed(seed, REPEAT_TAG, repeat as u64)
    }
}

fn dataset_streams(ds: &EmbeddingDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ClientStream>> {
    partition(ds, cfg.clients_per_domain, seed)?
        .into_iter()
        .map(|shard| {
            let mut s = ClientStream {
                client: shard.client,
                domain: shard.domain,
                in_distribution: true,
                samples: shard
                    .indices
                    .iter()
                    .map(|&i| Embedding::new(ds.row(i).to_vec()))
                    .collect::<Result<_>>()?,
                labels: shard.indices.iter().map(|&i| ds.labels()[i] as usize).collect(),
            };
            truncate(&mut s, cfg.samples_per_client);
            Ok(s)
        })
        .collect()
}

/// Materializes the federation of one repeat.
fn federation(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<Federation> {
    match prepared {
        Prepared::Dataset(ds) => Ok(Federation {
            head: Arc::new(RunHead::Text(ds.classifier().clone())),
            space: if ds.is_raw() { Space::Raw } else { Space::UnitSphere },
            world: None,
            streams: dataset_streams(ds, cfg, seed)?,
        }),
        Prepared::World(world) => {
            let n = cfg.samples_per_client.expect("validated");
            let streams = (0..cfg.n_id + cfg.n_ood)
                .map(|client| {
                    let ood = if client < cfg.n_id {
                        None
                    } else {
                        Some(ood_domain(world, client - cfg.n_id)?)
                    };
                    let (xs, ys) = theory_stream(world, ood, n, seed, client)?;
                    Ok(ClientStream {
                        client,
                        domain: ood.map_or(0, |o| o as u32 + 1),
                        in_distribution: ood.is_none(),
                        samples: xs.into_iter().map(Embedding::new).collect::<Result<_>>()?,
                        labels: ys.into_iter().map(|y| y as usize).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Federation {
                head: Arc::new(RunHead::Theory(world.head())),
                space: Space::Raw,
                world: Some(world.clone()),
                streams,
            })
        }
        Prepared::Federation(world, data, ood) => {
            let streams = data
                .iter()
                .zip(ood)
                .enumerate()
                .map(|(client, (ds, ood))| {
                    let mut order: Vec<usize> = (0..ds.len()).collect();
                    if seed != cfg.seed {
                        order.shuffle(&mut derived_rng(seed, tag::STREAM, client as u64));
                    }
                    let mut s = ClientStream {
                        client,
                        domain: ood.map_or(0, |o| o as u32 + 1),
                        in_distribution: ood.is_none(),
                        samples: order
                            .iter()
                            .map(|&i| Embedding::new(ds.row(i).to_vec()))
                            .collect::<Result<_>>()?,
                        labels: order.iter().map(|&i| ds.labels()[i] as usize).collect(),
                    };
                    truncate(&mut s, cfg.samples_per_client);
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Federation {
                head: Arc::new(RunHead::Theory(world.head())),
                space: Space::Raw,
                world: Some(world.clone()),
                streams,
            })
        }
    }
}

/// What to keep besides the report.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub trace: bool,
    pub retrievals: bool,
    pub rounds: bool,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Vec<TraceRow>,
    pub retrievals: Vec<RetrievalLogRow>,
    pub rounds: Vec<RoundLog>,
}

#[derive(Default, Clone)]
struct Counts {
    processed: usize,
    correct: usize,
    zero_shot: usize,
}

struct Collector<'a> {
    opts: RunOptions,
    repeat: usize,
    bytes_per_scalar: usize,
    counts: &'a mut [Counts],
    comm: &'a mut CommMetrics,
    out: &'a mut RunOutput,
}

impl Collector<'_> {
    fn sample(&mut self, client: usize, step: usize, t: &PredictionTrace<f64>, truth: usize, comm: bool) {
        let c = &mut self.counts[client];
        c.processed += 1;
        c.correct += usize::from(t.label == truth);
        c.zero_shot += usize::from(t.pseudo_label == truth);
        if self.opts.trace {
            self.out.trace.push(TraceRow {
                client,
                step,
                pseudo_initial: t.pseudo_label,
                label_final: t.label,
                true_label: truth,
                entropy_initial: t.entropy,
                comm_round_flag: u8::from(comm),
            });
        }
    }

    fn exchange(
        &mut self,
        client: &mut Client<f64, RunHead>,
        server: &GlobalMemory<f64>,
        step: usize,
    ) -> Result<()> {
        let round = client.communicate(server, self.bytes_per_scalar)?;
        let m = &mut *self.comm;
        m.rounds += 1;
        m.upload_bytes += round.upload_bytes;
        m.download_bytes += round.download_bytes;
        m.upload_wire_bytes += round.upload_wire_bytes;
        m.download_wire_bytes += round.download_wire_bytes;
        m.max_round_upload_bytes = m.max_round_upload_bytes.max(round.upload_bytes);
        m.max_round_download_bytes = m.max_round_download_bytes.max(round.download_bytes);
        if self.opts.rounds {
            let global_full = (0..server.num_classes()).all(|c| server.filled(c) == server.clients());
            self.out.rounds.push(RoundLog {
                repeat: self.repeat,
                client: client.id(),
                step,
                uploaded_classes: round.uploaded_classes,
                upload_bytes: round.upload_bytes,
                download_bytes: round.download_bytes,
                upload_wire_bytes: round.upload_wire_bytes,
                download_wire_bytes: round.download_wire_bytes,
                global_full,
            });
        }
        if self.opts.retrievals {
            self.out.retrievals.extend(round.retrievals);
        }
        Ok(())
    }
}

fn step_err(client: usize, sample: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Step {
        client,
        sample,
        source: Box::new(e),
    }
}

/// (client, sample) pairs in processing order.
fn schedule(streams: &[ClientStream], interleaving: Interleaving) -> Vec<(usize, usize)> {
    match interleaving {
        Interleaving::Sequential => streams
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.samples.len()).map(move |j| (i, j)))
            .collect(),
        Interleaving::RoundRobin => {
            let longest = streams.iter().map(|s| s.samples.len()).max().unwrap_or(0);
            (0..longest)
                .flat_map(|j| {
                    streams
                        .iter()
                        .enumerate()
                        .filter(move |(_, s)| j < s.samples.len())
                        .map(move |(i, _)| (i, j))
                })
                .collect()
        }
    }
}

fn make_client(id: usize, fed: &Federation, params: &LatteParams, policy: Policy) -> Result<Client<f64, RunHead>> {
    let mut p = *params;
    if !policy.communicates() {
        p.comm_period = crate::adapt::CommPeriod::Never;
    }
    Client::new(id, Arc::clone(&fed.head), p, policy, fed.space)
}

/// Drives every stream once. Returns the final client states (one shared
/// client for `GlobalShared`).
fn drive(
    cfg: &ExperimentConfig,
    params: &LatteParams,
    fed: &Federation,
    col: &mut Collector<'_>,
) -> Result<Vec<Client<f64, RunHead>>> {
    let n = fed.streams.len();
    if cfg.policy == Policy::GlobalShared {
        let mut shared = make_client(0, fed, params, cfg.policy)?;
        for (i, j) in schedule(&fed.streams, cfg.interleaving) {
            let s = &fed.streams[i];
            let t = shared.step(s.samples[j].clone()).map_err(step_err(i, j))?;
            col.sample(i, j, &t, s.labels[j], false);
        }
        return Ok(vec![shared]);
    }

    let server = GlobalMemory::new(fed.head.num_classes(), n, fed.head.dim())
        .requiring_unit_norm(fed.space == Space::UnitSphere);
    let mut clients = (0..n)
        .map(|i| make_client(i, fed, params, cfg.policy))
        .collect::<Result<Vec<_>>>()?;

    match cfg.interleaving {
        Interleaving::Sequential => {
            for (i, j) in schedule(&fed.streams, Interleaving::Sequential) {
                let s = &fed.streams[i];
                let client = &mut clients[i];
                let t = client.step(s.samples[j].clone()).map_err(step_err(i, j))?;
                let due = client.is_due();
                col.sample(i, j, &t, s.labels[j], due);
                if due {
                    col.exchange(client, &server, j).map_err(step_err(i, j))?;
                }
            }
        }
        Interleaving::RoundRobin => {
            // Steps never touch the server, so running one epoch's steps in
            // parallel and then the exchanges in client order is identical
            // to the one-sample-at-a-time interleaving.
            let pool = match cfg.threads {
                0 => None,
                t => Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(t)
                        .build()
                        .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
                ),
            };
            let longest = fed.streams.iter().map(|s| s.samples.len()).max().unwrap_or(0);
            let parallel = n > 1 && cfg.threads != 1;
            for j in 0..longest {
                let run_step = |(i, client): (usize, &mut Client<f64, RunHead>)| {
                    let s = &fed.streams[i];
                    (j < s.samples.len()).then(|| client.step(s.samples[j].clone()).map_err(step_err(i, j)))
                };
                let traces: Vec<Option<Result<PredictionTrace<f64>>>> = if parallel {
                    let mut go = || clients.par_iter_mut().enumerate().map(run_step).collect();
                    match &pool {
                        Some(p) => p.install(go),
                        None => go(),
                    }
                } else {
                    clients.iter_mut().enumerate().map(run_step).collect()
                };
                for (i, t) in traces.into_iter().enumerate() {
                    let Some(t) = t else { continue };
                    let t = t?;
                    let client = &mut clients[i];
                    let due = client.is_due();
                    col.sample(i, j, &t, fed.streams[i].labels[j], due);
                    if due {
                        col.exchange(client, &server, j).map_err(step_err(i, j))?;
                    }
                }
            }
        }
    }
    Ok(clients)
}

struct TheoryAccum {
    pre_errors: usize,
    post_errors: usize,
    n: usize,
    per_client: Vec<(usize, usize)>,
    radius: Option<f64>,
}

fn evaluate_theory(
    cfg: &ExperimentConfig,
    fed: &Federation,
    world: &TheoryWorld,
    clients: &[Client<f64, RunHead>],
    seed: u64,
    acc: &mut TheoryAccum,
) -> Result<()> {
    let head = world.head();
    let id_clients: Vec<usize> = fed.streams.iter().filter(|s| s.in_distribution).map(|s| s.client).collect();
    let model = |i: usize| if clients.len() == 1 { &clients[0] } else { &clients[i] };
    let results = id_clients
        .par_iter()
        .map(|&i| {
            let client = model(i);
            let mut rng = derived_rng(seed, tag::THEORY_EVAL, i as u64);
            let (mut pre, mut post) = (0, 0);
            for k in 0..cfg.eval_size {
                let y = k % 2;
                let f = sample_theory(world, y, None, &mut rng)?;
                pre += usize::from(head.predict(&f) != y);
                let pred = client.predict(&Embedding::new(f)?)?;
                post += usize::from(pred.label != y);
            }
            Ok((i, pre, post))
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, pre, post) in results {
        acc.pre_errors += pre;
        acc.post_errors += post;
        acc.n += cfg.eval_size;
        acc.per_client[i].0 += post;
        acc.per_client[i].1 += cfg.eval_size;
    }
    let targets = asymptotic_targets(world);
    let memories: Vec<&Client<f64, RunHead>> = if clients.len() == 1 {
        vec![&clients[0]]
    } else {
        id_clients.iter().map(|&i| &clients[i]).collect()
    };
    for c in memories {
        for (y, queue) in c.local().queues().iter().enumerate() {
            for e in queue {
                let d = e
                    .embedding
                    .as_slice()
                    .iter()
                    .zip(&targets[y])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                acc.radius = Some(acc.radius.map_or(d, |r| r.max(d)));
            }
        }
    }
    Ok(())
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Runs an experiment and returns its report.
pub fn run(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    Ok(run_detailed(cfg, RunOptions::default())?.report)
}

/// Runs an experiment, keeping the artifacts selected in `opts`.
pub fn run_detailed(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let params = cfg.latte_params()?;
    let prepared = prepare(cfg)?;
    let mut out = RunOutput {
        report: empty_report(cfg, &params),
        trace: Vec::new(),
        retrievals: Vec::new(),
        rounds: Vec::new(),
    };
    let mut counts: Vec<Counts> = Vec::new();
    let mut domains: Vec<u32> = Vec::new();
    let mut comm = CommMetrics::default();
    let mut theory: Option<TheoryAccum> = None;
    let mut repeat_accuracies = Vec::with_capacity(cfg.repeats);

    for repeat in 0..cfg.repeats {
        let seed = repeat_seed(cfg.seed, repeat);
        let fed = federation(cfg, &prepared, seed)?;
        if counts.is_empty() {
            counts = vec![Counts::default(); fed.streams.len()];
            domains = fed.streams.iter().map(|s| s.domain).collect();
        }
        let before: (usize, usize) = counts.iter().fold((0, 0), |a, c| (a.0 + c.processed, a.1 + c.correct));
        let mut col = Collector {
            opts,
            repeat,
            bytes_per_scalar: cfg.bytes_per_scalar,
            counts: &mut counts,
            comm: &mut comm,
            out: &mut out,
        };
        let clients = drive(cfg, &params, &fed, &mut col)?;
        let after: (usize, usize) = counts.iter().fold((0, 0), |a, c| (a.0 + c.processed, a.1 + c.correct));
        repeat_accuracies.push(ratio(after.1 - before.1, after.0 - before.0));

        if let Some(world) = &fed.world {
            let acc = theory.get_or_insert_with(|| TheoryAccum {
                pre_errors: 0,
                post_errors: 0,
                n: 0,
                per_client: vec![(0, 0); fed.streams.len()],
                radius: None,
            });
            evaluate_theory(cfg, &fed, world, &clients, seed, acc)?;
        }
    }

    let r = &mut out.report;
    r.clients = counts.len();
    r.per_client = counts
        .iter()
        .enumerate()
        .map(|(client, c)| ClientMetrics {
            client,
            domain: domains[client],
            processed: c.processed,
            correct: c.correct,
            zero_shot_correct: c.zero_shot,
            accuracy: ratio(c.correct, c.processed),
        })
        .collect();
    let mut by_domain: BTreeMap<u32, (usize, usize, usize)> = BTreeMap::new();
    for (c, &d) in counts.iter().zip(&domains) {
        let e = by_domain.entry(d).or_default();
        e.0 += 1;
        e.1 += c.processed;
        e.2 += c.correct;
    }
    r.per_domain = by_domain
        .into_iter()
        .map(|(domain, (clients, processed, correct))| DomainMetrics {
            domain,
            clients,
            processed,
            correct,
            accuracy: ratio(correct, processed),
        })
        .collect();
    r.processed = counts.iter().map(|c| c.processed).sum();
    r.correct = counts.iter().map(|c| c.correct).sum();
    let zs: usize = counts.iter().map(|c| c.zero_shot).sum();
    r.total_accuracy = ratio(r.correct, r.processed);
    r.zero_shot_accuracy = ratio(zs, r.processed);
    r.gain = r.total_accuracy - r.zero_shot_accuracy;
    r.repeat_accuracies = repeat_accuracies;
    comm.bytes_per_round = ratio(comm.upload_bytes + comm.download_bytes, comm.rounds);
    r.comm = comm;
    r.theory = theory.map(|t| TheoryMetrics {
        eps_pre: ErrorReport::from_counts(t.pre_errors, t.n),
        eps_post: ErrorReport::from_counts(t.post_errors, t.n),
        per_client_eps_post: t
            .per_client
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|&(e, n)| ratio(e, n))
            .collect(),
        memory_radius: t.radius,
    });
    Ok(out)
}

fn empty_report(cfg: &ExperimentConfig, params: &LatteParams) -> MetricsReport {
    MetricsReport {
        mode: cfg.mode,
        policy: cfg.policy,
        interleaving: cfg.interleaving,
        seed: cfg.seed,
        repeats: cfg.repeats,
        clients: 0,
        params: *params,
        per_client: Vec::new(),
        per_domain: Vec::new(),
        processed: 0,
        correct: 0,
        total_accuracy: 0.0,
        zero_shot_accuracy: 0.0,
        gain: 0.0,
        repeat_accuracies: Vec::new(),
        comm: CommMetrics::default(),
        theory: None,
        trace: None,
    }
}

/// Writes trace rows as CSV.
pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Writes retrieval-log rows as CSV.
pub fn write_retrievals(path: &Path, rows: &[RetrievalLogRow]) -> Result<()> {
    write_csv(path, rows)
}

fn write_csv<R: serde::Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
