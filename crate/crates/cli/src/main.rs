use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use latte_core::data::{
    load_dataset, partition, save_dataset, synthesize, synthesize_federation, SyntheticSpec, TheoryWorld, WorldSpec,
};
use latte_core::simulate::{self, ExperimentConfig, MetricsReport, RunOptions};
use latte_core::theory;

/// Federated test-time adaptation over embedding streams.
#[derive(Parser, Debug)]
#[command(name = "latte", version, about)]
struct Cli {
    /// Human-readable output instead of JSON lines
    #[arg(long, global = true)]
    pretty: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a federation of client datasets from a theory world
    Synth(SynthArgs),
    /// Split a dataset into client shards
    Partition(PartitionArgs),
    /// Run an experiment and print its metrics report
    Run(RunArgs),
    /// Evaluate a closed-form theory quantity
    Theory(TheoryArgs),
    /// Summarize a dataset manifest
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// World spec file (TOML)
    #[arg(long, required_unless_present = "benchmark", conflicts_with = "benchmark")]
    world: Option<PathBuf>,
    /// Benchmark-shaped synthetic spec file (TOML) instead of a world
    #[arg(long)]
    benchmark: Option<PathBuf>,
    /// In-distribution clients
    #[arg(long, default_value_t = 1)]
    clients_id: usize,
    /// Out-of-distribution clients
    #[arg(long, default_value_t = 0)]
    clients_ood: usize,
    /// Samples per client
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Seed for every random draw
    #[arg(long)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    /// Dataset manifest
    #[arg(long)]
    dataset: PathBuf,
    /// Clients per domain
    #[arg(long, short = 'm')]
    clients_per_domain: usize,
    /// Seed for every random draw
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Write the per-sample trace CSV here
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the retrieval log CSV here
    #[arg(long)]
    retrieval_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// One of: sphere_volume, cap_volume, cap_ratio_bounds, theta_radius, analytic_error
    #[arg(long)]
    query: String,
    /// Comma-separated key=value parameters, e.g. d=3,theta=0.5
    #[arg(long, default_value = "")]
    params: String,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Dataset manifest
    #[arg(long)]
    dataset: PathBuf,
}

/// An error in what the user asked for, as opposed to a failure while
/// doing it.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<latte_core::Error>() {
        Some(e) if e.is_validation() => 1,
        Some(_) => 2,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<String> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.pretty),
        Command::Partition(a) => partition_cmd(a, cli.pretty),
        Command::Run(a) => run(a, cli.pretty),
        Command::Theory(a) => theory_cmd(a, cli.pretty),
        Command::Inspect(a) => inspect(a, cli.pretty),
    }
}

fn line(v: &Value, pretty: bool) -> String {
    if pretty {
        format!("{}\n", serde_json::to_string_pretty(v).expect("json"))
    } else {
        format!("{v}\n")
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn synth(a: &SynthArgs, pretty: bool) -> anyhow::Result<String> {
    if let Some(spec_path) = &a.benchmark {
        let spec: SyntheticSpec = read_toml(spec_path)?;
        let ds = synthesize(&spec, a.seed)?;
        let manifest = a.out.join("dataset.json");
        save_dataset(&ds, &manifest)?;
        return Ok(line(
            &json!({"command": "synth", "dataset": manifest, "samples": ds.len(), "classes": ds.num_classes()}),
            pretty,
        ));
    }
    let path = a.world.as_ref().expect("clap requires --world or --benchmark");
    let spec: WorldSpec = read_toml(path)?;
    let world = TheoryWorld::new(spec)?;
    let m = synthesize_federation(&world, a.clients_id, a.clients_ood, a.samples, a.seed, &a.out)?;
    let files: Vec<&str> = m.clients.iter().map(|c| c.dataset.as_str()).collect();
    Ok(line(
        &json!({
            "command": "synth",
            "federation": a.out.join(latte_core::data::federation::FEDERATION_FILE),
            "clients": m.clients.len(),
            "samples_per_client": a.samples,
            "datasets": files,
        }),
        pretty,
    ))
}

fn partition_cmd(a: &PartitionArgs, pretty: bool) -> anyhow::Result<String> {
    let ds = load_dataset(&a.dataset)?;
    let shards = partition(&ds, a.clients_per_domain, a.seed)?;
    let mut out = String::new();
    for s in shards {
        out.push_str(&line(&serde_json::to_value(&s)?, pretty));
    }
    Ok(out)
}

fn run(a: &RunArgs, pretty: bool) -> anyhow::Result<String> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let opts = RunOptions {
        trace: a.trace.is_some(),
        retrievals: a.retrieval_log.is_some(),
        rounds: false,
    };
    let mut output = simulate::run_detailed(&cfg, opts)?;
    if let Some(path) = &a.trace {
        simulate::write_trace(path, &output.trace).context("writing trace")?;
        output.report.trace = Some(path.display().to_string());
    }
    if let Some(path) = &a.retrieval_log {
        simulate::write_retrievals(path, &output.retrievals).context("writing retrieval log")?;
    }
    if pretty {
        Ok(render_report(&output.report))
    } else {
        Ok(format!("{}\n", output.report.to_json()))
    }
}

fn render_report(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>9}", "client", "processed", "correct", "accuracy");
    for c in &r.per_client {
        let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>8.2}%", c.client, c.processed, c.correct, 100.0 * c.accuracy);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>9}", "domain", "processed", "correct", "accuracy");
    for d in &r.per_domain {
        let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>8.2}%", d.domain, d.processed, d.correct, 100.0 * d.accuracy);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "total      {:>8.2}%", 100.0 * r.total_accuracy);
    let _ = writeln!(s, "zero-shot  {:>8.2}%", 100.0 * r.zero_shot_accuracy);
    let _ = writeln!(s, "gain       {:>+8.2}", 100.0 * r.gain);
    let _ = writeln!(
        s,
        "comm       {} rounds, {} B up, {} B down",
        r.comm.rounds, r.comm.upload_bytes, r.comm.download_bytes
    );
    if let Some(t) = &r.theory {
        let _ = writeln!(
            s,
            "eps_pre    {:.4} ± {:.4}\neps_post   {:.4} ± {:.4}",
            t.eps_pre.estimate, t.eps_pre.half_width, t.eps_post.estimate, t.eps_post.half_width
        );
    }
    s
}

const QUERIES: [&str; 5] = ["sphere_volume", "cap_volume", "cap_ratio_bounds", "theta_radius", "analytic_error"];

fn parse_params(text: &str) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("parameter {part:?} is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("parameter {k} = {v:?} is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn theory_cmd(a: &TheoryArgs, pretty: bool) -> anyhow::Result<String> {
    if !QUERIES.contains(&a.query.as_str()) {
        bail!(usage(format!(
            "unknown query {:?}; valid queries: {}",
            a.query,
            QUERIES.join(", ")
        )));
    }
    let p = parse_params(&a.params)?;
    let get = |k: &str| -> anyhow::Result<f64> {
        p.get(k).copied().ok_or_else(|| usage(format!("{} needs parameter {k}", a.query)))
    };
    let count = |k: &str| -> anyhow::Result<usize> {
        let v = get(k)?;
        if v < 0.0 || v.fract() != 0.0 {
            bail!(usage(format!("{k} = {v} must be a non-negative integer")));
        }
        Ok(v as usize)
    };
    let result = match a.query.as_str() {
        "sphere_volume" => json!({"value": theory::sphere_volume(count("d")?)}),
        "cap_volume" => json!({"value": theory::cap_volume(count("d")?, get("theta")?)?}),
        "cap_ratio_bounds" => {
            let (lo, hi) = theory::cap_ratio_bounds(count("d")?, get("theta")?)?;
            json!({"lower": lo, "upper": hi})
        }
        "theta_radius" => {
            json!({"value": theory::theta_radius(count("n")?, count("k")?, count("d")?, get("delta")?)?})
        }
        "analytic_error" => {
            let d = count("d")?;
            let h = get("mu_dot_w")?;
            if d < 2 {
                bail!(usage("analytic_error needs d >= 2"));
            }
            let mut mu = vec![0.0; d];
            mu[0] = h;
            let mut w = vec![0.0; d];
            w[0] = 1.0;
            json!({"value": theory::analytic_error(&mu, &w)?})
        }
        _ => unreachable!("query names checked above"),
    };
    let mut v = json!({"query": a.query, "params": p});
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, result) {
        dst.extend(src);
    }
    Ok(line(&v, pretty))
}

fn inspect(a: &InspectArgs, pretty: bool) -> anyhow::Result<String> {
    let ds = load_dataset(&a.dataset)?;
    let mut per_class = vec![0usize; ds.num_classes()];
    for &l in ds.labels() {
        per_class[l as usize] += 1;
    }
    let mut per_domain: BTreeMap<u32, usize> = BTreeMap::new();
    for i in 0..ds.len() {
        *per_domain.entry(ds.domain_of(i)).or_default() += 1;
    }
    Ok(line(
        &json!({
            "dataset": a.dataset,
            "samples": ds.len(),
            "dim": ds.dim(),
            "classes": ds.num_classes(),
            "class_names": ds.classifier().class_names(),
            "logit_scale": ds.classifier().scale(),
            "raw": ds.is_raw(),
            "per_class": per_class,
            "per_domain": per_domain,
        }),
        pretty,
    ))
}
