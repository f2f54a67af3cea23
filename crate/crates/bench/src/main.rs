//! `nvset`: benchmark and inspection CLI for the persistent list sets.
//!
//! Subcommands: `bench` (sim or native workloads, CSV out), `scenario`
//! (scripted demonstrations), `check` (event-log verdicts), `recover`
//! (persistent-image walk).

mod csvout;
mod nativerun;
mod simrun;
mod workload;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use nvset_checker::{
    check_durable_capped, check_sle_capped, redundant_helping, volatile_probe_violation,
    History, Verdict, DEFAULT_OP_CAP,
};
use nvset_core::list::{ContainsVariant, SetImpl};
use nvset_core::recovery::{persistent_items, PersistentImage};
use nvset_core::substrate::{
    parse_schedule, read_jsonl, redundancy_from_events, write_jsonl, Directive, Event,
};

use csvout::Row;
use workload::{Dist, Mix, Workload};

#[derive(Parser)]
#[command(name = "nvset", version, about = "Benchmark and inspection CLI for persistent lock-free list sets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a workload and emit one CSV row per iteration.
    Bench(BenchArgs),
    /// Scripted schedules with exact psync accounting.
    Scenario {
        #[command(subcommand)]
        which: ScenarioCmd,
    },
    /// Judge an event log: durable linearizability, strict-effect check,
    /// redundancy rescan. Exit 0 pass, 1 fail, 2 refused.
    Check {
        log: PathBuf,
        /// Operation-count cap for the linearization search.
        #[arg(long, default_value_t = DEFAULT_OP_CAP)]
        cap: usize,
    },
    /// Walk a persistent image and print the surviving set.
    Recover {
        image: PathBuf,
        #[arg(long = "impl")]
        impl_kind: String,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// n concurrent inserts of one key; the n-1 helpers each pay exactly
    /// one redundant psync.
    RedundantHelping {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long)]
        eventlog: Option<PathBuf>,
    },
    /// A persistence-free search answers from volatile state, the crash
    /// reverts it, and the strict-effect check fails with a certificate.
    VolatileProbe {
        #[arg(long)]
        eventlog: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct BenchArgs {
    /// List implementation: pd (physical delete) or ld (logical delete).
    #[arg(long = "impl", default_value = "pd")]
    impl_kind: String,
    /// Contains variant: pa, apa, pl, or pf.
    #[arg(long, default_value = "pa")]
    contains: String,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    /// Keys are drawn from [1, keyrange]; prefill fills half of it.
    #[arg(long, default_value_t = 1024)]
    keyrange: i64,
    #[arg(long = "search-pct", default_value_t = 90)]
    search_pct: u32,
    #[arg(long = "insert-pct", default_value_t = 5)]
    insert_pct: u32,
    #[arg(long = "remove-pct", default_value_t = 5)]
    remove_pct: u32,
    /// uniform or zipf:<theta>.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Native measurement window in seconds (after a 100ms warmup).
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// sim (deterministic, psync-exact) or native (wall-clock).
    #[arg(long, default_value = "sim")]
    mode: String,
    /// Sim-mode directive script: step <w>, bg_flush <cell>,
    /// early_commit <flush-seq>, crash.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Iterations; iteration i runs with seed seed+i.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Operations per sim iteration (sim mode sizes runs by ops, not time).
    #[arg(long, default_value_t = 1000)]
    ops: usize,
    /// Write the first iteration's full event log here (sim only).
    #[arg(long)]
    eventlog: Option<PathBuf>,
    /// Write the first iteration's persistent image here (sim only).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Run the structural auditor after every sim step.
    #[arg(long)]
    audit: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.cmd {
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Scenario { which } => cmd_scenario(which),
        Cmd::Check { log, cap } => cmd_check(&log, cap),
        Cmd::Recover { image, impl_kind } => cmd_recover(&image, &impl_kind),
    }
}

fn parse_impl(text: &str) -> anyhow::Result<SetImpl> {
    SetImpl::parse(text).with_context(|| format!("unknown impl {text:?} (expected pd or ld)"))
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn write_events(path: &PathBuf, events: &[Event]) -> anyhow::Result<()> {
    let f = BufWriter::new(File::create(path).with_context(|| format!("create {path:?}"))?);
    write_jsonl(events, f)?;
    Ok(())
}

fn load_schedule(path: &PathBuf, threads: usize) -> anyhow::Result<Vec<Directive>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("read schedule {path:?}"))?;
    let directives = parse_schedule(&text)?;
    let mut crashed = false;
    for d in &directives {
        if crashed {
            bail!("schedule contains directives after crash");
        }
        match *d {
            Directive::Step(w) if w >= threads => {
                bail!("schedule steps worker {w} but the run has {threads} threads");
            }
            Directive::Crash => crashed = true,
            _ => {}
        }
    }
    Ok(directives)
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<i32> {
    let impl_kind = parse_impl(&args.impl_kind)?;
    let variant = ContainsVariant::parse(&args.contains).with_context(|| {
        format!("unknown contains variant {:?} (expected pa, apa, pl, or pf)", args.contains)
    })?;
    if args.threads == 0 {
        bail!("threads must be at least 1");
    }
    if args.iters == 0 {
        bail!("iters must be at least 1");
    }
    let dist = Dist::parse(&args.dist, args.keyrange)?;
    let dist_name = dist.name().to_string();
    let workload = Workload::new(
        args.keyrange,
        dist,
        Mix {
            search_pct: args.search_pct,
            insert_pct: args.insert_pct,
            remove_pct: args.remove_pct,
        },
    )?;

    let native = match args.mode.as_str() {
        "native" => true,
        "sim" => false,
        other => bail!("unknown mode {other:?} (expected sim or native)"),
    };
    if native && args.schedule.is_some() {
        bail!("crash/directive schedules are unsupported in native mode; use --mode sim");
    }
    let schedule = match &args.schedule {
        Some(p) => Some(load_schedule(p, args.threads)?),
        None => None,
    };

    let mut rows: Vec<Row> = Vec::with_capacity(args.iters);
    for i in 0..args.iters {
        let seed = args.seed.wrapping_add(i as u64);
        let (row, report) = if native {
            let out = nativerun::run_native(nativerun::NativeSpec {
                impl_kind,
                variant,
                threads: args.threads,
                workload: &workload,
                duration: args.duration,
                seed,
            })?;
            let row = Row {
                impl_name: impl_kind.name(),
                contains: variant.name(),
                threads: args.threads,
                keyrange: args.keyrange,
                dist: dist_name.clone(),
                search_pct: args.search_pct,
                throughput: out.total_ops as f64 / out.elapsed,
                psyncs_per_search: ratio(out.stats.search.fences, out.search_ops),
                psyncs_per_update: ratio(out.stats.update.fences, out.successful_updates),
                redundant_psyncs: out.stats.search.redundant_fences
                    + out.stats.update.redundant_fences,
            };
            let report = serde_json::json!({
                "iter": i,
                "seed": seed,
                "mode": "native",
                "elapsed": out.elapsed,
                "ops": out.total_ops,
                "search_ops": out.search_ops,
                "successful_updates": out.successful_updates,
                "search_flushes": out.stats.search.flushes,
                "search_fences": out.stats.search.fences,
                "update_flushes": out.stats.update.flushes,
                "update_fences": out.stats.update.fences,
                "throughput": row.throughput,
                "psyncs_per_search": row.psyncs_per_search,
                "psyncs_per_update": row.psyncs_per_update,
                "redundant_psyncs": row.redundant_psyncs,
            });
            (row, report)
        } else {
            let out = simrun::run_sim(simrun::SimSpec {
                impl_kind,
                variant,
                threads: args.threads,
                workload: &workload,
                ops: args.ops,
                seed,
                schedule: schedule.as_deref(),
                audit: args.audit,
            })?;
            let hist = History::from_events(&out.events)?;
            let durable = check_durable_capped(&hist, &out.init, DEFAULT_OP_CAP);
            let sle: Option<Verdict> = hist
                .instrumented
                .then(|| check_sle_capped(&hist, &out.init, DEFAULT_OP_CAP));
            if i == 0 {
                if let Some(p) = &args.eventlog {
                    write_events(p, &out.events)?;
                }
                if let Some(p) = &args.image {
                    let f = BufWriter::new(
                        File::create(p).with_context(|| format!("create {p:?}"))?,
                    );
                    out.image.to_jsonl(f)?;
                }
            }
            let row = Row {
                impl_name: impl_kind.name(),
                contains: variant.name(),
                threads: args.threads,
                keyrange: args.keyrange,
                dist: dist_name.clone(),
                search_pct: args.search_pct,
                throughput: ratio(out.completed_ops as u64, out.steps) * 1e6,
                psyncs_per_search: ratio(out.stats.search.fences, out.search_ops),
                psyncs_per_update: ratio(out.stats.update.fences, out.successful_updates),
                redundant_psyncs: out.redundant_psyncs,
            };
            let report = serde_json::json!({
                "iter": i,
                "seed": seed,
                "mode": "sim",
                "steps": out.steps,
                "ops": out.completed_ops,
                "search_ops": out.search_ops,
                "successful_updates": out.successful_updates,
                "search_flushes": out.stats.search.flushes,
                "search_fences": out.stats.search.fences,
                "update_flushes": out.stats.update.flushes,
                "update_fences": out.stats.update.fences,
                "throughput": row.throughput,
                "psyncs_per_search": row.psyncs_per_search,
                "psyncs_per_update": row.psyncs_per_update,
                "redundant_psyncs": row.redundant_psyncs,
                "crashed": out.crashed,
                "recovered_set_size": out.recovered_set_size,
                "durable": durable.to_json(),
                "sle": sle.map(|v| v.to_json()),
            });
            (row, report)
        };
        eprintln!("{report}");
        rows.push(row);
    }

    let n = rows.len() as f64;
    let mean = serde_json::json!({ "mean": {
        "iters": rows.len(),
        "throughput": rows.iter().map(|r| r.throughput).sum::<f64>() / n,
        "psyncs_per_search": rows.iter().map(|r| r.psyncs_per_search).sum::<f64>() / n,
        "psyncs_per_update": rows.iter().map(|r| r.psyncs_per_update).sum::<f64>() / n,
        "redundant_psyncs": rows.iter().map(|r| r.redundant_psyncs as f64).sum::<f64>() / n,
    }});
    eprintln!("{mean}");

    match &args.csv {
        Some(p) => {
            let f = BufWriter::new(File::create(p).with_context(|| format!("create {p:?}"))?);
            csvout::write_rows(f, &rows)?;
        }
        None => {
            let stdout = std::io::stdout();
            csvout::write_rows(stdout.lock(), &rows)?;
        }
    }
    Ok(0)
}

fn cmd_scenario(which: ScenarioCmd) -> anyhow::Result<i32> {
    match which {
        ScenarioCmd::RedundantHelping { n, eventlog } => {
            if n < 1 {
                bail!("n must be at least 1");
            }
            let rep = redundant_helping(n);
            if let Some(p) = &eventlog {
                write_events(p, &rep.events)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "scenario": "redundant-helping",
                    "n": rep.n,
                    "redundant_psyncs": rep.redundant_psyncs,
                    "online_redundant": rep.online_redundant,
                })
            );
        }
        ScenarioCmd::VolatileProbe { eventlog } => {
            let rep = volatile_probe_violation();
            if let Some(p) = &eventlog {
                write_events(p, &rep.events)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "scenario": "volatile-probe",
                    "probe_result": rep.probe_result,
                    "post_result": rep.post_result,
                    "search_fences": rep.stats.search.fences,
                    "sle": rep.verdict.to_json(),
                })
            );
        }
    }
    Ok(0)
}

fn verdict_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Pass { .. } => 0,
        Verdict::Fail { .. } => 1,
        Verdict::Refused { .. } => 2,
    }
}

fn cmd_check(log: &PathBuf, cap: usize) -> anyhow::Result<i32> {
    let f = BufReader::new(File::open(log).with_context(|| format!("open {log:?}"))?);
    let events = read_jsonl(f)?;
    let init: BTreeSet<i64> = events
        .iter()
        .find_map(|e| {
            let arr = e.meta.as_ref()?.get("init")?.as_array()?;
            Some(arr.iter().filter_map(|v| v.as_i64()).collect())
        })
        .unwrap_or_default();
    let hist = History::from_events(&events)?;
    let durable = check_durable_capped(&hist, &init, cap);
    let sle = hist
        .instrumented
        .then(|| check_sle_capped(&hist, &init, cap));
    let red = redundancy_from_events(&events);
    println!(
        "{}",
        serde_json::json!({
            "events": events.len(),
            "ops": hist.ops.len(),
            "crashes": hist.crash_seqs.len(),
            "impl": hist.impl_kind.map(|k| k.name()),
            "variant": hist.variant.map(|v| v.name()),
            "instrumented": hist.instrumented,
            "init_size": init.len(),
            "durable": durable.to_json(),
            "sle": sle.as_ref().map(|v| v.to_json()),
            "redundant_flushes": red.redundant_flushes.len(),
            "redundant_fences": red.redundant_fences.len(),
        })
    );
    // Fail (1) dominates refused (2) dominates pass (0).
    let mut code = 0;
    for v in std::iter::once(&durable).chain(sle.iter()) {
        code = match (code, verdict_code(v)) {
            (1, _) | (_, 1) => 1,
            (a, b) => a.max(b),
        };
    }
    Ok(code)
}

fn cmd_recover(image: &PathBuf, impl_text: &str) -> anyhow::Result<i32> {
    let impl_kind = parse_impl(impl_text)?;
    let f = BufReader::new(File::open(image).with_context(|| format!("open {image:?}"))?);
    let img = PersistentImage::from_jsonl(f)?;
    let items = persistent_items(&img, impl_kind)?;
    println!(
        "{}",
        serde_json::json!({
            "impl": impl_kind.name(),
            "cells": img.cells.len(),
            "size": items.len(),
            "keys": items.iter().map(|&(k, _)| k).collect::<Vec<_>>(),
            "items": items,
        })
    );
    Ok(0)
}
