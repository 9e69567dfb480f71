//! `opser-sim`: run scenarios and sweeps, print analytic tables and check
//! recorded traces.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use opser_core::analysis::{
    cid_energy_cost, opportunistic_delivery_prob, unicast_delivery_prob, HopLinkProfile, LogBase,
};
use opser_core::engine::{Purpose, RngStream};
use opser_core::mac::airtime;
use opser_core::radio::{prr_vs_distance, PropagationParams};
use opser_core::scenario::sweep::{aggregate, run_plan, AggregateRow, RunRecord, SweepSpec};
use opser_core::trace::{parse_trace, render_trace};
use opser_core::{
    run_scenario, validate_trace, ProtocolKind, RunOptions, Scenario, ValidateOptions,
};

#[derive(Parser)]
#[command(
    name = "opser-sim",
    version,
    about = "Sensor network routing simulator"
)]
struct Cli {
    /// Run only this seed instead of the file's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV and trace output.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Routing protocol: opser, oppbcast or greedy_unicast.
    #[arg(long, global = true)]
    protocol: Option<ProtocolKind>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file under each of its seeds.
    Run {
        scenario: PathBuf,
        /// Also write the full event trace of every run.
        #[arg(long)]
        trace: bool,
    },
    /// Expand a sweep file and run every point under every seed.
    Sweep { sweep: PathBuf },
    /// Print the closed-form delivery, flood-cost and reception tables.
    Analyze {
        /// Monte Carlo trials per distance for the reception table.
        #[arg(long, default_value_t = 10_000)]
        trials: u32,
    },
    /// Check a recorded trace against the protocol invariants.
    Validate {
        trace: PathBuf,
        /// Holding time T in seconds.
        #[arg(long, default_value_t = 0.005)]
        hold_t: f64,
        /// OppBcast contention window in seconds.
        #[arg(long, default_value_t = 0.005)]
        window: f64,
    },
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}"))
        .unwrap_or_else(|| "-".into())
}

fn print_record(r: &RunRecord) {
    let m = &r.metrics;
    let (avg, nec) = m.energy_metrics();
    println!(
        "{} seed {} [{}] {} nodes: pdr {} delay {} s, energy {:.4} J ({} J/node, nec {} J), dup tx {}, caf {}",
        r.scenario,
        r.seed,
        r.protocol,
        r.n_nodes,
        fmt_opt(m.pdr(), 4),
        fmt_opt(m.avg_e2e_delay(), 4),
        m.tec_j,
        fmt_opt(avg, 5),
        fmt_opt(nec, 5),
        m.duplicate_transmissions,
        m.caf_count
    );
}

fn cmd_run(cli: &Cli, path: &Path, trace: bool) -> Result<()> {
    let mut sc = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(p) = cli.protocol {
        sc.protocol = p;
    }
    let seeds = match cli.seed {
        Some(s) => vec![s],
        None => sc.seeds.clone(),
    };
    if seeds.is_empty() {
        bail!("scenario has no seeds; pass --seed");
    }
    fs::create_dir_all(&cli.out_dir)?;
    let mut records = Vec::new();
    for seed in seeds {
        let out = run_scenario(&sc, seed, RunOptions { trace })?;
        if let Some(t) = &out.trace {
            let file = cli
                .out_dir
                .join(format!("{}-{}-seed{seed}.trace", sc.name, sc.protocol));
            fs::write(&file, render_trace(t))?;
        }
        let rec = RunRecord {
            scenario: sc.name.clone(),
            point: 0,
            label: String::new(),
            seed,
            protocol: sc.protocol,
            n_nodes: out.layout.len(),
            packet_rate: sc.traffic.rate_pps,
            metrics: out.metrics,
        };
        print_record(&rec);
        records.push(rec);
    }
    let csv_path = cli.out_dir.join(format!("{}-{}.csv", sc.name, sc.protocol));
    write_csv(
        &csv_path,
        &RunRecord::csv_header(),
        records.iter().map(RunRecord::csv_row),
    )?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli, path: &Path) -> Result<()> {
    let (spec, dir) =
        SweepSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
    let mut plan = spec.plan(&dir)?;
    if let Some(p) = cli.protocol {
        if spec.sweep.contains_key("protocol") {
            plan.points.retain(|pt| pt.scenario.protocol == p);
        } else {
            for pt in &mut plan.points {
                pt.scenario.protocol = p;
            }
        }
    }
    if let Some(s) = cli.seed {
        plan.seeds = vec![s];
    }
    if plan.points.is_empty() {
        bail!("no sweep point left to run");
    }
    eprintln!(
        "{}: {} points x {} seeds",
        plan.name,
        plan.points.len(),
        plan.seeds.len()
    );
    let records = run_plan(&plan)?;
    fs::create_dir_all(&cli.out_dir)?;
    let runs = cli.out_dir.join(format!("{}-runs.csv", plan.name));
    write_csv(
        &runs,
        &RunRecord::csv_header(),
        records.iter().map(RunRecord::csv_row),
    )?;
    let agg = aggregate(&records);
    let agg_path = cli.out_dir.join(format!("{}.csv", plan.name));
    write_csv(
        &agg_path,
        &AggregateRow::csv_header(),
        agg.iter().map(AggregateRow::csv_row),
    )?;
    for row in &agg {
        let stat = |name: &str| {
            row.stats
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, s)| *s)
                .unwrap_or_default()
        };
        let (pdr, delay, nec) = (stat("pdr"), stat("avg_delay_s"), stat("nec_j"));
        println!(
            "{:>3} {:<40} {:<14} pdr {:.4}±{:.4}  delay {:.4}±{:.4} s  nec {:.5} J",
            row.point, row.label, row.protocol, pdr.mean, pdr.std, delay.mean, delay.std, nec.mean
        );
    }
    println!("wrote {} and {}", runs.display(), agg_path.display());
    Ok(())
}

fn cmd_analyze(cli: &Cli, trials: u32) -> Result<()> {
    fs::create_dir_all(&cli.out_dir)?;
    let sc = Scenario::default();
    let air = airtime(sc.params.cid_bytes, sc.mac.data_rate_bps)?;
    let e_tx = sc.energy.p_tx_w * air;
    let e_rx = sc.energy.p_rx_w * air;

    println!("flood cost, one round, degree = ln N");
    println!("{:>6} {:>14} {:>14}", "nodes", "total_j", "bound_j");
    let mut rows = Vec::new();
    for side in 3..=15u32 {
        let n = (side * side) as usize;
        let degrees = vec![(n as f64).ln(); n];
        let c = cid_energy_cost(&degrees, e_tx, e_rx, 1, LogBase::Natural)?;
        println!("{n:>6} {:>14.6e} {:>14.6e}", c.total_j, c.bound_j);
        rows.push(vec![
            n.to_string(),
            e_tx.to_string(),
            e_rx.to_string(),
            c.total_j.to_string(),
            c.bound_j.to_string(),
        ]);
    }
    let header: Vec<String> = ["nodes", "e_tx_j", "e_rx_j", "total_j", "bound_j"]
        .map(String::from)
        .to_vec();
    write_csv(&cli.out_dir.join("analysis-cid-cost.csv"), &header, rows)?;

    println!("\nend-to-end delivery, link probability p per candidate");
    println!(
        "{:>5} {:>5} {:>6} {:>10} {:>10}",
        "hops", "cands", "p", "P_O", "P_U"
    );
    let mut rows = Vec::new();
    for hops in [2usize, 4, 6, 8, 10] {
        for cands in [1usize, 2, 3, 5] {
            for p in [0.3, 0.5, 0.7, 0.9] {
                let prof = HopLinkProfile::uniform(&vec![p; cands], hops)?;
                let po = opportunistic_delivery_prob(&prof)?;
                let pu = unicast_delivery_prob(p, hops as u32)?;
                println!("{hops:>5} {cands:>5} {p:>6.2} {po:>10.6} {pu:>10.6}");
                rows.push(vec![
                    hops.to_string(),
                    cands.to_string(),
                    p.to_string(),
                    po.to_string(),
                    pu.to_string(),
                ]);
            }
        }
    }
    let header: Vec<String> = ["hops", "candidates", "p", "p_opportunistic", "p_unicast"]
        .map(String::from)
        .to_vec();
    write_csv(&cli.out_dir.join("analysis-delivery.csv"), &header, rows)?;

    println!("\nreception probability vs distance ({trials} trials per point)");
    let mut rows = Vec::new();
    let mut rng = RngStream::global(cli.seed.unwrap_or(1), Purpose::Analysis);
    let header_line: String = [(4.5, 4.0), (3.0, 4.0), (4.5, 2.0)]
        .iter()
        .map(|(b, s)| format!("  b={b} s={s}"))
        .collect();
    println!("{:>6}{header_line}", "d_m");
    for d in (2..=80).step_by(2) {
        let d = d as f64;
        let mut line = format!("{d:>6}");
        for (beta, sigma) in [(4.5, 4.0), (3.0, 4.0), (4.5, 2.0)] {
            let pp = PropagationParams {
                beta,
                sigma_db: sigma,
                ..Default::default()
            };
            let prr = prr_vs_distance(&pp, d, trials, &mut rng)?;
            line.push_str(&format!("{prr:>12.4}"));
            rows.push(vec![
                d.to_string(),
                beta.to_string(),
                sigma.to_string(),
                prr.to_string(),
            ]);
        }
        println!("{line}");
    }
    let header: Vec<String> = ["distance_m", "beta", "sigma_db", "prr"]
        .map(String::from)
        .to_vec();
    write_csv(&cli.out_dir.join("analysis-prr.csv"), &header, rows)?;
    println!("\nwrote analysis-*.csv to {}", cli.out_dir.display());
    Ok(())
}

fn cmd_validate(path: &Path, hold_t: f64, window: f64) -> Result<bool> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let records = parse_trace(&text)?;
    let opts = ValidateOptions {
        hold_t: opser_core::SimTime::from_secs(hold_t),
        oppbcast_window: opser_core::SimTime::from_secs(window),
    };
    let report = validate_trace(&records, &opts);
    for v in report.violations.iter().take(50) {
        println!("{v}");
    }
    if report.violations.len() > 50 {
        println!("... {} more", report.violations.len() - 50);
    }
    let m = &report.metrics;
    println!(
        "{} records, {} violations; sent {} delivered {} pdr {} tec {:.6} J",
        report.records,
        report.violations.len(),
        m.sent_by_sources,
        m.received_at_sink,
        fmt_opt(m.pdr(), 4),
        m.tec_j
    );
    Ok(report.is_ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run { scenario, trace } => cmd_run(&cli, scenario, *trace).map(|_| true),
        Command::Sweep { sweep } => cmd_sweep(&cli, sweep).map(|_| true),
        Command::Analyze { trials } => cmd_analyze(&cli, *trials).map(|_| true),
        Command::Validate {
            trace,
            hold_t,
            window,
        } => cmd_validate(trace, *hold_t, *window),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
