use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use waterweights_core::consensus::{parse_native, parse_v3_subset, ConsensusSnapshot};
use waterweights_core::error::Error as CoreError;
use waterweights_core::metrics::{
    estimate_joint_for_snapshot, group_diversity, guessing_entropy, uniformity_degree, GroupKey, JointDistribution,
};
use waterweights_core::pathsim::{
    read_records_csv, write_records_csv, ActivityModel, AdversarySpec, Algorithm, PreparedSnapshot, Simulation,
    SimulationConfig,
};
use waterweights_core::report::{adversary_cost, compare_runs, report_adversary_cost, NamedSeries, ReportBundle, SnapshotSummary};
use waterweights_core::selection::{selection_distribution, Position};
use waterweights_core::waterfill::{solve_dset_waterfill, solve_guard_waterfill, TargetPool, WaterfillSolution};
use waterweights_core::weights::{check_balance, compute_weights, WeightMode};

/// Relative bound on a waterfilling solution's conservation residual.
const CONSERVATION_TOLERANCE: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "waterweights", version, about = "Bandwidth-weights, waterfilling and path-selection simulation")]
struct Cli {
    /// Seed for randomized subcommands; required by `simulate` and `report`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print JSON instead of the text rendering, where both exist.
    #[arg(long, global = true)]
    json: bool,
    /// Suppress warnings and notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a consensus document into canonical snapshot JSON.
    Parse {
        #[arg(long, value_enum, default_value = "native")]
        format: Format,
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Positional bandwidth-weights of a snapshot.
    Weights {
        #[command(flatten)]
        input: SnapshotInput,
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
    },
    /// Per-relay waterfilling weights.
    Waterfill {
        #[command(flatten)]
        input: SnapshotInput,
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
        /// Comma-separated pools: guards, dset.
        #[arg(long, value_delimiter = ',', default_value = "guards")]
        pools: Vec<Pool>,
    },
    /// Simulate clients over a snapshot directory and write records CSV.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniformity degree, guessing entropy and group tables.
    Metrics {
        /// Joint guard/exit distribution CSV.
        #[arg(long, conflicts_with = "snapshot")]
        joint: Option<PathBuf>,
        /// Derive the joint distribution from a snapshot instead.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, default_value = "abwrs")]
        algo: AlgoArg,
        /// Destination port for the exit distribution.
        #[arg(long, default_value_t = 443)]
        port: u16,
        /// Include the guessing trace and, with --snapshot, group tables.
        #[arg(long)]
        all: bool,
        /// Also write the joint distribution used.
        #[arg(long)]
        write_joint: Option<PathBuf>,
    },
    /// Report bundle: snapshot summaries, compromise curve, adversary cost.
    Report {
        #[command(flatten)]
        sim: SimArgs,
        /// Records from a previous `simulate` run with the same settings.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Curve horizon in seconds; defaults to the simulated span.
        #[arg(long)]
        horizon: Option<i64>,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// Consensus weight of a single guard whose entry share is to be
        /// matched by relays at the water level.
        #[arg(long)]
        cost_target: Option<u64>,
        /// Wgg for the cost; defaults to the last snapshot's.
        #[arg(long)]
        cost_wgg: Option<f64>,
        /// Water level for the cost; defaults to the last snapshot's guard
        /// waterfilling.
        #[arg(long)]
        water_level: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two records files from runs over the same clients.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        horizon: i64,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
}

#[derive(Args)]
struct SnapshotInput {
    snapshot: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Serialize)]
struct SimArgs {
    /// Directory of snapshot files, read in file-name order.
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    adversary: Option<PathBuf>,
    #[arg(long, default_value = "abwrs")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 1000)]
    clients: u64,
    #[arg(long, default_value_t = 3)]
    guards: usize,
    /// Destination ports, used round-robin.
    #[arg(long, value_delimiter = ',', default_value = "443")]
    ports: Vec<u16>,
    /// Seconds between circuits while active.
    #[arg(long, default_value_t = 600)]
    interval: i64,
    /// Daily active window `START-END` in seconds since midnight UTC;
    /// repeatable. Default: always active.
    #[arg(long = "window", value_parser = parse_window)]
    windows: Vec<(u32, u32)>,
    /// Exclusive end time (absolute seconds).
    #[arg(long)]
    end: Option<i64>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Native,
    V3,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Standard,
    GeEqualized,
}

impl From<Mode> for WeightMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Standard => WeightMode::Standard,
            Mode::GeEqualized => WeightMode::GuardExitEqualized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Pool {
    Guards,
    Dset,
}

#[derive(Clone, Copy, Serialize)]
#[serde(transparent)]
struct AlgoArg(Algorithm);

impl std::str::FromStr for AlgoArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<Algorithm>().map(AlgoArg).map_err(|e| e.to_string())
    }
}

fn parse_window(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once('-').ok_or("expected START-END")?;
    let a = a.parse().map_err(|_| format!("bad window start {a:?}"))?;
    let b = b.parse().map_err(|_| format!("bad window end {b:?}"))?;
    Ok((a, b))
}

struct Ctx {
    seed: Option<u64>,
    json: bool,
    quiet: bool,
}

impl Ctx {
    fn warn(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("warning: {msg}");
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn load_snapshot(ctx: &Ctx, path: &Path, format: Format) -> Result<ConsensusSnapshot> {
    let text = read(path)?;
    let snapshot = match format {
        Format::Json => ConsensusSnapshot::from_json(&text)?,
        Format::Native => parse_native(&text)?,
        Format::V3 => {
            let doc = parse_v3_subset(&text)?;
            for w in &doc.warnings {
                ctx.warn(format_args!("{}:{}: {}", path.display(), w.line, w.message));
            }
            doc.snapshot
        }
    };
    Ok(snapshot)
}

fn load_sequence(ctx: &Ctx, dir: &Path, format: Format) -> Result<Vec<ConsensusSnapshot>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file());
    files.sort();
    if files.is_empty() {
        return Err(CoreError::InvalidInput(format!("no snapshot files in {}", dir.display())).into());
    }
    files
        .iter()
        .map(|p| load_snapshot(ctx, p, format).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn load_adversary(path: Option<&Path>) -> Result<AdversarySpec> {
    match path {
        Some(p) => Ok(AdversarySpec::from_json(&read(p)?).with_context(|| format!("loading {}", p.display()))?),
        None => Ok(AdversarySpec::none()),
    }
}

fn sim_config(ctx: &Ctx, args: &SimArgs) -> Result<SimulationConfig> {
    let Some(seed) = ctx.seed else {
        bail!(CoreError::InvalidInput("--seed is required".into()));
    };
    let mut cfg = SimulationConfig::new(args.algo.0, args.clients, seed);
    cfg.num_entry_guards = args.guards;
    cfg.end_time = args.end;
    cfg.activity = ActivityModel {
        daily_windows: if args.windows.is_empty() {
            ActivityModel::default().daily_windows
        } else {
            args.windows.clone()
        },
        interval: args.interval,
        ports: args.ports.clone(),
    };
    Ok(cfg)
}

fn check_conservation(s: &WaterfillSolution) -> Result<()> {
    if s.conservation_residual.abs() > CONSERVATION_TOLERANCE * s.target.max(1.0) {
        bail!(CoreError::Invariant(format!(
            "{:?} waterfilling residual {} exceeds tolerance for target {}",
            s.target_pool, s.conservation_residual, s.target
        )));
    }
    Ok(())
}

fn cmd_weights(ctx: &Ctx, input: &SnapshotInput, mode: Mode) -> Result<()> {
    let snapshot = load_snapshot(ctx, &input.snapshot, input.format)?;
    let totals = snapshot.totals();
    let case = snapshot.load_case()?;
    let w = compute_weights(&totals, &case, mode.into())?;
    for note in &w.notes {
        ctx.warn(note);
    }
    let balance = check_balance(&totals, &w);
    let out = json!({
        "case": case.name(),
        "mode": w.mode,
        "Wgg": w.wgg, "Wmg": w.wmg, "Wee": w.wee, "Wme": w.wme,
        "Wgd": w.wgd, "Wmd": w.wmd, "Wed": w.wed,
        "totals": totals,
        "residuals": balance,
        "scaled_10000": w.scaled(),
        "notes": w.notes,
    });
    emit(None, &to_json(&out))
}

fn cmd_waterfill(ctx: &Ctx, input: &SnapshotInput, mode: Mode, pools: &[Pool]) -> Result<()> {
    let snapshot = load_snapshot(ctx, &input.snapshot, input.format)?;
    let case = snapshot.load_case()?;
    let w = compute_weights(&snapshot.totals(), &case, mode.into())?;
    for note in &w.notes {
        ctx.warn(note);
    }
    let mut solutions = Vec::new();
    for pool in pools {
        let s = match pool {
            Pool::Guards => solve_guard_waterfill(&snapshot, &w)?,
            Pool::Dset => solve_dset_waterfill(&snapshot, &w)?,
        };
        check_conservation(&s)?;
        solutions.push(s);
    }
    if ctx.json {
        return emit(None, &to_json(&solutions));
    }
    let mut text = String::new();
    for s in &solutions {
        for line in s.wfbw_lines() {
            text.push_str(&line);
            text.push('\n');
        }
    }
    emit(None, &text)
}

fn cmd_simulate(ctx: &Ctx, args: &SimArgs, out: Option<&Path>) -> Result<()> {
    let cfg = sim_config(ctx, args)?;
    let sequence = load_sequence(ctx, &args.snapshots, args.format)?;
    let adversary = load_adversary(args.adversary.as_deref())?;
    let sim = Simulation::new(&sequence, &adversary, cfg)?;
    for p in sim.prepared() {
        for note in &p.weights().notes {
            ctx.warn(format_args!("snapshot {}: {note}", p.snapshot().valid_after()));
        }
    }
    let output = sim.run();
    let mut buf = Vec::new();
    write_records_csv(&output.records, &mut buf)?;
    emit(out, std::str::from_utf8(&buf).expect("CSV is UTF-8"))?;
    let compromised = output.records.iter().filter(|r| r.first_compromise_time.is_some()).count();
    let summary = json!({
        "clients": output.records.len(),
        "clients_compromised": compromised,
        "streams": sim.streams().len(),
        "streams_skipped": output.streams_skipped,
        "circuits_failed": output.circuits_failed,
    });
    if ctx.json && out.is_some() {
        emit(None, &to_json(&summary))?;
    } else if !ctx.quiet {
        eprintln!("{summary}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_metrics(
    ctx: &Ctx,
    joint: Option<&Path>,
    snapshot: Option<&Path>,
    format: Format,
    algo: Algorithm,
    port: u16,
    all: bool,
    write_joint: Option<&Path>,
) -> Result<()> {
    let mut groups = None;
    let jd = match (joint, snapshot) {
        (Some(path), _) => JointDistribution::read_csv(fs::File::open(path).with_context(|| format!("reading {}", path.display()))?)?,
        (None, Some(path)) => {
            let snap = load_snapshot(ctx, path, format)?;
            let w = compute_weights(&snap.totals(), &snap.load_case()?, algo.weight_mode())?;
            let solutions = waterweights_core::waterfill::solve_applicable(&snap, &w, algo.target_pools())?;
            let entry = selection_distribution(&snap, &w, &solutions, Position::Entry, None)?;
            let exit = selection_distribution(&snap, &w, &solutions, Position::Exit, Some(port))?;
            if all {
                groups = Some(json!({
                    "country": group_diversity(&snap, &entry, GroupKey::Country),
                    "as": group_diversity(&snap, &entry, GroupKey::As),
                }));
            }
            estimate_joint_for_snapshot(&snap, &entry, &exit)?
        }
        (None, None) => bail!(CoreError::InvalidInput("one of --joint or --snapshot is required".into())),
    };
    if let Some(path) = write_joint {
        jd.write_csv(fs::File::create(path).with_context(|| format!("writing {}", path.display()))?)?;
    }
    let trace = guessing_entropy(&jd);
    let uniformity = match uniformity_degree(&jd) {
        Ok(d) => Some(d),
        Err(e) => {
            ctx.warn(&e);
            None
        }
    };
    let mut out = json!({
        "guards": jd.n_guards(),
        "exits": jd.n_exits(),
        "uniformity_degree": uniformity,
        "guessing_entropy": trace.g,
    });
    if all {
        out["trace"] = serde_json::to_value(&trace)?;
        out["group_tables"] = groups.unwrap_or(serde_json::Value::Null);
    }
    emit(None, &to_json(&out))
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    ctx: &Ctx,
    args: &SimArgs,
    records: Option<&Path>,
    horizon: Option<i64>,
    resolution: usize,
    cost_target: Option<u64>,
    cost_wgg: Option<f64>,
    water_level: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = sim_config(ctx, args)?;
    let sequence = load_sequence(ctx, &args.snapshots, args.format)?;
    let adversary = load_adversary(args.adversary.as_deref())?;
    let prepared = sequence
        .iter()
        .map(|s| PreparedSnapshot::new(s, &adversary, cfg.algorithm, &cfg.activity.ports))
        .collect::<waterweights_core::Result<Vec<_>>>()?;

    let mut bundle = ReportBundle::new(cfg.seed, cfg.algorithm, serde_json::to_value(args)?);
    bundle.run_config["seed"] = json!(cfg.seed);
    bundle.snapshots = prepared.iter().map(SnapshotSummary::from_prepared).collect();

    if let Some(path) = records {
        let recs = read_records_csv(fs::File::open(path).with_context(|| format!("reading {}", path.display()))?)?;
        let first = sequence[0].valid_after();
        let last = sequence[sequence.len() - 1].valid_after();
        let horizon = horizon.unwrap_or(cfg.end_time.unwrap_or(last + 3600) - first);
        bundle.series.push(NamedSeries {
            name: "compromise_fraction".into(),
            series: waterweights_core::pathsim::compromise_curve(&recs, horizon, resolution)?,
        });
    }

    if let Some(target) = cost_target {
        let last = prepared.last().expect("non-empty sequence");
        let wgg = cost_wgg.unwrap_or(last.weights().wgg);
        let cost = match water_level {
            Some(level) => adversary_cost(target, wgg, level)?,
            None => {
                let wf = last
                    .solutions()
                    .iter()
                    .find(|s| s.target_pool == TargetPool::GuardSet)
                    .map(Ok)
                    .unwrap_or_else(|| Err(CoreError::NotApplicable("no guard waterfilling for the last snapshot".into())))?;
                report_adversary_cost(wf, target, wgg)?
            }
        };
        bundle.adversary_cost = Some(cost);
    }
    emit(out, &bundle.to_json())
}

fn cmd_compare(a: &Path, b: &Path, horizon: i64, resolution: usize) -> Result<()> {
    let open = |p: &Path| -> Result<_> {
        Ok(read_records_csv(fs::File::open(p).with_context(|| format!("reading {}", p.display()))?)?)
    };
    let report = compare_runs(&open(a)?, &open(b)?, horizon, resolution)?;
    emit(None, &to_json(&report))
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        json: cli.json,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Parse { format, file, out } => {
            let snapshot = load_snapshot(&ctx, file, *format)?;
            emit(out.as_deref(), &snapshot.to_json())
        }
        Command::Weights { input, mode } => cmd_weights(&ctx, input, *mode),
        Command::Waterfill { input, mode, pools } => cmd_waterfill(&ctx, input, *mode, pools),
        Command::Simulate { sim, out } => cmd_simulate(&ctx, sim, out.as_deref()),
        Command::Metrics {
            joint,
            snapshot,
            format,
            algo,
            port,
            all,
            write_joint,
        } => cmd_metrics(
            &ctx,
            joint.as_deref(),
            snapshot.as_deref(),
            *format,
            algo.0,
            *port,
            *all,
            write_joint.as_deref(),
        ),
        Command::Report {
            sim,
            records,
            horizon,
            resolution,
            cost_target,
            cost_wgg,
            water_level,
            out,
        } => cmd_report(
            &ctx,
            sim,
            records.as_deref(),
            *horizon,
            *resolution,
            *cost_target,
            *cost_wgg,
            *water_level,
            out.as_deref(),
        ),
        Command::Compare { a, b, horizon, resolution } => cmd_compare(a, b, *horizon, *resolution),
    }
}

/// 2: bad input, 3: infeasible or not applicable, 4: invariant breach.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<CoreError>()) {
        Some(CoreError::Infeasible(_) | CoreError::NotApplicable(_) | CoreError::EmptyPool(_)) => 3,
        Some(CoreError::Invariant(_)) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
