use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rffast::experiment::{base_multiples, run_trials, sweep, write_sweep_csv, ExperimentConfig};
use rffast::formats::{read_signal, write_signal, write_spectrum};
use rffast::frontend::subsample_and_transform;
use rffast::metrics::{write_bound_report, BoundParams};
use rffast::peeling::{decode, DecodeOptions};
use rffast::planner::{verify_incoherence, FrontendPlan, ShiftLayout};
use rffast::spectral_model::{add_noise, random_spectrum_with, synthesize, Constellation};

mod verify;

#[derive(Parser)]
#[command(
    name = "rffast",
    version,
    about = "Noise-robust sparse DFT: planning, trials, sweeps and bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and screen a front-end plan, print its summary and optionally save it.
    Plan(Common),
    /// Run Monte Carlo trials and write one CSV row per trial plus a summary row.
    Run(Common),
    /// Sweep signal lengths, picking the cheapest (C, N) that reaches the target.
    Sweep(SweepArgs),
    /// Tabulate every analytic bound at the configured parameters.
    Bounds(Common),
    /// Run the oracle suites; exits 4 on any mismatch.
    Verify(VerifyArgs),
    /// Write a random noisy signal (and its true spectrum) in the binary formats.
    Generate(GenerateArgs),
    /// Decode a binary signal file with a saved plan.
    Decode(DecodeArgs),
}

/// Flags mirroring the experiment config. Keys in `--config` win over flags.
#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// TOML experiment config; its keys override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Sets k = round(n^delta) when k is absent.
    #[arg(long)]
    delta: Option<f64>,
    /// `inf` for noiseless.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// `constellation` or `arbitrary-phase`.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    snap: Option<bool>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    per_cluster: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    n_scale: Option<f64>,
    #[arg(long)]
    max_load: Option<f64>,
    #[arg(long)]
    max_passes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    plan_seed: Option<u64>,
    /// Zero the timing columns so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated signal lengths.
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    /// Use lengths 1..=COUNT times 124950 instead of --n-list.
    #[arg(long)]
    multiples: Option<usize>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    max_clusters: Option<usize>,
    /// Hold these sampling periods fixed, so bin counts grow with n.
    #[arg(long, value_delimiter = ',')]
    periods: Vec<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Noiseless instances checked against the dense DFT.
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Time-domain signal output (FFAST01).
    #[arg(long)]
    signal: PathBuf,
    /// True spectrum output (FFASTSP0).
    #[arg(long)]
    spectrum: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Plan TOML written by `rffast plan`.
    #[arg(long)]
    plan: PathBuf,
    /// Signal in FFAST01 format.
    #[arg(long)]
    signal: PathBuf,
    /// Recovered spectrum output (FFASTSP0).
    #[arg(long, short)]
    output: PathBuf,
    /// Peel log, one JSON event per line.
    #[arg(long)]
    peel_log: Option<PathBuf>,
    /// Snap values to the constellation calibrated at this SNR.
    #[arg(long)]
    snap_db: Option<f64>,
    #[arg(long, default_value_t = rffast::peeling::DEFAULT_MAX_PASSES)]
    max_passes: usize,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Verify(_) => 4,
        }
    }
}

impl From<rffast::Error> for Failure {
    fn from(e: rffast::Error) -> Self {
        match e {
            rffast::Error::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Errors touching data files count as I/O, whatever their kind.
fn data<T>(path: &Path, r: rffast::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// File at `path`, or stdout.
fn sink(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_config_file(path: &Path) -> Outcome<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

impl Common {
    fn flags(&self) -> toml::Table {
        let mut t = toml::Table::new();
        let mut put = |key: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                t.insert(key.into(), v);
            }
        };
        put("preset", self.preset.clone().map(Into::into));
        put("n", self.n.map(|v| (v as i64).into()));
        put("k", self.k.map(|v| (v as i64).into()));
        put("delta", self.delta.map(Into::into));
        put("snr_db", self.snr_db.map(Into::into));
        put("values", self.values.clone().map(Into::into));
        put("snap", self.snap.map(Into::into));
        put("clusters", self.clusters.map(|v| (v as i64).into()));
        put("per_cluster", self.per_cluster.map(|v| (v as i64).into()));
        put("gamma", self.gamma.map(Into::into));
        put("c1", self.c1.map(Into::into));
        put("n_scale", self.n_scale.map(Into::into));
        put("max_load", self.max_load.map(Into::into));
        put("max_passes", self.max_passes.map(|v| (v as i64).into()));
        put("trials", self.trials.map(|v| (v as i64).into()));
        put("seed", self.seed.map(|v| (v as i64).into()));
        put("plan_seed", self.plan_seed.map(|v| (v as i64).into()));
        put("timing", self.no_timing.then_some(false.into()));
        put("output", self.output.as_ref().map(|p| p.display().to_string().into()));
        t
    }

    /// Flags first, then the config file on top.
    fn resolve_with(&self, extra: toml::Table) -> Outcome<ExperimentConfig> {
        let mut table = self.flags();
        table.extend(extra);
        if let Some(path) = &self.config {
            table.extend(read_config_file(path)?);
        }
        let text = toml::to_string(&table).map_err(|e| Failure::Config(e.to_string()))?;
        Ok(ExperimentConfig::from_toml(&text)?)
    }

    fn resolve(&self) -> Outcome<ExperimentConfig> {
        self.resolve_with(toml::Table::new())
    }
}

fn require_seed(cfg: &ExperimentConfig) -> Outcome<()> {
    if cfg.seed.is_none() {
        return Err(Failure::Config("--seed (or `seed` in the config) is required".into()));
    }
    Ok(())
}

fn print_plan_summary(plan: &FrontendPlan, out: &mut dyn Write) -> io::Result<()> {
    let report = verify_incoherence(plan);
    let layout = match plan.layout() {
        ShiftLayout::Clustered(p) => format!("clustered C={} N={} b={}", p.clusters, p.per_cluster, p.base),
        ShiftLayout::Explicit => "explicit".into(),
    };
    writeln!(out, "n          {}", plan.n())?;
    writeln!(out, "bins       {:?}", plan.bin_counts())?;
    writeln!(out, "shifts     {layout}, D={}", plan.delay_chains())?;
    writeln!(out, "threshold  {:.3}", plan.threshold())?;
    writeln!(out, "mu_max     {:.4}", report.mu_max)?;
    writeln!(
        out,
        "bound      {:.4} ({})",
        report.bound,
        if report.passed { "passed" } else { "failed" }
    )?;
    writeln!(out, "m          {}", plan.samples_used())?;
    writeln!(out, "m/n        {:.5}", plan.samples_used() as f64 / plan.n() as f64)
}

/// Planning alone needs no trial seed; shifts then come from draw seed 0.
fn resolve_for_planning(args: &Common) -> Outcome<ExperimentConfig> {
    let mut cfg = args.resolve()?;
    if cfg.seed.is_none() && cfg.plan_seed.is_none() {
        cfg.plan_seed = Some(0);
    }
    Ok(cfg)
}

fn cmd_plan(args: &Common) -> Outcome<()> {
    let cfg = resolve_for_planning(args)?;
    let plan = cfg.build_plan()?;
    print_plan_summary(&plan, &mut io::stderr()).map_err(|e| Failure::Io(e.to_string()))?;
    let text = plan.to_toml()?;
    let mut out = sink(cfg.output.as_deref())?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::Io(e.to_string()))
}

fn cmd_run(args: &Common) -> Outcome<()> {
    let cfg = args.resolve()?;
    require_seed(&cfg)?;
    let out = sink(cfg.output.as_deref())?;
    let set = run_trials(&cfg)?;
    let s = &set.stats;
    eprintln!(
        "trials {}  success {:.4}  mean l1 {:.4}  m {}  wall {:.2}s",
        s.trials,
        s.success_rate(),
        s.l1_error_mean,
        s.samples_used,
        s.wall_time
    );
    set.write_csv(out)?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Outcome<()> {
    let mut extra = toml::Table::new();
    let lengths = match args.multiples {
        Some(m) => base_multiples(m),
        None => args.n_list.clone(),
    };
    if !lengths.is_empty() {
        extra.insert(
            "n_list".into(),
            toml::Value::Array(lengths.iter().map(|&n| toml::Value::from(n as i64)).collect()),
        );
    }
    if let Some(t) = args.target {
        extra.insert("target".into(), t.into());
    }
    if let Some(c) = args.max_clusters {
        extra.insert("max_clusters".into(), (c as i64).into());
    }
    if !args.periods.is_empty() {
        extra.insert(
            "periods".into(),
            toml::Value::Array(args.periods.iter().map(|&t| toml::Value::from(t as i64)).collect()),
        );
    }
    let cfg = args.common.resolve_with(extra)?;
    require_seed(&cfg)?;
    let out = sink(cfg.output.as_deref())?;
    let rows = sweep(&cfg)?;
    for r in &rows {
        eprintln!(
            "n {:>8}  C={:<2} N={}  m {:>6}  success {:.3}  {:.0} us{}",
            r.n,
            r.clusters,
            r.per_cluster,
            r.m,
            r.success_rate,
            r.micros_frontend + r.micros_decode,
            if r.met_target { "" } else { "  (target missed)" }
        );
    }
    write_sweep_csv(&rows, out)?;
    Ok(())
}

fn cmd_bounds(args: &Common) -> Outcome<()> {
    let cfg = resolve_for_planning(args)?;
    let plan = cfg.build_plan()?;
    let n = plan.n();
    let snr_db = if cfg.noiseless() {
        rffast::experiment::NOISELESS_REFERENCE_DB
    } else {
        cfg.snr_db
    };
    let snr = rffast::spectral_model::db_to_linear(snr_db);
    // The weakest stage sees the smallest per-bin SNR.
    let f_min = *plan.bin_counts().iter().min().expect("plans have stages");
    let n_samples = match plan.layout() {
        ShiftLayout::Clustered(p) => p.per_cluster,
        ShiftLayout::Explicit => plan.delay_chains(),
    };
    let params = BoundParams {
        rho_b: f_min as f64 * snr,
        d: plan.delay_chains(),
        gamma: plan.gamma(),
        n_samples,
        c1: plan.c1(),
        n,
        k: cfg.resolve_k(n)?,
        m2: Constellation::from_snr_db(snr_db)?.phase_levels(),
    };
    write_bound_report(&params, sink(cfg.output.as_deref())?)?;
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Outcome<()> {
    let cfg = args.common.resolve()?;
    require_seed(&cfg)?;
    cfg.validate()?;
    let n = cfg.resolve_n()?;
    let k = cfg.resolve_k(n)?;
    let seed = cfg.seed()?;
    let truth = random_spectrum_with(n, k, &cfg.value_model()?, seed)?;
    let mut x = synthesize(&truth);
    if !cfg.noiseless() {
        x = add_noise(&x, cfg.noise_variance(), seed.rotate_left(32) ^ 0x5eed)?;
    }
    let mut w = create(&args.signal)?;
    data(&args.signal, write_signal(&mut w, &x))?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    if let Some(path) = &args.spectrum {
        let mut w = create(path)?;
        data(path, write_spectrum(&mut w, &truth))?;
        w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    }
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Outcome<()> {
    let text = std::fs::read_to_string(&args.plan).map_err(|e| Failure::Io(format!("{}: {e}", args.plan.display())))?;
    let plan = FrontendPlan::from_toml(&text)?;
    let x = data(&args.signal, read_signal(&mut open(&args.signal)?))?;
    let bank = subsample_and_transform(&x, &plan)?;
    let opts = DecodeOptions {
        snap: args.snap_db.map(Constellation::from_snr_db).transpose()?,
        max_passes: args.max_passes,
    };
    let result = decode(&bank, &plan, &opts)?;
    eprintln!(
        "recovered {} coefficients in {} passes ({})",
        result.spectrum.len(),
        result.iterations,
        if result.converged { "converged" } else { "not converged" }
    );
    let mut w = create(&args.output)?;
    data(&args.output, write_spectrum(&mut w, &result.spectrum))?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    if let Some(path) = &args.peel_log {
        let mut w = create(path)?;
        data(path, result.write_peel_log(&mut w))?;
        w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Verify(a) => verify::run(a.instances, a.seed),
        Command::Generate(a) => cmd_generate(a),
        Command::Decode(a) => cmd_decode(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Config(m) | Failure::Io(m) | Failure::Verify(m) => m,
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
