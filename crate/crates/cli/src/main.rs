//! `covertime`: run one experiment, echo its resolved config, and write the
//! records, summary and manifest under `--out`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use covertime::experiments::{persist, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, RateConvention};
use covertime::lattice::{discretize_domain, DomainShape};

/// Largest `n` that runs without `--allow-large-n`.
const LARGE_N: f64 = 5.5;

#[derive(Parser, Debug)]
#[command(name = "covertime", version, about = "Cover-time, free-field and local-time experiments on lattice domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact Green function, gambler's ruin and unvisited-probability checks
    Green(LatticeArgs),
    /// Free-field samples: covariance, decomposition, level sets
    GffSample(LatticeArgs),
    /// Field maximum and extremal process
    Extremes {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Level for the level-set count (default: the centering)
        #[arg(long)]
        u: Option<f64>,
    },
    /// Cover-time fluctuations and last-visited vertex
    Cover {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Also fit the free-field mixture overlay
        #[arg(long)]
        overlay: bool,
    },
    /// Unvisited set at the first-phase time
    PhaseA {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Boundary time (default: the first-phase time)
        #[arg(long)]
        t: Option<f64>,
    },
    /// Second-phase race on a planted set
    PhaseBRace {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Boundary time of the second phase
        #[arg(long)]
        t: Option<f64>,
    },
    /// Local-time isomorphism checks at the default probes
    RayKnight {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Boundary time (default 1)
        #[arg(long)]
        t: Option<f64>,
    },
    /// One-dimensional downcrossing and local-time laws
    OnedimLaws(CommonArgs),
    /// Ballot-type diagnostic on the linear walk
    Ballot(CommonArgs),
    /// Two-stage excursion race, formula against simulation
    Race {
        #[command(flatten)]
        common: CommonArgs,
        /// Race time (default 40)
        #[arg(long)]
        t: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct LatticeArgs {
    /// square, disc, annulus:R (inner radius R in (0,1)) or polygon:FILE
    #[arg(long, default_value = "square", value_parser = parse_domain)]
    domain: DomainShape,
    /// Log-scale size; N = floor(e^n). Comma-separated for a grid
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_positive)]
    n: Vec<f64>,
    /// Edge rate convention: 1 or retuned (1/(2 pi))
    #[arg(long, default_value = "1", value_parser = parse_rate)]
    rate: RateConvention,
    /// Permit n above 5.5
    #[arg(long)]
    allow_large_n: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Replicas per grid point
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    replicas: u64,
    /// Master seed; fixes every random stream
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing); without it the summary goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary format: json or csv
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: OutputFormat,
}

fn parse_rate(s: &str) -> Result<RateConvention, String> {
    RateConvention::parse(s).ok_or_else(|| format!("expected 1 or retuned, got {s:?}"))
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    OutputFormat::parse(s).ok_or_else(|| format!("expected json or csv, got {s:?}"))
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_domain(s: &str) -> Result<DomainShape, String> {
    let shape = match s.split_once(':') {
        None if s == "square" => DomainShape::UnitSquare,
        None if s == "disc" => DomainShape::UnitDisc,
        Some(("annulus", r)) => DomainShape::Annulus {
            inner_radius: r.parse().map_err(|_| format!("annulus radius {r:?} is not a number"))?,
        },
        Some(("polygon", file)) => DomainShape::Polygon { vertices: read_polygon(Path::new(file))? },
        _ => return Err(format!("expected square, disc, annulus:R or polygon:FILE, got {s:?}")),
    };
    shape.validate().map_err(|e| e.to_string())?;
    Ok(shape)
}

/// Polygon vertices as a JSON array of `[x, y]` pairs, or one `x y` pair per
/// line with `#` comments.
fn read_polygon(path: &Path) -> Result<Vec<[f64; 2]>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Ok(v) = serde_json::from_str::<Vec<[f64; 2]>>(&text) {
        return Ok(v);
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let xs: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| format!("{}:{}: expected two numbers", path.display(), i + 1))?;
        match xs[..] {
            [x, y] => out.push([x, y]),
            _ => return Err(format!("{}:{}: expected two numbers", path.display(), i + 1)),
        }
    }
    Ok(out)
}

/// A failure before any experiment runs, reported with exit code 2.
struct Usage(String);

impl Command {
    fn into_config(self) -> Result<(ExperimentConfig, bool), Usage> {
        let (kind, lattice, common, t, u, overlay) = match self {
            Command::Green(l) => (ExperimentKind::Green, Some(l), None, None, None, false),
            Command::GffSample(l) => (ExperimentKind::GffSample, Some(l), None, None, None, false),
            Command::Extremes { lattice, u } => (ExperimentKind::Extremes, Some(lattice), None, None, u, false),
            Command::Cover { lattice, overlay } => (ExperimentKind::Cover, Some(lattice), None, None, None, overlay),
            Command::PhaseA { lattice, t } => (ExperimentKind::PhaseA, Some(lattice), None, t, None, false),
            Command::PhaseBRace { lattice, t } => (ExperimentKind::PhaseBRace, Some(lattice), None, t, None, false),
            Command::RayKnight { lattice, t } => (ExperimentKind::RayKnight, Some(lattice), None, t, None, false),
            Command::OnedimLaws(c) => (ExperimentKind::OnedimLaws, None, Some(c), None, None, false),
            Command::Ballot(c) => (ExperimentKind::Ballot, None, Some(c), None, None, false),
            Command::Race { common, t } => (ExperimentKind::Race, None, Some(common), t, None, false),
        };
        if let Some(t) = t {
            if !(t.is_finite() && t > 0.0) {
                return Err(Usage(format!("--t must be positive, got {t}; pass e.g. --t 1")));
            }
        }
        let (domain, n, rate, allow, common) = match (lattice, common) {
            (Some(l), _) => (l.domain, l.n, l.rate, l.allow_large_n, l.common),
            (None, Some(c)) => (DomainShape::UnitSquare, Vec::new(), RateConvention::One, false, c),
            (None, None) => unreachable!(),
        };
        if common.format == OutputFormat::Csv && common.out.is_none() {
            return Err(Usage("--format csv writes a file; add --out DIR".into()));
        }
        let mut cfg = ExperimentConfig::new(kind, domain, n, rate, common.replicas, common.seed);
        cfg.t = t;
        cfg.u = u;
        cfg.overlay = overlay;
        cfg.out = common.out;
        cfg.format = common.format;
        Ok((cfg, allow))
    }
}

/// Rough wall-clock seconds on one core, from the interior size.
fn estimate_seconds(cfg: &ExperimentConfig) -> f64 {
    cfg.n
        .iter()
        .map(|&n| {
            let v = discretize_domain(&cfg.domain, n).map(|d| d.len()).unwrap_or(0) as f64;
            let lv = v.max(2.0).ln();
            let per_replica = match cfg.experiment {
                ExperimentKind::Cover => COVER_SECONDS * v * lv * lv,
                ExperimentKind::PhaseA | ExperimentKind::PhaseBRace => 0.5 * COVER_SECONDS * v * lv * lv,
                ExperimentKind::RayKnight => COVER_SECONDS * v * lv,
                _ => COVER_SECONDS * v * v.sqrt(),
            };
            per_replica * cfg.replicas as f64
        })
        .sum()
}

/// Seconds per unit of `|D| (ln |D|)^2` for one cover replica.
const COVER_SECONDS: f64 = 6.0e-9;

fn human(secs: f64) -> String {
    if secs < 120.0 {
        format!("{secs:.0} s")
    } else if secs < 7200.0 {
        format!("{:.0} min", secs / 60.0)
    } else {
        format!("{:.1} h", secs / 3600.0)
    }
}

fn configure_threads() -> Result<(), Usage> {
    let Ok(v) = std::env::var("COVERTIME_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(Usage(format!("COVERTIME_THREADS must be a positive integer, got {v:?}; unset it to use all cores"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Usage(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let prepared = configure_threads().and_then(|()| cli.command.into_config());
    let (cfg, allow_large) = match prepared {
        Ok(p) => p,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    eprintln!("config {}", serde_json::to_string(&cfg).expect("config serializes"));
    eprintln!("config_hash {}", cfg.hash());
    if let Some(big) = cfg.n.iter().copied().find(|&n| n > LARGE_N) {
        let est = human(estimate_seconds(&cfg));
        if !allow_large {
            eprintln!("error: n = {big} is above {LARGE_N} (estimated runtime ~{est}); pass --allow-large-n to run it");
            return ExitCode::from(2);
        }
        eprintln!("estimated runtime ~{est}");
    }

    let start = Instant::now();
    let result = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    eprintln!("finished {} in {:.1} s", cfg.experiment.name(), start.elapsed().as_secs_f64());
    match &cfg.out {
        Some(dir) => match persist(&result, dir, cfg.format) {
            Ok(m) => {
                println!("wrote {} ({} records, sha256 {})", dir.display(), m.record_count, m.records_sha256);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        None => {
            println!("{}", serde_json::to_string_pretty(&result.summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
    }
}
