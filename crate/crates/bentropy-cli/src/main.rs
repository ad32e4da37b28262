//! Command-line front end: sample generation, entropy curves, smoothing
//! selection and full experiment reproduction. Every subcommand is
//! deterministic given its flags; all randomness flows from explicit seeds.

mod reference;
mod report;

use bentropy::distributions::{AnalyticDistribution, DistributionId, Sample};
use bentropy::experiment::{
    compare_selectors, default_entropy_method, desk_grid_spec, run_experiment, write_report,
    GridSpec, RunConfig,
};
use bentropy::kde::{EntropyMethod, KernelId};
use bentropy::selector::{entropy_curve, find_derivative_minimum, EntropyCurve, Estimator};
use bentropy::numeric::format_f64;
use clap::{Args, Parser, Subcommand};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exit codes: 0 ok, 1 usage, 2 boundary minimum, 3 I/O or data.
const EXIT_USAGE: u8 = 1;
const EXIT_BOUNDARY: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bentropy",
    version,
    about = "Differential entropy of samples via density estimation, with a derivative-minimum smoothing selector"
)]
struct Cli {
    /// Base seed for generated samples (replicate r uses seed + r).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for multi-file outputs (reports, curve CSVs).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded sample and write it as plain text.
    Sample {
        /// Distribution id: normal1d, powerlaw1d or normal3d.
        distribution: String,

        /// Number of rows to draw.
        #[arg(long)]
        n: usize,

        /// Output path ("-" for standard output).
        #[arg(long, default_value = "-")]
        out: String,
    },

    /// Tabulate entropy over a smoothing-parameter grid and write the CSV.
    Curve {
        #[command(flatten)]
        source: CurveSource,

        /// Output path for the curve CSV ("-" for standard output).
        #[arg(long, default_value = "-")]
        out: String,
    },

    /// Pick the derivative-minimum smoothing parameter; JSON on stdout.
    Select {
        /// Read an existing curve CSV instead of computing one.
        #[arg(long, conflicts_with_all = ["dist", "sample"])]
        curve: Option<PathBuf>,

        #[command(flatten)]
        source: CurveSource,
    },

    /// Re-run a published experiment profile at desk scale.
    Reproduce {
        /// Profile: table1, table2, fig4 or fig5.
        profile: String,

        /// Largest sample size to run (e.g. 1e5; profiles default to 1e6).
        #[arg(long, default_value = "1e6")]
        max_n: String,

        /// Replicates per sample size (20 is the CI profile, 50 the
        /// published one).
        #[arg(long, default_value_t = 20)]
        replicates: u32,
    },
}

#[derive(Args)]
struct CurveSource {
    /// Distribution id to sample from.
    #[arg(long)]
    dist: Option<String>,

    /// Sample size per replicate.
    #[arg(long)]
    n: Option<usize>,

    /// Number of replicates.
    #[arg(long, default_value_t = 1)]
    replicates: u32,

    /// Read one replicate from a sample file instead of generating.
    #[arg(long, conflicts_with_all = ["dist", "n"])]
    sample: Option<PathBuf>,

    /// Density estimator: histogram or kde.
    #[arg(long, default_value = "histogram")]
    estimator: String,

    /// Kernel for the kde estimator.
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,

    /// Entropy evaluation for kde: quadrature, resubstitution or
    /// resubstitution-loo (default depends on dimension).
    #[arg(long)]
    entropy_method: Option<String>,

    /// Grid: auto, log:<lo>:<hi>:<points>, or comma-separated values.
    #[arg(long, default_value = "auto")]
    grid: String,
}

enum CliError {
    Usage(String),
    Boundary(String),
    Io(String),
}

impl From<bentropy::Error> for CliError {
    fn from(e: bentropy::Error) -> Self {
        match e {
            bentropy::Error::BoundaryMinimum { .. } => CliError::Boundary(e.to_string()),
            bentropy::Error::Io { .. } | bentropy::Error::Parse { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("I/O error on {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(threads) = cli.threads {
        // Ignore failure: the pool may already be initialized in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Boundary(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_BOUNDARY)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sample { distribution, n, out } => cmd_sample(&distribution, n, cli.seed, &out),
        Command::Curve { source, out } => {
            let (curve, _) = build_curve(&source, cli.seed)?;
            // A boundary minimum is a diagnostic here; the curve is still
            // written and the exit stays 0.
            if let Err(e) = find_derivative_minimum(&curve, None) {
                if matches!(e, bentropy::Error::BoundaryMinimum { .. }) {
                    eprintln!("warning: {e}");
                }
            }
            write_text(&out, |w| curve.write_csv(w))
        }
        Command::Select { curve, source } => {
            let curve = match curve {
                Some(path) => read_curve(&path)?,
                None => build_curve(&source, cli.seed)?.0,
            };
            let result = find_derivative_minimum(&curve, None)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).expect("selector result serializes")
            );
            Ok(())
        }
        Command::Reproduce {
            profile,
            max_n,
            replicates,
        } => cmd_reproduce(&profile, &max_n, replicates, cli.seed, &cli.out_dir),
    }
}

fn cmd_sample(distribution: &str, n: usize, seed: u64, out: &str) -> Result<(), CliError> {
    let id: DistributionId = distribution.parse()?;
    let dist = AnalyticDistribution::new(id);
    let sample = dist.sample(n, seed)?;
    write_text(out, |w| write_sample(w, &sample))
}

fn write_sample<W: Write>(mut w: W, sample: &Sample) -> std::io::Result<()> {
    writeln!(
        w,
        "# dist={} n={} seed={} dim={}",
        sample.distribution_id(),
        sample.n(),
        sample.seed(),
        sample.dim()
    )?;
    for row in sample.rows() {
        let cols: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
        writeln!(w, "{}", cols.join(" "))?;
    }
    Ok(())
}

/// Parse the sample file format written by `bentropy sample`.
fn read_sample(path: &Path) -> Result<Sample, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let display = path.display().to_string();
    let mut dist: Option<DistributionId> = None;
    let mut seed = 0u64;
    let mut dim = 1usize;
    let mut data: Vec<f64> = Vec::new();
    let parse_error = |line: usize, message: String| {
        CliError::Io(format!("parse error in {display} at line {line}: {message}"))
    };
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("dist=") {
                    dist = Some(
                        v.parse()
                            .map_err(|e: bentropy::Error| parse_error(lineno, e.to_string()))?,
                    );
                } else if let Some(v) = token.strip_prefix("seed=") {
                    seed = v
                        .parse()
                        .map_err(|_| parse_error(lineno, format!("bad seed {v:?}")))?;
                } else if let Some(v) = token.strip_prefix("dim=") {
                    dim = v
                        .parse()
                        .map_err(|_| parse_error(lineno, format!("bad dim {v:?}")))?;
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim {
            return Err(parse_error(
                lineno,
                format!("expected {dim} columns, found {}", fields.len()),
            ));
        }
        for field in fields {
            data.push(
                field
                    .parse()
                    .map_err(|_| parse_error(lineno, format!("bad number {field:?}")))?,
            );
        }
    }
    let dist = dist.ok_or_else(|| {
        CliError::Io(format!("parse error in {display} at line 1: missing '# dist=...' header"))
    })?;
    Sample::from_rows(data, dim, dist, seed).map_err(CliError::from)
}

fn build_curve(source: &CurveSource, seed: u64) -> Result<(EntropyCurve, Estimator), CliError> {
    let estimator: Estimator = match source.estimator.as_str() {
        "kde" => Estimator::Kde(source.kernel.parse::<KernelId>()?),
        other => other.parse()?,
    };

    let samples: Vec<Sample> = if let Some(path) = &source.sample {
        vec![read_sample(path)?]
    } else {
        let id: DistributionId = source
            .dist
            .as_deref()
            .ok_or_else(|| CliError::Usage("either --sample or --dist is required".into()))?
            .parse()?;
        let n = source
            .n
            .ok_or_else(|| CliError::Usage("--n is required with --dist".into()))?;
        let dist = AnalyticDistribution::new(id);
        (0..source.replicates.max(1))
            .map(|r| dist.sample(n, seed.wrapping_add(r as u64)))
            .collect::<bentropy::Result<Vec<_>>>()?
    };

    let method = match &source.entropy_method {
        Some(m) => m.parse::<EntropyMethod>()?,
        None => {
            let dist_id = samples[0].distribution_id();
            default_entropy_method(dist_id, estimator)
        }
    };

    let grid_spec: GridSpec = source.grid.parse()?;
    let n0 = samples[0].n();
    let grid = match grid_spec {
        GridSpec::Auto => bentropy::selector::SmoothingGrid::auto(
            samples[0].extent(),
            n0,
            samples[0].dim(),
            estimator.grid_kind(),
        )?,
        GridSpec::Log { lo, hi, points } => {
            bentropy::selector::SmoothingGrid::log_spaced(lo, hi, points, estimator.grid_kind())?
        }
        GridSpec::Explicit(values) => {
            bentropy::selector::SmoothingGrid::from_values(values, estimator.grid_kind())?
        }
    };
    let curve = entropy_curve(&samples, &grid, estimator, method)?;
    Ok((curve, estimator))
}

fn read_curve(path: &Path) -> Result<EntropyCurve, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    EntropyCurve::read_csv(BufReader::new(file), &path.display().to_string())
        .map_err(CliError::from)
}

fn write_text<F>(out: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    if out == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        body(&mut lock).map_err(|e| CliError::Io(format!("I/O error on stdout: {e}")))
    } else {
        let path = Path::new(out);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        body(&mut file).map_err(|e| io_err(path, e))
    }
}

fn parse_max_n(text: &str) -> Result<usize, CliError> {
    let value: f64 = text
        .parse()
        .map_err(|_| CliError::Usage(format!("bad --max-n value {text:?}")))?;
    if !(value >= 10.0) || value > 1e9 {
        return Err(CliError::Usage(format!("--max-n {text:?} out of range (10..=1e9)")));
    }
    Ok(value.round() as usize)
}

fn profile_sizes(max_n: usize) -> Vec<usize> {
    [1_000usize, 10_000, 100_000, 1_000_000, 10_000_000, 100_000_000]
        .into_iter()
        .filter(|&n| n <= max_n)
        .collect()
}

fn cmd_reproduce(
    profile: &str,
    max_n: &str,
    replicates: u32,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let max_n = parse_max_n(max_n)?;
    let sizes = profile_sizes(max_n);
    if sizes.is_empty() {
        return Err(CliError::Usage(format!(
            "--max-n {max_n} leaves no profile sample sizes (smallest is 1000)"
        )));
    }
    let dir = out_dir.join(profile);

    let config_for = |dist: DistributionId, estimator: Estimator| RunConfig {
        distribution: dist,
        estimator,
        entropy_method: default_entropy_method(dist, estimator),
        sample_sizes: sizes.clone(),
        replicates,
        base_seed: seed,
        grid_spec: desk_grid_spec(dist, estimator),
    };

    match profile {
        "table1" | "table2" => {
            let estimator = if profile == "table1" {
                Estimator::Histogram
            } else {
                Estimator::Kde(KernelId::Epanechnikov)
            };
            let mut reports = Vec::new();
            for dist in DistributionId::ALL {
                let config = config_for(dist, estimator);
                let sub = dir.join(dist.to_string());
                let report = run_experiment(&config, &sub)?;
                write_report(&report, &sub)?;
                reports.push(report);
            }
            let summary = report::table_summary(profile, &reports);
            write_text(&dir.join("summary.md").display().to_string(), |w| {
                w.write_all(summary.as_bytes())
            })?;
            println!("{} written to {}", profile, dir.display());
            Ok(())
        }
        "fig4" | "fig5" => {
            let mut sections = Vec::new();
            for dist in DistributionId::ALL {
                let config = config_for(dist, Estimator::Kde(KernelId::Epanechnikov));
                let rows = compare_selectors(&config)?;
                let (exponent, intercept) = if rows.len() >= 3 {
                    let ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
                    let hs: Vec<f64> = rows.iter().map(|r| r.param_dm).collect();
                    bentropy::selector::fit_scaling_exponent(&ns, &hs)?
                } else {
                    (f64::NAN, f64::NAN)
                };
                // CSV per distribution.
                let csv_path = dir.join(format!("{dist}.csv"));
                write_text(&csv_path.display().to_string(), |w| {
                    if profile == "fig4" {
                        writeln!(w, "# schema=bandwidth-vs-n-v1 distribution={dist}")?;
                        writeln!(w, "n,h_dm,h_amise")?;
                        for r in &rows {
                            writeln!(
                                w,
                                "{},{},{}",
                                r.n,
                                format_f64(r.param_dm),
                                format_f64(r.reference_param)
                            )?;
                        }
                    } else {
                        writeln!(w, "# schema=entropy-vs-n-v1 distribution={dist}")?;
                        writeln!(w, "n,entropy_dm,entropy_amise,exact_entropy")?;
                        for r in &rows {
                            writeln!(
                                w,
                                "{},{},{},{}",
                                r.n,
                                format_f64(r.entropy_dm),
                                format_f64(r.reference_entropy),
                                format_f64(r.exact_entropy)
                            )?;
                        }
                    }
                    Ok(())
                })?;
                sections.push((dist, rows, exponent, intercept));
            }
            let summary = report::figure_summary(profile, &sections);
            write_text(&dir.join("summary.md").display().to_string(), |w| {
                w.write_all(summary.as_bytes())
            })?;
            println!("{} written to {}", profile, dir.display());
            Ok(())
        }
        other => Err(CliError::Usage(format!(
            "unknown profile {other:?}; valid profiles: table1, table2, fig4, fig5"
        ))),
    }
}
