//! Orchestration of full replicated experiments: replicate generation,
//! entropy curves, derivative-minimum selection, scaling fits, reference
//! comparisons and report/CSV persistence — all as a pure function of a
//! declarative run configuration.

use crate::distributions::{AnalyticDistribution, DistributionId, Sample};
use crate::histogram::{build_histogram, histogram_entropy};
use crate::kde::{kde_entropy, EntropyMethod, KdeEstimate, Kernel, KdePoints};
use crate::numeric::KahanSum;
use crate::selector::{
    amise_bandwidth, entropy_matrix, find_derivative_minimum, fit_scaling_exponent,
    scott_bin_width, EntropyCurve, Estimator, SelectorResult, SmoothingGrid,
};
use crate::{invalid, Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write as _;
use std::path::Path;

/// How the smoothing grid is chosen for each sample size.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Selector defaults derived from the first replicate's data extent.
    Auto,
    /// Log-spaced between fixed bounds.
    Log { lo: f64, hi: f64, points: usize },
    /// Log-spaced between `lo·N^{-1/3}` and `hi·N^{-1/3}` — the bounds ride
    /// the same scaling the derivative minima follow, so one spec brackets
    /// the minimum at every sample size without sweeping the whole extent.
    ScaledLog { lo: f64, hi: f64, points: usize },
    /// Explicit log-uniform values.
    Explicit(Vec<f64>),
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridSpec::Auto => f.write_str("auto"),
            GridSpec::Log { lo, hi, points } => write!(f, "log:{lo}:{hi}:{points}"),
            GridSpec::ScaledLog { lo, hi, points } => write!(f, "scaledlog:{lo}:{hi}:{points}"),
            GridSpec::Explicit(values) => {
                let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(GridSpec::Auto);
        }
        let bounds3 = |rest: &str, what: &str| -> Result<(f64, f64, usize)> {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(invalid(format!("grid spec {s:?} must be {what}:<lo>:<hi>:<points>")));
            }
            let lo: f64 = parts[0]
                .parse()
                .map_err(|_| invalid(format!("bad grid bound {:?}", parts[0])))?;
            let hi: f64 = parts[1]
                .parse()
                .map_err(|_| invalid(format!("bad grid bound {:?}", parts[1])))?;
            let points: usize = parts[2]
                .parse()
                .map_err(|_| invalid(format!("bad grid point count {:?}", parts[2])))?;
            Ok((lo, hi, points))
        };
        if let Some(rest) = s.strip_prefix("log:") {
            let (lo, hi, points) = bounds3(rest, "log")?;
            return Ok(GridSpec::Log { lo, hi, points });
        }
        if let Some(rest) = s.strip_prefix("scaledlog:") {
            let (lo, hi, points) = bounds3(rest, "scaledlog")?;
            return Ok(GridSpec::ScaledLog { lo, hi, points });
        }
        let values: Result<Vec<f64>> = s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad grid value {v:?}")))
            })
            .collect();
        Ok(GridSpec::Explicit(values?))
    }
}

/// Declarative description of a full experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub distribution: DistributionId,
    pub estimator: Estimator,
    pub entropy_method: EntropyMethod,
    pub sample_sizes: Vec<usize>,
    pub replicates: u32,
    pub base_seed: u64,
    pub grid_spec: GridSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(invalid("replicates must be at least 1"));
        }
        if self.sample_sizes.is_empty() {
            return Err(invalid("sample_sizes must be nonempty"));
        }
        if self.sample_sizes.iter().any(|&n| n < 10) {
            return Err(invalid("every sample size must be at least 10"));
        }
        let mut seen = self.sample_sizes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.sample_sizes.len() {
            return Err(invalid("sample sizes must be distinct"));
        }
        if matches!(self.estimator, Estimator::Histogram)
            && matches!(
                self.entropy_method,
                EntropyMethod::Resubstitution | EntropyMethod::ResubstitutionLoo
            )
        {
            return Err(invalid(
                "histogram entropy is closed-form; entropy_method applies to KDE runs only",
            ));
        }
        Ok(())
    }

    /// Parse the flat `key = value` config format. Unknown keys are
    /// rejected. `path` is used in error messages.
    pub fn from_config_str(text: &str, path: &str) -> Result<Self> {
        let mut distribution: Option<DistributionId> = None;
        let mut estimator = Estimator::Histogram;
        let mut entropy_method: Option<EntropyMethod> = None;
        let mut sample_sizes: Option<Vec<usize>> = None;
        let mut replicates: u32 = 50;
        let mut base_seed: u64 = 0;
        let mut grid_spec = GridSpec::Auto;

        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_string(),
                line: lineno,
                message: format!("expected key = value, found {line:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_err = |message: String| Error::Parse {
                path: path.to_string(),
                line: lineno,
                message,
            };
            match key {
                "distribution" => {
                    distribution = Some(value.parse().map_err(|e: Error| parse_err(e.to_string()))?)
                }
                "estimator" => {
                    estimator = value.parse().map_err(|e: Error| parse_err(e.to_string()))?
                }
                "entropy_method" => {
                    entropy_method =
                        Some(value.parse().map_err(|e: Error| parse_err(e.to_string()))?)
                }
                "sample_sizes" => {
                    let sizes: std::result::Result<Vec<usize>, _> = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>())
                        .collect();
                    sample_sizes =
                        Some(sizes.map_err(|_| parse_err(format!("bad sample_sizes {value:?}")))?);
                }
                "replicates" => {
                    replicates = value
                        .parse()
                        .map_err(|_| parse_err(format!("bad replicates {value:?}")))?
                }
                "base_seed" => {
                    base_seed = value
                        .parse()
                        .map_err(|_| parse_err(format!("bad base_seed {value:?}")))?
                }
                "grid_spec" => {
                    grid_spec = value.parse().map_err(|e: Error| parse_err(e.to_string()))?
                }
                other => {
                    return Err(parse_err(format!(
                        "unknown key {other:?}; valid keys: distribution, estimator, entropy_method, sample_sizes, replicates, base_seed, grid_spec"
                    )))
                }
            }
        }
        let distribution = distribution
            .ok_or_else(|| invalid(format!("{path}: missing required key \"distribution\"")))?;
        let sample_sizes = sample_sizes
            .ok_or_else(|| invalid(format!("{path}: missing required key \"sample_sizes\"")))?;
        let entropy_method =
            entropy_method.unwrap_or_else(|| default_entropy_method(distribution, estimator));
        let config = RunConfig {
            distribution,
            estimator,
            entropy_method,
            sample_sizes,
            replicates,
            base_seed,
            grid_spec,
        };
        config.validate()?;
        Ok(config)
    }

    fn grid_for(&self, first: &Sample, n: usize) -> Result<SmoothingGrid> {
        let kind = self.estimator.grid_kind();
        match &self.grid_spec {
            GridSpec::Auto => SmoothingGrid::auto(first.extent(), n, first.dim(), kind),
            GridSpec::Log { lo, hi, points } => SmoothingGrid::log_spaced(*lo, *hi, *points, kind),
            GridSpec::ScaledLog { lo, hi, points } => {
                let scale = (n as f64).powf(-1.0 / 3.0);
                SmoothingGrid::log_spaced(lo * scale, hi * scale, *points, kind)
            }
            GridSpec::Explicit(values) => SmoothingGrid::from_values(values.clone(), kind),
        }
    }
}

/// Grid specification used by the reproduction profiles: bounds that ride
/// the `N^{-1/3}` scaling of the derivative minima, centered per
/// distribution and estimator with a factor-20 margin on both sides. The
/// plain auto grid remains the default for one-off curves; these keep
/// multi-size runs affordable by not sweeping the full data extent at
/// every `N`.
pub fn desk_grid_spec(distribution: DistributionId, estimator: Estimator) -> GridSpec {
    let center = match (estimator, distribution) {
        (Estimator::Histogram, DistributionId::Normal1D) => 2.2,
        (Estimator::Histogram, DistributionId::PowerLaw1D) => 0.5,
        (Estimator::Histogram, DistributionId::Normal3D) => 1.4,
        (Estimator::Kde(_), DistributionId::Normal1D) => 1.85,
        (Estimator::Kde(_), DistributionId::PowerLaw1D) => 0.38,
        (Estimator::Kde(_), DistributionId::Normal3D) => 1.55,
    };
    GridSpec::ScaledLog {
        lo: center / 20.0,
        hi: center * 20.0,
        points: crate::selector::DEFAULT_GRID_POINTS,
    }
}

/// The entropy method experiments default to: quadrature in 1D; in 3D the
/// quadrature node budget is unaffordable at experimental bandwidths, so
/// resubstitution (the documented fallback) is used.
pub fn default_entropy_method(distribution: DistributionId, estimator: Estimator) -> EntropyMethod {
    match (estimator, AnalyticDistribution::new(distribution).dim()) {
        (Estimator::Histogram, _) => EntropyMethod::Quadrature, // unused by histograms
        (Estimator::Kde(_), 1) => EntropyMethod::Quadrature,
        (Estimator::Kde(_), _) => EntropyMethod::Resubstitution,
    }
}

/// The `replicates` samples for one sample size: replicate `r` uses seed
/// `base_seed + r`.
pub fn replicate_samples(config: &RunConfig, n: usize) -> Result<Vec<Sample>> {
    let dist = AnalyticDistribution::new(config.distribution);
    (0..config.replicates)
        .into_par_iter()
        .map(|r| dist.sample(n, config.base_seed.wrapping_add(r as u64)))
        .collect()
}

/// Curve plus selection for a single sample size (no I/O).
#[derive(Debug, Clone)]
pub struct SizeRun {
    pub n: usize,
    pub curve: EntropyCurve,
    pub selection: SelectorResult,
}

impl SizeRun {
    /// Standard deviation across replicates of the entropy at the
    /// mean-curve's selected parameter.
    pub fn sigma_dm(&self) -> f64 {
        self.curve.std_entropy()[self.selection.index]
    }
}

/// Run one sample size of the experiment: draw replicates, tabulate the
/// curve, select the derivative minimum.
pub fn run_single_size(config: &RunConfig, n: usize) -> Result<SizeRun> {
    config.validate()?;
    let samples = replicate_samples(config, n)?;
    let grid = config.grid_for(&samples[0], n)?;
    let matrix = entropy_matrix(&samples, &grid, config.estimator, config.entropy_method)?;
    let curve = EntropyCurve::from_matrix(grid, &matrix)?;
    let selection = find_derivative_minimum(&curve, None).map_err(|e| attach_n(e, n))?;
    Ok(SizeRun { n, curve, selection })
}

fn attach_n(e: Error, n: usize) -> Error {
    match e {
        Error::BoundaryMinimum { side, index, .. } => Error::BoundaryMinimum {
            side,
            index,
            detail: format!(" at N={n}"),
        },
        other => other,
    }
}

/// Replicate mean and standard deviation of the entropy at one smoothing
/// parameter (used to evaluate reference selectors on the same samples).
pub fn entropy_at(
    config: &RunConfig,
    samples: &[Sample],
    param: f64,
) -> Result<(f64, f64)> {
    let per_rep: Vec<f64> = match config.estimator {
        Estimator::Histogram => samples
            .par_iter()
            .map(|s| build_histogram(s, param).map(|h| histogram_entropy(&h)))
            .collect::<Result<Vec<f64>>>()?,
        Estimator::Kde(kernel_id) => samples
            .par_iter()
            .map(|s| {
                let points = KdePoints::from_sample(s)?;
                let est = KdeEstimate::new(Kernel::new(kernel_id), param, points)?;
                kde_entropy(&est, config.entropy_method)
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    let mut acc = KahanSum::new();
    for &v in &per_rep {
        acc.add(v);
    }
    let mean = acc.value() / per_rep.len() as f64;
    let std = if per_rep.len() > 1 {
        let mut sq = KahanSum::new();
        for &v in &per_rep {
            sq.add((v - mean) * (v - mean));
        }
        (sq.value() / (per_rep.len() as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std))
}

/// One row of a run report.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub n: u64,
    pub param_dm: f64,
    pub entropy_dm: f64,
    pub sigma_dm: f64,
    pub derivative_min: f64,
    pub exact_entropy: f64,
    pub curve_csv: String,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
}

/// Entropy at the selected parameter versus at the classical reference
/// selector (Scott bin width for histograms, AMISE bandwidth for KDE),
/// evaluated on the same replicate set.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub n: u64,
    pub param_dm: f64,
    pub entropy_dm: f64,
    pub reference_param: f64,
    pub reference_entropy: f64,
    pub exact_entropy: f64,
    pub abs_err_dm: f64,
    pub abs_err_reference: f64,
}

/// The assembled experiment report; a pure function of the configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub distribution: String,
    pub estimator: String,
    pub entropy_method: String,
    pub replicates: u32,
    pub base_seed: u64,
    pub grid_spec: String,
    pub rows: Vec<RunRow>,
    /// Least-squares fit of `ln(param_dm)` against `ln(N)` (present with
    /// three or more sample sizes).
    pub scaling: Option<ScalingFit>,
    pub comparison: Vec<ComparisonRow>,
}

/// Run the full experiment: every sample size, selection, scaling fit and
/// reference comparison; persists one curve CSV per sample size under
/// `out_dir` (named `{distribution}_{estimator}_{N}.csv`).
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let dist = AnalyticDistribution::new(config.distribution);

    let mut rows = Vec::with_capacity(config.sample_sizes.len());
    let mut comparison = Vec::with_capacity(config.sample_sizes.len());
    for &n in &config.sample_sizes {
        let run = run_single_size(config, n)?;
        let file_name = format!(
            "{}_{}_{}.csv",
            config.distribution,
            config.estimator.file_tag(),
            n
        );
        let path = out_dir.join(&file_name);
        let mut buf = Vec::new();
        run.curve.write_csv(&mut buf).expect("write to Vec cannot fail");
        std::fs::write(&path, &buf).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;

        rows.push(RunRow {
            n: n as u64,
            param_dm: run.selection.param_dm,
            entropy_dm: run.selection.entropy_dm,
            sigma_dm: run.sigma_dm(),
            derivative_min: run.selection.derivative_min,
            exact_entropy: dist.exact_entropy(),
            curve_csv: file_name,
        });

        let reference_param = match config.estimator {
            Estimator::Histogram => scott_bin_width(&dist, n),
            Estimator::Kde(kernel_id) => amise_bandwidth(&dist, Kernel::new(kernel_id), n),
        };
        let samples = replicate_samples(config, n)?;
        let (reference_entropy, _) = entropy_at(config, &samples, reference_param)?;
        comparison.push(ComparisonRow {
            n: n as u64,
            param_dm: run.selection.param_dm,
            entropy_dm: run.selection.entropy_dm,
            reference_param,
            reference_entropy,
            exact_entropy: dist.exact_entropy(),
            abs_err_dm: (run.selection.entropy_dm - dist.exact_entropy()).abs(),
            abs_err_reference: (reference_entropy - dist.exact_entropy()).abs(),
        });
    }

    let scaling = if rows.len() >= 3 {
        let ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
        let params: Vec<f64> = rows.iter().map(|r| r.param_dm).collect();
        let (exponent, intercept) = fit_scaling_exponent(&ns, &params)?;
        Some(ScalingFit { exponent, intercept })
    } else {
        None
    };

    Ok(RunReport {
        distribution: config.distribution.to_string(),
        estimator: config.estimator.to_string(),
        entropy_method: config.entropy_method.to_string(),
        replicates: config.replicates,
        base_seed: config.base_seed,
        grid_spec: config.grid_spec.to_string(),
        rows,
        scaling,
        comparison,
    })
}

/// The selector-versus-reference comparison on its own (KDE and histogram
/// runs both supported; the reference is AMISE or Scott respectively).
pub fn compare_selectors(config: &RunConfig) -> Result<Vec<ComparisonRow>> {
    config.validate()?;
    let dist = AnalyticDistribution::new(config.distribution);
    let mut out = Vec::with_capacity(config.sample_sizes.len());
    for &n in &config.sample_sizes {
        let run = run_single_size(config, n)?;
        let reference_param = match config.estimator {
            Estimator::Histogram => scott_bin_width(&dist, n),
            Estimator::Kde(kernel_id) => amise_bandwidth(&dist, Kernel::new(kernel_id), n),
        };
        let samples = replicate_samples(config, n)?;
        let (reference_entropy, _) = entropy_at(config, &samples, reference_param)?;
        out.push(ComparisonRow {
            n: n as u64,
            param_dm: run.selection.param_dm,
            entropy_dm: run.selection.entropy_dm,
            reference_param,
            reference_entropy,
            exact_entropy: dist.exact_entropy(),
            abs_err_dm: (run.selection.entropy_dm - dist.exact_entropy()).abs(),
            abs_err_reference: (reference_entropy - dist.exact_entropy()).abs(),
        });
    }
    Ok(out)
}

/// Serialize a report as pretty JSON (stable field order, shortest
/// round-trip float form — byte-identical across reruns).
pub fn report_to_json(report: &RunReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    out.push('\n');
    out
}

/// Write the JSON report into `out_dir/report.json`.
pub fn write_report(report: &RunReport, out_dir: &Path) -> Result<std::path::PathBuf> {
    let path = out_dir.join("report.json");
    let mut file = std::fs::File::create(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(report_to_json(report).as_bytes())
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    Ok(path)
}
