//! Entropy-versus-smoothing-parameter curves, their derivative in log
//! parameter, the derivative-minimum selector, and the Scott/AMISE reference
//! selectors.

use crate::distributions::{AnalyticDistribution, Sample};
use crate::histogram::{build_histogram, histogram_entropy};
use crate::kde::{kde_entropy, EntropyMethod, KdeEstimate, Kernel, KernelId, KdePoints};
use crate::numeric::KahanSum;
use crate::{invalid, BoundarySide, Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Which smoothing parameter a grid ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    BinWidth,
    Bandwidth,
}

impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridKind::BinWidth => f.write_str("binwidth"),
            GridKind::Bandwidth => f.write_str("bandwidth"),
        }
    }
}

/// A strictly increasing, log-uniform grid of smoothing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingGrid {
    values: Vec<f64>,
    kind: GridKind,
}

/// Grid points of the default (auto) grids.
pub const DEFAULT_GRID_POINTS: usize = 60;

impl SmoothingGrid {
    /// `len` log-spaced values from `lo` to `hi` inclusive.
    pub fn log_spaced(lo: f64, hi: f64, len: usize, kind: GridKind) -> Result<Self> {
        if !(lo > 0.0) || !(hi > lo) {
            return Err(invalid(format!("need 0 < lo < hi, got lo={lo}, hi={hi}")));
        }
        if len < 8 {
            return Err(invalid(format!("grid needs at least 8 points, got {len}")));
        }
        let ratio = hi / lo;
        let values = (0..len)
            .map(|k| lo * ratio.powf(k as f64 / (len - 1) as f64))
            .collect();
        Ok(Self { values, kind })
    }

    /// Wrap explicit values, checking positivity, length and log-uniformity
    /// (consecutive ratios constant to 1e-12).
    pub fn from_values(values: Vec<f64>, kind: GridKind) -> Result<Self> {
        if values.len() < 8 {
            return Err(invalid(format!(
                "grid needs at least 8 points, got {}",
                values.len()
            )));
        }
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("grid values must be positive"));
        }
        let r0 = values[1] / values[0];
        for w in values.windows(2) {
            let r = w[1] / w[0];
            if !(r > 1.0) {
                return Err(invalid("grid values must be strictly increasing"));
            }
            if (r / r0 - 1.0).abs() > 1e-12 {
                return Err(invalid(format!(
                    "grid is not log-uniform: ratio {r} deviates from {r0}"
                )));
            }
        }
        Ok(Self { values, kind })
    }

    /// The default grid for a sample of size `n` in dimension `dim` whose
    /// largest per-dimension extent is `extent`: 60 log-spaced points ending
    /// at the extent. In 1D it starts at `extent/(4n)`, deep in the
    /// under-smoothed regime; in 3D at `extent/(16·n^{1/3})`, which brackets
    /// the derivative minima with margin at every tested sample size.
    pub fn auto(extent: f64, n: usize, dim: usize, kind: GridKind) -> Result<Self> {
        if !(extent > 0.0) {
            return Err(invalid(format!("data extent must be positive, got {extent}")));
        }
        let lo = if dim == 1 {
            extent / (4.0 * n as f64)
        } else {
            extent / (16.0 * (n as f64).cbrt())
        };
        Self::log_spaced(lo, extent, DEFAULT_GRID_POINTS, kind)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which density estimator a curve is built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Histogram,
    Kde(KernelId),
}

impl Estimator {
    pub fn grid_kind(&self) -> GridKind {
        match self {
            Estimator::Histogram => GridKind::BinWidth,
            Estimator::Kde(_) => GridKind::Bandwidth,
        }
    }

    /// Identifier used in file names: `histogram` or `kde-<kernel>`.
    pub fn file_tag(&self) -> String {
        match self {
            Estimator::Histogram => "histogram".to_string(),
            Estimator::Kde(k) => format!("kde-{k}"),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Histogram => f.write_str("histogram"),
            Estimator::Kde(k) => write!(f, "kde:{k}"),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "histogram" => Ok(Estimator::Histogram),
            "kde" => Ok(Estimator::Kde(KernelId::Epanechnikov)),
            other => {
                if let Some(kernel) = other.strip_prefix("kde:") {
                    Ok(Estimator::Kde(kernel.parse()?))
                } else {
                    Err(invalid(format!(
                        "unknown estimator {other:?}; valid: histogram, kde, kde:<kernel>"
                    )))
                }
            }
        }
    }
}

/// Entropy tabulated over a smoothing grid: replicate mean, replicate
/// standard deviation, and the central-difference derivative of the mean in
/// log parameter.
#[derive(Debug, Clone)]
pub struct EntropyCurve {
    grid: SmoothingGrid,
    mean_entropy: Vec<f64>,
    std_entropy: Vec<f64>,
    replicates: u32,
    derivative: Vec<f64>,
}

impl EntropyCurve {
    /// Aggregate a replicate-by-grid entropy matrix into a curve.
    pub fn from_matrix(grid: SmoothingGrid, matrix: &[Vec<f64>]) -> Result<Self> {
        if matrix.is_empty() {
            return Err(invalid("need at least one replicate"));
        }
        let k = grid.len();
        if matrix.iter().any(|row| row.len() != k) {
            return Err(invalid("entropy matrix rows must match the grid length"));
        }
        let reps = matrix.len();
        let mut mean = Vec::with_capacity(k);
        let mut std = Vec::with_capacity(k);
        for j in 0..k {
            let mut acc = KahanSum::new();
            for row in matrix {
                acc.add(row[j]);
            }
            let m = acc.value() / reps as f64;
            mean.push(m);
            if reps > 1 {
                let mut sq = KahanSum::new();
                for row in matrix {
                    let d = row[j] - m;
                    sq.add(d * d);
                }
                std.push((sq.value() / (reps as f64 - 1.0)).sqrt());
            } else {
                std.push(0.0);
            }
        }
        let derivative = derivative_curve(grid.values(), &mean)?;
        Ok(Self {
            grid,
            mean_entropy: mean,
            std_entropy: std,
            replicates: reps as u32,
            derivative,
        })
    }

    pub fn grid(&self) -> &SmoothingGrid {
        &self.grid
    }

    pub fn mean_entropy(&self) -> &[f64] {
        &self.mean_entropy
    }

    pub fn std_entropy(&self) -> &[f64] {
        &self.std_entropy
    }

    pub fn derivative(&self) -> &[f64] {
        &self.derivative
    }

    pub fn replicates(&self) -> u32 {
        self.replicates
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// CSV serialization: versioned header, one row per grid point, 17
    /// significant digits so reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# schema=entropy-curve-v1 kind={} replicates={}",
            self.grid.kind(),
            self.replicates
        )?;
        writeln!(w, "param,mean_entropy,std_entropy,derivative")?;
        for j in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                crate::numeric::format_f64(self.grid.values[j]),
                crate::numeric::format_f64(self.mean_entropy[j]),
                crate::numeric::format_f64(self.std_entropy[j]),
                crate::numeric::format_f64(self.derivative[j]),
            )?;
        }
        Ok(())
    }

    /// Parse the CSV form; `path` is used in error messages only.
    pub fn read_csv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut kind = GridKind::BinWidth;
        let mut replicates = 1u32;
        let mut params = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut derivative = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Io {
                path: path.to_string(),
                source: e,
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for token in rest.split_whitespace() {
                    if let Some(v) = token.strip_prefix("kind=") {
                        kind = match v {
                            "binwidth" => GridKind::BinWidth,
                            "bandwidth" => GridKind::Bandwidth,
                            other => {
                                return Err(Error::Parse {
                                    path: path.to_string(),
                                    line: lineno,
                                    message: format!("unknown grid kind {other:?}"),
                                })
                            }
                        };
                    } else if let Some(v) = token.strip_prefix("replicates=") {
                        replicates = v.parse().map_err(|_| Error::Parse {
                            path: path.to_string(),
                            line: lineno,
                            message: format!("bad replicate count {v:?}"),
                        })?;
                    }
                }
                continue;
            }
            if !saw_header {
                if line != "param,mean_entropy,std_entropy,derivative" {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line: lineno,
                        message: "expected header param,mean_entropy,std_entropy,derivative".into(),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: lineno,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let mut parsed = [0.0f64; 4];
            for (slot, field) in parsed.iter_mut().zip(&fields) {
                *slot = field.parse().map_err(|_| Error::Parse {
                    path: path.to_string(),
                    line: lineno,
                    message: format!("bad number {field:?}"),
                })?;
            }
            params.push(parsed[0]);
            mean.push(parsed[1]);
            std.push(parsed[2]);
            derivative.push(parsed[3]);
        }
        let grid = SmoothingGrid::from_values(params, kind)?;
        if std.iter().any(|&s| s < 0.0) {
            return Err(invalid("std_entropy must be nonnegative"));
        }
        Ok(Self {
            grid,
            mean_entropy: mean,
            std_entropy: std,
            replicates,
            derivative,
        })
    }
}

/// Per-replicate, per-grid-point plug-in entropies (row = replicate). The
/// (replicate × grid) tasks run in parallel; the result layout is fixed by
/// index, so the output is independent of scheduling.
pub fn entropy_matrix(
    samples: &[Sample],
    grid: &SmoothingGrid,
    estimator: Estimator,
    method: EntropyMethod,
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(invalid("need at least one replicate sample"));
    }
    let dim = samples[0].dim();
    if samples.iter().any(|s| s.dim() != dim) {
        return Err(invalid("replicate samples must share one dimension"));
    }
    if samples
        .iter()
        .any(|s| s.distribution_id() != samples[0].distribution_id())
    {
        return Err(invalid("replicate samples must share one distribution"));
    }

    match estimator {
        Estimator::Histogram => samples
            .par_iter()
            .map(|sample| {
                grid.values()
                    .par_iter()
                    .map(|&width| build_histogram(sample, width).map(|h| histogram_entropy(&h)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect(),
        Estimator::Kde(kernel_id) => {
            let kernel = Kernel::new(kernel_id);
            let prepared: Vec<_> = samples
                .par_iter()
                .map(KdePoints::from_sample)
                .collect::<Result<Vec<_>>>()?;
            prepared
                .par_iter()
                .map(|points| {
                    grid.values()
                        .par_iter()
                        .map(|&h| {
                            let est = KdeEstimate::new(kernel, h, points.clone())?;
                            kde_entropy(&est, method)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect()
        }
    }
}

/// Replicate-averaged entropy curve over a smoothing grid.
pub fn entropy_curve(
    samples: &[Sample],
    grid: &SmoothingGrid,
    estimator: Estimator,
    method: EntropyMethod,
) -> Result<EntropyCurve> {
    let matrix = entropy_matrix(samples, grid, estimator, method)?;
    EntropyCurve::from_matrix(grid.clone(), &matrix)
}

/// Central differences of `mean_entropy` in `ln(param)` (one-sided at the
/// ends). Exact for curves linear in `ln(param)`.
pub fn derivative_curve(params: &[f64], mean_entropy: &[f64]) -> Result<Vec<f64>> {
    let k = params.len();
    if k < 3 {
        return Err(invalid(format!("derivative needs at least 3 grid points, got {k}")));
    }
    if mean_entropy.len() != k {
        return Err(invalid("params and mean_entropy must have equal length"));
    }
    let ln: Vec<f64> = params.iter().map(|p| p.ln()).collect();
    let mut out = Vec::with_capacity(k);
    out.push((mean_entropy[1] - mean_entropy[0]) / (ln[1] - ln[0]));
    for j in 1..k - 1 {
        out.push((mean_entropy[j + 1] - mean_entropy[j - 1]) / (ln[j + 1] - ln[j - 1]));
    }
    out.push((mean_entropy[k - 1] - mean_entropy[k - 2]) / (ln[k - 1] - ln[k - 2]));
    Ok(out)
}

/// The selector output: the smoothing parameter at the derivative minimum
/// and the entropy there.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectorResult {
    pub param_dm: f64,
    pub entropy_dm: f64,
    pub derivative_min: f64,
    pub index: usize,
    /// True when the minimum sits on the edge of a caller-supplied search
    /// window (the grid should be extended).
    pub boundary_flag: bool,
}

/// Find the global minimum of the derivative over the interior of the grid
/// (optionally restricted to `window`, given as inclusive interior indices).
/// Ties break toward the smaller parameter. A minimum on the grid boundary
/// is an error telling the caller to widen the grid on that side.
pub fn find_derivative_minimum(
    curve: &EntropyCurve,
    window: Option<(usize, usize)>,
) -> Result<SelectorResult> {
    let k = curve.len();
    if k < 5 {
        return Err(invalid(format!(
            "derivative minimum needs at least 3 interior points, got {} grid points",
            k
        )));
    }
    let interior = (1, k - 2);
    let (w_lo, w_hi) = match window {
        None => interior,
        Some((a, b)) => {
            if a < interior.0 || b > interior.1 || a >= b {
                return Err(invalid(format!(
                    "window ({a}, {b}) must lie within interior indices ({}, {})",
                    interior.0, interior.1
                )));
            }
            (a, b)
        }
    };
    let deriv = curve.derivative();
    let mut best = w_lo;
    for j in w_lo..=w_hi {
        if deriv[j] < deriv[best] {
            best = j;
        }
    }
    let windowed = window.is_some();
    if !windowed || (w_lo, w_hi) == interior {
        if best == interior.0 {
            return Err(Error::BoundaryMinimum {
                side: BoundarySide::Lower,
                index: best,
                detail: String::new(),
            });
        }
        if best == interior.1 {
            return Err(Error::BoundaryMinimum {
                side: BoundarySide::Upper,
                index: best,
                detail: String::new(),
            });
        }
    }
    Ok(SelectorResult {
        param_dm: curve.grid().values()[best],
        entropy_dm: curve.mean_entropy()[best],
        derivative_min: deriv[best],
        index: best,
        boundary_flag: windowed && (best == w_lo || best == w_hi),
    })
}

/// Scott's reference bin width `[6/R(f')]^{1/3} · N^{-1/3}` (the 3D normal
/// uses its reduced radial profile for the roughness).
pub fn scott_bin_width(dist: &AnalyticDistribution, n: usize) -> f64 {
    (6.0 / dist.roughness_fprime()).cbrt() * (n as f64).powf(-1.0 / 3.0)
}

/// AMISE-optimal bandwidth
/// `[R(K)/(R(f'')·(∫u²K du)²)]^{1/5} · N^{-1/5}`.
pub fn amise_bandwidth(dist: &AnalyticDistribution, kernel: Kernel, n: usize) -> f64 {
    let rk = kernel.roughness();
    let mu2 = kernel.second_moment();
    let rf2 = dist.roughness_fsecond();
    (rk / (rf2 * mu2 * mu2)).powf(0.2) * (n as f64).powf(-0.2)
}

/// Unweighted least-squares slope and intercept of `ln(param)` against
/// `ln(N)`.
pub fn fit_scaling_exponent(ns: &[u64], params: &[f64]) -> Result<(f64, f64)> {
    if ns.len() < 3 || ns.len() != params.len() {
        return Err(invalid(format!(
            "scaling fit needs at least 3 matched points, got {} and {}",
            ns.len(),
            params.len()
        )));
    }
    if params.iter().any(|&p| !(p > 0.0)) || ns.iter().any(|&n| n == 0) {
        return Err(invalid("scaling fit needs positive values"));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = params.iter().map(|&p| p.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
