//! Kernel density estimation, plug-in entropy of the estimate, and analytic
//! derivatives of the entropy with respect to the bandwidth.
//!
//! Density evaluation with compact kernels goes through neighbor search
//! (a sorted array in 1D, a cell grid in 3D), so the cost per evaluation is
//! proportional to the number of points within one support radius, not to
//! the sample size.

pub mod kernel;

pub use kernel::{Kernel, KernelId};

use crate::distributions::Sample;
use crate::numeric::KahanSum;
use crate::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// 1D entropy quadrature: step ≤ h / this.
const QUAD_STEP_DIVISOR: f64 = 20.0;
/// 1D entropy quadrature: at least this many nodes.
const QUAD_MIN_NODES_1D: usize = 4096;
/// 3D entropy quadrature: step ≤ h / this.
const QUAD_STEP_DIVISOR_3D: f64 = 3.0;
/// Hard cap on total quadrature nodes; exceeding it is a resource error.
pub const QUAD_NODE_BUDGET: u64 = 1 << 27;

/// Sample points prepared for repeated KDE evaluation: the raw rows plus the
/// bandwidth-independent neighbor-search structures. Build once per sample,
/// share across every bandwidth on a grid.
#[derive(Debug)]
pub struct KdePoints {
    dim: usize,
    rows: Vec<f64>,
    /// 1D: values sorted ascending.
    sorted: Vec<f64>,
    /// 3D: fixed-size cell grid.
    grid: Option<CellGrid>,
}

impl KdePoints {
    pub fn from_sample(sample: &Sample) -> Result<Arc<Self>> {
        let dim = sample.dim();
        if dim != 1 && dim != 3 {
            return Err(invalid(format!("KDE supports d = 1 or d = 3, got {dim}")));
        }
        let rows = sample.data().to_vec();
        let (sorted, grid) = if dim == 1 {
            let mut s = rows.clone();
            s.sort_unstable_by(f64::total_cmp);
            (s, None)
        } else {
            (Vec::new(), Some(CellGrid::build(&rows)))
        };
        Ok(Arc::new(Self {
            dim,
            rows,
            sorted,
            grid,
        }))
    }

    pub fn n(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }

    /// 1D values in ascending order.
    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    fn min_max(&self) -> (Vec<f64>, Vec<f64>) {
        let mut min = vec![f64::INFINITY; self.dim];
        let mut max = vec![f64::NEG_INFINITY; self.dim];
        for row in self.rows() {
            for j in 0..self.dim {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        (min, max)
    }
}

/// Bandwidth-independent 3D cell grid (CSR over occupied cells). The cell
/// size adapts to the point count so queries stay cheap both for small and
/// large search radii.
#[derive(Debug)]
struct CellGrid {
    origin: [f64; 3],
    cell: f64,
    /// Occupied cell keys, lexicographic, parallel to `starts`.
    keys: Vec<[i32; 3]>,
    starts: Vec<u32>,
    point_idx: Vec<u32>,
}

impl CellGrid {
    fn build(rows: &[f64]) -> Self {
        let n = rows.len() / 3;
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for row in rows.chunks_exact(3) {
            for j in 0..3 {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        let extent = (0..3).map(|j| max[j] - min[j]).fold(f64::EPSILON, f64::max);
        let per_axis = ((n as f64).cbrt().ceil() as i64).clamp(4, 192);
        let cell = extent / per_axis as f64;

        let key_of = |row: &[f64]| -> [i32; 3] {
            let mut k = [0i32; 3];
            for j in 0..3 {
                k[j] = ((row[j] - min[j]) / cell).floor() as i32;
            }
            k
        };
        let mut tagged: Vec<([i32; 3], u32)> = rows
            .chunks_exact(3)
            .enumerate()
            .map(|(i, row)| (key_of(row), i as u32))
            .collect();
        tagged.sort_unstable();

        // CSR: cell k spans point_idx[starts[k]..starts[k+1]].
        let mut keys = Vec::new();
        let mut starts: Vec<u32> = Vec::new();
        let mut point_idx = Vec::with_capacity(n);
        for (key, idx) in tagged {
            if keys.last() != Some(&key) {
                keys.push(key);
                starts.push(point_idx.len() as u32);
            }
            point_idx.push(idx);
        }
        starts.push(point_idx.len() as u32);

        Self {
            origin: min,
            cell,
            keys,
            starts,
            point_idx,
        }
    }

    fn key_range(&self, lo: &[f64; 3], hi: &[f64; 3]) -> ([i32; 3], [i32; 3]) {
        let mut a = [0i32; 3];
        let mut b = [0i32; 3];
        for j in 0..3 {
            a[j] = ((lo[j] - self.origin[j]) / self.cell).floor() as i32;
            b[j] = ((hi[j] - self.origin[j]) / self.cell).floor() as i32;
        }
        (a, b)
    }

    /// Visit point-index slices of every occupied cell intersecting the box
    /// `[lo, hi]`, in lexicographic cell order.
    fn covered_slices<F: FnMut(&[u32])>(&self, lo: &[f64; 3], hi: &[f64; 3], mut visit: F) {
        let (a, b) = self.key_range(lo, hi);
        for kx in a[0]..=b[0] {
            for ky in a[1]..=b[1] {
                // Row of cells with fixed (kx, ky): one binary search, then walk.
                let from = self.keys.partition_point(|k| k < &[kx, ky, a[2]]);
                for (i, key) in self.keys[from..].iter().enumerate() {
                    if key[0] != kx || key[1] != ky || key[2] > b[2] {
                        break;
                    }
                    let k = from + i;
                    visit(&self.point_idx[self.starts[k] as usize..self.starts[k + 1] as usize]);
                }
            }
        }
    }
}

/// How to turn a KDE into an entropy number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    /// Trapezoid quadrature of `-F̂ ln F̂` on a bandwidth-resolved grid.
    Quadrature,
    /// `-(1/N) Σ ln F̂(x_i)`, the own-sample average (self-term included).
    Resubstitution,
    /// Resubstitution with the query point's own kernel removed.
    ResubstitutionLoo,
}

impl std::fmt::Display for EntropyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EntropyMethod::Quadrature => "quadrature",
            EntropyMethod::Resubstitution => "resubstitution",
            EntropyMethod::ResubstitutionLoo => "resubstitution-loo",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for EntropyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrature" => Ok(EntropyMethod::Quadrature),
            "resubstitution" => Ok(EntropyMethod::Resubstitution),
            "resubstitution-loo" => Ok(EntropyMethod::ResubstitutionLoo),
            other => Err(invalid(format!(
                "unknown entropy method {other:?}; valid: quadrature, resubstitution, resubstitution-loo"
            ))),
        }
    }
}

/// A kernel density estimate `F̂_h`: kernel, bandwidth and a shared reference
/// to the prepared sample points. Multivariate densities use the product
/// kernel with a single shared bandwidth.
#[derive(Debug, Clone)]
pub struct KdeEstimate {
    kernel: Kernel,
    bandwidth: f64,
    points: Arc<KdePoints>,
}

impl KdeEstimate {
    pub fn new(kernel: Kernel, bandwidth: f64, points: Arc<KdePoints>) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self {
            kernel,
            bandwidth,
            points,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.points.dim
    }

    pub fn n(&self) -> usize {
        self.points.n()
    }

    pub fn points(&self) -> &Arc<KdePoints> {
        &self.points
    }

    /// Density at `x`: `(1/(N h^d)) Σ_i Π_j K((x_j - x_{i,j})/h)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim());
        let h = self.bandwidth;
        let n = self.n() as f64;
        if self.dim() == 1 {
            let sum = if self.kernel.support_radius().is_finite() {
                let rad = self.kernel.support_radius() * h;
                let xs = &self.points.sorted;
                let lo = xs.partition_point(|&p| p < x[0] - rad);
                let hi = xs.partition_point(|&p| p <= x[0] + rad);
                let mut acc = 0.0;
                for &p in &xs[lo..hi] {
                    acc += self.kernel.eval((x[0] - p) / h);
                }
                acc
            } else {
                // Gaussian: plain summation over all points, original order.
                let mut acc = 0.0;
                for &p in &self.points.rows {
                    acc += self.kernel.eval((x[0] - p) / h);
                }
                acc
            };
            sum / (n * h)
        } else {
            let mut acc = 0.0;
            if self.kernel.support_radius().is_finite() {
                let rad = self.kernel.support_radius() * h;
                let grid = self.points.grid.as_ref().unwrap();
                let lo = [x[0] - rad, x[1] - rad, x[2] - rad];
                let hi = [x[0] + rad, x[1] + rad, x[2] + rad];
                grid.covered_slices(&lo, &hi, |slice| {
                    for &idx in slice {
                        acc += self.product_kernel(x, idx as usize, h);
                    }
                });
            } else {
                for idx in 0..self.n() {
                    acc += self.product_kernel(x, idx, h);
                }
            }
            acc / (n * h.powi(3))
        }
    }

    #[inline]
    fn product_kernel(&self, x: &[f64], idx: usize, h: f64) -> f64 {
        let row = &self.points.rows[idx * 3..idx * 3 + 3];
        let mut prod = 1.0;
        for j in 0..3 {
            let k = self.kernel.eval((x[j] - row[j]) / h);
            if k == 0.0 {
                return 0.0;
            }
            prod *= k;
        }
        prod
    }

    /// Effective window radius for lattice scans: the support radius for
    /// compact kernels, the 8h truncation for the Gaussian.
    fn window_radius(&self) -> f64 {
        self.kernel.integration_radius() * self.bandwidth
    }
}

/// Moving window over ascending query positions into an ascending array.
struct Window<'a> {
    xs: &'a [f64],
    lo: usize,
    hi: usize,
}

impl<'a> Window<'a> {
    fn new(xs: &'a [f64]) -> Self {
        Self { xs, lo: 0, hi: 0 }
    }

    /// Slice of values in `[lo_bound, hi_bound]`. Bounds must be
    /// nondecreasing across calls.
    #[inline]
    fn advance(&mut self, lo_bound: f64, hi_bound: f64) -> &'a [f64] {
        while self.lo < self.xs.len() && self.xs[self.lo] < lo_bound {
            self.lo += 1;
        }
        if self.hi < self.lo {
            self.hi = self.lo;
        }
        while self.hi < self.xs.len() && self.xs[self.hi] <= hi_bound {
            self.hi += 1;
        }
        &self.xs[self.lo..self.hi]
    }
}

/// The 1D integration lattice shared by the entropy and its bandwidth
/// derivatives: cells of uniform `step`, node centers offset half a step so
/// no node can sit exactly on a kernel support endpoint.
#[derive(Debug, Clone, Copy)]
struct Lattice {
    lo: f64,
    step: f64,
    cells: usize,
}

impl Lattice {
    fn for_estimate(est: &KdeEstimate) -> Self {
        Self::with_divisor(est, QUAD_STEP_DIVISOR)
    }

    fn with_divisor(est: &KdeEstimate, divisor: f64) -> Self {
        Self::with_resolution(est, divisor, QUAD_MIN_NODES_1D)
    }

    fn with_resolution(est: &KdeEstimate, divisor: f64, min_nodes: usize) -> Self {
        let pad = est.window_radius();
        let xs = &est.points.sorted;
        let lo = xs[0] - pad;
        let hi = xs[xs.len() - 1] + pad;
        let width = hi - lo;
        let h = est.bandwidth;
        let step = (h / divisor).min(width / min_nodes as f64);
        let cells = (width / step).ceil() as usize;
        Self { lo, step, cells }
    }

    #[inline]
    fn boundary(&self, m: usize) -> f64 {
        self.lo + self.step * m as f64
    }

    #[inline]
    fn center(&self, m: usize) -> f64 {
        self.lo + self.step * (m as f64 + 0.5)
    }
}

/// Trapezoid sum of `-F̂ ln F̂` over the half-step-offset lattice (the
/// padding puts both ends outside every kernel support, so the endpoint
/// terms vanish).
fn entropy_scan_1d(est: &KdeEstimate) -> f64 {
    let lat = Lattice::for_estimate(est);
    let h = est.bandwidth;
    let n = est.n() as f64;
    let rad = est.window_radius();
    let kernel = est.kernel;
    let mut win = Window::new(&est.points.sorted);
    let mut entropy = KahanSum::new();
    for m in 0..lat.cells {
        let xc = lat.center(m);
        let mut s0 = 0.0;
        for &p in win.advance(xc - rad, xc + rad) {
            s0 += kernel.eval((xc - p) / h);
        }
        let f = s0 / (n * h);
        if f > 0.0 {
            entropy.add(-f * f.ln());
        }
    }
    entropy.value() * lat.step
}

/// What the bandwidth-derivative quadrature accumulates. The integration
/// partition is the entropy lattice refined by every kernel support
/// endpoint, so each sub-cell's integrands are smooth: per-cell masses of
/// `∂F̂/∂h` and `∂²F̂/∂h²` are exact antiderivative differences, pointwise
/// values sit at sub-cell midpoints, and the support-edge point masses of
/// `∂²F̂/∂h²` are treated jointly with the adjacent Fisher integral.
struct DerivScan {
    /// `Σ mass(∂F̂/∂h) · ln F̂(mid)`.
    dfdh_lnf: f64,
    /// `Σ mass(∂F̂/∂h)`; telescopes to the full integral of `∂F̂/∂h`.
    dfdh_total: f64,
    /// `Σ mass(∂²F̂/∂h²) · ln F̂(mid)` (classical part).
    d2_lnf: f64,
    /// `Σ mass(∂²F̂/∂h²)` (classical part).
    d2_total: f64,
    /// `∫ (∂F̂/∂h)²/F̂` plus the edge point masses times `ln F̂(edge)`,
    /// combined per edge so their mutual log divergences cancel exactly.
    fisher_joint: f64,
    /// Total edge point mass of `∂²F̂/∂h²`.
    em_total: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    LatticeBoundary,
    /// Upper support endpoint of the kernel owned by the payload sample
    /// value (the sub-cell to the LEFT is inside that kernel).
    UpperEdge(f64),
    /// Lower support endpoint (the sub-cell to the RIGHT is inside).
    LowerEdge(f64),
}

impl Mark {
    /// Tie order at equal positions: an upper edge closes before lattice
    /// boundaries, a lower edge opens after them, so each edge's inside
    /// sub-cell has nonzero width whenever the data allows it.
    fn rank(&self) -> u8 {
        match self {
            Mark::UpperEdge(_) => 0,
            Mark::LatticeBoundary => 1,
            Mark::LowerEdge(_) => 2,
        }
    }
}

fn h_derivative_scan(est: &KdeEstimate, second: bool) -> DerivScan {
    // Diagnostics path, not the hot curve path: a finer lattice tightens the
    // local edge models at modest cost.
    let lat = Lattice::with_resolution(est, 2.0 * QUAD_STEP_DIVISOR, 4 * QUAD_MIN_NODES_1D);
    let h = est.bandwidth;
    let n = est.n() as f64;
    let rad = est.window_radius();
    let kernel = est.kernel;
    let xs = &est.points.sorted;
    let r = kernel.support_radius();
    let compact = r.is_finite();

    // Merge the lattice boundaries with the kernel support endpoints.
    let mut partition: Vec<(f64, Mark)> =
        Vec::with_capacity(lat.cells + 1 + if compact { 2 * xs.len() } else { 0 });
    for m in 0..=lat.cells {
        partition.push((lat.boundary(m), Mark::LatticeBoundary));
    }
    if compact {
        for &x in xs {
            partition.push((x - r * h, Mark::LowerEdge(x)));
            partition.push((x + r * h, Mark::UpperEdge(x)));
        }
        partition
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.rank().cmp(&b.1.rank())));
    }

    // Edge point mass of ∂²F̂/∂h² and the slope of the owning kernel's
    // density at its support endpoint (equal for unit support radius).
    let em = -r * r * kernel.edge_slope() / (h * h * n);
    let slope_a = -kernel.edge_slope() / (n * h * h);

    let m_sat = kernel.first_h_antiderivative(kernel.integration_radius());
    let a_sat = kernel.second_h_antiderivative(kernel.integration_radius());

    let mut win_b = Window::new(xs);
    let mut win_c = Window::new(xs);

    let mut dfdh_lnf = KahanSum::new();
    let mut dfdh_total = KahanSum::new();
    let mut d2_lnf = KahanSum::new();
    let mut d2_total = KahanSum::new();
    let mut fisher_joint = KahanSum::new();
    let mut em_total = 0.0;

    // Per-boundary state: antiderivative sums, plus pointwise f and ∂F̂/∂h
    // excluding the owning kernel when the boundary is a support edge
    // (needed by the joint edge model).
    struct Boundary {
        p1: f64,
        p2: f64,
        f: f64,
        df: f64,
        mark: Mark,
    }
    let eval_boundary = |win: &mut Window, x: f64, mark: Mark, second: bool| -> Boundary {
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let owner = match mark {
            Mark::LatticeBoundary => None,
            Mark::UpperEdge(own) | Mark::LowerEdge(own) => Some(own),
        };
        for &p in win.advance(x - rad, x + rad) {
            let u = (x - p) / h;
            p1 += kernel.first_h_antiderivative(u);
            if compact {
                // F̂ at the boundary; a continuous kernel vanishes at its
                // own edge, so no owner exclusion is needed here.
                s0 += kernel.eval(u);
            }
            if second {
                p2 += kernel.second_h_antiderivative(u);
                // ∂F̂/∂h just inside the edge, without the owner (whose
                // edge limit is carried analytically by the joint model).
                if owner.is_some() && p != owner.unwrap() {
                    s1 += kernel.eval(u) + u * kernel.deriv(u);
                }
            }
        }
        let passed = win.lo as f64;
        Boundary {
            p1: p1 + passed * m_sat,
            p2: p2 + passed * a_sat,
            f: s0 / (n * h),
            df: -s1 / (n * h * h),
            mark,
        }
    };

    // The joint value of ∫(∂F̂/∂h)²/F̂ over the width-w sub-cell inside a
    // support edge plus the edge mass times ln F̂(edge). Locally the owning
    // kernel's density grows linearly from the edge, F̂ ≈ f_other + a·t and
    // ∂F̂/∂h ≈ df_other + em, which integrates in closed form; the log
    // divergences of the two pieces cancel (for unit support radius the
    // coefficients match exactly), leaving this finite even when no other
    // kernel covers the edge.
    let edge_joint = |f_other: f64, df_other: f64, w: f64| -> f64 {
        if w <= 0.0 {
            return if f_other > 0.0 { em * f_other.ln() } else { 0.0 };
        }
        let d = df_other + em;
        if f_other > 0.0 {
            (d * d / slope_a) * (slope_a * w / f_other).ln_1p() + em * f_other.ln()
        } else {
            em * (slope_a * w).ln()
        }
    };

    // Cell mean of ln F̂ for the linear interpolant between the boundary
    // densities: [f₂ln f₂ - f₁ln f₁]/(f₂ - f₁) - 1. Exact for the ramp next
    // to a support edge (where ln F̂ diverges at the endpoint) and
    // second-order accurate in the bulk.
    let ln_mean_linear = |f1: f64, f2: f64| -> f64 {
        let phi = |f: f64| if f > 0.0 { f * f.ln() } else { 0.0 };
        if f1 <= 0.0 && f2 <= 0.0 {
            return f64::NAN;
        }
        if (f2 - f1).abs() <= 1e-9 * f2.abs().max(f1.abs()) {
            return (0.5 * (f1 + f2)).ln();
        }
        (phi(f2) - phi(f1)) / (f2 - f1) - 1.0
    };

    let mut prev = eval_boundary(&mut win_b, partition[0].0, partition[0].1, second);
    let mut prev_x = partition[0].0;
    for &(x, mark) in &partition[1..] {
        let cur = eval_boundary(&mut win_b, x, mark, second);
        let w = x - prev_x;
        if w > 0.0 {
            let mid = 0.5 * (prev_x + x);
            let mut s0 = 0.0;
            let mut s1 = 0.0;
            for &p in win_c.advance(mid - rad, mid + rad) {
                let u = (mid - p) / h;
                s0 += kernel.eval(u);
                if second {
                    s1 += kernel.eval(u) + u * kernel.deriv(u);
                }
            }
            let f = s0 / (n * h);

            let left_edge = matches!(prev.mark, Mark::LowerEdge(_));
            let right_edge = matches!(cur.mark, Mark::UpperEdge(_));
            // ln F̂ weight for the exact cell masses: exact cell mean of the
            // linear interpolant for compact kernels with sloped edges, the
            // midpoint value otherwise.
            let lnf = if slope_a > 0.0 && compact {
                ln_mean_linear(prev.f, cur.f)
            } else if f > 0.0 {
                f.ln()
            } else {
                f64::NAN
            };

            let mass1 = -(cur.p1 - prev.p1) / (h * n);
            dfdh_total.add(mass1);
            if lnf.is_finite() {
                dfdh_lnf.add(mass1 * lnf);
            }

            if second {
                let mass2 = (cur.p2 - prev.p2) / (h * h * n);
                d2_total.add(mass2);
                if lnf.is_finite() {
                    d2_lnf.add(mass2 * lnf);
                }
                // Fisher piece: the local ramp model where the owning
                // kernel's rise is a real fraction of the density at the
                // edge (only there do the log divergences need the joint
                // treatment); plain midpoint rule plus the exact edge
                // weight elsewhere.
                let ramp_matters = |f_other: f64| f_other < 100.0 * slope_a * w;
                let mut plain = f > 0.0;
                let mut handle_edge = |f_o: f64, df_o: f64, width: f64, plain: &mut bool| {
                    if ramp_matters(f_o) {
                        fisher_joint.add(edge_joint(f_o, df_o, width));
                        *plain &= false;
                    } else {
                        // Dense edge: point mass with its exact weight.
                        fisher_joint.add(em * f_o.ln());
                    }
                };
                match (left_edge, right_edge) {
                    (false, false) => {}
                    (true, false) => handle_edge(prev.f, prev.df, w, &mut plain),
                    (false, true) => handle_edge(cur.f, cur.df, w, &mut plain),
                    (true, true) => {
                        // Both boundaries are edges; each takes half the
                        // cell if its ramp matters.
                        handle_edge(prev.f, prev.df, 0.5 * w, &mut plain);
                        handle_edge(cur.f, cur.df, 0.5 * w, &mut plain);
                    }
                }
                if plain {
                    // ∫ df²/F̂ with F̂ linear between the boundary values:
                    // the 1/F̂ log integral is exact per cell, which matters
                    // where F̂ ramps down toward a sparse support edge.
                    let df = -s1 / (n * h * h);
                    let (f1, f2) = (prev.f, cur.f);
                    if compact && f1 > 0.0 && f2 > 0.0 {
                        let logfac = if (f2 - f1).abs() <= 1e-9 * f2.max(f1) {
                            1.0 / f
                        } else {
                            (f2.ln() - f1.ln()) / (f2 - f1)
                        };
                        fisher_joint.add(w * df * df * logfac);
                    } else {
                        fisher_joint.add(w * df * df / f);
                    }
                }
            }
        }
        if second && !matches!(mark, Mark::LatticeBoundary) {
            em_total += em;
        }
        prev = cur;
        prev_x = x;
    }

    DerivScan {
        dfdh_lnf: dfdh_lnf.value(),
        dfdh_total: dfdh_total.value(),
        d2_lnf: d2_lnf.value(),
        d2_total: d2_total.value(),
        fisher_joint: fisher_joint.value(),
        em_total,
    }
}

/// Plug-in entropy of the estimate, in nats.
pub fn kde_entropy(est: &KdeEstimate, method: EntropyMethod) -> Result<f64> {
    match (method, est.dim()) {
        (EntropyMethod::Quadrature, 1) => Ok(entropy_scan_1d(est)),
        (EntropyMethod::Quadrature, 3) => entropy_quadrature_3d(est),
        (EntropyMethod::Quadrature, d) => Err(invalid(format!("quadrature entropy supports d <= 3, got {d}"))),
        (EntropyMethod::Resubstitution, 1) => resubstitution_1d(est, false),
        (EntropyMethod::ResubstitutionLoo, 1) => resubstitution_1d(est, true),
        (EntropyMethod::Resubstitution, _) => resubstitution_3d(est, false),
        (EntropyMethod::ResubstitutionLoo, _) => resubstitution_3d(est, true),
    }
}

fn resubstitution_1d(est: &KdeEstimate, leave_one_out: bool) -> Result<f64> {
    let xs = &est.points.sorted;
    let n = est.n();
    if leave_one_out && n < 2 {
        return Err(invalid("leave-one-out requires at least 2 points"));
    }
    let h = est.bandwidth;
    let rad = est.window_radius();
    let k0 = est.kernel.eval(0.0);
    let mut win = Window::new(xs);
    let mut acc = KahanSum::new();
    for &x in xs {
        let mut sum = 0.0;
        for &p in win.advance(x - rad, x + rad) {
            sum += est.kernel.eval((x - p) / h);
        }
        let f = if leave_one_out {
            (sum - k0) / ((n as f64 - 1.0) * h)
        } else {
            sum / (n as f64 * h)
        };
        if !(f > 0.0) {
            return Err(invalid(format!(
                "leave-one-out density vanished at x = {x}; bandwidth {h} is too small for this method"
            )));
        }
        acc.add(f.ln());
    }
    Ok(-acc.value() / n as f64)
}

fn resubstitution_3d(est: &KdeEstimate, leave_one_out: bool) -> Result<f64> {
    let n = est.n();
    if leave_one_out && n < 2 {
        return Err(invalid("leave-one-out requires at least 2 points"));
    }
    let h = est.bandwidth;
    let k0 = est.kernel.eval(0.0).powi(3);
    let rows = &est.points.rows;
    let mut acc = KahanSum::new();

    if est.kernel.support_radius().is_finite() {
        let rad = est.kernel.support_radius() * h;
        let grid = est.points.grid.as_ref().unwrap();
        // Queries grouped by cell: gather each cell's neighborhood once.
        let mut neighbor_idx: Vec<u32> = Vec::new();
        for (k, key) in grid.keys.iter().enumerate() {
            let cell_lo = [
                grid.origin[0] + key[0] as f64 * grid.cell - rad,
                grid.origin[1] + key[1] as f64 * grid.cell - rad,
                grid.origin[2] + key[2] as f64 * grid.cell - rad,
            ];
            let cell_hi = [
                grid.origin[0] + (key[0] + 1) as f64 * grid.cell + rad,
                grid.origin[1] + (key[1] + 1) as f64 * grid.cell + rad,
                grid.origin[2] + (key[2] + 1) as f64 * grid.cell + rad,
            ];
            neighbor_idx.clear();
            grid.covered_slices(&cell_lo, &cell_hi, |slice| neighbor_idx.extend_from_slice(slice));

            let queries = &grid.point_idx[grid.starts[k] as usize..grid.starts[k + 1] as usize];
            for &qi in queries {
                let q = &rows[qi as usize * 3..qi as usize * 3 + 3];
                let mut sum = 0.0;
                for &pi in &neighbor_idx {
                    let row = &rows[pi as usize * 3..pi as usize * 3 + 3];
                    let u0 = (q[0] - row[0]) / h;
                    if u0.abs() >= 1.0 {
                        continue;
                    }
                    let u1 = (q[1] - row[1]) / h;
                    if u1.abs() >= 1.0 {
                        continue;
                    }
                    let u2 = (q[2] - row[2]) / h;
                    if u2.abs() >= 1.0 {
                        continue;
                    }
                    sum += est.kernel.eval(u0) * est.kernel.eval(u1) * est.kernel.eval(u2);
                }
                let f = if leave_one_out {
                    (sum - k0) / ((n as f64 - 1.0) * h.powi(3))
                } else {
                    sum / (n as f64 * h.powi(3))
                };
                if !(f > 0.0) {
                    return Err(invalid(format!(
                        "leave-one-out density vanished at point index {qi}; bandwidth {h} is too small for this method"
                    )));
                }
                acc.add(f.ln());
            }
        }
    } else {
        for i in 0..n {
            let q = &rows[i * 3..i * 3 + 3];
            let mut sum = 0.0;
            for row in rows.chunks_exact(3) {
                let mut prod = 1.0;
                for j in 0..3 {
                    prod *= est.kernel.eval((q[j] - row[j]) / h);
                }
                sum += prod;
            }
            let f = if leave_one_out {
                (sum - k0) / ((n as f64 - 1.0) * h.powi(3))
            } else {
                sum / (n as f64 * h.powi(3))
            };
            acc.add(f.ln());
        }
    }
    Ok(-acc.value() / n as f64)
}

fn entropy_quadrature_3d(est: &KdeEstimate) -> Result<f64> {
    let (min, max) = est.points.min_max();
    let pad = est.window_radius();
    let h = est.bandwidth;
    let step = h / QUAD_STEP_DIVISOR_3D;
    let mut cells = [0usize; 3];
    let mut total: u128 = 1;
    for j in 0..3 {
        let width = max[j] - min[j] + 2.0 * pad;
        cells[j] = (width / step).ceil() as usize;
        total = total.saturating_mul(cells[j] as u128);
    }
    if total > QUAD_NODE_BUDGET as u128 {
        return Err(Error::QuadratureBudget {
            requested: total,
            budget: QUAD_NODE_BUDGET,
        });
    }
    let mut acc = KahanSum::new();
    let mut x = [0.0f64; 3];
    for i in 0..cells[0] {
        x[0] = min[0] - pad + (i as f64 + 0.5) * step;
        for j in 0..cells[1] {
            x[1] = min[1] - pad + (j as f64 + 0.5) * step;
            for k in 0..cells[2] {
                x[2] = min[2] - pad + (k as f64 + 0.5) * step;
                let f = est.density(&x);
                if f > 0.0 {
                    acc.add(-f * f.ln());
                }
            }
        }
    }
    Ok(acc.value() * step * step * step)
}

/// `dS/dh = -∫ (∂F̂/∂h) ln F̂ dv` (1D): exact per-cell masses of `∂F̂/∂h`
/// against `ln F̂` at cell centers. The normalization term of the full
/// product rule integrates to zero exactly in this scheme (see
/// [`kde_h_derivative_mass`]), which is what justifies dropping it.
pub fn kde_entropy_derivative(est: &KdeEstimate) -> Result<f64> {
    require_1d(est)?;
    let sums = h_derivative_scan(est, false);
    let mut value = -sums.dfdh_lnf;
    // Kernels with a value jump at the support edge (uniform) additionally
    // transport entropy-integrand jumps as the edges move.
    let ke = est.kernel.edge_value();
    if ke > 0.0 {
        value -= edge_value_transport(est, ke);
    }
    Ok(value)
}

fn edge_value_transport(est: &KdeEstimate, ke: f64) -> f64 {
    let h = est.bandwidth;
    let n = est.n() as f64;
    let r = est.kernel.support_radius();
    let rad = est.window_radius();
    let xs = &est.points.sorted;
    let jump = ke / (n * h);
    let phi = |f: f64| if f > 0.0 { f * f.ln() } else { 0.0 };

    let mut positions: Vec<(f64, f64)> = Vec::with_capacity(2 * xs.len()); // (edge, own x)
    for &x in xs {
        positions.push((x - r * h, x));
    }
    for &x in xs {
        positions.push((x + r * h, x));
    }
    positions.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut win = Window::new(xs);
    let mut acc = KahanSum::new();
    for &(pos, own) in &positions {
        let mut s0 = 0.0;
        for &p in win.advance(pos - rad, pos + rad) {
            s0 += est.kernel.eval((pos - p) / h);
        }
        // The owning point's kernel evaluated exactly at its edge must not
        // leak into the outside value through rounding.
        let u_own = (pos - own) / h;
        if u_own.abs() < r {
            s0 -= est.kernel.eval(u_own);
        }
        let f_out = s0 / (n * h);
        let f_in = f_out + jump;
        acc.add(r * (phi(f_in) - phi(f_out)));
    }
    acc.value()
}

/// Integral of `∂F̂/∂h` over the padded range, exactly as the derivative
/// quadrature accounts mass (telescoped cell masses). Differentiated
/// normalization says this is zero.
pub fn kde_h_derivative_mass(est: &KdeEstimate) -> Result<f64> {
    require_1d(est)?;
    let sums = h_derivative_scan(est, false);
    let mut mass = sums.dfdh_total;
    let ke = est.kernel.edge_value();
    if ke > 0.0 {
        // Value-jump transport of plain mass: +r·K(r⁻)/(hN) per edge.
        let r = est.kernel.support_radius();
        mass += 2.0 * est.n() as f64 * r * ke / (est.bandwidth * est.n() as f64);
    }
    Ok(mass)
}

/// Pointwise `∂F̂/∂h(x) = -(1/(h²N)) Σ_i [K(u_i) + u_i K'(u_i)]` (1D).
pub fn kde_density_h_derivative(est: &KdeEstimate, x: f64) -> Result<f64> {
    require_1d(est)?;
    let h = est.bandwidth;
    let rad = est.window_radius();
    let xs = &est.points.sorted;
    let lo = xs.partition_point(|&p| p < x - rad);
    let hi = xs.partition_point(|&p| p <= x + rad);
    let mut sum = 0.0;
    for &p in &xs[lo..hi] {
        let u = (x - p) / h;
        sum += est.kernel.eval(u) + u * est.kernel.deriv(u);
    }
    Ok(-sum / (est.n() as f64 * h * h))
}

/// `d²S/dh²` (1D): classical quadrature plus the support-edge point masses
/// of `∂²F̂/∂h²` for kernels with a slope jump at the edge.
pub fn kde_entropy_second_derivative(est: &KdeEstimate) -> Result<f64> {
    require_1d(est)?;
    require_second_derivative_kernel(est)?;
    let sums = h_derivative_scan(est, true);
    Ok(-(sums.d2_lnf + sums.fisher_joint))
}

/// The selector residual `∫ (∂²F̂/∂h²) ln F̂ dv - ∫ F̂ (∂² ln F̂/∂h²) dv`,
/// whose sign change brackets the derivative minimum (it equals `-d²S/dh²`
/// up to the vanishing total mass of `∂²F̂/∂h²`).
pub fn kde_second_derivative_residual(est: &KdeEstimate) -> Result<f64> {
    require_1d(est)?;
    require_second_derivative_kernel(est)?;
    let sums = h_derivative_scan(est, true);
    // residual = -d²S/dh² - ∫∂²F̂/∂h² (the latter telescopes to ~0).
    Ok(sums.d2_lnf + sums.fisher_joint - (sums.d2_total + sums.em_total))
}

fn require_1d(est: &KdeEstimate) -> Result<()> {
    if est.dim() != 1 {
        return Err(invalid(format!(
            "bandwidth-derivative operations support d = 1, got d = {}",
            est.dim()
        )));
    }
    Ok(())
}

fn require_second_derivative_kernel(est: &KdeEstimate) -> Result<()> {
    if !est.kernel.supports_second_h_derivative() {
        return Err(invalid(format!(
            "second bandwidth derivative is undefined for the {} kernel (discontinuous at its support edge)",
            est.kernel.id()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
