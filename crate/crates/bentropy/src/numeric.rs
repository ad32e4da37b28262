//! Small numerical building blocks: compensated summation, composite
//! quadrature, Richardson-extrapolated differentiation and an erf
//! approximation for CDF checks.

/// Neumaier-compensated accumulator. Summation order still matters at the
/// last ulp, so deterministic callers must feed it in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Composite trapezoid rule on `n` uniform intervals over `[lo, hi]`.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 1 && hi > lo);
    let step = (hi - lo) / n as f64;
    let mut acc = KahanSum::new();
    acc.add(0.5 * f(lo));
    for k in 1..n {
        acc.add(f(lo + step * k as f64));
    }
    acc.add(0.5 * f(hi));
    acc.value() * step
}

/// Trapezoid rule refined by interval doubling until two successive
/// estimates agree to `tol` (absolute, relative to the magnitude of the
/// integral when that is larger than one).
pub fn trapezoid_converged<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let mut n = 1usize << 10;
    let mut prev = trapezoid(&f, lo, hi, n);
    loop {
        n *= 2;
        let next = trapezoid(&f, lo, hi, n);
        if (next - prev).abs() <= tol * next.abs().max(1.0) || n >= 1 << 22 {
            return next;
        }
        prev = next;
    }
}

/// Composite midpoint rule on `n` uniform cells over `[lo, hi]`. Never
/// evaluates the integrand at the interval endpoints, which makes it the
/// right rule for densities that jump at their support boundary.
pub fn midpoint<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 1 && hi > lo);
    let step = (hi - lo) / n as f64;
    let mut acc = KahanSum::new();
    for k in 0..n {
        acc.add(f(lo + step * (k as f64 + 0.5)));
    }
    acc.value() * step
}

/// Midpoint rule refined by cell doubling until two successive estimates
/// agree to `tol`.
pub fn midpoint_converged<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let mut n = 1usize << 10;
    let mut prev = midpoint(&f, lo, hi, n);
    loop {
        n *= 2;
        let next = midpoint(&f, lo, hi, n);
        if (next - prev).abs() <= tol * next.abs().max(1.0) || n >= 1 << 22 {
            return next;
        }
        prev = next;
    }
}

/// Central difference first derivative with one Richardson extrapolation
/// step, refined until the extrapolated value stabilizes. Halting on the
/// first non-improving difference keeps the step out of the roundoff floor.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, step0: f64, tol: f64) -> f64 {
    let central = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    richardson_loop(|h| (4.0 * central(h / 2.0) - central(h)) / 3.0, step0, tol)
}

/// Central second difference with one Richardson extrapolation step.
pub fn richardson_second_derivative<F: Fn(f64) -> f64>(f: F, x: f64, step0: f64, tol: f64) -> f64 {
    let central = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    richardson_loop(|h| (4.0 * central(h / 2.0) - central(h)) / 3.0, step0, tol)
}

fn richardson_loop<D: Fn(f64) -> f64>(extrapolated: D, step0: f64, tol: f64) -> f64 {
    let mut h = step0;
    let mut best = extrapolated(h);
    let mut best_err = f64::INFINITY;
    for _ in 0..10 {
        h /= 2.0;
        let next = extrapolated(h);
        let err = (next - best).abs();
        if err <= tol * next.abs().max(1.0) {
            return next;
        }
        if err >= best_err {
            // Differences grew: roundoff has taken over.
            return best;
        }
        best = next;
        best_err = err;
    }
    best
}

/// Roughness functional `R(g) = ∫ g(x)² dx` of the `order`-th derivative of
/// `pdf` over `(lo, hi)`, by midpoint quadrature with Richardson-extrapolated
/// finite differences strictly inside the interval.
pub fn derivative_roughness<F: Fn(f64) -> f64 + Sync>(
    pdf: F,
    lo: f64,
    hi: f64,
    order: u32,
) -> f64 {
    assert!(order == 1 || order == 2);
    let mut nodes = 1usize << 12;
    let mut prev = roughness_pass(&pdf, lo, hi, order, nodes);
    loop {
        nodes *= 2;
        let next = roughness_pass(&pdf, lo, hi, order, nodes);
        if (next - prev).abs() <= 1e-8 * next.abs().max(1.0) || nodes >= 1 << 20 {
            return next;
        }
        prev = next;
    }
}

fn roughness_pass<F: Fn(f64) -> f64>(pdf: &F, lo: f64, hi: f64, order: u32, nodes: usize) -> f64 {
    let step = (hi - lo) / nodes as f64;
    // One differencing scale everywhere; nodes too close to a support edge
    // switch to one-sided stencils pointing inward, so the pdf is never
    // sampled outside (lo, hi).
    let hd = ((hi - lo) * 1e-5).max(1e-7);
    let mut acc = KahanSum::new();
    for k in 0..nodes {
        let x = lo + (k as f64 + 0.5) * step;
        let margin = (x - lo).min(hi - x);
        let d = if margin > 3.5 * hd {
            match order {
                1 => richardson_derivative(pdf, x, hd, 1e-10),
                _ => richardson_second_derivative(pdf, x, hd.max(1e-5), 1e-8),
            }
        } else {
            let s = if x - lo < hi - x { hd } else { -hd };
            match order {
                // Second-order one-sided first derivative.
                1 => (-3.0 * pdf(x) + 4.0 * pdf(x + s) - pdf(x + 2.0 * s)) / (2.0 * s),
                // Second-order one-sided second derivative.
                _ => {
                    (2.0 * pdf(x) - 5.0 * pdf(x + s) + 4.0 * pdf(x + 2.0 * s)
                        - pdf(x + 3.0 * s))
                        / (s * s)
                }
            }
        };
        acc.add(d * d);
    }
    acc.value() * step
}

/// Abramowitz & Stegun 7.1.26 rational approximation of erf (|error| < 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF via [`erf`].
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Format a float with 17 significant digits so that serialized numbers
/// round-trip bit-exactly and reruns are byte-comparable.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}
