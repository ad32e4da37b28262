// Scratch numerics probe (not part of the deliverable surface).
use bentropy::distributions::{AnalyticDistribution, DistributionId};
use bentropy::kde::{
    kde_entropy_derivative, kde_entropy_second_derivative, kde_second_derivative_residual,
    KdeEstimate, Kernel, KdePoints, KernelId,
};
use bentropy::numeric::KahanSum;

fn main() {
    let dist = AnalyticDistribution::new(DistributionId::Normal1D);
    let s = dist.sample(10_000, 5).unwrap();
    let pts = KdePoints::from_sample(&s).unwrap();

    let kernel = Kernel::new(KernelId::Epanechnikov);
    let est_at = |h: f64| KdeEstimate::new(kernel, h, pts.clone()).unwrap();

    for h in [0.1f64, 0.2, 0.35] {
        // Fixed common lattice over the widest domain of the FD stencil.
        let h_top = h * 1.05;
        let xs = pts.sorted_values();
        let (lo, hi) = (xs[0] - h_top, xs[xs.len() - 1] + h_top);
        let nodes = 400_000usize;
        let step = (hi - lo) / nodes as f64;
        let s_fixed = |hh: f64| {
            let est = est_at(hh);
            let mut acc = KahanSum::new();
            for m in 0..nodes {
                let x = lo + (m as f64 + 0.5) * step;
                let f = est.density(&[x]);
                if f > 0.0 {
                    acc.add(-f * f.ln());
                }
            }
            acc.value() * step
        };

        let a1 = kde_entropy_derivative(&est_at(h)).unwrap();
        let d = 1e-4 * h;
        let fd1 = (s_fixed(h + d) - s_fixed(h - d)) / (2.0 * d);
        println!(
            "h={h}: dS/dh analytic={a1:.8} FD(fixed,δ=1e-4h)={fd1:.8} rel={:.2e}",
            (a1 - fd1).abs() / fd1.abs()
        );

        let a2 = kde_entropy_second_derivative(&est_at(h)).unwrap();
        let r = kde_second_derivative_residual(&est_at(h)).unwrap();
        let fd2_at = |dd: f64| (s_fixed(h + dd) - 2.0 * s_fixed(h) + s_fixed(h - dd)) / (dd * dd);
        let big = 0.02 * h;
        let fd2 = (4.0 * fd2_at(big / 2.0) - fd2_at(big)) / 3.0;
        println!(
            "   d2 analytic={a2:.6} -res={:.6} FD2(fixed,Richardson)={fd2:.6} rel={:.2e}",
            -r,
            (a2 - fd2).abs() / fd2.abs()
        );
    }
}
