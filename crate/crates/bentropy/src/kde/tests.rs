use super::*;
use crate::distributions::{AnalyticDistribution, DistributionId};
use approx::assert_relative_eq;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points_1d(values: &[f64]) -> Arc<KdePoints> {
    let s = Sample::from_rows(values.to_vec(), 1, DistributionId::Normal1D, 0).unwrap();
    KdePoints::from_sample(&s).unwrap()
}

fn normal_points(n: usize, seed: u64) -> Arc<KdePoints> {
    let s = AnalyticDistribution::new(DistributionId::Normal1D)
        .sample(n, seed)
        .unwrap();
    KdePoints::from_sample(&s).unwrap()
}

fn estimate(kernel: KernelId, h: f64, points: Arc<KdePoints>) -> KdeEstimate {
    KdeEstimate::new(Kernel::new(kernel), h, points).unwrap()
}

/// Direct summation over the raw rows — the oracle the accelerated
/// evaluation must reproduce.
fn brute_force_density(est: &KdeEstimate, x: &[f64]) -> f64 {
    let h = est.bandwidth();
    let d = est.dim();
    let mut sum = 0.0;
    for row in est.points().rows() {
        let mut prod = 1.0;
        for j in 0..d {
            prod *= est.kernel().eval((x[j] - row[j]) / h);
        }
        sum += prod;
    }
    sum / (est.n() as f64 * h.powi(d as i32))
}

#[test]
fn single_point_density_examples() {
    let pts = points_1d(&[0.0]);
    let e1 = estimate(KernelId::Epanechnikov, 1.0, pts.clone());
    assert_relative_eq!(e1.density(&[0.0]), 0.75, max_relative = 1e-15);
    let e2 = estimate(KernelId::Epanechnikov, 2.0, pts);
    assert_relative_eq!(e2.density(&[0.0]), 0.375, max_relative = 1e-15);
}

#[test]
fn rejects_nonpositive_bandwidth() {
    let pts = points_1d(&[0.0, 1.0]);
    assert!(KdeEstimate::new(Kernel::new(KernelId::Epanechnikov), 0.0, pts.clone()).is_err());
    assert!(KdeEstimate::new(Kernel::new(KernelId::Epanechnikov), -0.5, pts).is_err());
}

#[test]
fn accelerated_equals_brute_force_1d() {
    let pts = normal_points(20_000, 42);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kernel in KernelId::ALL {
        let est = estimate(kernel, 0.13, pts.clone());
        for _ in 0..100 {
            let x = -4.0 + 8.0 * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let fast = est.density(&[x]);
            let brute = brute_force_density(&est, &[x]);
            assert!(
                (fast - brute).abs() <= 1e-12 * brute.abs().max(1.0),
                "{kernel}: {fast} vs {brute} at {x}"
            );
        }
    }
}

#[test]
fn accelerated_equals_brute_force_3d() {
    let s = AnalyticDistribution::new(DistributionId::Normal3D)
        .sample(4000, 11)
        .unwrap();
    let pts = KdePoints::from_sample(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut uni = || -3.0 + 6.0 * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    for kernel in KernelId::ALL {
        let est = estimate(kernel, 0.4, pts.clone());
        for _ in 0..100 {
            let x = [uni(), uni(), uni()];
            let fast = est.density(&x);
            let brute = brute_force_density(&est, &x);
            assert!(
                (fast - brute).abs() <= 1e-12 * brute.abs().max(1.0),
                "{kernel}: {fast} vs {brute} at {x:?}"
            );
        }
    }
}

#[test]
fn density_normalization_1d() {
    let pts = normal_points(2000, 3);
    for (kernel, tol) in [
        (KernelId::Epanechnikov, 1e-8),
        (KernelId::Uniform, 1e-8),
        (KernelId::Gaussian, 1e-4),
    ] {
        let est = estimate(kernel, 0.25, pts.clone());
        let pad = est.kernel().integration_radius() * est.bandwidth();
        let xs = est.points().sorted_values();
        let mass = crate::numeric::trapezoid_converged(
            |x| est.density(&[x]),
            xs[0] - pad,
            xs[xs.len() - 1] + pad,
            1e-10,
        );
        assert!((mass - 1.0).abs() < tol, "{kernel}: mass {mass}");
    }
}

#[test]
fn density_normalization_3d() {
    let s = AnalyticDistribution::new(DistributionId::Normal3D)
        .sample(30, 21)
        .unwrap();
    let pts = KdePoints::from_sample(&s).unwrap();
    let est = estimate(KernelId::Epanechnikov, 0.5, pts);
    let (min, max) = est.points().min_max();
    let pad = est.bandwidth();
    let lattice_mass = |step: f64| -> f64 {
        let mut mass = crate::numeric::KahanSum::new();
        let cells: Vec<usize> = (0..3)
            .map(|j| ((max[j] - min[j] + 2.0 * pad) / step).ceil() as usize)
            .collect();
        for i in 0..cells[0] {
            let x = min[0] - pad + (i as f64 + 0.5) * step;
            for j in 0..cells[1] {
                let y = min[1] - pad + (j as f64 + 0.5) * step;
                for k in 0..cells[2] {
                    let z = min[2] - pad + (k as f64 + 0.5) * step;
                    mass.add(est.density(&[x, y, z]));
                }
            }
        }
        mass.value() * step.powi(3)
    };
    // Midpoint masses at step h/8 and h/16, Richardson-extrapolated to kill
    // the O(step²) term.
    let coarse = lattice_mass(est.bandwidth() / 8.0);
    let fine = lattice_mass(est.bandwidth() / 16.0);
    let mass = (4.0 * fine - coarse) / 3.0;
    assert!((mass - 1.0).abs() < 1e-4, "3D KDE mass {mass}");
}

#[test]
fn quadrature_vs_resubstitution_against_fine_oracle() {
    // Both entropy routes must sit close to a very fine independent
    // quadrature of -F̂ ln F̂.
    let pts = normal_points(10_000, 5);
    let est = estimate(KernelId::Epanechnikov, 0.1, pts);
    let pad = est.bandwidth();
    let xs = est.points().sorted_values();
    let (lo, hi) = (xs[0] - pad, xs[xs.len() - 1] + pad);
    let fine = crate::numeric::trapezoid(
        |x| {
            let f = est.density(&[x]);
            if f > 0.0 {
                -f * f.ln()
            } else {
                0.0
            }
        },
        lo,
        hi,
        1_000_000,
    );
    let quad = kde_entropy(&est, EntropyMethod::Quadrature).unwrap();
    let resub = kde_entropy(&est, EntropyMethod::Resubstitution).unwrap();
    assert!((quad - fine).abs() < 5e-3, "quadrature {quad} vs fine {fine}");
    assert!((quad - resub).abs() <= 0.02, "quadrature {quad} vs resubstitution {resub}");
}

#[test]
fn entropy_grows_in_the_coarse_limit() {
    let pts = normal_points(2000, 8);
    let range = {
        let xs = pts.sorted_values();
        xs[xs.len() - 1] - xs[0]
    };
    let s1 = kde_entropy(
        &estimate(KernelId::Epanechnikov, range, pts.clone()),
        EntropyMethod::Quadrature,
    )
    .unwrap();
    let s2 = kde_entropy(
        &estimate(KernelId::Epanechnikov, 10.0 * range, pts),
        EntropyMethod::Quadrature,
    )
    .unwrap();
    assert!(s2 > s1, "S(10·h₀) = {s2} should exceed S(h₀) = {s1}");
}

#[test]
fn h_derivative_mass_vanishes() {
    let pts = normal_points(5000, 13);
    for kernel in KernelId::ALL {
        let est = estimate(kernel, 0.1, pts.clone());
        let mass = kde_h_derivative_mass(&est).unwrap();
        assert!(mass.abs() < 1e-8, "{kernel}: ∫∂F̂/∂h = {mass}");
    }
}

#[test]
fn pointwise_h_derivative_matches_finite_difference() {
    let pts = normal_points(3000, 17);
    for kernel in [KernelId::Epanechnikov, KernelId::Gaussian] {
        let h = 0.15;
        let est = estimate(kernel, h, pts.clone());
        for x in [-1.2, -0.3, 0.0, 0.7, 2.1] {
            let analytic = kde_density_h_derivative(&est, x).unwrap();
            let d = 1e-5 * h;
            let plus = estimate(kernel, h + d, pts.clone()).density(&[x]);
            let minus = estimate(kernel, h - d, pts.clone()).density(&[x]);
            let fd = (plus - minus) / (2.0 * d);
            assert_relative_eq!(analytic, fd, max_relative = 1e-4, epsilon = 1e-7);
        }
    }
}

/// Entropy by trapezoid over a lattice held fixed across a whole finite
/// difference stencil, so differencing is not polluted by lattice drift.
fn entropy_fixed_lattice(
    kernel: KernelId,
    pts: &Arc<KdePoints>,
    h: f64,
    lo: f64,
    step: f64,
    nodes: usize,
) -> f64 {
    let est = estimate(kernel, h, pts.clone());
    let mut acc = crate::numeric::KahanSum::new();
    for m in 0..nodes {
        let x = lo + (m as f64 + 0.5) * step;
        let f = est.density(&[x]);
        if f > 0.0 {
            acc.add(-f * f.ln());
        }
    }
    acc.value() * step
}

fn fixed_lattice_for(pts: &Arc<KdePoints>, kernel: KernelId, h_max: f64) -> (f64, f64, usize) {
    let pad = Kernel::new(kernel).integration_radius() * h_max;
    let xs = pts.sorted_values();
    let (lo, hi) = (xs[0] - pad, xs[xs.len() - 1] + pad);
    let nodes = 300_000usize;
    ((lo), (hi - lo) / nodes as f64, nodes)
}

#[test]
fn entropy_derivative_matches_finite_difference() {
    let pts = normal_points(10_000, 19);
    for kernel in [KernelId::Epanechnikov, KernelId::Gaussian, KernelId::Uniform] {
        for h in [0.08, 0.15, 0.3] {
            let est = estimate(kernel, h, pts.clone());
            let analytic = kde_entropy_derivative(&est).unwrap();
            let d = 1e-4 * h;
            let (lo, step, nodes) = fixed_lattice_for(&pts, kernel, h + d);
            let sp = entropy_fixed_lattice(kernel, &pts, h + d, lo, step, nodes);
            let sm = entropy_fixed_lattice(kernel, &pts, h - d, lo, step, nodes);
            let fd = (sp - sm) / (2.0 * d);
            assert!(
                (analytic - fd).abs() <= 1e-3 * fd.abs(),
                "{kernel} h={h}: analytic {analytic} vs finite difference {fd}"
            );
        }
    }
}

#[test]
fn derivative_nonnegative_in_monotone_region() {
    // Well past the derivative minimum the entropy keeps growing with h.
    let pts = normal_points(5000, 23);
    for h in [0.5, 1.0, 2.0, 5.0] {
        let est = estimate(KernelId::Epanechnikov, h, pts.clone());
        assert!(kde_entropy_derivative(&est).unwrap() >= 0.0, "h = {h}");
    }
}

#[test]
fn second_derivative_two_point_identity() {
    // Two isolated kernels: the two algebraic routes to -d²S/dh² (direct
    // integrand vs the residual decomposition) must agree to rounding.
    let pts = points_1d(&[0.0, 1.0]);
    let est = estimate(KernelId::Epanechnikov, 0.01, pts);
    let direct = kde_entropy_second_derivative(&est).unwrap();
    let residual = kde_second_derivative_residual(&est).unwrap();
    assert!(
        (residual + direct).abs() < 1e-10 * direct.abs().max(1.0),
        "residual {residual} vs -d²S/dh² {direct}"
    );
}

#[test]
fn second_derivative_matches_finite_difference() {
    let pts = normal_points(10_000, 5);
    for kernel in [KernelId::Epanechnikov, KernelId::Gaussian] {
        for h in [0.1, 0.2, 0.35] {
            let est = estimate(kernel, h, pts.clone());
            let analytic = kde_entropy_second_derivative(&est).unwrap();
            let residual = kde_second_derivative_residual(&est).unwrap();
            // Richardson-extrapolated second difference on a fixed lattice.
            let big = 0.02 * h;
            let (lo, step, nodes) = fixed_lattice_for(&pts, kernel, h + big);
            let s = |hh: f64| entropy_fixed_lattice(kernel, &pts, hh, lo, step, nodes);
            let s0 = s(h);
            let fd2 = |dd: f64| (s(h + dd) - 2.0 * s0 + s(h - dd)) / (dd * dd);
            let fd = (4.0 * fd2(big / 2.0) - fd2(big)) / 3.0;
            assert!(
                (analytic - fd).abs() <= 5e-3 * fd.abs(),
                "{kernel} h={h}: analytic d²S/dh² {analytic} vs FD {fd}"
            );
            assert!(
                (-residual - fd).abs() <= 5e-3 * fd.abs(),
                "{kernel} h={h}: -residual {} vs FD {fd}",
                -residual
            );
        }
    }
}

#[test]
fn second_derivative_rejects_uniform_kernel() {
    let pts = points_1d(&[0.0, 1.0]);
    let est = estimate(KernelId::Uniform, 0.1, pts);
    assert!(kde_entropy_second_derivative(&est).is_err());
    assert!(kde_second_derivative_residual(&est).is_err());
}

#[test]
fn quadrature_3d_entropy_within_budget() {
    let s = AnalyticDistribution::new(DistributionId::Normal3D)
        .sample(2000, 31)
        .unwrap();
    let pts = KdePoints::from_sample(&s).unwrap();
    let est = estimate(KernelId::Epanechnikov, 0.8, pts.clone());
    let quad = kde_entropy(&est, EntropyMethod::Quadrature).unwrap();
    let resub = kde_entropy(&est, EntropyMethod::Resubstitution).unwrap();
    // At this smoothing both are crude but must be in the same
    // neighbourhood of the true value 4.257.
    assert!((quad - resub).abs() < 0.2, "quad {quad} vs resub {resub}");
}

#[test]
fn quadrature_3d_budget_error_names_the_budget() {
    let s = AnalyticDistribution::new(DistributionId::Normal3D)
        .sample(2000, 37)
        .unwrap();
    let pts = KdePoints::from_sample(&s).unwrap();
    let est = estimate(KernelId::Epanechnikov, 1e-4, pts);
    match kde_entropy(&est, EntropyMethod::Quadrature) {
        Err(Error::QuadratureBudget { budget, .. }) => assert_eq!(budget, QUAD_NODE_BUDGET),
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn leave_one_out_variants() {
    // The power law is densely covered on its compact support, so every
    // point keeps neighbors inside the kernel window.
    let s = AnalyticDistribution::new(DistributionId::PowerLaw1D)
        .sample(2000, 41)
        .unwrap();
    let pts = KdePoints::from_sample(&s).unwrap();
    let est = estimate(KernelId::Epanechnikov, 0.05, pts.clone());
    let with_self = kde_entropy(&est, EntropyMethod::Resubstitution).unwrap();
    let loo = kde_entropy(&est, EntropyMethod::ResubstitutionLoo).unwrap();
    // Removing the self-term lowers the density at the sample points.
    assert!(loo > with_self, "loo {loo} vs with-self {with_self}");

    // Isolated points make the leave-one-out density vanish.
    let sparse = points_1d(&[0.0, 10.0, 20.0]);
    let est = estimate(KernelId::Epanechnikov, 0.1, sparse);
    assert!(kde_entropy(&est, EntropyMethod::ResubstitutionLoo).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        // Density is nonnegative and finite everywhere.
        #[test]
        fn density_nonnegative(seed in 0u64..1000, h_exp in -2.0f64..0.7, x in -6.0f64..6.0) {
            let pts = normal_points(200, seed);
            for kernel in KernelId::ALL {
                let est = estimate(kernel, 10f64.powf(h_exp), pts.clone());
                let f = est.density(&[x]);
                prop_assert!(f.is_finite() && f >= 0.0);
            }
        }

        // Resubstitution entropy is invariant under sample order.
        #[test]
        fn resubstitution_order_invariant(seed in 0u64..1000) {
            let dist = AnalyticDistribution::new(DistributionId::Normal1D);
            let s = dist.sample(300, seed).unwrap();
            let mut reversed: Vec<f64> = s.data().to_vec();
            reversed.reverse();
            let a = KdePoints::from_sample(&s).unwrap();
            let b = points_1d(&reversed);
            let ea = estimate(KernelId::Epanechnikov, 0.3, a);
            let eb = estimate(KernelId::Epanechnikov, 0.3, b);
            let sa = kde_entropy(&ea, EntropyMethod::Resubstitution).unwrap();
            let sb = kde_entropy(&eb, EntropyMethod::Resubstitution).unwrap();
            prop_assert!((sa - sb).abs() < 1e-12);
        }
    }
}
