//! The analytic experimental distributions: exact densities, exact entropies,
//! seeded samplers and the roughness functionals used by the reference
//! selectors.

use crate::numeric::{derivative_roughness, KahanSum};
use crate::{invalid, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Identifier of one of the built-in analytic distributions. The string
/// forms `"normal1d"`, `"powerlaw1d"` and `"normal3d"` are used everywhere
/// (CLI, CSV, config files).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionId {
    #[serde(rename = "normal1d")]
    Normal1D,
    #[serde(rename = "powerlaw1d")]
    PowerLaw1D,
    #[serde(rename = "normal3d")]
    Normal3D,
}

impl DistributionId {
    pub const ALL: [DistributionId; 3] = [
        DistributionId::Normal1D,
        DistributionId::PowerLaw1D,
        DistributionId::Normal3D,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistributionId::Normal1D => "normal1d",
            DistributionId::PowerLaw1D => "powerlaw1d",
            DistributionId::Normal3D => "normal3d",
        }
    }
}

impl std::fmt::Display for DistributionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DistributionId {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal1d" => Ok(DistributionId::Normal1D),
            "powerlaw1d" => Ok(DistributionId::PowerLaw1D),
            "normal3d" => Ok(DistributionId::Normal3D),
            other => Err(invalid(format!(
                "unknown distribution {other:?}; valid ids: normal1d, powerlaw1d, normal3d"
            ))),
        }
    }
}

const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// An analytic PDF with known entropy, an exact sampler, and the roughness
/// functionals `R(f')`, `R(f'')` needed by the Scott and AMISE formulas.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticDistribution {
    id: DistributionId,
    dim: usize,
    /// Per-dimension support interval (±∞ for unbounded dimensions).
    support: (f64, f64),
    /// Reference entropy in nats, stored to the published four digits.
    exact_entropy: f64,
}

impl AnalyticDistribution {
    pub fn new(id: DistributionId) -> Self {
        match id {
            DistributionId::Normal1D => Self {
                id,
                dim: 1,
                support: (f64::NEG_INFINITY, f64::INFINITY),
                exact_entropy: 1.419,
            },
            DistributionId::PowerLaw1D => Self {
                id,
                dim: 1,
                support: (-0.75, 0.75),
                exact_entropy: 0.2804,
            },
            DistributionId::Normal3D => Self {
                id,
                dim: 3,
                support: (f64::NEG_INFINITY, f64::INFINITY),
                exact_entropy: 4.257,
            },
        }
    }

    pub fn id(&self) -> DistributionId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support interval shared by every dimension.
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Density at `v` (length must equal [`Self::dim`]); zero outside the
    /// support.
    pub fn pdf(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim, "pdf called with wrong dimension");
        match self.id {
            DistributionId::Normal1D => INV_SQRT_2PI * (-0.5 * v[0] * v[0]).exp(),
            DistributionId::PowerLaw1D => {
                let x = v[0];
                if x.abs() < 0.75 {
                    1.0 - 16.0 / 9.0 * x * x
                } else {
                    0.0
                }
            }
            DistributionId::Normal3D => {
                let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                (2.0 * PI).powf(-1.5) * (-0.5 * r2).exp()
            }
        }
    }

    /// Scalar density for the one-dimensional distributions.
    pub fn pdf1(&self, v: f64) -> f64 {
        self.pdf(std::slice::from_ref(&v))
    }

    /// Reference entropy `S_th` in nats (four published digits).
    pub fn exact_entropy(&self) -> f64 {
        self.exact_entropy
    }

    /// `-∫ F ln F` evaluated by quadrature at full floating-point precision;
    /// the stored [`Self::exact_entropy`] must agree with this within 5e-4.
    pub fn entropy_by_quadrature(&self) -> f64 {
        match self.id {
            DistributionId::Normal1D => crate::numeric::trapezoid_converged(
                |x| {
                    let f = self.pdf1(x);
                    if f > 0.0 {
                        -f * f.ln()
                    } else {
                        0.0
                    }
                },
                -12.0,
                12.0,
                1e-12,
            ),
            DistributionId::PowerLaw1D => crate::numeric::trapezoid_converged(
                |x| {
                    let f = self.pdf1(x);
                    if f > 0.0 {
                        -f * f.ln()
                    } else {
                        0.0
                    }
                },
                -0.75,
                0.75,
                1e-12,
            ),
            // Isotropic: -∫ F ln F d³v = -∫_0^∞ 4πr² F(r) ln F(r) dr.
            DistributionId::Normal3D => crate::numeric::trapezoid_converged(
                |r| {
                    let f = (2.0 * PI).powf(-1.5) * (-0.5 * r * r).exp();
                    -4.0 * PI * r * r * f * f.ln()
                },
                0.0,
                14.0,
                1e-12,
            ),
        }
    }

    /// The one-dimensional radial profile of the 3D normal,
    /// `√(2/π) v² exp(-v²/2)` on `v > 0`. `None` for the 1D distributions.
    /// Exposed for validation and for the 3D roughness functionals.
    pub fn reduced_radial_pdf(&self, v: f64) -> Option<f64> {
        match self.id {
            DistributionId::Normal3D => Some(if v > 0.0 {
                (2.0 / PI).sqrt() * v * v * (-0.5 * v * v).exp()
            } else {
                0.0
            }),
            _ => None,
        }
    }

    /// `R(f') = ∫ f'(x)² dx` of the analytic density (of the reduced radial
    /// profile for the 3D normal), by numerical differentiation plus
    /// quadrature.
    pub fn roughness_fprime(&self) -> f64 {
        self.roughness(1)
    }

    /// `R(f'') = ∫ f''(x)² dx`, same conventions as [`Self::roughness_fprime`].
    pub fn roughness_fsecond(&self) -> f64 {
        self.roughness(2)
    }

    fn roughness(&self, order: u32) -> f64 {
        match self.id {
            DistributionId::Normal1D => {
                derivative_roughness(|x| self.pdf1(x), -12.0, 12.0, order)
            }
            DistributionId::PowerLaw1D => {
                derivative_roughness(|x| self.pdf1(x), -0.75, 0.75, order)
            }
            DistributionId::Normal3D => derivative_roughness(
                |x| self.reduced_radial_pdf(x).unwrap(),
                0.0,
                14.0,
                order,
            ),
        }
    }

    /// Draw `n` i.i.d. rows. Deterministic: the stream is ChaCha8 seeded with
    /// `seed`, uniforms take the high 53 bits of each 64-bit word, normals go
    /// through the Box-Muller transform, and the power law is rejection
    /// sampled under the uniform envelope of height 1 on (-3/4, 3/4).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = match self.id {
            DistributionId::Normal1D => standard_normals(&mut rng, n),
            DistributionId::Normal3D => standard_normals(&mut rng, 3 * n),
            DistributionId::PowerLaw1D => {
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    let v = -0.75 + 1.5 * uniform01(&mut rng);
                    let y = uniform01(&mut rng);
                    if y < self.pdf1(v) {
                        out.push(v);
                    }
                }
                out
            }
        };
        Ok(Sample {
            data,
            dim: self.dim,
            distribution_id: self.id,
            seed,
        })
    }
}

impl From<DistributionId> for AnalyticDistribution {
    fn from(id: DistributionId) -> Self {
        AnalyticDistribution::new(id)
    }
}

#[inline]
fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    // High 53 bits over [0, 1); identical on every platform.
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn standard_normals(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u1 = 1.0 - uniform01(rng); // (0, 1], keeps ln finite
        let u2 = uniform01(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        out.push(r * c);
        if out.len() < count {
            out.push(r * s);
        }
    }
    out
}

/// A seeded draw from one of the analytic distributions, stored row-major
/// (`n` rows of `dim` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    dim: usize,
    distribution_id: DistributionId,
    seed: u64,
}

impl Sample {
    /// Wrap externally produced rows (e.g. parsed from a sample file).
    pub fn from_rows(
        data: Vec<f64>,
        dim: usize,
        distribution_id: DistributionId,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(invalid(format!(
                "sample data length {} is not a positive multiple of dim {}",
                data.len(),
                dim
            )));
        }
        Ok(Self {
            data,
            dim,
            distribution_id,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distribution_id(&self) -> DistributionId {
        self.distribution_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Componentwise minimum over all rows.
    pub fn min_per_dim(&self) -> Vec<f64> {
        let mut min = vec![f64::INFINITY; self.dim];
        for row in self.rows() {
            for (m, &x) in min.iter_mut().zip(row) {
                if x < *m {
                    *m = x;
                }
            }
        }
        min
    }

    /// Componentwise maximum over all rows.
    pub fn max_per_dim(&self) -> Vec<f64> {
        let mut max = vec![f64::NEG_INFINITY; self.dim];
        for row in self.rows() {
            for (m, &x) in max.iter_mut().zip(row) {
                if x > *m {
                    *m = x;
                }
            }
        }
        max
    }

    /// Largest per-dimension extent (max - min over any single dimension).
    pub fn extent(&self) -> f64 {
        let min = self.min_per_dim();
        let max = self.max_per_dim();
        min.iter()
            .zip(&max)
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    pub fn mean_per_dim(&self) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); self.dim];
        for row in self.rows() {
            for (a, &x) in acc.iter_mut().zip(row) {
                a.add(x);
            }
        }
        let n = self.n() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pdf_reference_values() {
        let normal = AnalyticDistribution::new(DistributionId::Normal1D);
        assert_relative_eq!(normal.pdf1(0.0), 0.3989422804014327, max_relative = 1e-12);

        let power = AnalyticDistribution::new(DistributionId::PowerLaw1D);
        assert_eq!(power.pdf1(0.75), 0.0);
        assert_eq!(power.pdf1(-0.75), 0.0);
        assert_relative_eq!(power.pdf1(0.0), 1.0, max_relative = 1e-15);

        let normal3 = AnalyticDistribution::new(DistributionId::Normal3D);
        assert_relative_eq!(
            normal3.pdf(&[0.0, 0.0, 0.0]),
            0.06349363593424097,
            max_relative = 1e-10
        );
    }

    #[test]
    fn pdf_zero_outside_support() {
        let power = AnalyticDistribution::new(DistributionId::PowerLaw1D);
        assert_eq!(power.pdf1(0.76), 0.0);
        assert_eq!(power.pdf1(-5.0), 0.0);
    }

    #[test]
    fn stored_entropies_match_quadrature() {
        for id in DistributionId::ALL {
            let dist = AnalyticDistribution::new(id);
            let by_quad = dist.entropy_by_quadrature();
            assert!(
                (dist.exact_entropy() - by_quad).abs() < 5e-4,
                "{id}: stored {} vs quadrature {by_quad}",
                dist.exact_entropy()
            );
        }
    }

    #[test]
    fn normal_entropy_closed_form() {
        let dist = AnalyticDistribution::new(DistributionId::Normal1D);
        let closed = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((dist.exact_entropy() - closed).abs() < 5e-4);
        assert_relative_eq!(dist.entropy_by_quadrature(), closed, max_relative = 1e-9);
    }

    #[test]
    fn normal3d_entropy_closed_form() {
        let dist = AnalyticDistribution::new(DistributionId::Normal3D);
        let closed = 1.5 * (2.0 * PI * std::f64::consts::E).ln();
        assert_relative_eq!(dist.entropy_by_quadrature(), closed, max_relative = 1e-9);
    }

    #[test]
    fn pdf_normalization_1d() {
        for id in [DistributionId::Normal1D, DistributionId::PowerLaw1D] {
            let dist = AnalyticDistribution::new(id);
            let (lo, hi) = match id {
                DistributionId::PowerLaw1D => (-0.75, 0.75),
                _ => (-12.0, 12.0),
            };
            let mass = crate::numeric::trapezoid_converged(|x| dist.pdf1(x), lo, hi, 1e-13);
            assert!((mass - 1.0).abs() < 1e-10, "{id}: mass {mass}");
        }
    }

    #[test]
    fn pdf_normalization_3d_product_quadrature() {
        let dist = AnalyticDistribution::new(DistributionId::Normal3D);
        // Product trapezoid over [-8, 8]³; separability keeps this cheap to
        // verify at full 3D indexing.
        let n = 160;
        let (lo, hi) = (-8.0, 8.0);
        let step = (hi - lo) / n as f64;
        let mut mass = KahanSum::new();
        for i in 0..=n {
            let wi = if i == 0 || i == n { 0.5 } else { 1.0 };
            let x = lo + step * i as f64;
            for j in 0..=n {
                let wj = if j == 0 || j == n { 0.5 } else { 1.0 };
                let y = lo + step * j as f64;
                for k in 0..=n {
                    let wk = if k == 0 || k == n { 0.5 } else { 1.0 };
                    let z = lo + step * k as f64;
                    mass.add(wi * wj * wk * dist.pdf(&[x, y, z]));
                }
            }
        }
        let mass = mass.value() * step * step * step;
        assert!((mass - 1.0).abs() < 1e-6, "3D mass {mass}");
    }

    #[test]
    fn reduced_radial_profile_is_normalized() {
        let dist = AnalyticDistribution::new(DistributionId::Normal3D);
        let mass = crate::numeric::trapezoid_converged(
            |v| dist.reduced_radial_pdf(v).unwrap(),
            0.0,
            14.0,
            1e-12,
        );
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(AnalyticDistribution::new(DistributionId::Normal1D)
            .reduced_radial_pdf(1.0)
            .is_none());
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        for id in DistributionId::ALL {
            let dist = AnalyticDistribution::new(id);
            let a = dist.sample(2000, 99).unwrap();
            let b = dist.sample(2000, 99).unwrap();
            assert_eq!(a.data(), b.data(), "{id}: not bit-identical");
            let (lo, hi) = dist.support();
            for row in a.rows() {
                for &x in row {
                    assert!(x > lo && x < hi, "{id}: draw {x} outside support");
                }
            }
        }
    }

    #[test]
    fn sample_zero_size_is_an_error() {
        let dist = AnalyticDistribution::new(DistributionId::Normal1D);
        assert!(dist.sample(0, 1).is_err());
    }

    #[test]
    fn normal_sample_mean_is_clt_consistent() {
        let dist = AnalyticDistribution::new(DistributionId::Normal1D);
        let n = 100_000;
        let sample = dist.sample(n, 7).unwrap();
        let mean = sample.mean_per_dim()[0];
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn powerlaw_sample_variance_matches_quadrature_oracle() {
        // Oracle: ∫ v² F(v) dv over (-3/4, 3/4), evaluated independently.
        let dist = AnalyticDistribution::new(DistributionId::PowerLaw1D);
        let oracle =
            crate::numeric::trapezoid_converged(|v| v * v * dist.pdf1(v), -0.75, 0.75, 1e-12);
        assert_relative_eq!(oracle, 9.0 / 80.0, max_relative = 1e-9);

        let sample = dist.sample(1_000_000, 3).unwrap();
        let mean = sample.mean_per_dim()[0];
        let mut acc = KahanSum::new();
        for row in sample.rows() {
            let d = row[0] - mean;
            acc.add(d * d);
        }
        let var = acc.value() / (sample.n() as f64 - 1.0);
        assert!((var - oracle).abs() / oracle < 0.01, "variance {var}");
    }

    #[test]
    fn kolmogorov_smirnov_1d_samplers() {
        let n = 1_000_000usize;
        let bound = 4.0 / (n as f64).sqrt();
        for id in [DistributionId::Normal1D, DistributionId::PowerLaw1D] {
            let dist = AnalyticDistribution::new(id);
            let sample = dist.sample(n, 123).unwrap();
            let mut xs: Vec<f64> = sample.data().to_vec();
            xs.sort_unstable_by(f64::total_cmp);
            let cdf = |x: f64| -> f64 {
                match id {
                    DistributionId::Normal1D => crate::numeric::standard_normal_cdf(x),
                    DistributionId::PowerLaw1D => x - 16.0 / 27.0 * x.powi(3) + 0.5,
                    DistributionId::Normal3D => unreachable!(),
                }
            };
            let mut ks = 0.0f64;
            for (i, &x) in xs.iter().enumerate() {
                let c = cdf(x);
                let hi = (i + 1) as f64 / n as f64 - c;
                let lo = c - i as f64 / n as f64;
                ks = ks.max(hi.max(lo));
            }
            assert!(ks < bound, "{id}: KS statistic {ks} >= {bound}");
        }
    }

    #[test]
    fn roughness_closed_form_oracles() {
        let sqrt_pi = PI.sqrt();
        let normal = AnalyticDistribution::new(DistributionId::Normal1D);
        assert_relative_eq!(
            normal.roughness_fprime(),
            1.0 / (4.0 * sqrt_pi),
            max_relative = 1e-6
        );
        assert_relative_eq!(
            normal.roughness_fsecond(),
            3.0 / (8.0 * sqrt_pi),
            max_relative = 1e-5
        );

        // Polynomial oracle: f' = -32v/9 on (-3/4, 3/4) → R(f') = 32/9.
        let power = AnalyticDistribution::new(DistributionId::PowerLaw1D);
        assert_relative_eq!(power.roughness_fprime(), 32.0 / 9.0, max_relative = 1e-6);
        // f'' = -32/9 constant → R(f'') = (32/9)² · 3/2.
        assert_relative_eq!(
            power.roughness_fsecond(),
            (32.0f64 / 9.0).powi(2) * 1.5,
            max_relative = 1e-4
        );
    }

    #[test]
    fn radial_roughness_is_stable() {
        let dist = AnalyticDistribution::new(DistributionId::Normal3D);
        let r1 = dist.roughness_fprime();
        // Independent check against direct quadrature of the analytic
        // derivative of √(2/π) v² e^(-v²/2).
        let deriv = |v: f64| (2.0 / PI).sqrt() * (2.0 * v - v.powi(3)) * (-0.5 * v * v).exp();
        let oracle = crate::numeric::trapezoid_converged(|v| deriv(v) * deriv(v), 0.0, 14.0, 1e-12);
        assert_relative_eq!(r1, oracle, max_relative = 1e-6);
    }
}
