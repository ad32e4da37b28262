//! Uniform-bin d-dimensional histogram density estimation and its closed-form
//! plug-in entropy.
//!
//! Counts live in a sparse map keyed by integer cell indices: 3D grids at
//! small bin widths are huge but mostly empty. The lattice is anchored at the
//! componentwise sample minimum.

use crate::distributions::Sample;
use crate::numeric::KahanSum;
use crate::{invalid, Result};
use serde::Serialize;
use std::collections::HashMap;
use std::hash::{BuildHasher, Hasher};
use std::io::Write;

/// Cell index; only the first `dim` components are used, the rest stay 0.
pub type CellIndex = [i64; 3];

/// Deterministic hasher for cell indices (SplitMix64 finalizer per word).
/// Fixed keys keep map layout — and hence iteration order — identical across
/// runs and platforms for identical insert sequences.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellHashBuilder;

#[derive(Debug, Default)]
pub struct CellHasher(u64);

impl Hasher for CellHasher {
    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(buf));
        }
    }

    #[inline]
    fn write_u64(&mut self, v: u64) {
        let mut z = self.0 ^ v;
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        self.0 = z ^ (z >> 31);
    }

    #[inline]
    fn write_i64(&mut self, v: i64) {
        self.write_u64(v as u64);
    }

    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }
}

impl BuildHasher for CellHashBuilder {
    type Hasher = CellHasher;

    fn build_hasher(&self) -> CellHasher {
        CellHasher::default()
    }
}

pub type CellCounts = HashMap<CellIndex, u64, CellHashBuilder>;

/// A built histogram density estimate: `p̂_c = n_c / (N·Δv^d)` on each
/// occupied cell.
#[derive(Debug, Clone)]
pub struct HistogramEstimate {
    bin_width: f64,
    origin: Vec<f64>,
    counts: CellCounts,
    n: u64,
    dim: usize,
}

/// Bin a sample on the uniform lattice of width `bin_width` anchored at the
/// componentwise sample minimum.
pub fn build_histogram(sample: &Sample, bin_width: f64) -> Result<HistogramEstimate> {
    if !(bin_width > 0.0) {
        return Err(invalid(format!("bin width must be positive, got {bin_width}")));
    }
    if sample.n() == 0 {
        return Err(invalid("cannot build a histogram from an empty sample"));
    }
    let origin = sample.min_per_dim();
    let dim = sample.dim();
    let mut counts = CellCounts::default();
    let mut idx: CellIndex = [0; 3];
    for row in sample.rows() {
        for (j, (&x, &o)) in row.iter().zip(&origin).enumerate() {
            idx[j] = ((x - o) / bin_width).floor() as i64;
        }
        *counts.entry(idx).or_insert(0) += 1;
    }
    Ok(HistogramEstimate {
        bin_width,
        origin,
        counts,
        n: sample.n() as u64,
        dim,
    })
}

impl HistogramEstimate {
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &CellCounts {
        &self.counts
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    /// Total count over all cells; equals `n` for a valid estimate.
    pub fn total_count(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Density at the cell containing `x` (0 for unoccupied cells).
    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let mut idx: CellIndex = [0; 3];
        for (j, (&v, &o)) in x.iter().zip(&self.origin).enumerate() {
            idx[j] = ((v - o) / self.bin_width).floor() as i64;
        }
        let count = self.counts.get(&idx).copied().unwrap_or(0);
        count as f64 / (self.n as f64 * self.bin_width.powi(self.dim as i32))
    }

    /// Merge `factor^d` adjacent cells into one, preserving the origin; the
    /// new bin width is `factor` times the old one.
    pub fn coarsen(&self, factor: u64) -> Result<HistogramEstimate> {
        if factor < 2 {
            return Err(invalid(format!("coarsening factor must be >= 2, got {factor}")));
        }
        let f = factor as i64;
        let mut counts = CellCounts::default();
        for (idx, &c) in &self.counts {
            let mut merged: CellIndex = [0; 3];
            for j in 0..self.dim {
                merged[j] = idx[j].div_euclid(f);
            }
            *counts.entry(merged).or_insert(0) += c;
        }
        Ok(HistogramEstimate {
            bin_width: self.bin_width * factor as f64,
            origin: self.origin.clone(),
            counts,
            n: self.n,
            dim: self.dim,
        })
    }

    /// Cells in lexicographic index order (deterministic view for
    /// serialization and tests).
    pub fn sorted_cells(&self) -> Vec<(CellIndex, u64)> {
        let mut cells: Vec<_> = self.counts.iter().map(|(&i, &c)| (i, c)).collect();
        cells.sort_unstable_by_key(|&(i, _)| i);
        cells
    }

    /// Debug serialization: a JSON header line followed by CSV rows of
    /// (cell index..., count). Not a stability-guaranteed format.
    pub fn write_debug_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::to_string(&HistogramHeader {
            bin_width: self.bin_width,
            origin: &self.origin,
            n: self.n,
            dim: self.dim,
        })
        .expect("header serialization cannot fail");
        writeln!(w, "# {header}")?;
        for (idx, count) in self.sorted_cells() {
            for j in 0..self.dim {
                write!(w, "{},", idx[j])?;
            }
            writeln!(w, "{count}")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct HistogramHeader<'a> {
    bin_width: f64,
    origin: &'a [f64],
    n: u64,
    dim: usize,
}

/// Plug-in entropy of the histogram density in nats:
/// `-Σ_c (n_c/N) ln(n_c/(N·Δv^d))`; empty cells contribute exactly 0.
///
/// Evaluated as the Shannon entropy of the cell masses plus `d·ln Δv`, summed
/// over the multiset of counts so the result does not depend on map order.
pub fn histogram_entropy(h: &HistogramEstimate) -> f64 {
    // Multiplicity of each distinct count value; the entropy is a function
    // of this (small) multiset only.
    let mut mult: HashMap<u64, u64, CellHashBuilder> = HashMap::default();
    for &c in h.counts.values() {
        *mult.entry(c).or_insert(0) += 1;
    }
    let mut pairs: Vec<(u64, u64)> = mult.into_iter().collect();
    pairs.sort_unstable();
    let n = h.n as f64;
    let mut acc = KahanSum::new();
    for (count, m) in pairs {
        let p = count as f64 / n;
        acc.add(-(m as f64) * p * p.ln());
    }
    acc.value() + h.dim as f64 * h.bin_width.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{AnalyticDistribution, DistributionId};

    fn sample_1d(values: &[f64]) -> Sample {
        Sample::from_rows(values.to_vec(), 1, DistributionId::Normal1D, 0).unwrap()
    }

    #[test]
    fn build_bins_directly() {
        let s = sample_1d(&[0.1, 0.9, 1.5]);
        let h = build_histogram(&s, 1.0).unwrap();
        assert_eq!(h.origin(), &[0.1]);
        assert_eq!(h.counts().get(&[0, 0, 0]), Some(&2));
        assert_eq!(h.counts().get(&[1, 0, 0]), Some(&1));
        assert_eq!(h.occupied_cells(), 2);
    }

    #[test]
    fn build_rejects_bad_arguments() {
        let s = sample_1d(&[1.0, 2.0]);
        assert!(build_histogram(&s, 0.0).is_err());
        assert!(build_histogram(&s, -1.0).is_err());
    }

    #[test]
    fn oversized_bin_collapses_to_one_cell() {
        let s = sample_1d(&[0.3, 0.7, 0.1, 0.45]);
        let h = build_histogram(&s, 10.0).unwrap();
        assert_eq!(h.occupied_cells(), 1);
        assert_eq!(h.total_count(), 4);
    }

    #[test]
    fn mass_is_conserved_on_large_sample() {
        let dist = AnalyticDistribution::new(DistributionId::Normal1D);
        let s = dist.sample(10_000, 5).unwrap();
        let h = build_histogram(&s, 0.1).unwrap();
        assert_eq!(h.total_count(), 10_000);
    }

    #[test]
    fn entropy_two_bin_exact_value() {
        // Two cells with masses 2/3 and 1/3 at unit width:
        // S = ln 3 - (2/3) ln 2.
        let s = sample_1d(&[0.1, 0.9, 1.5]);
        let h = build_histogram(&s, 1.0).unwrap();
        let expected = 3.0f64.ln() - 2.0 / 3.0 * 2.0f64.ln();
        assert!((histogram_entropy(&h) - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_single_bin_is_log_width() {
        let s = sample_1d(&[0.0, 0.5, 1.0, 1.4, 0.2]);
        let h = build_histogram(&s, 2.0).unwrap();
        assert!((histogram_entropy(&h) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn coarsen_merges_counts_and_doubles_width() {
        let s = sample_1d(&[0.1, 0.9, 1.5]);
        let h = build_histogram(&s, 1.0).unwrap();
        let c = h.coarsen(2).unwrap();
        assert_eq!(c.bin_width(), 2.0);
        assert_eq!(c.counts().get(&[0, 0, 0]), Some(&3));
        assert_eq!(c.occupied_cells(), 1);
        assert_eq!(c.origin(), h.origin());
        // The worked coarse-graining example: S2 = ln 2 > S1.
        assert!(histogram_entropy(&c) > histogram_entropy(&h));
        assert!((histogram_entropy(&c) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn coarsen_rejects_factor_below_two() {
        let s = sample_1d(&[0.1, 0.9]);
        let h = build_histogram(&s, 1.0).unwrap();
        assert!(h.coarsen(1).is_err());
    }

    #[test]
    fn coarsen_twice_by_two_equals_once_by_four() {
        let dist = AnalyticDistribution::new(DistributionId::Normal3D);
        let s = dist.sample(4000, 17).unwrap();
        let h = build_histogram(&s, 0.05).unwrap();
        let twice = h.coarsen(2).unwrap().coarsen(2).unwrap();
        let once = h.coarsen(4).unwrap();
        assert_eq!(twice.sorted_cells(), once.sorted_cells());
        assert_eq!(twice.bin_width(), once.bin_width());
    }

    #[test]
    fn density_integrates_to_one() {
        let dist = AnalyticDistribution::new(DistributionId::Normal1D);
        let s = dist.sample(5000, 11).unwrap();
        let h = build_histogram(&s, 0.2).unwrap();
        let mass: f64 = h
            .counts()
            .values()
            .map(|&c| c as f64 / (h.n() as f64 * h.bin_width()) * h.bin_width())
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_invariance_on_lattice_data() {
        // Values on an exact binary lattice stay exact under integer shifts,
        // so the binning — and the entropy — must be bit-identical.
        let dist = AnalyticDistribution::new(DistributionId::Normal1D);
        let raw = dist.sample(4000, 23).unwrap();
        let scale = (1u64 << 20) as f64;
        let lattice: Vec<f64> = raw.data().iter().map(|x| (x * scale).round() / scale).collect();
        let shifted: Vec<f64> = lattice.iter().map(|x| x + 3.0).collect();
        let a = build_histogram(&sample_1d(&lattice), 0.125).unwrap();
        let b = build_histogram(&sample_1d(&shifted), 0.125).unwrap();
        assert_eq!(histogram_entropy(&a).to_bits(), histogram_entropy(&b).to_bits());
    }

    #[test]
    fn scaling_covariance_shifts_entropy_by_d_log_lambda() {
        let dist = AnalyticDistribution::new(DistributionId::Normal3D);
        let s = dist.sample(3000, 29).unwrap();
        let h = build_histogram(&s, 0.3).unwrap();
        let lambda = 2.0;
        let scaled_data: Vec<f64> = s.data().iter().map(|x| x * lambda).collect();
        let scaled =
            Sample::from_rows(scaled_data, 3, DistributionId::Normal3D, s.seed()).unwrap();
        let hs = build_histogram(&scaled, 0.3 * lambda).unwrap();
        let expected = histogram_entropy(&h) + 3.0 * lambda.ln();
        assert!((histogram_entropy(&hs) - expected).abs() < 1e-12);
    }

    #[test]
    fn debug_csv_round_trips_header() {
        let s = sample_1d(&[0.1, 0.9, 1.5]);
        let h = build_histogram(&s, 1.0).unwrap();
        let mut buf = Vec::new();
        h.write_debug_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# {"));
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("\"bin_width\":1.0"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            // Coarse-graining can only raise the plug-in entropy
            // (Gibbs/Jensen, exact — tolerance is float slack only).
            #[test]
            fn coarsening_is_monotone(
                seed in 0u64..10_000,
                n in 50usize..600,
                width_exp in -4.0f64..0.5,
                factor in 2u64..6,
                dist_pick in 0usize..3,
            ) {
                let id = DistributionId::ALL[dist_pick];
                let dist = AnalyticDistribution::new(id);
                let sample = dist.sample(n, seed).unwrap();
                let h = build_histogram(&sample, 10f64.powf(width_exp)).unwrap();
                let c = h.coarsen(factor).unwrap();
                prop_assert_eq!(c.total_count(), h.total_count());
                prop_assert!(
                    histogram_entropy(&c) >= histogram_entropy(&h) - 1e-12,
                    "coarsening lowered entropy: {} -> {}",
                    histogram_entropy(&h), histogram_entropy(&c)
                );
            }
        }
    }
}
