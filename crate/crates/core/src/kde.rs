//! Leave-one-out boxcar product-kernel density estimates.
//!
//! All estimators in this crate evaluate kernel densities at the sample
//! points themselves, always excluding the evaluated sample from the sum
//! (leave-one-out, M = N - 1 terms). The kernel is the uniform rectangular
//! product kernel: a point contributes 1 when every requested coordinate
//! lies within h/2 of the evaluation point, else 0. No boundary correction
//! is applied.
//!
//! [`kde_loo`] is the direct O(N) definition for a single point.
//! [`LadderKde`] evaluates several coordinate subsets over a whole ladder
//! of bandwidths in one O(N^2) pass over sample pairs; because the boxcar
//! count at bandwidth h is the number of pairs whose Chebyshev distance on
//! the subset is at most h/2, one sorted threshold search per pair serves
//! every bandwidth at once. Both paths compute each density with the
//! identical floating-point expression, so they agree bitwise.

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Kernel shape selector. Only the uniform rectangular (boxcar) product
/// kernel is implemented: K(u) = 1 iff |u_j| <= 1/2 in every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelShape {
    #[default]
    Boxcar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelSpec {
    pub shape: KernelShape,
}

impl KernelSpec {
    pub const HALF_WIDTH: f64 = 0.5;

    pub fn boxcar() -> Self {
        KernelSpec::default()
    }

    /// Product-kernel weight for a vector of scaled coordinate offsets.
    pub fn weight(&self, scaled_offsets: &[f64]) -> f64 {
        if scaled_offsets.iter().all(|u| u.abs() <= Self::HALF_WIDTH) {
            1.0
        } else {
            0.0
        }
    }
}

/// Lower clamp applied to every KDE factor before it enters a ratio.
///
/// Kernel estimates can be exactly zero at isolated points even when the
/// underlying density is bounded away from zero; clamping keeps every
/// ratio finite and positive. The absolute floor defaults to 1e-12.
///
/// With `resolution_hits` set, a factor is additionally clamped at
/// `hits / (M h^k)` - the value a window holding `hits` kernel points would
/// report. An empty window then behaves like a fractional hit instead of an
/// arbitrarily tiny constant, which keeps the functional's outlier terms at
/// the estimator's own resolution scale. For any tree-derived ratio the
/// all-factors-at-floor identity (ratio exactly 1) holds for the resolution
/// floor as well, because numerator and denominator carry equal total
/// powers of `M`, `h`, and `hits`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityFloor {
    epsilon: f64,
    resolution_hits: Option<f64>,
}

impl DensityFloor {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "density floor must be a positive real, got {epsilon}"
            )));
        }
        Ok(DensityFloor {
            epsilon,
            resolution_hits: None,
        })
    }

    /// Floor tied to the estimator resolution: `hits` kernel hits out of
    /// `M h^k`, with `hits` typically in (0, 1].
    pub fn resolution(hits: f64) -> Result<Self> {
        if !(hits > 0.0) || !hits.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "resolution floor hits must be positive, got {hits}"
            )));
        }
        Ok(DensityFloor {
            epsilon: 1e-12,
            resolution_hits: Some(hits),
        })
    }

    pub fn with_resolution_hits(mut self, hits: f64) -> Result<Self> {
        if !(hits > 0.0) || !hits.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "resolution floor hits must be positive, got {hits}"
            )));
        }
        self.resolution_hits = Some(hits);
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn resolution_hits(&self) -> Option<f64> {
        self.resolution_hits
    }

    /// Floor applied to a KDE factor whose one-kernel-hit value is
    /// `one_hit` (= 1 / (M h^k) for the factor's window).
    #[inline]
    pub fn floor_for(&self, one_hit: f64) -> f64 {
        match self.resolution_hits {
            Some(hits) => self.epsilon.max(hits * one_hit),
            None => self.epsilon,
        }
    }

    /// Clamps a factor given its one-hit value.
    #[inline]
    pub fn clamp(&self, value: f64, one_hit: f64) -> f64 {
        value.max(self.floor_for(one_hit))
    }
}

impl Default for DensityFloor {
    fn default() -> Self {
        DensityFloor {
            epsilon: 1e-12,
            resolution_hits: None,
        }
    }
}

fn check_dims(dims: &[usize], d: usize) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::EmptyDims);
    }
    for (idx, &c) in dims.iter().enumerate() {
        if c >= d || dims[..idx].contains(&c) {
            return Err(Error::BadDims {
                dims: dims.to_vec(),
                d,
            });
        }
    }
    Ok(())
}

/// Leave-one-out boxcar KDE of the coordinates `dims` at sample `j`:
/// `(1 / (M h^k)) * sum_{i != j} K((X_j - X_i) / h)` with `M = N - 1` and
/// `k = |dims|`. The raw value may be zero; flooring happens only when
/// ratios are formed.
pub fn kde_loo(data: &Dataset, dims: &[usize], h: f64, j: usize) -> Result<f64> {
    check_dims(dims, data.dim())?;
    if j >= data.n_samples() {
        return Err(Error::SampleOutOfRange {
            index: j,
            n: data.n_samples(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::BadBandwidth { h });
    }
    let n = data.n_samples();
    let thr = h * KernelSpec::HALF_WIDTH;
    let mut sum = 0.0;
    for i in 0..n {
        if i == j {
            continue;
        }
        let inside = dims
            .iter()
            .all(|&c| (data.value(j, c) - data.value(i, c)).abs() <= thr);
        if inside {
            sum += 1.0;
        }
    }
    let m = (n - 1) as f64;
    Ok(sum / (m * h.powi(dims.len() as i32)))
}

/// Evaluates the floored density ratio of `decomp` at sample `j`, computing
/// every KDE factor with the same bandwidth and kernel.
pub fn ratio_eval(
    data: &Dataset,
    decomp: &crate::structure::RatioDecomposition,
    h: f64,
    j: usize,
    floor: DensityFloor,
) -> Result<f64> {
    if decomp.d() != data.dim() {
        return Err(Error::InvalidConfig(format!(
            "decomposition is for dimension {}, data has {}",
            decomp.d(),
            data.dim()
        )));
    }
    let sets = decomp.column_sets();
    let m = (data.n_samples() - 1) as f64;
    let mut parts = Vec::with_capacity(sets.len());
    let mut one_hits = Vec::with_capacity(sets.len());
    for set in &sets {
        parts.push(kde_loo(data, set, h, j)?);
        one_hits.push(1.0 / (m * h.powi(set.len() as i32)));
    }
    Ok(decomp.combine_parts(&parts, &one_hits, floor))
}

/// Leave-one-out boxcar KDE values for several coordinate subsets over an
/// ascending bandwidth ladder, from a single pass over sample pairs.
pub(crate) struct LadderKde {
    n: usize,
    n_levels: usize,
    /// Per set, per level: `(N - 1) * h^k`, the naive normalizer.
    denoms: Vec<Vec<f64>>,
    /// Per set: n * L cumulative neighbor counts.
    counts: Vec<Vec<u32>>,
}

impl LadderKde {
    /// `bandwidths` must be strictly ascending. Each entry of `sets` is a
    /// distinct coordinate subset, validated against the dataset.
    pub fn build(data: &Dataset, sets: &[Vec<usize>], bandwidths: &[f64]) -> Result<Self> {
        let d = data.dim();
        let n = data.n_samples();
        for set in sets {
            check_dims(set, d)?;
        }
        for (idx, &h) in bandwidths.iter().enumerate() {
            if !(h > 0.0) {
                return Err(Error::BadBandwidth { h });
            }
            if idx > 0 && bandwidths[idx - 1] >= h {
                return Err(Error::InvalidConfig(
                    "bandwidth ladder must be strictly ascending".into(),
                ));
            }
        }
        let levels = bandwidths.len();
        let thresholds: Vec<f64> = bandwidths
            .iter()
            .map(|&h| h * KernelSpec::HALF_WIDTH)
            .collect();

        // Contiguous copies of every referenced column.
        let mut union_cols: Vec<usize> = Vec::new();
        for set in sets {
            for &c in set {
                if !union_cols.contains(&c) {
                    union_cols.push(c);
                }
            }
        }
        let col_data: Vec<Vec<f64>> = union_cols.iter().map(|&c| data.column(c)).collect();
        let set_slots: Vec<Vec<usize>> = sets
            .iter()
            .map(|set| {
                set.iter()
                    .map(|c| union_cols.iter().position(|u| u == c).unwrap())
                    .collect()
            })
            .collect();

        let mut counts: Vec<Vec<u32>> = sets.iter().map(|_| vec![0u32; n * levels]).collect();
        let mut diffs = vec![0.0f64; union_cols.len()];
        let mut xj = vec![0.0f64; union_cols.len()];
        for j in 1..n {
            for (slot, col) in col_data.iter().enumerate() {
                xj[slot] = col[j];
            }
            for i in 0..j {
                for (slot, col) in col_data.iter().enumerate() {
                    diffs[slot] = (xj[slot] - col[i]).abs();
                }
                for (s, slots) in set_slots.iter().enumerate() {
                    let mut dist = 0.0f64;
                    for &slot in slots {
                        dist = dist.max(diffs[slot]);
                    }
                    // First ladder level whose window reaches this pair;
                    // the comparison is the exact kernel boundary test.
                    let t = thresholds.partition_point(|&thr| thr < dist);
                    if t < levels {
                        counts[s][i * levels + t] += 1;
                        counts[s][j * levels + t] += 1;
                    }
                }
            }
        }
        for c in counts.iter_mut() {
            for j in 0..n {
                let row = &mut c[j * levels..(j + 1) * levels];
                for t in 1..levels {
                    row[t] += row[t - 1];
                }
            }
        }
        let m = (n - 1) as f64;
        let denoms: Vec<Vec<f64>> = sets
            .iter()
            .map(|set| {
                bandwidths
                    .iter()
                    .map(|&h| m * h.powi(set.len() as i32))
                    .collect()
            })
            .collect();
        Ok(LadderKde {
            n,
            n_levels: levels,
            denoms,
            counts,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// KDE value of subset `set` at sample `j` and ladder level `t`.
    #[inline]
    pub fn value(&self, set: usize, j: usize, t: usize) -> f64 {
        self.counts[set][j * self.n_levels + t] as f64 / self.denoms[set][t]
    }

    /// Value a single kernel hit would report for subset `set` at level `t`.
    #[inline]
    pub fn one_hit(&self, set: usize, t: usize) -> f64 {
        1.0 / self.denoms[set][t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{FactorTree, RatioDecomposition};
    use proptest::prelude::*;

    fn ds(rows: Vec<Vec<f64>>) -> Dataset {
        let d = rows[0].len();
        Dataset::from_rows(rows, Dataset::default_names(d)).unwrap()
    }

    #[test]
    fn coincident_points_hand_value() {
        let data = ds(vec![vec![0.3], vec![0.3], vec![0.3]]);
        assert_eq!(kde_loo(&data, &[0], 1.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn isolated_point_is_zero_before_flooring() {
        let data = ds(vec![vec![0.0], vec![10.0], vec![10.2]]);
        assert_eq!(kde_loo(&data, &[0], 1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn equispaced_grid_matches_uniform_density() {
        let n = 10_001usize;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let data = ds(rows);
        let v = kde_loo(&data, &[0], 0.1, n / 2).unwrap();
        assert!((v - 1.0).abs() < 0.02, "got {v}");
    }

    #[test]
    fn leave_one_out_with_two_samples_sees_only_the_other() {
        let near = ds(vec![vec![0.0], vec![0.3]]);
        let far = ds(vec![vec![0.0], vec![0.9]]);
        assert_eq!(kde_loo(&near, &[0], 1.0, 0).unwrap(), 1.0);
        assert_eq!(kde_loo(&far, &[0], 1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn permutation_of_other_samples_is_irrelevant() {
        let a = ds(vec![vec![0.0], vec![0.1], vec![0.4], vec![0.2]]);
        let b = ds(vec![vec![0.0], vec![0.2], vec![0.1], vec![0.4]]);
        assert_eq!(
            kde_loo(&a, &[0], 0.5, 0).unwrap(),
            kde_loo(&b, &[0], 0.5, 0).unwrap()
        );
    }

    #[test]
    fn input_validation() {
        let data = ds(vec![vec![0.0, 1.0], vec![1.0, 2.0]]);
        assert!(matches!(kde_loo(&data, &[], 1.0, 0), Err(Error::EmptyDims)));
        assert!(matches!(
            kde_loo(&data, &[0, 0], 1.0, 0),
            Err(Error::BadDims { .. })
        ));
        assert!(matches!(
            kde_loo(&data, &[2], 1.0, 0),
            Err(Error::BadDims { .. })
        ));
        assert!(matches!(
            kde_loo(&data, &[0], 1.0, 5),
            Err(Error::SampleOutOfRange { .. })
        ));
        assert!(matches!(
            kde_loo(&data, &[0], 0.0, 0),
            Err(Error::BadBandwidth { .. })
        ));
    }

    fn hand_triplet() -> Dataset {
        ds(vec![
            vec![0.0, 0.0, 0.0],
            vec![0.1, 0.1, 0.1],
            vec![0.2, 0.2, 0.2],
        ])
    }

    #[test]
    fn chain_ratio_on_hand_triplet_is_one_everywhere() {
        // Every kernel term is 1 at h = 0.5: pair KDEs are 4, marginals 2,
        // and the full joint is 8, so the chain ratio is (4*4)/(2*8) = 1.
        let data = hand_triplet();
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let decomp = RatioDecomposition::from_tree(&tree);
        for j in 0..3 {
            assert_eq!(kde_loo(&data, &[0, 1], 0.5, j).unwrap(), 4.0);
            assert_eq!(kde_loo(&data, &[0], 0.5, j).unwrap(), 2.0);
            assert_eq!(kde_loo(&data, &[0, 1, 2], 0.5, j).unwrap(), 8.0);
            let r = ratio_eval(&data, &decomp, 0.5, j, DensityFloor::default()).unwrap();
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn chain_ratio_matches_termwise_product() {
        let data = ds(vec![
            vec![0.05, -0.3, 0.6],
            vec![0.15, 0.2, 0.35],
            vec![-0.4, 0.1, 0.5],
            vec![0.3, -0.1, 0.45],
            vec![0.0, 0.0, 0.55],
        ]);
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let decomp = RatioDecomposition::from_tree(&tree);
        let floor = DensityFloor::default();
        let h: f64 = 0.7;
        let m = (data.n_samples() - 1) as f64;
        for j in 0..data.n_samples() {
            let oh2 = 1.0 / (m * h.powi(2));
            let oh1 = 1.0 / (m * h.powi(1));
            let oh3 = 1.0 / (m * h.powi(3));
            let p01 = floor.clamp(kde_loo(&data, &[0, 1], h, j).unwrap(), oh2);
            let p12 = floor.clamp(kde_loo(&data, &[1, 2], h, j).unwrap(), oh2);
            let p1 = floor.clamp(kde_loo(&data, &[1], h, j).unwrap(), oh1);
            let pfull = floor.clamp(kde_loo(&data, &[0, 1, 2], h, j).unwrap(), oh3);
            let expected = p01 * p12 / (pfull * p1);
            let got = ratio_eval(&data, &decomp, h, j, floor).unwrap();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn all_factors_at_floor_gives_ratio_one() {
        // Isolated evaluation point: every raw KDE is 0, every clamped
        // factor equals epsilon, and the tree ratio telescopes to exactly 1.
        let data = ds(vec![
            vec![0.0, 0.0, 0.0],
            vec![100.0, 100.0, 100.0],
            vec![200.0, 200.0, 200.0],
        ]);
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let decomp = RatioDecomposition::from_tree(&tree);
        let r = ratio_eval(&data, &decomp, 0.5, 0, DensityFloor::default()).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn pairwise_ratio_is_marginals_over_joint() {
        let data = ds(vec![
            vec![0.1, 0.4],
            vec![0.2, 0.1],
            vec![0.3, 0.2],
            vec![0.15, 0.35],
        ]);
        let decomp = RatioDecomposition::pairwise(0, 1, 2).unwrap();
        let floor = DensityFloor::default();
        let h: f64 = 0.6;
        let m = (data.n_samples() - 1) as f64;
        for j in 0..data.n_samples() {
            let oh1 = 1.0 / (m * h.powi(1));
            let oh2 = 1.0 / (m * h.powi(2));
            let p0 = floor.clamp(kde_loo(&data, &[0], h, j).unwrap(), oh1);
            let p1 = floor.clamp(kde_loo(&data, &[1], h, j).unwrap(), oh1);
            let p01 = floor.clamp(kde_loo(&data, &[0, 1], h, j).unwrap(), oh2);
            assert_eq!(
                ratio_eval(&data, &decomp, h, j, floor).unwrap(),
                p0 * p1 / p01
            );
        }
    }

    #[test]
    fn monte_carlo_mean_is_near_one_on_uniform_data() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(7, 0).rng();
        let n = 5000;
        for dims in [1usize, 2] {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dims).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let data = ds(rows);
            let h = if dims == 1 { 0.1 } else { 0.05 };
            let all: Vec<usize> = (0..dims).collect();
            let mean = (0..n)
                .map(|j| kde_loo(&data, &all, h, j).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!((mean - 1.0).abs() < 0.05, "dims {dims}: mean {mean}");
        }
    }

    #[test]
    fn ladder_matches_naive_bitwise() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(11, 3).rng();
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let data = ds(rows);
        let sets: Vec<Vec<usize>> = vec![vec![0], vec![1], vec![0, 1], vec![0, 1, 2]];
        let ladder_h: Vec<f64> = (1..=8).map(|i| 0.15 * i as f64).collect();
        let ladder = LadderKde::build(&data, &sets, &ladder_h).unwrap();
        for (s, set) in sets.iter().enumerate() {
            for (t, &h) in ladder_h.iter().enumerate() {
                for j in 0..n {
                    let naive = kde_loo(&data, set, h, j).unwrap();
                    let fast = ladder.value(s, j, t);
                    assert!(
                        naive.to_bits() == fast.to_bits(),
                        "set {set:?} h {h} j {j}: {naive} vs {fast}"
                    );
                }
            }
        }
    }

    #[test]
    fn ladder_handles_exact_boundary_ties() {
        // Points exactly h/2 apart are inside the window on both paths.
        let data = ds(vec![vec![0.0], vec![0.25], vec![0.5]]);
        let ladder = LadderKde::build(&data, &[vec![0]], &[0.5, 1.0]).unwrap();
        for (t, h) in [(0usize, 0.5), (1usize, 1.0)] {
            for j in 0..3 {
                assert_eq!(
                    ladder.value(0, j, t).to_bits(),
                    kde_loo(&data, &[0], h, j).unwrap().to_bits()
                );
            }
        }
    }

    proptest! {
        // Boxcar homogeneity: scaling data and bandwidth by a power of two
        // divides the density by c^k exactly.
        #[test]
        fn scaling_property(seed in 0u64..1000, c_pow in -2i32..4) {
            use rand::Rng;
            let c = 2f64.powi(c_pow);
            let mut rng = crate::rng::RngStream::new(seed, 0).rng();
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let scaled_rows: Vec<Vec<f64>> =
                rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let data = ds(rows);
            let scaled = ds(scaled_rows);
            let h = 0.4;
            for j in 0..data.n_samples() {
                let base = kde_loo(&data, &[0, 1], h, j).unwrap();
                let scl = kde_loo(&scaled, &[0, 1], h * c, j).unwrap();
                prop_assert_eq!(scl.to_bits(), (base / (c * c)).to_bits());
            }
        }

        #[test]
        fn ladder_equals_naive_on_random_ladders(seed in 0u64..300) {
            use rand::Rng;
            let mut rng = crate::rng::RngStream::new(seed, 1).rng();
            let n = 25;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let data = ds(rows);
            let mut hs: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..2.0)).collect();
            hs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            hs.dedup();
            let sets = vec![vec![0usize], vec![0usize, 1]];
            let ladder = LadderKde::build(&data, &sets, &hs).unwrap();
            for (s, set) in sets.iter().enumerate() {
                for (t, &h) in hs.iter().enumerate() {
                    for j in 0..n {
                        let a = kde_loo(&data, set, h, j).unwrap();
                        prop_assert_eq!(a.to_bits(), ladder.value(s, j, t).to_bits());
                    }
                }
            }
        }
    }
}
