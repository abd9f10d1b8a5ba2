//! Bootstrap sampling statistics, Gaussian p-values, false-discovery-rate
//! control, and the two structure-testing procedures.
//!
//! The standardized ensemble estimate is asymptotically standard normal, so
//! p-values come from centering the point estimate at the theoretical null
//! value and scaling by the bootstrap variance. The bootstrap mean is
//! reported as a diagnostic but never used for centering.
//!
//! Test sidedness: for Renyi with alpha in (0, 1) the population integral
//! is at most 1, with equality exactly under the null, so the natural test
//! is one-sided from below. The same holds for the Shannon model-fit
//! functional (a negated KL divergence against null 0). Pairwise Shannon MI
//! is tested two-sided by default. Explicit sidedness overrides are
//! available on every entry point.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ensemble::{ensemble_estimate, ensemble_estimates_multi, EnsembleConfig};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::kde::DensityFloor;
use crate::rng::RngStream;
use crate::structure::{FactorTree, RatioDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    LowerOneSided,
    TwoSided,
}

/// Default sidedness for a functional and target kind.
pub fn default_sidedness(f: &Functional, pairwise: bool) -> Sidedness {
    match (f, pairwise) {
        (Functional::Shannon, true) => Sidedness::TwoSided,
        _ => Sidedness::LowerOneSided,
    }
}

/// Point estimate with bootstrap statistics and its hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub boot_mean: f64,
    pub boot_var: f64,
    pub n_boot: usize,
    pub p_value: f64,
    pub null_value: f64,
    pub sidedness: Sidedness,
}

/// Standard normal CDF.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Gaussian p-value for `estimate` against `null` with variance `var`.
///
/// With zero variance the test degenerates: 1 when the estimate equals the
/// null to machine tolerance, 0 otherwise.
pub fn p_value(estimate: f64, null: f64, var: f64, sidedness: Sidedness) -> f64 {
    debug_assert!(var >= 0.0);
    if var <= 0.0 {
        let tol = 1e-12 * (1.0 + null.abs());
        return if (estimate - null).abs() <= tol { 1.0 } else { 0.0 };
    }
    let z = (estimate - null) / var.sqrt();
    match sidedness {
        Sidedness::LowerOneSided => standard_normal_cdf(z),
        Sidedness::TwoSided => 2.0 * (1.0 - standard_normal_cdf(z.abs())),
    }
}

/// Bootstrap mean and sample variance of an arbitrary estimator under
/// row resampling with replacement.
///
/// Replicate `r` draws its indices from `rng.substream(r)`, so results are
/// reproducible and independent of evaluation order.
pub fn bootstrap_stats_with<F>(
    data: &Dataset,
    n_boot: usize,
    rng: RngStream,
    estimator: F,
) -> Result<(f64, f64)>
where
    F: Fn(&Dataset) -> Result<f64>,
{
    if n_boot < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 bootstrap replicates, got {n_boot}"
        )));
    }
    let n = data.n_samples();
    let mut values = Vec::with_capacity(n_boot);
    for r in 0..n_boot {
        let resampled = data.select_rows(&resample_indices(n, rng.substream(r as u64)));
        values.push(estimator(&resampled)?);
    }
    Ok(mean_and_var(&values))
}

fn resample_indices(n: usize, stream: RngStream) -> Vec<usize> {
    use rand::Rng;
    let mut rng = stream.rng();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let var = values
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum::<f64>()
        / (b - 1.0);
    (mean, var)
}

/// Bootstrap mean and variance of the full ensemble estimate of `target`.
pub fn bootstrap_stats(
    data: &Dataset,
    target: &RatioDecomposition,
    f: &Functional,
    cfg: &EnsembleConfig,
    n_boot: usize,
    rng: RngStream,
    floor: DensityFloor,
) -> Result<(f64, f64)> {
    bootstrap_stats_with(data, n_boot, rng, |resampled| {
        Ok(ensemble_estimate(resampled, target, f, cfg, floor)?.estimate)
    })
}

/// Benjamini-Hochberg step-up rejection at level `gamma_level`.
///
/// Returns the sorted indices of rejected hypotheses: with ascending order
/// statistics `p_(1) <= ... <= p_(m)`, the largest k with
/// `p_(k) <= gamma * k / m` sets the threshold and everything at or below
/// `p_(k)` is rejected.
pub fn bh_fdr(p_values: &[f64], gamma_level: f64) -> Result<Vec<usize>> {
    if p_values.is_empty() {
        return Err(Error::InvalidConfig("no p-values to test".into()));
    }
    if !(gamma_level > 0.0 && gamma_level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "significance level must lie in (0, 1), got {gamma_level}"
        )));
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::BadProbability { p });
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut threshold: Option<f64> = None;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let bound = gamma_level * (rank + 1) as f64 / m as f64;
        if p_values[idx] <= bound {
            threshold = Some(p_values[idx]);
            break;
        }
    }
    Ok(match threshold {
        Some(t) => {
            let mut rejected: Vec<usize> = (0..m).filter(|&i| p_values[i] <= t).collect();
            rejected.sort_unstable();
            rejected
        }
        None => Vec::new(),
    })
}

/// One tested variable pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePairResult {
    pub i: usize,
    pub k: usize,
    pub result: EstimateResult,
    pub rejected: bool,
}

/// Outcome of testing every variable pair for dependence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTestReport {
    d: usize,
    pub pairs: Vec<EdgePairResult>,
    pub gamma_level: f64,
    /// Plug-in estimate of the false discovery rate actually incurred at
    /// the applied threshold: m * p_(k) / k, 0 when nothing is rejected.
    pub fdr_estimate: f64,
}

impl EdgeTestReport {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rejected_edges(&self) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .filter(|p| p.rejected)
            .map(|p| (p.i, p.k))
            .collect()
    }

    /// Symmetric d x d matrix of p-values; diagonal entries are unused and
    /// set to 1.
    pub fn p_matrix(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![1.0; self.d]; self.d];
        for p in &self.pairs {
            m[p.i][p.k] = p.result.p_value;
            m[p.k][p.i] = p.result.p_value;
        }
        m
    }

    /// CSV report, one row per pair, with 1-based variable indices.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("pair_i,pair_k,estimate,boot_mean,boot_var,p_value,rejected\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.i + 1,
                p.k + 1,
                p.result.estimate,
                p.result.boot_mean,
                p.result.boot_var,
                p.result.p_value,
                p.rejected
            ));
        }
        std::fs::write(path, out).map_err(|source| Error::FileWrite {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Tests every pair of variables for dependence and controls the false
/// discovery rate over the pair family.
///
/// Every pair's ensemble estimate, and each bootstrap replicate, share one
/// pass over the data; replicate `r` of the bootstrap reuses the same
/// resampled rows for all pairs.
pub fn pairwise_edge_test(
    data: &Dataset,
    f: &Functional,
    cfg: &EnsembleConfig,
    gamma_level: f64,
    n_boot: usize,
    rng: RngStream,
    floor: DensityFloor,
) -> Result<EdgeTestReport> {
    let d = data.dim();
    if d < 2 {
        return Err(Error::TooFewVariables { d });
    }
    if n_boot < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 bootstrap replicates, got {n_boot}"
        )));
    }
    if !(gamma_level > 0.0 && gamma_level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "significance level must lie in (0, 1), got {gamma_level}"
        )));
    }
    let mut targets = Vec::new();
    for i in 0..d {
        for k in (i + 1)..d {
            targets.push(RatioDecomposition::pairwise(i, k, d)?);
        }
    }
    let target_refs: Vec<&RatioDecomposition> = targets.iter().collect();
    let points = ensemble_estimates_multi(data, &target_refs, f, cfg, floor)?;

    let n = data.n_samples();
    let n_pairs = targets.len();
    let mut replicate_values: Vec<Vec<f64>> = vec![Vec::with_capacity(n_boot); n_pairs];
    for r in 0..n_boot {
        let resampled = data.select_rows(&resample_indices(n, rng.substream(r as u64)));
        let ests = ensemble_estimates_multi(&resampled, &target_refs, f, cfg, floor)?;
        for (pair_idx, est) in ests.iter().enumerate() {
            replicate_values[pair_idx].push(est.estimate);
        }
    }

    let sidedness = default_sidedness(f, true);
    let null = f.null_value();
    let mut results: Vec<EstimateResult> = Vec::with_capacity(n_pairs);
    for pair_idx in 0..n_pairs {
        let (boot_mean, boot_var) = mean_and_var(&replicate_values[pair_idx]);
        let estimate = points[pair_idx].estimate;
        results.push(EstimateResult {
            estimate,
            boot_mean,
            boot_var,
            n_boot,
            p_value: p_value(estimate, null, boot_var, sidedness),
            null_value: null,
            sidedness,
        });
    }
    let p_values: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let rejected = bh_fdr(&p_values, gamma_level)?;
    let fdr_estimate = if rejected.is_empty() {
        0.0
    } else {
        let threshold = rejected
            .iter()
            .map(|&i| p_values[i])
            .fold(0.0f64, f64::max);
        (p_values.len() as f64 * threshold / rejected.len() as f64).min(1.0)
    };

    let mut pairs = Vec::with_capacity(n_pairs);
    let mut idx = 0;
    for i in 0..d {
        for k in (i + 1)..d {
            pairs.push(EdgePairResult {
                i,
                k,
                result: results[idx],
                rejected: rejected.contains(&idx),
            });
            idx += 1;
        }
    }
    Ok(EdgeTestReport {
        d,
        pairs,
        gamma_level,
        fdr_estimate,
    })
}

/// Tests how well a dependence tree's factorization fits the joint
/// distribution. High p-values mean no evidence against the tree.
pub fn model_fit_test(
    data: &Dataset,
    tree: &FactorTree,
    f: &Functional,
    cfg: &EnsembleConfig,
    n_boot: usize,
    rng: RngStream,
    floor: DensityFloor,
) -> Result<EstimateResult> {
    if tree.d() != data.dim() {
        return Err(Error::InvalidTree(format!(
            "tree is over {} variables, data has {}",
            tree.d(),
            data.dim()
        )));
    }
    let target = RatioDecomposition::from_tree(tree);
    let estimate = ensemble_estimate(data, &target, f, cfg, floor)?.estimate;
    let (boot_mean, boot_var) = bootstrap_stats(data, &target, f, cfg, n_boot, rng, floor)?;
    let sidedness = default_sidedness(f, false);
    let null = f.null_value();
    Ok(EstimateResult {
        estimate,
        boot_mean,
        boot_var,
        n_boot,
        p_value: p_value(estimate, null, boot_var, sidedness),
        null_value: null,
        sidedness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EstimatorVariant;

    #[test]
    fn p_value_at_null_is_half() {
        assert!((p_value(1.0, 1.0, 0.04, Sidedness::LowerOneSided) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn p_value_matches_normal_quantile() {
        let var = 0.09f64;
        let est = 1.0 - 1.6449 * var.sqrt();
        let p = p_value(est, 1.0, var, Sidedness::LowerOneSided);
        assert!((p - 0.05).abs() < 1e-4, "got {p}");
    }

    #[test]
    fn p_value_degenerate_variance() {
        assert_eq!(p_value(0.5, 1.0, 0.0, Sidedness::LowerOneSided), 0.0);
        assert_eq!(p_value(1.0, 1.0, 0.0, Sidedness::LowerOneSided), 1.0);
        assert_eq!(p_value(1.0 + 1e-15, 1.0, 0.0, Sidedness::TwoSided), 1.0);
    }

    #[test]
    fn p_value_monotone_in_estimate() {
        let mut prev = -1.0;
        for i in 0..100 {
            let est = -2.0 + 0.05 * i as f64;
            let p = p_value(est, 0.0, 1.0, Sidedness::LowerOneSided);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn bh_hand_example() {
        let rejected = bh_fdr(&[0.01, 0.2, 0.9], 0.1).unwrap();
        assert_eq!(rejected, vec![0]);
    }

    #[test]
    fn bh_extremes() {
        assert!(bh_fdr(&[1.0, 1.0, 1.0], 0.1).unwrap().is_empty());
        assert_eq!(bh_fdr(&[0.0, 0.0, 0.0], 0.1).unwrap(), vec![0, 1, 2]);
        assert!(matches!(
            bh_fdr(&[0.5, 1.2], 0.1),
            Err(Error::BadProbability { .. })
        ));
    }

    #[test]
    fn bh_single_pvalue_reduces_to_threshold_test() {
        assert_eq!(bh_fdr(&[0.09], 0.1).unwrap(), vec![0]);
        assert!(bh_fdr(&[0.11], 0.1).unwrap().is_empty());
    }

    #[test]
    fn bh_monotone_in_gamma() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(31, 0).rng();
        for _ in 0..50 {
            let ps: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
            let lo = bh_fdr(&ps, 0.05).unwrap();
            let hi = bh_fdr(&ps, 0.2).unwrap();
            for idx in &lo {
                assert!(hi.contains(idx), "rejection lost when level increased");
            }
        }
    }

    #[test]
    fn bootstrap_of_sample_mean_matches_clt_variance() {
        use rand_distr::{Distribution, Normal};
        let n = 400;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = crate::rng::RngStream::new(17, 0).rng();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![normal.sample(&mut rng)]).collect();
        let data = Dataset::from_rows(rows, vec!["v".into()]).unwrap();
        let (_, var) = bootstrap_stats_with(&data, 200, RngStream::new(5, 1), |d| {
            Ok((0..d.n_samples()).map(|j| d.value(j, 0)).sum::<f64>() / d.n_samples() as f64)
        })
        .unwrap();
        let clt = 1.0 / n as f64;
        assert!(var > 0.5 * clt && var < 2.0 * clt, "var {var} vs CLT {clt}");
    }

    #[test]
    fn bootstrap_of_constant_data_has_zero_variance() {
        let data = Dataset::from_rows(
            vec![vec![3.0, 1.0]; 20],
            Dataset::default_names(2),
        )
        .unwrap();
        let (mean, var) = bootstrap_stats_with(&data, 50, RngStream::new(1, 0), |d| {
            Ok(d.value(0, 0) + d.value(1, 1))
        })
        .unwrap();
        assert_eq!(var, 0.0);
        assert_eq!(mean, 4.0);
    }

    #[test]
    fn bootstrap_is_deterministic_per_stream() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(23, 0).rng();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(-1.0..1.0)])
            .collect();
        let data = Dataset::from_rows(rows, vec!["v".into()]).unwrap();
        let est = |d: &Dataset| Ok(d.column(0).iter().sum::<f64>() / d.n_samples() as f64);
        let a = bootstrap_stats_with(&data, 60, RngStream::new(9, 4), est).unwrap();
        let b = bootstrap_stats_with(&data, 60, RngStream::new(9, 4), est).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        let c = bootstrap_stats_with(&data, 60, RngStream::new(9, 5), est).unwrap();
        assert_ne!(a.0.to_bits(), c.0.to_bits());
    }

    #[test]
    fn edge_test_bootstrap_matches_standalone_bootstrap() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(41, 0).rng();
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let data = Dataset::from_rows(rows, Dataset::default_names(2)).unwrap();
        let f = Functional::renyi(0.5).unwrap();
        let cfg = EnsembleConfig::new(EstimatorVariant::Odin1Pairwise)
            .with_l_set(EnsembleConfig::l_range(1.0, 3.0, 8).unwrap());
        let floor = DensityFloor::default();
        let stream = RngStream::new(3, 9);
        let report = pairwise_edge_test(&data, &f, &cfg, 0.1, 25, stream, floor).unwrap();
        let target = RatioDecomposition::pairwise(0, 1, 2).unwrap();
        let (mean, var) = bootstrap_stats(&data, &target, &f, &cfg, 25, stream, floor).unwrap();
        assert_eq!(report.pairs[0].result.boot_mean.to_bits(), mean.to_bits());
        assert_eq!(report.pairs[0].result.boot_var.to_bits(), var.to_bits());
    }

    #[test]
    fn model_fit_on_degenerate_resamples_stays_finite() {
        // Coincident triplet: every ratio is 1, bootstrap variance is 0,
        // and the p-value must take the degenerate branch.
        let data = Dataset::from_rows(
            vec![
                vec![0.0, 0.0, 0.0],
                vec![0.1, 0.1, 0.1],
                vec![0.2, 0.2, 0.2],
            ],
            Dataset::default_names(3),
        )
        .unwrap();
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let f = Functional::renyi(0.5).unwrap();
        let cfg = EnsembleConfig::plugin(0.5);
        let res = model_fit_test(
            &data,
            &tree,
            &f,
            &cfg,
            20,
            RngStream::new(2, 2),
            DensityFloor::default(),
        )
        .unwrap();
        assert_eq!(res.estimate, 1.0);
        assert_eq!(res.p_value, 1.0);
    }
}
