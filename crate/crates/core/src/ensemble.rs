//! Plug-in estimators and their bias-cancelling weighted ensembles.
//!
//! A plug-in estimate is the sample average of the functional evaluated at
//! leave-one-out KDE density ratios. Its bias expands in powers of the
//! bandwidth, so averaging plug-in estimates over a ladder of bandwidths
//! `h(l)` with weights chosen to annihilate the basis functions `psi(l)` of
//! that expansion cancels the slowly-decaying bias terms while keeping the
//! variance at the O(1/N) scale. The weight vector solves
//!
//! ```text
//!     min ||w||_2   s.t.  sum_l w(l) = 1,   |sum_l w(l) psi_r(l)| <= tau
//! ```
//!
//! with `tau = 0` in exact mode (minimum-norm equality solve) or a small
//! positive bound in relaxed mode (small convex QP), which trades a little
//! residual bias for smaller weights and hence smaller variance.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::kde::{DensityFloor, LadderKde};
use crate::qp;
use crate::structure::RatioDecomposition;

/// Estimator family. `Plugin` is a single fixed-bandwidth plug-in estimate
/// (the ensemble machinery with one member and weight 1); the ODin variants
/// differ in their bandwidth schedules and bias bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorVariant {
    /// Single plug-in estimate; `l` is interpreted directly as the bandwidth.
    Plugin,
    /// Pairwise-MI ensemble: h(l) = l N^(-1/4), basis {l, l^2}.
    Odin1Pairwise,
    /// Full-ratio ensemble: h(l) = l N^(-1/(2d)), basis {l^m : 1 <= m <= s}.
    Odin1Full { s_smoothness: u32 },
    /// Full-ratio ensemble using the finer bias expansion:
    /// h(l) = l N^(-1/(d+delta)) with the two-family exponent basis.
    Odin2Full { delta: f64 },
}

impl EstimatorVariant {
    pub fn odin1_full_for_dim(d: usize) -> Self {
        EstimatorVariant::Odin1Full {
            s_smoothness: d.max(1) as u32,
        }
    }

    pub fn odin2_default() -> Self {
        EstimatorVariant::Odin2Full { delta: 1.0 }
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorVariant::Plugin => "plugin".into(),
            EstimatorVariant::Odin1Pairwise => "odin1_pairwise".into(),
            EstimatorVariant::Odin1Full { s_smoothness } => format!("odin1_full(s={s_smoothness})"),
            EstimatorVariant::Odin2Full { delta } => format!("odin2_full(delta={delta})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Exact,
    Relaxed,
}

/// Full specification of one ensemble estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub variant: EstimatorVariant,
    /// Bandwidth parameters; distinct positive reals.
    pub l_set: Vec<f64>,
    pub weight_mode: WeightMode,
    /// Relaxed-mode bound tau; `None` resolves to 1/sqrt(N).
    pub relax_bound: Option<f64>,
    pub solver_tolerance: f64,
}

impl EnsembleConfig {
    /// Default ladder: 50 values equispaced on [1, 3].
    pub fn default_l_set() -> Vec<f64> {
        Self::l_range(1.0, 3.0, 50).unwrap()
    }

    pub fn l_range(l_min: f64, l_max: f64, count: usize) -> Result<Vec<f64>> {
        if count == 0 || !(l_min > 0.0) || !(l_max >= l_min) || (count > 1 && l_max == l_min) {
            return Err(Error::InvalidConfig(format!(
                "bad bandwidth-parameter range [{l_min}, {l_max}] with {count} points"
            )));
        }
        if count == 1 {
            return Ok(vec![l_min]);
        }
        let step = (l_max - l_min) / (count - 1) as f64;
        Ok((0..count).map(|i| l_min + step * i as f64).collect())
    }

    pub fn new(variant: EstimatorVariant) -> Self {
        EnsembleConfig {
            variant,
            l_set: Self::default_l_set(),
            weight_mode: WeightMode::Exact,
            relax_bound: None,
            solver_tolerance: 1e-8,
        }
    }

    /// Single-bandwidth plug-in configuration at bandwidth `h`.
    pub fn plugin(h: f64) -> Self {
        EnsembleConfig {
            variant: EstimatorVariant::Plugin,
            l_set: vec![h],
            weight_mode: WeightMode::Exact,
            relax_bound: None,
            solver_tolerance: 1e-8,
        }
    }

    pub fn with_l_set(mut self, l_set: Vec<f64>) -> Self {
        self.l_set = l_set;
        self
    }

    pub fn with_weight_mode(mut self, mode: WeightMode, tau: Option<f64>) -> Self {
        self.weight_mode = mode;
        self.relax_bound = tau;
        self
    }

    pub fn resolved_tau(&self, n: usize) -> f64 {
        self.relax_bound.unwrap_or(1.0 / (n as f64).sqrt())
    }

    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::TooFewRows { found: n });
        }
        if self.l_set.is_empty() {
            return Err(Error::InvalidConfig("empty bandwidth-parameter set".into()));
        }
        for &l in &self.l_set {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "bandwidth parameters must be positive, got {l}"
                )));
            }
        }
        let mut sorted = self.l_set.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "bandwidth parameters must be distinct".into(),
            ));
        }
        if !(self.solver_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "solver tolerance must be positive".into(),
            ));
        }
        let basis = basis_functions(&self.variant, d)?;
        match self.weight_mode {
            WeightMode::Exact => {
                if self.l_set.len() < basis.len() + 1 {
                    return Err(Error::InvalidConfig(format!(
                        "exact mode needs at least {} bandwidth parameters for {} basis functions, got {}",
                        basis.len() + 1,
                        basis.len(),
                        self.l_set.len()
                    )));
                }
            }
            WeightMode::Relaxed => {
                if let Some(tau) = self.relax_bound {
                    if !(tau >= 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "relaxation bound must be non-negative, got {tau}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Bandwidth for parameter `l` under a variant's schedule.
pub fn bandwidth_schedule(variant: &EstimatorVariant, n: usize, d: usize, l: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewRows { found: n });
    }
    if !(l > 0.0) {
        return Err(Error::BadBandwidth { h: l });
    }
    let nf = n as f64;
    Ok(match variant {
        EstimatorVariant::Plugin => l,
        EstimatorVariant::Odin1Pairwise => l * nf.powf(-0.25),
        EstimatorVariant::Odin1Full { .. } => l * nf.powf(-1.0 / (2.0 * d as f64)),
        EstimatorVariant::Odin2Full { delta } => l * nf.powf(-1.0 / (d as f64 + delta)),
    })
}

/// One basis function `l -> l^exponent` with the index pair that produced
/// it in the bias expansion, and the sample-size decay rate of the bias
/// term it cancels: under the variant's schedule the term behaves as
/// `psi(l) * N^(-rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisFunction {
    pub exponent: i32,
    pub family: u8,
    pub m: u32,
    pub q: u32,
    pub rate: f64,
}

impl BasisFunction {
    #[inline]
    pub fn evaluate(&self, l: f64) -> f64 {
        l.powi(self.exponent)
    }
}

/// Bias-expansion basis for a variant at data dimension `d`, deduplicated
/// by exponent with exponent 0 excluded (it would duplicate the sum-to-one
/// constraint).
pub fn basis_functions(variant: &EstimatorVariant, d: usize) -> Result<Vec<BasisFunction>> {
    let mut raw: Vec<BasisFunction> = Vec::new();
    match *variant {
        EstimatorVariant::Plugin => {}
        EstimatorVariant::Odin1Pairwise => {
            for m in 1..=2u32 {
                raw.push(BasisFunction {
                    exponent: m as i32,
                    family: 1,
                    m,
                    q: 0,
                    rate: m as f64 / 4.0,
                });
            }
        }
        EstimatorVariant::Odin1Full { s_smoothness } => {
            if s_smoothness == 0 {
                return Err(Error::InvalidConfig(
                    "smoothness order must be at least 1".into(),
                ));
            }
            for m in 1..=s_smoothness {
                raw.push(BasisFunction {
                    exponent: m as i32,
                    family: 1,
                    m,
                    q: 0,
                    rate: m as f64 / (2.0 * d as f64),
                });
            }
        }
        EstimatorVariant::Odin2Full { delta } => {
            if !(delta > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "delta must be positive, got {delta}"
                )));
            }
            let dd = d as f64 + delta;
            if dd <= 2.0 {
                return Err(Error::DegenerateBasis(format!(
                    "d + delta = {dd} must exceed 2"
                )));
            }
            let m_max = (dd / 2.0).floor() as u32;
            let q1_max = (dd / delta).floor() as u32;
            for m in 0..=m_max {
                for q in 0..=q1_max {
                    if m + q == 0 {
                        continue;
                    }
                    // h^m / (N h^d)^q with h = l N^(-1/(d+delta)).
                    raw.push(BasisFunction {
                        exponent: m as i32 - (d as i32) * q as i32,
                        family: 1,
                        m,
                        q,
                        rate: (m as f64 + delta * q as f64) / dd,
                    });
                }
            }
            let q2_max = ((dd / (2.0 * (dd - 2.0))).floor() as u32).max(1);
            for m in 0..=m_max {
                for q in 1..=q2_max {
                    // h^m / (N h^2)^q under the same schedule.
                    raw.push(BasisFunction {
                        exponent: m as i32 - 2 * q as i32,
                        family: 2,
                        m,
                        q,
                        rate: (m as f64 + (dd - 2.0) * q as f64) / dd,
                    });
                }
            }
        }
    }
    // Deduplicate by exponent, keeping the slowest-decaying generator: its
    // bias term dominates the others sharing the same l-dependence.
    let mut out: Vec<BasisFunction> = Vec::new();
    for bf in raw {
        if bf.exponent == 0 {
            continue;
        }
        match out.iter_mut().find(|o| o.exponent == bf.exponent) {
            Some(existing) => {
                if bf.rate < existing.rate {
                    *existing = bf;
                }
            }
            None => out.push(bf),
        }
    }
    out.sort_by(|a, b| b.exponent.cmp(&a.exponent));
    Ok(out)
}

/// Solved ensemble weights with their achieved constraint residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    norm2: f64,
    residuals: Vec<f64>,
    sum_error: f64,
}

impl WeightVector {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    /// Achieved |sum_l w(l) psi_r(l)| per basis function.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn sum_error(&self) -> f64 {
        self.sum_error
    }
}

/// Solves the weight optimization for `l_set` against `basis`.
///
/// Exact mode returns the minimum-norm solution with every constraint at
/// zero; relaxed mode allows each bias constraint a residual up to `tau`.
/// `tau = 0` in relaxed mode coincides with exact mode.
pub fn solve_weights(
    l_set: &[f64],
    basis: &[BasisFunction],
    mode: WeightMode,
    tau: f64,
    solver_tolerance: f64,
) -> Result<WeightVector> {
    let exact = matches!(mode, WeightMode::Exact) || tau == 0.0;
    if !exact && !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "relaxation bound must be non-negative, got {tau}"
        )));
    }
    let bounds = if exact {
        None
    } else {
        Some(vec![tau; basis.len()])
    };
    solve_weights_bounded(l_set, basis, bounds.as_deref(), mode, solver_tolerance)
}

/// Weight solve with an explicit per-constraint bound vector (`None` means
/// exact mode). Bounds are imposed on row-rescaled constraints, which keeps
/// the solver stable when basis functions differ in magnitude by orders of
/// magnitude.
fn solve_weights_bounded(
    l_set: &[f64],
    basis: &[BasisFunction],
    bounds: Option<&[f64]>,
    mode: WeightMode,
    solver_tolerance: f64,
) -> Result<WeightVector> {
    let l_count = l_set.len();
    if l_count == 0 {
        return Err(Error::InvalidConfig("empty bandwidth-parameter set".into()));
    }
    let psi = DMatrix::from_fn(basis.len(), l_count, |r, c| basis[r].evaluate(l_set[c]));
    let w = match bounds {
        None => {
            if matches!(mode, WeightMode::Exact) && l_count < basis.len() + 1 {
                return Err(Error::InvalidConfig(format!(
                    "exact mode needs at least {} parameters, got {l_count}",
                    basis.len() + 1
                )));
            }
            let mut a = DMatrix::zeros(basis.len() + 1, l_count);
            let mut b = DVector::zeros(basis.len() + 1);
            for c in 0..l_count {
                a[(0, c)] = 1.0;
            }
            b[0] = 1.0;
            for r in 0..basis.len() {
                for c in 0..l_count {
                    a[(r + 1, c)] = psi[(r, c)];
                }
            }
            qp::min_norm_solve(&a, &b, solver_tolerance)?
        }
        Some(bounds) => {
            if bounds.len() != basis.len() {
                return Err(Error::InvalidConfig("bound count mismatch".into()));
            }
            if bounds.iter().any(|b| !(*b > 0.0)) {
                return Err(Error::InvalidConfig(
                    "relaxation bounds must be positive".into(),
                ));
            }
            // |psi_r . w| <= b_r  <=>  |(psi_r / b_r) . w| <= 1.
            let scaled = DMatrix::from_fn(basis.len(), l_count, |r, c| psi[(r, c)] / bounds[r]);
            qp::solve_relaxed(&scaled, 1.0, 1e-9)?
        }
    };

    let weights: Vec<f64> = w.iter().copied().collect();
    let sum_error = (weights.iter().sum::<f64>() - 1.0).abs();
    let residuals: Vec<f64> = (0..basis.len())
        .map(|r| {
            (0..l_count)
                .map(|c| weights[c] * psi[(r, c)])
                .sum::<f64>()
                .abs()
        })
        .collect();
    if sum_error > 1e-10 {
        return Err(Error::SolverFailure(format!(
            "weights sum deviates from 1 by {sum_error:e}"
        )));
    }
    for (r, residual) in residuals.iter().enumerate() {
        let bound = match bounds {
            None => solver_tolerance,
            Some(bounds) => bounds[r] * (1.0 + 1e-6) + solver_tolerance,
        };
        if *residual > bound {
            return Err(Error::SolverFailure(format!(
                "constraint {r} residual {residual:e} exceeds bound {bound:e}"
            )));
        }
    }
    let norm2 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    Ok(WeightVector {
        weights,
        norm2,
        residuals,
        sum_error,
    })
}

#[derive(PartialEq, Eq, Hash)]
struct WeightKey {
    variant_tag: u8,
    s: u32,
    delta_bits: u64,
    d: usize,
    l_bits: Vec<u64>,
    mode_exact: bool,
    tau_bits: u64,
    tol_bits: u64,
}

static WEIGHT_CACHE: Lazy<Mutex<HashMap<WeightKey, Arc<WeightVector>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Weights for a configuration, solved once per (variant, l_set, d, N) and
/// cached.
fn cached_weights(cfg: &EnsembleConfig, n: usize, d: usize) -> Result<Arc<WeightVector>> {
    let tau = cfg.resolved_tau(n);
    let (variant_tag, s, delta_bits) = match cfg.variant {
        EstimatorVariant::Plugin => (0u8, 0u32, 0u64),
        EstimatorVariant::Odin1Pairwise => (1, 0, 0),
        EstimatorVariant::Odin1Full { s_smoothness } => (2, s_smoothness, 0),
        EstimatorVariant::Odin2Full { delta } => (3, 0, delta.to_bits()),
    };
    let key = WeightKey {
        variant_tag,
        s,
        delta_bits,
        d,
        l_bits: cfg.l_set.iter().map(|l| l.to_bits()).collect(),
        mode_exact: matches!(cfg.weight_mode, WeightMode::Exact),
        tau_bits: tau.to_bits(),
        tol_bits: cfg.solver_tolerance.to_bits(),
    };
    if let Some(hit) = WEIGHT_CACHE.lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let basis = basis_functions(&cfg.variant, d)?;
    let exact = matches!(cfg.weight_mode, WeightMode::Exact) || tau == 0.0;
    let solved = if exact {
        solve_weights(&cfg.l_set, &basis, cfg.weight_mode, tau, cfg.solver_tolerance)?
    } else {
        // Bias terms decay at different powers of N; a constraint only needs
        // to hold at the scale its own term contributes. Bounding constraint
        // r at tau * N^rate_r keeps every residual bias contribution at the
        // tau * N^(-rate) * N^rate = tau noise scale while avoiding the
        // ill-posed uniform bound on fast-decaying terms. For the single-rate
        // bases this reduces to mildly loosened bounds; for the wide
        // two-family basis it is what makes the weight problem well-posed.
        let bounds: Vec<f64> = match cfg.variant {
            EstimatorVariant::Odin2Full { .. } => basis
                .iter()
                .map(|bf| tau * (n as f64).powf(bf.rate))
                .collect(),
            _ => vec![tau; basis.len()],
        };
        solve_weights_bounded(&cfg.l_set, &basis, Some(&bounds), cfg.weight_mode, cfg.solver_tolerance)?
    };
    let solved = Arc::new(solved);
    WEIGHT_CACHE
        .lock()
        .unwrap()
        .insert(key, solved.clone());
    Ok(solved)
}

/// One ensemble member's bandwidth parameter, bandwidth, and plug-in value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMember {
    pub l: f64,
    pub h: f64,
    pub value: f64,
}

/// Weighted ensemble estimate with full diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub estimate: f64,
    pub weights: WeightVector,
    pub members: Vec<EnsembleMember>,
}

fn check_target(data: &Dataset, target: &RatioDecomposition) -> Result<()> {
    if target.d() != data.dim() {
        return Err(Error::InvalidConfig(format!(
            "target is for dimension {}, data has {}",
            target.d(),
            data.dim()
        )));
    }
    Ok(())
}

/// Mean of `g` over the floored density ratios at every sample, for every
/// ladder level, oriented so that pairwise Shannon values are conventional
/// (non-negative) mutual information.
fn member_means(
    ladder: &LadderKde,
    target: &RatioDecomposition,
    set_indices: &[usize],
    levels: usize,
    f: &Functional,
    floor: DensityFloor,
) -> Vec<f64> {
    let n = ladder.n_samples();
    let flip = target.is_pairwise() && matches!(f, Functional::Shannon);
    let mut parts = vec![0.0f64; set_indices.len()];
    let mut one_hits = vec![0.0f64; set_indices.len()];
    let mut out = Vec::with_capacity(levels);
    for t in 0..levels {
        for (slot, &s) in set_indices.iter().enumerate() {
            one_hits[slot] = ladder.one_hit(s, t);
        }
        let mut acc = 0.0f64;
        for j in 0..n {
            for (slot, &s) in set_indices.iter().enumerate() {
                parts[slot] = ladder.value(s, j, t);
            }
            let ratio = target.combine_parts(&parts, &one_hits, floor);
            acc += f.eval_unchecked(ratio);
        }
        let mean = acc / n as f64;
        out.push(if flip { -mean } else { mean });
    }
    out
}

/// Single fixed-bandwidth plug-in estimate of a target functional.
pub fn plugin_estimate(
    data: &Dataset,
    target: &RatioDecomposition,
    f: &Functional,
    h: f64,
    floor: DensityFloor,
) -> Result<f64> {
    check_target(data, target)?;
    if !(h > 0.0) {
        return Err(Error::BadBandwidth { h });
    }
    let sets = target.column_sets();
    let ladder = LadderKde::build(data, &sets, &[h])?;
    let indices: Vec<usize> = (0..sets.len()).collect();
    Ok(member_means(&ladder, target, &indices, 1, f, floor)[0])
}

/// Weighted ensemble estimate of one target.
pub fn ensemble_estimate(
    data: &Dataset,
    target: &RatioDecomposition,
    f: &Functional,
    cfg: &EnsembleConfig,
    floor: DensityFloor,
) -> Result<EnsembleEstimate> {
    let mut all = ensemble_estimates_multi(data, &[target], f, cfg, floor)?;
    Ok(all.pop().unwrap())
}

/// Ensemble estimates of several targets over the same data, sharing one
/// pass over sample pairs for all KDE factor sets. Estimates are
/// bitwise-identical to evaluating each target separately.
pub(crate) fn ensemble_estimates_multi(
    data: &Dataset,
    targets: &[&RatioDecomposition],
    f: &Functional,
    cfg: &EnsembleConfig,
    floor: DensityFloor,
) -> Result<Vec<EnsembleEstimate>> {
    let n = data.n_samples();
    let d = data.dim();
    cfg.validate(n, d)?;
    for target in targets {
        check_target(data, target)?;
    }
    let weights = cached_weights(cfg, n, d)?;
    let hs: Vec<f64> = cfg
        .l_set
        .iter()
        .map(|&l| bandwidth_schedule(&cfg.variant, n, d, l))
        .collect::<Result<_>>()?;

    // Ladder levels ascend in h; members keep l_set order.
    let mut order: Vec<usize> = (0..hs.len()).collect();
    order.sort_by(|&a, &b| hs[a].partial_cmp(&hs[b]).unwrap());
    let ladder_h: Vec<f64> = order.iter().map(|&i| hs[i]).collect();
    let mut slot_of_member = vec![0usize; hs.len()];
    for (slot, &member) in order.iter().enumerate() {
        slot_of_member[member] = slot;
    }

    // Union of all targets' column sets, deduplicated.
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut target_sets: Vec<Vec<usize>> = Vec::with_capacity(targets.len());
    for target in targets {
        let mut indices = Vec::new();
        for set in target.column_sets() {
            let idx = match sets.iter().position(|s| *s == set) {
                Some(i) => i,
                None => {
                    sets.push(set);
                    sets.len() - 1
                }
            };
            indices.push(idx);
        }
        target_sets.push(indices);
    }
    let ladder = LadderKde::build(data, &sets, &ladder_h)?;

    let mut results = Vec::with_capacity(targets.len());
    for (t_idx, target) in targets.iter().enumerate() {
        let by_level = member_means(
            &ladder,
            target,
            &target_sets[t_idx],
            ladder_h.len(),
            f,
            floor,
        );
        let mut members = Vec::with_capacity(hs.len());
        let mut estimate = 0.0f64;
        for (i, (&l, &h)) in cfg.l_set.iter().zip(hs.iter()).enumerate() {
            let value = by_level[slot_of_member[i]];
            estimate += weights.weights()[i] * value;
            members.push(EnsembleMember { l, h, value });
        }
        results.push(EnsembleEstimate {
            estimate,
            weights: (*weights).clone(),
            members,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{FactorTree, RatioDecomposition};

    #[test]
    fn schedule_arithmetic() {
        let h = bandwidth_schedule(&EstimatorVariant::Odin1Pairwise, 16, 2, 2.0).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
        let h = bandwidth_schedule(&EstimatorVariant::Odin1Full { s_smoothness: 2 }, 16, 2, 1.0)
            .unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        let h = bandwidth_schedule(&EstimatorVariant::Odin2Full { delta: 1.0 }, 16, 3, 1.0).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        let h = bandwidth_schedule(&EstimatorVariant::Plugin, 1000, 5, 0.37).unwrap();
        assert_eq!(h, 0.37);
    }

    #[test]
    fn odin1_bases() {
        let b = basis_functions(&EstimatorVariant::Odin1Pairwise, 2).unwrap();
        let exps: Vec<i32> = b.iter().map(|bf| bf.exponent).collect();
        assert_eq!(exps, vec![2, 1]);
        let b = basis_functions(&EstimatorVariant::Odin1Full { s_smoothness: 3 }, 3).unwrap();
        let exps: Vec<i32> = b.iter().map(|bf| bf.exponent).collect();
        assert_eq!(exps, vec![3, 2, 1]);
    }

    #[test]
    fn odin2_basis_matches_grid_enumeration() {
        // Independent brute-force enumeration of the two index families for
        // d = 3, delta = 1.
        let d = 3i32;
        let delta = 1.0f64;
        let dd = d as f64 + delta;
        let m_max = (dd / 2.0).floor() as i32;
        let q1_max = (dd / delta).floor() as i32;
        let q2_max = ((dd / (2.0 * (dd - 2.0))).floor() as i32).max(1);
        let mut expected: Vec<i32> = Vec::new();
        for m in 0..=m_max {
            for q in 0..=q1_max {
                if m + q == 0 {
                    continue;
                }
                let e = m - d * q;
                if e != 0 && !expected.contains(&e) {
                    expected.push(e);
                }
            }
        }
        for m in 0..=m_max {
            for q in 1..=q2_max {
                let e = m - 2 * q;
                if e != 0 && !expected.contains(&e) {
                    expected.push(e);
                }
            }
        }
        expected.sort_by(|a, b| b.cmp(a));

        let got: Vec<i32> = basis_functions(&EstimatorVariant::Odin2Full { delta: 1.0 }, 3)
            .unwrap()
            .iter()
            .map(|bf| bf.exponent)
            .collect();
        assert_eq!(got, expected);
        // Frozen value of the enumeration above.
        assert_eq!(
            got,
            vec![2, 1, -1, -2, -3, -4, -5, -6, -7, -8, -9, -10, -11, -12]
        );
    }

    #[test]
    fn odin2_rejects_degenerate_dimension() {
        assert!(matches!(
            basis_functions(&EstimatorVariant::Odin2Full { delta: 1.0 }, 1),
            Err(Error::DegenerateBasis(_))
        ));
    }

    #[test]
    fn basis_evaluates_to_one_at_l_equals_one() {
        for variant in [
            EstimatorVariant::Odin1Pairwise,
            EstimatorVariant::Odin1Full { s_smoothness: 4 },
            EstimatorVariant::Odin2Full { delta: 1.0 },
        ] {
            for bf in basis_functions(&variant, 3).unwrap() {
                assert_eq!(bf.evaluate(1.0), 1.0);
            }
        }
    }

    #[test]
    fn degenerate_weight_solves() {
        let w = solve_weights(&[0.7], &[], WeightMode::Exact, 0.0, 1e-8).unwrap();
        assert_eq!(w.weights(), &[1.0]);
    }

    #[test]
    fn two_point_weights_are_the_unique_solution() {
        let basis = [BasisFunction {
            exponent: 1,
            family: 1,
            m: 1,
            q: 0,
            rate: 0.25,
        }];
        let w = solve_weights(&[1.0, 2.0], &basis, WeightMode::Exact, 0.0, 1e-8).unwrap();
        assert!((w.weights()[0] - 2.0).abs() < 1e-10);
        assert!((w.weights()[1] + 1.0).abs() < 1e-10);
        assert!((w.norm2() * w.norm2() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn three_point_minimum_norm_weights() {
        let basis = [BasisFunction {
            exponent: 1,
            family: 1,
            m: 1,
            q: 0,
            rate: 0.25,
        }];
        let w = solve_weights(&[1.0, 2.0, 3.0], &basis, WeightMode::Exact, 0.0, 1e-8).unwrap();
        let expected = [4.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0];
        for (got, want) in w.weights().iter().zip(expected) {
            assert!((got - want).abs() < 1e-10);
        }
        assert!((w.norm2() * w.norm2() - 7.0 / 3.0).abs() < 1e-9);
        for r in w.residuals() {
            assert!(*r <= 1e-10);
        }
    }

    #[test]
    fn exact_weights_beat_random_feasible_points() {
        use rand::Rng;
        let l_set = EnsembleConfig::l_range(1.0, 3.0, 12).unwrap();
        let basis = basis_functions(&EstimatorVariant::Odin1Pairwise, 2).unwrap();
        let w0 = solve_weights(&l_set, &basis, WeightMode::Exact, 0.0, 1e-8).unwrap();

        // Feasible perturbations: project random vectors onto the null
        // space of the constraint matrix.
        let rows = basis.len() + 1;
        let a = DMatrix::from_fn(rows, l_set.len(), |r, c| {
            if r == 0 {
                1.0
            } else {
                basis[r - 1].evaluate(l_set[c])
            }
        });
        let mut rng = crate::rng::RngStream::new(5, 0).rng();
        for _ in 0..50 {
            let r = DVector::from_fn(l_set.len(), |_, _| rng.random_range(-1.0..1.0));
            let ar = &a * &r;
            let svd = a.clone().svd(true, true);
            let proj = svd.solve(&ar, 1e-12).unwrap();
            let v = &r - proj;
            let w_alt: Vec<f64> = w0
                .weights()
                .iter()
                .zip(v.iter())
                .map(|(w, dv)| w + dv)
                .collect();
            let alt_norm = w_alt.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(w0.norm2() <= alt_norm + 1e-8);
        }
    }

    #[test]
    fn relaxed_zero_tau_equals_exact() {
        let l_set = EnsembleConfig::l_range(1.0, 3.0, 10).unwrap();
        let basis = basis_functions(&EstimatorVariant::Odin1Pairwise, 2).unwrap();
        let exact = solve_weights(&l_set, &basis, WeightMode::Exact, 0.0, 1e-8).unwrap();
        let relaxed = solve_weights(&l_set, &basis, WeightMode::Relaxed, 0.0, 1e-8).unwrap();
        for (a, b) in exact.weights().iter().zip(relaxed.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn relaxed_mode_shrinks_the_norm() {
        let l_set = EnsembleConfig::l_range(1.0, 3.0, 50).unwrap();
        let basis = basis_functions(&EstimatorVariant::Odin1Pairwise, 2).unwrap();
        let exact = solve_weights(&l_set, &basis, WeightMode::Exact, 0.0, 1e-8).unwrap();
        let tau = 1.0 / 500f64.sqrt();
        let relaxed = solve_weights(&l_set, &basis, WeightMode::Relaxed, tau, 1e-8).unwrap();
        assert!(relaxed.norm2() <= exact.norm2() + 1e-12);
        for r in relaxed.residuals() {
            assert!(*r <= tau + 1e-8);
        }
        assert!(relaxed.sum_error() <= 1e-10);
    }

    fn triplet_dataset() -> Dataset {
        Dataset::from_rows(
            vec![
                vec![0.0, 0.0, 0.0],
                vec![0.1, 0.1, 0.1],
                vec![0.2, 0.2, 0.2],
            ],
            Dataset::default_names(3),
        )
        .unwrap()
    }

    #[test]
    fn renyi_zero_plugin_is_exactly_one() {
        let data = triplet_dataset();
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let target = RatioDecomposition::from_tree(&tree);
        let f = Functional::renyi(0.0).unwrap();
        let v = plugin_estimate(&data, &target, &f, 0.8, DensityFloor::default()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn chain_triplet_shannon_plugin_is_zero() {
        let data = triplet_dataset();
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let target = RatioDecomposition::from_tree(&tree);
        let v = plugin_estimate(
            &data,
            &target,
            &Functional::Shannon,
            0.5,
            DensityFloor::default(),
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn single_member_ensemble_equals_plugin() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(3, 1).rng();
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let data = Dataset::from_rows(rows, Dataset::default_names(2)).unwrap();
        let target = RatioDecomposition::pairwise(0, 1, 2).unwrap();
        let f = Functional::renyi(0.5).unwrap();
        let cfg = EnsembleConfig::plugin(0.45);
        let ens = ensemble_estimate(&data, &target, &f, &cfg, DensityFloor::default()).unwrap();
        let direct = plugin_estimate(&data, &target, &f, 0.45, DensityFloor::default()).unwrap();
        assert_eq!(ens.estimate.to_bits(), direct.to_bits());
        assert_eq!(ens.weights.weights(), &[1.0]);
    }

    #[test]
    fn constant_members_reproduce_the_constant() {
        // On the coincident-ratio dataset every member value is g(1) = 1,
        // so the ensemble returns the weighted sum of a constant.
        let data = triplet_dataset();
        let tree = FactorTree::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let target = RatioDecomposition::from_tree(&tree);
        let f = Functional::renyi(0.5).unwrap();
        let cfg = EnsembleConfig::new(EstimatorVariant::Odin1Full { s_smoothness: 3 })
            .with_l_set(EnsembleConfig::l_range(1.0, 2.0, 8).unwrap());
        let ens = ensemble_estimate(&data, &target, &f, &cfg, DensityFloor::default()).unwrap();
        for m in &ens.members {
            assert!((m.value - 1.0).abs() < 1e-12);
        }
        assert!((ens.estimate - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn ensemble_is_deterministic() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(8, 2).rng();
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let data = Dataset::from_rows(rows, Dataset::default_names(2)).unwrap();
        let target = RatioDecomposition::pairwise(0, 1, 2).unwrap();
        let f = Functional::renyi(0.5).unwrap();
        let cfg = EnsembleConfig::new(EstimatorVariant::Odin1Pairwise)
            .with_l_set(EnsembleConfig::l_range(1.0, 3.0, 20).unwrap());
        let a = ensemble_estimate(&data, &target, &f, &cfg, DensityFloor::default()).unwrap();
        let b = ensemble_estimate(&data, &target, &f, &cfg, DensityFloor::default()).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }

    #[test]
    fn multi_target_estimates_match_single_target_bitwise() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(21, 0).rng();
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                (0..3)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            })
            .collect();
        let data = Dataset::from_rows(rows, Dataset::default_names(3)).unwrap();
        let f = Functional::renyi(0.5).unwrap();
        let cfg = EnsembleConfig::new(EstimatorVariant::Odin1Pairwise)
            .with_l_set(EnsembleConfig::l_range(1.0, 3.0, 12).unwrap());
        let targets: Vec<RatioDecomposition> = vec![
            RatioDecomposition::pairwise(0, 1, 3).unwrap(),
            RatioDecomposition::pairwise(0, 2, 3).unwrap(),
            RatioDecomposition::pairwise(1, 2, 3).unwrap(),
        ];
        let refs: Vec<&RatioDecomposition> = targets.iter().collect();
        let multi =
            ensemble_estimates_multi(&data, &refs, &f, &cfg, DensityFloor::default()).unwrap();
        for (target, combined) in targets.iter().zip(&multi) {
            let single =
                ensemble_estimate(&data, target, &f, &cfg, DensityFloor::default()).unwrap();
            assert_eq!(single.estimate.to_bits(), combined.estimate.to_bits());
        }
    }

    #[test]
    fn pairwise_shannon_is_positively_oriented() {
        // Strongly dependent pair: conventional MI must come out positive.
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(14, 0).rng();
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                vec![x, x + 0.05 * rng.random_range(-1.0..1.0)]
            })
            .collect();
        let data = Dataset::from_rows(rows, Dataset::default_names(2)).unwrap();
        let target = RatioDecomposition::pairwise(0, 1, 2).unwrap();
        let v = plugin_estimate(
            &data,
            &target,
            &Functional::Shannon,
            0.3,
            DensityFloor::default(),
        )
        .unwrap();
        assert!(v > 0.5, "expected strongly positive MI, got {v}");
    }
}
