//! Small dense solvers behind the ensemble weight optimization:
//! minimum-Euclidean-norm solutions of equality systems, and Dykstra
//! projections for the box-relaxed variant.
//!
//! The constraint matrices are tiny but can be badly conditioned (rows are
//! powers of the bandwidth parameter with exponents spanning a wide range),
//! so the equality solves use SVD with iterative refinement, and the
//! relaxed problem avoids linear solves altogether: minimizing ||w|| over
//! the feasible polytope is the projection of the origin onto an
//! intersection of one hyperplane and a few slabs, which Dykstra's
//! alternating-projection scheme computes from closed-form single-set
//! projections.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-norm `w` with `A w = b`, via SVD plus iterative refinement.
/// Errors when the system is inconsistent (or numerically rank-deficient)
/// beyond `feas_tol`.
pub(crate) fn min_norm_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    feas_tol: f64,
) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff =
        (sv_max * a.nrows().max(a.ncols()) as f64 * f64::EPSILON).max(f64::MIN_POSITIVE);
    let mut w = svd
        .solve(b, cutoff)
        .map_err(|e| Error::SolverFailure(e.to_string()))?;
    for _ in 0..3 {
        let r = b - a * &w;
        if r.amax() <= feas_tol * 1e-3 {
            break;
        }
        let dw = svd
            .solve(&r, cutoff)
            .map_err(|e| Error::SolverFailure(e.to_string()))?;
        w += dw;
    }
    let residual = (a * &w - b).amax();
    if residual > feas_tol {
        return Err(Error::InfeasibleWeights(format!(
            "equality residual {residual:e} exceeds {feas_tol:e}"
        )));
    }
    Ok(w)
}

/// Phase-1 start for the relaxed solve: minimize the common bound slack `s`
/// over (w, s) with `sum(w) = 1` and `|psi_r . w| <= tau + s`, by the same
/// barrier-Newton scheme as the main solve. The extended start
/// (uniform weights, s above the worst violation) is always strictly
/// feasible, and iteration stops as soon as the bounds hold with a
/// comfortable interior margin.
fn phase_one_start(
    psi: &DMatrix<f64>,
    tau: f64,
    uniform: &DVector<f64>,
    margin_of: &dyn Fn(&DVector<f64>) -> f64,
) -> Result<DVector<f64>> {
    let n_vars = psi.ncols();
    let n_rows = psi.nrows();
    let target = 0.05 * tau;
    let mut w = uniform.clone();
    let mut s = -margin_of(&w) + tau; // strictly inside all extended slabs
    let mut t = (1.0f64).max(s);
    for _ in 0..200 {
        t *= 0.3;
        for _ in 0..80 {
            if margin_of(&w) >= target {
                return Ok(w);
            }
            let v = psi * &w;
            // Gradient and Hessian of s - t * sum log((tau+s)^2 - v^2)
            // in the variables (w, s).
            let mut grad = DVector::zeros(n_vars + 1);
            grad[n_vars] = 1.0;
            let mut kkt = DMatrix::zeros(n_vars + 2, n_vars + 2);
            for c in 0..n_vars {
                kkt[(c, n_vars + 1)] = 1.0;
                kkt[(n_vars + 1, c)] = 1.0;
            }
            for r in 0..n_rows {
                let a = tau + s - v[r];
                let b = tau + s + v[r];
                let (ia, ib) = (1.0 / a, 1.0 / b);
                for c in 0..n_vars {
                    grad[c] += t * (ia - ib) * psi[(r, c)];
                }
                grad[n_vars] -= t * (ia + ib);
                let (ia2, ib2) = (ia * ia, ib * ib);
                for c1 in 0..n_vars {
                    let p1 = psi[(r, c1)];
                    if p1 == 0.0 {
                        continue;
                    }
                    for c2 in 0..n_vars {
                        kkt[(c1, c2)] += t * (ia2 + ib2) * p1 * psi[(r, c2)];
                    }
                    kkt[(c1, n_vars)] += t * (ib2 - ia2) * p1;
                    kkt[(n_vars, c1)] += t * (ib2 - ia2) * p1;
                }
                kkt[(n_vars, n_vars)] += t * (ia2 + ib2);
            }
            // Tiny curvature on w keeps the step bounded along flat
            // directions without affecting feasibility progress.
            for c in 0..n_vars {
                kkt[(c, c)] += 1e-9;
            }
            let mut rhs = DVector::zeros(n_vars + 2);
            for c in 0..=n_vars {
                rhs[c] = -grad[c];
            }
            let step = kkt
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SolverFailure("singular phase-1 system".into()))?;
            let dw = step.rows(0, n_vars).into_owned();
            let ds = step[n_vars];

            let slack_of = |wt: &DVector<f64>, st: f64| -> f64 {
                let vt = psi * wt;
                (0..n_rows)
                    .map(|r| (tau + st) - vt[r].abs())
                    .fold(f64::INFINITY, f64::min)
            };
            let current_slack = slack_of(&w, s);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let wt = &w + alpha * &dw;
                let st = s + alpha * ds;
                if slack_of(&wt, st) >= 0.01 * current_slack {
                    w = wt;
                    s = st;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if margin_of(&w) >= target {
            return Ok(w);
        }
        if t < 1e-14 {
            break;
        }
    }
    if margin_of(&w) >= 0.0 {
        return Ok(w);
    }
    Err(Error::InfeasibleWeights(format!(
        "no strictly feasible point found for tau {tau:e}"
    )))
}

/// Minimizes ||w||_2 subject to sum(w) = 1 and |psi_r . w| <= tau for every
/// row of `psi`.
///
/// Log-barrier interior-point iteration. The basis rows can be nearly
/// dependent (power-law rows over a narrow parameter range), which makes
/// active-set and dual-descent schemes stall; the barrier Hessian
/// `I + t * psi^T D psi` stays well-posed, every iterate is strictly
/// feasible, and the final suboptimality is bounded by `2 R t_final`.
pub(crate) fn solve_relaxed(psi: &DMatrix<f64>, tau: f64, feas_tol: f64) -> Result<DVector<f64>> {
    let n_vars = psi.ncols();
    let n_rows = psi.nrows();
    let nf = n_vars as f64;
    if n_rows == 0 {
        return Ok(DVector::from_element(n_vars, 1.0 / nf));
    }

    let margin_of = |w: &DVector<f64>| -> f64 {
        let v = psi * w;
        (0..n_rows).map(|r| tau - v[r].abs()).fold(f64::INFINITY, f64::min)
    };

    // Strictly feasible start: uniform weights if they qualify, otherwise a
    // ridge-filtered solve of the hard-equality system (sum row plus basis
    // rows at zero), relaxing the filter until the bounds hold with margin.
    let uniform = DVector::from_element(n_vars, 1.0 / nf);
    let mut w = if margin_of(&uniform) >= 0.05 * tau {
        uniform
    } else {
        phase_one_start(psi, tau, &uniform, &margin_of)?
    };
    if std::env::var("MIST_QP_DEBUG").is_ok() {
        eprintln!("qp start: norm {} margin {}", w.norm(), margin_of(&w));
    }

    // Barrier path: minimize ||w||^2 / 2 - t * sum log(tau^2 - v_r^2)
    // subject to sum(w) = 1, with Newton steps on the equality-KKT system.
    let mut t = 1.0;
    let t_final = 1e-10;
    while t > t_final {
        t *= 0.2;
        let drift = (1.0 - w.sum()) / nf;
        let recentred = w.add_scalar(drift);
        if margin_of(&recentred) > 0.0 {
            w = recentred;
        }
        for _ in 0..100 {
            let v = psi * &w;
            let mut grad = w.clone();
            let mut hess = DMatrix::identity(n_vars, n_vars);
            for r in 0..n_rows {
                let lo = tau + v[r];
                let hi = tau - v[r];
                let g_r = t * (1.0 / lo - 1.0 / hi);
                let h_r = t * (1.0 / (lo * lo) + 1.0 / (hi * hi));
                for c in 0..n_vars {
                    grad[c] += -g_r * psi[(r, c)];
                }
                for c1 in 0..n_vars {
                    let p1 = psi[(r, c1)];
                    if p1 == 0.0 {
                        continue;
                    }
                    for c2 in 0..n_vars {
                        hess[(c1, c2)] += h_r * p1 * psi[(r, c2)];
                    }
                }
            }
            // KKT system for the equality-constrained Newton step.
            let mut kkt = DMatrix::zeros(n_vars + 1, n_vars + 1);
            kkt.view_mut((0, 0), (n_vars, n_vars)).copy_from(&hess);
            for c in 0..n_vars {
                kkt[(c, n_vars)] = 1.0;
                kkt[(n_vars, c)] = 1.0;
            }
            let mut rhs = DVector::zeros(n_vars + 1);
            for c in 0..n_vars {
                rhs[c] = -grad[c];
            }
            let step = kkt.clone().lu().solve(&rhs).ok_or_else(|| {
                let hmax = hess.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                Error::SolverFailure(format!(
                    "singular KKT system (t {t:.2e}, margin {:.2e}, hess max {hmax:.2e})",
                    margin_of(&w)
                ))
            })?;
            let dw = step.rows(0, n_vars).into_owned();
            let decrement = grad.dot(&dw).abs();

            // Fraction-to-boundary line search: a step may consume at most
            // 99% of the current distance to the nearest bound, which keeps
            // the next barrier Hessian finite.
            let floor_margin = 0.01 * margin_of(&w);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &w + alpha * &dw;
                if margin_of(&trial) >= floor_margin {
                    accepted = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(trial) = accepted else {
                break;
            };
            w = trial;
            if decrement <= 1e-16 * (1.0 + w.norm_squared()) {
                break;
            }
        }
        if std::env::var("MIST_QP_DEBUG").is_ok() {
            eprintln!("qp t={t:.2e}: norm {} margin {:.3e}", w.norm(), margin_of(&w));
        }
    }

    let shift = (1.0 - w.sum()) / nf;
    let w = w.add_scalar(shift);
    let worst = (psi * &w).abs().max();
    if worst > tau * (1.0 + 1e-6) + feas_tol {
        return Err(Error::SolverFailure(format!(
            "barrier solution violates a bound ({worst:e} vs tau {tau:e})"
        )));
    }
    Ok(w)
}
