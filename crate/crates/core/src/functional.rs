//! The scalar functional defining the information measure.
//!
//! `Shannon` evaluates `g(u) = ln u`; `Renyi { alpha }` evaluates
//! `g(u) = u^alpha` with `alpha` in [0, 1]. The null value `g(1)` is the
//! hypothesis-test reference: 0 for Shannon, 1 for the Renyi-alpha integral.
//!
//! Orientation convention for pairwise mutual information: the Renyi-alpha
//! integral averages `g` over the marginals-to-joint density ratio and sits
//! at or below 1, with 1 exactly under independence. Shannon pairwise MI is
//! reported in its conventional orientation (non-negative, 0 under
//! independence), i.e. the mean of `ln(joint / product of marginals)`.
//! Model-fit functionals always average `g` over the model-to-joint ratio
//! unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    Shannon,
    Renyi { alpha: f64 },
}

impl Functional {
    pub fn shannon() -> Self {
        Functional::Shannon
    }

    pub fn renyi(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "renyi alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Functional::Renyi { alpha })
    }

    /// Evaluates `g(u)` for positive `u`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::NonPositiveRatio { u });
        }
        Ok(self.eval_unchecked(u))
    }

    /// `g(u)` without the positivity check; callers guarantee `u > 0`
    /// (the density floor does this on every estimation path).
    #[inline]
    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        match *self {
            Functional::Shannon => u.ln(),
            Functional::Renyi { alpha } => {
                if alpha == 0.5 {
                    u.sqrt()
                } else {
                    u.powf(alpha)
                }
            }
        }
    }

    /// `g(1)`, the value of the functional when the density ratio is
    /// identically one.
    pub fn null_value(&self) -> f64 {
        match self {
            Functional::Shannon => 0.0,
            Functional::Renyi { .. } => 1.0,
        }
    }

    /// True for Renyi with alpha strictly inside (0, 1), where the
    /// population integral is <= 1 with equality only under independence
    /// (respectively model equality), making the natural test one-sided
    /// from below.
    pub fn is_strictly_concave_renyi(&self) -> bool {
        matches!(self, Functional::Renyi { alpha } if *alpha > 0.0 && *alpha < 1.0)
    }

    pub fn label(&self) -> String {
        match self {
            Functional::Shannon => "shannon".to_string(),
            Functional::Renyi { alpha } => format!("renyi(alpha={alpha})"),
        }
    }
}
