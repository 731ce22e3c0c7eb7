use serde::{Deserialize, Serialize};

use crate::error::{GbtError, Result};

/// Training objective. Poisson uses a log link, so raw scores live in log space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    PoissonLogLink,
    Squared,
}

impl LossKind {
    /// Pointwise loss at raw score `raw`.
    ///
    /// Poisson: `exp(F) - y F` (negative log-likelihood without the `log y!`
    /// constant). Squared: `(F - y)^2 / 2`.
    #[inline]
    pub fn loss(self, target: f64, raw: f64) -> f64 {
        match self {
            LossKind::PoissonLogLink => raw.exp() - target * raw,
            LossKind::Squared => 0.5 * (raw - target) * (raw - target),
        }
    }

    /// Maps a raw score to the prediction scale.
    #[inline]
    pub fn transform(self, raw: f64) -> f64 {
        match self {
            LossKind::PoissonLogLink => raw.exp(),
            LossKind::Squared => raw,
        }
    }

    /// Raw score that minimises the loss for a constant model.
    pub fn base_score(self, targets: &[f64]) -> f64 {
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        match self {
            LossKind::PoissonLogLink => (mean + 1e-8).ln(),
            LossKind::Squared => mean,
        }
    }

    pub fn mean_loss(self, targets: &[f64], raw: &[f64]) -> f64 {
        let total: f64 = targets
            .iter()
            .zip(raw)
            .map(|(&y, &f)| self.loss(y, f))
            .sum();
        total / targets.len().max(1) as f64
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::PoissonLogLink => "poisson",
            LossKind::Squared => "squared",
        }
    }
}

/// First and second derivative of the loss with respect to the raw score.
///
/// Poisson: `g = e^F - y`, `h = e^F`. Squared: `g = F - y`, `h = 1`.
pub fn grad_hess(loss: LossKind, target: f64, raw: f64) -> Result<(f64, f64)> {
    if !target.is_finite() || !raw.is_finite() {
        return Err(GbtError::NonFinite("gradient inputs"));
    }
    let out = match loss {
        LossKind::PoissonLogLink => {
            let mu = raw.exp();
            (mu - target, mu)
        }
        LossKind::Squared => (raw - target, 1.0),
    };
    if !out.0.is_finite() || !out.1.is_finite() {
        return Err(GbtError::NonFinite("gradient"));
    }
    Ok(out)
}
