use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QmcError, Result};
use crate::states::{
    perturb_away, random_full_rank, DensityOperator, Discrepancy, PERTURB_RESOLUTION,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Guarantee `1 - F(rho, estimate) <= target`.
    Infidelity,
    /// Guarantee `||rho - estimate||_1 <= target` (full trace norm).
    Trace,
}

/// Stand-in for a tomography measurement: returns any state meeting the
/// accuracy guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationOracleConfig {
    pub mode: OracleMode,
    pub target: f64,
    /// Probability that a call returns an arbitrary state instead.
    pub failure_prob: f64,
    /// Stress mode drives the discrepancy into `[0.9, 0.999] * target`;
    /// otherwise it is uniform in `[0, target]`.
    pub stress: bool,
}

/// Stress-mode discrepancy range as fractions of the target.
pub const STRESS_RANGE: (f64, f64) = (0.9, 0.999);

impl EstimationOracleConfig {
    pub fn new(mode: OracleMode, target: f64) -> Result<Self> {
        let cfg = Self {
            mode,
            target,
            failure_prob: 0.0,
            stress: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_failure_prob(mut self, p: f64) -> Result<Self> {
        self.failure_prob = p;
        self.validate()?;
        Ok(self)
    }

    pub fn with_stress(mut self, stress: bool) -> Self {
        self.stress = stress;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target > 0.0) || !self.target.is_finite() {
            return Err(QmcError::Config {
                field: "target".into(),
                message: format!("must be positive, got {}", self.target),
            });
        }
        if self.mode == OracleMode::Infidelity && self.target >= 1.0 {
            return Err(QmcError::Config {
                field: "target".into(),
                message: format!("infidelity target must be below 1, got {}", self.target),
            });
        }
        if !(0.0..1.0).contains(&self.failure_prob) {
            return Err(QmcError::Config {
                field: "failure_prob".into(),
                message: format!("must lie in [0, 1), got {}", self.failure_prob),
            });
        }
        Ok(())
    }

    fn discrepancy(&self, v: f64) -> Discrepancy {
        match self.mode {
            OracleMode::Infidelity => Discrepancy::Infidelity(v),
            OracleMode::Trace => Discrepancy::TraceNorm(v),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleEstimate {
    pub state: DensityOperator,
    /// Discrepancy from the input, measured in the configured mode.
    pub achieved: f64,
    /// The call simulated a failed measurement and ignored the target.
    pub failed: bool,
}

/// Simulated estimate of `rho` that meets the configured guarantee.
///
/// A failure probability of exactly 1 is accepted here (it is rejected by
/// [`EstimationOracleConfig::validate`] for protocol configs) so that the
/// failure path can be forced.
pub fn oracle_estimate<R: Rng + ?Sized>(
    rho: &DensityOperator,
    cfg: &EstimationOracleConfig,
    rng: &mut R,
) -> Result<OracleEstimate> {
    if !(cfg.target > 0.0) || !cfg.target.is_finite() || !(0.0..=1.0).contains(&cfg.failure_prob) {
        return Err(QmcError::InvalidArgument(format!(
            "oracle target {} / failure probability {}",
            cfg.target, cfg.failure_prob
        )));
    }
    // Draw the failure coin and the discrepancy level unconditionally so the
    // stream consumed per call does not depend on the outcome.
    let coin: f64 = rng.random();
    let u: f64 = rng.random();
    if coin < cfg.failure_prob {
        let state = random_full_rank(rho.layout().clone(), rng)?;
        let achieved = cfg.discrepancy(0.0).measure(rho, &state)?;
        return Ok(OracleEstimate {
            state,
            achieved,
            failed: true,
        });
    }
    let goal = if cfg.stress {
        let (lo, hi) = STRESS_RANGE;
        cfg.target * (lo + (hi - lo) * u)
    } else {
        cfg.target * u
    };
    if goal < PERTURB_RESOLUTION {
        return Ok(OracleEstimate {
            state: rho.clone(),
            achieved: 0.0,
            failed: false,
        });
    }
    let p = perturb_away(rho, cfg.discrepancy(goal), rng)?;
    let achieved = cfg.discrepancy(0.0).measure(rho, &p.state)?;
    Ok(OracleEstimate {
        state: p.state,
        achieved,
        failed: false,
    })
}
