//! Calibration of the bump width `k` against the lemma suite and of `K`
//! against the pointwise condition.

use serde::{Deserialize, Serialize};

use crate::convexity::{calibrate_big_k, KCalibration};
use crate::error::Result;
use crate::geometry::{Space, SpaceParams};
use crate::lemmas::suite::{run_suite, LemmaSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthTrial {
    pub k: f64,
    pub pass: bool,
    pub failing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthCalibration {
    /// Largest `k = 2⁻ⁿ/10` whose lemma suite passes, if any.
    pub k: Option<f64>,
    pub trials: Vec<WidthTrial>,
}

/// Walks `k = 0.1, 0.05, …` down `max_halvings` steps and stops at the
/// first width for which every lemma passes. `ε = k/10` during the sweep.
pub fn calibrate_width(big_k: f64, samples: usize, seed: u64, max_halvings: u32) -> Result<WidthCalibration> {
    let mut trials = Vec::new();
    for n in 0..=max_halvings {
        let k = 0.1 / f64::from(1u32 << n);
        let space = Space::new(SpaceParams::new(k, big_k, k / 10.0)?)?;
        let (sums, _) = run_suite(&space, samples, seed, false)?;
        let failing: Vec<String> = sums.iter().filter(|s| !s.pass()).map(|s: &LemmaSummary| s.lemma.to_string()).collect();
        let pass = failing.is_empty();
        trials.push(WidthTrial { k, pass, failing });
        if pass {
            return Ok(WidthCalibration { k: Some(k), trials });
        }
    }
    Ok(WidthCalibration { k: None, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub width: WidthCalibration,
    /// `K` calibrated at the configured `k`.
    pub big_k: KCalibration,
}

pub fn calibrate(params: SpaceParams, samples: usize, seed: u64) -> Result<CalibrationReport> {
    let width = calibrate_width(params.big_k, samples, seed, 6)?;
    let big_k = calibrate_big_k(&Space::new(params)?, samples, seed)?;
    Ok(CalibrationReport { width, big_k })
}
