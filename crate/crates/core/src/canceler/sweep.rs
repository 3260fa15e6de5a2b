use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_loss_profile, fit_weights, BandGrid, LossProfile, SiBandModel};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Band and tap-placement settings shared by every sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSetup {
    pub center_hz: f64,
    pub grid_step_hz: f64,
    /// Span covered by the canceler taps, seconds.
    pub tap_delay_span: f64,
}

impl Default for SweepSetup {
    fn default() -> Self {
        SweepSetup {
            center_hz: 28e9,
            grid_step_hz: 1e6,
            tap_delay_span: 200e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub taps: usize,
    pub bandwidth_hz: f64,
    pub per_trial_db: Vec<f64>,
    pub mean_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Bandwidth-major, then tap count, in the order given.
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, taps: usize, bandwidth_hz: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.taps == taps && c.bandwidth_hz == bandwidth_hz)
    }

    /// Highest mean cancellation over tap counts for one bandwidth.
    pub fn best_for_bandwidth(&self, bandwidth_hz: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.bandwidth_hz == bandwidth_hz)
            .max_by(|a, b| a.mean_db.total_cmp(&b.mean_db))
    }
}

/// Mean cancellation over `trials` SI realizations for each
/// (tap count, bandwidth) pair. Trial `t` draws its SI response from stream
/// `(seed, t)`, so every cell sees the same realizations.
pub fn sweep_taps_bandwidth(
    profile: &LossProfile,
    tap_counts: &[usize],
    bandwidths_hz: &[f64],
    model: &SiBandModel,
    setup: &SweepSetup,
    trials: usize,
    seed: u64,
) -> Result<SweepGrid> {
    if tap_counts.is_empty() || bandwidths_hz.is_empty() || trials == 0 {
        return Err(Error::InvalidInput("sweep needs tap counts, bandwidths and trials".into()));
    }
    let realizations = (0..trials)
        .map(|t| model.draw(&mut stream(seed, t as u64, Purpose::Canceler)))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for &bw in bandwidths_hz {
        let grid = BandGrid::centered(setup.center_hz, bw, setup.grid_step_hz)?;
        for &m in tap_counts {
            let canceler = apply_loss_profile(profile, m, setup.tap_delay_span)?;
            jobs.push((bw, grid.clone(), canceler));
        }
    }
    let cells = jobs
        .par_iter()
        .map(|(bw, grid, canceler)| {
            let per_trial_db = realizations
                .iter()
                .map(|r| fit_weights(&r.evaluate(grid), grid, canceler)?.cancellation_db())
                .collect::<Result<Vec<f64>>>()?;
            let mean_db = per_trial_db.iter().sum::<f64>() / per_trial_db.len() as f64;
            Ok(SweepCell { taps: canceler.taps(), bandwidth_hz: *bw, per_trial_db, mean_db })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepGrid { cells })
}
