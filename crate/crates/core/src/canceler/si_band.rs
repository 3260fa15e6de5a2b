//! Per antenna-pair SI response over the band of interest, as seen by one
//! canceler: a direct coupling term plus a sparse multipath tail whose power
//! decays exponentially with excess delay.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BandGrid;
use crate::error::{Error, Result};
use crate::rng::{complex_normal, unit_phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiBandModel {
    /// LOS-to-multipath power ratio, linear.
    pub rician_factor: f64,
    pub nlos_rays: usize,
    /// Multipath delays are uniform on `[0, max_excess_delay)`.
    pub max_excess_delay: f64,
    /// Excess delay by which the multipath power has fallen by
    /// `significant_db`.
    pub delay_spread: f64,
    pub significant_db: f64,
    /// Mean total SI power relative to the canceler reference, dB.
    pub level_db: f64,
}

impl Default for SiBandModel {
    fn default() -> Self {
        SiBandModel {
            rician_factor: 10.0,
            nlos_rays: 16,
            max_excess_delay: 320e-9,
            delay_spread: 200e-9,
            significant_db: 10.0,
            level_db: -30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiBandRealization {
    pub los: Complex64,
    /// `(gain, excess delay)` per multipath ray.
    pub rays: Vec<(Complex64, f64)>,
}

impl SiBandModel {
    fn validate(&self) -> Result<()> {
        if !(self.rician_factor > 0.0) || self.rician_factor.is_nan() {
            return Err(Error::InvalidInput("Rician factor must be positive".into()));
        }
        if self.nlos_rays == 0 && self.rician_factor.is_finite() {
            return Err(Error::InvalidInput("multipath power with no rays".into()));
        }
        if !(self.max_excess_delay > 0.0) || !(self.delay_spread > 0.0) || !(self.significant_db > 0.0) {
            return Err(Error::InvalidInput("bad SI delay profile".into()));
        }
        if !self.level_db.is_finite() {
            return Err(Error::InvalidInput("SI level must be finite".into()));
        }
        Ok(())
    }

    /// Power decay constant of the exponential delay profile, seconds.
    pub fn decay_constant(&self) -> f64 {
        self.delay_spread / (self.significant_db / 10.0 * std::f64::consts::LN_10)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SiBandRealization> {
        self.validate()?;
        let amplitude = 10f64.powf(self.level_db / 20.0);
        let (w_los, w_nlos) = if self.rician_factor.is_infinite() {
            (1.0, 0.0)
        } else {
            let k = self.rician_factor;
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        };
        let los = unit_phase(rng) * (w_los * amplitude);
        let decay = self.decay_constant();
        let delays: Vec<f64> = (0..self.nlos_rays).map(|_| rng.random_range(0.0..self.max_excess_delay)).collect();
        let powers: Vec<f64> = delays.iter().map(|d| (-d / decay).exp()).collect();
        let total: f64 = powers.iter().sum();
        let rays = delays
            .iter()
            .zip(&powers)
            .map(|(&d, &p)| (complex_normal(rng, p / total) * (w_nlos * amplitude), d))
            .collect();
        Ok(SiBandRealization { los, rays })
    }
}

impl SiBandRealization {
    pub fn response(&self, omega: f64) -> Complex64 {
        self.los
            + self
                .rays
                .iter()
                .map(|(g, d)| g * Complex64::from_polar(1.0, -omega * d))
                .sum::<Complex64>()
    }

    pub fn evaluate(&self, grid: &BandGrid) -> Vec<Complex64> {
        grid.omegas().map(|w| self.response(w)).collect()
    }
}
