use serde::{Deserialize, Serialize};

use super::Canceler;
use crate::channel::SPEED_OF_LIGHT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Electrical delay lines on a micro-strip board. The reference signal is
    /// split 1:M and recombined M:1, so each tap also carries a `1/M`
    /// amplitude coupling.
    Microstrip,
    /// Optical delay lines built from fiber Bragg gratings.
    Fbg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossProfile {
    pub kind: LossKind,
    pub per_meter_loss_db: f64,
    pub coupler_db: f64,
    /// Signal speed in the delay medium, m/s.
    pub propagation_speed: f64,
    /// Fixed path length every tap shares before its delay section, m.
    pub base_length: f64,
}

impl LossProfile {
    /// Micro-strip lines on an ε_r = 6 substrate.
    pub fn microstrip() -> Self {
        LossProfile {
            kind: LossKind::Microstrip,
            per_meter_loss_db: 2.967,
            coupler_db: 0.0,
            propagation_speed: SPEED_OF_LIGHT / 6f64.sqrt(),
            base_length: 0.02,
        }
    }

    /// Fiber with refractive index 1.468 and 2 cm coiling per tap.
    pub fn fbg() -> Self {
        LossProfile {
            kind: LossKind::Fbg,
            per_meter_loss_db: 0.461,
            coupler_db: 20.0,
            propagation_speed: SPEED_OF_LIGHT / 1.468,
            base_length: 0.02,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.per_meter_loss_db > 0.0) {
            return Err(Error::InvalidInput("per-meter loss must be positive".into()));
        }
        if !(self.coupler_db >= 0.0) || !(self.propagation_speed > 0.0) || !(self.base_length >= 0.0) {
            return Err(Error::InvalidInput("bad loss profile".into()));
        }
        Ok(())
    }

    /// Path length behind a tap with the given delay.
    pub fn path_length(&self, delay: f64) -> f64 {
        self.base_length + self.propagation_speed * delay
    }

    /// Cumulative propagation loss in dB for a tap with the given delay.
    pub fn tap_loss_db(&self, delay: f64) -> f64 {
        self.per_meter_loss_db * self.path_length(delay)
    }
}

fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// Builds an unweighted canceler whose `m` taps evenly cover `[0, delay_span]`.
pub fn apply_loss_profile(profile: &LossProfile, taps: usize, delay_span: f64) -> Result<Canceler> {
    profile.validate()?;
    if taps == 0 {
        return Err(Error::InvalidInput("canceler needs at least one tap".into()));
    }
    if !(delay_span >= 0.0) || (taps > 1 && delay_span == 0.0) {
        return Err(Error::InvalidInput(format!("delay span {delay_span} cannot hold {taps} taps")));
    }
    let delays: Vec<f64> = if taps == 1 {
        vec![0.0]
    } else {
        (0..taps).map(|m| m as f64 * delay_span / (taps - 1) as f64).collect()
    };
    let alpha = delays.iter().map(|&d| db_to_amplitude(profile.tap_loss_db(d))).collect();
    let beta = match profile.kind {
        LossKind::Microstrip => vec![1.0 / taps as f64; taps],
        LossKind::Fbg => vec![1.0; taps],
    };
    Canceler::new(db_to_amplitude(profile.coupler_db), delays, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tap_is_one_pitch() {
        let c = apply_loss_profile(&LossProfile::fbg(), 1, 200e-9).unwrap();
        assert_eq!(c.delays, vec![0.0]);
        assert!((c.coupler_loss - 0.1).abs() < 1e-15);
        let expect = 10f64.powf(-0.461 * 0.02 / 20.0);
        assert!((c.propagation_loss[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn microstrip_taps_decay() {
        let c = apply_loss_profile(&LossProfile::microstrip(), 100, 200e-9).unwrap();
        assert!(c.propagation_loss.windows(2).all(|w| w[1] < w[0]));
        assert!(c.propagation_loss[99] / c.propagation_loss[0] < 1e-3);
        assert!(c.tap_coupling.iter().all(|&b| (b - 0.01).abs() < 1e-15));
        assert_eq!(c.coupler_loss, 1.0);
    }

    #[test]
    fn fbg_loss_accumulates_in_db() {
        // Spreadsheet-style: start from the coiling loss and add the loss of
        // each extra delay section in turn.
        let p = LossProfile::fbg();
        let c = apply_loss_profile(&p, 100, 200e-9).unwrap();
        let step_m = 200e-9 / 99.0 * SPEED_OF_LIGHT / 1.468;
        let mut acc_db = 0.461 * 0.02;
        for m in 0..100 {
            let db = -20.0 * c.propagation_loss[m].log10();
            assert!((db - acc_db).abs() < 1e-9, "tap {m}: {db} vs {acc_db}");
            acc_db += 0.461 * step_m;
        }
        // Across the same delay span the fiber loses far less than micro-strip.
        let ms = apply_loss_profile(&LossProfile::microstrip(), 100, 200e-9).unwrap();
        let spread = |c: &Canceler| -20.0 * (c.propagation_loss[99] / c.propagation_loss[0]).log10();
        assert!(spread(&c) < 20.0 && spread(&ms) > 3.0 * spread(&c));
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut p = LossProfile::microstrip();
        p.per_meter_loss_db = 0.0;
        assert!(apply_loss_profile(&p, 4, 1e-7).is_err());
        assert!(apply_loss_profile(&LossProfile::fbg(), 0, 1e-7).is_err());
        assert!(apply_loss_profile(&LossProfile::fbg(), 3, 0.0).is_err());
    }
}
