//! Simulation configuration: defaults, the desk-scale preset and the flat
//! `key=value` file format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{db_to_linear, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RsiSweep {
    /// Sweep the SI effective channel estimation error.
    Error,
    /// Sweep the HWI factors with ρ = β.
    Hwi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub subcarriers: usize,
    pub cp_len: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub users: usize,
    /// Elements per RF chain at the donor and the node, as rows × cols.
    pub subarray: (usize, usize),
    /// Elements per user.
    pub user_array: (usize, usize),
    pub noise_figure_db: f64,
    pub rolloff: f64,
    pub reference_distance: f64,
    pub distance: f64,
    pub si_distance: f64,
    pub path_loss_exponent: f64,
    pub rician_db: f64,
    pub isolation_db: f64,
    pub asic_db: f64,
    pub clusters: usize,
    pub rays: usize,
    pub si_clusters: usize,
    pub si_rays: usize,
    pub angle_spread_deg: f64,
    pub separation_angle_deg: f64,
    pub rho_db: f64,
    pub beta_db: f64,
    pub err_nd_db: f64,
    pub err_si_db: f64,
    pub err_en_db: f64,
    pub snr_db: Vec<f64>,
    /// Codebook sizes swept by the RSI experiment.
    pub bits: Vec<u32>,
    /// Vector codebook sizes for the codebook comparison; the matching
    /// matrix codebooks have `U` times as many bits.
    pub vector_bits: Vec<u32>,
    /// Codebook size for the beamforming scheme comparison.
    pub scheme_bits: u32,
    pub rsi_sweep: RsiSweep,
    pub rsi_snr_db: Vec<f64>,
    pub rsi_grid_db: Vec<f64>,
    pub lbg_training: usize,
    pub lbg_epsilon: f64,
    pub lbg_iterations: usize,
    pub canceler_bandwidths_mhz: Vec<f64>,
    pub canceler_taps_od: Vec<usize>,
    pub canceler_taps_microstrip: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub desk_scale: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            subcarriers: 512,
            cp_len: 128,
            bandwidth_hz: 400e6,
            carrier_hz: 28e9,
            users: 4,
            subarray: (16, 4),
            user_array: (16, 4),
            noise_figure_db: 10.0,
            rolloff: 1.0,
            reference_distance: 1.0,
            distance: 100.0,
            si_distance: 0.1,
            path_loss_exponent: 3.4,
            rician_db: 10.0,
            isolation_db: 55.0,
            asic_db: 25.0,
            clusters: 8,
            rays: 10,
            si_clusters: 2,
            si_rays: 8,
            angle_spread_deg: 5.0,
            separation_angle_deg: 30.0,
            rho_db: -80.0,
            beta_db: -80.0,
            err_nd_db: -120.0,
            err_si_db: -120.0,
            err_en_db: -120.0,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            bits: vec![1, 4, 8],
            vector_bits: vec![1, 2],
            scheme_bits: 8,
            rsi_sweep: RsiSweep::Error,
            rsi_snr_db: vec![-5.0, 0.0, 5.0],
            rsi_grid_db: (0..=20).map(|i| -150.0 + 5.0 * i as f64).collect(),
            lbg_training: 4096,
            lbg_epsilon: 1e-3,
            lbg_iterations: 50,
            canceler_bandwidths_mhz: vec![200.0, 400.0],
            canceler_taps_od: vec![10, 25, 50, 100],
            canceler_taps_microstrip: vec![5, 10, 20, 40, 60, 80, 100],
            trials: 50,
            seed: 1,
            desk_scale: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once(['x', 'X', '*'])
        .ok_or_else(|| Error::Config(format!("{key}: expected ROWSxCOLS, got `{v}`")))?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

/// Comma list whose items are numbers or `start:step:end` ranges.
fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [x] => out.push(parse_num(key, x)?),
            [a, s, b] => {
                let (a, s, b): (f64, f64, f64) = (parse_num(key, a)?, parse_num(key, s)?, parse_num(key, b)?);
                if !(s != 0.0) || (b - a) / s < 0.0 {
                    return Err(Error::Config(format!("{key}: empty range `{item}`")));
                }
                let n = ((b - a) / s + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| a + s * i as f64));
            }
            _ => return Err(Error::Config(format!("{key}: bad list item `{item}`"))),
        }
    }
    Ok(out)
}

fn parse_int_list<T: TryFrom<u64>>(key: &str, v: &str) -> Result<Vec<T>> {
    parse_list(key, v)?
        .into_iter()
        .map(|x| {
            if x < 0.0 || x.fract() != 0.0 {
                return Err(Error::Config(format!("{key}: `{x}` is not a non-negative integer")));
            }
            T::try_from(x as u64).map_err(|_| Error::Config(format!("{key}: `{x}` out of range")))
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got `{v}`"))),
    }
}

/// Reads `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{}`", n + 1, k.trim())));
        }
    }
    Ok(map)
}

impl SimConfig {
    /// Small configuration that keeps every experiment within minutes.
    pub fn desk() -> Self {
        SimConfig {
            subcarriers: 64,
            cp_len: 16,
            users: 2,
            subarray: (8, 2),
            user_array: (8, 2),
            vector_bits: vec![1, 2, 3, 4],
            desk_scale: true,
            ..SimConfig::default()
        }
    }

    /// Builds a configuration from `key=value` text. `desk_scale=true` in the
    /// text (or `force_desk`) selects the desk preset as the base.
    pub fn from_text(text: &str, force_desk: bool) -> Result<Self> {
        let map = parse_pairs(text)?;
        let desk = match map.get("desk_scale") {
            Some(v) => parse_bool("desk_scale", v)? || force_desk,
            None => force_desk,
        };
        let mut cfg = if desk { SimConfig::desk() } else { SimConfig::default() };
        for (k, v) in &map {
            cfg.set(k, v)?;
        }
        cfg.desk_scale = desk;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, force_desk: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        SimConfig::from_text(&text, force_desk)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "K" => self.subcarriers = parse_num(key, v)?,
            "D" => self.cp_len = parse_num(key, v)?,
            "W" => self.bandwidth_hz = parse_num(key, v)?,
            "f_c" => self.carrier_hz = parse_num(key, v)?,
            "U" => self.users = parse_num(key, v)?,
            "subarray" => self.subarray = parse_pair(key, v)?,
            "N_R" => self.user_array = parse_pair(key, v)?,
            "NF_dB" => self.noise_figure_db = parse_num(key, v)?,
            "rolloff" => self.rolloff = parse_num(key, v)?,
            "r0" => self.reference_distance = parse_num(key, v)?,
            "r" => self.distance = parse_num(key, v)?,
            "r_SI" => self.si_distance = parse_num(key, v)?,
            "mu" => self.path_loss_exponent = parse_num(key, v)?,
            "kappa_dB" => self.rician_db = parse_num(key, v)?,
            "isolation_dB" => self.isolation_db = parse_num(key, v)?,
            "asic_dB" => self.asic_db = parse_num(key, v)?,
            "N_C" => self.clusters = parse_num(key, v)?,
            "N_L" => self.rays = parse_num(key, v)?,
            "N_C_SI" => self.si_clusters = parse_num(key, v)?,
            "N_L_SI" => self.si_rays = parse_num(key, v)?,
            "spread_deg" => self.angle_spread_deg = parse_num(key, v)?,
            "separation_deg" => self.separation_angle_deg = parse_num(key, v)?,
            "rho_dB" => self.rho_db = parse_num(key, v)?,
            "beta_dB" => self.beta_db = parse_num(key, v)?,
            "sigma_e_ND_dB" => self.err_nd_db = parse_num(key, v)?,
            "sigma_e_SI_dB" => self.err_si_db = parse_num(key, v)?,
            "sigma_e_EN_dB" => self.err_en_db = parse_num(key, v)?,
            "snr_dB" => self.snr_db = parse_list(key, v)?,
            "bits" => self.bits = parse_int_list(key, v)?,
            "vector_bits" => self.vector_bits = parse_int_list(key, v)?,
            "scheme_bits" => self.scheme_bits = parse_num(key, v)?,
            "rsi_sweep" => {
                self.rsi_sweep = match v.trim() {
                    "error" => RsiSweep::Error,
                    "hwi" => RsiSweep::Hwi,
                    _ => return Err(Error::Config(format!("{key}: expected `error` or `hwi`, got `{v}`"))),
                }
            }
            "rsi_snr_dB" => self.rsi_snr_db = parse_list(key, v)?,
            "rsi_grid_dB" => self.rsi_grid_db = parse_list(key, v)?,
            "lbg_training" => self.lbg_training = parse_num(key, v)?,
            "lbg_epsilon" => self.lbg_epsilon = parse_num(key, v)?,
            "lbg_iterations" => self.lbg_iterations = parse_num(key, v)?,
            "canceler_bandwidths_MHz" => self.canceler_bandwidths_mhz = parse_list(key, v)?,
            "canceler_taps_od" => self.canceler_taps_od = parse_int_list(key, v)?,
            "canceler_taps_microstrip" => self.canceler_taps_microstrip = parse_int_list(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "desk_scale" => self.desk_scale = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("W", self.bandwidth_hz),
            ("f_c", self.carrier_hz),
            ("r0", self.reference_distance),
            ("r", self.distance),
            ("r_SI", self.si_distance),
            ("mu", self.path_loss_exponent),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        let counts = [
            ("K", self.subcarriers),
            ("U", self.users),
            ("subarray", self.subarray.0 * self.subarray.1),
            ("N_R", self.user_array.0 * self.user_array.1),
            ("N_C", self.clusters),
            ("N_L", self.rays),
            ("N_C_SI", self.si_clusters),
            ("N_L_SI", self.si_rays),
            ("trials", self.trials),
            ("lbg_training", self.lbg_training),
            ("lbg_iterations", self.lbg_iterations),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::Config(format!("rolloff {} outside [0, 1]", self.rolloff)));
        }
        if self.distance < self.reference_distance {
            return Err(Error::Config("r must not be below r0".into()));
        }
        if self.bits.iter().chain([&self.scheme_bits]).any(|&b| b == 0 || b > 16) {
            return Err(Error::Config("codebook bits must be in 1..=16".into()));
        }
        if self.vector_bits.iter().any(|&b| b == 0 || b as usize * self.users > 16) {
            return Err(Error::Config("vector codebook bits times U must be in 1..=16".into()));
        }
        let max_bits = self.bits.iter().chain(self.vector_bits.iter()).copied().chain([self.scheme_bits]).max().unwrap_or(1);
        if self.lbg_training < 1 << max_bits.min(16) {
            return Err(Error::Config(format!("lbg_training must be at least 2^{max_bits}")));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Noise power `−174 dBm/Hz + 10 log10 W + NF`, in watts.
    pub fn noise_variance(&self) -> f64 {
        db_to_linear(-174.0 - 30.0 + self.noise_figure_db) * self.bandwidth_hz
    }

    /// Linear SI power factor after isolation and analog cancellation.
    pub fn eta(&self) -> f64 {
        db_to_linear(-(self.isolation_db + self.asic_db))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_table() {
        let c = SimConfig::default();
        assert_eq!((c.subcarriers, c.cp_len, c.users), (512, 128, 4));
        assert_eq!(c.subarray.0 * c.subarray.1 * c.users, 256);
        assert!((c.eta() - 1e-8).abs() < 1e-22);
        // −174 dBm/Hz + 86.02 dB + 10 dB = −77.98 dBm.
        let dbm = 10.0 * (c.noise_variance() * 1e3).log10();
        assert!((dbm - (-174.0 + 10.0 * 400e6f64.log10() + 10.0)).abs() < 1e-9);
    }

    #[test]
    fn text_overrides_and_desk() {
        let c = SimConfig::from_text("# comment\nK = 32\nsnr_dB = -5:5:5\nsubarray=4x2\n", true).unwrap();
        assert_eq!(c.subcarriers, 32);
        assert_eq!(c.users, 2);
        assert_eq!(c.snr_db, vec![-5.0, 0.0, 5.0]);
        assert_eq!(c.subarray, (4, 2));
        assert!(c.desk_scale);
        let d = SimConfig::from_text("desk_scale=true", false).unwrap();
        assert_eq!(d, SimConfig::desk());
    }

    #[test]
    fn bad_text_rejected() {
        for bad in ["K", "nope=1", "K=abc", "K=1\nK=2", "r=0.5", "rsi_sweep=foo", "bits=0", "U=0"] {
            assert!(matches!(SimConfig::from_text(bad, false), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn hash_tracks_changes() {
        let a = SimConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.distance = 101.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
