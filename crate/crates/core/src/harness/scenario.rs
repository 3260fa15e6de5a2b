//! One network realization: channels, RF beams, effective channels and the
//! spectral efficiency for a given set of impairments.

use serde::{Deserialize, Serialize};

use crate::channel::{
    close_in_path_loss, db_to_linear, draw_general_channel, generate_si_channel, ArrayGeometry, ChannelRealization,
    OfdmGrid, SiChannelRealization, SiChannelSpec, StackedChannel,
};
use crate::codebook::{Codebook, Layout};
use crate::error::{Error, Result};
use crate::estimation::{
    apply_estimation_error, beam_sweep_select, ideal_fully_connected, ideal_rf_beamformer, rf_effective_channel, LinkId,
    Side,
};
use crate::harness::config::SimConfig;
use crate::linalg::{random_matrix, CMat};
use crate::metrics::{access_sum_se, backhaul_ibfd_and_hd, hd_baseline};
use crate::rng::{stream, Purpose};
use crate::transceiver::{
    bb_precoder_svd, bb_precoder_zf, build_access_terms, build_covariances_backhaul, mmse_combiner, BackhaulInputs,
    LinkParams,
};

/// Fixed geometry and radio parameters derived from a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: SimConfig,
    pub grid: OfdmGrid,
    pub wavelength: f64,
    pub node_array: ArrayGeometry,
    pub user_array: ArrayGeometry,
    /// Layout of donor and node arrays: `U` sub-arrays.
    pub node_layout: Layout,
    /// Layout of all users' arrays stacked: one block per user.
    pub users_layout: Layout,
    pub path_loss: f64,
    pub noise_variance: f64,
    pub si_spec: SiChannelSpec,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct TrialChannels {
    pub nd: ChannelRealization,
    pub si: SiChannelRealization,
    pub en: StackedChannel,
}

/// How the RF beamformers are chosen.
#[derive(Debug, Clone, Copy)]
pub enum RfDesign<'a> {
    /// Beam sweep over codebooks for the node-side arrays and the stacked
    /// user arrays.
    Codebook { node: &'a Codebook, users: &'a Codebook },
    /// Infinite-resolution sub-array beams.
    IdealSubarray,
    /// Infinite-resolution fully-connected beams at donor and node.
    IdealFullyConnected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfBeams {
    pub f_d: CMat,
    pub w_n: CMat,
    pub f_n: CMat,
    pub w_e: CMat,
}

/// True RF effective channels of one trial plus unit-variance estimation
/// error draws that get scaled to any error level.
#[derive(Debug, Clone)]
pub struct EffectiveLinks {
    pub beams: RfBeams,
    pub nd: Vec<CMat>,
    /// Includes `√η`.
    pub si: Vec<CMat>,
    pub en: Vec<CMat>,
    pub unit_nd: Vec<CMat>,
    pub unit_si: Vec<CMat>,
    pub unit_en: Vec<CMat>,
}

/// Impairments applied on top of an [`EffectiveLinks`] instance. Variances
/// are linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impairments {
    pub snr_db: f64,
    pub rho: f64,
    pub beta: f64,
    pub err_nd: f64,
    pub err_si: f64,
    pub err_en: f64,
    /// `false` removes the SI path (perfect SIC).
    pub si_enabled: bool,
}

impl Impairments {
    /// Perfect CSI, perfect SIC, ideal hardware.
    pub fn ideal(snr_db: f64) -> Self {
        Impairments { snr_db, rho: 0.0, beta: 0.0, err_nd: 0.0, err_si: 0.0, err_en: 0.0, si_enabled: false }
    }

    /// Configured HWI and estimation errors.
    pub fn from_config(cfg: &SimConfig, snr_db: f64) -> Self {
        Impairments {
            snr_db,
            rho: db_to_linear(cfg.rho_db),
            beta: db_to_linear(cfg.beta_db),
            err_nd: db_to_linear(cfg.err_nd_db),
            err_si: db_to_linear(cfg.err_si_db),
            err_en: db_to_linear(cfg.err_en_db),
            si_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSe {
    pub backhaul_ibfd: f64,
    pub backhaul_hd: f64,
    pub access_ibfd: f64,
    pub access_hd: f64,
}

/// `P_t = snr · σ² · K · U · PL̄`.
pub fn snr_to_transmit_power(snr: f64, noise_variance: f64, subcarriers: usize, users: usize, path_loss: f64) -> Result<f64> {
    if !(snr >= 0.0) || !(noise_variance >= 0.0) || !(path_loss > 0.0) {
        return Err(Error::InvalidInput("SNR and noise must be non-negative, path loss positive".into()));
    }
    Ok(snr * noise_variance * subcarriers as f64 * users as f64 * path_loss)
}

impl Scenario {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let wavelength = cfg.wavelength();
        let ts = 1.0 / cfg.bandwidth_hz;
        let grid = OfdmGrid::new(cfg.subcarriers, cfg.cp_len, ts, cfg.rolloff)?;
        let spacing = wavelength / 2.0;
        let node_array = ArrayGeometry::paneled(cfg.subarray.0, cfg.subarray.1, cfg.users, spacing)?;
        let user_array = ArrayGeometry::upa(cfg.user_array.0, cfg.user_array.1, spacing)?;
        let node_layout = Layout::new(node_array.len(), cfg.users)?;
        let users_layout = Layout::new(user_array.len() * cfg.users, cfg.users)?;
        let path_loss = close_in_path_loss(cfg.distance, cfg.reference_distance, wavelength, cfg.path_loss_exponent)?;
        let si_spec = SiChannelSpec {
            rician_factor: db_to_linear(cfg.rician_db),
            tx_rx_separation: cfg.si_distance,
            separation_angle: cfg.separation_angle_deg.to_radians(),
            nlos_clusters: cfg.si_clusters,
            nlos_rays: cfg.si_rays,
            angle_spread: cfg.angle_spread_deg.to_radians(),
        };
        Ok(Scenario {
            cfg: cfg.clone(),
            grid,
            wavelength,
            node_array,
            user_array,
            node_layout,
            users_layout,
            path_loss,
            noise_variance: cfg.noise_variance(),
            si_spec,
            eta: cfg.eta(),
        })
    }

    /// Per-stream pilot and data power `ζ = P_t / (K U)`.
    pub fn zeta(&self, snr_db: f64) -> Result<f64> {
        let pt = snr_to_transmit_power(db_to_linear(snr_db), self.noise_variance, self.cfg.subcarriers, self.cfg.users, self.path_loss)?;
        Ok(pt / (self.cfg.subcarriers * self.cfg.users) as f64)
    }

    pub fn draw_channels(&self, seed: u64, trial: u64) -> Result<TrialChannels> {
        let c = &self.cfg;
        let spread = c.angle_spread_deg.to_radians();
        let nd = draw_general_channel(
            &self.node_array,
            &self.node_array,
            c.clusters,
            c.rays,
            spread,
            &self.grid,
            self.path_loss,
            self.wavelength,
            &mut stream(seed, trial, Purpose::Backhaul),
        )?;
        let si = generate_si_channel(
            &self.node_array,
            &self.node_array,
            &self.si_spec,
            &self.grid,
            self.wavelength,
            &mut stream(seed, trial, Purpose::SelfInterference),
        )?;
        let mut rng = stream(seed, trial, Purpose::Access);
        let users = (0..c.users)
            .map(|_| {
                draw_general_channel(
                    &self.node_array,
                    &self.user_array,
                    c.clusters,
                    c.rays,
                    spread,
                    &self.grid,
                    self.path_loss,
                    self.wavelength,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialChannels { nd, si, en: StackedChannel::new(users)? })
    }

    pub fn design_beams(&self, ch: &TrialChannels, design: RfDesign) -> Result<RfBeams> {
        Ok(match design {
            RfDesign::Codebook { node, users } => {
                let b = beam_sweep_select(node, node, &ch.nd)?;
                let a = beam_sweep_select(node, users, &ch.en)?;
                RfBeams {
                    f_d: node.entries[b.p].to_matrix(),
                    w_n: node.entries[b.q].to_matrix(),
                    f_n: node.entries[a.p].to_matrix(),
                    w_e: users.entries[a.q].to_matrix(),
                }
            }
            RfDesign::IdealSubarray => RfBeams {
                f_d: ideal_rf_beamformer(&ch.nd, self.node_layout, Side::Transmit)?.to_matrix(),
                w_n: ideal_rf_beamformer(&ch.nd, self.node_layout, Side::Receive)?.to_matrix(),
                f_n: ideal_rf_beamformer(&ch.en, self.node_layout, Side::Transmit)?.to_matrix(),
                w_e: ideal_rf_beamformer(&ch.en, self.users_layout, Side::Receive)?.to_matrix(),
            },
            RfDesign::IdealFullyConnected => {
                let u = self.cfg.users;
                RfBeams {
                    f_d: ideal_fully_connected(&ch.nd, u, Side::Transmit)?,
                    w_n: ideal_fully_connected(&ch.nd, u, Side::Receive)?,
                    f_n: ideal_fully_connected(&ch.en, u, Side::Transmit)?,
                    w_e: ideal_rf_beamformer(&ch.en, self.users_layout, Side::Receive)?.to_matrix(),
                }
            }
        })
    }

    /// Effective channels for the chosen beams and the trial's error draws.
    pub fn effective_links(&self, ch: &TrialChannels, beams: RfBeams, seed: u64, trial: u64) -> Result<EffectiveLinks> {
        let nd = rf_effective_channel(&ch.nd, &beams.w_n, &beams.f_d, 1.0)?;
        let si = rf_effective_channel(&ch.si, &beams.w_n, &beams.f_n, self.eta.sqrt())?;
        let en = rf_effective_channel(&ch.en, &beams.w_e, &beams.f_n, 1.0)?;
        let mut rng = stream(seed, trial, Purpose::Estimation);
        let mut draw = |set: &[CMat]| -> Vec<CMat> { set.iter().map(|m| random_matrix(m.nrows(), m.ncols(), 1.0, &mut rng)).collect() };
        let unit_nd = draw(&nd);
        let unit_si = draw(&si);
        let unit_en = draw(&en);
        Ok(EffectiveLinks { beams, nd, si, en, unit_nd, unit_si, unit_en })
    }

    pub fn evaluate(&self, links: &EffectiveLinks, imp: &Impairments) -> Result<TrialSe> {
        let zeta = self.zeta(imp.snr_db)?;
        let p = LinkParams { zeta, rho: imp.rho, beta: imp.beta, noise_variance: self.noise_variance };
        let h_nd = apply_estimation_error(&links.nd, imp.err_nd, &links.unit_nd, LinkId::Nd)?.h_eff;
        let h_si = apply_estimation_error(&links.si, imp.err_si, &links.unit_si, LinkId::Si)?.h_eff;
        let h_en = apply_estimation_error(&links.en, imp.err_en, &links.unit_en, LinkId::En)?.h_eff;
        let b = &links.beams;
        let w_gram = b.w_n.adjoint() * &b.w_n;
        let w_norms: Vec<f64> = (0..b.w_e.ncols()).map(|u| b.w_e.column(u).norm_squared()).collect();

        let k_total = h_nd.len();
        let mut covs = Vec::with_capacity(k_total);
        let mut w = Vec::with_capacity(k_total);
        let mut w_hd = Vec::with_capacity(k_total);
        let mut access = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let f_bbn = bb_precoder_zf(&h_en[k], &b.f_n)?.f;
            let f_bbd = bb_precoder_svd(&h_nd[k], &b.f_d)?;
            let inp = BackhaulInputs {
                h_nd: &h_nd[k],
                f_bbd: &f_bbd,
                h_si: if imp.si_enabled { Some(&h_si[k]) } else { None },
                f_bbn: &f_bbn,
                err_var_nd: imp.err_nd,
                err_var_si: if imp.si_enabled { imp.err_si } else { 0.0 },
                w_rf_gram: &w_gram,
            };
            let cov = build_covariances_backhaul(&inp, &p)?;
            w.push(mmse_combiner(&h_nd[k], &f_bbd, &cov.phi, &cov.omega(), zeta)?);
            w_hd.push(mmse_combiner(&h_nd[k], &f_bbd, &cov.phi, &cov.omega_hd(), zeta)?);
            covs.push(cov);
            access.push(build_access_terms(&h_en[k], &f_bbn, imp.err_en, &w_norms, &p)?);
        }
        let (ibfd, hd) = backhaul_ibfd_and_hd(&covs, &w, &w_hd)?;
        let acc = access_sum_se(&access)?;
        let acc_hd = hd_baseline(acc.clone());
        Ok(TrialSe { backhaul_ibfd: ibfd.mean, backhaul_hd: hd.mean, access_ibfd: acc.mean, access_hd: acc_hd.mean })
    }
}

/// Arithmetic mean; NaN for an empty input.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}
