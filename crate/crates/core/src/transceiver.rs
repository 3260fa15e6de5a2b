//! Signal-domain pieces of the full-duplex node: hardware impairments,
//! digital SIC, baseband beamformers and the closed-form covariances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, diag_part, fix_phase, hermitian_eigen, hermitian_part, random_vector, solve_hpd, CMat, CVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwiConfig {
    pub rho: f64,
    pub beta: f64,
}

impl HwiConfig {
    pub const NONE: HwiConfig = HwiConfig { rho: 0.0, beta: 0.0 };

    pub fn new(rho: f64, beta: f64) -> Result<Self> {
        if !(rho >= 0.0 && beta >= 0.0) || !rho.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput(format!("HWI factors must be non-negative, got rho={rho} beta={beta}")));
        }
        Ok(HwiConfig { rho, beta })
    }
}

/// Isolation plus analog cancellation, both in dB of SI power suppression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SicBudget {
    pub isolation_db: f64,
    pub analog_db: f64,
}

impl Default for SicBudget {
    fn default() -> Self {
        SicBudget { isolation_db: 55.0, analog_db: 25.0 }
    }
}

impl SicBudget {
    /// Linear SI power factor η.
    pub fn eta(&self) -> Result<f64> {
        let total = self.isolation_db + self.analog_db;
        if !(total >= 0.0) || !total.is_finite() {
            return Err(Error::InvalidInput(format!("SI suppression {total} dB must be non-negative")));
        }
        Ok(10f64.powf(-total / 10.0))
    }
}

/// `ρ ζ diag(F Fᴴ)`.
pub fn tx_hwi_variances(f_bb: &CMat, zeta: f64, rho: f64) -> Vec<f64> {
    f_bb.row_iter().map(|r| rho * zeta * r.iter().map(|z| z.norm_sqr()).sum::<f64>()).collect()
}

/// Adds transmit distortion to a precoded baseband vector `x̃ = F s`.
pub fn apply_tx_hwi<R: Rng + ?Sized>(x: &CVec, f_bb: &CMat, zeta: f64, rho: f64, rng: &mut R) -> Result<CVec> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidInput(format!("rho {rho} must be non-negative")));
    }
    if x.len() != f_bb.nrows() {
        return Err(Error::shape(f_bb.nrows().to_string(), x.len().to_string()));
    }
    if rho == 0.0 {
        return Ok(x.clone());
    }
    let vars = tx_hwi_variances(f_bb, zeta, rho);
    let unit = random_vector(x.len(), 1.0, rng);
    Ok(CVec::from_fn(x.len(), |i, _| x[i] + unit[i] * vars[i].sqrt()))
}

/// Adds receive distortion with variance `β · cov_diag[i]` per entry.
pub fn apply_rx_hwi<R: Rng + ?Sized>(y: &CVec, cov_diag: &[f64], beta: f64, rng: &mut R) -> Result<CVec> {
    if y.len() != cov_diag.len() {
        return Err(Error::shape(y.len().to_string(), cov_diag.len().to_string()));
    }
    let unit = random_vector(y.len(), 1.0, rng);
    Ok(CVec::from_fn(y.len(), |i, _| y[i] + unit[i] * (beta * cov_diag[i].max(0.0)).sqrt()))
}

/// Removes the reconstructed own-transmission `Ĥ_SI F_BBN s_N`.
pub fn digital_sic(y: &CVec, h_si_hat: &CMat, f_bbn: &CMat, s_n: &CVec) -> Result<CVec> {
    if h_si_hat.nrows() != y.len() || h_si_hat.ncols() != f_bbn.nrows() || f_bbn.ncols() != s_n.len() {
        return Err(Error::shape(
            format!("{} x {} x {}", y.len(), f_bbn.nrows(), s_n.len()),
            format!("{}x{} · {}x{} · {}", h_si_hat.nrows(), h_si_hat.ncols(), f_bbn.nrows(), f_bbn.ncols(), s_n.len()),
        ));
    }
    Ok(y - h_si_hat * (f_bbn * s_n))
}

fn check_square(h: &CMat, f_rf: &CMat) -> Result<()> {
    if !h.is_square() || f_rf.ncols() != h.ncols() {
        return Err(Error::shape(
            format!("square effective channel with {} RF chains", f_rf.ncols()),
            format!("{}x{}", h.nrows(), h.ncols()),
        ));
    }
    Ok(())
}

/// Right singular vectors of `Ĥ`, descending singular values, each with its
/// first significant entry real-positive, scaled so `‖F_RF F‖²_F = U`.
pub fn bb_precoder_svd(h_eff: &CMat, f_rf: &CMat) -> Result<CMat> {
    check_square(h_eff, f_rf)?;
    let u = h_eff.ncols();
    let (_, mut v) = hermitian_eigen(&(h_eff.adjoint() * h_eff));
    for j in 0..u {
        let mut col: CVec = v.column(j).into_owned();
        fix_phase(&mut col);
        v.set_column(j, &col);
    }
    let p = (f_rf * &v).norm_squared();
    if !(p > 0.0) {
        return Err(Error::IllPosed("RF precoder annihilates the baseband precoder".into()));
    }
    Ok(v * c((u as f64 / p).sqrt(), 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder {
    pub f: CMat,
    /// Ridge added to `ĤĤᴴ` when it was numerically singular.
    pub ridge: Option<f64>,
}

/// `Ĥᴴ(ĤĤᴴ)⁻¹` with per-column normalization `‖F_RF f_u‖ = 1`.
pub fn bb_precoder_zf(h_eff: &CMat, f_rf: &CMat) -> Result<ZfPrecoder> {
    check_square(h_eff, f_rf)?;
    let u = h_eff.nrows();
    let gram = h_eff * h_eff.adjoint();
    let (vals, _) = hermitian_eigen(&gram);
    let top = vals[0];
    let ridge = if top > 0.0 && vals[u - 1] > 1e-14 * top {
        None
    } else {
        Some(if top > 0.0 { 1e-12 * gram.trace().re / u as f64 } else { f64::MIN_POSITIVE })
    };
    let reg = &gram + CMat::identity(u, u) * c(ridge.unwrap_or(0.0), 0.0);
    let inv_part = solve_hpd(&reg, &CMat::identity(u, u), "ZF Gram matrix")?;
    let mut f = h_eff.adjoint() * inv_part;
    for j in 0..u {
        let n = (f_rf * f.column(j)).norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::IllPosed(format!("ZF column {j} cannot be normalized")));
        }
        f.column_mut(j).scale_mut(1.0 / n);
    }
    Ok(ZfPrecoder { f, ridge })
}

/// `W = ζ (Φ + Ω)⁻¹ Ĥ F`.
pub fn mmse_combiner(h_eff: &CMat, f_bb: &CMat, phi: &CMat, omega: &CMat, zeta: f64) -> Result<CMat> {
    let a = phi + omega;
    if a.nrows() != h_eff.nrows() {
        return Err(Error::shape(h_eff.nrows().to_string(), a.nrows().to_string()));
    }
    Ok(solve_hpd(&a, &(h_eff * f_bb), "MMSE covariance")? * c(zeta, 0.0))
}

/// `E‖Wᴴ y − s‖²` for `y = Ĥ F s + n`, `Cov y = Φ + Ω`, `E y sᴴ = ζ Ĥ F`.
pub fn mmse_objective(w: &CMat, h_eff: &CMat, f_bb: &CMat, phi: &CMat, omega: &CMat, zeta: f64) -> f64 {
    let cross = h_eff * f_bb * c(zeta, 0.0);
    let u = f_bb.ncols() as f64;
    let t = w.adjoint() * (phi + omega) * w - w.adjoint() * &cross - cross.adjoint() * w;
    t.trace().re + zeta * u
}

/// Transmit and receive impairments plus estimation quality seen on one
/// link evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub zeta: f64,
    pub rho: f64,
    pub beta: f64,
    pub noise_variance: f64,
}

/// Inputs for the backhaul covariances on one subcarrier. `h_si` is the
/// estimated SI effective channel including `√η`; `None` disables the SI
/// path entirely.
#[derive(Debug, Clone, Copy)]
pub struct BackhaulInputs<'a> {
    pub h_nd: &'a CMat,
    pub f_bbd: &'a CMat,
    pub h_si: Option<&'a CMat>,
    pub f_bbn: &'a CMat,
    pub err_var_nd: f64,
    pub err_var_si: f64,
    /// `W_RFᴴ W_RF` of the node's receive RF combiner.
    pub w_rf_gram: &'a CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackhaulCovariances {
    pub phi: CMat,
    /// Backhaul transmitter HWI and estimation error.
    pub omega1: CMat,
    /// SI transmitter HWI and estimation error.
    pub omega2: CMat,
    /// Receiver HWI.
    pub omega3: CMat,
    /// Receiver HWI for the half-duplex node (no SI contribution).
    pub omega3_hd: CMat,
    pub noise: CMat,
}

impl BackhaulCovariances {
    pub fn omega(&self) -> CMat {
        &self.omega1 + &self.omega2 + &self.omega3 + &self.noise
    }

    pub fn omega_hd(&self) -> CMat {
        &self.omega1 + &self.omega3_hd + &self.noise
    }
}

fn hwi_and_error(h: &CMat, f: &CMat, p: &LinkParams, err_var: f64) -> CMat {
    let ffh = f * f.adjoint();
    let n = h.nrows();
    let hwi = h * diag_part(&ffh) * h.adjoint() * c(p.zeta * p.rho, 0.0);
    let err = err_var * p.zeta * (p.rho + 1.0) * ffh.trace().re;
    hermitian_part(&(hwi + CMat::identity(n, n) * c(err, 0.0)))
}

pub fn build_covariances_backhaul(inp: &BackhaulInputs, p: &LinkParams) -> Result<BackhaulCovariances> {
    let u = inp.h_nd.nrows();
    if inp.h_nd.ncols() != inp.f_bbd.nrows() || inp.w_rf_gram.shape() != (u, u) {
        return Err(Error::shape(format!("{u} streams"), format!("{:?} and {:?}", inp.f_bbd.shape(), inp.w_rf_gram.shape())));
    }
    let hf = inp.h_nd * inp.f_bbd;
    let phi = hermitian_part(&(&hf * hf.adjoint() * c(p.zeta, 0.0)));
    let omega1 = hwi_and_error(inp.h_nd, inp.f_bbd, p, inp.err_var_nd);
    let omega2 = match inp.h_si {
        Some(h_si) => {
            if h_si.nrows() != u || h_si.ncols() != inp.f_bbn.nrows() {
                return Err(Error::shape(format!("{u} rows"), format!("{:?}", h_si.shape())));
            }
            hwi_and_error(h_si, inp.f_bbn, p, inp.err_var_si)
        }
        None => CMat::zeros(u, u),
    };
    let noise = hermitian_part(&(inp.w_rf_gram * c(p.noise_variance, 0.0)));
    let base = &phi + &omega1 + &noise;
    let omega3 = diag_part(&(&base + &omega2)) * c(p.beta, 0.0);
    let omega3_hd = diag_part(&base) * c(p.beta, 0.0);
    Ok(BackhaulCovariances { phi, omega1, omega2, omega3, omega3_hd, noise })
}

/// Per-user access-link power terms on one subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessTerms {
    pub phi: f64,
    /// Multiuser interference and transmitter HWI.
    pub omega1: f64,
    /// Estimation error.
    pub omega2: f64,
    /// Receiver HWI.
    pub omega3: f64,
    pub noise: f64,
}

impl AccessTerms {
    pub fn omega(&self) -> f64 {
        self.omega1 + self.omega2 + self.omega3 + self.noise
    }
}

/// `h_en` is the U×U estimated access effective channel (row `u` seen by
/// user `u`), `w_norms[u] = ‖w_RF,u‖²`.
pub fn build_access_terms(h_en: &CMat, f_bbn: &CMat, err_var: f64, w_norms: &[f64], p: &LinkParams) -> Result<Vec<AccessTerms>> {
    let u = h_en.nrows();
    if h_en.ncols() != f_bbn.nrows() || f_bbn.ncols() != u || w_norms.len() != u {
        return Err(Error::shape(format!("{u} users"), format!("{:?}, {:?}, {}", h_en.shape(), f_bbn.shape(), w_norms.len())));
    }
    let hf = h_en * f_bbn;
    let ffh = f_bbn * f_bbn.adjoint();
    let dg: Vec<f64> = (0..ffh.nrows()).map(|i| ffh[(i, i)].re).collect();
    let tr: f64 = dg.iter().sum();
    Ok((0..u)
        .map(|user| {
            let phi = p.zeta * hf[(user, user)].norm_sqr();
            let mui: f64 = (0..u).filter(|&v| v != user).map(|v| hf[(user, v)].norm_sqr()).sum();
            let hwi: f64 = h_en.row(user).iter().zip(&dg).map(|(h, d)| h.norm_sqr() * d).sum();
            let omega1 = p.zeta * mui + p.zeta * p.rho * hwi;
            let omega2 = err_var * p.zeta * (p.rho + 1.0) * tr;
            let noise = p.noise_variance * w_norms[user];
            let omega3 = p.beta * (phi + omega1 + omega2 + noise);
            AccessTerms { phi, omega1, omega2, omega3, noise }
        })
        .collect())
}
