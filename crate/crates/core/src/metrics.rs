//! Spectral efficiency of the backhaul and access links.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, log2_det_hpd, CMat};
use crate::transceiver::{AccessTerms, BackhaulCovariances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Backhaul,
    AccessSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Duplex {
    Ibfd,
    Hd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeResult {
    pub link: Link,
    pub mode: Duplex,
    pub per_subcarrier: Vec<f64>,
    pub mean: f64,
}

impl SeResult {
    fn new(link: Link, mode: Duplex, per_subcarrier: Vec<f64>) -> Result<Self> {
        if per_subcarrier.is_empty() {
            return Err(Error::InvalidInput("spectral efficiency needs at least one subcarrier".into()));
        }
        let mean = per_subcarrier.iter().sum::<f64>() / per_subcarrier.len() as f64;
        Ok(SeResult { link, mode, per_subcarrier, mean })
    }

    fn halved(mut self) -> Self {
        self.mode = Duplex::Hd;
        for v in &mut self.per_subcarrier {
            *v *= 0.5;
        }
        self.mean *= 0.5;
        self
    }
}

/// `log2 det(I + (WᴴΦW)(WᴴΩW)⁻¹)` as `log2 det(WᴴΦW + WᴴΩW) − log2 det(WᴴΩW)`.
pub fn mimo_se(phi: &CMat, omega: &CMat, w: &CMat) -> Result<f64> {
    if phi.shape() != omega.shape() || w.nrows() != phi.nrows() {
        return Err(Error::shape(format!("{:?}", phi.shape()), format!("{:?} and W {:?}", omega.shape(), w.shape())));
    }
    let s = hermitian_part(&(w.adjoint() * phi * w));
    let n = hermitian_part(&(w.adjoint() * omega * w));
    let base = log2_det_hpd(&n, "projected interference-plus-noise covariance")?;
    let total = log2_det_hpd(&(&s + &n), "projected received covariance")?;
    Ok((total - base).max(0.0))
}

/// Mean over subcarriers of [`mimo_se`].
pub fn backhaul_se(phi: &[CMat], omega: &[CMat], w: &[CMat]) -> Result<SeResult> {
    if phi.len() != omega.len() || phi.len() != w.len() {
        return Err(Error::shape(phi.len().to_string(), format!("{} and {}", omega.len(), w.len())));
    }
    let per = phi.iter().zip(omega).zip(w).map(|((p, o), w)| mimo_se(p, o, w)).collect::<Result<_>>()?;
    SeResult::new(Link::Backhaul, Duplex::Ibfd, per)
}

/// `Σ_u log2(1 + Φ_u / Ω_u)` per subcarrier; `terms[k][u]`.
pub fn access_sum_se(terms: &[Vec<AccessTerms>]) -> Result<SeResult> {
    let per = terms
        .iter()
        .map(|users| {
            users
                .iter()
                .map(|t| {
                    let o = t.omega();
                    if !(o > 0.0) || !o.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!("access interference-plus-noise power {o}")));
                    }
                    Ok((1.0 + t.phi.max(0.0) / o).log2())
                })
                .sum::<Result<f64>>()
        })
        .collect::<Result<_>>()?;
    SeResult::new(Link::AccessSum, Duplex::Ibfd, per)
}

/// Backhaul SE with and without self-interference: the half-duplex value
/// drops the SI terms, uses its own combiner `w_hd`, and is halved.
pub fn backhaul_ibfd_and_hd(covs: &[BackhaulCovariances], w: &[CMat], w_hd: &[CMat]) -> Result<(SeResult, SeResult)> {
    let phi: Vec<CMat> = covs.iter().map(|c| c.phi.clone()).collect();
    let omega: Vec<CMat> = covs.iter().map(BackhaulCovariances::omega).collect();
    let omega_hd: Vec<CMat> = covs.iter().map(BackhaulCovariances::omega_hd).collect();
    let ibfd = backhaul_se(&phi, &omega, w)?;
    let hd = backhaul_se(&phi, &omega_hd, w_hd)?.halved();
    Ok((ibfd, hd))
}

/// Half-duplex baseline from already SI-free inputs: the same SE, halved.
pub fn hd_baseline(se: SeResult) -> SeResult {
    se.halved()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, hermitian_eigen, identity, random_matrix};
    use crate::rng::{stream, Purpose};
    use crate::transceiver::{build_covariances_backhaul, mmse_combiner, BackhaulInputs, LinkParams};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn psd(n: usize, seed: u64, ridge: f64) -> CMat {
        let mut rng = stream(seed, 0, Purpose::Fixture);
        let a = random_matrix(n, n, 1.0, &mut rng);
        &a * a.adjoint() + identity(n) * c(ridge, 0.0)
    }

    #[test]
    fn trivial_cases() {
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let se = backhaul_se(&[one.clone() * c(3.0, 0.0)], &[one.clone() * c(0.5, 0.0)], &[one.clone()]).unwrap();
        assert!((se.mean - (1.0f64 + 6.0).log2()).abs() < 1e-14);
        let zero = backhaul_se(&[CMat::zeros(2, 2)], &[identity(2)], &[identity(2)]).unwrap();
        assert!(zero.mean.abs() < 1e-15);
        assert!(backhaul_se(&[identity(2)], &[CMat::zeros(2, 2)], &[identity(2)]).is_err());
        let t = AccessTerms { phi: 0.0, omega1: 0.0, omega2: 0.0, omega3: 0.0, noise: 1.0 };
        assert_eq!(access_sum_se(&[vec![t, t]]).unwrap().mean, 0.0);
        let bad = AccessTerms { noise: 0.0, ..t };
        assert!(access_sum_se(&[vec![bad]]).is_err());
    }

    #[test]
    fn perfect_zf_sinr() {
        let t = AccessTerms { phi: 4.0, omega1: 0.0, omega2: 0.0, omega3: 0.0, noise: 2.0 };
        let se = access_sum_se(&[vec![t; 3], vec![t; 3]]).unwrap();
        assert!((se.mean - 3.0 * 3f64.log2()).abs() < 1e-14);
    }

    #[test]
    fn matches_whitened_eigen_route() {
        for seed in 0..10 {
            let phi = psd(4, seed, 0.0);
            let omega = psd(4, seed + 100, 0.1);
            let mut rng = stream(seed, 1, Purpose::Fixture);
            let w = random_matrix(4, 4, 1.0, &mut rng);
            let se = mimo_se(&phi, &omega, &w).unwrap();
            // Ω^{-1/2} from an eigendecomposition.
            let (vals, vecs) = hermitian_eigen(&omega);
            let inv_sqrt = &vecs
                * CMat::from_diagonal(&nalgebra::DVector::from_iterator(4, vals.iter().map(|v| c(1.0 / v.sqrt(), 0.0))))
                * vecs.adjoint();
            let m = &inv_sqrt * &phi * &inv_sqrt;
            let (mv, _) = hermitian_eigen(&m);
            let oracle: f64 = mv.iter().map(|l| (1.0 + l).log2()).sum();
            assert!((se - oracle).abs() < 1e-9 * oracle.max(1.0), "{se} vs {oracle}");
        }
    }

    #[test]
    fn hd_identity_without_si() {
        let mut rng = stream(9, 0, Purpose::Fixture);
        let h = random_matrix(2, 2, 1.0, &mut rng);
        let f = random_matrix(2, 2, 0.5, &mut rng);
        let g = identity(2) * c(4.0, 0.0);
        let p = LinkParams { zeta: 3.0, rho: 1e-3, beta: 1e-3, noise_variance: 0.1 };
        let inp = BackhaulInputs { h_nd: &h, f_bbd: &f, h_si: None, f_bbn: &f, err_var_nd: 1e-3, err_var_si: 0.0, w_rf_gram: &g };
        let cov = build_covariances_backhaul(&inp, &p).unwrap();
        let w = mmse_combiner(&h, &f, &cov.phi, &cov.omega(), p.zeta).unwrap();
        let w_hd = mmse_combiner(&h, &f, &cov.phi, &cov.omega_hd(), p.zeta).unwrap();
        let (ibfd, hd) = backhaul_ibfd_and_hd(&[cov], &[w], &[w_hd]).unwrap();
        assert_eq!(hd.mean, 0.5 * ibfd.mean);
        assert_eq!(hd.mode, Duplex::Hd);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn common_scale_invariant(seed in 0u64..1000, scale in 1e-6f64..1e6) {
            let phi = psd(3, seed, 0.0);
            let omega = psd(3, seed + 7, 0.2);
            let w = identity(3);
            let a = mimo_se(&phi, &omega, &w).unwrap();
            let s = Complex64::new(scale, 0.0);
            let b = mimo_se(&(&phi * s), &(&omega * s), &w).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }

        #[test]
        fn se_non_increasing_in_impairments(seed in 0u64..500) {
            let mut rng = stream(seed, 3, Purpose::Fixture);
            let h = random_matrix(2, 2, 1.0, &mut rng);
            let hs = random_matrix(2, 2, 0.3, &mut rng);
            let f = random_matrix(2, 2, 0.5, &mut rng);
            let fn_ = random_matrix(2, 2, 0.5, &mut rng);
            let g = identity(2) * c(4.0, 0.0);
            let se_at = |rho: f64, beta: f64, esi: f64| {
                let p = LinkParams { zeta: 2.0, rho, beta, noise_variance: 0.05 };
                let inp = BackhaulInputs { h_nd: &h, f_bbd: &f, h_si: Some(&hs), f_bbn: &fn_, err_var_nd: 1e-3, err_var_si: esi, w_rf_gram: &g };
                let cov = build_covariances_backhaul(&inp, &p).unwrap();
                mimo_se(&cov.phi, &cov.omega(), &identity(2)).unwrap()
            };
            let base = se_at(1e-3, 1e-3, 1e-3);
            prop_assert!(se_at(1e-2, 1e-3, 1e-3) <= base + 1e-12);
            prop_assert!(se_at(1e-3, 1e-2, 1e-3) <= base + 1e-12);
            prop_assert!(se_at(1e-3, 1e-3, 1e-2) <= base + 1e-12);
        }
    }
}
