//! RF beam selection and RF effective channel estimation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::WidebandChannel;
use crate::codebook::{Codebook, Codeword, Layout};
use crate::error::{Error, Result};
use crate::linalg::{fix_phase, hermitian_eigen, identity, random_matrix, CMat, CVec, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkId {
    /// Donor to IAB-node backhaul.
    Nd,
    /// IAB-node transmitter to its own receiver.
    Si,
    /// IAB-node to users.
    En,
}

/// Orthogonal pilots `S[k]` with `S[k] S[k]ᴴ = ζ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    pub zeta: f64,
    pub per_subcarrier: Vec<CMat>,
}

impl PilotBlock {
    /// `√ζ` times the unitary DFT matrix on every subcarrier.
    pub fn dft(streams: usize, subcarriers: usize, zeta: f64) -> Result<Self> {
        if streams == 0 || subcarriers == 0 {
            return Err(Error::InvalidInput("pilot block needs streams and subcarriers".into()));
        }
        if !(zeta > 0.0) || !zeta.is_finite() {
            return Err(Error::InvalidInput(format!("pilot power {zeta} must be positive")));
        }
        let n = streams as f64;
        let amp = (zeta / n).sqrt();
        let s = CMat::from_fn(streams, streams, |r, c| {
            Complex64::from_polar(amp, -2.0 * PI * ((r * c) % streams) as f64 / n)
        });
        Ok(PilotBlock {
            zeta,
            per_subcarrier: vec![s; subcarriers],
        })
    }

    pub fn streams(&self) -> usize {
        self.per_subcarrier[0].nrows()
    }

    fn check_orthogonal(&self) -> Result<()> {
        let u = self.streams();
        for (k, s) in self.per_subcarrier.iter().enumerate() {
            if s.shape() != (u, u) {
                return Err(Error::shape(format!("{u}x{u}"), format!("{}x{}", s.nrows(), s.ncols())));
            }
            let dev = (s * s.adjoint() - identity(u) * Complex64::new(self.zeta, 0.0)).norm();
            if !(dev <= 1e-9 * self.zeta * u as f64) {
                return Err(Error::IllPosed(format!("pilot block on subcarrier {k} is not orthogonal")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkEstimate {
    pub link: LinkId,
    pub h_eff: Vec<CMat>,
    pub error_variance: f64,
}

/// `scale · Wᴴ H[k] F` for every subcarrier.
pub fn rf_effective_channel(channel: &dyn WidebandChannel, w_rf: &CMat, f_rf: &CMat, scale: f64) -> Result<Vec<CMat>> {
    if w_rf.nrows() != channel.rows() || f_rf.nrows() != channel.cols() {
        return Err(Error::shape(
            format!("combiner {} rows, precoder {} rows", channel.rows(), channel.cols()),
            format!("{} and {}", w_rf.nrows(), f_rf.nrows()),
        ));
    }
    let s = Complex64::new(scale, 0.0);
    Ok(channel.effective(w_rf, f_rf).into_iter().map(|m| m * s).collect())
}

/// LS estimate `Ĥ[k] = Y[k] S[k]ᴴ / ζ`.
pub fn estimate_effective_channel(received: &[CMat], pilots: &PilotBlock, link: LinkId) -> Result<LinkEstimate> {
    pilots.check_orthogonal()?;
    if received.len() != pilots.per_subcarrier.len() {
        return Err(Error::shape(pilots.per_subcarrier.len().to_string(), received.len().to_string()));
    }
    let inv = Complex64::new(1.0 / pilots.zeta, 0.0);
    let h_eff = received
        .iter()
        .zip(&pilots.per_subcarrier)
        .map(|(y, s)| {
            if y.ncols() != s.nrows() {
                return Err(Error::shape(s.nrows().to_string(), y.ncols().to_string()));
            }
            Ok(y * s.adjoint() * inv)
        })
        .collect::<Result<_>>()?;
    Ok(LinkEstimate { link, h_eff, error_variance: 0.0 })
}

/// `Ĥ[k] = H[k] − Δ[k]` with i.i.d. CN(0, σ_e²) entries in `Δ[k]`.
pub fn inject_estimation_error<R: Rng + ?Sized>(
    h_true: &[CMat],
    error_variance: f64,
    link: LinkId,
    rng: &mut R,
) -> Result<LinkEstimate> {
    if !(error_variance >= 0.0) || !error_variance.is_finite() {
        return Err(Error::InvalidInput(format!("error variance {error_variance} must be non-negative")));
    }
    let unit: Vec<CMat> = h_true.iter().map(|h| random_matrix(h.nrows(), h.ncols(), 1.0, rng)).collect();
    apply_estimation_error(h_true, error_variance, &unit, link)
}

/// `Ĥ[k] = H[k] − σ_e Δ₁[k]` for pre-drawn unit-variance `Δ₁`, so one draw
/// can be reused across error levels.
pub fn apply_estimation_error(h_true: &[CMat], error_variance: f64, unit: &[CMat], link: LinkId) -> Result<LinkEstimate> {
    if !(error_variance >= 0.0) || !error_variance.is_finite() {
        return Err(Error::InvalidInput(format!("error variance {error_variance} must be non-negative")));
    }
    if unit.len() != h_true.len() || unit.iter().zip(h_true).any(|(d, h)| d.shape() != h.shape()) {
        return Err(Error::shape(format!("{} matrices", h_true.len()), format!("{} error draws", unit.len())));
    }
    let s = Complex64::new(error_variance.sqrt(), 0.0);
    let h_eff = h_true
        .iter()
        .zip(unit)
        .map(|(h, d)| if error_variance == 0.0 { h.clone() } else { h - d * s })
        .collect();
    Ok(LinkEstimate { link, h_eff, error_variance })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamChoice {
    /// Precoder codeword index.
    pub p: usize,
    /// Combiner codeword index.
    pub q: usize,
    /// Objective value of the winning pair.
    pub power: f64,
}

fn check_books(tx: &Codebook, rx: &Codebook, channel: &dyn WidebandChannel) -> Result<()> {
    if tx.is_empty() || rx.is_empty() {
        return Err(Error::InvalidInput("beam sweep needs non-empty codebooks".into()));
    }
    if tx.layout.antennas != channel.cols() || rx.layout.antennas != channel.rows() {
        return Err(Error::shape(
            format!("{}x{} channel", channel.rows(), channel.cols()),
            format!("codebooks for {}x{}", rx.layout.antennas, tx.layout.antennas),
        ));
    }
    Ok(())
}

fn argmax(table: impl Iterator<Item = (usize, usize, f64)>) -> BeamChoice {
    let mut best = BeamChoice { p: 0, q: 0, power: f64::NEG_INFINITY };
    for (p, q, v) in table {
        if v > best.power {
            best = BeamChoice { p, q, power: v };
        }
    }
    best
}

/// `Σ_k ‖W_qᴴ H[k] F_p‖²_F` for every pair, precoder-major.
///
/// With identity pilots plus HWI and noise, the expected received power of
/// pair `(p, q)` is `(1+ρ)(1+β) ζ` times this value plus a constant shared by
/// all pairs, so it ranks pairs exactly like the expected received power.
pub fn sweep_power_table(tx: &Codebook, rx: &Codebook, channel: &dyn WidebandChannel) -> Result<Vec<Vec<f64>>> {
    check_books(tx, rx, channel)?;
    let layout = rx.layout;
    let nb = layout.block_len();
    let u_rx = layout.subarrays;
    Ok(tx
        .entries
        .iter()
        .map(|fp| {
            // R_u = Σ_k G_u[k] G_u[k]ᴴ with G_u the block-u rows of H[k] F_p;
            // then the pair power is Σ_u w_uᴴ R_u w_u.
            let hf = channel.times(&fp.to_matrix());
            let grams: Vec<CMat> = (0..u_rx)
                .map(|u| {
                    let mut r = CMat::zeros(nb, nb);
                    for m in &hf {
                        let g = m.rows(u * nb, nb);
                        r += &g * g.adjoint();
                    }
                    r
                })
                .collect();
            rx.entries
                .iter()
                .map(|wq| {
                    (0..u_rx)
                        .map(|u| {
                            let w = CVec::from_column_slice(wq.block(u));
                            (w.adjoint() * &grams[u] * &w)[(0, 0)].re
                        })
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Pair with the largest expected received power; ties go to the lowest
/// `(p, q)` in lexicographic order.
pub fn beam_sweep_select(tx: &Codebook, rx: &Codebook, channel: &dyn WidebandChannel) -> Result<BeamChoice> {
    let table = sweep_power_table(tx, rx, channel)?;
    Ok(argmax(
        table
            .iter()
            .enumerate()
            .flat_map(|(p, row)| row.iter().enumerate().map(move |(q, &v)| (p, q, v))),
    ))
}

/// Impairments seen while sweeping with pilots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepImpairments {
    pub rho: f64,
    pub beta: f64,
    pub noise_variance: f64,
}

/// One noisy pilot observation
/// `Y = Wᴴ[H F (S + E) + Z] + G` for every subcarrier.
///
/// Draw order per subcarrier: `E` (U×U, variance ρζ), `Z` (rows×U, variance
/// σ²), then `G` (U×U) whose row `u` has variance
/// `β [(1+ρ) ζ (WᴴHF)(WᴴHF)ᴴ + σ² WᴴW]_uu`.
pub fn received_pilots<R: Rng + ?Sized>(
    channel: &dyn WidebandChannel,
    f_rf: &CMat,
    w_rf: &CMat,
    pilots: &PilotBlock,
    imp: &SweepImpairments,
    rng: &mut R,
) -> Result<Vec<CMat>> {
    let u = pilots.streams();
    if f_rf.ncols() != u {
        return Err(Error::shape(u.to_string(), f_rf.ncols().to_string()));
    }
    let zeta = pilots.zeta;
    let hf = channel.times(f_rf);
    let wh = w_rf.adjoint();
    let wtw = &wh * w_rf;
    Ok(hf
        .iter()
        .zip(&pilots.per_subcarrier)
        .map(|(hf_k, s)| {
            let e = random_matrix(u, u, imp.rho * zeta, rng);
            let z = random_matrix(hf_k.nrows(), u, imp.noise_variance, rng);
            let eff = &wh * hf_k;
            let y_tilde = &eff * (s + e) + &wh * z;
            let cov = &eff * eff.adjoint() * Complex64::new((1.0 + imp.rho) * zeta, 0.0) + &wtw * Complex64::new(imp.noise_variance, 0.0);
            let mut g = random_matrix(w_rf.ncols(), u, 1.0, rng);
            for (r, mut row) in g.row_iter_mut().enumerate() {
                row *= Complex64::new((imp.beta * cov[(r, r)].re.max(0.0)).sqrt(), 0.0);
            }
            y_tilde + g
        })
        .collect())
}

/// Sweep on actual noisy pilot observations: every pair `(p, q)` in
/// lexicographic order gets one [`received_pilots`] draw.
pub fn beam_sweep_select_noisy<R: Rng + ?Sized>(
    tx: &Codebook,
    rx: &Codebook,
    channel: &dyn WidebandChannel,
    pilots: &PilotBlock,
    imp: &SweepImpairments,
    rng: &mut R,
) -> Result<BeamChoice> {
    check_books(tx, rx, channel)?;
    pilots.check_orthogonal()?;
    let mut table = Vec::with_capacity(tx.len() * rx.len());
    for (p, f) in tx.entries.iter().enumerate() {
        let fm = f.to_matrix();
        for (q, w) in rx.entries.iter().enumerate() {
            let y = received_pilots(channel, &fm, &w.to_matrix(), pilots, imp, rng)?;
            let power: f64 = y.iter().map(crate::linalg::fro2).sum();
            table.push((p, q, power));
        }
    }
    Ok(argmax(table.into_iter()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Transmit,
    Receive,
}

fn selector(total: usize, start: usize, len: usize) -> CMat {
    CMat::from_fn(total, len, |r, c| if r == start + c { Complex64::new(1.0, 0.0) } else { ZERO })
}

fn dominant_phase(cov: &CMat) -> Vec<Complex64> {
    let (_, vecs) = hermitian_eigen(cov);
    let mut v: CVec = vecs.column(0).into_owned();
    fix_phase(&mut v);
    v.iter().map(|z| Complex64::from_polar(1.0, z.arg())).collect()
}

/// Infinite-resolution sub-array beamformer: per sub-array, the phases of
/// the dominant eigenvector of `Σ_k H_uᴴ H_u` (transmit side, `H_u` the
/// block-`u` columns) or `Σ_k H_u H_uᴴ` (receive side, block-`u` rows).
pub fn ideal_rf_beamformer(channel: &dyn WidebandChannel, layout: Layout, side: Side) -> Result<Codeword> {
    let n = match side {
        Side::Transmit => channel.cols(),
        Side::Receive => channel.rows(),
    };
    if n != layout.antennas {
        return Err(Error::shape(layout.antennas.to_string(), n.to_string()));
    }
    let nb = layout.block_len();
    let mut support = Vec::with_capacity(n);
    for u in 0..layout.subarrays {
        let sel = selector(n, u * nb, nb);
        let cov = match side {
            Side::Transmit => channel.times(&sel).iter().fold(CMat::zeros(nb, nb), |acc, m| acc + m.adjoint() * m),
            Side::Receive => channel
                .effective(&sel, &identity(channel.cols()))
                .iter()
                .fold(CMat::zeros(nb, nb), |acc, m| acc + m * m.adjoint()),
        };
        support.extend(dominant_phase(&cov));
    }
    Codeword::new(layout, support)
}

/// Fully-connected infinite-resolution beamformer: the phases of the top
/// `streams` eigenvectors of the full-array covariance, one per RF chain.
pub fn ideal_fully_connected(channel: &dyn WidebandChannel, streams: usize, side: Side) -> Result<CMat> {
    let (n, cov) = match side {
        Side::Transmit => {
            let n = channel.cols();
            let c = channel.times(&identity(n)).iter().fold(CMat::zeros(n, n), |acc, m| acc + m.adjoint() * m);
            (n, c)
        }
        Side::Receive => {
            let n = channel.rows();
            let c = channel
                .effective(&identity(n), &identity(channel.cols()))
                .iter()
                .fold(CMat::zeros(n, n), |acc, m| acc + m * m.adjoint());
            (n, c)
        }
    };
    if streams == 0 || streams > n {
        return Err(Error::InvalidInput(format!("{streams} RF chains for {n} antennas")));
    }
    let (_, vecs) = hermitian_eigen(&cov);
    let mut out = CMat::zeros(n, streams);
    for s in 0..streams {
        let mut v: CVec = vecs.column(s).into_owned();
        fix_phase(&mut v);
        for r in 0..n {
            out[(r, s)] = Complex64::from_polar(1.0, v[r].arg());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        generate_general_channel, steering_vector, ArrayGeometry, ChannelRealization, ClusterRayParams, OfdmGrid, Ray,
        SPEED_OF_LIGHT,
    };
    use crate::codebook::random_training_set;
    use crate::linalg::{c, fro2};
    use crate::rng::{stream, Purpose};

    const LAMBDA: f64 = SPEED_OF_LIGHT / 28e9;

    fn random_channel(seed: u64, tx: &ArrayGeometry, rx: &ArrayGeometry, k: usize) -> ChannelRealization {
        let grid = OfdmGrid::new(k, 4, 1.0 / 400e6, 1.0).unwrap();
        let mut rng = stream(seed, 0, Purpose::Fixture);
        let params = ClusterRayParams::draw(2, 3, grid.delay_span(), 0.1, &mut rng).unwrap();
        generate_general_channel(tx, rx, &params, &grid, 1.0, LAMBDA).unwrap()
    }

    fn geom(panels: usize) -> ArrayGeometry {
        ArrayGeometry::paneled(2, 2, panels, LAMBDA / 2.0).unwrap()
    }

    #[test]
    fn dft_pilots_are_orthogonal() {
        let p = PilotBlock::dft(4, 3, 2.5).unwrap();
        for s in &p.per_subcarrier {
            assert!((s * s.adjoint() - identity(4) * c(2.5, 0.0)).norm() < 1e-12);
        }
        assert!(PilotBlock::dft(2, 1, 0.0).is_err());
    }

    #[test]
    fn ls_estimate_exact_without_noise() {
        let tx = geom(2);
        let rx = geom(2);
        let ch = random_channel(1, &tx, &rx, 8);
        let mut rng = stream(1, 1, Purpose::Fixture);
        let layout = Layout::new(8, 2).unwrap();
        let f = Codeword::random(layout, &mut rng).to_matrix();
        let w = Codeword::random(layout, &mut rng).to_matrix();
        let pilots = PilotBlock::dft(2, 8, 3.0).unwrap();
        let imp = SweepImpairments { rho: 0.0, beta: 0.0, noise_variance: 0.0 };
        let y = received_pilots(&ch, &f, &w, &pilots, &imp, &mut rng).unwrap();
        let est = estimate_effective_channel(&y, &pilots, LinkId::Nd).unwrap();
        let truth = rf_effective_channel(&ch, &w, &f, 1.0).unwrap();
        for (a, b) in est.h_eff.iter().zip(&truth) {
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
        let zeros = vec![CMat::zeros(2, 2); 8];
        assert!(estimate_effective_channel(&zeros, &pilots, LinkId::Nd).unwrap().h_eff.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn non_orthogonal_pilots_rejected() {
        let mut p = PilotBlock::dft(2, 1, 1.0).unwrap();
        p.per_subcarrier[0][(0, 1)] = c(5.0, 0.0);
        assert!(matches!(
            estimate_effective_channel(&[CMat::zeros(2, 2)], &p, LinkId::Nd),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn ls_error_variance_matches_theory() {
        // Noise only: Ĥ − H = Wᴴ Z Sᴴ / ζ has per-entry variance
        // σ² (WᴴW)_uu / ζ = σ² (N/U) / ζ for unit-modulus sub-array combiners.
        let tx = geom(2);
        let rx = geom(2);
        let ch = random_channel(2, &tx, &rx, 4);
        let mut rng = stream(2, 1, Purpose::Fixture);
        let layout = Layout::new(8, 2).unwrap();
        let f = Codeword::random(layout, &mut rng).to_matrix();
        let w = Codeword::random(layout, &mut rng).to_matrix();
        let zeta = 2.0;
        let sigma2 = 0.3;
        let pilots = PilotBlock::dft(2, 4, zeta).unwrap();
        let imp = SweepImpairments { rho: 0.0, beta: 0.0, noise_variance: sigma2 };
        let truth = rf_effective_channel(&ch, &w, &f, 1.0).unwrap();
        let trials = 3000;
        let mut acc = 0.0;
        let mut mean = vec![CMat::zeros(2, 2); 4];
        for _ in 0..trials {
            let y = received_pilots(&ch, &f, &w, &pilots, &imp, &mut rng).unwrap();
            let est = estimate_effective_channel(&y, &pilots, LinkId::Nd).unwrap();
            for k in 0..4 {
                acc += fro2(&(&est.h_eff[k] - &truth[k]));
                mean[k] += &est.h_eff[k];
            }
        }
        let empirical = acc / (trials * 4 * 4) as f64;
        let analytic = sigma2 * 4.0 / zeta;
        assert!((empirical - analytic).abs() < 0.1 * analytic, "{empirical} vs {analytic}");
        // Unbiased.
        for k in 0..4 {
            let m = &mean[k] / c(trials as f64, 0.0);
            assert!((m - &truth[k]).norm() < 0.1 * analytic.sqrt() * 2.0);
        }
    }

    #[test]
    fn injection_cases() {
        let mut rng = stream(3, 0, Purpose::Fixture);
        let h = vec![random_matrix(2, 2, 1.0, &mut rng); 3];
        let same = inject_estimation_error(&h, 0.0, LinkId::Si, &mut rng).unwrap();
        assert_eq!(same.h_eff, h);
        let zeros = vec![CMat::zeros(4, 4); 2000];
        let est = inject_estimation_error(&zeros, 0.25, LinkId::En, &mut rng).unwrap();
        let var = est.h_eff.iter().map(fro2).sum::<f64>() / (2000.0 * 16.0);
        assert!((var - 0.25).abs() < 0.01);
        let tiny = inject_estimation_error(&zeros[..10], 1e-12, LinkId::Nd, &mut rng).unwrap();
        assert!(tiny.h_eff.iter().flat_map(|m| m.iter()).all(|z| z.norm() < 1e-5));
        assert!(inject_estimation_error(&h, -1.0, LinkId::Nd, &mut rng).is_err());
    }

    #[test]
    fn singleton_books_pick_zero() {
        let tx = geom(2);
        let rx = geom(2);
        let ch = random_channel(4, &tx, &rx, 4);
        let layout = Layout::new(8, 2).unwrap();
        let mut rng = stream(4, 1, Purpose::Fixture);
        let book = Codebook { bits: 0, layout, entries: random_training_set(layout, 1, &mut rng) };
        let choice = beam_sweep_select(&book, &book, &ch).unwrap();
        assert_eq!((choice.p, choice.q), (0, 0));
    }

    #[test]
    fn matched_pair_wins_on_single_path() {
        let tx = ArrayGeometry::upa(2, 4, LAMBDA / 2.0).unwrap();
        let rx = ArrayGeometry::upa(2, 4, LAMBDA / 2.0).unwrap();
        let grid = OfdmGrid::new(4, 2, 1.0 / 400e6, 1.0).unwrap();
        let ray = Ray { aoa_azimuth: 0.3, aoa_elevation: 0.2, aod_azimuth: -0.8, aod_elevation: 0.5, gain: c(1.0, 0.0), delay: 0.0 };
        let params = ClusterRayParams { n_clusters: 1, n_rays: 1, rays: vec![ray] };
        let ch = generate_general_channel(&tx, &rx, &params, &grid, 1.0, LAMBDA).unwrap();
        let layout = Layout::new(8, 1).unwrap();
        let phases = |v: CVec| v.iter().map(|z| Complex64::from_polar(1.0, z.arg())).collect::<Vec<_>>();
        let f_match = Codeword::new(layout, phases(steering_vector(&tx, -0.8, 0.5, LAMBDA).unwrap())).unwrap();
        let w_match = Codeword::new(layout, phases(steering_vector(&rx, 0.3, 0.2, LAMBDA).unwrap())).unwrap();
        let mut rng = stream(5, 0, Purpose::Fixture);
        let mut tx_entries = random_training_set(layout, 3, &mut rng);
        tx_entries.insert(2, f_match);
        let mut rx_entries = random_training_set(layout, 3, &mut rng);
        rx_entries.insert(1, w_match);
        let txb = Codebook { bits: 2, layout, entries: tx_entries };
        let rxb = Codebook { bits: 2, layout, entries: rx_entries };
        let choice = beam_sweep_select(&txb, &rxb, &ch).unwrap();
        assert_eq!((choice.p, choice.q), (2, 1));
        // Exhaustive direct evaluation agrees.
        let hs = ch.per_subcarrier();
        for (p, f) in txb.entries.iter().enumerate() {
            for (q, w) in rxb.entries.iter().enumerate() {
                let v: f64 = hs.iter().map(|h| fro2(&(w.to_matrix().adjoint() * h * f.to_matrix()))).sum();
                assert!(v <= choice.power * (1.0 + 1e-12), "({p},{q})");
            }
        }
    }

    #[test]
    fn power_table_matches_direct_products() {
        let tx = geom(2);
        let rx = geom(2);
        let ch = random_channel(6, &tx, &rx, 4);
        let layout = Layout::new(8, 2).unwrap();
        let mut rng = stream(6, 1, Purpose::Fixture);
        let txb = Codebook { bits: 2, layout, entries: random_training_set(layout, 4, &mut rng) };
        let rxb = Codebook { bits: 2, layout, entries: random_training_set(layout, 4, &mut rng) };
        let table = sweep_power_table(&txb, &rxb, &ch).unwrap();
        let hs = ch.per_subcarrier();
        for p in 0..4 {
            for q in 0..4 {
                let direct: f64 = hs
                    .iter()
                    .map(|h| fro2(&(rxb.entries[q].to_matrix().adjoint() * h * txb.entries[p].to_matrix())))
                    .sum();
                assert!((table[p][q] - direct).abs() < 1e-10 * direct);
            }
        }
        // Scaling every power keeps the argmax.
        let best = beam_sweep_select(&txb, &rxb, &ch).unwrap();
        let scaled: Vec<(usize, usize, f64)> =
            table.iter().enumerate().flat_map(|(p, r)| r.iter().enumerate().map(move |(q, v)| (p, q, v * 7.5))).collect();
        let b2 = argmax(scaled.into_iter());
        assert_eq!((best.p, best.q), (b2.p, b2.q));
    }

    #[test]
    fn noisy_sweep_matches_brute_force() {
        let tx = geom(2);
        let rx = geom(2);
        let ch = random_channel(7, &tx, &rx, 4);
        let layout = Layout::new(8, 2).unwrap();
        let mut rng = stream(7, 1, Purpose::Fixture);
        let txb = Codebook { bits: 2, layout, entries: random_training_set(layout, 4, &mut rng) };
        let rxb = Codebook { bits: 2, layout, entries: random_training_set(layout, 4, &mut rng) };
        let pilots = PilotBlock::dft(2, 4, 1.0).unwrap();
        let imp = SweepImpairments { rho: 1e-3, beta: 1e-3, noise_variance: 0.05 };
        let choice = beam_sweep_select_noisy(&txb, &rxb, &ch, &pilots, &imp, &mut stream(7, 2, Purpose::Sweep)).unwrap();

        // Independent re-evaluation with full channel matrices and the
        // documented draw order.
        let hs = ch.per_subcarrier();
        let mut r = stream(7, 2, Purpose::Sweep);
        let mut best = (0, 0, f64::NEG_INFINITY);
        for p in 0..4 {
            for q in 0..4 {
                let f = txb.entries[p].to_matrix();
                let w = rxb.entries[q].to_matrix();
                let mut total = 0.0;
                for h in &hs {
                    let e = random_matrix(2, 2, 1e-3, &mut r);
                    let z = random_matrix(8, 2, 0.05, &mut r);
                    let eff = w.adjoint() * h * &f;
                    let yt = &eff * (&pilots.per_subcarrier[0] + e) + w.adjoint() * z;
                    let cov = &eff * eff.adjoint() * c(1.001, 0.0) + w.adjoint() * &w * c(0.05, 0.0);
                    let mut g = random_matrix(2, 2, 1.0, &mut r);
                    for row in 0..2 {
                        let s = (1e-3 * cov[(row, row)].re).sqrt();
                        for col in 0..2 {
                            g[(row, col)] *= s;
                        }
                    }
                    total += fro2(&(yt + g));
                }
                if total > best.2 {
                    best = (p, q, total);
                }
            }
        }
        assert_eq!((choice.p, choice.q), (best.0, best.1));
        assert!((choice.power - best.2).abs() < 1e-9 * best.2);
    }

    #[test]
    fn ideal_beamformer_rank_one() {
        let tx = ArrayGeometry::paneled(2, 2, 2, LAMBDA / 2.0).unwrap();
        let rx = ArrayGeometry::paneled(2, 2, 2, LAMBDA / 2.0).unwrap();
        let grid = OfdmGrid::new(4, 2, 1.0 / 400e6, 1.0).unwrap();
        let ray = Ray { aoa_azimuth: 1.1, aoa_elevation: -0.3, aod_azimuth: 0.4, aod_elevation: 0.7, gain: c(0.0, 1.0), delay: 0.0 };
        let params = ClusterRayParams { n_clusters: 1, n_rays: 1, rays: vec![ray] };
        let ch = generate_general_channel(&tx, &rx, &params, &grid, 1.0, LAMBDA).unwrap();
        let layout = Layout::new(8, 2).unwrap();
        let f = ideal_rf_beamformer(&ch, layout, Side::Transmit).unwrap();
        let w = ideal_rf_beamformer(&ch, layout, Side::Receive).unwrap();
        let a_t = steering_vector(&tx, 0.4, 0.7, LAMBDA).unwrap();
        let a_r = steering_vector(&rx, 1.1, -0.3, LAMBDA).unwrap();
        // Per sub-array the phase pattern equals the steering vector's up to
        // one common rotation.
        for (cw, a) in [(&f, &a_t), (&w, &a_r)] {
            for u in 0..2 {
                let blk = cw.block(u);
                let target: Vec<Complex64> = (0..4).map(|i| a[u * 4 + i]).collect();
                let rot = blk[0] / (target[0] / target[0].norm());
                for i in 0..4 {
                    assert!((blk[i] - rot * target[i] / target[i].norm()).norm() < 1e-9);
                }
            }
            assert!(cw.is_unit_modulus(1e-12));
            let m = cw.to_matrix();
            assert!((m.adjoint() * &m - identity(2) * c(4.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn ideal_beamformer_matches_power_iteration() {
        let tx = geom(2);
        let rx = geom(2);
        let ch = random_channel(8, &tx, &rx, 8);
        let layout = Layout::new(8, 2).unwrap();
        let f = ideal_rf_beamformer(&ch, layout, Side::Transmit).unwrap();
        let hs = ch.per_subcarrier();
        for u in 0..2 {
            let cov = hs.iter().fold(CMat::zeros(4, 4), |acc, h| {
                let cols = h.columns(u * 4, 4);
                acc + cols.adjoint() * cols
            });
            let mut v = CVec::from_element(4, c(1.0, 0.0));
            for _ in 0..5000 {
                let next = &cov * &v;
                v = &next / c(next.norm(), 0.0);
            }
            fix_phase(&mut v);
            for i in 0..4 {
                assert!((f.block(u)[i] - Complex64::from_polar(1.0, v[i].arg())).norm() < 1e-8);
            }
        }
    }
}
