//! Wideband cluster-ray channels and the near-field self-interference channel.
//!
//! Arrays are uniform planar arrays lying in the XY-plane. Angles follow the
//! convention `u(θ, φ) = [cos θ cos φ, sin θ cos φ, sin φ]`, with the
//! elevation φ measured from the array plane.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fro2, CMat, CVec, ZERO};
use crate::rng::complex_normal;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Relative guard around the removable singularities of the raised cosine.
const RC_SINGULAR_GUARD: f64 = 1e-9;

/// Uniform planar array made of `panels` identical sub-panels placed side by
/// side along x. Elements are enumerated panel by panel so that sub-array `u`
/// occupies the contiguous index range `u * N/U .. (u + 1) * N/U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    pub panels: usize,
    pub spacing: f64,
    pub element_coords: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    /// Single-panel `rows × cols` array, rows along y and columns along x.
    pub fn upa(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        Self::paneled(rows, cols, 1, spacing)
    }

    pub fn paneled(panel_rows: usize, panel_cols: usize, panels: usize, spacing: f64) -> Result<Self> {
        if panel_rows == 0 || panel_cols == 0 || panels == 0 {
            return Err(Error::InvalidInput("array dimensions must be positive".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidInput(format!("element spacing {spacing} must be positive")));
        }
        let mut coords = Vec::with_capacity(panel_rows * panel_cols * panels);
        for u in 0..panels {
            for cx in 0..panel_cols {
                for ry in 0..panel_rows {
                    let x = (u * panel_cols + cx) as f64 * spacing;
                    let y = ry as f64 * spacing;
                    coords.push([x, y, 0.0]);
                }
            }
        }
        Ok(ArrayGeometry {
            rows: panel_rows,
            cols: panel_cols * panels,
            panels,
            spacing,
            element_coords: coords,
        })
    }

    pub fn len(&self) -> usize {
        self.element_coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_coords.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.element_coords {
            for i in 0..3 {
                c[i] += p[i] / n;
            }
        }
        c
    }
}

/// Unit direction vector for azimuth `az` and elevation `el`.
pub fn direction(az: f64, el: f64) -> [f64; 3] {
    [az.cos() * el.cos(), az.sin() * el.cos(), el.sin()]
}

/// Array response `(1/√N) exp(j 2π/λ rₙᵀu(θ, φ))`.
pub fn steering_vector(geometry: &ArrayGeometry, azimuth: f64, elevation: f64, wavelength: f64) -> Result<CVec> {
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(Error::InvalidInput(format!(
            "steering angles must be finite (az={azimuth}, el={elevation})"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidInput(format!("wavelength {wavelength} must be positive")));
    }
    if geometry.is_empty() {
        return Err(Error::InvalidInput("empty array".into()));
    }
    let u = direction(azimuth, elevation);
    let k = 2.0 * PI / wavelength;
    let norm = 1.0 / (geometry.len() as f64).sqrt();
    Ok(CVec::from_iterator(
        geometry.len(),
        geometry.element_coords.iter().map(|r| {
            let phase = k * (r[0] * u[0] + r[1] * u[1] + r[2] * u[2]);
            Complex64::from_polar(norm, phase)
        }),
    ))
}

/// Close-in reference-distance path loss `(4π r0/λ)² (r/r0)^μ`, linear.
pub fn close_in_path_loss(r: f64, r0: f64, wavelength: f64, exponent: f64) -> Result<f64> {
    if !(r0 > 0.0) || !(wavelength > 0.0) {
        return Err(Error::InvalidInput("reference distance and wavelength must be positive".into()));
    }
    if !(r >= r0) {
        return Err(Error::InvalidInput(format!(
            "distance {r} m is inside the reference distance {r0} m"
        )));
    }
    Ok((4.0 * PI * r0 / wavelength).powi(2) * (r / r0).powf(exponent))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Raised-cosine pulse with symbol period `ts` and roll-off `rolloff`.
pub fn raised_cosine(t: f64, ts: f64, rolloff: f64) -> f64 {
    let x = t / ts;
    if rolloff == 0.0 {
        return sinc(x);
    }
    let denom = 1.0 - (2.0 * rolloff * x).powi(2);
    if denom.abs() < RC_SINGULAR_GUARD {
        // t = ±T/(2β)
        return PI / 4.0 * sinc(1.0 / (2.0 * rolloff));
    }
    sinc(x) * (PI * rolloff * x).cos() / denom
}

/// OFDM numerology shared by all channels of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmGrid {
    /// Number of subcarriers K.
    pub subcarriers: usize,
    /// Cyclic-prefix length D, equal to the number of delay taps.
    pub cp_len: usize,
    /// Sampling period T_s.
    pub ts: f64,
    pub rolloff: f64,
}

impl OfdmGrid {
    pub fn new(subcarriers: usize, cp_len: usize, ts: f64, rolloff: f64) -> Result<Self> {
        if subcarriers == 0 || cp_len == 0 {
            return Err(Error::InvalidInput("K and D must be positive".into()));
        }
        if !(ts > 0.0) || !(0.0..=1.0).contains(&rolloff) {
            return Err(Error::InvalidInput(format!("bad pulse parameters ts={ts} rolloff={rolloff}")));
        }
        Ok(OfdmGrid { subcarriers, cp_len, ts, rolloff })
    }

    pub fn delay_span(&self) -> f64 {
        self.cp_len as f64 * self.ts
    }

    fn check_delay(&self, tau: f64) -> Result<()> {
        if !(0.0..self.delay_span()).contains(&tau) {
            return Err(Error::InvalidInput(format!(
                "delay {tau} s outside the cyclic-prefix span [0, {})",
                self.delay_span()
            )));
        }
        Ok(())
    }

    /// Expected `Σ_d p(d T_s − τ)²` for τ uniform on the delay span, i.e. the
    /// average per-subcarrier power of `χ[k]`. Midpoint rule, 64 points per
    /// sample period; pulse tails beyond 64 periods are ignored.
    pub fn mean_tap_energy(&self) -> f64 {
        const PER_TS: usize = 64;
        const REACH: f64 = 64.0;
        let d_len = self.cp_len;
        let n = d_len * PER_TS;
        let mut acc = 0.0;
        for i in 0..n {
            let tau = (i as f64 + 0.5) / PER_TS as f64;
            let lo = ((tau - REACH).ceil().max(0.0)) as usize;
            let hi = ((tau + REACH).floor() as usize).min(d_len - 1);
            for d in lo..=hi {
                acc += raised_cosine(d as f64 - tau, 1.0, self.rolloff).powi(2);
            }
        }
        acc / n as f64
    }
}

/// `χ[k] = Σ_{d<D} p(d T_s − τ) e^{−j2πkd/K}` for one subcarrier.
pub fn subcarrier_tap_gain(tau: f64, k: usize, grid: &OfdmGrid) -> Result<Complex64> {
    if k >= grid.subcarriers {
        return Err(Error::InvalidInput(format!("subcarrier {k} >= K={}", grid.subcarriers)));
    }
    grid.check_delay(tau)?;
    let kk = grid.subcarriers as f64;
    Ok((0..grid.cp_len)
        .map(|d| {
            let p = raised_cosine(d as f64 * grid.ts - tau, grid.ts, grid.rolloff);
            Complex64::from_polar(p, -2.0 * PI * (k * d) as f64 / kk)
        })
        .sum())
}

/// `χ[k]` for all subcarriers at once.
pub fn tap_gains(tau: f64, grid: &OfdmGrid) -> Result<Vec<Complex64>> {
    grid.check_delay(tau)?;
    let pulse: Vec<f64> = (0..grid.cp_len)
        .map(|d| raised_cosine(d as f64 * grid.ts - tau, grid.ts, grid.rolloff))
        .collect();
    let kk = grid.subcarriers;
    Ok((0..kk)
        .map(|k| {
            pulse
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(|(d, &p)| {
                    // (k*d) mod K keeps the twiddle argument small and exact.
                    let idx = (k * d) % kk;
                    Complex64::from_polar(p, -2.0 * PI * idx as f64 / kk as f64)
                })
                .sum()
        })
        .collect())
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    pub gain: Complex64,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRayParams {
    pub n_clusters: usize,
    pub n_rays: usize,
    /// Cluster-major: ray `l` of cluster `c` is at index `c * n_rays + l`.
    pub rays: Vec<Ray>,
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x < -PI {
        x = -PI;
    }
    x
}

/// Laplacian draw with the given standard deviation.
fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    let b = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

impl ClusterRayParams {
    /// Draws cluster means uniformly (azimuth on [−π, π], elevation on
    /// [−π/2, π/2]), Laplacian per-ray offsets with standard deviation
    /// `angle_spread`, CN(0, 1) gains and i.i.d. delays uniform on
    /// `[0, delay_span)`.
    pub fn draw<R: Rng + ?Sized>(
        n_clusters: usize,
        n_rays: usize,
        delay_span: f64,
        angle_spread: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n_clusters == 0 || n_rays == 0 {
            return Err(Error::InvalidInput("need at least one cluster and one ray".into()));
        }
        if !(delay_span > 0.0) {
            return Err(Error::InvalidInput("delay span must be positive".into()));
        }
        let mut rays = Vec::with_capacity(n_clusters * n_rays);
        for _ in 0..n_clusters {
            let mean_aoa_az = rng.random_range(-PI..=PI);
            let mean_aoa_el = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
            let mean_aod_az = rng.random_range(-PI..=PI);
            let mean_aod_el = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
            for _ in 0..n_rays {
                let aoa_azimuth = wrap_angle(mean_aoa_az + laplacian(rng, angle_spread));
                let aoa_elevation = (mean_aoa_el + laplacian(rng, angle_spread)).clamp(-FRAC_PI_2, FRAC_PI_2);
                let aod_azimuth = wrap_angle(mean_aod_az + laplacian(rng, angle_spread));
                let aod_elevation = (mean_aod_el + laplacian(rng, angle_spread)).clamp(-FRAC_PI_2, FRAC_PI_2);
                let gain = complex_normal(rng, 1.0);
                let delay = rng.random_range(0.0..delay_span);
                rays.push(Ray {
                    aoa_azimuth,
                    aoa_elevation,
                    aod_azimuth,
                    aod_elevation,
                    gain,
                    delay,
                });
            }
        }
        Ok(ClusterRayParams { n_clusters, n_rays, rays })
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Factors of `H[k] = A_r Π[k] A_tᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFactors {
    pub a_r: CMat,
    pub a_t: CMat,
    /// Diagonal of Π[k] for each subcarrier.
    pub pi: Vec<Vec<Complex64>>,
}

impl ChannelFactors {
    pub fn subcarrier(&self, k: usize) -> CMat {
        let mut left = self.a_r.clone();
        for (j, mut col) in left.column_iter_mut().enumerate() {
            col *= self.pi[k][j];
        }
        left * self.a_t.adjoint()
    }

    /// `Π[k] · right` for a right factor with one row per path.
    fn weigh(&self, k: usize, right: &CMat) -> CMat {
        let mut m = right.clone();
        for (l, mut row) in m.row_iter_mut().enumerate() {
            row *= self.pi[k][l];
        }
        m
    }

    pub fn times(&self, f: &CMat) -> Vec<CMat> {
        let right = self.a_t.adjoint() * f;
        (0..self.pi.len()).map(|k| &self.a_r * self.weigh(k, &right)).collect()
    }

    pub fn effective(&self, w: &CMat, f: &CMat) -> Vec<CMat> {
        let left = w.adjoint() * &self.a_r;
        let right = self.a_t.adjoint() * f;
        (0..self.pi.len()).map(|k| &left * self.weigh(k, &right)).collect()
    }
}

/// Frequency-selective MIMO channel known through its per-subcarrier
/// response. Implementations avoid materializing every `H[k]` when only
/// products with beamformers are needed.
pub trait WidebandChannel: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn subcarriers(&self) -> usize;
    fn subcarrier(&self, k: usize) -> CMat;
    /// `H[k] F` for every subcarrier.
    fn times(&self, f: &CMat) -> Vec<CMat>;
    /// `Wᴴ H[k] F` for every subcarrier.
    fn effective(&self, w: &CMat, f: &CMat) -> Vec<CMat> {
        let wh = w.adjoint();
        self.times(f).iter().map(|hf| &wh * hf).collect()
    }
    fn per_subcarrier(&self) -> Vec<CMat> {
        (0..self.subcarriers()).map(|k| self.subcarrier(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub params: ClusterRayParams,
    pub path_loss_linear: f64,
    pub factors: ChannelFactors,
}

impl ChannelRealization {
    pub fn dump(&self) -> ChannelDump {
        ChannelDump::from_matrices(&self.per_subcarrier(), self.path_loss_linear)
    }
}

impl WidebandChannel for ChannelRealization {
    fn rows(&self) -> usize {
        self.factors.a_r.nrows()
    }

    fn cols(&self) -> usize {
        self.factors.a_t.nrows()
    }

    fn subcarriers(&self) -> usize {
        self.factors.pi.len()
    }

    fn subcarrier(&self, k: usize) -> CMat {
        self.factors.subcarrier(k)
    }

    fn times(&self, f: &CMat) -> Vec<CMat> {
        self.factors.times(f)
    }

    fn effective(&self, w: &CMat, f: &CMat) -> Vec<CMat> {
        self.factors.effective(w, f)
    }
}

/// Builds `H[k] = A_r Π[k] A_tᴴ` from fixed cluster-ray parameters.
pub fn generate_general_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    params: &ClusterRayParams,
    grid: &OfdmGrid,
    path_loss: f64,
    wavelength: f64,
) -> Result<ChannelRealization> {
    if !(path_loss > 0.0) {
        return Err(Error::InvalidInput(format!("path loss {path_loss} must be positive")));
    }
    if params.len() != params.n_clusters * params.n_rays || params.is_empty() {
        return Err(Error::InvalidInput("cluster-ray parameter count mismatch".into()));
    }
    let n_paths = params.len();
    let mut a_r = CMat::from_element(rx.len(), n_paths, ZERO);
    let mut a_t = CMat::from_element(tx.len(), n_paths, ZERO);
    for (i, ray) in params.rays.iter().enumerate() {
        a_r.set_column(i, &steering_vector(rx, ray.aoa_azimuth, ray.aoa_elevation, wavelength)?);
        a_t.set_column(i, &steering_vector(tx, ray.aod_azimuth, ray.aod_elevation, wavelength)?);
    }
    let scale = ((rx.len() * tx.len()) as f64 / (n_paths as f64 * path_loss)).sqrt();
    let chis: Vec<Vec<Complex64>> = params
        .rays
        .iter()
        .map(|r| tap_gains(r.delay, grid))
        .collect::<Result<_>>()?;
    let pi: Vec<Vec<Complex64>> = (0..grid.subcarriers)
        .map(|k| {
            params
                .rays
                .iter()
                .zip(&chis)
                .map(|(r, chi)| r.gain * chi[k] * scale)
                .collect()
        })
        .collect();
    let factors = ChannelFactors { a_r, a_t, pi };
    Ok(ChannelRealization {
        params: params.clone(),
        path_loss_linear: path_loss,
        factors,
    })
}

/// Draws parameters and generates a channel in one go.
#[allow(clippy::too_many_arguments)]
pub fn draw_general_channel<R: Rng + ?Sized>(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    n_clusters: usize,
    n_rays: usize,
    angle_spread: f64,
    grid: &OfdmGrid,
    path_loss: f64,
    wavelength: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let params = ClusterRayParams::draw(n_clusters, n_rays, grid.delay_span(), angle_spread, rng)?;
    generate_general_channel(tx, rx, &params, grid, path_loss, wavelength)
}

/// Per-user channels stacked row-wise into one `ΣN_u × N_T` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedChannel {
    pub parts: Vec<ChannelRealization>,
}

impl StackedChannel {
    pub fn new(parts: Vec<ChannelRealization>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidInput("no channels to stack".into()))?;
        let (cols, k) = (first.cols(), first.subcarriers());
        if parts.iter().any(|p| p.cols() != cols || p.subcarriers() != k) {
            return Err(Error::InvalidInput("stacked channels disagree on transmit size or subcarriers".into()));
        }
        Ok(StackedChannel { parts })
    }

    fn stack(&self, blocks: Vec<Vec<CMat>>) -> Vec<CMat> {
        let cols = blocks[0][0].ncols();
        (0..self.subcarriers())
            .map(|k| {
                let mut out = CMat::zeros(self.rows(), cols);
                let mut r = 0;
                for b in &blocks {
                    out.rows_mut(r, b[k].nrows()).copy_from(&b[k]);
                    r += b[k].nrows();
                }
                out
            })
            .collect()
    }
}

impl WidebandChannel for StackedChannel {
    fn rows(&self) -> usize {
        self.parts.iter().map(|p| p.rows()).sum()
    }

    fn cols(&self) -> usize {
        self.parts[0].cols()
    }

    fn subcarriers(&self) -> usize {
        self.parts[0].subcarriers()
    }

    fn subcarrier(&self, k: usize) -> CMat {
        let rows: Vec<CMat> = self.parts.iter().map(|p| p.subcarrier(k)).collect();
        let mut out = CMat::zeros(self.rows(), self.cols());
        let mut r = 0;
        for m in rows {
            out.rows_mut(r, m.nrows()).copy_from(&m);
            r += m.nrows();
        }
        out
    }

    fn times(&self, f: &CMat) -> Vec<CMat> {
        self.stack(self.parts.iter().map(|p| p.times(f)).collect())
    }
}

/// Self-interference channel description at the full-duplex node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiChannelSpec {
    /// Rician factor κ, linear. `f64::INFINITY` gives a pure LOS channel.
    pub rician_factor: f64,
    pub tx_rx_separation: f64,
    pub separation_angle: f64,
    pub nlos_clusters: usize,
    pub nlos_rays: usize,
    pub angle_spread: f64,
}

impl Default for SiChannelSpec {
    fn default() -> Self {
        SiChannelSpec {
            rician_factor: db_to_linear(10.0),
            tx_rx_separation: 0.1,
            separation_angle: PI / 6.0,
            nlos_clusters: 2,
            nlos_rays: 8,
            angle_spread: 5f64.to_radians(),
        }
    }
}

impl SiChannelSpec {
    fn validate(&self) -> Result<()> {
        if !(self.rician_factor > 0.0) {
            return Err(Error::InvalidInput("Rician factor must be positive".into()));
        }
        if !(self.tx_rx_separation > 0.0) {
            return Err(Error::InvalidInput("TX/RX separation must be positive".into()));
        }
        Ok(())
    }

    /// `(√(κ/(κ+1)), √(1/(κ+1)))`.
    pub fn mix_weights(&self) -> (f64, f64) {
        if self.rician_factor.is_infinite() {
            (1.0, 0.0)
        } else {
            let k = self.rician_factor;
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        }
    }
}

/// Placement of the transmit panel relative to the receive panel.
///
/// The receive array sits in the XY-plane at the origin. The transmit array
/// starts in the parallel plane `z = separation`, then is rotated about the
/// y-axis by the separation angle: a local point `(x, y, 0)` maps to
/// `(x cos a, y, separation − x sin a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiPose {
    pub tx_global: Vec<[f64; 3]>,
    /// (azimuth, elevation) of the LOS arrival in the receive-array frame.
    pub aoa: (f64, f64),
    /// (azimuth, elevation) of the LOS departure in the transmit-array frame.
    pub aod: (f64, f64),
}

fn to_angles(v: [f64; 3]) -> (f64, f64) {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let u = [v[0] / n, v[1] / n, v[2] / n];
    (u[1].atan2(u[0]), u[2].clamp(-1.0, 1.0).asin())
}

impl SiPose {
    pub fn new(tx: &ArrayGeometry, rx: &ArrayGeometry, spec: &SiChannelSpec) -> Self {
        let (s, c) = spec.separation_angle.sin_cos();
        let place = |p: &[f64; 3]| [p[0] * c, p[1], spec.tx_rx_separation - p[0] * s];
        let tx_global: Vec<[f64; 3]> = tx.element_coords.iter().map(place).collect();
        let tc = place(&tx.centroid());
        let rc = rx.centroid();
        let d = [tc[0] - rc[0], tc[1] - rc[1], tc[2] - rc[2]];
        let aoa = to_angles(d);
        // Back into the transmit frame: inverse rotation of −d.
        let back = [-d[0], -d[1], -d[2]];
        let local = [back[0] * c - back[2] * s, back[1], back[0] * s + back[2] * c];
        let aod = to_angles(local);
        SiPose { tx_global, aoa, aod }
    }
}

/// Near-field LOS component `[a_r a_tᴴ] ⊙ R`, `[R]_pq = (γ/r_pq) e^{−j2π r_pq/λ}`.
pub fn si_los_matrix(tx: &ArrayGeometry, rx: &ArrayGeometry, spec: &SiChannelSpec, wavelength: f64) -> Result<CMat> {
    spec.validate()?;
    let pose = SiPose::new(tx, rx, spec);
    let a_r = steering_vector(rx, pose.aoa.0, pose.aoa.1, wavelength)?;
    let a_t = steering_vector(tx, pose.aod.0, pose.aod.1, wavelength)?;
    let gamma = ((rx.len() * tx.len()) as f64).sqrt();
    let mut h = CMat::from_element(rx.len(), tx.len(), ZERO);
    for (p, rp) in rx.element_coords.iter().enumerate() {
        for (q, tq) in pose.tx_global.iter().enumerate() {
            let r = ((rp[0] - tq[0]).powi(2) + (rp[1] - tq[1]).powi(2) + (rp[2] - tq[2]).powi(2)).sqrt();
            if r <= 1e-12 {
                return Err(Error::InvalidInput(format!("coincident elements rx {p} / tx {q}")));
            }
            let rpq = Complex64::from_polar(gamma / r, -2.0 * PI * r / wavelength);
            h[(p, q)] = a_r[p] * a_t[q].conj() * rpq;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiChannelRealization {
    pub los: CMat,
    pub nlos: ChannelRealization,
    pub spec: SiChannelSpec,
}

impl SiChannelRealization {
    pub fn dump(&self) -> ChannelDump {
        ChannelDump::from_matrices(&self.per_subcarrier(), self.nlos.path_loss_linear)
    }

    fn mix(&self, los_part: CMat, nlos_part: Vec<CMat>) -> Vec<CMat> {
        let (wl, wn) = self.spec.mix_weights();
        let los_part = los_part * Complex64::new(wl, 0.0);
        nlos_part
            .into_iter()
            .map(|hn| if wn == 0.0 { los_part.clone() } else { &los_part + hn * Complex64::new(wn, 0.0) })
            .collect()
    }
}

impl WidebandChannel for SiChannelRealization {
    fn rows(&self) -> usize {
        self.los.nrows()
    }

    fn cols(&self) -> usize {
        self.los.ncols()
    }

    fn subcarriers(&self) -> usize {
        self.nlos.subcarriers()
    }

    fn subcarrier(&self, k: usize) -> CMat {
        let (wl, wn) = self.spec.mix_weights();
        let l = &self.los * Complex64::new(wl, 0.0);
        if wn == 0.0 {
            l
        } else {
            l + self.nlos.subcarrier(k) * Complex64::new(wn, 0.0)
        }
    }

    fn times(&self, f: &CMat) -> Vec<CMat> {
        self.mix(&self.los * f, self.nlos.times(f))
    }

    fn effective(&self, w: &CMat, f: &CMat) -> Vec<CMat> {
        self.mix(w.adjoint() * &self.los * f, self.nlos.effective(w, f))
    }
}

/// Rician self-interference channel `√(κ/(κ+1)) H_L + √(1/(κ+1)) H_N[k]`.
///
/// The NLOS part uses the general cluster-ray generator with its path-loss
/// term chosen so that `E‖H_N[k]‖²_F = ‖H_L‖²_F`; κ is then the actual
/// LOS-to-NLOS power ratio.
pub fn generate_si_channel<R: Rng + ?Sized>(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    spec: &SiChannelSpec,
    grid: &OfdmGrid,
    wavelength: f64,
    rng: &mut R,
) -> Result<SiChannelRealization> {
    let los = si_los_matrix(tx, rx, spec, wavelength)?;
    let los_energy = fro2(&los);
    let equivalent_pl = (rx.len() * tx.len()) as f64 * grid.mean_tap_energy() / los_energy;
    let params = ClusterRayParams::draw(spec.nlos_clusters, spec.nlos_rays, grid.delay_span(), spec.angle_spread, rng)?;
    let nlos = generate_general_channel(tx, rx, &params, grid, equivalent_pl, wavelength)?;
    Ok(SiChannelRealization {
        los,
        nlos,
        spec: spec.clone(),
    })
}

/// Regression-fixture dump of per-subcarrier matrices.
///
/// JSON form: `{subcarriers, rows, cols, path_loss_linear, data}` with `data`
/// holding `[re, im]` pairs, subcarrier-major then row-major. The binary form
/// is the magic `IABH`, a little-endian `u32` version (1), `u32` K, rows and
/// cols, an `f64` path loss, then the same pairs as little-endian `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDump {
    pub subcarriers: usize,
    pub rows: usize,
    pub cols: usize,
    pub path_loss_linear: f64,
    pub data: Vec<[f64; 2]>,
}

const DUMP_MAGIC: &[u8; 4] = b"IABH";

impl ChannelDump {
    pub fn from_matrices(mats: &[CMat], path_loss_linear: f64) -> Self {
        let (rows, cols) = mats.first().map(|m| m.shape()).unwrap_or((0, 0));
        let mut data = Vec::with_capacity(mats.len() * rows * cols);
        for m in mats {
            for r in 0..rows {
                for c in 0..cols {
                    let z = m[(r, c)];
                    data.push([z.re, z.im]);
                }
            }
        }
        ChannelDump {
            subcarriers: mats.len(),
            rows,
            cols,
            path_loss_linear,
            data,
        }
    }

    pub fn to_matrices(&self) -> Result<Vec<CMat>> {
        let per = self.rows * self.cols;
        if self.data.len() != per * self.subcarriers {
            return Err(Error::Serialization("dump length does not match its header".into()));
        }
        Ok(self
            .data
            .chunks(per.max(1))
            .take(self.subcarriers)
            .map(|chunk| CMat::from_fn(self.rows, self.cols, |r, c| {
                let [re, im] = chunk[r * self.cols + c];
                Complex64::new(re, im)
            }))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.data.len() * 16);
        out.extend_from_slice(DUMP_MAGIC);
        for v in [1u32, self.subcarriers as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.path_loss_linear.to_le_bytes());
        for [re, im] in &self.data {
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Serialization(m.to_string());
        if bytes.len() < 28 || &bytes[..4] != DUMP_MAGIC {
            return Err(bad("missing channel dump header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        if word(0) != 1 {
            return Err(bad("unsupported channel dump version"));
        }
        let (subcarriers, rows, cols) = (word(1), word(2), word(3));
        let path_loss_linear = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let body = &bytes[28..];
        let n = subcarriers * rows * cols;
        if body.len() != n * 16 {
            return Err(bad("channel dump body has the wrong length"));
        }
        let data = body
            .chunks_exact(16)
            .map(|b| {
                [
                    f64::from_le_bytes(b[..8].try_into().unwrap()),
                    f64::from_le_bytes(b[8..].try_into().unwrap()),
                ]
            })
            .collect();
        Ok(ChannelDump {
            subcarriers,
            rows,
            cols,
            path_loss_linear,
            data,
        })
    }
}
