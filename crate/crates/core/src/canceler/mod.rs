//! Multi-tap analog self-interference canceler.
//!
//! A canceler with `M` taps has the frequency response
//! `h(ω) = α̂ Σ_m α_m β_m (w_I,m + j w_Q,m) e^{−jωτ_m}` with every weight
//! component in `[−1, 1]`. Weights are fitted to a sampled SI response by
//! box-constrained least squares.

mod boxls;
mod profile;
mod si_band;
mod sweep;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boxls::{solve_box_qp, BoxQpSolution, SolveMethod};
pub use profile::{apply_loss_profile, LossKind, LossProfile};
pub use si_band::{SiBandModel, SiBandRealization};
pub use sweep::{sweep_taps_bandwidth, SweepCell, SweepGrid, SweepSetup};

/// Reported cancellation when the residual vanishes.
pub const CANCELLATION_CAP_DB: f64 = 200.0;

/// Sampled band of interest, in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    pub freqs_hz: Vec<f64>,
}

impl BandGrid {
    /// `center ± bandwidth/2` sampled every `step` Hz, endpoints included.
    pub fn centered(center: f64, bandwidth: f64, step: f64) -> Result<Self> {
        if !(bandwidth >= 0.0) || !(step > 0.0) || !(center > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bad band grid: center={center} bandwidth={bandwidth} step={step}"
            )));
        }
        let n = (bandwidth / step).round() as usize + 1;
        let start = center - bandwidth / 2.0;
        Ok(BandGrid {
            freqs_hz: (0..n).map(|i| start + i as f64 * step).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        self.freqs_hz.iter().map(|f| 2.0 * PI * f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Canceler {
    /// α̂, linear amplitude.
    pub coupler_loss: f64,
    pub delays: Vec<f64>,
    /// α_m, linear amplitude.
    pub propagation_loss: Vec<f64>,
    /// β_m, linear amplitude.
    pub tap_coupling: Vec<f64>,
    /// `w_I,m + j w_Q,m`.
    pub weights: Vec<Complex64>,
}

fn in_unit_interval(v: f64) -> bool {
    v > 0.0 && v <= 1.0
}

impl Canceler {
    /// Unweighted canceler; all weights start at zero.
    pub fn new(coupler_loss: f64, delays: Vec<f64>, propagation_loss: Vec<f64>, tap_coupling: Vec<f64>) -> Result<Self> {
        let m = delays.len();
        if m == 0 {
            return Err(Error::InvalidInput("canceler needs at least one tap".into()));
        }
        if propagation_loss.len() != m || tap_coupling.len() != m {
            return Err(Error::shape(
                format!("{m} per-tap losses"),
                format!("{} and {}", propagation_loss.len(), tap_coupling.len()),
            ));
        }
        if !delays.iter().all(|d| d.is_finite() && *d >= 0.0) || delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("tap delays must be finite, non-negative and strictly increasing".into()));
        }
        if !in_unit_interval(coupler_loss)
            || !propagation_loss.iter().all(|&a| in_unit_interval(a))
            || !tap_coupling.iter().all(|&b| in_unit_interval(b))
        {
            return Err(Error::InvalidInput("canceler losses must lie in (0, 1]".into()));
        }
        Ok(Canceler {
            coupler_loss,
            delays,
            propagation_loss,
            tap_coupling,
            weights: vec![Complex64::new(0.0, 0.0); m],
        })
    }

    pub fn taps(&self) -> usize {
        self.delays.len()
    }

    /// Replaces the weights; every component must lie in `[−1, 1]`.
    pub fn with_weights(mut self, weights: Vec<Complex64>) -> Result<Self> {
        if weights.len() != self.taps() {
            return Err(Error::shape(self.taps().to_string(), weights.len().to_string()));
        }
        if weights.iter().any(|w| !(-1.0..=1.0).contains(&w.re) || !(-1.0..=1.0).contains(&w.im)) {
            return Err(Error::InvalidInput("canceler weights must lie in [-1, 1]".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Gain of tap `m` with unit weight: `α̂ α_m β_m`.
    pub fn tap_gain(&self, m: usize) -> f64 {
        self.coupler_loss * self.propagation_loss[m] * self.tap_coupling[m]
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        (0..self.taps())
            .map(|m| self.weights[m] * Complex64::from_polar(self.tap_gain(m), -omega * self.delays[m]))
            .sum()
    }

    pub fn response_on(&self, grid: &BandGrid) -> Vec<Complex64> {
        grid.omegas().map(|w| self.response(w)).collect()
    }

    /// Complex design matrix `A[f, m] = α̂ α_m β_m e^{−jω_f τ_m}`.
    fn design(&self, grid: &BandGrid) -> DMatrix<Complex64> {
        let omegas: Vec<f64> = grid.omegas().collect();
        DMatrix::from_fn(grid.len(), self.taps(), |f, m| {
            Complex64::from_polar(self.tap_gain(m), -omegas[f] * self.delays[m])
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub canceler: Canceler,
    /// `Σ_ω |h(ω) − h_can(ω)|²`.
    pub residual: f64,
    /// Residual with all weights zero, i.e. the target energy.
    pub zero_residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
    pub kkt_violation: f64,
}

impl FitReport {
    pub fn cancellation_db(&self) -> Result<f64> {
        ratio_db(self.zero_residual, self.residual)
    }
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn residual(target: &[Complex64], canceler: &Canceler, grid: &BandGrid) -> f64 {
    target
        .iter()
        .zip(canceler.response_on(grid))
        .map(|(t, h)| (t - h).norm_sqr())
        .sum()
}

fn ratio_db(target_energy: f64, residual: f64) -> Result<f64> {
    if !(target_energy > 0.0) {
        return Err(Error::InvalidInput("cancellation is undefined for a zero-energy target".into()));
    }
    if residual <= 0.0 {
        return Ok(CANCELLATION_CAP_DB);
    }
    Ok((10.0 * (target_energy / residual).log10()).min(CANCELLATION_CAP_DB))
}

/// Fits the tap weights of `canceler` to `target` sampled on `grid`.
pub fn fit_weights(target: &[Complex64], grid: &BandGrid, canceler: &Canceler) -> Result<FitReport> {
    fit_weights_from(target, grid, canceler, None)
}

/// As [`fit_weights`], seeding the solver with a feasible starting point.
pub fn fit_weights_from(
    target: &[Complex64],
    grid: &BandGrid,
    canceler: &Canceler,
    start: Option<&[Complex64]>,
) -> Result<FitReport> {
    let m = canceler.taps();
    if target.len() != grid.len() {
        return Err(Error::shape(format!("{} samples", grid.len()), format!("{} samples", target.len())));
    }
    if grid.len() < 2 * m {
        return Err(Error::IllPosed(format!(
            "{} band samples cannot identify {} real tap weights",
            grid.len(),
            2 * m
        )));
    }
    if target.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite SI target".into()));
    }
    let zero_residual = energy(target);
    if zero_residual == 0.0 {
        let fitted = canceler.clone().with_weights(vec![Complex64::new(0.0, 0.0); m])?;
        return Ok(FitReport {
            canceler: fitted,
            residual: 0.0,
            zero_residual,
            method: SolveMethod::Unconstrained,
            iterations: 0,
            kkt_violation: 0.0,
        });
    }

    // Real form with x = [w_I; w_Q]: the Gram of [[Re A, −Im A], [Im A, Re A]]
    // is [[P, −Q], [Q, P]] with AᴴA = P + jQ, and the linear term is
    // [Re Aᴴh; Im Aᴴh].
    let a = canceler.design(grid);
    let ah = a.adjoint();
    let c = &ah * &a;
    let t = DVector::from_column_slice(target);
    let rhs = &ah * t;
    let gram = DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let (bi, bj) = (i / m, j / m);
        let z = c[(i % m, j % m)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    });
    let b = DVector::from_fn(2 * m, |i, _| if i < m { rhs[i].re } else { rhs[i - m].im });
    let start_real: Option<Vec<f64>> =
        start.map(|s| s.iter().map(|z| z.re).chain(s.iter().map(|z| z.im)).collect());
    if let Some(s) = &start_real {
        if s.len() != 2 * m {
            return Err(Error::shape(m.to_string(), (s.len() / 2).to_string()));
        }
    }
    let sol = solve_box_qp(&gram, &b, -1.0, 1.0, start_real.as_deref())?;
    let weights: Vec<Complex64> = (0..m).map(|i| Complex64::new(sol.x[i], sol.x[m + i])).collect();
    let fitted = canceler.clone().with_weights(weights)?;
    let res = residual(target, &fitted, grid);
    Ok(FitReport {
        canceler: fitted,
        residual: res,
        zero_residual,
        method: sol.method,
        iterations: sol.iterations,
        kkt_violation: sol.kkt_violation,
    })
}

/// `10 log10(Σ|h|² / Σ|h − h_can|²)`, capped at [`CANCELLATION_CAP_DB`].
pub fn cancellation_db(target: &[Complex64], canceler: &Canceler, grid: &BandGrid) -> Result<f64> {
    if target.len() != grid.len() {
        return Err(Error::shape(grid.len().to_string(), target.len().to_string()));
    }
    ratio_db(energy(target), residual(target, canceler, grid))
}

/// Pulls the fitted weights apart into `(w_I, w_Q)` arrays.
pub fn split_weights(weights: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (weights.iter().map(|w| w.re).collect(), weights.iter().map(|w| w.im).collect())
}
