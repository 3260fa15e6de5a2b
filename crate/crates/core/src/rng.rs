//! Seeded random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 generator seeded
//! with the master seed. Independent consumers are separated by the ChaCha
//! stream id, which is built as `(trial << 8) | purpose`. Two consumers with a
//! different `(trial, purpose)` pair therefore never share key-stream blocks,
//! and the draws of one consumer do not depend on how many values any other
//! consumer pulled.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Purpose tag for a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Backhaul = 1,
    SelfInterference = 2,
    Access = 3,
    Codebook = 4,
    Estimation = 5,
    Hwi = 6,
    Canceler = 7,
    Sweep = 8,
    HeldOut = 9,
    Fixture = 10,
}

/// Deterministic stream for `(master, trial, purpose)`.
pub fn stream(master: u64, trial: u64, purpose: Purpose) -> SimRng {
    assert!(trial < (1 << 56), "trial index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Unit-modulus sample with uniform phase, i.e. the angle of a CN(0, 1) draw.
pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let z = complex_normal(rng, 1.0);
    Complex64::from_polar(1.0, z.arg())
}
