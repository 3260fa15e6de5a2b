//! Block-diagonal RF codebooks trained with a phase-projected LBG algorithm.
//!
//! A codeword for an `N`-element array split into `U` sub-arrays is the
//! `N × U` block-diagonal matrix whose column `u` is non-zero only on rows
//! `u·N/U .. (u+1)·N/U`. Only the `N` in-support entries are stored.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, ZERO};
use crate::rng::unit_phase;

/// Shape of a block-diagonal beamformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub antennas: usize,
    pub subarrays: usize,
}

impl Layout {
    pub fn new(antennas: usize, subarrays: usize) -> Result<Self> {
        if antennas == 0 || subarrays == 0 || antennas % subarrays != 0 {
            return Err(Error::InvalidInput(format!(
                "{antennas} antennas cannot be split into {subarrays} equal sub-arrays"
            )));
        }
        Ok(Layout { antennas, subarrays })
    }

    pub fn block_len(&self) -> usize {
        self.antennas / self.subarrays
    }

    pub fn block_of(&self, row: usize) -> usize {
        row / self.block_len()
    }

    /// `P·Q` in the distance normalization.
    fn entries(&self) -> f64 {
        (self.antennas * self.subarrays) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codeword {
    pub layout: Layout,
    /// In-support entries, row order.
    pub support: Vec<Complex64>,
}

impl Codeword {
    pub fn new(layout: Layout, support: Vec<Complex64>) -> Result<Self> {
        if support.len() != layout.antennas {
            return Err(Error::shape(layout.antennas.to_string(), support.len().to_string()));
        }
        Ok(Codeword { layout, support })
    }

    /// Reads the support of a block-diagonal matrix; off-support entries
    /// must be zero.
    pub fn from_matrix(layout: Layout, m: &CMat) -> Result<Self> {
        if m.shape() != (layout.antennas, layout.subarrays) {
            return Err(Error::shape(
                format!("{}x{}", layout.antennas, layout.subarrays),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        for r in 0..layout.antennas {
            for c in 0..layout.subarrays {
                if c != layout.block_of(r) && m[(r, c)] != ZERO {
                    return Err(Error::InvalidInput(format!("entry ({r}, {c}) is off the block-diagonal support")));
                }
            }
        }
        Ok(Codeword {
            layout,
            support: (0..layout.antennas).map(|r| m[(r, layout.block_of(r))]).collect(),
        })
    }

    pub fn random<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        Codeword {
            layout,
            support: (0..layout.antennas).map(|_| unit_phase(rng)).collect(),
        }
    }

    pub fn to_matrix(&self) -> CMat {
        let l = self.layout;
        CMat::from_fn(l.antennas, l.subarrays, |r, c| if c == l.block_of(r) { self.support[r] } else { ZERO })
    }

    pub fn block(&self, u: usize) -> &[Complex64] {
        let n = self.layout.block_len();
        &self.support[u * n..(u + 1) * n]
    }

    /// Every in-support entry has unit modulus to within `tol`.
    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.support.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
    }
}

fn sq_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

fn phase(z: Complex64) -> Complex64 {
    Complex64::from_polar(1.0, z.arg())
}

/// `(1/PQ) Σ |X_pq − Y_pq|²`.
pub fn matrix_distance(x: &CMat, y: &CMat) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::shape(format!("{:?}", x.shape()), format!("{:?}", y.shape())));
    }
    let pq = (x.nrows() * x.ncols()) as f64;
    if pq == 0.0 {
        return Err(Error::InvalidInput("empty matrices".into()));
    }
    Ok(x.iter().zip(y.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / pq)
}

/// Matrix distance between two codewords of the same layout.
pub fn codeword_distance(x: &Codeword, y: &Codeword) -> f64 {
    sq_dist(&x.support, &y.support) / x.layout.entries()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbgConfig {
    pub epsilon: f64,
    pub inner_iterations: usize,
    pub training_size: usize,
}

impl Default for LbgConfig {
    fn default() -> Self {
        LbgConfig {
            epsilon: 1e-3,
            inner_iterations: 50,
            training_size: 4096,
        }
    }
}

impl LbgConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.1) {
            return Err(Error::InvalidInput(format!("split perturbation {} outside (0, 0.1)", self.epsilon)));
        }
        if self.inner_iterations == 0 {
            return Err(Error::InvalidInput("need at least one inner iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub bits: u32,
    pub layout: Layout,
    pub entries: Vec<Codeword>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nearest codeword, lowest index on ties.
    pub fn quantize(&self, x: &Codeword) -> Result<(usize, f64)> {
        if x.layout != self.layout {
            return Err(Error::shape(format!("{:?}", self.layout), format!("{:?}", x.layout)));
        }
        let items: Vec<&[Complex64]> = self.entries.iter().map(|c| c.support.as_slice()).collect();
        let (i, d) = nearest(&x.support, &items);
        Ok((i, d / self.layout.entries()))
    }

    pub fn mean_distortion(&self, set: &[Codeword]) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let mut acc = 0.0;
        for x in set {
            acc += self.quantize(x)?.1;
        }
        Ok(acc / set.len() as f64)
    }
}

fn nearest(x: &[Complex64], items: &[&[Complex64]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in items.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Training set of `size` block-diagonal matrices whose in-support entries
/// are the phases of CN(0, 1) draws.
pub fn random_training_set<R: Rng + ?Sized>(layout: Layout, size: usize, rng: &mut R) -> Vec<Codeword> {
    (0..size).map(|_| Codeword::random(layout, rng)).collect()
}

/// Progress report from a training run.
#[derive(Debug, Clone, PartialEq)]
pub enum LbgEvent<'a> {
    Init { codebook: &'a [Vec<Complex64>] },
    Split { bits: u32, codebook: &'a [Vec<Complex64>] },
    /// Total distortion `Σ_t ‖F_t − C_label(t)‖²` after a nearest-neighbor
    /// pass or a centroid update, unnormalized.
    Assign { bits: u32, iteration: usize, distortion: f64, codebook: &'a [Vec<Complex64>] },
    Update { bits: u32, iteration: usize, distortion: f64, codebook: &'a [Vec<Complex64>] },
}

/// Phase of the element-wise mean.
fn centroid<'a>(members: impl Iterator<Item = &'a [Complex64]>, len: usize) -> Vec<Complex64> {
    let mut acc = vec![ZERO; len];
    for m in members {
        for (a, z) in acc.iter_mut().zip(m) {
            *a += z;
        }
    }
    acc.into_iter().map(phase).collect()
}

fn init_items(training: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let first = training.first().ok_or_else(|| Error::InvalidInput("empty training set".into()))?;
    if training.iter().any(|t| t.len() != first.len()) {
        return Err(Error::InvalidInput("training items have mixed sizes".into()));
    }
    Ok(centroid(training.iter().map(|t| t.as_slice()), first.len()))
}

fn split_items<R: Rng + ?Sized>(book: &[Vec<Complex64>], epsilon: f64, rng: &mut R) -> Vec<Vec<Complex64>> {
    let keep = (1.0 - epsilon * epsilon).sqrt();
    let mut out = Vec::with_capacity(2 * book.len());
    for c in book {
        let p: Vec<Complex64> = (0..c.len()).map(|_| unit_phase(rng)).collect();
        out.push(c.iter().zip(&p).map(|(z, q)| phase(z * keep + q * epsilon)).collect());
        out.push(c.iter().zip(&p).map(|(z, q)| phase(z * keep - q * epsilon)).collect());
    }
    out
}

fn assign_items(training: &[Vec<Complex64>], book: &[Vec<Complex64>]) -> (Vec<usize>, f64) {
    let items: Vec<&[Complex64]> = book.iter().map(|c| c.as_slice()).collect();
    let mut total = 0.0;
    let labels = training
        .iter()
        .map(|t| {
            let (i, d) = nearest(t, &items);
            total += d;
            i
        })
        .collect();
    (labels, total)
}

fn update_items<R: Rng + ?Sized>(
    training: &[Vec<Complex64>],
    labels: &[usize],
    size: usize,
    rng: &mut R,
) -> Vec<Vec<Complex64>> {
    let len = training[0].len();
    (0..size)
        .map(|k| {
            let members: Vec<&[Complex64]> = training
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == k)
                .map(|(t, _)| t.as_slice())
                .collect();
            if members.is_empty() {
                training[rng.random_range(0..training.len())].clone()
            } else {
                centroid(members.into_iter(), len)
            }
        })
        .collect()
}

fn distortion(training: &[Vec<Complex64>], labels: &[usize], book: &[Vec<Complex64>]) -> f64 {
    training.iter().zip(labels).map(|(t, &l)| sq_dist(t, &book[l])).sum()
}

/// Generic LBG loop over flat items; used by both codebook kinds.
fn train_items<R: Rng + ?Sized>(
    cfg: &LbgConfig,
    training: &[Vec<Complex64>],
    bits: u32,
    rng: &mut R,
    observer: &mut dyn FnMut(&LbgEvent),
) -> Result<Vec<Vec<Complex64>>> {
    cfg.validate()?;
    if bits > 16 {
        return Err(Error::InvalidInput(format!("{bits}-bit codebooks are not supported")));
    }
    if training.len() < (1usize << bits) {
        return Err(Error::InvalidInput(format!(
            "{} training items cannot support {} codewords",
            training.len(),
            1usize << bits
        )));
    }
    let mut book = vec![init_items(training)?];
    observer(&LbgEvent::Init { codebook: &book });
    for b in 1..=bits {
        book = split_items(&book, cfg.epsilon, rng);
        observer(&LbgEvent::Split { bits: b, codebook: &book });
        for v in 0..cfg.inner_iterations {
            let (labels, d) = assign_items(training, &book);
            observer(&LbgEvent::Assign { bits: b, iteration: v, distortion: d, codebook: &book });
            book = update_items(training, &labels, book.len(), rng);
            let d = distortion(training, &labels, &book);
            observer(&LbgEvent::Update { bits: b, iteration: v, distortion: d, codebook: &book });
        }
    }
    Ok(book)
}

fn check_layout(training: &[Codeword]) -> Result<Layout> {
    let layout = training.first().ok_or_else(|| Error::InvalidInput("empty training set".into()))?.layout;
    if training.iter().any(|t| t.layout != layout) {
        return Err(Error::InvalidInput("training set mixes layouts".into()));
    }
    Ok(layout)
}

fn wrap(layout: Layout, items: Vec<Vec<Complex64>>) -> Vec<Codeword> {
    items.into_iter().map(|support| Codeword { layout, support }).collect()
}

/// Phase of the mean training matrix.
pub fn lbg_init(training: &[Codeword]) -> Result<Codeword> {
    let layout = check_layout(training)?;
    let items: Vec<Vec<Complex64>> = training.iter().map(|t| t.support.clone()).collect();
    Ok(Codeword { layout, support: init_items(&items)? })
}

/// Doubles the codebook: `C → phase(√(1−ε²) C ± ε P)` with one random phase
/// matrix `P` per parent. Children of entry `i` land at `2i` and `2i + 1`.
pub fn lbg_split<R: Rng + ?Sized>(book: &Codebook, epsilon: f64, rng: &mut R) -> Result<Codebook> {
    if !(epsilon > 0.0 && epsilon < 0.1) {
        return Err(Error::InvalidInput(format!("split perturbation {epsilon} outside (0, 0.1)")));
    }
    let items: Vec<Vec<Complex64>> = book.entries.iter().map(|c| c.support.clone()).collect();
    Ok(Codebook {
        bits: book.bits + 1,
        layout: book.layout,
        entries: wrap(book.layout, split_items(&items, epsilon, rng)),
    })
}

/// Nearest-codeword labels, lowest index on ties.
pub fn lbg_assign(training: &[Codeword], book: &Codebook) -> Result<Vec<usize>> {
    if book.is_empty() {
        return Err(Error::InvalidInput("empty codebook".into()));
    }
    training.iter().map(|t| book.quantize(t).map(|(i, _)| i)).collect()
}

/// Phase-projected centroids; an empty cluster is re-seeded with a uniformly
/// drawn training member.
pub fn lbg_update<R: Rng + ?Sized>(training: &[Codeword], labels: &[usize], book: &Codebook, rng: &mut R) -> Result<Codebook> {
    let layout = check_layout(training)?;
    if labels.len() != training.len() {
        return Err(Error::shape(training.len().to_string(), labels.len().to_string()));
    }
    if labels.iter().any(|&l| l >= book.len()) {
        return Err(Error::InvalidInput("label out of codebook range".into()));
    }
    let items: Vec<Vec<Complex64>> = training.iter().map(|t| t.support.clone()).collect();
    Ok(Codebook {
        bits: book.bits,
        layout,
        entries: wrap(layout, update_items(&items, labels, book.len(), rng)),
    })
}

/// Trains a `bits`-bit matrix codebook on a fresh random training set.
pub fn train_codebook<R: Rng + ?Sized>(cfg: &LbgConfig, layout: Layout, bits: u32, rng: &mut R) -> Result<Codebook> {
    let training = random_training_set(layout, cfg.training_size, rng);
    train_codebook_on(cfg, &training, bits, rng, &mut |_| {})
}

/// Trains a matrix codebook on the given set, reporting every step.
pub fn train_codebook_on<R: Rng + ?Sized>(
    cfg: &LbgConfig,
    training: &[Codeword],
    bits: u32,
    rng: &mut R,
    observer: &mut dyn FnMut(&LbgEvent),
) -> Result<Codebook> {
    let layout = check_layout(training)?;
    let items: Vec<Vec<Complex64>> = training.iter().map(|t| t.support.clone()).collect();
    let book = train_items(cfg, &items, bits, rng, observer)?;
    Ok(Codebook { bits, layout, entries: wrap(layout, book) })
}

/// Conventional per-sub-array vector codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorCodebook {
    pub bits: u32,
    pub layout: Layout,
    pub entries: Vec<Vec<Complex64>>,
}

impl VectorCodebook {
    /// Picks one vector per block independently, which is the nearest
    /// product codeword under the matrix distance.
    pub fn quantize(&self, x: &Codeword) -> Result<(Vec<usize>, f64)> {
        if x.layout != self.layout {
            return Err(Error::shape(format!("{:?}", self.layout), format!("{:?}", x.layout)));
        }
        let items: Vec<&[Complex64]> = self.entries.iter().map(|c| c.as_slice()).collect();
        let mut total = 0.0;
        let picks = (0..self.layout.subarrays)
            .map(|u| {
                let (i, d) = nearest(x.block(u), &items);
                total += d;
                i
            })
            .collect();
        Ok((picks, total / self.layout.entries()))
    }

    pub fn assemble(&self, picks: &[usize]) -> Result<Codeword> {
        if picks.len() != self.layout.subarrays || picks.iter().any(|&p| p >= self.entries.len()) {
            return Err(Error::InvalidInput("bad per-block codeword selection".into()));
        }
        let support = picks.iter().flat_map(|&p| self.entries[p].iter().copied()).collect();
        Codeword::new(self.layout, support)
    }

    pub fn mean_distortion(&self, set: &[Codeword]) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let mut acc = 0.0;
        for x in set {
            acc += self.quantize(x)?.1;
        }
        Ok(acc / set.len() as f64)
    }

    /// Number of distinct block-diagonal matrices the book can express.
    pub fn candidate_count(&self) -> u128 {
        (self.entries.len() as u128).pow(self.layout.subarrays as u32)
    }

    /// All `2^{U b}` product codewords, first block varying slowest.
    pub fn expand(&self) -> Result<Codebook> {
        let total = self.candidate_count();
        if total > 1 << 16 {
            return Err(Error::InvalidInput(format!("{total} product codewords are too many to expand")));
        }
        let q = self.entries.len();
        let u = self.layout.subarrays;
        let entries = (0..total as usize)
            .map(|mut idx| {
                let mut picks = vec![0; u];
                for slot in (0..u).rev() {
                    picks[slot] = idx % q;
                    idx /= q;
                }
                self.assemble(&picks)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Codebook { bits: self.bits * u as u32, layout: self.layout, entries })
    }
}

/// Runs the same LBG procedure on the per-block vectors of the training set.
pub fn train_vector_codebook_baseline<R: Rng + ?Sized>(
    cfg: &LbgConfig,
    training: &[Codeword],
    bits: u32,
    rng: &mut R,
    observer: &mut dyn FnMut(&LbgEvent),
) -> Result<VectorCodebook> {
    let layout = check_layout(training)?;
    let items: Vec<Vec<Complex64>> = training
        .iter()
        .flat_map(|t| (0..layout.subarrays).map(move |u| t.block(u).to_vec()))
        .collect();
    let entries = train_items(cfg, &items, bits, rng, observer)?;
    Ok(VectorCodebook { bits, layout, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    fn small_cfg() -> LbgConfig {
        LbgConfig { epsilon: 1e-3, inner_iterations: 10, training_size: 64 }
    }

    #[test]
    fn distance_basics() {
        let x = CMat::from_element(1, 1, c(1.0, 0.0));
        let y = CMat::from_element(1, 1, c(-1.0, 0.0));
        assert_eq!(matrix_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(matrix_distance(&x, &y).unwrap(), 4.0);
        assert!(matrix_distance(&x, &CMat::zeros(2, 1)).is_err());
    }

    #[test]
    fn distance_matches_double_loop() {
        let mut rng = stream(1, 0, Purpose::Fixture);
        let x = crate::linalg::random_matrix(4, 2, 1.0, &mut rng);
        let y = crate::linalg::random_matrix(4, 2, 1.0, &mut rng);
        let mut acc = 0.0;
        for p in 0..4 {
            for q in 0..2 {
                let d = x[(p, q)] - y[(p, q)];
                acc += d.re * d.re + d.im * d.im;
            }
        }
        assert!((matrix_distance(&x, &y).unwrap() - acc / 8.0).abs() < 1e-15);
    }

    #[test]
    fn codeword_matrix_roundtrip() {
        let layout = Layout::new(6, 3).unwrap();
        let mut rng = stream(1, 1, Purpose::Fixture);
        let cw = Codeword::random(layout, &mut rng);
        let m = cw.to_matrix();
        assert_eq!(m[(2, 1)], cw.support[2]);
        assert_eq!(m[(2, 0)], ZERO);
        assert_eq!(Codeword::from_matrix(layout, &m).unwrap(), cw);
        let other = Codeword::random(layout, &mut rng);
        assert!((codeword_distance(&cw, &other) - matrix_distance(&m, &other.to_matrix()).unwrap()).abs() < 1e-15);
        let mut bad = m.clone();
        bad[(0, 2)] = c(1.0, 0.0);
        assert!(Codeword::from_matrix(layout, &bad).is_err());
        assert!(Layout::new(5, 2).is_err());
    }

    #[test]
    fn init_cases() {
        let layout = Layout::new(2, 1).unwrap();
        let one = Codeword::new(layout, vec![c(0.0, 1.0), Complex64::from_polar(1.0, 2.0)]).unwrap();
        let init = lbg_init(std::slice::from_ref(&one)).unwrap();
        assert!(codeword_distance(&init, &one) < 1e-24);
        let phi = 0.7;
        let a = Codeword::new(layout, vec![Complex64::from_polar(1.0, phi); 2]).unwrap();
        let b = Codeword::new(layout, vec![Complex64::from_polar(1.0, -phi); 2]).unwrap();
        let init = lbg_init(&[a, b]).unwrap();
        assert!(init.support.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-12));
        assert!(lbg_init(&[]).is_err());
    }

    #[test]
    fn init_matches_mean_then_phase() {
        let layout = Layout::new(4, 2).unwrap();
        let mut rng = stream(2, 0, Purpose::Fixture);
        let set = random_training_set(layout, 100, &mut rng);
        let mean = set.iter().map(|t| t.to_matrix()).fold(CMat::zeros(4, 2), |a, m| a + m) / c(100.0, 0.0);
        let init = lbg_init(&set).unwrap();
        for r in 0..4 {
            let z = mean[(r, layout.block_of(r))];
            assert!((init.support[r] - z / z.norm()).norm() < 1e-12);
        }
    }

    #[test]
    fn split_matches_formula() {
        let layout = Layout::new(4, 2).unwrap();
        let mut rng = stream(3, 0, Purpose::Fixture);
        let parent = Codebook { bits: 0, layout, entries: vec![Codeword::random(layout, &mut rng)] };
        let eps = 1e-3;
        let mut r1 = stream(3, 1, Purpose::Fixture);
        let kids = lbg_split(&parent, eps, &mut r1).unwrap();
        let mut r2 = stream(3, 1, Purpose::Fixture);
        let p: Vec<Complex64> = (0..4).map(|_| unit_phase(&mut r2)).collect();
        assert_eq!(kids.len(), 2);
        for (k, sign) in [(0, 1.0), (1, -1.0)] {
            for r in 0..4 {
                let z = parent.entries[0].support[r] * (1.0 - eps * eps).sqrt() + p[r] * (sign * eps);
                assert!((kids.entries[k].support[r] - z / z.norm()).norm() < 1e-15);
                assert!((kids.entries[k].support[r] - parent.entries[0].support[r]).norm() < 2.5 * eps);
            }
            assert!(kids.entries[k].is_unit_modulus(1e-12));
        }
    }

    #[test]
    fn assign_and_update_small_cases() {
        let layout = Layout::new(2, 2).unwrap();
        let mut rng = stream(4, 0, Purpose::Fixture);
        let set = random_training_set(layout, 5, &mut rng);
        let book = Codebook { bits: 0, layout, entries: vec![set[3].clone()] };
        assert_eq!(lbg_assign(&set, &book).unwrap(), vec![0; 5]);
        let book = Codebook { bits: 1, layout, entries: vec![set[0].clone(), set[3].clone()] };
        assert_eq!(lbg_assign(&set, &book).unwrap()[3], 1);
        let updated = lbg_update(&set[3..4], &[1], &book, &mut rng).unwrap();
        assert!(codeword_distance(&updated.entries[1], &set[3]) < 1e-24);
        // The empty cluster 0 was re-seeded with a training member.
        assert!(codeword_distance(&updated.entries[0], &set[3]) < 1e-24);
    }

    #[test]
    fn assign_matches_brute_force() {
        let layout = Layout::new(4, 2).unwrap();
        let mut rng = stream(5, 0, Purpose::Fixture);
        let set = random_training_set(layout, 40, &mut rng);
        let book = Codebook { bits: 3, layout, entries: random_training_set(layout, 8, &mut rng) };
        let labels = lbg_assign(&set, &book).unwrap();
        for (t, &l) in set.iter().zip(&labels) {
            let mats: Vec<f64> = book.entries.iter().map(|e| matrix_distance(&t.to_matrix(), &e.to_matrix()).unwrap()).collect();
            let best = mats.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(l, mats.iter().position(|&d| d == best).unwrap());
        }
    }

    #[test]
    fn two_point_training() {
        let layout = Layout::new(2, 1).unwrap();
        let a = Codeword::new(layout, vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let b = Codeword::new(layout, vec![c(-1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let mut rng = stream(6, 0, Purpose::Fixture);
        let book = train_codebook_on(&small_cfg(), &[a.clone(), b.clone()], 1, &mut rng, &mut |_| {}).unwrap();
        let mut found = [false, false];
        for e in &book.entries {
            found[0] |= codeword_distance(e, &a) < 1e-20;
            found[1] |= codeword_distance(e, &b) < 1e-20;
        }
        assert_eq!(found, [true, true]);
    }

    #[test]
    fn zero_bits_is_init() {
        let layout = Layout::new(4, 2).unwrap();
        let mut rng = stream(7, 0, Purpose::Fixture);
        let set = random_training_set(layout, 16, &mut rng);
        let book = train_codebook_on(&small_cfg(), &set, 0, &mut rng, &mut |_| {}).unwrap();
        assert_eq!(book.entries, vec![lbg_init(&set).unwrap()]);
    }

    #[test]
    fn too_few_training_items() {
        let layout = Layout::new(4, 2).unwrap();
        let mut rng = stream(7, 1, Purpose::Fixture);
        let set = random_training_set(layout, 3, &mut rng);
        assert!(train_codebook_on(&small_cfg(), &set, 2, &mut rng, &mut |_| {}).is_err());
    }

    #[test]
    fn vector_counts_and_degenerate_equivalence() {
        let layout = Layout::new(4, 1).unwrap();
        let mut rng = stream(8, 0, Purpose::Fixture);
        let set = random_training_set(layout, 32, &mut rng);
        let m = train_codebook_on(&small_cfg(), &set, 2, &mut stream(8, 1, Purpose::Fixture), &mut |_| {}).unwrap();
        let v = train_vector_codebook_baseline(&small_cfg(), &set, 2, &mut stream(8, 1, Purpose::Fixture), &mut |_| {}).unwrap();
        assert_eq!(v.expand().unwrap().entries, m.entries);

        let layout = Layout::new(8, 4).unwrap();
        let set = random_training_set(layout, 32, &mut rng);
        let v = train_vector_codebook_baseline(&small_cfg(), &set, 2, &mut rng, &mut |_| {}).unwrap();
        assert_eq!(v.candidate_count(), 1 << 8);
        let full = v.expand().unwrap();
        assert_eq!(full.len(), 256);
        // Block-wise quantization finds the best product codeword.
        for x in &set[..5] {
            let (_, d) = v.quantize(x).unwrap();
            assert!((full.quantize(x).unwrap().1 - d).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn distortion_monotone_and_unit_modulus(seed in 0u64..1000, bits in 1u32..4) {
            let layout = Layout::new(8, 2).unwrap();
            let mut rng = stream(seed, 0, Purpose::Codebook);
            let set = random_training_set(layout, 64, &mut rng);
            let mut last = f64::INFINITY;
            let mut ok = true;
            let mut unit = true;
            train_codebook_on(&small_cfg(), &set, bits, &mut rng, &mut |e| {
                match e {
                    LbgEvent::Split { codebook, .. } | LbgEvent::Init { codebook } => {
                        last = f64::INFINITY;
                        unit &= codebook.iter().flatten().all(|z| (z.norm() - 1.0).abs() < 1e-12);
                    }
                    LbgEvent::Assign { distortion, codebook, .. } | LbgEvent::Update { distortion, codebook, .. } => {
                        ok &= *distortion <= last * (1.0 + 1e-12);
                        last = *distortion;
                        unit &= codebook.iter().flatten().all(|z| (z.norm() - 1.0).abs() < 1e-12);
                    }
                }
            }).unwrap();
            prop_assert!(ok);
            prop_assert!(unit);
        }

        #[test]
        fn quantize_is_nearest(seed in 0u64..1000, shift in 0.0f64..10.0) {
            let layout = Layout::new(4, 2).unwrap();
            let mut rng = stream(seed, 1, Purpose::Codebook);
            let book = Codebook { bits: 3, layout, entries: random_training_set(layout, 8, &mut rng) };
            let x = Codeword::random(layout, &mut rng);
            let (i, d) = book.quantize(&x).unwrap();
            for e in &book.entries {
                prop_assert!(d <= codeword_distance(&x, e));
            }
            // Shifting every distance by a constant keeps the argmin.
            let shifted: Vec<f64> = book.entries.iter().map(|e| codeword_distance(&x, e) + shift).collect();
            let m = shifted.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(shifted.iter().position(|&v| v == m).unwrap(), i);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let layout = Layout::new(8, 2).unwrap();
        let cfg = small_cfg();
        let a = train_codebook(&cfg, layout, 3, &mut stream(9, 0, Purpose::Codebook)).unwrap();
        let b = train_codebook(&cfg, layout, 3, &mut stream(9, 0, Purpose::Codebook)).unwrap();
        assert_eq!(a, b);
    }
}
