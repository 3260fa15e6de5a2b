//! Box-constrained convex quadratic programs `min ½xᵀGx − bᵀx, lo ≤ x ≤ hi`.
//!
//! The unconstrained minimizer is tried first. When it leaves the box, a
//! primal-dual active-set iteration takes over; it terminates in a handful of
//! linear solves on well-scaled problems. If the active sets cycle, an
//! accelerated projected-gradient loop finishes the job.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Unconstrained,
    ActiveSet,
    ProjectedGradient,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: Vec<f64>,
    pub method: SolveMethod,
    pub iterations: usize,
    /// Largest violation of the first-order conditions, relative to `‖b‖∞`.
    pub kkt_violation: f64,
}

const MAX_ACTIVE_SET_ITERS: usize = 200;
const MAX_GRADIENT_ITERS: usize = 200_000;
const GRADIENT_TOL: f64 = 1e-10;
const RIDGE: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

struct Problem<'a> {
    g: DMatrix<f64>,
    b: &'a DVector<f64>,
    lo: f64,
    hi: f64,
}

impl Problem<'_> {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g * x - self.b
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.g * x)) - self.b.dot(x)
    }

    fn kkt(&self, x: &DVector<f64>) -> f64 {
        let g = self.gradient(x);
        let scale = self.b.amax().max(f64::MIN_POSITIVE);
        let tol = 1e-12 * (self.hi - self.lo);
        let worst = (0..x.len())
            .map(|i| {
                if x[i] >= self.hi - tol {
                    g[i].max(0.0)
                } else if x[i] <= self.lo + tol {
                    (-g[i]).max(0.0)
                } else {
                    g[i].abs()
                }
            })
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Solves the equality-constrained subproblem for the given bound pattern.
    fn solve_reduced(&self, pattern: &[Bound]) -> Result<DVector<f64>> {
        let n = pattern.len();
        let mut x = DVector::zeros(n);
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == Bound::Free).collect();
        for i in 0..n {
            match pattern[i] {
                Bound::Lower => x[i] = self.lo,
                Bound::Upper => x[i] = self.hi,
                Bound::Free => {}
            }
        }
        if free.is_empty() {
            return Ok(x);
        }
        let rhs_full = self.b - &self.g * &x;
        // Jacobi scaling keeps the reduced Cholesky well conditioned even when
        // column norms span many orders of magnitude.
        let d: Vec<f64> = free.iter().map(|&i| 1.0 / self.g[(i, i)].sqrt()).collect();
        let gf = DMatrix::from_fn(free.len(), free.len(), |r, c| {
            self.g[(free[r], free[c])] * d[r] * d[c]
        });
        let rhs = DVector::from_fn(free.len(), |r, _| rhs_full[free[r]] * d[r]);
        let ch = Cholesky::new(gf).ok_or_else(|| Error::NotPositiveDefinite("reduced canceler Gram".into()))?;
        let y = ch.solve(&rhs);
        for (r, &i) in free.iter().enumerate() {
            x[i] = y[r] * d[r];
        }
        Ok(x)
    }

    fn pattern_from(&self, x: &DVector<f64>) -> Vec<Bound> {
        let grad = self.gradient(x);
        (0..x.len())
            .map(|i| {
                let trial = x[i] - grad[i] / self.g[(i, i)];
                if trial > self.hi {
                    Bound::Upper
                } else if trial < self.lo {
                    Bound::Lower
                } else {
                    Bound::Free
                }
            })
            .collect()
    }

    fn project(&self, x: &mut DVector<f64>) {
        for v in x.iter_mut() {
            *v = v.clamp(self.lo, self.hi);
        }
    }

    fn projected_gradient(&self, start: DVector<f64>) -> (DVector<f64>, usize) {
        // Row-sum bound on the largest eigenvalue.
        let lipschitz = self
            .g
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let step = 1.0 / lipschitz;
        let mut x = start;
        self.project(&mut x);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut f_prev = self.objective(&x);
        for it in 1..=MAX_GRADIENT_ITERS {
            let mut x_next = &y - self.gradient(&y) * step;
            self.project(&mut x_next);
            let f_next = self.objective(&x_next);
            if f_next > f_prev {
                // Restart momentum when the objective goes up.
                t = 1.0;
                y = x.clone();
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
            let change = (f_prev - f_next).abs();
            x = x_next;
            t = t_next;
            let converged = change <= GRADIENT_TOL * f_next.abs().max(f64::MIN_POSITIVE);
            f_prev = f_next;
            if converged {
                return (x, it);
            }
        }
        (x, MAX_GRADIENT_ITERS)
    }
}

/// Minimizes `½xᵀGx − bᵀx` over the box `[lo, hi]ⁿ`. `G` must be symmetric
/// positive semidefinite; a tiny relative ridge makes it definite. `start`, if
/// given, must be feasible and seeds the active-set guess.
pub fn solve_box_qp(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: f64,
    hi: f64,
    start: Option<&[f64]>,
) -> Result<BoxQpSolution> {
    let n = b.len();
    if g.shape() != (n, n) {
        return Err(Error::shape(format!("{n}x{n}"), format!("{}x{}", g.nrows(), g.ncols())));
    }
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("empty box [{lo}, {hi}]")));
    }
    if !g.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite quadratic program data".into()));
    }
    let mean_diag = g.trace() / n.max(1) as f64;
    if n == 0 || mean_diag <= 0.0 {
        let x = vec![0f64.clamp(lo, hi); n];
        return Ok(BoxQpSolution { x, method: SolveMethod::Unconstrained, iterations: 0, kkt_violation: 0.0 });
    }
    let mut gr = g.clone();
    for i in 0..n {
        gr[(i, i)] += RIDGE * mean_diag;
    }
    let p = Problem { g: gr, b, lo, hi };

    let (x0, mut method) = match start {
        Some(s) => {
            if s.len() != n {
                return Err(Error::shape(n.to_string(), s.len().to_string()));
            }
            if s.iter().any(|v| !(lo..=hi).contains(v)) {
                return Err(Error::InvalidInput("starting point is outside the box".into()));
            }
            (DVector::from_column_slice(s), SolveMethod::ActiveSet)
        }
        None => {
            let x = p.solve_reduced(&vec![Bound::Free; n])?;
            if x.iter().all(|v| (lo..=hi).contains(v)) {
                let kkt_violation = p.kkt(&x);
                return Ok(BoxQpSolution { x: x.data.into(), method: SolveMethod::Unconstrained, iterations: 1, kkt_violation });
            }
            (x, SolveMethod::ActiveSet)
        }
    };

    let mut pattern = p.pattern_from(&x0);
    let mut x = x0;
    let mut iterations = 0;
    let mut converged = false;
    let mut seen: Vec<Vec<Bound>> = Vec::new();
    while iterations < MAX_ACTIVE_SET_ITERS {
        iterations += 1;
        x = p.solve_reduced(&pattern)?;
        let next = p.pattern_from(&x);
        if next == pattern && x.iter().all(|v| (lo..=hi).contains(v)) {
            converged = true;
            break;
        }
        if seen.contains(&next) {
            break;
        }
        seen.push(std::mem::replace(&mut pattern, next));
    }
    if !converged {
        let (xp, its) = p.projected_gradient(x);
        x = xp;
        iterations += its;
        method = SolveMethod::ProjectedGradient;
    }
    p.project(&mut x);
    let kkt_violation = p.kkt(&x);
    Ok(BoxQpSolution { x: x.data.into(), method, iterations, kkt_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_1d(g: f64, b: f64) -> f64 {
        (b / g).clamp(-1.0, 1.0)
    }

    #[test]
    fn interior_solution_is_exact() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![0.3, -0.2]);
        let s = solve_box_qp(&g, &b, -1.0, 1.0, None).unwrap();
        assert_eq!(s.method, SolveMethod::Unconstrained);
        let r = &g * DVector::from_vec(s.x.clone()) - &b;
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn separable_clamps() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let b = DVector::from_vec(vec![5.0, -0.5, -9.0]);
        let s = solve_box_qp(&g, &b, -1.0, 1.0, None).unwrap();
        for i in 0..3 {
            assert!((s.x[i] - brute_force_1d(g[(i, i)], b[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_start() {
        let g = DMatrix::identity(2, 2);
        let b = DVector::zeros(2);
        assert!(solve_box_qp(&g, &b, -1.0, 1.0, Some(&[2.0, 0.0])).is_err());
    }

    fn random_problem(seed: u64, n: usize, m: usize) -> (DMatrix<f64>, DVector<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(m, |_, _| rng.random_range(-4.0..4.0));
        (a.transpose() * &a, a.transpose() * y)
    }

    proptest! {
        #[test]
        fn solution_satisfies_kkt(seed in 0u64..10_000, n in 1usize..12) {
            let (g, b) = random_problem(seed, n, n + 3);
            let s = solve_box_qp(&g, &b, -1.0, 1.0, None).unwrap();
            prop_assert!(s.x.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert!(s.kkt_violation < 1e-8, "kkt {}", s.kkt_violation);
        }

        #[test]
        fn restart_gives_same_objective(seed in 0u64..10_000, n in 2usize..10, s0 in -1.0f64..1.0) {
            let (g, b) = random_problem(seed, n, n + 2);
            let obj = |x: &[f64]| {
                let x = DVector::from_column_slice(x);
                0.5 * x.dot(&(&g * &x)) - b.dot(&x)
            };
            let a = solve_box_qp(&g, &b, -1.0, 1.0, None).unwrap();
            let start = vec![s0; n];
            let c = solve_box_qp(&g, &b, -1.0, 1.0, Some(&start)).unwrap();
            let (fa, fc) = (obj(&a.x), obj(&c.x));
            prop_assert!((fa - fc).abs() <= 1e-8 * fa.abs().max(1e-12));
        }
    }
}
