//! Harmonic measure from infinity for a finite set, maintained incrementally.
//!
//! With points `x_1, ..., x_m` (insertion order) the unknowns `z = H_A(inf, .)`
//! and `kappa` satisfy `kappa + sum_i z_i a(x_k - x_i) = 0` for every `k` and
//! `sum_i z_i = 1`. Eliminating `kappa` and `z_1` leaves the positive definite
//! system `B z' = r` with `B_ki = a(x_k - x_1) + a(x_i - x_1) - a(x_k - x_i)`
//! and `r_k = a(x_k - x_1)` for `k, i >= 2`, which is factored by appending one
//! Cholesky row per inserted point.

use serde::Serialize;

use crate::error::{LdlaError, Result};
use crate::kernel::PotentialKernel;

pub const DEFAULT_CHECK_EVERY: u64 = 64;
pub const RESIDUAL_TOL: f64 = 1e-8;
const CHECK_ROWS: usize = 16;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone)]
pub struct HittingSystem {
    /// Points in insertion order.
    order: Vec<i64>,
    /// Packed lower-triangular Cholesky factor of `B`, row `j` holding `j + 1` entries.
    chol: Vec<f64>,
    /// `L^{-1} r`.
    forward: Vec<f64>,
    /// `r_k = a(x_k - x_1)`, indexed like `order` (entry 0 is 0).
    anchor_row: Vec<f64>,
    /// `H_A(inf, .)` in insertion order.
    z: Vec<f64>,
    kappa: f64,
    staleness_counter: u64,
    check_every: u64,
    refinements: u64,
}

/// Read-only snapshot for reports.
#[derive(Debug, Clone, Serialize)]
pub struct HittingSnapshot {
    pub points: Vec<i64>,
    pub hm_infinity: Vec<f64>,
    pub kappa: f64,
    pub max_residual: f64,
}

impl HittingSystem {
    /// System for a single point.
    pub fn singleton(x: i64) -> Self {
        HittingSystem {
            order: vec![x],
            chol: Vec::new(),
            forward: Vec::new(),
            anchor_row: vec![0.0],
            z: vec![1.0],
            kappa: 0.0,
            staleness_counter: 0,
            check_every: DEFAULT_CHECK_EVERY,
            refinements: 0,
        }
    }

    /// Fresh solve for `points`, taken in the given order.
    pub fn solve(kernel: &PotentialKernel, points: &[i64]) -> Result<Self> {
        let (first, rest) = points
            .split_first()
            .ok_or_else(|| LdlaError::SingularSystem { points: Vec::new() })?;
        let mut sys = Self::singleton(*first);
        for &x in rest {
            sys.append(kernel, x)?;
        }
        sys.update_solution();
        // same check schedule as incremental extension from a singleton
        sys.staleness_counter = rest.len() as u64 % sys.check_every;
        if !rest.is_empty() && sys.staleness_counter == 0 {
            sys.check_and_refine(kernel)?;
        }
        Ok(sys)
    }

    pub fn with_check_every(mut self, k: u64) -> Self {
        self.check_every = k.max(1);
        self
    }

    /// Adds `x` and updates `H` and `kappa` in `O(m^2)`. Every `check_every`
    /// insertions the constraint rows are spot-checked and, if needed, refined.
    /// On error the system is left unchanged.
    pub fn extend(&mut self, kernel: &PotentialKernel, x: i64) -> Result<()> {
        let saved_z = self.z.clone();
        let saved_kappa = self.kappa;
        self.append(kernel, x)?;
        self.staleness_counter += 1;
        self.update_solution();
        let result = if self.staleness_counter >= self.check_every {
            self.staleness_counter = 0;
            self.check_and_refine(kernel)
        } else {
            Ok(())
        };
        if let Err(e) = result {
            self.pop();
            self.z = saved_z;
            self.kappa = saved_kappa;
            return Err(e);
        }
        Ok(())
    }

    fn pop(&mut self) {
        let m = self.order.len();
        if m <= 1 {
            return;
        }
        let row = m - 2;
        self.chol.truncate(self.chol.len() - (row + 1));
        self.forward.pop();
        self.anchor_row.pop();
        self.order.pop();
    }

    /// Appends one Cholesky row; does not touch `z`.
    fn append(&mut self, kernel: &PotentialKernel, x: i64) -> Result<()> {
        if self.order.contains(&x) {
            return Err(LdlaError::PointInAggregate(x));
        }
        let x1 = self.order[0];
        let r_new = kernel.eval(sub(x, x1)?);
        let m = self.order.len();
        // new row of B against points 2..m, then forward solve
        let mut y: Vec<f64> = (1..m)
            .map(|j| Ok(r_new + self.anchor_row[j] - kernel.eval(sub(x, self.order[j])?)))
            .collect::<Result<_>>()?;
        let mut sq = 0.0;
        for j in 0..y.len() {
            let row = &self.chol[j * (j + 1) / 2..(j + 1) * (j + 2) / 2];
            let mut s = y[j];
            for l in 0..j {
                s -= row[l] * y[l];
            }
            let v = s / row[j];
            y[j] = v;
            sq += v * v;
        }
        let pivot = 2.0 * r_new - sq;
        if !(pivot > 1e-14 * 2.0 * r_new) {
            let mut pts = self.order.clone();
            pts.push(x);
            return Err(LdlaError::SingularSystem { points: pts });
        }
        let d = pivot.sqrt();
        let mut wdot = 0.0;
        for (yj, wj) in y.iter().zip(&self.forward) {
            wdot += yj * wj;
        }
        self.forward.push((r_new - wdot) / d);
        self.chol.extend_from_slice(&y);
        self.chol.push(d);
        self.anchor_row.push(r_new);
        self.order.push(x);
        Ok(())
    }

    /// Back substitution `L^T z' = forward`, then `z_1` and `kappa`.
    fn update_solution(&mut self) {
        let m = self.order.len();
        let zr = self.back_substitute(self.forward.clone());
        self.set_solution(zr, m);
    }

    fn set_solution(&mut self, zr: Vec<f64>, m: usize) {
        let mut z = Vec::with_capacity(m);
        z.push(1.0 - zr.iter().sum::<f64>());
        let mut kappa = 0.0;
        for (j, v) in zr.iter().enumerate() {
            kappa -= v * self.anchor_row[j + 1];
        }
        z.extend(zr);
        self.z = z;
        self.kappa = kappa;
    }

    /// Solves `L^T v = rhs` in place (row-oriented).
    fn back_substitute(&self, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for j in (0..n).rev() {
            let row = &self.chol[j * (j + 1) / 2..(j + 1) * (j + 2) / 2];
            let v = rhs[j] / row[j];
            rhs[j] = v;
            for l in 0..j {
                rhs[l] -= row[l] * v;
            }
        }
        rhs
    }

    /// Solves `L v = rhs`.
    fn forward_substitute(&self, mut rhs: Vec<f64>) -> Vec<f64> {
        for j in 0..rhs.len() {
            let row = &self.chol[j * (j + 1) / 2..(j + 1) * (j + 2) / 2];
            let mut s = rhs[j];
            for l in 0..j {
                s -= row[l] * rhs[l];
            }
            rhs[j] = s / row[j];
        }
        rhs
    }

    fn b_entry(&self, kernel: &PotentialKernel, k: usize, i: usize) -> f64 {
        self.anchor_row[k] + self.anchor_row[i] - kernel.eval(self.order[k] - self.order[i])
    }

    fn check_rows(&self) -> Vec<usize> {
        let m = self.order.len();
        let mut rows: Vec<usize> = if m <= CHECK_ROWS {
            (0..m).collect()
        } else {
            (0..CHECK_ROWS).map(|i| i * (m - 1) / (CHECK_ROWS - 1)).collect()
        };
        rows.push(m - 1);
        rows.dedup();
        rows
    }

    fn check_and_refine(&mut self, kernel: &PotentialKernel) -> Result<()> {
        let tol = RESIDUAL_TOL * self.kappa.abs().max(1.0);
        let spot = self
            .check_rows()
            .into_iter()
            .map(|k| self.row_residual(kernel, k).abs())
            .fold(0.0, f64::max);
        if spot <= tol {
            return Ok(());
        }
        for _ in 0..REFINEMENT_STEPS {
            self.refine(kernel);
            self.refinements += 1;
            let full = self.max_residual(kernel);
            if full <= RESIDUAL_TOL * self.kappa.abs().max(1.0) {
                return Ok(());
            }
        }
        Err(LdlaError::Residual {
            residual: self.max_residual(kernel),
            tolerance: RESIDUAL_TOL * self.kappa.abs().max(1.0),
        })
    }

    /// One step of iterative refinement on `B z' = r`.
    fn refine(&mut self, kernel: &PotentialKernel) {
        let m = self.order.len();
        if m <= 1 {
            return;
        }
        let zr: Vec<f64> = self.z[1..].to_vec();
        let mut res = vec![0.0; m - 1];
        for k in 1..m {
            let mut s = self.anchor_row[k];
            for i in 1..m {
                s -= self.b_entry(kernel, k, i) * zr[i - 1];
            }
            res[k - 1] = s;
        }
        let corr = self.back_substitute(self.forward_substitute(res));
        let updated: Vec<f64> = zr.iter().zip(&corr).map(|(a, b)| a + b).collect();
        self.set_solution(updated, m);
    }

    /// `kappa + sum_i z_i a(x_k - x_i)` for the constraint row of point `k`.
    fn row_residual(&self, kernel: &PotentialKernel, k: usize) -> f64 {
        let xk = self.order[k];
        let mut s = self.kappa;
        for (xi, zi) in self.order.iter().zip(&self.z) {
            s += zi * kernel.eval(xk - xi);
        }
        s
    }

    /// Largest constraint-row residual over all points.
    pub fn max_residual(&self, kernel: &PotentialKernel) -> f64 {
        (0..self.order.len())
            .map(|k| self.row_residual(kernel, k).abs())
            .fold(0.0, f64::max)
    }

    /// Points in insertion order.
    pub fn points(&self) -> &[i64] {
        &self.order
    }

    /// `H_A(inf, .)` in insertion order.
    pub fn hm_infinity(&self) -> &[f64] {
        &self.z
    }

    /// `(point, H_A(inf, point))` sorted by point.
    pub fn hm_sorted(&self) -> Vec<(i64, f64)> {
        let mut v: Vec<(i64, f64)> = self.order.iter().copied().zip(self.z.iter().copied()).collect();
        v.sort_unstable_by_key(|p| p.0);
        v
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn staleness_counter(&self) -> u64 {
        self.staleness_counter
    }

    pub fn refinements(&self) -> u64 {
        self.refinements
    }

    /// Forces the periodic constraint check now.
    pub fn check_now(&mut self, kernel: &PotentialKernel) -> Result<()> {
        self.staleness_counter = 0;
        self.check_and_refine(kernel)
    }

    /// `g_A(inf, x) = kappa + sum_i H(inf, i) a(x - i)` without sign checking.
    #[inline]
    pub fn g_infinity_raw(&self, kernel: &PotentialKernel, x: i64) -> f64 {
        let mut s = self.kappa;
        for (xi, zi) in self.order.iter().zip(&self.z) {
            s += zi * kernel.eval(x.wrapping_sub(*xi));
        }
        s
    }

    /// `g_A(inf, x)`; values below `-1e-8` signal a kernel/solve inconsistency.
    pub fn g_infinity(&self, kernel: &PotentialKernel, x: i64) -> Result<f64> {
        let v = self.g_infinity_raw(kernel, x);
        if v < -RESIDUAL_TOL * self.kappa.abs().max(1.0) {
            return Err(LdlaError::NegativeGreen { x, value: v });
        }
        Ok(v.max(0.0))
    }

    /// Solves `lambda + sum_i h_i a(x_k - x_i) = rhs_k` for all `k` together with
    /// `sum_i h_i = rho`. Returns `(lambda, h)` with `h` in insertion order.
    pub fn solve_bordered(&self, rho: f64, rhs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.order.len();
        if rhs.len() != m {
            return Err(LdlaError::Config(format!(
                "right-hand side has {} entries for {m} points",
                rhs.len()
            )));
        }
        if m == 1 {
            return Ok((rhs[0], vec![rho]));
        }
        let b: Vec<f64> = (1..m)
            .map(|k| rhs[0] + rho * self.anchor_row[k] - rhs[k])
            .collect();
        let hr = self.back_substitute(self.forward_substitute(b));
        let mut lambda = rhs[0];
        for (k, hk) in hr.iter().enumerate() {
            lambda -= hk * self.anchor_row[k + 1];
        }
        let mut h = Vec::with_capacity(m);
        h.push(rho - hr.iter().sum::<f64>());
        h.extend(hr);
        Ok((lambda, h))
    }

    /// `g_A(x, x)`, the expected visits to `x` before hitting the set, for `x`
    /// outside the set.
    pub fn green_diagonal(&self, kernel: &PotentialKernel, x: i64) -> Result<f64> {
        if self.order.contains(&x) {
            return Err(LdlaError::PointInAggregate(x));
        }
        let rhs: Vec<f64> = self.order.iter().map(|p| kernel.eval(p - x)).collect();
        let (lambda, h) = self.solve_bordered(1.0, &rhs)?;
        let mut g = lambda;
        for (p, hp) in self.order.iter().zip(&h) {
            g += hp * kernel.eval(x - p);
        }
        Ok(g)
    }

    /// `P_x(T_A < T_x) = 1 / g_A(x, x)`.
    pub fn escape_probability(&self, kernel: &PotentialKernel, x: i64) -> Result<f64> {
        let g = self.green_diagonal(kernel, x)?;
        if !(g > 0.0) {
            return Err(LdlaError::NegativeGreen { x, value: g });
        }
        Ok(1.0 / g)
    }

    pub fn snapshot(&self, kernel: &PotentialKernel) -> HittingSnapshot {
        let sorted = self.hm_sorted();
        HittingSnapshot {
            points: sorted.iter().map(|p| p.0).collect(),
            hm_infinity: sorted.iter().map(|p| p.1).collect(),
            kappa: self.kappa,
            max_residual: self.max_residual(kernel),
        }
    }
}

fn sub(a: i64, b: i64) -> Result<i64> {
    a.checked_sub(b)
        .ok_or_else(|| LdlaError::Overflow(format!("{a} - {b}")))
}

/// `P_x(T_y < T_x) = 1 / (2 a(x - y))`.
pub fn two_point_escape(kernel: &PotentialKernel, d: i64) -> f64 {
    1.0 / (2.0 * kernel.eval(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::StepLaw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel(alpha: f64) -> PotentialKernel {
        PotentialKernel::build(&StepLaw::power_law(alpha, 0.2).unwrap(), 4096, 1e-9).unwrap()
    }

    #[test]
    fn singleton_and_pair() {
        let k = kernel(1.5);
        let s = HittingSystem::solve(&k, &[0]).unwrap();
        assert_eq!(s.hm_infinity(), &[1.0]);
        assert_eq!(s.kappa(), 0.0);
        let p = HittingSystem::solve(&k, &[0, 7]).unwrap();
        assert!((p.hm_infinity()[0] - 0.5).abs() < 1e-12);
        assert!((p.kappa() + k.eval(7) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn lazy_green_closed_form() {
        let law = StepLaw::lazy(0.5).unwrap();
        let k = PotentialKernel::build(&law, 256, 1e-10).unwrap();
        let s = HittingSystem::solve(&k, &[0, 4]).unwrap();
        assert!((s.g_infinity(&k, 6).unwrap() - 4.0).abs() < 1e-7);
        let single = HittingSystem::solve(&k, &[0]).unwrap();
        assert!((single.escape_probability(&k, 5).unwrap() - 0.05).abs() < 1e-9);
    }

    #[test]
    fn incremental_matches_dense_solve() {
        let k = kernel(1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let size = rng.random_range(2..30);
            let mut pts = vec![0i64];
            while pts.len() < size {
                let x = rng.random_range(-500..500);
                if !pts.contains(&x) {
                    pts.push(x);
                }
            }
            let s = HittingSystem::solve(&k, &pts).unwrap();
            // dense LU on the bordered system
            let m = pts.len();
            let mut a = nalgebra::DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut b = nalgebra::DVector::<f64>::zeros(m + 1);
            for r in 0..m {
                a[(r, 0)] = 1.0;
                for c in 0..m {
                    a[(r, c + 1)] = k.eval(pts[r] - pts[c]);
                }
            }
            for c in 0..m {
                a[(m, c + 1)] = 1.0;
            }
            b[m] = 1.0;
            let sol = a.lu().solve(&b).unwrap();
            assert!((sol[0] - s.kappa()).abs() < 1e-8 * s.kappa().abs().max(1.0));
            for i in 0..m {
                assert!((sol[i + 1] - s.hm_infinity()[i]).abs() < 1e-9);
            }
            assert!(s.max_residual(&k) < 1e-9);
        }
    }

    #[test]
    fn extend_restores_state_on_duplicate() {
        let k = kernel(1.5);
        let mut s = HittingSystem::solve(&k, &[0, 3, 9]).unwrap();
        let before = s.hm_infinity().to_vec();
        assert!(s.extend(&k, 3).is_err());
        assert_eq!(s.hm_infinity(), &before[..]);
        assert_eq!(s.len(), 3);
        s.extend(&k, -4).unwrap();
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn staleness_resets() {
        let k = kernel(2.5);
        let mut s = HittingSystem::singleton(0).with_check_every(5);
        for i in 1..=12 {
            s.extend(&k, 3 * i).unwrap();
        }
        assert_eq!(s.staleness_counter(), 2);
    }

    #[test]
    fn bordered_solve_reproduces_harmonic_measure() {
        let k = kernel(1.2);
        let s = HittingSystem::solve(&k, &[0, 2, 11, -5]).unwrap();
        let (lambda, h) = s.solve_bordered(1.0, &[0.0; 4]).unwrap();
        assert!((lambda - s.kappa()).abs() < 1e-12);
        for (a, b) in h.iter().zip(s.hm_infinity()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn escape_probability_of_singleton_is_two_point_formula() {
        let k = kernel(1.5);
        let s = HittingSystem::solve(&k, &[0]).unwrap();
        for d in [1i64, 5, 40] {
            let e = s.escape_probability(&k, d).unwrap();
            assert!((e - two_point_escape(&k, d)).abs() < 1e-12);
        }
    }
}
