//! Brute-force computations that certify the kernel, hitting and gluing stack
//! on small instances. Nothing here uses the kernel quadrature or the hitting
//! solver: everything is derived from the Green function of the walk killed on
//! leaving a finite box, or from direct simulation.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdlaError, Result};
use crate::law::StepLaw;

/// Two-sided bound on a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub method: String,
}

impl Bracket {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Green function of the walk killed on leaving `[-r, r]`.
///
/// `I - P` restricted to the box is a symmetric positive-definite Toeplitz
/// matrix; the first column of its inverse comes from the Durbin recursion and
/// every other entry from the Gohberg-Semencul recurrence
/// `G(i, j) = G(i-1, j-1) + (v_i v_j - u_i u_j) / v_0`.
#[derive(Debug, Clone)]
pub struct BoxGreen {
    r: i64,
    v: Vec<f64>,
}

impl BoxGreen {
    pub fn new(law: &StepLaw, r: u64) -> Result<Self> {
        if r == 0 {
            return Err(LdlaError::Config("box radius must be positive".into()));
        }
        let n = (2 * r + 1) as usize;
        let t0 = 1.0 - law.pmf(0);
        let rr: Vec<f64> = (1..n).map(|k| -law.pmf(k as i64) / t0).collect();
        // Yule-Walker system T_{n-1} y = -rr
        let mut y = vec![0.0; n - 1];
        y[0] = -rr[0];
        let mut beta = 1.0;
        let mut alpha = -rr[0];
        for k in 1..n - 1 {
            beta *= 1.0 - alpha * alpha;
            if beta <= 0.0 {
                return Err(LdlaError::SingularSystem { points: Vec::new() });
            }
            let dot: f64 = (0..k).map(|i| rr[k - 1 - i] * y[i]).sum();
            alpha = -(rr[k] + dot) / beta;
            for i in 0..k.div_ceil(2) {
                let j = k - 1 - i;
                let (a, b) = (y[i], y[j]);
                if i == j {
                    y[i] = a * (1.0 + alpha);
                } else {
                    y[i] = a + alpha * b;
                    y[j] = b + alpha * a;
                }
            }
            y[k] = alpha;
        }
        let denom = 1.0 + rr.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        if denom <= 0.0 {
            return Err(LdlaError::SingularSystem { points: Vec::new() });
        }
        let gamma = 1.0 / denom;
        let mut v = Vec::with_capacity(n);
        v.push(gamma / t0);
        v.extend(y.iter().map(|yi| gamma * yi / t0));
        Ok(BoxGreen { r: r as i64, v })
    }

    pub fn radius(&self) -> u64 {
        self.r as u64
    }

    fn term(&self, i: usize, j: usize) -> f64 {
        let n = self.v.len();
        let u = |m: usize| if m == 0 { 0.0 } else { self.v[n - m] };
        (self.v[i] * self.v[j] - u(i) * u(j)) / self.v[0]
    }

    /// Expected visits to `y` before leaving the box, starting at `x`.
    pub fn entry(&self, x: i64, y: i64) -> f64 {
        let (i, j) = ((x + self.r) as usize, (y + self.r) as usize);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        (0..=i).map(|k| self.term(i - k, j - k)).sum()
    }

    /// Green matrix restricted to `points`.
    pub fn block(&self, points: &[i64]) -> DMatrix<f64> {
        let m = points.len();
        let mut g = DMatrix::zeros(m, m);
        for p in 0..m {
            for q in p..m {
                let v = self.entry(points[p], points[q]);
                g[(p, q)] = v;
                g[(q, p)] = v;
            }
        }
        g
    }

    fn inside(&self, x: i64) -> bool {
        2 * x.abs() <= self.r
    }
}

/// Bracket for `P_x(T_A < T_x)` (first times after time 0) from the walk on
/// `[-r, r]`: mass leaving the box counts as hitting `A` for the upper bound
/// and as returning to `x` for the lower bound.
pub fn bracket_hitting_truncated(
    law: &StepLaw,
    set: &[i64],
    x: i64,
    r: u64,
) -> Result<Bracket> {
    let green = BoxGreen::new(law, r)?;
    bracket_with(&green, set, x)
}

/// Same bracket with a precomputed box Green function.
pub fn bracket_with(green: &BoxGreen, set: &[i64], x: i64) -> Result<Bracket> {
    if set.is_empty() || set.contains(&x) {
        return Err(LdlaError::Config("need a nonempty set not containing x".into()));
    }
    if !green.inside(x) || set.iter().any(|&p| !green.inside(p)) {
        return Err(LdlaError::Config(format!(
            "points must lie in [-r/2, r/2] with r = {}",
            green.radius()
        )));
    }
    let mut points = vec![x];
    points.extend_from_slice(set);
    let g = green.block(&points);
    // G_B^{-1} = I - Q with Q the first-return kernel to B before leaving the box
    let inv = g
        .try_inverse()
        .ok_or_else(|| LdlaError::SingularSystem { points: points.clone() })?;
    let hi = inv[(0, 0)];
    let lo = -(1..points.len()).map(|k| inv[(0, k)]).sum::<f64>();
    Ok(Bracket {
        lo: lo.clamp(0.0, 1.0),
        hi: hi.clamp(0.0, 1.0).max(lo.clamp(0.0, 1.0)),
        method: format!("box Green function, r = {}", green.radius()),
    })
}

/// Escape from `x` and harmonic measure from infinity of `x` within `B = {x} + A`,
/// in the limit of an infinite box with the boundary-layer terms of `green` kept.
///
/// With `G_B = K + c 11^T` the inverse tends to the projected inverse
/// `K^{-1} - K^{-1}11^T K^{-1} / (1^T K^{-1} 1)` as `c` grows; its `(x, x)` entry is
/// `P_x(T_A < T_x)` and the normalized `K^{-1} 1` is the harmonic measure.
fn limit_escape_and_harmonic(green: &BoxGreen, points: &[i64]) -> Result<(f64, f64)> {
    let mut k = green.block(points);
    let shift = k[(0, 0)];
    k.add_scalar_mut(-shift);
    let inv = k
        .try_inverse()
        .ok_or_else(|| LdlaError::SingularSystem { points: points.to_vec() })?;
    let m = points.len();
    let row: Vec<f64> = (0..m).map(|i| (0..m).map(|j| inv[(i, j)]).sum()).collect();
    let total: f64 = row.iter().sum();
    let harmonic = row[0] / total;
    let escape = inv[(0, 0)] - row[0] * row[0] / total;
    Ok((escape, harmonic))
}

#[derive(Debug, Clone, Serialize)]
pub struct GluingEntry {
    pub x: i64,
    pub anchor: i64,
    pub mu: f64,
    /// Change between the two box radii.
    pub error: f64,
}

/// Gluing-measure table restricted to a window around the set.
#[derive(Debug, Clone, Serialize)]
pub struct GluingTable {
    pub entries: Vec<GluingEntry>,
    pub window: (i64, i64),
    pub window_mass: f64,
    pub max_error: f64,
    pub box_radius: u64,
}

impl GluingTable {
    /// Mass of each site `x`.
    pub fn by_site(&self) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.x).or_insert(0.0) += e.mu;
        }
        out
    }

    pub fn get(&self, x: i64, anchor: i64) -> Option<&GluingEntry> {
        self.entries.iter().find(|e| e.x == x && e.anchor == anchor)
    }
}

/// Gluing measure `mu(x, a) = p(a - x) H_{A+x}(inf, x) / P_x(T_A < T_x)` for all
/// `x` within `window_radius` of the hull, from box Green functions at radii
/// `r` and `2r`. Fails when the two radii disagree by more than `tol`.
pub fn enumerate_gluing_small(
    law: &StepLaw,
    set: &[i64],
    window_radius: u64,
    tol: f64,
) -> Result<GluingTable> {
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let (&lo, &hi) = match (sorted.first(), sorted.last()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(LdlaError::Config("empty set".into())),
    };
    if hi - lo > 200 {
        return Err(LdlaError::Config("enumeration needs diameter at most 200".into()));
    }
    let center = lo + (hi - lo) / 2;
    let shifted: Vec<i64> = sorted.iter().map(|p| p - center).collect();
    let w = window_radius as i64;
    let reach = (hi - lo) as u64 + 2 * window_radius;
    let r0 = (64 * reach).next_power_of_two().max(1 << 13);
    let coarse = BoxGreen::new(law, r0)?;
    let fine = BoxGreen::new(law, 2 * r0)?;
    let mut entries = Vec::new();
    let mut max_error: f64 = 0.0;
    let mut window_mass = 0.0;
    for x in (lo - w)..=(hi + w) {
        if sorted.binary_search(&x).is_ok() {
            continue;
        }
        let mut points = vec![x - center];
        points.extend_from_slice(&shifted);
        let (esc_c, harm_c) = limit_escape_and_harmonic(&coarse, &points)?;
        let (esc_f, harm_f) = limit_escape_and_harmonic(&fine, &points)?;
        let g_c = harm_c / esc_c;
        let g_f = harm_f / esc_f;
        for &a in &sorted {
            let p = law.pmf(a - x);
            if p == 0.0 {
                continue;
            }
            let mu = p * g_f;
            let error = p * (g_f - g_c).abs();
            max_error = max_error.max(error);
            window_mass += mu;
            entries.push(GluingEntry { x, anchor: a, mu, error });
        }
    }
    if max_error > tol {
        return Err(LdlaError::Feasibility(format!(
            "enumeration error {max_error:.3e} exceeds {tol:.3e} at box radius {}",
            2 * r0
        )));
    }
    Ok(GluingTable {
        entries,
        window: (lo - w, hi + w),
        window_mass,
        max_error,
        box_radius: 2 * r0,
    })
}

/// One step of a maximal coupling of the walks at `x` and `y`; `step` is the
/// already drawn increment of the first walk.
fn maximal_coupling_step<R: Rng + ?Sized>(law: &StepLaw, x: i64, y: i64, step: i64, rng: &mut R) -> (i64, i64) {
    let nx = x.saturating_add(step);
    if rng.random::<f64>() * law.pmf(step) <= law.pmf(nx.saturating_sub(y)) {
        return (nx, nx);
    }
    loop {
        let ny = y.saturating_add(law.sample_step(rng));
        let own = law.pmf(ny.saturating_sub(y));
        if rng.random::<f64>() * own > law.pmf(ny.saturating_sub(x)) {
            return (nx, ny);
        }
    }
}

/// Monte Carlo estimate of `a(n) = sum_t (P_0(R_t = 0) - P_n(R_t = 0))` truncated at `t_max`.
///
/// The walks from `0` and from `n` share their randomness: they move as mirror
/// images while their one-step laws cannot overlap, are maximally coupled
/// otherwise, and move together once they meet, after which both counts agree.
/// Each occupation indicator is replaced by its conditional expectation given
/// the previous position, so a step contributes `p(-X_{t-1}) - p(-Y_{t-1})`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Bound on the neglected terms beyond `t_max` (finite-variance laws only).
    pub truncation_bound: Option<f64>,
}

pub fn mc_potential_kernel<R: Rng + ?Sized>(
    law: &StepLaw,
    n: i64,
    t_max: u64,
    reps: u64,
    rng: &mut R,
) -> KernelEstimate {
    if n == 0 {
        return KernelEstimate { estimate: 0.0, stderr: 0.0, truncation_bound: Some(0.0) };
    }
    let mirror_beyond = law.support_radius().map(|r| 2 * r);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let (mut x, mut y) = (0i64, n);
        let mut acc = 1.0;
        for _ in 0..t_max {
            if x == y {
                break;
            }
            acc += law.pmf(-x) - law.pmf(-y);
            let step = law.sample_step(rng);
            if mirror_beyond.is_some_and(|m| x.abs_diff(y) > m) {
                x = x.saturating_add(step);
                y = y.saturating_sub(step);
            } else {
                (x, y) = maximal_coupling_step(law, x, y, step, rng);
            }
        }
        sum += acc;
        sum_sq += acc * acc;
    }
    let reps_f = reps.max(1) as f64;
    let mean = sum / reps_f;
    let var = (sum_sq / reps_f - mean * mean).max(0.0);
    // local limit theorem: sum_{t > T} (p_t(0) - p_t(n)) <= n^2 / (sigma^3 sqrt(2 pi T))
    let truncation_bound = law.sigma_sq().map(|s2| {
        (n as f64).powi(2) / (s2.powf(1.5) * (2.0 * std::f64::consts::PI * t_max as f64).sqrt())
    });
    KernelEstimate {
        estimate: mean,
        stderr: (var / (reps_f - 1.0).max(1.0)).sqrt(),
        truncation_bound,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HalfLineEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Episodes stopped at the step cap (counted as returns).
    pub capped: u64,
}

pub const HALF_LINE_STEP_CAP: u64 = 10_000_000;

/// Monte Carlo estimate of `P_x(T_{(-inf, 0]} < T_x)`.
pub fn mc_half_line<R: Rng + ?Sized>(
    law: &StepLaw,
    x: i64,
    reps: u64,
    rng: &mut R,
) -> Result<HalfLineEstimate> {
    if x < 1 {
        return Err(LdlaError::Config("half-line start must be at least 1".into()));
    }
    if law.sigma_sq().is_none() {
        return Err(LdlaError::Config("half-line estimate needs finite variance".into()));
    }
    // a nearest-neighbour walk above x must pass through x before reaching the half-line
    let skip_free = law.support_radius() == Some(1);
    let mut hits = 0u64;
    let mut capped = 0u64;
    for _ in 0..reps {
        let mut pos = x;
        let mut steps = 0u64;
        loop {
            let k = law.sample_step(&mut *rng);
            pos += k;
            steps += 1;
            if pos <= 0 {
                hits += 1;
                break;
            }
            if pos == x || (skip_free && pos > x) {
                break;
            }
            if steps >= HALF_LINE_STEP_CAP {
                capped += 1;
                break;
            }
        }
    }
    let p = hits as f64 / reps as f64;
    Ok(HalfLineEstimate {
        estimate: p,
        stderr: (p * (1.0 - p) / reps as f64).sqrt(),
        capped,
    })
}

/// Total-variation distance `1/2 sum |p - q|` over a common indexing.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions need a common support");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total-variation distance between distributions keyed by site.
pub fn tv_distance_map(p: &BTreeMap<i64, f64>, q: &BTreeMap<i64, f64>) -> f64 {
    let keys: std::collections::BTreeSet<i64> = p.keys().chain(q.keys()).copied().collect();
    let a: Vec<f64> = keys.iter().map(|k| p.get(k).copied().unwrap_or(0.0)).collect();
    let b: Vec<f64> = keys.iter().map(|k| q.get(k).copied().unwrap_or(0.0)).collect();
    tv_distance(&a, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ValidationCheck {
    /// Passes when `|value - reference| <= tolerance`.
    pub fn near(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        ValidationCheck {
            name: name.into(),
            value,
            reference,
            tolerance,
            pass: (value - reference).abs() <= tolerance,
        }
    }

    /// Passes when `value` lies in `[lo, hi]`; reported as the midpoint and half-width.
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        ValidationCheck {
            name: name.into(),
            value,
            reference: 0.5 * (lo + hi),
            tolerance: 0.5 * (hi - lo),
            pass: lo <= value && value <= hi,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn push(&mut self, check: ValidationCheck) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn dense_green(law: &StepLaw, r: i64) -> DMatrix<f64> {
        let n = (2 * r + 1) as usize;
        let t = DMatrix::from_fn(n, n, |i, j| {
            let d = i as i64 - j as i64;
            (if d == 0 { 1.0 } else { 0.0 }) - law.pmf(d)
        });
        t.try_inverse().unwrap()
    }

    #[test]
    fn box_green_matches_dense_inverse() {
        for law in [StepLaw::power_law(1.5, 0.2).unwrap(), StepLaw::lazy(0.5).unwrap()] {
            let r = 25;
            let dense = dense_green(&law, r);
            let green = BoxGreen::new(&law, r as u64).unwrap();
            for (x, y) in [(-25, -25), (0, 0), (3, -7), (25, 10), (-4, 25)] {
                let d = dense[((x + r) as usize, (y + r) as usize)];
                assert!((green.entry(x, y) - d).abs() < 1e-10 * d.abs().max(1.0), "{x},{y}");
            }
        }
    }

    #[test]
    fn lazy_bracket_contains_closed_form() {
        let law = StepLaw::lazy(0.5).unwrap();
        let b = bracket_hitting_truncated(&law, &[0], 5, 10_000).unwrap();
        assert!(b.contains(0.05), "{b:?}");
        assert!(b.width() < 3e-5);
        let narrow = bracket_hitting_truncated(&law, &[0], 5, 20_000).unwrap();
        assert!(narrow.width() < b.width());
    }

    #[test]
    fn bracket_width_shrinks_with_radius() {
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        let a = bracket_hitting_truncated(&law, &[0], 10, 512).unwrap();
        let b = bracket_hitting_truncated(&law, &[0], 10, 2048).unwrap();
        assert!(b.width() < a.width());
        assert!(b.lo >= a.lo - 1e-12 && b.hi <= a.hi + 1e-12);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
    }

    #[test]
    fn kernel_estimate_zero_and_lazy() {
        let law = StepLaw::lazy(0.5).unwrap();
        let mut rng = rng_from_seed(3);
        assert_eq!(mc_potential_kernel(&law, 0, 100, 10, &mut rng).estimate, 0.0);
        let est = mc_potential_kernel(&law, 3, 20_000, 400, &mut rng);
        let bound = est.truncation_bound.unwrap();
        assert!((est.estimate - 6.0).abs() <= 3.0 * est.stderr + bound, "{est:?}");
        assert!(est.stderr < 1.0, "{est:?}");
    }

    #[test]
    fn coupled_kernel_estimate_tracks_heavy_tails() {
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        let exact = crate::kernel::compute_a(&law, 10, 1e-10).unwrap();
        let est = mc_potential_kernel(&law, 10, 100_000, 400, &mut rng_from_seed(8));
        assert!((est.estimate - exact).abs() <= 4.0 * est.stderr + 0.05 * exact, "{est:?} vs {exact}");
    }

    #[test]
    fn half_line_is_a_probability() {
        let law = StepLaw::lazy(0.5).unwrap();
        let mut rng = rng_from_seed(5);
        let est = mc_half_line(&law, 1, 2000, &mut rng).unwrap();
        assert!(est.estimate > 0.0 && est.estimate < 1.0);
        assert!(mc_half_line(&StepLaw::power_law(1.5, 0.2).unwrap(), 3, 10, &mut rng).is_err());
    }

    #[test]
    fn reflected_set_gives_reflected_table() {
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        let t = enumerate_gluing_small(&law, &[0, 1, 3], 10, 1e-3).unwrap();
        let m = enumerate_gluing_small(&law, &[0, -1, -3], 10, 1e-3).unwrap();
        for e in &t.entries {
            let r = m.get(-e.x, -e.anchor).unwrap();
            assert!((e.mu - r.mu).abs() <= e.error + r.error + 1e-12);
        }
    }

    #[test]
    fn oracle_is_independent_of_the_primary_stack() {
        let src = include_str!("oracle.rs");
        let code = src.split("#[cfg(test)]").next().unwrap();
        for forbidden in ["crate::kernel", "crate::hitting", "crate::gluing"] {
            assert!(!code.contains(forbidden), "oracle imports {forbidden}");
        }
    }
}
