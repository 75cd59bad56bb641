//! DLA on the axis of Z^3: the walk induced on a line by the simple random walk
//! on Z^3, escape probabilities, capacities and the aggregation itself.

use std::io::Write;

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LdlaError, Result};
use crate::rng::rng_from_seed;

/// Half-length of the exact planar first-return table (return times up to `2 * 2^13`).
pub const RETURN_TABLE_HALF: usize = 1 << 13;
/// `sup_{d >= 1} P_d(hit 0)` times `d` for the induced walk: `d G(d) / G(0) <= G(1) / G(0)`.
pub const HIT_BOUND_CONSTANT: f64 = 0.35;
pub const DEFAULT_EPS_ESCAPE: f64 = 1e-4;
/// Planar excursions longer than this use the Gaussian displacement.
const EXACT_DISPLACEMENT_LIMIT: f64 = (1u64 << 20) as f64;
const ESCAPE_WALK_CAP: u64 = 10_000_000;

/// Step law of the axis walk: with probability 1/3 the 3D walk moves along the
/// axis; otherwise it makes a planar excursion of length `T` (first return of
/// the planar simple walk) during which a `NegBin(T - 1, 2/3)` number of axis
/// moves accumulate.
#[derive(Debug, Clone)]
pub struct InducedWalk {
    /// `P(T <= 2(k + 1))`.
    cdf: Vec<f64>,
    /// `P(T > 2 * RETURN_TABLE_HALF)`.
    tail_mass: f64,
    /// `P(T > t) = pi / (ln t + tail_const)` beyond the table.
    tail_const: f64,
}

impl Default for InducedWalk {
    fn default() -> Self {
        Self::new()
    }
}

impl InducedWalk {
    pub fn new() -> Self {
        let k = RETURN_TABLE_HALF;
        // u_n = P(S_{2n} = 0) = (C(2n, n) / 4^n)^2
        let mut u = vec![1.0; k + 1];
        let mut c = 1.0;
        for n in 1..=k {
            c *= (2 * n - 1) as f64 / (2 * n) as f64;
            u[n] = c * c;
        }
        let mut f = vec![0.0; k + 1];
        for n in 1..=k {
            let conv: f64 = (1..n).map(|j| f[j] * u[n - j]).sum();
            f[n] = u[n] - conv;
        }
        let mut cdf = Vec::with_capacity(k);
        let mut acc = 0.0;
        for &fn_ in &f[1..] {
            acc += fn_;
            cdf.push(acc);
        }
        let tail_mass = 1.0 - acc;
        let t_end = (2 * k) as f64;
        let tail_const = std::f64::consts::PI / tail_mass - t_end.ln();
        InducedWalk { cdf, tail_mass, tail_const }
    }

    /// `P(T > t)` for the planar first-return time.
    pub fn return_time_tail(&self, t: u64) -> f64 {
        let half = (t / 2) as usize;
        if half == 0 {
            1.0
        } else if half <= self.cdf.len() {
            1.0 - self.cdf[half - 1]
        } else {
            std::f64::consts::PI / ((t as f64).ln() + self.tail_const)
        }
    }

    /// Natural log of a planar first-return time.
    fn sample_ln_return_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w: f64 = rng.random();
        if w >= 1.0 - self.tail_mass {
            let s = (1.0 - w).max(f64::MIN_POSITIVE);
            std::f64::consts::PI / s - self.tail_const
        } else {
            let k = self.cdf.partition_point(|&c| c <= w);
            ((2 * (k + 1)) as f64).ln()
        }
    }

    /// Axis displacement accumulated over a planar excursion of length `exp(ln_t)`.
    fn displacement<R: Rng + ?Sized>(&self, ln_t: f64, rng: &mut R) -> BigInt {
        let t = ln_t.exp();
        if t <= EXACT_DISPLACEMENT_LIMIT {
            let r = t.round() - 1.0;
            let lambda = if r > 0.0 {
                Gamma::new(r, 0.5).expect("valid gamma").sample(rng)
            } else {
                0.0
            };
            let m = if lambda > 0.0 {
                Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
            } else {
                0
            };
            let right = Binomial::new(m, 0.5).expect("valid binomial").sample(rng);
            return BigInt::from(2 * right as i64 - m as i64);
        }
        // displacement is N(0, (T - 1) / 2) to relative accuracy T^{-1/2}
        let z: f64 = rng.sample(StandardNormal);
        let ln_sd = 0.5 * (ln_t + (1.0 - (-ln_t).exp()).ln() - std::f64::consts::LN_2);
        if ln_sd < 40.0 {
            return BigInt::from((ln_sd.exp() * z).round() as i64);
        }
        big_from_ln(ln_sd + z.abs().ln(), z < 0.0)
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> BigInt {
        let u: f64 = rng.random();
        if u < 1.0 / 6.0 {
            return BigInt::one();
        }
        if u < 1.0 / 3.0 {
            return -BigInt::one();
        }
        let ln_t = self.sample_ln_return_time(rng);
        self.displacement(ln_t, rng)
    }

    /// Monte Carlo estimate of `p(k)` for `|k| <= radius`, with standard errors.
    pub fn estimate_pmf<R: Rng + ?Sized>(
        &self,
        radius: u64,
        samples: u64,
        rng: &mut R,
    ) -> Vec<(i64, f64, f64)> {
        let r = radius as i64;
        let mut counts = vec![0u64; (2 * r + 1) as usize];
        for _ in 0..samples {
            if let Some(k) = self.sample_step(rng).to_i64() {
                if k.abs() <= r {
                    counts[(k + r) as usize] += 1;
                }
            }
        }
        let n = samples as f64;
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let p = c as f64 / n;
                (i as i64 - r, p, (p * (1.0 - p) / n).sqrt())
            })
            .collect()
    }
}

/// `sign * exp(ln_mag)` as a big integer.
fn big_from_ln(ln_mag: f64, negative: bool) -> BigInt {
    let e2 = ln_mag / std::f64::consts::LN_2;
    let whole = e2.floor();
    let mant = (2f64.powf(e2 - whole) * (1u64 << 52) as f64) as u64;
    let mut v = BigInt::from(mant);
    let shift = whole as i64 - 52;
    if shift >= 0 {
        v <<= shift as usize;
    } else {
        v >>= (-shift) as usize;
    }
    if negative {
        -v
    } else {
        v
    }
}

/// Natural log of `|v|` for `v != 0`.
pub fn ln_big(v: &BigInt) -> f64 {
    let bits = v.bits();
    if bits <= 1000 {
        return v.abs().to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    let top = (v.abs() >> shift as usize).to_f64().expect("finite");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Finite subset of the axis with arbitrary-precision coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Aggregate3 {
    sorted: Vec<BigInt>,
    order: Vec<BigInt>,
}

impl Aggregate3 {
    pub fn new() -> Self {
        Aggregate3 { sorted: vec![BigInt::zero()], order: vec![BigInt::zero()] }
    }

    pub fn from_points<I: IntoIterator<Item = BigInt>>(points: I) -> Result<Self> {
        let mut agg = Aggregate3::default();
        for p in points {
            agg.insert(p)?;
        }
        if agg.sorted.is_empty() {
            return Err(LdlaError::Config("empty aggregate".into()));
        }
        Ok(agg)
    }

    pub fn points(&self) -> &[BigInt] {
        &self.sorted
    }

    pub fn order(&self) -> &[BigInt] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> &BigInt {
        &self.sorted[0]
    }

    pub fn max(&self) -> &BigInt {
        &self.sorted[self.sorted.len() - 1]
    }

    pub fn diameter(&self) -> BigInt {
        self.max() - self.min()
    }

    pub fn contains(&self, x: &BigInt) -> bool {
        self.sorted.binary_search(x).is_ok()
    }

    /// Distance from `x` to the nearest point.
    pub fn distance(&self, x: &BigInt) -> BigInt {
        let i = self.sorted.partition_point(|p| p < x);
        let right = self.sorted.get(i).map(|p| p - x);
        let left = i.checked_sub(1).map(|j| x - &self.sorted[j]);
        match (left, right) {
            (Some(l), Some(r)) => l.min(r),
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => BigInt::zero(),
        }
    }

    pub fn insert(&mut self, x: BigInt) -> Result<()> {
        match self.sorted.binary_search(&x) {
            Ok(_) => Err(LdlaError::Config(format!("point {x} is already in the aggregate"))),
            Err(i) => {
                self.sorted.insert(i, x.clone());
                self.order.push(x);
                Ok(())
            }
        }
    }

    /// Whether every site of `[-w, w]` is present.
    pub fn covers(&self, w: u64) -> bool {
        let lo = BigInt::from(-(w as i64));
        let start = self.sorted.partition_point(|p| p < &lo);
        let needed = 2 * w as usize + 1;
        self.sorted.len() >= start + needed
            && self.sorted[start + needed - 1] == BigInt::from(w as i64)
    }
}

/// One gluing event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glue3 {
    pub x: BigInt,
    pub anchor: BigInt,
    pub proposals: u64,
}

/// Runs the axis walk from `start` until it lands in `set` (`Some(false)`) or is
/// far enough that the chance of ever returning is below `eps` (`Some(true)`).
/// `None` when the step cap is exhausted.
fn escapes<R: Rng + ?Sized>(
    walk: &InducedWalk,
    set: &Aggregate3,
    start: BigInt,
    eps: f64,
    rng: &mut R,
) -> Option<bool> {
    // P_x(T_A < inf) <= |A| C / d(x, A)
    let threshold = BigInt::from((set.len() as f64 * HIT_BOUND_CONSTANT / eps).ceil() as u64);
    let mut pos = start;
    for _ in 0..ESCAPE_WALK_CAP {
        if set.distance(&pos) >= threshold {
            return Some(true);
        }
        pos += walk.sample_step(rng);
        if set.contains(&pos) {
            return Some(false);
        }
    }
    None
}

/// Draws a gluing pair from `mu(x, a) ~ p(a - x) E_A(x)` by reversing time:
/// the particle leaves a uniform anchor with one step and must then escape.
pub fn sample_glue_reversed<R: Rng + ?Sized>(
    walk: &InducedWalk,
    set: &Aggregate3,
    eps: f64,
    max_proposals: u64,
    rng: &mut R,
) -> Result<Glue3> {
    for proposals in 1..=max_proposals {
        let anchor = &set.points()[rng.random_range(0..set.len())];
        let x = anchor + walk.sample_step(rng);
        if set.contains(&x) {
            continue;
        }
        match escapes(walk, set, x.clone(), eps, rng) {
            Some(true) => return Ok(Glue3 { x, anchor: anchor.clone(), proposals }),
            Some(false) => {}
            None => {
                return Err(LdlaError::SamplerAborted {
                    proposals,
                    reason: "escape walk exceeded its step cap".into(),
                })
            }
        }
    }
    Err(LdlaError::SamplerAborted {
        proposals: max_proposals,
        reason: "no escaping proposal".into(),
    })
}

/// Direct surrogate: an axis walk launched `launch_factor * diam` beyond a
/// uniformly chosen extreme, stopped when it lands in the set (gluing) or
/// leaves to `escape_factor` times the launch distance or exceeds `step_cap`
/// (rejection, which conditions on hitting).
pub fn simulate_particle3<R: Rng + ?Sized>(
    walk: &InducedWalk,
    set: &Aggregate3,
    launch_factor: f64,
    escape_factor: f64,
    step_cap: u64,
    rng: &mut R,
) -> Option<Glue3> {
    let diam = set.diameter().to_f64().unwrap_or(f64::MAX).max(1.0);
    let launch = BigInt::from((launch_factor * diam).ceil() as u64);
    let escape = BigInt::from((escape_factor * launch_factor * diam).ceil() as u64);
    let mut pos = if rng.random::<bool>() { set.max() + &launch } else { set.min() - &launch };
    let (lo, hi) = (set.min() - &escape, set.max() + &escape);
    for _ in 0..step_cap {
        let next = &pos + walk.sample_step(rng);
        if set.contains(&next) {
            return Some(Glue3 { x: pos, anchor: next, proposals: 1 });
        }
        pos = next;
        if pos < lo || pos > hi {
            return None;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Z3Sampler {
    /// Time-reversed exact sampler (up to `eps_escape`).
    Reversed,
    /// Axis-launched direct surrogate with rejection.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Z3Config {
    pub n_particles: u64,
    pub seed: u64,
    pub sampler: Z3Sampler,
    pub eps_escape: f64,
    pub launch_factor: f64,
    pub escape_factor: f64,
    pub step_cap: u64,
    /// Direct sampling stops once the diameter exceeds this.
    pub feasibility_diameter: u64,
    /// Proposals per particle before giving up.
    pub max_proposals: u64,
}

impl Z3Config {
    pub fn new(n_particles: u64, seed: u64) -> Self {
        Z3Config {
            n_particles,
            seed,
            sampler: Z3Sampler::Reversed,
            eps_escape: DEFAULT_EPS_ESCAPE,
            launch_factor: 4.0,
            escape_factor: 10.0,
            step_cap: 1_000_000,
            feasibility_diameter: 10_000_000,
            max_proposals: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Z3Record {
    pub n: u64,
    /// Decimal strings throughout.
    pub d_n: String,
    pub delta_d: String,
    pub min_pt: String,
    pub max_pt: String,
    pub added_x: String,
    pub anchor_a: String,
    pub proposals: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Z3Trajectory {
    pub seed: u64,
    pub records: Vec<Z3Record>,
    /// Why the run stopped before `n_particles`, if it did.
    pub stop_reason: Option<String>,
}

impl Z3Trajectory {
    pub fn diameters(&self) -> Vec<BigInt> {
        std::iter::once(BigInt::zero())
            .chain(self.records.iter().map(|r| r.d_n.parse().expect("decimal diameter")))
            .collect()
    }

    /// `ln D_n` for `n >= 1` (`-inf` never occurs since `D_1 >= 1`).
    pub fn log_diameters(&self) -> Vec<f64> {
        self.diameters().iter().skip(1).map(ln_big).collect()
    }

    /// The aggregate after the first `n` particles.
    pub fn aggregate_at(&self, n: usize) -> Aggregate3 {
        let mut agg = Aggregate3::new();
        for r in self.records.iter().take(n) {
            agg.insert(r.added_x.parse().expect("decimal position")).expect("distinct points");
        }
        agg
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "D_n", "delta_D", "min_pt", "max_pt", "added_x", "anchor_a"])?;
        for r in &self.records {
            w.write_record([
                r.n.to_string(),
                r.d_n.clone(),
                r.delta_d.clone(),
                r.min_pt.clone(),
                r.max_pt.clone(),
                r.added_x.clone(),
                r.anchor_a.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Whether every site of `[-w, w]` belongs to the aggregate after `n` particles.
pub fn fill_check(trajectory: &Z3Trajectory, w: u64, n: usize) -> bool {
    trajectory.aggregate_at(n).covers(w)
}

/// Runs the axis DLA; stops early (recording why) at the feasibility bound.
pub fn run_z3_dla(config: &Z3Config) -> Result<Z3Trajectory> {
    if !(config.eps_escape > 0.0 && config.eps_escape < 1.0) {
        return Err(LdlaError::Config("eps_escape must lie in (0, 1)".into()));
    }
    let walk = InducedWalk::new();
    let mut rng = rng_from_seed(config.seed);
    let mut agg = Aggregate3::new();
    let mut traj = Z3Trajectory { seed: config.seed, records: Vec::new(), stop_reason: None };
    let bound = BigInt::from(config.feasibility_diameter);
    for n in 1..=config.n_particles {
        let before = agg.diameter();
        let glue = match config.sampler {
            Z3Sampler::Reversed => {
                match sample_glue_reversed(&walk, &agg, config.eps_escape, config.max_proposals, &mut rng) {
                    Ok(g) => g,
                    Err(e) => {
                        traj.stop_reason = Some(e.to_string());
                        break;
                    }
                }
            }
            Z3Sampler::Direct => {
                if before > bound {
                    traj.stop_reason =
                        Some(format!("diameter {before} beyond the direct-simulation bound"));
                    break;
                }
                let mut found = None;
                for attempt in 1..=config.max_proposals {
                    if let Some(mut g) = simulate_particle3(
                        &walk,
                        &agg,
                        config.launch_factor,
                        config.escape_factor,
                        config.step_cap,
                        &mut rng,
                    ) {
                        g.proposals = attempt;
                        found = Some(g);
                        break;
                    }
                }
                match found {
                    Some(g) => g,
                    None => {
                        traj.stop_reason = Some(format!(
                            "acceptance below {:.0e} at diameter {before}",
                            1.0 / config.max_proposals as f64
                        ));
                        break;
                    }
                }
            }
        };
        agg.insert(glue.x.clone())?;
        let d = agg.diameter();
        traj.records.push(Z3Record {
            n,
            d_n: d.to_string(),
            delta_d: (&d - &before).to_string(),
            min_pt: agg.min().to_string(),
            max_pt: agg.max().to_string(),
            added_x: glue.x.to_string(),
            anchor_a: glue.anchor.to_string(),
            proposals: glue.proposals,
        });
    }
    Ok(traj)
}

/// Monte Carlo escape probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub x: String,
    /// Extrapolated value `2 E(2r) - E(r)`.
    pub estimate: f64,
    pub stderr: f64,
    pub escape_radius: u64,
    /// Fraction reaching distance `r` and `2r` before hitting the set.
    pub at_radius: f64,
    pub at_double_radius: f64,
    pub extrapolated: bool,
}

/// `E_A(x) = P_x(T_A = inf)` (times after 0) from walks stopped on returning to
/// `A` or on reaching distance `r` and `2r`; the two radii are combined assuming
/// a `1/r` bias.
pub fn estimate_escape<R: Rng + ?Sized>(
    walk: &InducedWalk,
    set: &Aggregate3,
    x: &BigInt,
    reps: u64,
    escape_radius: u64,
    rng: &mut R,
) -> Result<EscapeEstimate> {
    if reps < 1000 {
        return Err(LdlaError::Config("escape estimates need at least 1e3 replicas".into()));
    }
    let near = BigInt::from(escape_radius);
    let far = BigInt::from(2 * escape_radius);
    let (mut s1, mut s2, mut sum, mut sum_sq) = (0u64, 0u64, 0.0, 0.0);
    for _ in 0..reps {
        let mut pos = x.clone();
        let mut reached_near = false;
        let mut reached_far = false;
        for _ in 0..ESCAPE_WALK_CAP {
            pos += walk.sample_step(rng);
            if set.contains(&pos) {
                break;
            }
            let d = set.distance(&pos);
            if d >= near {
                reached_near = true;
            }
            if d >= far {
                reached_far = true;
                break;
            }
        }
        s1 += reached_near as u64;
        s2 += reached_far as u64;
        let v = 2.0 * reached_far as u8 as f64 - reached_near as u8 as f64;
        sum += v;
        sum_sq += v * v;
    }
    let n = reps as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(EscapeEstimate {
        x: x.to_string(),
        estimate: mean,
        stderr: (var / (n - 1.0)).sqrt(),
        escape_radius,
        at_radius: s1 as f64 / n,
        at_double_radius: s2 as f64 / n,
        extrapolated: true,
    })
}

/// Capacity estimate `sum_{a in A} E_A(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub capacity: f64,
    pub stderr: f64,
    pub escapes: Vec<EscapeEstimate>,
}

pub fn estimate_capacity<R: Rng + ?Sized>(
    walk: &InducedWalk,
    set: &Aggregate3,
    reps: u64,
    escape_radius: u64,
    rng: &mut R,
) -> Result<CapacityEstimate> {
    let escapes = set
        .points()
        .iter()
        .map(|a| estimate_escape(walk, set, a, reps, escape_radius, rng))
        .collect::<Result<Vec<_>>>()?;
    let capacity = escapes.iter().map(|e| e.estimate).sum();
    let stderr = escapes.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
    Ok(CapacityEstimate { capacity, stderr, escapes })
}

/// Escape/capacity report for export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeReport {
    pub points: Vec<String>,
    pub capacity: CapacityEstimate,
}

impl EscapeReport {
    pub fn new(set: &Aggregate3, capacity: CapacityEstimate) -> Self {
        EscapeReport {
            points: set.points().iter().map(|p| p.to_string()).collect(),
            capacity,
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Sign helper for callers comparing big coordinates.
pub fn is_negative(v: &BigInt) -> bool {
    v.sign() == Sign::Minus
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_return_table() {
        let walk = InducedWalk::new();
        // P(T = 2) = 1/4 for the planar simple walk
        assert!((walk.cdf[0] - 0.25).abs() < 1e-15);
        assert!((1.0 - walk.return_time_tail(2) - 0.25).abs() < 1e-15);
        let t = 2 * RETURN_TABLE_HALF as u64;
        let inside = walk.return_time_tail(t);
        let beyond = walk.return_time_tail(t + 2);
        assert!(beyond < inside && (inside - beyond) / inside < 1e-3);
        assert!(inside > 0.2 && inside < 0.4);
    }

    #[test]
    fn big_from_ln_round_trips() {
        let v = big_from_ln(200.0, true);
        assert!(is_negative(&v));
        assert!((ln_big(&v) - 200.0).abs() < 1e-12);
        assert!((ln_big(&BigInt::from(1000)) - 1000f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn step_law_is_symmetric() {
        let walk = InducedWalk::new();
        let mut rng = rng_from_seed(1);
        let pmf = walk.estimate_pmf(3, 200_000, &mut rng);
        for k in 1..=3usize {
            let (_, p, s) = pmf[3 + k];
            let (_, q, t) = pmf[3 - k];
            assert!((p - q).abs() < 5.0 * (s * s + t * t).sqrt());
        }
        // axis moves alone give P(+-1) >= 1/6
        assert!(pmf[4].1 > 1.0 / 6.0);
    }

    #[test]
    fn aggregate_distance_and_cover() {
        let agg = Aggregate3::from_points([-2, -1, 0, 1, 2, 9].map(BigInt::from)).unwrap();
        assert_eq!(agg.distance(&BigInt::from(5)), BigInt::from(3));
        assert_eq!(agg.distance(&BigInt::from(-10)), BigInt::from(8));
        assert!(agg.covers(2));
        assert!(!agg.covers(3));
        assert!(Aggregate3::new().covers(0));
    }

    #[test]
    fn origin_escape_matches_polya() {
        let walk = InducedWalk::new();
        let mut rng = rng_from_seed(2);
        let est = estimate_escape(&walk, &Aggregate3::new(), &BigInt::zero(), 20_000, 200, &mut rng)
            .unwrap();
        assert!((est.estimate - 0.6595).abs() < 4.0 * est.stderr + 0.005, "{est:?}");
    }

    #[test]
    fn reversed_run_is_deterministic_and_monotone() {
        let cfg = Z3Config::new(25, 4);
        let a = run_z3_dla(&cfg).unwrap();
        let b = run_z3_dla(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 25);
        let d = a.diameters();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert!(fill_check(&a, 0, 25));
    }

    #[test]
    fn direct_run_stops_gracefully() {
        let mut cfg = Z3Config::new(200, 6);
        cfg.sampler = Z3Sampler::Direct;
        cfg.feasibility_diameter = 1000;
        cfg.max_proposals = 200;
        let t = run_z3_dla(&cfg).unwrap();
        assert!(t.records.len() < 200);
        assert!(t.stop_reason.is_some());
    }
}
