//! The gluing measure `mu(x, a; A) = p(a - x) g_A(inf, x)` and exact samplers for it.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use serde::Serialize;

use crate::error::{LdlaError, Result};
use crate::hitting::HittingSystem;
use crate::kernel::PotentialKernel;
use crate::law::StepLaw;
use crate::special::integrate_to_infinity;

pub const DEFAULT_EPS_TAIL: f64 = 1e-6;
pub const VALIDATION_EPS_TAIL: f64 = 1e-4;
pub const MAX_BLOCK_PROPOSALS: u64 = 10_000;
/// Steps beyond this magnitude are never proposed; their mass is below `2^-58`.
pub const MAX_PROPOSAL_STEP: u64 = 1 << 60;

/// `mu(x, .)` at a single site.
#[derive(Debug, Clone, Serialize)]
pub struct MuAt {
    pub total: f64,
    pub per_anchor: Vec<(i64, f64)>,
}

/// `mu(x, a) = p(a - x) g_A(inf, x)` for every anchor `a` (sorted).
pub fn mu_at(
    system: &HittingSystem,
    kernel: &PotentialKernel,
    law: &StepLaw,
    x: i64,
) -> Result<MuAt> {
    if system.points().contains(&x) {
        return Err(LdlaError::PointInAggregate(x));
    }
    let g = system.g_infinity(kernel, x)?;
    let mut per_anchor: Vec<(i64, f64)> = system
        .points()
        .iter()
        .map(|&a| (a, law.pmf(a - x) * g))
        .collect();
    per_anchor.sort_unstable_by_key(|p| p.0);
    let total = per_anchor.iter().map(|p| p.1).sum();
    Ok(MuAt { total, per_anchor })
}

/// Sampler for `nu(k) = p(k) a(k)`, a probability law on the nonzero integers
/// because `sum_k p(k) a(k) = a(0) + 1 = 1`.
#[derive(Debug, Clone)]
pub struct NuSampler {
    law: StepLaw,
    kernel: Arc<PotentialKernel>,
    /// Last index covered by the alias table.
    table_top: u64,
    alias: WeightedAliasIndex<f64>,
    /// `suffix[k] = sum_{j > k, j <= table_top} p(j) a(j)`.
    suffix: Vec<f64>,
    /// One-sided mass beyond `table_top`.
    tail_mass: f64,
    pareto_exp: f64,
    envelope: f64,
}

impl NuSampler {
    pub fn new(law: &StepLaw, kernel: Arc<PotentialKernel>) -> Result<Self> {
        let table_top = match law.support_radius() {
            Some(r) => r,
            None => kernel.n_table().min(law.table_cutoff()),
        };
        let weights: Vec<f64> = (1..=table_top)
            .map(|k| law.pmf(k as i64) * kernel.eval(k as i64))
            .collect();
        let mut suffix = vec![0.0; table_top as usize + 1];
        for k in (0..table_top as usize).rev() {
            suffix[k] = suffix[k + 1] + weights[k];
        }
        let (tail_mass, pareto_exp, envelope) = if law.is_bounded() {
            (0.0, 0.0, 0.0)
        } else {
            let w = |y: f64| law.pmf_real(y) * kernel.eval_real(y);
            let tail = integrate_to_infinity(w, table_top as f64 + 0.5, 1e-13);
            let model = kernel.tail_model();
            let s = 1.0 + law.alpha();
            let p = if model.exponent == 0.0 {
                s - 0.05
            } else {
                s - model.exponent
            };
            let lo = table_top as f64;
            let hi = (MAX_PROPOSAL_STEP as f64) * 2.0;
            let steps = 4000;
            let mut best = 0.0f64;
            for i in 0..=steps {
                let y = lo * (hi / lo).powf(i as f64 / steps as f64);
                best = best.max(w(y) * y.powf(p));
            }
            (tail, p, best * 1.05)
        };
        let mut alias_w = weights;
        alias_w.push(tail_mass);
        let alias = WeightedAliasIndex::new(alias_w)
            .map_err(|e| LdlaError::Config(format!("proposal table: {e}")))?;
        Ok(NuSampler {
            law: law.clone(),
            kernel,
            table_top,
            alias,
            suffix,
            tail_mass,
            pareto_exp: p_or_zero(pareto_exp),
            envelope,
        })
    }

    pub fn kernel(&self) -> &Arc<PotentialKernel> {
        &self.kernel
    }

    /// `sum_{k > t} p(k) a(k)` (one side).
    pub fn side_tail(&self, t: u64) -> f64 {
        if t < self.table_top {
            return self.suffix[t as usize] + self.tail_mass;
        }
        if self.law.is_bounded() {
            return 0.0;
        }
        if t == self.table_top {
            return self.tail_mass;
        }
        let law = &self.law;
        let kernel = &self.kernel;
        integrate_to_infinity(
            |y| law.pmf_real(y) * kernel.eval_real(y),
            t as f64 + 0.5,
            1e-13,
        )
    }

    /// Largest magnitude drawn from the alias table.
    pub fn table_top(&self) -> u64 {
        self.table_top
    }

    /// Magnitude `|k|` under `nu` (the sign is a fair coin).
    pub fn sample_magnitude<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        loop {
            let i = self.alias.sample(rng) as u64;
            if i < self.table_top {
                return i + 1;
            }
            if let Some(k) = self.sample_beyond(self.table_top, rng) {
                return k;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let k = self.sample_magnitude(rng) as i64;
        if rng.random::<bool>() {
            k
        } else {
            -k
        }
    }

    /// One draw of `nu` conditioned on `k > t` for `t >= table_top`, or `None`
    /// on rejection.
    pub fn sample_beyond<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> Option<u64> {
        debug_assert!(t >= self.table_top && !self.law.is_bounded());
        let p = self.pareto_exp;
        let u: f64 = 1.0 - rng.random::<f64>();
        let y = t as f64 * u.powf(-1.0 / (p - 1.0));
        if !(y < MAX_PROPOSAL_STEP as f64) {
            return None;
        }
        let k = (y.ceil() as u64).max(t + 1);
        let kf = k as f64;
        // int_{k-1}^{k} y^{-p} dy
        let cell = kf.powf(1.0 - p) * ((1.0 - p) * (-1.0 / kf).ln_1p()).exp_m1() / (p - 1.0);
        let w = self.law.pmf(k as i64) * self.kernel.eval(k as i64);
        let accept = w / (self.envelope * cell);
        if rng.random::<f64>() < accept {
            Some(k)
        } else {
            None
        }
    }
}

fn p_or_zero(p: f64) -> f64 {
    if p.is_finite() {
        p
    } else {
        0.0
    }
}

/// Result of one exact gluing draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GlueDraw {
    pub x: i64,
    pub anchor: i64,
    pub proposals: u64,
}

fn nearest_two(sorted: &[i64], x: i64) -> (i64, Option<i64>) {
    let i = sorted.partition_point(|&p| p < x);
    if i == 0 {
        (sorted[0], sorted.get(1).copied())
    } else if i == sorted.len() {
        (sorted[i - 1], if i >= 2 { Some(sorted[i - 2]) } else { None })
    } else {
        let (l, r) = (sorted[i - 1], sorted[i]);
        if x - l <= r - x {
            (l, Some(r))
        } else {
            (r, Some(l))
        }
    }
}

/// Production exact sampler for large aggregates.
///
/// Proposes an anchor uniformly and a displacement from `nu`; the pair is kept
/// with probability `g_A(inf, x) / a(x - anchor)`, which is at most 1 because
/// removing points from the absorbing set can only increase the Green function.
/// The accepted pair has law exactly `mu`.
#[derive(Debug, Clone)]
pub struct GluingSampler {
    nu: NuSampler,
    proposal_cap: u64,
}

impl GluingSampler {
    pub fn new(law: &StepLaw, kernel: Arc<PotentialKernel>) -> Result<Self> {
        Ok(GluingSampler {
            nu: NuSampler::new(law, kernel)?,
            proposal_cap: MAX_BLOCK_PROPOSALS,
        })
    }

    pub fn kernel(&self) -> &Arc<PotentialKernel> {
        self.nu.kernel()
    }

    pub fn nu(&self) -> &NuSampler {
        &self.nu
    }

    /// Draws `(x, a)` for the set whose sorted points are `sorted`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        system: &HittingSystem,
        sorted: &[i64],
        rng: &mut R,
    ) -> Result<GlueDraw> {
        let kernel = &**self.nu.kernel();
        let m = sorted.len();
        // acceptance is 1/m on average
        let cap = self.proposal_cap.saturating_mul(m as u64).max(self.proposal_cap);
        let monotone_from = kernel.monotone_from() as i64;
        let mut proposals = 0u64;
        while proposals < cap {
            proposals += 1;
            let anchor = sorted[rng.random_range(0..m)];
            let k = self.nu.sample(rng);
            let Some(x) = anchor.checked_add(k) else {
                continue;
            };
            if sorted.binary_search(&x).is_ok() {
                continue;
            }
            let level = rng.random::<f64>() * kernel.eval(k);
            let (b1, b2) = nearest_two(sorted, x);
            let a1 = kernel.eval(x - b1);
            if level >= a1 {
                continue;
            }
            if let Some(b2) = b2 {
                let pair = 0.5 * (a1 + kernel.eval(x - b2) - kernel.eval(b2 - b1));
                if level >= pair {
                    continue;
                }
            }
            // outside the hull the kernel is increasing in the distance, so g lies
            // between the values at the nearest and farthest extremes
            let (lo, hi) = (sorted[0], sorted[m - 1]);
            let (near, far) = if x > hi { (x - hi, x - lo) } else { (lo - x, hi - x) };
            if near > monotone_from {
                let kappa = system.kappa();
                if level < kappa + kernel.eval(near) {
                    return Ok(GlueDraw { x, anchor, proposals });
                }
                if level >= kappa + kernel.eval(far) {
                    continue;
                }
            }
            let g = system.g_infinity(kernel, x)?;
            if level < g {
                return Ok(GlueDraw { x, anchor, proposals });
            }
        }
        Err(LdlaError::SamplerAborted {
            proposals,
            reason: format!("no acceptance for a set of {m} points"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A run of consecutive sites beyond the explicit window with mass bounds.
#[derive(Debug, Clone, Serialize)]
pub struct TailBlock {
    pub side: Side,
    /// Distance range from the nearest extreme, inclusive.
    pub near: u64,
    pub far: u64,
    /// Per-anchor upper bounds of `mu` at a single site of the block.
    #[serde(skip)]
    site_upper: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl TailBlock {
    fn sites(&self) -> u64 {
        self.far - self.near + 1
    }

    fn site(&self, lo: i64, hi: i64, offset: u64) -> i64 {
        let d = (self.near + offset) as i64;
        match self.side {
            Side::Right => hi + d,
            Side::Left => lo - d,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExplicitMass {
    pub x: i64,
    pub anchor: i64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
enum Entry {
    Explicit(usize),
    Block { block: usize, anchor: usize },
    Far { side: Side, anchor: usize },
}

/// Certified decomposition of `mu` into explicit masses near the set, bounded
/// blocks further out and a bounded far region.
#[derive(Debug, Clone)]
pub struct GluingDistribution {
    anchors: Vec<i64>,
    anchor_weights: Vec<f64>,
    window: u64,
    far_distance: u64,
    explicit: Vec<ExplicitMass>,
    blocks: Vec<TailBlock>,
    /// Per anchor, `(left, right)` far-region envelope masses.
    far_mass: Vec<(f64, f64)>,
    tail_mass_bound: f64,
    total_mass: f64,
    entries: Vec<Entry>,
    alias: WeightedAliasIndex<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GluingDump {
    pub anchors: Vec<i64>,
    pub anchor_weights: Vec<f64>,
    pub window: u64,
    pub far_distance: u64,
    pub total_mass: f64,
    pub tail_mass_bound: f64,
    pub explicit: Vec<ExplicitMass>,
    pub blocks: Vec<TailBlock>,
    pub far_bound: f64,
}

impl GluingDistribution {
    /// Builds the decomposition with neglected mass at most `eps_tail`.
    pub fn build(
        system: &HittingSystem,
        nu: &NuSampler,
        law: &StepLaw,
        eps_tail: f64,
    ) -> Result<Self> {
        if !(eps_tail > 0.0) {
            return Err(LdlaError::Config(format!("eps_tail must be positive, got {eps_tail}")));
        }
        let kernel = &**nu.kernel();
        let mut anchors = system.points().to_vec();
        anchors.sort_unstable();
        let m = anchors.len();
        let lo = anchors[0];
        let hi = anchors[m - 1];
        let diam = (hi - lo) as u64;
        let mut window = (2 * diam).max(512).max(kernel.monotone_from());
        if let Some(r) = law.support_radius() {
            window = window.max(r);
        }
        let mut explicit = Vec::new();
        let mut anchor_weights = vec![0.0; m];
        for x in (lo - window as i64)..=(hi + window as i64) {
            if anchors.binary_search(&x).is_ok() {
                continue;
            }
            let mut g = None;
            for (j, &a) in anchors.iter().enumerate() {
                let p = law.pmf(a - x);
                if p == 0.0 {
                    continue;
                }
                let gv = match g {
                    Some(v) => v,
                    None => {
                        let v = system.g_infinity(kernel, x)?;
                        g = Some(v);
                        v
                    }
                };
                let mass = p * gv;
                anchor_weights[j] += mass;
                explicit.push(ExplicitMass { x, anchor: a, mass });
            }
        }
        let explicit_total: f64 = explicit.iter().map(|e| e.mass).sum();

        let (blocks, far_distance, far_mass) = if law.is_bounded() {
            (Vec::new(), window, vec![(0.0, 0.0); m])
        } else {
            Self::tail_blocks(system, nu, law, &anchors, window, eps_tail)?
        };
        let far_total: f64 = far_mass.iter().map(|(l, r)| l + r).sum();
        let gap: f64 = blocks.iter().map(|b| b.upper - b.lower).sum();
        let mid: f64 = blocks.iter().map(|b| 0.5 * (b.upper + b.lower)).sum();
        for b in &blocks {
            for (j, u) in b.site_upper.iter().enumerate() {
                // midpoint split of the block among anchors by their upper bounds
                let share = if b.upper > 0.0 {
                    u * b.sites() as f64 / b.upper
                } else {
                    0.0
                };
                anchor_weights[j] += share * 0.5 * (b.upper + b.lower);
            }
        }
        let tail_mass_bound = 0.5 * gap + far_total;
        let total_mass = explicit_total + mid;

        let mut entries = Vec::new();
        let mut weights = Vec::new();
        for (i, e) in explicit.iter().enumerate() {
            if e.mass > 0.0 {
                entries.push(Entry::Explicit(i));
                weights.push(e.mass);
            }
        }
        for (bi, b) in blocks.iter().enumerate() {
            for (j, u) in b.site_upper.iter().enumerate() {
                if *u > 0.0 {
                    entries.push(Entry::Block { block: bi, anchor: j });
                    weights.push(u * b.sites() as f64);
                }
            }
        }
        for (j, (l, r)) in far_mass.iter().enumerate() {
            if *l > 0.0 {
                entries.push(Entry::Far { side: Side::Left, anchor: j });
                weights.push(*l);
            }
            if *r > 0.0 {
                entries.push(Entry::Far { side: Side::Right, anchor: j });
                weights.push(*r);
            }
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| LdlaError::TailCertification(format!("empty decomposition: {e}")))?;
        Ok(GluingDistribution {
            anchors,
            anchor_weights,
            window,
            far_distance,
            explicit,
            blocks,
            far_mass,
            tail_mass_bound,
            total_mass,
            entries,
            alias,
        })
    }

    #[allow(clippy::type_complexity)]
    fn tail_blocks(
        system: &HittingSystem,
        nu: &NuSampler,
        law: &StepLaw,
        anchors: &[i64],
        window: u64,
        eps_tail: f64,
    ) -> Result<(Vec<TailBlock>, u64, Vec<(f64, f64)>)> {
        let kernel = &**nu.kernel();
        let m = anchors.len();
        let lo = anchors[0];
        let hi = anchors[m - 1];
        // far region: mu(x, a) <= p(x - a) a(x - a) summed over anchors
        let mut far_distance = window.max(nu.table_top()).max(1024);
        loop {
            let bound = 2.0 * m as f64 * nu.side_tail(far_distance);
            if bound <= 0.25 * eps_tail {
                break;
            }
            if far_distance > kernel.reliable_range() / 2 {
                return Err(LdlaError::TailCertification(format!(
                    "far region needs distances beyond the kernel range {}",
                    kernel.reliable_range()
                )));
            }
            far_distance *= 2;
        }
        let far_mass: Vec<(f64, f64)> = anchors
            .iter()
            .map(|&a| {
                (
                    nu.side_tail(far_distance + (a - lo) as u64),
                    nu.side_tail(far_distance + (hi - a) as u64),
                )
            })
            .collect();
        let far_total: f64 = far_mass.iter().map(|(l, r)| l + r).sum();
        let mut ratio = 0.05;
        loop {
            let mut blocks = Vec::new();
            for side in [Side::Left, Side::Right] {
                let mut near = window + 1;
                while near <= far_distance {
                    let far = ((near as f64 * (1.0 + ratio)).floor() as u64)
                        .max(near)
                        .min(far_distance);
                    let (x_near, x_far) = match side {
                        Side::Right => (hi + near as i64, hi + far as i64),
                        Side::Left => (lo - near as i64, lo - far as i64),
                    };
                    let g_lo = system.g_infinity(kernel, x_near)?;
                    let g_hi = system.g_infinity(kernel, x_far)?;
                    let count = (far - near + 1) as f64;
                    let mut site_upper = Vec::with_capacity(m);
                    let mut lower = 0.0;
                    let mut upper = 0.0;
                    for &a in anchors {
                        let d_near = (x_near - a).abs();
                        let d_far = (x_far - a).abs();
                        let u = law.pmf(d_near) * g_hi;
                        site_upper.push(u);
                        upper += u * count;
                        lower += law.pmf(d_far) * g_lo * count;
                    }
                    blocks.push(TailBlock {
                        side,
                        near,
                        far,
                        site_upper,
                        lower,
                        upper,
                    });
                    near = far + 1;
                }
            }
            let gap: f64 = blocks.iter().map(|b| b.upper - b.lower).sum();
            if 0.5 * gap + far_total <= eps_tail {
                return Ok((blocks, far_distance, far_mass));
            }
            ratio *= 0.5;
            if ratio < 1e-6 {
                return Err(LdlaError::TailCertification(format!(
                    "block gap {gap:.3e} stays above {eps_tail:.3e}"
                )));
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    pub fn anchors(&self) -> &[i64] {
        &self.anchors
    }

    /// `w_a = sum_x p(x - a) g_A(inf, x)`, tail blocks counted at their midpoints.
    pub fn anchor_weights(&self) -> &[f64] {
        &self.anchor_weights
    }

    pub fn explicit(&self) -> &[ExplicitMass] {
        &self.explicit
    }

    pub fn blocks(&self) -> &[TailBlock] {
        &self.blocks
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// Explicit `mu(x, .)` summed over anchors, keyed by `x`.
    pub fn explicit_by_site(&self) -> std::collections::BTreeMap<i64, f64> {
        let mut out = std::collections::BTreeMap::new();
        for e in &self.explicit {
            *out.entry(e.x).or_insert(0.0) += e.mass;
        }
        out
    }

    /// Exact draw from `mu / total` (up to the certified tail bound).
    pub fn sample<R: Rng + ?Sized>(
        &self,
        system: &HittingSystem,
        nu: &NuSampler,
        law: &StepLaw,
        rng: &mut R,
    ) -> Result<GlueDraw> {
        let kernel = &**nu.kernel();
        let lo = self.anchors[0];
        let hi = *self.anchors.last().expect("nonempty");
        let mut proposals = 0;
        while proposals < MAX_BLOCK_PROPOSALS {
            proposals += 1;
            match &self.entries[self.alias.sample(rng)] {
                Entry::Explicit(i) => {
                    let e = self.explicit[*i];
                    return Ok(GlueDraw {
                        x: e.x,
                        anchor: e.anchor,
                        proposals,
                    });
                }
                Entry::Block { block, anchor } => {
                    let b = &self.blocks[*block];
                    let x = b.site(lo, hi, rng.random_range(0..b.sites()));
                    let a = self.anchors[*anchor];
                    let mu = law.pmf(a - x) * system.g_infinity(kernel, x)?;
                    if rng.random::<f64>() * b.site_upper[*anchor] < mu {
                        return Ok(GlueDraw { x, anchor: a, proposals });
                    }
                }
                Entry::Far { side, anchor } => {
                    let a = self.anchors[*anchor];
                    let t = match side {
                        Side::Right => self.far_distance + (hi - a) as u64,
                        Side::Left => self.far_distance + (a - lo) as u64,
                    };
                    let Some(k) = nu.sample_beyond(t, rng) else {
                        continue;
                    };
                    let x = match side {
                        Side::Right => a + k as i64,
                        Side::Left => a - k as i64,
                    };
                    let g = system.g_infinity(kernel, x)?;
                    if rng.random::<f64>() * kernel.eval(k as i64) < g {
                        return Ok(GlueDraw { x, anchor: a, proposals });
                    }
                }
            }
        }
        Err(LdlaError::SamplerAborted {
            proposals,
            reason: "tail block rejections exhausted the proposal budget".into(),
        })
    }

    pub fn dump(&self) -> GluingDump {
        GluingDump {
            anchors: self.anchors.clone(),
            anchor_weights: self.anchor_weights.clone(),
            window: self.window,
            far_distance: self.far_distance,
            total_mass: self.total_mass,
            tail_mass_bound: self.tail_mass_bound,
            explicit: self.explicit.clone(),
            blocks: self.blocks.clone(),
            far_bound: self.far_mass.iter().map(|(l, r)| l + r).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::shared_kernel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(law: StepLaw, n: u64) -> (StepLaw, Arc<PotentialKernel>, NuSampler) {
        let k = shared_kernel(&law, n).unwrap();
        let nu = NuSampler::new(&law, Arc::clone(&k)).unwrap();
        (law, k, nu)
    }

    #[test]
    fn nu_is_normalized_and_tail_sampler_is_exact() {
        let (_, k, nu) = setup(StepLaw::power_law(1.5, 0.2).unwrap(), 1 << 12);
        let total = 2.0 * nu.side_tail(0);
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = nu.table_top();
        let probe = 4 * t;
        let n = 200_000;
        let mut above = 0u64;
        let mut accepted = 0u64;
        let mut tries = 0u64;
        while accepted < n {
            tries += 1;
            if let Some(v) = nu.sample_beyond(t, &mut rng) {
                accepted += 1;
                if v > probe {
                    above += 1;
                }
            }
        }
        let p = nu.side_tail(probe) / nu.side_tail(t);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((above as f64 / n as f64 - p).abs() < 4.0 * se);
        assert!(tries < 2 * n, "acceptance too low: {tries}");
        let _ = k;
    }

    #[test]
    fn singleton_normalization_and_closed_form() {
        let (law, k, nu) = setup(StepLaw::power_law(1.5, 0.2).unwrap(), 1 << 12);
        let sys = HittingSystem::solve(&k, &[0]).unwrap();
        let g = GluingDistribution::build(&sys, &nu, &law, 1e-4).unwrap();
        assert!((g.total_mass() - 1.0).abs() <= 2e-4, "{}", g.total_mass());
        for e in g.explicit().iter().take(50) {
            let expect = law.pmf(e.x) * k.eval(e.x);
            assert!((e.mass - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn random_sets_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for law in [
            StepLaw::power_law(1.2, 0.2).unwrap(),
            StepLaw::z2_restricted().unwrap(),
            StepLaw::power_law(2.5, 0.2).unwrap(),
        ] {
            let (law, k, nu) = setup(law, 1 << 14);
            for _ in 0..4 {
                let size = rng.random_range(1..=20);
                let mut pts = vec![0i64];
                while pts.len() < size {
                    let x = rng.random_range(-500..=500);
                    if !pts.contains(&x) {
                        pts.push(x);
                    }
                }
                let sys = HittingSystem::solve(&k, &pts).unwrap();
                let g = GluingDistribution::build(&sys, &nu, &law, 1e-4).unwrap();
                assert!(g.tail_mass_bound() <= 1e-4);
                assert!(
                    (g.total_mass() - 1.0).abs() <= 2e-4,
                    "{:?} {} {}",
                    law.spec().kind,
                    g.total_mass(),
                    g.tail_mass_bound()
                );
            }
        }
    }

    #[test]
    fn lazy_singleton_draws_neighbours() {
        let (law, k, nu) = setup(StepLaw::lazy(0.5).unwrap(), 256);
        let sys = HittingSystem::solve(&k, &[0]).unwrap();
        let g = GluingDistribution::build(&sys, &nu, &law, 1e-6).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut plus = 0;
        let n = 100_000;
        for _ in 0..n {
            let d = g.sample(&sys, &nu, &law, &mut rng).unwrap();
            assert!(d.x == 1 || d.x == -1);
            assert_eq!(d.anchor, 0);
            if d.x == 1 {
                plus += 1;
            }
        }
        let se = (0.25f64 / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn production_sampler_matches_decomposition() {
        let (law, k, nu) = setup(StepLaw::power_law(1.5, 0.2).unwrap(), 1 << 12);
        let pts = [0i64, 1, 3];
        let sys = HittingSystem::solve(&k, &pts).unwrap();
        let g = GluingDistribution::build(&sys, &nu, &law, 1e-4).unwrap();
        let prod = GluingSampler::new(&law, Arc::clone(&k)).unwrap();
        let mut sorted = pts.to_vec();
        sorted.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let bins = |x: i64| -> usize { (x.clamp(-12, 15) + 12) as usize };
        let mut h1 = vec![0.0; 28];
        let mut h2 = vec![0.0; 28];
        for _ in 0..n {
            let a = g.sample(&sys, &nu, &law, &mut rng).unwrap();
            let b = prod.sample(&sys, &sorted, &mut rng).unwrap();
            assert!(!pts.contains(&a.x) && !pts.contains(&b.x));
            h1[bins(a.x)] += 1.0 / n as f64;
            h2[bins(b.x)] += 1.0 / n as f64;
        }
        let tv: f64 = 0.5 * h1.iter().zip(&h2).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.01, "tv {tv}");
        // explicit mass at x=-2 against the sampled frequency
        let site = g.explicit_by_site()[&-2];
        let f = h2[bins(-2)];
        let se = (site * (1.0 - site) / n as f64).sqrt();
        assert!((f - site).abs() < 4.0 * se);
    }

    #[test]
    fn dump_serializes() {
        let (law, k, nu) = setup(StepLaw::power_law(1.5, 0.2).unwrap(), 1 << 12);
        let sys = HittingSystem::solve(&k, &[0, 4]).unwrap();
        let g = GluingDistribution::build(&sys, &nu, &law, 1e-3).unwrap();
        let text = serde_json::to_string(&g.dump()).unwrap();
        assert!(text.contains("\"blocks\""));
        assert!(text.contains("\"tail_mass_bound\""));
    }

    #[test]
    fn mu_at_rejects_points_of_the_set() {
        let (law, k, _) = setup(StepLaw::power_law(1.5, 0.2).unwrap(), 1 << 12);
        let sys = HittingSystem::solve(&k, &[0, 4]).unwrap();
        assert!(mu_at(&sys, &k, &law, 4).is_err());
        let left = mu_at(&sys, &k, &law, -3).unwrap();
        let right = mu_at(&sys, &k, &law, 7).unwrap();
        assert!((left.total - right.total).abs() < 1e-14);
    }
}
