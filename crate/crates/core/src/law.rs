//! Symmetric integer step distributions.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{LdlaError, Result};
use crate::special::{power_tail, zeta};

/// Largest step magnitude ever returned by the samplers. Mass beyond it is below
/// `2^-60` for every supported law and is folded into this cap.
pub const MAX_STEP: i64 = 1 << 60;

pub const DEFAULT_TABLE_CUTOFF: u64 = 1 << 16;
pub const DEFAULT_HOLDING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    PowerLaw,
    Z2Restricted,
    LazyNearestNeighbor,
    Table,
}

/// Serializable description of a step law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    pub kind: LawKind,
    /// Tail exponent; `None` for bounded laws.
    pub alpha: Option<f64>,
    pub holding_prob: f64,
    pub table_cutoff: u64,
    /// One-sided probabilities `P(xi = k)` for `k = 1..=table_cutoff` (table kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl LawSpec {
    pub fn power_law(alpha: f64, holding_prob: f64) -> Self {
        LawSpec {
            kind: LawKind::PowerLaw,
            alpha: Some(alpha),
            holding_prob,
            table_cutoff: DEFAULT_TABLE_CUTOFF,
            weights: None,
        }
    }

    pub fn z2_restricted() -> Self {
        LawSpec {
            kind: LawKind::Z2Restricted,
            alpha: Some(1.0),
            holding_prob: 1.0 - 2.0 / PI,
            table_cutoff: DEFAULT_TABLE_CUTOFF,
            weights: None,
        }
    }

    pub fn lazy(holding_prob: f64) -> Self {
        LawSpec {
            kind: LawKind::LazyNearestNeighbor,
            alpha: None,
            holding_prob,
            table_cutoff: 1,
            weights: None,
        }
    }

    pub fn table(holding_prob: f64, weights: Vec<f64>) -> Self {
        LawSpec {
            kind: LawKind::Table,
            alpha: None,
            holding_prob,
            table_cutoff: weights.len() as u64,
            weights: Some(weights),
        }
    }

    pub fn build(&self) -> Result<StepLaw> {
        StepLaw::from_spec(self)
    }

    /// Short label used in file names and reports.
    pub fn label(&self) -> String {
        match self.kind {
            LawKind::PowerLaw => format!("power{}", self.alpha.unwrap_or(f64::NAN)),
            LawKind::Z2Restricted => "z2".to_string(),
            LawKind::LazyNearestNeighbor => format!("lazy{}", self.holding_prob),
            LawKind::Table => format!("table{}", self.table_cutoff),
        }
    }
}

/// Small-frequency representation of `1 - phi(zeta)`.
#[derive(Debug, Clone)]
enum OneMinusPhi {
    /// `lead * z^lead_exp (+ log_coef * z^log_pow * (h - ln z)) + sum_j coefs[j] z^{2(j+1)}`.
    Series {
        lead: f64,
        lead_exp: f64,
        log_term: Option<(f64, i32, f64)>,
        coefs: Vec<f64>,
    },
    Z2,
    Lazy { move_prob: f64 },
    Finite,
}

/// A symmetric, aperiodic step law on the integers.
#[derive(Debug, Clone)]
pub struct StepLaw {
    spec: LawSpec,
    alpha: f64,
    holding_prob: f64,
    normalizer: f64,
    pmf_table: Vec<f64>,
    tail_table: Vec<f64>,
    cutoff: u64,
    sigma_sq: Option<f64>,
    small: OneMinusPhi,
    alias: WeightedAliasIndex<f64>,
}

impl StepLaw {
    pub fn from_spec(spec: &LawSpec) -> Result<Self> {
        match spec.kind {
            LawKind::PowerLaw => {
                let alpha = spec
                    .alpha
                    .ok_or_else(|| LdlaError::InvalidLaw("power law needs alpha".into()))?;
                Self::power_law_with_cutoff(alpha, spec.holding_prob, spec.table_cutoff)
            }
            LawKind::Z2Restricted => Self::z2_with_cutoff(spec.table_cutoff),
            LawKind::LazyNearestNeighbor => Self::lazy(spec.holding_prob),
            LawKind::Table => {
                let w = spec
                    .weights
                    .clone()
                    .ok_or_else(|| LdlaError::InvalidLaw("table law needs weights".into()))?;
                Self::table(spec.holding_prob, w)
            }
        }
    }

    /// `P(xi = 0) = h`, `P(xi = +-k) = c k^{-1-alpha}`.
    pub fn power_law(alpha: f64, holding_prob: f64) -> Result<Self> {
        Self::power_law_with_cutoff(alpha, holding_prob, DEFAULT_TABLE_CUTOFF)
    }

    pub fn power_law_with_cutoff(alpha: f64, holding_prob: f64, cutoff: u64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(LdlaError::InvalidLaw(format!("alpha must be positive, got {alpha}")));
        }
        if !(0.0..1.0).contains(&holding_prob) {
            return Err(LdlaError::InvalidLaw(format!(
                "holding_prob must lie in [0,1), got {holding_prob}"
            )));
        }
        if cutoff < 16 {
            return Err(LdlaError::InvalidLaw("table_cutoff must be at least 16".into()));
        }
        let s = 1.0 + alpha;
        let c = (1.0 - holding_prob) / (2.0 * zeta(s));
        let mut pmf = Vec::with_capacity(cutoff as usize + 1);
        pmf.push(holding_prob);
        for k in 1..=cutoff {
            pmf.push(c * (k as f64).powf(-s));
        }
        let beyond = 2.0 * c * power_tail(s, cutoff);
        let sigma_sq = if alpha > 2.0 {
            Some(2.0 * c * zeta(alpha - 1.0))
        } else {
            None
        };
        let small = power_series(alpha, c);
        let spec = LawSpec {
            kind: LawKind::PowerLaw,
            alpha: Some(alpha),
            holding_prob,
            table_cutoff: cutoff,
            weights: None,
        };
        Self::assemble(spec, alpha, holding_prob, c, pmf, beyond, sigma_sq, small)
    }

    /// The law of the visits of planar simple random walk to a line.
    pub fn z2_restricted() -> Result<Self> {
        Self::z2_with_cutoff(DEFAULT_TABLE_CUTOFF)
    }

    fn z2_with_cutoff(cutoff: u64) -> Result<Self> {
        let mut pmf = Vec::with_capacity(cutoff as usize + 1);
        pmf.push(1.0 - 2.0 / PI);
        for k in 1..=cutoff {
            let kf = k as f64;
            pmf.push(2.0 / (PI * (4.0 * kf * kf - 1.0)));
        }
        let beyond = 2.0 / (PI * (2.0 * cutoff as f64 + 1.0));
        let spec = LawSpec {
            kind: LawKind::Z2Restricted,
            alpha: Some(1.0),
            holding_prob: 1.0 - 2.0 / PI,
            table_cutoff: cutoff,
            weights: None,
        };
        Self::assemble(spec, 1.0, 1.0 - 2.0 / PI, 1.0 / (2.0 * PI), pmf, beyond, None, OneMinusPhi::Z2)
    }

    pub fn lazy(holding_prob: f64) -> Result<Self> {
        if !(holding_prob > 0.0 && holding_prob < 1.0) {
            return Err(LdlaError::InvalidLaw(format!(
                "lazy walk needs holding_prob in (0,1), got {holding_prob}"
            )));
        }
        let move_prob = 1.0 - holding_prob;
        let pmf = vec![holding_prob, move_prob / 2.0];
        Self::assemble(
            LawSpec::lazy(holding_prob),
            f64::INFINITY,
            holding_prob,
            move_prob / 2.0,
            pmf,
            0.0,
            Some(move_prob),
            OneMinusPhi::Lazy { move_prob },
        )
    }

    pub fn table(holding_prob: f64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || holding_prob < 0.0 {
            return Err(LdlaError::InvalidLaw("table weights must be nonnegative".into()));
        }
        let total = holding_prob + 2.0 * weights.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LdlaError::InvalidLaw(format!("table mass {total} is not 1")));
        }
        let mut support: Vec<i64> = Vec::new();
        if holding_prob > 0.0 {
            support.push(0);
        }
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                support.push(i as i64 + 1);
                support.push(-(i as i64) - 1);
            }
        }
        let g = support
            .iter()
            .map(|&k| k - support[0])
            .fold(0i64, |g, d| gcd(g, d.abs()));
        if g != 1 {
            return Err(LdlaError::InvalidLaw(format!(
                "table law is periodic (difference gcd {g})"
            )));
        }
        let mut pmf = vec![holding_prob];
        pmf.extend_from_slice(&weights);
        let sigma_sq: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, w)| 2.0 * w * ((i + 1) as f64).powi(2))
            .sum();
        let spec = LawSpec::table(holding_prob, weights);
        Self::assemble(spec, f64::INFINITY, holding_prob, 0.0, pmf, 0.0, Some(sigma_sq), OneMinusPhi::Finite)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spec: LawSpec,
        alpha: f64,
        holding_prob: f64,
        normalizer: f64,
        pmf: Vec<f64>,
        beyond: f64,
        sigma_sq: Option<f64>,
        small: OneMinusPhi,
    ) -> Result<Self> {
        let cutoff = (pmf.len() - 1) as u64;
        let mut tail = vec![0.0; pmf.len()];
        let mut acc = beyond;
        for t in (0..pmf.len()).rev() {
            tail[t] = acc;
            if t > 0 {
                acc += 2.0 * pmf[t];
            }
        }
        let mut weights: Vec<f64> = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| if k == 0 { *p } else { 2.0 * p })
            .collect();
        weights.push(beyond);
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| LdlaError::InvalidLaw(format!("alias table: {e}")))?;
        let law = StepLaw {
            spec,
            alpha,
            holding_prob,
            normalizer,
            pmf_table: pmf,
            tail_table: tail,
            cutoff,
            sigma_sq,
            small,
            alias,
        };
        let mass = law.holding_prob + law.tail(0);
        if (mass - 1.0).abs() > 1e-12 {
            return Err(LdlaError::InvalidLaw(format!("total mass {mass} is not 1")));
        }
        Ok(law)
    }

    pub fn spec(&self) -> &LawSpec {
        &self.spec
    }

    pub fn kind(&self) -> LawKind {
        self.spec.kind
    }

    /// Tail exponent; infinite for bounded laws.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn holding_prob(&self) -> f64 {
        self.holding_prob
    }

    /// The constant `c` of `P(xi = +-k) = c k^{-1-alpha}` (power laws).
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn table_cutoff(&self) -> u64 {
        self.cutoff
    }

    /// Variance, `None` when infinite.
    pub fn sigma_sq(&self) -> Option<f64> {
        self.sigma_sq
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.spec.kind, LawKind::LazyNearestNeighbor | LawKind::Table)
    }

    /// Largest `|k|` with positive probability (bounded laws only).
    pub fn support_radius(&self) -> Option<u64> {
        if self.is_bounded() {
            Some(self.cutoff)
        } else {
            None
        }
    }

    /// Exact `P(xi = k)`.
    pub fn pmf(&self, k: i64) -> f64 {
        let a = k.unsigned_abs();
        if a <= self.cutoff {
            return self.pmf_table[a as usize];
        }
        self.pmf_beyond(a as f64)
    }

    fn pmf_beyond(&self, a: f64) -> f64 {
        match self.spec.kind {
            LawKind::PowerLaw => self.normalizer * a.powf(-1.0 - self.alpha),
            LawKind::Z2Restricted => 2.0 / (PI * (4.0 * a * a - 1.0)),
            _ => 0.0,
        }
    }

    /// The closed-form pmf continued to real `|k| >= 1` (unbounded laws only).
    pub fn pmf_real(&self, a: f64) -> f64 {
        if self.is_bounded() {
            self.pmf(a.round() as i64)
        } else {
            self.pmf_beyond(a.abs())
        }
    }

    /// Exact `P(|xi| > t)`.
    pub fn tail(&self, t: u64) -> f64 {
        if t <= self.cutoff {
            return self.tail_table[t as usize];
        }
        match self.spec.kind {
            LawKind::PowerLaw => 2.0 * self.normalizer * power_tail(1.0 + self.alpha, t),
            LawKind::Z2Restricted => 2.0 / (PI * (2.0 * t as f64 + 1.0)),
            _ => 0.0,
        }
    }

    /// One-sided `P(xi > t)` for `t >= table_cutoff`.
    fn one_side_tail(&self, t: u64) -> f64 {
        0.5 * self.tail(t)
    }

    /// `1 - phi(zeta)` computed without cancellation.
    pub fn one_minus_char(&self, zeta: f64) -> f64 {
        let z = zeta.abs();
        if z == 0.0 {
            return 0.0;
        }
        match &self.small {
            OneMinusPhi::Z2 => (0.5 * z).sin(),
            OneMinusPhi::Lazy { move_prob } => {
                let s = (0.5 * z).sin();
                2.0 * move_prob * s * s
            }
            OneMinusPhi::Finite => {
                let mut total = 0.0;
                for (k, p) in self.pmf_table.iter().enumerate().skip(1) {
                    let s = (0.5 * k as f64 * z).sin();
                    total += 4.0 * p * s * s;
                }
                total
            }
            OneMinusPhi::Series {
                lead,
                lead_exp,
                log_term,
                coefs,
            } => {
                let mut total = 0.0;
                if *lead != 0.0 {
                    total += lead * z.powf(*lead_exp);
                }
                if let Some((coef, pow, h)) = log_term {
                    total += coef * z.powi(*pow) * (h - z.ln());
                }
                let z2 = z * z;
                let mut zp = z2;
                for c in coefs {
                    let term = c * zp;
                    total += term;
                    if *c != 0.0 && term.abs() < 1e-18 * total.abs() {
                        break;
                    }
                    zp *= z2;
                }
                total
            }
        }
    }

    /// `phi(zeta) = E cos(xi zeta)`.
    pub fn char_fn(&self, zeta: f64) -> f64 {
        1.0 - self.one_minus_char(zeta)
    }

    /// Coefficient `A` and exponent of the leading small-frequency behaviour
    /// `1 - phi(z) ~ A z^e`.
    pub fn small_frequency_leading(&self) -> (f64, f64) {
        match &self.small {
            OneMinusPhi::Z2 => (0.5, 1.0),
            OneMinusPhi::Lazy { move_prob } => (0.5 * move_prob, 2.0),
            OneMinusPhi::Finite => (0.5 * self.sigma_sq.unwrap_or(0.0), 2.0),
            OneMinusPhi::Series {
                lead,
                lead_exp,
                coefs,
                log_term,
            } => match log_term {
                // alpha == 2: 1 - phi ~ A z^2 (h - ln z)
                Some((coef, 2, _)) => (*coef, 2.0),
                _ if self.alpha < 2.0 => (*lead, *lead_exp),
                _ => (coefs[0], 2.0),
            },
        }
    }

    /// Draw one step.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let idx = self.alias.sample(rng) as u64;
        let magnitude = if idx <= self.cutoff {
            idx as i64
        } else {
            self.sample_beyond(rng.random::<f64>())
        };
        if magnitude == 0 || rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Inverse CDF of `|xi|` conditioned on `|xi| > table_cutoff`.
    fn sample_beyond(&self, u: f64) -> i64 {
        let n = self.cutoff;
        let v = (1.0 - u) * self.one_side_tail(n);
        if !(v > 0.0) {
            return (n + 1) as i64;
        }
        match self.spec.kind {
            LawKind::Z2Restricted => {
                // one-sided tail 1/(pi (2t+1)); smallest k with tail(k) < v
                let t = (1.0 / (PI * v) - 1.0) / 2.0;
                if t >= MAX_STEP as f64 {
                    return MAX_STEP;
                }
                let mut k = (t.floor() as u64 + 1).max(n + 1);
                while k > n + 1 && self.one_side_tail(k - 1) < v {
                    k -= 1;
                }
                while self.one_side_tail(k) >= v {
                    k += 1;
                }
                k as i64
            }
            LawKind::PowerLaw => {
                let a = self.alpha;
                let guess = (self.normalizer / (a * v)).powf(1.0 / a) - 0.5;
                if !(guess < (1u64 << 50) as f64) {
                    return if guess >= MAX_STEP as f64 || guess.is_nan() {
                        MAX_STEP
                    } else {
                        guess.round() as i64
                    };
                }
                let mut k = (guess.ceil().max(0.0) as u64).max(n + 1);
                while k > n + 1 && self.one_side_tail(k - 1) < v {
                    k -= 1;
                }
                while self.one_side_tail(k) >= v {
                    k += 1;
                }
                k as i64
            }
            _ => n as i64,
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Coefficients of `1 - phi` for `P(+-k) = c k^{-s}`, `s = 1 + alpha`.
fn power_series(alpha: f64, c: f64) -> OneMinusPhi {
    let s = 1.0 + alpha;
    let integer = s.fract() == 0.0;
    let si = s as i64;
    let mut coefs = Vec::new();
    let mut fact = 1.0;
    let mut log_term = None;
    for j in 1..=60i64 {
        let k = 2 * j;
        fact *= ((k - 1) * k) as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        if integer && si - 1 == k {
            // log form of the polylogarithm at the pole of zeta(s - 2j)
            let harmonic: f64 = (1..si).map(|i| 1.0 / i as f64).sum();
            log_term = Some((-2.0 * c * sign / fact, k as i32, harmonic));
            coefs.push(0.0);
            continue;
        }
        coefs.push(-2.0 * c * sign * zeta(s - k as f64) / fact);
    }
    let (lead, lead_exp) = if !integer {
        let g = crate::special::gamma_fn(-alpha);
        (-2.0 * c * g * (PI * alpha / 2.0).cos(), alpha)
    } else if si % 2 == 0 {
        let mut f = 1.0;
        for i in 1..si {
            f *= i as f64;
        }
        let sign = if (si / 2) % 2 == 0 { 1.0 } else { -1.0 };
        (-2.0 * c * sign * PI / (2.0 * f), alpha)
    } else {
        (0.0, alpha)
    };
    OneMinusPhi::Series {
        lead,
        lead_exp,
        log_term,
        coefs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_one_minus_phi(law: &StepLaw, z: f64, n: u64) -> f64 {
        // direct sum with Euler-Maclaurin-free analytic remainder bound ignored
        let mut t = 0.0;
        for k in 1..=n {
            let s = (0.5 * k as f64 * z).sin();
            t += 4.0 * law.pmf(k as i64) * s * s;
        }
        t
    }

    #[test]
    fn z2_values() {
        let law = StepLaw::z2_restricted().unwrap();
        assert!((law.pmf(0) - 0.36338022763241865).abs() < 1e-15);
        assert!((law.pmf(1) - 2.0 / (3.0 * PI)).abs() < 1e-15);
        assert!((law.pmf(2) - 2.0 / (15.0 * PI)).abs() < 1e-15);
        assert!((law.pmf(0) + law.tail(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lazy_values() {
        let law = StepLaw::lazy(0.5).unwrap();
        assert_eq!(law.pmf(1), 0.25);
        assert_eq!(law.sigma_sq(), Some(0.5));
        assert_eq!(law.tail(1), 0.0);
        assert!((law.char_fn(PI)).abs() < 1e-15);
        assert!(StepLaw::lazy(0.0).is_err());
        assert!(StepLaw::lazy(1.0).is_err());
    }

    #[test]
    fn power_law_constructor_checks() {
        assert!(StepLaw::power_law(0.0, 0.2).is_err());
        assert!(StepLaw::power_law(-1.0, 0.2).is_err());
        assert!(StepLaw::power_law(1.5, 1.0).is_err());
        assert!(StepLaw::power_law(1.5, -0.1).is_err());
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        for k in [1i64, 5, 100, 1_000_000] {
            assert_eq!(law.pmf(k), law.pmf(-k));
        }
        let c = law.normalizer();
        assert!((law.pmf(1_000_000) / (c * 1e-15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_table_rejected() {
        assert!(StepLaw::table(0.0, vec![0.5]).is_err());
        assert!(StepLaw::table(0.0, vec![0.25, 0.25]).is_ok());
        assert!(StepLaw::table(0.0, vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn tail_matches_direct_summation() {
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        let c = law.normalizer();
        for t in [10u64, 1000, 100_000] {
            let mut direct = 0.0;
            let upper = 4_000_000u64;
            for k in (t + 1..=upper).rev() {
                direct += 2.0 * c * (k as f64).powf(-2.5);
            }
            // analytic remainder beyond the direct range
            direct += 2.0 * c * power_tail(2.5, upper);
            assert!((law.tail(t) - direct).abs() < 1e-14, "t={t}");
        }
        let r3 = law.tail(1000) * 1000f64.powf(1.5);
        let r4 = law.tail(10_000) * 10_000f64.powf(1.5);
        assert!((r3 / r4 - 1.0).abs() < 0.02);
        let law25 = StepLaw::power_law(2.5, 0.2).unwrap();
        let ratio = law25.tail(2000) / law25.tail(1000);
        assert!((ratio / 2f64.powf(-2.5) - 1.0).abs() < 0.03);
    }

    #[test]
    fn char_fn_series_matches_direct_sums() {
        for alpha in [0.7, 1.2, 1.5, 2.0, 2.5, 3.0, 4.0, 1.0] {
            let law = StepLaw::power_law(alpha, 0.2).unwrap();
            for z in [0.3, 1.0, 2.0, PI] {
                let n = 200_000u64;
                let d = direct_one_minus_phi(&law, z, n);
                // remainder of the direct sum is at most 2 * tail(n)
                let bound = 2.0 * law.tail(n) + 1e-10;
                let v = law.one_minus_char(z);
                assert!((v - d).abs() <= bound, "alpha={alpha} z={z} v={v} d={d}");
            }
        }
    }

    #[test]
    fn z2_closed_form_char_fn() {
        let law = StepLaw::z2_restricted().unwrap();
        let z = PI / 2.0;
        let a = direct_one_minus_phi(&law, z, 1 << 20);
        let b = direct_one_minus_phi(&law, z, 1 << 21);
        assert!((a - b).abs() < 1e-6);
        assert!((law.one_minus_char(z) - b).abs() < 2.0 * law.tail(1 << 21));
    }

    #[test]
    fn sampler_tail_frequency() {
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut hits = 0u64;
        let mut zero = 0u64;
        for _ in 0..n {
            let k = law.sample_step(&mut rng);
            if k.unsigned_abs() > 100 {
                hits += 1;
            }
            if k == 0 {
                zero += 1;
            }
        }
        let p = law.tail(100);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 3.0 * se);
        let se0 = (0.2 * 0.8 / n as f64).sqrt();
        assert!(((zero as f64 / n as f64) - 0.2).abs() < 4.0 * se0);
    }

    #[test]
    fn sampler_beyond_table_is_exact() {
        // small cutoff so that the analytic tail sampler is exercised heavily
        let law = StepLaw::power_law_with_cutoff(1.5, 0.2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let mut counts = [0u64; 4];
        let thresholds = [16u64, 17, 40, 1000];
        for _ in 0..n {
            let k = law.sample_step(&mut rng).unsigned_abs();
            for (i, t) in thresholds.iter().enumerate() {
                if k > *t {
                    counts[i] += 1;
                }
            }
        }
        for (i, t) in thresholds.iter().enumerate() {
            let p = law.tail(*t);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let f = counts[i] as f64 / n as f64;
            assert!((f - p).abs() < 4.0 * se, "t={t} f={f} p={p}");
        }
        let z2 = StepLaw::z2_with_cutoff(16).unwrap();
        let mut over = 0u64;
        for _ in 0..n {
            if z2.sample_step(&mut rng).unsigned_abs() > 50 {
                over += 1;
            }
        }
        let p = z2.tail(50);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((over as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn spec_round_trip_is_exact() {
        let spec = LawSpec::power_law(1.2345678901234567, 0.2000000000000001);
        let text = serde_json::to_string(&spec).unwrap();
        let back: LawSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        assert!(text.contains("\"kind\":\"power_law\""));
    }
}
