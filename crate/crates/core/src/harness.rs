//! Ensemble orchestration, growth-exponent fits and increment diagnostics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dla::{run_dla, sha256_hex, RunConfig, Trajectory};
use crate::error::{LdlaError, Result};
use crate::law::{LawKind, LawSpec};
use crate::rng::derive_seed;

pub const ARTIFACT_VERSION: &str = "1";
/// Smallest particle count admitted into an exponent fit.
pub const MIN_FIT_N: u64 = 32;
/// Target number of geometric sample points per fit.
pub const FIT_POINTS: usize = 64;
pub const DEFAULT_SIGMA: f64 = 3.0;
/// Multiplicative slack between the fitted envelope constant and a bin.
pub const DEFAULT_ENVELOPE_BAND: f64 = 10.0;
pub const DEFAULT_SLOPE_TOL: f64 = 0.3;
pub const DEFAULT_JUMP_SLOPE_TOL: f64 = 0.2;

/// Least-squares growth exponent of `D_n` on a range of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub beta_hat: f64,
    pub stderr: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub r_squared: f64,
    /// Per-run slopes when the estimate summarizes an ensemble.
    #[serde(default)]
    pub per_run: Vec<f64>,
}

/// Geometrically spaced integers in `[lo, hi]`, both ends included.
pub fn geometric_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    let mut out = vec![lo];
    if hi > lo && points > 1 {
        let ratio = (hi as f64 / lo as f64).powf(1.0 / (points - 1) as f64);
        for k in 1..points {
            let v = ((lo as f64) * ratio.powi(k as i32)).round() as u64;
            let v = v.clamp(lo, hi);
            if v > *out.last().expect("nonempty") {
                out.push(v);
            }
        }
        if *out.last().expect("nonempty") != hi {
            out.push(hi);
        }
    }
    out
}

struct LineFit {
    slope: f64,
    slope_stderr: f64,
    r_squared: f64,
}

fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let k = xs.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let slope_stderr = if k > 2 { (ss_res / (kf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Some(LineFit { slope, slope_stderr, r_squared })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_line_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    fit_line(xs, ys).map(|f| f.slope)
}

/// Fits `ln D_n` against `ln n` where `diameters[n] = D_n`.
pub fn fit_exponent_series(diameters: &[f64], n_min: u64, n_max: u64) -> Result<ExponentEstimate> {
    if n_min < MIN_FIT_N {
        return Err(LdlaError::InsufficientData(format!("n_min {n_min} below {MIN_FIT_N}")));
    }
    if n_max <= n_min {
        return Err(LdlaError::InsufficientData(format!("empty fit range [{n_min}, {n_max}]")));
    }
    if (diameters.len() as u64) <= n_max {
        return Err(LdlaError::InsufficientData(format!(
            "series ends at n = {} before n_max = {n_max}",
            diameters.len().saturating_sub(1)
        )));
    }
    let grid = geometric_grid(n_min, n_max, FIT_POINTS);
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for n in grid {
        let d = diameters[n as usize];
        if d <= 0.0 || !d.is_finite() {
            return Err(LdlaError::InsufficientData(format!("nonpositive diameter at n = {n}")));
        }
        xs.push((n as f64).ln());
        ys.push(d.ln());
    }
    let fit = fit_line(&xs, &ys)
        .ok_or_else(|| LdlaError::InsufficientData("degenerate fit range".into()))?;
    Ok(ExponentEstimate {
        beta_hat: fit.slope,
        stderr: fit.slope_stderr,
        n_min,
        n_max,
        r_squared: fit.r_squared,
        per_run: Vec::new(),
    })
}

pub fn fit_exponent(traj: &Trajectory, n_min: u64, n_max: u64) -> Result<ExponentEstimate> {
    let d: Vec<f64> = traj.diameters().into_iter().map(|d| d as f64).collect();
    fit_exponent_series(&d, n_min, n_max)
}

/// Default fit range `[n/8, n]` for a run of `n` particles.
pub fn default_fit_range(n: u64) -> (u64, u64) {
    ((n / 8).max(MIN_FIT_N), n)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median of the per-run exponents over a common range.
pub fn fit_ensemble(trajs: &[Trajectory], n_min: u64, n_max: u64) -> Result<ExponentEstimate> {
    if trajs.is_empty() {
        return Err(LdlaError::InsufficientData("empty ensemble".into()));
    }
    let fits = trajs
        .iter()
        .map(|t| fit_exponent(t, n_min, n_max))
        .collect::<Result<Vec<_>>>()?;
    let per_run: Vec<f64> = fits.iter().map(|f| f.beta_hat).collect();
    let k = per_run.len() as f64;
    let mean = per_run.iter().sum::<f64>() / k;
    let sd = if per_run.len() > 1 {
        (per_run.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        fits[0].stderr
    };
    Ok(ExponentEstimate {
        beta_hat: median(&per_run),
        // large-sample standard error of a median
        stderr: 1.2533 * sd / k.sqrt(),
        n_min,
        n_max,
        r_squared: fits.iter().map(|f| f.r_squared).sum::<f64>() / k,
        per_run,
    })
}

/// Two-sided Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let t = trials as f64;
    let p = hits as f64 / t;
    let z2 = z * z;
    let denom = 1.0 + z2 / t;
    let centre = p + z2 / (2.0 * t);
    let half = z * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt();
    (((centre - half) / denom).max(0.0), ((centre + half) / denom).min(1.0))
}

/// Theoretical shape of the conditional increment tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Lower `c n / m` when `D < m`, upper `C n log m / m`.
    Z2,
    /// Lower and upper `n / m` up to slowly varying factors; slope in `m` near `-1`.
    StableInfiniteVariance,
    /// No envelope; frequencies only.
    None,
}

impl EnvelopeKind {
    pub fn for_law(law: &LawSpec) -> Self {
        match (law.kind, law.alpha) {
            (LawKind::Z2Restricted, _) => EnvelopeKind::Z2,
            (LawKind::PowerLaw, Some(a)) if a > 1.0 && a < 2.0 => {
                EnvelopeKind::StableInfiniteVariance
            }
            _ => EnvelopeKind::None,
        }
    }

    fn lower(self, n: f64, m: f64) -> Option<f64> {
        match self {
            EnvelopeKind::Z2 | EnvelopeKind::StableInfiniteVariance => Some(n / m),
            EnvelopeKind::None => None,
        }
    }

    fn upper(self, n: f64, m: f64) -> Option<f64> {
        match self {
            EnvelopeKind::Z2 => Some(n * m.ln() / m),
            EnvelopeKind::StableInfiniteVariance => Some(n / m),
            EnvelopeKind::None => None,
        }
    }
}

/// Thresholds of the increment-tail report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSettings {
    pub m_grid: Vec<u64>,
    /// Bin edges in aggregate size; bin `i` is `[edges[i], edges[i+1])`.
    pub n_edges: Vec<u64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_band")]
    pub envelope_band: f64,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

fn default_band() -> f64 {
    DEFAULT_ENVELOPE_BAND
}

fn default_slope_tol() -> f64 {
    DEFAULT_SLOPE_TOL
}

impl TailSettings {
    /// Dyadic `m` grid and dyadic `n` bins suited to runs of `n_particles`.
    pub fn dyadic(n_particles: u64, m_lo: u64, m_hi: u64) -> Self {
        let mut m_grid = Vec::new();
        let mut m = m_lo.max(1);
        while m <= m_hi {
            m_grid.push(m);
            m *= 2;
        }
        let mut n_edges = vec![MIN_FIT_N];
        while *n_edges.last().expect("nonempty") * 2 <= n_particles {
            let next = n_edges.last().expect("nonempty") * 2;
            n_edges.push(next);
        }
        n_edges.push(n_particles + 1);
        n_edges.dedup();
        TailSettings {
            m_grid,
            n_edges,
            sigma: DEFAULT_SIGMA,
            envelope_band: DEFAULT_ENVELOPE_BAND,
            slope_tol: DEFAULT_SLOPE_TOL,
        }
    }
}

/// Frequency of `{Delta D > m}` over steps taken from aggregates of size in one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBin {
    pub n_lo: u64,
    pub n_hi: u64,
    /// Mean aggregate size over the counted steps.
    pub n_mean: f64,
    pub m: u64,
    pub trials: u64,
    pub hits: u64,
    pub frequency: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Same frequency restricted to steps with diameter below `m`.
    pub small_trials: u64,
    pub small_hits: u64,
    pub small_ci_hi: f64,
    pub lower_pass: Option<bool>,
    pub upper_pass: Option<bool>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub n_lo: u64,
    pub n_hi: u64,
    pub slope: f64,
    pub stderr: f64,
    pub expected: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementTailReport {
    pub envelope: EnvelopeKind,
    pub settings: TailSettings,
    pub runs: usize,
    pub bins: Vec<TailBin>,
    /// Fitted lower constant `c` in `c n / m`.
    pub c_lower: Option<f64>,
    /// Fitted upper constant `C` in the upper envelope.
    pub c_upper: Option<f64>,
    pub slopes: Vec<SlopeCheck>,
    pub empty_bins: usize,
    pub pass: bool,
}

fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Binned conditional frequencies of `{Delta D_n > m}` with fitted envelopes.
pub fn increment_tail_report(
    trajs: &[Trajectory],
    settings: &TailSettings,
    envelope: EnvelopeKind,
) -> Result<IncrementTailReport> {
    if trajs.is_empty() {
        return Err(LdlaError::InsufficientData("empty ensemble".into()));
    }
    if settings.m_grid.is_empty() || settings.n_edges.len() < 2 {
        return Err(LdlaError::Config("tail report needs an m grid and at least one n bin".into()));
    }
    let mut bins = Vec::new();
    for w in settings.n_edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // (size before the step, diameter before, increment)
        let steps: Vec<(u64, u64, u64)> = trajs
            .iter()
            .flat_map(|t| t.records.iter())
            .filter(|r| r.n >= lo && r.n < hi)
            .map(|r| (r.n, r.d_n - r.delta_d, r.delta_d))
            .collect();
        let trials = steps.len() as u64;
        let n_mean = if trials > 0 {
            steps.iter().map(|s| s.0 as f64).sum::<f64>() / trials as f64
        } else {
            0.5 * (lo + hi) as f64
        };
        for &m in &settings.m_grid {
            let hits = steps.iter().filter(|s| s.2 > m).count() as u64;
            let small: Vec<_> = steps.iter().filter(|s| s.1 < m).collect();
            let small_hits = small.iter().filter(|s| s.2 > m).count() as u64;
            let (ci_lo, ci_hi) = wilson_interval(hits, trials, settings.sigma);
            let (_, small_ci_hi) = wilson_interval(small_hits, small.len() as u64, settings.sigma);
            bins.push(TailBin {
                n_lo: lo,
                n_hi: hi,
                n_mean,
                m,
                trials,
                hits,
                frequency: if trials > 0 { hits as f64 / trials as f64 } else { 0.0 },
                ci_lo,
                ci_hi,
                small_trials: small.len() as u64,
                small_hits,
                small_ci_hi,
                lower_pass: None,
                upper_pass: None,
                empty: trials == 0,
            });
        }
    }

    let mut lower_ratios = Vec::new();
    let mut upper_ratios = Vec::new();
    // an envelope at or above 1 says nothing about a probability
    let informative = |env: f64| env > 0.0 && env < 1.0;
    for b in bins.iter().filter(|b| !b.empty) {
        let m = b.m as f64;
        if let Some(env) = envelope.lower(b.n_mean, m).filter(|&e| informative(e)) {
            if b.small_hits > 0 {
                lower_ratios.push(b.small_hits as f64 / b.small_trials as f64 / env);
            }
        }
        if let Some(env) = envelope.upper(b.n_mean, m).filter(|&e| informative(e)) {
            if b.hits > 0 {
                upper_ratios.push(b.frequency / env);
            }
        }
    }
    let c_lower = geometric_mean(&lower_ratios);
    let c_upper = geometric_mean(&upper_ratios);
    let band = settings.envelope_band;
    let mut pass = true;
    for b in bins.iter_mut().filter(|b| !b.empty) {
        let m = b.m as f64;
        if let (Some(c), Some(env)) = (c_lower, envelope.lower(b.n_mean, m)) {
            if b.small_trials > 0 && informative(env) {
                let ok = b.small_ci_hi >= (c / band * env).min(1.0);
                b.lower_pass = Some(ok);
                pass &= ok;
            }
        }
        if let (Some(c), Some(env)) = (c_upper, envelope.upper(b.n_mean, m).filter(|&e| informative(e))) {
            let ok = b.ci_lo <= c * band * env;
            b.upper_pass = Some(ok);
            pass &= ok;
        }
    }
    if envelope != EnvelopeKind::None {
        pass &= c_lower.is_some_and(|c| c > 0.0 && c.is_finite());
        pass &= c_upper.is_some_and(|c| c > 0.0 && c.is_finite());
    }

    let mut slopes = Vec::new();
    if envelope == EnvelopeKind::StableInfiniteVariance {
        for w in settings.n_edges.windows(2) {
            let row: Vec<&TailBin> =
                bins.iter().filter(|b| b.n_lo == w[0] && b.hits > 0).collect();
            let xs: Vec<f64> = row.iter().map(|b| (b.m as f64).ln()).collect();
            let ys: Vec<f64> = row.iter().map(|b| b.frequency.ln()).collect();
            if let Some(fit) = fit_line(&xs, &ys) {
                let ok = (fit.slope + 1.0).abs() <= settings.slope_tol + settings.sigma * fit.slope_stderr;
                pass &= ok;
                slopes.push(SlopeCheck {
                    n_lo: w[0],
                    n_hi: w[1],
                    slope: fit.slope,
                    stderr: fit.slope_stderr,
                    expected: -1.0,
                    pass: ok,
                });
            }
        }
    }
    let empty_bins = bins.iter().filter(|b| b.empty).count();
    Ok(IncrementTailReport {
        envelope,
        settings: settings.clone(),
        runs: trajs.len(),
        bins,
        c_lower,
        c_upper,
        slopes,
        empty_bins,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpCount {
    pub m: u64,
    /// Mean over runs of the number of steps with `Delta D >= m`.
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpCountReport {
    pub runs: usize,
    pub n_particles: u64,
    pub counts: Vec<JumpCount>,
    /// Log-log slope of mean count against `m` over nonzero counts.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// `-1/beta` with `beta = 2/(alpha-1)` for `alpha` in (2, 3).
    pub expected_slope: Option<f64>,
    pub tolerance: f64,
    pub pass: Option<bool>,
}

/// Expected log-log slope of jump counts, defined for `alpha` in (2, 3).
pub fn expected_jump_slope(law: &LawSpec) -> Option<f64> {
    match (law.kind, law.alpha) {
        (LawKind::PowerLaw, Some(a)) if a > 2.0 && a < 3.0 => Some((1.0 - a) / 2.0),
        _ => None,
    }
}

/// Mean counts of steps whose diameter increment is at least `m`.
pub fn jump_count_report(
    trajs: &[Trajectory],
    m_grid: &[u64],
    expected_slope: Option<f64>,
    tolerance: f64,
) -> Result<JumpCountReport> {
    if trajs.is_empty() {
        return Err(LdlaError::InsufficientData("insufficient data: empty ensemble".into()));
    }
    let mut grid = m_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let k = trajs.len() as f64;
    let counts: Vec<JumpCount> = grid
        .iter()
        .map(|&m| {
            let per: Vec<f64> = trajs
                .iter()
                .map(|t| t.records.iter().filter(|r| r.delta_d >= m).count() as f64)
                .collect();
            let mean = per.iter().sum::<f64>() / k;
            let var = if trajs.len() > 1 {
                per.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            JumpCount { m, mean, stderr: (var / k).sqrt() }
        })
        .collect();
    let used: Vec<&JumpCount> = counts.iter().filter(|c| c.mean > 0.0).collect();
    let xs: Vec<f64> = used.iter().map(|c| (c.m as f64).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|c| c.mean.ln()).collect();
    let fit = fit_line(&xs, &ys);
    let slope = fit.as_ref().map(|f| f.slope);
    let pass = match (slope, expected_slope) {
        (Some(s), Some(e)) => Some((s - e).abs() <= tolerance),
        _ => None,
    };
    Ok(JumpCountReport {
        runs: trajs.len(),
        n_particles: trajs.iter().map(|t| t.len() as u64).max().unwrap_or(0),
        counts,
        slope,
        slope_stderr: fit.map(|f| f.slope_stderr),
        expected_slope,
        tolerance,
        pass,
    })
}

/// Which reports a sweep produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportToggles {
    #[serde(default = "yes")]
    pub exponent: bool,
    #[serde(default = "yes")]
    pub increment_tail: bool,
    #[serde(default = "yes")]
    pub jump_count: bool,
}

fn yes() -> bool {
    true
}

impl Default for ReportToggles {
    fn default() -> Self {
        ReportToggles { exponent: true, increment_tail: true, jump_count: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub base: RunConfig,
    pub run_count: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub reports: ReportToggles,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Fit range; defaults to `[n/8, n]`.
    #[serde(default)]
    pub fit_range: Option<(u64, u64)>,
    /// Increment grid for the tail and jump reports; defaults to powers of two.
    #[serde(default)]
    pub m_grid: Option<Vec<u64>>,
    #[serde(default = "default_jump_tol")]
    pub jump_slope_tol: f64,
}

fn default_workers() -> usize {
    1
}

fn default_jump_tol() -> f64 {
    DEFAULT_JUMP_SLOPE_TOL
}

impl EnsembleSpec {
    pub fn new(base: RunConfig, run_count: u64, master_seed: u64) -> Self {
        EnsembleSpec {
            base,
            run_count,
            master_seed,
            out_dir: None,
            reports: ReportToggles::default(),
            workers: 1,
            fit_range: None,
            m_grid: None,
            jump_slope_tol: DEFAULT_JUMP_SLOPE_TOL,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: EnsembleSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_count == 0 {
            return Err(LdlaError::Config("run_count must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(LdlaError::Config("workers must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.fit_range {
            if lo < MIN_FIT_N || hi <= lo || hi > self.base.n_particles {
                return Err(LdlaError::Config(format!("invalid fit range [{lo}, {hi}]")));
            }
        }
        self.base.validate()
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run_count).map(|i| derive_seed(self.master_seed, i)).collect()
    }

    pub fn run_config(&self, index: u64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.seed = derive_seed(self.master_seed, index);
        cfg
    }

    pub fn resolved_fit_range(&self) -> (u64, u64) {
        self.fit_range.unwrap_or_else(|| default_fit_range(self.base.n_particles))
    }

    pub fn resolved_m_grid(&self) -> Vec<u64> {
        self.m_grid.clone().unwrap_or_else(|| (0..40).map(|k| 1u64 << k).collect())
    }

    pub fn tail_settings(&self) -> TailSettings {
        let mut s = TailSettings::dyadic(self.base.n_particles, 1, 1);
        s.m_grid = self.resolved_m_grid();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: u64,
    pub seed: u64,
    pub digest: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub config: EnsembleSpec,
    pub seeds: Vec<u64>,
    /// SHA-256 per artifact file name.
    pub digests: BTreeMap<String, String>,
    /// Elapsed seconds; excluded from the bundle digest.
    pub wallclock: f64,
    pub partial: bool,
}

impl Manifest {
    /// Digest of everything except the wall-clock time.
    pub fn bundle_digest(&self) -> String {
        let mut copy = self.clone();
        copy.wallclock = 0.0;
        sha256_hex(serde_json::to_string(&copy).expect("manifest serializes").as_bytes())
    }
}

/// Trajectories and reports of one ensemble.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub outcomes: Vec<RunOutcome>,
    pub trajectories: Vec<(u64, Trajectory)>,
    pub exponent: Option<ExponentEstimate>,
    pub increment_tail: Option<IncrementTailReport>,
    pub jump_count: Option<JumpCountReport>,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn partial(&self) -> bool {
        self.manifest.partial
    }

    /// Successful trajectories in run order.
    pub fn completed(&self) -> Vec<Trajectory> {
        self.trajectories.iter().map(|(_, t)| t.clone()).collect()
    }
}

/// Reports computed from stored trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub exponent: Option<ExponentEstimate>,
    pub increment_tail: Option<IncrementTailReport>,
    pub jump_count: Option<JumpCountReport>,
    pub errors: Vec<String>,
}

pub fn analyze(trajs: &[Trajectory], spec: &EnsembleSpec) -> Analysis {
    let mut errors = Vec::new();
    let (lo, hi) = spec.resolved_fit_range();
    let exponent = if spec.reports.exponent {
        fit_ensemble(trajs, lo, hi).map_err(|e| errors.push(format!("exponent: {e}"))).ok()
    } else {
        None
    };
    let increment_tail = if spec.reports.increment_tail {
        increment_tail_report(trajs, &spec.tail_settings(), EnvelopeKind::for_law(&spec.base.law))
            .map_err(|e| errors.push(format!("increment_tail: {e}")))
            .ok()
    } else {
        None
    };
    let jump_count = if spec.reports.jump_count {
        jump_count_report(
            trajs,
            &spec.resolved_m_grid(),
            expected_jump_slope(&spec.base.law),
            spec.jump_slope_tol,
        )
        .map_err(|e| errors.push(format!("jump_count: {e}")))
        .ok()
    } else {
        None
    };
    Analysis { exponent, increment_tail, jump_count, errors }
}

/// Runs the ensemble with the production engine.
pub fn sweep(spec: &EnsembleSpec) -> Result<Bundle> {
    sweep_with(spec, run_dla)
}

/// Runs the ensemble with a caller-supplied runner on a bounded worker pool.
pub fn sweep_with<F>(spec: &EnsembleSpec, runner: F) -> Result<Bundle>
where
    F: Fn(&RunConfig) -> Result<Trajectory> + Sync,
{
    spec.validate()?;
    let start = Instant::now();
    let count = spec.run_count as usize;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Trajectory>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..spec.workers.min(count) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let result = runner(&spec.run_config(i as u64));
                slots.lock().expect("no poisoned workers")[i] = Some(result);
            });
        }
    });
    let results = slots.into_inner().expect("no poisoned workers");

    let seeds = spec.seeds();
    let mut outcomes = Vec::with_capacity(count);
    let mut trajectories = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        let seed = seeds[i];
        match result.expect("every slot filled") {
            Ok(traj) => {
                outcomes.push(RunOutcome {
                    index: i as u64,
                    seed,
                    digest: Some(traj.digest()),
                    error: None,
                });
                trajectories.push((i as u64, traj));
            }
            Err(e) => outcomes.push(RunOutcome {
                index: i as u64,
                seed,
                digest: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let partial = trajectories.len() < count;
    let completed: Vec<Trajectory> = trajectories.iter().map(|(_, t)| t.clone()).collect();
    let analysis = analyze(&completed, spec);

    let mut bundle = Bundle {
        outcomes,
        trajectories,
        exponent: analysis.exponent,
        increment_tail: analysis.increment_tail,
        jump_count: analysis.jump_count,
        manifest: Manifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            config: spec.clone(),
            seeds,
            digests: BTreeMap::new(),
            wallclock: 0.0,
            partial,
        },
    };
    let files = bundle_files(&bundle)?;
    for (name, bytes) in &files {
        bundle.manifest.digests.insert(name.clone(), sha256_hex(bytes));
    }
    bundle.manifest.wallclock = start.elapsed().as_secs_f64();
    if let Some(dir) = &spec.out_dir {
        write_files(dir, &files)?;
        write_json(&dir.join("manifest.json"), &bundle.manifest)?;
    }
    Ok(bundle)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, json_bytes(value)?)?;
    Ok(())
}

/// Artifact files of a bundle other than the manifest.
fn bundle_files(bundle: &Bundle) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for (i, traj) in &bundle.trajectories {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        files.insert(format!("trajectory_{i:04}.csv"), buf);
    }
    files.insert("runs.json".into(), json_bytes(&bundle.outcomes)?);
    if let Some(e) = &bundle.exponent {
        files.insert("exponent.json".into(), json_bytes(e)?);
    }
    if let Some(r) = &bundle.increment_tail {
        files.insert("increment_tail.json".into(), json_bytes(r)?);
    }
    if let Some(r) = &bundle.jump_count {
        files.insert("jump_count.json".into(), json_bytes(r)?);
    }
    Ok(files)
}

fn write_files(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Reads every `trajectory_*.csv` in a bundle directory, in name order.
pub fn load_trajectories(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trajectory_") && n.ends_with(".csv"))
        })
        .collect();
    names.sort();
    names.iter().map(|p| Trajectory::read_csv(fs::File::open(p)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dla::{SamplerKind, StepRecord};

    fn synthetic(d: impl Fn(f64) -> f64, n: u64) -> Vec<f64> {
        (0..=n).map(|k| if k == 0 { 0.0 } else { d(k as f64) }).collect()
    }

    fn trajectory_from(diams: &[u64], seed: u64) -> Trajectory {
        let mut records = Vec::new();
        for n in 1..diams.len() {
            records.push(StepRecord {
                n: n as u64,
                d_n: diams[n],
                delta_d: diams[n] - diams[n - 1],
                min_pt: 0,
                max_pt: diams[n] as i64,
                added_x: diams[n] as i64,
                anchor_a: diams[n - 1] as i64,
                proposals: 0,
                relaunches: 0,
                walk_steps: 0,
            });
        }
        Trajectory { config_hash: String::new(), seed, records }
    }

    #[test]
    fn exact_power_law() {
        let d = synthetic(|n| n * n, 4096);
        let e = fit_exponent_series(&d, 512, 4096).unwrap();
        assert!((e.beta_hat - 2.0).abs() < 1e-9);
        assert!(e.r_squared > 0.999_999);
        assert!(e.n_min < e.n_max);
    }

    #[test]
    fn oscillating_power_law() {
        let d = synthetic(|n| n * n * (1.0 + 0.1 * n.ln().sin()), 4096);
        let e = fit_exponent_series(&d, 512, 4096).unwrap();
        assert!(e.beta_hat >= 1.9 && e.beta_hat <= 2.1, "{}", e.beta_hat);
        assert!((0.0..=1.0).contains(&e.r_squared));
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let d = synthetic(|n| n.powf(1.37) * (1.0 + 0.2 * (n / 7.0).sin()), 3000);
        let scaled: Vec<f64> = d.iter().map(|v| v * 1234.5).collect();
        let a = fit_exponent_series(&d, 375, 3000).unwrap();
        let b = fit_exponent_series(&scaled, 375, 3000).unwrap();
        assert!((a.beta_hat - b.beta_hat).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_ranges() {
        let d = synthetic(|n| n, 100);
        assert!(fit_exponent_series(&d, 16, 100).is_err());
        assert!(fit_exponent_series(&d, 64, 64).is_err());
        assert!(fit_exponent_series(&d, 64, 200).is_err());
    }

    #[test]
    fn geometric_grid_is_increasing_and_spans() {
        let g = geometric_grid(375, 3000, FIT_POINTS);
        assert_eq!(g[0], 375);
        assert_eq!(*g.last().unwrap(), 3000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 3.0);
        assert!(lo < 0.3 && hi > 0.3);
        let (lo0, hi0) = wilson_interval(0, 100, 3.0);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.1);
    }

    #[test]
    fn jump_counts_nonincreasing_and_empty_errors() {
        let t = trajectory_from(&[0, 1, 5, 6, 40, 41, 300], 1);
        let r = jump_count_report(&[t], &[64, 1, 4, 16], Some(-0.75), 0.2).unwrap();
        assert!(r.counts.windows(2).all(|w| w[0].mean >= w[1].mean));
        assert_eq!(r.counts[0].mean, 6.0);
        let err = jump_count_report(&[], &[1, 2], None, 0.2).unwrap_err();
        assert!(err.to_string().contains("insufficient data"));
    }

    #[test]
    fn single_column_tail_report() {
        let diams: Vec<u64> = (0..200u64).map(|n| n * n).collect();
        let t = trajectory_from(&diams, 3);
        let s = TailSettings {
            m_grid: vec![100],
            n_edges: vec![32, 64, 128, 200],
            sigma: 3.0,
            envelope_band: 10.0,
            slope_tol: 0.3,
        };
        let r = increment_tail_report(&[t], &s, EnvelopeKind::Z2).unwrap();
        assert_eq!(r.bins.len(), 3);
        assert!(r.bins.iter().all(|b| b.m == 100));
        assert_eq!(r.empty_bins, 0);
    }

    #[test]
    fn empty_bins_are_flagged_not_failed() {
        let t = trajectory_from(&(0..50u64).collect::<Vec<_>>(), 3);
        let s = TailSettings {
            m_grid: vec![1, 2],
            n_edges: vec![32, 64, 128],
            sigma: 3.0,
            envelope_band: 10.0,
            slope_tol: 0.3,
        };
        let r = increment_tail_report(&[t], &s, EnvelopeKind::None).unwrap();
        assert_eq!(r.empty_bins, 2);
        assert!(r.pass);
    }

    fn tiny_spec(runs: u64) -> EnsembleSpec {
        let mut base = RunConfig::new(LawSpec::power_law(2.5, 0.2), SamplerKind::Exact, 40, 0);
        base.kernel_table = 1 << 12;
        let mut spec = EnsembleSpec::new(base, runs, 99);
        spec.workers = 2;
        spec.fit_range = Some((32, 40));
        spec.m_grid = Some(vec![1, 4, 16, 64]);
        spec
    }

    #[test]
    fn sweep_is_deterministic_with_distinct_seeds() {
        let spec = tiny_spec(4);
        let seeds = spec.seeds();
        let mut uniq = seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), seeds.len());
        let a = sweep(&spec).unwrap();
        let b = sweep(&spec).unwrap();
        assert!(!a.partial());
        assert_eq!(a.manifest.digests, b.manifest.digests);
        assert_eq!(a.manifest.bundle_digest(), b.manifest.bundle_digest());
    }

    #[test]
    fn injected_failure_yields_partial_bundle() {
        let spec = tiny_spec(4);
        let victim = spec.seeds()[2];
        let bundle = sweep_with(&spec, |cfg| {
            if cfg.seed == victim {
                Err(LdlaError::Config("injected".into()))
            } else {
                run_dla(cfg)
            }
        })
        .unwrap();
        assert!(bundle.partial());
        assert_eq!(bundle.trajectories.len(), 3);
        assert!(bundle.outcomes[2].error.as_deref().unwrap().contains("injected"));
        assert!(bundle.exponent.is_some());
    }

    #[test]
    fn bundle_round_trips_through_disk() {
        let dir = std::env::temp_dir().join(format!("ldla-harness-{}", std::process::id()));
        let mut spec = tiny_spec(2);
        spec.out_dir = Some(dir.clone());
        let bundle = sweep(&spec).unwrap();
        let loaded = load_trajectories(&dir).unwrap();
        assert_eq!(loaded.len(), 2);
        for (l, (_, t)) in loaded.iter().zip(&bundle.trajectories) {
            assert_eq!(l.digest(), t.digest());
        }
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.digests, bundle.manifest.digests);
        let again = analyze(&loaded, &spec);
        assert_eq!(again.exponent, bundle.exponent);
        fs::remove_dir_all(&dir).ok();
    }
}
