//! The potential kernel `a(n) = sum_t (P_0(R_t = 0) - P_0(R_t = n))`, tabulated by
//! Fourier quadrature and extrapolated by an asymptotic fit.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LdlaError, Result};
use crate::law::{LawKind, StepLaw};
use crate::special::{digamma, gauss_legendre, integrate_to_infinity};

pub const DEFAULT_TABLE_SIZE: u64 = 1 << 16;
pub const MAX_TABLE_SIZE: u64 = 1 << 20;
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-9;
/// Extrapolation is trusted up to this multiple of the table size.
pub const EXTRAPOLATION_FACTOR: u64 = 1000;
pub const MAX_FIT_RESIDUAL: f64 = 0.05;

const GL_ORDER: usize = 16;
/// Entries below this are computed one at a time.
const DIRECT_PREFIX: u64 = 256;
const GRADED_LEVELS: i32 = 60;
const TAYLOR_TERMS: usize = 40;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Gauss-Legendre nodes mapped to `[0, 1]`.
fn unit_rule() -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(GL_ORDER);
    (
        x.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        w.iter().map(|w| 0.5 * w).collect(),
    )
}

/// Near-origin panel `[0, h]` handled through the moments
/// `J_p = h^{-2p} * int_0^h zeta^{2p} / (1 - phi(zeta)) d zeta`.
struct OriginPanel {
    moments: Vec<f64>,
}

impl OriginPanel {
    fn new(law: &StepLaw, h: f64, t: &[f64], w: &[f64]) -> Self {
        let mut moments = vec![0.0; TAYLOR_TERMS];
        let (_, lead_exp) = law.small_frequency_leading();
        for level in 0..GRADED_LEVELS {
            let hi = h * 2f64.powi(-level);
            let lo = 0.5 * hi;
            let width = hi - lo;
            for (ti, wi) in t.iter().zip(w) {
                let z = lo + width * ti;
                let g = wi * width / law.one_minus_char(z);
                let r2 = (z / h) * (z / h);
                let mut rp = r2;
                for m in moments.iter_mut() {
                    *m += g * rp;
                    rp *= r2;
                }
            }
        }
        // below the last level g(z) z^e is effectively constant
        let zmin = h * 2f64.powi(-GRADED_LEVELS);
        let ge = zmin.powf(lead_exp) / law.one_minus_char(zmin);
        let r = zmin / h;
        for (p, m) in moments.iter_mut().enumerate() {
            let k = 2.0 * (p + 1) as f64;
            *m += ge * zmin.powf(1.0 - lead_exp) * r.powf(k) / (k + 1.0 - lead_exp);
        }
        OriginPanel { moments }
    }

    /// `int_0^h (1 - cos(n zeta)) / (1 - phi(zeta)) d zeta` with `x = n h`.
    fn value(&self, x: f64) -> f64 {
        let x2 = x * x;
        let mut coef = 1.0;
        let mut total = 0.0;
        for (p, m) in self.moments.iter().enumerate() {
            let k = 2 * (p + 1);
            coef *= x2 / ((k - 1) * k) as f64;
            let term = coef * m;
            if p % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
            if term.abs() < 1e-18 * total.abs() {
                break;
            }
        }
        total
    }
}

/// `a(n)` with `panels` uniform panels on `[0, pi]` and direct cosine sums.
fn quadrature_single(law: &StepLaw, n: u64, panels: u64) -> f64 {
    let (t, w) = unit_rule();
    let h = PI / panels as f64;
    let origin = OriginPanel::new(law, h, &t, &w);
    let nf = n as f64;
    let mut total = origin.value(nf * h);
    for k in 1..panels {
        let mut panel = 0.0;
        for (ti, wi) in t.iter().zip(&w) {
            let z = (k as f64 + ti) * h;
            let s = (0.5 * nf * z).sin();
            panel += wi * 2.0 * s * s / law.one_minus_char(z);
        }
        total += panel * h;
    }
    total / PI
}

/// `a(n) = (2 pi)^{-1} int_{-pi}^{pi} (1 - cos n zeta) / (1 - phi(zeta)) d zeta`,
/// refined by panel doubling until two successive values agree within `tol`.
pub fn compute_a(law: &StepLaw, n: i64, tol: f64) -> Result<f64> {
    let n = n.unsigned_abs();
    if n == 0 {
        return Ok(0.0);
    }
    if !(tol > 0.0) {
        return Err(LdlaError::Quadrature(format!("tolerance must be positive, got {tol}")));
    }
    let mut panels = (2 * n).next_power_of_two().max(32);
    let mut prev = quadrature_single(law, n, panels);
    while panels < 1 << 26 {
        panels *= 2;
        let next = quadrature_single(law, n, panels);
        if (next - prev).abs() <= tol {
            if !next.is_finite() {
                break;
            }
            return Ok(next);
        }
        prev = next;
    }
    Err(LdlaError::Quadrature(format!(
        "a({n}) did not settle to {tol:e}; the law may be periodic"
    )))
}

/// `a(0..=n_max)` in one pass: uniform panels are summed with one FFT per
/// Gauss node offset.
fn quadrature_table(law: &StepLaw, n_max: u64, panels: u64) -> Vec<f64> {
    let (t, w) = unit_rule();
    let h = PI / panels as f64;
    let len = 2 * panels as usize;
    let origin = OriginPanel::new(law, h, &t, &w);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let count = n_max as usize + 1;
    let mut cos_sum = vec![0.0; count];
    let mut plain_sum = 0.0;
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (ti, wi) in t.iter().zip(&w) {
        for v in buf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for k in 1..panels as usize {
            let z = (k as f64 + ti) * h;
            let g = wi * h / law.one_minus_char(z);
            buf[k] = Complex::new(g, 0.0);
            plain_sum += g;
        }
        fft.process(&mut buf);
        // forward transform carries e^{-i n k h}; conjugate back to e^{+i}
        for (n, c) in cos_sum.iter_mut().enumerate() {
            let theta = n as f64 * ti * h;
            let g = buf[n % len];
            *c += theta.cos() * g.re + theta.sin() * g.im;
        }
    }
    let mut table = vec![0.0; count];
    for n in 1..count {
        table[n] = (origin.value(n as f64 * h) + plain_sum - cos_sum[n]) / PI;
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "term", content = "exponent")]
pub enum BasisTerm {
    /// `n^e`
    Pow(f64),
    /// `n^e ln n`
    PowLog(f64),
    /// `n^e / ln n`
    PowInvLog(f64),
    /// `n^e / ln^2 n`
    PowInvLog2(f64),
}

impl BasisTerm {
    fn exponent(&self) -> f64 {
        match *self {
            BasisTerm::Pow(e)
            | BasisTerm::PowLog(e)
            | BasisTerm::PowInvLog(e)
            | BasisTerm::PowInvLog2(e) => e,
        }
    }

    fn with_power(&self, power: f64, ln: f64) -> f64 {
        match *self {
            BasisTerm::Pow(_) => power,
            BasisTerm::PowLog(_) => power * ln,
            BasisTerm::PowInvLog(_) => power / ln,
            BasisTerm::PowInvLog2(_) => power / (ln * ln),
        }
    }

    fn eval(&self, n: f64) -> f64 {
        self.with_power(n.powf(self.exponent()), n.ln())
    }
}

/// Evaluates `sum c_j b_j(n)` with one logarithm and at most one exponential
/// per distinct exponent magnitude.
fn eval_basis(basis: &[BasisTerm], coefs: &[f64], n: f64) -> f64 {
    let ln = n.ln();
    let mut seen: [(f64, f64); 8] = [(f64::NAN, 0.0); 8];
    let mut used = 0;
    let mut power = |e: f64| -> f64 {
        if e == 0.0 {
            return 1.0;
        }
        if e == 1.0 {
            return n;
        }
        if e == -1.0 {
            return 1.0 / n;
        }
        for &(s, v) in &seen[..used] {
            if s == e {
                return v;
            }
            if s == -e {
                return 1.0 / v;
            }
        }
        let v = (e * ln).exp();
        if used < seen.len() {
            seen[used] = (e, v);
            used += 1;
        }
        v
    };
    basis
        .iter()
        .zip(coefs)
        .map(|(b, c)| c * b.with_power(power(b.exponent()), ln))
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum TailForm {
    /// Least-squares fit on the top decade of the table.
    Fitted {
        basis: Vec<BasisTerm>,
        coefs: Vec<f64>,
    },
    /// `a(n) = (2/pi)(psi(n + 1/2) + gamma + 2 ln 2)`.
    PlanarLine,
    /// `a(n) = n / (1 - h)`.
    Linear { slope: f64 },
}

/// Asymptotic model of the kernel beyond the table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailModel {
    /// Leading amplitude predicted from the small-frequency behaviour of `1 - phi`.
    pub amplitude: f64,
    /// Growth exponent of the leading term (0 means logarithmic).
    pub exponent: f64,
    pub form: TailForm,
    /// Max relative residual of the fit on the top decade of the table.
    pub max_rel_residual: f64,
}

impl TailModel {
    fn eval(&self, n: f64) -> f64 {
        match &self.form {
            TailForm::Fitted { basis, coefs } => eval_basis(basis, coefs, n),
            TailForm::PlanarLine => {
                2.0 / PI * (digamma(n + 0.5) + EULER_GAMMA + 2.0 * 2f64.ln())
            }
            TailForm::Linear { slope } => slope * n,
        }
    }
}

/// Expansion exponents of `a(n)` for the pure power law.
fn power_law_basis(alpha: f64) -> Vec<BasisTerm> {
    const CUT: f64 = -0.9;
    let mut basis = Vec::new();
    if (alpha - 1.0).abs() < 1e-12 {
        return vec![
            BasisTerm::PowLog(0.0),
            BasisTerm::Pow(0.0),
            BasisTerm::PowLog(-1.0),
            BasisTerm::Pow(-1.0),
        ];
    }
    if (alpha - 2.0).abs() < 1e-12 {
        return vec![
            BasisTerm::PowInvLog(1.0),
            BasisTerm::PowInvLog2(1.0),
            BasisTerm::PowLog(0.0),
            BasisTerm::Pow(0.0),
        ];
    }
    let push = |e: f64, basis: &mut Vec<BasisTerm>| {
        if e.abs() < 1e-9 {
            basis.push(BasisTerm::PowLog(0.0));
        } else {
            basis.push(BasisTerm::Pow(e));
        }
    };
    if alpha < 2.0 {
        let mut j = 1.0;
        loop {
            let e = j * (alpha - 2.0) + 1.0;
            if e <= CUT {
                break;
            }
            push(e, &mut basis);
            j += 1.0;
        }
    } else {
        push(1.0, &mut basis);
        let mut j = 1.0;
        loop {
            let e = 2.0 * j + 1.0 - j * alpha;
            if e <= CUT {
                break;
            }
            push(e, &mut basis);
            j += 1.0;
        }
        if alpha.fract() == 0.0 {
            basis.push(BasisTerm::Pow(-1.0));
            basis.push(BasisTerm::PowLog(-1.0));
        }
    }
    basis.push(BasisTerm::Pow(0.0));
    basis
}

/// Weighted least squares `sum_j c_j b_j(n) ~ y(n)` in relative error.
fn fit_basis(basis: &[BasisTerm], ns: &[f64], ys: &[f64]) -> Vec<f64> {
    let rows = ns.len();
    let cols = basis.len();
    let mut x = DMatrix::<f64>::zeros(rows, cols);
    let b = DVector::<f64>::from_element(rows, 1.0);
    for (r, (n, y)) in ns.iter().zip(ys).enumerate() {
        for (c, term) in basis.iter().enumerate() {
            x[(r, c)] = term.eval(*n) / y;
        }
    }
    let mut scale = vec![1.0; cols];
    for c in 0..cols {
        let norm = x.column(c).norm();
        if norm > 0.0 {
            scale[c] = norm;
            x.column_mut(c).scale_mut(1.0 / norm);
        }
    }
    let svd = x.svd(true, true);
    let sol = svd
        .solve(&b, 1e-14)
        .unwrap_or_else(|_| DVector::from_element(cols, 0.0));
    (0..cols).map(|c| sol[c] / scale[c]).collect()
}

/// Tabulated potential kernel with an asymptotic tail.
#[derive(Debug, Clone)]
pub struct PotentialKernel {
    law: StepLaw,
    table: Vec<f64>,
    n_table: u64,
    tail: TailModel,
    quadrature_tol: f64,
    quadrature_error: f64,
    monotone_from: u64,
    /// `prefix_max[i] = max a(0..=i)`.
    prefix_max: Vec<f64>,
}

/// Whether a value came from the table or from the tail model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSource {
    Table,
    Extrapolated,
}

impl PotentialKernel {
    /// Tabulates `a(0..=n_table)` and fits the tail on the top decade.
    pub fn build(law: &StepLaw, n_table: u64, tol: f64) -> Result<Self> {
        if n_table < 64 {
            return Err(LdlaError::Quadrature("table must hold at least 64 entries".into()));
        }
        if n_table > MAX_TABLE_SIZE {
            return Err(LdlaError::Quadrature(format!(
                "table size {n_table} exceeds the cap {MAX_TABLE_SIZE}"
            )));
        }
        let panels = 2 * n_table.next_power_of_two();
        let coarse = quadrature_table(law, n_table, panels);
        let mut table = quadrature_table(law, n_table, 2 * panels);
        // error is measured relative to max(1, a(n))
        let quadrature_error = coarse
            .iter()
            .zip(&table)
            .skip(DIRECT_PREFIX as usize + 1)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        // the transform loses absolute precision to cancellation at small n
        for n in 1..=DIRECT_PREFIX.min(n_table) {
            table[n as usize] = compute_a(law, n as i64, 0.1 * tol)?;
        }
        if !(quadrature_error <= tol) || table.iter().any(|v| !v.is_finite()) {
            return Err(LdlaError::Quadrature(format!(
                "table quadrature error {quadrature_error:.3e} exceeds {tol:.3e}"
            )));
        }
        let tail = Self::fit_tail(law, &table)?;
        let mut monotone_from = 0;
        for i in 1..table.len() {
            if table[i] < table[i - 1] {
                monotone_from = i as u64;
            }
        }
        let mut prefix_max = Vec::with_capacity(table.len());
        let mut m = 0.0f64;
        for v in &table {
            m = m.max(*v);
            prefix_max.push(m);
        }
        Ok(PotentialKernel {
            law: law.clone(),
            table,
            n_table,
            tail,
            quadrature_tol: tol,
            quadrature_error,
            monotone_from,
            prefix_max,
        })
    }

    fn fit_tail(law: &StepLaw, table: &[f64]) -> Result<TailModel> {
        let n_top = (table.len() - 1) as f64;
        let (amp, e) = law.small_frequency_leading();
        let alpha = law.alpha();
        let (amplitude, exponent, form) = match law.kind() {
            LawKind::Z2Restricted => (2.0 / PI, 0.0, TailForm::PlanarLine),
            LawKind::LazyNearestNeighbor => {
                let slope = 1.0 / (1.0 - law.holding_prob());
                (slope, 1.0, TailForm::Linear { slope })
            }
            LawKind::Table => (
                1.0 / law.sigma_sq().unwrap_or(f64::NAN),
                1.0,
                TailForm::Fitted {
                    basis: vec![BasisTerm::Pow(1.0), BasisTerm::Pow(0.0)],
                    coefs: Vec::new(),
                },
            ),
            LawKind::PowerLaw => {
                let amplitude = if alpha < 2.0 && e < 2.0 {
                    let g = crate::special::gamma_fn(1.0 - alpha);
                    -g * (PI * (1.0 - alpha) / 2.0).cos() / (PI * amp)
                } else {
                    law.sigma_sq().map(|s| 1.0 / s).unwrap_or(f64::NAN)
                };
                let exponent = if alpha < 2.0 { alpha - 1.0 } else { 1.0 };
                (
                    amplitude,
                    exponent,
                    TailForm::Fitted {
                        basis: power_law_basis(alpha),
                        coefs: Vec::new(),
                    },
                )
            }
        };
        // geometric sample of the top decade
        let lo = (n_top / 10.0).max(8.0);
        let samples = 240;
        let mut ns = Vec::with_capacity(samples);
        let mut ys = Vec::with_capacity(samples);
        for i in 0..samples {
            let n = (lo * (n_top / lo).powf(i as f64 / (samples - 1) as f64)).round();
            if ns.last() != Some(&n) {
                ns.push(n);
                ys.push(table[n as usize]);
            }
        }
        let form = match form {
            TailForm::Fitted { basis, .. } => {
                let coefs = fit_basis(&basis, &ns, &ys);
                TailForm::Fitted { basis, coefs }
            }
            other => other,
        };
        let mut model = TailModel {
            amplitude,
            exponent,
            form,
            max_rel_residual: 0.0,
        };
        let start = lo as usize;
        let mut worst = 0.0f64;
        for (n, y) in table.iter().enumerate().skip(start) {
            worst = worst.max((model.eval(n as f64) / y - 1.0).abs());
        }
        model.max_rel_residual = worst;
        if !(worst <= MAX_FIT_RESIDUAL) {
            return Err(LdlaError::TailFit {
                residual: worst,
                limit: MAX_FIT_RESIDUAL,
            });
        }
        Ok(model)
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    pub fn n_table(&self) -> u64 {
        self.n_table
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn tail_model(&self) -> &TailModel {
        &self.tail
    }

    pub fn quadrature_tol(&self) -> f64 {
        self.quadrature_tol
    }

    /// Estimated quadrature error of the table, relative to `max(1, a(n))`.
    pub fn quadrature_error(&self) -> f64 {
        self.quadrature_error
    }

    /// Beyond this index the table is nondecreasing.
    pub fn monotone_from(&self) -> u64 {
        self.monotone_from
    }

    /// Largest `|n|` at which the extrapolation is trusted.
    pub fn reliable_range(&self) -> u64 {
        self.n_table.saturating_mul(EXTRAPOLATION_FACTOR)
    }

    /// `a(n)`.
    #[inline]
    pub fn eval(&self, n: i64) -> f64 {
        let m = n.unsigned_abs();
        if m <= self.n_table {
            return self.table[m as usize];
        }
        self.eval_beyond(m as f64)
    }

    /// `a` at a real argument beyond the table (used by envelopes).
    pub fn eval_real(&self, x: f64) -> f64 {
        let x = x.abs();
        if x <= self.n_table as f64 {
            return self.table[x.round() as usize];
        }
        self.eval_beyond(x)
    }

    fn eval_beyond(&self, x: f64) -> f64 {
        self.tail.eval(x).max(self.table[self.n_table as usize])
    }

    /// `a(n)` together with where it came from.
    pub fn eval_flagged(&self, n: i64) -> (f64, KernelSource) {
        let src = if n.unsigned_abs() <= self.n_table {
            KernelSource::Table
        } else {
            KernelSource::Extrapolated
        };
        (self.eval(n), src)
    }

    /// Upper bound of `a` over `|n| in [lo, hi]`.
    pub fn upper_on(&self, lo: u64, hi: u64) -> f64 {
        debug_assert!(lo <= hi);
        if hi <= self.n_table {
            if lo >= self.monotone_from {
                self.table[hi as usize]
            } else {
                self.prefix_max[hi as usize]
            }
        } else if lo >= self.monotone_from {
            self.eval_real(hi as f64)
        } else {
            self.prefix_max[self.n_table as usize].max(self.eval_real(hi as f64))
        }
    }

    /// Lower bound of `a` over `|n| in [lo, hi]` (requires `lo >= monotone_from`
    /// for tightness; otherwise falls back to a table scan).
    pub fn lower_on(&self, lo: u64, hi: u64) -> f64 {
        if lo >= self.monotone_from {
            return self.eval_real(lo as f64);
        }
        let top = hi.min(self.n_table) as usize;
        let mut m = f64::INFINITY;
        for v in &self.table[lo as usize..=top] {
            m = m.min(*v);
        }
        if hi > self.n_table {
            m = m.min(self.table[self.n_table as usize]);
        }
        m
    }

    /// `sum_k pmf(k) a(k) - 1`, which vanishes for the exact kernel.
    pub fn harmonicity_defect(&self) -> f64 {
        let mut total = 0.0;
        for k in (1..=self.n_table).rev() {
            total += 2.0 * self.law.pmf(k as i64) * self.table[k as usize];
        }
        if !self.law.is_bounded() {
            let start = self.n_table as f64 + 0.5;
            total += integrate_to_infinity(
                |x| 2.0 * self.law.pmf_real(x) * self.eval_beyond(x),
                start,
                1e-14,
            );
        }
        total - 1.0
    }

    /// Writes `n, a_n, extrapolated_flag` rows: the whole table, then a
    /// geometric sample of the extrapolated range.
    pub fn write_csv<W: Write>(&self, out: W, extrapolated_points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "a_n", "extrapolated_flag"])?;
        for (n, a) in self.table.iter().enumerate() {
            w.write_record([n.to_string(), format!("{a:.17e}"), "0".to_string()])?;
        }
        let lo = self.n_table as f64;
        let hi = self.reliable_range() as f64;
        let mut last = self.n_table;
        for i in 1..=extrapolated_points {
            let n = (lo * (hi / lo).powf(i as f64 / extrapolated_points as f64)).round() as u64;
            if n > last {
                last = n;
                w.write_record([
                    n.to_string(),
                    format!("{:.17e}", self.eval(n as i64)),
                    "1".to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Summary for reports and manifests.
    pub fn summary(&self) -> KernelSummary {
        KernelSummary {
            law: self.law.spec().clone(),
            n_table: self.n_table,
            quadrature_tol: self.quadrature_tol,
            quadrature_error: self.quadrature_error,
            monotone_from: self.monotone_from,
            tail: self.tail.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSummary {
    pub law: crate::law::LawSpec,
    pub n_table: u64,
    pub quadrature_tol: f64,
    pub quadrature_error: f64,
    pub monotone_from: u64,
    pub tail: TailModel,
}

type CacheKey = (String, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<PotentialKernel>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<PotentialKernel>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Process-wide shared kernel for `(law, n_table)`, built on first use.
pub fn shared_kernel(law: &StepLaw, n_table: u64) -> Result<Arc<PotentialKernel>> {
    let key = (serde_json::to_string(law.spec())?, n_table);
    if let Some(k) = cache().lock().expect("kernel cache poisoned").get(&key) {
        return Ok(Arc::clone(k));
    }
    let built = Arc::new(PotentialKernel::build(law, n_table, DEFAULT_QUADRATURE_TOL)?);
    let mut guard = cache().lock().expect("kernel cache poisoned");
    Ok(Arc::clone(guard.entry(key).or_insert(built)))
}

/// Smallest table size (a power-of-two multiple of `base`, capped) whose
/// trusted range covers `diameter`.
pub fn table_size_for(base: u64, diameter: u64) -> u64 {
    let mut n = base.max(64);
    while n < MAX_TABLE_SIZE && n.saturating_mul(EXTRAPOLATION_FACTOR) < diameter {
        n *= 2;
    }
    n.min(MAX_TABLE_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lazy_closed_form() {
        let law = StepLaw::lazy(0.5).unwrap();
        assert_eq!(compute_a(&law, 0, 1e-9).unwrap(), 0.0);
        for n in [1i64, 2, 7, 33, 100] {
            let v = compute_a(&law, n, 1e-10).unwrap();
            assert!((v - 2.0 * n as f64).abs() < 1e-8, "n={n} v={v}");
        }
        let k = PotentialKernel::build(&law, 1024, 1e-9).unwrap();
        for n in 0..=1024 {
            assert!((k.eval(n) - 2.0 * n as f64).abs() < 1e-7);
        }
        assert!((k.eval(5000) - 10000.0).abs() < 1e-9);
    }

    #[test]
    fn planar_line_closed_form() {
        let law = StepLaw::z2_restricted().unwrap();
        let k = PotentialKernel::build(&law, 4096, 1e-9).unwrap();
        for n in [1u64, 2, 10, 100, 4096] {
            let closed: f64 = (1..=n).map(|j| 4.0 / PI / (2 * j - 1) as f64).sum();
            assert!((k.eval(n as i64) - closed).abs() < 1e-8, "n={n}");
        }
        let far = k.eval(1 << 20);
        let closed = 2.0 / PI * (digamma((1u64 << 20) as f64 + 0.5) + EULER_GAMMA + 2.0 * 2f64.ln());
        assert!((far - closed).abs() < 1e-10);
    }

    #[test]
    fn table_agrees_with_single_evaluations() {
        let law = StepLaw::power_law(1.5, 0.2).unwrap();
        let k = PotentialKernel::build(&law, 2048, 1e-9).unwrap();
        for n in [1i64, 3, 64, 999, 2048] {
            let v = compute_a(&law, n, 1e-10).unwrap();
            assert!((k.eval(n) - v).abs() < 1e-8, "n={n}");
        }
        assert!((k.eval(1) - 1.02316).abs() < 1e-4);
    }

    #[test]
    fn evenness_and_positivity() {
        let law = StepLaw::power_law(1.2, 0.2).unwrap();
        let k = PotentialKernel::build(&law, 512, 1e-9).unwrap();
        assert_eq!(k.eval(0), 0.0);
        for n in 1..600i64 {
            assert_eq!(k.eval(n), k.eval(-n));
            assert!(k.eval(n) > 0.0);
        }
    }

    #[test]
    fn harmonicity_for_several_laws() {
        let laws = [
            StepLaw::power_law(1.5, 0.2).unwrap(),
            StepLaw::power_law(1.2, 0.2).unwrap(),
            StepLaw::power_law(2.5, 0.2).unwrap(),
            StepLaw::power_law(4.0, 0.2).unwrap(),
            StepLaw::z2_restricted().unwrap(),
            StepLaw::lazy(0.5).unwrap(),
            StepLaw::table(0.1, vec![0.3, 0.1, 0.05]).unwrap(),
        ];
        for law in &laws {
            let k = PotentialKernel::build(law, 4096, 1e-9).unwrap();
            let d = k.harmonicity_defect();
            assert!(d.abs() < 1e-8, "{:?}: defect {d:e}", law.spec());
        }
    }

    #[test]
    fn extrapolation_matches_spot_quadrature() {
        for alpha in [1.5, 1.2, 2.5, 4.0] {
            let law = StepLaw::power_law(alpha, 0.2).unwrap();
            let k = PotentialKernel::build(&law, 2048, 1e-9).unwrap();
            let spot = compute_a(&law, 8192, 1e-8).unwrap();
            let ext = k.eval(8192);
            assert!((ext / spot - 1.0).abs() < 1e-4, "alpha={alpha} ext={ext} spot={spot}");
        }
    }

    #[test]
    fn table_size_selection() {
        assert_eq!(table_size_for(1 << 16, 10), 1 << 16);
        assert_eq!(table_size_for(1 << 10, 2_000_000), 1 << 11);
        assert_eq!(table_size_for(1 << 16, u64::MAX), MAX_TABLE_SIZE);
    }
}
