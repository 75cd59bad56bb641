//! Special functions used by the step laws and the potential kernel:
//! Riemann zeta on the real line, Hurwitz tail sums and Gauss-Legendre rules.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

/// B_2, B_4, ..., B_26.
const BERNOULLI_EVEN: [f64; 13] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
];

const EM_START: u64 = 16;

/// Euler-Maclaurin tail `sum_{k >= m} k^{-s}` for real `s != 1` with `m` large enough
/// that the asymptotic correction terms are tiny. Valid for `s > 1`, and as the
/// analytic continuation of the zeta remainder for other `s`.
fn em_tail(s: f64, m: f64) -> f64 {
    let mut total = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s);
    // (s)(s+1)...(s+2j-2) / (2j)! * m^{-s-2j+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut mpow = m.powf(-s - 1.0);
    let inv_m2 = 1.0 / (m * m);
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b / fact * rising * mpow;
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        let jj = (j + 1) as f64;
        rising *= (s + 2.0 * jj - 1.0) * (s + 2.0 * jj);
        fact *= (2.0 * jj + 1.0) * (2.0 * jj + 2.0);
        mpow *= inv_m2;
    }
    total
}

/// Riemann zeta function for real `s != 1`.
pub fn zeta(s: f64) -> f64 {
    if s == 1.0 {
        return f64::INFINITY;
    }
    if s == 0.0 {
        return -0.5;
    }
    if s < -0.5 {
        // Functional equation; trivial zeros at negative even integers.
        if s.fract() == 0.0 && (s as i64) % 2 == 0 {
            return 0.0;
        }
        let t = 1.0 - s;
        let sin = (PI * s / 2.0).sin();
        let log_mag = s * 2f64.ln() + (s - 1.0) * PI.ln() + ln_gamma(t);
        return sin.signum() * log_mag.exp() * sin.abs() * zeta(t);
    }
    if s > 60.0 {
        return 1.0 + 2f64.powf(-s) + 3f64.powf(-s);
    }
    let mut head = 0.0;
    for k in 1..EM_START {
        head += (k as f64).powf(-s);
    }
    head + em_tail(s, EM_START as f64)
}

/// `sum_{k > n} k^{-s}` for `s > 1`.
pub fn power_tail(s: f64, n: u64) -> f64 {
    debug_assert!(s > 1.0);
    let start = n + 1;
    if start >= EM_START {
        return em_tail(s, start as f64);
    }
    let mut head = 0.0;
    for k in start..EM_START {
        head += (k as f64).powf(-s);
    }
    head + em_tail(s, EM_START as f64)
}

/// Gamma function (re-exported for callers that need negative arguments).
pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}

/// Digamma function.
pub fn digamma(x: f64) -> f64 {
    if x >= 1e3 {
        // asymptotic series; the next term is below 1e-19
        let inv2 = 1.0 / (x * x);
        return x.ln() - 0.5 / x - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    }
    statrs::function::gamma::digamma(x)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integral of a smooth decaying `f` over `[a, inf)` by Gauss-Legendre on
/// geometrically growing panels. Stops once a panel contributes below `rel_tol`
/// of the running total for several consecutive panels.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> f64 {
    let (xs, ws) = gauss_legendre(20);
    let mut lo = a;
    let mut width = a.max(1.0);
    let mut total = 0.0;
    let mut quiet = 0;
    for _ in 0..4000 {
        let hi = lo + width;
        let half = 0.5 * width;
        let mid = lo + half;
        let mut panel = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            panel += w * f(mid + half * x);
        }
        panel *= half;
        total += panel;
        if panel.abs() <= rel_tol * total.abs() {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-14);
        assert!((zeta(-3.0) - 1.0 / 120.0).abs() < 1e-14);
        assert!((zeta(0.5) + 1.4603545088095868).abs() < 1e-12);
        assert!((zeta(2.5) - 1.3414872572509171).abs() < 1e-13);
        assert_eq!(zeta(-4.0), 0.0);
        assert!((zeta(-0.5) + 0.20788622497735457).abs() < 1e-12);
    }

    #[test]
    fn zeta_matches_direct_sum_with_tail() {
        let s = 3.3;
        let direct: f64 = (1..200_000u64).rev().map(|k| (k as f64).powf(-s)).sum();
        let tail = power_tail(s, 199_999);
        assert!((direct + tail - zeta(s)).abs() < 1e-14);
    }

    #[test]
    fn power_tail_small_start() {
        let s = 2.5;
        let direct: f64 = (4..2_000_000u64).rev().map(|k| (k as f64).powf(-s)).sum();
        let approx_rest = power_tail(s, 1_999_999);
        assert!((power_tail(s, 3) - direct - approx_rest).abs() < 1e-14);
    }

    #[test]
    fn digamma_asymptotic_branch_is_continuous() {
        for x in [999.5, 1e3, 1e3 + 0.5, 4e3] {
            let exact = statrs::function::gamma::digamma(x);
            assert!((digamma(x) - exact).abs() < 1e-13 * exact.abs());
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((s - 2.0 / 31.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn improper_integral() {
        let v = integrate_to_infinity(|x| x.powf(-2.5), 10.0, 1e-15);
        assert!((v - 10f64.powf(-1.5) / 1.5).abs() < 1e-14);
    }
}
