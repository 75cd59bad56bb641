//! Oracle suite comparing the primary stack against independent computations.

use std::sync::Arc;

use num_bigint::BigInt;

use crate::error::Result;
use crate::gluing::{mu_at, GluingDistribution, NuSampler};
use crate::hitting::{two_point_escape, HittingSystem};
use crate::kernel::{compute_a, shared_kernel, PotentialKernel};
use crate::law::StepLaw;
use crate::oracle::{
    bracket_with, enumerate_gluing_small, mc_half_line, mc_potential_kernel, BoxGreen,
    ValidationCheck, ValidationReport,
};
use crate::rng::rng_from_seed;
use crate::z3::{estimate_escape, Aggregate3, InducedWalk};

/// Return probability of simple random walk on the cubic lattice.
pub const POLYA_RETURN_3D: f64 = 0.340_537_329_550_999;

fn slope(kernel: &PotentialKernel, lo: i64, hi: i64) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = lo;
    while n <= hi {
        xs.push((n as f64).ln());
        ys.push(kernel.eval(n).ln());
        n *= 2;
    }
    crate::harness::fit_line_slope(&xs, &ys).unwrap_or(f64::NAN)
}

/// Runs the oracle checks; `quick` shrinks boxes and replica counts.
pub fn validation_suite(quick: bool, seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut rng = rng_from_seed(seed);
    let lazy = StepLaw::lazy(0.5)?;
    let p15 = StepLaw::power_law(1.5, 0.2)?;
    let p12 = StepLaw::power_law(1.2, 0.2)?;
    let p25 = StepLaw::power_law(2.5, 0.2)?;

    let mut worst: f64 = 0.0;
    for n in 0..=100 {
        worst = worst.max((compute_a(&lazy, n, 1e-10)? - 2.0 * n as f64).abs());
    }
    report.push(ValidationCheck::near("lazy kernel closed form, max error", worst, 0.0, 1e-6));
    let mc = mc_potential_kernel(&lazy, 3, 100_000, if quick { 100 } else { 400 }, &mut rng);
    report.push(ValidationCheck::near(
        "lazy kernel a(3), time-summation estimate",
        mc.estimate,
        6.0,
        3.0 * mc.stderr + mc.truncation_bound.unwrap_or(0.0),
    ));

    let table = if quick { 1 << 13 } else { 1 << 14 };
    let k15 = shared_kernel(&p15, table)?;
    let k12 = shared_kernel(&p12, table)?;
    report.push(ValidationCheck::near("kernel slope alpha=1.5", slope(&k15, 64, 8192), 0.5, 0.05));
    report.push(ValidationCheck::near("kernel slope alpha=1.2", slope(&k12, 64, 8192), 0.2, 0.05));

    let radius = if quick { 1 << 12 } else { 1 << 15 };
    for (name, law) in [("alpha=1.5", &p15), ("alpha=2.5", &p25), ("lazy", &lazy)] {
        let kernel = shared_kernel(law, table)?;
        let green = BoxGreen::new(law, radius)?;
        for d in [2i64, 5, 10, 50] {
            let b = bracket_with(&green, &[0], d)?;
            let v = two_point_escape(&kernel, d);
            let slack = 1e-9 * v;
            report.push(ValidationCheck::within(
                format!("two-point escape {name} d={d} in box bracket"),
                v,
                b.lo - slack,
                b.hi + slack,
            ));
        }
    }

    let set = [0i64, 1, 3];
    let oracle = enumerate_gluing_small(&p15, &set, 20, 1e-3)?;
    let sys = HittingSystem::solve(&k15, &set)?;
    // worst excess of |primary - oracle| over three oracle error estimates
    let mut excess = f64::NEG_INFINITY;
    for e in &oracle.entries {
        let primary = mu_at(&sys, &k15, &p15, e.x)?;
        let v = primary.per_anchor.iter().find(|p| p.0 == e.anchor).map_or(0.0, |p| p.1);
        excess = excess.max((v - e.mu).abs() - 3.0 * e.error - 1e-9);
    }
    report.push(ValidationCheck {
        name: "gluing measure vs enumeration on {0,1,3}, excess over 3 error".into(),
        value: excess,
        reference: 0.0,
        tolerance: 0.0,
        pass: excess <= 0.0,
    });

    for (name, law) in [("alpha=1.5", p15.clone()), ("z2", StepLaw::z2_restricted()?)] {
        let kernel = shared_kernel(&law, table)?;
        let sys = HittingSystem::solve(&kernel, &[0, 1, 3, 10, 50])?;
        let nu = NuSampler::new(&law, Arc::clone(&kernel))?;
        let g = GluingDistribution::build(&sys, &nu, &law, 1e-4)?;
        report.push(ValidationCheck::near(format!("gluing total mass {name}"), g.total_mass(), 1.0, 1e-3));
    }

    let half = mc_half_line(&lazy, 50, 100_000, &mut rng)?;
    let scale = 100.0 / lazy.sigma_sq().unwrap_or(f64::NAN);
    report.push(ValidationCheck::within("half-line escape ratio, lazy x=50", half.estimate * scale, 0.9, 1.1));

    let walk = InducedWalk::new();
    let origin = Aggregate3::from_points([BigInt::from(0)])?;
    let reps = if quick { 2_000 } else { 20_000 };
    let e = estimate_escape(&walk, &origin, &BigInt::from(0), reps, 1000, &mut rng)?;
    report.push(ValidationCheck::near(
        "axis walk escape from origin vs cubic-lattice escape",
        e.estimate,
        1.0 - POLYA_RETURN_3D,
        4.0 * e.stderr + 0.005,
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let report = validation_suite(true, 17).unwrap();
        for c in &report.checks {
            assert!(c.pass, "{c:?}");
        }
        assert!(report.checks.len() > 15);
    }
}
