//! Browser bindings: potential-kernel curves, gluing measures and small runs.
//! Every export returns a JSON string.

use std::sync::Arc;

use ldla::gluing::VALIDATION_EPS_TAIL;
use ldla::kernel::shared_kernel;
use ldla::{GluingDistribution, HittingSystem, LawSpec, LdlaError, NuSampler, RunConfig, SamplerKind};
use serde_json::json;
use wasm_bindgen::prelude::*;

const DEMO_TABLE: u64 = 1 << 12;
const MAX_DEMO_PARTICLES: u64 = 2000;

fn law_spec(law: &str) -> Result<LawSpec, LdlaError> {
    match law.split_once(':') {
        Some(("power", a)) => a
            .parse()
            .map(|a| LawSpec::power_law(a, ldla::law::DEFAULT_HOLDING))
            .map_err(|e| LdlaError::Config(format!("alpha {a:?}: {e}"))),
        None if law == "z2" => Ok(LawSpec::z2_restricted()),
        None if law == "lazy" => Ok(LawSpec::lazy(0.5)),
        _ => Err(LdlaError::Config(format!("unknown law {law:?}"))),
    }
}

fn to_js(e: LdlaError) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Potential kernel at geometrically spaced distances up to `max_n`.
pub fn kernel_curve_json(law: &str, max_n: u64) -> Result<String, LdlaError> {
    let spec = law_spec(law)?;
    let law = spec.build()?;
    let kernel = shared_kernel(&law, DEMO_TABLE)?;
    let mut points = Vec::new();
    let mut n = 1u64;
    while n <= max_n.max(1) {
        points.push(json!({ "n": n, "a": kernel.eval(n as i64) }));
        n = (n * 5 / 4).max(n + 1);
    }
    Ok(json!({ "law": spec.label(), "points": points }).to_string())
}

/// Gluing measure of the set: anchor weights and the explicit site masses.
pub fn gluing_json(law: &str, points: &[i32]) -> Result<String, LdlaError> {
    let law = law_spec(law)?.build()?;
    let kernel = shared_kernel(&law, DEMO_TABLE)?;
    let set: Vec<i64> = points.iter().map(|&p| i64::from(p)).collect();
    let system = HittingSystem::solve(&kernel, &set)?;
    let nu = NuSampler::new(&law, Arc::clone(&kernel))?;
    let g = GluingDistribution::build(&system, &nu, &law, VALIDATION_EPS_TAIL)?;
    let sites: Vec<_> = g
        .explicit_by_site()
        .into_iter()
        .map(|(x, mass)| json!({ "x": x, "mass": mass }))
        .collect();
    Ok(json!({
        "anchors": g.anchors(),
        "anchor_weights": g.anchor_weights(),
        "total_mass": g.total_mass(),
        "tail_mass_bound": g.tail_mass_bound(),
        "sites": sites,
    })
    .to_string())
}

/// Grows an aggregate with the exact sampler.
pub fn run_json(law: &str, particles: u64, seed: u64) -> Result<String, LdlaError> {
    if particles > MAX_DEMO_PARTICLES {
        return Err(LdlaError::Config(format!("at most {MAX_DEMO_PARTICLES} particles in the demo")));
    }
    let mut cfg = RunConfig::new(law_spec(law)?, SamplerKind::Exact, particles, seed);
    cfg.kernel_table = DEMO_TABLE;
    cfg.validate()?;
    let traj = ldla::run_dla(&cfg)?;
    let records: Vec<_> = traj
        .records
        .iter()
        .map(|r| json!({ "n": r.n, "d": r.d_n, "x": r.added_x, "a": r.anchor_a }))
        .collect();
    Ok(json!({ "records": records }).to_string())
}

#[wasm_bindgen]
pub fn kernel_curve(law: &str, max_n: u32) -> Result<String, JsValue> {
    kernel_curve_json(law, u64::from(max_n)).map_err(to_js)
}

#[wasm_bindgen]
pub fn gluing_measure(law: &str, points: &[i32]) -> Result<String, JsValue> {
    gluing_json(law, points).map_err(to_js)
}

#[wasm_bindgen]
pub fn grow(law: &str, particles: u32, seed: u32) -> Result<String, JsValue> {
    run_json(law, u64::from(particles), u64::from(seed)).map_err(to_js)
}
