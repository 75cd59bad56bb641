//! One-dimensional long-range DLA: aggregate, trajectory, samplers and checkpoints.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LdlaError, Result};
use crate::gluing::{GluingSampler, DEFAULT_EPS_TAIL};
use crate::hitting::HittingSystem;
use crate::kernel::{shared_kernel, table_size_for, PotentialKernel, DEFAULT_TABLE_SIZE, MAX_TABLE_SIZE};
use crate::law::{LawKind, LawSpec, StepLaw};
use crate::rng::{rng_from_seed, RngState, SimRng};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_LAUNCH_FACTOR: f64 = 32.0;
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;
pub const DEFAULT_L_MIN: u64 = 1000;
pub const DEFAULT_MAX_RELAUNCHES: u64 = 1000;
/// Positions are kept well inside `i64` so differences never overflow.
pub const MAX_POSITION: i64 = 1 << 62;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Gluing-measure sampler driven by the hitting system.
    Exact,
    /// Random walk launched far from the aggregate.
    Direct,
}

impl FromStr for SamplerKind {
    type Err = LdlaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SamplerKind::Exact),
            "direct" => Ok(SamplerKind::Direct),
            other => Err(LdlaError::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

fn default_launch_factor() -> f64 {
    DEFAULT_LAUNCH_FACTOR
}
fn default_step_cap() -> u64 {
    DEFAULT_STEP_CAP
}
fn default_l_min() -> u64 {
    DEFAULT_L_MIN
}
fn default_max_relaunches() -> u64 {
    DEFAULT_MAX_RELAUNCHES
}
fn default_eps_tail() -> f64 {
    DEFAULT_EPS_TAIL
}
fn default_kernel_table() -> u64 {
    DEFAULT_TABLE_SIZE
}
fn default_sampler() -> SamplerKind {
    SamplerKind::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub law: LawSpec,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    pub n_particles: u64,
    #[serde(default)]
    pub seed: u64,
    /// Direct sampler launch distance as a multiple of `max(D, l_min)`.
    #[serde(default = "default_launch_factor")]
    pub launch_factor: f64,
    /// Direct sampler steps per launch before relaunching.
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
    #[serde(default = "default_l_min")]
    pub l_min: u64,
    #[serde(default = "default_max_relaunches")]
    pub max_relaunches: u64,
    /// Tail mass allowed when the gluing measure is built explicitly.
    #[serde(default = "default_eps_tail")]
    pub eps_tail: f64,
    /// Base potential-kernel table size.
    #[serde(default = "default_kernel_table")]
    pub kernel_table: u64,
    /// Particles between checkpoints; 0 disables them.
    #[serde(default)]
    pub checkpoint_every: u64,
}

impl RunConfig {
    pub fn new(law: LawSpec, sampler: SamplerKind, n_particles: u64, seed: u64) -> Self {
        RunConfig {
            law,
            sampler,
            n_particles,
            seed,
            launch_factor: DEFAULT_LAUNCH_FACTOR,
            step_cap: DEFAULT_STEP_CAP,
            l_min: DEFAULT_L_MIN,
            max_relaunches: DEFAULT_MAX_RELAUNCHES,
            eps_tail: DEFAULT_EPS_TAIL,
            kernel_table: DEFAULT_TABLE_SIZE,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.law.build()?;
        if self.law.kind == LawKind::PowerLaw && self.law.alpha.is_some_and(|a| a < 1.0) {
            return Err(LdlaError::Config(format!(
                "alpha {} gives a transient walk; aggregation needs alpha >= 1",
                self.law.alpha.unwrap_or(f64::NAN)
            )));
        }
        if !(self.launch_factor >= 4.0 && self.launch_factor.is_finite()) {
            return Err(LdlaError::Config(format!(
                "launch_factor must be at least 4, got {}",
                self.launch_factor
            )));
        }
        if self.step_cap < 1_000_000 {
            return Err(LdlaError::Config(format!(
                "step_cap must be at least 1e6, got {}",
                self.step_cap
            )));
        }
        if self.l_min == 0 || self.max_relaunches == 0 {
            return Err(LdlaError::Config("l_min and max_relaunches must be positive".into()));
        }
        if !(self.eps_tail > 0.0 && self.eps_tail <= 1e-2) {
            return Err(LdlaError::Config(format!(
                "eps_tail must lie in (0, 0.01], got {}",
                self.eps_tail
            )));
        }
        if !self.kernel_table.is_power_of_two()
            || self.kernel_table < 1024
            || self.kernel_table > MAX_TABLE_SIZE
        {
            return Err(LdlaError::Config(format!(
                "kernel_table must be a power of two in [1024, {MAX_TABLE_SIZE}], got {}",
                self.kernel_table
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Finite subset of the integers, kept sorted and in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    sorted: Vec<i64>,
    order: Vec<i64>,
}

impl Default for Aggregate {
    fn default() -> Self {
        Self::new()
    }
}

impl Aggregate {
    /// The seed aggregate `{0}`.
    pub fn new() -> Self {
        Aggregate { sorted: vec![0], order: vec![0] }
    }

    pub fn from_order(order: &[i64]) -> Result<Self> {
        let (&first, rest) = order
            .split_first()
            .ok_or_else(|| LdlaError::Checkpoint("empty aggregate".into()))?;
        let mut agg = Aggregate { sorted: vec![first], order: vec![first] };
        for &x in rest {
            agg.insert(x)?;
        }
        Ok(agg)
    }

    pub fn points(&self) -> &[i64] {
        &self.sorted
    }

    pub fn order(&self) -> &[i64] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> i64 {
        self.sorted[0]
    }

    pub fn max(&self) -> i64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn diameter(&self) -> u64 {
        (self.max() - self.min()) as u64
    }

    pub fn contains(&self, x: i64) -> bool {
        self.sorted.binary_search(&x).is_ok()
    }

    /// Number of strictly positive points.
    pub fn positive_count(&self) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&p| p <= 0)
    }

    /// Index at which `x` was added (0 for the seed).
    pub fn insertion_time(&self, x: i64) -> Option<usize> {
        self.order.iter().position(|&p| p == x)
    }

    pub fn insert(&mut self, x: i64) -> Result<()> {
        if x.unsigned_abs() > MAX_POSITION as u64 {
            return Err(LdlaError::Overflow(format!("position {x}")));
        }
        match self.sorted.binary_search(&x) {
            Ok(_) => Err(LdlaError::PointInAggregate(x)),
            Err(i) => {
                self.sorted.insert(i, x);
                self.order.push(x);
                Ok(())
            }
        }
    }
}

/// One aggregation step: the `n`-th particle attached at `added_x` next to `anchor_a`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: u64,
    /// Diameter after the step.
    pub d_n: u64,
    /// Diameter growth caused by this step.
    pub delta_d: u64,
    pub min_pt: i64,
    pub max_pt: i64,
    pub added_x: i64,
    pub anchor_a: i64,
    #[serde(default)]
    pub proposals: u64,
    #[serde(default)]
    pub relaunches: u64,
    #[serde(default)]
    pub walk_steps: u64,
}

/// Step at which the diameter grew by `delta >= 2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JumpEvent {
    pub n: u64,
    pub delta: u64,
    pub level: u32,
}

const TRAJECTORY_HEADER: [&str; 7] =
    ["n", "D_n", "delta_D", "min_pt", "max_pt", "added_x", "anchor_a"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config_hash: String,
    pub seed: u64,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `D_0, D_1, ..., D_N`.
    pub fn diameters(&self) -> Vec<u64> {
        std::iter::once(0).chain(self.records.iter().map(|r| r.d_n)).collect()
    }

    pub fn jump_log(&self) -> Vec<JumpEvent> {
        self.records
            .iter()
            .filter(|r| r.delta_d > 0)
            .map(|r| JumpEvent { n: r.n, delta: r.delta_d, level: r.delta_d.ilog2() })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_HEADER)?;
        for r in &self.records {
            w.write_record(&[
                r.n.to_string(),
                r.d_n.to_string(),
                r.delta_d.to_string(),
                r.min_pt.to_string(),
                r.max_pt.to_string(),
                r.added_x.to_string(),
                r.anchor_a.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header != TRAJECTORY_HEADER {
            return Err(LdlaError::Config(format!("unexpected trajectory header {header:?}")));
        }
        let mut records = Vec::new();
        for row in rd.records() {
            let row = row?;
            let field = |i: usize| -> Result<i64> {
                row[i]
                    .parse::<i64>()
                    .map_err(|e| LdlaError::Config(format!("trajectory column {i}: {e}")))
            };
            records.push(StepRecord {
                n: field(0)? as u64,
                d_n: field(1)? as u64,
                delta_d: field(2)? as u64,
                min_pt: field(3)?,
                max_pt: field(4)?,
                added_x: field(5)?,
                anchor_a: field(6)?,
                proposals: 0,
                relaunches: 0,
                walk_steps: 0,
            });
        }
        Ok(Trajectory { config_hash: String::new(), seed: 0, records })
    }

    /// SHA-256 of the CSV export.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        sha256_hex(&buf)
    }
}

fn records_digest(records: &[StepRecord]) -> String {
    sha256_hex(serde_json::to_string(records).expect("records serialize").as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectDraw {
    pub x: i64,
    pub anchor: i64,
    pub relaunches: u64,
    pub steps: u64,
}

/// Walks a particle launched `L = launch_factor * max(D, l_min)` beyond a
/// uniformly chosen extreme until it jumps onto the aggregate. Walks leaving
/// to distance `10 L` or exceeding `step_cap` steps are relaunched.
pub fn direct_particle<R: Rng + ?Sized>(
    law: &StepLaw,
    aggregate: &Aggregate,
    config: &RunConfig,
    rng: &mut R,
) -> Result<DirectDraw> {
    let sorted = aggregate.points();
    let (lo, hi) = (aggregate.min(), aggregate.max());
    let scale = aggregate.diameter().max(config.l_min) as f64;
    let launch = (config.launch_factor * scale).min(MAX_POSITION as f64 / 64.0) as i64;
    let escape = launch.saturating_mul(10);
    let mut steps = 0u64;
    for relaunch in 0..config.max_relaunches {
        let mut x = if rng.random::<bool>() { hi + launch } else { lo - launch };
        let mut walked = 0u64;
        while walked < config.step_cap {
            walked += 1;
            let k = law.sample_step(rng);
            if k == 0 {
                continue;
            }
            let Some(y) = x.checked_add(k) else { break };
            if sorted.binary_search(&y).is_ok() {
                return Ok(DirectDraw { x, anchor: y, relaunches: relaunch, steps: steps + walked });
            }
            x = y;
            if x > hi.saturating_add(escape) || x < lo.saturating_sub(escape) {
                break;
            }
        }
        steps += walked;
    }
    Err(LdlaError::TooManyRelaunches { relaunches: config.max_relaunches })
}

#[derive(Debug, Clone)]
enum Engine {
    Exact {
        kernel: Arc<PotentialKernel>,
        system: HittingSystem,
        sampler: GluingSampler,
    },
    Direct,
}

/// Resumable checkpoint of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub n: u64,
    pub points: Vec<i64>,
    pub insertion_order: Vec<i64>,
    pub rng_state: RngState,
    pub trajectory_tail_digest: String,
    pub records: Vec<StepRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// A DLA run in progress.
#[derive(Debug, Clone)]
pub struct DlaRun {
    config: RunConfig,
    config_hash: String,
    law: StepLaw,
    aggregate: Aggregate,
    trajectory: Trajectory,
    engine: Engine,
    rng: SimRng,
}

impl DlaRun {
    pub fn new(config: RunConfig) -> Result<Self> {
        let aggregate = Aggregate::new();
        let rng = rng_from_seed(config.seed);
        Self::assemble(config, aggregate, Vec::new(), rng)
    }

    fn assemble(
        config: RunConfig,
        aggregate: Aggregate,
        records: Vec<StepRecord>,
        rng: SimRng,
    ) -> Result<Self> {
        config.validate()?;
        let law = config.law.build()?;
        let engine = match config.sampler {
            SamplerKind::Exact => {
                let n_table = table_size_for(config.kernel_table, aggregate.diameter());
                let kernel = shared_kernel(&law, n_table)?;
                let system = HittingSystem::solve(&kernel, aggregate.order())?;
                let sampler = GluingSampler::new(&law, Arc::clone(&kernel))?;
                Engine::Exact { kernel, system, sampler }
            }
            SamplerKind::Direct => Engine::Direct,
        };
        let config_hash = config.config_hash();
        let trajectory = Trajectory { config_hash: config_hash.clone(), seed: config.seed, records };
        Ok(DlaRun { config, config_hash, law, aggregate, trajectory, engine, rng })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    pub fn aggregate(&self) -> &Aggregate {
        &self.aggregate
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    /// Particles added so far.
    pub fn n(&self) -> u64 {
        self.trajectory.records.len() as u64
    }

    pub fn hitting_system(&self) -> Option<&HittingSystem> {
        match &self.engine {
            Engine::Exact { system, .. } => Some(system),
            Engine::Direct => None,
        }
    }

    pub fn kernel(&self) -> Option<&Arc<PotentialKernel>> {
        match &self.engine {
            Engine::Exact { kernel, .. } => Some(kernel),
            Engine::Direct => None,
        }
    }

    /// Rebuilds the kernel table once the diameter leaves its certified range.
    fn ensure_kernel(&mut self) -> Result<()> {
        let Engine::Exact { kernel, system, sampler } = &mut self.engine else {
            return Ok(());
        };
        let needed = table_size_for(self.config.kernel_table, self.aggregate.diameter());
        if needed > kernel.n_table() {
            let fresh = shared_kernel(&self.law, needed)?;
            let fresh_system = HittingSystem::solve(&fresh, self.aggregate.order())?;
            *sampler = GluingSampler::new(&self.law, Arc::clone(&fresh))?;
            *system = fresh_system;
            *kernel = fresh;
        }
        Ok(())
    }

    /// Adds one particle. On error the aggregate and trajectory are unchanged.
    pub fn step(&mut self) -> Result<&StepRecord> {
        self.ensure_kernel()?;
        let before = self.aggregate.diameter();
        let (x, anchor, proposals, relaunches, walk_steps) = match &mut self.engine {
            Engine::Exact { kernel, system, sampler } => {
                let draw = sampler.sample(system, self.aggregate.points(), &mut self.rng)?;
                if draw.x.unsigned_abs() > MAX_POSITION as u64 {
                    return Err(LdlaError::Overflow(format!("position {}", draw.x)));
                }
                system.extend(kernel, draw.x)?;
                (draw.x, draw.anchor, draw.proposals, 0, 0)
            }
            Engine::Direct => {
                let draw = direct_particle(&self.law, &self.aggregate, &self.config, &mut self.rng)?;
                (draw.x, draw.anchor, 0, draw.relaunches, draw.steps)
            }
        };
        self.aggregate.insert(x)?;
        let d_n = self.aggregate.diameter();
        let n = self.n() + 1;
        self.trajectory.records.push(StepRecord {
            n,
            d_n,
            delta_d: d_n - before,
            min_pt: self.aggregate.min(),
            max_pt: self.aggregate.max(),
            added_x: x,
            anchor_a: anchor,
            proposals,
            relaunches,
            walk_steps,
        });
        Ok(self.trajectory.records.last().expect("just pushed"))
    }

    /// Runs until `n_particles`, writing a checkpoint every `checkpoint_every`
    /// particles when a path is given.
    pub fn run(&mut self, checkpoint: Option<&Path>) -> Result<()> {
        while self.n() < self.config.n_particles {
            self.step()?;
            if let Some(path) = checkpoint {
                let every = self.config.checkpoint_every;
                if every > 0 && self.n() % every == 0 {
                    self.checkpoint().save(path)?;
                }
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: self.config_hash.clone(),
            n: self.n(),
            points: self.aggregate.points().to_vec(),
            insertion_order: self.aggregate.order().to_vec(),
            rng_state: RngState::capture(&self.rng),
            trajectory_tail_digest: records_digest(&self.trajectory.records),
            records: self.trajectory.records.clone(),
        }
    }

    /// Restores a run; refuses checkpoints from a different configuration.
    pub fn resume(config: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(LdlaError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.config_hash != config.config_hash() {
            return Err(LdlaError::Checkpoint("configuration hash mismatch".into()));
        }
        if ckpt.records.len() as u64 != ckpt.n || ckpt.insertion_order.len() as u64 != ckpt.n + 1 {
            return Err(LdlaError::Checkpoint("inconsistent particle count".into()));
        }
        if records_digest(&ckpt.records) != ckpt.trajectory_tail_digest {
            return Err(LdlaError::Checkpoint("trajectory digest mismatch".into()));
        }
        let aggregate = Aggregate::from_order(&ckpt.insertion_order)?;
        if aggregate.points() != ckpt.points.as_slice() {
            return Err(LdlaError::Checkpoint("points disagree with insertion order".into()));
        }
        let rng = ckpt.rng_state.restore()?;
        Self::assemble(config, aggregate, ckpt.records.clone(), rng)
    }
}

/// Runs a configuration to completion.
pub fn run_dla(config: &RunConfig) -> Result<Trajectory> {
    let mut run = DlaRun::new(config.clone())?;
    run.run(None)?;
    Ok(run.into_trajectory())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sampler: SamplerKind, n: u64, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::new(LawSpec::power_law(2.5, 0.2), sampler, n, seed);
        cfg.kernel_table = 1 << 12;
        cfg
    }

    #[test]
    fn aggregate_bookkeeping() {
        let mut a = Aggregate::new();
        a.insert(5).unwrap();
        a.insert(-3).unwrap();
        assert!(matches!(a.insert(5), Err(LdlaError::PointInAggregate(5))));
        assert_eq!(a.points(), &[-3, 0, 5]);
        assert_eq!(a.order(), &[0, 5, -3]);
        assert_eq!(a.diameter(), 8);
        assert_eq!(a.positive_count(), 1);
        assert_eq!(a.insertion_time(-3), Some(2));
        assert!(matches!(a.insert(i64::MAX), Err(LdlaError::Overflow(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(SamplerKind::Exact, 10, 1);
        cfg.validate().unwrap();
        cfg.launch_factor = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(SamplerKind::Exact, 10, 1);
        cfg.step_cap = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = small(SamplerKind::Exact, 10, 1);
        cfg.law = LawSpec::power_law(0.5, 0.2);
        assert!(cfg.validate().is_err());
        let text = r#"{"law":{"kind":"power_law","alpha":1.5,"holding_prob":0.2,"table_cutoff":65536},"n_particles":5}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.sampler, SamplerKind::Exact);
        assert_eq!(cfg.launch_factor, DEFAULT_LAUNCH_FACTOR);
    }

    #[test]
    fn exact_run_invariants() {
        let traj = run_dla(&small(SamplerKind::Exact, 60, 3)).unwrap();
        assert_eq!(traj.len(), 60);
        let mut prev = 0;
        for r in &traj.records {
            assert!(r.d_n >= prev);
            assert_eq!(r.delta_d, r.d_n - prev);
            assert_eq!(r.d_n, (r.max_pt - r.min_pt) as u64);
            assert_ne!(r.added_x, r.anchor_a);
            prev = r.d_n;
        }
    }

    #[test]
    fn direct_run_attaches_next_to_hit_point() {
        let mut cfg = small(SamplerKind::Direct, 5, 9);
        cfg.law = LawSpec::power_law(1.5, 0.2);
        cfg.l_min = 20;
        cfg.launch_factor = 4.0;
        let traj = run_dla(&cfg).unwrap();
        assert_eq!(traj.len(), 5);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let a = run_dla(&small(SamplerKind::Exact, 40, 11)).unwrap();
        let b = run_dla(&small(SamplerKind::Exact, 40, 11)).unwrap();
        let c = run_dla(&small(SamplerKind::Exact, 40, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn resume_is_bit_identical() {
        let cfg = small(SamplerKind::Exact, 80, 5);
        let full = run_dla(&cfg).unwrap();
        let mut run = DlaRun::new(cfg.clone()).unwrap();
        for _ in 0..33 {
            run.step().unwrap();
        }
        let text = serde_json::to_string(&run.checkpoint()).unwrap();
        let ckpt: Checkpoint = serde_json::from_str(&text).unwrap();
        let mut resumed = DlaRun::resume(cfg.clone(), &ckpt).unwrap();
        resumed.run(None).unwrap();
        assert_eq!(resumed.trajectory(), &full);

        let mut other = cfg;
        other.seed += 1;
        assert!(matches!(DlaRun::resume(other, &ckpt), Err(LdlaError::Checkpoint(_))));
    }

    #[test]
    fn csv_round_trip() {
        let traj = run_dla(&small(SamplerKind::Exact, 20, 2)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,D_n,delta_D,min_pt,max_pt,added_x,anchor_a\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.diameters(), traj.diameters());
        assert_eq!(back.digest(), traj.digest());
    }
}
