//! Path simulation of the stochastic variational inequality
//!
//! ```text
//! dy = -(c0 y + k z) dt + dw,   (dz - y dt)(φ - z) >= 0,   |z| <= Y,
//! ```
//!
//! by Euler–Maruyama with projection onto [-Y, Y], and the estimators built
//! on it: long-run time averages (batch means), short cycles as integrals up
//! to the end of the next plastic phase, the regenerative cycle ratio, and
//! ray hitting probabilities.
//!
//! Replica `r` draws from the ChaCha8 stream `r` of the run seed, so results
//! do not depend on thread scheduling.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Functional, OscillatorParams, PhasePoint, Region};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Simulated time per replica for time averages.
    pub horizon: f64,
    /// Fraction of the horizon discarded before averaging.
    pub burn_in: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Batches per replica for the batch-means error.
    pub batches: usize,
    /// Cycles (or hitting paths) per replica.
    pub cycles: usize,
    /// Steps after which a single cycle or path is abandoned.
    pub step_cap: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 2e4,
            burn_in: 0.1,
            replicas: 8,
            seed: 20_240_601,
            batches: 20,
            cycles: 2500,
            step_cap: 100_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("T", format!("must be > 0, got {}", self.horizon)));
        }
        if !(0.0..=0.5).contains(&self.burn_in) {
            return Err(Error::invalid("burn_in", format!("must lie in [0, 0.5], got {}", self.burn_in)));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be >= 1"));
        }
        if self.batches < 20 {
            return Err(Error::invalid("batches", format!("need at least 20, got {}", self.batches)));
        }
        if self.cycles == 0 {
            return Err(Error::invalid("cycles", "must be >= 1"));
        }
        if self.step_cap == 0 {
            return Err(Error::invalid("step_cap", "must be >= 1"));
        }
        Ok(())
    }

    fn rng(&self, replica: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replica as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Elastic,
    PlasticPlus,
    PlasticMinus,
}

impl Regime {
    pub fn region(self) -> Region {
        match self {
            Regime::Elastic => Region::Interior,
            Regime::PlasticPlus => Region::PlusRay,
            Regime::PlasticMinus => Region::MinusRay,
        }
    }

    fn classify(params: &OscillatorParams, y: f64, z: f64) -> Self {
        let yb = params.y_bound();
        if z == yb && y > 0.0 {
            Regime::PlasticPlus
        } else if z == -yb && y < 0.0 {
            Regime::PlasticMinus
        } else {
            Regime::Elastic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Elastic => "elastic",
            Regime::PlasticPlus => "plastic-plus",
            Regime::PlasticMinus => "plastic-minus",
        }
    }
}

/// Simulator state. The plastic deformation Δ is carried; the total
/// displacement is `x = Δ + z`, so `Δ = x - z` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub y: f64,
    pub z: f64,
    pub delta: f64,
    pub regime: Regime,
    pub steps: u64,
}

impl SimState {
    /// State at (y, z) with zero plastic deformation; the regime follows
    /// from (y, z).
    pub fn new(params: &OscillatorParams, y: f64, z: f64) -> Result<Self> {
        let yb = params.y_bound();
        if !(y.is_finite() && z.is_finite() && z.abs() <= yb) {
            return Err(Error::invalid("start", format!("({y}, {z}) is outside |z| <= {yb}")));
        }
        Ok(Self {
            y,
            z,
            delta: 0.0,
            regime: Regime::classify(params, y, z),
            steps: 0,
        })
    }

    /// The instant a plastic phase ends: velocity 0 at z = ±Y, elastic.
    fn after_plastic(params: &OscillatorParams, top: bool) -> Self {
        let z = if top { params.y_bound() } else { -params.y_bound() };
        Self {
            y: 0.0,
            z,
            delta: 0.0,
            regime: Regime::Elastic,
            steps: 0,
        }
    }

    pub fn x(&self) -> f64 {
        self.delta + self.z
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.steps as f64 * dt
    }

    pub fn region(&self) -> Region {
        self.regime.region()
    }

    pub fn point(&self) -> PhasePoint {
        PhasePoint {
            y: self.y,
            z: self.z,
            region: self.region(),
        }
    }

    /// Mirror image (-y, -z, -Δ).
    pub fn reflect(&self) -> Self {
        Self {
            y: -self.y,
            z: -self.z,
            delta: -self.delta,
            regime: match self.regime {
                Regime::Elastic => Regime::Elastic,
                Regime::PlasticPlus => Regime::PlasticMinus,
                Regime::PlasticMinus => Regime::PlasticPlus,
            },
            steps: self.steps,
        }
    }
}

/// One projected Euler–Maruyama step with Brownian increment `dw`.
#[inline]
pub fn step(s: &SimState, params: &OscillatorParams, dt: f64, dw: f64) -> SimState {
    let yb = params.y_bound();
    let y = s.y - (params.c0() * s.y + params.k() * s.z) * dt + dw;
    let free = s.z + s.y * dt;
    let z = free.clamp(-yb, yb);
    SimState {
        y,
        z,
        // Whatever the projection removes from z goes into Δ.
        delta: s.delta + (free - z),
        regime: Regime::classify(params, y, z),
        steps: s.steps + 1,
    }
}

/// True on the step that ends a plastic phase.
#[inline]
fn completes(prev: Regime, next: &SimState) -> bool {
    match prev {
        Regime::PlasticPlus => next.y <= 0.0,
        Regime::PlasticMinus => next.y >= 0.0,
        Regime::Elastic => false,
    }
}

/// Runs a path with an explicit increment sequence, returning every state
/// (start included).
pub fn run_with_noise(start: SimState, params: &OscillatorParams, dt: f64, noise: &[f64]) -> Vec<SimState> {
    let mut out = Vec::with_capacity(noise.len() + 1);
    out.push(start);
    let mut s = start;
    for &dw in noise {
        s = step(&s, params, dt, dw);
        out.push(s);
    }
    out
}

#[inline]
fn increment(rng: &mut ChaCha8Rng, sqdt: f64) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    n * sqdt
}

/// Estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Independent samples behind the error bar (batches or cycles).
    pub samples: usize,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Report of a time-average run.
#[derive(Debug, Clone, Serialize)]
pub struct TimeAverageReport {
    pub estimates: Vec<Estimate>,
    pub replicas: usize,
    pub batches_per_replica: usize,
    pub steps_per_batch: u64,
}

/// Number of (burn-in, per-batch) steps for the configured horizon.
fn batch_layout(cfg: &SimConfig, dt: f64) -> Result<(u64, u64)> {
    let total = (cfg.horizon / dt).round() as u64;
    let burn = (cfg.burn_in * total as f64).floor() as u64;
    let per_batch = (total - burn) / cfg.batches as u64;
    if per_batch == 0 {
        return Err(Error::invalid(
            "T",
            format!("{} steps leave fewer than {} non-empty batches", total - burn, cfg.batches),
        ));
    }
    Ok((burn, per_batch))
}

/// Per-replica batch sums for each functional, from a path driven by
/// `next_dw`.
fn batch_run(
    fs: &[Functional],
    params: &OscillatorParams,
    dt: f64,
    burn: u64,
    per_batch: u64,
    batches: usize,
    mut next_dw: impl FnMut() -> f64,
) -> Vec<Vec<f64>> {
    let mut s = SimState {
        y: 0.0,
        z: 0.0,
        delta: 0.0,
        regime: Regime::Elastic,
        steps: 0,
    };
    for _ in 0..burn {
        s = step(&s, params, dt, next_dw());
    }
    let mut out = vec![Vec::with_capacity(batches); fs.len()];
    let mut acc = vec![0.0; fs.len()];
    for _ in 0..batches {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..per_batch {
            let r = s.region();
            for (a, f) in acc.iter_mut().zip(fs) {
                *a += f.eval(s.y, s.z, r);
            }
            s = step(&s, params, dt, next_dw());
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            o.push(a / per_batch as f64);
        }
    }
    out
}

fn pool(fs: &[Functional], per_replica: Vec<Vec<Vec<f64>>>) -> Vec<Estimate> {
    fs.iter()
        .enumerate()
        .map(|(k, f)| {
            let xs: Vec<f64> = per_replica.iter().flat_map(|r| r[k].iter().copied()).collect();
            let (estimate, stderr) = mean_stderr(&xs);
            Estimate {
                name: f.name().to_string(),
                estimate,
                stderr,
                samples: xs.len(),
            }
        })
        .collect()
}

/// Long-run time averages of several functionals from (0, 0), with
/// batch-means standard errors pooled over replicas.
pub fn estimate_time_average(fs: &[Functional], params: &OscillatorParams, cfg: &SimConfig) -> Result<TimeAverageReport> {
    cfg.validate()?;
    let (burn, per_batch) = batch_layout(cfg, cfg.dt)?;
    let sqdt = cfg.dt.sqrt();
    let per_replica: Vec<_> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = cfg.rng(r);
            batch_run(fs, params, cfg.dt, burn, per_batch, cfg.batches, || increment(&mut rng, sqdt))
        })
        .collect();
    Ok(TimeAverageReport {
        estimates: pool(fs, per_replica),
        replicas: cfg.replicas,
        batches_per_replica: cfg.batches,
        steps_per_batch: per_batch,
    })
}

/// Time averages at step `dt` and `dt/2` driven by the same Brownian path
/// (coarse increments are sums of two fine ones), so their difference
/// isolates the time-step bias.
pub fn dt_refinement(
    fs: &[Functional],
    params: &OscillatorParams,
    cfg: &SimConfig,
) -> Result<(TimeAverageReport, TimeAverageReport)> {
    cfg.validate()?;
    let (coarse_dt, fine_dt) = (cfg.dt, 0.5 * cfg.dt);
    let (cb, cp) = batch_layout(cfg, coarse_dt)?;
    let (fb, fp) = (2 * cb, 2 * cp);
    let sq = fine_dt.sqrt();
    let runs: Vec<_> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = cfg.rng(r);
            let fine = batch_run(fs, params, fine_dt, fb, fp, cfg.batches, || increment(&mut rng, sq));
            let mut rng = cfg.rng(r);
            let coarse = batch_run(fs, params, coarse_dt, cb, cp, cfg.batches, || {
                increment(&mut rng, sq) + increment(&mut rng, sq)
            });
            (coarse, fine)
        })
        .collect();
    let (coarse, fine): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let report = |per_replica, per_batch| TimeAverageReport {
        estimates: pool(fs, per_replica),
        replicas: cfg.replicas,
        batches_per_replica: cfg.batches,
        steps_per_batch: per_batch,
    };
    Ok((report(coarse, cp), report(fine, fp)))
}

/// Where a short cycle starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleStart {
    /// (0⁻, Y): the end of a plastic⁺ phase.
    AfterPlasticPlus,
    /// (0⁺, -Y): the end of a plastic⁻ phase.
    AfterPlasticMinus,
    Interior { y: f64, z: f64 },
}

impl CycleStart {
    fn state(self, params: &OscillatorParams) -> Result<SimState> {
        match self {
            CycleStart::AfterPlasticPlus => Ok(SimState::after_plastic(params, true)),
            CycleStart::AfterPlasticMinus => Ok(SimState::after_plastic(params, false)),
            CycleStart::Interior { y, z } => {
                let s = SimState::new(params, y, z)?;
                if s.regime != Regime::Elastic {
                    return Err(Error::invalid("start", "must not lie on a plastic ray"));
                }
                Ok(s)
            }
        }
    }
}

/// Per-cycle samples of one replica.
struct CycleSamples {
    integrals: Vec<Vec<f64>>,
    durations: Vec<f64>,
    discarded: usize,
}

fn run_cycles(
    fs: &[Functional],
    start: SimState,
    params: &OscillatorParams,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> CycleSamples {
    let (dt, sqdt) = (cfg.dt, cfg.dt.sqrt());
    let mut out = CycleSamples {
        integrals: vec![Vec::with_capacity(cfg.cycles); fs.len()],
        durations: Vec::with_capacity(cfg.cycles),
        discarded: 0,
    };
    let mut acc = vec![0.0; fs.len()];
    for _ in 0..cfg.cycles {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut s = start;
        let mut done = false;
        while s.steps < cfg.step_cap {
            let r = s.region();
            for (a, f) in acc.iter_mut().zip(fs) {
                *a += f.eval(s.y, s.z, r);
            }
            let next = step(&s, params, dt, increment(rng, sqdt));
            if completes(s.regime, &next) {
                s = next;
                done = true;
                break;
            }
            s = next;
        }
        if !done {
            out.discarded += 1;
            continue;
        }
        for (o, a) in out.integrals.iter_mut().zip(&acc) {
            o.push(a * dt);
        }
        out.durations.push(s.time(dt));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CycleReport {
    pub start: CycleStart,
    /// Mean of ∫₀^θ f dt per functional.
    pub integrals: Vec<Estimate>,
    /// Mean θ, the estimate of v(start; 1).
    pub duration: Estimate,
    pub cycles: usize,
    pub discarded: usize,
}

fn collect_cycles(fs: &[Functional], start: CycleStart, params: &OscillatorParams, cfg: &SimConfig, salt: u64) -> Result<(Vec<CycleSamples>, SimState)> {
    cfg.validate()?;
    let s0 = start.state(params)?;
    let runs = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt);
            rng.set_stream(r as u64);
            run_cycles(fs, s0, params, cfg, &mut rng)
        })
        .collect();
    Ok((runs, s0))
}

const CYCLE_SALT: u64 = 0x6379_636c_6573;
const PI_SALT: u64 = 0x6869_7474_696e;

/// Short-cycle estimator: mean of ∫₀^θ f dt where θ ends the first
/// completed plastic phase.
pub fn estimate_cycle(fs: &[Functional], start: CycleStart, params: &OscillatorParams, cfg: &SimConfig) -> Result<CycleReport> {
    let (runs, _) = collect_cycles(fs, start, params, cfg, CYCLE_SALT)?;
    let durations: Vec<f64> = runs.iter().flat_map(|r| r.durations.iter().copied()).collect();
    let discarded = runs.iter().map(|r| r.discarded).sum();
    if durations.len() < 2 {
        return Err(Error::Degenerate {
            what: "completed cycles",
            value: durations.len() as f64,
        });
    }
    let integrals = fs
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let xs: Vec<f64> = runs.iter().flat_map(|r| r.integrals[k].iter().copied()).collect();
            let (estimate, stderr) = mean_stderr(&xs);
            Estimate {
                name: f.name().to_string(),
                estimate,
                stderr,
                samples: xs.len(),
            }
        })
        .collect();
    let (estimate, stderr) = mean_stderr(&durations);
    Ok(CycleReport {
        start,
        integrals,
        duration: Estimate {
            name: "theta".into(),
            estimate,
            stderr,
            samples: durations.len(),
        },
        cycles: durations.len(),
        discarded,
    })
}

/// Regenerative estimate of ν(f) from independent cycles started at both
/// plastic-phase ends: `(Ī_top + Ī_bot) / (θ̄_top + θ̄_bot)`, with a
/// delta-method standard error.
pub fn estimate_cycle_ratio(fs: &[Functional], params: &OscillatorParams, cfg: &SimConfig) -> Result<Vec<Estimate>> {
    let (top, _) = collect_cycles(fs, CycleStart::AfterPlasticPlus, params, cfg, CYCLE_SALT)?;
    // Bottom cycles use the mirrored seed family so they are independent of the top ones.
    let (bot, _) = collect_cycles(fs, CycleStart::AfterPlasticMinus, params, cfg, !CYCLE_SALT)?;
    let gather = |runs: &[CycleSamples], k: Option<usize>| -> Vec<f64> {
        runs.iter()
            .flat_map(|r| match k {
                Some(k) => r.integrals[k].clone(),
                None => r.durations.clone(),
            })
            .collect()
    };
    let (tt, tb) = (gather(&top, None), gather(&bot, None));
    if tt.len() < 2 || tb.len() < 2 {
        return Err(Error::Degenerate {
            what: "completed cycles",
            value: tt.len().min(tb.len()) as f64,
        });
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let d = mean(&tt) + mean(&tb);
    Ok(fs
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let (it, ib) = (gather(&top, Some(k)), gather(&bot, Some(k)));
            let ratio = (mean(&it) + mean(&ib)) / d;
            // Linearized residuals I - R θ per cycle.
            let var_part = |is: &[f64], ts: &[f64]| {
                let e: Vec<f64> = is.iter().zip(ts).map(|(i, t)| i - ratio * t).collect();
                let (_, se) = mean_stderr(&e);
                se * se
            };
            let stderr = (var_part(&it, &tt) + var_part(&ib, &tb)).sqrt() / d;
            Estimate {
                name: f.name().to_string(),
                estimate: ratio,
                stderr,
                samples: it.len() + ib.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct PiReport {
    pub start_y: f64,
    pub start_z: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub stderr: f64,
    pub hits_plus: usize,
    pub hits_minus: usize,
    pub discarded: usize,
}

/// Probability that the first plastic phase entered from `start` is on D⁺.
pub fn estimate_pi(start: &PhasePoint, params: &OscillatorParams, cfg: &SimConfig) -> Result<PiReport> {
    cfg.validate()?;
    if start.region != Region::Interior {
        return Err(Error::invalid("start", "hitting probabilities start in the interior"));
    }
    let s0 = SimState::new(params, start.y, start.z)?;
    if s0.regime != Regime::Elastic {
        return Err(Error::invalid("start", "must not lie on a plastic ray"));
    }
    let counts: Vec<(usize, usize, usize)> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PI_SALT);
            rng.set_stream(r as u64);
            let sqdt = cfg.dt.sqrt();
            let (mut plus, mut minus, mut lost) = (0, 0, 0);
            for _ in 0..cfg.cycles {
                let mut s = s0;
                loop {
                    if s.steps >= cfg.step_cap {
                        lost += 1;
                        break;
                    }
                    s = step(&s, params, cfg.dt, increment(&mut rng, sqdt));
                    match s.regime {
                        Regime::PlasticPlus => {
                            plus += 1;
                            break;
                        }
                        Regime::PlasticMinus => {
                            minus += 1;
                            break;
                        }
                        Regime::Elastic => {}
                    }
                }
            }
            (plus, minus, lost)
        })
        .collect();
    let (hits_plus, hits_minus, discarded) = counts
        .iter()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let n = hits_plus + hits_minus;
    if n == 0 {
        return Err(Error::Degenerate {
            what: "completed hitting paths",
            value: 0.0,
        });
    }
    let p = hits_plus as f64 / n as f64;
    Ok(PiReport {
        start_y: start.y,
        start_z: start.z,
        p_plus: p,
        p_minus: hits_minus as f64 / n as f64,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
        hits_plus,
        hits_minus,
        discarded,
    })
}

/// A decimated path from (0, 0): every `every`-th state of `steps` steps.
pub fn sample_trajectory(params: &OscillatorParams, cfg: &SimConfig, steps: u64, every: u64) -> Result<Vec<SimState>> {
    cfg.validate()?;
    if every == 0 {
        return Err(Error::invalid("every", "must be >= 1"));
    }
    let mut rng = cfg.rng(0);
    let sqdt = cfg.dt.sqrt();
    let mut s = SimState::new(params, 0.0, 0.0)?;
    let mut out = vec![s];
    for n in 1..=steps {
        s = step(&s, params, cfg.dt, increment(&mut rng, sqdt));
        if n % every == 0 {
            out.push(s);
        }
    }
    Ok(out)
}

/// Writes `t,y,z,x,Delta,regime` rows.
pub fn write_trajectory_csv<W: Write>(mut w: W, path: &[SimState], dt: f64) -> io::Result<()> {
    writeln!(w, "t,y,z,x,Delta,regime")?;
    for s in path {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            s.time(dt),
            s.y,
            s.z,
            s.x(),
            s.delta,
            s.regime.as_str()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> OscillatorParams {
        OscillatorParams::default()
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = unit();
        let s = SimState::new(&p, 0.0, 0.0).unwrap();
        let n = step(&s, &p, 1e-3, 0.0);
        assert_eq!((n.y, n.z, n.delta, n.regime), (0.0, 0.0, 0.0, Regime::Elastic));
    }

    #[test]
    fn plastic_step_keeps_z_on_the_bound() {
        let p = unit();
        let s = SimState::new(&p, 1.0, 1.0).unwrap();
        assert_eq!(s.regime, Regime::PlasticPlus);
        let n = step(&s, &p, 1e-3, 0.0);
        assert_eq!(n.z, 1.0);
        assert!((n.y - 0.998).abs() < 1e-15);
        assert!((n.delta - 1e-3).abs() < 1e-15);
        assert_eq!(n.regime, Regime::PlasticPlus);
    }

    #[test]
    fn inward_velocity_leaves_the_ray() {
        let p = unit();
        let s = SimState::new(&p, -0.5, 1.0).unwrap();
        for dw in [-1.0, 0.0, 3.0] {
            assert!(step(&s, &p, 1e-3, dw).z < 1.0);
        }
    }

    #[test]
    fn completion_rule() {
        let p = unit();
        let mut s = SimState::new(&p, 0.01, 1.0).unwrap();
        assert_eq!(s.regime, Regime::PlasticPlus);
        let n = step(&s, &p, 1e-3, -0.05);
        assert!(completes(s.regime, &n));
        assert_eq!(n.regime, Regime::Elastic);
        s.regime = Regime::Elastic;
        assert!(!completes(s.regime, &n));
    }

    #[test]
    fn bad_configs_name_their_key() {
        let bad = [
            SimConfig { dt: 0.0, ..Default::default() },
            SimConfig { burn_in: 0.6, ..Default::default() },
            SimConfig { replicas: 0, ..Default::default() },
            SimConfig { batches: 5, ..Default::default() },
        ];
        let keys = ["dt", "burn_in", "replicas", "batches"];
        for (c, k) in bad.iter().zip(keys) {
            match c.validate() {
                Err(Error::InvalidInput { key, .. }) => assert_eq!(key, k),
                other => panic!("{other:?}"),
            }
        }
        let short = SimConfig { horizon: 0.01, ..Default::default() };
        assert!(estimate_time_average(&[Functional::one()], &unit(), &short).is_err());
    }

    #[test]
    fn constant_average_is_exact() {
        let cfg = SimConfig {
            horizon: 50.0,
            replicas: 2,
            ..Default::default()
        };
        let r = estimate_time_average(&[Functional::one()], &unit(), &cfg).unwrap();
        assert_eq!(r.estimates[0].estimate, 1.0);
        assert_eq!(r.estimates[0].stderr, 0.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = SimConfig {
            horizon: 20.0,
            replicas: 3,
            cycles: 20,
            ..Default::default()
        };
        let f = [Functional::new("y2", crate::model::Symmetry::Symmetric, 100.0, |y, _, _| y * y)];
        let a = estimate_time_average(&f, &unit(), &cfg).unwrap();
        let b = estimate_time_average(&f, &unit(), &cfg).unwrap();
        assert_eq!(a.estimates, b.estimates);
        let c = estimate_cycle(&f, CycleStart::AfterPlasticPlus, &unit(), &cfg).unwrap();
        let d = estimate_cycle(&f, CycleStart::AfterPlasticPlus, &unit(), &cfg).unwrap();
        assert_eq!(c.integrals, d.integrals);
    }

    proptest! {
        #[test]
        fn mirrored_noise_gives_mirrored_path(
            y in -2.0f64..2.0, z in -1.0f64..=1.0,
            noise in prop::collection::vec(-0.2f64..0.2, 1..400),
        ) {
            let p = unit();
            let s = SimState::new(&p, y, z).unwrap();
            let neg: Vec<f64> = noise.iter().map(|v| -v).collect();
            let a = run_with_noise(s, &p, 1e-2, &noise);
            let b = run_with_noise(s.reflect(), &p, 1e-2, &neg);
            for (u, v) in a.iter().zip(&b) {
                prop_assert_eq!(u.reflect(), *v);
            }
        }

        #[test]
        fn delta_moves_only_in_plastic_steps(
            y in -2.0f64..2.0, z in -1.0f64..=1.0,
            noise in prop::collection::vec(-0.3f64..0.3, 1..400),
        ) {
            let p = unit();
            let path = run_with_noise(SimState::new(&p, y, z).unwrap(), &p, 1e-2, &noise);
            for w in path.windows(2) {
                let d = w[1].delta - w[0].delta;
                match w[1].z {
                    z if z == p.y_bound() => prop_assert!(d >= 0.0),
                    z if z == -p.y_bound() => prop_assert!(d <= 0.0),
                    _ => prop_assert_eq!(d, 0.0),
                }
                prop_assert!(w[1].z.abs() <= p.y_bound());
                // x = Δ + z moves by y dt up to rounding.
                prop_assert!((w[1].x() - w[0].x() - w[0].y * 1e-2).abs() < 1e-12);
            }
        }
    }
}
