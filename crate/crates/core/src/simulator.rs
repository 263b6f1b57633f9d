//! Cycle-level Monte Carlo model of the protocol, used to check the
//! analytical throughput.
//!
//! Each cycle draws the channel states, every assigned SU's one-bit report,
//! applies the AP's a-out-of-b rule, then runs the data phase as slotted
//! binary exponential backoff among `N` saturated SUs. Backoff counters
//! decrement once per generic slot (empty, success or collision), which is
//! the slotted chain the fixed-point model describes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assignment::ChannelAssignment;
use crate::error::{precondition, Result};
use crate::mac::{slot_durations, FrameTimings};
use crate::optimizer::SensingDesign;
use crate::real::Real;
use crate::scenario::Scenario;
use crate::sensing::{ChannelDecision, SensingPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_cycles: u64,
    pub seed: u64,
    /// Cycles per replication batch; batches give the standard errors and
    /// run in parallel.
    pub batch_cycles: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_cycles: 10_000,
            seed: 1,
            batch_cycles: 1_000,
        }
    }
}

/// Slot tallies of one contention phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContentionTally {
    pub successes: u64,
    pub collisions: u64,
    pub empty_slots: u64,
    /// Individual transmission attempts (one per transmitting SU per slot).
    pub attempts: u64,
}

impl ContentionTally {
    pub fn slots(&self) -> u64 {
        self.successes + self.collisions + self.empty_slots
    }

    fn add(&mut self, other: &Self) {
        self.successes += other.successes;
        self.collisions += other.collisions;
        self.empty_slots += other.empty_slots;
        self.attempts += other.attempts;
    }
}

/// Backoff state of `n` saturated SUs. It persists across cycles: counters
/// simply hold while the sensing and reporting phases run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Backoff {
    window: u32,
    max_stage: u32,
    stage: Vec<u32>,
    counter: Vec<u64>,
}

impl Backoff {
    /// Every SU at stage 0 with a fresh counter.
    pub fn new<R: Rng + ?Sized>(n: usize, w: u32, m0: u32, rng: &mut R) -> Self {
        let mut b = Self {
            window: w.max(1),
            max_stage: m0,
            stage: vec![0; n],
            counter: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let c = rng.gen_range(0..b.stage_window(0));
            b.counter.push(c);
        }
        b
    }

    fn stage_window(&self, stage: u32) -> u64 {
        u64::from(self.window) << stage
    }

    /// Runs one data phase of `budget_us`. A slot that would end past the
    /// budget is not started.
    pub fn run_phase<T: Real, R: Rng + ?Sized>(
        &mut self,
        budget_us: T,
        frames: &FrameTimings<T>,
        rng: &mut R,
    ) -> ContentionTally {
        let mut tally = ContentionTally::default();
        let n = self.counter.len();
        if n == 0 || !(budget_us > T::zero()) {
            return tally;
        }
        let slots = slot_durations(frames);
        let sigma = frames.slot_us.to_f64_lossy();
        let ts = slots.success.to_f64_lossy();
        let tc = slots.collision.to_f64_lossy();
        let budget = budget_us.to_f64_lossy();
        let mut used = 0.0f64;
        loop {
            let min = *self.counter.iter().min().expect("n >= 1");
            if min > 0 {
                // run of empty slots
                let room = ((budget - used) / sigma).floor();
                if room < 1.0 {
                    break;
                }
                let run = min.min(room as u64);
                used += run as f64 * sigma;
                tally.empty_slots += run;
                self.counter.iter_mut().for_each(|c| *c -= run);
                if run < min {
                    break;
                }
                continue;
            }
            let transmitters = self.counter.iter().filter(|&&c| c == 0).count();
            let success = transmitters == 1;
            let duration = if success { ts } else { tc };
            if used + duration > budget {
                break;
            }
            used += duration;
            tally.attempts += transmitters as u64;
            if success {
                tally.successes += 1;
            } else {
                tally.collisions += 1;
            }
            for k in 0..n {
                if self.counter[k] == 0 {
                    self.stage[k] = if success {
                        0
                    } else {
                        (self.stage[k] + 1).min(self.max_stage)
                    };
                    self.counter[k] = rng.gen_range(0..self.stage_window(self.stage[k]));
                } else {
                    self.counter[k] -= 1;
                }
            }
        }
        tally
    }
}

/// Runs `n` saturated SUs, starting fresh, for `budget_us` of data phase.
pub fn simulate_contention_phase<T: Real, R: Rng + ?Sized>(
    n: usize,
    w: u32,
    m0: u32,
    budget_us: T,
    frames: &FrameTimings<T>,
    rng: &mut R,
) -> ContentionTally {
    if n == 0 || w == 0 {
        return ContentionTally::default();
    }
    Backoff::new(n, w, m0, rng).run_phase(budget_us, frames, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub cycles: u64,
    /// Mean credited payload time per channel and cycle, as a fraction of
    /// the cycle.
    pub nt_mean: f64,
    /// Batch-means standard error of `nt_mean`.
    pub nt_std_error: f64,
    pub idle_cycles: Vec<u64>,
    pub declared_idle: Vec<u64>,
    pub correct_idle: Vec<u64>,
    pub contention: ContentionTally,
    /// Attempts per SU per generic slot.
    pub phi_estimate: f64,
    pub phi_std_error: f64,
}

impl EmpiricalReport {
    /// Fraction of truly idle cycles on which channel `j` was declared idle.
    pub fn idle_declaration_rate(&self, j: usize) -> f64 {
        self.correct_idle[j] as f64 / self.idle_cycles[j].max(1) as f64
    }
}

struct BatchResult {
    cycles: u64,
    credited_us: f64,
    idle_cycles: Vec<u64>,
    declared_idle: Vec<u64>,
    correct_idle: Vec<u64>,
    tally: ContentionTally,
}

#[derive(Clone)]
struct Link {
    su: usize,
    detect: f64,
    false_alarm: f64,
}

/// Simulates `cfg.n_cycles` cycles of the protocol for a fixed assignment and
/// design. Deterministic for a given seed: batch `b` draws from stream `b` of
/// a ChaCha generator keyed by the seed.
pub fn simulate_cycles<T: Real>(
    scenario: &Scenario<T>,
    assignment: &ChannelAssignment,
    design: &SensingDesign<T>,
    cfg: &SimConfig,
) -> Result<EmpiricalReport> {
    if cfg.n_cycles < 1 || cfg.batch_cycles < 1 {
        return precondition("simulation needs at least one cycle per batch");
    }
    design.matches(assignment)?;
    let plan = SensingPlan::new(scenario, assignment)?;
    let perf = plan.evaluate(&design.tau_us)?;
    let m = scenario.num_channels;
    let mut links: Vec<Vec<Link>> = vec![Vec::new(); m];
    let mut thresholds = vec![0usize; m];
    for (j, decision) in perf.channels.iter().enumerate() {
        if let ChannelDecision::Sensed(s) = decision {
            thresholds[j] = s.threshold;
            for i in assignment.sensors_of(j) {
                links[j].push(Link {
                    su: i,
                    detect: perf.link_detection[i][j].expect("sensed link").to_f64_lossy(),
                    false_alarm: perf.link_false_alarm[i][j].expect("sensed link").to_f64_lossy(),
                });
            }
        }
    }
    let p_idle: Vec<f64> = scenario.p_idle.iter().map(|p| p.to_f64_lossy()).collect();
    let budget = scenario.cycle_us() - design.total_sensing_us() - scenario.reporting_us();
    let payload = scenario.frames.payload_us().to_f64_lossy();
    let n = scenario.num_sus;

    let batches = cfg.n_cycles.div_ceil(cfg.batch_cycles);
    let run_batch = |b: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b);
        let cycles = cfg.batch_cycles.min(cfg.n_cycles - b * cfg.batch_cycles);
        let mut out = BatchResult {
            cycles,
            credited_us: 0.0,
            idle_cycles: vec![0; m],
            declared_idle: vec![0; m],
            correct_idle: vec![0; m],
            tally: ContentionTally::default(),
        };
        let mut idle = vec![false; m];
        let mut backoff = Backoff::new(n, design.window, scenario.max_backoff_stage, &mut rng);
        for _ in 0..cycles {
            let mut usable = 0u64;
            for j in 0..m {
                idle[j] = rng.gen::<f64>() < p_idle[j];
                if idle[j] {
                    out.idle_cycles[j] += 1;
                }
                if links[j].is_empty() {
                    continue;
                }
                let busy_reports = links[j]
                    .iter()
                    .filter(|l| {
                        debug_assert!(l.su < n);
                        rng.gen::<f64>() < if idle[j] { l.false_alarm } else { l.detect }
                    })
                    .count();
                if busy_reports < thresholds[j] {
                    out.declared_idle[j] += 1;
                    if idle[j] {
                        out.correct_idle[j] += 1;
                        usable += 1;
                    }
                }
            }
            let tally = backoff.run_phase(budget, &scenario.frames, &mut rng);
            out.credited_us += tally.successes as f64 * payload * usable as f64;
            out.tally.add(&tally);
        }
        out
    };
    let results: Vec<BatchResult> = (0..batches).into_par_iter().map(run_batch).collect();

    let cycle_us = scenario.cycle_us().to_f64_lossy();
    let norm = |credited: f64, cycles: u64| credited / (m as f64 * cycle_us * cycles as f64);
    let mut report = EmpiricalReport {
        cycles: cfg.n_cycles,
        nt_mean: 0.0,
        nt_std_error: 0.0,
        idle_cycles: vec![0; m],
        declared_idle: vec![0; m],
        correct_idle: vec![0; m],
        contention: ContentionTally::default(),
        phi_estimate: 0.0,
        phi_std_error: 0.0,
    };
    let mut credited = 0.0;
    for r in &results {
        credited += r.credited_us;
        report.contention.add(&r.tally);
        for j in 0..m {
            report.idle_cycles[j] += r.idle_cycles[j];
            report.declared_idle[j] += r.declared_idle[j];
            report.correct_idle[j] += r.correct_idle[j];
        }
    }
    report.nt_mean = norm(credited, cfg.n_cycles);
    let su_slots = |t: &ContentionTally| (t.slots() * n as u64) as f64;
    report.phi_estimate = if report.contention.slots() > 0 {
        report.contention.attempts as f64 / su_slots(&report.contention)
    } else {
        0.0
    };
    let nt_batches: Vec<f64> = results.iter().map(|r| norm(r.credited_us, r.cycles)).collect();
    let phi_batches: Vec<f64> = results
        .iter()
        .filter(|r| r.tally.slots() > 0)
        .map(|r| r.tally.attempts as f64 / su_slots(&r.tally))
        .collect();
    report.nt_std_error = batch_std_error(&nt_batches);
    report.phi_std_error = batch_std_error(&phi_batches);
    Ok(report)
}

fn batch_std_error(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lone_station_never_collides() {
        let frames = FrameTimings::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = simulate_contention_phase(1, 16, 3, 5e6, &frames, &mut rng);
        assert_eq!(t.collisions, 0);
        assert!(t.successes > 100);
    }

    #[test]
    fn tiny_budget_runs_nothing() {
        let frames = FrameTimings::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = simulate_contention_phase(4, 16, 3, 19.9, &frames, &mut rng);
        assert_eq!(t, ContentionTally::default());
    }

    #[test]
    fn time_is_conserved() {
        let frames = FrameTimings::<f64>::default();
        let s = slot_durations(&frames);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for budget in [500.0, 20_000.0, 99_120.0] {
            let t = simulate_contention_phase(10, 32, 3, budget, &frames, &mut rng);
            let used = t.successes as f64 * s.success + t.collisions as f64 * s.collision + t.empty_slots as f64 * 20.0;
            assert!(used <= budget + 1e-9);
            assert!(budget - used < s.success.max(s.collision));
            assert!(t.attempts >= t.successes + 2 * t.collisions);
        }
    }
}
