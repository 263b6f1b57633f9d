//! Parameter sweeps over scenarios, producing one row per point.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::assignment::{
    brute_force_channel_assignment, evaluate_assignment, greedy_channel_assignment_with, hungarian_seed,
    round_robin_assignment, AssignmentOutcome, BruteForceLimits, ParameterPolicy,
};
use crate::error::{Error, Result};
use crate::mac::normalized_throughput;
use crate::optimizer::OptimizerOptions;
use crate::real::Real;
use crate::scenario::Scenario;
use crate::sensing::FusionRule;

/// Default contention window when sensing times are fixed rather than
/// optimized.
pub const BASELINE_WINDOW: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Greedy,
    Brute {
        full_fidelity: bool,
    },
    RoundRobin(usize),
    /// The scenario's own assignment.
    Fixed,
    HungarianSeed,
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Greedy => "greedy".into(),
            Algorithm::Brute { full_fidelity: false } => "brute".into(),
            Algorithm::Brute { full_fidelity: true } => "brute-full".into(),
            Algorithm::RoundRobin(w) => format!("rr{w}"),
            Algorithm::Fixed => "fixed".into(),
            Algorithm::HungarianSeed => "hungarian-seed".into(),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "greedy" => Ok(Algorithm::Greedy),
            "brute" => Ok(Algorithm::Brute { full_fidelity: false }),
            "brute-full" => Ok(Algorithm::Brute { full_fidelity: true }),
            "fixed" => Ok(Algorithm::Fixed),
            "hungarian-seed" | "hungarian" => Ok(Algorithm::HungarianSeed),
            other => other
                .strip_prefix("rr")
                .map(|w| w.trim_start_matches([':', '=']))
                .and_then(|w| w.parse().ok())
                .map(Algorithm::RoundRobin)
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "unknown algorithm '{s}' (expected greedy, brute, brute-full, rr<width>, fixed, hungarian-seed)"
                    ))
                }),
        }
    }
}

/// Runs one channel-assignment algorithm with the given parameter policy.
pub fn run_algorithm<T: Real>(
    scenario: &Scenario<T>,
    algorithm: Algorithm,
    policy: ParameterPolicy,
) -> Result<AssignmentOutcome<T>> {
    match algorithm {
        Algorithm::Greedy => greedy_channel_assignment_with(scenario, scenario.delta, policy),
        Algorithm::Brute { full_fidelity } => {
            let mut limits = if full_fidelity {
                BruteForceLimits::full_fidelity()
            } else {
                BruteForceLimits::default()
            };
            if let ParameterPolicy::Optimize(opts) = policy {
                if full_fidelity {
                    limits.options = opts;
                }
            }
            brute_force_channel_assignment(scenario, &limits)
        }
        Algorithm::RoundRobin(width) => {
            let a = round_robin_assignment(scenario.num_sus, scenario.num_channels, width)?;
            evaluate_assignment(scenario, &a, policy, algorithm.name())
        }
        Algorithm::Fixed => {
            let a = scenario
                .assignment
                .clone()
                .ok_or_else(|| Error::Validation("algorithm 'fixed' needs an assignment in the scenario".into()))?;
            evaluate_assignment(scenario, &a, policy, algorithm.name())
        }
        Algorithm::HungarianSeed => {
            let a = hungarian_seed(scenario, policy)?;
            evaluate_assignment(scenario, &a, policy, algorithm.name())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Common idle probability on every channel.
    PIdle,
    /// Shift added to every SNR, dB.
    SnrShift,
    Fusion,
    /// Sensing time as a fraction of the cycle, parameters not optimized.
    FixedTau,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "pidle" | "p-idle" => Ok(SweepParam::PIdle),
            "snr-shift" | "snr" | "dgamma" => Ok(SweepParam::SnrShift),
            "fusion" => Ok(SweepParam::Fusion),
            "fixed-tau" | "tau" => Ok(SweepParam::FixedTau),
            _ => Err(Error::Parse(format!(
                "unknown sweep parameter '{s}' (expected pidle, snr-shift, fusion, fixed-tau)"
            ))),
        }
    }
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::PIdle => "pidle",
            SweepParam::SnrShift => "snr-shift",
            SweepParam::Fusion => "fusion",
            SweepParam::FixedTau => "fixed-tau",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    Number(f64),
    Rule(FusionRule),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Rule(r) => write!(f, "{}", r.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
    pub algorithm: Algorithm,
    /// Parameter search used when sensing times are optimized.
    pub options: OptimizerOptions,
    /// Replaces the optimizer with fixed sensing times (fraction of `T`).
    pub fixed_tau_fraction: Option<f64>,
    pub baseline_window: u32,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<SweepValue>, algorithm: Algorithm) -> Self {
        Self {
            param,
            values,
            algorithm,
            options: OptimizerOptions::default(),
            fixed_tau_fraction: None,
            baseline_window: BASELINE_WINDOW,
        }
    }

    fn policy(&self, fixed_tau: Option<f64>) -> ParameterPolicy {
        match fixed_tau.or(self.fixed_tau_fraction) {
            Some(tau_fraction) => ParameterPolicy::Fixed {
                tau_fraction,
                window: self.baseline_window,
            },
            None => ParameterPolicy::Optimize(self.options),
        }
    }
}

/// Parses a value list: comma-separated items, `a..b` ranges (step 0.1 for
/// `pidle`/`fixed-tau`, 1 for `snr-shift`) or `a..b:step`.
pub fn parse_values(param: SweepParam, text: &str) -> Result<Vec<SweepValue>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if param == SweepParam::Fusion {
            out.push(SweepValue::Rule(item.parse()?));
            continue;
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad sweep value '{s}': {e}")))
        };
        if let Some((start, rest)) = item.split_once("..") {
            let (end, step) = match rest.split_once(':') {
                Some((e, st)) => (num(e)?, num(st)?),
                None => (num(rest)?, if param == SweepParam::SnrShift { 1.0 } else { 0.1 }),
            };
            let start = num(start)?;
            if !(step > 0.0) {
                return Err(Error::Parse(format!("range step must be positive in '{item}'")));
            }
            let dir = if end >= start { 1.0 } else { -1.0 };
            let count = ((end - start).abs() / step + 1e-9).floor() as usize;
            for k in 0..=count {
                // round away accumulated binary noise
                let v = start + dir * step * k as f64;
                out.push(SweepValue::Number((v * 1e12).round() / 1e12));
            }
        } else {
            out.push(SweepValue::Number(num(item)?));
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("sweep value list"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub algorithm: String,
    pub nt: f64,
    pub expected_idle: f64,
    pub single_throughput: f64,
    pub window: u32,
    pub tau_total_us: f64,
    pub wall_ms: f64,
    pub assignment: String,
    pub tau_us: String,
}

impl SweepRow {
    pub const HEADER: [&'static str; 10] = [
        "value",
        "algorithm",
        "nt",
        "expected_idle",
        "single_throughput",
        "window",
        "tau_total_us",
        "wall_ms",
        "assignment",
        "tau_us",
    ];

    fn from_outcome<T: Real>(value: &SweepValue, outcome: &AssignmentOutcome<T>, wall_ms: f64) -> Self {
        let r = &outcome.report;
        Self {
            value: value.to_string(),
            algorithm: outcome.algorithm.clone(),
            nt: r.normalized_throughput.to_f64_lossy(),
            expected_idle: r.expected_idle.to_f64_lossy(),
            single_throughput: r.single_channel_throughput.to_f64_lossy(),
            window: outcome.design.window,
            tau_total_us: r.tau_total_us.to_f64_lossy(),
            wall_ms,
            assignment: outcome.assignment.to_compact(),
            tau_us: outcome.design.compact_tau(),
        }
    }

    pub fn record(&self, with_timing: bool) -> Vec<String> {
        vec![
            self.value.clone(),
            self.algorithm.clone(),
            format!("{}", self.nt),
            format!("{}", self.expected_idle),
            format!("{}", self.single_throughput),
            self.window.to_string(),
            format!("{}", self.tau_total_us),
            if with_timing {
                format!("{:.3}", self.wall_ms)
            } else {
                String::new()
            },
            self.assignment.clone(),
            self.tau_us.clone(),
        ]
    }
}

/// Runs a sweep. Points are evaluated in parallel; rows come back in the
/// order of `spec.values`.
///
/// A `pidle` sweep optimizes once with every channel idle and re-evaluates
/// that assignment and design at each idle probability.
pub fn run_sweep<T: Real>(scenario: &Scenario<T>, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(Error::Empty("sweep value list"));
    }
    if spec.param == SweepParam::PIdle {
        let started = Instant::now();
        let reference = scenario.clone().with_p_idle(T::one());
        let outcome = run_algorithm(&reference, spec.algorithm, spec.policy(None))?;
        let shared_ms = started.elapsed().as_secs_f64() * 1e3;
        return spec
            .values
            .iter()
            .map(|v| {
                let p = match v {
                    SweepValue::Number(p) if (0.0..=1.0).contains(p) => *p,
                    other => return Err(Error::Validation(format!("idle probability {other} outside [0, 1]"))),
                };
                let started = Instant::now();
                let s = scenario.clone().with_p_idle(T::lit(p));
                let report = normalized_throughput(&s, &outcome.assignment, &outcome.design)?;
                let point = AssignmentOutcome {
                    report,
                    ..outcome.clone()
                };
                let ms = shared_ms + started.elapsed().as_secs_f64() * 1e3;
                Ok(SweepRow::from_outcome(v, &point, ms))
            })
            .collect();
    }
    spec.values
        .par_iter()
        .map(|v| {
            let started = Instant::now();
            let (s, policy) = match (spec.param, v) {
                (SweepParam::SnrShift, SweepValue::Number(d)) => {
                    (scenario.clone().with_snr_shift(T::lit(*d)), spec.policy(None))
                }
                (SweepParam::Fusion, SweepValue::Rule(r)) => (scenario.clone().with_fusion(*r), spec.policy(None)),
                (SweepParam::FixedTau, SweepValue::Number(f)) => (scenario.clone(), spec.policy(Some(*f))),
                (p, v) => {
                    return Err(Error::Validation(format!(
                        "value {v} does not fit sweep parameter {}",
                        p.name()
                    )))
                }
            };
            s.validate()?;
            let outcome = run_algorithm(&s, spec.algorithm, policy)?;
            Ok(SweepRow::from_outcome(
                v,
                &outcome,
                started.elapsed().as_secs_f64() * 1e3,
            ))
        })
        .collect()
}
