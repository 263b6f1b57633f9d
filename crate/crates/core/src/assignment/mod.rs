//! Which SU senses which channel, and the searches that choose it.

mod hungarian;

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use hungarian::hungarian_min_cost;

use crate::error::{precondition, Error, Result};
use crate::mac::{normalized_throughput, ThroughputReport};
use crate::optimizer::{Optimizer, OptimizerOptions, Optimum, SensingDesign};
use crate::real::Real;
use crate::scenario::Scenario;

/// N×M sensing relation; row `i` is the channel set `S_i` of SU `i`, column
/// `j` the reporting set `S_j^U` of channel `j`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ChannelAssignment {
    num_sus: usize,
    num_channels: usize,
    cells: Vec<bool>,
}

impl ChannelAssignment {
    pub fn empty(num_sus: usize, num_channels: usize) -> Self {
        Self {
            num_sus,
            num_channels,
            cells: vec![false; num_sus * num_channels],
        }
    }

    /// Every SU senses every channel.
    pub fn full(num_sus: usize, num_channels: usize) -> Self {
        Self {
            num_sus,
            num_channels,
            cells: vec![true; num_sus * num_channels],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged assignment rows");
        Self {
            num_sus: rows.len(),
            num_channels: m,
            cells: rows.iter().flatten().copied().collect(),
        }
    }

    /// Row-major cells, the first cell being the most significant bit.
    /// Numeric order of masks is lexicographic order of matrices.
    pub fn from_mask(num_sus: usize, num_channels: usize, mask: u64) -> Self {
        let total = num_sus * num_channels;
        let cells = (0..total).map(|k| mask >> (total - 1 - k) & 1 == 1).collect();
        Self {
            num_sus,
            num_channels,
            cells,
        }
    }

    pub fn num_sus(&self) -> usize {
        self.num_sus
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.num_channels + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.cells[i * self.num_channels + j] = value;
    }

    pub fn with(&self, i: usize, j: usize) -> Self {
        let mut next = self.clone();
        next.set(i, j, true);
        next
    }

    /// `S_i`, ascending.
    pub fn channels_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_channels).filter(move |&j| self.get(i, j))
    }

    /// `S_j^U`, ascending.
    pub fn sensors_of(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_sus).filter(move |&i| self.get(i, j))
    }

    /// `b_j`.
    pub fn reporters(&self, j: usize) -> usize {
        self.sensors_of(j).count()
    }

    /// Assigned `(i, j)` pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_sus).flat_map(move |i| self.channels_of(i).map(move |j| (i, j)))
    }

    pub fn num_pairs(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.cells
            .chunks(self.num_channels.max(1))
            .map(<[bool]>::to_vec)
            .collect()
    }

    /// One `0`/`1` string per SU.
    pub fn compact_rows(&self) -> Vec<String> {
        (0..self.num_sus)
            .map(|i| {
                (0..self.num_channels)
                    .map(|j| if self.get(i, j) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }

    pub fn from_compact_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| {
                r.as_ref()
                    .trim()
                    .chars()
                    .map(|c| match c {
                        '1' | 'x' | 'X' => Ok(true),
                        '0' | '.' | '-' => Ok(false),
                        other => Err(Error::Parse(format!("assignment cell '{other}' is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let m = parsed.first().map_or(0, Vec::len);
        if parsed.is_empty() || m == 0 || parsed.iter().any(|r| r.len() != m) {
            return Err(Error::Parse(
                "assignment rows must be non-empty and equally long".into(),
            ));
        }
        Ok(Self::from_rows(&parsed))
    }

    /// Rows joined by `;`, e.g. `1100;0110`.
    pub fn to_compact(&self) -> String {
        self.compact_rows().join(";")
    }

    pub fn parse_compact(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.split(';').collect();
        Self::from_compact_rows(&rows)
    }

    pub fn has_sensed_channel(&self) -> bool {
        self.cells.iter().any(|&c| c)
    }
}

impl fmt::Debug for ChannelAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChannelAssignment({})", self.to_compact())
    }
}

impl fmt::Display for ChannelAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.compact_rows().iter().enumerate() {
            let cells: Vec<&str> = row.chars().map(|c| if c == '1' { "x" } else { "." }).collect();
            writeln!(f, "SU{:<3} {}", i + 1, cells.join(" "))?;
        }
        Ok(())
    }
}

/// How sensing/access parameters are chosen for a candidate assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterPolicy {
    /// Full window/sensing-time search.
    Optimize(OptimizerOptions),
    /// Every assigned pair senses for `tau_fraction · T`, window fixed.
    Fixed { tau_fraction: f64, window: u32 },
}

impl Default for ParameterPolicy {
    fn default() -> Self {
        ParameterPolicy::Optimize(OptimizerOptions::default())
    }
}

/// Evaluates assignments under a [`ParameterPolicy`], remembering results.
struct Evaluator<'a, T> {
    scenario: &'a Scenario<T>,
    policy: ParameterPolicy,
    optimizer: Option<Optimizer<'a, T>>,
    cache: HashMap<ChannelAssignment, Optimum<T>>,
}

impl<'a, T: Real> Evaluator<'a, T> {
    fn new(scenario: &'a Scenario<T>, policy: ParameterPolicy) -> Result<Self> {
        let optimizer = match policy {
            ParameterPolicy::Optimize(opts) => Some(Optimizer::new(scenario, opts)?),
            ParameterPolicy::Fixed { tau_fraction, window } => {
                if !(tau_fraction > 0.0 && tau_fraction <= 1.0) || window < 1 {
                    return precondition("fixed policy needs tau_fraction in (0, 1] and window >= 1");
                }
                None
            }
        };
        Ok(Self {
            scenario,
            policy,
            optimizer,
            cache: HashMap::new(),
        })
    }

    fn compute(&self, assignment: &ChannelAssignment) -> Result<Optimum<T>> {
        if !assignment.has_sensed_channel() {
            return unsensed_optimum(self.scenario, assignment);
        }
        match (&self.optimizer, self.policy) {
            (Some(opt), _) => opt.optimize(assignment),
            (None, ParameterPolicy::Fixed { tau_fraction, window }) => {
                let tau = self.scenario.cycle_us() * T::lit(tau_fraction);
                let design = SensingDesign::uniform(assignment, tau, window);
                let report = normalized_throughput(self.scenario, assignment, &design)?;
                let nt = report.normalized_throughput;
                Ok(Optimum {
                    design,
                    report,
                    evaluations: 1,
                    window_trace: vec![(window, nt)],
                })
            }
            (None, ParameterPolicy::Optimize(_)) => unreachable!("optimizer built for Optimize policy"),
        }
    }

    /// Evaluates all uncached candidates (in parallel) and returns their NT.
    fn batch(&mut self, candidates: &[ChannelAssignment]) -> Result<Vec<T>> {
        let missing: Vec<&ChannelAssignment> = candidates.iter().filter(|a| !self.cache.contains_key(*a)).collect();
        let fresh = missing
            .par_iter()
            .map(|a| self.compute(a).map(|o| ((*a).clone(), o)))
            .collect::<Result<Vec<_>>>()?;
        self.cache.extend(fresh);
        Ok(candidates
            .iter()
            .map(|a| self.cache[a].normalized_throughput())
            .collect())
    }

    fn get(&mut self, assignment: &ChannelAssignment) -> Result<&Optimum<T>> {
        if !self.cache.contains_key(assignment) {
            let o = self.compute(assignment)?;
            self.cache.insert(assignment.clone(), o);
        }
        Ok(&self.cache[assignment])
    }
}

/// An assignment with no sensing at all: zero sensing times, NT = 0.
fn unsensed_optimum<T: Real>(scenario: &Scenario<T>, assignment: &ChannelAssignment) -> Result<Optimum<T>> {
    let design = SensingDesign::uniform(assignment, T::zero(), 1);
    let report = normalized_throughput(scenario, assignment, &design)?;
    Ok(Optimum {
        design,
        report,
        evaluations: 1,
        window_trace: Vec::new(),
    })
}

/// Final result of a channel-assignment search.
#[derive(Debug, Clone)]
pub struct AssignmentOutcome<T> {
    pub algorithm: String,
    pub assignment: ChannelAssignment,
    pub design: SensingDesign<T>,
    pub report: ThroughputReport<T>,
    /// Distinct assignments whose parameters were searched.
    pub evaluations: usize,
    pub wall_clock: Duration,
    /// Greedy only: the Hungarian starting point and its NT.
    pub seed: Option<(ChannelAssignment, T)>,
    /// Greedy only: channels added and passes of the outer loop.
    pub additions: usize,
    pub rounds: usize,
}

impl<T: Real> AssignmentOutcome<T> {
    pub fn normalized_throughput(&self) -> T {
        self.report.normalized_throughput
    }
}

/// Hungarian starting point of the greedy search: optimize with every SU
/// sensing every channel, then give each channel to one SU minimizing the
/// total optimized sensing time.
pub fn hungarian_seed<T: Real>(scenario: &Scenario<T>, policy: ParameterPolicy) -> Result<ChannelAssignment> {
    let full = ChannelAssignment::full(scenario.num_sus, scenario.num_channels);
    let costs = match policy {
        ParameterPolicy::Optimize(opts) => Optimizer::new(scenario, opts)?.optimize(&full)?.design.tau_us,
        ParameterPolicy::Fixed { tau_fraction, .. } => {
            vec![vec![scenario.cycle_us() * T::lit(tau_fraction); scenario.num_channels]; scenario.num_sus]
        }
    };
    let owner = hungarian_min_cost(&costs)?;
    let mut seed = ChannelAssignment::empty(scenario.num_sus, scenario.num_channels);
    for (j, &i) in owner.iter().enumerate() {
        seed.set(i, j, true);
    }
    Ok(seed)
}

/// Greedy channel assignment with fully optimized parameters.
pub fn greedy_channel_assignment<T: Real>(scenario: &Scenario<T>, delta: T) -> Result<AssignmentOutcome<T>> {
    greedy_channel_assignment_with(scenario, delta, ParameterPolicy::default())
}

/// Greedy growth from the Hungarian seed: repeatedly add the (SU, channel)
/// pair with the largest throughput gain while that gain exceeds `delta`.
///
/// When a pass of additions ends, the outer loop restarts with the grown
/// assignment kept; it stops after a pass that adds nothing.
pub fn greedy_channel_assignment_with<T: Real>(
    scenario: &Scenario<T>,
    delta: T,
    policy: ParameterPolicy,
) -> Result<AssignmentOutcome<T>> {
    if !(delta >= T::zero()) {
        return precondition(format!("delta must be non-negative, got {delta}"));
    }
    let started = Instant::now();
    let mut ev = Evaluator::new(scenario, policy)?;
    let seed = hungarian_seed(scenario, policy)?;
    let seed_nt = ev.get(&seed)?.normalized_throughput();
    let mut current = seed.clone();
    let mut additions = 0;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut added_this_round = 0;
        loop {
            let incumbent = ev.get(&current)?.normalized_throughput();
            let moves: Vec<(usize, usize)> = (0..scenario.num_sus)
                .flat_map(|i| (0..scenario.num_channels).map(move |j| (i, j)))
                .filter(|&(i, j)| !current.get(i, j))
                .collect();
            if moves.is_empty() {
                break;
            }
            let candidates: Vec<ChannelAssignment> = moves.iter().map(|&(i, j)| current.with(i, j)).collect();
            let values = ev.batch(&candidates)?;
            let mut best = 0;
            for k in 1..values.len() {
                if values[k] > values[best] {
                    best = k;
                }
            }
            if values[best] - incumbent > delta {
                current = candidates[best].clone();
                added_this_round += 1;
                additions += 1;
            } else {
                break;
            }
        }
        if added_this_round == 0 {
            break;
        }
    }
    let result = ev.get(&current)?.clone();
    Ok(AssignmentOutcome {
        algorithm: match policy {
            ParameterPolicy::Optimize(_) => "greedy".into(),
            ParameterPolicy::Fixed { tau_fraction, .. } => format!("greedy-fixed{}", tau_fraction),
        },
        assignment: current,
        design: result.design,
        report: result.report,
        evaluations: ev.cache.len(),
        wall_clock: started.elapsed(),
        seed: Some((seed, seed_nt)),
        additions,
        rounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceLimits {
    pub max_candidates: u128,
    pub options: OptimizerOptions,
}

impl Default for BruteForceLimits {
    fn default() -> Self {
        Self {
            max_candidates: 1 << 20,
            options: OptimizerOptions::coarse(),
        }
    }
}

impl BruteForceLimits {
    pub fn full_fidelity() -> Self {
        Self {
            options: OptimizerOptions::default(),
            ..Self::default()
        }
    }
}

/// Tries all `2^(N·M)` assignments, including those that leave SUs idle or
/// channels unsensed. Ties go to the lexicographically smallest matrix.
pub fn brute_force_channel_assignment<T: Real>(
    scenario: &Scenario<T>,
    limits: &BruteForceLimits,
) -> Result<AssignmentOutcome<T>> {
    let started = Instant::now();
    let bits = scenario.num_sus * scenario.num_channels;
    let needed = if bits >= 127 { u128::MAX } else { 1u128 << bits };
    if needed > limits.max_candidates || bits > 63 {
        return Err(Error::TooLarge {
            what: "brute-force channel assignment",
            needed,
            limit: limits.max_candidates,
        });
    }
    let policy = ParameterPolicy::Optimize(limits.options);
    let ev = Evaluator::new(scenario, policy)?;
    let (n, m) = (scenario.num_sus, scenario.num_channels);
    let count = 1u64 << bits;
    let (best_nt, best_mask) = (0..count)
        .into_par_iter()
        .map(|mask| {
            let a = ChannelAssignment::from_mask(n, m, mask);
            ev.compute(&a).map(|o| (o.normalized_throughput(), mask))
        })
        .try_reduce(
            || (T::neg_infinity(), u64::MAX),
            |x, y| Ok(if x.0 > y.0 || (x.0 == y.0 && x.1 < y.1) { x } else { y }),
        )?;
    let assignment = ChannelAssignment::from_mask(n, m, best_mask);
    let result = ev.compute(&assignment)?;
    debug_assert_eq!(result.normalized_throughput(), best_nt);
    Ok(AssignmentOutcome {
        algorithm: "brute".into(),
        assignment,
        design: result.design,
        report: result.report,
        evaluations: count as usize,
        wall_clock: started.elapsed(),
        seed: None,
        additions: 0,
        rounds: 0,
    })
}

/// Round-robin sensing pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundRobinPattern {
    /// SU `i` starts at channel `(i-1) mod M + 1` and takes the next
    /// `width - 1` channels without wrapping past channel `M`.
    Staircase,
    /// As `Staircase` but wrapping around to channel 1.
    Cyclic,
}

/// Round-robin assignment in the staircase pattern: with N=10, M=4 widths
/// 1, 2 and 3 give
///
/// ```text
/// width 1      width 2      width 3
/// x . . .      x x . .      x x x .
/// . x . .      . x x .      . x x x
/// . . x .      . . x x      . . x x
/// . . . x      . . . x      . . . x
/// (repeats from SU5 and SU9)
/// ```
pub fn round_robin_assignment(n: usize, m: usize, width: usize) -> Result<ChannelAssignment> {
    round_robin_with(n, m, width, RoundRobinPattern::Staircase)
}

pub fn round_robin_with(n: usize, m: usize, width: usize, pattern: RoundRobinPattern) -> Result<ChannelAssignment> {
    if n == 0 || m == 0 {
        return Err(Error::Empty("round-robin dimensions"));
    }
    if width < 1 || width > m {
        return Err(Error::Domain(format!("round-robin width {width} outside 1..={m}")));
    }
    let mut a = ChannelAssignment::empty(n, m);
    for i in 0..n {
        let start = i % m;
        for k in 0..width {
            match pattern {
                RoundRobinPattern::Staircase if start + k < m => a.set(i, start + k, true),
                RoundRobinPattern::Staircase => {}
                RoundRobinPattern::Cyclic => a.set(i, (start + k) % m, true),
            }
        }
    }
    Ok(a)
}

/// Parameters and throughput for a given assignment under `policy`.
pub fn evaluate_assignment<T: Real>(
    scenario: &Scenario<T>,
    assignment: &ChannelAssignment,
    policy: ParameterPolicy,
    algorithm: impl Into<String>,
) -> Result<AssignmentOutcome<T>> {
    let started = Instant::now();
    let ev = Evaluator::new(scenario, policy)?;
    let o = ev.compute(assignment)?;
    Ok(AssignmentOutcome {
        algorithm: algorithm.into(),
        assignment: assignment.clone(),
        design: o.design,
        report: o.report,
        evaluations: 1,
        wall_clock: started.elapsed(),
        seed: None,
        additions: 0,
        rounds: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_follow_lexicographic_order() {
        let a = ChannelAssignment::from_mask(2, 2, 0b1000);
        assert_eq!(a.to_compact(), "10;00");
        let b = ChannelAssignment::from_mask(2, 2, 0b0001);
        assert_eq!(b.to_compact(), "00;01");
        assert_eq!(
            ChannelAssignment::from_mask(2, 3, 0b111111),
            ChannelAssignment::full(2, 3)
        );
    }

    #[test]
    fn derived_sets() {
        let a = ChannelAssignment::parse_compact("110;011").unwrap();
        assert_eq!(a.channels_of(0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(a.sensors_of(1).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(a.reporters(2), 1);
        assert_eq!(a.pairs().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (1, 1), (1, 2)]);
        assert_eq!(a.num_pairs(), 4);
        assert!(ChannelAssignment::parse_compact("11;0").is_err());
        assert!(ChannelAssignment::parse_compact("12").is_err());
    }

    #[test]
    fn round_robin_patterns() {
        let case1 = round_robin_assignment(10, 4, 1).unwrap();
        assert_eq!(
            case1.compact_rows(),
            ["1000", "0100", "0010", "0001", "1000", "0100", "0010", "0001", "1000", "0100"]
        );
        let case2 = round_robin_assignment(10, 4, 2).unwrap();
        assert_eq!(
            case2.compact_rows(),
            ["1100", "0110", "0011", "0001", "1100", "0110", "0011", "0001", "1100", "0110"]
        );
        let case3 = round_robin_assignment(10, 4, 3).unwrap();
        assert_eq!(
            case3.compact_rows(),
            ["1110", "0111", "0011", "0001", "1110", "0111", "0011", "0001", "1110", "0111"]
        );
        let cyclic = round_robin_with(10, 4, 4, RoundRobinPattern::Cyclic).unwrap();
        assert_eq!(cyclic, ChannelAssignment::full(10, 4));
        let cyclic2 = round_robin_with(5, 4, 2, RoundRobinPattern::Cyclic).unwrap();
        assert_eq!(cyclic2.compact_rows()[3], "1001");
        assert!(round_robin_assignment(10, 4, 0).is_err());
        assert!(round_robin_assignment(10, 4, 5).is_err());
    }
}
