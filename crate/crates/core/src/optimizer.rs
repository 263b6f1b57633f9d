//! Joint search over per-link sensing times and the contention window.
//!
//! For every candidate window `W` the sensing times start at a common
//! fraction of the cycle and are improved one coordinate at a time: SU by SU,
//! channel by channel, each `τ^{ij}` is re-chosen by a log-grid scan with a
//! golden-section polish while everything else stays fixed. The best
//! `(W, τ)` over all windows wins. The fused detection constraint is met with
//! equality by construction (see [`crate::sensing::SensingPlan`]).

use rayon::prelude::*;

use crate::assignment::ChannelAssignment;
use crate::error::{precondition, Error, Result};
use crate::mac::{contention_stats, report_with, throughput_from_stats, ContentionStats, ThroughputReport};
use crate::real::Real;
use crate::scenario::Scenario;
use crate::sensing::SensingPlan;

/// Sensing-time matrix (µs, zero where unassigned) and contention window.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingDesign<T> {
    pub tau_us: Vec<Vec<T>>,
    pub window: u32,
}

impl<T: Real> SensingDesign<T> {
    /// Same sensing time on every assigned pair.
    pub fn uniform(assignment: &ChannelAssignment, tau_us: T, window: u32) -> Self {
        let tau_us = (0..assignment.num_sus())
            .map(|i| {
                (0..assignment.num_channels())
                    .map(|j| if assignment.get(i, j) { tau_us } else { T::zero() })
                    .collect()
            })
            .collect();
        Self { tau_us, window }
    }

    /// `τ_i = Σ_j τ^{ij}` for every SU.
    pub fn per_su_sensing_us(&self) -> Vec<T> {
        self.tau_us.iter().map(|row| row_sum(row)).collect()
    }

    /// Length of the sensing phase, `max_i τ_i`.
    pub fn total_sensing_us(&self) -> T {
        self.tau_us.iter().map(|row| row_sum(row)).fold(T::zero(), T::max)
    }

    pub(crate) fn check_against(&self, scenario: &Scenario<T>, plan: &SensingPlan<T>) -> Result<()> {
        let _ = plan;
        if self.tau_us.len() != scenario.num_sus || self.tau_us.iter().any(|r| r.len() != scenario.num_channels) {
            return precondition(format!(
                "design must be a {}x{} matrix",
                scenario.num_sus, scenario.num_channels
            ));
        }
        if self.window < 1 {
            return precondition("contention window must be at least 1");
        }
        let cycle = scenario.cycle_us();
        for (i, row) in self.tau_us.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                if !(t >= T::zero() && t <= cycle) {
                    return precondition(format!(
                        "sensing time {t} us for SU {} on channel {} is outside [0, T]",
                        i + 1,
                        j + 1
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks that sensing times are positive exactly on assigned pairs.
    pub fn matches(&self, assignment: &ChannelAssignment) -> Result<()> {
        let (n, m) = (assignment.num_sus(), assignment.num_channels());
        if self.tau_us.len() != n || self.tau_us.iter().any(|r| r.len() != m) {
            return precondition(format!("sensing-time matrix is not {n}×{m}"));
        }
        for (i, row) in self.tau_us.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                let assigned = assignment.get(i, j);
                if assigned != (t > T::zero()) {
                    return precondition(format!(
                        "SU {} channel {}: sensing time {t} does not match assignment ({})",
                        i + 1,
                        j + 1,
                        if assigned { "assigned" } else { "unassigned" }
                    ));
                }
            }
        }
        Ok(())
    }

    /// Rows of space-separated µs values joined by `;`.
    pub fn compact_tau(&self) -> String {
        self.tau_us
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| format!("{}", v.to_f64_lossy()))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_compact_tau(text: &str, window: u32) -> Result<Self> {
        let tau_us = text
            .split(';')
            .map(|row| {
                row.split_whitespace()
                    .map(|v| {
                        v.parse::<f64>()
                            .map(T::lit)
                            .map_err(|e| Error::Parse(format!("bad sensing time '{v}': {e}")))
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tau_us, window })
    }
}

#[inline]
fn row_sum<T: Real>(row: &[T]) -> T {
    row.iter().fold(T::zero(), |acc, &v| acc + v)
}

/// Which windows in `[1, W_max]` are tried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowStride {
    /// Every integer up to 256, geometric beyond.
    Auto,
    All,
    /// Geometric grid with the given ratio, then ±2 integer refinement
    /// around the best grid window.
    Geometric {
        ratio: f64,
    },
}

/// How the window search is combined with the sensing-time search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSearch {
    /// A separate sensing-time search for every window, best kept.
    PerWindow,
    /// One sensing-time search whose objective is the best NT over all
    /// windows. Same maximum, far fewer sensing evaluations.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Overrides the scenario's `w_max` when set.
    pub w_max: Option<u32>,
    pub stride: WindowStride,
    pub window_search: WindowSearch,
    /// Log-spaced points per scalar search.
    pub grid_points: usize,
    /// Golden-section polish down to this relative bracket width.
    pub refine_rel_width: Option<f64>,
    pub coordinate_passes: usize,
    /// A scalar search replaces the incumbent only if it beats it by more
    /// than this (absolute NT); also stops extra passes early.
    pub improvement_tol: f64,
    /// Lower end of the τ grid as a fraction of the cycle.
    pub tau_min_fraction: f64,
    /// Starting sensing time as a fraction of the cycle.
    pub init_fraction: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            w_max: None,
            stride: WindowStride::Auto,
            window_search: WindowSearch::PerWindow,
            grid_points: 64,
            refine_rel_width: Some(1e-4),
            coordinate_passes: 4,
            improvement_tol: 1e-9,
            tau_min_fraction: 1e-5,
            init_fraction: 0.01,
        }
    }
}

impl OptimizerOptions {
    /// Cheaper settings for inner loops of exhaustive searches.
    pub fn coarse() -> Self {
        Self {
            stride: WindowStride::Geometric { ratio: 1.25 },
            window_search: WindowSearch::Joint,
            grid_points: 16,
            refine_rel_width: Some(1e-2),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 1 || self.coordinate_passes < 1 || self.w_max == Some(0) {
            return precondition("optimizer counts must be at least 1");
        }
        if let WindowStride::Geometric { ratio } = self.stride {
            if !(ratio > 1.0) {
                return precondition("geometric window ratio must exceed 1");
            }
        }
        if !(self.tau_min_fraction > 0.0 && self.tau_min_fraction < 1.0) {
            return precondition("tau_min_fraction must be in (0, 1)");
        }
        if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) {
            return precondition("init_fraction must be in (0, 1]");
        }
        Ok(())
    }

    fn windows(&self, w_max: u32) -> (Vec<u32>, bool) {
        let geometric = |ratio: f64| {
            let mut out = Vec::new();
            let mut w = 1u32;
            while w <= w_max {
                out.push(w);
                let next = (f64::from(w) * ratio).round() as u32;
                w = next.max(w + 1);
            }
            if out.last() != Some(&w_max) {
                out.push(w_max);
            }
            out
        };
        match self.stride {
            WindowStride::All => ((1..=w_max).collect(), false),
            WindowStride::Auto if w_max <= 256 => ((1..=w_max).collect(), false),
            WindowStride::Auto => (geometric(1.1), true),
            WindowStride::Geometric { ratio } => (geometric(ratio), true),
        }
    }
}

/// Search interval for one sensing time, µs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauRange<T> {
    pub min: T,
    pub max: T,
}

/// Maximizes a scalar objective over `(min, max]`.
///
/// Scans `grid_points` log-spaced points (the first just above `min`, the
/// last at `max`), keeps the first best point, then polishes with a
/// golden-section search between the grid neighbours of the winner. A
/// polished point replaces the grid winner only if strictly better. Returns
/// `(τ*, objective(τ*))`.
pub fn scalar_tau_search<T: Real, F: FnMut(T) -> T>(
    mut objective: F,
    range: TauRange<T>,
    opts: &OptimizerOptions,
) -> (T, T) {
    let g = opts.grid_points.max(1);
    let ratio = (range.max / range.min).powf(T::one() / T::from_count(g));
    let point = |k: usize| {
        if k == g {
            range.max
        } else {
            range.min * ratio.powi(k as i32)
        }
    };
    let mut best_k = 1;
    let mut best_x = point(1);
    let mut best_v = objective(best_x);
    for k in 2..=g {
        let x = point(k);
        let v = objective(x);
        if v > best_v {
            best_k = k;
            best_x = x;
            best_v = v;
        }
    }
    if let Some(rel) = opts.refine_rel_width {
        let mut lo = point(best_k - 1);
        let mut hi = point((best_k + 1).min(g));
        let inv_phi = T::lit(0.618_033_988_749_894_9);
        let rel = T::lit(rel);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut v1 = objective(x1);
        let mut v2 = objective(x2);
        for _ in 0..200 {
            for (x, v) in [(x1, v1), (x2, v2)] {
                if v > best_v {
                    best_x = x;
                    best_v = v;
                }
            }
            if hi - lo <= rel * (hi + lo) * T::lit(0.5) {
                break;
            }
            if v1 >= v2 {
                hi = x2;
                x2 = x1;
                v2 = v1;
                x1 = hi - inv_phi * (hi - lo);
                v1 = objective(x1);
            } else {
                lo = x1;
                x1 = x2;
                v1 = v2;
                x2 = lo + inv_phi * (hi - lo);
                v2 = objective(x2);
            }
        }
    }
    (best_x, best_v)
}

/// Result of a parameter search for one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum<T> {
    pub design: SensingDesign<T>,
    pub report: ThroughputReport<T>,
    /// Objective evaluations spent.
    pub evaluations: u64,
    /// Best NT reached for each window tried, in the order tried.
    pub window_trace: Vec<(u32, T)>,
}

impl<T: Real> Optimum<T> {
    pub fn normalized_throughput(&self) -> T {
        self.report.normalized_throughput
    }
}

/// Incremental NT evaluation for coordinate moves.
struct Evaluator<'a, T> {
    scenario: &'a Scenario<T>,
    plan: &'a SensingPlan<T>,
    tau: Vec<Vec<T>>,
    channel_pf: Vec<Option<T>>,
    pf_buf: Vec<Option<T>>,
    scratch: Vec<T>,
    evaluations: u64,
}

impl<'a, T: Real> Evaluator<'a, T> {
    fn new(scenario: &'a Scenario<T>, plan: &'a SensingPlan<T>, tau: Vec<Vec<T>>) -> Self {
        let mut ev = Self {
            scenario,
            plan,
            tau,
            channel_pf: vec![None; plan.num_channels()],
            pf_buf: Vec::new(),
            scratch: Vec::new(),
            evaluations: 0,
        };
        for j in 0..plan.num_channels() {
            ev.refresh_channel(j);
        }
        ev
    }

    fn refresh_channel(&mut self, j: usize) {
        let tau = &self.tau;
        self.channel_pf[j] = self.plan.channel_false_alarm_with(&mut self.scratch, j, |i| tau[i][j]);
    }

    fn expected_idle(&self, channel_pf: &[Option<T>]) -> T {
        channel_pf
            .iter()
            .zip(&self.scenario.p_idle)
            .map(|(pf, &p)| p * pf.map_or(T::zero(), |v| T::one() - v))
            .fold(T::zero(), |acc, v| acc + v)
    }

    fn nt(&self, stats: &ContentionStats<T>, tau_total: T, expected_idle: T) -> T {
        let s = self.scenario;
        let single = throughput_from_stats(stats, tau_total, s.num_sus, &s.frames, &s.cycle);
        single * expected_idle / T::from_count(s.num_channels)
    }

    /// Best NT over the given windows.
    fn best_nt(&self, stats: &[ContentionStats<T>], tau_total: T, expected_idle: T) -> T {
        stats
            .iter()
            .map(|st| self.nt(st, tau_total, expected_idle))
            .fold(T::neg_infinity(), T::max)
    }

    fn current(&mut self, stats: &[ContentionStats<T>]) -> T {
        self.evaluations += 1;
        let e = self.expected_idle(&self.channel_pf);
        self.best_nt(stats, total_sensing(&self.tau), e)
    }

    /// NT of the candidate matrix, which differs from the current one only
    /// on the `changed` channels.
    fn probe(&mut self, stats: &[ContentionStats<T>], candidate: &[Vec<T>], changed: &[usize]) -> T {
        self.evaluations += 1;
        let mut pf = std::mem::take(&mut self.pf_buf);
        pf.clear();
        pf.extend_from_slice(&self.channel_pf);
        for &j in changed {
            pf[j] = self
                .plan
                .channel_false_alarm_with(&mut self.scratch, j, |k| candidate[k][j]);
        }
        let e = self.expected_idle(&pf);
        self.pf_buf = pf;
        self.best_nt(stats, total_sensing(candidate), e)
    }

    fn commit(&mut self, candidate: Vec<Vec<T>>, changed: &[usize]) {
        self.tau = candidate;
        for &j in changed {
            self.refresh_channel(j);
        }
    }
}

fn total_sensing<T: Real>(tau: &[Vec<T>]) -> T {
    tau.iter().map(|r| row_sum(r)).fold(T::zero(), T::max)
}

/// Every row rescaled so that it sums to `budget`; empty rows stay empty.
fn scaled_rows<T: Real>(tau: &[Vec<T>], budget: T) -> Vec<Vec<T>> {
    tau.iter()
        .map(|row| {
            let sum = row_sum(row);
            if sum > T::zero() {
                row.iter().map(|&v| budget * (v / sum)).collect()
            } else {
                row.clone()
            }
        })
        .collect()
}

/// Row `i` with `τ^{ij} = value` and its other channels rescaled to keep
/// the row sum at `budget`.
fn split_row<T: Real>(row: &[T], j: usize, value: T, budget: T) -> Vec<T> {
    let rest = row_sum(row) - row[j];
    row.iter()
        .enumerate()
        .map(|(c, &v)| {
            if c == j {
                value
            } else if v > T::zero() {
                (budget - value) * (v / rest)
            } else {
                v
            }
        })
        .collect()
}

struct WindowResult<T> {
    window: u32,
    nt: T,
    tau: Vec<Vec<T>>,
    evaluations: u64,
}

/// `a` is preferred to `b`: higher NT, then smaller W, then lexicographically
/// smaller τ.
fn preferred<T: Real>(a: (T, u32, &[Vec<T>]), b: (T, u32, &[Vec<T>])) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    for (ra, rb) in a.2.iter().zip(b.2) {
        for (x, y) in ra.iter().zip(rb) {
            if x != y {
                return x < y;
            }
        }
    }
    false
}

/// Parameter search bound to one scenario; caches contention statistics so
/// repeated searches over many assignments share them.
pub struct Optimizer<'a, T> {
    scenario: &'a Scenario<T>,
    opts: OptimizerOptions,
    w_max: u32,
    windows: Vec<u32>,
    refine_windows: bool,
    stats: Vec<ContentionStats<T>>,
}

impl<'a, T: Real> Optimizer<'a, T> {
    pub fn new(scenario: &'a Scenario<T>, opts: OptimizerOptions) -> Result<Self> {
        opts.validate()?;
        let w_max = opts.w_max.unwrap_or(scenario.w_max).max(1);
        let (windows, refine_windows) = opts.windows(w_max);
        let stats = windows
            .iter()
            .map(|&w| contention_stats(scenario.num_sus, w, scenario.max_backoff_stage, &scenario.frames))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scenario,
            opts,
            w_max,
            windows,
            refine_windows,
            stats,
        })
    }

    pub fn options(&self) -> &OptimizerOptions {
        &self.opts
    }

    /// Windows within ±2 of `center` that the grid skipped.
    fn neighbours(&self, center: u32) -> Vec<u32> {
        (center.saturating_sub(2).max(1)..=(center + 2).min(self.w_max))
            .filter(|w| !self.windows.contains(w))
            .collect()
    }

    fn tau_range(&self) -> TauRange<T> {
        let cycle = self.scenario.cycle_us();
        let one_sample_us = T::lit(1e6) / self.scenario.sampling_hz;
        TauRange {
            min: (cycle * T::lit(self.opts.tau_min_fraction)).max(one_sample_us),
            max: cycle,
        }
    }

    fn optimize_window(
        &self,
        plan: &SensingPlan<T>,
        assignment: &ChannelAssignment,
        windows: &[u32],
        stats: &[ContentionStats<T>],
    ) -> WindowResult<T> {
        let s = self.scenario;
        let init = s.cycle_us() * T::lit(self.opts.init_fraction);
        let mut ev = Evaluator::new(s, plan, SensingDesign::uniform(assignment, init, 1).tau_us);
        let range = self.tau_range();
        let tol = T::lit(self.opts.improvement_tol);
        // Extra sensing time on an SU below the longest one is free and never
        // raises a fused false alarm, so every sensing SU uses the full budget.
        let padded = scaled_rows(&ev.tau, total_sensing(&ev.tau));
        let all: Vec<usize> = (0..s.num_channels).collect();
        ev.commit(padded, &all);
        let mut incumbent = ev.current(stats);
        for _pass in 0..self.opts.coordinate_passes {
            let pass_start = incumbent;
            // common budget, shares fixed
            let base = ev.tau.clone();
            let (x, v) = scalar_tau_search(|b| ev.probe(stats, &scaled_rows(&base, b), &all), range, &self.opts);
            if v > incumbent + tol {
                let candidate = scaled_rows(&base, x);
                ev.commit(candidate, &all);
                incumbent = v;
            }
            // split of each SU's budget over its channels
            for i in 0..s.num_sus {
                let channels: Vec<usize> = assignment.channels_of(i).collect();
                if channels.len() < 2 {
                    continue;
                }
                let budget = row_sum(&ev.tau[i]);
                let split_range = TauRange {
                    min: range.min,
                    max: budget - T::from_count(channels.len() - 1) * range.min,
                };
                if !(split_range.max > split_range.min) {
                    continue;
                }
                for &j in &channels {
                    let mut candidate = ev.tau.clone();
                    let row = ev.tau[i].clone();
                    let (x, v) = scalar_tau_search(
                        |t| {
                            candidate[i] = split_row(&row, j, t, budget);
                            ev.probe(stats, &candidate, &channels)
                        },
                        split_range,
                        &self.opts,
                    );
                    if v > incumbent + tol {
                        candidate[i] = split_row(&row, j, x, budget);
                        ev.commit(candidate, &channels);
                        incumbent = v;
                    }
                }
            }
            if !(incumbent > pass_start + tol) {
                break;
            }
        }
        // first window attaining the best value
        let total = total_sensing(&ev.tau);
        let e = ev.expected_idle(&ev.channel_pf);
        let k = (0..stats.len())
            .find(|&k| ev.nt(&stats[k], total, e) == incumbent)
            .unwrap_or(0);
        WindowResult {
            window: windows[k],
            nt: incumbent,
            tau: ev.tau,
            evaluations: ev.evaluations,
        }
    }

    /// Runs the window/sensing-time search for one assignment.
    pub fn optimize(&self, assignment: &ChannelAssignment) -> Result<Optimum<T>> {
        let plan = SensingPlan::new(self.scenario, assignment)?;
        if plan.sensed_channels() == 0 {
            return Err(Error::NoSensedChannels);
        }
        let stats_for = |w: u32| {
            contention_stats(
                self.scenario.num_sus,
                w,
                self.scenario.max_backoff_stage,
                &self.scenario.frames,
            )
        };
        let (results, trace) = match self.opts.window_search {
            WindowSearch::PerWindow => {
                let mut results: Vec<WindowResult<T>> = self
                    .windows
                    .par_iter()
                    .zip(self.stats.par_iter())
                    .map(|(&w, st)| self.optimize_window(&plan, assignment, &[w], std::slice::from_ref(st)))
                    .collect();
                if self.refine_windows {
                    let center = results[best_index(&results)].window;
                    let refined = self
                        .neighbours(center)
                        .par_iter()
                        .map(|&w| Ok(self.optimize_window(&plan, assignment, &[w], &[stats_for(w)?])))
                        .collect::<Result<Vec<_>>>()?;
                    results.extend(refined);
                }
                let trace = results.iter().map(|r| (r.window, r.nt)).collect();
                (results, trace)
            }
            WindowSearch::Joint => {
                let r = self.optimize_window(&plan, assignment, &self.windows, &self.stats);
                let mut windows = self.windows.clone();
                let mut stats = self.stats.clone();
                if self.refine_windows {
                    for w in self.neighbours(r.window) {
                        windows.push(w);
                        stats.push(stats_for(w)?);
                    }
                }
                // re-rank all windows at the final sensing times
                let ev = Evaluator::new(self.scenario, &plan, r.tau.clone());
                let total = total_sensing(&r.tau);
                let e = ev.expected_idle(&ev.channel_pf);
                let mut results = Vec::with_capacity(windows.len());
                for (w, st) in windows.iter().zip(&stats) {
                    results.push(WindowResult {
                        window: *w,
                        nt: ev.nt(st, total, e),
                        tau: r.tau.clone(),
                        evaluations: 0,
                    });
                }
                results[0].evaluations = r.evaluations + windows.len() as u64;
                let trace = results.iter().map(|r| (r.window, r.nt)).collect();
                (results, trace)
            }
        };
        let best = &results[best_index(&results)];
        let design = SensingDesign {
            tau_us: best.tau.clone(),
            window: best.window,
        };
        let stats = contention_stats(
            self.scenario.num_sus,
            best.window,
            self.scenario.max_backoff_stage,
            &self.scenario.frames,
        )?;
        let report = report_with(self.scenario, &plan, &stats, &design)?;
        Ok(Optimum {
            design,
            report,
            evaluations: results.iter().map(|r| r.evaluations).sum(),
            window_trace: trace,
        })
    }
}

fn best_index<T: Real>(results: &[WindowResult<T>]) -> usize {
    let mut best = 0;
    for (k, r) in results.iter().enumerate().skip(1) {
        let b = &results[best];
        if preferred((r.nt, r.window, &r.tau), (b.nt, b.window, &b.tau)) {
            best = k;
        }
    }
    best
}

/// Best sensing times and contention window for a fixed assignment.
pub fn optimize_design<T: Real>(
    scenario: &Scenario<T>,
    assignment: &ChannelAssignment,
    opts: &OptimizerOptions,
) -> Result<Optimum<T>> {
    Optimizer::new(scenario, *opts)?.optimize(assignment)
}

/// Exhaustive grid for [`grid_reference_optimum`]: one τ grid (µs) per
/// assigned pair, in row-major pair order, and a list of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    pub tau_points: Vec<Vec<T>>,
    pub windows: Vec<u32>,
}

impl<T: Real> GridSpec<T> {
    /// `points` log-spaced values on `(min, max]` for every assigned pair.
    pub fn log_spaced(assignment: &ChannelAssignment, points: usize, min: T, max: T, windows: Vec<u32>) -> Self {
        let ratio = (max / min).powf(T::one() / T::from_count(points.max(1)));
        let axis: Vec<T> = (1..=points)
            .map(|k| if k == points { max } else { min * ratio.powi(k as i32) })
            .collect();
        Self {
            tau_points: vec![axis; assignment.num_pairs()],
            windows,
        }
    }

    pub fn cells(&self) -> u128 {
        self.tau_points
            .iter()
            .map(|a| a.len() as u128)
            .product::<u128>()
            .saturating_mul(self.windows.len() as u128)
    }
}

pub const GRID_CELL_LIMIT: u128 = 10_000_000;

/// Exact argmax of NT over a Cartesian grid of sensing times and windows.
pub fn grid_reference_optimum<T: Real>(
    scenario: &Scenario<T>,
    assignment: &ChannelAssignment,
    grid: &GridSpec<T>,
) -> Result<Optimum<T>> {
    let pairs: Vec<(usize, usize)> = assignment.pairs().collect();
    if grid.tau_points.len() != pairs.len() {
        return precondition(format!(
            "grid has {} axes for {} assigned pairs",
            grid.tau_points.len(),
            pairs.len()
        ));
    }
    if pairs.is_empty() || grid.windows.is_empty() || grid.tau_points.iter().any(|a| a.is_empty()) {
        return Err(Error::Empty("grid"));
    }
    let cells = grid.cells();
    if cells > GRID_CELL_LIMIT {
        return Err(Error::TooLarge {
            what: "reference grid",
            needed: cells,
            limit: GRID_CELL_LIMIT,
        });
    }
    if grid.windows.contains(&0) {
        return precondition("windows must be at least 1");
    }
    let plan = SensingPlan::new(scenario, assignment)?;
    let stats: Vec<(u32, ContentionStats<T>)> = grid
        .windows
        .iter()
        .map(|&w| {
            Ok((
                w,
                contention_stats(scenario.num_sus, w, scenario.max_backoff_stage, &scenario.frames)?,
            ))
        })
        .collect::<Result<_>>()?;

    let zero = SensingDesign::uniform(assignment, T::zero(), 1).tau_us;
    let mut ev = Evaluator::new(scenario, &plan, zero);
    let mut idx = vec![0usize; pairs.len()];
    let mut best: Option<(T, u32, Vec<Vec<T>>)> = None;
    let mut evaluations = 0u64;
    loop {
        for (k, &(i, j)) in pairs.iter().enumerate() {
            ev.tau[i][j] = grid.tau_points[k][idx[k]];
        }
        for j in 0..scenario.num_channels {
            ev.refresh_channel(j);
        }
        let total = total_sensing(&ev.tau);
        let e = ev.expected_idle(&ev.channel_pf);
        for (w, st) in &stats {
            evaluations += 1;
            let nt = ev.nt(st, total, e);
            let better = match &best {
                None => true,
                Some((bnt, bw, bt)) => preferred((nt, *w, &ev.tau), (*bnt, *bw, bt)),
            };
            if better {
                best = Some((nt, *w, ev.tau.clone()));
            }
        }
        // odometer
        let mut k = 0;
        loop {
            if k == idx.len() {
                let (_, window, tau_us) = best.expect("grid is non-empty");
                let design = SensingDesign { tau_us, window };
                let st = stats.iter().find(|(w, _)| *w == window).expect("window in grid").1;
                let report = report_with(scenario, &plan, &st, &design)?;
                return Ok(Optimum {
                    design,
                    report,
                    evaluations,
                    window_trace: Vec::new(),
                });
            }
            idx[k] += 1;
            if idx[k] < grid.tau_points[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
