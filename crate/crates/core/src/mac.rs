//! Saturation throughput of the contention phase and the normalized
//! throughput objective.
//!
//! Contention follows the slotted exponential-backoff model with a fixed
//! per-slot transmission probability. A cycle of length `T` spends `τ` on
//! sensing and `T_R = N·t_r + t_b` on reporting; the rest is filled with
//! generic slots whose mean length is `T̄_sd`.

use serde::{Deserialize, Serialize};

use crate::assignment::ChannelAssignment;
use crate::error::{precondition, Error, Result};
use crate::optimizer::SensingDesign;
use crate::real::Real;
use crate::scenario::Scenario;
use crate::sensing::{SensingPerformance, SensingPlan};

/// Frame and interframe-space sizes of the basic access mechanism.
/// Sizes in bits, gaps in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameTimings<T> {
    pub phy_header_bits: T,
    pub mac_header_bits: T,
    pub packet_bits: T,
    pub ack_bits: T,
    pub sifs_us: T,
    pub difs_us: T,
    pub prop_delay_us: T,
    /// Empty backoff slot σ.
    pub slot_us: T,
    /// Bits per µs (1.0 is 1 Mbps).
    pub bit_rate: T,
}

impl<T: Real> Default for FrameTimings<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            phy_header_bits: l(128.0),
            mac_header_bits: l(272.0),
            packet_bits: l(8184.0),
            // 112-bit ACK body plus PHY header.
            ack_bits: l(240.0),
            sifs_us: l(28.0),
            difs_us: l(128.0),
            prop_delay_us: l(1.0),
            slot_us: l(20.0),
            bit_rate: l(1.0),
        }
    }
}

impl<T: Real> FrameTimings<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("phy_header_bits", self.phy_header_bits),
            ("mac_header_bits", self.mac_header_bits),
            ("packet_bits", self.packet_bits),
            ("ack_bits", self.ack_bits),
            ("sifs_us", self.sifs_us),
            ("difs_us", self.difs_us),
            ("prop_delay_us", self.prop_delay_us),
            ("slot_us", self.slot_us),
            ("bit_rate", self.bit_rate),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(Error::Validation(format!(
                    "frames.{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("packet_bits", self.packet_bits),
            ("slot_us", self.slot_us),
            ("bit_rate", self.bit_rate),
        ] {
            if v <= T::zero() {
                return Err(Error::Validation(format!("frames.{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Payload transmission time in µs.
    pub fn payload_us(&self) -> T {
        self.packet_bits / self.bit_rate
    }
}

/// Cycle length and control-channel overheads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleTimings<T> {
    pub cycle_ms: T,
    pub report_us: T,
    pub broadcast_us: T,
}

impl<T: Real> Default for CycleTimings<T> {
    fn default() -> Self {
        Self {
            cycle_ms: T::lit(100.0),
            report_us: T::lit(80.0),
            broadcast_us: T::lit(80.0),
        }
    }
}

impl<T: Real> CycleTimings<T> {
    pub fn cycle_us(&self) -> T {
        self.cycle_ms * T::lit(1000.0)
    }

    /// `T_R = N·t_r + t_b`.
    pub fn reporting_us(&self, num_sus: usize) -> T {
        T::from_count(num_sus) * self.report_us + self.broadcast_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDurations<T> {
    pub success: T,
    pub collision: T,
}

/// Busy-slot lengths `T_s`, `T_c` (µs) under basic access.
pub fn slot_durations<T: Real>(frames: &FrameTimings<T>) -> SlotDurations<T> {
    let header = (frames.phy_header_bits + frames.mac_header_bits) / frames.bit_rate;
    let payload = frames.payload_us();
    let ack = frames.ack_bits / frames.bit_rate;
    let two = T::lit(2.0);
    SlotDurations {
        success: header + payload + frames.sifs_us + two * frames.prop_delay_us + ack + frames.difs_us,
        collision: header + payload + frames.difs_us + frames.prop_delay_us,
    }
}

/// Per-slot attempt probability of a station whose transmissions collide
/// with probability `p`, for minimum window `w` and `m0` doubling stages.
///
/// Written with the `(1 - (2p)^m0) / (1 - 2p)` ratio expanded as a finite
/// geometric sum, which removes the 0/0 at `p = 1/2`.
pub fn attempt_probability<T: Real>(p: T, w: u32, m0: u32) -> T {
    let w = T::from_u32(w).expect("window fits scalar");
    let two_p = T::lit(2.0) * p;
    let mut geometric = T::zero();
    let mut term = T::one();
    for _ in 0..m0 {
        geometric = geometric + term;
        term = term * two_p;
    }
    T::lit(2.0) / (w + T::one() + w * p * geometric)
}

/// Probability that a tagged transmission collides when the other `n - 1`
/// stations attempt with probability `phi`.
pub fn collision_probability<T: Real>(phi: T, n: usize) -> T {
    T::one() - (T::one() - phi).powi(n as i32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffFixedPoint<T> {
    /// φ
    pub transmit: T,
    /// p
    pub collision: T,
}

impl<T: Real> BackoffFixedPoint<T> {
    /// Residuals of the attempt-rate and collision equations.
    pub fn residuals(&self, n: usize, w: u32, m0: u32) -> (T, T) {
        (
            (self.transmit - attempt_probability(self.collision, w, m0)).abs(),
            (self.collision - collision_probability(self.transmit, n)).abs(),
        )
    }
}

/// Solves the coupled attempt-rate / collision-probability equations.
///
/// `g(p) = 1 - (1 - φ(p))^(N-1) - p` is strictly decreasing on `[0, 1]`
/// (φ is decreasing in `p`), nonnegative at 0 and nonpositive at 1, so
/// bisection on `p` brackets the unique root.
pub fn bianchi_fixed_point<T: Real>(n: usize, w: u32, m0: u32) -> Result<BackoffFixedPoint<T>> {
    if n == 0 {
        return precondition("need at least one contending SU");
    }
    if w == 0 {
        return precondition("contention window must be at least 1");
    }
    if n == 1 {
        return Ok(BackoffFixedPoint {
            transmit: attempt_probability(T::zero(), w, m0),
            collision: T::zero(),
        });
    }
    let g = |p: T| collision_probability(attempt_probability(p, w, m0), n) - p;
    let mut lo = T::zero();
    let mut hi = T::one();
    if g(hi) >= T::zero() {
        lo = hi;
    } else {
        for _ in 0..2000 {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) >= T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let collision = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let transmit = attempt_probability(collision, w, m0);
    let point = BackoffFixedPoint { transmit, collision };
    let (r1, r2) = point.residuals(n, w, m0);
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    if !(r1 < tol && r2 < tol) {
        return Err(Error::Numerical(format!(
            "backoff fixed point did not converge for N={n}, W={w}, m0={m0} (residuals {r1}, {r2})"
        )));
    }
    Ok(point)
}

/// Contention-phase statistics for `N` saturated SUs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionStats<T> {
    pub transmit: T,
    pub collision: T,
    /// `P_t`: some SU transmits in a slot.
    pub busy: T,
    /// `P_s`: a busy slot is a success.
    pub success: T,
    pub success_time: T,
    pub collision_time: T,
    /// `T̄_sd`, mean generic-slot length in µs.
    pub mean_slot: T,
}

pub fn contention_stats<T: Real>(n: usize, w: u32, m0: u32, frames: &FrameTimings<T>) -> Result<ContentionStats<T>> {
    let fp = bianchi_fixed_point::<T>(n, w, m0)?;
    let phi = fp.transmit;
    let idle_all = (T::one() - phi).powi(n as i32);
    let busy = T::one() - idle_all;
    let success = if busy > T::zero() {
        T::from_count(n) * phi * (T::one() - phi).powi(n as i32 - 1) / busy
    } else {
        T::zero()
    };
    let slots = slot_durations(frames);
    let mean_slot = (T::one() - busy) * frames.slot_us
        + busy * success * slots.success
        + busy * (T::one() - success) * slots.collision;
    Ok(ContentionStats {
        transmit: phi,
        collision: fp.collision,
        busy,
        success,
        success_time: slots.success,
        collision_time: slots.collision,
        mean_slot,
    })
}

/// Whole generic slots that fit in the data phase; zero when the sensing and
/// reporting phases use up the cycle.
pub fn slots_per_cycle<T: Real>(tau_total_us: T, reporting_us: T, cycle_us: T, mean_slot: T) -> T {
    let budget = cycle_us - tau_total_us - reporting_us;
    if budget <= T::zero() {
        return T::zero();
    }
    (budget / mean_slot).floor().max(T::zero())
}

/// Fraction of the cycle that carries payload on an always-idle channel,
/// given precomputed contention statistics.
pub fn throughput_from_stats<T: Real>(
    stats: &ContentionStats<T>,
    tau_total_us: T,
    num_sus: usize,
    frames: &FrameTimings<T>,
    cycle: &CycleTimings<T>,
) -> T {
    let cycle_us = cycle.cycle_us();
    let slots = slots_per_cycle(tau_total_us, cycle.reporting_us(num_sus), cycle_us, stats.mean_slot);
    slots * stats.success * stats.busy * frames.payload_us() / cycle_us
}

/// Single-channel throughput `T(τ, W)` for a total sensing time in µs.
pub fn single_channel_throughput<T: Real>(
    tau_total_us: T,
    w: u32,
    n: usize,
    m0: u32,
    frames: &FrameTimings<T>,
    cycle: &CycleTimings<T>,
) -> Result<T> {
    if !(tau_total_us > T::zero()) {
        return precondition(format!("total sensing time must be positive, got {tau_total_us}"));
    }
    let stats = contention_stats(n, w, m0, frames)?;
    Ok(throughput_from_stats(&stats, tau_total_us, n, frames, cycle))
}

/// Expected number of available channels that the AP declares idle, with the
/// per-channel contributions `P_j(H0)·(1 - P_f^j)`. Unsensed channels
/// contribute nothing.
pub fn expected_correct_idle<T: Real>(perf: &SensingPerformance<T>, p_idle: &[T]) -> Result<(T, Vec<T>)> {
    if p_idle.len() != perf.channels.len() {
        return precondition(format!(
            "{} idle probabilities for {} channels",
            p_idle.len(),
            perf.channels.len()
        ));
    }
    let contributions: Vec<T> = perf
        .channels
        .iter()
        .zip(p_idle)
        .map(|(c, &p)| p * c.idle_declaration())
        .collect();
    Ok((contributions.iter().copied().sum(), contributions))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport<T> {
    pub contention: ContentionStats<T>,
    pub window: u32,
    pub tau_total_us: T,
    pub slots_per_cycle: T,
    /// `T(τ, W)`.
    pub single_channel_throughput: T,
    /// `E`.
    pub expected_idle: T,
    pub per_channel_idle: Vec<T>,
    /// `NT = T(τ, W)·E / M`.
    pub normalized_throughput: T,
    pub sensing: SensingPerformance<T>,
}

/// Normalized throughput of a design under an assignment.
pub fn normalized_throughput<T: Real>(
    scenario: &Scenario<T>,
    assignment: &ChannelAssignment,
    design: &SensingDesign<T>,
) -> Result<ThroughputReport<T>> {
    let plan = SensingPlan::new(scenario, assignment)?;
    let stats = contention_stats(
        scenario.num_sus,
        design.window,
        scenario.max_backoff_stage,
        &scenario.frames,
    )?;
    report_with(scenario, &plan, &stats, design)
}

pub(crate) fn report_with<T: Real>(
    scenario: &Scenario<T>,
    plan: &SensingPlan<T>,
    stats: &ContentionStats<T>,
    design: &SensingDesign<T>,
) -> Result<ThroughputReport<T>> {
    design.check_against(scenario, plan)?;
    let sensing = plan.evaluate(&design.tau_us)?;
    let (expected_idle, per_channel_idle) = expected_correct_idle(&sensing, &scenario.p_idle)?;
    let tau_total_us = design.total_sensing_us();
    let cycle_us = scenario.cycle.cycle_us();
    let slots = slots_per_cycle(
        tau_total_us,
        scenario.cycle.reporting_us(scenario.num_sus),
        cycle_us,
        stats.mean_slot,
    );
    let single = throughput_from_stats(stats, tau_total_us, scenario.num_sus, &scenario.frames, &scenario.cycle);
    let m = T::from_count(scenario.num_channels);
    Ok(ThroughputReport {
        contention: *stats,
        window: design.window,
        tau_total_us,
        slots_per_cycle: slots,
        single_channel_throughput: single,
        expected_idle,
        per_channel_idle,
        normalized_throughput: single * expected_idle / m,
        sensing,
    })
}
