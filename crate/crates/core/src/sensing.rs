//! Energy-detector ROC formulas and cooperative a-out-of-b fusion.
//!
//! Per-link probabilities follow the usual Gaussian approximation of the
//! energy detector for PSK primary signals in complex Gaussian noise. The AP
//! fuses the `b` one-bit reports of a channel and declares it busy when at
//! least `a` of them say busy, so fused probabilities are upper tails of a
//! Poisson-binomial count.
//!
//! Detector thresholds are normally eliminated: the fused detection
//! probability is pinned to the channel's target and every reporting SU is
//! given the same per-link detection probability, which fixes the per-link
//! false-alarm probability as a function of sensing time alone.

use serde::{Deserialize, Serialize};

use crate::assignment::ChannelAssignment;
use crate::error::{domain, precondition, Result};
use crate::real::Real;
use crate::scenario::Scenario;

/// Upper tail of the standard normal distribution, `Q(x) = P(Z > x)`.
pub fn gaussian_tail<T: Real>(x: T) -> Result<T> {
    if !x.is_finite() {
        return domain(format!("gaussian_tail needs a finite argument, got {x}"));
    }
    Ok(q(x))
}

#[inline]
pub(crate) fn q<T: Real>(x: T) -> T {
    T::lit(0.5) * (x / T::SQRT_2()).erfc()
}

#[inline]
fn normal_pdf<T: Real>(x: T) -> T {
    (-x * x * T::lit(0.5)).exp() / (T::TAU()).sqrt()
}

/// Inverse of [`gaussian_tail`]: returns `x` with `Q(x) = p`.
pub fn gaussian_tail_inverse<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return domain(format!("gaussian_tail_inverse needs p in (0,1), got {p}"));
    }
    Ok(q_inv(p))
}

pub(crate) fn q_inv<T: Real>(p: T) -> T {
    // Acklam's rational approximation of the normal quantile, refined with
    // Halley steps against `q`.
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let lit = T::lit;
    let horner = |coef: &[f64], x: T| coef.iter().fold(T::zero(), |acc, &c| acc * x + lit(c));

    // Acklam works with the lower-tail quantile of 1 - p.
    let lower = T::one() - p;
    let p_low = lit(0.02425);
    let quantile = if lower < p_low {
        let r = (lit(-2.0) * lower.ln()).sqrt();
        horner(&C, r) / (horner(&D, r) * r + T::one())
    } else if lower <= T::one() - p_low {
        let r = lower - lit(0.5);
        let s = r * r;
        horner(&A, s) * r / (horner(&B, s) * s + T::one())
    } else {
        // Upper region: use p directly to keep precision for tiny p.
        let r = (lit(-2.0) * p.ln()).sqrt();
        -horner(&C, r) / (horner(&D, r) * r + T::one())
    };

    let mut x = quantile;
    for _ in 0..3 {
        let pdf = normal_pdf(x);
        if pdf <= T::zero() {
            break;
        }
        let d = (q(x) - p) / pdf;
        let step = d / (T::one() - x * d * lit(0.5));
        if !step.is_finite() {
            break;
        }
        x = x + step;
    }
    x
}

/// Operating point of one energy detector (SU `i` on channel `j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorContext<T> {
    /// Noise power `N0`, linear watts.
    pub noise_power: T,
    /// Sampling frequency in Hz.
    pub sampling_hz: T,
    /// Linear SNR of the primary signal at the SU.
    pub snr: T,
    /// Sensing time in seconds.
    pub sense_time: T,
    /// Detection threshold in linear watts.
    pub threshold: Option<T>,
}

impl<T: Real> DetectorContext<T> {
    pub fn new(noise_power: T, sampling_hz: T, snr: T, sense_time: T) -> Result<Self> {
        let ctx = Self {
            noise_power,
            sampling_hz,
            snr,
            sense_time,
            threshold: None,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn with_threshold(mut self, threshold: T) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn samples(&self) -> T {
        self.sense_time * self.sampling_hz
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !positive(self.noise_power) {
            return precondition("noise power must be positive");
        }
        if !positive(self.sampling_hz) {
            return precondition("sampling frequency must be positive");
        }
        if !positive(self.snr) {
            return precondition("SNR must be positive");
        }
        if !positive(self.sense_time) {
            return precondition("sensing time must be positive");
        }
        if self.samples() < T::one() {
            return precondition(format!(
                "sensing window holds {} samples, need at least one",
                self.samples()
            ));
        }
        Ok(())
    }

    fn normalized_threshold(&self) -> Result<T> {
        self.validate()?;
        match self.threshold {
            Some(eps) if eps.is_finite() => Ok(eps / self.noise_power),
            Some(eps) => precondition(format!("threshold must be finite, got {eps}")),
            None => precondition("detector threshold is required for this formula"),
        }
    }
}

/// Per-link detection probability at threshold `ε`.
pub fn detection_probability<T: Real>(ctx: &DetectorContext<T>) -> Result<T> {
    let eps = ctx.normalized_threshold()?;
    let two = T::lit(2.0);
    Ok(q(
        (eps - ctx.snr - T::one()) * (ctx.samples() / (two * ctx.snr + T::one())).sqrt()
    ))
}

/// Per-link false-alarm probability at threshold `ε`.
pub fn false_alarm_from_threshold<T: Real>(ctx: &DetectorContext<T>) -> Result<T> {
    let eps = ctx.normalized_threshold()?;
    Ok(q((eps - T::one()) * ctx.samples().sqrt()))
}

/// Per-link false-alarm probability when the detector is tuned to hit
/// `target_pd`. `sense_time` is in seconds.
pub fn false_alarm_from_target_pd<T: Real>(target_pd: T, snr: T, sense_time: T, sampling_hz: T) -> Result<T> {
    if !(target_pd > T::zero() && target_pd < T::one()) {
        return domain(format!(
            "target detection probability must be in (0,1), got {target_pd}"
        ));
    }
    if !(snr > T::zero() && sense_time > T::zero() && sampling_hz > T::zero()) {
        return precondition("SNR, sensing time and sampling frequency must be positive");
    }
    let offset = link_offset(snr, target_pd);
    Ok(q(offset + (sense_time * sampling_hz).sqrt() * snr))
}

/// `sqrt(2γ+1)·Q⁻¹(p)`, the τ-independent part of the false-alarm argument.
#[inline]
fn link_offset<T: Real>(snr: T, link_pd: T) -> T {
    (T::lit(2.0) * snr + T::one()).sqrt() * q_inv(link_pd)
}

/// Probability that at least `a` of the independent Bernoulli trials with
/// success probabilities `per_su` succeed.
pub fn fused_probability<T: Real>(per_su: &[T], a: usize) -> Result<T> {
    let b = per_su.len();
    if a < 1 || a > b {
        return domain(format!("fusion threshold a={a} outside 1..={b}"));
    }
    if let Some(p) = per_su.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return domain(format!("per-SU probability {p} outside [0,1]"));
    }
    let mut scratch = Vec::with_capacity(b + 1);
    Ok(upper_tail(&mut scratch, per_su.iter().copied(), a))
}

/// Poisson-binomial upper tail by the O(b²) count recursion. `scratch` is
/// reused between calls to avoid allocating in hot loops.
pub(crate) fn upper_tail<T: Real>(scratch: &mut Vec<T>, probs: impl Iterator<Item = T>, a: usize) -> T {
    scratch.clear();
    scratch.push(T::one());
    for p in probs {
        let miss = T::one() - p;
        scratch.push(T::zero());
        for k in (1..scratch.len()).rev() {
            scratch[k] = scratch[k] * miss + scratch[k - 1] * p;
        }
        scratch[0] = scratch[0] * miss;
    }
    scratch.iter().skip(a).copied().sum()
}

/// `Σ_{l=a}^{b} C(b,l) p^l (1-p)^{b-l}`.
pub fn binomial_upper_tail<T: Real>(p: T, a: usize, b: usize) -> T {
    let miss = T::one() - p;
    let mut coef = T::one();
    let mut total = T::zero();
    for l in 0..=b {
        if l >= a {
            total = total + coef * p.powi(l as i32) * miss.powi((b - l) as i32);
        }
        coef = coef * T::from_count(b - l) / T::from_count(l + 1);
    }
    total
}

/// Common per-link probability `p*` whose a-out-of-b fused value equals
/// `target`.
pub fn invert_equal_fused<T: Real>(a: usize, b: usize, target: T) -> Result<T> {
    if a < 1 || a > b {
        return domain(format!("fusion threshold a={a} outside 1..={b}"));
    }
    if !(target > T::zero() && target < T::one()) {
        return domain(format!("fused target must be in (0,1), got {target}"));
    }
    if a == 1 && b == 1 {
        return Ok(target);
    }
    let mut lo = T::lit(1e-12).max(T::epsilon());
    let mut hi = T::one() - T::epsilon();
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if binomial_upper_tail(mid, a, b) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever end of the final bracket is closer in tail value.
    let err_lo = (binomial_upper_tail(lo, a, b) - target).abs();
    let err_hi = (binomial_upper_tail(hi, a, b) - target).abs();
    Ok(if err_lo <= err_hi { lo } else { hi })
}

/// a-out-of-b aggregation rule used by the AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    Or,
    And,
    Majority,
    /// Fixed `a`; clamped to `1..=b` when fewer SUs report.
    Fixed(usize),
}

impl FusionRule {
    /// Threshold `a` for a channel with `b ≥ 1` reporting SUs.
    pub fn resolve(self, b: usize) -> usize {
        debug_assert!(b >= 1);
        match self {
            FusionRule::Or => 1,
            FusionRule::And => b,
            FusionRule::Majority => b.div_ceil(2),
            FusionRule::Fixed(a) => a.clamp(1, b),
        }
    }

    pub fn name(self) -> String {
        match self {
            FusionRule::Or => "or".into(),
            FusionRule::And => "and".into(),
            FusionRule::Majority => "majority".into(),
            FusionRule::Fixed(a) => format!("fixed{a}"),
        }
    }
}

impl std::str::FromStr for FusionRule {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "or" => Ok(FusionRule::Or),
            "and" => Ok(FusionRule::And),
            "majority" | "maj" => Ok(FusionRule::Majority),
            other => other
                .strip_prefix("fixed")
                .and_then(|n| n.trim_start_matches([':', '=', '(']).trim_end_matches(')').parse().ok())
                .filter(|&a: &usize| a >= 1)
                .map(FusionRule::Fixed)
                .ok_or_else(|| crate::Error::Parse(format!("unknown fusion rule '{s}'"))),
        }
    }
}

/// Fused sensing result for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSensing<T> {
    /// Resolved threshold `a_j`.
    pub threshold: usize,
    /// Number of reporting SUs `b_j`.
    pub reporters: usize,
    /// Common per-link detection probability `p*_j`.
    pub link_detection: T,
    pub detection: T,
    pub false_alarm: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelDecision<T> {
    /// No SU senses the channel; the AP never declares it idle.
    Unsensed,
    Sensed(ChannelSensing<T>),
}

impl<T: Real> ChannelDecision<T> {
    pub fn sensed(&self) -> Option<&ChannelSensing<T>> {
        match self {
            ChannelDecision::Unsensed => None,
            ChannelDecision::Sensed(s) => Some(s),
        }
    }

    /// Probability that the AP declares an idle channel idle.
    pub fn idle_declaration(&self) -> T {
        self.sensed().map_or(T::zero(), |s| T::one() - s.false_alarm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingPerformance<T> {
    /// `P_d^{ij}`, `None` where SU `i` does not sense channel `j`.
    pub link_detection: Vec<Vec<Option<T>>>,
    /// `P_f^{ij}`, `None` where SU `i` does not sense channel `j`.
    pub link_false_alarm: Vec<Vec<Option<T>>>,
    pub channels: Vec<ChannelDecision<T>>,
}

impl<T: Real> SensingPerformance<T> {
    pub fn channel_false_alarm(&self, j: usize) -> Option<T> {
        self.channels[j].sensed().map(|s| s.false_alarm)
    }

    pub fn sensed_channels(&self) -> usize {
        self.channels.iter().filter(|c| c.sensed().is_some()).count()
    }
}

#[derive(Debug, Clone)]
struct ChannelPlan<T> {
    threshold: usize,
    link_detection: T,
    /// (su, snr, offset) per reporting SU, ascending su.
    links: Vec<(usize, T, T)>,
}

/// The τ-independent part of the sensing pipeline for one assignment: the
/// resolved fusion thresholds, the per-link detection probabilities from the
/// equality constraint, and the per-link false-alarm offsets.
#[derive(Debug, Clone)]
pub struct SensingPlan<T> {
    num_sus: usize,
    samples_per_us: T,
    channels: Vec<Option<ChannelPlan<T>>>,
}

impl<T: Real> SensingPlan<T> {
    pub fn new(scenario: &Scenario<T>, assignment: &ChannelAssignment) -> Result<Self> {
        if assignment.num_sus() != scenario.num_sus || assignment.num_channels() != scenario.num_channels {
            return precondition(format!(
                "assignment is {}x{}, scenario is {}x{}",
                assignment.num_sus(),
                assignment.num_channels(),
                scenario.num_sus,
                scenario.num_channels
            ));
        }
        let mut channels = Vec::with_capacity(scenario.num_channels);
        for j in 0..scenario.num_channels {
            let sensors: Vec<usize> = assignment.sensors_of(j).collect();
            if sensors.is_empty() {
                channels.push(None);
                continue;
            }
            let b = sensors.len();
            let a = scenario.fusion_rule(j).resolve(b);
            let link_detection = invert_equal_fused(a, b, scenario.target_pd[j])?;
            let links = sensors
                .into_iter()
                .map(|i| {
                    let snr = scenario.snr_linear(i, j);
                    (i, snr, link_offset(snr, link_detection))
                })
                .collect();
            channels.push(Some(ChannelPlan {
                threshold: a,
                link_detection,
                links,
            }));
        }
        Ok(Self {
            num_sus: scenario.num_sus,
            samples_per_us: scenario.sampling_hz * T::lit(1e-6),
            channels,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn is_sensed(&self, j: usize) -> bool {
        self.channels[j].is_some()
    }

    pub fn sensed_channels(&self) -> usize {
        self.channels.iter().filter(|c| c.is_some()).count()
    }

    #[inline]
    fn link_false_alarm(&self, snr: T, offset: T, tau_us: T) -> T {
        q(offset + (tau_us * self.samples_per_us).sqrt() * snr)
    }

    /// Fused `P_f^j` given the sensing times (µs) of the reporting SUs.
    /// `tau_of(i)` is queried for each reporting SU. Returns `None` for an
    /// unsensed channel.
    pub(crate) fn channel_false_alarm_with(
        &self,
        scratch: &mut Vec<T>,
        j: usize,
        mut tau_of: impl FnMut(usize) -> T,
    ) -> Option<T> {
        let plan = self.channels[j].as_ref()?;
        let probs = plan
            .links
            .iter()
            .map(|&(i, snr, offset)| self.link_false_alarm(snr, offset, tau_of(i)));
        Some(upper_tail(scratch, probs, plan.threshold))
    }

    /// Full sensing report for a sensing-time matrix in µs.
    pub fn evaluate(&self, tau_us: &[Vec<T>]) -> Result<SensingPerformance<T>> {
        let m = self.channels.len();
        let mut link_detection = vec![vec![None; m]; self.num_sus];
        let mut link_false_alarm = vec![vec![None; m]; self.num_sus];
        let mut channels = Vec::with_capacity(m);
        let mut scratch = Vec::new();
        for (j, plan) in self.channels.iter().enumerate() {
            let Some(plan) = plan else {
                channels.push(ChannelDecision::Unsensed);
                continue;
            };
            let mut pf = Vec::with_capacity(plan.links.len());
            for &(i, snr, offset) in &plan.links {
                let tau = tau_us[i][j];
                if !(tau > T::zero() && tau.is_finite()) {
                    return precondition(format!(
                        "sensing time for SU {} on channel {} must be positive, got {tau}",
                        i + 1,
                        j + 1
                    ));
                }
                let value = self.link_false_alarm(snr, offset, tau);
                link_detection[i][j] = Some(plan.link_detection);
                link_false_alarm[i][j] = Some(value);
                pf.push(value);
            }
            let detection = upper_tail(
                &mut scratch,
                std::iter::repeat(plan.link_detection).take(plan.links.len()),
                plan.threshold,
            );
            let false_alarm = upper_tail(&mut scratch, pf.into_iter(), plan.threshold);
            channels.push(ChannelDecision::Sensed(ChannelSensing {
                threshold: plan.threshold,
                reporters: plan.links.len(),
                link_detection: plan.link_detection,
                detection,
                false_alarm,
            }));
        }
        Ok(SensingPerformance {
            link_detection,
            link_false_alarm,
            channels,
        })
    }
}

/// Sensing pipeline for one assignment and sensing-time matrix (µs):
/// fusion thresholds, equal per-link detection targets, per-link and fused
/// false-alarm probabilities.
pub fn sensing_performance<T: Real>(
    scenario: &Scenario<T>,
    assignment: &ChannelAssignment,
    tau_us: &[Vec<T>],
) -> Result<SensingPerformance<T>> {
    SensingPlan::new(scenario, assignment)?.evaluate(tau_us)
}
