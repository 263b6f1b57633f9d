//! Problem instances: dimensions, link SNRs, channel statistics, fusion
//! rules and timing constants, plus the JSON file format and shipped
//! presets.
//!
//! Files carry boundary units (dB, ms for the cycle, µs for gaps, bits for
//! frame sizes). Entries that are drawn at random (`snr_db_range`,
//! `target_pd_range`) are realized from `seed` at load time; serializing a
//! loaded scenario writes the realized values.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::ChannelAssignment;
use crate::error::{Error, Result};
use crate::mac::{CycleTimings, FrameTimings};
use crate::optimizer::SensingDesign;
use crate::real::Real;
use crate::sensing::FusionRule;

/// Either one rule for every channel or one per channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FusionSpec {
    Global(FusionRule),
    PerChannel(Vec<FusionRule>),
}

impl Default for FusionSpec {
    fn default() -> Self {
        FusionSpec::Global(FusionRule::Majority)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub num_sus: usize,
    pub num_channels: usize,
    /// `snr_db[i][j]`: SNR of PU `j`'s signal at SU `i`, in dB.
    pub snr_db: Vec<Vec<T>>,
    /// `P_j(H0)`.
    pub p_idle: Vec<T>,
    /// Target fused detection probability per channel.
    pub target_pd: Vec<T>,
    pub fusion: FusionSpec,
    pub sampling_hz: T,
    pub noise_power: T,
    pub cycle: CycleTimings<T>,
    pub frames: FrameTimings<T>,
    pub max_backoff_stage: u32,
    pub w_max: u32,
    /// Minimum throughput gain for a greedy channel addition.
    pub delta: T,
    pub assignment: Option<ChannelAssignment>,
    pub design: Option<SensingDesign<T>>,
}

impl<T: Real> Scenario<T> {
    /// Linear SNR `γ^{ij}`.
    pub fn snr_linear(&self, i: usize, j: usize) -> T {
        T::lit(10.0).powf(self.snr_db[i][j] / T::lit(10.0))
    }

    pub fn fusion_rule(&self, j: usize) -> FusionRule {
        match &self.fusion {
            FusionSpec::Global(rule) => *rule,
            FusionSpec::PerChannel(rules) => rules[j],
        }
    }

    pub fn cycle_us(&self) -> T {
        self.cycle.cycle_us()
    }

    pub fn reporting_us(&self) -> T {
        self.cycle.reporting_us(self.num_sus)
    }

    pub fn with_p_idle(mut self, p: T) -> Self {
        self.p_idle = vec![p; self.num_channels];
        self
    }

    pub fn with_snr_shift(mut self, shift_db: T) -> Self {
        for row in &mut self.snr_db {
            for v in row {
                *v = *v + shift_db;
            }
        }
        self
    }

    pub fn with_fusion(mut self, rule: FusionRule) -> Self {
        self.fusion = FusionSpec::Global(rule);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        let (n, m) = (self.num_sus, self.num_channels);
        if n == 0 || m == 0 {
            return bad(format!("need at least one SU and one channel, got N={n}, M={m}"));
        }
        if self.snr_db.len() != n || self.snr_db.iter().any(|r| r.len() != m) {
            return bad(format!("snr_db must be an {n}x{m} matrix"));
        }
        if let Some(v) = self.snr_db.iter().flatten().find(|v| !v.is_finite()) {
            return bad(format!("snr_db entries must be finite, got {v}"));
        }
        if self.p_idle.len() != m {
            return bad(format!("p_idle has {} entries, expected {m}", self.p_idle.len()));
        }
        if let Some((j, p)) = self
            .p_idle
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= T::zero() && **p <= T::one()))
        {
            return bad(format!("p_idle[{j}] = {p} is outside [0, 1]"));
        }
        if self.target_pd.len() != m {
            return bad(format!("target_pd has {} entries, expected {m}", self.target_pd.len()));
        }
        if let Some((j, p)) = self
            .target_pd
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p > T::zero() && **p < T::one()))
        {
            return bad(format!("target_pd[{j}] = {p} is outside (0, 1)"));
        }
        match &self.fusion {
            FusionSpec::PerChannel(rules) if rules.len() != m => {
                return bad(format!("fusion lists {} rules, expected {m}", rules.len()));
            }
            FusionSpec::PerChannel(rules) if rules.iter().any(|r| matches!(r, FusionRule::Fixed(0))) => {
                return bad("fixed fusion threshold must be at least 1".into());
            }
            FusionSpec::Global(FusionRule::Fixed(0)) => {
                return bad("fixed fusion threshold must be at least 1".into());
            }
            _ => {}
        }
        if !(self.sampling_hz > T::zero() && self.sampling_hz.is_finite()) {
            return bad("sampling_hz must be positive".into());
        }
        if !(self.noise_power > T::zero() && self.noise_power.is_finite()) {
            return bad("noise_power must be positive".into());
        }
        self.frames.validate()?;
        let c = &self.cycle;
        if !(c.cycle_ms > T::zero() && c.report_us >= T::zero() && c.broadcast_us >= T::zero()) {
            return bad("cycle timings must be non-negative with a positive cycle".into());
        }
        if !(self.cycle_us() > self.reporting_us()) {
            return bad(format!(
                "cycle of {} us does not exceed the reporting overhead N*t_r + t_b = {} us",
                self.cycle_us(),
                self.reporting_us()
            ));
        }
        if self.w_max < 1 {
            return bad("w_max must be at least 1".into());
        }
        if !(self.delta >= T::zero()) {
            return bad("delta must be non-negative".into());
        }
        if let Some(a) = &self.assignment {
            if a.num_sus() != n || a.num_channels() != m {
                return bad(format!("assignment must be {n}x{m}"));
            }
        }
        if let Some(d) = &self.design {
            if d.tau_us.len() != n || d.tau_us.iter().any(|r| r.len() != m) {
                return bad(format!("design.tau_us must be an {n}x{m} matrix"));
            }
            if d.window < 1 {
                return bad("design.window must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        let (n, m) = (file.num_sus, file.num_channels);
        let mut rng = ChaCha8Rng::seed_from_u64(file.seed.unwrap_or(0));
        let mut draw = |range: [f64; 2], what: &str| -> Result<f64> {
            let (lo, hi) = (range[0].min(range[1]), range[0].max(range[1]));
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::Validation(format!("{what} range must be finite")));
            }
            Ok(if lo == hi { lo } else { rng.gen_range(lo..hi) })
        };
        let snr_db = match (&file.snr_db, file.snr_db_range) {
            (Some(rows), _) => rows.clone(),
            (None, Some(range)) => {
                let mut rows = vec![vec![0.0; m]; n];
                for v in rows.iter_mut().flatten() {
                    *v = draw(range, "snr_db")?;
                }
                rows
            }
            (None, None) => return Err(Error::Validation("scenario needs snr_db or snr_db_range".into())),
        };
        let target_pd = match (&file.target_pd, file.target_pd_range) {
            (Some(v), _) => v.clone(),
            (None, Some(range)) => (0..m).map(|_| draw(range, "target_pd")).collect::<Result<_>>()?,
            (None, None) => return Err(Error::Validation("scenario needs target_pd or target_pd_range".into())),
        };
        let cvt = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let cvt_frames = |f: &FrameTimings<f64>| FrameTimings {
            phy_header_bits: T::lit(f.phy_header_bits),
            mac_header_bits: T::lit(f.mac_header_bits),
            packet_bits: T::lit(f.packet_bits),
            ack_bits: T::lit(f.ack_bits),
            sifs_us: T::lit(f.sifs_us),
            difs_us: T::lit(f.difs_us),
            prop_delay_us: T::lit(f.prop_delay_us),
            slot_us: T::lit(f.slot_us),
            bit_rate: T::lit(f.bit_rate),
        };
        let assignment = file
            .assignment
            .as_ref()
            .map(|rows| ChannelAssignment::from_compact_rows(rows))
            .transpose()?;
        let design = file.design.as_ref().map(|d| SensingDesign {
            tau_us: d.tau_us.iter().map(|r| cvt(r)).collect(),
            window: d.window,
        });
        let scenario = Scenario {
            name: file.name.clone(),
            seed: file.seed,
            num_sus: n,
            num_channels: m,
            snr_db: snr_db.iter().map(|r| cvt(r)).collect(),
            p_idle: cvt(&file.p_idle),
            target_pd: cvt(&target_pd),
            fusion: file.fusion.clone(),
            sampling_hz: T::lit(file.sampling_hz),
            noise_power: T::lit(file.noise_power),
            cycle: CycleTimings {
                cycle_ms: T::lit(file.cycle.cycle_ms),
                report_us: T::lit(file.cycle.report_us),
                broadcast_us: T::lit(file.cycle.broadcast_us),
            },
            frames: cvt_frames(&file.frames),
            max_backoff_stage: file.max_backoff_stage,
            w_max: file.w_max,
            delta: T::lit(file.delta),
            assignment,
            design,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Boundary-unit representation with every random draw realized.
    pub fn to_file(&self) -> ScenarioFile {
        let f = |v: T| v.to_f64_lossy();
        let row = |r: &[T]| r.iter().map(|&v| f(v)).collect::<Vec<f64>>();
        let fr = &self.frames;
        ScenarioFile {
            name: self.name.clone(),
            seed: self.seed,
            num_sus: self.num_sus,
            num_channels: self.num_channels,
            snr_db: Some(self.snr_db.iter().map(|r| row(r)).collect()),
            snr_db_range: None,
            p_idle: row(&self.p_idle),
            target_pd: Some(row(&self.target_pd)),
            target_pd_range: None,
            fusion: self.fusion.clone(),
            sampling_hz: f(self.sampling_hz),
            noise_power: f(self.noise_power),
            cycle: CycleTimings {
                cycle_ms: f(self.cycle.cycle_ms),
                report_us: f(self.cycle.report_us),
                broadcast_us: f(self.cycle.broadcast_us),
            },
            frames: FrameTimings {
                phy_header_bits: f(fr.phy_header_bits),
                mac_header_bits: f(fr.mac_header_bits),
                packet_bits: f(fr.packet_bits),
                ack_bits: f(fr.ack_bits),
                sifs_us: f(fr.sifs_us),
                difs_us: f(fr.difs_us),
                prop_delay_us: f(fr.prop_delay_us),
                slot_us: f(fr.slot_us),
                bit_rate: f(fr.bit_rate),
            },
            max_backoff_stage: self.max_backoff_stage,
            w_max: self.w_max,
            delta: f(self.delta),
            assignment: self.assignment.as_ref().map(|a| a.compact_rows()),
            design: self.design.as_ref().map(|d| DesignFile {
                window: d.window,
                tau_us: d.tau_us.iter().map(|r| row(r)).collect(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }
}

impl Scenario<f64> {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(&file)
    }
}

/// Loads a scenario file, or a preset when `path` names one.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario<f64>> {
    let path = path.as_ref();
    Scenario::from_file(&load_scenario_file(path)?).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads the raw file (or preset) without realizing random draws, so that
/// callers can change fields such as `seed` first.
pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(p) = path.to_str().and_then(preset_file) {
            return Ok(p);
        }
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e} (presets: {})", path.display(), PRESETS.join(", "))))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub window: u32,
    pub tau_us: Vec<Vec<f64>>,
}

/// On-disk scenario schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(alias = "N")]
    pub num_sus: usize,
    #[serde(alias = "M")]
    pub num_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db_range: Option<[f64; 2]>,
    pub p_idle: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pd: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pd_range: Option<[f64; 2]>,
    #[serde(default)]
    pub fusion: FusionSpec,
    #[serde(default = "default_sampling_hz")]
    pub sampling_hz: f64,
    #[serde(default = "default_noise_power")]
    pub noise_power: f64,
    #[serde(default)]
    pub cycle: CycleTimings<f64>,
    #[serde(default)]
    pub frames: FrameTimings<f64>,
    #[serde(default = "default_m0")]
    pub max_backoff_stage: u32,
    #[serde(default = "default_w_max")]
    pub w_max: u32,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Rows of `0`/`1` characters, one string per SU.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignFile>,
}

fn default_sampling_hz() -> f64 {
    6e6
}
fn default_noise_power() -> f64 {
    1.0
}
fn default_m0() -> u32 {
    3
}
fn default_w_max() -> u32 {
    1024
}
fn default_delta() -> f64 {
    1e-4
}

pub const PRESETS: [&str; 2] = ["paper_4x4", "paper_10x4"];

/// Seed used to realize the random SNR and target draws of the presets.
pub const PRESET_SEED: u64 = 7;

/// (SU, channel) pairs, 1-based, that see the stronger −10 dB signal in the
/// 10×4 setting. They double as that preset's channel assignment.
pub const STRONG_PAIRS_10X4: [(usize, usize); 15] = [
    (1, 1),
    (2, 1),
    (3, 1),
    (2, 2),
    (4, 2),
    (5, 2),
    (4, 3),
    (6, 3),
    (7, 3),
    (1, 4),
    (3, 4),
    (6, 4),
    (8, 4),
    (9, 4),
    (10, 4),
];

fn base_file(name: &str, n: usize, m: usize) -> ScenarioFile {
    ScenarioFile {
        name: Some(name.to_string()),
        seed: Some(PRESET_SEED),
        num_sus: n,
        num_channels: m,
        snr_db: None,
        snr_db_range: None,
        p_idle: vec![1.0; m],
        target_pd: None,
        target_pd_range: Some([0.95, 0.99]),
        fusion: FusionSpec::default(),
        sampling_hz: default_sampling_hz(),
        noise_power: default_noise_power(),
        cycle: CycleTimings::default(),
        frames: FrameTimings::default(),
        max_backoff_stage: default_m0(),
        w_max: default_w_max(),
        delta: default_delta(),
        assignment: None,
        design: None,
    }
}

/// Shipped scenarios.
///
/// * `paper_4x4`: 4 SUs, 4 channels, SNRs drawn in [−20, −15] dB, targets in
///   [0.95, 0.99], every channel idle with probability 1.
/// * `paper_10x4`: 10 SUs, 4 channels, −10 dB on [`STRONG_PAIRS_10X4`] and
///   −15 dB elsewhere, the strong pairs as fixed assignment, idle
///   probability 0.8 on every channel.
pub fn preset(name: &str) -> Option<Scenario<f64>> {
    preset_file(name).map(|f| Scenario::from_file(&f).expect("preset is valid"))
}

/// File form of a preset, before random draws are realized.
pub fn preset_file(name: &str) -> Option<ScenarioFile> {
    Some(match name {
        "paper_4x4" => ScenarioFile {
            snr_db_range: Some([-20.0, -15.0]),
            ..base_file(name, 4, 4)
        },
        "paper_10x4" => {
            let (n, m) = (10, 4);
            let mut snr = vec![vec![-15.0; m]; n];
            let mut rows = vec![vec![false; m]; n];
            for (i, j) in STRONG_PAIRS_10X4 {
                snr[i - 1][j - 1] = -10.0;
                rows[i - 1][j - 1] = true;
            }
            ScenarioFile {
                snr_db: Some(snr),
                p_idle: vec![0.8; m],
                assignment: Some(ChannelAssignment::from_rows(&rows).compact_rows()),
                ..base_file(name, n, m)
            }
        }
        _ => return None,
    })
}
