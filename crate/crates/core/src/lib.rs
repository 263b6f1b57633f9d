//! Throughput analysis and optimization for a multi-channel cognitive radio
//! MAC with cooperative a-out-of-b spectrum sensing.
//!
//! SUs sense their assigned channels at the start of every cycle and report
//! one-bit decisions to an AP, which fuses them per channel and broadcasts
//! the idle list. The SUs then contend with exponential backoff and the
//! winner transmits on every channel declared idle. The crate provides:
//!
//! * [`sensing`]: energy-detector ROC formulas and fused probabilities,
//! * [`mac`]: the saturation contention model and the normalized throughput,
//! * [`optimizer`]: the joint sensing-time / contention-window search,
//! * [`assignment`]: Hungarian seeding, greedy growth, exhaustive search and
//!   round-robin channel assignment,
//! * [`simulator`]: a seeded Monte Carlo model of the protocol,
//! * [`scenario`] and [`experiment`]: problem files, presets and sweeps.
//!
//! All numerical code is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`.

pub mod assignment;
pub mod error;
pub mod experiment;
pub mod mac;
pub mod optimizer;
pub mod real;
pub mod scenario;
pub mod sensing;
pub mod simulator;

pub use assignment::{
    brute_force_channel_assignment, evaluate_assignment, greedy_channel_assignment, greedy_channel_assignment_with,
    hungarian_min_cost, hungarian_seed, round_robin_assignment, round_robin_with, BruteForceLimits, ChannelAssignment,
    ParameterPolicy, RoundRobinPattern,
};
pub use error::{Error, Result};
pub use mac::{
    bianchi_fixed_point, contention_stats, expected_correct_idle, normalized_throughput, single_channel_throughput,
    slot_durations,
};
pub use optimizer::{
    grid_reference_optimum, optimize_design, scalar_tau_search, OptimizerOptions, WindowSearch, WindowStride,
};
pub use real::Real;
pub use scenario::{load_scenario, load_scenario_file, preset, preset_file, FusionSpec, ScenarioFile, PRESETS};
pub use sensing::{
    detection_probability, false_alarm_from_target_pd, false_alarm_from_threshold, fused_probability, gaussian_tail,
    gaussian_tail_inverse, invert_equal_fused, sensing_performance, FusionRule,
};
pub use simulator::{simulate_contention_phase, simulate_cycles, EmpiricalReport, SimConfig};

pub type Scenario = scenario::Scenario<f64>;
pub type SensingDesign = optimizer::SensingDesign<f64>;
pub type Optimum = optimizer::Optimum<f64>;
pub type GridSpec = optimizer::GridSpec<f64>;
pub type SensingPerformance = sensing::SensingPerformance<f64>;
pub type DetectorContext = sensing::DetectorContext<f64>;
pub type ThroughputReport = mac::ThroughputReport<f64>;
pub type ContentionStats = mac::ContentionStats<f64>;
pub type FrameTimings = mac::FrameTimings<f64>;
pub type CycleTimings = mac::CycleTimings<f64>;
pub type AssignmentOutcome = assignment::AssignmentOutcome<f64>;

pub type ScenarioF32 = scenario::Scenario<f32>;
pub type SensingDesignF32 = optimizer::SensingDesign<f32>;
pub type ThroughputReportF32 = mac::ThroughputReport<f32>;
