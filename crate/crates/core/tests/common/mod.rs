#![allow(dead_code)]

use coopsense::{preset_file, ChannelAssignment, FusionRule, FusionSpec, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scenario with explicit SNRs, targets and idle probabilities; everything
/// else at the defaults.
pub fn scenario(snr_db: Vec<Vec<f64>>, p_idle: Vec<f64>, target_pd: Vec<f64>, fusion: FusionRule) -> Scenario {
    let mut f = preset_file("paper_4x4").unwrap();
    f.name = None;
    f.seed = None;
    f.num_sus = snr_db.len();
    f.num_channels = p_idle.len();
    f.snr_db = Some(snr_db);
    f.snr_db_range = None;
    f.p_idle = p_idle;
    f.target_pd = Some(target_pd);
    f.target_pd_range = None;
    f.fusion = FusionSpec::Global(fusion);
    Scenario::from_file(&f).unwrap()
}

pub fn random_rule<R: Rng>(rng: &mut R) -> FusionRule {
    match rng.gen_range(0..4) {
        0 => FusionRule::Or,
        1 => FusionRule::And,
        2 => FusionRule::Majority,
        _ => FusionRule::Fixed(rng.gen_range(1..4)),
    }
}

/// Random `n × m` instance with SNRs, idle probabilities and targets drawn wide.
pub fn random_scenario<R: Rng>(rng: &mut R, n: usize, m: usize) -> Scenario {
    let snr = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(-20.0..-5.0)).collect())
        .collect();
    let p_idle = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
    let target = (0..m).map(|_| rng.gen_range(0.9..0.99)).collect();
    let rule = random_rule(rng);
    scenario(snr, p_idle, target, rule)
}

/// Instance drawn like the 4×4 preset: SNRs in [−20, −15] dB, targets in [0.95, 0.99],
/// every channel always idle.
pub fn preset_style(seed: u64, n: usize, m: usize) -> Scenario {
    let mut f = preset_file("paper_4x4").unwrap();
    f.name = Some(format!("preset_style_{n}x{m}_{seed}"));
    f.seed = Some(seed);
    f.num_sus = n;
    f.num_channels = m;
    f.p_idle = vec![1.0; m];
    Scenario::from_file(&f).unwrap()
}

/// Random assignment with exactly `pairs` assigned cells.
pub fn random_assignment<R: Rng>(rng: &mut R, n: usize, m: usize, pairs: usize) -> ChannelAssignment {
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let mut a = ChannelAssignment::empty(n, m);
    for _ in 0..pairs.min(cells.len()) {
        let k = rng.gen_range(0..cells.len());
        let (i, j) = cells.swap_remove(k);
        a.set(i, j, true);
    }
    a
}

/// `P(at least a of the events occur)` by listing all `2^b` outcomes.
pub fn enumerate_upper_tail(p: &[f64], a: usize) -> f64 {
    let b = p.len();
    let mut total = 0.0;
    for outcome in 0u32..(1 << b) {
        if (outcome.count_ones() as usize) < a {
            continue;
        }
        let mut prob = 1.0;
        for (k, &pk) in p.iter().enumerate() {
            prob *= if outcome >> k & 1 == 1 { pk } else { 1.0 - pk };
        }
        total += prob;
    }
    total
}

/// Expected number of idle channels the AP declares idle, summed over every
/// idle set and every declared-idle subset of it. `pf[j] = 1` for a channel
/// nobody senses.
pub fn enumerate_expected_idle(p_idle: &[f64], pf: &[f64]) -> f64 {
    let m = p_idle.len();
    let mut total = 0.0;
    for idle in 0u32..(1 << m) {
        let mut p_state = 1.0;
        for j in 0..m {
            p_state *= if idle >> j & 1 == 1 { p_idle[j] } else { 1.0 - p_idle[j] };
        }
        let mut inner = 0.0;
        // declared ⊆ idle
        let mut declared = idle;
        loop {
            let n = declared.count_ones() as f64;
            let mut p_decl = 1.0;
            for j in 0..m {
                if idle >> j & 1 == 1 {
                    p_decl *= if declared >> j & 1 == 1 { 1.0 - pf[j] } else { pf[j] };
                }
            }
            inner += n * p_decl;
            if declared == 0 {
                break;
            }
            declared = (declared - 1) & idle;
        }
        total += p_state * inner;
    }
    total
}

/// Attempt probability from the collision probability in its original,
/// unexpanded form.
pub fn attempt_original(p: f64, w: f64, m0: i32) -> f64 {
    let q = 1.0 - 2.0 * p;
    2.0 * q / (q * (w + 1.0) + w * p * (1.0 - (2.0 * p).powi(m0)))
}
