//! Stochastic cross-checks of the detection algebra.
//!
//! Two layers: per-pair click trials (no timing) and a timestamped event
//! stream with coincidence matching, darks, and dead time.
//!
//! Every random draw comes from a ChaCha8 generator seeded by the config
//! seed, with a distinct stream id per event category and per 2^16-trial
//! chunk. Results are therefore reproducible and independent of execution
//! order or thread count; splitting work elsewhere cannot change them.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::EmissionRates;
use crate::detection::{pair_outcomes, ArmSpec, MeasuredDual, MeasuredSingle};
use crate::error::{Error, Result};

/// Trials per RNG stream; merging chunk tallies is associative, so the
/// total is the same no matter how chunks are scheduled.
const TRIAL_CHUNK: u64 = 1 << 16;

/// Below this many expected coincidences the outcome gets a statistics
/// warning.
const COINCIDENCE_FLOOR: f64 = 100.0;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Click tallies over repeated identical trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub trials: u64,
    pub zero: u64,
    pub one: u64,
    pub two: u64,
}

/// Outcome frequencies (and their standard errors) in the same shape as
/// the analytic click distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialFrequencies {
    pub two: f64,
    pub one: f64,
    pub zero: f64,
}

impl TrialCounts {
    pub fn frequencies(&self) -> TrialFrequencies {
        let n = self.trials as f64;
        TrialFrequencies {
            two: self.two as f64 / n,
            one: self.one as f64 / n,
            zero: self.zero as f64 / n,
        }
    }

    /// Binomial standard error per outcome.
    pub fn std_errors(&self) -> TrialFrequencies {
        let n = self.trials as f64;
        let se = |p: f64| (p * (1.0 - p) / n).sqrt();
        let f = self.frequencies();
        TrialFrequencies {
            two: se(f.two),
            one: se(f.one),
            zero: se(f.zero),
        }
    }

    fn absorb(&mut self, clicks: u32) {
        self.trials += 1;
        match clicks {
            0 => self.zero += 1,
            1 => self.one += 1,
            _ => self.two += 1,
        }
    }
}

/// One photon through an arm: Some(wire) on a click.
fn detect_photon(rng: &mut ChaCha8Rng, arm: &ArmSpec) -> Option<u16> {
    let wires = arm.detector.wire_count;
    let wire = rng.random_range(0..wires) as u16;
    let eta = arm.eta_s * arm.detector.wire_eta(wire as usize);
    if rng.random::<f64>() < eta {
        Some(wire)
    } else {
        None
    }
}

/// Sends `trials` photon pairs one at a time into a single multiplexed
/// detector and tallies click counts; same-wire double hits register as
/// one click.
pub fn simulate_pair_trials(arm: &ArmSpec, trials: u64, seed: u64) -> Result<TrialCounts> {
    arm.validate()?;
    let mut total = TrialCounts::default();
    let mut done = 0u64;
    let mut chunk = 0u64;
    while done < trials {
        let n = TRIAL_CHUNK.min(trials - done);
        let mut rng = stream_rng(seed, chunk);
        for _ in 0..n {
            let first = detect_photon(&mut rng, arm);
            let second = detect_photon(&mut rng, arm);
            let clicks = match (first, second) {
                (Some(w1), Some(w2)) if w1 == w2 => 1,
                (Some(_), Some(_)) => 2,
                (Some(_), None) | (None, Some(_)) => 1,
                (None, None) => 0,
            };
            total.absorb(clicks);
        }
        done += n;
        chunk += 1;
    }
    Ok(total)
}

/// Sends lone photons; clicks are Bernoulli(η_s·η_d).
pub fn simulate_single_trials(arm: &ArmSpec, trials: u64, seed: u64) -> Result<TrialCounts> {
    arm.validate()?;
    let mut total = TrialCounts::default();
    let mut done = 0u64;
    let mut chunk = 0u64;
    while done < trials {
        let n = TRIAL_CHUNK.min(trials - done);
        let mut rng = stream_rng(seed, chunk);
        for _ in 0..n {
            total.absorb(u32::from(detect_photon(&mut rng, arm).is_some()));
        }
        done += n;
        chunk += 1;
    }
    Ok(total)
}

/// Detector layout of a timestream run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimMode {
    /// Both arms multiplexed onto one detector; coincidences are two
    /// clicks on different wires.
    Single { arm: ArmSpec },
    /// One detector per arm; coincidences are cross-arm clicks.
    Dual { arm_a: ArmSpec, arm_b: ArmSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub label: String,
    pub seed: u64,
    pub duration_s: f64,
    /// Coincidence window: clicks with |t1 − t2| ≤ window pair up.
    pub window_s: f64,
    /// Intrinsic rates entering the collection fibers, absolute cps.
    pub rates_cps: EmissionRates,
    pub mode: SimMode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates_cps.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Domain(format!(
                "duration_s must be positive, got {:e}",
                self.duration_s
            )));
        }
        if !(self.window_s.is_finite() && self.window_s >= 0.0) {
            return Err(Error::Domain(format!(
                "window_s must be ≥ 0, got {:e}",
                self.window_s
            )));
        }
        match &self.mode {
            SimMode::Single { arm } => arm.validate(),
            SimMode::Dual { arm_a, arm_b } => {
                arm_a.validate()?;
                arm_b.validate()
            }
        }
    }
}

/// Raw tallies of a timestream run, with event origins kept visible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCounts {
    pub clicks_a: u64,
    pub clicks_b: u64,
    pub coincidences: u64,
    /// Matched pairs that really came from one emission event.
    pub true_pairs: u64,
    /// Matched pairs involving a dark or an unrelated photon.
    pub accidentals: u64,
    pub dark_clicks_a: u64,
    pub dark_clicks_b: u64,
    /// Events lost to a busy wire (dead time or unresolvably close).
    pub wire_blocked: u64,
}

/// Measurement records as the counting electronics would report them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum Measured {
    Single(MeasuredSingle),
    Dual(MeasuredDual),
}

/// Poisson standard errors of the reported rates, cps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub singles_a: f64,
    pub singles_b: f64,
    pub coincidences: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub config: SimConfig,
    pub counts: SimCounts,
    pub measured: Measured,
    pub std_errors: StdErrors,
    pub true_pair_cps: f64,
    pub accidental_cps: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Origin {
    PairPhoton(u64),
    Solo,
    Dark,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    t: f64,
    arm: u8,
    wire: u16,
    origin: Origin,
}

fn exp_gap(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    // 1 - random() ∈ (0, 1], so the log is finite
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Greedy earliest-first matcher over time-sorted events. An incoming
/// click pairs with the oldest pending click within the window on a
/// different wire (single layout) or different arm (dual layout).
fn match_coincidences(
    events: &[Event],
    window: f64,
    cross_arm_only: bool,
) -> (u64, u64) {
    let mut pending: VecDeque<Event> = VecDeque::new();
    let mut true_pairs = 0u64;
    let mut accidentals = 0u64;
    for &e in events {
        while let Some(front) = pending.front() {
            if e.t - front.t > window {
                pending.pop_front();
            } else {
                break;
            }
        }
        let eligible = |p: &Event| {
            if cross_arm_only {
                p.arm != e.arm
            } else {
                (p.arm, p.wire) != (e.arm, e.wire)
            }
        };
        if let Some(pos) = pending.iter().position(eligible) {
            let p = pending.remove(pos).expect("position came from the deque");
            match (p.origin, e.origin) {
                (Origin::PairPhoton(i), Origin::PairPhoton(j)) if i == j => true_pairs += 1,
                _ => accidentals += 1,
            }
        } else {
            pending.push_back(e);
        }
    }
    (true_pairs, accidentals)
}

/// Simulates a run of the counting experiment: Poisson emission of pairs
/// and unpaired singles, dark counts, per-wire blocking, and coincidence
/// matching. Returns the measurement records plus origin-tagged truth.
pub fn simulate_timestream(config: &SimConfig) -> Result<SimOutcome> {
    config.validate()?;
    let rates = &config.rates_cps;
    let duration = config.duration_s;
    let (arm_a, arm_b, dual) = match &config.mode {
        SimMode::Single { arm } => (arm, arm, false),
        SimMode::Dual { arm_a, arm_b } => (arm_a, arm_b, true),
    };

    let mut events: Vec<Event> = Vec::new();
    let mut counts = SimCounts::default();

    // stream 0: pair emissions, both photons stamped with the emission time
    {
        let mut rng = stream_rng(config.seed, 0);
        let mut t = 0.0;
        let mut pair_id = 0u64;
        if rates.r_c > 0.0 {
            loop {
                t += exp_gap(&mut rng, rates.r_c);
                if t >= duration {
                    break;
                }
                if let Some(wire) = detect_photon(&mut rng, arm_a) {
                    events.push(Event {
                        t,
                        arm: 0,
                        wire,
                        origin: Origin::PairPhoton(pair_id),
                    });
                }
                if let Some(wire) = detect_photon(&mut rng, arm_b) {
                    events.push(Event {
                        t,
                        arm: u8::from(dual),
                        wire,
                        origin: Origin::PairPhoton(pair_id),
                    });
                }
                pair_id += 1;
            }
        }
    }

    // streams 1, 2: photons whose partner never entered the other fiber
    for (stream, rate, arm, arm_idx) in [
        (1u64, rates.r_a - rates.r_c, arm_a, 0u8),
        (2u64, rates.r_b - rates.r_c, arm_b, u8::from(dual)),
    ] {
        if rate <= 0.0 {
            continue;
        }
        let mut rng = stream_rng(config.seed, stream);
        let mut t = 0.0;
        loop {
            t += exp_gap(&mut rng, rate);
            if t >= duration {
                break;
            }
            if let Some(wire) = detect_photon(&mut rng, arm) {
                events.push(Event {
                    t,
                    arm: arm_idx,
                    wire,
                    origin: Origin::Solo,
                });
            }
        }
    }

    // streams 3, 4: dark counts, one stream per physical detector
    let dark_setups: &[(u64, &ArmSpec, u8)] = if dual {
        &[(3, arm_a, 0), (4, arm_b, 1)]
    } else {
        &[(3, arm_a, 0)]
    };
    for &(stream, arm, arm_idx) in dark_setups {
        let rate = arm.detector.dark_cps;
        if rate <= 0.0 {
            continue;
        }
        let mut rng = stream_rng(config.seed, stream);
        let mut t = 0.0;
        loop {
            t += exp_gap(&mut rng, rate);
            if t >= duration {
                break;
            }
            let wire = rng.random_range(0..arm.detector.wire_count) as u16;
            events.push(Event {
                t,
                arm: arm_idx,
                wire,
                origin: Origin::Dark,
            });
        }
    }

    events.sort_unstable_by(|x, y| {
        x.t.partial_cmp(&y.t)
            .expect("event times are finite")
            .then(x.arm.cmp(&y.arm))
            .then(x.wire.cmp(&y.wire))
    });

    // Per-wire blocking: a wire that clicked is blind for the configured
    // dead time, and never resolves two hits within one coincidence window.
    let mut accepted: Vec<Event> = Vec::with_capacity(events.len());
    {
        let mut last_click: std::collections::HashMap<(u8, u16), f64> =
            std::collections::HashMap::new();
        for e in events {
            let dead = if e.arm == 0 {
                arm_a.detector.dead_time_s
            } else {
                arm_b.detector.dead_time_s
            };
            let blocking = dead.max(config.window_s);
            let key = (e.arm, e.wire);
            match last_click.get(&key) {
                Some(&t0) if e.t - t0 < blocking => {
                    counts.wire_blocked += 1;
                }
                _ => {
                    last_click.insert(key, e.t);
                    accepted.push(e);
                }
            }
        }
    }

    for e in &accepted {
        if e.arm == 0 {
            counts.clicks_a += 1;
            if e.origin == Origin::Dark {
                counts.dark_clicks_a += 1;
            }
        } else {
            counts.clicks_b += 1;
            if e.origin == Origin::Dark {
                counts.dark_clicks_b += 1;
            }
        }
    }

    let (true_pairs, accidentals) = match_coincidences(&accepted, config.window_s, dual);
    counts.true_pairs = true_pairs;
    counts.accidentals = accidentals;
    counts.coincidences = true_pairs + accidentals;

    let (measured, std_errors, expected_coinc) = estimate_rates(config, &counts)?;
    let mut warnings = Vec::new();
    if expected_coinc < COINCIDENCE_FLOOR {
        warnings.push(format!(
            "expected only {expected_coinc:.1} coincidences in {duration} s; statistics will be poor"
        ));
    }
    Ok(SimOutcome {
        config: config.clone(),
        counts,
        measured,
        std_errors,
        true_pair_cps: counts.true_pairs as f64 / duration,
        accidental_cps: counts.accidentals as f64 / duration,
        warnings,
    })
}

/// Turns raw tallies into the measurement records the electronics would
/// log (characterized dark rates copied from the config, coincident darks
/// left at 0 for downstream correction policy), plus Poisson standard
/// errors and the analytically expected coincidence count.
pub fn estimate_rates(config: &SimConfig, counts: &SimCounts) -> Result<(Measured, StdErrors, f64)> {
    let t = config.duration_s;
    let rates = &config.rates_cps;
    match &config.mode {
        SimMode::Single { arm } => {
            let eta = arm.eta();
            let expected =
                rates.r_c * pair_outcomes(eta, arm.detector.wire_count)?.two * t;
            let measured = Measured::Single(MeasuredSingle {
                label: config.label.clone(),
                r_t: counts.clicks_a as f64 / t,
                r_c: counts.coincidences as f64 / t,
                dark: arm.detector.dark_cps,
                dark_coinc: 0.0,
                window_s: config.window_s,
            });
            let errors = StdErrors {
                singles_a: (counts.clicks_a as f64).sqrt() / t,
                singles_b: 0.0,
                coincidences: (counts.coincidences as f64).sqrt() / t,
            };
            Ok((measured, errors, expected))
        }
        SimMode::Dual { arm_a, arm_b } => {
            let expected = rates.r_c * arm_a.eta() * arm_b.eta() * t;
            let measured = Measured::Dual(MeasuredDual {
                label: config.label.clone(),
                r_a: counts.clicks_a as f64 / t,
                r_b: counts.clicks_b as f64 / t,
                r_c: counts.coincidences as f64 / t,
                dark_a: arm_a.detector.dark_cps,
                dark_b: arm_b.detector.dark_cps,
                dark_coinc: 0.0,
                window_s: config.window_s,
            });
            let errors = StdErrors {
                singles_a: (counts.clicks_a as f64).sqrt() / t,
                singles_b: (counts.clicks_b as f64).sqrt() / t,
                coincidences: (counts.coincidences as f64).sqrt() / t,
            };
            Ok((measured, errors, expected))
        }
    }
}
