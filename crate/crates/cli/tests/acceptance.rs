//! Acceptance gate: ten fixed-tolerance criteria spanning the stack, from
//! closed-form identities to a synthetic end-to-end experiment through the
//! compiled binary. Each test prints one [PASS]/[FAIL] line (visible with
//! `--nocapture`, or automatically when a criterion fails) and asserts it.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use biphoton::coupling::{
    emission_rates_with, eta_c_closed_form, eta_c_from_rates, focal_parameter, EmissionRates,
    FocusConfig,
};
use biphoton::detection::{
    forward_dual, forward_single, invert_dual, invert_single, pair_outcomes,
    pair_outcomes_per_wire, ArmSpec, DetectorSpec, MeasuredDual, MeasuredSingle,
};
use biphoton::dispersion::{phase_mismatch, CrystalSpec, ModelSet, WaveTriple};
use biphoton::montecarlo::{
    simulate_pair_trials, simulate_single_trials, simulate_timestream, SimConfig, SimMode,
};
use biphoton::sweep::{find_peak_xi_a, fit_d_eff, Context, FitRecord, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn report(n: u32, what: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {n:02} — {what}: {detail}");
    assert!(pass, "criterion {n:02} — {what}: {detail}");
}

fn ktp() -> (CrystalSpec, WaveTriple) {
    let crystal = CrystalSpec::ktp_780_1560();
    let models = ModelSet::ktp();
    let waves = WaveTriple::degenerate(&crystal, &models, 780e-9).unwrap();
    (crystal, waves)
}

fn arm(eta_s: f64, eta_d: f64, dark_cps: f64) -> ArmSpec {
    ArmSpec {
        eta_s,
        detector: DetectorSpec {
            eta_d,
            dark_cps,
            wire_count: 4,
            per_wire_eta_d: None,
            dead_time_s: 0.0,
        },
    }
}

#[test]
fn a01_closed_form_identity() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let pm = phase_mismatch(&crystal, &waves);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut xi = || 10f64.powf(rng.random_range(-2.0..1.0));
        let (xi_p, xi_a, xi_b) = (xi(), xi(), xi());
        let focus = FocusConfig::new(xi_p, xi_a, xi_b).unwrap();
        let dk = match rng.random_range(0..3u32) {
            0 => pm.bare,
            1 => 0.0,
            _ => rng.random_range(-0.02..0.02) * waves.k_p,
        };
        let direct = eta_c_closed_form(&waves, dk, &focus).unwrap();
        let rates = emission_rates_with(&crystal, &waves, dk, &focus).unwrap();
        let ratio = rates.r_c / (rates.r_a * rates.r_b).sqrt();
        worst = worst.max((direct - ratio).abs() / direct);
    }
    let dt = t0.elapsed();
    report(
        1,
        "closed-form efficiency equals the rate ratio",
        worst <= 1e-12 && dt < Duration::from_secs(1),
        &format!("worst relative deviation {worst:.2e} over 1000 random configurations in {dt:?}"),
    );
}

#[test]
fn a02_peak_coupling_tight_pump_focus() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let ctx = Context::new(&crystal, &waves);
    let peak = find_peak_xi_a(&ctx, 2.84, Objective::EtaC).unwrap();
    let dt = t0.elapsed();
    report(
        2,
        "tight pump focus caps the coupling near 3/4",
        (peak.value - 0.75).abs() <= 0.02 && dt < Duration::from_secs(1),
        &format!("peak eta_c = {:.4} at xi_a = {:.3} in {dt:?}", peak.value, peak.xi_a),
    );
}

#[test]
fn a03_loose_pump_focus_trades_rate_for_coupling() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let ctx = Context::new(&crystal, &waves);
    let peak = find_peak_xi_a(&ctx, 0.0284, Objective::EtaC).unwrap();
    let baseline = ctx.baseline_pair_rate().unwrap();
    let norm = ctx.rates(0.0284, peak.xi_a).unwrap().r_c / baseline;
    let dt = t0.elapsed();
    report(
        3,
        "loose pump focus: eta_c ≥ 0.96 at ~7% of the best pair rate",
        peak.value >= 0.96 && (norm - 0.07).abs() <= 0.02 && dt < Duration::from_secs(1),
        &format!(
            "peak eta_c = {:.4} at xi_a = {:.3}, normalized pair rate {norm:.4} in {dt:?}",
            peak.value, peak.xi_a
        ),
    );
}

#[test]
fn a04_waist_to_focal_parameter_correspondence() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let mut worst_pump = 0.0f64;
    for (w_um, want) in [(121.0, 48.6e-3), (167.0, 25.5e-3), (209.0, 16.1e-3)] {
        let xi = focal_parameter(crystal.length_m, waves.k_p, w_um * 1e-6).unwrap();
        worst_pump = worst_pump.max((xi - want).abs() / want);
    }
    let mut worst_coll = 0.0f64;
    for (w_um, want) in [(47.0, 0.63), (110.0, 0.11)] {
        let xi = focal_parameter(crystal.length_m, waves.k_a, w_um * 1e-6).unwrap();
        worst_coll = worst_coll.max((xi - want).abs() / want);
    }
    let dt = t0.elapsed();
    report(
        4,
        "bench waists map onto the quoted focal parameters",
        worst_pump <= 0.03 && worst_coll <= 0.06 && dt < Duration::from_secs(1),
        &format!(
            "pump worst dev {:.2}%, collection worst dev {:.2}% in {dt:?}",
            100.0 * worst_pump,
            100.0 * worst_coll
        ),
    );
}

#[test]
fn a05_poling_period_matches_dispersion_deficit() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let pm = phase_mismatch(&crystal, &waves);
    let dev = (pm.bare - pm.grating).abs() / pm.grating;
    let dt = t0.elapsed();
    report(
        5,
        "bare mismatch sits within 5% of the grating wavenumber",
        dev < 0.05 && dt < Duration::from_secs(1),
        &format!(
            "bare {:.4e}, grating {:.4e}, deviation {:.2}% in {dt:?}",
            pm.bare,
            pm.grating,
            100.0 * dev
        ),
    );
}

#[test]
fn a06_click_statistics_match_analytic_model() {
    let t0 = Instant::now();
    let n = 1_000_000u64;
    let nf = n as f64;
    let mut worst_z = 0.0f64;
    let mut worst_shift = 0.0f64;
    for (i, eta) in [0.1, 0.25, 0.5, 0.9].into_iter().enumerate() {
        let uniform_arm = arm(1.0, eta, 0.0);
        let want = pair_outcomes(eta, 4).unwrap();
        let f = simulate_pair_trials(&uniform_arm, n, 600 + i as u64)
            .unwrap()
            .frequencies();
        for (got, p) in [(f.two, want.two), (f.one, want.one), (f.zero, want.zero)] {
            let se = (p * (1.0 - p) / nf).sqrt();
            worst_z = worst_z.max((got - p).abs() / se);
        }
        let fs = simulate_single_trials(&uniform_arm, n, 700 + i as u64)
            .unwrap()
            .frequencies();
        let se = (eta * (1.0 - eta) / nf).sqrt();
        worst_z = worst_z.max((fs.one - eta).abs() / se);

        // ±1% wire-to-wire inhomogeneity barely moves the outcome split
        let table: Vec<f64> = [1.01, 0.99, 1.01, 0.99].iter().map(|m| m * eta).collect();
        let per = pair_outcomes_per_wire(1.0, &table).unwrap();
        for (p, u) in [(per.two, want.two), (per.one, want.one), (per.zero, want.zero)] {
            worst_shift = worst_shift.max((p - u).abs() / u);
        }
        let pw_arm = ArmSpec {
            eta_s: 1.0,
            detector: DetectorSpec {
                eta_d: eta,
                dark_cps: 0.0,
                wire_count: 4,
                per_wire_eta_d: Some(table),
                dead_time_s: 0.0,
            },
        };
        let fpw = simulate_pair_trials(&pw_arm, n, 800 + i as u64)
            .unwrap()
            .frequencies();
        for (got, p) in [(fpw.two, per.two), (fpw.one, per.one), (fpw.zero, per.zero)] {
            let se = (p * (1.0 - p) / nf).sqrt();
            worst_z = worst_z.max((got - p).abs() / se);
        }
    }
    let dt = t0.elapsed();
    report(
        6,
        "10⁶-trial click statistics within 3 binomial errors",
        worst_z <= 3.0 && worst_shift < 0.01 && dt < Duration::from_secs(30),
        &format!(
            "worst z = {worst_z:.2}, worst ±1% inhomogeneity shift {:.3}% in {dt:?}",
            100.0 * worst_shift
        ),
    );
}

#[test]
fn a07_inversion_round_trips() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let r_c = rng.random_range(1.0..1e5);
        let rates = EmissionRates {
            r_a: r_c + rng.random_range(0.0..1e5),
            r_b: r_c + rng.random_range(0.0..1e5),
            r_c,
        };
        let arm_a = arm(
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.0..5e3),
        );
        let arm_b = arm(
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.0..5e3),
        );
        let det = forward_dual(&rates, &arm_a, &arm_b).unwrap();
        let m = MeasuredDual {
            label: "t".to_string(),
            r_a: det.r_a + arm_a.detector.dark_cps,
            r_b: det.r_b + arm_b.detector.dark_cps,
            r_c: det.r_c,
            dark_a: arm_a.detector.dark_cps,
            dark_b: arm_b.detector.dark_cps,
            dark_coinc: 0.0,
            window_s: 1e-9,
        };
        let inv = invert_dual(&m, &arm_a, &arm_b, false).unwrap();
        worst = worst.max((inv.r_a - rates.r_a).abs() / rates.r_a);
        worst = worst.max((inv.r_b - rates.r_b).abs() / rates.r_b);
        worst = worst.max((inv.r_c - rates.r_c).abs() / rates.r_c);

        let mut single = arm(
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.0..5e3),
        );
        single.detector.wire_count = rng.random_range(2..=16);
        let fwd = forward_single(&rates, single.eta_s, &single.detector).unwrap();
        let ms = MeasuredSingle {
            label: "t".to_string(),
            r_t: fwd.r_t + single.detector.dark_cps,
            r_c: fwd.r_c,
            dark: single.detector.dark_cps,
            dark_coinc: 0.0,
            window_s: 1e-9,
        };
        let inv = invert_single(&ms, single.eta_s, &single.detector, false).unwrap();
        worst = worst.max((inv.r_t - rates.r_t()).abs() / rates.r_t());
        worst = worst.max((inv.r_c - rates.r_c).abs() / rates.r_c);
    }
    let dt = t0.elapsed();
    report(
        7,
        "forward∘invert is the identity in both layouts",
        worst <= 1e-9 && dt < Duration::from_secs(1),
        &format!("worst relative deviation {worst:.2e} over 1000 random inputs in {dt:?}"),
    );
}

#[test]
fn a08_end_to_end_synthetic_experiment() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let ctx = Context::new(&crystal, &waves);
    let eta_true = eta_c_from_rates(&ctx.rates(0.0243, 0.19).unwrap());

    let dir = TempDir::new().unwrap();
    let meas = dir.path().join("op.csv");
    let arms = r#""a": {"eta_s": 0.714, "detector": {"eta_d": 0.679, "dark_cps": 800.0}},
    "b": {"eta_s": 0.674, "detector": {"eta_d": 0.371, "dark_cps": 6000.0}}"#;
    let sim_cfg = dir.path().join("sim.json");
    fs::write(
        &sim_cfg,
        format!(
            r#"{{
  "pump_mw": 2.0,
  "simulate": {{
    "layout": "dual",
    "duration_s": 50.0,
    "window_s": 1e-9,
    "seed": 20260819,
    "label": "op",
    "focus": {{"xi_p": 0.0243, "xi_a": 0.19}},
    {arms}
  }}
}}"#
        ),
    )
    .unwrap();
    let sim = Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(["simulate", "--config", sim_cfg.to_str().unwrap(), "--out", meas.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));

    let inv_cfg = dir.path().join("inv.json");
    fs::write(
        &inv_cfg,
        format!(
            r#"{{
  "invert": {{
    "layout": "dual",
    "input": "{}",
    {arms}
  }}
}}"#,
            meas.display()
        ),
    )
    .unwrap();
    let inv = Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(["invert", "--config", inv_cfg.to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    assert!(inv.status.success(), "{}", String::from_utf8_lossy(&inv.stderr));
    let parsed: serde_json::Value = serde_json::from_slice(&inv.stdout).unwrap();
    let eta_rec = parsed["rows"][0]["eta_c"].as_f64().unwrap();

    // statistical error propagated from the run's own count statistics
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format!("{}.truth.json", meas.display())).unwrap())
            .unwrap();
    let m = &truth["measured"];
    let se = &truth["std_errors"];
    let a = m["R_a"].as_f64().unwrap() - 800.0;
    let b = m["R_b"].as_f64().unwrap() - 6000.0;
    let c = m["R_c"].as_f64().unwrap();
    let rel = (se["coincidences"].as_f64().unwrap() / c).powi(2)
        + 0.25 * (se["singles_a"].as_f64().unwrap() / a).powi(2)
        + 0.25 * (se["singles_b"].as_f64().unwrap() / b).powi(2);
    let sigma = eta_rec * rel.sqrt();

    let dt = t0.elapsed();
    report(
        8,
        "simulate → invert recovers the configured coupling",
        (eta_rec - eta_true).abs() <= 3.0 * sigma
            && (eta_true - 0.97).abs() <= 0.02
            && dt < Duration::from_secs(120),
        &format!(
            "recovered eta_c = {eta_rec:.5} vs configured {eta_true:.5} (3σ = {:.5}) in {dt:?}",
            3.0 * sigma
        ),
    );
}

#[test]
fn a09_nonlinearity_fit() {
    let t0 = Instant::now();
    let (crystal, waves) = ktp();
    let truth_ctx = Context::new(&crystal, &waves);
    let reference = CrystalSpec {
        d_eff_m_per_v: 1.0e-12,
        ..crystal
    };
    let ref_ctx = Context::new(&reference, &waves);

    let mut records = Vec::new();
    for xi_p in [0.0486, 0.0255, 0.0161, 2.84] {
        for xi_a in [0.1, 0.2, 0.4, 1.0, 3.0] {
            records.push(FitRecord {
                xi_p,
                xi_a,
                pair_rate: truth_ctx.rates(xi_p, xi_a).unwrap().r_c,
            });
        }
    }
    let exact = fit_d_eff(&ref_ctx, &records).unwrap();
    let exact_dev = (exact.d_eff_m_per_v - 1.82e-12).abs() / 1.82e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let noisy: Vec<FitRecord> = records
        .iter()
        .map(|r| FitRecord {
            pair_rate: r.pair_rate * (1.0 + 0.05 * rng.random_range(-1.0..1.0)),
            ..*r
        })
        .collect();
    let noisy_fit = fit_d_eff(&ref_ctx, &noisy).unwrap();
    let noisy_dev = (noisy_fit.d_eff_m_per_v - 1.82e-12).abs() / 1.82e-12;

    let dt = t0.elapsed();
    report(
        9,
        "effective nonlinearity recovered from pair rates",
        exact_dev <= 1e-6 && noisy_dev <= 0.02 && dt < Duration::from_secs(1),
        &format!(
            "exact dev {exact_dev:.2e}, 5%-noise dev {:.2}% over {} records in {dt:?}",
            100.0 * noisy_dev,
            noisy.len()
        ),
    );
}

#[test]
fn a10_accidentals_scale_and_stay_small() {
    let t0 = Instant::now();
    // isolated photon-against-dark pairing: rate must be 2·R·D·Δt
    let sim = SimConfig {
        label: "darks".to_string(),
        seed: 31,
        duration_s: 60.0,
        window_s: 1e-8,
        rates_cps: EmissionRates { r_a: 1e5, r_b: 0.0, r_c: 0.0 },
        mode: SimMode::Dual {
            arm_a: arm(1.0, 1.0, 0.0),
            arm_b: arm(1.0, 1.0, 1000.0),
        },
    };
    let out = simulate_timestream(&sim).unwrap();
    let expected = 2.0 * 1e5 * 1000.0 * 1e-8 * 60.0;
    let acc = out.counts.accidentals as f64;
    let pass_rate = out.counts.true_pairs == 0 && (acc - expected).abs() <= 3.0 * expected.sqrt();

    // at operating-point rates, accidentals sit orders of magnitude below
    // the true pairs
    let (crystal, waves) = ktp();
    let ctx = Context::new(&crystal, &waves);
    let r = ctx.rates(0.0243, 0.19).unwrap();
    let sim2 = SimConfig {
        label: "op-scale".to_string(),
        seed: 33,
        duration_s: 10.0,
        window_s: 1e-9,
        rates_cps: EmissionRates { r_a: 2.0 * r.r_a, r_b: 2.0 * r.r_b, r_c: 2.0 * r.r_c },
        mode: SimMode::Dual {
            arm_a: arm(0.714, 0.679, 800.0),
            arm_b: arm(0.674, 0.371, 6000.0),
        },
    };
    let out2 = simulate_timestream(&sim2).unwrap();
    let pass_small = out2.counts.true_pairs >= 100 * out2.counts.accidentals
        && out2.counts.true_pairs > 0;

    let dt = t0.elapsed();
    report(
        10,
        "accidental coincidences: correct rate, negligible at scale",
        pass_rate && pass_small && dt < Duration::from_secs(60),
        &format!(
            "isolated run {acc} vs expected {expected:.0}; operating scale {} true vs {} accidental in {dt:?}",
            out2.counts.true_pairs, out2.counts.accidentals
        ),
    );
}
