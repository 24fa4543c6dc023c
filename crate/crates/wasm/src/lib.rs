//! Browser bindings for the coupling model on the built-in KTP design.
//! Everything crosses the boundary as JSON strings so the demo page stays
//! plain JavaScript; failures come back as `{"error": "..."}` instead of
//! thrown exceptions.

use biphoton::detection::{invert_dual, ArmSpec, MeasuredDual};
use biphoton::dispersion::{phase_mismatch, CrystalSpec, ModelSet, WaveTriple};
use biphoton::sweep::{find_peak_xi_a, log_grid, sweep, Context, Objective, XI_SEARCH};
use biphoton::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn fail(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

fn emit(value: impl Serialize) -> String {
    serde_json::to_string(&value).unwrap_or_else(fail)
}

fn ktp(d_eff_pm_per_v: f64) -> Result<(CrystalSpec, WaveTriple)> {
    let crystal = CrystalSpec {
        d_eff_m_per_v: d_eff_pm_per_v * 1e-12,
        ..CrystalSpec::ktp_780_1560()
    };
    crystal.validate()?;
    let waves = WaveTriple::degenerate(&crystal, &ModelSet::ktp(), 780e-9)?;
    Ok((crystal, waves))
}

/// η_c and pair-rate curves over collection focus at a fixed pump focus.
#[wasm_bindgen]
pub fn sweep_curves(xi_p: f64, points: u32) -> String {
    let run = || -> Result<String> {
        let crystal = CrystalSpec::ktp_780_1560();
        let waves = WaveTriple::degenerate(&crystal, &ModelSet::ktp(), 780e-9)?;
        let ctx = Context::new(&crystal, &waves);
        let grid = log_grid(XI_SEARCH.0, XI_SEARCH.1, points.clamp(2, 600) as usize)?;
        let rows = sweep(&ctx, &[xi_p], &grid)?;
        let peak = find_peak_xi_a(&ctx, xi_p, Objective::EtaC)?;
        Ok(emit(json!({
            "xi_p": xi_p,
            "rows": rows,
            "peak": { "xi_a": peak.xi_a, "eta_c": peak.value },
        })))
    };
    run().unwrap_or_else(fail)
}

#[derive(Serialize)]
struct PointReport {
    xi_p: f64,
    xi_a: f64,
    xi_b: f64,
    waist_p_um: f64,
    waist_a_um: f64,
    waist_b_um: f64,
    r_a_cps: f64,
    r_b_cps: f64,
    r_c_cps: f64,
    eta_c: f64,
    norm_pair_rate: f64,
    delta_k_bare: f64,
    grating_wavenumber: f64,
}

/// Model output at one operating point; rates scale with d_eff² and pump
/// power, the efficiency with neither.
#[wasm_bindgen]
pub fn point_rates(xi_p: f64, xi_a: f64, d_eff_pm_per_v: f64, pump_mw: f64) -> String {
    let run = || -> Result<String> {
        if !(pump_mw.is_finite() && pump_mw > 0.0) {
            return Err(Error::Domain(format!(
                "pump power must be positive, got {pump_mw:e}"
            )));
        }
        let (crystal, waves) = ktp(d_eff_pm_per_v)?;
        let ctx = Context::new(&crystal, &waves);
        let focus = ctx.focus(xi_p, xi_a)?;
        let rates = ctx.rates(xi_p, xi_a)?;
        let baseline = ctx.baseline_pair_rate()?;
        let pm = phase_mismatch(&crystal, &waves);
        // ξ = L/(k w²) inverted back to bench units
        let waist = |k: f64, xi: f64| (crystal.length_m / (k * xi)).sqrt() * 1e6;
        Ok(emit(PointReport {
            xi_p,
            xi_a,
            xi_b: focus.xi_b,
            waist_p_um: waist(waves.k_p, xi_p),
            waist_a_um: waist(waves.k_a, xi_a),
            waist_b_um: waist(waves.k_b, focus.xi_b),
            r_a_cps: rates.r_a * pump_mw,
            r_b_cps: rates.r_b * pump_mw,
            r_c_cps: rates.r_c * pump_mw,
            eta_c: biphoton::coupling::eta_c_from_rates(&rates),
            norm_pair_rate: if baseline > 0.0 { rates.r_c / baseline } else { 0.0 },
            delta_k_bare: pm.bare,
            grating_wavenumber: pm.grating,
        }))
    };
    run().unwrap_or_else(fail)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvertRequest {
    measurement: MeasuredDual,
    arm_a: ArmSpec,
    arm_b: ArmSpec,
    #[serde(default)]
    correct_accidentals: bool,
}

/// Reduces one raw two-detector measurement to emission rates and η_c.
#[wasm_bindgen]
pub fn invert_dual_measurement(request_json: &str) -> String {
    let run = || -> Result<String> {
        let req: InvertRequest = serde_json::from_str(request_json)
            .map_err(|e| Error::Domain(format!("request: {e}")))?;
        let inv = invert_dual(&req.measurement, &req.arm_a, &req.arm_b, req.correct_accidentals)?;
        Ok(emit(json!({
            "label": inv.label,
            "r_a_cps": inv.r_a,
            "r_b_cps": inv.r_b,
            "r_c_cps": inv.r_c,
            "eta_c": inv.eta_c,
            "warnings": inv.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        })))
    };
    run().unwrap_or_else(fail)
}
