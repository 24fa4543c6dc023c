//! Focusing sweeps, peak search, rate/efficiency trade-offs, and a
//! one-parameter nonlinearity fit on top of the closed-form model.
//!
//! Collection is swept under the shared-lens tie ξ_b = ξ_a·k_a/k_b. Pair
//! rates are normalized to the best achievable rate at the reference pump
//! focus [`BASELINE_XI_P`], which makes normalized curves independent of
//! the nonlinear coefficient.

use serde::{Deserialize, Serialize};

use crate::coupling::{
    emission_rates_with, eta_c_from_rates, validity_warnings, EmissionRates, FocusConfig,
};
use crate::dispersion::{phase_mismatch, CrystalSpec, WaveTriple};
use crate::error::{Error, Result};

/// Pump focal parameter whose best pair rate defines `norm_pair_rate` = 1.
pub const BASELINE_XI_P: f64 = 2.84;

/// Search bracket for collection-focus optimization, in ξ.
pub const XI_SEARCH: (f64, f64) = (0.01, 10.0);

/// Relative convergence tolerance of the golden-section search on ξ.
pub const PEAK_REL_TOL: f64 = 1e-6;

/// Restart positions closer than this (relatively) count as the same peak.
const PEAK_DISTINCT: f64 = 1e-3;

/// A crystal/wavelength operating point with a pinned phase mismatch,
/// ready to be swept over focusing.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub crystal: &'a CrystalSpec,
    pub waves: &'a WaveTriple,
    pub delta_k: f64,
}

impl<'a> Context<'a> {
    /// Uses the crystal's own grating deficit k_a + k_b − k_p.
    pub fn new(crystal: &'a CrystalSpec, waves: &'a WaveTriple) -> Self {
        let pm = phase_mismatch(crystal, waves);
        Context {
            crystal,
            waves,
            delta_k: pm.bare,
        }
    }

    pub fn with_delta_k(crystal: &'a CrystalSpec, waves: &'a WaveTriple, delta_k: f64) -> Self {
        Context {
            crystal,
            waves,
            delta_k,
        }
    }

    pub fn focus(&self, xi_p: f64, xi_a: f64) -> Result<FocusConfig> {
        FocusConfig::tied(xi_p, xi_a, self.waves)
    }

    pub fn rates(&self, xi_p: f64, xi_a: f64) -> Result<EmissionRates> {
        emission_rates_with(self.crystal, self.waves, self.delta_k, &self.focus(xi_p, xi_a)?)
    }

    pub fn eta_c(&self, xi_p: f64, xi_a: f64) -> Result<f64> {
        Ok(eta_c_from_rates(&self.rates(xi_p, xi_a)?))
    }

    /// Best pair rate over collection focus at the reference pump focus.
    pub fn baseline_pair_rate(&self) -> Result<f64> {
        let peak = find_peak_xi_a(self, BASELINE_XI_P, Objective::PairRate)?;
        Ok(peak.value)
    }
}

/// Logarithmically spaced grid, endpoints included.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && min > 0.0 && max >= min) {
        return Err(Error::Domain(format!(
            "grid needs 0 < min ≤ max, got [{min:e}, {max:e}]"
        )));
    }
    if points == 0 {
        return Err(Error::Domain("grid needs at least 1 point".to_string()));
    }
    // Degenerate single-point grid: the point itself.
    if points == 1 || max == min {
        if points > 1 {
            return Err(Error::Domain(
                "grid with min = max can only have 1 point".to_string(),
            ));
        }
        return Ok(vec![min]);
    }
    let (l0, l1) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// One sweep sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub xi_p: f64,
    pub xi_a: f64,
    pub xi_b: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub r_t: f64,
    pub eta_c: f64,
    pub norm_pair_rate: f64,
    pub warnings: Vec<String>,
}

/// Samples the tied-collection model over `xi_a_grid` for every pump focus
/// in `xi_p_values`.
pub fn sweep(ctx: &Context, xi_p_values: &[f64], xi_a_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if xi_p_values.is_empty() || xi_a_grid.is_empty() {
        return Err(Error::Domain("sweep needs at least one grid point".to_string()));
    }
    let baseline = ctx.baseline_pair_rate()?;
    let mut rows = Vec::with_capacity(xi_p_values.len() * xi_a_grid.len());
    for &xi_p in xi_p_values {
        for &xi_a in xi_a_grid {
            let focus = ctx.focus(xi_p, xi_a)?;
            let rates = emission_rates_with(ctx.crystal, ctx.waves, ctx.delta_k, &focus)?;
            let warnings = validity_warnings(ctx.crystal, ctx.waves, ctx.delta_k, &focus)
                .iter()
                .map(|w| w.to_string())
                .collect();
            rows.push(SweepRow {
                xi_p,
                xi_a,
                xi_b: focus.xi_b,
                r_a: rates.r_a,
                r_b: rates.r_b,
                r_c: rates.r_c,
                r_t: rates.r_t(),
                eta_c: eta_c_from_rates(&rates),
                norm_pair_rate: rates.r_c / baseline,
                warnings,
            });
        }
    }
    Ok(rows)
}

/// What to maximize over collection focus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    EtaC,
    PairRate,
}

/// Result of a peak search, with the positions every restart settled on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub xi_a: f64,
    pub xi_b: f64,
    pub value: f64,
    /// (ξ_a, value) per restart bracket.
    pub candidates: Vec<(f64, f64)>,
    /// Restarts found near-equal maxima at distinct positions.
    pub multimodal: bool,
}

fn golden_max(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iterations = 0;
    while (b - a) > rel_tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
        if iterations > 500 {
            return Err(Error::Numerical(
                "golden-section search failed to converge".to_string(),
            ));
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Maximizes the objective over ξ_a ∈ [0.01, 10] (log scale) at fixed pump
/// focus. Three staggered restart brackets guard against multimodality:
/// restarts that reach the best value (within the convergence tolerance)
/// at positions more than 0.1% apart raise the `multimodal` flag.
pub fn find_peak_xi_a(ctx: &Context, xi_p: f64, objective: Objective) -> Result<Peak> {
    let (lo, hi) = (XI_SEARCH.0.ln(), XI_SEARCH.1.ln());
    let width = hi - lo;
    let brackets = [
        (lo, hi),
        (lo, lo + 0.62 * width),
        (lo + 0.38 * width, hi),
    ];
    let mut eval = |lx: f64| -> Result<f64> {
        let xi_a = lx.exp();
        match objective {
            Objective::EtaC => ctx.eta_c(xi_p, xi_a),
            Objective::PairRate => Ok(ctx.rates(xi_p, xi_a)?.r_c),
        }
    };
    let mut candidates = Vec::with_capacity(brackets.len());
    for (a, b) in brackets {
        let (lx, v) = golden_max(&mut eval, a, b, PEAK_REL_TOL)?;
        candidates.push((lx.exp(), v));
    }
    let &(best_x, best_v) = candidates
        .iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("three candidates");
    // Edge-stuck restarts from brackets that exclude the peak score
    // strictly lower and do not signal a second mode.
    let multimodal = candidates.iter().any(|&(x, v)| {
        v >= best_v * (1.0 - 10.0 * PEAK_REL_TOL) && ((x - best_x) / best_x).abs() > PEAK_DISTINCT
    });
    let focus = ctx.focus(xi_p, best_x)?;
    Ok(Peak {
        xi_a: best_x,
        xi_b: focus.xi_b,
        value: best_v,
        candidates,
        multimodal,
    })
}

/// One target on the rate/efficiency trade-off curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub target_eta_c: f64,
    pub feasible: bool,
    /// Fields below are None when no pump focus reaches the target.
    pub xi_p: Option<f64>,
    pub xi_a: Option<f64>,
    pub eta_c: Option<f64>,
    pub pair_rate: Option<f64>,
    pub norm_pair_rate: Option<f64>,
}

/// For each target η_c, finds the pump focus whose η_c-optimal collection
/// still meets the target while giving the highest pair rate. Searches a
/// log grid over ξ_p with one local refinement pass.
pub fn tradeoff_curve(ctx: &Context, targets: &[f64]) -> Result<Vec<TradeoffRow>> {
    for &t in targets {
        if !(t.is_finite() && t > 0.0 && t < 1.0) {
            return Err(Error::Domain(format!(
                "target η_c must lie in (0, 1), got {t}"
            )));
        }
    }
    let baseline = ctx.baseline_pair_rate()?;
    let coarse = log_grid(XI_SEARCH.0, XI_SEARCH.1, 48)?;
    // peak η_c falls and pair rate rises with ξ_p, so evaluate once
    let mut table: Vec<(f64, Peak)> = Vec::with_capacity(coarse.len());
    for &xi_p in &coarse {
        table.push((xi_p, find_peak_xi_a(ctx, xi_p, Objective::EtaC)?));
    }
    fn consider(
        ctx: &Context,
        target: f64,
        xi_p: f64,
        peak: &Peak,
        best: &mut Option<(f64, f64, f64, f64)>, // xi_p, xi_a, eta, rate
    ) -> Result<()> {
        if peak.value >= target {
            let rate = ctx.rates(xi_p, peak.xi_a)?.r_c;
            if best.is_none_or(|b| rate > b.3) {
                *best = Some((xi_p, peak.xi_a, peak.value, rate));
            }
        }
        Ok(())
    }
    let mut rows = Vec::with_capacity(targets.len());
    for &target in targets {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for (xi_p, peak) in &table {
            consider(ctx, target, *xi_p, peak, &mut best)?;
        }
        // refine around the winning cell
        if let Some((xi_p_best, ..)) = best {
            let idx = coarse
                .iter()
                .position(|&x| x == xi_p_best)
                .unwrap_or(coarse.len() - 1);
            let lo = if idx == 0 { coarse[0] } else { coarse[idx - 1] };
            let hi = if idx + 1 == coarse.len() {
                coarse[idx]
            } else {
                coarse[idx + 1]
            };
            for xi_p in log_grid(lo, hi, 17)? {
                let peak = find_peak_xi_a(ctx, xi_p, Objective::EtaC)?;
                consider(ctx, target, xi_p, &peak, &mut best)?;
            }
        }
        rows.push(match best {
            Some((xi_p, xi_a, eta, rate)) => TradeoffRow {
                target_eta_c: target,
                feasible: true,
                xi_p: Some(xi_p),
                xi_a: Some(xi_a),
                eta_c: Some(eta),
                pair_rate: Some(rate),
                norm_pair_rate: Some(rate / baseline),
            },
            None => TradeoffRow {
                target_eta_c: target,
                feasible: false,
                xi_p: None,
                xi_a: None,
                eta_c: None,
                pair_rate: None,
                norm_pair_rate: None,
            },
        });
    }
    Ok(rows)
}

/// A measured pair rate at a known focusing configuration. Rates must be
/// in the model's units (cps per mW of pump).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub xi_p: f64,
    pub xi_a: f64,
    pub pair_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeffFit {
    pub d_eff_m_per_v: f64,
    /// Least-squares rate scale against the reference-d_eff predictions.
    pub scale: f64,
    /// √(Σ(m − s·p)² / Σm²) over the records.
    pub relative_residual: f64,
}

/// Fits the single multiplicative degree of freedom d_eff² by least
/// squares of measured against predicted pair rates: with p_i predicted at
/// the context's reference d_eff, the optimal scale is Σm·p/Σp², and
/// d̂ = d_ref·√scale.
pub fn fit_d_eff(ctx: &Context, records: &[FitRecord]) -> Result<DeffFit> {
    if records.is_empty() {
        return Err(Error::Domain("d_eff fit needs at least one record".to_string()));
    }
    let mut mp = 0.0;
    let mut pp = 0.0;
    let mut mm = 0.0;
    let mut predictions = Vec::with_capacity(records.len());
    for r in records {
        if !(r.pair_rate.is_finite() && r.pair_rate >= 0.0) {
            return Err(Error::DataQuality(format!(
                "measured pair rate must be ≥ 0, got {:e}",
                r.pair_rate
            )));
        }
        let p = ctx.rates(r.xi_p, r.xi_a)?.r_c;
        predictions.push(p);
        mp += r.pair_rate * p;
        pp += p * p;
        mm += r.pair_rate * r.pair_rate;
    }
    if pp <= 0.0 {
        return Err(Error::Numerical(
            "degenerate design: predicted rates are all zero".to_string(),
        ));
    }
    let scale = mp / pp;
    if scale <= 0.0 {
        return Err(Error::Numerical(format!(
            "non-positive rate scale {scale:e}; measurements do not resemble the model"
        )));
    }
    let mut ss = 0.0;
    for (r, p) in records.iter().zip(&predictions) {
        let resid = r.pair_rate - scale * p;
        ss += resid * resid;
    }
    let relative_residual = if mm > 0.0 { (ss / mm).sqrt() } else { 0.0 };
    Ok(DeffFit {
        d_eff_m_per_v: ctx.crystal.d_eff_m_per_v * scale.sqrt(),
        scale,
        relative_residual,
    })
}
