//! Closed-form emission and fiber-coupling rates for a collinear pair
//! source pumped and collected through Gaussian modes.
//!
//! Geometry enters only through the focal parameters ξ = L/(k w²) of the
//! pump and of the two back-propagated collection modes, all waists at the
//! crystal center. Rates are counts/s per milliwatt of pump power. The B
//! coefficients carry the reciprocal focal ratio ξ_p/ξ_{a,b}: that choice
//! keeps η_c ≤ 1 in every limit and produces the measured overfocusing
//! turnover, and it is what the overlap integral actually gives.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constants::VACUUM_PERMITTIVITY;
use crate::dispersion::{phase_mismatch, CrystalSpec, WaveTriple};
use crate::error::{Error, Result};

/// Group-index separations below this make the collinear closed form
/// meaningless (it divides by the walk-off).
const MIN_GROUP_SPLIT: f64 = 1e-9;

/// ξ = L/(k w²).
pub fn focal_parameter(length_m: f64, wavenumber: f64, waist_m: f64) -> Result<f64> {
    if !(length_m > 0.0 && wavenumber > 0.0 && waist_m > 0.0) {
        return Err(Error::Domain(format!(
            "focal parameter needs positive length, wavenumber, waist; got {length_m:e}, {wavenumber:e}, {waist_m:e}"
        )));
    }
    Ok(length_m / (wavenumber * waist_m * waist_m))
}

/// Waist that realizes a focal parameter: w = sqrt(L/(k ξ)).
pub fn waist_for_focal_parameter(length_m: f64, wavenumber: f64, xi: f64) -> Result<f64> {
    if !(length_m > 0.0 && wavenumber > 0.0 && xi > 0.0) {
        return Err(Error::Domain(format!(
            "waist needs positive length, wavenumber, ξ; got {length_m:e}, {wavenumber:e}, {xi:e}"
        )));
    }
    Ok((length_m / (wavenumber * xi)).sqrt())
}

/// Focal parameters of the pump and the two collection modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusConfig {
    pub xi_p: f64,
    pub xi_a: f64,
    pub xi_b: f64,
}

impl FocusConfig {
    pub fn new(xi_p: f64, xi_a: f64, xi_b: f64) -> Result<Self> {
        for (name, xi) in [("xi_p", xi_p), ("xi_a", xi_a), ("xi_b", xi_b)] {
            if !(xi.is_finite() && xi > 0.0) {
                return Err(Error::Domain(format!(
                    "{name} must be positive and finite, got {xi:e}"
                )));
            }
        }
        Ok(FocusConfig { xi_p, xi_a, xi_b })
    }

    /// Both collection modes share one lens and therefore one physical
    /// waist, which ties ξ_b = ξ_a · k_a/k_b.
    pub fn tied(xi_p: f64, xi_a: f64, waves: &WaveTriple) -> Result<Self> {
        Self::new(xi_p, xi_a, xi_a * waves.k_a / waves.k_b)
    }

    pub fn from_waists(
        crystal: &CrystalSpec,
        waves: &WaveTriple,
        waist_p_m: f64,
        waist_a_m: f64,
        waist_b_m: f64,
    ) -> Result<Self> {
        Self::new(
            focal_parameter(crystal.length_m, waves.k_p, waist_p_m)?,
            focal_parameter(crystal.length_m, waves.k_a, waist_a_m)?,
            focal_parameter(crystal.length_m, waves.k_b, waist_b_m)?,
        )
    }
}

/// Dimensionless aperture coefficients of the closed-form rates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AbCoefficients {
    pub a_a: f64,
    pub a_b: f64,
    pub a_plus: f64,
    pub b_a: f64,
    pub b_b: f64,
    pub b_plus: f64,
}

pub fn ab_coefficients(
    waves: &WaveTriple,
    delta_k: f64,
    focus: &FocusConfig,
) -> Result<AbCoefficients> {
    let (kp, ka, kb) = (waves.k_p, waves.k_a, waves.k_b);
    if !delta_k.is_finite() {
        return Err(Error::Domain("phase mismatch must be finite".to_string()));
    }
    if delta_k >= kp {
        return Err(Error::Domain(format!(
            "phase mismatch {delta_k:.4e} must stay below the pump wavenumber {kp:.4e}"
        )));
    }
    if ka + delta_k <= 0.0 || kb + delta_k <= 0.0 {
        return Err(Error::Domain(format!(
            "phase mismatch {delta_k:.4e} drives an effective wavenumber nonpositive"
        )));
    }
    let (xp, xa, xb) = (focus.xi_p, focus.xi_a, focus.xi_b);
    let a_a = 2.0 * ((1.0 + (ka / kp) * (xa / xp)) * (kb / kp)).sqrt();
    let a_b = 2.0 * ((1.0 + (kb / kp) * (xb / xp)) * (ka / kp)).sqrt();
    let a_plus = 1.0 + (ka / kp) * (xa / xp) + (kb / kp) * (xb / xp);
    let scale = 1.0 - delta_k / kp;
    let ra = (ka + delta_k) / (kp - delta_k);
    let rb = (kb + delta_k) / (kp - delta_k);
    let b_a = 2.0 * scale * ((1.0 + ra * (xp / xa)) * rb).sqrt();
    let b_b = 2.0 * scale * ((1.0 + rb * (xp / xb)) * ra).sqrt();
    let b_plus = scale * (1.0 + ra * (xp / xa) + rb * (xp / xb));
    Ok(AbCoefficients {
        a_a,
        a_b,
        a_plus,
        b_a,
        b_b,
        b_plus,
    })
}

/// Emission rates in cps per mW of pump: singles into each collection mode
/// and the pair rate into both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionRates {
    pub r_a: f64,
    pub r_b: f64,
    pub r_c: f64,
}

impl EmissionRates {
    /// Total singles rate through a common collection path.
    pub fn r_t(&self) -> f64 {
        self.r_a + self.r_b
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("r_a", self.r_a), ("r_b", self.r_b), ("r_c", self.r_c)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::Domain(format!("{name} must be ≥ 0, got {r:e}")));
            }
        }
        if self.r_c > self.r_a.min(self.r_b) * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "pair rate {:.4e} exceeds a singles rate ({:.4e}, {:.4e})",
                self.r_c, self.r_a, self.r_b
            )));
        }
        Ok(())
    }
}

/// Scale factor of every emission rate, in cps/mW; everything that does not
/// depend on focusing: pump wavelength, nonlinearity, indices, and the
/// group-velocity walk-off that sets the collected bandwidth.
pub fn pair_prefactor(crystal: &CrystalSpec, waves: &WaveTriple) -> Result<f64> {
    crystal.validate()?;
    let split = (waves.group_a - waves.group_b).abs();
    if split < MIN_GROUP_SPLIT {
        return Err(Error::DegenerateGroupIndex(split));
    }
    let d_ratio = crystal.d_eff_m_per_v / (waves.lambda_a_m * waves.lambda_b_m);
    Ok(128.0 * PI * PI * waves.lambda_p_m * d_ratio * d_ratio
        / (1e3 * VACUUM_PERMITTIVITY * waves.n_p * waves.n_p * split))
}

/// Rates with the phase mismatch taken from the crystal's own grating
/// deficit k_a + k_b − k_p.
pub fn emission_rates(
    crystal: &CrystalSpec,
    waves: &WaveTriple,
    focus: &FocusConfig,
) -> Result<EmissionRates> {
    let pm = phase_mismatch(crystal, waves);
    emission_rates_with(crystal, waves, pm.bare, focus)
}

/// Rates with an explicit phase mismatch (rad/m) fed to the aperture
/// coefficients, e.g. the post-grating residual or an ideal zero.
pub fn emission_rates_with(
    crystal: &CrystalSpec,
    waves: &WaveTriple,
    delta_k: f64,
    focus: &FocusConfig,
) -> Result<EmissionRates> {
    let pf = pair_prefactor(crystal, waves)?;
    let c = ab_coefficients(waves, delta_k, focus)?;
    let r_a = pf * ((c.b_a / c.a_a) * focus.xi_a).atan() / (c.a_a * c.b_a);
    let r_b = pf * ((c.b_b / c.a_b) * focus.xi_b).atan() / (c.a_b * c.b_b);
    let arg_c = (c.b_plus / c.a_plus) * focus.xi_a * focus.xi_b / focus.xi_p;
    let r_c = pf * arg_c.atan() / (c.a_plus * c.b_plus);
    Ok(EmissionRates { r_a, r_b, r_c })
}

/// Mode-coupling efficiency R_c/√(R_a R_b) straight from the aperture
/// coefficients; the rate prefactor cancels, so this is independent of
/// pump power and nonlinearity.
pub fn eta_c_closed_form(waves: &WaveTriple, delta_k: f64, focus: &FocusConfig) -> Result<f64> {
    let c = ab_coefficients(waves, delta_k, focus)?;
    let t_a = ((c.b_a / c.a_a) * focus.xi_a).atan() / (c.a_a * c.b_a);
    let t_b = ((c.b_b / c.a_b) * focus.xi_b).atan() / (c.a_b * c.b_b);
    let arg_c = (c.b_plus / c.a_plus) * focus.xi_a * focus.xi_b / focus.xi_p;
    let t_c = arg_c.atan() / (c.a_plus * c.b_plus);
    Ok(t_c / (t_a * t_b).sqrt())
}

/// R_c/√(R_a R_b) from already-computed rates; 0 if either singles rate is 0.
pub fn eta_c_from_rates(rates: &EmissionRates) -> f64 {
    let denom = rates.r_a * rates.r_b;
    if denom <= 0.0 {
        0.0
    } else {
        rates.r_c / denom.sqrt()
    }
}

/// Soft limits of the closed form; outside them results are extrapolations,
/// not errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidityWarning {
    ShortCrystal { length_m: f64 },
    LargeMismatch { ratio: f64 },
    TightFocus { beam: char, xi: f64 },
}

impl fmt::Display for ValidityWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidityWarning::ShortCrystal { length_m } => write!(
                f,
                "crystal length {:.2} mm is below the 1 mm floor of the paraxial treatment",
                length_m * 1e3
            ),
            ValidityWarning::LargeMismatch { ratio } => write!(
                f,
                "|Δk|/k_min = {ratio:.3} exceeds 0.05; the narrowband expansion is strained"
            ),
            ValidityWarning::TightFocus { beam, xi } => write!(
                f,
                "ξ_{beam} = {xi:.3} exceeds 10, outside the range the closed form was checked in"
            ),
        }
    }
}

pub fn validity_warnings(
    crystal: &CrystalSpec,
    waves: &WaveTriple,
    delta_k: f64,
    focus: &FocusConfig,
) -> Vec<ValidityWarning> {
    let mut out = Vec::new();
    if crystal.length_m < 1e-3 {
        out.push(ValidityWarning::ShortCrystal {
            length_m: crystal.length_m,
        });
    }
    let k_min = waves.k_p.min(waves.k_a).min(waves.k_b);
    let ratio = (delta_k / k_min).abs();
    if ratio > 0.05 {
        out.push(ValidityWarning::LargeMismatch { ratio });
    }
    for (beam, xi) in [('p', focus.xi_p), ('a', focus.xi_a), ('b', focus.xi_b)] {
        if xi > 10.0 {
            out.push(ValidityWarning::TightFocus { beam, xi });
        }
    }
    out
}

/// Per-pair mode-coupling probabilities, stored as exclusive outcomes:
/// both photons in their fibers, only a, only b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoupling {
    pub pair: f64,
    pub only_a: f64,
    pub only_b: f64,
}

/// η_c with an explicit marker for the no-collection corner instead of NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaC {
    pub value: f64,
    pub no_collection: bool,
}

impl ModeCoupling {
    pub fn from_exclusive(pair: f64, only_a: f64, only_b: f64) -> Result<Self> {
        for (name, p) in [("pair", pair), ("only_a", only_a), ("only_b", only_b)] {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::Domain(format!(
                    "probability {name} must lie in [0, 1], got {p:e}"
                )));
            }
        }
        let tol = 1e-12;
        if pair + only_a > 1.0 + tol || pair + only_b > 1.0 + tol {
            return Err(Error::Domain(
                "per-arm totals pair+only exceed 1".to_string(),
            ));
        }
        Ok(ModeCoupling {
            pair,
            only_a,
            only_b,
        })
    }

    /// From pair and per-arm total probabilities (pair ≤ each total).
    pub fn from_totals(pair: f64, total_a: f64, total_b: f64) -> Result<Self> {
        if pair > total_a.min(total_b) + 1e-12 {
            return Err(Error::Domain(format!(
                "pair probability {pair:e} exceeds an arm total ({total_a:e}, {total_b:e})"
            )));
        }
        Self::from_exclusive(pair, total_a - pair, total_b - pair)
    }

    /// From emission rates and the pair generation rate (all same units):
    /// P_pair = R_c/R_gen, totals R_a/R_gen, R_b/R_gen.
    pub fn from_rates(rates: &EmissionRates, generation_rate: f64) -> Result<Self> {
        if !(generation_rate.is_finite() && generation_rate > 0.0) {
            return Err(Error::Domain(format!(
                "generation rate must be positive, got {generation_rate:e}"
            )));
        }
        rates.validate()?;
        Self::from_totals(
            rates.r_c / generation_rate,
            rates.r_a / generation_rate,
            rates.r_b / generation_rate,
        )
    }

    pub fn total_a(&self) -> f64 {
        self.pair + self.only_a
    }

    pub fn total_b(&self) -> f64 {
        self.pair + self.only_b
    }

    pub fn eta_c(&self) -> EtaC {
        let denom = self.total_a() * self.total_b();
        if denom <= 0.0 {
            EtaC {
                value: 0.0,
                no_collection: true,
            }
        } else {
            EtaC {
                value: self.pair / denom.sqrt(),
                no_collection: false,
            }
        }
    }
}

/// Heralding figures: conditional coupling (partner in fiber given a
/// collected herald) and delivered probability after the arm's path loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Heralding {
    /// P(a in fiber | b in fiber).
    pub conditional_a: f64,
    /// P(b in fiber | a in fiber).
    pub conditional_b: f64,
    /// √(conditional_a · conditional_b) = η_c.
    pub symmetric: f64,
    /// conditional_a attenuated by arm a's path efficiency.
    pub delivered_a: f64,
    pub delivered_b: f64,
}

pub fn heralding(coupling: &ModeCoupling, eta_s_a: f64, eta_s_b: f64) -> Result<Heralding> {
    for (name, eta) in [("eta_s_a", eta_s_a), ("eta_s_b", eta_s_b)] {
        if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
            return Err(Error::Domain(format!(
                "{name} must lie in [0, 1], got {eta:e}"
            )));
        }
    }
    let cond = |total: f64| if total <= 0.0 { 0.0 } else { coupling.pair / total };
    let conditional_a = cond(coupling.total_b());
    let conditional_b = cond(coupling.total_a());
    Ok(Heralding {
        conditional_a,
        conditional_b,
        symmetric: (conditional_a * conditional_b).sqrt(),
        delivered_a: conditional_a * eta_s_a,
        delivered_b: conditional_b * eta_s_b,
    })
}
