//! Refractive-index models and collinear quasi-phase-matching geometry.
//!
//! Wavelengths are vacuum values in meters at every API boundary; Sellmeier
//! coefficients follow the optics-literature convention of microns, so the
//! conversion happens exactly once, inside the evaluator.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative step of the central difference in [`SellmeierModel::group_index`].
const GROUP_INDEX_STEP: f64 = 1e-5;

/// Principal dielectric axis of a (bi)axial crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpticAxis {
    X,
    Y,
    Z,
}

impl OpticAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "X" | "x" => Ok(OpticAxis::X),
            "Y" | "y" => Ok(OpticAxis::Y),
            "Z" | "z" => Ok(OpticAxis::Z),
            other => Err(Error::InvalidModel(format!("unknown optic axis {other:?}"))),
        }
    }
}

impl fmt::Display for OpticAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpticAxis::X => "X",
            OpticAxis::Y => "Y",
            OpticAxis::Z => "Z",
        })
    }
}

/// Functional form of an index model. The coefficient layout depends on the
/// form; wavelengths below are in microns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionForm {
    /// `[n]` — fixed index, no dispersion.
    Constant,
    /// `[a, b]` — n = a + b λ².
    Quadratic,
    /// `[A, B1, C1, B2, C2, ...]` — n² = A + Σ Bi / (λ² − Ci).
    SellmeierPoles,
    /// `[A, B, C, D]` — n² = A + B λ² / (λ² − C) + D λ².
    FractionQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierModel {
    pub form: DispersionForm,
    pub axis: OpticAxis,
    pub coefficients: Vec<f64>,
    /// Validity range `[min, max]` in meters; evaluation outside errors.
    pub range_m: [f64; 2],
}

impl SellmeierModel {
    pub fn new(
        form: DispersionForm,
        axis: OpticAxis,
        coefficients: Vec<f64>,
        range_m: [f64; 2],
    ) -> Result<Self> {
        let model = SellmeierModel {
            form,
            axis,
            coefficients,
            range_m,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range_m;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(Error::InvalidModel(format!(
                "range_m must satisfy 0 < min < max, got [{lo:e}, {hi:e}]"
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(
                "coefficients must be finite".to_string(),
            ));
        }
        let n = self.coefficients.len();
        let arity_ok = match self.form {
            DispersionForm::Constant => n == 1,
            DispersionForm::Quadratic => n == 2,
            DispersionForm::SellmeierPoles => n >= 3 && n % 2 == 1,
            DispersionForm::FractionQuadratic => n == 4,
        };
        if !arity_ok {
            return Err(Error::InvalidModel(format!(
                "form {:?} does not take {n} coefficients",
                self.form
            )));
        }
        // Resonance poles must lie outside the declared validity range,
        // otherwise n² has a singularity inside it.
        let lo2 = (lo * 1e6).powi(2);
        let hi2 = (hi * 1e6).powi(2);
        let poles: &[f64] = match self.form {
            DispersionForm::SellmeierPoles => &self.coefficients[1..],
            DispersionForm::FractionQuadratic => &self.coefficients[2..3],
            _ => &[],
        };
        let pole_values = poles.iter().copied().enumerate().filter_map(|(i, c)| {
            // in the poles layout only every second entry is a pole position
            if self.form == DispersionForm::SellmeierPoles && i % 2 == 0 {
                None
            } else {
                Some(c)
            }
        });
        for c in pole_values {
            if c >= lo2 && c <= hi2 {
                return Err(Error::InvalidModel(format!(
                    "pole at λ² = {c} µm² lies inside the validity range"
                )));
            }
        }
        if self.form == DispersionForm::Constant && self.coefficients[0] <= 0.0 {
            return Err(Error::InvalidModel(
                "constant index must be positive".to_string(),
            ));
        }
        Ok(())
    }

    fn check_range(&self, wavelength_m: f64) -> Result<()> {
        let [lo, hi] = self.range_m;
        if !wavelength_m.is_finite() || wavelength_m < lo || wavelength_m > hi {
            return Err(Error::WavelengthOutOfRange {
                wavelength_m,
                min_m: lo,
                max_m: hi,
            });
        }
        Ok(())
    }

    /// Phase refractive index at a vacuum wavelength.
    pub fn refractive_index(&self, wavelength_m: f64) -> Result<f64> {
        self.check_range(wavelength_m)?;
        let l = wavelength_m * 1e6;
        let l2 = l * l;
        let c = &self.coefficients;
        let n_sq = match self.form {
            DispersionForm::Constant => return Ok(c[0]),
            DispersionForm::Quadratic => return Ok(c[0] + c[1] * l2),
            DispersionForm::SellmeierPoles => {
                let mut acc = c[0];
                for pair in c[1..].chunks_exact(2) {
                    acc += pair[0] / (l2 - pair[1]);
                }
                acc
            }
            DispersionForm::FractionQuadratic => c[0] + c[1] * l2 / (l2 - c[2]) + c[3] * l2,
        };
        if n_sq <= 0.0 {
            return Err(Error::Numerical(format!(
                "index model gives n² = {n_sq:.4e} ≤ 0 at λ = {wavelength_m:.4e} m"
            )));
        }
        Ok(n_sq.sqrt())
    }

    /// Group index n' = n − λ·dn/dλ, by a symmetric difference with relative
    /// step 1e-5 (exact on the polynomial forms, ~1e-10 elsewhere). Needs a
    /// one-step margin to the range edges.
    pub fn group_index(&self, wavelength_m: f64) -> Result<f64> {
        let n = self.refractive_index(wavelength_m)?;
        let h = wavelength_m * GROUP_INDEX_STEP;
        let n_hi = self.refractive_index(wavelength_m + h)?;
        let n_lo = self.refractive_index(wavelength_m - h)?;
        let dn_dl = (n_hi - n_lo) / (2.0 * h);
        Ok(n - wavelength_m * dn_dl)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let model: SellmeierModel =
            serde_json::from_str(json).map_err(|e| Error::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// KTP, polarization along the crystal y axis.
    /// Coefficients from König & Wong, Appl. Phys. Lett. 84, 1644 (2004).
    pub fn ktp_y() -> Self {
        SellmeierModel {
            form: DispersionForm::FractionQuadratic,
            axis: OpticAxis::Y,
            coefficients: vec![2.09930, 0.922683, 0.0467695, -0.0138408],
            range_m: [0.40e-6, 3.40e-6],
        }
    }

    /// KTP, polarization along the crystal z axis.
    /// Coefficients from Fradkin et al., Appl. Phys. Lett. 74, 914 (1999).
    pub fn ktp_z() -> Self {
        SellmeierModel {
            form: DispersionForm::SellmeierPoles,
            axis: OpticAxis::Z,
            coefficients: vec![4.59423, 0.06206, 0.04763, 110.80672, 86.12171],
            range_m: [0.43e-6, 3.54e-6],
        }
    }
}

/// Index models for the axes in play, addressed by axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSet {
    pub models: Vec<SellmeierModel>,
}

impl ModelSet {
    pub fn new(models: Vec<SellmeierModel>) -> Result<Self> {
        for m in &models {
            m.validate()?;
        }
        Ok(ModelSet { models })
    }

    /// The two KTP axes used by a type-II y→yz source.
    pub fn ktp() -> Self {
        ModelSet {
            models: vec![SellmeierModel::ktp_y(), SellmeierModel::ktp_z()],
        }
    }

    pub fn for_axis(&self, axis: OpticAxis) -> Result<&SellmeierModel> {
        self.models
            .iter()
            .find(|m| m.axis == axis)
            .ok_or_else(|| Error::InvalidModel(format!("no dispersion model for axis {axis}")))
    }

    /// Adds a model, replacing any existing one on the same axis.
    pub fn insert(&mut self, model: SellmeierModel) {
        if let Some(slot) = self.models.iter_mut().find(|m| m.axis == model.axis) {
            *slot = model;
        } else {
            self.models.push(model);
        }
    }
}

/// Periodically poled crystal and the polarization layout of the three waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSpec {
    pub length_m: f64,
    pub poling_period_m: f64,
    /// Effective nonlinear coefficient, m/V (QPM reduction already included).
    pub d_eff_m_per_v: f64,
    pub pump_axis: OpticAxis,
    pub a_axis: OpticAxis,
    pub b_axis: OpticAxis,
}

impl CrystalSpec {
    /// 1 cm flux-grown PPKTP poled at 46.1 µm for 780 nm → 2×1560 nm
    /// type-II conversion (y-polarized pump, z/y-polarized pair).
    pub fn ktp_780_1560() -> Self {
        CrystalSpec {
            length_m: 0.010,
            poling_period_m: 46.1e-6,
            d_eff_m_per_v: 1.82e-12,
            pump_axis: OpticAxis::Y,
            a_axis: OpticAxis::Z,
            b_axis: OpticAxis::Y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_m", self.length_m),
            ("poling_period_m", self.poling_period_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("crystal {name} must be positive, got {v:e}")));
            }
        }
        // Zero nonlinearity is a legal degenerate source (all rates 0).
        if !(self.d_eff_m_per_v.is_finite() && self.d_eff_m_per_v >= 0.0) {
            return Err(Error::Domain(format!(
                "crystal d_eff_m_per_v must be ≥ 0, got {:e}",
                self.d_eff_m_per_v
            )));
        }
        Ok(())
    }

    /// Grating wavenumber 2π/Λ supplied by the poling.
    pub fn grating_wavenumber(&self) -> f64 {
        std::f64::consts::TAU / self.poling_period_m
    }
}

/// Pump/a/b wavelengths with their indices, group indices, and wavenumbers.
/// `b` is fixed by energy conservation 1/λ_b = 1/λ_p − 1/λ_a.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveTriple {
    pub lambda_p_m: f64,
    pub lambda_a_m: f64,
    pub lambda_b_m: f64,
    pub n_p: f64,
    pub n_a: f64,
    pub n_b: f64,
    pub group_p: f64,
    pub group_a: f64,
    pub group_b: f64,
    pub k_p: f64,
    pub k_a: f64,
    pub k_b: f64,
}

impl WaveTriple {
    pub fn new(
        crystal: &CrystalSpec,
        models: &ModelSet,
        lambda_p_m: f64,
        lambda_a_m: f64,
    ) -> Result<Self> {
        if !(lambda_p_m.is_finite() && lambda_p_m > 0.0) {
            return Err(Error::Domain(format!(
                "pump wavelength must be positive, got {lambda_p_m:e}"
            )));
        }
        if !(lambda_a_m.is_finite() && lambda_a_m > lambda_p_m) {
            return Err(Error::Domain(format!(
                "collected wavelength {lambda_a_m:e} must exceed the pump wavelength {lambda_p_m:e}"
            )));
        }
        let lambda_b_m = 1.0 / (1.0 / lambda_p_m - 1.0 / lambda_a_m);
        let mp = models.for_axis(crystal.pump_axis)?;
        let ma = models.for_axis(crystal.a_axis)?;
        let mb = models.for_axis(crystal.b_axis)?;
        let n_p = mp.refractive_index(lambda_p_m)?;
        let n_a = ma.refractive_index(lambda_a_m)?;
        let n_b = mb.refractive_index(lambda_b_m)?;
        let tau = std::f64::consts::TAU;
        Ok(WaveTriple {
            lambda_p_m,
            lambda_a_m,
            lambda_b_m,
            n_p,
            n_a,
            n_b,
            group_p: mp.group_index(lambda_p_m)?,
            group_a: ma.group_index(lambda_a_m)?,
            group_b: mb.group_index(lambda_b_m)?,
            k_p: tau * n_p / lambda_p_m,
            k_a: tau * n_a / lambda_a_m,
            k_b: tau * n_b / lambda_b_m,
        })
    }

    /// Frequency-degenerate pair: λ_a = λ_b = 2λ_p.
    pub fn degenerate(crystal: &CrystalSpec, models: &ModelSet, lambda_p_m: f64) -> Result<Self> {
        Self::new(crystal, models, lambda_p_m, 2.0 * lambda_p_m)
    }

    /// 1/λ_p − 1/λ_a − 1/λ_b, in 1/m. Zero up to rounding by construction.
    pub fn energy_residual(&self) -> f64 {
        1.0 / self.lambda_p_m - 1.0 / self.lambda_a_m - 1.0 / self.lambda_b_m
    }
}

/// Collinear phase mismatch decomposition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseMismatch {
    /// k_a + k_b − k_p: positive when the pair carries more momentum than
    /// the pump, the deficit the poling grating is there to supply.
    pub bare: f64,
    /// 2π/Λ of the grating.
    pub grating: f64,
    /// bare − grating: what the grating fails to cancel.
    pub residual: f64,
}

pub fn phase_mismatch(crystal: &CrystalSpec, waves: &WaveTriple) -> PhaseMismatch {
    let bare = waves.k_a + waves.k_b - waves.k_p;
    let grating = crystal.grating_wavenumber();
    PhaseMismatch {
        bare,
        grating,
        residual: bare - grating,
    }
}
