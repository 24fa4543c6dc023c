//! Run configuration: one self-contained JSON document per invocation,
//! with a handful of flag overrides. Every block rejects unknown keys so
//! a typo cannot silently fall back to a default. Shared blocks (crystal,
//! models, wavelengths, delta_k) default to the built-in KTP source;
//! command blocks are mutually exclusive — a config describes one run.

use std::fs;
use std::path::{Path, PathBuf};

use biphoton::coupling::{focal_parameter, FocusConfig};
use biphoton::detection::ArmSpec;
use biphoton::dispersion::{
    phase_mismatch, CrystalSpec, ModelSet, OpticAxis, SellmeierModel, WaveTriple,
};
use biphoton::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub crystal: CrystalBlock,
    #[serde(default)]
    pub models: ModelsBlock,
    #[serde(default)]
    pub wavelengths: WavelengthBlock,
    #[serde(default)]
    pub delta_k: DeltaKBlock,
    /// Pump power; intrinsic rates are cps per mW, outputs scale linearly.
    pub pump_mw: Option<f64>,
    pub index: Option<IndexBlock>,
    pub rates: Option<FocusBlock>,
    pub sweep: Option<SweepBlock>,
    pub invert: Option<InvertBlock>,
    pub simulate: Option<SimulateBlock>,
    pub fit_deff: Option<FitBlock>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Domain(format!("{}: {e}", path.display())))
    }

    /// A config file drives exactly one command; a block for any other
    /// command is a mixed-up file, not a harmless extra.
    pub fn check_single_block(&self, invoked: &str) -> Result<()> {
        let blocks = [
            ("index", self.index.is_some()),
            ("rates", self.rates.is_some()),
            ("sweep", self.sweep.is_some()),
            ("invert", self.invert.is_some()),
            ("simulate", self.simulate.is_some()),
            ("fit_deff", self.fit_deff.is_some()),
        ];
        for (name, present) in blocks {
            if present && name != invoked {
                return Err(Error::Domain(format!(
                    "config carries a `{name}` block but the `{invoked}` command was invoked"
                )));
            }
        }
        Ok(())
    }

    pub fn pump_mw(&self) -> Result<f64> {
        let p = self.pump_mw.unwrap_or(1.0);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Domain(format!("pump_mw must be positive, got {p:e}")));
        }
        Ok(p)
    }
}

/// Crystal geometry in bench units (mm, µm, pm/V); defaults are the
/// 1 cm PPKTP type-II source.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalBlock {
    #[serde(default = "default_length_mm")]
    pub length_mm: f64,
    #[serde(default = "default_poling_period_um")]
    pub poling_period_um: f64,
    #[serde(default = "default_d_eff_pm_per_v")]
    pub d_eff_pm_per_v: f64,
    #[serde(default = "default_pump_axis")]
    pub pump_axis: OpticAxis,
    #[serde(default = "default_a_axis")]
    pub a_axis: OpticAxis,
    #[serde(default = "default_b_axis")]
    pub b_axis: OpticAxis,
}

fn default_length_mm() -> f64 {
    10.0
}
fn default_poling_period_um() -> f64 {
    46.1
}
fn default_d_eff_pm_per_v() -> f64 {
    1.82
}
fn default_pump_axis() -> OpticAxis {
    OpticAxis::Y
}
fn default_a_axis() -> OpticAxis {
    OpticAxis::Z
}
fn default_b_axis() -> OpticAxis {
    OpticAxis::Y
}

impl Default for CrystalBlock {
    fn default() -> Self {
        CrystalBlock {
            length_mm: default_length_mm(),
            poling_period_um: default_poling_period_um(),
            d_eff_pm_per_v: default_d_eff_pm_per_v(),
            pump_axis: default_pump_axis(),
            a_axis: default_a_axis(),
            b_axis: default_b_axis(),
        }
    }
}

impl CrystalBlock {
    pub fn resolve(&self) -> Result<CrystalSpec> {
        let spec = CrystalSpec {
            length_m: self.length_mm * 1e-3,
            poling_period_m: self.poling_period_um * 1e-6,
            d_eff_m_per_v: self.d_eff_pm_per_v * 1e-12,
            pump_axis: self.pump_axis,
            a_axis: self.a_axis,
            b_axis: self.b_axis,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Dispersion model sources. A named built-in set can be layered under
/// file or inline models; later entries replace earlier ones per axis.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsBlock {
    pub builtin: Option<String>,
    #[serde(default)]
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub inline: Vec<SellmeierModel>,
}

impl ModelsBlock {
    pub fn resolve(&self) -> Result<ModelSet> {
        let mut set = match self.builtin.as_deref() {
            Some("ktp") => ModelSet::ktp(),
            Some(other) => {
                return Err(Error::InvalidModel(format!(
                    "unknown built-in model set `{other}` (available: ktp)"
                )))
            }
            // Built-in KTP only when nothing else is supplied.
            None if self.files.is_empty() && self.inline.is_empty() => ModelSet::ktp(),
            None => ModelSet::new(Vec::new())?,
        };
        for path in &self.files {
            set.insert(SellmeierModel::from_json_file(path)?);
        }
        for model in &self.inline {
            model.validate()?;
            set.insert(model.clone());
        }
        Ok(set)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthBlock {
    #[serde(default = "default_pump_nm")]
    pub pump_nm: f64,
    /// Photon-a wavelength; omitted means the degenerate point 2λ_p.
    pub a_nm: Option<f64>,
}

fn default_pump_nm() -> f64 {
    780.0
}

impl Default for WavelengthBlock {
    fn default() -> Self {
        WavelengthBlock {
            pump_nm: default_pump_nm(),
            a_nm: None,
        }
    }
}

impl WavelengthBlock {
    pub fn resolve(&self, crystal: &CrystalSpec, models: &ModelSet) -> Result<WaveTriple> {
        match self.a_nm {
            Some(a_nm) => WaveTriple::new(crystal, models, self.pump_nm * 1e-9, a_nm * 1e-9),
            None => WaveTriple::degenerate(crystal, models, self.pump_nm * 1e-9),
        }
    }
}

/// Which phase mismatch the aperture coefficients see.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKMode {
    /// k_a + k_b − k_p straight from dispersion.
    #[default]
    Bare,
    /// Bare minus the grating wavenumber 2π/Λ.
    Residual,
    /// Ideal phase matching.
    Zero,
    /// Explicit value from `custom_rad_per_m`.
    Custom,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaKBlock {
    #[serde(default)]
    pub mode: DeltaKMode,
    pub custom_rad_per_m: Option<f64>,
}

impl DeltaKBlock {
    pub fn resolve(&self, crystal: &CrystalSpec, waves: &WaveTriple) -> Result<f64> {
        if self.custom_rad_per_m.is_some() && self.mode != DeltaKMode::Custom {
            return Err(Error::Domain(
                "custom_rad_per_m is only meaningful with mode = \"custom\"".to_string(),
            ));
        }
        let pm = phase_mismatch(crystal, waves);
        match self.mode {
            DeltaKMode::Bare => Ok(pm.bare),
            DeltaKMode::Residual => Ok(pm.residual),
            DeltaKMode::Zero => Ok(0.0),
            DeltaKMode::Custom => self.custom_rad_per_m.ok_or_else(|| {
                Error::Domain("mode = \"custom\" needs custom_rad_per_m".to_string())
            }),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexBlock {
    /// Extra (axis, wavelength) points beyond the three interacting waves.
    #[serde(default)]
    pub extra: Vec<ExtraIndexPoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraIndexPoint {
    pub axis: OpticAxis,
    pub lambda_nm: f64,
}

/// One focusing operating point. Each beam takes a focal parameter or a
/// waist (µm), not both; an omitted b side follows the shared-lens tie
/// ξ_b = ξ_a k_a/k_b.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusBlock {
    pub xi_p: Option<f64>,
    pub waist_p_um: Option<f64>,
    pub xi_a: Option<f64>,
    pub waist_a_um: Option<f64>,
    pub xi_b: Option<f64>,
    pub waist_b_um: Option<f64>,
}

impl FocusBlock {
    fn pick(
        crystal: &CrystalSpec,
        k: f64,
        beam: &str,
        xi: Option<f64>,
        waist_um: Option<f64>,
    ) -> Result<Option<f64>> {
        match (xi, waist_um) {
            (Some(_), Some(_)) => Err(Error::Domain(format!(
                "give xi_{beam} or waist_{beam}_um, not both"
            ))),
            (Some(xi), None) => Ok(Some(xi)),
            (None, Some(w)) => Ok(Some(focal_parameter(crystal.length_m, k, w * 1e-6)?)),
            (None, None) => Ok(None),
        }
    }

    pub fn resolve(&self, crystal: &CrystalSpec, waves: &WaveTriple) -> Result<FocusConfig> {
        let xi_p = Self::pick(crystal, waves.k_p, "p", self.xi_p, self.waist_p_um)?
            .ok_or_else(|| Error::Domain("focus point needs xi_p or waist_p_um".to_string()))?;
        let xi_a = Self::pick(crystal, waves.k_a, "a", self.xi_a, self.waist_a_um)?
            .ok_or_else(|| Error::Domain("focus point needs xi_a or waist_a_um".to_string()))?;
        match Self::pick(crystal, waves.k_b, "b", self.xi_b, self.waist_b_um)? {
            Some(xi_b) => FocusConfig::new(xi_p, xi_a, xi_b),
            None => FocusConfig::tied(xi_p, xi_a, waves),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub xi_p_values: Vec<f64>,
    #[serde(default = "default_xi_a_min")]
    pub xi_a_min: f64,
    #[serde(default = "default_xi_a_max")]
    pub xi_a_max: f64,
    #[serde(default = "default_sweep_points")]
    pub points: usize,
}

fn default_xi_a_min() -> f64 {
    0.01
}
fn default_xi_a_max() -> f64 {
    10.0
}
fn default_sweep_points() -> usize {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Single,
    Dual,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertBlock {
    pub layout: Layout,
    /// Measurement file (.csv or .json); `--input` overrides.
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub correct_accidentals: bool,
    /// One-detector layout: the multiplexed detector behind both arms.
    pub single: Option<ArmSpec>,
    /// Two-detector layout: one arm per photon.
    pub a: Option<ArmSpec>,
    pub b: Option<ArmSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub layout: Layout,
    pub duration_s: f64,
    pub window_s: f64,
    /// RNG seed; `--seed` overrides. Required one way or the other.
    pub seed: Option<u64>,
    #[serde(default = "default_label")]
    pub label: String,
    /// Source strength, either modeled from a focus point…
    pub focus: Option<FocusBlock>,
    /// …or absolute intrinsic rates in cps (model bypassed, pump_mw ignored).
    pub rates_cps: Option<biphoton::coupling::EmissionRates>,
    pub single: Option<ArmSpec>,
    pub a: Option<ArmSpec>,
    pub b: Option<ArmSpec>,
    /// Ground-truth sidecar path; defaults to `<out>.truth.json`.
    pub truth_out: Option<PathBuf>,
}

fn default_label() -> String {
    "sim".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    /// CSV with header `xi_p,xi_a,pair_rate`; `--input` overrides.
    pub input: Option<PathBuf>,
}

/// Shared physics context every command starts from.
pub struct Resolved {
    pub crystal: CrystalSpec,
    pub models: ModelSet,
    pub waves: WaveTriple,
    pub delta_k: f64,
    pub pump_mw: f64,
}

pub fn resolve_shared(cfg: &FileConfig) -> Result<Resolved> {
    let crystal = cfg.crystal.resolve()?;
    let models = cfg.models.resolve()?;
    let waves = cfg.wavelengths.resolve(&crystal, &models)?;
    let delta_k = cfg.delta_k.resolve(&crystal, &waves)?;
    Ok(Resolved {
        crystal,
        models,
        waves,
        delta_k,
        pump_mw: cfg.pump_mw()?,
    })
}
