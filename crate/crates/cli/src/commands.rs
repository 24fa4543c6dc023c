//! Command implementations. Tabular results go through one writer so the
//! CSV and JSON renderings never drift apart; both are byte-deterministic
//! for identical configs (floats print at full round-trip precision).

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use biphoton::coupling::{
    emission_rates_with, eta_c_from_rates, validity_warnings, EmissionRates,
};
use biphoton::detection::{
    invert_dual, invert_single, read_csv, read_dual_csv, read_dual_json, read_single_csv,
    read_single_json, ArmSpec, InvertedDual, InvertedSingle,
};
use biphoton::dispersion::OpticAxis;
use biphoton::montecarlo::{simulate_timestream, Measured, SimConfig, SimMode};
use biphoton::sweep::{fit_d_eff, log_grid, sweep, Context, FitRecord, SweepRow};
use biphoton::{Error, Result};
use clap::ValueEnum;
use serde::Serialize;

use crate::config::{resolve_shared, FileConfig, FocusBlock, Layout, Resolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub struct Output<'a> {
    pub path: Option<&'a Path>,
    pub format: Format,
}

fn named_io(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| named_io(path, e))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|e| named_io(p, e))?),
        None => Box::new(io::stdout()),
    })
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("is_io_error"),
        }
    } else {
        Error::Domain(e.to_string())
    }
}

fn write_rows<T: Serialize>(rows: &[T], out: &Output) -> Result<()> {
    match out.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(out.path)?);
            for row in rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let text = serde_json::to_string_pretty(rows)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            writeln!(sink(out.path)?, "{text}")?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct IndexRow {
    beam: String,
    axis: OpticAxis,
    lambda_nm: f64,
    n: f64,
    n_group: f64,
}

pub fn index(cfg: &FileConfig, out: &Output) -> Result<()> {
    let shared = resolve_shared(cfg)?;
    let (crystal, waves) = (&shared.crystal, &shared.waves);
    let mut rows = vec![
        IndexRow {
            beam: "pump".to_string(),
            axis: crystal.pump_axis,
            lambda_nm: waves.lambda_p_m * 1e9,
            n: waves.n_p,
            n_group: waves.group_p,
        },
        IndexRow {
            beam: "a".to_string(),
            axis: crystal.a_axis,
            lambda_nm: waves.lambda_a_m * 1e9,
            n: waves.n_a,
            n_group: waves.group_a,
        },
        IndexRow {
            beam: "b".to_string(),
            axis: crystal.b_axis,
            lambda_nm: waves.lambda_b_m * 1e9,
            n: waves.n_b,
            n_group: waves.group_b,
        },
    ];
    if let Some(block) = &cfg.index {
        for p in &block.extra {
            let model = shared.models.for_axis(p.axis)?;
            let lambda_m = p.lambda_nm * 1e-9;
            rows.push(IndexRow {
                beam: "extra".to_string(),
                axis: p.axis,
                lambda_nm: p.lambda_nm,
                n: model.refractive_index(lambda_m)?,
                n_group: model.group_index(lambda_m)?,
            });
        }
    }
    write_rows(&rows, out)
}

/// Sweep/rates output row; rates are absolute cps at the configured pump
/// power, `norm_pair_rate` stays power-invariant.
#[derive(Serialize)]
struct CurveRow {
    xi_p: f64,
    xi_a: f64,
    xi_b: f64,
    #[serde(rename = "R_a")]
    r_a: f64,
    #[serde(rename = "R_b")]
    r_b: f64,
    #[serde(rename = "R_c")]
    r_c: f64,
    #[serde(rename = "R_t")]
    r_t: f64,
    eta_c: f64,
    norm_pair_rate: f64,
    warnings: String,
}

impl CurveRow {
    fn from_sweep(row: &SweepRow, pump_mw: f64) -> Self {
        CurveRow {
            xi_p: row.xi_p,
            xi_a: row.xi_a,
            xi_b: row.xi_b,
            r_a: row.r_a * pump_mw,
            r_b: row.r_b * pump_mw,
            r_c: row.r_c * pump_mw,
            r_t: row.r_t * pump_mw,
            eta_c: row.eta_c,
            norm_pair_rate: row.norm_pair_rate,
            warnings: row.warnings.join("; "),
        }
    }
}

fn apply_xi_p(block: &FocusBlock, xi_p: Option<f64>) -> FocusBlock {
    let mut block = block.clone();
    if let Some(x) = xi_p {
        block.xi_p = Some(x);
        block.waist_p_um = None;
    }
    block
}

pub fn rates(cfg: &FileConfig, xi_p: Option<f64>, out: &Output) -> Result<()> {
    let shared = resolve_shared(cfg)?;
    let block = cfg
        .rates
        .as_ref()
        .ok_or_else(|| Error::Domain("rates needs a `rates` focus block".to_string()))?;
    let focus = apply_xi_p(block, xi_p).resolve(&shared.crystal, &shared.waves)?;
    let rates = emission_rates_with(&shared.crystal, &shared.waves, shared.delta_k, &focus)?;
    let warnings = validity_warnings(&shared.crystal, &shared.waves, shared.delta_k, &focus);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let ctx = Context::with_delta_k(&shared.crystal, &shared.waves, shared.delta_k);
    let baseline = ctx.baseline_pair_rate()?;
    let row = CurveRow {
        xi_p: focus.xi_p,
        xi_a: focus.xi_a,
        xi_b: focus.xi_b,
        r_a: rates.r_a * shared.pump_mw,
        r_b: rates.r_b * shared.pump_mw,
        r_c: rates.r_c * shared.pump_mw,
        r_t: rates.r_t() * shared.pump_mw,
        eta_c: eta_c_from_rates(&rates),
        norm_pair_rate: if baseline > 0.0 { rates.r_c / baseline } else { 0.0 },
        warnings: warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("; "),
    };
    write_rows(&[row], out)
}

pub fn sweep_cmd(cfg: &FileConfig, xi_p: Option<f64>, out: &Output) -> Result<()> {
    let shared = resolve_shared(cfg)?;
    let block = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Domain("sweep needs a `sweep` grid block".to_string()))?;
    let xi_p_values = match xi_p {
        Some(x) => vec![x],
        None => block.xi_p_values.clone(),
    };
    let grid = log_grid(block.xi_a_min, block.xi_a_max, block.points)?;
    let ctx = Context::with_delta_k(&shared.crystal, &shared.waves, shared.delta_k);
    let rows: Vec<CurveRow> = sweep(&ctx, &xi_p_values, &grid)?
        .iter()
        .map(|r| CurveRow::from_sweep(r, shared.pump_mw))
        .collect();
    write_rows(&rows, out)
}

#[derive(Serialize)]
struct InvertSingleRow {
    label: String,
    #[serde(rename = "R_t")]
    r_t: f64,
    #[serde(rename = "R_c")]
    r_c: f64,
    eta_c: f64,
    warnings: String,
}

#[derive(Serialize)]
struct InvertDualRow {
    label: String,
    #[serde(rename = "R_a")]
    r_a: f64,
    #[serde(rename = "R_b")]
    r_b: f64,
    #[serde(rename = "R_c")]
    r_c: f64,
    eta_c: f64,
    warnings: String,
}

#[derive(Serialize)]
struct ErrorEntry {
    line: Option<u64>,
    message: String,
}

#[derive(Serialize)]
struct InvertReport<R: Serialize> {
    rows: Vec<R>,
    errors: Vec<ErrorEntry>,
}

fn join_warnings(warnings: &[impl ToString]) -> String {
    warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("; ")
}

/// Bad rows go to stderr and the run still succeeds — unless nothing
/// survived, which means the file (or the config) is wrong, not a row.
fn finish_invert<R: Serialize>(
    rows: Vec<R>,
    errors: Vec<ErrorEntry>,
    out: &Output,
) -> Result<()> {
    for e in &errors {
        match e.line {
            Some(line) => eprintln!("row error (line {line}): {}", e.message),
            None => eprintln!("row error: {}", e.message),
        }
    }
    if rows.is_empty() {
        return Err(Error::Domain(format!(
            "no records could be inverted ({} failed)",
            errors.len()
        )));
    }
    match out.format {
        Format::Csv => write_rows(&rows, out),
        Format::Json => {
            let report = InvertReport { rows, errors };
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            writeln!(sink(out.path)?, "{text}")?;
            Ok(())
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false)
}

fn require_arm(arm: &Option<ArmSpec>, what: &str) -> Result<ArmSpec> {
    let arm = arm
        .clone()
        .ok_or_else(|| Error::Domain(format!("{what} is required for this layout")))?;
    arm.validate()?;
    if arm.eta() <= 0.0 {
        return Err(Error::Domain(format!(
            "{what}: zero total efficiency cannot be inverted"
        )));
    }
    Ok(arm)
}

pub fn invert(cfg: &FileConfig, input: Option<&Path>, out: &Output) -> Result<()> {
    let block = cfg
        .invert
        .as_ref()
        .ok_or_else(|| Error::Domain("invert needs an `invert` block".to_string()))?;
    let input = input
        .or(block.input.as_deref())
        .ok_or_else(|| Error::Domain("invert needs an input file (invert.input or --input)".to_string()))?;
    match block.layout {
        Layout::Single => {
            let arm = require_arm(&block.single, "invert.single")?;
            if arm.detector.wire_count < 2 {
                return Err(Error::Domain(
                    "single-detector inversion needs at least 2 wires".to_string(),
                ));
            }
            let file = open(input)?;
            let (records, mut errors) = if is_json(input) {
                (read_single_json(file)?, Vec::new())
            } else {
                let ingest = read_single_csv(file)?;
                let errors = ingest
                    .errors
                    .into_iter()
                    .map(|e| ErrorEntry { line: Some(e.line), message: e.message })
                    .collect();
                (ingest.records, errors)
            };
            let mut rows = Vec::new();
            for m in &records {
                match invert_single(m, arm.eta_s, &arm.detector, block.correct_accidentals) {
                    Ok(InvertedSingle { label, r_t, r_c, eta_c, warnings }) => {
                        for w in &warnings {
                            eprintln!("warning ({label}): {w}");
                        }
                        rows.push(InvertSingleRow {
                            label,
                            r_t,
                            r_c,
                            eta_c,
                            warnings: join_warnings(&warnings),
                        });
                    }
                    Err(e) => errors.push(ErrorEntry { line: None, message: e.to_string() }),
                }
            }
            finish_invert(rows, errors, out)
        }
        Layout::Dual => {
            let arm_a = require_arm(&block.a, "invert.a")?;
            let arm_b = require_arm(&block.b, "invert.b")?;
            let file = open(input)?;
            let (records, mut errors) = if is_json(input) {
                (read_dual_json(file)?, Vec::new())
            } else {
                let ingest = read_dual_csv(file)?;
                let errors = ingest
                    .errors
                    .into_iter()
                    .map(|e| ErrorEntry { line: Some(e.line), message: e.message })
                    .collect();
                (ingest.records, errors)
            };
            let mut rows = Vec::new();
            for m in &records {
                match invert_dual(m, &arm_a, &arm_b, block.correct_accidentals) {
                    Ok(InvertedDual { label, r_a, r_b, r_c, eta_c, warnings }) => {
                        for w in &warnings {
                            eprintln!("warning ({label}): {w}");
                        }
                        rows.push(InvertDualRow {
                            label,
                            r_a,
                            r_b,
                            r_c,
                            eta_c,
                            warnings: join_warnings(&warnings),
                        });
                    }
                    Err(e) => errors.push(ErrorEntry { line: None, message: e.to_string() }),
                }
            }
            finish_invert(rows, errors, out)
        }
    }
}

pub fn simulate(
    cfg: &FileConfig,
    seed: Option<u64>,
    xi_p: Option<f64>,
    out: &Output,
) -> Result<()> {
    let block = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Domain("simulate needs a `simulate` block".to_string()))?;
    let out_path = out
        .path
        .ok_or_else(|| Error::Domain("simulate writes files; give --out".to_string()))?;
    let seed = seed
        .or(block.seed)
        .ok_or_else(|| Error::Domain("simulate needs a seed (simulate.seed or --seed)".to_string()))?;
    let shared = resolve_shared(cfg)?;
    let rates_cps = resolve_source(cfg, &shared, xi_p)?;
    let mode = match block.layout {
        Layout::Single => SimMode::Single {
            arm: block.single.clone().ok_or_else(|| {
                Error::Domain("simulate.single arm is required for this layout".to_string())
            })?,
        },
        Layout::Dual => SimMode::Dual {
            arm_a: block.a.clone().ok_or_else(|| {
                Error::Domain("simulate.a arm is required for this layout".to_string())
            })?,
            arm_b: block.b.clone().ok_or_else(|| {
                Error::Domain("simulate.b arm is required for this layout".to_string())
            })?,
        },
    };
    let sim = SimConfig {
        label: block.label.clone(),
        seed,
        duration_s: block.duration_s,
        window_s: block.window_s,
        rates_cps,
        mode,
    };
    let outcome = simulate_timestream(&sim)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match &outcome.measured {
        Measured::Single(m) => write_rows(std::slice::from_ref(m), out)?,
        Measured::Dual(m) => write_rows(std::slice::from_ref(m), out)?,
    }
    let truth_path = block
        .truth_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.truth.json", out_path.display())));
    let truth = serde_json::to_string_pretty(&outcome)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(&truth_path, truth + "\n").map_err(|e| named_io(&truth_path, e))?;
    eprintln!(
        "wrote {} and {}",
        out_path.display(),
        truth_path.display()
    );
    Ok(())
}

fn resolve_source(
    cfg: &FileConfig,
    shared: &Resolved,
    xi_p: Option<f64>,
) -> Result<EmissionRates> {
    let block = cfg.simulate.as_ref().expect("checked by simulate");
    match (&block.focus, &block.rates_cps) {
        (Some(_), Some(_)) => Err(Error::Domain(
            "simulate takes focus or rates_cps, not both".to_string(),
        )),
        (None, None) => Err(Error::Domain(
            "simulate needs a source: focus or rates_cps".to_string(),
        )),
        (Some(f), None) => {
            let focus = apply_xi_p(f, xi_p).resolve(&shared.crystal, &shared.waves)?;
            let r = emission_rates_with(&shared.crystal, &shared.waves, shared.delta_k, &focus)?;
            Ok(EmissionRates {
                r_a: r.r_a * shared.pump_mw,
                r_b: r.r_b * shared.pump_mw,
                r_c: r.r_c * shared.pump_mw,
            })
        }
        (None, Some(r)) => {
            r.validate()?;
            Ok(*r)
        }
    }
}

#[derive(Serialize)]
struct FitRow {
    d_eff_pm_per_v: f64,
    scale: f64,
    relative_residual: f64,
    records: usize,
}

pub fn fit_deff(cfg: &FileConfig, input: Option<&Path>, out: &Output) -> Result<()> {
    let block = cfg
        .fit_deff
        .as_ref()
        .ok_or_else(|| Error::Domain("fit-deff needs a `fit_deff` block".to_string()))?;
    let input = input
        .or(block.input.as_deref())
        .ok_or_else(|| Error::Domain("fit-deff needs an input file (fit_deff.input or --input)".to_string()))?;
    let shared = resolve_shared(cfg)?;
    let ingest = read_csv::<FitRecord>(open(input)?)?;
    for e in &ingest.errors {
        eprintln!("row error (line {}): {}", e.line, e.message);
    }
    if ingest.records.is_empty() {
        return Err(Error::Domain(format!(
            "no usable records in {}",
            input.display()
        )));
    }
    // Model rates are cps/mW; bring measurements to the same footing.
    let records: Vec<FitRecord> = ingest
        .records
        .iter()
        .map(|r| FitRecord { pair_rate: r.pair_rate / shared.pump_mw, ..*r })
        .collect();
    let ctx = Context::with_delta_k(&shared.crystal, &shared.waves, shared.delta_k);
    let fit = fit_d_eff(&ctx, &records)?;
    let row = FitRow {
        d_eff_pm_per_v: fit.d_eff_m_per_v * 1e12,
        scale: fit.scale,
        relative_residual: fit.relative_residual,
        records: records.len(),
    };
    write_rows(&[row], out)
}
