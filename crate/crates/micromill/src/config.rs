//! Scenario configuration: a line-oriented `key = value` document with
//! dotted section keys and explicit unit suffixes (`_um`, `_gpa`, `_mpa`,
//! `_rpm`, `_mm_per_min`). Units live in the key names so a config file
//! means the same thing everywhere; internally everything is micrometres
//! and pascals.
//!
//! Unknown keys are rejected, duplicates are rejected, and a wrong unit
//! suffix is diagnosed against the expected key. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::kinematics::{feed_per_tooth, MillingParams, ToolSpec};
use crate::material::{MaterialSpec, PhaseSpec};
use crate::surface::GridSpec;

/// The bundled Al6061 reference scenario (tool, process and material data
/// of the validation experiment).
pub const AL6061_REFERENCE: &str = include_str!("../configs/al6061_reference.conf");

/// Simulated patch of the slot bottom, micrometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub width: f64,
    pub height: f64,
}

/// Profile-analysis settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSpec {
    /// Waviness/roughness cutoff, micrometres.
    pub cutoff: f64,
    /// Concave detection threshold; `None` derives half the inter-phase
    /// recovery-height contrast at run time.
    pub threshold: Option<f64>,
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub material: MaterialSpec,
    pub tool: ToolSpec,
    pub milling: MillingParams,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub seed: u64,
    pub analysis: AnalysisSpec,
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    /// Parses and validates the bundled reference scenario.
    pub fn al6061_reference() -> Self {
        parse_config(AL6061_REFERENCE).expect("bundled reference config must parse")
    }
}

const PHASE_FIELDS: [&str; 6] = [
    "E_gpa",
    "mu",
    "sigma_p_mpa",
    "intercept_um",
    "volume_fraction",
    "elongation",
];
const PHASE_FIELDS_REQUIRED: [&str; 5] = [
    "E_gpa",
    "mu",
    "sigma_p_mpa",
    "intercept_um",
    "volume_fraction",
];
const SCALAR_KEYS: [&str; 14] = [
    "tool.diameter_um",
    "tool.flutes",
    "tool.edge_radius_um",
    "milling.spindle_rpm",
    "milling.feed_mm_per_min",
    "milling.axial_depth_um",
    "domain.width_um",
    "domain.height_um",
    "grid.dx_um",
    "grid.dy_um",
    "seed",
    "analysis.cutoff_um",
    "analysis.threshold_um",
    "output_dir",
];
const REQUIRED_SCALARS: [&str; 9] = [
    "tool.diameter_um",
    "tool.flutes",
    "tool.edge_radius_um",
    "milling.spindle_rpm",
    "milling.feed_mm_per_min",
    "milling.axial_depth_um",
    "domain.width_um",
    "domain.height_um",
    "seed",
];
const UNIT_SUFFIXES: [&str; 5] = ["_um", "_gpa", "_mpa", "_rpm", "_mm_per_min"];

struct RawValue {
    line: usize,
    value: String,
}

/// Parses a scenario document into a validated [`ScenarioConfig`].
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut values: BTreeMap<String, RawValue> = BTreeMap::new();
    let mut phase_order: Vec<String> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(line_no, format!("expected 'key = value', got {line:?}"))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_')
        {
            return Err(Error::config(line_no, format!("malformed key {key:?}")));
        }
        if value.is_empty() {
            return Err(Error::config(line_no, format!("key '{key}' has no value")));
        }
        classify_key(&key, line_no)?;
        if let Some(phase) = phase_name_of(&key) {
            if !phase_order.iter().any(|p| p == &phase) {
                phase_order.push(phase);
            }
        }
        if let Some(prev) = values.get(&key) {
            return Err(Error::config(
                line_no,
                format!("duplicate key '{key}' (first set on line {})", prev.line),
            ));
        }
        values.insert(
            key,
            RawValue {
                line: line_no,
                value,
            },
        );
    }

    // Collect every missing required key up front so an empty document
    // reports the full shopping list.
    let mut missing: Vec<String> = REQUIRED_SCALARS
        .iter()
        .filter(|k| !values.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if phase_order.is_empty() {
        missing.push("material.<phase>.*".to_string());
    }
    for phase in &phase_order {
        for field in PHASE_FIELDS_REQUIRED {
            let key = format!("material.{phase}.{field}");
            if !values.contains_key(&key) {
                missing.push(key);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::config(
            0,
            format!("missing required keys: {}", missing.join(", ")),
        ));
    }

    let take_f64 =
        |values: &BTreeMap<String, RawValue>, key: &str| -> Result<Option<(f64, usize)>> {
            match values.get(key) {
                None => Ok(None),
                Some(raw) => raw
                    .value
                    .parse::<f64>()
                    .map(|v| Some((v, raw.line)))
                    .map_err(|_| {
                        Error::config(
                            raw.line,
                            format!("key '{key}': not a number: {:?}", raw.value),
                        )
                    }),
            }
        };
    let need_positive = |key: &str, v: f64, line: usize| -> Result<f64> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(
                line,
                format!("invariant violation: {key} must be > 0, got {v}"),
            ));
        }
        Ok(v)
    };

    // Material phases in first-appearance order.
    let mut phases = Vec::with_capacity(phase_order.len());
    for phase in &phase_order {
        let field = |f: &str| format!("material.{phase}.{f}");
        let (e_gpa, l) = take_f64(&values, &field("E_gpa"))?.unwrap();
        let e_gpa = need_positive(&field("E_gpa"), e_gpa, l)?;
        let (mu, l) = take_f64(&values, &field("mu"))?.unwrap();
        if !(mu >= 0.0) {
            return Err(Error::config(
                l,
                format!(
                    "invariant violation: {} must be >= 0, got {mu}",
                    field("mu")
                ),
            ));
        }
        let (sigma_p, l) = take_f64(&values, &field("sigma_p_mpa"))?.unwrap();
        let sigma_p = need_positive(&field("sigma_p_mpa"), sigma_p, l)?;
        let (intercept, l) = take_f64(&values, &field("intercept_um"))?.unwrap();
        let intercept = need_positive(&field("intercept_um"), intercept, l)?;
        let (fraction, l) = take_f64(&values, &field("volume_fraction"))?.unwrap();
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(
                l,
                format!(
                    "invariant violation: {} must be in (0, 1], got {fraction}",
                    field("volume_fraction")
                ),
            ));
        }
        let elongation = match take_f64(&values, &field("elongation"))? {
            Some((v, l)) => {
                if !(v >= 1.0) {
                    return Err(Error::config(
                        l,
                        format!(
                            "invariant violation: {} must be >= 1, got {v}",
                            field("elongation")
                        ),
                    ));
                }
                v
            }
            None => 1.0,
        };
        phases.push(PhaseSpec {
            name: phase.clone(),
            elastic_modulus: e_gpa * 1e9,
            friction_mu: mu,
            proportional_limit: sigma_p * 1e6,
            target_intercept: intercept,
            volume_fraction: fraction,
            elongation_ratio: elongation,
        });
    }
    let material = MaterialSpec { phases };
    material
        .validate()
        .map_err(|e| Error::config(0, format!("material invariant violation: {e}")))?;

    let (diameter, l) = take_f64(&values, "tool.diameter_um")?.unwrap();
    let diameter = need_positive("tool.diameter", diameter, l)?;
    let flutes_raw = values.get("tool.flutes").unwrap();
    let flutes: u32 = flutes_raw.value.parse().map_err(|_| {
        Error::config(
            flutes_raw.line,
            format!(
                "key 'tool.flutes': not a positive integer: {:?}",
                flutes_raw.value
            ),
        )
    })?;
    if flutes < 1 {
        return Err(Error::config(
            flutes_raw.line,
            "invariant violation: tool.flutes must be >= 1",
        ));
    }
    let (edge_radius, l) = take_f64(&values, "tool.edge_radius_um")?.unwrap();
    let edge_radius = need_positive("tool.edge_radius", edge_radius, l)?;
    let tool = ToolSpec {
        diameter,
        flutes,
        edge_radius,
    };

    let (rpm, l) = take_f64(&values, "milling.spindle_rpm")?.unwrap();
    let rpm = need_positive("milling.spindle_rpm", rpm, l)?;
    let (feed_mm, l) = take_f64(&values, "milling.feed_mm_per_min")?.unwrap();
    let feed_mm = need_positive("milling.feed_mm_per_min", feed_mm, l)?;
    let (depth, l) = take_f64(&values, "milling.axial_depth_um")?.unwrap();
    let depth = need_positive("milling.axial_depth", depth, l)?;
    let milling = MillingParams {
        spindle_rpm: rpm,
        feed_rate: feed_mm * 1000.0,
        axial_depth: depth,
    };

    let (width, l) = take_f64(&values, "domain.width_um")?.unwrap();
    let width = need_positive("domain.width", width, l)?;
    let (height, l) = take_f64(&values, "domain.height_um")?.unwrap();
    let height = need_positive("domain.height", height, l)?;
    let domain = DomainSpec { width, height };

    let f_t = feed_per_tooth(&tool, &milling)
        .map_err(|e| Error::config(0, format!("kinematics invariant violation: {e}")))?;
    let grid = match (
        take_f64(&values, "grid.dx_um")?,
        take_f64(&values, "grid.dy_um")?,
    ) {
        (Some((dx, lx)), Some((dy, ly))) => {
            let dx = need_positive("grid.dx", dx, lx)?;
            let dy = need_positive("grid.dy", dy, ly)?;
            GridSpec { dx, dy }
        }
        (None, None) => default_grid(&material, f_t, &domain),
        _ => {
            return Err(Error::config(
                0,
                "grid.dx_um and grid.dy_um must be given together or both omitted",
            ))
        }
    };
    grid.dims_for(domain.width, domain.height)
        .map_err(|e| Error::config(0, format!("grid invariant violation: {e}")))?;
    if grid.dx > f_t / 4.0 {
        return Err(Error::config(
            0,
            format!(
                "invariant violation: grid.dx ({} um) must not exceed f_t/4 = {} um",
                grid.dx,
                f_t / 4.0
            ),
        ));
    }
    let min_intercept = material
        .phases
        .iter()
        .map(|p| p.target_intercept)
        .fold(f64::INFINITY, f64::min);
    if grid.dy > min_intercept / 4.0 {
        return Err(Error::config(
            0,
            format!(
                "invariant violation: grid.dy ({} um) must not exceed the smallest \
                 intercept/4 = {} um",
                grid.dy,
                min_intercept / 4.0
            ),
        ));
    }

    let seed_raw = values.get("seed").unwrap();
    let seed: u64 = seed_raw.value.parse().map_err(|_| {
        Error::config(
            seed_raw.line,
            format!(
                "key 'seed': not a non-negative integer: {:?}",
                seed_raw.value
            ),
        )
    })?;

    let cutoff = match take_f64(&values, "analysis.cutoff_um")? {
        Some((v, l)) => need_positive("analysis.cutoff", v, l)?,
        None => 5.0,
    };
    if cutoff <= 2.0 * grid.dx {
        return Err(Error::config(
            0,
            format!(
                "invariant violation: analysis.cutoff ({cutoff} um) must exceed twice \
                 grid.dx ({} um)",
                grid.dx
            ),
        ));
    }
    let threshold = match take_f64(&values, "analysis.threshold_um")? {
        Some((v, l)) => Some(need_positive("analysis.threshold", v, l)?),
        None => None,
    };

    let output_dir = PathBuf::from(
        values
            .get("output_dir")
            .map(|raw| raw.value.clone())
            .unwrap_or_else(|| "out".to_string()),
    );

    Ok(ScenarioConfig {
        material,
        tool,
        milling,
        domain,
        grid,
        seed,
        analysis: AnalysisSpec { cutoff, threshold },
        output_dir,
    })
}

/// Default grid: `min(f_t, smallest intercept) / 5`, snapped so the cells
/// tile the domain exactly.
fn default_grid(material: &MaterialSpec, f_t: f64, domain: &DomainSpec) -> GridSpec {
    let min_intercept = material
        .phases
        .iter()
        .map(|p| p.target_intercept)
        .fold(f64::INFINITY, f64::min);
    let step = f_t.min(min_intercept) / 5.0;
    let nx = ((domain.width / step).round() as usize).max(1);
    let ny = ((domain.height / step).round() as usize).max(1);
    GridSpec {
        dx: domain.width / nx as f64,
        dy: domain.height / ny as f64,
    }
}

/// Serializes a config back to the canonical document; `parse_config` of
/// the result reproduces the config exactly.
pub fn serialize_config(config: &ScenarioConfig) -> String {
    let mut out = String::new();
    for phase in &config.material.phases {
        let name = &phase.name;
        out.push_str(&format!(
            "material.{name}.E_gpa = {}\n",
            phase.elastic_modulus / 1e9
        ));
        out.push_str(&format!("material.{name}.mu = {}\n", phase.friction_mu));
        out.push_str(&format!(
            "material.{name}.sigma_p_mpa = {}\n",
            phase.proportional_limit / 1e6
        ));
        out.push_str(&format!(
            "material.{name}.intercept_um = {}\n",
            phase.target_intercept
        ));
        out.push_str(&format!(
            "material.{name}.volume_fraction = {}\n",
            phase.volume_fraction
        ));
        out.push_str(&format!(
            "material.{name}.elongation = {}\n",
            phase.elongation_ratio
        ));
    }
    out.push_str(&format!("tool.diameter_um = {}\n", config.tool.diameter));
    out.push_str(&format!("tool.flutes = {}\n", config.tool.flutes));
    out.push_str(&format!(
        "tool.edge_radius_um = {}\n",
        config.tool.edge_radius
    ));
    out.push_str(&format!(
        "milling.spindle_rpm = {}\n",
        config.milling.spindle_rpm
    ));
    out.push_str(&format!(
        "milling.feed_mm_per_min = {}\n",
        config.milling.feed_rate / 1000.0
    ));
    out.push_str(&format!(
        "milling.axial_depth_um = {}\n",
        config.milling.axial_depth
    ));
    out.push_str(&format!("domain.width_um = {}\n", config.domain.width));
    out.push_str(&format!("domain.height_um = {}\n", config.domain.height));
    out.push_str(&format!("grid.dx_um = {}\n", config.grid.dx));
    out.push_str(&format!("grid.dy_um = {}\n", config.grid.dy));
    out.push_str(&format!("seed = {}\n", config.seed));
    out.push_str(&format!(
        "analysis.cutoff_um = {}\n",
        config.analysis.cutoff
    ));
    if let Some(threshold) = config.analysis.threshold {
        out.push_str(&format!("analysis.threshold_um = {threshold}\n"));
    }
    out.push_str(&format!("output_dir = {}\n", config.output_dir.display()));
    out
}

fn phase_name_of(key: &str) -> Option<String> {
    let rest = key.strip_prefix("material.")?;
    let (phase, _field) = rest.split_once('.')?;
    Some(phase.to_string())
}

/// Validates that a key is recognized; unknown keys get a unit-suffix
/// diagnosis when their stem matches a known key.
fn classify_key(key: &str, line: usize) -> Result<()> {
    if SCALAR_KEYS.contains(&key) {
        return Ok(());
    }
    if let Some(rest) = key.strip_prefix("material.") {
        if let Some((phase, field)) = rest.split_once('.') {
            if phase.is_empty() {
                return Err(Error::config(
                    line,
                    format!("malformed material key '{key}'"),
                ));
            }
            if PHASE_FIELDS.contains(&field) {
                return Ok(());
            }
            for known in PHASE_FIELDS {
                if let Some(stem) = strip_unit_suffix(known) {
                    if field.starts_with(&format!("{stem}_")) {
                        return Err(Error::config(
                            line,
                            format!(
                                "unit-suffix mismatch: key 'material.{phase}.{field}' should be \
                                 'material.{phase}.{known}'"
                            ),
                        ));
                    }
                }
            }
            return Err(Error::config(
                line,
                format!("unknown material field '{field}' in key '{key}'"),
            ));
        }
        return Err(Error::config(
            line,
            format!("malformed material key '{key}'"),
        ));
    }
    for known in SCALAR_KEYS {
        if let Some(stem) = strip_unit_suffix(known) {
            if key.starts_with(&format!("{stem}_")) {
                return Err(Error::config(
                    line,
                    format!("unit-suffix mismatch: key '{key}' should be '{known}'"),
                ));
            }
        }
    }
    Err(Error::config(line, format!("unknown key '{key}'")))
}

fn strip_unit_suffix(key: &str) -> Option<&str> {
    UNIT_SUFFIXES
        .iter()
        .find_map(|suffix| key.strip_suffix(suffix))
}
