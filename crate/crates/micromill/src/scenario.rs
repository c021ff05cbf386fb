//! Scenario orchestration: grain map, surface synthesis, analysis and file
//! emission.
//!
//! A run emits six files plus a manifest into the output directory:
//! `heightmap.csv`, `heightmap.pgm`, `heightmap_scale.txt`, `profile.csv`,
//! `chips.csv`, `report.txt` and `manifest.txt` (`passes.csv` on request).
//! Everything is staged in a scratch subdirectory and renamed into place
//! only after all writes succeed, so a failing run leaves no partial
//! outputs. Two runs with the same config and seed produce byte-identical
//! artifacts.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{feature_spacing, roughness, RoughnessReport, SpacingStats};
use crate::config::{serialize_config, ScenarioConfig};
use crate::error::Result;
use crate::export;
use crate::kinematics::generate_tooth_passes;
use crate::material::GrainMap;
use crate::surface::{
    chip_statistics, extract_profile, synthesize_surface, Provenance, SurfaceResult,
};

/// Identifies the scenario itself: the serialized config minus the output
/// directory, which is delivery detail, not physics.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let semantic: String = serialize_config(config)
        .lines()
        .filter(|l| !l.starts_with("output_dir"))
        .map(|l| format!("{l}\n"))
        .collect();
    export::sha256_hex(semantic.as_bytes())
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// `(file name, sha256)` of every emitted file except the manifest,
    /// sorted by name.
    pub files: Vec<(String, String)>,
    pub report_text: String,
    pub surface: SurfaceResult,
    pub spacing: SpacingStats,
    pub roughness: RoughnessReport,
}

/// Runs the full pipeline for one scenario and emits all artifacts.
pub fn run_scenario(config: &ScenarioConfig, dump_passes: bool) -> Result<RunOutput> {
    // Fail before simulating when the output directory cannot be created.
    fs::create_dir_all(&config.output_dir)?;
    let map = GrainMap::build(
        &config.material,
        config.domain.width,
        config.domain.height,
        config.seed,
    )?;
    let surface = synthesize_surface(
        &map,
        &config.tool,
        &config.milling,
        &config.grid,
        &config.material,
    )?;
    let profile = extract_profile(&surface.height_map, config.domain.height / 2.0)?;

    // Concave threshold: half the inter-phase recovery contrast unless
    // configured explicitly.
    let threshold = config.analysis.threshold.unwrap_or_else(|| {
        let h_r_max = surface
            .phase_states
            .iter()
            .map(|s| s.h_r)
            .fold(f64::NEG_INFINITY, f64::max);
        let h_r_min = surface
            .phase_states
            .iter()
            .map(|s| s.h_r)
            .fold(f64::INFINITY, f64::min);
        let contrast = h_r_max - h_r_min;
        if contrast > 0.0 {
            contrast / 2.0
        } else {
            0.01
        }
    });
    let rough = roughness(&profile, Some(config.analysis.cutoff), threshold)?;
    let spacing = feature_spacing(&profile, threshold)?;

    let report_text = build_report(config, &map, &surface, &rough, &spacing, threshold)?;

    // Render every artifact in memory first; hashing and atomic emission
    // both want the final bytes.
    let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();

    let mut heightmap_csv = Vec::new();
    export::write_heightmap_csv(&surface.height_map, &mut heightmap_csv)?;
    artifacts.push(("heightmap.csv".to_string(), heightmap_csv));

    let mut heightmap_pgm = Vec::new();
    let (min, max) = export::write_heightmap_pgm(&surface.height_map, &mut heightmap_pgm)?;
    artifacts.push(("heightmap.pgm".to_string(), heightmap_pgm));
    artifacts.push((
        "heightmap_scale.txt".to_string(),
        export::heightmap_scale_text(min, max).into_bytes(),
    ));

    let mut profile_csv = Vec::new();
    export::write_profile_csv(&profile, &mut profile_csv)?;
    artifacts.push(("profile.csv".to_string(), profile_csv));

    let phase_names: Vec<String> = config
        .material
        .phases
        .iter()
        .map(|p| p.name.clone())
        .collect();
    let mut chips_csv = Vec::new();
    export::write_chips_csv(&surface.chips, &phase_names, &mut chips_csv)?;
    artifacts.push(("chips.csv".to_string(), chips_csv));

    artifacts.push(("report.txt".to_string(), report_text.clone().into_bytes()));

    if dump_passes {
        let passes = generate_tooth_passes(
            &config.tool,
            &config.milling,
            config.domain.width,
            config.domain.height,
            config.grid.dy,
        )?;
        let mut passes_csv = Vec::new();
        export::write_passes_csv(&passes, &mut passes_csv)?;
        artifacts.push(("passes.csv".to_string(), passes_csv));
    }

    let files: Vec<(String, String)> = artifacts
        .iter()
        .map(|(name, bytes)| (name.clone(), export::sha256_hex(bytes)))
        .collect();

    let mut manifest = String::new();
    manifest.push_str("micromill-run v1\n");
    manifest.push_str(&format!("config_sha256: {}\n", config_hash(config)));
    manifest.push_str(&format!("seed: {}\n", config.seed));
    for (name, hash) in &files {
        manifest.push_str(&format!("file: {name} {hash}\n"));
    }
    artifacts.push(("manifest.txt".to_string(), manifest.into_bytes()));

    emit_atomically(&config.output_dir, &artifacts)?;

    Ok(RunOutput {
        dir: config.output_dir.clone(),
        files,
        report_text,
        surface,
        spacing,
        roughness: rough,
    })
}

/// Stages all artifacts in a scratch directory inside `out_dir`, then
/// renames them into place; nothing lands on failure part way through the
/// staging writes.
fn emit_atomically(out_dir: &Path, artifacts: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let staging = out_dir.join(format!(".staging-{}", std::process::id()));
    fs::create_dir_all(&staging)?;
    let result = (|| -> Result<()> {
        for (name, bytes) in artifacts {
            fs::write(staging.join(name), bytes)?;
        }
        for (name, _) in artifacts {
            fs::rename(staging.join(name), out_dir.join(name))?;
        }
        Ok(())
    })();
    let _ = fs::remove_dir_all(&staging);
    result
}

fn build_report(
    config: &ScenarioConfig,
    map: &GrainMap,
    surface: &SurfaceResult,
    rough: &RoughnessReport,
    spacing: &SpacingStats,
    threshold: f64,
) -> Result<String> {
    let mut out = String::new();
    out.push_str("micromill-report v1\n");
    out.push_str(&format!("config_sha256: {}\n", config_hash(config)));
    out.push_str(&format!("seed: {}\n", config.seed));
    out.push_str(&format!(
        "domain_um: {} x {}\n",
        config.domain.width, config.domain.height
    ));
    out.push_str(&format!(
        "grid_um: {} x {}\n",
        config.grid.dx, config.grid.dy
    ));
    out.push_str(&format!("feed_per_tooth_um: {}\n", surface.feed_per_tooth));
    out.push_str(&format!("passes: {}\n", surface.pass_count));
    out.push_str(&format!("grains: {}\n", map.grains().len()));

    let min_intercept = config
        .material
        .phases
        .iter()
        .map(|p| p.target_intercept)
        .fold(f64::INFINITY, f64::min);
    let step = min_intercept / 5.0;
    for (i, phase) in config.material.phases.iter().enumerate() {
        let state = &surface.phase_states[i];
        let key = |f: &str| format!("phase.{}.{f}", phase.name);
        out.push_str(&format!("{}: {}\n", key("mu"), phase.friction_mu));
        out.push_str(&format!(
            "{}: {}\n",
            key("E_gpa"),
            phase.elastic_modulus / 1e9
        ));
        out.push_str(&format!(
            "{}: {}\n",
            key("sigma_p_mpa"),
            phase.proportional_limit / 1e6
        ));
        out.push_str(&format!("{}: {:.6}\n", key("beta_rad"), state.beta));
        out.push_str(&format!("{}: {:.6}\n", key("h_m_um"), state.h_m));
        out.push_str(&format!("{}: {:.6}\n", key("sigma_gpa"), state.sigma / 1e9));
        out.push_str(&format!("{}: {:.6}\n", key("h_r_um"), state.h_r));
        out.push_str(&format!("{}: {:?}\n", key("mode_at_f_t"), state.mode));
        let stats = map.measure_intercept_isotropic(i, 64, step)?;
        match stats.mean {
            Some(m) => out.push_str(&format!("{}: {:.4}\n", key("measured_intercept_um"), m)),
            None => out.push_str(&format!("{}: none\n", key("measured_intercept_um"))),
        }
        out.push_str(&format!(
            "{}: {}\n",
            key("target_intercept_um"),
            phase.target_intercept
        ));
    }

    let cells = surface.height_map.heights.len();
    let sheared = surface
        .height_map
        .provenance
        .iter()
        .filter(|&&p| p == Provenance::Sheared)
        .count();
    let ploughed_first = surface
        .ploughed_before_first_shear
        .iter()
        .filter(|&&b| b)
        .count();
    out.push_str(&format!(
        "surface.sheared_fraction: {}\n",
        sheared as f64 / cells as f64
    ));
    out.push_str(&format!(
        "surface.ploughed_before_first_shear_fraction: {}\n",
        ploughed_first as f64 / cells as f64
    ));
    out.push_str(&format!(
        "surface.plough_events: {}\n",
        surface.plough_events
    ));
    out.push_str(&format!("surface.shear_events: {}\n", surface.shear_events));
    let distinct: BTreeSet<u64> = surface
        .height_map
        .heights
        .iter()
        .zip(&surface.height_map.provenance)
        .filter(|(_, &p)| p == Provenance::Sheared)
        .map(|(h, _)| h.to_bits())
        .collect();
    out.push_str(&format!(
        "surface.distinct_sheared_heights: {}\n",
        distinct.len()
    ));

    let stats = chip_statistics(&surface.chips, config.material.phases.len());
    out.push_str(&format!("chips.count: {}\n", stats.count));
    match stats.mean_length {
        Some(m) => out.push_str(&format!("chips.mean_length_um: {m}\n")),
        None => out.push_str("chips.mean_length_um: none\n"),
    }
    match stats.max_length {
        Some(m) => out.push_str(&format!("chips.max_length_um: {m}\n")),
        None => out.push_str("chips.max_length_um: none\n"),
    }
    for (i, phase) in config.material.phases.iter().enumerate() {
        out.push_str(&format!(
            "chips.per_phase.{}: {}\n",
            phase.name, stats.per_phase_counts[i]
        ));
    }

    out.push_str(&rough.to_text());
    out.push_str(&format!("profile.feature_threshold_um: {threshold}\n"));
    out.push_str(&format!(
        "profile.feature_count: {}\n",
        spacing.feature_count
    ));
    match spacing.mean {
        Some(m) => out.push_str(&format!("profile.feature_mean_spacing_um: {m}\n")),
        None => out.push_str("profile.feature_mean_spacing_um: none\n"),
    }
    Ok(out)
}
