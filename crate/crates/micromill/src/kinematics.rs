//! Tool geometry and feed kinematics of the slot bottom face.
//!
//! The bottom-face model is a 1.5D sweep: the tool centre advances along the
//! feed axis (x) by one feed-per-tooth per flute engagement, and each
//! engagement sweeps a sample line across the full cut width (y). The
//! instantaneous uncut thickness is *not* the classical `f_t sin(phi)` flank
//! formula; it is the material standing above the advancing tool-floor
//! datum, which is what drives the sub-`h_m` ploughing accumulation on the
//! bottom face. Runout, vibration and tool deflection are excluded.
//!
//! Lengths in micrometres, feed rate in micrometres per minute.

use crate::error::{Error, Result};

/// Micro end-mill geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolSpec {
    /// Tool diameter, micrometres.
    pub diameter: f64,
    /// Flute count.
    pub flutes: u32,
    /// Cutting-edge radius, micrometres.
    pub edge_radius: f64,
}

impl ToolSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter > 0.0) {
            return Err(Error::invalid(format!(
                "tool diameter must be > 0 um, got {}",
                self.diameter
            )));
        }
        if self.flutes < 1 {
            return Err(Error::invalid("tool needs at least one flute"));
        }
        if !(self.edge_radius > 0.0) {
            return Err(Error::invalid(format!(
                "edge radius must be > 0 um, got {}",
                self.edge_radius
            )));
        }
        Ok(())
    }

    /// Micro-milling assumes the edge radius is small against the tool;
    /// returns a warning string when `r > diameter / 20`.
    pub fn edge_radius_warning(&self) -> Option<String> {
        (self.edge_radius > self.diameter / 20.0).then(|| {
            format!(
                "edge radius {} um is large for a {} um tool (> diameter/20)",
                self.edge_radius, self.diameter
            )
        })
    }
}

/// Process settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MillingParams {
    /// Spindle speed, revolutions per minute.
    pub spindle_rpm: f64,
    /// Feed rate, micrometres per minute.
    pub feed_rate: f64,
    /// Axial depth of cut, micrometres.
    pub axial_depth: f64,
}

impl MillingParams {
    pub fn validate(&self) -> Result<()> {
        for (value, what) in [
            (self.spindle_rpm, "spindle speed"),
            (self.feed_rate, "feed rate"),
            (self.axial_depth, "axial depth"),
        ] {
            if !(value > 0.0) {
                return Err(Error::invalid(format!("{what} must be > 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// One sample of a tooth-pass sweep across the cut width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassSample {
    pub x: f64,
    pub y: f64,
    /// Nominal uncut thickness fed to this engagement, micrometres.
    pub h_uncut: f64,
}

/// One flute engagement: a sweep line across the cut width at the tool's
/// current feed position.
#[derive(Debug, Clone, PartialEq)]
pub struct ToothPass {
    /// 1-based engagement counter; the tool centre sits at
    /// `pass_index * f_t`.
    pub pass_index: usize,
    /// Which flute cuts this engagement, `(pass_index - 1) % flutes`.
    pub flute_index: u32,
    /// Feed-axis position of the tool centre, micrometres.
    pub center_x: f64,
    /// Sweep samples ordered by increasing y.
    pub samples: Vec<PassSample>,
}

/// Feed per tooth `f_t = feed_rate / (spindle_speed * flutes)` in
/// micrometres.
pub fn feed_per_tooth(tool: &ToolSpec, params: &MillingParams) -> Result<f64> {
    tool.validate()?;
    params.validate()?;
    Ok(params.feed_rate / (params.spindle_rpm * tool.flutes as f64))
}

/// Generates one pass per tooth engagement, centres advancing by `f_t`
/// across `domain_width`; each pass sweeps `cut_width` at `sample_step`.
///
/// A domain shorter than one `f_t` yields an empty list.
pub fn generate_tooth_passes(
    tool: &ToolSpec,
    params: &MillingParams,
    domain_width: f64,
    cut_width: f64,
    sample_step: f64,
) -> Result<Vec<ToothPass>> {
    let f_t = feed_per_tooth(tool, params)?;
    if !(domain_width > 0.0 && cut_width > 0.0) {
        return Err(Error::invalid(format!(
            "sweep domain must be positive, got {domain_width} x {cut_width} um"
        )));
    }
    // The sweep runs across the cut width; its resolution bound (a quarter
    // of the smallest grain intercept) is enforced by the surface module,
    // which knows the material. Here only geometric sanity is checkable.
    if !(sample_step > 0.0 && sample_step <= cut_width) {
        return Err(Error::invalid(format!(
            "sample step must be in (0, cut_width] = (0, {cut_width}] um, got {sample_step}"
        )));
    }
    let n_passes = ((domain_width / f_t) + 1e-9).floor() as usize;
    let n_samples = ((cut_width / sample_step).round() as usize).max(1);
    let mut passes = Vec::with_capacity(n_passes);
    for k in 1..=n_passes {
        let center_x = k as f64 * f_t;
        let samples = (0..n_samples)
            .map(|j| PassSample {
                x: center_x,
                y: (j as f64 + 0.5) * sample_step,
                h_uncut: f_t,
            })
            .collect();
        passes.push(ToothPass {
            pass_index: k,
            flute_index: ((k - 1) as u32) % tool.flutes,
            center_x,
            samples,
        });
    }
    Ok(passes)
}

/// Material standing above the tool's bottom envelope at a sample:
/// `max(0, prev_surface_height - tool_floor_height)`. Heights share one
/// datum; a surface slightly below the floor clamps to zero.
pub fn uncut_thickness_at(prev_surface_height: f64, tool_floor_height: f64) -> f64 {
    (prev_surface_height - tool_floor_height).max(0.0)
}
