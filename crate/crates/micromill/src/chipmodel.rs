//! Per-grain cutting physics at the tool edge.
//!
//! The chain evaluated here decides, for one grain phase, whether an
//! engagement of depth `h` ploughs or shears, and how high the material
//! springs back after the flank face passes:
//!
//! * friction angle: `beta = arccos(1 / sqrt(1 + mu^2))`
//! * minimum chip thickness: `h_m = r * (1 - cos(pi/4 - beta/2))`
//! * contact stress: `sigma = E * h_m / sqrt(r^2 - (r - h_m)^2)`
//! * elastic recovery: `h_r = h_m` when `sigma < sigma_p`, else
//!   `h_r = h_m - sigma_p * sqrt(r^2 - (r - h_m)^2) / E`
//!
//! `h_m` is strictly decreasing in `mu` and exactly linear in `r`. The
//! recovery branch switch at `sigma == sigma_p` is intentionally a strict
//! inequality and therefore discontinuous; no smoothing is applied.
//!
//! Units: lengths in micrometres, pressures in pascals, angles in radians.
//! All functions are pure; material lookup happens in callers.

use crate::error::{Error, Result};

/// Per-phase constants needed by the cutting-edge chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrainCutParams {
    /// Tool/workpiece friction coefficient of the phase (dimensionless).
    pub friction_mu: f64,
    /// Cutting-edge radius in micrometres.
    pub edge_radius: f64,
    /// Elastic modulus in pascals.
    pub elastic_modulus: f64,
    /// Proportional stress limit in pascals.
    pub proportional_limit: f64,
}

impl GrainCutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.friction_mu >= 0.0) {
            return Err(Error::invalid(format!(
                "friction coefficient must be >= 0, got {}",
                self.friction_mu
            )));
        }
        if !(self.edge_radius > 0.0) {
            return Err(Error::invalid(format!(
                "edge radius must be > 0 um, got {}",
                self.edge_radius
            )));
        }
        if !(self.elastic_modulus > 0.0) {
            return Err(Error::invalid(format!(
                "elastic modulus must be > 0 Pa, got {}",
                self.elastic_modulus
            )));
        }
        if !(self.proportional_limit > 0.0) {
            return Err(Error::invalid(format!(
                "proportional limit must be > 0 Pa, got {}",
                self.proportional_limit
            )));
        }
        Ok(())
    }
}

/// Engagement regime of one sample against one grain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    /// Engagement below the minimum chip thickness: material is compressed
    /// and accumulated, nothing is removed.
    Ploughing,
    /// Engagement at or above the minimum chip thickness: a chip forms and
    /// the surface is renewed at the recovery height.
    Shearing,
}

/// Fully evaluated cutting state of one phase at a given engagement depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipFormationState {
    /// Friction angle in radians, in `[0, pi/2)`.
    pub beta: f64,
    /// Minimum chip thickness in micrometres, in `(0, r)`.
    pub h_m: f64,
    /// Compressive contact stress in pascals.
    pub sigma: f64,
    /// Elastic recovery height in micrometres, in `[0, h_m]`.
    pub h_r: f64,
    /// Regime at the queried engagement depth.
    pub mode: CutMode,
}

impl ChipFormationState {
    /// Evaluates the whole chain for `params` at engagement depth
    /// `engagement` (micrometres, >= 0).
    pub fn evaluate(params: &GrainCutParams, engagement: f64) -> Result<Self> {
        params.validate()?;
        if !(engagement >= 0.0) {
            return Err(Error::invalid(format!(
                "engagement depth must be >= 0 um, got {engagement}"
            )));
        }
        let beta = friction_angle(params.friction_mu)?;
        let h_m = min_chip_thickness(params.friction_mu, params.edge_radius)?;
        let sigma = contact_stress(params.elastic_modulus, h_m, params.edge_radius)?;
        let h_r = elastic_recovery(params, h_m)?;
        Ok(ChipFormationState {
            beta,
            h_m,
            sigma,
            h_r,
            mode: classify_engagement(engagement, h_m),
        })
    }
}

/// Friction angle `beta = arccos(1 / sqrt(1 + mu^2))` in radians.
///
/// Analytically equal to `atan(mu)`; the arccos form is kept as the
/// implemented route so the identity can serve as a cross-check.
pub fn friction_angle(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::invalid(format!(
            "friction coefficient must be >= 0, got {mu}"
        )));
    }
    Ok((1.0 / (1.0 + mu * mu).sqrt()).acos())
}

/// Minimum chip thickness `h_m = r * (1 - cos(pi/4 - beta/2))` in
/// micrometres. Strictly decreasing in `mu`, exactly linear in `r`.
pub fn min_chip_thickness(mu: f64, edge_radius: f64) -> Result<f64> {
    if !(edge_radius > 0.0) {
        return Err(Error::invalid(format!(
            "edge radius must be > 0 um, got {edge_radius}"
        )));
    }
    let beta = friction_angle(mu)?;
    Ok(edge_radius * (1.0 - (std::f64::consts::FRAC_PI_4 - beta / 2.0).cos()))
}

/// Compressive contact stress `sigma = E * h_m / sqrt(r^2 - (r - h_m)^2)`
/// in pascals. Requires `0 < h_m < r` so the chord stays real.
pub fn contact_stress(elastic_modulus: f64, h_m: f64, edge_radius: f64) -> Result<f64> {
    if !(elastic_modulus > 0.0) {
        return Err(Error::invalid(format!(
            "elastic modulus must be > 0 Pa, got {elastic_modulus}"
        )));
    }
    let chord = contact_chord(h_m, edge_radius)?;
    Ok(elastic_modulus * h_m / chord)
}

/// Flank contact chord `sqrt(r^2 - (r - h_m)^2)`, shared by the stress and
/// recovery formulas; errors when `h_m` leaves `(0, r)`.
fn contact_chord(h_m: f64, edge_radius: f64) -> Result<f64> {
    if !(h_m > 0.0 && h_m < edge_radius) {
        return Err(Error::Domain(format!(
            "contact chord needs 0 < h_m < r, got h_m = {h_m} um, r = {edge_radius} um"
        )));
    }
    Ok((edge_radius * edge_radius - (edge_radius - h_m) * (edge_radius - h_m)).sqrt())
}

/// Elastic recovery height after the flank face passes, in micrometres.
///
/// Below the proportional limit the grain recovers fully (`h_r = h_m`);
/// at or above it the plastic part stays down and only
/// `sigma_p * chord / E` fails to recover.
pub fn elastic_recovery(params: &GrainCutParams, h_m: f64) -> Result<f64> {
    params.validate()?;
    let chord = contact_chord(h_m, params.edge_radius)?;
    let sigma = params.elastic_modulus * h_m / chord;
    let h_r = if sigma < params.proportional_limit {
        h_m
    } else {
        h_m - params.proportional_limit * chord / params.elastic_modulus
    };
    if h_r < 0.0 {
        return Err(Error::ModelViolation(format!(
            "computed recovery height {h_r} um < 0 (h_m = {h_m} um, sigma = {sigma} Pa)"
        )));
    }
    Ok(h_r)
}

/// Ploughing below `h_m`, shearing at or above it (the tie counts as
/// shearing: once `h_m` is achieved the chip is formed).
pub fn classify_engagement(h: f64, h_m: f64) -> CutMode {
    debug_assert!(h >= 0.0, "engagement depth must be >= 0, got {h}");
    debug_assert!(h_m > 0.0, "minimum chip thickness must be > 0, got {h_m}");
    if h < h_m {
        CutMode::Ploughing
    } else {
        CutMode::Shearing
    }
}
