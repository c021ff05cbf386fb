//! Roughness statistics and scale decomposition of surface profiles.
//!
//! The waviness/roughness split is a centred moving average with window
//! truncation at the edges, not a Gaussian metrology filter: it is exactly
//! additive (`waviness + roughness == profile` bit for bit) and has no
//! tuning beyond the cutoff. Values are therefore not comparable with
//! ISO-filtered Ra figures.

use crate::error::{Error, Result};

/// Uniformly sampled height profile, micrometres.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    x0: f64,
    dx: f64,
    heights: Vec<f64>,
}

impl Profile {
    /// Builds a profile from explicit sample positions, validating that x is
    /// strictly increasing and uniform within 1e-9 um.
    pub fn new(xs: &[f64], heights: Vec<f64>) -> Result<Self> {
        if xs.len() != heights.len() {
            return Err(Error::invalid(format!(
                "profile has {} x positions but {} heights",
                xs.len(),
                heights.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::invalid("profile needs at least two samples"));
        }
        let dx = xs[1] - xs[0];
        if !(dx > 0.0) {
            return Err(Error::invalid("profile x must be strictly increasing"));
        }
        for w in xs.windows(2) {
            let step = w[1] - w[0];
            if !(step > 0.0) || (step - dx).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "profile spacing not uniform: {step} vs {dx}"
                )));
            }
        }
        Ok(Profile {
            x0: xs[0],
            dx,
            heights,
        })
    }

    /// Builds a profile from a start position and uniform spacing.
    pub fn from_uniform(x0: f64, dx: f64, heights: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::invalid(format!("spacing must be > 0 um, got {dx}")));
        }
        if heights.is_empty() {
            return Err(Error::invalid("profile needs at least one sample"));
        }
        Ok(Profile { x0, dx, heights })
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    fn mean(&self) -> f64 {
        self.heights.iter().sum::<f64>() / self.heights.len() as f64
    }
}

/// Standard roughness summary of one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughnessReport {
    /// Mean absolute deviation of the roughness component, micrometres.
    pub ra: f64,
    /// RMS deviation of the roughness component, micrometres.
    pub rq: f64,
    /// Mean peak-to-valley over 5 equal sub-lengths, micrometres.
    pub rz: f64,
    /// Mean spacing between detected concave features on the raw profile;
    /// `None` below two features.
    pub mean_feature_spacing: Option<f64>,
    /// Cutoff used for the waviness split; `None` = unfiltered deviations.
    pub cutoff_used: Option<f64>,
}

impl RoughnessReport {
    /// Flat key: value rendering used in report files.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("roughness.ra_um: {}\n", self.ra));
        out.push_str(&format!("roughness.rq_um: {}\n", self.rq));
        out.push_str(&format!("roughness.rz_um: {}\n", self.rz));
        match self.mean_feature_spacing {
            Some(s) => out.push_str(&format!("roughness.mean_feature_spacing_um: {s}\n")),
            None => out.push_str("roughness.mean_feature_spacing_um: none\n"),
        }
        match self.cutoff_used {
            Some(c) => out.push_str(&format!("roughness.cutoff_um: {c}\n")),
            None => out.push_str("roughness.cutoff_um: none\n"),
        }
        out
    }

    /// CSV row (matching [`RoughnessReport::csv_header`]) for sweep runs.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.ra,
            self.rq,
            self.rz,
            self.mean_feature_spacing
                .map_or_else(|| "".to_string(), |s| s.to_string()),
            self.cutoff_used
                .map_or_else(|| "".to_string(), |c| c.to_string()),
        )
    }

    pub fn csv_header() -> &'static str {
        "ra_um,rq_um,rz_um,mean_feature_spacing_um,cutoff_um"
    }
}

/// Spacing statistics of detected concave features.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingStats {
    /// Number of detected features (not spacings).
    pub feature_count: usize,
    /// Centroid-to-centroid spacings, micrometres.
    pub spacings: Vec<f64>,
    /// Mean spacing; `None` below two features.
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
}

/// Splits a profile into waviness (moving-average low-pass, window =
/// `cutoff`) and roughness (the exact remainder). Edge windows truncate.
pub fn scale_decomposition(profile: &Profile, cutoff: f64) -> Result<(Profile, Profile)> {
    if !(cutoff > 2.0 * profile.dx) {
        return Err(Error::invalid(format!(
            "cutoff must exceed twice the sample spacing ({} um), got {cutoff}",
            2.0 * profile.dx
        )));
    }
    let n = profile.heights.len();
    let half = ((cutoff / (2.0 * profile.dx)).round() as usize).max(1);
    // Prefix sums make the truncated-window mean O(1) per sample.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &h in &profile.heights {
        prefix.push(prefix.last().unwrap() + h);
    }
    let mut waviness = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let count = (hi - lo + 1) as f64;
        waviness.push((prefix[hi + 1] - prefix[lo]) / count);
    }
    let roughness: Vec<f64> = profile
        .heights
        .iter()
        .zip(&waviness)
        .map(|(h, w)| h - w)
        .collect();
    Ok((
        Profile {
            x0: profile.x0,
            dx: profile.dx,
            heights: waviness,
        },
        Profile {
            x0: profile.x0,
            dx: profile.dx,
            heights: roughness,
        },
    ))
}

/// Computes Ra / Rq / Rz of the roughness component and the concave feature
/// spacing of the raw profile.
///
/// With `cutoff = Some(c)` the roughness component comes from
/// [`scale_decomposition`]; with `None` the raw mean-removed profile is
/// used, which is the right choice for already-detrended synthetic
/// profiles.
pub fn roughness(
    profile: &Profile,
    cutoff: Option<f64>,
    feature_threshold: f64,
) -> Result<RoughnessReport> {
    if profile.len() < 10 {
        return Err(Error::invalid(format!(
            "roughness needs at least 10 samples, got {}",
            profile.len()
        )));
    }
    let component = match cutoff {
        Some(c) => scale_decomposition(profile, c)?.1,
        None => profile.clone(),
    };
    let mean = component.mean();
    let n = component.len() as f64;
    let ra = component
        .heights
        .iter()
        .map(|h| (h - mean).abs())
        .sum::<f64>()
        / n;
    let rq = (component
        .heights
        .iter()
        .map(|h| (h - mean) * (h - mean))
        .sum::<f64>()
        / n)
        .sqrt();

    // Rz: mean peak-to-valley over 5 equal sub-lengths.
    let len = component.len();
    let mut rz_sum = 0.0;
    for seg in 0..5 {
        let lo = seg * len / 5;
        let hi = ((seg + 1) * len / 5).max(lo + 1);
        let slice = &component.heights[lo..hi];
        let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = slice.iter().cloned().fold(f64::INFINITY, f64::min);
        rz_sum += max - min;
    }

    let spacing = feature_spacing(profile, feature_threshold)?;
    Ok(RoughnessReport {
        ra,
        rq,
        rz: rz_sum / 5.0,
        mean_feature_spacing: spacing.mean,
        cutoff_used: cutoff,
    })
}

/// Detects downward excursions (concaves) below `mean - threshold` on the
/// raw profile and returns the spacings between consecutive feature
/// centroids.
pub fn feature_spacing(profile: &Profile, threshold: f64) -> Result<SpacingStats> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!(
            "feature threshold must be > 0 um, got {threshold}"
        )));
    }
    let level = profile.mean() - threshold;
    let mut centroids = Vec::new();
    let mut run: Option<(f64, usize)> = None; // (sum of x, samples)
    for (i, &h) in profile.heights.iter().enumerate() {
        if h < level {
            let (sum, count) = run.unwrap_or((0.0, 0));
            run = Some((sum + profile.x(i), count + 1));
        } else if let Some((sum, count)) = run.take() {
            centroids.push(sum / count as f64);
        }
    }
    if let Some((sum, count)) = run {
        centroids.push(sum / count as f64);
    }

    let spacings: Vec<f64> = centroids.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = (!spacings.is_empty()).then(|| spacings.iter().sum::<f64>() / spacings.len() as f64);
    let std_dev = (spacings.len() >= 2).then(|| {
        let m = mean.unwrap();
        (spacings.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (spacings.len() - 1) as f64)
            .sqrt()
    });
    Ok(SpacingStats {
        feature_count: centroids.len(),
        spacings,
        mean,
        std_dev,
    })
}
