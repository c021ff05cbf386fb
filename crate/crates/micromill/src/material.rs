//! Two-phase polycrystalline grain map of the workpiece bottom plane.
//!
//! The map is a Voronoi tessellation over seeded grain centres. Equiaxed
//! phases use the plain Euclidean metric; acicular phases stretch the
//! per-grain metric along a random orientation (coordinates divided by the
//! elongation ratio before distance), which produces needle-shaped cells.
//! Every plane point belongs to exactly one grain; ties on cell boundaries
//! go to the lowest grain id so queries are deterministic.
//!
//! Seed densities are calibrated per phase by rebuilding the tessellation
//! until the measured mean linear intercept matches each phase's target.
//! Microstructure is 2D only: grains do not vary with depth over the cut.
//!
//! Lengths are micrometres throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Hard cap on seed count per map; guards against runaway calibration.
const MAX_GRAINS: usize = 2_000_000;
/// Calibration rebuild budget.
const MAX_CAL_ATTEMPTS: usize = 32;
/// Internal calibration tolerance on the measured mean intercept, relative.
/// Much tighter than the 10% contract so accepted maps cluster on the
/// target instead of piling up at the acceptance edge.
const CAL_TOL: f64 = 0.035;
/// Fallback acceptance once the attempt budget is spent. Domains only a few
/// intercepts wide skew the measured soft/brittle ratio through edge
/// truncation and cannot always reach [`CAL_TOL`] on both phases at once;
/// the best realization is still accepted while inside the 10% contract.
const CAL_TOL_FALLBACK: f64 = 0.08;
/// Test lines per direction used by the calibration measurement.
const CAL_LINES: usize = 96;

/// A point on the bottom plane, micrometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Physical constants and microstructure targets of one metal phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub name: String,
    /// Elastic modulus in pascals.
    pub elastic_modulus: f64,
    /// Tool/workpiece friction coefficient.
    pub friction_mu: f64,
    /// Proportional stress limit in pascals.
    pub proportional_limit: f64,
    /// Target mean linear intercept length, micrometres.
    pub target_intercept: f64,
    /// Area fraction of the phase, in (0, 1].
    pub volume_fraction: f64,
    /// Grain aspect ratio; 1 = equiaxed, > 1 = acicular.
    pub elongation_ratio: f64,
}

impl PhaseSpec {
    fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(Error::invalid(format!(
                "phase name must be non-empty [A-Za-z0-9_], got {:?}",
                self.name
            )));
        }
        if !(self.elastic_modulus > 0.0) {
            return Err(Error::invalid(format!(
                "phase '{}': elastic modulus must be > 0 Pa",
                self.name
            )));
        }
        if !(self.friction_mu >= 0.0) {
            return Err(Error::invalid(format!(
                "phase '{}': friction coefficient must be >= 0",
                self.name
            )));
        }
        if !(self.proportional_limit > 0.0) {
            return Err(Error::invalid(format!(
                "phase '{}': proportional limit must be > 0 Pa",
                self.name
            )));
        }
        if !(self.target_intercept > 0.0) {
            return Err(Error::invalid(format!(
                "phase '{}': target intercept must be > 0 um",
                self.name
            )));
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "phase '{}': volume fraction must be in (0, 1], got {}",
                self.name, self.volume_fraction
            )));
        }
        if !(self.elongation_ratio >= 1.0) {
            return Err(Error::invalid(format!(
                "phase '{}': elongation ratio must be >= 1, got {}",
                self.name, self.elongation_ratio
            )));
        }
        Ok(())
    }
}

/// Ordered list of phases making up the workpiece material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub phases: Vec<PhaseSpec>,
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::invalid("material needs at least one phase"));
        }
        let mut total = 0.0;
        for (i, phase) in self.phases.iter().enumerate() {
            phase.validate()?;
            total += phase.volume_fraction;
            if self.phases[..i].iter().any(|p| p.name == phase.name) {
                return Err(Error::invalid(format!(
                    "duplicate phase name '{}'",
                    phase.name
                )));
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "phase volume fractions must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    /// Bundled Al6061 two-phase material: aluminium soft matrix and
    /// acicular silicon brittle phase.
    pub fn al6061() -> Self {
        MaterialSpec {
            phases: vec![
                PhaseSpec {
                    name: "soft".to_string(),
                    elastic_modulus: 70e9,
                    friction_mu: 0.3,
                    proportional_limit: 240e6,
                    target_intercept: 10.238,
                    volume_fraction: 0.85,
                    elongation_ratio: 1.0,
                },
                PhaseSpec {
                    name: "brittle".to_string(),
                    elastic_modulus: 8.7e9,
                    friction_mu: 0.5,
                    proportional_limit: 0.04e6,
                    target_intercept: 1.854,
                    volume_fraction: 0.15,
                    elongation_ratio: 5.0,
                },
            ],
        }
    }
}

/// One grain of the tessellation. The grain id is its index in
/// [`GrainMap::grains`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grain {
    pub phase: usize,
    pub seed: Point,
    /// Stretch-axis angle in radians, unused when `elongation == 1`.
    pub orientation: f64,
    pub elongation: f64,
}

/// Per-phase metadata kept by the map (the spec values the grains were
/// generated from; `target_intercept` is `None` for hand-built maps).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMeta {
    pub name: String,
    pub target_intercept: Option<f64>,
}

/// Mean linear intercept statistics of one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterceptStats {
    /// Mean run length in micrometres; `None` when no run was found.
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` below two runs.
    pub std_dev: Option<f64>,
    pub count: usize,
}

impl InterceptStats {
    fn from_runs(runs: &[f64]) -> Self {
        let count = runs.len();
        if count == 0 {
            return InterceptStats {
                mean: None,
                std_dev: None,
                count: 0,
            };
        }
        let mean = runs.iter().sum::<f64>() / count as f64;
        let std_dev = if count >= 2 {
            let var =
                runs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (count - 1) as f64;
            Some(var.sqrt())
        } else {
            None
        };
        InterceptStats {
            mean: Some(mean),
            std_dev,
            count,
        }
    }
}

/// Cached per-grain metric data, parallel to `grains`.
#[derive(Debug, Clone)]
struct MetricGrain {
    x: f64,
    y: f64,
    cos_o: f64,
    sin_o: f64,
    inv_elong: f64,
}

impl MetricGrain {
    #[inline]
    fn distance_sq(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.x;
        let dy = y - self.y;
        let u = (dx * self.cos_o + dy * self.sin_o) * self.inv_elong;
        let v = -dx * self.sin_o + dy * self.cos_o;
        u * u + v * v
    }
}

/// Uniform-bucket spatial index over grain seeds.
#[derive(Debug, Clone)]
struct SeedIndex {
    bucket: f64,
    nbx: usize,
    nby: usize,
    cells: Vec<Vec<u32>>,
}

impl SeedIndex {
    fn build(width: f64, height: f64, grains: &[Grain]) -> Self {
        // Aim for a couple of seeds per bucket.
        let area = width * height;
        let raw = (2.0 * area / grains.len() as f64).sqrt();
        let bucket = raw.clamp(1e-6, width.max(height));
        let nbx = ((width / bucket).ceil() as usize).max(1);
        let nby = ((height / bucket).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nbx * nby];
        for (id, g) in grains.iter().enumerate() {
            let bx = ((g.seed.x / bucket) as usize).min(nbx - 1);
            let by = ((g.seed.y / bucket) as usize).min(nby - 1);
            cells[by * nbx + bx].push(id as u32);
        }
        SeedIndex {
            bucket,
            nbx,
            nby,
            cells,
        }
    }
}

/// Deterministic two-phase grain tessellation of a rectangular domain.
#[derive(Debug, Clone)]
pub struct GrainMap {
    width: f64,
    height: f64,
    rng_seed: u64,
    phases: Vec<PhaseMeta>,
    grains: Vec<Grain>,
    metric: Vec<MetricGrain>,
    index: SeedIndex,
    max_elongation: f64,
}

impl GrainMap {
    /// Builds a calibrated map: seed densities are iterated until the
    /// measured mean intercept of every phase lands within the internal
    /// tolerance of its target; when a small domain's truncation skew
    /// blocks that, the best realization inside the 10% contract is
    /// returned instead, and anything worse is a calibration error.
    ///
    /// Deterministic for fixed `(spec, width, height, seed)`.
    pub fn build(spec: &MaterialSpec, width: f64, height: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::invalid(format!(
                "domain must be positive, got {width} x {height} um"
            )));
        }

        let mut densities: Vec<f64> = spec.phases.iter().map(initial_density).collect();

        // Single phase: intercept runs span whole test lines regardless of
        // seed density, so there is nothing to calibrate against.
        if spec.phases.len() == 1 {
            return Self::realize(spec, width, height, seed, 0, &densities);
        }

        let step = spec
            .phases
            .iter()
            .map(|p| p.target_intercept)
            .fold(f64::INFINITY, f64::min)
            / 5.0;

        // Two knobs with mostly decoupled effects: the matrix (largest
        // fraction) density sets the structure scale, every other phase's
        // density steers its area fraction. Chasing each phase's intercept
        // with its own density diverges for the needle phase, whose chord
        // is set by the matrix spacing, not by its own seed count.
        let matrix = spec
            .phases
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.volume_fraction.total_cmp(&b.1.volume_fraction))
            .map(|(i, _)| i)
            .unwrap();

        // (phase index, measured mean, relative error) of the worst phase,
        // and the best whole realization seen so far.
        let mut worst: Option<(usize, f64, f64)> = None;
        let mut best: Option<(GrainMap, usize, f64, f64)> = None;
        for attempt in 0..MAX_CAL_ATTEMPTS {
            let map = Self::realize(spec, width, height, seed, attempt, &densities)?;
            let runs = map.intercept_runs_isotropic(CAL_LINES, step)?;

            let measured: Vec<Option<f64>> = runs
                .iter()
                .map(|r| InterceptStats::from_runs(r).mean)
                .collect();
            let totals: Vec<f64> = runs.iter().map(|r| r.iter().sum::<f64>()).collect();
            let grand_total: f64 = totals.iter().sum();

            let mut all_ok = true;
            worst = None;
            let mut log_scale = 0.0;
            for (i, phase) in spec.phases.iter().enumerate() {
                match measured[i] {
                    Some(m) => {
                        let rel = (m - phase.target_intercept).abs() / phase.target_intercept;
                        if worst.is_none_or(|(_, _, w)| rel > w) {
                            worst = Some((i, m, rel));
                        }
                        if rel > CAL_TOL {
                            all_ok = false;
                        }
                        log_scale += (m / phase.target_intercept).ln();
                    }
                    None => {
                        all_ok = false;
                        worst = Some((i, 0.0, f64::INFINITY));
                    }
                }
            }
            if all_ok {
                return Ok(map);
            }
            if let Some((i, m, rel)) = worst {
                if best.as_ref().is_none_or(|&(_, _, _, b)| rel < b) {
                    best = Some((map, i, m, rel));
                }
            }

            // Geometric-mean intercept error: > 1 means the structure is
            // too coarse everywhere, so every density rises by its square.
            let scale = (log_scale / spec.phases.len() as f64).exp();
            let scale_factor = (scale * scale).clamp(0.25, 4.0);
            for (i, phase) in spec.phases.iter().enumerate() {
                if measured[i].is_none() {
                    densities[i] *= 4.0;
                    continue;
                }
                let mut factor = scale_factor;
                if i != matrix && grand_total > 0.0 {
                    let line_fraction = totals[i] / grand_total;
                    if line_fraction > 0.0 {
                        factor *= phase.volume_fraction / line_fraction;
                    }
                }
                densities[i] *= factor.clamp(0.25, 4.0);
            }
        }

        match best {
            Some((map, _, _, rel)) if rel <= CAL_TOL_FALLBACK => Ok(map),
            Some((_, phase_idx, achieved, _)) => Err(Error::Calibration {
                phase: spec.phases[phase_idx].name.clone(),
                target: spec.phases[phase_idx].target_intercept,
                achieved,
                iterations: MAX_CAL_ATTEMPTS,
            }),
            None => {
                let (phase_idx, achieved, _) = worst.unwrap_or((0, 0.0, f64::INFINITY));
                Err(Error::Calibration {
                    phase: spec.phases[phase_idx].name.clone(),
                    target: spec.phases[phase_idx].target_intercept,
                    achieved,
                    iterations: MAX_CAL_ATTEMPTS,
                })
            }
        }
    }

    /// One uncalibrated realization at the given per-phase seed densities.
    fn realize(
        spec: &MaterialSpec,
        width: f64,
        height: f64,
        seed: u64,
        attempt: usize,
        densities: &[f64],
    ) -> Result<Self> {
        let area = width * height;
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (attempt as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut grains = Vec::new();
        for (phase_idx, phase) in spec.phases.iter().enumerate() {
            let count = ((densities[phase_idx] * area).round() as usize).max(1);
            if grains.len() + count > MAX_GRAINS {
                return Err(Error::invalid(format!(
                    "grain budget exceeded: {} seeds requested (domain too large for the \
                     target intercepts)",
                    grains.len() + count
                )));
            }
            for _ in 0..count {
                let x = rng.random_range(0.0..width);
                let y = rng.random_range(0.0..height);
                let orientation = if phase.elongation_ratio > 1.0 {
                    rng.random_range(0.0..std::f64::consts::PI)
                } else {
                    0.0
                };
                grains.push(Grain {
                    phase: phase_idx,
                    seed: Point::new(x, y),
                    orientation,
                    elongation: phase.elongation_ratio,
                });
            }
        }
        let phases = spec
            .phases
            .iter()
            .map(|p| PhaseMeta {
                name: p.name.clone(),
                target_intercept: Some(p.target_intercept),
            })
            .collect();
        Self::from_grains(width, height, phases, grains, seed)
    }

    /// Builds a map directly from explicit grains; used by deserialization
    /// and by tests that need exact constructions (stripes, two-seed
    /// bisectors, fixed-orientation needles).
    pub fn from_grains(
        width: f64,
        height: f64,
        phases: Vec<PhaseMeta>,
        grains: Vec<Grain>,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::invalid(format!(
                "domain must be positive, got {width} x {height} um"
            )));
        }
        if grains.is_empty() {
            return Err(Error::invalid("grain map needs at least one grain"));
        }
        if phases.is_empty() {
            return Err(Error::invalid("grain map needs at least one phase"));
        }
        for (id, g) in grains.iter().enumerate() {
            if g.phase >= phases.len() {
                return Err(Error::invalid(format!(
                    "grain {id} references phase {} but only {} phases exist",
                    g.phase,
                    phases.len()
                )));
            }
            if !(g.elongation >= 1.0) {
                return Err(Error::invalid(format!(
                    "grain {id}: elongation must be >= 1, got {}",
                    g.elongation
                )));
            }
            if !(0.0..=width).contains(&g.seed.x) || !(0.0..=height).contains(&g.seed.y) {
                return Err(Error::invalid(format!(
                    "grain {id} seed ({}, {}) outside domain",
                    g.seed.x, g.seed.y
                )));
            }
        }
        let metric = grains
            .iter()
            .map(|g| MetricGrain {
                x: g.seed.x,
                y: g.seed.y,
                cos_o: g.orientation.cos(),
                sin_o: g.orientation.sin(),
                inv_elong: 1.0 / g.elongation,
            })
            .collect();
        let index = SeedIndex::build(width, height, &grains);
        let max_elongation = grains.iter().map(|g| g.elongation).fold(1.0, f64::max);
        Ok(GrainMap {
            width,
            height,
            rng_seed,
            phases,
            grains,
            metric,
            index,
            max_elongation,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn grains(&self) -> &[Grain] {
        &self.grains
    }

    pub fn phases(&self) -> &[PhaseMeta] {
        &self.phases
    }

    fn check_in_domain(&self, x: f64, y: f64) -> Result<()> {
        if !(0.0..=self.width).contains(&x) || !(0.0..=self.height).contains(&y) {
            return Err(Error::invalid(format!(
                "point ({x}, {y}) outside domain {} x {} um",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Id of the grain owning `(x, y)`; boundary ties go to the lowest id.
    pub fn grain_at(&self, x: f64, y: f64) -> Result<u32> {
        self.check_in_domain(x, y)?;
        Ok(self.nearest_grain(x, y))
    }

    /// Phase index of the grain owning `(x, y)`.
    pub fn phase_at(&self, x: f64, y: f64) -> Result<usize> {
        Ok(self.grains[self.grain_at(x, y)? as usize].phase)
    }

    /// True iff the two points belong to different grains. Callers sample
    /// at steps no larger than their declared sampling step so a crossing
    /// cannot jump over a full grain.
    pub fn crosses_grain_boundary(&self, p1: Point, p2: Point) -> Result<bool> {
        Ok(self.grain_at(p1.x, p1.y)? != self.grain_at(p2.x, p2.y)?)
    }

    fn nearest_grain(&self, x: f64, y: f64) -> u32 {
        let idx = &self.index;
        let bx = ((x / idx.bucket) as usize).min(idx.nbx - 1);
        let by = ((y / idx.bucket) as usize).min(idx.nby - 1);
        let k2 = self.max_elongation * self.max_elongation;
        let mut best_d2 = f64::INFINITY;
        let mut best_id = u32::MAX;
        let max_ring = idx.nbx.max(idx.nby);
        for ring in 0..=max_ring {
            if best_id != u32::MAX {
                // Any seed this far out has Euclidean distance of at least
                // (ring - 1) buckets, hence metric distance >= that / k_max.
                let reach = (ring as f64 - 1.0).max(0.0) * idx.bucket;
                if reach * reach > best_d2 * k2 {
                    break;
                }
            }
            self.visit_ring(bx, by, ring, |gid| {
                let d2 = self.metric[gid as usize].distance_sq(x, y);
                if d2 < best_d2 || (d2 == best_d2 && gid < best_id) {
                    best_d2 = d2;
                    best_id = gid;
                }
            });
        }
        best_id
    }

    fn visit_ring(&self, bx: usize, by: usize, ring: usize, mut f: impl FnMut(u32)) {
        let idx = &self.index;
        let (nbx, nby) = (idx.nbx as isize, idx.nby as isize);
        let (bx, by, r) = (bx as isize, by as isize, ring as isize);
        let mut visit_cell = |cx: isize, cy: isize| {
            if cx < 0 || cy < 0 || cx >= nbx || cy >= nby {
                return;
            }
            for &gid in &idx.cells[(cy * nbx + cx) as usize] {
                f(gid);
            }
        };
        if ring == 0 {
            visit_cell(bx, by);
            return;
        }
        for cx in (bx - r)..=(bx + r) {
            visit_cell(cx, by - r);
            visit_cell(cx, by + r);
        }
        for cy in (by - r + 1)..=(by + r - 1) {
            visit_cell(bx - r, cy);
            visit_cell(bx + r, cy);
        }
    }

    /// Mean linear intercept of `phase` along `n_lines` parallel test lines
    /// in the given direction, sampled every `step` micrometres. Runs
    /// truncated by the domain boundary are included.
    pub fn measure_intercept_length(
        &self,
        phase: usize,
        direction: (f64, f64),
        n_lines: usize,
        step: f64,
    ) -> Result<InterceptStats> {
        if phase >= self.phases.len() {
            return Err(Error::invalid(format!(
                "phase index {phase} out of range ({} phases)",
                self.phases.len()
            )));
        }
        let runs = self.intercept_runs(direction, n_lines, step)?;
        Ok(InterceptStats::from_runs(&runs[phase]))
    }

    /// Intercept statistics pooled over horizontal and vertical lines
    /// (`n_lines` each), the isotropic measure used for calibration.
    pub fn measure_intercept_isotropic(
        &self,
        phase: usize,
        n_lines: usize,
        step: f64,
    ) -> Result<InterceptStats> {
        if phase >= self.phases.len() {
            return Err(Error::invalid(format!(
                "phase index {phase} out of range ({} phases)",
                self.phases.len()
            )));
        }
        let runs = self.intercept_runs_isotropic(n_lines, step)?;
        Ok(InterceptStats::from_runs(&runs[phase]))
    }

    fn intercept_runs_isotropic(&self, n_lines: usize, step: f64) -> Result<Vec<Vec<f64>>> {
        let mut runs = self.intercept_runs((1.0, 0.0), n_lines, step)?;
        let vertical = self.intercept_runs((0.0, 1.0), n_lines, step)?;
        for (pooled, extra) in runs.iter_mut().zip(vertical) {
            pooled.extend(extra);
        }
        Ok(runs)
    }

    /// Run lengths of every phase along parallel test lines; shared by the
    /// public measurement and the calibration loop.
    fn intercept_runs(
        &self,
        direction: (f64, f64),
        n_lines: usize,
        step: f64,
    ) -> Result<Vec<Vec<f64>>> {
        if n_lines < 1 {
            return Err(Error::invalid("need at least one test line"));
        }
        if !(step > 0.0) {
            return Err(Error::invalid(format!("step must be > 0 um, got {step}")));
        }
        if let Some(min_target) = self
            .phases
            .iter()
            .filter_map(|p| p.target_intercept)
            .fold(None, |acc: Option<f64>, t| {
                Some(acc.map_or(t, |a| a.min(t)))
            })
        {
            if step > min_target / 4.0 {
                return Err(Error::invalid(format!(
                    "step {step} um exceeds a quarter of the smallest target intercept \
                     ({min_target} um)"
                )));
            }
        }
        let norm = (direction.0 * direction.0 + direction.1 * direction.1).sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("direction must be a non-zero vector"));
        }
        let (dx, dy) = (direction.0 / norm, direction.1 / norm);
        // Perpendicular axis along which the lines are stacked.
        let (nx, ny) = (-dy, dx);
        let corners = [
            (0.0, 0.0),
            (self.width, 0.0),
            (0.0, self.height),
            (self.width, self.height),
        ];
        let offsets: Vec<f64> = corners.iter().map(|&(cx, cy)| cx * nx + cy * ny).collect();
        let o_min = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
        let o_max = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let line_runs: Vec<Vec<Vec<f64>>> = (0..n_lines)
            .into_par_iter()
            .map(|line| {
                let offset = o_min + (line as f64 + 0.5) * (o_max - o_min) / n_lines as f64;
                self.scan_line(offset, (dx, dy), (nx, ny), step)
            })
            .collect();

        let mut runs = vec![Vec::new(); self.phases.len()];
        for per_line in line_runs {
            for (phase, extra) in per_line.into_iter().enumerate() {
                runs[phase].extend(extra);
            }
        }
        Ok(runs)
    }

    /// Phase run lengths along one clipped test line.
    fn scan_line(
        &self,
        offset: f64,
        dir: (f64, f64),
        normal: (f64, f64),
        step: f64,
    ) -> Vec<Vec<f64>> {
        let mut runs = vec![Vec::new(); self.phases.len()];
        let origin = (offset * normal.0, offset * normal.1);
        // Clip origin + t * dir to the domain rectangle.
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, d, hi) in [
            (origin.0, dir.0, self.width),
            (origin.1, dir.1, self.height),
        ] {
            if d.abs() < 1e-15 {
                if !(0.0..=hi).contains(&o) {
                    return runs;
                }
            } else {
                let (a, b) = ((0.0 - o) / d, (hi - o) / d);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 >= t1 {
            return runs;
        }

        let mut current: Option<(usize, usize)> = None; // (phase, samples)
        let mut t = t0 + step / 2.0;
        while t < t1 {
            let x = (origin.0 + t * dir.0).clamp(0.0, self.width);
            let y = (origin.1 + t * dir.1).clamp(0.0, self.height);
            let phase = self.grains[self.nearest_grain(x, y) as usize].phase;
            current = match current {
                Some((p, n)) if p == phase => Some((p, n + 1)),
                Some((p, n)) => {
                    runs[p].push(n as f64 * step);
                    Some((phase, 1))
                }
                None => Some((phase, 1)),
            };
            t += step;
        }
        if let Some((p, n)) = current {
            runs[p].push(n as f64 * step);
        }
        runs
    }

    /// Phase index per cell centre of a `nx x ny` raster, row-major with x
    /// fastest. Cell centres sit at `(i + 0.5) * dx`.
    pub fn rasterize_phases(&self, nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Vec<u8>> {
        if self.phases.len() > u8::MAX as usize {
            return Err(Error::invalid("too many phases to rasterize"));
        }
        let mut cells = vec![0u8; nx * ny];
        cells.par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
            let y = ((iy as f64 + 0.5) * dy).min(self.height);
            for (ix, cell) in row.iter_mut().enumerate() {
                let x = ((ix as f64 + 0.5) * dx).min(self.width);
                *cell = self.grains[self.nearest_grain(x, y) as usize].phase as u8;
            }
        });
        Ok(cells)
    }

    /// Measured area fraction of `phase` on a grid scan with the given step.
    pub fn area_fraction(&self, phase: usize, step: f64) -> Result<f64> {
        if !(step > 0.0) {
            return Err(Error::invalid("step must be > 0 um"));
        }
        let nx = ((self.width / step).round() as usize).max(1);
        let ny = ((self.height / step).round() as usize).max(1);
        let cells =
            self.rasterize_phases(nx, ny, self.width / nx as f64, self.height / ny as f64)?;
        let hits = cells.iter().filter(|&&p| p as usize == phase).count();
        Ok(hits as f64 / cells.len() as f64)
    }

    /// Serializes to the line-oriented text format. Deterministic: the same
    /// map always yields the same bytes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("micromill-grainmap v1\n");
        out.push_str(&format!("domain_um {} {}\n", self.width, self.height));
        out.push_str(&format!("rng_seed {}\n", self.rng_seed));
        out.push_str(&format!("phases {}\n", self.phases.len()));
        for (i, p) in self.phases.iter().enumerate() {
            match p.target_intercept {
                Some(t) => out.push_str(&format!("phase {i} {} {t}\n", p.name)),
                None => out.push_str(&format!("phase {i} {} -\n", p.name)),
            }
        }
        out.push_str(&format!("grains {}\n", self.grains.len()));
        for (id, g) in self.grains.iter().enumerate() {
            out.push_str(&format!(
                "g {id} {} {} {} {} {}\n",
                g.phase, g.seed.x, g.seed.y, g.orientation, g.elongation
            ));
        }
        out
    }

    /// Parses the [`GrainMap::to_text`] format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::invalid(format!("grain map text truncated before {what}")))
        };
        let (n, header) = next("header")?;
        if header != "micromill-grainmap v1" {
            return Err(Error::invalid(format!(
                "line {n}: unrecognized grain map header {header:?}"
            )));
        }
        let parse_f64 = |n: usize, s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::invalid(format!("line {n}: bad {what} {s:?}")))
        };

        let (n, line) = next("domain")?;
        let rest = line
            .strip_prefix("domain_um ")
            .ok_or_else(|| Error::invalid(format!("line {n}: expected domain_um")))?;
        let mut parts = rest.split_whitespace();
        let width = parse_f64(n, parts.next().unwrap_or(""), "domain width")?;
        let height = parse_f64(n, parts.next().unwrap_or(""), "domain height")?;

        let (n, line) = next("rng_seed")?;
        let rng_seed = line
            .strip_prefix("rng_seed ")
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::invalid(format!("line {n}: expected rng_seed")))?;

        let (n, line) = next("phase count")?;
        let n_phases = line
            .strip_prefix("phases ")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::invalid(format!("line {n}: expected phases count")))?;
        let mut phases = Vec::with_capacity(n_phases);
        for _ in 0..n_phases {
            let (n, line) = next("phase entry")?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("phase") {
                return Err(Error::invalid(format!("line {n}: expected phase entry")));
            }
            let _idx = parts.next();
            let name = parts
                .next()
                .ok_or_else(|| Error::invalid(format!("line {n}: phase name missing")))?
                .to_string();
            let target = match parts.next() {
                Some("-") | None => None,
                Some(t) => Some(parse_f64(n, t, "target intercept")?),
            };
            phases.push(PhaseMeta {
                name,
                target_intercept: target,
            });
        }

        let (n, line) = next("grain count")?;
        let n_grains = line
            .strip_prefix("grains ")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::invalid(format!("line {n}: expected grains count")))?;
        let mut grains = Vec::with_capacity(n_grains);
        for _ in 0..n_grains {
            let (n, line) = next("grain entry")?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("g") {
                return Err(Error::invalid(format!("line {n}: expected grain entry")));
            }
            let _id = parts.next();
            let phase = parts
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::invalid(format!("line {n}: bad grain phase")))?;
            let x = parse_f64(n, parts.next().unwrap_or(""), "grain x")?;
            let y = parse_f64(n, parts.next().unwrap_or(""), "grain y")?;
            let orientation = parse_f64(n, parts.next().unwrap_or(""), "grain orientation")?;
            let elongation = parse_f64(n, parts.next().unwrap_or(""), "grain elongation")?;
            grains.push(Grain {
                phase,
                seed: Point::new(x, y),
                orientation,
                elongation,
            });
        }
        Self::from_grains(width, height, phases, grains, rng_seed)
    }
}

/// Initial seed density guess for one phase, from an elliptical-grain chord
/// model: mean chord of an ellipse with axes `(k c, c)` is
/// `pi * area / perimeter`; the calibration loop corrects the rest.
fn initial_density(phase: &PhaseSpec) -> f64 {
    let k = phase.elongation_ratio;
    // Ramanujan perimeter factor for semi-axes (k c, c), divided by pi * c.
    let perim = 3.0 * (k + 1.0) - ((3.0 * k + 1.0) * (k + 3.0)).sqrt();
    let c = phase.target_intercept * perim / (std::f64::consts::PI * k);
    let grain_area = std::f64::consts::PI * k * c * c;
    phase.volume_fraction / grain_area
}
