//! File emission: CSV tables and portable graymaps.
//!
//! All text output is ASCII, newline-terminated, header-row CSV with `.`
//! decimal points; floats use Rust's shortest round-trip formatting so
//! identical data always serializes to identical bytes. Graymaps are binary
//! P5, 8-bit for phase rasters and 16-bit big-endian for height maps.

use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::analysis::Profile;
use crate::error::{Error, Result};
use crate::kinematics::ToothPass;
use crate::material::GrainMap;
use crate::surface::{ChipSegment, HeightMap, Provenance};

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Height grid as CSV: header row `y_um` followed by the x coordinates,
/// then one row per y with the heights in micrometres.
pub fn write_heightmap_csv<W: Write>(hm: &HeightMap, mut w: W) -> std::io::Result<()> {
    write!(w, "y_um")?;
    for ix in 0..hm.nx {
        write!(w, ",{}", hm.x(ix))?;
    }
    writeln!(w)?;
    for iy in 0..hm.ny {
        write!(w, "{}", hm.y(iy))?;
        for ix in 0..hm.nx {
            write!(w, ",{}", hm.height_at(ix, iy))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a height grid written by [`write_heightmap_csv`]. The CSV does not
/// carry provenance, so every cell reads back as `Uncut`.
pub fn read_heightmap_csv<R: BufRead>(r: R) -> Result<HeightMap> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid("heightmap csv is empty"))?
        .1
        .map(|l| (0, l))
        .map_err(Error::Io)?;
    let mut fields = header.split(',');
    if fields.next() != Some("y_um") {
        return Err(Error::invalid(
            "heightmap csv must start with a y_um header",
        ));
    }
    let xs: Vec<f64> = fields
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad x coordinate {f:?} in heightmap csv")))
        })
        .collect::<Result<_>>()?;
    if xs.len() < 2 {
        return Err(Error::invalid("heightmap csv needs at least two columns"));
    }
    // Full-span estimate averages out the last-digit noise of individual
    // printed coordinates.
    let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if !(dx > 0.0) || xs.windows(2).any(|w| (w[1] - w[0] - dx).abs() > 1e-9) {
        return Err(Error::invalid(
            "heightmap csv x coordinates are not uniform",
        ));
    }

    let mut ys = Vec::new();
    let mut heights = Vec::new();
    for (line_no, line) in lines {
        let line = line.map_err(Error::Io)?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let y = fields
            .next()
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| Error::invalid(format!("line {}: bad y value", line_no + 1)))?;
        ys.push(y);
        let row: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("line {}: bad height {f:?}", line_no + 1)))
            })
            .collect::<Result<_>>()?;
        if row.len() != xs.len() {
            return Err(Error::invalid(format!(
                "line {}: expected {} heights, got {}",
                line_no + 1,
                xs.len(),
                row.len()
            )));
        }
        heights.extend(row);
    }
    if ys.is_empty() {
        return Err(Error::invalid("heightmap csv has no data rows"));
    }
    let dy = if ys.len() >= 2 {
        (ys[ys.len() - 1] - ys[0]) / (ys.len() - 1) as f64
    } else {
        2.0 * ys[0]
    };
    if !(dy > 0.0) || ys.windows(2).any(|w| (w[1] - w[0] - dy).abs() > 1e-9) {
        return Err(Error::invalid(
            "heightmap csv y coordinates are not uniform",
        ));
    }
    let (nx, ny) = (xs.len(), ys.len());
    Ok(HeightMap {
        nx,
        ny,
        dx,
        dy,
        heights,
        provenance: vec![Provenance::Uncut; nx * ny],
    })
}

/// 16-bit binary P5 graymap of the heights, scaled linearly so the minimum
/// maps to 0 and the maximum to 65535 (a flat map writes all zeros). Row 0
/// of the image is y = 0. Returns `(min, max)` for the scale sidecar.
pub fn write_heightmap_pgm<W: Write>(hm: &HeightMap, mut w: W) -> std::io::Result<(f64, f64)> {
    let min = hm.heights.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = hm.heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    write!(w, "P5\n{} {}\n65535\n", hm.nx, hm.ny)?;
    let mut row = Vec::with_capacity(hm.nx * 2);
    for iy in 0..hm.ny {
        row.clear();
        for ix in 0..hm.nx {
            let level = if span > 0.0 {
                ((hm.height_at(ix, iy) - min) / span * 65535.0).round() as u16
            } else {
                0
            };
            row.extend_from_slice(&level.to_be_bytes());
        }
        w.write_all(&row)?;
    }
    Ok((min, max))
}

/// Sidecar describing the scaling of a height graymap.
pub fn heightmap_scale_text(min: f64, max: f64) -> String {
    format!(
        "min_um: {min}\nmax_um: {max}\nlevels: 65536\nencoding: P5 16-bit big-endian, \
         gray = round((h - min) / (max - min) * 65535)\nrow_zero: y = 0\n"
    )
}

/// 8-bit binary P5 graymap of the phase raster (phase index scaled to full
/// gray range).
pub fn write_phase_pgm<W: Write>(
    map: &GrainMap,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    mut w: W,
) -> Result<()> {
    let phases = map.rasterize_phases(nx, ny, dx, dy)?;
    let n_phases = map.phases().len();
    write!(w, "P5\n{nx} {ny}\n255\n").map_err(Error::Io)?;
    let scale = |p: u8| -> u8 {
        if n_phases > 1 {
            ((p as usize * 255) / (n_phases - 1)) as u8
        } else {
            0
        }
    };
    for iy in 0..ny {
        let row: Vec<u8> = phases[iy * nx..(iy + 1) * nx]
            .iter()
            .map(|&p| scale(p))
            .collect();
        w.write_all(&row).map_err(Error::Io)?;
    }
    Ok(())
}

/// Profile as `x_um,height_um` rows.
pub fn write_profile_csv<W: Write>(profile: &Profile, mut w: W) -> std::io::Result<()> {
    writeln!(w, "x_um,height_um")?;
    for (i, h) in profile.heights().iter().enumerate() {
        writeln!(w, "{},{}", profile.x(i), h)?;
    }
    Ok(())
}

/// Chip fragments as CSV. Chips extend across the cut width, so each row
/// records the sweep position `x_um` and the fragment's y extent.
pub fn write_chips_csv<W: Write>(
    chips: &[ChipSegment],
    phase_names: &[String],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "pass_index,x_um,start_y_um,end_y_um,length_um,grain_id,phase"
    )?;
    for chip in chips {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            chip.pass_index,
            chip.x,
            chip.y_start,
            chip.y_end,
            chip.length,
            chip.grain_id,
            phase_names.get(chip.phase).map_or("?", |s| s.as_str()),
        )?;
    }
    Ok(())
}

/// Tooth passes as a per-pass debug CSV.
pub fn write_passes_csv<W: Write>(passes: &[ToothPass], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "pass_index,flute_index,center_x_um,samples,h_uncut_nominal_um"
    )?;
    for pass in passes {
        writeln!(
            w,
            "{},{},{},{},{}",
            pass.pass_index,
            pass.flute_index,
            pass.center_x,
            pass.samples.len(),
            pass.samples.first().map_or(0.0, |s| s.h_uncut),
        )?;
    }
    Ok(())
}
