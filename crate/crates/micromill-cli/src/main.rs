//! `micromill` — batch interface to the grain-aware micro end-milling
//! surface simulator.
//!
//! Exit codes: 0 success, 2 config/argument error, 3 model violation,
//! 4 i/o error.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use micromill::analysis::{feature_spacing, roughness};
use micromill::chipmodel::{ChipFormationState, GrainCutParams};
use micromill::config::{parse_config, ScenarioConfig, AL6061_REFERENCE};
use micromill::export;
use micromill::kinematics::feed_per_tooth;
use micromill::material::GrainMap;
use micromill::scenario::run_scenario;
use micromill::surface::extract_profile;
use micromill::{Error, Result};

#[derive(Parser)]
#[command(
    name = "micromill",
    version,
    about = "Grain-aware bottom-surface simulator for micro end-milling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-phase cutting table (beta, h_m, sigma, h_r, mode).
    Chipmodel {
        /// Scenario config path, or the bundled name `al6061_reference`.
        #[arg(long)]
        config: String,
        /// Engagement depth for the mode column; defaults to the feed per
        /// tooth.
        #[arg(long)]
        engagement_um: Option<f64>,
    },
    /// Build the grain map only; writes grainmap.txt and grainmap.pgm.
    Grainmap {
        #[arg(long)]
        config: String,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full scenario: grain map, surface synthesis, analysis and
    /// file emission.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a per-pass debug CSV.
        #[arg(long)]
        dump_passes: bool,
    },
    /// Re-run profile analysis on an existing heightmap.csv.
    Analyze {
        #[arg(long)]
        config: String,
        /// Height map CSV produced by `simulate`.
        #[arg(long)]
        heightmap: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Chipmodel {
            config,
            engagement_um,
        } => ("chipmodel", chipmodel(&config, engagement_um)),
        Command::Grainmap { config, seed, out } => ("grainmap", grainmap(&config, seed, out)),
        Command::Simulate {
            config,
            seed,
            out,
            dump_passes,
        } => ("simulate", simulate(&config, seed, out, dump_passes)),
        Command::Analyze {
            config,
            heightmap,
            out,
        } => ("analyze", analyze(&config, &heightmap, out)),
    };
    if let Err(err) = result {
        eprintln!("error: {name}: {err}");
        std::process::exit(err.exit_code());
    }
}

fn load_config(spec: &str, seed: Option<u64>, out: Option<PathBuf>) -> Result<ScenarioConfig> {
    let text = if spec == "al6061_reference" {
        AL6061_REFERENCE.to_string()
    } else {
        fs::read_to_string(spec).map_err(|e| Error::Config {
            line: 0,
            message: format!("cannot read config {spec:?}: {e}"),
        })?
    };
    let mut config = parse_config(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    if let Some(warning) = config.tool.edge_radius_warning() {
        eprintln!("warning: {warning}");
    }
    Ok(config)
}

/// Cutting table: quantities as rows, one column per phase, so two
/// material files diff cleanly.
fn chipmodel(config: &str, engagement: Option<f64>) -> Result<()> {
    let config = load_config(config, None, None)?;
    let f_t = feed_per_tooth(&config.tool, &config.milling)?;
    let h = engagement.unwrap_or(f_t);
    let states: Vec<ChipFormationState> = config
        .material
        .phases
        .iter()
        .map(|p| {
            ChipFormationState::evaluate(
                &GrainCutParams {
                    friction_mu: p.friction_mu,
                    edge_radius: config.tool.edge_radius,
                    elastic_modulus: p.elastic_modulus,
                    proportional_limit: p.proportional_limit,
                },
                h,
            )
        })
        .collect::<Result<_>>()?;

    print!("{:<16}", "quantity");
    for phase in &config.material.phases {
        print!("{:>14}", phase.name);
    }
    println!();
    let row = |label: &str, values: Vec<String>| {
        print!("{label:<16}");
        for v in values {
            print!("{v:>14}");
        }
        println!();
    };
    row(
        "E_gpa",
        config
            .material
            .phases
            .iter()
            .map(|p| format!("{}", p.elastic_modulus / 1e9))
            .collect(),
    );
    row(
        "mu",
        config
            .material
            .phases
            .iter()
            .map(|p| format!("{}", p.friction_mu))
            .collect(),
    );
    row(
        "sigma_p_mpa",
        config
            .material
            .phases
            .iter()
            .map(|p| format!("{}", p.proportional_limit / 1e6))
            .collect(),
    );
    row(
        "beta_rad",
        states.iter().map(|s| format!("{:.6}", s.beta)).collect(),
    );
    row(
        "h_m_um",
        states.iter().map(|s| format!("{:.4}", s.h_m)).collect(),
    );
    row(
        "sigma_gpa",
        states
            .iter()
            .map(|s| format!("{:.4}", s.sigma / 1e9))
            .collect(),
    );
    row(
        "h_r_um",
        states.iter().map(|s| format!("{:.4}", s.h_r)).collect(),
    );
    row(
        "mode",
        states.iter().map(|s| format!("{:?}", s.mode)).collect(),
    );
    println!("(mode classified at h = {h} um)");
    Ok(())
}

fn grainmap(config: &str, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(config, seed, out)?;
    let map = GrainMap::build(
        &config.material,
        config.domain.width,
        config.domain.height,
        config.seed,
    )?;
    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join("grainmap.txt"), map.to_text())?;
    let (nx, ny) = config
        .grid
        .dims_for(config.domain.width, config.domain.height)?;
    let mut pgm = Vec::new();
    export::write_phase_pgm(&map, nx, ny, config.grid.dx, config.grid.dy, &mut pgm)?;
    fs::write(config.output_dir.join("grainmap.pgm"), pgm)?;

    println!("grains: {}", map.grains().len());
    let min_intercept = config
        .material
        .phases
        .iter()
        .map(|p| p.target_intercept)
        .fold(f64::INFINITY, f64::min);
    for (i, phase) in config.material.phases.iter().enumerate() {
        let stats = map.measure_intercept_isotropic(i, 64, min_intercept / 5.0)?;
        match stats.mean {
            Some(m) => println!(
                "phase {} measured intercept: {:.4} um (target {})",
                phase.name, m, phase.target_intercept
            ),
            None => println!("phase {} measured intercept: none", phase.name),
        }
    }
    println!("wrote {}", config.output_dir.join("grainmap.txt").display());
    println!("wrote {}", config.output_dir.join("grainmap.pgm").display());
    Ok(())
}

fn simulate(
    config: &str,
    seed: Option<u64>,
    out: Option<PathBuf>,
    dump_passes: bool,
) -> Result<()> {
    let config = load_config(config, seed, out)?;
    let output = run_scenario(&config, dump_passes)?;
    println!("passes: {}", output.surface.pass_count);
    println!("chips: {}", output.surface.chips.len());
    for (name, _) in &output.files {
        println!("wrote {}", output.dir.join(name).display());
    }
    println!("wrote {}", output.dir.join("manifest.txt").display());
    Ok(())
}

fn analyze(config: &str, heightmap: &std::path::Path, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(config, None, out)?;
    let file = fs::File::open(heightmap).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read heightmap {:?}: {e}", heightmap.display()),
        ))
    })?;
    let hm = export::read_heightmap_csv(std::io::BufReader::new(file))?;
    let profile = extract_profile(&hm, hm.ny as f64 * hm.dy / 2.0)?;

    // Same auto threshold rule as a full run: half the recovery contrast.
    let f_t = feed_per_tooth(&config.tool, &config.milling)?;
    let threshold = match config.analysis.threshold {
        Some(t) => t,
        None => {
            let recoveries: Vec<f64> = config
                .material
                .phases
                .iter()
                .map(|p| {
                    ChipFormationState::evaluate(
                        &GrainCutParams {
                            friction_mu: p.friction_mu,
                            edge_radius: config.tool.edge_radius,
                            elastic_modulus: p.elastic_modulus,
                            proportional_limit: p.proportional_limit,
                        },
                        f_t,
                    )
                    .map(|s| s.h_r)
                })
                .collect::<Result<_>>()?;
            let contrast = recoveries.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - recoveries.iter().cloned().fold(f64::INFINITY, f64::min);
            if contrast > 0.0 {
                contrast / 2.0
            } else {
                0.01
            }
        }
    };
    let report = roughness(&profile, Some(config.analysis.cutoff), threshold)?;
    let spacing = feature_spacing(&profile, threshold)?;

    let mut text = String::new();
    text.push_str("micromill-analysis v1\n");
    text.push_str(&format!("heightmap: {}\n", heightmap.display()));
    text.push_str(&format!(
        "grid: {} x {} cells, {:.6} x {:.6} um\n",
        hm.nx, hm.ny, hm.dx, hm.dy
    ));
    text.push_str(&report.to_text());
    text.push_str(&format!("profile.feature_threshold_um: {threshold}\n"));
    text.push_str(&format!(
        "profile.feature_count: {}\n",
        spacing.feature_count
    ));
    match spacing.mean {
        Some(m) => text.push_str(&format!("profile.feature_mean_spacing_um: {m}\n")),
        None => text.push_str("profile.feature_mean_spacing_um: none\n"),
    }

    fs::create_dir_all(&config.output_dir)?;
    fs::write(config.output_dir.join("report.txt"), &text)?;
    print!("{text}");
    println!("wrote {}", config.output_dir.join("report.txt").display());
    Ok(())
}
