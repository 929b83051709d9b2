use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ornstein_fpk::error::{Error, Result};
use ornstein_fpk::fpk::{
    assemble_disjoint, assemble_overlapping, gaussian_variant, FPKAssembly, Normalization, StageSource, TileMode,
    TilePlan,
};
use ornstein_fpk::grid::GridField;
use ornstein_fpk::mollify::{select_epsilon, SmoothedStep};
use ornstein_fpk::ornstein::{construct_sequence, verify_properties, ConstructionState};
use ornstein_fpk::pipeline::{export_plots, run_pipeline, PipelineConfig};
use ornstein_fpk::rational::{parse_rational, to_f64};
use ornstein_fpk::spectral::{default_alphas, frac_norm, threshold_sweep};
use ornstein_fpk::weakform::{assembly_basis, assembly_residuals, gradient_mass_partial_sums, l2_loggrad_check, with_order};

#[derive(Parser)]
#[command(name = "ornstein-fpk", version, about = "Ornstein-type step functions and the FPK densities built from them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Disjoint,
    Overlapping,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Sup,
    Strict,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Sup => Normalization::Sup,
            NormArg::Strict => Normalization::Strict,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the step-function sequence and check its exact properties.
    Construct {
        #[arg(long, default_value = "1/2")]
        delta: String,
        #[arg(long, default_value_t = 3)]
        stages: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mollify one stage and sample it on a grid.
    Smooth {
        /// Stage JSON written by `construct`.
        #[arg(long)]
        stage: PathBuf,
        #[arg(long, default_value = "1/128")]
        h: String,
        /// Mollifier width; chosen automatically when absent.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tile mollified stages into a density and drift.
    Assemble {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        tiles: usize,
        /// Directory with stage JSON files.
        #[arg(long)]
        stages: PathBuf,
        #[arg(long, default_value = "1/128")]
        h: String,
        #[arg(long, value_enum, default_value = "sup")]
        normalization: NormArg,
        /// Half-width of the Gaussian window.
        #[arg(long, default_value_t = 6.0)]
        window: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weak-form residuals and related checks for an assembly.
    Verify {
        #[arg(long)]
        assembly: PathBuf,
        /// The same assembly at twice the spacing, for the convergence order.
        #[arg(long)]
        coarse: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 1.8)]
        min_order: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fractional Sobolev norms of a density field.
    Probe {
        #[arg(long)]
        rho: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        r: f64,
        /// Sweep alpha over 0, 0.05, ..., 1.
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline from a key = value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write plot-ready CSV files for a completed run.
    Export {
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse_spacing(s: &str) -> Result<f64> {
    let h = if s.contains('/') {
        to_f64(&parse_rational(s)?)
    } else {
        s.parse::<f64>().map_err(|_| Error::Parameter(format!("bad spacing {s:?}")))?
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("spacing must be positive, got {s}")));
    }
    Ok(h)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_stages(dir: &Path) -> Result<Vec<StageSource>> {
    let mut states: Vec<ConstructionState> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if name.starts_with("stage_") && name.ends_with(".json") {
            states.push(serde_json::from_str(&std::fs::read_to_string(&path)?)?);
        }
    }
    if states.is_empty() {
        return Err(Error::MissingArtifacts(vec![format!("{}/stage_*.json", dir.display())]));
    }
    states.sort_by_key(|s| s.n);
    states.iter().map(StageSource::prepare).collect()
}

/// Returns whether every check passed.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Construct { delta, stages, out } => {
            let delta = parse_rational(&delta)?;
            let states = construct_sequence(&delta, stages)?;
            std::fs::create_dir_all(&out)?;
            let mut reports = Vec::new();
            for s in &states {
                write_json(&out.join(format!("stage_{}.json", s.n)), s)?;
                reports.push(verify_properties(s)?);
            }
            write_json(&out.join("report.json"), &reports)?;
            Ok(reports.iter().all(|r| r.all_pass()))
        }
        Command::Smooth { stage, h, eps, out } => {
            let h = parse_spacing(&h)?;
            let state: ConstructionState = serde_json::from_str(&std::fs::read_to_string(&stage)?)?;
            let eps = match eps {
                Some(e) => e,
                None => select_epsilon(&state.p, to_f64(&verify_properties(&state)?.norm_ratio))?.epsilon,
            };
            let smooth = SmoothedStep::new(&state.p, eps)?;
            let report = smooth.norm_report()?;
            let q = smooth.sample_q_on(&smooth.default_grid(h)?);
            std::fs::create_dir_all(&out)?;
            q.save(&out.join("q.csv"))?;
            write_json(&out.join("report.json"), &serde_json::json!({ "stage": state.n, "epsilon": eps, "report": report }))?;
            Ok(true)
        }
        Command::Assemble { mode, tiles, stages, h, normalization, window, out } => {
            let h = parse_spacing(&h)?;
            let stages = load_stages(&stages)?;
            let norm = normalization.into();
            let asm = match mode {
                Mode::Disjoint => assemble_disjoint(&TilePlan::disjoint(tiles)?, &stages, h, norm)?,
                Mode::Overlapping => assemble_overlapping(&TilePlan::overlapping(tiles)?, &stages, h, norm)?,
                Mode::Gaussian => {
                    let w = assemble_disjoint(&TilePlan::disjoint(1)?, &stages, h, norm)?;
                    gaussian_variant(&w.rho, &w.v_x, &w.v_y, window)?
                }
            };
            asm.save(&out)?;
            Ok(true)
        }
        Command::Verify { assembly, coarse, tolerance, min_order, out } => {
            let asm = FPKAssembly::load(&assembly)?;
            let basis = assembly_basis(&asm);
            let mut residuals = assembly_residuals(&asm, &basis)?;
            if let Some(dir) = coarse {
                let c = FPKAssembly::load(&dir)?;
                residuals = with_order(residuals, &assembly_residuals(&c, &basis)?);
            }
            let mut ok = residuals.max_normalized <= tolerance;
            if let Some(order) = residuals.order {
                ok &= order >= min_order;
            }
            let mut report = serde_json::json!({
                "h": asm.h(),
                "mass": asm.mass(),
                "min_density": asm.rho.min(),
                "flux_l1": asm.flux_l1(),
                "weighted_drift_l1": asm.weighted_drift_l1(),
                "residuals": residuals,
            });
            if asm.rho.min() > 0.0 {
                let (lhs, rhs) = l2_loggrad_check(&asm.rho, &asm.b_x, &asm.b_y)?;
                report["loggrad"] = serde_json::json!({ "lhs": lhs, "rhs": rhs });
            }
            if let Some(plan) = asm.recipe.plan.as_ref().filter(|p| p.mode == TileMode::Overlapping) {
                let counts: Vec<usize> = (1..=plan.tiles.len()).collect();
                let gm = gradient_mass_partial_sums(&asm.rho, plan, asm.normalization, 0.9, &counts);
                ok &= gm.holds;
                report["gradient_mass"] = serde_json::to_value(gm)?;
            }
            report["passed"] = ok.into();
            write_json(&out, &report)?;
            Ok(ok)
        }
        Command::Probe { rho, r, sweep, alpha, out } => {
            let file = std::fs::File::open(&rho).map_err(|_| Error::MissingArtifacts(vec![rho.display().to_string()]))?;
            let rho = GridField::read_csv(BufReader::new(file))?;
            if sweep {
                let curve = threshold_sweep(&rho, r, &default_alphas())?;
                match out {
                    Some(path) => std::fs::write(path, curve.to_csv())?,
                    None => print!("{}", curve.to_csv()),
                }
            } else {
                let value = serde_json::json!({ "r": r, "alpha": alpha, "norm": frac_norm(&rho, r, alpha)? });
                match out {
                    Some(path) => write_json(&path, &value)?,
                    None => println!("{value}"),
                }
            }
            Ok(true)
        }
        Command::Run { config } => {
            let config = PipelineConfig::load(&config)?;
            let manifest = run_pipeline(&config)?;
            for c in manifest.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {} {}", c.name, c.detail);
            }
            Ok(manifest.passed)
        }
        Command::Export { run } => {
            for path in export_plots(&run)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse(_)
        | Error::Parameter(_)
        | Error::Domain(_)
        | Error::Resolution(_)
        | Error::MissingArtifacts(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
