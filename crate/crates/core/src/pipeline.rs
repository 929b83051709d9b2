//! Configuration, end-to-end run, manifest and CSV export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fpk::{
    assemble_disjoint, assemble_overlapping, gaussian_drift_defect, gaussian_variant, ratio_drift, FPKAssembly,
    Normalization, StageSource, TileMode, TilePlan,
};
use crate::mollify::{select_epsilon, EpsilonChoice};
use crate::ornstein::{construct_sequence, verify_properties, PropertyReport};
use crate::rational::{format_rational, parse_rational, rat, serde_rational, to_f64, Rational};
use crate::spectral::{ball_uniform_bound, default_alphas, ls_norm, threshold_sweep, BallBound, SweepCurve};
use crate::weakform::{
    assembly_basis, assembly_residuals, gradient_mass_partial_sums, l2_loggrad_check, with_order, GradientMassReport,
    ResidualReport,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    pub stages: usize,
    pub h: f64,
    pub tile_mode: TileMode,
    pub tiles: usize,
    /// Half-width of the square window for the Gaussian variant.
    pub gaussian_window: f64,
    pub output: PathBuf,
    pub normalization: Normalization,
    pub probe_r: f64,
    pub residual_tolerance: f64,
    pub min_order: f64,
    pub gradient_margin: f64,
    pub loggrad_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta: rat(1, 2),
            stages: 3,
            h: 1.0 / 128.0,
            tile_mode: TileMode::Overlapping,
            tiles: 9,
            gaussian_window: 6.0,
            output: PathBuf::from("run"),
            normalization: Normalization::Sup,
            probe_r: 1.2,
            residual_tolerance: 1e-3,
            min_order: 1.8,
            gradient_margin: 0.9,
            loggrad_tolerance: 1e-4,
        }
    }
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    if value.contains('/') {
        return parse_rational(value).map(|r| to_f64(&r)).map_err(|_| Error::Config(format!("{key}: bad number {value:?}")));
    }
    value.parse::<f64>().map_err(|_| Error::Config(format!("{key}: bad number {value:?}")))
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value.parse::<usize>().map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got {value:?}")))
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "delta" => c.delta = parse_rational(value).map_err(|_| Error::Config(format!("delta: bad rational {value:?}")))?,
                "stages" => c.stages = parse_count(key, value)?,
                "h" => c.h = parse_real(key, value)?,
                "tile_mode" => {
                    c.tile_mode = match value {
                        "disjoint" => TileMode::Disjoint,
                        "overlapping" => TileMode::Overlapping,
                        _ => return Err(Error::Config(format!("tile_mode: unknown mode {value:?}"))),
                    }
                }
                "tiles" => c.tiles = parse_count(key, value)?,
                "gaussian_window" => c.gaussian_window = parse_real(key, value)?,
                "output" => c.output = PathBuf::from(value),
                "normalization" => {
                    c.normalization = match value {
                        "sup" => Normalization::Sup,
                        "strict" => Normalization::Strict,
                        _ => return Err(Error::Config(format!("normalization: unknown mode {value:?}"))),
                    }
                }
                "probe_r" => c.probe_r = parse_real(key, value)?,
                "residual_tolerance" => c.residual_tolerance = parse_real(key, value)?,
                "min_order" => c.min_order = parse_real(key, value)?,
                "gradient_margin" => c.gradient_margin = parse_real(key, value)?,
                "loggrad_tolerance" => c.loggrad_tolerance = parse_real(key, value)?,
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.delta > rat(0, 1) && self.delta < rat(1, 1)) {
            return bad(format!("delta must lie in (0, 1), got {}", format_rational(&self.delta)));
        }
        if !(1..=4).contains(&self.stages) {
            return bad(format!("stages must be between 1 and 4, got {}", self.stages));
        }
        let k = -self.h.log2();
        if !(self.h > 0.0 && k.fract() == 0.0 && (2.0..=10.0).contains(&k)) {
            return bad(format!("h must be 2^-k with 2 <= k <= 10, got {}", self.h));
        }
        if self.tiles == 0 || self.tiles > 16 {
            return bad(format!("tiles must be between 1 and 16, got {}", self.tiles));
        }
        if self.tile_mode == TileMode::Overlapping {
            let s = (self.tiles as f64).sqrt().round() as usize;
            if s * s != self.tiles {
                return bad(format!("overlapping mode needs a square tile count, got {}", self.tiles));
            }
        }
        if !(3.0..=8.0).contains(&self.gaussian_window) {
            return bad(format!("gaussian_window must lie in [3, 8], got {}", self.gaussian_window));
        }
        if !(self.probe_r > 1.0 && self.probe_r < 2.0) {
            return bad(format!("probe_r must lie in (1, 2), got {}", self.probe_r));
        }
        for (name, v) in [
            ("residual_tolerance", self.residual_tolerance),
            ("min_order", self.min_order),
            ("gradient_margin", self.gradient_margin),
            ("loggrad_tolerance", self.loggrad_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` form (output directory excluded).
    pub fn canonical(&self) -> String {
        let mode = match self.tile_mode {
            TileMode::Disjoint => "disjoint",
            TileMode::Overlapping => "overlapping",
        };
        let norm = match self.normalization {
            Normalization::Sup => "sup",
            Normalization::Strict => "strict",
        };
        format!(
            "delta = {}\nstages = {}\nh = {:e}\ntile_mode = {mode}\ntiles = {}\ngaussian_window = {:e}\nnormalization = {norm}\nprobe_r = {:e}\nresidual_tolerance = {:e}\nmin_order = {:e}\ngradient_margin = {:e}\nloggrad_tolerance = {:e}\n",
            format_rational(&self.delta),
            self.stages,
            self.h,
            self.tiles,
            self.gaussian_window,
            self.probe_r,
            self.residual_tolerance,
            self.min_order,
            self.gradient_margin,
            self.loggrad_tolerance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    /// SHA-256 of the canonical configuration and the package version.
    pub input_hash: String,
    /// Relative artifact path to SHA-256.
    pub artifacts: BTreeMap<String, String>,
    pub stage_seconds: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

struct Run {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
    times: BTreeMap<String, f64>,
    checks: Vec<CheckResult>,
}

impl Run {
    fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.artifacts.insert(rel.to_string(), hex::encode(Sha256::digest(contents)));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(rel, text.as_bytes())
    }

    fn record_dir(&mut self, rel: &str) -> Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(self.root.join(rel))?.collect::<std::io::Result<Vec<_>>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let name = format!("{rel}/{}", e.file_name().to_string_lossy());
            self.artifacts.insert(name, sha256_file(&e.path())?);
        }
        Ok(())
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self).map_err(|e| tag(stage, e))?;
        self.times.insert(stage.to_string(), t.elapsed().as_secs_f64());
        Ok(out)
    }
}

fn tag(stage: &str, e: Error) -> Error {
    match e {
        Error::Assembly(m) => Error::Assembly(format!("[{stage}] {m}")),
        Error::Plan(m) => Error::Plan(format!("[{stage}] {m}")),
        Error::Domain(m) => Error::Domain(format!("[{stage}] {m}")),
        Error::Resolution(m) => Error::Resolution(format!("[{stage}] {m}")),
        Error::SearchExhausted(m) => Error::SearchExhausted(format!("[{stage}] {m}")),
        other => other,
    }
}

/// Per-stage smoothing record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothRecord {
    pub stage: usize,
    pub choice: EpsilonChoice,
    /// Exact step-function counterparts of `xx_l1, yy_l1, x_sup, y_sup`.
    pub step_counterparts: [f64; 4],
    pub contraction_holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub main: ResidualReport,
    pub gaussian: ResidualReport,
    pub gradient_mass: GradientMassReport,
    pub loggrad_lhs: f64,
    pub loggrad_rhs: f64,
    pub gaussian_drift_defect: f64,
    pub drift_weighted_l1: f64,
    pub flux_on_support: f64,
    pub min_density: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub curve: SweepCurve,
    pub l15_norm: f64,
    pub ball: BallBound,
}

fn step_counterparts(p: &PropertyReport) -> [f64; 4] {
    [to_f64(&p.var_x_integral), to_f64(&p.var_y_integral), to_f64(&p.sup_y), to_f64(&p.sup_x)]
}

fn build_main(config: &PipelineConfig, stages: &[StageSource], h: f64) -> Result<(TilePlan, FPKAssembly)> {
    Ok(match config.tile_mode {
        TileMode::Disjoint => {
            let plan = TilePlan::disjoint(config.tiles)?;
            let asm = assemble_disjoint(&plan, stages, h, config.normalization)?;
            (plan, asm)
        }
        TileMode::Overlapping => {
            let plan = TilePlan::overlapping(config.tiles)?;
            let asm = assemble_overlapping(&plan, stages, h, config.normalization)?;
            (plan, asm)
        }
    })
}

fn build_gaussian(config: &PipelineConfig, stages: &[StageSource], h: f64) -> Result<(FPKAssembly, f64)> {
    let plan = TilePlan::disjoint(1)?;
    let compact = assemble_disjoint(&plan, stages, h, config.normalization)?;
    let asm = gaussian_variant(&compact.rho, &compact.v_x, &compact.v_y, config.gaussian_window)?;
    let defect = gaussian_drift_defect(&asm, &compact.rho);
    Ok((asm, defect))
}

/// Runs construct → smooth → assemble → verify → probe → export and writes the
/// manifest. Returns the manifest; `passed` is true iff every check passed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    std::fs::create_dir_all(&config.output)?;
    let mut run = Run { root: config.output.clone(), artifacts: BTreeMap::new(), times: BTreeMap::new(), checks: vec![] };
    run.write("config.txt", config.canonical().as_bytes())?;

    let states = run.timed("construct", |run| {
        let states = construct_sequence(&config.delta, config.stages)?;
        let mut reports = Vec::new();
        for s in &states {
            run.write_json(&format!("construct/stage_{}.json", s.n), s)?;
            reports.push(verify_properties(s)?);
        }
        let ok = reports.iter().all(PropertyReport::all_pass);
        run.checks.push(check("construct.properties", ok, format!("{} stages", reports.len())));
        run.write_json("construct/report.json", &reports)?;
        Ok((states, reports))
    })?;

    let stages = run.timed("smooth", |run| {
        let mut records = Vec::new();
        let mut sources = Vec::new();
        for (s, props) in states.0.iter().zip(&states.1) {
            let choice = select_epsilon(&s.p, to_f64(&props.norm_ratio))?;
            let source = StageSource::with_epsilon(s, choice.epsilon)?;
            let exact = step_counterparts(props);
            let r = &choice.report;
            let ok = [r.xx_l1, r.yy_l1, r.x_sup, r.y_sup].iter().zip(exact).all(|(q, p)| *q <= p + 1e-8);
            records.push(SmoothRecord { stage: s.n, choice, step_counterparts: exact, contraction_holds: ok });
            sources.push(source);
        }
        let contraction = records.iter().all(|r| r.contraction_holds);
        run.checks.push(check("smooth.contraction", contraction, String::new()));
        let ratios: Vec<f64> = records.iter().map(|r| r.choice.report.ratio).collect();
        let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
        run.checks.push(check("smooth.ratio_increasing", increasing, format!("{ratios:?}")));
        run.write_json("smooth/report.json", &records)?;
        Ok(sources)
    })?;

    let (plan, main_fine, main_coarse) = run.timed("assemble", |run| {
        let (plan, fine) = build_main(config, &stages, config.h)?;
        let (_, coarse) = build_main(config, &stages, 2.0 * config.h)?;
        fine.save(&run.root.join("assembly"))?;
        run.record_dir("assembly")?;
        Ok((plan, fine, coarse))
    })?;

    run.timed("verify", |run| {
        let basis = assembly_basis(&main_fine);
        let coarse = assembly_residuals(&main_coarse, &basis)?;
        let main = with_order(assembly_residuals(&main_fine, &basis)?, &coarse);
        let (g_fine, defect) = build_gaussian(config, &stages, config.h)?;
        let (g_coarse, _) = build_gaussian(config, &stages, 2.0 * config.h)?;
        let gbasis = assembly_basis(&g_fine);
        let gc = assembly_residuals(&g_coarse, &gbasis)?;
        drop(g_coarse);
        let gaussian = with_order(assembly_residuals(&g_fine, &gbasis)?, &gc);
        let (lhs, rhs) = l2_loggrad_check(&g_fine.rho, &g_fine.b_x, &g_fine.b_y)?;
        drop(g_fine);
        let counts: Vec<usize> = (1..=config.tiles).collect();
        let gm = gradient_mass_partial_sums(&main_fine.rho, &plan, main_fine.normalization, config.gradient_margin, &counts);
        let drift = ratio_drift(&main_fine.v_x, &main_fine.v_y, &main_fine.rho, 0.0)?;
        let report = VerifyReport {
            main,
            gaussian,
            gradient_mass: gm,
            loggrad_lhs: lhs,
            loggrad_rhs: rhs,
            gaussian_drift_defect: defect,
            drift_weighted_l1: drift.weighted_l1,
            flux_on_support: drift.flux_on_support,
            min_density: main_fine.rho.min(),
            mass: main_fine.mass(),
        };
        let tol = config.residual_tolerance;
        for (name, r) in [("main", &report.main), ("gaussian", &report.gaussian)] {
            run.checks.push(check(
                &format!("verify.{name}.residual"),
                r.max_normalized <= tol,
                format!("{:e} <= {tol:e}", r.max_normalized),
            ));
            let order = r.order.unwrap_or(f64::NAN);
            run.checks.push(check(
                &format!("verify.{name}.order"),
                order >= config.min_order,
                format!("{order:.3} >= {}", config.min_order),
            ));
        }
        if config.tile_mode == TileMode::Overlapping {
            run.checks.push(check("verify.gradient_mass", report.gradient_mass.holds, String::new()));
        }
        run.checks.push(check(
            "verify.loggrad",
            lhs <= rhs * (1.0 + config.loggrad_tolerance),
            format!("{lhs} <= {rhs}"),
        ));
        run.checks.push(check(
            "verify.density",
            report.min_density >= 0.0 && (report.mass - 1.0).abs() <= 1e-8,
            format!("min {:e}, mass {}", report.min_density, report.mass),
        ));
        run.checks.push(check(
            "verify.drift_identity",
            (report.drift_weighted_l1 - report.flux_on_support).abs() <= 1e-8,
            String::new(),
        ));
        run.write_json("verify/report.json", &report)?;
        Ok(())
    })?;
    drop(main_coarse);

    run.timed("probe", |run| {
        let curve = threshold_sweep(&main_fine.rho, config.probe_r, &default_alphas())?;
        let ball = ball_uniform_bound(&main_fine.rho, &main_fine.b_x, &main_fine.b_y, 1.5)?;
        let report = ProbeReport { l15_norm: ls_norm(&main_fine.rho, 1.5)?, curve, ball };
        run.write("probe/curve.csv", report.curve.to_csv().as_bytes())?;
        run.write_json("probe/report.json", &report)?;
        Ok(())
    })?;

    run.timed("export", |run| {
        for path in export_plots(&run.root)? {
            let rel = path.strip_prefix(&run.root).unwrap().to_string_lossy().replace('\\', "/");
            run.artifacts.insert(rel, sha256_file(&path)?);
        }
        Ok(())
    })?;

    let input_hash = hex::encode(Sha256::digest(format!("{}{}", config.canonical(), env!("CARGO_PKG_VERSION")).as_bytes()));
    let passed = run.checks.iter().all(|c| c.passed);
    let manifest = RunManifest {
        config: config.clone(),
        input_hash,
        artifacts: run.artifacts,
        stage_seconds: run.times,
        checks: run.checks,
        passed,
    };
    std::fs::write(config.output.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Writes `exports/ratio_vs_n.csv`, `exports/gradient_mass_vs_n.csv` and
/// `exports/frac_norm_sweep.csv` from a completed run directory.
pub fn export_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let needed = ["smooth/report.json", "verify/report.json", "probe/curve.csv"];
    let missing: Vec<String> = needed.iter().filter(|f| !dir.join(f).exists()).map(|f| f.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let smooth: Vec<SmoothRecord> = serde_json::from_str(&std::fs::read_to_string(dir.join(needed[0]))?)?;
    let verify: VerifyReport = serde_json::from_str(&std::fs::read_to_string(dir.join(needed[1]))?)?;
    let out = dir.join("exports");
    std::fs::create_dir_all(&out)?;

    let mut ratio = String::from("n,epsilon,mixed_l1,denominator,ratio\n");
    for r in &smooth {
        let rep = &r.choice.report;
        let _ = writeln!(ratio, "{},{},{},{},{}", r.stage, r.choice.epsilon, rep.mixed_l1, rep.denominator(), rep.ratio);
    }
    let mut mass = String::from("tiles,gradient_mass,lower_bound\n");
    let gm = &verify.gradient_mass;
    for ((n, s), b) in gm.counts.iter().zip(&gm.sums).zip(&gm.lower_bounds) {
        let _ = writeln!(mass, "{n},{s},{b}");
    }
    let files = [
        (out.join("ratio_vs_n.csv"), ratio),
        (out.join("gradient_mass_vs_n.csv"), mass),
        (out.join("frac_norm_sweep.csv"), std::fs::read_to_string(dir.join(needed[2]))?),
    ];
    let mut written = Vec::new();
    for (path, text) in files {
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
