//! Assembly of stationary Fokker-Planck-Kolmogorov pairs `(ρ, b)` from the
//! mollified stage functions.
//!
//! Every tile is built from `G = c·g`, with `f = D_y G` and `v = (0, Δ_h G)` taken by
//! central differences. Because those difference operators commute, `Δ_h f = div_h v`
//! holds exactly on the grid, whatever the resolution of `g`.

use std::path::Path;

use num::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::mollify::{select_epsilon, NormReport, SmoothedStep};
use crate::ornstein::{verify_properties, ConstructionState};
use crate::rational::{format_rational, rat, serde_rational, to_f64, Rational};

/// Scale factor from a disjoint tile's plateau square to an overlapping tile's core.
pub const OVERLAP_SHRINK: f64 = 1.0 / 8.0;
/// Relative height of the positivity bump carried by each overlapping tile.
pub const POSITIVITY_BUMP: f64 = 1e-3;

/// A mollified stage ready to be tiled.
#[derive(Clone, Debug)]
pub struct StageSource {
    pub stage: usize,
    pub delta: f64,
    pub smooth: SmoothedStep,
    pub report: NormReport,
}

impl StageSource {
    /// Mollifies a constructed stage with the epsilon found by [`select_epsilon`].
    pub fn prepare(state: &ConstructionState) -> Result<Self> {
        let target = to_f64(&verify_properties(state)?.norm_ratio);
        let choice = select_epsilon(&state.p, target)?;
        Self::with_epsilon(state, choice.epsilon)
    }

    pub fn with_epsilon(state: &ConstructionState, epsilon: f64) -> Result<Self> {
        let smooth = SmoothedStep::new(&state.p, epsilon)?;
        let report = smooth.norm_report()?;
        Ok(Self { stage: state.n, delta: to_f64(&state.delta), smooth, report })
    }
}

/// How a stage function is scaled before it enters tile `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Unit mixed norm and every other norm at most `1/n`.
    Strict,
    /// `‖∂y g‖∞ = 1/(2n)`, so that `f + u_n ≥ 1/(2n)` on the plateau.
    Sup,
}

/// Scale `c` so that `c·g` meets the chosen normalization for tile `n`.
pub fn stage_scale(report: &NormReport, n: usize, mode: Normalization) -> Result<f64> {
    match mode {
        Normalization::Sup => {
            if report.y_sup == 0.0 {
                return Ok(0.0);
            }
            Ok(1.0 / (2.0 * n as f64 * report.y_sup))
        }
        Normalization::Strict => {
            let largest = report.xx_l1.max(report.yy_l1).max(report.x_sup).max(report.y_sup);
            if report.mixed_l1 == 0.0 {
                return Err(Error::Capability { reason: "mixed norm vanishes".into(), max_feasible_n: 0 });
            }
            let feasible = (report.mixed_l1 / largest).floor() as usize;
            if feasible < n {
                return Err(Error::Capability {
                    reason: format!("norm ratio {:.4} cannot give 1/{n} on the remaining norms", report.mixed_l1 / largest),
                    max_feasible_n: feasible,
                });
            }
            Ok(1.0 / report.mixed_l1)
        }
    }
}

/// `f = D_y g` and `v = (0, Δ_h g)`.
#[derive(Clone, Debug)]
pub struct DivergencePair {
    pub f: GridField,
    pub v_x: GridField,
    pub v_y: GridField,
}

pub fn derive_f_v(g: &GridField) -> DivergencePair {
    DivergencePair { f: g.d_y(), v_x: g.zeroed(), v_y: g.laplacian() }
}

/// Quintic smoothstep profile: 1 on `[-1, 1]`, 0 outside `(-2, 2)`.
pub fn plateau(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let s = 2.0 - a;
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

pub fn plateau_slope(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 || a >= 2.0 {
        0.0
    } else {
        let s = 2.0 - a;
        -t.signum() * 30.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

/// `u_n = plateau(x)·plateau(y)/n` with its gradient, centred at the origin.
pub fn bump(n: usize, x: f64, y: f64) -> (f64, f64, f64) {
    let k = 1.0 / n as f64;
    let (px, py) = (plateau(x), plateau(y));
    (k * px * py, k * plateau_slope(x) * py, k * px * plateau_slope(y))
}

/// `w = f + u_n` and `v + ∇u_n` on the grid of `pair`, with the bump centred at
/// `(cx, cy)`.
pub fn bump_correction(pair: &DivergencePair, n: usize, cx: f64, cy: f64) -> DivergencePair {
    let mut out = pair.clone();
    let grid = &pair.f;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let (u, ux, uy) = bump(n, grid.x(i) - cx, grid.y(j) - cy);
            if u != 0.0 || ux != 0.0 || uy != 0.0 {
                out.f.set(i, j, pair.f.get(i, j) + u);
                out.v_x.set(i, j, pair.v_x.get(i, j) + ux);
                out.v_y.set(i, j, pair.v_y.get(i, j) + uy);
            }
        }
    }
    out
}

/// `exp(-1/(1-t²))` on `(-1, 1)` and its derivative.
fn soft_bump(t: f64) -> (f64, f64) {
    if t.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let d = 1.0 - t * t;
    let e = (-1.0 / d).exp();
    (e, -2.0 * t / (d * d) * e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileMode {
    Disjoint,
    Overlapping,
}

/// Tile `index` with support square of half-width `support_half` and core square
/// of half-width `core_half`, both around `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub index: usize,
    #[serde(with = "serde_rational")]
    pub center_x: Rational,
    #[serde(with = "serde_rational")]
    pub center_y: Rational,
    #[serde(with = "serde_rational")]
    pub support_half: Rational,
    #[serde(with = "serde_rational")]
    pub core_half: Rational,
}

impl Tile {
    pub fn center(&self) -> (f64, f64) {
        (to_f64(&self.center_x), to_f64(&self.center_y))
    }

    fn overlaps(&self, other: &Tile) -> bool {
        let reach = &self.support_half + &other.support_half;
        (&self.center_x - &other.center_x).abs() < reach && (&self.center_y - &other.center_y).abs() < reach
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilePlan {
    pub mode: TileMode,
    pub tiles: Vec<Tile>,
    pub weights: Vec<f64>,
    /// Half-width of the square window `[-W, W]²`.
    #[serde(with = "serde_rational")]
    pub window_half: Rational,
}

fn lattice(k: usize, spacing: &Rational) -> Vec<Rational> {
    let mid = rat(k as i64 - 1, 2);
    (0..k).map(|i| (rat(i as i64, 1) - &mid) * spacing).collect()
}

fn side(n: usize) -> usize {
    (1..).find(|k| k * k >= n).unwrap()
}

impl TilePlan {
    /// `n` tiles on a square lattice with spacing 9/2, supports `[-2, 2]²`.
    pub fn disjoint(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Plan("at least one tile is required".into()));
        }
        let k = side(n);
        let spacing = rat(9, 2);
        let coords = lattice(k, &spacing);
        let tiles = (0..n)
            .map(|t| Tile {
                index: t + 1,
                center_x: coords[t % k].clone(),
                center_y: coords[t / k].clone(),
                support_half: rat(2, 1),
                core_half: rat(1, 1),
            })
            .collect();
        let plan = Self {
            mode: TileMode::Disjoint,
            tiles,
            weights: (1..=n).map(|i| 1.0 / i as f64).collect(),
            window_half: rat(k as i64, 1) * spacing / rat(2, 1),
        };
        plan.check()?;
        Ok(plan)
    }

    /// `n = k²` unit cells enlarged by 10%, each carrying a tile shrunk into the
    /// central square of edge 1/2.
    pub fn overlapping(n: usize) -> Result<Self> {
        let k = side(n);
        if n == 0 || k * k != n {
            return Err(Error::Plan(format!("overlapping mode needs a square tile count, got {n}")));
        }
        let coords = lattice(k, &rat(1, 1));
        let tiles = (0..n)
            .map(|t| Tile {
                index: t + 1,
                center_x: coords[t % k].clone(),
                center_y: coords[t / k].clone(),
                support_half: rat(11, 20),
                core_half: rat(1, 4),
            })
            .collect();
        let plan = Self {
            mode: TileMode::Overlapping,
            tiles,
            weights: (1..=n).map(|i| 1.0 / i as f64).collect(),
            window_half: rat(k as i64 - 1, 2) + rat(11, 20),
        };
        plan.check()?;
        Ok(plan)
    }

    /// Disjoint mode: supports pairwise disjoint and inside the window. Overlapping
    /// mode: the open supports cover the open window.
    pub fn check(&self) -> Result<()> {
        for t in &self.tiles {
            let reach = (t.center_x.abs()).max(t.center_y.abs()) + &t.support_half;
            if reach > self.window_half {
                return Err(Error::Plan(format!("tile {} leaves the window", t.index)));
            }
        }
        match self.mode {
            TileMode::Disjoint => {
                for (a, s) in self.tiles.iter().enumerate() {
                    for t in &self.tiles[a + 1..] {
                        if s.overlaps(t) {
                            return Err(Error::Plan(format!("tiles {} and {} overlap", s.index, t.index)));
                        }
                    }
                }
                Ok(())
            }
            TileMode::Overlapping => self.check_coverage(),
        }
    }

    fn check_coverage(&self) -> Result<()> {
        // Candidate uncovered points: corners of the arrangement formed by all square
        // edges and the window edges, nudged into each adjacent open cell.
        let w = &self.window_half;
        let mut cuts = vec![-w.clone(), w.clone()];
        for t in &self.tiles {
            for c in [&t.center_x, &t.center_y] {
                cuts.push(c - &t.support_half);
                cuts.push(c + &t.support_half);
            }
        }
        cuts.retain(|c| c >= &-w.clone() && c <= w);
        cuts.sort();
        cuts.dedup();
        let mids: Vec<Rational> = cuts.windows(2).map(|p| (&p[0] + &p[1]) / rat(2, 1)).collect();
        for x in &mids {
            for y in &mids {
                let covered = self.tiles.iter().any(|t| {
                    (x - &t.center_x).abs() < t.support_half && (y - &t.center_y).abs() < t.support_half
                });
                if !covered {
                    return Err(Error::Plan(format!(
                        "point ({}, {}) is not covered by any tile",
                        format_rational(x),
                        format_rational(y)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn window(&self, h: f64) -> Result<GridField> {
        GridField::centered(to_f64(&self.window_half), h)
    }

    /// Stage used by tile `n` when `available` stages exist.
    pub fn stage_for(n: usize, available: usize) -> usize {
        n.min(available)
    }
}

/// Per-tile bookkeeping in an assembly recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TileRecord {
    pub index: usize,
    pub stage: usize,
    pub epsilon: f64,
    pub stage_scale: f64,
    pub amplitude: f64,
    pub core_gradient_mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recipe {
    pub kind: String,
    pub h: f64,
    pub normalization_mode: Normalization,
    pub plan: Option<TilePlan>,
    pub tiles: Vec<TileRecord>,
    pub bump_profile: String,
    pub notes: Vec<String>,
}

/// A probability density `ρ`, its drift `b`, and the flux `v = bρ` with `Δρ = div v`.
#[derive(Clone, Debug)]
pub struct FPKAssembly {
    pub rho: GridField,
    pub b_x: GridField,
    pub b_y: GridField,
    pub v_x: GridField,
    pub v_y: GridField,
    /// Factor applied to the raw sum to make it a probability density.
    pub normalization: f64,
    pub recipe: Recipe,
}

const FIELD_NAMES: [&str; 5] = ["rho", "b_x", "b_y", "v_x", "v_y"];

impl FPKAssembly {
    fn fields(&self) -> [&GridField; 5] {
        [&self.rho, &self.b_x, &self.b_y, &self.v_x, &self.v_y]
    }

    fn from_density_and_flux(w: GridField, v_x: GridField, v_y: GridField, recipe: Recipe) -> Result<Self> {
        let mass = w.integral();
        if !(mass > 0.0) {
            return Err(Error::Assembly("assembled density has no mass".into()));
        }
        if w.min() < 0.0 {
            return Err(Error::Assembly(format!("assembled density is negative ({})", w.min())));
        }
        let k = 1.0 / mass;
        let (mut rho, mut v_x, mut v_y) = (w, v_x, v_y);
        rho.scale(k);
        v_x.scale(k);
        v_y.scale(k);
        let drift = ratio_drift(&v_x, &v_y, &rho, 0.0)?;
        Ok(Self { rho, b_x: drift.b_x, b_y: drift.b_y, v_x, v_y, normalization: k, recipe })
    }

    pub fn h(&self) -> f64 {
        self.rho.h()
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }

    pub fn flux_l1(&self) -> f64 {
        let h2 = self.h() * self.h();
        self.v_x.values().iter().zip(self.v_y.values()).map(|(a, b)| a.hypot(*b)).sum::<f64>() * h2
    }

    /// `∫|b|ρ`.
    pub fn weighted_drift_l1(&self) -> f64 {
        let h2 = self.h() * self.h();
        let (bx, by, r) = (self.b_x.values(), self.b_y.values(), self.rho.values());
        (0..r.len()).map(|k| bx[k].hypot(by[k]) * r[k]).sum::<f64>() * h2
    }

    /// `∫|∇ρ|` over the square `[cx-a, cx+a] × [cy-a, cy+a]`, central differences.
    pub fn gradient_mass_on(&self, cx: f64, cy: f64, a: f64) -> f64 {
        gradient_mass(&self.rho, cx, cy, a)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, field) in FIELD_NAMES.iter().zip(self.fields()) {
            field.save(&dir.join(format!("{name}.csv")))?;
        }
        let meta = serde_json::json!({ "normalization": self.normalization, "recipe": self.recipe });
        std::fs::write(dir.join("recipe.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let missing: Vec<String> = FIELD_NAMES
            .iter()
            .map(|n| format!("{n}.csv"))
            .chain(std::iter::once("recipe.json".to_string()))
            .filter(|f| !dir.join(f).exists())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingArtifacts(missing));
        }
        let mut fields = FIELD_NAMES.iter().map(|n| GridField::load(&dir.join(format!("{n}.csv"))));
        let mut next = || fields.next().unwrap();
        let (rho, b_x, b_y, v_x, v_y) = (next()?, next()?, next()?, next()?, next()?);
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("recipe.json"))?)?;
        let normalization = meta["normalization"].as_f64().ok_or_else(|| Error::Parse("normalization".into()))?;
        let recipe: Recipe = serde_json::from_value(meta["recipe"].clone())?;
        Ok(Self { rho, b_x, b_y, v_x, v_y, normalization, recipe })
    }
}

pub fn gradient_mass(rho: &GridField, cx: f64, cy: f64, a: f64) -> f64 {
    let h = rho.h();
    let (ox, oy) = rho.origin();
    let lo = |c: f64, o: f64| ((c - a - o) / h).round().max(0.0) as usize;
    let hi = |c: f64, o: f64, n: usize| (((c + a - o) / h).round() as usize).min(n - 1);
    let (i0, i1) = (lo(cx, ox), hi(cx, ox, rho.nx()));
    let (j0, j1) = (lo(cy, oy), hi(cy, oy, rho.ny()));
    let mut s = 0.0;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let gx = (rho.get_padded(i as isize + 1, j as isize) - rho.get_padded(i as isize - 1, j as isize)) / (2.0 * h);
            let gy = (rho.get_padded(i as isize, j as isize + 1) - rho.get_padded(i as isize, j as isize - 1)) / (2.0 * h);
            s += gx.hypot(gy);
        }
    }
    s * h * h
}

/// Drift `b = v/ρ` with the zero-set convention.
#[derive(Clone, Debug)]
pub struct Drift {
    pub b_x: GridField,
    pub b_y: GridField,
    /// `∫|b|ρ`.
    pub weighted_l1: f64,
    /// `∫_{ρ > floor} |v|`.
    pub flux_on_support: f64,
}

pub fn ratio_drift(v_x: &GridField, v_y: &GridField, rho: &GridField, floor: f64) -> Result<Drift> {
    if !(rho.same_geometry(v_x) && rho.same_geometry(v_y)) {
        return Err(Error::Domain("drift fields must share the density grid".into()));
    }
    let (mut b_x, mut b_y) = (rho.zeroed(), rho.zeroed());
    let h2 = rho.h() * rho.h();
    let (mut weighted, mut flux) = (0.0, 0.0);
    let (r, vx, vy) = (rho.values(), v_x.values(), v_y.values());
    for k in 0..r.len() {
        if r[k] > floor {
            let (bx, by) = (vx[k] / r[k], vy[k] / r[k]);
            b_x.values_mut()[k] = bx;
            b_y.values_mut()[k] = by;
            weighted += bx.hypot(by) * r[k];
            flux += vx[k].hypot(vy[k]);
        }
    }
    Ok(Drift { b_x, b_y, weighted_l1: weighted * h2, flux_on_support: flux * h2 })
}

fn tile_grid(window: &GridField, cx: f64, cy: f64, half: f64) -> Result<GridField> {
    let h = window.h();
    let m = (half / h - 1e-9).ceil();
    GridField::zeros(cx - m * h, cy - m * h, h, 2 * m as usize + 1, 2 * m as usize + 1)
}

fn stage_source(stages: &[StageSource], n: usize) -> Result<&StageSource> {
    if stages.is_empty() {
        return Err(Error::Assembly("no stage functions supplied".into()));
    }
    Ok(&stages[TilePlan::stage_for(n, stages.len()) - 1])
}

/// Finite sum `Σ n⁻¹ (f_n + u_n)` over disjoint shifted tiles, normalized.
pub fn assemble_disjoint(plan: &TilePlan, stages: &[StageSource], h: f64, mode: Normalization) -> Result<FPKAssembly> {
    if plan.mode != TileMode::Disjoint {
        return Err(Error::Plan("assemble_disjoint needs a disjoint plan".into()));
    }
    plan.check()?;
    let window = plan.window(h)?;
    let (mut w, mut v_x, mut v_y) = (window.zeroed(), window.zeroed(), window.zeroed());
    let mut records = Vec::new();
    for (tile, &weight) in plan.tiles.iter().zip(&plan.weights) {
        let n = tile.index;
        let src = stage_source(stages, n)?;
        let c = stage_scale(&src.report, n, mode)?;
        let (cx, cy) = tile.center();
        let patch = tile_grid(&window, cx, cy, to_f64(&tile.support_half))?;
        let mut g = src.smooth.sample_g_mapped(&patch, cx, cy, 1.0);
        g.scale(c);
        let pair = bump_correction(&derive_f_v(&g), n, cx, cy);
        if pair.f.min() < 0.0 {
            return Err(Error::Assembly(format!("tile {n}: f + u is negative ({})", pair.f.min())));
        }
        w.add_patch(&pair.f, weight)?;
        v_x.add_patch(&pair.v_x, weight)?;
        v_y.add_patch(&pair.v_y, weight)?;
        records.push(TileRecord {
            index: n,
            stage: src.stage,
            epsilon: src.smooth.epsilon(),
            stage_scale: c,
            amplitude: weight,
            core_gradient_mass: 0.0,
        });
    }
    let recipe = Recipe {
        kind: "disjoint".into(),
        h,
        normalization_mode: mode,
        plan: Some(plan.clone()),
        tiles: records,
        bump_profile: "quintic smoothstep, plateau [-1,1], support [-2,2]".into(),
        notes: vec![],
    };
    let mut asm = FPKAssembly::from_density_and_flux(w, v_x, v_y, recipe)?;
    let core: Vec<f64> = plan
        .tiles
        .iter()
        .map(|t| {
            let (cx, cy) = t.center();
            asm.gradient_mass_on(cx, cy, to_f64(&t.core_half))
        })
        .collect();
    for (r, m) in asm.recipe.tiles.iter_mut().zip(core) {
        r.core_gradient_mass = m;
    }
    Ok(asm)
}

/// One overlapping tile before amplitude scaling: a disjoint tile shrunk into the
/// core square plus a positivity bump filling the whole support square.
fn overlapping_tile(src: &StageSource, tile: &Tile, window: &GridField, mode: Normalization) -> Result<(DivergencePair, f64)> {
    let n = tile.index;
    let (cx, cy) = tile.center();
    let lambda = OVERLAP_SHRINK;
    let half = to_f64(&tile.support_half);
    let patch = tile_grid(window, cx, cy, half)?;
    let c = stage_scale(&src.report, n, mode)?;
    // G = λ c g((x - x₀)/λ) keeps ∂y G = c (∂y g)(·/λ) and Δ G = div of the shrunk flux.
    let mut g = src.smooth.sample_g_mapped(&patch, cx, cy, lambda);
    g.scale(lambda * c);
    let mut pair = derive_f_v(&g);
    let k = 1.0 / n as f64;
    for j in 0..patch.ny() {
        for i in 0..patch.nx() {
            let (x, y) = ((patch.x(i) - cx) / lambda, (patch.y(j) - cy) / lambda);
            let (u, ux, uy) = bump(n, x, y);
            let (sx, dsx) = soft_bump((patch.x(i) - cx) / half);
            let (sy, dsy) = soft_bump((patch.y(j) - cy) / half);
            let beta = POSITIVITY_BUMP * k * 2.0f64.exp();
            pair.f.values_mut()[j * patch.nx() + i] += u + beta * sx * sy;
            pair.v_x.values_mut()[j * patch.nx() + i] += ux / lambda + beta * dsx * sy / half;
            pair.v_y.values_mut()[j * patch.nx() + i] += uy / lambda + beta * sx * dsy / half;
        }
    }
    Ok((pair, c))
}

/// Sum of overlapping tiles covering the window, each scaled so that its gradient
/// mass on its core square is `1/n`; normalized.
pub fn assemble_overlapping(plan: &TilePlan, stages: &[StageSource], h: f64, mode: Normalization) -> Result<FPKAssembly> {
    if plan.mode != TileMode::Overlapping {
        return Err(Error::Plan("assemble_overlapping needs an overlapping plan".into()));
    }
    plan.check()?;
    let window = plan.window(h)?;
    let (mut w, mut v_x, mut v_y) = (window.zeroed(), window.zeroed(), window.zeroed());
    let mut records = Vec::new();
    for (tile, &weight) in plan.tiles.iter().zip(&plan.weights) {
        let src = stage_source(stages, tile.index)?;
        let (pair, c) = overlapping_tile(src, tile, &window, mode)?;
        let (cx, cy) = tile.center();
        let mass = gradient_mass(&pair.f, cx, cy, to_f64(&tile.core_half));
        let amplitude = weight / mass;
        if pair.f.min() < 0.0 {
            return Err(Error::Assembly(format!("tile {}: density is negative", tile.index)));
        }
        w.add_patch(&pair.f, amplitude)?;
        v_x.add_patch(&pair.v_x, amplitude)?;
        v_y.add_patch(&pair.v_y, amplitude)?;
        records.push(TileRecord {
            index: tile.index,
            stage: src.stage,
            epsilon: src.smooth.epsilon(),
            stage_scale: c,
            amplitude,
            core_gradient_mass: 0.0,
        });
    }
    // Positivity on the interior nodes of the window.
    for j in 1..window.ny() - 1 {
        for i in 1..window.nx() - 1 {
            if w.get(i, j) <= 0.0 {
                return Err(Error::Plan(format!("density vanishes at ({}, {})", window.x(i), window.y(j))));
            }
        }
    }
    let recipe = Recipe {
        kind: "overlapping".into(),
        h,
        normalization_mode: mode,
        plan: Some(plan.clone()),
        tiles: records,
        bump_profile: format!(
            "quintic smoothstep shrunk by {OVERLAP_SHRINK} into the core square, plus exp(-1/(1-t^2)) tensor bump on the support square"
        ),
        notes: vec![],
    };
    let mut asm = FPKAssembly::from_density_and_flux(w, v_x, v_y, recipe)?;
    let core: Vec<f64> = plan
        .tiles
        .iter()
        .map(|t| {
            let (cx, cy) = t.center();
            asm.gradient_mass_on(cx, cy, to_f64(&t.core_half))
        })
        .collect();
    for (r, m) in asm.recipe.tiles.iter_mut().zip(core) {
        r.core_gradient_mass = m;
    }
    Ok(asm)
}

/// Standard Gaussian density on the plane.
pub fn gaussian(x: f64, y: f64) -> f64 {
    (-(x * x + y * y) / 2.0).exp() / (2.0 * std::f64::consts::PI)
}

/// `ρ ∝ w + ρ₂` and `b = (v - xρ₂)/(w + ρ₂)` on `[-half, half]²`. The inputs are
/// embedded into the larger window; their grid must align with it.
pub fn gaussian_variant(w: &GridField, v_x: &GridField, v_y: &GridField, half: f64) -> Result<FPKAssembly> {
    if w.min() < 0.0 {
        return Err(Error::Domain("w must be nonnegative".into()));
    }
    let window = GridField::centered(half, w.h())?;
    let (mut d, mut fx, mut fy) = (window.zeroed(), window.zeroed(), window.zeroed());
    d.add_patch(w, 1.0)?;
    fx.add_patch(v_x, 1.0)?;
    fy.add_patch(v_y, 1.0)?;
    for j in 0..window.ny() {
        let y = window.y(j);
        for i in 0..window.nx() {
            let x = window.x(i);
            let g = gaussian(x, y);
            let k = j * window.nx() + i;
            d.values_mut()[k] += g;
            fx.values_mut()[k] -= x * g;
            fy.values_mut()[k] -= y * g;
        }
    }
    let recipe = Recipe {
        kind: "gaussian".into(),
        h: w.h(),
        normalization_mode: Normalization::Sup,
        plan: None,
        tiles: vec![],
        bump_profile: "standard Gaussian added to a compactly supported pair".into(),
        notes: vec![format!("window [-{half}, {half}]^2; b = -x continues analytically beyond it")],
    };
    FPKAssembly::from_density_and_flux(d, fx, fy, recipe)
}

/// Largest `|b(x) + x|` over nodes outside the grid of the compact pair.
pub fn gaussian_drift_defect(asm: &FPKAssembly, w: &GridField) -> f64 {
    let mut worst: f64 = 0.0;
    let rho = &asm.rho;
    for j in 0..rho.ny() {
        for i in 0..rho.nx() {
            let (x, y) = (rho.x(i), rho.y(j));
            if !inside(w, x, y) {
                worst = worst.max((asm.b_x.get(i, j) + x).abs()).max((asm.b_y.get(i, j) + y).abs());
            }
        }
    }
    worst
}

fn inside(g: &GridField, x: f64, y: f64) -> bool {
    let (x0, x1, y0, y1) = g.bounds();
    x >= x0 && x <= x1 && y >= y0 && y <= y1
}

/// Truncation tail `Σ_{n>N} 3 n⁻²` of the flux bound.
pub fn flux_tail_bound(n: usize) -> f64 {
    3.0 * (std::f64::consts::PI.powi(2) / 6.0 - (1..=n).map(|k| 1.0 / (k * k) as f64).sum::<f64>())
}
