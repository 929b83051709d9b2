//! Numbered acceptance checks, run sequentially with one line per check.
//! Exits nonzero if any check fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num::{BigInt, BigRational, One, Signed, Zero};

use ornstein_fpk::fpk::{
    assemble_disjoint, assemble_overlapping, gaussian, gaussian_variant, FPKAssembly, Normalization, StageSource,
    TilePlan,
};
use ornstein_fpk::grid::GridField;
use ornstein_fpk::ornstein::{build_p1, construct_sequence, full_variation_growth, refine_step, verify_properties};
use ornstein_fpk::pipeline::{run_pipeline, PipelineConfig};
use ornstein_fpk::rational::to_f64;
use ornstein_fpk::spectral::{frac_norm, gaussian_reference_norm, ls_norm, SpectralField};
use ornstein_fpk::weakform::{assembly_basis, assembly_residuals, gradient_mass_partial_sums, l2_loggrad_check, with_order};

type Q = BigRational;

fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn stage_sources(stages: usize) -> Vec<StageSource> {
    let states = construct_sequence(&q(1, 2), stages).unwrap();
    states.iter().map(|s| StageSource::prepare(s).unwrap()).collect()
}

// ---- 1, 2: exact construction ----

fn exact_p1() -> Outcome {
    let t = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for d in [q(1, 2), q(1, 4), q(1, 8)] {
        let s = build_p1(&d).unwrap();
        let r = verify_properties(&s).unwrap();
        let ok = r.l1 == &d * q(3, 2)
            && r.line_integral_max_residual.is_zero()
            && r.sup_x <= Q::one()
            && r.sup_y <= d;
        pass &= ok;
        notes.push(format!("delta={d}: l1={} sup=({}, {})", r.l1, r.sup_x, r.sup_y));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 1.0;
    outcome(pass, format!("{}; {secs:.3}s < 1s", notes.join("; ")))
}

fn refinement_suite() -> Outcome {
    let t = Instant::now();
    let states = construct_sequence(&q(1, 2), 3).unwrap();
    let reports: Vec<_> = states.iter().map(|s| verify_properties(s).unwrap()).collect();
    let c3 = reports[0].var_y_integral.clone();
    let mut pass = true;
    let mut notes = Vec::new();
    for r in &reports {
        let bound = Q::one() / Q::from_integer(BigInt::from(1u64 << (r.n - 1)));
        let ok = r.cells_valid
            && r.support_in_square
            && r.line_integrals_vanish
            && r.var_y_integral_constant
            && r.monotone_with_bounded_drops
            && r.drop_bound == bound
            && r.max_drop <= bound
            && r.sup_bounds_hold
            && r.odd_in_y
            && r.var_y_integral == c3;
        pass &= ok;
        notes.push(format!("n={} max_drop={} bound={} C3={}", r.n, r.max_drop, r.drop_bound, r.var_y_integral));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    outcome(pass, format!("{}; {secs:.1}s", notes.join("; ")))
}

// ---- 3: mass growth under shrinking alpha ----

fn mass_growth() -> Outcome {
    let p1 = build_p1(&q(1, 2)).unwrap();
    let target = full_variation_growth(&p1);
    let base = p1.p.l1_norm();
    let mut gaps = Vec::new();
    let mut last = Q::zero();
    for k in 5..=10 {
        let alpha = q(1, 1 << k);
        let next = refine_step(&p1, &alpha).unwrap();
        last = next.p.l1_norm() - &base;
        gaps.push((&last - &target).abs());
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let rel = to_f64(&gaps[gaps.len() - 1]) / to_f64(&target);
    outcome(
        monotone && rel <= 0.1,
        format!("growth at alpha=1/1024 is {} ({:.6}), target (delta/2)*C3 = {target}; relative gap {rel:.4} (tol 0.1)", last, to_f64(&last)),
    )
}

// ---- 4, 5: mollified norms ----

fn ratio_growth(sources: &[StageSource]) -> Outcome {
    let ratios: Vec<f64> = sources.iter().map(|s| s.report.ratio).collect();
    outcome(ratios.windows(2).all(|w| w[1] > w[0]), format!("ratios {ratios:.4?}"))
}

fn contraction(sources: &[StageSource]) -> Outcome {
    let states = construct_sequence(&q(1, 2), sources.len()).unwrap();
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for (s, src) in states.iter().zip(sources) {
        let r = verify_properties(s).unwrap();
        let exact = [&r.var_x_integral, &r.var_y_integral, &r.sup_y, &r.sup_x].map(to_f64);
        let m = &src.report;
        for (smooth, step) in [m.xx_l1, m.yy_l1, m.x_sup, m.y_sup].into_iter().zip(exact) {
            pass &= smooth <= step + 1e-8;
            worst = worst.max(smooth - step);
        }
    }
    outcome(pass, format!("max(smoothed - step) = {worst:.3e} (tol 1e-8)"))
}

// ---- 6, 7, 8: assemblies ----

struct Assemblies {
    overlapping_coarse: FPKAssembly,
    overlapping_fine: FPKAssembly,
}

fn residual_line(name: &str, coarse: &FPKAssembly, fine: &FPKAssembly) -> (bool, String) {
    let basis = assembly_basis(fine);
    let c = assembly_residuals(coarse, &basis).unwrap();
    let f = with_order(assembly_residuals(fine, &basis).unwrap(), &c);
    let order = f.order.unwrap_or(f64::NAN);
    (f.max_normalized <= 1e-3 && order >= 1.8, format!("{name}: {:.2e} order {order:.3}", f.max_normalized))
}

fn gaussian_assembly(sources: &[StageSource], h: f64) -> FPKAssembly {
    let w = assemble_disjoint(&TilePlan::disjoint(1).unwrap(), sources, h, Normalization::Sup).unwrap();
    gaussian_variant(&w.rho, &w.v_x, &w.v_y, 6.0).unwrap()
}

fn stationarity(sources: &[StageSource], keep: &mut Option<Assemblies>) -> Outcome {
    let t = Instant::now();
    let (hc, hf) = (1.0 / 256.0, 1.0 / 512.0);
    let mut pass = true;
    let mut notes = Vec::new();

    let plan = TilePlan::disjoint(4).unwrap();
    let c = assemble_disjoint(&plan, sources, hc, Normalization::Sup).unwrap();
    let f = assemble_disjoint(&plan, sources, hf, Normalization::Sup).unwrap();
    let (ok, note) = residual_line("disjoint N=4", &c, &f);
    pass &= ok;
    notes.push(note);
    drop((c, f));

    let plan = TilePlan::overlapping(9).unwrap();
    let c = assemble_overlapping(&plan, sources, hc, Normalization::Sup).unwrap();
    let f = assemble_overlapping(&plan, sources, hf, Normalization::Sup).unwrap();
    let (ok, note) = residual_line("overlapping N=9", &c, &f);
    pass &= ok;
    notes.push(note);
    *keep = Some(Assemblies { overlapping_coarse: c, overlapping_fine: f });

    let c = gaussian_assembly(sources, hc);
    let f = gaussian_assembly(sources, hf);
    let (ok, note) = residual_line("gaussian", &c, &f);
    pass &= ok;
    notes.push(note);

    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, format!("{}; {secs:.1}s", notes.join("; ")))
}

fn gradient_mass(asm: &FPKAssembly) -> Outcome {
    let plan = asm.recipe.plan.as_ref().expect("overlapping plan");
    let counts = [1, 2, 4, 9];
    let gm = gradient_mass_partial_sums(&asm.rho, plan, asm.normalization, 0.9, &counts);
    // Oracle for the bound: 0.9 * sum_{n<=N} 1/(2n) * scale.
    let harmonic = |n: usize| (1..=n).map(|k| 1.0 / (2.0 * k as f64)).sum::<f64>();
    let bounds: Vec<f64> = counts.iter().map(|&n| 0.9 * harmonic(n) * asm.normalization).collect();
    let sums_ok = gm.sums.iter().zip(&bounds).all(|(s, b)| s >= b);
    let growth = gm.sums[3] / gm.sums[0];
    let growth_bound = 0.9 * harmonic(9) / 0.5;
    outcome(
        sums_ok && growth >= growth_bound,
        format!("S_N {:.3?} vs {:.3?}; S_9/S_1 = {growth:.3} >= {growth_bound:.3}", gm.sums, bounds),
    )
}

fn loggrad(sources: &[StageSource]) -> Outcome {
    let h = 1.0 / 512.0;
    let g = GridField::centered(6.0, h).unwrap();
    let rho = GridField::from_fn(&g, gaussian);
    let bx = GridField::from_fn(&g, |x, _| -x);
    let by = GridField::from_fn(&g, |_, y| -y);
    let (l, r) = l2_loggrad_check(&rho, &bx, &by).unwrap();
    drop((rho, bx, by));
    let rel = (l - r).abs() / r;
    let asm = gaussian_assembly(sources, h);
    let (vl, vr) = l2_loggrad_check(&asm.rho, &asm.b_x, &asm.b_y).unwrap();
    outcome(
        rel <= 1e-6 && vl <= vr * (1.0 + 1e-4),
        format!("pure gaussian relative gap {rel:.2e} (tol 1e-6); variant {vl:.6} <= {vr:.6}"),
    )
}

// ---- 9, 10: spectral probe ----

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn spectral_sanity() -> Outcome {
    let mut notes = Vec::new();

    let g = GridField::centered(1.5, 1.0 / 64.0).unwrap();
    let bump = GridField::from_fn(&g, |x, y| ((1.0 - x * x).max(0.0) * (1.0 - y * y).max(0.0)).powi(3));
    let id_gap = (frac_norm(&bump, 1.3, 0.0).unwrap() - ls_norm(&bump, 1.3).unwrap()).abs();
    notes.push(format!("alpha=0 gap {id_gap:.1e}"));

    let n = 96;
    let h = 1.0 / 24.0;
    let period = n as f64 * h;
    let wave = GridField::from_fn(&GridField::zeros(0.0, 0.0, h, n, n).unwrap(), |x, y| {
        (2.0 * PI * (x + 2.0 * y) / period).sin()
    });
    let field = SpectralField::periodic(&wave);
    let base = field.norm(1.5, 0.0).unwrap();
    let k2 = 5.0 * (2.0 * PI / period).powi(2);
    let eig_gap = [0.4, 1.0, 1.6]
        .iter()
        .map(|&a| (field.norm(1.5, a).unwrap() / base - (1.0 + k2).powf(a / 2.0)).abs())
        .fold(0.0, f64::max);
    notes.push(format!("mode gap {eig_gap:.1e}"));

    let gauss = GridField::from_fn(&GridField::centered(8.0, 1.0 / 32.0).unwrap(), |x, y| (-(x * x + y * y) / 2.0).exp());
    // L2 oracle by Plancherel: pi * int_0^inf (1+u)^a e^{-u} du.
    let mut curve_gap: f64 = 0.0;
    for a in [0.25, 0.5, 1.0] {
        let exact = (PI * simpson(|u| (1.0 + u).powf(a) * (-u).exp(), 0.0, 60.0, 6000)).sqrt();
        curve_gap = curve_gap.max((frac_norm(&gauss, 2.0, a).unwrap() / exact - 1.0).abs());
    }
    for a in [0.5, 1.0] {
        let exact = gaussian_reference_norm(1.0, 1.2, a);
        curve_gap = curve_gap.max((frac_norm(&gauss, 1.2, a).unwrap() / exact - 1.0).abs());
    }
    notes.push(format!("gaussian curve gap {:.2}%", 100.0 * curve_gap));

    outcome(id_gap <= 1e-10 && eig_gap <= 1e-8 && curve_gap <= 0.01, notes.join("; "))
}

fn threshold_trend(a: &Assemblies) -> Outcome {
    let r = 1.2;
    let growth = |alpha: f64| {
        frac_norm(&a.overlapping_fine.rho, r, alpha).unwrap() / frac_norm(&a.overlapping_coarse.rho, r, alpha).unwrap()
    };
    let (below, above) = (growth(0.3), growth(0.95));
    outcome(
        (below - 1.0).abs() <= 0.05 && above >= 1.2,
        format!("h 1/256 -> 1/512: ratio {below:.4} at alpha=0.3 (need within 5%), {above:.4} at alpha=0.95 (need >= 1.2)"),
    )
}

// ---- 11: brute-force oracle for the second stage ----

/// First-stage function at delta = 1/2, straight from its definition.
fn p1_at(x: &Q, y: &Q) -> Q {
    let d = q(1, 2);
    let quarter = &d / q(4, 1);
    let left = *x > q(-1, 2) && x.is_negative();
    let right = x.is_positive() && *x < q(1, 2);
    let lower = *y > -d.clone() && *y < -quarter.clone();
    let upper = *y > quarter && *y < d;
    if (left && lower) || (right && upper) {
        Q::one()
    } else if (right && lower) || (left && upper) {
        -Q::one()
    } else {
        Q::zero()
    }
}

/// `int_{-1}^x p1(t, y) dt`, summing value times overlap over the four x-pieces.
fn p1_x_antideriv(x: &Q, y: &Q) -> Q {
    let pieces = [(q(-1, 2), q(0, 1)), (q(0, 1), q(1, 2))];
    pieces.iter().fold(Q::zero(), |acc, (a, b)| {
        let mid = (a + b) / q(2, 1);
        let len = (x.clone().min(b.clone()) - a).max(Q::zero());
        acc + p1_at(&mid, y) * len
    })
}

fn p2_oracle(x: &Q, y: &Q, alpha: &Q) -> Q {
    if y.is_positive() {
        return -p2_oracle(x, &-y.clone(), alpha);
    }
    let d = q(1, 2);
    let centre = -(&d / q(4, 1));
    if (y - &centre).abs() >= alpha / q(2, 1) {
        return p1_at(x, y);
    }
    let below = -(&d * q(5, 8));
    let above = Q::zero();
    let mean = (p1_at(x, &below) + p1_at(x, &above)) / q(2, 1);
    let width = alpha / &d;
    let k = ((x + Q::one()) / &width).floor();
    let xk = -Q::one() + (k + q(1, 2)) * &width;
    let beta = (p1_x_antideriv(&xk, &below) - p1_x_antideriv(&xk, &above)) * &d / (q(2, 1) * alpha);
    let lower = *y < centre;
    let left = *x < xk;
    if lower == left {
        mean + beta
    } else {
        mean - beta
    }
}

fn oracle_equivalence() -> Outcome {
    let states = construct_sequence(&q(1, 2), 2).unwrap();
    let p2 = &states[1].p;
    let alpha = states[1].alpha_history[0].clone();
    let admissible = (q(1, 1) / &alpha).is_integer() && alpha <= q(1, 32);

    let mut xs: Vec<Q> = (0..=(q(2, 1) / &alpha).to_integer().try_into().unwrap_or(0i64)).map(|m| -Q::one() + &alpha * q(m, 1)).collect();
    xs.sort();
    xs.dedup();
    let centre = q(-1, 8);
    let mut ys: Vec<Q> = [q(-1, 1), q(-1, 2), q(-1, 8), &centre - &alpha / q(2, 1), &centre + &alpha / q(2, 1)]
        .into_iter()
        .flat_map(|v| [-v.clone(), v])
        .collect();
    ys.sort();
    ys.dedup();
    let grid_ok = p2.xgrid().breakpoints() == xs.as_slice() && p2.ygrid().breakpoints() == ys.as_slice();

    let mut mismatches = 0;
    for i in 0..p2.xgrid().cells() {
        let x = p2.xgrid().midpoint(i);
        for j in 0..p2.ygrid().cells() {
            let y = p2.ygrid().midpoint(j);
            if *p2.value(i, j) != p2_oracle(&x, &y, &alpha) {
                mismatches += 1;
            }
        }
    }
    outcome(
        admissible && grid_ok && mismatches == 0,
        format!("alpha={alpha}, {} cells, breakpoints match: {grid_ok}, mismatches: {mismatches}", p2.cell_count()),
    )
}

// ---- 12: determinism ----

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let manifests: Vec<_> = dirs
        .iter()
        .map(|d| {
            let config = PipelineConfig { output: d.path().to_path_buf(), ..PipelineConfig::default() };
            run_pipeline(&config).unwrap()
        })
        .collect();
    let same = manifests[0].artifacts == manifests[1].artifacts && manifests[0].input_hash == manifests[1].input_hash;
    outcome(
        same && !manifests[0].artifacts.is_empty(),
        format!("{} artifacts, identical hashes: {same}", manifests[0].artifacts.len()),
    )
}

fn main() -> ExitCode {
    let mut failed = Vec::new();
    let mut report = |id: u32, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {title} [{:.1}s]: {}", t.elapsed().as_secs_f64(), out.detail);
        if !out.pass {
            failed.push(id);
        }
    };

    report(1, "exact first stage", &mut exact_p1);
    report(2, "refinement properties", &mut refinement_suite);
    report(3, "mass-growth limit", &mut mass_growth);
    let sources = catch_unwind(|| stage_sources(3)).ok();
    let missing = || outcome(false, "stage preparation failed".into());
    match &sources {
        Some(s) => {
            report(4, "ratio growth", &mut || ratio_growth(s));
            report(5, "mollification contraction", &mut || contraction(s));
        }
        None => {
            report(4, "ratio growth", &mut { missing });
            report(5, "mollification contraction", &mut { missing });
        }
    }
    let mut kept = None;
    match &sources {
        Some(s) => report(6, "weak-form stationarity", &mut || stationarity(s, &mut kept)),
        None => report(6, "weak-form stationarity", &mut { missing }),
    }
    match &kept {
        Some(a) => report(7, "gradient-mass growth", &mut || gradient_mass(&a.overlapping_fine)),
        None => report(7, "gradient-mass growth", &mut { missing }),
    }
    match &sources {
        Some(s) => report(8, "log-gradient equality case", &mut || loggrad(s)),
        None => report(8, "log-gradient equality case", &mut { missing }),
    }
    report(9, "spectral probe sanity", &mut spectral_sanity);
    match &kept {
        Some(a) => report(10, "fractional threshold trend", &mut || threshold_trend(a)),
        None => report(10, "fractional threshold trend", &mut { missing }),
    }
    report(11, "brute-force second stage", &mut oracle_equivalence);
    report(12, "pipeline determinism", &mut determinism);

    if failed.is_empty() {
        println!("all 12 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
