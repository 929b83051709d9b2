//! Weak-form checks: stationarity residuals against smooth test functions, the
//! logarithmic-gradient estimate, gradient-mass partial sums, and the rescaling
//! identities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpk::{gradient_mass, FPKAssembly, TilePlan};
use crate::grid::GridField;
use crate::rational::to_f64;

/// Power of `(1 - s²)` in the test-function envelope.
const ENVELOPE_POWER: i32 = 10;

/// `(1-s²)^k · (c0 + c1 s + c2 s² + c3 s³)` on `|s| < 1`: value and first two derivatives.
fn profile(s: f64, c: &[f64; 4]) -> (f64, f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let k = ENVELOPE_POWER as f64;
    let d = 1.0 - s * s;
    let low = d.powi(ENVELOPE_POWER - 2);
    let a = low * d * d;
    let a1 = -2.0 * k * s * low * d;
    let a2 = -2.0 * k * low * d + 4.0 * k * (k - 1.0) * s * s * low;
    let p = c[0] + s * (c[1] + s * (c[2] + s * c[3]));
    let p1 = c[1] + s * (2.0 * c[2] + 3.0 * s * c[3]);
    let p2 = 2.0 * c[2] + 6.0 * s * c[3];
    (a * p, a1 * p + a * p1, a2 * p + 2.0 * a1 * p1 + a * p2)
}

/// Tensor bump `a((x-cx)/r)·b((y-cy)/r)` with polynomial modulation of degree ≤ 3
/// in each factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub px: [f64; 4],
    pub py: [f64; 4],
}

/// Value, gradient and second derivatives `(φ, φx, φy, φxx, φxy, φyy)`.
pub type Jet = (f64, f64, f64, f64, f64, f64);

impl TestFunction {
    pub fn plain(cx: f64, cy: f64, radius: f64) -> Self {
        Self { cx, cy, radius, px: [1.0, 0.0, 0.0, 0.0], py: [1.0, 0.0, 0.0, 0.0] }
    }

    fn fx(&self, x: f64) -> (f64, f64, f64) {
        let r = self.radius;
        let (a, a1, a2) = profile((x - self.cx) / r, &self.px);
        (a, a1 / r, a2 / (r * r))
    }

    fn fy(&self, y: f64) -> (f64, f64, f64) {
        let r = self.radius;
        let (a, a1, a2) = profile((y - self.cy) / r, &self.py);
        (a, a1 / r, a2 / (r * r))
    }

    pub fn jet(&self, x: f64, y: f64) -> Jet {
        let (a, a1, a2) = self.fx(x);
        let (b, b1, b2) = self.fy(y);
        (a * b, a1 * b, a * b1, a2 * b, a1 * b1, a * b2)
    }

    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        let j = self.jet(x, y);
        j.3 + j.5
    }

    /// `sup|φ| + sup|∇φ| + sup|D²φ|` summed componentwise, from 1D sups of the factors.
    pub fn c2_norm(&self) -> f64 {
        let sups = |c: &[f64; 4]| {
            let mut m = [0.0f64; 3];
            for k in 0..=4000 {
                let (v, d1, d2) = profile(-1.0 + k as f64 / 2000.0, c);
                m[0] = m[0].max(v.abs());
                m[1] = m[1].max(d1.abs());
                m[2] = m[2].max(d2.abs());
            }
            m
        };
        let (a, b, r) = (sups(&self.px), sups(&self.py), self.radius);
        a[0] * b[0] + (a[1] * b[0] + a[0] * b[1]) / r + (a[2] * b[0] + a[1] * b[1] + a[0] * b[2]) / (r * r)
    }

    pub fn support(&self) -> (f64, f64, f64, f64) {
        let r = self.radius;
        (self.cx - r, self.cx + r, self.cy - r, self.cy + r)
    }
}

/// 5×5 lattice of centres over `[-L, L]²` at two radii; the second radius carries a
/// cubic modulation.
pub fn standard_basis(half: f64) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for (radius, px, py) in [
        (0.3 * half, [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
        (0.15 * half, [1.0, 0.5, 0.0, -0.25], [1.0, -0.3, 0.2, 0.0]),
    ] {
        for j in 0..5 {
            for i in 0..5 {
                let c = |k: usize| (k as f64 - 2.0) * half / 3.0;
                out.push(TestFunction { cx: c(i), cy: c(j), radius, px, py });
            }
        }
    }
    out
}

/// Basis over the assembly's tile window, or over the largest centred square
/// inside the grid when there is no tile plan.
pub fn assembly_basis(asm: &FPKAssembly) -> Vec<TestFunction> {
    let half = match &asm.recipe.plan {
        Some(plan) => to_f64(&plan.window_half),
        None => {
            let (x0, x1, y0, y1) = asm.rho.bounds();
            (-x0).min(x1).min(-y0).min(y1)
        }
    };
    standard_basis(half)
}

fn node_range(lo: f64, hi: f64, origin: f64, h: f64, n: usize) -> std::ops::Range<usize> {
    let a = ((lo - origin) / h).ceil().max(0.0) as usize;
    let b = (((hi - origin) / h).floor() as usize + 1).min(n);
    a..b.max(a)
}

/// `∫(Δφ + b·∇φ) ρ` by the rectangle rule on the nodes of `rho`.
pub fn residual(rho: &GridField, b_x: &GridField, b_y: &GridField, phi: &TestFunction) -> Result<f64> {
    if !(rho.same_geometry(b_x) && rho.same_geometry(b_y)) {
        return Err(Error::Domain("density and drift grids differ".into()));
    }
    let (x0, x1, y0, y1) = phi.support();
    let (gx0, gx1, gy0, gy1) = rho.bounds();
    let slack = 1e-9 * rho.h();
    if x0 < gx0 - slack || x1 > gx1 + slack || y0 < gy0 - slack || y1 > gy1 + slack {
        return Err(Error::Domain(format!("test function support [{x0}, {x1}]x[{y0}, {y1}] leaves the window")));
    }
    let h = rho.h();
    let (ox, oy) = rho.origin();
    let is = node_range(x0, x1, ox, h, rho.nx());
    let js = node_range(y0, y1, oy, h, rho.ny());
    let fx: Vec<(f64, f64, f64)> = is.clone().map(|i| phi.fx(rho.x(i))).collect();
    let mut total = 0.0;
    for j in js {
        let (b, b1, b2) = phi.fy(rho.y(j));
        let base = j * rho.nx();
        let mut row = 0.0;
        for (k, i) in is.clone().enumerate() {
            let r = rho.values()[base + i];
            if r == 0.0 {
                continue;
            }
            let (a, a1, a2) = fx[k];
            let lap = a2 * b + a * b2;
            let drift = b_x.values()[base + i] * a1 * b + b_y.values()[base + i] * a * b1;
            row += (lap + drift) * r;
        }
        total += row;
    }
    Ok(total * h * h)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub h: f64,
    pub residuals: Vec<f64>,
    /// `|residual| / (‖φ‖_{C²} ‖ρ‖₁)`.
    pub normalized: Vec<f64>,
    pub max_normalized: f64,
    /// Order estimate against a coarser run, when one was supplied.
    pub order: Option<f64>,
    pub coarse_max_normalized: Option<f64>,
}

pub fn residual_suite(rho: &GridField, b_x: &GridField, b_y: &GridField, basis: &[TestFunction]) -> Result<ResidualReport> {
    let mass = rho.l1();
    let mut residuals = Vec::with_capacity(basis.len());
    let mut normalized = Vec::with_capacity(basis.len());
    for phi in basis {
        let r = residual(rho, b_x, b_y, phi)?;
        residuals.push(r);
        normalized.push(if mass > 0.0 { r.abs() / (phi.c2_norm() * mass) } else { 0.0 });
    }
    let max_normalized = normalized.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualReport { h: rho.h(), residuals, normalized, max_normalized, order: None, coarse_max_normalized: None })
}

pub fn assembly_residuals(asm: &FPKAssembly, basis: &[TestFunction]) -> Result<ResidualReport> {
    residual_suite(&asm.rho, &asm.b_x, &asm.b_y, basis)
}

/// Attaches the convergence order `log₂(coarse/fine)` of the normalized maxima.
pub fn with_order(fine: ResidualReport, coarse: &ResidualReport) -> ResidualReport {
    let ratio = coarse.max_normalized / fine.max_normalized;
    let steps = (coarse.h / fine.h).log2();
    ResidualReport {
        order: Some(ratio.log2() / steps),
        coarse_max_normalized: Some(coarse.max_normalized),
        ..fine
    }
}

/// `(∫|∇ρ|²/ρ, ∫|b|²ρ)` with fourth-order differences.
pub fn l2_loggrad_check(rho: &GridField, b_x: &GridField, b_y: &GridField) -> Result<(f64, f64)> {
    if rho.min() <= 0.0 {
        return Err(Error::Domain("density must be strictly positive on the window".into()));
    }
    let (gx, gy) = (rho.d4(0), rho.d4(1));
    let h2 = rho.h() * rho.h();
    let (r, gx, gy, bx, by) = (rho.values(), gx.values(), gy.values(), b_x.values(), b_y.values());
    let nx = rho.nx();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    // Only nodes where the five-point stencil stays inside the grid.
    for j in 2..rho.ny().saturating_sub(2) {
        for k in j * nx + 2..(j + 1) * nx - 2 {
            lhs += (gx[k] * gx[k] + gy[k] * gy[k]) / r[k];
            rhs += (bx[k] * bx[k] + by[k] * by[k]) * r[k];
        }
    }
    Ok((lhs * h2, rhs * h2))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientMassReport {
    pub counts: Vec<usize>,
    pub sums: Vec<f64>,
    /// `margin · Σ_{n≤N} (2n)⁻¹ · normalization`.
    pub lower_bounds: Vec<f64>,
    pub holds: bool,
}

/// `S_N = Σ_{n≤N} ∫_{D_n}|∇ρ|` for each requested `N`.
pub fn gradient_mass_partial_sums(
    rho: &GridField,
    plan: &TilePlan,
    normalization: f64,
    margin: f64,
    counts: &[usize],
) -> GradientMassReport {
    let per_tile: Vec<f64> = plan
        .tiles
        .iter()
        .map(|t| {
            let (cx, cy) = t.center();
            gradient_mass(rho, cx, cy, to_f64(&t.core_half))
        })
        .collect();
    let harmonic = |n: usize| (1..=n).map(|k| 0.5 / k as f64).sum::<f64>();
    let sums: Vec<f64> = counts.iter().map(|&n| per_tile.iter().take(n).sum()).collect();
    let lower_bounds: Vec<f64> = counts.iter().map(|&n| margin * harmonic(n) * normalization).collect();
    let holds = sums.iter().zip(&lower_bounds).all(|(s, b)| s >= b);
    GradientMassReport { counts: counts.to_vec(), sums, lower_bounds, holds }
}

/// Norm ratios between `f` and `g(x) = f(N(x - P))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub factor: f64,
    pub xx_ratio: f64,
    pub laplacian_ratio: f64,
    pub sup_ratio: f64,
    /// `‖∇g‖∞ / ‖∇f‖∞`, expected to equal the factor.
    pub gradient_ratio: f64,
    /// `‖∇g‖∞ / (N ‖f‖∞)`; the identity as printed would make this 1.
    pub printed_gradient_ratio: f64,
    pub chain_rule_holds: bool,
    pub printed_identity_holds: bool,
}

fn grid_norms(f: &GridField) -> (f64, f64, f64, f64) {
    let xx = f.d_x().d_x();
    let lap = f.laplacian();
    let (gx, gy) = (f.d4(0), f.d4(1));
    let grad = gx.values().iter().zip(gy.values()).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    (xx.l1(), lap.l1(), f.max_abs(), grad)
}

/// Compares norms of `f` sampled on `template` with norms of the rescaled copy
/// `g_{P,N}` sampled at spacing `h/N`, so both see the same effective resolution.
/// `window` is the half-width of the square that must contain the support of `g`.
pub fn scaling_identities(
    f: &dyn Fn(f64, f64) -> f64,
    support_half: f64,
    template: &GridField,
    p: (f64, f64),
    factor: f64,
    window: f64,
) -> Result<ScalingReport> {
    if !(factor > 0.0) {
        return Err(Error::Parameter("scale factor must be positive".into()));
    }
    let reach = p.0.abs().max(p.1.abs()) + support_half / factor;
    if reach > window {
        return Err(Error::Domain(format!("rescaled support reaches {reach}, outside the window {window}")));
    }
    let base = GridField::from_fn(template, f);
    let (ox, oy) = template.origin();
    let scaled_template =
        GridField::zeros(p.0 + ox / factor, p.1 + oy / factor, template.h() / factor, template.nx(), template.ny())?;
    let scaled = GridField::from_fn(&scaled_template, |x, y| f(factor * (x - p.0), factor * (y - p.1)));
    let (a, b) = (grid_norms(&base), grid_norms(&scaled));
    let gradient_ratio = b.3 / a.3;
    let printed = b.3 / (factor * a.2);
    Ok(ScalingReport {
        factor,
        xx_ratio: b.0 / a.0,
        laplacian_ratio: b.1 / a.1,
        sup_ratio: b.2 / a.2,
        gradient_ratio,
        printed_gradient_ratio: printed,
        chain_rule_holds: (gradient_ratio / factor - 1.0).abs() < 0.01,
        printed_identity_holds: (printed - 1.0).abs() < 0.01,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpk::gaussian;

    #[test]
    fn jet_matches_differences() {
        let phi = TestFunction { cx: 0.2, cy: -0.1, radius: 0.7, px: [1.0, 0.5, 0.0, -0.25], py: [1.0, -0.3, 0.2, 0.0] };
        let e = 1e-5;
        for (x, y) in [(0.3, 0.1), (-0.2, -0.5), (0.6, 0.3)] {
            let j = phi.jet(x, y);
            let v = |x, y| phi.jet(x, y).0;
            assert!(((v(x + e, y) - v(x - e, y)) / (2.0 * e) - j.1).abs() < 1e-8);
            assert!(((v(x, y + e) - v(x, y - e)) / (2.0 * e) - j.2).abs() < 1e-8);
            let dxx = (v(x + e, y) - 2.0 * j.0 + v(x - e, y)) / (e * e);
            assert!((dxx - j.3).abs() < 1e-4);
        }
        assert_eq!(phi.jet(1.0, 0.0).0, 0.0);
    }

    #[test]
    fn constant_density_has_no_residual() {
        let rho = GridField::from_fn(&GridField::centered(1.0, 1.0 / 256.0).unwrap(), |_, _| 0.25);
        let z = rho.zeroed();
        for phi in standard_basis(1.0) {
            assert!(residual(&rho, &z, &z, &phi).unwrap().abs() < 1e-10);
        }
        let out = TestFunction::plain(0.9, 0.0, 0.3);
        assert!(matches!(residual(&rho, &z, &z, &out), Err(Error::Domain(_))));
    }

    #[test]
    fn ornstein_uhlenbeck_pair() {
        let run = |h: f64| {
            let g = GridField::centered(6.0, h).unwrap();
            let rho = GridField::from_fn(&g, gaussian);
            let bx = GridField::from_fn(&g, |x, _| -x);
            let by = GridField::from_fn(&g, |_, y| -y);
            residual_suite(&rho, &bx, &by, &standard_basis(6.0)).unwrap().max_normalized
        };
        assert!(run(1.0 / 16.0) < 1e-10);
    }

    #[test]
    fn equality_and_proper_projection() {
        let g = GridField::centered(6.0, 1.0 / 64.0).unwrap();
        let rho = GridField::from_fn(&g, gaussian);
        let bx = GridField::from_fn(&g, |x, _| -x);
        let by = GridField::from_fn(&g, |_, y| -y);
        let (l, r) = l2_loggrad_check(&rho, &bx, &by).unwrap();
        assert!((l - r).abs() / r < 1e-6);
        assert!((r - 2.0).abs() < 1e-5);
        let shifted = GridField::from_fn(&g, |x, _| -x + 0.5);
        let (l2, r2) = l2_loggrad_check(&rho, &shifted, &by).unwrap();
        assert!(l2 < r2);
        // ∫|b|²ρ = 2 + c² for b = -x + c e₁
        assert!((r2 - 2.25).abs() < 1e-5);
        assert!(l2_loggrad_check(&rho.zeroed(), &bx, &by).is_err());
    }

    #[test]
    fn rescaling() {
        let phi = TestFunction::plain(0.0, 0.0, 1.0);
        let f = |x: f64, y: f64| phi.jet(x, y).0;
        let t = GridField::centered(1.0, 1.0 / 128.0).unwrap();
        let id = scaling_identities(&f, 1.0, &t, (0.0, 0.0), 1.0, 2.0).unwrap();
        assert_eq!(id.xx_ratio, 1.0);
        assert_eq!(id.gradient_ratio, 1.0);
        let two = scaling_identities(&f, 1.0, &t, (0.5, -0.25), 2.0, 2.0).unwrap();
        assert!((two.laplacian_ratio - 1.0).abs() < 0.01);
        assert!((two.xx_ratio - 1.0).abs() < 0.01);
        assert!((two.sup_ratio - 1.0).abs() < 1e-12);
        assert!((1.98..=2.02).contains(&two.gradient_ratio));
        assert!(two.chain_rule_holds);
        assert!(!two.printed_identity_holds);
        assert!(scaling_identities(&f, 1.0, &t, (1.8, 0.0), 2.0, 2.0).is_err());
    }
}
