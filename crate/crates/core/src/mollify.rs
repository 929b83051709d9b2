//! Mollification of step functions in x and then y, the doubly integrated
//! function `g = (q^x)^y`, and the five-norm report.
//!
//! A mollified step function is kept in closed form: every cell indicator becomes a
//! difference of kernel distribution functions, and every cell ramp a difference of
//! second antiderivatives. Grids are only produced on request.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::kernel::{self, Kernel};
use crate::rational::to_f64;
use crate::step::StepFunction2D;

/// Panels per near-breakpoint window when integrating numerically.
const NEAR_PANELS: usize = 96;

/// Cells overlapping the kernel window around one coordinate.
#[derive(Clone, Debug)]
struct AxisWeights {
    /// Cells strictly below this index lie fully on the low side of the window.
    first_partial: usize,
    /// `(cell, smoothed indicator, smoothed ramp, indicator slope)`.
    partial: Vec<(usize, f64, f64, f64)>,
}

fn axis_weights(bps: &[f64], kernel: &Kernel, t: f64) -> AxisWeights {
    let eps = kernel.epsilon();
    let cells = bps.len() - 1;
    // cell c is partial iff bps[c] < t + eps and bps[c + 1] > t - eps
    let first_partial = bps[1..].partition_point(|&b| b <= t - eps);
    let end = bps[..cells].partition_point(|&b| b < t + eps);
    let partial = (first_partial..end.max(first_partial))
        .map(|c| {
            let (a, b) = (bps[c], bps[c + 1]);
            (c, kernel.smoothed_indicator(a, b, t), kernel.smoothed_ramp(a, b, t), kernel.smoothed_spikes(a, b, t))
        })
        .collect();
    AxisWeights { first_partial, partial }
}

/// The mollified step function `q = p * (ρ_ε ⊗ ρ_ε)` with its antiderivatives.
#[derive(Clone, Debug)]
pub struct SmoothedStep {
    kernel: Kernel,
    xb: Vec<f64>,
    yb: Vec<f64>,
    /// `values[i][j]` on x-cell `i`, y-cell `j`.
    values: Vec<Vec<f64>>,
    /// `xpref[j][k] = Σ_{i<k} V_ij w_i`.
    xpref: Vec<Vec<f64>>,
    /// `ypref[i][k] = Σ_{j<k} V_ij w_j`.
    ypref: Vec<Vec<f64>>,
    /// `both[l][k] = Σ_{j<l} Σ_{i<k} V_ij w_i w_j`.
    both: Vec<Vec<f64>>,
}

impl SmoothedStep {
    pub fn new(p: &StepFunction2D, epsilon: f64) -> Result<Self> {
        let kernel = Kernel::new(epsilon)?;
        let xb = p.xgrid().to_f64();
        let yb = p.ygrid().to_f64();
        let values: Vec<Vec<f64>> = p.values().iter().map(|c| c.iter().map(to_f64).collect()).collect();
        let (nx, ny) = (xb.len() - 1, yb.len() - 1);
        let mut xpref = vec![vec![0.0; nx + 1]; ny];
        for (j, row) in xpref.iter_mut().enumerate() {
            for i in 0..nx {
                row[i + 1] = row[i] + values[i][j] * (xb[i + 1] - xb[i]);
            }
        }
        let mut ypref = vec![vec![0.0; ny + 1]; nx];
        for (i, row) in ypref.iter_mut().enumerate() {
            for j in 0..ny {
                row[j + 1] = row[j] + values[i][j] * (yb[j + 1] - yb[j]);
            }
        }
        let mut both = vec![vec![0.0; nx + 1]; ny + 1];
        for l in 0..ny {
            let w = yb[l + 1] - yb[l];
            for k in 0..=nx {
                both[l + 1][k] = both[l][k] + xpref[l][k] * w;
            }
        }
        Ok(Self { kernel, xb, yb, values, xpref, ypref, both })
    }

    pub fn epsilon(&self) -> f64 {
        self.kernel.epsilon()
    }

    /// Bounding box of the support: the partitioned rectangle grown by epsilon.
    pub fn support(&self) -> (f64, f64, f64, f64) {
        let e = self.epsilon();
        (self.xb[0] - e, *self.xb.last().unwrap() + e, self.yb[0] - e, *self.yb.last().unwrap() + e)
    }

    fn wx(&self, x: f64) -> AxisWeights {
        axis_weights(&self.xb, &self.kernel, x)
    }

    fn wy(&self, y: f64) -> AxisWeights {
        axis_weights(&self.yb, &self.kernel, y)
    }

    fn q_with(&self, ax: &AxisWeights, ay: &AxisWeights) -> f64 {
        let mut s = 0.0;
        for &(i, fi, _, _) in &ax.partial {
            for &(j, fj, _, _) in &ay.partial {
                s += self.values[i][j] * fi * fj;
            }
        }
        s
    }

    /// `q^x = ∫_{-∞}^{x} q`.
    fn qx_with(&self, ax: &AxisWeights, ay: &AxisWeights) -> f64 {
        let mut s = 0.0;
        for &(j, fj, _, _) in &ay.partial {
            let mut line = self.xpref[j][ax.first_partial];
            for &(i, _, ri, _) in &ax.partial {
                line += self.values[i][j] * ri;
            }
            s += fj * line;
        }
        s
    }

    /// `q^y = ∫_{-∞}^{y} q`.
    fn qy_with(&self, ax: &AxisWeights, ay: &AxisWeights) -> f64 {
        let mut s = 0.0;
        for &(i, fi, _, _) in &ax.partial {
            let mut line = self.ypref[i][ay.first_partial];
            for &(j, _, rj, _) in &ay.partial {
                line += self.values[i][j] * rj;
            }
            s += fi * line;
        }
        s
    }

    fn g_with(&self, ax: &AxisWeights, ay: &AxisWeights) -> f64 {
        let (k, l) = (ax.first_partial, ay.first_partial);
        let mut s = self.both[l][k];
        for &(i, _, ri, _) in &ax.partial {
            s += ri * self.ypref[i][l];
        }
        for &(j, _, rj, _) in &ay.partial {
            s += rj * self.xpref[j][k];
            for &(i, _, ri, _) in &ax.partial {
                s += self.values[i][j] * ri * rj;
            }
        }
        s
    }

    pub fn q(&self, x: f64, y: f64) -> f64 {
        self.q_with(&self.wx(x), &self.wy(y))
    }

    pub fn q_x_antideriv(&self, x: f64, y: f64) -> f64 {
        self.qx_with(&self.wx(x), &self.wy(y))
    }

    pub fn q_y_antideriv(&self, x: f64, y: f64) -> f64 {
        self.qy_with(&self.wx(x), &self.wy(y))
    }

    pub fn g(&self, x: f64, y: f64) -> f64 {
        self.g_with(&self.wx(x), &self.wy(y))
    }

    /// `∂y g = q^x` and `∂y² g = ∂y q^x` at a point.
    pub fn g_dy(&self, x: f64, y: f64) -> f64 {
        self.q_x_antideriv(x, y)
    }

    fn sample_with(&self, template: &GridField, f: impl Fn(&Self, &AxisWeights, &AxisWeights) -> f64) -> GridField {
        let xs: Vec<AxisWeights> = (0..template.nx()).map(|i| self.wx(template.x(i))).collect();
        let mut out = template.zeroed();
        for j in 0..template.ny() {
            let ay = self.wy(template.y(j));
            for (i, ax) in xs.iter().enumerate() {
                out.set(i, j, f(self, ax, &ay));
            }
        }
        out
    }

    /// Samples `q` on the nodes of `template`.
    pub fn sample_q_on(&self, template: &GridField) -> GridField {
        self.sample_with(template, Self::q_with)
    }

    /// Samples `g` on the nodes of `template`.
    pub fn sample_g_on(&self, template: &GridField) -> GridField {
        self.sample_with(template, Self::g_with)
    }

    /// Samples `g` on the nodes of `template` after mapping node `(x, y)` to
    /// `((x - cx)/scale, (y - cy)/scale)`.
    pub fn sample_g_mapped(&self, template: &GridField, cx: f64, cy: f64, scale: f64) -> GridField {
        let xs: Vec<AxisWeights> = (0..template.nx()).map(|i| self.wx((template.x(i) - cx) / scale)).collect();
        let mut out = template.zeroed();
        for j in 0..template.ny() {
            let ay = self.wy((template.y(j) - cy) / scale);
            for (i, ax) in xs.iter().enumerate() {
                out.set(i, j, self.g_with(ax, &ay));
            }
        }
        out
    }

    /// Grid covering the support grown by one more epsilon on every side.
    pub fn default_grid(&self, h: f64) -> Result<GridField> {
        let e = self.epsilon();
        let (x0, x1, y0, y1) = self.support();
        GridField::covering(x0 - e, x1 + e, y0 - e, y1 + e, h)
    }

    fn check_separated(&self) -> Result<()> {
        let shortest = |b: &[f64]| b.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let limit = shortest(&self.xb).min(shortest(&self.yb)) / 2.0;
        if self.epsilon() >= limit {
            return Err(Error::Resolution(format!(
                "epsilon {} must be below half the shortest cell ({limit})",
                self.epsilon()
            )));
        }
        Ok(())
    }

    /// The five norms of `g` from closed forms and one-dimensional quadrature near
    /// breakpoints. Requires epsilon below half of every cell width.
    pub fn norm_report(&self) -> Result<NormReport> {
        self.check_separated()?;
        let eps = self.epsilon();
        let (nx, ny) = (self.xb.len() - 1, self.yb.len() - 1);

        // ‖q‖₁: exact in x for each y, composite Simpson in y across kernel windows.
        let mut mixed = 0.0;
        for j in 0..ny {
            let column: Vec<f64> = (0..nx).map(|i| self.values[i][j]).collect();
            let far = self.yb[j + 1] - self.yb[j] - 2.0 * eps;
            mixed += far * l1_mollified_step(&self.xb, &column, eps);
        }
        for &b in &self.yb {
            mixed += simpson_panels(b - eps, b + eps, NEAR_PANELS, |y| {
                let ay = self.wy(y);
                let coeffs: Vec<f64> = (0..nx)
                    .map(|i| ay.partial.iter().map(|&(j, fj, _, _)| self.values[i][j] * fj).sum())
                    .collect();
                l1_mollified_step(&self.xb, &coeffs, eps)
            });
        }

        // ‖∂x q^y‖₁ = Σ_k ∫|jump of the mollified q^y across x = a_k| dy.
        let mut xx = 0.0;
        for k in 0..=nx {
            let jumps: Vec<f64> = (0..ny).map(|j| self.value_or_zero(k, j) - self.value_or_zero_prev(k, j)).collect();
            xx += MollifiedRamp::new(&self.yb, jumps, eps).l1();
        }
        let mut yy = 0.0;
        for l in 0..=ny {
            let jumps: Vec<f64> = (0..nx).map(|i| self.row_or_zero(i, l) - self.row_or_zero_prev(i, l)).collect();
            yy += MollifiedRamp::new(&self.xb, jumps, eps).l1();
        }

        // sup|q^y| is attained on some x-cell plateau; likewise sup|q^x| on a y-cell plateau.
        let x_sup = (0..nx).map(|i| MollifiedRamp::new(&self.yb, self.values[i].clone(), eps).sup()).fold(0.0, f64::max);
        let y_sup = (0..ny)
            .map(|j| MollifiedRamp::new(&self.xb, (0..nx).map(|i| self.values[i][j]).collect(), eps).sup())
            .fold(0.0, f64::max);

        Ok(NormReport::new(mixed, xx, yy, x_sup, y_sup))
    }

    fn value_or_zero(&self, i: usize, j: usize) -> f64 {
        self.values.get(i).map_or(0.0, |c| c[j])
    }

    fn value_or_zero_prev(&self, i: usize, j: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1][j]
        }
    }

    fn row_or_zero(&self, i: usize, j: usize) -> f64 {
        self.values[i].get(j).copied().unwrap_or(0.0)
    }

    fn row_or_zero_prev(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.values[i][j - 1]
        }
    }
}

/// `∫|Σ_c v_c Φ_c(x)| dx` for cell values `v` on breakpoints `bps`, with ε below half
/// of every cell width.
fn l1_mollified_step(bps: &[f64], v: &[f64], eps: f64) -> f64 {
    let m = v.len();
    let mut total = 0.0;
    for c in 0..m {
        if v[c] != 0.0 {
            total += v[c].abs() * (bps[c + 1] - bps[c] - 2.0 * eps);
        }
    }
    for k in 0..=m {
        let below = if k == 0 { 0.0 } else { v[k - 1] };
        let above = if k == m { 0.0 } else { v[k] };
        total += eps * abs_integral_of_blend(below, above - below);
    }
    total
}

/// `∫_{-1}^{1} |a + d·K(z)| dz` in closed form.
fn abs_integral_of_blend(a: f64, d: f64) -> f64 {
    let end = a + d;
    if a * end >= 0.0 {
        return (2.0 * a + d).abs();
    }
    let target = -a / d;
    // safeguarded Newton on the increasing cdf
    let (mut lo, mut hi, mut z) = (-1.0_f64, 1.0_f64, 0.0_f64);
    for _ in 0..100 {
        let r = kernel::cdf(z) - target;
        if r.abs() < 1e-15 {
            break;
        }
        if r < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let slope = kernel::density(z);
        let next = z - r / slope;
        z = if slope > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    let at = a * (z + 1.0) + d * kernel::cdf2(z);
    at.abs() + (2.0 * a + d - at).abs()
}

fn simpson_panels(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        s += 2.0 * f(a + k as f64 * h);
    }
    for k in 0..panels {
        s += 4.0 * f(a + (k as f64 + 0.5) * h);
    }
    h / 6.0 * s
}

/// `∫|f|` on `[a, b]` for a smooth `f`: panels are split at sign changes and each
/// piece integrated by Simpson's rule.
fn abs_integral_smooth(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let simpson = |lo: f64, hi: f64| (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
    let mut total = 0.0;
    let mut left = a;
    let mut fl = f(a);
    for k in 1..=panels {
        let right = if k == panels { b } else { a + k as f64 * h };
        let fr = f(right);
        if fl * fr < 0.0 {
            let (mut lo, mut hi, mut flo) = (left, right, fl);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            let root = 0.5 * (lo + hi);
            total += simpson(left, root).abs() + simpson(root, right).abs();
        } else {
            total += simpson(left, right).abs();
        }
        left = right;
        fl = fr;
    }
    total
}

/// The mollified antiderivative `E = ρ_ε * e` of a step function with cell values `d`.
/// Away from the breakpoints `E` equals the exact piecewise-linear `e`.
struct MollifiedRamp<'a> {
    bps: &'a [f64],
    slopes: Vec<f64>,
    /// `e` at each breakpoint.
    at_bps: Vec<f64>,
    eps: f64,
}

impl<'a> MollifiedRamp<'a> {
    fn new(bps: &'a [f64], slopes: Vec<f64>, eps: f64) -> Self {
        let mut at_bps = vec![0.0; bps.len()];
        for c in 0..slopes.len() {
            at_bps[c + 1] = at_bps[c] + slopes[c] * (bps[c + 1] - bps[c]);
        }
        Self { bps, slopes, at_bps, eps }
    }

    fn slope(&self, c: isize) -> f64 {
        if c < 0 {
            0.0
        } else {
            self.slopes.get(c as usize).copied().unwrap_or(0.0)
        }
    }

    /// `E(b_l + ε z)` for `z ∈ [-1, 1]`.
    fn near(&self, l: usize, z: f64) -> f64 {
        let below = self.slope(l as isize - 1);
        let kink = self.slope(l as isize) - below;
        self.at_bps[l] + self.eps * (below * z + kink * kernel::cdf2(z))
    }

    fn l1(&self) -> f64 {
        if self.slopes.iter().all(|&s| s == 0.0) {
            return 0.0;
        }
        let eps = self.eps;
        let mut total = 0.0;
        for c in 0..self.slopes.len() {
            let u = self.at_bps[c] + self.slopes[c] * eps;
            let v = self.at_bps[c + 1] - self.slopes[c] * eps;
            total += abs_linear(u, v, self.bps[c + 1] - self.bps[c] - 2.0 * eps);
        }
        for l in 0..self.bps.len() {
            total += eps * abs_integral_smooth(-1.0, 1.0, NEAR_PANELS, |z| self.near(l, z));
        }
        total
    }

    fn sup(&self) -> f64 {
        let mut best: f64 = 0.0;
        for l in 0..self.bps.len() {
            for s in 0..=NEAR_PANELS {
                let z = -1.0 + 2.0 * s as f64 / NEAR_PANELS as f64;
                best = best.max(self.near(l, z).abs());
            }
        }
        best
    }
}

fn abs_linear(u: f64, v: f64, w: f64) -> f64 {
    if u * v >= 0.0 {
        0.5 * (u.abs() + v.abs()) * w
    } else {
        0.5 * (u * u + v * v) / (u - v).abs() * w
    }
}

/// The five norms of a doubly integrated function `g` with `∂x∂y g = q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub mixed_l1: f64,
    pub xx_l1: f64,
    pub yy_l1: f64,
    pub x_sup: f64,
    pub y_sup: f64,
    #[serde(with = "ratio_serde")]
    pub ratio: f64,
}

impl NormReport {
    pub fn new(mixed_l1: f64, xx_l1: f64, yy_l1: f64, x_sup: f64, y_sup: f64) -> Self {
        let den = xx_l1 + yy_l1 + x_sup + y_sup;
        let ratio = if den > 0.0 { mixed_l1 / den } else { f64::NAN };
        Self { mixed_l1, xx_l1, yy_l1, x_sup, y_sup, ratio }
    }

    pub fn denominator(&self) -> f64 {
        self.xx_l1 + self.yy_l1 + self.x_sup + self.y_sup
    }

    pub fn ratio(&self) -> Option<f64> {
        self.ratio.is_finite().then_some(self.ratio)
    }

    /// Same norms computed from a sampled `q` through cumulative sums and central
    /// differences.
    pub fn from_grid(q: &GridField) -> Self {
        let qy = q.cumulative(1);
        let qx = q.cumulative(0);
        Self::new(q.l1(), qy.d_x().l1(), qx.d_y().l1(), qy.max_abs(), qx.max_abs())
    }

    /// Multiplies `g` by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.mixed_l1 * c, self.xx_l1 * c, self.yy_l1 * c, self.x_sup * c, self.y_sup * c)
    }
}

mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("undefined")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "undefined" => Ok(f64::NAN),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
        }
    }
}

/// Samples the mollified step function on a grid covering `[-1-2ε, 1+2ε]²`.
pub fn smooth_xy(p: &StepFunction2D, eps: f64, h: f64) -> Result<GridField> {
    if !(h > 0.0 && h <= eps / 8.0) {
        return Err(Error::Resolution(format!("grid step {h} does not resolve the kernel (need h <= eps/8 = {})", eps / 8.0)));
    }
    let s = SmoothedStep::new(p, eps)?;
    Ok(s.sample_q_on(&s.default_grid(h)?))
}

/// Largest `|q^y|` on the top row and largest `|q^x|` on the right column, from
/// cumulative sums.
pub fn check_vanishing_antiderivatives(q: &GridField) -> (f64, f64) {
    let h = q.h();
    let top = (0..q.nx()).map(|i| (h * (0..q.ny()).map(|j| q.get(i, j)).sum::<f64>()).abs()).fold(0.0, f64::max);
    let right = (0..q.ny()).map(|j| (h * q.row(j).iter().sum::<f64>()).abs()).fold(0.0, f64::max);
    (top, right)
}

/// `g = ∫∫ q` from the lower-left corner, by corrected-trapezoid cumulative sums.
pub fn assemble_g(q: &GridField) -> Result<GridField> {
    let (top, right) = check_vanishing_antiderivatives(q);
    let scale = q.l1().max(f64::MIN_POSITIVE);
    if top > 1e-8 * scale || right > 1e-8 * scale {
        return Err(Error::Assembly(format!(
            "antiderivatives do not vanish at the far edges ({top:e}, {right:e})"
        )));
    }
    if q.max_abs_frame() > 1e-12 * q.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Assembly("q does not vanish on the grid frame".into()));
    }
    Ok(q.cumulative(0).cumulative(1))
}

/// Result of the epsilon search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonChoice {
    pub epsilon: f64,
    pub initial_epsilon: f64,
    pub halvings: u32,
    pub target_ratio: f64,
    pub report: NormReport,
}

pub const MAX_EPSILON_HALVINGS: u32 = 30;

/// Halves epsilon from a quarter of the shortest cell until the norm ratio of the
/// mollified function reaches 95% of `target_ratio`.
pub fn select_epsilon(p: &StepFunction2D, target_ratio: f64) -> Result<EpsilonChoice> {
    let shortest = p.xgrid().shortest_cell().min(p.ygrid().shortest_cell());
    let initial = to_f64(&shortest) / 4.0;
    let mut eps = initial;
    for halvings in 0..=MAX_EPSILON_HALVINGS {
        let report = SmoothedStep::new(p, eps)?.norm_report()?;
        let done = match report.ratio() {
            None => true,
            Some(r) => r >= 0.95 * target_ratio,
        };
        if done {
            return Ok(EpsilonChoice { epsilon: eps, initial_epsilon: initial, halvings, target_ratio, report });
        }
        eps /= 2.0;
    }
    Err(Error::SearchExhausted(format!(
        "ratio did not reach 95% of {target_ratio} within {MAX_EPSILON_HALVINGS} halvings"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ornstein::build_p1;
    use crate::rational::rat;

    fn p1() -> StepFunction2D {
        build_p1(&rat(1, 2)).unwrap().p
    }

    #[test]
    fn blend_integral_matches_quadrature() {
        for (a, d) in [(1.0, -3.0), (-0.5, 2.0), (0.3, 0.4), (0.0, -1.0), (2.0, -2.5)] {
            let direct = kernel::adaptive_simpson(&|z| (a + d * kernel::cdf(z)).abs(), -1.0, 1.0, 1e-13);
            assert!((abs_integral_of_blend(a, d) - direct).abs() < 1e-9, "{a} {d}");
        }
    }

    #[test]
    fn pointwise_forms_agree() {
        let s = SmoothedStep::new(&p1(), 1.0 / 16.0).unwrap();
        // q^x is the x-integral of q; check by quadrature at a few points.
        for (x, y) in [(-0.47, -0.2), (0.02, 0.13), (0.6, -0.45), (0.1, 0.0)] {
            let direct = kernel::adaptive_simpson(&|t| s.q(t, y), -1.2, x, 1e-12);
            assert!((s.q_x_antideriv(x, y) - direct).abs() < 1e-9);
            let direct = kernel::adaptive_simpson(&|t| s.q(x, t), -1.2, y, 1e-12);
            assert!((s.q_y_antideriv(x, y) - direct).abs() < 1e-9);
            let direct = kernel::adaptive_simpson(&|t| s.q_x_antideriv(x, t), -1.2, y, 1e-12);
            assert!((s.g(x, y) - direct).abs() < 1e-9);
        }
        assert_eq!(s.g(1.3, 1.3), 0.0);
    }

    #[test]
    fn zero_function() {
        let z = StepFunction2D::zero(p1().xgrid().clone(), p1().ygrid().clone());
        let q = smooth_xy(&z, 0.05, 0.05 / 8.0).unwrap();
        assert_eq!(q.max_abs(), 0.0);
        assert_eq!(check_vanishing_antiderivatives(&q), (0.0, 0.0));
        assert_eq!(assemble_g(&q).unwrap().max_abs(), 0.0);
        let r = SmoothedStep::new(&z, 0.05).unwrap().norm_report().unwrap();
        assert!(r.ratio().is_none());
        assert!(serde_json::to_string(&r).unwrap().contains("\"undefined\""));
        let choice = select_epsilon(&z, 0.3).unwrap();
        assert_eq!(choice.halvings, 0);
    }

    #[test]
    fn resolution_and_separation_errors() {
        assert!(matches!(smooth_xy(&p1(), 0.05, 0.01), Err(Error::Resolution(_))));
        assert!(SmoothedStep::new(&p1(), 0.2).unwrap().norm_report().is_err());
        assert!(SmoothedStep::new(&p1(), -1.0).is_err());
    }

    #[test]
    fn mass_zero_and_vanishing_edges() {
        let q = smooth_xy(&p1(), 1.0 / 16.0, 1.0 / 256.0).unwrap();
        assert!(q.integral().abs() < 1e-10);
        let (a, b) = check_vanishing_antiderivatives(&q);
        assert!(a <= 1e-8 * q.l1() && b <= 1e-8 * q.l1());
    }

    #[test]
    fn closed_form_report_matches_grid_route() {
        let eps = 1.0 / 16.0;
        let s = SmoothedStep::new(&p1(), eps).unwrap();
        let exact = s.norm_report().unwrap();
        let grid = NormReport::from_grid(&s.sample_q_on(&s.default_grid(eps / 32.0).unwrap()));
        for (a, b) in [
            (exact.mixed_l1, grid.mixed_l1),
            (exact.xx_l1, grid.xx_l1),
            (exact.yy_l1, grid.yy_l1),
            (exact.x_sup, grid.x_sup),
            (exact.y_sup, grid.y_sup),
        ] {
            assert!((a - b).abs() < 2e-3 * a.max(1e-3), "{a} vs {b}");
        }
    }
}
