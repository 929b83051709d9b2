//! The step-function sequence p_1, p_2, ...: construction, refinement by strips
//! and checkerboards, the free-parameter search, and exact property checks.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{int, rat, serde_rational, Rational};
use crate::step::{Partition1D, StepFunction2D};

/// Lower-bound constant for the mass growth `‖p_n‖₁ > c1·δ·n`.
pub fn mass_growth_rate() -> Rational {
    rat(1, 5)
}

/// Bound on `∫Var_x p^y dy / (δ‖p‖₁)`.
pub fn variation_bound() -> Rational {
    int(3)
}

/// Fraction of the small-alpha mass-growth limit a refinement must realise.
pub fn growth_margin() -> Rational {
    rat(3, 4)
}

pub const MAX_HALVINGS: u32 = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionState {
    pub n: usize,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    pub p: StepFunction2D,
    #[serde(with = "serde_rational::vec")]
    pub alpha_history: Vec<Rational>,
}

impl ConstructionState {
    pub fn y_partition(&self) -> &Partition1D {
        self.p.ygrid()
    }

    pub fn x_partition(&self) -> &Partition1D {
        self.p.xgrid()
    }
}

fn check_delta(delta: &Rational) -> Result<()> {
    if !delta.is_positive() || *delta >= int(1) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

pub fn build_p1(delta: &Rational) -> Result<ConstructionState> {
    check_delta(delta)?;
    let quarter = delta / int(4);
    let xgrid = Partition1D::unit_with([rat(-1, 2), int(0), rat(1, 2)])?;
    let ygrid = Partition1D::unit_with([-delta.clone(), -quarter.clone(), quarter, delta.clone()])?;
    let mut values = vec![vec![Rational::zero(); 5]; 4];
    values[1][1] = int(1);
    values[2][3] = int(1);
    values[2][1] = int(-1);
    values[1][3] = int(-1);
    let p = StepFunction2D::new(xgrid, ygrid, values)?;
    Ok(ConstructionState { n: 1, delta: delta.clone(), p, alpha_history: Vec::new() })
}

/// Indices (into the y-breakpoints) of the strip centres: every breakpoint below
/// zero except -1 and the first interior one.
pub fn strip_centers(state: &ConstructionState) -> Vec<usize> {
    let bps = state.y_partition().breakpoints();
    (2..bps.len() - 1).filter(|&k| bps[k].is_negative()).collect()
}

/// Checks that `alpha` gives an exact tiling and well-separated strips.
pub fn check_admissible(state: &ConstructionState, alpha: &Rational) -> Result<()> {
    let bad = |why: String| Err(Error::Parameter(format!("alpha = {alpha} is inadmissible: {why}")));
    if !alpha.is_positive() {
        return bad("must be positive".into());
    }
    let tiles = int(2) * &state.delta / alpha;
    if !tiles.is_integer() {
        return bad("2*delta/alpha is not an integer".into());
    }
    let half_width = alpha / (int(2) * &state.delta);
    for b in state.x_partition().breakpoints() {
        if !((b + int(1)) / &half_width).is_integer() {
            return bad(format!("x-breakpoint {b} is off the checkerboard grid"));
        }
    }
    let bps = state.y_partition().breakpoints();
    let half = alpha / int(2);
    for k in strip_centers(state) {
        let c = &bps[k];
        if half >= c - &bps[k - 1] || half >= &bps[k + 1] - c {
            return bad(format!("strip around {c} leaves its neighbouring cells"));
        }
        if !(c + &half).is_negative() {
            return bad(format!("strip around {c} reaches y = 0"));
        }
    }
    Ok(())
}

/// Exact value of the x-antiderivative at `x` on y-cell `j`, using a prefix table.
fn antideriv_on_cell(p: &StepFunction2D, prefix: &[Vec<Rational>], x: &Rational, j: usize) -> Rational {
    let bps = p.xgrid().breakpoints();
    let k = match bps.binary_search(x) {
        Ok(k) => return prefix[k][j].clone(),
        Err(0) => return Rational::zero(),
        Err(k) if k == bps.len() => return prefix[k - 1][j].clone(),
        Err(k) => k - 1,
    };
    &prefix[k][j] + p.value(k, j) * (x - &bps[k])
}

/// Exact `∫ p^x(x, ·) dx` over [-1, 1] on y-cell `j`.
fn antideriv_integral(p: &StepFunction2D, prefix: &[Vec<Rational>], j: usize) -> Rational {
    let xg = p.xgrid();
    (0..xg.cells()).fold(Rational::zero(), |acc, k| acc + (&prefix[k][j] + &prefix[k + 1][j]) * xg.width(k) / int(2))
}

pub fn refine_step(state: &ConstructionState, alpha: &Rational) -> Result<ConstructionState> {
    check_admissible(state, alpha)?;
    let p = &state.p;
    let delta = &state.delta;
    let old_y = p.ygrid().breakpoints();
    let centers = strip_centers(state);
    let half = alpha / int(2);

    let mut ybps: Vec<Rational> = old_y.to_vec();
    for &k in &centers {
        for e in [&old_y[k] - &half, &old_y[k] + &half] {
            ybps.push(-&e);
            ybps.push(e);
        }
    }
    ybps.sort();
    ybps.dedup();
    let ygrid = Partition1D::new(ybps)?;

    let half_width = alpha / (int(2) * delta);
    let ticks = (int(2) / &half_width).to_integer();
    let ticks: i64 = num::ToPrimitive::to_i64(&ticks).ok_or_else(|| Error::Parameter("alpha too small".into()))?;
    let xgrid = p.xgrid().merge(&Partition1D::new((0..=ticks).map(|m| int(-1) + &half_width * int(m)).collect())?);

    let old_x = p.xgrid();
    let xmap: Vec<usize> = (0..xgrid.cells())
        .map(|i| match old_x.locate(&xgrid.midpoint(i)) {
            crate::step::Location::Cell(c) => c,
            _ => unreachable!("refined x-cells lie inside the old partition"),
        })
        .collect();

    // Checkerboard amplitudes per strip and per rectangle K.
    let prefix = p.x_prefix();
    let k_width = alpha / delta;
    let k_count = (ticks / 2) as usize;
    let amplitude = delta / (int(2) * alpha);
    let betas: Vec<Vec<Rational>> = centers
        .iter()
        .map(|&k| {
            (0..k_count)
                .map(|m| {
                    let xm = int(-1) + &k_width * (Rational::from_integer((m as i64).into()) + rat(1, 2));
                    let drop = antideriv_on_cell(p, &prefix, &xm, k - 1) - antideriv_on_cell(p, &prefix, &xm, k);
                    drop * &amplitude
                })
                .collect()
        })
        .collect();

    let ny = ygrid.cells();
    let mut values = vec![vec![Rational::zero(); ny]; xgrid.cells()];
    for j in 0..ny {
        let ym = ygrid.midpoint(j);
        if ym.is_positive() {
            continue;
        }
        let strip = centers.iter().position(|&k| (&ym - &old_y[k]).abs() < half);
        match strip {
            Some(s) => {
                let k = centers[s];
                let lower = ym < old_y[k];
                for (i, col) in values.iter_mut().enumerate() {
                    let oi = xmap[i];
                    let r1 = (p.value(oi, k - 1) + p.value(oi, k)) / int(2);
                    let xm = xgrid.midpoint(i);
                    let offset = (&xm + int(1)) / &k_width;
                    let m = offset.floor().to_integer();
                    let left = offset - Rational::from_integer(m.clone()) < rat(1, 2);
                    let m: usize = num::ToPrimitive::to_usize(&m).unwrap();
                    let beta = &betas[s][m];
                    col[j] = if lower == left { r1 + beta } else { r1 - beta };
                }
            }
            None => {
                let oj = match p.ygrid().locate(&ym) {
                    crate::step::Location::Cell(c) => c,
                    _ => unreachable!("refined y-cells lie inside the old partition"),
                };
                for (i, col) in values.iter_mut().enumerate() {
                    col[j] = p.value(xmap[i], oj).clone();
                }
            }
        }
    }
    for col in values.iter_mut() {
        for j in 0..ny {
            if ygrid.midpoint(j).is_positive() {
                col[j] = -col[ny - 1 - j].clone();
            }
        }
    }

    let next = StepFunction2D::new(xgrid, ygrid, values)?;
    let mut alpha_history = state.alpha_history.clone();
    alpha_history.push(alpha.clone());
    Ok(ConstructionState { n: state.n + 1, delta: delta.clone(), p: next, alpha_history })
}

/// The small-alpha limit of `‖p_{n+1}‖₁ - ‖p_n‖₁` for the strips actually placed:
/// `δ/2` times the summed `∫(p^x below - p^x above) dx` over all strips (both signs of y).
pub fn growth_limit(state: &ConstructionState) -> Rational {
    let p = &state.p;
    let prefix = p.x_prefix();
    let drops = strip_centers(state).into_iter().fold(Rational::zero(), |acc, k| {
        acc + antideriv_integral(p, &prefix, k - 1) - antideriv_integral(p, &prefix, k)
    });
    &state.delta * drops
}

/// `δ/2 · ∫Var_y p^x dx`, the growth the whole y-variation would produce if every
/// jump carried a strip.
pub fn full_variation_growth(state: &ConstructionState) -> Rational {
    &state.delta / int(2) * state.p.integral_var_y_of_x_antideriv()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrial {
    #[serde(with = "serde_rational")]
    pub alpha: Rational,
    pub admissible: bool,
    #[serde(with = "serde_rational")]
    pub growth: Rational,
    #[serde(with = "serde_rational")]
    pub growth_limit: Rational,
    #[serde(with = "serde_rational")]
    pub variation_ratio: Rational,
    pub accepted: bool,
}

/// Evaluates one candidate alpha without committing to it.
pub fn try_alpha(state: &ConstructionState, alpha: &Rational) -> Result<(AlphaTrial, Option<ConstructionState>)> {
    let limit = growth_limit(state);
    let rejected = |admissible| AlphaTrial {
        alpha: alpha.clone(),
        admissible,
        growth: Rational::zero(),
        growth_limit: limit.clone(),
        variation_ratio: Rational::zero(),
        accepted: false,
    };
    if check_admissible(state, alpha).is_err() {
        return Ok((rejected(false), None));
    }
    let next = refine_step(state, alpha)?;
    let l1 = next.p.l1_norm();
    let growth = &l1 - state.p.l1_norm();
    let variation_ratio = next.p.integral_var_x_of_y_antideriv() / (&state.delta * &l1);
    let n_next = int(next.n as i64);
    let accepted = growth >= growth_margin() * &limit
        && variation_ratio < variation_bound()
        && l1 > mass_growth_rate() * &state.delta * n_next;
    let trial = AlphaTrial { alpha: alpha.clone(), admissible: true, growth, growth_limit: limit, variation_ratio, accepted };
    Ok((trial, Some(next)))
}

/// Halving search from a quarter of the shortest y-interval. Returns the accepted
/// alpha, the refined state, and every trial made along the way.
pub fn search_alpha(state: &ConstructionState) -> Result<(Rational, ConstructionState, Vec<AlphaTrial>)> {
    let mut alpha = state.y_partition().shortest_cell() / int(4);
    let mut trials = Vec::new();
    for _ in 0..=MAX_HALVINGS {
        let (trial, next) = try_alpha(state, &alpha)?;
        let accepted = trial.accepted;
        trials.push(trial);
        if accepted {
            return Ok((alpha, next.unwrap(), trials));
        }
        alpha /= int(2);
    }
    Err(Error::SearchExhausted(format!(
        "no admissible alpha after {MAX_HALVINGS} halvings at stage {}",
        state.n
    )))
}

pub fn select_alpha(state: &ConstructionState) -> Result<Rational> {
    search_alpha(state).map(|(alpha, _, _)| alpha)
}

pub fn construct_sequence(delta: &Rational, stages: usize) -> Result<Vec<ConstructionState>> {
    if stages == 0 {
        return Err(Error::Parameter("at least one stage is required".into()));
    }
    let mut states = vec![build_p1(delta)?];
    while states.len() < stages {
        let (_, next, _) = search_alpha(states.last().unwrap())?;
        states.push(next);
    }
    Ok(states)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub n: usize,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    pub cells_valid: bool,
    pub support_in_square: bool,
    #[serde(with = "serde_rational")]
    pub line_integral_max_residual: Rational,
    pub line_integrals_vanish: bool,
    #[serde(with = "serde_rational")]
    pub l1: Rational,
    #[serde(with = "serde_rational")]
    pub l1_lower_bound: Rational,
    pub l1_bound_holds: bool,
    #[serde(with = "serde_rational")]
    pub var_x_integral: Rational,
    #[serde(with = "serde_rational")]
    pub variation_ratio: Rational,
    #[serde(with = "serde_rational")]
    pub variation_bound: Rational,
    pub variation_ratio_holds: bool,
    #[serde(with = "serde_rational")]
    pub var_y_integral: Rational,
    #[serde(with = "serde_rational")]
    pub first_stage_variation: Rational,
    pub var_y_integral_constant: bool,
    #[serde(with = "serde_rational::vec")]
    pub monotone_range: Vec<Rational>,
    #[serde(with = "serde_rational")]
    pub max_drop: Rational,
    #[serde(with = "serde_rational")]
    pub min_drop: Rational,
    #[serde(with = "serde_rational")]
    pub drop_bound: Rational,
    pub monotone_with_bounded_drops: bool,
    #[serde(with = "serde_rational")]
    pub sup_x: Rational,
    #[serde(with = "serde_rational")]
    pub sup_y: Rational,
    #[serde(with = "serde_rational")]
    pub sup_y_bound: Rational,
    pub sup_bounds_hold: bool,
    pub odd_in_y: bool,
    #[serde(with = "serde_rational")]
    pub combined_lhs: Rational,
    #[serde(with = "serde_rational")]
    pub combined_rhs: Rational,
    pub combined_inequality_holds: bool,
    /// `‖p‖₁ / combined_lhs`, the step-function analogue of the mixed-derivative ratio.
    #[serde(with = "serde_rational")]
    pub norm_ratio: Rational,
}

impl PropertyReport {
    /// All nine structural properties; the combined inequality is reported separately.
    pub fn all_pass(&self) -> bool {
        self.cells_valid
            && self.support_in_square
            && self.line_integrals_vanish
            && self.l1_bound_holds
            && self.variation_ratio_holds
            && self.var_y_integral_constant
            && self.monotone_with_bounded_drops
            && self.sup_bounds_hold
            && self.odd_in_y
    }
}

pub fn verify_properties(state: &ConstructionState) -> Result<PropertyReport> {
    let p = &state.p;
    let delta = &state.delta;
    let n = state.n;

    let cells_valid = p.values().len() == p.xgrid().cells() && p.values().iter().all(|c| c.len() == p.ygrid().cells());
    let support_in_square = p.xgrid().is_unit() && p.ygrid().is_unit();

    let (vertical, horizontal) = p.line_integrals();
    let line_integral_max_residual =
        vertical.iter().chain(horizontal.iter()).map(|v| v.abs()).max().unwrap_or_else(Rational::zero);

    let l1 = p.l1_norm();
    let l1_lower_bound = mass_growth_rate() * delta * int(n as i64);
    let var_x_integral = p.integral_var_x_of_y_antideriv();
    let variation_ratio = if l1.is_zero() { Rational::zero() } else { &var_x_integral / (delta * &l1) };
    let var_y_integral = p.integral_var_y_of_x_antideriv();
    let first_stage_variation = build_p1(delta)?.p.integral_var_y_of_x_antideriv();

    // Monotonicity of p^x in y between the first and last interior y-breakpoints.
    let prefix = p.x_prefix();
    let ybps = p.ygrid().breakpoints();
    let ny = p.ygrid().cells();
    let (first, last) = (1, ny.saturating_sub(2));
    let mut max_drop = Rational::zero();
    let mut min_drop: Option<Rational> = None;
    for row in &prefix {
        for j in first..last {
            let drop = &row[j] - &row[j + 1];
            if drop > max_drop {
                max_drop = drop.clone();
            }
            if min_drop.as_ref().is_none_or(|m| drop < *m) {
                min_drop = Some(drop);
            }
        }
    }
    let min_drop = min_drop.unwrap_or_else(Rational::zero);
    let drop_bound = Rational::one() / Rational::from_integer(num::pow(num::BigInt::from(2), n - 1));
    let monotone_with_bounded_drops = !min_drop.is_negative() && max_drop <= drop_bound;

    let (sup_x, sup_y) = p.sup_norm_antiderivatives();
    let sup_y_bound = delta * (int(2) - &drop_bound);
    let sup_bounds_hold = sup_x <= int(1) && sup_y <= sup_y_bound;

    let combined_lhs = &var_x_integral + &var_y_integral + &sup_x + &sup_y;
    let combined_rhs = variation_bound() * delta * &l1;
    let norm_ratio = if combined_lhs.is_zero() { Rational::zero() } else { &l1 / &combined_lhs };

    Ok(PropertyReport {
        n,
        delta: delta.clone(),
        cells_valid,
        support_in_square,
        line_integrals_vanish: line_integral_max_residual.is_zero(),
        line_integral_max_residual,
        l1_bound_holds: l1 > l1_lower_bound,
        l1: l1.clone(),
        l1_lower_bound,
        variation_ratio_holds: variation_ratio < variation_bound(),
        var_x_integral,
        variation_ratio,
        variation_bound: variation_bound(),
        var_y_integral_constant: var_y_integral == first_stage_variation,
        var_y_integral,
        first_stage_variation,
        monotone_range: vec![ybps[first].clone(), ybps[(last + 1).min(ny)].clone()],
        max_drop,
        min_drop,
        drop_bound,
        monotone_with_bounded_drops,
        sup_x,
        sup_y,
        sup_y_bound,
        sup_bounds_hold,
        odd_in_y: p.is_odd_in_y(),
        combined_inequality_holds: combined_lhs < combined_rhs,
        combined_lhs,
        combined_rhs,
        norm_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_values_and_report() {
        let s = build_p1(&rat(1, 2)).unwrap();
        assert_eq!(s.p.l1_norm(), rat(3, 4));
        assert_eq!(s.p.eval(&rat(-1, 4), &rat(-3, 16)).unwrap(), int(1));
        let r = verify_properties(&s).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.variation_ratio, rat(5, 2));
        assert_eq!(r.var_y_integral, int(1));
        assert_eq!((r.sup_x.clone(), r.sup_y.clone()), (rat(1, 2), rat(3, 8)));
    }

    #[test]
    fn delta_out_of_range() {
        for d in [int(0), int(1), int(2), rat(-1, 2)] {
            assert!(matches!(build_p1(&d), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn admissibility() {
        let s = build_p1(&rat(1, 2)).unwrap();
        assert_eq!(strip_centers(&s).len(), 1);
        assert!(check_admissible(&s, &rat(1, 32)).is_ok());
        assert!(check_admissible(&s, &rat(3, 32)).is_err());
        assert!(check_admissible(&s, &rat(1, 2)).is_err());
        assert!(check_admissible(&s, &int(0)).is_err());
        assert!(matches!(refine_step(&s, &rat(1, 3)), Err(Error::Parameter(_))));
    }

    #[test]
    fn refinement_keeps_outside_of_strips() {
        let s = build_p1(&rat(1, 2)).unwrap();
        let alpha = rat(1, 32);
        let t = refine_step(&s, &alpha).unwrap();
        let c = rat(-1, 8);
        for j in 0..t.p.ygrid().cells() {
            let ym = t.p.ygrid().midpoint(j);
            if (&ym - &c).abs() < &alpha / int(2) || (&ym + &c).abs() < rat(1, 64) {
                continue;
            }
            for i in 0..t.p.xgrid().cells() {
                let xm = t.p.xgrid().midpoint(i);
                assert_eq!(t.p.eval(&xm, &ym).unwrap(), s.p.eval(&xm, &ym).unwrap());
            }
        }
        assert!(verify_properties(&t).unwrap().all_pass());
    }

    #[test]
    fn alpha_search_first_stage() {
        let s = build_p1(&rat(1, 2)).unwrap();
        let alpha = select_alpha(&s).unwrap();
        assert!(check_admissible(&s, &alpha).is_ok());
        assert!(alpha <= rat(1, 32));
        assert_eq!(growth_limit(&s), rat(1, 8));
        assert_eq!(full_variation_growth(&s), rat(1, 4));
    }
}
