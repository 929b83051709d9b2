//! Piecewise-constant functions on rectangle partitions, with exact rational
//! integrals, antiderivatives, variations and sup norms.
//!
//! Values live on open cells only. Line queries that land on a breakpoint are
//! rejected with [`Error::UndefinedLine`]; callers query cell interiors.

use std::cmp::Ordering;

use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_rational, int, serde_rational, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
        }
    }
}

/// Where a coordinate falls relative to a partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Below,
    Above,
    Cell(usize),
    Breakpoint(usize),
}

/// Strictly increasing breakpoints. Cells are the open intervals between them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct Partition1D {
    breakpoints: Vec<Rational>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr(#[serde(with = "serde_rational::vec")] Vec<Rational>);

impl TryFrom<PartitionRepr> for Partition1D {
    type Error = Error;
    fn try_from(r: PartitionRepr) -> Result<Self> {
        Partition1D::new(r.0)
    }
}

impl From<Partition1D> for PartitionRepr {
    fn from(p: Partition1D) -> Self {
        PartitionRepr(p.breakpoints)
    }
}

impl Partition1D {
    pub fn new(breakpoints: Vec<Rational>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Domain("a partition needs at least two breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("partition breakpoints must be strictly increasing".into()));
        }
        Ok(Self { breakpoints })
    }

    /// A partition of [-1, 1] with the given interior breakpoints (unsorted input allowed).
    pub fn unit_with(interior: impl IntoIterator<Item = Rational>) -> Result<Self> {
        let mut bps: Vec<Rational> = interior.into_iter().collect();
        bps.push(int(-1));
        bps.push(int(1));
        bps.sort();
        bps.dedup();
        Self::new(bps)
    }

    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    pub fn cells(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn start(&self) -> &Rational {
        &self.breakpoints[0]
    }

    pub fn end(&self) -> &Rational {
        self.breakpoints.last().unwrap()
    }

    pub fn width(&self, cell: usize) -> Rational {
        &self.breakpoints[cell + 1] - &self.breakpoints[cell]
    }

    pub fn midpoint(&self, cell: usize) -> Rational {
        (&self.breakpoints[cell + 1] + &self.breakpoints[cell]) / int(2)
    }

    pub fn is_unit(&self) -> bool {
        *self.start() == int(-1) && *self.end() == int(1)
    }

    pub fn shortest_cell(&self) -> Rational {
        (0..self.cells()).map(|c| self.width(c)).min().unwrap()
    }

    pub fn locate(&self, t: &Rational) -> Location {
        match self.breakpoints.binary_search(t) {
            Ok(k) => Location::Breakpoint(k),
            Err(0) => Location::Below,
            Err(k) if k == self.breakpoints.len() => Location::Above,
            Err(k) => Location::Cell(k - 1),
        }
    }

    /// Union of both breakpoint sets.
    pub fn merge(&self, other: &Partition1D) -> Partition1D {
        let mut bps: Vec<Rational> = Vec::with_capacity(self.breakpoints.len() + other.breakpoints.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.breakpoints, &other.breakpoints);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => match x.cmp(y) {
                    Ordering::Less => {
                        i += 1;
                        x
                    }
                    Ordering::Greater => {
                        j += 1;
                        y
                    }
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                        x
                    }
                },
                (Some(x), None) => {
                    i += 1;
                    x
                }
                (None, Some(y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            bps.push(next.clone());
        }
        Partition1D { breakpoints: bps }
    }

    pub fn translate(&self, shift: &Rational) -> Partition1D {
        Partition1D { breakpoints: self.breakpoints.iter().map(|b| b + shift).collect() }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.breakpoints.iter().map(crate::rational::to_f64).collect()
    }
}

/// One-dimensional slice of a [`StepFunction2D`] along `axis` at a fixed other coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    pub axis: Axis,
    #[serde(with = "serde_rational")]
    pub coordinate: Rational,
    pub breakpoints: Partition1D,
    #[serde(with = "serde_rational::vec")]
    pub values: Vec<Rational>,
}

impl LineProfile {
    pub fn integral(&self) -> Rational {
        self.values
            .iter()
            .enumerate()
            .fold(Rational::zero(), |acc, (c, v)| acc + v * self.breakpoints.width(c))
    }

    /// Sum of absolute jumps between neighbouring cells.
    pub fn variation(&self) -> Rational {
        self.values
            .windows(2)
            .fold(Rational::zero(), |acc, w| acc + (&w[1] - &w[0]).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineOp {
    Add,
    Sub,
}

/// Piecewise-constant function; `values[i][j]` is the value on x-cell `i` times y-cell `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction2D {
    xgrid: Partition1D,
    ygrid: Partition1D,
    #[serde(with = "serde_rational::matrix")]
    values: Vec<Vec<Rational>>,
}

/// Exact integral of |L| over an interval of length `width`, where L is linear
/// with endpoint values `u` and `v`.
pub fn integral_abs_linear(u: &Rational, v: &Rational, width: &Rational) -> Rational {
    if u.is_zero() && v.is_zero() {
        return Rational::zero();
    }
    let same_sign = !(u.is_positive() && v.is_negative() || u.is_negative() && v.is_positive());
    if same_sign {
        (u.abs() + v.abs()) * width / int(2)
    } else {
        (u * u + v * v) * width / (int(2) * (u - v).abs())
    }
}

impl StepFunction2D {
    pub fn new(xgrid: Partition1D, ygrid: Partition1D, values: Vec<Vec<Rational>>) -> Result<Self> {
        if values.len() != xgrid.cells() || values.iter().any(|col| col.len() != ygrid.cells()) {
            return Err(Error::Domain(format!(
                "value matrix must be {}x{}",
                xgrid.cells(),
                ygrid.cells()
            )));
        }
        Ok(Self { xgrid, ygrid, values })
    }

    pub fn zero(xgrid: Partition1D, ygrid: Partition1D) -> Self {
        let values = vec![vec![Rational::zero(); ygrid.cells()]; xgrid.cells()];
        Self { xgrid, ygrid, values }
    }

    /// Indicator of the open rectangle (x0,x1)x(y0,y1) inside [-1,1]^2.
    pub fn indicator(x0: Rational, x1: Rational, y0: Rational, y1: Rational) -> Result<Self> {
        let xgrid = Partition1D::unit_with([x0, x1.clone()])?;
        let ygrid = Partition1D::unit_with([y0, y1.clone()])?;
        let mut f = Self::zero(xgrid, ygrid);
        let xi = f.xgrid.breakpoints.iter().position(|b| *b == x1).unwrap() - 1;
        let yj = f.ygrid.breakpoints.iter().position(|b| *b == y1).unwrap() - 1;
        f.values[xi][yj] = int(1);
        Ok(f)
    }

    pub fn xgrid(&self) -> &Partition1D {
        &self.xgrid
    }

    pub fn ygrid(&self) -> &Partition1D {
        &self.ygrid
    }

    pub fn values(&self) -> &[Vec<Rational>] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> &Rational {
        &self.values[i][j]
    }

    pub fn cell_count(&self) -> usize {
        self.xgrid.cells() * self.ygrid.cells()
    }

    /// Value at an interior point; zero outside the partitioned rectangle.
    pub fn eval(&self, x: &Rational, y: &Rational) -> Result<Rational> {
        let i = match self.xgrid.locate(x) {
            Location::Cell(i) => i,
            Location::Breakpoint(_) => return Err(undefined(Axis::X, x)),
            _ => return Ok(Rational::zero()),
        };
        let j = match self.ygrid.locate(y) {
            Location::Cell(j) => j,
            Location::Breakpoint(_) => return Err(undefined(Axis::Y, y)),
            _ => return Ok(Rational::zero()),
        };
        Ok(self.values[i][j].clone())
    }

    pub fn l1_norm(&self) -> Rational {
        let mut total = Rational::zero();
        for i in 0..self.xgrid.cells() {
            let wx = self.xgrid.width(i);
            for j in 0..self.ygrid.cells() {
                if !self.values[i][j].is_zero() {
                    total += self.values[i][j].abs() * &wx * self.ygrid.width(j);
                }
            }
        }
        total
    }

    /// `table[k][j]` = integral over x from the left edge to x-breakpoint `k`, on y-cell `j`.
    pub fn x_prefix(&self) -> Vec<Vec<Rational>> {
        let (nx, ny) = (self.xgrid.cells(), self.ygrid.cells());
        let mut table = vec![vec![Rational::zero(); ny]; nx + 1];
        for k in 0..nx {
            let w = self.xgrid.width(k);
            for j in 0..ny {
                table[k + 1][j] = &table[k][j] + &self.values[k][j] * &w;
            }
        }
        table
    }

    /// `table[i][k]` = integral over y from the bottom edge to y-breakpoint `k`, on x-cell `i`.
    pub fn y_prefix(&self) -> Vec<Vec<Rational>> {
        let (nx, ny) = (self.xgrid.cells(), self.ygrid.cells());
        let mut table = vec![vec![Rational::zero(); ny + 1]; nx];
        for j in 0..ny {
            let w = self.ygrid.width(j);
            for (i, row) in table.iter_mut().enumerate() {
                row[j + 1] = &row[j] + &self.values[i][j] * &w;
            }
        }
        table
    }

    fn cell_of(&self, axis: Axis, t: &Rational) -> Result<Option<usize>> {
        let grid = match axis {
            Axis::X => &self.xgrid,
            Axis::Y => &self.ygrid,
        };
        match grid.locate(t) {
            Location::Cell(c) => Ok(Some(c)),
            Location::Breakpoint(_) => Err(undefined(axis, t)),
            _ => Ok(None),
        }
    }

    /// Exact integral of `f(x, y0)` over x from the left edge of the partition to `x0`.
    pub fn x_antiderivative(&self, x0: &Rational, y0: &Rational) -> Result<Rational> {
        let Some(j) = self.cell_of(Axis::Y, y0)? else {
            return Ok(Rational::zero());
        };
        Ok(partial_line_integral(&self.xgrid, x0, |i| &self.values[i][j]))
    }

    /// Exact integral of `f(x0, y)` over y from the bottom edge of the partition to `y0`.
    pub fn y_antiderivative(&self, x0: &Rational, y0: &Rational) -> Result<Rational> {
        let Some(i) = self.cell_of(Axis::X, x0)? else {
            return Ok(Rational::zero());
        };
        Ok(partial_line_integral(&self.ygrid, y0, |j| &self.values[i][j]))
    }

    /// Slice `x -> f(x, y0)`.
    pub fn x_profile(&self, y0: &Rational) -> Result<LineProfile> {
        let values = match self.cell_of(Axis::Y, y0)? {
            Some(j) => self.values.iter().map(|col| col[j].clone()).collect(),
            None => vec![Rational::zero(); self.xgrid.cells()],
        };
        Ok(LineProfile { axis: Axis::X, coordinate: y0.clone(), breakpoints: self.xgrid.clone(), values })
    }

    /// Slice `y -> f(x0, y)`.
    pub fn y_profile(&self, x0: &Rational) -> Result<LineProfile> {
        let values = match self.cell_of(Axis::X, x0)? {
            Some(i) => self.values[i].clone(),
            None => vec![Rational::zero(); self.ygrid.cells()],
        };
        Ok(LineProfile { axis: Axis::Y, coordinate: x0.clone(), breakpoints: self.ygrid.clone(), values })
    }

    /// Total variation in x of `x -> f^y(x, y0)`. That slice is constant on each
    /// x-cell, so the variation is the sum of absolute jumps between neighbours.
    pub fn var_x_of_y_antideriv(&self, y0: &Rational) -> Result<Rational> {
        let levels: Vec<Rational> = match self.cell_of(Axis::Y, y0)? {
            Some(_) => (0..self.xgrid.cells())
                .map(|i| partial_line_integral(&self.ygrid, y0, |j| &self.values[i][j]))
                .collect(),
            None => return Ok(Rational::zero()),
        };
        Ok(jump_sum(&levels))
    }

    /// Total variation in y of `y -> f^x(x0, y)`.
    pub fn var_y_of_x_antideriv(&self, x0: &Rational) -> Result<Rational> {
        let levels: Vec<Rational> = match self.cell_of(Axis::X, x0)? {
            Some(_) => (0..self.ygrid.cells())
                .map(|j| partial_line_integral(&self.xgrid, x0, |i| &self.values[i][j]))
                .collect(),
            None => return Ok(Rational::zero()),
        };
        Ok(jump_sum(&levels))
    }

    /// Exact integral over y of `Var_x f^y(y)`. On each y-cell every jump of the
    /// slice is linear in y, so the integrand is integrated in closed form.
    pub fn integral_var_x_of_y_antideriv(&self) -> Rational {
        let prefix = self.y_prefix();
        let (nx, ny) = (self.xgrid.cells(), self.ygrid.cells());
        let mut total = Rational::zero();
        for j in 0..ny {
            let w = self.ygrid.width(j);
            for i in 0..nx.saturating_sub(1) {
                let u = &prefix[i + 1][j] - &prefix[i][j];
                let v = &prefix[i + 1][j + 1] - &prefix[i][j + 1];
                total += integral_abs_linear(&u, &v, &w);
            }
        }
        total
    }

    /// Exact integral over x of `Var_y f^x(x)`.
    pub fn integral_var_y_of_x_antideriv(&self) -> Rational {
        let prefix = self.x_prefix();
        let (nx, ny) = (self.xgrid.cells(), self.ygrid.cells());
        let mut total = Rational::zero();
        for i in 0..nx {
            let w = self.xgrid.width(i);
            for j in 0..ny.saturating_sub(1) {
                let u = &prefix[i][j + 1] - &prefix[i][j];
                let v = &prefix[i + 1][j + 1] - &prefix[i + 1][j];
                total += integral_abs_linear(&u, &v, &w);
            }
        }
        total
    }

    /// `(sup |f^x|, sup |f^y|)`. Each antiderivative is piecewise linear along its
    /// own axis, so the extremes sit at breakpoints.
    pub fn sup_norm_antiderivatives(&self) -> (Rational, Rational) {
        let max_abs = |table: &Vec<Vec<Rational>>| {
            table.iter().flatten().map(|v| v.abs()).max().unwrap_or_else(Rational::zero)
        };
        (max_abs(&self.x_prefix()), max_abs(&self.y_prefix()))
    }

    /// Integrals of every vertical line `x0 -> ∫ f(x0, y) dy` (per x-cell) and every
    /// horizontal line `y0 -> ∫ f(x, y0) dx` (per y-cell).
    pub fn line_integrals(&self) -> (Vec<Rational>, Vec<Rational>) {
        let yp = self.y_prefix();
        let xp = self.x_prefix();
        let vertical = yp.iter().map(|row| row.last().unwrap().clone()).collect();
        let horizontal = xp.last().unwrap().clone();
        (vertical, horizontal)
    }

    /// Restates the function on finer partitions covering at least the same rectangle.
    pub fn resample(&self, xgrid: &Partition1D, ygrid: &Partition1D) -> StepFunction2D {
        let xmap: Vec<Option<usize>> = (0..xgrid.cells())
            .map(|c| match self.xgrid.locate(&xgrid.midpoint(c)) {
                Location::Cell(i) => Some(i),
                _ => None,
            })
            .collect();
        let ymap: Vec<Option<usize>> = (0..ygrid.cells())
            .map(|c| match self.ygrid.locate(&ygrid.midpoint(c)) {
                Location::Cell(j) => Some(j),
                _ => None,
            })
            .collect();
        let values = xmap
            .iter()
            .map(|xi| {
                ymap.iter()
                    .map(|yj| match (xi, yj) {
                        (Some(i), Some(j)) => self.values[*i][*j].clone(),
                        _ => Rational::zero(),
                    })
                    .collect()
            })
            .collect();
        StepFunction2D { xgrid: xgrid.clone(), ygrid: ygrid.clone(), values }
    }

    pub fn combine(&self, other: &StepFunction2D, op: CombineOp) -> StepFunction2D {
        let xgrid = self.xgrid.merge(&other.xgrid);
        let ygrid = self.ygrid.merge(&other.ygrid);
        let a = self.resample(&xgrid, &ygrid);
        let b = other.resample(&xgrid, &ygrid);
        let values = a
            .values
            .into_iter()
            .zip(b.values)
            .map(|(ca, cb)| {
                ca.into_iter()
                    .zip(cb)
                    .map(|(va, vb)| match op {
                        CombineOp::Add => va + vb,
                        CombineOp::Sub => va - vb,
                    })
                    .collect()
            })
            .collect();
        StepFunction2D { xgrid, ygrid, values }
    }

    pub fn scale(&self, c: &Rational) -> StepFunction2D {
        let values = self.values.iter().map(|col| col.iter().map(|v| v * c).collect()).collect();
        StepFunction2D { xgrid: self.xgrid.clone(), ygrid: self.ygrid.clone(), values }
    }

    pub fn translate(&self, dx: &Rational, dy: &Rational) -> StepFunction2D {
        StepFunction2D {
            xgrid: self.xgrid.translate(dx),
            ygrid: self.ygrid.translate(dy),
            values: self.values.clone(),
        }
    }

    /// `g(x, y) = -f(x, -y)`.
    pub fn reflect_odd_y(&self) -> StepFunction2D {
        let mut bps: Vec<Rational> = self.ygrid.breakpoints.iter().map(|b| -b).collect();
        bps.reverse();
        let ygrid = Partition1D { breakpoints: bps };
        let values = self.values.iter().map(|col| col.iter().rev().map(|v| -v).collect()).collect();
        StepFunction2D { xgrid: self.xgrid.clone(), ygrid, values }
    }

    pub fn is_odd_in_y(&self) -> bool {
        let r = self.reflect_odd_y();
        if r.ygrid == self.ygrid {
            return r.values == self.values;
        }
        let diff = self.combine(&r, CombineOp::Sub);
        diff.values.iter().flatten().all(|v| v.is_zero())
    }

    /// Support bounding box `(x_min, x_max, y_min, y_max)` of the nonzero cells.
    pub fn support(&self) -> Option<(Rational, Rational, Rational, Rational)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for (i, col) in self.values.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                if !v.is_zero() {
                    bbox = Some(match bbox {
                        None => (i, i, j, j),
                        Some((a, b, c, d)) => (a.min(i), b.max(i), c.min(j), d.max(j)),
                    });
                }
            }
        }
        bbox.map(|(i0, i1, j0, j1)| {
            let xb = &self.xgrid.breakpoints;
            let yb = &self.ygrid.breakpoints;
            (xb[i0].clone(), xb[i1 + 1].clone(), yb[j0].clone(), yb[j1 + 1].clone())
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: StepFunction2D = serde_json::from_str(s)?;
        Self::new(f.xgrid, f.ygrid, f.values)
    }
}

fn undefined(axis: Axis, t: &Rational) -> Error {
    Error::UndefinedLine { axis: axis.letter(), coordinate: format_rational(t) }
}

fn jump_sum(levels: &[Rational]) -> Rational {
    levels.windows(2).fold(Rational::zero(), |acc, w| acc + (&w[1] - &w[0]).abs())
}

/// ∫ from the start of `grid` to `t` of the step function whose cell values are `value(c)`.
fn partial_line_integral<'a>(grid: &Partition1D, t: &Rational, value: impl Fn(usize) -> &'a Rational) -> Rational {
    let bps = grid.breakpoints();
    let mut total = Rational::zero();
    for c in 0..grid.cells() {
        if *t <= bps[c] {
            break;
        }
        let right = if *t < bps[c + 1] { t } else { &bps[c + 1] };
        let v = value(c);
        if !v.is_zero() {
            total += v * (right - &bps[c]);
        }
    }
    total
}
