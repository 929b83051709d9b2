//! Node-centred scalar fields on uniform square grids.
//!
//! Values are stored row-major: row `j` holds the nodes with `y = origin_y + j*h`.
//! Fields are treated as zero outside the window, so difference stencils pad with
//! zeros at the edges.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    origin_x: f64,
    origin_y: f64,
    h: f64,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(origin_x: f64, origin_y: f64, h: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) || nx < 2 || ny < 2 {
            return Err(Error::Resolution(format!("invalid grid: h = {h}, {nx}x{ny} nodes")));
        }
        Ok(Self { origin_x, origin_y, h, nx, ny, values: vec![0.0; nx * ny] })
    }

    /// Smallest grid with spacing `h` whose nodes start at `(xmin, ymin)` and reach
    /// at least `(xmax, ymax)`.
    pub fn covering(xmin: f64, xmax: f64, ymin: f64, ymax: f64, h: f64) -> Result<Self> {
        let cells = |lo: f64, hi: f64| ((hi - lo) / h - 1e-9).ceil().max(1.0) as usize;
        Self::zeros(xmin, ymin, h, cells(xmin, xmax) + 1, cells(ymin, ymax) + 1)
    }

    /// Grid over the centred square `[-half, half]^2`, snapping `half` to a multiple of `h`.
    pub fn centered(half: f64, h: f64) -> Result<Self> {
        let m = (half / h - 1e-9).ceil() as usize;
        let start = -(m as f64) * h;
        Self::zeros(start, start, h, 2 * m + 1, 2 * m + 1)
    }

    pub fn from_fn(template: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        let mut out = template.zeroed();
        for j in 0..out.ny {
            let y = out.y(j);
            for i in 0..out.nx {
                out.values[j * out.nx + i] = f(out.x(i), y);
            }
        }
        out
    }

    pub fn zeroed(&self) -> GridField {
        GridField { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h)
    }

    /// `(xmin, xmax, ymin, ymax)` of the node set.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let (ex, ey) = self.extent();
        (self.origin_x, self.origin_x + ex, self.origin_y, self.origin_y + ey)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.origin_x + i as f64 * self.h
    }

    pub fn y(&self, j: usize) -> f64 {
        self.origin_y + j as f64 * self.h
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] = v;
    }

    /// Value at node `(i, j)`, zero for indices outside the grid.
    pub fn get_padded(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            0.0
        } else {
            self.values[j as usize * self.nx + i as usize]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    pub fn same_geometry(&self, other: &GridField) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.h == other.h
            && self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
    }

    fn check_geometry(&self, other: &GridField) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::Resolution("fields live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.check_geometry(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(GridField { values, ..self.clone() })
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &GridField, c: f64) -> Result<()> {
        self.check_geometry(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Adds `other` into `self` where the nodes coincide; `other` must sit on the same
    /// lattice (integer node offset) and inside `self`.
    pub fn add_patch(&mut self, other: &GridField, c: f64) -> Result<()> {
        if (self.h - other.h).abs() > 1e-15 * self.h {
            return Err(Error::Resolution("patch spacing differs from the target grid".into()));
        }
        let oi = (other.origin_x - self.origin_x) / self.h;
        let oj = (other.origin_y - self.origin_y) / self.h;
        let (ri, rj) = (oi.round(), oj.round());
        if (oi - ri).abs() > 1e-6 || (oj - rj).abs() > 1e-6 {
            return Err(Error::Resolution("patch is not aligned with the target lattice".into()));
        }
        let (ri, rj) = (ri as isize, rj as isize);
        if ri < 0 || rj < 0 || ri as usize + other.nx > self.nx || rj as usize + other.ny > self.ny {
            return Err(Error::Domain("patch extends outside the target window".into()));
        }
        for j in 0..other.ny {
            let dst = (rj as usize + j) * self.nx + ri as usize;
            for i in 0..other.nx {
                self.values[dst + i] += c * other.values[j * other.nx + i];
            }
        }
        Ok(())
    }

    /// Rectangle-rule integral `h² Σ v`.
    pub fn integral(&self) -> f64 {
        self.h * self.h * self.values.iter().sum::<f64>()
    }

    pub fn l1(&self) -> f64 {
        self.h * self.h * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn lp(&self, p: f64) -> f64 {
        (self.h * self.h * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value on the outermost ring of nodes.
    pub fn max_abs_frame(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.nx {
            m = m.max(self.get(i, 0).abs()).max(self.get(i, self.ny - 1).abs());
        }
        for j in 0..self.ny {
            m = m.max(self.get(0, j).abs()).max(self.get(self.nx - 1, j).abs());
        }
        m
    }

    /// Second-order central difference in x.
    pub fn d_x(&self) -> GridField {
        let mut out = self.zeroed();
        let c = 0.5 / self.h;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (ii, jj) = (i as isize, j as isize);
                out.values[j * self.nx + i] = c * (self.get_padded(ii + 1, jj) - self.get_padded(ii - 1, jj));
            }
        }
        out
    }

    /// Second-order central difference in y.
    pub fn d_y(&self) -> GridField {
        let mut out = self.zeroed();
        let c = 0.5 / self.h;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (ii, jj) = (i as isize, j as isize);
                out.values[j * self.nx + i] = c * (self.get_padded(ii, jj + 1) - self.get_padded(ii, jj - 1));
            }
        }
        out
    }

    /// Fourth-order central difference in x (`axis = 0`) or y (`axis = 1`).
    pub fn d4(&self, axis: usize) -> GridField {
        let mut out = self.zeroed();
        let c = 1.0 / (12.0 * self.h);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (ii, jj) = (i as isize, j as isize);
                let at = |k: isize| {
                    if axis == 0 {
                        self.get_padded(ii + k, jj)
                    } else {
                        self.get_padded(ii, jj + k)
                    }
                };
                out.values[j * self.nx + i] = c * (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2));
            }
        }
        out
    }

    /// Five-point Laplacian.
    pub fn laplacian(&self) -> GridField {
        let mut out = self.zeroed();
        let c = 1.0 / (self.h * self.h);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (ii, jj) = (i as isize, j as isize);
                let s = self.get_padded(ii + 1, jj)
                    + self.get_padded(ii - 1, jj)
                    + self.get_padded(ii, jj + 1)
                    + self.get_padded(ii, jj - 1)
                    - 4.0 * self.get(i, j);
                out.values[j * self.nx + i] = c * s;
            }
        }
        out
    }

    /// Cumulative integral from the left (`axis = 0`) or bottom (`axis = 1`) edge by the
    /// trapezoid rule with end corrections from central-difference slopes.
    pub fn cumulative(&self, axis: usize) -> GridField {
        let mut out = self.zeroed();
        let h = self.h;
        let (lines, len) = if axis == 0 { (self.ny, self.nx) } else { (self.nx, self.ny) };
        let mut line = vec![0.0; len];
        for l in 0..lines {
            for (k, v) in line.iter_mut().enumerate() {
                *v = if axis == 0 { self.get(k, l) } else { self.get(l, k) };
            }
            let slope = |k: usize| {
                let prev = if k == 0 { 0.0 } else { line[k - 1] };
                let next = if k + 1 == len { 0.0 } else { line[k + 1] };
                (next - prev) / (2.0 * h)
            };
            let mut acc = 0.0;
            for k in 0..len {
                if k > 0 {
                    acc += 0.5 * h * (line[k - 1] + line[k]) - h * h / 12.0 * (slope(k) - slope(k - 1));
                }
                if axis == 0 {
                    out.values[l * self.nx + k] = acc;
                } else {
                    out.values[k * self.nx + l] = acc;
                }
            }
        }
        out
    }

    /// Bilinear interpolation; zero outside the node rectangle.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let s = (x - self.origin_x) / self.h;
        let t = (y - self.origin_y) / self.h;
        if s < 0.0 || t < 0.0 || s > (self.nx - 1) as f64 || t > (self.ny - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.nx - 2);
        let j = (t.floor() as usize).min(self.ny - 2);
        let (a, b) = (s - i as f64, t - j as f64);
        (1.0 - a) * (1.0 - b) * self.get(i, j)
            + a * (1.0 - b) * self.get(i + 1, j)
            + (1.0 - a) * b * self.get(i, j + 1)
            + a * b * self.get(i + 1, j + 1)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (ex, ey) = self.extent();
        writeln!(w, "origin_x,origin_y,extent_x,extent_y,h")?;
        writeln!(w, "{},{},{},{},{}", self.origin_x, self.origin_y, ex, ey, self.h)?;
        let mut line = String::new();
        for j in 0..self.ny {
            line.clear();
            for (i, v) in self.row(j).iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<GridField> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("truncated grid file".into()))?.map_err(Error::from)
        };
        let header = next()?;
        if header.trim() != "origin_x,origin_y,extent_x,extent_y,h" {
            return Err(Error::Parse(format!("unexpected grid header {header:?}")));
        }
        let meta = parse_row(&next()?)?;
        if meta.len() != 5 {
            return Err(Error::Parse("grid metadata needs five numbers".into()));
        }
        let h = meta[4];
        let nx = (meta[2] / h).round() as usize + 1;
        let ny = (meta[3] / h).round() as usize + 1;
        let mut field = GridField::zeros(meta[0], meta[1], h, nx, ny)?;
        for j in 0..ny {
            let row = parse_row(&next()?)?;
            if row.len() != nx {
                return Err(Error::Parse(format!("row {j} has {} values, expected {nx}", row.len())));
            }
            field.values[j * nx..(j + 1) * nx].copy_from_slice(&row);
        }
        Ok(field)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<GridField> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let g = GridField::covering(-1.0, 1.0, -0.5, 0.5, 0.25).unwrap();
        let g = GridField::from_fn(&g, |x, y| x * 0.1 + y * y / 3.0);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = GridField::read_csv(&buf[..]).unwrap();
        assert_eq!(back, g);
        assert!(GridField::read_csv(&b"nonsense\n"[..]).is_err());
    }

    #[test]
    fn gaussian_derivatives_and_integrals() {
        let g = GridField::centered(6.0, 1.0 / 32.0).unwrap();
        let f = GridField::from_fn(&g, |x, y| (-(x * x + y * y) / 2.0).exp());
        let pi = std::f64::consts::PI;
        assert!((f.integral() - 2.0 * pi).abs() < 1e-7);
        let dx = f.d4(0);
        let exact = GridField::from_fn(&g, |x, y| -x * (-(x * x + y * y) / 2.0).exp());
        let err = dx.zip_with(&exact, |a, b| a - b).unwrap().max_abs();
        assert!(err < 1e-6, "{err}");
        let lap = f.laplacian();
        let exact = GridField::from_fn(&g, |x, y| (x * x + y * y - 2.0) * (-(x * x + y * y) / 2.0).exp());
        assert!(lap.zip_with(&exact, |a, b| a - b).unwrap().max_abs() < 1e-3);
    }

    #[test]
    fn cumulative_is_fourth_order() {
        let err = |h: f64| {
            let g = GridField::centered(5.0, h).unwrap();
            let f = GridField::from_fn(&g, |x, _| x * (-x * x).exp());
            let c = f.cumulative(0);
            let (i, j) = (g.nx() / 2, 0);
            (c.get(i, j) + 0.5).abs()
        };
        let (e1, e2) = (err(0.25), err(0.125));
        assert!(e2 < 1e-4 && e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn patches_align() {
        let mut big = GridField::centered(2.0, 0.5).unwrap();
        let mut small = GridField::zeros(0.0, 0.5, 0.5, 2, 2).unwrap();
        small.values_mut().fill(1.0);
        big.add_patch(&small, 2.0).unwrap();
        assert_eq!(big.integral(), 0.25 * 8.0);
        let off = GridField::zeros(0.1, 0.5, 0.5, 2, 2).unwrap();
        assert!(big.add_patch(&off, 1.0).is_err());
    }
}
