//! Bessel-potential norms `‖(I-Δ)^{α/2} ρ‖_{L^r}` on a zero-padded periodic grid,
//! plus plain `L^s` norms and the uniform unit-ball drift bound.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridField;

/// Minimum zero padding per side, as a fraction of the extent.
pub const MIN_PADDING: f64 = 0.25;

fn smooth_size(min: usize) -> usize {
    (min..)
        .find(|&n| {
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .unwrap()
}

fn fft2(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (fx, fy) = if inverse {
        (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny))
    } else {
        (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny))
    };
    for row in data.chunks_exact_mut(nx) {
        fx.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    for i in 0..nx {
        for j in 0..ny {
            column[j] = data[j * nx + i];
        }
        fy.process(&mut column);
        for j in 0..ny {
            data[j * nx + i] = column[j];
        }
    }
}

/// Angular frequency of DFT index `k` on a period of `n` samples at spacing `h`.
fn frequency(k: usize, n: usize, h: f64) -> f64 {
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * PI * signed / (n as f64 * h)
}

/// A field placed on a periodic grid, with its transform cached.
#[derive(Clone, Debug)]
pub struct SpectralField {
    nx: usize,
    ny: usize,
    h: f64,
    spectrum: Vec<Complex64>,
}

impl SpectralField {
    /// Embeds `rho` with at least `padding` (fraction of the extent, ≥ 1/4) of zeros on
    /// every side.
    pub fn padded(rho: &GridField, padding: f64) -> Result<Self> {
        if !(padding >= MIN_PADDING) {
            return Err(Error::Parameter(format!("padding {padding} is below {MIN_PADDING}")));
        }
        let pad = |n: usize| smooth_size(n + 2 * (padding * n as f64).ceil() as usize);
        Ok(Self::embed(rho, pad(rho.nx()), pad(rho.ny())))
    }

    /// Treats the node array of `rho` itself as one period.
    pub fn periodic(rho: &GridField) -> Self {
        Self::embed(rho, rho.nx(), rho.ny())
    }

    fn embed(rho: &GridField, nx: usize, ny: usize) -> Self {
        let (ox, oy) = ((nx - rho.nx()) / 2, (ny - rho.ny()) / 2);
        let mut data = vec![Complex64::new(0.0, 0.0); nx * ny];
        for j in 0..rho.ny() {
            for (i, &v) in rho.row(j).iter().enumerate() {
                data[(j + oy) * nx + i + ox] = Complex64::new(v, 0.0);
            }
        }
        fft2(&mut data, nx, ny, false);
        Self { nx, ny, h: rho.h(), spectrum: data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// `(I-Δ)^{α/2}` applied on the torus; real part of the result.
    pub fn apply(&self, alpha: f64) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let wx: Vec<f64> = (0..nx).map(|k| frequency(k, nx, self.h).powi(2)).collect();
        let mut data = self.spectrum.clone();
        for j in 0..ny {
            let wy = frequency(j, ny, self.h).powi(2);
            for i in 0..nx {
                data[j * nx + i] *= (1.0 + wx[i] + wy).powf(alpha / 2.0);
            }
        }
        fft2(&mut data, nx, ny, true);
        let scale = 1.0 / (nx * ny) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// Discrete `L^r` norm of `(I-Δ)^{α/2} ρ` over the whole torus.
    pub fn norm(&self, r: f64, alpha: f64) -> Result<f64> {
        check_exponents(r, alpha)?;
        let h2 = self.h * self.h;
        let s: f64 = self.apply(alpha).iter().map(|v| v.abs().powf(r)).sum();
        Ok((s * h2).powf(1.0 / r))
    }
}

fn check_exponents(r: f64, alpha: f64) -> Result<()> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::Domain(format!("integrability exponent must exceed 1, got {r}")));
    }
    if !(0.0..=2.0).contains(&alpha) {
        return Err(Error::Domain(format!("smoothness {alpha} is outside [0, 2]")));
    }
    Ok(())
}

/// `‖(I-Δ)^{α/2} ρ‖_{L^r}` with the minimum padding.
pub fn frac_norm(rho: &GridField, r: f64, alpha: f64) -> Result<f64> {
    check_exponents(r, alpha)?;
    SpectralField::padded(rho, MIN_PADDING)?.norm(r, alpha)
}

/// `1 - d(r-1)/r` in dimension two.
pub fn alpha_star(r: f64) -> f64 {
    1.0 - 2.0 * (r - 1.0) / r
}

/// `0, 0.05, …, 1`.
pub fn default_alphas() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCurve {
    pub r: f64,
    pub alphas: Vec<f64>,
    pub norms: Vec<f64>,
    pub alpha_star: f64,
}

impl SweepCurve {
    /// Rows `alpha,norm,alpha_star` where the flag marks the first α at or above α*.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,norm,alpha_star\n");
        let marked = self.alphas.iter().position(|&a| a >= self.alpha_star - 1e-12);
        for (k, (a, n)) in self.alphas.iter().zip(&self.norms).enumerate() {
            out.push_str(&format!("{a},{n},{}\n", u8::from(Some(k) == marked)));
        }
        out
    }

    /// `norm(α)/norm(α*)` with `norm(α*)` interpolated linearly.
    pub fn growth_over_threshold(&self, alpha: f64) -> Option<f64> {
        let at = |a: f64| -> Option<f64> {
            let k = self.alphas.windows(2).position(|w| w[0] <= a && a <= w[1])?;
            let t = (a - self.alphas[k]) / (self.alphas[k + 1] - self.alphas[k]);
            Some(self.norms[k] * (1.0 - t) + self.norms[k + 1] * t)
        };
        Some(at(alpha)? / at(self.alpha_star)?)
    }
}

pub fn threshold_sweep(rho: &GridField, r: f64, alphas: &[f64]) -> Result<SweepCurve> {
    for &a in alphas {
        check_exponents(r, a)?;
    }
    let field = SpectralField::padded(rho, MIN_PADDING)?;
    let norms = alphas.iter().map(|&a| field.norm(r, a)).collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve { r, alphas: alphas.to_vec(), norms, alpha_star: alpha_star(r) })
}

/// Discrete `L^s` norm on the window.
pub fn ls_norm(rho: &GridField, s: f64) -> Result<f64> {
    if !(s >= 1.0) {
        return Err(Error::Domain(format!("exponent must be at least 1, got {s}")));
    }
    Ok(rho.lp(s))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallBound {
    /// `max_a ∫_{|x-a|<1} |b|ρ` over the centre lattice.
    pub m: f64,
    pub lp_norm: f64,
    pub l1_norm: f64,
    pub ratio: f64,
}

/// Sweeps unit balls centred on a lattice of spacing 1/2 over the window.
pub fn ball_uniform_bound(rho: &GridField, b_x: &GridField, b_y: &GridField, p: f64) -> Result<BallBound> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::Domain(format!("exponent {p} is outside [1, 2)")));
    }
    let weight = GridField::from_fn(rho, |_, _| 0.0);
    let mut weight = weight;
    for (k, w) in weight.values_mut().iter_mut().enumerate() {
        *w = b_x.values()[k].hypot(b_y.values()[k]) * rho.values()[k].abs();
    }
    let h = rho.h();
    let (x0, x1, y0, y1) = rho.bounds();
    let reach = (1.0 / h).ceil() as isize;
    let mut m: f64 = 0.0;
    let mut cy = (y0 * 2.0).ceil() / 2.0;
    while cy <= y1 {
        let mut cx = (x0 * 2.0).ceil() / 2.0;
        while cx <= x1 {
            let ci = ((cx - x0) / h).round() as isize;
            let cj = ((cy - y0) / h).round() as isize;
            let mut s = 0.0;
            for dj in -reach..=reach {
                let j = cj + dj;
                if j < 0 || j >= rho.ny() as isize {
                    continue;
                }
                for di in -reach..=reach {
                    let i = ci + di;
                    if i < 0 || i >= rho.nx() as isize {
                        continue;
                    }
                    let (dx, dy) = (rho.x(i as usize) - cx, rho.y(j as usize) - cy);
                    if dx * dx + dy * dy < 1.0 {
                        s += weight.get(i as usize, j as usize);
                    }
                }
            }
            m = m.max(s * h * h);
            cx += 0.5;
        }
        cy += 0.5;
    }
    let lp_norm = rho.lp(p);
    let l1_norm = rho.l1();
    Ok(BallBound { m, lp_norm, l1_norm, ratio: if l1_norm > 0.0 { lp_norm / l1_norm } else { f64::NAN } })
}

/// `J₀(z)` by the trapezoid rule on its periodic integral representation.
pub fn bessel_j0(z: f64) -> f64 {
    let m = (z.abs() as usize) + 40;
    let mut s = 0.0;
    for k in 0..m {
        let theta = PI * (k as f64 + 0.5) / m as f64;
        s += (z * theta.sin()).cos();
    }
    s / m as f64
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Continuous `‖(I-Δ)^{α/2} e^{-|x|²/(2σ²)}‖_{L^r(ℝ²)}` by Hankel-transform quadrature.
pub fn gaussian_reference_norm(sigma: f64, r: f64, alpha: f64) -> f64 {
    let kmax = (80.0f64).sqrt() / sigma;
    let rmax = 30.0 + 8.0 * sigma;
    let profile = |radius: f64| {
        sigma
            * sigma
            * simpson(
                |k| (1.0 + k * k).powf(alpha / 2.0) * (-sigma * sigma * k * k / 2.0).exp() * bessel_j0(k * radius) * k,
                0.0,
                kmax,
                2000,
            )
    };
    let radial = simpson(|radius| profile(radius).abs().powf(r) * radius, 0.0, rmax, 600);
    (2.0 * PI * radial).powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_zero_smoothness() {
        let g = GridField::centered(1.0, 1.0 / 32.0).unwrap();
        let rho = GridField::from_fn(&g, |x, y| (1.0 - x * x).max(0.0) * (1.0 - y * y).max(0.0));
        let a = frac_norm(&rho, 1.5, 0.0).unwrap();
        assert!((a - ls_norm(&rho, 1.5).unwrap()).abs() < 1e-10);
        assert!(frac_norm(&rho, 1.5, 2.5).is_err());
        assert!(frac_norm(&rho, 1.0, 0.5).is_err());
        assert!(SpectralField::padded(&rho, 0.1).is_err());
    }

    #[test]
    fn fourier_mode_is_an_eigenfunction() {
        let n = 64;
        let h = 1.0 / 16.0;
        let g = GridField::zeros(0.0, 0.0, h, n, n).unwrap();
        let period = n as f64 * h;
        let rho = GridField::from_fn(&g, |x, _| (2.0 * PI * x / period).cos());
        let field = SpectralField::periodic(&rho);
        let base = field.norm(1.3, 0.0).unwrap();
        for alpha in [0.3, 1.0, 1.7] {
            let expect = (1.0 + (2.0 * PI / period).powi(2)).powf(alpha / 2.0);
            assert!((field.norm(1.3, alpha).unwrap() / base - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn bessel_values() {
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(2.404_825_557_695_773).abs()) < 1e-13);
        assert!((bessel_j0(50.0) - 0.055_812_327_669_251_86).abs() < 1e-13);
    }

    #[test]
    fn zero_field_and_plateau() {
        let g = GridField::centered(2.0, 1.0 / 16.0).unwrap();
        let curve = threshold_sweep(&g, 1.2, &default_alphas()).unwrap();
        assert!(curve.norms.iter().all(|&v| v == 0.0));
        let plateau = GridField::from_fn(&g, |x, y| if x.abs() <= 1.0 && y.abs() <= 1.0 { 1.0 } else { 0.0 });
        // 33×33 nodes at spacing 1/16 carry area (33/16)²
        let area = (33.0f64 / 16.0).powi(2);
        assert!((ls_norm(&plateau, 1.5).unwrap() - area.powf(1.0 / 1.5)).abs() < 1e-12);
        assert!((alpha_star(1.2) - 2.0 / 3.0).abs() < 1e-15);
        assert!(curve.to_csv().starts_with("alpha,norm,alpha_star\n"));
    }

    #[test]
    fn ball_bound_without_drift() {
        let g = GridField::centered(2.0, 1.0 / 16.0).unwrap();
        let rho = GridField::from_fn(&g, |x, y| (-(x * x + y * y)).exp());
        let z = rho.zeroed();
        let b = ball_uniform_bound(&rho, &z, &z, 1.5).unwrap();
        assert_eq!(b.m, 0.0);
        assert!(b.ratio.is_finite());
        assert!(ball_uniform_bound(&rho, &z, &z, 2.0).is_err());
    }
}
