//! The fixed smooth bump kernel `c·exp(-1/(1-t²))` on (-1, 1), its distribution
//! function and its second antiderivative, tabulated once and interpolated.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const TABLE_INTERVALS: usize = 4096;

fn raw_bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

struct KernelTable {
    norm: f64,
    cdf: Vec<f64>,
    cdf2: Vec<f64>,
}

fn table() -> &'static KernelTable {
    static TABLE: OnceLock<KernelTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let norm = adaptive_simpson(&raw_bump, -1.0, 1.0, 1e-16);
        let density = |t: f64| raw_bump(t) / norm;
        let first_moment = |t: f64| t * raw_bump(t) / norm;
        let h = 2.0 / TABLE_INTERVALS as f64;
        let mut cdf = vec![0.0; TABLE_INTERVALS + 1];
        let mut moment = vec![0.0; TABLE_INTERVALS + 1];
        for i in 0..TABLE_INTERVALS {
            let (a, b) = (-1.0 + i as f64 * h, -1.0 + (i + 1) as f64 * h);
            cdf[i + 1] = cdf[i] + adaptive_simpson(&density, a, b, 1e-18);
            moment[i + 1] = moment[i] + adaptive_simpson(&first_moment, a, b, 1e-18);
        }
        // Symmetrise so that K(-z) = 1 - K(z) holds to rounding.
        for i in 0..=TABLE_INTERVALS / 2 {
            let j = TABLE_INTERVALS - i;
            let avg = 0.5 * (cdf[i] + 1.0 - cdf[j]);
            cdf[i] = avg;
            cdf[j] = 1.0 - avg;
        }
        let cdf2 = (0..=TABLE_INTERVALS)
            .map(|i| {
                let z = -1.0 + i as f64 * h;
                z * cdf[i] - moment[i]
            })
            .collect();
        KernelTable { norm, cdf, cdf2 }
    })
}

/// Cubic Hermite interpolation on the table grid with nodal values and slopes.
fn hermite(values: &[f64], slope: impl Fn(usize) -> f64, z: f64) -> f64 {
    let h = 2.0 / TABLE_INTERVALS as f64;
    let s = (z + 1.0) / h;
    let i = (s.floor() as usize).min(TABLE_INTERVALS - 1);
    let t = s - i as f64;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * values[i] + h10 * h * slope(i) + h01 * values[i + 1] + h11 * h * slope(i + 1)
}

/// Unit-scale kernel density.
pub fn density(t: f64) -> f64 {
    raw_bump(t) / table().norm
}

/// `K(z) = ∫_{-1}^{z} density`.
pub fn cdf(z: f64) -> f64 {
    if z <= -1.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let tab = table();
    let h = 2.0 / TABLE_INTERVALS as f64;
    hermite(&tab.cdf, |i| density(-1.0 + i as f64 * h), z)
}

/// `K₂(z) = ∫_{-1}^{z} K`; equals `z` for `z ≥ 1`.
pub fn cdf2(z: f64) -> f64 {
    if z <= -1.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return z;
    }
    let tab = table();
    hermite(&tab.cdf2, |i| tab.cdf[i], z)
}

/// `K₂(z) - max(z, 0)`: the correction a mollified ramp carries near its kink.
pub fn ramp_correction(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        cdf2(z) - z.max(0.0)
    }
}

/// The bump kernel at scale `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    epsilon: f64,
}

impl Kernel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Parameter(format!("kernel width must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn density(&self, t: f64) -> f64 {
        density(t / self.epsilon) / self.epsilon
    }

    /// Mass of the kernel below `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        cdf(t / self.epsilon)
    }

    /// `∫_{-∞}^{t} cdf`.
    pub fn cdf2(&self, t: f64) -> f64 {
        self.epsilon * cdf2(t / self.epsilon)
    }

    /// Mollified indicator of `(a, b)` evaluated at `t`.
    pub fn smoothed_indicator(&self, a: f64, b: f64, t: f64) -> f64 {
        self.cdf(t - a) - self.cdf(t - b)
    }

    /// Antiderivative (from -∞) of [`Kernel::smoothed_indicator`].
    pub fn smoothed_ramp(&self, a: f64, b: f64, t: f64) -> f64 {
        self.cdf2(t - a) - self.cdf2(t - b)
    }

    /// Derivative of [`Kernel::smoothed_indicator`].
    pub fn smoothed_spikes(&self, a: f64, b: f64, t: f64) -> f64 {
        self.density(t - a) - self.density(t - b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mass_and_symmetry() {
        let mass = adaptive_simpson(&density, -1.0, 1.0, 1e-15);
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(density(1.0), 0.0);
        assert_eq!(density(-1.5), 0.0);
        for z in [-0.9, -0.5, -0.1, 0.0, 0.3, 0.77] {
            assert!((cdf(z) + cdf(-z) - 1.0).abs() < 1e-14);
            assert!((density(z) - density(-z)).abs() < 1e-15);
        }
        assert!((cdf(0.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn table_matches_direct_quadrature() {
        for z in [-0.95, -0.61, -0.2, 0.013, 0.4, 0.88] {
            let direct = adaptive_simpson(&density, -1.0, z, 1e-15);
            assert!((cdf(z) - direct).abs() < 1e-13, "cdf({z})");
            let second = adaptive_simpson(&|s| (z - s) * density(s), -1.0, z, 1e-15);
            assert!((cdf2(z) - second).abs() < 1e-13, "cdf2({z})");
        }
        assert!((cdf2(1.0 - 1e-12) - 1.0).abs() < 1e-11);
        assert_eq!(cdf2(3.5), 3.5);
        assert_eq!(ramp_correction(1.5), 0.0);
    }

    #[test]
    fn scaled_kernel() {
        let k = Kernel::new(0.25).unwrap();
        let mass = adaptive_simpson(&|t| k.density(t), -0.25, 0.25, 1e-14);
        assert!((mass - 1.0).abs() < 1e-12);
        assert!((k.smoothed_indicator(0.0, 1.0, 0.5) - 1.0).abs() < 1e-15);
        assert!((k.smoothed_ramp(0.0, 1.0, 2.0) - 1.0).abs() < 1e-14);
        assert!(Kernel::new(0.0).is_err());
        assert!(Kernel::new(f64::NAN).is_err());
    }
}
