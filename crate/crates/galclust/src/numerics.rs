//! Small numerical utilities shared across the crate: quadrature,
//! interpolation, special functions, and order-stable summation.

use crate::error::{Error, Result};

/// Composite Simpson rule on `[a, b]` with `n` intervals (`n` rounded up to
/// even). The integrand is evaluated at `n + 1` uniformly spaced nodes.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n.max(2) } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let x = a + h * i as f64;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    (f(a) + f(b) + 4.0 * odd + 2.0 * even) * h / 3.0
}

/// Composite trapezoid rule on `[a, b]` with `n` intervals.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + h * i as f64);
    }
    s * h
}

/// Simpson rule with interval doubling until the result changes by less than
/// `rel_tol` (relative), starting from `n0` intervals.
pub fn simpson_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    n0: usize,
    rel_tol: f64,
    what: &str,
) -> Result<f64> {
    let mut n = n0.max(16);
    let mut prev = simpson(&f, a, b, n);
    for _ in 0..14 {
        n *= 2;
        let cur = simpson(&f, a, b, n);
        let scale = cur.abs().max(prev.abs()).max(f64::MIN_POSITIVE);
        if (cur - prev).abs() <= rel_tol * scale {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!(
        "{what}: no convergence to rel tol {rel_tol:.1e} after {n} intervals"
    )))
}

/// Pairwise (cascade) summation; result is independent of chunking order and
/// has O(log n) error growth.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Linear interpolation over a strictly increasing knot table.
#[derive(Debug, Clone)]
pub struct Interp1 {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Interp1 {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Domain(
                "interpolation table needs >= 2 matching knots".into(),
            ));
        }
        if !x.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Domain(
                "interpolation knots must be strictly increasing".into(),
            ));
        }
        Ok(Interp1 { x, y })
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Value at `x`; errors outside the table range.
    pub fn value(&self, x: f64) -> Result<f64> {
        if x < self.x_min() || x > self.x_max() {
            return Err(Error::XiRange {
                r: x,
                max: self.x_max(),
            });
        }
        Ok(self.value_clamped(x))
    }

    /// Value at `x` with the argument clamped to the table range.
    pub fn value_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_min(), self.x_max());
        // partition_point: first knot > x, so the segment is [i-1, i].
        let i = self.x.partition_point(|&k| k <= x).min(self.x.len() - 1);
        let i0 = i.saturating_sub(1);
        if i == i0 {
            return self.y[i0];
        }
        let t = (x - self.x[i0]) / (self.x[i] - self.x[i0]);
        self.y[i0] + t * (self.y[i] - self.y[i0])
    }

    pub fn in_range(&self, x: f64) -> bool {
        x >= self.x_min() && x <= self.x_max()
    }
}

/// sin(x)/x with a series branch near zero.
pub fn sph_j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Spherical top-hat window 3 (sin x - x cos x) / x^3.
pub fn tophat_window(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 - x2 / 10.0 + x2 * x2 / 280.0
    } else {
        3.0 * (x.sin() - x * x.cos()) / (x * x * x)
    }
}

/// Bessel J0, Abramowitz & Stegun 9.4.1 / 9.4.3 rational approximations
/// (absolute error below ~1e-7, adequate for mock spectra).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        let y = x * x;
        let p1 = 57568490574.0
            + y * (-13362590354.0
                + y * (651619640.7 + y * (-11214424.18 + y * (77392.33017 + y * (-184.9052456)))));
        let p2 = 57568490411.0
            + y * (1029532985.0 + y * (9494680.718 + y * (59272.64853 + y * (267.8532712 + y))));
        p1 / p2
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785398164;
        let p1 = 1.0
            + y * (-0.1098628627e-2 + y * (0.2734510407e-4 + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
        let p2 = -0.1562499995e-1
            + y * (0.1430488765e-3 + y * (-0.6911147651e-5 + y * (0.7621095161e-6 + y * (-0.934935152e-7))));
        (2.0 / (std::f64::consts::PI * ax)).sqrt() * (xx.cos() * p1 - z * xx.sin() * p2)
    }
}

/// Standard normal pdf.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    statrs::distribution::Normal::standard().cdf(x)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    statrs::distribution::Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 8);
        // Antiderivative x^4/4 - x^2 + x evaluated on [-1, 3].
        assert_relative_eq!(v, (20.25 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0), epsilon = 1e-12);
    }

    #[test]
    fn interp_exact_at_knots_and_linear_between() {
        let t = Interp1::new(vec![0.0, 1.0, 3.0], vec![1.0, -1.0, 3.0]).unwrap();
        assert_eq!(t.value(0.0).unwrap(), 1.0);
        assert_eq!(t.value(1.0).unwrap(), -1.0);
        assert_eq!(t.value(3.0).unwrap(), 3.0);
        assert_relative_eq!(t.value(2.0).unwrap(), 1.0, epsilon = 1e-14);
        assert!(t.value(3.5).is_err());
    }

    #[test]
    fn j0_reference_values() {
        // Reference values from standard tables.
        assert_relative_eq!(bessel_j0(0.0), 1.0, epsilon = 1e-7);
        assert_relative_eq!(bessel_j0(1.0), 0.7651976866, epsilon = 1e-7);
        assert_relative_eq!(bessel_j0(5.0), -0.1775967713, epsilon = 1e-7);
        assert_relative_eq!(bessel_j0(10.0), -0.2459357645, max_relative = 1e-6);
    }

    #[test]
    fn pairwise_matches_naive_on_smooth_data() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert_relative_eq!(pairwise_sum(&v), naive, epsilon = 1e-9);
    }

    #[test]
    fn tophat_series_matches_formula() {
        let x = 2e-3f64;
        let exact = 3.0 * (x.sin() - x * x.cos()) / (x * x * x);
        assert_relative_eq!(tophat_window(x), exact, epsilon = 1e-12);
    }
}
