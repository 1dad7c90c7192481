//! Fiducial clustering model: a shape-parameterized CDM power spectrum
//! normalized to sigma8, the real-space correlation function xi(r) obtained
//! by quadrature of the oscillatory Fourier integral, and the scalar
//! angle-averaged linear redshift-distortion boost.
//!
//! Conventions: k in h/Mpc, P(k) in (Mpc/h)^3, r in Mpc/h,
//! sigma8^2 = (1/2 pi^2) Int P(k) W^2(8k) k^2 dk with W the spherical
//! top-hat window.

pub mod background;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum, simpson_adaptive, sph_j0, tophat_window, Interp1};

/// Parameters of the fluctuation spectrum model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumParams {
    /// rms density fluctuation in an 8 Mpc/h top-hat sphere.
    pub sigma8: f64,
    /// Shape parameter of the transfer function.
    pub gamma: f64,
    /// Primordial spectral index.
    pub n_s: f64,
    /// Linear redshift-distortion parameter.
    pub beta: f64,
    /// Linear bias.
    pub bias: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams { sigma8: 0.9, gamma: 0.2, n_s: 1.0, beta: 0.0, bias: 1.0 }
    }
}

impl SpectrumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma8 > 0.0) || !(self.gamma > 0.0) || !(self.bias > 0.0) {
            return Err(Error::Domain(
                "sigma8, gamma and bias must be strictly positive".into(),
            ));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Domain("beta must be non-negative".into()));
        }
        Ok(())
    }
}

/// BBKS-style CDM transfer function of q = k / gamma.
fn cdm_transfer(q: f64) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    let a = (1.0 + 2.34 * q).ln() / (2.34 * q);
    let poly = 1.0
        + 3.89 * q
        + (16.1 * q).powi(2)
        + (5.46 * q).powi(3)
        + (6.71 * q).powi(4);
    a * poly.powf(-0.25)
}

/// Amplitude A such that P(k) = A k^n_s T^2(k/gamma) integrates to sigma8^2
/// in the 8 Mpc/h top-hat. Quadrature is Simpson in ln k, refined until the
/// relative change drops below 1e-9.
pub fn normalize_sigma8(params: &SpectrumParams) -> Result<f64> {
    params.validate()?;
    let shape = sigma8_shape_integral(params.gamma, params.n_s)?;
    Ok(params.sigma8 * params.sigma8 / shape)
}

/// (1/2 pi^2) Int k^(n_s + 2) T^2(k/gamma) W^2(8k) dk.
fn sigma8_shape_integral(gamma: f64, n_s: f64) -> Result<f64> {
    let f = |u: f64| {
        let k = u.exp();
        let t = cdm_transfer(k / gamma);
        let w = tophat_window(8.0 * k);
        k.powf(n_s + 3.0) * t * t * w * w
    };
    let raw = simpson_adaptive(f, (1e-5f64).ln(), (1e3f64).ln(), 2048, 1e-9, "sigma8 window integral")?;
    Ok(raw / (2.0 * std::f64::consts::PI * std::f64::consts::PI))
}

/// A normalized spectrum: parameters plus the sigma8-fixed amplitude.
#[derive(Debug, Clone)]
pub struct Spectrum {
    params: SpectrumParams,
    amplitude: f64,
}

impl Spectrum {
    pub fn new(params: SpectrumParams) -> Result<Self> {
        let amplitude = normalize_sigma8(&params)?;
        Ok(Spectrum { params, amplitude })
    }

    pub fn params(&self) -> &SpectrumParams {
        &self.params
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// P(k); errors for k <= 0.
    pub fn at(&self, k: f64) -> Result<f64> {
        if !(k > 0.0) {
            return Err(Error::Domain(format!("power spectrum needs k > 0, got {k}")));
        }
        Ok(self.power(k))
    }
}

/// Anything providing a radial spectral density. For 3D fields this is
/// P(k); the mock generator also feeds 2D angular spectra through the same
/// interface.
pub trait PowerSpectrum {
    /// Spectral density at k > 0.
    fn power(&self, k: f64) -> f64;
}

impl PowerSpectrum for Spectrum {
    fn power(&self, k: f64) -> f64 {
        let t = cdm_transfer(k / self.params.gamma);
        self.amplitude * k.powf(self.params.n_s) * t * t
    }
}

/// P(k) for given parameters at a single k. Convenience wrapper that
/// normalizes internally; construct a [`Spectrum`] for repeated evaluation.
pub fn power_spectrum(params: &SpectrumParams, k: f64) -> Result<f64> {
    Spectrum::new(*params)?.at(k)
}

/// Angle-averaged linear redshift-space boost b^2 (1 + 2 beta / 3 + beta^2 / 5),
/// applied multiplicatively to cell covariances.
pub fn kaiser_boost(params: &SpectrumParams) -> f64 {
    let b = params.bias;
    let beta = params.beta;
    b * b * (1.0 + 2.0 * beta / 3.0 + beta * beta / 5.0)
}

/// Spectral density tabulated on a k grid; zero outside the table and
/// clamped at zero below (quadrature of the inverse transform can produce
/// small negative tails).
#[derive(Debug, Clone)]
pub struct TabulatedSpectrum {
    interp: Interp1,
}

impl TabulatedSpectrum {
    pub fn new(k: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        Ok(TabulatedSpectrum { interp: Interp1::new(k, p)? })
    }

    pub fn k_max(&self) -> f64 {
        self.interp.x_max()
    }
}

impl PowerSpectrum for TabulatedSpectrum {
    fn power(&self, k: f64) -> f64 {
        if !self.interp.in_range(k) {
            return 0.0;
        }
        self.interp.value_clamped(k).max(0.0)
    }
}

/// Tabulated two-point correlation function.
#[derive(Debug, Clone)]
pub struct TabulatedXi {
    r: Vec<f64>,
    xi: Vec<f64>,
    interp: Interp1,
}

impl TabulatedXi {
    pub fn from_table(r: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let interp = Interp1::new(r.clone(), xi.clone())?;
        Ok(TabulatedXi { r, xi, interp })
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn r_max(&self) -> f64 {
        self.interp.x_max()
    }

    /// xi at r; errors beyond the tabulated range. Below the first knot the
    /// value is held constant at the first entry.
    pub fn value(&self, r: f64) -> Result<f64> {
        if r > self.interp.x_max() {
            return Err(Error::XiRange { r, max: self.interp.x_max() });
        }
        Ok(self.interp.value_clamped(r))
    }

    /// xi at r, zero beyond the table (the tail invariant drives tables to
    /// ~zero there anyway).
    pub fn value_or_zero(&self, r: f64) -> f64 {
        if r > self.interp.x_max() {
            0.0
        } else {
            self.interp.value_clamped(r)
        }
    }

    /// Two-column text export.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("# r_mpch,xi\n");
        for (r, x) in self.r.iter().zip(&self.xi) {
            out.push_str(&format!("{r},{x}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Options for the oscillatory xi transform.
#[derive(Debug, Clone, Copy)]
pub struct XiOptions {
    /// Smooth both field points with a spherical top-hat of this radius
    /// (pair window W^2). `None` for the raw correlation function.
    pub window_radius: Option<f64>,
    /// Gaussian damping scale exp(-(k/k_damp)^2) stabilizing the j0 tail.
    pub k_damp: f64,
    /// Hard upper integration limit.
    pub k_cut: f64,
}

impl Default for XiOptions {
    fn default() -> Self {
        XiOptions { window_radius: None, k_damp: 10.0, k_cut: 40.0 }
    }
}

/// xi(r) = (1/2 pi^2) Int P(k) j0(kr) k^2 [W^2] exp(-(k/k_damp)^2) dk on the
/// given radii. The linear-k Simpson grid is chosen so the largest radius
/// sees at least 16 nodes per j0 oscillation; a half-resolution probe guards
/// against non-convergence.
pub fn xi_from_power<P: PowerSpectrum + ?Sized>(
    spectrum: &P,
    r_grid: &[f64],
    opts: &XiOptions,
) -> Result<TabulatedXi> {
    if r_grid.is_empty() {
        return Err(Error::Domain("empty r grid".into()));
    }
    if !r_grid.windows(2).all(|w| w[1] > w[0]) || r_grid[0] <= 0.0 {
        return Err(Error::Domain("r grid must be strictly increasing and positive".into()));
    }
    let r_max = *r_grid.last().unwrap();
    let dk = (std::f64::consts::PI / (16.0 * r_max)).min(2e-3);
    let n = ((opts.k_cut / dk).ceil() as usize).next_multiple_of(2).clamp(512, 1 << 22);
    let xi: Vec<f64> = r_grid.iter().map(|&r| xi_quadrature(spectrum, r, opts, n)).collect();

    // Convergence probe at half resolution on the extreme radii.
    let scale = xi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
    for &(idx, r) in &[(0usize, r_grid[0]), (r_grid.len() - 1, r_max)] {
        let coarse = xi_quadrature(spectrum, r, opts, n / 2);
        if (coarse - xi[idx]).abs() > 1e-4 * scale {
            return Err(Error::Quadrature(format!(
                "xi transform not converged at r = {r}: {} vs {}",
                xi[idx], coarse
            )));
        }
    }
    TabulatedXi::from_table(r_grid.to_vec(), xi)
}

fn xi_quadrature<P: PowerSpectrum + ?Sized>(spectrum: &P, r: f64, opts: &XiOptions, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = opts.k_cut / n as f64;
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let k = h * i as f64;
        if k == 0.0 {
            terms.push(0.0);
            continue;
        }
        let mut g = spectrum.power(k) * k * k * (-(k / opts.k_damp).powi(2)).exp();
        if let Some(rw) = opts.window_radius {
            let w = tophat_window(k * rw);
            g *= w * w;
        }
        let weight = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        terms.push(weight * g * sph_j0(k * r));
    }
    pairwise_sum(&terms) * h / 3.0 / (2.0 * std::f64::consts::PI * std::f64::consts::PI)
}

/// xi transform of a normalized model spectrum with default options.
pub fn xi_from_pk(spectrum: &Spectrum, r_grid: &[f64]) -> Result<TabulatedXi> {
    xi_from_power(spectrum, r_grid, &XiOptions::default())
}

/// Log-spaced radius grid, for xi tables.
pub fn log_r_grid(r_min: f64, r_max: f64, n: usize) -> Vec<f64> {
    let l0 = r_min.ln();
    let l1 = r_max.ln();
    (0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Inverse transform P(k) = 4 pi Int xi(r) j0(kr) r^2 dr over the table
/// support, on the given k grid.
pub fn pk_from_xi(xi: &TabulatedXi, k_grid: &[f64]) -> Result<TabulatedSpectrum> {
    if k_grid.is_empty() || k_grid[0] <= 0.0 || !k_grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Domain("k grid must be strictly increasing and positive".into()));
    }
    let r_lo = xi.r()[0];
    let r_hi = xi.r_max();
    let k_max = *k_grid.last().unwrap();
    let dr = (std::f64::consts::PI / (16.0 * k_max)).min((r_hi - r_lo) / 4096.0);
    let n = (((r_hi - r_lo) / dr).ceil() as usize).next_multiple_of(2).clamp(512, 1 << 22);
    let h = (r_hi - r_lo) / n as f64;
    // Precompute xi r^2 with Simpson weights once.
    let mut base = Vec::with_capacity(n + 1);
    let mut radii = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let r = r_lo + h * i as f64;
        let weight = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        base.push(weight * xi.value_or_zero(r) * r * r);
        radii.push(r);
    }
    let p: Vec<f64> = k_grid
        .iter()
        .map(|&k| {
            let terms: Vec<f64> = base
                .iter()
                .zip(&radii)
                .map(|(b, &r)| b * sph_j0(k * r))
                .collect();
            4.0 * std::f64::consts::PI * pairwise_sum(&terms) * h / 3.0
        })
        .collect();
    TabulatedSpectrum::new(k_grid.to_vec(), p)
}

/// Angular correlation of a uniform slab of the given comoving `thickness`
/// seen at `distance`: w(theta) = (2/L) Int_0^L (1 - u/L) xi(sqrt(u^2 + s^2)) du
/// with s = distance * theta. xi beyond the table counts as zero.
pub fn project_slab(
    xi: &TabulatedXi,
    distance: f64,
    thickness: f64,
    theta_arcmin: &[f64],
) -> Result<Vec<f64>> {
    if distance <= 0.0 || thickness <= 0.0 {
        return Err(Error::Domain("slab projection needs positive distance and thickness".into()));
    }
    let l = thickness;
    Ok(theta_arcmin
        .iter()
        .map(|&th| {
            let s = distance * th * crate::geometry::ARCMIN;
            crate::numerics::simpson(
                |u| (1.0 - u / l) * xi.value_or_zero((u * u + s * s).sqrt()),
                0.0,
                l,
                1024,
            ) * 2.0
                / l
        })
        .collect())
}
