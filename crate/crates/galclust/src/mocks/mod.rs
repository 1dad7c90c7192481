//! Seeded mock generators: clustered galaxy catalogs from lognormal random
//! fields, unclustered random catalogs with angular weights, and zero-point
//! shift tables. Every generator is a pure function of (config, seed);
//! parallel sections derive one RNG stream per slab so results do not
//! depend on the worker count.
//!
//! Two clustered-mock geometries are provided:
//!
//! * [`stripe_mock`] builds a 2D lognormal surface-density field on the
//!   stripe tangent plane whose angular correlation equals the slab
//!   projection of the model xi(r) at a configured distance and thickness.
//! * [`wedge_mock`] builds a 3D lognormal field in a padded box around a
//!   survey wedge, applies the radial selection function and the angular
//!   completeness map, and emits records with redshifts, magnitudes and
//!   (stripe, camcol, field) ids.

pub mod field;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, FluxLimitedModel, GalaxyRecord};
use crate::cosmomodel::background::Background;
use crate::cosmomodel::{
    log_r_grid, pk_from_xi, project_slab, xi_from_pk, Spectrum, SpectrumParams, TabulatedXi,
};
use crate::error::{Error, Result};
use crate::geometry::{sky_of_point, unit_vector, StripeLayout, SurveyRegion, WeightMap, ARCMIN, DEG};
use crate::numerics::{bessel_j0, normal_quantile, Interp1};

pub use field::{
    expected_total, gaussian_field, lognormal_transform, measure_power, poisson_sample_box,
    DensityField, GridSpec,
};

/// One named, splittable generator: `stream` selects an independent ChaCha
/// stream under the same seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---------------------------------------------------------------------------
// Zero-point tables

/// Per-(stripe, camcol) magnitude zero-point shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPointTable {
    pub std: f64,
    rows: Vec<(i32, u8, f64)>,
}

impl ZeroPointTable {
    pub fn rows(&self) -> &[(i32, u8, f64)] {
        &self.rows
    }

    pub fn lookup(&self, stripe: i32, camcol: u8) -> Option<f64> {
        self.rows
            .iter()
            .find(|(s, c, _)| *s == stripe && *c == camcol)
            .map(|(_, _, d)| *d)
    }

    /// Uniform table with the same shift everywhere (mixing-free probes).
    pub fn uniform(layout: &StripeLayout, delta_m: f64) -> Self {
        let mut rows = Vec::new();
        for stripe in layout.stripe_ids() {
            for camcol in 1..=layout.camcols {
                rows.push((stripe, camcol, delta_m));
            }
        }
        ZeroPointTable { std: 0.0, rows }
    }

    /// Scale all shifts; matched-seed draws scale exactly linearly.
    pub fn scaled(&self, factor: f64) -> Self {
        ZeroPointTable {
            std: self.std * factor,
            rows: self.rows.iter().map(|&(s, c, d)| (s, c, d * factor)).collect(),
        }
    }

    /// Text format `stripe,camcol,delta_m`.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("stripe,camcol,delta_m\n");
        for (s, c, d) in &self.rows {
            out.push_str(&format!("{s},{c},{d}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse {
                path: path.into(),
                line: lineno + 1,
                message: "expected stripe,camcol,delta_m".into(),
            };
            if p.len() != 3 {
                return Err(bad());
            }
            rows.push((
                p[0].trim().parse().map_err(|_| bad())?,
                p[1].trim().parse().map_err(|_| bad())?,
                p[2].trim().parse().map_err(|_| bad())?,
            ));
        }
        Ok(ZeroPointTable { std: 0.0, rows })
    }
}

/// Independent Gaussian zero-point shift per (stripe, camcol) in the layout.
pub fn draw_zeropoints(layout: &StripeLayout, std: f64, seed: u64) -> Result<ZeroPointTable> {
    if !(std >= 0.0) {
        return Err(Error::Domain("zero-point std must be >= 0".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = stream_rng(seed, 0);
    let mut rows = Vec::with_capacity(layout.n_stripes as usize * layout.camcols as usize);
    for stripe in layout.stripe_ids() {
        for camcol in 1..=layout.camcols {
            let z: f64 = normal.sample(&mut rng);
            rows.push((stripe, camcol, std * z));
        }
    }
    Ok(ZeroPointTable { std, rows })
}

// ---------------------------------------------------------------------------
// Angular (stripe) clustered mocks

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StripeMockConfig {
    pub layout: StripeLayout,
    pub params: SpectrumParams,
    /// Effective comoving distance of the projected slab, Mpc/h.
    pub distance: f64,
    /// Slab thickness along the line of sight, Mpc/h.
    pub thickness: f64,
    /// Field pixel, arcmin (finer than the correlation grid).
    pub pixel_arcmin: f64,
    /// Across-scan box size as a multiple of the stripe width (padding
    /// suppresses periodic images).
    pub pad_across: f64,
    /// Mean galaxy surface density, per arcmin^2.
    pub surface_density: f64,
    pub weights: WeightMap,
    /// Magnitude model for record magnitudes.
    pub mag_model: FluxLimitedModel,
    pub mag_limit: f64,
    /// Lognormal (default) or clipped-Gaussian density field.
    pub lognormal: bool,
}

impl Default for StripeMockConfig {
    fn default() -> Self {
        StripeMockConfig {
            layout: StripeLayout::default(),
            params: SpectrumParams::default(),
            distance: 1000.0,
            thickness: 60.0,
            pixel_arcmin: 0.5,
            pad_across: 2.0,
            surface_density: 0.3,
            weights: WeightMap::default(),
            mag_model: FluxLimitedModel::default(),
            mag_limit: 17.5,
            lognormal: true,
        }
    }
}

/// Target angular correlation of the stripe mock (model prediction used in
/// its construction), tabulated against separation in arcmin.
#[derive(Debug, Clone)]
pub struct AngularTarget {
    pub theta_arcmin: Vec<f64>,
    pub w: Vec<f64>,
    interp: Interp1,
}

impl AngularTarget {
    pub fn value_or_zero(&self, theta_arcmin: f64) -> f64 {
        if theta_arcmin > self.interp.x_max() {
            0.0
        } else {
            self.interp.value_clamped(theta_arcmin)
        }
    }
}

/// w(theta) of a uniform slab of the model: projection of xi(r).
pub fn stripe_target_w(cfg: &StripeMockConfig) -> Result<AngularTarget> {
    let spectrum = Spectrum::new(cfg.params)?;
    let s_max = box_extent_arcmin(cfg).iter().fold(0.0f64, |m, &v| m.max(v)) * 1.5;
    let r_max = ((cfg.thickness * cfg.thickness)
        + (cfg.distance * s_max * ARCMIN).powi(2))
    .sqrt()
        * 1.1;
    let xi = xi_from_pk(&spectrum, &log_r_grid(0.02, r_max.max(50.0), 768))?;
    let mut theta = vec![0.0];
    theta.extend(log_r_grid(0.05, s_max.max(1.0), 480));
    let w = project_slab(&xi, cfg.distance, cfg.thickness, &theta)?;
    let interp = Interp1::new(theta.clone(), w.clone())?;
    Ok(AngularTarget { theta_arcmin: theta, w, interp })
}

fn box_extent_arcmin(cfg: &StripeMockConfig) -> [f64; 2] {
    let length = (cfg.layout.ra_max_deg - cfg.layout.ra_min_deg) * 60.0; // tangent-plane arcmin
    let across = cfg.layout.width_deg * 60.0 * cfg.pad_across;
    [across, length]
}

/// 2D spectral density realizing the target angular correlation of the
/// (lognormal) field: Hankel transform of ln(1 + w).
fn angular_spectrum(target: &AngularTarget, lognormal: bool, k_max: f64) -> Result<crate::cosmomodel::TabulatedSpectrum> {
    let s_max = *target.theta_arcmin.last().unwrap();
    let n = ((s_max * k_max * 16.0 / std::f64::consts::PI).ceil() as usize).clamp(2048, 200_000);
    let h = s_max / n as f64;
    let k_grid = log_r_grid(1e-4, k_max, 1024);
    let xi2: Vec<f64> = target
        .theta_arcmin
        .iter()
        .zip(&target.w)
        .map(|(_, &w)| if lognormal { (1.0 + w).ln() } else { w })
        .collect();
    let xi2_i = Interp1::new(target.theta_arcmin.clone(), xi2)?;
    let p: Vec<f64> = k_grid
        .iter()
        .map(|&k| {
            let mut terms = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let s = h * i as f64;
                let weight = if i == 0 || i == n {
                    0.5
                } else {
                    1.0
                };
                terms.push(weight * xi2_i.value_clamped(s) * bessel_j0(k * s) * s);
            }
            (2.0 * std::f64::consts::PI * crate::numerics::pairwise_sum(&terms) * h).max(0.0)
        })
        .collect();
    crate::cosmomodel::TabulatedSpectrum::new(k_grid, p)
}

/// Clustered galaxy catalog for one stripe. Records are angular-only
/// (no redshift); weights follow the completeness map, which also thins
/// the sampling.
pub fn stripe_mock(cfg: &StripeMockConfig, stripe: i32, seed: u64) -> Result<Catalog> {
    cfg.layout.validate()?;
    cfg.weights.validate()?;
    if !(cfg.surface_density >= 0.0) || !(cfg.pixel_arcmin > 0.0) {
        return Err(Error::Config("stripe mock needs non-negative density, positive pixel".into()));
    }
    let dec_c = cfg.layout.stripe_center_dec(stripe)?;
    let cosc = (dec_c * DEG).cos();
    let scan_arcmin = cfg.layout.scan_length_deg(stripe)? * 60.0;
    let across_arcmin = cfg.layout.width_deg * 60.0;
    let box_across = across_arcmin * cfg.pad_across.max(1.0);
    let ny = ((box_across / cfg.pixel_arcmin).ceil() as usize).max(8);
    let nx = ((scan_arcmin / cfg.pixel_arcmin).ceil() as usize).max(8);
    let grid = GridSpec::new(vec![ny, nx], cfg.pixel_arcmin)?;

    let target = stripe_target_w(cfg)?;
    let k_max = std::f64::consts::SQRT_2 * std::f64::consts::PI / cfg.pixel_arcmin * 1.05;
    let p2 = angular_spectrum(&target, cfg.lognormal, k_max)?;
    let g = gaussian_field(&p2, &grid, seed, None)?;
    let density_field = if cfg.lognormal { lognormal_transform(&g) } else { g };

    // The stripe band sits centered in the padded across-scan direction.
    let y_off = 0.5 * (box_across - across_arcmin);
    let pix2 = cfg.pixel_arcmin * cfg.pixel_arcmin;
    let rows: Vec<Vec<GalaxyRecord>> = (0..ny)
        .into_par_iter()
        .map(|iy| {
            let mut rng = stream_rng(seed.wrapping_add(0x9e37_79b9), iy as u64);
            let mut out = Vec::new();
            let y0 = iy as f64 * cfg.pixel_arcmin;
            if y0 + cfg.pixel_arcmin <= y_off || y0 >= y_off + across_arcmin {
                return out; // padding band: field only
            }
            for ix in 0..nx {
                let delta = density_field.values[iy * nx + ix];
                let x0 = ix as f64 * cfg.pixel_arcmin;
                // Pixel center position on the sky for the weight map.
                let yc_deg = (y0 + 0.5 * cfg.pixel_arcmin - y_off) / 60.0 - 0.5 * cfg.layout.width_deg;
                let xc_deg = (x0 + 0.5 * cfg.pixel_arcmin) / 60.0;
                let ra_c = cfg.layout.ra_min_deg + xc_deg / cosc;
                let dec_cpix = dec_c + yc_deg;
                let wmap = cfg.weights.weight_at(ra_c, dec_cpix);
                let lam = cfg.surface_density * pix2 * (1.0 + delta).max(0.0) * wmap;
                if lam <= 0.0 {
                    continue;
                }
                let n: f64 = rand_distr::Poisson::new(lam).expect("lambda > 0").sample(&mut rng);
                for _ in 0..n as usize {
                    let xa = x0 + rng.random::<f64>() * cfg.pixel_arcmin;
                    let ya = y0 + rng.random::<f64>() * cfg.pixel_arcmin;
                    let y_deg = (ya - y_off) / 60.0 - 0.5 * cfg.layout.width_deg;
                    if y_deg < -0.5 * cfg.layout.width_deg || y_deg >= 0.5 * cfg.layout.width_deg {
                        continue;
                    }
                    let ra = cfg.layout.ra_min_deg + xa / 60.0 / cosc;
                    let dec = dec_c + y_deg;
                    let Some((s, camcol, fld)) = cfg.layout.assign(ra, dec) else {
                        continue;
                    };
                    let mag = draw_magnitude(&cfg.mag_model, cfg.mag_limit, cfg.distance, &mut rng);
                    out.push(GalaxyRecord {
                        ra,
                        dec,
                        redshift: None,
                        mag,
                        stripe: s,
                        camcol,
                        field: fld,
                        weight: wmap,
                    });
                }
            }
            out
        })
        .collect();
    Ok(Catalog::from_records(rows.into_iter().flatten().collect()))
}

/// Apparent magnitude consistent with the flux-limited selection at
/// distance d: a truncated-Gaussian absolute magnitude mapped so the
/// faintest possible record sits exactly at `mag_limit`.
fn draw_magnitude<R: Rng>(model: &FluxLimitedModel, mag_limit: f64, d: f64, rng: &mut R) -> f64 {
    let x = -(5.0 / model.sigma_mag) * (d / model.d_half).log10();
    let cap = crate::numerics::normal_cdf(x);
    let u = rng.random::<f64>();
    let zeta = normal_quantile((u * cap).clamp(1e-300, 1.0 - 1e-16));
    mag_limit + model.sigma_mag * (zeta - x)
}

// ---------------------------------------------------------------------------
// Wedge (3D) clustered mocks

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WedgeMockConfig {
    pub region: SurveyRegion,
    pub layout: StripeLayout,
    pub params: SpectrumParams,
    /// Field grid spacing, Mpc/h.
    pub grid_spacing: f64,
    /// Padding added around the wedge bounding box, Mpc/h.
    pub box_padding: f64,
    /// Mean galaxy density before selection, per (Mpc/h)^3.
    pub density: f64,
    pub selection: FluxLimitedModel,
    pub weights: WeightMap,
    pub background: Background,
    pub mag_limit: f64,
    pub lognormal: bool,
}

impl Default for WedgeMockConfig {
    fn default() -> Self {
        WedgeMockConfig {
            region: SurveyRegion::Wedge {
                ra_deg: [0.0, 5.0],
                dec_deg: [-2.5, 2.5],
                dist: [600.0, 1400.0],
            },
            layout: StripeLayout::default(),
            params: SpectrumParams::default(),
            grid_spacing: 3.0,
            box_padding: 150.0,
            density: 5e-3,
            selection: FluxLimitedModel::default(),
            weights: WeightMap::default(),
            background: Background::default(),
            mag_limit: 17.5,
            lognormal: true,
        }
    }
}

/// Distance -> redshift lookup built once per mock.
fn redshift_table(bg: &Background, d_max: f64) -> Result<Interp1> {
    let z_max = bg.redshift_at(d_max * 1.05)?.max(1e-4);
    let n = 2048;
    let mut ds = Vec::with_capacity(n + 1);
    let mut zs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let z = z_max * i as f64 / n as f64;
        ds.push(bg.comoving_distance(z)?);
        zs.push(z);
    }
    // Strictly increasing by construction.
    Interp1::new(ds, zs)
}

/// Clustered catalog in a survey wedge. The 3D field is sampled with
/// intensity density * (1 + delta) * phi(d) * w(ra, dec); when `zeropoints`
/// is given, phi is evaluated under the unit's magnitude shift (the
/// resampling route for cross-validating the linearized modulation).
pub fn wedge_mock(
    cfg: &WedgeMockConfig,
    seed: u64,
    zeropoints: Option<&ZeroPointTable>,
) -> Result<Catalog> {
    cfg.region.validate()?;
    cfg.layout.validate()?;
    cfg.weights.validate()?;
    let SurveyRegion::Wedge { dist, .. } = &cfg.region else {
        return Err(Error::Config("wedge mock needs a wedge region".into()));
    };
    if !(cfg.density >= 0.0) {
        return Err(Error::Domain("density must be >= 0".into()));
    }
    let (lo_raw, hi_raw) = cfg.region.bounding_box();
    let pad = cfg.box_padding.max(0.0);
    let lo = [lo_raw[0] - pad, lo_raw[1] - pad, lo_raw[2] - pad];
    let a = cfg.grid_spacing;
    let dims: Vec<usize> = (0..3)
        .map(|i| (((hi_raw[i] + pad) - lo[i]) / a).ceil() as usize + 1)
        .collect();
    let grid = GridSpec::new(dims.clone(), a)?;

    let diag: f64 = (0..3)
        .map(|i| (dims[i] as f64 * a).powi(2))
        .sum::<f64>()
        .sqrt();
    let spectrum = Spectrum::new(cfg.params)?;
    let xi = xi_from_pk(&spectrum, &log_r_grid(0.05, diag * 1.05, 768))?;
    let field = if cfg.lognormal {
        let ln_xi: Vec<f64> = xi.xi().iter().map(|&v| (1.0 + v).max(1e-12).ln()).collect();
        let xi_g = TabulatedXi::from_table(xi.r().to_vec(), ln_xi)?;
        let k_lo = 0.5 * 2.0 * std::f64::consts::PI / (dims.iter().cloned().max().unwrap() as f64 * a);
        let k_hi = 3f64.sqrt() * std::f64::consts::PI / a * 1.05;
        let p_g = pk_from_xi(&xi_g, &log_r_grid(k_lo, k_hi, 1024))?;
        lognormal_transform(&gaussian_field(&p_g, &grid, seed, None)?)
    } else {
        gaussian_field(&spectrum, &grid, seed, None)?
    };

    let z_of_d = redshift_table(&cfg.background, dist[1])?;
    let cell_vol = grid.cell_volume();
    // Angular slack so boundary cells still sample their inside part.
    let margin_deg = (0.5 * 3f64.sqrt() * a / dist[0]) / DEG;
    let n1 = dims[1];
    let n2 = dims[2];
    let slabs: Vec<Vec<GalaxyRecord>> = (0..dims[0])
        .into_par_iter()
        .map(|i0| {
            let mut rng = stream_rng(seed.wrapping_add(0x51ed_2701), i0 as u64);
            let mut out = Vec::new();
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let center = [
                        lo[0] + (i0 as f64 + 0.5) * a,
                        lo[1] + (i1 as f64 + 0.5) * a,
                        lo[2] + (i2 as f64 + 0.5) * a,
                    ];
                    let (ra_c, dec_c, d_c) = sky_of_point(center);
                    if !wedge_near(&cfg.region, ra_c, dec_c, d_c, margin_deg, 0.9 * a) {
                        continue;
                    }
                    if !(d_c > 0.0) {
                        continue;
                    }
                    let dm = zeropoints
                        .and_then(|zp| {
                            cfg.layout
                                .assign(ra_c, dec_c)
                                .and_then(|(s, c, _)| zp.lookup(s, c))
                        })
                        .unwrap_or(0.0);
                    let phi = cfg.selection.phi_shifted(d_c, dm);
                    let wmap = cfg.weights.weight_at(ra_c, dec_c);
                    let delta = field.values[(i0 * n1 + i1) * n2 + i2];
                    let lam = cfg.density * cell_vol * (1.0 + delta).max(0.0) * phi * wmap;
                    if lam <= 0.0 {
                        continue;
                    }
                    let n: f64 =
                        rand_distr::Poisson::new(lam).expect("lambda > 0").sample(&mut rng);
                    for _ in 0..n as usize {
                        let p = [
                            center[0] + (rng.random::<f64>() - 0.5) * a,
                            center[1] + (rng.random::<f64>() - 0.5) * a,
                            center[2] + (rng.random::<f64>() - 0.5) * a,
                        ];
                        if !cfg.region.contains(p) {
                            continue;
                        }
                        let (ra, dec, d) = sky_of_point(p);
                        let Some((s, camcol, fld)) = cfg.layout.assign(ra, dec) else {
                            continue;
                        };
                        let mag = draw_magnitude(&cfg.selection, cfg.mag_limit, d, &mut rng);
                        out.push(GalaxyRecord {
                            ra,
                            dec,
                            redshift: Some(z_of_d.value_clamped(d)),
                            mag,
                            stripe: s,
                            camcol,
                            field: fld,
                            weight: cfg.weights.weight_at(ra, dec),
                        });
                    }
                }
            }
            out
        })
        .collect();
    Ok(Catalog::from_records(slabs.into_iter().flatten().collect()))
}

fn wedge_near(
    region: &SurveyRegion,
    ra: f64,
    dec: f64,
    d: f64,
    margin_deg: f64,
    margin_d: f64,
) -> bool {
    let SurveyRegion::Wedge { ra_deg, dec_deg, dist } = region else {
        return false;
    };
    d >= dist[0] - margin_d
        && d < dist[1] + margin_d
        && dec >= dec_deg[0] - margin_deg
        && dec < dec_deg[1] + margin_deg
        && ra >= ra_deg[0] - margin_deg
        && ra < ra_deg[1] + margin_deg
}

// ---------------------------------------------------------------------------
// Random catalogs

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomsConfig {
    /// Number of generated candidates (before any thinning).
    pub count: usize,
    /// Thin by the weight map (density follows completeness) or keep every
    /// candidate carrying its weight (needed by the cell-count scheme to
    /// compare actual vs perfect coverage).
    pub thin: bool,
}

impl Default for RandomsConfig {
    fn default() -> Self {
        RandomsConfig { count: 100_000, thin: true }
    }
}

/// Angular random catalog over a set of stripes: uniform on the sphere
/// (uniform in RA and in sin Dec), stripe-weighted by area.
pub fn random_catalog(
    layout: &StripeLayout,
    stripes: &[i32],
    cfg: &RandomsConfig,
    weights: &WeightMap,
    seed: u64,
) -> Result<Catalog> {
    layout.validate()?;
    weights.validate()?;
    if cfg.count == 0 {
        return Err(Error::Domain("random catalog needs count > 0".into()));
    }
    if stripes.is_empty() {
        return Err(Error::Domain("random catalog needs at least one stripe".into()));
    }
    // Cumulative area for stripe choice.
    let mut bounds = Vec::new();
    let mut cum = Vec::new();
    let mut total = 0.0;
    for &s in stripes {
        let (lo, hi) = layout.stripe_bounds(s)?;
        let area = (hi * DEG).sin() - (lo * DEG).sin();
        total += area;
        bounds.push((lo, hi));
        cum.push(total);
    }
    let n_chunks = rayon::current_num_threads().max(1) * 4;
    let per = cfg.count.div_ceil(n_chunks);
    let chunks: Vec<Vec<GalaxyRecord>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let lo_i = c * per;
            let hi_i = ((c + 1) * per).min(cfg.count);
            let mut out = Vec::new();
            for _ in lo_i..hi_i {
                let pick = rng.random::<f64>() * total;
                let si = cum.partition_point(|&v| v <= pick).min(bounds.len() - 1);
                let (lo, hi) = bounds[si];
                let sinv = (lo * DEG).sin() + rng.random::<f64>() * ((hi * DEG).sin() - (lo * DEG).sin());
                let dec = sinv.clamp(-1.0, 1.0).asin() / DEG;
                let ra = layout.ra_min_deg
                    + rng.random::<f64>() * (layout.ra_max_deg - layout.ra_min_deg);
                let w = weights.weight_at(ra, dec);
                if cfg.thin && rng.random::<f64>() >= w {
                    continue;
                }
                let Some((s, camcol, fld)) = layout.assign(ra, dec) else {
                    continue;
                };
                out.push(GalaxyRecord {
                    ra,
                    dec,
                    redshift: None,
                    mag: 0.0,
                    stripe: s,
                    camcol,
                    field: fld,
                    weight: w,
                });
            }
            out
        })
        .collect();
    Ok(Catalog::from_records(chunks.into_iter().flatten().collect()))
}

/// Random catalog in a survey wedge: uniform on the sky patch, uniform in
/// volume along the line of sight (no radial selection), weights from the
/// completeness map.
pub fn wedge_randoms(
    region: &SurveyRegion,
    layout: &StripeLayout,
    cfg: &RandomsConfig,
    weights: &WeightMap,
    background: &Background,
    seed: u64,
) -> Result<Catalog> {
    region.validate()?;
    weights.validate()?;
    let SurveyRegion::Wedge { ra_deg, dec_deg, dist } = region else {
        return Err(Error::Config("wedge randoms need a wedge region".into()));
    };
    if cfg.count == 0 {
        return Err(Error::Domain("random catalog needs count > 0".into()));
    }
    let z_of_d = redshift_table(background, dist[1])?;
    let sin_lo = (dec_deg[0] * DEG).sin();
    let sin_hi = (dec_deg[1] * DEG).sin();
    let d3_lo = dist[0].powi(3);
    let d3_hi = dist[1].powi(3);
    let n_chunks = rayon::current_num_threads().max(1) * 4;
    let per = cfg.count.div_ceil(n_chunks);
    let chunks: Vec<Vec<GalaxyRecord>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let lo_i = c * per;
            let hi_i = ((c + 1) * per).min(cfg.count);
            let mut out = Vec::new();
            for _ in lo_i..hi_i {
                let ra = ra_deg[0] + rng.random::<f64>() * (ra_deg[1] - ra_deg[0]);
                let dec =
                    (sin_lo + rng.random::<f64>() * (sin_hi - sin_lo)).clamp(-1.0, 1.0).asin() / DEG;
                let d = (d3_lo + rng.random::<f64>() * (d3_hi - d3_lo)).cbrt();
                let w = weights.weight_at(ra, dec);
                if cfg.thin && rng.random::<f64>() >= w {
                    continue;
                }
                let Some((s, camcol, fld)) = layout.assign(ra, dec) else {
                    continue;
                };
                out.push(GalaxyRecord {
                    ra,
                    dec,
                    redshift: Some(z_of_d.value_clamped(d)),
                    mag: 0.0,
                    stripe: s,
                    camcol,
                    field: fld,
                    weight: w,
                });
            }
            out
        })
        .collect();
    Ok(Catalog::from_records(chunks.into_iter().flatten().collect()))
}

/// 3D comoving position of a record under the given background.
pub fn record_position(rec: &GalaxyRecord, bg: &Background) -> Result<Option<[f64; 3]>> {
    let Some(z) = rec.redshift else {
        return Ok(None);
    };
    let d = bg.comoving_distance(z)?;
    let u = unit_vector(rec.ra, rec.dec);
    Ok(Some([u[0] * d, u[1] * d, u[2] * d]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::ContinuousCDF;

    #[test]
    fn zeropoints_shape_and_degenerate_std() {
        let layout = StripeLayout::default();
        let zp0 = draw_zeropoints(&layout, 0.0, 5).unwrap();
        assert!(zp0.rows().iter().all(|&(_, _, d)| d == 0.0));
        // 10 stripes x 12 camcols.
        let zp = draw_zeropoints(&layout, 0.015, 5).unwrap();
        assert_eq!(zp.rows().len(), 120);
        // One row per unique pair.
        let mut seen = std::collections::HashSet::new();
        for &(s, c, _) in zp.rows() {
            assert!(seen.insert((s, c)));
        }
    }

    #[test]
    fn zeropoint_sample_std_converges() {
        let layout = StripeLayout {
            n_stripes: 50,
            dec0_deg: -62.5,
            ..StripeLayout::default()
        };
        let mut values = Vec::new();
        for seed in 0..17 {
            let zp = draw_zeropoints(&layout, 0.015, seed).unwrap();
            values.extend(zp.rows().iter().map(|&(_, _, d)| d));
        }
        assert!(values.len() >= 10_000);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((std / 0.015 - 1.0).abs() < 0.02, "sample std {std}");
    }

    #[test]
    fn zeropoint_scaling_is_exact_for_matched_seeds() {
        let layout = StripeLayout::default();
        let a = draw_zeropoints(&layout, 0.015, 9).unwrap();
        let b = draw_zeropoints(&layout, 0.030, 9).unwrap();
        for (ra, rb) in a.rows().iter().zip(b.rows()) {
            assert_eq!(rb.2, 2.0 * ra.2);
        }
    }

    #[test]
    fn randoms_uniformity_chi2() {
        let layout = StripeLayout::default();
        let cfg = RandomsConfig { count: 100_000, thin: true };
        let cat = random_catalog(&layout, &[4], &cfg, &WeightMap::default(), 31).unwrap();
        assert_eq!(cat.len(), 100_000);
        // Equal-area bins: uniform RA x uniform sin(dec).
        let (lo, hi) = layout.stripe_bounds(4).unwrap();
        let (slo, shi) = ((lo * DEG).sin(), (hi * DEG).sin());
        let (nr, nd) = (10usize, 5usize);
        let mut counts = vec![0usize; nr * nd];
        for r in cat.records() {
            let ir = (((r.ra - layout.ra_min_deg) / (layout.ra_max_deg - layout.ra_min_deg))
                * nr as f64)
                .floor() as usize;
            let id = ((((r.dec * DEG).sin() - slo) / (shi - slo)) * nd as f64).floor() as usize;
            counts[ir.min(nr - 1) * nd + id.min(nd - 1)] += 1;
        }
        let expect = cat.len() as f64 / (nr * nd) as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        let bound = statrs::distribution::ChiSquared::new((nr * nd - 1) as f64)
            .unwrap()
            .inverse_cdf(0.99865); // one-sided 3 sigma
        assert!(chi2 < bound, "chi2 {chi2} vs bound {bound}");
    }

    #[test]
    fn randoms_zero_weight_region_is_empty_and_half_weight_halves() {
        let layout = StripeLayout::default();
        let zero_zone = crate::geometry::WeightZone {
            ra_deg: [0.0, 10.0],
            dec_deg: [-12.5, -10.0],
            weight: 0.0,
        };
        let half_zone = crate::geometry::WeightZone {
            ra_deg: [10.0, 20.0],
            dec_deg: [-12.5, -10.0],
            weight: 0.5,
        };
        let weights = WeightMap { zones: vec![zero_zone, half_zone], default: 1.0 };
        let cfg = RandomsConfig { count: 120_000, thin: true };
        let cat = random_catalog(&layout, &[0], &cfg, &weights, 77).unwrap();
        let in_zero = cat.records().iter().filter(|r| r.ra < 10.0).count();
        let in_half = cat.records().iter().filter(|r| r.ra >= 10.0).count() as f64;
        assert_eq!(in_zero, 0);
        // Thinning: half-weight region holds half the candidates (60k * 0.5).
        let expect = 30_000.0;
        assert!(
            (in_half - expect).abs() < 3.0 * (expect * 0.5f64.max(0.25)).sqrt() + 3.0 * expect.sqrt(),
            "half-zone count {in_half}"
        );
    }

    #[test]
    fn stripe_mock_is_deterministic_and_in_bounds() {
        let cfg = StripeMockConfig {
            layout: StripeLayout { ra_max_deg: 3.0, ..StripeLayout::default() },
            surface_density: 0.15,
            ..Default::default()
        };
        let a = stripe_mock(&cfg, 2, 123).unwrap();
        let b = stripe_mock(&cfg, 2, 123).unwrap();
        assert_eq!(a.records(), b.records());
        assert!(!a.is_empty());
        let (lo, hi) = cfg.layout.stripe_bounds(2).unwrap();
        for r in a.records() {
            assert_eq!(r.stripe, 2);
            assert!(r.dec >= lo && r.dec < hi);
            assert!(r.mag <= cfg.mag_limit);
            assert!(r.redshift.is_none());
        }
    }

    #[test]
    fn wedge_mock_records_are_consistent() {
        let cfg = WedgeMockConfig {
            region: SurveyRegion::Wedge {
                ra_deg: [1.0, 4.0],
                dec_deg: [-1.5, 1.5],
                dist: [500.0, 800.0],
            },
            grid_spacing: 6.0,
            density: 1e-3,
            ..Default::default()
        };
        let cat = wedge_mock(&cfg, 42, None).unwrap();
        assert!(cat.len() > 100, "only {} records", cat.len());
        let bg = cfg.background;
        for r in cat.records().iter().step_by(7) {
            let p = record_position(r, &bg).unwrap().unwrap();
            assert!(cfg.region.contains(p), "record outside wedge: {p:?}");
        }
        let b = wedge_mock(&cfg, 42, None).unwrap();
        assert_eq!(cat.records(), b.records());
    }
}
