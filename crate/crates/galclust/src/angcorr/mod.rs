//! FFT-based angular two-point correlation per stripe: rasterize galaxies
//! and the survey window onto a fine tangent-plane grid, form windowed
//! DD/DR/RR pair counts by FFT cross-correlation with zero padding, apply
//! the Landy-Szalay estimator per lag, censor the flat-field streak along
//! the scan direction, azimuthally average into theta bins, and combine
//! stripes with scatter-based errors.
//!
//! Pair counts are normalized by (sum D)^2, (sum D sum R) and (sum R)^2,
//! so the estimator is density-independent. Lags with RR below 1e-12 of
//! the maximum are marked invalid instead of divided.

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, MaskSet};
use crate::error::{Error, Result};
use crate::fourier::fft_nd;
use crate::geometry::StripeLayout;

/// Relative RR floor below which a lag carries no window support.
pub const RR_FLOOR: f64 = 1e-12;

/// Rasterized stripe: data counts D and window weights R on a common grid.
#[derive(Debug, Clone)]
pub struct GridField {
    pub stripe: i32,
    /// Cells along the scan direction.
    pub nx: usize,
    /// Cells across the scan.
    pub ny: usize,
    pub cell_arcmin: f64,
    /// Row-major [iy][ix].
    pub d: Vec<f64>,
    pub r: Vec<f64>,
    /// No galaxies fell inside the stripe.
    pub empty: bool,
    /// Galaxies censored because their cell carries zero window weight.
    pub censored_galaxies: usize,
}

/// Map a catalog and mask set onto a stripe grid. `supersample` subdivides
/// each cell when computing the unmasked window fraction (1 tests the cell
/// center, giving a 0/1 window).
pub fn grid_catalog(
    catalog: &Catalog,
    masks: &MaskSet,
    layout: &StripeLayout,
    stripe: i32,
    cell_arcmin: f64,
    supersample: u8,
) -> Result<GridField> {
    if !(cell_arcmin > 0.0) {
        return Err(Error::Config("cell size must be positive".into()));
    }
    let supersample = supersample.max(1) as usize;
    let scan_arcmin = layout.scan_length_deg(stripe)? * 60.0;
    let width_arcmin = layout.width_deg * 60.0;
    let nx = (scan_arcmin / cell_arcmin).ceil() as usize;
    let ny = (width_arcmin / cell_arcmin).ceil() as usize;
    if nx == 0 || ny == 0 {
        return Err(Error::Config("stripe grid has no cells".into()));
    }
    let dec_c = layout.stripe_center_dec(stripe)?;
    let cosc = (dec_c * crate::geometry::DEG).cos();

    // Window layer: unmasked in-footprint fraction per cell.
    let mut r = vec![0.0f64; nx * ny];
    let step = cell_arcmin / supersample as f64;
    for iy in 0..ny {
        for ix in 0..nx {
            let mut inside = 0usize;
            for sy in 0..supersample {
                for sx in 0..supersample {
                    let x_am = ix as f64 * cell_arcmin + (sx as f64 + 0.5) * step;
                    let y_am = iy as f64 * cell_arcmin + (sy as f64 + 0.5) * step;
                    if x_am >= scan_arcmin || y_am >= width_arcmin {
                        continue;
                    }
                    let ra = layout.ra_min_deg + x_am / 60.0 / cosc;
                    let dec = dec_c - 0.5 * layout.width_deg + y_am / 60.0;
                    if !masks.contains(ra, dec, layout) {
                        inside += 1;
                    }
                }
            }
            r[iy * nx + ix] = inside as f64 / (supersample * supersample) as f64;
        }
    }

    // Data layer: per-cell counts; galaxies in zero-window cells are
    // censored along with their cell.
    let mut d = vec![0.0f64; nx * ny];
    let mut censored = 0usize;
    let mut seen = 0usize;
    for rec in catalog.records() {
        if rec.stripe != stripe {
            continue;
        }
        let (x_deg, y_deg) = layout.stripe_coords(stripe, rec.ra, rec.dec)?;
        let x_am = x_deg * 60.0;
        let y_am = (y_deg + 0.5 * layout.width_deg) * 60.0;
        if x_am < 0.0 || x_am >= scan_arcmin || y_am < 0.0 || y_am >= width_arcmin {
            continue;
        }
        seen += 1;
        let ix = (x_am / cell_arcmin) as usize;
        let iy = (y_am / cell_arcmin) as usize;
        let idx = iy.min(ny - 1) * nx + ix.min(nx - 1);
        if r[idx] > 0.0 {
            d[idx] += 1.0;
        } else {
            censored += 1;
        }
    }

    Ok(GridField {
        stripe,
        nx,
        ny,
        cell_arcmin,
        d,
        r,
        empty: seen == 0,
        censored_galaxies: censored,
    })
}

/// Normalized windowed pair counts over 2D lags.
#[derive(Debug, Clone)]
pub struct PairCountSet {
    /// Original grid cells per axis.
    pub nx: usize,
    pub ny: usize,
    pub cell_arcmin: f64,
    /// Lag arrays, row-major [(2 ny - 1)][(2 nx - 1)].
    pub dd: Vec<f64>,
    pub dr: Vec<f64>,
    pub rr: Vec<f64>,
    pub sum_d: f64,
    pub sum_r: f64,
}

impl PairCountSet {
    pub fn n_lags_x(&self) -> usize {
        2 * self.nx - 1
    }

    pub fn n_lags_y(&self) -> usize {
        2 * self.ny - 1
    }

    /// Flat index for a lag (dx, dy), each in [-(n-1), n-1].
    pub fn lag_index(&self, dx: isize, dy: isize) -> usize {
        let lx = (dx + self.nx as isize - 1) as usize;
        let ly = (dy + self.ny as isize - 1) as usize;
        ly * self.n_lags_x() + lx
    }

    /// Signed lag components for a flat index.
    pub fn lag_of(&self, idx: usize) -> (isize, isize) {
        let nlx = self.n_lags_x();
        let lx = (idx % nlx) as isize - (self.nx as isize - 1);
        let ly = (idx / nlx) as isize - (self.ny as isize - 1);
        (lx, ly)
    }
}

/// Windowed pair counts by FFT: DD(L) = sum_x D(x) D(x+L) and likewise for
/// DR (symmetrized) and RR, computed on zero-padded transforms so no
/// circular aliasing enters, then normalized.
pub fn fft_paircounts(grid: &GridField) -> Result<PairCountSet> {
    let sum_d: f64 = grid.d.iter().sum();
    let sum_r: f64 = grid.r.iter().sum();
    if sum_r <= 0.0 {
        return Err(Error::EmptyWindow);
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let px = (2 * nx - 1).next_power_of_two();
    let py = (2 * ny - 1).next_power_of_two();
    let dims = [py, px];
    let total = px * py;

    let pad = |src: &[f64]| -> Vec<Complex<f64>> {
        let mut out = vec![Complex::new(0.0, 0.0); total];
        for iy in 0..ny {
            for ix in 0..nx {
                out[iy * px + ix] = Complex::new(src[iy * nx + ix], 0.0);
            }
        }
        out
    };

    let mut fd = pad(&grid.d);
    fft_nd(&mut fd, &dims, false);
    let mut fr = pad(&grid.r);
    fft_nd(&mut fr, &dims, false);

    let correlation = |fa: &[Complex<f64>], fb: &[Complex<f64>]| -> Vec<f64> {
        let mut prod: Vec<Complex<f64>> =
            fa.iter().zip(fb).map(|(a, b)| a.conj() * b).collect();
        fft_nd(&mut prod, &dims, true);
        let scale = 1.0 / total as f64;
        let nlx = 2 * nx - 1;
        let nly = 2 * ny - 1;
        let mut lag = vec![0.0f64; nlx * nly];
        for ly in 0..nly {
            let dy = ly as isize - (ny as isize - 1);
            let wy = ((dy + py as isize) % py as isize) as usize;
            for lx in 0..nlx {
                let dx = lx as isize - (nx as isize - 1);
                let wx = ((dx + px as isize) % px as isize) as usize;
                lag[ly * nlx + lx] = prod[wy * px + wx].re * scale;
            }
        }
        lag
    };

    let dd_raw = correlation(&fd, &fd);
    let dr_raw = correlation(&fd, &fr);
    let rr_raw = correlation(&fr, &fr);

    let nlx = 2 * nx - 1;
    let nly = 2 * ny - 1;
    let flip = |idx: usize| -> usize {
        let lx = idx % nlx;
        let ly = idx / nlx;
        (nly - 1 - ly) * nlx + (nlx - 1 - lx)
    };

    let norm_dd = if sum_d > 0.0 { 1.0 / (sum_d * sum_d) } else { 0.0 };
    let norm_dr = if sum_d > 0.0 { 1.0 / (sum_d * sum_r) } else { 0.0 };
    let norm_rr = 1.0 / (sum_r * sum_r);
    let dd: Vec<f64> = (0..dd_raw.len())
        .map(|i| 0.5 * (dd_raw[i] + dd_raw[flip(i)]) * norm_dd)
        .collect();
    let dr: Vec<f64> = (0..dr_raw.len())
        .map(|i| 0.5 * (dr_raw[i] + dr_raw[flip(i)]) * norm_dr)
        .collect();
    let rr: Vec<f64> = (0..rr_raw.len())
        .map(|i| 0.5 * (rr_raw[i] + rr_raw[flip(i)]) * norm_rr)
        .collect();

    Ok(PairCountSet { nx, ny, cell_arcmin: grid.cell_arcmin, dd, dr, rr, sum_d, sum_r })
}

/// Reference O(N^2) pair counts with the same symmetrization and
/// normalization; the oracle for the FFT path.
pub fn direct_paircounts(grid: &GridField) -> Result<PairCountSet> {
    let sum_d: f64 = grid.d.iter().sum();
    let sum_r: f64 = grid.r.iter().sum();
    if sum_r <= 0.0 {
        return Err(Error::EmptyWindow);
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let nlx = 2 * nx - 1;
    let nly = 2 * ny - 1;
    let mut dd = vec![0.0f64; nlx * nly];
    let mut dr = vec![0.0f64; nlx * nly];
    let mut rr = vec![0.0f64; nlx * nly];
    for y1 in 0..ny {
        for x1 in 0..nx {
            let i1 = y1 * nx + x1;
            let (d1, r1) = (grid.d[i1], grid.r[i1]);
            if d1 == 0.0 && r1 == 0.0 {
                continue;
            }
            for y2 in 0..ny {
                let ly = (y2 as isize - y1 as isize + ny as isize - 1) as usize;
                for x2 in 0..nx {
                    let i2 = y2 * nx + x2;
                    let lx = (x2 as isize - x1 as isize + nx as isize - 1) as usize;
                    let l = ly * nlx + lx;
                    dd[l] += d1 * grid.d[i2];
                    dr[l] += d1 * grid.r[i2];
                    rr[l] += r1 * grid.r[i2];
                }
            }
        }
    }
    let flip = |idx: usize| -> usize {
        let lx = idx % nlx;
        let ly = idx / nlx;
        (nly - 1 - ly) * nlx + (nlx - 1 - lx)
    };
    let norm_dd = if sum_d > 0.0 { 1.0 / (sum_d * sum_d) } else { 0.0 };
    let norm_dr = if sum_d > 0.0 { 1.0 / (sum_d * sum_r) } else { 0.0 };
    let norm_rr = 1.0 / (sum_r * sum_r);
    let sym = |v: Vec<f64>, norm: f64| -> Vec<f64> {
        (0..v.len()).map(|i| 0.5 * (v[i] + v[flip(i)]) * norm).collect()
    };
    Ok(PairCountSet {
        nx,
        ny,
        cell_arcmin: grid.cell_arcmin,
        dd: sym(dd, norm_dd),
        dr: sym(dr, norm_dr),
        rr: sym(rr, norm_rr),
        sum_d,
        sum_r,
    })
}

/// 2D Landy-Szalay map with validity and censor flags per lag.
#[derive(Debug, Clone)]
pub struct WMap {
    pub nx: usize,
    pub ny: usize,
    pub cell_arcmin: f64,
    pub w: Vec<f64>,
    /// RR above the support floor.
    pub valid: Vec<bool>,
    /// Censored by the streak cut.
    pub censored: Vec<bool>,
}

impl WMap {
    pub fn n_lags_x(&self) -> usize {
        2 * self.nx - 1
    }

    pub fn n_lags_y(&self) -> usize {
        2 * self.ny - 1
    }

    pub fn lag_of(&self, idx: usize) -> (isize, isize) {
        let nlx = self.n_lags_x();
        let lx = (idx % nlx) as isize - (self.nx as isize - 1);
        let ly = (idx / nlx) as isize - (self.ny as isize - 1);
        (lx, ly)
    }
}

/// w = (DD - 2 DR + RR) / RR per lag; lags with RR below the floor are
/// flagged invalid rather than divided.
pub fn ls_estimator(pc: &PairCountSet) -> WMap {
    let rr_max = pc.rr.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = RR_FLOOR * rr_max;
    let n = pc.rr.len();
    let mut w = vec![f64::NAN; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if pc.rr[i] > floor {
            w[i] = (pc.dd[i] - 2.0 * pc.dr[i] + pc.rr[i]) / pc.rr[i];
            valid[i] = true;
        }
    }
    WMap {
        nx: pc.nx,
        ny: pc.ny,
        cell_arcmin: pc.cell_arcmin,
        w,
        valid,
        censored: vec![false; n],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    /// Scan runs along grid x; the streak lives at zero across-scan lag.
    X,
    Y,
}

/// Outcome of the streak cut, kept so 1D averages are recomputable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensorRecord {
    pub axis: ScanAxis,
    pub half_width: usize,
    pub censored_lags: usize,
    pub all_censored: bool,
}

/// Censor lags within `half_width` cells of the scan axis in lag space
/// (the flat-field streak: extended along the scan direction at zero
/// perpendicular lag).
pub fn censor_scan_streak(map: &WMap, axis: ScanAxis, half_width: usize) -> (WMap, CensorRecord) {
    let mut out = map.clone();
    let mut censored = 0usize;
    for idx in 0..out.w.len() {
        let (lx, ly) = out.lag_of(idx);
        let perp = match axis {
            ScanAxis::X => ly,
            ScanAxis::Y => lx,
        };
        if perp.unsigned_abs() <= half_width {
            out.censored[idx] = true;
            censored += 1;
        }
    }
    let all = out
        .w
        .iter()
        .enumerate()
        .all(|(i, _)| out.censored[i] || !out.valid[i]);
    (out, CensorRecord { axis, half_width, censored_lags: censored, all_censored: all })
}

/// Logarithmic theta bins, arcmin.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBins {
    pub edges: Vec<f64>,
}

impl ThetaBins {
    pub fn log(theta_min: f64, theta_max: f64, n: usize) -> Result<Self> {
        if !(theta_min > 0.0) || theta_max <= theta_min || n == 0 {
            return Err(Error::Config("bad theta binning".into()));
        }
        let l0 = theta_min.ln();
        let l1 = theta_max.ln();
        Ok(ThetaBins {
            edges: (0..=n)
                .map(|i| (l0 + (l1 - l0) * i as f64 / n as f64).exp())
                .collect(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    fn bin_of(&self, theta: f64) -> Option<usize> {
        if theta < self.edges[0] || theta >= self.edges[self.edges.len() - 1] {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= theta) - 1)
    }
}

/// Azimuthally averaged correlation function.
#[derive(Debug, Clone, PartialEq)]
pub struct WTheta {
    pub edges: Vec<f64>,
    /// RR-weighted mean separation per bin, arcmin.
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    pub err: Vec<f64>,
    /// Un-normalized window pair weight per bin.
    pub npairs: Vec<f64>,
    pub nlags: Vec<u32>,
}

/// RR-weighted azimuthal average of the uncensored, valid lags.
pub fn azimuthal_average(map: &WMap, pc: &PairCountSet, bins: &ThetaBins) -> Result<WTheta> {
    let nb = bins.n_bins();
    let mut wsum = vec![0.0; nb];
    let mut wsq = vec![0.0; nb];
    let mut weight = vec![0.0; nb];
    let mut weight_sq = vec![0.0; nb];
    let mut tsum = vec![0.0; nb];
    let mut pairs = vec![0.0; nb];
    let mut nlags = vec![0u32; nb];
    let mut any = false;
    for idx in 0..map.w.len() {
        if !map.valid[idx] || map.censored[idx] {
            continue;
        }
        any = true;
        let (lx, ly) = map.lag_of(idx);
        let theta = map.cell_arcmin * ((lx * lx + ly * ly) as f64).sqrt();
        let Some(b) = bins.bin_of(theta) else {
            continue;
        };
        let wt = pc.rr[idx];
        wsum[b] += wt * map.w[idx];
        wsq[b] += wt * map.w[idx] * map.w[idx];
        weight[b] += wt;
        weight_sq[b] += wt * wt;
        tsum[b] += wt * theta;
        pairs[b] += pc.rr[idx] * pc.sum_r * pc.sum_r;
        nlags[b] += 1;
    }
    if !any {
        return Err(Error::Empty("all lags censored or invalid".into()));
    }
    let mut theta = vec![f64::NAN; nb];
    let mut w = vec![f64::NAN; nb];
    let mut err = vec![f64::NAN; nb];
    for b in 0..nb {
        if weight[b] > 0.0 {
            theta[b] = tsum[b] / weight[b];
            w[b] = wsum[b] / weight[b];
            let var = (wsq[b] / weight[b] - w[b] * w[b]).max(0.0);
            let n_eff = weight[b] * weight[b] / weight_sq[b].max(f64::MIN_POSITIVE);
            err[b] = if n_eff > 1.0 { (var / (n_eff - 1.0)).sqrt() } else { 0.0 };
        }
    }
    Ok(WTheta { edges: bins.edges.clone(), theta, w, err, npairs: pairs, nlags })
}

/// Combine per-stripe w(theta): per-bin mean across stripes with the
/// standard error of the stripe-to-stripe scatter.
pub fn combine_stripes(per_stripe: &[WTheta]) -> Result<WTheta> {
    if per_stripe.len() < 2 {
        return Err(Error::Domain("stripe combination needs >= 2 stripes".into()));
    }
    let edges = &per_stripe[0].edges;
    for s in per_stripe.iter().skip(1) {
        if s.edges.len() != edges.len()
            || s.edges.iter().zip(edges).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0))
        {
            return Err(Error::BinningMismatch);
        }
    }
    let nb = edges.len() - 1;
    let mut theta = vec![f64::NAN; nb];
    let mut w = vec![f64::NAN; nb];
    let mut err = vec![f64::NAN; nb];
    let mut npairs = vec![0.0; nb];
    let mut nlags = vec![0u32; nb];
    for b in 0..nb {
        let vals: Vec<f64> = per_stripe
            .iter()
            .filter(|s| s.nlags[b] > 0 && s.w[b].is_finite())
            .map(|s| s.w[b])
            .collect();
        let thetas: Vec<f64> = per_stripe
            .iter()
            .filter(|s| s.nlags[b] > 0 && s.theta[b].is_finite())
            .map(|s| s.theta[b])
            .collect();
        npairs[b] = per_stripe.iter().map(|s| s.npairs[b]).sum();
        nlags[b] = per_stripe.iter().map(|s| s.nlags[b]).sum();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        w[b] = mean;
        theta[b] = thetas.iter().sum::<f64>() / thetas.len() as f64;
        if vals.len() > 1 {
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            err[b] = (var / n).sqrt();
        } else {
            err[b] = 0.0;
        }
    }
    Ok(WTheta { edges: edges.clone(), theta, w, err, npairs, nlags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, GalaxyRecord, MaskRegion};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn toy_grid(nx: usize, ny: usize, d: Vec<f64>, r: Vec<f64>) -> GridField {
        GridField {
            stripe: 0,
            nx,
            ny,
            cell_arcmin: 1.0,
            d,
            r,
            empty: false,
            censored_galaxies: 0,
        }
    }

    fn assert_counts_close(a: &PairCountSet, b: &PairCountSet, tol: f64) {
        for (name, x, y) in [("dd", &a.dd, &b.dd), ("dr", &a.dr, &b.dr), ("rr", &a.rr, &b.rr)] {
            let scale = y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            for i in 0..x.len() {
                assert!(
                    (x[i] - y[i]).abs() <= tol * scale.max(y[i].abs()),
                    "{name}[{i}]: {} vs {}",
                    x[i],
                    y[i]
                );
            }
        }
    }

    #[test]
    fn single_occupied_cell_is_delta_at_zero_lag() {
        let mut d = vec![0.0; 16];
        d[5] = 1.0;
        let grid = toy_grid(4, 4, d, vec![1.0; 16]);
        let pc = fft_paircounts(&grid).unwrap();
        for idx in 0..pc.dd.len() {
            let (lx, ly) = pc.lag_of(idx);
            let expect = if lx == 0 && ly == 0 { 1.0 } else { 0.0 };
            assert!((pc.dd[idx] - expect).abs() < 1e-12, "dd at ({lx},{ly})");
        }
    }

    #[test]
    fn data_equal_window_makes_all_three_equal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..12 * 7).map(|_| rng.random::<f64>()).collect();
        let grid = toy_grid(12, 7, vals.clone(), vals);
        let pc = fft_paircounts(&grid).unwrap();
        for i in 0..pc.dd.len() {
            assert_relative_eq!(pc.dd[i], pc.rr[i], epsilon = 1e-12);
            assert_relative_eq!(pc.dr[i], pc.rr[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_window_fails() {
        let grid = toy_grid(4, 4, vec![1.0; 16], vec![0.0; 16]);
        assert!(matches!(fft_paircounts(&grid), Err(Error::EmptyWindow)));
    }

    #[test]
    fn fft_matches_direct_sum_on_random_grids() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for case in 0..12 {
            let nx = rng.random_range(2..=32);
            let ny = rng.random_range(2..=32);
            let d: Vec<f64> = (0..nx * ny)
                .map(|_| if rng.random::<f64>() < 0.3 { rng.random_range(1..5) as f64 } else { 0.0 })
                .collect();
            let r: Vec<f64> = (0..nx * ny)
                .map(|_| if rng.random::<f64>() < 0.8 { 1.0 } else { 0.0 })
                .collect();
            if r.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let grid = toy_grid(nx, ny, d, r);
            let fft = fft_paircounts(&grid).unwrap();
            let direct = direct_paircounts(&grid).unwrap();
            assert_counts_close(&fft, &direct, 1e-9);
            let _ = case;
        }
    }

    #[test]
    fn pair_counts_symmetric_under_lag_negation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let d: Vec<f64> = (0..15 * 9).map(|_| rng.random_range(0..4) as f64).collect();
        let r: Vec<f64> = (0..15 * 9).map(|_| rng.random::<f64>().round()).collect();
        let grid = toy_grid(15, 9, d, r);
        let pc = fft_paircounts(&grid).unwrap();
        for idx in 0..pc.dd.len() {
            let (lx, ly) = pc.lag_of(idx);
            let j = pc.lag_index(-lx, -ly);
            assert_relative_eq!(pc.dd[idx], pc.dd[j], epsilon = 1e-13);
            assert_relative_eq!(pc.dr[idx], pc.dr[j], epsilon = 1e-13);
            assert_relative_eq!(pc.rr[idx], pc.rr[j], epsilon = 1e-13);
        }
        // RR(0,0) positive for a non-empty window.
        assert!(pc.rr[pc.lag_index(0, 0)] > 0.0);
    }

    #[test]
    fn ls_formula_cases() {
        let grid = toy_grid(2, 2, vec![1.0, 0.0, 0.0, 0.0], vec![1.0; 4]);
        let mut pc = fft_paircounts(&grid).unwrap();
        // Force controlled values at a single lag.
        let idx = pc.lag_index(1, 0);
        pc.dd[idx] = 4.0;
        pc.dr[idx] = 1.0;
        pc.rr[idx] = 1.0;
        let w = ls_estimator(&pc);
        assert_relative_eq!(w.w[idx], 3.0, epsilon = 1e-12);
        // DD = DR = RR gives zero.
        pc.dd[idx] = 1.0;
        let w = ls_estimator(&pc);
        assert_relative_eq!(w.w[idx], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn censor_widths() {
        let grid = toy_grid(6, 5, vec![1.0; 30], vec![1.0; 30]);
        let pc = fft_paircounts(&grid).unwrap();
        let map = ls_estimator(&pc);
        let (c0, rec0) = censor_scan_streak(&map, ScanAxis::X, 0);
        // Only the dy = 0 row.
        assert_eq!(rec0.censored_lags, map.n_lags_x());
        for idx in 0..c0.w.len() {
            let (_, ly) = c0.lag_of(idx);
            assert_eq!(c0.censored[idx], ly == 0);
        }
        let (_, rec_all) = censor_scan_streak(&map, ScanAxis::X, map.ny);
        assert!(rec_all.all_censored);
    }

    #[test]
    fn azimuthal_average_recomputable_and_reflection_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d: Vec<f64> = (0..40 * 20).map(|_| rng.random_range(0..3) as f64).collect();
        let grid = toy_grid(40, 20, d, vec![1.0; 800]);
        let pc = fft_paircounts(&grid).unwrap();
        let (map, _) = censor_scan_streak(&ls_estimator(&pc), ScanAxis::X, 1);
        let bins = ThetaBins::log(1.0, 15.0, 8).unwrap();
        let w1 = azimuthal_average(&map, &pc, &bins).unwrap();

        // Reflect the lag arrays; the average must not move.
        let mut map2 = map.clone();
        let mut pc2 = pc.clone();
        for idx in 0..map.w.len() {
            let (lx, ly) = map.lag_of(idx);
            let j = pc.lag_index(-lx, -ly);
            map2.w[idx] = map.w[j];
            map2.valid[idx] = map.valid[j];
            map2.censored[idx] = map.censored[j];
            pc2.dd[idx] = pc.dd[j];
            pc2.dr[idx] = pc.dr[j];
            pc2.rr[idx] = pc.rr[j];
        }
        let w2 = azimuthal_average(&map2, &pc2, &bins).unwrap();
        for b in 0..bins.n_bins() {
            if w1.w[b].is_finite() {
                assert_relative_eq!(w1.w[b], w2.w[b], epsilon = 1e-12);
            }
        }

        // Recompute from the 2D map plus censor flags: same answer.
        let w3 = azimuthal_average(&map, &pc, &bins).unwrap();
        assert_eq!(w1.edges, w3.edges);
        assert_eq!(w1.nlags, w3.nlags);
        for b in 0..bins.n_bins() {
            assert!(w1.w[b].to_bits() == w3.w[b].to_bits());
            assert!(w1.err[b].to_bits() == w3.err[b].to_bits());
        }
    }

    #[test]
    fn combine_trivial_cases() {
        let grid = toy_grid(8, 8, vec![1.0; 64], vec![1.0; 64]);
        let pc = fft_paircounts(&grid).unwrap();
        let map = ls_estimator(&pc);
        let bins = ThetaBins::log(1.0, 8.0, 5).unwrap();
        let one = azimuthal_average(&map, &pc, &bins).unwrap();
        let combined = combine_stripes(&[one.clone(), one.clone()]).unwrap();
        for b in 0..bins.n_bins() {
            if one.w[b].is_finite() {
                assert_relative_eq!(combined.w[b], one.w[b], epsilon = 1e-14);
                assert_eq!(combined.err[b], 0.0);
            }
        }
        // Two stripes with w = 0 and 2 in a bin: mean 1, standard error 1.
        let mut a = one.clone();
        let mut b2 = one.clone();
        a.w[2] = 0.0;
        b2.w[2] = 2.0;
        a.nlags[2] = 1;
        b2.nlags[2] = 1;
        let c = combine_stripes(&[a, b2]).unwrap();
        assert_relative_eq!(c.w[2], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.err[2], 1.0, epsilon = 1e-14);

        // Mismatched binning fails.
        let other_bins = ThetaBins::log(1.0, 9.0, 5).unwrap();
        let other = azimuthal_average(&map, &pc, &other_bins).unwrap();
        assert!(matches!(combine_stripes(&[one, other]), Err(Error::BinningMismatch)));
    }

    #[test]
    fn grid_catalog_trivial_and_oracle() {
        let layout = StripeLayout { ra_max_deg: 2.0, ..StripeLayout::default() };
        let stripe = 4;
        let dec_c = layout.stripe_center_dec(stripe).unwrap();
        let one = Catalog::from_records(vec![GalaxyRecord {
            ra: 1.0,
            dec: dec_c + 0.3,
            redshift: None,
            mag: 17.0,
            stripe,
            camcol: 6,
            field: 0,
            weight: 1.0,
        }]);
        let g = grid_catalog(&one, &MaskSet::empty(), &layout, stripe, 1.0, 1).unwrap();
        assert_eq!(g.d.iter().sum::<f64>(), 1.0);
        assert!(g.r.iter().all(|&v| v == 1.0 || v == 0.0));
        assert!(!g.empty);

        // Mask covering the galaxy's cell: D drops to zero there, R = 0.
        let masks = MaskSet::new(vec![MaskRegion::Circle {
            ra_deg: 1.0,
            dec_deg: dec_c + 0.3,
            radius_arcmin: 3.0,
            reason: "star".into(),
        }])
        .unwrap();
        let gm = grid_catalog(&one, &masks, &layout, stripe, 1.0, 1).unwrap();
        assert_eq!(gm.d.iter().sum::<f64>(), 0.0);
        assert_eq!(gm.censored_galaxies, 1);

        // 300 galaxies, 5 masks: per-cell counts equal a direct binning oracle.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let (lo, hi) = layout.stripe_bounds(stripe).unwrap();
        let recs: Vec<GalaxyRecord> = (0..300)
            .map(|_| GalaxyRecord {
                ra: rng.random::<f64>() * 2.0,
                dec: lo + rng.random::<f64>() * (hi - lo),
                redshift: None,
                mag: 17.0,
                stripe,
                camcol: 1,
                field: 0,
                weight: 1.0,
            })
            .collect();
        let masks5 = MaskSet::new(
            (0..5)
                .map(|_| MaskRegion::Circle {
                    ra_deg: rng.random::<f64>() * 2.0,
                    dec_deg: lo + rng.random::<f64>() * (hi - lo),
                    radius_arcmin: 2.0 + rng.random::<f64>() * 4.0,
                    reason: "m".into(),
                })
                .collect(),
        )
        .unwrap();
        let cat = Catalog::from_records(recs.clone());
        let g = grid_catalog(&cat, &masks5, &layout, stripe, 1.0, 1).unwrap();
        // Oracle: bin points, zero cells whose window is zero.
        let cosc = (dec_c * crate::geometry::DEG).cos();
        let mut oracle = vec![0.0f64; g.nx * g.ny];
        for r in &recs {
            let x_am = (r.ra - layout.ra_min_deg) * cosc * 60.0;
            let y_am = (r.dec - lo) * 60.0;
            if x_am < 0.0 || x_am >= g.nx as f64 || y_am < 0.0 || y_am >= g.ny as f64 {
                continue;
            }
            let idx = (y_am as usize) * g.nx + x_am as usize;
            if g.r[idx] > 0.0 {
                oracle[idx] += 1.0;
            }
        }
        assert_eq!(g.d, oracle);
        // Total D equals gridded galaxies outside masks.
        assert_eq!(
            g.d.iter().sum::<f64>() as usize + g.censored_galaxies,
            recs.len()
        );
    }

    #[test]
    fn absent_stripe_yields_flagged_empty_grid() {
        let layout = StripeLayout::default();
        let cat = Catalog::from_records(vec![]);
        let g = grid_catalog(&cat, &MaskSet::empty(), &layout, 3, 1.0, 1).unwrap();
        assert!(g.empty);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// FFT pair counts match the quadratic direct sum on random grids.
        #[test]
        fn fft_equals_direct(seed in 0u64..500, nx in 2usize..24, ny in 2usize..24) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(0..4) as f64).collect();
            let mut r: Vec<f64> = (0..nx * ny).map(|_| rng.random::<f64>().round()).collect();
            if r.iter().sum::<f64>() == 0.0 {
                r[0] = 1.0;
            }
            let grid = toy_grid(nx, ny, d, r);
            let fft = fft_paircounts(&grid).unwrap();
            let direct = direct_paircounts(&grid).unwrap();
            for (x, y) in fft.dd.iter().zip(&direct.dd) {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
            for (x, y) in fft.dr.iter().zip(&direct.dr) {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
            for (x, y) in fft.rr.iter().zip(&direct.rr) {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
