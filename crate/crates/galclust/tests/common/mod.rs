//! Shared fixtures for the integration and acceptance suites: canonical
//! desk-scale mock configurations and end-to-end pipeline helpers.

#![allow(dead_code)]

use galclust::angcorr::{
    azimuthal_average, censor_scan_streak, fft_paircounts, grid_catalog, ls_estimator, ScanAxis,
    ThetaBins, WTheta,
};
use galclust::catalog::{Catalog, MaskSet, SelectionFunction};
use galclust::config::{AxisSpec, KlSection};
use galclust::driver::{assemble_region, RegionPipeline};
use galclust::geometry::{StripeLayout, SurveyRegion, WeightMap};
use galclust::klpipe::KeepSpec;
use galclust::mocks::{
    stripe_mock, stripe_target_w, wedge_mock, wedge_randoms, AngularTarget, RandomsConfig,
    StripeMockConfig, WedgeMockConfig,
};
use galclust::cosmomodel::SpectrumParams;

/// Layout used by the angular-correlation suites: 20 degree scan length.
pub fn angular_layout() -> StripeLayout {
    StripeLayout { ra_max_deg: 20.0, ..StripeLayout::default() }
}

/// Clustered stripe-mock configuration for the angular recovery tests.
pub fn angular_mock_config() -> StripeMockConfig {
    StripeMockConfig {
        layout: angular_layout(),
        params: SpectrumParams::default(),
        distance: 1000.0,
        thickness: 60.0,
        pixel_arcmin: 0.5,
        pad_across: 2.0,
        surface_density: 0.3,
        weights: WeightMap::default(),
        ..Default::default()
    }
}

pub fn theta_bins() -> ThetaBins {
    ThetaBins::log(1.0, 75.0, 20).unwrap()
}

/// One full angular pipeline pass on a catalog: grid, FFT pair counts,
/// LS, streak censor, azimuthal average.
pub fn angular_pipeline(
    catalog: &Catalog,
    masks: &MaskSet,
    layout: &StripeLayout,
    stripe: i32,
    bins: &ThetaBins,
) -> (WTheta, galclust::angcorr::PairCountSet, galclust::angcorr::WMap) {
    let grid = grid_catalog(catalog, masks, layout, stripe, 1.0, 1).unwrap();
    let pc = fft_paircounts(&grid).unwrap();
    let (map, _) = censor_scan_streak(&ls_estimator(&pc), ScanAxis::X, 1);
    let wt = azimuthal_average(&map, &pc, bins).unwrap();
    (wt, pc, map)
}

/// Expected value of the windowed LS estimator for a model w(theta):
/// RR-weighted over each annulus with the integral-constraint correction
/// (1 + w) / (1 + IC) - 1, IC being the RR-weighted model mean over all
/// valid uncensored lags.
pub fn predicted_wtheta(
    target: &AngularTarget,
    pc: &galclust::angcorr::PairCountSet,
    map: &galclust::angcorr::WMap,
    bins: &ThetaBins,
) -> Vec<f64> {
    let mut ic_num = 0.0;
    let mut ic_den = 0.0;
    for idx in 0..map.w.len() {
        if !map.valid[idx] {
            continue;
        }
        let (lx, ly) = map.lag_of(idx);
        let theta = map.cell_arcmin * ((lx * lx + ly * ly) as f64).sqrt();
        ic_num += pc.rr[idx] * target.value_or_zero(theta);
        ic_den += pc.rr[idx];
    }
    let ic = ic_num / ic_den;
    let nb = bins.edges.len() - 1;
    let mut num = vec![0.0; nb];
    let mut den = vec![0.0; nb];
    for idx in 0..map.w.len() {
        if !map.valid[idx] || map.censored[idx] {
            continue;
        }
        let (lx, ly) = map.lag_of(idx);
        let theta = map.cell_arcmin * ((lx * lx + ly * ly) as f64).sqrt();
        if theta < bins.edges[0] || theta >= bins.edges[nb] {
            continue;
        }
        let b = bins.edges[..nb].partition_point(|&e| e <= theta) - 1;
        let w_model = (1.0 + target.value_or_zero(theta)) / (1.0 + ic) - 1.0;
        num[b] += pc.rr[idx] * w_model;
        den[b] += pc.rr[idx];
    }
    (0..nb).map(|b| if den[b] > 0.0 { num[b] / den[b] } else { f64::NAN }).collect()
}

pub fn angular_target(cfg: &StripeMockConfig) -> AngularTarget {
    stripe_target_w(cfg).unwrap()
}

pub fn clustered_stripe(cfg: &StripeMockConfig, stripe: i32, seed: u64) -> Catalog {
    stripe_mock(cfg, stripe, seed).unwrap()
}

// ---------------------------------------------------------------------------
// KL pipeline fixtures

/// Wedge mock + section for the parameter-recovery suite.
pub fn recovery_setup(truth: SpectrumParams) -> (WedgeMockConfig, KlSection) {
    let region = SurveyRegion::Wedge {
        ra_deg: [0.0, 4.8],
        dec_deg: [-2.4, 2.4],
        dist: [600.0, 1400.0],
    };
    let layout = StripeLayout::default();
    let mock = WedgeMockConfig {
        region: region.clone(),
        layout: layout.clone(),
        params: truth,
        grid_spacing: 3.0,
        box_padding: 120.0,
        density: 4.5e-3,
        ..Default::default()
    };
    let section = KlSection {
        layout,
        regions: vec![region],
        target_cells: Some(550),
        completeness_threshold: 0.75,
        keep: KeepSpec::Fraction(1.0 / 3.0),
        fixed: truth,
        sigma8_axis: AxisSpec { min: 0.70, max: 1.10, n: 9 },
        gamma_axis: AxisSpec { min: 0.12, max: 0.28, n: 9 },
        ..Default::default()
    };
    (mock, section)
}

/// Deep narrow wedge for the zero-point systematics suite: cells sized to
/// the camcol footprint so per-cell shifts do not average away, and the
/// whole shell inside the amplified selection falloff.
pub fn systematics_setup(truth: SpectrumParams) -> (WedgeMockConfig, KlSection) {
    let layout = StripeLayout::default();
    // Two camcols of stripe 5 (dec 0..2.5): bands [0.2083, 0.4167, 0.625].
    let region = SurveyRegion::Wedge {
        ra_deg: [0.5, 1.93],
        dec_deg: [0.2083, 0.625],
        dist: [2150.0, 2400.0],
    };
    let mock = WedgeMockConfig {
        region: region.clone(),
        layout: layout.clone(),
        params: truth,
        grid_spacing: 1.3,
        box_padding: 100.0,
        density: 2.0,
        ..Default::default()
    };
    let section = KlSection {
        layout,
        regions: vec![region],
        target_cells: Some(900),
        completeness_threshold: 0.75,
        keep: KeepSpec::Fraction(1.0 / 3.0),
        fixed: truth,
        sigma8_axis: AxisSpec { min: truth.sigma8 - 0.2, max: truth.sigma8 + 0.3, n: 21 },
        gamma_axis: AxisSpec { min: 0.14, max: 0.26, n: 5 },
        ..Default::default()
    };
    (mock, section)
}

/// Generate a wedge mock, matching randoms (50x, unthinned) and assemble
/// the full region pipeline with the default selection table.
pub fn run_wedge_pipeline(
    mock: &WedgeMockConfig,
    section: &KlSection,
    seed: u64,
) -> (RegionPipeline, Catalog, Catalog, SelectionFunction) {
    let catalog = wedge_mock(mock, seed, None).unwrap();
    let randoms = wedge_randoms(
        &mock.region,
        &mock.layout,
        &RandomsConfig { count: 50 * catalog.len().max(1_000), thin: false },
        &mock.weights,
        &mock.background,
        seed ^ 0x52414e44,
    )
    .unwrap();
    let selection = SelectionFunction::default_table();
    let pipeline = assemble_region(section, 0, &catalog, &randoms, &selection).unwrap();
    (pipeline, catalog, randoms, selection)
}
