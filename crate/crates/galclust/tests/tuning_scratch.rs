//! Scratch calibration runs (removed before release, run with --ignored).

mod common;

use galclust::cosmomodel::SpectrumParams;
use galclust::klpipe::{likelihood_grid, ParamGrid2};
use galclust::systematics::{cell_unit_map, inject_and_test, InjectConfig, ModulationProfile};

#[test]
#[ignore]
fn tune_angular() {
    let cfg = common::angular_mock_config();
    let target = common::angular_target(&cfg);
    let bins = common::theta_bins();
    let masks = galclust::catalog::MaskSet::empty();
    let n_mocks = 10;
    let mut means = vec![0.0; bins.n_bins()];
    let mut preds = vec![0.0; bins.n_bins()];
    let mut m2 = vec![0.0; bins.n_bins()];
    let t0 = std::time::Instant::now();
    for m in 0..n_mocks {
        let cat = common::clustered_stripe(&cfg, 0, 1000 + m);
        println!("mock {m}: {} galaxies ({:.1?})", cat.len(), t0.elapsed());
        let (wt, pc, map) = common::angular_pipeline(&cat, &masks, &cfg.layout, 0, &bins);
        let pred = common::predicted_wtheta(&target, &pc, &map, &bins);
        for b in 0..bins.n_bins() {
            if wt.w[b].is_finite() {
                means[b] += wt.w[b] / n_mocks as f64;
                m2[b] += wt.w[b] * wt.w[b] / n_mocks as f64;
                preds[b] = pred[b];
            }
        }
    }
    println!("total {:?}", t0.elapsed());
    for b in 0..bins.n_bins() {
        let sd = (m2[b] - means[b] * means[b]).max(0.0).sqrt();
        println!(
            "bin {b:2} theta [{:6.2},{:6.2}) mean {:+.5} pred {:+.5} ratio {:+.3} scatter {:.5}",
            bins.edges[b],
            bins.edges[b + 1],
            means[b],
            preds[b],
            means[b] / preds[b],
            sd
        );
    }
}

#[test]
#[ignore]
fn tune_recovery() {
    let truth = SpectrumParams::default();
    let (mock, section) = common::recovery_setup(truth);
    let t0 = std::time::Instant::now();
    for m in 0..5u64 {
        let (pipe, cat, _r, _s) = common::run_wedge_pipeline(&mock, &section, 100 + m);
        let grid = ParamGrid2 {
            sigma8: section.sigma8_axis.values(),
            gamma: section.gamma_axis.values(),
        };
        let n = pipe.dataset.odv.len();
        let surface = likelihood_grid(std::slice::from_ref(&pipe.dataset), &grid).unwrap();
        println!(
            "mock {m}: gals {} cells {} peak {:?} = ({:.3},{:.3}) refined ({:.4},{:.4}) bound {} 1sig {:?} [{:?}]",
            cat.len(),
            n,
            surface.peak,
            surface.peak_params().0,
            surface.peak_params().1,
            surface.refined_peak.0,
            surface.refined_peak.1,
            surface.boundary_peak,
            surface.sigma_1d,
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn tune_sys() {
    let truth = SpectrumParams { sigma8: 0.5, ..Default::default() };
    let (mock, section) = common::systematics_setup(truth);
    let grid = ParamGrid2 {
        sigma8: section.sigma8_axis.values(),
        gamma: section.gamma_axis.values(),
    };
    let t0 = std::time::Instant::now();
    let mut reductions = Vec::new();
    for m in 0..4u64 {
        let (pipe, cat, _r, sel) = common::run_wedge_pipeline(&mock, &section, 300 + m);
        let profile = ModulationProfile::from_selection(&sel).unwrap();
        let map = cell_unit_map(&pipe.dataset.lattice, &pipe.dataset.odv.cells, &section.layout)
            .unwrap();
        let cfg = InjectConfig { seed: 9000 + m, keep: section.keep, ..Default::default() };
        let report = inject_and_test(
            &pipe.dataset,
            &pipe.covariance,
            &pipe.counts,
            &map,
            &profile,
            &section.layout,
            &grid,
            (truth.sigma8, truth.gamma),
            &cfg,
        )
        .unwrap();
        let bu = report.unfiltered.bias_sigma8(truth.sigma8);
        let bf = report.filtered.bias_sigma8(truth.sigma8);
        let bc = report.clean.bias_sigma8(truth.sigma8);
        println!(
            "mock {m}: gals {} cells {} units {} rejected {} clean {:.4} unfilt {:.4} filt {:.4} (bias c/u/f = {:.4}/{:.4}/{:.4}) [{:?}]",
            cat.len(),
            pipe.dataset.odv.len(),
            map.n_units(),
            report.rejected_modes,
            report.clean.refined_peak.0,
            report.unfiltered.refined_peak.0,
            report.filtered.refined_peak.0,
            bc,
            bu,
            bf,
            t0.elapsed()
        );
        reductions.push((bu, bf));
    }
    let med = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let mu = med(reductions.iter().map(|r| r.0).collect());
    let mf = med(reductions.iter().map(|r| r.1).collect());
    println!("median unfiltered {mu:.4} filtered {mf:.4} reduction {:.1}%", 100.0 * (1.0 - mf / mu));
}
