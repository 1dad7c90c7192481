//! Batch command implementations shared by the `galclust` binary and the
//! integration tests. Each command resolves its config section, runs the
//! pipeline, writes artifacts under the output directory, and echoes the
//! effective configuration next to them. Commands are idempotent for a
//! fixed config and seed; no artifact carries a timestamp.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::angcorr::{
    azimuthal_average, censor_scan_streak, combine_stripes, fft_paircounts, grid_catalog,
    ls_estimator, ThetaBins, WTheta,
};
use crate::catalog::{apply_subsample, load_catalog, Catalog, MaskSet, SelectionFunction};
use crate::config::{KlSection, MockKind, RunConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::klpipe::{
    build_covariance, build_lattice, count_cells, kl_decompose, likelihood_grid, overdensities,
    CellCounts, CellXi, CovarianceMatrix, KlDataset, LikelihoodSurface, ParamGrid2, RadiusSpec,
};
use crate::mocks::{draw_zeropoints, random_catalog, stripe_mock, wedge_mock, wedge_randoms};
use crate::systematics::{
    cell_unit_map, ensemble_sys_covariance, inject_and_test, CellUnitMap, InjectConfig,
    ModulationProfile,
};

/// Files written by a command, in creation order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    fn push(&mut self, p: PathBuf) {
        self.files.push(p);
    }
}

fn ensure_out(out: &Path, dry: bool) -> Result<()> {
    if !dry {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn echo_config(cfg: &RunConfig, out: &Path, artifacts: &mut Artifacts, dry: bool) -> Result<()> {
    let path = out.join("config.echo.toml");
    if dry {
        println!("plan: would write {}", path.display());
    } else {
        std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
        artifacts.push(path);
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{what} file not found"),
            ),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mock

pub fn run_mock(cfg: &RunConfig, dry: bool) -> Result<Artifacts> {
    let section = cfg.mock.as_ref().ok_or_else(|| Error::Config("missing [mock] section".into()))?;
    let out = &cfg.out;
    let mut artifacts = Artifacts::default();
    ensure_out(out, dry)?;

    let catalog_path = out.join("catalog.csv");
    let randoms_path = out.join("randoms.csv");
    let zp_path = out.join("zeropoints.csv");
    if dry {
        for p in [&catalog_path, &randoms_path, &zp_path] {
            println!("plan: would write {}", p.display());
        }
        echo_config(cfg, out, &mut artifacts, dry)?;
        return Ok(artifacts);
    }

    let (catalog, layout) = match section.kind {
        MockKind::Stripes => {
            let mut records = Vec::new();
            let per_stripe: Vec<Result<Catalog>> = section
                .stripe_ids
                .par_iter()
                .map(|&s| stripe_mock(&section.stripe, s, cfg.seed.wrapping_add(s as u64)))
                .collect();
            for cat in per_stripe {
                records.extend(cat?.records().iter().cloned());
            }
            (Catalog::from_records(records), section.stripe.layout.clone())
        }
        MockKind::Wedge => (
            wedge_mock(&section.wedge, cfg.seed, None)?,
            section.wedge.layout.clone(),
        ),
    };
    catalog.save(&catalog_path)?;
    artifacts.push(catalog_path);

    if section.randoms.count == 0 {
        // Header-only file.
        Catalog::from_records(Vec::new()).save(&randoms_path)?;
    } else {
        let randoms = match section.kind {
            MockKind::Stripes => random_catalog(
                &layout,
                &section.stripe_ids,
                &section.randoms,
                &section.stripe.weights,
                cfg.seed ^ 0x5261_4e44,
            )?,
            MockKind::Wedge => wedge_randoms(
                &section.wedge.region,
                &layout,
                &section.randoms,
                &section.wedge.weights,
                &section.wedge.background,
                cfg.seed ^ 0x5261_4e44,
            )?,
        };
        randoms.save(&randoms_path)?;
    }
    artifacts.push(randoms_path);

    let zp = draw_zeropoints(&layout, section.zeropoint_std, cfg.seed ^ 0x7a65_726f)?;
    zp.save(&zp_path)?;
    artifacts.push(zp_path);

    echo_config(cfg, out, &mut artifacts, dry)?;
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// angcorr

pub fn run_angcorr(cfg: &RunConfig, dry: bool) -> Result<Artifacts> {
    let section =
        cfg.angcorr.as_ref().ok_or_else(|| Error::Config("missing [angcorr] section".into()))?;
    let out = &cfg.out;
    let mut artifacts = Artifacts::default();
    ensure_out(out, dry)?;
    require_file(&section.catalog, "catalog")?;
    if let Some(masks) = &section.masks {
        require_file(masks, "mask")?;
    }
    let subsamples: Vec<crate::catalog::SubsampleSpec> = if section.subsamples.is_empty() {
        vec![crate::catalog::SubsampleSpec::default()]
    } else {
        section.subsamples.clone()
    };
    if dry {
        for si in 0..subsamples.len() {
            for &stripe in &section.stripes {
                println!("plan: would write {}", out.join(sub_name("w2d", si, Some(stripe), &subsamples)).display());
                println!("plan: would write {}", out.join(sub_name("wtheta", si, Some(stripe), &subsamples)).display());
            }
            println!("plan: would write {}", out.join(sub_name("wtheta_combined", si, None, &subsamples)).display());
            println!("plan: would write {}", out.join(sub_name_svg(si, &subsamples)).display());
        }
        echo_config(cfg, out, &mut artifacts, dry)?;
        return Ok(artifacts);
    }

    let (catalog, _report) = load_catalog(&section.catalog)?;
    let masks = match &section.masks {
        Some(p) => MaskSet::load(p)?,
        None => MaskSet::empty(),
    };
    let bins = ThetaBins::log(section.theta_min_arcmin, section.theta_max_arcmin, section.theta_bins)?;

    for (si, spec) in subsamples.iter().enumerate() {
        let sub = apply_subsample(&catalog, spec);
        // Per-stripe pipelines are independent.
        let jobs: Vec<Result<(i32, crate::angcorr::WMap, crate::angcorr::PairCountSet, WTheta)>> =
            section
                .stripes
                .par_iter()
                .map(|&stripe| {
                    let grid = grid_catalog(
                        &sub,
                        &masks,
                        &section.layout,
                        stripe,
                        section.cell_arcmin,
                        section.supersample,
                    )?;
                    let pc = fft_paircounts(&grid)?;
                    let (map, _rec) = censor_scan_streak(
                        &ls_estimator(&pc),
                        section.scan_axis,
                        section.streak_half_width,
                    );
                    let wt = azimuthal_average(&map, &pc, &bins)?;
                    Ok((stripe, map, pc, wt))
                })
                .collect();
        let mut per_stripe = Vec::new();
        for job in jobs {
            let (stripe, map, _pc, wt) = job?;
            let w2d_path = out.join(sub_name("w2d", si, Some(stripe), &subsamples));
            io::write_w2d(&w2d_path, &map)?;
            artifacts.push(w2d_path);
            let wt_path = out.join(sub_name("wtheta", si, Some(stripe), &subsamples));
            io::write_wtheta(&wt_path, &wt)?;
            artifacts.push(wt_path);
            per_stripe.push((format!("stripe{stripe}"), wt));
        }
        if per_stripe.len() >= 2 {
            let combined = combine_stripes(
                &per_stripe.iter().map(|(_, w)| w.clone()).collect::<Vec<_>>(),
            )?;
            let c_path = out.join(sub_name("wtheta_combined", si, None, &subsamples));
            io::write_wtheta(&c_path, &combined)?;
            artifacts.push(c_path);
            let svg_path = out.join(sub_name_svg(si, &subsamples));
            io::plot_wtheta_svg(&svg_path, &per_stripe, Some(&combined))?;
            artifacts.push(svg_path);
        } else if let Some((_, only)) = per_stripe.first() {
            let svg_path = out.join(sub_name_svg(si, &subsamples));
            io::plot_wtheta_svg(&svg_path, &per_stripe, Some(only))?;
            artifacts.push(svg_path);
        }
    }
    echo_config(cfg, out, &mut artifacts, dry)?;
    Ok(artifacts)
}

fn sub_name(stem: &str, si: usize, stripe: Option<i32>, subsamples: &[crate::catalog::SubsampleSpec]) -> String {
    let sub = if subsamples.len() > 1 { format!("_sub{si}") } else { String::new() };
    match stripe {
        Some(s) => format!("{stem}{sub}_s{s}.txt"),
        None => format!("{stem}{sub}.txt"),
    }
}

fn sub_name_svg(si: usize, subsamples: &[crate::catalog::SubsampleSpec]) -> String {
    if subsamples.len() > 1 {
        format!("wtheta_sub{si}.svg")
    } else {
        "wtheta.svg".to_string()
    }
}

// ---------------------------------------------------------------------------
// kl

/// Assembled per-region pipeline state, reused by the sys command.
pub struct RegionPipeline {
    pub dataset: KlDataset,
    pub covariance: CovarianceMatrix,
    pub counts: CellCounts,
}

pub fn assemble_region(
    section: &KlSection,
    region_idx: usize,
    catalog: &Catalog,
    randoms: &Catalog,
    selection: &SelectionFunction,
) -> Result<RegionPipeline> {
    let region = &section.regions[region_idx];
    let radius = match (section.cell_radius, section.target_cells) {
        (Some(r), _) => RadiusSpec::Fixed(r),
        (None, Some(t)) => RadiusSpec::TargetCount(t),
        (None, None) => {
            return Err(Error::Config("kl needs cell_radius or target_cells".into()))
        }
    };
    let lattice = build_lattice(region, radius, region_idx as u32)?;
    let counts = count_cells(catalog, randoms, &lattice, selection, &section.background)?;
    let odv = overdensities(&counts, section.completeness_threshold)?;
    let spectrum = crate::cosmomodel::Spectrum::new(section.fixed)?;
    let mut r_max: f64 = 4.0 * lattice.radius;
    for a in 0..odv.len() {
        for b in (a + 1)..odv.len() {
            r_max = r_max.max(lattice.pair_distance(odv.cells[a], odv.cells[b]));
        }
    }
    let xi = CellXi::build(&spectrum, lattice.radius, r_max * 1.05)?;
    let covariance = build_covariance(&lattice, &odv, &section.fixed, &xi)?;
    let basis = kl_decompose(&covariance, section.keep)?;
    let dataset = KlDataset::new(lattice, odv, basis, section.fixed)?;
    Ok(RegionPipeline { dataset, covariance, counts })
}

fn load_kl_inputs(section: &KlSection) -> Result<(Catalog, Catalog, SelectionFunction)> {
    require_file(&section.catalog, "catalog")?;
    require_file(&section.randoms, "randoms")?;
    let selection = match &section.selection {
        Some(p) => {
            require_file(p, "selection function")?;
            SelectionFunction::load(p)?
        }
        None => SelectionFunction::default_table(),
    };
    let (catalog, _) = load_catalog(&section.catalog)?;
    let (randoms, _) = load_catalog(&section.randoms)?;
    Ok((catalog, randoms, selection))
}

pub fn run_kl(cfg: &RunConfig, dry: bool) -> Result<Artifacts> {
    let section = cfg.kl.as_ref().ok_or_else(|| Error::Config("missing [kl] section".into()))?;
    let out = &cfg.out;
    let mut artifacts = Artifacts::default();
    ensure_out(out, dry)?;
    if section.regions.is_empty() {
        return Err(Error::Config("kl needs at least one region".into()));
    }
    if dry {
        for r in 0..section.regions.len() {
            println!("plan: would write {}", out.join(format!("surface_region{r}.csv")).display());
            println!("plan: would write {}", out.join(format!("summary_region{r}.txt")).display());
        }
        println!("plan: would write {}", out.join("surface_total.csv").display());
        println!("plan: would write {}", out.join("summary_total.txt").display());
        println!("plan: would write {}", out.join("surface.svg").display());
        echo_config(cfg, out, &mut artifacts, dry)?;
        return Ok(artifacts);
    }
    let (catalog, randoms, selection) = load_kl_inputs(section)?;
    let grid = ParamGrid2 {
        sigma8: section.sigma8_axis.values(),
        gamma: section.gamma_axis.values(),
    };
    let mut datasets = Vec::new();
    for r in 0..section.regions.len() {
        let pipe = assemble_region(section, r, &catalog, &randoms, &selection)?;
        if section.write_basis {
            let basis_path = out.join(format!("basis_region{r}.klb"));
            io::write_basis(&basis_path, &pipe.dataset.basis)?;
            artifacts.push(basis_path);
        }
        datasets.push(pipe.dataset);
    }
    let mut per_region: Vec<LikelihoodSurface> = Vec::new();
    for (r, ds) in datasets.iter().enumerate() {
        let surface = likelihood_grid(std::slice::from_ref(ds), &grid)?;
        let s_path = out.join(format!("surface_region{r}.csv"));
        io::write_surface(&s_path, &surface)?;
        artifacts.push(s_path);
        let m_path = out.join(format!("summary_region{r}.txt"));
        io::write_surface_summary(&m_path, &surface)?;
        artifacts.push(m_path);
        per_region.push(surface);
    }
    let total = likelihood_grid(&datasets, &grid)?;
    let t_path = out.join("surface_total.csv");
    io::write_surface(&t_path, &total)?;
    artifacts.push(t_path);
    let ts_path = out.join("summary_total.txt");
    io::write_surface_summary(&ts_path, &total)?;
    artifacts.push(ts_path);
    let svg_path = out.join("surface.svg");
    io::plot_surface_svg(&svg_path, &total)?;
    artifacts.push(svg_path);
    echo_config(cfg, out, &mut artifacts, dry)?;
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// sys

pub fn run_sys(cfg: &RunConfig, dry: bool) -> Result<Artifacts> {
    let section = cfg.sys.as_ref().ok_or_else(|| Error::Config("missing [sys] section".into()))?;
    let out = &cfg.out;
    let mut artifacts = Artifacts::default();
    ensure_out(out, dry)?;
    if dry {
        println!("plan: would write {}", out.join("bias_report.txt").display());
        if section.write_csys {
            println!("plan: would write {}", out.join("csys.arr").display());
        }
        echo_config(cfg, out, &mut artifacts, dry)?;
        return Ok(artifacts);
    }
    let (catalog, randoms, selection) = load_kl_inputs(&section.kl)?;
    let pipe = assemble_region(&section.kl, 0, &catalog, &randoms, &selection)?;
    let profile = ModulationProfile::from_selection(&selection)?;
    let map: CellUnitMap =
        cell_unit_map(&pipe.dataset.lattice, &pipe.dataset.odv.cells, &section.kl.layout)?;
    let grid = ParamGrid2 {
        sigma8: section.kl.sigma8_axis.values(),
        gamma: section.kl.gamma_axis.values(),
    };
    let truth = (
        section.truth_sigma8.unwrap_or(section.kl.fixed.sigma8),
        section.truth_gamma.unwrap_or(section.kl.fixed.gamma),
    );
    let inject = InjectConfig {
        zp_std: section.zp_std,
        k_realizations: section.k_realizations,
        ratio_threshold: section.ratio_threshold,
        keep: section.kl.keep,
        seed: cfg.seed,
    };
    let report = inject_and_test(
        &pipe.dataset,
        &pipe.covariance,
        &pipe.counts,
        &map,
        &profile,
        &section.kl.layout,
        &grid,
        truth,
        &inject,
    )?;
    let r_path = out.join("bias_report.txt");
    std::fs::write(&r_path, report.render()).map_err(|e| Error::io(&r_path, e))?;
    artifacts.push(r_path);
    if section.write_csys {
        let c_sys = ensemble_sys_covariance(
            &section.kl.layout,
            section.zp_std,
            section.k_realizations,
            &pipe.counts,
            &pipe.dataset.odv,
            &pipe.dataset.lattice,
            &map,
            &profile,
            cfg.seed,
        )?;
        let c_path = out.join("csys.arr");
        io::write_matrix(&c_path, &c_sys.c)?;
        artifacts.push(c_path);
    }
    echo_config(cfg, out, &mut artifacts, dry)?;
    Ok(artifacts)
}
