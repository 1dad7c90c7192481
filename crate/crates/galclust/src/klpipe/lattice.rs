//! Hexagonal close-packed cell lattice clipped to a survey region.
//!
//! Cells are spheres of a common radius R; nearest-neighbor center spacing
//! is exactly 2R, so cells touch without overlapping. The generator walks
//! the HCP basis over the region's bounding box and keeps centers inside
//! the region; an optional target count auto-tunes R from the packing
//! density (one sphere per 4 sqrt(2) R^3).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::SurveyRegion;

#[derive(Debug, Clone)]
pub struct CellLattice {
    pub centers: Vec<[f64; 3]>,
    /// Cell radius, Mpc/h.
    pub radius: f64,
    pub region_id: u32,
}

impl CellLattice {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Comoving distance of a cell center from the observer.
    pub fn center_distance(&self, i: usize) -> f64 {
        let c = self.centers[i];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }

    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        let a = self.centers[i];
        let b = self.centers[j];
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    pub fn max_pair_distance(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                m = m.max(self.pair_distance(i, j));
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusSpec {
    Fixed(f64),
    /// Auto-tune the radius until the clipped count is within 20% of the
    /// target.
    TargetCount(usize),
}

pub fn build_lattice(region: &SurveyRegion, radius: RadiusSpec, region_id: u32) -> Result<CellLattice> {
    region.validate()?;
    match radius {
        RadiusSpec::Fixed(r) => {
            if !(r > 0.0) {
                return Err(Error::Domain("cell radius must be positive".into()));
            }
            let centers = hcp_centers(region, r);
            if centers.is_empty() {
                return Err(Error::Empty("region too small for one cell".into()));
            }
            Ok(CellLattice { centers, radius: r, region_id })
        }
        RadiusSpec::TargetCount(target) => {
            if target == 0 {
                return Err(Error::Domain("target cell count must be positive".into()));
            }
            // Seed from the HCP packing density.
            let mut r = (region.volume() / (4.0 * 2f64.sqrt() * target as f64)).cbrt();
            let mut best: Option<CellLattice> = None;
            for _ in 0..12 {
                let centers = hcp_centers(region, r);
                let count = centers.len();
                if count > 0 {
                    let lat = CellLattice { centers, radius: r, region_id };
                    let off = (count as f64 - target as f64).abs() / target as f64;
                    if off <= 0.2 {
                        return Ok(lat);
                    }
                    let better = best
                        .as_ref()
                        .map(|b| {
                            (b.len() as f64 - target as f64).abs() > (count as f64 - target as f64).abs()
                        })
                        .unwrap_or(true);
                    if better {
                        best = Some(lat);
                    }
                    r *= (count as f64 / target as f64).cbrt();
                } else {
                    r *= 0.7;
                }
            }
            best.filter(|b| {
                (b.len() as f64 - target as f64).abs() / target as f64 <= 0.2
            })
            .ok_or_else(|| {
                Error::Domain(format!("could not tune lattice to ~{target} cells in region"))
            })
        }
    }
}

fn hcp_centers(region: &SurveyRegion, r: f64) -> Vec<[f64; 3]> {
    let (lo, hi) = region.bounding_box();
    let dx = 2.0 * r;
    let dy = 3f64.sqrt() * r;
    let dz = 2.0 * 6f64.sqrt() / 3.0 * r;
    let i0 = ((lo[0] - 2.0 * dx) / dx).floor() as i64;
    let i1 = ((hi[0] + 2.0 * dx) / dx).ceil() as i64;
    let j0 = ((lo[1] - 2.0 * dy) / dy).floor() as i64;
    let j1 = ((hi[1] + 2.0 * dy) / dy).ceil() as i64;
    let k0 = ((lo[2] - 2.0 * dz) / dz).floor() as i64;
    let k1 = ((hi[2] + 2.0 * dz) / dz).ceil() as i64;
    let mut centers = Vec::new();
    for k in k0..=k1 {
        let odd_k = k.rem_euclid(2) as f64;
        for j in j0..=j1 {
            let odd_j = j.rem_euclid(2) as f64;
            for i in i0..=i1 {
                let p = [
                    dx * i as f64 + r * odd_j + r * odd_k,
                    dy * j as f64 + r / 3f64.sqrt() * odd_k,
                    dz * k as f64,
                ];
                if region.contains(p) {
                    centers.push(p);
                }
            }
        }
    }
    centers
}

/// Uniform grid hash over cell centers; finds the (at most one) cell
/// containing a point with the exact |p - c| <= R test.
#[derive(Debug, Clone)]
pub struct CellIndex {
    boxes: HashMap<(i64, i64, i64), Vec<u32>>,
    box_size: f64,
    radius: f64,
}

impl CellIndex {
    pub fn build(lattice: &CellLattice) -> Self {
        let box_size = 2.0 * lattice.radius;
        let mut boxes: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, c) in lattice.centers.iter().enumerate() {
            boxes
                .entry(Self::key(c, box_size))
                .or_default()
                .push(i as u32);
        }
        CellIndex { boxes, box_size, radius: lattice.radius }
    }

    fn key(p: &[f64; 3], box_size: f64) -> (i64, i64, i64) {
        (
            (p[0] / box_size).floor() as i64,
            (p[1] / box_size).floor() as i64,
            (p[2] / box_size).floor() as i64,
        )
    }

    /// Index of the cell containing `p`, if any.
    pub fn cell_of(&self, lattice: &CellLattice, p: &[f64; 3]) -> Option<usize> {
        let (kx, ky, kz) = Self::key(p, self.box_size);
        let r2 = self.radius * self.radius;
        for ix in (kx - 1)..=(kx + 1) {
            for iy in (ky - 1)..=(ky + 1) {
                for iz in (kz - 1)..=(kz + 1) {
                    if let Some(ids) = self.boxes.get(&(ix, iy, iz)) {
                        for &i in ids {
                            let c = lattice.centers[i as usize];
                            let d2 = (p[0] - c[0]).powi(2)
                                + (p[1] - c[1]).powi(2)
                                + (p[2] - c[2]).powi(2);
                            if d2 <= r2 {
                                return Some(i as usize);
                            }
                        }
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_packing_has_exact_neighbor_spacing() {
        let r = 1.0;
        let region = SurveyRegion::Box { lo: [0.0; 3], hi: [4.0 * r; 3] };
        let lat = build_lattice(&region, RadiusSpec::Fixed(r), 0).unwrap();
        // A handful of cells fit a 4R cube.
        assert!(lat.len() >= 4 && lat.len() <= 16, "{} cells", lat.len());
        let mut min = f64::INFINITY;
        for i in 0..lat.len() {
            for j in (i + 1)..lat.len() {
                min = min.min(lat.pair_distance(i, j));
            }
        }
        assert!((min - 2.0 * r).abs() < 1e-9, "nearest spacing {min}");
    }

    #[test]
    fn no_two_cells_overlap_in_large_lattice() {
        let region = SurveyRegion::Box { lo: [0.0; 3], hi: [40.0, 35.0, 30.0] };
        let lat = build_lattice(&region, RadiusSpec::TargetCount(500), 0).unwrap();
        assert!((lat.len() as f64 - 500.0).abs() / 500.0 <= 0.2, "{} cells", lat.len());
        for i in 0..lat.len() {
            for j in (i + 1)..lat.len() {
                assert!(
                    lat.pair_distance(i, j) >= 2.0 * lat.radius - 1e-9,
                    "overlap between {i} and {j}"
                );
            }
        }
    }

    #[test]
    fn centers_stay_inside_region() {
        let region = SurveyRegion::Wedge {
            ra_deg: [10.0, 30.0],
            dec_deg: [-5.0, 10.0],
            dist: [200.0, 400.0],
        };
        let lat = build_lattice(&region, RadiusSpec::Fixed(8.0), 1).unwrap();
        assert!(!lat.is_empty());
        for c in &lat.centers {
            assert!(region.contains(*c));
        }
    }

    #[test]
    fn survey_scale_region_reaches_about_6000_cells() {
        let region = SurveyRegion::Wedge {
            ra_deg: [0.0, 90.0],
            dec_deg: [-6.0, 6.0],
            dist: [100.0, 600.0],
        };
        let lat = build_lattice(&region, RadiusSpec::TargetCount(6000), 2).unwrap();
        let off = (lat.len() as f64 - 6000.0).abs() / 6000.0;
        assert!(off <= 0.2, "{} cells", lat.len());
    }

    #[test]
    fn region_too_small_fails() {
        // A sliver away from any lattice point at this radius.
        let region = SurveyRegion::Box { lo: [1.0; 3], hi: [1.5, 1.5, 1.5] };
        assert!(build_lattice(&region, RadiusSpec::Fixed(10.0), 0).is_err());
    }

    #[test]
    fn index_agrees_with_brute_force() {
        use rand::Rng;
        use rand::SeedableRng;
        let region = SurveyRegion::Box { lo: [0.0; 3], hi: [30.0; 3] };
        let lat = build_lattice(&region, RadiusSpec::Fixed(2.5), 0).unwrap();
        let idx = CellIndex::build(&lat);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let p = [
                rng.random::<f64>() * 30.0,
                rng.random::<f64>() * 30.0,
                rng.random::<f64>() * 30.0,
            ];
            let brute = (0..lat.len()).find(|&i| {
                let c = lat.centers[i];
                (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)
                    <= lat.radius * lat.radius
            });
            assert_eq!(idx.cell_of(&lat, &p), brute);
        }
    }
}
