//! Censored sky regions: rectangles in per-stripe tangent coordinates
//! (fields of bad seeing, satellite trails) and circles around bright
//! stars. Stored as a structured-text list.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{angular_separation, StripeLayout, ARCMIN};

#[derive(Debug, Clone, PartialEq)]
pub enum MaskRegion {
    /// Rectangle in stripe coordinates (degrees along/across the scan).
    StripeRect {
        stripe: i32,
        x_deg: [f64; 2],
        y_deg: [f64; 2],
        reason: String,
    },
    /// Circle on the sky; radius in arcmin.
    Circle {
        ra_deg: f64,
        dec_deg: f64,
        radius_arcmin: f64,
        reason: String,
    },
}

impl MaskRegion {
    fn validate(&self) -> Result<()> {
        match self {
            MaskRegion::StripeRect { x_deg, y_deg, .. } => {
                if x_deg[1] <= x_deg[0] || y_deg[1] <= y_deg[0] {
                    return Err(Error::Config("mask rectangle must have positive area".into()));
                }
            }
            MaskRegion::Circle { radius_arcmin, .. } => {
                if !(*radius_arcmin > 0.0) {
                    return Err(Error::Config("mask circle must have positive radius".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, ra: f64, dec: f64, layout: &StripeLayout) -> bool {
        match self {
            MaskRegion::StripeRect { stripe, x_deg, y_deg, .. } => {
                if layout.stripe_of(dec) != Some(*stripe) {
                    return false;
                }
                match layout.stripe_coords(*stripe, ra, dec) {
                    Ok((x, y)) => {
                        x >= x_deg[0] && x < x_deg[1] && y >= y_deg[0] && y < y_deg[1]
                    }
                    Err(_) => false,
                }
            }
            MaskRegion::Circle { ra_deg, dec_deg, radius_arcmin, .. } => {
                angular_separation(ra, dec, *ra_deg, *dec_deg) <= radius_arcmin * ARCMIN
            }
        }
    }
}

/// A set of censored regions. Membership in the union is what counts;
/// applying a mask set twice equals applying it once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskSet {
    regions: Vec<MaskRegion>,
}

impl MaskSet {
    pub fn new(regions: Vec<MaskRegion>) -> Result<Self> {
        for r in &regions {
            r.validate()?;
        }
        Ok(MaskSet { regions })
    }

    pub fn empty() -> Self {
        MaskSet { regions: Vec::new() }
    }

    pub fn regions(&self) -> &[MaskRegion] {
        &self.regions
    }

    pub fn contains(&self, ra: f64, dec: f64, layout: &StripeLayout) -> bool {
        self.regions.iter().any(|r| r.contains(ra, dec, layout))
    }

    /// Text format, one region per line:
    /// `rect,<stripe>,<x0>,<x1>,<y0>,<y1>,<reason>` (degrees) or
    /// `circle,<ra>,<dec>,<radius_arcmin>,<reason>`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# shape,coords...,reason\n");
        for r in &self.regions {
            match r {
                MaskRegion::StripeRect { stripe, x_deg, y_deg, reason } => {
                    out.push_str(&format!(
                        "rect,{stripe},{},{},{},{},{reason}\n",
                        x_deg[0], x_deg[1], y_deg[0], y_deg[1]
                    ));
                }
                MaskRegion::Circle { ra_deg, dec_deg, radius_arcmin, reason } => {
                    out.push_str(&format!("circle,{ra_deg},{dec_deg},{radius_arcmin},{reason}\n"));
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut regions = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: msg.into(),
            };
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
            match parts.first().map(|s| s.trim()) {
                Some("rect") if parts.len() >= 7 => {
                    regions.push(MaskRegion::StripeRect {
                        stripe: parts[1].trim().parse().map_err(|_| bad("bad stripe id"))?,
                        x_deg: [parse(parts[2])?, parse(parts[3])?],
                        y_deg: [parse(parts[4])?, parse(parts[5])?],
                        reason: parts[6..].join(",").trim().to_string(),
                    });
                }
                Some("circle") if parts.len() >= 5 => {
                    regions.push(MaskRegion::Circle {
                        ra_deg: parse(parts[1])?,
                        dec_deg: parse(parts[2])?,
                        radius_arcmin: parse(parts[3])?,
                        reason: parts[4..].join(",").trim().to_string(),
                    });
                }
                _ => return Err(bad("expected rect,... or circle,...")),
            }
        }
        MaskSet::new(regions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_membership_in_stripe_coords() {
        let layout = StripeLayout::default();
        let m = MaskRegion::StripeRect {
            stripe: 5,
            x_deg: [1.0, 2.0],
            y_deg: [-0.5, 0.5],
            reason: "seeing".into(),
        };
        let c = layout.stripe_center_dec(5).unwrap();
        let cosc = (c * crate::geometry::DEG).cos();
        // x = 1.5 deg along scan at the stripe center.
        let ra = layout.ra_min_deg + 1.5 / cosc;
        assert!(m.contains(ra, c, &layout));
        assert!(!m.contains(ra, c + 0.7, &layout));
        // A point in another stripe never matches.
        let c4 = layout.stripe_center_dec(4).unwrap();
        assert!(!m.contains(ra, c4, &layout));
    }

    #[test]
    fn zero_area_rejected() {
        assert!(MaskSet::new(vec![MaskRegion::StripeRect {
            stripe: 0,
            x_deg: [1.0, 1.0],
            y_deg: [0.0, 1.0],
            reason: String::new(),
        }])
        .is_err());
        assert!(MaskSet::new(vec![MaskRegion::Circle {
            ra_deg: 0.0,
            dec_deg: 0.0,
            radius_arcmin: 0.0,
            reason: String::new(),
        }])
        .is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("masks.txt");
        let set = MaskSet::new(vec![
            MaskRegion::StripeRect {
                stripe: 3,
                x_deg: [0.25, 1.5],
                y_deg: [-0.3, 0.2],
                reason: "bad seeing".into(),
            },
            MaskRegion::Circle {
                ra_deg: 12.5,
                dec_deg: -1.25,
                radius_arcmin: 4.0,
                reason: "bright star".into(),
            },
        ])
        .unwrap();
        set.save(&path).unwrap();
        let back = MaskSet::load(&path).unwrap();
        assert_eq!(back, set);
    }
}
