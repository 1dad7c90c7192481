//! File-backed catalog store: validated galaxy records, predicate-defined
//! virtual subsamples, mask censoring, and indexed cone searches. This is
//! the stand-in for a relational survey database at desk scale.
//!
//! Catalog text format: CSV with header
//! `ra,dec,redshift,mag,stripe,camcol,field,weight`; an empty redshift field
//! marks an angular-only record. Floats are written shortest-roundtrip, so
//! a write/read cycle is bit-identical.

pub mod masks;
pub mod selection;
mod spatial;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angular_separation, StripeLayout, ARCMIN};

pub use masks::{MaskRegion, MaskSet};
pub use selection::{FluxLimitedModel, SelectionFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct GalaxyRecord {
    /// Right ascension, degrees in [0, 360).
    pub ra: f64,
    /// Declination, degrees in [-90, 90].
    pub dec: f64,
    /// Absent for angular-only records.
    pub redshift: Option<f64>,
    /// Apparent magnitude.
    pub mag: f64,
    pub stripe: i32,
    /// Camera column, 1..=12.
    pub camcol: u8,
    pub field: i32,
    /// Fractional completeness at the record position, [0, 1].
    pub weight: f64,
}

impl GalaxyRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..360.0).contains(&self.ra) || !self.ra.is_finite() {
            return Err(format!("ra {} outside [0,360)", self.ra));
        }
        if !(-90.0..=90.0).contains(&self.dec) || !self.dec.is_finite() {
            return Err(format!("dec {} outside [-90,90]", self.dec));
        }
        if let Some(z) = self.redshift {
            if !(z >= 0.0) || !z.is_finite() {
                return Err(format!("redshift {z} invalid"));
            }
        }
        if !self.mag.is_finite() {
            return Err("non-finite magnitude".into());
        }
        if !(1..=12).contains(&self.camcol) {
            return Err(format!("camcol {} outside 1..=12", self.camcol));
        }
        if !(0.0..=1.0).contains(&self.weight) || !self.weight.is_finite() {
            return Err(format!("weight {} outside [0,1]", self.weight));
        }
        Ok(())
    }
}

/// Immutable record collection with a spatial index for cone searches.
/// All operations are read-only and safe to share across threads.
#[derive(Debug, Clone)]
pub struct Catalog {
    records: Vec<GalaxyRecord>,
    index: spatial::SkyIndex,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub rejected: usize,
}

impl Catalog {
    pub fn from_records(records: Vec<GalaxyRecord>) -> Self {
        let index = spatial::SkyIndex::build(&records);
        Catalog { records, index }
    }

    pub fn records(&self) -> &[GalaxyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records within `radius_arcmin` of `(ra, dec)` by great-circle
    /// distance. Index-accelerated; identical to a linear scan.
    pub fn cone_count(&self, ra: f64, dec: f64, radius_arcmin: f64) -> Result<usize> {
        if !(radius_arcmin > 0.0) {
            return Err(Error::Domain("cone radius must be positive".into()));
        }
        let radius_rad = radius_arcmin * ARCMIN;
        let mut n = 0;
        self.index.for_candidates(&self.records, ra, dec, radius_rad, |rec| {
            if angular_separation(ra, dec, rec.ra, rec.dec) <= radius_rad {
                n += 1;
            }
        });
        Ok(n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_records(path, &self.records)
    }
}

pub const CATALOG_COLUMNS: [&str; 8] =
    ["ra", "dec", "redshift", "mag", "stripe", "camcol", "field", "weight"];

pub fn save_records(path: &Path, records: &[GalaxyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(CATALOG_COLUMNS).map_err(|e| csv_io(path, e))?;
    for r in records {
        let z = r.redshift.map(|v| v.to_string()).unwrap_or_default();
        w.write_record(&[
            r.ra.to_string(),
            r.dec.to_string(),
            z,
            r.mag.to_string(),
            r.stripe.to_string(),
            r.camcol.to_string(),
            r.field.to_string(),
            r.weight.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() }
}

/// Load a catalog file. Malformed or invariant-violating rows are rejected
/// and counted; a missing required column is a hard failure.
pub fn load_catalog(path: &Path) -> Result<(Catalog, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => csv_io(path, e),
        })?;
    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let mut cols = [usize::MAX; 8];
    for (i, name) in CATALOG_COLUMNS.iter().enumerate() {
        cols[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::MissingColumn((*name).into()))?;
    }
    let mut records = Vec::new();
    let mut rejected = 0usize;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                rejected += 1;
                continue;
            }
        };
        match parse_row(&row, &cols) {
            Some(rec) if rec.validate().is_ok() => records.push(rec),
            _ => rejected += 1,
        }
    }
    let loaded = records.len();
    Ok((Catalog::from_records(records), LoadReport { loaded, rejected }))
}

fn parse_row(row: &csv::StringRecord, cols: &[usize; 8]) -> Option<GalaxyRecord> {
    let get = |i: usize| row.get(cols[i]);
    let redshift_raw = get(2)?;
    let redshift = if redshift_raw.is_empty() {
        None
    } else {
        Some(redshift_raw.parse::<f64>().ok()?)
    };
    Some(GalaxyRecord {
        ra: get(0)?.parse().ok()?,
        dec: get(1)?.parse().ok()?,
        redshift,
        mag: get(3)?.parse().ok()?,
        stripe: get(4)?.parse().ok()?,
        camcol: get(5)?.parse().ok()?,
        field: get(6)?.parse().ok()?,
        weight: get(7)?.parse().ok()?,
    })
}

/// Predicates defining a virtual subsample. Empty spec keeps everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsampleSpec {
    /// Half-open magnitude range [lo, hi).
    pub mag: Option<(f64, f64)>,
    /// Half-open redshift range [lo, hi); records without redshift fail it.
    pub redshift: Option<(f64, f64)>,
    pub stripes: Option<Vec<i32>>,
    pub min_weight: Option<f64>,
}

impl SubsampleSpec {
    pub fn matches(&self, rec: &GalaxyRecord) -> bool {
        if let Some((lo, hi)) = self.mag {
            if !(rec.mag >= lo && rec.mag < hi) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.redshift {
            match rec.redshift {
                Some(z) if z >= lo && z < hi => {}
                _ => return false,
            }
        }
        if let Some(ref stripes) = self.stripes {
            if !stripes.contains(&rec.stripe) {
                return false;
            }
        }
        if let Some(w) = self.min_weight {
            if rec.weight < w {
                return false;
            }
        }
        true
    }
}

/// Filter a catalog down to the records satisfying every predicate.
/// Deterministic and order-preserving; contradictory predicates yield an
/// empty catalog rather than an error.
pub fn apply_subsample(catalog: &Catalog, spec: &SubsampleSpec) -> Catalog {
    Catalog::from_records(
        catalog
            .records()
            .iter()
            .filter(|r| spec.matches(r))
            .cloned()
            .collect(),
    )
}

/// Censor records falling inside any mask region.
pub fn apply_masks(catalog: &Catalog, masks: &MaskSet, layout: &StripeLayout) -> Catalog {
    Catalog::from_records(
        catalog
            .records()
            .iter()
            .filter(|r| !masks.contains(r.ra, r.dec, layout))
            .cloned()
            .collect(),
    )
}
