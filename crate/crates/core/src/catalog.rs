//! Catalog ingestion, selection, and mapping into the metric plane.
//!
//! A catalog row carries a stellar mass (as log10 of solar masses), an
//! effective radius in kpc, and optionally a redshift, a provenance label,
//! and a morphological component tag. Catalogs convert to [`PointSet`]s via
//! an [`AxisTransformSpec`]; all distance computations downstream work on
//! point sets only.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Morphological component tag for nearby early-type galaxy rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Inner,
    Intermediate,
    Outer,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Inner => "inner",
            Component::Intermediate => "intermediate",
            Component::Outer => "outer",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inner" => Ok(Component::Inner),
            "intermediate" => Ok(Component::Intermediate),
            "outer" => Ok(Component::Outer),
            other => Err(format!("unknown component `{other}`")),
        }
    }
}

/// One galaxy row.
#[derive(Debug, Clone, PartialEq)]
pub struct GalaxyRecord {
    /// log10(M*/M_sun)
    pub mass: f64,
    /// Effective radius R_e in kpc, strictly positive.
    pub size: f64,
    /// Redshift, absent for nearby samples quoted without one.
    pub redshift: Option<f64>,
    /// Free-text provenance label.
    pub source: String,
    pub component: Option<Component>,
}

impl GalaxyRecord {
    fn check(&self) -> std::result::Result<(), String> {
        if !self.mass.is_finite() {
            return Err(format!("mass {} not finite", self.mass));
        }
        if !(self.size.is_finite() && self.size > 0.0) {
            return Err(format!("size {} not positive", self.size));
        }
        if let Some(z) = self.redshift {
            if !(z.is_finite() && z >= 0.0) {
                return Err(format!("redshift {z} invalid"));
            }
        }
        Ok(())
    }
}

/// An ordered, labeled collection of galaxy records.
///
/// May be empty (e.g. a redshift bin that caught nothing); operations that
/// need data report [`Error::EmptyCatalog`] themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    label: String,
    records: Vec<GalaxyRecord>,
    /// Observed (min, max) of raw (mass, size), recomputed on construction.
    bounds: Option<[(f64, f64); 2]>,
}

impl Catalog {
    pub fn new(label: impl Into<String>, records: Vec<GalaxyRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if let Err(why) = r.check() {
                return Err(Error::Invalid(format!("record {i}: {why}")));
            }
        }
        let bounds = raw_bounds(&records);
        Ok(Catalog {
            label: label.into(),
            records,
            bounds,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
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

    /// Observed (min, max) per raw axis (mass, size); `None` when empty.
    pub fn bounds(&self) -> Option<[(f64, f64); 2]> {
        self.bounds
    }

    /// Concatenates several catalogs under a new label, preserving order.
    pub fn merged(label: impl Into<String>, parts: &[&Catalog]) -> Self {
        let records: Vec<GalaxyRecord> = parts
            .iter()
            .flat_map(|c| c.records.iter().cloned())
            .collect();
        let bounds = raw_bounds(&records);
        Catalog {
            label: label.into(),
            records,
            bounds,
        }
    }

    /// Keeps records with z_lo < z <= z_hi. Every record must carry a
    /// redshift; absent ones are an error, never a silent drop.
    pub fn select_redshift_bin(&self, z_lo: f64, z_hi: f64) -> Result<Catalog> {
        if z_lo.is_nan() || z_hi.is_nan() || z_lo >= z_hi {
            return Err(Error::InvalidInterval { lo: z_lo, hi: z_hi });
        }
        let missing = self
            .records
            .iter()
            .filter(|r| r.redshift.is_none())
            .count();
        if missing > 0 {
            return Err(Error::MissingRedshift {
                missing,
                total: self.records.len(),
            });
        }
        let records: Vec<GalaxyRecord> = self
            .records
            .iter()
            .filter(|r| {
                let z = r.redshift.unwrap();
                z_lo < z && z <= z_hi
            })
            .cloned()
            .collect();
        let bounds = raw_bounds(&records);
        Ok(Catalog {
            label: format!("{}[z({},{}]]", self.label, z_lo, z_hi),
            records,
            bounds,
        })
    }

    /// Keeps records with mass >= floor (inclusive).
    pub fn filter_mass_floor(&self, floor: f64) -> Catalog {
        let records: Vec<GalaxyRecord> = self
            .records
            .iter()
            .filter(|r| r.mass >= floor)
            .cloned()
            .collect();
        let bounds = raw_bounds(&records);
        Catalog {
            label: self.label.clone(),
            records,
            bounds,
        }
    }

    /// Maps records onto the 2-D plane, in record order.
    pub fn to_point_set(&self, t: &AxisTransformSpec) -> Result<PointSet> {
        if self.records.is_empty() {
            return Err(Error::EmptyCatalog(self.label.clone()));
        }
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let x = t.mass.apply(r.mass, 0)?;
            let y = t.size.apply(r.size, 1)?;
            points.push([x, y]);
        }
        if t.rescale {
            for axis in 0..2 {
                let lo = points.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
                let hi = points
                    .iter()
                    .map(|p| p[axis])
                    .fold(f64::NEG_INFINITY, f64::max);
                if lo == hi {
                    return Err(Error::DegenerateAxis { axis, value: lo });
                }
                let span = hi - lo;
                for p in points.iter_mut() {
                    p[axis] = (p[axis] - lo) / span;
                }
            }
        }
        PointSet::new(format!("{}|{}", self.label, t.describe()), points)
    }
}

fn raw_bounds(records: &[GalaxyRecord]) -> Option<[(f64, f64); 2]> {
    if records.is_empty() {
        return None;
    }
    let mut b = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for r in records {
        for (axis, v) in [r.mass, r.size].into_iter().enumerate() {
            b[axis].0 = b[axis].0.min(v);
            b[axis].1 = b[axis].1.max(v);
        }
    }
    Some(b)
}

/// Per-axis scaling applied before the optional min-max rescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    #[default]
    Identity,
    Log10,
}

impl AxisScale {
    fn apply(&self, v: f64, axis: usize) -> Result<f64> {
        match self {
            AxisScale::Identity => Ok(v),
            AxisScale::Log10 => {
                if v > 0.0 {
                    Ok(v.log10())
                } else {
                    Err(Error::NonPositiveLog { axis, value: v })
                }
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            AxisScale::Identity => "identity",
            AxisScale::Log10 => "log10",
        }
    }
}

/// How (mass, size) becomes a metric coordinate pair.
///
/// The default keeps both axes as stored (mass already being a log10
/// exponent) and min-max rescales each to [0,1] so neither dominates the
/// Euclidean metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisTransformSpec {
    pub mass: AxisScale,
    pub size: AxisScale,
    /// Per-axis min-max rescale to [0,1]; requires max > min on both axes.
    pub rescale: bool,
}

impl Default for AxisTransformSpec {
    fn default() -> Self {
        AxisTransformSpec {
            mass: AxisScale::Identity,
            size: AxisScale::Identity,
            rescale: true,
        }
    }
}

impl AxisTransformSpec {
    pub fn describe(&self) -> String {
        format!(
            "mass={},size={},rescale={}",
            self.mass.name(),
            self.size.name(),
            if self.rescale { "minmax" } else { "none" }
        )
    }
}

/// Transformed 2-D points ready for distance computation. Always non-empty;
/// all coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    provenance: String,
    points: Vec<[f64; 2]>,
    bounds: [(f64, f64); 2],
}

impl PointSet {
    pub fn new(provenance: impl Into<String>, points: Vec<[f64; 2]>) -> Result<Self> {
        let provenance = provenance.into();
        if points.is_empty() {
            return Err(Error::EmptyPointSet(provenance));
        }
        if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::NonFinitePoint(provenance));
        }
        let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 2];
        for p in &points {
            for axis in 0..2 {
                bounds[axis].0 = bounds[axis].0.min(p[axis]);
                bounds[axis].1 = bounds[axis].1.max(p[axis]);
            }
        }
        Ok(PointSet {
            provenance,
            points,
            bounds,
        })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Observed (min, max) per axis.
    pub fn bounds(&self) -> [(f64, f64); 2] {
        self.bounds
    }

    /// True when both sets hold numerically equal points in the same order;
    /// pair counting then switches to the self-pairing rule.
    pub fn same_points(&self, other: &PointSet) -> bool {
        self.points == other.points
    }
}

/// Column-name map for [`load_catalog`]. `Some(name)` means the column must
/// exist; `None` means the field is not read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub mass: String,
    pub size: String,
    pub redshift: Option<String>,
    pub source: Option<String>,
    pub component: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            mass: "mass".into(),
            size: "size".into(),
            redshift: None,
            source: None,
            component: None,
        }
    }
}

impl ColumnSchema {
    pub fn with_redshift(mut self, name: impl Into<String>) -> Self {
        self.redshift = Some(name.into());
        self
    }

    pub fn with_source(mut self, name: impl Into<String>) -> Self {
        self.source = Some(name.into());
        self
    }

    pub fn with_component(mut self, name: impl Into<String>) -> Self {
        self.component = Some(name.into());
        self
    }
}

/// Outcome report for a load: how many rows were seen, kept, rejected, and
/// the first few rejection reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_seen: usize,
    pub loaded: usize,
    pub rejected: usize,
    pub reasons: Vec<String>,
}

const MAX_REPORTED_REASONS: usize = 8;

/// Reads a delimited text catalog (comma or tab, sniffed from the header
/// line). Rows violating record invariants are rejected and counted, not
/// fatal; zero usable rows is an error.
pub fn load_catalog(
    path: impl AsRef<Path>,
    schema: &ColumnSchema,
    label: &str,
) -> Result<(Catalog, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };

    let file = std::fs::File::open(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };
    let mass_idx = col(&schema.mass).ok_or_else(|| Error::MissingColumn(schema.mass.clone()))?;
    let size_idx = col(&schema.size).ok_or_else(|| Error::MissingColumn(schema.size.clone()))?;
    let redshift_idx = match &schema.redshift {
        Some(name) => Some(col(name).ok_or_else(|| Error::MissingColumn(name.clone()))?),
        None => None,
    };
    let source_idx = match &schema.source {
        Some(name) => Some(col(name).ok_or_else(|| Error::MissingColumn(name.clone()))?),
        None => None,
    };
    let component_idx = match &schema.component {
        Some(name) => Some(col(name).ok_or_else(|| Error::MissingColumn(name.clone()))?),
        None => None,
    };

    let mut records = Vec::new();
    let mut report = LoadReport {
        rows_seen: 0,
        loaded: 0,
        rejected: 0,
        reasons: Vec::new(),
    };
    let reject = |report: &mut LoadReport, row: usize, why: String| {
        report.rejected += 1;
        if report.reasons.len() < MAX_REPORTED_REASONS {
            report.reasons.push(format!("row {row}: {why}"));
        }
    };

    for (row_no, row) in rdr.records().enumerate() {
        report.rows_seen += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                reject(&mut report, row_no + 2, format!("unreadable: {e}"));
                continue;
            }
        };
        match parse_row(&row, mass_idx, size_idx, redshift_idx, source_idx, component_idx, label) {
            Ok(rec) => {
                records.push(rec);
                report.loaded += 1;
            }
            Err(why) => reject(&mut report, row_no + 2, why),
        }
    }

    if records.is_empty() {
        return Err(Error::NoValidRows {
            path: path.display().to_string(),
            rejected: report.rejected,
        });
    }
    let catalog = Catalog::new(label, records)?;
    Ok((catalog, report))
}

fn parse_row(
    row: &csv::StringRecord,
    mass_idx: usize,
    size_idx: usize,
    redshift_idx: Option<usize>,
    source_idx: Option<usize>,
    component_idx: Option<usize>,
    label: &str,
) -> std::result::Result<GalaxyRecord, String> {
    let field = |idx: usize| -> std::result::Result<&str, String> {
        row.get(idx).ok_or_else(|| format!("missing field {idx}"))
    };
    let mass: f64 = field(mass_idx)?
        .parse()
        .map_err(|_| format!("bad mass `{}`", field(mass_idx).unwrap_or("")))?;
    let size: f64 = field(size_idx)?
        .parse()
        .map_err(|_| format!("bad size `{}`", field(size_idx).unwrap_or("")))?;
    let redshift = match redshift_idx {
        Some(idx) => {
            let raw = field(idx)?;
            if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| format!("bad redshift `{raw}`"))?)
            }
        }
        None => None,
    };
    let source = match source_idx {
        Some(idx) => {
            let raw = field(idx)?;
            if raw.is_empty() {
                label.to_string()
            } else {
                raw.to_string()
            }
        }
        None => label.to_string(),
    };
    let component = match component_idx {
        Some(idx) => {
            let raw = field(idx)?;
            if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<Component>()?)
            }
        }
        None => None,
    };
    let rec = GalaxyRecord {
        mass,
        size,
        redshift,
        source,
        component,
    };
    rec.check()?;
    Ok(rec)
}

/// Writes a catalog as CSV in the fixed column order
/// `mass,size,redshift,source,component`, floats at 17 significant digits
/// so a reload reproduces every value bit for bit.
pub fn write_catalog_csv<W: Write>(catalog: &Catalog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mass", "size", "redshift", "source", "component"])?;
    for r in catalog.records() {
        w.write_record([
            format_full(r.mass),
            format_full(r.size),
            r.redshift.map(format_full).unwrap_or_default(),
            r.source.clone(),
            r.component.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a point set as CSV with columns `x,y` at full precision.
pub fn write_point_set_csv<W: Write>(ps: &PointSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y"])?;
    for p in ps.points() {
        w.write_record([format_full(p[0]), format_full(p[1])])?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}
