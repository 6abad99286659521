//! Declarative analysis configuration (TOML).
//!
//! One file describes an entire `correlate` run: where the catalogs live,
//! which sources are the component catalogs, which source is sliced into
//! redshift bins as the comparison side, and every numeric knob of the
//! pipeline. The master seed is mandatory; nothing is ever seeded from the
//! wall clock.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crosscorr::catalog::{AxisScale, AxisTransformSpec, ColumnSchema};
use crosscorr::estimators::{Estimator, RMaxChoice};

fn default_n_bins() -> usize {
    10
}

fn default_estimators() -> Vec<u8> {
    vec![1, 2, 3, 4]
}

fn default_one() -> usize {
    1
}

fn default_bootstrap() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.005
}

fn default_plot_estimator() -> u8 {
    4
}

/// One catalog file plus its column names.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub label: String,
    pub path: PathBuf,
    #[serde(default = "default_mass_column")]
    pub mass_column: String,
    #[serde(default = "default_size_column")]
    pub size_column: String,
    #[serde(default)]
    pub redshift_column: Option<String>,
    #[serde(default)]
    pub source_column: Option<String>,
    #[serde(default)]
    pub component_column: Option<String>,
}

fn default_mass_column() -> String {
    "mass".into()
}

fn default_size_column() -> String {
    "size".into()
}

impl SourceConfig {
    pub fn schema(&self) -> ColumnSchema {
        let mut s = ColumnSchema {
            mass: self.mass_column.clone(),
            size: self.size_column.clone(),
            ..ColumnSchema::default()
        };
        if let Some(z) = &self.redshift_column {
            s = s.with_redshift(z.clone());
        }
        if let Some(src) = &self.source_column {
            s = s.with_source(src.clone());
        }
        if let Some(c) = &self.component_column {
            s = s.with_component(c.clone());
        }
        s
    }
}

/// A half-open redshift interval (lo, hi].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedshiftBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

/// Axis transform with per-field defaults, converted to the library spec.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    #[serde(default)]
    pub mass: AxisScale,
    #[serde(default)]
    pub size: AxisScale,
    #[serde(default = "default_true")]
    pub rescale: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            mass: AxisScale::default(),
            size: AxisScale::default(),
            rescale: true,
        }
    }
}

impl TransformConfig {
    pub fn to_spec(&self) -> AxisTransformSpec {
        AxisTransformSpec {
            mass: self.mass,
            size: self.size,
            rescale: self.rescale,
        }
    }
}

/// How the separation scale is chosen: `"union-all-pairs"`, `"data-data"`,
/// or an explicit positive number.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RMaxSetting {
    Named(String),
    Value(f64),
}

impl Default for RMaxSetting {
    fn default() -> Self {
        RMaxSetting::Named("union-all-pairs".into())
    }
}

impl RMaxSetting {
    pub fn to_choice(&self) -> Result<RMaxChoice> {
        match self {
            RMaxSetting::Named(s) => match s.as_str() {
                "union-all-pairs" => Ok(RMaxChoice::UnionAllPairs),
                "data-data" => Ok(RMaxChoice::DataData),
                other => bail!(
                    "r_max must be \"union-all-pairs\", \"data-data\", or a number; got {other:?}"
                ),
            },
            RMaxSetting::Value(v) => {
                if !(v.is_finite() && *v > 0.0) {
                    bail!("numeric r_max must be finite and positive, got {v}");
                }
                Ok(RMaxChoice::User(*v))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Root of every RNG stream in the run. Mandatory.
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    /// Estimator ids (1..=4).
    #[serde(default = "default_estimators")]
    pub estimators: Vec<u8>,
    #[serde(default = "default_one")]
    pub random_multiplier: usize,
    #[serde(default = "default_one")]
    pub realizations: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Worker threads; 0 means the default pool size.
    #[serde(default)]
    pub workers: usize,
    /// Keep only records with mass >= this floor (applied to both sides).
    #[serde(default)]
    pub mass_floor: Option<f64>,
    #[serde(default)]
    pub r_max: RMaxSetting,
    #[serde(default)]
    pub transform: TransformConfig,
    /// Estimator featured in the plot-ready CSV.
    #[serde(default = "default_plot_estimator")]
    pub plot_estimator: u8,
    pub sources: Vec<SourceConfig>,
    /// Labels of the component catalogs (first side of every pair).
    pub components: Vec<String>,
    /// Label of the source sliced into redshift bins (second side).
    pub comparison: String,
    #[serde(default)]
    pub redshift_bins: Vec<RedshiftBin>,
}

impl AnalysisConfig {
    pub fn source(&self, label: &str) -> Option<&SourceConfig> {
        self.sources.iter().find(|s| s.label == label)
    }

    pub fn estimator_list(&self) -> Result<Vec<Estimator>> {
        self.estimators
            .iter()
            .map(|&id| {
                Estimator::from_id(id)
                    .with_context(|| format!("unknown estimator id {id} (valid: 1..=4)"))
            })
            .collect()
    }

    /// Structural validation beyond what deserialization enforces. Checks
    /// referenced files exist so a bad config fails before any computation.
    pub fn validate(&self, config_dir: &Path) -> Result<()> {
        if self.sources.is_empty() {
            bail!("at least one [[sources]] entry is required");
        }
        let mut labels = HashSet::new();
        for s in &self.sources {
            if !labels.insert(s.label.as_str()) {
                bail!("duplicate source label {:?}", s.label);
            }
            let path = resolve(config_dir, &s.path);
            if !path.is_file() {
                bail!("source {:?}: file not found: {}", s.label, path.display());
            }
        }
        if self.components.is_empty() {
            bail!("components must name at least one source label");
        }
        for c in &self.components {
            if self.source(c).is_none() {
                bail!("components entry {c:?} does not match any source label");
            }
        }
        let comparison = self
            .source(&self.comparison)
            .with_context(|| format!("comparison {:?} does not match any source label", self.comparison))?;
        if !self.redshift_bins.is_empty() && comparison.redshift_column.is_none() {
            bail!(
                "redshift bins are configured but comparison source {:?} has no redshift_column",
                comparison.label
            );
        }
        let mut bin_labels = HashSet::new();
        for b in &self.redshift_bins {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                bail!("redshift bin {:?}: need lo < hi, got ({}, {})", b.label, b.lo, b.hi);
            }
            if !bin_labels.insert(b.label.as_str()) {
                bail!("duplicate redshift bin label {:?}", b.label);
            }
        }
        if self.n_bins == 0 {
            bail!("n_bins must be at least 1");
        }
        if self.estimators.is_empty() {
            bail!("estimators must not be empty");
        }
        self.estimator_list()?;
        if Estimator::from_id(self.plot_estimator).is_none() {
            bail!("plot_estimator {} is not a valid estimator id", self.plot_estimator);
        }
        if !self.estimators.contains(&self.plot_estimator) {
            bail!(
                "plot_estimator {} is not in the requested estimator set {:?}",
                self.plot_estimator,
                self.estimators
            );
        }
        if self.random_multiplier == 0 {
            bail!("random_multiplier must be at least 1");
        }
        if self.realizations == 0 {
            bail!("realizations must be at least 1");
        }
        if self.bootstrap_reps < 2 {
            bail!("bootstrap_reps must be at least 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie strictly between 0 and 1, got {}", self.alpha);
        }
        self.r_max.to_choice()?;
        if let Some(floor) = self.mass_floor {
            if !floor.is_finite() {
                bail!("mass_floor must be finite, got {floor}");
            }
        }
        Ok(())
    }
}

pub fn resolve(config_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config_dir.join(path)
    }
}

/// Parses and validates a config file; returns the config, the directory
/// paths are resolved against, and the raw bytes (hashed into the
/// manifest).
pub fn load_config(path: &Path) -> Result<(AnalysisConfig, PathBuf, Vec<u8>)> {
    let raw = std::fs::read(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let text = std::str::from_utf8(&raw).context("config is not valid UTF-8")?;
    let config: AnalysisConfig = toml::from_str(text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    config
        .validate(&dir)
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok((config, dir, raw))
}
