//! The `correlate` pipeline: load catalogs, pair every component catalog
//! with every redshift slice of the comparison catalog, estimate the
//! cross-correlation with bootstrap errors, fit the inverse power law, and
//! write all artifacts plus a run manifest.
//!
//! Every output is written atomically (temp file, then rename). The run is
//! a pure function of (config file, input files); the only nondeterministic
//! byte in the output tree is the manifest's `created_utc` field.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crosscorr::catalog::{format_full, load_catalog, Catalog};
use crosscorr::estimators::{
    estimate_xi_with_errors, write_xi_csv, Estimator, XiConfig, XiResult,
};
use crosscorr::fitstats::{
    fit_inverse_power_law, fit_inverse_power_law_weighted, goodness_of_fit, GoodnessOfFit,
    PowerLawFit,
};
use crosscorr::seeding::{derive_seed, roles};

use crate::config::{load_config, resolve, AnalysisConfig};

/// Index distance between component slots in the per-pair seed derivation;
/// redshift-bin index is added on top, so bins stay distinct as long as
/// there are fewer than 10_000 of them.
const PAIR_SEED_STRIDE: u64 = 10_000;

pub fn pair_seed(master_seed: u64, component_index: usize, bin_index: usize) -> u64 {
    derive_seed(
        master_seed,
        roles::PAIR,
        component_index as u64 * PAIR_SEED_STRIDE + bin_index as u64,
    )
}

/// Replaces anything outside [A-Za-z0-9_-] so labels are safe file-name
/// fragments.
pub fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| anyhow!("output path {} has no file name", path.display()))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot rename {} into place", tmp.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOutcome {
    pub component: String,
    pub bin: String,
    pub seed: u64,
    pub status: String,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// The only timestamp in the output tree.
    pub created_utc: String,
    pub tool_version: &'static str,
    pub generator: &'static str,
    pub master_seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<PairOutcome>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub pairs_written: usize,
    pub pairs_skipped: usize,
    pub manifest_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct FitEntry {
    estimator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<PowerLawFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    goodness: Option<GoodnessOfFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct FitReport {
    schema_version: u32,
    component: String,
    bin: String,
    alpha: f64,
    fits: Vec<FitEntry>,
}

/// Output directory precedence: explicit override, then the config file,
/// then `$CROSSCORR_OUT_DIR`, then `./out`.
pub fn resolve_out_dir(
    override_dir: Option<&Path>,
    config: &AnalysisConfig,
    config_dir: &Path,
) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    if let Some(d) = &config.output_dir {
        return resolve(config_dir, d);
    }
    if let Some(d) = std::env::var_os("CROSSCORR_OUT_DIR") {
        return PathBuf::from(d);
    }
    PathBuf::from("out")
}

fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// One pipeline pair fully rendered to files.
fn write_pair_outputs(
    out_dir: &Path,
    component: &str,
    bin: &str,
    result: &XiResult,
    alpha: f64,
    plot_estimator: Estimator,
) -> Result<Vec<String>> {
    let stem = format!("{}_{}", sanitize(component), sanitize(bin));
    let mut files = Vec::new();

    let xi_name = format!("xi_{stem}.csv");
    let mut buf = Vec::new();
    write_xi_csv(result, &mut buf)?;
    write_atomic(&out_dir.join(&xi_name), &buf)?;
    files.push(xi_name);

    let meta_name = format!("xi_{stem}.meta.json");
    write_atomic(&out_dir.join(&meta_name), &json_pretty(&result.meta)?)?;
    files.push(meta_name);

    let mut fits = Vec::new();
    for series in &result.series {
        let entry = match fit_series(result, series.estimator, alpha) {
            Ok((fit, goodness)) => FitEntry {
                estimator: series.estimator.label().to_string(),
                fit: Some(fit),
                goodness: Some(goodness),
                error: None,
            },
            Err(e) => FitEntry {
                estimator: series.estimator.label().to_string(),
                fit: None,
                goodness: None,
                error: Some(e.to_string()),
            },
        };
        fits.push(entry);
    }
    let fit_name = format!("fit_{stem}.json");
    let report = FitReport {
        schema_version: crosscorr::SCHEMA_VERSION,
        component: component.to_string(),
        bin: bin.to_string(),
        alpha,
        fits,
    };
    write_atomic(&out_dir.join(&fit_name), &json_pretty(&report)?)?;
    files.push(fit_name);

    let plot_name = format!("plot_{stem}.csv");
    write_atomic(
        &out_dir.join(&plot_name),
        &render_plot_csv(result, plot_estimator, alpha)?,
    )?;
    files.push(plot_name);

    Ok(files)
}

fn fit_series(
    result: &XiResult,
    estimator: Estimator,
    alpha: f64,
) -> crosscorr::Result<(PowerLawFit, GoodnessOfFit)> {
    let series = result
        .series_for(estimator)
        .expect("series exists for requested estimator");
    let r = &result.bin_centers;
    let fit = match &series.sigma {
        Some(sigma) if usable_weights(&series.xi, sigma) => {
            fit_inverse_power_law_weighted(r, &series.xi, sigma)?
        }
        _ => fit_inverse_power_law(r, &series.xi)?,
    };
    let goodness = goodness_of_fit(r, &series.xi, &fit, alpha)?;
    Ok((fit, goodness))
}

/// Weighted fitting needs a strictly positive sigma on every defined bin.
fn usable_weights(xi: &[Option<f64>], sigma: &[Option<f64>]) -> bool {
    xi.iter()
        .zip(sigma)
        .all(|(v, s)| v.is_none() || matches!(s, Some(x) if *x > 0.0))
}

/// Plot-ready data for one estimator: center, value, sigma, model.
fn render_plot_csv(
    result: &XiResult,
    estimator: Estimator,
    alpha: f64,
) -> Result<Vec<u8>> {
    let series = result
        .series_for(estimator)
        .ok_or_else(|| anyhow!("estimator {} not in result", estimator.label()))?;
    let model = fit_series(result, estimator, alpha)
        .map(|(fit, _)| fit)
        .ok();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r_center", "xi", "sigma", "model"])?;
    for (k, &r) in result.bin_centers.iter().enumerate() {
        let xi = series.xi[k];
        let sigma = series.sigma.as_ref().and_then(|s| s[k]);
        let model_v = model.as_ref().map(|f| f.model(r));
        w.write_record([
            format_full(r),
            xi.map(format_full).unwrap_or_default(),
            sigma.map(format_full).unwrap_or_default(),
            model_v.map(format_full).unwrap_or_default(),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Runs the full correlate pipeline. Returns a summary on success; on any
/// pair failure the error propagates after the partial manifest is
/// written, so completed outputs stay clearly marked.
pub fn run_correlate(config_path: &Path, out_override: Option<&Path>) -> Result<RunSummary> {
    let (config, config_dir, raw) = load_config(config_path)?;
    let out_dir = resolve_out_dir(out_override, &config, &config_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    let config_sha256 = hex_sha256(&raw);

    let result = crate::with_workers(config.workers, || {
        run_pairs(&config, &config_dir, &out_dir, &config_sha256)
    });
    if let Err(e) = &result {
        match write_error_report(&out_dir, e) {
            Ok(path) => log::error!("failure report written to {}", path.display()),
            Err(report_err) => log::error!("cannot write failure report: {report_err:#}"),
        }
    }
    result
}

fn run_pairs(
    config: &AnalysisConfig,
    config_dir: &Path,
    out_dir: &Path,
    config_sha256: &str,
) -> Result<RunSummary> {
    let estimators = config.estimator_list()?;
    let plot_estimator =
        Estimator::from_id(config.plot_estimator).expect("validated plot estimator id");
    let r_max = config.r_max.to_choice()?;
    let transform = config.transform.to_spec();

    let load = |label: &str| -> Result<Catalog> {
        let source = config.source(label).expect("validated label");
        let path = resolve(config_dir, &source.path);
        let (catalog, report) = load_catalog(&path, &source.schema(), label)
            .with_context(|| format!("loading {}", path.display()))?;
        if report.rejected > 0 {
            log::warn!(
                "source {label}: rejected {} of {} rows ({})",
                report.rejected,
                report.rows_seen,
                report.reasons.join("; ")
            );
        }
        Ok(catalog)
    };

    let floor = |c: Catalog| -> Catalog {
        match config.mass_floor {
            Some(f) => c.filter_mass_floor(f),
            None => c,
        }
    };

    let components: Vec<Catalog> = config
        .components
        .iter()
        .map(|label| load(label).map(&floor))
        .collect::<Result<_>>()?;
    let comparison = floor(load(&config.comparison)?);

    // Comparison side: one catalog per redshift bin, or the whole catalog
    // when no bins are configured.
    let slices: Vec<(String, Catalog)> = if config.redshift_bins.is_empty() {
        vec![("all".to_string(), comparison)]
    } else {
        config
            .redshift_bins
            .iter()
            .map(|b| {
                comparison
                    .select_redshift_bin(b.lo, b.hi)
                    .with_context(|| format!("slicing redshift bin {:?}", b.label))
                    .map(|c| (b.label.clone(), c))
            })
            .collect::<Result<_>>()?
    };

    let mut outcomes = Vec::new();
    let mut failure: Option<anyhow::Error> = None;

    'pairs: for (ci, component) in components.iter().enumerate() {
        for (bi, (bin_label, slice)) in slices.iter().enumerate() {
            let seed = pair_seed(config.master_seed, ci, bi);
            let comp_label = config.components[ci].clone();
            if component.is_empty() || slice.is_empty() {
                log::warn!(
                    "skipping {comp_label} x {bin_label}: empty side \
                     (component {} records, bin {} records)",
                    component.len(),
                    slice.len()
                );
                outcomes.push(PairOutcome {
                    component: comp_label,
                    bin: bin_label.clone(),
                    seed,
                    status: "skipped".into(),
                    files: Vec::new(),
                    reason: Some("empty catalog after selection".into()),
                });
                continue;
            }
            let cfg = XiConfig {
                transform,
                n_bins: config.n_bins,
                estimators: estimators.clone(),
                seed,
                random_multiplier: config.random_multiplier,
                realizations: config.realizations,
                r_max,
            };
            let pair_result = estimate_xi_with_errors(component, slice, &cfg, config.bootstrap_reps)
                .map_err(anyhow::Error::from)
                .and_then(|result| {
                    write_pair_outputs(
                        out_dir,
                        &comp_label,
                        bin_label,
                        &result,
                        config.alpha,
                        plot_estimator,
                    )
                });
            match pair_result {
                Ok(files) => outcomes.push(PairOutcome {
                    component: comp_label,
                    bin: bin_label.clone(),
                    seed,
                    status: "ok".into(),
                    files,
                    reason: None,
                }),
                Err(e) => {
                    outcomes.push(PairOutcome {
                        component: comp_label.clone(),
                        bin: bin_label.clone(),
                        seed,
                        status: "failed".into(),
                        files: Vec::new(),
                        reason: Some(format!("{e:#}")),
                    });
                    failure = Some(e.context(format!("pair {comp_label} x {bin_label}")));
                    break 'pairs;
                }
            }
        }
    }

    let pairs_written = outcomes.iter().filter(|o| o.status == "ok").count();
    let pairs_skipped = outcomes.iter().filter(|o| o.status == "skipped").count();
    let manifest = Manifest {
        schema_version: crosscorr::SCHEMA_VERSION,
        created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        tool_version: env!("CARGO_PKG_VERSION"),
        generator: crosscorr::seeding::GENERATOR_ID,
        master_seed: config.master_seed,
        config_sha256: config_sha256.to_string(),
        outputs: outcomes,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_atomic(&manifest_path, &json_pretty(&manifest)?)?;

    match failure {
        Some(e) => Err(e),
        None => Ok(RunSummary {
            out_dir: out_dir.to_path_buf(),
            pairs_written,
            pairs_skipped,
            manifest_path,
        }),
    }
}

/// Machine-readable failure report for nonzero exits.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub error: String,
}

pub fn write_error_report(out_dir: &Path, error: &anyhow::Error) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("error.json");
    let report = ErrorReport {
        schema_version: crosscorr::SCHEMA_VERSION,
        error: format!("{error:#}"),
    };
    write_atomic(&path, &json_pretty(&report)?)?;
    Ok(path)
}
