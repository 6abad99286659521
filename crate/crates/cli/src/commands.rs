//! Subcommand definitions and handlers.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crosscorr::catalog::{load_catalog, write_point_set_csv, Catalog, ColumnSchema, PointSet};
use crosscorr::fitstats::{
    fit_inverse_power_law, fit_inverse_power_law_weighted, goodness_of_fit, GoodnessOfFit,
    PowerLawFit,
};
use crosscorr::merger::{invert_for_eta, merger_ratios, MergerParams, MergerRatios};
use crosscorr::randoms::{generate_randoms, RandomSpec};
use crosscorr::ranktest::{
    compatibility_decision, permutation_pvalue, rank_test_mckeon, RankTestInput, RankTestResult,
};
use crosscorr::seeding::{derive_seed, roles};

use crate::pipeline::{run_correlate, write_atomic, write_error_report};

#[derive(Parser)]
#[command(
    name = "crosscorr",
    version,
    about = "Cross-correlation toolkit for galaxy catalogs in the (mass, size) plane"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run the full correlation pipeline described by a TOML config
    Correlate(CorrelateArgs),
    /// Test whether catalogs share a parent distribution (rank test)
    Ranktest(RanktestArgs),
    /// Fit xi(r) = A/r to a correlation CSV produced by `correlate`
    Fit(FitArgs),
    /// Generate a uniform random point catalog
    Randoms(RandomsArgs),
    /// Post-merger scaling ratios for mass ratio eta and velocity ratio epsilon
    Merger(MergerArgs),
    /// Validate a config file without running anything
    ValidateConfig(ValidateConfigArgs),
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Correlate(args) => cmd_correlate(&args),
        Command::Ranktest(args) => cmd_ranktest(&args).map(|_| ()),
        Command::Fit(args) => cmd_fit(&args).map(|_| ()),
        Command::Randoms(args) => cmd_randoms(&args),
        Command::Merger(args) => cmd_merger(&args).map(|_| ()),
        Command::ValidateConfig(args) => cmd_validate_config(&args),
    }
}

#[derive(Args)]
pub struct CorrelateArgs {
    /// Analysis config (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides config and CROSSCORR_OUT_DIR)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_correlate(args: &CorrelateArgs) -> Result<()> {
    match run_correlate(&args.config, args.out.as_deref()) {
        Ok(summary) => {
            println!(
                "wrote {} pair result(s) ({} skipped) to {}",
                summary.pairs_written,
                summary.pairs_skipped,
                summary.out_dir.display()
            );
            Ok(())
        }
        Err(e) => {
            // A machine-readable report lands next to the outputs when the
            // output directory is known from the command line.
            if let Some(dir) = &args.out {
                if let Ok(path) = write_error_report(dir, &e) {
                    log::error!("failure report written to {}", path.display());
                }
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    /// F approximation of the null distribution
    Mckeon,
    /// Monte-Carlo permutation of group labels
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompareMode {
    /// First file against each of the others
    Reference,
    /// Every unordered pair of files
    Pairwise,
}

#[derive(Args)]
pub struct RanktestArgs {
    /// Catalog CSV files (two or more; first is the reference in
    /// reference mode)
    #[arg(required = true, num_args = 2..)]
    pub files: Vec<PathBuf>,
    /// Comma-separated variables to test, from {mass, size}
    #[arg(long, default_value = "mass,size")]
    pub vars: String,
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = MethodChoice::Mckeon)]
    pub method: MethodChoice,
    /// Permutation count (permutation method only)
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    /// Master seed for the permutation streams
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CompareMode::Reference)]
    pub mode: CompareMode,
    #[arg(long, default_value = "mass")]
    pub mass_column: String,
    #[arg(long, default_value = "size")]
    pub size_column: String,
    /// Also write the JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variable {
    Mass,
    Size,
}

fn parse_vars(spec: &str) -> Result<Vec<Variable>> {
    let mut vars = Vec::new();
    for name in spec.split(',') {
        let v = match name.trim() {
            "mass" => Variable::Mass,
            "size" => Variable::Size,
            other => bail!("unknown variable {other:?} (choose from mass, size)"),
        };
        if vars.contains(&v) {
            bail!("variable {name:?} listed twice");
        }
        vars.push(v);
    }
    if vars.is_empty() {
        bail!("at least one variable is required");
    }
    Ok(vars)
}

#[derive(Debug, Serialize)]
pub struct RankReportRow {
    pub sample1: String,
    pub sample2: String,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_permutations: Option<usize>,
    pub tie_count: usize,
    pub decision: String,
}

#[derive(Debug, Serialize)]
pub struct RankReport {
    pub schema_version: u32,
    pub method: String,
    pub alpha: f64,
    pub variables: Vec<String>,
    pub rows: Vec<RankReportRow>,
}

pub fn cmd_ranktest(args: &RanktestArgs) -> Result<RankReport> {
    let vars = parse_vars(&args.vars)?;
    let mut groups: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for path in &args.files {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let schema = ColumnSchema {
            mass: args.mass_column.clone(),
            size: args.size_column.clone(),
            ..ColumnSchema::default()
        };
        let (catalog, report) = load_catalog(path, &schema, &label)
            .with_context(|| format!("loading {}", path.display()))?;
        if report.rejected > 0 {
            log::warn!(
                "{label}: rejected {} of {} rows",
                report.rejected,
                report.rows_seen
            );
        }
        groups.push((label, extract_vars(&catalog, &vars)));
    }

    let comparisons: Vec<(usize, usize)> = match args.mode {
        CompareMode::Reference => (1..groups.len()).map(|j| (0, j)).collect(),
        CompareMode::Pairwise => {
            let mut all = Vec::new();
            for i in 0..groups.len() {
                for j in (i + 1)..groups.len() {
                    all.push((i, j));
                }
            }
            all
        }
    };

    let mut rows = Vec::new();
    for (idx, &(i, j)) in comparisons.iter().enumerate() {
        let input = RankTestInput::new(vec![groups[i].1.clone(), groups[j].1.clone()])?;
        let result: RankTestResult = match args.method {
            MethodChoice::Mckeon => rank_test_mckeon(&input)?,
            MethodChoice::Permutation => permutation_pvalue(
                &input,
                args.permutations,
                derive_seed(args.seed, roles::PAIR, idx as u64),
            )?,
        };
        let decision = compatibility_decision(&result, args.alpha)?;
        rows.push(RankReportRow {
            sample1: groups[i].0.clone(),
            sample2: groups[j].0.clone(),
            statistic: result.statistic,
            p_value: result.p_value,
            n_permutations: result.n_permutations,
            tie_count: result.tie_count,
            decision: decision.verdict().to_string(),
        });
    }

    let report = RankReport {
        schema_version: crosscorr::SCHEMA_VERSION,
        method: match args.method {
            MethodChoice::Mckeon => "mckeon-f".to_string(),
            MethodChoice::Permutation => "permutation".to_string(),
        },
        alpha: args.alpha,
        variables: vars
            .iter()
            .map(|v| match v {
                Variable::Mass => "mass".to_string(),
                Variable::Size => "size".to_string(),
            })
            .collect(),
        rows,
    };

    println!("{}", render_rank_table(&report));
    if let Some(out) = &args.out {
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        write_atomic(out, &bytes)?;
    }
    Ok(report)
}

fn extract_vars(catalog: &Catalog, vars: &[Variable]) -> Vec<Vec<f64>> {
    catalog
        .records()
        .iter()
        .map(|r| {
            vars.iter()
                .map(|v| match v {
                    Variable::Mass => r.mass,
                    Variable::Size => r.size,
                })
                .collect()
        })
        .collect()
}

fn render_rank_table(report: &RankReport) -> String {
    let mut widths = ["sample1".len(), "sample2".len()];
    for row in &report.rows {
        widths[0] = widths[0].max(row.sample1.len());
        widths[1] = widths[1].max(row.sample2.len());
    }
    let mut out = format!(
        "method {}  alpha {}  variables {}\n",
        report.method,
        report.alpha,
        report.variables.join(",")
    );
    out.push_str(&format!(
        "{:<w0$}  {:<w1$}  {:>10}  {:>8}  decision\n",
        "sample1",
        "sample2",
        "statistic",
        "p_value",
        w0 = widths[0],
        w1 = widths[1]
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<w0$}  {:<w1$}  {:>10.4}  {:>8.4}  {}\n",
            row.sample1,
            row.sample2,
            row.statistic,
            row.p_value,
            row.decision,
            w0 = widths[0],
            w1 = widths[1]
        ));
    }
    out
}

#[derive(Args)]
pub struct FitArgs {
    /// Correlation CSV written by `correlate` (xi_*.csv)
    #[arg(long)]
    pub input: PathBuf,
    /// Estimator id to fit (1..=4)
    #[arg(long, default_value_t = 4)]
    pub estimator: u8,
    #[arg(long, default_value_t = 0.005)]
    pub alpha: f64,
    /// Force inverse-variance weighting on or off (default: weighted when
    /// every defined bin has a sigma)
    #[arg(long)]
    pub weighted: Option<bool>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct FitCommandReport {
    pub schema_version: u32,
    pub input: String,
    pub estimator: String,
    pub fit: PowerLawFit,
    pub goodness: GoodnessOfFit,
}

pub fn cmd_fit(args: &FitArgs) -> Result<FitCommandReport> {
    if crosscorr::estimators::Estimator::from_id(args.estimator).is_none() {
        bail!("estimator id must be 1..=4, got {}", args.estimator);
    }
    let mut reader = csv::Reader::from_path(&args.input)
        .with_context(|| format!("cannot open {}", args.input.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column {name:?} not found in {}", args.input.display()))
    };
    let r_col = col("r_center")?;
    let xi_col = col(&format!("xi_{}", args.estimator))?;
    let sigma_col = col(&format!("sigma_{}", args.estimator))?;

    let mut r = Vec::new();
    let mut xi: Vec<Option<f64>> = Vec::new();
    let mut sigma: Vec<Option<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        r.push(parse_cell(&record, r_col)?.context("r_center must not be empty")?);
        xi.push(parse_cell(&record, xi_col)?);
        sigma.push(parse_cell(&record, sigma_col)?);
    }

    let auto_weighted = xi
        .iter()
        .zip(&sigma)
        .all(|(v, s)| v.is_none() || matches!(s, Some(x) if *x > 0.0));
    let weighted = args.weighted.unwrap_or(auto_weighted);
    let fit = if weighted {
        fit_inverse_power_law_weighted(&r, &xi, &sigma)?
    } else {
        fit_inverse_power_law(&r, &xi)?
    };
    let goodness = goodness_of_fit(&r, &xi, &fit, args.alpha)?;
    let report = FitCommandReport {
        schema_version: crosscorr::SCHEMA_VERSION,
        input: args.input.display().to_string(),
        estimator: format!("xi_{}", args.estimator),
        fit,
        goodness,
    };
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    match &args.out {
        Some(out) => write_atomic(out, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(report)
}

fn parse_cell(record: &csv::StringRecord, idx: usize) -> Result<Option<f64>> {
    let cell = record
        .get(idx)
        .with_context(|| format!("row too short at column {idx}"))?;
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .with_context(|| format!("cannot parse {cell:?} as a number"))?;
    Ok(Some(v))
}

#[derive(Args)]
pub struct RandomsArgs {
    /// Number of points
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub mass_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    pub size_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub size_hi: f64,
    /// Output CSV; a .meta.json sidecar is written next to it
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_randoms(args: &RandomsArgs) -> Result<()> {
    let ranges = [(args.mass_lo, args.mass_hi), (args.size_lo, args.size_hi)];
    let source = PointSet::new(
        "cli-ranges",
        vec![[ranges[0].0, ranges[1].0], [ranges[0].1, ranges[1].1]],
    )?;
    let mut spec = RandomSpec::new(args.n, args.seed);
    spec.ranges = Some(ranges);
    let (points, meta) = generate_randoms(&source, &spec)?;
    let mut buf = Vec::new();
    write_point_set_csv(&points, &mut buf)?;
    write_atomic(&args.out, &buf)?;
    let meta_path = args.out.with_extension("meta.json");
    let mut bytes = serde_json::to_vec_pretty(&meta)?;
    bytes.push(b'\n');
    write_atomic(&meta_path, &bytes)?;
    println!(
        "wrote {} random points to {} (meta: {})",
        points.len(),
        args.out.display(),
        meta_path.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct MergerArgs {
    /// Accreted-to-initial mass ratio
    #[arg(long, required_unless_present = "target_size", conflicts_with = "target_size")]
    pub eta: Option<f64>,
    /// Mean-square velocity ratio of accreted to initial material
    #[arg(long)]
    pub epsilon: f64,
    /// Solve for the mass ratio that yields this size growth factor
    #[arg(long)]
    pub target_size: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MergerOutput {
    pub schema_version: u32,
    pub eta: f64,
    pub epsilon: f64,
    #[serde(flatten)]
    pub ratios: MergerRatios,
}

pub fn cmd_merger(args: &MergerArgs) -> Result<MergerOutput> {
    let eta = match (args.eta, args.target_size) {
        (Some(eta), None) => eta,
        (None, Some(target)) => invert_for_eta(target, args.epsilon)?,
        _ => bail!("exactly one of --eta or --target-size is required"),
    };
    let params = MergerParams::new(eta, args.epsilon)?;
    let ratios = merger_ratios(&params)?;
    let output = MergerOutput {
        schema_version: crosscorr::SCHEMA_VERSION,
        eta,
        epsilon: args.epsilon,
        ratios,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(output)
}

#[derive(Args)]
pub struct ValidateConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
}

pub fn cmd_validate_config(args: &ValidateConfigArgs) -> Result<()> {
    let (config, _, _) = crate::config::load_config(&args.config)?;
    println!(
        "config OK: {} source(s), {} component(s), {} redshift bin(s), seed {}",
        config.sources.len(),
        config.components.len(),
        config.redshift_bins.len(),
        config.master_seed
    );
    Ok(())
}
