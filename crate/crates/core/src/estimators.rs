//! Cross-correlation estimators over normalized pair-count histograms.
//!
//! Four estimator forms are supported, all consuming histograms normalized
//! by their total pair count:
//!
//! * `xi_1 = DD/D2R1 - 1` and `xi_2 = DD/D1R2 - 1` (natural forms),
//! * `xi_3 = DD·RR/(D1R2·D2R1) - 1`,
//! * `xi_4 = (DD - D1R2 - D2R1 + RR)/RR`.
//!
//! A bin whose denominator vanishes is undefined and stays `None`; it is
//! never reported as zero. [`estimate_xi`] composes the whole pipeline from
//! two catalogs, and [`bootstrap_errors`] attaches resampling standard
//! deviations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{format_full, AxisTransformSpec, Catalog, PointSet};
use crate::error::{Error, Result};
use crate::paircounts::{
    average_normalized, cross_pair_counts_accelerated, max_separation, normalize_counts, BinGrid,
    PairCountHistogram, PairKind, RMaxSource, SeparationScale,
};
use crate::randoms::{generate_randoms, RandomSpec};
use crate::seeding::{derive_seed, rng_from_seed, roles, GENERATOR_ID};

/// The four estimator forms. In pair-kind terms, `D1R2` counts the first
/// data set against the second random set (kind `DR`), `D2R1` the second
/// data set against the first random set (kind `RD`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    Natural1,
    Natural2,
    Improved3,
    Improved4,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Natural1,
        Estimator::Natural2,
        Estimator::Improved3,
        Estimator::Improved4,
    ];

    pub fn id(&self) -> u8 {
        match self {
            Estimator::Natural1 => 1,
            Estimator::Natural2 => 2,
            Estimator::Improved3 => 3,
            Estimator::Improved4 => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Estimator> {
        Estimator::ALL.into_iter().find(|e| e.id() == id)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Natural1 => "xi_1",
            Estimator::Natural2 => "xi_2",
            Estimator::Improved3 => "xi_3",
            Estimator::Improved4 => "xi_4",
        }
    }
}

/// Per-bin values; `None` marks an undefined bin.
pub type BinSeries = Vec<Option<f64>>;

fn require_normalized_same_grid(hists: &[&PairCountHistogram]) -> Result<()> {
    let first = hists[0];
    for h in hists {
        if !h.normalized {
            return Err(Error::NotNormalized);
        }
        if !h.same_grid(first) {
            return Err(Error::GridMismatch);
        }
    }
    Ok(())
}

pub fn xi_natural_1(dd: &PairCountHistogram, d2r1: &PairCountHistogram) -> Result<BinSeries> {
    require_normalized_same_grid(&[dd, d2r1])?;
    Ok(dd
        .counts
        .iter()
        .zip(&d2r1.counts)
        .map(|(&num, &den)| if den == 0.0 { None } else { Some(num / den - 1.0) })
        .collect())
}

pub fn xi_natural_2(dd: &PairCountHistogram, d1r2: &PairCountHistogram) -> Result<BinSeries> {
    require_normalized_same_grid(&[dd, d1r2])?;
    Ok(dd
        .counts
        .iter()
        .zip(&d1r2.counts)
        .map(|(&num, &den)| if den == 0.0 { None } else { Some(num / den - 1.0) })
        .collect())
}

pub fn xi_improved_3(
    dd: &PairCountHistogram,
    d1r2: &PairCountHistogram,
    d2r1: &PairCountHistogram,
    rr: &PairCountHistogram,
) -> Result<BinSeries> {
    require_normalized_same_grid(&[dd, d1r2, d2r1, rr])?;
    Ok((0..dd.counts.len())
        .map(|k| {
            let den = d1r2.counts[k] * d2r1.counts[k];
            if den == 0.0 {
                None
            } else {
                Some(dd.counts[k] * rr.counts[k] / den - 1.0)
            }
        })
        .collect())
}

pub fn xi_improved_4(
    dd: &PairCountHistogram,
    d1r2: &PairCountHistogram,
    d2r1: &PairCountHistogram,
    rr: &PairCountHistogram,
) -> Result<BinSeries> {
    require_normalized_same_grid(&[dd, d1r2, d2r1, rr])?;
    Ok((0..dd.counts.len())
        .map(|k| {
            let den = rr.counts[k];
            if den == 0.0 {
                None
            } else {
                Some((dd.counts[k] - d1r2.counts[k] - d2r1.counts[k] + den) / den)
            }
        })
        .collect())
}

/// How the normalization scale is chosen for an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RMaxChoice {
    /// Maximum separation between the two data sets only.
    DataData,
    /// Maximum over all four pair kinds, including every random
    /// realization; guarantees no admissibility errors downstream.
    UnionAllPairs,
    User(f64),
}

/// Everything [`estimate_xi`] needs besides the two catalogs.
#[derive(Debug, Clone, PartialEq)]
pub struct XiConfig {
    pub transform: AxisTransformSpec,
    pub n_bins: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    /// Random catalog size = data size × this multiplier.
    pub random_multiplier: usize,
    /// Independent random realizations whose normalized pair counts are
    /// averaged.
    pub realizations: usize,
    pub r_max: RMaxChoice,
}

impl XiConfig {
    pub fn new(seed: u64) -> Self {
        XiConfig {
            transform: AxisTransformSpec::default(),
            n_bins: 10,
            estimators: Estimator::ALL.to_vec(),
            seed,
            random_multiplier: 1,
            realizations: 1,
            r_max: RMaxChoice::UnionAllPairs,
        }
    }
}

/// One estimator's per-bin values plus optional bootstrap sigmas.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSeries {
    pub estimator: Estimator,
    pub xi: BinSeries,
    pub sigma: Option<BinSeries>,
    /// Bootstrap replicates in which each bin was defined.
    pub sigma_support: Option<Vec<usize>>,
}

/// Provenance of an [`XiResult`], written verbatim into the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiMeta {
    pub schema_version: u32,
    pub label_a: String,
    pub label_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub n_random_a: usize,
    pub n_random_b: usize,
    pub realizations: usize,
    pub transform: String,
    pub seed: u64,
    pub random_seeds_a: Vec<u64>,
    pub random_seeds_b: Vec<u64>,
    pub generator: &'static str,
    pub r_max: f64,
    pub r_max_source: RMaxSource,
    pub n_bins: usize,
    pub estimator_ids: Vec<u8>,
    pub bootstrap_reps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiResult {
    pub grid: BinGrid,
    pub bin_centers: Vec<f64>,
    pub series: Vec<EstimatorSeries>,
    pub meta: XiMeta,
}

impl XiResult {
    pub fn series_for(&self, e: Estimator) -> Option<&EstimatorSeries> {
        self.series.iter().find(|s| s.estimator == e)
    }
}

struct Workspace {
    pa: PointSet,
    pb: PointSet,
    r1: Vec<PointSet>,
    r2: Vec<PointSet>,
    seeds_a: Vec<u64>,
    seeds_b: Vec<u64>,
    scale: SeparationScale,
    grid: BinGrid,
    estimators: Vec<Estimator>,
}

fn prepare(a: &Catalog, b: &Catalog, cfg: &XiConfig) -> Result<Workspace> {
    if cfg.random_multiplier == 0 {
        return Err(Error::Invalid("random_multiplier must be >= 1".into()));
    }
    if cfg.realizations == 0 {
        return Err(Error::Invalid("realizations must be >= 1".into()));
    }
    if cfg.estimators.is_empty() {
        return Err(Error::Invalid("no estimators requested".into()));
    }
    let mut estimators: Vec<Estimator> = Vec::new();
    for e in &cfg.estimators {
        if !estimators.contains(e) {
            estimators.push(*e);
        }
    }

    let grid = BinGrid::uniform(cfg.n_bins)?;
    let pa = a.to_point_set(&cfg.transform)?;
    let pb = b.to_point_set(&cfg.transform)?;

    let n_r1 = pa.len() * cfg.random_multiplier;
    let n_r2 = pb.len() * cfg.random_multiplier;
    let mut r1 = Vec::with_capacity(cfg.realizations);
    let mut r2 = Vec::with_capacity(cfg.realizations);
    let mut seeds_a = Vec::new();
    let mut seeds_b = Vec::new();
    for j in 0..cfg.realizations {
        let sa = derive_seed(cfg.seed, roles::RANDOMS_A, j as u64);
        let sb = derive_seed(cfg.seed, roles::RANDOMS_B, j as u64);
        seeds_a.push(sa);
        seeds_b.push(sb);
        let mut spec = RandomSpec::new(n_r1, sa);
        r1.push(generate_randoms(&pa, &spec)?.0);
        spec = RandomSpec::new(n_r2, sb);
        r2.push(generate_randoms(&pb, &spec)?.0);
    }

    let scale = match cfg.r_max {
        RMaxChoice::User(v) => SeparationScale::user(v)?,
        RMaxChoice::DataData => max_separation(&pa, &pb)?,
        RMaxChoice::UnionAllPairs => {
            let mut r_max = max_separation(&pa, &pb)?.r_max;
            for j in 0..cfg.realizations {
                r_max = r_max.max(max_separation(&pa, &r2[j])?.r_max);
                r_max = r_max.max(max_separation(&pb, &r1[j])?.r_max);
                r_max = r_max.max(max_separation(&r1[j], &r2[j])?.r_max);
            }
            SeparationScale::new(r_max, RMaxSource::UnionAllPairs)?
        }
    };

    Ok(Workspace {
        pa,
        pb,
        r1,
        r2,
        seeds_a,
        seeds_b,
        scale,
        grid,
        estimators,
    })
}

struct NormalizedSet {
    dd: PairCountHistogram,
    d1r2: PairCountHistogram,
    d2r1: PairCountHistogram,
    rr: PairCountHistogram,
}

/// All four normalized histogram families for the given data point sets,
/// averaging the random-involved ones over realizations.
fn normalized_histograms(ws: &Workspace, pa: &PointSet, pb: &PointSet) -> Result<NormalizedSet> {
    let grid = &ws.grid;
    let scale = &ws.scale;
    let dd = normalize_counts(&cross_pair_counts_accelerated(
        pa,
        pb,
        grid,
        scale,
        PairKind::DataData,
    )?)?;
    let mut d1r2 = Vec::new();
    let mut d2r1 = Vec::new();
    let mut rr = Vec::new();
    for j in 0..ws.r1.len() {
        d1r2.push(normalize_counts(&cross_pair_counts_accelerated(
            pa,
            &ws.r2[j],
            grid,
            scale,
            PairKind::DataRandom,
        )?)?);
        d2r1.push(normalize_counts(&cross_pair_counts_accelerated(
            pb,
            &ws.r1[j],
            grid,
            scale,
            PairKind::RandomData,
        )?)?);
        rr.push(normalize_counts(&cross_pair_counts_accelerated(
            &ws.r1[j],
            &ws.r2[j],
            grid,
            scale,
            PairKind::RandomRandom,
        )?)?);
    }
    Ok(NormalizedSet {
        dd,
        d1r2: average_normalized(&d1r2)?,
        d2r1: average_normalized(&d2r1)?,
        rr: average_normalized(&rr)?,
    })
}

fn series_values(e: Estimator, h: &NormalizedSet) -> Result<BinSeries> {
    match e {
        Estimator::Natural1 => xi_natural_1(&h.dd, &h.d2r1),
        Estimator::Natural2 => xi_natural_2(&h.dd, &h.d1r2),
        Estimator::Improved3 => xi_improved_3(&h.dd, &h.d1r2, &h.d2r1, &h.rr),
        Estimator::Improved4 => xi_improved_4(&h.dd, &h.d1r2, &h.d2r1, &h.rr),
    }
}

/// Runs the full pipeline: transform, randoms, the four pair-count
/// families, normalization, and the selected estimators.
pub fn estimate_xi(a: &Catalog, b: &Catalog, cfg: &XiConfig) -> Result<XiResult> {
    let ws = prepare(a, b, cfg)?;
    let hists = normalized_histograms(&ws, &ws.pa, &ws.pb)?;
    let series = ws
        .estimators
        .iter()
        .map(|&e| {
            Ok(EstimatorSeries {
                estimator: e,
                xi: series_values(e, &hists)?,
                sigma: None,
                sigma_support: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = XiMeta {
        schema_version: crate::SCHEMA_VERSION,
        label_a: a.label().to_string(),
        label_b: b.label().to_string(),
        n_a: ws.pa.len(),
        n_b: ws.pb.len(),
        n_random_a: ws.r1[0].len(),
        n_random_b: ws.r2[0].len(),
        realizations: ws.r1.len(),
        transform: cfg.transform.describe(),
        seed: cfg.seed,
        random_seeds_a: ws.seeds_a.clone(),
        random_seeds_b: ws.seeds_b.clone(),
        generator: GENERATOR_ID,
        r_max: ws.scale.r_max,
        r_max_source: ws.scale.source,
        n_bins: cfg.n_bins,
        estimator_ids: ws.estimators.iter().map(|e| e.id()).collect(),
        bootstrap_reps: None,
    };
    Ok(XiResult {
        bin_centers: ws.grid.centers(),
        grid: ws.grid,
        series,
        meta,
    })
}

/// Bootstrap standard deviations for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSeries {
    pub estimator: Estimator,
    pub sigma: BinSeries,
    /// Replicates in which the bin was defined.
    pub support: Vec<usize>,
}

/// Resamples both catalogs' records independently with replacement (same
/// sizes) and recomputes the estimators against the fixed random catalogs
/// and fixed scale of the original analysis. The axis transform is frozen:
/// replicates resample the already-transformed points, so all replicates
/// live in the same metric space as the reference result.
///
/// sigma[k] is the Bessel-corrected standard deviation over the replicates
/// in which bin k was defined; bins defined in fewer than 2 replicates get
/// no sigma. Replicate RNG streams derive from (seed, replicate index), so
/// any execution order gives identical results.
pub fn bootstrap_errors(
    a: &Catalog,
    b: &Catalog,
    cfg: &XiConfig,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<SigmaSeries>> {
    if n_reps < 2 {
        return Err(Error::TooFewReplicates(n_reps));
    }
    let ws = prepare(a, b, cfg)?;
    let replicate = |t: usize| -> Result<Vec<BinSeries>> {
        let mut rng = rng_from_seed(derive_seed(seed, roles::BOOTSTRAP, t as u64));
        let pa_t = resample(&ws.pa, &mut rng, t);
        let pb_t = resample(&ws.pb, &mut rng, t);
        let hists = normalized_histograms(&ws, &pa_t, &pb_t)?;
        ws.estimators.iter().map(|&e| series_values(e, &hists)).collect()
    };

    let per_rep: Vec<Vec<BinSeries>> = run_replicates(n_reps, &replicate)?;

    let n_bins = ws.grid.n_bins();
    let mut out = Vec::new();
    for (ei, &e) in ws.estimators.iter().enumerate() {
        let mut sigma: BinSeries = vec![None; n_bins];
        let mut support = vec![0usize; n_bins];
        for k in 0..n_bins {
            let values: Vec<f64> = per_rep
                .iter()
                .filter_map(|rep| rep[ei][k])
                .collect();
            support[k] = values.len();
            if values.len() >= 2 {
                let m = values.len() as f64;
                let mean = values.iter().sum::<f64>() / m;
                let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
                sigma[k] = Some((ss / (m - 1.0)).sqrt());
            }
        }
        out.push(SigmaSeries {
            estimator: e,
            sigma,
            support,
        });
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn run_replicates<F>(n_reps: usize, replicate: &F) -> Result<Vec<Vec<BinSeries>>>
where
    F: Fn(usize) -> Result<Vec<BinSeries>> + Sync,
{
    use rayon::prelude::*;
    (0..n_reps).into_par_iter().map(replicate).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_replicates<F>(n_reps: usize, replicate: &F) -> Result<Vec<Vec<BinSeries>>>
where
    F: Fn(usize) -> Result<Vec<BinSeries>>,
{
    (0..n_reps).map(replicate).collect()
}

fn resample(ps: &PointSet, rng: &mut impl rand::Rng, t: usize) -> PointSet {
    let pts = ps.points();
    let n = pts.len();
    let picked: Vec<[f64; 2]> = (0..n).map(|_| pts[rng.random_range(0..n)]).collect();
    PointSet::new(format!("{}#boot{t}", ps.provenance()), picked)
        .expect("resample of a valid point set is valid")
}

/// [`estimate_xi`] plus bootstrap sigmas merged into the result.
pub fn estimate_xi_with_errors(
    a: &Catalog,
    b: &Catalog,
    cfg: &XiConfig,
    n_reps: usize,
) -> Result<XiResult> {
    let mut result = estimate_xi(a, b, cfg)?;
    let sigmas = bootstrap_errors(a, b, cfg, n_reps, cfg.seed)?;
    for (series, sig) in result.series.iter_mut().zip(sigmas) {
        debug_assert_eq!(series.estimator, sig.estimator);
        series.sigma = Some(sig.sigma);
        series.sigma_support = Some(sig.support);
    }
    result.meta.bootstrap_reps = Some(n_reps);
    Ok(result)
}

/// CSV export: one row per bin, columns
/// `bin_lo,bin_hi,r_center,xi_1..xi_4,sigma_1..sigma_4,defined_1..defined_4`.
/// Estimators that were not computed leave their columns empty; undefined
/// bins leave xi/sigma empty with defined = 0.
pub fn write_xi_csv<W: Write>(result: &XiResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = vec!["bin_lo".into(), "bin_hi".into(), "r_center".into()];
    for e in Estimator::ALL {
        header.push(e.label().to_string());
    }
    for e in Estimator::ALL {
        header.push(format!("sigma_{}", e.id()));
    }
    for e in Estimator::ALL {
        header.push(format!("defined_{}", e.id()));
    }
    w.write_record(&header)?;

    let edges = result.grid.edges();
    for k in 0..result.grid.n_bins() {
        let mut row: Vec<String> = vec![
            format_full(edges[k]),
            format_full(edges[k + 1]),
            format_full(result.bin_centers[k]),
        ];
        let mut xi_cols = Vec::new();
        let mut sigma_cols = Vec::new();
        let mut defined_cols = Vec::new();
        for e in Estimator::ALL {
            match result.series_for(e) {
                Some(s) => {
                    let v = s.xi[k];
                    xi_cols.push(v.map(format_full).unwrap_or_default());
                    sigma_cols.push(
                        s.sigma
                            .as_ref()
                            .and_then(|sig| sig[k])
                            .map(format_full)
                            .unwrap_or_default(),
                    );
                    defined_cols.push(if v.is_some() { "1".into() } else { "0".into() });
                }
                None => {
                    xi_cols.push(String::new());
                    sigma_cols.push(String::new());
                    defined_cols.push(String::new());
                }
            }
        }
        row.extend(xi_cols);
        row.extend(sigma_cols);
        row.extend(defined_cols);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
