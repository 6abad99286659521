//! Binned histograms of pairwise Euclidean separations.
//!
//! Separations are normalized by a maximum separation `r_max` so every
//! admissible pair lands in [0,1], then binned on a uniform grid whose last
//! bin is closed on the right. Two kernels exist: [`cross_pair_counts`], the
//! plain O(n_a·n_b) reference, and [`cross_pair_counts_accelerated`], a
//! cell-grid kernel contracted to produce bit-identical histograms.
//!
//! The accelerated kernel never re-derives bin boundaries in a different
//! arithmetic order. It precomputes, by bisection over the f64 bit
//! representation, the exact squared-distance thresholds at which the
//! reference chain `bin(sqrt(d2)/r_max)` changes value, and compares raw
//! squared distances against those thresholds. Whole cell pairs whose
//! bracketed d2 range stays inside one bin are counted without touching the
//! member points.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{format_full, PointSet};
use crate::error::{Error, Result};

/// Uniform bin grid over the normalized separation range [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    n_bins: usize,
    edges: Vec<f64>,
}

impl BinGrid {
    pub fn uniform(n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::EmptyBinGrid);
        }
        let edges = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
        Ok(BinGrid { n_bins, edges })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Arithmetic midpoints of the bins, used for plotting and fitting.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins)
            .map(|k| (self.edges[k] + self.edges[k + 1]) / 2.0)
            .collect()
    }

    /// Bin index under the rule edges[k] <= t < edges[k+1], with the last
    /// bin closed on the right; `None` when t lies outside [0,1].
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        let n = self.n_bins;
        let mut k = ((t * n as f64) as usize).min(n - 1);
        // The floor guess can be off by one ulp worth of edge rounding;
        // the edges themselves are authoritative.
        while k > 0 && t < self.edges[k] {
            k -= 1;
        }
        while k + 1 < n && t >= self.edges[k + 1] {
            k += 1;
        }
        Some(k)
    }
}

/// Where the normalization scale came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RMaxSource {
    DataData,
    UnionAllPairs,
    User,
}

/// The separation that maps to normalized distance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationScale {
    pub r_max: f64,
    pub source: RMaxSource,
}

impl SeparationScale {
    pub fn new(r_max: f64, source: RMaxSource) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidScale(r_max));
        }
        Ok(SeparationScale { r_max, source })
    }

    pub fn user(r_max: f64) -> Result<Self> {
        Self::new(r_max, RMaxSource::User)
    }
}

/// Which catalogs a histogram pairs up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    #[serde(rename = "DD")]
    DataData,
    #[serde(rename = "DR")]
    DataRandom,
    #[serde(rename = "RD")]
    RandomData,
    #[serde(rename = "RR")]
    RandomRandom,
}

impl PairKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairKind::DataData => "DD",
            PairKind::DataRandom => "DR",
            PairKind::RandomData => "RD",
            PairKind::RandomRandom => "RR",
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binned pair frequencies. Raw counts are non-negative integers stored as
/// f64; [`normalize_counts`] divides by `total_pairs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCountHistogram {
    pub grid: BinGrid,
    pub counts: Vec<f64>,
    /// Admissible pairs: n_a·n_b for distinct sets, n(n-1)/2 for a set
    /// against itself.
    pub total_pairs: u64,
    pub normalized: bool,
    pub kind: PairKind,
    pub labels: (String, String),
    /// True when the two inputs were the same point set and the
    /// self-pairing rule (no i=j, unordered pairs once) applied.
    pub self_pairs: bool,
}

impl PairCountHistogram {
    fn from_raw_u64(
        grid: BinGrid,
        counts: Vec<u64>,
        total_pairs: u64,
        kind: PairKind,
        labels: (String, String),
        self_pairs: bool,
    ) -> Self {
        PairCountHistogram {
            grid,
            counts: counts.into_iter().map(|c| c as f64).collect(),
            total_pairs,
            normalized: false,
            kind,
            labels,
            self_pairs,
        }
    }

    /// Builds a raw histogram from externally produced integer counts.
    pub fn new_raw(
        grid: BinGrid,
        counts: Vec<f64>,
        total_pairs: u64,
        kind: PairKind,
        labels: (String, String),
    ) -> Result<Self> {
        if counts.len() != grid.n_bins() {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: grid.n_bins(),
            });
        }
        let mut sum = 0.0;
        for &c in &counts {
            if !(c.is_finite() && c >= 0.0 && c.fract() == 0.0) {
                return Err(Error::Invalid(format!("raw count {c} is not a non-negative integer")));
            }
            sum += c;
        }
        if sum > total_pairs as f64 {
            return Err(Error::Invalid(format!(
                "counts sum {sum} exceeds total_pairs {total_pairs}"
            )));
        }
        Ok(PairCountHistogram {
            grid,
            counts,
            total_pairs,
            normalized: false,
            kind,
            labels,
            self_pairs: false,
        })
    }

    /// Builds an already-normalized histogram (counts in [0,1]).
    pub fn new_normalized(
        grid: BinGrid,
        counts: Vec<f64>,
        total_pairs: u64,
        kind: PairKind,
        labels: (String, String),
    ) -> Result<Self> {
        if counts.len() != grid.n_bins() {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: grid.n_bins(),
            });
        }
        for &c in &counts {
            if !(c.is_finite() && (0.0..=1.0).contains(&c)) {
                return Err(Error::Invalid(format!("normalized count {c} outside [0,1]")));
            }
        }
        Ok(PairCountHistogram {
            grid,
            counts,
            total_pairs,
            normalized: true,
            kind,
            labels,
            self_pairs: false,
        })
    }

    pub fn same_grid(&self, other: &PairCountHistogram) -> bool {
        self.grid == other.grid
    }
}

#[inline(always)]
fn dist2(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    dx * dx + dy * dy
}

/// The single authoritative chain from squared distance to bin index.
#[inline(always)]
fn bin_of_d2(grid: &BinGrid, r_max: f64, d2: f64) -> Option<usize> {
    grid.bin_of(d2.sqrt() / r_max)
}

/// Maximum Euclidean distance over all cross pairs a×b.
pub fn max_separation(a: &PointSet, b: &PointSet) -> Result<SeparationScale> {
    let max_d2 = max_d2_impl(a.points(), b.points());
    let r_max = max_d2.sqrt();
    SeparationScale::new(r_max, RMaxSource::DataData)
}

#[cfg(feature = "parallel")]
fn max_d2_impl(pa: &[[f64; 2]], pb: &[[f64; 2]]) -> f64 {
    use rayon::prelude::*;
    pa.par_chunks(1024)
        .map(|chunk| {
            let mut best = 0.0f64;
            for p in chunk {
                for q in pb {
                    best = best.max(dist2(p, q));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(not(feature = "parallel"))]
fn max_d2_impl(pa: &[[f64; 2]], pb: &[[f64; 2]]) -> f64 {
    let mut best = 0.0f64;
    for p in pa {
        for q in pb {
            best = best.max(dist2(p, q));
        }
    }
    best
}

fn exceed_error(d2: f64, r_max: f64) -> Error {
    Error::SeparationExceedsScale {
        separation: d2.sqrt(),
        r_max,
    }
}

/// Reference kernel: plain double loop, one distance per admissible pair.
///
/// When `a` and `b` hold the same points, self-pairs are excluded and each
/// unordered pair is counted once (total n(n-1)/2).
pub fn cross_pair_counts(
    a: &PointSet,
    b: &PointSet,
    bins: &BinGrid,
    scale: &SeparationScale,
    kind: PairKind,
) -> Result<PairCountHistogram> {
    let r_max = scale.r_max;
    let mut counts = vec![0u64; bins.n_bins()];
    let self_pairs = a.same_points(b);
    let total_pairs: u64;
    if self_pairs {
        let pts = a.points();
        let n = pts.len() as u64;
        total_pairs = n * (n - 1) / 2;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d2 = dist2(&pts[i], &pts[j]);
                match bin_of_d2(bins, r_max, d2) {
                    Some(k) => counts[k] += 1,
                    None => return Err(exceed_error(d2, r_max)),
                }
            }
        }
    } else {
        total_pairs = a.len() as u64 * b.len() as u64;
        for p in a.points() {
            for q in b.points() {
                let d2 = dist2(p, q);
                match bin_of_d2(bins, r_max, d2) {
                    Some(k) => counts[k] += 1,
                    None => return Err(exceed_error(d2, r_max)),
                }
            }
        }
    }
    Ok(PairCountHistogram::from_raw_u64(
        bins.clone(),
        counts,
        total_pairs,
        kind,
        (a.provenance().to_string(), b.provenance().to_string()),
        self_pairs,
    ))
}

/// Exact squared-distance thresholds of the reference binning chain.
///
/// `thr[k-1]` is the smallest f64 whose reference bin is >= k, found by
/// bisection over the bit representation (the chain is weakly monotone in
/// d2 and positive f64 bits order numerically). `exceed` is the smallest
/// d2 the reference chain rejects as beyond r_max.
struct D2Binner {
    thr: Vec<f64>,
    exceed: f64,
}

impl D2Binner {
    fn new(grid: &BinGrid, r_max: f64) -> Self {
        let thr = (1..grid.n_bins())
            .map(|k| {
                smallest_d2(|d2| match bin_of_d2(grid, r_max, d2) {
                    Some(b) => b >= k,
                    None => true,
                })
            })
            .collect();
        let exceed = smallest_d2(|d2| bin_of_d2(grid, r_max, d2).is_none());
        D2Binner { thr, exceed }
    }

    #[inline(always)]
    fn count_le(&self, d2: f64) -> usize {
        self.thr.partition_point(|&t| t <= d2)
    }
}

/// Smallest non-negative f64 satisfying a predicate that is monotone in the
/// numeric order of non-negative floats. The predicate must hold at +inf.
fn smallest_d2(pred: impl Fn(f64) -> bool) -> f64 {
    if pred(0.0) {
        return 0.0;
    }
    let mut lo: u64 = 0; // +0.0, pred false
    let mut hi: u64 = f64::INFINITY.to_bits(); // pred true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(f64::from_bits(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    f64::from_bits(hi)
}

struct OccCell {
    start: usize,
    len: usize,
    /// min_x, min_y, max_x, max_y over the member points (actual values,
    /// not cell geometry, so coordinate-to-cell rounding is irrelevant).
    aabb: [f64; 4],
}

struct CellGrid {
    occ: Vec<OccCell>,
    points: Vec<[f64; 2]>,
}

fn pick_grid_dim(n: usize) -> usize {
    (((n as f64) / 6.0).sqrt().ceil() as usize).clamp(1, 144)
}

fn build_grid(ps: &PointSet, g: usize) -> CellGrid {
    let pts = ps.points();
    let [(x0, x1), (y0, y1)] = ps.bounds();
    let gx = if x1 > x0 { g } else { 1 };
    let gy = if y1 > y0 { g } else { 1 };
    let inv_wx = if x1 > x0 { gx as f64 / (x1 - x0) } else { 0.0 };
    let inv_wy = if y1 > y0 { gy as f64 / (y1 - y0) } else { 0.0 };
    let cell_of = |p: &[f64; 2]| -> usize {
        let ix = (((p[0] - x0) * inv_wx) as usize).min(gx - 1);
        let iy = (((p[1] - y0) * inv_wy) as usize).min(gy - 1);
        iy * gx + ix
    };

    let n_cells = gx * gy;
    let mut sizes = vec![0usize; n_cells];
    for p in pts {
        sizes[cell_of(p)] += 1;
    }
    let mut starts = vec![0usize; n_cells + 1];
    for c in 0..n_cells {
        starts[c + 1] = starts[c] + sizes[c];
    }
    let mut points = vec![[0.0f64; 2]; pts.len()];
    let mut fill = starts.clone();
    for p in pts {
        let c = cell_of(p);
        points[fill[c]] = *p;
        fill[c] += 1;
    }

    let mut occ = Vec::new();
    for c in 0..n_cells {
        let (start, len) = (starts[c], sizes[c]);
        if len == 0 {
            continue;
        }
        let mut aabb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &points[start..start + len] {
            aabb[0] = aabb[0].min(p[0]);
            aabb[1] = aabb[1].min(p[1]);
            aabb[2] = aabb[2].max(p[0]);
            aabb[3] = aabb[3].max(p[1]);
        }
        occ.push(OccCell { start, len, aabb });
    }
    CellGrid { occ, points }
}

/// Bounds on the computed squared distance between any point of box `a` and
/// any point of box `b`.
///
/// Each bound runs through the same single-rounded subtract/square/add
/// shape as `dist2`, and the box coordinates are actual member coordinates,
/// so monotonicity of correctly-rounded IEEE ops gives containment of every
/// pair's computed d2 without any epsilon slack.
#[inline(always)]
fn aabb_d2_bounds(a: &[f64; 4], b: &[f64; 4]) -> (f64, f64) {
    let gx = (b[0] - a[2]).max(a[0] - b[2]).max(0.0);
    let gy = (b[1] - a[3]).max(a[1] - b[3]).max(0.0);
    let sx = (b[2] - a[0]).max(a[2] - b[0]);
    let sy = (b[3] - a[1]).max(a[3] - b[1]);
    (gx * gx + gy * gy, sx * sx + sy * sy)
}

fn count_cell_pair(
    pa: &[[f64; 2]],
    pb: &[[f64; 2]],
    bounds: (f64, f64),
    binner: &D2Binner,
    r_max: f64,
    counts: &mut [u64],
) -> Result<()> {
    let (dmin2, dmax2) = bounds;
    let k_lo = binner.count_le(dmin2);
    let k_hi = binner.count_le(dmax2);
    if k_lo == k_hi && dmax2 < binner.exceed {
        counts[k_lo] += pa.len() as u64 * pb.len() as u64;
        return Ok(());
    }
    let window = &binner.thr[k_lo..k_hi];
    for p in pa {
        for q in pb {
            let d2 = dist2(p, q);
            if d2 >= binner.exceed {
                return Err(exceed_error(d2, r_max));
            }
            let mut k = k_lo;
            for &t in window {
                if d2 >= t {
                    k += 1;
                } else {
                    break;
                }
            }
            counts[k] += 1;
        }
    }
    Ok(())
}

fn cross_cell_row(
    ga: &CellGrid,
    ca: &OccCell,
    gb: &CellGrid,
    binner: &D2Binner,
    r_max: f64,
    counts: &mut [u64],
) -> Result<()> {
    let pa = &ga.points[ca.start..ca.start + ca.len];
    for cb in &gb.occ {
        let pb = &gb.points[cb.start..cb.start + cb.len];
        count_cell_pair(pa, pb, aabb_d2_bounds(&ca.aabb, &cb.aabb), binner, r_max, counts)?;
    }
    Ok(())
}

fn self_cell_row(
    g: &CellGrid,
    i: usize,
    binner: &D2Binner,
    r_max: f64,
    counts: &mut [u64],
) -> Result<()> {
    let ci = &g.occ[i];
    let pi = &g.points[ci.start..ci.start + ci.len];

    // Pairs within the cell: d2 range is [0, span^2 of the box].
    let sx = ci.aabb[2] - ci.aabb[0];
    let sy = ci.aabb[3] - ci.aabb[1];
    let dmax2 = sx * sx + sy * sy;
    let k_hi = binner.count_le(dmax2);
    if k_hi == 0 && dmax2 < binner.exceed {
        counts[0] += (ci.len as u64) * (ci.len as u64 - 1) / 2;
    } else {
        let window = &binner.thr[..k_hi];
        for a in 0..pi.len() {
            for b in a + 1..pi.len() {
                let d2 = dist2(&pi[a], &pi[b]);
                if d2 >= binner.exceed {
                    return Err(exceed_error(d2, r_max));
                }
                let mut k = 0;
                for &t in window {
                    if d2 >= t {
                        k += 1;
                    } else {
                        break;
                    }
                }
                counts[k] += 1;
            }
        }
    }

    // Unordered pairs across distinct cells: visit each cell pair once.
    for cj in &g.occ[i + 1..] {
        let pj = &g.points[cj.start..cj.start + cj.len];
        count_cell_pair(pi, pj, aabb_d2_bounds(&ci.aabb, &cj.aabb), binner, r_max, counts)?;
    }
    Ok(())
}

fn merge_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

#[cfg(feature = "parallel")]
fn accel_cross(ga: &CellGrid, gb: &CellGrid, binner: &D2Binner, r_max: f64, n_bins: usize) -> Result<Vec<u64>> {
    use rayon::prelude::*;
    let chunk = ga.occ.len().div_ceil(rayon::current_num_threads().max(1) * 8).max(1);
    ga.occ
        .par_chunks(chunk)
        .try_fold(
            || vec![0u64; n_bins],
            |mut acc, cells| {
                for ca in cells {
                    cross_cell_row(ga, ca, gb, binner, r_max, &mut acc)?;
                }
                Ok(acc)
            },
        )
        .try_reduce(|| vec![0u64; n_bins], |a, b| Ok(merge_counts(a, b)))
}

#[cfg(not(feature = "parallel"))]
fn accel_cross(ga: &CellGrid, gb: &CellGrid, binner: &D2Binner, r_max: f64, n_bins: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; n_bins];
    for ca in &ga.occ {
        cross_cell_row(ga, ca, gb, binner, r_max, &mut counts)?;
    }
    Ok(counts)
}

#[cfg(feature = "parallel")]
fn accel_self(g: &CellGrid, binner: &D2Binner, r_max: f64, n_bins: usize) -> Result<Vec<u64>> {
    use rayon::prelude::*;
    (0..g.occ.len())
        .into_par_iter()
        .try_fold(
            || vec![0u64; n_bins],
            |mut acc, i| {
                self_cell_row(g, i, binner, r_max, &mut acc)?;
                Ok(acc)
            },
        )
        .try_reduce(|| vec![0u64; n_bins], |a, b| Ok(merge_counts(a, b)))
}

#[cfg(not(feature = "parallel"))]
fn accel_self(g: &CellGrid, binner: &D2Binner, r_max: f64, n_bins: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; n_bins];
    for i in 0..g.occ.len() {
        self_cell_row(g, i, binner, r_max, &mut counts)?;
    }
    Ok(counts)
}

/// Cell-grid kernel, bit-identical to [`cross_pair_counts`].
///
/// Whole cell pairs whose exact d2 bracket stays inside one bin contribute
/// n_a·n_b (or the triangular count) without per-pair work; everything else
/// falls back to per-pair evaluation against the precomputed thresholds.
/// With the `parallel` feature the work splits over chunks of `a`'s cells;
/// integer accumulators merge associatively, so any schedule gives the same
/// histogram.
pub fn cross_pair_counts_accelerated(
    a: &PointSet,
    b: &PointSet,
    bins: &BinGrid,
    scale: &SeparationScale,
    kind: PairKind,
) -> Result<PairCountHistogram> {
    // Grid bookkeeping costs more than it saves on tiny inputs.
    if a.len() * b.len() < 4096 {
        return cross_pair_counts(a, b, bins, scale, kind);
    }
    let r_max = scale.r_max;
    let binner = D2Binner::new(bins, r_max);
    let self_pairs = a.same_points(b);
    let (counts, total_pairs) = if self_pairs {
        let g = build_grid(a, pick_grid_dim(a.len()));
        let n = a.len() as u64;
        (accel_self(&g, &binner, r_max, bins.n_bins())?, n * (n - 1) / 2)
    } else {
        let ga = build_grid(a, pick_grid_dim(a.len()));
        let gb = build_grid(b, pick_grid_dim(b.len()));
        (
            accel_cross(&ga, &gb, &binner, r_max, bins.n_bins())?,
            a.len() as u64 * b.len() as u64,
        )
    };
    Ok(PairCountHistogram::from_raw_u64(
        bins.clone(),
        counts,
        total_pairs,
        kind,
        (a.provenance().to_string(), b.provenance().to_string()),
        self_pairs,
    ))
}

/// Divides every count by `total_pairs` and sets the normalized flag.
pub fn normalize_counts(h: &PairCountHistogram) -> Result<PairCountHistogram> {
    if h.normalized {
        return Err(Error::AlreadyNormalized);
    }
    if h.total_pairs == 0 {
        return Err(Error::ZeroTotalPairs);
    }
    let total = h.total_pairs as f64;
    let mut out = h.clone();
    out.counts = h.counts.iter().map(|&c| c / total).collect();
    out.normalized = true;
    Ok(out)
}

/// Bin-wise mean of several normalized histograms over the same grid and
/// pair kind; used to average pair counts over independent random
/// realizations. Metadata (labels, total_pairs) is taken from the first.
pub fn average_normalized(hists: &[PairCountHistogram]) -> Result<PairCountHistogram> {
    let first = hists.first().ok_or(Error::EmptySample)?;
    for h in hists {
        if !h.normalized {
            return Err(Error::NotNormalized);
        }
        if !h.same_grid(first) {
            return Err(Error::GridMismatch);
        }
        if h.kind != first.kind {
            return Err(Error::Invalid(format!(
                "cannot average {} with {}",
                h.kind, first.kind
            )));
        }
    }
    let k = hists.len() as f64;
    let mut out = first.clone();
    for bin in 0..out.counts.len() {
        let mut sum = 0.0;
        for h in hists {
            sum += h.counts[bin];
        }
        out.counts[bin] = sum / k;
    }
    Ok(out)
}

/// CSV export: `bin_lo,bin_hi,count,normalized_count`.
///
/// A raw histogram fills both count columns (the normalized one computed on
/// the fly); an already-normalized histogram leaves the raw column empty
/// since integer counts are not recoverable from it.
pub fn write_histogram_csv<W: Write>(h: &PairCountHistogram, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_lo", "bin_hi", "count", "normalized_count"])?;
    let edges = h.grid.edges();
    for k in 0..h.grid.n_bins() {
        let (raw, norm) = if h.normalized {
            (String::new(), format_full(h.counts[k]))
        } else {
            let norm = if h.total_pairs > 0 {
                format_full(h.counts[k] / h.total_pairs as f64)
            } else {
                String::new()
            };
            (format!("{}", h.counts[k]), norm)
        };
        w.write_record([format_full(edges[k]), format_full(edges[k + 1]), raw, norm])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ps(points: Vec<[f64; 2]>) -> PointSet {
        PointSet::new("test", points).unwrap()
    }

    fn uniform_points(seed: u64, n: usize, span: f64) -> Vec<[f64; 2]> {
        let mut rng = crate::seeding::rng_from_seed(seed);
        (0..n)
            .map(|_| [rng.random::<f64>() * span, rng.random::<f64>() * span])
            .collect()
    }

    fn clustered_points(seed: u64, n: usize) -> Vec<[f64; 2]> {
        let mut rng = crate::seeding::rng_from_seed(seed);
        let n_centers = (n / 20).max(1);
        let centers: Vec<[f64; 2]> = (0..n_centers)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        (0..n)
            .map(|_| {
                let c = centers[rng.random_range(0..n_centers)];
                [
                    c[0] + (rng.random::<f64>() - 0.5) * 0.02,
                    c[1] + (rng.random::<f64>() - 0.5) * 0.02,
                ]
            })
            .collect()
    }

    /// Independent route: binning by linear scan over the edge list.
    fn oracle_counts(
        pa: &[[f64; 2]],
        pb: &[[f64; 2]],
        grid: &BinGrid,
        r_max: f64,
        self_mode: bool,
    ) -> Vec<u64> {
        let mut counts = vec![0u64; grid.n_bins()];
        let edges = grid.edges();
        let mut put = |p: &[f64; 2], q: &[f64; 2]| {
            let t = dist2(p, q).sqrt() / r_max;
            let mut k = grid.n_bins() - 1;
            for i in 0..grid.n_bins() - 1 {
                if t < edges[i + 1] {
                    k = i;
                    break;
                }
            }
            assert!(t <= 1.0, "oracle fed an inadmissible pair");
            counts[k] += 1;
        };
        if self_mode {
            for i in 0..pa.len() {
                for j in i + 1..pa.len() {
                    put(&pa[i], &pa[j]);
                }
            }
        } else {
            for p in pa {
                for q in pb {
                    put(p, q);
                }
            }
        }
        counts
    }

    #[test]
    fn grid_edges_are_uniform_with_exact_endpoints() {
        let g = BinGrid::uniform(10).unwrap();
        assert_eq!(g.edges().len(), 11);
        assert_eq!(g.edges()[0], 0.0);
        assert_eq!(g.edges()[10], 1.0);
        for w in g.edges().windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 0.1).abs() < 1e-15);
        }
        assert!(BinGrid::uniform(0).is_err());
    }

    #[test]
    fn last_bin_is_closed() {
        let g = BinGrid::uniform(10).unwrap();
        assert_eq!(g.bin_of(1.0), Some(9));
        assert_eq!(g.bin_of(0.0), Some(0));
        assert_eq!(g.bin_of(1.0 + 1e-12), None);
        assert_eq!(g.bin_of(0.95), Some(9));
        assert_eq!(g.bin_of(0.1), Some(1));
    }

    #[test]
    fn single_pair_at_rmax_lands_in_last_bin() {
        let a = ps(vec![[0.0, 0.0]]);
        let b = ps(vec![[1.0, 0.0]]);
        let g = BinGrid::uniform(10).unwrap();
        let scale = SeparationScale::user(1.0).unwrap();
        let h = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
        assert_eq!(h.counts[9], 1.0);
        assert_eq!(h.counts.iter().sum::<f64>(), 1.0);
        assert_eq!(h.total_pairs, 1);
    }

    #[test]
    fn coincident_pair_lands_in_bin_zero() {
        let a = ps(vec![[0.0, 0.0]]);
        let b = ps(vec![[0.0, 0.0]]);
        let g = BinGrid::uniform(10).unwrap();
        let scale = SeparationScale::user(1.0).unwrap();
        // Same coordinates but distinct set objects with equal points:
        // the self rule applies by value, so use distinct values here.
        let h = cross_pair_counts(&a, &ps(vec![[0.0, 1e-300]]), &g, &scale, PairKind::DataData).unwrap();
        assert_eq!(h.counts[0], 1.0);
        let h_self = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
        assert!(h_self.self_pairs);
        assert_eq!(h_self.total_pairs, 0);
    }

    #[test]
    fn matches_oracle_20x30() {
        let pa = uniform_points(11, 20, 1.0);
        let pb = uniform_points(12, 30, 1.0);
        let a = ps(pa.clone());
        let b = ps(pb.clone());
        let scale = max_separation(&a, &b).unwrap();
        let g = BinGrid::uniform(10).unwrap();
        let h = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
        let want = oracle_counts(&pa, &pb, &g, scale.r_max, false);
        let got: Vec<u64> = h.counts.iter().map(|&c| c as u64).collect();
        assert_eq!(got, want);
        assert_eq!(h.total_pairs, 600);
    }

    #[test]
    fn self_mode_matches_oracle() {
        let pts = uniform_points(21, 40, 2.0);
        let a = ps(pts.clone());
        let b = ps(pts.clone());
        let scale = max_separation(&a, &b).unwrap();
        let g = BinGrid::uniform(7).unwrap();
        let h = cross_pair_counts(&a, &b, &g, &scale, PairKind::RandomRandom).unwrap();
        assert!(h.self_pairs);
        assert_eq!(h.total_pairs, 40 * 39 / 2);
        let want = oracle_counts(&pts, &pts, &g, scale.r_max, true);
        let got: Vec<u64> = h.counts.iter().map(|&c| c as u64).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn max_separation_triangle() {
        let a = ps(vec![[0.0, 0.0]]);
        let b = ps(vec![[3.0, 4.0]]);
        assert_eq!(max_separation(&a, &b).unwrap().r_max, 5.0);
    }

    #[test]
    fn max_separation_self_two_points() {
        let a = ps(vec![[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(max_separation(&a, &a).unwrap().r_max, 1.0);
    }

    #[test]
    fn max_separation_matches_enumeration() {
        let pa = uniform_points(31, 50, 3.0);
        let pb = uniform_points(32, 50, 3.0);
        let mut best = 0.0f64;
        for p in &pa {
            for q in &pb {
                best = best.max(dist2(p, q));
            }
        }
        let got = max_separation(&ps(pa), &ps(pb)).unwrap();
        assert_eq!(got.r_max.to_bits(), best.sqrt().to_bits());
    }

    #[test]
    fn coincident_sets_have_no_scale() {
        let a = ps(vec![[2.0, 2.0]]);
        assert!(matches!(max_separation(&a, &a), Err(Error::InvalidScale(_))));
    }

    #[test]
    fn separation_beyond_scale_errors() {
        let a = ps(vec![[0.0, 0.0]]);
        let b = ps(vec![[0.0, 2.0]]);
        let g = BinGrid::uniform(5).unwrap();
        let scale = SeparationScale::user(1.0).unwrap();
        for kernel in [cross_pair_counts, cross_pair_counts_accelerated] {
            let err = kernel(&a, &b, &g, &scale, PairKind::DataData).unwrap_err();
            assert!(matches!(err, Error::SeparationExceedsScale { .. }));
        }
    }

    #[test]
    fn accelerated_error_on_large_input_too() {
        let mut pts = uniform_points(77, 120, 1.0);
        pts.push([5.0, 5.0]);
        let a = ps(pts);
        let b = ps(uniform_points(78, 120, 1.0));
        let g = BinGrid::uniform(10).unwrap();
        let scale = SeparationScale::user(1.5).unwrap();
        let err = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::DataData).unwrap_err();
        assert!(matches!(err, Error::SeparationExceedsScale { .. }));
    }

    #[test]
    fn normalize_basic() {
        let g = BinGrid::uniform(3).unwrap();
        let h = PairCountHistogram::new_raw(
            g,
            vec![2.0, 0.0, 2.0],
            4,
            PairKind::DataData,
            ("a".into(), "b".into()),
        )
        .unwrap();
        let n = normalize_counts(&h).unwrap();
        assert_eq!(n.counts, vec![0.5, 0.0, 0.5]);
        assert!(n.normalized);
        assert!(matches!(normalize_counts(&n), Err(Error::AlreadyNormalized)));
    }

    #[test]
    fn normalize_zero_total_errors() {
        let a = ps(vec![[1.0, 1.0]]);
        let g = BinGrid::uniform(3).unwrap();
        let scale = SeparationScale::user(1.0).unwrap();
        let h = cross_pair_counts(&a, &a, &g, &scale, PairKind::RandomRandom).unwrap();
        assert_eq!(h.total_pairs, 0);
        assert!(matches!(normalize_counts(&h), Err(Error::ZeroTotalPairs)));
    }

    #[test]
    fn binner_thresholds_agree_with_reference_chain() {
        let g = BinGrid::uniform(13).unwrap();
        let r_max = 0.7317;
        let binner = D2Binner::new(&g, r_max);
        let mut rng = crate::seeding::rng_from_seed(99);
        for _ in 0..2000 {
            let d2: f64 = rng.random::<f64>() * r_max * r_max * 1.05;
            let reference = bin_of_d2(&g, r_max, d2);
            let fast = if d2 >= binner.exceed { None } else { Some(binner.count_le(d2)) };
            assert_eq!(fast, reference, "d2 = {d2:?}");
        }
        // The thresholds themselves are the exact switch points.
        for (i, &t) in binner.thr.iter().enumerate() {
            assert_eq!(bin_of_d2(&g, r_max, t), Some(i + 1));
            let below = f64::from_bits(t.to_bits() - 1);
            assert_eq!(bin_of_d2(&g, r_max, below), Some(i));
        }
        assert!(bin_of_d2(&g, r_max, binner.exceed).is_none());
        let below = f64::from_bits(binner.exceed.to_bits() - 1);
        assert!(bin_of_d2(&g, r_max, below).is_some());
    }

    #[test]
    fn accelerated_equals_naive_on_mixed_shapes() {
        for seed in 0..6u64 {
            let pa = if seed % 2 == 0 {
                uniform_points(seed, 230, 1.0)
            } else {
                clustered_points(seed, 230)
            };
            let pb = clustered_points(seed + 100, 180);
            let a = ps(pa);
            let b = ps(pb);
            let scale = max_separation(&a, &b).unwrap();
            for n_bins in [1usize, 3, 10, 37] {
                let g = BinGrid::uniform(n_bins).unwrap();
                let naive = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
                let accel = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::DataData).unwrap();
                assert_eq!(naive.counts, accel.counts, "seed {seed} bins {n_bins}");
                assert_eq!(naive.total_pairs, accel.total_pairs);
            }
        }
    }

    #[test]
    fn accelerated_equals_naive_self_mode() {
        let pts = clustered_points(7, 300);
        let a = ps(pts.clone());
        let b = ps(pts);
        let scale = max_separation(&a, &b).unwrap();
        let g = BinGrid::uniform(10).unwrap();
        let naive = cross_pair_counts(&a, &b, &g, &scale, PairKind::RandomRandom).unwrap();
        let accel = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::RandomRandom).unwrap();
        assert_eq!(naive.counts, accel.counts);
        assert_eq!(accel.total_pairs, 300 * 299 / 2);
    }

    #[test]
    fn degenerate_axis_still_equivalent() {
        let pts: Vec<[f64; 2]> = (0..150).map(|i| [0.5, i as f64 * 0.01]).collect();
        let a = ps(pts);
        let b = ps(uniform_points(5, 90, 1.5));
        let scale = max_separation(&a, &b).unwrap();
        let g = BinGrid::uniform(8).unwrap();
        let naive = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
        let accel = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::DataData).unwrap();
        assert_eq!(naive.counts, accel.counts);
    }

    #[test]
    fn repeated_identical_points_self_mode() {
        let pts = vec![[0.25, 0.25]; 120];
        let a = ps(pts.clone());
        let b = ps(pts);
        let g = BinGrid::uniform(4).unwrap();
        let scale = SeparationScale::user(1.0).unwrap();
        let naive = cross_pair_counts(&a, &b, &g, &scale, PairKind::RandomRandom).unwrap();
        let accel = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::RandomRandom).unwrap();
        assert_eq!(naive.counts[0], (120.0 * 119.0) / 2.0);
        assert_eq!(naive.counts, accel.counts);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn thread_count_does_not_change_counts() {
        let a = ps(clustered_points(42, 400));
        let b = ps(uniform_points(43, 350, 1.0));
        let scale = max_separation(&a, &b).unwrap();
        let g = BinGrid::uniform(10).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::DataData))
                .unwrap()
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(one.counts, eight.counts);
        assert_eq!(one.total_pairs, eight.total_pairs);
    }

    #[test]
    fn histogram_csv_roundtrips_counts() {
        let a = ps(uniform_points(3, 25, 1.0));
        let b = ps(uniform_points(4, 25, 1.0));
        let scale = max_separation(&a, &b).unwrap();
        let g = BinGrid::uniform(5).unwrap();
        let h = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 5);
        let total: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
        assert_eq!(total, 625.0);
        let norm_total: f64 = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
        assert!((norm_total - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn prop_accel_equals_naive(
            seed in 0u64..10_000,
            n_a in 1usize..200,
            n_b in 1usize..200,
            n_bins in 1usize..24,
            clustered in proptest::bool::ANY,
        ) {
            let pa = if clustered { clustered_points(seed, n_a) } else { uniform_points(seed, n_a, 1.0) };
            let pb = uniform_points(seed.wrapping_add(1), n_b, 1.0);
            let a = ps(pa);
            let b = ps(pb);
            let scale = match max_separation(&a, &b) {
                Ok(s) => s,
                Err(_) => return Ok(()), // all points coincide
            };
            let g = BinGrid::uniform(n_bins).unwrap();
            let naive = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
            let accel = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::DataData).unwrap();
            prop_assert_eq!(&naive.counts, &accel.counts);
            prop_assert_eq!(naive.total_pairs, accel.total_pairs);
        }

        #[test]
        fn prop_counts_conserved(
            seed in 0u64..10_000,
            n_a in 1usize..150,
            n_b in 1usize..150,
            n_bins in 1usize..16,
            self_mode in proptest::bool::ANY,
        ) {
            let pa = uniform_points(seed, n_a, 2.0);
            let a = ps(pa.clone());
            let b = if self_mode { ps(pa) } else { ps(uniform_points(seed + 7, n_b, 2.0)) };
            let scale = match max_separation(&a, &b) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let g = BinGrid::uniform(n_bins).unwrap();
            let h = cross_pair_counts_accelerated(&a, &b, &g, &scale, PairKind::DataData).unwrap();
            let sum: f64 = h.counts.iter().sum();
            prop_assert_eq!(sum, h.total_pairs as f64);
            let expect = if self_mode {
                (n_a * (n_a - 1) / 2) as u64
            } else {
                (n_a * n_b) as u64
            };
            prop_assert_eq!(h.total_pairs, expect);
        }

        #[test]
        fn prop_symmetry(seed in 0u64..10_000, n_a in 1usize..60, n_b in 1usize..60) {
            let a = ps(uniform_points(seed, n_a, 1.0));
            let b = ps(uniform_points(seed + 13, n_b, 1.0));
            let scale = match max_separation(&a, &b) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let g = BinGrid::uniform(9).unwrap();
            let ab = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
            let ba = cross_pair_counts(&b, &a, &g, &scale, PairKind::DataData).unwrap();
            prop_assert_eq!(ab.counts, ba.counts);
        }

        // Powers of two keep the coordinate scaling exact in floating
        // point, which is what makes the bitwise claim testable.
        #[test]
        fn prop_scale_invariance_pow2(seed in 0u64..10_000, exp in -8i32..9) {
            let lambda = (2.0f64).powi(exp);
            let pa = uniform_points(seed, 50, 1.0);
            let pb = uniform_points(seed + 5, 60, 1.0);
            let scale_up = |pts: &[[f64; 2]]| -> Vec<[f64; 2]> {
                pts.iter().map(|p| [p[0] * lambda, p[1] * lambda]).collect()
            };
            let a = ps(pa.clone());
            let b = ps(pb.clone());
            let scale = match max_separation(&a, &b) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            };
            let g = BinGrid::uniform(10).unwrap();
            let base = cross_pair_counts(&a, &b, &g, &scale, PairKind::DataData).unwrap();
            let a2 = ps(scale_up(&pa));
            let b2 = ps(scale_up(&pb));
            let scale2 = SeparationScale::user(scale.r_max * lambda).unwrap();
            let scaled = cross_pair_counts(&a2, &b2, &g, &scale2, PairKind::DataData).unwrap();
            prop_assert_eq!(base.counts, scaled.counts);
        }
    }
}
