//! Uniform random comparison catalogs.
//!
//! Random baselines are drawn per axis from a uniform distribution over the
//! observed range of a source point set. Generation is a pure function of
//! the [`RandomSpec`]: fixed seed, fixed output, regardless of where or when
//! it runs.

use rand::distr::{Distribution, Uniform};
use serde::Serialize;

use crate::catalog::PointSet;
use crate::error::{Error, Result};
use crate::seeding::{rng_from_seed, GENERATOR_ID};

/// What to generate: point count, stream seed, and per-axis ranges
/// (defaulting to the source's observed ranges when `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub n_points: usize,
    pub seed: u64,
    pub ranges: Option<[(f64, f64); 2]>,
}

impl RandomSpec {
    pub fn new(n_points: usize, seed: u64) -> Self {
        RandomSpec {
            n_points,
            seed,
            ranges: None,
        }
    }
}

/// Metadata sidecar describing one generated random set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomMeta {
    pub schema_version: u32,
    pub seed: u64,
    pub n_points: usize,
    pub ranges: [(f64, f64); 2],
    pub generator: &'static str,
    pub source: String,
}

/// Draws `spec.n_points` points, each axis independently uniform over its
/// range. A degenerate range (min == max) is allowed and produces a
/// constant axis, with a warning.
pub fn generate_randoms(source: &PointSet, spec: &RandomSpec) -> Result<(PointSet, RandomMeta)> {
    if spec.n_points == 0 {
        return Err(Error::Invalid("random spec needs n_points >= 1".into()));
    }
    let ranges = spec.ranges.unwrap_or_else(|| source.bounds());
    for (axis, &(lo, hi)) in ranges.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
            return Err(Error::Invalid(format!(
                "axis {axis} range [{lo}, {hi}] is invalid"
            )));
        }
        if hi == lo {
            log::warn!("axis {axis} range is degenerate at {lo}; generating a constant axis");
        }
    }

    let mut rng = rng_from_seed(spec.seed);
    let dist_x = Uniform::new_inclusive(ranges[0].0, ranges[0].1)
        .map_err(|e| Error::Invalid(format!("axis 0 distribution: {e}")))?;
    let dist_y = Uniform::new_inclusive(ranges[1].0, ranges[1].1)
        .map_err(|e| Error::Invalid(format!("axis 1 distribution: {e}")))?;
    let points: Vec<[f64; 2]> = (0..spec.n_points)
        .map(|_| [dist_x.sample(&mut rng), dist_y.sample(&mut rng)])
        .collect();

    let provenance = format!(
        "randoms(seed={},n={},from={})",
        spec.seed,
        spec.n_points,
        source.provenance()
    );
    let meta = RandomMeta {
        schema_version: crate::SCHEMA_VERSION,
        seed: spec.seed,
        n_points: spec.n_points,
        ranges,
        generator: GENERATOR_ID,
        source: source.provenance().to_string(),
    };
    Ok((PointSet::new(provenance, points)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_source() -> PointSet {
        PointSet::new("src", vec![[0.0, 0.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn deterministic_and_contained() {
        let src = unit_square_source();
        let spec = RandomSpec::new(1000, 42);
        let (a, meta) = generate_randoms(&src, &spec).unwrap();
        let (b, _) = generate_randoms(&src, &spec).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(meta.generator, "chacha8");
        for p in a.points() {
            assert!((0.0..=1.0).contains(&p[0]));
            assert!((0.0..=1.0).contains(&p[1]));
        }
    }

    #[test]
    fn degenerate_axis_is_constant() {
        let src = unit_square_source();
        let spec = RandomSpec {
            n_points: 50,
            seed: 7,
            ranges: Some([(5.0, 5.0), (0.0, 1.0)]),
        };
        let (out, meta) = generate_randoms(&src, &spec).unwrap();
        assert!(out.points().iter().all(|p| p[0] == 5.0));
        assert_eq!(meta.ranges[0], (5.0, 5.0));
    }

    #[test]
    fn neighboring_seeds_differ() {
        let src = unit_square_source();
        let (a, _) = generate_randoms(&src, &RandomSpec::new(200, 9)).unwrap();
        let (b, _) = generate_randoms(&src, &RandomSpec::new(200, 10)).unwrap();
        assert_ne!(a.points(), b.points());
    }

    #[test]
    fn ranges_default_to_source_bounds() {
        let src = PointSet::new("src", vec![[2.0, -1.0], [4.0, 3.0]]).unwrap();
        let (out, meta) = generate_randoms(&src, &RandomSpec::new(300, 3)).unwrap();
        assert_eq!(meta.ranges, [(2.0, 4.0), (-1.0, 3.0)]);
        for p in out.points() {
            assert!((2.0..=4.0).contains(&p[0]));
            assert!((-1.0..=3.0).contains(&p[1]));
        }
    }

    #[test]
    fn large_sample_moments() {
        let src = unit_square_source();
        let (out, _) = generate_randoms(&src, &RandomSpec::new(100_000, 12345)).unwrap();
        for axis in 0..2 {
            let n = out.len() as f64;
            let mean: f64 = out.points().iter().map(|p| p[axis]).sum::<f64>() / n;
            let var: f64 = out
                .points()
                .iter()
                .map(|p| (p[axis] - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!((mean - 0.5).abs() < 0.01, "axis {axis} mean {mean}");
            assert!((var - 1.0 / 12.0).abs() < 0.01, "axis {axis} var {var}");
        }
    }

    #[test]
    fn zero_points_rejected() {
        let src = unit_square_source();
        assert!(generate_randoms(&src, &RandomSpec::new(0, 1)).is_err());
    }
}
