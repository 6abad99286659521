//! Synthetic catalogs for tests, benchmarks, and demos.

use rand::Rng;

use crate::catalog::{Catalog, GalaxyRecord};
use crate::seeding::rng_from_seed;

/// A catalog of `n` records with mass, size (and optionally redshift) drawn
/// independently uniform over the given ranges.
pub fn uniform_catalog(
    label: &str,
    n: usize,
    seed: u64,
    mass_range: (f64, f64),
    size_range: (f64, f64),
    z_range: Option<(f64, f64)>,
) -> Catalog {
    assert!(size_range.0 > 0.0, "sizes must stay positive");
    let mut rng = rng_from_seed(seed);
    let mut span = |r: (f64, f64)| r.0 + (r.1 - r.0) * rng.random::<f64>();
    let records: Vec<GalaxyRecord> = (0..n)
        .map(|_| GalaxyRecord {
            mass: span(mass_range),
            size: span(size_range),
            redshift: z_range.map(&mut span),
            source: label.to_string(),
            component: None,
        })
        .collect();
    Catalog::new(label, records).expect("synthetic records are valid by construction")
}

/// A pair of catalogs where every record of `b` is a small jitter of the
/// matching record of `a`: maximal small-separation correlation.
pub fn jittered_pair(
    label_a: &str,
    label_b: &str,
    n: usize,
    seed: u64,
    jitter: f64,
    mass_range: (f64, f64),
    size_range: (f64, f64),
) -> (Catalog, Catalog) {
    assert!(size_range.0 > jitter, "jitter must not push sizes to zero");
    let a = uniform_catalog(label_a, n, seed, mass_range, size_range, None);
    let mut rng = rng_from_seed(seed.wrapping_add(0x9e37));
    let records_b: Vec<GalaxyRecord> = a
        .records()
        .iter()
        .map(|r| {
            // Offset radius jitter * u^2 concentrates partners at small
            // separations, so the induced correlation falls off steeply
            // with distance instead of being flat across the jitter disc.
            let u: f64 = rng.random();
            let radius = jitter * u * u;
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            GalaxyRecord {
                mass: r.mass + radius * angle.cos(),
                size: r.size + radius * angle.sin(),
                redshift: None,
                source: label_b.to_string(),
                component: None,
            }
        })
        .collect();
    let b = Catalog::new(label_b, records_b).expect("jittered records stay valid");
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_catalog_respects_ranges() {
        let c = uniform_catalog("u", 500, 1, (9.0, 11.0), (0.5, 8.0), Some((0.2, 2.7)));
        assert_eq!(c.len(), 500);
        for r in c.records() {
            assert!((9.0..=11.0).contains(&r.mass));
            assert!((0.5..=8.0).contains(&r.size));
            let z = r.redshift.unwrap();
            assert!((0.2..=2.7).contains(&z));
        }
    }

    #[test]
    fn jittered_pair_is_close() {
        let (a, b) = jittered_pair("a", "b", 200, 3, 0.01, (0.0, 1.0), (0.1, 1.1));
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.records().iter().zip(b.records()) {
            assert!((ra.mass - rb.mass).abs() <= 0.01);
            assert!((ra.size - rb.size).abs() <= 0.01);
        }
    }

    #[test]
    fn deterministic() {
        let c1 = uniform_catalog("u", 50, 9, (9.0, 11.0), (0.5, 8.0), None);
        let c2 = uniform_catalog("u", 50, 9, (9.0, 11.0), (0.5, 8.0), None);
        assert_eq!(c1.records(), c2.records());
    }
}
