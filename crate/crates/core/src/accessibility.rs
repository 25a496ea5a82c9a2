//! Zone-level traffic generation potential.
//!
//! Two distance-decay forms are provided: the gravity potential
//! `ρᴳᵢ = (1/n)·mᵢ·Σⱼ mⱼ / dᵢⱼ^α`, where the zone's own term uses the
//! intra-zonal distance `√(Aᵢ/π)`, and the negative exponential potential
//! `ρᴱᵢ = Σⱼ mⱼ·exp(−α·dᵢⱼ)` with `dᵢᵢ = 0`. Distances are used in whatever
//! unit the centroids are given in.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, FeatureTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Decay exponents used for the density feature group.
pub const DEFAULT_ALPHAS: [f64; 3] = [1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone<T> {
    pub id: String,
    pub x: T,
    pub y: T,
    /// Population, employment or any other non-negative mass.
    pub mass: T,
    pub area: T,
}

impl<T: Scalar> Zone<T> {
    pub fn new(id: impl Into<String>, x: T, y: T, mass: T, area: T) -> Result<Self> {
        let zone = Self {
            id: id.into(),
            x,
            y,
            mass,
            area,
        };
        zone.validate()?;
        Ok(zone)
    }

    fn validate(&self) -> Result<()> {
        if !(self.area > T::zero()) {
            return Err(Error::invalid(format!("zone {}: area must be > 0", self.id)));
        }
        if self.mass < T::zero() {
            return Err(Error::invalid(format!("zone {}: mass must be >= 0", self.id)));
        }
        Ok(())
    }

    /// Effective internal distance `√(area/π)`.
    pub fn intra_zonal_distance(&self) -> T {
        (self.area / T::lit(std::f64::consts::PI)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Gravity,
    Exponential,
}

impl MetricKind {
    fn tag(self) -> &'static str {
        match self {
            MetricKind::Gravity => "rhoG",
            MetricKind::Exponential => "rhoE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilityVector<T> {
    pub kind: MetricKind,
    pub alpha: T,
    pub zone_ids: Vec<String>,
    pub potentials: Vec<T>,
}

impl<T: Scalar> AccessibilityVector<T> {
    pub fn get(&self, zone_id: &str) -> Option<T> {
        self.zone_ids
            .iter()
            .position(|z| z == zone_id)
            .map(|i| self.potentials[i])
    }

    /// Feature column name, e.g. `rhoG_a1.5`.
    pub fn column_name(&self) -> String {
        column_name(self.kind, self.alpha.as_f64())
    }
}

pub fn column_name(kind: MetricKind, alpha: f64) -> String {
    format!("{}_a{:.1}", kind.tag(), alpha)
}

/// Euclidean distance between centroids; for the same zone, the intra-zonal
/// distance.
pub fn pairwise_distance<T: Scalar>(a: &Zone<T>, b: &Zone<T>) -> T {
    if a.id == b.id {
        return a.intra_zonal_distance();
    }
    (a.x - b.x).hypot(a.y - b.y)
}

fn check_inputs<T: Scalar>(zones: &[Zone<T>], alpha: T) -> Result<()> {
    if !(alpha > T::zero()) {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    zones.iter().try_for_each(Zone::validate)
}

pub fn gravity_potential<T: Scalar>(zones: &[Zone<T>], alpha: T) -> Result<AccessibilityVector<T>> {
    check_inputs(zones, alpha)?;
    let n = T::from_usize_lossy(zones.len());
    let potentials = zones
        .par_iter()
        .map(|zi| {
            let s: T = zones
                .iter()
                .map(|zj| zj.mass / pairwise_distance(zi, zj).powf(alpha))
                .sum();
            zi.mass * s / n
        })
        .collect();
    Ok(AccessibilityVector {
        kind: MetricKind::Gravity,
        alpha,
        zone_ids: zones.iter().map(|z| z.id.clone()).collect(),
        potentials,
    })
}

pub fn exponential_potential<T: Scalar>(zones: &[Zone<T>], alpha: T) -> Result<AccessibilityVector<T>> {
    check_inputs(zones, alpha)?;
    let potentials = zones
        .par_iter()
        .map(|zi| {
            zones
                .iter()
                .map(|zj| {
                    let d = if zi.id == zj.id {
                        T::zero()
                    } else {
                        pairwise_distance(zi, zj)
                    };
                    zj.mass * (-alpha * d).exp()
                })
                .sum()
        })
        .collect();
    Ok(AccessibilityVector {
        kind: MetricKind::Exponential,
        alpha,
        zone_ids: zones.iter().map(|z| z.id.clone()).collect(),
        potentials,
    })
}

pub fn potential<T: Scalar>(kind: MetricKind, zones: &[Zone<T>], alpha: T) -> Result<AccessibilityVector<T>> {
    match kind {
        MetricKind::Gravity => gravity_potential(zones, alpha),
        MetricKind::Exponential => exponential_potential(zones, alpha),
    }
}

/// Reads zones from CSV with header `id,x,y,mass,area`.
pub fn read_zones<T: Scalar, R: Read>(reader: R) -> Result<Vec<Zone<T>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut zones = Vec::new();
    for rec in rdr.deserialize::<Zone<T>>() {
        let z = rec?;
        z.validate()?;
        zones.push(z);
    }
    Ok(zones)
}

pub fn load_zones<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Zone<T>>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_zones(std::io::BufReader::new(f))
}

/// Index of the zone whose centroid is nearest to each point (first on ties).
pub fn nearest_zone<T: Scalar>(points: &[(T, T)], zones: &[Zone<T>]) -> Result<Vec<usize>> {
    if zones.is_empty() {
        return Err(Error::invalid("no zones"));
    }
    Ok(points
        .iter()
        .map(|&(x, y)| {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (k, z) in zones.iter().enumerate() {
                let d = (z.x - x).hypot(z.y - y);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Appends one feature column per (kind, alpha) holding the potential of the
/// zone nearest to each row. Column names are `rhoG_a{α}{suffix}` /
/// `rhoE_a{α}{suffix}`.
pub fn append_potential_columns<T: Scalar>(
    table: &mut FeatureTable<T>,
    zones: &[Zone<T>],
    kinds: &[MetricKind],
    alphas: &[T],
    suffix: &str,
) -> Result<Vec<String>> {
    let coords = table
        .coords()
        .ok_or_else(|| Error::invalid("table has no complete coordinate columns"))?;
    let assignment = nearest_zone(&coords, zones)?;
    let mut names = Vec::new();
    for &kind in kinds {
        for &alpha in alphas {
            let v = potential(kind, zones, alpha)?;
            let name = format!("{}{}", v.column_name(), suffix);
            let values = assignment.iter().map(|&k| v.potentials[k]).collect();
            table.set_column(Column::complete(name.clone(), values))?;
            names.push(name);
        }
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zone(id: &str, x: f64, y: f64, mass: f64, area: f64) -> Zone<f64> {
        Zone::new(id, x, y, mass, area).unwrap()
    }

    #[test]
    fn distance_three_four_five() {
        assert_eq!(pairwise_distance(&zone("a", 0., 0., 1., 1.), &zone("b", 3., 4., 1., 1.)), 5.0);
    }

    #[test]
    fn intra_zonal_distance() {
        let a = zone("a", 0., 0., 1., PI);
        assert!((pairwise_distance(&a, &a) - 1.0).abs() < 1e-15);
        let b = zone("b", 0., 0., 1., 4.0 * PI);
        assert!((pairwise_distance(&b, &b) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gravity_single_zone() {
        let v = gravity_potential(&[zone("a", 0., 0., 2., PI)], 1.0).unwrap();
        assert!((v.potentials[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_zero_mass_zone() {
        let zs = [zone("a", 0., 0., 0., 1.), zone("b", 1., 0., 5., 1.)];
        assert_eq!(gravity_potential(&zs, 1.5).unwrap().potentials[0], 0.0);
    }

    #[test]
    fn gravity_symmetric_pair() {
        let zs = [zone("a", -1., 0., 3., 2.), zone("b", 1., 0., 3., 2.)];
        let v = gravity_potential(&zs, 2.0).unwrap();
        assert_eq!(v.potentials[0], v.potentials[1]);
    }

    #[test]
    fn exponential_single_zone() {
        for alpha in [0.1, 1.0, 7.0] {
            let v = exponential_potential(&[zone("a", 5., 5., 7., 3.)], alpha).unwrap();
            assert_eq!(v.potentials[0], 7.0);
        }
    }

    #[test]
    fn exponential_pair() {
        let (d, alpha) = (2.5, 0.7);
        let zs = [zone("a", 0., 0., 1., 1.), zone("b", d, 0., 1., 1.)];
        let v = exponential_potential(&zs, alpha).unwrap();
        let expected = 1.0 + (-alpha * d).exp();
        for p in v.potentials {
            assert!((p - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_large_alpha_limit() {
        let zs = [zone("a", 0., 0., 4., 1.), zone("b", 10., 0., 9., 1.)];
        let v = exponential_potential(&zs, 500.0).unwrap();
        assert_eq!(v.potentials, vec![4.0, 9.0]);
    }

    #[test]
    fn non_positive_alpha_rejected() {
        let zs = [zone("a", 0., 0., 1., 1.)];
        assert!(gravity_potential(&zs, 0.0).is_err());
        assert!(exponential_potential(&zs, -1.0).is_err());
    }

    #[test]
    fn invalid_zone_rejected() {
        assert!(Zone::new("z", 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(Zone::new("z", 0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn column_names() {
        assert_eq!(column_name(MetricKind::Gravity, 1.5), "rhoG_a1.5");
        assert_eq!(column_name(MetricKind::Exponential, 2.0), "rhoE_a2.0");
    }

    #[test]
    fn zones_from_csv() {
        let zs: Vec<Zone<f64>> = read_zones("id,x,y,mass,area\nA,0,0,10,2\nB,3,4,5,1\n".as_bytes()).unwrap();
        assert_eq!(zs.len(), 2);
        assert_eq!(zs[1].id, "B");
        assert!(read_zones::<f64, _>("id,x,y,mass,area\nA,0,0,10,0\n".as_bytes()).is_err());
    }
}
