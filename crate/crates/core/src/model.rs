//! Data model for cities, distances, GDP and per-class OD flows, plus
//! extraction of the eight flow features used as GDP predictors.
//!
//! Everything here is immutable once built and cheap to share between threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque, non-empty city identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityId(String);

impl CityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::InvalidArgument("city id must be non-empty".into()));
        }
        Ok(CityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CityId {
    /// Panics on an empty string; use [`CityId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        CityId::new(s).expect("empty city id")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleClass {
    #[serde(rename = "carbus")]
    CarsBuses,
    #[serde(rename = "truck")]
    Trucks,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 2] = [VehicleClass::CarsBuses, VehicleClass::Trucks];

    /// Label used in CSV files and report keys.
    pub fn label(self) -> &'static str {
        match self {
            VehicleClass::CarsBuses => "carbus",
            VehicleClass::Trucks => "truck",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "carbus" => Some(VehicleClass::CarsBuses),
            "truck" => Some(VehicleClass::Trucks),
            _ => None,
        }
    }

    /// One-letter suffix used in feature names (`I_C`, `I_K`, ...).
    pub fn suffix(self) -> char {
        match self {
            VehicleClass::CarsBuses => 'C',
            VehicleClass::Trucks => 'K',
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub vehicles: f64,
    /// Passengers for cars & buses, tonnes for trucks.
    pub payload: Option<f64>,
}

/// Directed OD volumes for one year and vehicle class. The diagonal holds intracity flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    pub year: i32,
    pub class: VehicleClass,
    entries: BTreeMap<(CityId, CityId), FlowEntry>,
}

impl FlowMatrix {
    pub fn new(year: i32, class: VehicleClass) -> Self {
        FlowMatrix {
            year,
            class,
            entries: BTreeMap::new(),
        }
    }

    /// Inserts or replaces a volume. Returns the previous entry if any.
    pub fn insert(
        &mut self,
        origin: CityId,
        destination: CityId,
        vehicles: f64,
        payload: Option<f64>,
    ) -> Option<FlowEntry> {
        self.entries
            .insert((origin, destination), FlowEntry { vehicles, payload })
    }

    pub fn set(&mut self, origin: &str, destination: &str, vehicles: f64) {
        self.insert(origin.into(), destination.into(), vehicles, None);
    }

    pub fn volume(&self, origin: &CityId, destination: &CityId) -> f64 {
        self.entries
            .get(&(origin.clone(), destination.clone()))
            .map_or(0.0, |e| e.vehicles)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CityId, &CityId, &FlowEntry)> {
        self.entries.iter().map(|((o, d), e)| (o, d, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every city mentioned as origin or destination, sorted.
    pub fn cities(&self) -> Vec<CityId> {
        let set: BTreeSet<&CityId> = self.entries.keys().flat_map(|(o, d)| [o, d]).collect();
        set.into_iter().cloned().collect()
    }

    /// Dense `n x n` matrix of vehicle volumes in the given city order; rows are origins.
    pub fn to_dense(&self, order: &[CityId]) -> DMatrix<f64> {
        let index: BTreeMap<&CityId, usize> = order.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let n = order.len();
        let mut m = DMatrix::zeros(n, n);
        for ((o, d), e) in &self.entries {
            if let (Some(&i), Some(&j)) = (index.get(o), index.get(d)) {
                m[(i, j)] = e.vehicles;
            }
        }
        m
    }

    /// Builds a matrix from a dense array; zero entries are skipped.
    pub fn from_dense(year: i32, class: VehicleClass, order: &[CityId], m: &DMatrix<f64>) -> Self {
        let mut fm = FlowMatrix::new(year, class);
        for (i, o) in order.iter().enumerate() {
            for (j, d) in order.iter().enumerate() {
                if m[(i, j)] != 0.0 {
                    fm.insert(o.clone(), d.clone(), m[(i, j)], None);
                }
            }
        }
        fm
    }

    /// Same flows multiplied by a constant factor.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in out.entries.values_mut() {
            e.vehicles *= factor;
        }
        out
    }
}

/// Pairwise road distances in kilometres.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistanceMatrix {
    entries: BTreeMap<(CityId, CityId), f64>,
}

impl DistanceMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the value for one direction only.
    pub fn insert(&mut self, a: CityId, b: CityId, km: f64) {
        self.entries.insert((a, b), km);
    }

    /// Stores the value for both directions.
    pub fn insert_symmetric(&mut self, a: CityId, b: CityId, km: f64) {
        self.entries.insert((b.clone(), a.clone()), km);
        self.entries.insert((a, b), km);
    }

    /// Distance between two cities, looking at either direction.
    pub fn get(&self, a: &CityId, b: &CityId) -> Option<f64> {
        self.entries
            .get(&(a.clone(), b.clone()))
            .or_else(|| self.entries.get(&(b.clone(), a.clone())))
            .copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CityId, &CityId, f64)> {
        self.entries.iter().map(|((a, b), d)| (a, b, *d))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same distances multiplied by a constant factor.
    pub fn scaled(&self, factor: f64) -> Self {
        DistanceMatrix {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub id: CityId,
    pub name: String,
    pub lon: Option<f64>,
    pub lat: Option<f64>,
}

impl City {
    pub fn new(id: &str) -> Self {
        City {
            id: id.into(),
            name: id.to_string(),
            lon: None,
            lat: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdpRecord {
    pub city: CityId,
    pub year: i32,
    /// Billion CNY.
    pub gdp: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegionDataset {
    pub cities: Vec<City>,
    pub gdp: Vec<GdpRecord>,
    pub distances: DistanceMatrix,
    pub flows: Vec<FlowMatrix>,
}

impl RegionDataset {
    pub fn city_ids(&self) -> Vec<CityId> {
        self.cities.iter().map(|c| c.id.clone()).collect()
    }

    pub fn city(&self, id: &CityId) -> Option<&City> {
        self.cities.iter().find(|c| &c.id == id)
    }

    pub fn flow(&self, year: i32, class: VehicleClass) -> Option<&FlowMatrix> {
        self.flows.iter().find(|f| f.year == year && f.class == class)
    }

    pub fn flow_years(&self) -> BTreeSet<i32> {
        self.flows.iter().map(|f| f.year).collect()
    }

    pub fn gdp_years(&self) -> BTreeSet<i32> {
        self.gdp.iter().map(|g| g.year).collect()
    }

    pub fn gdp_of(&self, city: &CityId, year: i32) -> Option<f64> {
        self.gdp
            .iter()
            .find(|g| &g.city == city && g.year == year)
            .map(|g| g.gdp)
    }
}

/// The eight predictor names, in regression column order.
pub const FEATURE_NAMES: [&str; 8] = ["I_C", "O_C", "N_C", "R_C", "I_K", "O_K", "N_K", "R_K"];

/// Per-class flow totals for one city.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatures {
    pub incoming: f64,
    pub outgoing: f64,
    pub intracity: f64,
    /// `incoming / outgoing`; `None` when outgoing is zero.
    pub ratio: Option<f64>,
}

impl ClassFeatures {
    fn from_sums(incoming: f64, outgoing: f64, intracity: f64) -> Self {
        ClassFeatures {
            incoming,
            outgoing,
            intracity,
            ratio: (outgoing > 0.0).then(|| incoming / outgoing),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub city: CityId,
    pub year: i32,
    pub cars: ClassFeatures,
    pub trucks: ClassFeatures,
}

impl FeatureRow {
    /// True when either ratio is undefined; such rows are excluded from regression.
    pub fn flagged(&self) -> bool {
        self.cars.ratio.is_none() || self.trucks.ratio.is_none()
    }

    /// Values in [`FEATURE_NAMES`] order, or `None` for a flagged row.
    pub fn values(&self) -> Option<[f64; 8]> {
        let c = &self.cars;
        let k = &self.trucks;
        Some([
            c.incoming,
            c.outgoing,
            c.intracity,
            c.ratio?,
            k.incoming,
            k.outgoing,
            k.intracity,
            k.ratio?,
        ])
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn get(&self, city: &CityId, year: i32) -> Option<&FeatureRow> {
        self.rows.iter().find(|r| &r.city == city && r.year == year)
    }

    pub fn extend(&mut self, other: FeatureTable) {
        self.rows.extend(other.rows);
    }

    pub fn flagged(&self) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(|r| r.flagged())
    }
}

fn class_features(flows: &FlowMatrix, cities: &[CityId]) -> Vec<ClassFeatures> {
    let index: BTreeMap<&CityId, usize> = cities.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let n = cities.len();
    let (mut inc, mut out, mut intra) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for (o, d, e) in flows.entries() {
        let (Some(&i), Some(&j)) = (index.get(o), index.get(d)) else {
            continue;
        };
        if i == j {
            intra[i] += e.vehicles;
        } else {
            out[i] += e.vehicles;
            inc[j] += e.vehicles;
        }
    }
    (0..n)
        .map(|i| ClassFeatures::from_sums(inc[i], out[i], intra[i]))
        .collect()
}

/// Incoming, outgoing, intracity flow and in/out ratio for every city and both classes.
pub fn extract_features(dataset: &RegionDataset, year: i32) -> Result<FeatureTable> {
    let cars = dataset
        .flow(year, VehicleClass::CarsBuses)
        .ok_or(Error::NoSuchYear(year))?;
    let trucks = dataset
        .flow(year, VehicleClass::Trucks)
        .ok_or(Error::NoSuchYear(year))?;
    let ids = dataset.city_ids();
    let c = class_features(cars, &ids);
    let k = class_features(trucks, &ids);
    let rows = ids
        .into_iter()
        .zip(c.into_iter().zip(k))
        .map(|(city, (cars, trucks))| FeatureRow {
            city,
            year,
            cars,
            trucks,
        })
        .collect();
    Ok(FeatureTable { rows })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyCityId,
    DuplicateCity,
    UnknownCity,
    NegativeVolume,
    NegativePayload,
    NonFiniteValue,
    AsymmetricDistance,
    NonPositiveDistance,
    NonZeroDiagonalDistance,
    NonPositiveGdp,
    DuplicateGdp,
    DuplicateFlowMatrix,
    NoOverlappingYear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub message: String,
}

/// A row whose in/out ratio is undefined because outgoing flow is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndefinedRatio {
    pub city: CityId,
    pub year: i32,
    pub class: VehicleClass,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Not violations: these rows are only dropped from regression.
    pub undefined_ratios: Vec<UndefinedRatio>,
}

impl ValidationReport {
    pub fn is_well_formed(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            location: location.into(),
            message: message.into(),
        });
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{}: {}", v.location, v.message))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

const SYMMETRY_RTOL: f64 = 1e-9;

/// Lists every invariant violation. An empty violation list means the dataset is well-formed.
pub fn validate(dataset: &RegionDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut known = BTreeSet::new();
    for (i, city) in dataset.cities.iter().enumerate() {
        if city.id.as_str().trim().is_empty() {
            report.push(ViolationKind::EmptyCityId, format!("cities[{i}]"), "empty city id");
        }
        if !known.insert(&city.id) {
            report.push(
                ViolationKind::DuplicateCity,
                format!("cities[{i}]"),
                format!("duplicate city id `{}`", city.id),
            );
        }
    }

    let check_city = |report: &mut ValidationReport, id: &CityId, loc: &str| {
        if !known.contains(id) {
            report.push(
                ViolationKind::UnknownCity,
                loc.to_string(),
                format!("unknown city `{id}`"),
            );
        }
    };

    let mut seen_gdp = BTreeSet::new();
    for (i, g) in dataset.gdp.iter().enumerate() {
        let loc = format!("gdp[{i}]");
        check_city(&mut report, &g.city, &loc);
        if !g.gdp.is_finite() {
            report.push(ViolationKind::NonFiniteValue, &loc, "gdp is not finite");
        } else if g.gdp <= 0.0 {
            report.push(ViolationKind::NonPositiveGdp, &loc, format!("gdp {} is not positive", g.gdp));
        }
        if !seen_gdp.insert((&g.city, g.year)) {
            report.push(
                ViolationKind::DuplicateGdp,
                &loc,
                format!("duplicate gdp for ({}, {})", g.city, g.year),
            );
        }
    }

    for (a, b, km) in dataset.distances.entries() {
        let loc = format!("distance({a},{b})");
        check_city(&mut report, a, &loc);
        check_city(&mut report, b, &loc);
        if !km.is_finite() {
            report.push(ViolationKind::NonFiniteValue, &loc, "distance is not finite");
            continue;
        }
        if a == b {
            if km != 0.0 {
                report.push(ViolationKind::NonZeroDiagonalDistance, &loc, format!("diagonal distance {km} is not zero"));
            }
            continue;
        }
        if km <= 0.0 {
            report.push(ViolationKind::NonPositiveDistance, &loc, format!("distance {km} is not positive"));
        }
        // Report each asymmetric pair once.
        if a < b {
            if let Some(back) = dataset
                .distances
                .entries
                .get(&(b.clone(), a.clone()))
                .copied()
            {
                if (km - back).abs() > SYMMETRY_RTOL * km.abs().max(back.abs()) {
                    report.push(
                        ViolationKind::AsymmetricDistance,
                        &loc,
                        format!("{a}->{b} = {km} but {b}->{a} = {back}"),
                    );
                }
            }
        }
    }

    let mut seen_matrix = BTreeSet::new();
    for fm in &dataset.flows {
        if !seen_matrix.insert((fm.year, fm.class)) {
            report.push(
                ViolationKind::DuplicateFlowMatrix,
                format!("flows[{} {}]", fm.year, fm.class),
                "more than one matrix for this year and class",
            );
        }
        for (o, d, e) in fm.entries() {
            let loc = format!("flows[{} {}]({o}->{d})", fm.year, fm.class);
            check_city(&mut report, o, &loc);
            check_city(&mut report, d, &loc);
            if !e.vehicles.is_finite() {
                report.push(ViolationKind::NonFiniteValue, &loc, "volume is not finite");
            } else if e.vehicles < 0.0 {
                report.push(ViolationKind::NegativeVolume, &loc, format!("negative volume {}", e.vehicles));
            }
            if let Some(p) = e.payload {
                if !(p >= 0.0) {
                    report.push(ViolationKind::NegativePayload, &loc, format!("invalid payload {p}"));
                }
            }
        }
    }

    let flow_years = dataset.flow_years();
    let gdp_years = dataset.gdp_years();
    if !flow_years.is_empty() && !gdp_years.is_empty() && flow_years.is_disjoint(&gdp_years) {
        report.push(
            ViolationKind::NoOverlappingYear,
            "dataset",
            "flow years and gdp years do not overlap",
        );
    }

    for &year in &flow_years {
        if let Ok(table) = extract_features(dataset, year) {
            for row in &table.rows {
                for (class, f) in [(VehicleClass::CarsBuses, &row.cars), (VehicleClass::Trucks, &row.trucks)] {
                    if f.ratio.is_none() {
                        report.undefined_ratios.push(UndefinedRatio {
                            city: row.city.clone(),
                            year,
                            class,
                        });
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_city() -> RegionDataset {
        let mut cars = FlowMatrix::new(2015, VehicleClass::CarsBuses);
        cars.set("A", "B", 10.0);
        cars.set("B", "A", 4.0);
        cars.set("A", "A", 7.0);
        let mut trucks = FlowMatrix::new(2015, VehicleClass::Trucks);
        trucks.set("A", "B", 1.0);
        trucks.set("B", "A", 2.0);
        let mut distances = DistanceMatrix::new();
        distances.insert_symmetric("A".into(), "B".into(), 50.0);
        RegionDataset {
            cities: vec![City::new("A"), City::new("B")],
            gdp: vec![],
            distances,
            flows: vec![cars, trucks],
        }
    }

    #[test]
    fn two_city_features() {
        let t = extract_features(&two_city(), 2015).unwrap();
        let a = t.get(&"A".into(), 2015).unwrap();
        assert_eq!(a.cars.incoming, 4.0);
        assert_eq!(a.cars.outgoing, 10.0);
        assert_eq!(a.cars.intracity, 7.0);
        assert_eq!(a.cars.ratio, Some(0.4));
        let b = t.get(&"B".into(), 2015).unwrap();
        assert_eq!(b.trucks.ratio, Some(0.5));
        assert!(!a.flagged());
    }

    #[test]
    fn all_zero_flows_flag_ratio() {
        let mut ds = two_city();
        for fm in &mut ds.flows {
            *fm = fm.scaled(0.0);
        }
        let t = extract_features(&ds, 2015).unwrap();
        for row in &t.rows {
            assert_eq!(row.cars.incoming, 0.0);
            assert_eq!(row.cars.outgoing, 0.0);
            assert_eq!(row.cars.intracity, 0.0);
            assert!(row.flagged());
            assert!(row.values().is_none());
        }
        assert_eq!(validate(&ds).undefined_ratios.len(), 4);
    }

    #[test]
    fn missing_year() {
        assert!(matches!(
            extract_features(&two_city(), 1999),
            Err(Error::NoSuchYear(1999))
        ));
    }

    #[test]
    fn well_formed_has_empty_report() {
        let mut ds = two_city();
        ds.cities.push(City::new("C"));
        ds.distances.insert_symmetric("A".into(), "C".into(), 20.0);
        ds.distances.insert_symmetric("B".into(), "C".into(), 40.0);
        let r = validate(&ds);
        assert!(r.is_well_formed(), "{}", r.summary());
    }

    #[test]
    fn asymmetric_distance_reported() {
        let mut ds = two_city();
        ds.distances.insert("A".into(), "B".into(), 50.0);
        ds.distances.insert("B".into(), "A".into(), 60.0);
        let r = validate(&ds);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::AsymmetricDistance);
    }

    #[test]
    fn unknown_city_reported() {
        let mut ds = two_city();
        ds.flows[0].set("A", "Z", 3.0);
        let r = validate(&ds);
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::UnknownCity && v.message.contains("`Z`")));
    }

    #[test]
    fn negative_volume_reported() {
        let mut ds = two_city();
        ds.flows[1].set("B", "A", -1.0);
        let r = validate(&ds);
        assert_eq!(r.violations[0].kind, ViolationKind::NegativeVolume);
    }

    #[test]
    fn empty_city_id_rejected() {
        assert!(CityId::new("  ").is_err());
    }
}
