//! Reading and writing the four dataset CSV files.
//!
//! | file | columns |
//! |------|---------|
//! | `cities.csv` | `city_id,name[,lon,lat]` |
//! | `gdp.csv` | `city_id,year,gdp_billion_cny` |
//! | `distances.csv` | `origin,dest,km` (one direction is enough) |
//! | `flows.csv` | `year,vehicle_class,origin,dest,vehicles[,payload]` |
//!
//! Row numbers in errors are 1-based file lines, so the header is line 1.

mod export;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};
use crate::model::{validate, City, CityId, DistanceMatrix, FlowMatrix, GdpRecord, RegionDataset, VehicleClass};
use crate::report::write_atomic;

pub use export::{subnetwork_dot, subnetwork_geojson};
pub use synth::{synth_dataset, GroundTruth, SynthOptions};

pub const CITIES_FILE: &str = "cities.csv";
pub const GDP_FILE: &str = "gdp.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const FLOWS_FILE: &str = "flows.csv";

/// Locations of the four input files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub cities: PathBuf,
    pub flows: PathBuf,
    pub distances: PathBuf,
    pub gdp: PathBuf,
}

impl DatasetPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            cities: dir.join(CITIES_FILE),
            flows: dir.join(FLOWS_FILE),
            distances: dir.join(DISTANCES_FILE),
            gdp: dir.join(GDP_FILE),
        }
    }
}

struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<(usize, StringRecord)>,
}

impl Table {
    fn read(path: &Path, accepted: &[&[&str]]) -> Result<Table> {
        let file = path.display().to_string();
        let mut reader = ReaderBuilder::new()
            .has_headers(true)
            .trim(Trim::All)
            .from_reader(File::open(path)?);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if !accepted.iter().any(|cols| cols.iter().copied().eq(header.iter().map(String::as_str))) {
            return Err(Error::Schema {
                file,
                expected: accepted
                    .last()
                    .map(|cols| cols.iter().map(|s| s.to_string()).collect())
                    .unwrap_or_default(),
                found: header,
            });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            rows.push((line, record));
        }
        Ok(Table { file, header, rows })
    }

    fn has(&self, column: &str) -> bool {
        self.header.iter().any(|h| h == column)
    }

    fn error(&self, row: usize, column: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn text<'r>(&self, record: &'r StringRecord, column: &str) -> &'r str {
        let idx = self.header.iter().position(|h| h == column).expect("column checked by schema");
        record.get(idx).unwrap_or("")
    }

    fn number(&self, row: usize, record: &StringRecord, column: &str) -> Result<f64> {
        let raw = self.text(record, column);
        let v: f64 = raw
            .parse()
            .map_err(|_| self.error(row, column, format!("`{raw}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.error(row, column, format!("`{raw}` is not finite")));
        }
        Ok(v)
    }

    fn non_negative(&self, row: usize, record: &StringRecord, column: &str) -> Result<f64> {
        let v = self.number(row, record, column)?;
        if v < 0.0 {
            return Err(self.error(row, column, format!("{v} is negative")));
        }
        Ok(v)
    }

    fn optional_number(&self, row: usize, record: &StringRecord, column: &str) -> Result<Option<f64>> {
        if !self.has(column) || self.text(record, column).is_empty() {
            return Ok(None);
        }
        self.number(row, record, column).map(Some)
    }

    fn year(&self, row: usize, record: &StringRecord, column: &str) -> Result<i32> {
        let raw = self.text(record, column);
        raw.parse()
            .map_err(|_| self.error(row, column, format!("`{raw}` is not a year")))
    }

    fn city(&self, row: usize, record: &StringRecord, column: &str, known: &BTreeSet<CityId>) -> Result<CityId> {
        let id = CityId::new(self.text(record, column)).map_err(|_| self.error(row, column, "empty city id"))?;
        if !known.contains(&id) {
            return Err(self.error(row, column, format!("unknown city `{id}`")));
        }
        Ok(id)
    }
}

fn read_cities(path: &Path) -> Result<Vec<City>> {
    let t = Table::read(path, &[&["city_id", "name"], &["city_id", "name", "lon", "lat"]])?;
    let mut cities = Vec::new();
    for (row, rec) in &t.rows {
        let id = CityId::new(t.text(rec, "city_id")).map_err(|_| t.error(*row, "city_id", "empty city id"))?;
        if cities.iter().any(|c: &City| c.id == id) {
            return Err(t.error(*row, "city_id", format!("duplicate city `{id}`")));
        }
        cities.push(City {
            id,
            name: t.text(rec, "name").to_string(),
            lon: t.optional_number(*row, rec, "lon")?,
            lat: t.optional_number(*row, rec, "lat")?,
        });
    }
    Ok(cities)
}

fn read_gdp(path: &Path, known: &BTreeSet<CityId>) -> Result<Vec<GdpRecord>> {
    let t = Table::read(path, &[&["city_id", "year", "gdp_billion_cny"]])?;
    t.rows
        .iter()
        .map(|(row, rec)| {
            Ok(GdpRecord {
                city: t.city(*row, rec, "city_id", known)?,
                year: t.year(*row, rec, "year")?,
                gdp: t.number(*row, rec, "gdp_billion_cny")?,
            })
        })
        .collect()
}

fn read_distances(path: &Path, known: &BTreeSet<CityId>) -> Result<DistanceMatrix> {
    let t = Table::read(path, &[&["origin", "dest", "km"]])?;
    let mut raw = BTreeMap::new();
    for (row, rec) in &t.rows {
        let a = t.city(*row, rec, "origin", known)?;
        let b = t.city(*row, rec, "dest", known)?;
        let km = t.number(*row, rec, "km")?;
        if raw.insert((a.clone(), b.clone()), km).is_some() {
            return Err(t.error(*row, "dest", format!("duplicate distance {a}-{b}")));
        }
    }
    let mut dm = DistanceMatrix::new();
    for ((a, b), km) in &raw {
        dm.insert(a.clone(), b.clone(), *km);
        if !raw.contains_key(&(b.clone(), a.clone())) {
            dm.insert(b.clone(), a.clone(), *km);
        }
    }
    Ok(dm)
}

fn read_flows(path: &Path, known: &BTreeSet<CityId>) -> Result<Vec<FlowMatrix>> {
    let t = Table::read(
        path,
        &[
            &["year", "vehicle_class", "origin", "dest", "vehicles"],
            &["year", "vehicle_class", "origin", "dest", "vehicles", "payload"],
        ],
    )?;
    let mut matrices: BTreeMap<(i32, VehicleClass), FlowMatrix> = BTreeMap::new();
    for (row, rec) in &t.rows {
        let year = t.year(*row, rec, "year")?;
        let raw_class = t.text(rec, "vehicle_class");
        let class = VehicleClass::parse(raw_class)
            .ok_or_else(|| t.error(*row, "vehicle_class", format!("`{raw_class}` is not carbus or truck")))?;
        let origin = t.city(*row, rec, "origin", known)?;
        let dest = t.city(*row, rec, "dest", known)?;
        let vehicles = t.non_negative(*row, rec, "vehicles")?;
        let payload = match t.optional_number(*row, rec, "payload")? {
            Some(p) if p < 0.0 => return Err(t.error(*row, "payload", format!("{p} is negative"))),
            other => other,
        };
        let fm = matrices
            .entry((year, class))
            .or_insert_with(|| FlowMatrix::new(year, class));
        if fm.insert(origin.clone(), dest.clone(), vehicles, payload).is_some() {
            return Err(t.error(*row, "dest", format!("duplicate flow {origin}->{dest} for {class} {year}")));
        }
    }
    Ok(matrices.into_values().collect())
}

/// Loads and validates a dataset. Flow matrices come back ordered by year then class.
pub fn load_dataset(paths: &DatasetPaths) -> Result<RegionDataset> {
    let cities = read_cities(&paths.cities)?;
    let known: BTreeSet<CityId> = cities.iter().map(|c| c.id.clone()).collect();
    let dataset = RegionDataset {
        gdp: read_gdp(&paths.gdp, &known)?,
        distances: read_distances(&paths.distances, &known)?,
        flows: read_flows(&paths.flows, &known)?,
        cities,
    };
    let report = validate(&dataset);
    if !report.is_well_formed() {
        return Err(Error::Validation(report.summary()));
    }
    Ok(dataset)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the four CSV files into `dir` with full round-trip precision.
/// Distances are written once per unordered pair.
pub fn write_dataset(dataset: &RegionDataset, dir: &Path) -> Result<DatasetPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = DatasetPaths::in_dir(dir);

    let with_coords = dataset.cities.iter().any(|c| c.lon.is_some() || c.lat.is_some());
    let header: &[&str] = if with_coords {
        &["city_id", "name", "lon", "lat"]
    } else {
        &["city_id", "name"]
    };
    let rows = dataset.cities.iter().map(|c| {
        let mut r = vec![c.id.to_string(), c.name.clone()];
        if with_coords {
            r.push(opt(c.lon));
            r.push(opt(c.lat));
        }
        r
    });
    write_atomic(&paths.cities, &csv_bytes(header, rows)?)?;

    let rows = dataset
        .gdp
        .iter()
        .map(|g| vec![g.city.to_string(), g.year.to_string(), g.gdp.to_string()]);
    write_atomic(&paths.gdp, &csv_bytes(&["city_id", "year", "gdp_billion_cny"], rows)?)?;

    let stored: BTreeMap<(&CityId, &CityId), f64> = dataset.distances.entries().map(|(a, b, km)| ((a, b), km)).collect();
    let rows = stored
        .iter()
        .filter(|((a, b), km)| a <= b || stored.get(&(*b, *a)) != Some(*km))
        .map(|((a, b), km)| vec![a.to_string(), b.to_string(), km.to_string()]);
    write_atomic(&paths.distances, &csv_bytes(&["origin", "dest", "km"], rows)?)?;

    let with_payload = dataset.flows.iter().any(|f| f.entries().any(|(_, _, e)| e.payload.is_some()));
    let header: &[&str] = if with_payload {
        &["year", "vehicle_class", "origin", "dest", "vehicles", "payload"]
    } else {
        &["year", "vehicle_class", "origin", "dest", "vehicles"]
    };
    let rows = dataset.flows.iter().flat_map(|f| {
        f.entries().map(move |(o, d, e)| {
            let mut r = vec![
                f.year.to_string(),
                f.class.label().to_string(),
                o.to_string(),
                d.to_string(),
                e.vehicles.to_string(),
            ];
            if with_payload {
                r.push(opt(e.payload));
            }
            r
        })
    });
    write_atomic(&paths.flows, &csv_bytes(header, rows)?)?;
    Ok(paths)
}
