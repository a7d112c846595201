//! Spatial enrichment: per-district road coordinates and nearest-road
//! queries under Manhattan distance on raw degree coordinates.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad gazetteer row {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("duplicate gazetteer key ({district}, {road})")]
    DuplicateKey { district: String, road: String },
    #[error("unknown road ({district}, {road})")]
    UnknownRoad { district: String, road: String },
    #[error("district {0:?} has no roads")]
    UnknownDistrict(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lon: f64,
    pub lat: f64,
}

/// |Δlon| + |Δlat| in degrees.
pub fn manhattan(a: Coord, b: Coord) -> f64 {
    (a.lon - b.lon).abs() + (a.lat - b.lat).abs()
}

/// Road coordinates grouped by district. Roads within a district are kept
/// sorted by name so every scan is deterministic.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Gazetteer {
    districts: BTreeMap<String, Vec<(String, Coord)>>,
}

impl Gazetteer {
    pub fn new() -> Self {
        Gazetteer::default()
    }

    pub fn insert(&mut self, district: &str, road: &str, coord: Coord) -> Result<(), GeoError> {
        if !coord.lon.is_finite()
            || !coord.lat.is_finite()
            || coord.lon.abs() > 180.0
            || coord.lat.abs() > 90.0
        {
            return Err(GeoError::BadRow {
                line: 0,
                message: format!("invalid coordinates for ({district}, {road})"),
            });
        }
        let roads = self.districts.entry(district.to_string()).or_default();
        match roads.binary_search_by(|(name, _)| name.as_str().cmp(road)) {
            Ok(_) => Err(GeoError::DuplicateKey {
                district: district.to_string(),
                road: road.to_string(),
            }),
            Err(pos) => {
                roads.insert(pos, (road.to_string(), coord));
                Ok(())
            }
        }
    }

    pub fn coord(&self, district: &str, road: &str) -> Option<Coord> {
        let roads = self.districts.get(district)?;
        roads
            .binary_search_by(|(name, _)| name.as_str().cmp(road))
            .ok()
            .map(|i| roads[i].1)
    }

    pub fn contains(&self, district: &str, road: &str) -> bool {
        self.coord(district, road).is_some()
    }

    pub fn districts(&self) -> impl Iterator<Item = &str> {
        self.districts.keys().map(|s| s.as_str())
    }

    pub fn roads(&self, district: &str) -> &[(String, Coord)] {
        self.districts.get(district).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.districts.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Load from CSV with columns district, road, longitude, latitude.
    pub fn from_csv_file(path: &Path) -> Result<Self, GeoError> {
        let file = std::fs::File::open(path).map_err(|source| GeoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, GeoError> {
        #[derive(Deserialize)]
        struct Row {
            district: String,
            road: String,
            longitude: f64,
            latitude: f64,
        }
        let mut g = Gazetteer::new();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        for (idx, row) in rdr.deserialize::<Row>().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| GeoError::BadRow {
                line,
                message: e.to_string(),
            })?;
            g.insert(
                &row.district,
                &row.road,
                Coord {
                    lon: row.longitude,
                    lat: row.latitude,
                },
            )
            .map_err(|e| match e {
                GeoError::BadRow { message, .. } => GeoError::BadRow { line, message },
                other => other,
            })?;
        }
        Ok(g)
    }

    pub fn to_csv_file(&self, path: &Path) -> Result<(), GeoError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|source| {
            GeoError::Io {
                path: path.display().to_string(),
                source,
            }
        })?);
        let write_err = |source| GeoError::Io {
            path: path.display().to_string(),
            source,
        };
        writeln!(out, "district,road,longitude,latitude").map_err(write_err)?;
        for (district, roads) in &self.districts {
            for (road, c) in roads {
                writeln!(out, "{district},{road},{},{}", c.lon, c.lat).map_err(write_err)?;
            }
        }
        Ok(())
    }

    /// The k nearest other roads in the same district, ascending by
    /// (Manhattan distance, name). Short districts pad by repeating the last
    /// available name; a district whose only road is the query repeats the
    /// query itself.
    pub fn nearest_roads(&self, road: &str, district: &str, k: usize) -> Result<Vec<String>, GeoError> {
        let query = self.coord(district, road).ok_or_else(|| GeoError::UnknownRoad {
            district: district.to_string(),
            road: road.to_string(),
        })?;
        let mut others: Vec<(f64, &str)> = self
            .roads(district)
            .iter()
            .filter(|(name, _)| name != road)
            .map(|(name, c)| (manhattan(query, *c), name.as_str()))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)));
        let mut out: Vec<String> = others.iter().take(k).map(|(_, n)| n.to_string()).collect();
        if out.is_empty() {
            out.push(road.to_string());
        }
        while out.len() < k {
            let last = out.last().cloned().unwrap();
            out.push(last);
        }
        Ok(out)
    }

    /// The district's most central road: minimal summed distance to every
    /// road in the district, ties broken by name. Used as a stand-in when a
    /// record's road is not in the gazetteer.
    pub fn centroid_road(&self, district: &str) -> Result<String, GeoError> {
        let roads = self.roads(district);
        if roads.is_empty() {
            return Err(GeoError::UnknownDistrict(district.to_string()));
        }
        let best = roads
            .iter()
            .map(|(name, c)| {
                let total: f64 = roads.iter().map(|(_, o)| manhattan(*c, *o)).sum();
                (total, name.as_str())
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)))
            .unwrap();
        Ok(best.1.to_string())
    }

    /// `nearest_roads` with the centroid fallback for unknown roads.
    /// Returns the neighbor list plus whether the fallback fired.
    pub fn nearest_roads_or_fallback(
        &self,
        road: &str,
        district: &str,
        k: usize,
    ) -> Result<(Vec<String>, bool), GeoError> {
        match self.nearest_roads(road, district, k) {
            Ok(names) => Ok((names, false)),
            Err(GeoError::UnknownRoad { .. }) => {
                let stand_in = self.centroid_road(district)?;
                let names = self.nearest_roads(&stand_in, district, k)?;
                Ok((names, true))
            }
            Err(e) => Err(e),
        }
    }
}
