//! Grid JSON exchange format shared by radio maps and SINR maps.
//!
//! ```json
//! {
//!   "version": 1, "kind": "radio_map", "units": "dB",
//!   "origin_lat": 22.58, "origin_lon": 113.96, "resolution_m": 5.0,
//!   "width": 60, "height": 60, "nodata": -9999.0,
//!   "values": [ ... row-major, row 0 = southern edge ... ],
//!   "serving": [ ... station id per cell, -1 for nodata ... ]
//! }
//! ```
//!
//! `origin_lat`/`origin_lon` locate the south-west corner of cell (0, 0).

use serde::{Deserialize, Serialize};

use crate::geodata::LocalFrame;
use crate::geom::LocalPoint;
use crate::propagation::StationId;
use crate::scene::SimulationGrid;

pub const GRID_FORMAT_VERSION: u32 = 1;
pub const NODATA: f64 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    RadioMap,
    SinrMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub version: u32,
    pub kind: GridKind,
    pub units: String,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub resolution_m: f64,
    pub width: usize,
    pub height: usize,
    pub nodata: f64,
    pub values: Vec<f64>,
    pub serving: Vec<i64>,
}

impl GridDocument {
    pub fn from_cells(
        kind: GridKind,
        grid: &SimulationGrid,
        frame: &LocalFrame,
        cells: impl Iterator<Item = Option<(f64, StationId)>>,
    ) -> Self {
        let half = grid.resolution / 2.0;
        let corner = LocalPoint::new(grid.origin_cell_center.x - half, grid.origin_cell_center.y - half);
        let (origin_lat, origin_lon) = frame.unproject(corner);
        let mut values = Vec::with_capacity(grid.len());
        let mut serving = Vec::with_capacity(grid.len());
        for cell in cells {
            match cell {
                Some((v, id)) => {
                    values.push(v);
                    serving.push(i64::from(id.0));
                }
                None => {
                    values.push(NODATA);
                    serving.push(-1);
                }
            }
        }
        Self {
            version: GRID_FORMAT_VERSION,
            kind,
            units: "dB".into(),
            origin_lat,
            origin_lon,
            resolution_m: grid.resolution,
            width: grid.width,
            height: grid.height,
            nodata: NODATA,
            values,
            serving,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.version != GRID_FORMAT_VERSION {
            return Err(format!("unsupported grid version {}", self.version));
        }
        let n = self.width * self.height;
        if n == 0 {
            return Err("grid has no cells".into());
        }
        if self.values.len() != n || self.serving.len() != n {
            return Err(format!(
                "expected {n} values and serving ids, found {} and {}",
                self.values.len(),
                self.serving.len()
            ));
        }
        if !(self.resolution_m > 0.0) {
            return Err(format!("resolution_m must be positive, got {}", self.resolution_m));
        }
        Ok(())
    }

    pub fn is_nodata(&self, k: usize) -> bool {
        self.values[k] == self.nodata
    }

    /// Minimum and maximum over populated cells.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, _)| !self.is_nodata(*k))
            .map(|(_, v)| *v)
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let doc: GridDocument = serde_json::from_str(text).map_err(|e| e.to_string())?;
        doc.validate()?;
        Ok(doc)
    }
}
