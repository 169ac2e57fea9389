//! Outdoor environment model and the simulation grid laid over it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::{GeoBBox, LocalFrame, OsmData, OsmWay};
use crate::geom::{LocalPoint, Polygon, Polyline, Rect};

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_RESOLUTION_M: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene is empty: no buildings, roads or green areas (check the bounding box)")]
    EmptyScene,
    #[error("OSM data has neither bounds nor nodes")]
    NoExtent,
    #[error("invalid resolution {resolution} m for bounds {width:.1} m x {height:.1} m")]
    BadResolution { resolution: f64, width: f64, height: f64 },
    #[error("invalid scene document: {0}")]
    Format(String),
}

/// Height assignment for building footprints lacking explicit data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightRules {
    pub meters_per_level: f64,
    pub default_height: f64,
}

impl Default for HeightRules {
    fn default() -> Self {
        Self { meters_per_level: 3.0, default_height: 10.0 }
    }
}

impl HeightRules {
    /// `height` tag, else `building:levels` times the per-level height, else the
    /// default.
    pub fn height_for(&self, way: &OsmWay) -> f64 {
        if let Some(h) = way.tag("height").and_then(leading_number).filter(|h| *h > 0.0) {
            return h;
        }
        if let Some(levels) = way.tag("building:levels").and_then(leading_number).filter(|l| *l > 0.0) {
            return levels * self.meters_per_level;
        }
        self.default_height
    }
}

/// Parses values like `"25"`, `"25.5 m"` or `"12m"`.
fn leading_number(text: &str) -> Option<f64> {
    let t = text.trim();
    let end = t
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '-'))
        .map_or(t.len(), |(i, _)| i);
    t[..end].parse().ok().filter(|v: &f64| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub footprint: Polygon,
    pub height: f64,
    #[serde(skip)]
    bbox: Option<Rect>,
}

impl Building {
    pub fn new(footprint: Polygon, height: f64) -> Self {
        let bbox = footprint.bbox();
        Self { footprint, height, bbox }
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
            .or_else(|| self.footprint.bbox())
            .unwrap_or(Rect::new(LocalPoint::default(), LocalPoint::default()))
    }

    pub fn contains(&self, p: &LocalPoint) -> bool {
        self.bbox().contains(p) && self.footprint.contains(p)
    }

    /// Boundary crossings of the segment `p`→`q`.
    pub fn crossings(&self, p: LocalPoint, q: LocalPoint) -> usize {
        let seg = Rect::new(
            LocalPoint::new(p.x.min(q.x), p.y.min(q.y)),
            LocalPoint::new(p.x.max(q.x), p.y.max(q.y)),
        );
        if !seg.intersects(&self.bbox()) {
            return 0;
        }
        self.footprint.crossings(p, q)
    }
}

/// Buildings, roads and green areas in the local metric frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub version: u32,
    pub origin: GeoBBox,
    pub bounds: Rect,
    pub buildings: Vec<Building>,
    pub roads: Vec<Polyline>,
    pub green_areas: Vec<Polygon>,
}

impl EnvironmentModel {
    /// A scene with explicit geometry, mainly for tests and synthetic layouts.
    pub fn from_parts(origin: GeoBBox, bounds: Rect, buildings: Vec<Building>) -> Self {
        Self {
            version: SCENE_FORMAT_VERSION,
            origin,
            bounds,
            buildings,
            roads: Vec::new(),
            green_areas: Vec::new(),
        }
    }

    pub fn frame(&self) -> LocalFrame {
        LocalFrame::centered_on(&self.origin)
    }

    pub fn is_indoor(&self, p: &LocalPoint) -> bool {
        self.buildings.iter().any(|b| b.contains(p))
    }

    /// Building-boundary crossings along the segment `p`→`q`.
    pub fn wall_crossings(&self, p: LocalPoint, q: LocalPoint) -> usize {
        self.buildings.iter().map(|b| b.crossings(p, q)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let mut env: EnvironmentModel =
            serde_json::from_str(text).map_err(|e| SceneError::Format(e.to_string()))?;
        if env.version != SCENE_FORMAT_VERSION {
            return Err(SceneError::Format(format!("unsupported scene version {}", env.version)));
        }
        env.buildings = env
            .buildings
            .into_iter()
            .map(|b| Building::new(b.footprint, b.height))
            .collect();
        Ok(env)
    }
}

fn is_green(way: &OsmWay) -> bool {
    way.tag("leisure") == Some("park") || matches!(way.tag("landuse"), Some("grass") | Some("forest"))
}

/// Builds the outdoor scene from parsed OSM data.
///
/// Geometry is clipped to the document bounds. Building rings that are not
/// simple after clipping are rejected with a warning.
pub fn build_environment(osm: &OsmData) -> Result<EnvironmentModel, SceneError> {
    build_environment_with(osm, &HeightRules::default())
}

pub fn build_environment_with(osm: &OsmData, rules: &HeightRules) -> Result<EnvironmentModel, SceneError> {
    let origin = osm.extent().ok_or(SceneError::NoExtent)?;
    let frame = LocalFrame::centered_on(&origin);
    let corner_min = frame.project(origin.min_lat, origin.min_lon);
    let corner_max = frame.project(origin.max_lat, origin.max_lon);
    let bounds = Rect::new(corner_min, corner_max);

    let ring = |way: &OsmWay| -> Vec<LocalPoint> {
        way.nodes
            .iter()
            .filter_map(|id| osm.nodes.get(id))
            .map(|n| frame.project(n.lat, n.lon))
            .collect()
    };

    let mut buildings = Vec::new();
    let mut roads = Vec::new();
    let mut green_areas = Vec::new();
    for (id, way) in &osm.ways {
        if way.tags.contains_key("building") {
            if !way.is_closed() {
                log::warn!("building way {id} is not closed; skipped");
                continue;
            }
            let footprint = Polygon::from_ring(ring(way)).clip_to_rect(&bounds);
            if footprint.vertices.is_empty() {
                continue;
            }
            if !footprint.is_simple() {
                log::warn!("building way {id} has a degenerate or self-intersecting ring; skipped");
                continue;
            }
            buildings.push(Building::new(footprint, rules.height_for(way)));
        } else if way.tags.contains_key("highway") {
            let line = Polyline { points: ring(way) };
            roads.extend(line.clip_to_rect(&bounds));
        } else if is_green(way) && way.is_closed() {
            let poly = Polygon::from_ring(ring(way)).clip_to_rect(&bounds);
            if poly.vertices.len() >= 3 && poly.area() > 0.0 {
                green_areas.push(poly);
            }
        }
    }

    if buildings.is_empty() && roads.is_empty() && green_areas.is_empty() {
        return Err(SceneError::EmptyScene);
    }
    Ok(EnvironmentModel {
        version: SCENE_FORMAT_VERSION,
        origin,
        bounds,
        buildings,
        roads,
        green_areas,
    })
}

/// Index of a grid cell; `i` counts east, `j` counts north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

/// Regular lattice of square cells covering the scene bounds.
///
/// Storage is row-major with row `j = 0` at the southern edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    pub origin_cell_center: LocalPoint,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub indoor_mask: Vec<bool>,
}

impl SimulationGrid {
    /// A grid with every cell outdoor; `origin_cell_center` is the centre of cell (0, 0).
    pub fn open(origin_cell_center: LocalPoint, resolution: f64, width: usize, height: usize) -> Self {
        Self {
            origin_cell_center,
            resolution,
            width,
            height,
            indoor_mask: vec![false; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cell: CellIndex) -> usize {
        cell.j * self.width + cell.i
    }

    pub fn cell(&self, index: usize) -> CellIndex {
        CellIndex { i: index % self.width, j: index / self.width }
    }

    pub fn center(&self, index: usize) -> LocalPoint {
        let c = self.cell(index);
        LocalPoint::new(
            self.origin_cell_center.x + c.i as f64 * self.resolution,
            self.origin_cell_center.y + c.j as f64 * self.resolution,
        )
    }

    pub fn is_indoor(&self, index: usize) -> bool {
        self.indoor_mask[index]
    }

    pub fn outdoor_count(&self) -> usize {
        self.indoor_mask.iter().filter(|m| !**m).count()
    }

    pub fn outdoor_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| !self.indoor_mask[k])
    }

    /// Cell containing `p`, if any.
    pub fn locate(&self, p: &LocalPoint) -> Option<usize> {
        let fi = ((p.x - self.origin_cell_center.x) / self.resolution + 0.5).floor();
        let fj = ((p.y - self.origin_cell_center.y) / self.resolution + 0.5).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.width as f64 || fj >= self.height as f64 {
            return None;
        }
        Some(self.index(CellIndex { i: fi as usize, j: fj as usize }))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.resolution > 0.0) || self.is_empty() || self.indoor_mask.len() != self.len() {
            return Err(SceneError::Format(format!(
                "grid {}x{} at {} m with mask of {}",
                self.width,
                self.height,
                self.resolution,
                self.indoor_mask.len()
            )));
        }
        Ok(())
    }
}

/// Lays a grid over `env.bounds` and classifies each cell by its centre.
///
/// Each axis gets `ceil(extent / resolution)` cells. When the extent is not an
/// exact multiple of the resolution the lattice overhang is split evenly on
/// both sides, which keeps every cell centre inside the bounds.
pub fn create_grid(env: &EnvironmentModel, resolution: f64) -> Result<SimulationGrid, SceneError> {
    let (w_m, h_m) = (env.bounds.width(), env.bounds.height());
    let bad = || SceneError::BadResolution { resolution, width: w_m, height: h_m };
    if !(resolution > 0.0) || !resolution.is_finite() || !(w_m > 0.0) || !(h_m > 0.0) {
        return Err(bad());
    }
    if resolution > w_m || resolution > h_m {
        return Err(bad());
    }
    let cells = |extent: f64| {
        let n = (extent / resolution).ceil();
        // Guard against representation noise on exact multiples.
        if ((n - 1.0) * resolution - extent).abs() < 1e-9 * extent.max(1.0) {
            (n - 1.0) as usize
        } else {
            n as usize
        }
    };
    let width = cells(w_m).max(1);
    let height = cells(h_m).max(1);
    let overhang_x = width as f64 * resolution - w_m;
    let overhang_y = height as f64 * resolution - h_m;
    let origin_cell_center = LocalPoint::new(
        env.bounds.min.x - overhang_x / 2.0 + resolution / 2.0,
        env.bounds.min.y - overhang_y / 2.0 + resolution / 2.0,
    );
    let mut grid = SimulationGrid::open(origin_cell_center, resolution, width, height);
    let mask: Vec<bool> = (0..grid.len()).map(|k| env.is_indoor(&grid.center(k))).collect();
    grid.indoor_mask = mask;
    Ok(grid)
}
