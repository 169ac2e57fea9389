//! Browser demo: load an OSM extract, click to place stations, switch
//! between path-loss and SINR views, and run the optimizer.
//!
//! [`Workbench`] holds the state and is plain Rust; [`Demo`] is its
//! JavaScript face.

use radioplan::geodata::parse_osm;
use radioplan::grid_doc::GridDocument;
use radioplan::planner::{optimize, random_initial_stations};
use radioplan::propagation::generate_radio_map;
use radioplan::render::{render_png, RenderOptions};
use radioplan::scene::{build_environment, create_grid};
use radioplan::sinr::{compute_sinr_map, coverage_stats, DEFAULT_NOISE_FIGURE_DB, DEFAULT_PL_THRESHOLD_DB, DEFAULT_SINR_THRESHOLD_DB};
use radioplan::{
    AntennaPattern, BaseStation, CoverageReport, EnvironmentModel, LocalPoint, PlanningConfig, PropagationConfig,
    SimulationGrid,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    PathLoss,
    Sinr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSummary {
    pub buildings: usize,
    pub width: usize,
    pub height: usize,
    pub outdoor_cells: usize,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub view: View,
    pub stations: Vec<BaseStation>,
    /// Station positions as image fractions from the north-west corner.
    pub markers: Vec<(f64, f64)>,
    pub coverage: CoverageReport,
}

pub struct Workbench {
    env: EnvironmentModel,
    grid: SimulationGrid,
    stations: Vec<BaseStation>,
    view: View,
    pattern: AntennaPattern,
    prop: PropagationConfig,
}

impl Workbench {
    pub fn from_osm(xml: &[u8], resolution: f64) -> Result<Self, String> {
        let osm = parse_osm(xml).map_err(|e| e.to_string())?;
        let env = build_environment(&osm).map_err(|e| e.to_string())?;
        let grid = create_grid(&env, resolution).map_err(|e| e.to_string())?;
        Ok(Self {
            env,
            grid,
            stations: Vec::new(),
            view: View::PathLoss,
            pattern: AntennaPattern::default(),
            prop: PropagationConfig::default(),
        })
    }

    pub fn summary(&self) -> SceneSummary {
        SceneSummary {
            buildings: self.env.buildings.len(),
            width: self.grid.width,
            height: self.grid.height,
            outdoor_cells: self.grid.outdoor_count(),
            resolution: self.grid.resolution,
        }
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    /// Places a station at image coordinates in `[0, 1]`, measured from the
    /// north-west corner. Returns false if the point is indoors or off the map.
    pub fn add_station(&mut self, fx: f64, fy: f64) -> bool {
        let (west, south, w, h) = self.extent();
        let p = LocalPoint::new(west + fx * w, south + (1.0 - fy) * h);
        let g = &self.grid;
        match g.locate(&p) {
            Some(k) if !g.is_indoor(k) => {
                let id = self.stations.iter().map(|s| s.id.0).max().unwrap_or(0) + 1;
                self.stations.push(BaseStation::new(id, g.center(k)));
                true
            }
            _ => false,
        }
    }

    pub fn clear_stations(&mut self) {
        self.stations.clear();
    }

    /// West and south edges, then width and height, in metres.
    fn extent(&self) -> (f64, f64, f64, f64) {
        let g = &self.grid;
        (
            g.origin_cell_center.x - g.resolution / 2.0,
            g.origin_cell_center.y - g.resolution / 2.0,
            g.width as f64 * g.resolution,
            g.height as f64 * g.resolution,
        )
    }

    fn markers(&self) -> Vec<(f64, f64)> {
        let (west, south, w, h) = self.extent();
        self.stations.iter().map(|s| ((s.position.x - west) / w, 1.0 - (s.position.y - south) / h)).collect()
    }

    pub fn set_view(&mut self, view: View) {
        self.view = view;
    }

    fn documents(&self) -> Result<(GridDocument, GridDocument, CoverageReport), String> {
        if self.stations.is_empty() {
            return Err("place at least one station".into());
        }
        let rm = generate_radio_map(&self.grid, &self.stations, &self.env, &self.pattern, &self.prop)
            .map_err(|e| e.to_string())?;
        let sm = compute_sinr_map(&self.grid, &self.stations, &self.env, &self.pattern, DEFAULT_NOISE_FIGURE_DB, &self.prop)
            .map_err(|e| e.to_string())?;
        let report = coverage_stats(&rm, &sm, DEFAULT_PL_THRESHOLD_DB, DEFAULT_SINR_THRESHOLD_DB).map_err(|e| e.to_string())?;
        Ok((rm.to_document(), sm.to_document(), report))
    }

    /// PNG of the current view (no legend, so pixels map linearly to the
    /// scene) and the coverage it shows.
    pub fn render(&self, scale: u32) -> Result<(Vec<u8>, Snapshot), String> {
        let (rm, sm, coverage) = self.documents()?;
        let doc = match self.view {
            View::PathLoss => rm,
            View::Sinr => sm,
        };
        let png = render_png(&doc, &RenderOptions { scale: scale.max(1), range: None, legend: false })?;
        Ok((png, Snapshot { view: self.view, stations: self.stations.clone(), markers: self.markers(), coverage }))
    }

    /// Replaces the stations with an optimized plan, starting from the
    /// current ones or from three random sites when none are placed.
    pub fn optimize(&mut self, seed: u64, budget: usize) -> Result<bool, String> {
        let config = PlanningConfig { seed, iteration_budget: budget, ..PlanningConfig::default() };
        let initial = if self.stations.is_empty() {
            random_initial_stations(&self.grid, &self.env, &config, 3, seed).map_err(|e| e.to_string())?
        } else {
            self.stations.clone()
        };
        let plan = optimize(&self.env, &self.grid, &self.pattern, &self.prop, &config, &initial).map_err(|e| e.to_string())?;
        self.stations = plan.stations;
        Ok(plan.compliant)
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

#[wasm_bindgen]
pub struct Demo {
    bench: Workbench,
    last: Option<Snapshot>,
}

#[wasm_bindgen]
impl Demo {
    /// Builds the scene from OSM XML text; the summary is available from
    /// [`Demo::summary`].
    #[wasm_bindgen(constructor)]
    pub fn new(osm_xml: &str, resolution: f64) -> Result<Demo, JsError> {
        Ok(Self { bench: Workbench::from_osm(osm_xml.as_bytes(), resolution).map_err(js)?, last: None })
    }

    pub fn summary(&self) -> String {
        to_json(&self.bench.summary())
    }

    /// Adds a station at the clicked point; see [`Workbench::add_station`].
    pub fn add_station(&mut self, fx: f64, fy: f64) -> bool {
        self.bench.add_station(fx, fy)
    }

    pub fn clear_stations(&mut self) {
        self.bench.clear_stations();
        self.last = None;
    }

    /// `"path_loss"` or `"sinr"`.
    pub fn set_view(&mut self, view: &str) -> Result<(), JsError> {
        self.bench.set_view(match view {
            "path_loss" => View::PathLoss,
            "sinr" => View::Sinr,
            other => return Err(JsError::new(&format!("unknown view {other:?}"))),
        });
        Ok(())
    }

    /// PNG bytes of the current view; the matching coverage is then in
    /// [`Demo::snapshot`].
    pub fn render(&mut self, scale: u32) -> Result<Vec<u8>, JsError> {
        let (png, snap) = self.bench.render(scale).map_err(js)?;
        self.last = Some(snap);
        Ok(png)
    }

    /// JSON of the last render: view, stations, coverage report.
    pub fn snapshot(&self) -> Option<String> {
        self.last.as_ref().map(to_json)
    }

    /// Runs the optimizer; returns whether the plan meets the coverage target.
    pub fn optimize(&mut self, seed: u32, budget: u32) -> Result<bool, JsError> {
        self.bench.optimize(seed.into(), budget as usize).map_err(js)
    }
}
