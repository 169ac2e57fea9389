use std::path::PathBuf;
use std::sync::Arc;

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::gazetteer::Gazetteer;
use super::memory::{Memory, TaskRecord};
use super::registry::{CREATE_ENVIRONMENT, CREATE_SIMULATION_AREA, GENERATE_RADIO_MAP, IMPORT_OSM, OPTIMIZE_NETWORK};
use crate::geodata::{fetch_osm, parse_osm, GeoBBox, GeodataError, MapTransport};
use crate::planner::{optimize_with_progress, random_initial_stations, NetworkPlan, PlannerError, PlanningConfig};
use crate::project::{ArtifactKind, ProjectDir};
use crate::propagation::{generate_radio_map, AntennaPattern, BaseStation, PropagationConfig, PropagationError};
use crate::render::{render_png, RenderOptions};
use crate::scene::{build_environment_with, create_grid, EnvironmentModel, HeightRules, SceneError, SimulationGrid};
use crate::sinr::{compute_sinr_map, coverage_stats, SinrError, DEFAULT_PL_THRESHOLD_DB, DEFAULT_SINR_THRESHOLD_DB};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Geodata(#[from] GeodataError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Sinr(#[from] SinrError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Input(String),
}

/// Capabilities and model constants shared by every tool run.
pub struct ToolEnv {
    pub transport: Arc<dyn MapTransport>,
    pub gazetteer: Gazetteer,
    pub pattern: AntennaPattern,
    pub propagation: PropagationConfig,
    pub render: RenderOptions,
}

impl ToolEnv {
    pub fn new(transport: Arc<dyn MapTransport>) -> Self {
        Self {
            transport,
            gazetteer: Gazetteer::standard(),
            pattern: AntennaPattern::default(),
            propagation: PropagationConfig::default(),
            render: RenderOptions::default(),
        }
    }
}

/// What a tool produced; the session assigns artifact ids and writes files.
#[derive(Debug, Default)]
pub struct ToolOutput {
    pub result: Value,
    pub files: Vec<(ArtifactKind, Vec<u8>)>,
    pub log: Vec<String>,
}

pub(crate) struct Call<'a> {
    pub env: &'a ToolEnv,
    pub project: &'a ProjectDir,
    pub memory: &'a Memory,
    pub args: &'a Map<String, Value>,
    pub inputs: &'a [u64],
}

impl Call<'_> {
    fn upstream(&self, tool: &str) -> Result<&TaskRecord, ToolError> {
        self.inputs
            .iter()
            .find_map(|&i| self.memory.upstream(i, tool))
            .ok_or_else(|| ToolError::Input(format!("no successful {tool} result upstream")))
    }

    fn artifact_path(&self, record: &TaskRecord, kind: ArtifactKind) -> Result<PathBuf, ToolError> {
        record
            .artifacts
            .iter()
            .find(|a| a.kind == kind)
            .map(|a| self.project.resolve(&a.path))
            .ok_or_else(|| ToolError::Input(format!("task #{} has no {kind:?} artifact", record.id)))
    }

    fn f64_arg(&self, name: &str) -> f64 {
        self.args.get(name).and_then(Value::as_f64).expect("canonical args carry defaults")
    }

    fn i64_arg(&self, name: &str) -> i64 {
        self.args.get(name).and_then(Value::as_i64).expect("canonical args carry defaults")
    }

    fn scene(&self) -> Result<EnvironmentModel, ToolError> {
        let record = self.upstream(CREATE_ENVIRONMENT)?;
        let text = std::fs::read_to_string(self.artifact_path(record, ArtifactKind::Scene)?)?;
        Ok(EnvironmentModel::from_json(&text)?)
    }

    fn simulation_area(&self, env: &EnvironmentModel) -> Result<(SimulationGrid, Vec<BaseStation>), ToolError> {
        let record = self.upstream(CREATE_SIMULATION_AREA)?;
        let resolution = record.result["resolution"]
            .as_f64()
            .ok_or_else(|| ToolError::Input("simulation area lacks a resolution".into()))?;
        let stations: Vec<BaseStation> = serde_json::from_value(record.result["stations"].clone())
            .map_err(|e| ToolError::Input(format!("simulation area stations: {e}")))?;
        Ok((create_grid(env, resolution)?, stations))
    }
}

pub(crate) fn execute(call: &Call<'_>, tool: &str, progress: &mut dyn FnMut(f64)) -> Result<ToolOutput, ToolError> {
    match tool {
        IMPORT_OSM => import_osm(call),
        CREATE_ENVIRONMENT => create_environment(call),
        CREATE_SIMULATION_AREA => create_simulation_area(call),
        GENERATE_RADIO_MAP => radio_map(call, progress),
        OPTIMIZE_NETWORK => optimize_network(call, progress),
        other => Err(ToolError::Input(format!("no implementation for tool {other}"))),
    }
}

fn to_json_bytes(v: &impl serde::Serialize) -> Vec<u8> {
    serde_json::to_vec_pretty(v).expect("serializable")
}

fn import_osm(call: &Call<'_>) -> Result<ToolOutput, ToolError> {
    let (bbox, area) = match call.args.get("area").and_then(Value::as_str) {
        Some(name) => {
            let entry = call
                .env
                .gazetteer
                .lookup(name)
                .ok_or_else(|| ToolError::Input(format!("unknown area {name:?}; give a bbox instead")))?;
            (entry.bbox, Some(entry.name.clone()))
        }
        None => {
            let text = call.args.get("bbox").and_then(Value::as_str).unwrap_or_default();
            (GeoBBox::parse(text)?, None)
        }
    };
    let fetched = fetch_osm(&bbox, call.env.transport.as_ref(), Some(&call.project.osm_cache()))?;
    let data = parse_osm(&fetched.bytes)?;
    let log = vec![format!(
        "{} {} bytes for {}",
        if fetched.from_cache { "cache hit:" } else { "downloaded" },
        fetched.bytes.len(),
        area.as_deref().unwrap_or("bbox")
    )];
    Ok(ToolOutput {
        result: json!({
            "area": area,
            "bbox": bbox,
            "nodes": data.nodes.len(),
            "ways": data.ways.len(),
            "dropped_ways": data.dropped_ways.len(),
            "from_cache": fetched.from_cache,
        }),
        files: vec![(ArtifactKind::Osm, fetched.bytes)],
        log,
    })
}

fn create_environment(call: &Call<'_>) -> Result<ToolOutput, ToolError> {
    let record = call.upstream(IMPORT_OSM)?;
    let bytes = std::fs::read(call.artifact_path(record, ArtifactKind::Osm)?)?;
    let osm = parse_osm(&bytes)?;
    let rules = HeightRules {
        meters_per_level: call.f64_arg("meters_per_level"),
        default_height: call.f64_arg("default_height"),
    };
    if !(rules.meters_per_level > 0.0 && rules.default_height > 0.0) {
        return Err(ToolError::Input("heights must be positive".into()));
    }
    let env = build_environment_with(&osm, &rules)?;
    let result = json!({
        "buildings": env.buildings.len(),
        "roads": env.roads.len(),
        "green_areas": env.green_areas.len(),
        "width_m": env.bounds.width(),
        "height_m": env.bounds.height(),
    });
    let log = vec![format!(
        "scene {:.0} m x {:.0} m: {} buildings, {} roads, {} green areas",
        env.bounds.width(),
        env.bounds.height(),
        env.buildings.len(),
        env.roads.len(),
        env.green_areas.len()
    )];
    Ok(ToolOutput { result, files: vec![(ArtifactKind::Scene, env.to_json().into_bytes())], log })
}

fn create_simulation_area(call: &Call<'_>) -> Result<ToolOutput, ToolError> {
    let env = call.scene()?;
    let resolution = call.f64_arg("resolution");
    let count = call.i64_arg("initial_stations");
    let config = PlanningConfig::default();
    if count < 1 || count as usize > config.max_stations {
        return Err(ToolError::Input(format!("initial_stations must lie in 1..={}", config.max_stations)));
    }
    let seed = call.i64_arg("seed") as u64;
    let grid = create_grid(&env, resolution)?;
    let stations = random_initial_stations(&grid, &env, &config, count as usize, seed)?;
    let result = json!({
        "resolution": resolution,
        "width": grid.width,
        "height": grid.height,
        "outdoor_cells": grid.outdoor_count(),
        "indoor_cells": grid.len() - grid.outdoor_count(),
        "seed": seed,
        "stations": stations,
    });
    let log = vec![format!(
        "grid {}x{} at {resolution} m ({} outdoor cells), {} initial stations",
        grid.width,
        grid.height,
        grid.outdoor_count(),
        stations.len()
    )];
    Ok(ToolOutput { files: vec![(ArtifactKind::ReportJson, to_json_bytes(&result))], result, log })
}

fn radio_map(call: &Call<'_>, progress: &mut dyn FnMut(f64)) -> Result<ToolOutput, ToolError> {
    let env = call.scene()?;
    let (grid, initial) = call.simulation_area(&env)?;
    let which = call.args.get("stations").and_then(Value::as_str).unwrap_or("initial");
    let stations = if which == "optimized" {
        let record = call.upstream(OPTIMIZE_NETWORK)?;
        let text = std::fs::read_to_string(call.artifact_path(record, ArtifactKind::PlanJson)?)?;
        let plan: NetworkPlan =
            serde_json::from_str(&text).map_err(|e| ToolError::Input(format!("plan artifact: {e}")))?;
        plan.stations
    } else {
        initial
    };
    let nf = call.f64_arg("noise_figure");
    progress(0.0);
    let rm = generate_radio_map(&grid, &stations, &env, &call.env.pattern, &call.env.propagation)?;
    progress(40.0);
    let sm = compute_sinr_map(&grid, &stations, &env, &call.env.pattern, nf, &call.env.propagation)?;
    progress(80.0);
    let report = coverage_stats(&rm, &sm, DEFAULT_PL_THRESHOLD_DB, DEFAULT_SINR_THRESHOLD_DB)?;
    let rm_doc = rm.to_document();
    let sm_doc = sm.to_document();
    let rm_png = render_png(&rm_doc, &call.env.render).map_err(ToolError::Input)?;
    let sm_png = render_png(&sm_doc, &call.env.render).map_err(ToolError::Input)?;
    let result = json!({
        "stations": which,
        "station_count": stations.len(),
        "coverage": report,
    });
    let log = vec![format!(
        "{which} stations ({}): PL<={} dB on {:.1}% of outdoor cells, SINR>{} dB on {:.1}%",
        stations.len(),
        DEFAULT_PL_THRESHOLD_DB,
        100.0 * report.pl_compliant_fraction,
        DEFAULT_SINR_THRESHOLD_DB,
        100.0 * report.sinr_compliant_fraction
    )];
    progress(100.0);
    Ok(ToolOutput {
        files: vec![
            (ArtifactKind::RadioMapJson, rm_doc.to_json().into_bytes()),
            (ArtifactKind::RadioMapPng, rm_png),
            (ArtifactKind::SinrMapJson, sm_doc.to_json().into_bytes()),
            (ArtifactKind::SinrMapPng, sm_png),
            (ArtifactKind::ReportJson, to_json_bytes(&result)),
        ],
        result,
        log,
    })
}

fn optimize_network(call: &Call<'_>, progress: &mut dyn FnMut(f64)) -> Result<ToolOutput, ToolError> {
    let env = call.scene()?;
    let (grid, initial) = call.simulation_area(&env)?;
    let config = PlanningConfig {
        seed: call.i64_arg("seed") as u64,
        iteration_budget: call.i64_arg("iteration_budget").max(0) as usize,
        coverage_target: call.f64_arg("coverage_target"),
        min_spacing: call.f64_arg("min_spacing"),
        max_stations: call.i64_arg("max_stations").max(0) as usize,
        ..PlanningConfig::default()
    };
    let plan = optimize_with_progress(&env, &grid, &call.env.pattern, &call.env.propagation, &config, &initial, progress)?;
    let result = json!({
        "station_count": plan.stations.len(),
        "initial_coverage": plan.initial_coverage,
        "achieved_coverage": plan.achieved_coverage,
        "compliant": plan.compliant,
        "objective": plan.objective,
        "seed": plan.seed,
    });
    let log = vec![format!(
        "{} stations, coverage {:.1}% -> {:.1}% ({})",
        plan.stations.len(),
        100.0 * plan.initial_coverage,
        100.0 * plan.achieved_coverage,
        if plan.compliant { "compliant" } else { "not compliant" }
    )];
    Ok(ToolOutput { result, files: vec![(ArtifactKind::PlanJson, plan.to_json().into_bytes())], log })
}
