use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const IMPORT_OSM: &str = "import_osm";
pub const CREATE_ENVIRONMENT: &str = "create_environment";
pub const CREATE_SIMULATION_AREA: &str = "create_simulation_area";
pub const GENERATE_RADIO_MAP: &str = "generate_radio_map";
pub const OPTIMIZE_NETWORK: &str = "optimize_network";

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("duplicate tool name {0}")]
    Duplicate(String),
    #[error("tool {tool} depends on unknown tool {dependency}")]
    UnknownDependency { tool: String, dependency: String },
    #[error("dependency cycle through {0}")]
    Cycle(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Number,
    Integer,
    Enum { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    pub default: Option<Value>,
    pub description: String,
}

/// A prerequisite task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dependency {
    pub tool: String,
    /// Fixed arguments; `None` accepts the most recent run with any arguments.
    pub args: Option<Map<String, Value>>,
    /// Applies only when the dependent call has `param == value`.
    pub when: Option<(String, Value)>,
}

impl Dependency {
    fn applies(&self, args: &Map<String, Value>) -> bool {
        match &self.when {
            None => true,
            Some((param, value)) => args.get(param) == Some(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub dependencies: Vec<Dependency>,
    /// Exactly one parameter of each group must be given.
    pub exactly_one_of: Vec<Vec<String>>,
}

impl ToolSpec {
    /// Type-checks `args` and fills defaults. Output keys are sorted.
    pub fn canonical_args(&self, args: &Map<String, Value>) -> Result<Map<String, Value>, String> {
        for key in args.keys() {
            if !self.params.iter().any(|p| &p.name == key) {
                return Err(format!("unknown parameter {key:?} for {}", self.name));
            }
        }
        let mut out = Map::new();
        for p in &self.params {
            match args.get(&p.name).filter(|v| !v.is_null()) {
                Some(v) => {
                    check_kind(&p.name, &p.kind, v)?;
                    out.insert(p.name.clone(), normalize(&p.kind, v));
                }
                None => {
                    if let Some(d) = &p.default {
                        out.insert(p.name.clone(), d.clone());
                    } else if p.required {
                        return Err(format!("missing required parameter {:?} for {}", p.name, self.name));
                    }
                }
            }
        }
        for group in &self.exactly_one_of {
            let given = group.iter().filter(|g| out.contains_key(*g)).count();
            if given != 1 {
                return Err(format!("{} needs exactly one of {}", self.name, group.join(", ")));
            }
        }
        Ok(out)
    }

    /// Dependencies applicable to a call with canonical `args`.
    pub fn dependencies_for<'a>(&'a self, args: &'a Map<String, Value>) -> impl Iterator<Item = &'a Dependency> + 'a {
        self.dependencies.iter().filter(move |d| d.applies(args))
    }
}

fn check_kind(name: &str, kind: &ParamKind, v: &Value) -> Result<(), String> {
    let ok = match kind {
        ParamKind::String => v.as_str().is_some_and(|s| !s.trim().is_empty()),
        ParamKind::Number => v.as_f64().is_some_and(f64::is_finite),
        ParamKind::Integer => v.as_i64().is_some() || v.as_f64().is_some_and(|f| f.fract() == 0.0 && f.is_finite()),
        ParamKind::Enum { values } => v.as_str().is_some_and(|s| values.iter().any(|x| x == s)),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("parameter {name:?} expects {kind:?}, got {v}"))
    }
}

fn normalize(kind: &ParamKind, v: &Value) -> Value {
    match kind {
        ParamKind::Number => json!(v.as_f64().expect("checked")),
        ParamKind::Integer => json!(v.as_i64().unwrap_or_else(|| v.as_f64().expect("checked") as i64)),
        ParamKind::String => json!(v.as_str().expect("checked").trim()),
        ParamKind::Enum { .. } => v.clone(),
    }
}

/// Named tool specifications with an acyclic dependency graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    tools: BTreeMap<String, ToolSpec>,
    order: Vec<String>,
}

impl Registry {
    pub fn new(specs: Vec<ToolSpec>) -> Result<Self, RegistryError> {
        let mut tools = BTreeMap::new();
        let mut order = Vec::new();
        for s in specs {
            if tools.contains_key(&s.name) {
                return Err(RegistryError::Duplicate(s.name));
            }
            order.push(s.name.clone());
            tools.insert(s.name.clone(), s);
        }
        for s in tools.values() {
            for d in &s.dependencies {
                if !tools.contains_key(&d.tool) {
                    return Err(RegistryError::UnknownDependency { tool: s.name.clone(), dependency: d.tool.clone() });
                }
            }
        }
        let reg = Self { tools, order };
        reg.check_acyclic()?;
        Ok(reg)
    }

    /// Depth-first search over (tool, fixed arguments) nodes. A dependency
    /// pinned to fixed arguments only follows the edges those arguments
    /// activate; an open dependency follows every edge.
    fn check_acyclic(&self) -> Result<(), RegistryError> {
        fn visit(
            reg: &Registry,
            name: &str,
            fixed: Option<&Map<String, Value>>,
            active: &mut BTreeSet<String>,
            done: &mut BTreeSet<String>,
        ) -> Result<(), RegistryError> {
            let key = format!("{name}{}", fixed.map(|m| Value::Object(m.clone()).to_string()).unwrap_or_default());
            if done.contains(&key) {
                return Ok(());
            }
            if !active.insert(key.clone()) {
                return Err(RegistryError::Cycle(name.to_string()));
            }
            for d in &reg.tools[name].dependencies {
                if fixed.is_none_or(|args| d.applies(args)) {
                    visit(reg, &d.tool, d.args.as_ref(), active, done)?;
                }
            }
            active.remove(&key);
            done.insert(key);
            Ok(())
        }
        let mut done = BTreeSet::new();
        for name in &self.order {
            visit(self, name, None, &mut BTreeSet::new(), &mut done)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    /// Specs in declaration order.
    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.order.iter().map(|n| &self.tools[n])
    }

    /// The five platform tools.
    pub fn standard() -> Self {
        Self::new(standard_specs()).expect("standard registry is valid")
    }
}

fn param(name: &str, kind: ParamKind, default: Option<Value>, description: &str) -> ParamSpec {
    ParamSpec { name: name.into(), kind, required: false, default, description: description.into() }
}

fn dep(tool: &str) -> Dependency {
    Dependency { tool: tool.into(), args: None, when: None }
}

fn standard_specs() -> Vec<ToolSpec> {
    let stations_initial = {
        let mut m = Map::new();
        m.insert("stations".into(), json!("initial"));
        m.insert("noise_figure".into(), json!(crate::sinr::DEFAULT_NOISE_FIGURE_DB));
        m
    };
    vec![
        ToolSpec {
            name: IMPORT_OSM.into(),
            description: "Download the OpenStreetMap extract of a named area or bounding box".into(),
            params: vec![
                param("area", ParamKind::String, None, "area name known to the gazetteer"),
                param("bbox", ParamKind::String, None, "min_lat,min_lon,max_lat,max_lon in degrees"),
            ],
            dependencies: vec![],
            exactly_one_of: vec![vec!["area".into(), "bbox".into()]],
        },
        ToolSpec {
            name: CREATE_ENVIRONMENT.into(),
            description: "Build the outdoor environment (buildings, roads, green areas) from the imported map".into(),
            params: vec![
                param("meters_per_level", ParamKind::Number, Some(json!(3.0)), "height per building level"),
                param("default_height", ParamKind::Number, Some(json!(10.0)), "height when no tag is present"),
            ],
            dependencies: vec![dep(IMPORT_OSM)],
            exactly_one_of: vec![],
        },
        ToolSpec {
            name: CREATE_SIMULATION_AREA.into(),
            description: "Lay the simulation grid over the environment and place random initial stations".into(),
            params: vec![
                param("resolution", ParamKind::Number, Some(json!(crate::scene::DEFAULT_RESOLUTION_M)), "cell size in meters"),
                param("initial_stations", ParamKind::Integer, Some(json!(3)), "number of random initial stations"),
                param("seed", ParamKind::Integer, Some(json!(1)), "seed for initial station placement"),
            ],
            dependencies: vec![dep(CREATE_ENVIRONMENT)],
            exactly_one_of: vec![],
        },
        ToolSpec {
            name: GENERATE_RADIO_MAP.into(),
            description: "Compute best-path-loss and SINR maps with coverage statistics".into(),
            params: vec![
                param(
                    "stations",
                    ParamKind::Enum { values: vec!["initial".into(), "optimized".into()] },
                    Some(json!("initial")),
                    "which station set to simulate",
                ),
                param("noise_figure", ParamKind::Number, Some(json!(crate::sinr::DEFAULT_NOISE_FIGURE_DB)), "receiver noise figure in dB"),
            ],
            dependencies: vec![
                dep(CREATE_SIMULATION_AREA),
                Dependency { tool: OPTIMIZE_NETWORK.into(), args: None, when: Some(("stations".into(), json!("optimized"))) },
            ],
            exactly_one_of: vec![],
        },
        ToolSpec {
            name: OPTIMIZE_NETWORK.into(),
            description: "Optimize station placement, count, power, azimuth and down-tilt".into(),
            params: vec![
                param("seed", ParamKind::Integer, Some(json!(42)), "optimizer seed"),
                param("iteration_budget", ParamKind::Integer, Some(json!(5000)), "annealing moves"),
                param("coverage_target", ParamKind::Number, Some(json!(0.8)), "fraction of outdoor cells with PL <= threshold"),
                param("min_spacing", ParamKind::Number, Some(json!(50.0)), "minimum distance between stations in meters"),
                param("max_stations", ParamKind::Integer, Some(json!(20)), "station count limit"),
            ],
            dependencies: vec![Dependency { tool: GENERATE_RADIO_MAP.into(), args: Some(stations_initial), when: None }],
            exactly_one_of: vec![],
        },
    ]
}
