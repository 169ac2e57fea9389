//! Radio-map generation and wireless network planning.
//!
//! The pipeline runs OpenStreetMap ingestion ([`geodata`]), outdoor scene
//! construction ([`scene`]), path-loss radio maps ([`propagation`]), SINR
//! analysis ([`sinr`]) and automatic cell optimization ([`planner`]). The
//! [`agent`] module drives those stages as tools from natural-language prompts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod geodata;
pub mod geom;
pub mod grid_doc;
pub mod planner;
pub mod project;
pub mod propagation;
pub mod render;
pub mod scene;
pub mod sinr;

pub use geodata::{GeoBBox, LocalFrame, OsmData};
pub use geom::LocalPoint;
pub use planner::{NetworkPlan, PlanningConfig};
pub use propagation::{AntennaPattern, BaseStation, PropagationConfig, RadioMap, StationId};
pub use scene::{EnvironmentModel, SimulationGrid};
pub use sinr::{CoverageReport, SinrMap};
