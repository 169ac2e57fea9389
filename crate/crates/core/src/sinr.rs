//! Downlink SINR maps and coverage statistics.
//!
//! The serving station's received power is the signal. Every other station
//! contributes interference at full power.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::LocalFrame;
use crate::grid_doc::{GridDocument, GridKind};
use crate::propagation::{
    best_server, station_losses, validate_stations, AntennaPattern, BaseStation, PropagationConfig,
    PropagationError, RadioMap, StationId,
};
use crate::scene::{EnvironmentModel, SimulationGrid};

pub const DEFAULT_NOISE_FIGURE_DB: f64 = 7.0;
pub const DEFAULT_PL_THRESHOLD_DB: f64 = 100.0;
pub const DEFAULT_SINR_THRESHOLD_DB: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum SinrError {
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error("coverage needs at least one outdoor cell")]
    NoOutdoorCells,
    #[error("radio map and SINR map use different grids")]
    GridMismatch,
}

/// Thermal noise floor in dBm for a bandwidth in Hz.
pub fn thermal_noise(bandwidth: f64, noise_figure: f64) -> f64 {
    -174.0 + 10.0 * bandwidth.log10() + noise_figure
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrCell {
    pub sinr: f64,
    pub serving: StationId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrMap {
    pub grid: SimulationGrid,
    pub frame: LocalFrame,
    pub cells: Vec<Option<SinrCell>>,
}

impl SinrMap {
    pub fn to_document(&self) -> GridDocument {
        GridDocument::from_cells(
            GridKind::SinrMap,
            &self.grid,
            &self.frame,
            self.cells.iter().map(|c| c.map(|c| (c.sinr, c.serving))),
        )
    }
}

/// SINR over every outdoor cell.
///
/// Noise uses the serving station's bandwidth.
pub fn compute_sinr_map(
    grid: &SimulationGrid,
    stations: &[BaseStation],
    env: &EnvironmentModel,
    pattern: &AntennaPattern,
    noise_figure: f64,
    cfg: &PropagationConfig,
) -> Result<SinrMap, SinrError> {
    validate_stations(stations)?;
    let table = station_losses(grid, stations, env, pattern, cfg);
    let mut cells = vec![None; grid.len()];
    for (c, &k) in table.outdoor.iter().enumerate() {
        let s = best_server(stations, &table.losses, c);
        let signal = db_to_linear(stations[s].tx_power - table.losses[s][c]);
        let interference: f64 = (0..stations.len())
            .filter(|&o| o != s)
            .map(|o| db_to_linear(stations[o].tx_power - table.losses[o][c]))
            .sum();
        let noise = db_to_linear(thermal_noise(stations[s].bandwidth, noise_figure));
        cells[k] = Some(SinrCell { sinr: linear_to_db(signal / (interference + noise)), serving: stations[s].id });
    }
    Ok(SinrMap { grid: grid.clone(), frame: env.frame(), cells })
}

/// Fractions of outdoor cells meeting the path-loss and SINR thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub outdoor_cells: usize,
    pub pl_compliant_cells: usize,
    pub sinr_compliant_cells: usize,
    pub pl_compliant_fraction: f64,
    pub sinr_compliant_fraction: f64,
    pub pl_threshold_db: f64,
    pub sinr_threshold_db: f64,
}

impl CoverageReport {
    pub fn from_counts(
        outdoor_cells: usize,
        pl_compliant_cells: usize,
        sinr_compliant_cells: usize,
        pl_threshold_db: f64,
        sinr_threshold_db: f64,
    ) -> Self {
        let frac = |n: usize| if outdoor_cells == 0 { 0.0 } else { n as f64 / outdoor_cells as f64 };
        Self {
            outdoor_cells,
            pl_compliant_cells,
            sinr_compliant_cells,
            pl_compliant_fraction: frac(pl_compliant_cells),
            sinr_compliant_fraction: frac(sinr_compliant_cells),
            pl_threshold_db,
            sinr_threshold_db,
        }
    }
}

/// True when `count / total >= target`, decided on integer counts.
///
/// `target` is a fraction; the comparison tolerates binary rounding of the
/// target itself (0.8 is not exactly representable).
pub fn meets_fraction(count: usize, total: usize, target: f64) -> bool {
    if total == 0 {
        return false;
    }
    let needed = target * total as f64;
    count as f64 >= needed - 1e-9 * needed.abs().max(1.0)
}

pub fn coverage_stats(
    radio_map: &RadioMap,
    sinr_map: &SinrMap,
    pl_threshold: f64,
    sinr_threshold: f64,
) -> Result<CoverageReport, SinrError> {
    if radio_map.grid != sinr_map.grid {
        return Err(SinrError::GridMismatch);
    }
    let mut outdoor = 0;
    let mut pl_ok = 0;
    let mut sinr_ok = 0;
    for (rm, sm) in radio_map.cells.iter().zip(&sinr_map.cells) {
        match (rm, sm) {
            (Some(r), Some(s)) => {
                outdoor += 1;
                if r.best_path_loss <= pl_threshold {
                    pl_ok += 1;
                }
                if s.sinr > sinr_threshold {
                    sinr_ok += 1;
                }
            }
            (None, None) => {}
            _ => return Err(SinrError::GridMismatch),
        }
    }
    if outdoor == 0 {
        return Err(SinrError::NoOutdoorCells);
    }
    Ok(CoverageReport::from_counts(outdoor, pl_ok, sinr_ok, pl_threshold, sinr_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::GeoBBox;
    use crate::geom::{LocalPoint, Rect};
    use crate::propagation::{generate_radio_map, ServedCell};
    use crate::scene::create_grid;

    fn open_scene(side: f64) -> EnvironmentModel {
        EnvironmentModel::from_parts(
            GeoBBox::new(0.0, 0.0, 0.001, 0.001).unwrap(),
            Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(side, side)),
            Vec::new(),
        )
    }

    #[test]
    fn noise_floor_values() {
        assert!((thermal_noise(1.0, 0.0) + 174.0).abs() < 1e-12);
        assert!((thermal_noise(80e6, 0.0) + 94.97).abs() < 0.01);
        assert!((thermal_noise(80e6, 7.0) + 87.97).abs() < 0.01);
    }

    #[test]
    fn single_station_sinr_is_snr() {
        let env = open_scene(50.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let bs = BaseStation::new(1, LocalPoint::new(25.0, 25.0));
        let cfg = PropagationConfig::default();
        let pattern = AntennaPattern::default();
        let rm = generate_radio_map(&grid, std::slice::from_ref(&bs), &env, &pattern, &cfg).unwrap();
        let sm = compute_sinr_map(&grid, std::slice::from_ref(&bs), &env, &pattern, 7.0, &cfg).unwrap();
        let noise = thermal_noise(bs.bandwidth, 7.0);
        for (k, r) in rm.populated() {
            let expected = bs.tx_power - r.best_path_loss - noise;
            assert!((sm.cells[k].unwrap().sinr - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn equidistant_twins_give_zero_db() {
        let env = open_scene(50.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let pattern = AntennaPattern { max_attenuation: 0.0, ..Default::default() };
        let a = BaseStation::new(1, LocalPoint::new(12.5, 27.5));
        let b = BaseStation::new(2, LocalPoint::new(42.5, 27.5));
        // Noise far below the signal.
        let sm = compute_sinr_map(&grid, &[a, b], &env, &pattern, -80.0, &PropagationConfig::default()).unwrap();
        let k = grid.locate(&LocalPoint::new(27.5, 12.5)).unwrap();
        assert!(sm.cells[k].unwrap().sinr.abs() < 0.01);
    }

    #[test]
    fn coverage_counts() {
        let env = open_scene(50.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let frame = env.frame();
        let rm = RadioMap {
            grid: grid.clone(),
            frame,
            cells: vec![Some(ServedCell { best_path_loss: 50.0, serving: StationId(1) }); grid.len()],
        };
        let sm = SinrMap {
            grid: grid.clone(),
            frame,
            cells: vec![Some(SinrCell { sinr: -3.0, serving: StationId(1) }); grid.len()],
        };
        let r = coverage_stats(&rm, &sm, 100.0, 5.0).unwrap();
        assert_eq!(r.pl_compliant_fraction, 1.0);
        assert_eq!(r.sinr_compliant_fraction, 0.0);
        let r = coverage_stats(&rm, &sm, 100.0, f64::NEG_INFINITY).unwrap();
        assert_eq!(r.sinr_compliant_fraction, 1.0);

        let empty = RadioMap { grid: grid.clone(), frame, cells: vec![None; grid.len()] };
        let empty_s = SinrMap { grid: grid.clone(), frame, cells: vec![None; grid.len()] };
        assert_eq!(coverage_stats(&empty, &empty_s, 100.0, 5.0), Err(SinrError::NoOutdoorCells));
    }

    #[test]
    fn fraction_threshold_is_exact_on_counts() {
        assert!(!meets_fraction(799, 1000, 0.8));
        assert!(meets_fraction(800, 1000, 0.8));
        assert!(!meets_fraction(0, 0, 0.8));
        assert!(meets_fraction(4, 5, 0.8));
        assert!(!meets_fraction(3, 5, 0.8));
    }
}
