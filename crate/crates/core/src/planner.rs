//! Automatic cell optimization: station placement, count, power, azimuth and
//! down-tilt under a path-loss coverage target and a minimum-spacing rule.
//!
//! The search runs in two phases. A greedy set-cover pass adds the
//! (site, azimuth) pair with the largest gain in compliant cells until the
//! target is met. Simulated annealing then explores relocate, rotate, tilt,
//! power, add and remove moves.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::LocalPoint;
use crate::propagation::{
    AntennaPattern, BaseStation, LinkTable, PropagationConfig, PropagationError, StationId,
};
use crate::scene::{EnvironmentModel, SimulationGrid};
use crate::sinr::{db_to_linear, meets_fraction, thermal_noise};

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("no feasible candidate sites: the grid has no outdoor cells")]
    NoFeasibleSites,
    #[error("stations {a} and {b} are {distance:.2} m apart, below the {min_spacing} m minimum")]
    Spacing { a: StationId, b: StationId, distance: f64, min_spacing: f64 },
    #[error("{count} stations exceed the limit of {max}")]
    TooManyStations { count: usize, max: usize },
    #[error("station {0} is not on an outdoor cell of the grid")]
    NotOutdoor(StationId),
    #[error(transparent)]
    Station(#[from] PropagationError),
    #[error("invalid planning config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanningConfig {
    pub pl_threshold: f64,
    pub coverage_target: f64,
    pub min_spacing: f64,
    pub max_stations: usize,
    /// dBm.
    pub power_range: Range,
    pub power_step: f64,
    /// Degrees.
    pub tilt_range: Range,
    pub tilt_step: f64,
    pub azimuth_step: f64,
    /// Power given to stations created by the optimizer, dBm.
    pub new_station_power: f64,
    pub seed: u64,
    pub iteration_budget: usize,
    pub initial_temperature: f64,
    pub cooling: f64,
    pub count_penalty: f64,
    pub power_penalty: f64,
    /// SINR tie-break threshold and receiver noise figure.
    pub sinr_threshold: f64,
    pub noise_figure: f64,
    /// Weight of the SINR tie-break, in units of one path-loss-compliant cell.
    /// Values below 1 keep path-loss coverage strictly dominant.
    pub sinr_weight: f64,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            pl_threshold: 100.0,
            coverage_target: 0.80,
            min_spacing: 50.0,
            max_stations: 20,
            power_range: Range { min: 10.0, max: 36.0 },
            power_step: 2.0,
            tilt_range: Range { min: 0.0, max: 15.0 },
            tilt_step: 1.0,
            azimuth_step: 30.0,
            new_station_power: 30.0,
            seed: 0,
            iteration_budget: 5000,
            initial_temperature: 1.0,
            cooling: 0.995,
            count_penalty: 0.01,
            power_penalty: 0.001,
            sinr_threshold: crate::sinr::DEFAULT_SINR_THRESHOLD_DB,
            noise_figure: crate::sinr::DEFAULT_NOISE_FIGURE_DB,
            sinr_weight: 0.5,
        }
    }
}

impl PlanningConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let fail = |m: &str| Err(PlannerError::Config(m.into()));
        if !(self.coverage_target > 0.0 && self.coverage_target <= 1.0) {
            return fail("coverage_target must lie in (0, 1]");
        }
        if !(self.min_spacing >= 0.0) {
            return fail("min_spacing must be non-negative");
        }
        if !(self.power_range.min <= self.power_range.max) || !self.power_range.min.is_finite() {
            return fail("power_range must be non-empty");
        }
        if !(self.tilt_range.min <= self.tilt_range.max) || self.tilt_range.min < 0.0 || self.tilt_range.max > 90.0 {
            return fail("tilt_range must be a non-empty subset of [0, 90]");
        }
        if self.max_stations == 0 {
            return fail("max_stations must be at least 1");
        }
        if !(self.azimuth_step > 0.0 && self.azimuth_step <= 360.0) {
            return fail("azimuth_step must lie in (0, 360]");
        }
        if !(self.tilt_step > 0.0 && self.power_step > 0.0) {
            return fail("tilt_step and power_step must be positive");
        }
        if !(self.sinr_weight >= 0.0 && self.sinr_weight < 1.0) {
            return fail("sinr_weight must lie in [0, 1)");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0 && self.initial_temperature > 0.0) {
            return fail("cooling must lie in (0, 1) with a positive initial temperature");
        }
        Ok(())
    }

    /// Lattice pitch in cells for candidate sites.
    fn pitch_cells(&self, resolution: f64) -> usize {
        ((self.min_spacing / 2.0) / resolution).ceil().max(1.0) as usize
    }

    fn power_normalizer(&self) -> f64 {
        self.max_stations as f64 * db_to_linear(self.power_range.max)
    }

    fn azimuths(&self) -> Vec<f64> {
        let n = (360.0 / self.azimuth_step).round().max(1.0) as usize;
        (0..n).map(|k| k as f64 * self.azimuth_step).collect()
    }

    fn initial_tilt(&self) -> f64 {
        self.tilt_range.min.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub stations: Vec<BaseStation>,
    pub achieved_coverage: f64,
    pub compliant_cells: usize,
    pub outdoor_cells: usize,
    pub sinr_compliant_cells: usize,
    pub compliant: bool,
    pub objective: f64,
    pub initial_coverage: f64,
    pub coverage_target: f64,
    pub seed: u64,
    pub objective_trace: Vec<f64>,
}

impl NetworkPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Outdoor cell centres subsampled on a lattice of pitch `ceil(min_spacing / 2 / resolution)`
/// cells, offset half a pitch from the grid edge. Indoor lattice points are skipped.
pub fn candidate_sites(
    grid: &SimulationGrid,
    _env: &EnvironmentModel,
    config: &PlanningConfig,
) -> Result<Vec<LocalPoint>, PlannerError> {
    let step = config.pitch_cells(grid.resolution);
    let offset = step / 2;
    let mut sites = Vec::new();
    for j in (offset..grid.height).step_by(step) {
        for i in (offset..grid.width).step_by(step) {
            let k = j * grid.width + i;
            if !grid.is_indoor(k) {
                sites.push(grid.center(k));
            }
        }
    }
    if sites.is_empty() {
        return Err(PlannerError::NoFeasibleSites);
    }
    Ok(sites)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub coverage: f64,
    pub compliant_cells: usize,
    pub sinr_compliant_cells: usize,
    pub outdoor_cells: usize,
    pub objective: f64,
}

/// Checks spacing, count and placement invariants of a plan.
pub fn check_plan(
    stations: &[BaseStation],
    grid: &SimulationGrid,
    config: &PlanningConfig,
) -> Result<(), PlannerError> {
    if stations.len() > config.max_stations {
        return Err(PlannerError::TooManyStations { count: stations.len(), max: config.max_stations });
    }
    if !stations.is_empty() {
        crate::propagation::validate_stations(stations)?;
    }
    for s in stations {
        match grid.locate(&s.position) {
            Some(k) if !grid.is_indoor(k) => {}
            _ => return Err(PlannerError::NotOutdoor(s.id)),
        }
    }
    for (n, a) in stations.iter().enumerate() {
        for b in &stations[n + 1..] {
            let distance = a.position.distance(&b.position);
            if distance < config.min_spacing {
                return Err(PlannerError::Spacing { a: a.id, b: b.id, distance, min_spacing: config.min_spacing });
            }
        }
    }
    Ok(())
}

/// Coverage and objective of a plan.
///
/// `objective = coverage − λ₁·count/max_stations − λ₂·Σ P_linear / (max_stations·P_max)
/// + w·sinr_fraction / outdoor_cells`.
///
/// The last term breaks ties between plans with equal path-loss coverage in
/// favour of higher SINR coverage; with `w < 1` it is worth less than one
/// compliant cell.
pub fn evaluate_plan(
    stations: &[BaseStation],
    grid: &SimulationGrid,
    env: &EnvironmentModel,
    pattern: &AntennaPattern,
    prop: &PropagationConfig,
    config: &PlanningConfig,
) -> Result<Evaluation, PlannerError> {
    check_plan(stations, grid, config)?;
    let losses: Vec<Vec<f64>> = stations
        .iter()
        .map(|bs| LinkTable::build(bs.position, bs.mast_height, bs.frequency, grid, env, prop).losses(bs, pattern))
        .collect();
    let gains: Vec<Vec<f64>> = losses.iter().map(|l| linear_gains(l)).collect();
    let links: Vec<Link<'_>> = stations
        .iter()
        .zip(losses.iter().zip(&gains))
        .map(|(station, (losses, gains))| Link { station, losses, gains })
        .collect();
    Ok(score(&links, grid.outdoor_count(), config))
}

fn linear_gains(losses: &[f64]) -> Vec<f64> {
    losses.iter().map(|l| db_to_linear(-l)).collect()
}

/// One station with its per-outdoor-cell losses (dB) and linear gains.
struct Link<'a> {
    station: &'a BaseStation,
    losses: &'a [f64],
    gains: &'a [f64],
}

/// Path-loss-compliant and SINR-compliant cell counts.
fn count_compliant(links: &[Link<'_>], outdoor: usize, config: &PlanningConfig) -> (usize, usize) {
    if links.is_empty() {
        return (0, 0);
    }
    let power: Vec<f64> = links.iter().map(|l| db_to_linear(l.station.tx_power)).collect();
    let noise: Vec<f64> =
        links.iter().map(|l| db_to_linear(thermal_noise(l.station.bandwidth, config.noise_figure))).collect();
    let sinr_min = db_to_linear(config.sinr_threshold);
    let (mut pl_ok, mut sinr_ok) = (0, 0);
    for c in 0..outdoor {
        let mut best = 0;
        let mut best_rx = links[0].station.tx_power - links[0].losses[c];
        let mut total = 0.0;
        for (s, l) in links.iter().enumerate() {
            total += power[s] * l.gains[c];
            if s == 0 {
                continue;
            }
            let rx = l.station.tx_power - l.losses[c];
            if rx > best_rx || (rx == best_rx && l.station.id < links[best].station.id) {
                best = s;
                best_rx = rx;
            }
        }
        if links[best].losses[c] <= config.pl_threshold {
            pl_ok += 1;
        }
        let signal = power[best] * links[best].gains[c];
        if signal > sinr_min * ((total - signal).max(0.0) + noise[best]) {
            sinr_ok += 1;
        }
    }
    (pl_ok, sinr_ok)
}

fn score(links: &[Link<'_>], outdoor: usize, config: &PlanningConfig) -> Evaluation {
    let (compliant_cells, sinr_compliant_cells) = count_compliant(links, outdoor, config);
    let frac = |n: usize| if outdoor == 0 { 0.0 } else { n as f64 / outdoor as f64 };
    let coverage = frac(compliant_cells);
    let power: f64 = links.iter().map(|l| db_to_linear(l.station.tx_power)).sum();
    let objective = coverage + config.sinr_weight * frac(sinr_compliant_cells) / outdoor.max(1) as f64
        - config.count_penalty * links.len() as f64 / config.max_stations as f64
        - config.power_penalty * power / config.power_normalizer();
    Evaluation { coverage, compliant_cells, sinr_compliant_cells, outdoor_cells: outdoor, objective }
}

/// Places `count` stations at random candidate sites honouring the spacing
/// rule, with random azimuth (multiple of the azimuth step) and random tilt.
pub fn random_initial_stations(
    grid: &SimulationGrid,
    env: &EnvironmentModel,
    config: &PlanningConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<BaseStation>, PlannerError> {
    let mut sites = candidate_sites(grid, env, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sites.shuffle(&mut rng);
    let azimuths = config.azimuths();
    let tilt_steps = ((config.tilt_range.max - config.tilt_range.min) / config.tilt_step).floor() as usize;
    let mut stations: Vec<BaseStation> = Vec::new();
    for site in sites {
        if stations.len() == count {
            break;
        }
        if stations.iter().any(|s| s.position.distance(&site) < config.min_spacing) {
            continue;
        }
        let az = azimuths[rng.random_range(0..azimuths.len())];
        let tilt = config.tilt_range.min + rng.random_range(0..=tilt_steps) as f64 * config.tilt_step;
        let id = stations.len() as u32 + 1;
        stations.push(
            BaseStation::new(id, site)
                .with_azimuth(az)
                .with_tilt(tilt)
                .with_power(config.new_station_power.clamp(config.power_range.min, config.power_range.max)),
        );
    }
    Ok(stations)
}

struct Site {
    position: LocalPoint,
    table: Option<Arc<LinkTable>>,
}

/// Shared state for one optimization run.
struct Workspace<'a> {
    grid: &'a SimulationGrid,
    env: &'a EnvironmentModel,
    pattern: &'a AntennaPattern,
    prop: &'a PropagationConfig,
    config: &'a PlanningConfig,
    sites: Vec<Site>,
    candidates: usize,
    outdoor: usize,
    mast_height: f64,
    frequency: f64,
}

impl<'a> Workspace<'a> {
    fn table(&mut self, site: usize) -> Arc<LinkTable> {
        if self.sites[site].table.is_none() {
            let t = LinkTable::build(
                self.sites[site].position,
                self.mast_height,
                self.frequency,
                self.grid,
                self.env,
                self.prop,
            );
            self.sites[site].table = Some(Arc::new(t));
        }
        self.sites[site].table.clone().expect("table built")
    }

    fn site_of(&mut self, p: LocalPoint) -> usize {
        if let Some(k) = self.sites.iter().position(|s| s.position == p) {
            return k;
        }
        self.sites.push(Site { position: p, table: None });
        self.sites.len() - 1
    }
}

/// Per-cell serving state used by the greedy phase.
struct ServedState {
    rx: Vec<f64>,
    loss: Vec<f64>,
    id: Vec<StationId>,
}

impl ServedState {
    fn from_members(members: &[Member], outdoor: usize) -> Self {
        let mut s = Self {
            rx: vec![f64::NEG_INFINITY; outdoor],
            loss: vec![f64::INFINITY; outdoor],
            id: vec![StationId(u32::MAX); outdoor],
        };
        for m in members {
            s.absorb(m);
        }
        s
    }

    fn takes_over(&self, c: usize, rx: f64, id: StationId) -> bool {
        rx > self.rx[c] || (rx == self.rx[c] && id < self.id[c])
    }

    fn absorb(&mut self, m: &Member) {
        for c in 0..self.rx.len() {
            let rx = m.station.tx_power - m.losses[c];
            if self.takes_over(c, rx, m.station.id) {
                self.rx[c] = rx;
                self.loss[c] = m.losses[c];
                self.id[c] = m.station.id;
            }
        }
    }

    /// Compliant cells if `station` joined the plan.
    fn compliant_with(&self, station: &BaseStation, table: &LinkTable, pattern: &AntennaPattern, threshold: f64) -> usize {
        (0..self.rx.len())
            .filter(|&c| {
                let loss = table.loss_at(c, station, pattern);
                if self.takes_over(c, station.tx_power - loss, station.id) {
                    loss <= threshold
                } else {
                    self.loss[c] <= threshold
                }
            })
            .count()
    }
}

#[derive(Clone)]
struct Member {
    station: BaseStation,
    site: usize,
    losses: Arc<Vec<f64>>,
    gains: Arc<Vec<f64>>,
}

impl Member {
    fn new(station: BaseStation, site: usize, losses: Vec<f64>) -> Self {
        let gains = Arc::new(linear_gains(&losses));
        Self { station, site, losses: Arc::new(losses), gains }
    }
}

#[derive(Clone)]
struct State {
    members: Vec<Member>,
    eval: Evaluation,
}

impl State {
    fn stations(&self) -> Vec<BaseStation> {
        self.members.iter().map(|m| m.station.clone()).collect()
    }
}

fn evaluate_members(members: &[Member], ws: &Workspace<'_>) -> Evaluation {
    let links: Vec<Link<'_>> =
        members.iter().map(|m| Link { station: &m.station, losses: &m.losses, gains: &m.gains }).collect();
    score(&links, ws.outdoor, ws.config)
}

fn member(ws: &mut Workspace<'_>, station: BaseStation, site: usize) -> Member {
    let losses = ws.table(site).losses(&station, ws.pattern);
    Member::new(station, site, losses)
}

fn spacing_ok(members: &[Member], skip: Option<usize>, p: &LocalPoint, min_spacing: f64) -> bool {
    members
        .iter()
        .enumerate()
        .filter(|(n, _)| Some(*n) != skip)
        .all(|(_, m)| m.station.position.distance(p) >= min_spacing)
}

/// Optimizes station placement and parameters, starting from `initial`.
///
/// The returned plan never has fewer path-loss-compliant or SINR-compliant
/// cells than `initial`, and `compliant`
/// is set iff its coverage reaches `config.coverage_target`.
pub fn optimize(
    env: &EnvironmentModel,
    grid: &SimulationGrid,
    pattern: &AntennaPattern,
    prop: &PropagationConfig,
    config: &PlanningConfig,
    initial: &[BaseStation],
) -> Result<NetworkPlan, PlannerError> {
    optimize_with_progress(env, grid, pattern, prop, config, initial, &mut |_| {})
}

/// [`optimize`] reporting percent complete (0–100) through `progress`.
pub fn optimize_with_progress(
    env: &EnvironmentModel,
    grid: &SimulationGrid,
    pattern: &AntennaPattern,
    prop: &PropagationConfig,
    config: &PlanningConfig,
    initial: &[BaseStation],
    progress: &mut dyn FnMut(f64),
) -> Result<NetworkPlan, PlannerError> {
    config.validate()?;
    let candidates = candidate_sites(grid, env, config)?;
    check_plan(initial, grid, config)?;

    let template = initial.first().cloned().unwrap_or_else(|| BaseStation::new(0, LocalPoint::default()));
    let mut ws = Workspace {
        grid,
        env,
        pattern,
        prop,
        config,
        candidates: candidates.len(),
        sites: candidates.into_iter().map(|position| Site { position, table: None }).collect(),
        outdoor: grid.outdoor_count(),
        mast_height: template.mast_height,
        frequency: template.frequency,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut next_id = initial.iter().map(|s| s.id.0).max().unwrap_or(0) + 1;

    let mut members = Vec::with_capacity(initial.len());
    for s in initial {
        let site = ws.site_of(s.position);
        // Stations with non-default radio parameters get their own table.
        let m = if s.mast_height == ws.mast_height && s.frequency == ws.frequency {
            member(&mut ws, s.clone(), site)
        } else {
            let t = LinkTable::build(s.position, s.mast_height, s.frequency, grid, env, prop);
            Member::new(s.clone(), site, t.losses(s, pattern))
        };
        members.push(m);
    }
    let initial_eval = evaluate_members(&members, &ws);
    let initial_state = State { members: members.clone(), eval: initial_eval };
    progress(0.0);

    // Phase 1: greedy construction.
    let azimuths = config.azimuths();
    let tilt = config.initial_tilt();
    let power = config.new_station_power.clamp(config.power_range.min, config.power_range.max);
    let mut eval = initial_eval;
    let mut served = ServedState::from_members(&members, ws.outdoor);
    while !meets_fraction(eval.compliant_cells, eval.outdoor_cells, config.coverage_target)
        && members.len() < config.max_stations
    {
        let mut best: Option<(usize, usize, BaseStation)> = None;
        for site in 0..ws.candidates {
            let p = ws.sites[site].position;
            if !spacing_ok(&members, None, &p, config.min_spacing) {
                continue;
            }
            let table = ws.table(site);
            for &az in &azimuths {
                let station = BaseStation {
                    mast_height: ws.mast_height,
                    frequency: ws.frequency,
                    ..BaseStation::new(next_id, p).with_azimuth(az).with_tilt(tilt).with_power(power)
                };
                let cells = served.compliant_with(&station, &table, ws.pattern, config.pl_threshold);
                if best.as_ref().is_none_or(|(c, _, _)| cells > *c) {
                    best = Some((cells, site, station));
                }
            }
        }
        match best {
            Some((cells, site, station)) if cells > eval.compliant_cells => {
                let m = member(&mut ws, station, site);
                served.absorb(&m);
                members.push(m);
                eval = evaluate_members(&members, &ws);
                debug_assert_eq!(eval.compliant_cells, cells);
                next_id += 1;
            }
            _ => break,
        }
    }
    progress(20.0);

    // Phase 2: simulated annealing.
    let mut current = State { members, eval };
    let above_floor =
        |e: &Evaluation| e.compliant_cells >= initial_eval.compliant_cells && e.sinr_compliant_cells >= initial_eval.sinr_compliant_cells;
    let mut best = if above_floor(&current.eval) { current.clone() } else { initial_state };
    let mut temperature = config.initial_temperature;
    let mut trace = Vec::with_capacity(config.iteration_budget);
    let pitch_m = config.pitch_cells(grid.resolution) as f64 * grid.resolution;
    let mut last_pct = 20.0;

    for iter in 0..config.iteration_budget {
        if let Some(candidate) = propose(&mut ws, &current, &mut rng, &azimuths, pitch_m, &mut next_id) {
            let delta = candidate.eval.objective - current.eval.objective;
            let accept = delta >= 0.0 || rng.random::<f64>() < (delta / temperature).exp();
            if accept {
                current = candidate;
                let compliant_now =
                    meets_fraction(current.eval.compliant_cells, current.eval.outdoor_cells, config.coverage_target);
                let best_compliant =
                    meets_fraction(best.eval.compliant_cells, best.eval.outdoor_cells, config.coverage_target);
                if current.eval.objective > best.eval.objective
                    && above_floor(&current.eval)
                    && (compliant_now || !best_compliant)
                {
                    best = current.clone();
                }
            }
        }
        temperature *= config.cooling;
        trace.push(best.eval.objective);
        let pct = 20.0 + 80.0 * (iter + 1) as f64 / config.iteration_budget as f64;
        if pct - last_pct >= 1.0 {
            last_pct = pct;
            progress(pct);
        }
    }
    progress(100.0);

    let mut stations = best.stations();
    stations.sort_by_key(|s| s.id);
    let eval = best.eval;
    Ok(NetworkPlan {
        stations,
        achieved_coverage: eval.coverage,
        compliant_cells: eval.compliant_cells,
        outdoor_cells: eval.outdoor_cells,
        sinr_compliant_cells: eval.sinr_compliant_cells,
        compliant: meets_fraction(eval.compliant_cells, eval.outdoor_cells, config.coverage_target),
        objective: eval.objective,
        initial_coverage: initial_eval.coverage,
        coverage_target: config.coverage_target,
        seed: config.seed,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Relocate,
    Rotate,
    Tilt,
    Power,
    Add,
    Remove,
}

const MOVES: [Move; 6] = [Move::Relocate, Move::Rotate, Move::Tilt, Move::Power, Move::Add, Move::Remove];

/// Draws one neighbouring state, or `None` when the drawn move is infeasible.
fn propose(
    ws: &mut Workspace<'_>,
    current: &State,
    rng: &mut ChaCha8Rng,
    azimuths: &[f64],
    pitch_m: f64,
    next_id: &mut u32,
) -> Option<State> {
    let config = ws.config;
    let mv = if current.members.is_empty() { Move::Add } else { MOVES[rng.random_range(0..MOVES.len())] };
    let mut members = current.members.clone();
    let pick = if members.is_empty() { 0 } else { rng.random_range(0..members.len()) };
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };

    match mv {
        Move::Relocate => {
            let from = members[pick].station.position;
            let nearby: Vec<usize> = (0..ws.candidates)
                .filter(|&k| {
                    let p = ws.sites[k].position;
                    p != from && p.distance(&from) <= 2.0 * pitch_m + 1e-9
                })
                .collect();
            if nearby.is_empty() {
                return None;
            }
            let site = nearby[rng.random_range(0..nearby.len())];
            let p = ws.sites[site].position;
            if !spacing_ok(&members, Some(pick), &p, config.min_spacing) {
                return None;
            }
            let old = &members[pick].station;
            if old.mast_height != ws.mast_height || old.frequency != ws.frequency {
                return None;
            }
            let station = BaseStation { position: p, ..old.clone() };
            members[pick] = member(ws, station, site);
        }
        Move::Rotate => {
            let old = members[pick].station.clone();
            let station = old.clone().with_azimuth(old.azimuth + sign * config.azimuth_step);
            members[pick] = rebuilt(ws, &members[pick], station);
        }
        Move::Tilt => {
            let old = members[pick].station.clone();
            let tilt = old.down_tilt + sign * config.tilt_step;
            if !config.tilt_range.contains(tilt) {
                return None;
            }
            members[pick] = rebuilt(ws, &members[pick], old.with_tilt(tilt));
        }
        Move::Power => {
            let old = members[pick].station.clone();
            let power = old.tx_power + sign * config.power_step;
            if !config.power_range.contains(power) {
                return None;
            }
            // Power does not change losses.
            members[pick].station = old.with_power(power);
        }
        Move::Add => {
            if members.len() >= config.max_stations {
                return None;
            }
            let site = rng.random_range(0..ws.candidates);
            let p = ws.sites[site].position;
            if !spacing_ok(&members, None, &p, config.min_spacing) {
                return None;
            }
            let az = azimuths[rng.random_range(0..azimuths.len())];
            let power = config.new_station_power.clamp(config.power_range.min, config.power_range.max);
            let station = BaseStation {
                mast_height: ws.mast_height,
                frequency: ws.frequency,
                ..BaseStation::new(*next_id, p).with_azimuth(az).with_tilt(config.initial_tilt()).with_power(power)
            };
            *next_id += 1;
            members.push(member(ws, station, site));
        }
        Move::Remove => {
            if members.len() <= 1 {
                return None;
            }
            members.remove(pick);
        }
    }
    let eval = evaluate_members(&members, ws);
    Some(State { members, eval })
}

fn rebuilt(ws: &mut Workspace<'_>, old: &Member, station: BaseStation) -> Member {
    if old.station.mast_height == ws.mast_height && old.station.frequency == ws.frequency {
        member(ws, station, old.site)
    } else {
        let t = LinkTable::build(station.position, station.mast_height, station.frequency, ws.grid, ws.env, ws.prop);
        let losses = t.losses(&station, ws.pattern);
        Member::new(station, old.site, losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::GeoBBox;
    use crate::geom::{Polygon, Rect};
    use crate::scene::{create_grid, Building};

    fn open_scene(side: f64) -> EnvironmentModel {
        EnvironmentModel::from_parts(
            GeoBBox::new(0.0, 0.0, 0.001, 0.001).unwrap(),
            Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(side, side)),
            Vec::new(),
        )
    }

    #[test]
    fn candidate_lattice_on_open_square() {
        let env = open_scene(100.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let sites = candidate_sites(&grid, &env, &PlanningConfig::default()).unwrap();
        assert_eq!(sites.len(), 16);
        assert_eq!(sites[0], LocalPoint::new(12.5, 12.5));
        assert_eq!(sites[15], LocalPoint::new(87.5, 87.5));
        assert_eq!(sites, candidate_sites(&grid, &env, &PlanningConfig::default()).unwrap());
    }

    #[test]
    fn fully_built_scene_has_no_sites() {
        let mut env = open_scene(100.0);
        env.buildings.push(Building::new(
            Polygon::rectangle(LocalPoint::new(-1.0, -1.0), LocalPoint::new(101.0, 101.0)),
            10.0,
        ));
        let grid = create_grid(&env, 5.0).unwrap();
        assert_eq!(
            candidate_sites(&grid, &env, &PlanningConfig::default()),
            Err(PlannerError::NoFeasibleSites)
        );
    }

    #[test]
    fn empty_plan_scores_zero() {
        let env = open_scene(100.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let e = evaluate_plan(&[], &grid, &env, &AntennaPattern::default(), &PropagationConfig::default(), &PlanningConfig::default())
            .unwrap();
        assert_eq!(e.coverage, 0.0);
        assert!(e.objective <= 0.0);
    }

    #[test]
    fn spacing_violation_is_rejected() {
        let env = open_scene(100.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let s = vec![
            BaseStation::new(1, LocalPoint::new(12.5, 12.5)),
            BaseStation::new(2, LocalPoint::new(37.5, 12.5)),
        ];
        let err = evaluate_plan(&s, &grid, &env, &AntennaPattern::default(), &PropagationConfig::default(), &PlanningConfig::default());
        assert!(matches!(err, Err(PlannerError::Spacing { .. })));
    }

    #[test]
    fn config_validation() {
        let mut c = PlanningConfig::default();
        assert!(c.validate().is_ok());
        c.coverage_target = 0.0;
        assert!(c.validate().is_err());
        let c = PlanningConfig { power_range: Range { min: 40.0, max: 10.0 }, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: PlanningConfig = serde_json::from_str(r#"{"seed": 7, "min_spacing": 30}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.min_spacing, 30.0);
        assert_eq!(c.coverage_target, 0.8);
    }

    #[test]
    fn random_initial_respects_spacing() {
        let env = open_scene(200.0);
        let grid = create_grid(&env, 5.0).unwrap();
        let cfg = PlanningConfig::default();
        let s = random_initial_stations(&grid, &env, &cfg, 3, 11).unwrap();
        assert_eq!(s.len(), 3);
        check_plan(&s, &grid, &cfg).unwrap();
        assert_eq!(s, random_initial_stations(&grid, &env, &cfg, 3, 11).unwrap());
    }
}
