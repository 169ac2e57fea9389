//! Reference computations and scene builders shared by integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use radioplan::geodata::GeoBBox;
use radioplan::geom::{LocalPoint, Polygon, Rect};
use radioplan::propagation::{generate_radio_map, AntennaPattern, BaseStation, PropagationConfig};
use radioplan::scene::{create_grid, Building, EnvironmentModel};
use radioplan::sinr::compute_sinr_map;

const C: f64 = 299_792_458.0;

pub fn closed_form_fspl(d: f64, f: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d.max(1.0) * f / C).log10()
}

pub struct Instance {
    pub env: EnvironmentModel,
    pub rects: Vec<(f64, f64, f64, f64)>,
    pub stations: Vec<BaseStation>,
    pub resolution: f64,
}

/// At most 20 x 20 cells, up to four rectangular buildings and four stations.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let resolution = [2.0, 5.0, 10.0][rng.random_range(0..3)];
    let w = rng.random_range(3..=20) as f64 * resolution;
    let h = rng.random_range(3..=20) as f64 * resolution;
    let mut rects = Vec::new();
    let mut buildings = Vec::new();
    for _ in 0..rng.random_range(0..5) {
        let x0 = rng.random_range(0.0..w * 0.8);
        let y0 = rng.random_range(0.0..h * 0.8);
        let x1 = (x0 + w * rng.random_range(0.1..0.4)).min(w);
        let y1 = (y0 + h * rng.random_range(0.1..0.4)).min(h);
        rects.push((x0, y0, x1, y1));
        buildings.push(Building::new(Polygon::rectangle(LocalPoint::new(x0, y0), LocalPoint::new(x1, y1)), 12.0));
    }
    let env = EnvironmentModel::from_parts(
        GeoBBox::new(22.0, 113.0, 22.001, 113.001).unwrap(),
        Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(w, h)),
        buildings,
    );
    let stations = (0..rng.random_range(1..=4))
        .map(|k| {
            BaseStation::new(k + 1, LocalPoint::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
                .with_azimuth(rng.random_range(0.0..360.0))
                .with_tilt(rng.random_range(0.0..15.0))
                .with_power(rng.random_range(20.0..40.0))
        })
        .collect();
    Instance { env, rects, stations, resolution }
}

/// Crossings of the segment p→q with the four sides of an axis-aligned box.
fn rect_crossings(p: LocalPoint, q: LocalPoint, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> usize {
    let mut n = 0;
    for x in [x0, x1] {
        if (q.x - p.x).abs() > 0.0 {
            let t = (x - p.x) / (q.x - p.x);
            let y = p.y + t * (q.y - p.y);
            if (0.0..=1.0).contains(&t) && y >= y0 && y <= y1 {
                n += 1;
            }
        }
    }
    for y in [y0, y1] {
        if (q.y - p.y).abs() > 0.0 {
            let t = (y - p.y) / (q.y - p.y);
            let x = p.x + t * (q.x - p.x);
            if (0.0..=1.0).contains(&t) && x >= x0 && x <= x1 {
                n += 1;
            }
        }
    }
    n
}

fn wrap(deg: f64) -> f64 {
    let a = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if a == -180.0 {
        180.0
    } else {
        a
    }
}

/// Path loss from first principles, no library geometry.
pub fn oracle_loss(inst: &Instance, bs: &BaseStation, rx: LocalPoint) -> f64 {
    let (dx, dy) = (rx.x - bs.position.x, rx.y - bs.position.y);
    let ground = (dx * dx + dy * dy).sqrt();
    let dh = bs.mast_height - 1.5;
    let d = (ground * ground + dh * dh).sqrt();
    let walls: usize = inst.rects.iter().map(|&r| rect_crossings(bs.position, rx, r)).sum();
    let phi = wrap(dx.atan2(dy).to_degrees() - bs.azimuth);
    let theta = wrap(dh.atan2(ground).to_degrees() - bs.down_tilt);
    let gain = 8.0 - (12.0 * (phi / 65.0).powi(2)).min(20.0) - (12.0 * (theta / 10.0).powi(2)).min(20.0);
    closed_form_fspl(d, bs.frequency) + 10.0 * walls as f64 - gain
}

fn inside_any(inst: &Instance, p: LocalPoint) -> bool {
    inst.rects.iter().any(|&(x0, y0, x1, y1)| p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1)
}

/// Compares the library's radio and SINR maps (noise figure 7 dB) with a
/// per-cell brute force; returns the largest deviation in dB.
pub fn check_instance(inst: &Instance) -> Result<f64, String> {
    let (pattern, cfg) = (AntennaPattern::default(), PropagationConfig::default());
    let grid = create_grid(&inst.env, inst.resolution).map_err(|e| e.to_string())?;
    if grid.width > 20 || grid.height > 20 {
        return Err(format!("grid {}x{} exceeds 20x20", grid.width, grid.height));
    }
    let rm = generate_radio_map(&grid, &inst.stations, &inst.env, &pattern, &cfg).map_err(|e| e.to_string())?;
    let sm = compute_sinr_map(&grid, &inst.stations, &inst.env, &pattern, 7.0, &cfg).map_err(|e| e.to_string())?;
    let mut worst = 0f64;
    for k in 0..grid.len() {
        let c = grid.center(k);
        let (Some(r), Some(s)) = (&rm.cells[k], &sm.cells[k]) else {
            if rm.cells[k].is_some() || sm.cells[k].is_some() || !inside_any(inst, c) {
                return Err(format!("cell {k}: indoor/outdoor disagreement"));
            }
            continue;
        };
        if inside_any(inst, c) {
            return Err(format!("cell {k}: indoor cell has data"));
        }
        let losses: Vec<f64> = inst.stations.iter().map(|b| oracle_loss(inst, b, c)).collect();
        let rx: Vec<f64> = inst.stations.iter().zip(&losses).map(|(b, l)| b.tx_power - l).collect();
        let best = (0..rx.len()).fold(0, |b, i| if rx[i] > rx[b] { i } else { b });
        if r.serving != inst.stations[best].id || s.serving != r.serving {
            return Err(format!("cell {k}: serving station differs"));
        }
        let lin = |db: f64| 10f64.powf(db / 10.0);
        let interference: f64 = (0..rx.len()).filter(|&i| i != best).map(|i| lin(rx[i])).sum();
        let noise = lin(-174.0 + 10.0 * (80e6f64).log10() + 7.0);
        let sinr = 10.0 * (lin(rx[best]) / (interference + noise)).log10();
        worst = worst.max((r.best_path_loss - losses[best]).abs()).max((s.sinr - sinr).abs());
    }
    if worst >= 1e-9 {
        return Err(format!("deviation {worst:e} dB"));
    }
    Ok(worst)
}

pub fn slab(x0: f64, y0: f64, x1: f64, y1: f64) -> Building {
    Building::new(Polygon::rectangle(LocalPoint::new(x0, y0), LocalPoint::new(x1, y1)), 20.0)
}

/// A 250 m x 100 m open field (1000 cells at 5 m) split by ten thin walls,
/// each adding 20 dB, so no station reaches across. With `notch` the walls
/// step around the cell centred at (197.5, 2.5), moving it to the far side.
/// A 100 MHz station on the near side then covers 800 cells, or 799 with the notch.
pub fn partitioned_field(notch: bool) -> EnvironmentModel {
    let mut buildings = Vec::new();
    for k in 0..10 {
        let d = 0.4 * k as f64;
        if notch {
            let y = 7.0 - d;
            buildings.push(slab(193.0 + d, 0.0, 193.2 + d, y + 0.2));
            buildings.push(slab(193.0 + d, y, 198.2 + d, y + 0.2));
            buildings.push(slab(198.0 + d, y, 198.2 + d, 100.0));
        } else {
            buildings.push(slab(198.0 + d, 0.0, 198.2 + d, 100.0));
        }
    }
    EnvironmentModel::from_parts(
        GeoBBox::new(22.0, 113.0, 22.001, 113.003).unwrap(),
        Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(250.0, 100.0)),
        buildings,
    )
}

/// The near-side station used with [`partitioned_field`].
pub fn low_band_station() -> BaseStation {
    let mut s = BaseStation::new(1, LocalPoint::new(52.5, 52.5));
    s.frequency = 100e6;
    s
}

/// Square field of 100 to 220 m with up to seven rectangular buildings.
pub fn random_scene(rng: &mut ChaCha8Rng) -> EnvironmentModel {
    let side = rng.random_range(100.0..220.0);
    let buildings = (0..rng.random_range(0..8))
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..side - 20.0), rng.random_range(0.0..side - 20.0));
            slab(x, y, x + rng.random_range(5.0..20.0), y + rng.random_range(5.0..20.0))
        })
        .collect();
    EnvironmentModel::from_parts(
        GeoBBox::new(22.0, 113.0, 22.002, 113.002).unwrap(),
        Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(side, side)),
        buildings,
    )
}
