//! Plans each bundled scenario from 3 random stations over several seeds and
//! prints PL/SINR coverage before and after.

use std::time::Instant;

use radioplan::geodata::parse_osm;
use radioplan::planner::{optimize, random_initial_stations};
use radioplan::propagation::generate_radio_map;
use radioplan::scene::{build_environment, create_grid};
use radioplan::sinr::{compute_sinr_map, coverage_stats};
use radioplan::{AntennaPattern, PlanningConfig, PropagationConfig};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/osm");
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    for name in ["synthetic_urban", "suburban", "open_park"] {
        let bytes = std::fs::read(format!("{dir}/{name}.osm")).unwrap();
        let env = build_environment(&parse_osm(&bytes).unwrap()).unwrap();
        let grid = create_grid(&env, 5.0).unwrap();
        let pattern = AntennaPattern::default();
        let prop = PropagationConfig::default();
        println!("{name}: {} buildings, {}x{} grid, {} outdoor", env.buildings.len(), grid.width, grid.height, grid.outdoor_count());
        let t = Instant::now();
        for seed in 0..seeds {
            let config = PlanningConfig { seed, ..Default::default() };
            let initial = random_initial_stations(&grid, &env, &config, 3, seed).unwrap();
            let stats = |st: &[radioplan::BaseStation]| {
                let rm = generate_radio_map(&grid, st, &env, &pattern, &prop).unwrap();
                let sm = compute_sinr_map(&grid, st, &env, &pattern, 7.0, &prop).unwrap();
                coverage_stats(&rm, &sm, 100.0, 5.0).unwrap()
            };
            let before = stats(&initial);
            let plan = optimize(&env, &grid, &pattern, &prop, &config, &initial).unwrap();
            let after = stats(&plan.stations);
            println!(
                "  seed {seed}: PL {:.3} -> {:.3}  SINR {:.3} -> {:.3}  n={} compliant={}",
                before.pl_compliant_fraction,
                after.pl_compliant_fraction,
                before.sinr_compliant_fraction,
                after.sinr_compliant_fraction,
                plan.stations.len(),
                plan.compliant
            );
        }
        println!("  elapsed {:.1}s", t.elapsed().as_secs_f64());
    }
}
