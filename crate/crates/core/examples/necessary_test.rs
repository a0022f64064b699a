//! Directional derivative of the performance functional at the optimum, estimated two ways.

use jumpvol::cli::ScenarioConfig;
use jumpvol::hsolver::{solve_h_fixed_point, HSolverConfig, PhiConfig};
use jumpvol::mc::{necessary_condition_test, SimulationConfig};
use jumpvol::strategy::{OptimalRule, Perturbation};

fn main() -> jumpvol::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default_jump.toml");
    let cfg = ScenarioConfig::load(path.as_ref())?;
    let model = cfg.model()?;
    let hcfg = HSolverConfig { t_nodes: 11, y_nodes: 13, ..cfg.hsolver.clone() };
    let grid = solve_h_fixed_point(&model, &hcfg, &PhiConfig { pairs: 64, seed: cfg.seed, ..cfg.phi.clone() })?;
    let rule = OptimalRule::new(&model, &grid);
    let sim = SimulationConfig { paths: 4000, steps: 200, seed: cfg.seed, ..cfg.simulation.clone() };
    let horizon = model.horizon();
    let zetas = [
        Perturbation::Constant(1.0),
        Perturbation::Window { from: 0.5 * horizon, to: horizon, value: 1.0 },
        Perturbation::TanhFactor,
    ];

    let rep = necessary_condition_test(&model, &rule, None, &zetas, Some(0.2), cfg.x0, cfg.y0, &sim)?;
    print!("{}", rep.to_report());
    Ok(())
}
