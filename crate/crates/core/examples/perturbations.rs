//! Compares the optimal strategy with its perturbation family on common random numbers.

use jumpvol::cli::ScenarioConfig;
use jumpvol::hsolver::{solve_h_fixed_point, HSolverConfig, PhiConfig};
use jumpvol::mc::{perturbation_family, perturbation_suite, SimulationConfig};
use jumpvol::strategy::OptimalRule;

fn main() -> jumpvol::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default_jump.toml");
    let cfg = ScenarioConfig::load(path.as_ref())?;
    let model = cfg.model()?;
    let hcfg = HSolverConfig { t_nodes: 11, y_nodes: 13, ..cfg.hsolver.clone() };
    let grid = solve_h_fixed_point(&model, &hcfg, &PhiConfig { pairs: 64, seed: cfg.seed, ..cfg.phi.clone() })?;
    let rule = OptimalRule::new(&model, &grid);
    let sim = SimulationConfig { paths: 4000, steps: 200, seed: cfg.seed, ..cfg.simulation.clone() };

    for c in perturbation_suite(&model, &rule, &perturbation_family(), cfg.x0, cfg.y0, &sim)? {
        println!(
            "{:<28} J diff {:+.4e} (stderr {:.2e})  optimum not beaten: {}",
            c.name,
            c.diff_mean,
            c.diff_stderr,
            c.base_not_worse(3.0)
        );
    }
    Ok(())
}
