//! Concavity and integrability checks of the sufficient maximum principle.

use jumpvol::cli::ScenarioConfig;
use jumpvol::hsolver::{solve_h_fixed_point, HSolverConfig, PhiConfig};
use jumpvol::mc::{sufficient_condition_report, SimulationConfig, SufficientOptions};

fn main() -> jumpvol::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "merton.toml".into());
    let path = format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    let cfg = ScenarioConfig::load(path.as_ref())?;
    let model = cfg.model()?;
    let hcfg = HSolverConfig { t_nodes: 11, y_nodes: 13, ..cfg.hsolver.clone() };
    let grid = solve_h_fixed_point(&model, &hcfg, &PhiConfig { pairs: 64, seed: cfg.seed, ..cfg.phi.clone() })?;
    let sim = SimulationConfig { paths: 2000, steps: 200, seed: cfg.seed, ..cfg.simulation.clone() };

    let report = sufficient_condition_report(&model, &grid, cfg.x0, cfg.y0, &sim, &SufficientOptions::default())?;
    print!("{report}");
    Ok(())
}
