//! Solves the fixed point for `h` on the default scenario and prints a slice of the grid.

use jumpvol::cli::ScenarioConfig;
use jumpvol::hsolver::{solve_h_fixed_point, HSolverConfig, PhiConfig};

fn main() -> jumpvol::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default_jump.toml");
    let cfg = ScenarioConfig::load(path.as_ref())?;
    let model = cfg.model()?;
    let hcfg = HSolverConfig { t_nodes: 11, y_nodes: 13, ..cfg.hsolver.clone() };
    let phi = PhiConfig { pairs: 64, seed: cfg.seed, ..cfg.phi.clone() };
    let grid = solve_h_fixed_point(&model, &hcfg, &phi)?;

    println!("iterations {}, sup-norm history {:?}", grid.iterations, grid.sup_norm_history);
    println!("{:>6} {:>6} {:>12} {:>12} {:>10}", "t", "y", "h", "h_y", "pi*");
    for i in [0, grid.nt() / 2, grid.nt() - 1] {
        for j in (0..grid.ny()).step_by(3) {
            let k = grid.index(i, j);
            println!(
                "{:>6.2} {:>6.2} {:>12.6} {:>12.6} {:>10.6}",
                grid.t_nodes[i], grid.y_nodes[j], grid.h[k], grid.h_y[k], grid.pi_star[k]
            );
        }
    }
    for w in &grid.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
