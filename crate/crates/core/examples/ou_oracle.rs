//! Closed-form portfolio for the OU-driven market against the generic root finder,
//! plus a nested Monte Carlo estimate of the adjoint at the optimum.

use jumpvol::mc::TimeGrid;
use jumpvol::oracle_ou::{ou_adjoint_a1, ou_foc_portfolio, ou_mean_path, ou_paper_portfolio, NestedConfig, OUParams};
use jumpvol::strategy::{solve_portfolio, FixedRule};

fn main() -> jumpvol::Result<()> {
    let p = OUParams::default();
    let model = p.model(1.0, (-3.0, 3.0))?;
    println!("{:>6} {:>12} {:>12} {:>12}", "y", "reference", "foc", "generic");
    for i in 0..=8 {
        let y = 1.0 + 0.25 * i as f64;
        let generic = solve_portfolio(&model.prefs, &model.market, 0.0, y, 0.0)?.pi;
        println!("{y:>6.2} {:>12.6} {:>12.6} {generic:>12.6}", ou_paper_portfolio(&p, y)?, ou_foc_portfolio(&p, y)?);
    }

    let grid = TimeGrid::uniform(1.0, 4)?;
    println!("mean factor path: {:?}", ou_mean_path(&p, &grid));

    let rule = FixedRule { pi: ou_foc_portfolio(&p, p.y0)?, consumption: 0.0, premiums: vec![0.0] };
    let cfg = NestedConfig { n_outer: 8, n_inner: 2000, steps: 50, seed: 7 };
    let est = ou_adjoint_a1(&p, &model, &rule, 1.0, 0.5, 1.0, &cfg)?;
    for s in &est.states {
        println!("x = {:.4}  y = {:+.4}  A1 = {:.6} (stderr {:.2e})", s.x, s.y, s.a1, s.stderr);
    }
    Ok(())
}
