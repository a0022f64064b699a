//! Checks the market and factor assumptions of the default scenario on a sample grid.

use jumpvol::cli::ScenarioConfig;
use jumpvol::market::{check_assumptions, SampleGrid};

fn main() -> jumpvol::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/default_jump.toml");
    let cfg = ScenarioConfig::load(path.as_ref())?;
    let model = cfg.model()?;
    let grid = SampleGrid::uniform(model.horizon(), model.factor.domain, 21, 41);
    let report = check_assumptions(&model.market, &model.factor, &grid)?;
    for e in &report.entries {
        println!("{:5} {}: {}", if e.passed { "PASS" } else { "FAIL" }, e.name, e.detail);
    }
    println!("all passed: {}", report.all_passed());
    Ok(())
}
