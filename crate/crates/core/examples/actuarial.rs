//! Survival, death density and the Kuhn-Tucker premium choice across three insurers.

use jumpvol::actuarial::{ActuarialModel, InsuranceMarket};
use jumpvol::market::TimeCurve;
use jumpvol::strategy::{optimal_premium, Preferences};

fn main() -> jumpvol::Result<()> {
    let horizon = 2.0;
    let am = ActuarialModel::new(TimeCurve::linear(0.01, 0.004), TimeCurve::constant(0.03), horizon)?;
    let im = InsuranceMarket::new(
        vec![TimeCurve::linear(0.024, 0.008), TimeCurve::constant(0.02853), TimeCurve::constant(0.035)],
        horizon,
        1000,
    )?;
    let prefs = Preferences::new(-1.0, 0.04, 4.0, 1.0)?;

    println!("{:>5} {:>10} {:>10} {:>8} {:>12} {:>12}", "t", "S(t)", "f(t)", "insurer", "premium", "stationarity");
    for i in 0..=8 {
        let t = horizon * i as f64 / 8.0;
        let d = optimal_premium(&prefs, &am, &im, t, 1.0, 1.0)?;
        let premium = d.premiums.iter().copied().fold(0.0, f64::max);
        println!(
            "{t:>5.2} {:>10.6} {:>10.6} {:>8} {premium:>12.6} {:>12.2e}",
            am.survival_probability(t)?,
            am.death_density(t)?,
            d.insurer,
            d.max_stationarity()
        );
    }
    for (a, b, k) in im.coincidences(horizon, 1000) {
        println!("insurers {a} and {b} price identically at sample {k}");
    }
    Ok(())
}
