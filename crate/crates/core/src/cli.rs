//! TOML scenario runner: solves for `h`, simulates the optimal rule, runs the
//! verification suite and the pure-jump OU comparison, and writes CSV files.
//!
//! Every output file starts with a comment line
//! `# config_hash=<sha256 of the config text> seed=<seed>` followed by a
//! header row.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::actuarial::{ActuarialModel, InsuranceMarket};
use crate::error::{invalid, Error, Result};
use crate::hsolver::{solve_h_fixed_point, HGrid, HSolverConfig, PhiConfig};
use crate::market::{check_assumptions, linspace, CoefficientSet, FactorDynamics, SampleGrid, TimeCurve};
use crate::mc::{
    adjoint_residual_test, estimate_performance, factor_adjoint_check, factor_path, necessary_condition_test,
    perturbation_family, perturbation_suite, sufficient_condition_report, value_consistency, walk, Comparison,
    PathNoise, PerformanceEstimate, Report, SimulationConfig, SufficientOptions,
};
use crate::oracle_ou::{ou_foc_closed_form, ou_foc_portfolio, ou_paper_portfolio, OUParams};
use crate::strategy::{solve_portfolio, OptimalRule, Perturbation, Preferences};
use crate::Model;

/// Pipeline selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SolveH,
    Simulate,
    Verify,
    Example,
    All,
}

/// Mortality and discounting.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuarialSection {
    pub lambda: TimeCurve,
    pub rho: TimeCurve,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsuranceSection {
    /// Premium-payout ratio curve of each insurer.
    pub etas: Vec<TimeCurve>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn default_shift() -> f64 {
    0.1
}
fn default_suboptimal() -> f64 {
    0.2
}

/// Settings of the verification suite.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Checkpoints `t = f T` of the adjoint martingale test.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Shift of `h` in the negative control of the martingale test.
    #[serde(default = "default_shift")]
    pub control_shift: f64,
    /// Portfolio shift at which the necessary condition must fail.
    #[serde(default = "default_suboptimal")]
    pub suboptimal_shift: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { fractions: default_fractions(), control_shift: default_shift(), suboptimal_shift: default_suboptimal() }
    }
}

fn default_y_min() -> f64 {
    1.0
}
fn default_y_max() -> f64 {
    3.0
}
fn default_points() -> usize {
    50
}

/// Pure-jump OU comparison.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleSection {
    #[serde(default)]
    pub params: OUParams,
    #[serde(default = "default_y_min")]
    pub y_min: f64,
    #[serde(default = "default_y_max")]
    pub y_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for ExampleSection {
    fn default() -> Self {
        Self { params: OUParams::default(), y_min: default_y_min(), y_max: default_y_max(), points: default_points() }
    }
}

fn default_x0() -> f64 {
    1.0
}

/// A parsed scenario file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub horizon: Option<f64>,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
    pub market: Option<CoefficientSet>,
    pub factor: Option<FactorDynamics>,
    pub actuarial: Option<ActuarialSection>,
    pub insurance: Option<InsuranceSection>,
    pub preferences: Option<Preferences>,
    #[serde(default)]
    pub hsolver: HSolverConfig,
    #[serde(default)]
    pub phi: PhiConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub verify: VerifySection,
    pub example: Option<ExampleSection>,
    /// SHA-256 of the source text.
    #[serde(skip)]
    pub hash: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl ScenarioConfig {
    /// Parses a scenario, reporting the offending line on failure.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.hash = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    fn section<'a, T>(value: &'a Option<T>, name: &str, mode: Mode) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::Config {
            line: None,
            message: format!("mode {mode:?} needs a [{name}] section"),
        })
    }

    /// Assembles the model from its sections.
    pub fn model(&self) -> Result<Model> {
        let mode = self.mode;
        let horizon = *Self::section(&self.horizon, "horizon", mode)?;
        let actuarial = Self::section(&self.actuarial, "actuarial", mode)?;
        let insurance = Self::section(&self.insurance, "insurance", mode)?;
        Ok(Model {
            market: Self::section(&self.market, "market", mode)?.clone(),
            factor: Self::section(&self.factor, "factor", mode)?.clone(),
            actuarial: ActuarialModel::new(actuarial.lambda.clone(), actuarial.rho.clone(), horizon)?,
            insurers: InsuranceMarket::new(insurance.etas.clone(), horizon, 1000)?,
            prefs: *Self::section(&self.preferences, "preferences", mode)?,
        })
    }

    fn simulation(&self) -> SimulationConfig {
        SimulationConfig { seed: self.seed, ..self.simulation.clone() }
    }

    fn phi(&self) -> PhiConfig {
        PhiConfig { seed: self.seed, ..self.phi.clone() }
    }
}

/// Command-line flags.
#[derive(Debug, Clone, Parser)]
#[command(name = "jumpvol", about = "Optimal investment, consumption and insurance under jumps and a stochastic factor")]
pub struct CliArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the mode of the scenario.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Overrides the seed of the scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the scenario's `out` or `out/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run even when the sampled standing assumptions fail.
    #[arg(long)]
    pub allow_assumption_failures: bool,
}

/// Files written and the verification outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub report: Report,
}

impl RunOutcome {
    /// Zero iff the report has no FAIL lines.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.report.has_failures())
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    header: String,
    files: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn csv(&mut self, name: &str, columns: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut buf = self.header.clone().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(columns)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        self.write(name, &buf)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Runs the pipelines of `cfg.mode` and writes their files into `out`.
pub fn run(cfg: &ScenarioConfig, out: &Path, allow_assumption_failures: bool) -> Result<RunOutcome> {
    fs::create_dir_all(out)?;
    let mut art = Artifacts { dir: out, header: format!("# config_hash={} seed={}\n", cfg.hash, cfg.seed), files: Vec::new() };
    let mut report = Report::new();
    let mode = cfg.mode;
    let wants = |m: Mode| mode == m || mode == Mode::All;

    if mode != Mode::Example {
        let model = cfg.model()?;
        assumptions(&model, allow_assumption_failures, &mut report)?;
        let grid = solve_h_fixed_point(&model, &cfg.hsolver, &cfg.phi())?;
        report.info(
            "h solver",
            format!(
                "{} iterations, final sup-norm residual {:.3e}, largest node stderr {:.3e}",
                grid.iterations,
                grid.sup_norm_history.last().copied().unwrap_or(0.0),
                grid.max_stderr
            ),
        );
        for w in &grid.warnings {
            report.info("h solver warning", w.clone());
        }
        write_h_grid(&mut art, &grid)?;
        let sim = cfg.simulation();
        let mut suite = None;
        if wants(Mode::Simulate) {
            let rule = OptimalRule::new(&model, &grid);
            write_paths(&mut art, &model, &grid, cfg, &sim)?;
            let est = estimate_performance(&model, &rule, cfg.x0, cfg.y0, &sim)?;
            let comps = perturbation_suite(&model, &rule, &perturbation_family(), cfg.x0, cfg.y0, &sim)?;
            write_performance(&mut art, &est, &comps)?;
            suite = Some(comps);
        }
        if wants(Mode::Verify) {
            verify(&model, &grid, cfg, &sim, suite, &mut report)?;
        }
    }
    if wants(Mode::Example) {
        let section = match (&cfg.example, mode) {
            (Some(s), _) => Some(s.clone()),
            (None, Mode::Example) => Some(ExampleSection::default()),
            (None, _) => None,
        };
        if let Some(section) = section {
            example(&mut art, &section, &mut report)?;
        }
    }
    art.write("verification_report.txt", format!("{}{}", art.header, report).as_bytes())?;
    Ok(RunOutcome { files: art.files, report })
}

fn assumptions(model: &Model, allow: bool, report: &mut Report) -> Result<()> {
    let sample = SampleGrid::uniform(model.horizon(), model.factor.domain, 21, 41);
    let checked = check_assumptions(&model.market, &model.factor, &sample)?;
    if !checked.all_passed() && !allow {
        let names: Vec<&str> = checked.failures().map(|e| e.name).collect();
        return Err(invalid(format!(
            "standing assumptions fail ({}); pass --allow-assumption-failures to run anyway",
            names.join(", ")
        )));
    }
    for e in &checked.entries {
        if e.passed {
            report.check(format!("assumption {}", e.name), true, e.detail.clone());
        } else {
            report.info(format!("assumption {} (failure allowed)", e.name), e.detail.clone());
        }
    }
    Ok(())
}

fn write_h_grid(art: &mut Artifacts<'_>, grid: &HGrid) -> Result<()> {
    let mut rows = Vec::with_capacity(grid.h.len());
    for (i, t) in grid.t_nodes.iter().enumerate() {
        for (j, y) in grid.y_nodes.iter().enumerate() {
            let k = grid.index(i, j);
            rows.push(vec![num(*t), num(*y), num(grid.h[k]), num(grid.h_y[k]), num(grid.pi_star[k])]);
        }
    }
    art.csv("h_grid.csv", &["t", "y", "h", "h_y", "pi_star"], rows)
}

fn write_paths(art: &mut Artifacts<'_>, model: &Model, grid: &HGrid, cfg: &ScenarioConfig, sim: &SimulationConfig) -> Result<()> {
    let tg = sim.grid(model.horizon())?;
    let rule = OptimalRule::new(model, grid);
    let rows: Vec<Vec<String>> = crate::mc::for_each_path(sim.paths, |p| {
        let noise = PathNoise::draw(&tg, &model.market.jumps, sim.seed, p);
        let ys = factor_path(&model.factor, cfg.y0, &tg, sim.scheme, &noise.dw1);
        let mut min_x = cfg.x0;
        let mut consumption = 0.0;
        let end = walk(model, &rule, cfg.x0, &tg, &ys, &noise, |s| {
            min_x = min_x.min(s.x_next);
            consumption += s.controls.c * s.dt;
        });
        vec![
            p.to_string(),
            num(end.x),
            num(ys[tg.steps()]),
            num(min_x),
            num(consumption),
            noise.jump_count().to_string(),
            end.ruined.is_some().to_string(),
        ]
    });
    art.csv("paths_summary.csv", &["path", "x_T", "y_T", "min_x", "total_consumption", "jumps", "flagged"], rows)
}

fn write_performance(art: &mut Artifacts<'_>, est: &PerformanceEstimate, comps: &[Comparison]) -> Result<()> {
    let mut rows = vec![vec![
        "optimal".to_string(),
        num(est.mean),
        num(est.stderr),
        est.n_paths.to_string(),
        est.flagged.to_string(),
        num(est.components.consumption),
        num(est.components.legacy),
        num(est.components.terminal),
        String::new(),
        String::new(),
    ]];
    for c in comps {
        rows.push(vec![
            c.name.clone(),
            num(c.other_mean),
            String::new(),
            c.n_paths.to_string(),
            c.flagged.to_string(),
            String::new(),
            String::new(),
            String::new(),
            num(c.diff_mean),
            num(c.diff_stderr),
        ]);
    }
    art.csv(
        "performance.csv",
        &[
            "strategy",
            "mean",
            "stderr",
            "n_paths",
            "flagged",
            "consumption",
            "legacy",
            "terminal",
            "diff_vs_optimal",
            "diff_stderr",
        ],
        rows,
    )
}

fn verify(
    model: &Model,
    grid: &HGrid,
    cfg: &ScenarioConfig,
    sim: &SimulationConfig,
    suite: Option<Vec<Comparison>>,
    report: &mut Report,
) -> Result<()> {
    let (x0, y0) = (cfg.x0, cfg.y0);
    let fractions = &cfg.verify.fractions;
    let adj = adjoint_residual_test(model, grid, x0, y0, sim, fractions)?;
    report.extend(adj.to_report("adjoint martingale"));
    let shifted = grid.shifted(cfg.verify.control_shift);
    let control = adjoint_residual_test(model, &shifted, x0, y0, sim, fractions)?;
    let worst = control.pairs.iter().map(|p| p.mean.abs() / p.stderr.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    report.check(
        format!("adjoint negative control (h{:+})", cfg.verify.control_shift),
        !control.passed(3.0),
        format!("largest |mean|/stderr {worst:.2}"),
    );

    let rule = OptimalRule::new(model, grid);
    let horizon = model.horizon();
    let zetas = [
        Perturbation::Constant(1.0),
        Perturbation::Window { from: 0.5 * horizon, to: horizon, value: 1.0 },
        Perturbation::TanhFactor,
    ];
    let necessary =
        necessary_condition_test(model, &rule, Some(grid), &zetas, Some(cfg.verify.suboptimal_shift), x0, y0, sim)?;
    report.extend(necessary.to_report());

    let suite = match suite {
        Some(s) => s,
        None => perturbation_suite(model, &rule, &perturbation_family(), x0, y0, sim)?,
    };
    for c in &suite {
        report.check(
            format!("suboptimality {}", c.name),
            c.base_not_worse(3.0),
            format!("J(perturbed) - J(optimal) = {:.6e} stderr {:.6e}", c.diff_mean, c.diff_stderr),
        );
    }

    report.extend(sufficient_condition_report(model, grid, x0, y0, sim, &SufficientOptions::default())?);

    let a2 = factor_adjoint_check(model, grid, x0, y0, sim)?;
    report.check(
        "second adjoint: E[int dH/dy dt] = 0",
        a2.zero_within(3.0),
        format!("mean {:.6e} stderr {:.6e}", a2.mean, a2.stderr),
    );

    let (est, v) = value_consistency(model, grid, x0, y0, sim)?;
    report.info(
        "value: J(optimal) vs x0^delta e^(-h(0,y0))/delta",
        format!("J {:.8e} stderr {:.3e}, ansatz {:.8e}", est.mean, est.stderr, v),
    );
    Ok(())
}

fn example(art: &mut Artifacts<'_>, section: &ExampleSection, report: &mut Report) -> Result<()> {
    let p = section.params;
    if section.points < 2 || !(section.y_min < section.y_max) {
        return Err(invalid("example needs at least two points on a nonempty y range"));
    }
    let model = p.model(1.0, (section.y_min, section.y_max))?;
    let mut rows = Vec::with_capacity(section.points);
    let mut worst: f64 = 0.0;
    for y in linspace(section.y_min, section.y_max, section.points) {
        let paper = ou_paper_portfolio(&p, y).map(num).unwrap_or_else(|e| format!("error: {e}"));
        let closed = ou_foc_closed_form(&p, y)?;
        let foc = ou_foc_portfolio(&p, y)?;
        let generic = solve_portfolio(&model.prefs, &model.market, 0.0, y, 0.0)?.pi;
        worst = worst.max((generic - foc).abs());
        rows.push(vec![num(y), paper, num(closed), num(foc), num(generic)]);
    }
    report.check(
        "example: generic portfolio solver matches first-order condition",
        worst <= 1e-8,
        format!("largest gap {worst:.3e} over {} points", section.points),
    );
    report.info("example", "reference formula and first-order condition coincide where gamma*y = delta");
    art.csv("example_comparison.csv", &["y", "paper_pi", "foc_pi", "foc_bisection_pi", "generic_pi"], rows)
}

/// Entry point of the binary: parses flags, runs, prints errors and returns
/// the process exit code.
pub fn main_with_args(args: CliArgs) -> i32 {
    let mut cfg = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return 2;
        }
    };
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match run(&cfg, &out, args.allow_assumption_failures) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
