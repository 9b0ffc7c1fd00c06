//! Scenario runner: one TOML schema drives every subcommand of `seplab`.
//!
//! A run validates the whole configuration before any dynamics is computed,
//! writes CSV/JSON artifacts atomically into the output directory and
//! evaluates the acceptance checks selected by the scenario.

mod checks;
mod pipelines;
mod plots;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::omega_menu;
use crate::model::{build_model_spec, Chi, ModelFamily, ModelSpec};
use crate::return_renorm::{Renormalizer, DEFAULT_C, DEFAULT_C_STAR, DEFAULT_X_STAR};

pub use checks::{
    bnf_remainder_profile, check_bnf_remainder, check_exact_flow, check_renorm_oracle, check_return_time, check_symplecticity,
    check_theorem_a, check_theorem_b, check_twist, CheckResult,
};
pub use pipelines::{
    counterexample_run, curve_catalog, CounterexampleRun, CrossValidation, CurveCatalog, LevelSummary, LiftSummary,
    RotationSample,
};
pub use plots::emit_plots;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding `output_dir`.
pub const OUT_ENV: &str = "SEPLAB_OUT";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl ScenarioError {
    /// Exit status: 2 for usage and config errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Curve catalog and accumulation table; criteria 5 to 7.
    TheoremA,
    /// Descent, certificate and solver sweeps; criterion 8.
    TheoremB,
    /// Criteria 1 to 8.
    Full,
}

impl Scenario {
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Scenario::TheoremA => &[5, 6, 7],
            Scenario::TheoremB => &[8],
            Scenario::Full => &[1, 2, 3, 4, 5, 6, 7, 8],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdParams {
    pub x_star: f64,
    pub y_star: f64,
    pub c_star: f64,
}

impl Default for FdParams {
    fn default() -> Self {
        Self {
            x_star: DEFAULT_X_STAR,
            y_star: DEFAULT_C / DEFAULT_X_STAR,
            c_star: DEFAULT_C_STAR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesParams {
    pub grid: usize,
    pub modes: usize,
    pub max_iter: usize,
    /// Samples of the seed arc when lifting a circle to the plane.
    pub lift_samples: usize,
    /// Curves checked against the rotation relation.
    pub rotation_curves: usize,
    pub rotation_steps: usize,
}

impl Default for CurvesParams {
    fn default() -> Self {
        Self {
            grid: 512,
            modes: 128,
            max_iter: 30,
            lift_samples: 4096,
            rotation_curves: 5,
            rotation_steps: 3000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub rho: f64,
    pub chi_power: i32,
    /// Lower bound on `bM` when choosing `M`.
    pub bm_min: f64,
    /// Step of the `M` search.
    pub dm: f64,
    pub steps: usize,
    /// Initial fiber `ln y0 = ln y_pert - fiber_offset`.
    pub fiber_offset: f64,
    /// `W` threshold `ln y0 - w_offset`.
    pub w_offset: f64,
    pub lemma_samples: usize,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            rho: 1.0 / 12.0,
            chi_power: 5,
            bm_min: 5.0,
            dm: 0.1,
            steps: 10,
            fiber_offset: 0.5,
            w_offset: 1.0,
            lemma_samples: 2000,
        }
    }
}

impl CounterexampleConfig {
    pub fn chi(&self) -> Chi {
        Chi { power: self.chi_power }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub symplectic_det: f64,
    pub symplectic_points: usize,
    pub flow_drift: f64,
    pub flow_steps: usize,
    pub bnf_order: u32,
    pub bnf_slope_margin: f64,
    pub bnf_perturbations: usize,
    pub return_time: f64,
    pub renorm_oracle: f64,
    pub renorm_grid: usize,
    pub sigma_spread: f64,
    pub twist_levels: usize,
    pub twist_grid: usize,
    pub curve_residual: f64,
    /// A curve counts as invariant when `|t| <= t_factor * residual`.
    pub t_factor: f64,
    pub min_curves: usize,
    pub closure: f64,
    pub invariance: f64,
    pub accumulation: f64,
    pub rotation: f64,
    pub bump_mass: f64,
    pub lemma_margin: f64,
    pub cross_validation: f64,
    pub certificate_levels: usize,
    pub defect: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symplectic_det: 1e-4,
            symplectic_points: 100,
            flow_drift: 1e-12,
            flow_steps: 10_000,
            bnf_order: 5,
            bnf_slope_margin: 0.5,
            bnf_perturbations: 3,
            return_time: 0.2,
            renorm_oracle: 1e-8,
            renorm_grid: 64,
            sigma_spread: 1e-8,
            twist_levels: 11,
            twist_grid: 16,
            curve_residual: 1e-10,
            t_factor: 10.0,
            min_curves: 25,
            closure: 1e-7,
            invariance: 1e-7,
            accumulation: 1e-3,
            rotation: 1e-6,
            bump_mass: 1e-12,
            lemma_margin: 0.1,
            cross_validation: 1e-6,
            certificate_levels: 5,
            defect: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    /// Seed of every random sample drawn by the checks.
    pub seed: u64,
    pub model: ModelSpec,
    pub fd: FdParams,
    pub epsilons: Vec<f64>,
    /// Renormalization levels `n`.
    pub levels: Vec<i64>,
    pub omegas: Vec<f64>,
    pub curves: CurvesParams,
    pub counterexample: CounterexampleConfig,
    pub tolerances: Tolerances,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            scenario: Scenario::Full,
            output_dir: PathBuf::from("seplab-out"),
            seed: 20_240_601,
            model: ModelSpec::default(),
            fd: FdParams::default(),
            epsilons: vec![0.0, 1e-3],
            levels: (6..=12).collect(),
            omegas: omega_menu(),
            curves: CurvesParams::default(),
            counterexample: CounterexampleConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every module precondition that can be decided without
    /// running dynamics.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.lambda > 0.0 && m.lambda.is_finite()) {
            return Err(invalid(format!("model.lambda = {} must be positive", m.lambda)));
        }
        let g = m.glue;
        if !(m.r0 > 0.0 && g.r_exact > 0.0 && g.r_outer > g.r_exact) {
            return Err(invalid("model: need 0 < r0 and 0 < glue.r_exact < glue.r_outer"));
        }
        if !(m.r0 < g.r_exact) {
            return Err(invalid(format!("model.r0 = {} must lie below glue.r_exact = {}", m.r0, g.r_exact)));
        }
        if !(m.tol > 0.0) {
            return Err(invalid("model.tol must be positive"));
        }
        let fd = self.fd;
        if !(fd.x_star > 0.0 && fd.x_star < m.r0) {
            return Err(invalid(format!("fd.x_star = {} must lie in (0, r0 = {})", fd.x_star, m.r0)));
        }
        // the lobe meets the y axis only through D(o, r0) inside the chart
        if !(fd.y_star > 0.0 && fd.y_star < m.r0) {
            return Err(invalid(format!(
                "fd.y_star = {} must lie in (0, r0 = {}); larger values leave the normal-form disk below the lobe height",
                fd.y_star, m.r0
            )));
        }
        if !(fd.c_star > 0.0 && fd.c_star < 1.0) {
            return Err(invalid(format!("fd.c_star = {} must lie in (0, 1)", fd.c_star)));
        }
        if fd.x_star * m.lambda.exp() < m.r0 {
            return Err(invalid("fd.x_star: one backward step from (x*, 0) stays inside D(o, r0)"));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0 && *e <= 0.1)) {
            return Err(invalid("epsilons must be a nonempty list of values in [0, 0.1]"));
        }
        let delta = fd.c_star * fd.x_star * fd.y_star;
        for &n in &self.levels {
            if !(1..=60).contains(&n) || (-(n as f64 + 1.0)).exp() >= delta {
                return Err(invalid(format!("levels: n = {n} needs exp(-(n + 1)) < c* x* y* = {delta:e} and n <= 60")));
            }
        }
        if self.levels.is_empty() {
            return Err(invalid("levels must be nonempty"));
        }
        if self.omegas.is_empty() || self.omegas.iter().any(|w| !(*w > 0.0 && *w < 1.0)) {
            return Err(invalid("omegas must be a nonempty list of values in (0, 1)"));
        }
        let c = self.curves;
        if !(c.modes >= 1 && c.grid >= 2 * c.modes + 1) {
            return Err(invalid("curves: need modes >= 1 and grid > 2 modes"));
        }
        if c.lift_samples < 16 || c.rotation_steps < 16 || c.max_iter == 0 {
            return Err(invalid("curves: lift_samples and rotation_steps must be >= 16, max_iter >= 1"));
        }
        let ce = self.counterexample;
        if !(ce.rho > 0.0 && ce.rho <= 1.0 / 12.0) {
            return Err(invalid(format!("counterexample.rho = {} must lie in (0, 1/12]", ce.rho)));
        }
        if ce.chi_power < 2 {
            return Err(invalid("counterexample.chi_power must be >= 2"));
        }
        if !(ce.bm_min > std::f64::consts::LN_2) {
            return Err(invalid("counterexample.bm_min must exceed ln 2"));
        }
        if !(ce.dm > 0.0) || ce.steps == 0 || ce.steps > 50 {
            return Err(invalid("counterexample: need dm > 0 and 1 <= steps <= 50"));
        }
        if !(ce.fiber_offset > 0.0 && ce.w_offset > 0.0) {
            return Err(invalid("counterexample: fiber_offset and w_offset must be positive"));
        }
        if !m.q_higher.is_empty() && matches!(self.scenario, Scenario::TheoremB | Scenario::Full) {
            return Err(invalid("counterexample scenarios need a linear q (model.q_higher = [])"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(invalid("output_dir must be nonempty"));
        }
        Ok(())
    }
}

/// Output directory after the environment override.
pub fn resolve_output_dir(cfg: &ScenarioConfig, cli_override: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_override {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone(),
    }
}

/// Model and renormalizer shared by all pipelines.
#[derive(Debug, Clone)]
pub struct Lab {
    pub model: ModelFamily,
    pub renorm: Renormalizer,
}

impl Lab {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        let spec = ModelSpec { epsilon: 0.0, ..cfg.model.clone() };
        let model = build_model_spec(&spec).map_err(|e| anyhow::Error::new(e).context("building the model"))?;
        let renorm = Renormalizer::new(&model, cfg.fd.x_star, cfg.fd.y_star, cfg.fd.c_star)
            .map_err(|e| anyhow::Error::new(e).context("building the fundamental domain"))?;
        Ok(Self { model, renorm })
    }
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ScenarioError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(contents.as_bytes()).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, &path).map_err(io(&path))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// JSON document with the schema version in front.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

pub fn versioned<T: Serialize>(body: T) -> String {
    to_json(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub scenario: Scenario,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<String>,
}

/// Outcome of [`run_scenario`]; the exit status is 0 when every check
/// passed and 1 otherwise.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: Report,
    pub report_path: PathBuf,
    /// Wall time per check, in report order. Kept out of `report.json`.
    pub timings: Vec<std::time::Duration>,
}

impl ScenarioOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            0
        } else {
            1
        }
    }
}

/// Runs the checks of `cfg.scenario`, writing artifacts and `report.json`
/// into `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let lab = Lab::build(cfg)?;
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    let mut rel = |p: PathBuf| artifacts.push(p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let mut timings = Vec::new();
    for &k in cfg.scenario.criteria() {
        let started = std::time::Instant::now();
        let res = match k {
            1 => check_symplecticity(cfg, &lab)?,
            2 => check_exact_flow(cfg, &lab)?,
            3 => check_bnf_remainder(cfg)?,
            4 => check_return_time(cfg, &lab)?,
            5 => check_renorm_oracle(cfg, &lab)?,
            6 => check_twist(cfg, &lab)?,
            7 => {
                let cat = curve_catalog(cfg, &lab)?;
                for p in pipelines::write_catalog(&cat, out)? {
                    rel(p);
                }
                check_theorem_a(cfg, &cat)
            }
            8 => {
                let run = counterexample_run(cfg, &lab)?;
                for p in pipelines::write_counterexample(&run, out)? {
                    rel(p);
                }
                check_theorem_b(cfg, &run)
            }
            _ => unreachable!("criteria are 1 to 8"),
        };
        checks.push(res);
        timings.push(started.elapsed());
    }
    for p in pipelines::write_model(cfg, &lab, out)? {
        rel(p);
    }
    artifacts.sort();
    artifacts.dedup();
    let report = Report {
        name: cfg.name.clone(),
        scenario: cfg.scenario,
        pass: checks.iter().all(|c| c.pass),
        checks,
        artifacts,
    };
    let report_path = write_atomic(out, "report.json", &versioned(&report))?;
    Ok(ScenarioOutcome { report, report_path, timings })
}

pub use pipelines::{write_catalog, write_counterexample, write_model, write_orbit, write_renorm, write_return_map};
