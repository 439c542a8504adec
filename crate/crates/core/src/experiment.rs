//! Config-driven experiments with CSV rows and a JSON verdict sidecar.
//!
//! CSV columns (schema [`SCHEMA`]): `n,tv_to_limit,lost_mass,mass,mean`.
//!
//! | experiment          | `tv_to_limit`                     | `mass`                 | `mean`                   |
//! |---------------------|-----------------------------------|------------------------|--------------------------|
//! | `yaglom`            | TV(L(X_n \| X_n>0), Geom)         | survival `P(X_n > 0)`  | `E[X_n \| X_n > 0]`      |
//! | `immigration`       | TV(L(Y_n), compound-Poisson limit)| stored mass of `Y_n`   | `E Y_n` (stored support) |
//! | `montecarlo-xcheck` | empirical TV to exact `L(X_n)`    | empirical survival     | empirical `E X_n`        |
//!
//! The `identities` experiment writes `check,cases,failures` instead.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{conditional_law, conditional_mean, tv_distance, Evolution, Truncation};
use crate::environment::{EnvironmentSpec, ImmigrationFamily, QuadraticFamily};
use crate::error::{Error, Result};
use crate::limits::{cp_pmf, geometric_limit, limit_law, negbin_limit};
use crate::montecarlo::{empirical_tv, simulate_x, SimConfig};
use crate::oracles::{run_identity_suite, IdentityReport, IDENTITY_SEED};
use crate::pgf::tail_compose;

/// Version tag required in configs and written to every sidecar.
pub const SCHEMA: &str = "nearcrit.experiment/1";

pub const CSV_HEADER: [&str; 5] = ["n", "tv_to_limit", "lost_mass", "mass", "mean"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Yaglom,
    Immigration,
    Identities,
    MontecarloXcheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Yaglom => "yaglom",
            Self::Immigration => "immigration",
            Self::Identities => "identities",
            Self::MontecarloXcheck => "montecarlo-xcheck",
        }
    }
}

/// Pass/fail thresholds; an absent field disables its check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Require `tv_to_limit` to be strictly decreasing along `n_grid`.
    #[serde(default)]
    pub require_decreasing: bool,
    /// Upper bound on `tv_to_limit` at the last grid point.
    pub terminal_tv: Option<f64>,
    /// `|E[X_n | X_n > 0] - (1 + ν/2)|` bound at the last grid point.
    pub conditional_mean: Option<f64>,
    /// TV between the compound-Poisson limit and the negative binomial.
    pub negbin_tv: Option<f64>,
    /// Upper bound on every Monte Carlo TV row.
    pub empirical_tv: Option<f64>,
    /// Allowed survival deviation in binomial standard errors.
    pub survival_sigmas: Option<f64>,
    /// Truncation-loss ceiling for the exact engine.
    pub max_lost_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<QuadraticFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immigration: Option<ImmigrationFamily>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

fn default_cap() -> usize {
    512
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// File stem for the CSV and sidecar.
    pub fn stem(&self) -> &str {
        self.name.as_deref().unwrap_or(self.experiment.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!(
                "schema {:?} is not supported (expected {SCHEMA:?})",
                self.schema
            )));
        }
        if self.cap < crate::engine::MIN_CAP {
            return Err(Error::Config(format!("cap {} must be >= 8", self.cap)));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.experiment == ExperimentKind::Identities {
            return Ok(());
        }
        let family = self.family()?;
        QuadraticFamily::new(family.a, family.n0, family.nu)?;
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        match self.experiment {
            ExperimentKind::Immigration => {
                if self.immigration.is_none() {
                    return Err(Error::Config(
                        "immigration experiment needs `immigration`".into(),
                    ));
                }
                if family.nu <= 0.0 {
                    return Err(Error::Config("the immigration limit needs nu > 0".into()));
                }
            }
            ExperimentKind::MontecarloXcheck if self.replicates.unwrap_or(0) == 0 => {
                return Err(Error::Config(
                    "montecarlo-xcheck needs replicates >= 1".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    fn family(&self) -> Result<QuadraticFamily> {
        self.family
            .ok_or_else(|| Error::Config(format!("{} needs `family`", self.experiment.as_str())))
    }

    fn environment(&self) -> Result<EnvironmentSpec> {
        let env = EnvironmentSpec::quadratic(self.family()?);
        match &self.immigration {
            Some(imm) => env.with_immigration(imm.clone()),
            None => Ok(env),
        }
    }

    fn truncation(&self) -> Truncation {
        let t = Truncation::new(self.cap);
        match self.tolerances.max_lost_mass {
            Some(limit) => t.with_max_lost(limit),
            None => t,
        }
    }
}

/// Sets a dotted path (`tolerances.terminal_tv=0.1`) in a JSON config.
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(config: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = config;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(Error::Config(format!(
                "empty key in override path {path:?}"
            )));
        }
        let map = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => {
                return Err(Error::Config(format!(
                    "{path:?} does not address an object field"
                )))
            }
        };
        if i + 1 == keys.len() {
            map.insert(key.to_string(), value);
            return Ok(());
        }
        node = map.entry(key.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub n: usize,
    pub tv_to_limit: f64,
    pub lost_mass: f64,
    pub mass: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema: &'static str,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identities: Option<IdentityReport>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

fn decreasing_check(rows: &[Row]) -> Check {
    let worst = rows
        .windows(2)
        .map(|w| w[1].tv_to_limit - w[0].tv_to_limit)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = if rows.len() < 2 {
        f64::NEG_INFINITY
    } else {
        worst
    };
    Check::below("tv_strictly_decreasing (max step)", worst, 0.0)
}

fn trend_checks(tol: &Tolerances, rows: &[Row], checks: &mut Vec<Check>) {
    if tol.require_decreasing {
        checks.push(decreasing_check(rows));
    }
    if let (Some(limit), Some(last)) = (tol.terminal_tv, rows.last()) {
        checks.push(Check::below(
            format!("terminal_tv (n = {})", last.n),
            last.tv_to_limit,
            limit,
        ));
    }
}

fn run_yaglom(cfg: &ExperimentConfig) -> Result<(Vec<Row>, Vec<Check>)> {
    let env = cfg.environment()?;
    let nu = cfg.family()?.nu;
    let limit = geometric_limit(nu, cfg.cap)?;
    let mut ev = Evolution::branching(&env, cfg.truncation())?;
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        ev.advance_to(n)?;
        let result = ev.result();
        let cond = conditional_law(&result)?;
        rows.push(Row {
            n,
            tv_to_limit: tv_distance(&cond, &limit).distance,
            lost_mass: result.lost_mass_bound,
            mass: result.survival,
            mean: conditional_mean(&result)?,
        });
    }
    let mut checks = Vec::new();
    trend_checks(&cfg.tolerances, &rows, &mut checks);
    if let (Some(tol), Some(last)) = (cfg.tolerances.conditional_mean, rows.last()) {
        let target = 1.0 + nu / 2.0;
        checks.push(Check::at_most(
            format!("conditional_mean - {target} (n = {})", last.n),
            (last.mean - target).abs(),
            tol,
        ));
    }
    Ok((rows, checks))
}

fn run_immigration(cfg: &ExperimentConfig) -> Result<(Vec<Row>, Vec<Check>)> {
    let env = cfg.environment()?;
    let nu = cfg.family()?.nu;
    let family = cfg.immigration.as_ref().ok_or(Error::NoImmigration)?;
    let q = family.q();
    let limit = cp_pmf(&limit_law(&q, nu)?, cfg.cap)?;
    let mut ev = Evolution::with_immigration(&env, cfg.truncation())?;
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        ev.advance_to(n)?;
        let result = ev.result();
        rows.push(Row {
            n,
            tv_to_limit: tv_distance(&result.pmf, &limit).distance,
            lost_mass: result.lost_mass_bound,
            mass: result.pmf.stored_mass(),
            mean: result.pmf.mean(),
        });
    }
    let mut checks = Vec::new();
    trend_checks(&cfg.tolerances, &rows, &mut checks);
    if let Some(tol) = cfg.tolerances.negbin_tv {
        // λ_k = 0 for k >= 2 exactly when q is supported on {1}
        if q.len() == 1 {
            let nb = negbin_limit(q.get(1), nu, cfg.cap)?;
            checks.push(Check::at_most(
                "negbin_tv",
                tv_distance(&limit, &nb).distance,
                tol,
            ));
        }
    }
    Ok((rows, checks))
}

fn run_montecarlo(cfg: &ExperimentConfig) -> Result<(Vec<Row>, Vec<Check>)> {
    let env = cfg.environment()?;
    let replicates = cfg.replicates.unwrap_or(0);
    let mut ev = Evolution::branching(&env, cfg.truncation())?;
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    let mut checks = Vec::new();
    for &n in &cfg.n_grid {
        ev.advance_to(n)?;
        let exact = ev.result();
        let sim = SimConfig {
            seed: cfg.seed,
            replicates,
            horizon: n,
            population_cap: cfg.population_cap.unwrap_or(cfg.cap as u64),
        };
        let emp = simulate_x(&env, &sim)?;
        let tv = empirical_tv(&emp, &exact.pmf)?;
        rows.push(Row {
            n,
            tv_to_limit: tv,
            lost_mass: exact.lost_mass_bound,
            mass: emp.survival_fraction(),
            mean: emp.mean(),
        });
        if let Some(limit) = cfg.tolerances.empirical_tv {
            checks.push(Check::at_most(format!("empirical_tv (n = {n})"), tv, limit));
        }
        if let Some(sigmas) = cfg.tolerances.survival_sigmas {
            let p = 1.0 - tail_compose(&env, 0, n, 0.0)?;
            let se = (p * (1.0 - p) / replicates as f64).sqrt();
            let z = if se > 0.0 {
                (emp.survival_fraction() - p).abs() / se
            } else {
                (emp.survival_fraction() - p).abs() * f64::INFINITY
            };
            checks.push(Check::at_most(format!("survival_z (n = {n})"), z, sigmas));
        }
    }
    Ok((rows, checks))
}

/// Runs one experiment. Engine errors carry the offending generation.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut identities = None;
    let (rows, checks) = match cfg.experiment {
        ExperimentKind::Yaglom => run_yaglom(cfg)?,
        ExperimentKind::Immigration => run_immigration(cfg)?,
        ExperimentKind::MontecarloXcheck => run_montecarlo(cfg)?,
        ExperimentKind::Identities => {
            let seed = if cfg.seed == 0 {
                IDENTITY_SEED
            } else {
                cfg.seed
            };
            let report =
                run_identity_suite(cfg.max_k.unwrap_or(12), cfg.samples.unwrap_or(50), seed)?;
            let checks = report
                .checks
                .iter()
                .map(|c| Check::at_most(c.name.clone(), c.failures as f64, 0.0))
                .collect();
            identities = Some(report);
            (Vec::new(), checks)
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(ExperimentReport {
        schema: SCHEMA,
        config: cfg.clone(),
        rows,
        checks,
        identities,
        passed,
        wall_time_seconds: None,
    })
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, returning both paths.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let stem = report.config.stem();
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    match &report.identities {
        Some(ids) => {
            w.write_record(["check", "cases", "failures"])?;
            for c in &ids.checks {
                w.write_record([c.name.clone(), c.cases.to_string(), c.failures.to_string()])?;
            }
        }
        None => {
            w.write_record(CSV_HEADER)?;
            for r in &report.rows {
                w.serialize((r.n, r.tv_to_limit, r.lost_mass, r.mass, r.mean))?;
            }
        }
    }
    w.flush()?;
    fs::write(&json_path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok((csv_path, json_path))
}

const PRESETS: [(&str, &str); 5] = [
    ("identities", include_str!("../presets/identities.json")),
    ("yaglom", include_str!("../presets/yaglom.json")),
    (
        "immigration-q1",
        include_str!("../presets/immigration-q1.json"),
    ),
    (
        "immigration-q3",
        include_str!("../presets/immigration-q3.json"),
    ),
    (
        "montecarlo-xcheck",
        include_str!("../presets/montecarlo-xcheck.json"),
    ),
];

/// Built-in configs, by name, in their shipped JSON form.
pub fn presets() -> BTreeMap<&'static str, &'static str> {
    PRESETS.into_iter().collect()
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}
