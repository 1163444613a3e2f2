//! Command-line front end: every scenario as a reproducible run.
//!
//! Parameters come from an optional config file (JSON object or
//! `key = value` lines) overridden by flags. Every parameter is checked
//! before anything is computed; the run record echoes the resolved
//! parameters so feeding a record back through `--config` reproduces it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, ErrorClass};
use crate::fit::loglog_slope;
use crate::montecarlo::{
    batch_csv, estimate_weak_value, sample_intensity_experiment, sample_trials, IntensityScenario,
};
use crate::neutron::{
    infer_projector_weak_value, infer_spin_weak_value_modulus, intensity_absorber, intensity_magnetic, sweep_csv,
    AbsorberConfig, MagneticConfig, SweepRow,
};
use crate::pointer::GaussianPointerState;
use crate::qcc::{self, Arm, ArmObservable, QccConfig, QccRecord};
use crate::report::{csv_string, fmt_g17, to_json_string, Cell};
use crate::weakmeas::{
    couple_and_postselect, linear_response_report, spin_sigma_x, tilted_spin_context, transition_element,
    validity_margin, weak_value, Observable, PrePostContext,
};

/// Environment variable naming the default directory for run artifacts.
pub const OUTPUT_DIR_ENV: &str = "CHESHIRE_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "cheshire", version, about = "Weak-measurement and Quantum Cheshire Cat simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weak value and exact pointer shift for one observable.
    WeakValue(RunArgs),
    /// The four QCC weak values with one pointer per arm.
    Qcc(RunArgs),
    /// Both arm pointers coupled in a single run.
    QccJoint(RunArgs),
    /// Intensity ratio with an absorber on one arm.
    NeutronAbsorber(RunArgs),
    /// Intensity ratio with a spin rotation on one arm.
    NeutronMagnetic(RunArgs),
    /// Finite-statistics sampling of a scenario.
    Montecarlo(RunArgs),
    /// Parameter sweep (`start:stop:count`) over a scenario.
    Sweep(RunArgs),
    /// Check a configuration without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Config file: JSON object or `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON run record path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// CSV artifact path, `-` for stdout.
    #[arg(long)]
    pub csv: Option<String>,

    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<String>,
    #[arg(long = "g-I", alias = "g-i", allow_hyphen_values = true)]
    pub g_i: Option<String>,
    #[arg(long = "g-II", alias = "g-ii", allow_hyphen_values = true)]
    pub g_ii: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub pointer_width: Option<String>,
    #[arg(long)]
    pub observable: Option<String>,
    #[arg(long = "observable-I", alias = "observable-i")]
    pub observable_i: Option<String>,
    #[arg(long = "observable-II", alias = "observable-ii")]
    pub observable_ii: Option<String>,
    #[arg(long)]
    pub flipped_arm: Option<String>,
    #[arg(long)]
    pub arm: Option<String>,
    #[arg(long = "M", alias = "m", allow_hyphen_values = true)]
    pub m: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub n: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// `qcc` or `anomalous`; `montecarlo` also takes `absorber`, `magnetic`.
    #[arg(long)]
    pub context: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tan_theta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_points: Option<String>,
    /// Scenario swept by `sweep`.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub measured_ratio: Option<String>,
    #[arg(long = "pi-w", allow_hyphen_values = true)]
    pub pi_w: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Scenario to validate.
    pub target: String,
    #[command(flatten)]
    pub run: RunArgs,
}

impl RunArgs {
    fn flag_values(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("g", &self.g),
            ("g_I", &self.g_i),
            ("g_II", &self.g_ii),
            ("pointer_width", &self.pointer_width),
            ("observable", &self.observable),
            ("observable_I", &self.observable_i),
            ("observable_II", &self.observable_ii),
            ("flipped_arm", &self.flipped_arm),
            ("arm", &self.arm),
            ("M", &self.m),
            ("alpha", &self.alpha),
            ("n", &self.n),
            ("seed", &self.seed),
            ("context", &self.context),
            ("tan_theta", &self.tan_theta),
            ("grid_points", &self.grid_points),
            ("scenario", &self.scenario),
            ("measured_ratio", &self.measured_ratio),
            ("pi_w", &self.pi_w),
        ]
    }
}

const KNOWN_KEYS: [&str; 19] = [
    "g",
    "g_I",
    "g_II",
    "pointer_width",
    "observable",
    "observable_I",
    "observable_II",
    "flipped_arm",
    "arm",
    "M",
    "alpha",
    "n",
    "seed",
    "context",
    "tan_theta",
    "grid_points",
    "scenario",
    "measured_ratio",
    "pi_w",
];

/// Maps `g-i`, `G_I`, `m`, ... onto the canonical key spelling.
fn canonical_key(key: &str) -> Option<&'static str> {
    let k = key.trim().replace('-', "_").to_ascii_lowercase();
    KNOWN_KEYS.iter().copied().find(|c| c.to_ascii_lowercase() == k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    WeakValue,
    Qcc,
    QccJoint,
    NeutronAbsorber,
    NeutronMagnetic,
    Montecarlo,
    Sweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::WeakValue => "weak-value",
            Scenario::Qcc => "qcc",
            Scenario::QccJoint => "qcc-joint",
            Scenario::NeutronAbsorber => "neutron-absorber",
            Scenario::NeutronMagnetic => "neutron-magnetic",
            Scenario::Montecarlo => "montecarlo",
            Scenario::Sweep => "sweep",
        }
    }

    /// Parameter swept when this scenario runs under `sweep`.
    fn swept_key(self) -> Option<&'static str> {
        match self {
            Scenario::WeakValue => Some("g"),
            Scenario::NeutronAbsorber => Some("M"),
            Scenario::NeutronMagnetic => Some("alpha"),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            Scenario::WeakValue,
            Scenario::Qcc,
            Scenario::QccJoint,
            Scenario::NeutronAbsorber,
            Scenario::NeutronMagnetic,
            Scenario::Montecarlo,
            Scenario::Sweep,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// A violated precondition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Invalid(Vec<Violation>),
    Run(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Invalid(_) => EXIT_VALIDATION,
            CliError::Run(e) => match e.class() {
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Capacity => EXIT_CAPACITY,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            },
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Invalid(_) => "validation",
            CliError::Run(e) => match e.class() {
                ErrorClass::Validation => "validation",
                ErrorClass::Capacity => "capacity",
                ErrorClass::Numerical => "numerical",
            },
            CliError::Io(_) => "io",
        }
    }

    fn to_json(&self) -> Value {
        let (message, violations) = match self {
            CliError::Parse(m) | CliError::Io(m) => (m.clone(), vec![]),
            CliError::Invalid(v) => (format!("{} invalid parameter(s)", v.len()), v.clone()),
            CliError::Run(e) => (e.to_string(), vec![]),
        };
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": message,
                "violations": violations,
            }
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

/// Reads a config file into raw key/value strings. A JSON object may be a
/// flat map, a `{"scenario", "parameters"}` echo, or a whole run record.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Parse(format!("config JSON: {e}")))?;
        let mut obj = v.as_object().cloned().unwrap_or_default();
        if let Some(Value::Object(c)) = obj.get("config") {
            obj = c.clone();
        }
        if let Some(Value::Object(p)) = obj.get("parameters") {
            obj = p.clone();
        }
        for (k, v) in obj {
            let s = match v {
                Value::String(s) => s,
                Value::Number(n) => match n.as_f64() {
                    Some(x) if n.is_f64() => fmt_g17(x),
                    _ => n.to_string(),
                },
                Value::Bool(b) => b.to_string(),
                other => return Err(CliError::Parse(format!("config key `{k}` has unsupported value {other}"))),
            };
            insert_key(&mut out, &k, s)?;
        }
    } else {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':').filter(|(k, _)| !k.contains(' ')))
                .ok_or_else(|| CliError::Parse(format!("config line {}: expected key = value", lineno + 1)))?;
            insert_key(&mut out, k, v.trim().trim_matches('"').to_string())?;
        }
    }
    Ok(out)
}

fn insert_key(map: &mut BTreeMap<String, String>, key: &str, value: String) -> Result<(), CliError> {
    let k = canonical_key(key).ok_or_else(|| CliError::Parse(format!("unknown config key `{}`", key.trim())))?;
    map.insert(k.to_string(), value);
    Ok(())
}

fn gather_raw(args: &RunArgs) -> Result<BTreeMap<String, String>, CliError> {
    let mut raw = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Parse(format!("cannot read config {}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    for (k, v) in args.flag_values() {
        if let Some(v) = v {
            raw.insert(k.to_string(), v.clone());
        }
    }
    Ok(raw)
}

/// Inclusive `start:stop:count` grid.
pub fn parse_range(s: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return None;
    }
    let start: f64 = parts[0].trim().parse().ok()?;
    let stop: f64 = parts[1].trim().parse().ok()?;
    let count: usize = parts[2].trim().parse().ok()?;
    if count == 0 || !start.is_finite() || !stop.is_finite() {
        return None;
    }
    if count == 1 {
        return Some(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Some(
        (0..count)
            .map(|i| if i + 1 == count { stop } else { start + i as f64 * step })
            .collect(),
    )
}

/// Typed access to raw parameters. Malformed values abort with a parse
/// error; out-of-range values are recorded and resolution continues so
/// that every violation is reported at once.
struct Resolver<'a> {
    raw: &'a BTreeMap<String, String>,
    used: Vec<&'static str>,
    violations: Vec<Violation>,
    echo: Map<String, Value>,
    /// Key that may hold a `start:stop:count` range.
    range_key: Option<&'static str>,
}

impl<'a> Resolver<'a> {
    fn new(raw: &'a BTreeMap<String, String>) -> Self {
        Resolver {
            raw,
            used: Vec::new(),
            violations: Vec::new(),
            echo: Map::new(),
            range_key: None,
        }
    }

    fn violate(&mut self, field: &str, constraint: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            constraint: constraint.into(),
        });
    }

    fn get(&mut self, key: &'static str) -> Option<&'a str> {
        self.used.push(key);
        self.raw.get(key).map(|s| s.as_str())
    }

    fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Parse(format!("`{key}`: `{s}` is not a number")))
    }

    fn real(&mut self, key: &'static str, default: f64) -> Result<f64, CliError> {
        let x = match self.get(key) {
            Some(s) => Self::parse_f64(key, s)?,
            None => default,
        };
        if !x.is_finite() {
            self.violate(key, "must be finite");
        }
        self.echo.insert(key.into(), num(x));
        Ok(x)
    }

    fn optional_real(&mut self, key: &'static str) -> Result<Option<f64>, CliError> {
        match self.get(key) {
            Some(s) => {
                let x = Self::parse_f64(key, s)?;
                if !x.is_finite() {
                    self.violate(key, "must be finite");
                }
                self.echo.insert(key.into(), num(x));
                Ok(Some(x))
            }
            None => Ok(None),
        }
    }

    /// A scalar, or a range when `key` is the swept parameter.
    fn reals(&mut self, key: &'static str, default: f64) -> Result<Vec<f64>, CliError> {
        if self.range_key == Some(key) {
            if let Some(s) = self.raw.get(key).filter(|s| s.contains(':')) {
                self.used.push(key);
                let xs = parse_range(s)
                    .ok_or_else(|| CliError::Parse(format!("`{key}`: `{s}` is not start:stop:count")))?;
                self.echo.insert(key.into(), Value::String(s.clone()));
                return Ok(xs);
            }
        }
        Ok(vec![self.real(key, default)?])
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64, CliError> {
        let x = self.real(key, default)?;
        if x.is_nan() || x <= 0.0 {
            self.violate(key, "must be > 0");
        }
        Ok(x)
    }

    fn count(&mut self, key: &'static str, default: u64, min: u64) -> Result<u64, CliError> {
        let n = match self.get(key) {
            Some(s) => parse_u64(s).ok_or_else(|| CliError::Parse(format!("`{key}`: `{s}` is not a non-negative integer")))?,
            None => default,
        };
        if n < min {
            self.violate(key, format!("must be >= {min}"));
        }
        self.echo.insert(key.into(), Value::from(n));
        Ok(n)
    }

    fn optional_count(&mut self, key: &'static str) -> Result<Option<u64>, CliError> {
        if self.raw.contains_key(key) {
            self.count(key, 0, 0).map(Some)
        } else {
            self.used.push(key);
            Ok(None)
        }
    }

    fn tag<T: FromStr + fmt::Display>(&mut self, key: &'static str, default: T) -> Result<T, CliError> {
        let v = match self.get(key) {
            Some(s) => match s.trim().parse::<T>() {
                Ok(v) => v,
                Err(_) => {
                    self.violate(key, format!("`{s}` is not an accepted value"));
                    default
                }
            },
            None => default,
        };
        self.echo.insert(key.into(), Value::String(v.to_string()));
        Ok(v)
    }

    /// Flags every supplied key that the scenario never read.
    fn finish(mut self, scenario: Scenario) -> (Map<String, Value>, Vec<Violation>) {
        for k in self.raw.keys() {
            if !self.used.iter().any(|u| u == k) {
                self.violations.push(Violation {
                    field: k.clone(),
                    constraint: format!("not a parameter of `{scenario}`"),
                });
            }
        }
        (self.echo, self.violations)
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Ok(n) = s.parse::<u64>() {
        return Some(n);
    }
    // Accept integral floats such as `1e6`.
    let x: f64 = s.parse().ok()?;
    (x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64).then_some(x as u64)
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Weak-value observables selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    Qcc,
    Anomalous,
    Absorber,
    Magnetic,
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Context::Qcc => "qcc",
            Context::Anomalous => "anomalous",
            Context::Absorber => "absorber",
            Context::Magnetic => "magnetic",
        })
    }
}

impl FromStr for Context {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "qcc" => Ok(Context::Qcc),
            "anomalous" => Ok(Context::Anomalous),
            "absorber" => Ok(Context::Absorber),
            "magnetic" => Ok(Context::Magnetic),
            _ => Err(()),
        }
    }
}

/// `pi_I`, `sigma_I`, `pi_II`, `sigma_II` in the QCC context, `sigma_x`
/// in the tilted-spin context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableTag {
    Arm(Arm, ArmObservable),
    SigmaX,
}

impl fmt::Display for ObservableTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableTag::Arm(arm, ArmObservable::Projector) => write!(f, "pi_{arm}"),
            ObservableTag::Arm(arm, ArmObservable::SigmaX) => write!(f, "sigma_{arm}"),
            ObservableTag::SigmaX => f.write_str("sigma_x"),
        }
    }
}

impl FromStr for ObservableTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "sigma_x" => Ok(ObservableTag::SigmaX),
            _ => {
                let (kind, arm) = s.split_once('_').ok_or(())?;
                let arm: Arm = arm.parse().map_err(|_| ())?;
                let kind = match kind {
                    "pi" => ArmObservable::Projector,
                    "sigma" => ArmObservable::SigmaX,
                    _ => return Err(()),
                };
                Ok(ObservableTag::Arm(arm, kind))
            }
        }
    }
}

/// A pointer experiment: context, observable and pointer.
#[derive(Debug, Clone, Copy)]
struct PointerSetup {
    context: Context,
    observable: ObservableTag,
    tan_theta: f64,
    width: f64,
}

impl PointerSetup {
    fn resolve(r: &mut Resolver, context: Context) -> Result<Self, CliError> {
        let default_obs = match context {
            Context::Anomalous => ObservableTag::SigmaX,
            _ => ObservableTag::Arm(Arm::I, ArmObservable::Projector),
        };
        let observable = r.tag("observable", default_obs)?;
        let tan_theta = if context == Context::Anomalous {
            r.real("tan_theta", 3.0)?
        } else {
            0.0
        };
        match (context, observable) {
            (Context::Qcc, ObservableTag::Arm(..)) | (Context::Anomalous, ObservableTag::SigmaX) => {}
            _ => r.violate("observable", format!("`{observable}` is not defined in context `{context}`")),
        }
        let width = r.positive("pointer_width", 1.0)?;
        Ok(PointerSetup {
            context,
            observable,
            tan_theta,
            width,
        })
    }

    fn build(&self) -> Result<(PrePostContext, Observable, GaussianPointerState), Error> {
        let (ctx, obs) = match (self.context, self.observable) {
            (Context::Anomalous, _) => (tilted_spin_context(self.tan_theta)?, spin_sigma_x()),
            (_, ObservableTag::Arm(arm, kind)) => (qcc::build_prepost(), qcc::observable(arm, kind)),
            (_, ObservableTag::SigmaX) => (tilted_spin_context(self.tan_theta)?, spin_sigma_x()),
        };
        Ok((ctx, obs, GaussianPointerState::gaussian(0.0, self.width)?))
    }
}

fn resolve_qcc(r: &mut Resolver) -> Result<QccConfig, CliError> {
    let d = QccConfig::default();
    let g = r.optional_real("g")?;
    let g_i = r.real("g_I", g.unwrap_or(d.g_i))?;
    let g_ii = r.real("g_II", g.unwrap_or(d.g_ii))?;
    let cfg = QccConfig {
        observable_i: r.tag("observable_I", d.observable_i)?,
        observable_ii: r.tag("observable_II", d.observable_ii)?,
        g_i,
        g_ii,
        pointer_width: r.positive("pointer_width", d.pointer_width)?,
        flipped_arm: r.tag("flipped_arm", d.flipped_arm)?,
    };
    Ok(cfg)
}

fn check_alpha(r: &mut Resolver, alphas: &[f64]) {
    if alphas.iter().any(|a| a.abs() > std::f64::consts::PI) {
        r.violate("alpha", "|alpha| <= pi");
    }
}

fn check_m(r: &mut Resolver, ms: &[f64]) {
    if ms.iter().any(|m| *m < 0.0) {
        r.violate("M", "must be >= 0");
    }
}

/// A fully resolved and checked run.
#[derive(Debug, Clone)]
enum Plan {
    WeakValue {
        setup: PointerSetup,
        gs: Vec<f64>,
        grid_points: u64,
    },
    Qcc(QccConfig),
    QccJoint {
        cfg: QccConfig,
        grid_points: Option<u64>,
    },
    Absorber {
        arm: Arm,
        ms: Vec<f64>,
        measured_ratio: Option<f64>,
    },
    Magnetic {
        arm: Arm,
        alphas: Vec<f64>,
        measured_ratio: Option<f64>,
        pi_w: Option<f64>,
    },
    Montecarlo {
        setup: PointerSetup,
        g: f64,
        arm: Arm,
        m: f64,
        alpha: f64,
        n: u64,
        seed: u64,
    },
    Sweep {
        inner: Scenario,
        plan: Box<Plan>,
    },
}

type Resolved = (Plan, Map<String, Value>, Vec<Violation>);

/// Resolves raw parameters for `scenario`. Returns the plan, the
/// parameter echo, and every violated precondition.
fn resolve(
    scenario: Scenario,
    raw: &BTreeMap<String, String>,
) -> Result<Resolved, CliError> {
    let mut r = Resolver::new(raw);
    let plan = resolve_into(scenario, &mut r)?;
    let (echo, violations) = r.finish(scenario);
    Ok((plan, echo, violations))
}

fn resolve_into(scenario: Scenario, r: &mut Resolver) -> Result<Plan, CliError> {
    Ok(match scenario {
        Scenario::WeakValue => {
            let context = r.tag("context", Context::Qcc)?;
            if matches!(context, Context::Absorber | Context::Magnetic) {
                r.violate("context", "must be qcc or anomalous");
            }
            let setup = PointerSetup::resolve(r, context)?;
            let gs = r.reals("g", 0.02)?;
            let grid_points = r.count("grid_points", 1024, 2)?;
            if !grid_points.is_power_of_two() {
                r.violate("grid_points", "must be a power of two");
            }
            Plan::WeakValue { setup, gs, grid_points }
        }
        Scenario::Qcc => Plan::Qcc(resolve_qcc(r)?),
        Scenario::QccJoint => {
            let cfg = resolve_qcc(r)?;
            let grid_points = r.optional_count("grid_points")?;
            if grid_points.is_some_and(|n| n < 2) {
                r.violate("grid_points", "must be >= 2");
            }
            Plan::QccJoint { cfg, grid_points }
        }
        Scenario::NeutronAbsorber => {
            let arm = r.tag("arm", Arm::I)?;
            let ms = r.reals("M", 0.1)?;
            check_m(r, &ms);
            let measured_ratio = r.optional_real("measured_ratio")?;
            if measured_ratio.is_some() && ms.contains(&0.0) {
                r.violate("M", "must be > 0 to infer a weak value");
            }
            Plan::Absorber {
                arm,
                ms,
                measured_ratio,
            }
        }
        Scenario::NeutronMagnetic => {
            let arm = r.tag("arm", Arm::I)?;
            let alphas = r.reals("alpha", 0.2)?;
            check_alpha(r, &alphas);
            let measured_ratio = r.optional_real("measured_ratio")?;
            let pi_w = r.optional_real("pi_w")?;
            if measured_ratio.is_some() && alphas.contains(&0.0) {
                r.violate("alpha", "must be non-zero to infer a weak value");
            }
            Plan::Magnetic {
                arm,
                alphas,
                measured_ratio,
                pi_w,
            }
        }
        Scenario::Montecarlo => {
            let context = r.tag("context", Context::Qcc)?;
            let setup = match context {
                Context::Qcc | Context::Anomalous => PointerSetup::resolve(r, context)?,
                _ => PointerSetup {
                    context,
                    observable: ObservableTag::SigmaX,
                    tan_theta: 0.0,
                    width: 1.0,
                },
            };
            let n = r.count("n", 100_000, 1)?;
            let seed = r.count("seed", 0, 0)?;
            let (mut g, mut arm, mut m, mut alpha) = (0.0, Arm::I, 0.0, 0.0);
            match context {
                Context::Qcc | Context::Anomalous => g = r.real("g", 0.05)?,
                Context::Absorber => {
                    arm = r.tag("arm", Arm::I)?;
                    m = r.real("M", 0.1)?;
                    check_m(r, &[m]);
                }
                Context::Magnetic => {
                    arm = r.tag("arm", Arm::I)?;
                    alpha = r.real("alpha", 0.2)?;
                    check_alpha(r, &[alpha]);
                }
            }
            Plan::Montecarlo {
                setup,
                g,
                arm,
                m,
                alpha,
                n,
                seed,
            }
        }
        Scenario::Sweep => {
            let inner = match r.get("scenario") {
                Some(s) => s.trim().parse::<Scenario>().map_err(CliError::Parse)?,
                None => return Err(CliError::Parse("sweep needs --scenario".into())),
            };
            r.echo.insert("scenario".into(), Value::String(inner.name().into()));
            let key = inner.swept_key().ok_or_else(|| {
                CliError::Parse(format!(
                    "`{inner}` cannot be swept; use weak-value, neutron-absorber or neutron-magnetic"
                ))
            })?;
            r.range_key = Some(key);
            let plan = resolve_into(inner, r)?;
            Plan::Sweep {
                inner,
                plan: Box::new(plan),
            }
        }
    })
}

/// What a run produced: the JSON results and an optional CSV artifact.
pub struct Outcome {
    pub results: Value,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct WeakValueResult {
    weak_value_re: f64,
    weak_value_im: f64,
    transition_element_re: f64,
    transition_element_im: f64,
    postselect_prob: f64,
    postselect_prob_coupled: f64,
    exact_shift: f64,
    predicted_shift: f64,
    abs_error: f64,
    shift_ratio: Option<f64>,
    validity_margin: f64,
    second_order_ratio: Option<f64>,
    linear_regime: bool,
}

fn weak_value_point(setup: &PointerSetup, g: f64) -> Result<(WeakValueResult, GaussianPointerState), Error> {
    let (ctx, obs, phi0) = setup.build()?;
    let lr = linear_response_report(&ctx, &obs, &phi0, g)?;
    let res = couple_and_postselect(&ctx, &obs, &phi0, g)?;
    let vm = validity_margin(&ctx, &obs, &phi0, g)?;
    let t = transition_element(&ctx, &obs)?;
    Ok((
        WeakValueResult {
            weak_value_re: lr.weak_value.re,
            weak_value_im: lr.weak_value.im,
            transition_element_re: t.re,
            transition_element_im: t.im,
            postselect_prob: res.postselect_prob_unperturbed,
            postselect_prob_coupled: res.postselect_prob,
            exact_shift: lr.exact_shift,
            predicted_shift: lr.predicted_shift,
            abs_error: lr.abs_error,
            shift_ratio: lr.ratio,
            validity_margin: vm.margin,
            second_order_ratio: vm.second_order_ratio,
            linear_regime: vm.linear_regime,
        },
        res.pointer_final,
    ))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn execute(plan: &Plan) -> Result<Outcome, Error> {
    match plan {
        Plan::WeakValue {
            setup,
            gs,
            grid_points,
        } => {
            let (res, pointer) = weak_value_point(setup, gs[0])?;
            let (lo, hi) = pointer.support();
            let grid = pointer.to_grid(lo, hi, *grid_points as usize)?;
            let mut buf = Vec::new();
            grid.write_csv(&mut buf).expect("writing to memory");
            Ok(Outcome {
                results: to_value(&res),
                csv: Some(String::from_utf8(buf).expect("csv is utf-8")),
            })
        }
        Plan::Qcc(cfg) => {
            let r = qcc::run_ideal_qcc(cfg)?;
            Ok(Outcome {
                results: to_value(&QccRecord::from(&r)),
                csv: None,
            })
        }
        Plan::QccJoint { cfg, grid_points } => {
            let r = qcc::run_joint_pointers(cfg)?;
            let csv = match grid_points {
                Some(n) => {
                    let n = *n as usize;
                    let grid = r.state.to_grid(n)?;
                    let (lo, hi) = r.state.grid_domain();
                    let dx = (hi - lo) / (n - 1) as f64;
                    let rows: Vec<Vec<Cell>> = grid
                        .amps()
                        .iter()
                        .enumerate()
                        .map(|(k, a)| {
                            vec![
                                (lo + (k / n) as f64 * dx).into(),
                                (lo + (k % n) as f64 * dx).into(),
                                a.re.into(),
                                a.im.into(),
                                a.norm_sqr().into(),
                            ]
                        })
                        .collect();
                    Some(csv_string(&["x_I", "x_II", "re", "im", "prob_density"], &rows))
                }
                None => None,
            };
            Ok(Outcome {
                results: to_value(&r),
                csv,
            })
        }
        Plan::Absorber {
            arm,
            ms,
            measured_ratio,
        } => {
            let r = intensity_absorber(&AbsorberConfig { arm: *arm, m: ms[0] })?;
            let mut v = to_value(&r);
            if let Some(ratio) = measured_ratio {
                v["inferred_from_measured_ratio"] = num(infer_projector_weak_value(*arm, ms[0], *ratio)?);
            }
            Ok(Outcome { results: v, csv: None })
        }
        Plan::Magnetic {
            arm,
            alphas,
            measured_ratio,
            pi_w,
        } => {
            let r = intensity_magnetic(&MagneticConfig {
                arm: *arm,
                alpha: alphas[0],
            })?;
            let mut v = to_value(&r);
            if let Some(ratio) = measured_ratio {
                let pi = match pi_w {
                    Some(p) => *p,
                    None => weak_value(&qcc::build_prepost(), &qcc::observable(*arm, ArmObservable::Projector))?.re,
                };
                v["inferred_from_measured_ratio"] =
                    num(infer_spin_weak_value_modulus(*arm, alphas[0], *ratio, pi)?);
            }
            if *arm == Arm::I {
                v["systematic_term"] = to_value(&crate::neutron::systematic_term_report(alphas[0])?);
            }
            Ok(Outcome { results: v, csv: None })
        }
        Plan::Montecarlo {
            setup,
            g,
            arm,
            m,
            alpha,
            n,
            seed,
        } => match setup.context {
            Context::Qcc | Context::Anomalous => {
                let (ctx, obs, phi0) = setup.build()?;
                let batch = sample_trials(&ctx, &obs, &phi0, *g, *n, *seed)?;
                let exact = couple_and_postselect(&ctx, &obs, &phi0, *g)?;
                let wv = exact.weak_value.ok_or(Error::OrthogonalPostselection(ctx.overlap().norm()))?;
                // With g = 0 there is no shift to estimate; report the rate only.
                let mut v = if *g == 0.0 {
                    json!({
                        "mean_shift": null,
                        "std_error": null,
                        "estimated_wv_re": null,
                        "postselect_rate": batch.n_postselected as f64 / batch.n_total as f64,
                        "n_total": batch.n_total,
                        "n_postselected": batch.n_postselected,
                    })
                } else {
                    to_value(&estimate_weak_value(&batch, &phi0, *g)?)
                };
                v["exact_weak_value_re"] = num(wv.re);
                v["exact_weak_value_im"] = num(wv.im);
                v["exact_postselect_prob"] = num(exact.postselect_prob);
                v["seed"] = Value::from(*seed);
                Ok(Outcome {
                    results: v,
                    csv: Some(batch_csv(&batch)),
                })
            }
            Context::Absorber | Context::Magnetic => {
                let scenario = if setup.context == Context::Absorber {
                    IntensityScenario::Absorber(AbsorberConfig { arm: *arm, m: *m })
                } else {
                    IntensityScenario::Magnetic(MagneticConfig {
                        arm: *arm,
                        alpha: *alpha,
                    })
                };
                let c = sample_intensity_experiment(&scenario, *n, *seed)?;
                Ok(Outcome {
                    results: to_value(&c),
                    csv: None,
                })
            }
        },
        Plan::Sweep { inner, plan } => execute_sweep(*inner, plan),
    }
}

fn execute_sweep(inner: Scenario, plan: &Plan) -> Result<Outcome, Error> {
    use rayon::prelude::*;
    let (rows, csv, errs, params): (Value, String, Vec<f64>, Vec<f64>) = match plan {
        Plan::Absorber { arm, ms, .. } => {
            let rows = crate::neutron::sweep_absorber(*arm, ms)?;
            sweep_parts(&rows)
        }
        Plan::Magnetic { arm, alphas, .. } => {
            let rows = crate::neutron::sweep_magnetic(*arm, alphas)?;
            sweep_parts(&rows)
        }
        Plan::WeakValue { setup, gs, .. } => {
            let pts: Vec<WeakValueResult> = gs
                .par_iter()
                .map(|&g| weak_value_point(setup, g).map(|p| p.0))
                .collect::<Result<_, _>>()?;
            let cells: Vec<Vec<Cell>> = gs
                .iter()
                .zip(&pts)
                .map(|(g, p)| {
                    vec![
                        (*g).into(),
                        p.exact_shift.into(),
                        p.predicted_shift.into(),
                        p.abs_error.into(),
                        p.postselect_prob_coupled.into(),
                    ]
                })
                .collect();
            let rows: Vec<Value> = gs
                .iter()
                .zip(&pts)
                .map(|(g, p)| {
                    let mut v = to_value(p);
                    v["param"] = num(*g);
                    v
                })
                .collect();
            let csv = csv_string(
                &["param", "exact_shift", "predicted_shift", "abs_error", "postselect_prob_coupled"],
                &cells,
            );
            (
                Value::Array(rows),
                csv,
                pts.iter().map(|p| p.abs_error).collect(),
                gs.clone(),
            )
        }
        _ => unreachable!("only sweepable scenarios reach here"),
    };
    let (xs, ys): (Vec<f64>, Vec<f64>) = params
        .iter()
        .zip(&errs)
        .filter(|(x, y)| x.abs() > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.abs(), *y))
        .unzip();
    let exponent = loglog_slope(&xs, &ys);
    Ok(Outcome {
        results: json!({
            "scenario": inner.name(),
            "swept": inner.swept_key(),
            "error_exponent": exponent.map(num),
            "rows": rows,
        }),
        csv: Some(csv),
    })
}

fn sweep_parts(rows: &[SweepRow]) -> (Value, String, Vec<f64>, Vec<f64>) {
    (
        to_value(&rows),
        sweep_csv(rows),
        rows.iter().map(|r| r.expansion_error).collect(),
        rows.iter().map(|r| r.param).collect(),
    )
}

/// Seconds since the epoch as an RFC 3339 UTC timestamp.
pub fn rfc3339(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    // Civil-from-days, proleptic Gregorian.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    rfc3339(secs)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run_scenario(scenario: Scenario, args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let raw = gather_raw(args)?;
    let (plan, echo, violations) = resolve(scenario, &raw)?;
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let outcome = execute(&plan)?;
    let record = json!({
        "config": { "scenario": scenario.name(), "parameters": Value::Object(echo) },
        "results": outcome.results,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": timestamp(),
    });
    let text = to_json_string(&record).map_err(|e| CliError::Io(e.to_string()))?;

    let out_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let csv_to_stdout = args.csv.as_deref() == Some("-");
    match (&args.output, &out_dir) {
        (Some(p), _) => write_file(p, &text)?,
        (None, Some(d)) => write_file(&d.join(format!("{}.json", scenario.name())), &text)?,
        (None, None) if !csv_to_stdout => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?,
        _ => {}
    }
    if let Some(csv) = outcome.csv {
        match (args.csv.as_deref(), &out_dir) {
            (Some("-"), _) => stdout.write_all(csv.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?,
            (Some(p), _) => write_file(Path::new(p), &csv)?,
            (None, Some(d)) => write_file(&d.join(format!("{}.csv", scenario.name())), &csv)?,
            (None, None) => {}
        }
    } else if args.csv.is_some() {
        return Err(CliError::Invalid(vec![Violation {
            field: "csv".into(),
            constraint: format!("`{scenario}` with these parameters produces no CSV"),
        }]));
    }
    Ok(())
}

fn run_validate(args: &ValidateArgs, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let scenario: Scenario = args.target.parse().map_err(CliError::Parse)?;
    let raw = gather_raw(&args.run)?;
    let (_, echo, violations) = resolve(scenario, &raw)?;
    let report = json!({
        "scenario": scenario.name(),
        "parameters": Value::Object(echo),
        "valid": violations.is_empty(),
        "violations": violations,
    });
    let text = to_json_string(&report).map_err(|e| CliError::Io(e.to_string()))?;
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(violations.is_empty())
}

/// Runs the command line `args` (program name first) and returns the exit
/// status. Errors go to `stderr` as a JSON object.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let err = CliError::Parse(e.to_string().trim().to_string());
            let _ = stderr.write_all(to_json_string(&err.to_json()).unwrap_or_default().as_bytes());
            return EXIT_PARSE;
        }
    };
    let result = match &cli.command {
        Command::Validate(v) => match run_validate(v, stdout) {
            Ok(true) => Ok(()),
            Ok(false) => return EXIT_VALIDATION,
            Err(e) => Err(e),
        },
        Command::WeakValue(a) => run_scenario(Scenario::WeakValue, a, stdout),
        Command::Qcc(a) => run_scenario(Scenario::Qcc, a, stdout),
        Command::QccJoint(a) => run_scenario(Scenario::QccJoint, a, stdout),
        Command::NeutronAbsorber(a) => run_scenario(Scenario::NeutronAbsorber, a, stdout),
        Command::NeutronMagnetic(a) => run_scenario(Scenario::NeutronMagnetic, a, stdout),
        Command::Montecarlo(a) => run_scenario(Scenario::Montecarlo, a, stdout),
        Command::Sweep(a) => run_scenario(Scenario::Sweep, a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = stderr.write_all(to_json_string(&e.to_json()).unwrap_or_default().as_bytes());
            e.exit_code()
        }
    }
}
