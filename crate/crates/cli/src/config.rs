//! Configuration files: a flat TOML table plus optional `[sde]`, `[experiment]` and `[sweep]` sections.
//!
//! Values are resolved file first, then `SLOWSDE_SEED`, then `--set` overrides.
//! Every key is checked against [`SCHEMA`]; unknown keys and type mismatches are errors.

use std::fmt;
use std::path::Path;

use slowsde_core::optim::RunConfig;
use slowsde_core::samplers::SamplerKind;
use slowsde_core::slowsde::{default_dt, SdeKind};
use slowsde_harness::config::{Experiment, HarnessConfig, ModelSpec, NoiseSpec, TestFn};
use toml::{Table, Value};

pub const SEED_ENV: &str = "SLOWSDE_SEED";

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Syntax(String),
    UnknownKey { key: String, valid: Vec<&'static str> },
    Type { key: String, expected: &'static str, got: String },
    Missing(String),
    Invalid { key: String, msg: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Syntax(m) => write!(f, "config syntax error: {m}"),
            ConfigError::UnknownKey { key, valid } => write!(f, "unknown key: {key} (valid keys: {})", valid.join(", ")),
            ConfigError::Type { key, expected, got } => write!(f, "type mismatch at {key}: expected {expected}, got {got}"),
            ConfigError::Missing(k) => write!(f, "missing required key: {k}"),
            ConfigError::Invalid { key, msg } => write!(f, "invalid value at {key}: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Str,
    FloatList,
    StrList,
    /// Sweep values: any list.
    List,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Int => "integer",
            Kind::Float => "number",
            Kind::Bool => "boolean",
            Kind::Str => "string",
            Kind::FloatList => "list of numbers",
            Kind::StrList => "list of strings",
            Kind::List => "list",
        }
    }
}

/// Every accepted key, dotted by section.
pub const SCHEMA: &[(&str, Kind)] = &[
    ("seed", Kind::Int),
    ("model", Kind::Str),
    ("noise", Kind::Str),
    ("noise_scale", Kind::Float),
    ("noise_cov", Kind::FloatList),
    ("lambdas", Kind::FloatList),
    ("dim", Kind::Int),
    ("inputs", Kind::Int),
    ("features", Kind::Int),
    ("classes", Kind::Int),
    ("points", Kind::Int),
    ("corruption", Kind::Float),
    ("data_seed", Kind::Int),
    ("theta0", Kind::FloatList),
    ("algorithm", Kind::Str),
    ("eta", Kind::Float),
    ("K", Kind::Int),
    ("B_loc", Kind::Int),
    ("H", Kind::Int),
    ("rounds", Kind::Int),
    ("t0", Kind::Int),
    ("sampler", Kind::Str),
    ("record_every", Kind::Int),
    ("project", Kind::Bool),
    ("sde.kind", Kind::Str),
    ("sde.horizon", Kind::Float),
    ("sde.dt", Kind::Float),
    ("sde.record_every", Kind::Int),
    ("sde.kappa1", Kind::Float),
    ("sde.kappa2", Kind::Float),
    ("sde.kappa", Kind::Float),
    ("experiment.kind", Kind::Str),
    ("experiment.etas", Kind::FloatList),
    ("experiment.alpha", Kind::Float),
    ("experiment.alphas", Kind::FloatList),
    ("experiment.alpha_eta", Kind::Float),
    ("experiment.seeds", Kind::Int),
    ("experiment.beta", Kind::Float),
    ("experiment.delta", Kind::Float),
    ("experiment.horizon", Kind::Float),
    ("experiment.test_fns", Kind::StrList),
    ("experiment.sde_dt", Kind::Float),
    ("experiment.kappa", Kind::Float),
    ("experiment.points", Kind::Int),
    ("experiment.mc_samples", Kind::Int),
    ("sweep.key", Kind::Str),
    ("sweep.values", Kind::List),
];

const SECTIONS: &[&str] = &["sde", "experiment", "sweep"];

fn kind_of(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|(_, t)| *t)
}

fn valid_keys() -> Vec<&'static str> {
    SCHEMA.iter().map(|(k, _)| *k).collect()
}

fn type_name(v: &Value) -> String {
    match v {
        Value::Array(_) => "list".into(),
        Value::Table(_) => "section".into(),
        other => other.type_str().into(),
    }
}

/// Checks one value against its schema type; integers are accepted where numbers are.
fn check_type(key: &str, v: &Value) -> Res<()> {
    let kind = kind_of(key).ok_or_else(|| ConfigError::UnknownKey { key: key.to_string(), valid: valid_keys() })?;
    let num = |v: &Value| matches!(v, Value::Float(_) | Value::Integer(_));
    let ok = match kind {
        Kind::Int => matches!(v, Value::Integer(i) if *i >= 0),
        Kind::Float => num(v),
        Kind::Bool => v.is_bool(),
        Kind::Str => v.is_str(),
        Kind::FloatList => v.as_array().is_some_and(|a| a.iter().all(num)),
        Kind::StrList => v.as_array().is_some_and(|a| a.iter().all(Value::is_str)),
        Kind::List => v.is_array(),
    };
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Type { key: key.to_string(), expected: kind.name(), got: type_name(v) })
    }
}

/// Validates every key of a raw table, descending into known sections.
pub fn check_table(t: &Table) -> Res<()> {
    for (k, v) in t {
        match v {
            Value::Table(inner) if SECTIONS.contains(&k.as_str()) => {
                for (ik, iv) in inner {
                    check_type(&format!("{k}.{ik}"), iv)?;
                }
            }
            _ => check_type(k, v)?,
        }
    }
    Ok(())
}

/// Parses the right-hand side of `--set`: a TOML value, or a bare string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets a dotted key in `t`, creating the section if needed.
pub fn set_dotted(t: &mut Table, key: &str, v: Value) -> Res<()> {
    match key.split_once('.') {
        Some((sec, k)) if SECTIONS.contains(&sec) => {
            let entry = t.entry(sec.to_string()).or_insert_with(|| Value::Table(Table::new()));
            match entry {
                Value::Table(inner) => {
                    inner.insert(k.to_string(), v);
                    Ok(())
                }
                other => Err(ConfigError::Type { key: sec.to_string(), expected: "section", got: type_name(other) }),
            }
        }
        Some(_) => Err(ConfigError::UnknownKey { key: key.to_string(), valid: valid_keys() }),
        None => {
            t.insert(key.to_string(), v);
            Ok(())
        }
    }
}

fn get_dotted<'a>(t: &'a Table, key: &str) -> Option<&'a Value> {
    match key.split_once('.') {
        Some((sec, k)) => t.get(sec)?.as_table()?.get(k),
        None => t.get(key),
    }
}

/// Merges the file, the seed environment value and `--set` overrides into one checked table.
pub fn merge(file: Option<&str>, env_seed: Option<&str>, overrides: &[String]) -> Res<Table> {
    let mut t = match file {
        Some(s) => s.parse::<Table>().map_err(|e| ConfigError::Syntax(e.to_string()))?,
        None => Table::new(),
    };
    check_table(&t)?;
    if let Some(s) = env_seed {
        let seed: u64 = s.trim().parse().map_err(|_| ConfigError::Invalid { key: SEED_ENV.into(), msg: format!("{s:?} is not a nonnegative integer") })?;
        t.insert("seed".into(), Value::Integer(seed as i64));
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("override {o:?} is not of the form key=value")))?;
        let (k, v) = (k.trim(), parse_value(v.trim()));
        check_type(k, &v)?;
        set_dotted(&mut t, k, v)?;
    }
    Ok(t)
}

/// Reads `path` (if any) and merges it with the environment and overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Res<Table> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let env = std::env::var(SEED_ENV).ok();
    merge(text.as_deref(), env.as_deref(), overrides)
}

/// Typed access to a checked table.
struct View<'a>(&'a Table);

impl View<'_> {
    fn has(&self, k: &str) -> bool {
        get_dotted(self.0, k).is_some()
    }

    fn f64(&self, k: &str, default: f64) -> f64 {
        get_dotted(self.0, k).map(|v| v.as_float().or(v.as_integer().map(|i| i as f64)).expect("checked")).unwrap_or(default)
    }

    fn usize(&self, k: &str, default: usize) -> usize {
        get_dotted(self.0, k).map(|v| v.as_integer().expect("checked") as usize).unwrap_or(default)
    }

    fn u64(&self, k: &str, default: u64) -> u64 {
        get_dotted(self.0, k).map(|v| v.as_integer().expect("checked") as u64).unwrap_or(default)
    }

    fn bool(&self, k: &str, default: bool) -> bool {
        get_dotted(self.0, k).map(|v| v.as_bool().expect("checked")).unwrap_or(default)
    }

    fn str<'b>(&'b self, k: &str, default: &'b str) -> &'b str {
        get_dotted(self.0, k).map(|v| v.as_str().expect("checked")).unwrap_or(default)
    }

    fn floats(&self, k: &str) -> Option<Vec<f64>> {
        get_dotted(self.0, k).map(|v| {
            v.as_array().expect("checked").iter().map(|x| x.as_float().or(x.as_integer().map(|i| i as f64)).expect("checked")).collect()
        })
    }

    fn strings(&self, k: &str) -> Option<Vec<String>> {
        get_dotted(self.0, k).map(|v| v.as_array().expect("checked").iter().map(|x| x.as_str().expect("checked").to_string()).collect())
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Parallel,
    Local,
    PostLocal,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Parallel => "parallel",
            Algorithm::Local => "local",
            Algorithm::PostLocal => "post_local",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSettings {
    pub kind: SdeKind<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<Value>,
}

/// Fully resolved settings for every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub seed: u64,
    pub model: ModelSpec,
    pub theta0: Vec<f64>,
    pub algorithm: Algorithm,
    pub run: RunConfig<f64>,
    pub sde: SdeSettings,
    /// Harness settings when `experiment.kind` is given.
    pub experiment: Option<HarnessConfig>,
    pub sweep: Option<Sweep>,
    /// The merged input table.
    pub table: Table,
}

fn model_spec(v: &View) -> Res<ModelSpec> {
    let dim = match v.str("model", "valley") {
        "valley" => 2,
        "block" => v.usize("dim", 3),
        _ => 0,
    };
    let scale = v.f64("noise_scale", 1.0);
    let noise = match v.str("noise", "isotropic") {
        "none" => NoiseSpec::None,
        "isotropic" => NoiseSpec::Isotropic(scale),
        "hessian_aligned" => NoiseSpec::HessianAligned(scale),
        "custom" => {
            let cov = v.floats("noise_cov").ok_or_else(|| ConfigError::Missing("noise_cov".into()))?;
            if cov.len() != dim * dim {
                return Err(invalid("noise_cov", format!("expected {} entries, got {}", dim * dim, cov.len())));
            }
            NoiseSpec::Custom(cov)
        }
        other => return Err(invalid("noise", format!("{other:?} is not one of none, isotropic, hessian_aligned, custom"))),
    };
    Ok(match v.str("model", "valley") {
        "valley" => ModelSpec::Valley { noise },
        "block" => ModelSpec::Block { lambdas: v.floats("lambdas").unwrap_or_else(|| vec![1.0]), dim, noise },
        "softmax" => ModelSpec::Softmax {
            inputs: v.usize("inputs", 4),
            features: v.usize("features", 5),
            classes: v.usize("classes", 3),
            points: v.usize("points", 5),
            corruption: v.f64("corruption", 0.2),
            seed: v.u64("data_seed", 1),
        },
        other => return Err(invalid("model", format!("{other:?} is not one of valley, block, softmax"))),
    })
}

fn default_theta0(model: &ModelSpec) -> Vec<f64> {
    match model {
        ModelSpec::Valley { .. } => vec![0.5, 1.0],
        other => vec![0.0; other.dim()],
    }
}

fn sde_settings(v: &View, run: &RunConfig<f64>) -> Res<SdeSettings> {
    let b = run.global_batch() as f64;
    let k = run.workers as f64;
    let eta_h = run.alpha();
    let kind = match v.str("sde.kind", "local") {
        "sgd" => SdeKind::Sgd { b },
        "local" => SdeKind::Local { b, k, eta_h },
        "kappa" => SdeKind::Kappa { kappa1: v.f64("sde.kappa1", 1.0 / b), kappa2: v.f64("sde.kappa2", 1.0 / (2.0 * b)) },
        "local_lsr" => SdeKind::LocalLsr { b, k, kappa: v.f64("sde.kappa", 1.0), eta_h },
        "local_inf" => SdeKind::LocalInf { b, k },
        "label_noise_sgd" => SdeKind::LabelNoiseSgd { b },
        "label_noise_local" => SdeKind::LabelNoiseLocal { b, k, eta_h },
        "label_noise_local_inf" => SdeKind::LabelNoiseLocalInf { b, k },
        other => return Err(invalid("sde.kind", format!("unknown slow SDE {other:?}"))),
    };
    kind.validate().map_err(|e| invalid("sde.kind", e.to_string()))?;
    let horizon = v.f64("sde.horizon", 1.0);
    if !(horizon > 0.0) {
        return Err(invalid("sde.horizon", "must be positive"));
    }
    let dt = v.f64("sde.dt", default_dt(horizon));
    if !(dt > 0.0) {
        return Err(invalid("sde.dt", "must be positive"));
    }
    Ok(SdeSettings { kind, horizon, dt, record_every: v.usize("sde.record_every", 10).max(1) })
}

fn experiment(v: &View, model: &ModelSpec, kind: Experiment) -> Res<HarnessConfig> {
    let mut c = HarnessConfig::defaults(kind);
    if v.has("model") {
        c.model = model.clone();
    }
    if v.has("theta0") {
        c.theta0 = v.floats("theta0").expect("present");
    }
    c.workers = v.usize("K", c.workers);
    c.local_batch = v.usize("B_loc", c.local_batch);
    c.master_seed = v.u64("seed", c.master_seed);
    c.etas = v.floats("experiment.etas").unwrap_or(c.etas);
    c.alpha = v.f64("experiment.alpha", c.alpha);
    c.alphas = v.floats("experiment.alphas").unwrap_or(c.alphas);
    c.alpha_eta = v.f64("experiment.alpha_eta", c.alpha_eta);
    c.seeds = v.usize("experiment.seeds", c.seeds);
    c.beta = v.f64("experiment.beta", c.beta);
    c.delta = v.f64("experiment.delta", c.delta);
    c.horizon = v.f64("experiment.horizon", c.horizon);
    if let Some(fs) = v.strings("experiment.test_fns") {
        c.test_fns = fs
            .iter()
            .map(|s| s.parse::<TestFn>())
            .collect::<Result<_, _>>()
            .map_err(|e| invalid("experiment.test_fns", e.to_string()))?;
    }
    c.sde_dt = v.f64("experiment.sde_dt", c.sde_dt);
    c.kappa = v.f64("experiment.kappa", c.kappa);
    c.points = v.usize("experiment.points", c.points);
    c.mc_samples = v.usize("experiment.mc_samples", c.mc_samples);
    c.validate().map_err(|e| invalid("experiment", e.to_string()))?;
    Ok(c)
}

/// Resolves a merged table; `experiment` forces the experiment kind (used by `moments`).
pub fn resolve(t: &Table, forced: Option<Experiment>) -> Res<Resolved> {
    check_table(t)?;
    let v = View(t);
    let model = model_spec(&v)?;
    model.build().map_err(|e| invalid("model", e.to_string()))?;
    let theta0 = v.floats("theta0").unwrap_or_else(|| default_theta0(&model));
    if theta0.len() != model.dim() {
        return Err(invalid("theta0", format!("has {} entries but the model has d = {}", theta0.len(), model.dim())));
    }
    let algorithm = match v.str("algorithm", "local") {
        "parallel" => Algorithm::Parallel,
        "local" => Algorithm::Local,
        "post_local" => Algorithm::PostLocal,
        other => return Err(invalid("algorithm", format!("{other:?} is not one of parallel, local, post_local"))),
    };
    let seed = v.u64("seed", 0);
    let mut run = RunConfig::new(v.f64("eta", 0.01), v.usize("K", 4), v.usize("B_loc", 1), v.usize("H", 50), v.usize("rounds", 100))
        .with_seed(seed);
    run.switch_step = v.usize("t0", 0);
    run.record_every = v.usize("record_every", 1);
    run.project = v.bool("project", true);
    run.sampler = match v.str("sampler", "with_replacement") {
        "with_replacement" => SamplerKind::WithReplacement,
        "without_replacement" => SamplerKind::WithoutReplacement,
        other => return Err(invalid("sampler", format!("{other:?} is not one of with_replacement, without_replacement"))),
    };
    run.validate().map_err(|e| invalid("run", e.to_string()))?;
    let sde = sde_settings(&v, &run)?;
    let kind = match forced {
        Some(k) => Some(k),
        None if v.has("experiment.kind") => {
            Some(v.str("experiment.kind", "").parse::<Experiment>().map_err(|e| invalid("experiment.kind", e.to_string()))?)
        }
        None => None,
    };
    let experiment = kind.map(|k| experiment(&v, &model, k)).transpose()?;
    let sweep = match (get_dotted(t, "sweep.key"), get_dotted(t, "sweep.values")) {
        (None, None) => None,
        (Some(k), Some(vals)) => {
            let key = k.as_str().expect("checked").to_string();
            let values = vals.as_array().expect("checked").clone();
            for x in &values {
                check_type(&key, x).map_err(|e| invalid("sweep.values", e.to_string()))?;
            }
            Some(Sweep { key, values })
        }
        (None, Some(_)) => return Err(ConfigError::Missing("sweep.key".into())),
        (Some(_), None) => return Err(ConfigError::Missing("sweep.values".into())),
    };
    Ok(Resolved { seed, model, theta0, algorithm, run, sde, experiment, sweep, table: t.clone() })
}

fn floats(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| Value::Float(x)).collect())
}

fn sde_table(s: &SdeSettings) -> Table {
    let mut t = Table::new();
    t.insert("kind".into(), s.kind.name().into());
    let f = |x: f64| Value::Float(x);
    match s.kind {
        SdeKind::Sgd { b } | SdeKind::LabelNoiseSgd { b } => {
            t.insert("B".into(), f(b));
        }
        SdeKind::Local { b, k, eta_h } | SdeKind::LabelNoiseLocal { b, k, eta_h } => {
            t.insert("B".into(), f(b));
            t.insert("K".into(), f(k));
            t.insert("eta_h".into(), f(eta_h));
        }
        SdeKind::Kappa { kappa1, kappa2 } => {
            t.insert("kappa1".into(), f(kappa1));
            t.insert("kappa2".into(), f(kappa2));
        }
        SdeKind::LocalLsr { b, k, kappa, eta_h } => {
            t.insert("B".into(), f(b));
            t.insert("K".into(), f(k));
            t.insert("kappa".into(), f(kappa));
            t.insert("eta_h".into(), f(eta_h));
        }
        SdeKind::LocalInf { b, k } | SdeKind::LabelNoiseLocalInf { b, k } => {
            t.insert("B".into(), f(b));
            t.insert("K".into(), f(k));
        }
    }
    t.insert("horizon".into(), f(s.horizon));
    t.insert("dt".into(), f(s.dt));
    t.insert("record_every".into(), Value::Integer(s.record_every as i64));
    t
}

fn model_table(m: &ModelSpec) -> Table {
    let mut t = Table::new();
    t.insert("kind".into(), m.name().into());
    let noise = |t: &mut Table, n: &NoiseSpec| {
        t.insert("noise".into(), n.name().into());
        match n {
            NoiseSpec::Isotropic(s) | NoiseSpec::HessianAligned(s) => {
                t.insert("noise_scale".into(), Value::Float(*s));
            }
            NoiseSpec::Custom(c) => {
                t.insert("noise_cov".into(), floats(c));
            }
            NoiseSpec::None => {}
        }
    };
    match m {
        ModelSpec::Valley { noise: n } => noise(&mut t, n),
        ModelSpec::Block { lambdas, dim, noise: n } => {
            t.insert("lambdas".into(), floats(lambdas));
            t.insert("dim".into(), Value::Integer(*dim as i64));
            noise(&mut t, n);
        }
        ModelSpec::Softmax { inputs, features, classes, points, corruption, seed } => {
            for (k, x) in [("inputs", inputs), ("features", features), ("classes", classes), ("points", points)] {
                t.insert(k.into(), Value::Integer(*x as i64));
            }
            t.insert("corruption".into(), Value::Float(*corruption));
            t.insert("data_seed".into(), Value::Integer(*seed as i64));
        }
    }
    t
}

impl Resolved {
    /// `eta * H` of the optimizer run.
    pub fn alpha(&self) -> f64 {
        self.run.alpha()
    }

    /// Effective configuration, with defaults and derived values filled in.
    pub fn to_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert("theta0".into(), floats(&self.theta0));
        let r = &self.run;
        let mut run = Table::new();
        run.insert("algorithm".into(), self.algorithm.name().into());
        run.insert("eta".into(), Value::Float(r.eta));
        for (k, x) in [("K", r.workers), ("B_loc", r.local_batch), ("H", r.local_steps), ("rounds", r.rounds), ("t0", r.switch_step), ("record_every", r.record_every)] {
            run.insert(k.into(), Value::Integer(x as i64));
        }
        let sampler = match r.sampler {
            SamplerKind::WithReplacement => "with_replacement",
            SamplerKind::WithoutReplacement => "without_replacement",
        };
        run.insert("sampler".into(), sampler.into());
        run.insert("project".into(), Value::Boolean(r.project));
        run.insert("alpha".into(), Value::Float(self.alpha()));
        run.insert("B".into(), Value::Integer(r.global_batch() as i64));
        t.insert("model".into(), Value::Table(model_table(&self.model)));
        t.insert("run".into(), Value::Table(run));
        t.insert("sde".into(), Value::Table(sde_table(&self.sde)));
        if let Some(c) = &self.experiment {
            let mut e = Table::new();
            e.insert("kind".into(), c.experiment.name().into());
            e.insert("model".into(), Value::Table(model_table(&c.model)));
            e.insert("etas".into(), floats(&c.etas));
            for (k, x) in [("K", c.workers), ("B_loc", c.local_batch), ("seeds", c.seeds), ("points", c.points), ("mc_samples", c.mc_samples)] {
                e.insert(k.into(), Value::Integer(x as i64));
            }
            for (k, x) in [("alpha", c.alpha), ("alpha_eta", c.alpha_eta), ("beta", c.beta), ("delta", c.delta), ("horizon", c.horizon), ("sde_dt", c.sde_dt), ("kappa", c.kappa)] {
                e.insert(k.into(), Value::Float(x));
            }
            e.insert("alphas".into(), floats(&c.alphas));
            e.insert("theta0".into(), floats(&c.theta0()));
            e.insert("test_fns".into(), Value::Array(c.test_fns.iter().map(|f| Value::String(f.to_string())).collect()));
            e.insert("master_seed".into(), Value::Integer(c.master_seed as i64));
            t.insert("experiment".into(), Value::Table(e));
        }
        if let Some(s) = &self.sweep {
            let mut w = Table::new();
            w.insert("key".into(), s.key.clone().into());
            w.insert("values".into(), Value::Array(s.values.clone()));
            t.insert("sweep".into(), Value::Table(w));
        }
        toml::to_string(&t).expect("plain table serializes")
    }

    /// Copy of this configuration with one dotted key replaced.
    pub fn with_override(&self, key: &str, v: Value) -> Res<Resolved> {
        check_type(key, &v)?;
        let mut t = self.table.clone();
        set_dotted(&mut t, key, v)?;
        resolve(&t, self.experiment.as_ref().map(|c| c.experiment))
    }
}
