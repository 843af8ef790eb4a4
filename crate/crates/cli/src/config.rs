//! Line-oriented experiment configuration: `[section]` headers followed by
//! `key = value` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;

use emzkit::montecarlo::{Integrator, McConfig};
use emzkit::operator::{LangevinModel, Polynomial, SdeModel};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// A configuration problem, located by line (when known) and field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped configuration text.
#[derive(Debug, Clone, Default)]
struct RawConfig {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("model", &["kind", "theta", "sigma", "mass", "friction", "beta", "potential"]),
    ("mc_model", &["kind", "theta", "sigma", "mass", "friction", "beta", "potential"]),
    ("basis", &["n", "n_q", "n_p"]),
    ("projection", &["observables"]),
    ("time", &["start", "stop", "step"]),
    (
        "tolerances",
        &["kernel", "fit_lower", "fit_upper", "re", "im", "rate", "gle", "closed_form", "z"],
    ),
    (
        "mc",
        &[
            "enabled", "paths", "dt", "horizon", "burn_in", "seed", "batches", "lag_step", "max_lag", "initial",
            "x0", "integrator",
        ],
    ),
    ("output", &["dir"]),
];

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(Some(n), "section", "unterminated section header"))?
                    .trim()
                    .to_string();
                let keys = KNOWN
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| err(Some(n), name.clone(), "unknown section"))?;
                if raw.sections.contains_key(keys.0) {
                    return Err(err(Some(n), name, "duplicate section"));
                }
                raw.sections.insert(name.clone(), (n, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(Some(n), "syntax", "expected `key = value`"))?;
            let key = key.trim().to_string();
            let section = current
                .as_ref()
                .ok_or_else(|| err(Some(n), key.clone(), "key outside of any section"))?;
            let field = format!("{section}.{key}");
            let allowed = KNOWN.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key.as_str()) {
                return Err(err(Some(n), field, "unknown key"));
            }
            let entries = &mut raw.sections.get_mut(section).expect("section exists").1;
            if entries.contains_key(&key) {
                return Err(err(Some(n), field, "duplicate key"));
            }
            entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line: n,
                },
            );
        }
        Ok(raw)
    }

    fn has(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn section_line(&self, section: &str) -> Option<usize> {
        self.sections.get(section).map(|s| s.0)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.1.get(key))
    }

    fn echo(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        self.sections
            .iter()
            .map(|(s, (_, e))| (s.clone(), e.iter().map(|(k, v)| (k.clone(), v.value.clone())).collect()))
            .collect()
    }
}

/// Typed accessor that attaches line and field to every error.
struct Reader<'a> {
    raw: &'a RawConfig,
    section: &'a str,
}

impl<'a> Reader<'a> {
    fn field(&self, key: &str) -> String {
        format!("{}.{key}", self.section)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw
            .entry(self.section, key)
            .map(|e| e.line)
            .or_else(|| self.raw.section_line(self.section))
    }

    fn fail(&self, key: &str, message: impl Into<String>) -> ConfigError {
        err(self.line(key), self.field(key), message)
    }

    fn string(&self, key: &str) -> Option<&'a str> {
        self.raw.entry(self.section, key).map(|e| e.value.as_str())
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| self.fail(key, "missing required value"))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.string(key)
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.fail(key, format!("`{s}` is not a finite number")))
            })
            .transpose()
    }

    fn positive(&self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let v = match self.f64(key)? {
            Some(v) => v,
            None => self.required(key, default)?,
        };
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.fail(key, format!("must be positive, got {v}")))
        }
    }

    fn non_negative(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64(key)?.unwrap_or(default);
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(self.fail(key, format!("must be non-negative, got {v}")))
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.string(key)
            .map(|s| {
                s.parse::<u64>()
                    .map_err(|_| self.fail(key, format!("`{s}` is not a non-negative integer")))
            })
            .transpose()
    }

    fn count(&self, key: &str, default: Option<usize>, min: usize) -> Result<usize, ConfigError> {
        let v = match self.u64(key)? {
            Some(v) => v as usize,
            None => self.required(key, default)?,
        };
        if v < min {
            return Err(self.fail(key, format!("must be at least {min}, got {v}")));
        }
        Ok(v)
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.string(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(s) => Err(self.fail(key, format!("`{s}` is not true or false"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.string(key).map(|s| parse_list(s).map_err(|m| self.fail(key, m))).transpose()
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{t}` is not a finite number"))
        })
        .collect()
}

/// Dynamics named in a `[model]` section.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Ou { theta: f64, sigma: f64 },
    Langevin {
        mass: f64,
        friction: f64,
        beta: f64,
        potential: Vec<f64>,
    },
}

impl ModelConfig {
    fn read(raw: &RawConfig, section: &str, fallback: Option<&ModelConfig>) -> Result<Self, ConfigError> {
        let r = Reader { raw, section };
        let kind = match (r.string("kind"), fallback) {
            (Some(k), _) => k,
            (None, Some(ModelConfig::Ou { .. })) => "ou",
            (None, Some(ModelConfig::Langevin { .. })) => "langevin",
            (None, None) => return Err(r.fail("kind", "missing required value")),
        };
        let inherit = |key: &str| -> Option<f64> {
            match (fallback, key) {
                (Some(ModelConfig::Ou { theta, .. }), "theta") => Some(*theta),
                (Some(ModelConfig::Ou { sigma, .. }), "sigma") => Some(*sigma),
                (Some(ModelConfig::Langevin { mass, .. }), "mass") => Some(*mass),
                (Some(ModelConfig::Langevin { friction, .. }), "friction") => Some(*friction),
                (Some(ModelConfig::Langevin { beta, .. }), "beta") => Some(*beta),
                _ => None,
            }
        };
        match kind {
            "ou" => Ok(ModelConfig::Ou {
                theta: r.positive("theta", inherit("theta"))?,
                sigma: r.positive("sigma", inherit("sigma"))?,
            }),
            "langevin" => {
                let mass = r.positive("mass", inherit("mass").or(Some(1.0)))?;
                let friction = r.positive("friction", inherit("friction"))?;
                let beta = r.positive("beta", inherit("beta").or(Some(1.0)))?;
                let potential = match (r.list("potential")?, fallback) {
                    (Some(p), _) => p,
                    (None, Some(ModelConfig::Langevin { potential, .. })) => potential.clone(),
                    (None, _) => vec![0.0, 0.0, 0.5],
                };
                let poly = Polynomial::new(potential.clone());
                if poly.degree() < 2 || poly.degree() % 2 == 1 || poly.leading() <= 0.0 {
                    return Err(r.fail(
                        "potential",
                        "must have even degree at least 2 and a positive leading coefficient",
                    ));
                }
                Ok(ModelConfig::Langevin {
                    mass,
                    friction,
                    beta,
                    potential,
                })
            }
            other => Err(r.fail("kind", format!("unknown model `{other}` (expected ou or langevin)"))),
        }
    }

    pub fn sde(&self) -> SdeModel {
        match self {
            ModelConfig::Ou { theta, sigma } => SdeModel::OrnsteinUhlenbeck {
                theta: *theta,
                sigma: *sigma,
            },
            ModelConfig::Langevin { .. } => SdeModel::Langevin1D(self.langevin().expect("langevin model")),
        }
    }

    pub fn langevin(&self) -> Option<LangevinModel> {
        match self {
            ModelConfig::Langevin {
                mass,
                friction,
                beta,
                potential,
            } => Some(LangevinModel {
                mass: *mass,
                friction: *friction,
                beta: *beta,
                potential: Polynomial::new(potential.clone()),
            }),
            ModelConfig::Ou { .. } => None,
        }
    }

    pub fn is_ou(&self) -> bool {
        matches!(self, ModelConfig::Ou { .. })
    }
}

/// An observable `c_0 + c_1 y + c_2 y² + …` of position or momentum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSpec {
    pub name: String,
    pub momentum: bool,
    pub coeffs: Vec<f64>,
}

impl ObservableSpec {
    fn parse(token: &str, ou: bool) -> Result<Self, String> {
        let (momentum, coeffs) = match token {
            "x" | "q" => (false, vec![0.0, 1.0]),
            "p" => (true, vec![0.0, 1.0]),
            "p2" => (true, vec![0.0, 0.0, 1.0]),
            _ => {
                let (axis, list) = token
                    .split_once(':')
                    .ok_or_else(|| format!("unknown observable `{token}`"))?;
                let momentum = match axis.trim() {
                    "x" | "q" => false,
                    "p" => true,
                    other => return Err(format!("unknown observable axis `{other}`")),
                };
                (momentum, parse_list(list)?)
            }
        };
        if momentum && ou {
            return Err(format!("observable `{token}` needs a momentum variable"));
        }
        if coeffs.iter().all(|c| *c == 0.0) {
            return Err(format!("observable `{token}` is identically zero"));
        }
        Ok(Self {
            name: token.to_string(),
            momentum,
            coeffs,
        })
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        let y = if self.momentum { p } else { q };
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisConfig {
    pub n: usize,
    pub n_q: usize,
    pub n_p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub kernel: f64,
    pub fit_lower: f64,
    pub fit_upper: f64,
    pub re: f64,
    pub im: f64,
    pub rate: f64,
    pub gle: f64,
    pub closed_form: f64,
    pub z: f64,
}

/// Law of the initial state for the noise average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    Equilibrium,
    Delta { x0: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloConfig {
    pub enabled: bool,
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub batches: usize,
    pub lag_step: f64,
    pub max_lag: f64,
    pub initial: InitialLaw,
    pub integrator: Integrator,
}

impl MonteCarloConfig {
    pub fn mc_config(&self) -> McConfig {
        let mut cfg = McConfig::new(self.paths, self.dt, self.horizon, self.seed, self.integrator, self.burn_in);
        cfg.n_batches = self.batches;
        cfg
    }
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub mc_model: Option<ModelConfig>,
    pub basis: BasisConfig,
    pub observables: Vec<ObservableSpec>,
    pub time: TimeConfig,
    pub tolerances: Tolerances,
    pub mc: MonteCarloConfig,
    pub output_dir: String,
    /// Section/key/value echo of the source text.
    pub echo: BTreeMap<String, BTreeMap<String, String>>,
    /// SHA-256 of the source text, hex encoded.
    pub sha256: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;
        if !raw.has("model") {
            return Err(err(None, "model", "missing required section"));
        }
        let model = ModelConfig::read(&raw, "model", None)?;
        let mc_model = if raw.has("mc_model") {
            Some(ModelConfig::read(&raw, "mc_model", Some(&model))?)
        } else {
            None
        };

        let b = Reader { raw: &raw, section: "basis" };
        let n = b.count("n", Some(16), 2)?;
        let basis = BasisConfig {
            n,
            n_q: b.count("n_q", Some(n), 2)?,
            n_p: b.count("n_p", Some(n), 2)?,
        };

        let pr = Reader { raw: &raw, section: "projection" };
        let observables = match pr.string("observables") {
            None => Vec::new(),
            Some(s) => s
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| ObservableSpec::parse(t, model.is_ou()).map_err(|m| pr.fail("observables", m)))
                .collect::<Result<Vec<_>, _>>()?,
        };

        let t = Reader { raw: &raw, section: "time" };
        let start = t.f64("start")?.unwrap_or(0.0);
        if start != 0.0 {
            return Err(t.fail("start", "the time grid must start at 0"));
        }
        let stop = t.positive("stop", Some(10.0))?;
        let step = t.positive("step", Some(0.01))?;
        let steps = (stop - start) / step;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(t.fail("step", format!("step {step} does not divide the span {}", stop - start)));
        }
        let time = TimeConfig { start, stop, step };

        let tr = Reader { raw: &raw, section: "tolerances" };
        let tolerances = Tolerances {
            kernel: tr.positive("kernel", Some(1e-8))?,
            fit_lower: tr.positive("fit_lower", Some(1e-10))?,
            fit_upper: tr.positive("fit_upper", Some(1e-2))?,
            re: tr.positive("re", Some(1e-6))?,
            im: tr.positive("im", Some(1e-6))?,
            rate: tr.positive("rate", Some(0.1))?,
            gle: tr.positive("gle", Some(1e-6))?,
            closed_form: tr.positive("closed_form", Some(1e-6))?,
            z: tr.positive("z", Some(3.0))?,
        };
        if tolerances.fit_lower >= tolerances.fit_upper {
            return Err(tr.fail("fit_lower", "must be below fit_upper"));
        }

        let m = Reader { raw: &raw, section: "mc" };
        let mc_kind = mc_model.as_ref().unwrap_or(&model);
        let integrator = match m.string("integrator") {
            None if mc_kind.is_ou() => Integrator::OuExact,
            None => Integrator::Baoab,
            Some("exact") if mc_kind.is_ou() => Integrator::OuExact,
            Some("euler") => Integrator::EulerMaruyama,
            Some("baoab") if !mc_kind.is_ou() => Integrator::Baoab,
            Some(s) => return Err(m.fail("integrator", format!("`{s}` is not available for this model"))),
        };
        let initial = match m.string("initial").unwrap_or("equilibrium") {
            "equilibrium" => InitialLaw::Equilibrium,
            "delta" => {
                let x0 = m.required("x0", m.list("x0")?)?;
                match x0.as_slice() {
                    [x] if mc_kind.is_ou() => InitialLaw::Delta { x0: [*x, 0.0] },
                    [q, p] if !mc_kind.is_ou() => InitialLaw::Delta { x0: [*q, *p] },
                    _ => return Err(m.fail("x0", "wrong number of coordinates for this model")),
                }
            }
            s => return Err(m.fail("initial", format!("`{s}` is not equilibrium or delta"))),
        };
        let dt = m.positive("dt", Some(1e-3))?;
        let lag_step = m.positive("lag_step", Some(0.1))?;
        let max_lag = m.positive("max_lag", Some(time.stop))?;
        let horizon = m.positive("horizon", Some(max_lag))?;
        let paths = m.count("paths", Some(1000), 2)?;
        let mc = MonteCarloConfig {
            enabled: m.bool("enabled", false)?,
            paths,
            dt,
            horizon,
            burn_in: m.non_negative("burn_in", 0.0)?,
            seed: m.u64("seed")?.unwrap_or(0),
            batches: m.count("batches", Some(20.min(paths)), 2)?,
            lag_step,
            max_lag,
            initial,
            integrator,
        };
        if mc.batches > mc.paths {
            return Err(m.fail("batches", "cannot exceed the number of paths"));
        }
        if mc.dt >= mc.horizon {
            return Err(m.fail("dt", "must be below the horizon"));
        }
        let stride = (lag_step / dt).round();
        if stride < 1.0 || (stride * dt - lag_step).abs() > 1e-9 * lag_step {
            return Err(m.fail("lag_step", "must be a whole multiple of dt"));
        }
        if max_lag > horizon * (1.0 + 1e-12) {
            return Err(m.fail("max_lag", "exceeds the horizon"));
        }
        if mc.enabled && max_lag > time.stop * (1.0 + 1e-12) {
            return Err(m.fail("max_lag", "exceeds the end of the time grid"));
        }
        if mc.enabled && observables.is_empty() {
            return Err(err(
                raw.section_line("mc"),
                "projection.observables",
                "Monte Carlo needs at least one observable",
            ));
        }

        let output_dir = raw
            .entry("output", "dir")
            .map(|e| e.value.clone())
            .unwrap_or_else(|| "out".to_string());

        let digest = Sha256::digest(text.as_bytes());
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            model,
            mc_model,
            basis,
            observables,
            time,
            tolerances,
            mc,
            output_dir,
            echo: raw.echo(),
            sha256,
        })
    }

    /// Model driving the Monte Carlo ensemble.
    pub fn mc_model(&self) -> &ModelConfig {
        self.mc_model.as_ref().unwrap_or(&self.model)
    }
}
