//! Experiment files: flat `key = value` lines grouped under `[run]`,
//! `[plant]`, `[reference]` and `[controller]` headers. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::model::{ControllerConfig, PgVector, ResetPolicy};
use crate::simulation::{PlantKind, Reference, SimOptions, Variant};

pub const DEFAULT_STEPS: usize = 1000;

/// Configuration files shipped with the binary, addressable by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("table3_mfapc", include_str!("../../configs/table3_mfapc.cfg")),
    ("table3_mfapc2", include_str!("../../configs/table3_mfapc2.cfg")),
    ("table3_mfac", include_str!("../../configs/table3_mfac.cfg")),
    ("delay_mfapc", include_str!("../../configs/delay_mfapc.cfg")),
    ("delay_mfac", include_str!("../../configs/delay_mfac.cfg")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> ConfigResult<T> {
    Err(ConfigError(msg.into()))
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub variant: Variant,
    pub steps: usize,
    pub plant: PlantKind,
    pub reference: Reference,
    pub controller: ControllerConfig,
    pub options: SimOptions,
}

const SECTIONS: [&str; 4] = ["run", "plant", "reference", "controller"];

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Section {
    name: &'static str,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn parse_with<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> ConfigResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => match parse(&value) {
                Some(v) => Ok(Some(v)),
                None => err(format!(
                    "line {line}: [{}] `{key}` expects {what}, got `{value}`",
                    self.name
                )),
            },
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str, what: &str) -> ConfigResult<Option<T>> {
        self.parse_with(key, |v| v.parse().ok(), what)
    }

    fn req<T: FromStr>(&mut self, key: &str, what: &str) -> ConfigResult<T> {
        self.opt(key, what)?.map_or_else(
            || err(format!("missing required key `{key}` in [{}]", self.name)),
            Ok,
        )
    }

    fn opt_list(&mut self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        self.parse_with(key, parse_list, "a comma-separated list of numbers")
    }

    fn req_list(&mut self, key: &str) -> ConfigResult<Vec<f64>> {
        self.opt_list(key)?.map_or_else(
            || err(format!("missing required key `{key}` in [{}]", self.name)),
            Ok,
        )
    }

    fn finish(self) -> ConfigResult<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            Some((key, e)) => err(format!("line {}: unknown key `{key}` in [{}]", e.line, self.name)),
            None => Ok(()),
        }
    }
}

pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    let items: Option<Vec<f64>> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect();
    items.filter(|v| !v.is_empty())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "on" => Some(true),
        "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

// "start:value, start:value"
fn parse_points(s: &str) -> Option<Vec<(usize, f64)>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (k, v) = t.split_once(':')?;
            Some((k.trim().parse().ok()?, v.trim().parse().ok()?))
        })
        .collect::<Option<Vec<_>>>()
        .filter(|v| !v.is_empty())
}

fn split_sections(text: &str) -> ConfigResult<Vec<Section>> {
    let mut sections: Vec<Section> = SECTIONS
        .iter()
        .map(|name| Section {
            name,
            entries: BTreeMap::new(),
        })
        .collect();
    let mut current: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(header) = body.strip_prefix('[') {
            let Some(name) = header.strip_suffix(']') else {
                return err(format!("line {line}: malformed section header `{body}`"));
            };
            match SECTIONS.iter().position(|s| *s == name.trim()) {
                Some(i) => current = Some(i),
                None => return err(format!("line {line}: unknown section `[{}]`", name.trim())),
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return err(format!("line {line}: expected `key = value`, got `{body}`"));
        };
        let Some(section) = current else {
            return err(format!("line {line}: `{}` appears before any section header", key.trim()));
        };
        let key = key.trim().to_string();
        let entries = &mut sections[section].entries;
        if entries.contains_key(&key) {
            return err(format!("line {line}: duplicate key `{key}` in [{}]", SECTIONS[section]));
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
                used: false,
            },
        );
    }
    Ok(sections)
}

fn plant_from(s: &mut Section) -> ConfigResult<PlantKind> {
    let kind: String = s.req("kind", "a plant kind")?;
    let plant = match kind.as_str() {
        "polynomial_benchmark" => PlantKind::PolynomialBenchmark,
        "linear_delay" => PlantKind::LinearDelay {
            a: s.req("a", "a number")?,
            b: s.req("b", "a number")?,
            delay: s.opt("delay", "a non-negative integer")?.unwrap_or(0),
        },
        "user_linear" => PlantKind::UserLinear {
            a: s.opt_list("a")?.unwrap_or_default(),
            b: s.req_list("b")?,
            delay: s.opt("delay", "a non-negative integer")?.unwrap_or(0),
        },
        other => {
            return err(format!(
                "unknown plant kind `{other}` (expected polynomial_benchmark, linear_delay or user_linear)"
            ))
        }
    };
    crate::simulation::Plant::new(plant.clone()).map_err(|e| ConfigError(e.to_string()))?;
    Ok(plant)
}

fn reference_from(s: &mut Section) -> ConfigResult<Reference> {
    let kind: String = s.req("kind", "a reference kind")?;
    let reference = match kind.as_str() {
        "constant" => Reference::Constant(s.req("value", "a number")?),
        "square_wave" | "sine" => {
            let amplitude = s.req("amplitude", "a number")?;
            let period = s.req("period", "a positive integer")?;
            let offset = s.opt("offset", "a number")?.unwrap_or(0.0);
            if kind == "sine" {
                Reference::Sine {
                    amplitude,
                    period,
                    offset,
                }
            } else {
                Reference::square_wave(amplitude, period, offset)
            }
        }
        "piecewise" => Reference::Piecewise(
            s.parse_with("points", parse_points, "`start:value` pairs separated by commas")?
                .ok_or_else(|| ConfigError("missing required key `points` in [reference]".into()))?,
        ),
        other => {
            return err(format!(
                "unknown reference kind `{other}` (expected constant, square_wave, sine or piecewise)"
            ))
        }
    };
    reference.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(reference)
}

fn controller_from(s: &mut Section) -> ConfigResult<ControllerConfig> {
    let ly: usize = s.req("ly", "a positive integer")?;
    let lu: usize = s.req("lu", "a positive integer")?;
    let horizon: usize = s.opt("horizon", "a positive integer")?.unwrap_or(1);
    let control_horizon = s.opt("control_horizon", "a positive integer")?.unwrap_or(horizon);
    let lambda = s.req("lambda", "a positive number")?;
    let rho = s.req_list("rho")?;
    let mu = s.req("mu", "a positive number")?;
    let eta = s.req("eta", "a number in (0, 2]")?;
    let phi = s.req_list("phi_init")?;
    if phi.len() != ly + lu {
        return err(format!("`phi_init` needs ly + lu = {} entries, got {}", ly + lu, phi.len()));
    }
    let phi_init = PgVector::from_slice(&phi, ly).map_err(|e| ConfigError(e.to_string()))?;
    let defaults = ResetPolicy::default();
    let reset = ResetPolicy {
        enabled: s.parse_with("reset", parse_bool, "true or false")?.unwrap_or(false),
        epsilon: s.opt("reset_epsilon", "a positive number")?.unwrap_or(defaults.epsilon),
        norm_bound: s.opt("reset_norm_bound", "a positive number")?.unwrap_or(defaults.norm_bound),
    };
    let base = ControllerConfig::benchmark_pi(lambda, horizon, control_horizon);
    Ok(ControllerConfig {
        ly,
        lu,
        horizon,
        control_horizon,
        lambda,
        rho,
        mu,
        eta,
        ar_order: s.opt("ar_order", "a positive integer")?.unwrap_or(base.ar_order),
        ar_delta: s.opt("ar_delta", "a positive number")?.unwrap_or(base.ar_delta),
        theta_max: s.opt("theta_max", "a positive number")?.unwrap_or(base.theta_max),
        phi_init,
        reset,
    })
}

impl ExperimentSpec {
    pub fn parse(text: &str, default_name: &str) -> ConfigResult<Self> {
        let mut sections = split_sections(text)?;
        let [run, plant, reference, controller] = &mut sections[..] else {
            unreachable!("fixed section list")
        };

        let name = run.opt("name", "a label")?.unwrap_or_else(|| default_name.to_string());
        let variant_text: String = run.req("variant", "mfapc, mfac or mfapc_pi")?;
        let variant: Variant = variant_text.parse().map_err(|e: crate::MfapcError| ConfigError(e.to_string()))?;
        let steps = run.opt("steps", "a positive integer")?.unwrap_or(DEFAULT_STEPS);
        if steps == 0 {
            return err("`steps` must be positive");
        }
        let defaults = SimOptions::default();
        let options = SimOptions {
            divergence_bound: run.opt("divergence_bound", "a positive number")?.unwrap_or(defaults.divergence_bound),
            warmup: run.opt("warmup", "a non-negative integer")?.unwrap_or(defaults.warmup),
            input_limit: run.opt("input_limit", "a positive number")?,
        };
        if !(options.divergence_bound > 0.0) {
            return err("`divergence_bound` must be positive");
        }
        if options.input_limit.is_some_and(|l: f64| !(l > 0.0)) {
            return err("`input_limit` must be positive");
        }

        let plant_kind = plant_from(plant)?;
        let reference_kind = reference_from(reference)?;
        let cfg = controller_from(controller)?;

        for section in sections {
            section.finish()?;
        }
        variant.check(&cfg).map_err(|e| ConfigError(e.to_string()))?;

        Ok(Self {
            name,
            variant,
            steps,
            plant: plant_kind,
            reference: reference_kind,
            controller: cfg,
            options,
        })
    }

    /// Loads a file, or a bundled preset when no file of that name exists.
    pub fn load(source: &str) -> ConfigResult<Self> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(source);
            return Self::parse(&text, stem);
        }
        match preset(source) {
            Some(text) => Self::parse(text, source),
            None => err(format!(
                "no config file or bundled preset named `{source}` (presets: {})",
                PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            )),
        }
    }
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
