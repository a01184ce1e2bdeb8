//! Flat `key = value` configuration with `[section]` headers.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Every key must
//! be consumed by the experiment that reads the file; leftovers are reported
//! as unknown keys.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use ompd_core::experiments::{
    DomainChoice, DriftConfig, GaussMarkovConfig, GeneratorChoice, SeparationConfig,
};
use ompd_core::{Domain, ProblemStream};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "key `{}`: {}", self.key, self.message)
        } else {
            write!(
                f,
                "line {}: key `{}`: {}",
                self.line, self.key, self.message
            )
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Debug, Default)]
pub struct Ini {
    entries: Vec<Entry>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut section = String::new();
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError {
                    line,
                    key: t.to_string(),
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(ConfigError {
                    line,
                    key: t.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError {
                    line,
                    key: String::new(),
                    message: "empty key".into(),
                });
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(ConfigError {
                    line,
                    key,
                    message: format!("duplicate key (first set on line {})", prev.line),
                });
            }
            entries.push(Entry {
                key,
                value: v.trim().to_string(),
                line,
                used: Cell::new(false),
            });
        }
        Ok(Self { entries })
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    /// Parses `key` into `T` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value.parse().map(Some).map_err(|_| ConfigError {
            line: e.line,
            key: key.to_string(),
            message: format!(
                "cannot parse `{}` as {}",
                e.value,
                std::any::type_name::<T>()
            ),
        })
    }

    /// Overwrites `slot` if `key` is present.
    pub fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
            .map_err(|_| ConfigError {
                line: e.line,
                key: key.to_string(),
                message: format!("cannot parse `{}` as a comma-separated list", e.value),
            })
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .find(|e| e.key == key)
            .map_or(0, |e| e.line)
    }

    /// Error anchored at `key`'s line.
    pub fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line_of(key),
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(&self) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| !e.used.get()) {
            Some(e) => Err(ConfigError {
                line: e.line,
                key: e.key.clone(),
                message: "unknown key".into(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentKind {
    Example1,
    Example2,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Example1 => "example1",
            ExperimentKind::Example2 => "example2",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "example1" => Some(ExperimentKind::Example1),
            "example2" => Some(ExperimentKind::Example2),
            "custom" => Some(ExperimentKind::Custom),
            _ => None,
        }
    }
}

/// Declared constants that replace the ones derived from the data.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConstantOverrides {
    pub smoothness: Option<f64>,
    pub regularizer_lipschitz: Option<f64>,
}

impl ConstantOverrides {
    fn read(ini: &Ini) -> Result<Self, ConfigError> {
        let out = Self {
            smoothness: ini.get("constants.smoothness")?,
            regularizer_lipschitz: ini.get("constants.regularizer_lipschitz")?,
        };
        for (key, v) in [
            ("constants.smoothness", out.smoothness),
            ("constants.regularizer_lipschitz", out.regularizer_lipschitz),
        ] {
            if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return Err(ini.invalid(key, "must be a finite nonnegative number"));
            }
        }
        Ok(out)
    }

    pub fn apply(&self, stream: &ProblemStream) -> ProblemStream {
        if *self == Self::default() {
            return stream.clone();
        }
        let steps = stream
            .steps()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if let Some(l) = self.smoothness {
                    s.smoothness = l;
                }
                if let Some(b) = self.regularizer_lipschitz {
                    s.regularizer_lipschitz = b;
                }
                s
            })
            .collect();
        ProblemStream::new(steps, stream.domain().clone())
    }
}

#[derive(Debug, Clone)]
pub enum ExperimentSpec {
    Example1(GaussMarkovConfig),
    Example2(SeparationConfig),
    Custom(DriftConfig),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub spec: ExperimentSpec,
    pub constants: ConstantOverrides,
}

fn domain_choice(ini: &Ini) -> Result<Option<DomainChoice>, ConfigError> {
    let Some(kind) = ini.get::<String>("domain.kind")? else {
        return Ok(None);
    };
    match kind.as_str() {
        "whole" => Ok(Some(DomainChoice::WholeSpace)),
        "box" => Ok(Some(DomainChoice::Box)),
        "ball" => Ok(Some(DomainChoice::Ball)),
        "simplex" => Ok(Some(DomainChoice::Simplex)),
        other => Err(ini.invalid(
            "domain.kind",
            format!("unknown domain `{other}` (whole, box, ball, simplex)"),
        )),
    }
}

fn read_example1(
    ini: &Ini,
    seed: u64,
    horizon: Option<usize>,
) -> Result<GaussMarkovConfig, ConfigError> {
    let mut c = GaussMarkovConfig {
        seed,
        ..Default::default()
    };
    ini.set("stream.n_coeffs", &mut c.n_coeffs)?;
    ini.set("stream.input_dim", &mut c.input_dim)?;
    ini.set("stream.alpha", &mut c.alpha)?;
    if let Some(v) = ini.get_list("stream.active_set")? {
        c.active_set = v;
    }
    ini.set("stream.obs_noise_std", &mut c.obs_noise_std)?;
    ini.set("stream.eta", &mut c.eta)?;
    ini.set("stream.horizon", &mut c.horizon)?;
    ini.set("solver.step_size", &mut c.step_size)?;
    ini.set("errors.error_std", &mut c.error_std)?;
    ini.set("errors.prox_cap", &mut c.prox_cap)?;
    let diameter: Option<f64> = ini.get("domain.diameter")?;
    if diameter.is_some_and(|d| !(d > 0.0)) {
        return Err(ini.invalid("domain.diameter", "must be positive"));
    }
    let need = |d: Option<f64>| {
        d.ok_or_else(|| ini.invalid("domain.diameter", "required for bounded domains"))
    };
    c.domain = match domain_choice(ini)? {
        None | Some(DomainChoice::WholeSpace) => Domain::WholeSpace,
        Some(DomainChoice::Box) => Domain::cube_with_diameter(c.n_coeffs, need(diameter)?),
        Some(DomainChoice::Ball) => Domain::ball_with_diameter(c.n_coeffs, need(diameter)?),
        Some(DomainChoice::Simplex) => {
            return Err(ini.invalid("domain.kind", "example1 supports whole, box and ball"))
        }
    };
    if let Some(h) = horizon {
        c.horizon = h;
    }
    c.validate()
        .map_err(|e| ini.invalid("stream", e.to_string()))?;
    Ok(c)
}

fn read_example2(
    ini: &Ini,
    seed: u64,
    horizon: Option<usize>,
) -> Result<SeparationConfig, ConfigError> {
    let mut c = SeparationConfig {
        seed,
        ..Default::default()
    };
    ini.set("stream.frame_dim", &mut c.frame_dim)?;
    ini.set("stream.window", &mut c.window)?;
    ini.set("stream.mu_l", &mut c.mu_l)?;
    ini.set("stream.mu_s", &mut c.mu_s)?;
    ini.set("stream.lambda_l", &mut c.lambda_l)?;
    ini.set("stream.lambda_s", &mut c.lambda_s)?;
    ini.set("stream.alpha_l", &mut c.alpha_l)?;
    ini.set("stream.alpha_s", &mut c.alpha_s)?;
    ini.set("stream.rank", &mut c.synth_rank)?;
    ini.set("stream.sparsity", &mut c.synth_sparsity)?;
    ini.set("stream.horizon", &mut c.horizon)?;
    ini.set("stream.background_scale", &mut c.background_scale)?;
    ini.set("stream.rotation", &mut c.rotation)?;
    ini.set("stream.foreground_amplitude", &mut c.foreground_amplitude)?;
    ini.set("stream.turnover", &mut c.turnover)?;
    ini.set("stream.noise_std", &mut c.noise_std)?;
    ini.set("stream.support_threshold", &mut c.support_threshold)?;
    ini.set("output.snapshot_every", &mut c.snapshot_every)?;
    ini.set("errors.error_std", &mut c.error_std)?;
    ini.set("errors.prox_cap", &mut c.prox_cap)?;
    if let Some(h) = horizon {
        c.horizon = h;
    }
    c.validate()
        .map_err(|e| ini.invalid("stream", e.to_string()))?;
    Ok(c)
}

fn read_custom(ini: &Ini, seed: u64, horizon: Option<usize>) -> Result<DriftConfig, ConfigError> {
    let mut c = DriftConfig {
        seed,
        ..Default::default()
    };
    ini.set("stream.dim", &mut c.dim)?;
    ini.set("stream.horizon", &mut c.horizon)?;
    ini.set("stream.drift", &mut c.drift)?;
    ini.set("stream.curvature", &mut c.curvature)?;
    ini.set("stream.eta", &mut c.eta)?;
    ini.set("solver.step_size", &mut c.step_size)?;
    if let Some(g) = ini.get::<String>("solver.generator")? {
        c.generator = match g.as_str() {
            "euclidean" => GeneratorChoice::Euclidean,
            "entropy" => GeneratorChoice::Entropy,
            other => {
                return Err(ini.invalid(
                    "solver.generator",
                    format!("unknown generator `{other}` (euclidean, entropy)"),
                ))
            }
        };
    }
    if let Some(d) = domain_choice(ini)? {
        c.domain = d;
    }
    ini.set("domain.diameter", &mut c.diameter)?;
    ini.set("errors.error_std", &mut c.error_std)?;
    ini.set("errors.prox_cap", &mut c.prox_cap)?;
    if let Some(h) = horizon {
        c.horizon = h;
    }
    c.validate()
        .map_err(|e| ini.invalid("stream", e.to_string()))?;
    Ok(c)
}

/// Reads the settings of `kind` from `text` (empty text means defaults).
pub fn load(
    kind: ExperimentKind,
    text: &str,
    seed: u64,
    horizon: Option<usize>,
) -> Result<Settings, ConfigError> {
    let ini = Ini::parse(text)?;
    if horizon == Some(0) {
        return Err(ConfigError {
            line: 0,
            key: "horizon".into(),
            message: "must be positive".into(),
        });
    }
    let spec = match kind {
        ExperimentKind::Example1 => ExperimentSpec::Example1(read_example1(&ini, seed, horizon)?),
        ExperimentKind::Example2 => ExperimentSpec::Example2(read_example2(&ini, seed, horizon)?),
        ExperimentKind::Custom => ExperimentSpec::Custom(read_custom(&ini, seed, horizon)?),
    };
    let constants = ConstantOverrides::read(&ini)?;
    ini.finish()?;
    Ok(Settings { spec, constants })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let ini = Ini::parse("# c\n[stream]\nalpha = 0.5\n\n[solver]\nstep_size=0.1\n").unwrap();
        assert_eq!(ini.get::<f64>("stream.alpha").unwrap(), Some(0.5));
        assert_eq!(ini.get::<f64>("solver.step_size").unwrap(), Some(0.1));
        ini.finish().unwrap();
    }

    #[test]
    fn bad_value_names_key_and_line() {
        let e = load(
            ExperimentKind::Example1,
            "[stream]\n\nalpha = fast\n",
            1,
            None,
        )
        .unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.key, "stream.alpha");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = load(ExperimentKind::Example1, "[stream]\nalpah = 0.9\n", 1, None).unwrap_err();
        assert_eq!(
            (e.line, e.key.as_str(), e.message.as_str()),
            (2, "stream.alpah", "unknown key")
        );
    }

    #[test]
    fn missing_equals_sign() {
        let e = Ini::parse("[a]\njust words\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn duplicate_key() {
        let e = Ini::parse("[a]\nx = 1\nx = 2\n").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (3, "a.x"));
    }

    #[test]
    fn horizon_flag_wins() {
        let s = load(
            ExperimentKind::Example1,
            "[stream]\nhorizon = 50\n",
            3,
            Some(20),
        )
        .unwrap();
        match s.spec {
            ExperimentSpec::Example1(c) => assert_eq!((c.horizon, c.seed), (20, 3)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn box_requires_diameter() {
        let e = load(ExperimentKind::Example1, "[domain]\nkind = box\n", 1, None).unwrap_err();
        assert_eq!(e.key, "domain.diameter");
    }

    #[test]
    fn invalid_alpha_is_anchored() {
        let e = load(ExperimentKind::Example1, "[stream]\nalpha = 1.5\n", 1, None).unwrap_err();
        assert!(e.message.contains("alpha"));
    }

    #[test]
    fn smoothness_override_applies() {
        let s = load(
            ExperimentKind::Custom,
            "[constants]\nsmoothness = 1e-3\n",
            1,
            Some(5),
        )
        .unwrap();
        let ExperimentSpec::Custom(c) = &s.spec else {
            unreachable!()
        };
        let stream = ompd_core::experiments::generate_drift(c).unwrap();
        let stale = s.constants.apply(&stream);
        assert!(stale.steps().iter().all(|st| st.smoothness == 1e-3));
    }
}
