//! Record of a run, written next to its outputs so `verify` can regenerate
//! the stream.

use std::fs;
use std::path::Path;

use ompd_core::experiments::Variant;

use crate::commands::CliError;
use crate::config::{ExperimentKind, Ini};

pub const MANIFEST_FILE: &str = "manifest.ini";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub horizon: Option<usize>,
    pub variants: Vec<Variant>,
    /// Config copy, relative to the output directory.
    pub config: Option<String>,
}

pub fn parse_variant(s: &str) -> Option<Variant> {
    match s {
        "exact" => Some(Variant::Exact),
        "inexact" => Some(Variant::Inexact),
        _ => None,
    }
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::from("[run]\n");
        s += &format!("experiment = {}\n", self.experiment.name());
        s += &format!("seed = {}\n", self.seed);
        if let Some(h) = self.horizon {
            s += &format!("horizon = {h}\n");
        }
        let names: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        s += &format!("variants = {}\n", names.join(","));
        if let Some(c) = &self.config {
            s += &format!("config = {c}\n");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_text()).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let ini = Ini::parse(text).map_err(|e| e.to_string())?;
        let get = |key: &str| -> Result<String, String> {
            ini.get::<String>(key)
                .map_err(|e| e.to_string())?
                .ok_or_else(|| format!("missing key `{key}`"))
        };
        let experiment = get("run.experiment")?;
        let experiment = ExperimentKind::parse(&experiment)
            .ok_or_else(|| format!("unknown experiment `{experiment}`"))?;
        let seed = get("run.seed")?
            .parse()
            .map_err(|_| "key `run.seed`: not an integer".to_string())?;
        let horizon = ini.get("run.horizon").map_err(|e| e.to_string())?;
        let variants = get("run.variants")?
            .split(',')
            .map(|s| parse_variant(s.trim()).ok_or_else(|| format!("unknown variant `{s}`")))
            .collect::<Result<Vec<_>, _>>()?;
        let config = ini.get("run.config").map_err(|e| e.to_string())?;
        ini.finish().map_err(|e| e.to_string())?;
        Ok(Self {
            experiment,
            seed,
            horizon,
            variants,
            config,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::MissingTrace(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| {
            CliError::MissingTrace(format!("malformed manifest {}: {e}", path.display()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Manifest {
            experiment: ExperimentKind::Example2,
            seed: 42,
            horizon: Some(30),
            variants: vec![Variant::Exact, Variant::Inexact],
            config: Some("config.ini".into()),
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn optional_keys_may_be_absent() {
        let m =
            Manifest::parse("[run]\nexperiment = custom\nseed = 1\nvariants = exact\n").unwrap();
        assert_eq!((m.horizon, m.config), (None, None));
    }
}
