use std::path::{Path, PathBuf};

use acl_core::CurveSpec;
use serde::{Deserialize, Serialize};

/// Experiment configuration. Every section is optional in the file; command
/// line flags override whatever the file sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub curve: Option<CurveSpec>,
    pub decompose: DecomposeSection,
    pub riesz: RieszSection,
    pub diagram: DiagramSection,
    pub refine: RefineSection,
    pub truncation: TruncationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DecomposeSection {
    pub clip: f64,
    pub max_intervals: usize,
    pub samples: usize,
}

impl Default for DecomposeSection {
    fn default() -> Self {
        DecomposeSection { clip: 8.0, max_intervals: 64, samples: 100_000 }
    }
}

/// Grid overrides for the extremizer families.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FamilyGrid {
    pub res: Option<usize>,
    pub nr: Option<usize>,
    pub max_nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RieszSection {
    pub family: String,
    pub p: f64,
    pub q: f64,
    pub deltas: Vec<f64>,
    #[serde(flatten)]
    pub grid: FamilyGrid,
}

impl Default for RieszSection {
    fn default() -> Self {
        RieszSection { family: "boxR".into(), p: 2.0, q: 2.5, deltas: Vec::new(), grid: FamilyGrid::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DiagramSection {
    pub lattice: usize,
    pub margin: f64,
    pub families: Vec<String>,
    #[serde(flatten)]
    pub grid: FamilyGrid,
}

impl Default for DiagramSection {
    fn default() -> Self {
        DiagramSection { lattice: 17, margin: 0.05, families: Vec::new(), grid: FamilyGrid::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RefineSection {
    pub dim: Option<usize>,
    /// `random` (union of balls) or `ball` (perturbed ball).
    pub instance: Option<String>,
    pub stream: u64,
    pub delta: Option<f64>,
    pub max_retries: Option<usize>,
    pub res: Option<usize>,
    pub nr: Option<usize>,
    pub nodes: Option<usize>,
    pub samples: usize,
    /// Set files replacing the generated instance; both or neither.
    pub e: Option<PathBuf>,
    pub f: Option<PathBuf>,
    /// Extra copy of the tower file.
    pub out: Option<PathBuf>,
    /// Existing tower file for `weak-type`.
    pub tower: Option<PathBuf>,
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            dim: None,
            instance: None,
            stream: 0,
            delta: None,
            max_retries: None,
            res: None,
            nr: None,
            nodes: None,
            samples: 24,
            e: None,
            f: None,
            out: None,
            tower: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TruncationSection {
    pub max_degree: usize,
    pub max_k: usize,
    pub out: Option<PathBuf>,
}

impl Default for TruncationSection {
    fn default() -> Self {
        TruncationSection { max_degree: 8, max_k: 2, out: None }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Empty,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "invalid config: {m}"),
            ConfigError::Empty => write!(f, "config is empty"),
        }
    }
}

impl Config {
    /// Reads TOML, or JSON when the extension is `.json` or the content
    /// starts with `{`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Config::parse(&text, path.extension().is_some_and(|e| e == "json"))
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, ConfigError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(ConfigError::Empty);
        }
        let cfg: Config = if json || trimmed.starts_with('{') {
            serde_json::from_str(trimmed).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(trimmed).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        if cfg == Config::default() {
            return Err(ConfigError::Empty);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml_and_json() {
        let mut c = Config {
            command: Some("weak-type".into()),
            seed: Some(11),
            curve: Some(CurveSpec::Preset { preset: "moment".into(), dim: 3 }),
            ..Config::default()
        };
        c.refine.dim = Some(3);
        c.riesz.grid.res = Some(128);
        c.diagram.families = vec!["boxR".into(), "ballB".into()];
        let t = toml::to_string(&c).unwrap();
        assert_eq!(Config::parse(&t, false).unwrap(), c);
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::parse(&j, true).unwrap(), c);
    }

    #[test]
    fn empty_and_unknown() {
        assert!(matches!(Config::parse("  \n", false), Err(ConfigError::Empty)));
        assert!(matches!(Config::parse("{}", true), Err(ConfigError::Empty)));
        assert!(matches!(Config::parse("bogus = 1", false), Err(ConfigError::Parse(_))));
    }
}
