//! Scenario files, presets, and command-line overrides.
//!
//! ```toml
//! [inputs]                  # optional; paths are relative to this file
//! network = "ieee14.net"
//! load_shape = "load_shape.csv"
//!
//! [scenario]                # any field left out keeps its default
//! mode = "mf-no-shock-info"
//! agents_per_node = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::read_text;
use super::shape::{bundled_load_shape, read_load_shape};
use crate::error::{Error, Result};
use crate::grid::{ieee14, parse_network, Network};
use crate::prosumer::AgentType;
use crate::simulate::{build_agent_types, LoadShape, Mode, ScenarioConfig};

/// Where the network and load shape come from; `None` means the bundled file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load_shape: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub inputs: Inputs,
    pub scenario: ScenarioConfig,
}

pub const PRESETS: [&str; 5] = ["ieee14_baseline", "mf-shock-info", "mf-no-shock-info", "no-learning", "desk"];

/// Built-in scenarios: the full-population baseline, the three compared
/// market modes, and a 200-agents-per-bus desk-scale variant.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let base = ScenarioConfig::default();
    if name == "ieee14_baseline" {
        return Some(base);
    }
    if name == "desk" {
        return Some(ScenarioConfig {
            name: "desk".into(),
            agents_per_node: 200,
            ..base
        });
    }
    Mode::from_name(name).map(|mode| ScenarioConfig {
        name: name.into(),
        mode,
        ..base
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScenarioSource {
    Preset(String),
    File(PathBuf),
}

impl ScenarioSource {
    /// A preset name if it is one, a file path otherwise.
    pub fn parse(arg: &str) -> Self {
        if preset(arg).is_some() {
            ScenarioSource::Preset(arg.to_string())
        } else {
            ScenarioSource::File(PathBuf::from(arg))
        }
    }
}

/// Values given on the command line; they win over the scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub days: Option<usize>,
    pub agents_per_node: Option<usize>,
    pub discount: Option<f64>,
    pub delta: Option<f64>,
    pub mode: Option<Mode>,
}

impl Overrides {
    pub fn apply(&self, c: &mut ScenarioConfig) {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.days {
            c.days = v;
        }
        if let Some(v) = self.agents_per_node {
            c.agents_per_node = v;
        }
        if let Some(v) = self.discount {
            c.discount = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
    }
}

/// A fully resolved and validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: Network,
    pub shape: LoadShape,
    pub types: Vec<AgentType>,
    pub config: ScenarioConfig,
    /// Inputs with paths made absolute.
    pub inputs: Inputs,
    pub warnings: Vec<String>,
}

impl Scenario {
    /// The scenario as a file that loads back to the same scenario.
    pub fn echo(&self) -> Result<String> {
        let file = ScenarioFile {
            inputs: self.inputs.clone(),
            scenario: self.config.clone(),
        };
        toml::to_string(&file).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }
}

pub fn parse_scenario_file(text: &str, origin: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Parse {
            path: origin.to_string(),
            line,
            message: e.message().to_string(),
        }
    })
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

/// Loads, overrides, and validates a scenario, then builds its agent types.
pub fn load_scenario(source: &ScenarioSource, overrides: &Overrides) -> Result<Scenario> {
    let (file, base) = match source {
        ScenarioSource::Preset(name) => {
            let scenario = preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
            (
                ScenarioFile {
                    inputs: Inputs::default(),
                    scenario,
                },
                None,
            )
        }
        ScenarioSource::File(path) => {
            let file = parse_scenario_file(&read_text(path)?, &path.display().to_string())?;
            (file, path.parent().map(Path::to_path_buf))
        }
    };
    let mut config = file.scenario;
    overrides.apply(&mut config);
    config.validate()?;

    let mut warnings = Vec::new();
    let mut inputs = Inputs::default();
    let network = match &file.inputs.network {
        None => ieee14::bundled(),
        Some(p) => {
            let path = std::path::absolute(resolve(base.as_deref(), p)).map_err(|e| Error::io(p, e))?;
            let parsed = parse_network(&read_text(&path)?, &path.display().to_string())?;
            warnings.extend(parsed.warnings);
            inputs.network = Some(path);
            parsed.network
        }
    };
    network.validate().into_result()?;
    let shape = match &file.inputs.load_shape {
        None => bundled_load_shape(),
        Some(p) => {
            let path = std::path::absolute(resolve(base.as_deref(), p)).map_err(|e| Error::io(p, e))?;
            let shape = read_load_shape(&path)?;
            inputs.load_shape = Some(path);
            shape
        }
    };
    let types = build_agent_types(&network, &shape, &config)?;
    Ok(Scenario {
        network,
        shape,
        types,
        config,
        inputs,
        warnings,
    })
}
