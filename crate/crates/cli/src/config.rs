//! TOML run files. Every key is optional; command-line flags win over the
//! file, and the file wins over built-in defaults.
//!
//! ```toml
//! [system]
//! adsorbate = "H"
//! catalyst = "Pt"
//! miller = [1, 1, 1]
//!
//! [run]
//! strategy = "agent"
//! seed = 7
//!
//! [calculator]
//! kind = "builtin"
//!
//! [llm]
//! mock = "fixtures/mocks"
//! ```

use std::path::PathBuf;

use adsorb_core::agent::{AgentConfig, LlmConfig};
use adsorb_core::pipeline::{CalculatorSpec, Fallback, StrategyChoice};
use adsorb_core::placement::PlacementParams;
use adsorb_core::relax::{AnomalyThresholds, FireParams};
use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub run: RunSection,
    pub calculator: Option<CalculatorSection>,
    pub llm: Option<LlmSection>,
    pub agent: Option<AgentConfig>,
    pub placement: Option<PlacementParams>,
    pub fire: Option<FireParams>,
    pub anomaly: Option<AnomalyThresholds>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub adsorbate: Option<String>,
    pub catalyst: Option<String>,
    pub miller: Option<[i32; 3]>,
    pub slab: Option<PathBuf>,
    pub supercell: Option<[usize; 2]>,
    pub layers: Option<usize>,
    pub vacuum: Option<f64>,
    pub shift: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub strategy: Option<StrategyChoice>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub output: Option<PathBuf>,
    pub n_random: Option<usize>,
    pub heuristic_binding_index: Option<usize>,
    pub fallback: Option<Fallback>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalculatorSection {
    pub kind: Option<String>,
    pub url: Option<String>,
    pub command: Option<Vec<String>>,
    pub cutoff: Option<f64>,
    pub timeout: Option<f64>,
}

impl CalculatorSection {
    pub fn spec(&self) -> anyhow::Result<Option<CalculatorSpec>> {
        Ok(match (self.kind.as_deref(), &self.url, &self.command) {
            (None, None, None) => None,
            (Some("builtin"), None, None) => Some(CalculatorSpec::Builtin),
            (Some("http") | None, Some(url), None) => Some(CalculatorSpec::Http { url: url.clone() }),
            (Some("subprocess") | None, None, Some(cmd)) if !cmd.is_empty() => {
                Some(CalculatorSpec::Subprocess { command: cmd.clone() })
            }
            _ => bail!("[calculator] needs exactly one of kind = \"builtin\", url = \"...\" or command = [...]"),
        })
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct LlmSection {
    pub mock: Option<PathBuf>,
    #[serde(flatten)]
    pub live: LlmConfig,
}

pub fn load(path: &std::path::Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `builtin`, `http:<url>` (or a bare http(s) URL), `subprocess:<command line>`.
pub fn parse_calculator(s: &str) -> anyhow::Result<CalculatorSpec> {
    if s == "builtin" {
        return Ok(CalculatorSpec::Builtin);
    }
    if s.starts_with("http://") || s.starts_with("https://") {
        return Ok(CalculatorSpec::Http { url: s.to_string() });
    }
    if let Some(url) = s.strip_prefix("http:") {
        return Ok(CalculatorSpec::Http { url: url.to_string() });
    }
    if let Some(cmd) = s.strip_prefix("subprocess:") {
        let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        if command.is_empty() {
            bail!("subprocess calculator needs a command");
        }
        return Ok(CalculatorSpec::Subprocess { command });
    }
    bail!("unknown calculator {s:?}: expected builtin, http:<url> or subprocess:<command>")
}

pub fn parse_triple(s: &str) -> Result<[i32; 3], String> {
    let v: Vec<i32> = s
        .split(',')
        .map(|x| x.trim().parse::<i32>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| format!("expected three comma-separated integers, got {s:?}"))
}

pub fn parse_pair(s: &str) -> Result<[usize; 2], String> {
    let v: Vec<usize> = s
        .split([',', 'x'])
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| format!("expected two repeats like 2,2 or 2x2, got {s:?}"))
}
