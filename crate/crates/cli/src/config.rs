//! Scenario configuration: the JSON config file schema and its merge with
//! command-line flags. Flags always win over file values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nneq_core::{MarketParams, TransitFeePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    V,
    VStar,
    T,
    C,
    PTilde,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepParam::V => "v",
            SweepParam::VStar => "v_star",
            SweepParam::T => "t",
            SweepParam::C => "c",
            SweepParam::PTilde => "p_tilde",
        };
        f.write_str(s)
    }
}

impl FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v" => Ok(SweepParam::V),
            "v_star" | "v-star" => Ok(SweepParam::VStar),
            "t" => Ok(SweepParam::T),
            "c" => Ok(SweepParam::C),
            "p_tilde" | "p-tilde" => Ok(SweepParam::PTilde),
            other => bail!("unknown sweep parameter '{other}' (expected v, v_star, t, c, p_tilde)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            bail!("sweep bounds must be finite with lo < hi, got [{}, {}]", self.lo, self.hi);
        }
        if self.steps < 2 {
            bail!("sweep needs at least 2 steps, got {}", self.steps);
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * (self.hi - self.lo) / (self.steps - 1) as f64
    }
}

impl FromStr for SweepSpec {
    type Err = anyhow::Error;

    /// Parses `<name>:<lo>:<hi>:<steps>`, e.g. `p_tilde:-2:2:401`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            bail!("expected <name>:<lo>:<hi>:<steps>, got '{s}'");
        }
        let spec = SweepSpec {
            param: parts[0].parse()?,
            lo: parts[1].parse().with_context(|| format!("bad sweep lo '{}'", parts[1]))?,
            hi: parts[2].parse().with_context(|| format!("bad sweep hi '{}'", parts[2]))?,
            steps: parts[3].parse().with_context(|| format!("bad sweep steps '{}'", parts[3]))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => bail!("unknown format '{other}' (expected csv or json)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    pub v: f64,
    pub v_star: f64,
    pub t: f64,
    pub c: f64,
}

impl Default for ParamsSpec {
    /// The documented default scenario: t = 1, c = 1, v = 3.5, v* = 2.
    fn default() -> Self {
        Self {
            v: 3.5,
            v_star: 2.0,
            t: 1.0,
            c: 1.0,
        }
    }
}

/// One solver run, fully described: market parameters, transit-fee policy,
/// optional sweep, optional output sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default = "default_policy")]
    pub p_tilde_policy: TransitFeePolicy,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            params: ParamsSpec::default(),
            p_tilde_policy: default_policy(),
            sweep: None,
            output: None,
        }
    }
}

fn default_policy() -> TransitFeePolicy {
    TransitFeePolicy::MinimalPlateau
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        if let Some(sweep) = &config.sweep {
            sweep.validate()?;
        }
        Ok(config)
    }

    pub fn market_params(&self) -> Result<MarketParams> {
        MarketParams::new(self.params.v, self.params.v_star, self.params.t, self.params.c)
            .map_err(|e| anyhow::anyhow!("{e}"))
    }
}

/// Flag values that were explicitly given on the command line; unset fields
/// fall back to the config file and then to the defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub v: Option<f64>,
    pub v_star: Option<f64>,
    pub t: Option<f64>,
    pub c: Option<f64>,
    pub p_tilde: Option<f64>,
    pub plateau_min: bool,
    pub sweep: Option<SweepSpec>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, mut config: ScenarioConfig) -> ScenarioConfig {
        if let Some(v) = self.v {
            config.params.v = v;
        }
        if let Some(v_star) = self.v_star {
            config.params.v_star = v_star;
        }
        if let Some(t) = self.t {
            config.params.t = t;
        }
        if let Some(c) = self.c {
            config.params.c = c;
        }
        if let Some(p_tilde) = self.p_tilde {
            config.p_tilde_policy = TransitFeePolicy::Given(p_tilde);
        } else if self.plateau_min {
            config.p_tilde_policy = TransitFeePolicy::MinimalPlateau;
        }
        if let Some(sweep) = self.sweep {
            config.sweep = Some(sweep);
        }
        if self.format.is_some() || self.out.is_some() {
            let format = self
                .format
                .or(config.output.as_ref().map(|o| o.format))
                .unwrap_or(OutputFormat::Csv);
            let path = self.out.clone().or(config.output.as_ref().and_then(|o| o.path.clone()));
            config.output = Some(OutputSpec { format, path });
        }
        config
    }
}
