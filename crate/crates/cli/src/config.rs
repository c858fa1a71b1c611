//! Pipeline configuration, read from TOML.
//!
//! Every key is optional. A missing `[inputs]` section means the stages read
//! the synthetic files written by `pfs synth` into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pfs_core::dynamics::{default_periods, Period};
use pfs_core::dynasty::Window;
use pfs_core::ingest::ColumnMap;
use pfs_core::synth::DgpConfig;
use pfs_core::threshold::{ThresholdMode, ThresholdVariant};
use pfs_core::WaveCalendar;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub panel: Option<PathBuf>,
    pub cpi: Option<PathBuf>,
    #[serde(rename = "macro")]
    pub macro_: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    /// Reference composition series (year, female_share, nonwhite_share).
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub start: i32,
    pub end: i32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        let w = Window::default();
        Self { start: w.start, end: w.end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Regressor set used to predict cutoffs in years without a target.
    pub variant: ThresholdVariant,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { variant: ThresholdVariant::Snap }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub bridge_gaps: bool,
    /// Inclusive year bins for transitions and chronic insecurity.
    pub periods: Vec<[i32; 2]>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { bridge_gaps: false, periods: default_periods().iter().map(|p| [p.start, p.end]).collect() }
    }
}

impl DynamicsConfig {
    pub fn periods(&self) -> Vec<Period> {
        self.periods.iter().map(|&[start, end]| Period { start, end }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides `synth.seed` when set.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threshold_mode: ThresholdMode,
    pub format: Format,
    pub inputs: Inputs,
    /// Canonical column name to CSV header, for panels with other headers.
    pub schema: BTreeMap<String, String>,
    pub window: WindowConfig,
    pub threshold: ThresholdConfig,
    pub dynamics: DynamicsConfig,
    pub synth: DgpConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: None,
            threshold_mode: ThresholdMode::Anchored,
            format: Format::Csv,
            inputs: Inputs::default(),
            schema: BTreeMap::new(),
            window: WindowConfig::default(),
            threshold: ThresholdConfig::default(),
            dynamics: DynamicsConfig::default(),
            synth: DgpConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threshold_mode: Option<ThresholdMode>,
    pub format: Option<Format>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))
    }

    /// Read a config file. Relative input paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.inputs.panel,
            &mut cfg.inputs.cpi,
            &mut cfg.inputs.macro_,
            &mut cfg.inputs.targets,
            &mut cfg.inputs.reference,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out_dir = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
        }
        if let Some(m) = o.threshold_mode {
            self.threshold_mode = m;
        }
        if let Some(f) = o.format {
            self.format = f;
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn window(&self) -> Window {
        Window::new(self.window.start, self.window.end)
    }

    /// Standard survey schedule from the window start.
    pub fn calendar(&self) -> WaveCalendar {
        WaveCalendar::psid_from(self.window.start.min(1997))
    }

    pub fn column_map(&self) -> ColumnMap {
        ColumnMap(self.schema.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.window.start > self.window.end {
            return bad(format!("window start {} is after end {}", self.window.start, self.window.end));
        }
        if self.window.start > 1997 {
            return bad("window must start in or before 1997".into());
        }
        for &[a, b] in &self.dynamics.periods {
            if a > b {
                return bad(format!("period {a}-{b} is reversed"));
            }
        }
        let mut sorted = self.dynamics.periods.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[1][0] <= w[0][1]) {
            return bad("dynamics periods overlap".into());
        }
        self.synth.validate()?;
        Ok(())
    }

    /// Config echo for the manifest: everything except the output location.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("out_dir");
        }
        v
    }
}
