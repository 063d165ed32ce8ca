//! TOML run configuration: `[accelerator]`, `[devices]`, `[digital_unit]`
//! and `[run]`. Every key is optional and falls back to the built-in default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::DeviceParams;
use crate::error::{Error, Result};
use crate::nonlinear::{default_recipes, default_stage_cycles, ArithUnit, DigitalUnitConfig, OpRecipe, StageTiming};
use crate::timing::AcceleratorConfig;
use crate::workload::NonGemmTag;

/// Digital-unit overrides. Lane count defaults to the array size `m` and the
/// clock to the accelerator's `f_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigitalUnitSection {
    pub lanes: Option<u64>,
    pub f_asic: f64,
    pub stage_cycles: BTreeMap<ArithUnit, StageTiming>,
    pub recipes: BTreeMap<NonGemmTag, OpRecipe>,
}

impl Default for DigitalUnitSection {
    fn default() -> Self {
        Self {
            lanes: None,
            f_asic: 1e9,
            stage_cycles: BTreeMap::new(),
            recipes: BTreeMap::new(),
        }
    }
}

impl DigitalUnitSection {
    pub fn resolve(&self, accel: &AcceleratorConfig) -> DigitalUnitConfig {
        let mut stage_cycles = default_stage_cycles();
        stage_cycles.extend(self.stage_cycles.iter().map(|(k, v)| (*k, *v)));
        let mut recipes = default_recipes();
        recipes.extend(self.recipes.iter().map(|(k, v)| (*k, v.clone())));
        DigitalUnitConfig {
            lanes: self.lanes.unwrap_or(accel.m),
            f_asic: self.f_asic,
            f_c: accel.f_c,
            stage_cycles,
            recipes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Overlap non-GEMM work with the next tile's GEMM.
    pub pipelining: bool,
    /// Batch from the transfer schedule rather than half-capacity double buffering.
    pub optimized_buffering: bool,
    /// Memory-trace bins per run.
    pub bins: usize,
    /// Fixed batch size; bypasses the batch search.
    pub batch: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            pipelining: true,
            optimized_buffering: true,
            bins: 1000,
            batch: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub accelerator: AcceleratorConfig,
    pub devices: DeviceParams,
    pub digital_unit: DigitalUnitSection,
    pub run: RunSection,
}

impl SimConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{origin}: {msg}")),
            other => Error::Config(format!("{origin}: {other}")),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.accelerator.validate()?;
        self.devices.validate().map_err(Error::Config)?;
        self.digital().validate()?;
        if self.run.bins == 0 {
            return Err(Error::Config("run.bins must be >= 1".into()));
        }
        if self.run.batch == Some(0) {
            return Err(Error::Config("run.batch must be >= 1".into()));
        }
        Ok(())
    }

    pub fn digital(&self) -> DigitalUnitConfig {
        self.digital_unit.resolve(&self.accelerator)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::CoreType;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(SimConfig::parse("", "x").unwrap(), SimConfig::default());
    }

    #[test]
    fn partial_sections_override() {
        let cfg = SimConfig::parse(
            "[accelerator]\ncore = \"systolic_array\"\nm = 64\n[devices]\nkappa = 2.5\n[digital_unit.stage_cycles.div]\nii = 2\ndepth = 6\n[run]\nbins = 50\n",
            "x",
        )
        .unwrap();
        assert_eq!(cfg.accelerator.core, CoreType::SystolicArray);
        assert_eq!(cfg.accelerator.m, 64);
        assert_eq!(cfg.devices.kappa, 2.5);
        assert_eq!(cfg.devices.b_w, 12);
        assert_eq!(cfg.run.bins, 50);
        let d = cfg.digital();
        assert_eq!(d.lanes, 64);
        assert_eq!(d.stage_cycles[&ArithUnit::Div], StageTiming { ii: 2, depth: 6 });
        assert_eq!(d.stage_cycles[&ArithUnit::Add], StageTiming { ii: 1, depth: 1 });
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = SimConfig::parse("[accelerator]\nmm = 3\n", "cfg.toml").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("cfg.toml"));
    }

    #[test]
    fn invalid_value_is_config_error() {
        let err = SimConfig::parse("[accelerator]\nm = 0\n", "x").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = SimConfig::default();
        cfg.run.batch = Some(7);
        let text = cfg.to_toml().unwrap();
        assert_eq!(SimConfig::parse(&text, "x").unwrap(), cfg);
    }

    #[test]
    fn bundled_default_matches_builtin() {
        let text = include_str!("../../../configs/default.toml");
        assert_eq!(SimConfig::parse(text, "default.toml").unwrap(), SimConfig::default());
    }
}
