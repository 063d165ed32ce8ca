//! Cycle model of the vectorized digital unit that runs non-GEMM operations.
//!
//! The unit has one lane per optical channel. Each lane is built from
//! pipelined arithmetic units running at `f_asic`; `n_units = ⌈f_c/f_asic⌉`
//! staggered copies let the unit accept one element per lane per `f_c` cycle.
//!
//! For one op over `elems` elements:
//!
//! ```text
//! waves  = ⌈elems / lanes⌉
//! native = Σ_stages(II · invocations) · waves + max_depth (+ ⌈log2 lanes⌉ for cross-lane reductions)
//! cycles = ⌈native · (f_c / f_asic) / n_units⌉
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{NonGemmOp, NonGemmTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithUnit {
    Add,
    Mul,
    Div,
    Max,
    Sqrt,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageTiming {
    /// Initiation interval, native cycles.
    pub ii: u64,
    pub depth: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpRecipe {
    /// `(unit, invocations per element)` in pipeline order.
    pub stages: Vec<(ArithUnit, u64)>,
    /// Combines values across lanes (adds a reduction tree).
    #[serde(default)]
    pub reduction: bool,
}

impl OpRecipe {
    fn new(stages: &[(ArithUnit, u64)], reduction: bool) -> Self {
        Self {
            stages: stages.to_vec(),
            reduction,
        }
    }
}

pub fn default_stage_cycles() -> BTreeMap<ArithUnit, StageTiming> {
    use ArithUnit::*;
    let t = |ii, depth| StageTiming { ii, depth };
    BTreeMap::from([
        (Add, t(1, 1)),
        (Mul, t(1, 2)),
        (Max, t(1, 1)),
        (Div, t(4, 8)),
        (Sqrt, t(4, 8)),
        (Exp, t(1, 4)),
    ])
}

pub fn default_recipes() -> BTreeMap<NonGemmTag, OpRecipe> {
    use ArithUnit::*;
    use NonGemmTag as T;
    BTreeMap::from([
        (T::Relu, OpRecipe::new(&[(Max, 1)], false)),
        (T::Gelu, OpRecipe::new(&[(Mul, 3), (Exp, 1), (Div, 1), (Add, 2)], false)),
        (T::Softmax, OpRecipe::new(&[(Exp, 1), (Max, 1), (Div, 1)], false)),
        (T::Sigmoid, OpRecipe::new(&[(Exp, 1), (Add, 1), (Div, 1)], false)),
        (T::Tanh, OpRecipe::new(&[(Exp, 2), (Add, 2), (Div, 2)], false)),
        (T::Layernorm, OpRecipe::new(&[(Add, 2), (Mul, 2), (Sqrt, 1), (Div, 1)], false)),
        (T::Maxpool, OpRecipe::new(&[(Max, 1)], true)),
        (T::Avgpool, OpRecipe::new(&[(Add, 1), (Mul, 1)], true)),
        (T::Add, OpRecipe::new(&[(Add, 1)], false)),
        (T::Mul, OpRecipe::new(&[(Mul, 1)], false)),
        (T::Exp, OpRecipe::new(&[(Exp, 1)], false)),
        (T::Div, OpRecipe::new(&[(Div, 1)], false)),
        (T::Sqrt, OpRecipe::new(&[(Sqrt, 1)], false)),
        (T::MaxReduce, OpRecipe::new(&[(Max, 1)], true)),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitalUnitConfig {
    pub lanes: u64,
    pub f_asic: f64,
    pub f_c: f64,
    pub stage_cycles: BTreeMap<ArithUnit, StageTiming>,
    pub recipes: BTreeMap<NonGemmTag, OpRecipe>,
}

/// `⌈a/b⌉` for positive reals, tolerant to representation error in exact ratios.
pub(crate) fn ceil_ratio(a: f64, b: f64) -> u64 {
    let r = a / b;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        r.ceil() as u64
    }
}

impl DigitalUnitConfig {
    pub fn new(lanes: u64, f_c: f64) -> Self {
        Self {
            lanes,
            f_asic: 1e9,
            f_c,
            stage_cycles: default_stage_cycles(),
            recipes: default_recipes(),
        }
    }

    pub fn n_units(&self) -> u64 {
        ceil_ratio(self.f_c, self.f_asic).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |s: String| Err(Error::Nonlinear(s));
        if self.lanes == 0 {
            return err("lanes must be >= 1".into());
        }
        if !(self.f_asic > 0.0 && self.f_c > 0.0) {
            return err("clock frequencies must be > 0".into());
        }
        if let Some((unit, _)) = self.stage_cycles.iter().find(|(_, t)| t.ii == 0) {
            return err(format!("initiation interval of {unit:?} must be >= 1"));
        }
        for (tag, recipe) in &self.recipes {
            if recipe.stages.is_empty() {
                return err(format!("recipe for {tag} has no stages"));
            }
            if let Some((unit, _)) = recipe.stages.iter().find(|(u, _)| !self.stage_cycles.contains_key(u)) {
                return err(format!("recipe for {tag} uses {unit:?} which has no stage timing"));
            }
        }
        Ok(())
    }

    fn recipe(&self, tag: NonGemmTag) -> Result<&OpRecipe> {
        self.recipes
            .get(&tag)
            .ok_or_else(|| Error::Nonlinear(format!("no recipe for op `{tag}`")))
    }

    fn stage(&self, unit: ArithUnit) -> Result<StageTiming> {
        self.stage_cycles
            .get(&unit)
            .copied()
            .ok_or_else(|| Error::Nonlinear(format!("no stage timing for {unit:?}")))
    }

    /// Pipeline depth of the op's recipe, native cycles.
    pub fn depth(&self, tag: NonGemmTag) -> Result<u64> {
        let recipe = self.recipe(tag)?;
        let mut depth = 0;
        for (unit, _) in &recipe.stages {
            depth = depth.max(self.stage(*unit)?.depth);
        }
        Ok(depth)
    }

    pub fn native_cycles(&self, op: &NonGemmOp) -> Result<u64> {
        let recipe = self.recipe(op.tag)?;
        let waves = op.elems.div_ceil(self.lanes);
        let mut per_wave = 0;
        let mut depth = 0;
        for (unit, invocations) in &recipe.stages {
            let t = self.stage(*unit)?;
            per_wave += t.ii * invocations;
            depth = depth.max(t.depth);
        }
        let tree = if recipe.reduction {
            u64::from(self.lanes.next_power_of_two().trailing_zeros())
        } else {
            0
        };
        Ok(per_wave * waves + depth + tree)
    }

    /// Native cycles expressed at `f_c`.
    pub fn to_core_cycles(&self, native: u64) -> u64 {
        if native == 0 {
            return 0;
        }
        ceil_ratio(native as f64 * self.f_c / self.f_asic, self.n_units() as f64)
    }
}

pub fn nongemm_cycles(op: &NonGemmOp, cfg: &DigitalUnitConfig) -> Result<u64> {
    Ok(cfg.to_core_cycles(cfg.native_cycles(op)?))
}

/// Cycles at `f_c` for a sequence of ops. Consecutive ops overlap by the
/// shorter of the two pipeline depths.
pub fn layer_nongemm_cycles(ops: &[NonGemmOp], cfg: &DigitalUnitConfig) -> Result<u64> {
    Ok(cfg.to_core_cycles(layer_native_cycles(ops, cfg)?))
}

pub fn layer_native_cycles(ops: &[NonGemmOp], cfg: &DigitalUnitConfig) -> Result<u64> {
    let mut total = 0;
    let mut prev_depth: Option<u64> = None;
    for op in ops {
        let depth = cfg.depth(op.tag)?;
        total += cfg.native_cycles(op)?;
        if let Some(prev) = prev_depth {
            total -= prev.min(depth);
        }
        prev_depth = Some(depth);
    }
    Ok(total)
}
