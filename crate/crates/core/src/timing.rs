//! Cycle models for the photo-core and systolic arrays.
//!
//! All cycle counts are at the configured clock `f_c`.
//!
//! Photo-core (weight stationary). Per tile: `P = ⌈t_prog·f_c⌉` programming
//! cycles, then one vector per cycle plus one cycle of optical fill:
//! `tiles · (P + n_vec + 1)`. Programming is charged for every tile.
//!
//! Systolic array, per work unit with `R × K` weights and `N` vectors:
//!
//! | dataflow | units             | cycles per unit  | note                  |
//! |----------|-------------------|------------------|-----------------------|
//! | WS       | ⌈R/m⌉·⌈K/m⌉        | m + N + m        | load, stream, drain   |
//! | OS       | ⌈R/m⌉·⌈N/m⌉        | 2m + K − 2       | approximate           |
//! | IS       | ⌈K/m⌉·⌈N/m⌉        | 2m + R           |                       |
//!
//! A systolic array at `f_c` stands for `f_c / sa_clock_hz` time-offset
//! replicas running at `sa_clock_hz`, so its cycle counts at `f_c` equal the
//! single-array counts and throughput is linear in the replica count.
//!
//! GEMM/non-GEMM overlap: output vectors are handed to the digital unit as
//! they complete. With span `G = compute + stall`, non-GEMM cycles `n` spread
//! over `V` output vectors, and fill `F` (cycles until the first full output
//! vector exists), the last vector still needs `c = ⌈n/V⌉` cycles after the
//! GEMM ends, so `total = min(G + n, max(G + c, F + n))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinear::{ceil_ratio, layer_nongemm_cycles, DigitalUnitConfig};
use crate::workload::{plan_tiles, GemmOp, NonGemmOp, NonGemmTag, TilePlan, Workload};

pub const ACT_BYTES: u64 = 1;
pub const WEIGHT_BYTES: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreType {
    PhotoCore,
    SystolicArray,
}

impl CoreType {
    pub fn name(self) -> &'static str {
        match self {
            CoreType::PhotoCore => "photo_core",
            CoreType::SystolicArray => "systolic_array",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    WS,
    OS,
    IS,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParallelMode {
    Data,
    Tile,
    Wdm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceleratorConfig {
    pub core: CoreType,
    pub m: u64,
    pub f_c: f64,
    pub dataflow: Dataflow,
    pub t_prog: f64,
    pub n_cores: u64,
    pub parallel_mode: ParallelMode,
    pub n_wdm: u64,
    pub act_sram_bytes: u64,
    pub weight_sram_bytes: u64,
    pub pcie_bytes_per_sec: f64,
    pub zeta: u64,
    /// Clock of one physical systolic array.
    pub sa_clock_hz: f64,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        Self {
            core: CoreType::PhotoCore,
            m: 128,
            f_c: 10e9,
            dataflow: Dataflow::WS,
            t_prog: 10e-9,
            n_cores: 1,
            parallel_mode: ParallelMode::Data,
            n_wdm: 1,
            act_sram_bytes: 100_000_000,
            weight_sram_bytes: 300_000_000,
            pcie_bytes_per_sec: 32e9,
            zeta: 100,
            sa_clock_hz: 1e9,
        }
    }
}

impl AcceleratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |s: &str| Err(Error::Config(s.into()));
        if self.m < 2 {
            return err("m must be >= 2");
        }
        if !(self.f_c.is_finite() && self.f_c > 0.0) {
            return err("f_c must be > 0");
        }
        if !(self.t_prog.is_finite() && self.t_prog >= 0.0) {
            return err("t_prog must be >= 0");
        }
        if self.n_cores == 0 || self.n_wdm == 0 {
            return err("n_cores and n_wdm must be >= 1");
        }
        if self.zeta == 0 {
            return err("zeta must be >= 1");
        }
        if self.act_sram_bytes == 0 {
            return err("act_sram_bytes must be >= 1");
        }
        if !(self.pcie_bytes_per_sec > 0.0) || !(self.sa_clock_hz > 0.0) {
            return err("pcie_bytes_per_sec and sa_clock_hz must be > 0");
        }
        match self.parallel_mode {
            ParallelMode::Wdm if self.core == CoreType::SystolicArray => {
                Err(Error::Timing("wdm parallelism requires core = photo_core".into()))
            }
            ParallelMode::Wdm if self.n_cores != 1 => err("wdm mode uses n_wdm; set n_cores = 1"),
            ParallelMode::Data | ParallelMode::Tile if self.n_wdm != 1 => {
                err("n_wdm > 1 requires parallel_mode = wdm")
            }
            _ => Ok(()),
        }
    }

    /// Photo-cores only support weight stationary.
    pub fn effective_dataflow(&self) -> Dataflow {
        match self.core {
            CoreType::PhotoCore => Dataflow::WS,
            CoreType::SystolicArray => self.dataflow,
        }
    }

    pub fn parallel_degree(&self) -> u64 {
        match self.parallel_mode {
            ParallelMode::Wdm => self.n_wdm,
            ParallelMode::Data | ParallelMode::Tile => self.n_cores,
        }
    }

    pub fn programming_cycles(&self) -> u64 {
        if self.t_prog == 0.0 {
            0
        } else {
            ceil_ratio(self.t_prog * self.f_c, 1.0)
        }
    }

    /// Physical systolic arrays per core.
    pub fn sa_replicas(&self) -> f64 {
        self.f_c / self.sa_clock_hz
    }
}

/// Cycle and traffic counts of one GEMM on one core.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmTiming {
    pub units: u64,
    /// Streaming plus fill/drain cycles.
    pub compute_cycles: u64,
    /// Programming or weight-load cycles.
    pub stall_cycles: u64,
    /// Cycles until the first complete output vector exists.
    pub fill_cycles: u64,
    pub streaming_cycles: u64,
    /// Output vectors handed to the digital unit.
    pub output_vectors: u64,
    pub act_reads_bytes: u64,
    pub act_writes_bytes: u64,
    pub weight_reads_bytes: u64,
}

impl GemmTiming {
    pub fn span(&self) -> u64 {
        self.compute_cycles + self.stall_cycles
    }
}

/// Per-unit cost description shared by all dataflows.
struct Schedule {
    units: u64,
    unit_compute: u64,
    unit_stall: u64,
    /// Units whose partial sums make up one output vector.
    reduction_units: u64,
    first_output: u64,
    unit_streaming: u64,
    output_vectors: u64,
}

impl Schedule {
    /// Timing when the units are spread round-robin over `ways` cores.
    fn timing(&self, ways: u64) -> GemmTiming {
        let units = self.units.div_ceil(ways);
        let chain = self.reduction_units.div_ceil(ways);
        GemmTiming {
            units,
            compute_cycles: units * self.unit_compute,
            stall_cycles: units * self.unit_stall,
            fill_cycles: (chain - 1) * (self.unit_compute + self.unit_stall) + self.unit_stall + self.first_output,
            streaming_cycles: self.units * self.unit_streaming,
            output_vectors: self.output_vectors,
            ..GemmTiming::default()
        }
    }
}

fn photo_schedule(plan: &TilePlan, cfg: &AcceleratorConfig) -> Schedule {
    Schedule {
        units: plan.total_tiles,
        unit_compute: plan.n_vec + 1,
        unit_stall: cfg.programming_cycles(),
        reduction_units: plan.col_tiles,
        first_output: 2,
        unit_streaming: plan.n_vec,
        output_vectors: plan.n_vec,
    }
}

fn systolic_schedule(plan: &TilePlan, dataflow: Dataflow) -> Schedule {
    let m = plan.m;
    let vec_tiles = plan.n_vec.div_ceil(m);
    match dataflow {
        Dataflow::WS => Schedule {
            units: plan.total_tiles,
            unit_compute: plan.n_vec + m,
            unit_stall: m,
            reduction_units: plan.col_tiles,
            first_output: m + 1,
            unit_streaming: plan.n_vec,
            output_vectors: plan.n_vec,
        },
        Dataflow::OS => Schedule {
            units: plan.row_tiles * vec_tiles,
            unit_compute: 2 * m + plan.cols_w - 2,
            unit_stall: 0,
            reduction_units: 1,
            first_output: 2 * m + plan.cols_w - 2,
            unit_streaming: plan.cols_w,
            output_vectors: plan.n_vec,
        },
        Dataflow::IS => Schedule {
            units: plan.col_tiles * vec_tiles,
            unit_compute: 2 * m + plan.rows_w,
            unit_stall: 0,
            reduction_units: plan.col_tiles,
            first_output: 2 * m + 1,
            unit_streaming: plan.rows_w,
            output_vectors: plan.n_vec,
        },
    }
}

fn systolic_traffic(plan: &TilePlan, dataflow: Dataflow) -> (u64, u64, u64) {
    let m = plan.m;
    let vec_tiles = plan.n_vec.div_ceil(m);
    match dataflow {
        Dataflow::WS => photo_traffic(plan),
        Dataflow::OS => {
            let units = plan.row_tiles * vec_tiles;
            (
                units * m * plan.cols_w * ACT_BYTES,
                units * m * m * ACT_BYTES,
                units * m * plan.cols_w * WEIGHT_BYTES,
            )
        }
        Dataflow::IS => {
            let units = plan.col_tiles * vec_tiles;
            (
                units * m * m * ACT_BYTES,
                units * m * plan.rows_w * ACT_BYTES,
                units * m * plan.rows_w * WEIGHT_BYTES,
            )
        }
    }
}

/// `(act reads, act writes, weight reads)` in bytes for weight-stationary tiling.
fn photo_traffic(plan: &TilePlan) -> (u64, u64, u64) {
    let m = plan.m;
    (
        plan.total_tiles * plan.n_vec * m * ACT_BYTES,
        plan.total_tiles * plan.n_vec * m * ACT_BYTES,
        plan.total_tiles * m * m * WEIGHT_BYTES,
    )
}

fn with_traffic(mut t: GemmTiming, (r, w, wr): (u64, u64, u64)) -> GemmTiming {
    t.act_reads_bytes = r;
    t.act_writes_bytes = w;
    t.weight_reads_bytes = wr;
    t
}

pub fn photo_core_gemm_cycles(plan: &TilePlan, cfg: &AcceleratorConfig) -> GemmTiming {
    with_traffic(photo_schedule(plan, cfg).timing(1), photo_traffic(plan))
}

pub fn systolic_gemm_cycles(plan: &TilePlan, cfg: &AcceleratorConfig) -> GemmTiming {
    let df = cfg.dataflow;
    with_traffic(systolic_schedule(plan, df).timing(1), systolic_traffic(plan, df))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerTimeline {
    pub layer: usize,
    pub kind: String,
    pub gemm_cycles: u64,
    pub nongemm_cycles: u64,
    pub overlapped_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub fill_cycles: u64,
    pub act_sram_reads_bytes: u64,
    pub act_sram_writes_bytes: u64,
    pub weight_sram_reads_bytes: u64,
    pub mac_count: u64,
    pub streaming_cycles: u64,
    pub occupancy: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

impl LayerTimeline {
    pub fn is_consistent(&self) -> bool {
        self.total_cycles + self.overlapped_cycles == self.gemm_cycles + self.nongemm_cycles + self.stall_cycles
    }

    /// Adds counts of `other`, which runs after `self` without overlap.
    pub fn absorb(&mut self, other: &LayerTimeline, m: u64) {
        self.gemm_cycles += other.gemm_cycles;
        self.nongemm_cycles += other.nongemm_cycles;
        self.overlapped_cycles += other.overlapped_cycles;
        self.stall_cycles += other.stall_cycles;
        self.total_cycles += other.total_cycles;
        self.fill_cycles += other.fill_cycles;
        self.act_sram_reads_bytes += other.act_sram_reads_bytes;
        self.act_sram_writes_bytes += other.act_sram_writes_bytes;
        self.weight_sram_reads_bytes += other.weight_sram_reads_bytes;
        self.mac_count += other.mac_count;
        self.streaming_cycles += other.streaming_cycles;
        self.occupancy = occupancy(self.mac_count, m, self.streaming_cycles);
    }
}

fn occupancy(macs: u64, m: u64, streaming: u64) -> f64 {
    if streaming == 0 {
        0.0
    } else {
        macs as f64 / (m * m * streaming) as f64
    }
}

/// Combines a GEMM timing with its non-GEMM cycles.
pub fn overlap_nongemm(gemm: &GemmTiming, nongemm_cycles: u64, enabled: bool) -> LayerTimeline {
    let span = gemm.span();
    let serial = span + nongemm_cycles;
    let total = if enabled && nongemm_cycles > 0 {
        let tail = nongemm_cycles.div_ceil(gemm.output_vectors.max(1));
        serial.min((span + tail).max(gemm.fill_cycles + nongemm_cycles))
    } else {
        serial
    };
    LayerTimeline {
        gemm_cycles: gemm.compute_cycles,
        nongemm_cycles,
        overlapped_cycles: serial - total,
        stall_cycles: gemm.stall_cycles,
        total_cycles: total,
        fill_cycles: gemm.fill_cycles,
        act_sram_reads_bytes: gemm.act_reads_bytes,
        act_sram_writes_bytes: gemm.act_writes_bytes,
        weight_sram_reads_bytes: gemm.weight_reads_bytes,
        streaming_cycles: gemm.streaming_cycles,
        ..LayerTimeline::default()
    }
}

/// Work seen by the slowest core after splitting one GEMM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelShare {
    /// Vectors streamed by one core (or one wavelength).
    pub n_vec: u64,
    /// Ways the tile list is divided (tile mode), else 1.
    pub tile_ways: u64,
    pub nongemm: Vec<NonGemmOp>,
    /// Cores holding a copy of the weights.
    pub weight_copies: u64,
}

/// Splits one GEMM according to the parallel mode.
///
/// data / wdm: vectors and non-GEMM elements divide evenly over `n` cores or
/// wavelengths. tile: tiles go round-robin over `n` cores, and partial sums
/// from `min(n, col_tiles)` cores need that many minus one digital add passes.
pub fn apply_parallelism(gemm: &GemmOp, cfg: &AcceleratorConfig) -> Result<ParallelShare> {
    if cfg.parallel_mode == ParallelMode::Wdm && cfg.core == CoreType::SystolicArray {
        return Err(Error::Timing("wdm parallelism requires core = photo_core".into()));
    }
    let n = cfg.parallel_degree();
    match cfg.parallel_mode {
        ParallelMode::Data | ParallelMode::Wdm => {
            let copies = if cfg.parallel_mode == ParallelMode::Data {
                n.min(gemm.n_vec)
            } else {
                1
            };
            Ok(ParallelShare {
                n_vec: gemm.n_vec.div_ceil(n),
                tile_ways: 1,
                nongemm: gemm
                    .nongemm
                    .iter()
                    .map(|op| NonGemmOp::new(op.tag, op.elems.div_ceil(n)))
                    .collect(),
                weight_copies: copies,
            })
        }
        ParallelMode::Tile => {
            let plan = plan_tiles(gemm, cfg.m);
            let split = n.min(plan.col_tiles);
            let mut nongemm: Vec<NonGemmOp> = (1..split)
                .map(|_| NonGemmOp::new(NonGemmTag::Add, gemm.rows_w * gemm.n_vec))
                .collect();
            nongemm.extend(gemm.nongemm.iter().copied());
            Ok(ParallelShare {
                n_vec: gemm.n_vec,
                tile_ways: n,
                nongemm,
                weight_copies: 1,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingOptions {
    pub pipelining: bool,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self { pipelining: true }
    }
}

/// Timeline of one GEMM on the slowest core, with totals for traffic.
pub fn gemm_timeline(
    gemm: &GemmOp,
    cfg: &AcceleratorConfig,
    digital: &DigitalUnitConfig,
    opts: TimingOptions,
) -> Result<LayerTimeline> {
    let share = apply_parallelism(gemm, cfg)?;
    let core_plan = plan_tiles(
        &GemmOp {
            n_vec: share.n_vec,
            ..gemm.clone()
        },
        cfg.m,
    );
    let full_plan = plan_tiles(gemm, cfg.m);
    let (schedule, traffic) = match cfg.core {
        CoreType::PhotoCore => (photo_schedule(&core_plan, cfg), photo_traffic(&full_plan)),
        CoreType::SystolicArray => {
            let df = cfg.effective_dataflow();
            (systolic_schedule(&core_plan, df), systolic_traffic(&full_plan, df))
        }
    };
    let mut timing = with_traffic(schedule.timing(share.tile_ways), traffic);
    timing.weight_reads_bytes *= share.weight_copies;
    let full = match cfg.core {
        CoreType::PhotoCore => photo_schedule(&full_plan, cfg),
        CoreType::SystolicArray => systolic_schedule(&full_plan, cfg.effective_dataflow()),
    };
    timing.streaming_cycles = full.units * full.unit_streaming;
    let nongemm = layer_nongemm_cycles(&share.nongemm, digital)?;
    let mut t = overlap_nongemm(&timing, nongemm, opts.pipelining);
    t.layer = gemm.source_layer;
    t.mac_count = gemm.mac_count();
    t.occupancy = occupancy(t.mac_count, cfg.m, t.streaming_cycles);
    Ok(t)
}

/// Per-layer timelines in execution order. Layers without a GEMM are folded
/// into their predecessor; LSTM time steps are summed into their layer.
pub fn simulate_workload(
    workload: &Workload,
    cfg: &AcceleratorConfig,
    digital: &DigitalUnitConfig,
    opts: TimingOptions,
) -> Result<Vec<LayerTimeline>> {
    cfg.validate()?;
    digital.validate()?;
    let mut out: Vec<LayerTimeline> = Vec::new();
    for gemm in workload.lower() {
        let t = gemm_timeline(&gemm, cfg, digital, opts)?;
        match out.last_mut() {
            Some(prev) if prev.layer == t.layer => prev.absorb(&t, cfg.m),
            _ => {
                let spec = &workload.layers[t.layer];
                out.push(LayerTimeline {
                    kind: spec.kind.name().to_string(),
                    input_bytes: spec.input_elems() * ACT_BYTES,
                    output_bytes: spec.output_elems() * ACT_BYTES,
                    ..t
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryTrace {
    /// Bin width, seconds.
    pub dt: f64,
    /// Activation-SRAM occupancy per bin, bytes.
    pub usage: Vec<f64>,
}

impl MemoryTrace {
    pub fn peak(&self) -> f64 {
        self.usage.iter().copied().fold(0.0, f64::max)
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.usage.len() as f64
    }

    /// Errors if any bin exceeds `x_max`.
    pub fn check_capacity(&self, x_max: f64) -> Result<()> {
        match self.usage.iter().position(|u| *u > x_max) {
            Some(bin) => Err(Error::Buffering(crate::error::BufferingError::NoFeasibleBatch(format!(
                "activation usage {:.0} B at bin {bin} exceeds SRAM capacity {x_max:.0} B",
                self.usage[bin]
            )))),
            None => Ok(()),
        }
    }
}

/// Activation-SRAM occupancy sampled into `bins` equal bins.
///
/// While layer `i` runs, its whole input is live and its output grows linearly
/// over the layer's span. The input dies when the layer finishes. Each bin
/// holds the maximum over its interval.
pub fn build_memory_trace(timelines: &[LayerTimeline], f_c: f64, bins: usize) -> Result<MemoryTrace> {
    let cycles: u64 = timelines.iter().map(|t| t.total_cycles).sum();
    if bins == 0 || cycles == 0 {
        return Err(Error::Timing("memory trace needs bins >= 1 and a nonempty timeline".into()));
    }
    build_memory_trace_dt(timelines, f_c, cycles as f64 / f_c / bins as f64)
}

pub fn build_memory_trace_dt(timelines: &[LayerTimeline], f_c: f64, dt: f64) -> Result<MemoryTrace> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Timing("dt must be > 0".into()));
    }
    let total_s = timelines.iter().map(|t| t.total_cycles).sum::<u64>() as f64 / f_c;
    let bins = ((total_s / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut usage = vec![0.0f64; bins];
    let mut start = 0.0;
    for t in timelines {
        let span = t.total_cycles as f64 / f_c;
        let end = start + span;
        let first = ((start / dt).floor() as usize).min(bins - 1);
        let last = (((end / dt) * (1.0 - 1e-12)).floor() as usize).min(bins - 1);
        for (bin, slot) in usage.iter_mut().enumerate().take(last + 1).skip(first) {
            let right = ((bin + 1) as f64 * dt).min(end);
            let frac = if span > 0.0 { ((right - start) / span).clamp(0.0, 1.0) } else { 1.0 };
            let value = t.input_bytes as f64 + t.output_bytes as f64 * frac;
            *slot = slot.max(value);
        }
        start = end;
    }
    Ok(MemoryTrace { dt, usage })
}
