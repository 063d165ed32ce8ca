//! End-to-end runs, sweeps, derived metrics and report rendering.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::buffering::{double_buffering_batch, max_batch, TransferSchedule, WorkloadProfile};
use crate::config::SimConfig;
use crate::energy::{rollup, Activity, PowerReport, Traffic};
use crate::error::{BufferingError, Error, Result};
use crate::timing::{
    build_memory_trace, simulate_workload, CoreType, LayerTimeline, MemoryTrace, ParallelMode, TimingOptions, ACT_BYTES,
};
use crate::workload::Workload;

/// Command-line overrides applied on top of a config's `[run]` section.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunFlags {
    pub no_pipelining: bool,
    pub double_buffering: bool,
    pub bins: Option<usize>,
    pub batch: Option<u64>,
}

impl RunFlags {
    pub fn apply(&self, cfg: &mut SimConfig) {
        if self.no_pipelining {
            cfg.run.pipelining = false;
        }
        if self.double_buffering {
            cfg.run.optimized_buffering = false;
        }
        if let Some(bins) = self.bins {
            cfg.run.bins = bins;
        }
        if self.batch.is_some() {
            cfg.run.batch = self.batch;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    Optimized,
    DoubleBuffering,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSelection {
    pub mode: BatchMode,
    pub batch: u64,
    pub peak_act_bytes: f64,
    pub act_sram_bytes: f64,
    pub next_input_bytes: f64,
    /// Present when the batch came from the transfer schedule.
    pub schedule_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub ips: f64,
    pub ips_per_w: f64,
    pub ips_per_w_mm2: f64,
    pub utilization: f64,
    /// MACs per byte of activation-SRAM traffic.
    pub arithmetic_intensity: f64,
}

/// Throughputs in inferences per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roofline {
    pub ai: f64,
    pub attained_ips: f64,
    pub peak_ips: f64,
    pub mem_ceiling_ips: f64,
    pub peak_macs_per_s: f64,
    pub act_sram_bytes_per_s: f64,
}

impl Roofline {
    pub fn bound(&self) -> f64 {
        self.peak_ips.min(self.mem_ceiling_ips)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub workload: String,
    pub config: SimConfig,
    pub batch: BatchSelection,
    pub total_cycles: u64,
    pub latency_s: f64,
    pub mac_count: u64,
    pub layers: Vec<LayerTimeline>,
    pub power: PowerReport,
    pub derived: Derived,
    pub roofline: Roofline,
}

impl SimReport {
    pub fn laser_share(&self) -> f64 {
        self.power.watts.laser / self.power.total_w
    }
}

fn timing_opts(cfg: &SimConfig) -> TimingOptions {
    TimingOptions {
        pipelining: cfg.run.pipelining,
    }
}

fn select_batch(workload: &Workload, cfg: &SimConfig) -> Result<BatchSelection> {
    let digital = cfg.digital();
    let profile = WorkloadProfile {
        workload,
        cfg: &cfg.accelerator,
        digital: &digital,
        opts: timing_opts(cfg),
        bins: cfg.run.bins,
    };
    let x_max = cfg.accelerator.act_sram_bytes as f64;
    let input = |b: u64| (workload.with_batch(b).input_elems() * ACT_BYTES) as f64;
    let peak = |b: u64| -> Result<f64> { Ok(crate::buffering::BatchProfile::trace(&profile, b)?.peak()) };
    if let Some(batch) = cfg.run.batch {
        let p = peak(batch)?;
        if p > x_max {
            return Err(BufferingError::NoFeasibleBatch(format!(
                "batch {batch} peaks at {p:.0} B of activation SRAM; capacity is {x_max:.0} B"
            ))
            .into());
        }
        return Ok(BatchSelection {
            mode: BatchMode::Fixed,
            batch,
            peak_act_bytes: p,
            act_sram_bytes: x_max,
            next_input_bytes: input(batch),
            schedule_objective: None,
        });
    }
    if cfg.run.optimized_buffering {
        let choice = max_batch(&profile, x_max, cfg.accelerator.pcie_bytes_per_sec)?;
        Ok(BatchSelection {
            mode: BatchMode::Optimized,
            batch: choice.batch,
            peak_act_bytes: choice.trace.peak(),
            act_sram_bytes: x_max,
            next_input_bytes: input(choice.batch),
            schedule_objective: Some(choice.schedule.objective),
        })
    } else {
        let batch = double_buffering_batch(&profile, x_max)?;
        if batch == 0 {
            return Err(BufferingError::NoFeasibleBatch(format!(
                "a single sample does not fit in half of the {x_max:.0} B activation SRAM"
            ))
            .into());
        }
        Ok(BatchSelection {
            mode: BatchMode::DoubleBuffering,
            batch,
            peak_act_bytes: peak(batch)?,
            act_sram_bytes: x_max,
            next_input_bytes: input(batch),
            schedule_objective: None,
        })
    }
}

/// Runs the full pipeline: batch selection, timing, power roll-up, metrics.
pub fn run_simulation(workload: &Workload, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let selection = select_batch(workload, cfg)?;
    let accel = &cfg.accelerator;
    let digital = cfg.digital();
    let batched = workload.with_batch(selection.batch);
    let layers = simulate_workload(&batched, accel, &digital, timing_opts(cfg))?;

    let total_cycles: u64 = layers.iter().map(|l| l.total_cycles).sum();
    if total_cycles == 0 {
        return Err(Error::Invariant("workload produced zero cycles".into()));
    }
    let f_c = accel.f_c;
    let latency_s = total_cycles as f64 / f_c;
    let mac_count: u64 = layers.iter().map(|l| l.mac_count).sum();
    let act_bytes: u64 = layers
        .iter()
        .map(|l| l.act_sram_reads_bytes + l.act_sram_writes_bytes)
        .sum();
    let weight_bytes: u64 = layers.iter().map(|l| l.weight_sram_reads_bytes).sum();
    let stall: u64 = layers.iter().map(|l| l.stall_cycles).sum();

    let activity = Activity {
        elapsed_s: latency_s,
        weight_duty: stall as f64 / total_cycles as f64,
        traffic: Traffic {
            sram_bytes: act_bytes + weight_bytes,
            dram_bytes: batched.input_elems() * ACT_BYTES,
            d2d_bytes: match accel.core {
                CoreType::PhotoCore => act_bytes,
                CoreType::SystolicArray => 0,
            },
        },
    };
    let power = rollup(accel, &digital, &cfg.devices, &activity).map_err(Error::Config)?;

    let batch = selection.batch as f64;
    let ips = batch / latency_s;
    let m = accel.m as f64;
    let degree = accel.parallel_degree() as f64;
    let peak_macs_per_s = m * m * f_c * degree;
    let act_sram_bytes_per_s = 2.0 * m * f_c * degree;
    let macs_per_inference = mac_count as f64 / batch;
    let ai = mac_count as f64 / act_bytes as f64;
    let roofline = Roofline {
        ai,
        attained_ips: ips,
        peak_ips: peak_macs_per_s / macs_per_inference,
        mem_ceiling_ips: ai * act_sram_bytes_per_s / macs_per_inference,
        peak_macs_per_s,
        act_sram_bytes_per_s,
    };
    if roofline.attained_ips > roofline.bound() * (1.0 + 1e-9) {
        return Err(Error::Invariant(format!(
            "attained {:.6e} IPS exceeds roofline bound {:.6e}",
            roofline.attained_ips,
            roofline.bound()
        )));
    }
    let derived = Derived {
        ips,
        ips_per_w: ips / power.total_w,
        ips_per_w_mm2: ips / (power.total_w * power.total_mm2),
        utilization: mac_count as f64 / (peak_macs_per_s / f_c * total_cycles as f64),
        arithmetic_intensity: ai,
    };
    Ok(SimReport {
        workload: workload.name.clone(),
        config: cfg.clone(),
        batch: selection,
        total_cycles,
        latency_s,
        mac_count,
        layers,
        power,
        derived,
        roofline,
    })
}

/// Loads both files (config optional) and runs with `flags` applied.
pub fn run_simulation_files(workload: &Path, config: Option<&Path>, flags: RunFlags) -> Result<SimReport> {
    let w = Workload::load(workload)?;
    let mut cfg = match config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    flags.apply(&mut cfg);
    run_simulation(&w, &cfg)
}

/// Activation-SRAM trace and next-batch schedule at the batch a run would use.
pub fn buffer_schedule(workload: &Workload, cfg: &SimConfig) -> Result<(BatchSelection, MemoryTrace, TransferSchedule)> {
    cfg.validate()?;
    let selection = select_batch(workload, cfg)?;
    let digital = cfg.digital();
    let t = simulate_workload(
        &workload.with_batch(selection.batch),
        &cfg.accelerator,
        &digital,
        timing_opts(cfg),
    )?;
    let trace = build_memory_trace(&t, cfg.accelerator.f_c, cfg.run.bins)?;
    let schedule = crate::buffering::solve_schedule(
        &trace,
        selection.next_input_bytes,
        cfg.accelerator.act_sram_bytes as f64,
        cfg.accelerator.pcie_bytes_per_sec,
    )?;
    Ok((selection, trace, schedule))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parallelism {
    pub mode: ParallelMode,
    pub n: u64,
}

impl Parallelism {
    fn apply(&self, cfg: &mut SimConfig) {
        let a = &mut cfg.accelerator;
        a.parallel_mode = self.mode;
        match self.mode {
            ParallelMode::Data | ParallelMode::Tile => {
                a.n_cores = self.n;
                a.n_wdm = 1;
            }
            ParallelMode::Wdm => {
                a.n_cores = 1;
                a.n_wdm = self.n;
            }
        }
    }
}

/// Cross-product sweep axes. A `None` batch means "search".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub m: Vec<u64>,
    pub f_c: Vec<f64>,
    pub core: Vec<CoreType>,
    pub batch: Vec<Option<u64>>,
    pub parallelism: Vec<Parallelism>,
}

impl SweepAxes {
    /// Single-point axes taken from `cfg`.
    pub fn from_config(cfg: &SimConfig) -> Self {
        let a = &cfg.accelerator;
        Self {
            m: vec![a.m],
            f_c: vec![a.f_c],
            core: vec![a.core],
            batch: vec![cfg.run.batch],
            parallelism: vec![Parallelism {
                mode: a.parallel_mode,
                n: a.n_cores.max(a.n_wdm),
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: u64,
    pub f_c: f64,
    pub core: CoreType,
    pub batch: Option<u64>,
    pub parallelism: Parallelism,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub report: Option<SimReport>,
    pub error: Option<String>,
}

/// Evaluates every point of the cross product in parallel. Rows come back in
/// axis order (m outermost, parallelism innermost); failing points carry
/// their error message.
pub fn run_sweep(workload: &Workload, base: &SimConfig, axes: &SweepAxes) -> Result<Vec<SweepRow>> {
    for (name, len) in [
        ("m", axes.m.len()),
        ("f_c", axes.f_c.len()),
        ("core", axes.core.len()),
        ("batch", axes.batch.len()),
        ("parallelism", axes.parallelism.len()),
    ] {
        if len == 0 {
            return Err(Error::Sweep(format!("axis `{name}` is empty")));
        }
    }
    let mut points = Vec::new();
    for &m in &axes.m {
        for &f_c in &axes.f_c {
            for &core in &axes.core {
                for &batch in &axes.batch {
                    for &parallelism in &axes.parallelism {
                        points.push(SweepPoint {
                            m,
                            f_c,
                            core,
                            batch,
                            parallelism,
                        });
                    }
                }
            }
        }
    }
    Ok(points
        .into_par_iter()
        .map(|point| {
            let mut cfg = base.clone();
            cfg.accelerator.m = point.m;
            cfg.accelerator.f_c = point.f_c;
            cfg.accelerator.core = point.core;
            cfg.run.batch = point.batch;
            point.parallelism.apply(&mut cfg);
            match run_simulation(workload, &cfg) {
                Ok(r) => SweepRow {
                    point,
                    report: Some(r),
                    error: None,
                },
                Err(e) => SweepRow {
                    point,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Csv,
    Json,
}

pub fn emit_report(report: &SimReport, format: Format) -> Result<String> {
    match format {
        Format::Json => serde_json::to_string_pretty(report).map_err(|e| Error::Report(e.to_string())),
        Format::Csv => report_to_csv(report),
        Format::Table => Ok(report_table(report)),
    }
}

pub fn report_from_json(text: &str) -> Result<SimReport> {
    serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))
}

/// Flattens the report to `path,value` rows. Paths join object keys and array
/// indices with `.`; values are JSON scalars (or `[]`/`{}` for empty
/// containers).
pub fn report_to_csv(report: &SimReport) -> Result<String> {
    let value = serde_json::to_value(report).map_err(|e| Error::Report(e.to_string()))?;
    let mut rows = Vec::new();
    flatten(&value, String::new(), &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(["path", "value"]).map_err(io)?;
    for (path, v) in rows {
        w.write_record([path, v]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
}

fn flatten(v: &Value, path: String, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match v {
        Value::Object(map) if !map.is_empty() => {
            for (k, child) in map {
                flatten(child, join(k), out);
            }
        }
        Value::Array(items) if !items.is_empty() => {
            for (i, child) in items.iter().enumerate() {
                flatten(child, join(&i.to_string()), out);
            }
        }
        _ => out.push((path, v.to_string())),
    }
}

pub fn report_from_csv(text: &str) -> Result<SimReport> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut root = Value::Object(Map::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Report(e.to_string()))?;
        let (path, raw) = (&rec[0], &rec[1]);
        let leaf: Value = serde_json::from_str(raw).map_err(|e| Error::Report(format!("{path}: {e}")))?;
        insert(&mut root, path, leaf)?;
    }
    serde_json::from_value(root).map_err(|e| Error::Report(e.to_string()))
}

fn insert(root: &mut Value, path: &str, leaf: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let next_is_index = !last && parts[i + 1].parse::<usize>().is_ok();
        let fresh = || {
            if next_is_index {
                Value::Array(Vec::new())
            } else {
                Value::Object(Map::new())
            }
        };
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), leaf);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(fresh)
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Report(format!("{path}: expected an index at `{part}`")))?;
                if idx != items.len() && idx + 1 != items.len() {
                    return Err(Error::Report(format!("{path}: index {idx} out of order")));
                }
                if last {
                    items.push(leaf);
                    return Ok(());
                }
                if idx == items.len() {
                    items.push(fresh());
                }
                &mut items[idx]
            }
            _ => return Err(Error::Report(format!("{path}: conflicting value at `{part}`"))),
        };
    }
    Ok(())
}

fn si(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-2..5).contains(&exp) {
        format!("{x:.4}")
    } else {
        format!("{x:.4e}")
    }
}

pub fn report_table(r: &SimReport) -> String {
    let a = &r.config.accelerator;
    let mut s = String::new();
    let _ = writeln!(s, "workload      {}", r.workload);
    let _ = writeln!(
        s,
        "accelerator   {} m={} f_c={} cores={} wdm={} parallel={:?}",
        a.core.name(),
        a.m,
        si(a.f_c),
        a.n_cores,
        a.n_wdm,
        a.parallel_mode
    );
    let _ = writeln!(
        s,
        "batch         {} ({:?}, peak act {} / {} B)",
        r.batch.batch,
        r.batch.mode,
        si(r.batch.peak_act_bytes),
        si(r.batch.act_sram_bytes)
    );
    let _ = writeln!(s, "total_cycles  {}", r.total_cycles);
    let _ = writeln!(s, "latency_s     {}", si(r.latency_s));
    let _ = writeln!(s, "ips           {}", si(r.derived.ips));
    let _ = writeln!(s, "ips_per_w     {}", si(r.derived.ips_per_w));
    let _ = writeln!(s, "ips_per_w_mm2 {}", si(r.derived.ips_per_w_mm2));
    let _ = writeln!(s, "utilization   {}", si(r.derived.utilization));
    let _ = writeln!(s, "power_w       {}", si(r.power.total_w));
    let _ = writeln!(s, "area_mm2      {}", si(r.power.total_mm2));

    let _ = writeln!(s, "\npower\n{:<14}{:>14}{:>9}", "component", "watts", "%");
    for (name, w) in r.power.watts.components() {
        let _ = writeln!(s, "{name:<14}{:>14}{:>8.2}%", si(w), 100.0 * w / r.power.total_w);
    }
    let _ = writeln!(s, "\narea\n{:<14}{:>14}{:>9}", "component", "mm2", "%");
    for (name, mm2) in r.power.area_mm2.components() {
        let _ = writeln!(s, "{name:<14}{:>14}{:>8.2}%", si(mm2), 100.0 * mm2 / r.power.total_mm2);
    }
    let rf = &r.roofline;
    let _ = writeln!(
        s,
        "\nroofline\n{:>14}{:>14}{:>14}{:>14}",
        "ai", "attained_ips", "peak_ips", "mem_ceil_ips"
    );
    let _ = writeln!(
        s,
        "{:>14}{:>14}{:>14}{:>14}",
        si(rf.ai),
        si(rf.attained_ips),
        si(rf.peak_ips),
        si(rf.mem_ceiling_ips)
    );
    let _ = writeln!(
        s,
        "\nlayers\n{:>5} {:<18}{:>14}{:>14}{:>14}{:>14}",
        "idx", "kind", "gemm", "nongemm", "stall", "total"
    );
    for l in &r.layers {
        let _ = writeln!(
            s,
            "{:>5} {:<18}{:>14}{:>14}{:>14}{:>14}",
            l.layer, l.kind, l.gemm_cycles, l.nongemm_cycles, l.stall_cycles, l.total_cycles
        );
    }
    s
}

const SWEEP_COLUMNS: [&str; 17] = [
    "m",
    "f_c",
    "core",
    "batch_request",
    "parallel_mode",
    "n",
    "batch",
    "total_cycles",
    "ips",
    "ips_per_w",
    "ips_per_w_mm2",
    "utilization",
    "power_w",
    "area_mm2",
    "laser_share",
    "roofline_ai",
    "error",
];

fn sweep_cells(row: &SweepRow) -> Vec<String> {
    let p = &row.point;
    let mut cells = vec![
        p.m.to_string(),
        p.f_c.to_string(),
        p.core.name().to_string(),
        p.batch.map_or("auto".into(), |b| b.to_string()),
        format!("{:?}", p.parallelism.mode).to_lowercase(),
        p.parallelism.n.to_string(),
    ];
    match &row.report {
        Some(r) => cells.extend([
            r.batch.batch.to_string(),
            r.total_cycles.to_string(),
            r.derived.ips.to_string(),
            r.derived.ips_per_w.to_string(),
            r.derived.ips_per_w_mm2.to_string(),
            r.derived.utilization.to_string(),
            r.power.total_w.to_string(),
            r.power.total_mm2.to_string(),
            r.laser_share().to_string(),
            r.roofline.ai.to_string(),
            String::new(),
        ]),
        None => {
            cells.extend(std::iter::repeat_n(String::new(), 10));
            cells.push(row.error.clone().unwrap_or_default());
        }
    }
    cells
}

/// One row per sweep point.
pub fn emit_sweep(rows: &[SweepRow], format: Format) -> Result<String> {
    match format {
        Format::Json => serde_json::to_string_pretty(rows).map_err(|e| Error::Report(e.to_string())),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Report(e.to_string());
            w.write_record(SWEEP_COLUMNS).map_err(io)?;
            for row in rows {
                w.write_record(sweep_cells(row)).map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
        }
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:>5}{:>12}{:>16}{:>7}{:>10}{:>4}{:>7}{:>14}{:>12}{:>12}{:>12}{:>8}",
                "m", "f_c", "core", "req", "parallel", "n", "batch", "ips", "ips_per_w", "power_w", "area_mm2", "laser%"
            );
            for row in rows {
                let c = sweep_cells(row);
                if let Some(r) = &row.report {
                    let _ = writeln!(
                        s,
                        "{:>5}{:>12}{:>16}{:>7}{:>10}{:>4}{:>7}{:>14}{:>12}{:>12}{:>12}{:>7.2}%",
                        c[0],
                        si(row.point.f_c),
                        c[2],
                        c[3],
                        c[4],
                        c[5],
                        c[6],
                        si(r.derived.ips),
                        si(r.derived.ips_per_w),
                        si(r.power.total_w),
                        si(r.power.total_mm2),
                        100.0 * r.laser_share()
                    );
                } else {
                    let _ = writeln!(
                        s,
                        "{:>5}{:>12}{:>16}{:>7}{:>10}{:>4}  error: {}",
                        c[0],
                        si(row.point.f_c),
                        c[2],
                        c[3],
                        c[4],
                        c[5],
                        c[16]
                    );
                }
            }
            let _ = writeln!(
                s,
                "\nroofline\n{:>5}{:>16}{:>14}{:>14}{:>14}{:>14}",
                "m", "core", "ai", "attained_ips", "peak_ips", "mem_ceil_ips"
            );
            for row in rows {
                if let Some(r) = &row.report {
                    let rf = &r.roofline;
                    let _ = writeln!(
                        s,
                        "{:>5}{:>16}{:>14}{:>14}{:>14}{:>14}",
                        row.point.m,
                        row.point.core.name(),
                        si(rf.ai),
                        si(rf.attained_ips),
                        si(rf.peak_ips),
                        si(rf.mem_ceiling_ips)
                    );
                }
            }
            Ok(s)
        }
    }
}

/// Photo-core and systolic-array reports side by side.
pub fn emit_comparison(photo: &SimReport, systolic: &SimReport, format: Format) -> Result<String> {
    #[derive(Serialize)]
    struct Pair<'a> {
        photo_core: &'a SimReport,
        systolic_array: &'a SimReport,
    }
    match format {
        Format::Json => serde_json::to_string_pretty(&Pair {
            photo_core: photo,
            systolic_array: systolic,
        })
        .map_err(|e| Error::Report(e.to_string())),
        Format::Csv | Format::Table => {
            let rows: [(&str, f64, f64); 9] = [
                ("batch", photo.batch.batch as f64, systolic.batch.batch as f64),
                ("total_cycles", photo.total_cycles as f64, systolic.total_cycles as f64),
                ("ips", photo.derived.ips, systolic.derived.ips),
                ("ips_per_w", photo.derived.ips_per_w, systolic.derived.ips_per_w),
                ("ips_per_w_mm2", photo.derived.ips_per_w_mm2, systolic.derived.ips_per_w_mm2),
                ("utilization", photo.derived.utilization, systolic.derived.utilization),
                ("power_w", photo.power.total_w, systolic.power.total_w),
                ("area_mm2", photo.power.total_mm2, systolic.power.total_mm2),
                ("roofline_ai", photo.roofline.ai, systolic.roofline.ai),
            ];
            let mut s = String::new();
            if format == Format::Csv {
                s.push_str("metric,photo_core,systolic_array,ratio\n");
                for (name, p, q) in rows {
                    let _ = writeln!(s, "{name},{p},{q},{}", p / q);
                }
            } else {
                let _ = writeln!(s, "{:<16}{:>14}{:>16}{:>10}", "metric", "photo_core", "systolic_array", "ratio");
                for (name, p, q) in rows {
                    let _ = writeln!(s, "{name:<16}{:>14}{:>16}{:>10.3}", si(p), si(q), p / q);
                }
            }
            Ok(s)
        }
    }
}

/// Time/bytes columns for plotting the activation-SRAM trace and the
/// cumulative next-batch transfer.
pub fn emit_schedule(
    selection: &BatchSelection,
    trace: &MemoryTrace,
    schedule: &TransferSchedule,
    format: Format,
) -> Result<String> {
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                selection: &'a BatchSelection,
                trace: &'a MemoryTrace,
                schedule: &'a TransferSchedule,
            }
            serde_json::to_string_pretty(&Out {
                selection,
                trace,
                schedule,
            })
            .map_err(|e| Error::Report(e.to_string()))
        }
        Format::Csv | Format::Table => {
            let mut s = String::new();
            if format == Format::Table {
                let _ = writeln!(s, "batch         {} ({:?})", selection.batch, selection.mode);
                let _ = writeln!(s, "capacity      {} B", si(selection.act_sram_bytes));
                let _ = writeln!(s, "next input    {} B", si(selection.next_input_bytes));
                let _ = writeln!(s, "dt            {} s", si(schedule.dt));
                let _ = writeln!(s, "feasible      {}", schedule.feasible);
                if let Some(b) = schedule.binding {
                    let _ = writeln!(s, "binding       bin {} ({:?})", b.bin, b.reason);
                }
                let _ = writeln!(s, "objective     {}", si(schedule.objective));
                s.push('\n');
            }
            s.push_str("time_s,act_bytes,pcie_cumulative_bytes\n");
            for (i, (u, x)) in trace.usage.iter().zip(&schedule.x_pcie).enumerate() {
                let _ = writeln!(s, "{},{u},{x}", (i + 1) as f64 * trace.dt);
            }
            Ok(s)
        }
    }
}
