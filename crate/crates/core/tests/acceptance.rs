//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use photosim_core::buffering::{
    double_buffering_batch, max_batch, solve_schedule, verify_optimal, FlatProfile, WorkloadProfile,
};
use photosim_core::config::SimConfig;
use photosim_core::energy::{dac_power, laser_power_per_channel, DeviceParams};
use photosim_core::mesh::{
    clements_decompose, measure_matrix_error, mesh_forward, output_error_study, program_tile, random_orthogonal,
    NoiseSpec, ProgrammingMode,
};
use photosim_core::report::{run_simulation, run_sweep, SimReport, SweepAxes};
use photosim_core::timing::{simulate_workload, CoreType, MemoryTrace, ParallelMode, TimingOptions};
use photosim_core::workload::{DenseDims, LayerKind, LayerSpec, Workload};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets.
const DAC_SIG_FIGS: usize = 4;
const LASER_REL_TOL: f64 = 1e-9;
const MESH_REL_TOL: f64 = 1e-7;
const PRECISION_TARGET: f64 = 1.0 / 256.0;
const PRECISION_TRIALS: usize = 500;
const SLOPE_RANGE: (f64, f64) = (1.5, 2.7);
const SLOPE_TRIALS: usize = 200;
const BUFFER_INSTANCES: usize = 1000;
const SA_LINEAR_REL_TOL: f64 = 1e-12;
const LINEAR_POINTS: u64 = 16;
/// Allowed growth of consecutive ips increments, relative to ips at the first point.
const CONCAVITY_TOL: f64 = 1e-3;
const PLATEAU_FRACTION: f64 = 0.5;

const WORKLOADS: [&str; 3] = ["resnet50", "bertlarge", "rnnt"];

fn workload(name: &str) -> Workload {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../workloads/{name}.workload"));
    Workload::load(path).expect("bundled workload loads")
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let ok = parts.iter().all(|p| p.ok);
    let detail = parts
        .iter()
        .map(|p| format!("[{}] {}", if p.ok { "ok" } else { "FAIL" }, p.detail))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { ok, detail }
}

fn sig_figs(x: f64, n: usize) -> String {
    let digits = n as i32 - 1 - x.abs().log10().floor() as i32;
    format!("{:.*}", digits.max(0) as usize, x)
}

fn c1_dac_scaling() -> Outcome {
    let p = DeviceParams::default();
    let mw = |bits| dac_power(bits, 10e9, &p).unwrap() * 1e3;
    let cases = [(14, "177.0"), (12, "44.25"), (10, "11.06")];
    all(cases
        .iter()
        .map(|&(bits, want)| {
            let got = sig_figs(mw(bits), DAC_SIG_FIGS);
            check(got == want, format!("{bits}-bit {got} mW (want {want})"))
        })
        .collect())
}

/// Independent form: total insertion loss in dB, converted once.
fn laser_oracle(m: u64, f_c: f64, b_out: u32, eta_laser: f64, p: &DeviceParams) -> f64 {
    let loss_db = p.eta_mod_db + p.eta_cpl_db + p.mzi_loss_db * (2 * m + 1) as f64;
    let snr = p.kappa * (1u64 << b_out) as f64;
    snr.powi(2) * p.q * f_c / 4.0 * 10f64.powf(loss_db / 10.0) / (p.eta_det * eta_laser)
}

fn c2_laser_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(2..=512u64);
        let f_c = rng.random_range(0.5e9..20e9);
        let b_out = rng.random_range(4..=12u32);
        let eta = rng.random_range(0.05..0.5);
        let p = DeviceParams {
            b_out,
            eta_laser: eta,
            ..DeviceParams::default()
        };
        let got = laser_power_per_channel(m, f_c, &p);
        let want = laser_oracle(m, f_c, b_out, eta, &p);
        worst = worst.max(((got - want) / want).abs());
    }
    let p = DeviceParams::default();
    let mut ratio_err: f64 = 0.0;
    for m in [4u64, 16, 64, 128, 256] {
        let ratio = laser_power_per_channel(2 * m, 10e9, &p) / laser_power_per_channel(m, 10e9, &p);
        let want = 10f64.powf(0.008 * m as f64);
        ratio_err = ratio_err.max(((ratio - want) / want).abs());
    }
    all(vec![
        check(worst <= LASER_REL_TOL, format!("max rel err vs oracle {worst:.2e}")),
        check(ratio_err <= LASER_REL_TOL, format!("P(2m)/P(m) rel err {ratio_err:.2e}")),
    ])
}

fn c3_mesh_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut counts_ok = true;
    for m in [4usize, 8, 16, 32] {
        for _ in 0..50 {
            let tile = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let v = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let program = program_tile(&tile).unwrap();
            let out = DVector::from_vec(mesh_forward(&program, v.as_slice(), None).unwrap());
            let want = &tile * &v;
            worst = worst.max((out - &want).norm() / want.norm());
        }
        let q = random_orthogonal(m, &mut rng);
        counts_ok &= clements_decompose(&q).unwrap().phases.len() == m * (m - 1) / 2;
    }
    all(vec![
        check(worst <= MESH_REL_TOL, format!("max rel MVM err {worst:.2e}")),
        check(counts_ok, "phase count m(m-1)/2"),
    ])
}

fn c4_precision() -> Outcome {
    let p = DeviceParams::default();
    let noise = NoiseSpec {
        eps_phi: p.eps_phi,
        eps_dc: 1e-3,
        b_in: 10,
        b_w: Some(12),
        programming: ProgrammingMode::ErrorCorrected,
        ..NoiseSpec::ideal(4)
    };
    let s32 = output_error_study(32, &noise, PRECISION_TRIALS);
    let s64 = output_error_study(64, &noise, PRECISION_TRIALS);
    // RMS² = a + b·m through the two points, extrapolated to m = 256.
    let slope = (s64.mean_sq_error - s32.mean_sq_error) / 32.0;
    let rms256 = (s64.mean_sq_error + slope * 192.0).max(0.0).sqrt();
    let model_bits = photosim_core::mesh::estimate_output_bits(256, &noise, ProgrammingMode::ErrorCorrected, &p.mesh_error);
    all(vec![
        check(s32.rms_error <= PRECISION_TARGET, format!("m=32 rms {:.3e}", s32.rms_error)),
        check(s64.rms_error <= PRECISION_TARGET, format!("m=64 rms {:.3e}", s64.rms_error)),
        check(rms256 <= PRECISION_TARGET, format!("extrapolated m=256 rms {rms256:.3e}")),
        check(model_bits >= 8.0, format!("model bits at 256: {model_bits:.2}")),
    ])
}

fn c5_naive_slope() -> Outcome {
    let noise = NoiseSpec {
        eps_phi: 1e-3,
        ..NoiseSpec::ideal(5)
    };
    let d: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&m| measure_matrix_error(m, &noise, SLOPE_TRIALS).mean)
        .collect();
    let in_range = |r: f64| (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&r);
    let (r1, r2) = (d[1] / d[0], d[2] / d[1]);
    all(vec![
        check(in_range(r1), format!("8->16 ratio {r1:.3}")),
        check(in_range(r2), format!("16->32 ratio {r2:.3}")),
    ])
}

fn random_instance(rng: &mut ChaCha8Rng) -> (MemoryTrace, f64, f64, f64) {
    let n = rng.random_range(1..=12usize);
    let cap = rng.random_range(1..=16u32);
    let usage = (0..n).map(|_| f64::from(rng.random_range(0..=cap))).collect();
    (
        MemoryTrace { dt: 1.0, usage },
        f64::from(rng.random_range(0..=16u32)),
        f64::from(cap),
        f64::from(rng.random_range(1..=16u32)),
    )
}

fn c6_buffering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..BUFFER_INSTANCES {
        let (trace, input, cap, bw) = random_instance(&mut rng);
        let s = solve_schedule(&trace, input, cap, bw).unwrap();
        if !verify_optimal(&trace, input, cap, bw, &s).unwrap() {
            mismatches += 1;
        }
    }
    let mut parts = vec![check(
        mismatches == 0,
        format!("{BUFFER_INSTANCES} instances, {mismatches} mismatches"),
    )];
    let cfg = SimConfig::default();
    let digital = cfg.digital();
    for name in WORKLOADS {
        let w = workload(name);
        let profile = WorkloadProfile {
            workload: &w,
            cfg: &cfg.accelerator,
            digital: &digital,
            opts: TimingOptions::default(),
            bins: cfg.run.bins,
        };
        let x_max = cfg.accelerator.act_sram_bytes as f64;
        let opt = max_batch(&profile, x_max, cfg.accelerator.pcie_bytes_per_sec).unwrap().batch;
        let dbl = double_buffering_batch(&profile, x_max).unwrap();
        parts.push(check(dbl <= opt, format!("{name} double {dbl} <= optimized {opt}")));
    }
    let flat = FlatProfile {
        per_sample: 1e6,
        bins: 100,
        dt: 1e-6,
    };
    let opt = max_batch(&flat, 10e6, 1e15).unwrap().batch;
    let dbl = double_buffering_batch(&flat, 10e6).unwrap();
    parts.push(check(opt == 2 * dbl, format!("flat optimized {opt} / double {dbl}")));
    all(parts)
}

fn fixed(batch: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.run.batch = Some(batch);
    cfg
}

fn ips(w: &Workload, cfg: &SimConfig) -> f64 {
    run_simulation(w, cfg).unwrap().derived.ips
}

fn c7_throughput_shape() -> Outcome {
    let mut parts = Vec::new();
    for name in WORKLOADS {
        let w = workload(name);
        let cap = run_simulation(&w, &SimConfig::default()).unwrap().batch.batch;
        let mut batches = vec![];
        let mut b = 1;
        while b <= cap {
            batches.push(b);
            b *= 2;
        }
        let curve: Vec<f64> = batches.iter().map(|&b| ips(&w, &fixed(b))).collect();
        let nondecreasing = curve.windows(2).all(|p| p[1] >= p[0]);
        let ratios: Vec<f64> = curve.windows(2).map(|p| p[1] / p[0]).collect();
        let ratios_shrink = ratios.windows(2).all(|r| r[1] <= r[0] * (1.0 + 1e-9));
        parts.push(check(
            nondecreasing && ratios_shrink,
            format!(
                "{name} ips over batch {batches:?}: nondecreasing={nondecreasing}, doubling gains shrink={ratios_shrink}"
            ),
        ));

        // Difference form: equal batch steps buy no more throughput as batch grows.
        let step = (cap / LINEAR_POINTS).max(1);
        let linear: Vec<f64> = (1..=LINEAR_POINTS).map(|k| ips(&w, &fixed(k * step))).collect();
        let diffs: Vec<f64> = linear.windows(2).map(|p| p[1] - p[0]).collect();
        let worst_rise = diffs
            .windows(2)
            .map(|d| (d[1] - d[0]) / linear[0])
            .fold(f64::NEG_INFINITY, f64::max);
        parts.push(check(
            worst_rise <= CONCAVITY_TOL,
            format!("{name} ips increments per +{step} batch nonincreasing (worst rise {worst_rise:.1e})"),
        ));

        // Plateau: the capacity batch already gets most of the large-batch throughput.
        let mut roomy = fixed(64 * cap);
        roomy.accelerator.act_sram_bytes = u64::MAX / 4;
        let frac = curve.last().unwrap() / ips(&w, &roomy);
        parts.push(check(
            frac >= PLATEAU_FRACTION,
            format!("{name} ips at batch {cap} is {:.1}% of ips at batch {}", 100.0 * frac, 64 * cap),
        ));

        let mut slow = fixed(8);
        slow.accelerator.f_c = 1e9;
        let fast = fixed(8);
        let tiles = w.lower().iter().map(|g| photosim_core::workload::plan_tiles(g, 128).total_tiles).sum::<u64>();
        let (i1, i10) = (ips(&w, &slow), ips(&w, &fast));
        parts.push(check(
            tiles >= 2 && i10 < 10.0 * i1,
            format!("{name} 10GHz/1GHz ips ratio {:.3}", i10 / i1),
        ));
    }
    let w = workload("resnet50");
    let mut sa = fixed(4);
    sa.accelerator.core = CoreType::SystolicArray;
    sa.accelerator.f_c = sa.accelerator.sa_clock_hz;
    let base = ips(&w, &sa);
    let mut worst: f64 = 0.0;
    for k in [2.0, 4.0, 10.0] {
        let mut cfg = sa.clone();
        cfg.accelerator.f_c = k * cfg.accelerator.sa_clock_hz;
        worst = worst.max((ips(&w, &cfg) / base / k - 1.0).abs());
    }
    parts.push(check(
        worst <= SA_LINEAR_REL_TOL,
        format!("systolic ips linear in replicas, rel dev {worst:.1e}"),
    ));
    all(parts)
}

fn c8_sweep() -> Outcome {
    let w = workload("resnet50");
    let base = SimConfig::default();
    let mut axes = SweepAxes::from_config(&base);
    axes.m = vec![64, 128, 256];
    let rows = run_sweep(&w, &base, &axes).unwrap();
    let reports: Vec<&SimReport> = rows.iter().map(|r| r.report.as_ref().expect("sweep point runs")).collect();
    let eff: Vec<f64> = reports.iter().map(|r| r.derived.ips_per_w).collect();
    let share: Vec<f64> = reports.iter().map(|r| r.laser_share()).collect();
    let best = eff
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| axes.m[i])
        .unwrap();
    all(vec![
        check(
            best == 128,
            format!("ips/W {:.4e} {:.4e} {:.4e} -> best m={best}", eff[0], eff[1], eff[2]),
        ),
        check(
            share[0] < share[1] && share[1] < share[2],
            format!(
                "laser share {:.3} {:.3} {:.3}",
                share[0], share[1], share[2]
            ),
        ),
    ])
}

fn c9_parallelism() -> Outcome {
    let mut parts = Vec::new();
    let n = 4;
    for name in WORKLOADS {
        let w = workload(name);
        let mut data = fixed(16);
        data.accelerator.parallel_mode = ParallelMode::Data;
        data.accelerator.n_cores = n;
        let mut wdm = fixed(16);
        wdm.accelerator.parallel_mode = ParallelMode::Wdm;
        wdm.accelerator.n_wdm = n;
        let rd = run_simulation(&w, &data).unwrap();
        let rw = run_simulation(&w, &wdm).unwrap();
        parts.push(check(
            rd.total_cycles == rw.total_cycles,
            format!("{name} data({n}) {} vs wdm({n}) {} cycles", rd.total_cycles, rw.total_cycles),
        ));
        if name == "resnet50" {
            let m = data.accelerator.m;
            let zeta = data.accelerator.zeta;
            let mzis = rd.power.devices.mzis - rw.power.devices.mzis;
            let dacs = rd.power.devices.weight_dacs - rw.power.devices.weight_dacs;
            parts.push(check(
                mzis == (n - 1) * m * m && dacs == (n - 1) * (m * m).div_ceil(zeta),
                format!("wdm saves {mzis} MZIs and {dacs} weight DACs"),
            ));
        }
    }
    let layer = Workload {
        name: "six_tiles".into(),
        layers: vec![LayerSpec::new(
            LayerKind::Dense(DenseDims {
                in_features: 200,
                out_features: 300,
            }),
            1,
        )],
    };
    let one = fixed(64);
    let mut tile = fixed(64);
    tile.accelerator.parallel_mode = ParallelMode::Tile;
    tile.accelerator.n_cores = 16;
    let cycles = |cfg: &SimConfig| -> u64 {
        simulate_workload(&layer.with_batch(64), &cfg.accelerator, &cfg.digital(), TimingOptions::default())
            .unwrap()
            .iter()
            .map(|t| t.total_cycles)
            .sum()
    };
    let speedup = cycles(&one) as f64 / cycles(&tile) as f64;
    parts.push(check(speedup <= 6.0, format!("6-tile layer on 16 cores: speedup {speedup:.3}")));
    all(parts)
}

fn c10_ablation() -> Outcome {
    let mut parts = Vec::new();
    for name in WORKLOADS {
        let w = workload(name);
        let on = fixed(8);
        let mut off = fixed(8);
        off.run.pipelining = false;
        let ron = run_simulation(&w, &on).unwrap();
        let roff = run_simulation(&w, &off).unwrap();
        let mut per_layer_ok = true;
        for (a, b) in ron.layers.iter().zip(&roff.layers) {
            per_layer_ok &= a.total_cycles <= b.total_cycles;
            if a.nongemm_cycles > 0 {
                per_layer_ok &= a.total_cycles < b.total_cycles;
            }
        }
        parts.push(check(
            per_layer_ok && ron.total_cycles < roff.total_cycles,
            format!("{name} pipelining {} < {} cycles", ron.total_cycles, roff.total_cycles),
        ));

        // Cycles per inference at each configuration's own batch.
        let mut base = SimConfig::default();
        base.run.pipelining = false;
        base.run.optimized_buffering = false;
        let mut pipe = base.clone();
        pipe.run.pipelining = true;
        let mut full = pipe.clone();
        full.run.optimized_buffering = true;
        let per_inf = |cfg: &SimConfig| {
            let r = run_simulation(&w, cfg).unwrap();
            (r.total_cycles as f64 / r.batch.batch as f64, r.derived.ips)
        };
        let (c0, _) = per_inf(&base);
        let (c1, i1) = per_inf(&pipe);
        let (c2, i2) = per_inf(&full);
        parts.push(check(
            c0 >= c1 && c1 >= c2,
            format!("{name} cycles/inference none {c0:.0} >= pipelined {c1:.0} >= +buffering {c2:.0}"),
        ));
        if name == "rnnt" {
            parts.push(check(
                i2 > i1,
                format!("rnnt optimized {i2:.1} ips > double buffering {i1:.1} ips ({:.1}% gain)", 100.0 * (i2 / i1 - 1.0)),
            ));
        }
    }
    all(parts)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("1 dac scaling", c1_dac_scaling, Duration::from_secs(1)),
        ("2 laser formula", c2_laser_formula, Duration::from_secs(1)),
        ("3 mesh round-trip", c3_mesh_round_trip, Duration::from_secs(30)),
        ("4 precision", c4_precision, Duration::from_secs(300)),
        ("5 naive noise slope", c5_naive_slope, Duration::from_secs(120)),
        ("6 buffering", c6_buffering, Duration::from_secs(120)),
        ("7 throughput shape", c7_throughput_shape, Duration::from_secs(60)),
        ("8 array-size sweep", c8_sweep, Duration::from_secs(120)),
        ("9 parallelism", c9_parallelism, Duration::from_secs(60)),
        ("10 ablation", c10_ablation, Duration::from_secs(120)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let ok = outcome.ok && elapsed <= budget;
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({:.2}s / {}s) {}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            outcome.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
