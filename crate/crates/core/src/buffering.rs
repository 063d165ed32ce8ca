//! Next-batch input transfer scheduling and batch-size search.
//!
//! Given activation usage `x_c(t)` per bin, capacity `x_max` and a per-bin
//! transfer cap `bw·dt`, choose cumulative transfers `x(t)` that reach
//! `x_input` by the last bin while maximizing `Σ_t x(t)` subject to
//! `x(t) ≥ x(t-1)`, `x(t) - x(t-1) ≤ bw·dt` and `x_c(t) + x(t) ≤ x_max`.
//!
//! Transfers are irrevocable, so `x(t)` is bounded by the suffix minimum of
//! the headroom, `B(t) = min_{s≥t} (x_max - x_c(s))`. Taking
//! `x(t) = min(B(t), x(t-1) + bw·dt, x_input)` maximizes every prefix at once
//! and therefore the sum.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BufferingError, Error, Result};
use crate::nonlinear::DigitalUnitConfig;
use crate::timing::{build_memory_trace, simulate_workload, AcceleratorConfig, MemoryTrace, TimingOptions, ACT_BYTES};
use crate::workload::Workload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingReason {
    Capacity,
    Bandwidth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub bin: usize,
    pub reason: BindingReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferSchedule {
    pub dt: f64,
    /// Cumulative bytes transferred by the end of each bin.
    pub x_pcie: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    /// Where an infeasible schedule got stuck.
    pub binding: Option<Binding>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn solve_schedule(
    trace: &MemoryTrace,
    x_input: f64,
    x_max: f64,
    bw: f64,
) -> std::result::Result<TransferSchedule, BufferingError> {
    if trace.usage.is_empty() {
        return Err(BufferingError::EmptyTrace);
    }
    if !(bw > 0.0) {
        return Err(BufferingError::Bandwidth);
    }
    let n = trace.usage.len();
    let step = bw * trace.dt;
    let mut bound = vec![0.0f64; n];
    let mut running = f64::INFINITY;
    for t in (0..n).rev() {
        running = running.min(x_max - trace.usage[t]);
        bound[t] = running;
    }
    let mut x = Vec::with_capacity(n);
    let mut prev = 0.0f64;
    let mut last_capacity_bin = None;
    for (t, b) in bound.iter().enumerate() {
        let rate_cap = prev + step;
        let next = b.min(rate_cap).min(x_input).max(0.0);
        if *b < rate_cap && *b < x_input {
            last_capacity_bin = Some(t);
        }
        x.push(next);
        prev = next;
    }
    let overflow = trace.usage.iter().position(|u| *u > x_max);
    let reached = close(prev, x_input);
    let feasible = overflow.is_none() && reached;
    let binding = if let Some(bin) = overflow {
        Some(Binding {
            bin,
            reason: BindingReason::Capacity,
        })
    } else if !reached {
        match last_capacity_bin {
            Some(bin) if bound[n - 1] < x_input || bin == n - 1 => Some(Binding {
                bin,
                reason: BindingReason::Capacity,
            }),
            _ => Some(Binding {
                bin: n - 1,
                reason: BindingReason::Bandwidth,
            }),
        }
    } else {
        None
    };
    Ok(TransferSchedule {
        dt: trace.dt,
        objective: x.iter().sum(),
        x_pcie: x,
        feasible,
        binding,
    })
}

/// True if `schedule` satisfies every constraint of the instance.
pub fn schedule_is_valid(trace: &MemoryTrace, x_input: f64, x_max: f64, bw: f64, schedule: &[f64]) -> bool {
    if schedule.len() != trace.usage.len() {
        return false;
    }
    let step = bw * trace.dt;
    let mut prev = 0.0;
    for (x, u) in schedule.iter().zip(&trace.usage) {
        let eps = 1e-9 * x_max.abs().max(1.0);
        if *x < prev - eps || *x - prev > step + eps || u + x > x_max + eps || *x > x_input + eps {
            return false;
        }
        prev = *x;
    }
    close(prev, x_input)
}

fn as_small_int(x: f64, what: &str) -> std::result::Result<i64, BufferingError> {
    let r = x.round();
    if (x - r).abs() > 1e-9 || !(0.0..=16.0).contains(&r) {
        return Err(BufferingError::TooLarge(format!("{what} = {x} is not an integer in 0..=16")));
    }
    Ok(r as i64)
}

/// Exhaustive check of a schedule on a small integer instance (at most 12
/// bins, all quantities integers in `0..=16`). Returns true iff `schedule`
/// is valid and its objective equals the best over all integer schedules, or
/// `schedule` is marked infeasible and no valid schedule exists.
pub fn verify_optimal(
    trace: &MemoryTrace,
    x_input: f64,
    x_max: f64,
    bw: f64,
    schedule: &TransferSchedule,
) -> std::result::Result<bool, BufferingError> {
    let n = trace.usage.len();
    if n == 0 {
        return Err(BufferingError::EmptyTrace);
    }
    if n > 12 {
        return Err(BufferingError::TooLarge(format!("{n} bins (max 12)")));
    }
    let step = as_small_int(bw * trace.dt, "bw*dt")?;
    let cap = as_small_int(x_max, "x_max")?;
    let target = as_small_int(x_input, "x_input")?;
    let usage = trace
        .usage
        .iter()
        .map(|u| as_small_int(*u, "usage"))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    fn best(
        t: usize,
        prev: i64,
        usage: &[i64],
        step: i64,
        cap: i64,
        target: i64,
        memo: &mut HashMap<(usize, i64), Option<i64>>,
    ) -> Option<i64> {
        if t == usage.len() {
            return (prev == target).then_some(0);
        }
        if let Some(v) = memo.get(&(t, prev)) {
            return *v;
        }
        let hi = (prev + step).min(target).min(cap - usage[t]);
        let mut out = None;
        let mut x = prev;
        while x <= hi {
            if let Some(rest) = best(t + 1, x, usage, step, cap, target, memo) {
                out = Some(out.map_or(x + rest, |o: i64| o.max(x + rest)));
            }
            x += 1;
        }
        memo.insert((t, prev), out);
        out
    }

    let optimum = best(0, 0, &usage, step, cap, target, &mut HashMap::new());
    Ok(match optimum {
        None => !schedule.feasible,
        Some(opt) => {
            schedule.feasible
                && schedule_is_valid(trace, x_input, x_max, bw, &schedule.x_pcie)
                && close(schedule.objective, opt as f64)
        }
    })
}

/// Memory behaviour of a workload as a function of batch size.
pub trait BatchProfile: Sync {
    fn trace(&self, batch: u64) -> Result<MemoryTrace>;
    /// Bytes of network input for one batch.
    fn input_bytes(&self, batch: u64) -> f64;
}

pub struct WorkloadProfile<'a> {
    pub workload: &'a Workload,
    pub cfg: &'a AcceleratorConfig,
    pub digital: &'a DigitalUnitConfig,
    pub opts: TimingOptions,
    pub bins: usize,
}

impl BatchProfile for WorkloadProfile<'_> {
    fn trace(&self, batch: u64) -> Result<MemoryTrace> {
        let timelines = simulate_workload(&self.workload.with_batch(batch), self.cfg, self.digital, self.opts)?;
        build_memory_trace(&timelines, self.cfg.f_c, self.bins)
    }

    fn input_bytes(&self, batch: u64) -> f64 {
        (self.workload.with_batch(batch).input_elems() * ACT_BYTES) as f64
    }
}

/// Usage `batch · per_sample` in every bin except the last, which is empty.
pub struct FlatProfile {
    pub per_sample: f64,
    pub bins: usize,
    pub dt: f64,
}

impl BatchProfile for FlatProfile {
    fn trace(&self, batch: u64) -> Result<MemoryTrace> {
        let mut usage = vec![batch as f64 * self.per_sample; self.bins];
        if let Some(last) = usage.last_mut() {
            *last = 0.0;
        }
        Ok(MemoryTrace { dt: self.dt, usage })
    }

    fn input_bytes(&self, batch: u64) -> f64 {
        batch as f64 * self.per_sample
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchChoice {
    pub batch: u64,
    pub schedule: TransferSchedule,
    pub trace: MemoryTrace,
}

/// Candidate batches evaluated concurrently per step of the downward search.
const SEARCH_CHUNK: usize = 16;

fn no_batch(msg: String) -> Error {
    Error::Buffering(BufferingError::NoFeasibleBatch(msg))
}

/// Largest batch whose trace fits in `x_max` and whose next-batch input can be
/// scheduled. Searches downward from `⌊x_max / peak(1)⌋`.
pub fn max_batch(profile: &dyn BatchProfile, x_max: f64, bw: f64) -> Result<BatchChoice> {
    let one = profile.trace(1)?;
    let peak = one.peak();
    if peak > x_max {
        return Err(no_batch(format!(
            "single-sample peak {peak:.0} B exceeds capacity {x_max:.0} B"
        )));
    }
    let upper = if peak > 0.0 { (x_max / peak).floor() as u64 } else { 1 };
    let candidates: Vec<u64> = (1..=upper.max(1)).rev().collect();
    for chunk in candidates.chunks(SEARCH_CHUNK) {
        let results: Vec<Option<BatchChoice>> = chunk
            .par_iter()
            .map(|&batch| -> Result<Option<BatchChoice>> {
                let trace = profile.trace(batch)?;
                if trace.peak() > x_max {
                    return Ok(None);
                }
                let schedule = solve_schedule(&trace, profile.input_bytes(batch), x_max, bw)?;
                Ok(schedule.feasible.then_some(BatchChoice { batch, schedule, trace }))
            })
            .collect::<Result<_>>()?;
        if let Some(choice) = results.into_iter().flatten().next() {
            return Ok(choice);
        }
    }
    Err(no_batch(
        "no batch size admits a feasible next-batch transfer schedule".into(),
    ))
}

/// Largest batch whose peak usage fits in half of `x_max`; 0 if none.
pub fn double_buffering_batch(profile: &dyn BatchProfile, x_max: f64) -> Result<u64> {
    let half = x_max / 2.0;
    let peak = profile.trace(1)?.peak();
    if peak > half {
        return Ok(0);
    }
    let upper = if peak > 0.0 { (half / peak).floor() as u64 } else { 1 };
    for batch in (1..=upper.max(1)).rev() {
        if profile.trace(batch)?.peak() <= half {
            return Ok(batch);
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(usage: &[f64]) -> MemoryTrace {
        MemoryTrace {
            dt: 1.0,
            usage: usage.to_vec(),
        }
    }

    #[test]
    fn flat_trace_hand_example() {
        let t = trace(&[0.0; 10]);
        let s = solve_schedule(&t, 4.0, 10.0, 1.0).unwrap();
        assert_eq!(s.x_pcie, vec![1.0, 2.0, 3.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0]);
        assert_eq!(s.objective, 34.0);
        assert!(s.feasible);
        assert!(verify_optimal(&t, 4.0, 10.0, 1.0, &s).unwrap());
    }

    #[test]
    fn zero_input_is_all_zero() {
        let t = trace(&[3.0, 5.0, 1.0]);
        let s = solve_schedule(&t, 0.0, 10.0, 1.0).unwrap();
        assert_eq!(s.x_pcie, vec![0.0; 3]);
        assert!(s.feasible);
    }

    #[test]
    fn full_final_bin_is_infeasible() {
        let t = trace(&[0.0, 0.0, 10.0]);
        let s = solve_schedule(&t, 2.0, 10.0, 5.0).unwrap();
        assert!(!s.feasible);
        assert_eq!(
            s.binding,
            Some(Binding {
                bin: 2,
                reason: BindingReason::Capacity
            })
        );
        assert!(verify_optimal(&t, 2.0, 10.0, 5.0, &s).unwrap());
    }

    #[test]
    fn bandwidth_binding() {
        let t = trace(&[0.0, 0.0]);
        let s = solve_schedule(&t, 5.0, 10.0, 1.0).unwrap();
        assert!(!s.feasible);
        assert_eq!(s.binding.unwrap().reason, BindingReason::Bandwidth);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(
            solve_schedule(&trace(&[]), 1.0, 1.0, 1.0).unwrap_err(),
            BufferingError::EmptyTrace
        );
        assert_eq!(
            solve_schedule(&trace(&[0.0]), 1.0, 1.0, 0.0).unwrap_err(),
            BufferingError::Bandwidth
        );
        let big = trace(&[0.0; 13]);
        let s = solve_schedule(&big, 1.0, 4.0, 1.0).unwrap();
        assert!(matches!(verify_optimal(&big, 1.0, 4.0, 1.0, &s), Err(BufferingError::TooLarge(_))));
    }

    #[test]
    fn later_schedule_is_rejected() {
        let t = trace(&[0.0; 10]);
        let mut s = solve_schedule(&t, 4.0, 10.0, 1.0).unwrap();
        s.x_pcie[0] = 0.0;
        s.x_pcie[1] = 1.0;
        s.x_pcie[2] = 2.0;
        s.x_pcie[3] = 3.0;
        s.objective = s.x_pcie.iter().sum();
        assert!(schedule_is_valid(&t, 4.0, 10.0, 1.0, &s.x_pcie));
        assert!(!verify_optimal(&t, 4.0, 10.0, 1.0, &s).unwrap());
        s.x_pcie[5] = 9.0;
        assert!(!verify_optimal(&t, 4.0, 10.0, 1.0, &s).unwrap());
    }

    #[test]
    fn flat_profile_batches_halve() {
        let p = FlatProfile {
            per_sample: 1000.0,
            bins: 50,
            dt: 1e-6,
        };
        let x_max = 10_000.0;
        let opt = max_batch(&p, x_max, 1e12).unwrap();
        assert_eq!(opt.batch, 10);
        assert_eq!(double_buffering_batch(&p, x_max).unwrap(), 5);
    }

    #[test]
    fn capacity_below_one_sample() {
        let p = FlatProfile {
            per_sample: 1000.0,
            bins: 5,
            dt: 1.0,
        };
        assert_eq!(max_batch(&p, 500.0, 1e9).unwrap_err().exit_code(), 3);
        assert_eq!(double_buffering_batch(&p, 1500.0).unwrap(), 0);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, f64, f64, f64)> {
        (1usize..=12, 0u32..=16, 1u32..=16, 1u32..=16).prop_flat_map(|(n, input, cap, step)| {
            (
                prop::collection::vec((0u32..=cap).prop_map(f64::from), n),
                Just(f64::from(input)),
                Just(f64::from(cap)),
                Just(f64::from(step)),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn greedy_is_optimal((usage, input, cap, step) in instance()) {
            let t = trace(&usage);
            let s = solve_schedule(&t, input, cap, step).unwrap();
            prop_assert!(verify_optimal(&t, input, cap, step, &s).unwrap());
        }

        #[test]
        fn monotone_in_resources((usage, input, cap, step) in instance()) {
            let t = trace(&usage);
            let base = solve_schedule(&t, input, cap, step).unwrap();
            let wider = solve_schedule(&t, input, cap, step + 1.0).unwrap();
            let bigger = solve_schedule(&t, input, cap + 1.0, step).unwrap();
            if base.feasible {
                prop_assert!(wider.feasible && wider.objective >= base.objective);
                prop_assert!(bigger.feasible && bigger.objective >= base.objective);
            }
        }

        #[test]
        fn prefix_dominance((usage, input, cap, step) in instance(), picks in prop::collection::vec(0u32..=16, 12)) {
            // Any valid schedule built from arbitrary increments stays below greedy.
            let t = trace(&usage);
            let s = solve_schedule(&t, input, cap, step).unwrap();
            let mut y = Vec::new();
            let mut prev = 0.0f64;
            for (i, u) in usage.iter().enumerate() {
                let next = (prev + f64::from(picks[i]).min(step)).min(input).min(cap - u).max(prev);
                y.push(next);
                prev = next;
            }
            if schedule_is_valid(&t, input, cap, step, &y) {
                for (a, b) in s.x_pcie.iter().zip(&y) {
                    prop_assert!(a >= b);
                }
            }
        }
    }
}
