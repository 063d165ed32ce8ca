//! Hardware noise, quantization and the output-precision model.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{program_tile, random_orthogonal};
use crate::error::MeshError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgrammingMode {
    /// Phases are written as decomposed; coupler errors go uncorrected.
    #[default]
    Naive,
    /// Each MZI phase is offset to cancel its own measured coupler errors.
    ErrorCorrected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Std-dev of the per-MZI phase error, radians.
    pub eps_phi: f64,
    /// Std-dev of each coupler's mixing-angle error, radians.
    pub eps_dc: f64,
    pub b_in: u32,
    pub b_out: u32,
    pub seed: u64,
    /// Weight-DAC resolution for phase programming; `None` is exact.
    #[serde(default)]
    pub b_w: Option<u32>,
    #[serde(default)]
    pub programming: ProgrammingMode,
}

impl NoiseSpec {
    /// No analog noise, 16-bit converters.
    pub fn ideal(seed: u64) -> Self {
        Self {
            eps_phi: 0.0,
            eps_dc: 0.0,
            b_in: 16,
            b_out: 16,
            seed,
            b_w: None,
            programming: ProgrammingMode::Naive,
        }
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let err = |s: &str| Err(MeshError::Noise(s.into()));
        if !(self.eps_phi.is_finite() && self.eps_phi >= 0.0) {
            return err("eps_phi must be finite and >= 0");
        }
        if !(self.eps_dc.is_finite() && self.eps_dc >= 0.0) {
            return err("eps_dc must be finite and >= 0");
        }
        if !(1..=16).contains(&self.b_in) || !(1..=16).contains(&self.b_out) {
            return err("b_in and b_out must be in 1..=16");
        }
        if matches!(self.b_w, Some(b) if !(1..=24).contains(&b)) {
            return err("b_w must be in 1..=24");
        }
        Ok(())
    }

    /// Independent stream per trial index.
    pub fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Rounds to the nearest multiple of `π / 2^b_w`.
    pub fn quantize_phase(&self, phi: f64) -> f64 {
        match self.b_w {
            None => phi,
            Some(b) => {
                let step = PI / f64::from(1u32 << b);
                (phi / step).round() * step
            }
        }
    }

    /// Rounds an attenuator angle in `[0, π/2]` to `2^b_w` steps.
    pub fn quantize_attenuator(&self, theta: f64) -> f64 {
        match self.b_w {
            None => theta,
            Some(b) => {
                let step = FRAC_PI_2 / f64::from(1u32 << b);
                ((theta / step).round() * step).clamp(0.0, FRAC_PI_2)
            }
        }
    }
}

/// Symmetric mid-rise quantizer over `[-1, 1]` with saturation.
pub fn quantize(x: f64, bits: u32) -> f64 {
    let levels = f64::from(1u32 << bits);
    let step = 2.0 / levels;
    let k = (x / step).floor().clamp(-levels / 2.0, levels / 2.0 - 1.0);
    (k + 0.5) * step
}

/// Constants of `ΔM² = c1·m·ε_φ² + c2·m·ε_dc²` (naive) or
/// `c1·m·ε_φ² + c3·m²·ε_dc⁴` (error-corrected).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshErrorModel {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for MeshErrorModel {
    /// Output of `calibrate_constants(400, 2024)`.
    fn default() -> Self {
        Self {
            c1: 1.9604,
            c2: 3.9026,
            c3: 3.9026,
        }
    }
}

impl MeshErrorModel {
    pub fn delta_m_sq(&self, m: usize, noise: &NoiseSpec, mode: ProgrammingMode) -> f64 {
        let m = m as f64;
        let phase = self.c1 * m * noise.eps_phi.powi(2);
        let coupler = match mode {
            ProgrammingMode::Naive => self.c2 * m * noise.eps_dc.powi(2),
            ProgrammingMode::ErrorCorrected => self.c3 * m * m * noise.eps_dc.powi(4),
        };
        phase + coupler
    }
}

/// Effective output bits from `Δv_out² = Δv_in² + ΔM²`, floored at 0.
pub fn estimate_output_bits(m: usize, noise: &NoiseSpec, mode: ProgrammingMode, model: &MeshErrorModel) -> f64 {
    let dv_in = 2f64.powi(-(noise.b_in as i32));
    let dv_out = (dv_in * dv_in + model.delta_m_sq(m, noise, mode)).sqrt();
    (-dv_out.log2()).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixErrorStats {
    pub m: usize,
    pub mean: f64,
    pub samples: Vec<f64>,
}

/// Monte-Carlo `ΔM² = ‖M̃ - M‖_F² / m` over random orthogonal tiles, where `M̃`
/// is one noisy realization under the programming mode of `noise`.
/// Trial `i` uses stream `i` of `noise.seed`, so results do not depend on
/// thread scheduling.
pub fn measure_matrix_error(m: usize, noise: &NoiseSpec, trials: usize) -> MatrixErrorStats {
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = noise.rng(trial);
            let q = random_orthogonal(m, &mut rng);
            let program = program_tile(&q).expect("orthogonal tile programs");
            let realized = program.realize(noise, &mut rng).matrix() * program.scale;
            (realized - &q).norm_squared() / m as f64
        })
        .collect();
    let mean = if samples.is_empty() {
        0.0
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    };
    MatrixErrorStats { m, mean, samples }
}

/// Least-squares fit of the mesh error constants at `m ∈ {8, 16, 32, 64}`.
/// `c3` cannot be observed without an error-corrected programming algorithm
/// and is set equal to `c2`.
pub fn calibrate_constants(trials: usize, seed: u64) -> MeshErrorModel {
    let eps = 1e-3;
    let sizes = [8usize, 16, 32, 64];
    let fit = |phase: bool| {
        let mut num = 0.0;
        let mut den = 0.0;
        for &m in &sizes {
            let mut noise = NoiseSpec::ideal(seed);
            if phase {
                noise.eps_phi = eps;
            } else {
                noise.eps_dc = eps;
            }
            let x = m as f64 * eps * eps;
            num += x * measure_matrix_error(m, &noise, trials).mean;
            den += x * x;
        }
        num / den
    };
    let c1 = fit(true);
    let c2 = fit(false);
    MeshErrorModel { c1, c2, c3: c2 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputErrorStudy {
    pub m: usize,
    pub trials: usize,
    pub mean_sq_error: f64,
    pub rms_error: f64,
    pub effective_bits: f64,
}

/// Per-element RMS error of the normalized analog output.
///
/// Each trial draws a tile with entries uniform in `[-1, 1]` and an input with
/// entries uniform in `[-1, 1]`, quantizes the input to `b_in` bits, pushes it
/// through one noisy realization and compares against `W v / σ_max`. The
/// output ADC is not applied; `b_out` plays no role here.
pub fn output_error_study(m: usize, noise: &NoiseSpec, trials: usize) -> OutputErrorStudy {
    let per_trial: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = noise.rng(trial);
            let tile = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..=1.0));
            let v = DVector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0));
            let program = program_tile(&tile).expect("finite tile programs");
            let ideal = &tile * &v / program.scale;
            let mut x: Vec<f64> = v.iter().map(|vi| quantize(*vi, noise.b_in)).collect();
            program.realize(noise, &mut rng).apply(&mut x);
            (DVector::from_vec(x) - ideal).norm_squared() / m as f64
        })
        .collect();
    let mean_sq_error = per_trial.iter().sum::<f64>() / trials.max(1) as f64;
    let rms_error = mean_sq_error.sqrt();
    OutputErrorStudy {
        m,
        trials,
        mean_sq_error,
        rms_error,
        effective_bits: if rms_error > 0.0 { -rms_error.log2() } else { f64::INFINITY },
    }
}
