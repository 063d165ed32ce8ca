//! Numerical photonic core.
//!
//! A weight tile `W` is factored as `W = U Σ Vᵀ`. `Vᵀ` and `U` are realized as
//! rectangular MZI meshes and `Σ / σ_max` as a column of attenuators, so the
//! mesh computes `W v / σ_max` and the electronics multiply by `σ_max`.
//! Residual `±1` factors of both meshes are merged into a 0/π sign layer next
//! to the attenuators.

mod clements;
mod noise;

pub use clements::{
    apply_stages, clements_decompose, decompose, orthogonality_deviation, stage_count, Decomposition, MziPhase,
    Mzi2x2, SignSide,
};
pub use noise::{
    calibrate_constants, estimate_output_bits, measure_matrix_error, output_error_study, quantize, MatrixErrorStats,
    MeshErrorModel, NoiseSpec, OutputErrorStudy, ProgrammingMode,
};

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::MeshError;

#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    /// Nonincreasing.
    pub sigma: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub fn svd_decompose(tile: &DMatrix<f64>) -> Result<Svd, MeshError> {
    if tile.nrows() != tile.ncols() {
        return Err(MeshError::NotSquare {
            rows: tile.nrows(),
            cols: tile.ncols(),
        });
    }
    if tile.iter().any(|x| !x.is_finite()) {
        return Err(MeshError::NonFinite);
    }
    let mut svd = nalgebra::SVD::new(tile.clone(), true, true);
    svd.sort_by_singular_values();
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    Ok(Svd {
        u,
        sigma: svd.singular_values.iter().copied().collect(),
        vt,
    })
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Phase settings realizing one `m × m` tile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseProgram {
    pub m: usize,
    pub scale: f64,
    /// Output-side mesh, applied last.
    pub phi_u: Vec<MziPhase>,
    /// Attenuator transmissions in `[0, 1]`.
    pub sigma: Vec<f64>,
    /// `Vᵀ` mesh, applied first.
    pub phi_v: Vec<MziPhase>,
    /// `±1` per mode, applied with the attenuators.
    pub signs: Vec<f64>,
}

impl PhaseProgram {
    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
    }

    /// Number of programmed analog values (mesh phases plus attenuators).
    pub fn programmed_values(&self) -> usize {
        self.phi_u.len() + self.phi_v.len() + self.sigma.len()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let m = self.m;
        let bad = |msg: String| Err(MeshError::Program(msg));
        if m == 0 {
            return bad("m must be >= 1".into());
        }
        for (name, phases) in [("phi_u", &self.phi_u), ("phi_v", &self.phi_v)] {
            if phases.len() != stage_count(m) {
                return bad(format!("{name} has {} entries, expected {}", phases.len(), stage_count(m)));
            }
            let mut seen = std::collections::HashSet::new();
            for p in phases {
                if p.layer >= m || p.mode() + 1 >= m || !p.phi.is_finite() {
                    return bad(format!("{name} entry ({}, {}) is off the lattice", p.layer, p.pos));
                }
                if !seen.insert((p.layer, p.pos)) {
                    return bad(format!("{name} entry ({}, {}) repeated", p.layer, p.pos));
                }
            }
            if phases.windows(2).any(|w| (w[0].layer, w[0].pos) > (w[1].layer, w[1].pos)) {
                return bad(format!("{name} is not sorted by (layer, pos)"));
            }
        }
        if self.sigma.len() != m || self.signs.len() != m {
            return bad(format!("sigma and signs must have {m} entries"));
        }
        if self.sigma.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("attenuator value outside [0, 1]".into());
        }
        if self.signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return bad("signs must be +1 or -1".into());
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return bad("scale must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let p: PhaseProgram = serde_json::from_str(text).map_err(|e| MeshError::Program(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// The ideal mesh as programmed.
    pub fn realize_ideal(&self) -> RealizedMesh {
        RealizedMesh {
            m: self.m,
            v_stages: self.phi_v.clone(),
            attenuation: self.sigma.iter().zip(&self.signs).map(|(s, g)| s * g).collect(),
            u_stages: self.phi_u.clone(),
        }
    }

    /// One hardware realization under `noise`, drawing from `rng` in lattice order.
    pub fn realize<R: Rng + ?Sized>(&self, noise: &NoiseSpec, rng: &mut R) -> RealizedMesh {
        let stages = |phases: &[MziPhase], rng: &mut R| -> Vec<MziPhase> {
            phases
                .iter()
                .map(|p| {
                    let eps: f64 = noise.eps_phi * rng.sample::<f64, _>(StandardNormal);
                    let d_in: f64 = noise.eps_dc * rng.sample::<f64, _>(StandardNormal);
                    let d_out: f64 = noise.eps_dc * rng.sample::<f64, _>(StandardNormal);
                    // Coupler angle errors act as extra rotations on the pair:
                    // Rot(d_out)·T(φ)·Rot(d_in) = T(φ - d_out + d_in).
                    let coupler = d_in - d_out;
                    let target = match noise.programming {
                        ProgrammingMode::Naive => p.phi,
                        ProgrammingMode::ErrorCorrected => p.phi - coupler,
                    };
                    let programmed = noise.quantize_phase(target);
                    MziPhase {
                        phi: programmed + eps + coupler,
                        ..*p
                    }
                })
                .collect()
        };
        let v_stages = stages(&self.phi_v, rng);
        let attenuation = self
            .sigma
            .iter()
            .zip(&self.signs)
            .map(|(s, g)| {
                let theta = noise.quantize_attenuator(s.clamp(0.0, 1.0).asin());
                let eps: f64 = noise.eps_phi * rng.sample::<f64, _>(StandardNormal);
                g * (theta + eps).sin()
            })
            .collect();
        let u_stages = stages(&self.phi_u, rng);
        RealizedMesh {
            m: self.m,
            v_stages,
            attenuation,
            u_stages,
        }
    }
}

/// Effective stage phases and signed attenuations of one physical mesh.
#[derive(Clone, Debug)]
pub struct RealizedMesh {
    pub m: usize,
    pub v_stages: Vec<MziPhase>,
    pub attenuation: Vec<f64>,
    pub u_stages: Vec<MziPhase>,
}

impl RealizedMesh {
    pub fn apply(&self, x: &mut [f64]) {
        apply_vec(&self.v_stages, x);
        for (xi, a) in x.iter_mut().zip(&self.attenuation) {
            *xi *= a;
        }
        apply_vec(&self.u_stages, x);
    }

    /// The normalized matrix realized by the mesh (scale not applied).
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::identity(self.m, self.m);
        apply_stages(&self.v_stages, &mut out);
        for (i, a) in self.attenuation.iter().enumerate() {
            out.row_mut(i).scale_mut(*a);
        }
        apply_stages(&self.u_stages, &mut out);
        out
    }
}

fn apply_vec(stages: &[MziPhase], x: &mut [f64]) {
    for p in stages {
        let k = p.mode();
        let (a, b) = Mzi2x2::new(p.phi).apply(x[k], x[k + 1]);
        x[k] = a;
        x[k + 1] = b;
    }
}

fn zero_program(m: usize) -> PhaseProgram {
    let eye = DMatrix::identity(m, m);
    let u = decompose(&eye, SignSide::Input).expect("identity is orthogonal");
    let v = decompose(&eye, SignSide::Output).expect("identity is orthogonal");
    PhaseProgram {
        m,
        scale: 0.0,
        phi_u: u.phases,
        sigma: vec![0.0; m],
        phi_v: v.phases,
        signs: vec![1.0; m],
    }
}

/// Factors a tile into mesh phases. An all-zero tile gives the zero program.
pub fn program_tile(tile: &DMatrix<f64>) -> Result<PhaseProgram, MeshError> {
    let svd = svd_decompose(tile)?;
    let m = tile.nrows();
    let scale = svd.sigma.first().copied().unwrap_or(0.0);
    if scale == 0.0 {
        return Ok(zero_program(m));
    }
    // U carries its signs on the input side and Vᵀ on the output side, so both
    // land next to Σ.
    let u = decompose(&svd.u, SignSide::Input)?;
    let v = decompose(&svd.vt, SignSide::Output)?;
    let sigma = svd.sigma.iter().map(|s| (s / scale).clamp(0.0, 1.0)).collect();
    let signs = u.signs.iter().zip(&v.signs).map(|(a, b)| a * b).collect();
    Ok(PhaseProgram {
        m,
        scale,
        phi_u: u.phases,
        sigma,
        phi_v: v.phases,
        signs,
    })
}

/// Attenuator phase for transmission `s`, i.e. `s = sin θ` with `θ ∈ [0, π/2]`.
pub fn attenuator_phase(s: f64) -> f64 {
    s.clamp(0.0, 1.0).asin().min(FRAC_PI_2)
}

/// Propagates one vector. With `noise`, the input is quantized to `b_in`
/// bits, the mesh is perturbed (seeded by `noise.seed`) and the normalized
/// output is quantized to `b_out` bits before rescaling.
pub fn mesh_forward(program: &PhaseProgram, v_in: &[f64], noise: Option<&NoiseSpec>) -> Result<Vec<f64>, MeshError> {
    if v_in.len() != program.m {
        return Err(MeshError::Dimension {
            expected: program.m,
            got: v_in.len(),
        });
    }
    if program.is_zero() {
        return Ok(vec![0.0; program.m]);
    }
    let mut x = v_in.to_vec();
    match noise {
        None => program.realize_ideal().apply(&mut x),
        Some(spec) => {
            spec.validate()?;
            x.iter_mut().for_each(|xi| *xi = quantize(*xi, spec.b_in));
            let mut rng = spec.rng(0);
            program.realize(spec, &mut rng).apply(&mut x);
            x.iter_mut().for_each(|xi| *xi = quantize(*xi, spec.b_out));
        }
    }
    x.iter_mut().for_each(|xi| *xi *= program.scale);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_matrix(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..=1.0))
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd_decompose(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0, 1.0]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let s = svd_decompose(&d).unwrap();
        for (got, want) in s.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = uniform_matrix(8, &mut rng);
        let s = svd_decompose(&a).unwrap();
        let back = &s.u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.sigma.clone())) * &s.vt;
        assert!((back - &a).abs().max() <= 1e-10 * a.abs().max());
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(orthogonality_deviation(&s.u) < 1e-10);
        assert!(orthogonality_deviation(&s.vt) < 1e-10);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert_eq!(svd_decompose(&a).unwrap_err(), MeshError::NonFinite);
    }

    #[test]
    fn identity_and_scaled_identity_programs() {
        let p = program_tile(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(p.scale, 1.0);
        assert!(p.sigma.iter().all(|s| (s - 1.0).abs() < 1e-12));
        let p = program_tile(&(DMatrix::identity(4, 4) * 2.0)).unwrap();
        assert!((p.scale - 2.0).abs() < 1e-12);
        assert!(p.sigma.iter().all(|s| (s - 1.0).abs() < 1e-12));
        let out = mesh_forward(&p, &[1.0, 0.0, 0.0, 0.0], None).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12 && out[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn program_counts_match_tile_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = program_tile(&uniform_matrix(6, &mut rng)).unwrap();
        assert_eq!(p.programmed_values(), 36);
        p.validate().unwrap();
    }

    #[test]
    fn zero_tile_gives_zero_program() {
        let p = program_tile(&DMatrix::zeros(4, 4)).unwrap();
        assert!(p.is_zero());
        assert!(p.sigma.iter().all(|s| *s == 0.0));
        p.validate().unwrap();
        assert_eq!(mesh_forward(&p, &[0.3, -0.2, 1.0, 0.5], None).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = uniform_matrix(8, &mut rng);
        let p = program_tile(&a).unwrap();
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let got = mesh_forward(&p, &v, None).unwrap();
        let want = &a * nalgebra::DVector::from_vec(v);
        let err = (nalgebra::DVector::from_vec(got) - &want).norm() / want.norm();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn dimension_mismatch() {
        let p = program_tile(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(
            mesh_forward(&p, &[1.0], None).unwrap_err(),
            MeshError::Dimension { expected: 3, got: 1 }
        );
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = program_tile(&uniform_matrix(5, &mut rng)).unwrap();
        let back = PhaseProgram::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert!(v["phi_u"][0].is_array());
    }

    #[test]
    fn json_rejects_bad_lattice() {
        let p = program_tile(&DMatrix::identity(3, 3)).unwrap();
        let mut bad = p.clone();
        bad.phi_u.pop();
        assert!(PhaseProgram::from_json(&bad.to_json()).is_err());
        let mut bad = p;
        bad.sigma[0] = 1.5;
        assert!(PhaseProgram::from_json(&bad.to_json()).is_err());
    }
}
