//! Real rectangular decomposition of orthogonal matrices into 2×2 MZI stages.
//!
//! Lattice convention: `m` layers, layer `l` position `p` couples modes
//! `(2p + l % 2, 2p + l % 2 + 1)`. Stages are applied in layer order; within a
//! layer they act on disjoint modes. Phases are normalized to `(-π/2, π/2]`
//! and the leftover `±1` factors form a diagonal sign layer on one side.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::MeshError;

/// Transfer matrix of one MZI: `[[sin φ, cos φ], [cos φ, -sin φ]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mzi2x2 {
    pub phi: f64,
}

impl Mzi2x2 {
    pub fn new(phi: f64) -> Self {
        Self { phi }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.phi.sin_cos();
        [[s, c], [c, -s]]
    }

    #[inline]
    pub fn apply(&self, a: f64, b: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (s * a + c * b, c * a - s * b)
    }
}

/// One placed MZI. Serialized as `[layer, pos, phi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct MziPhase {
    pub layer: usize,
    pub pos: usize,
    pub phi: f64,
}

impl From<(usize, usize, f64)> for MziPhase {
    fn from((layer, pos, phi): (usize, usize, f64)) -> Self {
        Self { layer, pos, phi }
    }
}

impl From<MziPhase> for (usize, usize, f64) {
    fn from(p: MziPhase) -> Self {
        (p.layer, p.pos, p.phi)
    }
}

impl MziPhase {
    /// Upper mode of the coupled pair.
    pub fn mode(&self) -> usize {
        2 * self.pos + self.layer % 2
    }
}

/// Which side of the mesh carries the residual sign diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignSide {
    /// `q = diag(signs) · mesh`
    Output,
    /// `q = mesh · diag(signs)`
    Input,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub m: usize,
    /// Sorted by `(layer, pos)`, which is also application order.
    pub phases: Vec<MziPhase>,
    pub signs: Vec<f64>,
    pub side: SignSide,
}

impl Decomposition {
    pub fn recompose(&self) -> DMatrix<f64> {
        let mut out = DMatrix::identity(self.m, self.m);
        if self.side == SignSide::Input {
            for (i, s) in self.signs.iter().enumerate() {
                out.row_mut(i).scale_mut(*s);
            }
        }
        apply_stages(&self.phases, &mut out);
        if self.side == SignSide::Output {
            for (i, s) in self.signs.iter().enumerate() {
                out.row_mut(i).scale_mut(*s);
            }
        }
        out
    }
}

/// Left-multiplies `x` by each stage in order.
pub fn apply_stages(phases: &[MziPhase], x: &mut DMatrix<f64>) {
    for p in phases {
        let k = p.mode();
        let t = Mzi2x2::new(p.phi);
        for col in 0..x.ncols() {
            let (a, b) = t.apply(x[(k, col)], x[(k + 1, col)]);
            x[(k, col)] = a;
            x[(k + 1, col)] = b;
        }
    }
}

pub fn stage_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// Largest entry of `|qᵀq - I|`.
pub fn orthogonality_deviation(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn clements_decompose(q: &DMatrix<f64>) -> Result<Decomposition, MeshError> {
    decompose(q, SignSide::Output)
}

pub fn decompose(q: &DMatrix<f64>, side: SignSide) -> Result<Decomposition, MeshError> {
    if q.nrows() != q.ncols() {
        return Err(MeshError::NotSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(MeshError::NonFinite);
    }
    let deviation = orthogonality_deviation(q);
    if deviation > 1e-8 {
        return Err(MeshError::NotOrthogonal { deviation });
    }
    let n = q.nrows();
    if n <= 1 {
        let signs = q.iter().map(|x| x.signum()).collect();
        return Ok(Decomposition {
            m: n,
            phases: Vec::new(),
            signs,
            side,
        });
    }

    let (right, left, d) = eliminate(q);

    // Application order: right stages first, then the left stages reversed,
    // with `d` between them. Move `d` to the requested side.
    let mut ops: Vec<(usize, f64)> = Vec::with_capacity(right.len() + left.len());
    match side {
        SignSide::Output => {
            ops.extend(right);
            ops.extend(left.into_iter().rev().map(|(k, phi)| (k, conjugate(phi, d[k], d[k + 1]))));
        }
        SignSide::Input => {
            ops.extend(right.into_iter().map(|(k, phi)| (k, conjugate(phi, d[k], d[k + 1]))));
            ops.extend(left.into_iter().rev());
        }
    }

    // Normalize phases, pushing the extracted -1 pairs toward the sign side.
    let mut pending = vec![1.0f64; n];
    let mut normalize = |op: &mut (usize, f64)| {
        let k = op.0;
        let mut phi = conjugate(op.1, pending[k], pending[k + 1]);
        phi = wrap(phi);
        if phi > FRAC_PI_2 {
            phi -= PI;
            pending[k] = -pending[k];
            pending[k + 1] = -pending[k + 1];
        } else if phi <= -FRAC_PI_2 {
            phi += PI;
            pending[k] = -pending[k];
            pending[k + 1] = -pending[k + 1];
        }
        op.1 = phi + 0.0;
    };
    match side {
        SignSide::Output => ops.iter_mut().for_each(&mut normalize),
        SignSide::Input => ops.iter_mut().rev().for_each(&mut normalize),
    }
    let signs: Vec<f64> = d.iter().zip(&pending).map(|(a, b)| a * b).collect();

    Ok(Decomposition {
        m: n,
        phases: place(n, &ops),
        signs,
        side,
    })
}

/// `diag(a,b)·T(φ) = T(φ')·diag(a,b)`, with `φ' = π - φ` when the signs differ.
fn conjugate(phi: f64, a: f64, b: f64) -> f64 {
    if a == b {
        phi
    } else {
        PI - phi
    }
}

/// Wraps into `(-π, π]`.
fn wrap(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(TAU);
    if x > PI {
        x -= TAU;
    }
    x
}

type Stages = Vec<(usize, f64)>;

/// Nulls the lower triangle by alternating column and row rotations.
/// Returns `(right, left, d)` with `q = L_1…L_K · diag(d) · R_n…R_1`.
fn eliminate(q: &DMatrix<f64>) -> (Stages, Stages, Vec<f64>) {
    let n = q.nrows();
    let mut u = q.clone();
    let mut right = Vec::new();
    let mut left = Vec::new();
    for i in 0..n - 1 {
        if i % 2 == 0 {
            for j in 0..=i {
                let (r, c) = (n - 1 - j, i - j);
                let phi = f64::atan2(-u[(r, c + 1)], u[(r, c)]);
                let t = Mzi2x2::new(phi);
                for row in 0..n {
                    let (a, b) = t.apply(u[(row, c)], u[(row, c + 1)]);
                    u[(row, c)] = a;
                    u[(row, c + 1)] = b;
                }
                right.push((c, phi));
            }
        } else {
            for j in 1..=i + 1 {
                let (r, c) = (n + j - i - 2, j - 1);
                let phi = f64::atan2(u[(r - 1, c)], u[(r, c)]);
                let t = Mzi2x2::new(phi);
                for col in 0..n {
                    let (a, b) = t.apply(u[(r - 1, col)], u[(r, col)]);
                    u[(r - 1, col)] = a;
                    u[(r, col)] = b;
                }
                left.push((r - 1, phi));
            }
        }
    }
    let d = (0..n).map(|i| if u[(i, i)] < 0.0 { -1.0 } else { 1.0 }).collect();
    (right, left, d)
}

/// Earliest-layer placement respecting per-mode order and lattice parity.
fn place(n: usize, ops: &[(usize, f64)]) -> Vec<MziPhase> {
    let mut next_free = vec![0usize; n];
    let mut placed: Vec<MziPhase> = ops
        .iter()
        .map(|&(k, phi)| {
            let mut layer = next_free[k].max(next_free[k + 1]);
            if layer % 2 != k % 2 {
                layer += 1;
            }
            next_free[k] = layer + 1;
            next_free[k + 1] = layer + 1;
            MziPhase { layer, pos: k / 2, phi }
        })
        .collect();
    debug_assert!(placed.iter().all(|p| p.layer < n), "placement left the rectangle");
    placed.sort_by_key(|p| (p.layer, p.pos));
    placed
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn mzi_matrix_is_symmetric_reflection() {
        for phi in [-1.3, 0.0, 0.4, 2.0] {
            let [[a, b], [c, d]] = Mzi2x2::new(phi).matrix();
            assert_eq!(b, c);
            assert!((a * d - b * c + 1.0).abs() < 1e-15);
            assert!((a * a + b * b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn swap_is_zero_phase() {
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let d = clements_decompose(&q).unwrap();
        assert_eq!(d.phases.len(), 1);
        assert_eq!(d.phases[0].phi, 0.0);
        assert_eq!(d.signs, vec![1.0, 1.0]);
    }

    #[test]
    fn z_is_half_pi() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let d = clements_decompose(&q).unwrap();
        assert!((d.phases[0].phi - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(d.signs, vec![1.0, 1.0]);
    }

    #[test]
    fn random_orthogonal_recomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [3, 6, 7, 10] {
            let q = crate::mesh::random_orthogonal(m, &mut rng);
            for side in [SignSide::Output, SignSide::Input] {
                let d = decompose(&q, side).unwrap();
                assert_eq!(d.phases.len(), m * (m - 1) / 2);
                assert!(max_abs_diff(&d.recompose(), &q) < 1e-10, "m={m} {side:?}");
                assert!(d.phases.iter().all(|p| p.phi > -FRAC_PI_2 && p.phi <= FRAC_PI_2));
                assert!(d.phases.iter().all(|p| p.layer < m && p.mode() + 1 < m));
            }
        }
    }

    #[test]
    fn non_orthogonal_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(clements_decompose(&q), Err(MeshError::NotOrthogonal { .. })));
    }
}
