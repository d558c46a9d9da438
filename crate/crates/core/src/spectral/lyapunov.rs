//! Lower bound `h_l = |κ|·‖Q‖₂·‖M·Bᵀ‖₂` on the shape gain.

use nalgebra::DMatrix;
use serde::Serialize;

use super::SpectralError;
use crate::formation::ShapeBasis;
use crate::linalg::{self, C64};
use crate::stress::{GainMatrix, StressWeights};

/// Accepted residual of `Q·J + Jᴴ·Q = 2I`, relative to `max(1, ‖Q‖₂·‖J‖₂)`.
pub const LYAPUNOV_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct StabilityBound {
    pub h_l: f64,
    pub q_norm: f64,
    pub mbt_norm: f64,
    /// Eigenvalues of the complement block `J`.
    #[serde(serialize_with = "crate::stress::ser_complex_list")]
    pub block_eigenvalues: Vec<C64>,
    /// `‖Q·J + Jᴴ·Q − 2I‖₂`.
    pub residual: f64,
    /// Whether `J` is normal, in which case `Q` is diagonal in its eigenbasis.
    pub normal: bool,
    #[serde(skip)]
    pub q: DMatrix<C64>,
    #[serde(skip)]
    pub block: DMatrix<C64>,
}

/// Solves `Q·J + Jᴴ·Q = 2I` by complex Schur triangularization `J = Z·T·Zᴴ`
/// and back-substitution on `X·T + Tᴴ·X = 2I`, `Q = Z·X·Zᴴ`.
pub fn solve_lyapunov(j: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<C64>), SpectralError> {
    let m = j.nrows();
    if m == 0 {
        return Ok((DMatrix::zeros(0, 0), Vec::new()));
    }
    let (z, t) = j.clone().schur().unpack();
    let eig: Vec<C64> = (0..m).map(|i| t[(i, i)]).collect();
    let bad: Vec<(f64, f64)> = eig
        .iter()
        .filter(|l| l.re <= 0.0)
        .map(|l| (l.re, l.im))
        .collect();
    if !bad.is_empty() {
        return Err(SpectralError::StabilityPrecondition(bad));
    }
    let mut x = DMatrix::<C64>::zeros(m, m);
    for i in 0..m {
        for jj in 0..m {
            let mut rhs = if i == jj {
                C64::new(2.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            for k in 0..jj {
                rhs -= x[(i, k)] * t[(k, jj)];
            }
            for k in 0..i {
                rhs -= t[(k, i)].conj() * x[(k, jj)];
            }
            x[(i, jj)] = rhs / (t[(jj, jj)] + t[(i, i)].conj());
        }
    }
    let q = &z * x * z.adjoint();
    let q = (&q + q.adjoint()) * C64::new(0.5, 0.0);
    Ok((q, eig))
}

/// Stability bound for the closed loop `−h·K·L + κ·M·Bᵀ`.
///
/// The complement block is `J = U_Cᵀ·P_C·K·L·U_C` with `U_C` an orthonormal
/// basis of `S⊥`. Because `U_Cᵀ·P_S = 0` for the spectral projector, this equals
/// `U_Cᵀ·K·L·U_C`, whose spectrum is the nonzero spectrum of `KL`.
pub fn stability_bound(
    weights: &StressWeights,
    gain: &GainMatrix,
    m_bt: &DMatrix<f64>,
    kappa: f64,
    basis: &ShapeBasis,
) -> Result<StabilityBound, SpectralError> {
    let n = basis.len();
    if weights.laplacian().nrows() != n || gain.len() != n || m_bt.nrows() != n {
        return Err(SpectralError::LengthMismatch {
            expected: n,
            got: weights.laplacian().nrows(),
        });
    }
    let uc = basis.complement_basis();
    let kl = gain.scale_rows(weights.laplacian());
    let block = linalg::complexify(&(uc.transpose() * kl * &uc));
    let (q, block_eigenvalues) = solve_lyapunov(&block)?;
    let m = block.nrows();
    let normal = m == 0
        || linalg::spectral_norm_c(&(&block * block.adjoint() - block.adjoint() * &block))
            <= 1e-12 * linalg::spectral_norm_c(&block).powi(2);
    let q_norm = linalg::spectral_norm_c(&q);
    let residual = if m == 0 {
        0.0
    } else {
        let r = &q * &block + block.adjoint() * &q - DMatrix::<C64>::identity(m, m) * C64::new(2.0, 0.0);
        linalg::spectral_norm_c(&r)
    };
    let scale = (q_norm * linalg::spectral_norm_c(&block)).max(1.0);
    if residual > LYAPUNOV_TOL * scale {
        return Err(SpectralError::LyapunovResidual { residual });
    }
    let mbt_norm = linalg::spectral_norm(m_bt);
    Ok(StabilityBound {
        h_l: kappa.abs() * q_norm * mbt_norm,
        q_norm,
        mbt_norm,
        block_eigenvalues,
        residual,
        normal,
        q,
        block,
    })
}
