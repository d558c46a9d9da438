//! Oblique projector onto the shape set along `Img{KL}`.

use nalgebra::DMatrix;

use super::SpectralError;
use crate::formation::{ShapeBasis, RANK_TOL};
use crate::linalg;

#[derive(Clone, Debug)]
pub struct SpectralProjector {
    /// Projector onto `Ker{KL}` along `Img{KL}`.
    pub p_s: DMatrix<f64>,
    pub p_c: DMatrix<f64>,
}

/// `P = R·(WᵀR)⁻¹·Wᵀ` with `R`, `W` the right and left kernels of `KL`.
pub fn spectral_projector(
    kl: &DMatrix<f64>,
    basis: &ShapeBasis,
) -> Result<SpectralProjector, SpectralError> {
    let n = kl.nrows();
    if kl.ncols() != n || basis.len() != n {
        return Err(SpectralError::LengthMismatch {
            expected: basis.len(),
            got: n,
        });
    }
    let rank = linalg::rank(kl, RANK_TOL);
    if rank + 3 != n {
        return Err(SpectralError::RankDefect {
            rank,
            expected: n.saturating_sub(3),
        });
    }
    let r = linalg::nullspace(kl, RANK_TOL);
    let w = linalg::nullspace(&kl.transpose(), RANK_TOL);
    if r.ncols() != 3 || w.ncols() != 3 {
        return Err(SpectralError::RankDefect {
            rank: n - r.ncols().min(w.ncols()),
            expected: n - 3,
        });
    }
    let wr = w.transpose() * &r;
    let inv = wr.try_inverse().ok_or(SpectralError::RankDefect {
        rank,
        expected: n - 3,
    })?;
    let p_s = &r * inv * w.transpose();
    let p_c = DMatrix::identity(n, n) - &p_s;
    Ok(SpectralProjector { p_s, p_c })
}
