//! Spectrum of the closed loop restricted to the shape set.
//!
//! On `S` the closed loop acts, in coordinates `[c1, c2, c3]` of
//! `[1, Re p*, Im p*]`, as `κ·A` with
//!
//! ```text
//!     ⎡0  vx   vy ⎤
//! A = ⎢0  vax  vhy⎥
//!     ⎣0  vhx  vay⎦
//! ```
//!
//! so its eigenvalues are `0` and `l± = κ((vax+vay)/2 ± σ)`. [`classify`] sorts
//! a motion `Δ_v` into the cases C1–C6, [`build_chains`] instantiates the
//! (generalized) eigenvectors, [`analytic_solution`] gives the closed-form
//! trajectory from `p(0) ∈ S`, and [`stability_bound`] computes `h_l`.

mod analytic;
mod chains;
mod lyapunov;
mod projector;

pub use analytic::{analytic_solution, AnalyticTrajectory, IN_SHAPE_TOL};
pub use chains::{build_chains, Chain, ChainVector, SpectralReport};
pub use lyapunov::{solve_lyapunov, stability_bound, StabilityBound};
pub use projector::{spectral_projector, SpectralProjector};

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{AffineCoords, FormationError};
use crate::linalg::C64;

/// Default absolute tolerance for the equality tests, applied after scaling
/// `Δ_v` to unit ∞-norm.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error("initial configuration is not in the shape set (distance {distance:.3e})")]
    OutOfShape { distance: f64 },
    #[error("chain basis is ill-conditioned (σ_min/σ_max = {ratio:.3e}); re-check the case")]
    IllConditioned { ratio: f64 },
    #[error("stability precondition violated: {} eigenvalue(s) with Re ≤ 0 on the complement, largest Re = {:.3e}", .0.len(), .0.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max))]
    StabilityPrecondition(Vec<(f64, f64)>),
    #[error("Lyapunov residual {residual:.3e} exceeds tolerance")]
    LyapunovResidual { residual: f64 },
    #[error("rank of KL is {rank}, expected {expected}")]
    RankDefect { rank: usize, expected: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    C1a,
    C1b,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 7] = [
        CaseLabel::C1a,
        CaseLabel::C1b,
        CaseLabel::C2,
        CaseLabel::C3,
        CaseLabel::C4,
        CaseLabel::C5,
        CaseLabel::C6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::C1a => "C1a",
            CaseLabel::C1b => "C1b",
            CaseLabel::C2 => "C2",
            CaseLabel::C3 => "C3",
            CaseLabel::C4 => "C4",
            CaseLabel::C5 => "C5",
            CaseLabel::C6 => "C6",
        }
    }

    /// The six cases, C1a and C1b collapsed.
    pub fn family(self) -> u8 {
        match self {
            CaseLabel::C1a | CaseLabel::C1b => 1,
            CaseLabel::C2 => 2,
            CaseLabel::C3 => 3,
            CaseLabel::C4 => 4,
            CaseLabel::C5 => 5,
            CaseLabel::C6 => 6,
        }
    }
}

impl std::fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which closed form within a case applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Single closed form for the case.
    Main,
    /// `vhx = 0`.
    HxZero,
    /// `vhy = 0`.
    HyZero,
    /// C2 with `vax ≠ vay` and `vhx·vhy = −((vax−vay)/2)²`.
    Skew,
    /// C4 chain from the first row of the scaling/shear block.
    Row1,
    /// C4 chain from the second row.
    Row2,
    /// C5 with a translation-only motion.
    Translation,
    /// `Δ_v = 0` or `κ = 0`: the closed loop vanishes on `S`.
    Stationary,
    /// C6 with `vhx, vy ≠ 0`.
    HxVy,
    /// C6 with `vhy, vx ≠ 0`.
    HyVx,
    /// Nilpotent block with `vax ≠ vay`; chain built numerically.
    General,
}

/// Case label, eigenvalues and the inputs they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: CaseLabel,
    pub branch: Branch,
    pub delta_v: AffineCoords,
    pub kappa: f64,
    /// `[0, l₊, l₋]`.
    pub eigenvalues: [C64; 3],
    /// `sqrt(((vax−vay)/2)² + vhx·vhy)`, principal branch.
    pub sigma: C64,
    pub zero_tol: f64,
}

impl Classification {
    /// `κ·A`, the closed loop in shape coordinates.
    pub fn reduced_operator(&self) -> Matrix3<f64> {
        reduced_operator(&self.delta_v) * self.kappa
    }
}

/// `A_{v*}` for `Δ_v` (without `κ`).
pub fn reduced_operator(d: &AffineCoords) -> Matrix3<f64> {
    Matrix3::new(
        0.0, d.dx, d.dy, //
        0.0, d.dax, d.dhy, //
        0.0, d.dhx, d.day,
    )
}

/// `l± = κ((vax+vay)/2 ± σ)` with the principal square root.
pub fn eigenvalues(d: &AffineCoords, kappa: f64) -> (C64, C64, C64) {
    let half_diff = (d.dax - d.day) / 2.0;
    let sigma = C64::new(half_diff * half_diff + d.dhx * d.dhy, 0.0).sqrt();
    let mean = C64::new((d.dax + d.day) / 2.0, 0.0);
    (sigma, (mean + sigma) * kappa, (mean - sigma) * kappa)
}

/// Null vector of the 2×2 block `[[vax, vhy], [vhx, vay]]` from its dominant
/// row, unit length. `None` when the block vanishes.
pub(crate) fn block_null_vector(d: &AffineCoords) -> Option<(f64, f64)> {
    let r1 = (d.dax * d.dax + d.dhy * d.dhy).sqrt();
    let r2 = (d.dhx * d.dhx + d.day * d.day).sqrt();
    if r1 == 0.0 && r2 == 0.0 {
        None
    } else if r1 >= r2 {
        Some((d.dhy / r1, -d.dax / r1))
    } else {
        Some((d.day / r2, -d.dhx / r2))
    }
}

/// Classifies `Δ_v` into C1–C6. Equality tests use `|·| < zero_tol` on the
/// entries of `Δ_v / ‖Δ_v‖∞`, checked in the order C1, C2, …, C6.
pub fn classify(delta_v: &AffineCoords, kappa: f64, zero_tol: f64) -> Classification {
    let (sigma, lp, lm) = eigenvalues(delta_v, kappa);
    let (label, branch) = label_of(delta_v, kappa, zero_tol);
    Classification {
        label,
        branch,
        delta_v: *delta_v,
        kappa,
        eigenvalues: [C64::new(0.0, 0.0), lp, lm],
        sigma,
        zero_tol,
    }
}

fn label_of(delta_v: &AffineCoords, kappa: f64, tol: f64) -> (CaseLabel, Branch) {
    let scale = delta_v.max_abs();
    if scale == 0.0 || kappa == 0.0 {
        return (CaseLabel::C5, Branch::Stationary);
    }
    let v = (1.0 / scale) * *delta_v;
    let z = |x: f64| x.abs() < tol;
    let det = v.dax * v.day - v.dhx * v.dhy;
    let tr = v.dax + v.day;
    let half_diff = (v.dax - v.day) / 2.0;
    let disc = half_diff * half_diff + v.dhx * v.dhy;

    if !z(det) {
        if !z(disc) {
            return (CaseLabel::C1a, Branch::Main);
        }
        if z(v.dax - v.day) && z(v.dhx) && z(v.dhy) {
            return (CaseLabel::C1b, Branch::Main);
        }
        let branch = if z(v.dhx) && z(v.dax - v.day) {
            Branch::HxZero
        } else if z(v.dhy) && z(v.dax - v.day) {
            Branch::HyZero
        } else {
            Branch::Skew
        };
        return (CaseLabel::C2, branch);
    }

    if !z(tr) {
        let (n1, n2) = block_null_vector(&v).expect("trace is nonzero");
        let g = v.dx * n1 + v.dy * n2;
        if z(g) {
            return (CaseLabel::C3, Branch::Main);
        }
        let r1 = v.dax.hypot(v.dhy);
        let r2 = v.dhx.hypot(v.day);
        let branch = if r1 >= r2 { Branch::Row1 } else { Branch::Row2 };
        return (CaseLabel::C4, branch);
    }

    // Both l± vanish: the block is nilpotent and A is nilpotent.
    let cols = SMatrix::<f64, 3, 2>::new(v.dx, v.dy, v.dax, v.dhy, v.dhx, v.day);
    let rank = cols
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > tol)
        .count();
    match rank {
        0 => (CaseLabel::C5, Branch::Stationary),
        1 => {
            let branch = if z(v.dhx) && z(v.dhy) && z(v.dax) && z(v.day) {
                Branch::Translation
            } else if z(v.dhx) && z(v.dx) && z(v.dax) && z(v.day) {
                Branch::HxZero
            } else if z(v.dhy) && z(v.dy) && z(v.dax) && z(v.day) {
                Branch::HyZero
            } else {
                Branch::General
            };
            (CaseLabel::C5, branch)
        }
        _ => {
            let block_zero_diag = z(v.dax) && z(v.day);
            let branch = if block_zero_diag && z(v.dhy) && !z(v.dhx) && !z(v.dy) {
                Branch::HxVy
            } else if block_zero_diag && z(v.dhx) && !z(v.dhy) && !z(v.dx) {
                Branch::HyVx
            } else {
                Branch::General
            };
            (CaseLabel::C6, branch)
        }
    }
}
