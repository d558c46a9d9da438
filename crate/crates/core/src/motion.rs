//! Motion parameters `μ_ij`, the six-motion basis, and the modified Laplacian
//! `L̃ = h·L − κ·K⁻¹·M·Bᵀ`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{
    affine_map, incidence_matrix, AffineCoords, Configuration, FormationError, Graph,
    ReferenceShape,
};
use crate::linalg::{self, C64};
use crate::stress::{GainMatrix, StressWeights};

/// Relative residual above which a per-agent velocity counts as unreachable.
pub const MU_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error("agent {agent}: reference velocity unreachable from its neighbours (residual {residual:.3e})")]
    UnreachableVelocity { agent: usize, residual: f64 },
    #[error("h must be finite and positive, got {h}")]
    InvalidH { h: f64 },
    #[error("kappa must be finite, got {kappa}")]
    InvalidKappa { kappa: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("edge ({a}, {b}) has zero weight but nonzero motion parameter; scaling undefined")]
    ZeroWeight { a: usize, b: usize },
    #[error("motion import: {0}")]
    Import(String),
}

/// Directed pairs `(i, j)` whose `μ_ij` is forced to zero before solving.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MuConstraints {
    pinned: BTreeSet<(usize, usize)>,
}

impl MuConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pins `μ_ij = 0` (zero-based agents).
    pub fn pin(mut self, i: usize, j: usize) -> Self {
        self.pinned.insert((i, j));
        self
    }

    pub fn is_pinned(&self, i: usize, j: usize) -> bool {
        self.pinned.contains(&(i, j))
    }

    pub fn is_empty(&self) -> bool {
        self.pinned.is_empty()
    }
}

/// Minimum-norm `μ_ij` with `Σ_j μ_ij·z*_ij = v*_i`.
///
/// `refs` lists `(j, z*_ij)`; entries whose `j` is in `pinned` get `μ_ij = 0`.
/// The returned vector follows the order of `refs`.
pub fn solve_agent_mu(
    agent: usize,
    refs: &[(usize, C64)],
    v_star: C64,
    pinned: &[usize],
) -> Result<Vec<f64>, MotionError> {
    let free: Vec<usize> = (0..refs.len())
        .filter(|&k| !pinned.contains(&refs[k].0))
        .collect();
    let b = DVector::from_vec(vec![v_star.re, v_star.im]);
    let mut mu = vec![0.0; refs.len()];
    let bnorm = b.norm();
    if free.is_empty() {
        if bnorm > 0.0 {
            return Err(MotionError::UnreachableVelocity {
                agent,
                residual: bnorm,
            });
        }
        return Ok(mu);
    }
    let mut a = DMatrix::zeros(2, free.len());
    for (c, &k) in free.iter().enumerate() {
        a[(0, c)] = refs[k].1.re;
        a[(1, c)] = refs[k].1.im;
    }
    let x = linalg::min_norm_solve(&a, &b, 1e-12);
    let residual = (&a * &x - &b).norm();
    let scale = bnorm.max(linalg::spectral_norm(&a) * x.norm());
    if residual > MU_RESIDUAL_TOL * scale || !residual.is_finite() {
        return Err(MotionError::UnreachableVelocity { agent, residual });
    }
    for (c, &k) in free.iter().enumerate() {
        mu[k] = x[c];
    }
    Ok(mu)
}

/// Per-edge motion parameters and the matrix `M`.
///
/// Edge `k = (a, b)` stores `(μ_ab, μ_ba)`; `M[a,k] = μ_ab`, `M[b,k] = −μ_ba`,
/// so `(M·Bᵀ·p)_i = Σ_j μ_ij (p_i − p_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionParameters {
    graph: Graph,
    mu: Vec<(f64, f64)>,
    m: DMatrix<f64>,
}

impl MotionParameters {
    pub fn from_edge_mu(graph: &Graph, mu: Vec<(f64, f64)>) -> Result<Self, MotionError> {
        if mu.len() != graph.edge_count() {
            return Err(MotionError::LengthMismatch {
                expected: graph.edge_count(),
                got: mu.len(),
            });
        }
        let mut m = DMatrix::zeros(graph.node_count(), graph.edge_count());
        for (k, (&(a, b), &(mab, mba))) in graph.edges().iter().zip(&mu).enumerate() {
            m[(a, k)] = mab;
            m[(b, k)] = -mba;
        }
        Ok(MotionParameters {
            graph: graph.clone(),
            mu,
            m,
        })
    }

    /// Reads `μ` back from an `n × |Z|` matrix; entries off the edge endpoints
    /// must be zero.
    pub fn from_matrix(graph: &Graph, m: &DMatrix<f64>) -> Result<Self, MotionError> {
        if m.shape() != (graph.node_count(), graph.edge_count()) {
            return Err(MotionError::LengthMismatch {
                expected: graph.node_count() * graph.edge_count(),
                got: m.len(),
            });
        }
        let mut mu = Vec::with_capacity(graph.edge_count());
        for (k, &(a, b)) in graph.edges().iter().enumerate() {
            for i in 0..graph.node_count() {
                if i != a && i != b && m[(i, k)] != 0.0 {
                    return Err(MotionError::Import(format!(
                        "entry ({}, {}) lies off the endpoints of edge {}",
                        i + 1,
                        k + 1,
                        k + 1
                    )));
                }
            }
            mu.push((m[(a, k)], -m[(b, k)]));
        }
        Self::from_edge_mu(graph, mu)
    }

    /// Solves every agent's constraint against the target velocities `v_star`.
    pub fn solve(
        graph: &Graph,
        shape: &ReferenceShape,
        v_star: &Configuration,
        constraints: &MuConstraints,
    ) -> Result<Self, MotionError> {
        let n = graph.node_count();
        if shape.len() != n || v_star.len() != n {
            return Err(MotionError::LengthMismatch {
                expected: n,
                got: if shape.len() != n { shape.len() } else { v_star.len() },
            });
        }
        let p = shape.positions();
        let mut mu = vec![(0.0, 0.0); graph.edge_count()];
        for i in 0..n {
            let nb = graph.neighbor_edges(i);
            let refs: Vec<(usize, C64)> = nb.iter().map(|&(j, _)| (j, p[i] - p[j])).collect();
            let pinned: Vec<usize> = nb
                .iter()
                .filter(|&&(j, _)| constraints.is_pinned(i, j))
                .map(|&(j, _)| j)
                .collect();
            let sol = solve_agent_mu(i + 1, &refs, v_star[i], &pinned)?;
            for (&(j, k), value) in nb.iter().zip(sol) {
                let (a, _) = graph.edges()[k];
                if a == i {
                    mu[k].0 = value;
                } else {
                    debug_assert_eq!(a, j);
                    mu[k].1 = value;
                }
            }
        }
        Self::from_edge_mu(graph, mu)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// `(μ_tail→head, μ_head→tail)` in edge order.
    pub fn edge_mu(&self) -> &[(f64, f64)] {
        &self.mu
    }

    /// `μ_ij` for a directed pair, zero when `{i, j}` is not an edge.
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        for (&(a, b), &(mab, mba)) in self.graph.edges().iter().zip(&self.mu) {
            if (a, b) == (i, j) {
                return mab;
            }
            if (b, a) == (i, j) {
                return mba;
            }
        }
        0.0
    }

    pub fn m_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `M·Bᵀ`, an n×n real matrix.
    pub fn m_bt(&self) -> DMatrix<f64> {
        &self.m * incidence_matrix(&self.graph).transpose()
    }

    /// `Σ_k c_k·μ_k` over parameter sets on the same graph.
    pub fn combine(graph: &Graph, terms: &[(f64, &MotionParameters)]) -> Result<Self, MotionError> {
        let mut mu = vec![(0.0, 0.0); graph.edge_count()];
        for &(c, p) in terms {
            if p.mu.len() != mu.len() {
                return Err(MotionError::LengthMismatch {
                    expected: mu.len(),
                    got: p.mu.len(),
                });
            }
            if c == 0.0 {
                continue;
            }
            for (acc, &(x, y)) in mu.iter_mut().zip(&p.mu) {
                acc.0 += c * x;
                acc.1 += c * y;
            }
        }
        Self::from_edge_mu(graph, mu)
    }
}

/// Names of the six basis motions, in `Δ_v` order.
pub const MOTION_NAMES: [&str; 6] = ["vx", "vy", "vax", "vay", "vhx", "vhy"];

/// Six motion-parameter sets generating x/y translation, x/y scaling and
/// x/y shear of the reference shape.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionBasis {
    graph: Graph,
    shape: ReferenceShape,
    components: [MotionParameters; 6],
}

/// Unit target velocity of basis component `k`: `T_{e_k}(p*)`.
pub fn basis_target(shape: &ReferenceShape, k: usize) -> Configuration {
    let mut e = [0.0; 6];
    e[k] = 1.0;
    affine_map(&AffineCoords::from(e), shape.positions())
}

pub fn build_motion_basis(
    graph: &Graph,
    shape: &ReferenceShape,
    constraints: &MuConstraints,
) -> Result<MotionBasis, MotionError> {
    let mut comps = Vec::with_capacity(6);
    for k in 0..6 {
        comps.push(MotionParameters::solve(
            graph,
            shape,
            &basis_target(shape, k),
            constraints,
        )?);
    }
    let components: [MotionParameters; 6] = comps.try_into().expect("six components");
    Ok(MotionBasis {
        graph: graph.clone(),
        shape: shape.clone(),
        components,
    })
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    matrices: BTreeMap<String, Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, MotionError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(MotionError::Import(format!(
            "expected a {nrows}×{ncols} matrix"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl MotionBasis {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shape(&self) -> &ReferenceShape {
        &self.shape
    }

    pub fn component(&self, k: usize) -> &MotionParameters {
        &self.components[k]
    }

    pub fn components(&self) -> &[MotionParameters; 6] {
        &self.components
    }

    /// Motion parameters for `Δ_v`: `Σ_k Δ_v[k]·M_k`.
    pub fn combine(&self, delta_v: &AffineCoords) -> MotionParameters {
        let d = delta_v.to_array();
        let terms: Vec<(f64, &MotionParameters)> =
            d.iter().cloned().zip(self.components.iter()).collect();
        MotionParameters::combine(&self.graph, &terms).expect("same graph")
    }

    /// Largest relative residual `‖M_k·Bᵀ·p* − target_k‖ / ‖target_k‖`.
    pub fn max_residual(&self) -> f64 {
        (0..6)
            .map(|k| {
                let t = basis_target(&self.shape, k);
                let r = linalg::apply_real(&self.components[k].m_bt(), self.shape.positions());
                linalg::norm_c(&(r - &t)) / linalg::norm_c(&t).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// Dense row-major export with a 1-based edge header.
    pub fn to_json(&self) -> serde_json::Value {
        let matrices = MOTION_NAMES
            .iter()
            .zip(&self.components)
            .map(|(name, c)| (name.to_string(), rows_of(c.m_matrix())))
            .collect();
        serde_json::to_value(BasisFile {
            node_count: self.graph.node_count(),
            edges: self.graph.one_based_edges(),
            matrices,
        })
        .expect("serializable")
    }

    /// Imports six `M` matrices authored elsewhere. The edge header must match
    /// the framework's edge order.
    pub fn from_json(
        graph: &Graph,
        shape: &ReferenceShape,
        text: &str,
    ) -> Result<Self, MotionError> {
        let file: BasisFile =
            serde_json::from_str(text).map_err(|e| MotionError::Import(e.to_string()))?;
        if file.node_count != graph.node_count() || file.edges != graph.one_based_edges() {
            return Err(MotionError::Import(
                "edge header does not match the framework".into(),
            ));
        }
        let mut comps = Vec::with_capacity(6);
        for name in MOTION_NAMES {
            let rows = file
                .matrices
                .get(name)
                .ok_or_else(|| MotionError::Import(format!("missing matrix `{name}`")))?;
            let m = matrix_from_rows(rows, graph.node_count(), graph.edge_count())?;
            comps.push(MotionParameters::from_matrix(graph, &m)?);
        }
        Ok(MotionBasis {
            graph: graph.clone(),
            shape: shape.clone(),
            components: comps.try_into().expect("six components"),
        })
    }
}

/// Assembled closed loop for one `(Δ_v, h, κ)`.
#[derive(Clone, Debug)]
pub struct ModifiedLaplacian {
    pub h: f64,
    pub kappa: f64,
    pub delta_v: AffineCoords,
    pub motion: MotionParameters,
    /// `M·Bᵀ`.
    pub m_bt: DMatrix<f64>,
    /// `h·L − κ·K⁻¹·M·Bᵀ`.
    pub l_tilde: DMatrix<f64>,
    /// `−h·K·L + κ·M·Bᵀ`.
    pub closed_loop: DMatrix<f64>,
    /// `T_{Δ_v}(p*)`.
    pub v_star: Configuration,
}

pub fn assemble_modified(
    weights: &StressWeights,
    gain: &GainMatrix,
    basis: &MotionBasis,
    delta_v: &AffineCoords,
    h: f64,
    kappa: f64,
) -> Result<ModifiedLaplacian, MotionError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(MotionError::InvalidH { h });
    }
    if !kappa.is_finite() {
        return Err(MotionError::InvalidKappa { kappa });
    }
    let n = basis.graph().node_count();
    if weights.laplacian().nrows() != n || gain.len() != n {
        return Err(MotionError::LengthMismatch {
            expected: n,
            got: if gain.len() != n {
                gain.len()
            } else {
                weights.laplacian().nrows()
            },
        });
    }
    let motion = basis.combine(delta_v);
    let m_bt = motion.m_bt();
    let l = weights.laplacian();
    let kinv = gain.inverse_matrix();
    let l_tilde = l * h - (&kinv * &m_bt) * kappa;
    let closed_loop = gain.scale_rows(l) * (-h) + &m_bt * kappa;
    let v_star = affine_map(delta_v, basis.shape().positions());
    Ok(ModifiedLaplacian {
        h,
        kappa,
        delta_v: *delta_v,
        motion,
        m_bt,
        l_tilde,
        closed_loop,
        v_star,
    })
}

/// Per directed edge `s_ij = (h·w_ij − κ·μ_ij)/(h·w_ij)`, keyed by zero-based
/// `(i, j)`.
pub fn hardware_scaling(
    weights: &StressWeights,
    motion: &MotionParameters,
    h: f64,
    kappa: f64,
) -> Result<BTreeMap<(usize, usize), f64>, MotionError> {
    if weights.weights().len() != motion.edge_mu().len() {
        return Err(MotionError::LengthMismatch {
            expected: weights.weights().len(),
            got: motion.edge_mu().len(),
        });
    }
    let mut out = BTreeMap::new();
    for ((&(a, b), &w), &(mab, mba)) in weights
        .graph()
        .edges()
        .iter()
        .zip(weights.weights())
        .zip(motion.edge_mu())
    {
        for (i, j, mu) in [(a, b, mab), (b, a, mba)] {
            let s = if mu == 0.0 {
                1.0
            } else if w == 0.0 || h == 0.0 {
                return Err(MotionError::ZeroWeight { a: i + 1, b: j + 1 });
            } else {
                (h * w - kappa * mu) / (h * w)
            };
            out.insert((i, j), s);
        }
    }
    Ok(out)
}
