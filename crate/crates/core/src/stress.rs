//! Stress weights `w_ij` whose Laplacian has the desired shape set as kernel,
//! and validation of the diagonal gain `K`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{shape_matrix, FormationError, Graph, ReferenceShape, ShapeBasis};
use crate::linalg::{self, C64};

/// `|λ| < ZERO_EIG_TOL · ‖L‖₂` counts as a zero eigenvalue.
pub const ZERO_EIG_TOL: f64 = 1e-8;

/// Relative residual allowed on `L·[1, Re p*, Im p*] = 0` for supplied weights.
pub const STRESS_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StressError {
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error("closed-form design needs a complete graph ({edges} of {expected} edges present); use the general design")]
    NotComplete { edges: usize, expected: usize },
    #[error("no nontrivial stress exists for this framework")]
    NoStress,
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight on edge ({a}, {b}) is not finite")]
    NonFiniteWeight { a: usize, b: usize },
    #[error("asymmetric weights on edge ({a}, {b}): {w_ab} vs {w_ba}")]
    Asymmetric { a: usize, b: usize, w_ab: f64, w_ba: f64 },
    #[error("weight given for ({a}, {b}), which is not an edge of the graph")]
    NotAnEdge { a: usize, b: usize },
    #[error("weights violate the stress balance (relative residual {residual:.3e})")]
    NotAStress { residual: f64 },
    #[error("gain entry k[{index}] = {value} must be finite and nonzero")]
    BadGain { index: usize, value: f64 },
    #[error("weights file: {0}")]
    Parse(String),
    #[error("gain validation failed: {}", describe_offending(.0))]
    GainRejected(Box<GainReport>),
}

fn describe_offending(report: &GainReport) -> String {
    let list: Vec<String> = report
        .offending
        .iter()
        .map(|z| format!("{:.6e}{:+.6e}i", z.re, z.im))
        .collect();
    format!(
        "{} zero eigenvalues (need 3), kernel preserved: {}, offending eigenvalues [{}]",
        report.zero_count,
        report.kernel_preserved,
        list.join(", ")
    )
}

/// Symmetric edge weights and their Laplacian.
#[derive(Clone, Debug, PartialEq)]
pub struct StressWeights {
    graph: Graph,
    weights: Vec<f64>,
    laplacian: DMatrix<f64>,
}

impl StressWeights {
    /// Assembles `L` from one weight per edge (in edge order). Symmetry and
    /// sparsity hold by construction.
    pub fn from_edge_weights(graph: &Graph, weights: Vec<f64>) -> Result<Self, StressError> {
        if weights.len() != graph.edge_count() {
            return Err(StressError::LengthMismatch {
                expected: graph.edge_count(),
                got: weights.len(),
            });
        }
        let n = graph.node_count();
        let mut l = DMatrix::zeros(n, n);
        for (&(a, b), &w) in graph.edges().iter().zip(&weights) {
            if !w.is_finite() {
                return Err(StressError::NonFiniteWeight { a: a + 1, b: b + 1 });
            }
            l[(a, b)] = -w;
            l[(b, a)] = -w;
        }
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
            l[(i, i)] = -s;
        }
        Ok(StressWeights {
            graph: graph.clone(),
            weights,
            laplacian: l,
        })
    }

    /// Reads a weight file and checks the stress balance against `shape`.
    ///
    /// Two layouts are accepted: `{"weights": [[i, j, w], …]}` with 1-based
    /// nodes, or `{"laplacian": [[…], …]}` as a dense row-major matrix. Edges
    /// absent from the list get weight zero.
    pub fn from_json(
        graph: &Graph,
        shape: &ReferenceShape,
        text: &str,
    ) -> Result<Self, StressError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct WeightFile {
            weights: Option<Vec<(usize, usize, f64)>>,
            laplacian: Option<Vec<Vec<f64>>>,
        }
        let file: WeightFile =
            serde_json::from_str(text).map_err(|e| StressError::Parse(e.to_string()))?;
        let n = graph.node_count();
        let mut w: Vec<Option<(f64, usize, usize)>> = vec![None; graph.edge_count()];
        let mut set = |a: usize, b: usize, value: f64| -> Result<(), StressError> {
            let k = graph
                .edges()
                .iter()
                .position(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
                .ok_or(StressError::NotAnEdge { a: a + 1, b: b + 1 })?;
            if let Some((prev, pa, pb)) = w[k] {
                if prev != value {
                    return Err(StressError::Asymmetric {
                        a: pa + 1,
                        b: pb + 1,
                        w_ab: prev,
                        w_ba: value,
                    });
                }
            }
            w[k] = Some((value, a, b));
            Ok(())
        };
        match (file.weights, file.laplacian) {
            (Some(list), None) => {
                for (i, j, value) in list {
                    if i == 0 || j == 0 || i > n || j > n {
                        return Err(StressError::Formation(FormationError::NodeOutOfRange {
                            node: i.max(j),
                            n,
                        }));
                    }
                    set(i - 1, j - 1, value)?;
                }
            }
            (None, Some(rows)) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(StressError::LengthMismatch {
                        expected: n * n,
                        got: rows.iter().map(Vec::len).sum(),
                    });
                }
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let value = -rows[i][j];
                        if graph.has_edge(i, j) {
                            set(i, j, value)?;
                        } else if value != 0.0 {
                            return Err(StressError::NotAnEdge { a: i + 1, b: j + 1 });
                        }
                    }
                }
            }
            _ => {
                return Err(StressError::Parse(
                    "exactly one of `weights` or `laplacian` is required".into(),
                ))
            }
        }
        let weights = w.iter().map(|e| e.map_or(0.0, |(v, _, _)| v)).collect();
        let sw = Self::from_edge_weights(graph, weights)?;
        let residual = sw.stress_residual(shape);
        if !(residual <= STRESS_TOL) {
            return Err(StressError::NotAStress { residual });
        }
        Ok(sw)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let list: Vec<(usize, usize, f64)> = self
            .graph
            .edges()
            .iter()
            .zip(&self.weights)
            .map(|(&(a, b), &w)| (a + 1, b + 1, w))
            .collect();
        serde_json::json!({ "weights": list })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Weights in edge order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// `‖L·phi‖₂ / (‖L‖₂·‖phi‖₂)`, zero for the zero matrix.
    pub fn stress_residual(&self, shape: &ReferenceShape) -> f64 {
        let phi = shape_matrix(shape.positions());
        let ln = linalg::spectral_norm(&self.laplacian);
        if ln == 0.0 {
            return 0.0;
        }
        linalg::spectral_norm(&(&self.laplacian * &phi)) / (ln * linalg::spectral_norm(&phi))
    }

    /// Eigenvalues of `L`, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .laplacian
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }
}

/// `L = I − P_S` on a complete graph.
pub fn design_weights_complete(
    graph: &Graph,
    shape: &ReferenceShape,
) -> Result<StressWeights, StressError> {
    let n = graph.node_count();
    if shape.len() != n {
        return Err(FormationError::LengthMismatch {
            expected: n,
            got: shape.len(),
        }
        .into());
    }
    if !graph.is_complete() {
        return Err(StressError::NotComplete {
            edges: graph.edge_count(),
            expected: n * (n - 1) / 2,
        });
    }
    let basis = ShapeBasis::new(shape)?;
    let weights = if n == 3 {
        vec![0.0; graph.edge_count()]
    } else {
        let pc = basis.proj_c();
        graph
            .edges()
            .iter()
            .map(|&(a, b)| -0.5 * (pc[(a, b)] + pc[(b, a)]))
            .collect()
    };
    StressWeights::from_edge_weights(graph, weights)
}

/// Result of the general weight search.
#[derive(Clone, Debug)]
pub struct WeightDesign {
    pub weights: StressWeights,
    /// Dimension of the stress space (nullspace of the balance constraints).
    pub stress_dimension: usize,
    /// Eigenvalues of `L`, ascending.
    pub spectrum: Vec<f64>,
    /// Smallest eigenvalue of `L` restricted to the complement of the shape set.
    pub min_complement_eigenvalue: f64,
    pub warning: Option<DesignWarning>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DesignWarning {
    /// The best stress found is not positive on the complement; a gain `K`
    /// has to be supplied and validated separately.
    NotPsd { spectrum: Vec<f64> },
}

/// Linear balance constraints, one real/imaginary row pair per agent.
pub fn stress_constraints(graph: &Graph, shape: &ReferenceShape) -> DMatrix<f64> {
    let p = shape.positions();
    let mut a = DMatrix::zeros(2 * graph.node_count(), graph.edge_count());
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let z = p[i] - p[j];
        a[(2 * i, k)] += z.re;
        a[(2 * i + 1, k)] += z.im;
        a[(2 * j, k)] -= z.re;
        a[(2 * j + 1, k)] -= z.im;
    }
    a
}

/// Searches the stress space for a Laplacian with the largest smallest
/// eigenvalue on the complement of the shape set.
///
/// The objective `λ_min(R(c)) / ‖R(c)‖_F` is scale-free in the stress
/// coefficients `c`; it is maximized by seeded multi-start Nelder–Mead.
pub fn design_weights_general(
    graph: &Graph,
    shape: &ReferenceShape,
    seed: u64,
) -> Result<WeightDesign, StressError> {
    let n = graph.node_count();
    if shape.len() != n {
        return Err(FormationError::LengthMismatch {
            expected: n,
            got: shape.len(),
        }
        .into());
    }
    let basis = ShapeBasis::new(shape)?;
    let constraints = stress_constraints(graph, shape);
    let ns = linalg::nullspace(&constraints, crate::formation::RANK_TOL);
    let d = ns.ncols();
    if d == 0 || n <= 3 {
        return Err(StressError::NoStress);
    }
    let b = crate::formation::incidence_matrix(graph);
    let uc = basis.complement_basis();
    let bu = uc.transpose() * &b;
    // R_k = U_Cᵀ B diag(n_k) Bᵀ U_C
    let reduced: Vec<DMatrix<f64>> = (0..d)
        .map(|k| {
            let mut scaled = bu.clone();
            for (e, mut col) in scaled.column_iter_mut().enumerate() {
                col *= ns[(e, k)];
            }
            let r = &scaled * bu.transpose();
            0.5 * (&r + r.transpose())
        })
        .collect();
    let traces: Vec<f64> = reduced.iter().map(|r| r.trace()).collect();
    let objective = |c: &[f64]| -> f64 {
        let mut r = DMatrix::zeros(n - 3, n - 3);
        for (ck, rk) in c.iter().zip(&reduced) {
            r += rk * *ck;
        }
        let t = r.norm();
        if t < 1e-12 {
            return f64::NEG_INFINITY;
        }
        let lmin = r
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        lmin / t
    };

    let best = if d == 1 {
        if objective(&[1.0]) >= objective(&[-1.0]) {
            vec![1.0]
        } else {
            vec![-1.0]
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = if traces[k] >= 0.0 { 1.0 } else { -1.0 };
            starts.push(e);
        }
        for _ in 0..(4 + d).min(24) {
            starts.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in starts {
            let (x, fx) = nelder_mead(|c| -objective(c), &s, 0.5, 400 * d, 1e-12);
            let fx = -fx;
            if best.as_ref().is_none_or(|(bf, _)| fx > *bf) {
                best = Some((fx, x));
            }
        }
        best.map(|(_, x)| x).expect("at least one start")
    };

    let mut w = &ns * DVector::from_vec(best);
    let sw = StressWeights::from_edge_weights(graph, w.iter().cloned().collect())?;
    let mut scale = linalg::spectral_norm(sw.laplacian());
    if sw.laplacian().trace() < 0.0 {
        scale = -scale;
    }
    if scale == 0.0 {
        return Err(StressError::NoStress);
    }
    w /= scale;
    let weights = StressWeights::from_edge_weights(graph, w.iter().cloned().collect())?;
    let spectrum = weights.spectrum();
    let r = uc.transpose() * weights.laplacian() * &uc;
    let min_complement_eigenvalue = (0.5 * (&r + r.transpose()))
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let warning = if min_complement_eigenvalue <= ZERO_EIG_TOL {
        Some(DesignWarning::NotPsd {
            spectrum: spectrum.clone(),
        })
    } else {
        None
    };
    Ok(WeightDesign {
        weights,
        stress_dimension: d,
        spectrum,
        min_complement_eigenvalue,
        warning,
    })
}

/// Minimizes `f` from `x0`. Returns the best vertex and its value.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for k in 0..d {
        let mut x = x0.to_vec();
        x[k] += step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let (fbest, fworst) = (simplex[0].1, simplex[d].1);
        if fworst.is_finite() && (fworst - fbest).abs() <= ftol * (1.0 + fbest.abs()) {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let worst = simplex[d].0.clone();
        let xr = lerp(&centroid, &worst, -1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst, -2.0);
            let fe = eval(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = lerp(&centroid, &worst, -0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = lerp(&centroid, &worst, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[d].1) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = lerp(&best, &v.0, 0.5);
                    let fx = eval(&x);
                    *v = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex.swap_remove(0)
}

/// Diagonal gain `K = diag(k_1, …, k_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GainMatrix {
    k: Vec<f64>,
}

impl TryFrom<Vec<f64>> for GainMatrix {
    type Error = StressError;
    fn try_from(k: Vec<f64>) -> Result<Self, StressError> {
        GainMatrix::new(k)
    }
}

impl From<GainMatrix> for Vec<f64> {
    fn from(g: GainMatrix) -> Vec<f64> {
        g.k
    }
}

impl GainMatrix {
    pub fn new(k: Vec<f64>) -> Result<Self, StressError> {
        for (index, &value) in k.iter().enumerate() {
            if !value.is_finite() || value == 0.0 {
                return Err(StressError::BadGain { index, value });
            }
        }
        Ok(GainMatrix { k })
    }

    pub fn identity(n: usize) -> Self {
        GainMatrix { k: vec![1.0; n] }
    }

    pub fn entries(&self) -> &[f64] {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.k.iter().all(|&v| v == 1.0)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.k))
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.k.len(),
            self.k.iter().map(|v| 1.0 / v),
        ))
    }

    /// `K·L` without forming `K`.
    pub fn scale_rows(&self, l: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = l.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.k[i];
        }
        out
    }
}

/// Spectrum of `K·L` and the verdict of the gain check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainReport {
    /// Eigenvalues of `KL`, sorted by real part then imaginary part.
    #[serde(serialize_with = "ser_complex_list")]
    pub eigenvalues: Vec<C64>,
    pub zero_count: usize,
    pub rank: usize,
    pub kernel_preserved: bool,
    /// Eigenvalues that break the check (nonzero with `Re ≤ 0`, or surplus zeros).
    #[serde(serialize_with = "ser_complex_list")]
    pub offending: Vec<C64>,
    pub passed: bool,
}

pub(crate) fn ser_complex_list<S: serde::Serializer>(
    v: &[C64],
    s: S,
) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Computes the spectrum of `KL` and its verdict without failing.
pub fn gain_spectrum(weights: &StressWeights, gain: &GainMatrix) -> Result<GainReport, StressError> {
    let l = weights.laplacian();
    let n = l.nrows();
    if gain.len() != n {
        return Err(StressError::LengthMismatch {
            expected: n,
            got: gain.len(),
        });
    }
    let kl = gain.scale_rows(l);
    let mut eigenvalues: Vec<C64> = kl.complex_eigenvalues().iter().cloned().collect();
    eigenvalues.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let kmax = gain.entries().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = ZERO_EIG_TOL * linalg::spectral_norm(l) * kmax;
    let is_zero = |z: &C64| z.norm() <= tol;
    let zero_count = eigenvalues.iter().filter(|z| is_zero(z)).count();
    let mut offending: Vec<C64> = eigenvalues
        .iter()
        .filter(|z| !is_zero(z) && z.re <= 0.0)
        .cloned()
        .collect();
    if zero_count > 3 {
        offending.extend(eigenvalues.iter().filter(|z| is_zero(z)).skip(3).cloned());
    }
    let rank = linalg::rank(&kl, ZERO_EIG_TOL);
    let kernel_preserved = rank + 3 == n;
    let passed = zero_count == 3 && offending.is_empty() && kernel_preserved;
    Ok(GainReport {
        eigenvalues,
        zero_count,
        rank,
        kernel_preserved,
        offending,
        passed,
    })
}

/// Passes iff `KL` has exactly three zero eigenvalues, all others have positive
/// real part, and `rank(KL) = n − 3`.
pub fn validate_gain(weights: &StressWeights, gain: &GainMatrix) -> Result<GainReport, StressError> {
    let report = gain_spectrum(weights, gain)?;
    if report.passed {
        Ok(report)
    } else {
        Err(StressError::GainRejected(Box::new(report)))
    }
}
