//! Closed-form (generalized) eigenvectors of the closed loop on the shape set.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::{block_null_vector, Branch, CaseLabel, Classification, SpectralError};
use crate::formation::{Configuration, ShapeBasis};
use crate::linalg::C64;

/// Chain-basis conditioning below which [`build_chains`] refuses to proceed.
pub const CHAIN_COND_TOL: f64 = 1e-12;

/// One Jordan chain: `vectors[0]` is the eigenvector, and
/// `(κA − λ)·vectors[k] = vectors[k−1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub eigenvalue: C64,
    /// Coordinates in `[1, Re p*, Im p*]`.
    pub vectors: Vec<Vector3<C64>>,
}

/// Position of one basis vector inside the chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChainVector {
    pub chain: usize,
    /// 1 for an eigenvector, `k` for a rank-`k` generalized eigenvector.
    pub rank: usize,
}

/// Eigenvalues, case label and chains for one `(Δ_v, κ)`.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub classification: Classification,
    pub chains: Vec<Chain>,
    /// The three basis vectors in the order the `α` coefficients use.
    pub order: [ChainVector; 3],
    /// Largest relative chain residual in shape coordinates.
    pub max_residual: f64,
    /// `σ_min/σ_max` of the 3×3 coordinate matrix of the chain basis.
    pub conditioning: f64,
    pub warnings: Vec<String>,
}

type V3 = Vector3<C64>;

fn v3(a: C64, b: C64, c: C64) -> V3 {
    Vector3::new(a, b, c)
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn rv(a: f64, b: f64, c: f64) -> V3 {
    v3(r(a), r(b), r(c))
}

fn one() -> V3 {
    rv(1.0, 0.0, 0.0)
}

/// Eigenvector for a nonzero eigenvalue `l = κ·m` of the scaling/shear block.
///
/// Two equivalent forms exist; the one whose block part is larger is kept so
/// that neither degenerates.
fn nonzero_eigenvector(c: &Classification, m: C64) -> V3 {
    let d = &c.delta_v;
    let (vx, vy) = (r(d.dx), r(d.dy));
    let y2 = r(d.dhy);
    let y3 = m - d.dax;
    let alt2 = m - d.day;
    let alt3 = r(d.dhx);
    if y2.norm_sqr() + y3.norm_sqr() >= alt2.norm_sqr() + alt3.norm_sqr() {
        let gamma = (vx * y2 + vy * y3) / m;
        v3(gamma, y2, y3)
    } else {
        let gamma = (vx * alt2 + vy * alt3) / m;
        v3(gamma, alt2, alt3)
    }
}

fn complex_op(c: &Classification) -> Matrix3<C64> {
    c.reduced_operator().map(r)
}

/// Builds the chains for a classified motion and checks them against `κA`.
pub fn build_chains(c: &Classification) -> Result<SpectralReport, SpectralError> {
    let d = &c.delta_v;
    let kappa = c.kappa;
    let k = r(kappa);
    let [zero, lp, lm] = c.eigenvalues;
    let op = complex_op(c);
    let mut warnings = Vec::new();
    let cv = |chain, rank| ChainVector { chain, rank };

    let (chains, order): (Vec<Chain>, [ChainVector; 3]) = match (c.label, c.branch) {
        (CaseLabel::C1a, _) => {
            for (l, name) in [(lp, "l+"), (lm, "l-")] {
                if l.norm() < 1e-8 * kappa.abs() * d.max_abs() {
                    warnings.push(format!("{name} is close to zero; gamma is ill-conditioned"));
                }
            }
            let xp = nonzero_eigenvector(c, lp / k);
            let xm = nonzero_eigenvector(c, lm / k);
            (
                vec![
                    Chain { eigenvalue: zero, vectors: vec![one()] },
                    Chain { eigenvalue: lp, vectors: vec![xp] },
                    Chain { eigenvalue: lm, vectors: vec![xm] },
                ],
                [cv(0, 1), cv(1, 1), cv(2, 1)],
            )
        }
        (CaseLabel::C1b, _) => {
            let a = (d.dax + d.day) / 2.0;
            (
                vec![
                    Chain { eigenvalue: zero, vectors: vec![one()] },
                    Chain { eigenvalue: lp, vectors: vec![rv(d.dx, a, 0.0)] },
                    Chain { eigenvalue: lm, vectors: vec![rv(d.dy, 0.0, a)] },
                ],
                [cv(0, 1), cv(1, 1), cv(2, 1)],
            )
        }
        (CaseLabel::C2, branch) => {
            let a = (d.dax + d.day) / 2.0;
            let l = lp;
            let (x1, x2) = match branch {
                Branch::HxZero => (
                    rv(d.dx, a, 0.0) * k,
                    rv(d.dy / d.dhy, 1.0, a / d.dhy),
                ),
                Branch::HyZero => (
                    rv(d.dy, 0.0, a) * k,
                    rv(d.dx / d.dhx, a / d.dhx, 1.0),
                ),
                _ => {
                    // N = block − a·I is nilpotent of rank one; start from the
                    // unit vector with the larger image under N.
                    let n = Matrix3::new(
                        -a, d.dx, d.dy, //
                        0.0, d.dax - a, d.dhy, //
                        0.0, d.dhx, d.day - a,
                    );
                    let c2 = n[(1, 1)].hypot(n[(2, 1)]);
                    let c3 = n[(1, 2)].hypot(n[(2, 2)]);
                    let e = if c2 >= c3 {
                        rv(0.0, 1.0, 0.0)
                    } else {
                        rv(0.0, 0.0, 1.0)
                    };
                    let ne = n.map(r) * e;
                    // choose c1 so that N·x² is an eigenvector: its first
                    // coordinate satisfies −a·y1 + r·(N e) = 0.
                    let r_ne = r(d.dx) * ne[1] + r(d.dy) * ne[2];
                    let y1 = ne[0];
                    let c1 = (r(a) * y1 - r_ne) / r(a * a);
                    let x2 = v3(c1, e[1], e[2]);
                    let x1 = (n.map(r) * x2) * k;
                    (x1, x2)
                }
            };
            (
                vec![
                    Chain { eigenvalue: zero, vectors: vec![one()] },
                    Chain { eigenvalue: l, vectors: vec![x1, x2] },
                ],
                [cv(0, 1), cv(1, 1), cv(1, 2)],
            )
        }
        (CaseLabel::C3, _) => {
            let m = r(d.dax + d.day);
            let x0 = if d.dx.hypot(d.dy) > c.zero_tol * d.max_abs() {
                rv(0.0, d.dy, -d.dx)
            } else {
                let (n1, n2) = block_null_vector(d).expect("trace is nonzero");
                rv(0.0, n1, n2)
            };
            let xl = nonzero_eigenvector(c, m);
            (
                vec![
                    Chain { eigenvalue: zero, vectors: vec![one()] },
                    Chain { eigenvalue: zero, vectors: vec![x0] },
                    Chain { eigenvalue: m * k, vectors: vec![xl] },
                ],
                [cv(0, 1), cv(1, 1), cv(2, 1)],
            )
        }
        (CaseLabel::C4, branch) => {
            let m = r(d.dax + d.day);
            let (x01, x02) = if branch == Branch::Row2 {
                (
                    rv(kappa * (d.dx * d.day - d.dy * d.dhx), 0.0, 0.0),
                    rv(0.0, d.day, -d.dhx),
                )
            } else {
                (
                    rv(kappa * (d.dx * d.dhy - d.dax * d.dy), 0.0, 0.0),
                    rv(0.0, d.dhy, -d.dax),
                )
            };
            let xl = nonzero_eigenvector(c, m);
            (
                vec![
                    Chain { eigenvalue: zero, vectors: vec![x01, x02] },
                    Chain { eigenvalue: m * k, vectors: vec![xl] },
                ],
                [cv(0, 1), cv(0, 2), cv(1, 1)],
            )
        }
        (CaseLabel::C5, Branch::Stationary) => (
            vec![
                Chain { eigenvalue: zero, vectors: vec![one()] },
                Chain { eigenvalue: zero, vectors: vec![rv(0.0, 1.0, 0.0)] },
                Chain { eigenvalue: zero, vectors: vec![rv(0.0, 0.0, 1.0)] },
            ],
            [cv(0, 1), cv(1, 1), cv(2, 1)],
        ),
        (CaseLabel::C5, branch) => {
            let (x01, x02, y0) = match branch {
                Branch::HxZero => (
                    rv(d.dy, d.dhy, 0.0) * k,
                    rv(0.0, 0.0, 1.0),
                    rv(d.dhy, -d.dy, 0.0),
                ),
                Branch::HyZero => (
                    rv(d.dx, 0.0, d.dhx) * k,
                    rv(0.0, 1.0, 0.0),
                    rv(d.dhx, 0.0, -d.dx),
                ),
                Branch::Translation => (
                    v3(C64::new(d.dx * d.dx, d.dy * d.dy), r(0.0), r(0.0)) * k,
                    v3(r(0.0), r(d.dx), C64::new(0.0, d.dy)),
                    rv(0.0, d.dy, -d.dx),
                ),
                _ => {
                    let n = c.reduced_operator();
                    let e = best_unit(|e| (n * e).norm());
                    let x02 = e.map(r);
                    let x01 = (n * e).map(r);
                    // second kernel vector: the kernel direction least aligned with x01
                    let ker = crate::linalg::nullspace(
                        &nalgebra::DMatrix::from_iterator(3, 3, n.iter().cloned()),
                        1e-9,
                    );
                    let x01_re = (n * e).normalize();
                    let mut best = (f64::NEG_INFINITY, Vector3::zeros());
                    for col in ker.column_iter() {
                        let v = Vector3::new(col[0], col[1], col[2]);
                        let resid = (v - x01_re * x01_re.dot(&v)).norm();
                        if resid > best.0 {
                            best = (resid, v);
                        }
                    }
                    (x01, x02, best.1.map(r))
                }
            };
            (
                vec![
                    Chain { eigenvalue: zero, vectors: vec![x01, x02] },
                    Chain { eigenvalue: zero, vectors: vec![y0] },
                ],
                [cv(0, 1), cv(0, 2), cv(1, 1)],
            )
        }
        (CaseLabel::C6, branch) => {
            let (x1, x2, x3) = match branch {
                Branch::HxVy => (
                    rv(kappa * kappa * d.dy * d.dy * d.dhx, 0.0, 0.0),
                    rv(d.dx * d.dy, 0.0, d.dy * d.dhx) * k,
                    rv(0.0, d.dy, 0.0),
                ),
                Branch::HyVx => (
                    rv(kappa * kappa * d.dx * d.dx * d.dhy, 0.0, 0.0),
                    rv(d.dx * d.dy, d.dx * d.dhy, 0.0) * k,
                    rv(0.0, 0.0, d.dx),
                ),
                _ => {
                    let n = c.reduced_operator();
                    let e = best_unit(|e| (n * n * e).norm());
                    (
                        (n * n * e).map(r),
                        (n * e).map(r),
                        e.map(r),
                    )
                }
            };
            (
                vec![Chain { eigenvalue: zero, vectors: vec![x1, x2, x3] }],
                [cv(0, 1), cv(0, 2), cv(0, 3)],
            )
        }
    };

    let max_residual = chain_residual(&op, &chains);
    if max_residual > 1e-8 {
        warnings.push(format!(
            "chain residual {max_residual:.3e} is large; re-check the case tolerance"
        ));
    }
    let coords = Matrix3::from_columns(&order.map(|o| chains[o.chain].vectors[o.rank - 1]));
    let sv = coords.svd(false, false).singular_values;
    let conditioning = if sv[0] == 0.0 { 0.0 } else { sv[2] / sv[0] };
    if !(conditioning > CHAIN_COND_TOL) {
        return Err(SpectralError::IllConditioned {
            ratio: conditioning,
        });
    }
    Ok(SpectralReport {
        classification: c.clone(),
        chains,
        order,
        max_residual,
        conditioning,
        warnings,
    })
}

fn best_unit<F: Fn(Vector3<f64>) -> f64>(score: F) -> Vector3<f64> {
    let mut best = (f64::NEG_INFINITY, Vector3::zeros());
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = 1.0;
        let s = score(e);
        if s > best.0 {
            best = (s, e);
        }
    }
    best.1
}

/// `max ‖(T − λ)x_k − x_{k−1}‖ / (‖T‖·‖x_k‖ + ‖x_{k−1}‖)` over all chain vectors.
pub(crate) fn chain_residual(op: &Matrix3<C64>, chains: &[Chain]) -> f64 {
    let opn = op.norm().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for ch in chains {
        let shifted = op - Matrix3::identity() * ch.eigenvalue;
        for (k, x) in ch.vectors.iter().enumerate() {
            let prev = if k == 0 { V3::zeros() } else { ch.vectors[k - 1] };
            let res = (shifted * x - prev).norm();
            let scale = opn * x.norm() + prev.norm();
            if scale > 0.0 {
                worst = worst.max(res / scale);
            }
        }
    }
    worst
}

impl SpectralReport {
    pub fn label(&self) -> CaseLabel {
        self.classification.label
    }

    /// Coordinates of the three ordered basis vectors as matrix columns.
    pub fn coordinate_matrix(&self) -> Matrix3<C64> {
        Matrix3::from_columns(&self.order.map(|o| self.chains[o.chain].vectors[o.rank - 1]))
    }

    /// Chain vectors as configurations.
    pub fn lifted_chains(&self, basis: &ShapeBasis) -> Vec<(C64, Vec<Configuration>)> {
        self.chains
            .iter()
            .map(|ch| {
                (
                    ch.eigenvalue,
                    ch.vectors.iter().map(|v| basis.lift(v)).collect(),
                )
            })
            .collect()
    }

    /// Same residual as [`SpectralReport::max_residual`], evaluated on an
    /// assembled `n × n` closed loop.
    pub fn residual_on(&self, closed_loop: &nalgebra::DMatrix<f64>, basis: &ShapeBasis) -> f64 {
        let cn = crate::linalg::spectral_norm(closed_loop).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for (lambda, vecs) in self.lifted_chains(basis) {
            for (k, x) in vecs.iter().enumerate() {
                let ax = crate::linalg::apply_real(closed_loop, x);
                let mut res = ax - x * lambda;
                let mut prev_norm = 0.0;
                if k > 0 {
                    res -= &vecs[k - 1];
                    prev_norm = crate::linalg::norm_c(&vecs[k - 1]);
                }
                let scale = cn * crate::linalg::norm_c(x) + prev_norm;
                if scale > 0.0 {
                    worst = worst.max(crate::linalg::norm_c(&res) / scale);
                }
            }
        }
        worst
    }

    /// JSON view: label, branch, eigenvalues, σ and lifted chains as `[re, im]` pairs.
    pub fn to_json(&self, basis: &ShapeBasis) -> serde_json::Value {
        let pair = |z: C64| serde_json::json!([z.re, z.im]);
        let c = &self.classification;
        let chains: Vec<serde_json::Value> = self
            .lifted_chains(basis)
            .into_iter()
            .map(|(l, vecs)| {
                serde_json::json!({
                    "eigenvalue": pair(l),
                    "vectors": vecs
                        .iter()
                        .map(|v| v.iter().map(|&z| pair(z)).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "case_label": c.label.as_str(),
            "branch": c.branch,
            "delta_v": c.delta_v,
            "kappa": c.kappa,
            "eigenvalues": c.eigenvalues.iter().map(|&z| pair(z)).collect::<Vec<_>>(),
            "sigma": pair(c.sigma),
            "chains": chains,
            "order": self.order,
            "max_residual": self.max_residual,
            "conditioning": self.conditioning,
            "warnings": self.warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{classify, ZERO_TOL};
    use super::*;
    use crate::formation::AffineCoords;

    fn report(a: [f64; 6], kappa: f64) -> SpectralReport {
        build_chains(&classify(&AffineCoords::from(a), kappa, ZERO_TOL)).unwrap()
    }

    #[test]
    fn all_branches_have_small_residuals() {
        let cases: [[f64; 6]; 18] = [
            [1.0, 0.0, 0.0, 0.0, -1.0, 1.0],
            [0.3, -0.2, 0.5, -0.4, 0.7, 0.1],
            [0.2, 0.1, 0.6, 0.6, 0.0, 0.0],
            [0.5, 0.5, 0.3, 0.3, 0.0, 0.5],
            [0.5, 0.5, 0.3, 0.3, 0.4, 0.0],
            [0.5, -0.2, 2.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, 0.3, 0.0, 0.0, 0.0],
            [0.0, 0.6, 0.0, 0.5, 0.0, 0.0],
            [0.0, 1.0, 0.3, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.3, 0.0, 0.0],
            [1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.4, 0.0, 0.0, 0.0, 0.7],
            [0.4, 0.0, 0.0, 0.0, 0.7, 0.0],
            [0.0, 0.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.5],
            [0.3, 1.0, 0.0, 0.0, 0.5, 0.0],
            [1.0, 0.0, 1.0, -1.0, 1.0, -1.0],
            [0.0; 6],
        ];
        for a in cases {
            for kappa in [1.0, -0.7, 2.5] {
                let rep = report(a, kappa);
                assert!(rep.max_residual < 1e-12, "{a:?} {kappa}: {}", rep.max_residual);
                assert!(rep.conditioning > 1e-6, "{a:?}: {}", rep.conditioning);
            }
        }
    }

    #[test]
    fn c5_translation_chain() {
        let rep = report([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0);
        assert_eq!(rep.classification.branch, Branch::Translation);
        let ch = &rep.chains[0];
        assert_eq!(ch.vectors[0], rv(1.0, 0.0, 0.0));
        assert_eq!(ch.vectors[1], rv(0.0, 1.0, 0.0));
    }

    #[test]
    fn c1_rotation_matches_gamma_formula() {
        let w = 0.6;
        let rep = report([0.2, -0.1, 0.0, 0.0, -w, w], 1.0);
        let l = rep.classification.eigenvalues[1];
        let x = rep.chains[1].vectors[0];
        let gamma = (r(0.2) * w + r(-0.1) * l) / l;
        assert!((x - v3(gamma, r(w), l)).norm() < 1e-14);
    }
}
