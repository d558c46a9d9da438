//! Complex-plane representation of planar formations.
//!
//! Positions are stacked in a [`Configuration`] (`ℂⁿ`), planar affine maps are
//! parameterized by six real [`AffineCoords`], and the desired shape set is the
//! complex span of `{1, Re p*, Im p*}` handled by [`ShapeBasis`].

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, C64};

/// Stacked agent positions, real part = x (m), imaginary part = y (m).
pub type Configuration = DVector<C64>;

/// Singular-value threshold (relative to σ_max) for rank and degeneracy tests.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate undirected edge {{{a}, {b}}}")]
    DuplicateEdge { a: usize, b: usize },
    #[error("node index {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("configuration contains non-finite entries")]
    NonFinite,
    #[error("degenerate reference shape: 1, Re(p*), Im(p*) are not independent (σ_min/σ_max = {ratio:.3e})")]
    DegenerateShape { ratio: f64 },
}

/// Undirected interaction graph with one stored direction per edge.
///
/// Edges are `(tail, head)` pairs, zero-based, kept in the order given. Every
/// matrix derived from the graph (B, M, L) follows that order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, FormationError> {
        if node_count == 0 {
            return Err(FormationError::EmptyGraph);
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in &edges {
            for node in [a, b] {
                if node >= node_count {
                    return Err(FormationError::NodeOutOfRange {
                        node,
                        n: node_count,
                    });
                }
            }
            if a == b {
                return Err(FormationError::SelfLoop { node: a });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(FormationError::DuplicateEdge { a, b });
            }
        }
        let g = Graph { node_count, edges };
        if !g.is_connected() {
            return Err(FormationError::Disconnected);
        }
        Ok(g)
    }

    /// Builds a graph from 1-based `(tail, head)` pairs.
    pub fn from_one_based(
        node_count: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, FormationError> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == 0 || b == 0 {
                return Err(FormationError::NodeOutOfRange {
                    node: 0,
                    n: node_count,
                });
            }
            zero_based.push((a - 1, b - 1));
        }
        Self::new(node_count, zero_based)
    }

    /// Complete graph with edges ordered lexicographically `(i, j)`, `i < j`.
    pub fn complete(node_count: usize) -> Self {
        let edges = (0..node_count)
            .flat_map(|i| (i + 1..node_count).map(move |j| (i, j)))
            .collect();
        Graph::new(node_count, edges).expect("complete graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_complete(&self) -> bool {
        let n = self.node_count;
        self.edges.len() == n * (n - 1) / 2
    }

    /// Neighbours of `i` as `(j, edge_index)`, in edge order.
    pub fn neighbor_edges(&self, i: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(k, &(a, b))| {
                if a == i {
                    Some((b, k))
                } else if b == i {
                    Some((a, k))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges
            .iter()
            .any(|&(a, b)| (a == i && b == j) || (a == j && b == i))
    }

    /// 1-based edge list, for serialization.
    pub fn one_based_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect()
    }

    fn is_connected(&self) -> bool {
        let n = self.node_count;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = n;
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
        components == 1
    }
}

/// Incidence matrix `B` (n × |Z|): `+1` at the tail, `−1` at the head.
pub fn incidence_matrix(graph: &Graph) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(graph.node_count(), graph.edge_count());
    for (k, &(tail, head)) in graph.edges().iter().enumerate() {
        b[(tail, k)] = 1.0;
        b[(head, k)] = -1.0;
    }
    b
}

/// Centered reference shape `p*`.
///
/// Construction re-centers the input so the body frame sits at the centroid;
/// the applied shift is kept in [`ReferenceShape::shift`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceShape {
    p_star: Configuration,
    shift: C64,
}

impl ReferenceShape {
    pub fn new(positions: Configuration) -> Result<Self, FormationError> {
        if positions.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(FormationError::NonFinite);
        }
        let n = positions.len();
        if n < 3 {
            return Err(FormationError::DegenerateShape { ratio: 0.0 });
        }
        let mean = positions.iter().sum::<C64>() / n as f64;
        let p_star = positions.map(|c| c - mean);
        let phi = shape_matrix(&p_star);
        let s = linalg::singular_values(&phi);
        let ratio = if s[0] == 0.0 { 0.0 } else { s[2] / s[0] };
        if ratio < RANK_TOL {
            return Err(FormationError::DegenerateShape { ratio });
        }
        Ok(ReferenceShape {
            p_star,
            shift: -mean,
        })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, FormationError> {
        Self::new(DVector::from_iterator(
            points.len(),
            points.iter().map(|&(x, y)| C64::new(x, y)),
        ))
    }

    pub fn positions(&self) -> &Configuration {
        &self.p_star
    }

    /// Shift that was added to the raw input to center it.
    pub fn shift(&self) -> C64 {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.p_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_star.is_empty()
    }
}

/// Real n×3 matrix `[1, Re x, Im x]`.
pub fn shape_matrix(x: &Configuration) -> DMatrix<f64> {
    let n = x.len();
    let mut phi = DMatrix::zeros(n, 3);
    for i in 0..n {
        phi[(i, 0)] = 1.0;
        phi[(i, 1)] = x[i].re;
        phi[(i, 2)] = x[i].im;
    }
    phi
}

/// Six affine coordinates `Δ = [δx δy δax δay δhx δhy]`.
///
/// As a shape transform these are translations, axis scalings and shears; as a
/// motion they are the corresponding rates. Serialized as a 6-element array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct AffineCoords {
    pub dx: f64,
    pub dy: f64,
    pub dax: f64,
    pub day: f64,
    pub dhx: f64,
    pub dhy: f64,
}

impl From<[f64; 6]> for AffineCoords {
    fn from(a: [f64; 6]) -> Self {
        AffineCoords {
            dx: a[0],
            dy: a[1],
            dax: a[2],
            day: a[3],
            dhx: a[4],
            dhy: a[5],
        }
    }
}

impl From<AffineCoords> for [f64; 6] {
    fn from(d: AffineCoords) -> Self {
        d.to_array()
    }
}

impl AffineCoords {
    pub const ZERO: AffineCoords = AffineCoords {
        dx: 0.0,
        dy: 0.0,
        dax: 0.0,
        day: 0.0,
        dhx: 0.0,
        dhy: 0.0,
    };

    pub const IDENTITY: AffineCoords = AffineCoords {
        dx: 0.0,
        dy: 0.0,
        dax: 1.0,
        day: 1.0,
        dhx: 0.0,
        dhy: 0.0,
    };

    pub fn new(dx: f64, dy: f64, dax: f64, day: f64, dhx: f64, dhy: f64) -> Self {
        AffineCoords {
            dx,
            dy,
            dax,
            day,
            dhx,
            dhy,
        }
    }

    pub fn translation(vx: f64, vy: f64) -> Self {
        AffineCoords::new(vx, vy, 0.0, 0.0, 0.0, 0.0)
    }

    /// Counter-clockwise spin at angular rate `w` (the `vω` direction).
    pub fn rotation(w: f64) -> Self {
        AffineCoords::new(0.0, 0.0, 0.0, 0.0, -w, w)
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.dx, self.dy, self.dax, self.day, self.dhx, self.dhy]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Complex coefficients `(c1, c2, c3)` of `c1·1 + c2·Re(x) + c3·Im(x)`.
    pub fn coefficients(&self) -> [C64; 3] {
        [
            C64::new(self.dx, self.dy),
            C64::new(self.dax, self.dhy),
            C64::new(self.dhx, self.day),
        ]
    }

    pub fn from_coefficients(c: [C64; 3]) -> Self {
        AffineCoords::new(c[0].re, c[0].im, c[1].re, c[2].im, c[2].re, c[1].im)
    }

    /// Coordinates of `T_self ∘ T_inner`.
    pub fn compose(&self, inner: &AffineCoords) -> AffineCoords {
        let o = self;
        let d = inner;
        AffineCoords {
            dx: o.dx + o.dax * d.dx + o.dhx * d.dy,
            dy: o.dy + o.day * d.dy + o.dhy * d.dx,
            dax: o.dax * d.dax + o.dhx * d.dhy,
            dhy: o.dhy * d.dax + o.day * d.dhy,
            dhx: o.dax * d.dhx + o.dhx * d.day,
            day: o.dhy * d.dhx + o.day * d.day,
        }
    }
}

impl Add for AffineCoords {
    type Output = AffineCoords;
    fn add(self, o: AffineCoords) -> AffineCoords {
        let (a, b) = (self.to_array(), o.to_array());
        AffineCoords::from(std::array::from_fn::<f64, 6, _>(|k| a[k] + b[k]))
    }
}

impl Sub for AffineCoords {
    type Output = AffineCoords;
    fn sub(self, o: AffineCoords) -> AffineCoords {
        let (a, b) = (self.to_array(), o.to_array());
        AffineCoords::from(std::array::from_fn::<f64, 6, _>(|k| a[k] - b[k]))
    }
}

impl Mul<AffineCoords> for f64 {
    type Output = AffineCoords;
    fn mul(self, d: AffineCoords) -> AffineCoords {
        let a = d.to_array();
        AffineCoords::from(std::array::from_fn::<f64, 6, _>(|k| self * a[k]))
    }
}

/// `T_Δ(x) = c1·1 + c2·Re(x) + c3·Im(x)`.
pub fn affine_map(delta: &AffineCoords, x: &Configuration) -> Configuration {
    let [c1, c2, c3] = delta.coefficients();
    x.map(|xi| c1 + c2 * xi.re + c3 * xi.im)
}

/// Interleaved real coordinates `[x1, y1, x2, y2, …]`.
pub fn decode_to_r2(x: &Configuration) -> DVector<f64> {
    DVector::from_iterator(2 * x.len(), x.iter().flat_map(|c| [c.re, c.im]))
}

pub fn encode_from_r2(v: &DVector<f64>) -> Result<Configuration, FormationError> {
    if !v.len().is_multiple_of(2) {
        return Err(FormationError::LengthMismatch {
            expected: v.len() + 1,
            got: v.len(),
        });
    }
    Ok(DVector::from_iterator(
        v.len() / 2,
        v.as_slice().chunks(2).map(|xy| C64::new(xy[0], xy[1])),
    ))
}

/// Basis `[1, Re p*, Im p*]` of the desired shape set with its orthogonal
/// projectors.
///
/// `phi` is real, so `proj_s` and `proj_c` are stored as real matrices and act
/// on real and imaginary parts of a configuration independently.
#[derive(Clone, Debug)]
pub struct ShapeBasis {
    phi: DMatrix<f64>,
    gram_inv: Matrix3<f64>,
    proj_s: DMatrix<f64>,
    proj_c: DMatrix<f64>,
}

impl ShapeBasis {
    pub fn new(shape: &ReferenceShape) -> Result<Self, FormationError> {
        let phi = shape_matrix(shape.positions());
        let gram: Matrix3<f64> = Matrix3::from_iterator((phi.transpose() * &phi).iter().cloned());
        let gram_inv = gram
            .try_inverse()
            .ok_or(FormationError::DegenerateShape { ratio: 0.0 })?;
        let g = DMatrix::from_iterator(3, 3, gram_inv.iter().cloned());
        let proj_s = &phi * g * phi.transpose();
        let n = phi.nrows();
        let proj_c = DMatrix::identity(n, n) - &proj_s;
        Ok(ShapeBasis {
            phi,
            gram_inv,
            proj_s,
            proj_c,
        })
    }

    pub fn len(&self) -> usize {
        self.phi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.nrows() == 0
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn proj_s(&self) -> &DMatrix<f64> {
        &self.proj_s
    }

    pub fn proj_c(&self) -> &DMatrix<f64> {
        &self.proj_c
    }

    /// Least-squares coordinates `[c1, c2, c3]` of `p` in `[1, Re p*, Im p*]`.
    pub fn coordinates(&self, p: &Configuration) -> Vector3<C64> {
        let n = self.len();
        let mut rhs = Vector3::<C64>::zeros();
        for i in 0..n {
            for k in 0..3 {
                rhs[k] += p[i] * self.phi[(i, k)];
            }
        }
        let g = self.gram_inv.map(|v| C64::new(v, 0.0));
        g * rhs
    }

    pub fn lift(&self, c: &Vector3<C64>) -> Configuration {
        DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|i| {
                c[0] * self.phi[(i, 0)] + c[1] * self.phi[(i, 1)] + c[2] * self.phi[(i, 2)]
            }),
        )
    }

    pub fn project_s(&self, p: &Configuration) -> Configuration {
        linalg::apply_real(&self.proj_s, p)
    }

    pub fn project_c(&self, p: &Configuration) -> Configuration {
        linalg::apply_real(&self.proj_c, p)
    }

    /// Orthonormal basis of the orthogonal complement of the shape set, n×(n−3).
    pub fn complement_basis(&self) -> DMatrix<f64> {
        linalg::projector_range(&self.proj_c, self.len().saturating_sub(3))
    }

    /// Orthonormal basis of the shape set, n×3.
    pub fn range_basis(&self) -> DMatrix<f64> {
        linalg::projector_range(&self.proj_s, 3)
    }
}

/// `‖P_C·p‖`, the distance from `p` to the desired shape set.
pub fn shape_distance(p: &Configuration, basis: &ShapeBasis) -> f64 {
    linalg::norm_c(&basis.project_c(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn incidence_of_single_edge() {
        let g = Graph::from_one_based(2, &[(1, 2)]).unwrap();
        let b = incidence_matrix(&g);
        assert_eq!(b, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
    }

    #[test]
    fn incidence_of_k4_has_zero_column_sums() {
        let g = Graph::from_one_based(4, &[(1, 2), (2, 3), (3, 4), (1, 3), (2, 4), (4, 1)]).unwrap();
        let b = incidence_matrix(&g);
        assert_eq!(b.shape(), (4, 6));
        for col in b.column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
    }

    #[test]
    fn twenty_agent_incidence_columns() {
        let (g, _) = presets::twenty_agent();
        let b = incidence_matrix(&g);
        // the listed edge set has 38 edges
        assert_eq!(b.shape(), (20, 38));
        for col in b.column_iter() {
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 18);
        }
    }

    #[test]
    fn graph_rejects_bad_inputs() {
        assert_eq!(
            Graph::new(3, vec![(0, 0)]),
            Err(FormationError::SelfLoop { node: 0 })
        );
        assert_eq!(
            Graph::new(3, vec![(0, 1), (1, 0), (1, 2)]),
            Err(FormationError::DuplicateEdge { a: 1, b: 0 })
        );
        assert_eq!(
            Graph::new(3, vec![(0, 1), (1, 3)]),
            Err(FormationError::NodeOutOfRange { node: 3, n: 3 })
        );
        assert_eq!(Graph::new(4, vec![(0, 1), (2, 3)]), Err(FormationError::Disconnected));
        assert_eq!(Graph::new(0, vec![]), Err(FormationError::EmptyGraph));
    }

    #[test]
    fn identity_affine_map() {
        let x = DVector::from_vec(vec![c(0.3, -1.0), c(2.0, 0.5), c(-1.5, 4.0)]);
        let y = affine_map(&AffineCoords::IDENTITY, &x);
        assert!(linalg::norm_c(&(y - &x)) < 1e-15);
    }

    #[test]
    fn shear_example_on_square() {
        let p = presets::square_shape();
        let d = AffineCoords::new(0.0, 0.0, 1.0, 1.0, 0.5, 0.25);
        let y = affine_map(&d, p.positions());
        let expected = p
            .positions()
            .map(|z| c(1.0, 0.25) * z.re + c(0.5, 1.0) * z.im);
        assert!(linalg::norm_c(&(y - expected)) < 1e-15);
    }

    #[test]
    fn composition_matches_expanded_coefficients() {
        // Direct evaluation of the expanded composition formula.
        let p = presets::square_shape();
        let d = AffineCoords::new(0.4, -1.2, 0.7, 1.3, -0.2, 0.9);
        let o = AffineCoords::new(-0.5, 2.0, 1.1, -0.6, 0.35, 0.15);
        let c1 = c(
            o.dx + o.dax * d.dx + d.dy * o.dhx,
            o.dy + o.day * d.dy + d.dx * o.dhy,
        );
        let c2 = c(
            o.dax * d.dax + o.dhx * d.dhy,
            o.dhy * d.dax + o.day * d.dhy,
        );
        let c3 = c(
            o.dax * d.dhx + o.dhx * d.day,
            o.dhy * d.dhx + o.day * d.day,
        );
        let expected = p.positions().map(|z| c1 + c2 * z.re + c3 * z.im);
        let nested = affine_map(&o, &affine_map(&d, p.positions()));
        let single = affine_map(&o.compose(&d), p.positions());
        assert!(linalg::norm_c(&(&nested - &expected)) < 1e-14);
        assert!(linalg::norm_c(&(&single - &expected)) < 1e-14);
    }

    #[test]
    fn decode_examples() {
        let one = DVector::from_vec(vec![c(1.0, 2.0)]);
        assert_eq!(decode_to_r2(&one).as_slice(), &[1.0, 2.0]);
        let p = presets::square_shape();
        assert_eq!(
            decode_to_r2(p.positions()).as_slice(),
            &[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0]
        );
        assert!(encode_from_r2(&DVector::from_vec(vec![1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn reference_shape_recenters() {
        let s = ReferenceShape::from_points(&[(1.0, 1.0), (3.0, 1.0), (3.0, 3.0), (1.0, 3.0)]).unwrap();
        assert!(s.positions().iter().sum::<C64>().norm() < 1e-15);
        assert_eq!(s.shift(), c(-2.0, -2.0));
    }

    #[test]
    fn collinear_shape_is_degenerate() {
        let err = ReferenceShape::from_points(&[(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(matches!(err, Err(FormationError::DegenerateShape { .. })));
    }

    #[test]
    fn square_projector_matches_gram_formula() {
        let p = presets::square_shape();
        let basis = ShapeBasis::new(&p).unwrap();
        // Gram-matrix oracle, computed independently with explicit 3x3 inverse.
        let phi = shape_matrix(p.positions());
        let gram = phi.transpose() * &phi;
        let oracle = &phi * gram.try_inverse().unwrap() * phi.transpose();
        assert!((basis.proj_s() - &oracle).norm() < 1e-14);
        let l = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0,
                1.0,
            ],
        ) / 4.0;
        assert!((basis.proj_c() - l).norm() < 1e-14);
    }

    #[test]
    fn unit_perturbation_distance() {
        let p = presets::square_shape();
        let basis = ShapeBasis::new(&p).unwrap();
        let mut q = p.positions().clone();
        q[0] += c(1.0, 0.0);
        let mut e1 = DVector::from_element(4, c(0.0, 0.0));
        e1[0] = c(1.0, 0.0);
        let oracle = linalg::norm_c(&(basis.proj_c().map(|v| c(v, 0.0)) * e1));
        assert!((shape_distance(&q, &basis) - oracle).abs() < 1e-14);
        assert!((oracle - 0.5).abs() < 1e-14);
    }

    #[test]
    fn coordinates_round_trip() {
        let p = presets::square_shape();
        let basis = ShapeBasis::new(&p).unwrap();
        let d = AffineCoords::new(1.0, -2.0, 0.5, 1.5, 0.25, -0.75);
        let x = affine_map(&d, p.positions());
        let coords = basis.coordinates(&x);
        let cs = d.coefficients();
        for k in 0..3 {
            assert!((coords[k] - cs[k]).norm() < 1e-14);
        }
        assert!(linalg::norm_c(&(basis.lift(&coords) - x)) < 1e-14);
    }

    fn arb_delta() -> impl Strategy<Value = AffineCoords> {
        prop::array::uniform6(-3.0f64..3.0).prop_map(AffineCoords::from)
    }

    proptest! {
        #[test]
        fn affine_map_is_additive_in_delta(a in arb_delta(), b in arb_delta()) {
            let p = presets::square_shape();
            let lhs = affine_map(&a, p.positions()) + affine_map(&b, p.positions());
            let rhs = affine_map(&(a + b), p.positions());
            prop_assert!(linalg::norm_c(&(lhs - rhs)) < 1e-12);
        }

        #[test]
        fn composition_stays_in_shape_set(a in arb_delta(), b in arb_delta()) {
            let (_, shape) = presets::twenty_agent();
            let basis = ShapeBasis::new(&shape).unwrap();
            let y = affine_map(&b, &affine_map(&a, shape.positions()));
            let scale = 1.0 + linalg::norm_c(&y);
            prop_assert!(shape_distance(&y, &basis) <= 1e-10 * scale);
            prop_assert!(linalg::norm_c(&(basis.project_s(&y) - &y)) <= 1e-10 * scale);
        }

        #[test]
        fn r2_round_trip(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..12)) {
            let x = DVector::from_iterator(v.len(), v.iter().map(|&(a, b)| C64::new(a, b)));
            prop_assert_eq!(encode_from_r2(&decode_to_r2(&x)).unwrap(), x);
        }
    }

    #[test]
    fn projectors_idempotent_and_complementary() {
        for shape in [presets::square_shape(), presets::twenty_agent().1] {
            let b = ShapeBasis::new(&shape).unwrap();
            let n = b.len();
            let ps = b.proj_s();
            let pc = b.proj_c();
            assert!(linalg::spectral_norm(&(ps * ps - ps)) < 1e-12);
            assert!(linalg::spectral_norm(&(pc * pc - pc)) < 1e-12);
            assert!(linalg::spectral_norm(&(ps + pc - DMatrix::identity(n, n))) < 1e-12);
            assert!((ps * b.phi() - b.phi()).norm() < 1e-10);
            assert_eq!(linalg::rank(ps, RANK_TOL), 3);
        }
    }
}
