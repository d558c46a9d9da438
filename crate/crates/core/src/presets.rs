//! Bundled frameworks used by the examples, tests and scenario files.

use crate::formation::{Graph, ReferenceShape};
use crate::linalg::C64;
use nalgebra::DVector;

/// The 4-agent square `[−1−ι, −1+ι, 1+ι, 1−ι]`.
pub fn square_shape() -> ReferenceShape {
    ReferenceShape::from_points(&[(-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, -1.0)])
        .expect("square is non-degenerate")
}

pub const SQUARE_EDGES: [(usize, usize); 6] = [(1, 2), (2, 3), (3, 4), (1, 3), (2, 4), (4, 1)];

/// Complete graph on the square, edges in the order `(1,2),(2,3),(3,4),(1,3),(2,4),(4,1)`.
pub fn square_complete() -> (Graph, ReferenceShape) {
    let g = Graph::from_one_based(4, &SQUARE_EDGES).expect("valid graph");
    (g, square_shape())
}

/// Edge list of the 20-agent framework: five nested squares, each linked to
/// the previous one corner by corner.
pub const TWENTY_AGENT_EDGES: [(usize, usize); 38] = [
    (1, 2),
    (2, 3),
    (3, 4),
    (1, 3),
    (2, 4),
    (4, 1),
    (5, 6),
    (6, 7),
    (7, 8),
    (8, 5),
    (5, 1),
    (6, 2),
    (7, 3),
    (8, 4),
    (9, 10),
    (10, 11),
    (11, 12),
    (12, 9),
    (9, 5),
    (10, 6),
    (11, 7),
    (12, 8),
    (13, 14),
    (14, 15),
    (15, 16),
    (16, 13),
    (13, 9),
    (14, 10),
    (15, 11),
    (16, 12),
    (17, 18),
    (18, 19),
    (19, 20),
    (20, 17),
    (17, 13),
    (18, 14),
    (19, 15),
    (20, 16),
];

/// Square `k` is the base square multiplied by `(1.2·e^{ιπ/3})^k`, `k = 0..4`.
pub fn twenty_agent_shape() -> ReferenceShape {
    let base = square_shape();
    let r = C64::from_polar(1.2, std::f64::consts::FRAC_PI_3);
    let mut pts = Vec::with_capacity(20);
    for k in 0..5 {
        let f = r.powi(k);
        pts.extend(base.positions().iter().map(|z| z * f));
    }
    ReferenceShape::new(DVector::from_vec(pts)).expect("non-degenerate")
}

pub fn twenty_agent() -> (Graph, ReferenceShape) {
    let g = Graph::from_one_based(20, &TWENTY_AGENT_EDGES).expect("valid graph");
    (g, twenty_agent_shape())
}
