//! Closed-form trajectory from an initial configuration inside the shape set.

use nalgebra::Vector3;

use super::chains::SpectralReport;
use super::{CaseLabel, SpectralError};
use crate::formation::{shape_distance, Configuration, ShapeBasis};
use crate::linalg::{self, C64};

/// Relative distance to the shape set accepted for `p(0)`.
pub const IN_SHAPE_TOL: f64 = 1e-8;

/// `p(t) = Σ_i α_i·e^{λ t}·Σ_j x_{k−j}·t^j/j!` over the three ordered chain
/// vectors.
#[derive(Clone, Debug)]
pub struct AnalyticTrajectory {
    pub label: CaseLabel,
    pub alphas: [C64; 3],
    report: SpectralReport,
    basis: ShapeBasis,
}

pub fn analytic_solution(
    p0: &Configuration,
    report: &SpectralReport,
    basis: &ShapeBasis,
) -> Result<AnalyticTrajectory, SpectralError> {
    if p0.len() != basis.len() {
        return Err(SpectralError::LengthMismatch {
            expected: basis.len(),
            got: p0.len(),
        });
    }
    let distance = shape_distance(p0, basis);
    if distance > IN_SHAPE_TOL * linalg::norm_c(p0).max(1.0) {
        return Err(SpectralError::OutOfShape { distance });
    }
    let coords = basis.coordinates(p0);
    let x = report.coordinate_matrix();
    let sv = x.svd(false, false).singular_values;
    let ratio = if sv[0] == 0.0 { 0.0 } else { sv[2] / sv[0] };
    if !(ratio > super::chains::CHAIN_COND_TOL) {
        return Err(SpectralError::IllConditioned { ratio });
    }
    let alpha = x
        .lu()
        .solve(&coords)
        .ok_or(SpectralError::IllConditioned { ratio })?;
    Ok(AnalyticTrajectory {
        label: report.label(),
        alphas: [alpha[0], alpha[1], alpha[2]],
        report: report.clone(),
        basis: basis.clone(),
    })
}

impl AnalyticTrajectory {
    pub fn report(&self) -> &SpectralReport {
        &self.report
    }

    /// Shape coordinates `[c1, c2, c3]` at time `t`.
    pub fn coordinates_at(&self, t: f64) -> Vector3<C64> {
        let mut out = Vector3::zeros();
        for (alpha, o) in self.alphas.iter().zip(self.report.order.iter()) {
            let chain = &self.report.chains[o.chain];
            let growth = (chain.eigenvalue * t).exp();
            let mut term = Vector3::zeros();
            let mut power = 1.0;
            for j in 0..o.rank {
                if j > 0 {
                    power *= t / j as f64;
                }
                term += chain.vectors[o.rank - 1 - j] * C64::new(power, 0.0);
            }
            out += term * (*alpha * growth);
        }
        out
    }

    pub fn evaluate(&self, t: f64) -> Configuration {
        self.basis.lift(&self.coordinates_at(t))
    }

    /// Human-readable form of the solution for this case.
    pub fn terms(&self) -> &'static str {
        match self.label {
            CaseLabel::C1a | CaseLabel::C1b => "a1*1 + a2*x_l+*exp(l+ t) + a3*x_l-*exp(l- t)",
            CaseLabel::C2 => "a1*1 + [a2*x_l^1 + a3*(x_l^2 + x_l^1 t)]*exp(l t)",
            CaseLabel::C3 => "a1*1 + a2*x_0 + a3*x_l*exp(l t)",
            CaseLabel::C4 => "a1*x_0^1 + a2*(x_0^2 + x_0^1 t) + a3*x_l*exp(l t)",
            CaseLabel::C5 => {
                if self.report.classification.branch == super::Branch::Stationary {
                    "a1*1 + a2*Re(p*) + a3*Im(p*)"
                } else {
                    "a1*x_0^1 + a2*(x_0^2 + x_0^1 t) + a3*y_0"
                }
            }
            CaseLabel::C6 => {
                "a1*x_0^1 + a2*(x_0^2 + x_0^1 t) + a3*(x_0^3 + x_0^2 t + x_0^1 t^2/2)"
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.report.to_json(&self.basis);
        let pair = |z: &C64| serde_json::json!([z.re, z.im]);
        v["alphas"] = serde_json::json!(self.alphas.iter().map(pair).collect::<Vec<_>>());
        v["terms"] = serde_json::json!(self.terms());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_chains, classify, ZERO_TOL};
    use super::*;
    use crate::formation::{affine_map, AffineCoords};
    use crate::presets;

    fn setup(a: [f64; 6], kappa: f64, p0: &AffineCoords) -> (AnalyticTrajectory, Configuration) {
        let shape = presets::square_shape();
        let basis = ShapeBasis::new(&shape).unwrap();
        let rep = build_chains(&classify(&AffineCoords::from(a), kappa, ZERO_TOL)).unwrap();
        let p = affine_map(p0, shape.positions());
        (analytic_solution(&p, &rep, &basis).unwrap(), p)
    }

    #[test]
    fn reproduces_initial_condition() {
        let p0 = AffineCoords::new(0.3, -0.2, 1.1, 0.9, 0.2, -0.1);
        for a in [
            [1.0, 0.0, 0.0, 0.0, -1.0, 1.0],
            [0.5, 0.5, 0.3, 0.3, 0.0, 0.5],
            [0.0, 0.0, 0.3, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.3, 0.0, 0.0, 0.0],
            [1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        ] {
            let (traj, p) = setup(a, 1.0, &p0);
            assert!(linalg::norm_c(&(traj.evaluate(0.0) - &p)) < 1e-10, "{a:?}");
        }
    }

    #[test]
    fn stationary_when_no_motion() {
        let p0 = AffineCoords::new(0.3, -0.2, 1.1, 0.9, 0.2, -0.1);
        let (traj, p) = setup([0.0; 6], 1.0, &p0);
        for t in [0.0, 1.0, 7.5] {
            assert!(linalg::norm_c(&(traj.evaluate(t) - &p)) < 1e-14);
        }
    }

    #[test]
    fn translation_moves_rigidly() {
        let (traj, p) = setup([1.0, 0.5, 0.0, 0.0, 0.0, 0.0], 2.0, &AffineCoords::IDENTITY);
        // p* has shape coordinates (0, 1, ι), so the centroid moves at κ·(vx + ι vy)
        let shift = C64::new(2.0, 1.0) * 3.0;
        let expected = p.map(|z| z + shift);
        assert!(linalg::norm_c(&(traj.evaluate(3.0) - expected)) < 1e-12);
    }

    #[test]
    fn uniform_scaling_expands_about_fixed_centroid() {
        let (traj, p) = setup([0.0, 0.0, 0.4, 0.4, 0.0, 0.0], 1.0, &AffineCoords::IDENTITY);
        let t: f64 = 2.0;
        let expected = &p * C64::new((0.4 * t).exp(), 0.0);
        assert!(linalg::norm_c(&(traj.evaluate(t) - expected)) < 1e-12);
    }

    #[test]
    fn rotation_preserves_norm() {
        let (traj, p) = setup([0.0, 0.0, 0.0, 0.0, -0.7, 0.7], 1.0, &AffineCoords::IDENTITY);
        let n0 = linalg::norm_c(&p);
        for t in [0.5, 1.0, 3.0] {
            assert!((linalg::norm_c(&traj.evaluate(t)) - n0).abs() < 1e-12);
        }
    }

    #[test]
    fn off_shape_initial_condition_is_rejected() {
        let shape = presets::square_shape();
        let basis = ShapeBasis::new(&shape).unwrap();
        let rep = build_chains(&classify(&AffineCoords::translation(1.0, 0.0), 1.0, ZERO_TOL)).unwrap();
        let mut p = shape.positions().clone();
        p[0] += C64::new(0.5, 0.0);
        assert!(matches!(
            analytic_solution(&p, &rep, &basis),
            Err(SpectralError::OutOfShape { .. })
        ));
    }
}
