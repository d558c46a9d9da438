//! Fixed-step integration of `ṗ = −h·K·L·p + κ·M·Bᵀ·p` under piecewise-constant
//! motion schedules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{AffineCoords, Configuration, ShapeBasis};
use crate::linalg::{self, C64};
use crate::motion::{assemble_modified, ModifiedLaplacian, MotionBasis, MotionError};
use crate::spectral::AnalyticTrajectory;
use crate::stress::{GainMatrix, StressWeights};

/// States with a norm above this are treated as a blow-up.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time step must be positive and finite, got {dt}")]
    InvalidStep { dt: f64 },
    #[error("time step {dt} exceeds segment {segment} of length {length}")]
    StepTooLarge { dt: f64, segment: usize, length: f64 },
    #[error("schedule is empty")]
    EmptySchedule,
    #[error("schedule must start at t = 0, first segment starts at {t_start}")]
    ScheduleStart { t_start: f64 },
    #[error("segment {segment} starts at {t_start}, not after the previous one")]
    ScheduleOrder { segment: usize, t_start: f64 },
    #[error("total time {total_time} does not cover the last segment start {last_start}")]
    ScheduleEnd { total_time: f64, last_start: f64 },
    #[error("segment {segment} has a non-finite motion or kappa")]
    NonFiniteSegment { segment: usize },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sample_every must be at least 1")]
    InvalidSampling,
    #[error("state diverged at t = {t} (last finite state at t = {last_t})")]
    Divergence {
        t: f64,
        last_t: f64,
        last_state: Vec<C64>,
    },
    #[error(transparent)]
    Motion(#[from] MotionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }

    /// One-step propagator for the linear system `ẋ = A·x`.
    ///
    /// For a constant `A` both methods are exactly a polynomial in `dt·A`, so
    /// precomputing it gives the same iterates as the stage-by-stage update.
    pub fn propagator(self, a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
        let n = a.nrows();
        let ha = a * dt;
        match self {
            Integrator::Euler => DMatrix::identity(n, n) + ha,
            Integrator::Rk4 => {
                let h2 = &ha * &ha;
                let h3 = &h2 * &ha;
                let h4 = &h3 * &ha;
                DMatrix::identity(n, n) + &ha + h2 / 2.0 + h3 / 6.0 + h4 / 24.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub delta_v: AffineCoords,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    segments: Vec<Segment>,
    total_time: f64,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>, total_time: f64) -> Result<Self, SimError> {
        let first = segments.first().ok_or(SimError::EmptySchedule)?;
        if first.t_start != 0.0 {
            return Err(SimError::ScheduleStart {
                t_start: first.t_start,
            });
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.delta_v.is_finite() && s.kappa.is_finite() && s.t_start.is_finite()) {
                return Err(SimError::NonFiniteSegment { segment: k });
            }
            if k > 0 && s.t_start <= segments[k - 1].t_start {
                return Err(SimError::ScheduleOrder {
                    segment: k,
                    t_start: s.t_start,
                });
            }
        }
        let last_start = segments.last().map(|s| s.t_start).unwrap_or(0.0);
        if !(total_time.is_finite() && total_time > last_start) {
            return Err(SimError::ScheduleEnd {
                total_time,
                last_start,
            });
        }
        Ok(Schedule {
            segments,
            total_time,
        })
    }

    /// A single segment over `[0, total_time)`.
    pub fn constant(delta_v: AffineCoords, kappa: f64, total_time: f64) -> Result<Self, SimError> {
        Self::new(
            vec![Segment {
                t_start: 0.0,
                delta_v,
                kappa,
            }],
            total_time,
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn segment_end(&self, k: usize) -> f64 {
        self.segments
            .get(k + 1)
            .map(|s| s.t_start)
            .unwrap_or(self.total_time)
    }

    /// Assembles the closed loop of every segment.
    pub fn assemble(
        &self,
        weights: &StressWeights,
        gain: &GainMatrix,
        basis: &MotionBasis,
        h: f64,
    ) -> Result<Vec<ModifiedLaplacian>, SimError> {
        self.segments
            .iter()
            .map(|s| assemble_modified(weights, gain, basis, &s.delta_v, h, s.kappa).map_err(Into::into))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub method: Integrator,
    pub dt: f64,
    /// Record every `sample_every`-th step; the final state is always recorded.
    pub sample_every: usize,
}

impl IntegrationOptions {
    pub fn new(method: Integrator, dt: f64) -> Self {
        IntegrationOptions {
            method,
            dt,
            sample_every: 1,
        }
    }

    pub fn sampled(mut self, every: usize) -> Self {
        self.sample_every = every;
        self
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Configuration>,
    /// `‖P_C·p‖`.
    pub shape_error: Vec<f64>,
    /// `‖ṗ − proj_M(ṗ)‖`.
    pub velocity_error: Vec<f64>,
    /// `|ṗ_i|` per agent.
    pub control_norms: Vec<Vec<f64>>,
    /// Segment index active at each sample.
    pub segment: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&Configuration> {
        self.states.last()
    }
}

/// Orthogonal projector onto the complex span of `{1, Re v*, Im v*}`.
pub fn motion_projector(v_star: &Configuration) -> DMatrix<f64> {
    let n = v_star.len();
    let mut a = DMatrix::<f64>::zeros(n, 3);
    for i in 0..n {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = v_star[i].re;
        a[(i, 2)] = v_star[i].im;
    }
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] > 1e-10 * smax {
            let col = u.column(k);
            p += col * col.transpose();
        }
    }
    p
}

fn mat_vec(m: &DMatrix<f64>, x: &[C64], out: &mut [C64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += x[j] * m[(i, j)];
        }
        *o = acc;
    }
}

struct Recorder<'a> {
    basis: &'a ShapeBasis,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn record(&mut self, t: f64, p: &[C64], a: &DMatrix<f64>, proj_m: &DMatrix<f64>, seg: usize) {
        let state = DVector::from_column_slice(p);
        let mut v = vec![C64::new(0.0, 0.0); p.len()];
        mat_vec(a, p, &mut v);
        let mut pv = vec![C64::new(0.0, 0.0); p.len()];
        mat_vec(proj_m, &v, &mut pv);
        let verr = v
            .iter()
            .zip(&pv)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        self.traj.shape_error.push(linalg::norm_c(&self.basis.project_c(&state)));
        self.traj.velocity_error.push(verr);
        self.traj.control_norms.push(v.iter().map(|z| z.norm()).collect());
        self.traj.times.push(t);
        self.traj.states.push(state);
        self.traj.segment.push(seg);
    }
}

/// Integrates from `p0` across `schedule`, with `loops[k]` the assembled closed
/// loop of segment `k`. The state carries over continuously at each switch.
pub fn integrate(
    p0: &Configuration,
    schedule: &Schedule,
    loops: &[ModifiedLaplacian],
    basis: &ShapeBasis,
    opts: &IntegrationOptions,
) -> Result<Trajectory, SimError> {
    let dt = opts.dt;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidStep { dt });
    }
    if opts.sample_every == 0 {
        return Err(SimError::InvalidSampling);
    }
    if loops.len() != schedule.segments.len() {
        return Err(SimError::LengthMismatch {
            expected: schedule.segments.len(),
            got: loops.len(),
        });
    }
    let n = basis.len();
    if p0.len() != n {
        return Err(SimError::LengthMismatch {
            expected: n,
            got: p0.len(),
        });
    }
    for (k, l) in loops.iter().enumerate() {
        if l.closed_loop.nrows() != n {
            return Err(SimError::LengthMismatch {
                expected: n,
                got: l.closed_loop.nrows(),
            });
        }
        let length = schedule.segment_end(k) - schedule.segments[k].t_start;
        if dt > length * (1.0 + 1e-12) {
            return Err(SimError::StepTooLarge {
                dt,
                segment: k,
                length,
            });
        }
    }

    let mut rec = Recorder {
        basis,
        traj: Trajectory::default(),
    };
    let mut p: Vec<C64> = p0.iter().copied().collect();
    let mut next = p.clone();
    let mut step: usize = 0;
    let mut last_t = 0.0;
    let mut t = 0.0;
    let projs: Vec<DMatrix<f64>> = loops.iter().map(|l| motion_projector(&l.v_star)).collect();
    rec.record(0.0, &p, &loops[0].closed_loop, &projs[0], 0);

    for (k, seg) in schedule.segments.iter().enumerate() {
        let a = &loops[k].closed_loop;
        let t0 = seg.t_start;
        let t1 = schedule.segment_end(k);
        let ratio = (t1 - t0) / dt;
        let mut full = ratio.round();
        if (ratio - full).abs() > 1e-9 * ratio.max(1.0) {
            full = ratio.floor();
        }
        let full = full as usize;
        let rem = (t1 - t0) - full as f64 * dt;
        let phi = opts.method.propagator(a, dt);
        let partial = (rem > 1e-12 * dt).then(|| opts.method.propagator(a, rem));
        let total = full + usize::from(partial.is_some());
        for s in 0..total {
            let last_in_segment = s + 1 == total;
            let m = if s < full { &phi } else { partial.as_ref().expect("partial step") };
            mat_vec(m, &p, &mut next);
            t = if last_in_segment {
                t1
            } else {
                t0 + (s + 1) as f64 * dt
            };
            let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                return Err(SimError::Divergence {
                    t,
                    last_t,
                    last_state: p,
                });
            }
            std::mem::swap(&mut p, &mut next);
            last_t = t;
            step += 1;
            let final_step = last_in_segment && k + 1 == schedule.segments.len();
            if step.is_multiple_of(opts.sample_every) || final_step {
                // at a switch the new segment's dynamics apply
                let (ka, kseg) = if last_in_segment && !final_step {
                    (k + 1, k + 1)
                } else {
                    (k, k)
                };
                rec.record(t, &p, &loops[ka].closed_loop, &projs[ka], kseg);
            }
        }
    }
    debug_assert!((t - schedule.total_time).abs() < 1e-9 * schedule.total_time.max(1.0));
    Ok(rec.traj)
}

/// Pointwise comparison between a numerical run and the analytic solution.
#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    /// `max_t ‖p(t)‖` along the analytic path.
    pub max_norm: f64,
}

impl Comparison {
    pub fn relative_error(&self) -> f64 {
        if self.max_norm == 0.0 {
            self.max_error
        } else {
            self.max_error / self.max_norm
        }
    }
}

pub fn compare_with_analytic(
    trajectory: &Trajectory,
    analytic: &AnalyticTrajectory,
) -> Comparison {
    let mut errors = Vec::with_capacity(trajectory.len());
    let mut max_norm: f64 = 0.0;
    for (t, p) in trajectory.times.iter().zip(&trajectory.states) {
        let exact = analytic.evaluate(*t);
        max_norm = max_norm.max(linalg::norm_c(&exact));
        errors.push(linalg::norm_c(&(p - exact)));
    }
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Comparison {
        times: trajectory.times.clone(),
        errors,
        max_error,
        max_norm,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// Slope of `ln ‖p_C‖` against `t`.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln shape_error` over the samples with error in
/// `[1e−10, 0.5·initial]`. `None` when fewer than three samples qualify.
pub fn exponential_fit(trajectory: &Trajectory) -> Option<ExponentialFit> {
    let initial = *trajectory.shape_error.first()?;
    if !(initial > 0.0) {
        return None;
    }
    let hi = 0.5 * initial;
    let pts: Vec<(f64, f64)> = trajectory
        .times
        .iter()
        .zip(&trajectory.shape_error)
        .filter(|(_, e)| **e >= 1e-10 && **e <= hi)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let rate = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(ExponentialFit {
        rate,
        intercept: my - rate * mt,
        r_squared,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::affine_map;
    use crate::motion::{build_motion_basis, MuConstraints};
    use crate::presets;
    use crate::spectral::{analytic_solution, build_chains, classify, ZERO_TOL};
    use crate::stress::design_weights_complete;

    struct Setup {
        weights: StressWeights,
        motion: MotionBasis,
        basis: ShapeBasis,
    }

    fn square() -> Setup {
        let (g, p) = presets::square_complete();
        Setup {
            weights: design_weights_complete(&g, &p).unwrap(),
            motion: build_motion_basis(&g, &p, &MuConstraints::new()).unwrap(),
            basis: ShapeBasis::new(&p).unwrap(),
        }
    }

    fn run(
        s: &Setup,
        p0: &Configuration,
        delta: AffineCoords,
        kappa: f64,
        h: f64,
        tf: f64,
        opts: IntegrationOptions,
    ) -> Result<Trajectory, SimError> {
        let sched = Schedule::constant(delta, kappa, tf).unwrap();
        let loops = sched
            .assemble(&s.weights, &GainMatrix::identity(4), &s.motion, h)
            .unwrap();
        integrate(p0, &sched, &loops, &s.basis, &opts)
    }

    fn off_shape() -> Configuration {
        let mut p = presets::square_shape().positions().clone();
        p[0] += C64::new(0.4, -0.2);
        p[2] += C64::new(-0.1, 0.3);
        p
    }

    #[test]
    fn schedule_validation() {
        let seg = |t| Segment {
            t_start: t,
            delta_v: AffineCoords::ZERO,
            kappa: 1.0,
        };
        assert!(matches!(Schedule::new(vec![], 1.0), Err(SimError::EmptySchedule)));
        assert!(matches!(
            Schedule::new(vec![seg(0.5)], 1.0),
            Err(SimError::ScheduleStart { .. })
        ));
        assert!(matches!(
            Schedule::new(vec![seg(0.0), seg(2.0), seg(1.0)], 3.0),
            Err(SimError::ScheduleOrder { segment: 2, .. })
        ));
        assert!(matches!(
            Schedule::new(vec![seg(0.0), seg(2.0)], 2.0),
            Err(SimError::ScheduleEnd { .. })
        ));
        let s = Schedule::new(vec![seg(0.0), seg(2.0)], 3.0).unwrap();
        assert_eq!(s.segment_end(0), 2.0);
        assert_eq!(s.segment_end(1), 3.0);
    }

    #[test]
    fn zero_motion_decays_like_matrix_exponential() {
        let s = square();
        let p0 = off_shape();
        let tr = run(&s, &p0, AffineCoords::ZERO, 1.0, 1.0, 20.0, IntegrationOptions::new(Integrator::Rk4, 1e-3).sampled(100)).unwrap();
        for w in tr.shape_error.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(*tr.shape_error.last().unwrap() <= 1e-6);
        // oracle: L = U diag(λ) Uᵀ, p(t) = U diag(e^{−λt}) Uᵀ p0
        let eig = s.weights.laplacian().clone().symmetric_eigen();
        let t = 2.0;
        let k = tr.times.iter().position(|x| (x - t).abs() < 1e-9).unwrap();
        let decay = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-l * t).exp()));
        let prop = &eig.eigenvectors * decay * eig.eigenvectors.transpose();
        let exact = linalg::apply_real(&prop, &p0);
        assert!(linalg::norm_c(&(&tr.states[k] - exact)) < 1e-11);
        let fit = exponential_fit(&tr).unwrap();
        assert!((fit.rate + 1.0).abs() < 0.1, "rate {}", fit.rate);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn in_shape_zero_motion_stays_put_and_fit_declines() {
        let s = square();
        let p0 = affine_map(&AffineCoords::new(0.1, 0.2, 1.0, 1.3, 0.2, 0.0), presets::square_shape().positions());
        let tr = run(&s, &p0, AffineCoords::ZERO, 1.0, 1.0, 2.0, IntegrationOptions::new(Integrator::Euler, 1e-2)).unwrap();
        assert!(linalg::norm_c(&(tr.final_state().unwrap() - &p0)) < 1e-12);
        assert!(exponential_fit(&tr).is_none());
    }

    #[test]
    fn translation_reaches_common_velocity() {
        let s = square();
        let p0 = off_shape();
        let tr = run(&s, &p0, AffineCoords::translation(1.0, 0.5), 1.0, 5.0, 10.0, IntegrationOptions::new(Integrator::Rk4, 1e-3).sampled(50)).unwrap();
        let fit = exponential_fit(&tr).unwrap();
        assert!(fit.rate < 0.0 && fit.r_squared >= 0.98);
        // every agent moves with the same velocity after convergence
        let v = tr.control_norms.last().unwrap();
        for x in v {
            assert!((x - v[0]).abs() < 1e-6);
        }
        assert!(*tr.velocity_error.last().unwrap() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order_and_matches_analytic() {
        let s = square();
        let delta = AffineCoords::new(0.5, 0.5, 0.3, 0.3, 0.0, 0.5);
        let rep = build_chains(&classify(&delta, 1.0, ZERO_TOL)).unwrap();
        let p0 = affine_map(&AffineCoords::new(0.2, -0.1, 1.0, 0.8, 0.1, 0.0), presets::square_shape().positions());
        let an = analytic_solution(&p0, &rep, &s.basis).unwrap();
        let err = |dt: f64| {
            let tr = run(&s, &p0, delta, 1.0, 1.0, 3.0, IntegrationOptions::new(Integrator::Rk4, dt)).unwrap();
            compare_with_analytic(&tr, &an)
        };
        let coarse = err(2e-2);
        let fine = err(1e-2);
        assert!(coarse.max_error / fine.max_error >= 8.0);
        let c = err(1e-3);
        assert!(c.relative_error() <= 1e-5);
        let tr = run(&s, &p0, delta, 1.0, 1.0, 3.0, IntegrationOptions::new(Integrator::Euler, 1e-3)).unwrap();
        assert!(compare_with_analytic(&tr, &an).relative_error() <= 1e-2);
    }

    #[test]
    fn rotation_preserves_norm_numerically() {
        let s = square();
        let p0 = presets::square_shape().positions().clone();
        let tr = run(&s, &p0, AffineCoords::rotation(0.8), 1.0, 1.0, 5.0, IntegrationOptions::new(Integrator::Rk4, 1e-3).sampled(100)).unwrap();
        let n0 = linalg::norm_c(&p0);
        for p in &tr.states {
            assert!((linalg::norm_c(p) - n0).abs() < 1e-9);
        }
    }

    #[test]
    fn propagator_matches_stagewise_rk4() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -0.5, 0.3]);
        let x = DVector::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.3, 2.0)]);
        let dt = 0.1;
        let f = |y: &DVector<C64>| linalg::apply_real(&a, y);
        let half = C64::new(dt / 2.0, 0.0);
        let full = C64::new(dt, 0.0);
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * half));
        let k3 = f(&(&x + &k2 * half));
        let k4 = f(&(&x + &k3 * full));
        let stage = &x + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        let prop = linalg::apply_real(&Integrator::Rk4.propagator(&a, dt), &x);
        assert!(linalg::norm_c(&(stage - prop)) < 1e-14);
    }

    #[test]
    fn switching_and_partial_steps_land_on_boundaries() {
        let s = square();
        let segs = vec![
            Segment { t_start: 0.0, delta_v: AffineCoords::translation(1.0, 0.0), kappa: 1.0 },
            Segment { t_start: 0.25, delta_v: AffineCoords::translation(0.0, 1.0), kappa: 1.0 },
        ];
        let sched = Schedule::new(segs, 0.55).unwrap();
        let loops = sched.assemble(&s.weights, &GainMatrix::identity(4), &s.motion, 1.0).unwrap();
        let p0 = presets::square_shape().positions().clone();
        let tr = integrate(&p0, &sched, &loops, &s.basis, &IntegrationOptions::new(Integrator::Rk4, 0.1)).unwrap();
        assert_eq!(tr.times, vec![0.0, 0.1, 0.2, 0.25, 0.35, 0.45, 0.55]);
        assert_eq!(tr.segment, vec![0, 0, 0, 1, 1, 1, 1]);
        // translation: centroid shift 0.25 along x then 0.3 along y
        let end = tr.final_state().unwrap();
        let shift = end.iter().zip(p0.iter()).map(|(a, b)| a - b).sum::<C64>() / 4.0;
        assert!((shift - C64::new(0.25, 0.3)).norm() < 1e-12);
        for w in tr.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn low_gain_with_expansion_diverges() {
        let s = square();
        let p0 = off_shape();
        let res = run(&s, &p0, AffineCoords::new(0.0, 0.0, 3.0, 3.0, 0.0, 0.0), 3.0, 0.1, 30.0, IntegrationOptions::new(Integrator::Euler, 1e-2));
        match res {
            Err(SimError::Divergence { last_state, .. }) => {
                assert!(last_state.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn bad_options_are_rejected() {
        let s = square();
        let p0 = off_shape();
        assert!(matches!(
            run(&s, &p0, AffineCoords::ZERO, 1.0, 1.0, 1.0, IntegrationOptions::new(Integrator::Rk4, 0.0)),
            Err(SimError::InvalidStep { .. })
        ));
        assert!(matches!(
            run(&s, &p0, AffineCoords::ZERO, 1.0, 1.0, 1.0, IntegrationOptions::new(Integrator::Rk4, 2.0)),
            Err(SimError::StepTooLarge { .. })
        ));
    }
}
