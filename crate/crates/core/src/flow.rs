//! The composed flow `Phi^{(t_1..t_n)}` of the generators, its Jacobian via
//! the variational equations, and Gauss-Newton tracking of fibre points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{IntegrableSystem, PhasePoint};

/// Integration and Newton tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs_tol: 1e-10, rel_tol: 1e-10, newton_tol: 1e-8, max_newton_iters: 30 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.newton_tol > 0.0 && self.max_newton_iters >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "tolerances".into(),
                reason: "all tolerances must be positive and max_newton_iters >= 1".into(),
            })
        }
    }

    /// Same tolerances with integration accuracy scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Tolerances { abs_tol: self.abs_tol * factor, rel_tol: self.rel_tol * factor, ..*self }
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub endpoint: PhasePoint,
    /// `D Phi^t` with respect to the initial point.
    pub jacobian: Option<DMatrix<f64>>,
    /// `d Phi^t / dt`, whose columns are the generators at the endpoint.
    pub t_jacobian: Option<DMatrix<f64>>,
    /// Sum of the embedded local error estimates of the state.
    pub est_error: f64,
    pub steps: usize,
}

const MAX_STEPS: usize = 2_000_000;

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive Dormand-Prince integration of an autonomous system `y' = f(y)`.
///
/// Only the first `err_len` components enter the error norm together with
/// the remaining ones, so callers can control state and tangent jointly.
pub(crate) struct Dopri<'a> {
    rhs: &'a dyn Fn(&[f64], &mut [f64]),
    abs_tol: f64,
    rel_tol: f64,
    state_len: usize,
}

pub(crate) struct DopriStats {
    pub steps: usize,
    pub est_error: f64,
}

impl<'a> Dopri<'a> {
    pub fn new(rhs: &'a dyn Fn(&[f64], &mut [f64]), tol: &Tolerances, state_len: usize) -> Self {
        Dopri { rhs, abs_tol: tol.abs_tol, rel_tol: tol.rel_tol, state_len }
    }

    /// Integrates from `s = 0` to `s_end`, calling `observe(s0, y0, f0, s1, y1, f1)`
    /// after every accepted step.
    pub fn integrate(
        &self,
        y: &mut Vec<f64>,
        s_end: f64,
        mut observe: impl FnMut(f64, &[f64], &[f64], f64, &[f64], &[f64]),
    ) -> Result<DopriStats> {
        let dim = y.len();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
        let mut tmp = vec![0.0; dim];
        let mut y5 = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        (self.rhs)(y, &mut k[0]);

        let mut s = 0.0;
        let mut h = self.initial_step(y, &k[0], s_end);
        let mut stats = DopriStats { steps: 0, est_error: 0.0 };
        if s_end == 0.0 {
            return Ok(stats);
        }
        let mut rejected_last = false;

        while s < s_end {
            if stats.steps >= MAX_STEPS {
                return Err(Error::StepFailure { at: s / s_end });
            }
            let last = s + h >= s_end;
            if last {
                h = s_end - s;
            }
            for stage in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(stage) {
                        acc += h * A[stage][j] * kj[i];
                    }
                    tmp[i] = acc;
                }
                let (_, rest) = k.split_at_mut(stage);
                (self.rhs)(&tmp, &mut rest[0]);
            }
            // Stage 7 was evaluated at the fifth-order solution (FSAL).
            for i in 0..dim {
                let mut acc5 = y[i];
                let mut acce = 0.0;
                for j in 0..7 {
                    acc5 += h * B5[j] * k[j][i];
                    acce += h * (B5[j] - B4[j]) * k[j][i];
                }
                y5[i] = acc5;
                err[i] = acce;
            }
            let mut norm = 0.0;
            for i in 0..dim {
                let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y5[i].abs());
                norm += (err[i] / sc).powi(2);
            }
            let norm = (norm / dim as f64).sqrt();
            if !norm.is_finite() {
                h *= 0.1;
                if h < 1e-14 * s_end.max(1.0) {
                    return Err(Error::StepFailure { at: s / s_end });
                }
                (self.rhs)(y, &mut k[0]);
                rejected_last = true;
                continue;
            }

            if norm <= 1.0 {
                let s_new = if last { s_end } else { s + h };
                let state_err: f64 = err[..self.state_len].iter().map(|e| e * e).sum::<f64>().sqrt();
                stats.est_error += state_err;
                stats.steps += 1;
                observe(s, y, &k[0], s_new, &y5, &k[6]);
                y.copy_from_slice(&y5);
                let k6 = k[6].clone();
                k[0].copy_from_slice(&k6);
                s = s_new;
                let mut factor = 0.9 * norm.max(1e-10).powf(-0.2);
                factor = factor.clamp(0.2, 5.0);
                if rejected_last {
                    factor = factor.min(1.0);
                }
                h *= factor;
                rejected_last = false;
            } else {
                let factor = (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
                h *= factor;
                rejected_last = true;
                if h < 1e-14 * s_end.max(1.0) {
                    return Err(Error::StepFailure { at: s / s_end });
                }
            }
        }
        Ok(stats)
    }

    fn initial_step(&self, y: &[f64], f0: &[f64], s_end: f64) -> f64 {
        let dim = y.len();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..dim {
            let sc = self.abs_tol + self.rel_tol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (f0[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / dim as f64).sqrt(), (d1 / dim as f64).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(s_end.abs().max(1e-12))
    }
}

fn check_dims(sys: &dyn IntegrableSystem, p: &PhasePoint, t: &[f64]) -> Result<()> {
    if p.dim() != sys.dim() || t.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "point of dim {} and time of dim {} for a system of dim {} and rank {}",
            p.dim(),
            t.len(),
            sys.dim(),
            sys.n()
        )));
    }
    Ok(())
}

/// `Phi^t(p)`, integrated as the single field `sum_i t_i X_i` over unit time.
pub fn flow(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    t: &[f64],
    tol: &Tolerances,
    want_jacobian: bool,
) -> Result<FlowResult> {
    check_dims(sys, p, t)?;
    let d = sys.dim();
    if !p.is_finite() || !sys.in_regular_domain(&p.coords) {
        return Err(Error::LeftRegularDomain);
    }
    if t.iter().all(|&ti| ti == 0.0) {
        return Ok(FlowResult {
            endpoint: p.clone(),
            jacobian: want_jacobian.then(|| DMatrix::identity(d, d)),
            t_jacobian: want_jacobian.then(|| sys.generators(&p.coords)),
            est_error: 0.0,
            steps: 0,
        });
    }

    let tv = t.to_vec();
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let x = DVector::from_column_slice(&y[..d]);
        let v = sys.combined_field(&x, &tv);
        dy[..d].copy_from_slice(v.as_slice());
        if y.len() > d {
            let jv = sys.combined_jacobian(&x, &tv);
            let phi = DMatrix::from_column_slice(d, d, &y[d..]);
            let dphi = jv * phi;
            dy[d..].copy_from_slice(dphi.as_slice());
        }
    };
    let mut y: Vec<f64> = p.coords.as_slice().to_vec();
    if want_jacobian {
        y.extend_from_slice(DMatrix::<f64>::identity(d, d).as_slice());
    }
    let stats = Dopri::new(&rhs, tol, d).integrate(&mut y, 1.0, |_, _, _, _, _, _| {})?;

    let endpoint = DVector::from_column_slice(&y[..d]);
    if !sys.in_regular_domain(&endpoint) {
        return Err(Error::LeftRegularDomain);
    }
    let jacobian = want_jacobian.then(|| DMatrix::from_column_slice(d, d, &y[d..]));
    let t_jacobian = want_jacobian.then(|| sys.generators(&endpoint));
    Ok(FlowResult {
        endpoint: PhasePoint::new(endpoint),
        jacobian,
        t_jacobian,
        est_error: stats.est_error,
        steps: stats.steps,
    })
}

/// Samples the flow of `sum_i w_i X_i` at the uniform times `0, dt, 2 dt, ..`
/// up to `count - 1` steps, using cubic Hermite interpolation between
/// accepted steps. Used by the near-return scan.
pub fn sample_flow(
    sys: &dyn IntegrableSystem,
    p: &DVector<f64>,
    weights: &[f64],
    dt: f64,
    count: usize,
    tol: &Tolerances,
) -> Result<Vec<DVector<f64>>> {
    let d = sys.dim();
    let mut out = Vec::with_capacity(count);
    out.push(p.clone());
    if count <= 1 {
        return Ok(out);
    }
    let w = weights.to_vec();
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let x = DVector::from_column_slice(y);
        dy.copy_from_slice(sys.combined_field(&x, &w).as_slice());
    };
    let t_end = dt * (count - 1) as f64;
    let mut y = p.as_slice().to_vec();
    let mut next = 1usize;
    Dopri::new(&rhs, tol, d).integrate(&mut y, t_end, |s0, y0, f0, s1, y1, f1| {
        let h = s1 - s0;
        while next < count {
            let ts = dt * next as f64;
            if ts > s1 + 1e-12 * t_end {
                break;
            }
            let th = ((ts - s0) / h).clamp(0.0, 1.0);
            let h00 = 2.0 * th.powi(3) - 3.0 * th * th + 1.0;
            let h10 = th.powi(3) - 2.0 * th * th + th;
            let h01 = -2.0 * th.powi(3) + 3.0 * th * th;
            let h11 = th.powi(3) - th * th;
            let v = DVector::from_fn(d, |i, _| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]);
            out.push(v);
            next += 1;
        }
    })?;
    while out.len() < count {
        out.push(DVector::from_column_slice(&y));
    }
    Ok(out)
}

/// Moves `p` onto the fibre `F = target` by Gauss-Newton with minimal-norm
/// updates `dp = DF^+ (target - F(p))`.
pub fn track_fiber_point(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    target: &DVector<f64>,
    tol: &Tolerances,
) -> Result<PhasePoint> {
    if target.len() != sys.k() || p.dim() != sys.dim() {
        return Err(Error::Dimension("track_fiber_point".into()));
    }
    if let Some(dist) = sys.critical_distance(target) {
        if sys.is_near_critical(target) {
            return Err(Error::NearCriticalValue { distance: dist });
        }
    }
    let mut x = p.coords.clone();
    let mut res = sys.integral_map(&x) - target;
    let mut rnorm = res.norm();
    let mut iters = 0;
    while rnorm >= tol.newton_tol {
        if iters >= tol.max_newton_iters || !rnorm.is_finite() {
            return Err(Error::NewtonDiverged { residual: rnorm, iterations: iters });
        }
        x -= min_norm_step(&sys.integral_jacobian(&x), &res)?;
        res = sys.integral_map(&x) - target;
        rnorm = res.norm();
        iters += 1;
    }
    // One polishing step once inside the tolerance; kept only if it helps.
    if rnorm > 0.0 {
        if let Ok(step) = min_norm_step(&sys.integral_jacobian(&x), &res) {
            let y = &x - step;
            if (sys.integral_map(&y) - target).norm() < rnorm {
                x = y;
            }
        }
    }
    if !sys.in_regular_domain(&x) {
        return Err(Error::LeftRegularDomain);
    }
    Ok(PhasePoint::new(x))
}

/// `J^T (J J^T)^{-1} r` for a full-row-rank `J`.
fn min_norm_step(jac: &DMatrix<f64>, res: &DVector<f64>) -> Result<DVector<f64>> {
    let jjt = jac * jac.transpose();
    let y = jjt.lu().solve(res).ok_or(Error::NewtonDiverged { residual: res.norm(), iterations: 0 })?;
    Ok(jac.transpose() * y)
}
