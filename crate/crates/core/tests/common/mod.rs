//! Independent reference computations used to check the library.
//!
//! Nothing here calls the library's integrator or lattice code: vector
//! fields are written out by hand and integrated with fixed-step RK4.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use monodromy::flow::track_fiber_point;
use monodromy::lattice::{detect_lattice_basis, DetectOptions, LatticeBasis};
use monodromy::{builtin_system, IntMatrix, IntegrableSystem, PhasePoint, Tolerances};
use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;

pub type State = [f64; 4];

/// Hand-written generator fields of a two-degree-of-freedom builtin.
#[derive(Debug, Clone, Copy)]
pub enum Fields {
    Champagne,
    Oscillator(f64, f64),
}

impl Fields {
    pub fn eval(&self, i: usize, x: &State) -> State {
        let [qx, qy, px, py] = *x;
        match (*self, i) {
            (Fields::Champagne, 0) => {
                let c = 4.0 * (qx * qx + qy * qy) - 2.0;
                [px, py, -c * qx, -c * qy]
            }
            (Fields::Champagne, _) => [-qy, qx, -py, px],
            (Fields::Oscillator(w1, _), 0) => [px, 0.0, -w1 * w1 * qx, 0.0],
            (Fields::Oscillator(_, w2), _) => [0.0, py, 0.0, -w2 * w2 * qy],
        }
    }

    /// Sum of weighted fields.
    pub fn combined(&self, w: &[f64; 2], x: &State) -> State {
        let a = self.eval(0, x);
        let b = self.eval(1, x);
        std::array::from_fn(|k| w[0] * a[k] + w[1] * b[k])
    }
}

fn axpy(a: f64, x: &State, y: &State) -> State {
    std::array::from_fn(|k| y[k] + a * x[k])
}

/// One classical RK4 step of `x' = f(x)`.
pub fn rk4_step(f: &dyn Fn(&State) -> State, x: &State, h: f64) -> State {
    let k1 = f(x);
    let k2 = f(&axpy(h / 2.0, &k1, x));
    let k3 = f(&axpy(h / 2.0, &k2, x));
    let k4 = f(&axpy(h, &k3, x));
    std::array::from_fn(|k| x[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
}

/// Flow of `w_1 X_1 + w_2 X_2` for unit time with `steps` RK4 steps.
pub fn rk4_flow(fields: Fields, x: &State, w: [f64; 2], steps: usize) -> State {
    let f = |y: &State| fields.combined(&w, y);
    let h = 1.0 / steps as f64;
    let mut y = *x;
    for _ in 0..steps {
        y = rk4_step(&f, &y, h);
    }
    y
}

fn dist(a: &State, b: &State) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn to_state(p: &PhasePoint) -> State {
    [p.coords[0], p.coords[1], p.coords[2], p.coords[3]]
}

/// Local minima of `|Phi^{(t1, t2)}(p) - p|` over the grid `[0, t_max]^2`
/// with spacing `step`, computed with fixed-step RK4 at the grid spacing.
/// Returns `(t1, t2, distance)` for minima below `threshold`, shortest
/// first.
pub fn scan_minima(fields: Fields, p: &State, t_max: f64, step: f64, threshold: f64) -> Vec<(f64, f64, f64)> {
    let count = (t_max / step).round() as usize + 1;
    let f2 = |y: &State| fields.eval(1, y);
    let mut starts = Vec::with_capacity(count);
    let mut y = *p;
    for _ in 0..count {
        starts.push(y);
        y = rk4_step(&f2, &y, step);
    }
    let grid: Vec<Vec<f32>> = starts
        .par_iter()
        .map(|s| {
            let f1 = |y: &State| fields.eval(0, y);
            let mut row = Vec::with_capacity(count);
            let mut y = *s;
            for _ in 0..count {
                row.push(dist(&y, p) as f32);
                y = rk4_step(&f1, &y, step);
            }
            row
        })
        .collect();
    let mut out = Vec::new();
    for j in 0..count {
        for i in 0..count {
            if i == 0 && j == 0 {
                continue;
            }
            let d = grid[j][i];
            if (d as f64) >= threshold {
                continue;
            }
            let mut is_min = true;
            'nb: for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= count as i64 || nj >= count as i64 {
                        continue;
                    }
                    let e = grid[nj as usize][ni as usize];
                    let earlier = (nj, ni) < (j as i64, i as i64);
                    if e < d || (e == d && earlier) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                out.push((i as f64 * step, j as f64 * step, d as f64));
            }
        }
    }
    out.sort_by(|a, b| (a.0.hypot(a.1)).total_cmp(&b.0.hypot(b.1)));
    out
}

/// Lattice basis read off the scan minima: among the `pool` shortest
/// minima, the pair spanning the smallest nonzero area, provided every
/// other pooled minimum has integer coordinates in it within `slack`.
pub fn scan_basis(minima: &[(f64, f64, f64)], pool: usize, slack: f64) -> Option<Matrix2<f64>> {
    let pts: Vec<(f64, f64)> = minima.iter().take(pool).map(|m| (m.0, m.1)).collect();
    let mut pairs: Vec<(f64, f64, Matrix2<f64>)> = Vec::new();
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let m = Matrix2::new(pts[a].0, pts[b].0, pts[a].1, pts[b].1);
            let det = m.determinant().abs();
            let (la, lb) = (pts[a].0.hypot(pts[a].1), pts[b].0.hypot(pts[b].1));
            // Skip nearly parallel pairs, whose area is grid noise.
            if det < 0.05 * la * lb {
                continue;
            }
            pairs.push((det, la.max(lb), m));
        }
    }
    // Among pairs of minimal area (up to grid noise), the shortest one
    // keeps the rounding of the other minima well conditioned.
    let area = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let (_, _, m) = pairs.into_iter().filter(|p| p.0 < area * 1.02).min_by(|a, b| a.1.total_cmp(&b.1))?;
    let inv = m.try_inverse()?;
    for p in &pts {
        let c = inv * nalgebra::Vector2::new(p.0, p.1);
        if (c[0] - c[0].round()).abs() > slack || (c[1] - c[1].round()).abs() > slack {
            return None;
        }
    }
    Some(m)
}

/// `B_oracle^-1 B` rounded, if it is within `slack` of an integer
/// unimodular matrix.
pub fn unimodular_change(oracle: &Matrix2<f64>, basis: &DMatrix<f64>, slack: f64) -> Option<[[i64; 2]; 2]> {
    let b = Matrix2::new(basis[(0, 0)], basis[(0, 1)], basis[(1, 0)], basis[(1, 1)]);
    let c = oracle.try_inverse()? * b;
    let r = c.map(|v| v.round());
    if (c - r).amax() > slack {
        return None;
    }
    let det = r.determinant().round() as i64;
    (det.abs() == 1).then(|| [[r[(0, 0)] as i64, r[(0, 1)] as i64], [r[(1, 0)] as i64, r[(1, 1)] as i64]])
}

// ---------------------------------------------------------------------------
// Maslov index by counting tangencies with the vertical plane.

/// Signed number of crossings of the plane `span{X_1, X_2}` with the
/// vertical plane `{q = 0}` along `s -> Phi^{s T}(p)`, sampled at
/// `samples` RK4 steps.
///
/// Writing the plane as the graph `q = R p` with `R = A B^-1` (`A`, `B` the
/// `q`- and `p`-parts of the generators), a crossing is a sign change of
/// `det A`. Its sign is that of the eigenvalue of `R` passing through
/// zero, which is `sign(change of det R) * sign(tr R)`.
pub fn tangency_count(fields: Fields, p: &State, t: [f64; 2], samples: usize) -> i64 {
    // The shear (q, p) -> (q, p - K q) is symplectic and fixes the vertical
    // plane, so crossing signs are unchanged; a generic K keeps the p-part
    // invertible where the plane meets the vertical.
    let k = Matrix2::new(0.7, 0.2, 0.2, 1.3);
    let frame = |x: &State| -> (Matrix2<f64>, Matrix2<f64>) {
        let a = fields.eval(0, x);
        let b = fields.eval(1, x);
        let q = Matrix2::new(a[0], b[0], a[1], b[1]);
        let p = Matrix2::new(a[2], b[2], a[3], b[3]);
        (q, p - k * q)
    };
    let f = |y: &State| fields.combined(&t, y);
    let h = 1.0 / samples as f64;
    let mut x = *p;
    let (mut qa, mut pb) = frame(&x);
    let mut count = 0;
    for _ in 0..samples {
        let y = rk4_step(&f, &x, h);
        let (qa2, pb2) = frame(&y);
        let (d1, d2) = (qa.determinant(), qa2.determinant());
        if d1 == 0.0 || d1.signum() != d2.signum() {
            let r1 = qa * pb.try_inverse().expect("p-part invertible at crossing");
            let r2 = qa2 * pb2.try_inverse().expect("p-part invertible at crossing");
            let through = (r2.determinant() - r1.determinant()).signum();
            let other = (0.5 * (r1.trace() + r2.trace())).signum();
            count += (through * other) as i64;
        }
        x = y;
        qa = qa2;
        pb = pb2;
    }
    count
}

/// Same count for the one-degree-of-freedom oscillator `H = (p^2 + q^2)/2`
/// over one period.
pub fn harmonic_tangency_count(samples: usize) -> i64 {
    let f = |y: &State| [y[2], 0.0, -y[0], 0.0];
    let h = 2.0 * PI / samples as f64;
    let mut x: State = [1.0, 0.0, 0.0, 0.0];
    let ratio = |x: &State| f(x)[0] / f(x)[2];
    let mut count = 0;
    for _ in 0..samples {
        let y = rk4_step(&f, &x, h);
        let (a1, a2) = (f(&x)[0], f(&y)[0]);
        if a1 == 0.0 || a1.signum() != a2.signum() {
            count += (ratio(&y) - ratio(&x)).signum() as i64;
        }
        x = y;
    }
    count
}

// ---------------------------------------------------------------------------
// Action integrals of the champagne bottle.

/// Roots `u_- <= u_+` of `-u^3 + u^2 + h u - l^2/2` on `u > 0` (with
/// `u = r^2`), bracketing the radial motion.
fn radial_turning_points(h: f64, l: f64) -> (f64, f64) {
    let f = |u: f64| -u * u * u + u * u + h * u - 0.5 * l * l;
    let umax = (2.0 + (4.0 + 12.0 * h).sqrt()) / 6.0;
    assert!(f(umax) > 0.0, "value ({h}, {l}) outside the image");
    let bisect = |mut lo: f64, mut hi: f64| {
        let rising = f(hi) > f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut big = umax + 1.0;
    while f(big) > 0.0 {
        big *= 2.0;
    }
    (bisect(0.0, umax), bisect(umax, big))
}

/// Radial action `(1/pi) int sqrt(2 (h - l^2/(2 r^2) - r^4 + r^2)) dr`.
pub fn radial_action(h: f64, l: f64) -> f64 {
    let (u0, u1) = radial_turning_points(h, l);
    let (r0, r1) = (u0.sqrt(), u1.sqrt());
    let (m, w) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
    // r = m - w cos(phi) removes the square-root endpoint behaviour;
    // composite Simpson in phi.
    let n = 2000;
    let integrand = |phi: f64| {
        let r = m - w * phi.cos();
        let k = h - 0.5 * l * l / (r * r) - r.powi(4) + r * r;
        (2.0 * k.max(0.0)).sqrt() * w * phi.sin()
    };
    let hstep = PI / n as f64;
    let mut s = integrand(0.0) + integrand(PI);
    for i in 1..n {
        s += integrand(i as f64 * hstep) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * hstep / 3.0 / PI
}

/// `(d I_r / dh, d I_r / dl)` by central differences.
pub fn radial_action_gradient(h: f64, l: f64) -> [f64; 2] {
    let e = 1e-6;
    [
        (radial_action(h + e, l) - radial_action(h - e, l)) / (2.0 * e),
        (radial_action(h, l + e) - radial_action(h, l - e)) / (2.0 * e),
    ]
}

/// Oracle monodromy of a closed value-space loop: returns the start basis
/// `[T_L, T_r]` with `T_L = (0, 2 pi)` and `T_r = 2 pi grad I_r`, and the
/// matrix `[[1, j], [0, 1]]` where `j` counts the unit jumps of
/// `d I_r / dl` along the loop (a kink where the loop crosses `l = 0` above
/// the critical value).
pub fn action_oracle(loop_values: &[(f64, f64)]) -> (Matrix2<f64>, [[i64; 2]; 2]) {
    let grads: Vec<[f64; 2]> = loop_values.par_iter().map(|&(h, l)| radial_action_gradient(h, l)).collect();
    let mut j = 0i64;
    for w in grads.windows(2) {
        j += (w[0][1] - w[1][1]).round() as i64;
    }
    let g0 = grads[0];
    let basis = Matrix2::new(0.0, 2.0 * PI * g0[0], 2.0 * PI, 2.0 * PI * g0[1]);
    (basis, [[1, j], [0, 1]])
}

// ---------------------------------------------------------------------------
// Freeness of a circle action by brute-force return scan.

/// Smallest `|Phi^{t T}(x) - x|` for `t` in `[margin, 1 - margin]`, sampled
/// with `steps` RK4 steps over the whole circle.
pub fn min_proper_return(fields: Fields, x: &State, t: [f64; 2], steps: usize, margin: f64) -> f64 {
    let f = |y: &State| fields.combined(&t, y);
    let h = 1.0 / steps as f64;
    let mut y = *x;
    let mut best = f64::INFINITY;
    for i in 1..steps {
        y = rk4_step(&f, &y, h);
        let s = i as f64 * h;
        if s >= margin && s <= 1.0 - margin {
            best = best.min(dist(&y, x));
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Shared fixtures.

pub fn system(name: &str, kv: &[(&str, f64)]) -> Arc<dyn IntegrableSystem> {
    let params: BTreeMap<String, f64> = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_system(name, &params).expect("builtin system")
}

/// A point on the fibre over `value`, from the system's seed point.
pub fn fiber_point(sys: &dyn IntegrableSystem, value: &[f64], tol: &Tolerances) -> PhasePoint {
    let v = DVector::from_column_slice(value);
    let seed = sys.seed_point(&v).expect("seed point");
    track_fiber_point(sys, &seed, &v, tol).expect("fibre point")
}

pub fn detect_at(sys: &dyn IntegrableSystem, value: &[f64], tol: &Tolerances) -> LatticeBasis {
    let p = fiber_point(sys, value, tol);
    detect_lattice_basis(sys, &p, None, tol, &DetectOptions::default()).expect("lattice basis")
}

pub fn int2(rows: [[i64; 2]; 2]) -> IntMatrix {
    IntMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()])
}

/// `(h, l)` samples of the circle of `radius` about `(h0, 0)`, starting at
/// angle `a0`, with the last sample equal to the first.
pub fn circle_values(h0: f64, radius: f64, a0: f64, count: usize) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = (0..count)
        .map(|j| {
            let a = a0 + 2.0 * PI * j as f64 / count as f64;
            (h0 + radius * a.cos(), radius * a.sin())
        })
        .collect();
    v.push(v[0]);
    v
}
