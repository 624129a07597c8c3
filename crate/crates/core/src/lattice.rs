//! Period lattices: detection of a basis at a point, continuation of the
//! basis along paths in value space, and monodromy of closed paths.
//!
//! Monodromy uses the row convention: if `B0` and `B1` are the basis
//! matrices (columns are periods) at the start and end of a closed path,
//! then `B1 = B0 M`.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, sample_flow, track_fiber_point, Tolerances};
use crate::latalg::{column_hnf, IntMatrix};
use crate::systems::{IntegrableSystem, PhasePoint, CRITICAL_EXCLUSION};

/// Safety factor between an accepted basis correction and the lattice gap.
pub const GAP_SAFETY: f64 = 0.4;
/// Largest accepted distance of `B0^-1 B1` from an integer matrix.
pub const ROUNDING_THRESHOLD: f64 = 0.01;

/// A basis of the period lattice of one orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeBasis {
    pub anchor: PhasePoint,
    #[serde(with = "crate::serde_util::vector")]
    pub value: DVector<f64>,
    /// Periods `T_1, ..., T_n` as columns.
    #[serde(with = "crate::serde_util::columns")]
    pub basis: DMatrix<f64>,
    /// `|Phi^{T_i}(anchor) - anchor|` for each column.
    pub residuals: Vec<f64>,
}

impl LatticeBasis {
    pub fn n(&self) -> usize {
        self.basis.ncols()
    }

    pub fn period(&self, i: usize) -> DVector<f64> {
        self.basis.column(i).into_owned()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Norm of the shortest vector of the reduced basis.
    pub fn gap(&self) -> f64 {
        lattice_gap(&self.basis)
    }

    /// The same lattice with basis `B U` for an integer matrix `U`.
    /// Residuals are recomputed.
    pub fn transformed(&self, sys: &dyn IntegrableSystem, u: &IntMatrix, tol: &Tolerances) -> Result<LatticeBasis> {
        if u.nrows() != self.n() || u.ncols() != self.n() {
            return Err(Error::Dimension("basis change must be n x n".into()));
        }
        let basis = &self.basis * u.to_f64();
        let residuals = column_residuals(sys, &self.anchor, &basis, tol)?;
        Ok(LatticeBasis { anchor: self.anchor.clone(), value: self.value.clone(), basis, residuals })
    }

    /// Checks the basis invariants: non-degeneracy, per-column residuals
    /// below `newton_tol`, and closure of `trials` random integer
    /// combinations with coefficients in `[-3, 3]` within `10 newton_tol`.
    pub fn validate<R: Rng>(
        &self,
        sys: &dyn IntegrableSystem,
        tol: &Tolerances,
        trials: usize,
        rng: &mut R,
    ) -> Result<()> {
        let n = self.n();
        let scale = self.basis.norm().powi(n as i32);
        if self.basis.determinant().abs() <= 1e-8 * scale {
            return Err(Error::DegenerateCandidates("basis is singular".into()));
        }
        if let Some(r) = self.residuals.iter().find(|&&r| !(r < tol.newton_tol)) {
            return Err(Error::NewtonDiverged { residual: *r, iterations: 0 });
        }
        for _ in 0..trials {
            let coef = DVector::from_fn(n, |_, _| rng.random_range(-3i32..=3) as f64);
            let t = &self.basis * coef;
            let r = return_residual(sys, &self.anchor, t.as_slice(), tol)?;
            if !(r < 10.0 * tol.newton_tol) {
                return Err(Error::DegenerateCandidates(format!(
                    "integer combination fails to close (residual {r:e})"
                )));
            }
        }
        Ok(())
    }
}

/// A closed polyline in value space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    #[serde(with = "crate::serde_util::vectors")]
    pub samples: Vec<DVector<f64>>,
    /// Required clearance of every sample from the critical values.
    pub min_critical_distance: f64,
}

impl LoopPath {
    pub fn new(samples: Vec<DVector<f64>>, min_critical_distance: f64) -> Self {
        LoopPath { samples, min_critical_distance }
    }

    /// `count` equal steps around the circle of `radius` about `center`,
    /// starting at angle `start_angle` and running counterclockwise in the
    /// first two value coordinates. The last sample repeats the first.
    pub fn circle(center: &[f64], radius: f64, start_angle: f64, count: usize) -> Self {
        let mut samples = Vec::with_capacity(count + 1);
        for j in 0..count {
            let a = start_angle + 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            let mut c = DVector::from_column_slice(center);
            c[0] += radius * a.cos();
            c[1] += radius * a.sin();
            samples.push(c);
        }
        samples.push(samples[0].clone());
        LoopPath { samples, min_critical_distance: CRITICAL_EXCLUSION }
    }

    /// Path with all samples equal to `value`.
    pub fn constant(value: &DVector<f64>, count: usize) -> Self {
        LoopPath { samples: vec![value.clone(); count.max(1) + 1], min_critical_distance: CRITICAL_EXCLUSION }
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.samples[0]
    }

    pub fn is_closed(&self) -> bool {
        self.samples.len() >= 2 && self.samples.first() == self.samples.last()
    }

    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        LoopPath { samples, min_critical_distance: self.min_critical_distance }
    }

    /// `self` followed by `other`; both must be closed at the same point.
    pub fn concat(&self, other: &LoopPath) -> Result<Self> {
        if self.samples.last() != other.samples.first() {
            return Err(Error::InvalidPath("paths do not meet".into()));
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().skip(1).cloned());
        Ok(LoopPath { samples, min_critical_distance: self.min_critical_distance.min(other.min_critical_distance) })
    }

    /// Length of the longest step between consecutive samples.
    pub fn max_step(&self) -> f64 {
        self.samples.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max)
    }

    /// Smallest distance of a sample from the critical values of `sys`.
    pub fn critical_clearance(&self, sys: &dyn IntegrableSystem) -> Option<f64> {
        self.samples.iter().filter_map(|c| sys.critical_distance(c)).min_by(|a, b| a.total_cmp(b))
    }

    /// Checks closure, dimensions, step length and critical clearance.
    pub fn validate(&self, sys: &dyn IntegrableSystem, max_step: f64) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InvalidPath("need at least two samples".into()));
        }
        if let Some(c) = self.samples.iter().find(|c| c.len() != sys.k()) {
            return Err(Error::InvalidPath(format!("sample has {} components, system has k = {}", c.len(), sys.k())));
        }
        if self.samples.iter().any(|c| c.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidPath("non-finite sample".into()));
        }
        if !self.is_closed() {
            return Err(Error::InvalidPath("first and last samples differ".into()));
        }
        let step = self.max_step();
        if step >= max_step {
            return Err(Error::InvalidPath(format!("step {step} exceeds max_step {max_step}")));
        }
        let clearance = self.min_critical_distance.max(CRITICAL_EXCLUSION);
        if let Some(d) = self.critical_clearance(sys) {
            if d < clearance {
                return Err(Error::InvalidPath(format!(
                    "sample within {d:e} of a critical value (required {clearance:e})"
                )));
            }
        }
        Ok(())
    }
}

/// Lattice bases continued along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisTrajectory {
    /// One basis per path sample.
    pub bases: Vec<LatticeBasis>,
    /// Number of accepted sub-steps used to reach each sample.
    pub substeps: Vec<usize>,
    /// Largest ratio `|T_new - T_old| / gap` over all accepted steps.
    pub max_jump_ratio: f64,
}

impl BasisTrajectory {
    pub fn start(&self) -> &LatticeBasis {
        &self.bases[0]
    }

    pub fn end(&self) -> &LatticeBasis {
        self.bases.last().expect("trajectory is never empty")
    }

    pub fn anchors(&self) -> Vec<&PhasePoint> {
        self.bases.iter().map(|b| &b.anchor).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.bases.iter().map(LatticeBasis::max_residual).fold(0.0, f64::max)
    }

    pub fn total_substeps(&self) -> usize {
        self.substeps.iter().sum()
    }
}

/// Monodromy of a closed path, `B1 = B0 M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyMatrix {
    pub entries: IntMatrix,
    pub pre_round_residual: f64,
    pub basis_ref: LatticeBasis,
}

/// Result of Gauss-Newton shooting for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSolution {
    pub period: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// `|Phi^t(p) - p|`, measured with the system's displacement.
pub fn return_residual(sys: &dyn IntegrableSystem, p: &PhasePoint, t: &[f64], tol: &Tolerances) -> Result<f64> {
    let end = flow(sys, p, t, tol, false)?.endpoint;
    Ok(sys.displacement(&p.coords, &end.coords).norm())
}

fn column_residuals(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    basis: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    (0..basis.ncols()).map(|i| return_residual(sys, p, basis.column(i).as_slice(), tol)).collect()
}

/// Refines `t0` towards a zero of `G(T) = Phi^T(p) - p` by Gauss-Newton
/// with Jacobian `[X_1(Phi^T p) ... X_n(Phi^T p)]` and step halving.
pub fn refine_period(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    t0: &DVector<f64>,
    tol: &Tolerances,
) -> Result<PeriodSolution> {
    let eval = |t: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let end = flow(sys, p, t.as_slice(), tol, false)?.endpoint;
        Ok((sys.displacement(&p.coords, &end.coords), end.coords))
    };
    let mut t = t0.clone();
    let (mut g, mut end) = eval(&t)?;
    let mut res = g.norm();
    let mut iters = 0;
    let mut polished = false;
    loop {
        if res < tol.newton_tol && polished {
            break;
        }
        if iters >= tol.max_newton_iters || !res.is_finite() {
            if res < tol.newton_tol {
                break;
            }
            return Err(Error::NewtonDiverged { residual: res, iterations: iters });
        }
        let jac = sys.generators(&end);
        let step = jac
            .svd(true, true)
            .solve(&g, 1e-12)
            .map_err(|_| Error::NewtonDiverged { residual: res, iterations: iters })?;
        let mut accepted = false;
        let mut lambda = 1.0;
        for _ in 0..6 {
            let trial = &t - &step * lambda;
            if let Ok((gt, et)) = eval(&trial) {
                let rt = gt.norm();
                if rt < res {
                    t = trial;
                    g = gt;
                    end = et;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        iters += 1;
        if res < tol.newton_tol {
            // Once converged, one more successful step is a polish; a failed
            // one means the integration error floor has been reached.
            if polished || !accepted {
                break;
            }
            polished = true;
        } else if !accepted {
            return Err(Error::NewtonDiverged { residual: res, iterations: iters });
        }
    }
    Ok(PeriodSolution { period: t, residual: res, iterations: iters })
}

// ---------------------------------------------------------------------------
// Reduction

/// Reduced basis of the lattice spanned by the columns of `b`:
/// Lagrange-Gauss for `n = 2`, LLL with `delta = 0.75` otherwise. Columns
/// are then sorted by norm (ties: the column whose first nonzero entry
/// comes earlier goes first), `T_1` gets a positive first nonzero entry and
/// `T_n` is negated if needed to make `det > 0`.
pub fn reduce_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.ncols();
    let mut cols: Vec<DVector<f64>> = b.column_iter().map(|c| c.into_owned()).collect();
    match n {
        0 | 1 => {}
        2 => lagrange_gauss(&mut cols),
        _ => lll(&mut cols, 0.75),
    }
    normalize_columns(&mut cols);
    let mut out = DMatrix::from_columns(&cols);
    if n > 0 && out.determinant() < 0.0 {
        let mut last = out.column_mut(n - 1);
        last.neg_mut();
    }
    out
}

fn lagrange_gauss(cols: &mut [DVector<f64>]) {
    if cols[0].norm_squared() > cols[1].norm_squared() {
        cols.swap(0, 1);
    }
    for _ in 0..200 {
        let mu = (cols[1].dot(&cols[0]) / cols[0].norm_squared()).round();
        if mu != 0.0 {
            let u = cols[0].clone();
            cols[1] -= u * mu;
        }
        if cols[1].norm_squared() < cols[0].norm_squared() * (1.0 - 1e-12) {
            cols.swap(0, 1);
        } else {
            break;
        }
    }
}

fn lll(cols: &mut [DVector<f64>], delta: f64) {
    let n = cols.len();
    let gso = |cols: &[DVector<f64>]| -> (Vec<DVector<f64>>, DMatrix<f64>) {
        let mut bstar: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut mu = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut v = cols[i].clone();
            for j in 0..i {
                mu[(i, j)] = cols[i].dot(&bstar[j]) / bstar[j].norm_squared();
                v -= &bstar[j] * mu[(i, j)];
            }
            bstar.push(v);
        }
        (bstar, mu)
    };
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (_, mu) = gso(cols);
            let q = mu[(k, j)].round();
            if q != 0.0 {
                let u = cols[j].clone();
                cols[k] -= u * q;
            }
        }
        let (bstar, mu) = gso(cols);
        let lhs = bstar[k].norm_squared();
        let rhs = (delta - mu[(k, k - 1)].powi(2)) * bstar[k - 1].norm_squared();
        if lhs >= rhs {
            k += 1;
        } else {
            cols.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
}

fn first_nonzero(v: &DVector<f64>) -> Option<usize> {
    let scale = v.amax();
    v.iter().position(|x| x.abs() > 1e-12 * scale)
}

fn normalize_columns(cols: &mut [DVector<f64>]) {
    cols.sort_by(|a, b| {
        let (na, nb) = (a.norm(), b.norm());
        if (na - nb).abs() <= 1e-9 * na.max(nb) {
            first_nonzero(a).cmp(&first_nonzero(b))
        } else {
            na.total_cmp(&nb)
        }
    });
    if let Some(first) = cols.first_mut() {
        if let Some(i) = first_nonzero(first) {
            if first[i] < 0.0 {
                first.neg_mut();
            }
        }
    }
}

/// Norm of the shortest column of the reduced basis.
pub fn lattice_gap(b: &DMatrix<f64>) -> f64 {
    let r = reduce_basis(b);
    r.column_iter().map(|c| c.norm()).fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// Detection

/// Controls for [`detect_lattice_basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectOptions {
    /// Edge of the scanned time box `[0, t_max]^n`.
    pub t_max: f64,
    /// Grid spacing of the near-return scan.
    pub grid_step: f64,
    /// Seed from the system's closed-form lattice when it has one.
    pub use_analytic: bool,
    /// Number of scan minima (shortest first) refined by Gauss-Newton.
    pub max_candidates: usize,
    /// Scan minima are kept when closer than
    /// `threshold_factor * grid_step * sum_i |X_i(p)|`.
    pub threshold_factor: f64,
    /// Integration tolerance multiplier used during the scan.
    pub scan_tol_factor: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            t_max: 40.0,
            grid_step: 0.05,
            use_analytic: true,
            max_candidates: 64,
            threshold_factor: 4.0,
            scan_tol_factor: 100.0,
        }
    }
}

/// A local minimum of `|Phi^T(p) - p|` on the scan grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanMinimum {
    pub t: DVector<f64>,
    pub distance: f64,
}

/// Grid values of `|Phi^T(p) - p|` over `[0, t_max]^n` with spacing
/// `step`, flattened with the first time coordinate varying fastest.
/// Returns `(count per axis, distances)`.
pub fn near_return_grid(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    t_max: f64,
    step: f64,
    tol: &Tolerances,
) -> Result<(usize, Vec<f64>)> {
    let n = sys.n();
    let count = (t_max / step).floor() as usize + 1;
    let unit = |i: usize| {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        w
    };
    // Points reached by flowing along the slow axes, last axis outermost.
    let mut level: Vec<DVector<f64>> = vec![p.coords.clone()];
    for axis in (1..n).rev() {
        let w = unit(axis);
        let next: Result<Vec<Vec<DVector<f64>>>> =
            level.par_iter().map(|x| sample_flow(sys, x, &w, step, count, tol)).collect();
        level = next?.into_iter().flatten().collect();
    }
    let w = unit(0);
    let rows: Result<Vec<Vec<f64>>> = level
        .par_iter()
        .map(|x| {
            let pts = sample_flow(sys, x, &w, step, count, tol)?;
            Ok(pts.iter().map(|y| sys.displacement(&p.coords, y).norm()).collect())
        })
        .collect();
    Ok((count, rows?.into_iter().flatten().collect()))
}

/// Local minima of a grid produced by [`near_return_grid`] lying below
/// `threshold`, excluding the origin, sorted by `|T|`.
pub fn grid_minima(n: usize, count: usize, step: f64, dist: &[f64], threshold: f64) -> Vec<ScanMinimum> {
    let index = |flat: usize| -> Vec<usize> {
        let mut idx = Vec::with_capacity(n);
        let mut f = flat;
        for _ in 0..n {
            idx.push(f % count);
            f /= count;
        }
        idx
    };
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|&x| x != 0))
        .collect();
    let mut out = Vec::new();
    for flat in 1..dist.len() {
        let d = dist[flat];
        if !(d < threshold) {
            continue;
        }
        let idx = index(flat);
        let is_min = offsets.iter().all(|o| {
            let mut nf = 0usize;
            let mut mul = 1usize;
            for a in 0..n {
                let v = idx[a] as i64 + o[a];
                if v < 0 || v >= count as i64 {
                    return true;
                }
                nf += v as usize * mul;
                mul *= count;
            }
            // Strict on one side so plateaus yield a single minimum.
            (d, flat) < (dist[nf], nf) || dist[nf].is_nan()
        });
        if is_min {
            let t = DVector::from_iterator(n, idx.iter().map(|&i| i as f64 * step));
            out.push(ScanMinimum { t, distance: d });
        }
    }
    out.sort_by(|a, b| a.t.norm().total_cmp(&b.t.norm()));
    out
}

/// Finds a reduced basis of the period lattice of the orbit through `p`.
///
/// Candidate periods come from `hints` if given, otherwise from the
/// system's closed-form lattice (when `opts.use_analytic`), otherwise from
/// a near-return scan. Candidates are refined by Gauss-Newton and sieved
/// into a basis of the lattice they generate.
pub fn detect_lattice_basis(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    hints: Option<&[DVector<f64>]>,
    tol: &Tolerances,
    opts: &DetectOptions,
) -> Result<LatticeBasis> {
    let n = sys.n();
    if p.dim() != sys.dim() {
        return Err(Error::Dimension("phase point does not match system".into()));
    }
    if !sys.in_regular_domain(&p.coords) {
        return Err(Error::LeftRegularDomain);
    }
    let value = sys.integral_map(&p.coords);

    let seeds: Vec<DVector<f64>> = if let Some(h) = hints.filter(|h| !h.is_empty()) {
        if h.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension(format!("period hints must have {n} components")));
        }
        h.to_vec()
    } else if let Some(b) = opts.use_analytic.then(|| sys.analytic_lattice(&value)).flatten() {
        b.column_iter().map(|c| c.into_owned()).collect()
    } else {
        scan_seeds(sys, p, tol, opts)?
    };

    let refined: Vec<Result<PeriodSolution>> = seeds.par_iter().map(|s| refine_period(sys, p, s, tol)).collect();
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    let mut last_err = None;
    let min_len = 1e-6 * (1.0 + seeds.iter().map(|s| s.norm()).fold(0.0, f64::max));
    for r in refined {
        match r {
            Ok(sol) if sol.period.norm() > min_len => {
                if !candidates.iter().any(|c| (c - &sol.period).norm() < 1e-6 * (1.0 + c.norm())) {
                    candidates.push(sol.period);
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    if candidates.is_empty() {
        return Err(match last_err {
            Some(e @ Error::NewtonDiverged { .. }) if hints.is_some() => e,
            _ => Error::NoReturnFound { t_max: opts.t_max },
        });
    }
    candidates.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let basis = lattice_from_candidates(&candidates, n)?;
    let basis = reduce_basis(&basis);

    // Polish the reduced columns individually.
    let mut cols = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for c in basis.column_iter() {
        let sol = refine_period(sys, p, &c.into_owned(), tol)?;
        residuals.push(sol.residual);
        cols.push(sol.period);
    }
    let basis = DMatrix::from_columns(&cols);
    let scale = basis.norm().powi(n as i32);
    if basis.determinant().abs() <= 1e-8 * scale {
        return Err(Error::DegenerateCandidates("refined basis is singular".into()));
    }
    Ok(LatticeBasis { anchor: p.clone(), value, basis, residuals })
}

fn scan_seeds(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    tol: &Tolerances,
    opts: &DetectOptions,
) -> Result<Vec<DVector<f64>>> {
    if !(opts.t_max > 0.0 && opts.grid_step > 0.0 && opts.grid_step < opts.t_max) {
        return Err(Error::InvalidParameter { name: "detect".into(), reason: "need 0 < grid_step < t_max".into() });
    }
    let n = sys.n();
    let scan_tol = tol.scaled(opts.scan_tol_factor);
    let (count, dist) = near_return_grid(sys, p, opts.t_max, opts.grid_step, &scan_tol)?;
    let speed: f64 = sys.generators(&p.coords).column_iter().map(|c| c.norm()).sum();
    let threshold = opts.threshold_factor * opts.grid_step * speed.max(1e-12);
    let minima = grid_minima(n, count, opts.grid_step, &dist, threshold);
    if minima.is_empty() {
        return Err(Error::NoReturnFound { t_max: opts.t_max });
    }
    Ok(minima.into_iter().take(opts.max_candidates).map(|m| m.t).collect())
}

/// Basis of the lattice generated by `candidates` (sorted shortest first).
///
/// The first `n` independent candidates form a provisional basis; any
/// remaining candidate with non-integral coordinates in it must have
/// rational coordinates with denominator at most 64, and the basis is then
/// enlarged to the lattice spanned by all candidates through an integer
/// Hermite normal form.
pub fn lattice_from_candidates(candidates: &[DVector<f64>], n: usize) -> Result<DMatrix<f64>> {
    let mut chosen: Vec<DVector<f64>> = Vec::new();
    for c in candidates {
        let mut trial = chosen.clone();
        trial.push(c.clone());
        let m = DMatrix::from_columns(&trial);
        let sv = m.singular_values();
        if sv.min() > 1e-6 * sv.max() {
            chosen = trial;
            if chosen.len() == n {
                break;
            }
        }
    }
    if chosen.len() < n {
        return Err(Error::DegenerateCandidates(format!("candidates span rank {} < {n}", chosen.len())));
    }
    let b = DMatrix::from_columns(&chosen);
    let inv =
        b.clone().try_inverse().ok_or_else(|| Error::DegenerateCandidates("singular provisional basis".into()))?;

    let mut den_lcm = BigInt::one();
    let mut coords: Vec<(DVector<f64>, i64)> = Vec::new();
    for c in candidates {
        let x = &inv * c;
        let den = (1..=64i64)
            .find(|&q| x.iter().all(|v| (v * q as f64 - (v * q as f64).round()).abs() < 1e-5 * q as f64))
            .ok_or_else(|| {
                Error::DegenerateCandidates(format!(
                    "candidate {:?} is not a rational combination of the provisional basis",
                    c.as_slice()
                ))
            })?;
        if den > 1 {
            den_lcm = den_lcm.lcm(&BigInt::from(den));
            coords.push((x, den));
        }
    }
    if coords.is_empty() {
        return Ok(b);
    }
    let q = den_lcm.to_i64().ok_or_else(|| Error::DegenerateCandidates("denominator overflow".into()))?;
    if q > 64 {
        return Err(Error::DegenerateCandidates(format!("candidate denominators too large ({q})")));
    }
    let mut gens = IntMatrix::zeros(n, n + coords.len());
    for i in 0..n {
        gens[(i, i)] = BigInt::from(q);
    }
    for (j, (x, _)) in coords.iter().enumerate() {
        for i in 0..n {
            gens[(i, n + j)] = BigInt::from((x[i] * q as f64).round() as i64);
        }
    }
    let h = column_hnf(&gens);
    if h.ncols() != n {
        return Err(Error::DegenerateCandidates("enlarged lattice lost rank".into()));
    }
    Ok(&b * h.to_f64() / q as f64)
}

// ---------------------------------------------------------------------------
// Continuation

/// Bisection depth after which a continuation step is abandoned.
pub const MAX_BISECTIONS: usize = 14;

/// Continues `start` along `path` by predictor-corrector steps.
///
/// At every step the anchor is moved to the next value by minimal-norm
/// Gauss-Newton and each period is Newton-corrected from its previous
/// value. Steps whose correction exceeds `GAP_SAFETY` times the lattice
/// gap, or whose Newton iteration fails, are bisected.
pub fn continue_basis(
    sys: &dyn IntegrableSystem,
    path: &LoopPath,
    start: &LatticeBasis,
    tol: &Tolerances,
) -> Result<BasisTrajectory> {
    if path.samples.is_empty() {
        return Err(Error::InvalidPath("empty path".into()));
    }
    if path.samples.iter().any(|c| c.len() != sys.k()) {
        return Err(Error::InvalidPath("sample dimension does not match k".into()));
    }
    let c0 = &path.samples[0];
    if (&start.value - c0).norm() > 1e-6 * (1.0 + c0.norm()) {
        return Err(Error::InvalidPath("start basis is not anchored over the first sample".into()));
    }
    let mut cur = start.clone();
    let mut bases = vec![start.clone()];
    let mut substeps = vec![0];
    let mut max_ratio: f64 = 0.0;
    for (j, target) in path.samples.iter().enumerate().skip(1) {
        let (next, used, ratio) = advance(sys, &cur, target, tol, j)?;
        max_ratio = max_ratio.max(ratio);
        bases.push(next.clone());
        substeps.push(used);
        cur = next;
    }
    Ok(BasisTrajectory { bases, substeps, max_jump_ratio: max_ratio })
}

enum StepFailure {
    Jump,
    Newton(Error),
}

fn advance(
    sys: &dyn IntegrableSystem,
    from: &LatticeBasis,
    target: &DVector<f64>,
    tol: &Tolerances,
    sample: usize,
) -> Result<(LatticeBasis, usize, f64)> {
    // Stack of value-space waypoints still to reach, nearest last.
    let mut cur = from.clone();
    let mut pending: Vec<(DVector<f64>, usize)> = vec![(target.clone(), 0)];
    let mut used = 0;
    let mut max_ratio: f64 = 0.0;
    while let Some((goal, depth)) = pending.pop() {
        match try_step(sys, &cur, &goal, tol) {
            Ok((next, ratio)) => {
                cur = next;
                used += 1;
                max_ratio = max_ratio.max(ratio);
            }
            Err(Ok(failure)) => {
                if depth >= MAX_BISECTIONS {
                    return Err(match failure {
                        StepFailure::Jump => Error::StepBisectionExhausted { sample },
                        StepFailure::Newton(e) => e,
                    });
                }
                let mid = (&cur.value + &goal) * 0.5;
                pending.push((goal, depth + 1));
                pending.push((mid, depth + 1));
            }
            Err(Err(e)) => return Err(e),
        }
    }
    Ok((cur, used, max_ratio))
}

/// One corrector step. `Err(Ok(_))` asks for bisection, `Err(Err(_))` is fatal.
fn try_step(
    sys: &dyn IntegrableSystem,
    cur: &LatticeBasis,
    goal: &DVector<f64>,
    tol: &Tolerances,
) -> std::result::Result<(LatticeBasis, f64), std::result::Result<StepFailure, Error>> {
    let anchor = match track_fiber_point(sys, &cur.anchor, goal, tol) {
        Ok(a) => a,
        Err(e @ (Error::LeftRegularDomain | Error::NearCriticalValue { .. })) => return Err(Err(e)),
        Err(e) => return Err(Ok(StepFailure::Newton(e))),
    };
    let gap = cur.gap();
    let mut cols = Vec::with_capacity(cur.n());
    let mut residuals = Vec::with_capacity(cur.n());
    let mut ratio: f64 = 0.0;
    for i in 0..cur.n() {
        let old = cur.period(i);
        let sol = match refine_period(sys, &anchor, &old, tol) {
            Ok(s) => s,
            Err(e @ Error::LeftRegularDomain) => return Err(Err(e)),
            Err(e) => return Err(Ok(StepFailure::Newton(e))),
        };
        let moved = (&sol.period - &old).norm();
        ratio = ratio.max(moved / gap);
        if moved > GAP_SAFETY * gap {
            return Err(Ok(StepFailure::Jump));
        }
        residuals.push(sol.residual);
        cols.push(sol.period);
    }
    let value = sys.integral_map(&anchor.coords);
    Ok((LatticeBasis { anchor, value, basis: DMatrix::from_columns(&cols), residuals }, ratio))
}

// ---------------------------------------------------------------------------
// Monodromy

/// `M = round(B0^-1 B1)` from a trajectory along a closed path.
pub fn monodromy_from_trajectory(traj: &BasisTrajectory) -> Result<MonodromyMatrix> {
    let b0 = &traj.start().basis;
    let b1 = &traj.end().basis;
    let x = b0.clone().lu().solve(b1).ok_or_else(|| Error::DegenerateCandidates("start basis is singular".into()))?;
    let (m, residual) = IntMatrix::round_from(&x);
    if !(residual < ROUNDING_THRESHOLD) {
        return Err(Error::NonIntegerMonodromy { residual });
    }
    let recon = (b0 * m.to_f64() - b1).norm();
    if !(recon < 1e-6 * b1.norm()) {
        return Err(Error::NonIntegerMonodromy { residual: recon / b1.norm() });
    }
    let det = m.det();
    if det != BigInt::one() {
        return Err(Error::NonUnimodular { det: det.to_string() });
    }
    Ok(MonodromyMatrix { entries: m, pre_round_residual: residual, basis_ref: traj.start().clone() })
}

/// Monodromy of a closed path together with the trajectory behind it.
pub fn monodromy_with_trajectory(
    sys: &dyn IntegrableSystem,
    path: &LoopPath,
    start: &LatticeBasis,
    tol: &Tolerances,
) -> Result<(MonodromyMatrix, BasisTrajectory)> {
    if !path.is_closed() {
        return Err(Error::InvalidPath("monodromy needs a closed path".into()));
    }
    let traj = continue_basis(sys, path, start, tol)?;
    Ok((monodromy_from_trajectory(&traj)?, traj))
}

pub fn monodromy(
    sys: &dyn IntegrableSystem,
    path: &LoopPath,
    start: &LatticeBasis,
    tol: &Tolerances,
) -> Result<MonodromyMatrix> {
    monodromy_with_trajectory(sys, path, start, tol).map(|(m, _)| m)
}
