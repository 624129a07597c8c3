//! Maslov indices of torus cycles for Hamiltonian systems on `R^{2n}`.
//!
//! Tangent vectors `v = (v_q, v_p)` are identified with `v_q - i v_p` in
//! `C^n`. With `omega(u, v) = u_q . v_p - u_p . v_q` the compatible complex
//! structure `J(q, p) = (p, -q)` acts as multiplication by `i`, and
//! `g_J(u, v) = omega(J u, v)` is the Euclidean inner product. A Lagrangian
//! plane with `g_J`-orthonormal basis then becomes a unitary matrix `Z`,
//! and the Maslov index of a loop of planes is the winding number of
//! `det(Z E^-1)^2` for a reference plane `E`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, Tolerances};
use crate::lattice::LatticeBasis;
use crate::systems::{IntegrableSystem, PhasePoint};

/// Symplectic data on `R^{2n}` with coordinates `(q_1..q_n, p_1..p_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticStructure {
    n: usize,
    /// Columns span the reference Lagrangian plane `E`.
    reference_plane: DMatrix<f64>,
}

impl SymplecticStructure {
    /// Standard structure with the vertical reference plane `span{d/dp_i}`.
    pub fn standard(n: usize) -> Self {
        let mut e = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            e[(n + i, i)] = 1.0;
        }
        SymplecticStructure { n, reference_plane: e }
    }

    /// Standard structure with a custom constant reference plane.
    pub fn with_reference_plane(plane: DMatrix<f64>) -> Result<Self> {
        let n = plane.ncols();
        if plane.nrows() != 2 * n {
            return Err(Error::Dimension("reference plane must be 2n x n".into()));
        }
        let s = SymplecticStructure { n, reference_plane: plane };
        let cols: Vec<DVector<f64>> = s.reference_plane.column_iter().map(|c| c.into_owned()).collect();
        s.check_lagrangian(&cols)?;
        unitary_frame(&s, &cols)?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn reference_plane(&self) -> &DMatrix<f64> {
        &self.reference_plane
    }

    /// `omega(u, v) = u_q . v_p - u_p . v_q`.
    pub fn omega(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let n = self.n;
        (0..n).map(|i| u[i] * v[n + i] - u[n + i] * v[i]).sum()
    }

    /// `J(q, p) = (p, -q)`.
    pub fn j(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(2 * n, |i, _| if i < n { v[n + i] } else { -v[i - n] })
    }

    /// `g_J(u, v) = omega(J u, v)`.
    pub fn metric(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.omega(&self.j(u), v)
    }

    /// `v_q - i v_p`.
    pub fn to_complex(&self, v: &DVector<f64>) -> DVector<Complex64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| Complex64::new(v[i], -v[n + i]))
    }

    fn check_lagrangian(&self, cols: &[DVector<f64>]) -> Result<()> {
        let mut worst: f64 = 0.0;
        for a in 0..cols.len() {
            for b in a + 1..cols.len() {
                let scale = cols[a].norm() * cols[b].norm();
                if scale > 0.0 {
                    worst = worst.max(self.omega(&cols[a], &cols[b]).abs() / scale);
                }
            }
        }
        if worst > 1e-8 {
            return Err(Error::NotLagrangian { omega: worst });
        }
        Ok(())
    }

    /// Unitary matrix of the reference plane.
    pub fn reference_unitary(&self) -> DMatrix<Complex64> {
        let cols: Vec<DVector<f64>> = self.reference_plane.column_iter().map(|c| c.into_owned()).collect();
        unitary_frame(self, &cols).expect("reference plane validated at construction")
    }
}

fn unitary_frame(s: &SymplecticStructure, cols: &[DVector<f64>]) -> Result<DMatrix<Complex64>> {
    let n = s.n;
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(n);
    for c in cols {
        let mut v = c.clone();
        // Two passes of modified Gram-Schmidt for stability.
        for _ in 0..2 {
            for u in &ortho {
                let proj = s.metric(u, &v);
                v -= u * proj;
            }
        }
        let norm = s.metric(&v, &v).sqrt();
        if !(norm > 1e-10 * c.norm()) {
            return Err(Error::DependentGenerators);
        }
        ortho.push(v / norm);
    }
    let mut z = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (j, v) in ortho.iter().enumerate() {
        z.set_column(j, &s.to_complex(v));
    }
    let defect = (z.adjoint() * &z - DMatrix::identity(n, n)).norm();
    if defect >= 1e-8 {
        return Err(Error::NotLagrangian { omega: defect });
    }
    Ok(z)
}

/// Unitary matrix `Z` of the plane spanned by the generators at `p`.
pub fn lagrangian_frame(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    s: &SymplecticStructure,
) -> Result<DMatrix<Complex64>> {
    check_hamiltonian(sys, s)?;
    let g = sys.generators(&p.coords);
    let cols: Vec<DVector<f64>> = g.column_iter().map(|c| c.into_owned()).collect();
    s.check_lagrangian(&cols)?;
    unitary_frame(s, &cols)
}

fn check_hamiltonian(sys: &dyn IntegrableSystem, s: &SymplecticStructure) -> Result<()> {
    if !sys.is_hamiltonian() {
        return Err(Error::NotHamiltonian("generators are not symplectic gradients".into()));
    }
    if sys.dim() != 2 * sys.n() || sys.n() != s.n() {
        return Err(Error::NotHamiltonian(format!("need dim = 2n, got dim {} and n {}", sys.dim(), sys.n())));
    }
    Ok(())
}

/// Sampling controls for [`maslov_index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaslovSampling {
    /// Initial number of uniform steps along the cycle.
    pub initial_samples: usize,
    /// Largest accepted phase change per step.
    pub max_phase_step: f64,
    /// Halvings allowed per step before giving up.
    pub max_refinements: usize,
    /// Largest accepted `|Phi^T(start) - start|`.
    pub closure_tol: f64,
    /// Largest accepted distance of the winding from an integer.
    pub winding_tol: f64,
}

impl Default for MaslovSampling {
    fn default() -> Self {
        MaslovSampling {
            initial_samples: 64,
            max_phase_step: PI / 4.0,
            max_refinements: 20,
            closure_tol: 1e-6,
            winding_tol: 0.05,
        }
    }
}

/// Outcome of one Maslov index computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaslovIndex {
    pub index: i64,
    /// Total unwrapped phase divided by `2 pi`.
    pub winding: f64,
    /// `|winding - index|`.
    pub residual: f64,
    /// Number of accepted steps.
    pub samples: usize,
    /// `(s, unwrapped phase)` at every accepted step, starting at `s = 0`.
    pub phase_curve: Vec<(f64, f64)>,
}

/// Phase of `det(Z E^-1)^2` at `p`.
pub fn maslov_phase(
    sys: &dyn IntegrableSystem,
    p: &PhasePoint,
    s: &SymplecticStructure,
    e_inv: &DMatrix<Complex64>,
) -> Result<f64> {
    let z = lagrangian_frame(sys, p, s)?;
    let d = (z * e_inv).determinant();
    Ok((d * d).arg())
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Maslov index of the cycle `s -> Phi^{s T}(start)`, `s in [0, 1]`.
pub fn maslov_index(
    sys: &dyn IntegrableSystem,
    start: &PhasePoint,
    t: &[f64],
    s: &SymplecticStructure,
    sampling: &MaslovSampling,
    tol: &Tolerances,
) -> Result<MaslovIndex> {
    check_hamiltonian(sys, s)?;
    if t.len() != sys.n() {
        return Err(Error::Dimension(format!("cycle needs {} times", sys.n())));
    }
    if t.iter().all(|&x| x == 0.0) {
        return Ok(MaslovIndex { index: 0, winding: 0.0, residual: 0.0, samples: 0, phase_curve: vec![(0.0, 0.0)] });
    }
    let end = flow(sys, start, t, tol, false)?.endpoint;
    let closure = sys.displacement(&start.coords, &end.coords).norm();
    if !(closure < sampling.closure_tol) {
        return Err(Error::CycleNotClosed { residual: closure });
    }

    let e_inv = s.reference_unitary().try_inverse().ok_or_else(|| Error::NotLagrangian { omega: f64::NAN })?;
    let base = 1.0 / sampling.initial_samples.max(1) as f64;
    let mut x = start.clone();
    let mut sv = 0.0;
    let mut phase = maslov_phase(sys, &x, s, &e_inv)?;
    let mut total = 0.0;
    let mut curve = vec![(0.0, 0.0)];
    while sv < 1.0 - 1e-15 {
        let mut h = base.min(1.0 - sv);
        let mut refinements = 0;
        loop {
            let dt: Vec<f64> = t.iter().map(|ti| ti * h).collect();
            let y = flow(sys, &x, &dt, tol, false)?.endpoint;
            let ph = maslov_phase(sys, &y, s, &e_inv)?;
            let dphi = wrap(ph - phase);
            if dphi.abs() < sampling.max_phase_step {
                x = y;
                phase = ph;
                total += dphi;
                sv += h;
                curve.push((sv.min(1.0), total));
                break;
            }
            refinements += 1;
            if refinements > sampling.max_refinements {
                return Err(Error::PhaseStepTooLarge { at: sv });
            }
            h *= 0.5;
        }
    }
    let winding = total / (2.0 * PI);
    let index = winding.round();
    let residual = (winding - index).abs();
    if !(residual < sampling.winding_tol) {
        return Err(Error::NonIntegerWinding { winding });
    }
    Ok(MaslovIndex { index: index as i64, winding, residual, samples: curve.len() - 1, phase_curve: curve })
}

/// Maslov indices of all basis cycles of one fibre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaslovVector {
    pub indices: Vec<i64>,
    pub basis_ref: LatticeBasis,
    pub winding_residuals: Vec<f64>,
    pub sample_counts: Vec<usize>,
}

impl MaslovVector {
    pub fn from_cycles(basis: &LatticeBasis, cycles: &[MaslovIndex]) -> Self {
        MaslovVector {
            indices: cycles.iter().map(|r| r.index).collect(),
            basis_ref: basis.clone(),
            winding_residuals: cycles.iter().map(|r| r.residual).collect(),
            sample_counts: cycles.iter().map(|r| r.samples).collect(),
        }
    }

    /// The indices as a one-row integer functional on the basis.
    pub fn as_row(&self) -> crate::latalg::IntMatrix {
        crate::latalg::IntMatrix::from_rows(&[self.indices.clone()])
    }
}

/// [`maslov_index`] of every column of `basis`, each started at the anchor.
/// Cycles are computed in parallel.
pub fn maslov_cycles(
    sys: &dyn IntegrableSystem,
    basis: &LatticeBasis,
    s: &SymplecticStructure,
    sampling: &MaslovSampling,
    tol: &Tolerances,
) -> Result<Vec<MaslovIndex>> {
    (0..basis.n())
        .into_par_iter()
        .map(|i| maslov_index(sys, &basis.anchor, basis.period(i).as_slice(), s, sampling, tol))
        .collect()
}

/// The Maslov indices of the basis cycles as a vector on `basis`.
pub fn maslov_vector(
    sys: &dyn IntegrableSystem,
    basis: &LatticeBasis,
    s: &SymplecticStructure,
    sampling: &MaslovSampling,
    tol: &Tolerances,
) -> Result<MaslovVector> {
    let cycles = maslov_cycles(sys, basis, s, sampling, tol)?;
    Ok(MaslovVector::from_cycles(basis, &cycles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::builtin_system;
    use std::collections::BTreeMap;

    #[derive(Debug)]
    struct Harmonic;

    impl IntegrableSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn k(&self) -> usize {
            1
        }
        fn n(&self) -> usize {
            1
        }
        fn integral_map(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![0.5 * (x[0] * x[0] + x[1] * x[1])])
        }
        fn integral_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[x[0], x[1]])
        }
        fn generators(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_column_slice(2, 1, &[x[1], -x[0]])
        }
        fn in_regular_domain(&self, x: &DVector<f64>) -> bool {
            x.norm() > 1e-3
        }
        fn is_hamiltonian(&self) -> bool {
            true
        }
    }

    #[test]
    fn structure_identities() {
        let s = SymplecticStructure::standard(2);
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let u = DVector::from_vec(vec![1.1, 0.2, -0.4, 0.9]);
        assert_eq!(s.j(&s.j(&v)), -&v);
        assert!((s.metric(&u, &v) - u.dot(&v)).abs() < 1e-15);
        assert!((s.metric(&u, &v) - s.metric(&v, &u)).abs() < 1e-15);
        let iz = s.to_complex(&v) * Complex64::i();
        assert!((s.to_complex(&s.j(&v)) - iz).norm() < 1e-15);
        let e = s.reference_unitary();
        assert!((e - DMatrix::identity(2, 2) * Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn line_frames() {
        let s = SymplecticStructure::standard(1);
        let vert = unitary_frame(&s, &[DVector::from_vec(vec![0.0, 1.0])]).unwrap();
        assert!((vert[(0, 0)].norm() - 1.0).abs() < 1e-15 && vert[(0, 0)].re.abs() < 1e-15);
        let hor = unitary_frame(&s, &[DVector::from_vec(vec![2.0, 0.0])]).unwrap();
        assert!((hor[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn non_lagrangian_and_dependent() {
        let s = SymplecticStructure::standard(2);
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(s.check_lagrangian(&[a.clone(), b]), Err(Error::NotLagrangian { .. })));
        assert!(matches!(unitary_frame(&s, &[a.clone(), a * 2.0]), Err(Error::DependentGenerators)));
    }

    #[test]
    fn harmonic_orbit_has_index_two() {
        let s = SymplecticStructure::standard(1);
        let p = PhasePoint::from_slice(&[1.0, 0.0]);
        let tol = Tolerances::default();
        let r = maslov_index(&Harmonic, &p, &[2.0 * PI], &s, &MaslovSampling::default(), &tol).unwrap();
        assert_eq!(r.index, 2);
        assert!(r.residual < 1e-6);
        let zero = maslov_index(&Harmonic, &p, &[0.0], &s, &MaslovSampling::default(), &tol).unwrap();
        assert_eq!(zero.index, 0);
        let twice = maslov_index(&Harmonic, &p, &[4.0 * PI], &s, &MaslovSampling::default(), &tol).unwrap();
        assert_eq!(twice.index, 4);
        let back = maslov_index(&Harmonic, &p, &[-2.0 * PI], &s, &MaslovSampling::default(), &tol).unwrap();
        assert_eq!(back.index, -2);
    }

    #[test]
    fn open_cycle_is_rejected() {
        let s = SymplecticStructure::standard(1);
        let p = PhasePoint::from_slice(&[1.0, 0.0]);
        let r = maslov_index(&Harmonic, &p, &[3.0], &s, &MaslovSampling::default(), &Tolerances::default());
        assert!(matches!(r, Err(Error::CycleNotClosed { .. })));
    }

    #[test]
    fn non_hamiltonian_is_rejected() {
        let tw = builtin_system("synthetic-twist", &BTreeMap::new()).unwrap();
        let p = PhasePoint::from_slice(&[1.0, 0.0, 0.0, 0.0]);
        let s = SymplecticStructure::standard(2);
        assert!(matches!(lagrangian_frame(tw.as_ref(), &p, &s), Err(Error::NotHamiltonian(_))));
    }

    #[test]
    fn phase_step_limit_is_enforced() {
        let s = SymplecticStructure::standard(1);
        let p = PhasePoint::from_slice(&[1.0, 0.0]);
        let sampling = MaslovSampling { max_refinements: 0, initial_samples: 3, ..Default::default() };
        let r = maslov_index(&Harmonic, &p, &[2.0 * PI], &s, &sampling, &Tolerances::default());
        assert!(matches!(r, Err(Error::PhaseStepTooLarge { .. })));
    }
}
