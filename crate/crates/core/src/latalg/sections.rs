//! Sections of the period lattice and the circle actions they generate.

use nalgebra::DVector;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::intmat::{normalize_sign, vec_gcd};
use crate::error::{Error, Result};
use crate::flow::{flow, Tolerances};
use crate::lattice::LatticeBasis;
use crate::systems::{IntegrableSystem, PhasePoint};

/// An integer vector in the coordinates of a lattice basis, viewed as the
/// generator of the circle action `t -> Phi^{t B v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleActionSection {
    pub vector: Vec<BigInt>,
    pub primitive: bool,
    pub minimal_period_checked: bool,
}

impl CircleActionSection {
    /// Wraps `v` without normalizing it.
    pub fn new(vector: Vec<BigInt>) -> Result<Self> {
        if vector.iter().all(|x| x.is_zero()) {
            return Err(Error::ZeroSection);
        }
        let primitive = vec_gcd(&vector).is_one();
        Ok(CircleActionSection { vector, primitive, minimal_period_checked: false })
    }

    pub fn from_i64(v: &[i64]) -> Result<Self> {
        Self::new(v.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn as_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.vector.len(), self.vector.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)))
    }
}

/// `v / gcd(v)` with its first nonzero entry made positive.
pub fn primitive_section(v: &[BigInt]) -> Result<CircleActionSection> {
    let g = vec_gcd(v);
    if g.is_zero() {
        return Err(Error::ZeroSection);
    }
    let mut vector: Vec<BigInt> = v.iter().map(|x| x / &g).collect();
    normalize_sign(&mut vector);
    Ok(CircleActionSection { vector, primitive: true, minimal_period_checked: false })
}

/// Sampling controls for [`free_circle_action`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeActionOptions {
    /// Torus points tested per fibre.
    pub samples: usize,
    /// Closure tolerance for `Phi^{T_sigma}(x) = x`.
    pub closure_tol: f64,
    /// Largest denominator of the tested fractions `q / r`.
    pub max_denominator: u32,
}

impl Default for FreeActionOptions {
    fn default() -> Self {
        FreeActionOptions { samples: 10, closure_tol: 1e-8, max_denominator: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeActionReport {
    /// `T_sigma = B v`.
    pub generator: Vec<f64>,
    pub max_closure_residual: f64,
    /// Smallest `|Phi^{(q/r) T_sigma}(x) - x|` over all tested points and
    /// fractions.
    pub min_fraction_distance: f64,
    pub samples: usize,
    pub section: CircleActionSection,
}

/// Verifies that the section generates a free circle action on the fibre
/// of `basis`: `Phi^{T_sigma}` closes within `closure_tol` at random torus
/// points, and no proper fraction `q / r` with `r <= max_denominator`
/// returns within `100 closure_tol`.
pub fn free_circle_action<R: Rng>(
    sys: &dyn IntegrableSystem,
    basis: &LatticeBasis,
    section: &CircleActionSection,
    tol: &Tolerances,
    opts: &FreeActionOptions,
    rng: &mut R,
) -> Result<FreeActionReport> {
    if section.vector.len() != basis.n() {
        return Err(Error::Dimension("section length differs from lattice rank".into()));
    }
    let g = vec_gcd(&section.vector);
    if g.is_zero() {
        return Err(Error::ZeroSection);
    }
    if !g.is_one() {
        return Err(Error::NotPrimitive { gcd: g.to_string() });
    }
    let t_sigma = &basis.basis * section.as_f64();
    let n = basis.n();
    let mut max_closure: f64 = 0.0;
    let mut min_frac = f64::INFINITY;
    for _ in 0..opts.samples.max(1) {
        let theta = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let shift = &basis.basis * theta;
        let x = flow(sys, &basis.anchor, shift.as_slice(), tol, false)?.endpoint;
        let closure = return_distance(sys, &x, &t_sigma, 1.0, tol)?;
        max_closure = max_closure.max(closure);
        if !(closure < opts.closure_tol) {
            return Err(Error::ClosureFailed { residual: closure });
        }
        for r in 2..=opts.max_denominator {
            for q in 1..r {
                if q.gcd(&r) != 1 {
                    continue;
                }
                let d = return_distance(sys, &x, &t_sigma, q as f64 / r as f64, tol)?;
                min_frac = min_frac.min(d);
                if !(d > 100.0 * opts.closure_tol) {
                    return Err(Error::NotFree { numer: q, denom: r, distance: d });
                }
            }
        }
    }
    let mut checked = section.clone();
    checked.minimal_period_checked = true;
    Ok(FreeActionReport {
        generator: t_sigma.iter().copied().collect(),
        max_closure_residual: max_closure,
        min_fraction_distance: min_frac,
        samples: opts.samples.max(1),
        section: checked,
    })
}

fn return_distance(
    sys: &dyn IntegrableSystem,
    x: &PhasePoint,
    t: &DVector<f64>,
    fraction: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let tf: Vec<f64> = t.iter().map(|v| v * fraction).collect();
    let y = flow(sys, x, &tf, tol, false)?.endpoint;
    Ok(sys.displacement(&x.coords, &y.coords).norm())
}
