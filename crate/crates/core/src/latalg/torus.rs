//! The mapping torus of a monodromy matrix and conjugacy invariants in
//! `GL(2, Z)`.

use nalgebra::DVector;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::intmat::IntMatrix;
use crate::error::{Error, Result};
use crate::lattice::BasisTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTorusReport {
    pub samples: usize,
    /// Largest `|B(0) T - B(1) M^-1 T|` reduced modulo the lattice,
    /// relative to `|B(0) T|`.
    pub max_residual: f64,
    /// Largest discrepancy between `M^-1 (T + k)` and `M^-1 T` modulo `Z^n`.
    pub max_quotient_defect: f64,
}

/// Checks the boundary identification of the mapping torus built from the
/// trajectory: `(0, T)` and `(1, M^-1 T)` must name the same point of the
/// fibre, and `M^-1` must descend to `R^n / Z^n`.
pub fn mapping_torus_check<R: Rng>(
    m: &IntMatrix,
    traj: &BasisTrajectory,
    samples: usize,
    rng: &mut R,
) -> Result<MappingTorusReport> {
    let b0 = &traj.start().basis;
    let b1 = &traj.end().basis;
    let n = b0.ncols();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension("monodromy and trajectory ranks differ".into()));
    }
    let minv = m.unimodular_inverse().ok_or_else(|| Error::NonUnimodular { det: m.det().to_string() })?.to_f64();
    let b0_inv =
        b0.clone().try_inverse().ok_or_else(|| Error::DegenerateCandidates("start basis is singular".into()))?;
    let mut max_residual: f64 = 0.0;
    let mut max_defect: f64 = 0.0;
    for _ in 0..samples {
        let t = DVector::from_fn(n, |_, _| rng.random::<f64>());
        let a = b0 * &t;
        let mt = &minv * &t;
        let b = b1 * &mt;
        let y = &b0_inv * (&a - &b);
        let frac = y.map(|v| v - v.round());
        let residual = (b0 * frac).norm() / a.norm().max(f64::MIN_POSITIVE);
        max_residual = max_residual.max(residual);

        let k = DVector::from_fn(n, |_, _| rng.random_range(-5i32..=5) as f64);
        let shifted = &minv * (&t + k);
        let d = (&shifted - &mt).map(|v| (v - v.round()).abs()).amax();
        max_defect = max_defect.max(d);
    }
    if !(max_residual < 1e-6) {
        return Err(Error::IdentificationMismatch { residual: max_residual });
    }
    if !(max_defect < 1e-9) {
        return Err(Error::IdentificationMismatch { residual: max_defect });
    }
    Ok(MappingTorusReport { samples, max_residual, max_quotient_defect: max_defect })
}

/// Conjugacy class label and integer invariant of an `SL(2, Z)` matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjugacyClass {
    pub class: String,
    pub k: i64,
}

/// Classifies `M` with `det M = 1` by its trace:
///
/// | trace | class | k |
/// |-------|-------|---|
/// | 2, `M = I` | `identity` | 0 |
/// | 2 | `parabolic` | gcd of the entries of `M - I` |
/// | -2, `M = -I` | `minus-identity` | 0 |
/// | -2 | `negative-parabolic` | gcd of the entries of `M + I` |
/// | 0, 1, -1 | `elliptic-order-4`, `-6`, `-3` | trace |
/// | `abs > 2` | `hyperbolic` | trace |
///
/// `parabolic` with invariant `k` is conjugate to `[[1, k], [0, 1]]` or
/// `[[1, -k], [0, 1]]`.
pub fn gl2z_conjugacy_invariant(m: &IntMatrix) -> Result<ConjugacyClass> {
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(Error::Dimension("expected a 2x2 matrix".into()));
    }
    let det = m.det();
    if !det.is_one() {
        return Err(Error::NonUnimodular { det: det.to_string() });
    }
    let tr = m.trace();
    let shifted_gcd = |s: i64| -> BigInt {
        let mut d = m.clone();
        for i in 0..2 {
            d[(i, i)] -= BigInt::from(s);
        }
        d.content()
    };
    let small = |x: &BigInt| x.to_i64().ok_or_else(|| Error::Dimension(format!("invariant {x} exceeds 64 bits")));
    let two = BigInt::from(2);
    let (class, k) = if tr == two {
        let g = shifted_gcd(1);
        if g.is_zero() {
            ("identity", 0)
        } else {
            ("parabolic", small(&g)?)
        }
    } else if tr == -two.clone() {
        let g = shifted_gcd(-1);
        if g.is_zero() {
            ("minus-identity", 0)
        } else {
            ("negative-parabolic", small(&g)?)
        }
    } else if tr.abs() > two {
        ("hyperbolic", small(&tr)?)
    } else {
        let t = small(&tr)?;
        let class = match t {
            0 => "elliptic-order-4",
            1 => "elliptic-order-6",
            _ => "elliptic-order-3",
        };
        (class, t)
    };
    Ok(ConjugacyClass { class: class.to_string(), k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[Vec<i64>]) -> IntMatrix {
        IntMatrix::from_rows(rows)
    }

    fn inv(rows: &[Vec<i64>]) -> ConjugacyClass {
        gl2z_conjugacy_invariant(&m(rows)).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(inv(&[vec![1, 0], vec![0, 1]]), ConjugacyClass { class: "identity".into(), k: 0 });
        assert_eq!(inv(&[vec![1, 3], vec![0, 1]]), ConjugacyClass { class: "parabolic".into(), k: 3 });
        assert_eq!(inv(&[vec![2, 1], vec![-1, 0]]), ConjugacyClass { class: "parabolic".into(), k: 1 });
        assert_eq!(inv(&[vec![2, 1], vec![1, 1]]).class, "hyperbolic");
        assert_eq!(inv(&[vec![0, -1], vec![1, 0]]).class, "elliptic-order-4");
        assert_eq!(inv(&[vec![-1, 0], vec![0, -1]]).class, "minus-identity");
        assert_eq!(inv(&[vec![-1, 2], vec![0, -1]]), ConjugacyClass { class: "negative-parabolic".into(), k: 2 });
        assert!(matches!(gl2z_conjugacy_invariant(&m(&[vec![2, 0], vec![0, 1]])), Err(Error::NonUnimodular { .. })));
    }

    fn random_unimodular(rng: &mut ChaCha8Rng) -> IntMatrix {
        // Product of random elementary matrices and sign flips.
        let mut u = IntMatrix::identity(2);
        for _ in 0..rng.random_range(1..8) {
            let e = rng.random_range(-3i64..=3);
            let g = match rng.random_range(0..3) {
                0 => m(&[vec![1, e], vec![0, 1]]),
                1 => m(&[vec![1, 0], vec![e, 1]]),
                _ => m(&[vec![0, 1], vec![1, 0]]),
            };
            u = &u * &g;
        }
        u
    }

    #[test]
    fn invariant_under_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples = [
            m(&[vec![1, 3], vec![0, 1]]),
            m(&[vec![1, -2], vec![0, 1]]),
            m(&[vec![2, 1], vec![1, 1]]),
            m(&[vec![0, -1], vec![1, 1]]),
            m(&[vec![-1, 4], vec![0, -1]]),
        ];
        for s in &samples {
            let base = gl2z_conjugacy_invariant(s).unwrap();
            for _ in 0..1000 {
                let u = random_unimodular(&mut rng);
                let c = &(&u.unimodular_inverse().unwrap() * s) * &u;
                assert_eq!(gl2z_conjugacy_invariant(&c).unwrap(), base);
            }
        }
    }
}
