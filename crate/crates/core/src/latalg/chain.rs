//! Descending chains of kernels of integer functionals.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::intmat::IntMatrix;
use super::normal_form::{column_hnf, hnf_pivots, hnf_solve, smith_normal_form};
use crate::error::{Error, Result};
use crate::lattice::LatticeBasis;

/// Integer functionals `rho_1, ..., rho_l` (rows) on a lattice, written in
/// the coordinates of a fixed basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoFunctional {
    pub rows: IntMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_ref: Option<LatticeBasis>,
}

impl RhoFunctional {
    pub fn new(rows: IntMatrix) -> Self {
        RhoFunctional { rows, basis_ref: None }
    }

    pub fn with_basis(rows: IntMatrix, basis: LatticeBasis) -> Self {
        RhoFunctional { rows, basis_ref: Some(basis) }
    }

    pub fn l(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n(&self) -> usize {
        self.rows.ncols()
    }
}

/// One level `K^(i) = ker(rho_1, ..., rho_i)` of a kernel chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLevel {
    /// `n x (n - i)` basis of the kernel, in column Hermite normal form.
    pub kernel: IntMatrix,
    /// Vector completing `kernel` to a basis of the previous level.
    pub complement: Vec<BigInt>,
    /// `det[kernel | complement]` in coordinates of the previous level's
    /// basis; `+-1` exactly when the level splits.
    pub certificate: BigInt,
    /// Invariant factors of `kernel` are all one.
    pub saturated: bool,
}

/// The chain `Z^n = K^(0) > K^(1) > ... > K^(l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublatticeChain {
    pub n: usize,
    pub levels: Vec<ChainLevel>,
}

impl SublatticeChain {
    pub fn kernels(&self) -> Vec<&IntMatrix> {
        self.levels.iter().map(|l| &l.kernel).collect()
    }

    pub fn complements(&self) -> Vec<&[BigInt]> {
        self.levels.iter().map(|l| l.complement.as_slice()).collect()
    }

    /// Every level splits and every kernel is saturated.
    pub fn is_split(&self) -> bool {
        self.levels.iter().all(|l| l.certificate.abs() == BigInt::from(1) && l.saturated)
    }
}

/// Builds the kernel chain of `rho`.
///
/// Level `i` is computed inside level `i - 1`: the row `rho_i K^(i-1)` is
/// brought to Smith form, whose right transform splits into kernel
/// coordinates and one complement direction. Kernel bases are stored in
/// column Hermite normal form and complements are reduced against the
/// kernel's pivot rows, so the chain is a deterministic function of `rho`.
pub fn kernel_chain(rho: &RhoFunctional) -> Result<SublatticeChain> {
    let n = rho.n();
    let mut prev = IntMatrix::identity(n);
    let mut levels = Vec::with_capacity(rho.l());
    for i in 0..rho.l() {
        let row = IntMatrix::from_big_rows(vec![rho.rows.row(i)]);
        let r = &row * &prev;
        if r.ncols() == 0 || r.is_zero() {
            return Err(Error::RankDeficientRho { row: i });
        }
        let m = r.ncols();
        let snf = smith_normal_form(&r);
        let coords = snf.v.columns(1, m - 1);
        let kernel = column_hnf(&(&prev * &coords));
        let mut w = snf.v.column(0);
        let rw = (&r * &IntMatrix::column_vector(&w))[(0, 0)].clone();
        if rw.is_negative() {
            w.iter_mut().for_each(|x| *x = -&*x);
        }
        let mut v = (&prev * &IntMatrix::column_vector(&w)).column(0);
        for (j, &pr) in hnf_pivots(&kernel).iter().enumerate() {
            let q = num_integer::Integer::div_floor(&v[pr], &kernel[(pr, j)]);
            if !q.is_zero() {
                for (a, x) in v.iter_mut().enumerate() {
                    *x -= &q * &kernel[(a, j)];
                }
            }
        }
        let mut cert_cols = Vec::with_capacity(m);
        for c in 0..kernel.ncols() {
            cert_cols.push(
                hnf_solve(&prev, &kernel.column(c))
                    .ok_or_else(|| Error::Dimension("kernel column outside the previous level".into()))?,
            );
        }
        cert_cols.push(
            hnf_solve(&prev, &v).ok_or_else(|| Error::Dimension("complement outside the previous level".into()))?,
        );
        let mut cert = IntMatrix::zeros(m, m);
        for (c, col) in cert_cols.iter().enumerate() {
            cert.set_column(c, col);
        }
        let saturated =
            kernel.ncols() == 0 || smith_normal_form(&kernel).invariant_factors().iter().all(|d| *d == BigInt::from(1));
        levels.push(ChainLevel { kernel: kernel.clone(), complement: v, certificate: cert.det(), saturated });
        prev = kernel;
    }
    Ok(SublatticeChain { n, levels })
}

/// Rows of `rho` that fail `rho_i M = rho_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoInvarianceReport {
    pub pass: bool,
    /// `(row index, rho_i M - rho_i)` for each violated row.
    pub violations: Vec<(usize, Vec<BigInt>)>,
}

/// Checks `rho M = rho` exactly.
pub fn verify_rho_invariance(rho: &RhoFunctional, m: &IntMatrix) -> Result<RhoInvarianceReport> {
    if m.nrows() != rho.n() || m.ncols() != rho.n() {
        return Err(Error::Dimension(format!(
            "monodromy is {}x{}, functional has {} columns",
            m.nrows(),
            m.ncols(),
            rho.n()
        )));
    }
    let moved = &rho.rows * m;
    let mut violations = Vec::new();
    for i in 0..rho.l() {
        let diff: Vec<BigInt> = moved.row(i).iter().zip(rho.rows.row(i)).map(|(a, b)| a - b).collect();
        if diff.iter().any(|x| !x.is_zero()) {
            violations.push((i, diff));
        }
    }
    Ok(RhoInvarianceReport { pass: violations.is_empty(), violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latalg::to_big;
    use proptest::prelude::*;

    fn chain(rows: &[Vec<i64>]) -> Result<SublatticeChain> {
        kernel_chain(&RhoFunctional::new(IntMatrix::from_rows(rows)))
    }

    fn check(rows: &[Vec<i64>], c: &SublatticeChain) {
        let rho = IntMatrix::from_rows(rows);
        for (i, level) in c.levels.iter().enumerate() {
            assert_eq!(level.kernel.ncols(), c.n - i - 1);
            for r in 0..=i {
                let row = IntMatrix::from_big_rows(vec![rho.row(r)]);
                assert!((&row * &level.kernel).is_zero());
            }
            assert_eq!(level.certificate.abs(), BigInt::from(1));
            assert!(level.saturated);
        }
    }

    #[test]
    fn zero_row_is_rank_deficient() {
        assert_eq!(chain(&[vec![0, 0]]), Err(Error::RankDeficientRho { row: 0 }));
        assert_eq!(chain(&[vec![1, 0], vec![2, 0]]), Err(Error::RankDeficientRho { row: 1 }));
        assert_eq!(chain(&[vec![1, 0], vec![0, 1], vec![1, 1]]), Err(Error::RankDeficientRho { row: 2 }));
    }

    #[test]
    fn two_two_functional() {
        let c = chain(&[vec![2, 2]]).unwrap();
        check(&[vec![2, 2]], &c);
        assert_eq!(c.levels[0].kernel, IntMatrix::from_rows(&[vec![1], vec![-1]]));
        assert_eq!(c.levels[0].complement, to_big(&[0, 1]));
    }

    #[test]
    fn coordinate_projections() {
        let rows = [vec![1, 0, 0], vec![0, 1, 0]];
        let c = chain(&rows).unwrap();
        check(&rows, &c);
        assert_eq!(c.levels[1].kernel, IntMatrix::from_rows(&[vec![0], vec![0], vec![1]]));
        assert!(c.is_split());
    }

    #[test]
    fn rho_invariance() {
        let m = IntMatrix::from_rows(&[vec![1, 1], vec![0, 1]]);
        let ok = verify_rho_invariance(&RhoFunctional::new(IntMatrix::from_rows(&[vec![0, 1]])), &m).unwrap();
        assert!(ok.pass);
        let bad = verify_rho_invariance(&RhoFunctional::new(IntMatrix::from_rows(&[vec![1, 0]])), &m).unwrap();
        assert!(!bad.pass);
        assert_eq!(bad.violations, vec![(0, to_big(&[0, 1]))]);
    }

    proptest! {
        #[test]
        fn random_chains_split(
            (n, l, entries) in (2usize..=4).prop_flat_map(|n| (1..=n).prop_flat_map(move |l| {
                (Just(n), Just(l), proptest::collection::vec(-6i64..=6, n * l))
            }))
        ) {
            let rows: Vec<Vec<i64>> = entries.chunks(n).map(|w| w.to_vec()).collect();
            let rank = smith_normal_form(&IntMatrix::from_rows(&rows)).rank();
            match chain(&rows) {
                Ok(c) => {
                    prop_assert_eq!(rank, l);
                    check(&rows, &c);
                }
                Err(Error::RankDeficientRho { .. }) => prop_assert!(rank < l),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn fixed_row_kernel_is_fixed_by_monodromy(
            a in -5i64..=5, b in -5i64..=5, k in -4i64..=4,
        ) {
            // M = I + k u w^T with w = (a, b) and u in ker w is unipotent and
            // fixes the functional w; its kernel vector must be fixed too.
            prop_assume!(a != 0 || b != 0);
            let rho = RhoFunctional::new(IntMatrix::from_rows(&[vec![a, b]]));
            let c = kernel_chain(&rho).unwrap();
            let u = c.levels[0].kernel.column(0);
            let (u0, u1) = (i64::try_from(&u[0]).unwrap(), i64::try_from(&u[1]).unwrap());
            let m = IntMatrix::from_rows(&[vec![1 + k * u0 * a, k * u0 * b], vec![k * u1 * a, 1 + k * u1 * b]]);
            prop_assert!(verify_rho_invariance(&rho, &m).unwrap().pass);
            let mu = &m * &IntMatrix::column_vector(&u);
            prop_assert_eq!(mu.column(0), u);
        }
    }
}
