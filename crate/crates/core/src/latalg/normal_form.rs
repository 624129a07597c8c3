//! Smith and Hermite normal forms over the integers.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::intmat::IntMatrix;

/// `D = U A V` with `U`, `V` unimodular and `D` diagonal,
/// `d_1 | d_2 | ...`, `d_i >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmithForm {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
}

impl SmithForm {
    pub fn invariant_factors(&self) -> Vec<BigInt> {
        let r = self.d.nrows().min(self.d.ncols());
        (0..r).map(|i| self.d[(i, i)].clone()).take_while(|x| !x.is_zero()).collect()
    }

    pub fn rank(&self) -> usize {
        self.invariant_factors().len()
    }
}

/// Smith normal form with transforms.
///
/// Pivoting rule: at step `k`, the nonzero entry of smallest absolute value
/// in the trailing block (first in row-major order on ties) is moved to
/// `(k, k)`, so the result is a deterministic function of `A`.
pub fn smith_normal_form(a: &IntMatrix) -> SmithForm {
    let (m, n) = (a.nrows(), a.ncols());
    let mut d = a.clone();
    let mut u = IntMatrix::identity(m);
    let mut v = IntMatrix::identity(n);

    for k in 0..m.min(n) {
        loop {
            let Some((pi, pj)) = smallest_entry(&d, k) else {
                return SmithForm { u, d, v };
            };
            d.swap_rows(k, pi);
            u.swap_rows(k, pi);
            d.swap_cols(k, pj);
            v.swap_cols(k, pj);

            let mut dirty = false;
            for i in k + 1..m {
                if d[(i, k)].is_zero() {
                    continue;
                }
                let q = d[(i, k)].div_floor(&d[(k, k)]);
                let f = -q;
                d.add_row_multiple(i, k, &f);
                u.add_row_multiple(i, k, &f);
                dirty |= !d[(i, k)].is_zero();
            }
            for j in k + 1..n {
                if d[(k, j)].is_zero() {
                    continue;
                }
                let q = d[(k, j)].div_floor(&d[(k, k)]);
                let f = -q;
                d.add_col_multiple(j, k, &f);
                v.add_col_multiple(j, k, &f);
                dirty |= !d[(k, j)].is_zero();
            }
            if dirty {
                continue;
            }
            // Row and column k are clear; enforce divisibility of the rest.
            let pivot = d[(k, k)].clone();
            let offender = (k + 1..m).find(|&i| (k + 1..n).any(|j| !d[(i, j)].is_multiple_of(&pivot)));
            match offender {
                Some(i) => {
                    let one = BigInt::one();
                    d.add_row_multiple(k, i, &one);
                    u.add_row_multiple(k, i, &one);
                }
                None => break,
            }
        }
        if d[(k, k)].is_negative() {
            d.negate_row(k);
            u.negate_row(k);
        }
    }
    SmithForm { u, d, v }
}

fn smallest_entry(d: &IntMatrix, k: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for i in k..d.nrows() {
        for j in k..d.ncols() {
            let x = &d[(i, j)];
            if x.is_zero() {
                continue;
            }
            match best {
                Some((bi, bj)) if d[(bi, bj)].abs() <= x.abs() => {}
                _ => best = Some((i, j)),
            }
        }
    }
    best
}

/// Column-style Hermite normal form of the lattice spanned by the columns
/// of `a`: returns a basis `H` (zero columns dropped) in lower echelon
/// form. Each column's first nonzero entry is its positive pivot, pivot
/// rows strictly increase, and entries of a pivot row to the left of the
/// pivot lie in `[0, pivot)`.
pub fn column_hnf(a: &IntMatrix) -> IntMatrix {
    let (m, n) = (a.nrows(), a.ncols());
    let mut h = a.clone();
    let mut col = 0;
    for row in 0..m {
        if col >= n {
            break;
        }
        // Euclid on the entries (row, col..n) via column operations.
        loop {
            let nz: Vec<usize> = (col..n).filter(|&j| !h[(row, j)].is_zero()).collect();
            if nz.len() <= 1 {
                if let Some(&j) = nz.first() {
                    h.swap_cols(col, j);
                }
                break;
            }
            let jmin = *nz.iter().min_by_key(|&&j| h[(row, j)].abs()).unwrap();
            h.swap_cols(col, jmin);
            for j in col + 1..n {
                if h[(row, j)].is_zero() {
                    continue;
                }
                let q = h[(row, j)].div_floor(&h[(row, col)]);
                h.add_col_multiple(j, col, &-q);
            }
        }
        if h[(row, col)].is_zero() {
            continue;
        }
        if h[(row, col)].is_negative() {
            h.negate_col(col);
        }
        let p = h[(row, col)].clone();
        for j in 0..col {
            let q = h[(row, j)].div_floor(&p);
            h.add_col_multiple(j, col, &-q);
        }
        col += 1;
    }
    h.columns(0, col)
}

/// Pivot row of each column of a matrix in [`column_hnf`] form.
pub fn hnf_pivots(h: &IntMatrix) -> Vec<usize> {
    (0..h.ncols()).map(|j| (0..h.nrows()).find(|&i| !h[(i, j)].is_zero()).expect("zero column in HNF")).collect()
}

/// Integer coordinates `x` with `h x = y` for `h` in [`column_hnf`] form,
/// or `None` if `y` is not in the lattice.
pub fn hnf_solve(h: &IntMatrix, y: &[BigInt]) -> Option<Vec<BigInt>> {
    let pivots = hnf_pivots(h);
    let mut rest = y.to_vec();
    let mut x = vec![BigInt::zero(); h.ncols()];
    for (j, &pr) in pivots.iter().enumerate() {
        let (q, r) = rest[pr].div_rem(&h[(pr, j)]);
        if !r.is_zero() {
            return None;
        }
        for (i, ri) in rest.iter_mut().enumerate() {
            *ri -= &q * &h[(i, j)];
        }
        x[j] = q;
    }
    rest.iter().all(|v| v.is_zero()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check(a: &IntMatrix) -> SmithForm {
        let s = smith_normal_form(a);
        assert_eq!(&(&s.u * a) * &s.v, s.d);
        assert!(s.u.is_unimodular() && s.v.is_unimodular());
        let r = s.d.nrows().min(s.d.ncols());
        for i in 0..s.d.nrows() {
            for j in 0..s.d.ncols() {
                if i != j {
                    assert!(s.d[(i, j)].is_zero());
                }
            }
        }
        for i in 0..r {
            assert!(!s.d[(i, i)].is_negative());
            if i + 1 < r && !s.d[(i + 1, i + 1)].is_zero() {
                assert!(s.d[(i + 1, i + 1)].is_multiple_of(&s.d[(i, i)]));
            }
        }
        s
    }

    fn diag(s: &SmithForm) -> Vec<i64> {
        let r = s.d.nrows().min(s.d.ncols());
        (0..r).map(|i| i64::try_from(&s.d[(i, i)]).unwrap()).collect()
    }

    #[test]
    fn identity_is_fixed() {
        let s = check(&IntMatrix::identity(3));
        assert_eq!(s.u, IntMatrix::identity(3));
        assert_eq!(s.d, IntMatrix::identity(3));
        assert_eq!(s.v, IntMatrix::identity(3));
    }

    #[test]
    fn small_examples() {
        assert_eq!(diag(&check(&IntMatrix::from_rows(&[vec![2, 0], vec![0, 3]]))), vec![1, 6]);
        assert_eq!(diag(&check(&IntMatrix::from_rows(&[vec![2, 4], vec![6, 8]]))), vec![2, 4]);
        assert_eq!(diag(&check(&IntMatrix::from_rows(&[vec![0, 0], vec![0, 0]]))), vec![0, 0]);
        assert_eq!(diag(&check(&IntMatrix::from_rows(&[vec![2, 2]]))), vec![2]);
    }

    #[test]
    fn deterministic() {
        let a = IntMatrix::from_rows(&[vec![4, -6, 2], vec![3, 9, -12], vec![1, 1, 1]]);
        assert_eq!(smith_normal_form(&a), smith_normal_form(&a));
    }

    #[test]
    fn hnf_shape_and_solve() {
        let a = IntMatrix::from_rows(&[vec![2, 4, 6], vec![1, 3, 5], vec![0, 0, 1]]);
        let h = column_hnf(&a);
        assert_eq!(h.ncols(), 3);
        let piv = hnf_pivots(&h);
        assert!(piv.windows(2).all(|w| w[0] < w[1]));
        for c in 0..3 {
            let x = hnf_solve(&h, &a.column(c)).unwrap();
            let back = &h * &IntMatrix::column_vector(&x);
            assert_eq!(back.column(0), a.column(c));
        }
        let k = column_hnf(&IntMatrix::from_rows(&[vec![-1], vec![1]]));
        assert_eq!(k, IntMatrix::from_rows(&[vec![1], vec![-1]]));
        assert!(hnf_solve(&column_hnf(&IntMatrix::from_rows(&[vec![2], vec![0]])), &[BigInt::from(1), BigInt::zero()])
            .is_none());
    }

    // Brute-force invariant factors: d_1 ... d_i = gcd of all i x i minors.
    fn minors_gcd(a: &IntMatrix, size: usize) -> BigInt {
        fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            if n < k {
                return vec![];
            }
            let mut out = subsets(n - 1, k);
            for mut s in subsets(n - 1, k - 1) {
                s.push(n - 1);
                out.push(s);
            }
            out
        }
        let mut g = BigInt::zero();
        for rs in subsets(a.nrows(), size) {
            for cs in subsets(a.ncols(), size) {
                let sub = IntMatrix::from_big_rows(
                    rs.iter().map(|&i| cs.iter().map(|&j| a[(i, j)].clone()).collect()).collect(),
                );
                g = g.gcd(&sub.det());
            }
        }
        g
    }

    proptest! {
        #[test]
        fn snf_matches_determinantal_divisors(
            (r, c, entries) in (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| {
                (Just(r), Just(c), proptest::collection::vec(-9i64..=9, r * c))
            })
        ) {
            let rows: Vec<Vec<i64>> = entries.chunks(c).map(|w| w.to_vec()).collect();
            let a = IntMatrix::from_rows(&rows);
            let s = check(&a);
            let mut prod = BigInt::one();
            for i in 0..r.min(c) {
                prod *= &s.d[(i, i)];
                prop_assert_eq!(prod.clone(), minors_gcd(&a, i + 1));
            }
        }

        #[test]
        fn hnf_spans_same_lattice(entries in proptest::collection::vec(-9i64..=9, 9)) {
            let rows: Vec<Vec<i64>> = entries.chunks(3).map(|w| w.to_vec()).collect();
            let a = IntMatrix::from_rows(&rows);
            let h = column_hnf(&a);
            for c in 0..3 {
                prop_assert!(hnf_solve(&h, &a.column(c)).is_some());
            }
            // Each HNF column lies in the span of A: compare SNF ranks and products.
            let sa = smith_normal_form(&a);
            let sh = smith_normal_form(&h);
            prop_assert_eq!(sa.invariant_factors(), sh.invariant_factors());
        }
    }
}
