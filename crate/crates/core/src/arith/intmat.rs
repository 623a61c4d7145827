//! Exact integer and rational linear algebra on small matrices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Determinant by fraction-free Bareiss elimination.
pub fn det_bigint(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * a[n - 1][n - 1].clone()
}

/// Solve A y = b over the rationals; None if singular.
pub fn solve_rational(a: &[Vec<BigRational>], b: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&i| !m[i][col].is_zero())?;
        m.swap(piv, col);
        let inv = m[col][col].recip();
        for j in col..=n {
            m[col][j] = &m[col][j] * &inv;
        }
        for i in 0..n {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for j in col..=n {
                    let v = &m[col][j] * &f;
                    m[i][j] -= v;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n].clone()).collect())
}

/// Index of the lattice generated by `gens` in Z^dim; zero if not full rank.
pub fn lattice_index(gens: &[Vec<BigInt>], dim: usize) -> BigInt {
    let mut rows: Vec<Vec<BigInt>> = gens.iter().filter(|g| g.iter().any(|x| !x.is_zero())).cloned().collect();
    let mut det = BigInt::one();
    for col in 0..dim {
        // Euclid on the column until one row holds the gcd
        loop {
            let nz: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i][col].is_zero()).collect();
            if nz.len() <= 1 {
                break;
            }
            let best = *nz.iter().min_by_key(|&&i| rows[i][col].abs()).unwrap();
            let pivot = rows[best].clone();
            for &i in &nz {
                if i == best {
                    continue;
                }
                let q = rows[i][col].div_floor(&pivot[col]);
                for j in 0..dim {
                    let v = &q * &pivot[j];
                    rows[i][j] -= v;
                }
            }
        }
        match (0..rows.len()).find(|&i| !rows[i][col].is_zero()) {
            Some(i) => {
                let r = rows.remove(i);
                det *= r[col].abs();
            }
            None => return BigInt::zero(),
        }
        rows.retain(|g| g.iter().any(|x| !x.is_zero()));
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: i64) -> BigInt {
        BigInt::from(v)
    }

    #[test]
    fn bareiss_matches_expansion() {
        let m = vec![vec![b(2), b(0), b(1)], vec![b(1), b(3), b(2)], vec![b(1), b(1), b(1)]];
        assert_eq!(det_bigint(&m), b(2 * (3 - 2) - 0 + 1 * (1 - 3)));
        let z = vec![vec![b(0), b(1)], vec![b(1), b(0)]];
        assert_eq!(det_bigint(&z), b(-1));
    }

    #[test]
    fn index_of_sublattice() {
        let g = vec![vec![b(2), b(0)], vec![b(0), b(3)], vec![b(4), b(6)]];
        assert_eq!(lattice_index(&g, 2), b(6));
        let g2 = vec![vec![b(1), b(1)], vec![b(5), b(0)], vec![b(0), b(5)]];
        assert_eq!(lattice_index(&g2, 2), b(5));
        assert_eq!(lattice_index(&[vec![b(1), b(1)]], 2), b(0));
    }
}
