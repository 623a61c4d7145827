//! Multivariate polynomials with small integer coefficients.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiPoly {
    pub nvars: usize,
    /// (exponent vector, coefficient), sorted by exponent, no zero coefficients.
    pub terms: Vec<(Vec<u32>, i128)>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        MultiPoly { nvars, terms: vec![] }
    }

    pub fn constant(nvars: usize, c: i128) -> Self {
        MultiPoly::from_terms(nvars, vec![(vec![0; nvars], c)])
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        MultiPoly::from_terms(nvars, vec![(e, 1)])
    }

    pub fn linear(coeffs: &[i128]) -> Self {
        let n = coeffs.len();
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut e = vec![0; n];
                e[i] = 1;
                (e, c)
            })
            .collect();
        MultiPoly::from_terms(n, terms)
    }

    pub fn from_terms(nvars: usize, mut terms: Vec<(Vec<u32>, i128)>) -> Self {
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Vec<u32>, i128)> = Vec::with_capacity(terms.len());
        for (e, c) in terms {
            assert_eq!(e.len(), nvars);
            match out.last_mut() {
                Some((le, lc)) if *le == e => *lc = lc.checked_add(c).expect("coefficient overflow"),
                _ => out.push((e, c)),
            }
        }
        out.retain(|t| t.1 != 0);
        MultiPoly { nvars, terms: out }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &MultiPoly) -> MultiPoly {
        let mut t = self.terms.clone();
        t.extend(o.terms.iter().cloned());
        MultiPoly::from_terms(self.nvars, t)
    }

    pub fn neg(&self) -> MultiPoly {
        self.scale(-1)
    }

    pub fn sub(&self, o: &MultiPoly) -> MultiPoly {
        self.add(&o.neg())
    }

    pub fn scale(&self, c: i128) -> MultiPoly {
        MultiPoly::from_terms(
            self.nvars,
            self.terms.iter().map(|(e, a)| (e.clone(), a.checked_mul(c).expect("coefficient overflow"))).collect(),
        )
    }

    pub fn mul(&self, o: &MultiPoly) -> MultiPoly {
        let mut t = Vec::with_capacity(self.terms.len() * o.terms.len());
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                t.push((e, c1.checked_mul(*c2).expect("coefficient overflow")));
            }
        }
        MultiPoly::from_terms(self.nvars, t)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn partial(&self, i: usize) -> MultiPoly {
        let t = self
            .terms
            .iter()
            .filter(|(e, _)| e[i] > 0)
            .map(|(e, c)| {
                let mut e2 = e.clone();
                e2[i] -= 1;
                (e2, c * e[i] as i128)
            })
            .collect();
        MultiPoly::from_terms(self.nvars, t)
    }

    pub fn eval_i128(&self, x: &[i128]) -> Option<i128> {
        let mut acc: i128 = 0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t = t.checked_mul(*xi)?;
                }
            }
            acc = acc.checked_add(t)?;
        }
        Some(acc)
    }

    pub fn eval_big(&self, x: &[BigInt]) -> BigInt {
        let mut acc = BigInt::zero();
        for (e, c) in &self.terms {
            let mut t = BigInt::from(*c);
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t *= xi;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = *c as f64;
                for (xi, &k) in x.iter().zip(e) {
                    t *= xi.powi(k as i32);
                }
                t
            })
            .sum()
    }

    /// Substitute x_k = Σ_l rows[k][l]·y_l.
    pub fn substitute_linear(&self, rows: &[Vec<i128>]) -> MultiPoly {
        let m = rows[0].len();
        let forms: Vec<MultiPoly> = rows.iter().map(|r| MultiPoly::linear(r)).collect();
        let mut acc = MultiPoly::zero(m);
        for (e, c) in &self.terms {
            let mut t = MultiPoly::constant(m, *c);
            for (k, &pw) in e.iter().enumerate() {
                for _ in 0..pw {
                    t = t.mul(&forms[k]);
                }
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Group terms by the exponent of the last variable: result[j] is the coefficient of x_last^j.
    pub fn split_last(&self) -> Vec<MultiPoly> {
        let n = self.nvars;
        let deg = self.terms.iter().map(|(e, _)| e[n - 1]).max().unwrap_or(0) as usize;
        let mut out = vec![Vec::new(); deg + 1];
        for (e, c) in &self.terms {
            out[e[n - 1] as usize].push((e[..n - 1].to_vec(), *c));
        }
        out.into_iter().map(|t| MultiPoly::from_terms(n - 1, t)).collect()
    }
}

/// Determinant of a square matrix of polynomials by cofactor expansion.
pub fn poly_det(m: &[Vec<MultiPoly>]) -> MultiPoly {
    let n = m.len();
    let nv = m[0][0].nvars;
    let cols: Vec<usize> = (0..n).collect();
    fn rec(m: &[Vec<MultiPoly>], row: usize, cols: &[usize], nv: usize) -> MultiPoly {
        if cols.is_empty() {
            return MultiPoly::constant(nv, 1);
        }
        let mut acc = MultiPoly::zero(nv);
        for (k, &c) in cols.iter().enumerate() {
            if m[row][c].is_zero() {
                continue;
            }
            let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let minor = rec(m, row + 1, &rest, nv);
            let term = m[row][c].mul(&minor);
            acc = if k % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
        }
        acc
    }
    rec(m, 0, &cols, nv)
}

/// Polynomial with coefficients reduced modulo q, for residue enumeration.
#[derive(Clone, Debug)]
pub struct ModPoly {
    pub q: u64,
    terms: Vec<(Vec<u32>, u64)>,
}

impl ModPoly {
    pub fn new(f: &MultiPoly, q: u64) -> Self {
        let qi = q as i128;
        let terms = f
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), c.rem_euclid(qi) as u64))
            .filter(|t| t.1 != 0)
            .collect();
        ModPoly { q, terms }
    }

    pub fn eval(&self, x: &[u64]) -> u64 {
        let q = self.q as u128;
        let mut acc: u128 = 0;
        for (e, c) in &self.terms {
            let mut t = *c as u128;
            for (xi, &k) in x.iter().zip(e) {
                for _ in 0..k {
                    t = t * (*xi as u128) % q;
                }
            }
            acc = (acc + t) % q;
        }
        acc as u64
    }
}

/// Value of a polynomial's coefficient group at a prefix, as i128.
pub fn to_i128(b: &BigInt) -> Option<i128> {
    b.to_i128()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_of_gaussian_multiplication() {
        // multiplication by x1 + x2 i on basis 1, i
        let x1 = MultiPoly::var(2, 0);
        let x2 = MultiPoly::var(2, 1);
        let m = vec![vec![x1.clone(), x2.clone()], vec![x2.neg(), x1.clone()]];
        let d = poly_det(&m);
        assert_eq!(d.eval_i128(&[3, 4]), Some(25));
        assert_eq!(d.partial(0).eval_i128(&[3, 4]), Some(6));
    }
}
