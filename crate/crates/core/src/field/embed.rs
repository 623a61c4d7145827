//! Complex embeddings from numerically isolated roots of the defining polynomial.

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Embeddings {
    pub r1: usize,
    pub r2: usize,
    /// Real roots ascending, then one root from each complex pair (positive imaginary part).
    pub roots: Vec<Complex64>,
    /// values[l][k] = ω_k evaluated at roots[l]
    pub values: Vec<Vec<Complex64>>,
    /// Real n×n matrix sending coordinates x to (real embeddings, Re/Im of complex ones).
    pub real_matrix: Vec<Vec<f64>>,
    pub real_inverse: Vec<Vec<f64>>,
}

fn horner(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut v = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        d = d * z + v;
        v = v * z + a;
    }
    (v, d)
}

/// All complex roots of a monic polynomial (ascending coefficients) by Durand-Kerner, polished by Newton.
pub fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let bound = 1.0 + c[..n].iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * (bound / 2.0)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let (v, _) = horner(c, z[i]);
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            let step = v / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-16 * bound {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..8 {
            let (v, d) = horner(c, *zi);
            if d.norm() == 0.0 {
                break;
            }
            *zi -= v / d;
        }
    }
    z
}

pub fn invert_f64(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(piv, col);
        let inv = 1.0 / a[col][col];
        for v in a[col].iter_mut() {
            *v *= inv;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[i][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

impl Embeddings {
    pub fn new(min_poly: &[i128], basis: &[Vec<BigRational>], r1: usize, r2: usize) -> Result<Self> {
        let n = min_poly.len() - 1;
        let c: Vec<f64> = min_poly.iter().map(|&a| a as f64).collect();
        let all = poly_roots(&c);
        let scale = |z: &Complex64| 1e-7 * (1.0 + z.norm());
        let mut real: Vec<f64> = all.iter().filter(|z| z.im.abs() < scale(z)).map(|z| z.re).collect();
        let mut cplx: Vec<Complex64> = all.iter().filter(|z| z.im >= scale(z)).copied().collect();
        if real.len() != r1 || cplx.len() != r2 {
            return Err(Error::InvalidField(format!(
                "signature ({r1},{r2}) disagrees with root isolation: {} real roots",
                real.len()
            )));
        }
        real.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cplx.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        let roots: Vec<Complex64> = real.iter().map(|&r| Complex64::new(r, 0.0)).chain(cplx).collect();
        let bf: Vec<Vec<f64>> = basis
            .iter()
            .map(|row| row.iter().map(|q| q.to_f64().unwrap()).collect())
            .collect();
        let values: Vec<Vec<Complex64>> = roots
            .iter()
            .map(|&z| {
                bf.iter()
                    .map(|row| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for &a in row.iter().rev() {
                            acc = acc * z + a;
                        }
                        if z.im == 0.0 {
                            acc.im = 0.0;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let mut real_matrix = Vec::with_capacity(n);
        for (l, row) in values.iter().enumerate() {
            real_matrix.push(row.iter().map(|v| v.re).collect::<Vec<f64>>());
            if l >= r1 {
                real_matrix.push(row.iter().map(|v| v.im).collect::<Vec<f64>>());
            }
        }
        let real_inverse = invert_f64(&real_matrix)
            .ok_or_else(|| Error::InvalidField("embedding matrix is singular".into()))?;
        Ok(Embeddings { r1, r2, roots, values, real_matrix, real_inverse })
    }

    /// v^{(l)}(x) for l over the r1 real and r2 complex places.
    pub fn apply(&self, x: &[f64]) -> Vec<Complex64> {
        self.values
            .iter()
            .map(|row| row.iter().zip(x).fold(Complex64::new(0.0, 0.0), |acc, (w, &xi)| acc + w * xi))
            .collect()
    }

    /// Field norm computed from the embeddings.
    pub fn norm_f64(&self, x: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .enumerate()
            .map(|(l, v)| if l < self.r1 { v.re } else { v.norm_sqr() })
            .product()
    }
}
