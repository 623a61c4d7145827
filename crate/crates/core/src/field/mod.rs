//! Number fields given by explicit integral-basis data.

pub mod embed;
pub mod splitting;
pub mod zeta;

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::intmat::{det_bigint, solve_rational};
use crate::arith::multipoly::{poly_det, MultiPoly};
use crate::arith::primes::is_prime;
use crate::error::{Error, Result};
pub use embed::Embeddings;
pub use splitting::SplittingType;

/// A rational entry written either as an integer or as a "p/q" string.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RatRepr {
    Int(i64),
    Str(String),
}

impl RatRepr {
    pub fn parse(&self) -> Result<BigRational> {
        match self {
            RatRepr::Int(v) => Ok(BigRational::from_integer(BigInt::from(*v))),
            RatRepr::Str(s) => {
                let bad = || Error::InvalidField(format!("bad rational '{s}'"));
                let (a, b) = match s.split_once('/') {
                    Some((a, b)) => (a.trim(), b.trim()),
                    None => (s.trim(), "1"),
                };
                let num: BigInt = a.parse().map_err(|_| bad())?;
                let den: BigInt = b.parse().map_err(|_| bad())?;
                if den.is_zero() {
                    return Err(bad());
                }
                Ok(BigRational::new(num, den))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct UnitsJson {
    pub mu_order: u32,
    pub mu_plus_order: u32,
    #[serde(default)]
    pub fundamental: Vec<Vec<i64>>,
    #[serde(default)]
    pub norms: Vec<i32>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FieldJson {
    pub name: String,
    pub degree: usize,
    /// Ascending coefficients c_0..c_n of the monic defining polynomial.
    pub min_poly: Vec<i64>,
    /// Row k gives ω_k in powers θ^0..θ^{n-1}.
    pub basis: Vec<Vec<RatRepr>>,
    /// mult_tensor[i][j][l] = c_{ij}^{(l)}.
    pub mult_tensor: Vec<Vec<Vec<i64>>>,
    pub discriminant: i64,
    pub signature: [usize; 2],
    pub class_number: u64,
    #[serde(default)]
    pub index_primes: Vec<u64>,
    #[serde(default)]
    pub splitting_overrides: BTreeMap<String, Vec<[u32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<UnitsJson>,
    /// Optional exact Dirichlet density of the degree-one primes, "p/q".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_density: Option<String>,
}

/// Validated, immutable number field data.
#[derive(Clone, Debug)]
pub struct FieldSpec {
    pub json: FieldJson,
    pub name: String,
    pub n: usize,
    pub min_poly: Vec<i128>,
    pub basis: Vec<Vec<BigRational>>,
    pub tensor: Vec<Vec<Vec<i128>>>,
    pub disc: i128,
    pub r1: usize,
    pub r2: usize,
    pub class_number: u64,
    pub index_primes: Vec<u64>,
    pub overrides: BTreeMap<u64, SplittingType>,
    pub norm_poly: MultiPoly,
    /// Coordinates of 1 in the integral basis.
    pub one: Vec<i128>,
    pub embed: Embeddings,
    pub hash: String,
}

fn inv(msg: impl Into<String>) -> Error {
    Error::InvalidField(msg.into())
}

/// Reduce a polynomial in θ (ascending) modulo the monic defining polynomial.
fn reduce_mod(mut c: Vec<BigRational>, f: &[i128]) -> Vec<BigRational> {
    let n = f.len() - 1;
    while c.len() > n {
        let top = c.pop().unwrap();
        let shift = c.len() - n;
        for (i, &fi) in f[..n].iter().enumerate() {
            c[shift + i] -= &top * BigRational::from_integer(BigInt::from(fi));
        }
    }
    c.resize(n, BigRational::zero());
    c
}

fn mul_theta(a: &[BigRational], b: &[BigRational], f: &[i128]) -> Vec<BigRational> {
    let mut c = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    reduce_mod(c, f)
}

impl FieldSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: FieldJson = serde_json::from_str(s).map_err(|e| inv(e.to_string()))?;
        Self::from_json(j)
    }

    pub fn from_json(j: FieldJson) -> Result<Self> {
        let n = j.degree;
        if n < 2 {
            return Err(inv("degree must be at least 2"));
        }
        if j.min_poly.len() != n + 1 || j.min_poly[n] != 1 {
            return Err(inv("min_poly must be monic of the stated degree"));
        }
        let min_poly: Vec<i128> = j.min_poly.iter().map(|&a| a as i128).collect();
        if j.basis.len() != n || j.basis.iter().any(|r| r.len() != n) {
            return Err(inv("basis must be n×n"));
        }
        let basis: Vec<Vec<BigRational>> =
            j.basis.iter().map(|r| r.iter().map(|q| q.parse()).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
        if j.mult_tensor.len() != n || j.mult_tensor.iter().any(|a| a.len() != n || a.iter().any(|b| b.len() != n)) {
            return Err(inv("mult_tensor must be n×n×n"));
        }
        let tensor: Vec<Vec<Vec<i128>>> = j
            .mult_tensor
            .iter()
            .map(|a| a.iter().map(|b| b.iter().map(|&c| c as i128).collect()).collect())
            .collect();
        for i in 0..n {
            for k in 0..n {
                if tensor[i][k] != tensor[k][i] {
                    return Err(inv(format!("mult_tensor not symmetric at ({i},{k})")));
                }
            }
        }
        // associativity on all basis triples
        for i in 0..n {
            for jj in 0..n {
                for k in 0..n {
                    let mut left = vec![0i128; n];
                    let mut right = vec![0i128; n];
                    for l in 0..n {
                        for m in 0..n {
                            left[m] += tensor[i][jj][l] * tensor[l][k][m];
                            right[m] += tensor[jj][k][l] * tensor[i][l][m];
                        }
                    }
                    if left != right {
                        return Err(inv(format!("multiplication not associative on ({i},{jj},{k})")));
                    }
                }
            }
        }
        // consistency of the tensor with the θ-representation
        for i in 0..n {
            for k in i..n {
                let prod = mul_theta(&basis[i], &basis[k], &min_poly);
                let mut expect = vec![BigRational::zero(); n];
                for l in 0..n {
                    let c = BigRational::from_integer(BigInt::from(tensor[i][k][l]));
                    for (e, b) in expect.iter_mut().zip(&basis[l]) {
                        *e += &c * b;
                    }
                }
                if prod != expect {
                    return Err(inv(format!("mult_tensor disagrees with basis at ({i},{k})")));
                }
            }
        }
        // coordinates of 1
        let cols: Vec<Vec<BigRational>> = (0..n).map(|t| (0..n).map(|k| basis[k][t].clone()).collect()).collect();
        let mut e0 = vec![BigRational::zero(); n];
        e0[0] = BigRational::one();
        let one_q = solve_rational(&cols, &e0).ok_or_else(|| inv("basis is not linearly independent"))?;
        if one_q.iter().any(|q| !q.is_integer()) {
            return Err(inv("1 is not an integral combination of the basis"));
        }
        let one: Vec<i128> = one_q.iter().map(|q| q.to_integer().to_i128().unwrap()).collect();
        // trace form
        let traces: Vec<i128> = (0..n).map(|k| (0..n).map(|l| tensor[k][l][l]).sum()).collect();
        let gram: Vec<Vec<BigInt>> = (0..n)
            .map(|i| (0..n).map(|k| BigInt::from((0..n).map(|l| tensor[i][k][l] * traces[l]).sum::<i128>())).collect())
            .collect();
        let d = det_bigint(&gram);
        if d != BigInt::from(j.discriminant) {
            return Err(inv(format!("trace-form determinant {d} differs from discriminant {}", j.discriminant)));
        }
        let [r1, r2] = j.signature;
        if r1 + 2 * r2 != n {
            return Err(inv("signature must satisfy r1 + 2 r2 = n"));
        }
        if j.class_number == 0 {
            return Err(inv("class number must be positive"));
        }
        let embed = Embeddings::new(&min_poly, &basis, r1, r2)?;
        let mut overrides = BTreeMap::new();
        for (k, v) in &j.splitting_overrides {
            let p: u64 = k.parse().map_err(|_| inv(format!("bad override prime {k}")))?;
            let st = SplittingType::new(v.iter().map(|a| (a[0], a[1])).collect());
            if st.sum_ef() != n as u32 {
                return Err(inv(format!("override at {p} has Σef ≠ n")));
            }
            overrides.insert(p, st);
        }
        for &p in &j.index_primes {
            if !is_prime(p) {
                return Err(inv(format!("index prime {p} is not prime")));
            }
        }
        let norm_poly = norm_poly_from_tensor(&tensor);
        let hash = {
            let mut h = Sha256::new();
            h.update(serde_json::to_string(&j).unwrap().as_bytes());
            h.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>()
        };
        Ok(FieldSpec {
            name: j.name.clone(),
            n,
            min_poly,
            basis,
            tensor,
            disc: j.discriminant as i128,
            r1,
            r2,
            class_number: j.class_number,
            index_primes: j.index_primes.clone(),
            overrides,
            norm_poly,
            one,
            embed,
            hash,
            json: j,
        })
    }

    /// Matrix of multiplication by the element with coordinates a: column j holds a·ω_j.
    pub fn mult_matrix(&self, a: &[BigInt]) -> Vec<Vec<BigInt>> {
        let n = self.n;
        let mut m = vec![vec![BigInt::zero(); n]; n];
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for j in 0..n {
                for l in 0..n {
                    let c = self.tensor[i][j][l];
                    if c != 0 {
                        m[l][j] += ai * c;
                    }
                }
            }
        }
        m
    }

    /// Exact norm of x·ω as a determinant.
    pub fn norm(&self, x: &[BigInt]) -> BigInt {
        det_bigint(&self.mult_matrix(x))
    }

    pub fn norm_i64(&self, x: &[i64]) -> BigInt {
        self.norm(&x.iter().map(|&v| BigInt::from(v)).collect::<Vec<_>>())
    }

    /// Norm through the precomputed norm polynomial; None on i128 overflow.
    pub fn norm_i128(&self, x: &[i128]) -> Option<i128> {
        self.norm_poly.eval_i128(x)
    }

    pub fn mult(&self, x: &[BigInt], y: &[BigInt]) -> Vec<BigInt> {
        let n = self.n;
        let mut z = vec![BigInt::zero(); n];
        for i in 0..n {
            if x[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if y[j].is_zero() {
                    continue;
                }
                let xy = &x[i] * &y[j];
                for l in 0..n {
                    let c = self.tensor[i][j][l];
                    if c != 0 {
                        z[l] += &xy * c;
                    }
                }
            }
        }
        z
    }

    pub fn mult_i128(&self, x: &[i128], y: &[i128]) -> Vec<i128> {
        let n = self.n;
        let mut z = vec![0i128; n];
        for i in 0..n {
            for j in 0..n {
                let xy = x[i] * y[j];
                if xy == 0 {
                    continue;
                }
                for l in 0..n {
                    z[l] += xy * self.tensor[i][j][l];
                }
            }
        }
        z
    }

    /// Norm form of an ideal with Z-basis rows of `c` (in ω coordinates).
    pub fn ideal_norm_poly(&self, c: &[Vec<i128>]) -> MultiPoly {
        // x ↦ Σ_k x_k α_k has ω-coordinates x·C, so substitute ω-coordinate l = Σ_k C[k][l] x_k
        let n = self.n;
        let rows: Vec<Vec<i128>> = (0..n).map(|l| (0..n).map(|k| c[k][l]).collect()).collect();
        self.norm_poly.substitute_linear(&rows)
    }

    pub fn declared_density(&self) -> Option<f64> {
        let s = self.json.dirichlet_density.as_ref()?;
        RatRepr::Str(s.clone()).parse().ok()?.to_f64()
    }
}

/// Symbolic determinant of Σ x_i C_i where C_i[l][j] = c_{ij}^{(l)}.
pub fn norm_poly_from_tensor(tensor: &[Vec<Vec<i128>>]) -> MultiPoly {
    let n = tensor.len();
    let m: Vec<Vec<MultiPoly>> = (0..n)
        .map(|l| (0..n).map(|j| MultiPoly::linear(&(0..n).map(|i| tensor[i][j][l]).collect::<Vec<_>>())).collect())
        .collect();
    poly_det(&m)
}

/// Ideal given by a Z-basis in ω coordinates.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IdealBasis {
    pub rows: Vec<Vec<i64>>,
}

impl IdealBasis {
    pub fn rows_i128(&self) -> Vec<Vec<i128>> {
        self.rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect()
    }

    pub fn norm(&self) -> BigInt {
        use num_traits::Signed;
        det_bigint(&self.rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect::<Vec<_>>()).abs()
    }

    /// Principal ideal generated by g: basis g·ω_1..g·ω_n.
    pub fn principal(field: &FieldSpec, g: &[i64]) -> Self {
        let gb: Vec<BigInt> = g.iter().map(|&v| BigInt::from(v)).collect();
        let rows = (0..field.n)
            .map(|k| {
                let mut e = vec![BigInt::zero(); field.n];
                e[k] = BigInt::one();
                field.mult(&gb, &e).iter().map(|v| v.to_i64().unwrap()).collect()
            })
            .collect();
        IdealBasis { rows }
    }
}
