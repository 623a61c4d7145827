//! Norm-one unit generators, the logarithmic lattice and the fundamental domain 𝔇₊.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::intmat::solve_rational;
use crate::cone::ConeSpec;
use crate::field::embed::invert_f64;
use crate::field::{Embeddings, FieldSpec};
use crate::error::{Error, Result};
use crate::qmc::qmc_volume;

pub const TOL_LOG: f64 = 1e-10;
const TOL_ZERO: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn of(v: i128) -> Option<Sign> {
        match v.signum() {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn factor(self) -> i128 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitSystem {
    pub mu_order: u32,
    pub mu_plus_order: u32,
    pub fundamental: Vec<Vec<i128>>,
    pub norms: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlusUnitBasis {
    pub generators: Vec<Vec<i128>>,
    pub index_in_yk: u32,
}

fn big(x: &[i128]) -> Vec<BigInt> {
    x.iter().map(|&v| BigInt::from(v)).collect()
}

fn small(x: &[BigInt]) -> Result<Vec<i128>> {
    x.iter().map(|v| v.to_i128().ok_or_else(|| Error::DomainError("coordinate overflow".into()))).collect()
}

impl UnitSystem {
    pub fn from_field(field: &FieldSpec) -> Result<Self> {
        let u = field.json.units.as_ref().ok_or_else(|| Error::InvalidUnits("field has no unit data".into()))?;
        let us = UnitSystem {
            mu_order: u.mu_order,
            mu_plus_order: u.mu_plus_order,
            fundamental: u.fundamental.iter().map(|v| v.iter().map(|&a| a as i128).collect()).collect(),
            norms: u.norms.clone(),
        };
        us.validate(field)?;
        Ok(us)
    }

    pub fn validate(&self, field: &FieldSpec) -> Result<()> {
        let rank = field.r1 + field.r2 - 1;
        if self.fundamental.len() != rank || self.norms.len() != rank {
            return Err(Error::InvalidUnits(format!("expected {rank} fundamental units with norms")));
        }
        if self.mu_order == 0 || self.mu_plus_order == 0 || self.mu_order % self.mu_plus_order != 0 {
            return Err(Error::InvalidUnits("inconsistent torsion orders".into()));
        }
        for (eta, &s) in self.fundamental.iter().zip(&self.norms) {
            if eta.len() != field.n {
                return Err(Error::InvalidUnits("unit coordinate length".into()));
            }
            let nm = field.norm(&big(eta));
            if nm != BigInt::from(s) || (s != 1 && s != -1) {
                return Err(Error::InvalidUnits(format!("unit {eta:?} has norm {nm}, declared {s}")));
            }
        }
        if rank > 0 {
            let rows: Vec<Vec<f64>> = self
                .fundamental
                .iter()
                .map(|eta| log_embedding(field, &to_f64(eta)))
                .collect::<Result<_>>()?;
            let minor: Vec<Vec<f64>> = rows.iter().map(|r| r[..rank].to_vec()).collect();
            if det_f64(&minor).abs() < 1e-8 {
                return Err(Error::InvalidUnits("log vectors are dependent".into()));
            }
        }
        Ok(())
    }
}

pub fn to_f64(x: &[i128]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

pub fn det_f64(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let piv = match (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()) {
            Some(p) => p,
            None => return 1.0,
        };
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for j in c..n {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    det
}

/// Y_K⁽⁺⁾ generators from Y_K generators.
pub fn derive_plus_units(field: &FieldSpec, units: &UnitSystem) -> Result<PlusUnitBasis> {
    for (eta, &s) in units.fundamental.iter().zip(&units.norms) {
        if field.norm(&big(eta)) != BigInt::from(s) || s.abs() != 1 {
            return Err(Error::InvalidUnits(format!("unit {eta:?} fails |N| = 1")));
        }
    }
    let neg: Vec<usize> = (0..units.norms.len()).filter(|&i| units.norms[i] == -1).collect();
    let mut gens: Vec<Vec<i128>> = units.fundamental.clone();
    let mut index = 1;
    if !neg.is_empty() {
        if units.mu_plus_order < units.mu_order {
            // a root of unity of norm −1 exists; in any field with a real place it is −1
            let minus_one: Vec<i128> = field.one.iter().map(|v| -v).collect();
            if field.norm(&big(&minus_one)) != BigInt::from(-1) {
                return Err(Error::InvalidUnits("torsion of norm −1 is declared but −1 has norm +1".into()));
            }
            for &i in &neg {
                gens[i] = gens[i].iter().map(|v| -v).collect();
            }
        } else {
            let first = neg[0];
            let e1 = units.fundamental[first].clone();
            for &i in &neg[1..] {
                gens[i] = small(&field.mult(&big(&e1), &big(&units.fundamental[i])))?;
            }
            gens[first] = small(&field.mult(&big(&e1), &big(&e1)))?;
            index = 2;
        }
    }
    for g in &gens {
        if field.norm(&big(g)) != BigInt::from(1) {
            return Err(Error::InvalidUnits("derived generator does not have norm +1".into()));
        }
    }
    Ok(PlusUnitBasis { generators: gens, index_in_yk: index })
}

fn embed_log(embed: &Embeddings, v: &[Complex64]) -> Result<Vec<f64>> {
    v.iter()
        .enumerate()
        .map(|(l, z)| {
            let a = z.norm();
            if a <= TOL_ZERO {
                return Err(Error::NearZeroEmbedding);
            }
            Ok(if l < embed.r1 { a.ln() } else { 2.0 * a.ln() })
        })
        .collect()
}

/// (log|v^{(l)}|) at real places, (2 log|v^{(l)}|) at complex places.
pub fn log_embedding(field: &FieldSpec, x: &[f64]) -> Result<Vec<f64>> {
    embed_log(&field.embed, &field.embed.apply(x))
}

#[derive(Clone, Debug, Serialize)]
pub struct Membership {
    pub member: bool,
    pub xi: f64,
    pub t: Vec<f64>,
}

/// The fundamental domain 𝔇₊ for the action of Y_K⁽⁺⁾, with half-open cell coordinates t_j ∈ [0,1).
#[derive(Clone, Debug)]
pub struct LogDomain {
    pub n: usize,
    pub r1: usize,
    pub r2: usize,
    pub embed: Embeddings,
    pub basis: Vec<Vec<f64>>,
    pub weight: Vec<f64>,
    decomp: Vec<Vec<f64>>,
    pub tol: f64,
    pub plus: PlusUnitBasis,
    inverses: Vec<Vec<i128>>,
    /// Coordinate half-widths of a box containing 𝔇₊(1).
    pub box_one: Vec<f64>,
    pub mu_plus_order: u32,
    pub disc: i128,
}

impl LogDomain {
    pub fn new(field: &FieldSpec, units: &UnitSystem) -> Result<Self> {
        let plus = derive_plus_units(field, units)?;
        let k = field.r1 + field.r2;
        let weight: Vec<f64> = (0..k).map(|l| if l < field.r1 { 1.0 } else { 2.0 }).collect();
        let basis: Vec<Vec<f64>> =
            plus.generators.iter().map(|g| log_embedding(field, &to_f64(g))).collect::<Result<_>>()?;
        // columns u_1..u_{k-1}, weight
        let mut cols = basis.clone();
        cols.push(weight.clone());
        let mat: Vec<Vec<f64>> = (0..k).map(|row| cols.iter().map(|c| c[row]).collect()).collect();
        let decomp = invert_f64(&mat).ok_or_else(|| Error::InvalidUnits("log lattice is degenerate".into()))?;
        let mut inverses = Vec::new();
        for g in &plus.generators {
            inverses.push(unit_inverse(field, g)?);
        }
        let bounds: Vec<f64> = (0..k)
            .map(|l| {
                let b: f64 = basis.iter().map(|u| u[l].max(0.0)).sum();
                (b / weight[l]).exp()
            })
            .collect();
        // rows of the real embedding matrix: one per real place, two per complex place
        let mut row_bounds = Vec::with_capacity(field.n);
        for l in 0..k {
            row_bounds.push(bounds[l]);
            if l >= field.r1 {
                row_bounds.push(bounds[l]);
            }
        }
        let box_one: Vec<f64> = field
            .embed
            .real_inverse
            .iter()
            .map(|row| 1.01 * row.iter().zip(&row_bounds).map(|(a, b)| a.abs() * b).sum::<f64>())
            .collect();
        Ok(LogDomain {
            n: field.n,
            r1: field.r1,
            r2: field.r2,
            embed: field.embed.clone(),
            basis,
            weight,
            decomp,
            tol: TOL_LOG,
            plus,
            inverses,
            box_one,
            mu_plus_order: units.mu_plus_order,
            disc: field.disc,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Coordinates (t_1..t_{k−1}, ξ) of a log vector, with t snapped onto nearby integers.
    pub fn decompose(&self, lv: &[f64]) -> (Vec<f64>, f64) {
        let k = lv.len();
        let c: Vec<f64> = self.decomp.iter().map(|row| row.iter().zip(lv).map(|(a, b)| a * b).sum()).collect();
        let t = c[..k - 1]
            .iter()
            .map(|&t| {
                let r = t.round();
                if (t - r).abs() < self.tol {
                    r
                } else {
                    t
                }
            })
            .collect();
        (t, c[k - 1])
    }

    pub fn membership(&self, x: &[f64]) -> Result<Membership> {
        let lv = embed_log(&self.embed, &self.embed.apply(x))?;
        let (t, xi) = self.decompose(&lv);
        let member = t.iter().all(|&s| (0.0..1.0).contains(&s));
        Ok(Membership { member, xi, t })
    }

    fn member_from_embeddings(&self, v: &[Complex64]) -> bool {
        if self.basis.is_empty() {
            return v.iter().all(|z| z.norm() > TOL_ZERO);
        }
        match embed_log(&self.embed, v) {
            Ok(lv) => self.decompose(&lv).0.iter().all(|&s| (0.0..1.0).contains(&s)),
            Err(_) => false,
        }
    }

    /// Move x into 𝔇₊ by a unit word; returns the word and the image.
    pub fn reduce(&self, field: &FieldSpec, x: &[i128]) -> Result<(Vec<i64>, Vec<i128>)> {
        let mut word = vec![0i64; self.rank()];
        let mut cur = x.to_vec();
        for _ in 0..64 {
            let m = self.membership(&to_f64(&cur))?;
            if m.member {
                return Ok((word, cur));
            }
            for (j, &t) in m.t.iter().enumerate() {
                let k = -(t.floor() as i64);
                if k == 0 {
                    continue;
                }
                let g = if k > 0 { &self.plus.generators[j] } else { &self.inverses[j] };
                let mut y = big(&cur);
                for _ in 0..k.abs() {
                    y = field.mult(&big(g), &y);
                }
                cur = small(&y)?;
                word[j] += k;
            }
        }
        Err(Error::InvariantViolation("reduction to the fundamental domain did not converge".into()))
    }

    pub fn bounding_box(&self, level: f64) -> Vec<f64> {
        let s = level.abs().powf(1.0 / self.n as f64);
        self.box_one.iter().map(|b| b * s).collect()
    }

    /// Membership of a real point in 𝔛 ∩ 𝔇₊ (any level), given its embeddings and norm.
    pub fn cone_member(&self, x: &[f64], v: &[Complex64], norm: f64, cone: &ConeSpec) -> bool {
        if !self.member_from_embeddings(v) {
            return false;
        }
        match cone {
            ConeSpec::FullDomain { sector: None } | ConeSpec::FullDomain { sector: Some(1) } => true,
            ConeSpec::FullDomain { sector: Some(k) } => {
                if self.r2 > 0 {
                    let z = v[self.r1];
                    let arg = z.im.atan2(z.re);
                    let arg = if arg < 0.0 { arg + 2.0 * std::f64::consts::PI } else { arg };
                    arg < 2.0 * std::f64::consts::PI / *k as f64
                } else {
                    v[0].re > 0.0
                }
            }
            ConeSpec::DirectionBall { center, radius } => {
                let s = norm.abs().powf(1.0 / self.n as f64);
                let cn = self.embed.norm_f64(center).abs().powf(1.0 / self.n as f64);
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a / s - c / cn).powi(2)).sum();
                d2.sqrt() < *radius
            }
        }
    }

    /// Membership of a real point in 𝔇₊^ε(1) ∩ 𝔛.
    pub fn region_member(&self, x: &[f64], eps: Sign, cone: &ConeSpec) -> bool {
        let v = self.embed.apply(x);
        let norm: f64 = v.iter().enumerate().map(|(l, z)| if l < self.r1 { z.re } else { z.norm_sqr() }).product();
        let en = norm * eps.factor() as f64;
        if !(en > 0.0 && en <= 1.0 + 1e-12) {
            return false;
        }
        self.cone_member(x, &v, norm, cone)
    }

    /// |det| of the rows ψ(δ_j) and the weight vector.
    pub fn modified_regulator(&self) -> f64 {
        let mut rows = self.basis.clone();
        rows.push(self.weight.clone());
        det_f64(&rows).abs()
    }
}

fn unit_inverse(field: &FieldSpec, g: &[i128]) -> Result<Vec<i128>> {
    let m = field.mult_matrix(&big(g));
    let a: Vec<Vec<BigRational>> =
        m.iter().map(|r| r.iter().map(|v| BigRational::from_integer(v.clone())).collect()).collect();
    let b: Vec<BigRational> = field.one.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect();
    let y = solve_rational(&a, &b).ok_or_else(|| Error::InvalidUnits("unit is not invertible".into()))?;
    if y.iter().any(|q| !q.is_integer()) {
        return Err(Error::InvalidUnits("unit inverse is not integral".into()));
    }
    let out: Vec<BigInt> = y.iter().map(|q| q.to_integer()).collect();
    if out.iter().all(|v| v.is_zero()) {
        return Err(Error::InvalidUnits("zero inverse".into()));
    }
    small(&out)
}

/// Classical regulator of Y_K: |det| of the log vectors with the last coordinate dropped.
pub fn classical_regulator(field: &FieldSpec, units: &UnitSystem) -> Result<f64> {
    let k = field.r1 + field.r2 - 1;
    if k == 0 {
        return Ok(1.0);
    }
    let rows: Vec<Vec<f64>> = units
        .fundamental
        .iter()
        .map(|eta| log_embedding(field, &to_f64(eta)).map(|v| v[..k].to_vec()))
        .collect::<Result<_>>()?;
    Ok(det_f64(&rows).abs())
}

/// Residue constant κ = 2^{r1}(2π)^{r2} R_K / (|μ_K| √|D_K|).
pub fn class_kappa(field: &FieldSpec, units: &UnitSystem) -> Result<f64> {
    let r = classical_regulator(field, units)?;
    Ok(2f64.powi(field.r1 as i32) * (2.0 * std::f64::consts::PI).powi(field.r2 as i32) * r
        / (units.mu_order as f64 * (field.disc.abs() as f64).sqrt()))
}

/// Exact volume of 𝔇₊^ε(1) ∩ 𝔛 for full-domain cones:
/// 2^{max(r1−1,0)} (2π)^{r2} R⁺ / (n √|D_K|) divided by the sector count, where R⁺ is the modified regulator.
pub fn kappa_closed_form(domain: &LogDomain, cone: &ConeSpec, eps: Sign) -> Option<f64> {
    let k = cone.closed_form_fraction()?;
    if eps == Sign::Minus && domain.r1 == 0 {
        return Some(0.0);
    }
    let base = 2f64.powi(domain.r1.saturating_sub(1) as i32)
        * (2.0 * std::f64::consts::PI).powi(domain.r2 as i32)
        * domain.modified_regulator()
        / (domain.n as f64 * (domain.disc.abs() as f64).sqrt());
    Some(base / k as f64)
}

/// The closed form exactly as printed in the source remark, 2^{r1−1}(2π)^{r2}R⁺/√|D_K|, for comparison.
pub fn kappa_remark_literal(domain: &LogDomain, eps: Sign) -> f64 {
    if eps == Sign::Minus && domain.r1 == 0 {
        return 0.0;
    }
    2f64.powi(domain.r1 as i32 - 1) * (2.0 * std::f64::consts::PI).powi(domain.r2 as i32) * domain.modified_regulator()
        / (domain.disc.abs() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMethod {
    Lattice,
    Qmc,
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaReport {
    pub value: f64,
    pub error_estimate: f64,
    pub method: KappaMethod,
    pub budget: u64,
}

fn lattice_count(domain: &LogDomain, cone: &ConeSpec, eps: Sign, half: &[f64], scale: f64) -> f64 {
    use rayon::prelude::*;
    let n = domain.n;
    let counts: Vec<i64> = half.iter().map(|h| (h * scale).ceil() as i64).collect();
    // midpoints (k + 1/2)/S for k in [−c, c)
    let first = counts[0];
    let total: u64 = (-first..first)
        .into_par_iter()
        .map(|k0| {
            let mut x = vec![0.0; n];
            x[0] = (k0 as f64 + 0.5) / scale;
            let mut idx: Vec<i64> = counts[1..].iter().map(|c| -c).collect();
            let mut hits = 0u64;
            loop {
                for (j, &k) in idx.iter().enumerate() {
                    x[j + 1] = (k as f64 + 0.5) / scale;
                }
                if domain.region_member(&x, eps, cone) {
                    hits += 1;
                }
                // odometer
                let mut j = 0;
                loop {
                    if j == idx.len() {
                        return hits;
                    }
                    idx[j] += 1;
                    if idx[j] < counts[j + 1] {
                        break;
                    }
                    idx[j] = -counts[j + 1];
                    j += 1;
                }
            }
        })
        .sum();
    total as f64 / scale.powi(n as i32)
}

/// Estimate vol(𝔇₊^ε(1) ∩ 𝔛). `budget` is the number of membership tests; `tol` bounds the error estimate.
pub fn kappa_eps(
    domain: &LogDomain,
    cone: &ConeSpec,
    eps: Sign,
    method: KappaMethod,
    budget: u64,
    seed: u64,
    tol: Option<f64>,
) -> Result<KappaReport> {
    if eps == Sign::Minus && domain.r1 == 0 {
        return Ok(KappaReport { value: 0.0, error_estimate: 0.0, method, budget });
    }
    let half = domain.bounding_box(1.0);
    let box_vol: f64 = half.iter().map(|h| 2.0 * h).product();
    let (value, err) = match method {
        KappaMethod::Lattice => {
            let scale = (budget as f64 / box_vol).powf(1.0 / domain.n as f64).max(1.0);
            let v = lattice_count(domain, cone, eps, &half, scale);
            let coarse = lattice_count(domain, cone, eps, &half, scale / 2.0);
            (v, (v - coarse).abs())
        }
        KappaMethod::Qmc => {
            let lo: Vec<f64> = half.iter().map(|h| -h).collect();
            let est = qmc_volume(&lo, &half, (budget / 8).max(1), 8, seed, &|x| domain.region_member(x, eps, cone));
            (est.value, est.error_estimate)
        }
    };
    if let Some(t) = tol {
        if err > t {
            return Err(Error::BudgetExceeded(format!("volume error estimate {err} above tolerance {t}")));
        }
    }
    Ok(KappaReport { value, error_estimate: err, method, budget })
}

/// Smallest unit a + b√d > 1 of Z[√d] with a² − d b² = ±1, by the continued fraction of √d.
pub fn pell_unit(d: u64) -> (u128, u128) {
    let a0 = (d as f64).sqrt() as u64;
    assert!(a0 * a0 != d, "d must not be a square");
    let (mut m, mut q, mut a) = (0u64, 1u64, a0);
    let (mut p_prev, mut p) = (1u128, a0 as u128);
    let (mut q_prev, mut qq) = (0u128, 1u128);
    loop {
        let lhs = p * p;
        let rhs = d as u128 * qq * qq;
        if lhs == rhs + 1 || lhs + 1 == rhs {
            return (p, qq);
        }
        m = a * q - m;
        q = (d - m * m) / q;
        a = (a0 + m) / q;
        let np = a as u128 * p + p_prev;
        let nq = a as u128 * qq + q_prev;
        p_prev = p;
        q_prev = qq;
        p = np;
        qq = nq;
    }
}
