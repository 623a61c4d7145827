//! Counting solutions of norm-form congruences ρ(p^m, A, 𝔞; p^ℓ).

use std::sync::Arc;

use dashmap::DashMap;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::modpoly::{irreducible_of_degree, Fp};
use crate::arith::multipoly::{ModPoly, MultiPoly};
use crate::arith::primes::{factorize, ipow, vp_i128};
use crate::error::{Error, Result};
use crate::field::zeta::r_k_prime_power;
use crate::field::{FieldSpec, IdealBasis};

/// Enumeration budget: the largest number of residue vectors a brute-force pass may visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_points: u64,
}

impl Budget {
    /// The default guard p^{mn} ≤ 10⁹/n.
    pub fn default_for(n: usize) -> Self {
        Budget { max_points: 1_000_000_000 / n as u64 }
    }

    pub fn unlimited() -> Self {
        Budget { max_points: u64::MAX }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    HenselLift,
    LiftingTree,
    BruteForce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RhoResult {
    pub count: u128,
    pub backend: Backend,
}

/// A congruence query for one prime power; `ell` is v_p(M) and `x0` the base residue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CongruenceQuery {
    pub p: u64,
    pub m: u32,
    pub a: i128,
    #[serde(default)]
    pub ell: u32,
    #[serde(default)]
    pub x0: Vec<i64>,
}

impl CongruenceQuery {
    pub fn new(p: u64, m: u32, a: i128) -> Self {
        CongruenceQuery { p, m, a, ell: 0, x0: vec![] }
    }

    pub fn with_base(mut self, ell: u32, x0: Vec<i64>) -> Self {
        self.ell = ell;
        self.x0 = x0;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.m == 0 {
            return Err(Error::PreconditionUnmet("m must be at least 1".into()));
        }
        if self.ell > self.m {
            return Err(Error::PreconditionUnmet("v_p(M) exceeds m".into()));
        }
        if self.ell > 0 && self.x0.len() != n {
            return Err(Error::PreconditionUnmet("base residue has wrong length".into()));
        }
        Ok(())
    }
}

fn base_residues(x0: &[i64], n: usize, s: u64) -> Vec<u64> {
    if x0.is_empty() || s == 1 {
        return vec![0; n];
    }
    x0.iter().map(|&v| (v as i128).rem_euclid(s as i128) as u64).collect()
}

/// Histogram over A mod p^m of #{x mod p^m : F(x) ≡ A, x ≡ x0 mod p^ℓ}, by exhaustive enumeration
/// with finite differences along the last coordinate.
pub fn histogram_bruteforce(form: &MultiPoly, p: u64, m: u32, ell: u32, x0: &[i64], budget: Budget) -> Result<Vec<u64>> {
    let n = form.nvars;
    let q = ipow(p, m);
    let s = ipow(p, ell);
    let per = ipow(p, m - ell);
    let points = (per as u128).pow(n as u32);
    if points > budget.max_points as u128 {
        return Err(Error::BudgetExceeded(format!("{points} residue vectors for p={p}, m={m}")));
    }
    let base = base_residues(x0, n, s);
    let mp = ModPoly::new(form, q);
    let d = form.terms.iter().map(|(e, _)| e[n - 1]).max().unwrap_or(0) as usize;
    let work = |first: u64| -> Vec<u64> {
        let mut hist = vec![0u64; q as usize];
        let mut idx = vec![0u64; n - 1];
        if n > 1 {
            idx[0] = first;
        }
        let mut x = vec![0u64; n];
        let mut diffs = vec![0u64; d + 1];
        loop {
            for k in 0..n - 1 {
                x[k] = (base[k] + s * idx[k]) % q;
            }
            // values at y = 0..d, then forward differences
            let mut vals = Vec::with_capacity(d + 1);
            for y in 0..=d as u64 {
                x[n - 1] = (base[n - 1] + s * y) % q;
                vals.push(mp.eval(&x));
            }
            for k in 0..=d {
                diffs[k] = vals[0];
                for i in 0..d - k {
                    vals[i] = (vals[i + 1] + q - vals[i]) % q;
                }
                vals.pop();
            }
            match d {
                0 => hist[diffs[0] as usize] += per,
                1 => {
                    let (mut v0, d1) = (diffs[0], diffs[1]);
                    for _ in 0..per {
                        hist[v0 as usize] += 1;
                        v0 += d1;
                        if v0 >= q {
                            v0 -= q;
                        }
                    }
                }
                2 => {
                    let (mut v0, mut d1, d2) = (diffs[0], diffs[1], diffs[2]);
                    for _ in 0..per {
                        hist[v0 as usize] += 1;
                        v0 += d1;
                        if v0 >= q {
                            v0 -= q;
                        }
                        d1 += d2;
                        if d1 >= q {
                            d1 -= q;
                        }
                    }
                }
                3 => {
                    let (mut v0, mut d1, mut d2, d3) = (diffs[0], diffs[1], diffs[2], diffs[3]);
                    for _ in 0..per {
                        hist[v0 as usize] += 1;
                        v0 += d1;
                        if v0 >= q {
                            v0 -= q;
                        }
                        d1 += d2;
                        if d1 >= q {
                            d1 -= q;
                        }
                        d2 += d3;
                        if d2 >= q {
                            d2 -= q;
                        }
                    }
                }
                _ => {
                    let mut dd = diffs.clone();
                    for _ in 0..per {
                        hist[dd[0] as usize] += 1;
                        for k in 0..d {
                            dd[k] += dd[k + 1];
                            if dd[k] >= q {
                                dd[k] -= q;
                            }
                        }
                    }
                }
            }
            // advance prefix odometer over coordinates 1..n-1 (coordinate 0 is fixed per task)
            let mut k = 1;
            loop {
                if k >= n - 1 {
                    return hist;
                }
                idx[k] += 1;
                if idx[k] < per {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };
    let firsts: Vec<u64> = if n > 1 { (0..per).collect() } else { vec![0] };
    let hist = firsts
        .into_par_iter()
        .map(work)
        .reduce(|| vec![0u64; q as usize], |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });
    Ok(hist)
}

fn vp_capped(v: u64, p: u64, cap: u32) -> u32 {
    if v == 0 {
        return cap;
    }
    let mut v = v;
    let mut k = 0;
    while v % p == 0 && k < cap {
        v /= p;
        k += 1;
    }
    k
}

/// Same histogram by the lifting tree: a residue class x mod p^j whose gradient is nonzero
/// mod p^j (valuation δ < j) has its values spread uniformly over N(x) + p^{j+δ}ℤ, so only
/// singular classes are refined further. Every visited class counts against the budget.
pub fn histogram_lifting(form: &MultiPoly, p: u64, m: u32, ell: u32, x0: &[i64], budget: Budget) -> Result<Vec<u128>> {
    let n = form.nvars;
    let q = ipow(p, m);
    let mp = ModPoly::new(form, q);
    let grads: Vec<ModPoly> = (0..n).map(|i| ModPoly::new(&form.partial(i), q)).collect();
    // acc[k][r]: weight added to every A ≡ r mod p^k
    let mut acc: Vec<Vec<u128>> = (0..=m).map(|k| vec![0u128; ipow(p, k) as usize]).collect();
    let pn = |e: u32| (p as u128).pow(e);
    let start = base_residues(x0, n, ipow(p, ell));
    let mut stack: Vec<(Vec<u64>, u32)> = vec![(start, ell)];
    let mut visited = 0u64;
    while let Some((x, j)) = stack.pop() {
        if j >= 1 {
            let pj = ipow(p, j);
            let delta = grads.iter().map(|g| vp_capped(g.eval(&x) % pj, p, j)).min().unwrap_or(j);
            if delta < j {
                let v = mp.eval(&x);
                let k = (j + delta).min(m);
                let weight = pn(n as u32 * (m - j)) / pn(m - k);
                let pk = ipow(p, k);
                acc[k as usize][(v % pk) as usize] += weight;
                continue;
            }
            if j == m {
                acc[m as usize][mp.eval(&x) as usize] += 1;
                continue;
            }
        }
        let pj = ipow(p, j);
        let digits = ipow(p, n as u32);
        visited = visited.saturating_add(digits);
        if visited > budget.max_points {
            return Err(Error::BudgetExceeded(format!(
                "lifting tree for p^m = {p}^{m} visited more than {} classes",
                budget.max_points
            )));
        }
        for code in 0..digits {
            let mut c = code;
            let mut y = x.clone();
            for yi in y.iter_mut() {
                *yi += (c % p) * pj;
                c /= p;
            }
            stack.push((y, j + 1));
        }
    }
    let mut table = vec![0u128; q as usize];
    for (a, slot) in table.iter_mut().enumerate() {
        let mut s = 0u128;
        for k in 0..=m {
            s += acc[k as usize][a % ipow(p, k) as usize];
        }
        *slot = s;
    }
    Ok(table)
}

/// #R_δ(p^m, A; p^ℓ) for an arbitrary integer polynomial F.
pub fn stratum_count(
    f: &MultiPoly,
    p: u64,
    m: u32,
    a: i128,
    ell: u32,
    base: &[i64],
    delta: u32,
    budget: Budget,
) -> Result<u64> {
    let n = f.nvars;
    let q = ipow(p, m);
    let s = ipow(p, ell);
    let per = ipow(p, m - ell);
    let points = (per as u128).pow(n as u32);
    if points > budget.max_points as u128 {
        return Err(Error::BudgetExceeded(format!("{points} points in stratum count")));
    }
    let target = a.rem_euclid(q as i128) as u64;
    let mp = ModPoly::new(f, q);
    let grads: Vec<ModPoly> = (0..n).map(|i| ModPoly::new(&f.partial(i), q)).collect();
    let b = base_residues(base, n, s);
    let mut idx = vec![0u64; n];
    let mut x = vec![0u64; n];
    let mut count = 0u64;
    loop {
        for k in 0..n {
            x[k] = (b[k] + s * idx[k]) % q;
        }
        if mp.eval(&x) == target {
            let v = grads.iter().map(|g| vp_capped(g.eval(&x), p, m)).min().unwrap_or(m);
            if v == delta {
                count += 1;
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return Ok(count);
            }
            idx[k] += 1;
            if idx[k] < per {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Lift a count at level m to `target_m` using ρ(p^{m+1}, A + kp^m)/p^{(m+1)(n−1)} = ρ(p^m, A)/p^{m(n−1)}.
pub fn hensel_lift_rho(count_at_m: u128, n: usize, p: u64, m: u32, a: i128, ell: u32, target_m: u32) -> Result<u128> {
    if target_m < m {
        return Err(Error::PreconditionUnmet("target level below starting level".into()));
    }
    if target_m == m {
        return Ok(count_at_m);
    }
    let q = ipow(p, m) as i128;
    let va = vp_i128(a.rem_euclid(q), p).ok_or_else(|| Error::PreconditionUnmet("A ≡ 0 mod p^m".into()))?;
    let vn = vp_i128(n as i128, p).unwrap();
    if 2 * (ell + va + vn) >= m {
        return Err(Error::PreconditionUnmet(format!("ℓ + v_p(A) + v_p(n) = {} is not below m/2", ell + va + vn)));
    }
    Ok(count_at_m * (p as u128).pow((n as u32 - 1) * (target_m - m)))
}

fn closed_form_rational(field: &FieldSpec, p: u64, m: u32, k: u32) -> Result<BigRational> {
    let st = field.splitting_type(p)?;
    let n = field.n as u32;
    let pb = BigInt::from(p);
    let mut v = BigRational::from_integer(pb.pow(m * (n - 1)) * BigInt::from(r_k_prime_power(&st.residue_degrees(), k)));
    v *= BigRational::new(pb.clone(), pb.clone() - 1);
    for f in st.residue_degrees() {
        let pf = pb.pow(f);
        v *= BigRational::new(&pf - 1, pf);
    }
    Ok(v)
}

/// p^{m(n−1)} r_K(p^k) (1−1/p)^{−1} ∏_{𝔭|p}(1 − N𝔭^{−1}) with k = v_p(A) < m, for p ∤ nD_K.
pub fn rho_closed_form(field: &FieldSpec, p: u64, m: u32, a: i128) -> Result<u128> {
    if (field.n as u64 * field.disc.unsigned_abs() as u64) % p == 0 {
        return Err(Error::PreconditionUnmet(format!("p = {p} divides n·D_K")));
    }
    let q = ipow(p, m) as i128;
    let k = vp_i128(a.rem_euclid(q), p).ok_or_else(|| Error::PreconditionUnmet("A ≡ 0 mod p^m".into()))?;
    let v = closed_form_rational(field, p, m, k)?;
    if !v.is_integer() {
        return Err(Error::InvariantViolation("closed form is not integral".into()));
    }
    v.to_integer().to_u128().ok_or_else(|| Error::BudgetExceeded("count exceeds 128 bits".into()))
}

/// #{y ∈ 𝔽_{p^ℓ} : N(y) = a}.
pub fn finite_field_norm_count(p: u64, ell: u32, a: i128) -> u64 {
    if a.rem_euclid(p as i128) == 0 {
        1
    } else {
        (ipow(p, ell) - 1) / (p - 1)
    }
}

/// The same count by explicit arithmetic in 𝔽_p[t]/(g) for an irreducible g of degree ℓ.
pub fn finite_field_norm_count_brute(p: u64, ell: u32, a: i128) -> u64 {
    let g = irreducible_of_degree(p, ell);
    let target = a.rem_euclid(p as i128) as u64;
    let total = ipow(p, ell);
    let mut count = 0;
    for code in 0..total {
        let mut c = code;
        let coeffs: Vec<u64> = (0..ell).map(|_| {
            let d = c % p;
            c /= p;
            d
        }).collect();
        let y = Fp::new(p, coeffs);
        // norm = y^{(p^ℓ−1)/(p−1)}
        let e = num_bigint::BigUint::from((total - 1) / (p - 1));
        let nm = if y.is_zero() { 0 } else { y.powmod(&e, &g).c.first().copied().unwrap_or(0) };
        if nm == target {
            count += 1;
        }
    }
    count
}

type TableKey = (u64, u32, u32, Vec<u64>);
type ValueKey = (u64, u32, u64, u32, Vec<u64>);

/// Cached ρ evaluation for one norm form (the field's or an ideal's).
pub struct RhoEngine<'a> {
    pub field: &'a FieldSpec,
    pub form: MultiPoly,
    ideal: bool,
    pub budget: Budget,
    tables: DashMap<TableKey, (Arc<Vec<u128>>, Backend)>,
    values: DashMap<ValueKey, RhoResult>,
}

impl<'a> RhoEngine<'a> {
    pub fn new(field: &'a FieldSpec) -> Self {
        RhoEngine {
            field,
            form: field.norm_poly.clone(),
            ideal: false,
            budget: Budget::default_for(field.n),
            tables: DashMap::new(),
            values: DashMap::new(),
        }
    }

    pub fn with_ideal(field: &'a FieldSpec, ideal: &IdealBasis) -> Self {
        let mut e = Self::new(field);
        e.form = field.ideal_norm_poly(&ideal.rows_i128());
        e.ideal = true;
        e
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    fn closed_form_ok(&self, p: u64, ell: u32) -> bool {
        !self.ideal && ell == 0 && (self.field.n as u64 * self.field.disc.unsigned_abs() as u64) % p != 0
    }

    pub fn cache_len(&self) -> usize {
        self.values.len() + self.tables.len()
    }

    /// Exhaustive count, no fast paths.
    pub fn rho_bruteforce(&self, q: &CongruenceQuery) -> Result<u64> {
        q.validate(self.field.n)?;
        let h = histogram_bruteforce(&self.form, q.p, q.m, q.ell, &q.x0, self.budget)?;
        Ok(h[q.a.rem_euclid(ipow(q.p, q.m) as i128) as usize])
    }

    /// Full histogram over A mod p^m with its provenance.
    pub fn table(&self, p: u64, m: u32, ell: u32, x0: &[i64]) -> Result<(Arc<Vec<u128>>, Backend)> {
        let q = ipow(p, m);
        let base = base_residues(x0, self.field.n, ipow(p, ell));
        let key = (p, m, ell, if ell == 0 { vec![] } else { base.clone() });
        if let Some(t) = self.tables.get(&key) {
            return Ok(t.clone());
        }
        let (table, backend) = if self.closed_form_ok(p, ell) {
            let mut t = vec![0u128; q as usize];
            let mut nonzero = 0u128;
            for a in 1..q {
                t[a as usize] = rho_closed_form(self.field, p, m, a as i128)?;
                nonzero += t[a as usize];
            }
            t[0] = (q as u128).pow(self.field.n as u32) - nonzero;
            (t, Backend::ClosedForm)
        } else {
            let points = (ipow(p, m - ell) as u128).pow(self.field.n as u32);
            if points <= (1u128 << 16).min(self.budget.max_points as u128) {
                let h = histogram_bruteforce(&self.form, p, m, ell, x0, self.budget)?;
                (h.into_iter().map(|v| v as u128).collect(), Backend::BruteForce)
            } else {
                (histogram_lifting(&self.form, p, m, ell, x0, self.budget)?, Backend::LiftingTree)
            }
        };
        let entry = (Arc::new(table), backend);
        self.tables.insert(key, entry.clone());
        Ok(entry)
    }

    /// ρ(p^m, A; p^ℓ) by closed form, Hensel lifting from a cached level, or enumeration.
    pub fn rho(&self, q: &CongruenceQuery) -> Result<RhoResult> {
        q.validate(self.field.n)?;
        let pm = ipow(q.p, q.m);
        let ar = q.a.rem_euclid(pm as i128) as u64;
        let base = if q.ell == 0 { vec![] } else { base_residues(&q.x0, self.field.n, ipow(q.p, q.ell)) };
        let key = (q.p, q.m, ar, q.ell, base.clone());
        if let Some(v) = self.values.get(&key) {
            return Ok(*v);
        }
        let res = self.rho_uncached(q, ar)?;
        self.values.insert(key, res);
        Ok(res)
    }

    fn rho_uncached(&self, q: &CongruenceQuery, ar: u64) -> Result<RhoResult> {
        if self.closed_form_ok(q.p, q.ell) && ar != 0 {
            return Ok(RhoResult { count: rho_closed_form(self.field, q.p, q.m, ar as i128)?, backend: Backend::ClosedForm });
        }
        // Hensel from any cached lower level whose precondition holds
        for m0 in (1..q.m).rev() {
            let pm0 = ipow(q.p, m0);
            let base = if q.ell == 0 { vec![] } else { base_residues(&q.x0, self.field.n, ipow(q.p, q.ell)) };
            if let Some(v) = self.values.get(&(q.p, m0, ar % pm0, q.ell, base)) {
                if let Ok(c) = hensel_lift_rho(v.count, self.field.n, q.p, m0, ar as i128, q.ell, q.m) {
                    return Ok(RhoResult { count: c, backend: Backend::HenselLift });
                }
            }
        }
        let (t, backend) = self.table(q.p, q.m, q.ell, &q.x0)?;
        Ok(RhoResult { count: t[ar as usize], backend })
    }

    /// ρ(q, A; M) with base residue x0 mod M, by the Chinese remainder theorem over q's prime powers.
    /// Requires M | q.
    pub fn rho_composite(&self, q: u64, a: i128, modulus: u64, x0: &[i64]) -> Result<u128> {
        if q % modulus != 0 {
            return Err(Error::PreconditionUnmet(format!("M = {modulus} does not divide q = {q}")));
        }
        let mut acc = 1u128;
        for (p, m) in factorize(q) {
            let ell = crate::arith::primes::vp_u64(modulus, p);
            let query = CongruenceQuery { p, m, a, ell, x0: if ell > 0 { x0.to_vec() } else { vec![] } };
            acc *= self.rho(&query)?.count;
            if acc == 0 {
                break;
            }
        }
        Ok(acc)
    }
}

/// Whether ρ(p^m, A, 𝔞) = ρ(p^m, A), both by enumeration.
pub fn rho_ideal_equiv_check(field: &FieldSpec, ideal: &IdealBasis, p: u64, m: u32, a: i128, budget: Budget) -> Result<bool> {
    let na = ideal.norm();
    if (&na % BigInt::from(p)) == BigInt::from(0) {
        return Err(Error::PreconditionUnmet(format!("p = {p} divides the ideal norm {na}")));
    }
    let q = CongruenceQuery::new(p, m, a);
    let base = RhoEngine::new(field).with_budget(budget);
    let twisted = RhoEngine::with_ideal(field, ideal).with_budget(budget);
    Ok(base.rho_bruteforce(&q)? == twisted.rho_bruteforce(&q)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitDensity {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    /// x^{−1/n}·p^m, the expected decay scale
    pub scale: f64,
}

/// ρ(p^m, A)/p^{mn} against Σ_{l ≤ x, l ≡ A mod p^m} r_K(l) / (hκx).
pub fn limit_density_check(field: &FieldSpec, kappa: f64, p: u64, m: u32, a: i128, x: u64) -> Result<LimitDensity> {
    let engine = RhoEngine::new(field);
    let q = ipow(p, m);
    let rho = engine.rho(&CongruenceQuery::new(p, m, a))?.count as f64;
    let lhs = rho / (q as f64).powi(field.n as i32);
    let table = field.r_k_table(x)?;
    let ar = a.rem_euclid(q as i128) as u64;
    let s: u64 = (1..=x).filter(|l| l % q == ar).map(|l| table[l as usize]).sum();
    let rhs = s as f64 / (field.class_number as f64 * kappa * x as f64);
    Ok(LimitDensity { lhs, rhs, abs_diff: (lhs - rhs).abs(), scale: (x as f64).powf(-1.0 / field.n as f64) * q as f64 })
}

/// Exact ρ(q, A; M)/q^{n−1} as a rational.
pub fn normalized_rho(engine: &RhoEngine, q: u64, a: i128, modulus: u64, x0: &[i64]) -> Result<BigRational> {
    let c = engine.rho_composite(q, a, modulus, x0)?;
    Ok(BigRational::new(BigInt::from(c), BigInt::from(q).pow(engine.field.n as u32 - 1)))
}

