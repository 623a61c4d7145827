//! Local densities β_p, the archimedean density β_∞, and the end-to-end check of N(T).

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::arith::intmat::lattice_index;
use crate::arith::primes::{ipow, sieve_primes, vp_i128, vp_u64};
use crate::congruence::{Backend, RhoEngine};
use crate::error::{Error, Result};
use crate::field::zeta::r_k_prime_power;
use crate::field::FieldSpec;
use crate::qmc::qmc_integrate;
use crate::representation::{count_nt, CountReport, ProblemConfig, ReprCounter};
use crate::units::Sign;

fn rat(n: impl Into<BigInt>, d: impl Into<BigInt>) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn pow_big(p: u64, e: u32) -> BigInt {
    BigInt::from(p).pow(e)
}

fn eval_form(f: &[i64], u: &[i64]) -> i128 {
    f.iter().zip(u).map(|(&c, &x)| c as i128 * x as i128).sum()
}

/// Iterate over 𝒰_m = {u mod p^m : u ≡ a mod p^ℓ}, calling `visit` with each representative.
fn for_each_u(p: u64, m: u32, ell: u32, a: &[i64], s: usize, visit: &mut dyn FnMut(&[i64])) {
    let step = ipow(p, ell) as i64;
    let per = ipow(p, m - ell);
    let base: Vec<i64> = a.iter().map(|&v| v.rem_euclid(step)).collect();
    let mut idx = vec![0u64; s];
    let mut u = base.clone();
    loop {
        for k in 0..s {
            u[k] = base[k] + step * idx[k] as i64;
        }
        visit(&u);
        let mut k = 0;
        loop {
            if k == s {
                return;
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

#[derive(Clone, Debug)]
pub struct DivisorDensityQuery {
    pub forms: Vec<Vec<i64>>,
    pub p: u64,
    pub c: Vec<u32>,
    pub modulus: u64,
    pub a: Vec<i64>,
}

/// α_f(p^{c_1},…,p^{c_r}) = p^{−ms} #{u ∈ 𝒰_m : p^{c_i} | f_i(u)}, m = max c_i, by enumeration.
pub fn divisor_density(q: &DivisorDensityQuery, budget: u64) -> Result<BigRational> {
    let m = q.c.iter().copied().max().unwrap_or(0);
    let s = q.forms.first().map(|f| f.len()).unwrap_or(0);
    if m == 0 {
        return Ok(BigRational::one());
    }
    let ell = vp_u64(q.modulus, q.p).min(m);
    let points = (ipow(q.p, m - ell) as u128).pow(s as u32);
    if points > budget as u128 {
        return Err(Error::BudgetExceeded(format!("{points} residue vectors")));
    }
    let a = if q.a.is_empty() { vec![0; s] } else { q.a.clone() };
    let mods: Vec<i128> = q.c.iter().map(|&c| ipow(q.p, c) as i128).collect();
    let mut count = 0u64;
    for_each_u(q.p, m, ell, &a, s, &mut |u| {
        if q.forms.iter().zip(&mods).all(|(f, &md)| eval_form(f, u) % md == 0) {
            count += 1;
        }
    });
    Ok(rat(count, pow_big(q.p, m * s as u32)))
}

/// The same density for p ∤ M as |coker|/p^{Σc}, where the cokernel is that of
/// ℤ^s → ⊕ ℤ/p^{c_i}, u ↦ (f_i(u)).
pub fn divisor_density_lattice(forms: &[Vec<i64>], p: u64, c: &[u32]) -> BigRational {
    let r = forms.len();
    let s = forms.first().map(|f| f.len()).unwrap_or(0);
    let mut gens: Vec<Vec<BigInt>> = (0..s).map(|j| forms.iter().map(|f| BigInt::from(f[j])).collect()).collect();
    for (i, &ci) in c.iter().enumerate() {
        let mut e = vec![BigInt::zero(); r];
        e[i] = pow_big(p, ci);
        gens.push(e);
    }
    let coker = lattice_index(&gens, r);
    BigRational::new(coker, pow_big(p, c.iter().sum()))
}

/// #{k ∈ ℤ_{≥0}^r : max k_i = J}.
pub fn max_level_count(r: u32, j: u32) -> u64 {
    (j as u64 + 1).pow(r) - (j as u64).pow(r)
}

/// (1 − 1/p)^{−1} ∏_{𝔭|p} (1 − N𝔭^{−1}).
pub fn local_factor(field: &FieldSpec, p: u64) -> Result<BigRational> {
    let st = field.splitting_type(p)?;
    let mut v = rat(p, p - 1);
    for f in st.residue_degrees() {
        let pf = pow_big(p, f);
        v *= BigRational::new(&pf - 1, pf);
    }
    Ok(v)
}

/// m′ = 2(1 + v_p(M) + Σ v_p(f_i(a)) + Σ v_p(n_i)), with v_p(0) read as v_p(M).
pub fn hensel_threshold(config: &ProblemConfig, p: u64) -> u32 {
    let vm = vp_u64(config.modulus, p);
    let mut t = 1 + vm;
    for i in 0..config.r {
        let fa = eval_form(&config.forms[i], &config.a) + config.shifts[i] as i128;
        t += vp_i128(fa, p).unwrap_or(vm);
        t += vp_u64(config.fields[i].n as u64, p);
    }
    2 * t
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelValue {
    pub m: u32,
    pub value: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalDensityResult {
    pub p: u64,
    pub m: u32,
    pub value: String,
    pub value_f64: f64,
    pub stabilized: bool,
    pub backend: String,
    pub trace: Vec<LevelValue>,
    #[serde(skip)]
    pub exact: BigRational,
}

fn valuation_method_ok(config: &ProblemConfig, p: u64) -> bool {
    config.modulus % p != 0
        && config.shifts.iter().all(|&s| s == 0)
        && config.fields.iter().all(|f| (f.n as u64 * f.disc.unsigned_abs() as u64) % p != 0)
}

/// β_p(m) through valuation classes: P_m(k) by inclusion–exclusion over divisor densities,
/// weights r_K(p^k)·c_p for k < m and the complementary weight for k = m.
fn beta_level_valuation(config: &ProblemConfig, p: u64, m: u32) -> Result<BigRational> {
    let r = config.r;
    let mut g: Vec<Vec<BigRational>> = Vec::with_capacity(r);
    for f in &config.fields {
        let cp = local_factor(f, p)?;
        let degs = f.splitting_type(p)?.residue_degrees();
        let mut gi: Vec<BigRational> = (0..m).map(|k| BigRational::from_integer(r_k_prime_power(&degs, k).into()) * &cp).collect();
        let mut top = BigRational::from_integer(pow_big(p, m));
        for (k, v) in gi.iter().enumerate() {
            let phi = pow_big(p, m - k as u32) - pow_big(p, m - k as u32 - 1);
            top -= v * BigRational::from_integer(phi);
        }
        gi.push(top);
        g.push(gi);
    }
    let mut alpha: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
    let mut alpha_of = |c: &Vec<u32>| -> BigRational {
        alpha.entry(c.clone()).or_insert_with(|| divisor_density_lattice(&config.forms, p, c)).clone()
    };
    let mut total = BigRational::zero();
    let mut k = vec![0u32; r];
    loop {
        // P(v_p(f_i) = k_i exactly, with k_i = m meaning ≥ m)
        let free: Vec<usize> = (0..r).filter(|&i| k[i] < m).collect();
        let mut prob = BigRational::zero();
        for mask in 0..1u32 << free.len() {
            let mut c = k.clone();
            for (b, &i) in free.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    c[i] += 1;
                }
            }
            let a = alpha_of(&c);
            if mask.count_ones() % 2 == 0 {
                prob += a;
            } else {
                prob -= a;
            }
        }
        if !prob.is_zero() {
            let mut w = prob;
            for i in 0..r {
                w *= &g[i][k[i] as usize];
            }
            total += w;
        }
        let mut i = 0;
        loop {
            if i == r {
                return Ok(total);
            }
            k[i] += 1;
            if k[i] <= m {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

/// β_p(m) by enumerating 𝒰_m against full ρ tables.
fn beta_level_tables(config: &ProblemConfig, engines: &[RhoEngine], p: u64, m: u32, budget: u64) -> Result<(BigRational, Backend)> {
    let ell = vp_u64(config.modulus, p).min(m);
    let s = config.s;
    let points = (ipow(p, m - ell) as u128).pow(s as u32);
    if points > budget as u128 {
        return Err(Error::BudgetExceeded(format!("{points} residue vectors for β_{p} at level {m}")));
    }
    let q = ipow(p, m) as i128;
    let mut tables = Vec::new();
    let mut backend = Backend::BruteForce;
    for (i, e) in engines.iter().enumerate() {
        let (t, b) = e.table(p, m, ell, &config.b[i])?;
        if b == Backend::LiftingTree {
            backend = b;
        }
        tables.push(t);
    }
    let mut acc = BigInt::zero();
    let mut small: u128 = 0;
    let mut overflow = false;
    for_each_u(p, m, ell, &config.a, s, &mut |u| {
        let mut prod: u128 = 1;
        for (i, t) in tables.iter().enumerate() {
            let v = (eval_form(&config.forms[i], u) + config.shifts[i] as i128).rem_euclid(q);
            match prod.checked_mul(t[v as usize]) {
                Some(x) => prod = x,
                None => {
                    overflow = true;
                    return;
                }
            }
            if prod == 0 {
                return;
            }
        }
        match small.checked_add(prod) {
            Some(x) => small = x,
            None => {
                acc += BigInt::from(small);
                small = prod;
            }
        }
    });
    if overflow {
        return Err(Error::BudgetExceeded("product of local counts exceeds 128 bits".into()));
    }
    acc += BigInt::from(small);
    let mut den = pow_big(p, m * s as u32);
    for f in &config.fields {
        den *= pow_big(p, m * (f.n as u32 - 1));
    }
    Ok((BigRational::new(acc, den), backend))
}

/// β_p(m) at one level by the valuation-class formula (requires p ∤ M·∏ n_i D_i).
pub fn beta_level_by_valuations(config: &ProblemConfig, p: u64, m: u32) -> Result<BigRational> {
    if !valuation_method_ok(config, p) {
        return Err(Error::PreconditionUnmet(format!("p = {p} divides M or some n_i D_i")));
    }
    beta_level_valuation(config, p, m)
}

/// β_p(m) at one level by summing ρ tables over 𝒰_m.
pub fn beta_level_by_tables(config: &ProblemConfig, p: u64, m: u32, budget: u64) -> Result<BigRational> {
    let engines: Vec<RhoEngine> = config.fields.iter().map(|f| RhoEngine::new(f)).collect();
    Ok(beta_level_tables(config, &engines, p, m, budget)?.0)
}

/// Default enumeration budget for β_p table sums.
pub const BETA_BUDGET: u64 = 1 << 24;

/// β_p(m) for m = 1, 2, …, stopping once two consecutive levels agree exactly with m − 1 ≥ m′.
/// Never errors on non-stabilization; the flag records it.
pub fn beta_p_report(config: &ProblemConfig, p: u64, m_max: Option<u32>) -> Result<LocalDensityResult> {
    let m_prime = hensel_threshold(config, p);
    let m_max = m_max.unwrap_or((m_prime + 2).max(6));
    let valuation = valuation_method_ok(config, p);
    let engines: Vec<RhoEngine> = config.fields.iter().map(|f| RhoEngine::new(f)).collect();
    let mut trace = Vec::new();
    let mut prev: Option<BigRational> = None;
    let mut backend = if valuation { "valuation_classes".to_string() } else { "rho_tables".to_string() };
    let mut last = BigRational::zero();
    let mut last_m = 0;
    for m in 1..=m_max {
        let v = if valuation {
            beta_level_valuation(config, p, m)?
        } else {
            let (v, b) = match beta_level_tables(config, &engines, p, m, BETA_BUDGET) {
                Ok(x) => x,
                Err(Error::BudgetExceeded(_)) if last_m > 0 => break,
                Err(e) => return Err(e),
            };
            if b == Backend::LiftingTree {
                backend = "rho_tables+lifting_tree".into();
            }
            v
        };
        trace.push(LevelValue { m, value: v.to_string() });
        let stable = prev.as_ref() == Some(&v) && m > m_prime;
        last = v.clone();
        last_m = m;
        if stable {
            return Ok(LocalDensityResult {
                p,
                m,
                value: v.to_string(),
                value_f64: v.to_f64().unwrap_or(f64::NAN),
                stabilized: true,
                backend,
                trace,
                exact: v,
            });
        }
        prev = Some(v);
    }
    Ok(LocalDensityResult {
        p,
        m: last_m,
        value: last.to_string(),
        value_f64: last.to_f64().unwrap_or(f64::NAN),
        stabilized: false,
        backend,
        trace,
        exact: last,
    })
}

/// β_p with stabilization required.
pub fn beta_p(config: &ProblemConfig, p: u64, m_max: Option<u32>) -> Result<LocalDensityResult> {
    let r = beta_p_report(config, p, m_max)?;
    if !r.stabilized {
        let defect = if r.trace.len() >= 2 {
            let a: BigRational = r.trace[r.trace.len() - 1].value.parse().unwrap_or_default();
            let b: BigRational = r.trace[r.trace.len() - 2].value.parse().unwrap_or_default();
            (a - b).abs().to_string()
        } else {
            "undefined".into()
        };
        return Err(Error::NotStabilized { level: r.m, defect });
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaInfinity {
    pub value: f64,
    pub err: f64,
    /// κ_i^+ and κ_i^−
    pub kappas: Vec<[f64; 2]>,
    /// volume of the region in each sign pattern of (f_1, …, f_r)
    pub volumes: BTreeMap<String, f64>,
}

/// β_∞ = Σ_ε vol(𝔎 ∩ f^{−1}(ℝ_ε)) ∏ κ_i^{ε_i}, volumes by seeded QMC.
pub fn beta_infinity(config: &ProblemConfig, points: u64, seed: u64) -> Result<BetaInfinity> {
    let counters: Vec<ReprCounter> = config.counters()?;
    let mut kappas = Vec::new();
    for (i, c) in counters.iter().enumerate() {
        let kp = c.kappa(Sign::Plus, seed.wrapping_add(2 * i as u64 + 1))?;
        let km = c.kappa(Sign::Minus, seed.wrapping_add(2 * i as u64 + 2))?;
        kappas.push([kp, km]);
    }
    let (lo, hi) = config.region.bbox();
    let r = config.r;
    let pattern = |u: &[f64]| -> Option<usize> {
        if !config.region.contains(u) {
            return None;
        }
        let mut code = 0;
        for i in 0..r {
            let v: f64 = config.forms[i].iter().zip(u).map(|(&c, x)| c as f64 * x).sum();
            if v < 0.0 {
                code |= 1 << i;
            } else if v == 0.0 {
                return None;
            }
        }
        Some(code)
    };
    let weight = |code: usize| -> f64 { (0..r).map(|i| kappas[i][code >> i & 1]).product() };
    let est = qmc_integrate(&lo, &hi, (points / 8).max(1), 8, seed, &|u| pattern(u).map(weight).unwrap_or(0.0));
    let mut volumes = BTreeMap::new();
    for code in 0..1usize << r {
        let key: String = (0..r).map(|i| if code >> i & 1 == 1 { '-' } else { '+' }).collect();
        let v = qmc_integrate(&lo, &hi, (points / 8).max(1), 8, seed, &|u| if pattern(u) == Some(code) { 1.0 } else { 0.0 });
        if v.value > 0.0 {
            volumes.insert(key, v.value);
        }
    }
    Ok(BetaInfinity { value: est.value, err: est.error_estimate, kappas, volumes })
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaEntry {
    pub p: u64,
    pub value: String,
    pub value_f64: f64,
    pub m: u32,
    pub stabilized: bool,
    pub backend: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct NbReport {
    #[serde(rename = "N")]
    pub n: u128,
    #[serde(rename = "T")]
    pub t: u64,
    pub count: CountReport,
    pub beta_inf: BetaInfinity,
    pub beta_p: Vec<BetaEntry>,
    pub euler_product: f64,
    pub prediction: f64,
    pub rel_error: f64,
    pub p_cut: u64,
    /// largest p ≤ 100 with |β_p − 1| > 10/p²
    pub l_prime: u64,
    /// fitted C in |β_p − 1| ≤ C/p² over L′ < p ≤ 100, p ∤ M
    pub fitted_c: f64,
    /// ∏_{p > P_cut} (1 + C/p²) − 1
    pub tail_estimate: f64,
}

/// Largest p ≤ 100 with |β_p − 1| > 10/p², and the fitted constant beyond it.
pub fn fit_tail(entries: &[BetaEntry], modulus: u64) -> (u64, f64) {
    let l_prime = entries
        .iter()
        .filter(|e| e.p <= 100 && (e.value_f64 - 1.0).abs() > 10.0 / (e.p * e.p) as f64)
        .map(|e| e.p)
        .max()
        .unwrap_or(1);
    let c = entries
        .iter()
        .filter(|e| e.p > l_prime && e.p <= 100 && modulus % e.p != 0)
        .map(|e| (e.value_f64 - 1.0).abs() * (e.p * e.p) as f64)
        .fold(0.0, f64::max);
    (l_prime, c)
}

/// Compare N(T) with β_∞ ∏_{p ≤ P_cut} β_p T^s.
pub fn verify_nb(config: &ProblemConfig, t: u64, p_cut: Option<u64>, qmc_points: u64, seed: u64) -> Result<NbReport> {
    let count = count_nt(config, t)?;
    let beta_inf = beta_infinity(config, qmc_points, seed)?;
    let probe = p_cut.unwrap_or(50).max(100);
    let entries: Vec<BetaEntry> = sieve_primes(probe)
        .par_iter()
        .map(|&p| {
            let r = beta_p_report(config, p, None)?;
            Ok(BetaEntry { p, value: r.value, value_f64: r.value_f64, m: r.m, stabilized: r.stabilized, backend: r.backend })
        })
        .collect::<Result<Vec<_>>>()?;
    let (l_prime, fitted_c) = fit_tail(&entries, config.modulus);
    let p_cut = p_cut.unwrap_or(l_prime.max(50));
    let beta_p: Vec<BetaEntry> = entries.into_iter().filter(|e| e.p <= p_cut).collect();
    let euler_product: f64 = beta_p.iter().map(|e| e.value_f64).product();
    let prediction = beta_inf.value * euler_product * (t as f64).powi(config.s as i32);
    let rel_error = if prediction != 0.0 { (count.n as f64 - prediction).abs() / prediction } else { f64::INFINITY };
    let log_tail: f64 = sieve_primes(1_000_000).iter().filter(|&&p| p > p_cut).map(|&p| (1.0 + fitted_c / (p * p) as f64).ln()).sum();
    Ok(NbReport {
        n: count.n,
        t,
        count,
        beta_inf,
        beta_p,
        euler_product,
        prediction,
        rel_error,
        p_cut,
        l_prime,
        fitted_c,
        tail_estimate: log_tail.exp() - 1.0,
    })
}
