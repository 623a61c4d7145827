//! Dedekind zeta coefficients, Euler products and prime-class statistics.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;

use super::splitting::{PrimeClass, SplittingTable};
use super::FieldSpec;
use crate::arith::primes::{factorize, sieve_primes, SpfSieve};
use crate::error::{Error, Result};

/// Number of (m_i) ≥ 0 with Σ f_i m_i = k.
pub fn r_k_prime_power(degrees: &[u32], k: u32) -> u64 {
    let k = k as usize;
    let mut ways = vec![0u64; k + 1];
    ways[0] = 1;
    for &f in degrees {
        let f = f as usize;
        for t in f..=k {
            ways[t] += ways[t - f];
        }
    }
    ways[k]
}

impl FieldSpec {
    pub fn r_k(&self, m: u64) -> Result<u64> {
        assert!(m >= 1, "r_K is defined on positive integers");
        let mut acc = 1u64;
        for (p, k) in factorize(m) {
            let st = self.splitting_type(p)?;
            acc *= r_k_prime_power(&st.residue_degrees(), k);
            if acc == 0 {
                break;
            }
        }
        Ok(acc)
    }

    /// r_K(m) for 0 ≤ m ≤ x (entry 0 is 0).
    pub fn r_k_table(&self, x: u64) -> Result<Vec<u64>> {
        let sieve = SpfSieve::new(x.max(1));
        let mut degs: HashMap<u64, Vec<u32>> = HashMap::new();
        for p in sieve_primes(x) {
            degs.insert(p, self.splitting_type(p)?.residue_degrees());
        }
        let mut out = vec![0u64; x as usize + 1];
        for m in 1..=x {
            out[m as usize] = sieve
                .factor(m)
                .iter()
                .map(|&(p, k)| r_k_prime_power(&degs[&p], k))
                .product();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ZetaSum {
    pub x: u64,
    pub sum: u64,
    pub predicted: f64,
    /// |sum − predicted| / x^{1−1/n}
    pub normalized_error: f64,
}

/// Σ_{m≤x} r_K(m) against hκx, where `kappa` is the residue constant κ.
pub fn zeta_partial_sum(field: &FieldSpec, x: u64, kappa: f64) -> Result<ZetaSum> {
    let table = field.r_k_table(x)?;
    let sum: u64 = table.iter().sum();
    let predicted = field.class_number as f64 * kappa * x as f64;
    let scale = (x as f64).powf(1.0 - 1.0 / field.n as f64).max(1.0);
    Ok(ZetaSum { x, sum, predicted, normalized_error: (sum as f64 - predicted).abs() / scale })
}

#[derive(Clone, Debug, Serialize)]
pub struct EulerP2 {
    pub t: u64,
    pub product: f64,
    pub delta: f64,
    /// product / (log T)^{1−δ}
    pub ratio: f64,
}

/// ∏_{p ∈ P2, p ≤ T} (1 − 1/p)^{-1} with its ratio to (log T)^{1−δ}.
/// δ is the declared density if present, otherwise the estimate at T.
pub fn euler_product_p2(field: &FieldSpec, t: u64, table: Option<&SplittingTable>) -> Result<EulerP2> {
    let mut product = 1.0f64;
    for p in sieve_primes(t) {
        let class = match table.and_then(|tb| tb.class(field, p)) {
            Some(c) => c,
            None => field.prime_class(p)?,
        };
        if class == PrimeClass::P2 {
            product /= 1.0 - 1.0 / p as f64;
        }
    }
    let delta = match field.declared_density() {
        Some(d) => d,
        None => estimate_dirichlet_density(field, t.max(2), table)?,
    };
    let lt = (t.max(2) as f64).ln();
    Ok(EulerP2 { t, product, delta, ratio: product / lt.powf(1.0 - delta) })
}

/// Σ_{p≤X, p∈P1} 1/p ÷ Σ_{p≤X} 1/p.
pub fn estimate_dirichlet_density(field: &FieldSpec, x: u64, table: Option<&SplittingTable>) -> Result<f64> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for p in sieve_primes(x) {
        let class = match table.and_then(|tb| tb.class(field, p)) {
            Some(c) => c,
            None => field.prime_class(p)?,
        };
        let w = 1.0 / p as f64;
        den += w;
        if class == PrimeClass::P1 {
            num += w;
        }
    }
    if den == 0.0 {
        return Err(Error::DomainError("no primes up to X".into()));
    }
    Ok(num / den)
}

/// E_{3eH,x}(s; h) = ∏_{3eH < p < x} (1 + Σ_k h(p^k) p^{−ks}) evaluated at 1 and 1 + s0.
///
/// Requires |s0| ≤ x^{−c}.
pub fn truncated_euler_compare(
    h: &dyn Fn(u64, u32) -> f64,
    bound_h: f64,
    x: u64,
    s0: Complex64,
    c: f64,
) -> Result<(Complex64, Complex64)> {
    if s0.norm() > (x as f64).powf(-c) {
        return Err(Error::DomainError(format!("|s0| = {} exceeds x^-c", s0.norm())));
    }
    let lo = 3.0 * std::f64::consts::E * bound_h;
    let eval = |s: Complex64| {
        let mut acc = Complex64::new(1.0, 0.0);
        for p in sieve_primes(x.saturating_sub(1)) {
            if (p as f64) <= lo {
                continue;
            }
            let mut local = Complex64::new(1.0, 0.0);
            let pf = p as f64;
            let mut k = 1u32;
            loop {
                let term = Complex64::new(pf, 0.0).powc(-s * k as f64) * h(p, k);
                local += term;
                if (bound_h / pf).powi(k as i32) < 1e-18 || k > 200 {
                    break;
                }
                k += 1;
            }
            acc *= local;
        }
        acc
    };
    Ok((eval(Complex64::new(1.0, 0.0)), eval(Complex64::new(1.0, 0.0) + s0)))
}
