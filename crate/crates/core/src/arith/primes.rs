//! Primes, primality and integer factorization.

pub fn sieve_primes(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Smallest-prime-factor table for fast factorization of every integer up to a bound.
pub struct SpfSieve {
    spf: Vec<u32>,
}

impl SpfSieve {
    pub fn new(limit: u64) -> Self {
        let n = limit.max(1) as usize;
        let mut spf = vec![0u32; n + 1];
        for i in 2..=n {
            if spf[i] == 0 {
                let mut j = i;
                while j <= n {
                    if spf[j] == 0 {
                        spf[j] = i as u32;
                    }
                    j += i;
                }
            }
        }
        SpfSieve { spf }
    }

    pub fn limit(&self) -> u64 {
        (self.spf.len() - 1) as u64
    }

    pub fn factor(&self, mut m: u64) -> Vec<(u64, u32)> {
        assert!(m as usize <= self.spf.len() - 1, "value beyond sieve limit");
        let mut out: Vec<(u64, u32)> = Vec::new();
        while m > 1 {
            let p = self.spf[m as usize] as u64;
            let mut k = 0;
            while m % p == 0 {
                m /= p;
                k += 1;
            }
            out.push((p, k));
        }
        out
    }
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

// Brent's variant; deterministic sequence of constants.
fn pollard_rho(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    for c in 1..n {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
    }
    n
}

/// Prime factorization by trial division up to 1000 followed by Pollard rho.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out: Vec<(u64, u32)> = Vec::new();
    if n <= 1 {
        return out;
    }
    let mut p = 2u64;
    while p < 1000 && p * p <= n {
        if n % p == 0 {
            let mut k = 0;
            while n % p == 0 {
                n /= p;
                k += 1;
            }
            out.push((p, k));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let mut stack = vec![];
    if n > 1 {
        stack.push(n);
    }
    let mut big: Vec<u64> = Vec::new();
    while let Some(m) = stack.pop() {
        if m == 1 {
            continue;
        }
        if is_prime(m) {
            big.push(m);
            continue;
        }
        let d = pollard_rho(m);
        stack.push(d);
        stack.push(m / d);
    }
    big.sort_unstable();
    for q in big {
        match out.last_mut() {
            Some((pp, k)) if *pp == q => *k += 1,
            _ => out.push((q, 1)),
        }
    }
    out.sort_unstable();
    out
}

/// p-adic valuation; `None` for zero.
pub fn vp_i128(n: i128, p: u64) -> Option<u32> {
    if n == 0 {
        return None;
    }
    let p = p as i128;
    let mut n = n;
    let mut k = 0;
    while n % p == 0 {
        n /= p;
        k += 1;
    }
    Some(k)
}

pub fn vp_u64(n: u64, p: u64) -> u32 {
    vp_i128(n as i128, p).unwrap_or(u32::MAX)
}

pub fn ipow(p: u64, e: u32) -> u64 {
    p.checked_pow(e).expect("prime power overflow")
}

/// Divisors of a number given as its factorization, unsorted.
pub fn divisors(fac: &[(u64, u32)]) -> Vec<u64> {
    let mut out = vec![1u64];
    for &(p, k) in fac {
        let len = out.len();
        let mut pk = 1u64;
        for _ in 0..k {
            pk *= p;
            for i in 0..len {
                out.push(out[i] * pk);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_matches_sieve() {
        let s = SpfSieve::new(5000);
        for m in 1..5000u64 {
            assert_eq!(factorize(m), s.factor(m), "m = {m}");
        }
    }

    #[test]
    fn factor_large() {
        let n = 1_000_000_007u64 * 998_244_353;
        assert_eq!(factorize(n), vec![(998_244_353, 1), (1_000_000_007, 1)]);
        assert_eq!(factorize(1 << 40), vec![(2, 40)]);
    }

    #[test]
    fn primes_small() {
        assert_eq!(sieve_primes(30), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(561));
    }
}
