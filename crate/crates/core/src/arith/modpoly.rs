//! Univariate polynomials over a prime field and their factorization.

use num_bigint::BigUint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::primes::pow_mod;

/// Coefficients in ascending degree order, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fp {
    pub p: u64,
    pub c: Vec<u64>,
}

impl Fp {
    pub fn new(p: u64, mut c: Vec<u64>) -> Self {
        assert!(p < (1 << 32), "prime too large for modular polynomial arithmetic");
        for x in c.iter_mut() {
            *x %= p;
        }
        let mut f = Fp { p, c };
        f.trim();
        f
    }

    pub fn from_ints(p: u64, c: &[i128]) -> Self {
        let pi = p as i128;
        Fp::new(p, c.iter().map(|&x| x.rem_euclid(pi) as u64).collect())
    }

    fn trim(&mut self) {
        while self.c.last() == Some(&0) {
            self.c.pop();
        }
    }

    pub fn one(p: u64) -> Self {
        Fp::new(p, vec![1])
    }

    pub fn x(p: u64) -> Self {
        Fp::new(p, vec![0, 1])
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.c == [1]
    }

    /// Degree; zero polynomial reports -1.
    pub fn deg(&self) -> i64 {
        self.c.len() as i64 - 1
    }

    fn inv(&self, a: u64) -> u64 {
        pow_mod(a, self.p - 2, self.p)
    }

    pub fn monic(&self) -> Fp {
        if self.is_zero() {
            return self.clone();
        }
        let lc = *self.c.last().unwrap();
        let il = self.inv(lc);
        Fp::new(self.p, self.c.iter().map(|&x| x * il % self.p).collect())
    }

    pub fn add(&self, o: &Fp) -> Fp {
        let n = self.c.len().max(o.c.len());
        let mut c = vec![0; n];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = (self.c.get(i).copied().unwrap_or(0) + o.c.get(i).copied().unwrap_or(0)) % self.p;
        }
        Fp::new(self.p, c)
    }

    pub fn sub(&self, o: &Fp) -> Fp {
        let n = self.c.len().max(o.c.len());
        let mut c = vec![0; n];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = (self.c.get(i).copied().unwrap_or(0) + self.p - o.c.get(i).copied().unwrap_or(0)) % self.p;
        }
        Fp::new(self.p, c)
    }

    pub fn mul(&self, o: &Fp) -> Fp {
        if self.is_zero() || o.is_zero() {
            return Fp::new(self.p, vec![]);
        }
        let mut c = vec![0u64; self.c.len() + o.c.len() - 1];
        for (i, &a) in self.c.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in o.c.iter().enumerate() {
                c[i + j] = (c[i + j] + a * b) % self.p;
            }
        }
        Fp::new(self.p, c)
    }

    pub fn divrem(&self, d: &Fp) -> (Fp, Fp) {
        assert!(!d.is_zero(), "division by zero polynomial");
        let p = self.p;
        let mut r = self.c.clone();
        let dd = d.c.len() - 1;
        if r.len() <= dd {
            return (Fp::new(p, vec![]), self.clone());
        }
        let il = self.inv(*d.c.last().unwrap());
        let mut q = vec![0u64; r.len() - dd];
        for i in (0..q.len()).rev() {
            let coef = r[i + dd] * il % p;
            q[i] = coef;
            if coef == 0 {
                continue;
            }
            for (j, &dj) in d.c.iter().enumerate() {
                r[i + j] = (r[i + j] + p - coef * dj % p) % p;
            }
        }
        r.truncate(dd);
        (Fp::new(p, q), Fp::new(p, r))
    }

    pub fn rem(&self, d: &Fp) -> Fp {
        self.divrem(d).1
    }

    pub fn div(&self, d: &Fp) -> Fp {
        self.divrem(d).0
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, o: &Fp) -> Fp {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> Fp {
        let c = self
            .c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &a)| (i as u64 % self.p) * a % self.p)
            .collect();
        Fp::new(self.p, c)
    }

    pub fn powmod(&self, e: &BigUint, m: &Fp) -> Fp {
        let mut result = Fp::one(self.p).rem(m);
        let base = self.rem(m);
        for i in (0..e.bits()).rev() {
            result = result.mul(&result).rem(m);
            if e.bit(i) {
                result = result.mul(&base).rem(m);
            }
        }
        result
    }

    pub fn eval(&self, x: u64) -> u64 {
        let mut acc = 0u64;
        for &a in self.c.iter().rev() {
            acc = (acc * x + a) % self.p;
        }
        acc
    }
}

fn square_free(f: &Fp) -> Vec<(Fp, u32)> {
    let p = f.p;
    let mut out = Vec::new();
    let mut c = f.gcd(&f.derivative());
    let mut w = f.monic().div(&c);
    let mut i = 1;
    while !w.is_one() {
        let y = w.gcd(&c);
        let fac = w.div(&y);
        if fac.deg() > 0 {
            out.push((fac, i));
        }
        w = y;
        c = c.div(&w);
        i += 1;
    }
    if c.deg() > 0 {
        // c is a polynomial in x^p; take the p-th root coefficientwise
        let root = Fp::new(p, c.c.iter().step_by(p as usize).copied().collect());
        for (g, m) in square_free(&root) {
            out.push((g, m * p as u32));
        }
    }
    out
}

fn distinct_degree(f: &Fp) -> Vec<(Fp, u32)> {
    let p = f.p;
    let mut out = Vec::new();
    let mut rest = f.clone();
    let x = Fp::x(p);
    let mut h = x.rem(&rest);
    let pe = BigUint::from(p);
    let mut i = 1u32;
    while rest.deg() >= 2 * i as i64 {
        h = h.powmod(&pe, &rest);
        let g = rest.gcd(&h.sub(&x));
        if !g.is_one() {
            rest = rest.div(&g);
            h = h.rem(&rest);
            out.push((g, i));
        }
        i += 1;
    }
    if rest.deg() > 0 {
        let d = rest.deg() as u32;
        out.push((rest, d));
    }
    out
}

fn equal_degree(f: &Fp, d: u32, rng: &mut ChaCha8Rng, out: &mut Vec<Fp>) {
    let n = f.deg() as u32;
    if n == d {
        out.push(f.monic());
        return;
    }
    let p = f.p;
    loop {
        let a = Fp::new(p, (0..n).map(|_| rng.gen_range(0..p)).collect());
        if a.deg() < 1 {
            continue;
        }
        let g = a.gcd(f);
        let cand = if g.deg() > 0 {
            g
        } else if p == 2 {
            let mut t = a.clone();
            let mut sq = a.clone();
            for _ in 1..d {
                sq = sq.mul(&sq).rem(f);
                t = t.add(&sq);
            }
            t.gcd(f)
        } else {
            let e = (BigUint::from(p).pow(d) - 1u32) / 2u32;
            a.powmod(&e, f).sub(&Fp::one(p)).gcd(f)
        };
        if cand.deg() > 0 && cand.deg() < n as i64 {
            let other = f.div(&cand);
            equal_degree(&cand, d, rng, out);
            equal_degree(&other, d, rng, out);
            return;
        }
    }
}

/// Full factorization into monic irreducibles with multiplicities, sorted by (degree, coefficients).
pub fn factor(f: &Fp, seed: u64) -> Vec<(Fp, u32)> {
    assert!(f.deg() >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ f.p);
    let mut out = Vec::new();
    for (sf, mult) in square_free(f) {
        for (g, d) in distinct_degree(&sf) {
            let mut pieces = Vec::new();
            equal_degree(&g, d, &mut rng, &mut pieces);
            for piece in pieces {
                out.push((piece, mult));
            }
        }
    }
    out.sort_by(|a, b| (a.0.deg(), &a.0.c, a.1).cmp(&(b.0.deg(), &b.0.c, b.1)));
    out
}

/// Some monic irreducible polynomial of the given degree, found by deterministic search.
pub fn irreducible_of_degree(p: u64, d: u32) -> Fp {
    assert!(d >= 1);
    if d == 1 {
        return Fp::x(p);
    }
    let mut idx: u64 = 0;
    loop {
        let mut c = Vec::with_capacity(d as usize + 1);
        let mut t = idx;
        for _ in 0..d {
            c.push(t % p);
            t /= p;
        }
        c.push(1);
        let f = Fp::new(p, c);
        if f.c[0] != 0 {
            let fac = factor(&f, 0);
            if fac.len() == 1 && fac[0].1 == 1 {
                return f;
            }
        }
        idx += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expand(fac: &[(Fp, u32)], p: u64) -> Fp {
        let mut acc = Fp::one(p);
        for (g, m) in fac {
            for _ in 0..*m {
                acc = acc.mul(g);
            }
        }
        acc
    }

    #[test]
    fn factors_multiply_back() {
        for p in [2u64, 3, 5, 7, 11, 13, 101] {
            for seed in 0..40u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let deg = rng.gen_range(1..8);
                let mut c: Vec<u64> = (0..deg).map(|_| rng.gen_range(0..p)).collect();
                c.push(1);
                let f = Fp::new(p, c);
                let fac = factor(&f, 7);
                assert_eq!(expand(&fac, p), f);
                for (g, _) in &fac {
                    // irreducible: no roots for degree 2,3 and monic
                    assert_eq!(*g.c.last().unwrap(), 1);
                    if g.deg() <= 3 && g.deg() >= 2 {
                        assert!((0..p).all(|x| g.eval(x) != 0));
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_splitting() {
        let f = Fp::from_ints(5, &[1, 0, 1]);
        let fac = factor(&f, 0);
        assert_eq!(fac.len(), 2);
        let f2 = Fp::from_ints(2, &[1, 0, 1]);
        let fac2 = factor(&f2, 0);
        assert_eq!(fac2, vec![(Fp::from_ints(2, &[1, 1]), 2)]);
    }
}
