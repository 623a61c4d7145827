mod common;

use common::*;
use num_bigint::BigInt;
use num_complex::Complex64;
use nfcount_core::field::splitting::{PrimeClass, SplittingType};
use nfcount_core::field::zeta::{estimate_dirichlet_density, euler_product_p2, truncated_euler_compare};
use nfcount_core::field::FieldSpec;
use proptest::prelude::*;

fn big(v: &[i64]) -> Vec<BigInt> {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

// Independent oracle: number of (x, y) with x² + y² = m.
fn two_squares(m: i64) -> i64 {
    let mut c = 0;
    let r = (m as f64).sqrt() as i64 + 1;
    for x in -r..=r {
        for y in -r..=r {
            if x * x + y * y == m {
                c += 1;
            }
        }
    }
    c
}

#[test]
fn norm_examples() {
    let qi = qi();
    let q2 = qsqrt2();
    assert_eq!(qi.norm_i64(&[3, 4]), BigInt::from(25));
    assert_eq!(q2.norm_i64(&[1, 1]), BigInt::from(-1));
    for f in all_fields() {
        let mut e = vec![0i64; f.n];
        e[0] = 1;
        assert_eq!(f.norm_i64(&e), BigInt::from(1));
    }
}

#[test]
fn mult_examples() {
    let qi = qi();
    assert_eq!(qi.mult(&big(&[0, 1]), &big(&[0, 1])), big(&[-1, 0]));
    assert_eq!(qi.mult(&big(&[2, 1]), &big(&[2, -1])), big(&[5, 0]));
    let c = cubic();
    let x = big(&[3, -2, 7]);
    assert_eq!(c.mult(&x, &big(&[1, 0, 0])), x);
}

#[test]
fn splitting_examples() {
    let qi = qi();
    assert_eq!(qi.splitting_type(5).unwrap(), SplittingType::new(vec![(1, 1), (1, 1)]));
    assert_eq!(qi.splitting_type(2).unwrap(), SplittingType::new(vec![(2, 1)]));
    assert_eq!(qi.splitting_type(3).unwrap(), SplittingType::new(vec![(1, 2)]));
    assert_eq!(qi.prime_class(2).unwrap(), PrimeClass::P0);
    assert_eq!(qi.prime_class(5).unwrap(), PrimeClass::P1);
    assert_eq!(qi.prime_class(3).unwrap(), PrimeClass::P2);
    // cubic: t³−t−1 ≡ (t−2)(t²+2t+3) mod 5, ≡ (t−3)(t−10)² mod 23, no root mod 2
    let c = cubic();
    assert_eq!(c.splitting_type(23).unwrap(), SplittingType::new(vec![(1, 1), (2, 1)]));
    assert_eq!(c.splitting_type(5).unwrap(), SplittingType::new(vec![(1, 1), (1, 2)]));
    assert_eq!(c.splitting_type(2).unwrap(), SplittingType::new(vec![(1, 3)]));
    // roots mod p count the degree-one factors at unramified primes
    for p in nfcount_core::arith::primes::sieve_primes(400) {
        if p == 23 {
            continue;
        }
        let roots = (0..p as i128).filter(|&t| (t * t * t - t - 1).rem_euclid(p as i128) == 0).count();
        let ones = c.splitting_type(p).unwrap().0.iter().filter(|&&(_, f)| f == 1).count();
        assert_eq!(roots, ones, "p = {p}");
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 59, 101] {
        for f in all_fields() {
            assert_eq!(f.splitting_type(p).unwrap().sum_ef(), f.n as u32);
        }
    }
}

#[test]
fn missing_override_is_reported() {
    let mut j = qi().json.clone();
    j.index_primes = vec![2];
    let f = FieldSpec::from_json(j.clone()).unwrap();
    assert!(matches!(f.splitting_type(2), Err(nfcount_core::Error::MissingSplittingData(2))));
    assert!(f.r_k(4).is_err());
    j.splitting_overrides.insert("2".into(), vec![[2, 1]]);
    let f = FieldSpec::from_json(j).unwrap();
    assert_eq!(f.r_k(4).unwrap(), 1);
}

#[test]
fn validation_rejects_bad_data() {
    let mut j = qi().json.clone();
    j.discriminant = -3;
    assert!(FieldSpec::from_json(j).is_err());
    let mut j = qi().json.clone();
    j.signature = [2, 0];
    assert!(FieldSpec::from_json(j).is_err());
    let mut j = qi().json.clone();
    j.mult_tensor[1][1] = vec![1, 0];
    assert!(FieldSpec::from_json(j).is_err());
    let mut j = qi().json.clone();
    j.degree = 1;
    assert!(FieldSpec::from_json(j).is_err());
}

#[test]
fn r_k_examples() {
    let qi = qi();
    assert_eq!(qi.r_k(5).unwrap(), 2);
    assert_eq!(qi.r_k(25).unwrap(), 3);
    for f in all_fields() {
        assert_eq!(f.r_k(1).unwrap(), 1);
    }
}

#[test]
fn r_k_gaussian_matches_two_squares() {
    let qi = qi();
    let table = qi.r_k_table(2000).unwrap();
    for m in 1..=2000i64 {
        assert_eq!(table[m as usize] as i64 * 4, two_squares(m), "m = {m}");
        if m <= 300 {
            assert_eq!(qi.r_k(m as u64).unwrap(), table[m as usize]);
        }
    }
}

#[test]
fn r_k_multiplicative() {
    for f in all_fields() {
        let t = f.r_k_table(10_000).unwrap();
        for a in 1..100usize {
            for b in 1..100usize {
                if num_integer::gcd(a, b) == 1 {
                    assert_eq!(t[a * b], t[a] * t[b]);
                }
            }
        }
    }
}

#[test]
fn r_k_prime_power_bounds() {
    for f in all_fields() {
        for p in nfcount_core::arith::primes::sieve_primes(1000) {
            let st = f.splitting_type(p).unwrap();
            let ones = st.0.iter().filter(|&&(_, d)| d == 1).count() as u64;
            let mut pk = 1u64;
            for k in 1..=6u32 {
                pk *= p;
                let r = nfcount_core::field::zeta::r_k_prime_power(&st.residue_degrees(), k);
                assert!(r <= (k as u64 + 1).pow(f.n as u32));
                if k == 1 {
                    assert_eq!(r, ones);
                    assert_eq!(f.r_k(p).unwrap(), ones);
                }
                if pk < 1 << 40 && k <= 2 {
                    assert_eq!(f.r_k(pk).unwrap(), r);
                }
            }
        }
    }
}

#[test]
fn euler_product_examples() {
    let qi = qi();
    let e = euler_product_p2(&qi, 10, None).unwrap();
    assert!((e.product - 1.75).abs() < 1e-12);
    let e = euler_product_p2(&qi, 1, None).unwrap();
    assert_eq!(e.product, 1.0);
    let e = euler_product_p2(&qi, 1_000_000, None).unwrap();
    assert!(e.ratio >= 0.5 && e.ratio <= 2.0, "ratio {}", e.ratio);
}

#[test]
fn dirichlet_density_examples() {
    let qi = qi();
    let d = estimate_dirichlet_density(&qi, 2, None).unwrap();
    assert!(d == 0.0 || d == 1.0);
    // frozen against an independent sympy prime sweep (p ≡ 1 mod 4, roots of t³−t−1 mod p)
    let d = estimate_dirichlet_density(&qi, 100_000, None).unwrap();
    assert!((d - 0.3457375885689763).abs() < 1e-12, "Q(i) estimate {d}");
    let c = cubic();
    let d = estimate_dirichlet_density(&c, 100_000, None).unwrap();
    assert!((d - 0.48424635195722804).abs() < 1e-12, "cubic estimate {d}");
    // the estimator drifts upward towards the true densities 1/2 and 2/3
    let d_lo = estimate_dirichlet_density(&c, 1_000, None).unwrap();
    assert!(d_lo < d && d < 2.0 / 3.0);
}

#[test]
fn truncated_euler_examples() {
    let qi = qi();
    let ind = |p: u64, _k: u32| if qi.prime_class(p).unwrap() == PrimeClass::P2 { 1.0 } else { 0.0 };
    let (a, b) = truncated_euler_compare(&ind, 1.0, 1000, Complex64::new(0.0, 0.0), 1.0).unwrap();
    assert_eq!(a, b);
    let (a, b) = truncated_euler_compare(&ind, 1.0, 1000, Complex64::new(1e-6, 0.0), 1.0).unwrap();
    assert!((a - b).norm() <= 1e-3);
    let pw = |_p: u64, k: u32| 2f64.powi(k as i32);
    let (a, b) = truncated_euler_compare(&pw, 2.0, 100, Complex64::new(1e-4, 0.0), 1.0).unwrap();
    assert!((a - b).norm() <= 1e-1);
    assert!(truncated_euler_compare(&pw, 2.0, 100, Complex64::new(0.5, 0.0), 1.0).is_err());
}

proptest! {
    #[test]
    fn norm_is_multiplicative(a in prop::collection::vec(-30i64..30, 3), b in prop::collection::vec(-30i64..30, 3)) {
        for f in all_fields() {
            let x = big(&a[..f.n]);
            let y = big(&b[..f.n]);
            let z = f.mult(&x, &y);
            prop_assert_eq!(f.norm(&z), f.norm(&x) * f.norm(&y));
            let xi: Vec<i128> = a[..f.n].iter().map(|&v| v as i128).collect();
            prop_assert_eq!(BigInt::from(f.norm_i128(&xi).unwrap()), f.norm(&x));
        }
    }

    #[test]
    fn multiplication_commutes_and_associates(a in prop::collection::vec(-9i64..9, 3), b in prop::collection::vec(-9i64..9, 3), c in prop::collection::vec(-9i64..9, 3)) {
        for f in all_fields() {
            let (x, y, z) = (big(&a[..f.n]), big(&b[..f.n]), big(&c[..f.n]));
            prop_assert_eq!(f.mult(&x, &y), f.mult(&y, &x));
            prop_assert_eq!(f.mult(&f.mult(&x, &y), &z), f.mult(&x, &f.mult(&y, &z)));
        }
    }
}
