mod common;

use common::*;
use nfcount_core::local_global::*;
use nfcount_core::representation::ProblemConfig;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use proptest::prelude::*;

fn r(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn config(name: &str) -> ProblemConfig {
    ProblemConfig::from_path(&data_dir().join(name)).unwrap()
}

fn inline(json: &str) -> ProblemConfig {
    ProblemConfig::from_json_str(json, &data_dir()).unwrap()
}

fn dq(forms: Vec<Vec<i64>>, p: u64, c: Vec<u32>) -> DivisorDensityQuery {
    DivisorDensityQuery { forms, p, c, modulus: 1, a: vec![] }
}

/// Three Gaussian fields on (u, v, u+v) over the triangle.
fn three_forms() -> ProblemConfig {
    inline(
        r#"{"fields":[{"field":"qi.json"},{"field":"qi.json"},{"field":"qsqrt2.json"}],
            "forms":[[1,0],[0,1],[1,1]],
            "region":{"kind":"polytope","halfspaces":[{"a":[-1,0],"c":0},{"a":[0,-1],"c":0},{"a":[1,1],"c":1}]}}"#,
    )
}

#[test]
fn divisor_density_examples() {
    let b = 1 << 24;
    assert_eq!(divisor_density(&dq(vec![vec![1, 0]], 5, vec![0]), b).unwrap(), BigRational::one());
    assert_eq!(divisor_density(&dq(vec![vec![1, 0], vec![0, 1]], 5, vec![1, 1]), b).unwrap(), r(1, 25));
    assert_eq!(divisor_density(&dq(vec![vec![1]], 7, vec![3]), b).unwrap(), r(1, 343));
    let constrained = DivisorDensityQuery { forms: vec![vec![1, 0]], p: 2, c: vec![2], modulus: 4, a: vec![1, 0] };
    assert_eq!(divisor_density(&constrained, b).unwrap(), r(0, 1));
}

#[test]
fn divisor_density_cases_exhaustive() {
    let forms = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
    for p in [5u64, 7, 11] {
        for c0 in 0..=3u32 {
            for c1 in 0..=3u32 {
                for c2 in 0..=3u32 {
                    let c = vec![c0, c1, c2];
                    let a = divisor_density(&dq(forms.clone(), p, c.clone()), 1 << 24).unwrap();
                    assert_eq!(a, divisor_density_lattice(&forms, p, &c));
                    let nz = c.iter().filter(|&&x| x > 0).count();
                    let mx = *c.iter().max().unwrap();
                    match nz {
                        0 => assert_eq!(a, BigRational::one()),
                        1 => assert_eq!(a, BigRational::new(1.into(), BigInt::from(p).pow(mx))),
                        _ => {
                            let mut best = 0;
                            for i in 0..3 {
                                for j in 0..3 {
                                    if i != j {
                                        best = best.max(c[i] + c[j]);
                                    }
                                }
                            }
                            assert!(a <= BigRational::new(1.into(), BigInt::from(p).pow(best)), "p={p} c={c:?}");
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn lattice_density_matches_enumeration(
        forms in proptest::collection::vec(proptest::collection::vec(-4i64..5, 2), 1..4),
        pi in 0usize..3,
        c in proptest::collection::vec(0u32..3, 3),
    ) {
        let p = [2u64, 3, 5][pi];
        let c = c[..forms.len()].to_vec();
        let brute = divisor_density(&dq(forms.clone(), p, c.clone()), 1 << 24).unwrap();
        prop_assert_eq!(brute, divisor_density_lattice(&forms, p, &c));
    }
}

#[test]
fn max_level_counts() {
    for r in 1..=4u32 {
        for j in 0..=20u32 {
            let mut brute = 0u64;
            let total = (j as u64 + 1).pow(r);
            for code in 0..total {
                let mut c = code;
                let mut mx = 0;
                for _ in 0..r {
                    mx = mx.max(c % (j as u64 + 1));
                    c /= j as u64 + 1;
                }
                if mx == j as u64 {
                    brute += 1;
                }
            }
            assert_eq!(max_level_count(r, j), brute);
            assert!(brute <= r as u64 * (j as u64 + 1).pow(r - 1));
            // the sharper r·J^{r−1} fails once a zero coordinate is allowed
            if r >= 2 && j >= 1 {
                assert!(brute > r as u64 * (j as u64).pow(r - 1));
            }
        }
    }
}

#[test]
fn beta_p_single_form_is_one() {
    let c = config("config6.json");
    for p in [2u64, 3, 5, 7, 13] {
        let b = beta_p(&c, p, None).unwrap();
        assert_eq!(b.exact, BigRational::one(), "p={p}");
        assert!(b.stabilized);
    }
    let c7 = config("config7.json");
    for p in [2u64, 3, 5] {
        assert_eq!(beta_p(&c7, p, None).unwrap().exact, BigRational::one());
    }
}

/// β_2(m) for config 8 by direct enumeration of u and of x.
fn beta2_direct(m: u32) -> BigRational {
    let q = 1i64 << m;
    let mut rho = vec![0i64; q as usize];
    for x in (1..q).step_by(4) {
        for y in (0..q).step_by(4) {
            rho[((x * x + y * y) % q) as usize] += 1;
        }
    }
    let mut acc = 0i64;
    for u in (1..q).step_by(4) {
        for _v in (0..q).step_by(4) {
            acc += rho[u as usize];
        }
    }
    BigRational::new(acc.into(), BigInt::from(q).pow(2) * BigInt::from(q))
}

#[test]
fn beta_two_with_modulus() {
    let c = config("config8.json");
    assert_eq!(hensel_threshold(&c, 2), 8);
    let b = beta_p(&c, 2, None).unwrap();
    assert!(b.stabilized);
    assert_eq!(b.exact, r(1, 64));
    assert_eq!(beta2_direct(6), r(1, 64));
    for m in 3..=8 {
        assert_eq!(beta_level_by_tables(&c, 2, m, 1 << 24).unwrap(), beta2_direct(m), "m={m}");
    }
    // odd primes are untouched by the congruence
    assert_eq!(beta_p(&c, 3, None).unwrap().exact, BigRational::one());
}

#[test]
fn valuation_classes_match_tables() {
    let c = three_forms();
    for p in [3u64, 5, 7] {
        for m in 1..=3 {
            assert_eq!(beta_level_by_valuations(&c, p, m).unwrap(), beta_level_by_tables(&c, p, m, 1 << 24).unwrap(), "p={p} m={m}");
        }
    }
    assert!(beta_level_by_valuations(&c, 2, 2).is_err());
}

#[test]
fn non_trivial_local_factors() {
    let c = three_forms();
    let mut entries = vec![];
    for p in nfcount_core::arith::primes::sieve_primes(100) {
        let b = beta_p_report(&c, p, Some(12)).unwrap();
        assert!(b.value_f64 > 0.0, "p={p}");
        entries.push(BetaEntry { p, value: b.value.clone(), value_f64: b.value_f64, m: b.m, stabilized: b.stabilized, backend: b.backend.clone() });
    }
    let (l_prime, fitted) = fit_tail(&entries, 1);
    assert!(l_prime < 100);
    for e in entries.iter().filter(|e| e.p > l_prime) {
        assert!((e.value_f64 - 1.0).abs() <= fitted / (e.p * e.p) as f64 + 1e-15);
    }
    assert!(fitted.is_finite());
}

#[test]
fn stabilized_levels_stay_constant() {
    for c in [config("config6.json"), config("config7.json"), config("config8.json")] {
        for p in [2u64, 3, 5] {
            let b = beta_p(&c, p, None).unwrap();
            if p == 2 || !c.fields.iter().any(|f| f.disc % p as i128 == 0) {
                let next = beta_level_by_tables(&c, p, b.m + 1, 1 << 24).unwrap();
                assert_eq!(next, b.exact, "p={p}");
            }
        }
    }
}

#[test]
fn not_stabilized_reports_defect() {
    let c = three_forms();
    match beta_p(&c, 3, Some(2)) {
        Err(nfcount_core::Error::NotStabilized { level, .. }) => assert_eq!(level, 2),
        other => panic!("expected non-stabilization, got {other:?}"),
    }
}

#[test]
fn beta_infinity_examples() {
    let c6 = config("config6.json");
    let b = beta_infinity(&c6, 1 << 14, 1).unwrap();
    assert!((b.value - std::f64::consts::PI / 4.0).abs() < 0.01 * std::f64::consts::PI / 4.0);
    let neg = inline(r#"{"fields":[{"field":"qi.json","cone":{"kind":"full_domain","sector":4}}],"forms":[[1,0]],"region":{"kind":"box","lo":[-1,0],"hi":[0,1]}}"#);
    assert_eq!(beta_infinity(&neg, 1 << 12, 1).unwrap().value, 0.0);
    let two = inline(
        r#"{"fields":[{"field":"qi.json","cone":{"kind":"full_domain","sector":4}},{"field":"qi.json","cone":{"kind":"full_domain","sector":4}}],
            "forms":[[1,0],[0,1]],"region":{"kind":"box","lo":[0,0],"hi":[1,1]}}"#,
    );
    let t = (std::f64::consts::PI / 4.0).powi(2);
    assert!((beta_infinity(&two, 1 << 14, 1).unwrap().value - t).abs() < 0.02 * t);
    let c7 = config("config7.json");
    let b7 = beta_infinity(&c7, 1 << 16, 3).unwrap();
    assert!((b7.volumes["++"] - 0.5).abs() < 0.01);
}

#[test]
fn verify_small_scale() {
    let c6 = config("config6.json");
    let r = verify_nb(&c6, 300, Some(50), 1 << 14, 0).unwrap();
    assert!((r.euler_product - 1.0).abs() < 1e-12);
    assert!(r.rel_error < 0.05, "{r:?}");
    assert_eq!(r.tail_estimate, 0.0);
}
