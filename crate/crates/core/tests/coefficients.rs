use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use proptest::prelude::*;
use rslab::coefficients::{
    audit_tau, build_tau_table, series_constant_b_upto, CoefficientTable, TauTable,
};

fn tau_1e5() -> &'static TauTable {
    static T: OnceLock<TauTable> = OnceLock::new();
    T.get_or_init(|| build_tau_table(100_000).unwrap())
}

fn table_1e5() -> &'static CoefficientTable {
    static T: OnceLock<CoefficientTable> = OnceLock::new();
    T.get_or_init(|| CoefficientTable::from_tau(tau_1e5()))
}

/// q * prod_{m <= n} (1 - q^m)^24 expanded term by term in big integers.
fn naive_tau(n: usize) -> Vec<BigInt> {
    let mut series = vec![BigInt::from(0); n + 1];
    series[0] = BigInt::from(1);
    for m in 1..=n {
        for _ in 0..24 {
            for i in (m..=n).rev() {
                let sub = series[i - m].clone();
                series[i] -= sub;
            }
        }
    }
    // shift by q
    let mut tau = vec![BigInt::from(0); n + 1];
    tau[1..].clone_from_slice(&series[..n]);
    tau
}

#[test]
fn tau_matches_naive_product_expansion() {
    let n = 300;
    let oracle = naive_tau(n);
    let tau = build_tau_table(n).unwrap();
    for k in 1..=n {
        assert_eq!(BigInt::from(tau.get(k)), oracle[k], "tau({k})");
    }
}

/// Checks |lambda - tau n^{-11/2}| <= 1 ulp(lambda) exactly in integers.
fn within_one_ulp(lambda: f64, tau: i128, n: u64) -> bool {
    if tau == 0 {
        return lambda == 0.0;
    }
    if lambda.signum() != (tau.signum() as f64) {
        return false;
    }
    let bits = lambda.abs().to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    assert!(biased > 0, "subnormal lambda");
    let mant = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
    // |lambda| = mant * 2^e
    let e = biased - 1075;
    let n11 = BigUint::from(n).pow(11);
    let t2 = BigUint::from(tau.unsigned_abs()).pow(2);
    // (mant -+ 1)^2 2^{2e} n^11 <= tau^2 <=> (mant -+ 1)^2 n^11 <= tau^2 2^{-2e}
    let scale = |v: BigUint| -> (BigUint, BigUint) {
        if e <= 0 {
            (v, t2.clone() << ((-2 * e) as usize))
        } else {
            (v << ((2 * e) as usize), t2.clone())
        }
    };
    let lo = BigUint::from(mant - 1).pow(2) * &n11;
    let hi = BigUint::from(mant + 1).pow(2) * &n11;
    let (lo, rhs_lo) = scale(lo);
    let (hi, rhs_hi) = scale(hi);
    lo <= rhs_lo && rhs_hi <= hi
}

#[test]
fn lambda_within_one_ulp_of_exact_quotient() {
    let table = table_1e5();
    let tau = tau_1e5();
    let dense = 1..=3_000usize;
    let sparse = (3_001..=100_000).step_by(97);
    for n in dense.chain(sparse) {
        assert!(
            within_one_ulp(table.lambda(n), tau.get(n), n as u64),
            "lambda({n}) = {}",
            table.lambda(n)
        );
    }
}

#[test]
fn audit_at_ten_thousand_is_clean() {
    let audit = audit_tau(tau_1e5(), 10_000);
    assert_eq!(audit.violations(), 0);
    assert!(audit.recursion_checked >= 30);
}

#[test]
fn deligne_bound_at_primes() {
    let table = table_1e5();
    let mut composite = vec![false; table.limit() + 1];
    for p in 2..=table.limit() {
        if composite[p] {
            continue;
        }
        assert!(table.lambda(p).abs() <= 2.0, "lambda({p})");
        let mut j = p * p;
        while j <= table.limit() {
            composite[j] = true;
            j += p;
        }
    }
}

#[test]
fn small_convolution_coefficients() {
    let table = table_1e5();
    assert_eq!(table.c(1), 1.0);
    let l2 = 24.0 / 2f64.powf(5.5);
    assert!((table.c(2) - l2 * l2).abs() <= 1e-15);
    let l4 = tau_1e5().get(4) as f64 / 4f64.powf(5.5);
    assert!((table.c(4) - (l4 * l4 + 1.0)).abs() <= 1e-14);
}

#[test]
fn series_constant_partial_sums() {
    let table = table_1e5();
    let b3 = series_constant_b_upto(table, 1_000).unwrap();
    let b4 = series_constant_b_upto(table, 10_000).unwrap();
    let b5 = series_constant_b_upto(table, 100_000).unwrap();
    assert!(b3.value <= b4.value && b4.value <= b5.value);
    assert!((b5.value - b4.value).abs() <= b4.tail_bound);
}

#[test]
fn series_constant_stabilizes_at_a_million() {
    let tau = build_tau_table(1_000_000).unwrap();
    let table = CoefficientTable::from_tau(&tau);
    let b5 = series_constant_b_upto(&table, 100_000).unwrap();
    let b6 = series_constant_b_upto(&table, 1_000_000).unwrap();
    assert!((b6.value - b5.value).abs() <= b5.tail_bound, "{b5:?} {b6:?}");
    // the shorter table is a prefix of this one
    assert_eq!(&table.prefixes()[..=100_000], table_1e5().prefixes());
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn convolution_coefficients_are_multiplicative(
        (m, n) in (1usize..2_000).prop_flat_map(|m| (Just(m), 1..=100_000 / m))
    ) {
        prop_assume!(gcd(m, n) == 1);
        let t = table_1e5();
        let (cm, cn, cmn) = (t.c(m), t.c(n), t.c(m * n));
        prop_assert!((cmn - cm * cn).abs() <= 1e-9 * cm * cn);
    }

    #[test]
    fn c_dominates_lambda_squared(n in 1usize..=100_000) {
        let t = table_1e5();
        prop_assert!(t.c(n) >= t.lambda(n) * t.lambda(n));
        prop_assert!(t.c(n) >= 0.0);
    }

    #[test]
    fn prefix_increments_are_coefficients(n in 1usize..=100_000) {
        let t = table_1e5();
        prop_assert!(t.prefix(n) >= t.prefix(n - 1));
        let err = (t.prefix(n) - t.prefix(n - 1) - t.c(n)).abs();
        prop_assert!(err <= 2f64.powi(-40) * t.prefix(n));
    }

    #[test]
    fn smaller_builds_are_prefixes(limit in 1usize..5_000) {
        let small = build_tau_table(limit).unwrap();
        prop_assert_eq!(small.values(), &tau_1e5().values()[..limit]);
    }
}
