use std::sync::OnceLock;

use proptest::prelude::*;
use rslab::quadruples::{
    bound_ratio_scan, count_bruteforce, count_sorted, integer_root, DeltaGrid, PairSums,
};

/// Four nested loops over (N, 2N]^4, written independently of the pair table.
fn four_loops(n: u64, k: u32, delta: f64) -> u64 {
    let r = |v: u64| integer_root(v, k);
    let w = delta * integer_root(n, k);
    let range = || (n + 1)..=(2 * n);
    let mut count = 0;
    for a in range() {
        for b in range() {
            let s = r(a) + r(b);
            for c in range() {
                for d in range() {
                    if (s - (r(c) + r(d))).abs() < w {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

fn sums_512() -> &'static PairSums {
    static S: OnceLock<PairSums> = OnceLock::new();
    S.get_or_init(|| PairSums::sorted(512, 4).unwrap())
}

#[test]
fn one_integer_gives_one_quadruple() {
    for d in [1e-9, 0.5, 3.0] {
        assert_eq!(count_bruteforce(1, 4, d).unwrap().count, 1);
        assert_eq!(count_sorted(1, 4, d).unwrap().count, 1);
    }
}

#[test]
fn sorted_agrees_with_bruteforce_on_the_small_sweep() {
    for n in [4, 8, 16, 32, 64] {
        for d in [1e-6, 1e-3, 1e-1, 1.0] {
            let b = count_bruteforce(n, 4, d).unwrap();
            let s = count_sorted(n, 4, d).unwrap();
            assert_eq!(b.count, s.count, "N = {n}, delta = {d}");
        }
    }
}

#[test]
fn limits_in_delta() {
    for n in [8u64, 16, 64] {
        assert_eq!(count_sorted(n as usize, 4, 2.0).unwrap().count, n.pow(4));
        assert_eq!(count_sorted(n as usize, 4, 1e-12).unwrap().count, 2 * n * n - n);
    }
}

#[test]
fn boundary_distance_is_excluded() {
    // 16^{1/4} = 2 exactly, so the window half-width is exactly 2 delta.
    let n = 16u64;
    let s = |a: u64, b: u64| integer_root(a, 4) + integer_root(b, 4);
    let gap = s(20, 29) - s(17, 31);
    assert!(gap > 0.0);
    let delta = gap / 2.0;
    let at = count_sorted(n as usize, 4, delta).unwrap().count;
    let past = count_sorted(n as usize, 4, f64::from_bits(delta.to_bits() + 1)).unwrap().count;
    assert_eq!(at, four_loops(n, 4, delta));
    assert_eq!(at, count_bruteforce(n as usize, 4, delta).unwrap().count);
    // (20,29,17,31) and its mirror at least, times the orderings inside pairs
    assert!(past >= at + 2, "{at} {past}");
}

#[test]
fn bound_ratio_limit_rows() {
    let ns = [128, 256];
    let big = bound_ratio_scan(&ns, &DeltaGrid::Absolute(vec![2.0, 4.0]), 4).unwrap();
    for r in &big.rows {
        assert!(r.ratio() < 1.0 / r.delta && r.ratio() <= 0.5);
    }
    let tiny = bound_ratio_scan(&ns, &DeltaGrid::Absolute(vec![1e-13]), 4).unwrap();
    for r in &tiny.rows {
        assert!(r.ratio() < 2.0);
    }
}

#[test]
fn count_grows_like_volume_at_1024() {
    let sums = PairSums::sorted(1024, 4).unwrap();
    let es = [-1.5, -1.25, -1.0, -0.75, -0.5];
    let ds: Vec<f64> = es.iter().map(|&e| f64::powf(1024.0, e)).collect();
    let cs: Vec<f64> = ds.iter().map(|&d| sums.count(d).unwrap().count as f64).collect();
    let fit = rslab::moments::exponent_fit(&ds, &cs).unwrap();
    assert!(fit.slope >= 0.8 && fit.slope <= 1.2, "{fit:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn counters_match_four_loops(n in 1u64..=10, k in 2u32..=5, log_d in -6.0f64..0.5) {
        let d = 10f64.powf(log_d);
        let want = four_loops(n, k, d);
        prop_assert_eq!(count_bruteforce(n as usize, k, d).unwrap().count, want);
        prop_assert_eq!(count_sorted(n as usize, k, d).unwrap().count, want);
    }

    #[test]
    fn nested_windows_are_monotone(a in -3.0f64..0.0, b in -3.0f64..0.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s = sums_512();
        let c_lo = s.count(512f64.powf(lo)).unwrap().count;
        let c_hi = s.count(512f64.powf(hi)).unwrap().count;
        prop_assert!(c_lo <= c_hi);
    }

    #[test]
    fn swapping_the_pairs_is_a_symmetry(n in 2u64..=8, k in 2u32..=4, d in 1e-4f64..0.3) {
        // count of (a,b,c,d) with |s(a,b) - s(c,d)| < w equals that of (c,d,a,b)
        let w = d * integer_root(n, k);
        let r = |v: u64| integer_root(v, k);
        let range = || (n + 1)..=(2 * n);
        let (mut fwd, mut rev) = (0u64, 0u64);
        for a in range() {
            for b in range() {
                for c in range() {
                    for e in range() {
                        fwd += ((r(a) + r(b)) - (r(c) + r(e))).abs().lt(&w) as u64;
                        rev += ((r(c) + r(e)) - (r(a) + r(b))).abs().lt(&w) as u64;
                    }
                }
            }
        }
        prop_assert_eq!(fwd, rev);
        prop_assert_eq!(fwd, count_sorted(n as usize, k, d).unwrap().count);
    }
}
