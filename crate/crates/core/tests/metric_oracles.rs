//! Metrics checked against independent brute-force and exact-arithmetic oracles.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refgame_core::metrics::{jaccard, ols_fit, rlo, rouge_l};

const TOL: f64 = 1e-12;

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TOL * scale.max(a.abs()).max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Every token string of length `0..=max_len` over `alphabet`.
fn all_strings(alphabet: &[&'static str], max_len: usize) -> Vec<Vec<&'static str>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in alphabet {
                let mut s2: Vec<&'static str> = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every subsequence of `s`, by enumerating index subsets.
fn subsequences(s: &[&'static str]) -> Vec<Vec<&'static str>> {
    (0u32..(1 << s.len()))
        .map(|mask| (0..s.len()).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect())
        .collect()
}

/// LCS length as the longest string that is a subsequence of both, found by enumeration.
fn brute_lcs(
    a: &[&'static str],
    b: &[&'static str],
    subs: &std::collections::HashMap<Vec<&'static str>, std::collections::HashSet<Vec<&'static str>>>,
) -> usize {
    let sa = &subs[a];
    let sb = &subs[b];
    sa.iter().filter(|s| sb.contains(*s)).map(Vec::len).max().unwrap_or(0)
}

/// Multiset intersection by repeatedly striking matched tokens.
fn brute_multiset_intersection(prev: &[&str], curr: &[&str]) -> usize {
    let mut pool: Vec<&str> = prev.to_vec();
    let mut n = 0;
    for t in curr {
        if let Some(i) = pool.iter().position(|p| p == t) {
            pool.swap_remove(i);
            n += 1;
        }
    }
    n
}

fn brute_jaccard(a: &[&str], b: &[&str]) -> Option<f64> {
    let mut union: Vec<&str> = Vec::new();
    for t in a.iter().chain(b) {
        if !union.contains(t) {
            union.push(t);
        }
    }
    if union.is_empty() {
        return None;
    }
    let inter = union.iter().filter(|t| a.contains(t) && b.contains(t)).count();
    Some(inter as f64 / union.len() as f64)
}

fn check_pair(
    a: &[&'static str],
    b: &[&'static str],
    subs: &std::collections::HashMap<Vec<&'static str>, std::collections::HashSet<Vec<&'static str>>>,
) {
    let (sa, sb) = (a.join(" "), b.join(" "));
    let lcs = brute_lcs(a, b, subs);
    let score = rouge_l::<f64>(&sa, &sb);
    if lcs == 0 {
        assert_eq!(score.f1, 0.0, "{sa:?} {sb:?}");
    } else {
        let p = lcs as f64 / b.len() as f64;
        let r = lcs as f64 / a.len() as f64;
        let f = 2.0 * p * r / (p + r);
        assert!(close(score.precision, p, 0.0), "{sa:?} {sb:?}");
        assert!(close(score.recall, r, 0.0), "{sa:?} {sb:?}");
        assert!(close(score.f1, f, 0.0), "{sa:?} {sb:?}");
    }
    match rlo::<f64>(&sa, &sb) {
        Ok(v) => {
            let expected = brute_multiset_intersection(a, b) as f64 / b.len() as f64;
            assert!(close(v, expected, 0.0), "rlo {sa:?} {sb:?}");
        }
        Err(_) => assert!(b.is_empty()),
    }
    match (jaccard::<f64>(&sa, &sb), brute_jaccard(a, b)) {
        (Ok(v), Some(e)) => assert!(close(v, e, 0.0), "jaccard {sa:?} {sb:?}"),
        (Err(_), None) => {}
        (got, want) => panic!("jaccard {sa:?} {sb:?}: {got:?} vs {want:?}"),
    }
}

fn subsequence_index(
    strings: &[Vec<&'static str>],
) -> std::collections::HashMap<Vec<&'static str>, std::collections::HashSet<Vec<&'static str>>> {
    strings.iter().map(|s| (s.clone(), subsequences(s).into_iter().collect())).collect()
}

#[test]
fn overlap_metrics_match_brute_force_on_all_short_ternary_strings() {
    let strings = all_strings(&["red", "tan", "oval"], 4);
    let subs = subsequence_index(&strings);
    for a in &strings {
        for b in &strings {
            check_pair(a, b, &subs);
        }
    }
}

/// Subsequence sets as bitsets over the index of `strings`.
fn subsequence_bitsets(strings: &[Vec<&'static str>]) -> Vec<Vec<u64>> {
    let index: std::collections::HashMap<&Vec<&'static str>, usize> =
        strings.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let words = strings.len().div_ceil(64);
    strings
        .iter()
        .map(|s| {
            let mut bits = vec![0u64; words];
            for sub in subsequences(s) {
                let i = index[&sub];
                bits[i / 64] |= 1 << (i % 64);
            }
            bits
        })
        .collect()
}

#[test]
fn overlap_metrics_match_brute_force_on_all_binary_strings_up_to_8_tokens() {
    let strings = all_strings(&["red", "tan"], 8);
    let bits = subsequence_bitsets(&strings);
    let words = bits[0].len();
    let mut by_len = vec![vec![0u64; words]; 9];
    for (i, s) in strings.iter().enumerate() {
        by_len[s.len()][i / 64] |= 1 << (i % 64);
    }
    // common subsequences of a and b = bits[a] & bits[b]; LCS = longest length present
    let lcs = |a: usize, b: usize| {
        (0..=8)
            .rev()
            .find(|&l| (0..words).any(|w| bits[a][w] & bits[b][w] & by_len[l][w] != 0))
            .unwrap()
    };
    let joined: Vec<String> = strings.iter().map(|s| s.join(" ")).collect();
    for (ia, a) in strings.iter().enumerate() {
        for (ib, b) in strings.iter().enumerate() {
            let l = lcs(ia, ib);
            let score = rouge_l::<f64>(&joined[ia], &joined[ib]);
            if l == 0 {
                assert_eq!(score.f1, 0.0);
            } else {
                let p = l as f64 / b.len() as f64;
                let r = l as f64 / a.len() as f64;
                assert!(close(score.f1, 2.0 * p * r / (p + r), 0.0), "{a:?} {b:?}");
                assert!(close(score.precision, p, 0.0) && close(score.recall, r, 0.0));
            }
            if !b.is_empty() {
                let expected = brute_multiset_intersection(a, b) as f64 / b.len() as f64;
                assert!(close(rlo::<f64>(&joined[ia], &joined[ib]).unwrap(), expected, 0.0));
            }
            if let Some(e) = brute_jaccard(a, b) {
                assert!(close(jaccard::<f64>(&joined[ia], &joined[ib]).unwrap(), e, 0.0));
            }
        }
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Exact normal-equation solution for slope and intercept.
fn exact_ols(points: &[(f64, f64)]) -> (BigRational, BigRational) {
    let n = BigRational::from_integer(BigInt::from(points.len()));
    let (mut sx, mut sy, mut sxx, mut sxy) = (
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
    );
    for &(x, y) in points {
        let (x, y) = (rat(x), rat(y));
        sx += &x;
        sy += &y;
        sxx += &x * &x;
        sxy += &x * &y;
    }
    let denom = &n * &sxx - &sx * &sx;
    let slope = (&n * &sxy - &sx * &sy) / &denom;
    let intercept = (&sy - &slope * &sx) / &n;
    (slope, intercept)
}

#[test]
fn ols_matches_exact_normal_equations_on_10k_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    for case in 0..10_000 {
        let n = rng.random_range(3..=16);
        let points: Vec<(f64, f64)> = loop {
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let x = if case % 2 == 0 {
                        rng.random_range(1..=4) as f64
                    } else {
                        rng.random_range(-50.0..50.0)
                    };
                    (x, rng.random_range(-500.0..500.0))
                })
                .collect();
            if pts.iter().any(|p| p.0 != pts[0].0) {
                break pts;
            }
        };
        let fit = ols_fit(&points).unwrap();
        let (slope, intercept) = exact_ols(&points);
        let (es, ei) = (slope.to_f64().unwrap(), intercept.to_f64().unwrap());
        // cancellation scale: a slope near zero is judged against sd(y)/sd(x)
        let mean = |f: fn(&(f64, f64)) -> f64| points.iter().map(f).sum::<f64>() / n as f64;
        let (mx, my) = (mean(|p| p.0), mean(|p| p.1));
        let sd = |f: fn(&(f64, f64)) -> f64, m: f64| (points.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>()).sqrt();
        let slope_scale = sd(|p| p.1, my) / sd(|p| p.0, mx);
        let intercept_scale = my.abs() + slope_scale * mx.abs();
        assert!(close(fit.slope, es, slope_scale), "case {case}: {} vs {es}", fit.slope);
        assert!(close(fit.intercept, ei, intercept_scale), "case {case}: {} vs {ei}", fit.intercept);
        assert!(!(slope.is_negative() && fit.slope > 0.0 && es.abs() > 1e-9));
    }
}

#[test]
fn table_two_default_row_slope() {
    let pts = [(1.0, 92.2), (2.0, 90.1), (3.0, 84.4), (4.0, 76.6)];
    let (slope, _) = exact_ols(&pts);
    let fit = ols_fit(&pts).unwrap();
    assert!((fit.slope - slope.to_f64().unwrap()).abs() < 1e-12);
    assert!((fit.slope - -5.2).abs() <= 0.1);
    assert!(fit.slope < 0.0);
}
