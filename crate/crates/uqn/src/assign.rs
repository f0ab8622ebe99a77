//! Exact maximum-weight assignment via the O(n³) potentials form of the
//! Hungarian algorithm. Used by the serving-UAV selection step, which is a
//! rectangular assignment problem with a per-subscriber skip option.

/// Minimum-cost perfect assignment of `n` rows onto `m >= n` columns.
/// Returns the matched column per row.
pub fn min_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "need at least as many columns as rows");
    assert!(cost.iter().all(|r| r.len() == m));

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; m + 1];
    // p[j] = row currently matched to column j; index m is a virtual column
    let mut p: Vec<Option<usize>> = vec![None; m + 1];

    for i in 0..n {
        p[m] = Some(i);
        let mut j0 = m;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut way = vec![m; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0].expect("augmenting path visits matched columns");
            let mut delta = f64::INFINITY;
            let mut j1 = m;
            for j in 0..m {
                if !used[j] {
                    let cur = cost[i0][j] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    if let Some(ip) = p[j] {
                        u[ip] += delta;
                    }
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0].is_none() {
                break;
            }
        }
        // flip the alternating path back to the virtual column
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == m {
                break;
            }
        }
    }

    let mut result = vec![usize::MAX; n];
    for (j, &row) in p.iter().enumerate().take(m) {
        if let Some(i) = row {
            result[i] = j;
        }
    }
    result
}

/// Maximum-weight perfect assignment on a square nonnegative matrix.
pub fn max_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    let negated: Vec<Vec<f64>> = weights
        .iter()
        .map(|row| row.iter().map(|w| -w).collect())
        .collect();
    min_assignment(&negated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assignment_value(w: &[Vec<f64>], assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(i, &j)| w[i][j]).sum()
    }

    fn brute_best(w: &[Vec<f64>]) -> f64 {
        let n = w.len();
        let m = w[0].len();
        fn rec(w: &[Vec<f64>], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == w.len() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            for j in 0..w[0].len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[i][j] + rec(w, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        assert!(n <= m);
        rec(w, 0, &mut vec![false; m])
    }

    #[test]
    fn small_known_instance() {
        let w = vec![vec![5.0, 1.0], vec![2.0, 4.0]];
        let a = max_assignment(&w);
        assert_eq!(a, vec![0, 1]);
        assert!((assignment_value(&w, &a) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..300 {
            let n = rng.gen_range(1..=5usize);
            let w: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            let a = max_assignment(&w);
            let mut seen = vec![false; n];
            for &j in &a {
                assert!(!seen[j]);
                seen[j] = true;
            }
            let val = assignment_value(&w, &a);
            let best = brute_best(&w);
            assert!((val - best).abs() < 1e-9, "{val} vs {best}");
        }
    }

    #[test]
    fn rectangular_min_matches_brute() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..200 {
            let n = rng.gen_range(1..=4usize);
            let m = rng.gen_range(n..=6usize);
            let w: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();
            let a = min_assignment(&w);
            let val = assignment_value(&w, &a);
            let neg: Vec<Vec<f64>> = w
                .iter()
                .map(|r| r.iter().map(|x| -x).collect())
                .collect();
            let best = -brute_best(&neg);
            assert!((val - best).abs() < 1e-9);
        }
    }
}
