//! Minimum-cost perfect assignment on a square cost matrix.

use crate::error::{Error, Result};

/// Solve the linear assignment problem for a row-major `n × n` cost matrix.
/// Returns `assign` with row `i` matched to column `assign[i]`.
///
/// Shortest augmenting paths with dual potentials, `O(n³)`.
pub fn hungarian(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::SizeMismatch {
            left: cost.len(),
            right: n * n,
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("assignment costs must be finite".into()));
    }
    // 1-based indexing with column 0 as the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    Ok(assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use proptest::prelude::*;

    fn total(cost: &[f64], n: usize, assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
    }

    fn brute(cost: &[f64], n: usize) -> f64 {
        (0..n)
            .permutations(n)
            .map(|p| total(cost, n, &p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn small_hand_case() {
        // Rows prefer the anti-diagonal.
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&cost, 3).unwrap();
        assert_eq!(total(&cost, 3, &a), 5.0);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn empty_and_single() {
        assert!(hungarian(&[], 0).unwrap().is_empty());
        assert_eq!(hungarian(&[7.0], 1).unwrap(), vec![0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[1.0, 2.0], 2).is_err());
        assert!(hungarian(&[f64::NAN], 1).is_err());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(n in 1usize..=6, seed in prop::collection::vec(0.0f64..10.0, 36)) {
            let cost: Vec<f64> = seed[..n * n].to_vec();
            let a = hungarian(&cost, n).unwrap();
            let mut seen = a.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            prop_assert!((total(&cost, n, &a) - brute(&cost, n)).abs() < 1e-9);
        }
    }
}
