//! Exact rank of integer matrices by fraction-free (Bareiss) elimination.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// Rank over the rationals of a dense integer matrix given as rows.
///
/// Duplicate and all-zero rows and columns are removed first (neither
/// changes the rank), then Bareiss elimination runs over `BigInt`, so every
/// intermediate division is exact.
pub fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let reduced = dedup_rows(rows);
    if reduced.is_empty() {
        return 0;
    }
    let transposed = transpose(&reduced);
    let reduced = dedup_rows(&transposed);
    if reduced.is_empty() {
        return 0;
    }
    // Eliminate along the shorter dimension.
    let matrix = if reduced.len() > reduced[0].len() {
        transpose(&reduced)
    } else {
        reduced
    };
    bareiss_rank(matrix)
}

fn dedup_rows(rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = rows
        .iter()
        .filter(|r| r.iter().any(|&x| x != 0))
        .cloned()
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn transpose(rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let cols = rows[0].len();
    (0..cols)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect()
}

fn bareiss_rank(rows: Vec<Vec<i64>>) -> usize {
    let mut a: Vec<Vec<BigInt>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(BigInt::from).collect())
        .collect();
    let n_rows = a.len();
    let n_cols = a[0].len();
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    for col in 0..n_cols {
        if rank == n_rows {
            break;
        }
        // Smallest nonzero pivot keeps the intermediate minors short.
        let pivot = (rank..n_rows)
            .filter(|&r| !a[r][col].is_zero())
            .min_by(|&x, &y| a[x][col].abs().cmp(&a[y][col].abs()));
        let Some(p) = pivot else { continue };
        a.swap(rank, p);
        let (head, tail) = a.split_at_mut(rank + 1);
        let pivot_row = &head[rank];
        let pivot_val = pivot_row[col].clone();
        for row in tail.iter_mut() {
            let factor = std::mem::take(&mut row[col]);
            for j in col + 1..n_cols {
                let value = &row[j] * &pivot_val - &factor * &pivot_row[j];
                debug_assert!((&value % &prev).is_zero(), "Bareiss division must be exact");
                row[j] = value / &prev;
            }
        }
        prev = pivot_val;
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_zero() {
        assert_eq!(integer_rank(&[vec![1, 0], vec![0, 1]]), 2);
        assert_eq!(integer_rank(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(integer_rank(&[]), 0);
    }

    #[test]
    fn dependent_rows() {
        let rows = vec![vec![1, 2, 3], vec![2, 4, 6], vec![1, 0, 1], vec![3, 2, 5]];
        assert_eq!(integer_rank(&rows), 2);
    }

    #[test]
    fn column_skipping() {
        // first column all zero after the first pivot
        let rows = vec![vec![2, 4, 1, 0], vec![1, 2, 0, 1], vec![3, 6, 1, 1]];
        assert_eq!(integer_rank(&rows), 2);
    }

    #[test]
    fn large_entries_stay_exact() {
        // Hilbert-like integer matrix with a known full rank
        let n = 8;
        let lcm: i64 = 5_354_228_880; // lcm(1..=22)
        let rows: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| lcm / (i + j + 1) as i64).collect())
            .collect();
        assert_eq!(integer_rank(&rows), n);
    }
}
