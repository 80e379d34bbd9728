//! Exact linear assignment via shortest augmenting paths with dual potentials
//! (the O(d³) Hungarian / Jonker-Volgenant family).

use crate::linalg::Mat;

/// Solves `min_σ Σ_i cost[i, σ(i)]` over permutations `σ`.
///
/// Returns `assign` with `assign[row] = column`. Rows are inserted in
/// increasing order and the first column attaining a minimum wins, so ties are
/// resolved deterministically for a given input. The matrix must be square
/// and finite.
pub fn min_cost_assignment(cost: &Mat) -> Vec<usize> {
    assert!(cost.is_square(), "assignment requires a square cost matrix");
    let n = cost.rows();
    if n == 0 {
        return Vec::new();
    }
    let a = |i: usize, j: usize| cost[(i - 1, j - 1)];

    // 1-based bookkeeping; index 0 is the virtual column used to start each
    // augmentation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        row_of_col[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = a(i0, j) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        // Flip the alternating path back to the virtual column.
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[row_of_col[j] - 1] = j - 1;
    }
    assign
}

/// Solves `max_σ Σ_i score[i, σ(i)]`.
pub fn max_score_assignment(score: &Mat) -> Vec<usize> {
    min_cost_assignment(&score.scale(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_three_by_three() {
        let cost = Mat::from_rows(&[[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]]);
        let assign = min_cost_assignment(&cost);
        let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn result_is_a_permutation() {
        let cost = Mat::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let mut assign = min_cost_assignment(&cost);
        assign.sort_unstable();
        assert_eq!(assign, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn all_ties_are_deterministic() {
        let cost = Mat::zeros(4, 4);
        assert_eq!(min_cost_assignment(&cost), min_cost_assignment(&cost));
    }
}
