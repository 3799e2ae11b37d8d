//! Dense O(m³) Hungarian algorithm (shortest augmenting paths with potentials).

/// Minimum-cost perfect assignment on a square row-major `m × m` cost matrix.
/// Returns `assignment[row] = col`.
pub fn solve(costs: &[f64], m: usize) -> Vec<usize> {
    assert_eq!(costs.len(), m * m, "cost matrix must be m × m");
    if m == 0 {
        return Vec::new();
    }

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; m + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=m {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = costs[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; m];
    for j in 1..=m {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Total cost of an assignment, summed in ascending order of the chosen entries
/// so that equal multisets of costs give bit-identical totals.
pub fn assignment_cost(costs: &[f64], m: usize, assignment: &[usize]) -> f64 {
    let mut chosen: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| costs[i * m + j]).collect();
    chosen.sort_by(f64::total_cmp);
    chosen.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_optimum() {
        let costs = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve(&costs, 3);
        assert_eq!(a, vec![1, 0, 2]);
        assert_eq!(assignment_cost(&costs, 3, &a), 5.0);
    }

    #[test]
    fn degenerate_sizes() {
        assert!(solve(&[], 0).is_empty());
        assert_eq!(solve(&[7.0], 1), vec![0]);
    }

    #[test]
    fn assignment_is_a_permutation_with_ties() {
        let costs = vec![1.0; 25];
        let mut a = solve(&costs, 5);
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
    }
}
