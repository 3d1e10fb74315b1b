//! Exact minimum-cost assignment (Hungarian / shortest augmenting path) and
//! the membership-alignment objective built on it.

use crate::error::{Error, Result};
use crate::model::Membership;

/// Solve the square assignment problem exactly: returns `perm` with
/// `perm[row] = col` minimizing the total cost, and the minimum itself.
/// O(n^3) potentials + shortest augmenting path.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    debug_assert!(cost.iter().all(|row| row.len() == n));

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // assigned_row[col] = row (1-based; 0 = none)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        perm[assigned_row[j] - 1] = j - 1;
        total += cost[assigned_row[j] - 1][j - 1];
    }
    (perm, total)
}

/// Best alignment of `other`'s community labels to `reference`'s:
/// the permutation `perm` (reference community k matched to other community
/// `perm[k]`) minimizing `sum_k |C_ref_k \ C_other_{perm[k]}| / N`, plus that
/// minimum.
pub(crate) fn alignment(reference: &Membership, other: &Membership) -> Result<(Vec<usize>, f64)> {
    if reference.n_nodes() != other.n_nodes() {
        return Err(Error::Dimension(format!(
            "memberships cover {} and {} nodes",
            reference.n_nodes(),
            other.n_nodes()
        )));
    }
    if reference.n_communities() != other.n_communities() {
        return Err(Error::Dimension(format!(
            "memberships have {} and {} communities",
            reference.n_communities(),
            other.n_communities()
        )));
    }
    let k = reference.n_communities();
    let n = reference.n_nodes();
    let mut overlap = vec![vec![0usize; k]; k];
    for i in 0..n {
        overlap[reference.get(i)][other.get(i)] += 1;
    }
    let sizes = reference.community_sizes();
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| (sizes[a] - overlap[a][b]) as f64).collect())
        .collect();
    let (perm, total) = min_cost_assignment(&cost);
    Ok((perm, total / n as f64))
}
