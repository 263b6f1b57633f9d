use crate::error::{Error, Result};
use crate::real::Real;

/// Shortest-augmenting-path assignment for `rows ≤ cols`. Returns the column
/// chosen for every row.
fn solve_rectangular<T: Real>(cost: &[Vec<T>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    let inf = T::infinity();
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
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
    let mut choice = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            choice[owner[j] - 1] = j - 1;
        }
    }
    choice
}

/// Minimum-cost assignment of channels to SUs. `cost[i][j]` is the cost of
/// giving channel `j` to SU `i`. Every channel gets exactly one SU; the
/// result maps channel index to SU index.
///
/// With more SUs than channels some SUs get nothing. With more channels than
/// SUs the channels are handed out in rounds, each round giving every SU at
/// most one of the still-unassigned channels.
pub fn hungarian_min_cost<T: Real>(cost: &[Vec<T>]) -> Result<Vec<usize>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::Empty("cost matrix"));
    }
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::Precondition("cost matrix rows differ in length".into()));
    }
    if let Some(c) = cost.iter().flatten().find(|c| !c.is_finite()) {
        return Err(Error::Precondition(format!("cost entries must be finite, got {c}")));
    }
    let mut owner = vec![usize::MAX; m];
    let mut remaining: Vec<usize> = (0..m).collect();
    while !remaining.is_empty() {
        if remaining.len() <= n {
            // channels as rows
            let sub: Vec<Vec<T>> = remaining
                .iter()
                .map(|&j| (0..n).map(|i| cost[i][j]).collect())
                .collect();
            for (r, su) in solve_rectangular(&sub).into_iter().enumerate() {
                owner[remaining[r]] = su;
            }
            remaining.clear();
        } else {
            // SUs as rows, each takes one of the remaining channels
            let sub: Vec<Vec<T>> = (0..n)
                .map(|i| remaining.iter().map(|&j| cost[i][j]).collect())
                .collect();
            let picks = solve_rectangular(&sub);
            let mut taken = vec![false; remaining.len()];
            for (su, c) in picks.into_iter().enumerate() {
                owner[remaining[c]] = su;
                taken[c] = true;
            }
            remaining = remaining
                .into_iter()
                .zip(taken)
                .filter_map(|(j, t)| (!t).then_some(j))
                .collect();
        }
    }
    Ok(owner)
}
